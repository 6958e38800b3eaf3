//! The latent-Gaussian STAR model family: dimensions, parameters, panel data
//! and assembly of the interdependence matrices.
//!
//! Latent cells are addressed by a flat index
//! `l = (t * G + j) * N + i` (all zero-based): units innermost, then outcomes,
//! then periods. The same ordering is used for `A`, `H` and every sample.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Row-sum tolerance for a row-standardized weights matrix.
pub const ROW_SUM_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Probit-type link: `y = 1` iff `z >= 0`. The error variance is fixed at 1.
    Binary,
    /// Poisson log-normal: `y ~ Poisson(exp(z))`.
    Count,
}

/// Row-standardized `N x N` spatial weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialWeights {
    matrix: SparseMatrix,
    row_standardized: bool,
}

impl SpatialWeights {
    /// Accepts a raw adjacency or a pre-standardized matrix. A matrix whose
    /// rows already sum to one is kept verbatim; otherwise every nonzero row
    /// is rescaled to sum to one.
    pub fn new(matrix: SparseMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::dim(format!(
                "weights matrix must be square, got {}x{}",
                matrix.n_rows(),
                matrix.n_cols()
            )));
        }
        for (r, c, v) in matrix.iter() {
            if r == c && v != 0.0 {
                return Err(Error::invalid(format!(
                    "weights matrix has nonzero diagonal at unit {}",
                    r + 1
                )));
            }
            if v < 0.0 {
                return Err(Error::invalid(format!("negative weight at ({}, {})", r + 1, c + 1)));
            }
        }
        let matrix = matrix.pruned();
        if row_sums_are_one(&matrix) {
            return Ok(Self {
                matrix,
                row_standardized: true,
            });
        }
        Ok(Self::standardize(matrix))
    }

    fn standardize(matrix: SparseMatrix) -> Self {
        let n = matrix.n_rows();
        let sums: Vec<f64> = (0..n).map(|r| matrix.row(r).1.iter().sum()).collect();
        let trips = matrix
            .iter()
            .map(|(r, c, v)| (r, c, if sums[r] > 0.0 { v / sums[r] } else { v }));
        let matrix = SparseMatrix::from_triplets(n, n, trips).expect("same pattern");
        Self {
            matrix,
            row_standardized: true,
        }
    }

    pub fn n(&self) -> usize {
        self.matrix.n_rows()
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn row_standardized(&self) -> bool {
        self.row_standardized
    }

    /// Number of neighbours of each unit.
    pub fn neighbor_counts(&self) -> Vec<usize> {
        (0..self.n()).map(|r| self.matrix.row(r).0.len()).collect()
    }
}

fn row_sums_are_one(m: &SparseMatrix) -> bool {
    (0..m.n_rows()).all(|r| {
        let vals = m.row(r).1;
        vals.is_empty() || (vals.iter().sum::<f64>() - 1.0).abs() <= ROW_SUM_TOLERANCE
    })
}

/// Which dependence parameters are estimated. Parameters that are switched
/// off stay fixed at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dependence {
    pub spatial: bool,
    pub temporal: bool,
    pub outcome: bool,
}

impl Dependence {
    pub const FULL: Dependence = Dependence {
        spatial: true,
        temporal: true,
        outcome: true,
    };

    pub const NONE: Dependence = Dependence {
        spatial: false,
        temporal: false,
        outcome: false,
    };
}

impl Default for Dependence {
    fn default() -> Self {
        Self::FULL
    }
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    g: usize,
    n: usize,
    t: usize,
    weights: SpatialWeights,
    families: Vec<Family>,
    n_predictors: Vec<usize>,
    dependence: Dependence,
}

impl ModelSpec {
    pub fn new(t: usize, weights: SpatialWeights, families: Vec<Family>, n_predictors: Vec<usize>) -> Result<Self> {
        let g = families.len();
        let n = weights.n();
        if g == 0 || n == 0 || t == 0 {
            return Err(Error::invalid(format!("need G, N, T >= 1 (got G={g}, N={n}, T={t})")));
        }
        if n_predictors.len() != g {
            return Err(Error::dim(format!(
                "{} predictor counts for {g} outcomes",
                n_predictors.len()
            )));
        }
        Ok(Self {
            g,
            n,
            t,
            weights,
            families,
            n_predictors,
            dependence: Dependence::FULL,
        })
    }

    pub fn with_dependence(mut self, dependence: Dependence) -> Self {
        self.dependence = dependence;
        self
    }

    pub fn g(&self) -> usize {
        self.g
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// `N * G`, the size of one period block.
    pub fn block(&self) -> usize {
        self.n * self.g
    }

    /// `N * G * T`.
    pub fn len(&self) -> usize {
        self.n * self.g * self.t
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weights(&self) -> &SpatialWeights {
        &self.weights
    }

    pub fn families(&self) -> &[Family] {
        &self.families
    }

    pub fn family(&self, j: usize) -> Family {
        self.families[j]
    }

    pub fn n_predictors(&self) -> &[usize] {
        &self.n_predictors
    }

    pub fn dependence(&self) -> Dependence {
        self.dependence
    }

    pub fn estimates_rho(&self) -> bool {
        self.dependence.spatial
    }

    /// Temporal dependence is identified only with more than one period.
    pub fn estimates_gamma(&self) -> bool {
        self.dependence.temporal && self.t > 1
    }

    pub fn estimates_lambda(&self) -> bool {
        self.dependence.outcome && self.g > 1
    }

    /// Flat index of outcome `j`, unit `i`, period `t` (zero-based).
    #[inline]
    pub fn index(&self, j: usize, i: usize, t: usize) -> usize {
        (t * self.g + j) * self.n + i
    }

    /// Inverse of [`ModelSpec::index`]: `(j, i, t)`.
    #[inline]
    pub fn coords(&self, l: usize) -> (usize, usize, usize) {
        let i = l % self.n;
        let rest = l / self.n;
        (rest % self.g, i, rest / self.g)
    }

    /// Unordered outcome pairs `(j, k)` with `j < k`, in storage order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        pairs(self.g)
    }

    pub fn n_pairs(&self) -> usize {
        self.g * (self.g - 1) / 2
    }

    /// Storage slot of the pair `{j, k}`.
    pub fn pair_index(&self, j: usize, k: usize) -> usize {
        pair_index(self.g, j, k)
    }
}

pub(crate) fn pairs(g: usize) -> Vec<(usize, usize)> {
    (0..g).flat_map(|j| ((j + 1)..g).map(move |k| (j, k))).collect()
}

pub(crate) fn pair_index(g: usize, j: usize, k: usize) -> usize {
    let (a, b) = if j < k { (j, k) } else { (k, j) };
    debug_assert!(a != b && b < g);
    a * g - a * (a + 1) / 2 + (b - a - 1)
}

/// Full parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub rho: Vec<f64>,
    pub gamma: Vec<f64>,
    /// One entry per unordered outcome pair, ordered as [`ModelSpec::pairs`].
    pub lambda: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
}

impl Theta {
    /// No dependence, unit variances, zero coefficients.
    pub fn zeros(spec: &ModelSpec) -> Self {
        Self {
            rho: vec![0.0; spec.g],
            gamma: vec![0.0; spec.g],
            lambda: vec![0.0; spec.n_pairs()],
            sigma2: vec![1.0; spec.g],
            beta: spec.n_predictors.iter().map(|&k| vec![0.0; k]).collect(),
        }
    }

    /// `λ_{jk}` for `j != k`.
    pub fn lambda_of(&self, g: usize, j: usize, k: usize) -> f64 {
        self.lambda[pair_index(g, j, k)]
    }

    /// Sum of the dependence parameters entering outcome `j`'s stationarity
    /// condition: `Σ_k λ_{jk} + ρ_j + γ_j`.
    pub fn dependence_sum(&self, g: usize, j: usize) -> f64 {
        let lam: f64 = (0..g).filter(|&k| k != j).map(|k| self.lambda_of(g, j, k)).sum();
        lam + self.rho[j] + self.gamma[j]
    }

    /// Checks lengths, open intervals, variances and the binary-family
    /// variance restriction. Stationarity is checked separately.
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        let g = spec.g;
        if self.rho.len() != g
            || self.gamma.len() != g
            || self.sigma2.len() != g
            || self.beta.len() != g
            || self.lambda.len() != spec.n_pairs()
        {
            return Err(Error::dim("parameter vector does not match model dimensions"));
        }
        for (j, b) in self.beta.iter().enumerate() {
            if b.len() != spec.n_predictors[j] {
                return Err(Error::dim(format!(
                    "outcome {} has {} coefficients but {} predictors",
                    j + 1,
                    b.len(),
                    spec.n_predictors[j]
                )));
            }
        }
        let open = |name: &str, vals: &[f64]| -> Result<()> {
            for (idx, &v) in vals.iter().enumerate() {
                if !(v.abs() < 1.0) {
                    return Err(Error::invalid(format!("{name}[{}] = {v} outside (-1, 1)", idx + 1)));
                }
            }
            Ok(())
        };
        open("rho", &self.rho)?;
        open("gamma", &self.gamma)?;
        open("lambda", &self.lambda)?;
        for (j, &s) in self.sigma2.iter().enumerate() {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::invalid(format!("sigma2[{}] = {s} must be positive", j + 1)));
            }
            if spec.families[j] == Family::Binary && s != 1.0 {
                return Err(Error::invalid(format!(
                    "sigma2[{}] is fixed at 1 for a binary outcome",
                    j + 1
                )));
            }
        }
        if self.beta.iter().flatten().any(|b| !b.is_finite()) {
            return Err(Error::invalid("non-finite coefficient"));
        }
        Ok(())
    }
}

/// Observed outcomes, missingness flags and per-outcome predictors.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelData {
    /// Outcome per flat index; ignored where `missing` is set.
    pub y: Vec<f64>,
    pub missing: Vec<bool>,
    /// One matrix per outcome, rows indexed by `t * N + i`.
    pub x: Vec<DMatrix<f64>>,
}

impl PanelData {
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        let len = spec.len();
        if self.y.len() != len || self.missing.len() != len {
            return Err(Error::dim(format!(
                "panel has {} outcomes and {} flags for {len} cells",
                self.y.len(),
                self.missing.len()
            )));
        }
        if self.x.len() != spec.g {
            return Err(Error::dim(format!(
                "{} predictor matrices for {} outcomes",
                self.x.len(),
                spec.g
            )));
        }
        for (j, x) in self.x.iter().enumerate() {
            if x.nrows() != spec.n * spec.t || x.ncols() != spec.n_predictors[j] {
                return Err(Error::dim(format!(
                    "predictors for outcome {} are {}x{}, expected {}x{}",
                    j + 1,
                    x.nrows(),
                    x.ncols(),
                    spec.n * spec.t,
                    spec.n_predictors[j]
                )));
            }
        }
        for l in 0..len {
            if self.missing[l] {
                continue;
            }
            let (j, i, t) = spec.coords(l);
            let y = self.y[l];
            let ok = match spec.families[j] {
                Family::Binary => y == 0.0 || y == 1.0,
                Family::Count => y >= 0.0 && y.fract() == 0.0 && y.is_finite(),
            };
            if !ok {
                return Err(Error::invalid(format!(
                    "invalid {:?} outcome {y} at outcome {}, unit {}, period {}",
                    spec.families[j],
                    j + 1,
                    i + 1,
                    t + 1
                )));
            }
        }
        Ok(())
    }

    pub fn n_missing(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }
}

/// One draw of the latent Gaussian vector, flat-indexed.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample {
    pub z: Vec<f64>,
}

impl From<Vec<f64>> for LatentSample {
    fn from(z: Vec<f64>) -> Self {
        Self { z }
    }
}

fn check_weights(spec: &ModelSpec) -> Result<()> {
    if spec.weights.n() != spec.n {
        return Err(Error::dim("weights matrix does not match N"));
    }
    Ok(())
}

/// `Q*` with every structurally possible entry stored, zeros included.
pub(crate) fn qstar_structural(spec: &ModelSpec, theta: &Theta) -> Result<SparseMatrix> {
    check_weights(spec)?;
    let (n, g) = (spec.n, spec.g);
    let w = spec.weights.matrix();
    let mut trips = Vec::with_capacity(g * w.nnz() + 2 * n * spec.n_pairs());
    for j in 0..g {
        for (r, c, v) in w.iter() {
            trips.push((j * n + r, j * n + c, theta.rho[j] * v));
        }
    }
    for (p, (j, k)) in spec.pairs().into_iter().enumerate() {
        let lam = theta.lambda[p];
        for i in 0..n {
            trips.push((j * n + i, k * n + i, lam));
            trips.push((k * n + i, j * n + i, lam));
        }
    }
    SparseMatrix::from_triplets(n * g, n * g, trips)
}

/// The `NG x NG` within-period interdependence matrix: `ρ_j W` on the
/// diagonal blocks, `λ_{jk} I` off the diagonal.
pub fn assemble_qstar(spec: &ModelSpec, theta: &Theta) -> Result<SparseMatrix> {
    Ok(qstar_structural(spec, theta)?.pruned())
}

/// `I - Q*`, structural pattern.
pub(crate) fn i_minus_qstar(spec: &ModelSpec, theta: &Theta) -> Result<SparseMatrix> {
    let q = qstar_structural(spec, theta)?;
    SparseMatrix::identity(spec.block()).add_scaled(1.0, &q, -1.0)
}

/// `A = I - Q` over all periods: `Q*` on the diagonal blocks and the
/// temporal lag `L* = diag(γ_j I)` on the block subdiagonal.
pub fn assemble_a(spec: &ModelSpec, theta: &Theta) -> Result<SparseMatrix> {
    let qs = qstar_structural(spec, theta)?;
    let (n, g, t_len) = (spec.n, spec.g, spec.t);
    let blk = n * g;
    let mut trips = Vec::with_capacity(t_len * (blk + qs.nnz()) + (t_len - 1) * blk);
    for t in 0..t_len {
        let off = t * blk;
        for l in 0..blk {
            trips.push((off + l, off + l, 1.0));
        }
        for (r, c, v) in qs.iter() {
            trips.push((off + r, off + c, -v));
        }
        if t > 0 {
            for j in 0..g {
                for i in 0..n {
                    let row = off + j * n + i;
                    trips.push((row, row - blk, -theta.gamma[j]));
                }
            }
        }
    }
    Ok(SparseMatrix::from_triplets(spec.len(), spec.len(), trips)?.pruned())
}

/// Closed-form count of nonzeros in `A` when every unit has exactly `k`
/// neighbours and all dependence parameters are nonzero.
pub fn nnz_a_closed_form(g: usize, n: usize, t: usize, k: usize) -> usize {
    t * n * g + (t - 1) * n * g + t * g * n * k + t * g * (g - 1) * n
}

/// Per-cell error variances `Σ_ll`, flat-indexed.
pub fn sigma_diag(spec: &ModelSpec, theta: &Theta) -> Vec<f64> {
    (0..spec.len()).map(|l| theta.sigma2[spec.coords(l).0]).collect()
}

/// Precision of the latent field, `H = A' Σ⁻¹ A`.
pub fn assemble_precision(spec: &ModelSpec, theta: &Theta) -> Result<SparseMatrix> {
    if let Some(s) = theta.sigma2.iter().find(|&&s| !(s > 0.0)) {
        return Err(Error::invalid(format!("nonpositive variance {s}")));
    }
    let a = assemble_a(spec, theta)?;
    let d_inv: Vec<f64> = sigma_diag(spec, theta).iter().map(|s| 1.0 / s).collect();
    let trips = a.iter().map(|(r, c, v)| (r, c, v * d_inv[r]));
    let da = SparseMatrix::from_triplets(a.n_rows(), a.n_cols(), trips)?;
    let h = a.transpose().matmul(&da)?;
    // exact symmetry: average with the transpose
    let ht = h.transpose();
    h.add_scaled(0.5, &ht, 0.5)
}

/// Stacks `X_{j,t} β_j` in flat-index order.
pub fn linpred(spec: &ModelSpec, theta: &Theta, data: &PanelData) -> Result<Vec<f64>> {
    if data.x.len() != spec.g || theta.beta.len() != spec.g {
        return Err(Error::dim("predictor/coefficient outcome count mismatch"));
    }
    for j in 0..spec.g {
        if data.x[j].ncols() != theta.beta[j].len() || data.x[j].nrows() != spec.n * spec.t {
            return Err(Error::dim(format!(
                "outcome {}: {}x{} predictors with {} coefficients",
                j + 1,
                data.x[j].nrows(),
                data.x[j].ncols(),
                theta.beta[j].len()
            )));
        }
    }
    let mut out = vec![0.0; spec.len()];
    for t in 0..spec.t {
        for j in 0..spec.g {
            let x = &data.x[j];
            let b = &theta.beta[j];
            for i in 0..spec.n {
                let row = t * spec.n + i;
                out[spec.index(j, i, t)] = (0..b.len()).map(|k| x[(row, k)] * b[k]).sum();
            }
        }
    }
    Ok(out)
}

/// `ln p(y | z)` for one cell.
pub fn log_outcome_density(family: Family, y: f64, z: f64) -> Result<f64> {
    match family {
        Family::Binary => {
            if y != 0.0 && y != 1.0 {
                return Err(Error::invalid(format!("binary outcome {y} is not 0 or 1")));
            }
            let consistent = (y == 1.0 && z >= 0.0) || (y == 0.0 && z < 0.0);
            Ok(if consistent { 0.0 } else { f64::NEG_INFINITY })
        }
        Family::Count => {
            if !(y >= 0.0) || y.fract() != 0.0 {
                return Err(Error::invalid(format!(
                    "count outcome {y} is not a nonnegative integer"
                )));
            }
            Ok(y * z - z.exp() - ln_gamma(y + 1.0))
        }
    }
}

/// True iff `|Σ_k λ_{jk} + ρ_j + γ_j| < 1` for every outcome.
pub fn check_stationarity(spec: &ModelSpec, theta: &Theta) -> bool {
    (0..spec.g).all(|j| theta.dependence_sum(spec.g, j).abs() < 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simkit::make_grid_weights;

    fn spec(g: usize, side: usize, t: usize) -> ModelSpec {
        ModelSpec::new(t, make_grid_weights(side, false), vec![Family::Count; g], vec![0; g]).unwrap()
    }

    #[test]
    fn flat_index_roundtrip() {
        let s = spec(3, 3, 4);
        for l in 0..s.len() {
            let (j, i, t) = s.coords(l);
            assert_eq!(s.index(j, i, t), l);
        }
        assert_eq!(s.index(1, 0, 0), 9);
        assert_eq!(s.index(0, 0, 1), 27);
    }

    #[test]
    fn pair_indices_cover_pairs() {
        let s = spec(4, 2, 1);
        for (p, (j, k)) in s.pairs().into_iter().enumerate() {
            assert_eq!(s.pair_index(j, k), p);
            assert_eq!(s.pair_index(k, j), p);
        }
    }

    #[test]
    fn weights_are_standardized_on_ingest() {
        let adj = SparseMatrix::from_triplets(3, 3, vec![(0, 1, 1.0), (0, 2, 1.0), (1, 0, 2.0), (2, 0, 1.0)]).unwrap();
        let w = SpatialWeights::new(adj).unwrap();
        assert!(w.row_standardized());
        assert_eq!(w.matrix().get(0, 1), 0.5);
        assert_eq!(w.matrix().get(1, 0), 1.0);
    }

    #[test]
    fn weights_reject_diagonal_and_negative() {
        let m = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0)]).unwrap();
        assert!(SpatialWeights::new(m).is_err());
        let m = SparseMatrix::from_triplets(2, 2, vec![(0, 1, -1.0)]).unwrap();
        assert!(SpatialWeights::new(m).is_err());
    }

    #[test]
    fn qstar_single_outcome_is_rho_w() {
        let s = spec(1, 3, 2);
        let mut th = Theta::zeros(&s);
        th.rho[0] = 0.4;
        let q = assemble_qstar(&s, &th).unwrap();
        assert_eq!(q, s.weights().matrix().scaled(0.4));
        th.rho[0] = 0.0;
        assert_eq!(assemble_qstar(&s, &th).unwrap().nnz(), 0);
    }

    #[test]
    fn a_is_identity_at_zero() {
        for g in 1..=3 {
            for side in [2, 3, 5] {
                for t in 1..=4 {
                    let s = spec(g, side, t);
                    let a = assemble_a(&s, &Theta::zeros(&s)).unwrap();
                    assert_eq!(a, SparseMatrix::identity(s.len()));
                }
            }
        }
    }

    #[test]
    fn single_period_a_has_no_lag() {
        let s = spec(2, 3, 1);
        let mut th = Theta::zeros(&s);
        th.rho = vec![0.3, 0.2];
        th.gamma = vec![0.5, 0.5];
        th.lambda = vec![0.1];
        let a = assemble_a(&s, &th).unwrap();
        let expected = i_minus_qstar(&s, &th).unwrap().pruned();
        assert_eq!(a, expected);
    }

    #[test]
    fn log_density_examples() {
        assert!((log_outcome_density(Family::Count, 0.0, 0.0).unwrap() + 1.0).abs() < 1e-14);
        assert_eq!(log_outcome_density(Family::Binary, 1.0, 0.3).unwrap(), 0.0);
        assert_eq!(log_outcome_density(Family::Binary, 1.0, 0.0).unwrap(), 0.0);
        assert_eq!(
            log_outcome_density(Family::Binary, 0.0, 0.0).unwrap(),
            f64::NEG_INFINITY
        );
        assert!(log_outcome_density(Family::Count, -1.0, 0.0).is_err());
        // Poisson pmf at rate e^1.2, computed directly
        let rate = 1.2f64.exp();
        let pmf = (-rate).exp() * rate.powi(3) / 6.0;
        assert!((log_outcome_density(Family::Count, 3.0, 1.2).unwrap() - pmf.ln()).abs() < 1e-12);
    }

    #[test]
    fn stationarity_examples() {
        let s = spec(2, 2, 2);
        let mut th = Theta::zeros(&s);
        assert!(check_stationarity(&s, &th));
        th.rho = vec![0.25; 2];
        th.gamma = vec![0.25; 2];
        th.lambda = vec![0.25];
        assert!(check_stationarity(&s, &th));
        th.rho = vec![0.5; 2];
        th.gamma = vec![0.5; 2];
        th.lambda = vec![0.2];
        assert!(!check_stationarity(&s, &th));
    }

    #[test]
    fn binary_variance_is_fixed() {
        let s = ModelSpec::new(1, make_grid_weights(2, false), vec![Family::Binary], vec![1]).unwrap();
        let mut th = Theta::zeros(&s);
        assert!(th.validate(&s).is_ok());
        th.sigma2[0] = 2.0;
        assert!(th.validate(&s).is_err());
    }

    #[test]
    fn linpred_constant() {
        let s = ModelSpec::new(2, make_grid_weights(2, false), vec![Family::Count], vec![1]).unwrap();
        let mut th = Theta::zeros(&s);
        th.beta[0] = vec![1.5];
        let data = PanelData {
            y: vec![0.0; s.len()],
            missing: vec![false; s.len()],
            x: vec![DMatrix::from_element(8, 1, 1.0)],
        };
        assert_eq!(linpred(&s, &th, &data).unwrap(), vec![1.5; 8]);
        th.beta[0] = vec![0.0];
        assert_eq!(linpred(&s, &th, &data).unwrap(), vec![0.0; 8]);
        th.beta[0] = vec![];
        assert!(linpred(&s, &th, &data).is_err());
    }
}
