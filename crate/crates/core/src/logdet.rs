//! Log-determinant of `A = I - Q`.
//!
//! `A` is block lower-triangular over periods with `I - Q*` on every
//! diagonal block, so `ln|A| = T ln|I - Q*|` and only an `NG x NG`
//! determinant is ever computed. For a single outcome, `ln|I - ρW|` is read
//! from a grid precomputed by sparse LU; for several outcomes it is obtained
//! as `½ ln|(I - Q*)'(I - Q*)|` from a sparse Cholesky factor whose symbolic
//! analysis is reused across parameter values.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::model::{i_minus_qstar, ModelSpec, SpatialWeights, Theta};
use crate::sparse::{minimum_degree, CholeskySymbolic, LuFactor, SparseMatrix};

pub const DEFAULT_GRID_RESOLUTION: usize = 2000;
pub const GRID_BOUND: f64 = 0.999;

/// `ln|I - ρW|` on an equally spaced grid over `[-0.999, 0.999]`.
///
/// Nodes are either all computed up front ([`LogDetGrid::build`]) or on
/// first use ([`LogDetGrid::lazy`]); a node's value does not depend on when
/// it was computed. The fill-reducing ordering is shared by every node.
#[derive(Debug, Clone)]
pub struct LogDetGrid {
    rho_values: Vec<f64>,
    nodes: Vec<OnceLock<f64>>,
    weights: SparseMatrix,
    ordering: Vec<usize>,
}

impl LogDetGrid {
    /// Grid with every node computed.
    pub fn build(w: &SpatialWeights, resolution: usize) -> Result<Self> {
        let grid = Self::lazy(w, resolution)?;
        for k in 0..resolution {
            grid.node(k)?;
        }
        Ok(grid)
    }

    /// Grid whose nodes are computed when an interpolation first needs them.
    pub fn lazy(w: &SpatialWeights, resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::invalid("grid resolution must be at least 2"));
        }
        let step = 2.0 * GRID_BOUND / (resolution - 1) as f64;
        let rho_values: Vec<f64> = (0..resolution).map(|k| -GRID_BOUND + k as f64 * step).collect();
        // the pattern of I - ρW is the same for every ρ != 0
        let probe = SparseMatrix::identity(w.n()).add_scaled(1.0, w.matrix(), -0.5)?;
        Ok(Self {
            rho_values,
            nodes: vec![OnceLock::new(); resolution],
            weights: w.matrix().clone(),
            ordering: minimum_degree(&probe),
        })
    }

    pub fn rho_values(&self) -> &[f64] {
        &self.rho_values
    }

    /// Node values computed so far (`None` for nodes not yet needed).
    pub fn logdets(&self) -> Vec<Option<f64>> {
        self.nodes.iter().map(|c| c.get().copied()).collect()
    }

    pub fn n(&self) -> usize {
        self.weights.n_rows()
    }

    pub fn resolution(&self) -> usize {
        self.rho_values.len()
    }

    fn node(&self, k: usize) -> Result<f64> {
        if let Some(v) = self.nodes[k].get() {
            return Ok(*v);
        }
        let rho = self.rho_values[k];
        let m = SparseMatrix::identity(self.n()).add_scaled(1.0, &self.weights, -rho)?;
        let v = LuFactor::factorize_ordered(&m, self.ordering.clone())
            .map(|lu| lu.log_abs_det())
            .map_err(|e| Error::numerical(format!("grid point rho = {rho}: {e}")))?;
        Ok(*self.nodes[k].get_or_init(|| v))
    }

    /// Cubic (four-point Lagrange) interpolation; `None` outside the grid.
    pub fn interpolate(&self, rho: f64) -> Result<Option<f64>> {
        let m = self.rho_values.len();
        let lo = self.rho_values[0];
        let hi = self.rho_values[m - 1];
        if !(rho >= lo && rho <= hi) {
            return Ok(None);
        }
        let step = (hi - lo) / (m - 1) as f64;
        let pos = ((rho - lo) / step).floor() as usize;
        let pos = pos.min(m - 2);
        let width = m.min(4);
        // window of `width` nodes around [pos, pos + 1], clamped to the grid
        let start = (pos as isize - (width as isize / 2 - 1)).clamp(0, (m - width) as isize) as usize;
        let xs = &self.rho_values[start..start + width];
        let mut acc = 0.0;
        for a in 0..width {
            let mut basis = 1.0;
            for b in 0..width {
                if a != b {
                    basis *= (rho - xs[b]) / (xs[a] - xs[b]);
                }
            }
            acc += basis * self.node(start + a)?;
        }
        Ok(Some(acc))
    }
}

/// Grid of `ln|I - ρW|` with `resolution` points.
pub fn build_grid(w: &SpatialWeights, resolution: usize) -> Result<LogDetGrid> {
    LogDetGrid::build(w, resolution)
}

/// `ln|A|` for the given parameters. For `G = 1` the grid is used when
/// supplied; otherwise the determinant is factored directly.
pub fn logdet_a(spec: &ModelSpec, theta: &Theta, grid: Option<&LogDetGrid>) -> Result<f64> {
    LogDetEvaluator::new(spec, grid.cloned())?.logdet_a(theta)
}

enum Strategy {
    Grid(LogDetGrid),
    DirectLu,
    Symmetrized(Box<CholeskySymbolic>),
}

/// Reusable `ln|A|` evaluator for one model specification.
pub struct LogDetEvaluator {
    spec: ModelSpec,
    strategy: Strategy,
}

impl LogDetEvaluator {
    pub fn new(spec: &ModelSpec, grid: Option<LogDetGrid>) -> Result<Self> {
        let strategy = if spec.g() == 1 {
            match grid {
                Some(grid) => {
                    if grid.n() != spec.n() {
                        return Err(Error::dim("log-determinant grid built for another N"));
                    }
                    Strategy::Grid(grid)
                }
                None => Strategy::DirectLu,
            }
        } else {
            // any nonzero placeholder values give the full structural pattern
            let mut probe = Theta::zeros(spec);
            probe.rho.iter_mut().for_each(|r| *r = 0.1);
            probe.lambda.iter_mut().for_each(|l| *l = 0.1);
            let b = symmetrized(spec, &probe)?;
            Strategy::Symmetrized(Box::new(CholeskySymbolic::analyze(&b)?))
        };
        Ok(Self {
            spec: spec.clone(),
            strategy,
        })
    }

    /// Evaluator that never uses a grid (exact factorization for `G = 1`).
    pub fn exact(spec: &ModelSpec) -> Result<Self> {
        Self::new(spec, None)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// `ln|I - Q*|`.
    pub fn logdet_block(&self, theta: &Theta) -> Result<f64> {
        let spec = &self.spec;
        match &self.strategy {
            Strategy::Grid(grid) => match grid.interpolate(theta.rho[0])? {
                Some(v) => Ok(v),
                None => direct_single(spec, theta.rho[0]),
            },
            Strategy::DirectLu => direct_single(spec, theta.rho[0]),
            Strategy::Symmetrized(symbolic) => {
                let b = symmetrized(spec, theta)?;
                let factor = symbolic.factorize(&b).map_err(|e| match e {
                    Error::NotPositiveDefinite { .. } => {
                        Error::Singular(format!("I - Q* is numerically singular ({e})"))
                    }
                    other => other,
                })?;
                if !diagonally_dominant(spec, theta) {
                    let lu = LuFactor::factorize(&i_minus_qstar(spec, theta)?)?;
                    if lu.det_sign() < 0.0 {
                        return Err(Error::NonStationary(
                            "det(I - Q*) changed sign inside the parameter region".into(),
                        ));
                    }
                }
                Ok(0.5 * factor.logdet())
            }
        }
    }

    /// `ln|A| = T ln|I - Q*|`.
    pub fn logdet_a(&self, theta: &Theta) -> Result<f64> {
        Ok(self.spec.t() as f64 * self.logdet_block(theta)?)
    }
}

fn direct_single(spec: &ModelSpec, rho: f64) -> Result<f64> {
    let m = SparseMatrix::identity(spec.n()).add_scaled(1.0, spec.weights().matrix(), -rho)?;
    Ok(LuFactor::factorize(&m)?.log_abs_det())
}

/// `(I - Q*)'(I - Q*)` on the structural pattern.
pub(crate) fn symmetrized(spec: &ModelSpec, theta: &Theta) -> Result<SparseMatrix> {
    let m = i_minus_qstar(spec, theta)?;
    m.transpose().matmul(&m)
}

/// Strict row diagonal dominance of `I - Q*`, which guarantees a positive
/// determinant.
fn diagonally_dominant(spec: &ModelSpec, theta: &Theta) -> bool {
    let g = spec.g();
    (0..g).all(|j| {
        let off: f64 = (0..g).filter(|&k| k != j).map(|k| theta.lambda_of(g, j, k).abs()).sum();
        theta.rho[j].abs() + off < 1.0
    })
}
