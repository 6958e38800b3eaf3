//! Synthetic panels on a square lattice and the simulation studies built on
//! them.

mod study;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

pub use study::*;

use crate::error::{Error, Result};
use crate::model::{
    check_stationarity, i_minus_qstar, Family, LatentSample, ModelSpec, PanelData, SpatialWeights, Theta,
};
use crate::sparse::{LuFactor, SparseMatrix};

/// Rook-contiguity weights on a `side x side` lattice, row-standardized.
/// With `torus` the lattice wraps around so every unit has four neighbours.
pub fn make_grid_weights(side: usize, torus: bool) -> SpatialWeights {
    assert!(side >= 2, "grid side must be at least 2");
    let n = side * side;
    let mut trips = Vec::with_capacity(4 * n);
    for r in 0..side {
        for c in 0..side {
            let u = r * side + c;
            let mut nb = Vec::with_capacity(4);
            if torus {
                nb.push(((r + side - 1) % side) * side + c);
                nb.push(((r + 1) % side) * side + c);
                nb.push(r * side + (c + side - 1) % side);
                nb.push(r * side + (c + 1) % side);
            } else {
                if r > 0 {
                    nb.push(u - side);
                }
                if r + 1 < side {
                    nb.push(u + side);
                }
                if c > 0 {
                    nb.push(u - 1);
                }
                if c + 1 < side {
                    nb.push(u + 1);
                }
            }
            // a 2-wide torus reaches the same neighbour twice; weights add up
            for v in nb {
                trips.push((u, v, 1.0));
            }
        }
    }
    let adj = SparseMatrix::from_triplets(n, n, trips).expect("in-bounds lattice");
    SpatialWeights::new(adj).expect("valid adjacency")
}

/// Data-generating process: lattice size, panel length, truth and seed.
/// Each outcome has a unit constant and one standard-normal covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub g: usize,
    /// Lattice side; `N = side²`.
    pub side: usize,
    pub t: usize,
    pub family: Family,
    pub theta: Theta,
    #[serde(default)]
    pub torus: bool,
    pub seed: u64,
}

impl DgpConfig {
    /// Count panel with `β_j = [2, 1]` and every dependence parameter at
    /// `dep`.
    pub fn count_panel(g: usize, side: usize, t: usize, dep: f64, seed: u64) -> Self {
        let n_pairs = g * (g - 1) / 2;
        Self {
            g,
            side,
            t,
            family: Family::Count,
            theta: Theta {
                rho: vec![dep; g],
                gamma: vec![if t > 1 { dep } else { 0.0 }; g],
                lambda: vec![dep; n_pairs],
                sigma2: vec![1.0; g],
                beta: vec![vec![2.0, 1.0]; g],
            },
            torus: false,
            seed,
        }
    }

    /// Single-period spatial probit with `β = [0, 2]`.
    pub fn spatial_probit(side: usize, rho: f64, seed: u64) -> Self {
        Self {
            g: 1,
            side,
            t: 1,
            family: Family::Binary,
            theta: Theta {
                rho: vec![rho],
                gamma: vec![0.0],
                lambda: vec![],
                sigma2: vec![1.0],
                beta: vec![vec![0.0, 2.0]],
            },
            torus: false,
            seed,
        }
    }

    pub fn n(&self) -> usize {
        self.side * self.side
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn weights(&self) -> SpatialWeights {
        make_grid_weights(self.side, self.torus)
    }

    pub fn spec(&self) -> Result<ModelSpec> {
        if self.side < 2 {
            return Err(Error::invalid("grid side must be at least 2"));
        }
        ModelSpec::new(self.t, self.weights(), vec![self.family; self.g], vec![2; self.g])
    }
}

/// Simulates a panel. Periods are solved in turn from
/// `(I - Q*) z_t = X_t β + L* z_{t-1} + ε_t`.
pub fn simulate(dgp: &DgpConfig) -> Result<(PanelData, LatentSample)> {
    let spec = dgp.spec()?;
    simulate_with(&spec, &dgp.theta, dgp.seed)
}

/// Simulates from an arbitrary specification whose outcomes each have a
/// constant and `K - 1` standard-normal covariates.
pub fn simulate_with(spec: &ModelSpec, theta: &Theta, seed: u64) -> Result<(PanelData, LatentSample)> {
    theta.validate(spec)?;
    if !check_stationarity(spec, theta) {
        return Err(Error::NonStationary("true parameters violate stationarity".into()));
    }
    let (n, g, t_len) = (spec.n(), spec.g(), spec.t());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<DMatrix<f64>> = (0..g)
        .map(|j| {
            let k = spec.n_predictors()[j];
            DMatrix::from_fn(
                n * t_len,
                k,
                |_, c| if c == 0 { 1.0 } else { rng.sample(StandardNormal) },
            )
        })
        .collect();
    let lu = LuFactor::factorize(&i_minus_qstar(spec, theta)?)?;
    let blk = spec.block();
    let mut z = vec![0.0; spec.len()];
    for t in 0..t_len {
        let mut rhs = vec![0.0; blk];
        for j in 0..g {
            let sd = theta.sigma2[j].sqrt();
            for i in 0..n {
                let row = t * n + i;
                let xb: f64 = (0..x[j].ncols()).map(|c| x[j][(row, c)] * theta.beta[j][c]).sum();
                let e: f64 = rng.sample(StandardNormal);
                let lag = if t > 0 {
                    theta.gamma[j] * z[spec.index(j, i, t - 1)]
                } else {
                    0.0
                };
                rhs[j * n + i] = xb + lag + sd * e;
            }
        }
        let zt = lu.solve(&rhs)?;
        z[t * blk..(t + 1) * blk].copy_from_slice(&zt);
    }
    let y = (0..spec.len())
        .map(|l| match spec.family(spec.coords(l).0) {
            Family::Binary => Ok(if z[l] >= 0.0 { 1.0 } else { 0.0 }),
            Family::Count => {
                let rate = z[l].exp();
                if rate <= 0.0 {
                    return Ok(0.0);
                }
                let p = Poisson::new(rate).map_err(|e| Error::numerical(format!("Poisson rate {rate}: {e}")))?;
                Ok(p.sample(&mut rng))
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let data = PanelData {
        missing: vec![false; y.len()],
        y,
        x,
    };
    Ok((data, LatentSample::from(z)))
}

/// Marks a random `fraction` of cells as missing. Returns the censored
/// panel and the censored flat indices in ascending order.
pub fn censor(data: &PanelData, fraction: f64, seed: u64) -> Result<(PanelData, Vec<usize>)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid(format!("censoring fraction {fraction} outside [0, 1]")));
    }
    let len = data.y.len();
    let count = (fraction * len as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, len, count).into_vec();
    idx.sort_unstable();
    let mut out = data.clone();
    for &l in &idx {
        out.missing[l] = true;
    }
    Ok((out, idx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_grid() {
        let w = make_grid_weights(2, false);
        assert_eq!(w.neighbor_counts(), vec![2; 4]);
        assert!(w.matrix().values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn torus_has_constant_degree() {
        let w = make_grid_weights(3, true);
        assert_eq!(w.neighbor_counts(), vec![4; 9]);
        assert!(w.matrix().values().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn row_sums_are_one() {
        let w = make_grid_weights(5, false);
        for r in 0..25 {
            let s: f64 = w.matrix().row(r).1.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn independent_dgp_is_linear_predictor_plus_noise() {
        let mut dgp = DgpConfig::count_panel(1, 3, 2, 0.0, 5);
        dgp.theta.gamma = vec![0.0];
        let (data, z) = simulate(&dgp).unwrap();
        assert_eq!(data.y.len(), 18);
        // without dependence the residuals are the N(0, 1) errors
        let xb = crate::model::linpred(&dgp.spec().unwrap(), &dgp.theta, &data).unwrap();
        let resid: Vec<f64> = z.z.iter().zip(&xb).map(|(a, b)| a - b).collect();
        assert!(resid.iter().all(|r| r.abs() < 6.0));
    }

    #[test]
    fn simulate_is_reproducible() {
        let dgp = DgpConfig::count_panel(2, 3, 3, 0.25, 9);
        assert_eq!(simulate(&dgp).unwrap(), simulate(&dgp).unwrap());
        assert_ne!(simulate(&dgp).unwrap().1, simulate(&dgp.with_seed(10)).unwrap().1);
    }

    #[test]
    fn nonstationary_truth_rejected() {
        let dgp = DgpConfig::count_panel(3, 3, 2, 0.25, 1);
        assert!(matches!(simulate(&dgp), Err(Error::NonStationary(_))));
    }

    #[test]
    fn censoring_count() {
        let dgp = DgpConfig::count_panel(1, 3, 3, 0.2, 2);
        let (data, _) = simulate(&dgp).unwrap();
        let (cens, idx) = censor(&data, 1.0 / 3.0, 4).unwrap();
        assert_eq!(idx.len(), 9);
        assert_eq!(cens.n_missing(), 9);
        assert!(censor(&data, 1.5, 0).is_err());
    }
}
