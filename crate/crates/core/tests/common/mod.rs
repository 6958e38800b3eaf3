#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use star_mcem::model::{assemble_qstar, Family, ModelSpec, PanelData, Theta};
use star_mcem::simkit::make_grid_weights;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Count specification on a `side x side` grid with `k` predictors each.
pub fn spec(g: usize, side: usize, t: usize, k: usize) -> ModelSpec {
    ModelSpec::new(t, make_grid_weights(side, false), vec![Family::Count; g], vec![k; g]).unwrap()
}

/// Random parameters whose row sums `|ρ| + |γ| + Σ|λ|` stay below 0.9.
pub fn random_theta<R: Rng>(spec: &ModelSpec, rng: &mut R) -> Theta {
    let g = spec.g();
    let scale = 0.9 / (g + 1) as f64;
    let mut th = Theta::zeros(spec);
    th.rho = (0..g).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
    if spec.t() > 1 {
        th.gamma = (0..g).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
    }
    th.lambda = (0..spec.n_pairs())
        .map(|_| rng.random_range(-1.0..1.0) * scale)
        .collect();
    th.sigma2 = (0..g).map(|_| rng.random_range(0.3..2.0)).collect();
    th.beta = spec
        .n_predictors()
        .iter()
        .map(|&k| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    th
}

/// Panel with a constant and standard-normal covariates and fixed counts.
pub fn random_data<R: Rng>(spec: &ModelSpec, rng: &mut R) -> PanelData {
    let rows = spec.n() * spec.t();
    PanelData {
        y: (0..spec.len()).map(|_| rng.random_range(0..6) as f64).collect(),
        missing: vec![false; spec.len()],
        x: spec
            .n_predictors()
            .iter()
            .map(|&k| DMatrix::from_fn(rows, k, |_, c| if c == 0 { 1.0 } else { rng.sample(StandardNormal) }))
            .collect(),
    }
}

/// Dense `I - Q*`.
pub fn dense_i_minus_qstar(spec: &ModelSpec, theta: &Theta) -> DMatrix<f64> {
    let q = assemble_qstar(spec, theta).unwrap().to_dense();
    DMatrix::identity(q.nrows(), q.ncols()) - q
}

/// `ln|det m|` from a dense LU.
pub fn dense_log_abs_det(m: &DMatrix<f64>) -> f64 {
    let lu = m.clone().lu();
    let u = lu.u();
    (0..u.nrows()).map(|i| u[(i, i)].abs().ln()).sum()
}
