//! Gibbs sampling of the latent field given parameters and outcomes.
//!
//! Every coordinate update needs only row `l` of the precision
//! `H = A'Σ⁻¹A` and the shift `b = A'Σ⁻¹Xβ` (which equals `H` times the
//! marginal mean), so neither `A⁻¹` nor the mean itself is ever formed.

mod ars;
mod truncnorm;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use ars::{draw_pln_posterior, pln_mode, ArsEnvelope};
pub use truncnorm::draw_truncnorm;

use crate::error::{Error, Result};
use crate::model::{
    assemble_a, assemble_precision, linpred, sigma_diag, Family, LatentSample, ModelSpec, PanelData, Theta,
};
use crate::sparse::SparseMatrix;

pub const DEFAULT_BURN_IN: usize = 20;
pub const DEFAULT_WARM_BURN_IN: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalMoments {
    pub mu_bar: f64,
    pub var_bar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsConfig {
    pub n_samples: usize,
    /// Sweeps discarded before the first retained sample of a fresh chain.
    pub burn_in: usize,
    /// Sweeps discarded when a chain resumes from a previous state.
    pub warm_burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            n_samples: 50,
            burn_in: DEFAULT_BURN_IN,
            warm_burn_in: DEFAULT_WARM_BURN_IN,
            thin: 1,
            seed: 1,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::invalid("number of samples must be at least 1"));
        }
        if self.thin == 0 {
            return Err(Error::invalid("thinning interval must be at least 1"));
        }
        Ok(())
    }
}

/// Gaussian conditional of coordinate `l` given all others, for precision
/// `h` and marginal mean `mu`.
pub fn conditional_moments(h: &SparseMatrix, mu: &[f64], z: &[f64], l: usize) -> Result<ConditionalMoments> {
    if !h.is_square() || mu.len() != h.n_rows() || z.len() != h.n_rows() {
        return Err(Error::dim("precision, mean and state lengths differ"));
    }
    if l >= h.n_rows() {
        return Err(Error::dim(format!("coordinate {l} out of range")));
    }
    let (cols, vals) = h.row(l);
    let mut hll = 0.0;
    let mut acc = 0.0;
    for (&c, &v) in cols.iter().zip(vals) {
        if c == l {
            hll += v;
        } else {
            acc += v * (z[c] - mu[c]);
        }
    }
    if !(hll > 0.0) {
        return Err(Error::NotPositiveDefinite { column: l, pivot: hll });
    }
    Ok(ConditionalMoments {
        mu_bar: mu[l] - acc / hll,
        var_bar: 1.0 / hll,
    })
}

/// Same conditional from the shift `b = H mu`: `μ̄ = z_l - ((H z)_l - b_l) / H_ll`.
fn shifted_moments(h: &SparseMatrix, b: &[f64], z: &[f64], l: usize) -> Result<ConditionalMoments> {
    let (cols, vals) = h.row(l);
    let mut hll = 0.0;
    let mut hz = 0.0;
    for (&c, &v) in cols.iter().zip(vals) {
        if c == l {
            hll += v;
        }
        hz += v * z[c];
    }
    if !(hll > 0.0) {
        return Err(Error::NotPositiveDefinite { column: l, pivot: hll });
    }
    Ok(ConditionalMoments {
        mu_bar: z[l] - (hz - b[l]) / hll,
        var_bar: 1.0 / hll,
    })
}

/// Draw from the conditional prior of an unobserved cell.
pub fn draw_missing<R: Rng + ?Sized>(mu_bar: f64, var_bar: f64, rng: &mut R) -> Result<f64> {
    if !(var_bar > 0.0) || !var_bar.is_finite() {
        return Err(Error::invalid(format!(
            "conditional variance {var_bar} must be positive"
        )));
    }
    let e: f64 = rng.sample(StandardNormal);
    Ok(mu_bar + var_bar.sqrt() * e)
}

/// One latent coordinate update given its conditional moments.
pub fn update_cell<R: Rng + ?Sized>(
    family: Family,
    missing: bool,
    y: f64,
    m: ConditionalMoments,
    rng: &mut R,
) -> Result<f64> {
    if missing {
        return draw_missing(m.mu_bar, m.var_bar, rng);
    }
    match family {
        Family::Binary => {
            if y == 1.0 {
                draw_truncnorm(m.mu_bar, m.var_bar, 0.0, f64::INFINITY, rng)
            } else {
                draw_truncnorm(m.mu_bar, m.var_bar, f64::NEG_INFINITY, 0.0, rng)
            }
        }
        Family::Count => draw_pln_posterior(y, m.mu_bar, m.var_bar, rng),
    }
}

/// Precision and shift for one parameter value.
#[derive(Debug, Clone)]
pub struct Conditionals {
    h: SparseMatrix,
    b: Vec<f64>,
}

impl Conditionals {
    pub fn new(spec: &ModelSpec, theta: &Theta, data: &PanelData) -> Result<Self> {
        let h = assemble_precision(spec, theta)?;
        let a = assemble_a(spec, theta)?;
        let xb = linpred(spec, theta, data)?;
        let sig = sigma_diag(spec, theta);
        let scaled: Vec<f64> = xb.iter().zip(&sig).map(|(v, s)| v / s).collect();
        let b = a.transpose().matvec(&scaled)?;
        Ok(Self { h, b })
    }

    pub fn precision(&self) -> &SparseMatrix {
        &self.h
    }

    /// `A'Σ⁻¹Xβ`.
    pub fn shift(&self) -> &[f64] {
        &self.b
    }

    pub fn moments(&self, z: &[f64], l: usize) -> Result<ConditionalMoments> {
        shifted_moments(&self.h, &self.b, z, l)
    }
}

/// Chain state that persists across calls, so a later run resumes where
/// the previous one stopped.
#[derive(Debug, Clone)]
pub struct GibbsChain {
    z: Vec<f64>,
    rng: ChaCha8Rng,
    sweeps: usize,
}

impl GibbsChain {
    /// Fresh chain started from an outcome-consistent state.
    pub fn new(spec: &ModelSpec, data: &PanelData, seed: u64, stream: u64) -> Result<Self> {
        data.validate(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Ok(Self {
            z: initial_state(spec, data),
            rng,
            sweeps: 0,
        })
    }

    pub fn state(&self) -> &[f64] {
        &self.z
    }

    /// Full sweeps performed so far.
    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    /// One pass over all coordinates in flat-index order.
    pub fn sweep(&mut self, spec: &ModelSpec, data: &PanelData, cond: &Conditionals) -> Result<()> {
        for l in 0..self.z.len() {
            let wrap = |e: Error| Error::Coordinate {
                index: l,
                source: Box::new(e),
            };
            let m = cond.moments(&self.z, l).map_err(wrap)?;
            let j = spec.coords(l).0;
            self.z[l] = update_cell(spec.family(j), data.missing[l], data.y[l], m, &mut self.rng).map_err(wrap)?;
        }
        self.sweeps += 1;
        Ok(())
    }

    /// Discards `burn_in` sweeps, then keeps every `thin`-th sweep until
    /// `n_samples` are collected.
    pub fn run(
        &mut self,
        spec: &ModelSpec,
        theta: &Theta,
        data: &PanelData,
        n_samples: usize,
        burn_in: usize,
        thin: usize,
    ) -> Result<Vec<LatentSample>> {
        if n_samples == 0 || thin == 0 {
            return Err(Error::invalid("need at least one sample and thin >= 1"));
        }
        let cond = Conditionals::new(spec, theta, data)?;
        for _ in 0..burn_in {
            self.sweep(spec, data, &cond)?;
        }
        let mut out = Vec::with_capacity(n_samples);
        while out.len() < n_samples {
            for _ in 0..thin {
                self.sweep(spec, data, &cond)?;
            }
            out.push(LatentSample::from(self.z.clone()));
        }
        Ok(out)
    }

    /// Runs with the configured burn-in: the full one for a fresh chain,
    /// the short one when resuming.
    pub fn run_config(
        &mut self,
        spec: &ModelSpec,
        theta: &Theta,
        data: &PanelData,
        config: &GibbsConfig,
    ) -> Result<Vec<LatentSample>> {
        let burn = if self.sweeps == 0 {
            config.burn_in
        } else {
            config.warm_burn_in
        };
        self.run(spec, theta, data, config.n_samples, burn, config.thin)
    }
}

/// Starting state: inside each observed cell's support and near the data.
fn initial_state(spec: &ModelSpec, data: &PanelData) -> Vec<f64> {
    (0..spec.len())
        .map(|l| {
            if data.missing[l] {
                return 0.0;
            }
            match spec.family(spec.coords(l).0) {
                Family::Binary => {
                    if data.y[l] == 1.0 {
                        0.5
                    } else {
                        -0.5
                    }
                }
                Family::Count => (data.y[l] + 0.5).ln(),
            }
        })
        .collect()
}

/// `S` retained samples of `z | θ, Y` from a fresh chain.
pub fn gibbs_run(spec: &ModelSpec, theta: &Theta, data: &PanelData, config: &GibbsConfig) -> Result<Vec<LatentSample>> {
    config.validate()?;
    theta.validate(spec)?;
    let mut chain = GibbsChain::new(spec, data, config.seed, 0)?;
    chain.run_config(spec, theta, data, config)
}
