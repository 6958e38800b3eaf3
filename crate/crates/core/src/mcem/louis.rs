//! Observed information by the missing-information identity
//! `I = -E[∇²ℓ] - Var[∇ℓ]`, with `ℓ` the full-data log-likelihood and the
//! moments taken over posterior samples of the latent field.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{EmConfig, KernelStats, LogDetTerm, ParamLayout};
use crate::error::{Error, Result};
use crate::logdet::LogDetEvaluator;
use crate::model::{check_stationarity, LatentSample, ModelSpec, PanelData, Theta};
use crate::sampler::{GibbsChain, GibbsConfig};

/// Draws `se_samples` latent samples at `theta_hat` from a fresh chain and
/// returns standard errors for the free parameters, in
/// [`ParamLayout::new`] order.
pub fn louis_se(
    spec: &ModelSpec,
    theta_hat: &Theta,
    data: &PanelData,
    em: &EmConfig,
    gibbs: &GibbsConfig,
) -> Result<Vec<f64>> {
    em.validate()?;
    gibbs.validate()?;
    if em.se_samples < 2 {
        return Err(Error::invalid("standard errors need at least two samples"));
    }
    let mut chain = GibbsChain::new(spec, data, gibbs.seed, 1)?;
    let samples = chain.run(spec, theta_hat, data, em.se_samples, gibbs.burn_in, gibbs.thin)?;
    louis_se_from_samples(spec, theta_hat, &samples, data, em)
}

/// Standard errors from given posterior samples.
pub fn louis_se_from_samples(
    spec: &ModelSpec,
    theta_hat: &Theta,
    samples: &[LatentSample],
    data: &PanelData,
    em: &EmConfig,
) -> Result<Vec<f64>> {
    theta_hat.validate(spec)?;
    if !check_stationarity(spec, theta_hat) {
        return Err(Error::NonStationary(
            "standard errors requested at a non-stationary point".into(),
        ));
    }
    if samples.len() < 2 {
        return Err(Error::invalid("standard errors need at least two samples"));
    }
    let layout = ParamLayout::new(spec);
    let p = layout.len();
    let u = layout.to_unconstrained(theta_hat)?;
    let base = em.gradient_step();
    let grad_steps: Vec<f64> = u.iter().map(|x| base * (1.0 + x.abs())).collect();
    let hess_steps: Vec<f64> = u.iter().map(|x| f64::EPSILON.powf(0.25) * (1.0 + x.abs())).collect();

    // the log-determinant does not depend on the sample: differentiate once
    let evaluator = LogDetEvaluator::exact(spec)?;
    let ld = LogDetTerm::new(&evaluator, &layout);
    let ld_at = |x: &[f64]| -> Result<f64> { ld.value(&layout.from_unconstrained(x, theta_hat)?) };
    let relevant: Vec<usize> = (0..p)
        .filter(|&i| matches!(layout.slots()[i], super::Slot::Rho(_) | super::Slot::Lambda(_)))
        .collect();
    let f0 = ld_at(&u)?;
    let mut ld_grad = DVector::zeros(p);
    let mut ld_hess = DMatrix::zeros(p, p);
    for &i in &relevant {
        let h = grad_steps[i];
        let mut up = u.clone();
        up[i] += h;
        let mut dn = u.clone();
        dn[i] -= h;
        ld_grad[i] = (ld_at(&up)? - ld_at(&dn)?) / (2.0 * h);
        let h = hess_steps[i];
        let mut up = u.clone();
        up[i] += h;
        let mut dn = u.clone();
        dn[i] -= h;
        ld_hess[(i, i)] = (ld_at(&up)? - 2.0 * f0 + ld_at(&dn)?) / (h * h);
    }
    for (a, &i) in relevant.iter().enumerate() {
        for &j in &relevant[a + 1..] {
            let (hi, hj) = (hess_steps[i], hess_steps[j]);
            let at = |si: f64, sj: f64| -> Result<f64> {
                let mut x = u.clone();
                x[i] += si * hi;
                x[j] += sj * hj;
                ld_at(&x)
            };
            let v = (at(1.0, 1.0)? - at(1.0, -1.0)? - at(-1.0, 1.0)? + at(-1.0, -1.0)?) / (4.0 * hi * hj);
            ld_hess[(i, j)] = v;
            ld_hess[(j, i)] = v;
        }
    }

    // per-sample kernel gradients (analytic) and Hessians (differenced gradients)
    let per_sample = KernelStats::per_sample(spec, data, samples)?;
    let kernel_grad = |stats: &KernelStats, x: &[f64]| -> Result<DVector<f64>> {
        let theta = layout.from_unconstrained(x, theta_hat)?;
        Ok(DVector::from_vec(layout.gradient_u(&stats.gradient(spec, &theta), x)))
    };
    let moments: Vec<(DVector<f64>, DMatrix<f64>)> = per_sample
        .par_iter()
        .map(|stats| {
            let g = kernel_grad(stats, &u)?;
            let mut h = DMatrix::zeros(p, p);
            for i in 0..p {
                let step = grad_steps[i];
                let mut up = u.clone();
                up[i] += step;
                let mut dn = u.clone();
                dn[i] -= step;
                let col = (kernel_grad(stats, &up)? - kernel_grad(stats, &dn)?) / (2.0 * step);
                h.set_column(i, &col);
            }
            let h = (&h + h.transpose()) * 0.5;
            Ok((g + &ld_grad, h + &ld_hess))
        })
        .collect::<Result<Vec<_>>>()?;

    let s = moments.len() as f64;
    let mean_g = moments.iter().fold(DVector::zeros(p), |acc, (g, _)| acc + g) / s;
    let mean_h = moments.iter().fold(DMatrix::zeros(p, p), |acc, (_, h)| acc + h) / s;
    let cov_g = moments.iter().fold(DMatrix::zeros(p, p), |acc, (g, _)| {
        let d = g - &mean_g;
        acc + &d * d.transpose()
    }) / s;
    let info = -mean_h - cov_g;
    let info = (&info + info.transpose()) * 0.5;
    let chol = info.clone().cholesky().ok_or_else(|| {
        Error::numerical(format!(
            "observed information is not positive definite with {} samples; increase se_samples",
            samples.len()
        ))
    })?;
    let cov = chol.inverse();
    let jac = layout.jacobian(&u);
    Ok((0..p).map(|i| jac[i].abs() * cov[(i, i)].sqrt()).collect())
}
