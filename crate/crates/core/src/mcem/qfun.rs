//! The expected full-data log-likelihood
//! `Q = ln|A| - ½ Σ_l ln Σ_ll - (1/2S) Σ_s (A z_s - Xβ)' Σ⁻¹ (A z_s - Xβ)`.
//!
//! Besides the direct sparse evaluation there is a sufficient-statistic
//! form used inside the optimizer. Row `(j, i, t)` of `A z - Xβ` equals
//! `z_jit - D_jit φ_j` with regressors
//! `D_jit = [(W z_jt)_i, z_ji(t-1), z_kit (k ≠ j), x_it]` and coefficients
//! `φ_j = [ρ_j, γ_j, λ_jk (k ≠ j), β_j]`, so each outcome's kernel is the
//! quadratic `c_j - 2 φ_j'd_j + φ_j'E_j φ_j` in its coefficients.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::logdet::{LogDetEvaluator, LogDetGrid};
use crate::model::{
    assemble_a, check_stationarity, linpred, pair_index, sigma_diag, LatentSample, ModelSpec, PanelData, Theta,
};

/// Direct evaluation of `Q` from the assembled `A`.
pub fn q_function(
    spec: &ModelSpec,
    theta: &Theta,
    samples: &[LatentSample],
    data: &PanelData,
    grid: Option<&LogDetGrid>,
) -> Result<f64> {
    let evaluator = LogDetEvaluator::new(spec, grid.cloned())?;
    q_function_with(spec, theta, samples, data, &evaluator)
}

/// [`q_function`] with a prepared log-determinant evaluator.
pub fn q_function_with(
    spec: &ModelSpec,
    theta: &Theta,
    samples: &[LatentSample],
    data: &PanelData,
    evaluator: &LogDetEvaluator,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("Q function needs at least one sample"));
    }
    theta.validate(spec)?;
    if !check_stationarity(spec, theta) {
        return Err(Error::NonStationary(format!("{theta:?}")));
    }
    let len = spec.len();
    if let Some(s) = samples.iter().find(|s| s.z.len() != len) {
        return Err(Error::dim(format!("sample of length {} for {len} cells", s.z.len())));
    }
    let logdet = evaluator.logdet_a(theta)?;
    let sig = sigma_diag(spec, theta);
    let log_sigma: f64 = sig.iter().map(|s| s.ln()).sum();
    let a = assemble_a(spec, theta)?;
    let xb = linpred(spec, theta, data)?;
    let d_inv: Vec<f64> = sig.iter().map(|s| 1.0 / s).collect();
    let kernel: f64 = samples
        .par_iter()
        .map(|s| {
            let mut az = vec![0.0; len];
            a.matvec_into(&s.z, &mut az)?;
            Ok(az
                .iter()
                .zip(&xb)
                .zip(&d_inv)
                .map(|((r, m), w)| (r - m) * (r - m) * w)
                .sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?
        .iter()
        .sum();
    Ok(logdet - 0.5 * log_sigma - 0.5 * kernel / samples.len() as f64)
}

/// Number of regressors of outcome `j`: `2 + (G - 1) + K_j`.
pub(crate) fn n_regressors(spec: &ModelSpec, j: usize) -> usize {
    1 + spec.g() + spec.n_predictors()[j]
}

/// Coefficient vector `φ_j`.
pub(crate) fn phi(spec: &ModelSpec, theta: &Theta, j: usize) -> DVector<f64> {
    let g = spec.g();
    let mut v = Vec::with_capacity(n_regressors(spec, j));
    v.push(theta.rho[j]);
    v.push(theta.gamma[j]);
    v.extend((0..g).filter(|&k| k != j).map(|k| theta.lambda_of(g, j, k)));
    v.extend_from_slice(&theta.beta[j]);
    DVector::from_vec(v)
}

/// Cross-products of one outcome's regressors and target.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeStats {
    pub e: DMatrix<f64>,
    pub d: DVector<f64>,
    pub c: f64,
}

impl OutcomeStats {
    fn zeros(p: usize) -> Self {
        Self {
            e: DMatrix::zeros(p, p),
            d: DVector::zeros(p),
            c: 0.0,
        }
    }

    /// `c - 2 φ'd + φ'E φ`.
    pub fn kernel(&self, phi: &DVector<f64>) -> f64 {
        self.c - 2.0 * phi.dot(&self.d) + phi.dot(&(&self.e * phi))
    }

    /// `∂ kernel / ∂φ = 2 (E φ - d)`.
    pub fn kernel_gradient(&self, phi: &DVector<f64>) -> DVector<f64> {
        (&self.e * phi - &self.d) * 2.0
    }

    fn add(&mut self, other: &OutcomeStats) {
        self.e += &other.e;
        self.d += &other.d;
        self.c += other.c;
    }
}

/// Per-outcome kernel statistics summed over `n_samples` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelStats {
    pub outcomes: Vec<OutcomeStats>,
    pub n_samples: usize,
}

impl KernelStats {
    /// Statistics of a single sample.
    pub fn from_sample(spec: &ModelSpec, data: &PanelData, z: &[f64]) -> Result<Self> {
        let (n, g, t_len) = (spec.n(), spec.g(), spec.t());
        if z.len() != spec.len() {
            return Err(Error::dim(format!(
                "sample of length {} for {} cells",
                z.len(),
                spec.len()
            )));
        }
        let w = spec.weights().matrix();
        let mut outcomes: Vec<OutcomeStats> = (0..g).map(|j| OutcomeStats::zeros(n_regressors(spec, j))).collect();
        let mut wz = vec![0.0; n];
        let mut row = Vec::new();
        for t in 0..t_len {
            for j in 0..g {
                let base = spec.index(j, 0, t);
                w.matvec_into(&z[base..base + n], &mut wz)?;
                let x = &data.x[j];
                let st = &mut outcomes[j];
                let p = st.d.len();
                for i in 0..n {
                    row.clear();
                    row.push(wz[i]);
                    row.push(if t > 0 { z[spec.index(j, i, t - 1)] } else { 0.0 });
                    row.extend((0..g).filter(|&k| k != j).map(|k| z[spec.index(k, i, t)]));
                    let xr = t * n + i;
                    row.extend((0..x.ncols()).map(|c| x[(xr, c)]));
                    let target = z[base + i];
                    for a in 0..p {
                        let ra = row[a];
                        st.d[a] += ra * target;
                        for b in a..p {
                            st.e[(a, b)] += ra * row[b];
                        }
                    }
                    st.c += target * target;
                }
            }
        }
        for st in &mut outcomes {
            st.e.fill_lower_triangle_with_upper_triangle();
        }
        Ok(Self { outcomes, n_samples: 1 })
    }

    /// Statistics summed over all samples.
    pub fn from_samples(spec: &ModelSpec, data: &PanelData, samples: &[LatentSample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("kernel statistics need at least one sample"));
        }
        let parts = Self::per_sample(spec, data, samples)?;
        let mut total = parts[0].clone();
        for p in &parts[1..] {
            for (a, b) in total.outcomes.iter_mut().zip(&p.outcomes) {
                a.add(b);
            }
            total.n_samples += p.n_samples;
        }
        Ok(total)
    }

    pub fn per_sample(spec: &ModelSpec, data: &PanelData, samples: &[LatentSample]) -> Result<Vec<Self>> {
        samples
            .par_iter()
            .map(|s| Self::from_sample(spec, data, &s.z))
            .collect()
    }

    /// Average kernel part of `Q`, `-½ Σ ln Σ_ll - (1/2S) Σ_j kernel_j / σ²_j`.
    pub fn value(&self, spec: &ModelSpec, theta: &Theta) -> f64 {
        let cells = (spec.n() * spec.t()) as f64;
        let s = self.n_samples as f64;
        (0..spec.g())
            .map(|j| {
                let sig = theta.sigma2[j];
                let k = self.outcomes[j].kernel(&phi(spec, theta, j));
                -0.5 * cells * sig.ln() - 0.5 * k / (s * sig)
            })
            .sum()
    }

    /// Gradient of [`KernelStats::value`], stored in `Theta` shape.
    pub fn gradient(&self, spec: &ModelSpec, theta: &Theta) -> Theta {
        let g = spec.g();
        let cells = (spec.n() * spec.t()) as f64;
        let s = self.n_samples as f64;
        let mut grad = Theta::zeros(spec);
        grad.sigma2.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..g {
            let sig = theta.sigma2[j];
            let ph = phi(spec, theta, j);
            let st = &self.outcomes[j];
            let dk = st.kernel_gradient(&ph) * (-0.5 / (s * sig));
            grad.rho[j] += dk[0];
            grad.gamma[j] += dk[1];
            let mut slot = 2;
            for k in (0..g).filter(|&k| k != j) {
                grad.lambda[pair_index(g, j, k)] += dk[slot];
                slot += 1;
            }
            for (b, v) in grad.beta[j].iter_mut().enumerate() {
                *v += dk[slot + b];
            }
            let k = st.kernel(&ph);
            grad.sigma2[j] = -0.5 * cells / sig + 0.5 * k / (s * sig * sig);
        }
        grad
    }
}
