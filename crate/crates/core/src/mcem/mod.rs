//! Monte Carlo EM: Gibbs E steps, constrained M steps and Louis standard
//! errors.

mod louis;
mod optim;
mod params;
mod qfun;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

pub use louis::{louis_se, louis_se_from_samples};
pub use optim::{bfgs, BfgsOptions, Minimum};
pub use params::{
    inverse_softplus, softplus, transform_from_unconstrained, transform_to_unconstrained, ParamLayout, Slot,
};
pub use qfun::{q_function, q_function_with, KernelStats, OutcomeStats};

use crate::error::{Error, Result};
use crate::logdet::{LogDetEvaluator, LogDetGrid};
use crate::model::{check_stationarity, pair_index, Family, LatentSample, ModelSpec, PanelData, Theta};
use crate::sampler::{GibbsChain, GibbsConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Convergence threshold on the largest absolute parameter change.
    pub tol: f64,
    /// Latent samples per E step.
    pub mc_samples: usize,
    /// Latent samples for the standard errors; 0 skips them.
    pub se_samples: usize,
    /// Base finite-difference step; `None` uses `ε^(1/3)`. Steps are scaled
    /// by `1 + |u|`.
    pub fd_step: Option<f64>,
    /// Points of the `ln|I - ρW|` grid (single outcome).
    pub grid_resolution: usize,
    /// Stationarity sums are kept at most `1 - margin` in absolute value.
    pub margin: f64,
    /// Augmented-Lagrangian multiplier updates per M step.
    pub max_outer: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol: 1e-4,
            mc_samples: 50,
            se_samples: 100,
            fd_step: None,
            grid_resolution: crate::logdet::DEFAULT_GRID_RESOLUTION,
            margin: 1e-3,
            max_outer: 5,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid(format!("tolerance {} must be positive", self.tol)));
        }
        if self.mc_samples == 0 {
            return Err(Error::invalid("mc_samples must be at least 1"));
        }
        if let Some(h) = self.fd_step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::invalid(format!("fd_step {h} must be positive")));
            }
        }
        if self.grid_resolution < 2 {
            return Err(Error::invalid("grid_resolution must be at least 2"));
        }
        if !(self.margin > 0.0 && self.margin < 1.0) {
            return Err(Error::invalid(format!("margin {} outside (0, 1)", self.margin)));
        }
        Ok(())
    }

    pub(crate) fn gradient_step(&self) -> f64 {
        self.fd_step.unwrap_or(f64::EPSILON.cbrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub theta_hat: Theta,
    /// Names of the free parameters, aligned with `se`.
    pub param_names: Vec<String>,
    /// Standard errors on the parameter scale, when requested and
    /// computable.
    pub se: Option<Vec<f64>>,
    /// Why standard errors are missing, if they were requested.
    pub se_error: Option<String>,
    pub q_trace: Vec<f64>,
    pub theta_trace: Vec<Theta>,
    pub z_samples_final: Vec<LatentSample>,
    pub converged: bool,
    pub iterations: usize,
}

/// `ln|A|` and its finite-difference gradient.
pub(crate) struct LogDetTerm<'a> {
    evaluator: &'a LogDetEvaluator,
    layout: &'a ParamLayout,
}

const LOGDET_STEP: f64 = 1e-5;

impl<'a> LogDetTerm<'a> {
    pub(crate) fn new(evaluator: &'a LogDetEvaluator, layout: &'a ParamLayout) -> Self {
        Self { evaluator, layout }
    }

    pub(crate) fn value(&self, theta: &Theta) -> Result<f64> {
        self.evaluator.logdet_a(theta)
    }

    /// Central differences over the free `ρ` and `λ`, in `Theta` shape.
    pub(crate) fn gradient(&self, spec: &ModelSpec, theta: &Theta) -> Result<Theta> {
        let mut grad = Theta::zeros(spec);
        grad.sigma2.iter_mut().for_each(|v| *v = 0.0);
        for &slot in self.layout.slots() {
            if !matches!(slot, Slot::Rho(_) | Slot::Lambda(_)) {
                continue;
            }
            let v = slot.get(theta);
            let h = LOGDET_STEP.min(0.5 * (1.0 - v.abs()));
            let mut tp = theta.clone();
            slot.set(&mut tp, v + h);
            let mut tm = theta.clone();
            slot.set(&mut tm, v - h);
            let d = (self.value(&tp)? - self.value(&tm)?) / (2.0 * h);
            slot.set(&mut grad, d);
        }
        Ok(grad)
    }
}

fn add_theta(a: &mut Theta, b: &Theta) {
    let pairs = [
        (&mut a.rho, &b.rho),
        (&mut a.gamma, &b.gamma),
        (&mut a.lambda, &b.lambda),
        (&mut a.sigma2, &b.sigma2),
    ];
    for (x, y) in pairs {
        x.iter_mut().zip(y).for_each(|(p, q)| *p += q);
    }
    for (x, y) in a.beta.iter_mut().zip(&b.beta) {
        x.iter_mut().zip(y).for_each(|(p, q)| *p += q);
    }
}

/// Constraint values `|Σ_k λ_jk + ρ_j + γ_j| - 1 + margin`.
fn constraints(spec: &ModelSpec, theta: &Theta, margin: f64) -> Vec<f64> {
    (0..spec.g())
        .map(|j| theta.dependence_sum(spec.g(), j).abs() - 1.0 + margin)
        .collect()
}

/// Constrained maximization of `Q` for fixed samples.
pub(crate) struct MStep<'a> {
    spec: &'a ModelSpec,
    layout: ParamLayout,
    evaluator: &'a LogDetEvaluator,
    margin: f64,
    max_outer: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct MStepOutcome {
    pub theta: Theta,
    pub q: f64,
}

impl<'a> MStep<'a> {
    pub(crate) fn new(spec: &'a ModelSpec, evaluator: &'a LogDetEvaluator, em: &EmConfig) -> Self {
        Self {
            spec,
            layout: ParamLayout::new(spec),
            evaluator,
            margin: em.margin,
            max_outer: em.max_outer.max(1),
        }
    }

    fn q(&self, stats: &KernelStats, theta: &Theta) -> Result<f64> {
        Ok(self.evaluator.logdet_a(theta)? + stats.value(self.spec, theta))
    }

    pub(crate) fn run(&self, stats: &KernelStats, theta_init: &Theta) -> Result<MStepOutcome> {
        let spec = self.spec;
        let layout = &self.layout;
        let q_init = self.q(stats, theta_init)?;
        let scale = 1.0 / spec.len() as f64;
        let ld = LogDetTerm::new(self.evaluator, layout);
        let g = spec.g();
        let mut nu = vec![0.0; g];
        let mut mu = 10.0;
        let mut u = layout.to_unconstrained(theta_init)?;
        let mut best = (theta_init.clone(), q_init);

        for _ in 0..self.max_outer {
            let objective = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
                let theta = layout.from_unconstrained(x, theta_init)?;
                let infinite = Ok((f64::INFINITY, vec![0.0; x.len()]));
                if !check_stationarity(spec, &theta) {
                    return infinite;
                }
                let Ok(logdet) = ld.value(&theta) else {
                    return infinite;
                };
                let Ok(mut grad) = ld.gradient(spec, &theta) else {
                    return infinite;
                };
                let q = logdet + stats.value(spec, &theta);
                add_theta(&mut grad, &stats.gradient(spec, &theta));
                // augmented-Lagrangian penalty on the stationarity constraints
                let cons = constraints(spec, &theta, self.margin);
                let mut penalty = 0.0;
                let mut pgrad = Theta::zeros(spec);
                pgrad.sigma2.iter_mut().for_each(|v| *v = 0.0);
                for j in 0..g {
                    let m = (nu[j] + mu * cons[j]).max(0.0);
                    penalty += (m * m - nu[j] * nu[j]) / (2.0 * mu);
                    if m > 0.0 {
                        let sign = theta.dependence_sum(g, j).signum();
                        pgrad.rho[j] += m * sign;
                        pgrad.gamma[j] += m * sign;
                        for k in (0..g).filter(|&k| k != j) {
                            pgrad.lambda[pair_index(g, j, k)] += m * sign;
                        }
                    }
                }
                let value = -q * scale + penalty;
                let gq = layout.gradient_u(&grad, x);
                let gp = layout.gradient_u(&pgrad, x);
                let gradient = gq.iter().zip(&gp).map(|(a, b)| -a * scale + b).collect();
                if !value.is_finite() {
                    return infinite;
                }
                Ok((value, gradient))
            };
            let min = bfgs(objective, &u, BfgsOptions::default())?;
            u = min.x;
            let theta = layout.from_unconstrained(&u, theta_init)?;
            let cons = constraints(spec, &theta, self.margin);
            let feasible = check_stationarity(spec, &theta) && cons.iter().all(|&c| c <= 1e-12);
            if feasible {
                let q = self.q(stats, &theta)?;
                if q > best.1 {
                    best = (theta, q);
                }
                if cons.iter().all(|&c| c <= 0.0) && nu.iter().all(|&v| v == 0.0) {
                    break;
                }
            }
            for j in 0..g {
                nu[j] = (nu[j] + mu * cons[j]).max(0.0);
            }
            mu *= 10.0;
        }
        if !best.1.is_finite() {
            return Err(Error::numerical(format!(
                "M step produced a non-finite Q at {:?}",
                best.0
            )));
        }
        Ok(MStepOutcome {
            theta: best.0,
            q: best.1,
        })
    }
}

/// One M step: maximizes `Q(θ)` for fixed samples, starting from a feasible
/// `theta_init`. The result never has a lower `Q` than the start.
pub fn m_step(
    spec: &ModelSpec,
    samples: &[LatentSample],
    data: &PanelData,
    grid: Option<&LogDetGrid>,
    theta_init: &Theta,
) -> Result<Theta> {
    theta_init.validate(spec)?;
    if !check_stationarity(spec, theta_init) {
        return Err(Error::NonStationary(
            "M step started from a non-stationary point".into(),
        ));
    }
    let evaluator = LogDetEvaluator::new(spec, grid.cloned())?;
    let stats = KernelStats::from_samples(spec, data, samples)?;
    Ok(MStep::new(spec, &evaluator, &EmConfig::default())
        .run(&stats, theta_init)?
        .theta)
}

/// Starting values: no dependence, unit variances, and coefficients from a
/// least-squares fit of a transformed outcome (`ln(y + 0.5)` for counts, a
/// linearized probit score for binary outcomes).
pub fn initial_theta(spec: &ModelSpec, data: &PanelData) -> Result<Theta> {
    data.validate(spec)?;
    let mut theta = Theta::zeros(spec);
    let std = Normal::new(0.0, 1.0).expect("valid");
    for j in 0..spec.g() {
        let k = spec.n_predictors()[j];
        if k == 0 {
            continue;
        }
        let rows: Vec<(usize, f64)> = (0..spec.t())
            .flat_map(|t| (0..spec.n()).map(move |i| (t, i)))
            .filter_map(|(t, i)| {
                let l = spec.index(j, i, t);
                (!data.missing[l]).then_some((t * spec.n() + i, data.y[l]))
            })
            .collect();
        if rows.len() < k {
            continue;
        }
        let target: Vec<f64> = match spec.family(j) {
            Family::Count => rows.iter().map(|&(_, y)| (y + 0.5).ln()).collect(),
            Family::Binary => {
                let mean = rows.iter().map(|r| r.1).sum::<f64>() / rows.len() as f64;
                let p = mean.clamp(0.01, 0.99);
                let q = std.inverse_cdf(p);
                let dens = std.pdf(q);
                rows.iter().map(|&(_, y)| q + (y - p) / dens).collect()
            }
        };
        let x = &data.x[j];
        let design = DMatrix::from_fn(rows.len(), k, |r, c| x[(rows[r].0, c)]);
        let xtx = design.transpose() * &design;
        let xty = design.transpose() * DVector::from_vec(target);
        if let Some(ch) = xtx.cholesky() {
            theta.beta[j] = ch.solve(&xty).iter().copied().collect();
        }
    }
    Ok(theta)
}

fn max_abs_change(layout: &ParamLayout, a: &Theta, b: &Theta) -> f64 {
    layout
        .values(a)
        .iter()
        .zip(layout.values(b))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Runs MCEM from [`initial_theta`].
pub fn fit(spec: &ModelSpec, data: &PanelData, em: &EmConfig, gibbs: &GibbsConfig) -> Result<FitResult> {
    let theta0 = initial_theta(spec, data)?;
    fit_from(spec, data, em, gibbs, &theta0)
}

/// Runs MCEM from a given feasible starting point. Parameters the
/// specification does not estimate keep their starting values.
pub fn fit_from(
    spec: &ModelSpec,
    data: &PanelData,
    em: &EmConfig,
    gibbs: &GibbsConfig,
    theta0: &Theta,
) -> Result<FitResult> {
    em.validate()?;
    gibbs.validate()?;
    data.validate(spec)?;
    theta0.validate(spec)?;
    if !check_stationarity(spec, theta0) {
        return Err(Error::NonStationary("starting values violate stationarity".into()));
    }
    let grid = if spec.g() == 1 && spec.estimates_rho() {
        Some(LogDetGrid::lazy(spec.weights(), em.grid_resolution)?)
    } else {
        None
    };
    let evaluator = LogDetEvaluator::new(spec, grid)?;
    let mstep = MStep::new(spec, &evaluator, em);
    let layout = ParamLayout::new(spec);
    let mut chain = GibbsChain::new(spec, data, gibbs.seed, 0)?;
    let e_config = GibbsConfig {
        n_samples: em.mc_samples,
        ..gibbs.clone()
    };

    let mut theta = theta0.clone();
    let mut q_trace = Vec::new();
    let mut theta_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..em.max_iter {
        let wrap = |e: Error| Error::Iteration {
            iteration: it + 1,
            source: Box::new(e),
        };
        let samples = chain.run_config(spec, &theta, data, &e_config).map_err(wrap)?;
        let stats = KernelStats::from_samples(spec, data, &samples).map_err(wrap)?;
        let out = mstep.run(&stats, &theta).map_err(wrap)?;
        let change = max_abs_change(&layout, &theta, &out.theta);
        theta = out.theta;
        q_trace.push(out.q);
        theta_trace.push(theta.clone());
        iterations = it + 1;
        if change < em.tol {
            converged = true;
            break;
        }
    }

    let wrap = |e: Error| Error::Iteration {
        iteration: iterations + 1,
        source: Box::new(e),
    };
    let z_samples_final = chain.run_config(spec, &theta, data, &e_config).map_err(wrap)?;
    let (se, se_error) = if em.se_samples > 0 {
        let se_samples = chain.run(spec, &theta, data, em.se_samples, 0, gibbs.thin)?;
        match louis_se_from_samples(spec, &theta, &se_samples, data, em) {
            Ok(se) => (Some(se), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };
    Ok(FitResult {
        theta_hat: theta,
        param_names: layout.names(),
        se,
        se_error,
        q_trace,
        theta_trace,
        z_samples_final,
        converged,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simkit::{make_grid_weights, simulate, DgpConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_samples(len: usize, s: usize, seed: u64) -> Vec<LatentSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..s)
            .map(|_| LatentSample::from((0..len).map(|_| rng.random_range(-2.0..3.0)).collect::<Vec<f64>>()))
            .collect()
    }

    #[test]
    fn sufficient_statistics_match_direct_q() {
        let dgp = DgpConfig::count_panel(3, 3, 3, 0.15, 1);
        let spec = dgp.spec().unwrap();
        let (data, _) = simulate(&dgp).unwrap();
        let samples = random_samples(spec.len(), 4, 2);
        let mut th = dgp.theta.clone();
        th.rho = vec![0.2, -0.1, 0.3];
        th.lambda = vec![0.1, -0.05, 0.2];
        th.sigma2 = vec![0.7, 1.3, 2.0];
        th.beta[1] = vec![0.5, -1.0];
        let ev = LogDetEvaluator::exact(&spec).unwrap();
        let direct = q_function_with(&spec, &th, &samples, &data, &ev).unwrap();
        let stats = KernelStats::from_samples(&spec, &data, &samples).unwrap();
        let fast = ev.logdet_a(&th).unwrap() + stats.value(&spec, &th);
        assert!((direct - fast).abs() < 1e-9 * direct.abs(), "{direct} vs {fast}");
    }

    #[test]
    fn kernel_gradient_matches_differences() {
        let dgp = DgpConfig::count_panel(2, 3, 2, 0.2, 3);
        let spec = dgp.spec().unwrap();
        let (data, _) = simulate(&dgp).unwrap();
        let samples = random_samples(spec.len(), 3, 4);
        let stats = KernelStats::from_samples(&spec, &data, &samples).unwrap();
        let th = dgp.theta.clone();
        let grad = stats.gradient(&spec, &th);
        for slot in ParamLayout::new(&spec).slots().iter().copied() {
            let h = 1e-6;
            let v = slot.get(&th);
            let mut a = th.clone();
            slot.set(&mut a, v + h);
            let mut b = th.clone();
            slot.set(&mut b, v - h);
            let fd = (stats.value(&spec, &a) - stats.value(&spec, &b)) / (2.0 * h);
            let an = slot.get(&grad);
            assert!((fd - an).abs() < 1e-5 * (1.0 + an.abs()), "{slot:?}: {fd} vs {an}");
        }
    }

    #[test]
    fn variance_only_step_is_closed_form() {
        let spec = ModelSpec::new(2, make_grid_weights(3, false), vec![Family::Count], vec![0])
            .unwrap()
            .with_dependence(crate::model::Dependence::NONE);
        let data = PanelData {
            y: vec![1.0; 18],
            missing: vec![false; 18],
            x: vec![DMatrix::zeros(18, 0)],
        };
        let samples = random_samples(18, 5, 6);
        let out = m_step(&spec, &samples, &data, None, &Theta::zeros(&spec)).unwrap();
        let ss: f64 = samples.iter().flat_map(|s| s.z.iter()).map(|z| z * z).sum();
        let expected = ss / (18.0 * 5.0);
        assert!(
            (out.sigma2[0] - expected).abs() < 1e-6,
            "{} vs {expected}",
            out.sigma2[0]
        );
    }

    #[test]
    fn m_step_does_not_decrease_q() {
        let dgp = DgpConfig::count_panel(2, 3, 3, 0.25, 8);
        let spec = dgp.spec().unwrap();
        let (data, z) = simulate(&dgp).unwrap();
        let samples = vec![z];
        let init = Theta::zeros(&spec);
        let out = m_step(&spec, &samples, &data, None, &init).unwrap();
        let q0 = q_function(&spec, &init, &samples, &data, None).unwrap();
        let q1 = q_function(&spec, &out, &samples, &data, None).unwrap();
        assert!(q1 >= q0 - 1e-10, "{q1} < {q0}");
        assert!(check_stationarity(&spec, &out));
    }

    #[test]
    fn single_iteration_with_infinite_tolerance() {
        let dgp = DgpConfig::count_panel(1, 3, 2, 0.2, 4);
        let spec = dgp.spec().unwrap();
        let (data, _) = simulate(&dgp).unwrap();
        let em = EmConfig {
            tol: f64::INFINITY,
            mc_samples: 3,
            se_samples: 0,
            ..Default::default()
        };
        let gibbs = GibbsConfig {
            burn_in: 2,
            ..Default::default()
        };
        let a = fit(&spec, &data, &em, &gibbs).unwrap();
        assert_eq!(a.iterations, 1);
        assert!(a.converged);
        assert_eq!(a.q_trace.len(), 1);
        let b = fit(&spec, &data, &em, &gibbs).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn initial_coefficients_from_log_counts() {
        let dgp = DgpConfig::count_panel(1, 4, 3, 0.0, 12);
        let spec = dgp.spec().unwrap();
        let (data, _) = simulate(&dgp).unwrap();
        let th = initial_theta(&spec, &data).unwrap();
        assert!(
            (th.beta[0][0] - 2.0).abs() < 0.5 && (th.beta[0][1] - 1.0).abs() < 0.3,
            "{:?}",
            th.beta
        );
        assert_eq!(th.rho, vec![0.0]);
    }
}
