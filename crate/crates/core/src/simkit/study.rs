//! Simulation studies: parameter recovery with interval coverage, Q
//! evaluation timing, the spatial probit study and a censored-prediction
//! comparison.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, Binomial, ContinuousCDF, DiscreteCDF};

use super::{censor, simulate, DgpConfig};
use crate::effects::{predict_cells, prediction_loss};
use crate::error::{Error, Result};
use crate::logdet::{LogDetEvaluator, LogDetGrid};
use crate::mcem::{fit, q_function_with, EmConfig, ParamLayout};
use crate::model::{Dependence, Family, LatentSample, ModelSpec, Theta};
use crate::sampler::GibbsConfig;

/// Two-sided standard-normal quantile for 90% intervals.
pub const Z90: f64 = 1.644_853_626_951_472_2;

/// Seed of replicate `r` derived from a base seed (SplitMix64 finalizer).
pub fn replicate_seed(base: u64, r: usize) -> u64 {
    let mut x = base.wrapping_add((r as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    /// Study cell, e.g. `G=2,N=36,T=10`.
    pub setting: String,
    pub parameter: String,
    pub truth: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    pub rmse: f64,
    /// Sample standard deviation of the estimates; 0 with one estimate.
    pub sd: f64,
    pub n_estimates: usize,
    /// Share of 90% intervals covering the truth.
    pub coverage: Option<f64>,
    /// Clopper-Pearson 95% interval for the coverage share.
    pub coverage_lo: Option<f64>,
    pub coverage_hi: Option<f64>,
    pub n_intervals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub setting: String,
    pub replicate: usize,
    pub seed: u64,
    pub estimates: Vec<f64>,
    pub se: Option<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub setting: String,
    pub replicate: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub sweep: String,
    pub g: usize,
    pub n: usize,
    pub t: usize,
    /// Seconds of the measured unit (see the report name).
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub sweep: String,
    /// Swept dimension: `N`, `T` or `G`.
    pub dimension: String,
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub replications: usize,
    /// Set when some cell had fewer than two estimates, so spreads are
    /// not informative.
    pub degenerate: bool,
    pub params: Vec<ParamSummary>,
    pub replicates: Vec<ReplicateResult>,
    pub failures: Vec<ReplicateFailure>,
    pub timing: Vec<TimingRow>,
    pub slopes: Vec<SlopeFit>,
}

#[derive(Serialize)]
struct EstimateRow<'a> {
    setting: &'a str,
    replicate: usize,
    seed: u64,
    parameter: &'a str,
    estimate: f64,
    se: Option<f64>,
}

impl ExperimentReport {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Default::default()
        }
    }

    /// Appends another report's rows.
    pub fn extend(&mut self, other: ExperimentReport) {
        self.replications = self.replications.max(other.replications);
        self.degenerate |= other.degenerate;
        self.params.extend(other.params);
        self.replicates.extend(other.replicates);
        self.failures.extend(other.failures);
        self.timing.extend(other.timing);
        self.slopes.extend(other.slopes);
    }

    pub fn param(&self, setting: &str, parameter: &str) -> Option<&ParamSummary> {
        self.params
            .iter()
            .find(|p| p.setting == setting && p.parameter == parameter)
    }

    pub fn slope(&self, sweep: &str) -> Option<&SlopeFit> {
        self.slopes.iter().find(|s| s.sweep == sweep)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::invalid(format!("report serialization: {e}")))
    }

    /// Writes `summary.json` and one CSV per non-empty table into `dir`.
    /// Returns the written paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let path = dir.join("summary.json");
        std::fs::write(&path, self.to_json()? + "\n")?;
        written.push(path);
        fn table<T: Serialize>(dir: &Path, name: &str, rows: &[T], out: &mut Vec<std::path::PathBuf>) -> Result<()> {
            if rows.is_empty() {
                return Ok(());
            }
            let path = dir.join(name);
            let mut w = csv::Writer::from_path(&path).map_err(csv_error)?;
            for r in rows {
                w.serialize(r).map_err(csv_error)?;
            }
            w.flush()?;
            out.push(path);
            Ok(())
        }
        table(dir, "params.csv", &self.params, &mut written)?;
        let estimate_rows: Vec<EstimateRow> = self
            .replicates
            .iter()
            .flat_map(|r| {
                let names = self.parameter_names(&r.setting);
                r.estimates.iter().enumerate().map(move |(i, &estimate)| EstimateRow {
                    setting: &r.setting,
                    replicate: r.replicate,
                    seed: r.seed,
                    parameter: names.get(i).copied().unwrap_or(""),
                    estimate,
                    se: r.se.as_ref().map(|s| s[i]),
                })
            })
            .collect();
        table(dir, "estimates.csv", &estimate_rows, &mut written)?;
        table(dir, "failures.csv", &self.failures, &mut written)?;
        table(dir, "timing.csv", &self.timing, &mut written)?;
        table(dir, "slopes.csv", &self.slopes, &mut written)?;
        Ok(written)
    }

    fn parameter_names(&self, setting: &str) -> Vec<&str> {
        self.params
            .iter()
            .filter(|p| p.setting == setting)
            .map(|p| p.parameter.as_str())
            .collect()
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Clopper-Pearson interval for `k` successes out of `n`.
pub fn clopper_pearson(k: usize, n: usize, level: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let a = 1.0 - level;
    let (kf, nf) = (k as f64, n as f64);
    let lo = if k == 0 {
        0.0
    } else {
        Beta::new(kf, nf - kf + 1.0).expect("valid").inverse_cdf(a / 2.0)
    };
    let hi = if k == n {
        1.0
    } else {
        Beta::new(kf + 1.0, nf - kf).expect("valid").inverse_cdf(1.0 - a / 2.0)
    };
    (lo, hi)
}

/// Range of success shares that an equal-tailed exact binomial test of
/// `p0` does not reject at level `alpha` with `n` trials.
pub fn binomial_acceptance_region(n: usize, p0: f64, alpha: f64) -> (f64, f64) {
    let b = Binomial::new(p0, n as u64).expect("valid probability");
    let n64 = n as u64;
    let lo = (0..=n64).find(|&k| b.cdf(k) > alpha / 2.0).unwrap_or(n64);
    // P(X >= k) = 1 - cdf(k - 1)
    let hi = (0..=n64)
        .rev()
        .find(|&k| {
            let upper = if k == 0 { 1.0 } else { 1.0 - b.cdf(k - 1) };
            upper > alpha / 2.0
        })
        .unwrap_or(0);
    (lo as f64 / n as f64, hi as f64 / n as f64)
}

/// Least-squares line through `(ln x, ln y)`: returns (slope, intercept).
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("a slope needs at least two aligned points"));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("log-log fit needs positive values"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / m, ly.iter().sum::<f64>() / m);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("swept dimension does not vary"));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

fn setting_label(spec: &ModelSpec) -> String {
    format!("G={},N={},T={}", spec.g(), spec.n(), spec.t())
}

fn summarize(setting: &str, names: &[String], truth: &[f64], results: &[ReplicateResult]) -> (Vec<ParamSummary>, bool) {
    let m = results.len();
    let degenerate = m < 2;
    let params = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let est: Vec<f64> = results.iter().map(|r| r.estimates[i]).collect();
            let mf = m as f64;
            let mean = if m > 0 { est.iter().sum::<f64>() / mf } else { f64::NAN };
            let rmse = if m > 0 {
                (est.iter().map(|e| (e - truth[i]).powi(2)).sum::<f64>() / mf).sqrt()
            } else {
                f64::NAN
            };
            let sd = if m > 1 {
                (est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (mf - 1.0)).sqrt()
            } else {
                0.0
            };
            let covered: Vec<bool> = results
                .iter()
                .filter_map(|r| r.se.as_ref().map(|se| (r.estimates[i] - truth[i]).abs() <= Z90 * se[i]))
                .collect();
            let n_int = covered.len();
            let (coverage, lo, hi) = if n_int > 0 {
                let k = covered.iter().filter(|&&c| c).count();
                let (lo, hi) = clopper_pearson(k, n_int, 0.95);
                (Some(k as f64 / n_int as f64), Some(lo), Some(hi))
            } else {
                (None, None, None)
            };
            ParamSummary {
                setting: setting.to_string(),
                parameter: name.clone(),
                truth: truth[i],
                mean_estimate: mean,
                bias: mean - truth[i],
                rmse,
                sd,
                n_estimates: m,
                coverage,
                coverage_lo: lo,
                coverage_hi: hi,
                n_intervals: n_int,
            }
        })
        .collect();
    (params, degenerate)
}

/// Repeats simulate-then-fit `replications` times. Replicate `r` simulates
/// with [`replicate_seed`]`(dgp.seed, r)` and samples with
/// [`replicate_seed`]`(gibbs.seed, r)`; failed replicates are recorded.
pub fn run_recovery(
    dgp: &DgpConfig,
    replications: usize,
    em: &EmConfig,
    gibbs: &GibbsConfig,
) -> Result<ExperimentReport> {
    if replications == 0 {
        return Err(Error::invalid("replications must be at least 1"));
    }
    em.validate()?;
    gibbs.validate()?;
    let spec = dgp.spec()?;
    dgp.theta.validate(&spec)?;
    let layout = ParamLayout::new(&spec);
    let truth = layout.values(&dgp.theta);
    let names = layout.names();
    let setting = setting_label(&spec);

    let outcomes: Vec<std::result::Result<ReplicateResult, ReplicateFailure>> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let seed = replicate_seed(dgp.seed, r);
            let gibbs_r = GibbsConfig {
                seed: replicate_seed(gibbs.seed, r),
                ..gibbs.clone()
            };
            let start = Instant::now();
            let run = simulate(&dgp.with_seed(seed)).and_then(|(data, _)| fit(&spec, &data, em, &gibbs_r));
            match run {
                Ok(f) => Ok(ReplicateResult {
                    setting: setting.clone(),
                    replicate: r,
                    seed,
                    estimates: layout.values(&f.theta_hat),
                    se: f.se,
                    iterations: f.iterations,
                    converged: f.converged,
                    seconds: start.elapsed().as_secs_f64(),
                }),
                Err(e) => Err(ReplicateFailure {
                    setting: setting.clone(),
                    replicate: r,
                    seed,
                    error: e.to_string(),
                }),
            }
        })
        .collect();
    let mut replicates = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => replicates.push(r),
            Err(f) => failures.push(f),
        }
    }
    let (params, degenerate) = summarize(&setting, &names, &truth, &replicates);
    Ok(ExperimentReport {
        name: "recovery".into(),
        replications,
        degenerate,
        params,
        replicates,
        failures,
        timing: vec![],
        slopes: vec![],
    })
}

/// CPU time consumed by the calling thread, in seconds.
pub fn thread_cpu_seconds() -> f64 {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid, writable timespec.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return f64::NAN;
    }
    ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
}

/// The dimension a timing sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweptDimension {
    N,
    T,
    G,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingPoint {
    pub g: usize,
    pub side: usize,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSweep {
    pub name: String,
    pub dimension: SweptDimension,
    pub points: Vec<TimingPoint>,
}

impl TimingSweep {
    fn new(name: &str, dimension: SweptDimension, points: impl IntoIterator<Item = (usize, usize, usize)>) -> Self {
        Self {
            name: name.into(),
            dimension,
            points: points
                .into_iter()
                .map(|(g, side, t)| TimingPoint { g, side, t })
                .collect(),
        }
    }
}

/// Sweeps in `N` at `G = 1`, in `T`, in `G` at `N = 64` and in `N` at `G = 4`.
pub fn default_timing_sweeps(long: bool) -> Vec<TimingSweep> {
    let n1: &[usize] = if long {
        &[16, 32, 64, 128, 256]
    } else {
        &[16, 32, 64, 128]
    };
    let n4: &[usize] = if long { &[4, 8, 16, 32, 64] } else { &[4, 8, 16, 32] };
    vec![
        TimingSweep::new("N at G=1", SweptDimension::N, n1.iter().map(|&s| (1, s, 1))),
        TimingSweep::new(
            "T at G=2,N=64",
            SweptDimension::T,
            [4, 8, 16, 32, 64].map(|t| (2, 8, t)),
        ),
        TimingSweep::new("G at N=64", SweptDimension::G, [2, 3, 4, 6, 8].map(|g| (g, 8, 1))),
        TimingSweep::new("N at G=4", SweptDimension::N, n4.iter().map(|&s| (4, s, 1))),
    ]
}

/// Q evaluations per timed block.
pub const QEVAL_CALLS: usize = 5;
/// Timed blocks per point; the median is reported.
pub const QEVAL_REPEATS: usize = 5;
const TIMING_GRID_RESOLUTION: usize = 201;

/// Truth used by the timing runs: `ρ = γ = 0.25`, `λ` shared so that each
/// dependence sum is 0.75.
pub fn timing_theta(spec: &ModelSpec) -> Theta {
    let g = spec.g();
    let mut th = Theta::zeros(spec);
    th.rho = vec![0.25; g];
    if spec.t() > 1 {
        th.gamma = vec![0.25; g];
    }
    if g > 1 {
        th.lambda = vec![0.25 / (g - 1) as f64; spec.n_pairs()];
    }
    th.beta = vec![vec![2.0, 1.0]; g];
    th
}

fn time_point(point: TimingPoint, samples: usize, seed: u64) -> Result<f64> {
    let dgp = DgpConfig::count_panel(point.g, point.side, point.t, 0.0, seed);
    let spec = dgp.spec()?;
    let theta = timing_theta(&spec);
    let (data, z) = super::simulate_with(&spec, &theta, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<LatentSample> = (0..samples)
        .map(|_| {
            LatentSample::from(
                z.z.iter()
                    .map(|v| v + 0.1 * rng.sample::<f64, _>(StandardNormal))
                    .collect::<Vec<f64>>(),
            )
        })
        .collect();
    let grid = if spec.g() == 1 {
        Some(LogDetGrid::build(spec.weights(), TIMING_GRID_RESOLUTION)?)
    } else {
        None
    };
    let evaluator = LogDetEvaluator::new(&spec, grid)?;
    // one untimed call warms caches and the symbolic factorization
    q_function_with(&spec, &theta, &draws, &data, &evaluator)?;
    let mut blocks = Vec::with_capacity(QEVAL_REPEATS);
    for _ in 0..QEVAL_REPEATS {
        let start = thread_cpu_seconds();
        for _ in 0..QEVAL_CALLS {
            std::hint::black_box(q_function_with(&spec, &theta, &draws, &data, &evaluator)?);
        }
        blocks.push(thread_cpu_seconds() - start);
    }
    blocks.sort_by(f64::total_cmp);
    Ok(blocks[blocks.len() / 2])
}

/// Thread CPU time of [`QEVAL_CALLS`] Q evaluations over `samples` latent
/// samples at each point, on a single worker thread, with a log-log slope
/// per sweep.
pub fn run_qeval_timing(sweeps: &[TimingSweep], samples: usize) -> Result<ExperimentReport> {
    if samples == 0 {
        return Err(Error::invalid("timing needs at least one sample"));
    }
    for s in sweeps {
        if s.points.len() < 2 {
            return Err(Error::invalid(format!("sweep '{}' needs at least two points", s.name)));
        }
        if let Some(p) = s.points.iter().find(|p| p.g == 0 || p.side < 2 || p.t == 0) {
            return Err(Error::invalid(format!("sweep '{}' has an invalid point {p:?}", s.name)));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let mut report = ExperimentReport::new("qeval-timing");
    for sweep in sweeps {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &p in &sweep.points {
            let secs = pool.install(|| time_point(p, samples, 7))?;
            let n = p.side * p.side;
            report.timing.push(TimingRow {
                sweep: sweep.name.clone(),
                g: p.g,
                n,
                t: p.t,
                seconds: secs,
            });
            xs.push(match sweep.dimension {
                SweptDimension::N => n,
                SweptDimension::T => p.t,
                SweptDimension::G => p.g,
            } as f64);
            ys.push(secs);
        }
        let (slope, intercept) = loglog_slope(&xs, &ys)?;
        report.slopes.push(SlopeFit {
            sweep: sweep.name.clone(),
            dimension: format!("{:?}", sweep.dimension),
            slope,
            intercept,
            points: xs.len(),
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SprobitConfig {
    /// Lattice sides of the recovery cells.
    pub sides: Vec<usize>,
    pub rhos: Vec<f64>,
    pub replications: usize,
    /// Lattice sides of the wall-time sweep.
    pub timing_sides: Vec<usize>,
    /// `ρ` of the wall-time fits.
    pub timing_rho: f64,
    pub em: EmConfig,
    pub gibbs: GibbsConfig,
    pub seed: u64,
}

impl Default for SprobitConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl SprobitConfig {
    pub fn desk() -> Self {
        Self {
            sides: vec![8],
            rhos: vec![0.0, 0.5],
            replications: 20,
            timing_sides: vec![8, 16],
            timing_rho: 0.5,
            em: EmConfig {
                max_iter: 75,
                ..EmConfig::default()
            },
            gibbs: GibbsConfig::default(),
            seed: 2024,
        }
    }

    pub fn long() -> Self {
        Self {
            sides: vec![8, 32],
            rhos: vec![0.0, 0.5, 0.8],
            replications: 50,
            timing_sides: vec![8, 16, 32],
            ..Self::desk()
        }
    }
}

/// Spatial probit recovery for each `(side, ρ)` cell plus the MCEM wall
/// time per `N` for fits of a fixed iteration count.
/// Simulated datasets averaged per point of the probit wall-time sweep.
pub const WALL_TIME_DATASETS: usize = 5;

pub fn run_sprobit_study(config: &SprobitConfig) -> Result<ExperimentReport> {
    if config.sides.is_empty() || config.rhos.is_empty() {
        return Err(Error::invalid("probit study needs at least one side and one rho"));
    }
    let mut report = ExperimentReport::new("sprobit");
    for &side in &config.sides {
        for &rho in &config.rhos {
            let dgp = DgpConfig::spatial_probit(side, rho, config.seed);
            let mut cell = run_recovery(&dgp, config.replications, &config.em, &config.gibbs)?;
            let label = format!("rho={rho},N={}", side * side);
            for p in &mut cell.params {
                p.setting = label.clone();
            }
            for r in &mut cell.replicates {
                r.setting = label.clone();
            }
            for f in &mut cell.failures {
                f.setting = label.clone();
            }
            report.extend(cell);
        }
    }
    report.name = "sprobit".into();

    let timed_em = EmConfig {
        tol: f64::MIN_POSITIVE,
        se_samples: 0,
        ..config.em.clone()
    };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &side in &config.timing_sides {
        let base = DgpConfig::spatial_probit(side, config.timing_rho, config.seed);
        let spec = base.spec()?;
        let mut total = 0.0;
        for r in 0..WALL_TIME_DATASETS {
            let (data, _) = simulate(&base.with_seed(replicate_seed(config.seed, r)))?;
            let start = Instant::now();
            fit(&spec, &data, &timed_em, &config.gibbs)?;
            total += start.elapsed().as_secs_f64();
        }
        let secs = total / WALL_TIME_DATASETS as f64;
        report.timing.push(TimingRow {
            sweep: "mcem wall time".into(),
            g: 1,
            n: spec.n(),
            t: 1,
            seconds: secs,
        });
        xs.push(spec.n() as f64);
        ys.push(secs);
    }
    if xs.len() >= 2 {
        let (slope, intercept) = loglog_slope(&xs, &ys)?;
        report.slopes.push(SlopeFit {
            sweep: "mcem wall time".into(),
            dimension: "N".into(),
            slope,
            intercept,
            points: xs.len(),
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Loss {
    pub rmse: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionComparison {
    pub censored_cells: usize,
    pub dependent: Loss,
    pub independent: Loss,
}

/// Censors a `fraction` of the simulated panel, fits the dependence model
/// and the independence model, and scores both on the censored counts.
pub fn run_prediction_study(
    dgp: &DgpConfig,
    fraction: f64,
    em: &EmConfig,
    gibbs: &GibbsConfig,
) -> Result<PredictionComparison> {
    if dgp.family != Family::Count {
        return Err(Error::Unsupported("prediction study scores count outcomes".into()));
    }
    let spec = dgp.spec()?;
    let (full, _) = simulate(dgp)?;
    let (data, cells) = censor(&full, fraction, replicate_seed(dgp.seed, usize::MAX - 1))?;
    if cells.is_empty() {
        return Err(Error::invalid("censoring fraction leaves no cell to predict"));
    }
    let truth: Vec<f64> = cells.iter().map(|&l| full.y[l]).collect();
    let score = |spec: &ModelSpec| -> Result<Loss> {
        let f = fit(spec, &data, em, gibbs)?;
        let pred: Vec<f64> = predict_cells(&f, spec, &data, &cells)?
            .iter()
            .map(|p| p.value)
            .collect();
        let (rmse, mae) = prediction_loss(&pred, &truth)?;
        Ok(Loss { rmse, mae })
    };
    let dependent = score(&spec)?;
    let independent = score(&spec.clone().with_dependence(Dependence::NONE))?;
    Ok(PredictionComparison {
        censored_cells: cells.len(),
        dependent,
        independent,
    })
}
