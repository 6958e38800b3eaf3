//! Adaptive rejection sampling (tangent envelope with squeeze) for the
//! Poisson log-normal conditional
//! `h(x) = y x - e^x - (x - μ)² / (2v)`.

use rand::Rng;

use crate::error::{Error, Result};

const MAX_NEWTON: usize = 30;
const MAX_ABSCISSAE: usize = 40;
const MAX_PROPOSALS: usize = 10_000;

/// Log-concave scalar target with its first two derivatives.
#[derive(Debug, Clone, Copy)]
struct PoissonLogNormal {
    y: f64,
    mu: f64,
    var: f64,
}

impl PoissonLogNormal {
    fn h(&self, x: f64) -> f64 {
        let d = x - self.mu;
        self.y * x - x.exp() - 0.5 * d * d / self.var
    }

    fn dh(&self, x: f64) -> f64 {
        self.y - x.exp() - (x - self.mu) / self.var
    }

    fn d2h(&self, x: f64) -> f64 {
        -x.exp() - 1.0 / self.var
    }
}

fn validate(y: f64, mu: f64, var: f64) -> Result<()> {
    if !(y >= 0.0) || !y.is_finite() {
        return Err(Error::invalid(format!("count {y} must be a nonnegative number")));
    }
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::invalid(format!("conditional variance {var} must be positive")));
    }
    if !mu.is_finite() {
        return Err(Error::invalid(format!("conditional mean {mu} is not finite")));
    }
    Ok(())
}

/// Mode of the Poisson log-normal conditional by safeguarded Newton.
///
/// The mode solves `x + v e^x = c` with `c = μ + v y`, i.e.
/// `x = c - W(v e^c)`; the bounds
/// `ln(1 + s) - ln(1 + ln(1 + s)) <= W(s) <= ln(1 + s)` give the bracket.
pub fn pln_mode(y: f64, mu: f64, var: f64) -> Result<f64> {
    validate(y, mu, var)?;
    let f = PoissonLogNormal { y, mu, var };
    let c = mu + var * y;
    let log_s = var.ln() + c;
    let l1p = if log_s > 30.0 {
        log_s + (-log_s).exp().ln_1p()
    } else {
        log_s.exp().ln_1p()
    };
    let (mut lo, mut hi) = (c - l1p, c - l1p + l1p.ln_1p());
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::numerical(format!(
            "cannot bracket the posterior mode (y = {y}, mean = {mu}, variance = {var})"
        )));
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..MAX_NEWTON {
        let g = f.dh(x);
        if g == 0.0 {
            break;
        }
        if g > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let step = g / f.d2h(x);
        if step.abs() <= 1e-14 * (1.0 + x.abs()) {
            x -= step;
            break;
        }
        let next = x - step;
        x = if next >= lo && next <= hi {
            next
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 1e-15 * (1.0 + x.abs()) {
            break;
        }
    }
    Ok(x)
}

/// Piecewise-linear upper hull of the log-target built from tangents at
/// sorted abscissae.
#[derive(Debug, Clone)]
pub struct ArsEnvelope {
    target: PoissonLogNormal,
    abscissae: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    /// Tangent intersections; piece `i` spans `[knots[i], knots[i + 1]]`.
    knots: Vec<f64>,
    /// Cumulative piece masses relative to the largest piece (log-scaled
    /// by `log_scale`).
    cumulative: Vec<f64>,
    log_mass: Vec<f64>,
    log_scale: f64,
}

impl ArsEnvelope {
    /// Envelope for `y x - e^x - (x - mu)² / (2 var)` with initial
    /// abscissae at the mode and two local standard deviations either side.
    pub fn new(y: f64, mu: f64, var: f64) -> Result<Self> {
        let mode = pln_mode(y, mu, var)?;
        let target = PoissonLogNormal { y, mu, var };
        let sd = (-1.0 / target.d2h(mode)).sqrt();
        let xs = [mode - 2.0 * sd, mode, mode + 2.0 * sd];
        let mut env = Self {
            target,
            abscissae: Vec::with_capacity(8),
            values: Vec::with_capacity(8),
            slopes: Vec::with_capacity(8),
            knots: Vec::new(),
            cumulative: Vec::new(),
            log_mass: Vec::new(),
            log_scale: 0.0,
        };
        for &x in &xs {
            env.abscissae.push(x);
            env.values.push(target.h(x));
            env.slopes.push(target.dh(x));
        }
        if !(env.slopes[0] > 0.0 && env.slopes[2] < 0.0) || env.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical(format!(
                "envelope does not bracket the mode (y = {y}, mean = {mu}, variance = {var})"
            )));
        }
        env.rebuild();
        Ok(env)
    }

    pub fn abscissae(&self) -> &[f64] {
        &self.abscissae
    }

    /// Log-target at each abscissa.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Tangent slopes at each abscissa, strictly decreasing.
    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    /// Second derivative of the log-target at each abscissa.
    pub fn curvatures(&self) -> Vec<f64> {
        self.abscissae.iter().map(|&x| self.target.d2h(x)).collect()
    }

    fn rebuild(&mut self) {
        let k = self.abscissae.len();
        self.knots.clear();
        self.knots.push(f64::NEG_INFINITY);
        for i in 0..k - 1 {
            let (x0, x1) = (self.abscissae[i], self.abscissae[i + 1]);
            let (h0, h1) = (self.values[i], self.values[i + 1]);
            let (s0, s1) = (self.slopes[i], self.slopes[i + 1]);
            let denom = s0 - s1;
            let z = if denom > 1e-12 * (s0.abs() + s1.abs()) {
                (h1 - h0 - x1 * s1 + x0 * s0) / denom
            } else {
                0.5 * (x0 + x1)
            };
            self.knots.push(z.clamp(x0, x1));
        }
        self.knots.push(f64::INFINITY);

        self.log_mass.clear();
        for i in 0..k {
            let lm = piece_log_mass(
                self.values[i],
                self.slopes[i],
                self.abscissae[i],
                self.knots[i],
                self.knots[i + 1],
            );
            self.log_mass.push(lm);
        }
        self.log_scale = self.log_mass.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        self.cumulative.clear();
        let mut acc = 0.0;
        for &lm in &self.log_mass {
            acc += (lm - self.log_scale).exp();
            self.cumulative.push(acc);
        }
    }

    fn upper(&self, i: usize, x: f64) -> f64 {
        self.values[i] + self.slopes[i] * (x - self.abscissae[i])
    }

    /// Chord between neighbouring abscissae; `-∞` outside their range.
    fn squeeze(&self, x: f64) -> f64 {
        let xs = &self.abscissae;
        let k = xs.len();
        if x < xs[0] || x > xs[k - 1] {
            return f64::NEG_INFINITY;
        }
        let j = xs.partition_point(|&a| a <= x).clamp(1, k - 1);
        let (x0, x1) = (xs[j - 1], xs[j]);
        let w = (x - x0) / (x1 - x0);
        (1.0 - w) * self.values[j - 1] + w * self.values[j]
    }

    fn propose<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, f64) {
        let total = *self.cumulative.last().expect("nonempty envelope");
        let u: f64 = rng.random::<f64>() * total;
        let i = self
            .cumulative
            .partition_point(|&c| c < u)
            .min(self.cumulative.len() - 1);
        let v: f64 = rng.random();
        let x = sample_piece(self.slopes[i], self.knots[i], self.knots[i + 1], v);
        (i, x)
    }

    fn insert(&mut self, x: f64, hx: f64) {
        if self.abscissae.len() >= MAX_ABSCISSAE || !hx.is_finite() {
            return;
        }
        let pos = self.abscissae.partition_point(|&a| a < x);
        if self.abscissae.get(pos) == Some(&x) {
            return;
        }
        let s = self.target.dh(x);
        let left_ok = pos == 0 || self.slopes[pos - 1] > s;
        let right_ok = pos == self.slopes.len() || s > self.slopes[pos];
        if !(left_ok && right_ok) {
            return;
        }
        debug_assert!(self.target.d2h(x) < 0.0);
        self.abscissae.insert(pos, x);
        self.values.insert(pos, hx);
        self.slopes.insert(pos, s);
        self.rebuild();
    }

    /// One exact draw from the target.
    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<f64> {
        for _ in 0..MAX_PROPOSALS {
            let (i, x) = self.propose(rng);
            if !x.is_finite() {
                continue;
            }
            let u = self.upper(i, x);
            let log_w: f64 = rng.random::<f64>().ln();
            if log_w <= self.squeeze(x) - u {
                return Ok(x);
            }
            let hx = self.target.h(x);
            if log_w <= hx - u {
                return Ok(x);
            }
            self.insert(x, hx);
        }
        Err(Error::numerical(format!(
            "adaptive rejection sampler made no acceptance in {MAX_PROPOSALS} proposals (y = {}, mean = {}, variance = {})",
            self.target.y, self.target.mu, self.target.var
        )))
    }
}

/// `ln ∫_a^b exp(h + s (x - x0)) dx`.
fn piece_log_mass(h: f64, s: f64, x0: f64, a: f64, b: f64) -> f64 {
    let w = b - a;
    if w <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if s.abs() * w < 1e-10 && w.is_finite() {
        return h + s * (0.5 * (a + b) - x0) + w.ln();
    }
    if s > 0.0 {
        h + s * (b - x0) + (-(-s * w).exp_m1()).ln() - s.ln()
    } else {
        h + s * (a - x0) + (-(s * w).exp_m1()).ln() - (-s).ln()
    }
}

/// Inverse CDF of the density `∝ exp(s x)` on `[a, b]` at `v ∈ [0, 1)`.
fn sample_piece(s: f64, a: f64, b: f64, v: f64) -> f64 {
    let w = b - a;
    if s.abs() * w < 1e-10 && w.is_finite() {
        return a + v * w;
    }
    if s > 0.0 {
        b + (v * (-s * w).exp_m1()).ln_1p() / s
    } else {
        a + (v * (s * w).exp_m1()).ln_1p() / s
    }
}

/// Exact draw from `p(z) ∝ exp(y z - e^z) N(z; mu, var)`.
pub fn draw_pln_posterior<R: Rng + ?Sized>(y: f64, mu: f64, var: f64, rng: &mut R) -> Result<f64> {
    ArsEnvelope::new(y, mu, var)?.sample(rng)
}
