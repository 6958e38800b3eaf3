//! Free-parameter layout and the map to an unconstrained vector: dependence
//! parameters through `tanh`, variances through softplus, coefficients
//! unchanged.

use crate::error::{Error, Result};
use crate::model::{Family, ModelSpec, Theta};

/// Unconstrained coordinates are clamped to this magnitude so `tanh` stays
/// strictly inside `(-1, 1)`.
pub const U_CLAMP: f64 = 15.0;

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn inverse_softplus(s: f64) -> f64 {
    if s > 30.0 {
        s + (-(-s).exp_m1()).ln()
    } else {
        s.exp_m1().ln()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One free scalar of [`Theta`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Rho(usize),
    Gamma(usize),
    Lambda(usize),
    Sigma2(usize),
    Beta(usize, usize),
}

impl Slot {
    pub fn get(self, theta: &Theta) -> f64 {
        match self {
            Slot::Rho(j) => theta.rho[j],
            Slot::Gamma(j) => theta.gamma[j],
            Slot::Lambda(p) => theta.lambda[p],
            Slot::Sigma2(j) => theta.sigma2[j],
            Slot::Beta(j, k) => theta.beta[j][k],
        }
    }

    pub fn set(self, theta: &mut Theta, v: f64) {
        match self {
            Slot::Rho(j) => theta.rho[j] = v,
            Slot::Gamma(j) => theta.gamma[j] = v,
            Slot::Lambda(p) => theta.lambda[p] = v,
            Slot::Sigma2(j) => theta.sigma2[j] = v,
            Slot::Beta(j, k) => theta.beta[j][k] = v,
        }
    }

    pub fn is_dependence(self) -> bool {
        matches!(self, Slot::Rho(_) | Slot::Gamma(_) | Slot::Lambda(_))
    }

    fn to_u(self, v: f64) -> f64 {
        match self {
            Slot::Rho(_) | Slot::Gamma(_) | Slot::Lambda(_) => v.atanh(),
            Slot::Sigma2(_) => inverse_softplus(v),
            Slot::Beta(..) => v,
        }
    }

    fn constrain(self, u: f64) -> f64 {
        match self {
            Slot::Rho(_) | Slot::Gamma(_) | Slot::Lambda(_) => u.clamp(-U_CLAMP, U_CLAMP).tanh(),
            Slot::Sigma2(_) => softplus(u),
            Slot::Beta(..) => u,
        }
    }

    /// `dθ/du` at `u`.
    fn derivative(self, u: f64) -> f64 {
        match self {
            Slot::Rho(_) | Slot::Gamma(_) | Slot::Lambda(_) => {
                if u.abs() >= U_CLAMP {
                    0.0
                } else {
                    let t = u.tanh();
                    1.0 - t * t
                }
            }
            Slot::Sigma2(_) => sigmoid(u),
            Slot::Beta(..) => 1.0,
        }
    }

    fn check(self, v: f64) -> Result<()> {
        let ok = match self {
            Slot::Rho(_) | Slot::Gamma(_) | Slot::Lambda(_) => v.abs() < 1.0,
            Slot::Sigma2(_) => v > 0.0 && v.is_finite(),
            Slot::Beta(..) => v.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("{self:?} = {v} is outside its domain")))
        }
    }
}

/// The parameters estimated for a model specification, in a fixed order:
/// `ρ`, `γ`, `λ`, `σ²` (count outcomes only), `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    slots: Vec<Slot>,
    g: usize,
}

impl ParamLayout {
    /// Every scalar of [`Theta`], estimated or not.
    pub fn full(spec: &ModelSpec) -> Self {
        let g = spec.g();
        let mut slots: Vec<Slot> = (0..g).map(Slot::Rho).collect();
        slots.extend((0..g).map(Slot::Gamma));
        slots.extend((0..spec.n_pairs()).map(Slot::Lambda));
        slots.extend((0..g).map(Slot::Sigma2));
        for j in 0..g {
            slots.extend((0..spec.n_predictors()[j]).map(|k| Slot::Beta(j, k)));
        }
        Self { slots, g }
    }

    pub fn new(spec: &ModelSpec) -> Self {
        let g = spec.g();
        let mut slots = Vec::new();
        if spec.estimates_rho() {
            slots.extend((0..g).map(Slot::Rho));
        }
        if spec.estimates_gamma() {
            slots.extend((0..g).map(Slot::Gamma));
        }
        if spec.estimates_lambda() {
            slots.extend((0..spec.n_pairs()).map(Slot::Lambda));
        }
        slots.extend((0..g).filter(|&j| spec.family(j) == Family::Count).map(Slot::Sigma2));
        for j in 0..g {
            slots.extend((0..spec.n_predictors()[j]).map(|k| Slot::Beta(j, k)));
        }
        Self { slots, g }
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Human-readable names with 1-based indices, e.g. `lambda[1,2]`.
    pub fn names(&self) -> Vec<String> {
        let pairs = crate::model::pairs(self.g);
        self.slots
            .iter()
            .map(|s| match *s {
                Slot::Rho(j) => format!("rho[{}]", j + 1),
                Slot::Gamma(j) => format!("gamma[{}]", j + 1),
                Slot::Lambda(p) => format!("lambda[{},{}]", pairs[p].0 + 1, pairs[p].1 + 1),
                Slot::Sigma2(j) => format!("sigma2[{}]", j + 1),
                Slot::Beta(j, k) => format!("beta[{},{}]", j + 1, k + 1),
            })
            .collect()
    }

    /// Constrained values of the free parameters.
    pub fn values(&self, theta: &Theta) -> Vec<f64> {
        self.slots.iter().map(|s| s.get(theta)).collect()
    }

    pub fn to_unconstrained(&self, theta: &Theta) -> Result<Vec<f64>> {
        self.slots
            .iter()
            .map(|&s| {
                let v = s.get(theta);
                s.check(v)?;
                Ok(s.to_u(v))
            })
            .collect()
    }

    /// Writes the free parameters encoded in `u` into a copy of `base`.
    pub fn from_unconstrained(&self, u: &[f64], base: &Theta) -> Result<Theta> {
        if u.len() != self.slots.len() {
            return Err(Error::dim(format!(
                "{} unconstrained values for {} parameters",
                u.len(),
                self.slots.len()
            )));
        }
        let mut theta = base.clone();
        for (&s, &x) in self.slots.iter().zip(u) {
            if !x.is_finite() {
                return Err(Error::numerical(format!("non-finite unconstrained value for {s:?}")));
            }
            s.set(&mut theta, s.constrain(x));
        }
        Ok(theta)
    }

    /// Diagonal Jacobian `dθ/du`.
    pub fn jacobian(&self, u: &[f64]) -> Vec<f64> {
        self.slots.iter().zip(u).map(|(&s, &x)| s.derivative(x)).collect()
    }

    /// Chain rule: gradient over `u` from a gradient stored in `Theta` shape.
    pub fn gradient_u(&self, grad_theta: &Theta, u: &[f64]) -> Vec<f64> {
        self.slots
            .iter()
            .zip(u)
            .map(|(&s, &x)| s.get(grad_theta) * s.derivative(x))
            .collect()
    }
}

/// All scalars of `theta` on the unconstrained scale, in
/// [`ParamLayout::full`] order.
pub fn transform_to_unconstrained(spec: &ModelSpec, theta: &Theta) -> Result<Vec<f64>> {
    theta.validate(spec)?;
    ParamLayout::full(spec).to_unconstrained(theta)
}

/// Inverse of [`transform_to_unconstrained`].
pub fn transform_from_unconstrained(spec: &ModelSpec, v: &[f64]) -> Result<Theta> {
    ParamLayout::full(spec).from_unconstrained(v, &Theta::zeros(spec))
}
