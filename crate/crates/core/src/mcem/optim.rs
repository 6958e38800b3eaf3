//! Quasi-Newton minimization with a backtracking line search.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop once the largest gradient component falls below this.
    pub grad_tol: f64,
    /// Largest move of any coordinate in one line-search trial.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-9,
            max_step: 2.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 50;

/// Minimizes `f`, which returns the value and gradient; a value of `+∞`
/// marks a point outside the domain and is rejected by the line search.
pub fn bfgs<F>(mut f: F, x0: &[f64], opts: BfgsOptions) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let (mut fx, g0) = f(x.as_slice())?;
    if !fx.is_finite() {
        return Err(Error::numerical(format!(
            "objective is not finite at the starting point {x0:?}"
        )));
    }
    if n == 0 {
        return Ok(Minimum {
            x: vec![],
            f: fx,
            iterations: 0,
        });
    }
    let mut g = DVector::from_vec(g0);
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut scaled = false;
    let mut stalls = 0;
    let mut iterations = 0;
    for _ in 0..opts.max_iter {
        if g.amax() < opts.grad_tol {
            break;
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical(format!("non-finite gradient at {:?}", x.as_slice())));
        }
        iterations += 1;
        let mut d = -(&hinv * &g);
        if g.dot(&d) >= 0.0 {
            hinv = DMatrix::identity(n, n);
            d = -g.clone();
        }
        let dmax = d.amax();
        if dmax > opts.max_step {
            d *= opts.max_step / dmax;
        }
        let slope = g.dot(&d);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            let xn = &x + &d * alpha;
            let (fxn, gn) = f(xn.as_slice())?;
            if fxn.is_finite() && fxn <= fx + ARMIJO * alpha * slope {
                accepted = Some((xn, fxn, DVector::from_vec(gn)));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fxn, gn)) = accepted else {
            break;
        };
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if !scaled {
                hinv *= sy / y.dot(&y);
                scaled = true;
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            // H+ = H - ρ(s y'H + H y s') + (ρ² y'Hy + ρ) s s'
            hinv -= (&s * hy.transpose() + &hy * s.transpose()) * rho;
            hinv += (&s * s.transpose()) * (rho * rho * yhy + rho);
        }
        let decrease = fx - fxn;
        x = xn;
        g = gn;
        fx = fxn;
        if decrease <= 1e-15 * (1.0 + fx.abs()) {
            stalls += 1;
            if stalls >= 3 {
                break;
            }
        } else {
            stalls = 0;
        }
    }
    Ok(Minimum {
        x: x.as_slice().to_vec(),
        f: fx,
        iterations,
    })
}
