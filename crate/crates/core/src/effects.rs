//! Elasticities through the contemporaneous multiplier `M = (I - Q*)⁻¹`
//! and predictions for unobserved cells.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcem::FitResult;
use crate::model::{check_stationarity, i_minus_qstar, Family, ModelSpec, PanelData, Theta};
use crate::sparse::LuFactor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Elasticity {
    /// Zero-based outcome index.
    pub outcome: usize,
    /// Zero-based predictor column.
    pub predictor: usize,
    pub direct: f64,
    pub spillover: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticityReport {
    pub entries: Vec<Elasticity>,
}

impl ElasticityReport {
    pub fn get(&self, outcome: usize, predictor: usize) -> Option<&Elasticity> {
        self.entries
            .iter()
            .find(|e| e.outcome == outcome && e.predictor == predictor)
    }
}

/// Multiplier averages for each outcome: mean diagonal `M_ll` and mean
/// off-diagonal column sum `Σ_{m≠l} M_ml` over the units of the outcome.
pub fn multiplier_averages(spec: &ModelSpec, theta: &Theta) -> Result<Vec<(f64, f64)>> {
    theta.validate(spec)?;
    if !check_stationarity(spec, theta) {
        return Err(Error::NonStationary("elasticities need stationary parameters".into()));
    }
    let (n, g) = (spec.n(), spec.g());
    let lu = LuFactor::factorize(&i_minus_qstar(spec, theta)?)?;
    let col_sums = lu.solve_transpose(&vec![1.0; spec.block()])?;
    (0..g)
        .map(|j| {
            let diag = (0..n)
                .into_par_iter()
                .map(|i| {
                    let l = j * n + i;
                    let mut e = vec![0.0; spec.block()];
                    e[l] = 1.0;
                    Ok(lu.solve(&e)?[l])
                })
                .collect::<Result<Vec<f64>>>()?;
            let direct = diag.iter().sum::<f64>() / n as f64;
            let total = col_sums[j * n..(j + 1) * n].iter().sum::<f64>() / n as f64;
            Ok((direct, total - direct))
        })
        .collect()
}

/// Direct and spillover elasticities per outcome and predictor, averaged
/// over units (and therefore periods, as the multiplier is the same in
/// every period). Count outcomes only.
pub fn elasticities(spec: &ModelSpec, theta: &Theta, data: &PanelData) -> Result<ElasticityReport> {
    if let Some(j) = (0..spec.g()).find(|&j| spec.family(j) == Family::Binary) {
        return Err(Error::Unsupported(format!(
            "elasticities are defined for count outcomes only (outcome {} is binary)",
            j + 1
        )));
    }
    data.validate(spec)?;
    let averages = multiplier_averages(spec, theta)?;
    let mut entries = Vec::new();
    for (j, &(m_direct, m_spill)) in averages.iter().enumerate() {
        for (k, &b) in theta.beta[j].iter().enumerate() {
            entries.push(Elasticity {
                outcome: j,
                predictor: k,
                direct: m_direct * b,
                spillover: m_spill * b,
            });
        }
    }
    Ok(ElasticityReport { entries })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Flat cell index.
    pub index: usize,
    pub outcome: usize,
    pub unit: usize,
    pub time: usize,
    /// Expected count, or probability of a one for binary outcomes.
    pub value: f64,
}

/// Predictions for the given cells, which must all be missing.
pub fn predict_cells(fit: &FitResult, spec: &ModelSpec, data: &PanelData, cells: &[usize]) -> Result<Vec<Prediction>> {
    if fit.z_samples_final.is_empty() {
        return Err(Error::invalid("fit holds no latent samples"));
    }
    if let Some(s) = fit.z_samples_final.iter().find(|s| s.z.len() != spec.len()) {
        return Err(Error::dim(format!(
            "latent sample of length {} for {} cells",
            s.z.len(),
            spec.len()
        )));
    }
    let s = fit.z_samples_final.len() as f64;
    cells
        .iter()
        .map(|&l| {
            if l >= spec.len() {
                return Err(Error::dim(format!("cell {l} out of range")));
            }
            if !data.missing[l] {
                return Err(Error::invalid(format!("cell {l} is observed, not missing")));
            }
            let (j, i, t) = spec.coords(l);
            let draws = fit.z_samples_final.iter().map(|smp| smp.z[l]);
            let value = match spec.family(j) {
                Family::Count => draws.map(f64::exp).sum::<f64>() / s,
                Family::Binary => draws.filter(|&z| z >= 0.0).count() as f64 / s,
            };
            Ok(Prediction {
                index: l,
                outcome: j,
                unit: i,
                time: t,
                value,
            })
        })
        .collect()
}

/// Predictions for every missing cell.
pub fn predict_missing(fit: &FitResult, spec: &ModelSpec, data: &PanelData) -> Result<Vec<Prediction>> {
    let cells: Vec<usize> = (0..spec.len()).filter(|&l| data.missing[l]).collect();
    if cells.is_empty() {
        return Err(Error::invalid("data has no missing cells to predict"));
    }
    predict_cells(fit, spec, data, &cells)
}

/// Root mean squared error and mean absolute error.
pub fn prediction_loss(predictions: &[f64], truth: &[f64]) -> Result<(f64, f64)> {
    if predictions.is_empty() {
        return Err(Error::invalid("no predictions to score"));
    }
    if predictions.len() != truth.len() {
        return Err(Error::dim(format!(
            "{} predictions for {} true values",
            predictions.len(),
            truth.len()
        )));
    }
    let n = predictions.len() as f64;
    let (sq, ab) = predictions.iter().zip(truth).fold((0.0, 0.0), |(sq, ab), (p, t)| {
        (sq + (p - t) * (p - t), ab + (p - t).abs())
    });
    Ok(((sq / n).sqrt(), ab / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LatentSample;
    use crate::simkit::make_grid_weights;
    use nalgebra::DMatrix;

    fn count_spec(g: usize) -> (ModelSpec, PanelData) {
        let spec = ModelSpec::new(1, make_grid_weights(3, false), vec![Family::Count; g], vec![2; g]).unwrap();
        let data = PanelData {
            y: vec![1.0; spec.len()],
            missing: vec![false; spec.len()],
            x: vec![DMatrix::from_element(9, 2, 1.0); g],
        };
        (spec, data)
    }

    #[test]
    fn independence_gives_coefficients() {
        let (spec, data) = count_spec(2);
        let mut th = Theta::zeros(&spec);
        th.beta = vec![vec![0.5, -1.5], vec![2.0, 0.25]];
        let rep = elasticities(&spec, &th, &data).unwrap();
        for e in &rep.entries {
            assert_eq!(e.direct, th.beta[e.outcome][e.predictor]);
            assert_eq!(e.spillover, 0.0);
        }
    }

    #[test]
    fn binary_is_unsupported() {
        let spec = ModelSpec::new(1, make_grid_weights(2, false), vec![Family::Binary], vec![1]).unwrap();
        let data = PanelData {
            y: vec![1.0; 4],
            missing: vec![false; 4],
            x: vec![DMatrix::from_element(4, 1, 1.0)],
        };
        let th = Theta::zeros(&spec);
        assert!(matches!(elasticities(&spec, &th, &data), Err(Error::Unsupported(_))));
    }

    fn fit_with(samples: Vec<Vec<f64>>, spec: &ModelSpec) -> FitResult {
        FitResult {
            theta_hat: Theta::zeros(spec),
            param_names: vec![],
            se: None,
            se_error: None,
            q_trace: vec![],
            theta_trace: vec![],
            z_samples_final: samples.into_iter().map(LatentSample::from).collect(),
            converged: true,
            iterations: 1,
        }
    }

    #[test]
    fn trivial_predictions() {
        let spec = ModelSpec::new(1, make_grid_weights(2, false), vec![Family::Binary], vec![0]).unwrap();
        let mut data = PanelData {
            y: vec![0.0; 4],
            missing: vec![false; 4],
            x: vec![DMatrix::zeros(4, 0)],
        };
        data.missing[2] = true;
        let fit = fit_with(vec![vec![0.5; 4], vec![2.0; 4]], &spec);
        let p = predict_missing(&fit, &spec, &data).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].value, 1.0);
        assert!(predict_cells(&fit, &spec, &data, &[0]).is_err());

        let spec = ModelSpec::new(1, make_grid_weights(2, false), vec![Family::Count], vec![0]).unwrap();
        let fit = fit_with(vec![vec![0.0; 4]; 3], &spec);
        assert_eq!(predict_missing(&fit, &spec, &data).unwrap()[0].value, 1.0);
        data.missing[2] = false;
        assert!(predict_missing(&fit, &spec, &data).is_err());
    }

    #[test]
    fn loss_examples() {
        assert_eq!(prediction_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), (0.0, 0.0));
        assert_eq!(prediction_loss(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), (1.0, 1.0));
        assert!(prediction_loss(&[], &[]).is_err());
    }
}
