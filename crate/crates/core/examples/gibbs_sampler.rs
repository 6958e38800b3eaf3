//! Posterior draws of the latent field for a simulated count panel, and
//! how close their mean is to the field that generated the data.

use star_mcem::sampler::{gibbs_run, GibbsConfig};
use star_mcem::simkit::{simulate, DgpConfig};

fn main() -> star_mcem::Result<()> {
    let dgp = DgpConfig::count_panel(2, 5, 4, 0.2, 3);
    let spec = dgp.spec()?;
    let (data, truth) = simulate(&dgp)?;
    let cfg = GibbsConfig {
        n_samples: 500,
        ..Default::default()
    };
    let samples = gibbs_run(&spec, &dgp.theta, &data, &cfg)?;
    let len = spec.len();
    let mean: Vec<f64> = (0..len)
        .map(|l| samples.iter().map(|s| s.z[l]).sum::<f64>() / samples.len() as f64)
        .collect();
    let rmse = (mean.iter().zip(&truth.z).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / len as f64).sqrt();
    println!("{} cells, {} samples", len, samples.len());
    println!("RMSE of posterior mean against the true field: {rmse:.3}");
    for (l, m) in mean.iter().enumerate().take(5) {
        let (j, i, t) = spec.coords(l);
        println!(
            "outcome {} unit {} time {}: y = {:3}, true z = {:6.3}, posterior mean = {:6.3}",
            j + 1,
            i + 1,
            t + 1,
            data.y[l],
            truth.z[l],
            m
        );
    }
    Ok(())
}
