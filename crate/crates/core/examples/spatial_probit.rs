//! Single-period spatial probit: simulate, fit, and compare with the truth.
//! Binary outcomes carry little information about the latent field, so the
//! standard errors need many more samples than for counts.

use star_mcem::mcem::{fit, EmConfig};
use star_mcem::sampler::GibbsConfig;
use star_mcem::simkit::{simulate, DgpConfig};

fn main() -> star_mcem::Result<()> {
    let em = EmConfig {
        max_iter: 75,
        se_samples: 2000,
        ..Default::default()
    };
    for rho in [0.0, 0.5, 0.8] {
        let dgp = DgpConfig::spatial_probit(16, rho, 7);
        let spec = dgp.spec()?;
        let (data, _) = simulate(&dgp)?;
        let ones = data.y.iter().sum::<f64>() / data.y.len() as f64;
        let f = fit(&spec, &data, &em, &GibbsConfig::default())?;
        if let Some(e) = &f.se_error {
            println!("  no standard errors: {e}");
        }
        let se = f.se.clone().unwrap_or_default();
        println!(
            "rho = {rho}: share of ones {ones:.2}; rho_hat = {:.3} ({:.3}), beta_hat = [{:.3}, {:.3}]",
            f.theta_hat.rho[0],
            se.first().copied().unwrap_or(f64::NAN),
            f.theta_hat.beta[0][0],
            f.theta_hat.beta[0][1]
        );
    }
    Ok(())
}
