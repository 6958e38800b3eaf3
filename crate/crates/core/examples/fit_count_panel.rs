//! Fits a two-outcome spatio-temporal count panel and prints estimates
//! with standard errors next to the truth.

use std::time::Instant;

use star_mcem::mcem::{fit, EmConfig, ParamLayout};
use star_mcem::sampler::GibbsConfig;
use star_mcem::simkit::{simulate, DgpConfig};

fn main() -> star_mcem::Result<()> {
    let dgp = DgpConfig::count_panel(2, 6, 10, 0.25, 42);
    let spec = dgp.spec()?;
    let (data, _) = simulate(&dgp)?;
    let start = Instant::now();
    let f = fit(&spec, &data, &EmConfig::default(), &GibbsConfig::default())?;
    println!(
        "{} EM iterations in {:.1}s, converged: {}",
        f.iterations,
        start.elapsed().as_secs_f64(),
        f.converged
    );
    let layout = ParamLayout::new(&spec);
    let truth = layout.values(&dgp.theta);
    let est = layout.values(&f.theta_hat);
    println!("{:12} {:>8} {:>8} {:>8}", "parameter", "truth", "estimate", "se");
    for (i, name) in f.param_names.iter().enumerate() {
        let se =
            f.se.as_ref()
                .map(|s| format!("{:8.4}", s[i]))
                .unwrap_or_else(|| "       -".into());
        println!("{name:12} {:8.4} {:8.4} {se}", truth[i], est[i]);
    }
    if let Some(e) = &f.se_error {
        println!("standard errors unavailable: {e}");
    }
    Ok(())
}
