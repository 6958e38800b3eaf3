//! Censors a third of a simulated count panel and predicts the censored
//! cells with the dependence model and with an independence model.

use star_mcem::mcem::EmConfig;
use star_mcem::sampler::GibbsConfig;
use star_mcem::simkit::{run_prediction_study, DgpConfig};

fn main() -> star_mcem::Result<()> {
    let dgp = DgpConfig::count_panel(1, 8, 10, 0.25, 1);
    let em = EmConfig {
        se_samples: 0,
        ..Default::default()
    };
    let cmp = run_prediction_study(&dgp, 0.33, &em, &GibbsConfig::default())?;
    println!("{} censored cells", cmp.censored_cells);
    println!("{:12} {:>10} {:>10}", "model", "RMSE", "MAE");
    println!(
        "{:12} {:10.3} {:10.3}",
        "dependence", cmp.dependent.rmse, cmp.dependent.mae
    );
    println!(
        "{:12} {:10.3} {:10.3}",
        "independent", cmp.independent.rmse, cmp.independent.mae
    );
    Ok(())
}
