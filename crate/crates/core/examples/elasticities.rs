//! Direct and spillover elasticities implied by fitted parameters.

use star_mcem::effects::elasticities;
use star_mcem::simkit::{simulate, DgpConfig};

fn main() -> star_mcem::Result<()> {
    for dep in [0.0, 0.15, 0.3] {
        let dgp = DgpConfig::count_panel(2, 8, 3, dep, 5);
        let spec = dgp.spec()?;
        let (data, _) = simulate(&dgp)?;
        let rep = elasticities(&spec, &dgp.theta, &data)?;
        println!("dependence {dep}:");
        for e in &rep.entries {
            println!(
                "  outcome {} x{}: direct {:7.4}, spillover {:7.4}",
                e.outcome + 1,
                e.predictor + 1,
                e.direct,
                e.spillover
            );
        }
    }
    Ok(())
}
