//! The log-determinant of the full spatio-temporal `A` equals `T` times the
//! log-determinant of one period's block, and the single-outcome grid
//! reproduces the exact values.

use star_mcem::logdet::{LogDetEvaluator, LogDetGrid};
use star_mcem::model::{assemble_a, ModelSpec};
use star_mcem::simkit::{make_grid_weights, DgpConfig};
use star_mcem::sparse::LuFactor;

fn main() -> star_mcem::Result<()> {
    for (g, t) in [(1, 4), (2, 3), (3, 5)] {
        let dgp = DgpConfig::count_panel(g, 4, t, 0.2, 1);
        let spec = dgp.spec()?;
        let full = LuFactor::factorize(&assemble_a(&spec, &dgp.theta)?)?.log_abs_det();
        let ev = LogDetEvaluator::exact(&spec)?;
        let block = ev.logdet_block(&dgp.theta)?;
        println!(
            "G={g} N={} T={t}: ln|A| = {full:.12}, T ln|I - Q*| = {:.12}",
            spec.n(),
            t as f64 * block
        );
    }

    let w = make_grid_weights(10, false);
    let grid = LogDetGrid::build(&w, 2000)?;
    let spec = ModelSpec::new(1, w, vec![star_mcem::model::Family::Count], vec![1])?;
    let ev = LogDetEvaluator::exact(&spec)?;
    for rho in [-0.7, 0.1, 0.55, 0.95] {
        let mut th = star_mcem::model::Theta::zeros(&spec);
        th.rho = vec![rho];
        let exact = ev.logdet_block(&th)?;
        let approx = grid.interpolate(rho)?.expect("inside the grid");
        println!("rho={rho:5.2}: exact {exact:.10}, grid {approx:.10}");
    }
    Ok(())
}
