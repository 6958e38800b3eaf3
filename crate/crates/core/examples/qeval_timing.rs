//! CPU time of Q-function evaluations as `N`, `T` and `G` grow, with the
//! fitted log-log slopes. Pass `--long` for the larger sweeps.

use star_mcem::simkit::{default_timing_sweeps, run_qeval_timing};

fn main() -> star_mcem::Result<()> {
    let long = std::env::args().any(|a| a == "--long");
    let report = run_qeval_timing(&default_timing_sweeps(long), 50)?;
    for row in &report.timing {
        println!(
            "{:16} G={:2} N={:6} T={:3}: {:.5}s",
            row.sweep, row.g, row.n, row.t, row.seconds
        );
    }
    for s in &report.slopes {
        println!("slope {:16} in {}: {:.3}", s.sweep, s.dimension, s.slope);
    }
    Ok(())
}
