//! Joint-solve throughput as the number of users per slice grows.

use cran_sense::orchestrator::AltConfig;
use cran_sense::scenario::{run_sweep, ScenarioSpec, SweepSpec, SweptParameter};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trials: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let spec = SweepSpec {
        swept_parameter: SweptParameter::NumUsers,
        grid: vec![4.0, 8.0, 12.0],
        trials_per_point: trials,
        base: ScenarioSpec::default(),
        solver: AltConfig::default(),
    };
    println!("{:>6} {:>12} {:>10} {:>11}", "users", "throughput", "stderr", "infeasible");
    for row in run_sweep(&spec)? {
        println!(
            "{:>6} {:>12.4} {:>10.4} {:>11}",
            row.value,
            row.throughput.mean,
            row.throughput.stderr,
            row.infeasible_trials
        );
    }
    Ok(())
}
