//! Best sensing time as the detection target, the false-alarm target and the
//! number of RRHs change.

use cran_sense::orchestrator::AltConfig;
use cran_sense::scenario::{run_sweep, ScenarioSpec, SweepSpec, SweptParameter};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trials: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let sweeps = [
        (SweptParameter::TargetPd, vec![0.8, 0.9, 0.99]),
        (SweptParameter::TargetPfa, vec![0.1, 0.2, 0.3]),
        (SweptParameter::NumRrhs, vec![2.0, 4.0, 6.0]),
    ];
    for (param, grid) in sweeps {
        let spec = SweepSpec {
            swept_parameter: param,
            grid,
            trials_per_point: trials,
            base: ScenarioSpec::default(),
            solver: AltConfig::default(),
        };
        println!("{param:?}");
        for row in run_sweep(&spec)? {
            println!(
                "  {:>6} -> tau* = {:>8.4} ms, throughput {:.3} ± {:.3} ({} infeasible)",
                row.value,
                row.opt_tau.unwrap_or(f64::NAN) * 1e3,
                row.throughput.mean,
                row.throughput.stderr,
                row.infeasible_trials
            );
        }
    }
    Ok(())
}
