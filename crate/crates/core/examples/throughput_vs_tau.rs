//! Mean throughput when every RRH senses for the same fixed time, over a
//! geometric grid of sensing times (the sensing–throughput tradeoff).

use cran_sense::orchestrator::AltConfig;
use cran_sense::scenario::{run_sweep, ScenarioSpec, SweepSpec, SweptParameter};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let points: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(25);
    let trials: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(5);
    let base = ScenarioSpec::default();
    let frame = base.params.sensing.frame_len;
    let grid = cran_sense::scenario::geometric_tau_grid(frame, points);

    let spec = SweepSpec {
        swept_parameter: SweptParameter::Tau,
        grid,
        trials_per_point: trials,
        base,
        solver: AltConfig::default(),
    };
    let rows = run_sweep(&spec)?;
    println!("{:>10} {:>12} {:>10} {:>11}", "tau_ms", "throughput", "stderr", "infeasible");
    for row in &rows {
        println!(
            "{:>10.4} {:>12.4} {:>10.4} {:>11}",
            row.value * 1e3,
            row.throughput.mean,
            row.throughput.stderr,
            row.infeasible_trials
        );
    }
    let best = rows
        .iter()
        .max_by(|a, b| a.throughput.mean.total_cmp(&b.throughput.mean))
        .expect("non-empty grid");
    println!("best sensing time on the grid: {:.4} ms", best.value * 1e3);
    Ok(())
}
