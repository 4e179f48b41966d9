//! Full alternating solve on the default 4-RRH, 16-sub-carrier deployment.

use cran_sense::model::check_constraints;
use cran_sense::orchestrator::{initial_allocation, solve_joint, AltConfig};
use cran_sense::scenario::{generate_instance, ScenarioSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let spec = ScenarioSpec { seed, ..ScenarioSpec::default() };
    let inst = generate_instance(&spec)?;
    let params = &spec.params;

    let init = initial_allocation(params, &inst.channel, Some(&inst.distance), None)?;
    let (alloc, report) = solve_joint(&init, &inst.channel, params, &AltConfig::default())?;

    println!("initial objective  {:.4} bps/Hz", report.initial_objective);
    for (t, obj) in report.objective_trajectory.iter().enumerate() {
        println!("iteration {:>3}      {obj:.4}", t + 1);
    }
    println!("converged          {}", report.converged);
    println!(
        "time (s)           sensing {:.3}  association {:.3}  power {:.3}",
        report.wall_times.sensing, report.wall_times.association, report.wall_times.power
    );
    for (name, v) in check_constraints(params, &alloc, &inst.channel).iter() {
        println!("{name:<4} residual {v:.3e}");
    }
    let served = alloc.beta.iter().filter(|&&b| b).count();
    let tau_ms: Vec<String> = alloc.tau.iter().take(8).map(|t| format!("{:.3}", t * 1e3)).collect();
    println!("served cells {served}; first sensing times (ms): {}", tau_ms.join(" "));
    for (t, step, why) in &report.fallbacks {
        println!("fallback at {t} in {step}: {why}");
    }
    Ok(())
}
