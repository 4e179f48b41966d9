//! One pass of each solver block on the default deployment, run by hand:
//! sensing times, then the association search, then power allocation.

use cran_sense::association::{solve_association, AssocOptions};
use cran_sense::model::{check_constraints, total_approx_throughput};
use cran_sense::orchestrator::initial_allocation;
use cran_sense::power::{solve_power, PowerOptions};
use cran_sense::scenario::{generate_instance, ScenarioSpec};
use cran_sense::sensing_opt::solve_sensing;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ScenarioSpec::default();
    let params = &spec.params;
    let inst = generate_instance(&spec)?;
    let ch = &inst.channel;
    let mut alloc = initial_allocation(params, ch, Some(&inst.distance), None)?;
    for (p, &b) in alloc.power.iter_mut().zip(&alloc.beta) {
        if !b {
            *p = 0.0;
        }
    }
    println!("start           objective {:.4}", total_approx_throughput(params, &alloc, ch));

    let sensing = solve_sensing(params, ch, &alloc)?;
    alloc.tau = sensing.tau.clone();
    let mean_ms = sensing.tau.iter().sum::<f64>() / sensing.tau.len() as f64 * 1e3;
    println!(
        "sensing step    objective {:.4}  mean tau {mean_ms:.3} ms  KKT residual {:.2e}",
        total_approx_throughput(params, &alloc, ch),
        sensing.kkt_residual
    );

    let assoc = solve_association(params, ch, &alloc, Some(&alloc), &AssocOptions::default())?;
    assoc.apply(&mut alloc);
    for (p, &b) in alloc.power.iter_mut().zip(&alloc.beta) {
        if !b {
            *p = 0.0;
        }
    }
    println!(
        "association     objective {:.4}  nodes {}  proven optimal {}",
        total_approx_throughput(params, &alloc, ch),
        assoc.nodes_explored,
        assoc.proven_optimal
    );

    let power = solve_power(params, ch, &alloc, &PowerOptions::default())?;
    for (t, it) in power.history.iter().enumerate() {
        println!(
            "  SCA {t:>2}  surrogate {:.4}  true {:.4}",
            it.surrogate_objective, it.true_objective
        );
    }
    alloc.power = power.final_iterate.p;
    println!("power step      objective {:.4}", total_approx_throughput(params, &alloc, ch));
    println!("max residual    {:.2e}", check_constraints(params, &alloc, ch).max());
    Ok(())
}
