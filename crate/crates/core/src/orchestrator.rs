//! Alternating solver: sensing times, then associations, then powers, repeated
//! until the network throughput settles.

use std::time::Instant;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::association::{route_to_bbus, solve_association, AssocOptions};
use crate::error::{Error, Result, Step};
use crate::model::{check_constraints, slice_rates, total_approx_throughput, Allocation, ChannelState, Params, SolveReport};
use crate::power::{solve_power, PowerOptions};
use crate::sensing::detection_probability;
use crate::sensing_opt::{minimal_uniform_tau, solve_sensing};

/// What to do when one block has no feasible point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FallbackPolicy {
    /// Keep the block's previous values and record the event in the report.
    #[default]
    KeepPrevious,
    /// Stop with [`Error::JointInfeasible`].
    Abort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AltConfig {
    /// Stop when the objective changes by at most this much (bps/Hz).
    pub epsilon: f64,
    pub max_outer_iters: usize,
    /// Start every block from the previous values and never accept a worse block result.
    pub warm_start: bool,
    pub fallback_on_infeasible_step: FallbackPolicy,
    /// Hold every sensing time at this value (seconds) and skip the sensing block.
    /// Sub-carriers that miss the detection target at this time carry no traffic.
    pub fixed_tau: Option<f64>,
    pub association: AssocOptions,
    pub power: PowerOptions,
}

impl Default for AltConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            max_outer_iters: 100,
            warm_start: true,
            fallback_on_infeasible_step: FallbackPolicy::KeepPrevious,
            fixed_tau: None,
            association: AssocOptions::default(),
            power: PowerOptions::default(),
        }
    }
}

impl AltConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon", "must be > 0"));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::invalid("max_outer_iters", "must be >= 1"));
        }
        if !(self.power.zeta > 0.0) {
            return Err(Error::invalid("zeta", "must be > 0"));
        }
        if self.power.max_iters == 0 {
            return Err(Error::invalid("power.max_iters", "must be >= 1"));
        }
        Ok(())
    }
}

/// Sub-carriers whose detection target holds with every RRH sensing for `tau`.
pub fn usable_subcarriers(params: &Params, channel: &ChannelState, tau: f64) -> Vec<bool> {
    let dims = &params.dims;
    let sp = &params.sensing;
    (0..dims.num_subcarriers)
        .map(|k| {
            let gains = channel.sensing_gains_on(dims, k);
            let taus = vec![tau; dims.num_rrhs];
            detection_probability(&taus, sp.sampling_freq, sp.hvwn_snr, &gains, sp.target_pfa[k])
                .map_or(false, |pd| pd >= sp.target_pd - 1e-12)
        })
        .collect()
}

/// Deterministic starting point.
///
/// Each user (in index order) is homed on the closest RRH whose BBU routing
/// still fits, every RRH serves its best-gain user on each sub-carrier, the
/// RRH budget is spread evenly over all (sub-carrier, homed user) cells, and
/// sensing times sit at the smallest uniform value meeting the detection target.
///
/// `distance[n * R + r]` ranks the RRHs; without it the mean downlink gain is used.
/// With `fixed_tau` every sensing time takes that value and sub-carriers that
/// miss the detection target stay unused.
pub fn initial_allocation(
    params: &Params,
    channel: &ChannelState,
    distance: Option<&[f64]>,
    fixed_tau: Option<f64>,
) -> Result<Allocation> {
    params.validate()?;
    channel.validate(&params.dims)?;
    let dims = &params.dims;
    let (nr, nb, nk, nu) = (dims.num_rrhs, dims.num_bbus, dims.num_subcarriers, dims.num_users());
    let (tau, usable) = match fixed_tau {
        Some(t) => {
            if !(t > 0.0 && t <= params.sensing.frame_len) {
                return Err(Error::invalid("fixed_tau", "must lie in (0, frame_len]"));
            }
            (vec![t; nr * nk], usable_subcarriers(params, channel, t))
        }
        None => (minimal_uniform_tau(params, channel)?, vec![true; nk]),
    };
    let mut alloc = Allocation::empty(dims, 0.0);
    alloc.tau = tau;

    let mut counts = vec![0usize; nr];
    let mut home = vec![None; nu];
    for n in 0..nu {
        let mut order: Vec<usize> = (0..nr).collect();
        match distance {
            Some(d) => order.sort_by(|&a, &b| d[n * nr + a].total_cmp(&d[n * nr + b]).then(a.cmp(&b))),
            None => {
                let mean = |r: usize| -> f64 { (0..nk).map(|k| channel.downlink_gain[dims.cell(r, k, n)]).sum() };
                order.sort_by(|&a, &b| mean(b).total_cmp(&mean(a)).then(a.cmp(&b)));
            }
        }
        for r in order {
            counts[r] += 1;
            if route_to_bbus(dims, &counts).is_some() {
                home[n] = Some(r);
                break;
            }
            counts[r] -= 1;
        }
    }
    let mut remaining = route_to_bbus(dims, &counts).expect("homes were added one feasible step at a time");
    for n in 0..nu {
        if let Some(r) = home[n] {
            alloc.rrh_assoc[n * nr + r] = true;
            let b = (0..nb).find(|&b| remaining[r * nb + b] > 0).expect("routing covers every homed user");
            remaining[r * nb + b] -= 1;
            alloc.bbu_assoc[n * nb + b] = true;
        }
    }
    alloc.refresh_linkage(dims);

    let live = usable.iter().filter(|&&u| u).count();
    for r in 0..nr {
        let users: Vec<usize> = (0..nu).filter(|&n| home[n] == Some(r)).collect();
        if users.is_empty() || live == 0 {
            continue;
        }
        let share = params.radio.max_power[r] / (live * users.len()) as f64;
        for k in (0..nk).filter(|&k| usable[k]) {
            let best = users
                .iter()
                .copied()
                .max_by(|&a, &b| {
                    channel.downlink_gain[dims.cell(r, k, a)]
                        .total_cmp(&channel.downlink_gain[dims.cell(r, k, b)])
                        .then(b.cmp(&a))
                })
                .expect("non-empty");
            alloc.beta[dims.cell(r, k, best)] = true;
            for &n in &users {
                alloc.power[dims.cell(r, k, n)] = share;
            }
        }
    }
    Ok(alloc)
}

fn c10_ok(params: &Params, alloc: &Allocation, channel: &ChannelState) -> bool {
    slice_rates(params, alloc, channel)
        .iter()
        .zip(&params.radio.reserved_rate)
        .all(|(rate, rsv)| *rate >= rsv - 1e-6)
}

fn mask_power(alloc: &mut Allocation) {
    for (p, &b) in alloc.power.iter_mut().zip(&alloc.beta) {
        if !b {
            *p = 0.0;
        }
    }
}

/// Run the alternating solver from `initial`.
pub fn solve_joint(
    initial: &Allocation,
    channel: &ChannelState,
    params: &Params,
    config: &AltConfig,
) -> Result<(Allocation, SolveReport)> {
    params.validate()?;
    channel.validate(&params.dims)?;
    config.validate()?;
    if !initial.matches(&params.dims) {
        return Err(Error::invalid("initial", "allocation dimensions do not match the network"));
    }
    let usable = config.fixed_tau.map(|t| usable_subcarriers(params, channel, t));

    let mut cur = initial.clone();
    if let Some(t) = config.fixed_tau {
        cur.tau.iter_mut().for_each(|v| *v = t);
    }
    let mut report = SolveReport {
        initial_objective: total_approx_throughput(params, &cur, channel),
        ..SolveReport::default()
    };
    let mut last = report.initial_objective;
    let dims = &params.dims;

    for t in 1..=config.max_outer_iters {
        // Sensing times.
        if config.fixed_tau.is_none() {
            let started = Instant::now();
            match solve_sensing(params, channel, &cur) {
                Ok(res) => {
                    let mut cand = cur.clone();
                    cand.tau = res.tau;
                    let better = total_approx_throughput(params, &cand, channel)
                        >= total_approx_throughput(params, &cur, channel);
                    if !config.warm_start || better || !c10_ok(params, &cur, channel) {
                        cur = cand;
                    }
                }
                Err(e) if e.is_infeasible() => {
                    handle_infeasible(config, &mut report, t, Step::Sensing, e)?;
                }
                Err(e) => return Err(e),
            }
            report.wall_times.sensing += started.elapsed().as_secs_f64();
        }

        // Associations.
        let started = Instant::now();
        let mut fixed = cur.clone();
        if let Some(usable) = &usable {
            for r in 0..dims.num_rrhs {
                for k in (0..dims.num_subcarriers).filter(|&k| !usable[k]) {
                    for n in 0..dims.num_users() {
                        fixed.power[dims.cell(r, k, n)] = 0.0;
                    }
                }
            }
        }
        let warm = config.warm_start.then_some(&cur);
        match solve_association(params, channel, &fixed, warm, &config.association) {
            Ok(res) => {
                let mut cand = fixed;
                res.apply(&mut cand);
                mask_power(&mut cand);
                let before = total_approx_throughput(params, &cur, channel);
                let after = total_approx_throughput(params, &cand, channel);
                if !res.proven_optimal {
                    warn!("association search stopped at the node limit in iteration {t}");
                }
                if !config.warm_start || after >= before || !c10_ok(params, &cur, channel) {
                    cur = cand;
                } else {
                    mask_power(&mut cur);
                }
            }
            Err(e) if e.is_infeasible() => {
                handle_infeasible(config, &mut report, t, Step::Association, e)?;
                mask_power(&mut cur);
            }
            Err(e) => return Err(e),
        }
        report.wall_times.association += started.elapsed().as_secs_f64();

        // Powers.
        let started = Instant::now();
        match solve_power(params, channel, &cur, &config.power) {
            Ok(res) => {
                if !res.converged {
                    debug!("power iterations hit the cap in iteration {t}");
                }
                cur.power = res.final_iterate.p;
            }
            Err(e) if e.is_infeasible() => {
                handle_infeasible(config, &mut report, t, Step::Power, e)?;
            }
            Err(e) => return Err(e),
        }
        report.wall_times.power += started.elapsed().as_secs_f64();

        let objective = total_approx_throughput(params, &cur, channel);
        debug!("outer iteration {t}: objective {objective}");
        report.objective_trajectory.push(objective);
        report.residual_trajectory.push(check_constraints(params, &cur, channel).max());
        report.iterations = t;
        if (objective - last).abs() <= config.epsilon {
            report.converged = true;
            break;
        }
        last = objective;
    }
    report.constraint_residuals = check_constraints(params, &cur, channel).to_map();
    info!(
        "joint solve: {} iterations, objective {}, converged = {}",
        report.iterations,
        report.objective_trajectory.last().copied().unwrap_or(report.initial_objective),
        report.converged
    );
    Ok((cur, report))
}

fn handle_infeasible(config: &AltConfig, report: &mut SolveReport, t: usize, step: Step, e: Error) -> Result<()> {
    match config.fallback_on_infeasible_step {
        FallbackPolicy::Abort => Err(Error::JointInfeasible {
            step,
            source: Box::new(e),
        }),
        FallbackPolicy::KeepPrevious => {
            debug!("{step} infeasible in iteration {t}, keeping previous values: {e}");
            report.fallbacks.push((t, step, e.to_string()));
            Ok(())
        }
    }
}
