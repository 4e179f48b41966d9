//! Random network instances and the parameter sweeps run on them.
//!
//! Every random quantity comes from its own seeded stream (see [`crate::rng`]),
//! keyed by the entity it belongs to. Trial `t` of a sweep uses the instance
//! seed `derive_seed(seed, [t])` at every grid point, so all grid points of a
//! trial see the same users, fading and sensing gains (common random numbers).

use log::info;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_constraints, total_approx_throughput, NetworkDims, Params, RadioParams, SensingParams};
use crate::model::{Allocation, ChannelState, SolveReport};
use crate::orchestrator::{initial_allocation, solve_joint, AltConfig};
use crate::rng::{derive_seed, stream};
use crate::sensing::{interruption_probability, Estimate, RayleighSensingSampler};

const TAG_USER: u64 = 0x0055_5345;
const TAG_FADING: u64 = 0x0046_4144;
const TAG_SENSING: u64 = 0x0053_454E;

/// Users closer than this to an RRH are redrawn.
pub const MIN_DISTANCE_M: f64 = 1.0;

/// Width of the final bracket when searching for the best sensing time (seconds).
pub const OPT_TAU_TOL: f64 = 0.5e-3;

/// Geometry, fading statistics and model parameters of a random deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    /// Side of the square service area in km.
    pub area_side: f64,
    /// RRH positions in km.
    pub rrh_coords: Vec<(f64, f64)>,
    pub pathloss_exp: f64,
    /// Mean of the exponential small-scale fading.
    pub fading_mean: f64,
    pub seed: u64,
    pub params: Params,
}

/// Params used by the default deployment: 2 slices of 8 users, 4 RRHs, 3 BBUs
/// and 16 sub-carriers.
pub fn default_params() -> Params {
    let nr = 4;
    let nk = 16;
    Params {
        dims: NetworkDims::uniform(2, nr, 3, nk, 8, 6, 4),
        sensing: SensingParams {
            target_pd: 0.9,
            target_pfa: vec![0.2; nk],
            hvwn_snr: 10f64.powf(-1.5),
            sampling_freq: 1e6,
            frame_len: 0.2,
            hvwn_active_prob: 0.1,
        },
        radio: RadioParams {
            noise_power: 1e-13,
            hvwn_interference: 1e-13,
            max_power: vec![1.0; nr],
            reserved_rate: vec![4.0; 2],
        },
    }
}

/// RRHs at the cell centers of a `ceil(√R)`-column grid over the square,
/// listed column by column. Four RRHs on a 2 km square land at (0.5, 0.5),
/// (0.5, 1.5), (1.5, 0.5) and (1.5, 1.5) km.
pub fn grid_rrh_coords(num_rrhs: usize, area_side: f64) -> Vec<(f64, f64)> {
    let cols = (num_rrhs as f64).sqrt().ceil().max(1.0) as usize;
    let rows = num_rrhs.div_ceil(cols).max(1);
    let mut out = Vec::with_capacity(num_rrhs);
    'outer: for c in 0..cols {
        for r in 0..rows {
            if out.len() == num_rrhs {
                break 'outer;
            }
            out.push((
                (c as f64 + 0.5) * area_side / cols as f64,
                (r as f64 + 0.5) * area_side / rows as f64,
            ));
        }
    }
    out
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            area_side: 2.0,
            rrh_coords: grid_rrh_coords(4, 2.0),
            pathloss_exp: 3.0,
            fading_mean: 0.5,
            seed: 1,
            params: default_params(),
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.area_side > 0.0 && self.area_side.is_finite()) {
            return Err(Error::invalid("area_side", "must be > 0"));
        }
        if !(self.pathloss_exp > 0.0) {
            return Err(Error::invalid("pathloss_exp", "must be > 0"));
        }
        if !(self.fading_mean > 0.0) {
            return Err(Error::invalid("fading_mean", "must be > 0"));
        }
        self.params.validate()?;
        if self.rrh_coords.len() != self.params.dims.num_rrhs {
            return Err(Error::invalid("rrh_coords", "needs one position per RRH"));
        }
        let inside = |v: f64| (0.0..=self.area_side).contains(&v);
        if !self.rrh_coords.iter().all(|&(x, y)| inside(x) && inside(y)) {
            return Err(Error::invalid("rrh_coords", "must lie inside the square"));
        }
        Ok(())
    }

    /// Change the number of RRHs, re-laying them out on the default grid and
    /// resizing every per-RRH parameter from its first entry.
    pub fn with_num_rrhs(&self, num_rrhs: usize) -> Self {
        let mut out = self.clone();
        let d = &mut out.params.dims;
        let fronthaul = d.fronthaul_cap.first().copied().unwrap_or(0);
        d.num_rrhs = num_rrhs;
        d.fronthaul_cap = vec![fronthaul; num_rrhs * d.num_bbus];
        let pmax = self.params.radio.max_power.first().copied().unwrap_or(1.0);
        out.params.radio.max_power = vec![pmax; num_rrhs];
        out.rrh_coords = grid_rrh_coords(num_rrhs, self.area_side);
        out
    }

    pub fn with_users_per_slice(&self, users: usize) -> Self {
        let mut out = self.clone();
        let s = out.params.dims.num_slices;
        out.params.dims.users_per_slice = vec![users; s];
        out
    }
}

/// A drawn deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub channel: ChannelState,
    /// User positions in meters.
    pub user_positions: Vec<(f64, f64)>,
    /// RRH positions in meters.
    pub rrh_positions: Vec<(f64, f64)>,
    /// `d_{r,n}` in meters at `n * R + r`.
    pub distance: Vec<f64>,
}

/// Draw users, fading and sensing gains for `spec`.
pub fn generate_instance(spec: &ScenarioSpec) -> Result<Instance> {
    spec.validate()?;
    let dims = &spec.params.dims;
    let (nr, nk, nu) = (dims.num_rrhs, dims.num_subcarriers, dims.num_users());
    let side = spec.area_side * 1e3;
    let rrh_positions: Vec<(f64, f64)> = spec.rrh_coords.iter().map(|&(x, y)| (x * 1e3, y * 1e3)).collect();
    let dist = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();

    let mut user_positions = Vec::with_capacity(nu);
    let mut slice_index = Vec::with_capacity(nu);
    for s in 0..dims.num_slices {
        for i in 0..dims.users_per_slice[s] {
            let mut rng = stream(spec.seed, &[TAG_USER, s as u64, i as u64]);
            let pos = loop {
                let pos = (rng.gen_range(0.0..=side), rng.gen_range(0.0..=side));
                if rrh_positions.iter().all(|&r| dist(r, pos) >= MIN_DISTANCE_M) {
                    break pos;
                }
            };
            user_positions.push(pos);
            slice_index.push((s, i));
        }
    }

    let mut distance = vec![0.0; nu * nr];
    let mut downlink_gain = vec![0.0; dims.num_cells()];
    for (n, &(s, i)) in slice_index.iter().enumerate() {
        for r in 0..nr {
            let d = dist(rrh_positions[r], user_positions[n]);
            distance[n * nr + r] = d;
            let loss = d.powf(-spec.pathloss_exp);
            let mut rng = stream(spec.seed, &[TAG_FADING, r as u64, s as u64, i as u64]);
            for k in 0..nk {
                let psi: f64 = Exp1.sample(&mut rng);
                downlink_gain[dims.cell(r, k, n)] = spec.fading_mean * psi * loss;
            }
        }
    }
    let mut sensing_gain_sq = vec![0.0; nr * nk];
    for r in 0..nr {
        let mut rng = stream(spec.seed, &[TAG_SENSING, r as u64]);
        for k in 0..nk {
            sensing_gain_sq[dims.rk(r, k)] = Exp1.sample(&mut rng);
        }
    }
    Ok(Instance {
        channel: ChannelState {
            downlink_gain,
            sensing_gain_sq,
        },
        user_positions,
        rrh_positions,
        distance,
    })
}

/// `points` sensing times spaced geometrically from `frame_len / 2000` up to
/// `frame_len`.
pub fn geometric_tau_grid(frame_len: f64, points: usize) -> Vec<f64> {
    let lo = frame_len / 2000.0;
    match points {
        0 => Vec::new(),
        1 => vec![frame_len],
        _ => (0..points)
            .map(|i| if i + 1 == points { frame_len } else { lo * 2000f64.powf(i as f64 / (points - 1) as f64) })
            .collect(),
    }
}

/// Instance seed of trial `t`.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    derive_seed(seed, &[trial as u64])
}

/// Outcome of one solve on one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub allocation: Allocation,
    pub report: SolveReport,
    /// Summed throughput; zero when the final allocation misses a constraint.
    pub throughput: f64,
    pub feasible: bool,
}

/// Draw the instance of `spec` and run the alternating solver on it.
///
/// With `solver.fixed_tau` set, the detection constraint is not checked
/// (sub-carriers that miss it carry nothing).
pub fn solve_instance(spec: &ScenarioSpec, solver: &AltConfig) -> Result<TrialOutcome> {
    let inst = generate_instance(spec)?;
    let params = &spec.params;
    let init = initial_allocation(params, &inst.channel, Some(&inst.distance), solver.fixed_tau)?;
    let (allocation, report) = solve_joint(&init, &inst.channel, params, solver)?;
    let res = check_constraints(params, &allocation, &inst.channel);
    let first = if solver.fixed_tau.is_some() { 2 } else { 1 };
    let feasible = (first..=10).all(|i| res.get(i) <= 1e-6);
    let throughput = if feasible {
        total_approx_throughput(params, &allocation, &inst.channel)
    } else {
        0.0
    };
    Ok(TrialOutcome {
        allocation,
        report,
        throughput,
        feasible,
    })
}

/// Which parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweptParameter {
    /// Fixed sensing time in seconds; reports throughput.
    Tau,
    /// Reports the best sensing time per value.
    TargetPd,
    TargetPfa,
    NumRrhs,
    /// Users per slice; reports throughput of the full solver.
    NumUsers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub swept_parameter: SweptParameter,
    pub grid: Vec<f64>,
    pub trials_per_point: usize,
    pub base: ScenarioSpec,
    pub solver: AltConfig,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::invalid("grid", "must not be empty"));
        }
        if !self.grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("grid", "must be strictly increasing"));
        }
        if self.trials_per_point == 0 {
            return Err(Error::invalid("trials_per_point", "must be >= 1"));
        }
        let integral = matches!(self.swept_parameter, SweptParameter::NumRrhs | SweptParameter::NumUsers);
        if integral && !self.grid.iter().all(|v| v.fract() == 0.0 && *v >= 1.0) {
            return Err(Error::invalid("grid", "counts must be positive integers"));
        }
        self.base.validate()?;
        self.solver.validate()
    }
}

/// One row of a sweep result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    /// Best uniform sensing time (seconds), for the sweeps that search it.
    pub opt_tau: Option<f64>,
    /// Throughput across trials (at `opt_tau` when present).
    pub throughput: Estimate,
    /// Trials whose solve ended without a feasible allocation.
    pub infeasible_trials: usize,
}

/// Mean fixed-τ throughput over the trials of `spec`.
pub fn fixed_tau_throughput(spec: &ScenarioSpec, solver: &AltConfig, tau: f64, trials: usize) -> Result<(Estimate, usize)> {
    let cfg = AltConfig {
        fixed_tau: Some(tau),
        ..solver.clone()
    };
    let mut samples = Vec::with_capacity(trials);
    let mut infeasible = 0;
    for t in 0..trials {
        let trial = ScenarioSpec {
            seed: trial_seed(spec.seed, t),
            ..spec.clone()
        };
        match solve_instance(&trial, &cfg) {
            Ok(out) => {
                if !out.feasible {
                    infeasible += 1;
                }
                samples.push(out.throughput);
            }
            Err(e) if e.is_infeasible() => {
                infeasible += 1;
                samples.push(0.0);
            }
            Err(e) => return Err(e),
        }
    }
    Ok((Estimate::from_samples(&samples), infeasible))
}

/// Best uniform sensing time for the trial-mean fixed-τ throughput.
///
/// The trial-mean curve is a sum of sawtooths (each trial jumps when a
/// sub-carrier becomes usable, then decays linearly), so a bare
/// golden-section search stalls on local teeth. A geometric scan over
/// `(0, T]` brackets the maximum, a uniform scan at `OPT_TAU_TOL / 5`
/// locates the best tooth, and golden-section search refines inside the
/// neighbouring cells. Returns the best probe.
pub fn optimal_tau(spec: &ScenarioSpec, solver: &AltConfig, trials: usize) -> Result<(f64, Estimate, usize)> {
    let frame = spec.params.sensing.frame_len;
    let mut probes: Vec<(f64, Estimate, usize)> = Vec::new();
    let eval = |tau: f64, probes: &mut Vec<(f64, Estimate, usize)>| -> Result<f64> {
        if let Some(p) = probes.iter().find(|p| p.0 == tau) {
            return Ok(p.1.mean);
        }
        let (est, bad) = fixed_tau_throughput(spec, solver, tau, trials)?;
        probes.push((tau, est, bad));
        Ok(est.mean)
    };
    let argmax = |pts: &[f64], probes: &mut Vec<(f64, Estimate, usize)>| -> Result<usize> {
        let mut best_i = 0;
        let mut best_v = f64::NEG_INFINITY;
        for (i, &t) in pts.iter().enumerate() {
            let v = eval(t, probes)?;
            if v > best_v {
                best_v = v;
                best_i = i;
            }
        }
        Ok(best_i)
    };

    const SCAN: usize = 32;
    let lo_scan = frame * 1e-3;
    let scan: Vec<f64> = (0..SCAN)
        .map(|i| lo_scan * (frame / lo_scan).powf(i as f64 / (SCAN - 1) as f64))
        .map(|t| t.min(frame))
        .collect();
    let i = argmax(&scan, &mut probes)?;
    let lo = if i == 0 { lo_scan * 1e-3 } else { scan[i - 1] };
    let hi = if i + 1 == SCAN { frame } else { scan[i + 1] };

    let step = OPT_TAU_TOL / 5.0;
    let cells = ((hi - lo) / step).ceil().max(1.0) as usize;
    let fine: Vec<f64> = (0..=cells).map(|j| (lo + (hi - lo) * j as f64 / cells as f64).min(frame)).collect();
    let j = argmax(&fine, &mut probes)?;
    let mut a = fine[j.saturating_sub(1)];
    let mut b = fine[(j + 1).min(cells)];

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = eval(c, &mut probes)?;
    let mut fd = eval(d, &mut probes)?;
    while b - a > step {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c, &mut probes)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d, &mut probes)?;
        }
    }
    let best = probes
        .iter()
        .max_by(|x, y| x.1.mean.total_cmp(&y.1.mean).then(y.0.total_cmp(&x.0)))
        .expect("at least one probe")
        .clone();
    Ok(best)
}

/// Run every grid point of `spec` in order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let trials = spec.trials_per_point;
    let mut rows = Vec::with_capacity(spec.grid.len());
    for &value in &spec.grid {
        info!("sweep {:?} = {value}", spec.swept_parameter);
        let row = match spec.swept_parameter {
            SweptParameter::Tau => {
                let (throughput, bad) = fixed_tau_throughput(&spec.base, &spec.solver, value, trials)?;
                SweepRow {
                    value,
                    opt_tau: None,
                    throughput,
                    infeasible_trials: bad,
                }
            }
            SweptParameter::TargetPd | SweptParameter::TargetPfa | SweptParameter::NumRrhs => {
                let mut base = spec.base.clone();
                match spec.swept_parameter {
                    SweptParameter::TargetPd => base.params.sensing.target_pd = value,
                    SweptParameter::TargetPfa => base.params.sensing.target_pfa.iter_mut().for_each(|p| *p = value),
                    _ => base = base.with_num_rrhs(value as usize),
                }
                base.validate()?;
                let (tau, throughput, bad) = optimal_tau(&base, &spec.solver, trials)?;
                SweepRow {
                    value,
                    opt_tau: Some(tau),
                    throughput,
                    infeasible_trials: bad,
                }
            }
            SweptParameter::NumUsers => {
                let base = spec.base.with_users_per_slice(value as usize);
                base.validate()?;
                let mut samples = Vec::with_capacity(trials);
                let mut bad = 0;
                for t in 0..trials {
                    let trial = ScenarioSpec {
                        seed: trial_seed(base.seed, t),
                        ..base.clone()
                    };
                    match solve_instance(&trial, &spec.solver) {
                        Ok(out) => {
                            bad += usize::from(!out.feasible);
                            samples.push(out.throughput);
                        }
                        Err(e) if e.is_infeasible() => {
                            bad += 1;
                            samples.push(0.0);
                        }
                        Err(e) => return Err(e),
                    }
                }
                SweepRow {
                    value,
                    opt_tau: None,
                    throughput: Estimate::from_samples(&samples),
                    infeasible_trials: bad,
                }
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

/// Interruption probability at each uniform sensing time of `taus`, with the
/// sensing gains of trial `t` shared by every grid point.
pub fn run_interruption(spec: &ScenarioSpec, taus: &[f64], trials: usize) -> Result<Vec<(f64, Estimate)>> {
    spec.validate()?;
    let sampler = RayleighSensingSampler {
        seed: spec.seed,
        num_rrhs: spec.params.dims.num_rrhs,
    };
    taus.iter()
        .map(|&tau| {
            interruption_probability(tau, &spec.params.sensing, trials, |t| sampler.gains(t)).map(|e| (tau, e))
        })
        .collect()
}
