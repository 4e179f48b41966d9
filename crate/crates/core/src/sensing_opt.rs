//! Sensing-time block: maximize the summed throughput over sensing times with
//! associations and powers held fixed.
//!
//! In the variable `lambda = sqrt(tau * nu_sa)` the objective of every
//! RRH/sub-carrier pair is `W_{r,k} (1 - lambda^2 / (T nu_sa))`, the detection
//! target becomes the linear constraint
//! `sum_r lambda_{r,k} |h^HU_{r,k}|^2 >= b_k`, and the problem separates per
//! sub-carrier once the slice-rate multipliers are fixed. Each sub-carrier is
//! solved from its KKT conditions by bisection on the detection multiplier; the
//! slice multipliers are adjusted by Gauss–Seidel bisection until every
//! reserved rate holds.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{interference_at, sinr_absent, Allocation, ChannelState, Params};
use crate::sensing;

/// Relative floor that stands in for the open bound `lambda > 0`.
pub const LAMBDA_FLOOR_REL: f64 = 1e-9;

const BISECTION_STEPS: usize = 200;
const MU_MAX: f64 = 1e12;
const RATE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingSolveResult {
    /// `sqrt(tau * nu_sa)` per RRH/sub-carrier.
    pub lambda: Vec<f64>,
    /// Sensing time in seconds per RRH/sub-carrier.
    pub tau: Vec<f64>,
    /// Summed approximate throughput at the solution.
    pub objective: f64,
    pub kkt_residual: f64,
    /// Multipliers of the slice-rate constraints.
    pub slice_multipliers: Vec<f64>,
}

/// Data of the sensing problem: per-pair weights and per-sub-carrier detection rows.
struct SensingProblem {
    nr: usize,
    nk: usize,
    /// `W_{r,k}`: rate of the served user at full transmission time.
    weight: Vec<f64>,
    /// Slice of the user served on each pair, if any.
    owner: Vec<Option<usize>>,
    gain: Vec<f64>,
    required: Vec<f64>,
    lo: f64,
    hi: f64,
    /// `T * nu_sa`.
    scale: f64,
    reserved: Vec<f64>,
}

impl SensingProblem {
    fn build(params: &Params, channel: &ChannelState, fixed: &Allocation) -> Result<Self> {
        let dims = &params.dims;
        let sp = &params.sensing;
        let (nr, nk, nu) = (dims.num_rrhs, dims.num_subcarriers, dims.num_users());
        let slice_of = dims.slice_of_users();
        let mut weight = vec![0.0; nr * nk];
        let mut owner = vec![None; nr * nk];
        for r in 0..nr {
            for k in 0..nk {
                let coeff = sp.idle_prob() * (1.0 - sp.target_pfa[k]);
                for n in 0..nu {
                    let c = dims.cell(r, k, n);
                    if !fixed.beta[c] {
                        continue;
                    }
                    let i = interference_at(dims, n, r, k, fixed, channel);
                    let g0 = sinr_absent(fixed.power[c], channel.downlink_gain[c], i, params.radio.noise_power);
                    weight[dims.rk(r, k)] += coeff * g0.ln_1p() / LN_2;
                    owner[dims.rk(r, k)] = Some(slice_of[n]);
                }
            }
        }
        let mut required = Vec::with_capacity(nk);
        for k in 0..nk {
            let gains = channel.sensing_gains_on(dims, k);
            required.push(sensing::required_statistic(sp.hvwn_snr, &gains, sp.target_pfa[k], sp.target_pd)?);
        }
        let hi = sp.lambda_max();
        Ok(Self {
            nr,
            nk,
            weight,
            owner,
            gain: channel.sensing_gain_sq.clone(),
            required,
            lo: LAMBDA_FLOOR_REL * hi,
            hi,
            scale: sp.frame_len * sp.sampling_freq,
            reserved: params.radio.reserved_rate.clone(),
        })
    }

    fn infeasible_subcarriers(&self) -> Vec<usize> {
        (0..self.nk)
            .filter(|&k| {
                let cap: f64 = (0..self.nr).map(|r| self.gain[r * self.nk + k] * self.hi).sum();
                cap < self.required[k]
            })
            .collect()
    }

    /// Minimize `sum_r a_r lambda_r^2` subject to the detection row of sub-carrier `k`.
    /// Returns the detection multiplier (zero when the floor already detects).
    fn solve_subcarrier(&self, k: usize, mu: &[f64], lambda: &mut [f64]) -> f64 {
        let (nr, nk) = (self.nr, self.nk);
        let a: Vec<f64> = (0..nr)
            .map(|r| {
                let i = r * nk + k;
                let m = self.owner[i].map_or(0.0, |s| mu[s]);
                self.weight[i] * (1.0 + m)
            })
            .collect();
        let g: Vec<f64> = (0..nr).map(|r| self.gain[r * nk + k]).collect();
        for r in 0..nr {
            lambda[r * nk + k] = self.lo;
        }
        let b = self.required[k];
        let mut need = b - g.iter().map(|&gr| gr * self.lo).sum::<f64>();
        if need <= 0.0 {
            return 0.0;
        }
        // Pairs without a served user sense for free; fill them lowest index first.
        for r in 0..nr {
            if a[r] == 0.0 && g[r] > 0.0 {
                let add = need.min(g[r] * (self.hi - self.lo));
                lambda[r * nk + k] = if add >= g[r] * (self.hi - self.lo) { self.hi } else { self.lo + add / g[r] };
                need -= add;
                if need <= 0.0 {
                    return 0.0;
                }
            }
        }
        let busy: Vec<usize> = (0..nr).filter(|&r| a[r] > 0.0 && g[r] > 0.0).collect();
        let place = |eta: f64, r: usize| (eta * g[r] / (2.0 * a[r])).clamp(self.lo, self.hi);
        let supplied = |eta: f64| busy.iter().map(|&r| g[r] * (place(eta, r) - self.lo)).sum::<f64>();
        let mut eta_hi = busy
            .iter()
            .map(|&r| 2.0 * a[r] * self.hi / g[r])
            .fold(0.0_f64, f64::max);
        let mut eta_lo = 0.0;
        if supplied(eta_hi) < need {
            // Caller verified capacity; rounding only.
            eta_hi *= 1.0 + 1e-12;
        }
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (eta_lo + eta_hi);
            if mid <= eta_lo || mid >= eta_hi {
                break;
            }
            if supplied(mid) >= need {
                eta_hi = mid;
            } else {
                eta_lo = mid;
            }
        }
        for &r in &busy {
            lambda[r * nk + k] = place(eta_hi, r);
        }
        eta_hi
    }

    fn solve_for(&self, mu: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut lambda = vec![self.lo; self.nr * self.nk];
        let etas = (0..self.nk).map(|k| self.solve_subcarrier(k, mu, &mut lambda)).collect();
        (lambda, etas)
    }

    fn pair_rate(&self, i: usize, lambda: f64) -> f64 {
        self.weight[i] * (1.0 - lambda * lambda / self.scale)
    }

    fn slice_rates(&self, lambda: &[f64]) -> Vec<f64> {
        let mut rates = vec![0.0; self.reserved.len()];
        for (i, &l) in lambda.iter().enumerate() {
            if let Some(s) = self.owner[i] {
                rates[s] += self.pair_rate(i, l);
            }
        }
        rates
    }

    fn objective(&self, lambda: &[f64]) -> f64 {
        lambda.iter().enumerate().map(|(i, &l)| self.pair_rate(i, l)).sum()
    }

    fn rate_of(&self, s: usize, mu: &[f64]) -> f64 {
        self.slice_rates(&self.solve_for(mu).0)[s]
    }

    /// Smallest `mu_s` in `[lo, hi]` that lifts slice `s` to its reserved rate.
    fn bisect_mu(&self, s: usize, mu: &mut [f64], mut lo: f64, mut hi: f64) {
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi || hi - lo <= 1e-12 * hi.max(1.0) {
                break;
            }
            mu[s] = mid;
            if self.rate_of(s, mu) >= self.reserved[s] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        mu[s] = hi;
    }

    fn balance_slices(&self) -> Result<Vec<f64>> {
        let ns = self.reserved.len();
        let mut mu = vec![0.0; ns];
        for _round in 0..100 {
            let mut settled = true;
            for s in 0..ns {
                let rate = self.rate_of(s, &mu);
                let reserved = self.reserved[s];
                if rate < reserved {
                    settled = false;
                    let mut hi = mu[s].max(1.0);
                    loop {
                        mu[s] = hi;
                        if self.rate_of(s, &mu) >= reserved {
                            break;
                        }
                        if hi >= MU_MAX {
                            let mut alone = vec![0.0; ns];
                            alone[s] = MU_MAX;
                            if self.rate_of(s, &alone) < reserved - RATE_TOL {
                                return Err(Error::SliceRateInfeasible { slice: s });
                            }
                            break;
                        }
                        hi *= 4.0;
                    }
                    let lo = if hi > 1.0 { hi / 4.0 } else { 0.0 };
                    self.bisect_mu(s, &mut mu, lo.min(hi), hi);
                } else if mu[s] > 0.0 && rate > reserved + RATE_TOL * reserved.max(1.0) {
                    let mut relaxed = mu.to_vec();
                    relaxed[s] = 0.0;
                    if self.rate_of(s, &relaxed) >= reserved {
                        mu[s] = 0.0;
                    } else {
                        let hi = mu[s];
                        self.bisect_mu(s, &mut mu, 0.0, hi);
                    }
                    if (self.rate_of(s, &mu) - rate).abs() > RATE_TOL {
                        settled = false;
                    }
                }
            }
            if settled {
                break;
            }
        }
        let rates = self.slice_rates(&self.solve_for(&mu).0);
        for (s, (&rate, &reserved)) in rates.iter().zip(&self.reserved).enumerate() {
            if rate < reserved - 1e-6 {
                return Err(Error::SliceRateInfeasible { slice: s });
            }
        }
        Ok(mu)
    }
}

/// Optimal sensing times for the associations and powers in `fixed`.
///
/// Only `fixed.beta` and `fixed.power` are read.
pub fn solve_sensing(params: &Params, channel: &ChannelState, fixed: &Allocation) -> Result<SensingSolveResult> {
    let problem = SensingProblem::build(params, channel, fixed)?;
    let bad = problem.infeasible_subcarriers();
    if !bad.is_empty() {
        return Err(Error::SensingInfeasible { subcarriers: bad });
    }
    let mu = problem.balance_slices()?;
    let (lambda, etas) = problem.solve_for(&mu);

    let mut kkt: f64 = 0.0;
    for (k, &eta) in etas.iter().enumerate() {
        let supplied: f64 = (0..problem.nr)
            .map(|r| problem.gain[r * problem.nk + k] * lambda[r * problem.nk + k])
            .sum();
        let b = problem.required[k];
        kkt = kkt.max((b - supplied).max(0.0) / b.abs().max(1.0));
        if eta > 0.0 {
            kkt = kkt.max((supplied - b).abs() / b.abs().max(1.0));
        }
    }
    let rates = problem.slice_rates(&lambda);
    for (s, &m) in mu.iter().enumerate() {
        let gap = rates[s] - problem.reserved[s];
        kkt = kkt.max((-gap).max(0.0) / problem.reserved[s].max(1.0));
        if m > 0.0 {
            kkt = kkt.max(gap.abs() / problem.reserved[s].max(1.0));
        }
    }

    let nu_sa = params.sensing.sampling_freq;
    let frame = params.sensing.frame_len;
    let tau = lambda.iter().map(|&l| (l * l / nu_sa).min(frame)).collect();
    Ok(SensingSolveResult {
        objective: problem.objective(&lambda),
        lambda,
        tau,
        kkt_residual: kkt,
        slice_multipliers: mu,
    })
}

/// Smallest uniform-per-sub-carrier sensing times that meet the detection target,
/// clamped to the frame when the target is out of reach.
pub fn minimal_uniform_tau(params: &Params, channel: &ChannelState) -> Result<Vec<f64>> {
    let dims = &params.dims;
    let sp = &params.sensing;
    let hi = sp.lambda_max();
    let lo = LAMBDA_FLOOR_REL * hi;
    let mut tau = vec![0.0; dims.num_rrhs * dims.num_subcarriers];
    for k in 0..dims.num_subcarriers {
        let gains = channel.sensing_gains_on(dims, k);
        let b = sensing::required_statistic(sp.hvwn_snr, &gains, sp.target_pfa[k], sp.target_pd)?;
        let total: f64 = gains.iter().sum();
        let lambda = if total > 0.0 { (b / total).clamp(lo, hi) } else { hi };
        for r in 0..dims.num_rrhs {
            tau[dims.rk(r, k)] = (lambda * lambda / sp.sampling_freq).min(sp.frame_len);
        }
    }
    Ok(tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NetworkDims, RadioParams, SensingParams};
    use crate::sensing::detection_probability;

    fn params(nr: usize, nk: usize, users: Vec<usize>) -> Params {
        let ns = users.len();
        Params {
            dims: NetworkDims {
                num_slices: ns,
                num_rrhs: nr,
                num_bbus: 1,
                num_subcarriers: nk,
                users_per_slice: users,
                bbu_user_cap: 10,
                fronthaul_cap: vec![10; nr],
            },
            sensing: SensingParams {
                target_pd: 0.9,
                target_pfa: vec![0.2; nk],
                hvwn_snr: 0.5,
                sampling_freq: 1e4,
                frame_len: 0.1,
                hvwn_active_prob: 0.1,
            },
            radio: RadioParams {
                noise_power: 1.0,
                hvwn_interference: 0.0,
                max_power: vec![10.0; nr],
                reserved_rate: vec![0.0; ns],
            },
        }
    }

    /// Serve user `n` on every sub-carrier of RRH `r`.
    fn serve(p: &Params, alloc: &mut Allocation, r: usize, n: usize, power: f64) {
        for k in 0..p.dims.num_subcarriers {
            let c = p.dims.cell(r, k, n);
            alloc.beta[c] = true;
            alloc.power[c] = power;
        }
    }

    fn pair_objective(p: &Params, w: f64, lambda: f64) -> f64 {
        w * (1.0 - lambda * lambda / (p.sensing.frame_len * p.sensing.sampling_freq))
    }

    #[test]
    fn single_pair_sits_on_detection_boundary() {
        let p = params(1, 1, vec![1]);
        let ch = ChannelState {
            downlink_gain: vec![2.0],
            sensing_gain_sq: vec![0.7],
        };
        let mut alloc = Allocation::empty(&p.dims, 0.01);
        serve(&p, &mut alloc, 0, 0, 1.0);
        let res = solve_sensing(&p, &ch, &alloc).unwrap();
        let b = sensing::required_statistic(0.5, &[0.7], 0.2, 0.9).unwrap();
        assert!((res.lambda[0] - b / 0.7).abs() < 1e-9 * b);
        assert!((res.tau[0] - (b / 0.7).powi(2) / 1e4).abs() < 1e-12);
        assert!(res.kkt_residual <= 1e-6);
        let pd = detection_probability(&res.tau, 1e4, 0.5, &[0.7], 0.2).unwrap();
        assert!(pd >= 0.9 - 1e-9);
    }

    #[test]
    fn unreachable_target_is_infeasible() {
        let p = params(1, 2, vec![1]);
        let ch = ChannelState {
            downlink_gain: vec![1.0, 1.0],
            sensing_gain_sq: vec![1.0, 1e-3],
        };
        let mut alloc = Allocation::empty(&p.dims, 0.01);
        serve(&p, &mut alloc, 0, 0, 1.0);
        match solve_sensing(&p, &ch, &alloc) {
            Err(Error::SensingInfeasible { subcarriers }) => assert_eq!(subcarriers, vec![1]),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn idle_rrh_carries_the_sensing_burden() {
        // RRH 0 serves a user, RRH 1 is idle on the sub-carrier; RRH 1 senses alone.
        let p = params(2, 1, vec![1]);
        let ch = ChannelState {
            downlink_gain: vec![1.0, 1.0],
            sensing_gain_sq: vec![1.0, 1.0],
        };
        let mut alloc = Allocation::empty(&p.dims, 0.01);
        serve(&p, &mut alloc, 0, 0, 1.0);
        let res = solve_sensing(&p, &ch, &alloc).unwrap();
        let b = sensing::required_statistic(0.5, &[1.0, 1.0], 0.2, 0.9).unwrap();
        let lo = LAMBDA_FLOOR_REL * p.sensing.lambda_max();
        assert_eq!(res.lambda[0], lo);
        assert!((res.lambda[1] - (b - lo)).abs() < 1e-9);
    }

    #[test]
    fn idle_ties_fill_lowest_index_first() {
        let p = params(3, 1, vec![1]);
        let ch = ChannelState {
            downlink_gain: vec![1.0; 3],
            sensing_gain_sq: vec![1.0; 3],
        };
        let alloc = Allocation::empty(&p.dims, 0.01);
        let res = solve_sensing(&p, &ch, &alloc).unwrap();
        let lo = LAMBDA_FLOOR_REL * p.sensing.lambda_max();
        assert!(res.lambda[0] > lo);
        assert_eq!(res.lambda[1], lo);
        assert_eq!(res.lambda[2], lo);
    }

    /// Exhaustive grid over one sub-carrier's two sensing variables.
    fn grid_best_pair(p: &Params, w: [f64; 2], g: [f64; 2], b: f64) -> f64 {
        let hi = p.sensing.lambda_max();
        let steps = 1000;
        let mut best = f64::NEG_INFINITY;
        for i in 1..=steps {
            let l0 = hi * i as f64 / steps as f64;
            for j in 1..=steps {
                let l1 = hi * j as f64 / steps as f64;
                if g[0] * l0 + g[1] * l1 < b {
                    continue;
                }
                best = best.max(pair_objective(p, w[0], l0) + pair_objective(p, w[1], l1));
            }
        }
        best
    }

    #[test]
    fn matches_grid_search_two_rrhs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..5 {
            let p = params(2, 2, vec![2]);
            let d = &p.dims;
            let ch = ChannelState {
                downlink_gain: (0..d.num_cells()).map(|_| rng.gen_range(0.1..3.0)).collect(),
                sensing_gain_sq: (0..4).map(|_| rng.gen_range(0.05..1.5)).collect(),
            };
            let mut alloc = Allocation::empty(d, 0.01);
            serve(&p, &mut alloc, 0, 0, rng.gen_range(0.5..5.0));
            serve(&p, &mut alloc, 1, 1, rng.gen_range(0.5..5.0));
            let res = solve_sensing(&p, &ch, &alloc).unwrap();
            let problem = SensingProblem::build(&p, &ch, &alloc).unwrap();
            let mut grid_total = 0.0;
            for k in 0..2 {
                let w = [problem.weight[d.rk(0, k)], problem.weight[d.rk(1, k)]];
                let g = [ch.sensing_gain_sq[d.rk(0, k)], ch.sensing_gain_sq[d.rk(1, k)]];
                grid_total += grid_best_pair(&p, w, g, problem.required[k]);
            }
            assert!(res.objective >= grid_total - 1e-9);
            assert!((res.objective - grid_total).abs() <= 1e-3 * grid_total);
        }
    }

    #[test]
    fn slice_rate_shifts_the_burden() {
        // Slice 0 on RRH 0, slice 1 on RRH 1, one sub-carrier; slice 1 reserves
        // nearly its full rate so RRH 0 has to sense more.
        let mut p = params(2, 1, vec![1, 1]);
        let d = p.dims.clone();
        let ch = ChannelState {
            downlink_gain: vec![8.0, 0.1, 0.1, 1.0],
            sensing_gain_sq: vec![0.4, 0.4],
        };
        let mut alloc = Allocation::empty(&d, 0.01);
        serve(&p, &mut alloc, 0, 0, 1.0);
        serve(&p, &mut alloc, 1, 1, 1.0);
        let free = solve_sensing(&p, &ch, &alloc).unwrap();
        let problem = SensingProblem::build(&p, &ch, &alloc).unwrap();
        let w1 = problem.weight[d.rk(1, 0)];
        let free_rate1 = problem.slice_rates(&free.lambda)[1];
        p.radio.reserved_rate = vec![0.0, free_rate1 + 0.5 * (w1 - free_rate1)];
        let bound = solve_sensing(&p, &ch, &alloc).unwrap();
        let rates = problem.slice_rates(&bound.lambda);
        assert!(rates[1] >= p.radio.reserved_rate[1] - 1e-6);
        assert!(bound.slice_multipliers[1] > 0.0);
        assert!(bound.kkt_residual <= 1e-6);
        assert!(bound.objective <= free.objective + 1e-12);

        // grid oracle with the slice-rate filter
        let hi = p.sensing.lambda_max();
        let steps = 1000;
        let mut best = f64::NEG_INFINITY;
        for i in 1..=steps {
            let l0 = hi * i as f64 / steps as f64;
            for j in 1..=steps {
                let l1 = hi * j as f64 / steps as f64;
                let lam = [l0, l1];
                if 0.4 * l0 + 0.4 * l1 < problem.required[0] {
                    continue;
                }
                if problem.slice_rates(&lam)[1] < p.radio.reserved_rate[1] {
                    continue;
                }
                best = best.max(problem.objective(&lam));
            }
        }
        assert!(bound.objective >= best - 1e-9);
        assert!((bound.objective - best).abs() <= 1e-3 * best);
    }

    #[test]
    fn unattainable_slice_rate_names_slice() {
        let mut p = params(2, 1, vec![1, 1]);
        let ch = ChannelState {
            downlink_gain: vec![1.0, 0.1, 0.1, 1.0],
            sensing_gain_sq: vec![0.4, 0.4],
        };
        let mut alloc = Allocation::empty(&p.dims, 0.01);
        serve(&p, &mut alloc, 0, 0, 1.0);
        serve(&p, &mut alloc, 1, 1, 1.0);
        p.radio.reserved_rate = vec![0.0, 100.0];
        assert!(matches!(
            solve_sensing(&p, &ch, &alloc),
            Err(Error::SliceRateInfeasible { slice: 1 })
        ));
    }

    #[test]
    fn slack_slice_rate_keeps_unconstrained_solution() {
        let mut p = params(2, 2, vec![1, 1]);
        let ch = ChannelState {
            downlink_gain: vec![1.0, 0.2, 0.3, 1.0, 1.0, 0.2, 0.3, 1.0],
            sensing_gain_sq: vec![0.4, 0.8, 0.6, 0.3],
        };
        let mut alloc = Allocation::empty(&p.dims, 0.01);
        serve(&p, &mut alloc, 0, 0, 1.0);
        serve(&p, &mut alloc, 1, 1, 1.0);
        let free = solve_sensing(&p, &ch, &alloc).unwrap();
        p.radio.reserved_rate = vec![0.01, 0.01];
        let slack = solve_sensing(&p, &ch, &alloc).unwrap();
        assert_eq!(free.lambda, slack.lambda);
        assert!(slack.slice_multipliers.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn minimal_uniform_tau_meets_target() {
        let p = params(2, 2, vec![1]);
        let ch = ChannelState {
            downlink_gain: vec![1.0; 4],
            sensing_gain_sq: vec![0.4, 0.8, 0.6, 0.3],
        };
        let tau = minimal_uniform_tau(&p, &ch).unwrap();
        for k in 0..2 {
            let taus = [tau[p.dims.rk(0, k)], tau[p.dims.rk(1, k)]];
            let gains = ch.sensing_gains_on(&p.dims, k);
            let pd = detection_probability(&taus, 1e4, 0.5, &gains, 0.2).unwrap();
            assert!((pd - 0.9).abs() < 1e-9);
        }
    }
}
