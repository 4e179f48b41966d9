//! Power block: successive convex approximation of the throughput in the
//! powers, with sensing times and associations fixed.
//!
//! The rate of a served cell is `u - v` with `u = c log2(σ² + I + p h)` and
//! `v = c log2(σ² + I)`, both concave in the power vector. Linearizing `v` at the
//! previous iterate gives a concave minorant that is tight at the anchor; each
//! iteration maximizes it under the per-RRH budgets and the surrogate slice
//! rates, so the true throughput never decreases.
//!
//! Only cells with `β = 1` carry power. Power on an unserved cell adds
//! interference and no rate, so pinning it to zero loses nothing.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{interference_at, Allocation, ChannelState, Params};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerOptions {
    /// Stop when `‖p(l) − p(l−1)‖ ≤ zeta (1 + ‖p(l)‖)`.
    pub zeta: f64,
    pub max_iters: usize,
    /// Projected-gradient steps per convex subproblem.
    pub inner_max_iters: usize,
    /// Multiplier updates per subproblem when a slice rate binds.
    pub dual_rounds: usize,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            zeta: 1e-3,
            max_iters: 200,
            inner_max_iters: 50,
            dual_rounds: 40,
        }
    }
}

/// One SCA iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcIterate {
    /// Power per cell in watts.
    pub p: Vec<f64>,
    /// Surrogate objective at `p`, anchored at the previous iterate.
    pub surrogate_objective: f64,
    pub true_objective: f64,
    /// Relative projected-gradient norm of the subproblem at its solution.
    pub inner_kkt_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSolveResult {
    pub final_iterate: DcIterate,
    /// Every iterate, starting with the (masked) initial point.
    pub history: Vec<DcIterate>,
    pub converged: bool,
}

/// `c = β ((T − τ)/T) P⁰ (1 − P_fa)` per cell.
pub fn cell_coefficients(params: &Params, alloc: &Allocation) -> Vec<f64> {
    let dims = &params.dims;
    let mut c = vec![0.0; dims.num_cells()];
    for r in 0..dims.num_rrhs {
        for k in 0..dims.num_subcarriers {
            let tau = alloc.tau[dims.rk(r, k)].clamp(0.0, params.sensing.frame_len);
            let factor = params.rate_factor(tau, k);
            for n in 0..dims.num_users() {
                let cell = dims.cell(r, k, n);
                if alloc.beta[cell] {
                    c[cell] = factor;
                }
            }
        }
    }
    c
}

/// The concave pair `(u, v)` per cell; `u − v` is the approximate throughput.
pub fn dc_split(params: &Params, channel: &ChannelState, alloc: &Allocation) -> (Vec<f64>, Vec<f64>) {
    let dims = &params.dims;
    let c = cell_coefficients(params, alloc);
    let sigma = params.radio.noise_power;
    let mut u = vec![0.0; dims.num_cells()];
    let mut v = vec![0.0; dims.num_cells()];
    for r in 0..dims.num_rrhs {
        for k in 0..dims.num_subcarriers {
            for n in 0..dims.num_users() {
                let cell = dims.cell(r, k, n);
                let i = interference_at(dims, n, r, k, alloc, channel);
                let signal = alloc.power[cell] * channel.downlink_gain[cell];
                u[cell] = c[cell] * (sigma + i + signal).log2();
                v[cell] = c[cell] * (sigma + i).log2();
            }
        }
    }
    (u, v)
}

/// Gradient of `Σ v` with respect to every cell power.
///
/// A cell's own power does not enter its `v`. The power `p_{r',k,n'}` enters
/// the `v` of every cell `(r, k, n)` with `r ≠ r'` and `n ≠ n'` through the gain
/// `h_{r',k,n}`.
pub fn v_gradient(params: &Params, channel: &ChannelState, alloc: &Allocation) -> Vec<f64> {
    let dims = &params.dims;
    let c = cell_coefficients(params, alloc);
    let sigma = params.radio.noise_power;
    let nu = dims.num_users();
    let mut grad = vec![0.0; dims.num_cells()];
    for r in 0..dims.num_rrhs {
        for k in 0..dims.num_subcarriers {
            for n in 0..nu {
                let cell = dims.cell(r, k, n);
                if c[cell] == 0.0 {
                    continue;
                }
                let scale = c[cell] / (LN_2 * (interference_at(dims, n, r, k, alloc, channel) + sigma));
                for rp in (0..dims.num_rrhs).filter(|&rp| rp != r) {
                    let h = channel.downlink_gain[dims.cell(rp, k, n)];
                    for np in (0..nu).filter(|&np| np != n) {
                        grad[dims.cell(rp, k, np)] += scale * h;
                    }
                }
            }
        }
    }
    grad
}

/// Per-cell minorant `u(p) − v(q) − ∇v(q)·(p − q)` anchored at `anchor.power`.
pub fn surrogate_throughput(params: &Params, channel: &ChannelState, anchor: &Allocation, p: &[f64]) -> Vec<f64> {
    let dims = &params.dims;
    let c = cell_coefficients(params, anchor);
    let sigma = params.radio.noise_power;
    let mut at_p = anchor.clone();
    at_p.power = p.to_vec();
    let mut out = vec![0.0; dims.num_cells()];
    for r in 0..dims.num_rrhs {
        for k in 0..dims.num_subcarriers {
            for n in 0..dims.num_users() {
                let cell = dims.cell(r, k, n);
                if c[cell] == 0.0 {
                    continue;
                }
                let iq = interference_at(dims, n, r, k, anchor, channel);
                let ip = interference_at(dims, n, r, k, &at_p, channel);
                out[cell] = c[cell] * surrogate_term(sigma + iq, ip - iq, p[cell] * channel.downlink_gain[cell]);
            }
        }
    }
    out
}

/// `log2(D/E) − ΔI/(ln2 E)` with `D = E + ΔI + signal`.
#[inline]
fn surrogate_term(e: f64, delta_i: f64, signal: f64) -> f64 {
    ((delta_i + signal) / e).ln_1p() / LN_2 - delta_i / (LN_2 * e)
}

/// Compact view of the served cells.
struct PowerProblem {
    cells: Vec<usize>,
    coeff: Vec<f64>,
    gain: Vec<f64>,
    slice: Vec<usize>,
    /// Per active cell: `(j, g)` for each active interferer `j`.
    interferers: Vec<Vec<(usize, f64)>>,
    /// Transpose of `interferers`: cells that `j` interferes with.
    victims: Vec<Vec<(usize, f64)>>,
    /// Active cell indices per RRH and that RRH's budget.
    groups: Vec<(Vec<usize>, f64)>,
    noise: f64,
    reserved: Vec<f64>,
}

/// Interference and `σ² + I` at an anchor.
struct Anchor {
    interference: Vec<f64>,
    denom: Vec<f64>,
}

impl PowerProblem {
    fn build(params: &Params, channel: &ChannelState, fixed: &Allocation) -> Self {
        let dims = &params.dims;
        let coeff_all = cell_coefficients(params, fixed);
        let slice_of = dims.slice_of_users();
        let nu = dims.num_users();
        let mut cells = Vec::new();
        let mut groups = Vec::new();
        let mut rrh_of = Vec::new();
        for r in 0..dims.num_rrhs {
            let mut members = Vec::new();
            for k in 0..dims.num_subcarriers {
                for n in 0..nu {
                    let cell = dims.cell(r, k, n);
                    if fixed.beta[cell] {
                        members.push(cells.len());
                        cells.push(cell);
                        rrh_of.push(r);
                    }
                }
            }
            groups.push((members, params.radio.max_power[r]));
        }
        let decode = |cell: usize| {
            let n = cell % nu;
            let rk = cell / nu;
            (rk / dims.num_subcarriers, rk % dims.num_subcarriers, n)
        };
        let mut interferers = vec![Vec::new(); cells.len()];
        let mut victims = vec![Vec::new(); cells.len()];
        for (i, &ci) in cells.iter().enumerate() {
            let (r, k, n) = decode(ci);
            for (j, &cj) in cells.iter().enumerate() {
                let (rp, kp, np) = decode(cj);
                if rp != r && kp == k && np != n {
                    let g = channel.downlink_gain[dims.cell(rp, k, n)];
                    interferers[i].push((j, g));
                    victims[j].push((i, g));
                }
            }
        }
        Self {
            coeff: cells.iter().map(|&c| coeff_all[c]).collect(),
            gain: cells.iter().map(|&c| channel.downlink_gain[c]).collect(),
            slice: cells.iter().map(|&c| slice_of[c % nu]).collect(),
            cells,
            interferers,
            victims,
            groups,
            noise: params.radio.noise_power,
            reserved: params.radio.reserved_rate.clone(),
        }
    }

    fn interference(&self, p: &[f64], i: usize) -> f64 {
        self.interferers[i].iter().map(|&(j, g)| p[j] * g).sum()
    }

    fn anchor(&self, q: &[f64]) -> Anchor {
        let interference: Vec<f64> = (0..self.cells.len()).map(|i| self.interference(q, i)).collect();
        let denom = interference.iter().map(|&i| i + self.noise).collect();
        Anchor { interference, denom }
    }

    fn true_rates(&self, p: &[f64]) -> Vec<f64> {
        (0..self.cells.len())
            .map(|i| {
                let e = self.noise + self.interference(p, i);
                self.coeff[i] * (p[i] * self.gain[i] / e).ln_1p() / LN_2
            })
            .collect()
    }

    fn surrogate_rates(&self, p: &[f64], a: &Anchor) -> Vec<f64> {
        (0..self.cells.len())
            .map(|i| {
                let di = self.interference(p, i) - a.interference[i];
                self.coeff[i] * surrogate_term(a.denom[i], di, p[i] * self.gain[i])
            })
            .collect()
    }

    fn slice_totals(&self, rates: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.reserved.len()];
        for (i, &v) in rates.iter().enumerate() {
            out[self.slice[i]] += v;
        }
        out
    }

    /// Gradient of `Σ ω_i S_i` at `p`.
    fn surrogate_grad(&self, p: &[f64], a: &Anchor, omega: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = (0..self.cells.len())
            .map(|i| self.noise + self.interference(p, i) + p[i] * self.gain[i])
            .collect();
        (0..self.cells.len())
            .map(|j| {
                let own = omega[j] * self.coeff[j] * self.gain[j] / (LN_2 * d[j]);
                let cross: f64 = self.victims[j]
                    .iter()
                    .map(|&(i, g)| omega[i] * self.coeff[i] * g / LN_2 * (1.0 / d[i] - 1.0 / a.denom[i]))
                    .sum();
                own + cross
            })
            .collect()
    }

    /// Gradient of the true objective (the surrogate gradient anchored at `p`).
    fn true_grad(&self, p: &[f64]) -> Vec<f64> {
        let a = self.anchor(p);
        self.surrogate_grad(p, &a, &vec![1.0; self.cells.len()])
    }

    fn project(&self, p: &mut [f64]) {
        for (members, budget) in &self.groups {
            project_budget(p, members, *budget);
        }
    }

    fn weighted(&self, rates: &[f64], omega: &[f64]) -> f64 {
        rates.iter().zip(omega).map(|(r, w)| r * w).sum()
    }

    /// Projected gradient ascent on `Σ ω_i S_i` over the budgets, from `start`.
    fn maximize_surrogate(&self, start: &[f64], a: &Anchor, omega: &[f64], max_iters: usize) -> Vec<f64> {
        let mut p = start.to_vec();
        let mut f = self.weighted(&self.surrogate_rates(&p, a), omega);
        let mut g = self.surrogate_grad(&p, a, omega);
        let mut step = initial_step(&p, &g, &self.groups);
        for _ in 0..max_iters {
            let mut accepted = None;
            let mut t = step;
            for _ in 0..60 {
                let mut cand: Vec<f64> = p.iter().zip(&g).map(|(x, d)| x + t * d).collect();
                self.project(&mut cand);
                let fc = self.weighted(&self.surrogate_rates(&cand, a), omega);
                let dir: f64 = cand.iter().zip(&p).zip(&g).map(|((c, x), d)| (c - x) * d).sum();
                if fc >= f + 1e-4 * dir {
                    accepted = Some((cand, fc));
                    break;
                }
                t *= 0.5;
            }
            let Some((next, fn_)) = accepted else { break };
            let s: Vec<f64> = next.iter().zip(&p).map(|(a, b)| a - b).collect();
            let s_norm = norm(&s);
            let g_next = self.surrogate_grad(&next, a, omega);
            let sy: f64 = s.iter().zip(g_next.iter().zip(&g)).map(|(s, (gn, go))| s * (gn - go)).sum();
            let ss: f64 = s.iter().map(|v| v * v).sum();
            let gain = fn_ - f;
            p = next;
            f = fn_;
            g = g_next;
            if s_norm <= 1e-12 * (1.0 + norm(&p)) || gain <= 1e-13 * f.abs().max(1.0) {
                break;
            }
            step = if sy < 0.0 { ss / -sy } else { t * 2.0 };
        }
        p
    }

    fn projected_grad_residual(&self, p: &[f64], g: &[f64]) -> f64 {
        let mut moved: Vec<f64> = p.iter().zip(g).map(|(x, d)| x + d).collect();
        self.project(&mut moved);
        let diff: Vec<f64> = moved.iter().zip(p).map(|(a, b)| a - b).collect();
        norm(&diff)
    }

    fn slack_ok(&self, totals: &[f64], tol: f64) -> bool {
        totals.iter().zip(&self.reserved).all(|(&t, &r)| t >= r - tol)
    }

    /// One SCA step from anchor `q`: returns the next iterate and its
    /// surrogate objective and subproblem residual.
    fn step(&self, q: &[f64], options: &PowerOptions) -> (Vec<f64>, f64, f64) {
        let a = self.anchor(q);
        let m = self.cells.len();
        let ones = vec![1.0; m];
        let base_obj: f64 = self.surrogate_rates(q, &a).iter().sum();

        let mut target = self.maximize_surrogate(q, &a, &ones, options.inner_max_iters);
        let mut omega = ones.clone();
        let totals = self.slice_totals(&self.surrogate_rates(&target, &a));
        if !self.slack_ok(&totals, 0.0) {
            let mut mu = vec![0.0; self.reserved.len()];
            for _ in 0..options.dual_rounds {
                let totals = self.slice_totals(&self.surrogate_rates(&target, &a));
                let mut changed = false;
                for s in 0..mu.len() {
                    let gap = (self.reserved[s] - totals[s]) / self.reserved[s].max(1.0);
                    let next = (mu[s] + 2.0 * gap).max(0.0);
                    if next != mu[s] {
                        changed = true;
                    }
                    mu[s] = next;
                }
                omega = (0..m).map(|i| 1.0 + mu[self.slice[i]]).collect();
                target = self.maximize_surrogate(&target, &a, &omega, options.inner_max_iters);
                if !changed {
                    break;
                }
            }
        }

        // Pull back toward the anchor until the slice rates and the ascent hold.
        let blend = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = q.iter().zip(&target).map(|(a, b)| a + t * (b - a)).collect();
            self.project(&mut p);
            p
        };
        let accept = |p: &[f64]| {
            let rates = self.surrogate_rates(p, &a);
            rates.iter().sum::<f64>() >= base_obj && self.slack_ok(&self.slice_totals(&rates), 0.0)
        };
        let mut next = blend(1.0);
        if !accept(&next) {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..50 {
                let mid = 0.5 * (lo + hi);
                if accept(&blend(mid)) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            next = if lo > 0.0 { blend(lo) } else { q.to_vec() };
        }
        let sur: f64 = self.surrogate_rates(&next, &a).iter().sum();
        let g = self.surrogate_grad(&next, &a, &omega);
        let resid = self.projected_grad_residual(&next, &g) / (1.0 + norm(&next));
        (next, sur, resid)
    }

    fn expand(&self, p: &[f64], num_cells: usize) -> Vec<f64> {
        let mut full = vec![0.0; num_cells];
        for (i, &c) in self.cells.iter().enumerate() {
            full[c] = p[i];
        }
        full
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn initial_step(p: &[f64], g: &[f64], groups: &[(Vec<usize>, f64)]) -> f64 {
    let gmax = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let scale = groups.iter().map(|(_, b)| *b).fold(0.0_f64, f64::max).max(norm(p));
    if gmax > 0.0 && scale > 0.0 {
        0.1 * scale / gmax
    } else {
        1.0
    }
}

/// Euclidean projection of `p[members]` onto `{x ≥ 0, Σ x ≤ budget}`; the
/// budget then holds exactly in floating point.
fn project_budget(p: &mut [f64], members: &[usize], budget: f64) {
    for &i in members {
        p[i] = p[i].max(0.0);
    }
    let total: f64 = members.iter().map(|&i| p[i]).sum();
    if total > budget {
        let mut vals: Vec<f64> = members.iter().map(|&i| p[i]).collect();
        vals.sort_by(|a, b| b.total_cmp(a));
        let mut acc = 0.0;
        let mut theta = 0.0;
        for (j, v) in vals.iter().enumerate() {
            acc += v;
            let t = (acc - budget) / (j + 1) as f64;
            if j + 1 == vals.len() || vals[j + 1] <= t {
                theta = t;
                break;
            }
        }
        for &i in members {
            p[i] = (p[i] - theta).max(0.0);
        }
    }
    let mut total: f64 = members.iter().map(|&i| p[i]).sum();
    while total > budget {
        let f = budget / total * (1.0 - f64::EPSILON);
        for &i in members {
            p[i] *= f;
        }
        total = members.iter().map(|&i| p[i]).sum();
    }
}

/// Norm of `Proj(p + ∇R(p)) − p` for the true objective over the served cells.
pub fn projected_gradient_norm(params: &Params, channel: &ChannelState, alloc: &Allocation) -> f64 {
    let prob = PowerProblem::build(params, channel, alloc);
    let p: Vec<f64> = prob.cells.iter().map(|&c| alloc.power[c]).collect();
    let g = prob.true_grad(&p);
    prob.projected_grad_residual(&p, &g)
}

/// Run the SCA iterations from `fixed.power`, restricted to the served cells.
pub fn solve_power(
    params: &Params,
    channel: &ChannelState,
    fixed: &Allocation,
    options: &PowerOptions,
) -> Result<PowerSolveResult> {
    let num_cells = params.dims.num_cells();
    let prob = PowerProblem::build(params, channel, fixed);
    let mut q: Vec<f64> = prob.cells.iter().map(|&c| fixed.power[c]).collect();
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("power", "must be finite"));
    }
    prob.project(&mut q);

    let start_rates = prob.true_rates(&q);
    let totals = prob.slice_totals(&start_rates);
    for (s, (&t, &r)) in totals.iter().zip(&prob.reserved).enumerate() {
        if t < r - 1e-6 {
            return Err(Error::SliceRateInfeasible { slice: s });
        }
    }
    let start_obj: f64 = start_rates.iter().sum();
    let mut history = vec![DcIterate {
        p: prob.expand(&q, num_cells),
        surrogate_objective: start_obj,
        true_objective: start_obj,
        inner_kkt_residual: f64::NAN,
    }];
    let mut converged = prob.cells.is_empty();
    for _ in 0..options.max_iters {
        if converged {
            break;
        }
        let (next, sur, resid) = prob.step(&q, options);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::PowerNotConverged { residual: resid });
        }
        let delta: Vec<f64> = next.iter().zip(&q).map(|(a, b)| a - b).collect();
        let change = norm(&delta) / (1.0 + norm(&next));
        history.push(DcIterate {
            p: prob.expand(&next, num_cells),
            surrogate_objective: sur,
            true_objective: prob.true_rates(&next).iter().sum(),
            inner_kkt_residual: resid,
        });
        q = next;
        converged = change <= options.zeta;
    }
    let final_iterate = history.last().expect("history holds the start point").clone();
    Ok(PowerSolveResult {
        final_iterate,
        history,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{approx_throughput, total_approx_throughput, NetworkDims, RadioParams, SensingParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(nr: usize, nk: usize, users: usize, reserved: f64) -> Params {
        Params {
            dims: NetworkDims::uniform(1, nr, 1, nk, users, 10, 10),
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
                reserved_rate: vec![reserved],
            },
        }
    }

    /// Random instance where every RRH serves a random user on every sub-carrier.
    fn random_instance(rng: &mut ChaCha8Rng, nr: usize, nk: usize, users: usize) -> (Params, ChannelState, Allocation) {
        let p = params(nr, nk, users, 0.0);
        let d = &p.dims;
        let ch = ChannelState {
            downlink_gain: (0..d.num_cells()).map(|_| rng.gen_range(0.05..3.0)).collect(),
            sensing_gain_sq: vec![1.0; nr * nk],
        };
        let mut alloc = Allocation::empty(d, rng.gen_range(0.001..0.05));
        for r in 0..nr {
            for k in 0..nk {
                let n = rng.gen_range(0..users);
                let c = d.cell(r, k, n);
                alloc.beta[c] = true;
                alloc.power[c] = 10.0 / nk as f64 * rng.gen_range(0.1..1.0);
            }
        }
        (p, ch, alloc)
    }

    #[test]
    fn dc_split_matches_throughput() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (p, ch, alloc) = random_instance(&mut rng, 3, 2, 3);
            let (u, v) = dc_split(&p, &ch, &alloc);
            let d = &p.dims;
            for r in 0..3 {
                for k in 0..2 {
                    for n in 0..3 {
                        let c = d.cell(r, k, n);
                        let t = approx_throughput(&p, r, k, n, &alloc, &ch, 0.2).unwrap();
                        assert!((u[c] - v[c] - t).abs() <= 1e-12 * t.max(1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn dc_split_zero_power_and_no_interference() {
        let p = params(1, 1, 1, 0.0);
        let ch = ChannelState {
            downlink_gain: vec![2.0],
            sensing_gain_sq: vec![1.0],
        };
        let mut alloc = Allocation::empty(&p.dims, 0.01);
        alloc.beta[0] = true;
        let (u, v) = dc_split(&p, &ch, &alloc);
        assert_eq!(u[0], v[0]);
        alloc.power[0] = 3.0;
        let (u, v) = dc_split(&p, &ch, &alloc);
        let c = p.rate_factor(0.01, 0);
        assert!((u[0] - v[0] - c * (7.0f64).log2()).abs() < 1e-12);
    }

    #[test]
    fn v_gradient_single_rrh_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (p, ch, alloc) = random_instance(&mut rng, 1, 3, 2);
        assert!(v_gradient(&p, &ch, &alloc).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn v_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (p, ch, mut alloc) = random_instance(&mut rng, 3, 2, 3);
            // power on unserved cells too, so every partial is exercised
            for v in alloc.power.iter_mut() {
                if *v == 0.0 {
                    *v = rng.gen_range(0.0..1.0);
                }
            }
            let grad = v_gradient(&p, &ch, &alloc);
            let h = 1e-6 * 10.0;
            for c in 0..p.dims.num_cells() {
                let mut up = alloc.clone();
                up.power[c] += h;
                let mut dn = alloc.clone();
                dn.power[c] -= h;
                let sum = |a: &Allocation| dc_split(&p, &ch, a).1.iter().sum::<f64>();
                let fd = (sum(&up) - sum(&dn)) / (2.0 * h);
                assert!((grad[c] - fd).abs() <= 1e-6 * grad[c].abs().max(1e-3), "{} vs {}", grad[c], fd);
            }
            // own-power entries vanish when nobody else is served
            let own = alloc.beta.iter().position(|&b| b).unwrap();
            let mut lone = Allocation::empty(&p.dims, 0.01);
            lone.beta[own] = true;
            lone.power[own] = 1.0;
            assert_eq!(v_gradient(&p, &ch, &lone)[own], 0.0);
        }
    }

    #[test]
    fn surrogate_is_tight_minorant() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let (p, ch, alloc) = random_instance(&mut rng, 2, 2, 2);
            let at_anchor: f64 = surrogate_throughput(&p, &ch, &alloc, &alloc.power).iter().sum();
            let truth = total_approx_throughput(&p, &alloc, &ch);
            assert!((at_anchor - truth).abs() <= 1e-12 * truth.max(1.0));
            for _ in 0..200 {
                let q: Vec<f64> = alloc
                    .power
                    .iter()
                    .zip(&alloc.beta)
                    .map(|(_, &b)| if b { rng.gen_range(0.0..10.0) } else { 0.0 })
                    .collect();
                let mut at_q = alloc.clone();
                at_q.power = q.clone();
                let sur: f64 = surrogate_throughput(&p, &ch, &alloc, &q).iter().sum();
                assert!(sur <= total_approx_throughput(&p, &at_q, &ch) + 1e-9);
            }
        }
    }

    #[test]
    fn single_rrh_surrogate_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let (p, ch, alloc) = random_instance(&mut rng, 1, 2, 2);
        let q: Vec<f64> = alloc.power.iter().map(|v| v * 0.3).collect();
        let mut at_q = alloc.clone();
        at_q.power = q.clone();
        let sur: f64 = surrogate_throughput(&p, &ch, &alloc, &q).iter().sum();
        assert!((sur - total_approx_throughput(&p, &at_q, &ch)).abs() < 1e-12);
    }

    #[test]
    fn single_cell_uses_full_budget() {
        let p = params(1, 1, 1, 0.0);
        let ch = ChannelState {
            downlink_gain: vec![0.7],
            sensing_gain_sq: vec![1.0],
        };
        let mut alloc = Allocation::empty(&p.dims, 0.01);
        alloc.beta[0] = true;
        alloc.power[0] = 1.0;
        let res = solve_power(&p, &ch, &alloc, &PowerOptions::default()).unwrap();
        assert_eq!(res.final_iterate.p[0], 10.0);
        assert!(res.converged);
    }

    #[test]
    fn zero_gain_cell_gets_no_power() {
        let p = params(1, 2, 2, 0.0);
        let d = &p.dims;
        let mut ch = ChannelState {
            downlink_gain: vec![1.0; d.num_cells()],
            sensing_gain_sq: vec![1.0; 2],
        };
        ch.downlink_gain[d.cell(0, 1, 1)] = 0.0;
        let mut alloc = Allocation::empty(d, 0.01);
        for (k, n) in [(0, 0), (1, 1)] {
            alloc.beta[d.cell(0, k, n)] = true;
            alloc.power[d.cell(0, k, n)] = 5.0;
        }
        let res = solve_power(&p, &ch, &alloc, &PowerOptions::default()).unwrap();
        assert_eq!(res.final_iterate.p[d.cell(0, 1, 1)], 0.0);
        assert_eq!(res.final_iterate.p[d.cell(0, 0, 0)], 10.0);
    }

    #[test]
    fn water_filling_matches_grid() {
        // one RRH, two sub-carriers, different gains: the split is interior
        let p = params(1, 2, 1, 0.0);
        let d = &p.dims;
        let ch = ChannelState {
            downlink_gain: vec![1.0, 0.25],
            sensing_gain_sq: vec![1.0; 2],
        };
        let mut alloc = Allocation::empty(d, 0.01);
        alloc.beta = vec![true, true];
        alloc.power = vec![5.0, 5.0];
        let opts = PowerOptions {
            zeta: 1e-10,
            ..PowerOptions::default()
        };
        let res = solve_power(&p, &ch, &alloc, &opts).unwrap();
        let c = p.rate_factor(0.01, 0);
        let obj = |a: f64| c * ((1.0 + a).log2() + (1.0 + 0.25 * (10.0 - a)).log2());
        let best = (0..=100_000).map(|i| obj(i as f64 * 1e-4)).fold(f64::MIN, f64::max);
        assert!((res.final_iterate.true_objective - best).abs() <= 1e-6 * best);
        // water level: 1/1 + p0 = 1/0.25 + p1, p0 + p1 = 10 → p0 = 6.5
        assert!((res.final_iterate.p[0] - 6.5).abs() < 1e-4);
        let mut fin = alloc.clone();
        fin.power = res.final_iterate.p.clone();
        assert!(projected_gradient_norm(&p, &ch, &fin) <= 1e-4);
    }

    #[test]
    fn interference_case_matches_grid() {
        let p = params(2, 1, 2, 0.0);
        let d = &p.dims;
        let ch = ChannelState {
            downlink_gain: vec![1.0, 0.4, 0.3, 0.8],
            sensing_gain_sq: vec![1.0; 2],
        };
        let mut alloc = Allocation::empty(d, 0.01);
        alloc.beta[d.cell(0, 0, 0)] = true;
        alloc.beta[d.cell(1, 0, 1)] = true;
        alloc.power[d.cell(0, 0, 0)] = 2.0;
        alloc.power[d.cell(1, 0, 1)] = 2.0;
        let res = solve_power(&p, &ch, &alloc, &PowerOptions::default()).unwrap();
        let steps = 1000;
        let mut best = f64::MIN;
        for i in 0..=steps {
            for j in 0..=steps {
                let mut a = alloc.clone();
                a.power[d.cell(0, 0, 0)] = 10.0 * i as f64 / steps as f64;
                a.power[d.cell(1, 0, 1)] = 10.0 * j as f64 / steps as f64;
                best = best.max(total_approx_throughput(&p, &a, &ch));
            }
        }
        let got = res.final_iterate.true_objective;
        assert!(got <= best + 1e-9 * best);
        assert!((got - best).abs() <= 1e-3 * best, "{got} vs {best}");
    }

    #[test]
    fn iterates_ascend_and_stay_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..15 {
            let (mut p, ch, alloc) = random_instance(&mut rng, 3, 3, 3);
            let start = crate::model::slice_rates(&p, &alloc, &ch)[0];
            p.radio.reserved_rate = vec![0.9 * start];
            let res = solve_power(&p, &ch, &alloc, &PowerOptions::default()).unwrap();
            for w in res.history.windows(2) {
                assert!(w[1].true_objective >= w[0].true_objective - 1e-9);
            }
            for it in &res.history {
                for r in 0..3 {
                    let total: f64 = (0..3)
                        .flat_map(|k| (0..3).map(move |n| (k, n)))
                        .map(|(k, n)| it.p[p.dims.cell(r, k, n)])
                        .sum();
                    assert!(total <= 10.0);
                    assert!(it.p.iter().all(|&v| v >= 0.0));
                }
                let mut a = alloc.clone();
                a.power = it.p.clone();
                let rate = crate::model::slice_rates(&p, &a, &ch)[0];
                assert!(rate >= p.radio.reserved_rate[0] - 1e-6);
            }
        }
    }

    #[test]
    fn binding_slice_rate_is_respected() {
        // slice 1 sits on the weak cell; its reserved rate forces power there
        let mut p = params(1, 2, 1, 0.0);
        p.dims = NetworkDims::uniform(2, 1, 1, 2, 1, 10, 10);
        p.radio.reserved_rate = vec![0.0, 0.0];
        let d = p.dims.clone();
        let ch = ChannelState {
            downlink_gain: vec![4.0, 0.01, 0.01, 0.05],
            sensing_gain_sq: vec![1.0; 2],
        };
        let mut alloc = Allocation::empty(&d, 0.01);
        alloc.beta[d.cell(0, 0, 0)] = true;
        alloc.beta[d.cell(0, 1, 1)] = true;
        alloc.power[d.cell(0, 0, 0)] = 2.0;
        alloc.power[d.cell(0, 1, 1)] = 5.0;
        let free = solve_power(&p, &ch, &alloc, &PowerOptions::default()).unwrap();
        let mut a = alloc.clone();
        a.power = free.final_iterate.p.clone();
        let start_rate1 = crate::model::slice_rates(&p, &alloc, &ch)[1];
        assert!(crate::model::slice_rates(&p, &a, &ch)[1] < start_rate1);
        p.radio.reserved_rate = vec![0.0, start_rate1];
        let bound = solve_power(&p, &ch, &alloc, &PowerOptions::default()).unwrap();
        for it in &bound.history {
            let mut a = alloc.clone();
            a.power = it.p.clone();
            assert!(crate::model::slice_rates(&p, &a, &ch)[1] >= start_rate1 - 1e-6);
        }
        assert!(bound.final_iterate.true_objective > bound.history[0].true_objective);
        // the weak cell keeps its power, the strong one takes the rest
        assert!((bound.final_iterate.p[d.cell(0, 1, 1)] - 5.0).abs() < 1e-2);
    }

    #[test]
    fn infeasible_start_is_reported() {
        let mut p = params(1, 1, 1, 100.0);
        p.radio.reserved_rate = vec![100.0];
        let ch = ChannelState {
            downlink_gain: vec![1.0],
            sensing_gain_sq: vec![1.0],
        };
        let mut alloc = Allocation::empty(&p.dims, 0.01);
        alloc.beta[0] = true;
        alloc.power[0] = 1.0;
        assert!(matches!(
            solve_power(&p, &ch, &alloc, &PowerOptions::default()),
            Err(Error::SliceRateInfeasible { slice: 0 })
        ));
    }

    #[test]
    fn projection_is_exact() {
        let mut p = vec![3.0, -1.0, 9.0, 0.5];
        project_budget(&mut p, &[0, 1, 2, 3], 4.0);
        assert!(p.iter().all(|&v| v >= 0.0));
        assert!(p.iter().sum::<f64>() <= 4.0);
        // only the largest entry survives: θ = 9 - 4 = 5
        assert_eq!(p, vec![0.0, 0.0, 4.0, 0.0]);
    }
}
