//! Domain types, SINR/throughput evaluation and the C1–C10 constraint checker.
//!
//! Users are numbered globally, slice-major: slice 0 owns users
//! `0..users_per_slice[0]`, slice 1 the next block, and so on. Dense tensors are
//! flat `Vec`s with the index helpers on [`NetworkDims`]:
//!
//! | tensor            | shape     | index                      |
//! |-------------------|-----------|----------------------------|
//! | `tau`, `h^HU`     | R × K     | `r * K + k`                |
//! | `power`, `beta`, `h` | R × K × N | `(r * K + k) * N + n`   |
//! | `rrh_assoc` (x)   | N × R     | `n * R + r`                |
//! | `bbu_assoc` (f)   | N × B     | `n * B + b`                |
//! | `linkage` (y)     | B × R × N | `(b * R + r) * N + n`      |

use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensing;

/// Cardinalities and capacity limits of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDims {
    pub num_slices: usize,
    pub num_rrhs: usize,
    pub num_bbus: usize,
    pub num_subcarriers: usize,
    /// Users in each slice; length `num_slices`.
    pub users_per_slice: Vec<usize>,
    /// Maximum number of users one BBU can process (O^max).
    pub bbu_user_cap: usize,
    /// Maximum number of users carried by each RRH–BBU fronthaul link, `r * B + b`.
    pub fronthaul_cap: Vec<usize>,
}

impl NetworkDims {
    /// Uniform dimensions: every slice has `users_per_slice` users and every link the same cap.
    pub fn uniform(
        num_slices: usize,
        num_rrhs: usize,
        num_bbus: usize,
        num_subcarriers: usize,
        users_per_slice: usize,
        bbu_user_cap: usize,
        fronthaul_cap: usize,
    ) -> Self {
        Self {
            num_slices,
            num_rrhs,
            num_bbus,
            num_subcarriers,
            users_per_slice: vec![users_per_slice; num_slices],
            bbu_user_cap,
            fronthaul_cap: vec![fronthaul_cap; num_rrhs * num_bbus],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dims.num_slices", self.num_slices),
            ("dims.num_rrhs", self.num_rrhs),
            ("dims.num_bbus", self.num_bbus),
            ("dims.num_subcarriers", self.num_subcarriers),
        ] {
            if v == 0 {
                return Err(Error::invalid(name, "must be >= 1"));
            }
        }
        if self.users_per_slice.len() != self.num_slices {
            return Err(Error::invalid(
                "dims.users_per_slice",
                format!("expected {} entries, got {}", self.num_slices, self.users_per_slice.len()),
            ));
        }
        if self.users_per_slice.iter().any(|&n| n == 0) {
            return Err(Error::invalid("dims.users_per_slice", "every slice needs >= 1 user"));
        }
        if self.fronthaul_cap.len() != self.num_rrhs * self.num_bbus {
            return Err(Error::invalid(
                "dims.fronthaul_cap",
                format!(
                    "expected {} (R x B) entries, got {}",
                    self.num_rrhs * self.num_bbus,
                    self.fronthaul_cap.len()
                ),
            ));
        }
        Ok(())
    }

    pub fn num_users(&self) -> usize {
        self.users_per_slice.iter().sum()
    }

    /// Global user indices belonging to slice `s`.
    pub fn slice_users(&self, s: usize) -> std::ops::Range<usize> {
        let start: usize = self.users_per_slice[..s].iter().sum();
        start..start + self.users_per_slice[s]
    }

    /// Slice of every global user, in user order.
    pub fn slice_of_users(&self) -> Vec<usize> {
        self.users_per_slice
            .iter()
            .enumerate()
            .flat_map(|(s, &n)| std::iter::repeat(s).take(n))
            .collect()
    }

    #[inline]
    pub fn rk(&self, r: usize, k: usize) -> usize {
        r * self.num_subcarriers + k
    }

    #[inline]
    pub fn cell(&self, r: usize, k: usize, n: usize) -> usize {
        (r * self.num_subcarriers + k) * self.num_users() + n
    }

    #[inline]
    pub fn fronthaul(&self, r: usize, b: usize) -> usize {
        self.fronthaul_cap[r * self.num_bbus + b]
    }

    pub fn num_cells(&self) -> usize {
        self.num_rrhs * self.num_subcarriers * self.num_users()
    }
}

/// Spectrum-sensing targets and signal parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingParams {
    /// Target detection probability P̄_d.
    pub target_pd: f64,
    /// Target false-alarm probability per sub-carrier.
    pub target_pfa: Vec<f64>,
    /// Received HVWN SNR γ_p (linear).
    pub hvwn_snr: f64,
    /// Sampling frequency ν_sa in Hz.
    pub sampling_freq: f64,
    /// Frame length T in seconds.
    pub frame_len: f64,
    /// Probability P¹ that the HVWN user is active.
    pub hvwn_active_prob: f64,
}

impl SensingParams {
    pub fn idle_prob(&self) -> f64 {
        1.0 - self.hvwn_active_prob
    }

    /// Largest substituted sensing variable, `sqrt(T * nu_sa)`.
    pub fn lambda_max(&self) -> f64 {
        (self.frame_len * self.sampling_freq).sqrt()
    }

    pub fn validate(&self, num_subcarriers: usize) -> Result<()> {
        if self.target_pfa.len() != num_subcarriers {
            return Err(Error::invalid(
                "sensing.target_pfa",
                format!("expected {num_subcarriers} entries, got {}", self.target_pfa.len()),
            ));
        }
        if !(self.target_pd > 0.0 && self.target_pd < 1.0) {
            return Err(Error::invalid("sensing.target_pd", "must lie in (0, 1)"));
        }
        for &pfa in &self.target_pfa {
            if !(pfa > 0.0 && pfa < self.target_pd) {
                return Err(Error::invalid(
                    "sensing.target_pfa",
                    format!("need 0 < P_fa < P_d, got {pfa}"),
                ));
            }
        }
        if !(self.hvwn_snr > 0.0 && self.hvwn_snr.is_finite()) {
            return Err(Error::invalid("sensing.hvwn_snr", "must be > 0"));
        }
        if !(self.sampling_freq > 0.0 && self.sampling_freq.is_finite()) {
            return Err(Error::invalid("sensing.sampling_freq", "must be > 0"));
        }
        if !(self.frame_len > 0.0 && self.frame_len.is_finite()) {
            return Err(Error::invalid("sensing.frame_len", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.hvwn_active_prob) {
            return Err(Error::invalid("sensing.hvwn_active_prob", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Noise, interference, power budgets and reserved slice rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    /// σ₀² in watts.
    pub noise_power: f64,
    /// I_p in watts: HVWN interference seen by an LVWN receiver.
    pub hvwn_interference: f64,
    /// p^max per RRH in watts.
    pub max_power: Vec<f64>,
    /// ℜ^rsv per slice in bps/Hz.
    pub reserved_rate: Vec<f64>,
}

impl RadioParams {
    pub fn validate(&self, dims: &NetworkDims) -> Result<()> {
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return Err(Error::invalid("radio.noise_power", "must be > 0"));
        }
        if !(self.hvwn_interference >= 0.0 && self.hvwn_interference.is_finite()) {
            return Err(Error::invalid("radio.hvwn_interference", "must be >= 0"));
        }
        if self.max_power.len() != dims.num_rrhs {
            return Err(Error::invalid(
                "radio.max_power",
                format!("expected {} entries, got {}", dims.num_rrhs, self.max_power.len()),
            ));
        }
        if self.max_power.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::invalid("radio.max_power", "every entry must be > 0"));
        }
        if self.reserved_rate.len() != dims.num_slices {
            return Err(Error::invalid(
                "radio.reserved_rate",
                format!("expected {} entries, got {}", dims.num_slices, self.reserved_rate.len()),
            ));
        }
        if self.reserved_rate.iter().any(|&r| !(r >= 0.0 && r.is_finite())) {
            return Err(Error::invalid("radio.reserved_rate", "every entry must be >= 0"));
        }
        Ok(())
    }
}

/// Everything that parameterizes one optimization instance besides the channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub dims: NetworkDims,
    pub sensing: SensingParams,
    pub radio: RadioParams,
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        self.sensing.validate(self.dims.num_subcarriers)?;
        self.radio.validate(&self.dims)
    }

    /// Throughput coefficient of a served cell before the log term:
    /// `((T - tau) / T) * P0 * (1 - P_fa^k)`.
    #[inline]
    pub fn rate_factor(&self, tau: f64, k: usize) -> f64 {
        let t = self.sensing.frame_len;
        ((t - tau) / t) * self.sensing.idle_prob() * (1.0 - self.sensing.target_pfa[k])
    }
}

/// One channel realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    /// Downlink power gain h_{r,k,n}, indexed by [`NetworkDims::cell`].
    pub downlink_gain: Vec<f64>,
    /// Sensing-channel power gain |h^HU_{r,k}|², indexed by [`NetworkDims::rk`].
    pub sensing_gain_sq: Vec<f64>,
}

impl ChannelState {
    pub fn validate(&self, dims: &NetworkDims) -> Result<()> {
        if self.downlink_gain.len() != dims.num_cells() {
            return Err(Error::invalid("channel.downlink_gain", "dimension mismatch"));
        }
        if self.sensing_gain_sq.len() != dims.num_rrhs * dims.num_subcarriers {
            return Err(Error::invalid("channel.sensing_gain_sq", "dimension mismatch"));
        }
        let ok = |v: &f64| *v >= 0.0 && v.is_finite();
        if !self.downlink_gain.iter().all(ok) || !self.sensing_gain_sq.iter().all(ok) {
            return Err(Error::invalid("channel", "gains must be finite and >= 0"));
        }
        Ok(())
    }

    /// Sensing gains of every RRH on sub-carrier `k`.
    pub fn sensing_gains_on(&self, dims: &NetworkDims, k: usize) -> Vec<f64> {
        (0..dims.num_rrhs)
            .map(|r| self.sensing_gain_sq[dims.rk(r, k)])
            .collect()
    }
}

/// Sensing times, powers and binary associations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// τ_{r,k} in seconds.
    pub tau: Vec<f64>,
    /// p_{r,k,n} in watts.
    pub power: Vec<f64>,
    /// β_{r,k,n}: RRH r serves user n on sub-carrier k.
    pub beta: Vec<bool>,
    /// x_{n,r}: user n is connected to RRH r.
    pub rrh_assoc: Vec<bool>,
    /// f_{n,b}: user n is processed by BBU b.
    pub bbu_assoc: Vec<bool>,
    /// y_{b,r,n} = f_{n,b} · x_{n,r}.
    pub linkage: Vec<bool>,
}

impl Allocation {
    /// All-zero allocation with every sensing time set to `tau`.
    pub fn empty(dims: &NetworkDims, tau: f64) -> Self {
        let n = dims.num_users();
        Self {
            tau: vec![tau; dims.num_rrhs * dims.num_subcarriers],
            power: vec![0.0; dims.num_cells()],
            beta: vec![false; dims.num_cells()],
            rrh_assoc: vec![false; n * dims.num_rrhs],
            bbu_assoc: vec![false; n * dims.num_bbus],
            linkage: vec![false; dims.num_bbus * dims.num_rrhs * n],
        }
    }

    pub fn matches(&self, dims: &NetworkDims) -> bool {
        let n = dims.num_users();
        self.tau.len() == dims.num_rrhs * dims.num_subcarriers
            && self.power.len() == dims.num_cells()
            && self.beta.len() == dims.num_cells()
            && self.rrh_assoc.len() == n * dims.num_rrhs
            && self.bbu_assoc.len() == n * dims.num_bbus
            && self.linkage.len() == dims.num_bbus * dims.num_rrhs * n
    }

    /// RRH serving user `n`, if any.
    pub fn rrh_of(&self, dims: &NetworkDims, n: usize) -> Option<usize> {
        (0..dims.num_rrhs).find(|&r| self.rrh_assoc[n * dims.num_rrhs + r])
    }

    /// BBU processing user `n`, if any.
    pub fn bbu_of(&self, dims: &NetworkDims, n: usize) -> Option<usize> {
        (0..dims.num_bbus).find(|&b| self.bbu_assoc[n * dims.num_bbus + b])
    }

    /// User served on `(r, k)`, if any (first in index order when C5 is violated).
    pub fn user_on(&self, dims: &NetworkDims, r: usize, k: usize) -> Option<usize> {
        (0..dims.num_users()).find(|&n| self.beta[dims.cell(r, k, n)])
    }

    /// Recompute `linkage` as the elementwise product of `bbu_assoc` and `rrh_assoc`.
    pub fn refresh_linkage(&mut self, dims: &NetworkDims) {
        let n_users = dims.num_users();
        for b in 0..dims.num_bbus {
            for r in 0..dims.num_rrhs {
                for n in 0..n_users {
                    self.linkage[(b * dims.num_rrhs + r) * n_users + n] = self.bbu_assoc
                        [n * dims.num_bbus + b]
                        && self.rrh_assoc[n * dims.num_rrhs + r];
                }
            }
        }
    }
}

/// Wall-clock seconds spent in each block of the alternating solver.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepTimes {
    pub sensing: f64,
    pub association: f64,
    pub power: f64,
}

/// Outcome summary of a joint solve.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Objective of the starting allocation.
    pub initial_objective: f64,
    /// Summed approximate throughput after each outer iteration (bps/Hz).
    pub objective_trajectory: Vec<f64>,
    /// Largest constraint violation after each outer iteration.
    pub residual_trajectory: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Constraint name → maximum violation of the final allocation.
    pub constraint_residuals: BTreeMap<String, f64>,
    pub wall_times: StepTimes,
    /// Blocks whose result was replaced by the previous values, as `(iteration, step, reason)`.
    pub fallbacks: Vec<(usize, crate::error::Step, String)>,
}

impl SolveReport {
    pub fn max_residual(&self) -> f64 {
        self.constraint_residuals.values().copied().fold(0.0, f64::max)
    }
}

/// SINR with the HVWN user absent: `p h / (σ₀² + I)`.
#[inline]
pub fn sinr_absent(power: f64, gain: f64, interference: f64, noise_power: f64) -> f64 {
    power * gain / (noise_power + interference)
}

/// SINR with the HVWN user present: `p h / (σ₀² + I + I_p)`.
#[inline]
pub fn sinr_present(power: f64, gain: f64, interference: f64, hvwn_interference: f64, noise_power: f64) -> f64 {
    power * gain / (noise_power + interference + hvwn_interference)
}

/// Interference at user `n` served by RRH `r` on sub-carrier `k`: every other
/// RRH's power on `k` towards users other than `n`, through the gain to `n`.
pub fn interference_at(
    dims: &NetworkDims,
    n: usize,
    r: usize,
    k: usize,
    alloc: &Allocation,
    channel: &ChannelState,
) -> f64 {
    let n_users = dims.num_users();
    let mut total = 0.0;
    for rp in (0..dims.num_rrhs).filter(|&rp| rp != r) {
        let h = channel.downlink_gain[dims.cell(rp, k, n)];
        let base = dims.rk(rp, k) * n_users;
        for np in (0..n_users).filter(|&np| np != n) {
            total += alloc.power[base + np] * h;
        }
    }
    total
}

fn check_tau(tau: f64, frame_len: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= frame_len) {
        return Err(Error::Domain(format!(
            "sensing time {tau} outside (0, {frame_len}]"
        )));
    }
    Ok(())
}

/// Average throughput of cell `(r, k, n)` with both HVWN states accounted for.
#[allow(clippy::too_many_arguments)]
pub fn exact_throughput(
    params: &Params,
    r: usize,
    k: usize,
    n: usize,
    alloc: &Allocation,
    channel: &ChannelState,
    pfa_k: f64,
    pd_k: f64,
) -> Result<f64> {
    let dims = &params.dims;
    let s = &params.sensing;
    let tau = alloc.tau[dims.rk(r, k)];
    check_tau(tau, s.frame_len)?;
    let c = dims.cell(r, k, n);
    if !alloc.beta[c] {
        return Ok(0.0);
    }
    let i = interference_at(dims, n, r, k, alloc, channel);
    let (p, h) = (alloc.power[c], channel.downlink_gain[c]);
    let g0 = sinr_absent(p, h, i, params.radio.noise_power);
    let g1 = sinr_present(p, h, i, params.radio.hvwn_interference, params.radio.noise_power);
    let frac = (s.frame_len - tau) / s.frame_len;
    Ok(frac
        * (s.idle_prob() * g0.ln_1p() / LN_2 * (1.0 - pfa_k)
            + s.hvwn_active_prob * g1.ln_1p() / LN_2 * (1.0 - pd_k)))
}

/// Throughput of cell `(r, k, n)` keeping only the HVWN-idle term.
pub fn approx_throughput(
    params: &Params,
    r: usize,
    k: usize,
    n: usize,
    alloc: &Allocation,
    channel: &ChannelState,
    pfa_k: f64,
) -> Result<f64> {
    let dims = &params.dims;
    let s = &params.sensing;
    let tau = alloc.tau[dims.rk(r, k)];
    check_tau(tau, s.frame_len)?;
    let c = dims.cell(r, k, n);
    if !alloc.beta[c] {
        return Ok(0.0);
    }
    let i = interference_at(dims, n, r, k, alloc, channel);
    let g0 = sinr_absent(alloc.power[c], channel.downlink_gain[c], i, params.radio.noise_power);
    Ok((s.frame_len - tau) / s.frame_len * s.idle_prob() * g0.ln_1p() / LN_2 * (1.0 - pfa_k))
}

/// Approximate rate of every served cell using the target false-alarm
/// probabilities, summed per slice. Sensing times are clamped into `[0, T]`.
pub fn slice_rates(params: &Params, alloc: &Allocation, channel: &ChannelState) -> Vec<f64> {
    let dims = &params.dims;
    let slice_of = dims.slice_of_users();
    let mut rates = vec![0.0; dims.num_slices];
    for r in 0..dims.num_rrhs {
        for k in 0..dims.num_subcarriers {
            let tau = alloc.tau[dims.rk(r, k)].clamp(0.0, params.sensing.frame_len);
            let factor = params.rate_factor(tau, k);
            for n in 0..dims.num_users() {
                let c = dims.cell(r, k, n);
                if !alloc.beta[c] {
                    continue;
                }
                let i = interference_at(dims, n, r, k, alloc, channel);
                let g0 = sinr_absent(alloc.power[c], channel.downlink_gain[c], i, params.radio.noise_power);
                rates[slice_of[n]] += factor * g0.ln_1p() / LN_2;
            }
        }
    }
    rates
}

/// Network objective: summed approximate throughput over all cells.
pub fn total_approx_throughput(params: &Params, alloc: &Allocation, channel: &ChannelState) -> f64 {
    slice_rates(params, alloc, channel).iter().sum()
}

/// Maximum violation of each constraint C1–C10; zero means satisfied.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConstraintResiduals {
    pub values: [f64; 10],
}

impl ConstraintResiduals {
    pub const NAMES: [&'static str; 10] = ["C1", "C2", "C3", "C4", "C5", "C6", "C7", "C8", "C9", "C10"];

    /// Residual of constraint `C{index}` (1-based, as named).
    pub fn get(&self, index: usize) -> f64 {
        self.values[index - 1]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, f64)> + '_ {
        Self::NAMES.iter().copied().zip(self.values.iter().copied())
    }

    pub fn to_map(&self) -> BTreeMap<String, f64> {
        self.iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

/// Evaluate every constraint of the joint problem on `alloc`.
///
/// C7 also counts any mismatch between `linkage` and `f · x`. C9 includes
/// negative powers. C10 uses the approximate throughput.
///
/// # Panics
/// If the allocation or channel dimensions do not match `params.dims`.
pub fn check_constraints(params: &Params, alloc: &Allocation, channel: &ChannelState) -> ConstraintResiduals {
    let dims = &params.dims;
    assert!(alloc.matches(dims), "allocation dimensions do not match the network");
    assert_eq!(channel.downlink_gain.len(), dims.num_cells(), "channel dimensions do not match the network");
    let (nr, nb, nk, nu) = (dims.num_rrhs, dims.num_bbus, dims.num_subcarriers, dims.num_users());
    let sp = &params.sensing;
    let mut res = [0.0_f64; 10];

    // C1
    for k in 0..nk {
        let taus: Vec<f64> = (0..nr).map(|r| alloc.tau[dims.rk(r, k)].max(0.0)).collect();
        let gains = channel.sensing_gains_on(dims, k);
        let pd = sensing::detection_probability_unchecked(&taus, sp.sampling_freq, sp.hvwn_snr, &gains, sp.target_pfa[k]);
        res[0] = res[0].max(sp.target_pd - pd);
    }
    // C2
    for &tau in &alloc.tau {
        let v = if tau <= 0.0 { -tau + f64::MIN_POSITIVE } else { tau - sp.frame_len };
        res[1] = res[1].max(v);
    }
    // C3
    for b in 0..nb {
        let load = (0..nu).filter(|&n| alloc.bbu_assoc[n * nb + b]).count();
        res[2] = res[2].max(load as f64 - dims.bbu_user_cap as f64);
    }
    // C4
    for n in 0..nu {
        let links = (0..nr).filter(|&r| alloc.rrh_assoc[n * nr + r]).count();
        res[3] = res[3].max(links as f64 - 1.0);
    }
    // C5, C6
    for r in 0..nr {
        for k in 0..nk {
            let served = (0..nu).filter(|&n| alloc.beta[dims.cell(r, k, n)]).count();
            res[4] = res[4].max(served as f64 - 1.0);
            for n in 0..nu {
                if alloc.beta[dims.cell(r, k, n)] && !alloc.rrh_assoc[n * nr + r] {
                    res[5] = 1.0;
                }
            }
        }
    }
    // C7
    for r in 0..nr {
        for b in 0..nb {
            let mut load = 0usize;
            for n in 0..nu {
                let product = alloc.bbu_assoc[n * nb + b] && alloc.rrh_assoc[n * nr + r];
                if product {
                    load += 1;
                }
                if alloc.linkage[(b * nr + r) * nu + n] != product {
                    res[6] = res[6].max(1.0);
                }
            }
            res[6] = res[6].max(load as f64 - dims.fronthaul(r, b) as f64);
        }
    }
    // C8
    for n in 0..nu {
        let fs = (0..nb).filter(|&b| alloc.bbu_assoc[n * nb + b]).count() as f64;
        let xs = (0..nr).filter(|&r| alloc.rrh_assoc[n * nr + r]).count() as f64;
        res[7] = res[7].max((fs - xs).abs());
    }
    // C9
    for r in 0..nr {
        let mut total = 0.0;
        for k in 0..nk {
            for n in 0..nu {
                let p = alloc.power[dims.cell(r, k, n)];
                res[8] = res[8].max(-p);
                total += p;
            }
        }
        res[8] = res[8].max(total - params.radio.max_power[r]);
    }
    // C10
    let rates = slice_rates(params, alloc, channel);
    for (s, rate) in rates.iter().enumerate() {
        res[9] = res[9].max(params.radio.reserved_rate[s] - rate);
    }

    for v in &mut res {
        *v = v.max(0.0);
    }
    ConstraintResiduals { values: res }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Two RRHs, one BBU, one sub-carrier, two users in one slice.
    pub(crate) fn two_rrh_params() -> Params {
        Params {
            dims: NetworkDims::uniform(1, 2, 1, 1, 2, 4, 4),
            sensing: SensingParams {
                target_pd: 0.9,
                target_pfa: vec![0.1],
                hvwn_snr: 0.5,
                sampling_freq: 1e4,
                frame_len: 0.1,
                hvwn_active_prob: 0.2,
            },
            radio: RadioParams {
                noise_power: 1.0,
                hvwn_interference: 0.5,
                max_power: vec![10.0, 10.0],
                reserved_rate: vec![0.0],
            },
        }
    }

    #[test]
    fn sinr_cases() {
        assert_eq!(sinr_absent(1.0, 1.0, 0.0, 1.0), 1.0);
        assert_eq!(sinr_absent(0.0, 3.0, 1.0, 1.0), 0.0);
        assert!((sinr_absent(2.0, 0.5, 3.0, 1.0) - 0.25).abs() < 1e-15);
        assert_eq!(sinr_present(1.0, 1.0, 0.0, 0.0, 1.0), sinr_absent(1.0, 1.0, 0.0, 1.0));
        assert_eq!(sinr_present(2.0, 0.5, 3.0, 0.0, 1.0), sinr_absent(2.0, 0.5, 3.0, 1.0));
        assert_eq!(sinr_present(1.0, 1.0, 0.0, 1.0, 1.0), 0.5);
        assert!((sinr_present(2.0, 0.5, 3.0, 1.0, 1.0) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn interference_single_rrh_and_zero_power() {
        let p = Params {
            dims: NetworkDims::uniform(1, 1, 1, 2, 3, 4, 4),
            ..two_rrh_params()
        };
        let dims = &p.dims;
        let mut alloc = Allocation::empty(dims, 0.01);
        alloc.power.iter_mut().for_each(|x| *x = 1.0);
        let ch = ChannelState {
            downlink_gain: vec![1.0; dims.num_cells()],
            sensing_gain_sq: vec![1.0; 2],
        };
        assert_eq!(interference_at(dims, 0, 0, 1, &alloc, &ch), 0.0);

        let p2 = two_rrh_params();
        let alloc = Allocation::empty(&p2.dims, 0.01);
        let ch = ChannelState {
            downlink_gain: vec![0.7; p2.dims.num_cells()],
            sensing_gain_sq: vec![1.0; 2],
        };
        assert_eq!(interference_at(&p2.dims, 0, 0, 0, &alloc, &ch), 0.0);
    }

    #[test]
    fn interference_hand_sum() {
        // R = 2, K = 1, users 0 and 1.
        let p = two_rrh_params();
        let d = &p.dims;
        let mut alloc = Allocation::empty(d, 0.01);
        alloc.power[d.cell(0, 0, 0)] = 1.0;
        alloc.power[d.cell(0, 0, 1)] = 2.0;
        alloc.power[d.cell(1, 0, 0)] = 3.0;
        alloc.power[d.cell(1, 0, 1)] = 4.0;
        let mut ch = ChannelState {
            downlink_gain: vec![0.0; d.num_cells()],
            sensing_gain_sq: vec![1.0; 2],
        };
        ch.downlink_gain[d.cell(0, 0, 0)] = 0.5;
        ch.downlink_gain[d.cell(0, 0, 1)] = 0.25;
        ch.downlink_gain[d.cell(1, 0, 0)] = 0.125;
        ch.downlink_gain[d.cell(1, 0, 1)] = 2.0;
        // user 0 at RRH 0: r' = 1, n' = 1 → p[1,0,1] * h[1,0,0] = 4 * 0.125
        assert_eq!(interference_at(d, 0, 0, 0, &alloc, &ch), 0.5);
        // user 1 at RRH 0: r' = 1, n' = 0 → p[1,0,0] * h[1,0,1] = 3 * 2
        assert_eq!(interference_at(d, 1, 0, 0, &alloc, &ch), 6.0);
        // user 0 at RRH 1: r' = 0, n' = 1 → p[0,0,1] * h[0,0,0] = 2 * 0.5
        assert_eq!(interference_at(d, 0, 1, 0, &alloc, &ch), 1.0);
        // user 1 at RRH 1: r' = 0, n' = 0 → p[0,0,0] * h[0,0,1] = 1 * 0.25
        assert_eq!(interference_at(d, 1, 1, 0, &alloc, &ch), 0.25);
    }

    fn single_cell() -> (Params, Allocation, ChannelState) {
        let mut p = two_rrh_params();
        p.dims = NetworkDims::uniform(1, 1, 1, 1, 1, 1, 1);
        p.radio.max_power = vec![10.0];
        let mut alloc = Allocation::empty(&p.dims, p.sensing.frame_len / 2.0);
        alloc.beta[0] = true;
        alloc.power[0] = 1.0;
        let ch = ChannelState {
            downlink_gain: vec![1.0],
            sensing_gain_sq: vec![1.0],
        };
        (p, alloc, ch)
    }

    #[test]
    fn throughput_formula_collapses() {
        let (mut p, mut alloc, ch) = single_cell();
        p.sensing.hvwn_active_prob = 0.0;
        // γ0 = 1, τ = T/2, P1 = 0, pfa = 0 → 0.5
        let e = exact_throughput(&p, 0, 0, 0, &alloc, &ch, 0.0, 0.9).unwrap();
        let a = approx_throughput(&p, 0, 0, 0, &alloc, &ch, 0.0).unwrap();
        assert!((e - 0.5).abs() < 1e-15);
        assert_eq!(e, a);

        alloc.tau[0] = p.sensing.frame_len;
        assert_eq!(exact_throughput(&p, 0, 0, 0, &alloc, &ch, 0.1, 0.9).unwrap(), 0.0);

        alloc.tau[0] = 0.01;
        alloc.beta[0] = false;
        assert_eq!(exact_throughput(&p, 0, 0, 0, &alloc, &ch, 0.1, 0.9).unwrap(), 0.0);
        assert_eq!(approx_throughput(&p, 0, 0, 0, &alloc, &ch, 0.1).unwrap(), 0.0);

        alloc.tau[0] = 2.0 * p.sensing.frame_len;
        assert!(exact_throughput(&p, 0, 0, 0, &alloc, &ch, 0.1, 0.9).is_err());
    }

    #[test]
    fn approx_near_zero_tau() {
        let (mut p, mut alloc, ch) = single_cell();
        p.sensing.hvwn_active_prob = 0.0;
        alloc.power[0] = 3.0;
        alloc.tau[0] = 1e-300;
        let a = approx_throughput(&p, 0, 0, 0, &alloc, &ch, 0.0).unwrap();
        assert!((a - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constraint_counting() {
        let p = two_rrh_params();
        let d = &p.dims;
        let mut alloc = Allocation::empty(d, 0.05);
        let ch = ChannelState {
            downlink_gain: vec![1.0; d.num_cells()],
            sensing_gain_sq: vec![1.0; 2],
        };
        alloc.beta[d.cell(0, 0, 0)] = true;
        alloc.beta[d.cell(0, 0, 1)] = true;
        let res = check_constraints(&p, &alloc, &ch);
        assert_eq!(res.get(5), 1.0);
        assert_eq!(res.get(6), 1.0);
    }

    #[test]
    fn hand_built_feasible_instance() {
        // RRH 0 serves user 0, RRH 1 serves user 1, both through BBU 0.
        let p = two_rrh_params();
        let d = &p.dims;
        let ch = ChannelState {
            downlink_gain: vec![1.0, 0.1, 0.1, 1.0],
            sensing_gain_sq: vec![1.0, 1.0],
        };
        let mut alloc = Allocation::empty(d, 0.05);
        alloc.beta[d.cell(0, 0, 0)] = true;
        alloc.beta[d.cell(1, 0, 1)] = true;
        alloc.rrh_assoc[0] = true; // n0 r0
        alloc.rrh_assoc[2 + 1] = true; // n1 r1
        alloc.bbu_assoc[0] = true;
        alloc.bbu_assoc[1] = true;
        alloc.refresh_linkage(d);
        alloc.power[d.cell(0, 0, 0)] = 5.0;
        alloc.power[d.cell(1, 0, 1)] = 5.0;
        // C1 by hand: Q((Q^-1(0.1) - 0.5 * 2 * sqrt(0.05 * 1e4)) / sqrt(2*0.5*2 + 1)) ≈ 1.
        let res = check_constraints(&p, &alloc, &ch);
        for (name, v) in res.iter() {
            assert_eq!(v, 0.0, "{name}");
        }
        let mut bad = alloc.clone();
        bad.linkage[0] = false;
        assert_eq!(check_constraints(&p, &bad, &ch).get(7), 1.0);
        let mut bad = alloc.clone();
        bad.power[d.cell(0, 0, 0)] = 11.0;
        assert!((check_constraints(&p, &bad, &ch).get(9) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_allocation_slack() {
        let p = two_rrh_params();
        let ch = ChannelState {
            downlink_gain: vec![1.0; p.dims.num_cells()],
            sensing_gain_sq: vec![1.0; 2],
        };
        let alloc = Allocation::empty(&p.dims, 0.05);
        let res = check_constraints(&p, &alloc, &ch);
        assert_eq!(res.max(), 0.0);

        // Starved sensing: only C1 can be violated.
        let alloc = Allocation::empty(&p.dims, 1e-9);
        let res = check_constraints(&p, &alloc, &ch);
        assert!(res.get(1) > 0.0);
        for i in 2..=10 {
            assert_eq!(res.get(i), 0.0);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn instance() -> impl Strategy<Value = (Params, Allocation, ChannelState)> {
            let p = two_rrh_params();
            let nc = p.dims.num_cells();
            (
                proptest::collection::vec(0.0f64..5.0, nc),
                proptest::collection::vec(0.01f64..2.0, nc),
                1e-4f64..0.1,
                0.0f64..0.5,
            )
                .prop_map(move |(power, gain, tau, p1)| {
                    let mut p = two_rrh_params();
                    p.sensing.hvwn_active_prob = p1;
                    let mut alloc = Allocation::empty(&p.dims, tau);
                    alloc.power = power;
                    alloc.beta.iter_mut().for_each(|b| *b = true);
                    let ch = ChannelState {
                        downlink_gain: gain,
                        sensing_gain_sq: vec![1.0; 2],
                    };
                    (p, alloc, ch)
                })
        }

        proptest! {
            #[test]
            fn approx_within_term_drop_bound((p, alloc, ch) in instance(), pd in 0.5f64..1.0) {
                let d = &p.dims;
                for r in 0..2 {
                    for n in 0..2 {
                        let e = exact_throughput(&p, r, 0, n, &alloc, &ch, 0.1, pd).unwrap();
                        let a = approx_throughput(&p, r, 0, n, &alloc, &ch, 0.1).unwrap();
                        let c = d.cell(r, 0, n);
                        let i = interference_at(d, n, r, 0, &alloc, &ch);
                        let g1 = sinr_present(alloc.power[c], ch.downlink_gain[c], i, p.radio.hvwn_interference, p.radio.noise_power);
                        let tau = alloc.tau[d.rk(r, 0)];
                        let bound = p.sensing.hvwn_active_prob * (p.sensing.frame_len - tau) / p.sensing.frame_len * g1.ln_1p() / LN_2;
                        prop_assert!(e - a >= -1e-12);
                        prop_assert!(e - a <= bound + 1e-12);
                    }
                }
            }

            #[test]
            fn exact_non_increasing_in_tau((p, alloc, ch) in instance(), dt in 1e-5f64..0.05) {
                let mut later = alloc.clone();
                later.tau.iter_mut().for_each(|t| *t = (*t + dt).min(p.sensing.frame_len));
                let a = exact_throughput(&p, 0, 0, 0, &alloc, &ch, 0.1, 0.9).unwrap();
                let b = exact_throughput(&p, 0, 0, 0, &later, &ch, 0.1, 0.9).unwrap();
                prop_assert!(b <= a + 1e-15);
            }

            #[test]
            fn interference_linear_in_each_power((p, alloc, ch) in instance(), idx in 0usize..4, delta in -1.0f64..1.0) {
                let d = &p.dims;
                let base = interference_at(d, 0, 0, 0, &alloc, &ch);
                let mut moved = alloc.clone();
                moved.power[idx] += delta;
                let twice = { let mut m = alloc.clone(); m.power[idx] += 2.0 * delta; m };
                let a = interference_at(d, 0, 0, 0, &moved, &ch) - base;
                let b = interference_at(d, 0, 0, 0, &twice, &ch) - base;
                prop_assert!((b - 2.0 * a).abs() < 1e-12);
            }
        }
    }
}
