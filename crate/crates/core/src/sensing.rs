//! Energy-detection formulas for cooperative sensing across RRHs.
//!
//! All RRHs report to a central fusion point, so the detection statistic on a
//! sub-carrier adds up every RRH's `sqrt(tau * nu_sa) * |h^HU|^2` contribution.

use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mathcore::{q_inv, q_tail};
use crate::model::{ChannelState, Params, SensingParams};
use crate::rng;

/// Smallest `alpha - 1` for which the minimum sample count is still defined.
pub const ALPHA_POLE_GAP: f64 = 1e-9;

/// Per-sub-carrier sensing summary for a given set of sensing times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingOutcome {
    pub pd_k: Vec<f64>,
    pub alpha_k: Vec<f64>,
    /// Ceiling of the minimum sample count; `None` when the target is unattainable.
    pub min_samples: Vec<Option<u64>>,
}

/// `sqrt(2 * gamma_p * sum_r |h^HU_{r,k}|^2 + 1)`.
pub fn alpha(hvwn_snr: f64, gains_sq: &[f64]) -> f64 {
    (2.0 * hvwn_snr * gains_sq.iter().sum::<f64>() + 1.0).sqrt()
}

/// Cooperative detection probability on one sub-carrier.
///
/// `taus[r]` and `gains_sq[r]` are the sensing time and sensing-channel power
/// gain of RRH `r` on that sub-carrier.
pub fn detection_probability(
    taus: &[f64],
    sampling_freq: f64,
    hvwn_snr: f64,
    gains_sq: &[f64],
    target_pfa: f64,
) -> Result<f64> {
    if taus.len() != gains_sq.len() {
        return Err(Error::Domain("one sensing time per RRH gain required".into()));
    }
    if let Some(t) = taus.iter().find(|&&t| !(t > 0.0)) {
        return Err(Error::Domain(format!("sensing time must be > 0, got {t}")));
    }
    if !(target_pfa > 0.0 && target_pfa < 1.0) {
        return Err(Error::Domain(format!("target P_fa must lie in (0, 1), got {target_pfa}")));
    }
    Ok(detection_probability_unchecked(taus, sampling_freq, hvwn_snr, gains_sq, target_pfa))
}

pub(crate) fn detection_probability_unchecked(
    taus: &[f64],
    sampling_freq: f64,
    hvwn_snr: f64,
    gains_sq: &[f64],
    target_pfa: f64,
) -> f64 {
    let stat: f64 = taus
        .iter()
        .zip(gains_sq)
        .map(|(&t, &g)| (t * sampling_freq).sqrt() * g)
        .sum();
    let qinv_fa = q_inv(target_pfa).expect("target P_fa validated by caller");
    q_tail((qinv_fa - hvwn_snr * stat) / alpha(hvwn_snr, gains_sq))
}

/// Minimum number of samples meeting `(target_pd, target_pfa)` for a given `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinSamples {
    /// Real-valued formula output.
    pub raw: f64,
    pub count: u64,
}

/// `4 / (alpha^2 - 1)^2 * (Q^-1(P_fa) - Q^-1(P_d) * alpha)^2`.
pub fn min_samples(alpha: f64, target_pfa: f64, target_pd: f64) -> Result<MinSamples> {
    if !(alpha >= 1.0 + ALPHA_POLE_GAP) {
        return Err(Error::Unattainable(format!(
            "alpha = {alpha}: no HVWN energy reaches any RRH"
        )));
    }
    let bracket = q_inv(target_pfa)? - q_inv(target_pd)? * alpha;
    let denom = alpha * alpha - 1.0;
    let raw = 4.0 / (denom * denom) * bracket * bracket;
    Ok(MinSamples {
        raw,
        count: raw.ceil() as u64,
    })
}

/// Right-hand side of the linear detection constraint on the substituted
/// variables: `sum_r lambda_{r,k} |h^HU_{r,k}|^2 >= required_statistic`.
pub fn required_statistic(hvwn_snr: f64, gains_sq: &[f64], target_pfa: f64, target_pd: f64) -> Result<f64> {
    let a = alpha(hvwn_snr, gains_sq);
    Ok((q_inv(target_pfa)? - a * q_inv(target_pd)?) / hvwn_snr)
}

/// Evaluate detection probability, alpha and minimum samples on every sub-carrier.
pub fn sensing_outcome(params: &Params, channel: &ChannelState, tau: &[f64]) -> Result<SensingOutcome> {
    let dims = &params.dims;
    let sp = &params.sensing;
    let mut out = SensingOutcome {
        pd_k: Vec::with_capacity(dims.num_subcarriers),
        alpha_k: Vec::with_capacity(dims.num_subcarriers),
        min_samples: Vec::with_capacity(dims.num_subcarriers),
    };
    for k in 0..dims.num_subcarriers {
        let gains = channel.sensing_gains_on(dims, k);
        let taus: Vec<f64> = (0..dims.num_rrhs).map(|r| tau[dims.rk(r, k)]).collect();
        out.pd_k.push(detection_probability(&taus, sp.sampling_freq, sp.hvwn_snr, &gains, sp.target_pfa[k])?);
        let a = alpha(sp.hvwn_snr, &gains);
        out.alpha_k.push(a);
        out.min_samples.push(min_samples(a, sp.target_pfa[k], sp.target_pd).ok().map(|m| m.count));
    }
    Ok(out)
}

/// True when a uniform sensing time `tau` on every RRH misses the detection target.
pub fn is_interrupted(tau: f64, sensing: &SensingParams, target_pfa: f64, gains_sq: &[f64]) -> bool {
    let taus = vec![tau; gains_sq.len()];
    detection_probability_unchecked(&taus, sensing.sampling_freq, sensing.hvwn_snr, gains_sq, target_pfa)
        < sensing.target_pd
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        if samples.is_empty() {
            return Estimate { mean: f64::NAN, stderr: f64::NAN };
        }
        let mean = samples.iter().sum::<f64>() / n;
        if samples.len() < 2 {
            return Estimate { mean, stderr: 0.0 };
        }
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Estimate {
            mean,
            stderr: (var / n).sqrt(),
        }
    }
}

/// Sensing-gain draws for one sub-carrier: `|h^HU_r|^2 ~ Exp(1)` per RRH,
/// i.e. a unit-variance circular complex Gaussian coefficient.
#[derive(Debug, Clone, Copy)]
pub struct RayleighSensingSampler {
    pub seed: u64,
    pub num_rrhs: usize,
}

impl RayleighSensingSampler {
    /// Gains of trial `trial`; RRH `r` always reads the same stream, so adding
    /// RRHs leaves the existing gains unchanged.
    pub fn gains(&self, trial: usize) -> Vec<f64> {
        (0..self.num_rrhs)
            .map(|r| {
                let mut rng = rng::stream(self.seed, &[0x5E45, trial as u64, r as u64]);
                Exp1.sample(&mut rng)
            })
            .collect()
    }
}

/// Fraction of channel draws for which a uniform sensing time `tau` cannot meet
/// `(target_pd, target_pfa[0])`.
///
/// `gains_for_trial(t)` must be a deterministic function of the trial index so
/// that curves at different `tau` share their draws.
pub fn interruption_probability<F>(
    tau: f64,
    sensing: &SensingParams,
    num_trials: usize,
    gains_for_trial: F,
) -> Result<Estimate>
where
    F: Fn(usize) -> Vec<f64>,
{
    if !(tau > 0.0 && tau <= sensing.frame_len) {
        return Err(Error::Domain(format!("tau {tau} outside (0, T]")));
    }
    if num_trials == 0 {
        return Err(Error::Domain("num_trials must be >= 1".into()));
    }
    let pfa = sensing.target_pfa[0];
    let hits: Vec<f64> = (0..num_trials)
        .map(|t| if is_interrupted(tau, sensing, pfa, &gains_for_trial(t)) { 1.0 } else { 0.0 })
        .collect();
    Ok(Estimate::from_samples(&hits))
}
