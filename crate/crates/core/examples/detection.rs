//! Energy-detection basics: the Gaussian tail, cooperative detection
//! probability, minimum sample counts and the interruption curve.

use cran_sense::mathcore::{q_func, q_inv};
use cran_sense::scenario::{run_interruption, ScenarioSpec};
use cran_sense::sensing::{alpha, detection_probability, min_samples};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for x in [-2.0, 0.0, 1.0, 3.0, 6.0] {
        let q = q_func(x)?;
        println!("Q({x:>4}) = {q:.6e}   Q^-1(Q(x)) = {:.12}", q_inv(q)?);
    }

    let spec = ScenarioSpec::default();
    let s = &spec.params.sensing;
    let gains = [0.8, 1.3, 0.4, 1.1];
    println!("\ndetection probability, 4 RRHs, gains {gains:?}");
    for tau_ms in [0.5, 1.0, 2.0, 5.0, 10.0] {
        let taus = [tau_ms * 1e-3; 4];
        let pd = detection_probability(&taus, s.sampling_freq, s.hvwn_snr, &gains, s.target_pfa[0])?;
        println!("  tau = {tau_ms:>5} ms  P_d = {pd:.4}");
    }
    let a = alpha(s.hvwn_snr, &gains);
    let m = min_samples(a, s.target_pfa[0], s.target_pd)?;
    println!("  alpha = {a:.5}, minimum samples {} ({:.2} ms at {} Hz)", m.count, m.count as f64 / s.sampling_freq * 1e3, s.sampling_freq);

    let taus: Vec<f64> = (1..=10).map(|i| i as f64 * 1e-3).collect();
    let mut loose = spec.clone();
    loose.params.sensing.target_pd = 0.8;
    let strict = run_interruption(&spec, &taus, 10_000)?;
    let relaxed = run_interruption(&loose, &taus, 10_000)?;
    println!("\n{:>7} {:>14} {:>14}", "tau_ms", "P_int(Pd=0.9)", "P_int(Pd=0.8)");
    for ((t, a), (_, b)) in strict.iter().zip(&relaxed) {
        println!("{:>7.1} {:>14.4} {:>14.4}", t * 1e3, a.mean, b.mean);
    }
    Ok(())
}
