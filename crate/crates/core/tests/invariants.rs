//! Property tests for the solver blocks on random small instances.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cran_sense::association::{association_weights, solve_association, solve_with_weights, AssocOptions};
use cran_sense::model::{
    check_constraints, total_approx_throughput, Allocation, ChannelState, NetworkDims, Params, RadioParams,
    SensingParams,
};
use cran_sense::orchestrator::{initial_allocation, solve_joint, AltConfig};
use cran_sense::power::{solve_power, surrogate_throughput, PowerOptions};
use cran_sense::scenario::{generate_instance, ScenarioSpec, MIN_DISTANCE_M};
use cran_sense::sensing::detection_probability;
use cran_sense::sensing_opt::solve_sensing;

fn instance(seed: u64) -> (Params, ChannelState, Allocation) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nr = rng.gen_range(1..=3);
    let nk = rng.gen_range(1..=4);
    let nb = rng.gen_range(1..=2);
    let dims = NetworkDims::uniform(2, nr, nb, nk, rng.gen_range(1..=3), rng.gen_range(1..=4), rng.gen_range(1..=3));
    let nu = dims.num_users();
    let params = Params {
        sensing: SensingParams {
            target_pd: rng.gen_range(0.8..0.99),
            target_pfa: vec![rng.gen_range(0.05..0.3); nk],
            hvwn_snr: 10f64.powf(-1.5),
            sampling_freq: 1e6,
            frame_len: 0.2,
            hvwn_active_prob: 0.1,
        },
        radio: RadioParams {
            noise_power: 1e-13,
            hvwn_interference: 1e-13,
            max_power: vec![1.0; nr],
            reserved_rate: vec![0.0; 2],
        },
        dims,
    };
    let d = &params.dims;
    let channel = ChannelState {
        downlink_gain: (0..d.num_cells()).map(|_| 10f64.powf(rng.gen_range(-13.0..-10.0))).collect(),
        sensing_gain_sq: (0..nr * nk).map(|_| rng.gen_range(0.1..2.0)).collect(),
    };
    let mut alloc = Allocation::empty(d, 0.01);
    for r in 0..nr {
        for k in 0..nk {
            if rng.gen_bool(0.8) {
                let c = d.cell(r, k, rng.gen_range(0..nu));
                alloc.beta[c] = true;
                alloc.power[c] = rng.gen_range(0.01..1.0) / nk as f64;
            }
        }
    }
    (params, channel, alloc)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sensing_step_meets_detection_targets(seed in any::<u64>()) {
        let (params, channel, alloc) = instance(seed);
        let d = &params.dims;
        let s = &params.sensing;
        let pd_at = |k: usize, taus: &[f64]| {
            detection_probability(taus, s.sampling_freq, s.hvwn_snr, &channel.sensing_gains_on(d, k), s.target_pfa[k]).unwrap()
        };
        let res = match solve_sensing(&params, &channel, &alloc) {
            Ok(res) => res,
            Err(cran_sense::Error::SensingInfeasible { subcarriers }) => {
                // even sensing for the whole frame on every RRH misses the target
                for k in subcarriers {
                    prop_assert!(pd_at(k, &vec![s.frame_len; d.num_rrhs]) < s.target_pd);
                }
                return Ok(());
            }
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        for k in 0..d.num_subcarriers {
            let taus: Vec<f64> = (0..d.num_rrhs).map(|r| res.tau[d.rk(r, k)]).collect();
            prop_assert!(taus.iter().all(|&t| t > 0.0 && t <= s.frame_len));
            let pd = pd_at(k, &taus);
            prop_assert!(pd >= s.target_pd - 1e-9, "k = {k}: {pd}");
        }
    }

    #[test]
    fn association_respects_exclusivity_and_coupling(seed in any::<u64>()) {
        let (params, channel, alloc) = instance(seed);
        let d = &params.dims;
        let res = solve_association(&params, &channel, &alloc, None, &AssocOptions::default()).unwrap();
        for r in 0..d.num_rrhs {
            for k in 0..d.num_subcarriers {
                let on = (0..d.num_users()).filter(|&n| res.beta[d.cell(r, k, n)]).count();
                prop_assert!(on <= 1);
            }
        }
        for n in 0..d.num_users() {
            let f: usize = (0..d.num_bbus).map(|b| usize::from(res.f[n * d.num_bbus + b])).sum();
            let x: usize = (0..d.num_rrhs).map(|r| usize::from(res.x[n * d.num_rrhs + r])).sum();
            prop_assert_eq!(f, x);
            prop_assert!(x <= 1);
        }
        // best single user per (r, k), ignoring every coupling constraint
        let w = association_weights(&params, &channel, &alloc);
        let bound: f64 = (0..d.num_rrhs)
            .flat_map(|r| (0..d.num_subcarriers).map(move |k| (r, k)))
            .map(|(r, k)| (0..d.num_users()).map(|n| w[d.cell(r, k, n)]).fold(0.0, f64::max))
            .sum();
        prop_assert!(res.objective <= bound + 1e-12 * bound.max(1.0));
    }

    #[test]
    fn association_warm_start_never_worsens(seed in any::<u64>()) {
        let (params, channel, alloc) = instance(seed);
        let w = association_weights(&params, &channel, &alloc);
        let cold = solve_with_weights(&params.dims, &w, &params.radio.reserved_rate, None, &AssocOptions::default()).unwrap();
        let warm = solve_with_weights(&params.dims, &w, &params.radio.reserved_rate, Some(&alloc), &AssocOptions::default()).unwrap();
        prop_assert!((cold.objective - warm.objective).abs() <= 1e-12 * cold.objective.max(1.0));
    }

    #[test]
    fn power_ascent_and_minorant_at_anchor(seed in any::<u64>()) {
        let (params, channel, alloc) = instance(seed);
        let res = solve_power(&params, &channel, &alloc, &PowerOptions::default()).unwrap();
        for w in res.history.windows(2) {
            prop_assert!(w[1].true_objective >= w[0].true_objective - 1e-9);
        }
        let last = &res.final_iterate;
        let mut anchor = alloc.clone();
        anchor.power = last.p.clone();
        let sur: f64 = surrogate_throughput(&params, &channel, &anchor, &last.p).iter().sum();
        let truth = total_approx_throughput(&params, &anchor, &channel);
        prop_assert!((sur - truth).abs() <= 1e-9 * truth.max(1.0));
        for r in 0..params.dims.num_rrhs {
            let used: f64 = (0..params.dims.num_subcarriers)
                .flat_map(|k| (0..params.dims.num_users()).map(move |n| (k, n)))
                .map(|(k, n)| last.p[params.dims.cell(r, k, n)])
                .sum();
            prop_assert!(used <= params.radio.max_power[r] * (1.0 + 1e-12));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn joint_solve_ascends_and_ends_feasible(seed in 0u64..10_000) {
        let mut spec = ScenarioSpec { seed, ..ScenarioSpec::default() };
        spec.params.dims = NetworkDims::uniform(2, 4, 3, 6, 3, 6, 4);
        spec.params.sensing.target_pfa = vec![0.2; 6];
        spec.params.radio.reserved_rate = vec![1.0; 2];
        let inst = generate_instance(&spec).unwrap();
        let p = &spec.params;
        let init = initial_allocation(p, &inst.channel, Some(&inst.distance), None).unwrap();
        let (alloc, report) = solve_joint(&init, &inst.channel, p, &AltConfig::default()).unwrap();
        let mut traj = vec![report.initial_objective];
        traj.extend(&report.objective_trajectory);
        for w in traj.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9, "{traj:?}");
        }
        if report.converged && report.fallbacks.is_empty() {
            prop_assert!(check_constraints(p, &alloc, &inst.channel).max() <= 1e-6);
        }
    }

    #[test]
    fn deployments_are_deterministic_and_keep_users_off_rrhs(seed in any::<u64>()) {
        let spec = ScenarioSpec { seed, ..ScenarioSpec::default() };
        let a = generate_instance(&spec).unwrap();
        prop_assert_eq!(&a, &generate_instance(&spec).unwrap());
        prop_assert!(a.distance.iter().all(|&d| d >= MIN_DISTANCE_M));
    }
}
