use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rachlearn_core::analytics::{self, PreambleSplit};
use rachlearn_core::engine;
use rachlearn_core::learning::{self, LearningMessage, LearningParams};
use rachlearn_core::observe::ObservationModel;
use rachlearn_core::rach::{self, ChannelRole, RachState};
use rachlearn_core::SimConfig;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn success_iff_sole_user(intents in prop::collection::vec((0u32..40, 0u32..6), 0..40)) {
        let mut seen = std::collections::HashSet::new();
        let intents: Vec<(u32, u32)> = intents.into_iter().filter(|(d, _)| seen.insert(*d)).collect();
        let out = rach::resolve_slot(&intents);
        for p in 0..6 {
            let users: Vec<u32> = intents.iter().filter(|i| i.1 == p).map(|i| i.0).collect();
            let won: Vec<u32> = out.successes.iter().filter(|s| s.1 == p).map(|s| s.0).collect();
            if users.len() == 1 {
                prop_assert_eq!(won, users);
            } else {
                prop_assert!(won.is_empty());
                prop_assert_eq!(out.collisions.contains(&p), users.len() >= 2);
            }
        }
        prop_assert_eq!(out.successes.len() + out.collided_intents, intents.len());
    }

    #[test]
    fn schedule_is_a_valid_grouping(n in 1usize..3000, p_f in 1u32..80, seed in any::<u64>()) {
        let s = rach::build_schedule(n, p_f, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(s.t_min(), analytics::min_period(n as u64, p_f).unwrap());
        let mut members = 0;
        for g in 0..s.t_min() {
            let group = s.group(g);
            prop_assert!(group.len() <= p_f as usize);
            let mut idx: Vec<u32> = group.iter().map(|&d| s.free_index(d as usize)).collect();
            idx.sort_unstable();
            idx.dedup();
            prop_assert_eq!(idx.len(), group.len());
            prop_assert!(idx.iter().all(|&i| i < p_f));
            members += group.len();
        }
        prop_assert_eq!(members, n);
    }

    #[test]
    fn intents_stay_in_their_pools(
        p_c in 1u32..10, p_f in 1u32..64, beta in 0u32..70,
        critical in any::<bool>(), slot in 0u64..500, seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 3 * p_f as usize + 1;
        let rach = RachState {
            split: PreambleSplit::new(p_c, p_f).unwrap(),
            schedule: rach::build_schedule(n, p_f, &mut rng).unwrap(),
        };
        let dev = (seed % n as u64) as usize;
        let role = ChannelRole { critical, beta };
        let got = rach.device_intent(dev, role, slot, &mut rng);
        let due = rach.schedule.is_due(dev, slot);
        match (critical, due) {
            (true, true) => prop_assert_eq!(got, Some(rach.assigned_preamble(dev))),
            (true, false) => prop_assert!(got.unwrap() < p_c + beta.min(p_f)),
            (false, false) => prop_assert_eq!(got, None),
            (false, true) => {
                let stepped_aside = rach.schedule.free_index(dev) < beta;
                prop_assert_eq!(got.is_none(), stepped_aside);
            }
        }
    }

    #[test]
    fn pmf_is_a_distribution(s_max in 1u32..30, q_in in 0.0f64..0.5, extra in 0.0f64..0.49, dist in 0.0f64..40.0, truth_pick in any::<u32>()) {
        let model = ObservationModel::new(s_max, q_in, q_in + extra, 10.0).unwrap();
        let truth = 1 + truth_pick % s_max;
        let total: f64 = (1..=s_max).map(|s| model.pmf(dist, truth, s)).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert_eq!(model.pmf(dist, truth, 0), 0.0);
        prop_assert_eq!(model.pmf(dist, truth, s_max + 1), 0.0);
    }

    #[test]
    fn phase2_invariants(
        m in 2u32..12, alpha in 1u32..6, block in 1u32..6,
        own in prop::collection::vec(1u32..4, 1..60), seed in any::<u64>(),
    ) {
        let params = LearningParams {
            k: 1, alpha, m, block_s: block, block_r: block, revert_pivot: 5.0, revert_scale: 0.5,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut msg = learning::phase1_step(&LearningMessage::seed(), own[0], &params).unwrap().forward.unwrap();
        for &e in &own[1..] {
            let out = learning::step(&msg, e, &params, &mut rng).unwrap();
            msg = out.forward.unwrap();
            if let LearningMessage::Second(s) = &msg {
                prop_assert_eq!(s.window.len() as u32, m - 2);
                prop_assert!(s.run_count <= alpha);
                prop_assert!(s.block_pos < block);
                prop_assert_eq!(s.payload_bits() as u32, m);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn runs_are_bounded_and_reproducible(seed in any::<u64>(), side in 15.0f64..35.0, m in 2u32..8) {
        let cfg = SimConfig { width: side, length: side, m, ..SimConfig::default() };
        let rec = engine::run(&cfg, seed).unwrap();
        prop_assert_eq!(&rec, &engine::run(&cfg, seed).unwrap());
        prop_assert!(rec.learned_correct.iter().all(|f| (0.0..=1.0).contains(f)));
        prop_assert!(rec.decided_correct <= rec.decided);
        prop_assert_eq!(rec.delays.len() as u32, rec.n_a);
    }

    #[test]
    fn aggregate_ignores_worker_count(master in any::<u64>(), workers in 2usize..6) {
        let cfg = SimConfig { width: 20.0, length: 20.0, ..SimConfig::default() };
        let serial = engine::monte_carlo(&cfg, 5, master, 1).unwrap();
        let parallel = engine::monte_carlo(&cfg, 5, master, workers).unwrap();
        prop_assert_eq!(serial, parallel);
    }
}
