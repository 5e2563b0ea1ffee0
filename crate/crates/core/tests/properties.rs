use hexcell_core::consensus::{consensus_step, exact_average, ConsensusState, NeighborGraph};
use hexcell_core::env::{load_std, ActionVector, ACTION_CHOICES};
use hexcell_core::handover::{HandoverEvent, HandoverKind, HandoverParams};
use hexcell_core::metrics::{handover_latency, ping_pong_ratio, spearman};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = HandoverParams> {
    (0..=96i32, -140..=-44i32, -140..=-44i32, -140..=-44i32, -140..=-44i32).prop_map(|(u, a, b, c, d)| HandoverParams {
        u_ca: u,
        z_ce: a,
        w_ce: b,
        z_pe: c,
        w_pe: d,
    })
}

fn events() -> impl Strategy<Value = Vec<HandoverEvent>> {
    prop::collection::vec((0..4usize, 0..5usize, 0..5usize, 0..3u8, 1..200usize, 0..20usize), 0..40).prop_map(|raw| {
        raw.into_iter()
            .filter(|&(_, s, t, ..)| s != t)
            .map(|(ue, source, target, kind, report_slot, lag)| HandoverEvent {
                ue,
                source,
                target,
                kind: [HandoverKind::Cah, HandoverKind::Ceh, HandoverKind::Peh][kind as usize],
                report_slot,
                execute_slot: report_slot + 1,
                monitor_start_slot: (kind > 0).then(|| report_slot.saturating_sub(lag)),
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn action_encoding_round_trips(p in params()) {
        let a = ActionVector::encode(&p);
        prop_assert!(a.0.iter().all(|&i| i < ACTION_CHOICES));
        prop_assert_eq!(a.decode().unwrap(), p);
    }

    #[test]
    fn out_of_range_indices_are_rejected(head in 0..5usize, idx in ACTION_CHOICES..1000usize) {
        let mut a = ActionVector([0; 5]);
        a.0[head] = idx;
        prop_assert!(a.decode().is_err());
    }

    #[test]
    fn load_std_is_shift_invariant_and_nonnegative(loads in prop::collection::vec(0.0..100.0f64, 1..30), shift in -50.0..50.0f64) {
        let s = load_std(&loads);
        prop_assert!(s >= 0.0);
        let shifted: Vec<f64> = loads.iter().map(|l| l + shift).collect();
        prop_assert!((load_std(&shifted) - s).abs() <= 1e-9 * (1.0 + s));
    }

    #[test]
    fn ping_pong_ratio_is_a_fraction(evs in events(), window in 1..30usize) {
        let r = ping_pong_ratio(&evs, window);
        prop_assert!((0.0..=1.0).contains(&r));
        // Widening the window can only add ping-pongs.
        prop_assert!(ping_pong_ratio(&evs, window + 10) >= r);
    }

    #[test]
    fn latency_is_bounded_by_the_longest_event(evs in events()) {
        let dt = 0.2;
        if let Some(l) = handover_latency(&evs, dt) {
            let longest = evs
                .iter()
                .filter_map(|e| e.monitor_start_slot.map(|m| (e.execute_slot - m) as f64 * dt))
                .fold(0.0, f64::max);
            prop_assert!(l >= 0.0 && l <= longest + 1e-12);
        }
    }

    #[test]
    fn consensus_preserves_the_average(
        start in prop::collection::vec(0.0..10.0f64, 5),
        next in prop::collection::vec(0.0..10.0f64, 5),
    ) {
        // A 5-cycle is regular, so row-stochastic weights are doubly stochastic.
        let ring: Vec<Vec<usize>> = (0..5).map(|i| vec![(i + 4) % 5, (i + 1) % 5]).collect();
        let graph = NeighborGraph::from_adjacency(ring, false).unwrap();
        let mut state = ConsensusState::new(&start);
        consensus_step(&mut state, &next, &graph);
        prop_assert!((exact_average(&state.estimates) - exact_average(&next)).abs() < 1e-9);
    }

    #[test]
    fn spearman_of_monotone_maps_is_one(x in prop::collection::btree_set(-1000i32..1000, 3..20)) {
        let x: Vec<f64> = x.into_iter().map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| v.powi(3) + 2.0).collect();
        prop_assert!((spearman(&x, &y) - 1.0).abs() < 1e-12);
        let z: Vec<f64> = x.iter().map(|v| -v).collect();
        prop_assert!((spearman(&x, &z) + 1.0).abs() < 1e-12);
    }
}
