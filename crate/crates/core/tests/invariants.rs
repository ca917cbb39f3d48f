use idlewave::analysis::{
    detect_cancellation, detect_fronts, estimate_speed, idle_matrix, CancellationKind, WaveFronts,
};
use idlewave::comm::{Boundary, Direction, ProtocolOverride, Topology};
use idlewave::presets::{single_delay, EAGER_SIZE, RENDEZVOUS_SIZE};
use idlewave::stats::median;
use idlewave::{simulate, DelaySpec, NoiseSpec, PhaseKind, Scenario};
use proptest::prelude::*;

fn fronts_of(s: &Scenario) -> (idlewave::analysis::IdleMatrix, Vec<WaveFronts>) {
    let trace = simulate(s).unwrap();
    let idle = idle_matrix(&trace, s).unwrap();
    let fronts = s
        .delays
        .iter()
        .map(|d| detect_fronts(&idle, d.into(), 0.05).unwrap())
        .collect();
    (idle, fronts)
}

fn line_scenario() -> impl Strategy<Value = (Scenario, bool)> {
    (12usize..40, 1usize..=3, 500u32..5000, any::<bool>(), any::<bool>(), any::<bool>())
        .prop_map(|(n, d, t, bidir, periodic, rdv)| {
            let topo = Topology::new(
                if bidir { Direction::Bidirectional } else { Direction::Unidirectional },
                if periodic { Boundary::Periodic } else { Boundary::Open },
                d,
            );
            let mut s = Scenario::new(n, n + 5, t as f64, topo);
            s.protocol.override_mode = Some(if rdv {
                ProtocolOverride::ForceRendezvous
            } else {
                ProtocolOverride::ForceEager
            });
            s.delays = vec![DelaySpec::new(n / 3, 1, 5.0 * t as f64)];
            (s, rdv)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wings_move_forward_in_time((s, _) in line_scenario()) {
        let (_, fronts) = fronts_of(&s);
        for w in &fronts[0].wings {
            for pair in w.path.windows(2) {
                prop_assert!(pair[1].hop_distance > pair[0].hop_distance);
                prop_assert!(pair[1].t_arrival_us >= pair[0].t_arrival_us, "{:?}", w);
                prop_assert!(pair[1].step >= pair[0].step);
            }
        }
    }

    #[test]
    fn phases_tile_each_rank((s, _) in line_scenario(), e in 0.0f64..0.3, seed: u64) {
        let mut s = s;
        s.noise = NoiseSpec::exponential(e);
        s.seed = seed;
        let trace = simulate(&s).unwrap();
        for rank in 0..s.n_ranks {
            let mut t = 0.0;
            let mut exec = 0;
            for r in trace.rank_records(rank) {
                prop_assert!((r.t_start_us - t).abs() < 1e-6, "gap at {:?}", r);
                prop_assert!(r.t_end_us > r.t_start_us);
                t = r.t_end_us;
                exec += (r.kind == PhaseKind::Exec) as usize;
            }
            prop_assert!((t - trace.final_time_us[rank]).abs() < 1e-6);
            prop_assert_eq!(exec, s.n_steps);
        }
    }

    #[test]
    fn open_line_speed_follows_the_model((s, rdv) in line_scenario()) {
        let mut s = s;
        s.topology.boundary = Boundary::Open;
        s.delays[0].rank = 0;
        if rdv && s.topology.direction == Direction::Bidirectional {
            s.n_steps = s.n_ranks / (2 * s.topology.distance) + 3;
        }
        let (_, fronts) = fronts_of(&s);
        let Ok(v) = estimate_speed(&fronts[0]) else {
            // Too few hops for a fit on short chains with large d.
            prop_assume!(false);
            unreachable!()
        };
        let sigma = if rdv && s.topology.direction == Direction::Bidirectional { 2.0 } else { 1.0 };
        let c = 3.0 + s.protocol.message_size_bytes as f64 / 3000.0;
        let want = sigma * s.topology.distance as f64 / (s.t_exec_us + c) * 1e6;
        prop_assert!((v.v_ranks_per_s - want).abs() / want < 0.02, "{} vs {}", v.v_ranks_per_s, want);
    }

    #[test]
    fn mirrored_injections_cancel_symmetrically(half in 6usize..20, offset in 0usize..4, t in 1000u32..4000) {
        let n = 2 * half;
        let topo = Topology::new(Direction::Bidirectional, Boundary::Periodic, 1);
        let mut s = Scenario::new(n, n + 5, t as f64, topo);
        s.protocol.override_mode = Some(ProtocolOverride::ForceEager);
        let a = offset;
        let b = offset + half;
        s.delays = vec![DelaySpec::new(a, 1, 4.0 * t as f64), DelaySpec::new(b, 1, 4.0 * t as f64)];
        let (idle, fronts) = fronts_of(&s);
        let report = detect_cancellation(&fronts, &s.topology, &idle);
        prop_assert_eq!(report.count(CancellationKind::Full), 2);
        prop_assert_eq!(report.count(CancellationKind::Partial), 0);
        for e in &report.events {
            prop_assert!(e.hops[0].abs_diff(e.hops[1]) <= 1, "{:?}", e);
        }
    }
}

#[test]
fn noise_barely_changes_the_speed() {
    for (direction, size) in [
        (Direction::Unidirectional, EAGER_SIZE),
        (Direction::Bidirectional, EAGER_SIZE),
        (Direction::Bidirectional, RENDEZVOUS_SIZE),
    ] {
        let quiet = single_delay(direction, Boundary::Open, 1, size);
        let (_, f) = fronts_of(&quiet);
        let v0 = estimate_speed(&f[0]).unwrap().v_ranks_per_s;

        let mut deviations = Vec::new();
        for seed in 0..10 {
            let mut s = quiet.clone();
            s.noise = NoiseSpec::exponential(0.02);
            s.seed = seed;
            // Noise stretches every step, so compare in ranks per mean step.
            let base = simulate(&s.without_delays()).unwrap();
            let period = base.makespan_us() / s.n_steps as f64;
            let quiet_period = quiet.t_exec_us + quiet.message_cost();
            let (_, f) = fronts_of(&s);
            if let Ok(v) = estimate_speed(&f[0]) {
                let rel = (v.v_ranks_per_s * period) / (v0 * quiet_period) - 1.0;
                deviations.push(rel.abs());
            }
        }
        assert!(deviations.len() >= 8, "{direction:?}/{size}: {deviations:?}");
        let m = median(&deviations).unwrap();
        assert!(m <= 0.10, "{direction:?}/{size}: median deviation {m}");
    }
}
