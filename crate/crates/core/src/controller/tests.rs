use super::*;
use crate::channel::ChannelModel;
use crate::quality::QualityModel;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture() -> (QualityModel, ChannelModel) {
    (QualityModel::default(), ChannelModel::default())
}

fn cfg(mode: Mode) -> ControllerConfig {
    ControllerConfig {
        mode,
        ..ControllerConfig::default()
    }
}

fn state(q: u64, z: f64, w: f64, th: f64) -> SystemState {
    SystemState {
        q_chunks: q,
        z_seconds: z,
        w_virtual: w,
        theta_virtual: th,
    }
}

fn random_state(rng: &mut ChaCha8Rng) -> SystemState {
    // exact zeros exercise the degenerate branches
    let mut pick = |hi: f64| {
        if rng.random_bool(0.1) {
            0.0
        } else {
            rng.random_range(0.0..hi)
        }
    };
    let z = pick(10.0);
    let w = pick(20.0);
    let th = pick(20.0);
    state(rng.random_range(0..=50), z, w, th)
}

fn close(a: f64, oracle: f64) -> bool {
    a <= oracle + 1e-6 * (1.0 + oracle.abs())
}

/// Objective written out independently of the controller.
fn reference_objective(
    q: &QualityModel,
    c: &ControllerConfig,
    p_bar: f64,
    d: &Decision,
    s: &SystemState,
) -> f64 {
    let n = f64::from(d.n_chunks);
    let psnr = q.table.psnr(d.rate, d.depth).unwrap();
    let sr = if d.cores == 0 {
        0.0
    } else {
        let cycles = q.table.cycles(d.rate, d.depth).unwrap();
        c.k_z * s.z_seconds * n * (cycles / 1.171e9) / f64::from(d.cores)
    };
    -(s.q_chunks as f64) * n
        + sr
        + c.k_w * s.w_virtual * d.power_w
        + c.k_theta * s.theta_virtual * f64::from(d.cores)
        + c.v_weight * n * (p_bar - psnr)
}

#[test]
fn idle_scores_zero() {
    let (q, ch) = fixture();
    let c = cfg(Mode::Proposed);
    let ctl = Controller::new(&q, &ch, &c);
    let idle = Decision::idle(Rate(2));
    assert_eq!(ctl.dpp_objective(&idle, &state(7, 3.0, 2.0, 1.0), 1.0), 0.0);
}

#[test]
fn objective_example_without_penalty() {
    let (q, ch) = fixture();
    let c = ControllerConfig {
        v_weight: 0.0,
        ..cfg(Mode::Proposed)
    };
    let ctl = Controller::new(&q, &ch, &c);
    let d = Decision {
        n_chunks: 2,
        rate: Rate(2),
        power_w: 1.0,
        depth: Depth(0),
        cores: 0,
    };
    assert_eq!(ctl.dpp_objective(&d, &state(10, 0.0, 1.0, 0.0), 1.0), -19.0);
}

#[test]
fn empty_queue_sends_nothing() {
    let (q, ch) = fixture();
    for mode in Mode::ALL {
        let c = cfg(mode);
        let ctl = Controller::new(&q, &ch, &c);
        let d = ctl.decide_for_mode(&SystemState::zero(), 1.0);
        assert_eq!(d.n_chunks, 0, "{mode}");
        assert_eq!(d.cores, 0, "{mode}");
        assert_eq!(d.power_w, 0.0, "{mode}");
    }
}

#[test]
fn decide_matches_oracle_on_random_states() {
    let (q, ch) = fixture();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for mode in [Mode::Proposed, Mode::Buffered, Mode::Comp2] {
        let c = cfg(mode);
        let ctl = Controller::new(&q, &ch, &c);
        for _ in 0..300 {
            let s = random_state(&mut rng);
            let g = ch.sample_gain(&mut rng).gain_sq;
            let fast = ctl.decide_scored(&s, g);
            let exact = ctl.oracle_scored(&s, g);
            assert!(
                close(fast.objective, exact.objective),
                "{mode}: {s:?} g={g}: {fast:?} vs {exact:?}"
            );
        }
    }
}

#[test]
fn rounded_continuous_optimum_alone_matches_oracle() {
    // Rounding the joint continuous optimum, without the per-core refinement,
    // under randomized weights.
    let (q, ch) = fixture();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..3000 {
        let c = ControllerConfig {
            v_weight: 10f64.powf(rng.random_range(-3.0..1.0)),
            k_z: 10f64.powf(rng.random_range(-1.5..1.5)),
            k_w: 10f64.powf(rng.random_range(-1.5..1.5)),
            k_theta: 10f64.powf(rng.random_range(-1.5..1.5)),
            ..cfg(Mode::Proposed)
        };
        let mut coarse = Controller::new(&q, &ch, &c);
        coarse.refine_per_core = false;
        let s = random_state(&mut rng);
        let g = ch.sample_gain(&mut rng).gain_sq;
        let exact = coarse.oracle_scored(&s, g);
        let got = coarse.decide_scored(&s, g);
        assert!(close(got.objective, exact.objective), "{c:?} {s:?} g={g}");
    }
}

#[test]
fn scored_objective_matches_reference() {
    let (q, ch) = fixture();
    let c = ControllerConfig {
        v_weight: 0.3,
        k_z: 1.5,
        k_w: 0.7,
        k_theta: 2.0,
        ..cfg(Mode::Proposed)
    };
    let ctl = Controller::new(&q, &ch, &c);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let s = random_state(&mut rng);
        let g = ch.sample_gain(&mut rng).gain_sq;
        let best = ctl.oracle_scored(&s, g);
        let want = reference_objective(&q, &c, ctl.p_bar(), &best.decision, &s);
        assert!((best.objective - want).abs() <= 1e-9 * (1.0 + want.abs()));
        assert!((ctl.dpp_objective(&best.decision, &s, g) - want).abs() <= 1e-9 * (1.0 + want.abs()));
    }
}

#[test]
fn decisions_respect_invariants() {
    let (q, ch) = fixture();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for mode in Mode::ALL {
        let c = cfg(mode);
        let ctl = Controller::new(&q, &ch, &c);
        for _ in 0..150 {
            let s = random_state(&mut rng);
            let g = ch.sample_gain(&mut rng).gain_sq;
            let d = ctl.decide_for_mode(&s, g);
            assert!(u64::from(d.n_chunks) <= s.q_chunks);
            assert!(d.power_w >= 0.0 && d.power_w <= ch.power_budget_w);
            assert!(d.cores <= c.u_max);
            if d.n_chunks == 0 {
                assert_eq!((d.power_w, d.cores, d.depth), (0.0, 0, Depth::NONE));
            } else {
                let bits = q.sizes.bits(d.rate) * f64::from(d.n_chunks);
                let cap = ch.capacity_unchecked(d.power_w, g);
                assert!(bits <= cap * (1.0 + 1e-9), "{mode}: {d:?}");
                assert_eq!(d.depth.is_none(), d.cores == 0, "{mode}: {d:?}");
            }
        }
    }
}

#[test]
fn comp2_pins_depth() {
    let (q, ch) = fixture();
    let c = cfg(Mode::Comp2);
    let ctl = Controller::new(&q, &ch, &c);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let s = random_state(&mut rng);
        let d = ctl.decide_for_mode(&s, ch.sample_gain(&mut rng).gain_sq);
        if d.n_chunks > 0 {
            assert_eq!(d.depth, q.table.max_depth());
        } else {
            assert_eq!(d.depth, Depth::NONE);
        }
    }
}

#[test]
fn comp1_receiver_is_exhaustive_given_transmitter() {
    let (q, ch) = fixture();
    let c = cfg(Mode::Comp1);
    let ctl = Controller::new(&q, &ch, &c);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let s = random_state(&mut rng);
        let g = ch.sample_gain(&mut rng).gain_sq;
        let d = ctl.decide_comp1(&s, g);
        if d.n_chunks == 0 {
            continue;
        }
        // receiver share of the objective at every (d, u) for the same N, r
        let rx = |depth: Depth, cores: u32| {
            let full = Decision { depth, cores, ..d };
            ctl.dpp_objective(&full, &s, g) + (s.q_chunks as f64) * f64::from(d.n_chunks)
                - c.k_w * s.w_virtual * d.power_w
        };
        let chosen = rx(d.depth, d.cores);
        for &depth in q.table.depths() {
            let cores: Vec<u32> = if depth.is_none() { vec![0] } else { (1..=c.u_max).collect() };
            for u in cores {
                assert!(chosen <= rx(depth, u) + 1e-9 * (1.0 + chosen.abs()));
            }
        }
    }
}

#[test]
fn comp1_transmitter_ignores_receiver_backlog() {
    let (q, ch) = fixture();
    let c = cfg(Mode::Comp1);
    let ctl = Controller::new(&q, &ch, &c);
    let a = ctl.decide_comp1(&state(20, 0.0, 3.0, 1.0), 2.0);
    let b = ctl.decide_comp1(&state(20, 9.0, 3.0, 1.0), 2.0);
    assert_eq!((a.n_chunks, a.rate, a.power_w), (b.n_chunks, b.rate, b.power_w));
}

#[test]
fn buffered_decisions_keep_backlog_below_b() {
    let (q, ch) = fixture();
    let c = cfg(Mode::Buffered);
    let ctl = Controller::new(&q, &ch, &c);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..300 {
        let mut s = random_state(&mut rng);
        s.z_seconds = rng.random_range(0.0..=c.buffering_b);
        let d = ctl.decide_buffered(&s, ch.sample_gain(&mut rng).gain_sq);
        let a = if d.cores == 0 {
            0.0
        } else {
            q.processing_time(d.rate, d.depth, d.cores).unwrap() * f64::from(d.n_chunks)
        };
        assert!((s.z_seconds + a - ch.slot_seconds).max(0.0) <= c.buffering_b);
    }
}

#[test]
fn single_option_oracle() {
    // one rate, Q = 1 and a channel that carries exactly one chunk
    let q = QualityModel {
        table: QualityModel::default().table.restricted_to_rates(&[Rate(5)]).unwrap(),
        ..QualityModel::default()
    };
    let ch = ChannelModel::default();
    let c = ControllerConfig {
        u_max: 1,
        ..cfg(Mode::Oracle)
    };
    let ctl = Controller::new(&q, &ch, &c);
    let s = state(1, 0.0, 0.0, 0.0);
    let d = ctl.oracle_decide(&s, 1.0);
    assert_eq!(d.n_chunks, 1);
    assert_eq!(d.rate, Rate(5));
    // free cores and no backlog: best quality wins
    assert_eq!(d.depth, q.table.max_depth());
    assert_eq!(d.cores, 1);
}

fn oracle_with(c: &ControllerConfig, s: &SystemState, g: f64) -> Decision {
    let (q, ch) = fixture();
    Controller::new(&q, &ch, c).oracle_decide(s, g)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn oracle_power_falls_as_w_grows(
        q in 1u64..40, z in 0.0f64..10.0, th in 0.0f64..20.0, g in 0.05f64..4.0,
        w0 in 0.0f64..10.0, dw in 0.0f64..10.0,
    ) {
        let c = cfg(Mode::Oracle);
        let lo = oracle_with(&c, &state(q, z, w0, th), g);
        let hi = oracle_with(&c, &state(q, z, w0 + dw, th), g);
        prop_assert!(hi.power_w <= lo.power_w + 1e-12);
    }

    #[test]
    fn oracle_cores_fall_as_theta_grows(
        q in 1u64..40, z in 0.0f64..10.0, w in 0.0f64..20.0, g in 0.05f64..4.0,
        t0 in 0.0f64..10.0, dt in 0.0f64..10.0,
    ) {
        let c = cfg(Mode::Oracle);
        let lo = oracle_with(&c, &state(q, z, w, t0), g);
        let hi = oracle_with(&c, &state(q, z, w, t0 + dt), g);
        prop_assert!(hi.cores <= lo.cores);
    }

    #[test]
    fn oracle_chunks_grow_with_q(
        q in 0u64..40, dq in 0u64..20, z in 0.0f64..10.0, w in 0.0f64..20.0,
        th in 0.0f64..20.0, g in 0.05f64..4.0,
    ) {
        let c = cfg(Mode::Oracle);
        let lo = oracle_with(&c, &state(q, z, w, th), g);
        let hi = oracle_with(&c, &state(q + dq, z, w, th), g);
        prop_assert!(hi.n_chunks >= lo.n_chunks);
    }

    #[test]
    fn oracle_invariant_under_joint_scaling(
        extra in 0u64..5, z in 0.0f64..10.0, w in 0.0f64..20.0, th in 0.0f64..20.0,
        g in 0.05f64..2.0, k in 2u32..5,
    ) {
        // The Q coefficient is implicit, so scale Q itself by an integer k.
        // Keeping Q above every rate's channel cap leaves the feasible set
        // unchanged, and the objective becomes exactly k times the original.
        let (qm, ch) = fixture();
        let cap = qm
            .table
            .rates()
            .iter()
            .map(|&r| ch.max_chunks(qm.sizes.bits(r), g))
            .max()
            .unwrap();
        let q = u64::from(cap) + extra;
        let base = ControllerConfig { v_weight: 0.05, ..cfg(Mode::Oracle) };
        let f = f64::from(k);
        let scaled = ControllerConfig {
            v_weight: base.v_weight * f,
            k_z: base.k_z * f,
            k_w: base.k_w * f,
            k_theta: base.k_theta * f,
            ..base
        };
        let a = oracle_with(&base, &state(q, z, w, th), g);
        let b = oracle_with(&scaled, &state(q * u64::from(k), z, w, th), g);
        prop_assert_eq!(a, b);
    }
}
