use std::f64::consts::FRAC_PI_2;

use proptest::prelude::*;

use screwsim_teleop::{
    ClampPolicy, ErrorCode, FrameMode, Gateway, GatewayConfig, JointAngles, ServerMessage, StateUpdate, Submit,
    TeleopFrame,
};

const N_JOINTS: usize = 3;
const PERIOD_MS: f64 = 1000.0 / 75.0;
// farthest node of a four-segment chain
const RTT_FAR_MS: f64 = 8.85 + 0.31 * 4.0;

fn frame(seq: u64, t_ms: f64, yaws: [f64; 3], screw: f64) -> TeleopFrame {
    TeleopFrame {
        seq,
        t_ms,
        joints: yaws.iter().map(|y| JointAngles::new(0.0, *y)).collect(),
        screw,
        mode: None,
    }
}

fn states(msgs: &[ServerMessage]) -> Vec<&StateUpdate> {
    msgs.iter()
        .filter_map(|m| match m {
            ServerMessage::State(s) => Some(s),
            _ => None,
        })
        .collect()
}

/// Drives a 50 Hz pilot for `seconds` of virtual time; returns every message.
fn run_50hz(g: &mut Gateway, seconds: f64, input: impl Fn(f64) -> [f64; 3]) -> Vec<ServerMessage> {
    let pilot = g.connect_pilot().unwrap();
    let mut out = Vec::new();
    let frames = (seconds * 50.0) as u64;
    for k in 0..frames {
        let t = k as f64 * 20.0;
        out.extend(g.advance_to(t).unwrap());
        let r = g.submit(pilot, &frame(k + 1, t, input(t), 0.5)).unwrap();
        assert!(matches!(r, Submit::Accepted { .. }));
    }
    out.extend(g.advance_to(seconds * 1000.0).unwrap());
    out
}

#[test]
fn steady_stream_latency_below_rtt_plus_period() {
    let mut g = Gateway::new(GatewayConfig::default()).unwrap();
    run_50hz(&mut g, 5.0, |t| [0.3 * (t / 700.0).sin(), 0.2, -0.1]);
    let stats = g.stats();
    assert_eq!(stats.forwarded, 250, "every 50 Hz frame gets its own bus period");
    assert_eq!(stats.coalesced, 0);
    assert_eq!(stats.latency.count, 250);
    let bound = RTT_FAR_MS + PERIOD_MS;
    assert!(
        stats.latency.max_ms < bound,
        "max latency {} ms >= {bound} ms",
        stats.latency.max_ms
    );
    assert!(stats.latency.mean_ms > RTT_FAR_MS - 1.0);
}

#[test]
fn conforming_client_sees_state_at_bus_rate_without_clamp_flags() {
    let mut g = Gateway::new(GatewayConfig::default()).unwrap();
    let limit = g.policy().yaw_rad;
    let msgs = run_50hz(&mut g, 4.0, |t| [limit * (t / 300.0).sin(), -limit, limit]);
    let st = states(&msgs);
    let rate = st.len() as f64 / 4.0;
    assert!(rate >= 30.0, "state rate {rate} Hz");
    assert!(st.iter().all(|s| s.clamped.iter().all(|c| !c)));
    assert!(!msgs.iter().any(|m| matches!(m, ServerMessage::Error { .. })));
    // liveness: never more than two bus periods without a state update
    let gap = st.windows(2).map(|w| w[1].t_ms - w[0].t_ms).fold(0.0, f64::max);
    assert!(gap <= 2.0 * PERIOD_MS, "gap {gap}");
}

#[test]
fn out_of_box_input_is_flagged_in_state() {
    let mut g = Gateway::new(GatewayConfig::default()).unwrap();
    let msgs = run_50hz(&mut g, 0.5, |_| [0.0, 95f64.to_radians(), 0.0]);
    let last = *states(&msgs).last().unwrap();
    assert_eq!(last.clamped, vec![false, true, false]);
    let target = g.bus().nodes()[2].target[1];
    assert_eq!(target, 80f64.to_radians());
}

#[test]
fn joints_follow_a_held_command() {
    let mut g = Gateway::new(GatewayConfig::default()).unwrap();
    run_50hz(&mut g, 2.0, |_| [0.4, -0.4, 0.4]);
    let s = g.snapshot();
    for (j, want) in s.joints.iter().zip([0.4, -0.4, 0.4]) {
        assert!((j.yaw_rad - want).abs() < 1e-3, "{:?}", s.joints);
    }
    // the simulated chain follows the actuators behind the bus
    let sim = g.simulation().state().joints.deflections();
    for (d, want) in sim.iter().zip([0.4, -0.4, 0.4]) {
        assert!((d - want).abs() < 1e-2, "{sim:?}");
    }
    assert!(s.speeds.iter().all(|v| *v > 0.0));
}

#[test]
fn straight_tunneling_drives_forward() {
    let mut g = Gateway::new(GatewayConfig::default()).unwrap();
    let p = g.connect_pilot().unwrap();
    let mut f = frame(1, 0.0, [0.0; 3], 1.0);
    f.mode = Some(FrameMode::Tunneling);
    g.submit(p, &f).unwrap();
    for k in 0..50u64 {
        g.advance_to(20.0 * (k + 1) as f64).unwrap();
        g.submit(p, &frame(k + 2, 0.0, [0.0; 3], 1.0)).unwrap();
    }
    let s = g.snapshot();
    assert!(s.pose.x > 0.1, "{:?}", s.pose);
    assert!(s.pose.y.abs() < 1e-9);
}

#[test]
fn hold_declared_once_after_silence() {
    let mut g = Gateway::new(GatewayConfig::default()).unwrap();
    let msgs = run_50hz(&mut g, 1.0, |_| [0.1; 3]);
    assert!(!msgs.iter().any(|m| matches!(m, ServerMessage::Error { .. })));
    // last frame at 980 ms: hold from 1480 ms
    let quiet = g.advance_to(1470.0).unwrap();
    assert!(!quiet.iter().any(|m| matches!(m, ServerMessage::Error { .. })));
    let later = g.advance_to(3000.0).unwrap();
    let holds: Vec<_> = later
        .iter()
        .filter(|m| matches!(m, ServerMessage::Error { code: ErrorCode::Hold, .. }))
        .collect();
    assert_eq!(holds.len(), 1);
    assert!(g.stats().hold);
    // state keeps flowing while holding
    assert!(states(&later).len() >= 100);
}

#[test]
fn policy_looser_than_robot_is_refused() {
    let cfg = GatewayConfig {
        policy: ClampPolicy::symmetric(95f64.to_radians()),
        ..GatewayConfig::default()
    };
    assert!(Gateway::new(cfg).is_err());
}

fn any_angle() -> impl Strategy<Value = f64> {
    prop_oneof![
        -10.0..10.0f64,
        Just(f64::NAN),
        Just(f64::INFINITY),
        Just(1e300),
        Just(-1e300),
    ]
}

fn any_frame() -> impl Strategy<Value = TeleopFrame> {
    (
        prop::collection::vec((any_angle(), any_angle()), 0..5),
        any_angle(),
        prop::option::of(prop_oneof![
            Just(FrameMode::Teleop),
            Just(FrameMode::Tunneling),
            Just(FrameMode::MConfig)
        ]),
    )
        .prop_map(|(joints, screw, mode)| TeleopFrame {
            seq: 0,
            t_ms: 0.0,
            joints: joints.into_iter().map(|(p, y)| JointAngles::new(p, y)).collect(),
            screw,
            mode,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn clamp_is_idempotent(f in any_frame()) {
        let policy = ClampPolicy::default();
        if let Ok(once) = policy.clamp(&f) {
            let twice = policy.clamp(&once.to_frame()).unwrap();
            prop_assert_eq!(&twice.joints, &once.joints);
            prop_assert_eq!(twice.screw, once.screw);
            prop_assert!(!twice.any_clamped());
            for j in &once.joints {
                prop_assert!(j.pitch_rad.abs() <= policy.pitch_rad && j.yaw_rad.abs() <= policy.yaw_rad);
            }
        }
    }

    #[test]
    fn no_setpoint_exceeds_robot_limits(frames in prop::collection::vec(any_frame(), 1..30)) {
        let mut g = Gateway::new(GatewayConfig::default()).unwrap();
        let p = g.connect_pilot().unwrap();
        for (k, mut f) in frames.into_iter().enumerate() {
            f.seq = k as u64 + 1;
            let _ = g.submit(p, &f);
            g.advance_to((k + 1) as f64 * 20.0).unwrap();
            for n in g.bus().nodes() {
                prop_assert!(n.target[0].abs() <= FRAC_PI_2 && n.target[1].abs() <= FRAC_PI_2);
            }
        }
        prop_assert!(g.stats().max_setpoint_rad <= FRAC_PI_2);
        prop_assert_eq!(g.snapshot().joints.len(), N_JOINTS);
    }
}
