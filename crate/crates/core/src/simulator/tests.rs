use super::*;
use crate::metaorder::reconstruct;
use crate::propagator::discrete_sum_impact;
use crate::tape::{parse_tape, split_sessions, EventKind};

fn small() -> SimConfig {
    let mut c = SimConfig::preset_paper_like();
    c.days = 1;
    c.slow.count = 40;
    c.fast.count = 3;
    c
}

#[test]
fn zero_noise_single_metaorder_is_kernel_superposition() {
    let mut c = small();
    c.noise = 0.0;
    c.slow.count = 1;
    c.slow.participation = 1.0;
    c.slow.size_min = 40_000;
    c.slow.size_max = 40_000;
    c.fast.count = 0;
    c.days = 1;
    let sim = simulate(&c).unwrap();
    let truth = &sim.ledger.sessions[0];
    let m = &truth.metaorders[0];
    assert!(m.n > 5);
    let k0 = discrete_sum_impact(&[1.0], &[0.0], 0.0, &c.propagator);
    for (i, o) in truth.orders.iter().enumerate() {
        let t = o.ts_ns;
        let (mut sizes, mut times) = (Vec::new(), Vec::new());
        let mut held = 0.0;
        for p in &truth.orders[..i] {
            match p.kernel_start_ns {
                Some(s) if s < t => {
                    sizes.push(p.size as f64);
                    times.push(s as f64 / 1e9);
                }
                _ if p.immediate => held += (p.size as f64).sqrt() * k0,
                _ => {}
            }
        }
        let expect = o.side.signum() * (held + discrete_sum_impact(&sizes, &times, t as f64 / 1e9, &c.propagator));
        assert!((o.pre_impact - expect).abs() <= 1e-12 * expect.abs().max(1e-300), "{} vs {expect}", o.pre_impact);
    }
    // quotes carry the same path up to tick rounding
    let session = &sim.sessions[0];
    let ln_m0 = (c.initial_mid_ticks as f64).ln();
    for (mo, o) in session.market_orders().iter().zip(&truth.orders) {
        let diff = mo.pre_log_mid.unwrap() - (ln_m0 + o.pre_impact);
        assert!(diff.abs() < 1.0 / c.initial_mid_ticks as f64, "{diff}");
    }
}

#[test]
fn same_seed_same_bytes() {
    let c = small();
    let a = simulate(&c).unwrap().write_tape(Vec::new()).unwrap();
    let b = simulate(&c).unwrap().write_tape(Vec::new()).unwrap();
    assert_eq!(a, b);
    let mut streamed = Vec::new();
    stream_tape(&c, &mut streamed).unwrap();
    assert_eq!(a, streamed);
    let mut other = c.clone();
    other.seed += 1;
    assert_ne!(a, simulate(&other).unwrap().write_tape(Vec::new()).unwrap());
}

#[test]
fn tape_round_trips_and_matches_ledger() {
    let c = small();
    let sim = simulate(&c).unwrap();
    let bytes = sim.write_tape(Vec::new()).unwrap();
    let events = parse_tape(&bytes[..]).unwrap();
    assert_eq!(events.len(), sim.events());
    let sessions = split_sessions(events, &sim.meta);
    assert_eq!(sessions.len(), 2);
    for (s, truth) in sessions.iter().zip(&sim.ledger.sessions) {
        assert_eq!(s.key, truth.key);
        assert_eq!(s.volume, truth.volume);
        assert_eq!(s.volume, truth.metaorders.iter().map(|m| m.volume).sum::<u64>());
        let mos = s.market_orders();
        assert_eq!(mos.len(), truth.orders.len());
        for (mo, o) in mos.iter().zip(&truth.orders) {
            assert_eq!((mo.ts_ns, mo.size, mo.side), (o.ts_ns, o.size, o.side));
            assert_eq!(mo.trader(s), o.trader_id);
            assert_eq!(mo.no_immediate_impact(), !o.immediate);
            if !o.immediate {
                assert_eq!(mo.pre_log_mid, mo.post_log_mid);
            }
        }
        let rebuilt = reconstruct(s);
        assert_eq!(rebuilt.len(), truth.metaorders.len());
        for (r, m) in rebuilt.iter().zip(&truth.metaorders) {
            assert_eq!(r.trader_id, m.trader_id);
            assert_eq!(r.side, m.side);
            assert_eq!(r.volume, m.volume);
            let times: Vec<i64> = r.children.iter().map(|c| c.ts_ns).collect();
            assert_eq!(times, m.child_times);
        }
    }
}

#[test]
fn every_agent_is_labelled() {
    let c = small();
    let sim = simulate(&c).unwrap();
    assert_eq!(sim.ledger.agents.len(), c.n_traders());
    for s in &sim.sessions {
        for e in &s.events {
            if e.kind != EventKind::Limit || e.trader_id != "Q" {
                assert!(sim.ledger.label(&e.trader_id).is_some(), "{}", e.trader_id);
            }
        }
    }
}

#[test]
fn config_round_trips_through_toml() {
    let c = SimConfig::preset_paper_like();
    assert_eq!(SimConfig::from_toml(&c.to_toml()).unwrap(), c);
    let mut bad = c.clone();
    bad.spread_ticks = 3;
    assert!(matches!(bad.validate(), Err(SimError::ConfigInvalid(_))));
    assert!(matches!(SimConfig::from_toml("seed = 1"), Err(SimError::ConfigInvalid(_))));
}
