use std::collections::HashMap;

use semcom_core::simulator::{run_experiment, Method, SimConfig};

fn base() -> SimConfig {
    SimConfig { n_users: 5, n_steps: 60, master_seed: 31, ..Default::default() }
}

#[test]
fn without_outages_fallback_matches_llm_gate() {
    let cfg = SimConfig {
        outage_prob: 0.0,
        train: false,
        methods: vec![Method::LlmGate, Method::DrlFallback],
        ..base()
    };
    let res = run_experiment(&cfg).unwrap();
    let llm: Vec<_> = res.records.iter().filter(|r| r.method == Method::LlmGate).collect();
    let fb: Vec<_> = res.records.iter().filter(|r| r.method == Method::DrlFallback).collect();
    assert_eq!(llm.len(), fb.len());
    for (a, b) in llm.iter().zip(&fb) {
        assert_eq!((a.step, a.user, a.action_mask), (b.step, b.user, b.action_mask));
        assert_eq!(a.fidelity, b.fidelity);
    }
    let q = res.result(Method::DrlFallback).unwrap().llm_queries;
    assert_eq!(q, 300);
}

#[test]
fn full_outage_never_queries() {
    let cfg = SimConfig { outage_prob: 1.0, methods: vec![Method::DrlFallback], ..base() };
    let res = run_experiment(&cfg).unwrap();
    assert_eq!(res.result(Method::DrlFallback).unwrap().llm_queries, 0);
}

#[test]
fn every_method_sees_the_same_environment() {
    let res = run_experiment(&base()).unwrap();
    let mut seen: HashMap<(usize, usize), (String, u64)> = HashMap::new();
    for r in &res.records {
        let obs = (r.category.to_string(), r.snr_db.to_bits());
        let prev = seen.entry((r.step, r.user)).or_insert_with(|| obs.clone());
        assert_eq!(*prev, obs, "step {} user {}", r.step, r.user);
    }
    assert_eq!(seen.len(), 300);
}

#[test]
fn method_subset_does_not_change_shared_results() {
    let all = run_experiment(&base()).unwrap();
    let one = run_experiment(&SimConfig { methods: vec![Method::Random], ..base() }).unwrap();
    let from_all: Vec<_> = all.records.iter().filter(|r| r.method == Method::Random).cloned().collect();
    assert_eq!(from_all, one.records);
}

#[test]
fn rewards_stay_in_unit_interval() {
    let res = run_experiment(&base()).unwrap();
    for r in &res.records {
        assert!((0.0..=1.0).contains(&r.reward));
        assert!((1..=5).contains(&r.attempts));
        assert!(r.action_mask != 0 && r.action_mask < 32);
    }
    for m in &res.results {
        assert_eq!(m.reward_series.len(), 60);
        assert_eq!(m.decisions, 300);
    }
}
