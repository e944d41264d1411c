use kquorum::harness::{
    bundled, bundled_names, bundled_source, check_requirements, run_scenario, ConfigError, ScenarioConfig, Verdict,
};
use kquorum::protocol::ProtocolEvent;
use kquorum::simnet::{EndStatus, Trace};

fn events<'a>(trace: &'a Trace) -> impl Iterator<Item = &'a ProtocolEvent> + 'a {
    trace.events().map(|(_, _, _, e)| e)
}

#[test]
fn bundled_defaults_pass() {
    for name in bundled_names() {
        let cfg = bundled(name).unwrap();
        let out = run_scenario(&cfg, None).unwrap();
        assert_eq!(out.report.exit_code(), 0, "{name}:\n{}", out.report.render());
        assert_eq!(out.trace.end(), Some(EndStatus::Quiescent), "{name}");
        assert!(out.warnings.iter().any(|w| w.starts_with("feasibility override")), "{name}");
    }
}

#[test]
fn bundled_sources_roundtrip_through_toml() {
    for name in bundled_names() {
        let cfg = ScenarioConfig::from_toml(bundled_source(name).unwrap()).unwrap();
        assert_eq!(ScenarioConfig::from_toml(&cfg.to_toml()).unwrap(), cfg, "{name}");
    }
}

#[test]
fn over_k1_aborts_settlement() {
    let out = run_scenario(&bundled("over-k1-abort").unwrap(), None).unwrap();
    assert!(events(&out.trace).any(|e| matches!(e, ProtocolEvent::SettlementAborted { .. })));
    assert!(!events(&out.trace).any(|e| matches!(e, ProtocolEvent::BuyerSettled { .. })));
    assert!(out.report.safety_ok());
}

#[test]
fn honest_k1_leaves_expected_balance() {
    let cfg = bundled("honest-k1").unwrap();
    let out = run_scenario(&cfg, None).unwrap();
    let settled: Vec<u64> = events(&out.trace)
        .filter_map(|e| match e {
            ProtocolEvent::BuyerSettled { fund, .. } => Some(fund.fbl),
            _ => None,
        })
        .collect();
    assert_eq!(settled, vec![5000]);
    let paid: Vec<u64> = events(&out.trace)
        .filter_map(|e| match e {
            ProtocolEvent::SellerSettled { fund, .. } => Some(fund.fbl),
            _ => None,
        })
        .collect();
    assert_eq!(paid, vec![1000]);
}

#[test]
fn erased_evidence_still_deducts() {
    let out = run_scenario(&bundled("erase-after-buyer-settle").unwrap(), None).unwrap();
    let r5 = out.report.requirement(5);
    assert_eq!(r5.verdict, Verdict::Pass, "{}", r5.detail);
    assert!(!r5.witness.is_empty());
    assert!(out.trace.records.iter().any(|r| matches!(r, kquorum::simnet::Record::AdversaryAction { action, accepted: true, .. } if action.contains("erase"))));
}

#[test]
fn double_spend_stays_within_k2_prime() {
    let cfg = bundled("double-spend-greedy").unwrap();
    let k2p = cfg.params.build().unwrap().k2_prime().unwrap();
    for seed in [3, 30, 300] {
        let out = run_scenario(&cfg, Some(seed)).unwrap();
        for fund in &out.report.funds {
            assert!(fund.certificates <= k2p, "seed {seed}: {} > {k2p}", fund.certificates);
            assert!(fund.certified_value <= fund.balance);
        }
        assert!(out.report.safety_ok(), "seed {seed}\n{}", out.report.render());
    }
}

#[test]
fn truncated_run_is_inconclusive() {
    let mut cfg = bundled("honest-k1").unwrap();
    cfg.sim.step_cap = 200;
    let out = run_scenario(&cfg, None).unwrap();
    assert_eq!(out.trace.end(), Some(EndStatus::Timeout));
    assert_eq!(out.report.requirement(1).verdict, Verdict::Inconclusive);
    assert_eq!(out.report.exit_code(), 3, "{}", out.report.render());
}

#[test]
fn rechecking_a_reloaded_trace_matches() {
    let out = run_scenario(&bundled("corrupt-seller-flip").unwrap(), None).unwrap();
    let back = Trace::read_jsonl(out.trace.to_jsonl().as_bytes()).unwrap();
    assert_eq!(check_requirements(&back).unwrap(), out.report);
}

#[test]
fn same_seed_same_trace() {
    let cfg = bundled("propagate-race").unwrap();
    let a = run_scenario(&cfg, Some(9)).unwrap().trace;
    let b = run_scenario(&cfg, Some(9)).unwrap().trace;
    assert_eq!(a.to_jsonl(), b.to_jsonl());
    let c = run_scenario(&cfg, Some(10)).unwrap().trace;
    assert_ne!(a.digest(), c.digest());
}

#[test]
fn unknown_key_reports_its_line() {
    let src = bundled_source("honest-k1").unwrap();
    let at = src.lines().position(|l| l == "[params]").unwrap() + 1;
    let src = src.replacen("[params]\n", "[params]\nnn = 25\n", 1);
    let err = ScenarioConfig::from_toml(&src).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, ConfigError::Parse(_)));
    assert!(msg.contains(&format!("line {}", at + 1)), "{msg}");
    assert!(msg.contains("unknown field `nn`"), "{msg}");
}

#[test]
fn stray_strategy_key_is_rejected() {
    let src = format!("{}\ngrind = 3\n", bundled_source("honest-k1").unwrap());
    assert!(matches!(ScenarioConfig::from_toml(&src), Err(ConfigError::Parse(_))));
}

#[test]
fn unknown_client_names_the_field() {
    let mut cfg = bundled("honest-k1").unwrap();
    if let Some(kquorum::harness::WorkItem::Pay { seller, .. }) = cfg.workload.first_mut() {
        *seller = "eve".into();
    }
    match cfg.prepare() {
        Err(ConfigError::Field { field, message }) => {
            assert_eq!(field, "workload[0].seller");
            assert!(message.contains("eve"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn infeasible_needs_override() {
    let mut cfg = bundled("honest-k1").unwrap();
    cfg.allow_infeasible = false;
    assert!(matches!(cfg.prepare(), Err(ConfigError::Infeasible(_))));
}

#[test]
fn bad_params_and_latency_are_rejected() {
    let mut cfg = bundled("honest-k1").unwrap();
    cfg.params.k1 = cfg.params.k2;
    assert!(matches!(cfg.prepare(), Err(ConfigError::Params(_))));
    let mut cfg = bundled("honest-k1").unwrap();
    cfg.sim.latency_min = 0;
    assert!(matches!(cfg.prepare(), Err(ConfigError::Field { .. })));
}
