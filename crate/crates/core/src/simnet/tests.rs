use super::strategies::{Passive, SilentValidators};
use super::*;
use crate::params::QuorumParams;

fn small() -> QuorumParams {
    QuorumParams::canonical(25, 3, 5, 1, 4, 0.5).unwrap()
}

fn scenario(intents: Vec<Intent>) -> Scenario {
    Scenario {
        params: small(),
        clients: vec!["alice".into(), "bob".into()],
        funds: vec![FundSpec { name: "genesis-a".into(), owner: 25, balance: 6000 }],
        intents,
        config: SimConfig::default(),
    }
}

fn pay() -> Intent {
    Intent::Pay { at: 0, buyer: 25, fund: 0, seller: 26 }
}

fn kinds(t: &Trace, kind: &str) -> usize {
    t.records.iter().filter(|r| matches!(r, Record::Send { kind: k, .. } if k == kind)).count()
}

fn run(s: &Scenario, strategy: &mut dyn Strategy, seed: u64) -> Simulation {
    let mut sim = Simulation::new(s, strategy.name(), seed).unwrap();
    sim.run(strategy);
    sim
}

#[test]
fn empty_workload_is_setup_and_end() {
    let sim = run(&scenario(vec![]), &mut Passive, 1);
    let t = sim.trace();
    assert_eq!(t.records.len(), 2);
    assert!(matches!(t.records[0], Record::Setup { .. }));
    assert_eq!(t.end(), Some(EndStatus::Quiescent));
}

#[test]
fn same_seed_same_trace() {
    let s = scenario(vec![pay(), Intent::SellerSettle { at: 200, seller: 26 }]);
    let a = run(&s, &mut Passive, 7).into_trace();
    let b = run(&s, &mut Passive, 7).into_trace();
    assert_eq!(a.to_jsonl(), b.to_jsonl());
    assert_eq!(a.digest(), b.digest());
    let c = run(&s, &mut Passive, 8).into_trace();
    assert_ne!(a.digest(), c.digest());
}

#[test]
fn honest_payment_message_counts() {
    let sim = run(&scenario(vec![pay()]), &mut Passive, 3);
    let t = sim.trace();
    let m = small().m;
    assert_eq!(kinds(t, "PAY"), 1);
    assert_eq!(kinds(t, "QUORUM"), 1);
    assert_eq!(kinds(t, "SIGNED_QUORUM"), 1);
    assert_eq!(kinds(t, "VALIDATION_REQUEST"), m);
    assert!(kinds(t, "VALID") >= small().witness_threshold());
    assert!(t.events().any(|(_, _, _, e)| matches!(e, ProtocolEvent::PaymentCertified { .. })));
}

#[test]
fn jsonl_roundtrip() {
    let sim = run(&scenario(vec![pay()]), &mut Passive, 3);
    let text = sim.trace().to_jsonl();
    let back = Trace::read_jsonl(text.as_bytes()).unwrap();
    assert_eq!(&back, sim.trace());
    assert_eq!(back.digest(), sim.trace().digest());
}

struct DelayAll(u64);

impl Strategy for DelayAll {
    fn name(&self) -> &str {
        "delay-all"
    }

    fn on_send(&mut self, _ctx: &mut AdvCtx<'_>, _info: &SendInfo, _p: Option<&Message>) -> SendVerdict {
        SendVerdict::Delay(self.0)
    }
}

#[test]
fn delays_past_the_horizon_are_rejected() {
    let sim = run(&scenario(vec![pay()]), &mut DelayAll(500), 3);
    let t = sim.trace();
    let rejected = t
        .records
        .iter()
        .filter(|r| matches!(r, Record::AdversaryAction { action, accepted: false, .. } if action == "delay"))
        .count();
    assert!(rejected > 0);
    for r in &t.records {
        if let Record::Send { time, deliver_at: Some(at), .. } = r {
            assert!(at - time <= 100);
        }
    }
    // within the horizon is fine
    let sim = run(&scenario(vec![pay()]), &mut DelayAll(50), 3);
    assert!(!sim.trace().records.iter().any(|r| matches!(r, Record::AdversaryAction { accepted: false, .. })));
}

struct HoldAll;

impl Strategy for HoldAll {
    fn name(&self) -> &str {
        "hold-all"
    }

    fn on_send(&mut self, _ctx: &mut AdvCtx<'_>, _info: &SendInfo, _p: Option<&Message>) -> SendVerdict {
        SendVerdict::Hold
    }
}

#[test]
fn honest_traffic_cannot_be_held() {
    let sim = run(&scenario(vec![pay()]), &mut HoldAll, 4);
    assert!(sim.trace().events().any(|(_, _, _, e)| matches!(e, ProtocolEvent::PaymentCertified { .. })));
}

struct Budget;

impl Strategy for Budget {
    fn name(&self) -> &str {
        "budget"
    }

    fn on_start(&mut self, ctx: &mut AdvCtx<'_>) {
        for v in 0..=ctx.f() {
            ctx.corrupt(v);
        }
        ctx.corrupt(ctx.n());
        ctx.corrupt(ctx.n() + 1);
    }
}

#[test]
fn validator_budget_is_enforced() {
    let sim = run(&scenario(vec![]), &mut Budget, 1);
    let f = small().f;
    assert_eq!(sim.corrupted().range(..25).count(), f);
    // clients are not budgeted
    assert!(sim.corrupted().contains(&25) && sim.corrupted().contains(&26));
    assert!(sim
        .trace()
        .records
        .iter()
        .any(|r| matches!(r, Record::AdversaryAction { action, accepted: false, .. } if action == "corrupt")));
}

struct CorruptSeller;

impl Strategy for CorruptSeller {
    fn name(&self) -> &str {
        "corrupt-seller"
    }

    fn on_start(&mut self, ctx: &mut AdvCtx<'_>) {
        ctx.corrupt(26);
    }
}

#[test]
fn corrupt_seller_reveals_the_quorum() {
    let sim = run(&scenario(vec![pay()]), &mut CorruptSeller, 5);
    let (tid, quorum) = sim
        .trace()
        .events()
        .find_map(|(_, _, _, e)| match e {
            ProtocolEvent::QuorumSelected { tid, quorum, .. } => Some((*tid, quorum.clone())),
            _ => None,
        })
        .unwrap();
    assert!(sim.view().quorum_known(&tid));
    let mut sorted = quorum.clone();
    sorted.sort();
    let known = sim
        .view()
        .entries()
        .iter()
        .find_map(|e| match &e.fact {
            Fact::Quorum { tid: t, members } if *t == tid => Some(members.clone()),
            _ => None,
        })
        .unwrap();
    let mut known_sorted = known;
    known_sorted.sort();
    assert_eq!(known_sorted, sorted);
}

#[test]
fn honest_run_leaks_nothing() {
    let sim = run(&scenario(vec![pay(), Intent::SellerSettle { at: 100, seller: 26 }]), &mut Passive, 6);
    assert!(sim.view().entries().is_empty());
}

#[test]
fn silent_validators_do_not_block() {
    let s = scenario(vec![pay(), Intent::SellerSettle { at: 200, seller: 26 }]);
    let sim = run(&s, &mut SilentValidators { count: 3 }, 9);
    let t = sim.trace();
    assert_eq!(t.end(), Some(EndStatus::Quiescent));
    let certified = t.events().any(|(_, _, _, e)| matches!(e, ProtocolEvent::PaymentCertified { .. }));
    let settled = t.events().any(|(_, _, _, e)| matches!(e, ProtocolEvent::SellerSettled { .. }));
    // a quorum of 5 with silent members may legitimately fail to certify
    assert!(!certified || settled);
}

#[test]
fn step_cap_marks_timeout() {
    let mut s = scenario(vec![pay()]);
    s.config.step_cap = 5;
    let sim = run(&s, &mut Passive, 1);
    assert_eq!(sim.trace().end(), Some(EndStatus::Timeout));
}
