use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kquorum::crypto::{hash, reconstruct_secret, secret_share, KeyPair, Nonce};
use kquorum::harness::{bundled, check_requirements, Verdict};
use kquorum::ledger::{Fund, FundHeader, TransactionId};
use kquorum::montecarlo::{exact_intersection, exact_nonintersection, wilson, CorruptModel, Mode, PriorModel, Z95};
use kquorum::params::QuorumParams;
use kquorum::protocol::Message;
use kquorum::selection::{select_from_seed, select_quorum, verify_quorum, Quorum};
use kquorum::simnet::{AdvCtx, SendInfo, SendVerdict, Simulation, Strategy, Trace};

/// Delays or holds messages at random and releases held ones on timers.
struct RandomDelay {
    max_extra: u64,
    hold_prob: f64,
}

impl Strategy for RandomDelay {
    fn name(&self) -> &str {
        "random-delay"
    }

    fn on_start(&mut self, ctx: &mut AdvCtx<'_>) {
        for t in 1..200 {
            ctx.schedule(t * 37, t);
        }
    }

    fn on_send(&mut self, ctx: &mut AdvCtx<'_>, _info: &SendInfo, _payload: Option<&Message>) -> SendVerdict {
        let hold = ctx.rng().gen_bool(self.hold_prob);
        if hold {
            SendVerdict::Hold
        } else {
            SendVerdict::Delay(ctx.rng().gen_range(0..=self.max_extra))
        }
    }

    fn on_timer(&mut self, ctx: &mut AdvCtx<'_>, _tag: u64) {
        let mut held = ctx.held();
        held.shuffle(ctx.rng());
        let now = ctx.now();
        for m in held.into_iter().take(5) {
            let at = now + ctx.rng().gen_range(0..500);
            ctx.release(m, at);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn any_threshold_subset_reconstructs(
        msg in prop::collection::vec(any::<u8>(), 0..80),
        total in 1usize..9,
        t_frac in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let threshold = 1 + ((total - 1) as f64 * t_frac) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = secret_share(&msg, total, threshold, &mut rng).unwrap();
        let mut shares = set.shares.clone();
        shares.shuffle(&mut rng);
        prop_assert_eq!(reconstruct_secret(&shares[..threshold], threshold).unwrap(), msg.clone());
        if threshold > 1 {
            prop_assert!(reconstruct_secret(&shares[..threshold - 1], threshold).is_err());
        }
    }

    #[test]
    fn selection_is_deterministic_distinct_in_range(seed in any::<u64>(), n in 1usize..300, m_frac in 0.0f64..1.0) {
        let m = 1 + ((n - 1) as f64 * m_frac) as usize;
        let a = select_from_seed(&seed.to_le_bytes(), n, m).unwrap();
        prop_assert_eq!(&a, &select_from_seed(&seed.to_le_bytes(), n, m).unwrap());
        prop_assert_eq!(a.as_set().len(), m);
        prop_assert!(a.members.iter().all(|&v| v < n));
    }

    #[test]
    fn verify_accepts_exactly_the_selected_set(seed in any::<u64>(), swap in any::<prop::sample::Index>()) {
        let (n, m) = (40, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (b, s) = (KeyPair::generate(&mut rng).public(), KeyPair::generate(&mut rng).public());
        let fund = Fund { header: FundHeader::new(hash(&seed.to_le_bytes()), 100, [b]), fcert: vec![] };
        let tid = TransactionId { fund, buyer: b, seller: s };
        let ns = Nonce::draw(&mut rng, 128);
        let q = select_quorum(&tid, &ns, n, m).unwrap();
        let mut reordered = q.members.clone();
        reordered.reverse();
        let same = Quorum { members: reordered.clone() };
        prop_assert!(verify_quorum(&tid, &ns, n, m, &same));
        let outsider = (0..n).find(|v| !q.contains(*v)).unwrap();
        let i = swap.index(m);
        reordered[i] = outsider;
        let other = Quorum { members: reordered };
        prop_assert!(!verify_quorum(&tid, &ns, n, m, &other));
    }

    #[test]
    fn wilson_contains_point_estimate(trials in 1u64..1_000_000, frac in 0.0f64..=1.0) {
        let s = (trials as f64 * frac) as u64;
        let ci = wilson(s, trials, Z95);
        prop_assert!(0.0 <= ci.lower && ci.upper <= 1.0);
        prop_assert!(ci.contains(s as f64 / trials as f64));
    }

    #[test]
    fn exact_probabilities_are_probabilities(
        n in 6usize..=30, f_frac in 0.0f64..0.3, m_frac in 0.05f64..0.4, k1 in 1usize..3, extra in 1usize..4,
    ) {
        let f = (n as f64 * f_frac) as usize;
        let m = ((n as f64 * m_frac) as usize).max(1);
        let Ok(p) = QuorumParams::canonical(n, f, m, k1, k1 + extra, 0.5) else { return Ok(()) };
        for prior in [PriorModel::Disjoint, PriorModel::Independent] {
            for corrupt in [CorruptModel::RandomPrefix, CorruptModel::None] {
                let mut values = Vec::new();
                if let Ok(e) = exact_nonintersection(&p, prior, corrupt) { values.push(e); }
                for mode in [Mode::Sync, Mode::Async] {
                    if let Ok(d) = exact_intersection(&p, prior, corrupt, mode) { values.push(d); }
                }
                prop_assert!(values.iter().all(|v| (0.0..=1.0).contains(v)), "{values:?}");
            }
        }
    }
}

fn run_random_delay(seed: u64, max_extra: u64, hold_prob: f64) -> Trace {
    let cfg = bundled("honest-k1").unwrap();
    let prepared = cfg.prepare().unwrap();
    let mut strategy = RandomDelay { max_extra, hold_prob };
    let mut sim = Simulation::new(&prepared.scenario, "random-delay", seed).unwrap();
    sim.run(&mut strategy);
    sim.into_trace()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn random_delays_never_breach_the_cap(seed in any::<u64>(), max_extra in 0u64..2_000, hold_prob in 0.0f64..0.5) {
        let trace = run_random_delay(seed, max_extra, hold_prob);
        let report = check_requirements(&trace).unwrap();
        let delivery = report.get("delivery").unwrap();
        prop_assert_eq!(delivery.verdict, Verdict::Pass, "{}", delivery.detail);
        prop_assert!(report.safety_ok(), "{}", report.render());
    }

    #[test]
    fn jsonl_roundtrip_preserves_trace(seed in any::<u64>()) {
        let trace = run_random_delay(seed, 50, 0.1);
        let text = trace.to_jsonl();
        let back = Trace::read_jsonl(text.as_bytes()).unwrap();
        prop_assert_eq!(back.digest(), trace.digest());
        prop_assert_eq!(back, trace);
    }
}
