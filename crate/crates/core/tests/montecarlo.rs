use kquorum::montecarlo::{
    estimate_all, estimate_flip_budget, estimate_intersection, exact_intersection, exact_nonintersection, sweep_k1,
    sweep_k2, to_csv, to_json, CorruptModel, McError, McVerdict, Mode, PriorModel, TrialConfig,
};
use kquorum::params::QuorumParams;

fn mid() -> QuorumParams {
    QuorumParams::canonical(200, 20, 20, 1, 8, 0.5).unwrap()
}

#[test]
fn nonintersection_rate_grows_with_k1() {
    let cfg = TrialConfig::new(mid(), 4_000, 11);
    let rates = sweep_k1(&cfg, &[1, 2, 3, 4, 6, 8]).unwrap();
    assert!(rates.windows(2).all(|w| w[0] <= w[1]), "{rates:?}");
    assert!(rates[5] > rates[0]);
}

#[test]
fn intersection_rate_shrinks_with_k2() {
    let cfg = TrialConfig::new(mid(), 4_000, 12);
    for mode in [Mode::Sync, Mode::Async] {
        let rates = sweep_k2(&cfg, &[1, 2, 3, 5, 7, 9], mode).unwrap();
        assert!(rates.windows(2).all(|w| w[0] >= w[1]), "{mode:?} {rates:?}");
    }
}

#[test]
fn disjoint_priors_must_fit() {
    let cfg = TrialConfig::new(mid(), 10, 1);
    assert!(matches!(sweep_k1(&cfg, &[11]), Err(McError::DisjointOverflow { .. })));
    let empty = TrialConfig::new(mid(), 0, 1);
    assert_eq!(estimate_all(&empty).unwrap_err(), McError::NoTrials);
}

#[test]
fn exact_is_monotone_in_k() {
    for prior in [PriorModel::Disjoint, PriorModel::Independent] {
        let eps: Vec<f64> = (1..=5)
            .map(|k| {
                let p = QuorumParams::canonical(24, 3, 4, k, 6, 0.5).unwrap();
                exact_nonintersection(&p, prior, CorruptModel::RandomPrefix).unwrap()
            })
            .collect();
        assert!(eps.windows(2).all(|w| w[0] <= w[1] + 1e-12), "{prior:?} {eps:?}");
        let delta: Vec<f64> = (2..=6)
            .map(|k| {
                let p = QuorumParams::canonical(24, 3, 4, 1, k, 0.5).unwrap();
                exact_intersection(&p, prior, CorruptModel::RandomPrefix, Mode::Sync).unwrap()
            })
            .collect();
        assert!(delta.windows(2).all(|w| w[0] + 1e-12 >= w[1]), "{prior:?} {delta:?}");
    }
}

#[test]
fn async_intersection_is_no_easier() {
    let p = QuorumParams::canonical(20, 3, 5, 1, 3, 0.5).unwrap();
    for prior in [PriorModel::Disjoint, PriorModel::Independent] {
        let sync = exact_intersection(&p, prior, CorruptModel::RandomPrefix, Mode::Sync).unwrap();
        let asy = exact_intersection(&p, prior, CorruptModel::RandomPrefix, Mode::Async).unwrap();
        assert!(asy >= sync, "{prior:?}: async {asy} < sync {sync}");
    }
    let cfg = TrialConfig::new(mid(), 3_000, 5);
    let s = estimate_intersection(&cfg, Mode::Sync).unwrap();
    let a = estimate_intersection(&cfg, Mode::Async).unwrap();
    assert!(a.violations >= s.violations);
}

#[test]
fn exact_refuses_large_n() {
    let p = QuorumParams::canonical(31, 3, 5, 1, 3, 0.5).unwrap();
    assert_eq!(exact_nonintersection(&p, PriorModel::Disjoint, CorruptModel::None), Err(McError::TooLargeForExact(31)));
}

#[test]
fn verdicts_are_stable_across_seeds() {
    let p = QuorumParams::canonical(1000, 100, 40, 1, 24, 0.5).unwrap();
    for seed in 1..=3 {
        let r = estimate_all(&TrialConfig::new(p, 3_000, seed)).unwrap();
        for (name, e) in r.estimates() {
            assert_eq!(e.verdict, McVerdict::Pass, "seed {seed} {name}: {:?}", e);
        }
    }
}

#[test]
fn same_seed_same_numbers() {
    let cfg = TrialConfig::new(mid(), 2_000, 99);
    assert_eq!(estimate_all(&cfg).unwrap(), estimate_all(&cfg).unwrap());
    let a = estimate_flip_budget(&mid(), 20, 3).unwrap();
    assert_eq!(a, estimate_flip_budget(&mid(), 20, 3).unwrap());
}

#[test]
fn csv_and_json_carry_every_estimate() {
    let r = estimate_all(&TrialConfig::new(mid(), 500, 1)).unwrap();
    let csv = to_csv(std::slice::from_ref(&r));
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().next().unwrap().starts_with("n,f,m,k1,k2"));
    let json: serde_json::Value = serde_json::from_str(&to_json(&[r])).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 1);
}
