use kquorum::params::{corrupt_quorum_bound, QuorumParams};
use kquorum::selection::select_from_seed;
use statrs::distribution::{ChiSquared, ContinuousCDF, DiscreteCDF, Hypergeometric};

fn corrupted_in(seed: &[u8], p: &QuorumParams) -> usize {
    select_from_seed(seed, p.n, p.m).unwrap().members.iter().filter(|&&v| v < p.f).count()
}

#[test]
fn members_are_distinct_and_in_range() {
    for s in 0..10_000u64 {
        let q = select_from_seed(&s.to_le_bytes(), 60, 12).unwrap();
        assert_eq!(q.members.len(), 12);
        assert_eq!(q.as_set().len(), 12, "seed {s}");
        assert!(q.members.iter().all(|&v| v < 60));
    }
}

#[test]
fn membership_is_uniform() {
    let (n, m, seeds) = (50, 7, 20_000u64);
    let mut counts = vec![0u64; n];
    for s in 0..seeds {
        for v in select_from_seed(format!("uniform-{s}").as_bytes(), n, m).unwrap().members {
            counts[v] += 1;
        }
    }
    let expected = (seeds * m as u64) as f64 / n as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p_value = 1.0 - ChiSquared::new((n - 1) as f64).unwrap().cdf(chi2);
    assert!(p_value > 1e-3, "chi2 {chi2:.1}, p {p_value:.5}");
}

#[test]
fn corrupted_count_matches_hypergeometric() {
    let p = QuorumParams::canonical(200, 20, 50, 1, 3, 0.5).unwrap();
    let dist = Hypergeometric::new(p.n as u64, p.f as u64, p.m as u64).unwrap();
    let trials = 10_000u64;
    let mut hist = vec![0u64; p.m + 1];
    for s in 0..trials {
        hist[corrupted_in(format!("hyper-{s}").as_bytes(), &p)] += 1;
    }
    // bucket 0..=2, 3..=4, 5, 6, 7..
    let edges = [(0u64, 2u64), (3, 4), (5, 5), (6, 6), (7, p.m as u64)];
    let mut chi2 = 0.0;
    for (lo, hi) in edges {
        let observed: u64 = (lo..=hi).map(|k| hist[k as usize]).sum();
        let below = if lo == 0 { 0.0 } else { dist.cdf(lo - 1) };
        let expected = (dist.cdf(hi) - below) * trials as f64;
        chi2 += (observed as f64 - expected).powi(2) / expected;
    }
    let p_value = 1.0 - ChiSquared::new((edges.len() - 1) as f64).unwrap().cdf(chi2);
    assert!(p_value > 1e-3, "chi2 {chi2:.2}, p {p_value:.5}");
}

#[test]
fn heavy_quorums_stay_under_the_concentration_bound() {
    let p = QuorumParams::canonical(200, 20, 50, 1, 3, 0.5).unwrap();
    let threshold = (1.0 + p.mu) * p.p_f() * p.m as f64;
    let trials = 10_000;
    let heavy = (0..trials).filter(|s| corrupted_in(format!("heavy-{s}").as_bytes(), &p) as f64 > threshold).count();
    let bound = corrupt_quorum_bound(&p, 1);
    assert!((heavy as f64 / trials as f64) <= bound, "{heavy}/{trials} vs bound {bound}");
}

/// Grinding over many nonces finds the heaviest quorum a sampler can
/// produce; its size follows the hypergeometric maximum, so the rate of
/// quorums at or above (1+2mu) p_f m matches the exact tail.
#[test]
fn grinding_rate_matches_exact_tail() {
    let p = QuorumParams::canonical(200, 20, 50, 1, 3, 0.5).unwrap();
    let t = ((1.0 + 2.0 * p.mu) * p.p_f() * p.m as f64).ceil() as u64;
    let dist = Hypergeometric::new(p.n as u64, p.f as u64, p.m as u64).unwrap();
    let tail = dist.sf(t - 1);
    let attempts = 10_000u64;
    let hits = (0..attempts).filter(|s| corrupted_in(format!("grind-{s}").as_bytes(), &p) as u64 >= t).count() as f64;
    let expected = tail * attempts as f64;
    let sd = (attempts as f64 * tail * (1.0 - tail)).sqrt();
    assert!((hits - expected).abs() <= 5.0 * sd, "hits {hits}, expected {expected:.1} +- {sd:.1}");
}
