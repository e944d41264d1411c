//! Empirical checks of the quorum intersection properties against the
//! analytic bounds in [`crate::params`].
//!
//! Every trial gets its own generator seeded from `hash(seed ‖ label ‖ trial)`,
//! so results do not depend on how trials are spread over threads. A trial
//! draws the corrupted set, the fresh quorum and the largest number of prior
//! quorums it will need once; smaller `k` use a prefix of the same priors.
//! Estimates for different `k` are therefore nested, trial by trial.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::crypto::hash_concat;
use crate::params::{floor_snap, intersection_failure_bound, nonintersection_failure_bound, QuorumParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Sync,
    /// The adversary also silences up to `(1+μ)·p_f·m` members of the fresh
    /// quorum, chosen to hurt the tested inequality most.
    Async,
}

/// How the prior quorums `J` are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorModel {
    /// Pairwise disjoint, uniformly placed: `k` accesses touch `k·m` validators.
    #[default]
    Disjoint,
    /// Independent uniform draws, overlaps allowed.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorruptModel {
    /// A uniformly random set of `f` validators corrupted in advance.
    #[default]
    RandomPrefix,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub params: QuorumParams,
    pub trials: u64,
    pub seed: u64,
    #[serde(default)]
    pub prior: PriorModel,
    #[serde(default)]
    pub corrupt: CorruptModel,
}

impl TrialConfig {
    pub fn new(params: QuorumParams, trials: u64, seed: u64) -> Self {
        TrialConfig { params, trials, seed, prior: PriorModel::default(), corrupt: CorruptModel::default() }
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum McError {
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("{k} disjoint quorums of size {m} do not fit in {n} validators")]
    DisjointOverflow { k: usize, m: usize, n: usize },
    #[error("exact enumeration is limited to n <= {EXACT_MAX_N} (got {0})")]
    TooLargeForExact(usize),
    #[error("invalid parameters: {0}")]
    Params(String),
}

/// Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

pub const Z95: f64 = 1.959_963_984_540_054;

pub fn wilson(successes: u64, trials: u64, z: f64) -> Interval {
    assert!(trials > 0 && successes <= trials);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Interval { lower: (centre - half).max(0.0), upper: (centre + half).min(1.0) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum McVerdict {
    Pass,
    Fail,
    /// The analytic bound is undefined for these parameters.
    NoBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mode: Mode,
    pub violations: u64,
    pub trials: u64,
    pub rate: f64,
    pub ci: Interval,
    pub bound: Option<f64>,
    pub verdict: McVerdict,
}

impl Estimate {
    fn new(mode: Mode, violations: u64, trials: u64, bound: Option<f64>) -> Self {
        let ci = wilson(violations, trials, Z95);
        let verdict = match bound {
            Some(b) if ci.upper <= b => McVerdict::Pass,
            Some(_) => McVerdict::Fail,
            None => McVerdict::NoBound,
        };
        Estimate { mode, violations, trials, rate: violations as f64 / trials as f64, ci, bound, verdict }
    }
}

/// One trial's draws, reduced to what the counting needs: for each member
/// of the fresh quorum, whether it is corrupted and the first prior quorum
/// containing it.
struct Draw {
    corrupt: Vec<bool>,
    first: Vec<usize>,
}

const NEVER: usize = usize::MAX;

fn trial_rng(seed: u64, label: &str, trial: u64) -> ChaCha8Rng {
    let d = hash_concat(&[&seed.to_be_bytes(), label.as_bytes(), &trial.to_be_bytes()]);
    ChaCha8Rng::from_seed(d.0)
}

fn draw(p: &QuorumParams, prior: PriorModel, corrupt: CorruptModel, kmax: usize, rng: &mut ChaCha8Rng) -> Draw {
    let n = p.n;
    let mut bad = vec![false; n];
    if corrupt == CorruptModel::RandomPrefix {
        for v in sample(rng, n, p.f).iter() {
            bad[v] = true;
        }
    }
    let q = sample(rng, n, p.m).into_vec();
    let mut first = vec![NEVER; n];
    match prior {
        PriorModel::Disjoint => {
            for (pos, v) in sample(rng, n, kmax * p.m).iter().enumerate() {
                first[v] = pos / p.m;
            }
        }
        PriorModel::Independent => {
            for j in 0..kmax {
                for v in sample(rng, n, p.m).iter() {
                    first[v] = first[v].min(j);
                }
            }
        }
    }
    Draw { corrupt: q.iter().map(|&v| bad[v]).collect(), first: q.iter().map(|&v| first[v]).collect() }
}

impl Draw {
    /// `|Q ∩ (F ∪ J_1..J_k)| > α·m`. Silencing members never raises this
    /// count, so the asynchronous adversary silences none.
    fn nonintersection_violated(&self, p: &QuorumParams, k: usize) -> bool {
        let count = self.corrupt.iter().zip(&self.first).filter(|(c, f)| **c || **f < k).count();
        count as f64 > floor_snap(p.alpha * p.m as f64)
    }

    /// `|(Q ∖ Q_s) ∩ (J_1..J_k) ∖ F| ≤ β·m`, with `Q_s` taken out of the
    /// correct overlap in the asynchronous mode.
    fn intersection_violated(&self, p: &QuorumParams, k: usize, mode: Mode) -> bool {
        let mut overlap = self.corrupt.iter().zip(&self.first).filter(|(c, f)| !**c && **f < k).count();
        if mode == Mode::Async {
            overlap = overlap.saturating_sub(p.silenced_budget());
        }
        overlap as f64 <= floor_snap(p.beta * p.m as f64)
    }
}

#[cfg(feature = "parallel")]
fn map_trials<T: Send>(trials: u64, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..trials).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_trials<T: Send>(trials: u64, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    (0..trials).map(f).collect()
}

fn check_disjoint(p: &QuorumParams, prior: PriorModel, k: usize) -> Result<(), McError> {
    if prior == PriorModel::Disjoint && k * p.m > p.n {
        return Err(McError::DisjointOverflow { k, m: p.m, n: p.n });
    }
    Ok(())
}

/// Per-trial violation flags for every `k` in `ks`, `[trial][index of k]`.
fn run_flags(
    cfg: &TrialConfig,
    label: &str,
    ks: &[usize],
    test: impl Fn(&Draw, usize) -> bool + Sync + Send,
) -> Result<Vec<u64>, McError> {
    if cfg.trials == 0 {
        return Err(McError::NoTrials);
    }
    let kmax = ks.iter().copied().max().unwrap_or(0);
    check_disjoint(&cfg.params, cfg.prior, kmax)?;
    let rows = map_trials(cfg.trials, |t| {
        let mut rng = trial_rng(cfg.seed, label, t);
        let d = draw(&cfg.params, cfg.prior, cfg.corrupt, kmax, &mut rng);
        ks.iter().map(|&k| test(&d, k)).collect::<Vec<bool>>()
    });
    let mut counts = vec![0u64; ks.len()];
    for row in rows {
        for (c, v) in counts.iter_mut().zip(row) {
            *c += v as u64;
        }
    }
    Ok(counts)
}

fn bound_eps(p: &QuorumParams, cfg: &TrialConfig) -> Option<f64> {
    (cfg.corrupt == CorruptModel::RandomPrefix).then(|| nonintersection_failure_bound(p).ok()).flatten()
}

fn bound_delta(p: &QuorumParams, cfg: &TrialConfig, mode: Mode) -> Option<f64> {
    (cfg.corrupt == CorruptModel::RandomPrefix)
        .then(|| intersection_failure_bound(p, mode == Mode::Async).ok())
        .flatten()
}

/// Frequency of `|Q ∩ (F ∪ ⋃ J1)| > α|Q|` over `k1` prior quorums.
pub fn estimate_nonintersection(cfg: &TrialConfig, mode: Mode) -> Result<Estimate, McError> {
    let p = cfg.params;
    let v = run_flags(cfg, "nonintersection", &[p.k1], |d, k| d.nonintersection_violated(&p, k))?[0];
    Ok(Estimate::new(mode, v, cfg.trials, bound_eps(&p, cfg)))
}

/// Frequency of the correct overlap with `k2` prior quorums failing to
/// exceed `β|Q|`.
pub fn estimate_intersection(cfg: &TrialConfig, mode: Mode) -> Result<Estimate, McError> {
    let p = cfg.params;
    let v = run_flags(cfg, "intersection", &[p.k2], |d, k| d.intersection_violated(&p, k, mode))?[0];
    Ok(Estimate::new(mode, v, cfg.trials, bound_delta(&p, cfg, mode)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub params: QuorumParams,
    pub trials: u64,
    pub seed: u64,
    pub prior: PriorModel,
    pub eps_sync: Estimate,
    pub eps_async: Estimate,
    pub delta_sync: Estimate,
    pub delta_async: Estimate,
}

impl EstimateReport {
    pub fn estimates(&self) -> [(&'static str, &Estimate); 4] {
        [
            ("eps_sync", &self.eps_sync),
            ("eps_async", &self.eps_async),
            ("delta_sync", &self.delta_sync),
            ("delta_async", &self.delta_async),
        ]
    }

    pub fn all_pass(&self) -> bool {
        self.estimates().iter().all(|(_, e)| e.verdict == McVerdict::Pass)
    }
}

pub fn estimate_all(cfg: &TrialConfig) -> Result<EstimateReport, McError> {
    Ok(EstimateReport {
        params: cfg.params,
        trials: cfg.trials,
        seed: cfg.seed,
        prior: cfg.prior,
        eps_sync: estimate_nonintersection(cfg, Mode::Sync)?,
        eps_async: estimate_nonintersection(cfg, Mode::Async)?,
        delta_sync: estimate_intersection(cfg, Mode::Sync)?,
        delta_async: estimate_intersection(cfg, Mode::Async)?,
    })
}

/// Violation frequencies of the non-intersection property for each `k1` in
/// `ks`, all from the same trials.
pub fn sweep_k1(cfg: &TrialConfig, ks: &[usize]) -> Result<Vec<f64>, McError> {
    let p = cfg.params;
    let counts = run_flags(cfg, "nonintersection", ks, |d, k| d.nonintersection_violated(&p, k))?;
    Ok(counts.into_iter().map(|c| c as f64 / cfg.trials as f64).collect())
}

/// Same as [`sweep_k1`] for the intersection property over `k2`.
pub fn sweep_k2(cfg: &TrialConfig, ks: &[usize], mode: Mode) -> Result<Vec<f64>, McError> {
    let p = cfg.params;
    let counts = run_flags(cfg, "intersection", ks, |d, k| d.intersection_violated(&p, k, mode))?;
    Ok(counts.into_iter().map(|c| c as f64 / cfg.trials as f64).collect())
}

pub const EXACT_MAX_N: usize = 30;

fn choose(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `P(X = x)` for the number of marked items in a uniform `draws`-subset of
/// `n` items of which `marked` are marked.
fn hyper(n: usize, marked: usize, draws: usize, x: usize) -> f64 {
    if x > marked || x > draws || draws - x > n - marked {
        return 0.0;
    }
    choose(marked, x) * choose(n - marked, draws - x) / choose(n, draws)
}

/// Distribution of the number of validators covered by `k` prior quorums.
fn union_size(n: usize, m: usize, k: usize, prior: PriorModel) -> Result<Vec<f64>, McError> {
    let mut dist = vec![0.0; n + 1];
    match prior {
        PriorModel::Disjoint => {
            if k * m > n {
                return Err(McError::DisjointOverflow { k, m, n });
            }
            dist[k * m] = 1.0;
        }
        PriorModel::Independent => {
            dist[0] = 1.0;
            for _ in 0..k {
                let mut next = vec![0.0; n + 1];
                for (u, &pu) in dist.iter().enumerate() {
                    if pu == 0.0 {
                        continue;
                    }
                    // t new validators among the m drawn
                    for t in 0..=m.min(n - u) {
                        next[u + t] += pu * hyper(n, n - u, m, t);
                    }
                }
                dist = next;
            }
        }
    }
    Ok(dist)
}

fn exact_guard(p: &QuorumParams) -> Result<(), McError> {
    if p.n > EXACT_MAX_N {
        return Err(McError::TooLargeForExact(p.n));
    }
    Ok(())
}

fn corrupt_count(p: &QuorumParams, corrupt: CorruptModel) -> usize {
    match corrupt {
        CorruptModel::RandomPrefix => p.f,
        CorruptModel::None => 0,
    }
}

/// Exact non-intersection violation probability by enumeration.
pub fn exact_nonintersection(p: &QuorumParams, prior: PriorModel, corrupt: CorruptModel) -> Result<f64, McError> {
    exact_guard(p)?;
    let (n, m) = (p.n, p.m);
    let f = corrupt_count(p, corrupt);
    let limit = floor_snap(p.alpha * m as f64) as usize;
    let mut total = 0.0;
    for (u, pu) in union_size(n, m, p.k1, prior)?.into_iter().enumerate() {
        if pu == 0.0 {
            continue;
        }
        // corrupted validators outside the union
        for out in 0..=f.min(n - u) {
            let po = hyper(n, n - u, f, out);
            let bad = u + out;
            let tail: f64 = (limit + 1..=m).map(|x| hyper(n, bad, m, x)).sum();
            total += pu * po * tail;
        }
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Exact intersection violation probability by enumeration.
pub fn exact_intersection(
    p: &QuorumParams,
    prior: PriorModel,
    corrupt: CorruptModel,
    mode: Mode,
) -> Result<f64, McError> {
    exact_guard(p)?;
    let (n, m) = (p.n, p.m);
    let f = corrupt_count(p, corrupt);
    let limit = floor_snap(p.beta * m as f64) as usize;
    let silenced = if mode == Mode::Async { p.silenced_budget() } else { 0 };
    let mut total = 0.0;
    for (u, pu) in union_size(n, m, p.k2, prior)?.into_iter().enumerate() {
        if pu == 0.0 {
            continue;
        }
        for inside in 0..=f.min(u) {
            let pi = hyper(n, u, f, inside);
            let correct = u - inside;
            let fail: f64 =
                (0..=m).filter(|x| x.saturating_sub(silenced) <= limit).map(|x| hyper(n, correct, m, x)).sum();
            total += pu * pi * fail;
        }
    }
    Ok(total.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipReport {
    pub params: QuorumParams,
    pub runs: u64,
    pub seed: u64,
    /// `k2 + ⌊f / ((β−α)m)⌋ + 1`.
    pub bound: usize,
    pub achieved: Vec<usize>,
    pub max: usize,
    pub within_bound: u64,
}

impl FlipReport {
    pub fn all_within(&self) -> bool {
        self.within_bound == self.runs
    }
}

/// Greedy adaptive double spending against independent random quorums.
///
/// Honest validators that validated a payment from the fund deny every
/// later one. Each access draws a quorum; if more than `α·m` of its members
/// would deny, the adversary corrupts just enough of them to bring the
/// denials down to `⌊α·m⌋`, or stops when its budget of `f` cannot cover it.
pub fn flip_run(p: &QuorumParams, rng: &mut ChaCha8Rng) -> usize {
    let tolerated = floor_snap(p.alpha * p.m as f64) as usize;
    let mut validated = vec![false; p.n];
    let mut corrupted = vec![false; p.n];
    let mut budget = p.f;
    let mut accesses = 0;
    loop {
        let q = sample(rng, p.n, p.m).into_vec();
        let deniers: Vec<usize> = q.iter().copied().filter(|&v| validated[v] && !corrupted[v]).collect();
        let need = deniers.len().saturating_sub(tolerated);
        if need > budget {
            return accesses;
        }
        for &v in &deniers[..need] {
            corrupted[v] = true;
        }
        budget -= need;
        for v in q {
            validated[v] = true;
        }
        accesses += 1;
        if accesses > p.n {
            return accesses;
        }
    }
}

pub fn estimate_flip_budget(params: &QuorumParams, runs: u64, seed: u64) -> Result<FlipReport, McError> {
    if runs == 0 {
        return Err(McError::NoTrials);
    }
    let slack = params.validation_slack();
    if slack <= 0.0 {
        return Err(McError::Params("validation slack must be positive".into()));
    }
    let bound = params.k2 + floor_snap(params.f as f64 / slack) as usize + 1;
    let achieved = map_trials(runs, |r| flip_run(params, &mut trial_rng(seed, "flip", r)));
    let max = achieved.iter().copied().max().unwrap_or(0);
    let within_bound = achieved.iter().filter(|&&a| a <= bound).count() as u64;
    Ok(FlipReport { params: *params, runs, seed, bound, achieved, max, within_bound })
}

#[derive(Debug, Serialize)]
struct CsvRow {
    n: usize,
    f: usize,
    m: usize,
    k1: usize,
    k2: usize,
    alpha: f64,
    beta: f64,
    mu: f64,
    trials: u64,
    seed: u64,
    prior: PriorModel,
    estimate: &'static str,
    rate: f64,
    ci_lower: f64,
    ci_upper: f64,
    bound: Option<f64>,
    verdict: McVerdict,
}

/// One row per parameter point and estimate.
pub fn to_csv(reports: &[EstimateReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        let p = r.params;
        for (name, e) in r.estimates() {
            w.serialize(CsvRow {
                n: p.n,
                f: p.f,
                m: p.m,
                k1: p.k1,
                k2: p.k2,
                alpha: p.alpha,
                beta: p.beta,
                mu: p.mu,
                trials: r.trials,
                seed: r.seed,
                prior: r.prior,
                estimate: name,
                rate: e.rate,
                ci_lower: e.ci.lower,
                ci_upper: e.ci.upper,
                bound: e.bound,
                verdict: e.verdict,
            })
            .expect("rows serialize");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

pub fn to_json(reports: &[EstimateReport]) -> String {
    serde_json::to_string_pretty(reports).expect("reports serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize, f: usize, m: usize, k1: usize, k2: usize) -> QuorumParams {
        QuorumParams::canonical(n, f, m, k1, k2, 0.5).unwrap()
    }

    #[test]
    fn wilson_known_values() {
        let i = wilson(0, 100, Z95);
        assert!(i.lower.abs() < 1e-12);
        assert!((i.upper - 0.0370).abs() < 1e-3);
        let i = wilson(50, 100, Z95);
        assert!((i.lower - 0.4038).abs() < 1e-3 && (i.upper - 0.5962).abs() < 1e-3);
    }

    #[test]
    fn no_corruption_no_priors_never_violates() {
        let mut cfg = TrialConfig::new(params(30, 0, 5, 0, 5), 500, 1);
        cfg.corrupt = CorruptModel::None;
        assert_eq!(estimate_nonintersection(&cfg, Mode::Sync).unwrap().violations, 0);
    }

    #[test]
    fn quorum_equal_to_universe_always_overlaps() {
        let p = QuorumParams::new(6, 0, 6, 1, 2, 1.0 / 3.0, 2.0 / 3.0, 0.5).unwrap();
        let cfg = TrialConfig::new(p, 200, 2);
        assert_eq!(estimate_nonintersection(&cfg, Mode::Sync).unwrap().violations, 200);
    }

    #[test]
    fn full_disjoint_coverage_always_intersects() {
        // k2·m = n, f = 0: every fresh member is covered
        let p = params(20, 0, 5, 0, 4);
        let cfg = TrialConfig::new(p, 300, 3);
        assert_eq!(estimate_intersection(&cfg, Mode::Sync).unwrap().violations, 0);
        assert_eq!(exact_intersection(&p, PriorModel::Disjoint, CorruptModel::RandomPrefix, Mode::Sync).unwrap(), 0.0);
    }

    #[test]
    fn same_seed_same_counts() {
        let cfg = TrialConfig::new(params(30, 3, 5, 1, 4), 1000, 9);
        assert_eq!(estimate_all(&cfg).unwrap(), estimate_all(&cfg).unwrap());
    }

    #[test]
    fn exact_matches_a_hand_count() {
        // n=4, m=2, one disjoint prior quorum, no corruption: the fresh
        // quorum hits the prior one in 2 members with probability 1/6
        let p = QuorumParams::new(4, 0, 2, 1, 2, 0.5, 0.9, 0.5).unwrap();
        let e = exact_nonintersection(&p, PriorModel::Disjoint, CorruptModel::None).unwrap();
        assert!((e - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn independent_union_distribution_sums_to_one() {
        let d = union_size(20, 5, 3, PriorModel::Independent).unwrap();
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(d[..5].iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn flip_without_budget_stops_when_denials_exceed_tolerance() {
        let p = params(100, 0, 10, 1, 9);
        let r = estimate_flip_budget(&p, 20, 4).unwrap();
        assert!(r.achieved.iter().all(|&a| a >= 1));
        assert!(r.all_within(), "{:?}", r.achieved);
    }

    #[test]
    fn csv_has_a_row_per_estimate() {
        let cfg = TrialConfig::new(params(30, 3, 5, 1, 4), 100, 1);
        let csv = to_csv(&[estimate_all(&cfg).unwrap()]);
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with("n,f,m,k1,k2,alpha,beta,mu,trials,seed,prior,estimate,rate"));
    }
}
