//! Parameter algebra for (k1,k2)-quorum systems.
//!
//! A [`QuorumParams`] value fixes the universe size, the corruption budget and
//! the quorum shape. Everything else (validation slack, the spend cap `k2'`,
//! Chernoff failure bounds) is derived from it by pure functions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance used when integerising real-valued thresholds.
const SNAP_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamsError {
    #[error("invalid parameters: {0}")]
    Invalid(String),
    #[error("no adversary budget separation (validation slack is zero)")]
    NoSlack,
    #[error("infeasible: expected overlap exceeds α ({expected:.6} >= {alpha:.6})")]
    ExpectedOverlapExceedsAlpha { expected: f64, alpha: f64 },
    #[error("infeasible: expected correct overlap below β ({expected:.6} <= {beta:.6})")]
    ExpectedCorrectOverlapBelowBeta { expected: f64, beta: f64 },
}

/// The full parameter tuple of an asynchronous (k1,k2)-quorum system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuorumParams {
    pub n: usize,
    pub f: usize,
    pub m: usize,
    pub k1: usize,
    pub k2: usize,
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
}

impl QuorumParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        f: usize,
        m: usize,
        k1: usize,
        k2: usize,
        alpha: f64,
        beta: f64,
        mu: f64,
    ) -> Result<Self, ParamsError> {
        let p = Self { n, f, m, k1, k2, alpha, beta, mu };
        p.validate()?;
        Ok(p)
    }

    /// The parameter set the asynchronous construction is proven for, with
    /// `α = 1/3`, `β = 2/3`.
    pub fn canonical(n: usize, f: usize, m: usize, k1: usize, k2: usize, mu: f64) -> Result<Self, ParamsError> {
        Self::new(n, f, m, k1, k2, 1.0 / 3.0, 2.0 / 3.0, mu)
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        let bad = |s: &str| Err(ParamsError::Invalid(s.to_string()));
        if self.n == 0 {
            return bad("n must be positive");
        }
        if self.m == 0 || self.m > self.n {
            return bad("m must satisfy 1 <= m <= n");
        }
        if self.f >= self.n {
            return bad("f must be smaller than n");
        }
        if self.k1 >= self.k2 {
            return bad("k1 must be smaller than k2");
        }
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.beta) {
            return bad("alpha and beta must lie in [0, 1]");
        }
        if self.alpha > self.beta {
            return bad("alpha must not exceed beta");
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return bad("mu must lie in (0, 1)");
        }
        Ok(())
    }

    /// Fraction of validators the adversary may corrupt, `f/n`.
    pub fn p_f(&self) -> f64 {
        self.f as f64 / self.n as f64
    }

    /// `k1·m/n`.
    pub fn alpha1(&self) -> f64 {
        (self.k1 * self.m) as f64 / self.n as f64
    }

    pub fn is_uniform_balanced(&self) -> bool {
        (self.k1 + self.k2) * self.m == self.n
    }

    pub fn is_canonical_regime(&self) -> bool {
        (self.alpha - 1.0 / 3.0).abs() < SNAP_EPS && (self.beta - 2.0 / 3.0).abs() < SNAP_EPS
    }

    /// Number of quorum replies a client waits for: `⌈m − (1+μ)·p_f·m⌉`.
    pub fn reply_threshold(&self) -> usize {
        let m = self.m as f64;
        ceil_snap(m - (1.0 + self.mu) * self.p_f() * m).max(0.0) as usize
    }

    /// Witnesses required for a payment certificate: `⌈(1−α)·m⌉`.
    pub fn witness_threshold(&self) -> usize {
        ceil_snap((1.0 - self.alpha) * self.m as f64) as usize
    }

    /// Largest number of `VALID`-denying members that still lets a payment
    /// through, `m − witness_threshold`.
    pub fn tolerated_denials(&self) -> usize {
        self.m - self.witness_threshold()
    }

    /// Largest silenced subset size, `⌊(1+μ)·p_f·m⌋`.
    pub fn silenced_budget(&self) -> usize {
        floor_snap((1.0 + self.mu) * self.p_f() * self.m as f64) as usize
    }

    pub fn validation_slack(&self) -> f64 {
        validation_slack(self)
    }

    pub fn k2_prime(&self) -> Result<usize, ParamsError> {
        k2_prime(self)
    }

    /// Per-payment amount drawn from a fund of `balance` units.
    pub fn payment_amount(&self, balance: u64) -> Result<u64, ParamsError> {
        Ok(balance / self.k2_prime()? as u64)
    }
}

pub(crate) fn ceil_snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= SNAP_EPS * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

pub(crate) fn floor_snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= SNAP_EPS * x.abs().max(1.0) {
        r
    } else {
        x.floor()
    }
}

/// `(β − α)·m`: validators the adversary has to corrupt to flip one decision.
pub fn validation_slack(p: &QuorumParams) -> f64 {
    (p.beta - p.alpha) * p.m as f64
}

/// `k2 + ⌈f / slack⌉`, the cap on partial spends from one fund.
pub fn k2_prime(p: &QuorumParams) -> Result<usize, ParamsError> {
    let slack = validation_slack(p);
    if slack <= 0.0 {
        return Err(ParamsError::NoSlack);
    }
    Ok(p.k2 + ceil_snap(p.f as f64 / slack) as usize)
}

/// Chernoff upper-tail bound on ε: the probability that a fresh quorum
/// overlaps prior corruptions plus up to k1 prior quorums in more than α·m
/// members.
pub fn nonintersection_failure_bound(p: &QuorumParams) -> Result<f64, ParamsError> {
    let expected = p.alpha1() + p.p_f();
    if expected >= p.alpha - SNAP_EPS {
        return Err(ParamsError::ExpectedOverlapExceedsAlpha { expected, alpha: p.alpha });
    }
    if expected == 0.0 {
        return Ok(0.0);
    }
    let r = p.alpha / expected - 1.0;
    Ok(clamp_prob((-r * r * expected * p.m as f64 / 3.0).exp()))
}

/// Chernoff lower-tail bound on δ: the probability that the correct overlap
/// with k2 prior quorums fails to exceed β·m. The asynchronous variant also
/// discounts a silenced subset of size `(1+μ)·p_f·m`.
pub fn intersection_failure_bound(p: &QuorumParams, asynchronous: bool) -> Result<f64, ParamsError> {
    let discount = if asynchronous { (2.0 + p.mu) * p.p_f() } else { p.p_f() };
    let expected = 1.0 - p.alpha1() - discount;
    if expected <= p.beta + SNAP_EPS {
        return Err(ParamsError::ExpectedCorrectOverlapBelowBeta { expected, beta: p.beta });
    }
    let r = 1.0 - p.beta / expected;
    Ok(clamp_prob((-r * r * expected * p.m as f64 / 2.0).exp()))
}

/// Union bound over `k` random quorums each holding more than
/// `(1+μ)·p_f·m` previously corrupt members.
pub fn corrupt_quorum_bound(p: &QuorumParams, k: usize) -> f64 {
    let exponent = -p.mu * p.mu * p.p_f() * p.m as f64 / (2.0 + p.mu);
    clamp_prob(k as f64 * exponent.exp())
}

fn clamp_prob(x: f64) -> f64 {
    if x.is_nan() {
        1.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

/// Quantities derived from a parameter set. Bounds that are undefined for the
/// given parameters are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedBounds {
    pub p_f: f64,
    pub alpha1: f64,
    pub validation_slack: f64,
    pub k2_prime: Option<usize>,
    pub spend_fraction: Option<f64>,
    pub eps_bound: Option<f64>,
    pub delta_bound_sync: Option<f64>,
    pub delta_bound_async: Option<f64>,
    pub corrupt_quorum_bound: f64,
    pub reply_threshold: usize,
    pub witness_threshold: usize,
}

pub fn derived_bounds(p: &QuorumParams) -> DerivedBounds {
    let k2p = k2_prime(p).ok();
    DerivedBounds {
        p_f: p.p_f(),
        alpha1: p.alpha1(),
        validation_slack: validation_slack(p),
        k2_prime: k2p,
        spend_fraction: k2p.map(|k| 1.0 / k as f64),
        eps_bound: nonintersection_failure_bound(p).ok(),
        delta_bound_sync: intersection_failure_bound(p, false).ok(),
        delta_bound_async: intersection_failure_bound(p, true).ok(),
        corrupt_quorum_bound: corrupt_quorum_bound(p, 1),
        reply_threshold: p.reply_threshold(),
        witness_threshold: p.witness_threshold(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub params: QuorumParams,
    pub conditions: Vec<Condition>,
    /// `false` when (α, β) differ from (1/3, 2/3); bounds are still reported
    /// but are outside the proven regime.
    pub proven_regime: bool,
    pub bounds: DerivedBounds,
}

impl FeasibilityReport {
    pub fn all_pass(&self) -> bool {
        self.conditions.iter().all(|c| c.pass)
    }

    pub fn failing(&self) -> impl Iterator<Item = &Condition> {
        self.conditions.iter().filter(|c| !c.pass)
    }
}

pub fn check_feasible_async(p: &QuorumParams) -> FeasibilityReport {
    let ratio = p.alpha1();
    let conditions = vec![
        Condition { name: "n > 8f".into(), pass: p.n > 8 * p.f, detail: format!("n = {}, 8f = {}", p.n, 8 * p.f) },
        Condition {
            name: "k1*m/n < 1/24".into(),
            // compare k1·m·24 < n in integers to avoid rounding at the boundary
            pass: p.k1 * p.m * 24 < p.n,
            detail: format!("k1*m/n = {ratio:.6}, 1/24 = {:.6}", 1.0 / 24.0),
        },
        Condition {
            name: "n = (k1+k2)*m".into(),
            pass: p.is_uniform_balanced(),
            detail: format!("(k1+k2)*m = {}, n = {}", (p.k1 + p.k2) * p.m, p.n),
        },
    ];
    FeasibilityReport { params: *p, conditions, proven_regime: p.is_canonical_regime(), bounds: derived_bounds(p) }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canon(n: usize, f: usize, m: usize, k1: usize, k2: usize) -> QuorumParams {
        QuorumParams::canonical(n, f, m, k1, k2, 0.5).unwrap()
    }

    #[test]
    fn slack_examples() {
        let p = canon(1000, 100, 60, 1, 24);
        assert!((validation_slack(&p) - 20.0).abs() < 1e-9);
        let p = QuorumParams::new(1000, 100, 60, 1, 24, 1.0 / 3.0, 1.0 / 3.0, 0.5).unwrap();
        assert_eq!(validation_slack(&p), 0.0);
        let p = canon(1000, 100, 40, 1, 24);
        assert!((validation_slack(&p) - 40.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn k2_prime_examples() {
        assert_eq!(k2_prime(&canon(1000, 100, 60, 1, 24)), Ok(29));
        assert_eq!(k2_prime(&canon(1000, 0, 60, 1, 24)), Ok(24));
        assert_eq!(k2_prime(&canon(1000, 100, 40, 1, 18)), Ok(26));
        let flat = QuorumParams::new(1000, 100, 60, 1, 24, 0.5, 0.5, 0.5).unwrap();
        assert_eq!(k2_prime(&flat), Err(ParamsError::NoSlack));
    }

    #[test]
    fn nonintersection_bound_closed_form() {
        let p = canon(1000, 100, 40, 1, 24);
        let b = nonintersection_failure_bound(&p).unwrap();
        let r: f64 = 1.0 / 0.42 - 1.0;
        let expect = (-r * r * 0.14 * 40.0 / 3.0).exp();
        assert!((b - expect).abs() < 1e-12, "{b} vs {expect}");
    }

    #[test]
    fn nonintersection_rejects_boundary() {
        // α1 + p_f = 40/120 + 0 = 1/3 exactly
        let p = canon(120, 0, 40, 1, 2);
        assert!(matches!(nonintersection_failure_bound(&p), Err(ParamsError::ExpectedOverlapExceedsAlpha { .. })));
    }

    #[test]
    fn doubling_m_squares_bound() {
        let p = canon(2000, 100, 40, 1, 24);
        let q = canon(4000, 200, 80, 1, 24);
        let b1 = nonintersection_failure_bound(&p).unwrap();
        let b2 = nonintersection_failure_bound(&q).unwrap();
        assert!((b2 - b1 * b1).abs() < 1e-12);
        let d1 = intersection_failure_bound(&p, true).unwrap();
        let d2 = intersection_failure_bound(&q, true).unwrap();
        assert!((d2 - d1 * d1).abs() < 1e-12);
    }

    #[test]
    fn intersection_bound_cases() {
        // α1 + p_f = 1/3 → synchronous correct expectation 2/3 = β
        let p = QuorumParams::canonical(120, 0, 40, 1, 2, 0.5).unwrap();
        assert!(intersection_failure_bound(&p, false).is_err());

        // α1 = 1/24, p_f = 1/8: the silenced discount pushes E below β
        let p = canon(960, 120, 40, 1, 23);
        assert!((p.alpha1() - 1.0 / 24.0).abs() < 1e-12);
        assert!(intersection_failure_bound(&p, false).is_ok());
        assert!(intersection_failure_bound(&p, true).is_err());

        // α1 = 1/24, p_f = 1/16
        let p = canon(960, 60, 40, 1, 23);
        let b = intersection_failure_bound(&p, true).unwrap();
        assert!(b > 0.0 && b < 1.0);
        let e: f64 = 1.0 - 1.0 / 24.0 - 2.5 / 16.0;
        let r = 1.0 - (2.0 / 3.0) / e;
        assert!((b - (-r * r * e * 40.0 / 2.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn corrupt_quorum_examples() {
        let p = canon(1000, 100, 200, 1, 4);
        let b = corrupt_quorum_bound(&p, 10);
        assert!((b - (10.0 * (-2.0f64).exp()).min(1.0)).abs() < 1e-12);
        let p0 = canon(1000, 0, 200, 1, 4);
        assert_eq!(corrupt_quorum_bound(&p0, 3), 1.0);
    }

    #[test]
    fn feasibility_examples() {
        let r = check_feasible_async(&canon(1000, 100, 40, 1, 24));
        assert!(r.all_pass(), "{:?}", r.conditions);
        assert!(r.proven_regime);

        let r = check_feasible_async(&canon(800, 100, 40, 1, 19));
        assert!(!r.conditions[0].pass);

        let r = check_feasible_async(&canon(1000, 100, 40, 2, 23));
        assert!(!r.conditions[1].pass);
        assert!(r.conditions[2].pass);

        let odd = QuorumParams::new(1000, 100, 40, 1, 24, 0.3, 0.7, 0.5).unwrap();
        assert!(!check_feasible_async(&odd).proven_regime);
    }

    #[test]
    fn thresholds() {
        let p = canon(25, 3, 5, 1, 4);
        assert_eq!(p.witness_threshold(), 4);
        assert_eq!(p.reply_threshold(), 5);
        assert_eq!(p.k2_prime(), Ok(6));
        let p = canon(1000, 100, 40, 1, 24);
        assert_eq!(p.silenced_budget(), 6);
        assert_eq!(p.witness_threshold(), 27);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(QuorumParams::canonical(10, 10, 5, 1, 2, 0.5).is_err());
        assert!(QuorumParams::canonical(10, 1, 11, 1, 2, 0.5).is_err());
        assert!(QuorumParams::canonical(10, 1, 5, 2, 2, 0.5).is_err());
        assert!(QuorumParams::new(10, 1, 5, 1, 2, 0.7, 0.6, 0.5).is_err());
        assert!(QuorumParams::new(10, 1, 5, 1, 2, 0.3, 0.6, 1.0).is_err());
    }
}
