//! Requirement and invariant checks over a finished trace.
//!
//! Everything here reads the trace only. Where the adversary could hold
//! state the trace does not show (signatures from corrupted validators),
//! the checks assume the worst: every validator that was ever corrupted is
//! counted as willing to sign anything.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::crypto::Digest;
use crate::ledger::FundHeader;
use crate::params::QuorumParams;
use crate::protocol::{PartyId, ProtocolEvent};
use crate::simnet::{instance_label, Derivation, EndStatus, Fact, FundInfo, Record, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub name: String,
    pub verdict: Verdict,
    pub detail: String,
    /// Trace sequence numbers backing the verdict.
    pub witness: Vec<u64>,
}

impl Finding {
    fn new(name: &str) -> Self {
        Finding { name: name.to_string(), verdict: Verdict::Pass, detail: String::new(), witness: Vec::new() }
    }

    fn fail(&mut self, detail: String, witness: impl IntoIterator<Item = u64>) {
        self.verdict = Verdict::Fail;
        self.note(detail);
        self.witness.extend(witness);
    }

    fn inconclusive(&mut self, detail: String, witness: impl IntoIterator<Item = u64>) {
        if self.verdict == Verdict::Pass {
            self.verdict = Verdict::Inconclusive;
        }
        self.note(detail);
        self.witness.extend(witness);
    }

    fn note(&mut self, detail: String) {
        if !self.detail.is_empty() {
            self.detail.push_str("; ");
        }
        self.detail.push_str(&detail);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequirementReport {
    pub status: Option<EndStatus>,
    pub requirements: Vec<Finding>,
    pub invariants: Vec<Finding>,
    pub funds: Vec<FundSummary>,
}

/// Worst-case totals for one genesis fund.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FundSummary {
    pub name: String,
    pub balance: u64,
    /// Payments for which a certificate could exist.
    pub certificates: usize,
    /// Seller- and buyer-settled value that could be fully certified.
    pub certified_value: u64,
}

impl RequirementReport {
    pub fn all(&self) -> impl Iterator<Item = &Finding> {
        self.requirements.iter().chain(&self.invariants)
    }

    pub fn get(&self, name: &str) -> Option<&Finding> {
        self.all().find(|f| f.name == name)
    }

    pub fn requirement(&self, i: usize) -> &Finding {
        &self.requirements[i - 1]
    }

    /// 0 when everything passes, 2 on any failure, 3 when the only
    /// shortfall is inconclusive progress.
    pub fn exit_code(&self) -> i32 {
        if self.all().any(|f| f.verdict == Verdict::Fail) {
            2
        } else if self.all().any(|f| f.verdict == Verdict::Inconclusive) {
            3
        } else {
            0
        }
    }

    pub fn safety_ok(&self) -> bool {
        [3, 4, 5].iter().all(|&i| self.requirement(i).verdict == Verdict::Pass)
            && self.get("uniqueness").is_some_and(|f| f.verdict == Verdict::Pass)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for f in self.all() {
            let v = match f.verdict {
                Verdict::Pass => "PASS",
                Verdict::Fail => "FAIL",
                Verdict::Inconclusive => "INCONCLUSIVE",
            };
            s.push_str(&format!("{v:<12} {}", f.name));
            if !f.detail.is_empty() {
                s.push_str(&format!(": {}", f.detail));
            }
            if !f.witness.is_empty() && f.verdict != Verdict::Pass {
                let w: Vec<String> = f.witness.iter().take(8).map(|x| x.to_string()).collect();
                s.push_str(&format!(" [seq {}]", w.join(",")));
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
#[error("trace has no setup record")]
pub struct MissingSetup;

type TxKey = (Digest, Digest);
/// Settled value -> (signers, trace seqs).
type SignerMap = BTreeMap<(Digest, FundHeader), (BTreeSet<usize>, Vec<u64>)>;

#[derive(Debug, Default)]
struct Payment {
    seller: PartyId,
    buyer: PartyId,
    fund: Digest,
    certified_at: Option<u64>,
    quorum: Option<Vec<usize>>,
    validated_by: BTreeSet<usize>,
    settle_started: Option<u64>,
    settled_at: Option<u64>,
}

/// Collected view of a trace.
struct Facts<'a> {
    params: QuorumParams,
    k2_prime: usize,
    funds: &'a [FundInfo],
    traffic_hiding: bool,
    horizon: u64,
    status: Option<EndStatus>,
    corrupted_at: BTreeMap<PartyId, u64>,
    payments: BTreeMap<TxKey, Payment>,
    started: Vec<(u64, PartyId, PartyId, Digest, Digest)>,
    seller_values: SignerMap,
    buyer_values: SignerMap,
    finalized: Vec<(u64, usize, Digest, Vec<TxKey>, FundHeader)>,
    buyer_started: Vec<(u64, PartyId, Digest)>,
    buyer_settled: Vec<(u64, PartyId, Digest, FundHeader)>,
}

impl<'a> Facts<'a> {
    fn collect(trace: &'a Trace) -> Result<Self, MissingSetup> {
        let Some(Record::Setup { params, k2_prime, funds, traffic_hiding, horizon, .. }) = trace.records.first() else {
            return Err(MissingSetup);
        };
        let mut f = Facts {
            params: *params,
            k2_prime: *k2_prime,
            funds,
            traffic_hiding: *traffic_hiding,
            horizon: *horizon,
            status: trace.end(),
            corrupted_at: BTreeMap::new(),
            payments: BTreeMap::new(),
            started: Vec::new(),
            seller_values: BTreeMap::new(),
            buyer_values: BTreeMap::new(),
            finalized: Vec::new(),
            buyer_started: Vec::new(),
            buyer_settled: Vec::new(),
        };
        for r in &trace.records {
            match r {
                Record::Corrupt { seq, party, .. } => {
                    f.corrupted_at.entry(*party).or_insert(*seq);
                }
                Record::Event { seq, party, corrupted, event, .. } => f.event(*seq, *party, *corrupted, event),
                _ => {}
            }
        }
        Ok(f)
    }

    fn event(&mut self, seq: u64, _party: PartyId, corrupted: bool, e: &ProtocolEvent) {
        match e {
            ProtocolEvent::PaymentStarted { buyer, seller, fund, tid } => {
                self.started.push((seq, *buyer, *seller, *fund, *tid));
            }
            ProtocolEvent::QuorumSelected { seller, tid, h_s, quorum } => {
                let p = self.payments.entry((*tid, *h_s)).or_default();
                p.seller = *seller;
                p.quorum = Some(quorum.clone());
            }
            ProtocolEvent::Validated { validator, fund, tid, h_s } => {
                let p = self.payments.entry((*tid, *h_s)).or_default();
                p.fund = *fund;
                if !corrupted {
                    p.validated_by.insert(*validator);
                }
            }
            ProtocolEvent::PaymentCertified { seller, buyer, fund, tid, h_s, .. } => {
                let p = self.payments.entry((*tid, *h_s)).or_default();
                p.seller = *seller;
                p.buyer = *buyer;
                p.fund = *fund;
                p.certified_at.get_or_insert(seq);
            }
            ProtocolEvent::SellerSettleStarted { tid, h_s, .. } => {
                self.payments.entry((*tid, *h_s)).or_default().settle_started.get_or_insert(seq);
            }
            ProtocolEvent::SellerSettleSigned { validator, source, fund, .. } => {
                if !corrupted {
                    let e = self.seller_values.entry((*source, fund.clone())).or_default();
                    e.0.insert(*validator);
                    e.1.push(seq);
                }
            }
            ProtocolEvent::SellerSettled { tid, h_s, .. } => {
                self.payments.entry((*tid, *h_s)).or_default().settled_at.get_or_insert(seq);
            }
            ProtocolEvent::BuyerSettleStarted { buyer, fund } => self.buyer_started.push((seq, *buyer, *fund)),
            ProtocolEvent::BuyerSettleFinalized { validator, source, transactions, fund } => {
                if !corrupted {
                    let e = self.buyer_values.entry((*source, fund.clone())).or_default();
                    e.0.insert(*validator);
                    e.1.push(seq);
                    self.finalized.push((seq, *validator, *source, transactions.clone(), fund.clone()));
                }
            }
            ProtocolEvent::BuyerSettled { buyer, source, fund, .. } => {
                self.buyer_settled.push((seq, *buyer, *source, fund.clone()));
            }
            _ => {}
        }
    }

    fn ever_corrupted(&self, p: PartyId) -> bool {
        self.corrupted_at.contains_key(&p)
    }

    fn corrupted_before(&self, p: PartyId, seq: u64) -> bool {
        self.corrupted_at.get(&p).is_some_and(|&s| s < seq)
    }

    fn corrupted_validators(&self) -> BTreeSet<usize> {
        self.corrupted_at.keys().copied().filter(|&p| p < self.params.n).collect()
    }

    fn fund(&self, fid: &Digest) -> Option<&FundInfo> {
        self.funds.iter().find(|f| f.fid == *fid)
    }

    fn amount(&self, fund: &FundInfo) -> u64 {
        fund.fbl / self.k2_prime as u64
    }

    /// Settled values from `fid` that could hold a full certificate:
    /// honest signers plus every corrupted validator reach the threshold.
    fn certified_values(&self, values: &SignerMap, fid: &Digest, threshold: usize) -> Vec<(FundHeader, Vec<u64>)> {
        let bad = self.corrupted_validators();
        values
            .iter()
            .filter(|((src, _), _)| src == fid)
            .filter(|(_, (signers, _))| signers.union(&bad).count() >= threshold)
            .map(|((_, h), (_, seqs))| (h.clone(), seqs.clone()))
            .collect()
    }

    fn seller_certified(&self, fid: &Digest) -> Vec<(FundHeader, Vec<u64>)> {
        self.certified_values(&self.seller_values, fid, self.params.n - self.params.f)
    }

    fn buyer_certified(&self, fid: &Digest) -> Vec<(FundHeader, Vec<u64>)> {
        self.certified_values(&self.buyer_values, fid, self.params.n - 2 * self.params.f)
    }

    /// Payments from `fid` for which a certificate could exist.
    fn possible_certificates(&self, fid: &Digest) -> Vec<(&TxKey, &Payment)> {
        let bad = self.corrupted_validators();
        let wt = self.params.witness_threshold();
        self.payments
            .iter()
            .filter(|(_, p)| p.fund == *fid)
            .filter(|(_, p)| {
                if p.certified_at.is_some() {
                    return true;
                }
                let helpers = match &p.quorum {
                    Some(q) => q.iter().filter(|v| bad.contains(v)).count(),
                    None => bad.len(),
                };
                p.validated_by.iter().filter(|v| !bad.contains(v)).count() + helpers >= wt
            })
            .collect()
    }

    fn honest_certified(&self, fid: &Digest) -> Vec<(&TxKey, &Payment)> {
        self.payments
            .iter()
            .filter(|(_, p)| p.fund == *fid && p.certified_at.is_some() && !self.ever_corrupted(p.seller))
            .collect()
    }
}

pub fn check_requirements(trace: &Trace) -> Result<RequirementReport, MissingSetup> {
    let f = Facts::collect(trace)?;
    let timed_out = f.status != Some(EndStatus::Quiescent);
    let requirements = vec![
        req1(&f, timed_out),
        req2(&f),
        req3(&f),
        req4(&f),
        req5(&f),
        req6(&f),
        req7(&f, timed_out),
        req8(&f, timed_out),
    ];
    let invariants = vec![uniqueness(&f), secrecy(trace, &f), knowledge_soundness(trace, &f), delivery(trace, &f)];
    let funds = f.funds.iter().map(|fund| summary(&f, fund)).collect();
    Ok(RequirementReport { status: f.status, requirements, invariants, funds })
}

fn summary(f: &Facts<'_>, fund: &FundInfo) -> FundSummary {
    let sellers = f.seller_certified(&fund.fid);
    let buyers = f.buyer_certified(&fund.fid);
    FundSummary {
        name: fund.name.clone(),
        balance: fund.fbl,
        certificates: f.possible_certificates(&fund.fid).len(),
        certified_value: sellers.iter().chain(&buyers).map(|(h, _)| h.fbl).sum(),
    }
}

fn req1(f: &Facts<'_>, timed_out: bool) -> Finding {
    let mut r = Finding::new("R1 honest-seller settlement completes");
    let mut checked = 0;
    for ((tid, _), p) in &f.payments {
        let (Some(cert), Some(start)) = (p.certified_at, p.settle_started) else { continue };
        if f.ever_corrupted(p.seller) {
            continue;
        }
        checked += 1;
        if p.settled_at.is_none() {
            let d = format!("payment {} to seller {} never settled", tid.short(), p.seller);
            if timed_out {
                r.inconclusive(d, [cert, start]);
            } else {
                r.fail(d, [cert, start]);
            }
        }
    }
    if r.verdict == Verdict::Pass {
        r.note(format!("{checked} settlement(s) by honest sellers"));
    }
    r
}

fn req2(f: &Facts<'_>) -> Finding {
    let mut r = Finding::new("R2 settled balance equals the payment amount");
    let mut checked = 0;
    for ((src, header), (_, seqs)) in &f.seller_values {
        let Some(fund) = f.fund(src) else { continue };
        checked += 1;
        if header.fbl != f.amount(fund) {
            r.fail(
                format!("seller fund of {} has balance {} not {}", src.short(), header.fbl, f.amount(fund)),
                seqs.clone(),
            );
        }
    }
    if r.verdict == Verdict::Pass {
        r.note(format!("{checked} seller-settled value(s)"));
    }
    r
}

fn req3(f: &Facts<'_>) -> Finding {
    let mut r = Finding::new("R3 at most k2' partial spends and total within balance");
    for fund in f.funds {
        let s = summary(f, fund);
        if s.certificates > f.k2_prime {
            let w = f.possible_certificates(&fund.fid).iter().filter_map(|(_, p)| p.certified_at).collect::<Vec<_>>();
            r.fail(format!("{} payment certificates from {} (k2' = {})", s.certificates, fund.name, f.k2_prime), w);
        }
        if s.certified_value > fund.fbl {
            let sellers = f.seller_certified(&fund.fid);
            let buyers = f.buyer_certified(&fund.fid);
            let w = sellers.iter().chain(&buyers).flat_map(|(_, s)| s.first().copied());
            r.fail(format!("{} certified from {} worth {}", s.certified_value, fund.name, fund.fbl), w);
        } else {
            r.note(format!(
                "{}: {} certificate(s), {} of {} certified",
                fund.name, s.certificates, s.certified_value, fund.fbl
            ));
        }
    }
    r
}

fn req4(f: &Facts<'_>) -> Finding {
    let mut r = Finding::new("R4 settled payments are deducted");
    for fund in f.funds {
        let settled = f.seller_certified(&fund.fid).len() as u64;
        for (h, seqs) in f.buyer_certified(&fund.fid) {
            let ceiling = fund.fbl.saturating_sub(settled * f.amount(fund));
            if h.fbl > ceiling {
                r.fail(
                    format!(
                        "{} settled at {} with {settled} seller settlement(s), ceiling {ceiling}",
                        fund.name, h.fbl
                    ),
                    seqs,
                );
            }
        }
    }
    r
}

fn req5(f: &Facts<'_>) -> Finding {
    let mut r = Finding::new("R5 payments to honest sellers are deducted");
    for fund in f.funds {
        let honest = f.honest_certified(&fund.fid);
        for (h, _) in f.buyer_certified(&fund.fid) {
            let deducted = (fund.fbl - h.fbl.min(fund.fbl)) / f.amount(fund).max(1);
            if (deducted as usize) < honest.len() {
                let w = honest.iter().filter_map(|(_, p)| p.certified_at);
                r.fail(
                    format!("{} deducts {deducted} payment(s) but {} went to honest sellers", fund.name, honest.len()),
                    w,
                );
            }
            // each honest payment is either settled or recorded by a signer
            for (key, p) in &honest {
                let recorded: Vec<u64> = f
                    .finalized
                    .iter()
                    .filter(|(_, _, src, txs, fh)| *src == fund.fid && *fh == h && txs.contains(key))
                    .map(|(s, ..)| *s)
                    .collect();
                if !recorded.is_empty() {
                    r.witness.push(recorded[0]);
                } else if let Some(s) = p.settled_at {
                    r.witness.push(s);
                } else {
                    r.fail(format!("payment {} neither settled nor recorded", key.0.short()), p.certified_at);
                }
            }
        }
        if !honest.is_empty() {
            r.note(format!("{}: {} payment(s) to honest sellers", fund.name, honest.len()));
        }
    }
    r
}

fn req6(f: &Facts<'_>) -> Finding {
    let mut r = Finding::new("R6 honest owner keeps at least balance minus payments made");
    for fund in f.funds {
        if f.ever_corrupted(fund.owner) {
            continue;
        }
        let made = f.started.iter().filter(|(_, b, _, fid, _)| *b == fund.owner && *fid == fund.fid).count() as u64;
        let floor = fund.fbl.saturating_sub(made * f.amount(fund));
        for (seq, buyer, src, h) in &f.buyer_settled {
            if *buyer == fund.owner && *src == fund.fid && h.fbl < floor {
                r.fail(format!("{} settled at {} below {floor}", fund.name, h.fbl), [*seq]);
            }
        }
    }
    r
}

fn req7(f: &Facts<'_>, timed_out: bool) -> Finding {
    let mut r = Finding::new("R7 honest payments within k1 are certified");
    let mut per_fund: HashMap<(PartyId, Digest), usize> = HashMap::new();
    for (seq, buyer, seller, fid, tid) in &f.started {
        let count = per_fund.entry((*buyer, *fid)).or_default();
        *count += 1;
        if f.ever_corrupted(*buyer) || f.ever_corrupted(*seller) || *count > f.params.k1 {
            continue;
        }
        let certified = f.payments.iter().any(|((t, _), p)| t == tid && p.certified_at.is_some());
        if !certified {
            let d = format!("payment {} from {buyer} to {seller} not certified", tid.short());
            if timed_out {
                r.inconclusive(d, [*seq]);
            } else {
                r.fail(d, [*seq]);
            }
        }
    }
    r
}

fn req8(f: &Facts<'_>, timed_out: bool) -> Finding {
    let mut r = Finding::new("R8 honest buyer settlement completes");
    for (seq, buyer, fid) in &f.buyer_started {
        if f.ever_corrupted(*buyer) {
            continue;
        }
        if !f.buyer_settled.iter().any(|(_, b, src, _)| b == buyer && src == fid) {
            let d = format!("buyer {buyer} never settled {}", fid.short());
            if timed_out {
                r.inconclusive(d, [*seq]);
            } else {
                r.fail(d, [*seq]);
            }
        }
    }
    r
}

fn uniqueness(f: &Facts<'_>) -> Finding {
    let mut r = Finding::new("uniqueness");
    for fund in f.funds {
        let buyers = f.buyer_certified(&fund.fid);
        if buyers.len() > 1 {
            r.fail(
                format!("{} distinct settled values of {}", buyers.len(), fund.name),
                buyers.iter().flat_map(|(_, s)| s.first().copied()),
            );
        }
    }
    r
}

/// A propagated value may only enter adversary knowledge after its client
/// is corrupted, or after a reconstruction-phase message of that instance
/// (RECONSTRUCT, or a FORWARD or RECONSTRUCTED from an honest sender) has
/// reached a validator that is corrupted by then. Before that the corrupted
/// validators hold at most `f` shares.
fn secrecy(trace: &Trace, f: &Facts<'_>) -> Finding {
    let mut r = Finding::new("propagate secrecy");
    let phase = |d: &Delivery<'_>| {
        matches!(d.kind, "RECONSTRUCT" | "FORWARD" | "RECONSTRUCTED") && !f.corrupted_before(d.from, d.seq)
    };
    for (seq, label) in early_learns(trace, f, phase) {
        r.fail(format!("learned {label} before its reconstruction reached a corrupted validator"), [seq]);
    }
    r
}

/// Learns of propagated values that precede every delivery of the client's
/// own RECONSTRUCT to a corrupted validator. Honest validators forward their
/// shares as soon as they see RECONSTRUCT, so this ordering depends on
/// network latency and is reported separately from the checker verdicts.
pub fn strict_secrecy_violations(trace: &Trace) -> Result<Vec<u64>, MissingSetup> {
    let f = Facts::collect(trace)?;
    Ok(early_learns(trace, &f, |d| d.kind == "RECONSTRUCT").into_iter().map(|(s, _)| s).collect())
}

struct Delivery<'a> {
    seq: u64,
    from: PartyId,
    to: PartyId,
    kind: &'a str,
}

fn early_learns(trace: &Trace, f: &Facts<'_>, counts: impl Fn(&Delivery<'_>) -> bool) -> Vec<(u64, String)> {
    let n = f.params.n;
    let mut deliveries: HashMap<&str, Vec<Delivery<'_>>> = HashMap::new();
    let mut out = Vec::new();
    for rec in &trace.records {
        match rec {
            Record::Deliver { seq, from, to, kind, instance: Some(inst), .. } if *to < n => {
                let d = Delivery { seq: *seq, from: *from, to: *to, kind: kind.as_str() };
                if counts(&d) {
                    deliveries.entry(inst.as_str()).or_default().push(d);
                }
            }
            Record::Learn { seq, fact: Fact::Propagated { client, nprop, .. }, .. } => {
                if f.corrupted_before(*client, *seq + 1) {
                    continue;
                }
                let label = instance_label(*client, nprop);
                let ok = deliveries
                    .get(label.as_str())
                    .is_some_and(|v| v.iter().any(|d| d.seq < *seq && f.corrupted_before(d.to, *seq)));
                if !ok {
                    out.push((*seq, label));
                }
            }
            _ => {}
        }
    }
    out
}

/// Every learned fact has a derivation that refers to something the
/// adversary could see.
fn knowledge_soundness(trace: &Trace, f: &Facts<'_>) -> Finding {
    let mut r = Finding::new("knowledge soundness");
    let mut sends: HashMap<u64, (u64, PartyId, PartyId)> = HashMap::new();
    let mut delivered: HashMap<u64, u64> = HashMap::new();
    let mut ids: BTreeSet<usize> = BTreeSet::new();
    for rec in &trace.records {
        match rec {
            Record::Send { seq, msg, from, to, .. } => {
                sends.insert(*msg, (*seq, *from, *to));
            }
            Record::Deliver { seq, msg, .. } => {
                delivered.insert(*msg, *seq);
            }
            Record::Learn { seq, id, how, .. } => {
                let ok = match how {
                    Derivation::Observed { msg } => {
                        // sender corrupted when sending, or receiver corrupted by delivery
                        let by_send = sends.get(msg).is_some_and(|(_, from, _)| f.corrupted_before(*from, *seq));
                        let by_delivery = delivered.contains_key(msg)
                            && sends.get(msg).is_some_and(|(_, _, to)| f.corrupted_before(*to, *seq));
                        // the sender's observation is recorded before its send record
                        let pending_send = !sends.contains_key(msg);
                        by_send || by_delivery || pending_send
                    }
                    Derivation::Metadata { .. } => !f.traffic_hiding,
                    Derivation::Memory { party } => f.corrupted_before(*party, *seq),
                    Derivation::Derived { from } => !from.is_empty() && from.iter().all(|i| ids.contains(i)),
                };
                if !ok {
                    r.fail(format!("fact {id} has no admissible derivation"), [*seq]);
                }
                ids.insert(*id);
            }
            _ => {}
        }
    }
    r
}

/// Honest-to-honest messages are delivered, and those outside the payment
/// phase within the horizon.
fn delivery(trace: &Trace, f: &Facts<'_>) -> Finding {
    let mut r = Finding::new("delivery");
    let mut pending: BTreeMap<u64, u64> = BTreeMap::new();
    for rec in &trace.records {
        match rec {
            Record::Send { seq, time, msg, from, to, kind, deliver_at, .. } => {
                if f.ever_corrupted(*from) || f.ever_corrupted(*to) {
                    continue;
                }
                pending.insert(*msg, *seq);
                let payment = matches!(kind.as_str(), "VALIDATION_REQUEST" | "VALID" | "INVALID");
                if let Some(at) = deliver_at {
                    if !payment && at - time > f.horizon {
                        r.fail(format!("message {msg} delayed {} > {}", at - time, f.horizon), [*seq]);
                    }
                }
            }
            Record::Deliver { msg, .. } => {
                pending.remove(msg);
            }
            _ => {}
        }
    }
    if f.status == Some(EndStatus::Quiescent) && !pending.is_empty() {
        r.fail(format!("{} honest message(s) never delivered", pending.len()), pending.values().copied().take(8));
    }
    r
}
