//! Bundled adversaries.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::crypto::{Digest, Nonce};
use crate::protocol::{Message, PartyId, ProtocolEvent};
use crate::selection::select_quorum;

use super::{AdvCtx, DeliverVerdict, SendInfo, SendVerdict, Strategy};

/// Strategy selection as written in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StrategySpec {
    Passive {},
    SilentValidators {
        count: usize,
    },
    DoubleSpendGreedy {
        buyer: String,
        sellers: Vec<String>,
    },
    CorruptSellerFlip {
        seller: String,
        #[serde(default)]
        grind: usize,
    },
    EraseAfterBuyerSettle {
        buyer: String,
    },
    PropagateRace {
        #[serde(default = "default_initial")]
        initial: usize,
    },
    OverK1 {
        buyer: String,
    },
}

fn default_initial() -> usize {
    1
}

impl StrategySpec {
    pub fn name(&self) -> &'static str {
        match self {
            StrategySpec::Passive {} => "passive",
            StrategySpec::SilentValidators { .. } => "silent-validators",
            StrategySpec::DoubleSpendGreedy { .. } => "double-spend-greedy",
            StrategySpec::CorruptSellerFlip { .. } => "corrupt-seller-flip",
            StrategySpec::EraseAfterBuyerSettle { .. } => "erase-after-buyer-settle",
            StrategySpec::PropagateRace { .. } => "propagate-race",
            StrategySpec::OverK1 { .. } => "over-k1",
        }
    }

    /// Builds the strategy, resolving client names to party ids.
    pub fn build(&self, resolve: impl Fn(&str) -> Option<PartyId>) -> Result<Box<dyn Strategy>, String> {
        let id = |name: &str| resolve(name).ok_or_else(|| format!("unknown client `{name}` in strategy"));
        Ok(match self {
            StrategySpec::Passive {} => Box::new(Passive),
            StrategySpec::SilentValidators { count } => Box::new(SilentValidators { count: *count }),
            StrategySpec::DoubleSpendGreedy { buyer, sellers } => {
                Box::new(DoubleSpendGreedy::new(id(buyer)?, sellers.iter().map(|s| id(s)).collect::<Result<_, _>>()?))
            }
            StrategySpec::CorruptSellerFlip { seller, grind } => Box::new(CorruptSellerFlip::new(id(seller)?, *grind)),
            StrategySpec::EraseAfterBuyerSettle { buyer } => Box::new(EraseAfterBuyerSettle::new(id(buyer)?)),
            StrategySpec::PropagateRace { initial } => Box::new(PropagateRace::new(*initial)),
            StrategySpec::OverK1 { buyer } => Box::new(OverK1 { buyer: id(buyer)? }),
        })
    }
}

/// Watches and does nothing.
pub struct Passive;

impl Strategy for Passive {
    fn name(&self) -> &str {
        "passive"
    }
}

/// Corrupts `count` validators at random and drops everything sent to them.
pub struct SilentValidators {
    pub count: usize,
}

impl Strategy for SilentValidators {
    fn name(&self) -> &str {
        "silent-validators"
    }

    fn on_start(&mut self, ctx: &mut AdvCtx<'_>) {
        for v in random_validators(ctx, self.count) {
            ctx.corrupt(v);
        }
    }

    fn on_deliver_to_corrupt(&mut self, ctx: &mut AdvCtx<'_>, info: &SendInfo, _msg: &Message) -> DeliverVerdict {
        if info.to < ctx.n() {
            DeliverVerdict::Drop
        } else {
            DeliverVerdict::Honest
        }
    }
}

fn random_validators(ctx: &mut AdvCtx<'_>, count: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (0..ctx.n()).filter(|v| !ctx.is_corrupted(*v)).collect();
    all.shuffle(ctx.rng());
    all.truncate(count);
    all
}

/// Corrupted validators sign whatever a corrupted seller asks them to.
fn forge_valid(ctx: &mut AdvCtx<'_>, info: &SendInfo, msg: &Message) -> Option<DeliverVerdict> {
    let Message::ValidationRequest { tid, h_s, .. } = msg else { return None };
    if info.to >= ctx.n() || !ctx.is_corrupted(info.from) {
        return None;
    }
    let sig = ctx.sign(info.to, &tid.witness_payload(h_s))?;
    ctx.inject(info.to, info.from, Message::Valid { tid_key: tid.key(), h_s: *h_s, sig });
    Some(DeliverVerdict::Drop)
}

/// Corrupt buyer and sellers try to certify as many payments from one fund
/// as possible. Each time a corrupted seller learns its quorum, the
/// adversary counts the honest members that already validated the fund and
/// corrupts just enough of them to reach the witness threshold, while the
/// budget lasts. Denials to corrupted sellers are held back so that every
/// available witness is counted.
pub struct DoubleSpendGreedy {
    buyer: PartyId,
    sellers: Vec<PartyId>,
    tid_fund: HashMap<Digest, Digest>,
    validated: HashMap<Digest, BTreeSet<usize>>,
}

impl DoubleSpendGreedy {
    pub fn new(buyer: PartyId, sellers: Vec<PartyId>) -> Self {
        DoubleSpendGreedy { buyer, sellers, tid_fund: HashMap::new(), validated: HashMap::new() }
    }
}

impl Strategy for DoubleSpendGreedy {
    fn name(&self) -> &str {
        "double-spend-greedy"
    }

    fn on_start(&mut self, ctx: &mut AdvCtx<'_>) {
        ctx.corrupt(self.buyer);
        for &s in &self.sellers {
            ctx.corrupt(s);
        }
    }

    fn on_send(&mut self, ctx: &mut AdvCtx<'_>, info: &SendInfo, payload: Option<&Message>) -> SendVerdict {
        match payload {
            Some(Message::Invalid { .. }) if ctx.is_corrupted(info.to) => SendVerdict::Delay(10 * ctx.horizon()),
            _ => SendVerdict::Default,
        }
    }

    fn on_deliver_to_corrupt(&mut self, ctx: &mut AdvCtx<'_>, info: &SendInfo, msg: &Message) -> DeliverVerdict {
        if let Some(v) = forge_valid(ctx, info, msg) {
            return v;
        }
        if let Message::Valid { tid_key, .. } = msg {
            if let Some(fid) = self.tid_fund.get(tid_key) {
                self.validated.entry(*fid).or_default().insert(info.from);
            }
        }
        DeliverVerdict::Honest
    }

    fn on_corrupt_event(&mut self, ctx: &mut AdvCtx<'_>, party: PartyId, event: &ProtocolEvent) {
        let ProtocolEvent::QuorumSelected { tid, quorum, .. } = event else { return };
        let Some(fid) = ctx.client_mut(party).and_then(|c| c.sales.get(tid)).map(|s| s.tid.fund.fid()) else {
            return;
        };
        self.tid_fund.insert(*tid, fid);
        let seen = self.validated.get(&fid).cloned().unwrap_or_default();
        let deniers: Vec<usize> =
            quorum.iter().copied().filter(|v| !ctx.is_corrupted(*v) && seen.contains(v)).collect();
        let p = ctx.shared().params;
        let expected = p.m - deniers.len();
        let threshold = p.witness_threshold();
        if expected >= threshold {
            return;
        }
        let need = threshold - expected;
        if need <= ctx.f() - ctx.corrupted_validators() {
            for &v in deniers.iter().take(need) {
                ctx.corrupt(v);
            }
        }
    }
}

/// A corrupted seller picks, out of `grind` candidate nonces, the one whose
/// quorum contains the most corrupted validators (the adversary corrupts `f`
/// validators up front). Corrupted quorum members sign without keeping any
/// record, so the payment is invisible to honest validators unless the seller
/// settles it. Honest quorum members are slowed down as much as the delay
/// cap allows.
pub struct CorruptSellerFlip {
    seller: PartyId,
    grind: usize,
    quorum: BTreeSet<usize>,
}

impl CorruptSellerFlip {
    pub fn new(seller: PartyId, grind: usize) -> Self {
        CorruptSellerFlip { seller, grind, quorum: BTreeSet::new() }
    }
}

impl Strategy for CorruptSellerFlip {
    fn name(&self) -> &str {
        "corrupt-seller-flip"
    }

    fn on_start(&mut self, ctx: &mut AdvCtx<'_>) {
        ctx.corrupt(self.seller);
        for v in random_validators(ctx, ctx.f()) {
            ctx.corrupt(v);
        }
    }

    fn on_send(&mut self, ctx: &mut AdvCtx<'_>, info: &SendInfo, _payload: Option<&Message>) -> SendVerdict {
        if self.quorum.contains(&info.from) && !ctx.is_corrupted(info.from) {
            SendVerdict::Delay(ctx.horizon().saturating_sub(info.latency))
        } else {
            SendVerdict::Default
        }
    }

    fn on_deliver_to_corrupt(&mut self, ctx: &mut AdvCtx<'_>, info: &SendInfo, msg: &Message) -> DeliverVerdict {
        if let Some(v) = forge_valid(ctx, info, msg) {
            return v;
        }
        let Message::Pay { tid } = msg else { return DeliverVerdict::Honest };
        if info.to != self.seller || self.grind <= 1 {
            return DeliverVerdict::Honest;
        }
        let p = ctx.shared().params;
        let bits = ctx.shared().nonce_bits;
        let mut best: Option<(usize, Nonce)> = None;
        for _ in 0..self.grind {
            let n_s = Nonce::draw(ctx.rng(), bits);
            let Ok(q) = select_quorum(tid, &n_s, p.n, p.m) else { continue };
            let hit = q.members.iter().filter(|v| ctx.is_corrupted(**v)).count();
            if best.as_ref().is_none_or(|(b, _)| hit > *b) {
                best = Some((hit, n_s));
            }
        }
        let Some((_, n_s)) = best else { return DeliverVerdict::Honest };
        let buyer = info.from;
        let buyer_pk = ctx.shared().pks[buyer];
        let tid = tid.clone();
        ctx.act_as_client(self.seller, |c, env| c.sell_with_nonce(buyer, buyer_pk, &tid, n_s, env));
        DeliverVerdict::Drop
    }

    fn on_corrupt_event(&mut self, _ctx: &mut AdvCtx<'_>, party: PartyId, event: &ProtocolEvent) {
        if let ProtocolEvent::QuorumSelected { quorum, .. } = event {
            if party == self.seller {
                self.quorum.extend(quorum.iter().copied());
            }
        }
    }
}

/// A corrupted buyer pays honest sellers, then, right before settling its
/// fund, corrupts `f` validators and erases their record of the payment.
pub struct EraseAfterBuyerSettle {
    buyer: PartyId,
    erased: bool,
}

impl EraseAfterBuyerSettle {
    pub fn new(buyer: PartyId) -> Self {
        EraseAfterBuyerSettle { buyer, erased: false }
    }
}

impl Strategy for EraseAfterBuyerSettle {
    fn name(&self) -> &str {
        "erase-after-buyer-settle"
    }

    fn on_start(&mut self, ctx: &mut AdvCtx<'_>) {
        ctx.corrupt(self.buyer);
    }

    fn on_corrupt_intent(&mut self, ctx: &mut AdvCtx<'_>, intent: &super::Intent) -> super::IntentVerdict {
        if let super::Intent::BuyerSettle { fund, .. } = intent {
            if !self.erased {
                self.erased = true;
                let fid = ctx.funds()[*fund].fid();
                for v in random_validators(ctx, ctx.f()) {
                    if ctx.corrupt(v) {
                        ctx.erase_evidence(v, &fid);
                    }
                }
            }
        }
        super::IntentVerdict::Honest
    }

    fn on_send(&mut self, ctx: &mut AdvCtx<'_>, info: &SendInfo, _payload: Option<&Message>) -> SendVerdict {
        // hold back honest validators' traffic to make the n - f collections
        // favour the corrupted ones
        if self.erased && info.from < ctx.n() && !ctx.is_corrupted(info.from) {
            SendVerdict::Delay(ctx.horizon().saturating_sub(info.latency))
        } else {
            SendVerdict::Default
        }
    }
}

/// Races a propagation: starts with `initial` corrupted validators, adds one
/// more each time it sees the client's second broadcast round begin, and
/// slows every honest validator-to-validator message to the cap so that
/// corrupted validators hear forwarded shares first.
pub struct PropagateRace {
    initial: usize,
    client_rounds: BTreeMap<PartyId, BTreeSet<u64>>,
}

impl PropagateRace {
    pub fn new(initial: usize) -> Self {
        PropagateRace { initial, client_rounds: BTreeMap::new() }
    }
}

impl Strategy for PropagateRace {
    fn name(&self) -> &str {
        "propagate-race"
    }

    fn on_start(&mut self, ctx: &mut AdvCtx<'_>) {
        for v in random_validators(ctx, self.initial.min(ctx.f())) {
            ctx.corrupt(v);
        }
    }

    fn on_send(&mut self, ctx: &mut AdvCtx<'_>, info: &SendInfo, _payload: Option<&Message>) -> SendVerdict {
        let n = ctx.n();
        if info.from >= n {
            let rounds = self.client_rounds.entry(info.from).or_default();
            if rounds.insert(info.time) && rounds.len() == 2 {
                ctx.schedule(info.time + 1, info.from as u64);
            }
            return SendVerdict::Default;
        }
        if info.to < n && !ctx.is_corrupted(info.from) && !ctx.is_corrupted(info.to) {
            return SendVerdict::Delay(ctx.horizon().saturating_sub(info.latency));
        }
        SendVerdict::Default
    }

    fn on_timer(&mut self, ctx: &mut AdvCtx<'_>, _tag: u64) {
        if ctx.corrupted_validators() < ctx.f() {
            for v in random_validators(ctx, 1) {
                ctx.corrupt(v);
            }
        }
    }
}

/// A corrupted buyer ignores the `k1` limit; everything else is honest.
pub struct OverK1 {
    pub buyer: PartyId,
}

impl Strategy for OverK1 {
    fn name(&self) -> &str {
        "over-k1"
    }

    fn on_start(&mut self, ctx: &mut AdvCtx<'_>) {
        ctx.corrupt(self.buyer);
    }
}
