//! Deterministic discrete-event network with an adaptive adversary.
//!
//! Virtual time is integer ticks and the event queue is ordered by
//! `(time, seq)`, so a run is a pure function of the scenario, the strategy
//! and the seed. Messages between two honest parties are opaque to the
//! adversary and, unless it has identified an endpoint as relevant to a
//! payment it knows about, cannot be delayed past the horizon.

mod adversary;
mod knowledge;
pub mod strategies;
mod trace;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::crypto::{hash, hash_concat};
use crate::ledger::Fund;
use crate::params::{ParamsError, QuorumParams};
use crate::propagate::PropagateMsg;
use crate::protocol::{Client, Env, Message, PartyId, Population, ProtocolEvent, Validator};

pub use adversary::{AdvCtx, DeliverVerdict, IntentVerdict, SendInfo, SendVerdict, Strategy};
pub use knowledge::{AdversaryView, Derivation, Fact, KnowledgeEntry, LearnCtx};
pub use trace::{ClientInfo, EndStatus, FundInfo, Record, Trace, TraceError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Longest delay the adversary may impose on a protected message.
    pub horizon: u64,
    pub step_cap: u64,
    pub latency_min: u64,
    pub latency_max: u64,
    /// Payment traffic is batched, so metadata does not reveal which
    /// validators a seller talks to.
    pub traffic_hiding: bool,
    pub nonce_bits: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            horizon: 100,
            step_cap: 5_000_000,
            latency_min: 1,
            latency_max: 10,
            traffic_hiding: true,
            nonce_bits: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "intent", rename_all = "snake_case")]
pub enum Intent {
    Pay { at: u64, buyer: PartyId, fund: usize, seller: PartyId },
    SellerSettle { at: u64, seller: PartyId },
    BuyerSettle { at: u64, buyer: PartyId, fund: usize },
    Propagate { at: u64, client: PartyId, message: String },
}

impl Intent {
    pub fn at(&self) -> u64 {
        match self {
            Intent::Pay { at, .. }
            | Intent::SellerSettle { at, .. }
            | Intent::BuyerSettle { at, .. }
            | Intent::Propagate { at, .. } => *at,
        }
    }

    pub fn party(&self) -> PartyId {
        match self {
            Intent::Pay { buyer, .. } | Intent::BuyerSettle { buyer, .. } => *buyer,
            Intent::SellerSettle { seller, .. } => *seller,
            Intent::Propagate { client, .. } => *client,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundSpec {
    pub name: String,
    pub owner: PartyId,
    pub balance: u64,
}

/// Everything a run needs besides the strategy and the seed. Client `i` is
/// party `params.n + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub params: QuorumParams,
    pub clients: Vec<String>,
    pub funds: Vec<FundSpec>,
    pub intents: Vec<Intent>,
    pub config: SimConfig,
}

#[derive(Debug, Clone)]
enum Pending {
    Deliver(u64),
    Intent(usize),
    Timer(u64),
}

#[derive(Debug, Clone)]
struct InFlight {
    from: PartyId,
    to: PartyId,
    msg: Message,
    instance: Option<String>,
    size: usize,
}

pub(crate) struct Core {
    pop: Population,
    funds: Vec<Fund>,
    intents: Vec<Intent>,
    config: SimConfig,
    now: u64,
    queue_seq: u64,
    queue: BTreeMap<(u64, u64), Pending>,
    inflight: HashMap<u64, InFlight>,
    held: BTreeSet<u64>,
    next_msg: u64,
    party_rngs: Vec<ChaCha8Rng>,
    net_rng: ChaCha8Rng,
    adv_rng: ChaCha8Rng,
    corrupted: BTreeSet<PartyId>,
    view: AdversaryView,
    trace: Trace,
    outbox: Vec<(PartyId, PartyId, Message)>,
    events: Vec<(PartyId, ProtocolEvent)>,
    steps: u64,
    // broadcasts repeat one payload, so the last encoding is kept
    last_encoded: Option<(Message, usize, crate::crypto::Digest)>,
}

fn sub_rng(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    let d = hash_concat(&[&seed.to_be_bytes(), label.as_bytes(), &index.to_be_bytes()]);
    ChaCha8Rng::from_seed(d.0)
}

/// Propagate instance a message belongs to, as `client:nprop`.
fn instance_of(from: PartyId, to: PartyId, msg: &Message, pop: &Population) -> Option<String> {
    let Message::Propagate(p) = msg else { return None };
    let client = match p {
        PropagateMsg::Share { .. } | PropagateMsg::Reconstruct { .. } => from,
        PropagateMsg::ShareAck { .. } => to,
        PropagateMsg::Forward { client, .. } | PropagateMsg::Reconstructed { client, .. } => pop.shared.id(client)?,
    };
    Some(instance_label(client, p.nprop()))
}

pub fn instance_label(client: PartyId, nprop: &crate::crypto::Nonce) -> String {
    format!("{}:{}", client, hex::encode(nprop.as_bytes()))
}

impl Core {
    fn enqueue(&mut self, at: u64, p: Pending) {
        self.queue.insert((at, self.queue_seq), p);
        self.queue_seq += 1;
    }

    fn seq(&self) -> u64 {
        self.trace.next_seq()
    }

    fn record_learns(&mut self) {
        for e in self.view.take_fresh() {
            let seq = self.seq();
            self.trace.push(Record::Learn { seq, time: self.now, id: e.id, fact: e.fact, how: e.how });
        }
    }

    fn action(&mut self, action: &str, detail: String, accepted: bool) {
        let seq = self.seq();
        self.trace.push(Record::AdversaryAction { seq, time: self.now, action: action.to_string(), detail, accepted });
    }

    fn is_corrupted(&self, p: PartyId) -> bool {
        self.corrupted.contains(&p)
    }

    fn corrupted_validators(&self) -> usize {
        self.corrupted.range(..self.pop.shared.n()).count()
    }

    fn learn_ctx_parts(&self) -> (usize, usize, usize) {
        let p = &self.pop.shared.params;
        (p.n, p.m, p.f)
    }

    fn observe(&mut self, id: u64, from: PartyId, to: PartyId, msg: &Message) {
        let (n, m, f) = self.learn_ctx_parts();
        let cx = LearnCtx { n, m, f, roster: &self.pop.shared.roster, ids: &self.pop.shared.ids };
        self.view.observe(id, from, to, msg, &cx);
        self.record_learns();
    }

    /// The delay cap does not protect this message: an endpoint is corrupted,
    /// or the adversary knows the validator belongs to the payment's quorum.
    fn uncapped(&self, from: PartyId, to: PartyId, msg: &Message) -> bool {
        if self.is_corrupted(from) || self.is_corrupted(to) {
            return true;
        }
        let Some(tid) = msg.payment_tid() else { return false };
        let n = self.pop.shared.n();
        let (seller, validator) = if from < n { (to, from) } else { (from, to) };
        self.view.knows_member(&tid, validator) || self.view.knows(&Fact::Contact { seller, validator })
    }

    fn corrupt(&mut self, party: PartyId) -> bool {
        let n = self.pop.shared.n();
        let total = n + self.pop.clients.len();
        if party >= total {
            self.action("corrupt", format!("party {party} does not exist"), false);
            return false;
        }
        if self.is_corrupted(party) {
            return true;
        }
        if party < n && self.corrupted_validators() >= self.pop.shared.f() {
            self.action("corrupt", format!("validator {party} exceeds the budget of {}", self.pop.shared.f()), false);
            return false;
        }
        self.corrupted.insert(party);
        let seq = self.seq();
        self.trace.push(Record::Corrupt { seq, time: self.now, party, validator: party < n });
        let (nn, m, f) = self.learn_ctx_parts();
        let cx = LearnCtx { n: nn, m, f, roster: &self.pop.shared.roster, ids: &self.pop.shared.ids };
        if party < n {
            self.view.dump_validator(&self.pop.validators[party], &cx);
        } else {
            self.view.dump_client(&self.pop.clients[party - n], &cx);
        }
        self.record_learns();
        true
    }

    /// Runs `f` against party `p`'s state machine and queues what it emits.
    fn act(&mut self, p: PartyId, f: impl FnOnce(Party<'_>, &mut Env<'_>)) {
        let n = self.pop.shared.n();
        let corrupted = self.corrupted.contains(&p);
        let Population { shared, validators, clients, .. } = &mut self.pop;
        let mut env = Env::new(p, self.now, corrupted, shared, &mut self.party_rngs[p]);
        let party = if p < n { Party::Validator(&mut validators[p]) } else { Party::Client(&mut clients[p - n]) };
        f(party, &mut env);
        let Env { out, events, .. } = env;
        self.events.extend(events.into_iter().map(|e| (p, e)));
        self.outbox.extend(out.into_iter().map(|(to, m)| (p, to, m)));
        // a corrupted client's fresh local secrets are known at once
        if corrupted && p >= n {
            let (nn, m, f) = self.learn_ctx_parts();
            let cx = LearnCtx { n: nn, m, f, roster: &self.pop.shared.roster, ids: &self.pop.shared.ids };
            self.view.dump_client(&self.pop.clients[p - n], &cx);
            self.record_learns();
        }
    }

    fn fire_intent(&mut self, i: usize) {
        let intent = self.intents[i].clone();
        let funds = &self.funds;
        let fid = |k: usize| funds.get(k).map(|f| f.fid());
        match intent {
            Intent::Pay { buyer, fund, seller, .. } => {
                if let Some(fid) = fid(fund) {
                    self.act(buyer, |p, env| {
                        if let Party::Client(c) = p {
                            c.pay(&fid, seller, env)
                        }
                    });
                }
            }
            Intent::SellerSettle { seller, .. } => self.act(seller, |p, env| {
                if let Party::Client(c) = p {
                    c.seller_settle_all(env)
                }
            }),
            Intent::BuyerSettle { buyer, fund, .. } => {
                if let Some(fid) = fid(fund) {
                    self.act(buyer, |p, env| {
                        if let Party::Client(c) = p {
                            c.buyer_settle(&fid, env)
                        }
                    });
                }
            }
            Intent::Propagate { client, message, .. } => self.act(client, |p, env| {
                if let Party::Client(c) = p {
                    c.propagate(message.into_bytes(), env);
                }
            }),
        }
    }
}

/// A single run. Build with [`Simulation::new`], drive with
/// [`Simulation::run`], then inspect the trace and final party state.
pub struct Simulation {
    core: Core,
    finished: bool,
}

pub(crate) enum Party<'a> {
    Validator(&'a mut Validator),
    Client(&'a mut Client),
}

impl Simulation {
    pub fn new(scenario: &Scenario, strategy_name: &str, seed: u64) -> Result<Self, ParamsError> {
        let mut setup_rng = sub_rng(seed, "setup", 0);
        let cfg = scenario.config.clone();
        let mut pop = Population::new(scenario.params, scenario.clients.len(), cfg.nonce_bits, &mut setup_rng)?;
        let n = scenario.params.n;
        let parties = n + scenario.clients.len();
        let mut funds = Vec::new();
        let mut fund_info = Vec::new();
        for spec in &scenario.funds {
            let f = pop.genesis_fund(&spec.name, spec.owner, spec.balance);
            fund_info.push(FundInfo { name: spec.name.clone(), fid: f.fid(), fbl: spec.balance, owner: spec.owner });
            funds.push(f);
        }
        let k2_prime = pop.shared.k2_prime;
        let mut core = Core {
            pop,
            funds,
            intents: scenario.intents.clone(),
            config: cfg.clone(),
            now: 0,
            queue_seq: 0,
            queue: BTreeMap::new(),
            inflight: HashMap::new(),
            held: BTreeSet::new(),
            next_msg: 0,
            party_rngs: (0..parties).map(|p| sub_rng(seed, "party", p as u64)).collect(),
            net_rng: sub_rng(seed, "net", 0),
            adv_rng: sub_rng(seed, "adversary", 0),
            corrupted: BTreeSet::new(),
            view: AdversaryView::default(),
            trace: Trace::default(),
            outbox: Vec::new(),
            events: Vec::new(),
            steps: 0,
            last_encoded: None,
        };
        let clients =
            scenario.clients.iter().enumerate().map(|(i, name)| ClientInfo { id: n + i, name: name.clone() }).collect();
        core.trace.push(Record::Setup {
            seq: 0,
            params: scenario.params,
            k2_prime,
            clients,
            funds: fund_info,
            horizon: cfg.horizon,
            step_cap: cfg.step_cap,
            traffic_hiding: cfg.traffic_hiding,
            strategy: strategy_name.to_string(),
            seed,
        });
        for (i, intent) in scenario.intents.iter().enumerate() {
            core.enqueue(intent.at(), Pending::Intent(i));
        }
        Ok(Simulation { core, finished: false })
    }

    /// Runs to quiescence or the step cap and returns the trace.
    pub fn run(&mut self, strategy: &mut dyn Strategy) -> &Trace {
        if self.finished {
            return &self.core.trace;
        }
        self.finished = true;
        strategy.on_start(&mut AdvCtx::new(&mut self.core));
        self.flush(strategy);
        let status = loop {
            let Some(((time, _), ev)) = self.core.queue.pop_first() else {
                if self.release_held() {
                    continue;
                }
                break EndStatus::Quiescent;
            };
            self.core.steps += 1;
            if self.core.steps > self.core.config.step_cap {
                break EndStatus::Timeout;
            }
            self.core.now = time;
            match ev {
                Pending::Deliver(id) => self.deliver(id, strategy),
                Pending::Intent(i) => self.intent(i, strategy),
                Pending::Timer(tag) => strategy.on_timer(&mut AdvCtx::new(&mut self.core), tag),
            }
            self.flush(strategy);
        };
        let c = &mut self.core;
        let seq = c.seq();
        c.trace.push(Record::End { seq, time: c.now, status, steps: c.steps.min(c.config.step_cap) });
        &self.core.trace
    }

    pub fn trace(&self) -> &Trace {
        &self.core.trace
    }

    pub fn into_trace(self) -> Trace {
        self.core.trace
    }

    pub fn population(&self) -> &Population {
        &self.core.pop
    }

    pub fn view(&self) -> &AdversaryView {
        &self.core.view
    }

    pub fn corrupted(&self) -> &BTreeSet<PartyId> {
        &self.core.corrupted
    }

    pub fn funds(&self) -> &[Fund] {
        &self.core.funds
    }

    pub fn now(&self) -> u64 {
        self.core.now
    }

    /// Held messages between honest parties are delivered eventually; this
    /// is the only place that happens.
    fn release_held(&mut self) -> bool {
        let c = &mut self.core;
        let ids: Vec<u64> = c
            .held
            .iter()
            .copied()
            .filter(|id| {
                let m = &c.inflight[id];
                !c.corrupted.contains(&m.from) && !c.corrupted.contains(&m.to)
            })
            .collect();
        if ids.is_empty() {
            return false;
        }
        for id in ids {
            c.held.remove(&id);
            let lat = c.net_rng.gen_range(c.config.latency_min..=c.config.latency_max);
            let at = c.now + lat;
            c.action("release", format!("message {id} delivered at {at} (eventual delivery)"), true);
            c.enqueue(at, Pending::Deliver(id));
        }
        true
    }

    fn intent(&mut self, i: usize, strategy: &mut dyn Strategy) {
        let c = &mut self.core;
        let intent = c.intents[i].clone();
        let seq = c.seq();
        c.trace.push(Record::Intent { seq, time: c.now, intent: intent.clone() });
        if c.is_corrupted(intent.party()) {
            let verdict = strategy.on_corrupt_intent(&mut AdvCtx::new(c), &intent);
            if verdict == IntentVerdict::Skip {
                c.action("skip_intent", format!("intent {i} of party {}", intent.party()), true);
                return;
            }
        }
        c.fire_intent(i);
    }

    fn deliver(&mut self, id: u64, strategy: &mut dyn Strategy) {
        let c = &mut self.core;
        let Some(m) = c.inflight.remove(&id) else { return };
        let seq = c.seq();
        c.trace.push(Record::Deliver {
            seq,
            time: c.now,
            msg: id,
            from: m.from,
            to: m.to,
            kind: m.msg.kind().to_string(),
            instance: m.instance.clone(),
        });
        if c.is_corrupted(m.to) {
            c.observe(id, m.from, m.to, &m.msg);
            let info = SendInfo {
                msg: id,
                from: m.from,
                to: m.to,
                size: m.size,
                time: c.now,
                kind: Some(m.msg.kind()),
                latency: 0,
            };
            let verdict = strategy.on_deliver_to_corrupt(&mut AdvCtx::new(c), &info, &m.msg);
            if verdict == DeliverVerdict::Drop {
                c.action("drop", format!("message {id} at corrupted party {}", m.to), true);
                return;
            }
        }
        let from = m.from;
        let msg = m.msg;
        c.act(m.to, |p, env| match p {
            Party::Validator(v) => v.handle(from, &msg, env),
            Party::Client(cl) => cl.handle(from, &msg, env),
        });
    }

    /// Records queued events and sends until nothing is left. Strategy
    /// callbacks may queue more of either.
    fn flush(&mut self, strategy: &mut dyn Strategy) {
        loop {
            let c = &mut self.core;
            if !c.events.is_empty() {
                let events = std::mem::take(&mut c.events);
                for (party, event) in events {
                    let c = &mut self.core;
                    let corrupted = c.is_corrupted(party);
                    let seq = c.seq();
                    c.trace.push(Record::Event { seq, time: c.now, party, corrupted, event: event.clone() });
                    if corrupted {
                        strategy.on_corrupt_event(&mut AdvCtx::new(c), party, &event);
                    }
                }
                continue;
            }
            if c.outbox.is_empty() {
                break;
            }
            let out = std::mem::take(&mut c.outbox);
            for (from, to, msg) in out {
                self.send(from, to, msg, strategy);
            }
        }
    }

    fn send(&mut self, from: PartyId, to: PartyId, msg: Message, strategy: &mut dyn Strategy) {
        let c = &mut self.core;
        let id = c.next_msg;
        c.next_msg += 1;
        let (size, digest) = match &c.last_encoded {
            Some((m, size, digest)) if *m == msg => (*size, *digest),
            _ => {
                let bytes = msg.encode();
                let (size, digest) = (bytes.len(), hash(&bytes));
                c.last_encoded = Some((msg.clone(), size, digest));
                (size, digest)
            }
        };
        let instance = instance_of(from, to, &msg, &c.pop);
        if c.is_corrupted(from) {
            c.observe(id, from, to, &msg);
        }
        if !c.config.traffic_hiding {
            let n = c.pop.shared.n();
            c.view.observe_metadata(id, from, to, &msg, n);
            c.record_learns();
        }
        let latency = c.net_rng.gen_range(c.config.latency_min..=c.config.latency_max);
        let visible = c.is_corrupted(from) || c.is_corrupted(to);
        let info = SendInfo {
            msg: id,
            from,
            to,
            size,
            time: c.now,
            kind: (visible || !c.config.traffic_hiding).then(|| msg.kind()),
            latency,
        };
        let verdict = strategy.on_send(&mut AdvCtx::new(c), &info, visible.then_some(&msg));
        let capped = !c.uncapped(from, to, &msg);
        let default_at = Some(c.now + latency);
        let deliver_at = match verdict {
            SendVerdict::Default => default_at,
            SendVerdict::Delay(extra) => {
                let total = latency.saturating_add(extra);
                if capped && total > c.config.horizon {
                    c.action("delay", format!("message {id} by {total} exceeds horizon {}", c.config.horizon), false);
                    default_at
                } else {
                    c.action("delay", format!("message {id} by {total}"), true);
                    Some(c.now + total)
                }
            }
            SendVerdict::Hold => {
                if capped {
                    c.action("hold", format!("message {id} is protected by the delay cap"), false);
                    default_at
                } else {
                    c.action("hold", format!("message {id}"), true);
                    None
                }
            }
        };
        let seq = c.seq();
        c.trace.push(Record::Send {
            seq,
            time: c.now,
            msg: id,
            from,
            to,
            kind: msg.kind().to_string(),
            size,
            digest,
            instance: instance.clone(),
            deliver_at,
        });
        c.inflight.insert(id, InFlight { from, to, msg, instance, size });
        match deliver_at {
            Some(at) => c.enqueue(at, Pending::Deliver(id)),
            None => {
                c.held.insert(id);
            }
        }
    }
}

#[cfg(test)]
mod tests;
