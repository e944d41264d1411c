//! Strategy callbacks and the capabilities handed to them.

use std::collections::BTreeSet;

use rand_chacha::ChaCha8Rng;

use crate::crypto::{Digest, Signature};
use crate::ledger::Fund;
use crate::protocol::{Client, Env, Message, PartyId, ProtocolEvent, Shared, Validator};

use super::{AdversaryView, Core, Intent, Party, Pending};

/// Metadata of a message. `kind` is only filled in when the payload is
/// visible or traffic is not hidden.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SendInfo {
    pub msg: u64,
    pub from: PartyId,
    pub to: PartyId,
    pub size: usize,
    pub time: u64,
    pub kind: Option<&'static str>,
    /// Network latency the scheduler drew, before any adversarial delay.
    pub latency: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendVerdict {
    Default,
    /// Extra ticks on top of the drawn latency.
    Delay(u64),
    /// Keep the message until released.
    Hold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeliverVerdict {
    /// Let the corrupted party's own code process the message.
    Honest,
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntentVerdict {
    Honest,
    Skip,
}

/// An adversary. Every callback may act through the [`AdvCtx`]. Payloads are
/// only ever passed in when an endpoint is corrupted.
pub trait Strategy {
    fn name(&self) -> &str;

    fn on_start(&mut self, _ctx: &mut AdvCtx<'_>) {}

    fn on_send(&mut self, _ctx: &mut AdvCtx<'_>, _info: &SendInfo, _payload: Option<&Message>) -> SendVerdict {
        SendVerdict::Default
    }

    fn on_deliver_to_corrupt(&mut self, _ctx: &mut AdvCtx<'_>, _info: &SendInfo, _msg: &Message) -> DeliverVerdict {
        DeliverVerdict::Honest
    }

    /// An event emitted by a party the adversary controls.
    fn on_corrupt_event(&mut self, _ctx: &mut AdvCtx<'_>, _party: PartyId, _event: &ProtocolEvent) {}

    fn on_corrupt_intent(&mut self, _ctx: &mut AdvCtx<'_>, _intent: &Intent) -> IntentVerdict {
        IntentVerdict::Honest
    }

    fn on_timer(&mut self, _ctx: &mut AdvCtx<'_>, _tag: u64) {}
}

pub struct AdvCtx<'a> {
    core: &'a mut Core,
}

impl<'a> AdvCtx<'a> {
    pub(crate) fn new(core: &'a mut Core) -> Self {
        AdvCtx { core }
    }

    pub fn now(&self) -> u64 {
        self.core.now
    }

    /// Public keys, roster and parameters.
    pub fn shared(&self) -> &Shared {
        &self.core.pop.shared
    }

    pub fn horizon(&self) -> u64 {
        self.core.config.horizon
    }

    pub fn n(&self) -> usize {
        self.core.pop.shared.n()
    }

    pub fn f(&self) -> usize {
        self.core.pop.shared.f()
    }

    pub fn parties(&self) -> usize {
        self.core.pop.shared.pks.len()
    }

    pub fn funds(&self) -> &[Fund] {
        &self.core.funds
    }

    pub fn view(&self) -> &AdversaryView {
        &self.core.view
    }

    pub fn corrupted(&self) -> &BTreeSet<PartyId> {
        &self.core.corrupted
    }

    pub fn is_corrupted(&self, p: PartyId) -> bool {
        self.core.is_corrupted(p)
    }

    pub fn corrupted_validators(&self) -> usize {
        self.core.corrupted_validators()
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.core.adv_rng
    }

    /// Takes over `p`. Validators count against the budget `f`; a rejected
    /// attempt is logged and returns false.
    pub fn corrupt(&mut self, p: PartyId) -> bool {
        self.core.corrupt(p)
    }

    pub fn validator_mut(&mut self, v: usize) -> Option<&mut Validator> {
        if v < self.n() && self.is_corrupted(v) {
            Some(&mut self.core.pop.validators[v])
        } else {
            None
        }
    }

    pub fn client_mut(&mut self, p: PartyId) -> Option<&mut Client> {
        let n = self.n();
        if p >= n && self.is_corrupted(p) {
            self.core.pop.clients.get_mut(p - n)
        } else {
            None
        }
    }

    /// Deletes a corrupted validator's record of the payment from `fid`.
    pub fn erase_evidence(&mut self, v: usize, fid: &Digest) -> bool {
        let ok = match self.validator_mut(v) {
            Some(val) => val.erase_evidence(fid),
            None => false,
        };
        self.core.action("erase_evidence", format!("validator {v} fund {}", fid.short()), ok);
        ok
    }

    pub fn sign(&self, p: PartyId, bytes: &[u8]) -> Option<Signature> {
        if !self.is_corrupted(p) {
            return None;
        }
        let n = self.n();
        Some(if p < n {
            self.core.pop.validators[p].key.sign(bytes)
        } else {
            self.core.pop.clients[p - n].key.sign(bytes)
        })
    }

    /// Sends `msg` as corrupted party `from`.
    pub fn inject(&mut self, from: PartyId, to: PartyId, msg: Message) -> bool {
        let ok = self.is_corrupted(from) && to < self.parties();
        self.core.action("inject", format!("{} from {from} to {to}", msg.kind()), ok);
        if ok {
            self.core.outbox.push((from, to, msg));
        }
        ok
    }

    /// Runs a corrupted client's own code (with its local limits lifted).
    pub fn act_as_client(&mut self, p: PartyId, f: impl FnOnce(&mut Client, &mut Env<'_>)) -> bool {
        if p < self.n() || !self.is_corrupted(p) {
            return false;
        }
        self.core.act(p, |party, env| {
            if let Party::Client(c) = party {
                f(c, env)
            }
        });
        true
    }

    pub fn act_as_validator(&mut self, v: usize, f: impl FnOnce(&mut Validator, &mut Env<'_>)) -> bool {
        if v >= self.n() || !self.is_corrupted(v) {
            return false;
        }
        self.core.act(v, |party, env| {
            if let Party::Validator(val) = party {
                f(val, env)
            }
        });
        true
    }

    pub fn schedule(&mut self, at: u64, tag: u64) {
        let at = at.max(self.core.now);
        self.core.enqueue(at, Pending::Timer(tag));
    }

    pub fn held(&self) -> Vec<u64> {
        self.core.held.iter().copied().collect()
    }

    /// Delivers a held message at `at` (not earlier than now).
    pub fn release(&mut self, msg: u64, at: u64) -> bool {
        let ok = self.core.held.remove(&msg);
        let at = at.max(self.core.now);
        self.core.action("release", format!("message {msg} at {at}"), ok);
        if ok {
            self.core.enqueue(at, Pending::Deliver(msg));
        }
        ok
    }
}
