//! What the adversary knows, with a derivation for every fact.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::crypto::{hash, reconstruct_secret, Digest, Nonce, PublicKey, Share};
use crate::ledger::{Roster, TransactionId};
use crate::propagate::PropagateMsg;
use crate::protocol::{decode_propagated, Client, Message, PartyId, Propagated, Validator};
use crate::selection::select_quorum;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "fact", rename_all = "snake_case")]
pub enum Fact {
    SigningKey {
        party: PartyId,
    },
    SellerNonce {
        seller: PartyId,
        tid: Digest,
        n_s: Nonce,
    },
    Quorum {
        tid: Digest,
        members: Vec<usize>,
    },
    QuorumMember {
        tid: Digest,
        validator: usize,
    },
    Share {
        client: PartyId,
        nprop: Nonce,
        index: u32,
    },
    Propagated {
        client: PartyId,
        nprop: Nonce,
        message: Digest,
    },
    /// Endpoints of a payment-phase message seen in cleartext metadata.
    Contact {
        seller: PartyId,
        validator: PartyId,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "via", rename_all = "snake_case")]
pub enum Derivation {
    /// Payload of a message delivered to (or sent by) a corrupted party.
    Observed {
        msg: u64,
    },
    Metadata {
        msg: u64,
    },
    Memory {
        party: PartyId,
    },
    /// Computed from earlier facts (by id).
    Derived {
        from: Vec<usize>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub id: usize,
    pub fact: Fact,
    pub how: Derivation,
}

/// Knowledge set. Facts are only ever added.
#[derive(Debug, Clone, Default)]
pub struct AdversaryView {
    entries: Vec<KnowledgeEntry>,
    index: HashMap<Fact, usize>,
    shares: BTreeMap<(PartyId, Nonce), BTreeMap<u32, (Share, usize)>>,
    known_messages: HashSet<(PartyId, Nonce)>,
    quorums: HashSet<Digest>,
    members: HashSet<(Digest, usize)>,
    fresh: Vec<usize>,
    dirty_shares: Vec<(PartyId, Nonce)>,
    new_messages: Vec<(usize, Vec<u8>)>,
    new_nonces: Vec<(usize, TransactionId, Nonce)>,
}

impl AdversaryView {
    pub fn entries(&self) -> &[KnowledgeEntry] {
        &self.entries
    }

    pub fn knows(&self, fact: &Fact) -> bool {
        self.index.contains_key(fact)
    }

    pub fn quorum_known(&self, tid: &Digest) -> bool {
        self.quorums.contains(tid)
    }

    pub fn knows_member(&self, tid: &Digest, validator: usize) -> bool {
        self.members.contains(&(*tid, validator))
    }

    pub fn knows_message(&self, client: PartyId, nprop: &Nonce) -> bool {
        self.known_messages.contains(&(client, nprop.clone()))
    }

    /// Entries added since the last call.
    pub fn take_fresh(&mut self) -> Vec<KnowledgeEntry> {
        std::mem::take(&mut self.fresh).into_iter().map(|i| self.entries[i].clone()).collect()
    }

    fn add(&mut self, fact: Fact, how: Derivation) -> Option<usize> {
        if self.index.contains_key(&fact) {
            return None;
        }
        let id = self.entries.len();
        match &fact {
            Fact::Quorum { tid, members } => {
                self.quorums.insert(*tid);
                self.members.extend(members.iter().map(|&v| (*tid, v)));
            }
            Fact::QuorumMember { tid, validator } => {
                self.members.insert((*tid, *validator));
            }
            _ => {}
        }
        self.index.insert(fact.clone(), id);
        self.entries.push(KnowledgeEntry { id, fact, how });
        self.fresh.push(id);
        Some(id)
    }

    fn id_of(&self, fact: &Fact) -> usize {
        self.index[fact]
    }

    fn add_share(&mut self, client: PartyId, nprop: &Nonce, share: Share, how: Derivation) {
        let fact = Fact::Share { client, nprop: nprop.clone(), index: share.index };
        let id = match self.add(fact.clone(), how) {
            Some(id) => id,
            None => self.id_of(&fact),
        };
        self.shares.entry((client, nprop.clone())).or_default().entry(share.index).or_insert((share, id));
        self.dirty_shares.push((client, nprop.clone()));
    }

    fn add_message(&mut self, client: PartyId, nprop: &Nonce, message: &[u8], how: Derivation) {
        self.known_messages.insert((client, nprop.clone()));
        let fact = Fact::Propagated { client, nprop: nprop.clone(), message: hash(message) };
        if let Some(id) = self.add(fact, how) {
            self.new_messages.push((id, message.to_vec()));
        }
    }

    fn add_nonce(&mut self, seller: PartyId, tid: &TransactionId, n_s: &Nonce, how: Derivation) {
        if let Some(id) = self.add(Fact::SellerNonce { seller, tid: tid.key(), n_s: n_s.clone() }, how) {
            self.new_nonces.push((id, tid.clone(), n_s.clone()));
        }
    }

    /// Payload of message `msg` from `from` to `to`, seen because an endpoint
    /// is corrupted.
    pub fn observe(&mut self, msg: u64, from: PartyId, to: PartyId, m: &Message, cx: &LearnCtx<'_>) {
        let how = Derivation::Observed { msg };
        match m {
            Message::Propagate(PropagateMsg::Share { nprop, share, .. }) => {
                if let Ok(s) = Share::from_bytes(share) {
                    self.add_share(from, nprop, s, how);
                }
            }
            Message::Propagate(PropagateMsg::Forward { client, share, nprop, .. }) => {
                if let (Some(c), Ok(s)) = (cx.party(client), Share::from_bytes(share)) {
                    self.add_share(c, nprop, s, how);
                }
            }
            Message::Propagate(PropagateMsg::Reconstructed { client, message, nprop }) => {
                if let Some(c) = cx.party(client) {
                    self.add_message(c, nprop, message, how);
                }
            }
            Message::ValidationRequest { tid, .. } if to < cx.n => {
                self.add(Fact::QuorumMember { tid: tid.key(), validator: to }, how);
            }
            _ => {}
        }
        self.close(cx);
    }

    pub fn observe_metadata(&mut self, msg: u64, from: PartyId, to: PartyId, m: &Message, n: usize) {
        if m.payment_tid().is_none() {
            return;
        }
        let (seller, validator) = if from < n { (to, from) } else { (from, to) };
        self.add(Fact::Contact { seller, validator }, Derivation::Metadata { msg });
    }

    pub fn dump_validator(&mut self, v: &Validator, cx: &LearnCtx<'_>) {
        let how = Derivation::Memory { party: v.index };
        self.add(Fact::SigningKey { party: v.index }, how.clone());
        let mut validated: Vec<_> = v.validated_transactions.iter().collect();
        validated.sort_by_key(|(fid, _)| **fid);
        for (_, ev) in validated {
            self.add(Fact::QuorumMember { tid: ev.tid.key(), validator: v.index }, how.clone());
        }
        let mut instances: Vec<_> = v.propagate.instances.iter().collect();
        instances.sort_by(|a, b| a.0.cmp(b.0));
        for ((client, nprop), inst) in instances {
            let Some(c) = cx.party(client) else { continue };
            if let Some((share, _)) = &inst.own {
                if let Ok(s) = Share::from_bytes(share) {
                    self.add_share(c, nprop, s, how.clone());
                }
            }
            for s in inst.shares.values() {
                self.add_share(c, nprop, s.clone(), how.clone());
            }
            if let Some(m) = &inst.message {
                self.add_message(c, nprop, m, how.clone());
            }
        }
        self.close(cx);
    }

    pub fn dump_client(&mut self, c: &Client, cx: &LearnCtx<'_>) {
        let how = Derivation::Memory { party: c.id };
        self.add(Fact::SigningKey { party: c.id }, how.clone());
        let mut sales: Vec<_> = c.sales.values().collect();
        sales.sort_by_key(|s| s.h_s);
        for s in sales {
            self.add_nonce(c.id, &s.tid, &s.n_s, how.clone());
        }
        for (nprop, message) in c.propagation_messages() {
            self.add_message(c.id, nprop, message, how.clone());
        }
        self.close(cx);
    }

    /// Applies derivation rules until nothing new follows.
    fn close(&mut self, cx: &LearnCtx<'_>) {
        loop {
            if let Some(key) = self.dirty_shares.pop() {
                // reconstruction from f + 1 shares
                if self.known_messages.contains(&key) {
                    continue;
                }
                let set = &self.shares[&key];
                if set.len() <= cx.f {
                    continue;
                }
                let shares: Vec<Share> = set.values().map(|(s, _)| s.clone()).collect();
                let from: Vec<usize> = set.values().take(cx.f + 1).map(|(_, id)| *id).collect();
                if let Ok(m) = reconstruct_secret(&shares, cx.f + 1) {
                    self.add_message(key.0, &key.1, &m, Derivation::Derived { from });
                }
            } else if let Some((src, bytes)) = self.new_messages.pop() {
                let Fact::Propagated { client, .. } = self.entries[src].fact else { continue };
                match decode_propagated(&bytes) {
                    // settlement requests reveal the seller's nonce
                    Propagated::SellerSettle(req) => {
                        self.add_nonce(client, &req.tid, &req.n_s, Derivation::Derived { from: vec![src] });
                    }
                    Propagated::SettleInfo(info) => {
                        if let (Some(ev), Some(v)) = (info.evidence, cx.roster.index_of(&info.origin)) {
                            self.add(
                                Fact::QuorumMember { tid: ev.tid.key(), validator: v },
                                Derivation::Derived { from: vec![src] },
                            );
                        }
                    }
                    Propagated::Opaque => {}
                }
            } else if let Some((id, tid, n_s)) = self.new_nonces.pop() {
                // a seller nonce determines the quorum
                let key = tid.key();
                if self.quorums.contains(&key) {
                    continue;
                }
                if let Ok(q) = select_quorum(&tid, &n_s, cx.n, cx.m) {
                    self.add(Fact::Quorum { tid: key, members: q.members }, Derivation::Derived { from: vec![id] });
                }
            } else {
                break;
            }
        }
    }
}

/// Lookups the derivation rules need.
pub struct LearnCtx<'a> {
    pub n: usize,
    pub m: usize,
    pub f: usize,
    pub roster: &'a Roster,
    pub ids: &'a HashMap<PublicKey, PartyId>,
}

impl LearnCtx<'_> {
    fn party(&self, pk: &PublicKey) -> Option<PartyId> {
        self.ids.get(pk).copied()
    }
}
