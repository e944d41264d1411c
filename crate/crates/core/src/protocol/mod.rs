//! Buyer, seller and validator state machines for partial spending and for
//! seller and buyer settlement.
//!
//! Every role consumes one message at a time through an [`Env`] that collects
//! outgoing messages and trace events; nothing here knows about scheduling.

mod client;
mod validator;

use std::collections::HashMap;

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::crypto::{hash, Digest, KeyDirectory, KeyPair, Nonce, PublicKey, Signature};
use crate::ledger::{DecodeError, Decoder, Encoder, Fund, FundHeader, Roster, TransactionId, Validation, Witness};
use crate::params::{ParamsError, QuorumParams};
use crate::propagate::{Dest, PropagateMsg};

pub use client::{BuyerPhase, Client, SaleState, SellerPhase};
pub use validator::Validator;

pub type PartyId = usize;

/// Run-wide read-only context.
#[derive(Debug, Clone)]
pub struct Shared {
    pub params: QuorumParams,
    pub k2_prime: usize,
    pub roster: Roster,
    pub dir: KeyDirectory,
    /// Public key of every party, validators first.
    pub pks: Vec<PublicKey>,
    pub ids: HashMap<PublicKey, PartyId>,
    pub nonce_bits: usize,
}

impl Shared {
    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn f(&self) -> usize {
        self.params.f
    }

    pub fn id(&self, pk: &PublicKey) -> Option<PartyId> {
        self.ids.get(pk).copied()
    }

    pub fn is_validator(&self, p: PartyId) -> bool {
        p < self.params.n
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Message {
    Pay { tid: TransactionId },
    Quorum { tid: TransactionId, h_s: Digest, commitments: Vec<Digest> },
    SignedQuorum { tid_key: Digest, h_s: Digest, sigs: Vec<Signature> },
    ValidationRequest { tid: TransactionId, h_s: Digest, sigma: Signature, blinding: Nonce },
    Valid { tid_key: Digest, h_s: Digest, sig: Signature },
    Invalid { tid_key: Digest, h_s: Digest },
    Propagate(PropagateMsg),
    Settle { fund: Fund },
    SettleValid { nsettle: Nonce, fund: FundHeader, sig: Signature },
    BuyerSettleReply { source: Digest, fund: FundHeader, sig: Signature },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Pay { .. } => "PAY",
            Message::Quorum { .. } => "QUORUM",
            Message::SignedQuorum { .. } => "SIGNED_QUORUM",
            Message::ValidationRequest { .. } => "VALIDATION_REQUEST",
            Message::Valid { .. } => "VALID",
            Message::Invalid { .. } => "INVALID",
            Message::Propagate(p) => p.kind(),
            Message::Settle { .. } => "SETTLE",
            Message::SettleValid { .. } => "SETTLE_VALID",
            Message::BuyerSettleReply { .. } => "BUYER_SETTLE_REPLY",
        }
    }

    /// Transaction the message belongs to, for payment-phase traffic.
    pub fn payment_tid(&self) -> Option<Digest> {
        match self {
            Message::ValidationRequest { tid, .. } => Some(tid.key()),
            Message::Valid { tid_key, .. } | Message::Invalid { tid_key, .. } => Some(*tid_key),
            _ => None,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("message serializes")
    }
}

/// Everything a handler may do: send, emit trace events, draw randomness.
pub struct Env<'a> {
    pub me: PartyId,
    pub now: u64,
    /// The adversary controls this party; local self-restrictions are lifted.
    pub corrupted: bool,
    pub shared: &'a Shared,
    pub rng: &'a mut ChaCha8Rng,
    pub out: Vec<(PartyId, Message)>,
    pub events: Vec<ProtocolEvent>,
}

impl<'a> Env<'a> {
    pub fn new(me: PartyId, now: u64, corrupted: bool, shared: &'a Shared, rng: &'a mut ChaCha8Rng) -> Self {
        Env { me, now, corrupted, shared, rng, out: Vec::new(), events: Vec::new() }
    }

    pub fn send(&mut self, to: PartyId, msg: Message) {
        self.out.push((to, msg));
    }

    pub fn send_pk(&mut self, to: &PublicKey, msg: Message) {
        if let Some(id) = self.shared.id(to) {
            self.out.push((id, msg));
        }
    }

    pub fn broadcast(&mut self, msg: Message) {
        for v in 0..self.shared.n() {
            self.out.push((v, msg.clone()));
        }
    }

    pub fn route(&mut self, out: Vec<(Dest, PropagateMsg)>) {
        for (d, m) in out {
            match d {
                Dest::Party(pk) => self.send_pk(&pk, Message::Propagate(m)),
                Dest::AllValidators => self.broadcast(Message::Propagate(m)),
            }
        }
    }

    pub fn emit(&mut self, ev: ProtocolEvent) {
        self.events.push(ev);
    }

    pub fn nonce(&mut self) -> Nonce {
        Nonce::draw(self.rng, self.shared.nonce_bits)
    }
}

/// Validator's record of a validated payment: `(tid, h_s, σ, N)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentEvidence {
    pub tid: TransactionId,
    pub h_s: Digest,
    pub sigma: Signature,
    pub blinding: Nonce,
}

/// Payload a seller propagates to settle a payment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SellerSettleRequest {
    pub tid: TransactionId,
    pub n_s: Nonce,
    pub witnesses: Vec<Witness>,
}

impl SellerSettleRequest {
    pub const TAG: &'static str = "SETTLEREQ";

    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::new(Self::TAG);
        self.tid.write(&mut e);
        e.put_bytes(self.n_s.as_bytes()).put_count(self.witnesses.len());
        for w in &self.witnesses {
            e.put_bytes(w.validator.as_bytes()).put_bytes(w.sig.as_bytes());
        }
        e.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut d = Decoder::new(bytes, Self::TAG)?;
        let tid = TransactionId::read(&mut d)?;
        let n_s = Nonce(d.bytes()?.to_vec());
        let k = d.count()?;
        let mut witnesses = Vec::with_capacity(k.min(1024));
        for _ in 0..k {
            witnesses.push(Witness { validator: PublicKey(d.digest()?), sig: Signature(d.digest()?) });
        }
        d.finish()?;
        Ok(Self { tid, n_s, witnesses })
    }
}

/// Payload a validator propagates during buyer settlement: the payment it
/// validated from the fund, or none.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettleInfo {
    pub fund: FundHeader,
    pub origin: PublicKey,
    pub evidence: Option<PaymentEvidence>,
    pub sig: Signature,
}

impl SettleInfo {
    pub const TAG: &'static str = "SETTLEINFO";

    pub fn body(fund: &FundHeader, origin: &PublicKey, evidence: Option<&PaymentEvidence>) -> Vec<u8> {
        let mut e = Encoder::new("SETTLEINFO-BODY");
        write_info(&mut e, fund, origin, evidence);
        e.finish()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::new(Self::TAG);
        write_info(&mut e, &self.fund, &self.origin, self.evidence.as_ref());
        e.put_bytes(self.sig.as_bytes());
        e.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut d = Decoder::new(bytes, Self::TAG)?;
        let fund = FundHeader::decode(d.bytes()?)?;
        let origin = PublicKey(d.digest()?);
        let evidence = match d.count()? {
            0 => None,
            1 => {
                let tid = TransactionId::read(&mut d)?;
                let h_s = d.digest()?;
                let sigma = Signature(d.digest()?);
                let blinding = Nonce(d.bytes()?.to_vec());
                Some(PaymentEvidence { tid, h_s, sigma, blinding })
            }
            _ => return Err(DecodeError::Invalid("evidence count")),
        };
        let sig = Signature(d.digest()?);
        d.finish()?;
        Ok(Self { fund, origin, evidence, sig })
    }
}

fn write_info(e: &mut Encoder, fund: &FundHeader, origin: &PublicKey, evidence: Option<&PaymentEvidence>) {
    e.put_bytes(&fund.encode()).put_bytes(origin.as_bytes());
    match evidence {
        None => {
            e.put_count(0);
        }
        Some(ev) => {
            e.put_count(1);
            ev.tid.write(e);
            e.put_bytes(ev.h_s.as_bytes()).put_bytes(ev.sigma.as_bytes()).put_bytes(ev.blinding.as_bytes());
        }
    }
}

/// Decoded content of a propagated value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Propagated {
    SellerSettle(SellerSettleRequest),
    SettleInfo(SettleInfo),
    Opaque,
}

pub fn decode_propagated(bytes: &[u8]) -> Propagated {
    match Decoder::peek_tag(bytes) {
        Some(t) if t == SellerSettleRequest::TAG.as_bytes() => {
            SellerSettleRequest::decode(bytes).map(Propagated::SellerSettle).unwrap_or(Propagated::Opaque)
        }
        Some(t) if t == SettleInfo::TAG.as_bytes() => {
            SettleInfo::decode(bytes).map(Propagated::SettleInfo).unwrap_or(Propagated::Opaque)
        }
        _ => Propagated::Opaque,
    }
}

/// Protocol-level facts recorded in the trace. Checkers work from these alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ProtocolEvent {
    PaymentStarted {
        buyer: PartyId,
        seller: PartyId,
        fund: Digest,
        tid: Digest,
    },
    PaymentRejected {
        buyer: PartyId,
        fund: Digest,
        reason: String,
    },
    QuorumSelected {
        seller: PartyId,
        tid: Digest,
        h_s: Digest,
        quorum: Vec<usize>,
    },
    BuyerSigned {
        buyer: PartyId,
        tid: Digest,
        h_s: Digest,
        count: usize,
    },
    BuyerAborted {
        buyer: PartyId,
        tid: Digest,
        reason: String,
    },
    Validated {
        validator: PartyId,
        fund: Digest,
        tid: Digest,
        h_s: Digest,
    },
    Denied {
        validator: PartyId,
        fund: Digest,
        tid: Digest,
        h_s: Digest,
    },
    PaymentCertified {
        seller: PartyId,
        buyer: PartyId,
        fund: Digest,
        tid: Digest,
        h_s: Digest,
        payment_fund: Digest,
        amount: u64,
        witnesses: Vec<usize>,
    },
    PaymentFailed {
        seller: PartyId,
        fund: Digest,
        tid: Digest,
        h_s: Digest,
        witnesses: usize,
        replies: usize,
    },
    SellerSettleStarted {
        seller: PartyId,
        fund: Digest,
        tid: Digest,
        h_s: Digest,
        nsettle: Nonce,
    },
    SellerSettleSigned {
        validator: PartyId,
        seller: PartyId,
        source: Digest,
        tid: Digest,
        h_s: Digest,
        fund: FundHeader,
    },
    SellerSettled {
        seller: PartyId,
        source: Digest,
        tid: Digest,
        h_s: Digest,
        fund: FundHeader,
        signers: Vec<usize>,
    },
    BuyerSettleStarted {
        buyer: PartyId,
        fund: Digest,
    },
    SettleMarked {
        validator: PartyId,
        fund: Digest,
    },
    BuyerSettleFinalized {
        validator: PartyId,
        source: Digest,
        transactions: Vec<(Digest, Digest)>,
        fund: FundHeader,
    },
    SettlementAborted {
        validator: PartyId,
        source: Digest,
        transactions: usize,
    },
    BuyerSettled {
        buyer: PartyId,
        source: Digest,
        fund: FundHeader,
        signers: Vec<usize>,
    },
    PropagateStarted {
        client: PartyId,
        nprop: Nonce,
        message: Digest,
    },
    PropagateReconstructing {
        client: PartyId,
        nprop: Nonce,
    },
    PropagateCompleted {
        client: PartyId,
        nprop: Nonce,
    },
    PropagateLearned {
        validator: PartyId,
        client: PartyId,
        nprop: Nonce,
        message: Digest,
        adopted: bool,
    },
    PropagateTerminated {
        validator: PartyId,
        client: PartyId,
        nprop: Nonce,
    },
}

impl ProtocolEvent {
    pub fn name(&self) -> &'static str {
        match self {
            ProtocolEvent::PaymentStarted { .. } => "payment_started",
            ProtocolEvent::PaymentRejected { .. } => "payment_rejected",
            ProtocolEvent::QuorumSelected { .. } => "quorum_selected",
            ProtocolEvent::BuyerSigned { .. } => "buyer_signed",
            ProtocolEvent::BuyerAborted { .. } => "buyer_aborted",
            ProtocolEvent::Validated { .. } => "validated",
            ProtocolEvent::Denied { .. } => "denied",
            ProtocolEvent::PaymentCertified { .. } => "payment_certified",
            ProtocolEvent::PaymentFailed { .. } => "payment_failed",
            ProtocolEvent::SellerSettleStarted { .. } => "seller_settle_started",
            ProtocolEvent::SellerSettleSigned { .. } => "seller_settle_signed",
            ProtocolEvent::SellerSettled { .. } => "seller_settled",
            ProtocolEvent::BuyerSettleStarted { .. } => "buyer_settle_started",
            ProtocolEvent::SettleMarked { .. } => "settle_marked",
            ProtocolEvent::BuyerSettleFinalized { .. } => "buyer_settle_finalized",
            ProtocolEvent::SettlementAborted { .. } => "settlement_aborted",
            ProtocolEvent::BuyerSettled { .. } => "buyer_settled",
            ProtocolEvent::PropagateStarted { .. } => "propagate_started",
            ProtocolEvent::PropagateReconstructing { .. } => "propagate_reconstructing",
            ProtocolEvent::PropagateCompleted { .. } => "propagate_completed",
            ProtocolEvent::PropagateLearned { .. } => "propagate_learned",
            ProtocolEvent::PropagateTerminated { .. } => "propagate_terminated",
        }
    }
}

/// Keys, validators and clients for one run. Validators are parties
/// `0..n`, clients follow.
#[derive(Debug, Clone)]
pub struct Population {
    pub shared: Shared,
    pub validators: Vec<Validator>,
    pub clients: Vec<Client>,
    validator_keys: Vec<KeyPair>,
}

impl Population {
    pub fn new<R: RngCore + ?Sized>(
        params: QuorumParams,
        clients: usize,
        nonce_bits: usize,
        rng: &mut R,
    ) -> Result<Self, ParamsError> {
        params.validate()?;
        let k2_prime = params.k2_prime()?;
        let validator_keys: Vec<KeyPair> = (0..params.n).map(|_| KeyPair::generate(rng)).collect();
        let client_keys: Vec<KeyPair> = (0..clients).map(|_| KeyPair::generate(rng)).collect();
        let mut dir = KeyDirectory::new();
        for k in validator_keys.iter().chain(&client_keys) {
            dir.register(k);
        }
        let pks: Vec<PublicKey> = validator_keys.iter().chain(&client_keys).map(|k| k.public()).collect();
        let ids = pks.iter().enumerate().map(|(i, pk)| (*pk, i)).collect();
        let roster = Roster::new(validator_keys.iter().map(|k| k.public()).collect());
        let shared = Shared { params, k2_prime, roster, dir, pks, ids, nonce_bits };
        let validators = validator_keys.iter().enumerate().map(|(i, k)| Validator::new(k.clone(), i)).collect();
        let clients = client_keys.into_iter().enumerate().map(|(i, k)| Client::new(k, params.n + i)).collect();
        Ok(Population { shared, validators, clients, validator_keys })
    }

    /// A fully certified initial fund, signed by every validator, handed to
    /// its owner.
    pub fn genesis_fund(&mut self, label: &str, owner: PartyId, balance: u64) -> Fund {
        let n = self.shared.n();
        let header = FundHeader::new(hash(label.as_bytes()), balance, [self.shared.pks[owner]]);
        let enc = header.encode();
        let fcert =
            self.validator_keys.iter().map(|k| Validation { validator: k.public(), sigma: k.sign(&enc) }).collect();
        let fund = Fund { header, fcert };
        if owner >= n {
            self.clients[owner - n].add_fund(fund.clone());
        }
        fund
    }
}
