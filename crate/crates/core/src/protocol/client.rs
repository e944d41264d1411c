use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::crypto::{hash, Digest, KeyPair, Nonce, PublicKey, Signature};
use crate::ledger::{
    is_fully_certified, payment_fund_id, seller_settled_fund, validator_commitment, Fund, FundHeader,
    PaymentCertificate, TransactionId, Validation, Witness,
};
use crate::propagate::{PropagateClient, PropagateMsg};
use crate::selection::{select_quorum, Quorum};

use super::{Env, Message, PartyId, ProtocolEvent, SellerSettleRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BuyerPhase {
    AwaitingQuorum,
    Signed,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SellerPhase {
    AwaitingSignatures,
    AwaitingReplies,
    Certified,
    Failed,
}

#[derive(Debug, Clone)]
struct Buy {
    seller: PartyId,
    phase: BuyerPhase,
}

#[derive(Debug, Clone)]
pub struct SaleState {
    pub tid: TransactionId,
    pub buyer: PartyId,
    pub n_s: Nonce,
    pub quorum: Quorum,
    pub blindings: Vec<Nonce>,
    pub commitments: Vec<Digest>,
    pub h_s: Digest,
    pub replies: BTreeSet<PublicKey>,
    pub witnesses: Vec<Witness>,
    pub phase: SellerPhase,
}

#[derive(Debug, Clone)]
struct SellerSettle {
    cert: usize,
    expected: FundHeader,
    sigs: BTreeMap<PublicKey, Signature>,
    done: bool,
}

#[derive(Debug, Clone, Default)]
struct BuyerSettle {
    replies: BTreeMap<PublicKey, (FundHeader, Signature)>,
    done: bool,
}

/// A buyer and seller in one party.
#[derive(Debug, Clone)]
pub struct Client {
    pub key: KeyPair,
    pub id: PartyId,
    pub funds: HashMap<Digest, Fund>,
    buys: HashMap<Digest, Buy>,
    payments_per_fund: HashMap<Digest, usize>,
    pub sales: HashMap<Digest, SaleState>,
    pub certificates: Vec<PaymentCertificate>,
    settling: HashSet<usize>,
    settles: HashMap<Nonce, SellerSettle>,
    propagations: HashMap<Nonce, PropagateClient>,
    pub auto_settle: bool,
    buyer_settles: HashMap<Digest, BuyerSettle>,
    /// Fully certified funds obtained through settlement.
    pub settled_funds: Vec<Fund>,
}

impl Client {
    pub fn new(key: KeyPair, id: PartyId) -> Self {
        Client {
            key,
            id,
            funds: HashMap::new(),
            buys: HashMap::new(),
            payments_per_fund: HashMap::new(),
            sales: HashMap::new(),
            certificates: Vec::new(),
            settling: HashSet::new(),
            settles: HashMap::new(),
            propagations: HashMap::new(),
            auto_settle: false,
            buyer_settles: HashMap::new(),
            settled_funds: Vec::new(),
        }
    }

    pub fn public(&self) -> PublicKey {
        self.key.public()
    }

    pub fn add_fund(&mut self, fund: Fund) {
        self.funds.insert(fund.fid(), fund);
    }

    /// Values this client is propagating, ordered by nonce.
    pub fn propagation_messages(&self) -> Vec<(&Nonce, &[u8])> {
        let mut v: Vec<_> = self.propagations.iter().map(|(n, c)| (n, c.message.as_slice())).collect();
        v.sort_by(|a, b| a.0.cmp(b.0));
        v
    }

    /// Propagates an arbitrary value to the validators.
    pub fn propagate(&mut self, message: Vec<u8>, env: &mut Env<'_>) -> Nonce {
        let nprop = env.nonce();
        env.emit(ProtocolEvent::PropagateStarted { client: self.id, nprop: nprop.clone(), message: hash(&message) });
        let (client, shares) =
            PropagateClient::start(message, nprop.clone(), &self.key, &env.shared.roster, env.shared.f(), env.rng);
        for (v, m) in shares {
            env.send_pk(&v, Message::Propagate(m));
        }
        self.propagations.insert(nprop.clone(), client);
        nprop
    }

    pub fn propagation_phase(&self, nprop: &Nonce) -> Option<crate::propagate::Phase> {
        self.propagations.get(nprop).map(|c| c.phase)
    }

    pub fn buyer_phase(&self, tid_key: &Digest) -> Option<BuyerPhase> {
        self.buys.get(tid_key).map(|b| b.phase)
    }

    /// Starts a partial spend of `fid` to `seller`.
    pub fn pay(&mut self, fid: &Digest, seller: PartyId, env: &mut Env<'_>) {
        let me = self.public();
        let reject = |env: &mut Env<'_>, reason: &str| {
            env.emit(ProtocolEvent::PaymentRejected { buyer: env.me, fund: *fid, reason: reason.to_string() })
        };
        let Some(fund) = self.funds.get(fid) else { return reject(env, "unknown fund") };
        if !fund.header.is_owner(&me) {
            return reject(env, "not an owner");
        }
        if !is_fully_certified(fund, env.shared.f(), &env.shared.dir, &env.shared.roster) {
            return reject(env, "fund not fully certified");
        }
        let Some(&seller_pk) = env.shared.pks.get(seller) else { return reject(env, "unknown seller") };
        let count = self.payments_per_fund.get(fid).copied().unwrap_or(0);
        if count >= env.shared.params.k1 && !env.corrupted {
            return reject(env, "k1 payments already made from this fund");
        }
        let tid = TransactionId { fund: fund.clone(), buyer: me, seller: seller_pk };
        let key = tid.key();
        if self.buys.contains_key(&key) {
            return reject(env, "duplicate transaction");
        }
        *self.payments_per_fund.entry(*fid).or_default() += 1;
        self.buys.insert(key, Buy { seller, phase: BuyerPhase::AwaitingQuorum });
        env.emit(ProtocolEvent::PaymentStarted { buyer: self.id, seller, fund: *fid, tid: key });
        env.send(seller, Message::Pay { tid });
    }

    /// Settles every certificate held now and every one obtained later.
    pub fn seller_settle_all(&mut self, env: &mut Env<'_>) {
        self.auto_settle = true;
        for i in 0..self.certificates.len() {
            self.start_seller_settle(i, env);
        }
    }

    pub fn buyer_settle(&mut self, fid: &Digest, env: &mut Env<'_>) {
        let Some(fund) = self.funds.get(fid) else { return };
        if self.buyer_settles.contains_key(fid) {
            return;
        }
        self.buyer_settles.insert(*fid, BuyerSettle::default());
        env.emit(ProtocolEvent::BuyerSettleStarted { buyer: self.id, fund: *fid });
        env.broadcast(Message::Settle { fund: fund.clone() });
    }

    pub fn handle(&mut self, from: PartyId, msg: &Message, env: &mut Env<'_>) {
        let Some(&from_pk) = env.shared.pks.get(from) else { return };
        match msg {
            Message::Pay { tid } => self.on_pay(from, from_pk, tid, env),
            Message::Quorum { tid, h_s, commitments } => self.on_quorum(from, tid, h_s, commitments, env),
            Message::SignedQuorum { tid_key, h_s, sigs } => self.on_signed_quorum(from, tid_key, h_s, sigs, env),
            Message::Valid { tid_key, h_s, sig } => self.on_reply(from_pk, tid_key, h_s, Some(sig), env),
            Message::Invalid { tid_key, h_s } => self.on_reply(from_pk, tid_key, h_s, None, env),
            Message::Propagate(p) => self.on_propagate(from_pk, p, env),
            Message::SettleValid { nsettle, fund, sig } => self.on_settle_valid(from_pk, nsettle, fund, sig, env),
            Message::BuyerSettleReply { source, fund, sig } => {
                self.on_buyer_settle_reply(from_pk, source, fund, sig, env)
            }
            _ => {}
        }
    }

    fn on_pay(&mut self, buyer: PartyId, buyer_pk: PublicKey, tid: &TransactionId, env: &mut Env<'_>) {
        let n_s = env.nonce();
        self.sell_with_nonce(buyer, buyer_pk, tid, n_s, env);
    }

    /// Seller side of a PAY with a caller-chosen `N_s`. Honest sellers draw it
    /// fresh; a corrupted seller may grind for a convenient quorum.
    pub fn sell_with_nonce(
        &mut self,
        buyer: PartyId,
        buyer_pk: PublicKey,
        tid: &TransactionId,
        n_s: Nonce,
        env: &mut Env<'_>,
    ) {
        let me = self.public();
        let key = tid.key();
        if tid.seller != me || tid.buyer != buyer_pk || self.sales.contains_key(&key) {
            return;
        }
        let p = &env.shared.params;
        let Ok(quorum) = select_quorum(tid, &n_s, p.n, p.m) else { return };
        let blindings: Vec<Nonce> = (0..quorum.len()).map(|_| env.nonce()).collect();
        let commitments: Vec<Digest> = quorum
            .members
            .iter()
            .zip(&blindings)
            .map(|(&v, nb)| validator_commitment(&env.shared.roster.get(v), nb))
            .collect();
        let h_s = n_s.digest();
        env.emit(ProtocolEvent::QuorumSelected { seller: self.id, tid: key, h_s, quorum: quorum.members.clone() });
        env.send(buyer, Message::Quorum { tid: tid.clone(), h_s, commitments: commitments.clone() });
        self.sales.insert(
            key,
            SaleState {
                tid: tid.clone(),
                buyer,
                n_s,
                quorum,
                blindings,
                commitments,
                h_s,
                replies: BTreeSet::new(),
                witnesses: Vec::new(),
                phase: SellerPhase::AwaitingSignatures,
            },
        );
    }

    fn on_quorum(
        &mut self,
        seller: PartyId,
        tid: &TransactionId,
        h_s: &Digest,
        commitments: &[Digest],
        env: &mut Env<'_>,
    ) {
        let key = tid.key();
        let Some(buy) = self.buys.get_mut(&key) else { return };
        if buy.seller != seller || buy.phase != BuyerPhase::AwaitingQuorum {
            return;
        }
        if commitments.len() != env.shared.params.m {
            buy.phase = BuyerPhase::Aborted;
            env.emit(ProtocolEvent::BuyerAborted {
                buyer: self.id,
                tid: key,
                reason: format!("quorum of size {} instead of {}", commitments.len(), env.shared.params.m),
            });
            return;
        }
        buy.phase = BuyerPhase::Signed;
        let sigs: Vec<Signature> = commitments.iter().map(|c| self.key.sign(&tid.approval_payload(h_s, c))).collect();
        env.emit(ProtocolEvent::BuyerSigned { buyer: self.id, tid: key, h_s: *h_s, count: sigs.len() });
        env.send(seller, Message::SignedQuorum { tid_key: key, h_s: *h_s, sigs });
    }

    fn on_signed_quorum(
        &mut self,
        buyer: PartyId,
        tid_key: &Digest,
        h_s: &Digest,
        sigs: &[Signature],
        env: &mut Env<'_>,
    ) {
        let Some(sale) = self.sales.get_mut(tid_key) else { return };
        if sale.buyer != buyer || sale.h_s != *h_s || sale.phase != SellerPhase::AwaitingSignatures {
            return;
        }
        if sigs.len() != sale.commitments.len() {
            return;
        }
        let ok = sigs
            .iter()
            .zip(&sale.commitments)
            .all(|(s, c)| env.shared.dir.verify(&sale.tid.buyer, &sale.tid.approval_payload(h_s, c), s));
        if !ok {
            return;
        }
        sale.phase = SellerPhase::AwaitingReplies;
        for ((&v, sigma), blinding) in sale.quorum.members.iter().zip(sigs).zip(&sale.blindings) {
            env.send(
                v,
                Message::ValidationRequest {
                    tid: sale.tid.clone(),
                    h_s: *h_s,
                    sigma: *sigma,
                    blinding: blinding.clone(),
                },
            );
        }
    }

    fn on_reply(
        &mut self,
        from: PublicKey,
        tid_key: &Digest,
        h_s: &Digest,
        sig: Option<&Signature>,
        env: &mut Env<'_>,
    ) {
        let Some(sale) = self.sales.get_mut(tid_key) else { return };
        if sale.h_s != *h_s || sale.phase != SellerPhase::AwaitingReplies {
            return;
        }
        let Some(i) = env.shared.roster.index_of(&from) else { return };
        if !sale.quorum.contains(i) || sale.replies.contains(&from) {
            return;
        }
        if let Some(sig) = sig {
            if !env.shared.dir.verify(&from, &sale.tid.witness_payload(h_s), sig) {
                return;
            }
            sale.witnesses.push(Witness { validator: from, sig: *sig });
        }
        sale.replies.insert(from);
        let p = &env.shared.params;
        if sale.replies.len() < p.reply_threshold() {
            return;
        }
        let fid = sale.tid.fund.fid();
        if sale.witnesses.len() >= p.witness_threshold() {
            sale.phase = SellerPhase::Certified;
            let amount = sale.tid.fund.fbl() / env.shared.k2_prime as u64;
            let witnesses = sale.witnesses.iter().filter_map(|w| env.shared.roster.index_of(&w.validator)).collect();
            env.emit(ProtocolEvent::PaymentCertified {
                seller: self.id,
                buyer: sale.buyer,
                fund: fid,
                tid: *tid_key,
                h_s: *h_s,
                payment_fund: payment_fund_id(&sale.tid, &sale.n_s),
                amount,
                witnesses,
            });
            self.certificates.push(PaymentCertificate {
                tid: sale.tid.clone(),
                n_s: sale.n_s.clone(),
                h_s: *h_s,
                witnesses: sale.witnesses.clone(),
            });
            if self.auto_settle {
                self.start_seller_settle(self.certificates.len() - 1, env);
            }
        } else {
            sale.phase = SellerPhase::Failed;
            env.emit(ProtocolEvent::PaymentFailed {
                seller: self.id,
                fund: fid,
                tid: *tid_key,
                h_s: *h_s,
                witnesses: sale.witnesses.len(),
                replies: sale.replies.len(),
            });
        }
    }

    fn start_seller_settle(&mut self, cert: usize, env: &mut Env<'_>) {
        if !self.settling.insert(cert) {
            return;
        }
        let c = &self.certificates[cert];
        let req = SellerSettleRequest { tid: c.tid.clone(), n_s: c.n_s.clone(), witnesses: c.witnesses.clone() };
        let expected = seller_settled_fund(&c.tid, &c.n_s, env.shared.k2_prime);
        let bytes = req.encode();
        let nsettle = env.nonce();
        env.emit(ProtocolEvent::SellerSettleStarted {
            seller: self.id,
            fund: c.tid.fund.fid(),
            tid: c.tid.key(),
            h_s: c.h_s,
            nsettle: nsettle.clone(),
        });
        env.emit(ProtocolEvent::PropagateStarted { client: self.id, nprop: nsettle.clone(), message: hash(&bytes) });
        let (client, shares) =
            PropagateClient::start(bytes, nsettle.clone(), &self.key, &env.shared.roster, env.shared.f(), env.rng);
        for (v, m) in shares {
            env.send_pk(&v, Message::Propagate(m));
        }
        self.propagations.insert(nsettle.clone(), client);
        self.settles.insert(nsettle, SellerSettle { cert, expected, sigs: BTreeMap::new(), done: false });
    }

    fn on_propagate(&mut self, from: PublicKey, msg: &PropagateMsg, env: &mut Env<'_>) {
        let Some(c) = self.propagations.get_mut(msg.nprop()) else { return };
        let step = c.on_message(from, msg, &env.shared.roster);
        if step.started_reconstruct {
            env.emit(ProtocolEvent::PropagateReconstructing { client: self.id, nprop: msg.nprop().clone() });
        }
        if step.completed {
            env.emit(ProtocolEvent::PropagateCompleted { client: self.id, nprop: msg.nprop().clone() });
        }
        env.route(step.out);
    }

    fn on_settle_valid(
        &mut self,
        from: PublicKey,
        nsettle: &Nonce,
        fund: &FundHeader,
        sig: &Signature,
        env: &mut Env<'_>,
    ) {
        let Some(st) = self.settles.get_mut(nsettle) else { return };
        if st.done || *fund != st.expected || !env.shared.roster.contains(&from) {
            return;
        }
        if !env.shared.dir.verify(&from, &fund.encode(), sig) {
            return;
        }
        st.sigs.insert(from, *sig);
        if st.sigs.len() < env.shared.n() - env.shared.f() {
            return;
        }
        st.done = true;
        let c = &self.certificates[st.cert];
        let signers: Vec<usize> = st.sigs.keys().filter_map(|v| env.shared.roster.index_of(v)).collect();
        let settled = Fund {
            header: st.expected.clone(),
            fcert: st.sigs.iter().map(|(v, s)| Validation { validator: *v, sigma: *s }).collect(),
        };
        env.emit(ProtocolEvent::SellerSettled {
            seller: self.id,
            source: c.tid.fund.fid(),
            tid: c.tid.key(),
            h_s: c.h_s,
            fund: st.expected.clone(),
            signers,
        });
        self.settled_funds.push(settled);
    }

    fn on_buyer_settle_reply(
        &mut self,
        from: PublicKey,
        source: &Digest,
        fund: &FundHeader,
        sig: &Signature,
        env: &mut Env<'_>,
    ) {
        let Some(st) = self.buyer_settles.get_mut(source) else { return };
        if st.done || !env.shared.roster.contains(&from) || st.replies.contains_key(&from) {
            return;
        }
        if !env.shared.dir.verify(&from, &fund.encode(), sig) {
            return;
        }
        st.replies.insert(from, (fund.clone(), *sig));
        let need = env.shared.n() - 2 * env.shared.f();
        let matching: Vec<(&PublicKey, &Signature)> =
            st.replies.iter().filter(|(_, (h, _))| h == fund).map(|(v, (_, s))| (v, s)).collect();
        if matching.len() < need {
            return;
        }
        st.done = true;
        let settled = Fund {
            header: fund.clone(),
            fcert: matching.iter().map(|(v, s)| Validation { validator: **v, sigma: **s }).collect(),
        };
        let signers = matching.iter().filter_map(|(v, _)| env.shared.roster.index_of(v)).collect();
        env.emit(ProtocolEvent::BuyerSettled { buyer: self.id, source: *source, fund: fund.clone(), signers });
        self.settled_funds.push(settled);
    }
}
