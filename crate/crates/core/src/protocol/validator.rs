use std::collections::{BTreeSet, HashMap, HashSet};

use crate::crypto::{hash, Digest, KeyPair, Nonce, PublicKey};
use crate::ledger::{
    buyer_settled_fund_id, is_fully_certified, payment_fund_id, seller_settled_fund, settled_balance,
    validator_commitment, Fund, FundHeader, TransactionId,
};
use crate::propagate::{PropagateClient, PropagateMsg, PropagateServer, ServerCtx};
use crate::selection::select_quorum;

use super::{
    decode_propagated, Env, Message, PartyId, PaymentEvidence, Propagated, ProtocolEvent, SellerSettleRequest,
    SettleInfo,
};

type TxRef = (Digest, Digest);

#[derive(Debug, Clone)]
struct BuyerSettlement {
    fund: Fund,
    finalized: bool,
}

#[derive(Debug, Clone)]
struct PendingSellerSettle {
    seller: PartyId,
    nsettle: Nonce,
    req: SellerSettleRequest,
}

#[derive(Debug, Clone)]
pub struct Validator {
    pub key: KeyPair,
    pub index: usize,
    pub validated_fund: HashSet<Digest>,
    /// At most one validated payment per fund.
    pub validated_transactions: HashMap<Digest, PaymentEvidence>,
    pub transactions: HashMap<Digest, BTreeSet<TxRef>>,
    pub settle: HashSet<Digest>,
    pub payments: HashMap<Digest, BTreeSet<TxRef>>,
    pub settle_validators: HashMap<Digest, BTreeSet<PublicKey>>,
    pub propagate: PropagateServer,
    clients: HashMap<Nonce, PropagateClient>,
    buyer_settlements: HashMap<Digest, BuyerSettlement>,
    pending_seller: HashMap<Digest, Vec<PendingSellerSettle>>,
    seller_signed: HashSet<(Digest, Digest)>,
}

enum SellerCheck {
    Ok,
    Guard,
    Reject,
}

impl Validator {
    pub fn new(key: KeyPair, index: usize) -> Self {
        Validator {
            key,
            index,
            validated_fund: HashSet::new(),
            validated_transactions: HashMap::new(),
            transactions: HashMap::new(),
            settle: HashSet::new(),
            payments: HashMap::new(),
            settle_validators: HashMap::new(),
            propagate: PropagateServer::new(),
            clients: HashMap::new(),
            buyer_settlements: HashMap::new(),
            pending_seller: HashMap::new(),
            seller_signed: HashSet::new(),
        }
    }

    pub fn public(&self) -> PublicKey {
        self.key.public()
    }

    /// Drops the record of a validated payment. Only reachable by the
    /// adversary through a corrupted validator's memory.
    pub fn erase_evidence(&mut self, fid: &Digest) -> bool {
        self.validated_transactions.remove(fid).is_some()
    }

    pub fn handle(&mut self, from: PartyId, msg: &Message, env: &mut Env<'_>) {
        let Some(&from_pk) = env.shared.pks.get(from) else { return };
        match msg {
            Message::ValidationRequest { tid, h_s, sigma, blinding } => {
                self.on_payment(from_pk, tid, h_s, sigma, blinding, env)
            }
            Message::Settle { fund } => self.on_buyer_settle(from_pk, fund, env),
            Message::Propagate(p) => self.on_propagate(from_pk, p, env),
            _ => {}
        }
    }

    fn on_payment(
        &mut self,
        seller: PublicKey,
        tid: &TransactionId,
        h_s: &Digest,
        sigma: &crate::crypto::Signature,
        blinding: &Nonce,
        env: &mut Env<'_>,
    ) {
        let fid = tid.fund.fid();
        let tid_key = tid.key();
        let me = self.public();
        // a retransmitted request for the payment already validated is answered again
        let repeat = self
            .validated_transactions
            .get(&fid)
            .is_some_and(|e| e.tid.key() == tid_key && e.h_s == *h_s && e.blinding == *blinding);
        let ok = repeat
            || (!self.settle.contains(&fid)
                && tid.fund.header.is_owner(&tid.buyer)
                && tid.seller == seller
                && !self.validated_fund.contains(&fid)
                && is_fully_certified(&tid.fund, env.shared.f(), &env.shared.dir, &env.shared.roster)
                && env.shared.dir.verify(
                    &tid.buyer,
                    &tid.approval_payload(h_s, &validator_commitment(&me, blinding)),
                    sigma,
                ));
        if ok {
            if !repeat {
                self.validated_fund.insert(fid);
                self.validated_transactions.insert(
                    fid,
                    PaymentEvidence { tid: tid.clone(), h_s: *h_s, sigma: *sigma, blinding: blinding.clone() },
                );
                env.emit(ProtocolEvent::Validated { validator: self.index, fund: fid, tid: tid_key, h_s: *h_s });
            }
            let sig = self.key.sign(&tid.witness_payload(h_s));
            env.send_pk(&seller, Message::Valid { tid_key, h_s: *h_s, sig });
        } else {
            env.emit(ProtocolEvent::Denied { validator: self.index, fund: fid, tid: tid_key, h_s: *h_s });
            env.send_pk(&seller, Message::Invalid { tid_key, h_s: *h_s });
        }
    }

    fn on_buyer_settle(&mut self, buyer: PublicKey, fund: &Fund, env: &mut Env<'_>) {
        let fid = fund.fid();
        if self.buyer_settlements.contains_key(&fid)
            || !fund.header.is_owner(&buyer)
            || !is_fully_certified(fund, env.shared.f(), &env.shared.dir, &env.shared.roster)
        {
            return;
        }
        self.settle.insert(fid);
        env.emit(ProtocolEvent::SettleMarked { validator: self.index, fund: fid });
        self.buyer_settlements.insert(fid, BuyerSettlement { fund: fund.clone(), finalized: false });

        let me = self.public();
        let evidence = self.validated_transactions.get(&fid).cloned();
        let sig = self.key.sign(&SettleInfo::body(&fund.header, &me, evidence.as_ref()));
        let info = SettleInfo { fund: fund.header.clone(), origin: me, evidence, sig };
        let bytes = info.encode();
        let nprop = env.nonce();
        let (client, shares) = PropagateClient::start(
            bytes.clone(),
            nprop.clone(),
            &self.key,
            &env.shared.roster,
            env.shared.f(),
            env.rng,
        );
        env.emit(ProtocolEvent::PropagateStarted { client: self.index, nprop: nprop.clone(), message: hash(&bytes) });
        self.clients.insert(nprop, client);
        for (v, m) in shares {
            env.send_pk(&v, Message::Propagate(m));
        }
        self.try_finalize(&fid, env);
    }

    fn on_propagate(&mut self, from: PublicKey, msg: &PropagateMsg, env: &mut Env<'_>) {
        let me = self.public();
        // this validator as a propagating client
        let own_instance = match msg {
            PropagateMsg::ShareAck { .. } => true,
            PropagateMsg::Reconstructed { client, .. } => *client == me,
            _ => false,
        };
        if own_instance {
            if let Some(c) = self.clients.get_mut(msg.nprop()) {
                let step = c.on_message(from, msg, &env.shared.roster);
                if step.started_reconstruct {
                    env.emit(ProtocolEvent::PropagateReconstructing { client: self.index, nprop: msg.nprop().clone() });
                }
                if step.completed {
                    env.emit(ProtocolEvent::PropagateCompleted { client: self.index, nprop: msg.nprop().clone() });
                }
                env.route(step.out);
            }
            if matches!(msg, PropagateMsg::ShareAck { .. }) {
                return;
            }
        }
        let cx = ServerCtx { me, dir: &env.shared.dir, roster: &env.shared.roster, f: env.shared.f() };
        let step = self.propagate.on_message(from, msg, &cx);
        env.route(step.out);
        if let Some(l) = step.learned {
            let client = env.shared.id(&l.client).unwrap_or(usize::MAX);
            env.emit(ProtocolEvent::PropagateLearned {
                validator: self.index,
                client,
                nprop: l.nprop.clone(),
                message: hash(&l.message),
                adopted: l.adopted,
            });
            self.on_learned(l.client, l.nprop, &l.message, env);
        }
        if step.terminated {
            if let PropagateMsg::Reconstructed { client, nprop, .. } = msg {
                let client = env.shared.id(client).unwrap_or(usize::MAX);
                env.emit(ProtocolEvent::PropagateTerminated { validator: self.index, client, nprop: nprop.clone() });
            }
        }
    }

    fn on_learned(&mut self, client: PublicKey, nprop: Nonce, message: &[u8], env: &mut Env<'_>) {
        match decode_propagated(message) {
            Propagated::SellerSettle(req) => {
                let Some(seller) = env.shared.id(&client) else { return };
                if req.tid.seller != client {
                    return;
                }
                self.on_seller_settle(seller, nprop, req, env);
            }
            Propagated::SettleInfo(info) => {
                if info.origin != client
                    || !env.shared.roster.contains(&client)
                    || !env.shared.dir.verify(
                        &client,
                        &SettleInfo::body(&info.fund, &info.origin, info.evidence.as_ref()),
                        &info.sig,
                    )
                {
                    return;
                }
                self.on_settle_info(info, env);
            }
            Propagated::Opaque => {}
        }
    }

    fn check_seller_settle(&self, req: &SellerSettleRequest, env: &Env<'_>) -> SellerCheck {
        let sh = env.shared;
        let p = &sh.params;
        let tid = &req.tid;
        if !is_fully_certified(&tid.fund, sh.f(), &sh.dir, &sh.roster) || !tid.fund.header.is_owner(&tid.buyer) {
            return SellerCheck::Reject;
        }
        let Ok(quorum) = select_quorum(tid, &req.n_s, p.n, p.m) else { return SellerCheck::Reject };
        let h_s = req.n_s.digest();
        let payload = tid.witness_payload(&h_s);
        let mut members = BTreeSet::new();
        for w in &req.witnesses {
            let Some(i) = sh.roster.index_of(&w.validator) else { return SellerCheck::Reject };
            if !quorum.contains(i) || !sh.dir.verify(&w.validator, &payload, &w.sig) {
                return SellerCheck::Reject;
            }
            members.insert(i);
        }
        if members.len() < p.witness_threshold() {
            return SellerCheck::Reject;
        }
        let fid = tid.fund.fid();
        let recorded = self.transactions.get(&fid).is_some_and(|t| t.contains(&(tid.key(), h_s)));
        if recorded || !self.settle.contains(&fid) {
            SellerCheck::Ok
        } else {
            SellerCheck::Guard
        }
    }

    fn on_seller_settle(&mut self, seller: PartyId, nsettle: Nonce, req: SellerSettleRequest, env: &mut Env<'_>) {
        match self.check_seller_settle(&req, env) {
            SellerCheck::Ok => self.sign_seller_settle(seller, nsettle, &req, env),
            SellerCheck::Guard => self
                .pending_seller
                .entry(req.tid.fund.fid())
                .or_default()
                .push(PendingSellerSettle { seller, nsettle, req }),
            SellerCheck::Reject => {}
        }
    }

    fn sign_seller_settle(&mut self, seller: PartyId, nsettle: Nonce, req: &SellerSettleRequest, env: &mut Env<'_>) {
        let tid = &req.tid;
        let fid = tid.fund.fid();
        let h_s = req.n_s.digest();
        let tx = (tid.key(), h_s);
        self.transactions.entry(fid).or_default().insert(tx);
        let header = seller_settled_fund(tid, &req.n_s, env.shared.k2_prime);
        let sig = self.key.sign(&header.encode());
        if self.seller_signed.insert((payment_fund_id(tid, &req.n_s), hash(nsettle.as_bytes()))) {
            env.emit(ProtocolEvent::SellerSettleSigned {
                validator: self.index,
                seller,
                source: fid,
                tid: tx.0,
                h_s,
                fund: header.clone(),
            });
        }
        env.send(seller, Message::SettleValid { nsettle, fund: header, sig });
    }

    fn on_settle_info(&mut self, info: SettleInfo, env: &mut Env<'_>) {
        let fid = info.fund.fid;
        self.settle_validators.entry(fid).or_default().insert(info.origin);
        if let Some(ev) = &info.evidence {
            let valid = ev.tid.fund.fid() == fid
                && info.fund.is_owner(&ev.tid.buyer)
                && env.shared.dir.verify(
                    &ev.tid.buyer,
                    &ev.tid.approval_payload(&ev.h_s, &validator_commitment(&info.origin, &ev.blinding)),
                    &ev.sigma,
                );
            if valid {
                self.payments.entry(fid).or_default().insert((ev.tid.key(), ev.h_s));
            }
        }
        self.try_finalize(&fid, env);
    }

    fn try_finalize(&mut self, fid: &Digest, env: &mut Env<'_>) {
        let n = env.shared.n();
        let f = env.shared.f();
        let heard = self.settle_validators.get(fid).map_or(0, |s| s.len());
        let Some(bs) = self.buyer_settlements.get_mut(fid) else { return };
        if bs.finalized || heard < n - f {
            return;
        }
        bs.finalized = true;
        let fund = bs.fund.clone();
        let payments = self.payments.get(fid).cloned().unwrap_or_default();
        let txs = self.transactions.entry(*fid).or_default();
        txs.extend(payments);
        let count = txs.len();
        if count > env.shared.params.k1 {
            env.emit(ProtocolEvent::SettlementAborted { validator: self.index, source: *fid, transactions: count });
        } else {
            let header = FundHeader::new(
                buyer_settled_fund_id(fid),
                settled_balance(fund.fbl(), count, env.shared.k2_prime),
                fund.header.owners.iter().copied(),
            );
            let sig = self.key.sign(&header.encode());
            env.emit(ProtocolEvent::BuyerSettleFinalized {
                validator: self.index,
                source: *fid,
                transactions: txs.iter().copied().collect(),
                fund: header.clone(),
            });
            for owner in &fund.header.owners {
                env.send_pk(owner, Message::BuyerSettleReply { source: *fid, fund: header.clone(), sig });
            }
        }
        // seller settlements held back by the settle guard
        for p in self.pending_seller.remove(fid).unwrap_or_default() {
            match self.check_seller_settle(&p.req, env) {
                SellerCheck::Ok => self.sign_seller_settle(p.seller, p.nsettle, &p.req, env),
                SellerCheck::Guard => self.pending_seller.entry(*fid).or_default().push(p),
                SellerCheck::Reject => {}
            }
        }
    }
}
