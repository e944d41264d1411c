//! Secret-sharing information propagation.
//!
//! The client deals `n` Shamir shares with threshold `f + 1`, one per
//! validator, each bound to its recipient by `sign_c(s ‖ v ‖ N_prop)`. After
//! `n − f` acknowledgements it asks validators to reconstruct. Validators
//! exchange their shares, reconstruct from `f + 1` authenticated shares and
//! announce the result. A validator also adopts a value announced identically
//! by `f + 1` distinct validators, since one of them must be correct.
//! Participation ends after `n − f` distinct announcements.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::crypto::{
    hash, reconstruct_secret, secret_share, Digest, KeyDirectory, KeyPair, Nonce, PublicKey, Share, Signature,
};
use crate::ledger::{share_binding, Roster};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PropagateMsg {
    Share {
        nprop: Nonce,
        #[serde(with = "crate::crypto::hex_bytes")]
        share: Vec<u8>,
        sig: Signature,
    },
    ShareAck {
        nprop: Nonce,
    },
    Reconstruct {
        nprop: Nonce,
    },
    Forward {
        client: PublicKey,
        #[serde(with = "crate::crypto::hex_bytes")]
        share: Vec<u8>,
        sig: Signature,
        nprop: Nonce,
    },
    Reconstructed {
        client: PublicKey,
        #[serde(with = "crate::crypto::hex_bytes")]
        message: Vec<u8>,
        nprop: Nonce,
    },
}

impl PropagateMsg {
    pub fn nprop(&self) -> &Nonce {
        match self {
            PropagateMsg::Share { nprop, .. }
            | PropagateMsg::ShareAck { nprop }
            | PropagateMsg::Reconstruct { nprop }
            | PropagateMsg::Forward { nprop, .. }
            | PropagateMsg::Reconstructed { nprop, .. } => nprop,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PropagateMsg::Share { .. } => "SHARE",
            PropagateMsg::ShareAck { .. } => "SHARE_ACK",
            PropagateMsg::Reconstruct { .. } => "RECONSTRUCT",
            PropagateMsg::Forward { .. } => "FORWARD",
            PropagateMsg::Reconstructed { .. } => "RECONSTRUCTED",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Sharing,
    Reconstructing,
    Done,
}

/// Destination of an outgoing propagate message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dest {
    Party(PublicKey),
    AllValidators,
}

#[derive(Debug, Clone)]
pub struct PropagateClient {
    pub message: Vec<u8>,
    pub nprop: Nonce,
    pub acks: BTreeSet<PublicKey>,
    pub reconstructed: BTreeSet<PublicKey>,
    pub phase: Phase,
    n: usize,
    f: usize,
}

#[derive(Debug, Default)]
pub struct ClientStep {
    pub out: Vec<(Dest, PropagateMsg)>,
    pub started_reconstruct: bool,
    pub completed: bool,
}

impl PropagateClient {
    /// Deals the shares. Returns the state and one SHARE per validator.
    pub fn start<R: RngCore + ?Sized>(
        message: Vec<u8>,
        nprop: Nonce,
        key: &KeyPair,
        roster: &Roster,
        f: usize,
        rng: &mut R,
    ) -> (Self, Vec<(PublicKey, PropagateMsg)>) {
        let n = roster.len();
        let set = secret_share(&message, n, f + 1, rng).expect("f < n");
        let out = roster
            .iter()
            .zip(set.shares)
            .map(|(v, s)| {
                let share = s.to_bytes();
                let sig = key.sign(&share_binding(&share, v, &nprop));
                (*v, PropagateMsg::Share { nprop: nprop.clone(), share, sig })
            })
            .collect();
        let st = PropagateClient {
            message,
            nprop,
            acks: BTreeSet::new(),
            reconstructed: BTreeSet::new(),
            phase: Phase::Sharing,
            n,
            f,
        };
        (st, out)
    }

    pub fn on_message(&mut self, from: PublicKey, msg: &PropagateMsg, roster: &Roster) -> ClientStep {
        let mut step = ClientStep::default();
        if msg.nprop() != &self.nprop || !roster.contains(&from) {
            return step;
        }
        let quorum = self.n - self.f;
        match msg {
            PropagateMsg::ShareAck { .. } => {
                self.acks.insert(from);
                if self.phase == Phase::Sharing && self.acks.len() >= quorum {
                    self.phase = Phase::Reconstructing;
                    step.started_reconstruct = true;
                    step.out.push((Dest::AllValidators, PropagateMsg::Reconstruct { nprop: self.nprop.clone() }));
                }
            }
            PropagateMsg::Reconstructed { message, .. } if *message == self.message => {
                self.reconstructed.insert(from);
                if self.phase == Phase::Reconstructing && self.reconstructed.len() >= quorum {
                    self.phase = Phase::Done;
                    step.completed = true;
                }
            }
            _ => {}
        }
        step
    }
}

#[derive(Debug, Clone, Default)]
pub struct Instance {
    /// This validator's own share and its binding signature.
    pub own: Option<(Vec<u8>, Signature)>,
    pub reconstruct_requested: bool,
    pub forwarded_own: bool,
    /// Authenticated shares by evaluation index.
    pub shares: BTreeMap<u32, Share>,
    pub forwarders: BTreeSet<PublicKey>,
    pub message: Option<Vec<u8>>,
    pub announced: BTreeMap<PublicKey, Digest>,
    announced_values: HashMap<Digest, Vec<u8>>,
}

/// A value this validator has come to hold for an instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Learned {
    pub client: PublicKey,
    pub nprop: Nonce,
    pub message: Vec<u8>,
    pub adopted: bool,
}

#[derive(Debug, Default)]
pub struct ServerStep {
    pub out: Vec<(Dest, PropagateMsg)>,
    pub learned: Option<Learned>,
    pub terminated: bool,
}

/// Validator side: every instance this validator takes part in.
#[derive(Debug, Clone, Default)]
pub struct PropagateServer {
    pub instances: HashMap<(PublicKey, Nonce), Instance>,
    pub finished: HashSet<(PublicKey, Nonce)>,
}

pub struct ServerCtx<'a> {
    pub me: PublicKey,
    pub dir: &'a KeyDirectory,
    pub roster: &'a Roster,
    pub f: usize,
}

impl PropagateServer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn on_message(&mut self, from: PublicKey, msg: &PropagateMsg, cx: &ServerCtx<'_>) -> ServerStep {
        let mut step = ServerStep::default();
        let key = match msg {
            PropagateMsg::Share { nprop, .. } | PropagateMsg::Reconstruct { nprop } => (from, nprop.clone()),
            PropagateMsg::Forward { client, nprop, .. } | PropagateMsg::Reconstructed { client, nprop, .. } => {
                if !cx.roster.contains(&from) {
                    return step;
                }
                (*client, nprop.clone())
            }
            PropagateMsg::ShareAck { .. } => return step,
        };
        if self.finished.contains(&key) {
            return step;
        }
        let inst = self.instances.entry(key.clone()).or_default();
        match msg {
            PropagateMsg::Share { nprop, share, sig } => {
                if !cx.dir.verify(&from, &share_binding(share, &cx.me, nprop), sig) {
                    return step;
                }
                if inst.own.is_none() {
                    inst.own = Some((share.clone(), *sig));
                }
                step.out.push((Dest::Party(from), PropagateMsg::ShareAck { nprop: nprop.clone() }));
                if inst.reconstruct_requested {
                    forward_own(inst, &key, &mut step);
                }
            }
            PropagateMsg::Reconstruct { .. } => {
                inst.reconstruct_requested = true;
                forward_own(inst, &key, &mut step);
            }
            PropagateMsg::Forward { client, share, sig, nprop } => {
                // once the value is held, later shares change nothing
                if inst.message.is_some()
                    || inst.forwarders.contains(&from)
                    || !cx.dir.verify(client, &share_binding(share, &from, nprop), sig)
                {
                    return step;
                }
                let Ok(parsed) = Share::from_bytes(share) else { return step };
                inst.forwarders.insert(from);
                inst.shares.entry(parsed.index).or_insert(parsed);
                if inst.message.is_none() && inst.shares.len() > cx.f {
                    let shares: Vec<Share> = inst.shares.values().cloned().collect();
                    if let Ok(message) = reconstruct_secret(&shares, cx.f + 1) {
                        announce(inst, &key, message, false, &mut step);
                    }
                }
            }
            PropagateMsg::Reconstructed { message, .. } => {
                if inst.announced.contains_key(&from) {
                    return step;
                }
                let seen = inst.announced_values.iter().find(|(_, v)| *v == message).map(|(d, _)| *d);
                let d = seen.unwrap_or_else(|| hash(message));
                inst.announced.insert(from, d);
                inst.announced_values.entry(d).or_insert_with(|| message.clone());
                if inst.message.is_none() && inst.announced.values().filter(|x| **x == d).count() > cx.f {
                    announce(inst, &key, message.clone(), true, &mut step);
                }
                if inst.announced.len() >= cx.roster.len() - cx.f {
                    self.instances.remove(&key);
                    self.finished.insert(key);
                    step.terminated = true;
                }
            }
            PropagateMsg::ShareAck { .. } => {}
        }
        step
    }

    /// Value held for an instance, if any.
    pub fn message(&self, client: &PublicKey, nprop: &Nonce) -> Option<&[u8]> {
        self.instances.get(&(*client, nprop.clone())).and_then(|i| i.message.as_deref())
    }
}

fn forward_own(inst: &mut Instance, key: &(PublicKey, Nonce), step: &mut ServerStep) {
    if inst.forwarded_own {
        return;
    }
    if let Some((share, sig)) = &inst.own {
        inst.forwarded_own = true;
        step.out.push((
            Dest::AllValidators,
            PropagateMsg::Forward { client: key.0, share: share.clone(), sig: *sig, nprop: key.1.clone() },
        ));
    }
}

fn announce(inst: &mut Instance, key: &(PublicKey, Nonce), message: Vec<u8>, adopted: bool, step: &mut ServerStep) {
    inst.message = Some(message.clone());
    let m = PropagateMsg::Reconstructed { client: key.0, message: message.clone(), nprop: key.1.clone() };
    step.out.push((Dest::Party(key.0), m.clone()));
    step.out.push((Dest::AllValidators, m));
    step.learned = Some(Learned { client: key.0, nprop: key.1.clone(), message, adopted });
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::VecDeque;

    struct World {
        dir: KeyDirectory,
        roster: Roster,
        validators: Vec<KeyPair>,
        servers: Vec<PropagateServer>,
        client: KeyPair,
        f: usize,
    }

    fn world(n: usize, f: usize) -> World {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let validators: Vec<KeyPair> = (0..n).map(|_| KeyPair::generate(&mut rng)).collect();
        let client = KeyPair::generate(&mut rng);
        let mut dir = KeyDirectory::new();
        for k in validators.iter().chain([&client]) {
            dir.register(k);
        }
        let roster = Roster::new(validators.iter().map(|k| k.public()).collect());
        World { dir, roster, servers: vec![PropagateServer::new(); n], validators, client, f }
    }

    /// FIFO delivery; `silent` validators drop everything they receive.
    fn run(w: &mut World, message: &[u8], silent: &[usize]) -> (PropagateClient, Vec<Option<Vec<u8>>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let nprop = Nonce::draw(&mut rng, 128);
        let (mut client, shares) =
            PropagateClient::start(message.to_vec(), nprop.clone(), &w.client, &w.roster, w.f, &mut rng);
        let cpk = w.client.public();
        let mut q: VecDeque<(PublicKey, PublicKey, PropagateMsg)> =
            shares.into_iter().map(|(v, m)| (cpk, v, m)).collect();
        let mut held: Vec<Option<Vec<u8>>> = vec![None; w.validators.len()];
        let expand = |from: PublicKey, out: Vec<(Dest, PropagateMsg)>, roster: &Roster, q: &mut VecDeque<_>| {
            for (d, m) in out {
                match d {
                    Dest::Party(p) => q.push_back((from, p, m)),
                    Dest::AllValidators => roster.iter().for_each(|v| q.push_back((from, *v, m.clone()))),
                }
            }
        };
        while let Some((from, to, msg)) = q.pop_front() {
            if to == cpk {
                let step = client.on_message(from, &msg, &w.roster);
                expand(cpk, step.out, &w.roster, &mut q);
                continue;
            }
            let i = w.roster.index_of(&to).unwrap();
            if silent.contains(&i) {
                continue;
            }
            let cx = ServerCtx { me: to, dir: &w.dir, roster: &w.roster, f: w.f };
            let step = w.servers[i].on_message(from, &msg, &cx);
            if let Some(l) = step.learned {
                held[i] = Some(l.message);
            }
            expand(to, step.out, &w.roster, &mut q);
        }
        (client, held)
    }

    #[test]
    fn failure_free_delivers_everywhere() {
        let mut w = world(7, 0);
        let (c, held) = run(&mut w, b"pay me", &[]);
        assert_eq!(c.phase, Phase::Done);
        assert!(held.iter().all(|h| h.as_deref() == Some(&b"pay me"[..])));
        assert!(w.servers.iter().all(|s| s.instances.is_empty() && s.finished.len() == 1));
    }

    #[test]
    fn silent_validators_do_not_block() {
        let mut w = world(10, 3);
        let (c, held) = run(&mut w, b"settle", &[0, 4, 9]);
        assert_eq!(c.phase, Phase::Done);
        let ok = held.iter().filter(|h| h.as_deref() == Some(&b"settle"[..])).count();
        assert!(ok >= 10 - 2 * 3);
    }

    #[test]
    fn forged_forwards_are_ignored() {
        let w = world(10, 3);
        let mut server = PropagateServer::new();
        let cx = ServerCtx { me: w.validators[0].public(), dir: &w.dir, roster: &w.roster, f: 3 };
        let nprop = Nonce(vec![1; 16]);
        for v in &w.validators[1..5] {
            let share = Share { index: 1, len: 1, values: vec![5] }.to_bytes();
            // signed by the forwarder, not the client
            let sig = v.sign(&share_binding(&share, &v.public(), &nprop));
            let m = PropagateMsg::Forward { client: w.client.public(), share, sig, nprop: nprop.clone() };
            let step = server.on_message(v.public(), &m, &cx);
            assert!(step.learned.is_none() && step.out.is_empty());
        }
    }

    #[test]
    fn duplicate_forwarder_counts_once() {
        let w = world(10, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let nprop = Nonce(vec![2; 16]);
        let (_, shares) = PropagateClient::start(b"x".to_vec(), nprop.clone(), &w.client, &w.roster, 3, &mut rng);
        let mut server = PropagateServer::new();
        let cx = ServerCtx { me: w.validators[0].public(), dir: &w.dir, roster: &w.roster, f: 3 };
        let (v1, PropagateMsg::Share { share, sig, .. }) = &shares[1] else { panic!() };
        let fwd =
            PropagateMsg::Forward { client: w.client.public(), share: share.clone(), sig: *sig, nprop: nprop.clone() };
        for _ in 0..5 {
            assert!(server.on_message(*v1, &fwd, &cx).learned.is_none());
        }
        assert_eq!(server.instances.values().next().unwrap().shares.len(), 1);
    }

    #[test]
    fn corrupt_dealer_inconsistent_shares() {
        let mut w = world(7, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let nprop = Nonce(vec![3; 16]);
        let (_, a) = PropagateClient::start(b"alpha".to_vec(), nprop.clone(), &w.client, &w.roster, 2, &mut rng);
        let (_, b) =
            PropagateClient::start(b"omega, different".to_vec(), nprop.clone(), &w.client, &w.roster, 2, &mut rng);
        let cpk = w.client.public();
        // validators 0..3 get shares of one value, the rest of the other
        let mut q: VecDeque<(PublicKey, PublicKey, PropagateMsg)> =
            a.into_iter().take(3).chain(b.into_iter().skip(3)).map(|(v, m)| (cpk, v, m)).collect();
        for v in w.roster.iter() {
            q.push_back((cpk, *v, PropagateMsg::Reconstruct { nprop: nprop.clone() }));
        }
        let mut steps = 0;
        while let Some((from, to, msg)) = q.pop_front() {
            steps += 1;
            assert!(steps < 10_000);
            let Some(i) = w.roster.index_of(&to) else { continue };
            let cx = ServerCtx { me: to, dir: &w.dir, roster: &w.roster, f: 2 };
            let step = w.servers[i].on_message(from, &msg, &cx);
            for (d, m) in step.out {
                match d {
                    Dest::Party(p) => q.push_back((to, p, m)),
                    Dest::AllValidators => w.roster.iter().for_each(|v| q.push_back((to, *v, m.clone()))),
                }
            }
        }
        // every validator reconstructed something and the run drained
        assert!(w.servers.iter().all(|s| s.finished.len() == 1 || s.instances.values().all(|i| i.message.is_some())));
    }
}
