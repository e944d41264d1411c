//! Seller-driven random quorum selection.
//!
//! `h = H(T_s)`, then candidates `Server(H(h ‖ j))` for `j = 1, 2, …` until
//! `m` distinct validators are collected. `Server(d)` is the big-endian value
//! of `d` modulo `n`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{hash, hash_concat, Nonce};
use crate::ledger::TransactionId;

/// Iteration cap per member.
pub const ITERATIONS_PER_MEMBER: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelectionError {
    #[error("quorum size {m} exceeds validator count {n}")]
    TooLarge { m: usize, n: usize },
    #[error("iteration cap reached after collecting {found} of {m} members")]
    IterationCap { found: usize, m: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quorum {
    /// Server indices in selection order.
    pub members: Vec<usize>,
}

impl Quorum {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.contains(&i)
    }

    pub fn as_set(&self) -> BTreeSet<usize> {
        self.members.iter().copied().collect()
    }
}

/// Selects from a raw seed (`T_s`).
pub fn select_from_seed(seed: &[u8], n: usize, m: usize) -> Result<Quorum, SelectionError> {
    if m > n {
        return Err(SelectionError::TooLarge { m, n });
    }
    let h = hash(seed);
    let mut seen = vec![false; n];
    let mut members = Vec::with_capacity(m);
    let cap = ITERATIONS_PER_MEMBER * m.max(1);
    let mut j: u64 = 1;
    while members.len() < m {
        if j as usize > cap {
            return Err(SelectionError::IterationCap { found: members.len(), m });
        }
        let server = hash_concat(&[h.as_bytes(), &j.to_be_bytes()]).mod_n(n);
        if !seen[server] {
            seen[server] = true;
            members.push(server);
        }
        j += 1;
    }
    Ok(Quorum { members })
}

pub fn select_quorum(tid: &TransactionId, n_s: &Nonce, n: usize, m: usize) -> Result<Quorum, SelectionError> {
    select_from_seed(&tid.seller_id(n_s), n, m)
}

/// Set equality against the deterministic selection.
pub fn verify_quorum(tid: &TransactionId, n_s: &Nonce, n: usize, m: usize, claimed: &Quorum) -> bool {
    match select_quorum(tid, n_s, n, m) {
        Ok(q) => claimed.len() == m && q.as_set() == claimed.as_set(),
        Err(_) => false,
    }
}
