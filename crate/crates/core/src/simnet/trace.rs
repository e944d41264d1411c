//! Line-delimited JSON trace.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::crypto::Digest;
use crate::params::QuorumParams;
use crate::protocol::{PartyId, ProtocolEvent};

use super::knowledge::{Derivation, Fact};
use super::Intent;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientInfo {
    pub id: PartyId,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundInfo {
    pub name: String,
    pub fid: Digest,
    pub fbl: u64,
    pub owner: PartyId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EndStatus {
    Quiescent,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    Setup {
        seq: u64,
        params: QuorumParams,
        k2_prime: usize,
        clients: Vec<ClientInfo>,
        funds: Vec<FundInfo>,
        horizon: u64,
        step_cap: u64,
        traffic_hiding: bool,
        strategy: String,
        seed: u64,
    },
    Intent {
        seq: u64,
        time: u64,
        intent: Intent,
    },
    Send {
        seq: u64,
        time: u64,
        msg: u64,
        from: PartyId,
        to: PartyId,
        kind: String,
        size: usize,
        digest: Digest,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        instance: Option<String>,
        /// `None` while the adversary holds the message.
        deliver_at: Option<u64>,
    },
    Deliver {
        seq: u64,
        time: u64,
        msg: u64,
        from: PartyId,
        to: PartyId,
        kind: String,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        instance: Option<String>,
    },
    Corrupt {
        seq: u64,
        time: u64,
        party: PartyId,
        validator: bool,
    },
    AdversaryAction {
        seq: u64,
        time: u64,
        action: String,
        detail: String,
        accepted: bool,
    },
    Learn {
        seq: u64,
        time: u64,
        id: usize,
        fact: Fact,
        how: Derivation,
    },
    Event {
        seq: u64,
        time: u64,
        party: PartyId,
        corrupted: bool,
        #[serde(flatten)]
        event: ProtocolEvent,
    },
    End {
        seq: u64,
        time: u64,
        status: EndStatus,
        steps: u64,
    },
}

impl Record {
    pub fn seq(&self) -> u64 {
        match self {
            Record::Setup { seq, .. }
            | Record::Intent { seq, .. }
            | Record::Send { seq, .. }
            | Record::Deliver { seq, .. }
            | Record::Corrupt { seq, .. }
            | Record::AdversaryAction { seq, .. }
            | Record::Learn { seq, .. }
            | Record::Event { seq, .. }
            | Record::End { seq, .. } => *seq,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<Record>,
}

impl Trace {
    pub fn next_seq(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn push(&mut self, r: Record) {
        debug_assert_eq!(r.seq(), self.next_seq());
        self.records.push(r);
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, TraceError> {
        let mut records = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| TraceError { line: i + 1, message: e.to_string() })?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record =
                serde_json::from_str(&line).map_err(|e| TraceError { line: i + 1, message: e.to_string() })?;
            records.push(rec);
        }
        Ok(Trace { records })
    }

    /// SHA-256 over the JSON-lines form.
    pub fn digest(&self) -> Digest {
        let mut h = Sha256::new();
        for r in &self.records {
            h.update(serde_json::to_vec(r).expect("record serializes"));
            h.update(b"\n");
        }
        Digest(h.finalize().into())
    }

    pub fn end(&self) -> Option<EndStatus> {
        match self.records.last() {
            Some(Record::End { status, .. }) => Some(*status),
            _ => None,
        }
    }

    pub fn events(&self) -> impl Iterator<Item = (u64, PartyId, bool, &ProtocolEvent)> {
        self.records.iter().filter_map(|r| match r {
            Record::Event { seq, party, corrupted, event, .. } => Some((*seq, *party, *corrupted, event)),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("trace line {line}: {message}")]
pub struct TraceError {
    pub line: usize,
    pub message: String,
}
