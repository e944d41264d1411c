//! Funds, transaction identifiers, certificates and the canonical byte
//! encodings every signature and hash in the system is computed over.
//!
//! # Encoding (version 1)
//!
//! Every encoded structure starts with the version byte `0x01` followed by a
//! length-prefixed ASCII type tag. Fields follow in declaration order:
//! byte strings and nested encodings as `u32` big-endian length + bytes,
//! integers as `u64` big-endian, lists as a `u32` count + items.
//!
//! | structure            | tag          | fields                               |
//! |----------------------|--------------|--------------------------------------|
//! | fund `⟨F⟩`           | `FUND`       | fid, fbl, owners                     |
//! | tid                  | `TID`        | `⟨F⟩`, buyer, seller                 |
//! | `T_s`                | `TS`         | tid, `N_s`                           |
//! | payment fund id      | `PAYFUND`    | tid, `N_s`, `"PAY"`                  |
//! | seller-settled id    | `SETTLEFUND` | `Id₁`, `"SETTLE"`                    |
//! | witness response     | `VALID`      | tid, `h_s`                           |
//! | buyer approval       | `APPROVE`    | tid, `h_s`, `c_i`                    |
//! | share binding        | `SHARE`      | share bytes, validator, `N_prop`     |
//!
//! The buyer-settled fund id is `H(F.fid)` over the raw 32 digest bytes.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{hash, Digest, KeyDirectory, Nonce, PublicKey, Signature, DIGEST_LEN};

pub const ENCODING_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unexpected end of input")]
    Truncated,
    #[error("unsupported encoding version {0}")]
    Version(u8),
    #[error("expected tag {expected:?}, found {found:?}")]
    Tag { expected: String, found: String },
    #[error("invalid field: {0}")]
    Invalid(&'static str),
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new(tag: &str) -> Self {
        let mut e = Encoder { buf: vec![ENCODING_VERSION] };
        e.put_bytes(tag.as_bytes());
        e
    }

    pub fn put_bytes(&mut self, b: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(&(b.len() as u32).to_be_bytes());
        self.buf.extend_from_slice(b);
        self
    }

    pub fn put_u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn put_count(&mut self, n: usize) -> &mut Self {
        self.buf.extend_from_slice(&(n as u32).to_be_bytes());
        self
    }

    pub fn finish(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.buf)
    }
}

pub struct Decoder<'a> {
    rest: &'a [u8],
}

impl<'a> Decoder<'a> {
    pub fn new(bytes: &'a [u8], tag: &str) -> Result<Self, DecodeError> {
        let (&v, rest) = bytes.split_first().ok_or(DecodeError::Truncated)?;
        if v != ENCODING_VERSION {
            return Err(DecodeError::Version(v));
        }
        let mut d = Decoder { rest };
        let found = d.bytes()?;
        if found != tag.as_bytes() {
            return Err(DecodeError::Tag {
                expected: tag.to_string(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        Ok(d)
    }

    /// Peeks at the tag of an encoded structure without consuming it.
    pub fn peek_tag(bytes: &[u8]) -> Option<&[u8]> {
        let rest = bytes.get(1..)?;
        let len = u32::from_be_bytes(rest.get(..4)?.try_into().ok()?) as usize;
        rest.get(4..4 + len)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.rest.len() < n {
            return Err(DecodeError::Truncated);
        }
        let (a, b) = self.rest.split_at(n);
        self.rest = b;
        Ok(a)
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        let n = self.count()?;
        self.take(n)
    }

    pub fn count(&mut self) -> Result<usize, DecodeError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn digest(&mut self) -> Result<Digest, DecodeError> {
        let b = self.bytes()?;
        let arr: [u8; DIGEST_LEN] = b.try_into().map_err(|_| DecodeError::Invalid("digest length"))?;
        Ok(Digest(arr))
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        if self.rest.is_empty() {
            Ok(())
        } else {
            Err(DecodeError::Trailing(self.rest.len()))
        }
    }
}

/// The signed part of a fund: identifier, balance and owners.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FundHeader {
    pub fid: Digest,
    pub fbl: u64,
    /// Sorted, duplicate free.
    pub owners: Vec<PublicKey>,
}

impl FundHeader {
    pub fn new(fid: Digest, fbl: u64, owners: impl IntoIterator<Item = PublicKey>) -> Self {
        let owners: BTreeSet<PublicKey> = owners.into_iter().collect();
        Self { fid, fbl, owners: owners.into_iter().collect() }
    }

    pub fn is_owner(&self, pk: &PublicKey) -> bool {
        self.owners.binary_search(pk).is_ok()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::new("FUND");
        self.write(&mut e);
        e.finish()
    }

    fn write(&self, e: &mut Encoder) {
        e.put_bytes(self.fid.as_bytes()).put_u64(self.fbl).put_count(self.owners.len());
        for o in &self.owners {
            e.put_bytes(o.as_bytes());
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut d = Decoder::new(bytes, "FUND")?;
        let h = Self::read(&mut d)?;
        d.finish()?;
        Ok(h)
    }

    fn read(d: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let fid = d.digest()?;
        let fbl = d.u64()?;
        let k = d.count()?;
        let mut owners = Vec::with_capacity(k.min(64));
        for _ in 0..k {
            owners.push(PublicKey(d.digest()?));
        }
        Ok(Self::new(fid, fbl, owners))
    }
}

/// `(⟨F⟩, σ, pk_v)`; the fund encoding is the header it is attached to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Validation {
    pub validator: PublicKey,
    pub sigma: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fund {
    pub header: FundHeader,
    pub fcert: Vec<Validation>,
}

impl Fund {
    pub fn fid(&self) -> Digest {
        self.header.fid
    }

    pub fn fbl(&self) -> u64 {
        self.header.fbl
    }

    /// Number of distinct roster validators with a valid signature over `⟨F⟩`.
    pub fn valid_signers(&self, dir: &KeyDirectory, roster: &Roster) -> usize {
        let enc = self.header.encode();
        self.fcert
            .iter()
            .filter(|v| roster.contains(&v.validator) && dir.verify(&v.validator, &enc, &v.sigma))
            .map(|v| v.validator)
            .collect::<BTreeSet<_>>()
            .len()
    }
}

/// `true` iff at least `f + 1` distinct validators validly signed `⟨F⟩`.
pub fn is_fully_certified(fund: &Fund, f: usize, dir: &KeyDirectory, roster: &Roster) -> bool {
    fund.valid_signers(dir, roster) > f
}

/// The validator universe; position in the roster is the server index used
/// by quorum selection.
#[derive(Debug, Clone, Default)]
pub struct Roster {
    validators: Vec<PublicKey>,
    index: HashMap<PublicKey, usize>,
}

impl Roster {
    pub fn new(validators: Vec<PublicKey>) -> Self {
        let index = validators.iter().enumerate().map(|(i, pk)| (*pk, i)).collect();
        Self { validators, index }
    }

    pub fn len(&self) -> usize {
        self.validators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.validators.is_empty()
    }

    pub fn get(&self, i: usize) -> PublicKey {
        self.validators[i]
    }

    pub fn index_of(&self, pk: &PublicKey) -> Option<usize> {
        self.index.get(pk).copied()
    }

    pub fn contains(&self, pk: &PublicKey) -> bool {
        self.index.contains_key(pk)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PublicKey> {
        self.validators.iter()
    }
}

/// `⟨F, pk_b, pk_s⟩`. The fund travels with its certificate so validators can
/// check it, but only the header enters the encoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionId {
    pub fund: Fund,
    pub buyer: PublicKey,
    pub seller: PublicKey,
}

impl TransactionId {
    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::new("TID");
        e.put_bytes(&self.fund.header.encode()).put_bytes(self.buyer.as_bytes()).put_bytes(self.seller.as_bytes());
        e.finish()
    }

    pub fn key(&self) -> Digest {
        hash(&self.encode())
    }

    /// `T_s = tid ‖ N_s`, the quorum-selection seed.
    pub fn seller_id(&self, n_s: &Nonce) -> Vec<u8> {
        let mut e = Encoder::new("TS");
        e.put_bytes(&self.encode()).put_bytes(n_s.as_bytes());
        e.finish()
    }

    /// Bytes a validator signs in a `VALID` response: `tid ‖ h_s`.
    pub fn witness_payload(&self, h_s: &Digest) -> Vec<u8> {
        let mut e = Encoder::new("VALID");
        e.put_bytes(&self.encode()).put_bytes(h_s.as_bytes());
        e.finish()
    }

    /// Bytes the buyer signs to approve one commitment: `tid ‖ h_s ‖ c_i`.
    pub fn approval_payload(&self, h_s: &Digest, commitment: &Digest) -> Vec<u8> {
        let mut e = Encoder::new("APPROVE");
        e.put_bytes(&self.encode()).put_bytes(h_s.as_bytes()).put_bytes(commitment.as_bytes());
        e.finish()
    }

    pub fn write(&self, e: &mut Encoder) {
        e.put_bytes(&self.fund.header.encode());
        e.put_count(self.fund.fcert.len());
        for v in &self.fund.fcert {
            e.put_bytes(v.validator.as_bytes()).put_bytes(v.sigma.as_bytes());
        }
        e.put_bytes(self.buyer.as_bytes()).put_bytes(self.seller.as_bytes());
    }

    pub fn read(d: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let header = FundHeader::decode(d.bytes()?)?;
        let k = d.count()?;
        let mut fcert = Vec::with_capacity(k.min(1024));
        for _ in 0..k {
            fcert.push(Validation { validator: PublicKey(d.digest()?), sigma: Signature(d.digest()?) });
        }
        let buyer = PublicKey(d.digest()?);
        let seller = PublicKey(d.digest()?);
        Ok(Self { fund: Fund { header, fcert }, buyer, seller })
    }
}

/// Commitment to a validator's identity, `c_i = H(v_i ‖ N_i)`.
pub fn validator_commitment(validator: &PublicKey, blinding: &Nonce) -> Digest {
    let mut e = Encoder::new("COMMIT");
    e.put_bytes(validator.as_bytes()).put_bytes(blinding.as_bytes());
    hash(&e.finish())
}

/// Binding a propagated share to its recipient: `s_i ‖ v_i ‖ N_prop`.
pub fn share_binding(share_bytes: &[u8], validator: &PublicKey, nprop: &Nonce) -> Vec<u8> {
    let mut e = Encoder::new("SHARE");
    e.put_bytes(share_bytes).put_bytes(validator.as_bytes()).put_bytes(nprop.as_bytes());
    e.finish()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub validator: PublicKey,
    pub sig: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentCertificate {
    pub tid: TransactionId,
    pub n_s: Nonce,
    pub h_s: Digest,
    pub witnesses: Vec<Witness>,
}

/// `Id₁ = H(tid ‖ N_s ‖ "PAY")`.
pub fn payment_fund_id(tid: &TransactionId, n_s: &Nonce) -> Digest {
    let mut e = Encoder::new("PAYFUND");
    e.put_bytes(&tid.encode()).put_bytes(n_s.as_bytes()).put_bytes(b"PAY");
    hash(&e.finish())
}

/// The partially certified fund created by a payment; its certificate is the
/// witness set and is not carried here.
pub fn derive_payment_fund(tid: &TransactionId, n_s: &Nonce, parent_balance: u64, k2_prime: usize) -> FundHeader {
    FundHeader::new(payment_fund_id(tid, n_s), parent_balance / k2_prime as u64, [tid.seller])
}

/// `Id₂ = H(Id₁ ‖ "SETTLE")`.
pub fn seller_settled_fund_id(payment_fund: &Digest) -> Digest {
    let mut e = Encoder::new("SETTLEFUND");
    e.put_bytes(payment_fund.as_bytes()).put_bytes(b"SETTLE");
    hash(&e.finish())
}

/// The fully certified fund a seller obtains by settling a payment.
pub fn seller_settled_fund(tid: &TransactionId, n_s: &Nonce, k2_prime: usize) -> FundHeader {
    let id1 = payment_fund_id(tid, n_s);
    FundHeader::new(seller_settled_fund_id(&id1), tid.fund.fbl() / k2_prime as u64, [tid.seller])
}

/// `H(F.fid)`.
pub fn buyer_settled_fund_id(fid: &Digest) -> Digest {
    hash(fid.as_bytes())
}

/// Balance after deducting `payments` partial spends of `⌊fbl / k2'⌋` each.
pub fn settled_balance(fbl: u64, payments: usize, k2_prime: usize) -> u64 {
    fbl.saturating_sub(payments as u64 * (fbl / k2_prime as u64))
}
