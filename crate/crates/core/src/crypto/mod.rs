//! Simulation-grade primitives: a random-oracle hash, keyed-hash signatures
//! checked by a trusted [`KeyDirectory`], nonces and threshold secret sharing.
//!
//! Signatures are `H(tag ‖ sk ‖ msg)`. Only the holder of `sk` (or the
//! adversary once it has corrupted the holder) can produce them; verification
//! goes through the directory, which plays the role of the public-key
//! infrastructure inside a single simulated process.

mod field;
mod shamir;

use std::collections::HashMap;
use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

pub use field::{Fp, MODULUS};
pub use shamir::{reconstruct_secret, secret_share, Share, ShareSet, CHUNK_BYTES};

pub const DIGEST_LEN: usize = 32;
pub const DEFAULT_NONCE_BITS: usize = 128;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("invalid sharing parameters: threshold {threshold}, total {total}")]
    BadThreshold { threshold: usize, total: usize },
    #[error("insufficient shares: have {have} distinct, need {need}")]
    InsufficientShares { have: usize, need: usize },
    #[error("malformed share encoding")]
    MalformedShare,
}

/// Output of the random-oracle hash.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn short(&self) -> String {
        hex::encode(&self.0[..6])
    }

    /// Big-endian integer value of the digest reduced modulo `n`.
    pub fn mod_n(&self, n: usize) -> usize {
        let n = n as u128;
        self.0.iter().fold(0u128, |acc, &b| (acc * 256 + b as u128) % n) as usize
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.short())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let arr: [u8; DIGEST_LEN] =
            bytes.try_into().map_err(|_| serde::de::Error::custom("digest must be 32 bytes"))?;
        Ok(Digest(arr))
    }
}

pub fn hash(input: &[u8]) -> Digest {
    Digest(Sha256::digest(input).into())
}

/// Hash of the concatenation of `parts` (no framing; callers that need
/// injectivity use the canonical encoder in `ledger`).
pub fn hash_concat(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

/// A party identity; also the verification key.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PublicKey(pub Digest);

impl PublicKey {
    pub fn as_bytes(&self) -> &[u8] {
        self.0.as_bytes()
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "pk:{}", self.0.short())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Signature(pub Digest);

impl Signature {
    pub fn as_bytes(&self) -> &[u8] {
        self.0.as_bytes()
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sig:{}", self.0.short())
    }
}

#[derive(Clone)]
pub struct KeyPair {
    secret: [u8; 32],
    public: PublicKey,
}

impl KeyPair {
    pub fn generate<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut secret = [0u8; 32];
        rng.fill_bytes(&mut secret);
        Self::from_secret(secret)
    }

    pub fn from_secret(secret: [u8; 32]) -> Self {
        let public = PublicKey(hash_concat(&[b"kq/pk/v1", &secret]));
        Self { secret, public }
    }

    pub fn public(&self) -> PublicKey {
        self.public
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature(sig_tag(&self.secret, message))
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyPair({:?})", self.public)
    }
}

fn sig_tag(secret: &[u8; 32], message: &[u8]) -> Digest {
    hash_concat(&[b"kq/sig/v1", secret, message])
}

/// Trusted verifier holding every registered key.
#[derive(Debug, Clone, Default)]
pub struct KeyDirectory {
    secrets: HashMap<PublicKey, [u8; 32]>,
}

impl KeyDirectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, kp: &KeyPair) {
        self.secrets.insert(kp.public, kp.secret);
    }

    pub fn contains(&self, pk: &PublicKey) -> bool {
        self.secrets.contains_key(pk)
    }

    /// `true` iff `sig` was produced by `pk`'s key over exactly `message`.
    /// Unknown keys and malformed signatures verify as `false`.
    pub fn verify(&self, pk: &PublicKey, message: &[u8], sig: &Signature) -> bool {
        match self.secrets.get(pk) {
            Some(sk) => sig_tag(sk, message) == sig.0,
            None => false,
        }
    }
}

/// An r-bit random string.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Nonce(pub Vec<u8>);

impl Nonce {
    /// Draws `bits` random bits (rounded up to whole bytes).
    pub fn draw<R: RngCore + ?Sized>(rng: &mut R, bits: usize) -> Self {
        let mut v = vec![0u8; bits.div_ceil(8).max(1)];
        rng.fill_bytes(&mut v);
        Nonce(v)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn digest(&self) -> Digest {
        hash(&self.0)
    }
}

impl fmt::Debug for Nonce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "N:{}", hex::encode(&self.0[..self.0.len().min(6)]))
    }
}

impl Serialize for Nonce {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for Nonce {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map(Nonce).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hash_determinism_and_distinctness() {
        assert_eq!(hash(b"abc"), hash(b"abc"));
        let corpus: Vec<Vec<u8>> = (0u32..2000).map(|i| i.to_be_bytes().to_vec()).collect();
        let set: std::collections::HashSet<_> = corpus.iter().map(|x| hash(x)).collect();
        assert_eq!(set.len(), corpus.len());
    }

    #[test]
    fn sign_verify() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = KeyPair::generate(&mut rng);
        let b = KeyPair::generate(&mut rng);
        let mut dir = KeyDirectory::new();
        dir.register(&a);
        dir.register(&b);
        let sig = a.sign(b"hello");
        assert!(dir.verify(&a.public(), b"hello", &sig));
        assert!(!dir.verify(&b.public(), b"hello", &sig));
        assert!(!dir.verify(&a.public(), b"hellp", &sig));
        assert!(!dir.verify(&a.public(), b"hello", &Signature(Digest([7; 32]))));
        let stranger = KeyPair::generate(&mut rng);
        assert!(!dir.verify(&stranger.public(), b"x", &stranger.sign(b"x")));
    }

    #[test]
    fn nonce_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(Nonce::draw(&mut rng, 128).0.len(), 16);
        assert_eq!(Nonce::draw(&mut rng, 72).0.len(), 9);
        assert_ne!(Nonce::draw(&mut rng, 128), Nonce::draw(&mut rng, 128));
    }

    #[test]
    fn digest_mod_n_matches_bigint() {
        // 2^256 - 1 mod 7: 2^3 ≡ 1, 256 = 3*85 + 1 → 2^256 ≡ 2 → 2 - 1 = 1
        assert_eq!(Digest([0xff; 32]).mod_n(7), 1);
        let mut d = [0u8; 32];
        d[31] = 200;
        d[30] = 1;
        assert_eq!(Digest(d).mod_n(1000), 456);
    }

    #[test]
    fn digest_serde_roundtrip() {
        let d = hash(b"x");
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(serde_json::from_str::<Digest>(&s).unwrap(), d);
    }
}

/// Serde adapter that writes byte strings as hex.
pub mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}
