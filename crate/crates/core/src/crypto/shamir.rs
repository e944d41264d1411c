//! Shamir threshold sharing of byte strings.
//!
//! The message is cut into 15-byte chunks, each embedded as one element of
//! GF(2^127 − 1) and shared with its own random polynomial of degree
//! `threshold − 1`. Share `i` is the evaluation of every chunk polynomial at
//! `x = i`.

use std::collections::BTreeMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::field::Fp;
use super::CryptoError;

pub const CHUNK_BYTES: usize = 15;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Share {
    /// Evaluation point, `1..=total`.
    pub index: u32,
    /// Length of the shared message in bytes.
    pub len: u32,
    pub values: Vec<u128>,
}

impl Share {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 16 * self.values.len());
        out.extend_from_slice(&self.index.to_be_bytes());
        out.extend_from_slice(&self.len.to_be_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() < 8 || !(bytes.len() - 8).is_multiple_of(16) {
            return Err(CryptoError::MalformedShare);
        }
        let index = u32::from_be_bytes(bytes[0..4].try_into().unwrap());
        let len = u32::from_be_bytes(bytes[4..8].try_into().unwrap());
        let values = bytes[8..].chunks_exact(16).map(|c| u128::from_be_bytes(c.try_into().unwrap())).collect();
        Ok(Share { index, len, values })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShareSet {
    pub shares: Vec<Share>,
    pub threshold: usize,
    pub total: usize,
}

pub fn secret_share<R: RngCore + ?Sized>(
    message: &[u8],
    total: usize,
    threshold: usize,
    rng: &mut R,
) -> Result<ShareSet, CryptoError> {
    if threshold == 0 || threshold > total || total > u32::MAX as usize {
        return Err(CryptoError::BadThreshold { threshold, total });
    }
    let secrets: Vec<Fp> = message.chunks(CHUNK_BYTES).map(embed).collect();
    let mut shares: Vec<Share> = (1..=total as u32)
        .map(|index| Share { index, len: message.len() as u32, values: Vec::with_capacity(secrets.len()) })
        .collect();
    for secret in secrets {
        let mut coeffs = Vec::with_capacity(threshold);
        coeffs.push(secret);
        coeffs.extend((1..threshold).map(|_| Fp::random(rng)));
        for share in shares.iter_mut() {
            let x = Fp::new(share.index as u128);
            let y = coeffs.iter().rev().fold(Fp::ZERO, |acc, &c| acc * x + c);
            share.values.push(y.value());
        }
    }
    Ok(ShareSet { shares, threshold, total })
}

/// Lagrange interpolation at zero over the first `threshold` distinct
/// indices. Shares dealt inconsistently reconstruct to arbitrary bytes.
pub fn reconstruct_secret(shares: &[Share], threshold: usize) -> Result<Vec<u8>, CryptoError> {
    let mut distinct: BTreeMap<u32, &Share> = BTreeMap::new();
    for s in shares {
        if s.index != 0 {
            distinct.entry(s.index).or_insert(s);
        }
    }
    if threshold == 0 || distinct.len() < threshold {
        return Err(CryptoError::InsufficientShares { have: distinct.len(), need: threshold.max(1) });
    }
    let picked: Vec<&Share> = distinct.values().take(threshold).copied().collect();
    let xs: Vec<Fp> = picked.iter().map(|s| Fp::new(s.index as u128)).collect();
    let weights: Vec<Fp> = (0..xs.len())
        .map(|j| {
            let (mut num, mut den) = (Fp::ONE, Fp::ONE);
            for (k, &xk) in xs.iter().enumerate() {
                if k != j {
                    num = num * xk;
                    den = den * (xk - xs[j]);
                }
            }
            num * den.inv()
        })
        .collect();
    let chunks = picked.iter().map(|s| s.values.len()).min().unwrap_or(0);
    let mut out = Vec::with_capacity(chunks * CHUNK_BYTES);
    for c in 0..chunks {
        let v = picked.iter().zip(&weights).fold(Fp::ZERO, |acc, (s, &w)| acc + Fp::new(s.values[c]) * w);
        out.extend_from_slice(&v.value().to_be_bytes()[16 - CHUNK_BYTES..]);
    }
    let len = (picked[0].len as usize).min(out.len());
    // the last chunk is left-padded when embedded
    let tail = picked[0].len as usize % CHUNK_BYTES;
    if tail != 0 && len == picked[0].len as usize && chunks > 0 {
        let last_start = (chunks - 1) * CHUNK_BYTES;
        let last: Vec<u8> = out[last_start + CHUNK_BYTES - tail..].to_vec();
        out.truncate(last_start);
        out.extend_from_slice(&last);
    }
    out.truncate(len);
    Ok(out)
}

fn embed(chunk: &[u8]) -> Fp {
    let mut buf = [0u8; 16];
    buf[16 - chunk.len()..].copy_from_slice(chunk);
    Fp::new(u128::from_be_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
        fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for i in start..n {
                cur.push(i);
                go(i + 1, n, k, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        go(0, n, k, &mut Vec::new(), &mut out);
        out
    }

    #[test]
    fn threshold_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let msg = b"settle this fund please, thirty-one bytes or more".to_vec();
        let set = secret_share(&msg, 10, 4, &mut rng).unwrap();
        assert_eq!(set.shares.len(), 10);
        let pick: Vec<Share> = [9, 2, 5, 0].iter().map(|&i| set.shares[i].clone()).collect();
        assert_eq!(reconstruct_secret(&pick, 4).unwrap(), msg);
        assert!(matches!(reconstruct_secret(&pick[..3], 4), Err(CryptoError::InsufficientShares { have: 3, need: 4 })));
    }

    #[test]
    fn exhaustive_subsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for msg in [vec![], vec![0u8], b"exactly15bytes!".to_vec(), (0u8..=40).collect::<Vec<_>>()] {
            let set = secret_share(&msg, 5, 3, &mut rng).unwrap();
            let subs = subsets(5, 3);
            assert_eq!(subs.len(), 10);
            for s in subs {
                let pick: Vec<Share> = s.iter().map(|&i| set.shares[i].clone()).collect();
                assert_eq!(reconstruct_secret(&pick, 3).unwrap(), msg);
            }
        }
    }

    #[test]
    fn duplicates_do_not_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let set = secret_share(b"abc", 4, 2, &mut rng).unwrap();
        let dup = vec![set.shares[1].clone(), set.shares[1].clone()];
        assert!(reconstruct_secret(&dup, 2).is_err());
    }

    #[test]
    fn bad_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert!(secret_share(b"x", 3, 4, &mut rng).is_err());
        assert!(secret_share(b"x", 3, 0, &mut rng).is_err());
    }

    #[test]
    fn inconsistent_shares_do_not_panic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = secret_share(b"first message here", 5, 3, &mut rng).unwrap();
        let b = secret_share(b"second, longer message body", 5, 3, &mut rng).unwrap();
        let mixed =
            vec![a.shares[0].clone(), b.shares[1].clone(), Share { index: 3, len: 999, values: vec![u128::MAX] }];
        let out = reconstruct_secret(&mixed, 3).unwrap();
        assert!(out.len() <= 999);
    }

    #[test]
    fn share_bytes_roundtrip() {
        let s = Share { index: 3, len: 17, values: vec![1, u128::MAX >> 1] };
        assert_eq!(Share::from_bytes(&s.to_bytes()).unwrap(), s);
        assert!(Share::from_bytes(&[1, 2, 3]).is_err());
    }
}
