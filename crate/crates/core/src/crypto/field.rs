//! Arithmetic modulo the Mersenne prime 2^127 − 1.

use std::ops::{Add, Mul, Sub};

use rand::RngCore;

pub const MODULUS: u128 = (1u128 << 127) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Fp(u128);

impl Fp {
    pub const ZERO: Fp = Fp(0);
    pub const ONE: Fp = Fp(1);

    pub fn new(v: u128) -> Self {
        Fp(reduce(v))
    }

    pub fn value(self) -> u128 {
        self.0
    }

    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        loop {
            let mut b = [0u8; 16];
            rng.fill_bytes(&mut b);
            let v = u128::from_be_bytes(b) & MODULUS;
            if v != MODULUS {
                return Fp(v);
            }
        }
    }

    pub fn pow(self, mut e: u128) -> Self {
        let mut base = self;
        let mut acc = Fp::ONE;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            e >>= 1;
        }
        acc
    }

    /// Multiplicative inverse; zero maps to zero.
    pub fn inv(self) -> Self {
        self.pow(MODULUS - 2)
    }
}

fn reduce(v: u128) -> u128 {
    let mut s = (v & MODULUS) + (v >> 127);
    if s >= MODULUS {
        s -= MODULUS;
    }
    s
}

impl Add for Fp {
    type Output = Fp;
    fn add(self, rhs: Fp) -> Fp {
        // both < 2^127, so the sum fits
        Fp(reduce(self.0 + rhs.0))
    }
}

impl Sub for Fp {
    type Output = Fp;
    fn sub(self, rhs: Fp) -> Fp {
        if self.0 >= rhs.0 {
            Fp(self.0 - rhs.0)
        } else {
            Fp(self.0 + MODULUS - rhs.0)
        }
    }
}

impl Mul for Fp {
    type Output = Fp;
    fn mul(self, rhs: Fp) -> Fp {
        const LO: u128 = u64::MAX as u128;
        let (a_hi, a_lo) = (self.0 >> 64, self.0 & LO);
        let (b_hi, b_lo) = (rhs.0 >> 64, rhs.0 & LO);
        let ll = a_lo * b_lo;
        let mid = a_lo * b_hi + a_hi * b_lo;
        let hh = a_hi * b_hi;
        let (low, carry) = ll.overflowing_add(mid << 64);
        let high = hh + (mid >> 64) + carry as u128;
        // x = high·2^128 + low, and 2^128 ≡ 2 (mod 2^127 − 1)
        let s = (low & MODULUS) + (low >> 127) + (high << 1);
        Fp(reduce(s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn slow_mul(a: u128, b: u128) -> u128 {
        // double-and-add, never overflows since operands < 2^127
        let mut acc = 0u128;
        let mut x = a;
        let mut y = b;
        while y > 0 {
            if y & 1 == 1 {
                acc = reduce(acc + x);
            }
            x = reduce(x << 1);
            y >>= 1;
        }
        acc
    }

    #[test]
    fn inverse() {
        let a = Fp::new(123456789);
        assert_eq!(a * a.inv(), Fp::ONE);
        let b = Fp::new(MODULUS - 1);
        assert_eq!(b * b, Fp::ONE);
    }

    proptest! {
        #[test]
        fn mul_matches_double_and_add(a in 0..MODULUS, b in 0..MODULUS) {
            prop_assert_eq!((Fp::new(a) * Fp::new(b)).value(), slow_mul(a, b));
        }

        #[test]
        fn add_sub_inverse(a in 0..MODULUS, b in 0..MODULUS) {
            let (x, y) = (Fp::new(a), Fp::new(b));
            prop_assert_eq!(x + y - y, x);
        }
    }
}
