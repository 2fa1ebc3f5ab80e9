//! Arithmetic over GF(2^8).
//!
//! Elements are bytes interpreted as polynomials over GF(2) reduced modulo
//! x^8 + x^4 + x^3 + x^2 + 1 (0x11D). Addition is XOR, multiplication goes
//! through log/exp tables built at compile time with generator 2.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Sub};

use thiserror::Error;

/// Low byte of the reduction polynomial 0x11D.
const POLY: u16 = 0x1D;

static EXP: [u8; 512] = build_exp();
static LOG: [u8; 256] = build_log();

const fn build_exp() -> [u8; 512] {
    let mut table = [0u8; 512];
    let mut val: u16 = 1;
    let mut i = 0;
    while i < 255 {
        table[i] = val as u8;
        table[i + 255] = val as u8;
        val <<= 1;
        if val & 0x100 != 0 {
            val ^= 0x100 | POLY;
        }
        i += 1;
    }
    table[510] = table[0];
    table[511] = table[1];
    table
}

const fn build_log() -> [u8; 256] {
    let exp = build_exp();
    let mut table = [0u8; 256];
    let mut i = 0;
    while i < 255 {
        table[exp[i] as usize] = i as u8;
        i += 1;
    }
    table
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("no inverse of zero")]
    ZeroInverse,
}

/// An element of GF(256).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
#[repr(transparent)]
pub struct Gf256(pub u8);

impl Gf256 {
    pub const ZERO: Self = Self(0);
    pub const ONE: Self = Self(1);

    #[inline]
    pub const fn new(v: u8) -> Self {
        Self(v)
    }

    #[inline]
    pub const fn value(self) -> u8 {
        self.0
    }

    #[inline]
    pub const fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn inv(self) -> Result<Self, FieldError> {
        inv(self.0).map(Self)
    }
}

impl fmt::Debug for Gf256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Gf256({:#04x})", self.0)
    }
}

impl fmt::Display for Gf256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#04x}", self.0)
    }
}

impl From<u8> for Gf256 {
    fn from(v: u8) -> Self {
        Self(v)
    }
}

impl From<Gf256> for u8 {
    fn from(v: Gf256) -> Self {
        v.0
    }
}

impl Add for Gf256 {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self(add(self.0, rhs.0))
    }
}

impl AddAssign for Gf256 {
    fn add_assign(&mut self, rhs: Self) {
        self.0 = add(self.0, rhs.0);
    }
}

impl Sub for Gf256 {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self(add(self.0, rhs.0))
    }
}

impl Mul for Gf256 {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self(mul(self.0, rhs.0))
    }
}

impl MulAssign for Gf256 {
    fn mul_assign(&mut self, rhs: Self) {
        self.0 = mul(self.0, rhs.0);
    }
}

#[allow(clippy::suspicious_arithmetic_impl)]
impl Div for Gf256 {
    type Output = Self;

    /// Panics when dividing by zero, like integer division.
    fn div(self, rhs: Self) -> Self {
        self * rhs.inv().expect("division by zero in GF(256)")
    }
}

#[inline]
pub fn add(a: u8, b: u8) -> u8 {
    a ^ b
}

#[inline]
pub fn mul(a: u8, b: u8) -> u8 {
    if a == 0 || b == 0 {
        return 0;
    }
    EXP[LOG[a as usize] as usize + LOG[b as usize] as usize]
}

pub fn inv(a: u8) -> Result<u8, FieldError> {
    if a == 0 {
        return Err(FieldError::ZeroInverse);
    }
    Ok(EXP[255 - LOG[a as usize] as usize])
}

/// `dst[i] += c * src[i]` for every byte.
pub fn mul_add_slice(dst: &mut [u8], src: &[u8], c: u8) {
    debug_assert_eq!(dst.len(), src.len());
    match c {
        0 => {}
        1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d ^= s),
        _ => {
            let log_c = LOG[c as usize] as usize;
            for (d, &s) in dst.iter_mut().zip(src) {
                if s != 0 {
                    *d ^= EXP[log_c + LOG[s as usize] as usize];
                }
            }
        }
    }
}

/// `buf[i] *= c` for every byte.
pub fn scale_slice(buf: &mut [u8], c: u8) {
    match c {
        0 => buf.fill(0),
        1 => {}
        _ => buf.iter_mut().for_each(|b| *b = mul(*b, c)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Shift-and-reduce multiplication, independent of the tables.
    fn mul_oracle(mut a: u8, mut b: u8) -> u8 {
        let mut acc = 0u8;
        while b != 0 {
            if b & 1 != 0 {
                acc ^= a;
            }
            let carry = a & 0x80 != 0;
            a <<= 1;
            if carry {
                a ^= 0x1D;
            }
            b >>= 1;
        }
        acc
    }

    #[test]
    fn add_examples() {
        assert_eq!(add(0x00, 0x5A), 0x5A);
        assert_eq!(add(0x3C, 0x3C), 0x00);
        assert_eq!(add(0x57, 0x83), 0x57 ^ 0x83);
        assert_eq!(add(0x57, 0x83), 0xD4);
    }

    #[test]
    fn mul_examples() {
        assert_eq!(mul(0x01, 0x7F), 0x7F);
        assert_eq!(mul(0x00, 0xFF), 0x00);
        assert_eq!(mul_oracle(0x02, 0x80), 0x1D);
        assert_eq!(mul(0x02, 0x80), 0x1D);
    }

    #[test]
    fn inv_examples() {
        assert_eq!(inv(0x01), Ok(0x01));
        assert_eq!(inv(0x00), Err(FieldError::ZeroInverse));
        assert_eq!(FieldError::ZeroInverse.to_string(), "no inverse of zero");
        let brute = (1..=255u8).find(|&x| mul_oracle(0x53, x) == 1).unwrap();
        assert_eq!(inv(0x53), Ok(brute));
    }

    #[test]
    fn mul_matches_oracle_on_all_pairs() {
        for a in 0..=255u8 {
            for b in 0..=255u8 {
                assert_eq!(mul(a, b), mul_oracle(a, b), "{a:#x} * {b:#x}");
            }
        }
    }

    #[test]
    fn every_nonzero_element_has_inverse() {
        for a in 1..=255u8 {
            assert_eq!(mul(a, inv(a).unwrap()), 1);
        }
    }

    #[test]
    fn slice_helpers_match_scalar_ops() {
        let src: Vec<u8> = (0..=255).collect();
        for c in [0u8, 1, 2, 0x53, 0xFF] {
            let mut dst = vec![0x11u8; 256];
            mul_add_slice(&mut dst, &src, c);
            for (i, &d) in dst.iter().enumerate() {
                assert_eq!(d, 0x11 ^ mul_oracle(c, i as u8));
            }
            let mut s = src.clone();
            scale_slice(&mut s, c);
            for (i, &v) in s.iter().enumerate() {
                assert_eq!(v, mul_oracle(c, i as u8));
            }
        }
    }

    #[test]
    fn newtype_operators() {
        let a = Gf256(0x53);
        assert_eq!(a * a.inv().unwrap(), Gf256::ONE);
        assert_eq!(a + a, Gf256::ZERO);
        assert_eq!(a - Gf256(0x53), Gf256::ZERO);
        assert_eq!((a * Gf256(7)) / Gf256(7), a);
    }

    proptest! {
        #[test]
        fn field_axioms(a: u8, b: u8, c: u8) {
            prop_assert_eq!(add(add(a, b), c), add(a, add(b, c)));
            prop_assert_eq!(add(a, b), add(b, a));
            prop_assert_eq!(mul(a, b), mul(b, a));
            prop_assert_eq!(mul(mul(a, b), c), mul(a, mul(b, c)));
            prop_assert_eq!(mul(a, add(b, c)), add(mul(a, b), mul(a, c)));
            prop_assert_eq!(add(a, a), 0);
        }
    }
}
