//! Prime-field scalars and subsets of `F_p` packed into a single machine word.
//!
//! Residues are the canonical representatives `0..p`. A [`ResidueSet`] keeps
//! bit `r` set iff `r` is a member, so translation by `c` is a rotation of the
//! low `p` bits and sumsets reduce to OR-ing rotated copies.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest modulus whose residue sets fit one 64-bit word.
pub const P_MAX: u32 = 61;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct PrimeModulus(u32);

impl PrimeModulus {
    pub fn new(p: u32) -> Result<Self> {
        Self::with_cap(p, P_MAX)
    }

    /// Like [`PrimeModulus::new`] but with a tighter cap; caps above [`P_MAX`] are clamped.
    pub fn with_cap(p: u32, cap: u32) -> Result<Self> {
        let cap = cap.min(P_MAX);
        if !is_prime(p) {
            return Err(Error::NotPrime(p));
        }
        if p > cap {
            return Err(Error::ModulusTooLarge { p, cap });
        }
        Ok(PrimeModulus(p))
    }

    #[inline]
    pub fn get(self) -> u32 {
        self.0
    }

    #[inline]
    pub fn order(self) -> usize {
        self.0 as usize
    }

    /// Mask of the low `p` bits.
    #[inline]
    pub fn mask(self) -> u64 {
        (1u64 << self.0) - 1
    }

    #[inline]
    pub fn reduce(self, x: i64) -> u32 {
        x.rem_euclid(self.0 as i64) as u32
    }

    #[inline]
    pub fn add(self, a: u32, b: u32) -> u32 {
        let s = a + b;
        if s >= self.0 {
            s - self.0
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(self, a: u32, b: u32) -> u32 {
        if a >= b {
            a - b
        } else {
            a + self.0 - b
        }
    }

    #[inline]
    pub fn neg(self, a: u32) -> u32 {
        if a == 0 {
            0
        } else {
            self.0 - a
        }
    }

    #[inline]
    pub fn mul(self, a: u32, b: u32) -> u32 {
        a * b % self.0
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn inv(self, a: u32) -> Option<u32> {
        let a = a % self.0;
        if a == 0 {
            return None;
        }
        let (mut r0, mut r1) = (self.0 as i64, a as i64);
        let (mut t0, mut t1) = (0i64, 1i64);
        while r1 != 0 {
            let q = r0 / r1;
            (r0, r1) = (r1, r0 - q * r1);
            (t0, t1) = (t1, t0 - q * t1);
        }
        Some(self.reduce(t0))
    }

    /// Rotates the low `p` bits of `bits` left by `shift`, i.e. translates the set by `shift`.
    #[inline]
    pub fn rotate(self, bits: u64, shift: u32) -> u64 {
        let shift = shift % self.0;
        if shift == 0 {
            return bits;
        }
        ((bits << shift) | (bits >> (self.0 - shift))) & self.mask()
    }
}

impl TryFrom<u32> for PrimeModulus {
    type Error = Error;

    fn try_from(p: u32) -> Result<Self> {
        PrimeModulus::new(p)
    }
}

impl From<PrimeModulus> for u32 {
    fn from(p: PrimeModulus) -> u32 {
        p.0
    }
}

impl fmt::Display for PrimeModulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

pub fn is_prime(n: u32) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u32;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// A subset of `F_p` stored as its characteristic bit vector.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "ResidueSetRepr", into = "ResidueSetRepr")]
pub struct ResidueSet {
    modulus: PrimeModulus,
    bits: u64,
}

#[derive(Serialize, Deserialize)]
struct ResidueSetRepr {
    p: PrimeModulus,
    members: Vec<u32>,
}

impl TryFrom<ResidueSetRepr> for ResidueSet {
    type Error = Error;

    fn try_from(r: ResidueSetRepr) -> Result<Self> {
        ResidueSet::new(r.p, r.members)
    }
}

impl From<ResidueSet> for ResidueSetRepr {
    fn from(s: ResidueSet) -> Self {
        ResidueSetRepr {
            p: s.modulus,
            members: s.iter().collect(),
        }
    }
}

impl ResidueSet {
    /// Builds a set from residues in `0..p`; duplicates are ignored.
    pub fn new(modulus: PrimeModulus, members: impl IntoIterator<Item = u32>) -> Result<Self> {
        let mut bits = 0u64;
        for r in members {
            if r >= modulus.get() {
                return Err(Error::ResidueOutOfRange {
                    value: r as u64,
                    p: modulus.get(),
                });
            }
            bits |= 1 << r;
        }
        Ok(ResidueSet { modulus, bits })
    }

    pub fn from_bits(modulus: PrimeModulus, bits: u64) -> Result<Self> {
        if bits & !modulus.mask() != 0 {
            return Err(Error::ResidueOutOfRange {
                value: (63 - bits.leading_zeros()) as u64,
                p: modulus.get(),
            });
        }
        Ok(ResidueSet { modulus, bits })
    }

    pub(crate) fn from_bits_unchecked(modulus: PrimeModulus, bits: u64) -> Self {
        debug_assert_eq!(bits & !modulus.mask(), 0);
        ResidueSet { modulus, bits }
    }

    pub fn empty(modulus: PrimeModulus) -> Self {
        ResidueSet { modulus, bits: 0 }
    }

    pub fn full(modulus: PrimeModulus) -> Self {
        ResidueSet {
            modulus,
            bits: modulus.mask(),
        }
    }

    #[inline]
    pub fn modulus(&self) -> PrimeModulus {
        self.modulus
    }

    #[inline]
    pub fn bits(&self) -> u64 {
        self.bits
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.bits.count_ones() as usize
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    #[inline]
    pub fn contains(&self, r: u32) -> bool {
        r < self.modulus.get() && self.bits >> r & 1 == 1
    }

    /// Members in ascending order.
    pub fn iter(&self) -> Members {
        Members(self.bits)
    }

    pub fn translate(&self, c: u32) -> ResidueSet {
        ResidueSet {
            modulus: self.modulus,
            bits: self.modulus.rotate(self.bits, c % self.modulus.get()),
        }
    }

    /// `{-a : a in A}`.
    pub fn negate(&self) -> ResidueSet {
        let p = self.modulus;
        let mut bits = self.bits & 1;
        for r in self.iter().filter(|&r| r != 0) {
            bits |= 1 << (p.get() - r);
        }
        ResidueSet { modulus: p, bits }
    }

    pub fn complement(&self) -> ResidueSet {
        ResidueSet {
            modulus: self.modulus,
            bits: !self.bits & self.modulus.mask(),
        }
    }

    pub fn intersection(&self, other: &ResidueSet) -> Result<ResidueSet> {
        check_same(self.modulus, other.modulus)?;
        Ok(ResidueSet {
            modulus: self.modulus,
            bits: self.bits & other.bits,
        })
    }

    pub fn union(&self, other: &ResidueSet) -> Result<ResidueSet> {
        check_same(self.modulus, other.modulus)?;
        Ok(ResidueSet {
            modulus: self.modulus,
            bits: self.bits | other.bits,
        })
    }

    pub fn is_subset(&self, other: &ResidueSet) -> bool {
        self.modulus == other.modulus && self.bits & !other.bits == 0
    }
}

impl fmt::Debug for ResidueSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// `p=7; {0,1,3}`
impl fmt::Display for ResidueSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p={}; ", self.modulus)?;
        write_members(f, self)
    }
}

/// Writes just the braced member list, `{0,1,3}`.
pub fn write_members(f: &mut impl fmt::Write, set: &ResidueSet) -> fmt::Result {
    f.write_char('{')?;
    for (i, r) in set.iter().enumerate() {
        if i > 0 {
            f.write_char(',')?;
        }
        write!(f, "{r}")?;
    }
    f.write_char('}')
}

impl std::str::FromStr for ResidueSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        crate::parse::parse_set_literal(s)
    }
}

#[derive(Debug, Clone)]
pub struct Members(pub(crate) u64);

impl Iterator for Members {
    type Item = u32;

    #[inline]
    fn next(&mut self) -> Option<u32> {
        if self.0 == 0 {
            return None;
        }
        let r = self.0.trailing_zeros();
        self.0 &= self.0 - 1;
        Some(r)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.0.count_ones() as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Members {}

fn check_same(a: PrimeModulus, b: PrimeModulus) -> Result<()> {
    if a != b {
        return Err(Error::ModulusMismatch(a.get(), b.get()));
    }
    Ok(())
}

/// `A + B = {a + b : a in A, b in B}`.
pub fn sumset(a: &ResidueSet, b: &ResidueSet) -> Result<ResidueSet> {
    check_same(a.modulus, b.modulus)?;
    let p = a.modulus;
    let bits = a.iter().fold(0u64, |acc, x| acc | p.rotate(b.bits, x));
    Ok(ResidueSet { modulus: p, bits })
}

/// `{d·a : a in A}` for a unit `d`.
pub fn dilate(a: &ResidueSet, d: u32) -> Result<ResidueSet> {
    let p = a.modulus;
    let d = d % p.get();
    if d == 0 {
        return Err(Error::ZeroScalar(p.get()));
    }
    let bits = a.iter().fold(0u64, |acc, x| acc | 1 << p.mul(x, d));
    Ok(ResidueSet { modulus: p, bits })
}

/// `min(|A| + |B| - 1, p)`, the sumset lower bound for nonempty sets.
pub fn cd_lower_bound(a_size: usize, b_size: usize, p: PrimeModulus) -> Result<usize> {
    let order = p.order();
    for size in [a_size, b_size] {
        if size == 0 || size > order {
            return Err(Error::SizeOutOfRange {
                size,
                min: 1,
                max: order,
            });
        }
    }
    Ok((a_size + b_size - 1).min(order))
}

/// `{0, 1, ..., k-1}`.
pub fn interval_set(p: PrimeModulus, k: usize) -> Result<ResidueSet> {
    if k == 0 || k > p.order() {
        return Err(Error::SizeOutOfRange {
            size: k,
            min: 1,
            max: p.order(),
        });
    }
    Ok(ResidueSet {
        modulus: p,
        bits: (1u64 << k) - 1,
    })
}
