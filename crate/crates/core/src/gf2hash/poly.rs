use std::fmt;

use super::{BitString, Gf2Error};

/// A polynomial over GF(2).
///
/// Coefficients are stored little-endian in 64-bit limbs (bit `i` of limb
/// `k` is the coefficient of `x^(64k + i)`), with no trailing zero limbs.
/// Conversions to and from [`BitString`] use the MSB-first convention: a
/// `k`-bit string `b_0 .. b_{k-1}` is `sum b_i x^(k-1-i)`.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct GF2Poly {
    limbs: Vec<u64>,
}

impl GF2Poly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self { limbs: vec![1] }
    }

    /// `x^k`.
    pub fn monomial(k: usize) -> Self {
        let mut limbs = vec![0; k / 64 + 1];
        limbs[k / 64] = 1 << (k % 64);
        Self { limbs }
    }

    pub fn from_limbs(mut limbs: Vec<u64>) -> Self {
        while limbs.last() == Some(&0) {
            limbs.pop();
        }
        Self { limbs }
    }

    pub fn from_u64(value: u64) -> Self {
        Self::from_limbs(vec![value])
    }

    /// Sum of `x^e` over the given exponents (repeats cancel).
    pub fn from_exponents(exponents: &[usize]) -> Self {
        let mut p = Self::zero();
        for &e in exponents {
            p = p.add(&Self::monomial(e));
        }
        p
    }

    pub fn from_bits(bits: &BitString) -> Self {
        let k = bits.len();
        let mut limbs = vec![0u64; k.div_ceil(64)];
        for (i, b) in bits.iter().enumerate() {
            if b {
                let e = k - 1 - i;
                limbs[e / 64] |= 1 << (e % 64);
            }
        }
        Self::from_limbs(limbs)
    }

    /// Coefficients of `x^(width-1) .. x^0`, MSB-first. Panics if the
    /// polynomial does not fit in `width` bits.
    pub fn to_bits(&self, width: usize) -> BitString {
        if let Some(d) = self.degree() {
            assert!(d < width, "degree {d} does not fit in {width} bits");
        }
        let mut out = BitString::zeros(width);
        for e in 0..width {
            if self.coeff(e) {
                out.set(width - 1 - e, true);
            }
        }
        out
    }

    pub fn to_u64(&self) -> Option<u64> {
        match self.limbs.len() {
            0 => Some(0),
            1 => Some(self.limbs[0]),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.limbs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        let top = *self.limbs.last()?;
        Some((self.limbs.len() - 1) * 64 + 63 - top.leading_zeros() as usize)
    }

    #[inline]
    pub fn coeff(&self, e: usize) -> bool {
        self.limbs
            .get(e / 64)
            .is_some_and(|limb| (limb >> (e % 64)) & 1 == 1)
    }

    pub fn add(&self, other: &GF2Poly) -> GF2Poly {
        let (long, short) = if self.limbs.len() >= other.limbs.len() {
            (self, other)
        } else {
            (other, self)
        };
        let mut limbs = long.limbs.clone();
        for (l, s) in limbs.iter_mut().zip(&short.limbs) {
            *l ^= s;
        }
        Self::from_limbs(limbs)
    }

    /// Multiplies by `x^k`.
    pub fn shl(&self, k: usize) -> GF2Poly {
        if self.is_zero() {
            return Self::zero();
        }
        let (words, bits) = (k / 64, k % 64);
        let mut limbs = vec![0u64; self.limbs.len() + words + 1];
        for (i, &limb) in self.limbs.iter().enumerate() {
            limbs[i + words] ^= limb << bits;
            if bits != 0 {
                limbs[i + words + 1] ^= limb >> (64 - bits);
            }
        }
        Self::from_limbs(limbs)
    }

    /// Carry-less product.
    pub fn mul(&self, other: &GF2Poly) -> GF2Poly {
        let mut acc = Self::zero();
        let Some(d) = other.degree() else {
            return acc;
        };
        for e in 0..=d {
            if other.coeff(e) {
                acc = acc.add(&self.shl(e));
            }
        }
        acc
    }

    /// Remainder of division by `modulus`.
    pub fn rem(&self, modulus: &GF2Poly) -> Result<GF2Poly, Gf2Error> {
        let dp = modulus.degree().ok_or(Gf2Error::ZeroModulus)?;
        let mut r = self.limbs.clone();
        let Some(mut dr) = self.degree() else {
            return Ok(Self::zero());
        };
        while dr >= dp {
            let shift = dr - dp;
            let (words, bits) = (shift / 64, shift % 64);
            for (i, &limb) in modulus.limbs.iter().enumerate() {
                r[i + words] ^= limb << bits;
                if bits != 0 && i + words + 1 < r.len() {
                    r[i + words + 1] ^= limb >> (64 - bits);
                }
            }
            // Step down to the next set coefficient.
            loop {
                let w = dr / 64;
                let masked = if dr % 64 == 63 {
                    r[w]
                } else {
                    r[w] & ((1u64 << (dr % 64 + 1)) - 1)
                };
                if masked != 0 {
                    dr = w * 64 + 63 - masked.leading_zeros() as usize;
                    break;
                }
                if w == 0 {
                    return Ok(Self::zero());
                }
                dr = w * 64 - 1;
            }
        }
        Ok(Self::from_limbs(r))
    }

    pub fn mulmod(&self, other: &GF2Poly, modulus: &GF2Poly) -> Result<GF2Poly, Gf2Error> {
        self.mul(other).rem(modulus)
    }

    pub fn gcd(&self, other: &GF2Poly) -> GF2Poly {
        let (mut a, mut b) = (self.clone(), other.clone());
        while !b.is_zero() {
            let r = a.rem(&b).expect("b is nonzero");
            a = b;
            b = r;
        }
        a
    }
}

/// Reduces `a` modulo `p`, returning the unique `r` with `deg r < deg p`.
pub fn poly_mod(a: &GF2Poly, p: &GF2Poly) -> Result<GF2Poly, Gf2Error> {
    a.rem(p)
}

/// Trial divisions above this degree switch to the squaring-chain test.
pub const TRIAL_DIVISION_MAX_DEGREE: usize = 16;

/// Irreducibility over GF(2).
///
/// Degrees up to [`TRIAL_DIVISION_MAX_DEGREE`] use trial division, larger
/// ones the `x^(2^k) mod p` chain of [`is_irreducible_squaring`].
pub fn is_irreducible(p: &GF2Poly) -> Result<bool, Gf2Error> {
    let d = p.degree().ok_or(Gf2Error::DegenerateDegree)?;
    if d == 0 {
        return Err(Gf2Error::DegenerateDegree);
    }
    if d <= TRIAL_DIVISION_MAX_DEGREE {
        is_irreducible_trial(p)
    } else {
        is_irreducible_squaring(p)
    }
}

/// Divides by every polynomial of degree `1 ..= deg(p)/2`.
pub fn is_irreducible_trial(p: &GF2Poly) -> Result<bool, Gf2Error> {
    let d = match p.degree() {
        Some(d) if d >= 1 => d,
        _ => return Err(Gf2Error::DegenerateDegree),
    };
    assert!(d <= 62, "trial division is limited to small degrees");
    for k in 1..=d / 2 {
        for low in 0u64..(1 << k) {
            let divisor = GF2Poly::from_u64((1 << k) | low);
            if p.rem(&divisor)?.is_zero() {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Rabin's test: `p` of degree `d` is irreducible iff `x^(2^d) = x (mod p)`
/// and `gcd(x^(2^(d/q)) - x, p) = 1` for every prime `q` dividing `d`.
pub fn is_irreducible_squaring(p: &GF2Poly) -> Result<bool, Gf2Error> {
    let d = match p.degree() {
        Some(d) if d >= 1 => d,
        _ => return Err(Gf2Error::DegenerateDegree),
    };
    if d <= 63 {
        return Ok(word::is_irreducible(p.limbs[0], d));
    }
    squaring_chain(p, d)
}

fn squaring_chain(p: &GF2Poly, d: usize) -> Result<bool, Gf2Error> {
    let x = GF2Poly::monomial(1).rem(p)?;
    // powers[k] = x^(2^k) mod p
    let mut powers = Vec::with_capacity(d + 1);
    powers.push(x.clone());
    for k in 1..=d {
        let prev = &powers[k - 1];
        powers.push(prev.mulmod(prev, p)?);
    }
    if powers[d] != x {
        return Ok(false);
    }
    for q in prime_factors(d) {
        let h = powers[d / q].add(&x);
        if h.gcd(p).degree() != Some(0) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Single-word arithmetic for polynomials of degree below 64.
mod word {
    pub fn clmul(a: u64, b: u64) -> u128 {
        let mut acc = 0u128;
        let mut b = b;
        let mut i = 0;
        while b != 0 {
            if b & 1 == 1 {
                acc ^= (a as u128) << i;
            }
            b >>= 1;
            i += 1;
        }
        acc
    }

    fn degree(v: u128) -> Option<u32> {
        (v != 0).then(|| 127 - v.leading_zeros())
    }

    /// `v mod p` where `p` has degree `d` (leading bit included in `p`).
    pub fn reduce(mut v: u128, p: u64, d: u32) -> u64 {
        let p = p as u128;
        while let Some(dv) = degree(v) {
            if dv < d {
                break;
            }
            v ^= p << (dv - d);
        }
        v as u64
    }

    fn gcd(mut a: u64, mut b: u64) -> u64 {
        while b != 0 {
            let db = 63 - b.leading_zeros();
            let r = reduce(a as u128, b, db);
            a = b;
            b = r;
        }
        a
    }

    pub fn is_irreducible(p: u64, d: usize) -> bool {
        let d32 = d as u32;
        let x = reduce(2, p, d32);
        let mut powers = Vec::with_capacity(d + 1);
        powers.push(x);
        for k in 1..=d {
            let prev = powers[k - 1];
            powers.push(reduce(clmul(prev, prev), p, d32));
        }
        if powers[d] != x {
            return false;
        }
        super::prime_factors(d)
            .into_iter()
            .all(|q| gcd(p, powers[d / q] ^ x) == 1)
    }
}

fn prime_factors(mut n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut f = 2;
    while f * f <= n {
        if n.is_multiple_of(f) {
            out.push(f);
            while n.is_multiple_of(f) {
                n /= f;
            }
        }
        f += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

impl fmt::Display for GF2Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let Some(d) = self.degree() else {
            return f.write_str("0");
        };
        let mut first = true;
        for e in (0..=d).rev().filter(|&e| self.coeff(e)) {
            if !first {
                f.write_str(" + ")?;
            }
            first = false;
            match e {
                0 => f.write_str("1")?,
                1 => f.write_str("x")?,
                _ => write!(f, "x^{e}")?,
            }
        }
        Ok(())
    }
}

impl fmt::Debug for GF2Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GF2Poly({self})")
    }
}
