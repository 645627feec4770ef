use std::fmt;
use std::str::FromStr;

use rand::RngCore;

use super::Gf2Error;

/// An ordered sequence of bits packed MSB-first into bytes.
///
/// Bit 0 is the most significant bit of byte 0. Padding bits in the final
/// byte are always zero, so two strings with equal contents compare equal.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BitString {
    bytes: Vec<u8>,
    len: usize,
}

impl BitString {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            bytes: vec![0; len.div_ceil(8)],
            len,
        }
    }

    /// Wraps whole bytes; the bit length is `8 * bytes.len()`.
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        let len = bytes.len() * 8;
        Self { bytes, len }
    }

    /// Builds a string of `len` bits from `bytes`, which must hold exactly
    /// `ceil(len / 8)` bytes with zero padding.
    pub fn from_bytes_with_len(bytes: Vec<u8>, len: usize) -> Result<Self, Gf2Error> {
        if bytes.len() != len.div_ceil(8) {
            return Err(Gf2Error::BitLength {
                expected: len.div_ceil(8) * 8,
                actual: bytes.len() * 8,
            });
        }
        let s = Self { bytes, len };
        if s.padding_bits() != 0 {
            return Err(Gf2Error::NonZeroPadding);
        }
        Ok(s)
    }

    /// Draws `len` uniformly random bits.
    pub fn random<R: RngCore + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut bytes = vec![0u8; len.div_ceil(8)];
        rng.fill_bytes(&mut bytes);
        let mut s = Self { bytes, len };
        s.clear_padding();
        s
    }

    /// Builds a string from the low `len` bits of `value`, most significant first.
    pub fn from_u64(value: u64, len: usize) -> Self {
        assert!(len <= 64, "from_u64 supports at most 64 bits");
        let mut s = Self::zeros(len);
        for i in 0..len {
            if (value >> (len - 1 - i)) & 1 == 1 {
                s.set(i, true);
            }
        }
        s
    }

    /// Reads the string as an unsigned integer, first bit most significant.
    pub fn to_u64(&self) -> Option<u64> {
        if self.len > 64 {
            return None;
        }
        Some(self.iter().fold(0u64, |acc, b| (acc << 1) | b as u64))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        assert!(
            i < self.len,
            "bit index {i} out of range for length {}",
            self.len
        );
        (self.bytes[i / 8] >> (7 - i % 8)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(
            i < self.len,
            "bit index {i} out of range for length {}",
            self.len
        );
        let mask = 1u8 << (7 - i % 8);
        if value {
            self.bytes[i / 8] |= mask;
        } else {
            self.bytes[i / 8] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        let v = self.bit(i);
        self.set(i, !v);
    }

    pub fn push(&mut self, value: bool) {
        if self.len.is_multiple_of(8) {
            self.bytes.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, value);
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.bit(i))
    }

    pub fn count_ones(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    /// Bitwise XOR of two strings of equal length.
    pub fn xor(&self, other: &BitString) -> Result<BitString, Gf2Error> {
        if self.len != other.len {
            return Err(Gf2Error::BitLength {
                expected: self.len,
                actual: other.len,
            });
        }
        let bytes = self
            .bytes
            .iter()
            .zip(&other.bytes)
            .map(|(a, b)| a ^ b)
            .collect();
        Ok(Self {
            bytes,
            len: self.len,
        })
    }

    /// Copies bits `[start, start + len)`.
    pub fn slice(&self, start: usize, len: usize) -> BitString {
        assert!(start + len <= self.len, "slice out of range");
        let mut out = Self::zeros(len);
        if start.is_multiple_of(8) {
            out.bytes
                .copy_from_slice(&self.bytes[start / 8..start / 8 + len.div_ceil(8)]);
            out.clear_padding();
        } else {
            for i in 0..len {
                if self.bit(start + i) {
                    out.set(i, true);
                }
            }
        }
        out
    }

    pub fn concat(&self, other: &BitString) -> BitString {
        let mut out = self.clone();
        for b in other.iter() {
            out.push(b);
        }
        out
    }

    pub fn to_hex(&self) -> String {
        self.bytes.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn padding_bits(&self) -> u8 {
        match self.len % 8 {
            0 => 0,
            used => self.bytes.last().copied().unwrap_or(0) & (0xffu8 >> used),
        }
    }

    fn clear_padding(&mut self) {
        let used = self.len % 8;
        if used != 0 {
            if let Some(last) = self.bytes.last_mut() {
                *last &= 0xffu8 << (8 - used);
            }
        }
    }
}

impl FromStr for BitString {
    type Err = Gf2Error;

    /// Parses a string of `0`/`1` characters; `_` separators are ignored.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = BitString::new();
        for c in s.chars() {
            match c {
                '0' => out.push(false),
                '1' => out.push(true),
                '_' => {}
                other => return Err(Gf2Error::InvalidBitChar(other)),
            }
        }
        Ok(out)
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len <= 128 {
            write!(f, "BitString(\"{self}\")")
        } else {
            write!(
                f,
                "BitString(len={}, hex={}..)",
                self.len,
                &self.to_hex()[..16]
            )
        }
    }
}
