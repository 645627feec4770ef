use rand::RngCore;

use super::poly::{is_irreducible, poly_mod, GF2Poly};
use super::{BitString, Gf2Error};

/// One member of the division-hash family: a monic irreducible polynomial
/// `p(x) = x^l + low(x)` of degree `l`. Only the `l` low coefficients are
/// stored; the leading term is implicit.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct HashKey {
    l: usize,
    low_coeffs: BitString,
}

impl HashKey {
    /// Builds a key and checks that the implied polynomial is irreducible.
    pub fn new(low_coeffs: BitString) -> Result<Self, Gf2Error> {
        let key = Self::from_low_coeffs(low_coeffs)?;
        if !is_irreducible(&key.polynomial())? {
            return Err(Gf2Error::Reducible);
        }
        Ok(key)
    }

    /// Builds a key without the irreducibility check. Verifiers use this to
    /// rebuild whatever polynomial a decrypted description names.
    pub fn from_low_coeffs(low_coeffs: BitString) -> Result<Self, Gf2Error> {
        let l = low_coeffs.len();
        if l < 2 {
            return Err(Gf2Error::TagLength(l));
        }
        Ok(Self { l, low_coeffs })
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn low_coeffs(&self) -> &BitString {
        &self.low_coeffs
    }

    pub fn polynomial(&self) -> GF2Poly {
        GF2Poly::from_bits(&self.low_coeffs).add(&GF2Poly::monomial(self.l))
    }

    /// `l` as a big-endian u16, then the low coefficients MSB-first,
    /// zero-padded to whole bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let l = u16::try_from(self.l).expect("tag length exceeds u16");
        let mut out = l.to_be_bytes().to_vec();
        out.extend_from_slice(self.low_coeffs.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, Gf2Error> {
        let (len, body) = bytes
            .split_first_chunk::<2>()
            .ok_or(Gf2Error::MalformedKey)?;
        let l = u16::from_be_bytes(*len) as usize;
        if body.len() != l.div_ceil(8) {
            return Err(Gf2Error::MalformedKey);
        }
        let low =
            BitString::from_bytes_with_len(body.to_vec(), l).map_err(|_| Gf2Error::MalformedKey)?;
        Self::from_low_coeffs(low)
    }

    /// Precomputes the reduction table for repeated hashing under this key.
    pub fn hasher(&self) -> DivisionHasher {
        DivisionHasher::new(self)
    }
}

/// Draws a uniformly random monic irreducible polynomial of degree `l` by
/// rejection sampling over the `2^l` low-coefficient strings.
pub fn gen_hash_key<R: RngCore + ?Sized>(l: usize, rng: &mut R) -> Result<HashKey, Gf2Error> {
    if l < 2 {
        return Err(Gf2Error::TagLength(l));
    }
    for _ in 0..64 * l {
        let low = BitString::random(l, rng);
        // Cheap rejections: divisible by x (zero constant term) or by x + 1
        // (even weight once the implicit leading term is counted).
        if !low.bit(l - 1) || low.count_ones() % 2 == 1 {
            continue;
        }
        let candidate = HashKey { l, low_coeffs: low };
        if is_irreducible(&candidate.polynomial())? {
            return Ok(candidate);
        }
    }
    Err(Gf2Error::SamplingExhausted(l))
}

/// `(M(x) * x^l) mod p(x)` as an `l`-bit string.
pub fn division_hash(key: &HashKey, msg: &BitString) -> BitString {
    key.hasher().hash(msg)
}

/// Reference implementation through generic polynomial reduction.
pub fn division_hash_reference(key: &HashKey, msg: &BitString) -> BitString {
    let shifted = GF2Poly::from_bits(msg).shl(key.l);
    poly_mod(&shifted, &key.polynomial())
        .expect("key polynomial is monic")
        .to_bits(key.l)
}

/// Advertised collision bound `msg_len / 2^l`.
pub fn axu_epsilon(msg_len_bits: u64, l: u32) -> Result<f64, Gf2Error> {
    if l < 2 {
        return Err(Gf2Error::TagLength(l as usize));
    }
    if msg_len_bits == 0 {
        return Err(Gf2Error::EmptyMessage);
    }
    Ok(msg_len_bits as f64 / 2f64.powi(l as i32))
}

/// Division hashing with a byte-at-a-time reduction table.
///
/// Keys of degree 8..=64 use the table; others fall back to bit-serial
/// reduction (`l < 8`) or generic polynomial division (`l > 64`).
#[derive(Clone, Debug)]
pub struct DivisionHasher {
    l: usize,
    engine: Engine,
}

#[derive(Clone, Debug)]
enum Engine {
    Word {
        low: u64,
        mask: u64,
        table: Option<Box<[u64; 256]>>,
    },
    Generic(HashKey),
}

impl DivisionHasher {
    pub fn new(key: &HashKey) -> Self {
        let l = key.l;
        if l > 64 {
            return Self {
                l,
                engine: Engine::Generic(key.clone()),
            };
        }
        let low = key.low_coeffs.to_u64().expect("l <= 64");
        let mask = if l == 64 { u64::MAX } else { (1u64 << l) - 1 };
        let table = (l >= 8).then(|| {
            let mut table = Box::new([0u64; 256]);
            for (t, slot) in table.iter_mut().enumerate() {
                // t(x) * x^l mod p: feed the 8 bits of t into a zero register,
                // then shift by l zero bits.
                let mut r = 0u64;
                for i in (0..8).rev() {
                    r = step(r, (t >> i) & 1 == 1, l, low, mask);
                }
                for _ in 0..l {
                    r = step(r, false, l, low, mask);
                }
                *slot = r;
            }
            table
        });
        Self {
            l,
            engine: Engine::Word { low, mask, table },
        }
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn hash(&self, msg: &BitString) -> BitString {
        match &self.engine {
            Engine::Generic(key) => division_hash_reference(key, msg),
            Engine::Word { low, mask, table } => {
                let (l, low, mask) = (self.l, *low, *mask);
                let mut r = 0u64;
                let full = msg.len() / 8;
                let bytes = msg.as_bytes();
                match table {
                    Some(table) => {
                        let top_shift = l - 8;
                        for &b in &bytes[..full] {
                            let t = (r >> top_shift) as usize;
                            r = ((r << 8) & mask) ^ b as u64 ^ table[t];
                        }
                    }
                    None => {
                        for &b in &bytes[..full] {
                            for i in (0..8).rev() {
                                r = step(r, (b >> i) & 1 == 1, l, low, mask);
                            }
                        }
                    }
                }
                for i in full * 8..msg.len() {
                    r = step(r, msg.bit(i), l, low, mask);
                }
                // Multiply by x^l.
                for _ in 0..l {
                    r = step(r, false, l, low, mask);
                }
                BitString::from_u64(r, l)
            }
        }
    }
}

/// `r * x + bit (mod p)` for an `l`-bit register.
#[inline]
fn step(r: u64, bit: bool, l: usize, low: u64, mask: u64) -> u64 {
    let top = (r >> (l - 1)) & 1 == 1;
    let mut next = ((r << 1) & mask) | bit as u64;
    if top {
        next ^= low;
    }
    next
}
