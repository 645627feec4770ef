//! Polynomial arithmetic over GF(2) and the division hash family.
//!
//! A key is a random monic irreducible polynomial `p` of degree `l`; the tag
//! of a message `M` is `M(x) * x^l mod p(x)`. For two distinct messages of
//! the same length `L`, the tags collide (up to any fixed XOR offset) for at
//! most `(L + l) / l` of the keys, which gives the familiar `~ L / 2^l`
//! forgery bound.

mod bitstring;
mod division;
mod poly;

pub use bitstring::BitString;
pub use division::{
    axu_epsilon, division_hash, division_hash_reference, gen_hash_key, DivisionHasher, HashKey,
};
pub use poly::{
    is_irreducible, is_irreducible_squaring, is_irreducible_trial, poly_mod, GF2Poly,
    TRIAL_DIVISION_MAX_DEGREE,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Gf2Error {
    #[error("zero-modulus")]
    ZeroModulus,
    #[error("degenerate-degree")]
    DegenerateDegree,
    #[error("sampling-exhausted: no irreducible polynomial of degree {0} found")]
    SamplingExhausted(usize),
    #[error("tag length {0} is below the minimum of 2")]
    TagLength(usize),
    #[error("polynomial is reducible")]
    Reducible,
    #[error("message length must be at least one bit")]
    EmptyMessage,
    #[error("bit length mismatch: expected {expected}, got {actual}")]
    BitLength { expected: usize, actual: usize },
    #[error("non-zero padding bits")]
    NonZeroPadding,
    #[error("invalid bit character {0:?}")]
    InvalidBitChar(char),
    #[error("malformed hash key encoding")]
    MalformedKey,
}
