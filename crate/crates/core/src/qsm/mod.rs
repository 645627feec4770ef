//! Multiparty signed messages.
//!
//! A signer holding message `M` picks, for every recipient `r`, a fresh
//! division-hash key `p_r`, computes the tag `h_{p_r}(M)` and one-time-pads
//! both the key description and the tag with `2l` bits from the pool it
//! shares with `r`. The per-recipient pairs form a signature matrix; packets
//! carry the message and the chain of matrices added along the way.

mod frame;

use std::collections::BTreeSet;

use rand::RngCore;

use crate::gf2hash::{gen_hash_key, BitString, DivisionHasher, Gf2Error, HashKey};
use crate::keystore::{otp_bits, ContextLabel, KeyAccess, KeyError, LinkId, NodeId};
use crate::metrics::ResourceLedger;

pub use frame::{decode_packet, encode_packet, frame_len};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QsmError {
    #[error("no-recipients")]
    NoRecipients,
    #[error("signer {0} cannot sign for itself")]
    SignerIsRecipient(NodeId),
    #[error("no-partial-signature for {verifier} in chain entry {index}")]
    NoPartialSignature { verifier: NodeId, index: usize },
    #[error("malformed-signature: {0}")]
    MalformedSignature(String),
    #[error("malformed-frame: {0}")]
    MalformedFrame(String),
    #[error(transparent)]
    Key(#[from] KeyError),
    #[error(transparent)]
    Hash(#[from] Gf2Error),
}

/// One recipient's entry: the encrypted key description and encrypted tag.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct PartialSignature {
    pub recipient: NodeId,
    pub enc_hash_fn: BitString,
    pub enc_hash_val: BitString,
}

/// All partial signatures one signer attached, ordered by recipient.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct SignatureMatrix {
    pub signer: NodeId,
    pub parts: Vec<PartialSignature>,
}

impl SignatureMatrix {
    pub fn recipients(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.parts.iter().map(|p| p.recipient)
    }

    pub fn part_for(&self, r: NodeId) -> Option<&PartialSignature> {
        self.parts
            .binary_search_by_key(&r, |p| p.recipient)
            .ok()
            .map(|i| &self.parts[i])
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct SignedPacket {
    pub message: BitString,
    pub chain: Vec<SignatureMatrix>,
}

impl SignedPacket {
    pub fn signers(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.chain.iter().map(|s| s.signer)
    }

    pub fn has_signer(&self, node: NodeId) -> bool {
        self.signers().any(|s| s == node)
    }

    /// Signers preceding chain entry `index`.
    pub fn prefix(&self, index: usize) -> Vec<NodeId> {
        self.chain[..index].iter().map(|s| s.signer).collect()
    }

    /// Signers are pairwise distinct and no matrix addresses a node that
    /// signed at or before it.
    pub fn chain_is_consistent(&self) -> bool {
        let mut seen = BTreeSet::new();
        for s in &self.chain {
            if !seen.insert(s.signer) {
                return false;
            }
            if s.recipients().any(|r| seen.contains(&r)) {
                return false;
            }
        }
        true
    }
}

/// Label under which `signer` draws the key for `recipient` when signing
/// after the signers in `prefix`.
pub fn sig_label(signer: NodeId, recipient: NodeId, prefix: &[NodeId]) -> ContextLabel {
    let path: Vec<String> = prefix.iter().map(|n| n.0.to_string()).collect();
    ContextLabel::new(format!(
        "sig/{}>{}/{}",
        signer.0,
        recipient.0,
        path.join(".")
    ))
}

/// Encrypts `key` and `tag` under the `2l`-bit segment `pad` (first half
/// pads the key description, second half the tag).
pub fn seal_partial(
    recipient: NodeId,
    key: &HashKey,
    tag: &BitString,
    pad: &BitString,
) -> Result<PartialSignature, QsmError> {
    let l = key.l();
    if pad.len() != 2 * l || tag.len() != l {
        return Err(QsmError::MalformedSignature(format!(
            "pad {} bits, tag {} bits, l = {l}",
            pad.len(),
            tag.len()
        )));
    }
    Ok(PartialSignature {
        recipient,
        enc_hash_fn: otp_bits(key.low_coeffs(), &pad.slice(0, l))?,
        enc_hash_val: otp_bits(tag, &pad.slice(l, l))?,
    })
}

/// Undoes [`seal_partial`] and checks the tag against `msg`.
pub fn open_partial(
    part: &PartialSignature,
    pad: &BitString,
    msg: &BitString,
) -> Result<bool, QsmError> {
    let l = part.enc_hash_fn.len();
    if part.enc_hash_val.len() != l || pad.len() != 2 * l {
        return Err(QsmError::MalformedSignature(format!(
            "fields {}/{} bits, pad {} bits",
            l,
            part.enc_hash_val.len(),
            pad.len()
        )));
    }
    let low = otp_bits(&part.enc_hash_fn, &pad.slice(0, l))?;
    let tag = otp_bits(&part.enc_hash_val, &pad.slice(l, l))?;
    let key =
        HashKey::from_low_coeffs(low).map_err(|e| QsmError::MalformedSignature(e.to_string()))?;
    Ok(DivisionHasher::new(&key).hash(msg) == tag)
}

/// Signs `msg` for every recipient. `prefix` lists the signers already in
/// the chain and becomes part of each key label.
#[allow(clippy::too_many_arguments)]
pub fn qsm_sign<K: KeyAccess + ?Sized, R: RngCore + ?Sized>(
    msg: &BitString,
    signer: NodeId,
    recipients: &BTreeSet<NodeId>,
    prefix: &[NodeId],
    l: usize,
    keystore: &mut K,
    ledger: &mut ResourceLedger,
    rng: &mut R,
) -> Result<SignatureMatrix, QsmError> {
    if recipients.is_empty() {
        return Err(QsmError::NoRecipients);
    }
    if recipients.contains(&signer) {
        return Err(QsmError::SignerIsRecipient(signer));
    }
    let mut parts = Vec::with_capacity(recipients.len());
    for &r in recipients {
        let link = LinkId::new(signer, r)?;
        let pad = keystore.draw(signer, link, 2 * l, &sig_label(signer, r, prefix), ledger)?;
        let key = gen_hash_key(l, rng)?;
        let tag = key.hasher().hash(msg);
        ledger.charge_hash_ops(1);
        ledger.charge_key_strings(1);
        parts.push(seal_partial(r, &key, &tag, &pad.bits)?);
    }
    Ok(SignatureMatrix { signer, parts })
}

/// Checks the partial signature addressed to `verifier` in chain entry
/// `chain_index`. Every segment the signer filed under the matching label
/// is tried, since a signer may legitimately sign several messages under
/// one chain prefix.
pub fn qsm_verify<K: KeyAccess + ?Sized>(
    packet: &SignedPacket,
    chain_index: usize,
    verifier: NodeId,
    keystore: &K,
) -> Result<bool, QsmError> {
    let matrix = packet
        .chain
        .get(chain_index)
        .ok_or(QsmError::NoPartialSignature {
            verifier,
            index: chain_index,
        })?;
    let part = matrix
        .part_for(verifier)
        .ok_or(QsmError::NoPartialSignature {
            verifier,
            index: chain_index,
        })?;
    let l = part.enc_hash_fn.len();
    if l < 2 || part.enc_hash_val.len() != l {
        return Err(QsmError::MalformedSignature(format!(
            "field lengths {} and {}",
            l,
            part.enc_hash_val.len()
        )));
    }
    let link = LinkId::new(matrix.signer, verifier)?;
    let label = sig_label(matrix.signer, verifier, &packet.prefix(chain_index));
    for seg in keystore.resolve(verifier, link, &label)? {
        if seg.len() == 2 * l && open_partial(part, &seg.bits, &packet.message)? {
            return Ok(true);
        }
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keystore::{Keystore, PoolCapacities};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    #[test]
    fn sealed_partial_example() {
        let key = HashKey::new(bs("11")).unwrap();
        let tag = key.hasher().hash(&bs("1"));
        assert_eq!(tag, bs("11"));
        let part = seal_partial(NodeId(1), &key, &tag, &bs("1001")).unwrap();
        assert_eq!(part.enc_hash_fn, bs("01"));
        assert_eq!(part.enc_hash_val, bs("10"));
        assert!(open_partial(&part, &bs("1001"), &bs("1")).unwrap());
        assert!(!open_partial(&part, &bs("1001"), &bs("10")).unwrap());
    }

    fn setup(n: usize) -> (Keystore, ResourceLedger, ChaCha20Rng) {
        (
            Keystore::new(n, PoolCapacities::default(), 11),
            ResourceLedger::default(),
            ChaCha20Rng::seed_from_u64(11),
        )
    }

    #[test]
    fn commander_signature_costs() {
        let (mut ks, mut led, mut rng) = setup(5);
        let msg = BitString::random(1000, &mut rng);
        let rcpt: BTreeSet<NodeId> = (1..5).map(NodeId).collect();
        let s = qsm_sign(&msg, NodeId(0), &rcpt, &[], 54, &mut ks, &mut led, &mut rng).unwrap();
        assert_eq!(s.parts.len(), 4);
        assert_eq!(led.hash_ops, 4);
        assert_eq!(led.key_strings, 4);
        assert_eq!(led.total_key_bits(), 432);
        for r in 1..5 {
            let link = LinkId::new(NodeId(0), NodeId(r)).unwrap();
            assert_eq!(led.key_bits(link), 108);
        }
        let packet = SignedPacket {
            message: msg,
            chain: vec![s],
        };
        for r in 1..5 {
            assert!(qsm_verify(&packet, 0, NodeId(r), &ks).unwrap());
        }
        let mut bad = packet.clone();
        bad.message.flip(0);
        assert!(!qsm_verify(&bad, 0, NodeId(1), &ks).unwrap());
    }

    #[test]
    fn sign_guards() {
        let (mut ks, mut led, mut rng) = setup(3);
        let msg = bs("1");
        let err = qsm_sign(
            &msg,
            NodeId(0),
            &BTreeSet::new(),
            &[],
            8,
            &mut ks,
            &mut led,
            &mut rng,
        );
        assert_eq!(err, Err(QsmError::NoRecipients));
        let own = BTreeSet::from([NodeId(0)]);
        assert!(qsm_sign(&msg, NodeId(0), &own, &[], 8, &mut ks, &mut led, &mut rng).is_err());
    }

    #[test]
    fn verify_guards() {
        let (mut ks, mut led, mut rng) = setup(4);
        let rcpt = BTreeSet::from([NodeId(1), NodeId(2)]);
        let s = qsm_sign(
            &bs("101"),
            NodeId(0),
            &rcpt,
            &[],
            8,
            &mut ks,
            &mut led,
            &mut rng,
        )
        .unwrap();
        let mut packet = SignedPacket {
            message: bs("101"),
            chain: vec![s],
        };
        assert_eq!(
            qsm_verify(&packet, 0, NodeId(3), &ks),
            Err(QsmError::NoPartialSignature {
                verifier: NodeId(3),
                index: 0
            })
        );
        packet.chain[0].parts[0].enc_hash_val = bs("1");
        assert!(matches!(
            qsm_verify(&packet, 0, NodeId(1), &ks),
            Err(QsmError::MalformedSignature(_))
        ));
    }

    #[test]
    fn exhausted_pool_propagates() {
        let mut ks = Keystore::with_capacity_fn(2, 1, |_| 10);
        let mut led = ResourceLedger::default();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let rcpt = BTreeSet::from([NodeId(1)]);
        let err = qsm_sign(
            &bs("1"),
            NodeId(0),
            &rcpt,
            &[],
            8,
            &mut ks,
            &mut led,
            &mut rng,
        );
        assert!(matches!(
            err,
            Err(QsmError::Key(KeyError::Exhausted { shortfall: 6, .. }))
        ));
    }

    #[test]
    fn labels_separate_chain_positions() {
        let a = sig_label(NodeId(2), NodeId(3), &[NodeId(0)]);
        let b = sig_label(NodeId(2), NodeId(3), &[NodeId(0), NodeId(1)]);
        assert_ne!(a, b);
        assert_eq!(a.as_str(), "sig/2>3/0");
    }

    #[test]
    fn chain_consistency() {
        let m = |s: u8, r: &[u8]| SignatureMatrix {
            signer: NodeId(s),
            parts: r
                .iter()
                .map(|&x| PartialSignature {
                    recipient: NodeId(x),
                    enc_hash_fn: bs("00"),
                    enc_hash_val: bs("00"),
                })
                .collect(),
        };
        let ok = SignedPacket {
            message: bs("1"),
            chain: vec![m(0, &[1, 2, 3]), m(1, &[2, 3])],
        };
        assert!(ok.chain_is_consistent());
        let back = SignedPacket {
            message: bs("1"),
            chain: vec![m(0, &[1, 2, 3]), m(1, &[0, 2])],
        };
        assert!(!back.chain_is_consistent());
        let twice = SignedPacket {
            message: bs("1"),
            chain: vec![m(0, &[1]), m(0, &[2])],
        };
        assert!(!twice.chain_is_consistent());
    }
}
