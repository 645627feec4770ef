//! Wire format, big-endian throughout:
//!
//! ```text
//! MSG_BITS u32 | MSG ceil(MSG_BITS/8) bytes | L_TAG u16 | CHAIN_LEN u8 |
//! CHAIN_LEN x ( SIGNER u8 | NRECIP u8 |
//!               NRECIP x ( RECIP u8 | ENC_FN ceil(l/8) | ENC_VAL ceil(l/8) ) )
//! ```
//!
//! Recipients are strictly ascending and padding bits are zero, so every
//! packet has exactly one encoding.

use super::{PartialSignature, QsmError, SignatureMatrix, SignedPacket};
use crate::gf2hash::BitString;
use crate::keystore::NodeId;

fn malformed(msg: impl Into<String>) -> QsmError {
    QsmError::MalformedFrame(msg.into())
}

/// Encoded size of a packet with a `msg_bits`-bit message, tag length `l`
/// and the given recipient count per chain entry.
pub fn frame_len(msg_bits: usize, l: usize, recipients_per_matrix: &[usize]) -> usize {
    let field = l.div_ceil(8);
    let chain: usize = recipients_per_matrix
        .iter()
        .map(|r| 2 + r * (1 + 2 * field))
        .sum();
    4 + msg_bits.div_ceil(8) + 2 + 1 + chain
}

pub fn encode_packet(p: &SignedPacket) -> Result<Vec<u8>, QsmError> {
    let first = p
        .chain
        .first()
        .and_then(|s| s.parts.first())
        .ok_or_else(|| malformed("empty chain"))?;
    let l = first.enc_hash_fn.len();
    let msg_bits = u32::try_from(p.message.len()).map_err(|_| malformed("message too long"))?;
    let l_tag = u16::try_from(l).map_err(|_| malformed("tag too long"))?;
    let chain_len = u8::try_from(p.chain.len()).map_err(|_| malformed("chain too long"))?;

    let counts: Vec<usize> = p.chain.iter().map(|s| s.parts.len()).collect();
    let mut out = Vec::with_capacity(frame_len(p.message.len(), l, &counts));
    out.extend_from_slice(&msg_bits.to_be_bytes());
    out.extend_from_slice(p.message.as_bytes());
    out.extend_from_slice(&l_tag.to_be_bytes());
    out.push(chain_len);
    for s in &p.chain {
        let nrecip = u8::try_from(s.parts.len()).map_err(|_| malformed("too many recipients"))?;
        if nrecip == 0 {
            return Err(malformed("matrix without recipients"));
        }
        out.push(s.signer.0);
        out.push(nrecip);
        let mut prev: Option<NodeId> = None;
        for part in &s.parts {
            if prev.is_some_and(|p| p >= part.recipient) || part.recipient == s.signer {
                return Err(malformed(
                    "recipients must be ascending and exclude the signer",
                ));
            }
            prev = Some(part.recipient);
            if part.enc_hash_fn.len() != l || part.enc_hash_val.len() != l {
                return Err(malformed("field length differs from frame tag length"));
            }
            out.push(part.recipient.0);
            out.extend_from_slice(part.enc_hash_fn.as_bytes());
            out.extend_from_slice(part.enc_hash_val.as_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], QsmError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| malformed(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, QsmError> {
        Ok(self.take(1)?[0])
    }

    fn bits(&mut self, len: usize) -> Result<BitString, QsmError> {
        let bytes = self.take(len.div_ceil(8))?.to_vec();
        BitString::from_bytes_with_len(bytes, len).map_err(|e| malformed(e.to_string()))
    }
}

pub fn decode_packet(bytes: &[u8]) -> Result<SignedPacket, QsmError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let msg_bits = u32::from_be_bytes(r.take(4)?.try_into().expect("4 bytes")) as usize;
    let message = r.bits(msg_bits)?;
    let l = u16::from_be_bytes(r.take(2)?.try_into().expect("2 bytes")) as usize;
    if l < 2 {
        return Err(malformed(format!("tag length {l}")));
    }
    let chain_len = r.u8()?;
    if chain_len == 0 {
        return Err(malformed("empty chain"));
    }
    let mut chain = Vec::with_capacity(chain_len as usize);
    for _ in 0..chain_len {
        let signer = NodeId(r.u8()?);
        let nrecip = r.u8()?;
        if nrecip == 0 {
            return Err(malformed("matrix without recipients"));
        }
        let mut parts = Vec::with_capacity(nrecip as usize);
        for _ in 0..nrecip {
            let recipient = NodeId(r.u8()?);
            if recipient == signer
                || parts
                    .last()
                    .is_some_and(|p: &PartialSignature| p.recipient >= recipient)
            {
                return Err(malformed(
                    "recipients must be ascending and exclude the signer",
                ));
            }
            let enc_hash_fn = r.bits(l)?;
            let enc_hash_val = r.bits(l)?;
            parts.push(PartialSignature {
                recipient,
                enc_hash_fn,
                enc_hash_val,
            });
        }
        chain.push(SignatureMatrix { signer, parts });
    }
    if r.pos != bytes.len() {
        return Err(malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(SignedPacket { message, chain })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn matrix(signer: u8, recips: &[u8], l: usize, rng: &mut ChaCha20Rng) -> SignatureMatrix {
        SignatureMatrix {
            signer: NodeId(signer),
            parts: recips
                .iter()
                .map(|&r| PartialSignature {
                    recipient: NodeId(r),
                    enc_hash_fn: BitString::random(l, rng),
                    enc_hash_val: BitString::random(l, rng),
                })
                .collect(),
        }
    }

    #[test]
    fn paper_sized_frame_length() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let p = SignedPacket {
            message: BitString::random(800_000, &mut rng),
            chain: vec![
                matrix(0, &[1, 2, 3, 4], 54, &mut rng),
                matrix(2, &[1, 3, 4], 54, &mut rng),
            ],
        };
        let bytes = encode_packet(&p).unwrap();
        // 4 + 100000 + 2 + 1 + (2 + 4*15) + (2 + 3*15)
        assert_eq!(bytes.len(), 100_116);
        assert_eq!(frame_len(800_000, 54, &[4, 3]), 100_116);
        assert_eq!(decode_packet(&bytes).unwrap(), p);
    }

    #[test]
    fn small_frame_bytes() {
        let p = SignedPacket {
            message: "101".parse().unwrap(),
            chain: vec![SignatureMatrix {
                signer: NodeId(0),
                parts: vec![PartialSignature {
                    recipient: NodeId(1),
                    enc_hash_fn: "01".parse().unwrap(),
                    enc_hash_val: "10".parse().unwrap(),
                }],
            }],
        };
        let bytes = encode_packet(&p).unwrap();
        assert_eq!(
            bytes,
            vec![
                0,
                0,
                0,
                3,
                0b1010_0000,
                0,
                2,
                1,
                0,
                1,
                1,
                0b0100_0000,
                0b1000_0000
            ]
        );
    }

    #[test]
    fn rejects_bad_frames() {
        let empty = SignedPacket {
            message: "1".parse().unwrap(),
            chain: vec![],
        };
        assert!(matches!(
            encode_packet(&empty),
            Err(QsmError::MalformedFrame(_))
        ));
        // message "1", l = 2, zero chain entries
        let raw = [0, 0, 0, 1, 0x80, 0, 2, 0];
        assert!(matches!(
            decode_packet(&raw),
            Err(QsmError::MalformedFrame(_))
        ));

        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let p = SignedPacket {
            message: BitString::random(13, &mut rng),
            chain: vec![matrix(0, &[1, 2], 9, &mut rng)],
        };
        let good = encode_packet(&p).unwrap();
        for cut in 0..good.len() {
            assert!(decode_packet(&good[..cut]).is_err(), "prefix {cut}");
        }
        let mut long = good.clone();
        long.push(0);
        assert!(decode_packet(&long).is_err());
        let mut pad = good.clone();
        pad[5] |= 1; // low bit of second message byte is padding
        assert!(decode_packet(&pad).is_err());
        let mut order = good;
        let second_recip = 4 + 2 + 2 + 1 + 2 + 1 + 4;
        order[second_recip] = 1;
        assert!(decode_packet(&order).is_err());
    }
}
