//! Pairwise key pools and one-time-pad primitives.
//!
//! Every pair of nodes shares a finite pool of secret bits. Pools are
//! consumed strictly front to back and a drawn segment is never issued
//! again. Each draw is filed under a context label that both endpoints can
//! compute on their own, so a verifier finds the signer's bits without any
//! extra communication.
//!
//! Pool contents are a ChaCha20 keystream derived from the scenario seed and
//! the link, generated lazily: a 2.4e8-bit pool costs nothing until drawn.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::gf2hash::BitString;
use crate::metrics::ResourceLedger;

/// Pool size between the commander and each lieutenant in the five-node setup.
pub const COMMANDER_LINK_BITS: u64 = 238_950_000;
/// Pool size between two lieutenants in the five-node setup.
pub const LIEUTENANT_LINK_BITS: u64 = 22_455;

#[derive(
    Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct NodeId(pub u8);

impl NodeId {
    pub const COMMANDER: NodeId = NodeId(0);

    pub fn is_commander(self) -> bool {
        self == Self::COMMANDER
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "N{}", self.0)
    }
}

/// An unordered pair of distinct nodes, stored with `a < b`.
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct LinkId {
    a: NodeId,
    b: NodeId,
}

impl LinkId {
    pub fn new(x: NodeId, y: NodeId) -> Result<Self, KeyError> {
        match x.cmp(&y) {
            std::cmp::Ordering::Less => Ok(Self { a: x, b: y }),
            std::cmp::Ordering::Greater => Ok(Self { a: y, b: x }),
            std::cmp::Ordering::Equal => Err(KeyError::SelfLink(x)),
        }
    }

    pub fn a(self) -> NodeId {
        self.a
    }

    pub fn b(self) -> NodeId {
        self.b
    }

    pub fn touches(self, node: NodeId) -> bool {
        self.a == node || self.b == node
    }

    pub fn is_commander_link(self) -> bool {
        self.a.is_commander()
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.a, self.b)
    }
}

impl Serialize for LinkId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Canonical name of one key draw, e.g. `sig/N1>N3/0.1/fn`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct ContextLabel(String);

impl ContextLabel {
    pub fn new(label: impl Into<String>) -> Self {
        Self(label.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ContextLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KeyError {
    #[error("key-exhausted on link {link}: short by {shortfall} bits")]
    Exhausted { link: LinkId, shortfall: u64 },
    #[error("otp-length-mismatch: data {data} bits, key {key} bits")]
    OtpLengthMismatch { data: usize, key: usize },
    #[error("draw of zero bits")]
    EmptyDraw,
    #[error("node {0} cannot share a key with itself")]
    SelfLink(NodeId),
    #[error("no pool for link {0}")]
    NoSuchLink(LinkId),
    #[error("access-denied: {reader} may not read pool {link}")]
    AccessDenied { reader: String, link: LinkId },
}

/// A contiguous run of pool bits handed out by one draw.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct KeySegment {
    pub link: LinkId,
    pub offset_bits: u64,
    pub bits: BitString,
}

impl KeySegment {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// A finite, consumable reservoir of bits shared by the two ends of a link.
#[derive(Clone, Debug)]
pub struct KeyPool {
    link: LinkId,
    capacity_bits: u64,
    cursor_bits: u64,
    material: ChaCha20Rng,
}

impl KeyPool {
    pub fn new(link: LinkId, capacity_bits: u64, seed: u64) -> Self {
        let mut material = ChaCha20Rng::seed_from_u64(seed);
        material.set_stream(((link.a.0 as u64) << 8) | link.b.0 as u64);
        Self {
            link,
            capacity_bits,
            cursor_bits: 0,
            material,
        }
    }

    pub fn link(&self) -> LinkId {
        self.link
    }

    pub fn capacity_bits(&self) -> u64 {
        self.capacity_bits
    }

    pub fn cursor_bits(&self) -> u64 {
        self.cursor_bits
    }

    pub fn remaining_bits(&self) -> u64 {
        self.capacity_bits - self.cursor_bits
    }

    /// Hands out the next `n_bits` and charges them to the link.
    pub fn draw(
        &mut self,
        n_bits: usize,
        ledger: &mut ResourceLedger,
    ) -> Result<KeySegment, KeyError> {
        if n_bits == 0 {
            return Err(KeyError::EmptyDraw);
        }
        let n = n_bits as u64;
        if n > self.remaining_bits() {
            return Err(KeyError::Exhausted {
                link: self.link,
                shortfall: n - self.remaining_bits(),
            });
        }
        let offset = self.cursor_bits;
        let bits = self.material_bits(offset, n_bits);
        self.cursor_bits += n;
        ledger.charge_key_bits(self.link, n);
        Ok(KeySegment {
            link: self.link,
            offset_bits: offset,
            bits,
        })
    }

    fn material_bits(&self, offset: u64, len: usize) -> BitString {
        let mut rng = self.material.clone();
        rng.set_word_pos((offset / 32) as u128);
        let skip = (offset % 32) as usize;
        let words = (skip + len).div_ceil(32);
        let mut bytes = Vec::with_capacity(words * 4);
        for _ in 0..words {
            bytes.extend_from_slice(&rng.next_u32().to_be_bytes());
        }
        BitString::from_bytes(bytes).slice(skip, len)
    }
}

/// Pool sizes by link class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolCapacities {
    pub commander_link_bits: u64,
    pub lieutenant_link_bits: u64,
}

impl Default for PoolCapacities {
    fn default() -> Self {
        Self {
            commander_link_bits: COMMANDER_LINK_BITS,
            lieutenant_link_bits: LIEUTENANT_LINK_BITS,
        }
    }
}

impl PoolCapacities {
    pub fn for_link(&self, link: LinkId) -> u64 {
        if link.is_commander_link() {
            self.commander_link_bits
        } else {
            self.lieutenant_link_bits
        }
    }
}

/// All pools of an `n`-node network plus the label index of every draw.
#[derive(Clone, Debug)]
pub struct Keystore {
    n: usize,
    pools: BTreeMap<LinkId, KeyPool>,
    records: BTreeMap<(LinkId, ContextLabel), Vec<KeySegment>>,
}

impl Keystore {
    /// A full mesh over nodes `0..n`.
    pub fn new(n: usize, capacities: PoolCapacities, seed: u64) -> Self {
        Self::with_capacity_fn(n, seed, |link| capacities.for_link(link))
    }

    pub fn with_capacity_fn(n: usize, seed: u64, capacity: impl Fn(LinkId) -> u64) -> Self {
        assert!(n <= 256, "node ids are single bytes");
        let mut pools = BTreeMap::new();
        for a in 0..n {
            for b in a + 1..n {
                let link = LinkId::new(NodeId(a as u8), NodeId(b as u8)).expect("a < b");
                pools.insert(link, KeyPool::new(link, capacity(link), seed));
            }
        }
        Self {
            n,
            pools,
            records: BTreeMap::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pool(&self, link: LinkId) -> Option<&KeyPool> {
        self.pools.get(&link)
    }

    pub fn pools(&self) -> impl Iterator<Item = &KeyPool> {
        self.pools.values()
    }

    /// Draws on behalf of `actor`, which must be an endpoint of `link`.
    pub fn draw(
        &mut self,
        actor: NodeId,
        link: LinkId,
        n_bits: usize,
        label: &ContextLabel,
        ledger: &mut ResourceLedger,
    ) -> Result<KeySegment, KeyError> {
        if !link.touches(actor) {
            return Err(KeyError::AccessDenied {
                reader: actor.to_string(),
                link,
            });
        }
        self.draw_unchecked(link, n_bits, label, ledger)
    }

    fn draw_unchecked(
        &mut self,
        link: LinkId,
        n_bits: usize,
        label: &ContextLabel,
        ledger: &mut ResourceLedger,
    ) -> Result<KeySegment, KeyError> {
        let pool = self
            .pools
            .get_mut(&link)
            .ok_or(KeyError::NoSuchLink(link))?;
        let seg = pool.draw(n_bits, ledger)?;
        self.records
            .entry((link, label.clone()))
            .or_default()
            .push(seg.clone());
        Ok(seg)
    }

    /// Every segment drawn under `label` on `link`, oldest first.
    pub fn resolve(
        &self,
        reader: NodeId,
        link: LinkId,
        label: &ContextLabel,
    ) -> Result<&[KeySegment], KeyError> {
        if !link.touches(reader) {
            return Err(KeyError::AccessDenied {
                reader: reader.to_string(),
                link,
            });
        }
        Ok(self.lookup(link, label))
    }

    fn lookup(&self, link: LinkId, label: &ContextLabel) -> &[KeySegment] {
        self.records
            .get(&(link, label.clone()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// `(offset, len)` of every draw on `link`, by offset.
    pub fn drawn_intervals(&self, link: LinkId) -> Vec<(u64, u64)> {
        let mut out: Vec<(u64, u64)> = self
            .records
            .iter()
            .filter(|((l, _), _)| *l == link)
            .flat_map(|(_, segs)| segs.iter().map(|s| (s.offset_bits, s.len() as u64)))
            .collect();
        out.sort_unstable();
        out
    }

    /// Key access for a coalition of Byzantine nodes: only links with at
    /// least one endpoint in `holders` are visible.
    pub fn adversary_view(&mut self, holders: &BTreeSet<NodeId>) -> AdversaryKeys<'_> {
        AdversaryKeys {
            keystore: self,
            holders: holders.clone(),
        }
    }
}

/// Restricted keystore handle given to adversary code.
pub struct AdversaryKeys<'a> {
    keystore: &'a mut Keystore,
    holders: BTreeSet<NodeId>,
}

impl AdversaryKeys<'_> {
    pub fn holders(&self) -> &BTreeSet<NodeId> {
        &self.holders
    }

    fn check(&self, link: LinkId) -> Result<(), KeyError> {
        if self.holders.iter().any(|&h| link.touches(h)) {
            Ok(())
        } else {
            Err(KeyError::AccessDenied {
                reader: format!(
                    "adversary{:?}",
                    self.holders.iter().map(|n| n.0).collect::<Vec<_>>()
                ),
                link,
            })
        }
    }

    pub fn resolve(&self, link: LinkId, label: &ContextLabel) -> Result<&[KeySegment], KeyError> {
        self.check(link)?;
        Ok(self.keystore.lookup(link, label))
    }

    pub fn draw(
        &mut self,
        link: LinkId,
        n_bits: usize,
        label: &ContextLabel,
        ledger: &mut ResourceLedger,
    ) -> Result<KeySegment, KeyError> {
        self.check(link)?;
        self.keystore.draw_unchecked(link, n_bits, label, ledger)
    }
}

/// Key operations shared by the full keystore and the adversary's view.
pub trait KeyAccess {
    fn draw(
        &mut self,
        actor: NodeId,
        link: LinkId,
        n_bits: usize,
        label: &ContextLabel,
        ledger: &mut ResourceLedger,
    ) -> Result<KeySegment, KeyError>;

    fn resolve(
        &self,
        reader: NodeId,
        link: LinkId,
        label: &ContextLabel,
    ) -> Result<&[KeySegment], KeyError>;
}

impl KeyAccess for Keystore {
    fn draw(
        &mut self,
        actor: NodeId,
        link: LinkId,
        n_bits: usize,
        label: &ContextLabel,
        ledger: &mut ResourceLedger,
    ) -> Result<KeySegment, KeyError> {
        Keystore::draw(self, actor, link, n_bits, label, ledger)
    }

    fn resolve(
        &self,
        reader: NodeId,
        link: LinkId,
        label: &ContextLabel,
    ) -> Result<&[KeySegment], KeyError> {
        Keystore::resolve(self, reader, link, label)
    }
}

/// The coalition acts as one party: any holder may use any visible pool.
impl KeyAccess for AdversaryKeys<'_> {
    fn draw(
        &mut self,
        _actor: NodeId,
        link: LinkId,
        n_bits: usize,
        label: &ContextLabel,
        ledger: &mut ResourceLedger,
    ) -> Result<KeySegment, KeyError> {
        AdversaryKeys::draw(self, link, n_bits, label, ledger)
    }

    fn resolve(
        &self,
        _reader: NodeId,
        link: LinkId,
        label: &ContextLabel,
    ) -> Result<&[KeySegment], KeyError> {
        AdversaryKeys::resolve(self, link, label)
    }
}

/// XOR of `data` with the segment's bits.
pub fn otp(data: &BitString, key: &KeySegment) -> Result<BitString, KeyError> {
    otp_bits(data, &key.bits)
}

pub fn otp_bits(data: &BitString, key: &BitString) -> Result<BitString, KeyError> {
    data.xor(key).map_err(|_| KeyError::OtpLengthMismatch {
        data: data.len(),
        key: key.len(),
    })
}
