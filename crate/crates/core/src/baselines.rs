//! Reference protocols for resource comparison: three-party QSM, QDS and
//! the non-repudiable modified QSM, plus a message-flow enumerator for the
//! QDS-based QBA protocol.
//!
//! Node 0 is Alice (sender), node 1 Bob (receiver), node 2 Charlie
//! (verifier).

use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;
use serde::Serialize;

use crate::gf2hash::{gen_hash_key, BitString, HashKey};
use crate::keystore::{otp_bits, ContextLabel, Keystore, LinkId, NodeId};
use crate::metrics::{qba_complexity, validate_params, MetricsError, ResourceLedger, Totals};
use crate::qsm::{qsm_sign, qsm_verify, QsmError, SignedPacket};

pub const ALICE: NodeId = NodeId(0);
pub const BOB: NodeId = NodeId(1);
pub const CHARLIE: NodeId = NodeId(2);

/// Where a one-bit message flip is injected.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TamperPoint {
    #[default]
    None,
    /// The insecure Alice to Bob hop.
    AliceToBob,
    /// Bob alters the copy he passes on to Charlie.
    BobToCharlie,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TriPartyOutcome {
    pub protocol: String,
    pub bob_accepts: bool,
    pub charlie_accepts: bool,
    pub delta: Totals,
}

fn link(a: NodeId, b: NodeId) -> LinkId {
    LinkId::new(a, b).expect("distinct parties")
}

fn flip(msg: &BitString) -> BitString {
    let mut m = msg.clone();
    if !m.is_empty() {
        m.flip(0);
    }
    m
}

fn delta(before: &ResourceLedger, after: &ResourceLedger) -> Totals {
    let (a, b) = (before.totals(), after.totals());
    Totals {
        hash_ops: b.hash_ops - a.hash_ops,
        key_strings: b.key_strings - a.key_strings,
        auth_uses: b.auth_uses - a.auth_uses,
    }
}

fn apply(point: TamperPoint, at: TamperPoint, msg: &BitString) -> BitString {
    if point == at {
        flip(msg)
    } else {
        msg.clone()
    }
}

/// Plain QSM: Alice signs for Bob and Charlie, each verifies on his own.
pub fn qsm3_run<R: RngCore + ?Sized>(
    msg: &BitString,
    l: usize,
    keystore: &mut Keystore,
    ledger: &mut ResourceLedger,
    rng: &mut R,
    tamper: TamperPoint,
) -> Result<TriPartyOutcome, QsmError> {
    let before = ledger.clone();
    let rcpt = BTreeSet::from([BOB, CHARLIE]);
    let s = qsm_sign(msg, ALICE, &rcpt, &[], l, keystore, ledger, rng)?;
    let for_bob = SignedPacket {
        message: apply(tamper, TamperPoint::AliceToBob, msg),
        chain: vec![s.clone()],
    };
    let for_charlie = SignedPacket {
        message: msg.clone(),
        chain: vec![s],
    };
    Ok(TriPartyOutcome {
        protocol: "QSM".into(),
        bob_accepts: qsm_verify(&for_bob, 0, BOB, keystore)?,
        charlie_accepts: qsm_verify(&for_charlie, 0, CHARLIE, keystore)?,
        delta: delta(&before, ledger),
    })
}

/// Three-party QDS. Alice encrypts one hash key with `X_B xor X_C` and its
/// tag with `Y_B xor Y_C`. Bob hands the packet and his strings to Charlie
/// over the authenticated channel; Charlie checks, and only on success
/// returns his strings so Bob can check too.
pub fn qds_run<R: RngCore + ?Sized>(
    msg: &BitString,
    l: usize,
    keystore: &mut Keystore,
    ledger: &mut ResourceLedger,
    rng: &mut R,
    tamper: TamperPoint,
) -> Result<TriPartyOutcome, QsmError> {
    let before = ledger.clone();
    let ab = link(ALICE, BOB);
    let ac = link(ALICE, CHARLIE);
    let lab_b = ContextLabel::new("qds/B");
    let lab_c = ContextLabel::new("qds/C");
    // One key string = one 2l-bit pair (X, Y).
    let kb = keystore.draw(ALICE, ab, 2 * l, &lab_b, ledger)?.bits;
    let kc = keystore.draw(ALICE, ac, 2 * l, &lab_c, ledger)?.bits;
    ledger.charge_key_strings(2);
    let key = gen_hash_key(l, rng)?;
    let tag = key.hasher().hash(msg);
    ledger.charge_hash_ops(1);
    let x = otp_bits(&kb.slice(0, l), &kc.slice(0, l))?;
    let y = otp_bits(&kb.slice(l, l), &kc.slice(l, l))?;
    let enc_fn = otp_bits(key.low_coeffs(), &x)?;
    let enc_val = otp_bits(&tag, &y)?;

    let bob_msg = apply(tamper, TamperPoint::AliceToBob, msg);
    // Bob to Charlie, authenticated: packet plus (X_B, Y_B).
    let bob_kb = keystore.resolve(BOB, ab, &lab_b)?[0].bits.clone();
    let charlie_msg = apply(tamper, TamperPoint::BobToCharlie, &bob_msg);
    ledger.charge_auth_use();
    let charlie_kc = keystore.resolve(CHARLIE, ac, &lab_c)?[0].bits.clone();
    let check = |m: &BitString, kx: &BitString, ky: &BitString| -> Result<bool, QsmError> {
        let x = otp_bits(&kx.slice(0, l), &ky.slice(0, l))?;
        let y = otp_bits(&kx.slice(l, l), &ky.slice(l, l))?;
        let low = otp_bits(&enc_fn, &x)?;
        let t = otp_bits(&enc_val, &y)?;
        let k = HashKey::from_low_coeffs(low)?;
        Ok(k.hasher().hash(m) == t)
    };
    let charlie_accepts = check(&charlie_msg, &bob_kb, &charlie_kc)?;
    let bob_accepts = if charlie_accepts {
        // Charlie to Bob, authenticated: (X_C, Y_C).
        ledger.charge_auth_use();
        check(&bob_msg, &bob_kb, &charlie_kc)?
    } else {
        false
    };
    Ok(TriPartyOutcome {
        protocol: "QDS".into(),
        bob_accepts,
        charlie_accepts,
        delta: delta(&before, ledger),
    })
}

/// Modified QSM with non-repudiation: Bob verifies, relays to Charlie over
/// the authenticated channel and accepts only if Charlie reports success.
pub fn mqsm_run<R: RngCore + ?Sized>(
    msg: &BitString,
    l: usize,
    keystore: &mut Keystore,
    ledger: &mut ResourceLedger,
    rng: &mut R,
    tamper: TamperPoint,
) -> Result<TriPartyOutcome, QsmError> {
    let before = ledger.clone();
    let rcpt = BTreeSet::from([BOB, CHARLIE]);
    let s = qsm_sign(msg, ALICE, &rcpt, &[], l, keystore, ledger, rng)?;
    let at_bob = SignedPacket {
        message: apply(tamper, TamperPoint::AliceToBob, msg),
        chain: vec![s],
    };
    let bob_own = qsm_verify(&at_bob, 0, BOB, keystore)?;
    let mut charlie_accepts = false;
    if bob_own {
        let mut at_charlie = at_bob.clone();
        at_charlie.message = apply(tamper, TamperPoint::BobToCharlie, &at_bob.message);
        ledger.charge_auth_use();
        charlie_accepts = qsm_verify(&at_charlie, 0, CHARLIE, keystore)?;
        // Charlie's verdict back to Bob.
        ledger.charge_auth_use();
    }
    Ok(TriPartyOutcome {
        protocol: "mQSM".into(),
        bob_accepts: bob_own && charlie_accepts,
        charlie_accepts,
        delta: delta(&before, ledger),
    })
}

/// Componentwise order on resource triples: `a <= b` in every component
/// and `a != b`.
pub fn strictly_cheaper(a: &Totals, b: &Totals) -> bool {
    a.le(b) && a != b
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct QbaFlow {
    pub n: usize,
    pub m: usize,
    pub l: usize,
    /// QDS executions per layer, layer 1 first.
    pub layers: Vec<u64>,
    pub executions: u64,
    pub hash_ops: u64,
    pub key_strings: u64,
    pub auth_uses: u64,
    pub key_bits_per_link: BTreeMap<LinkId, u64>,
}

impl QbaFlow {
    /// Distinct per-link totals on commander links and lieutenant links.
    pub fn link_class_bits(&self) -> (Vec<u64>, Vec<u64>) {
        let led = ResourceLedger {
            key_bits_per_link: self.key_bits_per_link.clone(),
            ..ResourceLedger::default()
        };
        led.link_class_bits()
    }
}

/// Enumerates the QDS executions of QBA. Layer 1 has the commander sign to
/// lieutenant `i` with lieutenant `j` verifying. Layer `t >= 2` runs over
/// sequences of `t + 1` distinct lieutenants, the last three acting as
/// sender, receiver and verifier. Every execution spends one key string
/// (`2l` bits) on each of the sender-receiver and sender-verifier links.
pub fn qba_enumerate(n: usize, m: usize, l: usize) -> Result<QbaFlow, MetricsError> {
    validate_params(n, m)?;
    let lts: Vec<NodeId> = (1..n).map(|i| NodeId(i as u8)).collect();
    let unit = 2 * l as u64;
    let mut bits: BTreeMap<LinkId, u64> = BTreeMap::new();
    let mut layers = Vec::with_capacity(m);
    let mut seq: Vec<NodeId> = Vec::new();
    for t in 1..=m {
        let mut count = 0u64;
        sequences(&lts, t + 1, &mut seq, &mut |s| {
            let (sender, recv, verif) = if t == 1 {
                (NodeId::COMMANDER, s[0], s[1])
            } else {
                (s[t - 2], s[t - 1], s[t])
            };
            *bits.entry(link(sender, recv)).or_default() += unit;
            *bits.entry(link(sender, verif)).or_default() += unit;
            count += 1;
        });
        layers.push(count);
    }
    let executions: u64 = layers.iter().sum();
    debug_assert_eq!(executions as u128, qba_complexity(n, m)?);
    Ok(QbaFlow {
        n,
        m,
        l,
        layers,
        executions,
        hash_ops: executions,
        key_strings: 2 * executions,
        auth_uses: 2 * executions,
        key_bits_per_link: bits,
    })
}

fn sequences(pool: &[NodeId], len: usize, cur: &mut Vec<NodeId>, f: &mut impl FnMut(&[NodeId])) {
    if cur.len() == len {
        f(cur);
        return;
    }
    for &x in pool {
        if !cur.contains(&x) {
            cur.push(x);
            sequences(pool, len, cur, f);
            cur.pop();
        }
    }
}
