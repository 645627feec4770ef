//! Commander/lieutenant agreement over signed message chains.
//!
//! Round `k` carries chains with `k` lieutenant signatures. A lieutenant that
//! accepts a new message at depth `k < m - 1` countersigns and forwards it;
//! at depth `m - 1` it relays the packet unchanged over the authenticated
//! channel, which lands in round `m`. After round `m` every lieutenant
//! decides from its message set.

use std::collections::BTreeSet;
use std::fmt;

use rand::RngCore;
use serde::Serialize;

use crate::gf2hash::BitString;
use crate::keystore::{KeyAccess, KeyError, NodeId};
use crate::metrics::{validate_params, ResourceLedger};
use crate::qsm::{qsm_sign, qsm_verify, QsmError, SignatureMatrix, SignedPacket};
use crate::simnet::ChannelKind;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QsbaError {
    #[error("invalid-params: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Qsm(#[from] QsmError),
}

impl QsbaError {
    pub fn is_key_exhausted(&self) -> bool {
        matches!(self, Self::Qsm(QsmError::Key(KeyError::Exhausted { .. })))
    }
}

impl From<KeyError> for QsbaError {
    fn from(e: KeyError) -> Self {
        Self::Qsm(QsmError::Key(e))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ProtocolParams {
    pub n: usize,
    pub m: usize,
    pub l: usize,
    #[serde(serialize_with = "crate::scenario::ser_bits_hex")]
    pub default_command: BitString,
}

impl ProtocolParams {
    pub fn new(
        n: usize,
        m: usize,
        l: usize,
        default_command: BitString,
    ) -> Result<Self, QsbaError> {
        validate_params(n, m).map_err(|e| QsbaError::InvalidParams(e.to_string()))?;
        if !(2..=u16::MAX as usize).contains(&l) {
            return Err(QsbaError::InvalidParams(format!("tag length {l}")));
        }
        if n > 256 {
            return Err(QsbaError::InvalidParams(format!("n = {n} exceeds 256")));
        }
        Ok(Self {
            n,
            m,
            l,
            default_command,
        })
    }

    pub fn lieutenants(&self) -> impl Iterator<Item = NodeId> {
        (1..self.n).map(|i| NodeId(i as u8))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Commander,
    Lieutenant,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeState {
    pub id: NodeId,
    pub role: Role,
    pub v: BTreeSet<BitString>,
    pub received_direct: bool,
    pub round: usize,
}

impl NodeState {
    pub fn new(id: NodeId) -> Self {
        Self {
            id,
            role: if id.is_commander() {
                Role::Commander
            } else {
                Role::Lieutenant
            },
            v: BTreeSet::new(),
            received_direct: false,
            round: 0,
        }
    }
}

/// Why a received packet led to no forwarding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NoAction {
    /// Verified and recorded; nothing further to send.
    Recorded,
    Duplicate,
    BadSignature,
    InvalidChain(String),
    OffSchedule,
}

impl fmt::Display for NoAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Recorded => f.write_str("recorded"),
            Self::Duplicate => f.write_str("drop:duplicate"),
            Self::BadSignature => f.write_str("drop:bad-signature"),
            Self::InvalidChain(why) => write!(f, "drop:invalid-chain({why})"),
            Self::OffSchedule => f.write_str("drop:off-schedule"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Action {
    SignAndForward {
        targets: BTreeSet<NodeId>,
        packet: SignedPacket,
    },
    AuthForward {
        targets: BTreeSet<NodeId>,
        packet: SignedPacket,
    },
    Decide(BitString),
    None(NoAction),
}

impl Action {
    pub fn kind(&self) -> String {
        match self {
            Self::SignAndForward { .. } => "sign-and-forward".into(),
            Self::AuthForward { .. } => "auth-forward".into(),
            Self::Decide(_) => "decide".into(),
            Self::None(why) => why.to_string(),
        }
    }

    /// True when the packet passed every check (forwarded, recorded or a
    /// verified duplicate).
    pub fn verified(&self) -> bool {
        matches!(
            self,
            Self::SignAndForward { .. }
                | Self::AuthForward { .. }
                | Self::None(NoAction::Recorded | NoAction::Duplicate)
        )
    }
}

/// Signs `msg` once for all lieutenants and returns one packet per lieutenant.
pub fn commander_issue<K: KeyAccess + ?Sized, R: RngCore + ?Sized>(
    msg: &BitString,
    params: &ProtocolParams,
    keys: &mut K,
    ledger: &mut ResourceLedger,
    rng: &mut R,
) -> Result<Vec<(NodeId, SignedPacket)>, QsbaError> {
    let recipients: BTreeSet<NodeId> = params.lieutenants().collect();
    let s0 = qsm_sign(
        msg,
        NodeId::COMMANDER,
        &recipients,
        &[],
        params.l,
        keys,
        ledger,
        rng,
    )?;
    let packet = SignedPacket {
        message: msg.clone(),
        chain: vec![s0],
    };
    Ok(recipients
        .into_iter()
        .map(|r| (r, packet.clone()))
        .collect())
}

/// Lieutenants a matrix at chain position `index` must address: everyone
/// except the commander and the signers up to and including that position.
pub fn expected_recipients(
    params: &ProtocolParams,
    packet: &SignedPacket,
    index: usize,
) -> BTreeSet<NodeId> {
    let signed: BTreeSet<NodeId> = packet.chain[..=index].iter().map(|s| s.signer).collect();
    params
        .lieutenants()
        .filter(|r| !signed.contains(r))
        .collect()
}

/// Structural checks a packet must pass before any signature is examined.
pub fn validate_chain(
    params: &ProtocolParams,
    packet: &SignedPacket,
    receiver: NodeId,
) -> Result<(), String> {
    let Some(first) = packet.chain.first() else {
        return Err("empty chain".into());
    };
    if !first.signer.is_commander() {
        return Err("first signer is not the commander".into());
    }
    if packet.chain.len() > params.m {
        return Err(format!(
            "{} entries exceed depth bound {}",
            packet.chain.len(),
            params.m
        ));
    }
    if !packet.chain_is_consistent() {
        return Err("repeated signer or backward recipient".into());
    }
    if packet.has_signer(receiver) {
        return Err("receiver already signed".into());
    }
    for (i, s) in packet.chain.iter().enumerate() {
        if (s.signer.index()) >= params.n {
            return Err(format!("unknown signer {}", s.signer));
        }
        let want = expected_recipients(params, packet, i);
        if !s.recipients().eq(want.iter().copied()) {
            return Err(format!("entry {i} has the wrong recipient set"));
        }
        if s.parts
            .iter()
            .any(|p| p.enc_hash_fn.len() != params.l || p.enc_hash_val.len() != params.l)
        {
            return Err(format!("entry {i} has fields of the wrong length"));
        }
    }
    Ok(())
}

/// Lieutenant `state.id` handles `packet`, delivered in round `state.round`
/// by `sender` over `channel`.
#[allow(clippy::too_many_arguments)]
pub fn lieutenant_on_receive<K: KeyAccess + ?Sized, R: RngCore + ?Sized>(
    state: &mut NodeState,
    packet: &SignedPacket,
    channel: ChannelKind,
    sender: NodeId,
    params: &ProtocolParams,
    keys: &mut K,
    ledger: &mut ResourceLedger,
    rng: &mut R,
) -> Result<Action, QsbaError> {
    if let Err(why) = validate_chain(params, packet, state.id) {
        return Ok(Action::None(NoAction::InvalidChain(why)));
    }
    let k = packet.chain.len() - 1;
    let on_schedule = match channel {
        ChannelKind::Insecure => state.round == k,
        ChannelKind::Authenticated => {
            state.round == params.m
                && k == params.m - 1
                && !sender.is_commander()
                && sender != state.id
                && !packet.has_signer(sender)
        }
    };
    if !on_schedule {
        return Ok(Action::None(NoAction::OffSchedule));
    }
    for i in 0..packet.chain.len() {
        match qsm_verify(packet, i, state.id, keys) {
            Ok(true) => {}
            Ok(false) | Err(QsmError::MalformedSignature(_)) => {
                return Ok(Action::None(NoAction::BadSignature))
            }
            Err(e) => return Err(e.into()),
        }
    }

    let direct = k == 0 && channel == ChannelKind::Insecure;
    if direct {
        if state.received_direct {
            return Ok(Action::None(NoAction::Duplicate));
        }
        state.received_direct = true;
    }
    if !state.v.insert(packet.message.clone()) {
        return Ok(Action::None(NoAction::Duplicate));
    }
    if channel == ChannelKind::Authenticated {
        return Ok(Action::None(NoAction::Recorded));
    }

    let targets: BTreeSet<NodeId> = params
        .lieutenants()
        .filter(|&t| t != state.id && !packet.has_signer(t))
        .collect();
    if k + 1 < params.m {
        let prefix: Vec<NodeId> = packet.signers().collect();
        let matrix: SignatureMatrix = qsm_sign(
            &packet.message,
            state.id,
            &targets,
            &prefix,
            params.l,
            keys,
            ledger,
            rng,
        )?;
        let mut next = packet.clone();
        next.chain.push(matrix);
        Ok(Action::SignAndForward {
            targets,
            packet: next,
        })
    } else {
        Ok(Action::AuthForward {
            targets,
            packet: packet.clone(),
        })
    }
}

/// The sole element of `v`, or the default command.
pub fn decide(v: &BTreeSet<BitString>, params: &ProtocolParams) -> BitString {
    if v.len() == 1 {
        v.first().expect("one element").clone()
    } else {
        params.default_command.clone()
    }
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

    fn params(n: usize, m: usize) -> ProtocolParams {
        ProtocolParams::new(n, m, 16, bs("0000")).unwrap()
    }

    struct Env {
        ks: Keystore,
        led: ResourceLedger,
        rng: ChaCha20Rng,
    }

    fn env(n: usize) -> Env {
        Env {
            ks: Keystore::new(n, PoolCapacities::default(), 5),
            led: ResourceLedger::default(),
            rng: ChaCha20Rng::seed_from_u64(5),
        }
    }

    #[test]
    fn params_validation() {
        assert!(ProtocolParams::new(5, 2, 54, bs("0")).is_ok());
        assert!(ProtocolParams::new(5, 4, 54, bs("0")).is_err());
        assert!(ProtocolParams::new(2, 1, 54, bs("0")).is_err());
        assert!(ProtocolParams::new(5, 2, 1, bs("0")).is_err());
    }

    #[test]
    fn issue_structure() {
        let p = params(4, 1);
        let mut e = env(4);
        let out = commander_issue(&bs("1"), &p, &mut e.ks, &mut e.led, &mut e.rng).unwrap();
        assert_eq!(out.len(), 3);
        assert!(out
            .iter()
            .all(|(_, pk)| pk.message == bs("1") && pk.chain.len() == 1));
        assert_eq!(e.led.hash_ops, 3);
    }

    #[test]
    fn direct_receipt_signs_then_deep_receipt_auth_forwards() {
        let p = params(5, 2);
        let mut e = env(5);
        let msg = bs("1011");
        let issued = commander_issue(&msg, &p, &mut e.ks, &mut e.led, &mut e.rng).unwrap();
        assert_eq!(e.led.hash_ops, 4);

        let mut n1 = NodeState::new(NodeId(1));
        let a = lieutenant_on_receive(
            &mut n1,
            &issued[0].1,
            ChannelKind::Insecure,
            NodeId(0),
            &p,
            &mut e.ks,
            &mut e.led,
            &mut e.rng,
        )
        .unwrap();
        let Action::SignAndForward { targets, packet } = a else {
            panic!("expected sign-and-forward, got {a:?}")
        };
        assert_eq!(targets, BTreeSet::from([NodeId(2), NodeId(3), NodeId(4)]));
        assert_eq!(e.led.hash_ops, 7);
        assert_eq!(n1.v, BTreeSet::from([msg.clone()]));

        let mut n2 = NodeState::new(NodeId(2));
        n2.round = 1;
        let before = e.led.clone();
        let a = lieutenant_on_receive(
            &mut n2,
            &packet,
            ChannelKind::Insecure,
            NodeId(1),
            &p,
            &mut e.ks,
            &mut e.led,
            &mut e.rng,
        )
        .unwrap();
        let Action::AuthForward {
            targets,
            packet: fwd,
        } = a
        else {
            panic!("expected auth-forward, got {a:?}")
        };
        assert_eq!(targets, BTreeSet::from([NodeId(3), NodeId(4)]));
        assert_eq!(fwd, packet);
        assert_eq!(e.led, before);

        // Same message again over the authenticated channel: duplicate.
        n2.round = 2;
        let a = lieutenant_on_receive(
            &mut n2,
            &packet,
            ChannelKind::Authenticated,
            NodeId(3),
            &p,
            &mut e.ks,
            &mut e.led,
            &mut e.rng,
        )
        .unwrap();
        assert_eq!(a, Action::None(NoAction::Duplicate));
    }

    #[test]
    fn m_one_direct_receipt_auth_forwards() {
        let p = params(4, 1);
        let mut e = env(4);
        let issued = commander_issue(&bs("1"), &p, &mut e.ks, &mut e.led, &mut e.rng).unwrap();
        let mut n3 = NodeState::new(NodeId(3));
        let a = lieutenant_on_receive(
            &mut n3,
            &issued[2].1,
            ChannelKind::Insecure,
            NodeId(0),
            &p,
            &mut e.ks,
            &mut e.led,
            &mut e.rng,
        )
        .unwrap();
        assert!(
            matches!(a, Action::AuthForward { ref targets, .. } if targets == &BTreeSet::from([NodeId(1), NodeId(2)]))
        );
        // A second direct copy is ignored.
        let a = lieutenant_on_receive(
            &mut n3,
            &issued[2].1,
            ChannelKind::Insecure,
            NodeId(0),
            &p,
            &mut e.ks,
            &mut e.led,
            &mut e.rng,
        )
        .unwrap();
        assert_eq!(a, Action::None(NoAction::Duplicate));
    }

    #[test]
    fn tampered_and_off_schedule_packets_are_dropped() {
        let p = params(5, 2);
        let mut e = env(5);
        let issued = commander_issue(&bs("1011"), &p, &mut e.ks, &mut e.led, &mut e.rng).unwrap();
        let mut bad = issued[0].1.clone();
        bad.message.flip(2);
        let mut n1 = NodeState::new(NodeId(1));
        let a = lieutenant_on_receive(
            &mut n1,
            &bad,
            ChannelKind::Insecure,
            NodeId(0),
            &p,
            &mut e.ks,
            &mut e.led,
            &mut e.rng,
        )
        .unwrap();
        assert_eq!(a, Action::None(NoAction::BadSignature));
        assert!(n1.v.is_empty());

        n1.round = 1;
        let a = lieutenant_on_receive(
            &mut n1,
            &issued[0].1,
            ChannelKind::Insecure,
            NodeId(0),
            &p,
            &mut e.ks,
            &mut e.led,
            &mut e.rng,
        )
        .unwrap();
        assert_eq!(a, Action::None(NoAction::OffSchedule));

        let mut wrong = issued[0].1.clone();
        wrong.chain[0].parts.remove(1);
        let a = lieutenant_on_receive(
            &mut n1,
            &wrong,
            ChannelKind::Insecure,
            NodeId(0),
            &p,
            &mut e.ks,
            &mut e.led,
            &mut e.rng,
        )
        .unwrap();
        assert!(matches!(a, Action::None(NoAction::InvalidChain(_))));
    }

    #[test]
    fn decide_rule() {
        let p = ProtocolParams::new(4, 1, 8, bs("00")).unwrap();
        assert_eq!(decide(&BTreeSet::from([bs("10")]), &p), bs("10"));
        assert_eq!(decide(&BTreeSet::from([bs("10"), bs("11")]), &p), bs("00"));
        assert_eq!(decide(&BTreeSet::new(), &p), bs("00"));
    }
}
