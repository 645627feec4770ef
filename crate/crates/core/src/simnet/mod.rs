//! Synchronous, seeded network simulation with Byzantine hooks.
//!
//! Frames travel as encoded bytes over two channel kinds. Insecure frames
//! from a Byzantine sender may be dropped or rewritten in transit;
//! authenticated frames are delivered verbatim or dropped, and each
//! delivery is one authenticated-channel use.

mod adversary;
mod forge;
mod sweep;
mod transcript;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::gf2hash::BitString;
use crate::keystore::{AdversaryKeys, Keystore, NodeId, PoolCapacities};
use crate::metrics::{AuthCostModel, ResourceLedger};
use crate::qsba::{
    commander_issue, decide, lieutenant_on_receive, Action, NodeState, ProtocolParams, QsbaError,
};
use crate::qsm::{decode_packet, encode_packet, QsmError, SignedPacket};

pub use adversary::{Honest, Scripted, Strategy};
pub use forge::{forge_attempt, forgery_experiment, AttackConfig, AttackReport};
pub use sweep::{strategy_sweep, sweep_cases, SweepCase, SweepConfig, SweepRow, SweepSummary};
pub use transcript::{frame_digest, Transcript, TranscriptRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Insecure,
    Authenticated,
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Insecure => "insecure",
            Self::Authenticated => "authenticated",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("no-such-link: {from} -> {to}")]
    NoSuchLink { from: NodeId, to: NodeId },
    #[error("cannot schedule for round {round}, current round is {current}")]
    PastRound { round: usize, current: usize },
    #[error("auth-tamper-forbidden: frame {from} -> {to} on an authenticated channel")]
    AuthTamperForbidden { from: NodeId, to: NodeId },
    #[error("controlled node {0} is outside the network")]
    UnknownNode(NodeId),
    #[error(transparent)]
    Protocol(#[from] QsbaError),
}

impl From<QsmError> for SimError {
    fn from(e: QsmError) -> Self {
        Self::Protocol(e.into())
    }
}

/// A frame in flight.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub round: usize,
    pub seq: u64,
    pub from: NodeId,
    pub to: NodeId,
    pub kind: ChannelKind,
    pub frame: Vec<u8>,
}

/// A frame a node wants sent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outgoing {
    pub from: NodeId,
    pub to: NodeId,
    pub kind: ChannelKind,
    pub frame: Vec<u8>,
    pub round: usize,
}

impl Outgoing {
    pub fn packet(
        from: NodeId,
        to: NodeId,
        kind: ChannelKind,
        packet: &SignedPacket,
        round: usize,
    ) -> Result<Self, SimError> {
        Ok(Self {
            from,
            to,
            kind,
            frame: encode_packet(packet)?,
            round,
        })
    }
}

/// What happens to a frame from a Byzantine sender before delivery.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ForwardDecision {
    Deliver,
    Drop,
    Replace(Vec<u8>),
}

/// Queue of frames keyed by delivery round.
#[derive(Debug, Default)]
pub struct SimNet {
    n: usize,
    round: usize,
    seq: u64,
    queue: BTreeMap<usize, Vec<Envelope>>,
}

impl SimNet {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            ..Self::default()
        }
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn set_round(&mut self, round: usize) {
        self.round = round;
    }

    pub fn schedule_send(
        &mut self,
        from: NodeId,
        to: NodeId,
        kind: ChannelKind,
        frame: Vec<u8>,
        round: usize,
    ) -> Result<(), SimError> {
        if from == to || from.index() >= self.n || to.index() >= self.n {
            return Err(SimError::NoSuchLink { from, to });
        }
        if round < self.round {
            return Err(SimError::PastRound {
                round,
                current: self.round,
            });
        }
        let seq = self.seq;
        self.seq += 1;
        self.queue.entry(round).or_default().push(Envelope {
            round,
            seq,
            from,
            to,
            kind,
            frame,
        });
        Ok(())
    }

    pub fn send(&mut self, out: Outgoing) -> Result<(), SimError> {
        self.schedule_send(out.from, out.to, out.kind, out.frame, out.round)
    }

    /// Frames due in `round`, ordered by receiver then enqueue order.
    pub fn take_due(&mut self, round: usize) -> Vec<Envelope> {
        let mut due = self.queue.remove(&round).unwrap_or_default();
        due.sort_by_key(|e| (e.to, e.seq));
        due
    }

    /// Frames still queued (scheduled past the last round).
    pub fn pending(&self) -> usize {
        self.queue.values().map(Vec::len).sum()
    }
}

/// What adversary code can reach during a hook.
pub struct AdvCtx<'a> {
    pub params: &'a ProtocolParams,
    pub round: usize,
    pub controlled: &'a BTreeSet<NodeId>,
    pub ledger: &'a mut ResourceLedger,
    pub rng: &'a mut ChaCha20Rng,
    keystore: &'a mut Keystore,
    share_keys: bool,
}

impl AdvCtx<'_> {
    /// Key access on behalf of `actor`. Colluding coalitions see every pool
    /// touching any member; otherwise a node sees only its own pools.
    pub fn keys(&mut self, actor: NodeId) -> AdversaryKeys<'_> {
        self.parts(actor).0
    }

    /// Key view, ledger and randomness at once, for signing.
    pub fn parts(
        &mut self,
        actor: NodeId,
    ) -> (AdversaryKeys<'_>, &mut ResourceLedger, &mut ChaCha20Rng) {
        assert!(
            self.controlled.contains(&actor),
            "{actor} is not controlled"
        );
        let holders = if self.share_keys {
            self.controlled.clone()
        } else {
            BTreeSet::from([actor])
        };
        (
            self.keystore.adversary_view(&holders),
            &mut *self.ledger,
            &mut *self.rng,
        )
    }

    pub fn honest_lieutenants(&self) -> Vec<NodeId> {
        self.params
            .lieutenants()
            .filter(|l| !self.controlled.contains(l))
            .collect()
    }
}

/// Byzantine behavior for a fixed set of controlled nodes.
///
/// Every controlled lieutenant runs an honest shadow state machine; the
/// hooks decide what actually goes on the wire.
pub trait Adversary {
    fn controlled(&self) -> &BTreeSet<NodeId>;

    /// Whether controlled nodes pool their key material.
    fn shares_keys(&self) -> bool {
        false
    }

    /// Controlled commander: `shadow` is what an honest commander would send.
    fn on_issue(
        &mut self,
        _ctx: &mut AdvCtx<'_>,
        shadow: Vec<(NodeId, SignedPacket)>,
    ) -> Result<Vec<Outgoing>, SimError> {
        shadow
            .iter()
            .map(|(to, p)| Outgoing::packet(NodeId::COMMANDER, *to, ChannelKind::Insecure, p, 0))
            .collect()
    }

    /// Called at the start of every round before deliveries.
    fn on_round_start(&mut self, _ctx: &mut AdvCtx<'_>) -> Result<Vec<Outgoing>, SimError> {
        Ok(Vec::new())
    }

    /// A controlled node received a decodable frame; `shadow` is the
    /// honest reaction, already computed.
    fn on_receive(
        &mut self,
        ctx: &mut AdvCtx<'_>,
        node: NodeId,
        _env: &Envelope,
        _packet: &SignedPacket,
        shadow: &Action,
    ) -> Result<Vec<Outgoing>, SimError> {
        honest_sends(node, shadow, ctx.round, ctx.params.m)
    }

    /// A frame sent by a controlled node is about to be delivered.
    fn on_forward(&mut self, _ctx: &mut AdvCtx<'_>, _env: &Envelope) -> ForwardDecision {
        ForwardDecision::Deliver
    }
}

/// Frames an honest node emits for `action` taken in `round`.
pub fn honest_sends(
    node: NodeId,
    action: &Action,
    round: usize,
    m: usize,
) -> Result<Vec<Outgoing>, SimError> {
    let (targets, packet, kind, at) = match action {
        Action::SignAndForward { targets, packet } => {
            (targets, packet, ChannelKind::Insecure, round + 1)
        }
        Action::AuthForward { targets, packet } => (targets, packet, ChannelKind::Authenticated, m),
        _ => return Ok(Vec::new()),
    };
    let frame = encode_packet(packet)?;
    Ok(targets
        .iter()
        .map(|&to| Outgoing {
            from: node,
            to,
            kind,
            frame: frame.clone(),
            round: at,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub capacities: PoolCapacities,
    pub auth_cost: AuthCostModel,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            capacities: PoolCapacities::default(),
            auth_cost: AuthCostModel::Axiomatic,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Completed,
    AbortedKeyExhausted,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub status: RunStatus,
    pub commander_honest: bool,
    pub condition_i: bool,
    pub condition_ii: bool,
}

impl Verdict {
    pub fn holds(&self) -> bool {
        self.status == RunStatus::Completed && self.condition_i && self.condition_ii
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub verdict: Verdict,
    pub abort_reason: Option<String>,
    pub decisions: BTreeMap<NodeId, BitString>,
    pub message_sets: BTreeMap<NodeId, BTreeSet<BitString>>,
    pub ledger: ResourceLedger,
    pub transcript: Transcript,
    /// Pool cursors at the end of the run.
    pub pool_cursors: BTreeMap<crate::keystore::LinkId, u64>,
    pub drawn_intervals: BTreeMap<crate::keystore::LinkId, Vec<(u64, u64)>>,
}

/// Runs rounds `0..=m` and lets every honest lieutenant decide.
pub fn run_protocol(
    params: &ProtocolParams,
    command: &BitString,
    cfg: &RunConfig,
    adversary: &mut dyn Adversary,
) -> Result<RunOutcome, SimError> {
    let controlled = adversary.controlled().clone();
    if let Some(&bad) = controlled.iter().find(|c| c.index() >= params.n) {
        return Err(SimError::UnknownNode(bad));
    }
    let share_keys = adversary.shares_keys();
    let mut keystore = Keystore::new(params.n, cfg.capacities, cfg.seed);
    let mut ledger = ResourceLedger::new(cfg.auth_cost);
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut adv_rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    adv_rng.set_stream(2);
    let mut net = SimNet::new(params.n);
    let mut transcript = Transcript::default();
    let mut states: Vec<NodeState> = (0..params.n)
        .map(|i| NodeState::new(NodeId(i as u8)))
        .collect();
    let commander_honest = !controlled.contains(&NodeId::COMMANDER);

    macro_rules! ctx {
        ($round:expr) => {
            AdvCtx {
                params,
                round: $round,
                controlled: &controlled,
                ledger: &mut ledger,
                rng: &mut adv_rng,
                keystore: &mut keystore,
                share_keys,
            }
        };
    }

    let result: Result<(), SimError> = (|| {
        let issued = commander_issue(command, params, &mut keystore, &mut ledger, &mut rng)?;
        if commander_honest {
            for (to, p) in &issued {
                net.send(Outgoing::packet(
                    NodeId::COMMANDER,
                    *to,
                    ChannelKind::Insecure,
                    p,
                    0,
                )?)?;
            }
        } else {
            for out in adversary.on_issue(&mut ctx!(0), issued)? {
                net.send(out)?;
            }
        }

        for round in 0..=params.m {
            net.set_round(round);
            if !controlled.is_empty() {
                for out in adversary.on_round_start(&mut ctx!(round))? {
                    net.send(out)?;
                }
            }
            loop {
                let due = net.take_due(round);
                if due.is_empty() {
                    break;
                }
                for mut env in due {
                    let mut note = String::new();
                    if controlled.contains(&env.from) {
                        match adversary.on_forward(&mut ctx!(round), &env) {
                            ForwardDecision::Deliver => {}
                            ForwardDecision::Drop => {
                                transcript.push(&env, "dropped-in-transit");
                                continue;
                            }
                            ForwardDecision::Replace(frame) => {
                                if env.kind == ChannelKind::Authenticated {
                                    return Err(SimError::AuthTamperForbidden {
                                        from: env.from,
                                        to: env.to,
                                    });
                                }
                                env.frame = frame;
                                note.push_str("tampered;");
                            }
                        }
                    }
                    if env.kind == ChannelKind::Authenticated {
                        ledger.charge_auth_use();
                    }
                    let packet = match decode_packet(&env.frame) {
                        Ok(p) => p,
                        Err(e) => {
                            transcript.push(&env, &format!("{note}drop:{e}"));
                            continue;
                        }
                    };
                    if env.to.is_commander() {
                        transcript.push(&env, &format!("{note}ignored"));
                        continue;
                    }
                    let to = env.to;
                    states[to.index()].round = round;
                    if controlled.contains(&to) {
                        let holders = if share_keys {
                            controlled.clone()
                        } else {
                            BTreeSet::from([to])
                        };
                        let shadow = lieutenant_on_receive(
                            &mut states[to.index()],
                            &packet,
                            env.kind,
                            env.from,
                            params,
                            &mut keystore.adversary_view(&holders),
                            &mut ledger,
                            &mut adv_rng,
                        )?;
                        transcript.push(&env, &format!("{note}byzantine:{}", shadow.kind()));
                        let mut ctx = ctx!(round);
                        for out in adversary.on_receive(&mut ctx, to, &env, &packet, &shadow)? {
                            net.send(out)?;
                        }
                    } else {
                        let action = lieutenant_on_receive(
                            &mut states[to.index()],
                            &packet,
                            env.kind,
                            env.from,
                            params,
                            &mut keystore,
                            &mut ledger,
                            &mut rng,
                        )?;
                        transcript.push(&env, &format!("{note}{}", action.kind()));
                        for out in honest_sends(to, &action, round, params.m)? {
                            net.send(out)?;
                        }
                    }
                }
            }
        }
        Ok(())
    })();

    let abort_reason = match result {
        Ok(()) => None,
        Err(SimError::Protocol(e)) if e.is_key_exhausted() => Some(e.to_string()),
        Err(e) => return Err(e),
    };

    let mut decisions = BTreeMap::new();
    let mut message_sets = BTreeMap::new();
    for l in params.lieutenants().filter(|l| !controlled.contains(l)) {
        let v = &states[l.index()].v;
        let d = decide(v, params);
        transcript.push_decision(params.m + 1, l, &d);
        decisions.insert(l, d);
        message_sets.insert(l, v.clone());
    }
    let verdict = if abort_reason.is_some() {
        Verdict {
            status: RunStatus::AbortedKeyExhausted,
            commander_honest,
            condition_i: false,
            condition_ii: false,
        }
    } else {
        let first = decisions.values().next();
        Verdict {
            status: RunStatus::Completed,
            commander_honest,
            condition_i: decisions.values().all(|d| Some(d) == first),
            condition_ii: !commander_honest || decisions.values().all(|d| d == command),
        }
    };
    let pool_cursors = keystore
        .pools()
        .map(|p| (p.link(), p.cursor_bits()))
        .collect();
    let drawn_intervals = keystore
        .pools()
        .map(|p| (p.link(), keystore.drawn_intervals(p.link())))
        .collect();
    Ok(RunOutcome {
        verdict,
        abort_reason,
        decisions,
        message_sets,
        ledger,
        transcript,
        pool_cursors,
        drawn_intervals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    #[test]
    fn schedule_guards() {
        let mut net = SimNet::new(3);
        assert_eq!(
            net.schedule_send(NodeId(1), NodeId(1), ChannelKind::Insecure, vec![], 0),
            Err(SimError::NoSuchLink {
                from: NodeId(1),
                to: NodeId(1)
            })
        );
        assert!(net
            .schedule_send(NodeId(1), NodeId(7), ChannelKind::Insecure, vec![], 0)
            .is_err());
        net.set_round(2);
        assert!(matches!(
            net.schedule_send(NodeId(0), NodeId(1), ChannelKind::Insecure, vec![], 1),
            Err(SimError::PastRound { .. })
        ));
    }

    #[test]
    fn due_frames_are_ordered_by_receiver_then_seq() {
        let mut net = SimNet::new(4);
        for (f, t) in [(0, 3), (0, 1), (2, 1), (0, 2)] {
            net.schedule_send(NodeId(f), NodeId(t), ChannelKind::Insecure, vec![f, t], 0)
                .unwrap();
        }
        let order: Vec<(u8, u8)> = net.take_due(0).iter().map(|e| (e.from.0, e.to.0)).collect();
        assert_eq!(order, vec![(0, 1), (2, 1), (0, 2), (0, 3)]);
        assert!(net.take_due(0).is_empty());
    }

    #[test]
    fn honest_five_node_run() {
        let p = ProtocolParams::new(5, 2, 54, bs("0")).unwrap();
        let cmd = bs("1100101");
        let out = run_protocol(&p, &cmd, &RunConfig::default(), &mut Honest::default()).unwrap();
        assert!(out.verdict.holds());
        assert!(out
            .message_sets
            .values()
            .all(|v| v == &BTreeSet::from([cmd.clone()])));
        assert!(out.decisions.values().all(|d| d == &cmd));
        // Dedup keeps honest runs at or below the worst case.
        assert_eq!(out.ledger.hash_ops, 16);
        assert_eq!(out.ledger.auth_uses, 0);
    }

    #[test]
    fn exhaustion_aborts_with_partial_ledger() {
        let p = ProtocolParams::new(5, 2, 54, bs("0")).unwrap();
        let cfg = RunConfig {
            capacities: PoolCapacities {
                commander_link_bits: 1000,
                lieutenant_link_bits: 100,
            },
            ..RunConfig::default()
        };
        let out = run_protocol(&p, &bs("1"), &cfg, &mut Honest::default()).unwrap();
        assert_eq!(out.verdict.status, RunStatus::AbortedKeyExhausted);
        assert!(!out.verdict.holds());
        assert!(out.abort_reason.unwrap().contains("key-exhausted"));
        assert_eq!(out.ledger.hash_ops, 4);
    }

    struct AuthTamper(BTreeSet<NodeId>);

    impl Adversary for AuthTamper {
        fn controlled(&self) -> &BTreeSet<NodeId> {
            &self.0
        }

        fn on_forward(&mut self, _ctx: &mut AdvCtx<'_>, env: &Envelope) -> ForwardDecision {
            let mut f = env.frame.clone();
            f[4] ^= 0x80;
            ForwardDecision::Replace(f)
        }
    }

    #[test]
    fn tampering_with_authenticated_frames_is_refused() {
        // n = 4, m = 1: lieutenant 1 auth-forwards in round 1.
        let p = ProtocolParams::new(4, 1, 16, bs("0")).unwrap();
        let mut adv = AuthTamper(BTreeSet::from([NodeId(1)]));
        let err = run_protocol(&p, &bs("1"), &RunConfig::default(), &mut adv).unwrap_err();
        assert!(matches!(err, SimError::AuthTamperForbidden { .. }));
        assert!(err.to_string().starts_with("auth-tamper-forbidden"));
    }
}
