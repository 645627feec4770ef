use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{
    honest_sends, AdvCtx, Adversary, ChannelKind, Envelope, ForwardDecision, Outgoing, SimError,
};
use crate::gf2hash::{BitString, HashKey};
use crate::keystore::{LinkId, NodeId};
use crate::metrics::ResourceLedger;
use crate::qsba::Action;
use crate::qsm::{qsm_sign, seal_partial, sig_label, QsmError, SignatureMatrix, SignedPacket};

/// Scripted Byzantine behaviors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Honest,
    /// Commander sends a different message to every lieutenant; lieutenants
    /// relay a different accepted message to each target.
    Equivocate,
    /// Send nothing.
    Drop,
    /// Equivocating commander that reaches only odd lieutenants; lieutenants
    /// forward to half of their targets.
    SelectiveDrop,
    /// Re-send every frame seen so far in every later round, on both
    /// channel kinds.
    Replay,
    /// Flip a message bit in every outgoing insecure frame.
    TamperInsecure,
    /// Commander and lieutenants pool keys and feed freshly minted chains to
    /// a single honest lieutenant at every depth.
    Collude,
    /// Substitute a random message while keeping earlier signatures.
    Forge,
}

impl Strategy {
    /// Strategies covered by the exhaustive sweeps. `Forge` is excluded: its
    /// success is bounded by the hash family, not ruled out.
    pub const FAMILY: [Strategy; 6] = [
        Strategy::Equivocate,
        Strategy::Drop,
        Strategy::SelectiveDrop,
        Strategy::Replay,
        Strategy::TamperInsecure,
        Strategy::Collude,
    ];

    pub const ALL: [Strategy; 8] = [
        Strategy::Honest,
        Strategy::Equivocate,
        Strategy::Drop,
        Strategy::SelectiveDrop,
        Strategy::Replay,
        Strategy::TamperInsecure,
        Strategy::Collude,
        Strategy::Forge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Honest => "honest",
            Self::Equivocate => "equivocate",
            Self::Drop => "drop",
            Self::SelectiveDrop => "selective-drop",
            Self::Replay => "replay",
            Self::TamperInsecure => "tamper-insecure",
            Self::Collude => "collude",
            Self::Forge => "forge",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown strategy {s:?}"))
    }
}

/// No Byzantine nodes.
#[derive(Default)]
pub struct Honest {
    none: BTreeSet<NodeId>,
}

impl Adversary for Honest {
    fn controlled(&self) -> &BTreeSet<NodeId> {
        &self.none
    }
}

pub struct Scripted {
    strategy: Strategy,
    controlled: BTreeSet<NodeId>,
    accepted: BTreeMap<NodeId, Vec<SignedPacket>>,
    pending: Vec<(NodeId, Action)>,
    replay_log: Vec<(NodeId, Vec<u8>)>,
    msg_len: usize,
}

impl Scripted {
    pub fn new(strategy: Strategy, controlled: impl IntoIterator<Item = NodeId>) -> Self {
        Self {
            strategy,
            controlled: controlled.into_iter().collect(),
            accepted: BTreeMap::new(),
            pending: Vec::new(),
            replay_log: Vec::new(),
            msg_len: 8,
        }
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    fn log(&mut self, holder: NodeId, frame: &[u8]) {
        if !self
            .replay_log
            .iter()
            .any(|(h, f)| *h == holder && f == frame)
        {
            self.replay_log.push((holder, frame.to_vec()));
        }
    }

    fn commander_controlled(&self) -> bool {
        self.controlled.contains(&NodeId::COMMANDER)
    }

    fn controlled_lieutenants(&self) -> Vec<NodeId> {
        self.controlled
            .iter()
            .copied()
            .filter(|c| !c.is_commander())
            .collect()
    }

    fn equivocating_issue(
        &self,
        ctx: &mut AdvCtx<'_>,
        shadow: &[(NodeId, SignedPacket)],
    ) -> Result<Vec<(NodeId, SignedPacket)>, SimError> {
        let base = &shadow[0].1;
        let msgs = distinct_messages(&base.message, shadow.len(), ctx.rng);
        let mut out = Vec::with_capacity(shadow.len());
        for ((to, p), msg) in shadow.iter().zip(msgs) {
            if msg == p.message {
                out.push((*to, p.clone()));
            } else {
                let s0 = resign_reusing_pads(ctx, NodeId::COMMANDER, &base.chain[0], &[], &msg)?;
                out.push((
                    *to,
                    SignedPacket {
                        message: msg,
                        chain: vec![s0],
                    },
                ));
            }
        }
        Ok(out)
    }

    /// Lowest-index honest lieutenant, the single recipient of colluding traffic.
    fn collude_target(ctx: &AdvCtx<'_>) -> Option<NodeId> {
        ctx.honest_lieutenants().first().copied()
    }

    /// A fresh message signed by the commander and then by the first
    /// `depth` controlled lieutenants.
    fn mint(
        &self,
        ctx: &mut AdvCtx<'_>,
        depth: usize,
        len: usize,
    ) -> Result<SignedPacket, SimError> {
        let msg = BitString::random(len.max(1), ctx.rng);
        let all: BTreeSet<NodeId> = ctx.params.lieutenants().collect();
        let s0 = adversarial_sign(ctx, NodeId::COMMANDER, &msg, &all, &[])?;
        let mut packet = SignedPacket {
            message: msg,
            chain: vec![s0],
        };
        for &c in self.controlled_lieutenants().iter().take(depth) {
            let prefix: Vec<NodeId> = packet.signers().collect();
            let rcpt: BTreeSet<NodeId> = ctx
                .params
                .lieutenants()
                .filter(|&t| t != c && !packet.has_signer(t))
                .collect();
            let s = adversarial_sign(ctx, c, &packet.message, &rcpt, &prefix)?;
            packet.chain.push(s);
        }
        Ok(packet)
    }

    fn flush_equivocation(&mut self, ctx: &mut AdvCtx<'_>) -> Result<Vec<Outgoing>, SimError> {
        let pending = std::mem::take(&mut self.pending);
        let mut out = Vec::new();
        let mut signed: HashMap<(NodeId, SignedPacket), SignedPacket> = HashMap::new();
        for (idx, (node, action)) in pending.into_iter().enumerate() {
            let (targets, depth, auth) = match &action {
                Action::SignAndForward { targets, packet } => {
                    (targets, packet.chain.len() - 2, false)
                }
                Action::AuthForward { targets, packet } => (targets, packet.chain.len() - 1, true),
                _ => continue,
            };
            let held: Vec<&SignedPacket> = self
                .accepted
                .get(&node)
                .map(|v| v.iter().filter(|p| p.chain.len() == depth + 1).collect())
                .unwrap_or_default();
            for (pos, &t) in targets.iter().enumerate() {
                let cands: Vec<&SignedPacket> =
                    held.iter().copied().filter(|p| !p.has_signer(t)).collect();
                if cands.is_empty() {
                    continue;
                }
                let chosen = cands[(idx + pos) % cands.len()].clone();
                let packet = if auth {
                    chosen
                } else if let Action::SignAndForward { packet, .. } = &action {
                    if packet.chain[..packet.chain.len() - 1] == chosen.chain[..]
                        && packet.message == chosen.message
                    {
                        packet.clone()
                    } else if let Some(p) = signed.get(&(node, chosen.clone())) {
                        p.clone()
                    } else {
                        let rcpt: BTreeSet<NodeId> = ctx
                            .params
                            .lieutenants()
                            .filter(|&r| r != node && !chosen.has_signer(r))
                            .collect();
                        let prefix: Vec<NodeId> = chosen.signers().collect();
                        let s = adversarial_sign(ctx, node, &chosen.message, &rcpt, &prefix)?;
                        let mut next = chosen.clone();
                        next.chain.push(s);
                        signed.insert((node, chosen), next.clone());
                        next
                    }
                } else {
                    unreachable!()
                };
                let (kind, round) = if auth {
                    (ChannelKind::Authenticated, ctx.params.m)
                } else {
                    (ChannelKind::Insecure, ctx.round)
                };
                out.push(Outgoing::packet(node, t, kind, &packet, round)?);
            }
        }
        Ok(out)
    }

    fn forge_sends(
        &mut self,
        ctx: &mut AdvCtx<'_>,
        node: NodeId,
        shadow: &Action,
    ) -> Result<Vec<Outgoing>, SimError> {
        let (targets, mut packet, auth) = match shadow {
            Action::SignAndForward { targets, packet } => {
                let mut inner = packet.clone();
                inner.chain.pop();
                (targets, inner, false)
            }
            Action::AuthForward { targets, packet } => (targets, packet.clone(), true),
            _ => return Ok(Vec::new()),
        };
        let len = packet.message.len();
        packet.message = distinct_messages(&packet.message, 2, ctx.rng)
            .pop()
            .expect("two");
        debug_assert_eq!(packet.message.len(), len);
        let (kind, round) = if auth {
            (ChannelKind::Authenticated, ctx.params.m)
        } else {
            let prefix: Vec<NodeId> = packet.signers().collect();
            let rcpt = targets.clone();
            let s = adversarial_sign(ctx, node, &packet.message, &rcpt, &prefix)?;
            packet.chain.push(s);
            (ChannelKind::Insecure, ctx.round + 1)
        };
        targets
            .iter()
            .map(|&t| Outgoing::packet(node, t, kind, &packet, round))
            .collect()
    }
}

impl Adversary for Scripted {
    fn controlled(&self) -> &BTreeSet<NodeId> {
        &self.controlled
    }

    fn shares_keys(&self) -> bool {
        self.strategy == Strategy::Collude
    }

    fn on_issue(
        &mut self,
        ctx: &mut AdvCtx<'_>,
        shadow: Vec<(NodeId, SignedPacket)>,
    ) -> Result<Vec<Outgoing>, SimError> {
        let c = NodeId::COMMANDER;
        self.msg_len = shadow[0].1.message.len().max(1);
        let plan: Vec<(NodeId, SignedPacket)> = match self.strategy {
            Strategy::Drop => Vec::new(),
            Strategy::Equivocate => self.equivocating_issue(ctx, &shadow)?,
            Strategy::SelectiveDrop => self
                .equivocating_issue(ctx, &shadow)?
                .into_iter()
                .filter(|(to, _)| to.0 % 2 == 1)
                .collect(),
            Strategy::Collude => {
                let mut plan: Vec<(NodeId, SignedPacket)> = shadow
                    .iter()
                    .filter(|(to, _)| self.controlled.contains(to))
                    .cloned()
                    .collect();
                if let Some(h) = Self::collude_target(ctx) {
                    let minted = self.mint(ctx, 0, shadow[0].1.message.len())?;
                    plan.push((h, minted));
                }
                plan
            }
            _ => shadow,
        };
        let mut out = Vec::with_capacity(plan.len());
        for (to, p) in plan {
            let o = Outgoing::packet(c, to, ChannelKind::Insecure, &p, 0)?;
            if self.strategy == Strategy::Replay {
                self.log(c, &o.frame);
            }
            out.push(o);
        }
        Ok(out)
    }

    fn on_round_start(&mut self, ctx: &mut AdvCtx<'_>) -> Result<Vec<Outgoing>, SimError> {
        let round = ctx.round;
        match self.strategy {
            Strategy::Equivocate => self.flush_equivocation(ctx),
            Strategy::Replay if round >= 1 => {
                let honest = ctx.honest_lieutenants();
                let relay = self.controlled_lieutenants().first().copied();
                let mut out = Vec::new();
                for (holder, frame) in &self.replay_log {
                    for &h in &honest {
                        out.push(Outgoing {
                            from: *holder,
                            to: h,
                            kind: ChannelKind::Insecure,
                            frame: frame.clone(),
                            round,
                        });
                        if round == ctx.params.m {
                            let from = if holder.is_commander() {
                                relay
                            } else {
                                Some(*holder)
                            };
                            if let Some(from) = from {
                                out.push(Outgoing {
                                    from,
                                    to: h,
                                    kind: ChannelKind::Authenticated,
                                    frame: frame.clone(),
                                    round,
                                });
                            }
                        }
                    }
                }
                Ok(out)
            }
            Strategy::Collude if round >= 1 && self.commander_controlled() => {
                let lts = self.controlled_lieutenants();
                if round > lts.len() || round + 1 > ctx.params.m {
                    return Ok(Vec::new());
                }
                let Some(h) = Self::collude_target(ctx) else {
                    return Ok(Vec::new());
                };
                let minted = self.mint(ctx, round, self.msg_len)?;
                Ok(vec![Outgoing::packet(
                    lts[round - 1],
                    h,
                    ChannelKind::Insecure,
                    &minted,
                    round,
                )?])
            }
            _ => Ok(Vec::new()),
        }
    }

    fn on_receive(
        &mut self,
        ctx: &mut AdvCtx<'_>,
        node: NodeId,
        env: &Envelope,
        packet: &SignedPacket,
        shadow: &Action,
    ) -> Result<Vec<Outgoing>, SimError> {
        if shadow.verified() {
            let held = self.accepted.entry(node).or_default();
            if !held.contains(packet) {
                held.push(packet.clone());
            }
        }
        let sends = honest_sends(node, shadow, ctx.round, ctx.params.m)?;
        match self.strategy {
            Strategy::Honest | Strategy::TamperInsecure => Ok(sends),
            Strategy::Drop => Ok(Vec::new()),
            Strategy::Replay => {
                self.log(node, &env.frame);
                for s in &sends {
                    self.log(node, &s.frame);
                }
                Ok(sends)
            }
            Strategy::SelectiveDrop => {
                let keep = sends.len() / 2;
                Ok(sends.into_iter().take(keep).collect())
            }
            Strategy::Collude => {
                let target = Self::collude_target(ctx);
                Ok(sends
                    .into_iter()
                    .filter(|s| self.controlled.contains(&s.to) || Some(s.to) == target)
                    .collect())
            }
            Strategy::Equivocate => {
                if !sends.is_empty() {
                    self.pending.push((node, shadow.clone()));
                }
                Ok(Vec::new())
            }
            Strategy::Forge => self.forge_sends(ctx, node, shadow),
        }
    }

    fn on_forward(&mut self, _ctx: &mut AdvCtx<'_>, env: &Envelope) -> ForwardDecision {
        if self.strategy == Strategy::TamperInsecure && env.kind == ChannelKind::Insecure {
            ForwardDecision::Replace(flip_first_message_bit(&env.frame))
        } else {
            ForwardDecision::Deliver
        }
    }
}

fn flip_first_message_bit(frame: &[u8]) -> Vec<u8> {
    let mut f = frame.to_vec();
    let msg_bits = u32::from_be_bytes(f[..4].try_into().expect("frame header"));
    if msg_bits > 0 {
        f[4] ^= 0x80;
    } else if let Some(last) = f.last_mut() {
        *last ^= 0x80;
    }
    f
}

/// `count` messages of the same length as `base`, the first being `base`.
/// Distinct whenever the length leaves room for that many.
pub(crate) fn distinct_messages<R: RngCore + ?Sized>(
    base: &BitString,
    count: usize,
    rng: &mut R,
) -> Vec<BitString> {
    let mut out = vec![base.clone()];
    while out.len() < count {
        let mut cand = BitString::random(base.len(), rng);
        for _ in 0..64 {
            if !out.contains(&cand) {
                break;
            }
            cand = BitString::random(base.len(), rng);
        }
        out.push(cand);
    }
    out
}

/// Signs with the adversary's own pools. Key bits hit the shared ledger;
/// the tags count as off-schedule adversary work.
fn adversarial_sign(
    ctx: &mut AdvCtx<'_>,
    signer: NodeId,
    msg: &BitString,
    recipients: &BTreeSet<NodeId>,
    prefix: &[NodeId],
) -> Result<SignatureMatrix, SimError> {
    let l = ctx.params.l;
    let (mut keys, ledger, rng) = ctx.parts(signer);
    let mut scratch = ResourceLedger::default();
    let s = qsm_sign(
        msg,
        signer,
        recipients,
        prefix,
        l,
        &mut keys,
        &mut scratch,
        rng,
    )?;
    for (link, bits) in scratch.key_bits_per_link {
        ledger.charge_key_bits(link, bits);
    }
    ledger.charge_adversary_hash_ops(scratch.hash_ops);
    Ok(s)
}

/// Signs `msg` for the recipients of `template`, reusing the pads and hash
/// keys the signer already committed to under `prefix`.
fn resign_reusing_pads(
    ctx: &mut AdvCtx<'_>,
    signer: NodeId,
    template: &SignatureMatrix,
    prefix: &[NodeId],
    msg: &BitString,
) -> Result<SignatureMatrix, SimError> {
    let mut parts = Vec::with_capacity(template.parts.len());
    for part in &template.parts {
        let l = part.enc_hash_fn.len();
        let link = LinkId::new(signer, part.recipient).map_err(QsmError::from)?;
        let label = sig_label(signer, part.recipient, prefix);
        let keys = ctx.keys(signer);
        let pad = keys
            .resolve(link, &label)
            .map_err(QsmError::from)?
            .first()
            .ok_or_else(|| QsmError::MalformedSignature(format!("no pad under {label}")))?
            .bits
            .clone();
        let low = part
            .enc_hash_fn
            .xor(&pad.slice(0, l))
            .map_err(QsmError::from)?;
        let key = HashKey::from_low_coeffs(low).map_err(QsmError::from)?;
        let tag = key.hasher().hash(msg);
        ctx.ledger.charge_adversary_hash_ops(1);
        parts.push(seal_partial(part.recipient, &key, &tag, &pad)?);
    }
    Ok(SignatureMatrix { signer, parts })
}
