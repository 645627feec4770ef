use std::collections::BTreeSet;

use qsba_core::gf2hash::BitString;
use qsba_core::keystore::{NodeId, PoolCapacities};
use qsba_core::metrics::{qsba_link_bits, AuthCostModel};
use qsba_core::qsba::ProtocolParams;
use qsba_core::qsm::SignedPacket;
use qsba_core::scenario::{preset, run_scenario, ScenarioConfig};
use qsba_core::simnet::{
    run_protocol, AdvCtx, Adversary, ChannelKind, Honest, Outgoing, RunConfig, RunStatus, Scripted,
    SimError, Strategy,
};

fn params(n: usize, m: usize, l: usize) -> ProtocolParams {
    ProtocolParams::new(n, m, l, BitString::zeros(8)).unwrap()
}

fn cmd() -> BitString {
    BitString::from_bytes(b"retreat".to_vec())
}

#[test]
fn honest_commander_is_obeyed_at_every_size() {
    for n in 3..=7 {
        for m in 1..=n - 2 {
            let out = run_protocol(
                &params(n, m, 32),
                &cmd(),
                &RunConfig::default(),
                &mut Honest::default(),
            )
            .unwrap();
            assert!(out.verdict.holds(), "n={n} m={m}");
            assert_eq!(out.decisions.len(), n - 1);
            assert!(out.decisions.values().all(|d| *d == cmd()));
        }
    }
}

#[test]
fn three_faults_at_five_nodes() {
    // m = 3 at n = 5 leaves a single honest lieutenant; with a faulty
    // commander the conditions are vacuous, so fault the lieutenants only.
    for s in Strategy::FAMILY {
        let mut adv = Scripted::new(s, [NodeId(1), NodeId(2), NodeId(3)]);
        let out = run_protocol(&params(5, 3, 32), &cmd(), &RunConfig::default(), &mut adv).unwrap();
        assert!(out.verdict.holds(), "{s}");
        assert_eq!(out.decisions[&NodeId(4)], cmd(), "{s}");
    }
    for s in Strategy::FAMILY {
        let mut adv = Scripted::new(s, [NodeId(0), NodeId(1), NodeId(2)]);
        let out = run_protocol(&params(5, 3, 32), &cmd(), &RunConfig::default(), &mut adv).unwrap();
        assert!(out.verdict.holds(), "{s}");
        let ds: BTreeSet<_> = out.decisions.values().collect();
        assert_eq!(ds.len(), 1, "{s}");
    }
}

#[test]
fn equivocation_is_exposed_at_paper_size() {
    let mut adv = Scripted::new(Strategy::Equivocate, [NodeId::COMMANDER]);
    let out = run_protocol(&params(5, 2, 54), &cmd(), &RunConfig::default(), &mut adv).unwrap();
    assert!(out.verdict.holds());
    for v in out.message_sets.values() {
        assert_eq!(v.len(), 4);
    }
    assert!(out.decisions.values().all(|d| *d == BitString::zeros(8)));
    let (c, l) = qsba_link_bits(5, 2, 54).unwrap();
    let (cc, ll) = out.ledger.link_class_bits();
    assert_eq!((cc, ll), (vec![c as u64], vec![l as u64]));
    assert_eq!(out.ledger.adversary_hash_ops, 12);
}

#[test]
fn costed_model_only_adds_overhead() {
    let run = |auth_cost| {
        let cfg = RunConfig {
            auth_cost,
            ..RunConfig::default()
        };
        let mut adv = Scripted::new(Strategy::Equivocate, [NodeId::COMMANDER]);
        run_protocol(&params(5, 2, 54), &cmd(), &cfg, &mut adv).unwrap()
    };
    let (a, c) = (run(AuthCostModel::Axiomatic), run(AuthCostModel::Costed));
    assert_eq!(a.ledger.hash_ops, c.ledger.hash_ops);
    assert_eq!(c.ledger.auth_overhead_hash_ops, 24);
    assert_eq!(c.ledger.auth_overhead_key_strings, 24);
    let t = c.ledger.totals();
    assert_eq!((t.hash_ops, t.key_strings, t.auth_uses), (40, 40, 24));
    assert_eq!(a.transcript.to_jsonl(), c.transcript.to_jsonl());
}

#[test]
fn small_pools_abort_with_partial_ledger() {
    let cfg = RunConfig {
        capacities: PoolCapacities {
            commander_link_bits: 1_000,
            lieutenant_link_bits: 150,
        },
        ..RunConfig::default()
    };
    let mut adv = Scripted::new(Strategy::Equivocate, [NodeId::COMMANDER]);
    let out = run_protocol(&params(5, 2, 54), &cmd(), &cfg, &mut adv).unwrap();
    assert_eq!(out.verdict.status, RunStatus::AbortedKeyExhausted);
    assert!(!out.verdict.holds());
    assert!(out.abort_reason.unwrap().contains("key-exhausted"));
    assert_eq!(out.ledger.hash_ops, 4 + 3);
    for (link, cursor) in &out.pool_cursors {
        let cap = cfg.capacities.for_link(*link);
        assert!(*cursor <= cap, "{link}");
    }
}

/// A commander that corrupts the partial signature addressed to lieutenant
/// 2 and sends only to lieutenant 1.
struct SplitSignature {
    controlled: BTreeSet<NodeId>,
}

impl Adversary for SplitSignature {
    fn controlled(&self) -> &BTreeSet<NodeId> {
        &self.controlled
    }

    fn on_issue(
        &mut self,
        _ctx: &mut AdvCtx<'_>,
        shadow: Vec<(NodeId, SignedPacket)>,
    ) -> Result<Vec<Outgoing>, SimError> {
        let (_, mut p) = shadow.into_iter().next().expect("lieutenants exist");
        let part = p.chain[0]
            .parts
            .iter_mut()
            .find(|x| x.recipient == NodeId(2))
            .unwrap();
        part.enc_hash_val.flip(0);
        Ok(vec![Outgoing::packet(
            NodeId::COMMANDER,
            NodeId(1),
            ChannelKind::Insecure,
            &p,
            0,
        )?])
    }
}

/// Partial signatures are checked only by their addressee, so a signer can
/// hand out a matrix that some recipients accept and others reject. This
/// breaks agreement; it lies outside the scripted strategy family.
#[test]
fn split_signature_commander_breaks_agreement() {
    let mut adv = SplitSignature {
        controlled: [NodeId::COMMANDER].into(),
    };
    let out = run_protocol(&params(4, 1, 32), &cmd(), &RunConfig::default(), &mut adv).unwrap();
    assert_eq!(out.verdict.status, RunStatus::Completed);
    assert_eq!(out.decisions[&NodeId(1)], cmd());
    assert_eq!(out.decisions[&NodeId(3)], cmd());
    assert_eq!(out.decisions[&NodeId(2)], BitString::zeros(8));
    assert!(!out.verdict.condition_i);
}

#[test]
fn presets_behave() {
    let paper = run_scenario(&preset("five-node-paper").unwrap()).unwrap();
    assert!(paper.report.verdict.holds());
    assert!(!paper.report.verdict.commander_honest);
    assert!(paper.report.within_capacity);
    assert_eq!(paper.report.budget.max_rounds, Some(103));

    let drop = run_scenario(&preset("four-node-drop").unwrap()).unwrap();
    assert!(drop.report.verdict.holds());
    assert!(!drop.report.decisions.contains_key(&NodeId(2)));
}

#[test]
fn scenario_message_from_file() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("m.bin"), [0xA5u8; 40]).unwrap();
    let path = dir.join("s.toml");
    std::fs::write(
        &path,
        "name = 'f'\nn = 4\nm = 2\nl = 20\n[message]\nfile = 'm.bin'\n",
    )
    .unwrap();
    let cfg = ScenarioConfig::load(&path).unwrap();
    assert_eq!(
        cfg.message().unwrap(),
        BitString::from_bytes(vec![0xA5; 40])
    );
    let run = run_scenario(&cfg).unwrap();
    assert!(run.report.decisions.values().all(|d| d == &"a5".repeat(40)));
}
