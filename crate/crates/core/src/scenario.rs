//! Scenario files, bundled presets and the report types behind the CLI.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::baselines::{
    mqsm_run, qba_enumerate, qds_run, qsm3_run, strictly_cheaper, TamperPoint, TriPartyOutcome,
};
use crate::gf2hash::BitString;
use crate::keystore::{Keystore, NodeId, PoolCapacities};
use crate::metrics::{
    advantage_row, complexity_table, key_budget, mesh_pools, qsba_auth_uses, qsba_complexity,
    qsba_link_bits, Advantage, AuthCostModel, BudgetReport, ComplexityRow, MetricsError,
    ResourceLedger,
};
use crate::qsba::{ProtocolParams, QsbaError};
use crate::qsm::QsmError;
use crate::simnet::{frame_digest, Honest, Scripted, Strategy, Transcript};
use crate::simnet::{run_protocol, Adversary, RunConfig, SimError, Verdict};

pub const REPORT_SCHEMA: &str = "qsba-run-report/1";

pub fn ser_bits_hex<S: Serializer>(b: &BitString, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&b.to_hex())
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid-scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid-scenario: {0}")]
    Invalid(String),
    #[error("io-error: {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("unknown-preset: {0}")]
    UnknownPreset(String),
    #[error(transparent)]
    Params(#[from] QsbaError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Qsm(#[from] QsmError),
}

impl ScenarioError {
    /// True for problems with the input rather than with a run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Self::Parse(_)
                | Self::Invalid(_)
                | Self::UnknownPreset(_)
                | Self::Params(_)
                | Self::Metrics(_)
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MessageSpec {
    pub hex: Option<String>,
    /// Relative paths resolve against the scenario file's directory.
    pub file: Option<PathBuf>,
    /// Pseudo-random bytes derived from the scenario seed.
    pub random_bytes: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySpec {
    #[serde(default)]
    pub controlled: Vec<u8>,
    #[serde(default = "honest_name")]
    pub strategy: String,
}

impl Default for AdversarySpec {
    fn default() -> Self {
        Self {
            controlled: Vec::new(),
            strategy: honest_name(),
        }
    }
}

fn honest_name() -> String {
    Strategy::Honest.name().to_string()
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSpec {
    pub report: Option<PathBuf>,
    pub transcript: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub l: usize,
    #[serde(default)]
    pub seed: u64,
    /// Hex.
    #[serde(default = "default_command_hex")]
    pub default_command: String,
    #[serde(default)]
    pub auth_cost: AuthCostModel,
    #[serde(default)]
    pub message: MessageSpec,
    #[serde(default)]
    pub pools: PoolCapacities,
    #[serde(default)]
    pub adversary: AdversarySpec,
    #[serde(default)]
    pub report: ReportSpec,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_command_hex() -> String {
    "00".into()
}

fn parse_hex(field: &str, s: &str) -> Result<BitString, ScenarioError> {
    let bytes =
        hex::decode(s.trim()).map_err(|e| ScenarioError::Invalid(format!("{field}: {e}")))?;
    Ok(BitString::from_bytes(bytes))
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    /// Loads `spec` as a file if it exists, otherwise as a preset name.
    pub fn load_or_preset(spec: &str) -> Result<Self, ScenarioError> {
        let path = Path::new(spec);
        if path.exists() {
            Self::load(path)
        } else {
            preset(spec)
        }
    }

    pub fn params(&self) -> Result<ProtocolParams, ScenarioError> {
        let dc = parse_hex("default_command", &self.default_command)?;
        Ok(ProtocolParams::new(self.n, self.m, self.l, dc)?)
    }

    pub fn strategy(&self) -> Result<Strategy, ScenarioError> {
        self.adversary
            .strategy
            .parse()
            .map_err(|e: String| ScenarioError::Invalid(format!("adversary.strategy: {e}")))
    }

    pub fn controlled(&self) -> BTreeSet<NodeId> {
        self.adversary
            .controlled
            .iter()
            .map(|&c| NodeId(c))
            .collect()
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            seed: self.seed,
            capacities: self.pools,
            auth_cost: self.auth_cost,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let params = self.params()?;
        let strategy = self.strategy()?;
        let controlled = self.controlled();
        if controlled.len() != self.adversary.controlled.len() {
            return Err(ScenarioError::Invalid(
                "adversary.controlled: duplicate ids".into(),
            ));
        }
        if let Some(c) = controlled.iter().find(|c| c.index() >= params.n) {
            return Err(ScenarioError::Invalid(format!(
                "adversary.controlled: {c} is not a node"
            )));
        }
        if controlled.len() > params.m {
            return Err(ScenarioError::Invalid(format!(
                "adversary.controlled: {} nodes exceed m = {}",
                controlled.len(),
                params.m
            )));
        }
        if strategy == Strategy::Honest && !controlled.is_empty() {
            return Err(ScenarioError::Invalid(
                "adversary: strategy honest takes no controlled nodes".into(),
            ));
        }
        let m = &self.message;
        let given = [m.hex.is_some(), m.file.is_some(), m.random_bytes.is_some()];
        if given.iter().filter(|&&g| g).count() > 1 {
            return Err(ScenarioError::Invalid(
                "message: give at most one of hex, file, random_bytes".into(),
            ));
        }
        if let Some(h) = &m.hex {
            parse_hex("message.hex", h)?;
        }
        Ok(())
    }

    /// The command the (honest) commander issues. Defaults to 8 seeded bytes.
    pub fn message(&self) -> Result<BitString, ScenarioError> {
        let m = &self.message;
        if let Some(h) = &m.hex {
            return parse_hex("message.hex", h);
        }
        if let Some(f) = &m.file {
            let path = match &self.base_dir {
                Some(d) if f.is_relative() => d.join(f),
                _ => f.clone(),
            };
            let bytes =
                std::fs::read(&path).map_err(|source| ScenarioError::Io { path, source })?;
            return Ok(BitString::from_bytes(bytes));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(3);
        Ok(BitString::random(8 * m.random_bytes.unwrap_or(8), &mut rng))
    }

    pub fn adversary(&self) -> Result<Box<dyn Adversary>, ScenarioError> {
        Ok(match self.strategy()? {
            Strategy::Honest => Box::new(Honest::default()),
            s => Box::new(Scripted::new(s, self.controlled())),
        })
    }
}

const PRESETS: [(&str, &str); 3] = [
    (
        "five-node-paper",
        include_str!("../presets/five-node-paper.toml"),
    ),
    (
        "five-node-honest",
        include_str!("../presets/five-node-honest.toml"),
    ),
    (
        "four-node-drop",
        include_str!("../presets/four-node-drop.toml"),
    ),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn preset(name: &str) -> Result<ScenarioConfig, ScenarioError> {
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| ScenarioError::UnknownPreset(name.to_string()))?;
    ScenarioConfig::from_toml(text)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AdversaryReport {
    pub controlled: Vec<NodeId>,
    pub strategy: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LinkClassBits {
    pub commander: Vec<u64>,
    pub lieutenant: Vec<u64>,
}

/// Closed-form per-run resources of an honest QSBA run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FormulaCapacities {
    pub hash_ops: u128,
    pub auth_uses: u128,
    pub commander_link_bits: u128,
    pub lieutenant_link_bits: u128,
}

impl FormulaCapacities {
    pub fn of(n: usize, m: usize, l: usize) -> Result<Self, MetricsError> {
        let (c, t) = qsba_link_bits(n, m, l)?;
        Ok(Self {
            hash_ops: qsba_complexity(n, m)?,
            auth_uses: qsba_auth_uses(n, m)?,
            commander_link_bits: c,
            lieutenant_link_bits: t,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BudgetSummary {
    pub commander_link_capacity: u64,
    pub lieutenant_link_capacity: u64,
    pub commander_cost_per_round: u64,
    pub lieutenant_cost_per_round: u64,
    pub binding_class: Option<String>,
    pub max_rounds: Option<u64>,
}

/// How many runs the given pools sustain at the formula cost per run.
pub fn budget_summary(
    n: usize,
    m: usize,
    l: usize,
    caps: PoolCapacities,
) -> Result<(BudgetSummary, BudgetReport), MetricsError> {
    let (c, t) = qsba_link_bits(n, m, l)?;
    let (c, t) = (
        u64::try_from(c).map_err(|_| MetricsError::Overflow)?,
        u64::try_from(t).map_err(|_| MetricsError::Overflow)?,
    );
    // With m = 1 lieutenants never draw keys; those links do not bind.
    let pools: Vec<_> = mesh_pools(n, caps.commander_link_bits, caps.lieutenant_link_bits)
        .into_iter()
        .filter(|(link, _)| {
            if link.is_commander_link() {
                c > 0
            } else {
                t > 0
            }
        })
        .collect();
    let report = key_budget(&pools, |link| if link.is_commander_link() { c } else { t })?;
    let summary = BudgetSummary {
        commander_link_capacity: caps.commander_link_bits,
        lieutenant_link_capacity: caps.lieutenant_link_bits,
        commander_cost_per_round: c,
        lieutenant_cost_per_round: t,
        binding_class: report.binding.as_ref().map(|b| {
            if b.link.is_commander_link() {
                "commander-lieutenant".to_string()
            } else {
                "lieutenant-lieutenant".to_string()
            }
        }),
        max_rounds: report.binding.as_ref().map(|b| b.max_rounds),
    };
    Ok((summary, report))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub schema: String,
    /// Unix seconds; the only field that differs between identical runs.
    pub generated_at: u64,
    pub scenario: String,
    pub seed: u64,
    pub params: ProtocolParams,
    pub auth_cost: AuthCostModel,
    pub message_bits: usize,
    pub adversary: AdversaryReport,
    pub verdict: Verdict,
    pub abort_reason: Option<String>,
    /// Hex-encoded decision per honest lieutenant.
    pub decisions: BTreeMap<NodeId, String>,
    pub ledger: ResourceLedger,
    pub link_class_bits: LinkClassBits,
    pub formula: FormulaCapacities,
    pub budget: BudgetSummary,
    pub within_capacity: bool,
    pub transcript_records: usize,
    pub transcript_digest: String,
    pub transcript_path: Option<String>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Everything a run produced.
pub struct ScenarioRun {
    pub report: RunReport,
    pub transcript: Transcript,
}

pub fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioRun, ScenarioError> {
    cfg.validate()?;
    let params = cfg.params()?;
    let message = cfg.message()?;
    let mut adversary = cfg.adversary()?;
    let out = run_protocol(&params, &message, &cfg.run_config(), adversary.as_mut())?;

    let (commander, lieutenant) = out.ledger.link_class_bits();
    let formula = FormulaCapacities::of(params.n, params.m, params.l)?;
    let (budget, _) = budget_summary(params.n, params.m, params.l, cfg.pools)?;
    let within_capacity = out.ledger.key_bits_per_link.iter().all(|(link, &b)| {
        let cap = if link.is_commander_link() {
            formula.commander_link_bits
        } else {
            formula.lieutenant_link_bits
        };
        u128::from(b) <= cap
    });
    let jsonl = out.transcript.to_jsonl();
    let report = RunReport {
        schema: REPORT_SCHEMA.into(),
        generated_at: now_unix(),
        scenario: cfg.name.clone(),
        seed: cfg.seed,
        auth_cost: cfg.auth_cost,
        message_bits: message.len(),
        adversary: AdversaryReport {
            controlled: cfg.controlled().into_iter().collect(),
            strategy: cfg.strategy()?.name().into(),
        },
        verdict: out.verdict.clone(),
        abort_reason: out.abort_reason.clone(),
        decisions: out
            .decisions
            .iter()
            .map(|(k, v)| (*k, v.to_hex()))
            .collect(),
        ledger: out.ledger.clone(),
        link_class_bits: LinkClassBits {
            commander,
            lieutenant,
        },
        formula,
        budget,
        within_capacity,
        transcript_records: out.transcript.len(),
        transcript_digest: frame_digest(jsonl.as_bytes()),
        transcript_path: None,
        params,
    };
    Ok(ScenarioRun {
        report,
        transcript: out.transcript,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MeasuredRow {
    pub hash_ops: u64,
    pub key_strings: u64,
    pub auth_uses: u64,
    pub commander_link_bits: Vec<u64>,
    pub lieutenant_link_bits: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ThreeParty {
    pub auth_cost: AuthCostModel,
    pub outcomes: Vec<TriPartyOutcome>,
    pub ordering: String,
    pub ordering_holds: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CompareReport {
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub formula: [ComplexityRow; 2],
    pub advantage: Advantage,
    pub qsba_link_bits: (u128, u128),
    /// Equivocating-commander QSBA run; `None` when too large to simulate.
    pub qsba_measured: Option<MeasuredRow>,
    pub qba_measured: MeasuredRow,
    pub three_party: ThreeParty,
}

/// Largest `n` for which [`compare`] simulates QSBA.
pub const COMPARE_SIM_MAX_N: usize = 8;

/// Runs the three reference protocols once each, honestly, on a fresh
/// three-node keystore.
pub fn three_party(
    l: usize,
    seed: u64,
    auth_cost: AuthCostModel,
) -> Result<ThreeParty, ScenarioError> {
    let mut ks = Keystore::new(3, PoolCapacities::default(), seed);
    let mut led = ResourceLedger::new(auth_cost);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let msg = BitString::random(256, &mut rng);
    let q = qsm3_run(&msg, l, &mut ks, &mut led, &mut rng, TamperPoint::None)?;
    let d = qds_run(&msg, l, &mut ks, &mut led, &mut rng, TamperPoint::None)?;
    let mq = mqsm_run(&msg, l, &mut ks, &mut led, &mut rng, TamperPoint::None)?;
    let ordering_holds =
        strictly_cheaper(&q.delta, &d.delta) && strictly_cheaper(&d.delta, &mq.delta);
    Ok(ThreeParty {
        auth_cost,
        ordering: "QSM < QDS < mQSM".into(),
        ordering_holds,
        outcomes: vec![q, d, mq],
    })
}

pub fn compare(
    n: usize,
    m: usize,
    l: usize,
    seed: u64,
    auth_cost: AuthCostModel,
) -> Result<CompareReport, ScenarioError> {
    let formula = complexity_table(n, m)?;
    let advantage = advantage_row(n, m)?;
    let qsba_link_bits = qsba_link_bits(n, m, l)?;
    let qsba_measured = if n <= COMPARE_SIM_MAX_N {
        let params = ProtocolParams::new(n, m, l, BitString::zeros(8))?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let msg = BitString::random(64, &mut rng);
        let cfg = RunConfig {
            seed,
            capacities: PoolCapacities {
                commander_link_bits: u64::MAX,
                lieutenant_link_bits: u64::MAX,
            },
            auth_cost: AuthCostModel::Axiomatic,
        };
        let mut adv = Scripted::new(Strategy::Equivocate, [NodeId::COMMANDER]);
        let out = run_protocol(&params, &msg, &cfg, &mut adv)?;
        let (c, t) = out.ledger.link_class_bits();
        Some(MeasuredRow {
            hash_ops: out.ledger.hash_ops,
            key_strings: out.ledger.key_strings,
            auth_uses: out.ledger.auth_uses,
            commander_link_bits: c,
            lieutenant_link_bits: t,
        })
    } else {
        None
    };
    let flow = qba_enumerate(n, m, l)?;
    let (c, t) = flow.link_class_bits();
    Ok(CompareReport {
        n,
        m,
        l,
        formula,
        advantage,
        qsba_link_bits,
        qsba_measured,
        qba_measured: MeasuredRow {
            hash_ops: flow.hash_ops,
            key_strings: flow.key_strings,
            auth_uses: flow.auth_uses,
            commander_link_bits: c,
            lieutenant_link_bits: t,
        },
        three_party: three_party(l, seed, auth_cost)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        for name in preset_names() {
            let cfg = preset(name).unwrap();
            assert_eq!(cfg.name, name);
        }
        let p = preset("five-node-paper").unwrap();
        assert_eq!(p.message().unwrap().len(), 800_000);
        assert_eq!(p.pools, PoolCapacities::default());
        assert!(matches!(
            preset("nope"),
            Err(ScenarioError::UnknownPreset(_))
        ));
    }

    #[test]
    fn rejects_bad_configs() {
        let base = "name='x'\nn=4\nm=1\nl=16\n";
        ScenarioConfig::from_toml(base).unwrap();
        for bad in [
            "name='x'\nn=4\nm=3\nl=16\n",
            "name='x'\nn=4\nm=1\nl=1\n",
            "name='x'\nn=4\nm=1\nl=16\nbogus=1\n",
            "name='x'\nn=4\nm=1\nl=16\n[adversary]\ncontrolled=[1,2]\nstrategy='drop'\n",
            "name='x'\nn=4\nm=1\nl=16\n[adversary]\ncontrolled=[9]\nstrategy='drop'\n",
            "name='x'\nn=4\nm=1\nl=16\n[adversary]\nstrategy='sneaky'\n",
            "name='x'\nn=4\nm=1\nl=16\n[message]\nhex='abc'\n",
            "name='x'\nn=4\nm=1\nl=16\n[message]\nhex='ab'\nrandom_bytes=3\n",
            "name='x'\nn=4\nm=1\nl=16\nauth_cost='free'\n",
        ] {
            let err = ScenarioConfig::from_toml(bad).unwrap_err();
            assert!(err.is_config(), "{bad}: {err}");
        }
    }

    #[test]
    fn honest_preset_holds() {
        let run = run_scenario(&preset("five-node-honest").unwrap()).unwrap();
        assert!(run.report.verdict.holds());
        assert!(run.report.within_capacity);
        assert_eq!(run.report.decisions.len(), 4);
        assert!(run.report.decisions.values().all(|d| d == "52455452454154"));
    }

    #[test]
    fn drop_preset_holds() {
        let run = run_scenario(&preset("four-node-drop").unwrap()).unwrap();
        assert!(run.report.verdict.holds());
        assert_eq!(run.report.decisions.len(), 2);
    }

    #[test]
    fn budget_at_default_pools() {
        let (s, r) = budget_summary(5, 2, 54, PoolCapacities::default()).unwrap();
        assert_eq!(s.binding_class.as_deref(), Some("lieutenant-lieutenant"));
        assert_eq!(s.max_rounds, Some(103));
        let cmd = r.links.iter().find(|b| b.link.is_commander_link()).unwrap();
        assert_eq!(cmd.max_rounds, 2_212_500);
    }

    #[test]
    fn compare_five_two() {
        let c = compare(5, 2, 54, 1, AuthCostModel::Costed).unwrap();
        let q = c.qsba_measured.unwrap();
        assert_eq!((q.hash_ops, q.key_strings, q.auth_uses), (16, 16, 24));
        assert_eq!(
            (q.commander_link_bits, q.lieutenant_link_bits),
            (vec![108], vec![216])
        );
        assert_eq!(c.qba_measured.commander_link_bits, vec![648]);
        assert!(c.three_party.ordering_holds);
        let axiomatic = three_party(54, 1, AuthCostModel::Axiomatic).unwrap();
        assert!(!axiomatic.ordering_holds);
    }
}
