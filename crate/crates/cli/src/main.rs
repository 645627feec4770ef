//! `qsba`: run scenarios, sweep adversaries, compare resource use.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qsba_core::keystore::PoolCapacities;
use qsba_core::metrics::AuthCostModel;
use qsba_core::scenario::{budget_summary, compare, run_scenario, ScenarioConfig, ScenarioError};
use qsba_core::simnet::{
    forgery_experiment, strategy_sweep, sweep_cases, AttackConfig, RunStatus, Strategy,
    SweepConfig, SweepRow, SweepSummary,
};
use serde::Serialize;

const EXIT_VIOLATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_KEY_EXHAUSTED: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(
    name = "qsba",
    version,
    about = "Signed-message Byzantine agreement simulator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario file or preset.
    Run(RunArgs),
    /// Sweep every malicious subset against scripted strategies.
    Sweep(SweepArgs),
    /// QSBA vs QBA resource table and the three-party baselines.
    Compare(CompareArgs),
    /// Monte Carlo forgery experiment.
    Attack(AttackArgs),
    /// How many runs the key pools sustain.
    Budget(BudgetArgs),
    /// List bundled presets.
    Presets,
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum CostArg {
    Axiomatic,
    Costed,
}

impl From<CostArg> for AuthCostModel {
    fn from(c: CostArg) -> Self {
        match c {
            CostArg::Axiomatic => AuthCostModel::Axiomatic,
            CostArg::Costed => AuthCostModel::Costed,
        }
    }
}

#[derive(Args)]
struct Common {
    /// Output directory; without it results go to stdout.
    #[arg(long, env = "QSBA_OUT_DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file, or the name of a bundled preset.
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    auth_cost: Option<CostArg>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SweepArgs {
    /// Network sizes.
    #[arg(long, value_delimiter = ',', default_value = "3,4,5")]
    n: Vec<usize>,
    /// Strategy names; defaults to the scripted family. An empty value
    /// gives an empty table.
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<String>>,
    #[arg(long, default_value_t = 54)]
    l: usize,
    #[arg(long, default_value_t = 64)]
    msg_bits: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum)]
    auth_cost: Option<CostArg>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 54)]
    l: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "costed")]
    auth_cost: CostArg,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long, default_value_t = 16)]
    l: usize,
    #[arg(long, default_value_t = 1000)]
    msg_bits: usize,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Take the message (and l) from a scenario instead.
    #[arg(long)]
    scenario: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct BudgetArgs {
    /// Take n, m, l and pool sizes from a scenario.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 54)]
    l: usize,
    #[arg(long)]
    commander_bits: Option<u64>,
    #[arg(long)]
    lieutenant_bits: Option<u64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    msg: String,
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let code = match &e {
            ScenarioError::Io { .. } => EXIT_IO,
            e if e.is_config() => EXIT_CONFIG,
            _ => EXIT_VIOLATION,
        };
        Failure {
            code,
            msg: e.to_string(),
        }
    }
}

fn io_fail(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_IO,
        msg: format!("io-error: {}: {e}", path.display()),
    }
}

fn config_fail(msg: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        msg: msg.into(),
    }
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn csv_of<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("flat row");
    }
    String::from_utf8(w.into_inner().expect("in-memory")).expect("utf-8")
}

/// Writes `body` to `out/name`, or to stdout without an output directory.
fn emit(out: Option<&Path>, name: &str, body: &str) -> Result<Option<PathBuf>, Failure> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| io_fail(dir, e))?;
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| io_fail(&path, e))?;
            eprintln!("wrote {}", path.display());
            Ok(Some(path))
        }
        None => {
            io::stdout()
                .write_all(body.as_bytes())
                .map_err(|e| io_fail(Path::new("<stdout>"), e))?;
            Ok(None)
        }
    }
}

fn ext(f: Format) -> &'static str {
    match f {
        Format::Json => "json",
        Format::Csv => "csv",
    }
}

#[derive(Serialize)]
struct RunRow {
    scenario: String,
    status: String,
    condition_i: bool,
    condition_ii: bool,
    hash_ops: u64,
    key_strings: u64,
    auth_uses: u64,
    adversary_hash_ops: u64,
    total_key_bits: u64,
}

fn cmd_run(a: RunArgs) -> Result<u8, Failure> {
    let mut cfg = ScenarioConfig::load_or_preset(&a.scenario)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(c) = a.auth_cost {
        cfg.auth_cost = c.into();
    }
    let run = run_scenario(&cfg)?;
    let mut report = run.report;
    let out = a.common.out.as_deref();
    if let Some(dir) = out {
        let name = cfg
            .report
            .transcript
            .clone()
            .unwrap_or_else(|| format!("{}.transcript.jsonl", cfg.name).into());
        let path = emit(
            Some(dir),
            &name.to_string_lossy(),
            &run.transcript.to_jsonl(),
        )?;
        report.transcript_path = path.map(|p| p.display().to_string());
    }
    let body = match a.common.format {
        Format::Json => report.to_json() + "\n",
        Format::Csv => csv_of(&[RunRow {
            scenario: report.scenario.clone(),
            status: serde_json::to_value(report.verdict.status)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default(),
            condition_i: report.verdict.condition_i,
            condition_ii: report.verdict.condition_ii,
            hash_ops: report.ledger.hash_ops,
            key_strings: report.ledger.key_strings,
            auth_uses: report.ledger.auth_uses,
            adversary_hash_ops: report.ledger.adversary_hash_ops,
            total_key_bits: report.ledger.total_key_bits(),
        }]),
    };
    let name = match (a.common.format, &cfg.report.report) {
        (Format::Json, Some(p)) => p.to_string_lossy().into_owned(),
        (f, _) => format!("{}.report.{}", cfg.name, ext(f)),
    };
    emit(out, &name, &body)?;
    let v = &report.verdict;
    eprintln!(
        "{}: {}, condition I {}, condition II {}",
        report.scenario,
        if v.status == RunStatus::Completed {
            "completed"
        } else {
            "aborted (key exhausted)"
        },
        v.condition_i,
        v.condition_ii
    );
    Ok(match v.status {
        RunStatus::AbortedKeyExhausted => EXIT_KEY_EXHAUSTED,
        RunStatus::Completed if v.holds() => 0,
        RunStatus::Completed => EXIT_VIOLATION,
    })
}

#[derive(Serialize)]
struct ForgeStats {
    runs: usize,
    violations: usize,
    rate: f64,
    ci95_low: f64,
    ci95_high: f64,
    bound: f64,
}

#[derive(Serialize)]
struct SweepReport {
    summary: SweepSummary,
    forge: Option<ForgeStats>,
    rows: Vec<SweepRow>,
}

fn cmd_sweep(a: SweepArgs) -> Result<u8, Failure> {
    let strategies: Vec<Strategy> = match &a.strategies {
        None => Strategy::FAMILY.to_vec(),
        Some(names) => names
            .iter()
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<Strategy>().map_err(config_fail))
            .collect::<Result<_, _>>()?,
    };
    if let Some(&bad) = a.n.iter().find(|&&n| !(3..=16).contains(&n)) {
        return Err(config_fail(format!(
            "invalid-params: n = {bad} (3..=16 for sweeps)"
        )));
    }
    if !(2..=u16::MAX as usize).contains(&a.l) {
        return Err(config_fail(format!("invalid-params: l = {}", a.l)));
    }
    let cfg = SweepConfig {
        l: a.l,
        msg_bits: a.msg_bits,
        seed: a.seed,
        auth_cost: a.auth_cost.map_or(AuthCostModel::Axiomatic, Into::into),
        capacities: PoolCapacities {
            commander_link_bits: u64::MAX,
            lieutenant_link_bits: u64::MAX,
        },
    };
    let cases = if strategies.is_empty() {
        Vec::new()
    } else {
        sweep_cases(&a.n, &strategies, false)
    };
    let rows = strategy_sweep(&cases, &cfg);
    let (forged, scripted): (Vec<&SweepRow>, Vec<&SweepRow>) = rows
        .iter()
        .partition(|r| r.strategy == Strategy::Forge.name());
    let forge = (!forged.is_empty()).then(|| {
        let n = forged.len() as f64;
        let v = forged.iter().filter(|r| r.violated()).count();
        let p = v as f64 / n;
        let half = 1.96 * (p * (1.0 - p) / n).sqrt();
        ForgeStats {
            runs: forged.len(),
            violations: v,
            rate: p,
            ci95_low: (p - half).max(0.0),
            ci95_high: (p + half).min(1.0),
            bound: ((a.msg_bits + a.l) as f64 / 2f64.powi(a.l as i32)).min(1.0),
        }
    });
    let summary = SweepSummary::of(&rows);
    let scripted_violations = scripted.iter().filter(|r| r.violated()).count();
    eprintln!(
        "{} runs, {} violations ({} outside forgery), {} aborted, {} errors",
        summary.runs, summary.violations, scripted_violations, summary.aborted, summary.errors
    );
    if let Some(f) = &forge {
        eprintln!(
            "forgery violation rate {:.4} (95% CI {:.4}..{:.4}), bound {:.4}",
            f.rate, f.ci95_low, f.ci95_high, f.bound
        );
    }
    let body = match a.common.format {
        Format::Json => json(&SweepReport {
            summary,
            forge,
            rows: rows.clone(),
        }),
        Format::Csv => {
            if rows.is_empty() {
                "n,m,controlled,strategy,status,condition_i,condition_ii,hash_ops,auth_uses,adversary_hash_ops,error\n".into()
            } else {
                csv_of(&rows)
            }
        }
    };
    emit(
        a.common.out.as_deref(),
        &format!("sweep.{}", ext(a.common.format)),
        &body,
    )?;
    Ok(if scripted_violations > 0 {
        EXIT_VIOLATION
    } else {
        0
    })
}

#[derive(Serialize)]
struct CompareCsvRow {
    protocol: String,
    source: String,
    hash_ops: String,
    key_strings: String,
    auth_uses: String,
    commander_link_bits: String,
    lieutenant_link_bits: String,
}

fn cmd_compare(a: CompareArgs) -> Result<u8, Failure> {
    let r = compare(a.n, a.m, a.l, a.seed, a.auth_cost.into())?;
    let body = match a.common.format {
        Format::Json => json(&r),
        Format::Csv => {
            let join = |v: &[u64]| v.iter().map(u64::to_string).collect::<Vec<_>>().join(";");
            let mut rows = Vec::new();
            for f in &r.formula {
                let bits = if f.protocol.to_string() == "QSBA" {
                    (
                        r.qsba_link_bits.0.to_string(),
                        r.qsba_link_bits.1.to_string(),
                    )
                } else {
                    (
                        join(&r.qba_measured.commander_link_bits),
                        join(&r.qba_measured.lieutenant_link_bits),
                    )
                };
                rows.push(CompareCsvRow {
                    protocol: f.protocol.to_string(),
                    source: "formula".into(),
                    hash_ops: f.hash_ops.to_string(),
                    key_strings: f.key_strings.to_string(),
                    auth_uses: f.auth_uses.to_string(),
                    commander_link_bits: bits.0,
                    lieutenant_link_bits: bits.1,
                });
            }
            let measured = r
                .qsba_measured
                .iter()
                .map(|m| ("QSBA", m))
                .chain([("QBA", &r.qba_measured)]);
            for (p, m) in measured {
                rows.push(CompareCsvRow {
                    protocol: p.into(),
                    source: "measured".into(),
                    hash_ops: m.hash_ops.to_string(),
                    key_strings: m.key_strings.to_string(),
                    auth_uses: m.auth_uses.to_string(),
                    commander_link_bits: join(&m.commander_link_bits),
                    lieutenant_link_bits: join(&m.lieutenant_link_bits),
                });
            }
            for o in &r.three_party.outcomes {
                rows.push(CompareCsvRow {
                    protocol: o.protocol.clone(),
                    source: format!("three-party-{}", r.three_party.auth_cost),
                    hash_ops: o.delta.hash_ops.to_string(),
                    key_strings: o.delta.key_strings.to_string(),
                    auth_uses: o.delta.auth_uses.to_string(),
                    commander_link_bits: String::new(),
                    lieutenant_link_bits: String::new(),
                });
            }
            csv_of(&rows)
        }
    };
    emit(
        a.common.out.as_deref(),
        &format!("compare.{}", ext(a.common.format)),
        &body,
    )?;
    eprintln!(
        "{} under {} auth cost: {}",
        r.three_party.ordering,
        r.three_party.auth_cost,
        if r.three_party.ordering_holds {
            "holds"
        } else {
            "does not hold"
        }
    );
    Ok(0)
}

fn cmd_attack(a: AttackArgs) -> Result<u8, Failure> {
    let (l, message) = match &a.scenario {
        Some(s) => {
            let cfg = ScenarioConfig::load_or_preset(s)?;
            (cfg.l, Some(cfg.message()?))
        }
        None => (a.l, None),
    };
    if !(2..=u16::MAX as usize).contains(&l) || a.trials == 0 {
        return Err(config_fail(format!(
            "invalid-params: l = {l}, trials = {}",
            a.trials
        )));
    }
    let r = forgery_experiment(&AttackConfig {
        l,
        msg_bits: a.msg_bits,
        trials: a.trials,
        seed: a.seed,
        message,
    })
    .map_err(|e| config_fail(e.to_string()))?;
    let body = match a.common.format {
        Format::Json => json(&r),
        Format::Csv => csv_of(&[&r]),
    };
    emit(
        a.common.out.as_deref(),
        &format!("attack.{}", ext(a.common.format)),
        &body,
    )?;
    eprintln!(
        "{} / {} forgeries, rate {:.3e}, threshold {:.3e}",
        r.successes,
        r.trials - r.identical_excluded,
        r.rate,
        r.threshold
    );
    Ok(if r.within_bound { 0 } else { EXIT_VIOLATION })
}

#[derive(Serialize)]
struct BudgetRow {
    link: String,
    capacity_bits: u64,
    cost_per_round: u64,
    max_rounds: u64,
    binding: bool,
}

fn cmd_budget(a: BudgetArgs) -> Result<u8, Failure> {
    let (n, m, l, mut caps) = match &a.scenario {
        Some(s) => {
            let cfg = ScenarioConfig::load_or_preset(s)?;
            (cfg.n, cfg.m, cfg.l, cfg.pools)
        }
        None => (a.n, a.m, a.l, PoolCapacities::default()),
    };
    if let Some(c) = a.commander_bits {
        caps.commander_link_bits = c;
    }
    if let Some(c) = a.lieutenant_bits {
        caps.lieutenant_link_bits = c;
    }
    let (summary, report) =
        budget_summary(n, m, l, caps).map_err(|e| config_fail(e.to_string()))?;
    let body = match a.common.format {
        Format::Json => json(&serde_json::json!({ "summary": summary, "links": report.links })),
        Format::Csv => {
            let rows: Vec<BudgetRow> = report
                .links
                .iter()
                .map(|b| BudgetRow {
                    link: b.link.to_string(),
                    capacity_bits: b.capacity_bits,
                    cost_per_round: b.cost_per_round,
                    max_rounds: b.max_rounds,
                    binding: report.binding.as_ref() == Some(b),
                })
                .collect();
            csv_of(&rows)
        }
    };
    emit(
        a.common.out.as_deref(),
        &format!("budget.{}", ext(a.common.format)),
        &body,
    )?;
    if let (Some(class), Some(r)) = (&summary.binding_class, summary.max_rounds) {
        eprintln!("binding class {class}: {r} rounds");
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Compare(a) => cmd_compare(a),
        Cmd::Attack(a) => cmd_attack(a),
        Cmd::Budget(a) => cmd_budget(a),
        Cmd::Presets => {
            for p in qsba_core::scenario::preset_names() {
                println!("{p}");
            }
            Ok(0)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
