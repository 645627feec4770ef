//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::time::{Duration, Instant};

use qsba_core::baselines::{mqsm_run, qba_enumerate, qds_run, qsm3_run, TamperPoint};
use qsba_core::gf2hash::{axu_epsilon, is_irreducible, BitString, GF2Poly, HashKey};
use qsba_core::keystore::{Keystore, PoolCapacities};
use qsba_core::metrics::{
    enumerate_chains, key_budget, mesh_pools, qba_complexity, qsba_auth_uses, qsba_complexity,
    qsba_link_bits, AuthCostModel, ResourceLedger, Totals,
};
use qsba_core::scenario::{preset, preset_names, run_scenario};
use qsba_core::simnet::{
    forgery_experiment, strategy_sweep, sweep_cases, AttackConfig, Strategy, SweepConfig,
    SweepSummary,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn within(t: Duration, limit: Duration) -> Result<(), String> {
    ensure(t < limit, format!("took {t:.2?}, limit {limit:?}"))
}

/// a! / (a - b)!
fn perm(a: u64, b: u64) -> u128 {
    if b > a {
        return 0;
    }
    (a - b + 1..=a).map(u128::from).product()
}

fn c1_formulas() -> Check {
    let t = Instant::now();
    ensure(
        qsba_complexity(5, 2).unwrap() == 16,
        "qsba_complexity(5,2) != 16",
    )?;
    ensure(
        qba_complexity(5, 2).unwrap() == 36,
        "qba_complexity(5,2) != 36",
    )?;
    let mut cases = 0;
    for n in 3..=8u64 {
        for m in 1..=n - 2 {
            let (nu, mu) = (n as usize, m as usize);
            let hash: u128 = (1..=m).map(|i| perm(n - 1, i)).sum();
            let auth = perm(n - 1, m + 1);
            let (ch, ca) = enumerate_chains(nu, mu).unwrap();
            ensure(
                ch == hash && qsba_complexity(nu, mu).unwrap() == hash,
                format!("hash ops at ({n},{m}): walk {ch}, oracle {hash}"),
            )?;
            ensure(
                ca == auth && qsba_auth_uses(nu, mu).unwrap() == auth,
                format!("auth uses at ({n},{m}): walk {ca}, oracle {auth}"),
            )?;
            cases += 1;
        }
    }
    within(t.elapsed(), Duration::from_secs(1))?;
    Ok(format!(
        "16 / 36; {cases} (n, m) pairs agree; {:.2?}",
        t.elapsed()
    ))
}

fn c2_ledger() -> Check {
    let t = Instant::now();
    let cfg = preset("five-node-paper").map_err(|e| e.to_string())?;
    let run = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let r = &run.report;
    ensure(
        r.message_bits == 800_000,
        format!("message is {} bits", r.message_bits),
    )?;
    let got = (
        r.ledger.hash_ops,
        r.ledger.auth_uses,
        r.link_class_bits.commander.clone(),
        r.link_class_bits.lieutenant.clone(),
    );
    ensure(
        got == (16, 24, vec![108], vec![216]),
        format!("QSBA ledger {got:?}"),
    )?;
    ensure(
        r.ledger.key_bits_per_link.len() == 10,
        "not every link was charged",
    )?;
    let f = qba_enumerate(5, 2, 54).map_err(|e| e.to_string())?;
    let (c, l) = f.link_class_bits();
    let got = (f.executions, f.auth_uses, c, l);
    ensure(
        got == (36, 72, vec![648], vec![864]),
        format!("QBA flow {got:?}"),
    )?;
    within(t.elapsed(), Duration::from_secs(10))?;
    Ok(format!(
        "QSBA 16 hash / 24 auth / 108,216 bits; QBA 36 / 72 / 648,864; {:.2?}",
        t.elapsed()
    ))
}

fn c3_sweep() -> Check {
    let t = Instant::now();
    let cases = sweep_cases(&[3, 4, 5, 6], &Strategy::FAMILY, true);
    ensure(
        cases
            .iter()
            .any(|c| c.n == 5 && c.m == 3 && c.controlled.len() == 3),
        "no three-fault case at n = 5",
    )?;
    let rows = strategy_sweep(&cases, &SweepConfig::default());
    let s = SweepSummary::of(&rows);
    if let Some(bad) = rows.iter().find(|r| r.violated() || !r.error.is_empty()) {
        return Err(format!("{s:?}; first bad row {bad:?}"));
    }
    ensure(s.aborted == 0, format!("{} runs aborted", s.aborted))?;
    within(t.elapsed(), Duration::from_secs(300))?;
    Ok(format!(
        "{} runs, 0 violations; {:.2?}",
        s.runs,
        t.elapsed()
    ))
}

fn c4_forgery() -> Check {
    let t = Instant::now();
    let small = forgery_experiment(&AttackConfig {
        l: 16,
        msg_bits: 1000,
        trials: 100_000,
        seed: 4,
        message: None,
    })
    .map_err(|e| e.to_string())?;
    let bound = 1016.0 / 65536.0;
    let sigma = (bound * (1.0 - bound) / (small.trials - small.identical_excluded) as f64).sqrt();
    ensure(
        small.rate <= bound + 3.0 * sigma,
        format!("l=16 rate {} > {}", small.rate, bound + 3.0 * sigma),
    )?;
    let msg = preset("five-node-paper")
        .and_then(|c| c.message())
        .map_err(|e| e.to_string())?;
    let big = forgery_experiment(&AttackConfig {
        l: 54,
        msg_bits: msg.len(),
        trials: 10_000,
        seed: 5,
        message: Some(msg),
    })
    .map_err(|e| e.to_string())?;
    ensure(
        big.successes == 0,
        format!("{} forgeries at l=54", big.successes),
    )?;
    within(t.elapsed(), Duration::from_secs(120))?;
    Ok(format!(
        "l=16 rate {:.2e} <= {:.2e}; l=54 0/{}; {:.2?}",
        small.rate,
        bound + 3.0 * sigma,
        big.trials,
        t.elapsed()
    ))
}

/// `msg * x^8 mod p` with plain shifts; `p` includes the x^8 term.
fn hash8(msg: u32, len: u32, p: u32) -> u32 {
    let mut r = 0u32;
    for i in (0..len).rev() {
        r = (r << 1) | (msg >> i & 1);
        if r & 0x100 != 0 {
            r ^= p;
        }
    }
    for _ in 0..8 {
        r <<= 1;
        if r & 0x100 != 0 {
            r ^= p;
        }
    }
    r
}

fn irreducible8(p: u32) -> bool {
    // No factor of degree 1..=4.
    (2u32..32).all(|d| {
        let deg = 31 - d.leading_zeros();
        let mut r = p;
        while r != 0 && 31 - r.leading_zeros() >= deg {
            r ^= d << (31 - r.leading_zeros() - deg);
        }
        r != 0
    })
}

fn c5_axu() -> Check {
    let t = Instant::now();
    let polys: Vec<u32> = (0x100u32..0x200).filter(|&p| irreducible8(p)).collect();
    ensure(
        polys.len() == 30,
        format!("{} irreducible octics", polys.len()),
    )?;
    let lib: Vec<u32> = (0x100u64..0x200)
        .filter(|&p| is_irreducible(&GF2Poly::from_u64(p)).unwrap())
        .map(|p| p as u32)
        .collect();
    ensure(lib == polys, "library irreducibility disagrees")?;
    let keys: Vec<HashKey> = polys
        .iter()
        .map(|&p| HashKey::new(BitString::from_u64(u64::from(p & 0xff), 8)).unwrap())
        .collect();
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let mut pairs = 0;
    while pairs < 200 {
        let len = rng.gen_range(1..=16u32);
        let a = rng.gen::<u32>() & ((1 << len) - 1);
        let b = rng.gen::<u32>() & ((1 << len) - 1);
        if a == b {
            continue;
        }
        pairs += 1;
        let diffs: Vec<u32> = polys
            .iter()
            .map(|&p| hash8(a, len, p) ^ hash8(b, len, p))
            .collect();
        let (ba, bb) = (
            BitString::from_u64(u64::from(a), len as usize),
            BitString::from_u64(u64::from(b), len as usize),
        );
        for (k, &d) in keys.iter().zip(&diffs) {
            let lib = k.hasher().hash(&ba).xor(&k.hasher().hash(&bb)).unwrap();
            ensure(lib.to_u64() == Some(u64::from(d)), "library hash disagrees")?;
        }
        for z in 0..256u32 {
            let hits = diffs.iter().filter(|&&d| d == z).count();
            worst = worst.max(hits as f64 / polys.len() as f64);
        }
    }
    ensure(worst <= 0.1, format!("max collision fraction {worst}"))?;
    within(t.elapsed(), Duration::from_secs(30))?;
    Ok(format!(
        "max fraction {worst:.4} over 200 pairs x 256 targets; {:.2?}",
        t.elapsed()
    ))
}

fn c6_epsilon() -> Check {
    let e = axu_epsilon(800_000, 54).map_err(|e| e.to_string())?;
    let oracle = 800_000.0 / 18_014_398_509_481_984.0;
    ensure(
        (e - oracle).abs() <= oracle * 1e-12,
        format!("epsilon {e} vs {oracle}"),
    )?;
    ensure(e <= 1e-10, format!("epsilon {e}"))?;
    Ok(format!("epsilon = {e:.3e}"))
}

fn c7_budget() -> Check {
    let (c, l) = qsba_link_bits(5, 2, 54).map_err(|e| e.to_string())?;
    ensure((c, l) == (108, 216), format!("per-round bits {c}/{l}"))?;
    let caps = PoolCapacities::default();
    let pools = mesh_pools(5, caps.commander_link_bits, caps.lieutenant_link_bits);
    let r = key_budget(&pools, |k| if k.is_commander_link() { 108 } else { 216 })
        .map_err(|e| e.to_string())?;
    let b = r.binding.ok_or("no binding link")?;
    ensure(
        !b.link.is_commander_link(),
        "binding link is a commander link",
    )?;
    ensure(b.max_rounds == 103, format!("{} rounds", b.max_rounds))?;
    let cmd_min = r
        .links
        .iter()
        .filter(|x| x.link.is_commander_link())
        .map(|x| x.max_rounds)
        .min()
        .unwrap_or(0);
    ensure(
        cmd_min > 1_000_000,
        format!("commander links {cmd_min} rounds"),
    )?;
    Ok(format!(
        "lieutenant links bind at 103 rounds; commander links {cmd_min}"
    ))
}

fn c8_ordering() -> Check {
    let mut ks = Keystore::new(3, PoolCapacities::default(), 8);
    let mut led = ResourceLedger::new(AuthCostModel::Costed);
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let msg = BitString::random(512, &mut rng);
    let q = qsm3_run(&msg, 54, &mut ks, &mut led, &mut rng, TamperPoint::None)
        .map_err(|e| e.to_string())?;
    let d = qds_run(&msg, 54, &mut ks, &mut led, &mut rng, TamperPoint::None)
        .map_err(|e| e.to_string())?;
    let m = mqsm_run(&msg, 54, &mut ks, &mut led, &mut rng, TamperPoint::None)
        .map_err(|e| e.to_string())?;
    let lt = |a: &Totals, b: &Totals| {
        a.hash_ops <= b.hash_ops
            && a.key_strings <= b.key_strings
            && a.auth_uses <= b.auth_uses
            && a != b
    };
    let tri = |t: &Totals| (t.hash_ops, t.key_strings, t.auth_uses);
    ensure(
        [&q, &d, &m]
            .iter()
            .all(|o| o.bob_accepts && o.charlie_accepts),
        "an honest three-party run rejected",
    )?;
    ensure(
        lt(&q.delta, &d.delta) && lt(&d.delta, &m.delta),
        format!(
            "QSM {:?} QDS {:?} mQSM {:?}",
            tri(&q.delta),
            tri(&d.delta),
            tri(&m.delta)
        ),
    )?;
    Ok(format!(
        "QSM {:?} < QDS {:?} < mQSM {:?}",
        tri(&q.delta),
        tri(&d.delta),
        tri(&m.delta)
    ))
}

fn strip_timestamp(json: &str) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(json).expect("report is JSON");
    v.as_object_mut().expect("object").remove("generated_at");
    v
}

fn c9_determinism() -> Check {
    let mut checked = Vec::new();
    for name in preset_names() {
        let cfg = preset(name).map_err(|e| e.to_string())?;
        let a = run_scenario(&cfg).map_err(|e| e.to_string())?;
        let b = run_scenario(&cfg).map_err(|e| e.to_string())?;
        ensure(
            a.transcript.to_jsonl() == b.transcript.to_jsonl(),
            format!("{name}: transcripts differ"),
        )?;
        let (ja, jb) = (a.report.to_json(), b.report.to_json());
        ensure(
            strip_timestamp(&ja) == strip_timestamp(&jb),
            format!("{name}: reports differ"),
        )?;
        let mut ra = a.report.clone();
        let mut rb = b.report.clone();
        ra.generated_at = 0;
        rb.generated_at = 0;
        ensure(
            ra.to_json() == rb.to_json(),
            format!("{name}: report bytes differ"),
        )?;
        checked.push(name);
    }
    Ok(format!("presets {}", checked.join(", ")))
}

fn main() {
    // Let `cargo test -- <filter>` style arguments pass through harmlessly.
    let criteria: [Criterion; 9] = [
        ("formula reproduction", c1_formulas),
        ("five-node ledger", c2_ledger),
        ("consistency sweep", c3_sweep),
        ("forgery bound", c4_forgery),
        ("AXU brute force", c5_axu),
        ("security level", c6_epsilon),
        ("key budget", c7_budget),
        ("three-party ordering", c8_ordering),
        ("determinism", c9_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
