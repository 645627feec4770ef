use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{run_protocol, Honest, RunConfig, RunStatus, Scripted, Strategy};
use crate::gf2hash::BitString;
use crate::keystore::{NodeId, PoolCapacities};
use crate::metrics::AuthCostModel;
use crate::qsba::ProtocolParams;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SweepConfig {
    pub l: usize,
    pub msg_bits: usize,
    pub seed: u64,
    pub auth_cost: AuthCostModel,
    pub capacities: PoolCapacities,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            l: 54,
            msg_bits: 64,
            seed: 1,
            auth_cost: AuthCostModel::Axiomatic,
            capacities: PoolCapacities::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SweepCase {
    pub n: usize,
    pub m: usize,
    pub controlled: BTreeSet<NodeId>,
    pub strategy: Strategy,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub m: usize,
    pub controlled: String,
    pub strategy: String,
    pub status: String,
    pub condition_i: bool,
    pub condition_ii: bool,
    pub hash_ops: u64,
    pub auth_uses: u64,
    pub adversary_hash_ops: u64,
    pub error: String,
}

impl SweepRow {
    pub fn violated(&self) -> bool {
        self.status == "completed" && !(self.condition_i && self.condition_ii)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SweepSummary {
    pub runs: usize,
    pub violations: usize,
    pub aborted: usize,
    pub errors: usize,
}

impl SweepSummary {
    pub fn of(rows: &[SweepRow]) -> Self {
        Self {
            runs: rows.len(),
            violations: rows.iter().filter(|r| r.violated()).count(),
            aborted: rows
                .iter()
                .filter(|r| r.status == "aborted-key-exhausted")
                .count(),
            errors: rows.iter().filter(|r| r.status == "error").count(),
        }
    }
}

/// Every malicious subset of size `1..=m` for every `m` allowed at each
/// `n`, crossed with `strategies`. With `include_honest`, one fault-free
/// case per `(n, m)` comes first.
pub fn sweep_cases(ns: &[usize], strategies: &[Strategy], include_honest: bool) -> Vec<SweepCase> {
    let mut cases = Vec::new();
    for &n in ns {
        for m in 1..=n.saturating_sub(2) {
            if include_honest {
                cases.push(SweepCase {
                    n,
                    m,
                    controlled: BTreeSet::new(),
                    strategy: Strategy::Honest,
                });
            }
            for mask in 1u32..(1 << n) {
                if mask.count_ones() as usize > m {
                    continue;
                }
                let controlled: BTreeSet<NodeId> = (0..n)
                    .filter(|i| mask >> i & 1 == 1)
                    .map(|i| NodeId(i as u8))
                    .collect();
                for &strategy in strategies {
                    cases.push(SweepCase {
                        n,
                        m,
                        controlled: controlled.clone(),
                        strategy,
                    });
                }
            }
        }
    }
    cases
}

fn case_seed(base: u64, index: usize) -> u64 {
    base ^ (index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn run_case(case: &SweepCase, cfg: &SweepConfig, seed: u64) -> SweepRow {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(3);
    let command = BitString::random(cfg.msg_bits, &mut rng);
    let controlled = case
        .controlled
        .iter()
        .map(|c| c.0.to_string())
        .collect::<Vec<_>>()
        .join("+");
    let mut row = SweepRow {
        n: case.n,
        m: case.m,
        controlled,
        strategy: case.strategy.to_string(),
        status: String::new(),
        condition_i: false,
        condition_ii: false,
        hash_ops: 0,
        auth_uses: 0,
        adversary_hash_ops: 0,
        error: String::new(),
    };
    let params = match ProtocolParams::new(case.n, case.m, cfg.l, BitString::zeros(cfg.msg_bits)) {
        Ok(p) => p,
        Err(e) => {
            row.status = "error".into();
            row.error = e.to_string();
            return row;
        }
    };
    let run_cfg = RunConfig {
        seed,
        capacities: cfg.capacities,
        auth_cost: cfg.auth_cost,
    };
    let result = if case.controlled.is_empty() {
        run_protocol(&params, &command, &run_cfg, &mut Honest::default())
    } else {
        let mut adv = Scripted::new(case.strategy, case.controlled.iter().copied());
        run_protocol(&params, &command, &run_cfg, &mut adv)
    };
    match result {
        Ok(out) => {
            row.status = match out.verdict.status {
                RunStatus::Completed => "completed".into(),
                RunStatus::AbortedKeyExhausted => "aborted-key-exhausted".into(),
            };
            row.condition_i = out.verdict.condition_i;
            row.condition_ii = out.verdict.condition_ii;
            row.hash_ops = out.ledger.hash_ops;
            row.auth_uses = out.ledger.auth_uses;
            row.adversary_hash_ops = out.ledger.adversary_hash_ops;
        }
        Err(e) => {
            row.status = "error".into();
            row.error = e.to_string();
        }
    }
    row
}

/// Runs every case in parallel; rows come back in case order.
pub fn strategy_sweep(cases: &[SweepCase], cfg: &SweepConfig) -> Vec<SweepRow> {
    cases
        .par_iter()
        .enumerate()
        .map(|(i, case)| run_case(case, cfg, case_seed(cfg.seed, i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_counts() {
        // n = 4, m = 1: four single-node subsets; m = 2 adds six pairs.
        let c = sweep_cases(&[4], &[Strategy::Drop], false);
        assert_eq!(c.len(), 4 + (4 + 6));
        let c = sweep_cases(&[4], &Strategy::FAMILY, true);
        assert_eq!(c.len(), 2 + 14 * Strategy::FAMILY.len());
        assert!(sweep_cases(&[4], &[], false).is_empty());
    }

    #[test]
    fn four_node_single_faults_hold() {
        let cases: Vec<SweepCase> = sweep_cases(&[4], &Strategy::FAMILY, true)
            .into_iter()
            .filter(|c| c.m == 1)
            .collect();
        let rows = strategy_sweep(&cases, &SweepConfig::default());
        let s = SweepSummary::of(&rows);
        assert_eq!(s.runs, 1 + 4 * Strategy::FAMILY.len());
        assert_eq!((s.violations, s.aborted, s.errors), (0, 0, 0), "{rows:#?}");
    }
}
