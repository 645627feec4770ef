//! Resource ledger, closed-form complexity counts and key budgeting.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::keystore::{LinkId, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("invalid-params: need n >= 3 and 1 <= m <= n - 2, got n = {n}, m = {m}")]
    InvalidParams { n: usize, m: usize },
    #[error("invalid-cost: per-round cost of link {0} is zero")]
    InvalidCost(LinkId),
    #[error("count overflows u128")]
    Overflow,
}

/// How a use of the classical authenticated channel is charged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuthCostModel {
    /// The channel is a free primitive.
    #[default]
    Axiomatic,
    /// Each use costs one key string and one hash operation.
    Costed,
}

impl fmt::Display for AuthCostModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Axiomatic => "axiomatic",
            Self::Costed => "costed",
        })
    }
}

/// Counters for everything a run consumes.
///
/// `hash_ops` and `key_strings` count protocol-scheduled work only. Extra
/// tags computed by a Byzantine node outside the schedule go to
/// `adversary_hash_ops`; costed authenticated-channel overhead goes to the
/// `auth_overhead_*` fields. [`ResourceLedger::totals`] folds the overhead in.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ResourceLedger {
    pub hash_ops: u64,
    pub key_bits_per_link: BTreeMap<LinkId, u64>,
    pub key_strings: u64,
    pub auth_uses: u64,
    pub adversary_hash_ops: u64,
    pub auth_cost: AuthCostModel,
    pub auth_overhead_hash_ops: u64,
    pub auth_overhead_key_strings: u64,
}

/// `(hash ops, key strings, auth uses)` with any auth overhead included.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Totals {
    pub hash_ops: u64,
    pub key_strings: u64,
    pub auth_uses: u64,
}

impl Totals {
    pub fn sum(&self) -> u64 {
        self.hash_ops + self.key_strings + self.auth_uses
    }

    pub fn le(&self, other: &Totals) -> bool {
        self.hash_ops <= other.hash_ops
            && self.key_strings <= other.key_strings
            && self.auth_uses <= other.auth_uses
    }
}

impl fmt::Display for Totals {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {})",
            self.hash_ops, self.key_strings, self.auth_uses
        )
    }
}

impl ResourceLedger {
    pub fn new(auth_cost: AuthCostModel) -> Self {
        Self {
            auth_cost,
            ..Self::default()
        }
    }

    pub fn charge_key_bits(&mut self, link: LinkId, bits: u64) {
        *self.key_bits_per_link.entry(link).or_default() += bits;
    }

    pub fn charge_hash_ops(&mut self, n: u64) {
        self.hash_ops += n;
    }

    pub fn charge_key_strings(&mut self, n: u64) {
        self.key_strings += n;
    }

    pub fn charge_adversary_hash_ops(&mut self, n: u64) {
        self.adversary_hash_ops += n;
    }

    pub fn charge_auth_use(&mut self) {
        self.auth_uses += 1;
        if self.auth_cost == AuthCostModel::Costed {
            self.auth_overhead_hash_ops += 1;
            self.auth_overhead_key_strings += 1;
        }
    }

    pub fn key_bits(&self, link: LinkId) -> u64 {
        self.key_bits_per_link.get(&link).copied().unwrap_or(0)
    }

    pub fn total_key_bits(&self) -> u64 {
        self.key_bits_per_link.values().sum()
    }

    pub fn totals(&self) -> Totals {
        Totals {
            hash_ops: self.hash_ops + self.auth_overhead_hash_ops,
            key_strings: self.key_strings + self.auth_overhead_key_strings,
            auth_uses: self.auth_uses,
        }
    }

    /// Distinct per-link totals seen on commander links and on lieutenant links.
    pub fn link_class_bits(&self) -> (Vec<u64>, Vec<u64>) {
        let mut cmd: Vec<u64> = Vec::new();
        let mut lt: Vec<u64> = Vec::new();
        for (link, &bits) in &self.key_bits_per_link {
            let v = if link.is_commander_link() {
                &mut cmd
            } else {
                &mut lt
            };
            if !v.contains(&bits) {
                v.push(bits);
            }
        }
        cmd.sort_unstable();
        lt.sort_unstable();
        (cmd, lt)
    }
}

pub fn validate_params(n: usize, m: usize) -> Result<(), MetricsError> {
    if n >= 3 && m >= 1 && m + 2 <= n {
        Ok(())
    } else {
        Err(MetricsError::InvalidParams { n, m })
    }
}

/// Number of ordered selections `a! / (a - b)!`; zero when `b > a`.
pub fn arrangements(a: u64, b: u64) -> Result<u128, MetricsError> {
    if b > a {
        return Ok(0);
    }
    (a - b + 1..=a).try_fold(1u128, |acc, k| {
        acc.checked_mul(k as u128).ok_or(MetricsError::Overflow)
    })
}

fn sum_arrangements(a: u64, lo: u64, hi: u64) -> Result<u128, MetricsError> {
    (lo..=hi).try_fold(0u128, |acc, i| {
        acc.checked_add(arrangements(a, i)?)
            .ok_or(MetricsError::Overflow)
    })
}

/// Hash operations of one QSBA run in the worst case.
pub fn qsba_complexity(n: usize, m: usize) -> Result<u128, MetricsError> {
    validate_params(n, m)?;
    sum_arrangements(n as u64 - 1, 1, m as u64)
}

/// Authenticated-channel uses of one QSBA run in the worst case.
pub fn qsba_auth_uses(n: usize, m: usize) -> Result<u128, MetricsError> {
    validate_params(n, m)?;
    arrangements(n as u64 - 1, m as u64 + 1)
}

/// QDS executions of one QBA run.
pub fn qba_complexity(n: usize, m: usize) -> Result<u128, MetricsError> {
    validate_params(n, m)?;
    sum_arrangements(n as u64 - 1, 2, m as u64 + 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Protocol {
    #[serde(rename = "QSBA")]
    Qsba,
    #[serde(rename = "QBA")]
    Qba,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Qsba => "QSBA",
            Self::Qba => "QBA",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ComplexityRow {
    pub protocol: Protocol,
    pub hash_ops: u128,
    pub key_strings: u128,
    pub auth_uses: u128,
}

/// The two-row resource comparison: QSBA first, QBA second.
pub fn complexity_table(n: usize, m: usize) -> Result<[ComplexityRow; 2], MetricsError> {
    let c = qsba_complexity(n, m)?;
    let c2 = qba_complexity(n, m)?;
    Ok([
        ComplexityRow {
            protocol: Protocol::Qsba,
            hash_ops: c,
            key_strings: c,
            auth_uses: qsba_auth_uses(n, m)?,
        },
        ComplexityRow {
            protocol: Protocol::Qba,
            hash_ops: c2,
            key_strings: 2 * c2,
            auth_uses: 2 * c2,
        },
    ])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Advantage {
    pub hash_ops: i128,
    pub key_strings: i128,
    pub auth_uses: i128,
}

/// How much QBA spends beyond QSBA, from the closed-form advantage formulas.
pub fn advantage_row(n: usize, m: usize) -> Result<Advantage, MetricsError> {
    validate_params(n, m)?;
    let a = n as u64 - 1;
    let m = m as u64;
    let top = arrangements(a, m + 1)? as i128;
    let first = arrangements(a, 1)? as i128;
    let s2 = sum_arrangements(a, 2, m + 1)? as i128;
    let s2m = sum_arrangements(a, 2, m)? as i128;
    Ok(Advantage {
        hash_ops: top - first,
        key_strings: s2 + top - first,
        auth_uses: s2 + s2m,
    })
}

/// Explicit walk over every signer chain the forwarding rules allow.
///
/// A chain is the commander followed by `k` distinct lieutenants. The last
/// signer of a chain with `k <= m - 1` lieutenants signs once for every
/// lieutenant not yet in the chain. A chain with exactly `m - 1` lieutenants
/// reaches each remaining lieutenant, who auth-forwards to all others not in
/// the chain. Returns `(hash ops, auth forwards)`.
pub fn enumerate_chains(n: usize, m: usize) -> Result<(u128, u128), MetricsError> {
    validate_params(n, m)?;
    let lieutenants: Vec<usize> = (1..n).collect();
    let mut hash_ops = 0u128;
    let mut auth = 0u128;
    let mut chain = Vec::with_capacity(m);
    walk(&lieutenants, m, &mut chain, &mut hash_ops, &mut auth);
    Ok((hash_ops, auth))
}

fn walk(lts: &[usize], m: usize, chain: &mut Vec<usize>, hash_ops: &mut u128, auth: &mut u128) {
    let outside: Vec<usize> = lts.iter().copied().filter(|x| !chain.contains(x)).collect();
    *hash_ops += outside.len() as u128;
    if chain.len() == m - 1 {
        for &r in &outside {
            *auth += outside.iter().filter(|&&t| t != r).count() as u128;
        }
        return;
    }
    for &next in &outside {
        chain.push(next);
        walk(lts, m, chain, hash_ops, auth);
        chain.pop();
    }
}

/// Worst-case key bits per round on a commander link and on a lieutenant link.
pub fn qsba_link_bits(n: usize, m: usize, l: usize) -> Result<(u128, u128), MetricsError> {
    validate_params(n, m)?;
    let unit = 2 * l as u128;
    // i signs for j once for every chain ending in i that avoids j.
    let mut per_direction = 0u128;
    for k in 1..m as u64 {
        per_direction += arrangements(n as u64 - 3, k - 1)?;
    }
    Ok((unit, 2 * per_direction * unit))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LinkBudget {
    pub link: LinkId,
    pub capacity_bits: u64,
    pub cost_per_round: u64,
    pub max_rounds: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BudgetReport {
    pub links: Vec<LinkBudget>,
    pub binding: Option<LinkBudget>,
}

/// Rounds each pool sustains at the given per-round cost; the binding link
/// is the one that runs out first (lowest link id on ties).
pub fn key_budget(
    pools: &[(LinkId, u64)],
    cost: impl Fn(LinkId) -> u64,
) -> Result<BudgetReport, MetricsError> {
    let mut links = Vec::with_capacity(pools.len());
    for &(link, capacity_bits) in pools {
        let c = cost(link);
        if c == 0 {
            return Err(MetricsError::InvalidCost(link));
        }
        links.push(LinkBudget {
            link,
            capacity_bits,
            cost_per_round: c,
            max_rounds: capacity_bits / c,
        });
    }
    let binding = links.iter().min_by_key(|b| (b.max_rounds, b.link)).cloned();
    Ok(BudgetReport { links, binding })
}

/// Pools of a full mesh over `n` nodes with per-class capacities.
pub fn mesh_pools(n: usize, commander_bits: u64, lieutenant_bits: u64) -> Vec<(LinkId, u64)> {
    let mut out = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let link = LinkId::new(NodeId(a as u8), NodeId(b as u8)).expect("a < b");
            let cap = if a == 0 {
                commander_bits
            } else {
                lieutenant_bits
            };
            out.push((link, cap));
        }
    }
    out
}
