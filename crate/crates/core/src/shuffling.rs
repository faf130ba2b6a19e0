//! Per-epoch index orderings.
//!
//! * `RR`: a fresh uniform permutation every epoch.
//! * `SO`: one permutation drawn on the first epoch and reused.
//! * `IG`: the identity order.
//! * `UNIFORM`: `n` i.i.d. uniform indices (with replacement).
//! * `AS:<strategy>`: an adversary with full knowledge of the problem picks
//!   the permutation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{dist_sq, FiniteSum, Permutation};
use crate::rng::SeedStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AdversaryStrategy {
    Identity,
    Reverse,
    /// Largest `‖ω_i(z^k_0)‖` first.
    NormDesc,
    /// Greedy one-step lookahead maximizing the distance to the root.
    GreedyMaxDist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ScheduleKind {
    Rr,
    So,
    Ig,
    Uniform,
    Adversarial(AdversaryStrategy),
}

impl ScheduleKind {
    /// Whether an epoch may repeat indices.
    pub fn with_replacement(self) -> bool {
        matches!(self, ScheduleKind::Uniform)
    }
}

impl fmt::Display for AdversaryStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdversaryStrategy::Identity => "IDENTITY",
            AdversaryStrategy::Reverse => "REVERSE",
            AdversaryStrategy::NormDesc => "NORM_DESC",
            AdversaryStrategy::GreedyMaxDist => "GREEDY_MAX_DIST",
        })
    }
}

impl FromStr for AdversaryStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "IDENTITY" => Ok(Self::Identity),
            "REVERSE" => Ok(Self::Reverse),
            "NORM_DESC" => Ok(Self::NormDesc),
            "GREEDY_MAX_DIST" => Ok(Self::GreedyMaxDist),
            other => Err(Error::Config(format!(
                "unknown adversary strategy {other:?}"
            ))),
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleKind::Rr => f.write_str("RR"),
            ScheduleKind::So => f.write_str("SO"),
            ScheduleKind::Ig => f.write_str("IG"),
            ScheduleKind::Uniform => f.write_str("UNIFORM"),
            ScheduleKind::Adversarial(s) => write!(f, "AS:{s}"),
        }
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let upper = s.to_ascii_uppercase();
        match upper.as_str() {
            "RR" => Ok(Self::Rr),
            "SO" => Ok(Self::So),
            "IG" => Ok(Self::Ig),
            "UNIFORM" => Ok(Self::Uniform),
            "AS" | "ADVERSARIAL" => Err(Error::Config(
                "adversarial schedules need a strategy, e.g. AS:GREEDY_MAX_DIST".into(),
            )),
            _ => match upper.split_once(':') {
                Some(("AS" | "ADVERSARIAL", strat)) => Ok(Self::Adversarial(strat.parse()?)),
                _ => Err(Error::Config(format!("unknown schedule {s:?}"))),
            },
        }
    }
}

macro_rules! string_serde {
    ($t:ty) => {
        impl TryFrom<String> for $t {
            type Error = Error;
            fn try_from(s: String) -> Result<Self> {
                s.parse()
            }
        }
        impl From<$t> for String {
            fn from(v: $t) -> String {
                v.to_string()
            }
        }
    };
}
string_serde!(ScheduleKind);
string_serde!(AdversaryStrategy);

/// Read-only view handed to an adversary at the start of an epoch.
#[derive(Clone, Copy)]
pub struct AdversaryContext<'a> {
    pub epoch: usize,
    pub start: &'a [f64],
    pub op: &'a dyn FiniteSum,
    pub root: &'a [f64],
    pub step_size: f64,
}

impl AdversaryStrategy {
    pub fn order(self, ctx: &AdversaryContext<'_>) -> Permutation {
        let n = ctx.op.n();
        match self {
            AdversaryStrategy::Identity => Permutation::identity(n),
            AdversaryStrategy::Reverse => {
                Permutation::new((0..n).rev().collect()).expect("reverse")
            }
            AdversaryStrategy::NormDesc => norm_desc_order(ctx),
            AdversaryStrategy::GreedyMaxDist => greedy_max_dist_order(ctx),
        }
    }
}

fn norm_desc_order(ctx: &AdversaryContext<'_>) -> Permutation {
    let n = ctx.op.n();
    let mut buf = vec![0.0; ctx.op.dim()];
    let norms: Vec<f64> = (0..n)
        .map(|i| {
            ctx.op.component_into(i, ctx.start, &mut buf);
            buf.iter().map(|v| v * v).sum()
        })
        .collect();
    let mut idx: Vec<usize> = (0..n).collect();
    // Stable sort keeps the lower index first on ties.
    idx.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    Permutation::new(idx).expect("sorted range")
}

/// Greedy adversary: from `z^k_0`, repeatedly take the unused component whose
/// gradient step lands farthest from the root, then advance along it.
/// Ties go to the lowest index. Uses `O(n²)` component evaluations.
pub fn greedy_max_dist_order(ctx: &AdversaryContext<'_>) -> Permutation {
    let n = ctx.op.n();
    let d = ctx.op.dim();
    let mut z = ctx.start.to_vec();
    let mut used = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut grad = vec![0.0; d];
    let mut trial = vec![0.0; d];
    let mut best_point = vec![0.0; d];
    for _ in 0..n {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..n).filter(|&i| !used[i]) {
            ctx.op.component_into(i, &z, &mut grad);
            for ((t, zi), g) in trial.iter_mut().zip(&z).zip(&grad) {
                *t = zi - ctx.step_size * g;
            }
            let dist = dist_sq(&trial, ctx.root);
            if best.is_none_or(|(_, b)| dist > b) {
                best = Some((i, dist));
                best_point.copy_from_slice(&trial);
            }
        }
        let (i, _) = best.expect("an unused index remains");
        used[i] = true;
        order.push(i);
        z.copy_from_slice(&best_point);
    }
    Permutation::new(order).expect("each index picked once")
}

/// A schedule instance owning its random stream.
#[derive(Debug, Clone)]
pub struct Schedule {
    kind: ScheduleKind,
    rng: SeedStream,
    fixed: Option<Vec<usize>>,
}

impl Schedule {
    pub fn new(kind: ScheduleKind, seed: u64) -> Self {
        Self {
            kind,
            rng: SeedStream::new(seed),
            fixed: None,
        }
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// Index order for `epoch` (1-based). Adversarial schedules need `ctx`.
    pub fn epoch_order(
        &mut self,
        epoch: usize,
        n: usize,
        ctx: Option<&AdversaryContext<'_>>,
    ) -> Result<Vec<usize>> {
        if n == 0 {
            return Err(Error::InvalidInput("schedule needs n >= 1".into()));
        }
        if epoch == 0 {
            return Err(Error::InvalidInput("epochs are numbered from 1".into()));
        }
        Ok(match self.kind {
            ScheduleKind::Rr => self.fresh_permutation(n),
            ScheduleKind::So => {
                if self.fixed.as_ref().is_none_or(|p| p.len() != n) {
                    self.fixed = Some(self.fresh_permutation(n));
                }
                self.fixed.clone().expect("just set")
            }
            ScheduleKind::Ig => (0..n).collect(),
            ScheduleKind::Uniform => (0..n).map(|_| self.rng.below(n)).collect(),
            ScheduleKind::Adversarial(strategy) => {
                let ctx = ctx.ok_or_else(|| {
                    Error::Config(format!("schedule {} needs an adversary context", self.kind))
                })?;
                if ctx.op.n() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: ctx.op.n(),
                    });
                }
                strategy.order(ctx).into_vec()
            }
        })
    }

    fn fresh_permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.rng.shuffle(&mut p);
        p
    }
}
