//! Time expansion: splits each message into sub-messages indexed by
//! per-node decoding schedules and derives the per-phase classical
//! problems.
//!
//! A schedule assigns every node a 1-based phase in `1..=Λ+1`, where `Λ+1`
//! means "not required at this node". Sub-message `(i, a)` must be decoded
//! by node `j` at the end of phase `a_j` whenever `a_j ≤ Λ`. Phase `λ`
//! then demands exactly the sub-messages scheduled at `λ`, with everything
//! decoded in earlier phases promoted to side information.

use serde::{Deserialize, Serialize};

use crate::model::{time_partition, validate_problem, NetworkProblem, RateVector, TimePartition};
use crate::{Error, Result};

/// Options controlling index-set enumeration.
#[derive(Debug, Clone)]
pub struct ExpandOptions {
    /// Drop schedules that deliver a sub-message to a node that never
    /// demanded it. Shrinks the search space for oracle classes that cannot
    /// exploit overheard side information.
    pub no_overhearing: bool,
    /// Hard cap on the total number of sub-messages across all messages.
    pub max_submessages: usize,
}

impl Default for ExpandOptions {
    fn default() -> Self {
        Self {
            no_overhearing: false,
            max_submessages: 1_000_000,
        }
    }
}

/// A sub-message: original message id plus its decoding schedule.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubMessageIndex {
    pub message: usize,
    /// One entry per node, each in `1..=Λ+1`.
    pub schedule: Vec<usize>,
}

impl SubMessageIndex {
    /// Identifier of the form `(i|a_1,…,a_ℓ)` with 1-based message id.
    pub fn id(&self) -> String {
        let sched: Vec<String> = self.schedule.iter().map(|a| a.to_string()).collect();
        format!("({}|{})", self.message + 1, sched.join(","))
    }
}

/// Per-coordinate schedule freedom for one message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoordBound {
    /// Coordinate pinned to `Λ+1` (holder nodes, and non-demanding nodes
    /// when overhearing is disabled).
    Fixed,
    /// Coordinate ranges over `1..=limit`.
    UpTo(usize),
}

/// The expanded problem: same channel and nodes, sub-messages in place of
/// messages, with demand/side-information/deadline rows per sub-message.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpandedProblem {
    pub base: NetworkProblem,
    pub partition: TimePartition,
    /// Sub-messages in lexicographic `(message, schedule)` order.
    pub submessages: Vec<SubMessageIndex>,
    /// Per-message coordinate bounds used to enumerate the schedules.
    pub bounds: Vec<Vec<CoordBound>>,
    /// `s0[m][j]` — node `j` must decode sub-message `m`.
    pub s0: Vec<Vec<bool>>,
    /// `h0[m][j]` — node `j` holds sub-message `m` up front.
    pub h0: Vec<Vec<bool>>,
    /// `sigma0[m][j]` — decoding deadline where `s0[m][j]` is set.
    pub sigma0: Vec<Vec<Option<f64>>>,
}

/// One phase of the expansion: a classical (uniform-deadline) problem over
/// the sub-messages, active for `duration` blocklength units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseProblem {
    /// 1-based phase index.
    pub phase: usize,
    pub duration: f64,
    pub s: Vec<Vec<bool>>,
    pub h: Vec<Vec<bool>>,
}

/// Rates per sub-message, indexed like [`ExpandedProblem::submessages`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubRateVector(pub Vec<f64>);

impl SubRateVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }
}

/// A sub-message described by explicit per-node deadlines instead of a
/// schedule over the phase grid; the input representation for
/// [`canonicalize_submessages`].
#[derive(Debug, Clone, PartialEq)]
pub struct TimedSubMessage {
    pub message: usize,
    /// `None` means the node is not required to decode it.
    pub deadlines: Vec<Option<f64>>,
}

fn coordinate_bounds(
    problem: &NetworkProblem,
    partition: &TimePartition,
    sigma: &crate::model::TimeConstraints,
    message: usize,
    opts: &ExpandOptions,
) -> Result<Vec<CoordBound>> {
    let lambda = partition.phase_count();
    let mut bounds = Vec::with_capacity(problem.node_count());
    for j in 0..problem.node_count() {
        let b = if problem.holds(message, j) {
            CoordBound::Fixed
        } else if problem.demanded(message, j) {
            let t = sigma.get(message, j).ok_or_else(|| {
                Error::Validation(format!(
                    "missing time constraint for demand ({}, {})",
                    message + 1,
                    j + 1
                ))
            })?;
            let lam = partition.phase_of(t).ok_or_else(|| {
                Error::Internal(format!("time {} not in partition", t))
            })?;
            CoordBound::UpTo(lam)
        } else if opts.no_overhearing {
            CoordBound::Fixed
        } else {
            CoordBound::UpTo(lambda + 1)
        };
        bounds.push(b);
    }
    Ok(bounds)
}

fn enumerate_schedules(bounds: &[CoordBound], lambda: usize) -> Vec<Vec<usize>> {
    let ranges: Vec<Vec<usize>> = bounds
        .iter()
        .map(|b| match b {
            CoordBound::Fixed => vec![lambda + 1],
            CoordBound::UpTo(limit) => (1..=*limit).collect(),
        })
        .collect();
    let mut out = Vec::new();
    let mut current = vec![0usize; ranges.len()];
    fn rec(ranges: &[Vec<usize>], depth: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if depth == ranges.len() {
            out.push(current.clone());
            return;
        }
        for &v in &ranges[depth] {
            current[depth] = v;
            rec(ranges, depth + 1, current, out);
        }
    }
    rec(&ranges, 0, &mut current, &mut out);
    out
}

fn schedule_count(bounds: &[CoordBound]) -> u128 {
    bounds
        .iter()
        .map(|b| match b {
            CoordBound::Fixed => 1u128,
            CoordBound::UpTo(limit) => *limit as u128,
        })
        .product()
}

/// Enumerates the canonical schedule set for one message, in lexicographic
/// order.
pub fn build_index_set(
    problem: &NetworkProblem,
    sigma: &crate::model::TimeConstraints,
    message: usize,
    opts: &ExpandOptions,
) -> Result<Vec<Vec<usize>>> {
    let partition = time_partition(sigma, &problem.demands)?;
    let bounds = coordinate_bounds(problem, &partition, sigma, message, opts)?;
    let count = schedule_count(&bounds);
    if count > opts.max_submessages as u128 {
        return Err(Error::SubMessageCap {
            total: count.min(usize::MAX as u128) as usize,
            cap: opts.max_submessages,
        });
    }
    Ok(enumerate_schedules(&bounds, partition.phase_count()))
}

/// Builds the expanded problem from a validated network problem and its
/// time constraints. The channel is shared, not copied.
pub fn expand(
    problem: &NetworkProblem,
    sigma: &crate::model::TimeConstraints,
    opts: &ExpandOptions,
) -> Result<ExpandedProblem> {
    let report = validate_problem(problem, sigma);
    if !report.is_valid() {
        return Err(report.to_error());
    }
    let partition = time_partition(sigma, &problem.demands)?;
    let lambda = partition.phase_count();
    let ell = problem.node_count();

    let mut all_bounds = Vec::with_capacity(problem.message_count);
    let mut total: u128 = 0;
    for i in 0..problem.message_count {
        let bounds = coordinate_bounds(problem, &partition, sigma, i, opts)?;
        total += schedule_count(&bounds);
        all_bounds.push(bounds);
    }
    if total > opts.max_submessages as u128 {
        return Err(Error::SubMessageCap {
            total: total.min(usize::MAX as u128) as usize,
            cap: opts.max_submessages,
        });
    }

    let mut submessages = Vec::with_capacity(total as usize);
    for (i, bounds) in all_bounds.iter().enumerate() {
        for schedule in enumerate_schedules(bounds, lambda) {
            submessages.push(SubMessageIndex { message: i, schedule });
        }
    }

    let mut s0 = Vec::with_capacity(submessages.len());
    let mut h0 = Vec::with_capacity(submessages.len());
    let mut sigma0 = Vec::with_capacity(submessages.len());
    for sub in &submessages {
        let mut s_row = vec![false; ell];
        let mut sig_row = vec![None; ell];
        for j in 0..ell {
            let a_j = sub.schedule[j];
            if a_j <= lambda {
                s_row[j] = true;
                sig_row[j] = Some(partition.distinct_times[a_j - 1]);
            }
        }
        let h_row: Vec<bool> = (0..ell).map(|j| problem.holds(sub.message, j)).collect();
        s0.push(s_row);
        h0.push(h_row);
        sigma0.push(sig_row);
    }

    Ok(ExpandedProblem {
        base: problem.clone(),
        partition,
        submessages,
        bounds: all_bounds,
        s0,
        h0,
        sigma0,
    })
}

impl ExpandedProblem {
    pub fn submessage_count(&self) -> usize {
        self.submessages.len()
    }

    pub fn phase_count(&self) -> usize {
        self.partition.phase_count()
    }

    pub fn position_of(&self, sub: &SubMessageIndex) -> Option<usize> {
        self.submessages.binary_search(sub).ok()
    }

    /// Derives the phase problems and re-checks the construction
    /// invariants (`Σ_λ S_λ = S₀`, `H₁ = H₀`, `H_{λ+1} = H_λ ∪ S_λ`).
    pub fn phase_problems(&self) -> Result<Vec<PhaseProblem>> {
        let lambda = self.phase_count();
        let ell = self.base.node_count();
        let m = self.submessage_count();

        let mut phases = Vec::with_capacity(lambda);
        let mut h_current = self.h0.clone();
        for lam in 1..=lambda {
            let mut s = vec![vec![false; ell]; m];
            for (idx, sub) in self.submessages.iter().enumerate() {
                for j in 0..ell {
                    if sub.schedule[j] == lam {
                        s[idx][j] = true;
                    }
                }
            }
            let h = h_current.clone();
            for idx in 0..m {
                for j in 0..ell {
                    h_current[idx][j] = h_current[idx][j] || s[idx][j];
                }
            }
            phases.push(PhaseProblem {
                phase: lam,
                duration: self.partition.duration(lam),
                s,
                h,
            });
        }

        // Re-check: every S0 demand appears in exactly one phase.
        for idx in 0..m {
            for j in 0..ell {
                let count = phases.iter().filter(|p| p.s[idx][j]).count();
                let expected = if self.s0[idx][j] { 1 } else { 0 };
                if count != expected {
                    return Err(Error::Internal(format!(
                        "demand ({}, node {}) appears in {} phases, expected {}",
                        self.submessages[idx].id(),
                        j + 1,
                        count,
                        expected
                    )));
                }
            }
        }
        if let Some(first) = phases.first() {
            if first.h != self.h0 {
                return Err(Error::Internal("H_1 differs from H_0".into()));
            }
        }
        Ok(phases)
    }

    /// Maps sub-message rates back to original message rates:
    /// `R_i = Σ_a R⁰_(i,a)`.
    pub fn rates_to_original(&self, rates: &SubRateVector) -> Result<RateVector> {
        if rates.0.len() != self.submessage_count() {
            return Err(Error::IndexMismatch(format!(
                "sub-rate vector has {} entries, expected {}",
                rates.0.len(),
                self.submessage_count()
            )));
        }
        let mut out = vec![0.0; self.base.message_count];
        for (sub, &r) in self.submessages.iter().zip(&rates.0) {
            out[sub.message] += r;
        }
        Ok(RateVector(out))
    }

    /// Canonical schedule for message `i`: the tightest deadline at every
    /// effective demand coordinate, `Λ+1` elsewhere.
    pub fn canonical_schedule(&self, message: usize) -> Vec<usize> {
        let lambda = self.phase_count();
        self.bounds[message]
            .iter()
            .enumerate()
            .map(|(j, b)| match b {
                CoordBound::Fixed => lambda + 1,
                CoordBound::UpTo(limit) => {
                    if self.base.demanded(message, j) {
                        *limit
                    } else {
                        lambda + 1
                    }
                }
            })
            .collect()
    }

    /// Places each message's full rate on its canonical schedule and zero
    /// everywhere else; the right inverse of [`Self::rates_to_original`].
    pub fn canonical_embedding(&self, rates: &RateVector) -> Result<SubRateVector> {
        if rates.0.len() != self.base.message_count {
            return Err(Error::IndexMismatch(format!(
                "rate vector has {} entries, expected {}",
                rates.0.len(),
                self.base.message_count
            )));
        }
        let mut out = vec![0.0; self.submessage_count()];
        for (i, &r) in rates.0.iter().enumerate() {
            if r < 0.0 {
                return Err(Error::Validation(format!("negative rate for message {}", i + 1)));
            }
            let sub = SubMessageIndex {
                message: i,
                schedule: self.canonical_schedule(i),
            };
            let pos = self.position_of(&sub).ok_or_else(|| {
                Error::Internal(format!("canonical schedule {} missing from index set", sub.id()))
            })?;
            out[pos] = r;
        }
        Ok(SubRateVector(out))
    }

    /// The explicit-deadline view of this problem's sub-messages.
    pub fn timed_submessages(&self) -> Vec<TimedSubMessage> {
        self.submessages
            .iter()
            .zip(&self.sigma0)
            .map(|(sub, sig)| TimedSubMessage {
                message: sub.message,
                deadlines: sig.clone(),
            })
            .collect()
    }
}

/// Merges sub-messages with identical effective decoding-time vectors.
///
/// Deadlines are snapped up to the problem's phase grid (decoding earlier
/// than a grid time satisfies that grid time), holder coordinates are
/// vacuous and ignored, and rates of merged sub-messages are summed. The
/// output is in canonical lexicographic order and the operation is
/// idempotent.
pub fn canonicalize_submessages(
    problem: &NetworkProblem,
    partition: &TimePartition,
    items: &[(TimedSubMessage, f64)],
) -> Result<Vec<(SubMessageIndex, f64)>> {
    let lambda = partition.phase_count();
    let ell = problem.node_count();
    let mut merged: std::collections::BTreeMap<SubMessageIndex, f64> = Default::default();
    for (item, rate) in items {
        if item.deadlines.len() != ell {
            return Err(Error::IndexMismatch(format!(
                "sub-message of message {} has {} deadline slots, expected {}",
                item.message + 1,
                item.deadlines.len(),
                ell
            )));
        }
        let mut schedule = vec![lambda + 1; ell];
        for j in 0..ell {
            if problem.holds(item.message, j) {
                continue; // vacuous: the node already has the message
            }
            if let Some(t) = item.deadlines[j] {
                let lam = partition
                    .distinct_times
                    .iter()
                    .position(|&g| g >= t)
                    .ok_or_else(|| {
                        Error::Validation(format!(
                            "deadline {} at node {} exceeds the last phase time",
                            t,
                            j + 1
                        ))
                    })?;
                schedule[j] = lam + 1;
            }
        }
        let key = SubMessageIndex {
            message: item.message,
            schedule,
        };
        *merged.entry(key).or_insert(0.0) += rate;
    }
    Ok(merged.into_iter().collect())
}
