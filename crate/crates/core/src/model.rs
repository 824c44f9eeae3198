//! Domain types and validation for discrete memoryless network
//! communication problems and their decoding-time constraints.
//!
//! A network problem couples a finite-alphabet channel with `k` messages,
//! a side-information matrix `H` (who holds which message up front), a
//! demand matrix `S` (who must decode which message), and one positive
//! time constraint per demand giving the fraction of the blocklength by
//! which that demand must be decoded.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Row-sum tolerance for channel transition tables.
pub const STOCHASTICITY_TOL: f64 = 1e-9;

/// Hard cap on dense transition-table entries.
const MAX_TABLE_ENTRIES: usize = 1 << 24;

/// A discrete memoryless channel over `node_count` nodes.
///
/// Node `j` transmits symbols from an alphabet of size `input_alphabets[j]`
/// and observes symbols from an alphabet of size `output_alphabets[j]`
/// (size 1 meaning the node does not transmit / does not receive). The
/// transition table is dense: `transition[x][y]` is the probability of the
/// joint output with index `y` given the joint input with index `x`. Joint
/// indices are mixed-radix with node 0 most significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    input_alphabets: Vec<usize>,
    output_alphabets: Vec<usize>,
    transition: Vec<Vec<f64>>,
}

impl Channel {
    /// Builds a channel and checks dimensions and stochasticity.
    pub fn new(
        input_alphabets: Vec<usize>,
        output_alphabets: Vec<usize>,
        transition: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let ch = Self::new_unchecked(input_alphabets, output_alphabets, transition)?;
        let violations = ch.stochasticity_violations();
        if let Some(v) = violations.first() {
            return Err(Error::Validation(v.to_string()));
        }
        Ok(ch)
    }

    /// Builds a channel checking only structural dimensions, leaving
    /// probability checks to [`validate_problem`]. Lets a parsed-but-invalid
    /// table be carried into a validation report.
    pub fn new_unchecked(
        input_alphabets: Vec<usize>,
        output_alphabets: Vec<usize>,
        transition: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if input_alphabets.is_empty() || input_alphabets.len() != output_alphabets.len() {
            return Err(Error::Dimension(format!(
                "need matching non-empty alphabet lists, got {} inputs and {} outputs",
                input_alphabets.len(),
                output_alphabets.len()
            )));
        }
        if input_alphabets.iter().any(|&a| a == 0) || output_alphabets.iter().any(|&a| a == 0) {
            return Err(Error::Dimension("alphabet sizes must be positive".into()));
        }
        let nx: usize = input_alphabets.iter().product();
        let ny: usize = output_alphabets.iter().product();
        if nx.saturating_mul(ny) > MAX_TABLE_ENTRIES {
            return Err(Error::Dimension(format!(
                "transition table {}x{} exceeds {} entries",
                nx, ny, MAX_TABLE_ENTRIES
            )));
        }
        if transition.len() != nx || transition.iter().any(|row| row.len() != ny) {
            return Err(Error::Dimension(format!(
                "transition table must be {}x{} (joint inputs x joint outputs)",
                nx, ny
            )));
        }
        Ok(Self {
            input_alphabets,
            output_alphabets,
            transition,
        })
    }

    /// Builds a channel from per-receiver tables `W_j(y_j | joint x)`.
    ///
    /// `tables[j]` may be `None` only when node `j` has a trivial output
    /// alphabet (size 1). The joint pmf is the product of the factors.
    pub fn from_receiver_tables(
        input_alphabets: Vec<usize>,
        output_alphabets: Vec<usize>,
        tables: Vec<Option<Vec<Vec<f64>>>>,
    ) -> Result<Self> {
        let ell = input_alphabets.len();
        if tables.len() != ell || output_alphabets.len() != ell {
            return Err(Error::Dimension(
                "need one receiver-table slot per node".into(),
            ));
        }
        let nx: usize = input_alphabets.iter().product();
        for (j, t) in tables.iter().enumerate() {
            match t {
                None if output_alphabets[j] != 1 => {
                    return Err(Error::Dimension(format!(
                        "node {} has output alphabet {} but no receiver table",
                        j + 1,
                        output_alphabets[j]
                    )));
                }
                Some(rows)
                    if rows.len() != nx || rows.iter().any(|r| r.len() != output_alphabets[j]) =>
                {
                    return Err(Error::Dimension(format!(
                        "receiver table for node {} must be {}x{}",
                        j + 1,
                        nx,
                        output_alphabets[j]
                    )));
                }
                _ => {}
            }
        }
        let ny: usize = output_alphabets.iter().product();
        if nx.saturating_mul(ny) > MAX_TABLE_ENTRIES {
            return Err(Error::Dimension(format!(
                "joint table {}x{} exceeds {} entries",
                nx, ny, MAX_TABLE_ENTRIES
            )));
        }
        let mut transition = vec![vec![0.0; ny]; nx];
        for x in 0..nx {
            for y in 0..ny {
                let ybar = unrank(y, &output_alphabets);
                let mut p = 1.0;
                for j in 0..ell {
                    p *= match &tables[j] {
                        Some(rows) => rows[x][ybar[j]],
                        None => 1.0,
                    };
                }
                transition[x][y] = p;
            }
        }
        Self::new_unchecked(input_alphabets, output_alphabets, transition)
    }

    pub fn node_count(&self) -> usize {
        self.input_alphabets.len()
    }

    pub fn input_alphabets(&self) -> &[usize] {
        &self.input_alphabets
    }

    pub fn output_alphabets(&self) -> &[usize] {
        &self.output_alphabets
    }

    pub fn joint_input_size(&self) -> usize {
        self.input_alphabets.iter().product()
    }

    pub fn joint_output_size(&self) -> usize {
        self.output_alphabets.iter().product()
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    fn stochasticity_violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (x, row) in self.transition.iter().enumerate() {
            if let Some(&p) = row.iter().find(|&&p| !(0.0..=1.0).contains(&p)) {
                out.push(Violation::EntryOutOfRange { row: x, value: p });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTICITY_TOL {
                out.push(Violation::StochasticityViolation { row: x, sum });
            }
        }
        out
    }

    /// Marginal channel `W_j(y_j | joint x)` seen by receiver `node`.
    pub fn receiver_marginal(&self, node: usize) -> Vec<Vec<f64>> {
        let ny_j = self.output_alphabets[node];
        let mut out = vec![vec![0.0; ny_j]; self.joint_input_size()];
        for (x, row) in self.transition.iter().enumerate() {
            for (y, &p) in row.iter().enumerate() {
                let ybar = unrank(y, &self.output_alphabets);
                out[x][ybar[node]] += p;
            }
        }
        out
    }

    /// Marginal channel to `node` with the inputs of nodes outside `keep`
    /// pinned to symbol 0, reindexed over the kept nodes' joint inputs.
    pub fn restricted_marginal(&self, node: usize, keep: &[usize]) -> Vec<Vec<f64>> {
        let full = self.receiver_marginal(node);
        let kept_sizes: Vec<usize> = keep.iter().map(|&j| self.input_alphabets[j]).collect();
        let nx: usize = kept_sizes.iter().product();
        let mut out = Vec::with_capacity(nx);
        for xr in 0..nx {
            let kept = unrank(xr, &kept_sizes);
            let mut full_sym = vec![0usize; self.node_count()];
            for (slot, &j) in keep.iter().enumerate() {
                full_sym[j] = kept[slot];
            }
            out.push(full[rank(&full_sym, &self.input_alphabets)].clone());
        }
        out
    }

    /// Input coordinates (node indices) the marginal to `node` depends on.
    pub fn relevant_inputs(&self, node: usize) -> Vec<usize> {
        let marginal = self.receiver_marginal(node);
        let mut relevant = Vec::new();
        for j in 0..self.node_count() {
            if self.input_alphabets[j] < 2 {
                continue;
            }
            let mut depends = false;
            'scan: for x in 0..self.joint_input_size() {
                let sym = unrank(x, &self.input_alphabets);
                if sym[j] != 0 {
                    continue;
                }
                for v in 1..self.input_alphabets[j] {
                    let mut sym2 = sym.clone();
                    sym2[j] = v;
                    let x2 = rank(&sym2, &self.input_alphabets);
                    let differs = marginal[x]
                        .iter()
                        .zip(&marginal[x2])
                        .any(|(a, b)| (a - b).abs() > 1e-12);
                    if differs {
                        depends = true;
                        break 'scan;
                    }
                }
            }
            if depends {
                relevant.push(j);
            }
        }
        relevant
    }
}

/// Mixed-radix rank of a symbol vector (first coordinate most significant).
pub fn rank(symbols: &[usize], sizes: &[usize]) -> usize {
    let mut idx = 0;
    for (s, &sz) in symbols.iter().zip(sizes) {
        debug_assert!(*s < sz);
        idx = idx * sz + s;
    }
    idx
}

/// Inverse of [`rank`].
pub fn unrank(mut idx: usize, sizes: &[usize]) -> Vec<usize> {
    let mut out = vec![0; sizes.len()];
    for j in (0..sizes.len()).rev() {
        out[j] = idx % sizes[j];
        idx /= sizes[j];
    }
    out
}

/// A network communication problem: channel, messages, side information,
/// demands.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkProblem {
    pub channel: Arc<Channel>,
    pub message_count: usize,
    /// `side_info[i][j]` — node `j` holds message `i` before communication.
    pub side_info: Vec<Vec<bool>>,
    /// `demands[i][j]` — node `j` must decode message `i`.
    pub demands: Vec<Vec<bool>>,
}

impl NetworkProblem {
    pub fn node_count(&self) -> usize {
        self.channel.node_count()
    }

    pub fn holds(&self, message: usize, node: usize) -> bool {
        self.side_info[message][node]
    }

    pub fn demanded(&self, message: usize, node: usize) -> bool {
        self.demands[message][node]
    }
}

/// Decoding-time constraints: one positive fraction of the blocklength per
/// demand pair `(message, node)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TimeConstraints {
    entries: BTreeMap<(usize, usize), f64>,
}

impl TimeConstraints {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = ((usize, usize), f64)>) -> Self {
        Self {
            entries: entries.into_iter().collect(),
        }
    }

    pub fn set(&mut self, message: usize, node: usize, sigma: f64) {
        self.entries.insert((message, node), sigma);
    }

    pub fn get(&self, message: usize, node: usize) -> Option<f64> {
        self.entries.get(&(message, node)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize), &f64)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Returns the constraints scaled by `alpha` (exact for powers of two).
    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(&k, &v)| (k, v * alpha))
                .collect(),
        }
    }
}

/// A rate vector, one nonnegative entry per message, in bits per
/// blocklength unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateVector(pub Vec<f64>);

impl RateVector {
    pub fn zeros(k: usize) -> Self {
        Self(vec![0.0; k])
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// The sorted distinct decoding times and the demand-pair groups they induce.
///
/// `delta[lam]` for `lam < distinct_count` holds the demand pairs decoded at
/// the `lam`-th distinct time; `delta[distinct_count]` holds the non-demand
/// pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimePartition {
    pub distinct_times: Vec<f64>,
    pub delta: Vec<Vec<(usize, usize)>>,
}

impl TimePartition {
    /// Number of distinct decoding times.
    pub fn phase_count(&self) -> usize {
        self.distinct_times.len()
    }

    /// 1-based phase index of time `sigma`, by exact equality.
    pub fn phase_of(&self, sigma: f64) -> Option<usize> {
        self.distinct_times.iter().position(|&t| t == sigma).map(|p| p + 1)
    }

    /// Duration of 1-based phase `lam` (with time 0 before the first phase).
    pub fn duration(&self, lam: usize) -> f64 {
        let prev = if lam == 1 {
            0.0
        } else {
            self.distinct_times[lam - 2]
        };
        self.distinct_times[lam - 1] - prev
    }
}

/// A single validation failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    DimensionMismatch { detail: String },
    EntryOutOfRange { row: usize, value: f64 },
    StochasticityViolation { row: usize, sum: f64 },
    NoHolder { message: usize },
    NoDemander { message: usize },
    MissingTimeConstraint { message: usize, node: usize },
    OrphanTimeConstraint { message: usize, node: usize },
    NonPositiveTime { message: usize, node: usize, value: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::DimensionMismatch { detail } => write!(f, "dimension mismatch: {detail}"),
            Violation::EntryOutOfRange { row, value } => {
                write!(f, "entry out of range in transition row {}: {}", row + 1, value)
            }
            Violation::StochasticityViolation { row, sum } => {
                write!(f, "stochasticity violation: transition row {} sums to {}", row + 1, sum)
            }
            Violation::NoHolder { message } => {
                write!(f, "message {} has no holder", message + 1)
            }
            Violation::NoDemander { message } => {
                write!(f, "message {} is demanded by nobody", message + 1)
            }
            Violation::MissingTimeConstraint { message, node } => {
                write!(f, "missing time constraint for demand ({}, {})", message + 1, node + 1)
            }
            Violation::OrphanTimeConstraint { message, node } => {
                write!(f, "orphan time constraint ({}, {}): pair is not a demand", message + 1, node + 1)
            }
            Violation::NonPositiveTime { message, node, value } => {
                write!(f, "non-positive time constraint ({}, {}): {}", message + 1, node + 1, value)
            }
        }
    }
}

/// Outcome of validating a problem against its time constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Demands `(i, j)` where node `j` already holds message `i`; treated
    /// downstream as decoded at time 0.
    pub trivially_satisfied: Vec<(usize, usize)>,
    /// Messages all of whose demands are trivially satisfied; they need no
    /// communication and the inner bound reports rate 0 for them.
    pub fully_preheld_messages: Vec<usize>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn to_error(&self) -> Error {
        let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        Error::Validation(msgs.join("; "))
    }
}

/// Checks every problem invariant and returns a report rather than failing
/// on the first violation.
pub fn validate_problem(problem: &NetworkProblem, sigma: &TimeConstraints) -> ValidationReport {
    let mut violations = Vec::new();
    let k = problem.message_count;
    let ell = problem.node_count();

    if problem.side_info.len() != k || problem.side_info.iter().any(|r| r.len() != ell) {
        violations.push(Violation::DimensionMismatch {
            detail: format!("side-information matrix must be {}x{}", k, ell),
        });
    }
    if problem.demands.len() != k || problem.demands.iter().any(|r| r.len() != ell) {
        violations.push(Violation::DimensionMismatch {
            detail: format!("demand matrix must be {}x{}", k, ell),
        });
    }
    if !violations.is_empty() {
        return ValidationReport {
            violations,
            trivially_satisfied: Vec::new(),
            fully_preheld_messages: Vec::new(),
        };
    }

    violations.extend(problem.channel.stochasticity_violations());

    for i in 0..k {
        if !problem.side_info[i].iter().any(|&h| h) {
            violations.push(Violation::NoHolder { message: i });
        }
        if !problem.demands[i].iter().any(|&s| s) {
            violations.push(Violation::NoDemander { message: i });
        }
    }

    for i in 0..k {
        for j in 0..ell {
            if problem.demands[i][j] {
                match sigma.get(i, j) {
                    None => violations.push(Violation::MissingTimeConstraint { message: i, node: j }),
                    Some(v) if !(v > 0.0) => {
                        violations.push(Violation::NonPositiveTime { message: i, node: j, value: v })
                    }
                    _ => {}
                }
            }
        }
    }
    for (&(i, j), _) in sigma.iter() {
        if i >= k || j >= ell || !problem.demands[i][j] {
            violations.push(Violation::OrphanTimeConstraint { message: i, node: j });
        }
    }

    let mut trivially_satisfied = Vec::new();
    let mut fully_preheld_messages = Vec::new();
    for i in 0..k {
        let mut any_demand = false;
        let mut any_effective = false;
        for j in 0..ell {
            if problem.demands[i][j] {
                any_demand = true;
                if problem.side_info[i][j] {
                    trivially_satisfied.push((i, j));
                } else {
                    any_effective = true;
                }
            }
        }
        if any_demand && !any_effective {
            fully_preheld_messages.push(i);
        }
    }

    ValidationReport {
        violations,
        trivially_satisfied,
        fully_preheld_messages,
    }
}

/// Groups the demand pairs by their distinct decoding times.
///
/// Distinct-time detection uses exact equality on the parsed values; the
/// times are user-specified metadata, so no epsilon clustering is applied.
pub fn time_partition(sigma: &TimeConstraints, demands: &[Vec<bool>]) -> Result<TimePartition> {
    let k = demands.len();
    let ell = demands.first().map_or(0, |r| r.len());

    let mut distinct: Vec<f64> = Vec::new();
    for (&(i, j), &v) in sigma.iter() {
        if i >= k || j >= ell || !demands[i][j] {
            return Err(Error::Validation(
                Violation::OrphanTimeConstraint { message: i, node: j }.to_string(),
            ));
        }
        if !(v > 0.0) {
            return Err(Error::Validation(
                Violation::NonPositiveTime { message: i, node: j, value: v }.to_string(),
            ));
        }
        if !distinct.contains(&v) {
            distinct.push(v);
        }
    }
    distinct.sort_by(|a, b| a.partial_cmp(b).expect("times are finite"));

    let lambda = distinct.len();
    let mut delta: Vec<Vec<(usize, usize)>> = vec![Vec::new(); lambda + 1];
    for i in 0..k {
        for j in 0..ell {
            if demands[i][j] {
                let v = sigma.get(i, j).ok_or_else(|| {
                    Error::Validation(
                        Violation::MissingTimeConstraint { message: i, node: j }.to_string(),
                    )
                })?;
                let lam = distinct.iter().position(|&t| t == v).expect("collected above");
                delta[lam].push((i, j));
            } else {
                delta[lambda].push((i, j));
            }
        }
    }

    Ok(TimePartition {
        distinct_times: distinct,
        delta,
    })
}
