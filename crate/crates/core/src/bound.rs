//! Composes phase problems and capacity oracles into an inner bound on
//! the time-rate region: an allocation of sub-message rates is achievable
//! when, in every phase, the duration-scaled rates of that phase's active
//! sub-messages lie in the phase's single-shot region.
//!
//! Phases are first decomposed into non-interacting components (sub-message
//! groups whose demanders share neither receivers nor relevant channel
//! inputs); each component must then match one of the shipped oracle
//! classes — point-to-point, common-message multicast, or two-receiver
//! degraded broadcast — or the whole computation refuses with an
//! "unsupported phase structure" error rather than reporting a silent 0.

use serde::Serialize;

use crate::expansion::{ExpandedProblem, PhaseProblem, SubRateVector};
use crate::linprog::{self, LpOutcome};
use crate::oracles::{
    blahut_arimoto_capacity, classify_receiver, common_message_capacity, degraded_bc_region,
    mutual_information, stronger_receiver, superposition_rates, RateRegion2D,
    SuperpositionWitness,
};
use crate::{Error, Result};

/// Tuning knobs for the shipped oracles.
#[derive(Debug, Clone)]
pub struct OracleConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Grid steps per simplex coordinate for the degraded-broadcast region.
    pub grid_steps: usize,
    /// Auxiliary-variable cardinality; `None` picks
    /// `min(|X|, |Y_strong|, |Y_weak|)`, sufficient for degraded broadcast.
    pub u_cardinality: Option<usize>,
    /// Caller-asserted degraded order `(strong node, weak node)` for
    /// channels outside the erasure/identity checker's reach.
    pub assume_degraded: Option<(usize, usize)>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 100_000,
            grid_steps: 201,
            u_cardinality: None,
            assume_degraded: None,
        }
    }
}

/// One convex piece of a witness: a frontier point with the distribution
/// that achieves it.
#[derive(Debug, Clone, Serialize)]
pub struct WitnessPart {
    pub weight: f64,
    pub rates: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_distribution: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub superposition: Option<SuperpositionWitness>,
}

/// A convex combination of achievable points dominating a claimed point.
#[derive(Debug, Clone, Serialize)]
pub struct OracleWitness {
    pub parts: Vec<WitnessPart>,
}

/// A single-shot achievable region for one phase component.
///
/// Rate coordinates are per channel use, indexed by the component's
/// sub-message order.
pub trait PhaseOracle: Send + Sync {
    fn dim(&self) -> usize;
    fn contains(&self, rates: &[f64], tol: f64) -> bool;
    /// Maximum of `weights·rates` over the region, with an achieving point.
    fn maximize(&self, weights: &[f64]) -> (f64, Vec<f64>);
    /// Facet inequalities `coeffs·rates ≤ rhs`, or `None` when only
    /// membership queries are available.
    fn halfspaces(&self) -> Option<Vec<(Vec<f64>, f64)>>;
    /// Achieving distributions for a member point.
    fn witness(&self, rates: &[f64]) -> Option<OracleWitness>;
    /// Recomputes the witness rates from its distributions and checks the
    /// claimed point is dominated, to `tol`.
    fn verify_witness(&self, witness: &OracleWitness, rates: &[f64], tol: f64) -> Result<()>;
    fn describe(&self) -> String;
}

/// `[0, capacity]` on a single rate coordinate: point-to-point links and
/// common-message multicast.
pub struct IntervalOracle {
    pub capacity: f64,
    pub argmax: Vec<f64>,
    /// Receiver marginals the capacity was computed from.
    pub channels: Vec<Vec<Vec<f64>>>,
    pub label: String,
}

impl PhaseOracle for IntervalOracle {
    fn dim(&self) -> usize {
        1
    }

    fn contains(&self, rates: &[f64], tol: f64) -> bool {
        rates[0] >= -tol && rates[0] <= self.capacity + tol
    }

    fn maximize(&self, weights: &[f64]) -> (f64, Vec<f64>) {
        if weights[0] > 0.0 {
            (weights[0] * self.capacity, vec![self.capacity])
        } else {
            (0.0, vec![0.0])
        }
    }

    fn halfspaces(&self) -> Option<Vec<(Vec<f64>, f64)>> {
        Some(vec![(vec![1.0], self.capacity)])
    }

    fn witness(&self, rates: &[f64]) -> Option<OracleWitness> {
        if !self.contains(rates, 1e-9) {
            return None;
        }
        Some(OracleWitness {
            parts: vec![WitnessPart {
                weight: 1.0,
                rates: vec![self.capacity],
                input_distribution: Some(self.argmax.clone()),
                superposition: None,
            }],
        })
    }

    fn verify_witness(&self, witness: &OracleWitness, rates: &[f64], tol: f64) -> Result<()> {
        let mut total = 0.0;
        for part in &witness.parts {
            let dist = part.input_distribution.as_ref().ok_or_else(|| {
                Error::Internal("interval witness lacks an input distribution".into())
            })?;
            let mut value = f64::INFINITY;
            for ch in &self.channels {
                value = value.min(mutual_information(dist, ch)?);
            }
            if value < part.rates[0] - tol {
                return Err(Error::Internal(format!(
                    "witness distribution achieves {}, claimed {}",
                    value, part.rates[0]
                )));
            }
            total += part.weight * part.rates[0];
        }
        if total < rates[0] - tol {
            return Err(Error::Internal(format!(
                "witness combination {} does not dominate claimed rate {}",
                total, rates[0]
            )));
        }
        Ok(())
    }

    fn describe(&self) -> String {
        self.label.clone()
    }
}

/// Two-receiver degraded-broadcast superposition region over
/// `(private, common)` rate coordinates.
pub struct DegradedBcOracle {
    pub region: RateRegion2D,
    pub strong: Vec<Vec<f64>>,
    pub weak: Vec<Vec<f64>>,
    pub label: String,
}

impl PhaseOracle for DegradedBcOracle {
    fn dim(&self) -> usize {
        2
    }

    fn contains(&self, rates: &[f64], tol: f64) -> bool {
        self.region.contains(rates[0], rates[1], tol)
    }

    fn maximize(&self, weights: &[f64]) -> (f64, Vec<f64>) {
        self.region.maximize(weights[0], weights[1])
    }

    fn halfspaces(&self) -> Option<Vec<(Vec<f64>, f64)>> {
        Some(
            self.region
                .halfspaces()
                .into_iter()
                .map(|(a, b, rhs)| (vec![a, b], rhs))
                .collect(),
        )
    }

    fn witness(&self, rates: &[f64]) -> Option<OracleWitness> {
        let combo = self.region.dominating_combination(rates[0], rates[1], 1e-9)?;
        Some(OracleWitness {
            parts: combo
                .into_iter()
                .map(|(weight, point)| WitnessPart {
                    weight,
                    rates: vec![point.private_rate, point.common_rate],
                    input_distribution: None,
                    superposition: Some(point.witness),
                })
                .collect(),
        })
    }

    fn verify_witness(&self, witness: &OracleWitness, rates: &[f64], tol: f64) -> Result<()> {
        let mut total = [0.0, 0.0];
        for part in &witness.parts {
            let sup = part.superposition.as_ref().ok_or_else(|| {
                Error::Internal("broadcast witness lacks a superposition distribution".into())
            })?;
            let (rp, rc) = superposition_rates(sup, &self.strong, &self.weak)?;
            if rp < part.rates[0] - tol || rc < part.rates[1] - tol {
                return Err(Error::Internal(format!(
                    "witness distribution achieves ({}, {}), claimed ({}, {})",
                    rp, rc, part.rates[0], part.rates[1]
                )));
            }
            total[0] += part.weight * part.rates[0];
            total[1] += part.weight * part.rates[1];
        }
        if total[0] < rates[0] - tol || total[1] < rates[1] - tol {
            return Err(Error::Internal(format!(
                "witness combination ({}, {}) does not dominate ({}, {})",
                total[0], total[1], rates[0], rates[1]
            )));
        }
        Ok(())
    }

    fn describe(&self) -> String {
        self.label.clone()
    }
}

/// One phase component offered to an oracle provider.
pub struct ComponentView<'a> {
    pub phase: usize,
    pub duration: f64,
    pub expanded: &'a ExpandedProblem,
    /// Sub-message indices in this component.
    pub subs: Vec<usize>,
    /// Demanding nodes per sub-message, aligned with `subs`.
    pub demanders: Vec<Vec<usize>>,
    /// Transmitting nodes whose inputs this component's receivers see.
    pub input_nodes: Vec<usize>,
}

impl ComponentView<'_> {
    /// Marginal channel to `node` over the component's input coordinates.
    pub fn channel_to(&self, node: usize) -> Vec<Vec<f64>> {
        self.expanded
            .base
            .channel
            .restricted_marginal(node, &self.input_nodes)
    }

    pub fn pattern_description(&self) -> String {
        let parts: Vec<String> = self
            .subs
            .iter()
            .zip(&self.demanders)
            .map(|(&s, dem)| {
                let nodes: Vec<String> = dem.iter().map(|&j| format!("v{}", j + 1)).collect();
                format!(
                    "{} demanded by {{{}}}",
                    self.expanded.submessages[s].id(),
                    nodes.join(",")
                )
            })
            .collect();
        format!("{} sub-message(s): {}", self.subs.len(), parts.join("; "))
    }
}

/// Supplies a single-shot oracle for a phase component, or declines.
///
/// On success the provider returns the component's sub-messages in the
/// oracle's coordinate order together with the oracle itself.
pub trait OracleProvider {
    fn provide(
        &self,
        view: &ComponentView<'_>,
    ) -> Option<Result<(Vec<usize>, Box<dyn PhaseOracle>)>>;
}

/// The shipped dispatch: (a) one sub-message with one demander →
/// point-to-point capacity; (b) one sub-message with several demanders →
/// common-message multicast; (c) two sub-messages with nested demand sets
/// over a certified-degraded two-receiver broadcast → superposition region.
pub struct BuiltinOracles {
    pub config: OracleConfig,
}

impl BuiltinOracles {
    pub fn new(config: OracleConfig) -> Self {
        Self { config }
    }
}

impl OracleProvider for BuiltinOracles {
    fn provide(
        &self,
        view: &ComponentView<'_>,
    ) -> Option<Result<(Vec<usize>, Box<dyn PhaseOracle>)>> {
        match view.subs.len() {
            1 => {
                let demanders = &view.demanders[0];
                let channels: Vec<Vec<Vec<f64>>> =
                    demanders.iter().map(|&j| view.channel_to(j)).collect();
                let result = if channels.len() == 1 {
                    blahut_arimoto_capacity(&channels[0], self.config.tol, self.config.max_iter)
                } else {
                    common_message_capacity(&channels)
                };
                let label = if channels.len() == 1 {
                    format!("point-to-point to v{}", demanders[0] + 1)
                } else {
                    format!("common-message multicast to {} receivers", channels.len())
                };
                Some(result.map(|cap| {
                    let oracle: Box<dyn PhaseOracle> = Box::new(IntervalOracle {
                        capacity: cap.value,
                        argmax: cap.argmax.as_slice().to_vec(),
                        channels,
                        label,
                    });
                    (view.subs.clone(), oracle)
                }))
            }
            2 => {
                // Nested demand sets: a private sub-message at one receiver
                // and a common sub-message at that receiver plus one more.
                let (d0, d1) = (&view.demanders[0], &view.demanders[1]);
                let (private_slot, common_slot) = match (d0.len(), d1.len()) {
                    (1, 2) => (0, 1),
                    (2, 1) => (1, 0),
                    _ => return None,
                };
                let private_node = view.demanders[private_slot][0];
                let common_nodes = &view.demanders[common_slot];
                if !common_nodes.contains(&private_node) {
                    return None;
                }
                let other_node = *common_nodes.iter().find(|&&j| j != private_node)?;

                let w_private = view.channel_to(private_node);
                let w_other = view.channel_to(other_node);
                let strong_is_private = match self.config.assume_degraded {
                    Some((strong, weak)) => {
                        if strong == private_node && weak == other_node {
                            true
                        } else if strong == other_node && weak == private_node {
                            false
                        } else {
                            return None;
                        }
                    }
                    None => {
                        let ca = classify_receiver(&w_private);
                        let cb = classify_receiver(&w_other);
                        match stronger_receiver(&ca, &cb) {
                            Some(0) => true,
                            Some(1) => false,
                            _ => return None,
                        }
                    }
                };
                if !strong_is_private {
                    // Superposition puts the private message at the
                    // stronger receiver; anything else is unsupported.
                    return None;
                }
                let nx = w_private.len();
                let u_card = self
                    .config
                    .u_cardinality
                    .unwrap_or_else(|| nx.min(w_private[0].len()).min(w_other[0].len()).max(2));
                let region =
                    match degraded_bc_region(&w_private, &w_other, u_card, self.config.grid_steps)
                    {
                        Ok(r) => r,
                        Err(e) => return Some(Err(e)),
                    };
                let oracle: Box<dyn PhaseOracle> = Box::new(DegradedBcOracle {
                    region,
                    strong: w_private,
                    weak: w_other,
                    label: format!(
                        "degraded broadcast: private to v{}, common to v{}+v{}",
                        private_node + 1,
                        private_node + 1,
                        other_node + 1
                    ),
                });
                Some(Ok((
                    vec![view.subs[private_slot], view.subs[common_slot]],
                    oracle,
                )))
            }
            _ => None,
        }
    }
}

/// One oracle-backed component of a phase.
pub struct Component {
    /// Sub-message indices in the oracle's coordinate order.
    pub subs: Vec<usize>,
    pub oracle: Box<dyn PhaseOracle>,
}

/// A phase with its duration and oracle-backed components.
pub struct PhaseConstraint {
    pub phase: usize,
    pub duration: f64,
    pub components: Vec<Component>,
}

struct DisjointSets(Vec<usize>);

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }
    fn find(&mut self, x: usize) -> usize {
        if self.0[x] != x {
            let root = self.find(self.0[x]);
            self.0[x] = root;
        }
        self.0[x]
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Decomposes each phase into non-interacting components and attaches an
/// oracle to every component, with every sub-message allowed to carry rate.
pub fn build_phase_constraints(
    expanded: &ExpandedProblem,
    phases: &[PhaseProblem],
    provider: &dyn OracleProvider,
) -> Result<Vec<PhaseConstraint>> {
    let support = vec![true; expanded.submessage_count()];
    build_phase_constraints_for(expanded, phases, provider, &support)
}

/// Like [`build_phase_constraints`], but only sub-messages in `support`
/// may carry rate. Sub-messages outside the support have empty message
/// alphabets, so their demands are vacuous and do not shape the phase
/// patterns.
pub fn build_phase_constraints_for(
    expanded: &ExpandedProblem,
    phases: &[PhaseProblem],
    provider: &dyn OracleProvider,
    support: &[bool],
) -> Result<Vec<PhaseConstraint>> {
    let channel = &expanded.base.channel;
    let ell = expanded.base.node_count();
    let relevant: Vec<Vec<usize>> = (0..ell).map(|j| channel.relevant_inputs(j)).collect();

    let mut out = Vec::with_capacity(phases.len());
    for phase in phases {
        // Active sub-messages and their effective demanders. Demands at
        // nodes already holding the sub-message are vacuously satisfied.
        let mut active: Vec<usize> = Vec::new();
        let mut demanders: Vec<Vec<usize>> = Vec::new();
        for (idx, s_row) in phase.s.iter().enumerate() {
            if !support[idx] {
                continue;
            }
            let dems: Vec<usize> = (0..ell).filter(|&j| s_row[j] && !phase.h[idx][j]).collect();
            if !dems.is_empty() {
                active.push(idx);
                demanders.push(dems);
            }
        }
        if active.is_empty() {
            out.push(PhaseConstraint {
                phase: phase.phase,
                duration: phase.duration,
                components: Vec::new(),
            });
            continue;
        }

        // Group sub-messages that share a demander or whose demanders see a
        // common transmitter.
        let mut sets = DisjointSets::new(active.len());
        for a in 0..active.len() {
            for b in a + 1..active.len() {
                let shares_node = demanders[a].iter().any(|j| demanders[b].contains(j));
                let shares_input = demanders[a].iter().any(|&ja| {
                    demanders[b]
                        .iter()
                        .any(|&jb| relevant[ja].iter().any(|t| relevant[jb].contains(t)))
                });
                if shares_node || shares_input {
                    sets.union(a, b);
                }
            }
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for slot in 0..active.len() {
            let root = sets.find(slot);
            groups.entry(root).or_default().push(slot);
        }

        let mut components = Vec::new();
        for slots in groups.values() {
            let subs: Vec<usize> = slots.iter().map(|&s| active[s]).collect();
            let dems: Vec<Vec<usize>> = slots.iter().map(|&s| demanders[s].clone()).collect();
            let mut input_nodes: Vec<usize> = Vec::new();
            for d in dems.iter().flatten() {
                for &t in &relevant[*d] {
                    if !input_nodes.contains(&t) {
                        input_nodes.push(t);
                    }
                }
            }
            input_nodes.sort_unstable();

            // Soundness guards: component encoders must know what they
            // transmit, and receivers must not be encoders.
            for &t in &input_nodes {
                for &sub in &subs {
                    if !phase.h[sub][t] {
                        return Err(Error::UnsupportedPhase {
                            phase: phase.phase,
                            detail: format!(
                                "transmitting node v{} does not hold sub-message {}",
                                t + 1,
                                expanded.submessages[sub].id()
                            ),
                        });
                    }
                }
            }
            if let Some(d) = dems.iter().flatten().find(|d| input_nodes.contains(d)) {
                return Err(Error::UnsupportedPhase {
                    phase: phase.phase,
                    detail: format!("demanding node v{} transmits on the same component", d + 1),
                });
            }

            let view = ComponentView {
                phase: phase.phase,
                duration: phase.duration,
                expanded,
                subs,
                demanders: dems,
                input_nodes,
            };
            match provider.provide(&view) {
                Some(Ok((ordered, oracle))) => components.push(Component {
                    subs: ordered,
                    oracle,
                }),
                Some(Err(e)) => return Err(e),
                None => {
                    return Err(Error::UnsupportedPhase {
                        phase: phase.phase,
                        detail: view.pattern_description(),
                    });
                }
            }
        }
        out.push(PhaseConstraint {
            phase: phase.phase,
            duration: phase.duration,
            components,
        });
    }
    Ok(out)
}

/// A schedule that delivers a sub-message to a node that neither holds nor
/// demands the original message.
pub fn is_overhearing(expanded: &ExpandedProblem, sub: usize) -> bool {
    let s = &expanded.submessages[sub];
    let lambda = expanded.phase_count();
    s.schedule.iter().enumerate().any(|(j, &a)| {
        a <= lambda && !expanded.base.demanded(s.message, j) && !expanded.base.holds(s.message, j)
    })
}

/// Phase constraints together with the sub-messages excluded from the
/// search.
pub struct SupportedConstraints {
    pub constraints: Vec<PhaseConstraint>,
    /// Overhearing schedules dropped because their demand patterns match no
    /// oracle; they are forced to rate zero.
    pub dropped_overhearing: Vec<usize>,
}

/// Builds constraints over the largest supportable schedule set.
///
/// Overhearing schedules participate only when an oracle supports the
/// resulting demand patterns; if the full set is unsupported, the search
/// retries without them. A failure on the overhearing-free set is
/// reported, never silently bounded by zero.
pub fn supported_constraints(
    expanded: &ExpandedProblem,
    phases: &[PhaseProblem],
    provider: &dyn OracleProvider,
) -> Result<SupportedConstraints> {
    let n = expanded.submessage_count();
    let full = vec![true; n];
    match build_phase_constraints_for(expanded, phases, provider, &full) {
        Ok(constraints) => Ok(SupportedConstraints {
            constraints,
            dropped_overhearing: Vec::new(),
        }),
        Err(Error::UnsupportedPhase { .. }) => {
            let support: Vec<bool> = (0..n).map(|s| !is_overhearing(expanded, s)).collect();
            if support.iter().all(|&s| s) {
                // Nothing to drop; the base structure itself is unsupported.
                return build_phase_constraints_for(expanded, phases, provider, &support)
                    .map(|constraints| SupportedConstraints {
                        constraints,
                        dropped_overhearing: Vec::new(),
                    });
            }
            let constraints = build_phase_constraints_for(expanded, phases, provider, &support)?;
            Ok(SupportedConstraints {
                constraints,
                dropped_overhearing: (0..n).filter(|&s| !support[s]).collect(),
            })
        }
        Err(e) => Err(e),
    }
}

/// Membership result for one component at a scaled rate point.
#[derive(Debug, Clone, Serialize)]
pub struct ComponentCheck {
    pub subs: Vec<String>,
    #[serde(skip)]
    pub sub_indices: Vec<usize>,
    pub scaled_rates: Vec<f64>,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<OracleWitness>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseCheck {
    pub phase: usize,
    pub duration: f64,
    pub components: Vec<ComponentCheck>,
}

/// Outcome of checking a sub-rate allocation against all phases.
#[derive(Debug, Clone, Serialize)]
pub struct AllocationCheck {
    pub achievable: bool,
    pub phases: Vec<PhaseCheck>,
}

/// Checks whether an allocation passes every phase's oracle.
///
/// The phase patterns are induced by the allocation's positive-rate
/// sub-messages; an unsupported pattern is an error naming the offending
/// phase. Returns the achieving distributions as witnesses.
pub fn check_allocation(
    expanded: &ExpandedProblem,
    phases: &[PhaseProblem],
    provider: &dyn OracleProvider,
    rates: &SubRateVector,
    tol: f64,
) -> Result<AllocationCheck> {
    if rates.0.len() != expanded.submessage_count() {
        return Err(Error::IndexMismatch(format!(
            "allocation has {} entries, expected {}",
            rates.0.len(),
            expanded.submessage_count()
        )));
    }
    let support: Vec<bool> = rates.0.iter().map(|&r| r > 0.0).collect();
    let constraints = build_phase_constraints_for(expanded, phases, provider, &support)?;
    check_against_constraints(expanded, &constraints, rates, tol)
}

/// Checks an allocation against already-built phase constraints.
pub fn check_against_constraints(
    expanded: &ExpandedProblem,
    constraints: &[PhaseConstraint],
    rates: &SubRateVector,
    tol: f64,
) -> Result<AllocationCheck> {
    if rates.0.len() != expanded.submessage_count() {
        return Err(Error::IndexMismatch(format!(
            "allocation has {} entries, expected {}",
            rates.0.len(),
            expanded.submessage_count()
        )));
    }
    let mut achievable = true;
    let mut phases = Vec::with_capacity(constraints.len());
    for pc in constraints {
        let mut comps = Vec::with_capacity(pc.components.len());
        for comp in &pc.components {
            let scaled: Vec<f64> = comp.subs.iter().map(|&s| rates.0[s] / pc.duration).collect();
            let ok = comp.oracle.contains(&scaled, tol);
            let witness = if ok { comp.oracle.witness(&scaled) } else { None };
            achievable &= ok;
            comps.push(ComponentCheck {
                subs: comp
                    .subs
                    .iter()
                    .map(|&s| expanded.submessages[s].id())
                    .collect(),
                sub_indices: comp.subs.clone(),
                scaled_rates: scaled,
                ok,
                witness,
            });
        }
        phases.push(PhaseCheck {
            phase: pc.phase,
            duration: pc.duration,
            components: comps,
        });
    }
    Ok(AllocationCheck { achievable, phases })
}

/// Re-verifies every witness in a check against fresh mutual-information
/// evaluations.
pub fn verify_allocation_witnesses(
    constraints: &[PhaseConstraint],
    check: &AllocationCheck,
    tol: f64,
) -> Result<()> {
    for (pc, phase_check) in constraints.iter().zip(&check.phases) {
        for (comp, comp_check) in pc.components.iter().zip(&phase_check.components) {
            if let Some(w) = &comp_check.witness {
                comp.oracle.verify_witness(w, &comp_check.scaled_rates, tol)?;
            }
        }
    }
    Ok(())
}

/// Options for the weighted-rate search.
#[derive(Debug, Clone, Default)]
pub struct MaxRateOptions {
    /// Sub-message indices pinned to rate 0.
    pub forced_zero: Vec<usize>,
    /// Per-axis resolution of the membership-only fallback search.
    pub fallback_resolution: f64,
}

/// A certified achievable rate point maximizing a weighted objective.
#[derive(Debug, Clone, Serialize)]
pub struct WeightedRatePoint {
    pub weights: Vec<f64>,
    pub value: f64,
    pub rates: Vec<f64>,
    pub allocation: Vec<f64>,
    pub check: AllocationCheck,
}

fn subs_in_components(constraints: &[PhaseConstraint], n: usize) -> Vec<bool> {
    let mut active = vec![false; n];
    for pc in constraints {
        for comp in &pc.components {
            for &s in &comp.subs {
                active[s] = true;
            }
        }
    }
    active
}

/// Maximizes `Σ_i weights_i · R_i` over allocations passing every phase
/// check. Solves exactly by LP when all oracles expose facet lists, and
/// falls back to a membership-driven refinement search otherwise. The
/// result is achievable by construction — never an overestimate.
pub fn max_weighted_rate(
    expanded: &ExpandedProblem,
    constraints: &[PhaseConstraint],
    weights: &[f64],
    options: &MaxRateOptions,
) -> Result<WeightedRatePoint> {
    let k = expanded.base.message_count;
    if weights.len() != k {
        return Err(Error::IndexMismatch(format!(
            "{} weights for {} messages",
            weights.len(),
            k
        )));
    }
    if weights.iter().any(|&w| w < 0.0) || weights.iter().all(|&w| w == 0.0) {
        return Err(Error::Validation(
            "weights must be nonnegative and not all zero".into(),
        ));
    }
    let n = expanded.submessage_count();

    // Sub-messages outside every component are unconstrained; pinning them
    // to zero keeps the program bounded. Only fully-pre-held messages
    // produce such sub-messages, and those need no communication.
    let in_component = subs_in_components(constraints, n);
    let mut forced = vec![false; n];
    for (s, &inc) in in_component.iter().enumerate() {
        if !inc {
            forced[s] = true;
        }
    }
    for &s in &options.forced_zero {
        if s >= n {
            return Err(Error::IndexMismatch(format!(
                "forced-zero index {} out of range",
                s
            )));
        }
        forced[s] = true;
    }

    let objective: Vec<f64> = expanded
        .submessages
        .iter()
        .map(|sub| weights[sub.message])
        .collect();

    let all_polyhedral = constraints
        .iter()
        .all(|pc| pc.components.iter().all(|c| c.oracle.halfspaces().is_some()));

    let allocation = if all_polyhedral {
        let mut a_rows: Vec<Vec<f64>> = Vec::new();
        let mut b: Vec<f64> = Vec::new();
        for pc in constraints {
            for comp in &pc.components {
                for (coeffs, rhs) in comp.oracle.halfspaces().expect("checked polyhedral") {
                    let mut row = vec![0.0; n];
                    for (slot, &s) in comp.subs.iter().enumerate() {
                        row[s] = coeffs[slot] / pc.duration;
                    }
                    a_rows.push(row);
                    b.push(rhs);
                }
            }
        }
        for (s, &f) in forced.iter().enumerate() {
            if f {
                let mut row = vec![0.0; n];
                row[s] = 1.0;
                a_rows.push(row);
                b.push(0.0);
            }
        }
        match linprog::maximize(&objective, &a_rows, &b)? {
            LpOutcome::Optimal { x, .. } => x.into_iter().map(|v| v.max(0.0)).collect(),
            LpOutcome::Unbounded => {
                return Err(Error::Internal(
                    "allocation program unbounded; a sub-message escaped every phase constraint"
                        .into(),
                ))
            }
        }
    } else {
        fallback_search(expanded, constraints, &objective, &forced, options)?
    };

    let allocation = SubRateVector(allocation);
    let check = check_against_constraints(expanded, constraints, &allocation, 1e-7)?;
    if !check.achievable {
        return Err(Error::Internal(
            "optimizer produced an allocation that fails its own phase checks".into(),
        ));
    }
    let rates = expanded.rates_to_original(&allocation)?;
    let value = weights.iter().zip(&rates.0).map(|(w, r)| w * r).sum();
    Ok(WeightedRatePoint {
        weights: weights.to_vec(),
        value,
        rates: rates.0,
        allocation: allocation.0,
        check,
    })
}

/// Coarse-to-fine grid search over the free sub-rates using membership
/// queries only.
fn fallback_search(
    expanded: &ExpandedProblem,
    constraints: &[PhaseConstraint],
    objective: &[f64],
    forced: &[bool],
    options: &MaxRateOptions,
) -> Result<Vec<f64>> {
    let n = expanded.submessage_count();
    let free: Vec<usize> = (0..n).filter(|&s| !forced[s]).collect();
    if free.len() > 4 {
        return Err(Error::Validation(format!(
            "membership-only search supports at most 4 free sub-messages, got {}",
            free.len()
        )));
    }
    let resolution = if options.fallback_resolution > 0.0 {
        options.fallback_resolution
    } else {
        1e-3
    };

    // Per-axis upper bounds from each oracle's own maximum.
    let mut upper = vec![f64::INFINITY; n];
    for pc in constraints {
        for comp in &pc.components {
            for (slot, &s) in comp.subs.iter().enumerate() {
                let mut unit = vec![0.0; comp.subs.len()];
                unit[slot] = 1.0;
                let (coord_max, _) = comp.oracle.maximize(&unit);
                upper[s] = upper[s].min(pc.duration * coord_max);
            }
        }
    }

    let feasible = |x: &[f64]| -> bool {
        for pc in constraints {
            for comp in &pc.components {
                let scaled: Vec<f64> = comp.subs.iter().map(|&s| x[s] / pc.duration).collect();
                if !comp.oracle.contains(&scaled, 1e-9) {
                    return false;
                }
            }
        }
        true
    };

    let mut center: Vec<f64> = vec![0.0; n];
    for &s in &free {
        center[s] = upper[s] / 2.0;
    }
    let mut width: Vec<f64> = free.iter().map(|&s| upper[s]).collect();
    let mut best = vec![0.0; n];
    let mut best_value = 0.0;
    const POINTS: usize = 7;
    loop {
        if free.is_empty() {
            break;
        }
        let mut idx = vec![0usize; free.len()];
        'grid: loop {
            let mut x = vec![0.0; n];
            for (slot, &s) in free.iter().enumerate() {
                let lo = (center[s] - width[slot] / 2.0).max(0.0);
                let hi = (center[s] + width[slot] / 2.0).min(upper[s]);
                x[s] = lo + (hi - lo) * idx[slot] as f64 / (POINTS - 1) as f64;
            }
            if feasible(&x) {
                let v: f64 = objective.iter().zip(&x).map(|(o, xi)| o * xi).sum();
                if v > best_value {
                    best_value = v;
                    best = x;
                }
            }
            let mut pos = free.len();
            loop {
                if pos == 0 {
                    break 'grid;
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < POINTS {
                    break;
                }
                idx[pos] = 0;
            }
        }
        center = best.clone();
        let max_width = width.iter().cloned().fold(0.0f64, f64::max);
        if max_width <= resolution {
            break;
        }
        for w in width.iter_mut() {
            *w /= 2.0;
        }
    }
    Ok(best)
}

/// A frontier point with its provenance: the sub-rate allocation and the
/// per-phase witnesses.
#[derive(Debug, Clone, Serialize)]
pub struct FrontierSample {
    pub weights: Vec<f64>,
    pub value: f64,
    pub rates: Vec<f64>,
    pub allocation: Vec<f64>,
    pub check: AllocationCheck,
}

/// The computed inner bound: a downward-closed region represented by swept
/// frontier samples.
#[derive(Debug, Clone, Serialize)]
pub struct InnerBoundRegion {
    pub message_count: usize,
    pub samples: Vec<FrontierSample>,
}

impl InnerBoundRegion {
    /// Membership in the downward-closed convex hull of the samples.
    pub fn contains(&self, point: &[f64], tol: f64) -> Result<bool> {
        let vertices: Vec<Vec<f64>> = self.samples.iter().map(|s| s.rates.clone()).collect();
        linprog::in_downward_hull(&vertices, point, tol)
    }

    pub fn max_sum_rate(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.rates.iter().sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// CSV export with provenance columns.
    pub fn to_csv(&self, expanded: &ExpandedProblem) -> String {
        let mut header: Vec<String> = (0..self.message_count)
            .map(|i| format!("R_{}", i + 1))
            .collect();
        header.push("objective_value".into());
        for w in 0..self.message_count {
            header.push(format!("weight_{}", w + 1));
        }
        for sub in &expanded.submessages {
            header.push(format!("alloc_{}", sub.id()));
        }
        header.push("witnesses".into());
        let mut out = header.join(",");
        out.push('\n');
        for s in &self.samples {
            let mut row: Vec<String> = s.rates.iter().map(|&r| crate::fmt_sig9(r)).collect();
            row.push(crate::fmt_sig9(s.value));
            row.extend(s.weights.iter().map(|&w| crate::fmt_sig9(w)));
            row.extend(s.allocation.iter().map(|&a| crate::fmt_sig9(a)));
            let witness_json = serde_json::to_string(&s.check)
                .unwrap_or_else(|_| "{}".into())
                .replace('"', "\"\"");
            row.push(format!("\"{}\"", witness_json));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Removes samples that already lie in the downward-closed hull of the
/// others; idempotent.
pub fn convexify(region: InnerBoundRegion) -> Result<InnerBoundRegion> {
    let mut samples = region.samples;
    samples.sort_by(|a, b| a.rates.partial_cmp(&b.rates).unwrap());
    samples.dedup_by(|a, b| {
        a.rates
            .iter()
            .zip(&b.rates)
            .all(|(x, y)| (x - y).abs() <= 1e-12)
    });
    let mut kept: Vec<FrontierSample> = Vec::new();
    for i in 0..samples.len() {
        let others: Vec<Vec<f64>> = samples
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, s)| s.rates.clone())
            .collect();
        if samples[i].rates.iter().all(|&r| r <= 1e-12)
            || linprog::in_downward_hull(&others, &samples[i].rates, 1e-9)?
        {
            continue;
        }
        kept.push(samples[i].clone());
    }
    if kept.is_empty() {
        if let Some(first) = samples.into_iter().next() {
            // Everything collapsed to the origin; keep one representative.
            kept.push(first);
        }
    }
    Ok(InnerBoundRegion {
        message_count: region.message_count,
        samples: kept,
    })
}

/// Weight directions for a frontier sweep, axis extremes included.
pub fn sweep_weights(k: usize, objective_count: usize) -> Result<Vec<Vec<f64>>> {
    match k {
        1 => Ok(vec![vec![1.0]]),
        2 => {
            let n = objective_count.max(2);
            Ok((0..n)
                .map(|i| {
                    let theta = std::f64::consts::FRAC_PI_2 * i as f64 / (n - 1) as f64;
                    vec![theta.cos(), theta.sin()]
                })
                .collect())
        }
        3 => {
            let m = (objective_count.max(4) as f64).sqrt().ceil() as usize;
            let mut out = Vec::new();
            for i in 0..m {
                let phi = std::f64::consts::FRAC_PI_2 * i as f64 / (m - 1) as f64;
                for j in 0..m {
                    let theta = std::f64::consts::FRAC_PI_2 * j as f64 / (m - 1) as f64;
                    let w = vec![phi.sin() * theta.cos(), phi.sin() * theta.sin(), phi.cos()];
                    if w.iter().any(|&x| x > 1e-12) {
                        out.push(w);
                    }
                }
            }
            Ok(out)
        }
        _ => Err(Error::Validation(format!(
            "frontier sweeps support up to 3 messages, got {}",
            k
        ))),
    }
}

/// Sweeps weight vectors, solves each weighted problem, and convexifies
/// the resulting frontier. `workers` shards the sweep; aggregation is
/// ordered by weight index, so the result is worker-count independent.
pub fn inner_bound_frontier(
    expanded: &ExpandedProblem,
    constraints: &[PhaseConstraint],
    objective_count: usize,
    workers: usize,
    options: &MaxRateOptions,
) -> Result<InnerBoundRegion> {
    let k = expanded.base.message_count;
    let weights = sweep_weights(k, objective_count)?;
    let workers = workers.max(1).min(weights.len().max(1));

    let mut samples: Vec<Option<Result<FrontierSample>>> = Vec::new();
    samples.resize_with(weights.len(), || None);
    let chunk = weights.len().div_ceil(workers);
    std::thread::scope(|scope| {
        let mut slots = samples.as_mut_slice();
        let mut offset = 0;
        for _ in 0..workers {
            let take = chunk.min(slots.len());
            if take == 0 {
                break;
            }
            let (head, tail) = slots.split_at_mut(take);
            slots = tail;
            let weights = &weights;
            let start = offset;
            offset += take;
            scope.spawn(move || {
                for (slot, w) in head.iter_mut().zip(&weights[start..start + take]) {
                    *slot =
                        Some(
                            max_weighted_rate(expanded, constraints, w, options).map(|p| {
                                FrontierSample {
                                    weights: p.weights,
                                    value: p.value,
                                    rates: p.rates,
                                    allocation: p.allocation,
                                    check: p.check,
                                }
                            }),
                        );
                }
            });
        }
    });
    let mut collected = Vec::with_capacity(weights.len());
    for slot in samples {
        collected.push(slot.expect("all sweep slots filled")?);
    }
    convexify(InnerBoundRegion {
        message_count: k,
        samples: collected,
    })
}
