//! Single-shot capacity and rate-region computations for the channel
//! classes the inner bound composes: point-to-point capacity via
//! Blahut–Arimoto, common-message multicast capacity, the two-receiver
//! degraded-broadcast superposition region, and the two-phase static
//! broadcasting optimum.
//!
//! Everything is in bits (base-2 logs). Region computations are grid
//! searches over explicit input distributions, so every reported point
//! carries the distribution that achieves it and the regions are inner
//! approximations by construction.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default evaluation cap for region grid searches.
pub const DEFAULT_GRID_CAP: u128 = 1 << 27;

/// Default Blahut–Arimoto tolerance.
pub const DEFAULT_BA_TOL: f64 = 1e-9;

/// Default Blahut–Arimoto iteration cap.
pub const DEFAULT_BA_MAX_ITER: usize = 100_000;

#[inline]
fn xlog2x(x: f64) -> f64 {
    if x > 0.0 {
        x * x.log2()
    } else {
        0.0
    }
}

/// Shannon entropy in bits; `0·log 0 = 0`.
pub fn entropy_bits(p: &[f64]) -> f64 {
    -p.iter().map(|&x| xlog2x(x)).sum::<f64>()
}

/// A probability vector over an input alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDistribution(Vec<f64>);

impl InputDistribution {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() || p.iter().any(|&x| x < 0.0) {
            return Err(Error::Validation("input distribution must be nonnegative".into()));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "input distribution sums to {sum}, expected 1"
            )));
        }
        Ok(Self(p))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn check_channel(w: &[Vec<f64>]) -> Result<(usize, usize)> {
    let nx = w.len();
    if nx == 0 {
        return Err(Error::Dimension("channel has no inputs".into()));
    }
    let ny = w[0].len();
    if ny == 0 || w.iter().any(|row| row.len() != ny) {
        return Err(Error::Dimension("channel rows must share one output alphabet".into()));
    }
    Ok((nx, ny))
}

/// Mutual information `I(X;Y)` in bits for input distribution `p_x` over a
/// single-receiver channel table.
pub fn mutual_information(p_x: &[f64], w: &[Vec<f64>]) -> Result<f64> {
    let (nx, ny) = check_channel(w)?;
    if p_x.len() != nx {
        return Err(Error::Dimension(format!(
            "input distribution has {} entries, channel has {} inputs",
            p_x.len(),
            nx
        )));
    }
    let mut q = vec![0.0; ny];
    for (px, row) in p_x.iter().zip(w) {
        for (qy, &wy) in q.iter_mut().zip(row) {
            *qy += px * wy;
        }
    }
    let mut info = 0.0;
    for (px, row) in p_x.iter().zip(w) {
        if *px <= 0.0 {
            continue;
        }
        let mut d = 0.0;
        for (&wy, &qy) in row.iter().zip(&q) {
            if wy > 0.0 {
                d += wy * (wy / qy).log2();
            }
        }
        info += px * d;
    }
    Ok(info.max(0.0))
}

/// Result of a capacity computation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapacityResult {
    /// Certified achievable value in bits per channel use.
    pub value: f64,
    pub argmax: InputDistribution,
    pub iterations: usize,
    /// Residual bound on `sup − value`; at most the requested tolerance
    /// when `converged` is set.
    pub gap: f64,
    pub converged: bool,
}

/// Blahut–Arimoto point-to-point capacity with the standard max–min
/// bracket as the stopping certificate.
pub fn blahut_arimoto_capacity(w: &[Vec<f64>], tol: f64, max_iter: usize) -> Result<CapacityResult> {
    let (nx, _ny) = check_channel(w)?;
    if !(tol > 0.0) {
        return Err(Error::Validation("tolerance must be positive".into()));
    }
    let mut p = vec![1.0 / nx as f64; nx];
    let mut d = vec![0.0; nx];
    let mut best = CapacityResult {
        value: 0.0,
        argmax: InputDistribution(p.clone()),
        iterations: 0,
        gap: f64::INFINITY,
        converged: false,
    };
    for iter in 1..=max_iter {
        let ny = w[0].len();
        let mut q = vec![0.0; ny];
        for (px, row) in p.iter().zip(w) {
            for (qy, &wy) in q.iter_mut().zip(row) {
                *qy += px * wy;
            }
        }
        let mut upper = f64::NEG_INFINITY;
        let mut lower = 0.0;
        for x in 0..nx {
            let mut dx = 0.0;
            for (&wy, &qy) in w[x].iter().zip(&q) {
                if wy > 0.0 && qy > 0.0 {
                    dx += wy * (wy / qy).log2();
                }
            }
            d[x] = dx;
            if dx > upper {
                upper = dx;
            }
            lower += p[x] * dx;
        }
        let gap = (upper - lower).max(0.0);
        if gap < best.gap {
            best = CapacityResult {
                value: lower.max(0.0),
                argmax: InputDistribution(p.clone()),
                iterations: iter,
                gap,
                converged: gap <= tol,
            };
        }
        if gap <= tol {
            return Ok(best);
        }
        // p'(x) ∝ p(x)·2^{D_x}
        let mut norm = 0.0;
        for x in 0..nx {
            p[x] *= (d[x] - lower).exp2(); // shift for numerical range
            norm += p[x];
        }
        for px in p.iter_mut() {
            *px /= norm;
        }
    }
    Ok(best)
}

/// Maximizes a concave function of a binary input distribution by golden
/// section search over `P(x=1)`.
fn maximize_binary_concave(f: &dyn Fn(f64) -> f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..120 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let p = 0.5 * (a + b);
    (p, f(p))
}

/// All probability vectors of length `dim` with coordinates on a grid of
/// `steps` points per simplex coordinate (denominator `steps − 1`).
pub fn simplex_grid(dim: usize, steps: usize) -> Vec<Vec<f64>> {
    assert!(dim >= 1 && steps >= 2);
    let denom = steps - 1;
    let mut out = Vec::new();
    let mut current = vec![0usize; dim];
    fn rec(dim: usize, left: usize, pos: usize, current: &mut Vec<usize>, denom: usize, out: &mut Vec<Vec<f64>>) {
        if pos == dim - 1 {
            current[pos] = left;
            out.push(current.iter().map(|&c| c as f64 / denom as f64).collect());
            return;
        }
        for c in 0..=left {
            current[pos] = c;
            rec(dim, left - c, pos + 1, current, denom, out);
        }
    }
    rec(dim, denom, 0, &mut current, denom, &mut out);
    out
}

fn project_to_simplex(v: &mut [f64]) {
    // Euclidean projection (Held et al.): sort, find threshold, clamp.
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut css = 0.0;
    let mut rho = 0;
    for (i, &ui) in u.iter().enumerate() {
        css += ui;
        if ui + (1.0 - css) / (i as f64 + 1.0) > 0.0 {
            rho = i;
        }
    }
    let theta = (u[..=rho].iter().sum::<f64>() - 1.0) / (rho as f64 + 1.0);
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// Common-message capacity `max_p min_j I(X;Y_j)` over receivers sharing
/// one input alphabet.
pub fn common_message_capacity(channels: &[Vec<Vec<f64>>]) -> Result<CapacityResult> {
    if channels.is_empty() {
        return Err(Error::Dimension("need at least one receiver".into()));
    }
    let (nx, _) = check_channel(&channels[0])?;
    for ch in channels.iter().skip(1) {
        let (nxi, _) = check_channel(ch)?;
        if nxi != nx {
            return Err(Error::Dimension("receivers must share the input alphabet".into()));
        }
    }
    if channels.len() == 1 {
        return blahut_arimoto_capacity(&channels[0], DEFAULT_BA_TOL, DEFAULT_BA_MAX_ITER);
    }
    // The common rate is bounded by each receiver's own capacity.
    let mut cap_bound = f64::INFINITY;
    for ch in channels {
        let c = blahut_arimoto_capacity(ch, DEFAULT_BA_TOL, DEFAULT_BA_MAX_ITER)?;
        cap_bound = cap_bound.min(c.value + c.gap);
    }
    let eval = |p: &[f64]| -> f64 {
        channels
            .iter()
            .map(|ch| mutual_information(p, ch).unwrap_or(0.0))
            .fold(f64::INFINITY, f64::min)
    };

    if nx == 2 {
        let (p1, value) = maximize_binary_concave(&|t| eval(&[1.0 - t, t]));
        let argmax = InputDistribution(vec![1.0 - p1, p1]);
        let gap = (cap_bound - value).max(0.0);
        return Ok(CapacityResult {
            value,
            argmax,
            iterations: 120,
            gap,
            converged: true,
        });
    }

    // General alphabets: coarse simplex grid, then projected supergradient
    // ascent from the best grid point.
    let mut best_p = vec![1.0 / nx as f64; nx];
    let mut best_v = eval(&best_p);
    for p in simplex_grid(nx, 21) {
        let v = eval(&p);
        if v > best_v {
            best_v = v;
            best_p = p;
        }
    }
    let mut p = best_p.clone();
    let iters = 2000;
    for t in 1..=iters {
        let v = eval(&p);
        if v > best_v {
            best_v = v;
            best_p = p.clone();
        }
        // Supergradient of the active minimum (constant offset dropped).
        let mut active = 0;
        let mut active_v = f64::INFINITY;
        for (j, ch) in channels.iter().enumerate() {
            let vj = mutual_information(&p, ch)?;
            if vj < active_v {
                active_v = vj;
                active = j;
            }
        }
        let ch = &channels[active];
        let ny = ch[0].len();
        let mut q = vec![0.0; ny];
        for (px, row) in p.iter().zip(ch) {
            for (qy, &wy) in q.iter_mut().zip(row) {
                *qy += px * wy;
            }
        }
        let step = 0.25 / (t as f64).sqrt();
        for x in 0..nx {
            let mut dx = 0.0;
            for (&wy, &qy) in ch[x].iter().zip(&q) {
                if wy > 0.0 && qy > 0.0 {
                    dx += wy * (wy / qy).log2();
                }
            }
            p[x] += step * dx;
        }
        project_to_simplex(&mut p);
    }
    let gap = (cap_bound - best_v).max(0.0);
    Ok(CapacityResult {
        value: best_v,
        argmax: InputDistribution(best_p),
        iterations: iters,
        gap,
        converged: gap <= 1e-6,
    })
}

/// The auxiliary-input distribution achieving a superposition rate pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperpositionWitness {
    pub p_u: Vec<f64>,
    pub p_x_given_u: Vec<Vec<f64>>,
}

/// Recomputes `(r_private, r_common) = (I(X;Y1|U), I(U;Y2))` for an
/// explicit superposition distribution.
pub fn superposition_rates(
    witness: &SuperpositionWitness,
    w_strong: &[Vec<f64>],
    w_weak: &[Vec<f64>],
) -> Result<(f64, f64)> {
    let nu = witness.p_u.len();
    if witness.p_x_given_u.len() != nu {
        return Err(Error::Dimension("need one conditional per auxiliary symbol".into()));
    }
    let mut r_private = 0.0;
    for (pu, cond) in witness.p_u.iter().zip(&witness.p_x_given_u) {
        r_private += pu * mutual_information(cond, w_strong)?;
    }
    // Channel from U to Y2: V(y|u) = Σ_x p(x|u) W2(y|x).
    let ny2 = w_weak[0].len();
    let mut v = vec![vec![0.0; ny2]; nu];
    for (u, cond) in witness.p_x_given_u.iter().enumerate() {
        for (x, &px) in cond.iter().enumerate() {
            for (y, &wy) in w_weak[x].iter().enumerate() {
                v[u][y] += px * wy;
            }
        }
    }
    let r_common = mutual_information(&witness.p_u, &v)?;
    Ok((r_private, r_common))
}

/// A Pareto frontier point of a two-dimensional rate region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint2D {
    pub private_rate: f64,
    pub common_rate: f64,
    pub witness: SuperpositionWitness,
}

/// A downward-closed convex 2-D rate region represented by the vertices of
/// its Pareto frontier, sorted by `private_rate` ascending with
/// `common_rate` strictly descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRegion2D {
    pub frontier: Vec<FrontierPoint2D>,
}

impl RateRegion2D {
    pub fn max_private(&self) -> f64 {
        self.frontier.last().map_or(0.0, |p| p.private_rate)
    }

    pub fn max_common(&self) -> f64 {
        self.frontier.first().map_or(0.0, |p| p.common_rate)
    }

    /// Frontier height at `private_rate = x` (downward closure outside the
    /// vertex span).
    pub fn envelope(&self, x: f64) -> f64 {
        if self.frontier.is_empty() || x > self.max_private() {
            return f64::NEG_INFINITY;
        }
        let first = &self.frontier[0];
        if x <= first.private_rate {
            return first.common_rate;
        }
        for pair in self.frontier.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if x <= b.private_rate {
                let t = (x - a.private_rate) / (b.private_rate - a.private_rate);
                return a.common_rate + t * (b.common_rate - a.common_rate);
            }
        }
        self.frontier.last().unwrap().common_rate
    }

    pub fn contains(&self, private: f64, common: f64, tol: f64) -> bool {
        if private < -tol || common < -tol {
            return false;
        }
        if private > self.max_private() + tol {
            return false;
        }
        common <= self.envelope(private.min(self.max_private())) + tol
    }

    /// Maximizes `w_p·private + w_c·common` over the region.
    pub fn maximize(&self, w_private: f64, w_common: f64) -> (f64, Vec<f64>) {
        let mut best = (0.0, vec![0.0, 0.0]);
        for p in &self.frontier {
            let v = w_private * p.private_rate + w_common * p.common_rate;
            if v > best.0 {
                best = (v, vec![p.private_rate, p.common_rate]);
            }
        }
        best
    }

    /// Facet inequalities `(a_private, a_common, rhs)` with
    /// `a·r ≤ rhs` describing the region (together with nonnegativity).
    pub fn halfspaces(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        if self.frontier.is_empty() {
            out.push((1.0, 0.0, 0.0));
            out.push((0.0, 1.0, 0.0));
            return out;
        }
        out.push((1.0, 0.0, self.max_private()));
        out.push((0.0, 1.0, self.max_common()));
        for pair in self.frontier.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let m = (b.common_rate - a.common_rate) / (b.private_rate - a.private_rate);
            // y ≤ y_a + m (x − x_a)  ⇔  −m·x + y ≤ y_a − m·x_a
            out.push((-m, 1.0, a.common_rate - m * a.private_rate));
        }
        out
    }

    /// A convex combination of frontier points dominating `(private,
    /// common)`, or `None` if the point is outside.
    pub fn dominating_combination(
        &self,
        private: f64,
        common: f64,
        tol: f64,
    ) -> Option<Vec<(f64, FrontierPoint2D)>> {
        if !self.contains(private, common, tol) {
            return None;
        }
        let first = &self.frontier[0];
        if private <= first.private_rate {
            return Some(vec![(1.0, first.clone())]);
        }
        for pair in self.frontier.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if private <= b.private_rate {
                let t = (private - a.private_rate) / (b.private_rate - a.private_rate);
                return Some(vec![(1.0 - t, a.clone()), (t, b.clone())]);
            }
        }
        Some(vec![(1.0, self.frontier.last().unwrap().clone())])
    }

    /// CSV export: rate coordinates plus achieving-distribution parameters.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("private_rate,common_rate,p_u,p_x_given_u\n");
        for p in &self.frontier {
            let pu: Vec<String> = p.witness.p_u.iter().map(|&v| crate::fmt_sig9(v)).collect();
            let px: Vec<String> = p
                .witness
                .p_x_given_u
                .iter()
                .map(|cond| {
                    cond.iter()
                        .map(|&v| crate::fmt_sig9(v))
                        .collect::<Vec<_>>()
                        .join(";")
                })
                .collect();
            out.push_str(&format!(
                "{},{},{},{}\n",
                crate::fmt_sig9(p.private_rate),
                crate::fmt_sig9(p.common_rate),
                pu.join(";"),
                px.join("|")
            ));
        }
        out
    }
}

struct ParetoBuckets {
    width: f64,
    slots: Vec<Option<(f64, f64, Vec<f64>, Vec<usize>)>>, // (r_p, r_c, p_u, cond ids)
}

impl ParetoBuckets {
    fn new(r_p_bound: f64, buckets: usize) -> Self {
        Self {
            width: (r_p_bound.max(1e-9)) / buckets as f64,
            slots: vec![None; buckets + 1],
        }
    }

    fn offer(&mut self, r_p: f64, r_c: f64, p_u: &[f64], conds: &[usize]) {
        let idx = ((r_p / self.width) as usize).min(self.slots.len() - 1);
        let better = match &self.slots[idx] {
            None => true,
            Some((bp, bc, _, _)) => r_c > *bc || (r_c == *bc && r_p > *bp),
        };
        if better {
            self.slots[idx] = Some((r_p, r_c, p_u.to_vec(), conds.to_vec()));
        }
    }
}

fn upper_concave_hull(mut pts: Vec<FrontierPoint2D>) -> Vec<FrontierPoint2D> {
    // Pareto prune: scan by private rate descending, keep strictly rising
    // common rates.
    pts.sort_by(|a, b| {
        b.private_rate
            .partial_cmp(&a.private_rate)
            .unwrap()
            .then(b.common_rate.partial_cmp(&a.common_rate).unwrap())
    });
    let mut pareto: Vec<FrontierPoint2D> = Vec::new();
    let mut best_c = f64::NEG_INFINITY;
    for p in pts {
        if p.common_rate > best_c + 1e-15 {
            best_c = p.common_rate;
            pareto.push(p);
        }
    }
    pareto.reverse(); // private ascending, common descending

    // Monotone-chain upper hull; collinear points are dropped.
    let cross = |o: &FrontierPoint2D, a: &FrontierPoint2D, b: &FrontierPoint2D| {
        (a.private_rate - o.private_rate) * (b.common_rate - o.common_rate)
            - (a.common_rate - o.common_rate) * (b.private_rate - o.private_rate)
    };
    let mut hull: Vec<FrontierPoint2D> = Vec::new();
    for p in pareto {
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], &p) >= -1e-12 {
            hull.pop();
        }
        hull.push(p);
    }
    hull
}

/// Superposition-coding region of a two-receiver degraded broadcast channel
/// with a private message to the stronger receiver and a common message,
/// computed by grid search over `(U, X)` distributions with `|U| =
/// u_cardinality`.
///
/// The result inner-approximates the true region and converges to it as
/// `grid_steps → ∞`.
pub fn degraded_bc_region(
    w_strong: &[Vec<f64>],
    w_weak: &[Vec<f64>],
    u_cardinality: usize,
    grid_steps: usize,
) -> Result<RateRegion2D> {
    let (nx, ny1) = check_channel(w_strong)?;
    let (nx2, _ny2) = check_channel(w_weak)?;
    if nx != nx2 {
        return Err(Error::Dimension("receivers must share the input alphabet".into()));
    }
    if u_cardinality == 0 || grid_steps < 2 {
        return Err(Error::Validation("need u_cardinality ≥ 1 and grid_steps ≥ 2".into()));
    }

    let conds = simplex_grid(nx, grid_steps);
    let pu_grid = simplex_grid(u_cardinality, grid_steps);
    // Conditional assignments are enumerated as multisets; permutations are
    // covered by the full p_u grid.
    let mut assignments: u128 = 1;
    for i in 0..u_cardinality as u128 {
        assignments = assignments * (conds.len() as u128 + i) / (i + 1);
    }
    let total = assignments * pu_grid.len() as u128;
    if total > DEFAULT_GRID_CAP {
        return Err(Error::GridCap {
            points: total,
            cap: DEFAULT_GRID_CAP,
        });
    }

    // Per-conditional precomputation.
    let ny2 = w_weak[0].len();
    let mut i1 = Vec::with_capacity(conds.len());
    let mut out2 = Vec::with_capacity(conds.len());
    let mut h2 = Vec::with_capacity(conds.len());
    for cond in &conds {
        i1.push(mutual_information(cond, w_strong)?);
        let mut o = vec![0.0; ny2];
        for (x, &px) in cond.iter().enumerate() {
            for (y, &wy) in w_weak[x].iter().enumerate() {
                o[y] += px * wy;
            }
        }
        h2.push(entropy_bits(&o));
        out2.push(o);
    }

    let mut buckets = ParetoBuckets::new((nx.min(ny1) as f64).log2(), 8192);
    let mut assign = vec![0usize; u_cardinality];
    let mut mix = vec![0.0; ny2];
    loop {
        for pu in &pu_grid {
            let mut r_p = 0.0;
            let mut h_cond = 0.0;
            mix.iter_mut().for_each(|m| *m = 0.0);
            for (u, &c) in assign.iter().enumerate() {
                let w = pu[u];
                if w == 0.0 {
                    continue;
                }
                r_p += w * i1[c];
                h_cond += w * h2[c];
                for (m, &o) in mix.iter_mut().zip(&out2[c]) {
                    *m += w * o;
                }
            }
            let r_c = (entropy_bits(&mix) - h_cond).max(0.0);
            buckets.offer(r_p, r_c, pu, &assign);
        }
        // Next nondecreasing assignment.
        let mut pos = u_cardinality;
        while pos > 0 {
            pos -= 1;
            if assign[pos] + 1 < conds.len() {
                let v = assign[pos] + 1;
                for a in assign[pos..].iter_mut() {
                    *a = v;
                }
                break;
            }
            if pos == 0 {
                let points: Vec<FrontierPoint2D> = buckets
                    .slots
                    .into_iter()
                    .flatten()
                    .map(|(r_p, r_c, p_u, cond_ids)| FrontierPoint2D {
                        private_rate: r_p,
                        common_rate: r_c,
                        witness: SuperpositionWitness {
                            p_x_given_u: cond_ids.iter().map(|&c| conds[c].clone()).collect(),
                            p_u,
                        },
                    })
                    .collect();
                return Ok(RateRegion2D {
                    frontier: upper_concave_hull(points),
                });
            }
        }
    }
}

/// Maximum single-message rate for two-receiver static broadcasting with
/// per-receiver decoding times `sigma1`, `sigma2`.
///
/// For `σ1 ≤ σ2` this is `max_p min(σ1·I(x;y1), σ1·I(x;y2) + (σ2−σ1)·C2)`,
/// with the symmetric expression otherwise.
pub fn static_broadcast_max_rate(
    w1: &[Vec<f64>],
    w2: &[Vec<f64>],
    sigma1: f64,
    sigma2: f64,
    grid_steps: usize,
) -> Result<f64> {
    if !(sigma1 > 0.0 && sigma2 > 0.0) {
        return Err(Error::Validation("decoding times must be positive".into()));
    }
    let (w_early, s_early, w_late, s_late) = if sigma1 <= sigma2 {
        (w1, sigma1, w2, sigma2)
    } else {
        (w2, sigma2, w1, sigma1)
    };
    let (nx, _) = check_channel(w_early)?;
    let (nx2, _) = check_channel(w_late)?;
    if nx != nx2 {
        return Err(Error::Dimension("receivers must share the input alphabet".into()));
    }
    let c_late = blahut_arimoto_capacity(w_late, DEFAULT_BA_TOL, DEFAULT_BA_MAX_ITER)?.value;
    let tail = (s_late - s_early) * c_late;
    let eval = |p: &[f64]| -> f64 {
        let ie = mutual_information(p, w_early).unwrap_or(0.0);
        let il = mutual_information(p, w_late).unwrap_or(0.0);
        (s_early * ie).min(s_early * il + tail)
    };
    if nx == 2 {
        let (_, v) = maximize_binary_concave(&|t| eval(&[1.0 - t, t]));
        return Ok(v);
    }
    let mut best = 0.0f64;
    for p in simplex_grid(nx, grid_steps) {
        best = best.max(eval(&p));
    }
    Ok(best)
}

/// Structural classification of a receiver's marginal channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ReceiverClass {
    /// Output is a relabeling of the input: `y = perm[x]`.
    Identity { perm: Vec<usize> },
    /// Input delivered as `perm[x]` with probability `1−eps`, erased
    /// otherwise.
    Erasure {
        eps: f64,
        perm: Vec<usize>,
        erasure_symbol: usize,
    },
    Other,
}

impl ReceiverClass {
    /// Erasure probability for erasure-like channels (identity = 0).
    pub fn erasure_probability(&self) -> Option<f64> {
        match self {
            ReceiverClass::Identity { .. } => Some(0.0),
            ReceiverClass::Erasure { eps, .. } => Some(*eps),
            ReceiverClass::Other => None,
        }
    }
}

const CLASSIFY_TOL: f64 = 1e-9;

/// Pattern-matches a marginal channel table against the identity /
/// erasure classes.
pub fn classify_receiver(w: &[Vec<f64>]) -> ReceiverClass {
    let Ok((nx, ny)) = check_channel(w) else {
        return ReceiverClass::Other;
    };
    if ny == nx {
        let mut perm = vec![usize::MAX; nx];
        for (x, row) in w.iter().enumerate() {
            let mut one_at = None;
            for (y, &p) in row.iter().enumerate() {
                if (p - 1.0).abs() <= CLASSIFY_TOL {
                    one_at = Some(y);
                } else if p.abs() > CLASSIFY_TOL {
                    return ReceiverClass::Other;
                }
            }
            match one_at {
                Some(y) if !perm.contains(&y) => perm[x] = y,
                _ => return ReceiverClass::Other,
            }
        }
        return ReceiverClass::Identity { perm };
    }
    if ny == nx + 1 {
        // Find the erasure column: identical probability in every row.
        'col: for e in 0..ny {
            let eps = w[0][e];
            if !(0.0..=1.0).contains(&eps) {
                continue;
            }
            for row in w {
                if (row[e] - eps).abs() > CLASSIFY_TOL {
                    continue 'col;
                }
            }
            let mut perm = vec![usize::MAX; nx];
            let mut ok = true;
            for (x, row) in w.iter().enumerate() {
                let mut one_at = None;
                for (y, &p) in row.iter().enumerate() {
                    if y == e {
                        continue;
                    }
                    if (p - (1.0 - eps)).abs() <= CLASSIFY_TOL {
                        one_at = Some(y);
                    } else if p.abs() > CLASSIFY_TOL {
                        ok = false;
                        break;
                    }
                }
                match one_at {
                    Some(y) if ok && !perm.contains(&y) => perm[x] = y,
                    _ => {
                        ok = false;
                    }
                }
                if !ok {
                    break;
                }
            }
            if ok {
                return ReceiverClass::Erasure {
                    eps,
                    perm,
                    erasure_symbol: e,
                };
            }
        }
    }
    ReceiverClass::Other
}

/// For two erasure/identity receivers, returns which is stronger (`0` or
/// `1`); `None` when either falls outside the checkable class.
pub fn stronger_receiver(a: &ReceiverClass, b: &ReceiverClass) -> Option<usize> {
    let ea = a.erasure_probability()?;
    let eb = b.erasure_probability()?;
    Some(if ea <= eb { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_entropy(p: f64) -> f64 {
        if p <= 0.0 || p >= 1.0 {
            0.0
        } else {
            -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
        }
    }

    fn bsc(p: f64) -> Vec<Vec<f64>> {
        vec![vec![1.0 - p, p], vec![p, 1.0 - p]]
    }

    fn bec(eps: f64) -> Vec<Vec<f64>> {
        vec![vec![1.0 - eps, 0.0, eps], vec![0.0, 1.0 - eps, eps]]
    }

    fn identity(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect()
    }

    #[test]
    fn mutual_information_basics() {
        let i = mutual_information(&[0.5, 0.5], &identity(2)).unwrap();
        assert_eq!(i, 1.0);
        let i = mutual_information(&[0.5, 0.5], &bec(0.5)).unwrap();
        assert!((i - 0.5).abs() < 1e-15);
        // Asymmetric input over a BSC: closed form H(Y) − h(p).
        let p = 0.11;
        let px = [0.9, 0.1];
        let py0 = 0.9 * (1.0 - p) + 0.1 * p;
        let expected = binary_entropy(py0) - binary_entropy(p);
        let i = mutual_information(&px, &bsc(p)).unwrap();
        assert!((i - expected).abs() < 1e-12, "{} vs {}", i, expected);
    }

    #[test]
    fn mutual_information_rejects_mismatch() {
        assert!(mutual_information(&[1.0], &bsc(0.1)).is_err());
    }

    #[test]
    fn mutual_information_is_concave_in_input() {
        let mut rng = crate::rng::CounterRng::new(11, 0, 0);
        let channels = [bsc(0.2), bec(0.3)];
        for trial in 0..100 {
            let w = &channels[trial % 2];
            let a = rng.next_f64();
            let b = rng.next_f64();
            let p = [a, 1.0 - a];
            let q = [b, 1.0 - b];
            let t = rng.next_f64();
            let mix = [t * p[0] + (1.0 - t) * q[0], t * p[1] + (1.0 - t) * q[1]];
            let lhs = mutual_information(&mix, w).unwrap();
            let rhs = t * mutual_information(&p, w).unwrap()
                + (1.0 - t) * mutual_information(&q, w).unwrap();
            assert!(lhs >= rhs - 1e-9, "concavity violated: {} < {}", lhs, rhs);
        }
    }

    #[test]
    fn blahut_arimoto_matches_closed_forms() {
        for p in [0.05, 0.11, 0.25, 0.4] {
            let r = blahut_arimoto_capacity(&bsc(p), 1e-6, 100_000).unwrap();
            assert!(r.converged);
            let expected = 1.0 - binary_entropy(p);
            assert!((r.value - expected).abs() <= 1e-6, "BSC({}): {} vs {}", p, r.value, expected);
        }
        for eps in [0.1, 0.5, 0.9] {
            let r = blahut_arimoto_capacity(&bec(eps), 1e-6, 100_000).unwrap();
            assert!((r.value - (1.0 - eps)).abs() <= 1e-6);
        }
        for q in [2usize, 3, 4, 5] {
            let r = blahut_arimoto_capacity(&identity(q), 1e-9, 100_000).unwrap();
            assert!((r.value - (q as f64).log2()).abs() <= 1e-9);
        }
    }

    #[test]
    fn blahut_arimoto_z_channel() {
        // Z(f): input 1 flips to 0 with probability f; closed form
        // C = log2(1 + (1−f)·f^{f/(1−f)}).
        let f = 0.3;
        let w = vec![vec![1.0, 0.0], vec![f, 1.0 - f]];
        let r = blahut_arimoto_capacity(&w, 1e-9, 100_000).unwrap();
        let expected = (1.0 + (1.0 - f) * f.powf(f / (1.0 - f))).log2();
        assert!(r.converged);
        assert!((r.value - expected).abs() < 1e-8, "{} vs {}", r.value, expected);
        assert!(r.iterations > 1);
        // The reported argmax really achieves the reported value.
        let achieved = mutual_information(r.argmax.as_slice(), &w).unwrap();
        assert!(achieved >= r.value - 1e-12);
    }

    #[test]
    fn blahut_arimoto_label_invariance() {
        let w = vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.6, 0.3]];
        let w_perm = vec![vec![0.1, 0.3, 0.6], vec![0.7, 0.1, 0.2]]; // rows swapped, columns 1 and 2 swapped
        let a = blahut_arimoto_capacity(&w, 1e-9, 100_000).unwrap();
        let b = blahut_arimoto_capacity(&w_perm, 1e-9, 100_000).unwrap();
        assert!((a.value - b.value).abs() < 2e-9);
    }

    #[test]
    fn blahut_arimoto_nonconvergence_flag() {
        let r = blahut_arimoto_capacity(&vec![vec![1.0, 0.0], vec![0.3, 0.7]], 1e-12, 3).unwrap();
        assert!(!r.converged);
        assert!(r.gap > 1e-12);
    }

    #[test]
    fn common_message_identity_plus_bec() {
        let r = common_message_capacity(&[identity(2), bec(0.5)]).unwrap();
        assert!((r.value - 0.5).abs() < 1e-9, "{}", r.value);
        // Independent check: coarse explicit maximization of the min.
        let mut brute = 0.0f64;
        for i in 0..=10_000 {
            let t = i as f64 / 10_000.0;
            let p = [1.0 - t, t];
            let v = mutual_information(&p, &identity(2))
                .unwrap()
                .min(mutual_information(&p, &bec(0.5)).unwrap());
            brute = brute.max(v);
        }
        assert!((r.value - brute).abs() < 1e-6);
    }

    #[test]
    fn common_message_single_receiver_equals_capacity() {
        let a = common_message_capacity(&[bsc(0.25)]).unwrap();
        let b = blahut_arimoto_capacity(&bsc(0.25), DEFAULT_BA_TOL, DEFAULT_BA_MAX_ITER).unwrap();
        assert!((a.value - b.value).abs() < 1e-12);
    }

    #[test]
    fn common_message_identical_bscs() {
        let r = common_message_capacity(&[bsc(0.25), bsc(0.25)]).unwrap();
        let expected = 1.0 - binary_entropy(0.25);
        assert!((r.value - expected).abs() < 1e-4, "{} vs {}", r.value, expected);
    }

    #[test]
    fn common_message_ternary_inputs() {
        let r = common_message_capacity(&[identity(3), identity(3)]).unwrap();
        assert!((r.value - 3.0f64.log2()).abs() < 1e-3, "{}", r.value);
    }

    #[test]
    fn degraded_region_identity_bec_half() {
        let region = degraded_bc_region(&identity(2), &bec(0.5), 2, 201).unwrap();
        assert!(!region.frontier.is_empty());
        // Frontier obeys 2·r_c + r_p ≤ 1 and attains it.
        let mut best = 0.0f64;
        for p in &region.frontier {
            let v = 2.0 * p.common_rate + p.private_rate;
            assert!(v <= 1.0 + 1e-9, "point ({}, {}) above the line", p.private_rate, p.common_rate);
            best = best.max(v);
        }
        assert!(best >= 1.0 - 1e-9, "frontier does not reach the line: {}", best);
        // Extreme points: common-only reaches C2 = 0.5, private-only reaches C1 = 1.
        assert!((region.max_common() - 0.5).abs() < 1e-9);
        assert!((region.max_private() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degraded_region_witnesses_reproduce_rates() {
        let region = degraded_bc_region(&identity(2), &bec(0.5), 2, 41).unwrap();
        for p in &region.frontier {
            let (rp, rc) = superposition_rates(&p.witness, &identity(2), &bec(0.5)).unwrap();
            assert!((rp - p.private_rate).abs() < 1e-9);
            assert!((rc - p.common_rate).abs() < 1e-9);
        }
    }

    #[test]
    fn degraded_region_is_monotone_convex_and_downward_closed() {
        let region = degraded_bc_region(&identity(2), &bec(0.3), 2, 81).unwrap();
        let f = &region.frontier;
        for pair in f.windows(2) {
            assert!(pair[1].private_rate > pair[0].private_rate);
            assert!(pair[1].common_rate < pair[0].common_rate);
        }
        // Slopes decrease (concave envelope).
        for triple in f.windows(3) {
            let s01 = (triple[1].common_rate - triple[0].common_rate)
                / (triple[1].private_rate - triple[0].private_rate);
            let s12 = (triple[2].common_rate - triple[1].common_rate)
                / (triple[2].private_rate - triple[1].private_rate);
            assert!(s12 <= s01 + 1e-12);
        }
        for p in f {
            assert!(region.contains(p.private_rate * 0.5, p.common_rate * 0.5, 1e-12));
            assert!(region.contains(p.private_rate, p.common_rate, 1e-9));
        }
        assert!(!region.contains(region.max_private() + 0.01, 0.0, 1e-9));
    }

    #[test]
    fn degraded_region_grid_cap() {
        let err = degraded_bc_region(&identity(2), &bec(0.5), 3, 201).unwrap_err();
        assert!(matches!(err, Error::GridCap { .. }));
        // A coarser grid keeps |U| = 3 under the cap.
        assert!(degraded_bc_region(&identity(2), &bec(0.5), 3, 21).is_ok());
    }

    #[test]
    fn static_broadcast_section5_point() {
        let v = static_broadcast_max_rate(&identity(2), &bec(0.5), 0.5, 1.0, 201).unwrap();
        assert!((v - 0.5).abs() < 1e-9, "{}", v);
    }

    #[test]
    fn static_broadcast_swap_symmetry() {
        let a = static_broadcast_max_rate(&identity(2), &bec(0.4), 0.6, 1.0, 101).unwrap();
        let b = static_broadcast_max_rate(&bec(0.4), &identity(2), 1.0, 0.6, 101).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn static_broadcast_equal_times_is_common_capacity() {
        for sigma in [0.3, 1.0, 1.7] {
            let v = static_broadcast_max_rate(&identity(2), &bec(0.5), sigma, sigma, 101).unwrap();
            let c = common_message_capacity(&[identity(2), bec(0.5)]).unwrap();
            assert!((v - sigma * c.value).abs() < 1e-9);
        }
    }

    #[test]
    fn receiver_classification() {
        assert_eq!(
            classify_receiver(&identity(2)),
            ReceiverClass::Identity { perm: vec![0, 1] }
        );
        match classify_receiver(&bec(0.5)) {
            ReceiverClass::Erasure { eps, erasure_symbol, .. } => {
                assert!((eps - 0.5).abs() < 1e-12);
                assert_eq!(erasure_symbol, 2);
            }
            other => panic!("expected erasure, got {:?}", other),
        }
        assert_eq!(classify_receiver(&bsc(0.1)), ReceiverClass::Other);
        let id = classify_receiver(&identity(2));
        let er = classify_receiver(&bec(0.5));
        assert_eq!(stronger_receiver(&id, &er), Some(0));
        assert_eq!(stronger_receiver(&er, &id), Some(1));
        assert_eq!(stronger_receiver(&id, &classify_receiver(&bsc(0.1))), None);
    }

    #[test]
    fn region_csv_has_witness_columns() {
        let region = degraded_bc_region(&identity(2), &bec(0.5), 2, 11).unwrap();
        let csv = region.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "private_rate,common_rate,p_u,p_x_given_u");
        assert!(lines.next().unwrap().contains('|'));
    }
}
