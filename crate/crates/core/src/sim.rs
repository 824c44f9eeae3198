//! Seeded Monte Carlo simulation of phase-concatenated codes with staged
//! decoding deadlines over erasure-type broadcast channels.
//!
//! The code family is systematic plus random-linear parities over GF(2):
//! capacity-achieving on erasure channels, with decoding success reduced to
//! a transparent rank condition. Each demand is decoded at its own deadline
//! from the unerased symbols received so far, by Gaussian elimination.
//!
//! All randomness is counter-based and keyed by `(seed, trial, stream)`,
//! so reports are byte-identical for any worker count.

use std::ops::Range;

use serde::Serialize;

use crate::model::Channel;
use crate::oracles::{classify_receiver, ReceiverClass};
use crate::rng::CounterRng;
use crate::{fmt_sig9, round_sig9, Error, Result};

const STREAM_MESSAGE: u64 = 0x0100;
const STREAM_ERASURE: u64 = 0x0200;
const STREAM_CODEBOOK: u64 = 0x0300;

/// A message block: `bits` information bits occupying a systematic span of
/// the codeword.
#[derive(Debug, Clone, Serialize)]
pub struct MessageBlock {
    pub label: String,
    pub bits: usize,
    /// Symbol indices carrying the bits verbatim.
    pub systematic: Range<usize>,
}

/// A run of random-linear parity symbols over one block's bits.
#[derive(Debug, Clone, Serialize)]
pub struct ParitySegment {
    pub block: usize,
    pub range: Range<usize>,
    /// Packed support vectors, one per symbol in `range`.
    #[serde(skip)]
    pub supports: Vec<Vec<u64>>,
}

/// A demand: `block` must be decoded by receiver `receiver` from symbols
/// `1..=deadline`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DemandSpec {
    pub block: usize,
    pub receiver: usize,
    pub deadline: usize,
}

/// A concrete two-phase code: phase boundaries, systematic segment
/// boundaries, and the random-linear generator seed.
#[derive(Debug, Clone, Serialize)]
pub struct CodeScheme {
    /// Blocklength normalization unit (deadlines are `⌈σ·n⌉`).
    pub n: usize,
    /// Total transmitted symbols, `⌈max σ · n⌉`.
    pub symbols: usize,
    /// Symbols in phase 1.
    pub phase_boundary: usize,
    pub sigma: (f64, f64),
    pub rates: (f64, f64),
    pub eps_weak: f64,
    pub codebook_seed: u64,
    pub blocks: Vec<MessageBlock>,
    pub parities: Vec<ParitySegment>,
    pub demands: Vec<DemandSpec>,
}

/// Rate point and geometry for [`build_two_phase_erasure_scheme`].
#[derive(Debug, Clone)]
pub struct TwoPhaseSchemeSpec {
    /// Rate of the sub-message decoded by both receivers at `sigma.0`.
    pub common_rate: f64,
    /// Rate of the sub-message decoded by receiver 1 at `sigma.0` and
    /// receiver 2 at `sigma.1`.
    pub private_rate: f64,
    pub sigma: (f64, f64),
    pub n: usize,
    /// Erasure probability of the weaker receiver (receiver 2).
    pub eps_weak: f64,
    pub codebook_seed: u64,
}

fn ceil_mul(rate: f64, n: usize) -> usize {
    (rate * n as f64).ceil() as usize
}

/// Builds the two-phase scheme for an identity + erasure broadcast pair:
/// phase 1 carries the common block (systematic plus parities sized for
/// the erasure receiver) and the private block systematically for
/// receiver 1; phase 2 carries fresh random-linear parities of the private
/// block for receiver 2.
pub fn build_two_phase_erasure_scheme(spec: &TwoPhaseSchemeSpec) -> Result<CodeScheme> {
    if spec.n == 0 {
        return Err(Error::Validation("blocklength must be positive".into()));
    }
    if !(spec.sigma.0 > 0.0 && spec.sigma.1 >= spec.sigma.0) {
        return Err(Error::Validation(
            "need 0 < sigma_1 <= sigma_2 for the two-phase scheme".into(),
        ));
    }
    if spec.common_rate < 0.0 || spec.private_rate < 0.0 {
        return Err(Error::Validation("rates must be nonnegative".into()));
    }
    let n1 = ceil_mul(spec.sigma.0, spec.n);
    let symbols = ceil_mul(spec.sigma.1, spec.n);
    let k_common = ceil_mul(spec.common_rate, spec.n);
    let k_private = ceil_mul(spec.private_rate, spec.n);

    // The common block must finish inside phase 1 for both receivers; the
    // erasure receiver needs its span inflated by 1/(1−eps).
    let common_parities_base = if k_common == 0 {
        0
    } else {
        if spec.eps_weak >= 1.0 {
            return Err(Error::RateBudget(
                "weak receiver erases everything; no common rate is deliverable".into(),
            ));
        }
        (k_common as f64 * spec.eps_weak / (1.0 - spec.eps_weak)).ceil() as usize
    };
    if k_common + common_parities_base > n1 {
        return Err(Error::RateBudget(format!(
            "common block needs {} phase-1 symbols, budget {}",
            k_common + common_parities_base,
            n1
        )));
    }
    if k_common + common_parities_base + k_private > symbols {
        return Err(Error::RateBudget(format!(
            "{} message and parity symbols exceed the {}-symbol block",
            k_common + common_parities_base + k_private,
            symbols
        )));
    }

    // Spare phase-1 symbols become extra parities, split between the blocks
    // in proportion to their sizes.
    let slack = n1 as isize - (k_common + common_parities_base + k_private) as isize;
    let (common_parities, fill) = if slack > 0 && k_common + k_private > 0 {
        let extra_common = slack as usize * k_common / (k_common + k_private);
        (common_parities_base + extra_common, slack as usize - extra_common)
    } else {
        (common_parities_base, 0)
    };

    let mut blocks = Vec::new();
    let mut parities = Vec::new();
    let mut demands = Vec::new();
    let mut cursor = 0;
    let mut segment_id = 0u64;
    let codebook = |seed: u64, seg: u64, bits: usize, count: usize| -> Vec<Vec<u64>> {
        let mut rng = CounterRng::new(seed, 0, STREAM_CODEBOOK + seg);
        (0..count).map(|_| rng.next_bit_words(bits)).collect()
    };

    if k_common > 0 {
        let block = blocks.len();
        blocks.push(MessageBlock {
            label: "common".into(),
            bits: k_common,
            systematic: cursor..cursor + k_common,
        });
        cursor += k_common;
        if common_parities > 0 {
            parities.push(ParitySegment {
                block,
                range: cursor..cursor + common_parities,
                supports: codebook(spec.codebook_seed, segment_id, k_common, common_parities),
            });
            segment_id += 1;
            cursor += common_parities;
        }
        demands.push(DemandSpec { block, receiver: 0, deadline: n1 });
        demands.push(DemandSpec { block, receiver: 1, deadline: n1 });
    }
    if k_private > 0 {
        let block = blocks.len();
        blocks.push(MessageBlock {
            label: "private".into(),
            bits: k_private,
            systematic: cursor..cursor + k_private,
        });
        cursor += k_private;
        if fill > 0 {
            parities.push(ParitySegment {
                block,
                range: cursor..cursor + fill,
                supports: codebook(spec.codebook_seed, segment_id, k_private, fill),
            });
            segment_id += 1;
            cursor += fill;
        }
        // Phase 2: fresh combinations of the weak receiver's outstanding
        // bits.
        let phase2_start = cursor.max(n1);
        if symbols > phase2_start {
            let count = symbols - phase2_start;
            parities.push(ParitySegment {
                block,
                range: phase2_start..symbols,
                supports: codebook(spec.codebook_seed, segment_id, k_private, count),
            });
        }
        demands.push(DemandSpec { block, receiver: 0, deadline: n1 });
        demands.push(DemandSpec { block, receiver: 1, deadline: symbols });
    }

    Ok(CodeScheme {
        n: spec.n,
        symbols,
        phase_boundary: n1,
        sigma: spec.sigma,
        rates: (spec.common_rate, spec.private_rate),
        eps_weak: spec.eps_weak,
        codebook_seed: spec.codebook_seed,
        blocks,
        parities,
        demands,
    })
}

/// Simulation parameters.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub trials: u64,
    pub seed: u64,
    pub workers: usize,
    /// Record the highest symbol index each demand's decoder touches.
    pub log_access: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            trials: 10_000,
            seed: 7,
            workers: 1,
            log_access: false,
        }
    }
}

/// Per-demand simulation outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemandReport {
    pub block: String,
    pub receiver: usize,
    pub deadline: usize,
    pub errors: u64,
    pub trials: u64,
    pub error_rate: f64,
    /// 95% binomial confidence half-width.
    pub half_width: f64,
    /// Highest 1-based symbol index the decoder read (0 when unused or
    /// access logging is off).
    pub max_symbol_read: usize,
}

/// Aggregated simulation report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub n: usize,
    pub symbols: usize,
    pub trials: u64,
    pub seed: u64,
    pub demands: Vec<DemandReport>,
    /// Trials where any demand failed — the event achievability bounds.
    pub joint_errors: u64,
    pub joint_error_rate: f64,
    pub joint_half_width: f64,
}

fn half_width(errors: u64, trials: u64) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    let p = errors as f64 / trials as f64;
    1.96 * (p * (1.0 - p) / trials as f64).sqrt()
}

impl SimReport {
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Rounded<'a> {
            n: usize,
            symbols: usize,
            trials: u64,
            seed: u64,
            demands: Vec<serde_json::Value>,
            joint_errors: u64,
            joint_error_rate: f64,
            joint_half_width: f64,
            _marker: std::marker::PhantomData<&'a ()>,
        }
        let demands = self
            .demands
            .iter()
            .map(|d| {
                serde_json::json!({
                    "block": d.block,
                    "receiver": d.receiver + 1,
                    "deadline": d.deadline,
                    "errors": d.errors,
                    "trials": d.trials,
                    "error_rate": round_sig9(d.error_rate),
                    "half_width": round_sig9(d.half_width),
                    "max_symbol_read": d.max_symbol_read,
                })
            })
            .collect();
        let rounded = Rounded {
            n: self.n,
            symbols: self.symbols,
            trials: self.trials,
            seed: self.seed,
            demands,
            joint_errors: self.joint_errors,
            joint_error_rate: round_sig9(self.joint_error_rate),
            joint_half_width: round_sig9(self.joint_half_width),
            _marker: std::marker::PhantomData,
        };
        serde_json::to_string_pretty(&rounded).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("block,receiver,deadline,errors,trials,error_rate,half_width\n");
        for d in &self.demands {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                d.block,
                d.receiver + 1,
                d.deadline,
                d.errors,
                d.trials,
                fmt_sig9(d.error_rate),
                fmt_sig9(d.half_width)
            ));
        }
        out.push_str(&format!(
            "joint,,,{},{},{},{}\n",
            self.joint_errors,
            self.trials,
            fmt_sig9(self.joint_error_rate),
            fmt_sig9(self.joint_half_width)
        ));
        out
    }
}

/// Erasure probabilities of the two receivers, extracted from the channel.
fn erasure_profile(channel: &Channel, receiver_nodes: &[usize; 2]) -> Result<[f64; 2]> {
    if channel.joint_input_size() != 2 {
        return Err(Error::UnsupportedChannel(format!(
            "scheme transmits bits; channel has {} joint inputs",
            channel.joint_input_size()
        )));
    }
    let mut eps = [0.0; 2];
    for (slot, &node) in receiver_nodes.iter().enumerate() {
        let marginal = channel.receiver_marginal(node);
        match classify_receiver(&marginal) {
            ReceiverClass::Identity { .. } => eps[slot] = 0.0,
            ReceiverClass::Erasure { eps: e, .. } => eps[slot] = e,
            ReceiverClass::Other => {
                return Err(Error::UnsupportedChannel(format!(
                    "receiver v{} is not an identity/erasure channel",
                    node + 1
                )));
            }
        }
    }
    Ok(eps)
}

struct TrialTally {
    demand_errors: Vec<u64>,
    joint_errors: u64,
    max_reads: Vec<usize>,
    outcomes: Option<Vec<bool>>, // joint success per trial
}

/// Pivot-column group width for table-based elimination.
const GF2_GROUP: usize = 4;

/// Parallel bit extract: gathers the bits of `x` selected by `mask` into
/// the low bits of the result.
#[inline]
fn pext64(x: u64, mask: u64) -> u64 {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("bmi2") {
            // SAFETY: guarded by the feature check above.
            return unsafe { pext64_bmi2(x, mask) };
        }
    }
    pext64_portable(x, mask)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "bmi2")]
unsafe fn pext64_bmi2(x: u64, mask: u64) -> u64 {
    core::arch::x86_64::_pext_u64(x, mask)
}

fn pext64_portable(x: u64, mut mask: u64) -> u64 {
    let mut out = 0u64;
    let mut i = 0;
    while mask != 0 {
        let low = mask & mask.wrapping_neg();
        if x & low != 0 {
            out |= 1 << i;
        }
        i += 1;
        mask &= mask - 1;
    }
    out
}

/// Flat bit-packed equation system with reusable buffers.
///
/// Elimination proceeds in groups of up to [`GF2_GROUP`] pivot columns:
/// each group precomputes the 2^g combinations of its pivot rows so that
/// every remaining row is updated by a single table XOR per group.
struct Gf2System {
    words: usize,
    rows: usize,
    data: Vec<u64>,
    rhs: Vec<bool>,
    win: Vec<usize>,
    masks: Vec<u8>,
    win_next: Vec<usize>,
    masks_next: Vec<u8>,
    accum: Vec<u8>,
    table: Vec<u64>,
}

#[inline]
fn extract_mask(row: &[u64], cols: &[(usize, usize)]) -> u8 {
    let mut m = 0u8;
    for (s, &(w, b)) in cols.iter().enumerate() {
        m |= ((row[w] >> b & 1) as u8) << s;
    }
    m
}

impl Gf2System {
    fn new() -> Self {
        Self {
            words: 0,
            rows: 0,
            data: Vec::new(),
            rhs: Vec::new(),
            win: Vec::new(),
            masks: Vec::new(),
            win_next: Vec::new(),
            masks_next: Vec::new(),
            accum: Vec::new(),
            table: Vec::new(),
        }
    }

    fn reset(&mut self, words: usize) {
        self.words = words;
        self.rows = 0;
        self.data.clear();
        self.rhs.clear();
    }

    fn push_row(&mut self, row: impl Iterator<Item = u64>, rhs: bool) {
        self.data.extend(row);
        debug_assert_eq!(self.data.len(), (self.rows + 1) * self.words);
        self.rhs.push(rhs);
        self.rows += 1;
    }

    /// Appends `support & mask` with the masked columns compacted away, so
    /// the system's columns are exactly the mask's set bits in order.
    fn push_row_compressed(&mut self, support: &[u64], mask: &[u64], rhs: bool) {
        let start = self.data.len();
        self.data.resize(start + self.words, 0);
        let row = &mut self.data[start..];
        let mut bit = 0usize;
        for (&x, &m) in support.iter().zip(mask) {
            let cnt = m.count_ones() as usize;
            if cnt == 0 {
                continue;
            }
            let extracted = pext64(x, m);
            let (w, b) = (bit / 64, bit % 64);
            row[w] |= extracted << b;
            if b != 0 && b + cnt > 64 {
                row[w + 1] |= extracted >> (64 - b);
            }
            bit += cnt;
        }
        self.rhs.push(rhs);
        self.rows += 1;
    }

    /// XORs row `src` into row `dst`, starting at word `wmin` (both rows
    /// are zero to the left).
    fn xor_row_tail(&mut self, dst: usize, src: usize, wmin: usize) {
        let words = self.words;
        let (a, b) = (dst * words, src * words);
        for w in wmin..words {
            let v = self.data[b + w];
            self.data[a + w] ^= v;
        }
        let v = self.rhs[src];
        self.rhs[dst] ^= v;
    }

    /// Forward elimination and back substitution over the unknown columns,
    /// which must be given in increasing order. Returns the unique solution
    /// or `None` when under-determined.
    fn solve(&mut self, unknown_cols: &[usize]) -> Option<Vec<bool>> {
        let rank_needed = unknown_cols.len();
        if self.rows < rank_needed {
            return None;
        }
        debug_assert!(unknown_cols.windows(2).all(|p| p[0] < p[1]));
        let words = self.words;
        let mut pivot_positions: Vec<usize> = Vec::with_capacity(rank_needed);

        let group_cols = |gi: usize| -> ([(usize, usize); GF2_GROUP], usize) {
            let g = (rank_needed - gi).min(GF2_GROUP);
            let mut wb = [(0usize, 0usize); GF2_GROUP];
            for (s, &c) in unknown_cols[gi..gi + g].iter().enumerate() {
                wb[s] = (c / 64, c % 64);
            }
            (wb, g)
        };

        // Prologue: every row enters the first group's window.
        let (first_cols, first_g) = group_cols(0);
        self.win.clear();
        self.masks.clear();
        for i in 0..self.rows {
            self.win.push(i);
            self.masks
                .push(extract_mask(&self.data[i * words..(i + 1) * words], &first_cols[..first_g]));
        }

        let mut gi = 0usize;
        while gi < rank_needed {
            let (cols, g) = group_cols(gi);
            let wmin = cols[0].0;
            let tail = words - wmin;
            if self.win.len() < g {
                return None;
            }
            self.accum.clear();
            self.accum.resize(self.win.len(), 0u8);

            // Choose a pivot row per column, deferring full-row updates:
            // masks and accumulators track the pending pivot combinations.
            let mut group_pivots = [usize::MAX; GF2_GROUP]; // window slots
            for s in 0..g {
                let mut found = usize::MAX;
                for (slot, &m) in self.masks.iter().enumerate() {
                    if m >> s & 1 == 1 && !group_pivots[..s].contains(&slot) {
                        found = slot;
                        break;
                    }
                }
                if found == usize::MAX {
                    return None;
                }
                // Materialize this pivot row now.
                let row = self.win[found];
                let pending = self.accum[found];
                for (t, &p) in group_pivots[..s].iter().enumerate() {
                    if pending >> t & 1 == 1 {
                        let src = self.win[p];
                        self.xor_row_tail(row, src, wmin);
                    }
                }
                self.accum[found] = 0;
                group_pivots[s] = found;
                let pm = self.masks[found];
                for (slot, m) in self.masks.iter_mut().enumerate() {
                    if *m >> s & 1 == 1 && !group_pivots[..=s].contains(&slot) {
                        *m ^= pm;
                        self.accum[slot] ^= 1 << s;
                    }
                }
            }

            // Table of all pivot-row combinations over the tail words.
            self.table.clear();
            self.table.resize((1 << g) * tail, 0);
            let mut table_rhs = [false; 1 << GF2_GROUP];
            for m in 1usize..1 << g {
                let low = m.trailing_zeros() as usize;
                let rest = m & (m - 1);
                let src = self.win[group_pivots[low]] * words + wmin;
                for w in 0..tail {
                    self.table[m * tail + w] = self.table[rest * tail + w] ^ self.data[src + w];
                }
                table_rhs[m] = table_rhs[rest] ^ self.rhs[self.win[group_pivots[low]]];
            }

            // Fused pass: apply the combined update to each remaining row,
            // read off its mask for the next group, and compact the window.
            let next_gi = gi + g;
            let (next_cols, next_g) = if next_gi < rank_needed {
                group_cols(next_gi)
            } else {
                ([(0, 0); GF2_GROUP], 0)
            };
            self.win_next.clear();
            self.masks_next.clear();
            for slot in 0..self.win.len() {
                if group_pivots[..g].contains(&slot) {
                    continue;
                }
                let row = self.win[slot];
                let a = self.accum[slot] as usize;
                if a != 0 {
                    let dst = row * words + wmin;
                    let row_tail = &mut self.data[dst..dst + tail];
                    let table_row = &self.table[a * tail..(a + 1) * tail];
                    for (x, t) in row_tail.iter_mut().zip(table_row) {
                        *x ^= t;
                    }
                    self.rhs[row] ^= table_rhs[a];
                }
                if next_g > 0 {
                    let base = row * words;
                    self.masks_next.push(extract_mask(
                        &self.data[base..base + words],
                        &next_cols[..next_g],
                    ));
                }
                self.win_next.push(row);
            }
            for &p in &group_pivots[..g] {
                pivot_positions.push(self.win[p]);
            }
            std::mem::swap(&mut self.win, &mut self.win_next);
            std::mem::swap(&mut self.masks, &mut self.masks_next);
            gi = next_gi;
        }

        // Back substitution in pivot order; pivot row `k` has zeros at all
        // earlier pivot columns.
        let mut solution = vec![false; rank_needed];
        for k in (0..rank_needed).rev() {
            let row = pivot_positions[k];
            let mut val = self.rhs[row];
            let base = row * words;
            for (j, &col) in unknown_cols.iter().enumerate().skip(k + 1) {
                if solution[j] && self.data[base + col / 64] >> (col % 64) & 1 == 1 {
                    val = !val;
                }
            }
            solution[k] = val;
        }
        Some(solution)
    }
}

fn run_trials(
    scheme: &CodeScheme,
    eps: &[f64; 2],
    seed: u64,
    range: Range<u64>,
    log_access: bool,
    record_outcomes: bool,
) -> TrialTally {
    let mut tally = TrialTally {
        demand_errors: vec![0; scheme.demands.len()],
        joint_errors: 0,
        max_reads: vec![0; scheme.demands.len()],
        outcomes: record_outcomes.then(|| Vec::with_capacity((range.end - range.start) as usize)),
    };
    let mut system = Gf2System::new();
    let mut compact_cols: Vec<usize> = Vec::new();

    for trial in range {
        // Draw message bits per block and erasures per receiver.
        let messages: Vec<Vec<u64>> = scheme
            .blocks
            .iter()
            .enumerate()
            .map(|(b, block)| {
                CounterRng::new(seed, trial, STREAM_MESSAGE + b as u64).next_bit_words(block.bits)
            })
            .collect();
        let erased: Vec<Vec<bool>> = (0..2)
            .map(|r| {
                if eps[r] == 0.0 {
                    vec![false; scheme.symbols]
                } else {
                    let mut rng = CounterRng::new(seed, trial, STREAM_ERASURE + r as u64);
                    (0..scheme.symbols).map(|_| rng.next_bool(eps[r])).collect()
                }
            })
            .collect();

        let mut joint_ok = true;
        for (d_idx, demand) in scheme.demands.iter().enumerate() {
            let block = &scheme.blocks[demand.block];
            let msg = &messages[demand.block];
            let erased_r = &erased[demand.receiver];
            let words = block.bits.div_ceil(64);
            let mut max_read = 0usize;

            // Directly known bits from unerased systematic symbols.
            let mut known = vec![0u64; words];
            for sym in block.systematic.clone() {
                if sym >= demand.deadline {
                    break;
                }
                if !erased_r[sym] {
                    let bit = sym - block.systematic.start;
                    known[bit / 64] |= 1 << (bit % 64);
                    max_read = max_read.max(sym + 1);
                }
            }
            let known_count: usize = known.iter().map(|w| w.count_ones() as usize).sum();

            let ok = if known_count == block.bits {
                true
            } else {
                // Equations from unerased parity symbols, with known bits
                // substituted into the right-hand side.
                let unknown_mask: Vec<u64> = {
                    let mut m = vec![u64::MAX; words];
                    if block.bits % 64 != 0 {
                        m[words - 1] = (1u64 << (block.bits % 64)) - 1;
                    }
                    m.iter().zip(&known).map(|(full, k)| full & !k).collect()
                };
                // The system's columns are the unknown bits, compacted.
                let unknown_cols: Vec<usize> = (0..block.bits)
                    .filter(|&b| unknown_mask[b / 64] >> (b % 64) & 1 == 1)
                    .collect();
                system.reset(unknown_cols.len().div_ceil(64));
                for seg in scheme.parities.iter().filter(|s| s.block == demand.block) {
                    for (offset, sym) in seg.range.clone().enumerate() {
                        if sym >= demand.deadline {
                            break;
                        }
                        if erased_r[sym] {
                            continue;
                        }
                        max_read = max_read.max(sym + 1);
                        let support = &seg.supports[offset];
                        // Known-bit contributions move to the right-hand
                        // side, so the row spans unknown columns only.
                        let mut rhs = false;
                        for w in 0..words {
                            rhs ^= ((support[w] & msg[w]).count_ones() & 1) == 1;
                            rhs ^= ((support[w] & known[w] & msg[w]).count_ones() & 1) == 1;
                        }
                        system.push_row_compressed(support, &unknown_mask, rhs);
                    }
                }
                compact_cols.clear();
                compact_cols.extend(0..unknown_cols.len());
                match system.solve(&compact_cols) {
                    Some(solution) => {
                        // The decoded bits must equal the transmitted ones.
                        unknown_cols
                            .iter()
                            .zip(&solution)
                            .all(|(&b, &bit)| (msg[b / 64] >> (b % 64) & 1 == 1) == bit)
                    }
                    None => false,
                }
            };

            if !ok {
                tally.demand_errors[d_idx] += 1;
                joint_ok = false;
            }
            if log_access {
                tally.max_reads[d_idx] = tally.max_reads[d_idx].max(max_read);
            }
        }
        if !joint_ok {
            tally.joint_errors += 1;
        }
        if let Some(outcomes) = &mut tally.outcomes {
            outcomes.push(joint_ok);
        }
    }
    tally
}

fn aggregate(scheme: &CodeScheme, config: &SimConfig, tallies: Vec<TrialTally>) -> SimReport {
    let trials = config.trials;
    let mut demand_errors = vec![0u64; scheme.demands.len()];
    let mut max_reads = vec![0usize; scheme.demands.len()];
    let mut joint_errors = 0u64;
    for t in tallies {
        for (a, b) in demand_errors.iter_mut().zip(&t.demand_errors) {
            *a += b;
        }
        for (a, b) in max_reads.iter_mut().zip(&t.max_reads) {
            *a = (*a).max(*b);
        }
        joint_errors += t.joint_errors;
    }
    let demands = scheme
        .demands
        .iter()
        .enumerate()
        .map(|(i, d)| DemandReport {
            block: scheme.blocks[d.block].label.clone(),
            receiver: d.receiver,
            deadline: d.deadline,
            errors: demand_errors[i],
            trials,
            error_rate: demand_errors[i] as f64 / trials as f64,
            half_width: half_width(demand_errors[i], trials),
            max_symbol_read: max_reads[i],
        })
        .collect();
    SimReport {
        n: scheme.n,
        symbols: scheme.symbols,
        trials,
        seed: config.seed,
        demands,
        joint_errors,
        joint_error_rate: joint_errors as f64 / trials as f64,
        joint_half_width: half_width(joint_errors, trials),
    }
}

fn simulate_inner(
    scheme: &CodeScheme,
    eps: [f64; 2],
    config: &SimConfig,
    record_outcomes: bool,
) -> Result<(SimReport, Option<Vec<bool>>)> {
    if config.trials == 0 {
        return Err(Error::NoTrials);
    }
    let workers = config.workers.max(1).min(config.trials as usize);
    let tallies: Vec<TrialTally> = if workers == 1 {
        vec![run_trials(
            scheme,
            &eps,
            config.seed,
            0..config.trials,
            config.log_access,
            record_outcomes,
        )]
    } else {
        let chunk = config.trials.div_ceil(workers as u64);
        let mut slots: Vec<Option<TrialTally>> = Vec::new();
        slots.resize_with(workers, || None);
        std::thread::scope(|scope| {
            for (w, slot) in slots.iter_mut().enumerate() {
                let lo = chunk * w as u64;
                let hi = (lo + chunk).min(config.trials);
                scope.spawn(move || {
                    *slot = Some(run_trials(
                        scheme,
                        &eps,
                        config.seed,
                        lo..hi,
                        config.log_access,
                        record_outcomes,
                    ));
                });
            }
        });
        slots.into_iter().map(|s| s.expect("worker finished")).collect()
    };
    let outcomes = record_outcomes.then(|| {
        let mut all = Vec::with_capacity(config.trials as usize);
        for t in &tallies {
            all.extend_from_slice(t.outcomes.as_ref().expect("outcomes recorded"));
        }
        all
    });
    Ok((aggregate(scheme, config, tallies), outcomes))
}

/// Runs `config.trials` independent trials of the scheme over the channel.
///
/// `receiver_nodes` maps the scheme's receiver slots (0 = strong, 1 = weak)
/// to channel nodes. Decoding failure is data, not an error.
pub fn simulate(
    scheme: &CodeScheme,
    channel: &Channel,
    receiver_nodes: &[usize; 2],
    config: &SimConfig,
) -> Result<SimReport> {
    let eps = erasure_profile(channel, receiver_nodes)?;
    simulate_inner(scheme, eps, config, false).map(|(r, _)| r)
}

/// Outcome of re-running a scheme under the blocklength/time rescaling.
#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub alpha: f64,
    pub trials: u64,
    pub agreements: u64,
    pub agreement_rate: f64,
    pub coupled_seeds: bool,
    pub base: SimReport,
    pub rescaled: SimReport,
}

/// Re-runs the scheme reinterpreted at blocklength `n/alpha` with time
/// constraints `alpha·sigma` and compares per-trial joint outcomes.
///
/// With `reseed = None` the rescaled run consumes the same random streams,
/// so the comparison is trial-by-trial; passing a different seed decouples
/// the runs and the agreement becomes statistical.
pub fn verify_claim1_scaling(
    scheme: &CodeScheme,
    channel: &Channel,
    receiver_nodes: &[usize; 2],
    config: &SimConfig,
    alpha: f64,
    reseed: Option<u64>,
) -> Result<ScalingReport> {
    if !(alpha > 0.0) {
        return Err(Error::Validation("alpha must be positive".into()));
    }
    let n2f = scheme.n as f64 / alpha;
    if (n2f - n2f.round()).abs() > 1e-9 || n2f.round() < 1.0 {
        return Err(Error::NonIntegralRescale(format!(
            "blocklength {} / alpha {} is not an integer",
            scheme.n, alpha
        )));
    }
    let rescaled_spec = TwoPhaseSchemeSpec {
        common_rate: scheme.rates.0 * alpha,
        private_rate: scheme.rates.1 * alpha,
        sigma: (scheme.sigma.0 * alpha, scheme.sigma.1 * alpha),
        n: n2f.round() as usize,
        eps_weak: scheme.eps_weak,
        codebook_seed: scheme.codebook_seed,
    };
    let rescaled = build_two_phase_erasure_scheme(&rescaled_spec)?;
    if rescaled.symbols != scheme.symbols
        || rescaled.phase_boundary != scheme.phase_boundary
        || rescaled.demands != scheme.demands
    {
        return Err(Error::NonIntegralRescale(format!(
            "rescaling by {} shifts the deadline grid (\u{2308}α·σ·n/α\u{2309} ≠ \u{2308}σ·n\u{2309})",
            alpha
        )));
    }

    let eps = erasure_profile(channel, receiver_nodes)?;
    let (base_report, base_outcomes) = simulate_inner(scheme, eps, config, true)?;
    let rescaled_config = SimConfig {
        seed: reseed.unwrap_or(config.seed),
        ..config.clone()
    };
    let (rescaled_report, rescaled_outcomes) =
        simulate_inner(&rescaled, eps, &rescaled_config, true)?;

    let base_outcomes = base_outcomes.expect("recorded");
    let rescaled_outcomes = rescaled_outcomes.expect("recorded");
    let agreements = base_outcomes
        .iter()
        .zip(&rescaled_outcomes)
        .filter(|(a, b)| a == b)
        .count() as u64;
    Ok(ScalingReport {
        alpha,
        trials: config.trials,
        agreements,
        agreement_rate: agreements as f64 / config.trials as f64,
        coupled_seeds: reseed.is_none(),
        base: base_report,
        rescaled: rescaled_report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn section5_channel(eps: f64) -> Channel {
        Channel::from_receiver_tables(
            vec![2, 1, 1],
            vec![1, 2, 3],
            vec![
                None,
                Some(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
                Some(vec![vec![1.0 - eps, 0.0, eps], vec![0.0, 1.0 - eps, eps]]),
            ],
        )
        .unwrap()
    }

    fn scheme_at(common: f64, private: f64, n: usize) -> Result<CodeScheme> {
        build_two_phase_erasure_scheme(&TwoPhaseSchemeSpec {
            common_rate: common,
            private_rate: private,
            sigma: (0.5, 1.0),
            n,
            eps_weak: 0.5,
            codebook_seed: 99,
        })
    }

    #[test]
    fn gf2_solver_round_trip() {
        // 3 unknowns, rows over 1 word.
        let truth = [true, false, true];
        let supports: Vec<u64> = vec![0b011, 0b101, 0b110, 0b111];
        let mut system = Gf2System::new();
    let mut compact_cols: Vec<usize> = Vec::new();
        system.reset(1);
        for &s in &supports {
            let mut rhs = false;
            for (b, &t) in truth.iter().enumerate() {
                if s >> b & 1 == 1 && t {
                    rhs = !rhs;
                }
            }
            system.push_row(std::iter::once(s), rhs);
        }
        let solution = system.solve(&[0, 1, 2]).unwrap();
        assert_eq!(solution, truth);
    }

    #[test]
    fn gf2_solver_underdetermined() {
        let mut system = Gf2System::new();
    let mut compact_cols: Vec<usize> = Vec::new();
        system.reset(1);
        system.push_row(std::iter::once(0b011u64), true);
        system.push_row(std::iter::once(0b110u64), false);
        system.push_row(std::iter::once(0b101u64), true); // dependent row
        assert!(system.solve(&[0, 1, 2]).is_none());
    }

    #[test]
    fn gf2_solver_random_round_trip() {
        let mut rng = CounterRng::new(5, 0, 0);
        for bits in [10usize, 63, 64, 65, 130] {
            let words = bits.div_ceil(64);
            let truth: Vec<u64> = {
                let mut rng_t = CounterRng::new(5, 1, bits as u64);
                rng_t.next_bit_words(bits)
            };
            let mut system = Gf2System::new();
    let mut compact_cols: Vec<usize> = Vec::new();
            system.reset(words);
            for _ in 0..bits + 20 {
                let support = rng.next_bit_words(bits);
                let mut rhs = false;
                for w in 0..words {
                    rhs ^= ((support[w] & truth[w]).count_ones() & 1) == 1;
                }
                system.push_row(support.iter().copied(), rhs);
            }
            let cols: Vec<usize> = (0..bits).collect();
            let solution = system.solve(&cols).expect("full rank with 20 extra rows");
            for (b, &bit) in cols.iter().zip(&solution) {
                assert_eq!(truth[b / 64] >> (b % 64) & 1 == 1, bit, "bit {} of {}", b, bits);
            }
        }
    }

    #[test]
    fn section5_scheme_layout() {
        // 0.45n private bits: 900 message bits, 1000 phase-1 symbols of
        // which 900 systematic, and 1000 phase-2 parity symbols.
        let scheme = scheme_at(0.0, 0.45, 2000).unwrap();
        assert_eq!(scheme.symbols, 2000);
        assert_eq!(scheme.phase_boundary, 1000);
        assert_eq!(scheme.blocks.len(), 1);
        assert_eq!(scheme.blocks[0].bits, 900);
        assert_eq!(scheme.blocks[0].systematic, 0..900);
        // Fill parities inside phase 1, then the phase-2 segment.
        assert_eq!(scheme.parities.len(), 2);
        assert_eq!(scheme.parities[0].range, 900..1000);
        assert_eq!(scheme.parities[1].range, 1000..2000);
        assert_eq!(scheme.demands.len(), 2);
        assert_eq!(scheme.demands[1].deadline, 2000);
    }

    #[test]
    fn empty_scheme_trivially_succeeds() {
        let scheme = scheme_at(0.0, 0.0, 2000).unwrap();
        assert!(scheme.blocks.is_empty());
        let channel = section5_channel(0.5);
        let report = simulate(
            &scheme,
            &channel,
            &[1, 2],
            &SimConfig {
                trials: 100,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(report.joint_errors, 0);
    }

    #[test]
    fn common_block_over_budget_is_rejected() {
        // 0.55n common bits need 2·0.55n = 1.1n phase-1 symbols.
        match scheme_at(0.55, 0.0, 2000) {
            Err(Error::RateBudget(msg)) => assert!(msg.contains("phase-1"), "{}", msg),
            other => panic!("expected rate-budget error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn achievable_rate_has_small_error() {
        let scheme = scheme_at(0.0, 0.45, 2000).unwrap();
        let channel = section5_channel(0.5);
        let report = simulate(
            &scheme,
            &channel,
            &[1, 2],
            &SimConfig {
                trials: 1000,
                seed: 7,
                workers: 2,
                log_access: false,
            },
        )
        .unwrap();
        assert!(
            report.joint_error_rate < 0.01,
            "joint error {} too high",
            report.joint_error_rate
        );
        assert!(report.demands[0].errors == 0, "identity receiver reads directly");
    }

    #[test]
    fn unachievable_rate_fails_often() {
        // 0.55n unknowns against ≈ 0.5n unerased equations; receiver 1 also
        // misses the systematic tail at its deadline.
        let scheme = scheme_at(0.0, 0.55, 2000).unwrap();
        let channel = section5_channel(0.5);
        let report = simulate(
            &scheme,
            &channel,
            &[1, 2],
            &SimConfig {
                trials: 500,
                seed: 7,
                workers: 1,
                log_access: false,
            },
        )
        .unwrap();
        assert!(
            report.joint_error_rate > 0.5,
            "joint error {} unexpectedly low",
            report.joint_error_rate
        );
    }

    #[test]
    fn noiseless_channel_decodes_exactly() {
        let scheme = build_two_phase_erasure_scheme(&TwoPhaseSchemeSpec {
            common_rate: 0.0,
            private_rate: 0.45,
            sigma: (0.5, 1.0),
            n: 2000,
            eps_weak: 0.0,
            codebook_seed: 99,
        })
        .unwrap();
        let channel = section5_channel(0.0);
        let report = simulate(
            &scheme,
            &channel,
            &[1, 2],
            &SimConfig {
                trials: 200,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(report.joint_errors, 0);
    }

    #[test]
    fn mixed_allocation_decodes() {
        let scheme = scheme_at(0.1, 0.2, 2000).unwrap();
        let channel = section5_channel(0.5);
        let report = simulate(
            &scheme,
            &channel,
            &[1, 2],
            &SimConfig {
                trials: 500,
                seed: 3,
                workers: 1,
                log_access: false,
            },
        )
        .unwrap();
        assert!(
            report.joint_error_rate < 0.05,
            "interior point error {} too high",
            report.joint_error_rate
        );
    }

    #[test]
    fn reports_are_deterministic_and_worker_invariant() {
        let scheme = scheme_at(0.0, 0.45, 1000).unwrap();
        let channel = section5_channel(0.5);
        let base = SimConfig {
            trials: 300,
            seed: 11,
            workers: 1,
            log_access: false,
        };
        let a = simulate(&scheme, &channel, &[1, 2], &base).unwrap();
        let b = simulate(&scheme, &channel, &[1, 2], &base).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let sharded = SimConfig {
            workers: 3,
            ..base
        };
        let c = simulate(&scheme, &channel, &[1, 2], &sharded).unwrap();
        assert_eq!(a.to_json(), c.to_json());
        let other_seed = SimConfig {
            seed: 12,
            ..base
        };
        let d = simulate(&scheme, &channel, &[1, 2], &other_seed).unwrap();
        assert_ne!(a.to_json(), d.to_json());
    }

    #[test]
    fn decoders_respect_deadlines() {
        let scheme = scheme_at(0.1, 0.3, 1000).unwrap();
        let channel = section5_channel(0.5);
        let report = simulate(
            &scheme,
            &channel,
            &[1, 2],
            &SimConfig {
                trials: 50,
                seed: 5,
                workers: 1,
                log_access: true,
            },
        )
        .unwrap();
        for d in &report.demands {
            assert!(
                d.max_symbol_read <= d.deadline,
                "{} at receiver {} read symbol {} past deadline {}",
                d.block,
                d.receiver,
                d.max_symbol_read,
                d.deadline
            );
        }
    }

    #[test]
    fn error_shrinks_with_blocklength() {
        let channel = section5_channel(0.5);
        let config = SimConfig {
            trials: 400,
            seed: 21,
            workers: 2,
            log_access: false,
        };
        let small = simulate(&scheme_at(0.0, 0.45, 1000).unwrap(), &channel, &[1, 2], &config)
            .unwrap();
        let large = simulate(&scheme_at(0.0, 0.45, 4000).unwrap(), &channel, &[1, 2], &config)
            .unwrap();
        assert!(
            large.joint_error_rate
                <= small.joint_error_rate + 2.0 * small.joint_half_width + 1e-12,
            "error grew with blocklength: {} vs {}",
            large.joint_error_rate,
            small.joint_error_rate
        );
    }

    #[test]
    fn claim1_rescaling_agrees_trial_by_trial() {
        let scheme = scheme_at(0.0, 0.45, 2000).unwrap();
        let channel = section5_channel(0.5);
        let config = SimConfig {
            trials: 200,
            seed: 7,
            workers: 2,
            log_access: false,
        };
        let report =
            verify_claim1_scaling(&scheme, &channel, &[1, 2], &config, 2.0, None).unwrap();
        assert_eq!(report.agreements, 200);
        assert!((report.agreement_rate - 1.0).abs() < 1e-12);
        assert_eq!(report.rescaled.n, 1000);
        assert_eq!(report.base.joint_errors, report.rescaled.joint_errors);

        let identity = verify_claim1_scaling(&scheme, &channel, &[1, 2], &config, 1.0, None)
            .unwrap();
        assert_eq!(identity.agreements, 200);
    }

    #[test]
    fn claim1_decoupled_seeds_agree_statistically() {
        let scheme = scheme_at(0.0, 0.45, 2000).unwrap();
        let channel = section5_channel(0.5);
        let config = SimConfig {
            trials: 400,
            seed: 7,
            workers: 2,
            log_access: false,
        };
        let report =
            verify_claim1_scaling(&scheme, &channel, &[1, 2], &config, 2.0, Some(1234)).unwrap();
        assert!(!report.coupled_seeds);
        let diff = (report.base.joint_error_rate - report.rescaled.joint_error_rate).abs();
        let band = report.base.joint_half_width + report.rescaled.joint_half_width + 1e-9;
        assert!(diff <= band, "rates differ beyond confidence bands: {}", diff);
    }

    #[test]
    fn claim1_rejects_non_integral_alpha() {
        let scheme = scheme_at(0.0, 0.45, 2000).unwrap();
        let channel = section5_channel(0.5);
        let config = SimConfig {
            trials: 10,
            ..Default::default()
        };
        assert!(matches!(
            verify_claim1_scaling(&scheme, &channel, &[1, 2], &config, 3.0, None),
            Err(Error::NonIntegralRescale(_))
        ));
    }

    #[test]
    fn zero_trials_is_an_error() {
        let scheme = scheme_at(0.0, 0.45, 1000).unwrap();
        let channel = section5_channel(0.5);
        let config = SimConfig {
            trials: 0,
            ..Default::default()
        };
        assert!(matches!(
            simulate(&scheme, &channel, &[1, 2], &config),
            Err(Error::NoTrials)
        ));
    }

    #[test]
    fn non_erasure_channel_rejected() {
        let bsc = Channel::from_receiver_tables(
            vec![2, 1, 1],
            vec![1, 2, 2],
            vec![
                None,
                Some(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
                Some(vec![vec![0.9, 0.1], vec![0.1, 0.9]]),
            ],
        )
        .unwrap();
        let _ = Arc::new(bsc.clone());
        let scheme = scheme_at(0.0, 0.3, 1000).unwrap();
        assert!(matches!(
            simulate(&scheme, &bsc, &[1, 2], &SimConfig::default()),
            Err(Error::UnsupportedChannel(_))
        ));
    }
}

#[cfg(test)]
mod bench_probe {
    use super::*;
    use std::time::{Duration, Instant};

    #[test]
    #[ignore]
    fn probe_decode_phases() {
        let scheme = build_two_phase_erasure_scheme(&TwoPhaseSchemeSpec {
            common_rate: 0.0,
            private_rate: 0.45,
            sigma: (0.5, 1.0),
            n: 2000,
            eps_weak: 0.5,
            codebook_seed: 7,
        })
        .unwrap();
        let trials = 1000u64;
        let mut t_draw = Duration::ZERO;
        let mut t_known = Duration::ZERO;
        let mut t_rows = Duration::ZERO;
        let mut t_solve = Duration::ZERO;
        let mut system = Gf2System::new();
        let mut compact_cols: Vec<usize> = Vec::new();
        let block = &scheme.blocks[0];
        let words = block.bits.div_ceil(64);
        let mut fails = 0u64;
        for trial in 0..trials {
            let t0 = Instant::now();
            let msg = CounterRng::new(7, trial, STREAM_MESSAGE).next_bit_words(block.bits);
            let mut rng = CounterRng::new(7, trial, STREAM_ERASURE + 1);
            let erased: Vec<bool> = (0..scheme.symbols).map(|_| rng.next_bool(0.5)).collect();
            t_draw += t0.elapsed();

            let t1 = Instant::now();
            let mut known = vec![0u64; words];
            for sym in block.systematic.clone() {
                if !erased[sym] {
                    let bit = sym - block.systematic.start;
                    known[bit / 64] |= 1 << (bit % 64);
                }
            }
            let unknown_mask: Vec<u64> = {
                let mut m = vec![u64::MAX; words];
                if block.bits % 64 != 0 {
                    m[words - 1] = (1u64 << (block.bits % 64)) - 1;
                }
                m.iter().zip(&known).map(|(f, k)| f & !k).collect()
            };
            let unknown_cols: Vec<usize> = (0..block.bits)
                .filter(|&b| unknown_mask[b / 64] >> (b % 64) & 1 == 1)
                .collect();
            t_known += t1.elapsed();

            let t2 = Instant::now();
            system.reset(unknown_cols.len().div_ceil(64));
            for seg in scheme.parities.iter().filter(|s| s.block == 0) {
                for (off, sym) in seg.range.clone().enumerate() {
                    if erased[sym] {
                        continue;
                    }
                    let support = &seg.supports[off];
                    let mut rhs = false;
                    for w in 0..words {
                        rhs ^= ((support[w] & msg[w]).count_ones() & 1) == 1;
                        rhs ^= ((support[w] & known[w] & msg[w]).count_ones() & 1) == 1;
                    }
                    system.push_row_compressed(support, &unknown_mask, rhs);
                }
            }
            t_rows += t2.elapsed();

            let t3 = Instant::now();
            compact_cols.clear();
            compact_cols.extend(0..unknown_cols.len());
            if system.solve(&compact_cols).is_none() {
                fails += 1;
            }
            t_solve += t3.elapsed();
        }
        let n = trials as u32;
        println!(
            "draw {:?} known {:?} rows {:?} solve {:?} (fails {})",
            t_draw / n,
            t_known / n,
            t_rows / n,
            t_solve / n,
            fails
        );
    }
}
