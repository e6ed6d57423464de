//! Input distillation with a variant ant-colony optimizer.
//!
//! Candidate instruction groups play the role of paths. Starting from an
//! empty candidate sequence, each iteration builds a probability table from
//! pheromone times coverage heuristic over the not-yet-appended groups,
//! roulette-selects one, appends its slots, and executes the grown sequence
//! through the campaign's own executor (so distillation coverage accrues to
//! the campaign). The loop stops when the average coverage — campaign
//! coverage divided by the candidate's instruction length — exceeds the
//! value captured when distillation was triggered, or at the iteration cap.
//!
//! Pheromone evaporates by `rho` and each walked group deposits the
//! reciprocal of its span. The deposit happens after the termination check,
//! so the final walker's deposit is unused; pheromone and the traversal set
//! reset on every invocation.

use alloc::vec::Vec;

use rand::Rng;

use crate::isa::{EventSlot, InputSequence, Instruction, SequenceLimits};
use crate::relations::InstructionGroup;

/// Trigger/trend window length: this many strictly decreasing consecutive
/// average-coverage samples mean "continuous decrease".
pub const TREND_WINDOW: usize = 5;

/// Rolling window of average-coverage samples, one per executed input.
/// Shared definition for the distillation trigger and the mutation
/// dispatcher's "coverage decreases" condition.
#[derive(Clone, Debug)]
pub struct TrendWindow {
    k: usize,
    samples: Vec<f64>,
}

impl TrendWindow {
    pub fn new(k: usize) -> Self {
        TrendWindow { k: k.max(2), samples: Vec::new() }
    }

    pub fn push(&mut self, avg_cov: f64) {
        if self.samples.len() == self.k {
            self.samples.remove(0);
        }
        self.samples.push(avg_cov);
    }

    /// True iff the window is full and strictly decreasing. A plateau breaks
    /// the run; fewer than `k` samples never trigger.
    pub fn decreasing(&self) -> bool {
        self.samples.len() == self.k
            && self.samples.windows(2).all(|w| w[1] < w[0])
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }

    pub fn last(&self) -> Option<f64> {
        self.samples.last().copied()
    }
}

/// Distillation trigger decision over a sample window.
pub fn should_trigger(window: &TrendWindow) -> bool {
    window.decreasing()
}

/// Per-group pheromone and heuristic values.
#[derive(Clone, Debug)]
pub struct PheromoneState {
    pher: Vec<f64>,
    heur: Vec<f64>,
    rho: f64,
}

impl PheromoneState {
    /// Pheromone starts at 1 for every group; the heuristic is the group's
    /// source-input coverage gain normalized to [0, 1] by the maximum.
    pub fn new(groups: &[InstructionGroup], rho: f64) -> Self {
        let max_cov = groups.iter().map(|g| g.cov_score).max().unwrap_or(0);
        let heur = groups
            .iter()
            .map(|g| {
                if max_cov == 0 {
                    0.0
                } else {
                    g.cov_score as f64 / max_cov as f64
                }
            })
            .collect();
        PheromoneState { pher: alloc::vec![1.0; groups.len()], heur, rho }
    }

    pub fn pheromone(&self, id: usize) -> f64 {
        self.pher[id]
    }

    pub fn heuristic(&self, id: usize) -> f64 {
        self.heur[id]
    }

    /// Evaporate everything, then deposit 1/length per walker.
    pub fn update(&mut self, walked: &[(usize, usize)]) {
        for p in &mut self.pher {
            *p *= 1.0 - self.rho;
        }
        for &(id, len) in walked {
            debug_assert!(len >= 1);
            self.pher[id] += 1.0 / len as f64;
        }
        debug_assert!(self.pher.iter().all(|&p| p > 0.0 || self.rho >= 1.0));
    }
}

/// Selection probabilities over the untraversed candidates:
/// `p_j = pher_j * h_j / Σ_k pher_k * h_k`. When every product is zero the
/// table falls back to uniform.
pub fn probability_table(st: &PheromoneState, candidates: &[usize]) -> Vec<(usize, f64)> {
    debug_assert!(!candidates.is_empty());
    let mass: f64 = candidates.iter().map(|&j| st.pher[j] * st.heur[j]).sum();
    let table: Vec<(usize, f64)> = if mass > 0.0 {
        candidates
            .iter()
            .map(|&j| (j, st.pher[j] * st.heur[j] / mass))
            .collect()
    } else {
        let u = 1.0 / candidates.len() as f64;
        candidates.iter().map(|&j| (j, u)).collect()
    };
    debug_assert!((table.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() < 1e-12);
    table
}

/// Classic roulette-wheel selection over a normalized table.
pub fn roulette_select<R: Rng + ?Sized>(table: &[(usize, f64)], rng: &mut R) -> usize {
    debug_assert!(!table.is_empty());
    let draw: f64 = rng.gen::<f64>();
    let mut acc = 0.0;
    for &(id, p) in table {
        acc += p;
        if draw < acc {
            return id;
        }
    }
    // Accumulated rounding can leave a sliver past the last entry; take the
    // last candidate with nonzero probability.
    table
        .iter()
        .rev()
        .find(|(_, p)| *p > 0.0)
        .map(|&(id, _)| id)
        .unwrap_or(table[table.len() - 1].0)
}

/// Distillation failure: no candidate groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoGroups;

impl core::fmt::Display for NoGroups {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str("distillation needs a non-empty group list")
    }
}

impl core::error::Error for NoGroups {}

#[derive(Clone, Copy, Debug)]
pub struct DistillParams {
    pub rho: f64,
    pub max_iter: usize,
    pub limits: SequenceLimits,
}

impl Default for DistillParams {
    fn default() -> Self {
        DistillParams { rho: 0.5, max_iter: 64, limits: SequenceLimits::default() }
    }
}

/// Result of one distillation run.
#[derive(Clone, Debug)]
pub struct DistillRun {
    /// Group ids in append order.
    pub appended: Vec<usize>,
    /// The distilled sequence.
    pub seq: InputSequence,
    /// Instruction length of the distilled sequence (the algorithm's `m`).
    pub len: usize,
    pub base_avg_cov: f64,
    pub iterations: usize,
}

/// Run the distiller.
///
/// `exec` is the campaign's executor: it runs the candidate and returns the
/// campaign coverage count afterwards plus the new states this execution
/// contributed. The candidate grows by one group per iteration; event slots
/// that would exceed the caps are dropped on append.
///
/// Termination: the average has recovered only when this iteration's
/// execution actually increased coverage and the candidate's average
/// coverage exceeds the trigger-time base. Without the increase condition
/// any one-group candidate "recovers" vacuously (it is shorter than the
/// inputs that produced the base) and no group combination ever forms.
pub fn distill<R, F>(
    groups: &[InstructionGroup],
    params: &DistillParams,
    base_avg_cov: f64,
    rng: &mut R,
    mut exec: F,
) -> Result<DistillRun, NoGroups>
where
    R: Rng + ?Sized,
    F: FnMut(&InputSequence) -> (u64, u64),
{
    if groups.is_empty() {
        return Err(NoGroups);
    }
    let mut st = PheromoneState::new(groups, params.rho);
    let mut candidates: Vec<usize> = (0..groups.len()).collect();
    let mut appended: Vec<usize> = Vec::new();
    let mut slots: Vec<EventSlot> = Vec::new();
    let mut intr = 0usize;
    let mut exc = 0usize;
    let mut iterations = 0usize;
    let mut current: Option<InputSequence> = None;

    while iterations < params.max_iter && !candidates.is_empty() {
        let table = probability_table(&st, &candidates);
        let id = roulette_select(&table, rng);
        candidates.retain(|&c| c != id);
        appended.push(id);

        let before_len = slots.iter().filter(|s| s.is_instr()).count();
        for slot in &groups[id].slots {
            match slot {
                EventSlot::Interrupt { .. } => {
                    if intr < params.limits.max_intr as usize && !slots.is_empty() {
                        intr += 1;
                        slots.push(*slot);
                    }
                }
                EventSlot::Exception { .. } => {
                    if exc < params.limits.max_exc as usize && !slots.is_empty() {
                        exc += 1;
                        slots.push(*slot);
                    }
                }
                EventSlot::Instr(_) => slots.push(*slot),
            }
        }
        if slots.iter().filter(|s| s.is_instr()).count() == before_len {
            // Groups are never instruction-free in practice, but keep the
            // candidate executable regardless.
            slots.push(EventSlot::Instr(Instruction::nop()));
        }

        let seq = InputSequence::new(slots.clone(), params.limits)
            .expect("grown candidate stays within limits");
        let (cov, delta) = exec(&seq);
        iterations += 1;
        let len = seq.instr_len();
        current = Some(seq);

        let avg = cov as f64 / len as f64;
        if delta > 0 && avg > base_avg_cov {
            break;
        }
        st.update(&[(id, groups[id].span_len)]);
    }

    let seq = current.expect("at least one iteration ran");
    let len = seq.instr_len();
    Ok(DistillRun { appended, seq, len, base_avg_cov, iterations })
}
