//! The golden reference model: the MiniRV machine with no bugs and no
//! instrumentation. Its final architectural state is the ground truth the
//! DUT is cross-checked against.

use alloc::vec::Vec;

use crate::dut::BugCatalog;
use crate::isa::InputSequence;
use crate::machine::{EffectsLog, ExecOutcome, Machine, TraceLine};

/// Deterministic reference execution: identical inputs produce identical
/// outcomes. Stops at halt, end of sequence, or the retirement budget.
pub fn run_golden(seq: &InputSequence, budget: u64) -> ExecOutcome {
    Machine::new(seq, BugCatalog::empty()).run(budget)
}

/// Reference execution that records per-slot effects for relationship
/// extraction replays.
pub fn run_golden_with_effects(
    seq: &InputSequence,
    budget: u64,
    effects: &mut EffectsLog,
) -> ExecOutcome {
    Machine::new(seq, BugCatalog::empty()).with_effects(effects).run(budget)
}

/// Reference execution with the flag-gated trace dump: one line per
/// retirement (`pc opcode priv minstret`).
pub fn run_golden_with_trace(
    seq: &InputSequence,
    budget: u64,
    trace: &mut Vec<TraceLine>,
) -> ExecOutcome {
    Machine::new(seq, BugCatalog::empty()).with_trace(trace).run(budget)
}
