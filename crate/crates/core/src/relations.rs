//! Relationship extraction: turns executed inputs into instruction groups.
//!
//! Software relationships are data-flow (write-then-read register
//! dependence within an 8-slot window, chained transitively so a def-use
//! chain forms one group) and control-flow (a taken jump and its target).
//! Hardware relationships collect instructions around privilege-changing
//! event deliveries, CSR writes that made the timer comparator fire,
//! misaligned memory accesses that trapped, and accesses to the trap CSRs.
//!
//! Inputs are processed in descending coverage order and the emitted group
//! list is deduplicated by member set, so extraction is deterministic for
//! a fixed history.

use alloc::vec::Vec;

use crate::golden::run_golden_with_effects;
use crate::isa::{Csr, EventSlot, InputSequence, Instruction};
use crate::machine::EffectsLog;

/// Def-use window: a read pairs with a write at most this many slots back.
const DATAFLOW_WINDOW: usize = 8;

/// One executed input with replay-derived per-slot effects.
#[derive(Clone, Debug)]
pub struct ExecutedInput {
    pub id: u64,
    pub seq: InputSequence,
    pub cov_gain: u64,
    pub effects: EffectsLog,
}

impl ExecutedInput {
    /// Build by replaying `seq` on the golden model with effect recording.
    pub fn replay(id: u64, seq: InputSequence, cov_gain: u64, budget: u64) -> Self {
        let mut effects = EffectsLog(Vec::new());
        let _ = run_golden_with_effects(&seq, budget, &mut effects);
        ExecutedInput { id, seq, cov_gain, effects }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum GroupKind {
    DataFlow,
    ControlFlow,
    Hardware,
}

/// A related-instruction cluster; the "ant" unit in the distiller.
#[derive(Clone, Debug)]
pub struct InstructionGroup {
    /// Source input id; members never span two inputs.
    pub source: u64,
    /// Ordered member slot indices within the source input.
    pub members: Vec<usize>,
    pub kind: GroupKind,
    /// Member count.
    pub span_len: usize,
    /// Coverage attributed to the source input.
    pub cov_score: u64,
    /// Materialized member slots, ready to append.
    pub slots: Vec<EventSlot>,
}

impl InstructionGroup {
    fn new(source: &ExecutedInput, kind: GroupKind, members: Vec<usize>) -> Self {
        let slots = members.iter().map(|&m| source.seq.slots()[m]).collect();
        InstructionGroup {
            source: source.id,
            span_len: members.len(),
            members,
            kind,
            cov_score: source.cov_gain,
            slots,
        }
    }

    /// Instruction count among the members.
    pub fn instr_count(&self) -> usize {
        self.slots.iter().filter(|s| s.is_instr()).count()
    }

    /// The member slots as a standalone executable sequence: a NOP is
    /// prefixed when the group starts with (or consists only of) events.
    pub fn replay_slots(&self) -> Vec<EventSlot> {
        let mut out = self.slots.clone();
        if !matches!(out.first(), Some(EventSlot::Instr(_))) {
            out.insert(0, EventSlot::Instr(Instruction::nop()));
        }
        out
    }
}

/// Extraction over an empty history.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmptyHistory;

impl core::fmt::Display for EmptyHistory {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str("relationship extraction needs a non-empty history")
    }
}

impl core::error::Error for EmptyHistory {}

/// Extract instruction groups from the executed-input history.
///
/// Inputs are visited in descending `cov_gain` order (ties by input id);
/// per input the data-flow, control-flow, and hardware groups are emitted
/// in slot order and deduplicated by member set.
pub fn extract(history: &[ExecutedInput]) -> Result<Vec<InstructionGroup>, EmptyHistory> {
    if history.is_empty() {
        return Err(EmptyHistory);
    }
    let mut order: Vec<usize> = (0..history.len()).collect();
    order.sort_by(|&a, &b| {
        history[b]
            .cov_gain
            .cmp(&history[a].cov_gain)
            .then(history[a].id.cmp(&history[b].id))
    });

    let mut out: Vec<InstructionGroup> = Vec::new();
    let mut seen: alloc::collections::BTreeSet<(u64, Vec<usize>)> =
        alloc::collections::BTreeSet::new();
    for idx in order {
        let input = &history[idx];
        let mut groups = dataflow_groups(input);
        groups.extend(controlflow_groups(input));
        groups.extend(hardware_relations(input));
        for g in groups {
            let key = (g.source, g.members.clone());
            if seen.insert(key) {
                out.push(g);
            }
        }
    }
    Ok(out)
}

/// Maximal write-then-read chains over the register file, one group per
/// chain of two or more instructions.
fn dataflow_groups(input: &ExecutedInput) -> Vec<InstructionGroup> {
    let n = input.seq.slots().len();
    let mut uf = UnionFind::new(n);
    // Register space: bits 1..16 integer (x0 excluded), 16..24 fp.
    for reg in 1..24u32 {
        let mask = 1u32 << reg;
        let mut last_write: Option<usize> = None;
        for j in 0..n {
            let eff = &input.effects.0[j];
            if !eff.executed {
                continue;
            }
            if eff.regs_read & mask != 0 {
                if let Some(i) = last_write {
                    if j - i <= DATAFLOW_WINDOW {
                        uf.union(i, j);
                    }
                }
            }
            if eff.regs_written & mask != 0 {
                last_write = Some(j);
            }
        }
    }
    // Components of size >= 2, members in slot order.
    let mut components: alloc::collections::BTreeMap<usize, Vec<usize>> =
        alloc::collections::BTreeMap::new();
    for j in 0..n {
        let root = uf.find(j);
        if root != j || uf.size(j) > 1 {
            components.entry(root).or_default().push(j);
        }
    }
    components
        .into_values()
        .filter(|m| m.len() >= 2)
        .map(|m| InstructionGroup::new(input, GroupKind::DataFlow, m))
        .collect()
}

/// One group per executed (jump, target) pair.
fn controlflow_groups(input: &ExecutedInput) -> Vec<InstructionGroup> {
    let mut out = Vec::new();
    for (j, eff) in input.effects.0.iter().enumerate() {
        if let Some(t) = eff.jump_target {
            let t = t as usize;
            if t != j && t < input.seq.slots().len() {
                let mut members = alloc::vec![j, t];
                members.sort_unstable();
                out.push(InstructionGroup::new(input, GroupKind::ControlFlow, members));
            }
        }
    }
    out
}

/// Hardware-relationship groups of one input.
///
/// Emits: (a) the instructions adjacent to a privilege-changing event
/// delivery, together with the event; (b) CSR writes to mtime/mtimecmp
/// that made the timer pend; (c) misaligned loads/stores that trapped;
/// (d) accesses to the trap-handling CSRs (mcause, mepc, mstatus).
pub fn hardware_relations(input: &ExecutedInput) -> Vec<InstructionGroup> {
    let slots = input.seq.slots();
    let mut out = Vec::new();
    for (j, eff) in input.effects.0.iter().enumerate() {
        match &slots[j] {
            EventSlot::Instr(ins) => {
                if !eff.executed {
                    continue;
                }
                let misaligned_trap = matches!(
                    eff.raised,
                    Some(crate::machine::EXC_LOAD_MISALIGNED)
                        | Some(crate::machine::EXC_STORE_MISALIGNED)
                ) && ins.opcode.is_mem();
                if eff.timer_pend_caused {
                    out.push(InstructionGroup::new(input, GroupKind::Hardware, alloc::vec![j]));
                } else if misaligned_trap {
                    out.push(InstructionGroup::new(input, GroupKind::Hardware, alloc::vec![j]));
                } else if matches!(
                    eff.csr_touched,
                    Some(Csr::Mcause) | Some(Csr::Mepc) | Some(Csr::Mstatus)
                ) {
                    out.push(InstructionGroup::new(input, GroupKind::Hardware, alloc::vec![j]));
                }
            }
            _ => {
                // Event slot: a delivery that changed the privilege level
                // groups the event with its neighboring instructions.
                if let (Some(before), Some(after)) = (eff.priv_before, eff.priv_after) {
                    if before != after {
                        let mut members = Vec::new();
                        if let Some(prev) =
                            (0..j).rev().find(|&k| slots[k].is_instr())
                        {
                            members.push(prev);
                        }
                        members.push(j);
                        if let Some(next) =
                            (j + 1..slots.len()).find(|&k| slots[k].is_instr())
                        {
                            members.push(next);
                        }
                        out.push(InstructionGroup::new(input, GroupKind::Hardware, members));
                    }
                }
            }
        }
    }
    out
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), size: alloc::vec![1; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            core::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }

    fn size(&mut self, x: usize) -> usize {
        let r = self.find(x);
        self.size[r]
    }
}
