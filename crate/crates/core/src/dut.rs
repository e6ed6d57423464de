//! The device under test: the MiniRV machine with control-register coverage
//! instrumentation and a configurable planted-bug catalog.
//!
//! Coverage is DiFuzzRTL-style: at every machine step the packed
//! control-state vector is hashed (32-bit FNV-1a) and inserted into a set;
//! coverage is the set's cardinality. The vector is 32 named control
//! registers wide, fixed for a whole campaign.
//!
//! Each catalog entry perturbs exactly one documented behavior. With an
//! empty catalog the DUT is the golden model.

use alloc::string::String;
use alloc::vec::Vec;

use alloc::collections::BTreeSet;

use crate::isa::{Csr, InputSequence, Instruction, Opcode, PrivilegeLevel};
use crate::machine::{EffectsLog, ExecOutcome, Machine};

/// Width of the control-state vector in control registers.
pub const CONTROL_REGS: usize = 32;

/// Set of distinct control-state hashes observed; coverage is `count()`.
/// Monotone nondecreasing within a campaign.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CoverageMap {
    seen: BTreeSet<u32>,
}

impl CoverageMap {
    pub fn new() -> Self {
        CoverageMap { seen: BTreeSet::new() }
    }

    pub fn insert(&mut self, hash: u32) -> bool {
        self.seen.insert(hash)
    }

    pub fn count(&self) -> u64 {
        self.seen.len() as u64
    }

    pub fn contains(&self, hash: u32) -> bool {
        self.seen.contains(&hash)
    }

    pub fn is_subset_of(&self, other: &CoverageMap) -> bool {
        self.seen.is_subset(&other.seen)
    }

    /// Sorted hash list, for the regression dump format.
    pub fn sorted_hashes(&self) -> impl Iterator<Item = u32> + '_ {
        self.seen.iter().copied()
    }
}

/// Violated precondition of [`coverage_delta`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SubsetViolation;

impl core::fmt::Display for SubsetViolation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str("`before` is not a subset of `after`")
    }
}

impl core::error::Error for SubsetViolation {}

/// Coverage gained between two snapshots: `|after| - |before|`.
/// Requires `before ⊆ after`.
pub fn coverage_delta(before: &CoverageMap, after: &CoverageMap) -> Result<u64, SubsetViolation> {
    if !before.is_subset_of(after) {
        return Err(SubsetViolation);
    }
    Ok(after.count() - before.count())
}

/// One control-state snapshot: 32 control registers.
///
/// Field widths: priv (1 reg), interrupt-pending I1..I9 (9), exception-
/// pending E1..E14 (14), handler depth (1), mstatus MIE/MPIE (2),
/// mstatus MPP (2), fp-dirty (1), branch-taken (1), carry and overflow (2).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ControlStateVector {
    pub priv_level: PrivilegeLevel,
    pub intr_pending: u16,
    pub exc_pending: u16,
    pub handler_depth: u8,
    pub mie: bool,
    pub mpie: bool,
    pub mpp: u8,
    pub fp_dirty: bool,
    pub branch_taken: bool,
    pub carry: bool,
    pub overflow: bool,
}

impl ControlStateVector {
    /// Pack into a fixed-width word (low 36 bits used).
    pub fn pack(&self) -> u64 {
        let mut v = 0u64;
        v |= self.priv_level as u64; // 2 bits
        v |= (self.intr_pending as u64 & 0x1ff) << 2; // 9
        v |= (self.exc_pending as u64 & 0x3fff) << 11; // 14
        v |= (self.handler_depth as u64 & 0x7) << 25; // 3
        v |= (self.mie as u64) << 28;
        v |= (self.mpie as u64) << 29;
        v |= (self.mpp as u64 & 0x3) << 30; // 2
        v |= (self.fp_dirty as u64) << 32;
        v |= (self.branch_taken as u64) << 33;
        v |= (self.carry as u64) << 34;
        v |= (self.overflow as u64) << 35;
        v
    }

    /// 32-bit FNV-1a over the packed vector.
    pub fn hash(&self) -> u32 {
        crate::fnv1a_32(&self.pack().to_le_bytes())
    }
}

/// The twelve planted bugs. Each instantiates one real-world bug class on
/// MiniRV; see [`BugId::description`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
#[allow(clippy::upper_case_acronyms)]
pub enum BugId {
    B1,
    B2,
    B3,
    B4,
    B5,
    B6,
    B7,
    B8,
    B9,
    B10,
    B11,
    B12,
}

impl BugId {
    pub const ALL: [BugId; 12] = [
        BugId::B1,
        BugId::B2,
        BugId::B3,
        BugId::B4,
        BugId::B5,
        BugId::B6,
        BugId::B7,
        BugId::B8,
        BugId::B9,
        BugId::B10,
        BugId::B11,
        BugId::B12,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BugId::B1 => "B1",
            BugId::B2 => "B2",
            BugId::B3 => "B3",
            BugId::B4 => "B4",
            BugId::B5 => "B5",
            BugId::B6 => "B6",
            BugId::B7 => "B7",
            BugId::B8 => "B8",
            BugId::B9 => "B9",
            BugId::B10 => "B10",
            BugId::B11 => "B11",
            BugId::B12 => "B12",
        }
    }

    pub fn from_name(s: &str) -> Option<BugId> {
        BugId::ALL.iter().copied().find(|b| b.name() == s)
    }

    pub fn description(self) -> &'static str {
        match self {
            BugId::B1 => "instruction count inaccurate when minstret is written by software",
            BugId::B2 => "static rounding ignored for fdiv and fsqrt",
            BugId::B3 => "fp instruction with invalid rm field does not raise exception",
            BugId::B4 => "fp-dirty status set by the compare-and-branch instruction",
            BugId::B5 => "incorrect carry flag generation on subtract",
            BugId::B6 => "missing privilege check on csr access",
            BugId::B7 => "wrong pc saved on illegal-instruction exception",
            BugId::B8 => "decoder rejects shr with high shift-amount register index",
            BugId::B9 => "incorrect forwarding of writes to register zero",
            BugId::B10 => "overflow flag update missing for mul",
            BugId::B11 => "overflow flag generated from carry on add",
            BugId::B12 => "ebreak does not increase instruction count",
        }
    }

    /// A deterministic hand-written input that makes this bug diverge from
    /// the golden model.
    pub fn witness(self) -> InputSequence {
        use crate::isa::EventSlot as S;
        let i = |ins: Instruction| S::Instr(ins);
        let slots: Vec<crate::isa::EventSlot> = match self {
            // csrrw minstret<-0: golden final count 1 (write, then ebreak);
            // the buggy core also counts the write cycle.
            BugId::B1 => alloc::vec![
                i(Instruction::csr(Opcode::Csrrw, 1, Csr::Minstret, 0)),
                i(Instruction::bare(Opcode::Ebreak)),
            ],
            // 1.0 / 3.0 toward-zero differs from nearest-even in the last bit.
            BugId::B2 => alloc::vec![
                i(Instruction::fp2(Opcode::Fdiv, 0, 1, 2, 1)),
                i(Instruction::bare(Opcode::Ebreak)),
            ],
            // rm=5 must trap; the buggy core executes it.
            BugId::B3 => alloc::vec![
                i(Instruction::fp2(Opcode::Fadd, 0, 1, 2, 5)),
                i(Instruction::bare(Opcode::Ebreak)),
            ],
            // Any branch: the buggy core dirties FP state on compare.
            BugId::B4 => alloc::vec![
                i(Instruction::beq(0, 0, 1)),
                i(Instruction::bare(Opcode::Ebreak)),
            ],
            // 0 - 0 has no borrow; the buggy core inverts the carry.
            BugId::B5 => alloc::vec![
                i(Instruction::alu(Opcode::Sub, 1, 0, 0)),
                i(Instruction::bare(Opcode::Ebreak)),
            ],
            // Drop to user mode, then touch a csr: golden traps, buggy
            // core performs the access.
            BugId::B6 => alloc::vec![
                i(Instruction::jal(1, 2)),
                i(Instruction::csr(Opcode::Csrrs, 2, Csr::Mscratch, 0)),
                i(Instruction::csr(Opcode::Csrrw, 0, Csr::Mepc, 1)),
                i(Instruction::csr(Opcode::Csrrw, 0, Csr::Mstatus, 0)),
                i(Instruction::bare(Opcode::Mret)),
                i(Instruction::bare(Opcode::Ebreak)),
            ],
            // An illegal instruction records the wrong mepc and the handler
            // return skips the next instruction.
            BugId::B7 => alloc::vec![
                i(Instruction::fp2(Opcode::Fadd, 0, 1, 2, 5)),
                i(Instruction::jal(3, 1)),
                i(Instruction::bare(Opcode::Ebreak)),
            ],
            // shr with rs2 index >= 8.
            BugId::B8 => alloc::vec![
                i(Instruction::alu(Opcode::Shr, 1, 2, 9)),
                i(Instruction::bare(Opcode::Ebreak)),
            ],
            // jal gives x1 a nonzero link; add "writes" it to x0; the next
            // instruction reads the forwarded value on the buggy core.
            BugId::B9 => alloc::vec![
                i(Instruction::jal(1, 1)),
                i(Instruction::alu(Opcode::Add, 0, 1, 1)),
                i(Instruction::alu(Opcode::Add, 3, 0, 0)),
                i(Instruction::bare(Opcode::Ebreak)),
            ],
            // Square 2 up to 2^32: the last mul overflows and the golden
            // model sets the overflow flag; the buggy core leaves it clear.
            BugId::B10 => alloc::vec![
                i(Instruction::jal(1, 1)),
                i(Instruction::alu(Opcode::Add, 1, 1, 1)),
                i(Instruction::alu(Opcode::Mul, 1, 1, 1)),
                i(Instruction::alu(Opcode::Mul, 1, 1, 1)),
                i(Instruction::alu(Opcode::Mul, 1, 1, 1)),
                i(Instruction::alu(Opcode::Mul, 1, 1, 1)),
                i(Instruction::alu(Opcode::Mul, 1, 1, 1)),
                i(Instruction::bare(Opcode::Ebreak)),
            ],
            // 0x7fffffff + 1 overflows signed but carries nothing; the buggy
            // core copies the carry into the overflow flag.
            BugId::B11 => alloc::vec![
                i(Instruction::jal(1, 1)),
                i(Instruction::alu(Opcode::Sub, 3, 0, 1)),
                i(Instruction::alu(Opcode::Shr, 3, 3, 1)),
                i(Instruction::alu(Opcode::Add, 4, 3, 1)),
                i(Instruction::bare(Opcode::Ebreak)),
            ],
            BugId::B12 => alloc::vec![i(Instruction::bare(Opcode::Ebreak))],
        };
        InputSequence::new(slots, crate::isa::SequenceLimits::default())
            .expect("witnesses are valid sequences")
    }
}

impl core::fmt::Display for BugId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Enabled planted bugs. Empty catalog ⇒ DUT ≡ golden model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BugCatalog {
    bits: u16,
}

impl BugCatalog {
    pub fn empty() -> Self {
        BugCatalog { bits: 0 }
    }

    pub fn all() -> Self {
        BugCatalog { bits: (1 << 12) - 1 }
    }

    pub fn single(bug: BugId) -> Self {
        let mut c = BugCatalog::empty();
        c.insert(bug);
        c
    }

    pub fn insert(&mut self, bug: BugId) {
        self.bits |= 1 << bug as u16;
    }

    pub fn enabled(&self, bug: BugId) -> bool {
        self.bits & (1 << bug as u16) != 0
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = BugId> + '_ {
        BugId::ALL.iter().copied().filter(|b| self.enabled(*b))
    }

    /// Parse `B1,B3,B7`, a range `B1..B12`, `all`, or `none`.
    pub fn parse(spec: &str) -> Result<BugCatalog, String> {
        let spec = spec.trim();
        if spec.eq_ignore_ascii_case("all") {
            return Ok(BugCatalog::all());
        }
        if spec.is_empty() || spec.eq_ignore_ascii_case("none") {
            return Ok(BugCatalog::empty());
        }
        let mut cat = BugCatalog::empty();
        for part in spec.split(',') {
            let part = part.trim();
            if let Some((lo, hi)) = part.split_once("..") {
                let lo = BugId::from_name(lo.trim())
                    .ok_or_else(|| alloc::format!("unknown bug id `{lo}`"))?;
                let hi = BugId::from_name(hi.trim())
                    .ok_or_else(|| alloc::format!("unknown bug id `{hi}`"))?;
                for b in BugId::ALL {
                    if b >= lo && b <= hi {
                        cat.insert(b);
                    }
                }
            } else {
                let b = BugId::from_name(part)
                    .ok_or_else(|| alloc::format!("unknown bug id `{part}`"))?;
                cat.insert(b);
            }
        }
        Ok(cat)
    }
}

/// Execute on the DUT, inserting a control-state hash per step into `cov`.
/// Returns the outcome and the number of newly covered states.
pub fn run_dut(
    seq: &InputSequence,
    budget: u64,
    bugs: BugCatalog,
    cov: &mut CoverageMap,
) -> (ExecOutcome, u64) {
    let before = cov.count();
    let outcome = Machine::new(seq, bugs).with_coverage(cov).run(budget);
    let delta = cov.count() - before;
    (outcome, delta)
}

/// DUT execution that also records per-slot effects (used for replays that
/// feed relationship extraction).
pub fn run_dut_with_effects(
    seq: &InputSequence,
    budget: u64,
    bugs: BugCatalog,
    cov: &mut CoverageMap,
    effects: &mut EffectsLog,
) -> (ExecOutcome, u64) {
    let before = cov.count();
    let outcome = Machine::new(seq, bugs)
        .with_coverage(cov)
        .with_effects(effects)
        .run(budget);
    let delta = cov.count() - before;
    (outcome, delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::golden::run_golden;
    use crate::isa::{random_sequence, SequenceLimits};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_catalog_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut cov = CoverageMap::new();
        for _ in 0..1000 {
            let seq = random_sequence(&mut rng, 25, SequenceLimits::default());
            let golden = run_golden(&seq, 400);
            let (dut, _) = run_dut(&seq, 400, BugCatalog::empty(), &mut cov);
            assert_eq!(golden.state, dut.state, "{}", seq.to_text());
            assert_eq!(golden.trap_log, dut.trap_log);
        }
    }

    #[test]
    fn each_witness_diverges_under_its_bug_only() {
        for bug in BugId::ALL {
            let w = bug.witness();
            let golden = run_golden(&w, 1000);
            let mut cov = CoverageMap::new();
            let (dut, _) = run_dut(&w, 1000, BugCatalog::single(bug), &mut cov);
            let diverges = golden.state != dut.state
                || golden.trap_log.iter().map(|t| t.cause).collect::<alloc::vec::Vec<_>>()
                    != dut.trap_log.iter().map(|t| t.cause).collect::<alloc::vec::Vec<_>>();
            assert!(diverges, "{bug} witness did not diverge");
            // The same witness under an empty catalog must match.
            let mut cov2 = CoverageMap::new();
            let (clean, _) = run_dut(&w, 1000, BugCatalog::empty(), &mut cov2);
            assert_eq!(golden.state, clean.state, "{bug} clean run diverged");
        }
    }

    #[test]
    fn bug_locality_negative_inputs() {
        // A bland arithmetic input that avoids every trigger: no sub, no
        // shr-high, no fp, no branch, no csr, no ebreak-sensitivity checks
        // other than state equality at the end of the budget.
        let seq = InputSequence::from_instrs(alloc::vec![
            Instruction::alu(Opcode::Add, 1, 2, 3),
            Instruction::alu(Opcode::Xor, 4, 1, 2),
            Instruction::alu(Opcode::Or, 5, 4, 1),
            Instruction::alu(Opcode::And, 6, 5, 4),
            Instruction::load(7, 0, 8),
            Instruction::store(7, 0, 16),
            Instruction::nop(),
        ])
        .unwrap();
        let golden = run_golden(&seq, 100);
        for bug in BugId::ALL {
            let mut cov = CoverageMap::new();
            let (dut, _) = run_dut(&seq, 100, BugCatalog::single(bug), &mut cov);
            assert_eq!(golden.state, dut.state, "{bug} perturbed a non-trigger input");
        }
    }

    #[test]
    fn coverage_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let seq = random_sequence(&mut rng, 40, SequenceLimits::default());
        let mut a = CoverageMap::new();
        let mut b = CoverageMap::new();
        run_dut(&seq, 400, BugCatalog::empty(), &mut a);
        run_dut(&seq, 400, BugCatalog::empty(), &mut b);
        assert_eq!(a, b);
        assert!(a.count() > 0);
    }

    #[test]
    fn coverage_delta_contract() {
        let mut a = CoverageMap::new();
        let mut b = CoverageMap::new();
        assert_eq!(coverage_delta(&a, &b), Ok(0));
        b.insert(1);
        b.insert(2);
        b.insert(3);
        assert_eq!(coverage_delta(&a, &b), Ok(3));
        a.insert(99);
        assert_eq!(coverage_delta(&a, &b), Err(SubsetViolation));
    }

    #[test]
    fn catalog_parsing() {
        assert_eq!(BugCatalog::parse("all").unwrap(), BugCatalog::all());
        assert_eq!(BugCatalog::parse("none").unwrap(), BugCatalog::empty());
        let c = BugCatalog::parse("B1,B3,B7").unwrap();
        assert!(c.enabled(BugId::B1) && c.enabled(BugId::B3) && c.enabled(BugId::B7));
        assert!(!c.enabled(BugId::B2));
        assert_eq!(BugCatalog::parse("B1..B12").unwrap(), BugCatalog::all());
        assert!(BugCatalog::parse("B13").is_err());
    }

    #[test]
    fn control_vector_packs_distinctly() {
        let base = ControlStateVector {
            priv_level: PrivilegeLevel::Machine,
            intr_pending: 0,
            exc_pending: 0,
            handler_depth: 0,
            mie: true,
            mpie: false,
            mpp: 0,
            fp_dirty: false,
            branch_taken: false,
            carry: false,
            overflow: false,
        };
        let mut other = base;
        other.intr_pending = 1 << 6;
        assert_ne!(base.pack(), other.pack());
        assert_ne!(base.hash(), other.hash());
    }
}
