//! The MiniRV ISA: instructions, event slots, input sequences.
//!
//! MiniRV is a 21-opcode, 32-bit machine with 16 integer registers, 8
//! binary32 FP registers, 64 KiB of word-addressed memory, and a small
//! machine-level CSR file. An input to the fuzzer is an ordered list of
//! slots: instructions interleaved with interrupt and exception events.
//! Sequences are immutable values after construction; every constructor
//! and decoder enforces the invariants listed on [`InputSequence`].
//!
//! Two serializations exist: a line-oriented text format used for corpus
//! files (one slot per line, `#` comments) and a versioned, length-prefixed
//! binary framing used for hashing and dedup.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

/// Number of integer registers (x0..x15). x0 is hardwired to zero.
pub const NUM_XREGS: usize = 16;
/// Number of FP registers (f0..f7).
pub const NUM_FREGS: usize = 8;
/// Memory size in bytes; effective addresses wrap modulo this.
pub const MEM_SIZE: u32 = 64 * 1024;
/// Interrupt ids span I1..=I9.
pub const MAX_INTR_ID: u8 = 9;
/// Exception ids span E1..=E14.
pub const MAX_EXC_ID: u8 = 14;

/// Machine opcodes. `rm` is meaningful only for the FP group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Opcode {
    Add,
    Sub,
    Xor,
    Or,
    And,
    Shl,
    Shr,
    Mul,
    Load,
    Store,
    Beq,
    Jal,
    Fadd,
    Fdiv,
    Fsqrt,
    Csrrw,
    Csrrs,
    Ecall,
    Ebreak,
    Mret,
    Nop,
}

impl Opcode {
    pub const ALL: [Opcode; 21] = [
        Opcode::Add,
        Opcode::Sub,
        Opcode::Xor,
        Opcode::Or,
        Opcode::And,
        Opcode::Shl,
        Opcode::Shr,
        Opcode::Mul,
        Opcode::Load,
        Opcode::Store,
        Opcode::Beq,
        Opcode::Jal,
        Opcode::Fadd,
        Opcode::Fdiv,
        Opcode::Fsqrt,
        Opcode::Csrrw,
        Opcode::Csrrs,
        Opcode::Ecall,
        Opcode::Ebreak,
        Opcode::Mret,
        Opcode::Nop,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Add => "add",
            Opcode::Sub => "sub",
            Opcode::Xor => "xor",
            Opcode::Or => "or",
            Opcode::And => "and",
            Opcode::Shl => "shl",
            Opcode::Shr => "shr",
            Opcode::Mul => "mul",
            Opcode::Load => "load",
            Opcode::Store => "store",
            Opcode::Beq => "beq",
            Opcode::Jal => "jal",
            Opcode::Fadd => "fadd",
            Opcode::Fdiv => "fdiv",
            Opcode::Fsqrt => "fsqrt",
            Opcode::Csrrw => "csrrw",
            Opcode::Csrrs => "csrrs",
            Opcode::Ecall => "ecall",
            Opcode::Ebreak => "ebreak",
            Opcode::Mret => "mret",
            Opcode::Nop => "nop",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Opcode> {
        Opcode::ALL.iter().copied().find(|op| op.mnemonic() == s)
    }

    fn from_byte(b: u8) -> Option<Opcode> {
        Opcode::ALL.get(b as usize).copied()
    }

    fn to_byte(self) -> u8 {
        Opcode::ALL.iter().position(|&op| op == self).unwrap() as u8
    }

    /// Three-register ALU group (writes rd, reads rs1/rs2).
    pub fn is_alu(self) -> bool {
        matches!(
            self,
            Opcode::Add
                | Opcode::Sub
                | Opcode::Xor
                | Opcode::Or
                | Opcode::And
                | Opcode::Shl
                | Opcode::Shr
                | Opcode::Mul
        )
    }

    pub fn is_fp(self) -> bool {
        matches!(self, Opcode::Fadd | Opcode::Fdiv | Opcode::Fsqrt)
    }

    pub fn is_csr(self) -> bool {
        matches!(self, Opcode::Csrrw | Opcode::Csrrs)
    }

    pub fn is_mem(self) -> bool {
        matches!(self, Opcode::Load | Opcode::Store)
    }

    /// Jump group as counted by the seed heuristics (branches included).
    pub fn is_jump(self) -> bool {
        matches!(self, Opcode::Beq | Opcode::Jal)
    }

    pub fn is_bare(self) -> bool {
        matches!(self, Opcode::Ecall | Opcode::Ebreak | Opcode::Mret | Opcode::Nop)
    }
}

/// The machine-level CSR file. The enum value is the CSR index carried in
/// an instruction's imm field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Csr {
    Mstatus,
    Mcause,
    Mtvec,
    Mepc,
    Minstret,
    Mtime,
    Mtimecmp,
    Mscratch,
}

impl Csr {
    pub const ALL: [Csr; 8] = [
        Csr::Mstatus,
        Csr::Mcause,
        Csr::Mtvec,
        Csr::Mepc,
        Csr::Minstret,
        Csr::Mtime,
        Csr::Mtimecmp,
        Csr::Mscratch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Csr::Mstatus => "mstatus",
            Csr::Mcause => "mcause",
            Csr::Mtvec => "mtvec",
            Csr::Mepc => "mepc",
            Csr::Minstret => "minstret",
            Csr::Mtime => "mtime",
            Csr::Mtimecmp => "mtimecmp",
            Csr::Mscratch => "mscratch",
        }
    }

    pub fn from_name(s: &str) -> Option<Csr> {
        Csr::ALL.iter().copied().find(|c| c.name() == s)
    }

    pub fn from_index(i: i16) -> Option<Csr> {
        if (0..Csr::ALL.len() as i16).contains(&i) {
            Some(Csr::ALL[i as usize])
        } else {
            None
        }
    }

    pub fn index(self) -> i16 {
        Csr::ALL.iter().position(|&c| c == self).unwrap() as i16
    }
}

/// Privilege levels with the total order U < S < M.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PrivilegeLevel {
    User = 0,
    Supervisor = 1,
    Machine = 2,
}

impl PrivilegeLevel {
    pub const ALL: [PrivilegeLevel; 3] = [
        PrivilegeLevel::User,
        PrivilegeLevel::Supervisor,
        PrivilegeLevel::Machine,
    ];

    pub fn letter(self) -> &'static str {
        match self {
            PrivilegeLevel::User => "U",
            PrivilegeLevel::Supervisor => "S",
            PrivilegeLevel::Machine => "M",
        }
    }

    pub fn from_letter(s: &str) -> Option<PrivilegeLevel> {
        match s {
            "U" => Some(PrivilegeLevel::User),
            "S" => Some(PrivilegeLevel::Supervisor),
            "M" => Some(PrivilegeLevel::Machine),
            _ => None,
        }
    }

    pub fn from_bits(bits: u32) -> PrivilegeLevel {
        match bits {
            0 => PrivilegeLevel::User,
            1 => PrivilegeLevel::Supervisor,
            _ => PrivilegeLevel::Machine,
        }
    }
}

impl fmt::Display for PrivilegeLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.letter())
    }
}

/// One decoded instruction. Unused fields are kept at zero so that value
/// equality, hashing, and the text format all agree on a canonical form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Instruction {
    pub opcode: Opcode,
    pub rd: u8,
    pub rs1: u8,
    pub rs2: u8,
    pub imm: i16,
    pub rm: u8,
}

/// Names the invariant a sequence or instruction violates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InvariantKind {
    NoInstructions,
    EventCap,
    RegisterIndex,
    FpRegisterIndex,
    RoundingMode,
    CsrIndex,
    UnusedField,
    InterruptId,
    ExceptionId,
    PrivLevel,
    TrailingBytes,
}

impl fmt::Display for InvariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            InvariantKind::NoInstructions => "sequence has no instructions",
            InvariantKind::EventCap => "event cap exceeded",
            InvariantKind::RegisterIndex => "integer register index out of range",
            InvariantKind::FpRegisterIndex => "fp register index out of range",
            InvariantKind::RoundingMode => "rm field out of range",
            InvariantKind::CsrIndex => "csr index out of range",
            InvariantKind::UnusedField => "unused instruction field not zero",
            InvariantKind::InterruptId => "interrupt id out of range",
            InvariantKind::ExceptionId => "exception id out of range",
            InvariantKind::PrivLevel => "privilege level out of range",
            InvariantKind::TrailingBytes => "trailing bytes after framed payload",
        };
        f.write_str(s)
    }
}

impl core::error::Error for InvariantKind {}

impl Instruction {
    /// Validate field ranges and the all-unused-fields-zero canonical form.
    pub fn validate(&self) -> Result<(), InvariantKind> {
        let i = *self;
        let xreg = |r: u8| {
            if (r as usize) < NUM_XREGS {
                Ok(())
            } else {
                Err(InvariantKind::RegisterIndex)
            }
        };
        let freg = |r: u8| {
            if (r as usize) < NUM_FREGS {
                Ok(())
            } else {
                Err(InvariantKind::FpRegisterIndex)
            }
        };
        let zero = |ok: bool| if ok { Ok(()) } else { Err(InvariantKind::UnusedField) };
        match i.opcode {
            op if op.is_alu() => {
                xreg(i.rd)?;
                xreg(i.rs1)?;
                xreg(i.rs2)?;
                zero(i.imm == 0 && i.rm == 0)
            }
            Opcode::Load => {
                xreg(i.rd)?;
                xreg(i.rs1)?;
                zero(i.rs2 == 0 && i.rm == 0)
            }
            Opcode::Store => {
                xreg(i.rs2)?;
                xreg(i.rs1)?;
                zero(i.rd == 0 && i.rm == 0)
            }
            Opcode::Beq => {
                xreg(i.rs1)?;
                xreg(i.rs2)?;
                zero(i.rd == 0 && i.rm == 0)
            }
            Opcode::Jal => {
                xreg(i.rd)?;
                zero(i.rs1 == 0 && i.rs2 == 0 && i.rm == 0)
            }
            Opcode::Fadd | Opcode::Fdiv => {
                freg(i.rd)?;
                freg(i.rs1)?;
                freg(i.rs2)?;
                if i.rm > 7 {
                    return Err(InvariantKind::RoundingMode);
                }
                zero(i.imm == 0)
            }
            Opcode::Fsqrt => {
                freg(i.rd)?;
                freg(i.rs1)?;
                if i.rm > 7 {
                    return Err(InvariantKind::RoundingMode);
                }
                zero(i.rs2 == 0 && i.imm == 0)
            }
            Opcode::Csrrw | Opcode::Csrrs => {
                xreg(i.rd)?;
                xreg(i.rs1)?;
                if Csr::from_index(i.imm).is_none() {
                    return Err(InvariantKind::CsrIndex);
                }
                zero(i.rs2 == 0 && i.rm == 0)
            }
            _ => zero(i.rd == 0 && i.rs1 == 0 && i.rs2 == 0 && i.imm == 0 && i.rm == 0),
        }
    }

    pub fn alu(opcode: Opcode, rd: u8, rs1: u8, rs2: u8) -> Instruction {
        debug_assert!(opcode.is_alu());
        Instruction { opcode, rd, rs1, rs2, imm: 0, rm: 0 }
    }

    pub fn load(rd: u8, rs1: u8, imm: i16) -> Instruction {
        Instruction { opcode: Opcode::Load, rd, rs1, rs2: 0, imm, rm: 0 }
    }

    pub fn store(rs2: u8, rs1: u8, imm: i16) -> Instruction {
        Instruction { opcode: Opcode::Store, rd: 0, rs1, rs2, imm, rm: 0 }
    }

    pub fn beq(rs1: u8, rs2: u8, offset: i16) -> Instruction {
        Instruction { opcode: Opcode::Beq, rd: 0, rs1, rs2, imm: offset, rm: 0 }
    }

    pub fn jal(rd: u8, offset: i16) -> Instruction {
        Instruction { opcode: Opcode::Jal, rd, rs1: 0, rs2: 0, imm: offset, rm: 0 }
    }

    pub fn fp2(opcode: Opcode, fd: u8, fs1: u8, fs2: u8, rm: u8) -> Instruction {
        debug_assert!(matches!(opcode, Opcode::Fadd | Opcode::Fdiv));
        Instruction { opcode, rd: fd, rs1: fs1, rs2: fs2, imm: 0, rm }
    }

    pub fn fsqrt(fd: u8, fs1: u8, rm: u8) -> Instruction {
        Instruction { opcode: Opcode::Fsqrt, rd: fd, rs1: fs1, rs2: 0, imm: 0, rm }
    }

    pub fn csr(opcode: Opcode, rd: u8, csr: Csr, rs1: u8) -> Instruction {
        debug_assert!(opcode.is_csr());
        Instruction { opcode, rd, rs1, rs2: 0, imm: csr.index(), rm: 0 }
    }

    pub fn bare(opcode: Opcode) -> Instruction {
        debug_assert!(opcode.is_bare());
        Instruction { opcode, rd: 0, rs1: 0, rs2: 0, imm: 0, rm: 0 }
    }

    pub fn nop() -> Instruction {
        Instruction::bare(Opcode::Nop)
    }

    /// The CSR named by a CSR-group instruction.
    pub fn csr_target(&self) -> Option<Csr> {
        if self.opcode.is_csr() {
            Csr::from_index(self.imm)
        } else {
            None
        }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.opcode.mnemonic();
        match self.opcode {
            op if op.is_alu() => {
                write!(f, "{m} x{}, x{}, x{}", self.rd, self.rs1, self.rs2)
            }
            Opcode::Load => write!(f, "{m} x{}, {}(x{})", self.rd, self.imm, self.rs1),
            Opcode::Store => write!(f, "{m} x{}, {}(x{})", self.rs2, self.imm, self.rs1),
            Opcode::Beq => write!(f, "{m} x{}, x{}, {}", self.rs1, self.rs2, self.imm),
            Opcode::Jal => write!(f, "{m} x{}, {}", self.rd, self.imm),
            Opcode::Fadd | Opcode::Fdiv => {
                write!(f, "{m} f{}, f{}, f{}, rm={}", self.rd, self.rs1, self.rs2, self.rm)
            }
            Opcode::Fsqrt => write!(f, "{m} f{}, f{}, rm={}", self.rd, self.rs1, self.rm),
            Opcode::Csrrw | Opcode::Csrrs => {
                let name = Csr::from_index(self.imm).map(Csr::name).unwrap_or("?");
                write!(f, "{m} x{}, {}, x{}", self.rd, name, self.rs1)
            }
            _ => f.write_str(m),
        }
    }
}

/// One slot of an input sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventSlot {
    Instr(Instruction),
    Interrupt { id: u8, priv_level: PrivilegeLevel },
    Exception { id: u8 },
}

impl EventSlot {
    pub fn is_instr(&self) -> bool {
        matches!(self, EventSlot::Instr(_))
    }

    pub fn validate(&self) -> Result<(), InvariantKind> {
        match self {
            EventSlot::Instr(i) => i.validate(),
            EventSlot::Interrupt { id, .. } => {
                if (1..=MAX_INTR_ID).contains(id) {
                    Ok(())
                } else {
                    Err(InvariantKind::InterruptId)
                }
            }
            EventSlot::Exception { id } => {
                if (1..=MAX_EXC_ID).contains(id) {
                    Ok(())
                } else {
                    Err(InvariantKind::ExceptionId)
                }
            }
        }
    }
}

impl fmt::Display for EventSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventSlot::Instr(i) => write!(f, "{i}"),
            EventSlot::Interrupt { id, priv_level } => {
                write!(f, "intr I{id} prio={priv_level}")
            }
            EventSlot::Exception { id } => write!(f, "exc E{id}"),
        }
    }
}

/// Per-sequence event caps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SequenceLimits {
    pub max_intr: u8,
    pub max_exc: u8,
}

impl Default for SequenceLimits {
    fn default() -> Self {
        SequenceLimits { max_intr: 3, max_exc: 3 }
    }
}

/// An ordered list of slots: the fuzzer's unit of execution.
///
/// Invariants, enforced at construction and on decode:
/// - at least one `Instr` slot (`instr_len() >= 1`)
/// - at most `limits.max_intr` interrupts and `limits.max_exc` exceptions
/// - every slot individually valid (register ranges, id ranges, canonical
///   zero for unused fields)
///
/// `instr_len` counts only instruction slots; events are excluded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InputSequence {
    slots: Vec<EventSlot>,
    limits: SequenceLimits,
}

impl InputSequence {
    pub fn new(slots: Vec<EventSlot>, limits: SequenceLimits) -> Result<Self, InvariantKind> {
        let seq = InputSequence { slots, limits };
        seq.validate()?;
        Ok(seq)
    }

    /// A sequence of bare instructions with default limits.
    pub fn from_instrs(instrs: Vec<Instruction>) -> Result<Self, InvariantKind> {
        Self::new(
            instrs.into_iter().map(EventSlot::Instr).collect(),
            SequenceLimits::default(),
        )
    }

    pub fn validate(&self) -> Result<(), InvariantKind> {
        let mut instrs = 0usize;
        let mut intrs = 0usize;
        let mut excs = 0usize;
        for slot in &self.slots {
            slot.validate()?;
            match slot {
                EventSlot::Instr(_) => instrs += 1,
                EventSlot::Interrupt { .. } => intrs += 1,
                EventSlot::Exception { .. } => excs += 1,
            }
        }
        if instrs == 0 {
            return Err(InvariantKind::NoInstructions);
        }
        if intrs > self.limits.max_intr as usize || excs > self.limits.max_exc as usize {
            return Err(InvariantKind::EventCap);
        }
        Ok(())
    }

    pub fn slots(&self) -> &[EventSlot] {
        &self.slots
    }

    pub fn limits(&self) -> SequenceLimits {
        self.limits
    }

    /// Count of instruction slots only.
    pub fn instr_len(&self) -> usize {
        self.slots.iter().filter(|s| s.is_instr()).count()
    }

    pub fn intr_count(&self) -> usize {
        self.slots
            .iter()
            .filter(|s| matches!(s, EventSlot::Interrupt { .. }))
            .count()
    }

    pub fn exc_count(&self) -> usize {
        self.slots
            .iter()
            .filter(|s| matches!(s, EventSlot::Exception { .. }))
            .count()
    }

    pub fn instructions(&self) -> impl Iterator<Item = &Instruction> {
        self.slots.iter().filter_map(|s| match s {
            EventSlot::Instr(i) => Some(i),
            _ => None,
        })
    }

    /// Ordered interrupt ids, as used by the IST hash.
    pub fn interrupt_ids(&self) -> Vec<u8> {
        self.slots
            .iter()
            .filter_map(|s| match s {
                EventSlot::Interrupt { id, .. } => Some(*id),
                _ => None,
            })
            .collect()
    }

    /// Ordered exception ids, as used by the EST hash.
    pub fn exception_ids(&self) -> Vec<u8> {
        self.slots
            .iter()
            .filter_map(|s| match s {
                EventSlot::Exception { id } => Some(*id),
                _ => None,
            })
            .collect()
    }

    /// Stable 64-bit identity hash over the binary encoding.
    pub fn content_hash(&self) -> u64 {
        crate::fnv1a_64(&self.encode())
    }

    /// The instruction stream alone, events dropped. Used when a seed is
    /// re-dressed with fresh events for its next execution.
    pub fn strip_events(&self) -> InputSequence {
        InputSequence {
            slots: self.slots.iter().filter(|s| s.is_instr()).copied().collect(),
            limits: self.limits,
        }
    }
}

// ---------------------------------------------------------------------------
// Binary framing
// ---------------------------------------------------------------------------

const MAGIC: [u8; 4] = *b"MRVF";
const VERSION: u8 = 1;

const TAG_INSTR: u8 = 0;
const TAG_INTR: u8 = 1;
const TAG_EXC: u8 = 2;

/// Structured decode failures. Decoding never panics on arbitrary bytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecodeError {
    BadMagic,
    Truncated,
    Invariant(InvariantKind),
}

impl fmt::Display for DecodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecodeError::BadMagic => f.write_str("bad magic header"),
            DecodeError::Truncated => f.write_str("truncated input"),
            DecodeError::Invariant(k) => write!(f, "invariant violation: {k}"),
        }
    }
}

impl core::error::Error for DecodeError {}

impl InputSequence {
    /// Deterministic, versioned, length-prefixed binary encoding. Total on
    /// valid sequences and the inverse of [`InputSequence::decode`].
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(11 + self.slots.len() * 8);
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.limits.max_intr);
        out.push(self.limits.max_exc);
        out.extend_from_slice(&(self.slots.len() as u32).to_le_bytes());
        for slot in &self.slots {
            match slot {
                EventSlot::Instr(i) => {
                    out.push(TAG_INSTR);
                    out.push(i.opcode.to_byte());
                    out.push(i.rd);
                    out.push(i.rs1);
                    out.push(i.rs2);
                    out.extend_from_slice(&i.imm.to_le_bytes());
                    out.push(i.rm);
                }
                EventSlot::Interrupt { id, priv_level } => {
                    out.push(TAG_INTR);
                    out.push(*id);
                    out.push(*priv_level as u8);
                }
                EventSlot::Exception { id } => {
                    out.push(TAG_EXC);
                    out.push(*id);
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<InputSequence, DecodeError> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(4)?;
        if magic != MAGIC {
            return Err(DecodeError::BadMagic);
        }
        let version = cur.u8()?;
        if version != VERSION {
            return Err(DecodeError::BadMagic);
        }
        let limits = SequenceLimits { max_intr: cur.u8()?, max_exc: cur.u8()? };
        let count = cur.u32()? as usize;
        let mut slots = Vec::new();
        for _ in 0..count {
            let slot = match cur.u8()? {
                TAG_INSTR => {
                    let opcode = Opcode::from_byte(cur.u8()?)
                        .ok_or(DecodeError::Invariant(InvariantKind::UnusedField))?;
                    let rd = cur.u8()?;
                    let rs1 = cur.u8()?;
                    let rs2 = cur.u8()?;
                    let imm = i16::from_le_bytes([cur.u8()?, cur.u8()?]);
                    let rm = cur.u8()?;
                    EventSlot::Instr(Instruction { opcode, rd, rs1, rs2, imm, rm })
                }
                TAG_INTR => {
                    let id = cur.u8()?;
                    let priv_level = match cur.u8()? {
                        0 => PrivilegeLevel::User,
                        1 => PrivilegeLevel::Supervisor,
                        2 => PrivilegeLevel::Machine,
                        _ => return Err(DecodeError::Invariant(InvariantKind::PrivLevel)),
                    };
                    EventSlot::Interrupt { id, priv_level }
                }
                TAG_EXC => EventSlot::Exception { id: cur.u8()? },
                _ => return Err(DecodeError::Invariant(InvariantKind::UnusedField)),
            };
            slots.push(slot);
        }
        if cur.pos != bytes.len() {
            return Err(DecodeError::Invariant(InvariantKind::TrailingBytes));
        }
        InputSequence::new(slots, limits).map_err(DecodeError::Invariant)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.pos + n > self.bytes.len() {
            return Err(DecodeError::Truncated);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

// ---------------------------------------------------------------------------
// Text format
// ---------------------------------------------------------------------------

/// Parse failure for the textual corpus format, with the 1-based line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl core::error::Error for ParseError {}

impl InputSequence {
    /// Render as the corpus text format: one slot per line.
    pub fn to_text(&self) -> String {
        use core::fmt::Write;
        let mut out = String::new();
        for slot in &self.slots {
            let _ = writeln!(out, "{slot}");
        }
        out
    }

    /// Parse the corpus text format with default limits. Comment lines start
    /// with `#`; blank lines are ignored.
    pub fn parse_text(text: &str) -> Result<InputSequence, ParseError> {
        Self::parse_text_with_limits(text, SequenceLimits::default())
    }

    pub fn parse_text_with_limits(
        text: &str,
        limits: SequenceLimits,
    ) -> Result<InputSequence, ParseError> {
        let mut slots = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let slot = parse_slot(line).map_err(|message| ParseError { line: idx + 1, message })?;
            slots.push(slot);
        }
        InputSequence::new(slots, limits)
            .map_err(|k| ParseError { line: 0, message: alloc::format!("{k}") })
    }
}

fn parse_slot(line: &str) -> Result<EventSlot, String> {
    let mut parts = line.split_whitespace();
    let head = parts.next().ok_or("empty line")?;
    let rest: Vec<&str> = parts.collect();
    match head {
        "intr" => {
            let id_tok = rest.first().ok_or("missing interrupt id")?;
            let id = id_tok
                .strip_prefix('I')
                .and_then(|s| s.parse::<u8>().ok())
                .ok_or_else(|| alloc::format!("bad interrupt id `{id_tok}`"))?;
            let prio_tok = rest.get(1).ok_or("missing prio")?;
            let prio = prio_tok
                .strip_prefix("prio=")
                .and_then(PrivilegeLevel::from_letter)
                .ok_or_else(|| alloc::format!("bad prio `{prio_tok}`"))?;
            Ok(EventSlot::Interrupt { id, priv_level: prio })
        }
        "exc" => {
            let id_tok = rest.first().ok_or("missing exception id")?;
            let id = id_tok
                .strip_prefix('E')
                .and_then(|s| s.parse::<u8>().ok())
                .ok_or_else(|| alloc::format!("bad exception id `{id_tok}`"))?;
            Ok(EventSlot::Exception { id })
        }
        _ => parse_instruction(head, &rest).map(EventSlot::Instr),
    }
}

fn parse_instruction(mnemonic: &str, operands: &[&str]) -> Result<Instruction, String> {
    let opcode = Opcode::from_mnemonic(mnemonic)
        .ok_or_else(|| alloc::format!("unknown mnemonic `{mnemonic}`"))?;
    // Operands were split on whitespace; strip trailing commas.
    let ops: Vec<String> = operands
        .iter()
        .map(|s| s.trim_end_matches(',').into())
        .collect();
    let need = |n: usize| {
        if ops.len() == n {
            Ok(())
        } else {
            Err(alloc::format!("expected {n} operands, got {}", ops.len()))
        }
    };
    match opcode {
        op if op.is_alu() => {
            need(3)?;
            Ok(Instruction::alu(op, xreg(&ops[0])?, xreg(&ops[1])?, xreg(&ops[2])?))
        }
        Opcode::Load => {
            need(2)?;
            let (imm, rs1) = imm_base(&ops[1])?;
            Ok(Instruction::load(xreg(&ops[0])?, rs1, imm))
        }
        Opcode::Store => {
            need(2)?;
            let (imm, rs1) = imm_base(&ops[1])?;
            Ok(Instruction::store(xreg(&ops[0])?, rs1, imm))
        }
        Opcode::Beq => {
            need(3)?;
            Ok(Instruction::beq(xreg(&ops[0])?, xreg(&ops[1])?, int(&ops[2])?))
        }
        Opcode::Jal => {
            need(2)?;
            Ok(Instruction::jal(xreg(&ops[0])?, int(&ops[1])?))
        }
        Opcode::Fadd | Opcode::Fdiv => {
            need(4)?;
            Ok(Instruction::fp2(opcode, freg(&ops[0])?, freg(&ops[1])?, freg(&ops[2])?, rm(&ops[3])?))
        }
        Opcode::Fsqrt => {
            need(3)?;
            Ok(Instruction::fsqrt(freg(&ops[0])?, freg(&ops[1])?, rm(&ops[2])?))
        }
        Opcode::Csrrw | Opcode::Csrrs => {
            need(3)?;
            let csr = Csr::from_name(&ops[1]).ok_or_else(|| alloc::format!("unknown csr `{}`", ops[1]))?;
            Ok(Instruction::csr(opcode, xreg(&ops[0])?, csr, xreg(&ops[2])?))
        }
        _ => {
            need(0)?;
            Ok(Instruction::bare(opcode))
        }
    }
}

fn xreg(s: &str) -> Result<u8, String> {
    s.strip_prefix('x')
        .and_then(|n| n.parse::<u8>().ok())
        .filter(|&r| (r as usize) < NUM_XREGS)
        .ok_or_else(|| alloc::format!("bad integer register `{s}`"))
}

fn freg(s: &str) -> Result<u8, String> {
    s.strip_prefix('f')
        .and_then(|n| n.parse::<u8>().ok())
        .filter(|&r| (r as usize) < NUM_FREGS)
        .ok_or_else(|| alloc::format!("bad fp register `{s}`"))
}

fn int(s: &str) -> Result<i16, String> {
    s.parse::<i16>().map_err(|_| alloc::format!("bad immediate `{s}`"))
}

fn rm(s: &str) -> Result<u8, String> {
    s.strip_prefix("rm=")
        .and_then(|n| n.parse::<u8>().ok())
        .filter(|&r| r <= 7)
        .ok_or_else(|| alloc::format!("bad rounding mode `{s}`"))
}

fn imm_base(s: &str) -> Result<(i16, u8), String> {
    // "16(x1)" form.
    let open = s.find('(').ok_or_else(|| alloc::format!("bad address operand `{s}`"))?;
    if !s.ends_with(')') {
        return Err(alloc::format!("bad address operand `{s}`"));
    }
    let imm = int(&s[..open])?;
    let base = xreg(&s[open + 1..s.len() - 1])?;
    Ok((imm, base))
}

// ---------------------------------------------------------------------------
// Random generation
// ---------------------------------------------------------------------------

/// Draw one valid instruction. Memory immediates are word-aligned 80% of the
/// time so misaligned traps occur without dominating; branch offsets stay
/// small so targets usually land inside the sequence.
pub fn random_instruction<R: Rng + ?Sized>(rng: &mut R) -> Instruction {
    let opcode = Opcode::ALL[rng.gen_range(0..Opcode::ALL.len())];
    let xr = |rng: &mut R| rng.gen_range(0..NUM_XREGS as u8);
    let fr = |rng: &mut R| rng.gen_range(0..NUM_FREGS as u8);
    match opcode {
        op if op.is_alu() => Instruction::alu(op, xr(rng), xr(rng), xr(rng)),
        Opcode::Load | Opcode::Store => {
            let mut imm = rng.gen_range(-512i16..512);
            if rng.gen_ratio(4, 5) {
                imm &= !3;
            }
            if opcode == Opcode::Load {
                Instruction::load(xr(rng), xr(rng), imm)
            } else {
                Instruction::store(xr(rng), xr(rng), imm)
            }
        }
        Opcode::Beq => Instruction::beq(xr(rng), xr(rng), rng.gen_range(-4i16..8)),
        Opcode::Jal => Instruction::jal(xr(rng), rng.gen_range(-4i16..8)),
        Opcode::Fadd | Opcode::Fdiv => {
            Instruction::fp2(opcode, fr(rng), fr(rng), fr(rng), rng.gen_range(0..8))
        }
        Opcode::Fsqrt => Instruction::fsqrt(fr(rng), fr(rng), rng.gen_range(0..8)),
        Opcode::Csrrw | Opcode::Csrrs => {
            let csr = Csr::ALL[rng.gen_range(0..Csr::ALL.len())];
            Instruction::csr(opcode, xr(rng), csr, xr(rng))
        }
        op => Instruction::bare(op),
    }
}

/// A bare random sequence of `n` instructions (no events).
pub fn random_sequence<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    limits: SequenceLimits,
) -> InputSequence {
    let n = n.max(1);
    let slots = (0..n)
        .map(|_| EventSlot::Instr(random_instruction(rng)))
        .collect();
    InputSequence::new(slots, limits).expect("generated sequence is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn seq(instrs: Vec<Instruction>) -> InputSequence {
        InputSequence::from_instrs(instrs).unwrap()
    }

    #[test]
    fn empty_sequence_rejected_at_construction() {
        assert_eq!(
            InputSequence::new(Vec::new(), SequenceLimits::default()).unwrap_err(),
            InvariantKind::NoInstructions
        );
    }

    #[test]
    fn event_cap_enforced() {
        let mut slots = vec![EventSlot::Instr(Instruction::nop())];
        for _ in 0..4 {
            slots.push(EventSlot::Interrupt { id: 1, priv_level: PrivilegeLevel::Machine });
        }
        assert_eq!(
            InputSequence::new(slots, SequenceLimits::default()).unwrap_err(),
            InvariantKind::EventCap
        );
    }

    #[test]
    fn length_counts_only_instructions() {
        let mut slots = vec![
            EventSlot::Instr(Instruction::nop()),
            EventSlot::Instr(Instruction::bare(Opcode::Ebreak)),
        ];
        let before = InputSequence::new(slots.clone(), SequenceLimits::default()).unwrap();
        slots.push(EventSlot::Interrupt { id: 3, priv_level: PrivilegeLevel::Supervisor });
        let after = InputSequence::new(slots, SequenceLimits::default()).unwrap();
        assert_eq!(before.instr_len(), 2);
        assert_eq!(after.instr_len(), 2);
        assert_eq!(after.intr_count(), 1);
    }

    #[test]
    fn decode_rejects_bad_magic() {
        let mut bytes = seq(vec![Instruction::nop()]).encode();
        bytes[0] ^= 0xff;
        assert_eq!(InputSequence::decode(&bytes).unwrap_err(), DecodeError::BadMagic);
    }

    #[test]
    fn decode_rejects_empty_input() {
        assert_eq!(InputSequence::decode(&[]).unwrap_err(), DecodeError::Truncated);
    }

    #[test]
    fn decode_rejects_truncation() {
        let bytes = seq(vec![Instruction::nop(), Instruction::nop()]).encode();
        for cut in 1..bytes.len() {
            let err = InputSequence::decode(&bytes[..cut]).unwrap_err();
            assert!(
                matches!(err, DecodeError::Truncated | DecodeError::BadMagic),
                "cut {cut}: {err:?}"
            );
        }
    }

    #[test]
    fn decode_rejects_event_cap_overflow() {
        // Hand-build a frame claiming cap 3 but carrying 4 interrupts.
        let mut bytes = alloc::vec![];
        bytes.extend_from_slice(b"MRVF");
        bytes.push(1); // version
        bytes.push(3); // max_intr
        bytes.push(3); // max_exc
        bytes.extend_from_slice(&5u32.to_le_bytes());
        bytes.extend_from_slice(&[0, Opcode::Nop.to_byte(), 0, 0, 0, 0, 0, 0]);
        for _ in 0..4 {
            bytes.extend_from_slice(&[1, 2, 2]);
        }
        assert_eq!(
            InputSequence::decode(&bytes).unwrap_err(),
            DecodeError::Invariant(InvariantKind::EventCap)
        );
    }

    #[test]
    fn csr_index_validated() {
        let bad = Instruction { opcode: Opcode::Csrrw, rd: 1, rs1: 2, rs2: 0, imm: 9, rm: 0 };
        assert_eq!(bad.validate().unwrap_err(), InvariantKind::CsrIndex);
    }

    #[test]
    fn invalid_rm_is_legal_to_encode() {
        // rm=5 must survive encode/decode; it traps at execution, not here.
        let s = seq(vec![Instruction::fp2(Opcode::Fadd, 0, 1, 2, 5), Instruction::nop()]);
        let back = InputSequence::decode(&s.encode()).unwrap();
        assert_eq!(back, s);
    }

    fn arb_instruction() -> impl Strategy<Value = Instruction> {
        (any::<u64>(), any::<u64>()).prop_map(|(a, b)| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a ^ b.rotate_left(17));
            random_instruction(&mut rng)
        })
    }

    fn arb_sequence() -> impl Strategy<Value = InputSequence> {
        (
            proptest::collection::vec(arb_instruction(), 1..20),
            any::<u64>(),
        )
            .prop_map(|(instrs, seed)| {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let mut slots: Vec<EventSlot> =
                    instrs.into_iter().map(EventSlot::Instr).collect();
                // Sprinkle up to 3+3 events at random positions past slot 0.
                for _ in 0..rng.gen_range(0..=3u8) {
                    let pos = rng.gen_range(1..=slots.len());
                    slots.insert(
                        pos,
                        EventSlot::Interrupt {
                            id: rng.gen_range(1..=MAX_INTR_ID),
                            priv_level: PrivilegeLevel::ALL[rng.gen_range(0..3)],
                        },
                    );
                }
                for _ in 0..rng.gen_range(0..=3u8) {
                    let pos = rng.gen_range(1..=slots.len());
                    slots.insert(pos, EventSlot::Exception { id: rng.gen_range(1..=MAX_EXC_ID) });
                }
                InputSequence::new(slots, SequenceLimits::default()).unwrap()
            })
    }

    proptest! {
        #[test]
        fn binary_round_trip(s in arb_sequence()) {
            let back = InputSequence::decode(&s.encode()).unwrap();
            prop_assert_eq!(back, s);
        }

        #[test]
        fn text_round_trip(s in arb_sequence()) {
            let back = InputSequence::parse_text(&s.to_text()).unwrap();
            prop_assert_eq!(back, s);
        }

        #[test]
        fn decode_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
            let _ = InputSequence::decode(&bytes);
        }

        #[test]
        fn generated_instructions_valid(i in arb_instruction()) {
            prop_assert!(i.validate().is_ok());
        }
    }

    #[test]
    fn text_format_examples() {
        let text = "# a comment\nadd x3, x1, x2\nintr I3 prio=M\nload x4, 16(x2)\nexc E2\nfadd f1, f2, f3, rm=1\ncsrrw x1, mtimecmp, x0\nebreak\n";
        let s = InputSequence::parse_text(text).unwrap();
        assert_eq!(s.instr_len(), 5);
        assert_eq!(s.intr_count(), 1);
        assert_eq!(s.exc_count(), 1);
        assert_eq!(s.to_text().lines().count(), 7);
        assert_eq!(s.interrupt_ids(), alloc::vec![3]);
        assert_eq!(s.exception_ids(), alloc::vec![2]);
    }
}
