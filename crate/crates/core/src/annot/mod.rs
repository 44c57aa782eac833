//! Tag annotation instruction set and its 64-bit binary codec.
//!
//! Annotations are the instructions the tag management core executes: one
//! short sequence per traced basic block, produced by static analysis of the
//! application binary. The set covers tag initialisation, tag ALU operations
//! (with the operation either resolved at runtime from the propagation
//! register or fixed at analysis time), tag loads/stores through a general
//! register base, FIFO-coupled loads/stores for dynamically computed
//! addresses, and the kernel FIFO primitives.
//!
//! Binary layout of one annotation word, most significant bits first:
//!
//! ```text
//! opcode[6] | class[2] | dst[6] | src1[6] | src2[6] | reserved[6] | imm[32]
//! ```
//!
//! The reserved field carries the fixed ALU operation for `TagRRR2` and must
//! be zero everywhere else, so encode/decode are mutually inverse bijections
//! over valid annotations.

mod policy;
mod store;

pub use policy::{CheckFlags, InstrClass, PolicyMode, PolicyRegisters, PropagationRule};
pub use store::{AnnotationStore, BlockOp, GrfOp};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from the annotation codec, policy registers, and store formats.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnnotError {
    /// Opcode field does not name a known operation.
    #[error("unknown opcode {opcode}")]
    UnknownOpcode { opcode: u8 },
    /// An operand field is outside the register-file range its opcode expects.
    #[error("invalid operand: {reason}")]
    InvalidOperandRange { reason: String },
    /// A propagation-rule field holds an undefined encoding.
    #[error("invalid propagation rule encoding {bits}")]
    InvalidRuleEncoding { bits: u8 },
    /// Tag width outside 1..=32.
    #[error("tag width {width} outside 1..=32")]
    InvalidTagWidth { width: u8 },
    /// Bad line in a policy text file.
    #[error("policy file line {line}: {reason}")]
    PolicyParse { line: usize, reason: String },
    /// Annotation-store blob has a bad magic, version, or structure.
    #[error("corrupt annotation store header: {reason}")]
    CorruptHeader { reason: &'static str },
    /// Annotation-store blob ended inside a block.
    #[error("annotation store truncated at byte offset {offset}")]
    TruncatedBlock { offset: usize },
    /// Lookup of a basic-block address with no stored annotations.
    #[error("no annotation block for address 0x{addr:08x}")]
    MissingBlock { addr: u32 },
    /// Two different annotation sequences registered for one address.
    #[error("conflicting annotation blocks for address 0x{addr:08x}")]
    DuplicateBlock { addr: u32 },
}

/// A 6-bit register id covering all three register files visible to
/// annotations: integer tags (`T0`–`T15`, ids 0–15), floating-point tags
/// (`S0`–`S31`, ids 16–47), and the dispatcher's general registers
/// (`G0`–`G15`, ids 48–63).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegId(u8);

impl RegId {
    pub const ZERO: RegId = RegId(0);

    pub fn from_raw(raw: u8) -> Result<Self, AnnotError> {
        if raw >= 64 {
            return Err(AnnotError::InvalidOperandRange {
                reason: format!("register id {raw} out of 6-bit range"),
            });
        }
        Ok(RegId(raw))
    }

    /// Integer tag register `T{n}`, n in 0..16.
    pub fn trf(n: u8) -> Self {
        assert!(n < 16, "TRF index {n} out of range");
        RegId(n)
    }

    /// Floating-point tag register `S{n}`, n in 0..32.
    pub fn trf_fp(n: u8) -> Self {
        assert!(n < 32, "TRF_FP index {n} out of range");
        RegId(16 + n)
    }

    /// General register `G{n}`, n in 0..16.
    pub fn grf(n: u8) -> Self {
        assert!(n < 16, "GRF index {n} out of range");
        RegId(48 + n)
    }

    pub fn raw(self) -> u8 {
        self.0
    }

    /// True for both tag register files (integer and floating-point).
    pub fn is_tag(self) -> bool {
        self.0 < 48
    }

    pub fn is_grf(self) -> bool {
        self.0 >= 48
    }

    /// Index within the owning register file.
    pub fn file_index(self) -> usize {
        match self.0 {
            0..=15 => self.0 as usize,
            16..=47 => (self.0 - 16) as usize,
            _ => (self.0 - 48) as usize,
        }
    }
}

impl std::fmt::Display for RegId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            0..=15 => write!(f, "T{}", self.0),
            16..=47 => write!(f, "S{}", self.0 - 16),
            _ => write!(f, "G{}", self.0 - 48),
        }
    }
}

/// Annotation opcode. `TagRRR2` carries the ALU operation fixed at analysis
/// time; the runtime variant `TagRRR` resolves its operation from the
/// propagation register of the annotation's class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Opcode {
    /// `T[dst] <- imm` — tag init from immediate.
    TagRImm,
    /// `T[dst] <- T[src1]` — tag copy.
    TagRR,
    /// `tagmem[G[src1]] <- T[dst]` — tag store, address in a general register.
    TagMR,
    /// `T[dst] <- rule(T[dst], T[src1], T[src2])`, rule from the TPR.
    TagRRR,
    /// `T[dst] <- op(T[dst], T[src1], T[src2])`, op fixed here.
    TagRRR2(PropagationRule),
    /// `tagmem[G[src1] + imm] <- T[dst]`, runtime flavour.
    TagMTR,
    /// `T[dst] <- tagmem[G[src1] + imm]`, runtime flavour.
    TagTRM,
    /// `tagmem[G[src1] + imm] <- T[dst]`, analysis-time flavour.
    TagMTR2,
    /// `T[dst] <- tagmem[G[src1] + imm]`, analysis-time flavour.
    TagTRM2,
    /// `tagmem[pop(instrumentation) + imm] <- T[dst]`, runtime flavour.
    TagITR,
    /// `T[dst] <- tagmem[pop(instrumentation) + imm]`, runtime flavour.
    TagTRI,
    /// `tagmem[pop(instrumentation) + imm] <- T[dst]`, analysis-time flavour.
    TagITR2,
    /// `T[dst] <- tagmem[pop(instrumentation) + imm]`, analysis-time flavour.
    TagTRI2,
    /// Push `T[src1]` to the coprocessor-to-kernel FIFO.
    TagKTR,
    /// `T[dst] <- tagmem[pop(kernel-to-coprocessor FIFO)]`.
    TagTRK,
}

impl Opcode {
    fn number(self) -> u8 {
        match self {
            Opcode::TagRImm => 0,
            Opcode::TagRR => 1,
            Opcode::TagMR => 2,
            Opcode::TagRRR => 3,
            Opcode::TagRRR2(_) => 4,
            Opcode::TagMTR => 5,
            Opcode::TagTRM => 6,
            Opcode::TagMTR2 => 7,
            Opcode::TagTRM2 => 8,
            Opcode::TagITR => 9,
            Opcode::TagTRI => 10,
            Opcode::TagITR2 => 11,
            Opcode::TagTRI2 => 12,
            Opcode::TagKTR => 13,
            Opcode::TagTRK => 14,
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::TagRImm => "TagRImm",
            Opcode::TagRR => "TagRR",
            Opcode::TagMR => "TagMR",
            Opcode::TagRRR => "TagRRR",
            Opcode::TagRRR2(_) => "TagRRR2",
            Opcode::TagMTR => "TagMTR",
            Opcode::TagTRM => "TagTRM",
            Opcode::TagMTR2 => "TagMTR2",
            Opcode::TagTRM2 => "TagTRM2",
            Opcode::TagITR => "TagITR",
            Opcode::TagTRI => "TagTRI",
            Opcode::TagITR2 => "TagITR2",
            Opcode::TagTRI2 => "TagTRI2",
            Opcode::TagKTR => "TagKTR",
            Opcode::TagTRK => "TagTRK",
        }
    }
}

/// Whether an operand field is unused, names a tag register, or names a
/// general register — drives validation for each opcode.
#[derive(Clone, Copy, PartialEq)]
enum Use {
    None,
    Tag,
    Grf,
}

struct Shape {
    dst: Use,
    src1: Use,
    src2: Use,
    imm: bool,
}

fn shape(op: Opcode) -> Shape {
    use Use::*;
    match op {
        Opcode::TagRImm => Shape { dst: Tag, src1: None, src2: None, imm: true },
        Opcode::TagRR => Shape { dst: Tag, src1: Tag, src2: None, imm: false },
        Opcode::TagMR => Shape { dst: Tag, src1: Grf, src2: None, imm: false },
        Opcode::TagRRR | Opcode::TagRRR2(_) => Shape { dst: Tag, src1: Tag, src2: Tag, imm: false },
        Opcode::TagMTR | Opcode::TagTRM | Opcode::TagMTR2 | Opcode::TagTRM2 => {
            Shape { dst: Tag, src1: Grf, src2: None, imm: true }
        }
        Opcode::TagITR | Opcode::TagTRI | Opcode::TagITR2 | Opcode::TagTRI2 => {
            Shape { dst: Tag, src1: None, src2: None, imm: true }
        }
        Opcode::TagKTR => Shape { dst: None, src1: Tag, src2: None, imm: false },
        Opcode::TagTRK => Shape { dst: Tag, src1: None, src2: None, imm: false },
    }
}

/// One decoded annotation. All operand fields are present in every
/// annotation; unused ones are zero. The class selects the propagation rule
/// for runtime opcodes and the check bits for every opcode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub opcode: Opcode,
    pub class: InstrClass,
    pub dst: RegId,
    pub src1: RegId,
    pub src2: RegId,
    pub imm: i32,
}

impl Annotation {
    pub fn new(
        opcode: Opcode,
        class: InstrClass,
        dst: RegId,
        src1: RegId,
        src2: RegId,
        imm: i32,
    ) -> Result<Self, AnnotError> {
        let a = Annotation { opcode, class, dst, src1, src2, imm };
        a.validate()?;
        Ok(a)
    }

    /// Checks the operand fields against the opcode's shape.
    pub fn validate(&self) -> Result<(), AnnotError> {
        let s = shape(self.opcode);
        for (name, reg, used) in [
            ("dst", self.dst, s.dst),
            ("src1", self.src1, s.src1),
            ("src2", self.src2, s.src2),
        ] {
            let ok = match used {
                Use::None => reg == RegId::ZERO,
                Use::Tag => reg.is_tag(),
                Use::Grf => reg.is_grf(),
            };
            if !ok {
                return Err(AnnotError::InvalidOperandRange {
                    reason: format!("{} operand {} invalid for {}", name, reg, self.opcode.mnemonic()),
                });
            }
        }
        if !s.imm && self.imm != 0 {
            return Err(AnnotError::InvalidOperandRange {
                reason: format!("{} takes no immediate", self.opcode.mnemonic()),
            });
        }
        Ok(())
    }
}

impl std::fmt::Display for Annotation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = shape(self.opcode);
        write!(f, "{}[{}]", self.opcode.mnemonic(), self.class.short_name())?;
        if let Opcode::TagRRR2(rule) = self.opcode {
            write!(f, " {}", rule.name().to_uppercase())?;
        }
        let mut sep = " ";
        for (reg, used) in [(self.dst, s.dst), (self.src1, s.src1), (self.src2, s.src2)] {
            if used != Use::None {
                write!(f, "{sep}{reg}")?;
                sep = ", ";
            }
        }
        if s.imm {
            write!(f, "{sep}#{}", self.imm)?;
        }
        Ok(())
    }
}

/// Packs an annotation into its 64-bit word. Fails on operand-shape
/// violations so that only valid words ever reach a store.
pub fn encode_annotation(a: &Annotation) -> Result<u64, AnnotError> {
    a.validate()?;
    let rule_bits = match a.opcode {
        Opcode::TagRRR2(rule) => rule.encoding() as u64,
        _ => 0,
    };
    Ok(pack_word(
        a.opcode.number(),
        a.class as u8,
        a.dst.raw(),
        a.src1.raw(),
        a.src2.raw(),
        rule_bits as u8,
        a.imm,
    ))
}

pub(crate) fn pack_word(
    opcode: u8,
    class: u8,
    dst: u8,
    src1: u8,
    src2: u8,
    reserved: u8,
    imm: i32,
) -> u64 {
    (u64::from(opcode) << 58)
        | (u64::from(class) << 56)
        | (u64::from(dst) << 50)
        | (u64::from(src1) << 44)
        | (u64::from(src2) << 38)
        | (u64::from(reserved) << 32)
        | u64::from(imm as u32)
}

pub(crate) struct RawWord {
    pub opcode: u8,
    pub class: u8,
    pub dst: u8,
    pub src1: u8,
    pub src2: u8,
    pub reserved: u8,
    pub imm: i32,
}

pub(crate) fn unpack_word(word: u64) -> RawWord {
    RawWord {
        opcode: (word >> 58) as u8,
        class: ((word >> 56) & 0x3) as u8,
        dst: ((word >> 50) & 0x3F) as u8,
        src1: ((word >> 44) & 0x3F) as u8,
        src2: ((word >> 38) & 0x3F) as u8,
        reserved: ((word >> 32) & 0x3F) as u8,
        imm: (word as u32) as i32,
    }
}

/// Unpacks a 64-bit word into an annotation, validating the opcode, the
/// reserved field, and operand ranges.
pub fn decode_annotation(word: u64) -> Result<Annotation, AnnotError> {
    let raw = unpack_word(word);
    let opcode = match raw.opcode {
        0 => Opcode::TagRImm,
        1 => Opcode::TagRR,
        2 => Opcode::TagMR,
        3 => Opcode::TagRRR,
        4 => Opcode::TagRRR2(PropagationRule::from_encoding(raw.reserved)?),
        5 => Opcode::TagMTR,
        6 => Opcode::TagTRM,
        7 => Opcode::TagMTR2,
        8 => Opcode::TagTRM2,
        9 => Opcode::TagITR,
        10 => Opcode::TagTRI,
        11 => Opcode::TagITR2,
        12 => Opcode::TagTRI2,
        13 => Opcode::TagKTR,
        14 => Opcode::TagTRK,
        n => return Err(AnnotError::UnknownOpcode { opcode: n }),
    };
    if !matches!(opcode, Opcode::TagRRR2(_)) && raw.reserved != 0 {
        return Err(AnnotError::InvalidOperandRange {
            reason: format!("nonzero reserved field for {}", opcode.mnemonic()),
        });
    }
    Annotation::new(
        opcode,
        InstrClass::from_encoding(raw.class),
        RegId::from_raw(raw.dst)?,
        RegId::from_raw(raw.src1)?,
        RegId::from_raw(raw.src2)?,
        raw.imm,
    )
}
