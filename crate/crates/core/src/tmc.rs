//! Tag management core: the unit that executes a block's operation sequence
//! against its tag register files, general registers, tag memory, and FIFOs.
//!
//! One core serves one hardware slot. Execution is strictly per-operation
//! with two contracts the dispatcher relies on:
//!
//! * **Retry on empty FIFO** — an operation that needs a FIFO pop returns
//!   [`TmcError::FifoEmpty`] *before mutating anything* when the FIFO has no
//!   data, so the dispatcher can stall the unit and re-issue the identical
//!   operation once data arrives. Only `FifoEmpty` carries this retry
//!   guarantee; translation misses and overflows are terminal.
//! * **Mutate, then halt** — policy checks are evaluated after propagation.
//!   A failed check reports a [`Violation`] with all state changes of the
//!   offending operation already applied, and the core halts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annot::{AnnotError, Annotation, BlockOp, GrfOp, Opcode, PolicyRegisters, RegId};
use crate::dispatch::{FifoKind, FifoOverflow, Fifos};
use crate::pft::ContextId;
use crate::tagmem::{TagMemError, TagMemory};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TmcError {
    /// Operation issued to a halted core.
    #[error("tag management core is halted")]
    Halted,
    /// The operation needs a pop from an empty FIFO; nothing was mutated and
    /// the identical operation can be retried later.
    #[error("{fifo} FIFO empty")]
    FifoEmpty { fifo: FifoKind },
    #[error(transparent)]
    FifoFull(#[from] FifoOverflow),
    #[error(transparent)]
    TagMem(#[from] TagMemError),
    #[error(transparent)]
    Policy(#[from] AnnotError),
}

/// Which operand's check fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckKind {
    Src1,
    Src2,
    Dst,
}

impl CheckKind {
    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Src1 => "src1",
            CheckKind::Src2 => "src2",
            CheckKind::Dst => "dst",
        }
    }
}

impl std::fmt::Display for CheckKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A policy check that fired, with enough position to locate the offending
/// operation in the annotation store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub slot: u8,
    pub context: ContextId,
    pub block_address: u32,
    /// Index of the operation within its block's sequence.
    pub annotation_index: u32,
    /// The tag value that was inspected (before the check mask).
    pub checked_tag: u32,
    pub check_kind: CheckKind,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "check={},tag=0x{:08x},slot={},{},block=0x{:08x},op={}",
            self.check_kind,
            self.checked_tag,
            self.slot,
            self.context,
            self.block_address,
            self.annotation_index
        )
    }
}

/// Architectural state of one tag management core.
#[derive(Debug, Clone)]
pub struct TmcState {
    trf: [u32; 16],
    trf_fp: [u32; 32],
    grf: [u32; 16],
    halted: bool,
    slot: u8,
    context: ContextId,
    ops_executed: u64,
}

impl TmcState {
    pub fn new(slot: u8, context: ContextId) -> Self {
        TmcState {
            trf: [0; 16],
            trf_fp: [0; 32],
            grf: [0; 16],
            halted: false,
            slot,
            context,
            ops_executed: 0,
        }
    }

    pub fn slot(&self) -> u8 {
        self.slot
    }

    pub fn context(&self) -> ContextId {
        self.context
    }

    pub fn halted(&self) -> bool {
        self.halted
    }

    /// Total operations executed, including the one that raised a violation.
    pub fn ops_executed(&self) -> u64 {
        self.ops_executed
    }

    pub fn trf(&self) -> &[u32; 16] {
        &self.trf
    }

    pub fn trf_fp(&self) -> &[u32; 32] {
        &self.trf_fp
    }

    pub fn grf(&self) -> &[u32; 16] {
        &self.grf
    }

    /// Tag of a tag-file register.
    pub fn read_tag(&self, reg: RegId) -> u32 {
        debug_assert!(reg.is_tag());
        if reg.raw() < 16 {
            self.trf[reg.file_index()]
        } else {
            self.trf_fp[reg.file_index()]
        }
    }

    fn write_tag(&mut self, reg: RegId, value: u32, width_mask: u32) {
        debug_assert!(reg.is_tag());
        let masked = value & width_mask;
        if reg.raw() < 16 {
            self.trf[reg.file_index()] = masked;
        } else {
            self.trf_fp[reg.file_index()] = masked;
        }
    }

    fn grf_value(&self, reg: RegId) -> u32 {
        debug_assert!(reg.is_grf());
        self.grf[reg.file_index()]
    }

    /// Executes one block operation. `block_address` and `op_index` locate
    /// the operation for violation reporting only.
    pub fn execute_op(
        &mut self,
        op: &BlockOp,
        block_address: u32,
        op_index: u32,
        policy: &PolicyRegisters,
        tagmem: &mut TagMemory,
        fifos: &mut Fifos,
    ) -> Result<Option<Violation>, TmcError> {
        if self.halted {
            return Err(TmcError::Halted);
        }
        match *op {
            BlockOp::Tag(ref a) => self.execute_tag_op(a, block_address, op_index, policy, tagmem, fifos),
            BlockOp::Grf { op, dst, src, imm } => {
                let value = match op {
                    GrfOp::Set => imm as u32,
                    GrfOp::Add => self.grf_value(src).wrapping_add(imm as u32),
                    GrfOp::Sub => self.grf_value(src).wrapping_sub(imm as u32),
                };
                self.grf[dst.file_index()] = value;
                self.ops_executed += 1;
                Ok(None)
            }
            // Kernel I/O is serviced by the dispatcher; at the core the
            // markers only order the block sequence.
            BlockOp::KernelRead { .. } | BlockOp::KernelWrite { .. } => {
                self.ops_executed += 1;
                Ok(None)
            }
        }
    }

    fn execute_tag_op(
        &mut self,
        a: &Annotation,
        block_address: u32,
        op_index: u32,
        policy: &PolicyRegisters,
        tagmem: &mut TagMemory,
        fifos: &mut Fifos,
    ) -> Result<Option<Violation>, TmcError> {
        // Empty-FIFO detection happens before any state change so the
        // dispatcher can re-issue this exact operation after a push.
        match a.opcode {
            Opcode::TagITR | Opcode::TagITR2 | Opcode::TagTRI | Opcode::TagTRI2
                if fifos.instr.is_empty() =>
            {
                return Err(TmcError::FifoEmpty { fifo: FifoKind::Instr });
            }
            Opcode::TagTRK if fifos.ps2pl.is_empty() => {
                return Err(TmcError::FifoEmpty { fifo: FifoKind::PsToPl });
            }
            _ => {}
        }

        let mask = policy.width_mask();
        // Operand tags inspected by the checks: sources as read, destination
        // as written (or, for tag stores, the tag that was stored).
        let mut src1_tag = None;
        let mut src2_tag = None;
        let mut dst_tag = None;

        match a.opcode {
            Opcode::TagRImm => {
                let v = (a.imm as u32) & mask;
                self.write_tag(a.dst, v, mask);
                dst_tag = Some(v);
            }
            Opcode::TagRR => {
                let s = self.read_tag(a.src1);
                src1_tag = Some(s);
                self.write_tag(a.dst, s, mask);
                dst_tag = Some(s & mask);
            }
            Opcode::TagMR => {
                let stored = self.read_tag(a.dst);
                tagmem.write_tag(self.grf_value(a.src1), stored)?;
                dst_tag = Some(stored);
            }
            Opcode::TagRRR | Opcode::TagRRR2(_) => {
                let rule = match a.opcode {
                    Opcode::TagRRR2(rule) => rule,
                    _ => policy.tpr_rule(a.class)?,
                };
                let s1 = self.read_tag(a.src1);
                let s2 = self.read_tag(a.src2);
                let old = self.read_tag(a.dst);
                let v = rule.apply(old, s1, s2) & mask;
                self.write_tag(a.dst, v, mask);
                src1_tag = Some(s1);
                src2_tag = Some(s2);
                dst_tag = Some(v);
            }
            Opcode::TagMTR | Opcode::TagMTR2 => {
                let addr = self.grf_value(a.src1).wrapping_add(a.imm as u32);
                let stored = self.read_tag(a.dst);
                tagmem.write_tag(addr, stored)?;
                dst_tag = Some(stored);
            }
            Opcode::TagTRM | Opcode::TagTRM2 => {
                let addr = self.grf_value(a.src1).wrapping_add(a.imm as u32);
                let v = tagmem.read_tag(addr)? & mask;
                self.write_tag(a.dst, v, mask);
                dst_tag = Some(v);
            }
            Opcode::TagITR | Opcode::TagITR2 => {
                let base = fifos.instr.pop().expect("emptiness checked above");
                let stored = self.read_tag(a.dst);
                tagmem.write_tag(base.wrapping_add(a.imm as u32), stored)?;
                dst_tag = Some(stored);
            }
            Opcode::TagTRI | Opcode::TagTRI2 => {
                let base = fifos.instr.pop().expect("emptiness checked above");
                let v = tagmem.read_tag(base.wrapping_add(a.imm as u32))? & mask;
                self.write_tag(a.dst, v, mask);
                dst_tag = Some(v);
            }
            Opcode::TagKTR => {
                let v = self.read_tag(a.src1);
                fifos.pl2ps.push(v)?;
                src1_tag = Some(v);
            }
            // The kernel-to-coprocessor FIFO carries an *address*; the tag is
            // fetched from tag memory at that address.
            Opcode::TagTRK => {
                let addr = fifos.ps2pl.pop().expect("emptiness checked above");
                let v = tagmem.read_tag(addr)? & mask;
                self.write_tag(a.dst, v, mask);
                dst_tag = Some(v);
            }
        }
        self.ops_executed += 1;

        let flags = policy.tcr_checks(a.class);
        for (kind, enabled, inspected) in [
            (CheckKind::Src1, flags.src1, src1_tag),
            (CheckKind::Src2, flags.src2, src2_tag),
            (CheckKind::Dst, flags.dst, dst_tag),
        ] {
            if !enabled {
                continue;
            }
            if let Some(tag) = inspected {
                if tag & policy.check_mask != 0 {
                    self.halted = true;
                    return Ok(Some(Violation {
                        slot: self.slot,
                        context: self.context,
                        block_address,
                        annotation_index: op_index,
                        checked_tag: tag,
                        check_kind: kind,
                    }));
                }
            }
        }
        Ok(None)
    }
}
