//! Per-basic-block annotation sequences and their on-disk container.
//!
//! A store maps each traced basic-block address to the ordered sequence of
//! operations the tag management core must run when the block retires. Most
//! operations are tag annotations; a few extended opcodes (numbers 16 and
//! up) maintain the dispatcher-visible general registers used as tag-memory
//! bases and mark kernel I/O points.
//!
//! Container format, all fields little-endian:
//!
//! ```text
//! magic "TANN" | version u32 = 1 | block_count u32 | reserved u32 = 0
//! then per block: address u32 | op_count u32 | op_count x u64 words
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    decode_annotation, encode_annotation, pack_word, unpack_word, AnnotError, Annotation, RegId,
};

/// Arithmetic kept by the general-register maintenance ops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GrfOp {
    /// `G[dst] <- imm`
    Set,
    /// `G[dst] <- G[src] + imm` (wrapping)
    Add,
    /// `G[dst] <- G[src] - imm` (wrapping)
    Sub,
}

impl GrfOp {
    fn number(self) -> u8 {
        match self {
            GrfOp::Set => 16,
            GrfOp::Add => 17,
            GrfOp::Sub => 18,
        }
    }

    fn mnemonic(self) -> &'static str {
        match self {
            GrfOp::Set => "GrfSet",
            GrfOp::Add => "GrfAdd",
            GrfOp::Sub => "GrfSub",
        }
    }
}

const OP_KERNEL_READ: u8 = 19;
const OP_KERNEL_WRITE: u8 = 20;

/// One operation in a block's sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockOp {
    /// A tag annotation (opcodes 0..=14).
    Tag(Annotation),
    /// General-register maintenance (opcodes 16..=18). `src` is ignored by
    /// `Set` and must be `RegId::ZERO` there.
    Grf { op: GrfOp, dst: RegId, src: RegId, imm: i32 },
    /// The block ends in a kernel read of `file_id` (opcode 19). The
    /// dispatcher services the read and pushes the file's tag back.
    KernelRead { file_id: u32 },
    /// The block ends in a kernel write to `file_id` (opcode 20).
    KernelWrite { file_id: u32 },
}

impl BlockOp {
    pub fn validate(&self) -> Result<(), AnnotError> {
        match *self {
            BlockOp::Tag(ref a) => a.validate(),
            BlockOp::Grf { op, dst, src, .. } => {
                if !dst.is_grf() {
                    return Err(AnnotError::InvalidOperandRange {
                        reason: format!("{} destination {} is not a general register", op.mnemonic(), dst),
                    });
                }
                match op {
                    GrfOp::Set if src != RegId::ZERO => Err(AnnotError::InvalidOperandRange {
                        reason: format!("GrfSet takes no source register, got {src}"),
                    }),
                    GrfOp::Add | GrfOp::Sub if !src.is_grf() => {
                        Err(AnnotError::InvalidOperandRange {
                            reason: format!(
                                "{} source {} is not a general register",
                                op.mnemonic(),
                                src
                            ),
                        })
                    }
                    _ => Ok(()),
                }
            }
            BlockOp::KernelRead { .. } | BlockOp::KernelWrite { .. } => Ok(()),
        }
    }

    /// Packs into the shared 64-bit word layout.
    pub fn encode(&self) -> Result<u64, AnnotError> {
        self.validate()?;
        Ok(match *self {
            BlockOp::Tag(ref a) => encode_annotation(a)?,
            BlockOp::Grf { op, dst, src, imm } => {
                pack_word(op.number(), 0, dst.raw(), src.raw(), 0, 0, imm)
            }
            BlockOp::KernelRead { file_id } => {
                pack_word(OP_KERNEL_READ, 0, 0, 0, 0, 0, file_id as i32)
            }
            BlockOp::KernelWrite { file_id } => {
                pack_word(OP_KERNEL_WRITE, 0, 0, 0, 0, 0, file_id as i32)
            }
        })
    }

    /// Unpacks a word, accepting both tag annotations and extended opcodes.
    pub fn decode(word: u64) -> Result<Self, AnnotError> {
        let raw = unpack_word(word);
        let op = match raw.opcode {
            0..=14 => return Ok(BlockOp::Tag(decode_annotation(word)?)),
            16 => BlockOp::Grf {
                op: GrfOp::Set,
                dst: RegId::from_raw(raw.dst)?,
                src: RegId::from_raw(raw.src1)?,
                imm: raw.imm,
            },
            17 | 18 => BlockOp::Grf {
                op: if raw.opcode == 17 { GrfOp::Add } else { GrfOp::Sub },
                dst: RegId::from_raw(raw.dst)?,
                src: RegId::from_raw(raw.src1)?,
                imm: raw.imm,
            },
            OP_KERNEL_READ => BlockOp::KernelRead { file_id: raw.imm as u32 },
            OP_KERNEL_WRITE => BlockOp::KernelWrite { file_id: raw.imm as u32 },
            n => return Err(AnnotError::UnknownOpcode { opcode: n }),
        };
        if raw.class != 0 || raw.src2 != 0 || raw.reserved != 0 {
            return Err(AnnotError::InvalidOperandRange {
                reason: format!("nonzero unused field in extended opcode {}", raw.opcode),
            });
        }
        if matches!(op, BlockOp::KernelRead { .. } | BlockOp::KernelWrite { .. })
            && (raw.dst != 0 || raw.src1 != 0)
        {
            return Err(AnnotError::InvalidOperandRange {
                reason: format!("nonzero register field in kernel opcode {}", raw.opcode),
            });
        }
        op.validate()?;
        Ok(op)
    }

    /// True for the ops that consult or update tag state (as opposed to
    /// general-register bookkeeping).
    pub fn is_tag_op(&self) -> bool {
        matches!(self, BlockOp::Tag(_))
    }
}

impl std::fmt::Display for BlockOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            BlockOp::Tag(ref a) => a.fmt(f),
            BlockOp::Grf { op: GrfOp::Set, dst, imm, .. } => {
                write!(f, "GrfSet {dst}, #{imm}")
            }
            BlockOp::Grf { op, dst, src, imm } => {
                write!(f, "{} {dst}, {src}, #{imm}", op.mnemonic())
            }
            BlockOp::KernelRead { file_id } => write!(f, "KernelRead file={file_id}"),
            BlockOp::KernelWrite { file_id } => write!(f, "KernelWrite file={file_id}"),
        }
    }
}

const MAGIC: &[u8; 4] = b"TANN";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

/// Map from basic-block address to its operation sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationStore {
    blocks: BTreeMap<u32, Vec<BlockOp>>,
}

impl AnnotationStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a block's sequence. Re-inserting an identical sequence is a
    /// no-op; a different sequence for the same address is an error, so
    /// merged stores stay unambiguous.
    pub fn insert_block(&mut self, addr: u32, ops: Vec<BlockOp>) -> Result<(), AnnotError> {
        for op in &ops {
            op.validate()?;
        }
        match self.blocks.get(&addr) {
            Some(existing) if *existing == ops => Ok(()),
            Some(_) => Err(AnnotError::DuplicateBlock { addr }),
            None => {
                self.blocks.insert(addr, ops);
                Ok(())
            }
        }
    }

    pub fn lookup_block(&self, addr: u32) -> Result<&[BlockOp], AnnotError> {
        self.blocks
            .get(&addr)
            .map(Vec::as_slice)
            .ok_or(AnnotError::MissingBlock { addr })
    }

    pub fn contains(&self, addr: u32) -> bool {
        self.blocks.contains_key(&addr)
    }

    /// Blocks in ascending address order.
    pub fn blocks(&self) -> impl Iterator<Item = (u32, &[BlockOp])> {
        self.blocks.iter().map(|(a, v)| (*a, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Folds another store in, with the same duplicate rules as
    /// `insert_block`.
    pub fn merge(&mut self, other: &AnnotationStore) -> Result<(), AnnotError> {
        for (addr, ops) in other.blocks() {
            self.insert_block(addr, ops.to_vec())?;
        }
        Ok(())
    }

    /// Serialises to the container format. Blocks are emitted in address
    /// order, so equal stores produce identical bytes.
    pub fn save(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.blocks.len() * 24);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        for (addr, ops) in &self.blocks {
            out.extend_from_slice(&addr.to_le_bytes());
            out.extend_from_slice(&(ops.len() as u32).to_le_bytes());
            for op in ops {
                let word = op.encode().expect("ops validated on insertion");
                out.extend_from_slice(&word.to_le_bytes());
            }
        }
        out
    }

    pub fn load(bytes: &[u8]) -> Result<Self, AnnotError> {
        if bytes.len() < HEADER_LEN {
            return Err(AnnotError::CorruptHeader { reason: "shorter than the fixed header" });
        }
        if &bytes[0..4] != MAGIC {
            return Err(AnnotError::CorruptHeader { reason: "bad magic" });
        }
        if read_u32(bytes, 4) != VERSION {
            return Err(AnnotError::CorruptHeader { reason: "unsupported version" });
        }
        let block_count = read_u32(bytes, 8) as usize;
        if read_u32(bytes, 12) != 0 {
            return Err(AnnotError::CorruptHeader { reason: "nonzero reserved header word" });
        }
        let mut store = AnnotationStore::new();
        let mut offset = HEADER_LEN;
        for _ in 0..block_count {
            if bytes.len() < offset + 8 {
                return Err(AnnotError::TruncatedBlock { offset });
            }
            let addr = read_u32(bytes, offset);
            let op_count = read_u32(bytes, offset + 4) as usize;
            offset += 8;
            let mut ops = Vec::with_capacity(op_count);
            for _ in 0..op_count {
                if bytes.len() < offset + 8 {
                    return Err(AnnotError::TruncatedBlock { offset });
                }
                let word = u64::from_le_bytes(bytes[offset..offset + 8].try_into().unwrap());
                ops.push(BlockOp::decode(word)?);
                offset += 8;
            }
            store.insert_block(addr, ops)?;
        }
        if offset != bytes.len() {
            return Err(AnnotError::CorruptHeader { reason: "trailing bytes after last block" });
        }
        Ok(store)
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap())
}
