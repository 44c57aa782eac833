//! A small deterministic RISC-style workload ISA used to drive the tag
//! pipeline end to end: programs are parsed from text, instrumented with one
//! of three site-selection strategies, translated into per-block annotation
//! streams, and executed under a round-robin scheduler that emits the trace
//! packets, instrumentation pushes, and kernel I/O events the dispatcher
//! consumes.
//!
//! The machine is deliberately minimal but complete enough to express the
//! interesting flows: word-sized integer registers `r0`–`r15`, float
//! registers `s0`–`s31` (bit-cast f32 arithmetic), byte-addressed sparse data
//! memory, bounded syscall-style file I/O, and call/return with a link
//! register. Three registers have fixed roles: `r13`/`sp` and `r11`/`fp` are
//! the statically tracked address bases, and `r9` is reserved as the
//! memory-mapped instrumentation window (`str rX, [r9]` exports a base
//! address to the trace unit and is never ordinary memory traffic).

pub mod analyze;
pub mod execute;
pub mod fs;
pub mod generate;
pub mod instrument;
pub mod machine;
pub mod metrics;
pub mod oracle;
pub mod parse;
pub mod pipeline;

pub use analyze::{analyze, block_starts, blocks};
pub use execute::{execute, ExecOutcome, ExecSeeds, ThreadFinal, ThreadSpec};
pub use fs::{SimFile, SimFileSystem};
pub use generate::{random_scenario, Scenario};
pub use instrument::instrument;
pub use machine::DataMemory;
pub use metrics::{measure, strategy_table, StrategyMetrics};
pub use oracle::{oracle_taint, OracleOutcome};
pub use parse::{parse_program, render_program};
pub use pipeline::{run_pipeline, PipelineError, PipelineOutput};

use crate::annot::AnnotError;

/// Stack pointer alias (`sp`).
pub const SP: u8 = 13;
/// Frame pointer alias (`fp`).
pub const FP: u8 = 11;
/// Link register alias (`lr`), written by `call`, consumed by `ret`.
pub const LR: u8 = 14;
/// Program counter alias (`pc`); readable only as a memory base and yields
/// the address of the reading instruction plus 8.
pub const PC: u8 = 15;
/// Reserved instrumentation window register. `str rX, [r9]` is the address
/// export instruction; `r9` is otherwise never a valid operand.
pub const INSTR_WINDOW: u8 = 9;
/// Initial link-register value: a `ret` that lands here ends the thread
/// instead of transferring control.
pub const RETURN_SENTINEL: u32 = 0xFFFF_FFFC;
/// Data addresses below this fault; catches null-ish pointers early.
pub const NULL_GUARD: u32 = 0x1000;
/// Upper bound on bytes moved by one file transfer.
pub const IO_LIMIT: u32 = 0x1_0000;

/// Integer ALU operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AluOp {
    Add,
    Sub,
    And,
    Or,
    Xor,
}

impl AluOp {
    pub fn mnemonic(self) -> &'static str {
        match self {
            AluOp::Add => "add",
            AluOp::Sub => "sub",
            AluOp::And => "and",
            AluOp::Or => "or",
            AluOp::Xor => "xor",
        }
    }

    pub fn apply(self, a: u32, b: u32) -> u32 {
        match self {
            AluOp::Add => a.wrapping_add(b),
            AluOp::Sub => a.wrapping_sub(b),
            AluOp::And => a & b,
            AluOp::Or => a | b,
            AluOp::Xor => a ^ b,
        }
    }
}

/// Float ALU operation over bit-cast f32 values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FAluOp {
    FAdd,
    FSub,
    FMul,
}

impl FAluOp {
    pub fn mnemonic(self) -> &'static str {
        match self {
            FAluOp::FAdd => "fadd",
            FAluOp::FSub => "fsub",
            FAluOp::FMul => "fmul",
        }
    }

    pub fn apply(self, a: u32, b: u32) -> u32 {
        let (x, y) = (f32::from_bits(a), f32::from_bits(b));
        let r = match self {
            FAluOp::FAdd => x + y,
            FAluOp::FSub => x - y,
            FAluOp::FMul => x * y,
        };
        r.to_bits()
    }
}

/// Second ALU operand: register or immediate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operand2 {
    Reg(u8),
    Imm(i32),
}

/// One machine instruction. Every instruction occupies four bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyInstr {
    /// `mov rd, #imm`
    MovImm { rd: u8, imm: i32 },
    /// `add/sub/and/or/xor rd, rn, rm|#imm`
    Alu { op: AluOp, rd: u8, rn: u8, op2: Operand2 },
    /// `ldr rt, [base, #offset]`
    Ldr { rt: u8, base: u8, offset: i32 },
    /// `str rt, [base, #offset]`
    Str { rt: u8, base: u8, offset: i32 },
    /// `fldr st, [base, #offset]`
    FLdr { st: u8, base: u8, offset: i32 },
    /// `fstr st, [base, #offset]`
    FStr { st: u8, base: u8, offset: i32 },
    /// `fadd/fsub/fmul sd, sn, sm`
    FAlu { op: FAluOp, sd: u8, sn: u8, sm: u8 },
    /// `b target` — unconditional branch.
    B { target: u32 },
    /// `bnz rc, target` — branch when `rc` is nonzero; the not-taken path
    /// falls through to the next instruction and still starts a new block.
    Bnz { cond: u8, target: u32 },
    /// `call target` — sets `lr` to the return address and branches.
    Call { target: u32 },
    /// `ret` — branches to `lr`; ends the thread if `lr` still holds
    /// [`RETURN_SENTINEL`].
    Ret,
    /// `sysread file, rbuf, rlen` — copies up to `rlen` bytes from the file
    /// into memory at `rbuf` and raises a kernel read request for tagging.
    SysRead { file_id: u32, buf: u8, len: u8 },
    /// `syswrite file, rbuf, rlen` — replaces the file's bytes with `rlen`
    /// bytes read from `rbuf` and raises a kernel write request.
    SysWrite { file_id: u32, buf: u8, len: u8 },
    /// `str rX, [r9]` — the inserted instrumentation instruction: exports the
    /// value of `addr_reg` (a memory base) to the trace unit's push stream.
    InstrEmit { addr_reg: u8 },
}

/// Shape of a memory access for site classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemSite {
    pub treg: u8,
    pub base: u8,
    pub offset: i32,
    pub is_store: bool,
    pub is_float: bool,
}

impl ToyInstr {
    /// The access shape when this is a plain load/store; `InstrEmit` and
    /// syscalls are not memory sites.
    pub fn mem_site(&self) -> Option<MemSite> {
        match *self {
            ToyInstr::Ldr { rt, base, offset } => {
                Some(MemSite { treg: rt, base, offset, is_store: false, is_float: false })
            }
            ToyInstr::Str { rt, base, offset } => {
                Some(MemSite { treg: rt, base, offset, is_store: true, is_float: false })
            }
            ToyInstr::FLdr { st, base, offset } => {
                Some(MemSite { treg: st, base, offset, is_store: false, is_float: true })
            }
            ToyInstr::FStr { st, base, offset } => {
                Some(MemSite { treg: st, base, offset, is_store: true, is_float: true })
            }
            _ => None,
        }
    }

    /// True when executing this instruction ends the current block (all
    /// branches, call/return, and syscalls, which transfer to the kernel and
    /// resume at the next instruction).
    pub fn is_control_transfer(&self) -> bool {
        matches!(
            self,
            ToyInstr::B { .. }
                | ToyInstr::Bnz { .. }
                | ToyInstr::Call { .. }
                | ToyInstr::Ret
                | ToyInstr::SysRead { .. }
                | ToyInstr::SysWrite { .. }
        )
    }

    /// Static branch target, when there is one.
    pub fn target(&self) -> Option<u32> {
        match *self {
            ToyInstr::B { target } | ToyInstr::Bnz { target, .. } | ToyInstr::Call { target } => {
                Some(target)
            }
            _ => None,
        }
    }
}

/// An instruction plus placement metadata: whether it belongs to a library
/// routine, which is the granularity of the instrumentation ablation switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlacedInstr {
    pub instr: ToyInstr,
    pub lib: bool,
}

/// Which sites the instrumenter rewrites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// The conventional scheme: every load/store with a register base is
    /// instrumented, and each site is costed at two added instructions
    /// (address materialisation plus the exporting store). The emitted code
    /// is identical to [`Strategy::S1`]; the second instruction exists only
    /// in the size accounting.
    Baseline,
    /// Every load/store with a register base is instrumented with a single
    /// exporting store per site.
    S1,
    /// Only loads/stores whose base is a general register are instrumented;
    /// `sp`/`fp`/`pc`-based accesses are recovered statically from the
    /// mirrored address registers instead.
    S2,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Baseline, Strategy::S1, Strategy::S2];

    /// Command-line / report name.
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Baseline => "related",
            Strategy::S1 => "s1",
            Strategy::S2 => "s2",
        }
    }

    pub fn from_name(name: &str) -> Option<Strategy> {
        match name {
            "related" => Some(Strategy::Baseline),
            "s1" => Some(Strategy::S1),
            "s2" => Some(Strategy::S2),
            _ => None,
        }
    }

    /// Whether a load/store with this base register gets an exporting store.
    /// `pc`-based accesses have statically known addresses and are never
    /// instrumented; `sp`/`fp` drop out only under [`Strategy::S2`].
    pub fn instruments_base(self, base: u8) -> bool {
        match self {
            Strategy::Baseline | Strategy::S1 => base != PC,
            Strategy::S2 => base != PC && base != SP && base != FP,
        }
    }

    /// Added instructions charged per instrumented site in the size model.
    pub fn added_per_site(self) -> usize {
        match self {
            Strategy::Baseline => 2,
            Strategy::S1 | Strategy::S2 => 1,
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How a program was instrumented; carried so that later stages can verify
/// they are looking at the variant they expect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstrumentationTag {
    pub strategy: Strategy,
    /// False when library-routine sites were deliberately left alone.
    pub lib_instrumentation: bool,
}

/// A complete program: a contiguous four-byte-per-instruction image starting
/// at `base`, entered at the first instruction.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ToyProgram {
    /// Address of the first instruction; always four-byte aligned.
    pub base: u32,
    pub instrs: Vec<PlacedInstr>,
    /// Initial values for general registers, applied before the first
    /// instruction. Only plain scratch registers may be seeded; `sp`/`fp`
    /// must be established by the program itself so their statically
    /// mirrored copies stay exact.
    pub init_regs: std::collections::BTreeMap<u8, u32>,
    /// Set by the instrumenter on its output.
    pub instrumented_with: Option<InstrumentationTag>,
}

impl ToyProgram {
    /// Entry address: the first instruction.
    pub fn entry(&self) -> u32 {
        self.base
    }

    pub fn len(&self) -> usize {
        self.instrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instrs.is_empty()
    }

    /// Code image size in bytes.
    pub fn code_bytes(&self) -> usize {
        self.instrs.len() * 4
    }

    /// Address one past the last instruction.
    pub fn end(&self) -> u32 {
        self.base + (self.instrs.len() as u32) * 4
    }

    pub fn addr_of(&self, index: usize) -> u32 {
        self.base + (index as u32) * 4
    }

    /// Index of the instruction at `addr`, when `addr` is an aligned address
    /// inside the image.
    pub fn index_of(&self, addr: u32) -> Option<usize> {
        if addr < self.base || addr % 4 != 0 {
            return None;
        }
        let idx = ((addr - self.base) / 4) as usize;
        if idx < self.instrs.len() {
            Some(idx)
        } else {
            None
        }
    }

    pub fn instr_at(&self, addr: u32) -> Option<&PlacedInstr> {
        self.index_of(addr).map(|i| &self.instrs[i])
    }
}

/// A fault raised while executing a program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum RuntimeFault {
    #[error("data access at 0x{addr:08x} below the null guard (pc 0x{at:08x})")]
    NullAccess { addr: u32, at: u32 },
    #[error("unaligned word access at 0x{addr:08x} (pc 0x{at:08x})")]
    UnalignedAccess { addr: u32, at: u32 },
    #[error("control transfer to 0x{target:08x}, not an instruction (pc 0x{at:08x})")]
    BadJump { target: u32, at: u32 },
    #[error("file transfer of {len} bytes exceeds the I/O limit (pc 0x{at:08x})")]
    OversizedIo { len: u32, at: u32 },
    #[error("schedule exceeded {limit} total steps without finishing")]
    StepLimit { limit: u64 },
}

/// Errors from parsing, analysis, instrumentation accounting, or execution.
#[derive(Debug, thiserror::Error)]
pub enum ToyIsaError {
    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("file manifest error on line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error(
        "memory access at 0x{addr:08x} uses dynamic base r{base} without an \
         exporting store; its address cannot be recovered"
    )]
    UninstrumentedDynamicAccess { addr: u32, base: u8 },
    #[error("branch at 0x{from:08x} targets 0x{target:08x}, which is not an instruction")]
    BadTarget { from: u32, target: u32 },
    #[error("block at 0x{start:08x} runs past the end of the program without a control transfer")]
    BlockFallsOffEnd { start: u32 },
    #[error("instrumented program does not derive from the given original: {reason}")]
    MismatchedOrigin { reason: String },
    #[error(transparent)]
    Fault(#[from] RuntimeFault),
    #[error(transparent)]
    Annot(#[from] AnnotError),
}

/// Register name for diagnostics and program rendering.
pub fn reg_name(r: u8) -> String {
    match r {
        SP => "sp".into(),
        FP => "fp".into(),
        LR => "lr".into(),
        PC => "pc".into(),
        _ => format!("r{r}"),
    }
}
