//! Desk-scale simulator of an off-core dynamic information flow tracking
//! (DIFT) coprocessor driven by a program-flow trace.

pub mod annot;
pub mod dispatch;
pub mod pft;
pub mod tagmem;
pub mod tmc;
pub mod toyisa;

pub use annot::{
    Annotation, AnnotationStore, BlockOp, CheckFlags, GrfOp, InstrClass, Opcode, PolicyMode,
    PolicyRegisters, PropagationRule, RegId,
};
pub use dispatch::{
    DispatchConfig, DispatchError, DispatchMode, EventItem, Fifo, FifoKind, Fifos, KernelIoKind,
    KernelRequest, RunInput, RunReport, TagStateView,
};
pub use pft::{ContextId, DecodedEntry, SlotTable, TracePacket};
pub use tagmem::{TagLocation, TagMemory, Tmmu};
pub use tmc::{CheckKind, TmcState, Violation};
