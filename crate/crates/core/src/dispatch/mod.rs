//! Trace dispatcher: feeds decoded basic-block entries, instrumentation
//! pushes, and kernel I/O requests to the per-slot (or per-policy) tag
//! management core units, services kernel file I/O through the word FIFOs,
//! and reports final tag state.
//!
//! ## Event stream
//! The driver consumes one totally ordered event log produced by the program
//! executor alongside the trace. `Entry` items consume the next decoded
//! trace entry in order — block addresses always come from the decoded wire
//! format, never from the executor's memory of them — while instrumentation
//! pushes and kernel requests sit between entries at their program
//! positions. This replaces asynchronous hardware FIFO timing with a
//! deterministic order, which turns the synchronization contract ("a kernel
//! request acts only after every earlier action of its thread") into a
//! checkable position in one log.
//!
//! ## Stalls
//! A block whose next operation needs a word from the instrumentation FIFO
//! simply waits: the block re-queues at the front of its unit's work queue
//! and the next push resumes it. Stalling is routine — a block's trace entry
//! always precedes the store addresses generated inside the block — and only
//! a stall still pending at end of stream is an error.
//!
//! ## Halted units
//! After a violation the unit freezes: queued work is discarded, later
//! entries are skipped, pushes are dropped, and kernel requests are consumed
//! without effect — all counted and logged. A kernel request being serviced
//! is atomic here, so a violation can never interrupt one midway.

mod fifo;
mod report;

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annot::{AnnotError, AnnotationStore, PolicyRegisters};
use crate::pft::{ContextId, DecodedEntry, SlotTable};
use crate::tagmem::TagMemory;
use crate::tmc::{TmcError, TmcState, Violation};

pub use fifo::{Fifo, FifoKind, FifoOverflow, Fifos, DEFAULT_FIFO_DEPTH};
pub use report::{
    diff_lines, equivalence_text, FifoStats, KernelLogEntry, KernelOpKind, RunReport,
    TagStateView, UnitReport, ViolationSummary,
};

/// Most units a run may configure (multi-policy mode).
pub const MAX_UNITS: usize = 8;

/// Most hardware-thread slots a decoded trace can carry (2 address bits).
pub const MAX_SLOTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DispatchError {
    #[error("invalid dispatch configuration: {reason}")]
    Config { reason: String },
    /// A decoded entry (or push/request routed by context) names a slot with
    /// no unit behind it.
    #[error("slot {slot} has no unit (run configured {tmc_count})")]
    TooManySlots { slot: u8, tmc_count: usize },
    #[error("malformed event stream: {reason}")]
    Stream { reason: String },
    #[error("no annotation block for entry address 0x{address:08x}")]
    MissingBlock { address: u32 },
    /// A unit failed terminally (FIFO overflow, translation miss, or a word
    /// that never arrived).
    #[error("unit {unit}: {source}")]
    Unit { unit: usize, source: TmcError },
}

/// How units map onto the decoded trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DispatchMode {
    /// Unit `k` serves hardware-thread slot `k`; one policy shared by all.
    PerThread,
    /// Every unit replays the slot-0 stream under its own policy.
    MultiPolicy,
}

impl DispatchMode {
    pub fn name(self) -> &'static str {
        match self {
            DispatchMode::PerThread => "per_thread",
            DispatchMode::MultiPolicy => "multi_policy",
        }
    }
}

impl std::fmt::Display for DispatchMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Unit layout of a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispatchConfig {
    pub mode: DispatchMode,
    /// One policy in per-thread mode; one per unit in multi-policy mode.
    pub policies: Vec<PolicyRegisters>,
    pub tmc_count: usize,
    pub fifo_depth: usize,
}

impl DispatchConfig {
    pub fn per_thread(policy: PolicyRegisters, tmc_count: usize) -> Self {
        DispatchConfig {
            mode: DispatchMode::PerThread,
            policies: vec![policy],
            tmc_count,
            fifo_depth: DEFAULT_FIFO_DEPTH,
        }
    }

    pub fn multi_policy(policies: Vec<PolicyRegisters>) -> Self {
        let tmc_count = policies.len();
        DispatchConfig {
            mode: DispatchMode::MultiPolicy,
            policies,
            tmc_count,
            fifo_depth: DEFAULT_FIFO_DEPTH,
        }
    }

    pub fn validate(&self) -> Result<(), DispatchError> {
        let fail = |reason: String| Err(DispatchError::Config { reason });
        match self.mode {
            DispatchMode::PerThread => {
                if self.policies.len() != 1 {
                    return fail(format!(
                        "per-thread mode shares one policy, got {}",
                        self.policies.len()
                    ));
                }
                if self.tmc_count == 0 || self.tmc_count > MAX_SLOTS {
                    return fail(format!(
                        "per-thread unit count {} outside 1..={MAX_SLOTS}",
                        self.tmc_count
                    ));
                }
            }
            DispatchMode::MultiPolicy => {
                if self.tmc_count == 0 || self.tmc_count > MAX_UNITS {
                    return fail(format!(
                        "multi-policy unit count {} outside 1..={MAX_UNITS}",
                        self.tmc_count
                    ));
                }
                if self.policies.len() != self.tmc_count {
                    return fail(format!(
                        "multi-policy mode needs one policy per unit: {} policies, {} units",
                        self.policies.len(),
                        self.tmc_count
                    ));
                }
            }
        }
        // A kernel read notification moves three words at once.
        if self.fifo_depth < 3 {
            return fail(format!("FIFO depth {} below the 3-word minimum", self.fifo_depth));
        }
        for (i, p) in self.policies.iter().enumerate() {
            if let Err(e) = p.validate() {
                return fail(format!("policy {i}: {e}"));
            }
        }
        Ok(())
    }
}

/// The payload half of a kernel request: which direction, and the buffer it
/// concerns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelIoKind {
    Read { buf_vaddr: u32, count_bytes: u32 },
    Write { buf_vaddr: u32, count_bytes: u32 },
}

impl KernelIoKind {
    pub fn op_kind(self) -> KernelOpKind {
        match self {
            KernelIoKind::Read { .. } => KernelOpKind::Read,
            KernelIoKind::Write { .. } => KernelOpKind::Write,
        }
    }
}

/// A file-I/O request as it enters the event stream. The file's *tag* is
/// deliberately absent: it is resolved from the file-tag table at service
/// time, after every earlier write of the same run has folded in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelRequest {
    pub ctx: ContextId,
    pub file_id: u32,
    pub kind: KernelIoKind,
}

/// One item of the totally ordered event log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventItem {
    /// The traced core entered the next basic block of the decoded trace;
    /// consumes the next `DecodedEntry` in order.
    Entry,
    /// An instrumented store pushed a data address for `ctx`'s unit(s).
    InstrPush { ctx: ContextId, addr: u32 },
    /// The kernel raised a file-I/O request on behalf of `ctx`.
    Kernel(KernelRequest),
}

/// Kernel-to-coprocessor read notification: after copying file bytes into a
/// buffer, the kernel sends the file's tag, the buffer address, and the byte
/// count so the coprocessor can tag the buffer to match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadMsg {
    pub file_tag: u32,
    pub buf_vaddr: u32,
    pub count_bytes: u32,
    pub ctx: ContextId,
}

/// Kernel-to-coprocessor write query: before committing buffer bytes to a
/// file, the kernel asks for the buffer's folded tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteMsg {
    pub buf_vaddr: u32,
    pub count_bytes: u32,
    pub ctx: ContextId,
}

/// A kernel file-I/O message crossing the kernel/coprocessor boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelMessage {
    Read(ReadMsg),
    Write(WriteMsg),
}

impl KernelMessage {
    pub fn ctx(&self) -> ContextId {
        match *self {
            KernelMessage::Read(m) => m.ctx,
            KernelMessage::Write(m) => m.ctx,
        }
    }
}

/// Services a read notification. The three message words travel through the
/// kernel-to-coprocessor FIFO; the values popped back out drive the tagging,
/// so the transport is load-bearing, not decorative. The whole destination
/// buffer is tagged with the file's tag, word by word; an unmapped buffer
/// fails before any word is written. Returning is the ack — the simulated
/// kernel blocks until tagging completes.
pub fn handle_read_msg(
    m: &ReadMsg,
    tagmem: &mut TagMemory,
    fifos: &mut Fifos,
) -> Result<(), TmcError> {
    fifos.ps2pl.push(m.file_tag)?;
    fifos.ps2pl.push(m.buf_vaddr)?;
    fifos.ps2pl.push(m.count_bytes)?;
    let file_tag = fifos.ps2pl.pop().expect("three words just pushed");
    let buf_vaddr = fifos.ps2pl.pop().expect("three words just pushed");
    let count_bytes = fifos.ps2pl.pop().expect("three words just pushed");
    tagmem.write_range(buf_vaddr, count_bytes, file_tag)?;
    Ok(())
}

/// Services a write query: the buffer address and byte count travel through
/// the kernel-to-coprocessor FIFO, the buffer's word tags fold together with
/// OR, and the result goes back through the coprocessor-to-kernel FIFO.
/// Returns the folded tag, which the caller also finds as the head of
/// `pl2ps`.
pub fn handle_write_msg(
    m: &WriteMsg,
    tagmem: &mut TagMemory,
    fifos: &mut Fifos,
) -> Result<u32, TmcError> {
    fifos.ps2pl.push(m.buf_vaddr)?;
    fifos.ps2pl.push(m.count_bytes)?;
    let buf_vaddr = fifos.ps2pl.pop().expect("two words just pushed");
    let count_bytes = fifos.ps2pl.pop().expect("two words just pushed");
    let folded = tagmem.fold_range(buf_vaddr, count_bytes)?;
    fifos.pl2ps.push(folded)?;
    Ok(folded)
}

/// Everything one dispatcher run consumes.
pub struct RunInput<'a> {
    pub entries: &'a [DecodedEntry],
    pub slots: &'a SlotTable,
    pub store: &'a AnnotationStore,
    pub config: DispatchConfig,
    /// One tag memory per unit, with process mappings already registered.
    pub tagmems: Vec<TagMemory>,
    pub events: &'a [EventItem],
    /// Initial file-id → tag table: shared by all units in per-thread mode,
    /// cloned per unit in multi-policy mode.
    pub file_tags: BTreeMap<u32, u32>,
}

enum WorkItem {
    Block { addr: u32, next_op: usize },
    Kernel { req: KernelRequest, event_pos: usize, anns_at_event: u64 },
}

struct Unit {
    tmc: TmcState,
    tagmem: TagMemory,
    fifos: Fifos,
    policy: PolicyRegisters,
    queue: VecDeque<WorkItem>,
    violation: Option<Violation>,
    entries_dispatched: u64,
    blocks_executed: u64,
    skipped_entries: u64,
    dropped_pushes: u64,
    skipped_kernel: u64,
    file_tags: Option<BTreeMap<u32, u32>>,
}

/// Runs the event stream to completion and reports final state.
///
/// Deterministic: identical inputs produce byte-identical reports. Units
/// execute strictly in event order; within one event, lower-numbered units
/// go first (observable only through the shared file table, which
/// multi-policy mode does not share).
pub fn run(input: RunInput<'_>) -> Result<RunReport, DispatchError> {
    let RunInput { entries, slots, store, config, tagmems, events, file_tags } = input;
    config.validate()?;
    if tagmems.len() != config.tmc_count {
        return Err(DispatchError::Config {
            reason: format!(
                "{} tag memories for {} units",
                tagmems.len(),
                config.tmc_count
            ),
        });
    }

    let default_ctx = ContextId::new(0, 0).expect("zero context is valid");
    let mut units: Vec<Unit> = tagmems
        .into_iter()
        .enumerate()
        .map(|(k, tagmem)| {
            let (slot, policy) = match config.mode {
                DispatchMode::PerThread => (k as u8, config.policies[0]),
                DispatchMode::MultiPolicy => (0, config.policies[k]),
            };
            let context = slots.context(slot).unwrap_or(default_ctx);
            Unit {
                tmc: TmcState::new(slot, context),
                tagmem,
                fifos: Fifos::new(config.fifo_depth),
                policy,
                queue: VecDeque::new(),
                violation: None,
                entries_dispatched: 0,
                blocks_executed: 0,
                skipped_entries: 0,
                dropped_pushes: 0,
                skipped_kernel: 0,
                file_tags: match config.mode {
                    DispatchMode::MultiPolicy => Some(file_tags.clone()),
                    DispatchMode::PerThread => None,
                },
            }
        })
        .collect();

    let mut shared_files = file_tags;
    let mut kernel_log: Vec<KernelLogEntry> = Vec::new();
    let mut next_entry = 0usize;

    for (event_pos, ev) in events.iter().enumerate() {
        match *ev {
            EventItem::Entry => {
                let entry = *entries.get(next_entry).ok_or_else(|| DispatchError::Stream {
                    reason: format!(
                        "event {event_pos} needs decoded entry {next_entry}, but the trace has {}",
                        entries.len()
                    ),
                })?;
                next_entry += 1;
                for k in target_units(&config, entry.slot())? {
                    let unit = &mut units[k];
                    if unit.tmc.halted() {
                        unit.skipped_entries += 1;
                        continue;
                    }
                    unit.entries_dispatched += 1;
                    unit.queue.push_back(WorkItem::Block { addr: entry.address(), next_op: 0 });
                    drain(k, unit, store, &mut shared_files, &mut kernel_log, event_pos, false)?;
                }
            }
            EventItem::InstrPush { ctx, addr } => {
                let slot = slots.slot_of(ctx).ok_or_else(|| DispatchError::Stream {
                    reason: format!("instrumentation push for unknown context ({ctx})"),
                })?;
                for k in target_units(&config, slot)? {
                    let unit = &mut units[k];
                    if unit.tmc.halted() {
                        unit.dropped_pushes += 1;
                        continue;
                    }
                    unit.fifos
                        .instr
                        .push(addr)
                        .map_err(|e| DispatchError::Unit { unit: k, source: TmcError::from(e) })?;
                    drain(k, unit, store, &mut shared_files, &mut kernel_log, event_pos, false)?;
                }
            }
            EventItem::Kernel(req) => {
                let slot = slots.slot_of(req.ctx).ok_or_else(|| DispatchError::Stream {
                    reason: format!("kernel request for unknown context ({})", req.ctx),
                })?;
                for k in target_units(&config, slot)? {
                    let unit = &mut units[k];
                    if unit.tmc.halted() {
                        unit.skipped_kernel += 1;
                        let anns = unit.tmc.ops_executed();
                        kernel_log.push(KernelLogEntry {
                            unit: k,
                            ctx: req.ctx,
                            op: req.kind.op_kind(),
                            file_id: req.file_id,
                            event_pos,
                            service_pos: event_pos,
                            anns_at_event: anns,
                            anns_at_service: anns,
                            reply: None,
                            skipped: true,
                        });
                        continue;
                    }
                    let anns_at_event = unit.tmc.ops_executed();
                    unit.queue.push_back(WorkItem::Kernel { req, event_pos, anns_at_event });
                    drain(k, unit, store, &mut shared_files, &mut kernel_log, event_pos, false)?;
                }
            }
        }
    }

    if next_entry != entries.len() {
        return Err(DispatchError::Stream {
            reason: format!(
                "{} decoded entries were never consumed by the event stream",
                entries.len() - next_entry
            ),
        });
    }
    // Anything still queued is a block waiting on a word that will never
    // arrive; re-draining with the stream exhausted turns the stall into the
    // terminal empty-FIFO error.
    for (k, unit) in units.iter_mut().enumerate() {
        if !unit.queue.is_empty() {
            drain(k, unit, store, &mut shared_files, &mut kernel_log, events.len(), true)?;
        }
    }

    let unit_reports = units
        .into_iter()
        .enumerate()
        .map(|(k, u)| {
            let stats = |f: &Fifo| FifoStats {
                high_water: f.high_water(),
                pushes: f.pushes(),
                pops: f.pops(),
            };
            UnitReport {
                unit: k,
                slot: u.tmc.slot(),
                context: u.tmc.context(),
                halted: u.tmc.halted(),
                trf: *u.tmc.trf(),
                trf_fp: *u.tmc.trf_fp(),
                grf: *u.tmc.grf(),
                ops_executed: u.tmc.ops_executed(),
                blocks_executed: u.blocks_executed,
                entries_dispatched: u.entries_dispatched,
                skipped_entries: u.skipped_entries,
                dropped_pushes: u.dropped_pushes,
                skipped_kernel: u.skipped_kernel,
                mem_tags: u.tagmem.nonzero_tags(),
                file_tags: u.file_tags,
                fifo_instr: stats(&u.fifos.instr),
                fifo_ps2pl: stats(&u.fifos.ps2pl),
                fifo_pl2ps: stats(&u.fifos.pl2ps),
                violation: u.violation,
            }
        })
        .collect();

    Ok(RunReport {
        mode: config.mode,
        units: unit_reports,
        file_tags: match config.mode {
            DispatchMode::PerThread => Some(shared_files),
            DispatchMode::MultiPolicy => None,
        },
        kernel_log,
        entries_total: entries.len(),
        events_total: events.len(),
    })
}

/// The unit indices an event for `slot` fans out to.
fn target_units(
    config: &DispatchConfig,
    slot: u8,
) -> Result<std::ops::Range<usize>, DispatchError> {
    match config.mode {
        DispatchMode::PerThread => {
            if (slot as usize) >= config.tmc_count {
                return Err(DispatchError::TooManySlots { slot, tmc_count: config.tmc_count });
            }
            Ok(slot as usize..slot as usize + 1)
        }
        DispatchMode::MultiPolicy => {
            if slot != 0 {
                return Err(DispatchError::TooManySlots { slot, tmc_count: config.tmc_count });
            }
            Ok(0..config.tmc_count)
        }
    }
}

/// Executes the unit's queued work until it empties or stalls. With
/// `at_end_of_stream` set, a stall is terminal instead.
fn drain(
    unit_idx: usize,
    unit: &mut Unit,
    store: &AnnotationStore,
    shared_files: &mut BTreeMap<u32, u32>,
    kernel_log: &mut Vec<KernelLogEntry>,
    event_pos: usize,
    at_end_of_stream: bool,
) -> Result<(), DispatchError> {
    while let Some(item) = unit.queue.pop_front() {
        match item {
            WorkItem::Block { addr, mut next_op } => {
                let ops = store.lookup_block(addr).map_err(|e| match e {
                    AnnotError::MissingBlock { addr } => DispatchError::MissingBlock { address: addr },
                    other => DispatchError::Unit { unit: unit_idx, source: TmcError::from(other) },
                })?;
                while next_op < ops.len() {
                    match unit.tmc.execute_op(
                        &ops[next_op],
                        addr,
                        next_op as u32,
                        &unit.policy,
                        &mut unit.tagmem,
                        &mut unit.fifos,
                    ) {
                        Ok(None) => next_op += 1,
                        Ok(Some(v)) => {
                            unit.violation = Some(v);
                            discard_after_halt(unit_idx, unit, kernel_log, event_pos);
                            return Ok(());
                        }
                        Err(TmcError::FifoEmpty { .. }) if !at_end_of_stream => {
                            unit.queue.push_front(WorkItem::Block { addr, next_op });
                            return Ok(());
                        }
                        Err(e) => return Err(DispatchError::Unit { unit: unit_idx, source: e }),
                    }
                }
                unit.blocks_executed += 1;
            }
            WorkItem::Kernel { req, event_pos: requested_at, anns_at_event } => {
                service_kernel(
                    unit_idx,
                    unit,
                    shared_files,
                    kernel_log,
                    req,
                    requested_at,
                    event_pos,
                    anns_at_event,
                )?;
            }
        }
    }
    Ok(())
}

/// Empties the queue of a freshly halted unit, counting and logging each
/// discarded item.
fn discard_after_halt(
    unit_idx: usize,
    unit: &mut Unit,
    kernel_log: &mut Vec<KernelLogEntry>,
    event_pos: usize,
) {
    while let Some(item) = unit.queue.pop_front() {
        match item {
            WorkItem::Block { .. } => unit.skipped_entries += 1,
            WorkItem::Kernel { req, event_pos: requested_at, anns_at_event } => {
                unit.skipped_kernel += 1;
                kernel_log.push(KernelLogEntry {
                    unit: unit_idx,
                    ctx: req.ctx,
                    op: req.kind.op_kind(),
                    file_id: req.file_id,
                    event_pos: requested_at,
                    service_pos: event_pos,
                    anns_at_event,
                    anns_at_service: unit.tmc.ops_executed(),
                    reply: None,
                    skipped: true,
                });
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn service_kernel(
    unit_idx: usize,
    unit: &mut Unit,
    shared_files: &mut BTreeMap<u32, u32>,
    kernel_log: &mut Vec<KernelLogEntry>,
    req: KernelRequest,
    requested_at: usize,
    service_pos: usize,
    anns_at_event: u64,
) -> Result<(), DispatchError> {
    let table = match unit.file_tags {
        Some(ref mut t) => t,
        None => shared_files,
    };
    let reply = match req.kind {
        KernelIoKind::Read { buf_vaddr, count_bytes } => {
            // The file's tag is read at service time, so every earlier write
            // of this run has already folded in.
            let file_tag = table.get(&req.file_id).copied().unwrap_or(0);
            let msg = ReadMsg { file_tag, buf_vaddr, count_bytes, ctx: req.ctx };
            handle_read_msg(&msg, &mut unit.tagmem, &mut unit.fifos)
                .map_err(|source| DispatchError::Unit { unit: unit_idx, source })?;
            file_tag
        }
        KernelIoKind::Write { buf_vaddr, count_bytes } => {
            let msg = WriteMsg { buf_vaddr, count_bytes, ctx: req.ctx };
            let folded = handle_write_msg(&msg, &mut unit.tagmem, &mut unit.fifos)
                .map_err(|source| DispatchError::Unit { unit: unit_idx, source })?;
            let reply = unit.fifos.pl2ps.pop().expect("write reply was just pushed");
            debug_assert_eq!(reply, folded);
            table.insert(req.file_id, reply);
            reply
        }
    };
    kernel_log.push(KernelLogEntry {
        unit: unit_idx,
        ctx: req.ctx,
        op: req.kind.op_kind(),
        file_id: req.file_id,
        event_pos: requested_at,
        service_pos,
        anns_at_event,
        anns_at_service: unit.tmc.ops_executed(),
        reply: Some(reply),
        skipped: false,
    });
    Ok(())
}
