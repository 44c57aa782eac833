//! Architectural execution under a round-robin scheduler, producing the
//! artefacts the tag pipeline consumes: the packet trace, the ordered event
//! stream (block entries, exported base addresses, kernel I/O requests), the
//! final machine state of every thread, and the set of data pages each
//! thread touched (which the loader analog registers with tag memory).
//!
//! Trace emission rules:
//! - one alignment packet leads the stream;
//! - a thread's first block is announced with a full synchronisation packet
//!   (address plus context);
//! - after a context switch the *next* block boundary of the incoming thread
//!   is promoted to a full synchronisation packet — nothing is emitted at
//!   switch time itself, so the packet sequence for a thread depends only on
//!   its own control flow, not on the quantum;
//! - every other block transition emits a branch-address packet, including
//!   the fall-through of a not-taken conditional branch and the resumption
//!   after a syscall.
//!
//! The per-instruction interpreter and the scheduler are shared with the
//! reference taint computation through the [`Hooks`] trait: the pipeline's
//! executor and the oracle observe the identical architectural run.

use std::collections::BTreeSet;

use crate::dispatch::{EventItem, KernelIoKind, KernelRequest};
use crate::pft::{ContextId, TracePacket};

use super::fs::SimFileSystem;
use super::machine::{DataMemory, ThreadState};
use super::{
    Operand2, PlacedInstr, RuntimeFault, ToyInstr, ToyIsaError, ToyProgram, IO_LIMIT, LR,
    NULL_GUARD, PC, RETURN_SENTINEL,
};

/// Total executed-instruction budget across all threads; exceeding it means
/// a runaway program.
pub const STEP_LIMIT: u64 = 2_000_000;

/// Initial per-thread data: raw bytes and word tags seeded into memory
/// before the first instruction. Tag seeds are the explicit taint-input
/// channel; byte seeds carry untainted data.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExecSeeds {
    pub mem_bytes: Vec<(u32, Vec<u8>)>,
    pub mem_tags: Vec<(u32, u32)>,
}

/// One scheduled program with its context and seeds.
#[derive(Debug, Clone)]
pub struct ThreadSpec {
    pub program: ToyProgram,
    pub ctx: ContextId,
    pub seeds: ExecSeeds,
}

/// Final architectural state of one thread.
#[derive(Debug, Clone)]
pub struct ThreadFinal {
    pub ctx: ContextId,
    pub regs: [u32; 16],
    pub fregs: [u32; 32],
    pub mem: DataMemory,
    pub finished: bool,
    pub steps: u64,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct ExecOutcome {
    pub packets: Vec<TracePacket>,
    pub events: Vec<EventItem>,
    pub finals: Vec<ThreadFinal>,
    /// Data pages (virtual page numbers) each thread accessed.
    pub touched_vpns: Vec<BTreeSet<u32>>,
}

/// Observation points shared by the executor and the reference taint
/// computation. `thread` indexes the spec array; callbacks fire in the exact
/// order the architectural run performs the corresponding actions.
pub(crate) trait Hooks {
    /// A block is entered: at program start (`at_start`) or at a control
    /// transfer (including not-taken fall-throughs and syscall resumption).
    fn block_entry(&mut self, thread: usize, ctx: ContextId, addr: u32, at_start: bool);
    /// The scheduler resumed an already-started thread after running
    /// something else.
    fn switched_in(&mut self, thread: usize);
    /// Inspect an instruction right before it executes; the state still
    /// holds the pre-execution register values.
    fn pre_instr(&mut self, thread: usize, addr: u32, placed: &PlacedInstr, st: &ThreadState);
    /// An exporting store published `base_value`.
    fn instr_push(&mut self, thread: usize, ctx: ContextId, base_value: u32);
    /// A file read copied `count` bytes into `[buf, buf+count)`.
    fn kernel_read(&mut self, thread: usize, ctx: ContextId, file_id: u32, buf: u32, count: u32);
    /// A file write consumed `count` bytes from `[buf, buf+count)`.
    fn kernel_write(&mut self, thread: usize, ctx: ContextId, file_id: u32, buf: u32, count: u32);
    /// A load/store or file transfer touched `[addr, addr+count)`.
    fn data_access(&mut self, thread: usize, addr: u32, count: u32);
}

pub(crate) struct ThreadRun<'a> {
    pub program: &'a ToyProgram,
    pub st: ThreadState,
}

impl<'a> ThreadRun<'a> {
    pub fn new(spec: &'a ThreadSpec) -> Self {
        let mut st = ThreadState::new(&spec.program, spec.ctx);
        for (addr, bytes) in &spec.seeds.mem_bytes {
            st.mem.write_bytes(*addr, bytes);
        }
        ThreadRun { program: &spec.program, st }
    }

    pub fn final_state(&self) -> ThreadFinal {
        ThreadFinal {
            ctx: self.st.ctx,
            regs: self.st.regs,
            fregs: self.st.fregs,
            mem: self.st.mem.clone(),
            finished: self.st.finished,
            steps: self.st.steps,
        }
    }
}

/// Runs every thread to completion, `quantum` instructions per turn in
/// round-robin order, reporting all observation points to `hooks`.
pub(crate) fn run_schedule<H: Hooks>(
    threads: &mut [ThreadRun<'_>],
    quantum: u32,
    fs: &mut SimFileSystem,
    hooks: &mut H,
) -> Result<(), ToyIsaError> {
    assert!(quantum >= 1, "a zero quantum never executes anything");
    let mut total: u64 = 0;
    let mut last_running: Option<usize> = None;
    loop {
        let mut any = false;
        for t in 0..threads.len() {
            if threads[t].st.finished {
                continue;
            }
            any = true;
            if !threads[t].st.started {
                threads[t].st.started = true;
                let (ctx, entry) = (threads[t].st.ctx, threads[t].program.entry());
                hooks.block_entry(t, ctx, entry, true);
            } else if last_running != Some(t) {
                hooks.switched_in(t);
            }
            for _ in 0..quantum {
                if threads[t].st.finished {
                    break;
                }
                step(&mut threads[t], t, fs, hooks)?;
                total += 1;
                if total > STEP_LIMIT {
                    return Err(RuntimeFault::StepLimit { limit: STEP_LIMIT }.into());
                }
            }
            last_running = Some(t);
        }
        if !any {
            return Ok(());
        }
    }
}

enum Next {
    Seq,
    Jump(u32),
    Finish,
}

fn step<H: Hooks>(
    run: &mut ThreadRun<'_>,
    t: usize,
    fs: &mut SimFileSystem,
    hooks: &mut H,
) -> Result<(), ToyIsaError> {
    let at = run.st.pc;
    let pi = *run
        .program
        .instr_at(at)
        .ok_or(RuntimeFault::BadJump { target: at, at })?;
    hooks.pre_instr(t, at, &pi, &run.st);
    let st = &mut run.st;
    let reg = |st: &ThreadState, r: u8| -> u32 {
        if r == PC {
            at.wrapping_add(8)
        } else {
            st.regs[r as usize]
        }
    };

    let next = match pi.instr {
        ToyInstr::MovImm { rd, imm } => {
            st.regs[rd as usize] = imm as u32;
            Next::Seq
        }
        ToyInstr::Alu { op, rd, rn, op2 } => {
            let b = match op2 {
                Operand2::Reg(rm) => reg(st, rm),
                Operand2::Imm(v) => v as u32,
            };
            st.regs[rd as usize] = op.apply(reg(st, rn), b);
            Next::Seq
        }
        ToyInstr::Ldr { rt, base, offset } => {
            let addr = word_address(reg(st, base), offset, at)?;
            hooks.data_access(t, addr, 4);
            st.regs[rt as usize] = st.mem.read_u32(addr);
            Next::Seq
        }
        ToyInstr::Str { rt, base, offset } => {
            let addr = word_address(reg(st, base), offset, at)?;
            hooks.data_access(t, addr, 4);
            let v = reg(st, rt);
            st.mem.write_u32(addr, v);
            Next::Seq
        }
        ToyInstr::FLdr { st: sd, base, offset } => {
            let addr = word_address(reg(st, base), offset, at)?;
            hooks.data_access(t, addr, 4);
            st.fregs[sd as usize] = st.mem.read_u32(addr);
            Next::Seq
        }
        ToyInstr::FStr { st: ss, base, offset } => {
            let addr = word_address(reg(st, base), offset, at)?;
            hooks.data_access(t, addr, 4);
            st.mem.write_u32(addr, st.fregs[ss as usize]);
            Next::Seq
        }
        ToyInstr::FAlu { op, sd, sn, sm } => {
            st.fregs[sd as usize] = op.apply(st.fregs[sn as usize], st.fregs[sm as usize]);
            Next::Seq
        }
        ToyInstr::B { target } => Next::Jump(target),
        ToyInstr::Bnz { cond, target } => {
            if reg(st, cond) != 0 {
                Next::Jump(target)
            } else {
                // The not-taken path is still a block boundary.
                Next::Jump(at.wrapping_add(4))
            }
        }
        ToyInstr::Call { target } => {
            st.regs[LR as usize] = at.wrapping_add(4);
            Next::Jump(target)
        }
        ToyInstr::Ret => {
            let back = st.regs[LR as usize];
            if back == RETURN_SENTINEL {
                Next::Finish
            } else {
                Next::Jump(back)
            }
        }
        ToyInstr::SysRead { file_id, buf, len } => {
            let buf = reg(st, buf);
            let want = reg(st, len);
            let avail = fs.bytes(file_id).len() as u32;
            let count = want.min(avail);
            check_transfer(buf, count, at)?;
            if count > 0 {
                let bytes = fs.bytes(file_id)[..count as usize].to_vec();
                hooks.data_access(t, buf, count);
                st.mem.write_bytes(buf, &bytes);
            }
            hooks.kernel_read(t, st.ctx, file_id, buf, count);
            Next::Jump(at.wrapping_add(4))
        }
        ToyInstr::SysWrite { file_id, buf, len } => {
            let buf = reg(st, buf);
            let count = reg(st, len);
            check_transfer(buf, count, at)?;
            if count > 0 {
                hooks.data_access(t, buf, count);
            }
            let bytes = st.mem.read_bytes(buf, count);
            fs.write_bytes(file_id, bytes);
            hooks.kernel_write(t, st.ctx, file_id, buf, count);
            Next::Jump(at.wrapping_add(4))
        }
        ToyInstr::InstrEmit { addr_reg } => {
            let v = reg(st, addr_reg);
            hooks.instr_push(t, st.ctx, v);
            Next::Seq
        }
    };

    st.steps += 1;
    match next {
        Next::Seq => st.pc = at.wrapping_add(4),
        Next::Jump(target) => {
            if run.program.index_of(target).is_none() {
                return Err(RuntimeFault::BadJump { target, at }.into());
            }
            st.pc = target;
            st.block_start = target;
            let ctx = st.ctx;
            hooks.block_entry(t, ctx, target, false);
        }
        Next::Finish => st.finished = true,
    }
    Ok(())
}

fn word_address(base: u32, offset: i32, at: u32) -> Result<u32, RuntimeFault> {
    let addr = base.wrapping_add(offset as u32);
    if addr < NULL_GUARD {
        return Err(RuntimeFault::NullAccess { addr, at });
    }
    if addr % 4 != 0 {
        return Err(RuntimeFault::UnalignedAccess { addr, at });
    }
    Ok(addr)
}

fn check_transfer(buf: u32, count: u32, at: u32) -> Result<(), RuntimeFault> {
    if count > IO_LIMIT {
        return Err(RuntimeFault::OversizedIo { len: count, at });
    }
    if count == 0 {
        return Ok(());
    }
    if buf < NULL_GUARD {
        return Err(RuntimeFault::NullAccess { addr: buf, at });
    }
    if buf.checked_add(count).is_none() {
        return Err(RuntimeFault::OversizedIo { len: count, at });
    }
    Ok(())
}

/// The executor's hook set: turns observations into packets and events.
struct TraceHooks {
    packets: Vec<TracePacket>,
    events: Vec<EventItem>,
    pending_sync: Vec<bool>,
    touched: Vec<BTreeSet<u32>>,
}

impl TraceHooks {
    fn new(n: usize) -> Self {
        TraceHooks {
            packets: vec![TracePacket::ASync],
            events: Vec::new(),
            pending_sync: vec![false; n],
            touched: vec![BTreeSet::new(); n],
        }
    }
}

impl Hooks for TraceHooks {
    fn block_entry(&mut self, thread: usize, ctx: ContextId, addr: u32, at_start: bool) {
        if at_start || self.pending_sync[thread] {
            self.packets.push(TracePacket::ISync { address: addr, ctx });
            self.pending_sync[thread] = false;
        } else {
            self.packets.push(TracePacket::BranchAddr { address: addr });
        }
        self.events.push(EventItem::Entry);
    }

    fn switched_in(&mut self, thread: usize) {
        self.pending_sync[thread] = true;
    }

    fn pre_instr(&mut self, _: usize, _: u32, _: &PlacedInstr, _: &ThreadState) {}

    fn instr_push(&mut self, _: usize, ctx: ContextId, base_value: u32) {
        self.events.push(EventItem::InstrPush { ctx, addr: base_value });
    }

    fn kernel_read(&mut self, _: usize, ctx: ContextId, file_id: u32, buf: u32, count: u32) {
        self.events.push(EventItem::Kernel(KernelRequest {
            ctx,
            file_id,
            kind: KernelIoKind::Read { buf_vaddr: buf, count_bytes: count },
        }));
    }

    fn kernel_write(&mut self, _: usize, ctx: ContextId, file_id: u32, buf: u32, count: u32) {
        self.events.push(EventItem::Kernel(KernelRequest {
            ctx,
            file_id,
            kind: KernelIoKind::Write { buf_vaddr: buf, count_bytes: count },
        }));
    }

    fn data_access(&mut self, thread: usize, addr: u32, count: u32) {
        if count == 0 {
            return;
        }
        let first = addr >> 12;
        let last = addr.saturating_add(count - 1) >> 12;
        for vpn in first..=last {
            self.touched[thread].insert(vpn);
        }
    }
}

/// Executes all threads and collects the pipeline inputs. File bytes are
/// read and written architecturally; file *tags* belong to the tag pipeline
/// and are not touched here.
pub fn execute(
    threads: &[ThreadSpec],
    quantum: u32,
    fs: &mut SimFileSystem,
) -> Result<ExecOutcome, ToyIsaError> {
    let mut runs: Vec<ThreadRun<'_>> = threads.iter().map(ThreadRun::new).collect();
    let mut hooks = TraceHooks::new(threads.len());
    run_schedule(&mut runs, quantum, fs, &mut hooks)?;
    let finals = runs.iter().map(ThreadRun::final_state).collect();
    Ok(ExecOutcome {
        packets: hooks.packets,
        events: hooks.events,
        finals,
        touched_vpns: hooks.touched,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pft::decode_stream;
    use crate::pft::encode_packets;
    use crate::toyisa::{instrument, parse_program, Strategy};

    fn ctx(tid: u32) -> ContextId {
        ContextId::new(0x42, tid).unwrap()
    }

    fn spec(text: &str, tid: u32) -> ThreadSpec {
        ThreadSpec { program: parse_program(text).unwrap(), ctx: ctx(tid), seeds: ExecSeeds::default() }
    }

    fn run_one(text: &str) -> ExecOutcome {
        let mut fs = SimFileSystem::new();
        execute(&[spec(text, 0x4d2)], 5, &mut fs).unwrap()
    }

    #[test]
    fn straight_line_program_emits_alignment_then_one_sync() {
        let out = run_one("    mov r1, #7\n    add r2, r1, #1\n    ret\n");
        assert_eq!(out.packets.len(), 2);
        assert_eq!(out.packets[0], TracePacket::ASync);
        assert!(matches!(out.packets[1], TracePacket::ISync { address: 0x0001_0000, .. }));
        assert_eq!(out.events.len(), 1, "one entry, no pushes, no kernel traffic");
        assert_eq!(out.finals[0].regs[2], 8);
        assert!(out.finals[0].finished);
    }

    #[test]
    fn every_block_transition_appears_including_not_taken_branches() {
        let out = run_one(
            "\
    mov r1, #0
    bnz r1, 0x00010000
    ret
",
        );
        // Entry sync plus the not-taken fall-through branch packet.
        assert_eq!(out.packets.len(), 3);
        assert!(matches!(out.packets[2], TracePacket::BranchAddr { address: 0x0001_0008 }));
    }

    #[test]
    fn syscalls_end_blocks_and_resume_with_a_branch_packet() {
        let mut fs = SimFileSystem::new();
        fs.insert_file(1, vec![1, 2, 3, 4], 0x8);
        let out = execute(
            &[spec(
                "\
    mov r2, #0x200000
    mov r3, #4
    sysread 1, r2, r3
    ldr r4, [r2]
    ret
",
                0x4d2,
            )],
            5,
            &mut fs,
        )
        .unwrap();
        assert!(matches!(out.packets[2], TracePacket::BranchAddr { address } if address == 0x0001_000C));
        let kernel: Vec<_> = out
            .events
            .iter()
            .filter_map(|e| match e {
                EventItem::Kernel(k) => Some(*k),
                _ => None,
            })
            .collect();
        assert_eq!(kernel.len(), 1);
        assert_eq!(kernel[0].file_id, 1);
        assert!(matches!(
            kernel[0].kind,
            KernelIoKind::Read { buf_vaddr: 0x20_0000, count_bytes: 4 }
        ));
        assert_eq!(out.finals[0].regs[4], u32::from_le_bytes([1, 2, 3, 4]));
        assert!(out.touched_vpns[0].contains(&0x200));
    }

    #[test]
    fn reads_are_capped_by_file_size_and_writes_replace_files() {
        let mut fs = SimFileSystem::new();
        fs.insert_file(1, vec![0xAA, 0xBB], 0);
        let out = execute(
            &[spec(
                "\
    mov r2, #0x200000
    mov r3, #16
    sysread 1, r2, r3
    mov r3, #3
    syswrite 2, r2, r3
    ret
",
                0x4d2,
            )],
            50,
            &mut fs,
        )
        .unwrap();
        let counts: Vec<u32> = out
            .events
            .iter()
            .filter_map(|e| match e {
                EventItem::Kernel(KernelRequest { kind: KernelIoKind::Read { count_bytes, .. }, .. }) => {
                    Some(*count_bytes)
                }
                _ => None,
            })
            .collect();
        assert_eq!(counts, vec![2], "a 16-byte request against a 2-byte file moves 2 bytes");
        assert_eq!(fs.bytes(2), &[0xAA, 0xBB, 0x00]);
    }

    #[test]
    fn exported_bases_reach_the_event_stream_in_order() {
        let p = parse_program(
            "\
    mov r2, #0x200000
    str r1, [r2]
    ldr r3, [r2, #0]
    ret
",
        )
        .unwrap();
        let p = instrument(&p, Strategy::S1, true);
        let mut fs = SimFileSystem::new();
        let out = execute(
            &[ThreadSpec { program: p, ctx: ctx(0x4d2), seeds: ExecSeeds::default() }],
            5,
            &mut fs,
        )
        .unwrap();
        let pushes: Vec<u32> = out
            .events
            .iter()
            .filter_map(|e| match e {
                EventItem::InstrPush { addr, .. } => Some(*addr),
                _ => None,
            })
            .collect();
        assert_eq!(pushes, vec![0x20_0000, 0x20_0000]);
    }

    #[test]
    fn quantum_changes_only_promote_packets_never_reorder_entries() {
        let a = "\
    mov r1, #3
loop:
    sub r1, r1, #1
    bnz r1, loop
    ret
";
        let b = "\
    mov r2, #2
again:
    sub r2, r2, #1
    bnz r2, again
    ret
";
        let mut per_quantum = Vec::new();
        for quantum in [1, 2, 5, 50] {
            let mut fs = SimFileSystem::new();
            let out = execute(&[spec(a, 0x4d2), spec(b, 0x4d3)], quantum, &mut fs).unwrap();
            let bytes = encode_packets(&out.packets).unwrap();
            let (entries, slots) = decode_stream(&bytes).unwrap();
            // Group the entry addresses per slot.
            let per_slot: Vec<Vec<u32>> = (0..2)
                .map(|s| {
                    entries
                        .iter()
                        .filter(|e| e.slot() == s)
                        .map(|e| e.address())
                        .collect()
                })
                .collect();
            assert_eq!(slots.len(), 2);
            per_quantum.push(per_slot);
        }
        for later in &per_quantum[1..] {
            assert_eq!(&per_quantum[0], later);
        }
    }

    #[test]
    fn switching_promotes_the_next_boundary_to_a_full_sync() {
        let text = "\
    mov r1, #2
loop:
    sub r1, r1, #1
    bnz r1, loop
    ret
";
        let mut fs = SimFileSystem::new();
        let out = execute(&[spec(text, 0x4d2), spec(text, 0x4d3)], 1, &mut fs).unwrap();
        // With quantum 1 every block boundary lands after a switch, so no
        // plain branch packets can appear at all.
        assert!(out
            .packets
            .iter()
            .all(|p| !matches!(p, TracePacket::BranchAddr { .. })));
        // And the decoder sees both contexts.
        let bytes = encode_packets(&out.packets).unwrap();
        let (_, slots) = decode_stream(&bytes).unwrap();
        assert_eq!(slots.len(), 2);
    }

    #[test]
    fn call_and_ret_drive_the_link_register() {
        let out = run_one(
            "\
    mov sp, #0x200100
    sub sp, sp, #8
    str lr, [sp]
    mov r1, #5
    call double
    ldr lr, [sp]
    add sp, sp, #8
    ret
double:
    add r2, r1, r1
    ret
",
        );
        assert_eq!(out.finals[0].regs[2], 10);
        // Entry sync, call target, return-site branch: all three present.
        assert_eq!(
            out.packets.len(),
            4,
            "alignment, entry sync, call branch, return branch"
        );
    }

    #[test]
    fn faults_surface_with_their_addresses() {
        let run = |text: &str| {
            let mut fs = SimFileSystem::new();
            execute(&[spec(text, 0x4d2)], 5, &mut fs).unwrap_err()
        };
        assert!(matches!(
            run("    ldr r1, [r0, #8]\n    ret\n"),
            ToyIsaError::Fault(RuntimeFault::NullAccess { addr: 8, .. })
        ));
        assert!(matches!(
            run("    mov r2, #0x200002\n    ldr r1, [r2]\n    ret\n"),
            ToyIsaError::Fault(RuntimeFault::UnalignedAccess { .. })
        ));
        assert!(matches!(
            run("    mov r1, #1\n    bnz r1, 0x00090000\n    ret\n"),
            ToyIsaError::Fault(RuntimeFault::BadJump { target: 0x0009_0000, .. })
        ));
        assert!(matches!(
            run("    mov r1, #1\nspin:\n    bnz r1, spin\n    ret\n"),
            ToyIsaError::Fault(RuntimeFault::StepLimit { .. })
        ));
    }

    #[test]
    fn seeded_bytes_are_visible_before_the_first_instruction() {
        let mut spec = spec("    mov r2, #0x200000\n    ldr r1, [r2]\n    ret\n", 0x4d2);
        spec.seeds.mem_bytes.push((0x20_0000, vec![0x78, 0x56, 0x34, 0x12]));
        let mut fs = SimFileSystem::new();
        let out = execute(&[spec], 5, &mut fs).unwrap();
        assert_eq!(out.finals[0].regs[1], 0x1234_5678);
    }

    #[test]
    fn instrumentation_preserves_architectural_results() {
        let text = "\
    mov sp, #0x200100
    mov r2, #0x300000
    mov r1, #0x77
    str r1, [sp, #4]
    str r1, [r2]
    ldr r3, [sp, #4]
    ldr r4, [r2]
    add r5, r3, r4
    ret
";
        let p = parse_program(text).unwrap();
        let mut outs = Vec::new();
        for program in [
            p.clone(),
            instrument(&p, Strategy::S1, true),
            instrument(&p, Strategy::S2, true),
        ] {
            let mut fs = SimFileSystem::new();
            let out = execute(
                &[ThreadSpec { program, ctx: ctx(0x4d2), seeds: ExecSeeds::default() }],
                3,
                &mut fs,
            )
            .unwrap();
            outs.push(out);
        }
        for later in &outs[1..] {
            assert_eq!(outs[0].finals[0].regs, later.finals[0].regs);
            assert_eq!(outs[0].finals[0].mem, later.finals[0].mem);
        }
        assert_eq!(outs[0].finals[0].regs[5], 0xEE);
    }

    #[test]
    fn pc_relative_loads_read_the_data_view_of_the_code_region() {
        let mut spec = spec("    ldr r1, [pc, #8]\n    ret\n", 0x4d2);
        // Data memory is distinct from the instruction image; seed the word
        // the pc-relative address names.
        spec.seeds.mem_bytes.push((0x0001_0010, vec![0xEF, 0xBE, 0xAD, 0xDE]));
        let mut fs = SimFileSystem::new();
        let out = execute(&[spec], 5, &mut fs).unwrap();
        assert_eq!(out.finals[0].regs[1], 0xDEAD_BEEF);
    }
}
