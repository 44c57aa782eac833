//! Reference taint computation: the ground truth the tag pipeline is
//! measured against.
//!
//! It rides the same scheduler and interpreter as the executor (through the
//! shared hook trait), so both observe the identical architectural run, but
//! it propagates tags directly, instruction by instruction — no trace
//! encoding, no annotation store, no dispatcher, no tag-memory paging in
//! between. The full pipeline is correct exactly when its externally
//! comparable tag state matches this computation byte for byte.
//!
//! Tag arithmetic deliberately mirrors the tag core's register semantics:
//! the width mask is applied whenever a tag lands in a register (including
//! loads), while memory and the file table hold values as written. Checks
//! run after the mutation of the triggering instruction, in source-1,
//! source-2, destination order, and the first hit freezes the unit: its tag
//! state stops changing while the architectural run continues.

use std::collections::BTreeMap;

use crate::annot::{InstrClass, PolicyRegisters, PropagationRule};
use crate::dispatch::{equivalence_text, TagStateView, ViolationSummary};
use crate::pft::ContextId;
use crate::tmc::CheckKind;

use super::execute::{run_schedule, Hooks, ThreadFinal, ThreadRun, ThreadSpec};
use super::fs::SimFileSystem;
use super::machine::ThreadState;
use super::{Operand2, PlacedInstr, ToyInstr, ToyIsaError, INSTR_WINDOW, PC};

/// What the reference computation produced for one run.
#[derive(Debug, Clone)]
pub struct OracleOutcome {
    /// One comparable tag state per tracking unit: per thread with a single
    /// policy, per policy with several.
    pub views: Vec<TagStateView>,
    /// The file-tag table shared by all threads (single-policy runs only;
    /// multi-policy units each carry their own table inside the view).
    pub shared_file_tags: Option<BTreeMap<u32, u32>>,
    /// Final architectural state of every thread.
    pub finals: Vec<ThreadFinal>,
}

impl OracleOutcome {
    /// The comparable state as sorted `key=value` text, rendered by the same
    /// code the pipeline report uses, so equal states yield equal bytes.
    pub fn equivalence_text(&self) -> String {
        equivalence_text(&self.views, self.shared_file_tags.as_ref())
    }

    /// Violations per unit, in unit order.
    pub fn violations(&self) -> Vec<Option<ViolationSummary>> {
        self.views.iter().map(|v| v.violation).collect()
    }
}

/// Tag state tracked for one unit.
struct TaintUnit {
    slot: u8,
    ctx: ContextId,
    policy: PolicyRegisters,
    /// Propagation rules resolved per instruction class, indexed by the
    /// class discriminant.
    rules: [PropagationRule; 4],
    trf: [u32; 16],
    trf_fp: [u32; 32],
    /// Word-address → tag, holding values exactly as written.
    mem: BTreeMap<u32, u32>,
    /// Own file-tag table (multi-policy mode), `None` when shared.
    files: Option<BTreeMap<u32, u32>>,
    block_start: u32,
    violation: Option<ViolationSummary>,
}

impl TaintUnit {
    fn new(
        slot: u8,
        ctx: ContextId,
        policy: &PolicyRegisters,
        entry: u32,
        files: Option<BTreeMap<u32, u32>>,
    ) -> Result<Self, ToyIsaError> {
        let rules = [
            policy.tpr_rule(InstrClass::ArithLogic)?,
            policy.tpr_rule(InstrClass::LoadStore)?,
            policy.tpr_rule(InstrClass::Branch)?,
            policy.tpr_rule(InstrClass::FpLoadStore)?,
        ];
        Ok(TaintUnit {
            slot,
            ctx,
            policy: policy.clone(),
            rules,
            trf: [0; 16],
            trf_fp: [0; 32],
            mem: BTreeMap::new(),
            files,
            block_start: entry,
            violation: None,
        })
    }

    fn frozen(&self) -> bool {
        self.violation.is_some()
    }

    /// Runs the configured checks for `class` over the operand tags of the
    /// instruction that just mutated state. First hit freezes the unit.
    fn check(&mut self, class: InstrClass, s1: Option<u32>, s2: Option<u32>, dst: Option<u32>) {
        let flags = self.policy.tcr_checks(class);
        for (kind, enabled, inspected) in [
            (CheckKind::Src1, flags.src1, s1),
            (CheckKind::Src2, flags.src2, s2),
            (CheckKind::Dst, flags.dst, dst),
        ] {
            if !enabled {
                continue;
            }
            if let Some(tag) = inspected {
                if tag & self.policy.check_mask != 0 {
                    self.violation = Some(ViolationSummary {
                        check_kind: kind,
                        checked_tag: tag,
                        block_address: self.block_start,
                    });
                    return;
                }
            }
        }
    }

    /// Tag effect of one architectural instruction, from its pre-execution
    /// register state.
    fn apply(&mut self, placed: &PlacedInstr, at: u32, st: &ThreadState, lib_taint: bool) {
        if self.frozen() || (placed.lib && !lib_taint) {
            return;
        }
        let mask = self.policy.width_mask();
        match placed.instr {
            ToyInstr::MovImm { rd, .. } => {
                // Immediates are untainted by definition.
                self.trf[rd as usize] = 0;
                self.check(InstrClass::ArithLogic, None, None, Some(0));
            }
            ToyInstr::Alu { rd, rn, op2, .. } => {
                let s1 = self.trf[rn as usize];
                // An immediate second operand reads the permanently clean
                // tag of the reserved window register.
                let s2 = match op2 {
                    Operand2::Reg(rm) => self.trf[rm as usize],
                    Operand2::Imm(_) => self.trf[INSTR_WINDOW as usize],
                };
                let old = self.trf[rd as usize];
                let v = self.rules[InstrClass::ArithLogic as usize].apply(old, s1, s2) & mask;
                self.trf[rd as usize] = v;
                self.check(InstrClass::ArithLogic, Some(s1), Some(s2), Some(v));
            }
            ToyInstr::FAlu { sd, sn, sm, .. } => {
                let s1 = self.trf_fp[sn as usize];
                let s2 = self.trf_fp[sm as usize];
                let old = self.trf_fp[sd as usize];
                let v = self.rules[InstrClass::FpLoadStore as usize].apply(old, s1, s2) & mask;
                self.trf_fp[sd as usize] = v;
                self.check(InstrClass::FpLoadStore, Some(s1), Some(s2), Some(v));
            }
            _ => {
                let Some(site) = placed.instr.mem_site() else { return };
                let base_val = if site.base == PC {
                    at.wrapping_add(8)
                } else {
                    st.regs[site.base as usize]
                };
                let addr = base_val.wrapping_add(site.offset as u32);
                let class = if site.is_float { InstrClass::FpLoadStore } else { InstrClass::LoadStore };
                let dst = if site.is_store {
                    let stored = if site.is_float {
                        self.trf_fp[site.treg as usize]
                    } else {
                        self.trf[site.treg as usize]
                    };
                    self.mem.insert(addr, stored);
                    stored
                } else {
                    let v = self.mem.get(&addr).copied().unwrap_or(0) & mask;
                    if site.is_float {
                        self.trf_fp[site.treg as usize] = v;
                    } else {
                        self.trf[site.treg as usize] = v;
                    }
                    v
                };
                self.check(class, None, None, Some(dst));
            }
        }
    }

    fn view(&self) -> TagStateView {
        TagStateView {
            slot: self.slot,
            context: self.ctx,
            trf: self.trf,
            trf_fp: self.trf_fp,
            mem_tags: self.mem.iter().filter(|&(_, &t)| t != 0).map(|(&a, &t)| (a, t)).collect(),
            file_tags: self.files.clone(),
            violation: self.violation,
        }
    }
}

/// Word-aligned addresses of every word overlapping `[vaddr, vaddr+count)` —
/// the same coverage rule tag memory uses for file transfers.
fn range_words(vaddr: u32, count: u32) -> impl Iterator<Item = u32> {
    let start = (vaddr & !3) as u64;
    let end = if count == 0 { start } else { vaddr as u64 + count as u64 };
    (start..end).step_by(4).map(|w| w as u32)
}

struct TaintHooks {
    units: Vec<TaintUnit>,
    shared_files: BTreeMap<u32, u32>,
    /// Several policies tracking the one thread, instead of one policy
    /// tracking every thread.
    multi: bool,
    lib_taint: bool,
}

impl TaintHooks {
    fn tracking(&self, thread: usize) -> std::ops::Range<usize> {
        if self.multi {
            0..self.units.len()
        } else {
            thread..thread + 1
        }
    }
}

impl Hooks for TaintHooks {
    fn block_entry(&mut self, thread: usize, _ctx: ContextId, addr: u32, _at_start: bool) {
        for k in self.tracking(thread) {
            self.units[k].block_start = addr;
        }
    }

    fn switched_in(&mut self, _thread: usize) {}

    fn pre_instr(&mut self, thread: usize, addr: u32, placed: &PlacedInstr, st: &ThreadState) {
        let lib_taint = self.lib_taint;
        for k in self.tracking(thread) {
            self.units[k].apply(placed, addr, st, lib_taint);
        }
    }

    fn instr_push(&mut self, _thread: usize, _ctx: ContextId, _base_value: u32) {}

    fn kernel_read(&mut self, thread: usize, _ctx: ContextId, file_id: u32, buf: u32, count: u32) {
        for k in self.tracking(thread) {
            if self.units[k].frozen() {
                continue;
            }
            let tag = match &self.units[k].files {
                Some(t) => t.get(&file_id).copied().unwrap_or(0),
                None => self.shared_files.get(&file_id).copied().unwrap_or(0),
            };
            for w in range_words(buf, count) {
                self.units[k].mem.insert(w, tag);
            }
        }
    }

    fn kernel_write(&mut self, thread: usize, _ctx: ContextId, file_id: u32, buf: u32, count: u32) {
        for k in self.tracking(thread) {
            if self.units[k].frozen() {
                continue;
            }
            let folded = range_words(buf, count)
                .map(|w| self.units[k].mem.get(&w).copied().unwrap_or(0))
                .fold(0, |a, b| a | b);
            match &mut self.units[k].files {
                Some(t) => {
                    t.insert(file_id, folded);
                }
                None => {
                    self.shared_files.insert(file_id, folded);
                }
            }
        }
    }

    fn data_access(&mut self, _thread: usize, _addr: u32, _count: u32) {}
}

/// Runs the reference computation. One policy tracks every thread with a
/// shared file-tag table; several policies track the (then required single)
/// thread independently, each with its own table. With a single policy the
/// final shared table is written back into `fs`, matching the pipeline.
/// `lib_taint: false` reproduces the ablation that strips tag propagation —
/// but not kernel I/O effects — from library-marked instructions.
pub fn oracle_taint(
    threads: &[ThreadSpec],
    quantum: u32,
    fs: &mut SimFileSystem,
    policies: &[PolicyRegisters],
    lib_taint: bool,
) -> Result<OracleOutcome, ToyIsaError> {
    assert!(!policies.is_empty(), "at least one policy is required");
    let multi = policies.len() > 1;
    if multi {
        assert_eq!(threads.len(), 1, "several policies track exactly one thread");
    }
    let initial_files = fs.tags();

    let mut units = Vec::new();
    if multi {
        let spec = &threads[0];
        for p in policies {
            let mut u =
                TaintUnit::new(0, spec.ctx, p, spec.program.entry(), Some(initial_files.clone()))?;
            seed(&mut u, spec);
            units.push(u);
        }
    } else {
        for (t, spec) in threads.iter().enumerate() {
            let mut u = TaintUnit::new(t as u8, spec.ctx, &policies[0], spec.program.entry(), None)?;
            seed(&mut u, spec);
            units.push(u);
        }
    }

    let mut hooks = TaintHooks { units, shared_files: initial_files, multi, lib_taint };
    let mut runs: Vec<ThreadRun<'_>> = threads.iter().map(ThreadRun::new).collect();
    run_schedule(&mut runs, quantum, fs, &mut hooks)?;

    let views = hooks.units.iter().map(TaintUnit::view).collect();
    let finals = runs.iter().map(ThreadRun::final_state).collect();
    let shared_file_tags = if multi {
        None
    } else {
        fs.apply_tags(&hooks.shared_files);
        Some(hooks.shared_files)
    };
    Ok(OracleOutcome { views, shared_file_tags, finals })
}

fn seed(unit: &mut TaintUnit, spec: &ThreadSpec) {
    for &(addr, tag) in &spec.seeds.mem_tags {
        unit.mem.insert(addr & !3, tag);
    }
}
