//! Rewrites a program so that selected loads/stores are preceded by an
//! exporting store (`str base, [r9]`) that publishes the access's base
//! address to the trace unit. Inserting instructions moves everything after
//! them, so every static branch target is remapped; a target that named an
//! instrumented access now names its export, keeping the push paired with
//! the access on every path into it.

use super::{PlacedInstr, Strategy, InstrumentationTag, ToyInstr, ToyProgram};

/// Instruments `p` under `strategy`. With `lib_instrumentation` off,
/// library-routine sites are left untouched (the ablation configuration).
/// Sites that already carry an export are not instrumented twice.
pub fn instrument(p: &ToyProgram, strategy: Strategy, lib_instrumentation: bool) -> ToyProgram {
    assert!(
        p.instrumented_with.is_none(),
        "instrument expects an uninstrumented program"
    );
    let mut instrs = Vec::with_capacity(p.instrs.len() * 2);
    // For each original instruction, the index of its first replacement
    // instruction (the export when one is inserted).
    let mut new_start = vec![0usize; p.instrs.len()];
    for (i, pi) in p.instrs.iter().enumerate() {
        new_start[i] = instrs.len();
        if wants_export(p, i, strategy, lib_instrumentation) {
            let base = pi.instr.mem_site().expect("selected sites are accesses").base;
            instrs.push(PlacedInstr { instr: ToyInstr::InstrEmit { addr_reg: base }, lib: pi.lib });
        }
        instrs.push(*pi);
    }

    let remap = |target: u32| -> u32 {
        match p.index_of(target) {
            Some(i) => p.base + (new_start[i] as u32) * 4,
            None => target,
        }
    };
    for pi in &mut instrs {
        pi.instr = match pi.instr {
            ToyInstr::B { target } => ToyInstr::B { target: remap(target) },
            ToyInstr::Bnz { cond, target } => ToyInstr::Bnz { cond, target: remap(target) },
            ToyInstr::Call { target } => ToyInstr::Call { target: remap(target) },
            other => other,
        };
    }

    ToyProgram {
        base: p.base,
        instrs,
        init_regs: p.init_regs.clone(),
        instrumented_with: Some(InstrumentationTag { strategy, lib_instrumentation }),
    }
}

fn wants_export(p: &ToyProgram, idx: usize, strategy: Strategy, lib_instrumentation: bool) -> bool {
    let pi = &p.instrs[idx];
    let Some(site) = pi.instr.mem_site() else {
        return false;
    };
    if !strategy.instruments_base(site.base) {
        return false;
    }
    if pi.lib && !lib_instrumentation {
        return false;
    }
    // Already exported by hand.
    !(idx > 0 && p.instrs[idx - 1].instr == ToyInstr::InstrEmit { addr_reg: site.base })
}

/// Number of exports present in a program.
pub fn export_count(p: &ToyProgram) -> usize {
    p.instrs.iter().filter(|pi| matches!(pi.instr, ToyInstr::InstrEmit { .. })).count()
}
