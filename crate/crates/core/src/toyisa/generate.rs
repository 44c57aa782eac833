//! Seeded random scenario generation for differential testing.
//!
//! Every scenario is deterministic in its seed and constructed to terminate
//! and run fault-free by design:
//!
//! - the stack pointer is established first and only ever moved by balanced,
//!   statically tracked adjustments, so stack accesses stay inside the stack
//!   page and the saved return address is never clobbered;
//! - address registers are loaded with literals from a bounded data window
//!   and only drift forward in small aligned steps, so every access stays
//!   aligned, above the null guard, and within a handful of pages;
//! - backward branches exist only as loop latches on a dedicated counter
//!   register that strictly counts down; all other conditional branches jump
//!   forward;
//! - helpers are leaves, called with the return address parked on the stack.
//!
//! Programs are generated as source text and then parsed, so everything the
//! generator produces is by construction also valid input for the tools.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::annot::{CheckFlags, InstrClass, PolicyRegisters, PropagationRule};
use crate::pft::ContextId;

use super::execute::{ExecSeeds, ThreadSpec};
use super::fs::SimFileSystem;
use super::instrument::instrument;
use super::parse::parse_program;
use super::{Strategy, ToyProgram};

/// Registers holding data addresses; loaded with literals, drifting only by
/// `+4` walks.
const ADDR_REGS: [&str; 3] = ["r1", "r2", "r10"];
/// Plain computation registers.
const DATA_REGS: [&str; 6] = ["r0", "r3", "r4", "r6", "r7", "r12"];
/// Loop counter.
const COUNTER: &str = "r5";
/// Transfer-length register for file I/O.
const LEN: &str = "r8";

/// One generated workload: programs (uninstrumented), their seeds and
/// contexts, plus the shared policy, file system and scheduling quantum.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// Source text per thread, as fed to the parser.
    pub texts: Vec<String>,
    pub threads: Vec<ThreadSpec>,
    pub policy: PolicyRegisters,
    pub fs: SimFileSystem,
    pub quantum: u32,
}

impl Scenario {
    /// The same threads with their programs instrumented.
    pub fn instrumented(&self, strategy: Strategy, lib_instrumentation: bool) -> Vec<ThreadSpec> {
        self.threads
            .iter()
            .map(|s| ThreadSpec {
                program: instrument(&s.program, strategy, lib_instrumentation),
                ctx: s.ctx,
                seeds: s.seeds.clone(),
            })
            .collect()
    }
}

/// Builds the scenario for `seed`. Equal seeds give equal scenarios.
pub fn random_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let policy = random_policy(&mut rng);
    let quantum = *[1u32, 2, 3, 5, 8, 50].choose(&mut rng).unwrap();

    let mut fs = SimFileSystem::new();
    let mut read_ids = Vec::new();
    for id in [3u32, 5] {
        if rng.gen_bool(0.8) {
            let len = rng.gen_range(4..=32usize);
            let bytes: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            let tag = random_tag(&mut rng, &policy);
            fs.insert_file(id, bytes, tag);
            read_ids.push(id);
        }
    }
    if read_ids.is_empty() {
        fs.insert_file(3, vec![1, 2, 3, 4], 0x1);
        read_ids.push(3);
    }

    let n_threads = if rng.gen_bool(0.3) { 2 } else { 1 };
    let mut texts = Vec::new();
    let mut threads = Vec::new();
    for t in 0..n_threads {
        let base = [0x0001_0000u32, 0x0003_0000][t];
        let sub_seed = rng.gen::<u64>();
        let (text, program) = random_program(sub_seed, base, &read_ids);
        let seeds = random_seeds(&mut rng, base, &policy);
        texts.push(text);
        threads.push(ThreadSpec {
            program,
            ctx: ContextId::new(0x42, 0x4d2 + t as u32).unwrap(),
            seeds,
        });
    }
    Scenario { texts, threads, policy, fs, quantum }
}

fn random_policy(rng: &mut ChaCha8Rng) -> PolicyRegisters {
    let mut p = PolicyRegisters::default();
    p.tag_width = *[8u8, 16, 32].choose(rng).unwrap();
    let rules = [
        PropagationRule::Or,
        PropagationRule::Or,
        PropagationRule::CopySrc1,
        PropagationRule::Xor,
        PropagationRule::Max,
        PropagationRule::And,
        PropagationRule::Zero,
        PropagationRule::KeepDest,
    ];
    for class in [InstrClass::ArithLogic, InstrClass::LoadStore, InstrClass::FpLoadStore] {
        p.set_tpr_rule(class, *rules.choose(rng).unwrap());
    }
    if rng.gen_bool(0.35) {
        let class = *[InstrClass::ArithLogic, InstrClass::LoadStore, InstrClass::FpLoadStore]
            .choose(rng)
            .unwrap();
        let flags = CheckFlags {
            src1: rng.gen_bool(0.3),
            src2: rng.gen_bool(0.2),
            dst: rng.gen_bool(0.8),
        };
        p.set_tcr_checks(class, flags);
        if rng.gen_bool(0.5) {
            // A single in-width bit, so violations are possible but rare.
            p.check_mask = 1 << rng.gen_range(0..u32::from(p.tag_width));
        } else {
            p.check_mask = p.width_mask();
        }
    }
    p
}

fn random_tag(rng: &mut ChaCha8Rng, policy: &PolicyRegisters) -> u32 {
    if rng.gen_bool(0.2) {
        // Raw full-range tags exercise the width masking on loads.
        rng.gen::<u32>()
    } else {
        rng.gen::<u32>() & policy.width_mask() & 0xFF
    }
}

/// A word-aligned address in the data window `[0x2000, 0x5E00)`. Walks and
/// offsets can push accesses at most a few hundred bytes further, which
/// still lands well below the stack page at `0x6000`.
fn data_addr(rng: &mut ChaCha8Rng) -> u32 {
    rng.gen_range(0x800..0x1780u32) * 4
}

fn random_seeds(rng: &mut ChaCha8Rng, code_base: u32, policy: &PolicyRegisters) -> ExecSeeds {
    let mut seeds = ExecSeeds::default();
    for _ in 0..rng.gen_range(0..=2) {
        let len = rng.gen_range(4..=12usize);
        let bytes: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        seeds.mem_bytes.push((data_addr(rng), bytes));
    }
    for _ in 0..rng.gen_range(0..=5) {
        let addr = if rng.gen_bool(0.15) {
            // Sometimes seed the code page (visible to pc-relative loads) or
            // the stack page instead of the data window.
            if rng.gen_bool(0.5) {
                code_base + rng.gen_range(0..0x100u32) * 4
            } else {
                0x6000 + rng.gen_range(0..0x3C0u32) * 4
            }
        } else {
            data_addr(rng)
        };
        seeds.mem_tags.push((addr, random_tag(rng, policy)));
    }
    seeds
}

struct Gen {
    rng: ChaCha8Rng,
    lines: Vec<String>,
    label: u32,
    helper_names: Vec<String>,
    read_ids: Vec<u32>,
}

impl Gen {
    fn emit(&mut self, s: String) {
        self.lines.push(format!("    {s}"));
    }

    fn emit_label(&mut self, l: &str) {
        self.lines.push(format!("{l}:"));
    }

    fn fresh(&mut self) -> String {
        self.label += 1;
        format!("l{}", self.label)
    }

    fn addr_reg(&mut self) -> &'static str {
        ADDR_REGS.choose(&mut self.rng).unwrap()
    }

    fn data_reg(&mut self) -> &'static str {
        DATA_REGS.choose(&mut self.rng).unwrap()
    }

    fn freg(&mut self) -> String {
        format!("s{}", self.rng.gen_range(0..8))
    }

    fn off(&mut self) -> u32 {
        self.rng.gen_range(0..16u32) * 4
    }

    /// One instruction that is safe anywhere: plain computation or a memory
    /// access through an address register.
    fn plain_instr(&mut self) -> String {
        match self.rng.gen_range(0..8) {
            0 => {
                let (d, n) = (self.data_reg(), self.data_reg());
                let op = *["add", "sub", "and", "or", "xor"].choose(&mut self.rng).unwrap();
                if self.rng.gen_bool(0.5) {
                    let m = self.data_reg();
                    format!("{op} {d}, {n}, {m}")
                } else {
                    format!("{op} {d}, {n}, #{}", self.rng.gen_range(0..256))
                }
            }
            1 => format!("mov {}, #{}", self.data_reg(), self.rng.gen_range(0..0x1_0000)),
            2 | 3 => {
                let (d, a, o) = (self.data_reg(), self.addr_reg(), self.off());
                format!("ldr {d}, [{a}, #{o}]")
            }
            4 | 5 => {
                let (d, a, o) = (self.data_reg(), self.addr_reg(), self.off());
                format!("str {d}, [{a}, #{o}]")
            }
            6 => {
                let (f, a, o) = (self.freg(), self.addr_reg(), self.off());
                let mn = if self.rng.gen_bool(0.5) { "fldr" } else { "fstr" };
                format!("{mn} {f}, [{a}, #{o}]")
            }
            _ => {
                let (d, n, m) = (self.freg(), self.freg(), self.freg());
                let op = *["fadd", "fsub", "fmul"].choose(&mut self.rng).unwrap();
                format!("{op} {d}, {n}, {m}")
            }
        }
    }

    fn straight_segment(&mut self) {
        for _ in 0..self.rng.gen_range(3..=8) {
            // Occasionally touch the stack or frame page instead; offset 0
            // is reserved for the saved return address.
            if self.rng.gen_bool(0.15) {
                let d = self.data_reg();
                let base = if self.rng.gen_bool(0.5) { "sp" } else { "fp" };
                let o = 4 + self.rng.gen_range(0..15u32) * 4;
                let mn = if self.rng.gen_bool(0.5) { "str" } else { "ldr" };
                self.emit(format!("{mn} {d}, [{base}, #{o}]"));
            } else {
                let i = self.plain_instr();
                self.emit(i);
            }
        }
    }

    fn loop_segment(&mut self) {
        let iters = self.rng.gen_range(2..=6);
        let head = self.fresh();
        self.emit(format!("mov {COUNTER}, #{iters}"));
        self.emit_label(&head);
        let body = self.rng.gen_range(2..=4);
        let mut walked = false;
        for _ in 0..body {
            if !walked && self.rng.gen_bool(0.4) {
                let a = self.addr_reg();
                self.emit(format!("add {a}, {a}, #4"));
                walked = true;
            } else {
                let i = self.plain_instr();
                self.emit(i);
            }
        }
        self.emit(format!("sub {COUNTER}, {COUNTER}, #1"));
        self.emit(format!("bnz {COUNTER}, {head}"));
    }

    fn skip_segment(&mut self) {
        let over = self.fresh();
        let c = self.data_reg();
        self.emit(format!("bnz {c}, {over}"));
        for _ in 0..self.rng.gen_range(1..=3) {
            let i = self.plain_instr();
            self.emit(i);
        }
        self.emit_label(&over);
    }

    fn sys_segment(&mut self) {
        let a = self.addr_reg();
        let n = self.rng.gen_range(1..=6) * 4;
        self.emit(format!("mov {LEN}, #{n}"));
        if self.rng.gen_bool(0.55) {
            let id = if self.rng.gen_bool(0.1) {
                77 // deliberately absent: reads nothing, tags nothing
            } else {
                *self.read_ids.choose(&mut self.rng).unwrap()
            };
            self.emit(format!("sysread {id}, {a}, {LEN}"));
        } else {
            let id = *[9u32, 11, 3].choose(&mut self.rng).unwrap();
            self.emit(format!("syswrite {id}, {a}, {LEN}"));
        }
    }

    fn stack_segment(&mut self) {
        let k = *[16u32, 32].choose(&mut self.rng).unwrap();
        self.emit(format!("sub sp, sp, #{k}"));
        for _ in 0..self.rng.gen_range(1..=2) {
            let d = self.data_reg();
            let o = *[4u32, 8].choose(&mut self.rng).unwrap();
            let mn = if self.rng.gen_bool(0.6) { "str" } else { "ldr" };
            self.emit(format!("{mn} {d}, [sp, #{o}]"));
        }
        self.emit(format!("add sp, sp, #{k}"));
    }

    fn pc_segment(&mut self) {
        let d = self.data_reg();
        let o = self.rng.gen_range(0..16u32) * 4;
        self.emit(format!("ldr {d}, [pc, #{o}]"));
    }

    fn helper_body(&mut self) {
        let mut walked = false;
        for _ in 0..self.rng.gen_range(2..=5) {
            if !walked && self.rng.gen_bool(0.25) {
                let a = self.addr_reg();
                self.emit(format!("add {a}, {a}, #4"));
                walked = true;
            } else {
                let i = self.plain_instr();
                self.emit(i);
            }
        }
        self.emit("ret".into());
    }
}

/// One random program at `base`, returned as source text plus its parse.
fn random_program(seed: u64, base: u32, read_ids: &[u32]) -> (String, ToyProgram) {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        lines: vec![format!(".org 0x{base:x}")],
        label: 0,
        helper_names: Vec::new(),
        read_ids: read_ids.to_vec(),
    };
    let n_helpers = g.rng.gen_range(0..=2usize);
    for k in 0..n_helpers {
        g.helper_names.push(format!("helper{k}"));
    }
    let has_calls = n_helpers > 0;

    // Prologue: establish the stack and frame pointers, park the return
    // address, and load the address registers.
    g.emit("mov sp, #0x6F00".into());
    if has_calls {
        g.emit("str lr, [sp]".into());
    }
    g.emit("mov fp, #0x6800".into());
    for r in ADDR_REGS {
        let addr = data_addr(&mut g.rng);
        g.emit(format!("mov {r}, #0x{addr:x}"));
    }

    for _ in 0..g.rng.gen_range(3..=8) {
        match g.rng.gen_range(0..10) {
            0 | 1 | 2 => g.straight_segment(),
            3 | 4 => g.loop_segment(),
            5 => g.skip_segment(),
            6 | 7 => g.sys_segment(),
            8 => {
                if has_calls {
                    let h = g.helper_names.choose(&mut g.rng).unwrap().clone();
                    g.emit(format!("call {h}"));
                } else {
                    g.stack_segment();
                }
            }
            _ => {
                if g.rng.gen_bool(0.5) {
                    g.pc_segment();
                } else {
                    g.stack_segment();
                }
            }
        }
    }

    if has_calls {
        g.emit("ldr lr, [sp]".into());
    }
    g.emit("ret".into());

    for k in 0..n_helpers {
        let lib = g.rng.gen_bool(0.3);
        if lib {
            g.lines.push(".lib".into());
        }
        let name = g.helper_names[k].clone();
        g.emit_label(&name);
        g.helper_body();
        if lib {
            g.lines.push(".endlib".into());
        }
    }

    let text = format!("{}\n", g.lines.join("\n"));
    let program = parse_program(&text).expect("generated programs always parse");
    (text, program)
}
