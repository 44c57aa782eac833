//! Acceptance suite. Each test exercises one acceptance criterion end to
//! end and prints `ACCEPTANCE <n> <PASS|FAIL>: <description>`; assertion
//! details ride on the panic when a criterion fails.

use std::collections::BTreeMap;
use std::panic::AssertUnwindSafe;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dift_core::annot::{AnnotError, GrfOp};
use dift_core::dispatch::{self, KernelOpKind, TagStateView};
use dift_core::pft::{
    decode_stream, encode_packets, read_decoded_trace, write_decoded_trace, TracePacket,
};
use dift_core::tagmem::{TagMemError, TagMemory};
use dift_core::toyisa::{
    analyze, execute, instrument, oracle_taint, parse_program, random_scenario, run_pipeline,
    strategy_table, ExecSeeds, SimFileSystem, Strategy, ThreadSpec,
};
use dift_core::{
    Annotation, AnnotationStore, BlockOp, ContextId, DispatchConfig, InstrClass, Opcode,
    PolicyMode, PolicyRegisters, PropagationRule, RegId, RunInput, RunReport,
};

fn criterion(n: usize, desc: &str, body: impl FnOnce()) {
    match std::panic::catch_unwind(AssertUnwindSafe(body)) {
        Ok(()) => println!("ACCEPTANCE {n} PASS: {desc}"),
        Err(cause) => {
            println!("ACCEPTANCE {n} FAIL: {desc}");
            std::panic::resume_unwind(cause);
        }
    }
}

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn read(name: &str) -> String {
    let path = corpus_dir().join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

fn policy(name: &str) -> PolicyRegisters {
    PolicyRegisters::parse(&read(name)).expect(name)
}

fn manifest_fs() -> SimFileSystem {
    let dir = corpus_dir();
    SimFileSystem::parse_manifest(&read("files.manifest"), |p| {
        std::fs::read(dir.join(p)).map_err(|e| e.to_string())
    })
    .expect("files.manifest")
}

fn thread(name: &str, strategy: Strategy, lib: bool, tid: u32) -> ThreadSpec {
    let program = parse_program(&read(name)).expect(name);
    ThreadSpec {
        program: instrument(&program, strategy, lib),
        ctx: ContextId::new(0x42, tid).unwrap(),
        seeds: ExecSeeds::default(),
    }
}

const CORPUS_PROGRAMS: [&str; 8] = [
    "minimal.toy",
    "matrix.toy",
    "loop_copy.toy",
    "fp_blend.toy",
    "pair_a.toy",
    "pair_b.toy",
    "demo_secret_leak.toy",
    "demo_lib_wrapper.toy",
];

// ---------------------------------------------------------------------------
// 1. Random differential testing: the traced pipeline must reach the exact
//    state of the direct reference computation, across strategies and both
//    rule-resolution modes, for at least 200 program/configuration pairs,
//    in under two minutes.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_1_random_programs_match_the_reference() {
    criterion(
        1,
        "200+ random programs reach bit-identical tag state via pipeline and reference",
        || {
            let start = Instant::now();
            let mut verified = 0usize;
            for seed in 0..60u64 {
                let scenario = random_scenario(seed);
                for strategy in [Strategy::S1, Strategy::S2] {
                    for compile in [false, true] {
                        let mut p = scenario.policy.clone();
                        p.mode =
                            if compile { PolicyMode::CompileTime } else { PolicyMode::Runtime };
                        let policies = [p];
                        let threads = scenario.instrumented(strategy, true);
                        let mut pipe_fs = scenario.fs.clone();
                        let mut ref_fs = scenario.fs.clone();
                        let out = run_pipeline(
                            &threads,
                            scenario.quantum,
                            &mut pipe_fs,
                            &policies,
                            true,
                            &[],
                        )
                        .unwrap_or_else(|e| panic!("seed {seed} {strategy} c={compile}: {e}"));
                        let reference = oracle_taint(
                            &threads,
                            scenario.quantum,
                            &mut ref_fs,
                            &policies,
                            true,
                        )
                        .unwrap_or_else(|e| panic!("seed {seed} reference: {e}"));
                        assert_eq!(
                            out.equivalence_text(),
                            reference.equivalence_text(),
                            "seed {seed} {strategy} compile={compile} diverged"
                        );
                        assert_eq!(
                            pipe_fs.tags(),
                            ref_fs.tags(),
                            "seed {seed} {strategy} compile={compile} file tags diverged"
                        );
                        verified += 1;
                    }
                }
            }
            assert!(verified >= 200, "only {verified} verified configurations");
            let elapsed = start.elapsed();
            assert!(elapsed < Duration::from_secs(120), "differential sweep took {elapsed:?}");
        },
    );
}

// ---------------------------------------------------------------------------
// 2. Codec round trips: random trace-packet sequences and random annotation
//    words must survive encoding and decoding unchanged, against
//    independently computed expectations.
// ---------------------------------------------------------------------------

fn random_ctx(rng: &mut ChaCha8Rng) -> ContextId {
    ContextId::new(rng.gen::<u8>(), rng.gen::<u32>() & 0x007F_FFFF).unwrap()
}

fn random_packets(rng: &mut ChaCha8Rng) -> Vec<TracePacket> {
    let n = rng.gen_range(0..32);
    let mut ctxs: Vec<ContextId> = Vec::new();
    let mut synced = false;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let roll = rng.gen_range(0..10);
        if roll < 2 {
            out.push(TracePacket::ASync);
        } else if roll < 6 && synced {
            out.push(TracePacket::BranchAddr { address: rng.gen::<u32>() & !3 });
        } else {
            let ctx = if !ctxs.is_empty() && (ctxs.len() == 4 || rng.gen_bool(0.6)) {
                ctxs[rng.gen_range(0..ctxs.len())]
            } else {
                let c = random_ctx(rng);
                ctxs.push(c);
                c
            };
            out.push(TracePacket::ISync { address: rng.gen::<u32>() & !3, ctx });
            synced = true;
        }
    }
    out
}

/// Independent model of the decoder: slots in first-appearance order,
/// branch entries stamped with the last sync's slot.
fn expected_entries(packets: &[TracePacket]) -> (Vec<(u32, u8)>, Vec<ContextId>) {
    let mut slots: Vec<ContextId> = Vec::new();
    let mut current = None;
    let mut entries = Vec::new();
    for p in packets {
        match *p {
            TracePacket::ASync => {}
            TracePacket::ISync { address, ctx } => {
                let slot = match slots.iter().position(|&c| c == ctx) {
                    Some(i) => i,
                    None => {
                        slots.push(ctx);
                        slots.len() - 1
                    }
                } as u8;
                current = Some(slot);
                entries.push((address, slot));
            }
            TracePacket::BranchAddr { address } => {
                entries.push((address, current.expect("generator syncs first")));
            }
        }
    }
    (entries, slots)
}

fn random_tag_reg(rng: &mut ChaCha8Rng) -> RegId {
    if rng.gen_bool(0.5) {
        RegId::trf(rng.gen_range(0..16))
    } else {
        RegId::trf_fp(rng.gen_range(0..32))
    }
}

fn random_block_op(rng: &mut ChaCha8Rng) -> BlockOp {
    const RULES: [PropagationRule; 7] = [
        PropagationRule::Zero,
        PropagationRule::CopySrc1,
        PropagationRule::Or,
        PropagationRule::And,
        PropagationRule::Xor,
        PropagationRule::Max,
        PropagationRule::KeepDest,
    ];
    const CLASSES: [InstrClass; 4] = [
        InstrClass::ArithLogic,
        InstrClass::LoadStore,
        InstrClass::Branch,
        InstrClass::FpLoadStore,
    ];
    let class = CLASSES[rng.gen_range(0..4)];
    let grf = RegId::grf(rng.gen_range(0..16));
    let tag = random_tag_reg(rng);
    let z = RegId::ZERO;
    let imm: i32 = rng.gen();
    let ann = |op, dst, s1, s2, imm| -> BlockOp {
        BlockOp::Tag(Annotation::new(op, class, dst, s1, s2, imm).expect("shape respected"))
    };
    match rng.gen_range(0..19) {
        0 => ann(Opcode::TagRImm, tag, z, z, imm),
        1 => ann(Opcode::TagRR, tag, random_tag_reg(rng), z, 0),
        2 => ann(Opcode::TagMR, tag, grf, z, 0),
        3 => ann(Opcode::TagRRR, tag, random_tag_reg(rng), random_tag_reg(rng), 0),
        4 => {
            let rule = RULES[rng.gen_range(0..RULES.len())];
            ann(Opcode::TagRRR2(rule), tag, random_tag_reg(rng), random_tag_reg(rng), 0)
        }
        5 => ann(Opcode::TagMTR, tag, grf, z, imm),
        6 => ann(Opcode::TagTRM, tag, grf, z, imm),
        7 => ann(Opcode::TagMTR2, tag, grf, z, imm),
        8 => ann(Opcode::TagTRM2, tag, grf, z, imm),
        9 => ann(Opcode::TagITR, tag, z, z, imm),
        10 => ann(Opcode::TagTRI, tag, z, z, imm),
        11 => ann(Opcode::TagITR2, tag, z, z, imm),
        12 => ann(Opcode::TagTRI2, tag, z, z, imm),
        13 => ann(Opcode::TagKTR, z, random_tag_reg(rng), z, 0),
        14 => ann(Opcode::TagTRK, tag, z, z, 0),
        15 => BlockOp::Grf { op: GrfOp::Set, dst: grf, src: z, imm },
        16 => BlockOp::Grf { op: GrfOp::Add, dst: grf, src: RegId::grf(rng.gen_range(0..16)), imm },
        17 => BlockOp::Grf { op: GrfOp::Sub, dst: grf, src: RegId::grf(rng.gen_range(0..16)), imm },
        _ => {
            let file_id = rng.gen_range(0..1_000_000);
            if rng.gen_bool(0.5) {
                BlockOp::KernelRead { file_id }
            } else {
                BlockOp::KernelWrite { file_id }
            }
        }
    }
}

#[test]
fn acceptance_2_codecs_round_trip() {
    criterion(2, "trace and annotation codecs round-trip 10,000 random inputs each", || {
        let mut rng = ChaCha8Rng::seed_from_u64(0xC0DEC);

        for case in 0..10_000usize {
            let packets = random_packets(&mut rng);
            let wire = encode_packets(&packets).unwrap();
            let (entries, slots) = decode_stream(&wire).unwrap();
            let (want, want_slots) = expected_entries(&packets);
            assert_eq!(entries.len(), want.len(), "case {case}");
            for (e, (addr, slot)) in entries.iter().zip(&want) {
                assert_eq!((e.address(), e.slot()), (*addr, *slot), "case {case}");
            }
            assert_eq!(slots.len(), want_slots.len(), "case {case}");
            for (i, ctx) in want_slots.iter().enumerate() {
                assert_eq!(slots.context(i as u8), Some(*ctx), "case {case} slot {i}");
            }
            let packed = write_decoded_trace(&entries, &slots);
            let (entries2, slots2) = read_decoded_trace(&packed).unwrap();
            assert_eq!(entries, entries2, "case {case}");
            assert_eq!(
                slots.iter().collect::<Vec<_>>(),
                slots2.iter().collect::<Vec<_>>(),
                "case {case}"
            );
        }

        for case in 0..10_000usize {
            let op = random_block_op(&mut rng);
            let word = op.encode().unwrap();
            assert_eq!(BlockOp::decode(word).unwrap(), op, "case {case}: 0x{word:016x}");
        }

        for case in 0..250usize {
            let mut store = AnnotationStore::new();
            let mut addr = rng.gen::<u32>() & 0x00FF_FFFC;
            for _ in 0..rng.gen_range(1..16) {
                let ops = (0..rng.gen_range(1..12))
                    .map(|_| random_block_op(&mut rng))
                    .collect::<Vec<_>>();
                store.insert_block(addr, ops).unwrap();
                addr = addr.wrapping_add(4 * rng.gen_range(1..64));
            }
            let loaded = AnnotationStore::load(&store.save()).unwrap();
            assert_eq!(loaded.save(), store.save(), "case {case}");
            assert_eq!(loaded.len(), store.len(), "case {case}");
        }
    });
}

// ---------------------------------------------------------------------------
// 3. Thread isolation: two threads interleaved at any quantum end in the
//    same per-thread state as solo runs, and the trace stamps each entry
//    with its thread's slot in the low address bits.
// ---------------------------------------------------------------------------

fn state_ignoring_slot(v: &TagStateView) -> (ContextId, [u32; 16], [u32; 32], Vec<(u32, u32)>, String) {
    (
        v.context,
        v.trf,
        v.trf_fp,
        v.mem_tags.clone(),
        v.violation.as_ref().map(|x| x.to_string()).unwrap_or_default(),
    )
}

#[test]
fn acceptance_3_interleaved_threads_stay_isolated() {
    criterion(3, "interleaved threads match solo runs per slot; entries carry slot bits", || {
        let policies = [policy("policies/taint_or.pol")];
        let solo: Vec<(TagStateView, BTreeMap<u32, u32>)> = [
            ("pair_a.toy", 0x4d2u32),
            ("pair_b.toy", 0x4d3),
        ]
        .iter()
        .map(|&(name, tid)| {
            let mut fs = manifest_fs();
            let out = run_pipeline(
                &[thread(name, Strategy::S1, true, tid)],
                4,
                &mut fs,
                &policies,
                true,
                &[],
            )
            .unwrap();
            (out.report.tag_state_views().remove(0), out.report.file_tags.clone().unwrap())
        })
        .collect();

        for quantum in [1u32, 5, 50] {
            let threads = [
                thread("pair_a.toy", Strategy::S1, true, 0x4d2),
                thread("pair_b.toy", Strategy::S1, true, 0x4d3),
            ];
            let mut fs = manifest_fs();
            let out =
                run_pipeline(&threads, quantum, &mut fs, &policies, true, &[]).unwrap();

            let views = out.report.tag_state_views();
            assert_eq!(views.len(), 2, "quantum {quantum}");
            for (slot, view) in views.iter().enumerate() {
                assert_eq!(view.slot as usize, slot);
                assert_eq!(
                    state_ignoring_slot(view),
                    state_ignoring_slot(&solo[slot].0),
                    "quantum {quantum}: slot {slot} diverged from its solo run"
                );
            }

            let table = out.report.file_tags.as_ref().unwrap();
            assert_eq!(table.get(&9), solo[0].1.get(&9), "quantum {quantum}: thread A output");
            assert_eq!(table.get(&11), solo[1].1.get(&11), "quantum {quantum}: thread B output");

            let slot1: Vec<_> = out.entries.iter().filter(|e| e.slot() == 1).collect();
            assert!(!slot1.is_empty(), "quantum {quantum}: no slot-1 entries");
            assert!(out.entries.iter().any(|e| e.slot() == 0), "quantum {quantum}");
            for e in slot1 {
                assert_eq!(e.0 & 0x3, 1, "quantum {quantum}: entry 0x{:08x}", e.0);
            }
        }
    });
}

// ---------------------------------------------------------------------------
// 4. Rule-resolution equivalence: resolving propagation rules while the
//    unit runs and baking them in at analysis time must give identical
//    final state on every corpus workload.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_4_runtime_and_compile_rules_agree() {
    criterion(4, "run-time and analysis-time rule resolution give identical state", || {
        let mut store_bytes_differ = false;
        for name in CORPUS_PROGRAMS {
            for pol in ["policies/taint_or.pol", "policies/store_check.pol"] {
                let mut runtime = policy(pol);
                runtime.mode = PolicyMode::Runtime;
                let mut compile = policy(pol);
                compile.mode = PolicyMode::CompileTime;

                let threads = [thread(name, Strategy::S1, true, 0x4d2)];
                let mut fs_r = manifest_fs();
                let mut fs_c = manifest_fs();
                let out_r = run_pipeline(&threads, 4, &mut fs_r, &[runtime], true, &[])
                    .unwrap_or_else(|e| panic!("{name}/{pol} runtime: {e}"));
                let out_c = run_pipeline(&threads, 4, &mut fs_c, &[compile], true, &[])
                    .unwrap_or_else(|e| panic!("{name}/{pol} compile: {e}"));
                assert_eq!(
                    out_r.equivalence_text(),
                    out_c.equivalence_text(),
                    "{name}/{pol}: modes diverged"
                );
                assert_eq!(fs_r.tags(), fs_c.tags(), "{name}/{pol}: file tags diverged");
                if out_r.store.save() != out_c.store.save() {
                    store_bytes_differ = true;
                }
            }
        }
        assert!(
            store_bytes_differ,
            "the two modes produced identical annotation streams everywhere, \
             so the comparison shows nothing"
        );

        let threads = [
            thread("pair_a.toy", Strategy::S2, true, 0x4d2),
            thread("pair_b.toy", Strategy::S2, true, 0x4d3),
        ];
        let mut runtime = policy("policies/taint_or.pol");
        runtime.mode = PolicyMode::Runtime;
        let mut compile = policy("policies/taint_or.pol");
        compile.mode = PolicyMode::CompileTime;
        let mut fs_r = manifest_fs();
        let mut fs_c = manifest_fs();
        let out_r = run_pipeline(&threads, 3, &mut fs_r, &[runtime], true, &[]).unwrap();
        let out_c = run_pipeline(&threads, 3, &mut fs_c, &[compile], true, &[]).unwrap();
        assert_eq!(out_r.equivalence_text(), out_c.equivalence_text(), "interleaved pair");
    });
}

// ---------------------------------------------------------------------------
// 5. Code-size economics: the selective strategies never cost more than the
//    conventional two-instruction scheme, and the matrix kernel reproduces
//    its published census exactly (38 vs 10 added instructions, a 3.8x
//    reduction).
// ---------------------------------------------------------------------------

#[test]
fn acceptance_5_code_size_ordering_and_matrix_census() {
    criterion(5, "s2 <= s1 <= conventional size everywhere; matrix census is exact", || {
        let mut sources: Vec<String> = CORPUS_PROGRAMS.iter().map(|n| read(n)).collect();
        for seed in 200..240u64 {
            sources.extend(random_scenario(seed).texts);
        }
        for (i, text) in sources.iter().enumerate() {
            let program = parse_program(text).unwrap_or_else(|e| panic!("source {i}: {e}"));
            let table = strategy_table(&program, true).unwrap();
            let get = |n: &str| table.iter().find(|m| m.strategy.name() == n).unwrap();
            let (related, s1, s2) = (get("related"), get("s1"), get("s2"));
            assert!(
                s2.code_size_bytes <= s1.code_size_bytes
                    && s1.code_size_bytes <= related.code_size_bytes,
                "source {i}: size ordering violated ({} / {} / {})",
                related.code_size_bytes,
                s1.code_size_bytes,
                s2.code_size_bytes
            );
            assert!(s2.added_instructions <= s1.added_instructions);
            assert!(s1.added_instructions <= related.added_instructions);
        }

        let matrix = parse_program(&read("matrix.toy")).unwrap();
        assert_eq!(matrix.len(), 30);
        let table = strategy_table(&matrix, true).unwrap();
        let get = |n: &str| table.iter().find(|m| m.strategy.name() == n).unwrap();
        let (related, s1, s2) = (get("related"), get("s1"), get("s2"));
        assert_eq!((related.sites, related.added_instructions), (19, 38));
        assert_eq!((s1.sites, s1.added_instructions), (19, 19));
        assert_eq!((s2.sites, s2.added_instructions), (10, 10));
        assert_eq!(related.overhead_percent, 38.0 * 4.0 * 100.0 / 120.0);
        assert_eq!(s1.overhead_percent, 19.0 * 4.0 * 100.0 / 120.0);
        assert_eq!(s2.overhead_percent, 10.0 * 4.0 * 100.0 / 120.0);
        let reduction = related.added_instructions as f64 / s2.added_instructions as f64;
        assert_eq!(reduction, 3.8);
        assert!(reduction >= 3.0, "selective instrumentation must cut cost at least 3x");
    });
}

// ---------------------------------------------------------------------------
// 6. Tag translation table: a fixed entry budget that fails loudly when
//    exhausted, and translations that agree with a reference map over
//    random traffic.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_6_translation_table_budget_and_translations() {
    criterion(6, "translation table honors its 64-entry budget and translates correctly", || {
        let mut tm = TagMemory::new();
        let mut model: BTreeMap<u32, usize> = BTreeMap::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0x7A6);

        let mut vpns: Vec<u32> = Vec::new();
        while vpns.len() < 64 {
            let vpn = rng.gen_range(0..0x10_0000);
            if !model.contains_key(&vpn) {
                model.insert(vpn, vpns.len());
                vpns.push(vpn);
            }
        }
        for &vpn in &vpns {
            tm.register_mapping(vpn).unwrap();
        }
        assert_eq!(tm.tmmu().len(), 64);

        tm.register_mapping(vpns[7]).expect("re-registering a mapped page is a no-op");
        let fresh = (0..0x10_0000u32).find(|v| !model.contains_key(v)).unwrap();
        match tm.register_mapping(fresh) {
            Err(TagMemError::TmmuFull { capacity: 64 }) => {}
            other => panic!("expected a full-table failure, got {other:?}"),
        }

        let mut tags: BTreeMap<u32, u32> = BTreeMap::new();
        for step in 0..1000usize {
            let vpn = if rng.gen_bool(0.8) {
                vpns[rng.gen_range(0..vpns.len())]
            } else {
                fresh
            };
            let addr = (vpn << 12) | rng.gen_range(0..0x1000u32);
            match model.get(&vpn) {
                Some(&page) => {
                    let want_word = ((addr & 0xFFF) >> 2) as usize;
                    assert_eq!(tm.translate(addr).unwrap(), (page, want_word), "step {step}");
                    if rng.gen_bool(0.5) {
                        let tag = rng.gen::<u32>();
                        tm.write_tag(addr, tag).unwrap();
                        tags.insert(addr & !3, tag);
                    } else {
                        let want = tags.get(&(addr & !3)).copied().unwrap_or(0);
                        assert_eq!(tm.read_tag(addr).unwrap(), want, "step {step}");
                    }
                }
                None => {
                    assert!(
                        matches!(tm.translate(addr), Err(TagMemError::TmmuMiss { vaddr }) if vaddr == addr),
                        "step {step}: unmapped page must miss"
                    );
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// 7. Kernel file transfer: a read stamps the destination buffer with the
//    file's tag; a write folds the buffer's tags together and replaces the
//    file's tag after the block's annotations have run.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_7_kernel_transfer_tags_and_ordering() {
    criterion(7, "file reads tag buffers, writes fold tags back after annotations", || {
        let threads = [thread("loop_copy.toy", Strategy::S1, true, 0x4d2)];
        let mut fs = manifest_fs();
        let input = fs.bytes(4).to_vec();
        let out = run_pipeline(
            &threads,
            4,
            &mut fs,
            &[policy("policies/taint_or.pol")],
            true,
            &[],
        )
        .unwrap();

        let mem: BTreeMap<u32, u32> = out.report.units[0].mem_tags.iter().copied().collect();
        for addr in (0x3000..0x3010).step_by(4) {
            assert_eq!(mem.get(&addr), Some(&0x10), "read buffer word 0x{addr:08x}");
        }
        for addr in (0x3100..0x3110).step_by(4) {
            assert_eq!(mem.get(&addr), Some(&0x10), "transformed word 0x{addr:08x}");
        }
        assert_eq!(fs.tag(2), 0x10, "output file folded to the input's tag");
        assert_eq!(fs.tag(4), 0x10, "input file tag untouched");

        let expected: Vec<u8> = input
            .chunks_exact(4)
            .flat_map(|w| {
                let v = u32::from_le_bytes([w[0], w[1], w[2], w[3]]).wrapping_add(1);
                v.to_le_bytes()
            })
            .collect();
        assert_eq!(fs.bytes(2), &expected[..], "bytes moved through the transform");

        let log = &out.report.kernel_log;
        assert_eq!(log.len(), 2);
        let read_entry = &log[0];
        let write_entry = &log[1];
        assert_eq!((read_entry.op, read_entry.file_id), (KernelOpKind::Read, 4));
        assert_eq!((write_entry.op, write_entry.file_id), (KernelOpKind::Write, 2));
        assert!(!read_entry.skipped && !write_entry.skipped);
        assert_eq!(read_entry.reply, Some(0x10), "read reply carries the file's tag");
        assert_eq!(write_entry.reply, Some(0x10), "write reply carries the folded tag");
        for e in log {
            assert!(e.service_pos >= e.event_pos, "service cannot precede its event");
            assert!(e.anns_at_service >= e.anns_at_event);
        }
        assert!(write_entry.event_pos > read_entry.service_pos, "write follows the read");
        assert!(
            write_entry.anns_at_service > read_entry.anns_at_service,
            "the copy loop's annotations ran before the write was serviced"
        );

        // A write's fold *replaces* the file's tag: writing an untouched
        // (untagged) buffer over a tagged file clears it.
        let clobber = "\
.org 0x10000
    mov sp, #0x6F00
    mov r1, #0x2000
    mov r8, #8
    syswrite 4, r1, r8
    ret
";
        let program = parse_program(clobber).unwrap();
        let threads = [ThreadSpec {
            program: instrument(&program, Strategy::S1, true),
            ctx: ContextId::new(0x42, 0x4d2).unwrap(),
            seeds: ExecSeeds::default(),
        }];
        let mut fs = manifest_fs();
        assert_eq!(fs.tag(4), 0x10);
        run_pipeline(&threads, 4, &mut fs, &[policy("policies/taint_or.pol")], true, &[])
            .unwrap();
        assert_eq!(fs.tag(4), 0x00, "an untagged overwrite replaces the tag");
    });
}

// ---------------------------------------------------------------------------
// 8. The demo attack: detected with full instrumentation (exit 1, one
//    violation), and explicitly reported as missed when the library copy
//    helper is left uninstrumented (exit 0).
// ---------------------------------------------------------------------------

#[test]
fn acceptance_8_demo_attack_detection_and_blind_spot() {
    criterion(8, "demo attack: caught when instrumented, reported as missed when not", || {
        let run = |args: &[&str]| {
            let out = std::process::Command::new(env!("CARGO_BIN_EXE_dift"))
                .args(args)
                .output()
                .expect("binary runs");
            (out.status.code(), String::from_utf8_lossy(&out.stdout).into_owned())
        };

        let (code, text) = run(&["demo-attack", "secret-leak"]);
        assert_eq!(code, Some(1), "detection exits 1:\n{text}");
        assert!(text.contains("DETECTED"), "{text}");
        assert_eq!(text.matches("check=").count(), 1, "exactly one violation:\n{text}");

        let (code, text) = run(&["demo-attack", "library-wrapper"]);
        assert_eq!(code, Some(1), "instrumented library still detects:\n{text}");
        assert!(text.contains("DETECTED"), "{text}");

        let (code, text) = run(&["demo-attack", "library-wrapper", "--no-lib-instrumentation"]);
        assert_eq!(code, Some(0), "a miss is not a detection:\n{text}");
        assert!(text.contains("MISS"), "{text}");
        assert!(text.contains("DID reach the public log"), "the miss is spelled out:\n{text}");
        assert!(!text.contains("DETECTED"), "{text}");
    });
}

// ---------------------------------------------------------------------------
// 9. Concurrent policies: several units evaluating different policies over
//    one trace behave exactly as each would alone - one halting on its
//    check never perturbs the other.
// ---------------------------------------------------------------------------

/// Runs one thread through the pipeline stages by hand, forcing
/// multi-policy dispatch with a single unit.
fn multi_policy_solo(spec: &ThreadSpec, policy: &PolicyRegisters) -> RunReport {
    let store = analyze(&spec.program, policy, true).unwrap();
    let mut fs = manifest_fs();
    let initial_tags = fs.tags();
    let exec = execute(std::slice::from_ref(spec), 4, &mut fs).unwrap();
    let wire = encode_packets(&exec.packets).unwrap();
    let (entries, slots) = decode_stream(&wire).unwrap();
    let mut tagmem = TagMemory::new();
    for &vpn in &exec.touched_vpns[0] {
        tagmem.register_mapping(vpn).unwrap();
    }
    dispatch::run(RunInput {
        entries: &entries,
        slots: &slots,
        store: &store,
        config: DispatchConfig::multi_policy(vec![policy.clone()]),
        tagmems: vec![tagmem],
        events: &exec.events,
        file_tags: initial_tags,
    })
    .unwrap()
}

#[test]
fn acceptance_9_concurrent_policies_evaluate_independently() {
    criterion(9, "two policies over one trace: one halts on its check, the other completes", || {
        let spec = thread("demo_secret_leak.toy", Strategy::S1, true, 0x4d2);
        let store_check = policy("policies/store_check.pol");
        let taint_or = policy("policies/taint_or.pol");

        let mut fs = manifest_fs();
        let dual = run_pipeline(
            std::slice::from_ref(&spec),
            4,
            &mut fs,
            &[store_check.clone(), taint_or.clone()],
            true,
            &[],
        )
        .unwrap();
        let report = &dual.report;
        assert_eq!(report.units.len(), 2);
        assert!(report.file_tags.is_none(), "each unit keeps its own file table");

        let checker = &report.units[0];
        assert!(checker.halted);
        let v = checker.violation.as_ref().expect("the checking policy fires");
        assert_eq!(v.checked_tag, 0x80);
        assert!(
            !checker.file_tags.as_ref().unwrap().contains_key(&2),
            "the halted unit never serviced the log write"
        );

        let tracker = &report.units[1];
        assert!(!tracker.halted);
        assert!(tracker.violation.is_none());
        assert!(tracker.blocks_executed > checker.blocks_executed);
        assert_eq!(
            tracker.file_tags.as_ref().unwrap().get(&2),
            Some(&0x80),
            "the propagation policy sees the leak arrive in the log"
        );

        let solo_check = multi_policy_solo(&spec, &store_check);
        assert_eq!(
            report.unit_text(0),
            solo_check.unit_text(0),
            "the checking unit's entire report must be byte-identical to a solo run"
        );
        let solo_track = multi_policy_solo(&spec, &taint_or);
        assert_eq!(
            report.unit_text(1),
            solo_track.unit_text(0),
            "the tracking unit's entire report must be byte-identical to a solo run"
        );
    });
}

// Compile-time check that the error type stays available to callers who
// match on analysis failures (used by the library wrapper demos).
#[allow(dead_code)]
fn error_types_are_public(e: &AnnotError) -> String {
    e.to_string()
}
