//! One function per subcommand. Each returns the process exit code:
//! 0 for success (or "nothing found"), 1 for a detection or a difference,
//! and errors bubble up to be reported as exit code 2.

use anyhow::{bail, Context, Result};
use dift_core::pft::decode_stream;
use dift_core::toyisa::{
    analyze, oracle_taint, parse_program, render_program, run_pipeline, strategy_table,
    SimFileSystem, ThreadSpec,
};
use dift_core::dispatch::{diff_lines, ViolationSummary};
use dift_core::{PolicyRegisters, RunReport};

use crate::args::*;
use crate::embedded;
use crate::io::*;

pub fn dispatch(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Command::Instrument(a) => cmd_instrument(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Run(a) => cmd_run(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Diff(a) => cmd_diff(a),
        Command::DecodeTrace(a) => cmd_decode_trace(a),
        Command::DemoAttack(a) => cmd_demo_attack(a),
    }
}

fn cmd_instrument(a: InstrumentArgs) -> Result<i32> {
    let program = parse_program(&read_text(&a.program)?)
        .with_context(|| format!("parsing {}", a.program.display()))?;
    let inst = dift_core::toyisa::instrument(
        &program,
        a.strategy.to_core(),
        !a.no_lib_instrumentation,
    );
    let text = render_program(&inst);
    match &a.out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{text}"),
    }
    Ok(0)
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<i32> {
    let program = parse_program(&read_text(&a.program)?)
        .with_context(|| format!("parsing {}", a.program.display()))?;
    let lib = !a.no_lib_instrumentation;
    let inst = dift_core::toyisa::instrument(&program, a.strategy.to_core(), lib);
    let policy = match &a.policy {
        Some(path) => load_policies(std::slice::from_ref(path), a.mode)?.remove(0),
        None => load_policies(&[], a.mode)?.remove(0),
    };
    let store = analyze(&inst, &policy, lib)
        .with_context(|| format!("analyzing {}", a.program.display()))?;

    let mut total_ops = 0usize;
    for (addr, ops) in store.blocks() {
        println!("block 0x{addr:08x}: {} ops", ops.len());
        for op in ops {
            println!("    {op}");
        }
        total_ops += ops.len();
    }
    println!("total: {} blocks, {} ops", store.len(), total_ops);
    if let Some(path) = &a.out {
        std::fs::write(path, store.save())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(0)
}

fn cmd_stats(a: StatsArgs) -> Result<i32> {
    let program = parse_program(&read_text(&a.program)?)
        .with_context(|| format!("parsing {}", a.program.display()))?;
    let table = strategy_table(&program, !a.no_lib_instrumentation)?;
    println!(
        "{:<10} {:>6} {:>7} {:>12} {:>10}",
        "strategy", "sites", "added", "code bytes", "overhead"
    );
    for m in &table {
        println!(
            "{:<10} {:>6} {:>7} {:>12} {:>9.1}%",
            m.strategy.name(),
            m.sites,
            m.added_instructions,
            m.code_size_bytes,
            m.overhead_percent,
        );
    }
    Ok(0)
}

/// Common result handling for `run`: summarize, persist, and pick the code.
fn finish_run(
    report: &RunReport,
    violations: &[(usize, ViolationSummary)],
) -> i32 {
    println!("mode: {} ({} units)", report.mode, report.units.len());
    println!("entries dispatched: {}   kernel events: {}", report.entries_total, report.events_total);
    for u in &report.units {
        println!(
            "unit {}: slot {} ctx 0x{:02x}:0x{:06x} blocks={} ops={} halted={}",
            u.unit, u.slot, u.context.asid, u.context.tid, u.blocks_executed, u.ops_executed,
            if u.halted { "yes" } else { "no" },
        );
    }
    for (unit, v) in violations {
        println!("unit {unit} violation: {v}");
    }
    if let Some(files) = &report.file_tags {
        if !files.is_empty() {
            println!("file tags:");
            print!("{}", file_tag_lines(files));
        }
    }
    if violations.is_empty() {
        0
    } else {
        1
    }
}

fn report_violations(report: &RunReport) -> Vec<(usize, ViolationSummary)> {
    report
        .units
        .iter()
        .filter_map(|u| u.violation.as_ref().map(|v| (u.unit, ViolationSummary::from(v))))
        .collect()
}

fn cmd_run(a: RunArgs) -> Result<i32> {
    let threads = build_threads(&a.workload)?;
    let policies = load_policies(&a.workload.policies, a.workload.mode)?;
    let mut fs = load_file_system(a.workload.files.as_deref())?;
    let vpns = load_mappings(a.mappings.as_deref())?;
    let out = run_pipeline(
        &threads,
        a.workload.quantum,
        &mut fs,
        &policies,
        !a.workload.no_lib_instrumentation,
        &vpns,
    )?;

    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let write = |name: &str, bytes: &[u8]| -> Result<()> {
            let path = dir.join(name);
            std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
        };
        write("report.txt", out.report.to_text().as_bytes())?;
        write("report.json", out.report.to_json().as_bytes())?;
        write("equivalence.txt", out.equivalence_text().as_bytes())?;
        write("trace.pft", &out.wire)?;
        let (entries, slots) = decode_stream(&out.wire)?;
        write("trace.decoded", render_decoded(&entries, &slots).as_bytes())?;
        write("store.tann", &out.store.save())?;
        println!("artifacts written to {}", dir.display());
    }

    Ok(finish_run(&out.report, &report_violations(&out.report)))
}

fn cmd_oracle(a: OracleArgs) -> Result<i32> {
    let threads = build_threads(&a.workload)?;
    let policies = load_policies(&a.workload.policies, a.workload.mode)?;
    let mut fs = load_file_system(a.workload.files.as_deref())?;
    let out = oracle_taint(
        &threads,
        a.workload.quantum,
        &mut fs,
        &policies,
        !a.workload.no_lib_instrumentation,
    )?;

    let text = out.equivalence_text();
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join("oracle.txt");
        std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
        println!("reference state written to {}", path.display());
    } else {
        print!("{text}");
    }
    let violations: Vec<(usize, ViolationSummary)> = out
        .violations()
        .into_iter()
        .enumerate()
        .filter_map(|(unit, v)| v.map(|v| (unit, v)))
        .collect();
    for (unit, v) in &violations {
        println!("unit {unit} violation: {v}");
    }
    Ok(if violations.is_empty() { 0 } else { 1 })
}

fn cmd_diff(a: DiffArgs) -> Result<i32> {
    let left = equivalence_filter(&read_text(&a.left)?);
    let right = equivalence_filter(&read_text(&a.right)?);
    if left.is_empty() && right.is_empty() {
        bail!("neither input contains comparable state lines");
    }
    let diff = diff_lines(&left, &right);
    if diff.is_empty() {
        println!("equivalent: all comparable state lines agree");
        Ok(0)
    } else {
        for line in &diff {
            println!("{line}");
        }
        println!("{} differing keys", diff.iter().filter(|l| l.starts_with('-')).count().max(diff.iter().filter(|l| l.starts_with('+')).count()));
        Ok(1)
    }
}

fn cmd_decode_trace(a: DecodeTraceArgs) -> Result<i32> {
    let bytes = read_bytes(&a.trace)?;
    let (entries, slots) = decode_stream(&bytes)
        .with_context(|| format!("decoding {}", a.trace.display()))?;
    print!("{}", render_decoded(&entries, &slots));
    Ok(0)
}

fn cmd_demo_attack(a: DemoAttackArgs) -> Result<i32> {
    let lib = !a.no_lib_instrumentation;
    let (name, source) = match a.demo {
        DemoKind::SecretLeak => ("secret-leak", embedded::SECRET_LEAK_TOY),
        DemoKind::LibraryWrapper => ("library-wrapper", embedded::LIB_WRAPPER_TOY),
    };
    println!("demo: {name}");
    println!("  file 1 holds {} secret bytes, tagged 0x80;", embedded::SECRET_BIN.len());
    println!("  the program builds a log record and appends it to file 2 (the public log).");
    if a.demo == DemoKind::LibraryWrapper {
        println!(
            "  the copy into the record happens inside a library helper, which is {}.",
            if lib { "instrumented like everything else" } else { "NOT instrumented" }
        );
    }
    println!("policy: any tagged word moved by a load or store halts the tracking unit.");
    println!();

    let program = parse_program(source).expect("embedded program parses");
    let threads = [ThreadSpec {
        program: dift_core::toyisa::instrument(&program, a.strategy.to_core(), lib),
        ctx: dift_core::ContextId::new(DEFAULT_ASID, DEFAULT_TID_BASE)?,
        seeds: Default::default(),
    }];
    let policies = [PolicyRegisters::parse(embedded::STORE_CHECK_POL).expect("embedded policy")];
    let mut fs = SimFileSystem::new();
    fs.insert_file(1, embedded::SECRET_BIN.to_vec(), 0x80);

    let out = run_pipeline(&threads, 4, &mut fs, &policies, lib, &[])?;
    let violations = report_violations(&out.report);

    let leaked = fs.bytes(2).windows(4).any(|w| embedded::SECRET_BIN.windows(4).any(|s| s == w));
    match violations.first() {
        Some((unit, v)) => {
            println!("DETECTED: unit {unit} halted at the tagged transfer");
            println!("  {v}");
            println!("  the log write was never tag-serviced; the flow is on record.");
            Ok(1)
        }
        None => {
            println!("MISS: no check fired, the unit ran to completion.");
            if leaked {
                println!("  yet the secret bytes DID reach the public log (file 2):");
                println!("  the uninstrumented helper moved them without a single annotation,");
                println!("  so the hardware saw no tagged load or store to object to.");
            }
            println!("  final tag on the log file: 0x{:08x}", fs.tag(2));
            Ok(0)
        }
    }
}
