//! Command-line grammar. Parsing stops here; interpretation (loading
//! files, resolving defaults that need context) lives in [`crate::io`] and
//! [`crate::commands`].

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Simulator for an off-core tag-tracking coprocessor: instrument small
/// programs, run them through the traced tag pipeline, and compare the
/// result against a direct reference computation.
#[derive(Debug, Parser)]
#[command(name = "dift", version, max_term_width = 100)]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rewrite a program with address-exporting instrumentation.
    Instrument(InstrumentArgs),
    /// Translate an instrumented program into per-block tag annotations.
    Analyze(AnalyzeArgs),
    /// Compare code-size cost across instrumentation strategies.
    Stats(StatsArgs),
    /// Execute programs and drive the traced tag pipeline end to end.
    Run(RunArgs),
    /// Compute the reference tag state directly, without the hardware model.
    Oracle(OracleArgs),
    /// Compare two state reports, ignoring non-state bookkeeping lines.
    Diff(DiffArgs),
    /// Decode a binary trace file and list its entries.
    DecodeTrace(DecodeTraceArgs),
    /// Run a built-in attack scenario and report whether it is caught.
    DemoAttack(DemoAttackArgs),
}

/// Instrumentation strategy names as exposed on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    /// Two added instructions per exported site (conventional cost model).
    Related,
    /// One exporting store per register-based load/store site.
    S1,
    /// Like s1, but stack/frame-based sites are recovered statically.
    S2,
}

impl StrategyArg {
    pub fn to_core(self) -> dift_core::toyisa::Strategy {
        match self {
            StrategyArg::Related => dift_core::toyisa::Strategy::Baseline,
            StrategyArg::S1 => dift_core::toyisa::Strategy::S1,
            StrategyArg::S2 => dift_core::toyisa::Strategy::S2,
        }
    }
}

/// Where annotation propagation rules get resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Annotations carry the instruction class; rules come from policy
    /// registers while the unit runs.
    Runtime,
    /// Rules are baked into the annotations when the program is analyzed.
    Compile,
}

#[derive(Debug, Args)]
pub struct InstrumentArgs {
    /// Program source file.
    pub program: PathBuf,
    #[arg(long, value_enum, default_value = "s1")]
    pub strategy: StrategyArg,
    /// Leave library (`.lib`) regions uninstrumented.
    #[arg(long)]
    pub no_lib_instrumentation: bool,
    /// Write the rewritten program here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Program source file (instrumented on the fly; see --strategy).
    pub program: PathBuf,
    #[arg(long, value_enum, default_value = "s1")]
    pub strategy: StrategyArg,
    /// Policy file; defaults to a propagate-everything runtime policy.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Override the policy file's mode.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Leave library regions uninstrumented and unannotated.
    #[arg(long)]
    pub no_lib_instrumentation: bool,
    /// Also save the binary annotation store here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Program source file.
    pub program: PathBuf,
    /// Cost the program as if library regions were left uninstrumented.
    #[arg(long)]
    pub no_lib_instrumentation: bool,
}

/// Flags shared by `run` and `oracle`, which must accept identical
/// workloads for their outputs to be comparable.
#[derive(Debug, Args)]
pub struct WorkloadArgs {
    /// Program source files, one per hardware thread (max 4; one program
    /// with several policies switches to multi-policy mode).
    #[arg(required = true)]
    pub programs: Vec<PathBuf>,
    /// Policy files; repeat the flag or separate with commas. One policy
    /// tracks every thread; several policies track one thread in parallel.
    /// Without the flag, a propagate-everything runtime policy is used.
    #[arg(long, value_delimiter = ',')]
    pub policies: Vec<PathBuf>,
    /// Override the mode of every loaded policy.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// File manifest (`id,tag,path` lines; paths resolve relative to it).
    #[arg(long)]
    pub files: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "s1")]
    pub strategy: StrategyArg,
    /// Round-robin scheduling quantum, in instructions.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..))]
    pub quantum: u32,
    /// Leave library regions uninstrumented and untracked.
    #[arg(long)]
    pub no_lib_instrumentation: bool,
    /// Context id for each thread as `asid:tid` (hex accepted); defaults
    /// to 0x42:0x4d2, 0x42:0x4d3, ...
    #[arg(long = "ctx")]
    pub ctxs: Vec<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub workload: WorkloadArgs,
    /// Extra-page file: one address per line; each address's page is
    /// registered with every unit's tag memory before the run.
    #[arg(long)]
    pub mappings: Option<PathBuf>,
    /// Directory for artifacts (report.txt/.json, equivalence.txt,
    /// trace.pft, trace.decoded, store.tann); created if missing.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub workload: WorkloadArgs,
    /// Directory for the reference state report (oracle.txt).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiffArgs {
    /// Left report (equivalence.txt, oracle.txt, or report.txt).
    pub left: PathBuf,
    /// Right report.
    pub right: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecodeTraceArgs {
    /// Binary trace file as written by `run` (trace.pft).
    pub trace: PathBuf,
}

/// Built-in demonstration scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DemoKind {
    /// A program copies a word of a tagged secret file into a public log.
    SecretLeak,
    /// The same leak, routed through a library copy helper.
    LibraryWrapper,
}

#[derive(Debug, Args)]
pub struct DemoAttackArgs {
    #[arg(value_enum)]
    pub demo: DemoKind,
    /// Leave the library helper uninstrumented (library-wrapper only):
    /// shows the blind spot instead of the detection.
    #[arg(long)]
    pub no_lib_instrumentation: bool,
    #[arg(long, value_enum, default_value = "s1")]
    pub strategy: StrategyArg,
}
