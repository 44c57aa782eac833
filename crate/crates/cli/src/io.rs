//! Loading and formatting helpers shared by the subcommands.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use dift_core::toyisa::{instrument, parse_program, ExecSeeds, SimFileSystem, Strategy, ThreadSpec};
use dift_core::{ContextId, DecodedEntry, PolicyMode, PolicyRegisters, SlotTable};

use crate::args::{ModeArg, WorkloadArgs};

/// Default context ids: one address space, consecutive thread ids.
pub const DEFAULT_ASID: u8 = 0x42;
pub const DEFAULT_TID_BASE: u32 = 0x4d2;

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

/// Accepts `0x`-prefixed hex or decimal.
pub fn parse_u32(s: &str) -> Result<u32> {
    let t = s.trim();
    let parsed = if let Some(hex) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        u32::from_str_radix(hex, 16).ok()
    } else {
        t.parse().ok()
    };
    parsed.with_context(|| format!("'{t}' is not a 32-bit number"))
}

/// `asid:tid`, either part hex or decimal.
pub fn parse_ctx(s: &str) -> Result<ContextId> {
    let (a, t) = s.split_once(':').with_context(|| format!("'{s}' is not of the form asid:tid"))?;
    let asid = parse_u32(a)?;
    if asid > 0xFF {
        bail!("address-space id {asid:#x} does not fit in 8 bits");
    }
    ContextId::new(asid as u8, parse_u32(t)?).map_err(Into::into)
}

pub fn load_policy(path: &Path) -> Result<PolicyRegisters> {
    PolicyRegisters::parse(&read_text(path)?)
        .with_context(|| format!("parsing policy {}", path.display()))
}

/// Loads the policy list, applying the mode override and falling back to a
/// propagate-everything runtime policy when no file is given.
pub fn load_policies(paths: &[std::path::PathBuf], mode: Option<ModeArg>) -> Result<Vec<PolicyRegisters>> {
    let mut policies = if paths.is_empty() {
        vec![default_policy()]
    } else {
        paths.iter().map(|p| load_policy(p)).collect::<Result<Vec<_>>>()?
    };
    if let Some(mode) = mode {
        let mode = match mode {
            ModeArg::Runtime => PolicyMode::Runtime,
            ModeArg::Compile => PolicyMode::CompileTime,
        };
        for p in &mut policies {
            p.mode = mode;
        }
    }
    Ok(policies)
}

/// Tags flow and accumulate everywhere; nothing is checked.
pub fn default_policy() -> PolicyRegisters {
    PolicyRegisters::default().with_uniform_rule(dift_core::PropagationRule::Or)
}

/// Loads a file manifest, resolving member paths relative to the manifest's
/// own directory; no manifest means an empty file system.
pub fn load_file_system(manifest: Option<&Path>) -> Result<SimFileSystem> {
    let Some(path) = manifest else { return Ok(SimFileSystem::new()) };
    let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    SimFileSystem::parse_manifest(&read_text(path)?, |member| {
        std::fs::read(dir.join(member)).map_err(|e| e.to_string())
    })
    .with_context(|| format!("loading manifest {}", path.display()))
}

/// One address per line (`#` comments); each named page is pre-registered
/// with every unit's tag memory.
pub fn load_mappings(path: Option<&Path>) -> Result<Vec<u32>> {
    let Some(path) = path else { return Ok(Vec::new()) };
    let mut vpns = Vec::new();
    for raw in read_text(path)?.lines() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        vpns.push(parse_u32(line)? >> 12);
    }
    Ok(vpns)
}

/// Parses, instruments, and wires up each program of a workload.
pub fn build_threads(w: &WorkloadArgs) -> Result<Vec<ThreadSpec>> {
    let strategy: Strategy = w.strategy.to_core();
    if !w.ctxs.is_empty() && w.ctxs.len() != w.programs.len() {
        bail!("{} programs but {} --ctx values", w.programs.len(), w.ctxs.len());
    }
    let mut threads = Vec::new();
    for (i, path) in w.programs.iter().enumerate() {
        let program = parse_program(&read_text(path)?)
            .with_context(|| format!("parsing {}", path.display()))?;
        let ctx = match w.ctxs.get(i) {
            Some(s) => parse_ctx(s)?,
            None => ContextId::new(DEFAULT_ASID, DEFAULT_TID_BASE + i as u32)?,
        };
        threads.push(ThreadSpec {
            program: instrument(&program, strategy, !w.no_lib_instrumentation),
            ctx,
            seeds: ExecSeeds::default(),
        });
    }
    Ok(threads)
}

/// Human-readable listing of a decoded trace.
pub fn render_decoded(entries: &[DecodedEntry], slots: &SlotTable) -> String {
    let mut out = String::new();
    out.push_str("slots:\n");
    for (slot, ctx) in slots.iter() {
        out.push_str(&format!("  {slot} <- asid=0x{:02x} tid=0x{:06x}\n", ctx.asid, ctx.tid));
    }
    out.push_str(&format!("entries: {}\n", entries.len()));
    for (i, e) in entries.iter().enumerate() {
        out.push_str(&format!("  [{i:5}] 0x{:08x} slot {}\n", e.address(), e.slot()));
    }
    out
}

/// Keeps only comparable tag-state lines, so reports with bookkeeping
/// counters can be diffed against pure state dumps.
pub fn equivalence_filter(text: &str) -> String {
    let keep = |key: &str| -> bool {
        if let Some(rest) = key.strip_prefix("unit.") {
            let Some((_, field)) = rest.split_once('.') else { return false };
            return field.starts_with("ctx.")
                || field.starts_with("trf")
                || field.starts_with("mem.")
                || field.starts_with("file.")
                || field == "violation";
        }
        key.starts_with("file.")
    };
    let mut out = String::new();
    for line in text.lines() {
        if let Some((key, _)) = line.split_once('=') {
            if keep(key) {
                out.push_str(line);
                out.push('\n');
            }
        }
    }
    out
}

/// Final file-tag table of a run, for summaries.
pub fn file_tag_lines(tags: &BTreeMap<u32, u32>) -> String {
    let mut out = String::new();
    for (id, tag) in tags {
        out.push_str(&format!("  file {id} = 0x{tag:08x}\n"));
    }
    out
}
