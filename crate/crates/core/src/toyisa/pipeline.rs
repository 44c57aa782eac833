//! The full simulated pipeline, wired end to end:
//!
//! 1. static analysis of every program produces the annotation store;
//! 2. the executor runs all threads and emits the packet trace, the event
//!    stream, and the set of touched data pages;
//! 3. the packets are encoded to wire bytes and decoded back — the decoder's
//!    entries and slot table, not the executor's internal state, feed the
//!    dispatcher, so the wire format is load-bearing;
//! 4. each unit gets a tag memory with the thread's touched pages (plus
//!    seeded and explicitly requested pages) registered and seed tags
//!    written;
//! 5. the dispatcher drives the tag cores over the decoded entries and the
//!    event stream;
//! 6. with a single policy the final shared file-tag table is written back
//!    into the simulated file system.
//!
//! One policy tracks every thread on its own unit; several policies each
//! track the (then required single) thread. Because all units of a
//! several-policy run share one annotation store, such policies must resolve
//! propagation rules at run time — resolved-at-analysis rules would bake one
//! policy's choices into every unit's annotations.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::annot::{AnnotError, AnnotationStore, PolicyMode, PolicyRegisters};
use crate::dispatch::{self, DispatchConfig, DispatchError, RunInput, RunReport};
use crate::pft::{decode_stream, encode_packets, DecodedEntry, PftError};
use crate::tagmem::{TagMemError, TagMemory};

use super::analyze::analyze;
use super::execute::{execute, ExecOutcome, ThreadSpec};
use super::fs::SimFileSystem;
use super::ToyIsaError;

/// Any failure along the pipeline, keeping the failing stage's error.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Toy(#[from] ToyIsaError),
    #[error(transparent)]
    Trace(#[from] PftError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    TagMem(#[from] TagMemError),
    #[error(transparent)]
    Annot(#[from] AnnotError),
    #[error("invalid pipeline configuration: {reason}")]
    Config { reason: String },
}

/// Everything a pipeline run produced.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// The dispatcher's full report (tag state, counters, kernel log).
    pub report: RunReport,
    /// The encoded trace exactly as it crossed the wire.
    pub wire: Vec<u8>,
    /// The decoded entries the dispatcher consumed.
    pub entries: Vec<DecodedEntry>,
    /// The architectural run's products (packets, events, final states,
    /// touched pages).
    pub exec: ExecOutcome,
    /// The annotation store the dispatcher executed from.
    pub store: AnnotationStore,
}

impl PipelineOutput {
    /// The comparable tag state as sorted `key=value` text.
    pub fn equivalence_text(&self) -> String {
        self.report.equivalence_text()
    }
}

fn config_err<T>(reason: String) -> Result<T, PipelineError> {
    Err(PipelineError::Config { reason })
}

/// Runs the whole pipeline; see the module docs for the stages.
/// `lib_annotations: false` strips tag propagation (not kernel I/O markers)
/// from library-marked instructions, both in the analysis and in what the
/// dispatcher consequently executes.
pub fn run_pipeline(
    threads: &[ThreadSpec],
    quantum: u32,
    fs: &mut SimFileSystem,
    policies: &[PolicyRegisters],
    lib_annotations: bool,
    extra_vpns: &[u32],
) -> Result<PipelineOutput, PipelineError> {
    if threads.is_empty() || threads.len() > 4 {
        return config_err(format!("{} threads given, 1..=4 supported", threads.len()));
    }
    if policies.is_empty() {
        return config_err("at least one policy is required".into());
    }
    let multi = policies.len() > 1;
    if multi {
        if threads.len() != 1 {
            return config_err(format!(
                "several policies track exactly one thread, {} given",
                threads.len()
            ));
        }
        if policies.iter().any(|p| p.mode == PolicyMode::CompileTime) {
            return config_err(
                "several policies share one annotation store, so every policy must resolve \
                 propagation rules at run time"
                    .into(),
            );
        }
    }
    for i in 0..threads.len() {
        for j in i + 1..threads.len() {
            if threads[i].ctx == threads[j].ctx {
                return config_err(format!("duplicate context {}", threads[i].ctx));
            }
        }
    }

    // Stage 1: annotations. Identical programs merge as no-ops; programs
    // overlapping in address space with different content are rejected.
    let mut store = AnnotationStore::new();
    if multi {
        store.merge(&analyze(&threads[0].program, &policies[0], lib_annotations)?)?;
    } else {
        for spec in threads {
            store.merge(&analyze(&spec.program, &policies[0], lib_annotations)?)?;
        }
    }

    // Stage 2: the architectural run. The file-tag snapshot is taken first:
    // files created while running enter the table through their own write
    // events, never retroactively.
    let initial_tags = fs.tags();
    let exec = execute(threads, quantum, fs)?;

    // Stage 3: the wire round trip.
    let wire = encode_packets(&exec.packets)?;
    let (entries, slots) = decode_stream(&wire)?;

    // Stage 4: tag memories.
    let unit_count = if multi { policies.len() } else { threads.len() };
    let mut tagmems = Vec::with_capacity(unit_count);
    for k in 0..unit_count {
        let t = if multi { 0 } else { k };
        let mut tm = TagMemory::new();
        let mut vpns: BTreeSet<u32> = exec.touched_vpns[t].clone();
        for &(addr, _) in &threads[t].seeds.mem_tags {
            vpns.insert(addr >> 12);
        }
        vpns.extend(extra_vpns.iter().copied());
        for vpn in vpns {
            tm.register_mapping(vpn)?;
        }
        for &(addr, tag) in &threads[t].seeds.mem_tags {
            tm.write_tag(addr, tag)?;
        }
        tagmems.push(tm);
    }

    // Stage 5: dispatch.
    let config = if multi {
        DispatchConfig::multi_policy(policies.to_vec())
    } else {
        DispatchConfig::per_thread(policies[0].clone(), threads.len())
    };
    let report = dispatch::run(RunInput {
        entries: &entries,
        slots: &slots,
        store: &store,
        config,
        tagmems,
        events: &exec.events,
        file_tags: initial_tags,
    })?;

    // Stage 6: file-tag write-back (shared table only).
    if !multi {
        if let Some(tags) = &report.file_tags {
            fs.apply_tags(tags);
        }
    }

    Ok(PipelineOutput { report, wire, entries, exec, store })
}
