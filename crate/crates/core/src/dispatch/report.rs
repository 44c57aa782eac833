//! Final-state reports for dispatcher runs.
//!
//! A report serializes two ways:
//!
//! * a line-oriented `key=value` text with keys sorted, for byte-stable
//!   comparison between runs and for human diffing;
//! * a JSON document carrying the same data structurally.
//!
//! Keys split into *comparable state* (register tags, memory tags, file
//! tags, context identity, violation verdicts) and *bookkeeping* (counters,
//! FIFO statistics, logs). Equivalence checks between a full pipeline run
//! and the reference tag computation use only the comparable subset, since
//! bookkeeping depends on transport details the reference does not model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::pft::ContextId;
use crate::tmc::{CheckKind, Violation};

use super::DispatchMode;

/// Occupancy and traffic counters for one FIFO.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FifoStats {
    pub high_water: usize,
    pub pushes: u64,
    pub pops: u64,
}

/// Direction of a kernel file-I/O request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelOpKind {
    Read,
    Write,
}

impl KernelOpKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelOpKind::Read => "read",
            KernelOpKind::Write => "write",
        }
    }
}

impl std::fmt::Display for KernelOpKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One kernel request as the dispatcher saw it: where it sat in the event
/// stream, when it was serviced, and how much annotation work the unit had
/// completed at each point. `service_pos == event_pos` whenever the unit had
/// no queued work when the request arrived.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelLogEntry {
    pub unit: usize,
    pub ctx: ContextId,
    pub op: KernelOpKind,
    pub file_id: u32,
    /// Event-stream index at which the request arrived.
    pub event_pos: usize,
    /// Event-stream index at which it was serviced (or skipped).
    pub service_pos: usize,
    pub anns_at_event: u64,
    pub anns_at_service: u64,
    /// Read: the file tag delivered. Write: the folded buffer tag. `None`
    /// when the request was consumed by a halted unit.
    pub reply: Option<u32>,
    pub skipped: bool,
}

/// Violation identity for cross-run comparison: which check fired, on what
/// tag value, in which block. Operation indices and scheduling positions are
/// deliberately absent — equivalent runs must agree on this much and no
/// more.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationSummary {
    pub check_kind: CheckKind,
    pub checked_tag: u32,
    pub block_address: u32,
}

impl From<&Violation> for ViolationSummary {
    fn from(v: &Violation) -> Self {
        ViolationSummary {
            check_kind: v.check_kind,
            checked_tag: v.checked_tag,
            block_address: v.block_address,
        }
    }
}

impl std::fmt::Display for ViolationSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "check={},tag=0x{:08x},block=0x{:08x}",
            self.check_kind, self.checked_tag, self.block_address
        )
    }
}

/// The externally comparable tag state of one unit — or of one simulated
/// thread in the reference computation. `mem_tags` lists only nonzero word
/// tags, ascending by address; `file_tags` is present when the state owns a
/// private file-tag table (multi-policy units).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagStateView {
    pub slot: u8,
    pub context: ContextId,
    pub trf: [u32; 16],
    pub trf_fp: [u32; 32],
    pub mem_tags: Vec<(u32, u32)>,
    pub file_tags: Option<BTreeMap<u32, u32>>,
    pub violation: Option<ViolationSummary>,
}

/// Everything a run learned about one unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitReport {
    pub unit: usize,
    pub slot: u8,
    pub context: ContextId,
    pub halted: bool,
    pub trf: [u32; 16],
    pub trf_fp: [u32; 32],
    pub grf: [u32; 16],
    pub ops_executed: u64,
    pub blocks_executed: u64,
    pub entries_dispatched: u64,
    pub skipped_entries: u64,
    pub dropped_pushes: u64,
    pub skipped_kernel: u64,
    /// Nonzero tag-memory words, ascending by address.
    pub mem_tags: Vec<(u32, u32)>,
    /// Present only when the unit owns a private file-tag table.
    pub file_tags: Option<BTreeMap<u32, u32>>,
    pub fifo_instr: FifoStats,
    pub fifo_ps2pl: FifoStats,
    pub fifo_pl2ps: FifoStats,
    pub violation: Option<Violation>,
}

impl UnitReport {
    pub fn tag_state_view(&self) -> TagStateView {
        TagStateView {
            slot: self.slot,
            context: self.context,
            trf: self.trf,
            trf_fp: self.trf_fp,
            mem_tags: self.mem_tags.clone(),
            file_tags: self.file_tags.clone(),
            violation: self.violation.as_ref().map(ViolationSummary::from),
        }
    }

    /// All of this unit's report lines, keys unprefixed.
    fn lines(&self) -> Vec<(String, String)> {
        let mut out = state_lines(&self.tag_state_view());
        out.push(("slot".into(), format!("{}", self.slot)));
        out.push(("halted".into(), format!("{}", self.halted)));
        for (i, tag) in self.grf.iter().enumerate() {
            out.push((format!("grf.{i:02}"), format!("0x{tag:08x}")));
        }
        out.push(("ops".into(), format!("{}", self.ops_executed)));
        out.push(("blocks".into(), format!("{}", self.blocks_executed)));
        out.push(("entries".into(), format!("{}", self.entries_dispatched)));
        out.push(("skipped_entries".into(), format!("{}", self.skipped_entries)));
        out.push(("dropped_pushes".into(), format!("{}", self.dropped_pushes)));
        out.push(("skipped_kernel".into(), format!("{}", self.skipped_kernel)));
        for (name, stats) in [
            ("instr", self.fifo_instr),
            ("ps2pl", self.fifo_ps2pl),
            ("pl2ps", self.fifo_pl2ps),
        ] {
            out.push((format!("fifo.{name}.high"), format!("{}", stats.high_water)));
            out.push((format!("fifo.{name}.pushes"), format!("{}", stats.pushes)));
            out.push((format!("fifo.{name}.pops"), format!("{}", stats.pops)));
        }
        if let Some(v) = &self.violation {
            out.push(("violation.op".into(), format!("{}", v.annotation_index)));
        }
        out
    }

    /// The unit's full report as sorted `key=value` text with no unit
    /// prefix, so reports of corresponding units from different runs can be
    /// compared byte for byte.
    pub fn text(&self) -> String {
        join_sorted(self.lines())
    }
}

/// Comparable-state lines for one view, keys unprefixed.
fn state_lines(s: &TagStateView) -> Vec<(String, String)> {
    let mut out = Vec::new();
    out.push(("ctx.asid".into(), format!("0x{:02x}", s.context.asid)));
    out.push(("ctx.tid".into(), format!("0x{:06x}", s.context.tid)));
    for (i, tag) in s.trf.iter().enumerate() {
        out.push((format!("trf.{i:02}"), format!("0x{tag:08x}")));
    }
    for (i, tag) in s.trf_fp.iter().enumerate() {
        out.push((format!("trf_fp.{i:02}"), format!("0x{tag:08x}")));
    }
    for (addr, tag) in &s.mem_tags {
        out.push((format!("mem.{addr:08x}"), format!("0x{tag:08x}")));
    }
    if let Some(files) = &s.file_tags {
        for (id, tag) in files {
            out.push((format!("file.{id}"), format!("0x{tag:08x}")));
        }
    }
    if let Some(v) = &s.violation {
        out.push(("violation".into(), v.to_string()));
    }
    out
}

fn join_sorted(lines: Vec<(String, String)>) -> String {
    let mut rendered: Vec<String> = lines.into_iter().map(|(k, v)| format!("{k}={v}")).collect();
    rendered.sort();
    let mut out = rendered.join("\n");
    if !out.is_empty() {
        out.push('\n');
    }
    out
}

/// Serializes comparable state only: per-view lines under `unit.<k>.` plus
/// the shared file-tag table (if any) unprefixed. Both the dispatcher and
/// the reference tag computation serialize through this one function, so an
/// equivalence check is a byte comparison.
pub fn equivalence_text(
    states: &[TagStateView],
    shared_file_tags: Option<&BTreeMap<u32, u32>>,
) -> String {
    let mut lines = Vec::new();
    for (k, s) in states.iter().enumerate() {
        for (key, value) in state_lines(s) {
            lines.push((format!("unit.{k}.{key}"), value));
        }
    }
    if let Some(files) = shared_file_tags {
        for (id, tag) in files {
            lines.push((format!("file.{id}"), format!("0x{tag:08x}")));
        }
    }
    join_sorted(lines)
}

/// Result of one dispatcher run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: DispatchMode,
    pub units: Vec<UnitReport>,
    /// The shared file-tag table (per-thread mode only; multi-policy units
    /// each carry their own).
    pub file_tags: Option<BTreeMap<u32, u32>>,
    pub kernel_log: Vec<KernelLogEntry>,
    pub entries_total: usize,
    pub events_total: usize,
}

impl RunReport {
    pub fn tag_state_views(&self) -> Vec<TagStateView> {
        self.units.iter().map(UnitReport::tag_state_view).collect()
    }

    /// Comparable state only; see [`equivalence_text`].
    pub fn equivalence_text(&self) -> String {
        equivalence_text(&self.tag_state_views(), self.file_tags.as_ref())
    }

    /// One unit's full report with no unit prefix; see [`UnitReport::text`].
    pub fn unit_text(&self, unit: usize) -> String {
        self.units[unit].text()
    }

    /// The whole report as sorted `key=value` text: every unit's lines under
    /// `unit.<k>.`, the shared file table, the kernel log, and run metadata.
    pub fn to_text(&self) -> String {
        let mut lines = Vec::new();
        for (k, u) in self.units.iter().enumerate() {
            for (key, value) in u.lines() {
                lines.push((format!("unit.{k}.{key}"), value));
            }
        }
        if let Some(files) = &self.file_tags {
            for (id, tag) in files {
                lines.push((format!("file.{id}"), format!("0x{tag:08x}")));
            }
        }
        for (i, e) in self.kernel_log.iter().enumerate() {
            let p = format!("kernel.{i:04}.");
            lines.push((format!("{p}ctx"), format!("0x{:02x}/0x{:06x}", e.ctx.asid, e.ctx.tid)));
            lines.push((format!("{p}op"), e.op.to_string()));
            lines.push((format!("{p}file"), format!("{}", e.file_id)));
            lines.push((format!("{p}unit"), format!("{}", e.unit)));
            lines.push((format!("{p}event_pos"), format!("{}", e.event_pos)));
            lines.push((format!("{p}service_pos"), format!("{}", e.service_pos)));
            lines.push((format!("{p}anns_at_event"), format!("{}", e.anns_at_event)));
            lines.push((format!("{p}anns_at_service"), format!("{}", e.anns_at_service)));
            let reply = match e.reply {
                Some(tag) => format!("0x{tag:08x}"),
                None => "none".into(),
            };
            lines.push((format!("{p}reply"), reply));
            lines.push((format!("{p}skipped"), format!("{}", e.skipped)));
        }
        lines.push(("meta.mode".into(), self.mode.to_string()));
        lines.push(("meta.units".into(), format!("{}", self.units.len())));
        lines.push(("meta.entries".into(), format!("{}", self.entries_total)));
        lines.push(("meta.events".into(), format!("{}", self.events_total)));
        join_sorted(lines)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Compares two `key=value` texts. Returns one line per difference:
/// `-key=value` for the left side's version, `+key=value` for the right's;
/// a key missing on one side contributes only the other side's line. Empty
/// result means the texts agree.
pub fn diff_lines(left: &str, right: &str) -> Vec<String> {
    let parse = |text: &str| -> BTreeMap<String, String> {
        text.lines()
            .filter(|l| !l.is_empty())
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    };
    let l = parse(left);
    let r = parse(right);
    let mut out = Vec::new();
    let keys: std::collections::BTreeSet<&String> = l.keys().chain(r.keys()).collect();
    for key in keys {
        match (l.get(key), r.get(key)) {
            (Some(lv), Some(rv)) if lv == rv => {}
            (lv, rv) => {
                if let Some(lv) = lv {
                    out.push(format!("-{key}={lv}"));
                }
                if let Some(rv) = rv {
                    out.push(format!("+{key}={rv}"));
                }
            }
        }
    }
    out
}
