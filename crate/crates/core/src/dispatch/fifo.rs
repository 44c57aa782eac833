//! The three hardware word FIFOs coupling the traced core, the kernel, and
//! the tag management core.
//!
//! * `Instr` — instrumented stores push data-memory addresses here for the
//!   FIFO-coupled tag load/store annotations to pop.
//! * `PsToPl` — the kernel pushes file tags here on kernel-read replies.
//! * `PlToPs` — the coprocessor pushes tags here for the kernel to read.
//!
//! FIFOs have a fixed depth; pushing into a full FIFO is an overflow error
//! rather than silent loss, and each FIFO records its high-water mark and
//! pop/push counts for capacity reporting.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Depth of each FIFO in the default configuration.
pub const DEFAULT_FIFO_DEPTH: usize = 16;

/// Which FIFO an operation touched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FifoKind {
    Instr,
    PsToPl,
    PlToPs,
}

impl FifoKind {
    pub fn name(self) -> &'static str {
        match self {
            FifoKind::Instr => "instr",
            FifoKind::PsToPl => "ps2pl",
            FifoKind::PlToPs => "pl2ps",
        }
    }
}

impl std::fmt::Display for FifoKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Push into a full FIFO.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("{fifo} FIFO overflow (depth {depth})")]
pub struct FifoOverflow {
    pub fifo: FifoKind,
    pub depth: usize,
}

/// One bounded word queue.
#[derive(Debug, Clone)]
pub struct Fifo {
    kind: FifoKind,
    depth: usize,
    queue: VecDeque<u32>,
    high_water: usize,
    pushes: u64,
    pops: u64,
}

impl Fifo {
    pub fn new(kind: FifoKind, depth: usize) -> Self {
        Fifo { kind, depth, queue: VecDeque::new(), high_water: 0, pushes: 0, pops: 0 }
    }

    pub fn push(&mut self, word: u32) -> Result<(), FifoOverflow> {
        if self.queue.len() >= self.depth {
            return Err(FifoOverflow { fifo: self.kind, depth: self.depth });
        }
        self.queue.push_back(word);
        self.pushes += 1;
        self.high_water = self.high_water.max(self.queue.len());
        Ok(())
    }

    pub fn pop(&mut self) -> Option<u32> {
        let word = self.queue.pop_front()?;
        self.pops += 1;
        Some(word)
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn kind(&self) -> FifoKind {
        self.kind
    }

    /// Largest occupancy ever observed.
    pub fn high_water(&self) -> usize {
        self.high_water
    }

    pub fn pushes(&self) -> u64 {
        self.pushes
    }

    pub fn pops(&self) -> u64 {
        self.pops
    }
}

/// The FIFO set owned by one tag management core.
#[derive(Debug, Clone)]
pub struct Fifos {
    pub instr: Fifo,
    pub ps2pl: Fifo,
    pub pl2ps: Fifo,
}

impl Default for Fifos {
    fn default() -> Self {
        Self::new(DEFAULT_FIFO_DEPTH)
    }
}

impl Fifos {
    pub fn new(depth: usize) -> Self {
        Fifos {
            instr: Fifo::new(FifoKind::Instr, depth),
            ps2pl: Fifo::new(FifoKind::PsToPl, depth),
            pl2ps: Fifo::new(FifoKind::PlToPs, depth),
        }
    }

    pub fn get(&self, kind: FifoKind) -> &Fifo {
        match kind {
            FifoKind::Instr => &self.instr,
            FifoKind::PsToPl => &self.ps2pl,
            FifoKind::PlToPs => &self.pl2ps,
        }
    }

    pub fn all(&self) -> [&Fifo; 3] {
        [&self.instr, &self.ps2pl, &self.pl2ps]
    }
}
