//! Architectural machine state for one thread: registers, float registers,
//! and a sparse byte-addressed data memory. Threads never share memory; each
//! carries its own map.

use std::collections::BTreeMap;

use crate::pft::ContextId;

use super::{ToyProgram, RETURN_SENTINEL, LR};

/// Sparse little-endian byte memory. Unwritten bytes read as zero, so any
/// address is readable; writes materialise only the touched bytes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DataMemory {
    bytes: BTreeMap<u32, u8>,
}

impl DataMemory {
    pub fn new() -> Self {
        DataMemory::default()
    }

    pub fn read_u8(&self, addr: u32) -> u8 {
        self.bytes.get(&addr).copied().unwrap_or(0)
    }

    pub fn write_u8(&mut self, addr: u32, value: u8) {
        if value == 0 {
            self.bytes.remove(&addr);
        } else {
            self.bytes.insert(addr, value);
        }
    }

    pub fn read_u32(&self, addr: u32) -> u32 {
        let mut v = 0u32;
        for i in 0..4 {
            v |= (self.read_u8(addr.wrapping_add(i)) as u32) << (8 * i);
        }
        v
    }

    pub fn write_u32(&mut self, addr: u32, value: u32) {
        for i in 0..4 {
            self.write_u8(addr.wrapping_add(i), (value >> (8 * i)) as u8);
        }
    }

    pub fn read_bytes(&self, addr: u32, count: u32) -> Vec<u8> {
        (0..count).map(|i| self.read_u8(addr.wrapping_add(i))).collect()
    }

    pub fn write_bytes(&mut self, addr: u32, bytes: &[u8]) {
        for (i, b) in bytes.iter().enumerate() {
            self.write_u8(addr.wrapping_add(i as u32), *b);
        }
    }

    /// Number of materialised (nonzero) bytes.
    pub fn population(&self) -> usize {
        self.bytes.len()
    }
}

/// The full per-thread architectural state plus execution position.
#[derive(Debug, Clone)]
pub struct ThreadState {
    pub ctx: ContextId,
    pub regs: [u32; 16],
    pub fregs: [u32; 32],
    pub mem: DataMemory,
    /// Next instruction to execute.
    pub pc: u32,
    /// Start address of the block currently executing; updated at every
    /// control transfer.
    pub block_start: u32,
    /// False until the scheduler gives the thread its first quantum.
    pub started: bool,
    pub finished: bool,
    /// Instructions executed so far.
    pub steps: u64,
}

impl ThreadState {
    /// Fresh state positioned at the program entry. The link register starts
    /// at the return sentinel so a top-level `ret` ends the thread; seeded
    /// registers from the program header are applied last.
    pub fn new(program: &ToyProgram, ctx: ContextId) -> Self {
        let mut regs = [0u32; 16];
        regs[LR as usize] = RETURN_SENTINEL;
        for (&r, &v) in &program.init_regs {
            regs[r as usize] = v;
        }
        ThreadState {
            ctx,
            regs,
            fregs: [0; 32],
            mem: DataMemory::new(),
            pc: program.entry(),
            block_start: program.entry(),
            started: false,
            finished: false,
            steps: 0,
        }
    }
}
