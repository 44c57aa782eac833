//! Tag memory: a word-granular shadow of application data memory, reached
//! through a small translation table.
//!
//! Tags live in 4096-byte tag pages holding 1024 32-bit tag words. The
//! translation table (TMMU) maps a virtual page number (`vaddr >> 12`) to a
//! tag page. Mappings are installed up front with [`TagMemory::register_mapping`]
//! — the analog of a loader handing the process memory map to the tag engine
//! before anything executes. Running out of the fixed entry budget is a hard
//! error so capacity pressure is visible rather than silent.
//!
//! Accessing an address whose page was never registered is a [`TagMemError::TmmuMiss`],
//! never an implicit allocation: a miss means the pipeline touched memory the
//! loader never described, which is itself a reportable event. Addresses are
//! word-indexed — the low two address bits never select storage. Range
//! operations (used when kernel I/O tags or folds a whole buffer) validate the
//! entire range first, so a failed range write mutates nothing.

use std::collections::BTreeMap;

use thiserror::Error;

/// Words per tag page; pages shadow 4096 bytes of data memory.
pub const WORDS_PER_PAGE: usize = 1024;
/// Bytes of data memory shadowed by one tag page.
pub const PAGE_BYTES: u32 = 4096;
/// Translation-table entries in the default configuration.
pub const DEFAULT_TMMU_ENTRIES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum TagMemError {
    /// The translation table is out of entries for a new tag page.
    #[error("tag translation table full ({capacity} entries)")]
    TmmuFull { capacity: usize },
    /// The address belongs to a page that was never registered.
    #[error("no tag mapping for address {vaddr:#010x}")]
    TmmuMiss { vaddr: u32 },
}

/// Translation table from virtual page number to tag-page index.
#[derive(Debug, Clone)]
pub struct Tmmu {
    entries: BTreeMap<u32, usize>,
    capacity: usize,
}

impl Tmmu {
    pub fn new(capacity: usize) -> Self {
        Tmmu { entries: BTreeMap::new(), capacity }
    }

    pub fn lookup(&self, vpn: u32) -> Option<usize> {
        self.entries.get(&vpn).copied()
    }

    /// Installs a mapping for `vpn`, failing when the table is full.
    fn install(&mut self, vpn: u32, page_index: usize) -> Result<(), TagMemError> {
        if self.entries.len() >= self.capacity {
            return Err(TagMemError::TmmuFull { capacity: self.capacity });
        }
        self.entries.insert(vpn, page_index);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Registered virtual page numbers in ascending order.
    pub fn mapped_vpns(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.keys().copied()
    }
}

type Page = Box<[u32; WORDS_PER_PAGE]>;

/// The tag shadow of one address space.
#[derive(Debug, Clone)]
pub struct TagMemory {
    tmmu: Tmmu,
    pages: Vec<Page>,
}

impl Default for TagMemory {
    fn default() -> Self {
        Self::new()
    }
}

impl TagMemory {
    pub fn new() -> Self {
        Self::with_capacity(DEFAULT_TMMU_ENTRIES)
    }

    /// A tag memory whose translation table holds `pages` entries.
    pub fn with_capacity(pages: usize) -> Self {
        TagMemory { tmmu: Tmmu::new(pages), pages: Vec::new() }
    }

    pub fn tmmu(&self) -> &Tmmu {
        &self.tmmu
    }

    fn vpn(vaddr: u32) -> u32 {
        vaddr >> 12
    }

    /// Installs a mapping for virtual page `vpn` with a fresh zeroed tag page.
    /// Registering an already-present page is an accepted no-op that keeps any
    /// tags already written there.
    pub fn register_mapping(&mut self, vpn: u32) -> Result<(), TagMemError> {
        assert!(vpn < (1 << 20), "virtual page numbers are 20 bits");
        if self.tmmu.lookup(vpn).is_some() {
            return Ok(());
        }
        let index = self.pages.len();
        self.tmmu.install(vpn, index)?;
        self.pages.push(Box::new([0; WORDS_PER_PAGE]));
        Ok(())
    }

    /// Translates a virtual address to (tag page index, word index within the
    /// page). The word index discards the low two address bits.
    pub fn translate(&self, vaddr: u32) -> Result<(usize, usize), TagMemError> {
        match self.tmmu.lookup(Self::vpn(vaddr)) {
            Some(page) => Ok((page, ((vaddr & 0xFFF) >> 2) as usize)),
            None => Err(TagMemError::TmmuMiss { vaddr }),
        }
    }

    /// Tag of the word containing `vaddr`. Unwritten words of a registered
    /// page read as zero; an unregistered page is a miss.
    pub fn read_tag(&self, vaddr: u32) -> Result<u32, TagMemError> {
        let (page, word) = self.translate(vaddr)?;
        Ok(self.pages[page][word])
    }

    /// Sets the tag of the word containing `vaddr`.
    pub fn write_tag(&mut self, vaddr: u32, tag: u32) -> Result<(), TagMemError> {
        let (page, word) = self.translate(vaddr)?;
        self.pages[page][word] = tag;
        Ok(())
    }

    /// Word-aligned addresses of every word overlapping `[vaddr, vaddr+count)`.
    /// The iterator is empty for a zero-byte range.
    fn range_words(vaddr: u32, count: u32) -> impl Iterator<Item = u64> {
        let start = (vaddr & !3) as u64;
        let end = if count == 0 { start } else { vaddr as u64 + count as u64 };
        (start..end).step_by(4)
    }

    fn validate_range(&self, vaddr: u32, count: u32) -> Result<(), TagMemError> {
        for word in Self::range_words(vaddr, count) {
            if word > u32::MAX as u64 {
                return Err(TagMemError::TmmuMiss { vaddr: u32::MAX & !3 });
            }
            self.translate(word as u32)?;
        }
        Ok(())
    }

    /// Tags every word overlapping `[vaddr, vaddr + count)` with `tag`.
    /// The whole range is validated before anything is written, so a miss
    /// anywhere in the range mutates nothing. A zero-byte range is a no-op
    /// that succeeds even at an unregistered address.
    pub fn write_range(&mut self, vaddr: u32, count: u32, tag: u32) -> Result<(), TagMemError> {
        self.validate_range(vaddr, count)?;
        for word in Self::range_words(vaddr, count) {
            self.write_tag(word as u32, tag).expect("range validated");
        }
        Ok(())
    }

    /// OR-combination of the tags of every word overlapping the range.
    /// A zero-byte range folds to zero even at an unregistered address.
    pub fn fold_range(&self, vaddr: u32, count: u32) -> Result<u32, TagMemError> {
        self.validate_range(vaddr, count)?;
        let mut folded = 0;
        for word in Self::range_words(vaddr, count) {
            folded |= self.read_tag(word as u32).expect("range validated");
        }
        Ok(folded)
    }

    /// All words holding a nonzero tag, in ascending address order. Addresses
    /// are word-aligned.
    pub fn nonzero_tags(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for (vpn, idx) in &self.tmmu.entries {
            for (word, tag) in self.pages[*idx].iter().enumerate() {
                if *tag != 0 {
                    out.push(((vpn << 12) | ((word as u32) << 2), *tag));
                }
            }
        }
        out
    }

    /// Tag pages currently allocated (equals registered mappings).
    pub fn pages_used(&self) -> usize {
        self.pages.len()
    }
}

/// A place a tag can live, used when reporting machine state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TagLocation {
    /// Integer tag register file, index 0..16.
    Trf(u8),
    /// Floating-point tag register file, index 0..32.
    TrfFp(u8),
    /// Tag memory word at this (word-aligned) address.
    Mem(u32),
}

impl std::fmt::Display for TagLocation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TagLocation::Trf(n) => write!(f, "trf.{n}"),
            TagLocation::TrfFp(n) => write!(f, "trf_fp.{n}"),
            TagLocation::Mem(addr) => write!(f, "mem.{addr:08x}"),
        }
    }
}
