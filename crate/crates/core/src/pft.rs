//! Simplified program-flow trace: wire codec and slot demultiplexer.
//!
//! The trace source emits three packet kinds. All multi-byte fields are
//! little-endian and all addresses are 4-byte aligned, which leaves the low
//! two bits of every decoded word free to carry a hardware-thread slot.
//!
//! Wire format:
//!
//! * alignment sync — `00 00 00 00 00 80` (six fixed bytes, decodes to nothing)
//! * instruction sync — `08`, 4-byte address, 4-byte context word
//! * branch address — `B0`, 4-byte address
//!
//! The context word packs an 8-bit address-space id and a 24-bit thread id as
//! `(tid << 8) | asid`. The decoder assigns each distinct context a slot
//! (0–3) in order of first appearance and stamps every emitted entry with the
//! current slot.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of hardware-thread slots the demultiplexer supports.
pub const MAX_SLOTS: usize = 4;

/// Sentinel context word marking an unused slot in the decoded-trace file.
const UNUSED_SLOT_WORD: u32 = 0xFFFF_FFFF;

const ASYNC_BYTES: [u8; 6] = [0x00, 0x00, 0x00, 0x00, 0x00, 0x80];
const ISYNC_HEADER: u8 = 0x08;
const BRANCH_HEADER: u8 = 0xB0;

/// Errors from the trace codec and the decoded-trace file codec.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PftError {
    /// A packet carries an address whose low two bits are not zero.
    #[error("unaligned address 0x{address:08x} in trace packet")]
    UnalignedAddress { address: u32 },
    /// Unknown header byte, truncated body, or otherwise non-conforming bytes.
    #[error("malformed packet at byte offset {offset}: {reason}")]
    MalformedPacket { offset: usize, reason: &'static str },
    /// A fifth distinct context appeared in one decoded stream.
    #[error("too many contexts at byte offset {offset}: slot table is full")]
    TooManyContexts { offset: usize },
    /// A branch-address packet arrived before any instruction sync.
    #[error("branch-address packet at byte offset {offset} before any instruction sync")]
    BranchBeforeSync { offset: usize },
    /// Thread id wider than 24 bits.
    #[error("thread id 0x{tid:x} does not fit in 24 bits")]
    TidTooWide { tid: u32 },
    /// The all-ones context word is reserved for unused slot-table entries.
    #[error("context word 0xffffffff is reserved")]
    ReservedContext,
}

/// Identity of a traced hardware context: address-space id plus thread id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ContextId {
    pub asid: u8,
    /// 24-bit thread id.
    pub tid: u32,
}

impl ContextId {
    /// Builds a context id, rejecting thread ids wider than 24 bits and the
    /// reserved all-ones pair.
    pub fn new(asid: u8, tid: u32) -> Result<Self, PftError> {
        if tid > 0x00FF_FFFF {
            return Err(PftError::TidTooWide { tid });
        }
        let ctx = ContextId { asid, tid };
        if ctx.word() == UNUSED_SLOT_WORD {
            return Err(PftError::ReservedContext);
        }
        Ok(ctx)
    }

    /// Packs the context as it travels on the wire: `(tid << 8) | asid`.
    pub fn word(self) -> u32 {
        (self.tid << 8) | u32::from(self.asid)
    }

    fn from_word(word: u32) -> Result<Self, PftError> {
        if word == UNUSED_SLOT_WORD {
            return Err(PftError::ReservedContext);
        }
        Ok(ContextId {
            asid: (word & 0xFF) as u8,
            tid: word >> 8,
        })
    }
}

impl std::fmt::Display for ContextId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "asid=0x{:02x},tid=0x{:x}", self.asid, self.tid)
    }
}

/// One trace packet as produced by the traced core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TracePacket {
    /// Alignment synchronization; carries no information after decode.
    ASync,
    /// Instruction sync: current basic-block address plus the owning context.
    ISync { address: u32, ctx: ContextId },
    /// Taken-transfer target address within the current context.
    BranchAddr { address: u32 },
}

/// One decoded trace word: a 4-byte-aligned block address with the slot
/// number stored in the low two bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DecodedEntry(pub u32);

impl DecodedEntry {
    pub fn new(address: u32, slot: u8) -> Self {
        debug_assert_eq!(address & 0x3, 0);
        debug_assert!((slot as usize) < MAX_SLOTS);
        DecodedEntry(address | u32::from(slot))
    }

    /// Block address with the slot bits cleared.
    pub fn address(self) -> u32 {
        self.0 & !0x3
    }

    /// Hardware-thread slot stored in the low two bits.
    pub fn slot(self) -> u8 {
        (self.0 & 0x3) as u8
    }
}

/// First-come assignment of contexts to the four decoder slots.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotTable {
    contexts: Vec<ContextId>,
}

impl SlotTable {
    pub fn new() -> Self {
        SlotTable::default()
    }

    /// Slot already assigned to `ctx`, if any.
    pub fn slot_of(&self, ctx: ContextId) -> Option<u8> {
        self.contexts.iter().position(|c| *c == ctx).map(|i| i as u8)
    }

    /// Context occupying `slot`, if populated.
    pub fn context(&self, slot: u8) -> Option<ContextId> {
        self.contexts.get(slot as usize).copied()
    }

    /// Number of populated slots.
    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u8, ContextId)> + '_ {
        self.contexts.iter().enumerate().map(|(i, c)| (i as u8, *c))
    }

    fn install(&mut self, ctx: ContextId) -> Option<u8> {
        if let Some(slot) = self.slot_of(ctx) {
            return Some(slot);
        }
        if self.contexts.len() == MAX_SLOTS {
            return None;
        }
        self.contexts.push(ctx);
        Some((self.contexts.len() - 1) as u8)
    }
}

/// Serializes packets to the wire format.
///
/// Deterministic: the same packet list always yields the same bytes. Fails
/// with [`PftError::UnalignedAddress`] if any address has nonzero low bits.
pub fn encode_packets(packets: &[TracePacket]) -> Result<Vec<u8>, PftError> {
    let mut out = Vec::with_capacity(packets.len() * 9);
    for p in packets {
        match *p {
            TracePacket::ASync => out.extend_from_slice(&ASYNC_BYTES),
            TracePacket::ISync { address, ctx } => {
                check_aligned(address)?;
                out.push(ISYNC_HEADER);
                out.extend_from_slice(&address.to_le_bytes());
                out.extend_from_slice(&ctx.word().to_le_bytes());
            }
            TracePacket::BranchAddr { address } => {
                check_aligned(address)?;
                out.push(BRANCH_HEADER);
                out.extend_from_slice(&address.to_le_bytes());
            }
        }
    }
    Ok(out)
}

fn check_aligned(address: u32) -> Result<(), PftError> {
    if address & 0x3 != 0 {
        return Err(PftError::UnalignedAddress { address });
    }
    Ok(())
}

/// Decodes a byte stream into entries and the slot table built during decode.
///
/// Alignment-sync packets are consumed silently. Every instruction-sync and
/// branch-address packet emits exactly one entry stamped with the slot of the
/// owning context; an instruction sync switches the current slot first (and
/// installs the context on first appearance).
pub fn decode_stream(bytes: &[u8]) -> Result<(Vec<DecodedEntry>, SlotTable), PftError> {
    let mut entries = Vec::new();
    let mut table = SlotTable::new();
    let mut current_slot: Option<u8> = None;
    let mut i = 0usize;
    while i < bytes.len() {
        match bytes[i] {
            0x00 => {
                let body = take(bytes, i, ASYNC_BYTES.len())?;
                if body != ASYNC_BYTES {
                    return Err(PftError::MalformedPacket {
                        offset: i,
                        reason: "bad alignment-sync body",
                    });
                }
                i += ASYNC_BYTES.len();
            }
            ISYNC_HEADER => {
                let body = take(bytes, i, 9)?;
                let address = le32(&body[1..5]);
                let ctx_word = le32(&body[5..9]);
                if address & 0x3 != 0 {
                    return Err(PftError::MalformedPacket {
                        offset: i,
                        reason: "unaligned instruction-sync address",
                    });
                }
                let ctx = ContextId::from_word(ctx_word).map_err(|_| {
                    PftError::MalformedPacket {
                        offset: i,
                        reason: "reserved context word",
                    }
                })?;
                let slot = table
                    .install(ctx)
                    .ok_or(PftError::TooManyContexts { offset: i })?;
                current_slot = Some(slot);
                entries.push(DecodedEntry::new(address, slot));
                i += 9;
            }
            BRANCH_HEADER => {
                let body = take(bytes, i, 5)?;
                let address = le32(&body[1..5]);
                if address & 0x3 != 0 {
                    return Err(PftError::MalformedPacket {
                        offset: i,
                        reason: "unaligned branch address",
                    });
                }
                let slot = current_slot.ok_or(PftError::BranchBeforeSync { offset: i })?;
                entries.push(DecodedEntry::new(address, slot));
                i += 5;
            }
            _ => {
                return Err(PftError::MalformedPacket {
                    offset: i,
                    reason: "unknown header byte",
                })
            }
        }
    }
    Ok((entries, table))
}

fn take(bytes: &[u8], offset: usize, len: usize) -> Result<&[u8], PftError> {
    bytes
        .get(offset..offset + len)
        .ok_or(PftError::MalformedPacket {
            offset,
            reason: "truncated packet",
        })
}

fn le32(b: &[u8]) -> u32 {
    u32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

/// Serializes a decoded trace: four slot-table context words (all-ones for
/// unused slots) followed by one 32-bit word per entry, all little-endian.
pub fn write_decoded_trace(entries: &[DecodedEntry], slots: &SlotTable) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 * MAX_SLOTS + 4 * entries.len());
    for slot in 0..MAX_SLOTS as u8 {
        let word = slots.context(slot).map_or(UNUSED_SLOT_WORD, ContextId::word);
        out.extend_from_slice(&word.to_le_bytes());
    }
    for e in entries {
        out.extend_from_slice(&e.0.to_le_bytes());
    }
    out
}

/// Reads back a decoded-trace blob produced by [`write_decoded_trace`].
///
/// Validates that the slot table is dense (no populated slot after an unused
/// one) and that every entry references a populated slot.
pub fn read_decoded_trace(bytes: &[u8]) -> Result<(Vec<DecodedEntry>, SlotTable), PftError> {
    if bytes.len() < 4 * MAX_SLOTS || bytes.len() % 4 != 0 {
        return Err(PftError::MalformedPacket {
            offset: bytes.len(),
            reason: "decoded trace truncated",
        });
    }
    let mut table = SlotTable::new();
    let mut saw_unused = false;
    for slot in 0..MAX_SLOTS {
        let offset = 4 * slot;
        let word = le32(&bytes[offset..offset + 4]);
        if word == UNUSED_SLOT_WORD {
            saw_unused = true;
            continue;
        }
        if saw_unused {
            return Err(PftError::MalformedPacket {
                offset,
                reason: "slot table not dense",
            });
        }
        let ctx = ContextId::from_word(word).map_err(|_| PftError::MalformedPacket {
            offset,
            reason: "reserved context word",
        })?;
        if table.install(ctx).is_none() || table.len() != slot + 1 {
            return Err(PftError::MalformedPacket {
                offset,
                reason: "duplicate context in slot table",
            });
        }
    }
    let mut entries = Vec::new();
    for offset in (4 * MAX_SLOTS..bytes.len()).step_by(4) {
        let entry = DecodedEntry(le32(&bytes[offset..offset + 4]));
        if usize::from(entry.slot()) >= table.len() {
            return Err(PftError::MalformedPacket {
                offset,
                reason: "entry references unused slot",
            });
        }
        entries.push(entry);
    }
    Ok((entries, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ctx(asid: u8, tid: u32) -> ContextId {
        ContextId::new(asid, tid).unwrap()
    }

    #[test]
    fn async_packet_bytes_are_fixed() {
        let bytes = encode_packets(&[TracePacket::ASync]).unwrap();
        assert_eq!(bytes, vec![0x00, 0x00, 0x00, 0x00, 0x00, 0x80]);
    }

    #[test]
    fn isync_packet_bytes() {
        let bytes = encode_packets(&[TracePacket::ISync {
            address: 0x0001_0000,
            ctx: ctx(0x42, 0x4d2),
        }])
        .unwrap();
        assert_eq!(
            bytes,
            vec![0x08, 0x00, 0x00, 0x01, 0x00, 0x42, 0xD2, 0x04, 0x00]
        );
    }

    #[test]
    fn branch_packet_bytes() {
        let bytes = encode_packets(&[TracePacket::BranchAddr { address: 0x0001_0170 }]).unwrap();
        assert_eq!(bytes, vec![0xB0, 0x70, 0x01, 0x01, 0x00]);
    }

    #[test]
    fn context_word_packing() {
        assert_eq!(ctx(0x42, 0x4d2).word(), 0x0004_D242);
        assert_eq!(ContextId::from_word(0x0004_D242).unwrap(), ctx(0x42, 0x4d2));
    }

    #[test]
    fn entry_accessors_split_address_and_slot() {
        assert_eq!(DecodedEntry(0x0001_0171).address(), 0x0001_0170);
        assert_eq!(DecodedEntry(0x0001_0171).slot(), 1);
        assert_eq!(DecodedEntry(0x0000_0003).slot(), 3);
        assert_eq!(DecodedEntry(0x0000_0003).address(), 0);
    }

    #[test]
    fn two_context_decode_assigns_slots_in_first_come_order() {
        let packets = [
            TracePacket::ISync {
                address: 0x0001_0000,
                ctx: ctx(0x42, 0x4d2),
            },
            TracePacket::ISync {
                address: 0x0002_0000,
                ctx: ctx(0x42, 0x4d3),
            },
            TracePacket::BranchAddr { address: 0x0002_0040 },
        ];
        let bytes = encode_packets(&packets).unwrap();
        let (entries, table) = decode_stream(&bytes).unwrap();
        let words: Vec<u32> = entries.iter().map(|e| e.0).collect();
        assert_eq!(words, vec![0x0001_0000, 0x0002_0001, 0x0002_0041]);
        assert_eq!(table.context(0), Some(ctx(0x42, 0x4d2)));
        assert_eq!(table.context(1), Some(ctx(0x42, 0x4d3)));
    }

    #[test]
    fn async_decodes_to_nothing() {
        let packets = [
            TracePacket::ASync,
            TracePacket::ISync {
                address: 0x10000,
                ctx: ctx(1, 1),
            },
            TracePacket::ASync,
        ];
        let bytes = encode_packets(&packets).unwrap();
        let (entries, _) = decode_stream(&bytes).unwrap();
        assert_eq!(entries.len(), 1);
    }

    #[test]
    fn resync_of_known_context_keeps_its_slot() {
        let packets = [
            TracePacket::ISync {
                address: 0x10000,
                ctx: ctx(1, 1),
            },
            TracePacket::ISync {
                address: 0x20000,
                ctx: ctx(1, 2),
            },
            TracePacket::ISync {
                address: 0x10040,
                ctx: ctx(1, 1),
            },
        ];
        let bytes = encode_packets(&packets).unwrap();
        let (entries, table) = decode_stream(&bytes).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(entries[2].slot(), 0);
        assert_eq!(entries[2].address(), 0x10040);
    }

    #[test]
    fn truncated_branch_is_malformed() {
        let err = decode_stream(&[0xB0, 0x70]).unwrap_err();
        assert!(matches!(err, PftError::MalformedPacket { offset: 0, .. }));
    }

    #[test]
    fn unknown_header_is_malformed() {
        let err = decode_stream(&[0x55]).unwrap_err();
        assert!(matches!(err, PftError::MalformedPacket { offset: 0, .. }));
    }

    #[test]
    fn branch_before_sync_is_reported_with_offset() {
        let bytes = encode_packets(&[
            TracePacket::ASync,
            TracePacket::BranchAddr { address: 0x10000 },
        ])
        .unwrap();
        let err = decode_stream(&bytes).unwrap_err();
        assert_eq!(err, PftError::BranchBeforeSync { offset: 6 });
    }

    #[test]
    fn fifth_context_overflows_slot_table() {
        let mut packets = Vec::new();
        for tid in 1..=5u32 {
            packets.push(TracePacket::ISync {
                address: 0x10000 + tid * 0x1000,
                ctx: ctx(7, tid),
            });
        }
        let bytes = encode_packets(&packets).unwrap();
        let err = decode_stream(&bytes).unwrap_err();
        assert!(matches!(err, PftError::TooManyContexts { .. }));
    }

    #[test]
    fn unaligned_address_rejected_on_encode() {
        let err = encode_packets(&[TracePacket::BranchAddr { address: 0x10001 }]).unwrap_err();
        assert_eq!(err, PftError::UnalignedAddress { address: 0x10001 });
    }

    #[test]
    fn unaligned_address_rejected_on_decode() {
        // Hand-craft a branch packet with a misaligned address.
        let bytes = [0xB0, 0x01, 0x00, 0x01, 0x00];
        let err = decode_stream(&bytes).unwrap_err();
        assert!(matches!(err, PftError::MalformedPacket { .. }));
    }

    #[test]
    fn decoded_trace_file_layout_and_round_trip() {
        let packets = [
            TracePacket::ISync {
                address: 0x10000,
                ctx: ctx(0x42, 0x4d2),
            },
            TracePacket::BranchAddr { address: 0x10040 },
        ];
        let bytes = encode_packets(&packets).unwrap();
        let (entries, table) = decode_stream(&bytes).unwrap();
        let blob = write_decoded_trace(&entries, &table);
        // Slot 0 context word, three unused sentinels, then the two entries.
        assert_eq!(&blob[..4], &0x0004_D242u32.to_le_bytes());
        assert_eq!(&blob[4..8], &[0xFF; 4]);
        assert_eq!(blob.len(), 16 + 8);
        let (entries2, table2) = read_decoded_trace(&blob).unwrap();
        assert_eq!(entries2, entries);
        assert_eq!(table2, table);
    }

    #[test]
    fn decoded_trace_rejects_entry_for_unused_slot() {
        let mut blob = Vec::new();
        blob.extend_from_slice(&0x0000_0101u32.to_le_bytes());
        blob.extend_from_slice(&[0xFF; 12]);
        blob.extend_from_slice(&0x0001_0002u32.to_le_bytes()); // slot 2 unused
        let err = read_decoded_trace(&blob).unwrap_err();
        assert!(matches!(err, PftError::MalformedPacket { .. }));
    }

    #[test]
    fn reserved_context_rejected() {
        assert_eq!(
            ContextId::new(0xFF, 0xFF_FFFF).unwrap_err(),
            PftError::ReservedContext
        );
        assert!(ContextId::new(0, 0x100_0000).is_err());
    }

    /// Strategy: sequences that start with an instruction sync and stay
    /// within four contexts, as any conforming trace source would.
    fn packet_seq() -> impl Strategy<Value = Vec<TracePacket>> {
        let contexts: Vec<ContextId> = (0..4u32).map(|t| ctx(0x42, 0x4d2 + t)).collect();
        let addr = (1u32..0x3FFF).prop_map(|a| a << 2);
        let first = (addr.clone(), 0usize..4).prop_map({
            let contexts = contexts.clone();
            move |(address, c)| TracePacket::ISync {
                address,
                ctx: contexts[c],
            }
        });
        let rest = prop::collection::vec(
            prop_oneof![
                Just(TracePacket::ASync),
                (1u32..0x3FFF, 0usize..4).prop_map({
                    let contexts = contexts.clone();
                    move |(a, c)| TracePacket::ISync {
                        address: a << 2,
                        ctx: contexts[c],
                    }
                }),
                (1u32..0x3FFF).prop_map(|a| TracePacket::BranchAddr { address: a << 2 }),
            ],
            0..24,
        );
        (first, rest).prop_map(|(f, mut r)| {
            r.insert(0, f);
            r
        })
    }

    proptest! {
        #[test]
        fn round_trip_preserves_entry_count_and_slots(packets in packet_seq()) {
            let bytes = encode_packets(&packets).unwrap();
            let (entries, table) = decode_stream(&bytes).unwrap();
            let expected_entries = packets
                .iter()
                .filter(|p| !matches!(p, TracePacket::ASync))
                .count();
            prop_assert_eq!(entries.len(), expected_entries);
            // Slot density: slot k only appears after slots 0..k.
            let mut max_seen: i32 = -1;
            for e in &entries {
                let s = i32::from(e.slot());
                prop_assert!(s <= max_seen + 1);
                max_seen = max_seen.max(s);
            }
            prop_assert_eq!(usize::from((max_seen + 1) as u8), table.len());
        }

        #[test]
        fn decoded_trace_file_round_trips(packets in packet_seq()) {
            let bytes = encode_packets(&packets).unwrap();
            let (entries, table) = decode_stream(&bytes).unwrap();
            let blob = write_decoded_trace(&entries, &table);
            let (entries2, table2) = read_decoded_trace(&blob).unwrap();
            prop_assert_eq!(entries, entries2);
            prop_assert_eq!(table, table2);
        }

        /// Per-context filtering: decoding only the packets that belong to one
        /// context yields exactly that context's entry addresses.
        #[test]
        fn per_context_subsequence_matches_substream(packets in packet_seq()) {
            let bytes = encode_packets(&packets).unwrap();
            let (entries, table) = decode_stream(&bytes).unwrap();
            for (slot, c) in table.iter() {
                let mut sub = Vec::new();
                let mut current: Option<ContextId> = None;
                for p in &packets {
                    match *p {
                        TracePacket::ISync { ctx, .. } => {
                            current = Some(ctx);
                            if ctx == c {
                                sub.push(*p);
                            }
                        }
                        TracePacket::BranchAddr { .. } if current == Some(c) => sub.push(*p),
                        _ => {}
                    }
                }
                let sub_bytes = encode_packets(&sub).unwrap();
                let (sub_entries, _) = decode_stream(&sub_bytes).unwrap();
                let filtered: Vec<u32> = entries
                    .iter()
                    .filter(|e| e.slot() == slot)
                    .map(|e| e.address())
                    .collect();
                let sub_addrs: Vec<u32> = sub_entries.iter().map(|e| e.address()).collect();
                prop_assert_eq!(filtered, sub_addrs);
            }
        }
    }
}
