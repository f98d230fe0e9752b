//! Brute-force reference implementations used to cross-check the frame model.
#![allow(dead_code)]

use stacklab::frame_model::{
    Direction, FrameLayout, Heuristic, OverflowEvent, Payload, PredictedClass, ProtectionVariant,
    SlotKind, VariableSlot,
};

/// Placement rank straight from the category table: large arrays 0, small
/// arrays 1, address-taken scalars 2, everything else 3.
pub fn rank(slot: &VariableSlot, ssp: u64) -> u8 {
    let array_bytes = match slot.kind {
        SlotKind::Array { .. } => slot.size,
        SlotKind::Aggregate { array_bytes, .. } => array_bytes,
        SlotKind::AddrTaken => return 2,
        SlotKind::Plain => return 3,
    };
    if array_bytes >= ssp {
        0
    } else {
        1
    }
}

/// The instrumentation triggers written out one heuristic at a time.
pub fn instrumented(slots: &[VariableSlot], addr_taken_args: bool, v: &ProtectionVariant) -> bool {
    let h = if v.canary != Heuristic::None { v.canary } else { v.layout_only };
    match h {
        Heuristic::None => false,
        Heuristic::All => true,
        Heuristic::Strong => {
            addr_taken_args
                || slots.iter().any(|s| {
                    matches!(
                        s.kind,
                        SlotKind::Array { .. } | SlotKind::Aggregate { .. } | SlotKind::AddrTaken
                    )
                })
        }
        Heuristic::Protector => slots.iter().any(|s| match s.kind {
            SlotKind::Array { char_elements: true } => s.size >= v.ssp_buffer_size,
            SlotKind::Aggregate { array_bytes, char_elements: true } => array_bytes >= v.ssp_buffer_size,
            _ => false,
        }),
    }
}

/// Every pair `(i, j)` with `i < j` in nearest-first order has
/// `rank(i) <= rank(j)`.
pub fn pairwise_rank_ok(ordered: &[VariableSlot], ssp: u64) -> bool {
    (0..ordered.len()).all(|i| {
        (i + 1..ordered.len()).all(|j| rank(&ordered[i], ssp) <= rank(&ordered[j], ssp))
    })
}

fn in_word(addr: i64, offset: Option<u64>) -> bool {
    match offset {
        Some(o) => {
            let lo = -(o as i64);
            (0..8).any(|k| lo + k == addr)
        }
        None => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ByteFlags {
    pub canary: bool,
    pub saved_fp: bool,
    pub ret: bool,
    pub escaped: bool,
}

impl ByteFlags {
    /// Fold one written byte into the flags.
    pub fn touch(&mut self, layout: &FrameLayout, src_lo: i64, src_size: i64, addr: i64) {
        self.canary |= in_word(addr, layout.canary_slot);
        self.saved_fp |= in_word(addr, layout.saved_fp);
        self.ret |= in_word(addr, Some(layout.return_addr));
        self.escaped |= addr < src_lo || addr >= src_lo + src_size;
    }

    pub fn class(&self, layout: &FrameLayout, payload: Payload) -> PredictedClass {
        if self.canary && payload == Payload::AttackerBytes {
            PredictedClass::CanaryDetected
        } else if self.ret && layout.shadow_stack {
            PredictedClass::ShadowStackDetected
        } else if self.escaped {
            PredictedClass::UndetectedCorruption
        } else {
            PredictedClass::NoCorruption
        }
    }
}

/// Source slot base address relative to the CFA, and its size.
pub fn source_bounds(layout: &FrameLayout, source: &str) -> (i64, i64) {
    let placed = layout.slots.iter().find(|p| p.slot.name == source).expect("source slot");
    (-(placed.offset as i64), placed.slot.size as i64)
}

/// Address of the `i`-th byte written by `event`.
pub fn written_addr(src_lo: i64, event: &OverflowEvent, i: u64) -> i64 {
    let first = src_lo + event.start as i64;
    match event.direction {
        Direction::Up => first + i as i64,
        Direction::Down => first - i as i64,
    }
}

/// Enumerate every written address and test membership one byte at a time.
pub fn simulate(layout: &FrameLayout, event: &OverflowEvent) -> (ByteFlags, PredictedClass) {
    let (lo, size) = source_bounds(layout, &event.source);
    let mut flags = ByteFlags::default();
    for i in 0..event.length {
        flags.touch(layout, lo, size, written_addr(lo, event, i));
    }
    (flags, flags.class(layout, event.payload))
}
