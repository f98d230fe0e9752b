use super::{FrameLayout, PlacedSlot, ProtectionVariant, VariableSlot, WORD};

fn align_up(value: u64, alignment: u64) -> u64 {
    value.div_ceil(alignment) * alignment
}

/// Place the frame record, the canary and the locals, top down.
///
/// `ordered` lists slots nearest to the frame record first. `instrumented`
/// is the result of [`super::instrument_function`]; a canary slot is only
/// allocated when the function is instrumented by a canary option (never for
/// layout-only variants). Gaps introduced by alignment are padding.
pub fn build_layout(
    ordered: &[VariableSlot],
    variant: &ProtectionVariant,
    instrumented: bool,
) -> FrameLayout {
    let return_addr = WORD;
    let mut cursor = return_addr;

    let saved_fp = (!variant.omit_frame_pointer).then(|| {
        cursor += WORD;
        cursor
    });
    let canary_slot = (instrumented && variant.inserts_canary()).then(|| {
        cursor = align_up(cursor + WORD, WORD);
        cursor
    });

    let slots = ordered
        .iter()
        .map(|slot| {
            cursor = align_up(cursor + slot.size, slot.alignment.max(1));
            PlacedSlot {
                slot: slot.clone(),
                offset: cursor,
            }
        })
        .collect();

    FrameLayout {
        slots,
        canary_slot,
        saved_fp,
        return_addr,
        frame_size: align_up(cursor, 16),
        shadow_stack: variant.shadow_stack,
    }
}
