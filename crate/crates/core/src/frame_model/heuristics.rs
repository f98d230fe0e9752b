use super::{Heuristic, ProtectionVariant, VariableSlot};

/// Whether a function receives stack-protector treatment: a canary for the
/// canary options, the reordered layout for the layout-only options.
pub fn instrument_function(
    slots: &[VariableSlot],
    has_addr_taken_args: bool,
    variant: &ProtectionVariant,
) -> bool {
    match variant.heuristic() {
        Heuristic::None => false,
        Heuristic::All => true,
        Heuristic::Strong => {
            has_addr_taken_args
                || slots
                    .iter()
                    .any(|s| s.is_array() || s.kind == super::SlotKind::AddrTaken)
        }
        Heuristic::Protector => slots
            .iter()
            .filter_map(VariableSlot::char_array_bytes)
            .any(|bytes| bytes >= variant.ssp_buffer_size),
    }
}

/// Stable sort by placement category, nearest to the canary first. Slots of
/// the same category keep their declaration order.
///
/// Only meaningful for instrumented functions; uninstrumented functions keep
/// declaration order and should not be passed through here.
pub fn order_variables(slots: &[VariableSlot], variant: &ProtectionVariant) -> Vec<VariableSlot> {
    let mut ordered = slots.to_vec();
    ordered.sort_by_key(|s| s.category(variant.ssp_buffer_size));
    ordered
}
