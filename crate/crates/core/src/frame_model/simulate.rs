use super::{
    build_layout, instrument_function, order_variables, span, DetectionPoint,
    DetectionPrediction, Direction, FrameLayout, OverflowEvent, Payload, PredictedClass,
    ProtectionVariant, Span, VariableSlot,
};
use crate::{Error, Result};

fn overlaps(a: &Span, b: &Span) -> bool {
    a.start < b.end && b.start < a.end
}

/// Walk the bytes written by `event` and report which protected intervals
/// they touch and which detector, if any, stops the program.
///
/// The canary check runs in the epilogue, before `ret`, so a clobbered canary
/// wins over a clobbered return address when both detectors are active.
pub fn simulate_overflow(layout: &FrameLayout, event: &OverflowEvent) -> Result<DetectionPrediction> {
    let source = layout
        .slot(&event.source)
        .ok_or_else(|| Error::Model(format!("unknown source slot {:?}", event.source)))?;
    if event.start >= source.slot.size {
        return Err(Error::Model(format!(
            "write start {} lies outside {} ({} bytes)",
            event.start, event.source, source.slot.size
        )));
    }

    let source_span = span(source.offset, source.slot.size);
    let first = source_span.start + event.start as i64;
    let len = event.length as i64;
    let written: Span = match event.direction {
        Direction::Up => first..first + len,
        Direction::Down => first - len + 1..first + 1,
    };

    let hits = |target: Option<Span>| len > 0 && target.is_some_and(|t| overlaps(&written, &t));
    let canary_clobbered = hits(layout.canary_span());
    let saved_fp_clobbered = hits(layout.saved_fp_span());
    let return_addr_clobbered = hits(Some(layout.return_addr_span()));
    let escaped = len > 0 && (written.start < source_span.start || written.end > source_span.end);

    let (predicted_class, detection_point) =
        if canary_clobbered && event.payload == Payload::AttackerBytes {
            (PredictedClass::CanaryDetected, DetectionPoint::CanaryCheckAtEpilogue)
        } else if return_addr_clobbered && layout.shadow_stack {
            (PredictedClass::ShadowStackDetected, DetectionPoint::ReturnInstruction)
        } else if escaped {
            (PredictedClass::UndetectedCorruption, DetectionPoint::None)
        } else {
            (PredictedClass::NoCorruption, DetectionPoint::None)
        };

    Ok(DetectionPrediction {
        canary_clobbered,
        saved_fp_clobbered,
        return_addr_clobbered,
        predicted_class,
        detection_point,
    })
}

/// Lay out a function and predict the outcome of one overflow in it.
pub fn predict_function(
    slots: &[VariableSlot],
    has_addr_taken_args: bool,
    variant: &ProtectionVariant,
    event: &OverflowEvent,
) -> Result<(FrameLayout, DetectionPrediction)> {
    variant.validate()?;
    for slot in slots {
        slot.validate()?;
    }
    let instrumented = instrument_function(slots, has_addr_taken_args, variant);
    let ordered = if instrumented {
        order_variables(slots, variant)
    } else {
        slots.to_vec()
    };
    let layout = build_layout(&ordered, variant, instrumented);
    let prediction = simulate_overflow(&layout, event)?;
    Ok((layout, prediction))
}

/// [`predict_function`] for a function without address-taken arguments.
pub fn predict_case(
    slots: &[VariableSlot],
    variant: &ProtectionVariant,
    event: &OverflowEvent,
) -> Result<DetectionPrediction> {
    predict_function(slots, false, variant, event).map(|(_, p)| p)
}
