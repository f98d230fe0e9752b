use super::OptLevel;
use crate::frame_model::{Heuristic, ProtectionVariant};

fn ssp_param(variant: &ProtectionVariant) -> String {
    format!("--param=ssp-buffer-size={}", variant.ssp_buffer_size)
}

/// Compiler flags selecting `variant` at `opt_level`, in the order canary,
/// shadow stack, layout, frame pointer, optimisation.
///
/// Layout-only variants emit no `-fno-stack-protector`: the layout options
/// replace the stack-protector option rather than accompany it.
pub fn translate_flags(variant: &ProtectionVariant, opt_level: OptLevel) -> Vec<String> {
    let mut flags: Vec<String> = Vec::new();
    match variant.canary {
        Heuristic::None if variant.layout_only == Heuristic::None => {
            flags.push("-fno-stack-protector".into())
        }
        Heuristic::None => {}
        Heuristic::Protector => {
            flags.push("-fstack-protector".into());
            flags.push(ssp_param(variant));
        }
        Heuristic::Strong => flags.push("-fstack-protector-strong".into()),
        Heuristic::All => flags.push("-fstack-protector-all".into()),
    }
    if variant.shadow_stack {
        flags.push("-fcf-protection=return".into());
    }
    match variant.layout_only {
        Heuristic::None => {}
        Heuristic::Protector => {
            flags.push("-fstack-layout".into());
            flags.push(ssp_param(variant));
        }
        Heuristic::Strong => flags.push("-fstack-layout-strong".into()),
        Heuristic::All => flags.push("-fstack-layout-all".into()),
    }
    if variant.omit_frame_pointer {
        flags.push("-fomit-frame-pointer".into());
    }
    flags.push(opt_level.flag().into());
    flags
}

/// Row label in the style of the detection tables, e.g.
/// `-fstack-protector --param=ssp-buffer-size=4 -fcf-protection=return`.
pub fn variant_label(variant: &ProtectionVariant) -> String {
    let mut flags = translate_flags(variant, OptLevel::O0);
    flags.pop();
    flags.join(" ")
}
