//! Parameterised stand-ins for Juliet overflow patterns.
//!
//! Each generated program has a single vulnerable function holding the
//! overflowed buffer and its neighbours. All loop state lives in volatile
//! globals so the out-of-bounds write cannot clobber its own index, and no
//! libc routine runs on the vulnerable path except in the string-copy
//! template. A program that survives exits 0.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CaseVariant, Origin, TestCase};
use crate::frame_model::{
    predict_function, DetectionPrediction, FrameLayout, OverflowEvent, Payload, ProtectionVariant,
    SlotKind, VariableSlot,
};
use crate::{Error, Result};

pub const TEMPLATE_VERSION: u32 = 1;

/// Byte written by every attacker-controlled store. Never zero.
const FILL_BYTE: u8 = b'A';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverflowDirection {
    Overflow,
    Underwrite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WriteKind {
    LoopStore,
    StringCopyWithTerminator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeighborKind {
    CharArray,
    IntArray,
    AddrTaken,
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NeighborSlot {
    pub kind: NeighborKind,
    pub size: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub buffer_size: u64,
    /// Bytes written. For overflows the write starts at the buffer base, so
    /// only bytes past `buffer_size` are out of bounds. For underwrites this
    /// many bytes land below the base (after one in-bounds store to
    /// `buf[0]`). String copies count the terminator.
    pub overflow_length: u64,
    pub direction: OverflowDirection,
    #[serde(default)]
    pub neighbor_slots: Vec<NeighborSlot>,
    pub write_kind: WriteKind,
    #[serde(default = "one")]
    pub call_depth: u32,
}

fn one() -> u32 {
    1
}

/// Sidecar written next to every generated source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticManifest {
    pub id: String,
    pub cwe: u32,
    pub template_version: u32,
    pub spec: SyntheticSpec,
}

impl SyntheticSpec {
    /// A loop-store overflow of a lone buffer.
    pub fn overflow(buffer_size: u64, overflow_length: u64) -> Self {
        SyntheticSpec {
            buffer_size,
            overflow_length,
            direction: OverflowDirection::Overflow,
            neighbor_slots: Vec::new(),
            write_kind: WriteKind::LoopStore,
            call_depth: 1,
        }
    }

    pub fn underwrite(buffer_size: u64, below: u64) -> Self {
        SyntheticSpec {
            direction: OverflowDirection::Underwrite,
            ..Self::overflow(buffer_size, below)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.buffer_size == 0 {
            return bad("buffer_size must be at least 1".into());
        }
        if !(1..=16).contains(&self.call_depth) {
            return bad(format!("call_depth {} outside 1..=16", self.call_depth));
        }
        if self.write_kind == WriteKind::StringCopyWithTerminator
            && self.direction == OverflowDirection::Underwrite
        {
            return bad("string copies only write upwards".into());
        }
        for n in &self.neighbor_slots {
            match n.kind {
                NeighborKind::CharArray if n.size == 0 => return bad("empty char array neighbour".into()),
                NeighborKind::IntArray if n.size == 0 || n.size % 4 != 0 => {
                    return bad(format!("int array neighbour of {} bytes", n.size))
                }
                NeighborKind::AddrTaken | NeighborKind::Plain if ![1, 2, 4, 8].contains(&n.size) => {
                    return bad(format!("scalar neighbour of {} bytes", n.size))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn cwe(&self) -> u32 {
        match self.direction {
            OverflowDirection::Overflow => 121,
            OverflowDirection::Underwrite => 124,
        }
    }

    /// Stable identifier derived from the generating parameters and the template version.
    pub fn case_id(&self) -> String {
        let canonical = serde_json::to_vec(&(TEMPLATE_VERSION, self)).expect("spec serialises");
        let digest = Sha256::digest(&canonical);
        let dir = match self.direction {
            OverflowDirection::Overflow => "o",
            OverflowDirection::Underwrite => "u",
        };
        let kind = match self.write_kind {
            WriteKind::LoopStore => "ls",
            WriteKind::StringCopyWithTerminator => "sc",
        };
        format!(
            "syn_b{}_{dir}{}_{kind}_d{}_{:02x}{:02x}{:02x}",
            self.buffer_size, self.overflow_length, self.call_depth, digest[0], digest[1], digest[2]
        )
    }

    /// Locals of the vulnerable function in declaration order, aligned the
    /// way x86-64 compilers place them.
    pub fn frame_slots(&self) -> Vec<VariableSlot> {
        let mut slots = vec![VariableSlot::abi_char_array("buf", self.buffer_size)];
        for (i, n) in self.neighbor_slots.iter().enumerate() {
            let name = format!("nb{i}");
            slots.push(match n.kind {
                NeighborKind::CharArray => VariableSlot::abi_char_array(name, n.size),
                NeighborKind::IntArray => VariableSlot::new(
                    name,
                    n.size,
                    SlotKind::Array {
                        char_elements: false,
                    },
                    if n.size >= 16 { 16 } else { 4 },
                ),
                NeighborKind::AddrTaken => VariableSlot::addr_taken(name, n.size),
                NeighborKind::Plain => VariableSlot::plain(name, n.size),
            });
        }
        slots
    }

    pub fn overflow_event(&self) -> OverflowEvent {
        match self.direction {
            OverflowDirection::Overflow => OverflowEvent::up("buf", self.overflow_length),
            OverflowDirection::Underwrite => OverflowEvent::down("buf", 0, self.overflow_length + 1),
        }
    }

    /// Frame-model prediction for this program built with `variant`.
    ///
    /// A string copy whose terminator is the only byte reaching the canary
    /// rewrites the canary's zero low byte with zero, so the canary survives.
    pub fn predict(&self, variant: &ProtectionVariant) -> Result<(FrameLayout, DetectionPrediction)> {
        let slots = self.frame_slots();
        let event = self.overflow_event();
        let (layout, prediction) = predict_function(&slots, false, variant, &event)?;
        if self.write_kind == WriteKind::StringCopyWithTerminator && prediction.canary_clobbered {
            let buf = layout.slot_span("buf").expect("buf is always present");
            let canary = layout.canary_span().expect("canary was clobbered");
            let written_end = buf.start + self.overflow_length as i64;
            if written_end == canary.start + 1 {
                let event = event.with_payload(Payload::CanaryPreserving);
                return predict_function(&slots, false, variant, &event);
            }
        }
        Ok((layout, prediction))
    }

    /// The C program for this spec.
    pub fn render(&self) -> String {
        let id = self.case_id();
        let mut c = String::new();
        let string_copy = self.write_kind == WriteKind::StringCopyWithTerminator;

        let _ = writeln!(c, "/* stacklab synthetic case {id} (template v{TEMPLATE_VERSION}) */");
        c.push_str("#undef _FORTIFY_SOURCE\n#include <stddef.h>\n");
        if string_copy {
            c.push_str("#include <string.h>\n");
        }
        c.push('\n');
        c.push_str("static volatile size_t g_index;\n");
        let _ = writeln!(c, "static volatile size_t g_length = {};", self.overflow_length);
        let _ = writeln!(c, "static volatile unsigned char g_fill = 0x{FILL_BYTE:02x};");
        c.push_str("static volatile unsigned char g_sink;\n");
        if string_copy && self.overflow_length > 0 {
            let body = (FILL_BYTE as char).to_string().repeat(self.overflow_length as usize - 1);
            let _ = writeln!(
                c,
                "static char g_payload[{}] = \"{body}\";",
                self.overflow_length
            );
        }
        c.push_str(
            "\nstatic void __attribute__((noinline)) touch(volatile void *p)\n{\n    g_sink = *(volatile unsigned char *)p;\n}\n\n",
        );

        c.push_str("static void __attribute__((noinline)) vulnerable(void)\n{\n");
        let _ = writeln!(c, "    char buf[{}];", self.buffer_size);
        let mut uses = vec!["    touch(buf);".to_string()];
        for (i, n) in self.neighbor_slots.iter().enumerate() {
            let scalar = match n.size {
                1 => "char",
                2 => "short",
                8 => "long long",
                _ => "int",
            };
            match n.kind {
                NeighborKind::CharArray => {
                    let _ = writeln!(c, "    char nb{i}[{}];", n.size);
                    uses.push(format!("    touch(nb{i});"));
                }
                NeighborKind::IntArray => {
                    let _ = writeln!(c, "    int nb{i}[{}];", n.size / 4);
                    uses.push(format!("    touch(nb{i});"));
                }
                NeighborKind::AddrTaken => {
                    let _ = writeln!(c, "    {scalar} nb{i} = 0;");
                    uses.push(format!("    touch(&nb{i});"));
                }
                NeighborKind::Plain => {
                    let _ = writeln!(c, "    volatile {scalar} nb{i} = 0;");
                    uses.push(format!("    g_sink = (unsigned char)nb{i};"));
                }
            }
        }
        c.push('\n');
        match (self.write_kind, self.direction) {
            (WriteKind::LoopStore, OverflowDirection::Overflow) => {
                c.push_str("    for (g_index = 0; g_index < g_length; g_index++)\n");
                c.push_str("        buf[g_index] = g_fill;\n");
            }
            (WriteKind::LoopStore, OverflowDirection::Underwrite) => {
                c.push_str("    for (g_index = 0; g_index <= g_length; g_index++)\n");
                c.push_str("        buf[-(ptrdiff_t)g_index] = g_fill;\n");
            }
            (WriteKind::StringCopyWithTerminator, _) => {
                if self.overflow_length > 0 {
                    c.push_str("    strcpy(buf, g_payload);\n");
                }
            }
        }
        for line in uses {
            c.push_str(&line);
            c.push('\n');
        }
        c.push_str("}\n");

        let mut callee = "vulnerable".to_string();
        for depth in 1..self.call_depth {
            let name = format!("frame{depth}");
            let _ = write!(
                c,
                "\nstatic void __attribute__((noinline)) {name}(void)\n{{\n    {callee}();\n    g_sink++;\n}}\n"
            );
            callee = name;
        }
        let _ = write!(c, "\nint main(void)\n{{\n    {callee}();\n    return 0;\n}}\n");
        c
    }
}

/// Write `<out_dir>/<id>/<id>.c` and its manifest.
pub fn generate_synthetic(spec: &SyntheticSpec, out_dir: &Path) -> Result<TestCase> {
    spec.validate()?;
    let id = spec.case_id();
    let dir = out_dir.join(&id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;

    let source = dir.join(format!("{id}.c"));
    fs::write(&source, spec.render())
        .map_err(|e| Error::io(format!("writing {}", source.display()), e))?;

    let manifest = SyntheticManifest {
        id: id.clone(),
        cwe: spec.cwe(),
        template_version: TEMPLATE_VERSION,
        spec: spec.clone(),
    };
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    fs::write(&manifest_path, json + "\n")
        .map_err(|e| Error::io(format!("writing {}", manifest_path.display()), e))?;

    Ok(TestCase {
        id,
        cwe: spec.cwe(),
        variant: CaseVariant::Bad,
        flow_variant: 0,
        sources: vec![source],
        origin: Origin::Synthetic,
        exclusion: None,
        synthetic: Some(spec.clone()),
    })
}

/// Read every case generated under `dir` back from its manifest.
pub fn load_synthetic(dir: &Path) -> Result<Vec<TestCase>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::CorpusNotFound {
        path: dir.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut cases = Vec::new();
    for entry in entries.filter_map(|e| e.ok()) {
        let manifest_path = entry.path().join("manifest.json");
        if !manifest_path.is_file() {
            continue;
        }
        let text = fs::read_to_string(&manifest_path)
            .map_err(|e| Error::io(format!("reading {}", manifest_path.display()), e))?;
        let manifest: SyntheticManifest = serde_json::from_str(&text)
            .map_err(|e| Error::json(manifest_path.display().to_string(), e))?;
        let source = entry.path().join(format!("{}.c", manifest.id));
        cases.push(TestCase {
            id: manifest.id,
            cwe: manifest.cwe,
            variant: CaseVariant::Bad,
            flow_variant: 0,
            sources: vec![source],
            origin: Origin::Synthetic,
            exclusion: None,
            synthetic: Some(manifest.spec),
        });
    }
    cases.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(cases)
}
