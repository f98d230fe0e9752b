//! Byte-accurate model of an x86-64 stack frame under a protection variant.
//!
//! Addresses are measured relative to the canonical frame address (CFA), the
//! value of the stack pointer in the caller just before the `call`. The return
//! address therefore occupies `[CFA-8, CFA)`. Every offset stored in a
//! [`FrameLayout`] is the distance from the CFA down to the lowest byte of the
//! object, so an object at offset `o` with size `s` spans `[CFA-o, CFA-o+s)`.
//! The CFA is 16-byte aligned by the System V ABI, which makes "alignment
//! divides the offset" equivalent to "the object is aligned".

mod heuristics;
mod layout;
mod simulate;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use heuristics::{instrument_function, order_variables};
pub use layout::build_layout;
pub use simulate::{predict_case, predict_function, simulate_overflow};

/// Width of the canary, the saved frame pointer and the return address.
pub const WORD: u64 = 8;

/// Default `ssp-buffer-size`.
pub const DEFAULT_SSP_BUFFER_SIZE: u64 = 8;

/// Which functions receive stack-protector treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Heuristic {
    None,
    /// Functions with character arrays of at least `ssp-buffer-size` bytes.
    Protector,
    /// Functions with any local array, any address-taken local, or
    /// address-taken arguments.
    Strong,
    All,
}

impl Heuristic {
    pub const ALL: [Heuristic; 4] = [
        Heuristic::None,
        Heuristic::Protector,
        Heuristic::Strong,
        Heuristic::All,
    ];

    fn row_rank(self) -> u8 {
        // Row order of the detection tables: none, protector, all, strong.
        match self {
            Heuristic::None => 0,
            Heuristic::Protector => 1,
            Heuristic::All => 2,
            Heuristic::Strong => 3,
        }
    }
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Heuristic::None => "none",
            Heuristic::Protector => "protector",
            Heuristic::Strong => "strong",
            Heuristic::All => "all",
        })
    }
}

/// A hardening configuration.
///
/// `layout_only` applies the stack-protector variable ordering without the
/// canary slot or check. It is mutually exclusive with `canary`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProtectionVariant {
    pub canary: Heuristic,
    #[serde(default = "default_ssp")]
    pub ssp_buffer_size: u64,
    #[serde(default)]
    pub shadow_stack: bool,
    #[serde(default = "no_heuristic")]
    pub layout_only: Heuristic,
    #[serde(default)]
    pub omit_frame_pointer: bool,
}

fn default_ssp() -> u64 {
    DEFAULT_SSP_BUFFER_SIZE
}

fn no_heuristic() -> Heuristic {
    Heuristic::None
}

impl Default for ProtectionVariant {
    fn default() -> Self {
        ProtectionVariant::canary(Heuristic::None)
    }
}

impl ProtectionVariant {
    pub fn canary(heuristic: Heuristic) -> Self {
        ProtectionVariant {
            canary: heuristic,
            ssp_buffer_size: DEFAULT_SSP_BUFFER_SIZE,
            shadow_stack: false,
            layout_only: Heuristic::None,
            omit_frame_pointer: false,
        }
    }

    /// Stack-protector ordering without canaries, on top of a shadow stack.
    pub fn layout(heuristic: Heuristic) -> Self {
        ProtectionVariant {
            layout_only: heuristic,
            shadow_stack: true,
            ..ProtectionVariant::canary(Heuristic::None)
        }
    }

    pub fn with_ssp_buffer_size(mut self, bytes: u64) -> Self {
        self.ssp_buffer_size = bytes;
        self
    }

    pub fn with_shadow_stack(mut self, enabled: bool) -> Self {
        self.shadow_stack = enabled;
        self
    }

    pub fn with_omit_frame_pointer(mut self, omit: bool) -> Self {
        self.omit_frame_pointer = omit;
        self
    }

    /// The heuristic that drives instrumentation and variable ordering,
    /// whether it comes from a canary option or a layout-only option.
    pub fn heuristic(&self) -> Heuristic {
        if self.canary != Heuristic::None {
            self.canary
        } else {
            self.layout_only
        }
    }

    pub fn inserts_canary(&self) -> bool {
        self.canary != Heuristic::None
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.layout_only != Heuristic::None && self.canary != Heuristic::None {
            return Err(crate::Error::InvalidConfig(format!(
                "layout-only {} cannot be combined with canary {}",
                self.layout_only, self.canary
            )));
        }
        if self.ssp_buffer_size == 0 {
            return Err(crate::Error::InvalidConfig(
                "ssp-buffer-size must be positive".into(),
            ));
        }
        Ok(())
    }

    /// The fourteen variant rows of the published detection tables: five
    /// canary options alone, the same five on top of a shadow stack, and the
    /// four layout-only options on top of a shadow stack.
    pub fn table_rows() -> Vec<ProtectionVariant> {
        let canaries = [
            ProtectionVariant::canary(Heuristic::None),
            ProtectionVariant::canary(Heuristic::Protector).with_ssp_buffer_size(4),
            ProtectionVariant::canary(Heuristic::Protector).with_ssp_buffer_size(8),
            ProtectionVariant::canary(Heuristic::All),
            ProtectionVariant::canary(Heuristic::Strong),
        ];
        let layouts = [
            ProtectionVariant::layout(Heuristic::Protector).with_ssp_buffer_size(4),
            ProtectionVariant::layout(Heuristic::Protector).with_ssp_buffer_size(8),
            ProtectionVariant::layout(Heuristic::All),
            ProtectionVariant::layout(Heuristic::Strong),
        ];
        canaries
            .iter()
            .copied()
            .chain(canaries.iter().map(|v| v.with_shadow_stack(true)))
            .chain(layouts)
            .collect()
    }

    fn sort_key(&self) -> (bool, u8, u8, u64, bool) {
        (
            self.shadow_stack,
            self.layout_only.row_rank(),
            self.canary.row_rank(),
            self.ssp_buffer_size,
            self.omit_frame_pointer,
        )
    }
}

// Ordered the way the detection tables list their rows.
impl Ord for ProtectionVariant {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl PartialOrd for ProtectionVariant {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Short names such as `all`, `protector4+shstk` or `layout-strong+shstk`.
impl fmt::Display for ProtectionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (prefix, heuristic) = if self.layout_only != Heuristic::None {
            ("layout", self.layout_only)
        } else {
            ("", self.canary)
        };
        let base = match (prefix, heuristic) {
            ("", h) if h != Heuristic::Protector => h.to_string(),
            (p, Heuristic::Protector) => {
                let p = if p.is_empty() { "protector" } else { p };
                if self.ssp_buffer_size == DEFAULT_SSP_BUFFER_SIZE {
                    p.to_string()
                } else {
                    format!("{p}{}", self.ssp_buffer_size)
                }
            }
            (p, h) => format!("{p}-{h}"),
        };
        f.write_str(&base)?;
        if heuristic != Heuristic::Protector && self.ssp_buffer_size != DEFAULT_SSP_BUFFER_SIZE {
            write!(f, "+ssp{}", self.ssp_buffer_size)?;
        }
        if self.shadow_stack {
            f.write_str("+shstk")?;
        }
        if self.omit_frame_pointer {
            f.write_str("+omit-fp")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for ProtectionVariant {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        let invalid = || crate::Error::InvalidConfig(format!("unknown protection variant {s:?}"));
        let mut parts = s.split('+');
        let base = parts.next().unwrap_or("");
        let digits = |rest: &str| -> crate::Result<u64> {
            if rest.is_empty() {
                Ok(DEFAULT_SSP_BUFFER_SIZE)
            } else {
                rest.parse().map_err(|_| invalid())
            }
        };
        let mut variant = match base {
            "none" => ProtectionVariant::canary(Heuristic::None),
            "strong" => ProtectionVariant::canary(Heuristic::Strong),
            "all" => ProtectionVariant::canary(Heuristic::All),
            "layout-strong" => ProtectionVariant::layout(Heuristic::Strong).with_shadow_stack(false),
            "layout-all" => ProtectionVariant::layout(Heuristic::All).with_shadow_stack(false),
            b if b.starts_with("protector") => ProtectionVariant::canary(Heuristic::Protector)
                .with_ssp_buffer_size(digits(&b["protector".len()..])?),
            b if b.starts_with("layout") => ProtectionVariant::layout(Heuristic::Protector)
                .with_shadow_stack(false)
                .with_ssp_buffer_size(digits(&b["layout".len()..])?),
            _ => return Err(invalid()),
        };
        for part in parts {
            match part {
                "shstk" => variant.shadow_stack = true,
                "omit-fp" => variant.omit_frame_pointer = true,
                p if p.starts_with("ssp") => variant.ssp_buffer_size = digits(&p[3..])?,
                _ => return Err(invalid()),
            }
        }
        variant.validate()?;
        Ok(variant)
    }
}

/// What a local variable is, independent of any `ssp-buffer-size`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum SlotKind {
    /// An array; the slot size is the array size.
    Array { char_elements: bool },
    /// A struct or union containing an array. Categorised by its largest
    /// contained array.
    Aggregate { array_bytes: u64, char_elements: bool },
    /// A scalar whose address escapes.
    AddrTaken,
    Plain,
}

/// Placement category, nearest to the canary first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementCategory {
    LargeArray,
    SmallArray,
    AddrTaken,
    Plain,
}

impl PlacementCategory {
    pub fn rank(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VariableSlot {
    pub name: String,
    pub size: u64,
    pub kind: SlotKind,
    pub alignment: u64,
}

impl VariableSlot {
    pub fn new(name: impl Into<String>, size: u64, kind: SlotKind, alignment: u64) -> Self {
        VariableSlot {
            name: name.into(),
            size,
            kind,
            alignment,
        }
    }

    /// `char name[size]` with byte alignment.
    pub fn char_array(name: impl Into<String>, size: u64) -> Self {
        Self::new(name, size, SlotKind::Array { char_elements: true }, 1)
    }

    /// `char name[size]` aligned the way x86-64 compilers place local arrays:
    /// arrays of 16 bytes or more get 16-byte alignment.
    pub fn abi_char_array(name: impl Into<String>, size: u64) -> Self {
        let alignment = if size >= 16 { 16 } else { 1 };
        Self::new(name, size, SlotKind::Array { char_elements: true }, alignment)
    }

    pub fn addr_taken(name: impl Into<String>, size: u64) -> Self {
        Self::new(name, size, SlotKind::AddrTaken, natural_scalar_alignment(size))
    }

    pub fn plain(name: impl Into<String>, size: u64) -> Self {
        Self::new(name, size, SlotKind::Plain, natural_scalar_alignment(size))
    }

    pub fn category(&self, ssp_buffer_size: u64) -> PlacementCategory {
        let array_bytes = match self.kind {
            SlotKind::Array { .. } => self.size,
            SlotKind::Aggregate { array_bytes, .. } => array_bytes,
            SlotKind::AddrTaken => return PlacementCategory::AddrTaken,
            SlotKind::Plain => return PlacementCategory::Plain,
        };
        if array_bytes >= ssp_buffer_size {
            PlacementCategory::LargeArray
        } else {
            PlacementCategory::SmallArray
        }
    }

    pub fn is_array(&self) -> bool {
        matches!(self.kind, SlotKind::Array { .. } | SlotKind::Aggregate { .. })
    }

    /// Size of the character array this slot holds, if any.
    pub fn char_array_bytes(&self) -> Option<u64> {
        match self.kind {
            SlotKind::Array {
                char_elements: true,
            } => Some(self.size),
            SlotKind::Aggregate {
                array_bytes,
                char_elements: true,
            } => Some(array_bytes),
            _ => None,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.size == 0 {
            return Err(crate::Error::Model(format!("slot {} has zero size", self.name)));
        }
        if !self.alignment.is_power_of_two() {
            return Err(crate::Error::Model(format!(
                "slot {} alignment {} is not a power of two",
                self.name, self.alignment
            )));
        }
        if let SlotKind::Aggregate { array_bytes, .. } = self.kind {
            if array_bytes > self.size {
                return Err(crate::Error::Model(format!(
                    "slot {} contains a {array_bytes}-byte array but is only {} bytes",
                    self.name, self.size
                )));
            }
        }
        Ok(())
    }
}

fn natural_scalar_alignment(size: u64) -> u64 {
    match size {
        0 | 1 => 1,
        s if s.is_power_of_two() => s.min(16),
        s => (s.next_power_of_two() / 2).clamp(1, 16),
    }
}

/// A slot together with its placement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacedSlot {
    pub slot: VariableSlot,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameLayout {
    /// Slots nearest to the frame record first.
    pub slots: Vec<PlacedSlot>,
    pub canary_slot: Option<u64>,
    pub saved_fp: Option<u64>,
    pub return_addr: u64,
    pub frame_size: u64,
    /// Whether returns from this frame are checked against a shadow stack.
    pub shadow_stack: bool,
}

/// Half-open byte interval relative to the CFA.
pub(crate) type Span = std::ops::Range<i64>;

pub(crate) fn span(offset: u64, size: u64) -> Span {
    let lo = -(offset as i64);
    lo..lo + size as i64
}

impl FrameLayout {
    pub fn slot(&self, name: &str) -> Option<&PlacedSlot> {
        self.slots.iter().find(|p| p.slot.name == name)
    }

    pub fn slot_span(&self, name: &str) -> Option<Span> {
        self.slot(name).map(|p| span(p.offset, p.slot.size))
    }

    pub fn canary_span(&self) -> Option<Span> {
        self.canary_slot.map(|o| span(o, WORD))
    }

    pub fn saved_fp_span(&self) -> Option<Span> {
        self.saved_fp.map(|o| span(o, WORD))
    }

    pub fn return_addr_span(&self) -> Span {
        span(self.return_addr, WORD)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// Towards higher addresses, past the end of the buffer.
    Up,
    /// Towards lower addresses, below the buffer base.
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Payload {
    AttackerBytes,
    /// Writes the original canary bytes back over the canary.
    CanaryPreserving,
}

/// A contiguous out-of-bounds write. `start` is the byte of `source` the
/// write begins at; `length` bytes are written moving in `direction`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverflowEvent {
    pub source: String,
    pub start: u64,
    pub length: u64,
    pub direction: Direction,
    pub payload: Payload,
}

impl OverflowEvent {
    pub fn up(source: impl Into<String>, length: u64) -> Self {
        OverflowEvent {
            source: source.into(),
            start: 0,
            length,
            direction: Direction::Up,
            payload: Payload::AttackerBytes,
        }
    }

    pub fn down(source: impl Into<String>, start: u64, length: u64) -> Self {
        OverflowEvent {
            source: source.into(),
            start,
            length,
            direction: Direction::Down,
            payload: Payload::AttackerBytes,
        }
    }

    pub fn with_payload(mut self, payload: Payload) -> Self {
        self.payload = payload;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PredictedClass {
    CanaryDetected,
    ShadowStackDetected,
    UndetectedCorruption,
    NoCorruption,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectionPoint {
    CanaryCheckAtEpilogue,
    ReturnInstruction,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionPrediction {
    pub canary_clobbered: bool,
    pub saved_fp_clobbered: bool,
    pub return_addr_clobbered: bool,
    pub predicted_class: PredictedClass,
    pub detection_point: DetectionPoint,
}
