use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::DetectionTable;
use crate::build_matrix::variant_label;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
    Text,
}

const CSV_HEADER: [&str; 10] = [
    "variant",
    "flags",
    "compiler",
    "compiler_version",
    "opt_level",
    "detector",
    "mode",
    "count",
    "total",
    "rate",
];

fn csv(table: &DetectionTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for cell in &table.cells {
        let version = table
            .toolchains
            .get(&cell.column.compiler)
            .cloned()
            .unwrap_or_default();
        w.write_record([
            cell.variant.to_string(),
            variant_label(&cell.variant),
            cell.column.compiler.clone(),
            version,
            cell.column.opt_level.to_string(),
            cell.column.detector.to_string(),
            cell.column.mode.to_string(),
            cell.count.to_string(),
            cell.total.to_string(),
            cell.rate.to_string(),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io("flushing CSV", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

fn text(table: &DetectionTable) -> String {
    let mut out = String::new();
    if !table.toolchains.is_empty() {
        let names: Vec<String> = table
            .toolchains
            .iter()
            .map(|(family, version)| format!("{family} {version}"))
            .collect();
        let _ = writeln!(out, "Toolchains: {}", names.join(", "));
    }
    let columns = table.columns();
    let variants = table.variants();
    let labels: Vec<String> = variants.iter().map(variant_label).collect();
    let headers: Vec<String> = columns.iter().map(|c| c.to_string()).collect();

    let first = labels.iter().map(String::len).chain([7]).max().unwrap_or(7);
    let widths: Vec<usize> = headers.iter().map(|h| h.len().max(6)).collect();

    let _ = write!(out, "{:<first$}", "Variant");
    for (h, w) in headers.iter().zip(&widths) {
        let _ = write!(out, "  {h:>w$}");
    }
    out.push('\n');
    for (variant, label) in variants.iter().zip(&labels) {
        let _ = write!(out, "{label:<first$}");
        for (column, w) in columns.iter().zip(&widths) {
            let value = table
                .cell(variant, column)
                .map(|c| c.count.to_string())
                .unwrap_or_else(|| "--".into());
            let _ = write!(out, "  {value:>w$}");
        }
        out.push('\n');
    }
    out
}

/// Serialise a table. JSON output parses back to an identical table.
pub fn emit(table: &DetectionTable, format: Format) -> Result<String> {
    match format {
        Format::Csv => csv(table),
        Format::Json => {
            let mut s = serde_json::to_string_pretty(table)
                .map_err(|e| Error::json("detection table", e))?;
            s.push('\n');
            Ok(s)
        }
        Format::Text => Ok(text(table)),
    }
}

pub fn parse_json(text: &str) -> Result<DetectionTable> {
    serde_json::from_str(text).map_err(|e| Error::json("detection table", e))
}
