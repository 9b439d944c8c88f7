//! Before/after comparison tables and heatmap exports.

use crate::error::{Error, Result};
use crate::windtunnel::{normalised_pgm, Heatmap};

pub const TABLE_HEADER: &str = "car,metric,original,opt_ke,impr_ke,opt_ke_df,impr_ke_df,opt_all,impr_all";

/// Metric names in `SimResult` order.
pub const METRIC_NAMES: [&str; 4] = ["drag_force", "kinetic_energy", "collision_count", "heightmap_sum"];

/// Signed percentage change from `original` to `optimised`.
pub fn improvement_pct(original: f64, optimised: f64) -> Result<f64> {
    if original == 0.0 {
        return Err(Error::Zero("improvement of a zero original value is undefined"));
    }
    Ok((optimised - original) / original * 100.0)
}

/// One metric of one design, before and after optimising under each objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub car: String,
    pub metric: String,
    pub original: f64,
    /// Optimised values for the `ke`, `ke_df` and `ke_df_vcc` objectives.
    pub optimised: [f64; 3],
}

impl ComparisonRow {
    /// Improvements for each objective; `None` when the original is zero.
    pub fn improvements(&self) -> [Option<f64>; 3] {
        self.optimised.map(|v| improvement_pct(self.original, v).ok())
    }
}

/// Builds one row per metric from raw `[drag, ke, collisions, h_s]` arrays.
pub fn rows_from_metrics(car: &str, original: [f64; 4], optimised: [[f64; 4]; 3]) -> Vec<ComparisonRow> {
    METRIC_NAMES
        .iter()
        .enumerate()
        .map(|(k, name)| ComparisonRow {
            car: car.to_string(),
            metric: name.to_string(),
            original: original[k],
            optimised: optimised.map(|m| m[k]),
        })
        .collect()
}

/// Writes the comparison CSV with two-decimal values.
///
/// Improvements are always computed from the raw values; a zero original
/// leaves its improvement cells empty.
pub fn build_comparison_table(rows: &[ComparisonRow]) -> Result<String> {
    let mut out = format!("{TABLE_HEADER}\n");
    for row in rows {
        for (field, text) in [("car", &row.car), ("metric", &row.metric)] {
            if text.contains([',', '\n', '\r']) {
                return Err(Error::config(
                    field,
                    format!("`{text}` may not contain commas or newlines"),
                ));
            }
        }
        out.push_str(&format!("{},{},{:.2}", row.car, row.metric, row.original));
        for (value, impr) in row.optimised.iter().zip(row.improvements()) {
            match impr {
                Some(p) => out.push_str(&format!(",{value:.2},{p:.2}")),
                None => out.push_str(&format!(",{value:.2},")),
            }
        }
        out.push('\n');
    }
    Ok(out)
}

/// Reads a table written by [`build_comparison_table`]. Improvement columns
/// are ignored; they are derived data.
pub fn parse_comparison_table(text: &str) -> Result<Vec<ComparisonRow>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(TABLE_HEADER) {
        return Err(Error::parse(0, format!("expected header `{TABLE_HEADER}`")));
    }
    let mut offset = TABLE_HEADER.len() + 1;
    let mut rows = Vec::new();
    for line in lines {
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 9 {
            return Err(Error::parse(
                offset,
                format!("expected 9 columns, found {}", cols.len()),
            ));
        }
        let num = |i: usize| -> Result<f64> {
            cols[i]
                .parse()
                .map_err(|_| Error::parse(offset, format!("invalid number `{}`", cols[i])))
        };
        rows.push(ComparisonRow {
            car: cols[0].to_string(),
            metric: cols[1].to_string(),
            original: num(2)?,
            optimised: [num(3)?, num(5)?, num(7)?],
        });
        offset += line.len() + 1;
    }
    Ok(rows)
}

/// Raw and jointly normalised renderings of a before/after heatmap pair.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapExport {
    pub before_csv: String,
    pub after_csv: String,
    /// Binary PGMs sharing one min-max scale across both maps.
    pub before_pgm: Vec<u8>,
    pub after_pgm: Vec<u8>,
}

pub fn export_heatmap_delta(before: &Heatmap, after: &Heatmap) -> Result<HeatmapExport> {
    if before.width() != after.width() || before.length() != after.length() {
        return Err(Error::mismatch(
            format!("{}x{} heatmap", before.width(), before.length()),
            format!("{}x{} heatmap", after.width(), after.length()),
        ));
    }
    let all = before.counts().iter().chain(after.counts());
    let min = all.clone().copied().min().unwrap_or(0);
    let max = all.copied().max().unwrap_or(0);
    Ok(HeatmapExport {
        before_csv: before.to_csv(),
        after_csv: after.to_csv(),
        before_pgm: normalised_pgm(before, min, max),
        after_pgm: normalised_pgm(after, min, max),
    })
}
