//! Normalized keypoint label files: one line per instance,
//! `class cx cy w h x1 y1 v1 x2 y2 v2 x3 y3 v3 x4 y4 v4`,
//! 6-decimal fixed point, one file per image.

use super::DatasetError;
use std::fmt::Write as _;
use std::path::Path;

pub const LABEL_KEYPOINTS: usize = 4;

/// One labeled instance. All coordinates are normalized to `[0,1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelRecord {
    pub class_id: u32,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    /// Four `(x, y, visibility)` triplets; visibility ∈ {0, 1, 2}.
    pub keypoints: [(f64, f64, u8); LABEL_KEYPOINTS],
}

impl LabelRecord {
    pub fn validate(&self) -> Result<(), String> {
        let unit = |v: f64, what: &str| -> Result<(), String> {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{what} = {v} outside [0,1]"));
            }
            Ok(())
        };
        unit(self.cx, "cx")?;
        unit(self.cy, "cy")?;
        unit(self.w, "w")?;
        unit(self.h, "h")?;
        for (i, (x, y, vis)) in self.keypoints.iter().enumerate() {
            unit(*x, &format!("x{}", i + 1))?;
            unit(*y, &format!("y{}", i + 1))?;
            if *vis > 2 {
                return Err(format!("v{} = {vis} not in {{0,1,2}}", i + 1));
            }
        }
        Ok(())
    }
}

/// Parse a label file body.
pub fn parse_labels(text: &str) -> Result<Vec<LabelRecord>, DatasetError> {
    let mut records = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parse_err = |reason: String| DatasetError::Parse {
            line: line_no,
            reason,
        };
        let toks: Vec<&str> = trimmed.split_ascii_whitespace().collect();
        let expected = 5 + 3 * LABEL_KEYPOINTS;
        if toks.len() != expected {
            return Err(parse_err(format!(
                "expected {expected} fields, got {}",
                toks.len()
            )));
        }
        let class_id: u32 = toks[0]
            .parse()
            .map_err(|_| parse_err(format!("bad class id {:?}", toks[0])))?;
        let num = |tok: &str, what: &str| -> Result<f64, DatasetError> {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(format!("bad {what}: {tok:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("non-finite {what}")));
            }
            Ok(v)
        };
        let cx = num(toks[1], "cx")?;
        let cy = num(toks[2], "cy")?;
        let w = num(toks[3], "w")?;
        let h = num(toks[4], "h")?;
        let mut keypoints = [(0.0, 0.0, 0u8); LABEL_KEYPOINTS];
        for (i, kp) in keypoints.iter_mut().enumerate() {
            let base = 5 + 3 * i;
            let x = num(toks[base], &format!("x{}", i + 1))?;
            let y = num(toks[base + 1], &format!("y{}", i + 1))?;
            let vis: u8 = toks[base + 2]
                .parse()
                .map_err(|_| parse_err(format!("bad v{}: {:?}", i + 1, toks[base + 2])))?;
            *kp = (x, y, vis);
        }
        let record = LabelRecord {
            class_id,
            cx,
            cy,
            w,
            h,
            keypoints,
        };
        record.validate().map_err(parse_err)?;
        records.push(record);
    }
    Ok(records)
}

/// Serialize records to the label file body.
pub fn format_labels(records: &[LabelRecord]) -> String {
    let mut out = String::new();
    for r in records {
        write!(
            out,
            "{} {:.6} {:.6} {:.6} {:.6}",
            r.class_id, r.cx, r.cy, r.w, r.h
        )
        .unwrap();
        for (x, y, vis) in &r.keypoints {
            write!(out, " {x:.6} {y:.6} {vis}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRecord>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| super::io_err(path, e))?;
    parse_labels(&text)
}

pub fn write_labels(records: &[LabelRecord], path: &Path) -> Result<(), DatasetError> {
    for (i, r) in records.iter().enumerate() {
        r.validate().map_err(|reason| DatasetError::InvalidInput(format!(
            "record {i}: {reason}"
        )))?;
    }
    std::fs::write(path, format_labels(records)).map_err(|e| super::io_err(path, e))
}
