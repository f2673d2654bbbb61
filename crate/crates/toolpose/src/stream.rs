//! Line-delimited text formats: detection streams, ground-truth sidecars,
//! and pose output streams.
//!
//! Detection stream grammar (one record per line, floats 6-decimal fixed):
//!
//! ```text
//! F <frame_index>
//! D <view_id> <class> <score> <xmin> <ymin> <xmax> <ymax> <k> {<x> <y> <vis> <conf>}×k
//! ```
//!
//! Ground-truth sidecar, same framing. Each 3D point carries a qualified
//! class token so partially reconstructable poses stay unambiguous:
//! `grasper_tip_a`, `grasper_tip_b`, `grasper_wrist`, or `bean`.
//!
//! ```text
//! F <frame_index>
//! G <frame_index> <point_class> <x> <y> <z>
//! A <frame_index> <ux> <uy> <uz>
//! ```
//!
//! Pose output mirrors the sidecar grammar with an RMS back-projection
//! residual appended to each `G` record.

use crate::reconstruct::{
    Bbox, Keypoint, ToolClass, ToolDetection2D, ToolPose3D, Visibility, BEAN_KEYPOINTS,
    GRASPER_KEYPOINTS,
};
use nalgebra::{Vector2, Vector3};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("frame {frame}: {reason}")]
    BadFrame { frame: u64, reason: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn malformed(line: usize, reason: impl Into<String>) -> StreamError {
    StreamError::Malformed {
        line,
        reason: reason.into(),
    }
}

/// All detections of one frame, grouped per view.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameBundle {
    pub frame_index: u64,
    pub views: BTreeMap<u32, Vec<ToolDetection2D>>,
}

impl FrameBundle {
    pub fn new(frame_index: u64) -> Self {
        Self {
            frame_index,
            views: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, det: ToolDetection2D) {
        self.views.entry(det.view_id).or_default().push(det);
    }

    pub fn detections(&self) -> impl Iterator<Item = &ToolDetection2D> {
        self.views.values().flatten()
    }

    pub fn of_class(&self, class: ToolClass) -> Vec<ToolDetection2D> {
        self.detections()
            .filter(|d| d.class == class)
            .cloned()
            .collect()
    }
}

/// Qualified class of a 3D point record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointClass {
    GrasperTipA,
    GrasperTipB,
    GrasperWrist,
    Bean,
}

impl PointClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            PointClass::GrasperTipA => "grasper_tip_a",
            PointClass::GrasperTipB => "grasper_tip_b",
            PointClass::GrasperWrist => "grasper_wrist",
            PointClass::Bean => "bean",
        }
    }

    pub fn from_str(s: &str) -> Option<Self> {
        match s {
            "grasper_tip_a" => Some(PointClass::GrasperTipA),
            "grasper_tip_b" => Some(PointClass::GrasperTipB),
            "grasper_wrist" => Some(PointClass::GrasperWrist),
            "bean" => Some(PointClass::Bean),
            _ => None,
        }
    }

    pub fn tool_class(&self) -> ToolClass {
        match self {
            PointClass::Bean => ToolClass::Bean,
            _ => ToolClass::Grasper,
        }
    }
}

/// One `G` record: a 3D point with optional residual (pose streams only).
#[derive(Debug, Clone, PartialEq)]
pub struct PointRecord {
    pub class: PointClass,
    pub position: Vector3<f64>,
    pub residual_px: Option<f64>,
}

/// Ground truth or pose output for one frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FramePoints {
    pub frame_index: u64,
    pub points: Vec<PointRecord>,
    /// Unit arm direction from the `A` record, when present.
    pub axis: Option<Vector3<f64>>,
}

fn fmt_f(v: f64) -> String {
    format!("{v:.6}")
}

// ---------------------------------------------------------------------
// Writing

/// Serialize one frame of detections.
pub fn write_detection_frame(out: &mut String, bundle: &FrameBundle) {
    writeln!(out, "F {}", bundle.frame_index).unwrap();
    for (view_id, dets) in &bundle.views {
        for det in dets {
            write!(
                out,
                "D {} {} {} {} {} {} {} {}",
                view_id,
                det.class.as_str(),
                fmt_f(det.score),
                fmt_f(det.bbox.x_min),
                fmt_f(det.bbox.y_min),
                fmt_f(det.bbox.x_max),
                fmt_f(det.bbox.y_max),
                det.keypoints.len()
            )
            .unwrap();
            for kp in &det.keypoints {
                write!(
                    out,
                    " {} {} {} {}",
                    fmt_f(kp.pixel.x),
                    fmt_f(kp.pixel.y),
                    kp.visibility.as_u8(),
                    fmt_f(kp.confidence)
                )
                .unwrap();
            }
            out.push('\n');
        }
    }
}

/// Serialize one frame of 3D points (sidecar or pose stream).
pub fn write_points_frame(out: &mut String, frame: &FramePoints) {
    writeln!(out, "F {}", frame.frame_index).unwrap();
    for p in &frame.points {
        write!(
            out,
            "G {} {} {} {} {}",
            frame.frame_index,
            p.class.as_str(),
            fmt_f(p.position.x),
            fmt_f(p.position.y),
            fmt_f(p.position.z)
        )
        .unwrap();
        if let Some(r) = p.residual_px {
            write!(out, " {}", fmt_f(r)).unwrap();
        }
        out.push('\n');
    }
    if let Some(axis) = &frame.axis {
        writeln!(
            out,
            "A {} {} {} {}",
            frame.frame_index,
            fmt_f(axis.x),
            fmt_f(axis.y),
            fmt_f(axis.z)
        )
        .unwrap();
    }
}

/// Pose-stream frame for a reconstructed grasper plus beans. Only valid
/// points are emitted; the qualified class tokens keep roles unambiguous.
pub fn pose_to_points(
    frame_index: u64,
    pose: Option<&ToolPose3D>,
    beans: &[(Vector3<f64>, f64)],
) -> FramePoints {
    let mut points = Vec::new();
    let mut axis = None;
    if let Some(pose) = pose {
        if let Some(tip) = &pose.tip_a {
            points.push(PointRecord {
                class: PointClass::GrasperTipA,
                position: tip.position,
                residual_px: Some(tip.residual_px),
            });
        }
        if let Some(tip) = &pose.tip_b {
            points.push(PointRecord {
                class: PointClass::GrasperTipB,
                position: tip.position,
                residual_px: Some(tip.residual_px),
            });
        }
        points.push(PointRecord {
            class: PointClass::GrasperWrist,
            position: pose.wrist.position,
            residual_px: Some(pose.wrist.residual_px),
        });
        axis = pose.arm_axis.as_ref().map(|a| a.direction);
    }
    for (position, residual) in beans {
        points.push(PointRecord {
            class: PointClass::Bean,
            position: *position,
            residual_px: Some(*residual),
        });
    }
    FramePoints {
        frame_index,
        points,
        axis,
    }
}

// ---------------------------------------------------------------------
// Parsing

fn parse_num<T: std::str::FromStr>(
    tok: Option<&str>,
    line: usize,
    what: &str,
) -> Result<T, StreamError> {
    let tok = tok.ok_or_else(|| malformed(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| malformed(line, format!("bad {what}: {tok:?}")))
}

fn parse_finite(tok: Option<&str>, line: usize, what: &str) -> Result<f64, StreamError> {
    let v: f64 = parse_num(tok, line, what)?;
    if !v.is_finite() {
        return Err(malformed(line, format!("non-finite {what}")));
    }
    Ok(v)
}

fn parse_detection_line(line_no: usize, line: &str) -> Result<ToolDetection2D, StreamError> {
    let mut toks = line.split_ascii_whitespace();
    let tag = toks.next();
    debug_assert_eq!(tag, Some("D"));
    let view_id: u32 = parse_num(toks.next(), line_no, "view id")?;
    let class_tok = toks
        .next()
        .ok_or_else(|| malformed(line_no, "missing class"))?;
    let class = ToolClass::from_str(class_tok)
        .ok_or_else(|| malformed(line_no, format!("unknown class {class_tok:?}")))?;
    let score = parse_finite(toks.next(), line_no, "score")?;
    let x_min = parse_finite(toks.next(), line_no, "xmin")?;
    let y_min = parse_finite(toks.next(), line_no, "ymin")?;
    let x_max = parse_finite(toks.next(), line_no, "xmax")?;
    let y_max = parse_finite(toks.next(), line_no, "ymax")?;
    let k: usize = parse_num(toks.next(), line_no, "keypoint count")?;
    let expected = match class {
        ToolClass::Grasper => GRASPER_KEYPOINTS,
        ToolClass::Bean => BEAN_KEYPOINTS,
    };
    if k != expected {
        return Err(malformed(
            line_no,
            format!("{class_tok} expects {expected} keypoints, got {k}"),
        ));
    }
    let mut keypoints = Vec::with_capacity(k);
    for i in 0..k {
        let x = parse_finite(toks.next(), line_no, &format!("kp{i} x"))?;
        let y = parse_finite(toks.next(), line_no, &format!("kp{i} y"))?;
        let vis_raw: u8 = parse_num(toks.next(), line_no, &format!("kp{i} visibility"))?;
        let visibility = Visibility::from_u8(vis_raw)
            .ok_or_else(|| malformed(line_no, format!("kp{i} visibility {vis_raw} not in 0..=2")))?;
        let confidence = parse_finite(toks.next(), line_no, &format!("kp{i} confidence"))?;
        keypoints.push(Keypoint {
            pixel: Vector2::new(x, y),
            visibility,
            confidence,
        });
    }
    if toks.next().is_some() {
        return Err(malformed(line_no, "trailing tokens"));
    }
    ToolDetection2D::new(
        view_id,
        class,
        Bbox {
            x_min,
            y_min,
            x_max,
            y_max,
        },
        keypoints,
        score,
    )
    .map_err(|e| malformed(line_no, e.to_string()))
}

/// Streaming parser over detection-stream lines. Yields one bundle per
/// `F` header; the caller decides how to handle per-frame errors.
pub struct DetectionStreamParser<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    last_frame: Option<u64>,
}

impl<'a> DetectionStreamParser<'a> {
    pub fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate().peekable(),
            last_frame: None,
        }
    }

    /// Raw lines of the next frame block: the `F` header plus the records
    /// beneath it.
    pub fn next_block(&mut self) -> Option<Vec<(usize, &'a str)>> {
        let mut block = Vec::new();
        // Skip blank lines between frames.
        while let Some((_, l)) = self.lines.peek() {
            if l.trim().is_empty() {
                self.lines.next();
            } else {
                break;
            }
        }
        let (n, header) = self.lines.next()?;
        block.push((n, header));
        while let Some((_, l)) = self.lines.peek() {
            let t = l.trim_start();
            if t.starts_with('F') {
                break;
            }
            let (n, l) = self.lines.next().unwrap();
            if !l.trim().is_empty() {
                block.push((n, l));
            }
        }
        Some(block)
    }

    /// Parse one block returned by [`DetectionStreamParser::next_block`].
    pub fn parse_block(
        &mut self,
        block: &[(usize, &str)],
    ) -> Result<FrameBundle, StreamError> {
        let (header_no, header) = block[0];
        let line_no = header_no + 1;
        let mut toks = header.split_ascii_whitespace();
        if toks.next() != Some("F") {
            return Err(malformed(line_no, "expected F header"));
        }
        let frame_index: u64 = parse_num(toks.next(), line_no, "frame index")?;
        if toks.next().is_some() {
            return Err(malformed(line_no, "trailing tokens after frame header"));
        }
        if let Some(last) = self.last_frame {
            if frame_index <= last {
                return Err(StreamError::BadFrame {
                    frame: frame_index,
                    reason: format!("frame indices must increase (previous {last})"),
                });
            }
        }
        let mut bundle = FrameBundle::new(frame_index);
        for &(n, line) in &block[1..] {
            let line_no = n + 1;
            match line.trim_start().chars().next() {
                Some('D') => bundle.push(parse_detection_line(line_no, line)?),
                Some('#') => {}
                _ => return Err(malformed(line_no, "expected D record")),
            }
        }
        self.last_frame = Some(frame_index);
        Ok(bundle)
    }
}

impl<'a> Iterator for DetectionStreamParser<'a> {
    type Item = Result<FrameBundle, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        let block = self.next_block()?;
        Some(self.parse_block(&block))
    }
}

/// Parse a whole detection stream strictly (any malformed frame fails).
pub fn parse_detection_stream(text: &str) -> Result<Vec<FrameBundle>, StreamError> {
    DetectionStreamParser::new(text).collect()
}

/// Parse a sidecar or pose stream (G/A records with F framing).
pub fn parse_points_stream(text: &str) -> Result<Vec<FramePoints>, StreamError> {
    let mut frames: Vec<FramePoints> = Vec::new();
    let mut last_frame: Option<u64> = None;
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut toks = trimmed.split_ascii_whitespace();
        match toks.next() {
            Some("F") => {
                let frame_index: u64 = parse_num(toks.next(), line_no, "frame index")?;
                if let Some(last) = last_frame {
                    if frame_index <= last {
                        return Err(StreamError::BadFrame {
                            frame: frame_index,
                            reason: format!("frame indices must increase (previous {last})"),
                        });
                    }
                }
                last_frame = Some(frame_index);
                frames.push(FramePoints {
                    frame_index,
                    points: Vec::new(),
                    axis: None,
                });
            }
            Some("G") => {
                let frame: u64 = parse_num(toks.next(), line_no, "frame index")?;
                let current = frames
                    .last_mut()
                    .ok_or_else(|| malformed(line_no, "G record before any F header"))?;
                if frame != current.frame_index {
                    return Err(malformed(
                        line_no,
                        format!(
                            "G frame {frame} does not match current frame {}",
                            current.frame_index
                        ),
                    ));
                }
                let class_tok = toks
                    .next()
                    .ok_or_else(|| malformed(line_no, "missing point class"))?;
                let class = PointClass::from_str(class_tok).ok_or_else(|| {
                    malformed(line_no, format!("unknown point class {class_tok:?}"))
                })?;
                let x = parse_finite(toks.next(), line_no, "x")?;
                let y = parse_finite(toks.next(), line_no, "y")?;
                let z = parse_finite(toks.next(), line_no, "z")?;
                let residual_px = match toks.next() {
                    Some(tok) => Some(
                        parse_finite(Some(tok), line_no, "residual")
                            .and_then(|r| {
                                if r < 0.0 {
                                    Err(malformed(line_no, "negative residual"))
                                } else {
                                    Ok(r)
                                }
                            })?,
                    ),
                    None => None,
                };
                if toks.next().is_some() {
                    return Err(malformed(line_no, "trailing tokens"));
                }
                current.points.push(PointRecord {
                    class,
                    position: Vector3::new(x, y, z),
                    residual_px,
                });
            }
            Some("A") => {
                let frame: u64 = parse_num(toks.next(), line_no, "frame index")?;
                let current = frames
                    .last_mut()
                    .ok_or_else(|| malformed(line_no, "A record before any F header"))?;
                if frame != current.frame_index {
                    return Err(malformed(
                        line_no,
                        format!(
                            "A frame {frame} does not match current frame {}",
                            current.frame_index
                        ),
                    ));
                }
                let x = parse_finite(toks.next(), line_no, "ux")?;
                let y = parse_finite(toks.next(), line_no, "uy")?;
                let z = parse_finite(toks.next(), line_no, "uz")?;
                if toks.next().is_some() {
                    return Err(malformed(line_no, "trailing tokens"));
                }
                let axis = Vector3::new(x, y, z);
                if (axis.norm() - 1.0).abs() > 1e-3 {
                    return Err(malformed(line_no, "axis is not unit length"));
                }
                current.axis = Some(axis);
            }
            _ => return Err(malformed(line_no, "expected F, G, or A record")),
        }
    }
    Ok(frames)
}
