//! Newline-delimited JSON interchange format.
//!
//! One object per line:
//! `{"points": [[dx, dy, pen], ...], "labels": [..], "category": "..", "provenance": ".."}`
//! with `pen` 0 (down) or 1 (up). Only `points` is required.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GroupLabels, Pen, SegmentDelta, Sketch};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SketchRecord {
    pub sketch: Sketch,
    pub labels: Option<GroupLabels>,
    pub provenance: Option<String>,
}

impl SketchRecord {
    pub fn new(sketch: Sketch, labels: Option<GroupLabels>) -> Self {
        SketchRecord {
            sketch,
            labels,
            provenance: None,
        }
    }
}

#[derive(Deserialize)]
struct RawRecord {
    points: Vec<(f64, f64, f64)>,
    #[serde(default)]
    labels: Option<Vec<usize>>,
    #[serde(default)]
    category: Option<String>,
    #[serde(default)]
    provenance: Option<String>,
}

#[derive(Serialize)]
struct OutRecord<'a> {
    points: Vec<(f64, f64, u8)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<&'a [usize]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    category: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    provenance: Option<&'a str>,
}

/// Parse every record of an interchange file. Blank lines are ignored.
pub fn parse_stroke3(text: &str, max_segments: usize) -> Result<Vec<SketchRecord>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let line_no = lineno + 1;
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let mut segments = Vec::with_capacity(raw.points.len());
        for (k, &(dx, dy, p)) in raw.points.iter().enumerate() {
            let pen = match p {
                p if p == 0.0 => Pen::Down,
                p if p == 1.0 => Pen::Up,
                other => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("point {k}: pen state must be 0 or 1, got {other}"),
                    })
                }
            };
            segments.push(SegmentDelta::new(dx, dy, pen));
        }
        let index = out.len();
        let sketch = Sketch::with_limit(segments, raw.category, max_segments)
            .map_err(|e| Error::at_record(index, e))?;
        let labels = raw.labels.map(GroupLabels::new);
        if let Some(l) = &labels {
            l.check_len(sketch.len())
                .map_err(|e| Error::at_record(index, e))?;
        }
        out.push(SketchRecord {
            sketch,
            labels,
            provenance: raw.provenance,
        });
    }
    Ok(out)
}

pub fn read_stroke3(path: &Path, max_segments: usize) -> Result<Vec<SketchRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_stroke3(&text, max_segments)
}

/// Serialize records, one line each, every line newline-terminated.
pub fn write_stroke3(records: &[SketchRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let rec = OutRecord {
            points: r
                .sketch
                .segments()
                .iter()
                .map(|s| (s.dx, s.dy, if s.pen == Pen::Up { 1 } else { 0 }))
                .collect(),
            labels: r.labels.as_ref().map(|l| l.as_slice()),
            category: r.sketch.category(),
            provenance: r.provenance.as_deref(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("plain data serializes"));
        out.push('\n');
    }
    out
}
