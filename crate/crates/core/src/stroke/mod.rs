//! Stroke-sequence data model.
//!
//! A sketch is an ordered list of pen offsets `(dx, dy, pen)`. A segment whose pen is
//! [`Pen::Up`] ends the current stroke; the following offset moves the pen without
//! drawing. Every sketch ends with a lifted pen.

mod augment;
mod format;
mod quickdraw;
mod synth;

use std::collections::HashMap;
use std::ops::Range;

use crate::autodiff::Array;
use crate::error::{Error, Result};

pub use augment::{augment, AugmentParams};
pub use format::{parse_stroke3, read_stroke3, write_stroke3, SketchRecord};
pub use quickdraw::import_quickdraw;
pub use synth::{gen_synthetic, SyntheticCategory};

/// Default upper bound on segments per sketch.
pub const DEFAULT_MAX_SEGMENTS: usize = 192;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pen {
    /// The stroke continues after this point.
    Down,
    /// This point ends a stroke.
    Up,
}

impl Pen {
    pub fn as_f64(self) -> f64 {
        match self {
            Pen::Down => 0.0,
            Pen::Up => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentDelta {
    pub dx: f64,
    pub dy: f64,
    pub pen: Pen,
}

impl SegmentDelta {
    pub fn new(dx: f64, dy: f64, pen: Pen) -> Self {
        SegmentDelta { dx, dy, pen }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sketch {
    segments: Vec<SegmentDelta>,
    category: Option<String>,
}

impl Sketch {
    pub fn new(segments: Vec<SegmentDelta>, category: Option<String>) -> Result<Self> {
        Self::with_limit(segments, category, DEFAULT_MAX_SEGMENTS)
    }

    pub fn with_limit(
        segments: Vec<SegmentDelta>,
        category: Option<String>,
        max_segments: usize,
    ) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Validation("sketch has no segments".into()));
        }
        if segments.len() > max_segments {
            return Err(Error::Length {
                len: segments.len(),
                max: max_segments,
            });
        }
        if let Some(i) = segments
            .iter()
            .position(|s| !s.dx.is_finite() || !s.dy.is_finite())
        {
            return Err(Error::Validation(format!(
                "segment {i} has a non-finite offset"
            )));
        }
        if segments.last().map(|s| s.pen) != Some(Pen::Up) {
            return Err(Error::Validation("last segment must lift the pen".into()));
        }
        Ok(Sketch { segments, category })
    }

    /// Build from absolute-coordinate strokes. The first offset is measured from the origin.
    pub fn from_strokes(
        strokes: &[Vec<(f64, f64)>],
        category: Option<String>,
        max_segments: usize,
    ) -> Result<Self> {
        let mut segments = Vec::new();
        let (mut px, mut py) = (0.0, 0.0);
        for stroke in strokes.iter().filter(|s| !s.is_empty()) {
            for (k, &(x, y)) in stroke.iter().enumerate() {
                let pen = if k + 1 == stroke.len() {
                    Pen::Up
                } else {
                    Pen::Down
                };
                segments.push(SegmentDelta::new(x - px, y - py, pen));
                (px, py) = (x, y);
            }
        }
        Sketch::with_limit(segments, category, max_segments)
    }

    pub fn segments(&self) -> &[SegmentDelta] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn category(&self) -> Option<&str> {
        self.category.as_deref()
    }

    pub fn set_category(&mut self, category: Option<String>) {
        self.category = category;
    }

    /// Index ranges of the strokes: maximal runs ending in a lifted pen.
    pub fn stroke_ranges(&self) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for (i, s) in self.segments.iter().enumerate() {
            if s.pen == Pen::Up {
                out.push(start..i + 1);
                start = i + 1;
            }
        }
        out
    }

    /// Stroke index of every segment.
    pub fn stroke_ids(&self) -> Vec<usize> {
        let mut ids = Vec::with_capacity(self.len());
        for (k, r) in self.stroke_ranges().into_iter().enumerate() {
            ids.extend(std::iter::repeat_n(k, r.len()));
        }
        ids
    }

    /// Absolute point positions, the running sum of offsets from the origin.
    pub fn absolute_points(&self) -> Vec<(f64, f64)> {
        let (mut x, mut y) = (0.0, 0.0);
        self.segments
            .iter()
            .map(|s| {
                x += s.dx;
                y += s.dy;
                (x, y)
            })
            .collect()
    }

    /// Absolute-coordinate strokes.
    pub fn strokes(&self) -> Vec<Vec<(f64, f64)>> {
        let pts = self.absolute_points();
        self.stroke_ranges()
            .into_iter()
            .map(|r| pts[r].to_vec())
            .collect()
    }

    /// `[N, 3]` array of `(dx, dy, pen)` rows, the model's input encoding.
    pub fn to_array(&self) -> Array {
        let data = self
            .segments
            .iter()
            .flat_map(|s| [s.dx, s.dy, s.pen.as_f64()])
            .collect();
        Array::matrix(self.len(), 3, data).expect("3 values per segment")
    }
}

/// Scale all offsets by one scalar so that the `(dx, dy)` components have unit standard deviation.
pub fn normalize(sketch: &Sketch) -> Result<Sketch> {
    let vals: Vec<f64> = sketch.segments.iter().flat_map(|s| [s.dx, s.dy]).collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > 0.0) || !std.is_finite() {
        return Err(Error::Normalization);
    }
    let segments = sketch
        .segments
        .iter()
        .map(|s| SegmentDelta::new(s.dx / std, s.dy / std, s.pen))
        .collect();
    Ok(Sketch {
        segments,
        category: sketch.category.clone(),
    })
}

/// One group identifier per segment.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GroupLabels(Vec<usize>);

impl GroupLabels {
    pub fn new(labels: Vec<usize>) -> Self {
        GroupLabels(labels)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Relabel by order of first appearance so identifiers are `0..K`.
    pub fn canonical(&self) -> GroupLabels {
        let mut map = HashMap::new();
        let labels = self
            .0
            .iter()
            .map(|&l| {
                let next = map.len();
                *map.entry(l).or_insert(next)
            })
            .collect();
        GroupLabels(labels)
    }

    pub fn num_groups(&self) -> usize {
        let mut seen: Vec<usize> = self.0.clone();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    /// Member indices of each group, in canonical group order.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let canon = self.canonical();
        let mut out = vec![Vec::new(); canon.num_groups()];
        for (i, &g) in canon.0.iter().enumerate() {
            out[g].push(i);
        }
        out
    }

    pub fn check_len(&self, n: usize) -> Result<()> {
        if self.len() != n {
            return Err(Error::Validation(format!(
                "{} labels for {n} segments",
                self.len()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AffinityKind {
    GroundTruth,
    Predicted,
}

/// Symmetric `N×N` same-group matrix with unit diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinityMatrix {
    n: usize,
    values: Vec<f64>,
    kind: AffinityKind,
}

impl AffinityMatrix {
    /// `G[i][j] = 1` iff segments `i` and `j` carry the same label.
    pub fn from_labels(labels: &GroupLabels) -> Self {
        let l = labels.as_slice();
        let n = l.len();
        let values = (0..n * n)
            .map(|k| if l[k / n] == l[k % n] { 1.0 } else { 0.0 })
            .collect();
        AffinityMatrix {
            n,
            values,
            kind: AffinityKind::GroundTruth,
        }
    }

    /// Wrap model output. Entries must lie in `[0, 1]` and be symmetric; the diagonal is set to 1.
    pub fn predicted(n: usize, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Shape(format!(
                "{} values for a {n}x{n} matrix",
                values.len()
            )));
        }
        for i in 0..n {
            values[i * n + i] = 1.0;
            for j in 0..i {
                let (a, b) = (values[i * n + j], values[j * n + i]);
                if a != b {
                    return Err(Error::Validation(format!("asymmetric at ({i}, {j})")));
                }
                if !(0.0..=1.0).contains(&a) {
                    return Err(Error::Validation(format!(
                        "entry ({i}, {j}) = {a} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(AffinityMatrix {
            n,
            values,
            kind: AffinityKind::Predicted,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> AffinityKind {
        self.kind
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_array(&self) -> Array {
        Array::matrix(self.n, self.n, self.values.clone()).expect("square")
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// For binary matrices: `G[i][j] = G[j][k] = 1` implies `G[i][k] = 1`.
    pub fn is_transitive(&self) -> bool {
        let n = self.n;
        (0..n).all(|i| {
            (0..n).all(|j| {
                self.get(i, j) != 1.0
                    || (0..n).all(|k| self.get(j, k) != 1.0 || self.get(i, k) == 1.0)
            })
        })
    }
}
