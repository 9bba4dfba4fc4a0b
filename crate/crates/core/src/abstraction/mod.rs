//! Importance-driven sketch abstraction.
//!
//! A grouped drawing is a set of polylines whose points are the segments of the
//! corresponding [`Sketch`]: point `k` of a polyline is reached by the segment that
//! draws the edge from point `k - 1`, and the first point of a polyline is reached
//! by a pen-up move. Groups are scored by their share of drawn length, their share of
//! segments and a spread term, and low-scoring groups are dropped.

mod trace;

use crate::error::{Error, Result};
use crate::inference;
use crate::model::{GrouperParams, HyperParams};
use crate::stroke::{GroupLabels, Sketch, SketchRecord};

pub use trace::{read_pgm, simplify, thin, trace_edges, Bitmap, TracedEdges};

type Point = (f64, f64);

/// Relative thresholds used when none are given, as fractions of the largest group importance.
pub const DEFAULT_RELATIVE_THRESHOLDS: [f64; 3] = [0.05, 0.15, 0.30];

#[derive(Clone, Debug, PartialEq)]
pub struct PolylineGroups {
    polylines: Vec<Vec<Point>>,
    labels: GroupLabels,
    bbox: (f64, f64),
}

impl PolylineGroups {
    pub fn new(polylines: Vec<Vec<Point>>, labels: GroupLabels, bbox: (f64, f64)) -> Result<Self> {
        let polylines: Vec<Vec<Point>> = polylines.into_iter().filter(|p| !p.is_empty()).collect();
        let n: usize = polylines.iter().map(Vec::len).sum();
        if n == 0 {
            return Err(Error::EmptyInput("no polyline points".into()));
        }
        labels.check_len(n)?;
        if !(bbox.0 > 0.0 && bbox.1 > 0.0) || !bbox.0.is_finite() || !bbox.1.is_finite() {
            return Err(Error::Validation(format!(
                "object size must be positive, got {:?}",
                bbox
            )));
        }
        if polylines
            .iter()
            .flatten()
            .any(|p| !p.0.is_finite() || !p.1.is_finite())
        {
            return Err(Error::Validation("non-finite polyline coordinate".into()));
        }
        Ok(PolylineGroups {
            polylines,
            labels,
            bbox,
        })
    }

    /// Strokes of a sketch with one label per segment. The object size is the extent of
    /// the points; a zero extent along one axis takes the other axis' extent.
    pub fn from_sketch(sketch: &Sketch, labels: &GroupLabels) -> Result<Self> {
        let strokes = sketch.strokes();
        let bbox = extent(strokes.iter().flatten())?;
        Self::new(strokes, labels.clone(), bbox)
    }

    pub fn polylines(&self) -> &[Vec<Point>] {
        &self.polylines
    }

    pub fn labels(&self) -> &GroupLabels {
        &self.labels
    }

    pub fn bbox(&self) -> (f64, f64) {
        self.bbox
    }

    pub fn num_segments(&self) -> usize {
        self.labels.len()
    }

    pub fn to_sketch(&self, category: Option<String>) -> Result<Sketch> {
        Sketch::from_strokes(&self.polylines, category, usize::MAX)
    }

    /// Drawn length and mean position of every segment.
    fn segment_geometry(&self) -> Vec<(f64, Point)> {
        let mut out = Vec::with_capacity(self.num_segments());
        for line in &self.polylines {
            out.push((0.0, line[0]));
            for w in line.windows(2) {
                let (a, b) = (w[0], w[1]);
                out.push((
                    (b.0 - a.0).hypot(b.1 - a.1),
                    (0.5 * (a.0 + b.0), 0.5 * (a.1 + b.1)),
                ));
            }
        }
        out
    }
}

fn extent<'a>(points: impl Iterator<Item = &'a Point>) -> Result<(f64, f64)> {
    let (mut x0, mut y0, mut x1, mut y1) = (
        f64::INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let (w, h) = (x1 - x0, y1 - y0);
    let m = w.max(h);
    if !(m > 0.0) {
        return Err(Error::Validation("drawing has zero extent".into()));
    }
    Ok((if w > 0.0 { w } else { m }, if h > 0.0 { h } else { m }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupImportance {
    /// Label of the group as it appears in the input.
    pub label: usize,
    pub segments: usize,
    /// `I_L`: share of the total drawn length.
    pub length: f64,
    /// `I_N`: share of the segments.
    pub count: f64,
    /// `I_D`: `max(w, h) · N_k / Σ_i d(M_k, M_i)`.
    pub spread: f64,
    /// `I = I_L · I_N + I_D`.
    pub score: f64,
    /// The distance sum was below `ε = 1e-6 · max(w, h)` and was replaced by `ε`.
    pub clamped: bool,
}

/// Per-group scores in order of first appearance.
#[derive(Clone, Debug, PartialEq)]
pub struct ImportanceScores {
    pub groups: Vec<GroupImportance>,
}

impl ImportanceScores {
    pub fn max_score(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| g.score)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the highest score; the first one on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, g) in self.groups.iter().enumerate() {
            if g.score > self.groups[best].score {
                best = k;
            }
        }
        best
    }

    pub fn clamped_labels(&self) -> Vec<usize> {
        self.groups
            .iter()
            .filter(|g| g.clamped)
            .map(|g| g.label)
            .collect()
    }
}

pub fn importance(groups: &PolylineGroups) -> Result<ImportanceScores> {
    let geom = groups.segment_geometry();
    let total_len: f64 = geom.iter().map(|g| g.0).sum();
    if !(total_len > 0.0) {
        return Err(Error::Validation("drawing has no drawn length".into()));
    }
    let n = geom.len() as f64;
    let size = groups.bbox.0.max(groups.bbox.1);
    let eps = 1e-6 * size;
    let labels = groups.labels.as_slice();
    let scores = groups
        .labels
        .groups()
        .into_iter()
        .map(|members| {
            let k = members.len() as f64;
            let length = members.iter().map(|&i| geom[i].0).sum::<f64>() / total_len;
            let count = k / n;
            let cx = members.iter().map(|&i| geom[i].1 .0).sum::<f64>() / k;
            let cy = members.iter().map(|&i| geom[i].1 .1).sum::<f64>() / k;
            let dist: f64 = members
                .iter()
                .map(|&i| (geom[i].1 .0 - cx).hypot(geom[i].1 .1 - cy))
                .sum();
            let clamped = dist < eps;
            let spread = size * k / if clamped { eps } else { dist };
            GroupImportance {
                label: labels[members[0]],
                segments: members.len(),
                length,
                count,
                spread,
                score: length * count + spread,
                clamped,
            }
        })
        .collect();
    Ok(ImportanceScores { groups: scores })
}

/// Drop every group scoring strictly below `threshold`, always keeping the top group.
///
/// Kept segments keep their exact geometry: where a dropped segment precedes a kept one,
/// the kept polyline restarts at the shared point with a pen-up move.
pub fn abstract_groups(
    groups: &PolylineGroups,
    scores: &ImportanceScores,
    threshold: f64,
) -> Result<PolylineGroups> {
    if !(threshold >= 0.0) {
        return Err(Error::Config(format!(
            "threshold must be non-negative, got {threshold}"
        )));
    }
    let members = groups.labels.groups();
    if members.len() != scores.groups.len() {
        return Err(Error::Contract(
            "scores were computed for a different grouping".into(),
        ));
    }
    let top = scores.argmax();
    let mut keep = vec![false; groups.num_segments()];
    for (k, (m, s)) in members.iter().zip(&scores.groups).enumerate() {
        if k == top || s.score >= threshold {
            m.iter().for_each(|&i| keep[i] = true);
        }
    }
    let labels = groups.labels.as_slice();
    let mut polylines = Vec::new();
    let mut out_labels = Vec::new();
    let mut idx = 0;
    for line in &groups.polylines {
        let mut current: Vec<Point> = Vec::new();
        for (k, &p) in line.iter().enumerate() {
            let i = idx + k;
            if !keep[i] {
                if !current.is_empty() {
                    polylines.push(std::mem::take(&mut current));
                }
                continue;
            }
            if current.is_empty() && k > 0 {
                current.push(line[k - 1]);
                out_labels.push(labels[i]);
            }
            current.push(p);
            out_labels.push(labels[i]);
        }
        if !current.is_empty() {
            polylines.push(current);
        }
        idx += line.len();
    }
    PolylineGroups::new(polylines, GroupLabels::new(out_labels), groups.bbox)
}

/// One abstraction level.
#[derive(Clone, Debug, PartialEq)]
pub struct Abstraction {
    /// Fraction of the top group's importance.
    pub relative: f64,
    pub threshold: f64,
    pub groups: PolylineGroups,
    /// Segments re-encoded as a labeled record with the threshold recorded as provenance.
    pub record: SketchRecord,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Synthesis {
    pub grouped: PolylineGroups,
    pub scores: ImportanceScores,
    pub levels: Vec<Abstraction>,
}

/// Score a grouped drawing and abstract it at thresholds relative to the top importance.
pub fn synthesize_grouped(
    groups: PolylineGroups,
    relative: &[f64],
    category: Option<String>,
) -> Result<Synthesis> {
    if relative.is_empty() {
        return Err(Error::Config("no thresholds given".into()));
    }
    if let Some(r) = relative.iter().find(|r| !(**r >= 0.0) || !r.is_finite()) {
        return Err(Error::Config(format!(
            "thresholds must be finite and non-negative, got {r}"
        )));
    }
    let scores = importance(&groups)?;
    let clamped = scores.clamped_labels();
    if !clamped.is_empty() {
        log::warn!("spread denominator clamped for groups {clamped:?}");
    }
    let max = scores.max_score();
    let levels = relative
        .iter()
        .map(|&r| {
            let threshold = r * max;
            let g = abstract_groups(&groups, &scores, threshold)?;
            let mut provenance = format!("abstraction relative={r} I_delta={threshold:.6e}");
            if !clamped.is_empty() {
                provenance.push_str(&format!(" clamped={clamped:?}"));
            }
            let record = SketchRecord {
                sketch: g.to_sketch(category.clone())?,
                labels: Some(g.labels.clone()),
                provenance: Some(provenance),
            };
            Ok(Abstraction {
                relative: r,
                threshold,
                groups: g,
                record,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Synthesis {
        grouped: groups,
        scores,
        levels,
    })
}

pub enum SynthInput<'a> {
    Raster(&'a Bitmap),
    Sketch(&'a Sketch),
}

/// Trace if needed, group with the model, then abstract at each relative threshold.
pub fn synthesize(
    input: SynthInput<'_>,
    params: &GrouperParams,
    hyper: &HyperParams,
    relative: &[f64],
) -> Result<Synthesis> {
    let (sketch, bbox) = match input {
        SynthInput::Raster(b) => {
            let t = trace_edges(b)?;
            (
                Sketch::from_strokes(&t.polylines, None, usize::MAX)?,
                Some(t.bbox),
            )
        }
        SynthInput::Sketch(s) => (s.clone(), None),
    };
    let (labels, _) = inference::group(&sketch, params, hyper)?;
    let mut grouped = PolylineGroups::from_sketch(&sketch, &labels)?;
    if let Some(b) = bbox {
        grouped.bbox = b;
    }
    synthesize_grouped(grouped, relative, sketch.category().map(str::to_string))
}
