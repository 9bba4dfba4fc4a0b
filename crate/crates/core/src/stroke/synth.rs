//! Procedural labeled sketches for training and testing without a real dataset.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{GroupLabels, Sketch, DEFAULT_MAX_SEGMENTS};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SyntheticCategory {
    BoxWithLid,
    StickFigure,
    Flower,
    Grid,
}

impl SyntheticCategory {
    pub const ALL: [SyntheticCategory; 4] = [
        SyntheticCategory::BoxWithLid,
        SyntheticCategory::StickFigure,
        SyntheticCategory::Flower,
        SyntheticCategory::Grid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SyntheticCategory::BoxWithLid => "box-with-lid",
            SyntheticCategory::StickFigure => "stick-figure",
            SyntheticCategory::Flower => "flower",
            SyntheticCategory::Grid => "grid",
        }
    }

    /// Strokes in drawing order, each tagged with its part.
    fn template(self) -> Vec<(usize, Vec<(f64, f64)>)> {
        match self {
            SyntheticCategory::BoxWithLid => vec![
                (
                    0,
                    closed(&[(0.2, 0.45), (0.8, 0.45), (0.8, 0.9), (0.2, 0.9)], 3),
                ),
                (
                    1,
                    closed(&[(0.15, 0.45), (0.28, 0.3), (0.72, 0.3), (0.85, 0.45)], 3),
                ),
                (
                    2,
                    vec![(0.44, 0.3), (0.44, 0.22), (0.56, 0.22), (0.56, 0.3)],
                ),
            ],
            SyntheticCategory::StickFigure => vec![
                (0, circle((0.5, 0.2), 0.1, 8)),
                (1, vec![(0.5, 0.3), (0.5, 0.45), (0.5, 0.6)]),
                (2, vec![(0.3, 0.42), (0.5, 0.4), (0.7, 0.42)]),
                (
                    1,
                    vec![
                        (0.35, 0.9),
                        (0.42, 0.75),
                        (0.5, 0.6),
                        (0.58, 0.75),
                        (0.65, 0.9),
                    ],
                ),
            ],
            SyntheticCategory::Flower => {
                let centre = (0.5, 0.3);
                let mut strokes = vec![(0, circle(centre, 0.06, 8))];
                for k in 0..5 {
                    let a = TAU * k as f64 / 5.0 - TAU / 4.0;
                    let polar = |r: f64, t: f64| (centre.0 + r * t.cos(), centre.1 + r * t.sin());
                    strokes.push((
                        1,
                        vec![
                            polar(0.08, a),
                            polar(0.15, a - 0.3),
                            polar(0.2, a),
                            polar(0.15, a + 0.3),
                        ],
                    ));
                }
                strokes.push((2, vec![(0.5, 0.5), (0.5, 0.65), (0.5, 0.8), (0.5, 0.95)]));
                strokes.push((
                    3,
                    vec![(0.5, 0.75), (0.4, 0.68), (0.33, 0.72), (0.42, 0.78)],
                ));
                strokes.push((
                    3,
                    vec![(0.5, 0.75), (0.6, 0.68), (0.67, 0.72), (0.58, 0.78)],
                ));
                strokes
            }
            SyntheticCategory::Grid => vec![
                (
                    0,
                    closed(&[(0.1, 0.1), (0.9, 0.1), (0.9, 0.9), (0.1, 0.9)], 3),
                ),
                (1, vec![(0.1, 0.37), (0.5, 0.37), (0.9, 0.37)]),
                (1, vec![(0.1, 0.63), (0.5, 0.63), (0.9, 0.63)]),
                (2, vec![(0.37, 0.1), (0.37, 0.5), (0.37, 0.9)]),
                (2, vec![(0.63, 0.1), (0.63, 0.5), (0.63, 0.9)]),
            ],
        }
    }
}

impl fmt::Display for SyntheticCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SyntheticCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SyntheticCategory::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown synthetic category {s:?} (expected one of box-with-lid, stick-figure, flower, grid)"
                ))
            })
    }
}

fn closed(corners: &[(f64, f64)], per_edge: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(corners.len() * per_edge + 1);
    for (k, &a) in corners.iter().enumerate() {
        let b = corners[(k + 1) % corners.len()];
        for s in 0..per_edge {
            let t = s as f64 / per_edge as f64;
            out.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
        }
    }
    out.push(corners[0]);
    out
}

fn circle(c: (f64, f64), r: f64, k: usize) -> Vec<(f64, f64)> {
    (0..=k)
        .map(|i| {
            let t = TAU * (i % k) as f64 / k as f64 - TAU / 4.0;
            (c.0 + r * t.cos(), c.1 + r * t.sin())
        })
        .collect()
}

/// Generate one labeled sketch.
///
/// With `jitter = 0` the output is the category's fixed template. Otherwise each part
/// is independently rescaled and shifted and every point gets Gaussian noise, all in
/// proportion to `jitter`. Segment counts and labels never depend on `jitter`.
pub fn gen_synthetic<R: Rng + ?Sized>(
    category: SyntheticCategory,
    jitter: f64,
    rng: &mut R,
) -> Result<(Sketch, GroupLabels)> {
    if !(jitter >= 0.0) {
        return Err(Error::Config(format!(
            "jitter must be non-negative, got {jitter}"
        )));
    }
    let template = category.template();
    let parts = template.iter().map(|(p, _)| *p).max().unwrap_or(0) + 1;
    let mut normal = |scale: f64| -> f64 {
        if jitter == 0.0 {
            0.0
        } else {
            scale * jitter * rng.sample::<f64, _>(StandardNormal)
        }
    };
    let part_xform: Vec<(f64, f64, f64)> = (0..parts)
        .map(|_| {
            (
                (1.0 + normal(1.0)).clamp(0.5, 1.5),
                normal(0.5),
                normal(0.5),
            )
        })
        .collect();
    let global = (1.0 + normal(1.0)).clamp(0.5, 1.5);

    let mut strokes = Vec::with_capacity(template.len());
    let mut labels = Vec::new();
    for (part, pts) in &template {
        let (s, tx, ty) = part_xform[*part];
        let (cx, cy) = centroid(&template, *part);
        let stroke: Vec<(f64, f64)> = pts
            .iter()
            .map(|&(x, y)| {
                let px = cx + s * (x - cx) + tx + normal(0.2);
                let py = cy + s * (y - cy) + ty + normal(0.2);
                (0.5 + global * (px - 0.5), 0.5 + global * (py - 0.5))
            })
            .collect();
        labels.extend(std::iter::repeat_n(*part, stroke.len()));
        strokes.push(stroke);
    }
    let sketch = Sketch::from_strokes(
        &strokes,
        Some(category.name().to_owned()),
        DEFAULT_MAX_SEGMENTS,
    )?;
    Ok((sketch, GroupLabels::new(labels)))
}

fn centroid(template: &[(usize, Vec<(f64, f64)>)], part: usize) -> (f64, f64) {
    let pts: Vec<&(f64, f64)> = template
        .iter()
        .filter(|(p, _)| *p == part)
        .flat_map(|(_, s)| s)
        .collect();
    let n = pts.len() as f64;
    (
        pts.iter().map(|p| p.0).sum::<f64>() / n,
        pts.iter().map(|p| p.1).sum::<f64>() / n,
    )
}
