use rand::Rng;

use super::{GroupLabels, SegmentDelta, Sketch};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    /// Probability of dropping each whole stroke, in `[0, 1)`.
    pub removal_prob: f64,
    /// Offsets are scaled by factors drawn from `[1 - s, 1 + s]`.
    pub distort_scale: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            removal_prob: 0.1,
            distort_scale: 0.1,
        }
    }
}

/// Stroke removal followed by per-offset scale distortion.
///
/// Dropped strokes keep the surviving geometry in place: their net displacement is
/// folded into the next surviving offset. If every stroke would be dropped, one
/// stroke chosen uniformly at random survives. Labels follow their segments.
pub fn augment<R: Rng + ?Sized>(
    sketch: &Sketch,
    labels: &GroupLabels,
    params: AugmentParams,
    rng: &mut R,
) -> Result<(Sketch, GroupLabels)> {
    labels.check_len(sketch.len())?;
    if !(0.0..=1.0).contains(&params.removal_prob) || !(params.distort_scale >= 0.0) {
        return Err(Error::Config(format!(
            "invalid augmentation parameters {params:?}"
        )));
    }
    let ranges = sketch.stroke_ranges();
    let mut keep: Vec<bool> = ranges
        .iter()
        .map(|_| params.removal_prob == 0.0 || !rng.random_bool(params.removal_prob))
        .collect();
    if !keep.iter().any(|&k| k) {
        let survivor = rng.random_range(0..ranges.len());
        keep[survivor] = true;
    }

    let segs = sketch.segments();
    let mut out = Vec::with_capacity(segs.len());
    let mut out_labels = Vec::with_capacity(segs.len());
    let (mut carry_x, mut carry_y) = (0.0, 0.0);
    for (range, kept) in ranges.into_iter().zip(keep) {
        for i in range {
            let s = segs[i];
            if kept {
                out.push(SegmentDelta::new(s.dx + carry_x, s.dy + carry_y, s.pen));
                out_labels.push(labels.as_slice()[i]);
                (carry_x, carry_y) = (0.0, 0.0);
            } else {
                carry_x += s.dx;
                carry_y += s.dy;
            }
        }
    }

    if params.distort_scale > 0.0 {
        let lo = 1.0 - params.distort_scale;
        let hi = 1.0 + params.distort_scale;
        for s in &mut out {
            s.dx *= rng.random_range(lo..=hi);
            s.dy *= rng.random_range(lo..=hi);
        }
    }
    let sketch_out = Sketch::with_limit(out, sketch.category().map(str::to_owned), usize::MAX)?;
    Ok((sketch_out, GroupLabels::new(out_labels)))
}
