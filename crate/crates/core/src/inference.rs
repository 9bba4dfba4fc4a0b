//! From a predicted affinity matrix to a partition, plus a proximity baseline.

use crate::error::{Error, Result};
use crate::model::{self, GrouperParams, HyperParams};
use crate::stroke::{normalize, AffinityMatrix, GroupLabels, Sketch};

/// Stop merging once the best mean linkage is no longer above this.
pub const MERGE_THRESHOLD: f64 = 0.5;

/// Average-linkage agglomerative clustering.
///
/// Starts from singletons and repeatedly merges the pair of clusters with the highest
/// mean pairwise affinity while that mean exceeds 0.5. Ties go to the pair whose
/// smallest members come first. Labels are numbered by first appearance.
pub fn cluster_affinity(g: &AffinityMatrix) -> GroupLabels {
    let n = g.n();
    // clusters stay sorted by their smallest member
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut link: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        0.5 * (g.get(i, j) + g.get(j, i))
                    }
                })
                .collect()
        })
        .collect();
    loop {
        let k = members.len();
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..k {
            for b in a + 1..k {
                let mean = link[a][b] / (members[a].len() * members[b].len()) as f64;
                if best.is_none_or(|(_, _, m)| mean > m) {
                    best = Some((a, b, mean));
                }
            }
        }
        let Some((a, b, mean)) = best else { break };
        if !(mean > MERGE_THRESHOLD) {
            break;
        }
        for c in 0..k {
            if c != a && c != b {
                link[a][c] += link[b][c];
                link[c][a] = link[a][c];
            }
        }
        link.remove(b);
        link.iter_mut().for_each(|row| {
            row.remove(b);
        });
        let moved = members.remove(b);
        members[a].extend(moved);
    }
    let mut labels = vec![0; n];
    for (k, m) in members.iter().enumerate() {
        for &i in m {
            labels[i] = k;
        }
    }
    GroupLabels::new(labels)
}

/// Predicted affinity of a sketch: normalize, encode, decode from the latent mean.
pub fn predict_sketch_affinity(
    sketch: &Sketch,
    params: &GrouperParams,
    hyper: &HyperParams,
) -> Result<AffinityMatrix> {
    if sketch.len() > hyper.max_segments {
        return Err(Error::Length {
            len: sketch.len(),
            max: hyper.max_segments,
        });
    }
    let s = normalize(sketch)?;
    let (mu, _) = model::encode(&s, params, hyper)?;
    let out = model::decode(&s, &mu, params, hyper)?;
    model::predict_affinity(&out.features, params)
}

/// Group a sketch with a trained model. Deterministic: the latent mean is used, no sampling.
pub fn group(
    sketch: &Sketch,
    params: &GrouperParams,
    hyper: &HyperParams,
) -> Result<(GroupLabels, AffinityMatrix)> {
    let g = predict_sketch_affinity(sketch, params, hyper)?;
    Ok((cluster_affinity(&g), g))
}

/// Strokes whose closest endpoints lie within `gap_threshold` share a group, transitively.
pub fn baseline_proximity(sketch: &Sketch, gap_threshold: f64) -> Result<GroupLabels> {
    if !(gap_threshold > 0.0) {
        return Err(Error::Config(format!(
            "gap threshold must be positive, got {gap_threshold}"
        )));
    }
    let strokes = sketch.strokes();
    let ends: Vec<[(f64, f64); 2]> = strokes.iter().map(|s| [s[0], s[s.len() - 1]]).collect();
    let k = strokes.len();
    let mut parent: Vec<usize> = (0..k).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for a in 0..k {
        for b in a + 1..k {
            let gap = ends[a]
                .iter()
                .flat_map(|p| ends[b].iter().map(move |q| (p.0 - q.0).hypot(p.1 - q.1)))
                .fold(f64::INFINITY, f64::min);
            if gap < gap_threshold {
                let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let stroke_group: Vec<usize> = (0..k).map(|i| root(&mut parent, i)).collect();
    let labels = sketch
        .stroke_ids()
        .into_iter()
        .map(|s| stroke_group[s])
        .collect();
    Ok(GroupLabels::new(labels).canonical())
}
