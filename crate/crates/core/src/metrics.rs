//! Partition comparison: variation of information, Rand index and segmentation covering.
//!
//! Segments are weighted equally unless a weight vector is supplied.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write;

use crate::error::{Error, Result};
use crate::stroke::{GroupLabels, Sketch};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PartitionMetrics {
    /// Bits; lower is better.
    pub voi: f64,
    pub pri: f64,
    pub sc: f64,
}

fn check(a: &GroupLabels, b: &GroupLabels, w: Option<&[f64]>) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!(
            "partitions cover {} and {} segments",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Contract("partitions are empty".into()));
    }
    if let Some(w) = w {
        if w.len() != a.len() {
            return Err(Error::Contract(format!(
                "{} weights for {} segments",
                w.len(),
                a.len()
            )));
        }
        if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) || !(w.iter().sum::<f64>() > 0.0) {
            return Err(Error::Contract(
                "weights must be finite, non-negative and not all zero".into(),
            ));
        }
    }
    Ok(())
}

fn weight(w: Option<&[f64]>, i: usize) -> f64 {
    w.map_or(1.0, |w| w[i])
}

type Table = (
    HashMap<(usize, usize), f64>,
    HashMap<usize, f64>,
    HashMap<usize, f64>,
    f64,
);

/// Joint and marginal masses plus their total. Unweighted masses are exact counts.
fn contingency(a: &GroupLabels, b: &GroupLabels, w: Option<&[f64]>) -> Table {
    let mut total = 0.0;
    let (mut joint, mut pa, mut pb) = (HashMap::new(), HashMap::new(), HashMap::new());
    for (i, (&x, &y)) in a.as_slice().iter().zip(b.as_slice()).enumerate() {
        let m = weight(w, i);
        total += m;
        *joint.entry((x, y)).or_insert(0.0) += m;
        *pa.entry(x).or_insert(0.0) += m;
        *pb.entry(y).or_insert(0.0) += m;
    }
    (joint, pa, pb, total)
}

/// `H(a|b) + H(b|a)` in bits.
pub fn voi(a: &GroupLabels, b: &GroupLabels) -> Result<f64> {
    voi_weighted(a, b, None)
}

pub fn voi_weighted(a: &GroupLabels, b: &GroupLabels, w: Option<&[f64]>) -> Result<f64> {
    check(a, b, w)?;
    let (joint, pa, pb, total) = contingency(a, b, w);
    let mut keys: Vec<_> = joint.keys().copied().collect();
    keys.sort_unstable();
    let mut v = 0.0;
    for (x, y) in keys {
        let p = joint[&(x, y)];
        if p > 0.0 {
            v += p * ((pa[&x] / p).log2() + (pb[&y] / p).log2());
        }
    }
    Ok((v / total).max(0.0))
}

/// Fraction of unordered segment pairs on which the two partitions agree.
pub fn pri(a: &GroupLabels, b: &GroupLabels) -> Result<f64> {
    pri_weighted(a, b, None)
}

pub fn pri_weighted(a: &GroupLabels, b: &GroupLabels, w: Option<&[f64]>) -> Result<f64> {
    check(a, b, w)?;
    let n = a.len();
    if n < 2 {
        return Err(Error::Contract(
            "the Rand index needs at least two segments".into(),
        ));
    }
    let (la, lb) = (a.as_slice(), b.as_slice());
    let (mut agree, mut total) = (0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let m = weight(w, i) * weight(w, j);
            total += m;
            if (la[i] == la[j]) == (lb[i] == lb[j]) {
                agree += m;
            }
        }
    }
    if !(total > 0.0) {
        return Err(Error::Contract("pair weights sum to zero".into()));
    }
    Ok(agree / total)
}

/// Covering of `human` by `machine`: `(1/N) Σ_R |R| max_R' |R ∩ R'| / |R ∪ R'|`.
pub fn sc(machine: &GroupLabels, human: &GroupLabels) -> Result<f64> {
    sc_weighted(machine, human, None)
}

pub fn sc_weighted(machine: &GroupLabels, human: &GroupLabels, w: Option<&[f64]>) -> Result<f64> {
    check(machine, human, w)?;
    let (joint, pm, ph, total) = contingency(machine, human, w);
    let mut best: BTreeMap<usize, f64> = BTreeMap::new();
    for (&(m, h), &inter) in &joint {
        let jac = inter / (pm[&m] + ph[&h] - inter);
        let e = best.entry(h).or_insert(0.0);
        *e = e.max(jac);
    }
    Ok((best.iter().map(|(h, j)| ph[h] * j).sum::<f64>() / total).min(1.0))
}

/// Mean of the covering in both directions.
pub fn sc_symmetric(a: &GroupLabels, b: &GroupLabels) -> Result<f64> {
    Ok(0.5 * (sc(a, b)? + sc(b, a)?))
}

/// Segment weights proportional to offset length.
pub fn arc_length_weights(sketch: &Sketch) -> Vec<f64> {
    sketch.segments().iter().map(|s| s.dx.hypot(s.dy)).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Weighting {
    #[default]
    Equal,
    ArcLength,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CoveringDirection {
    /// Human partition covered by the machine partition.
    #[default]
    HumanByMachine,
    Symmetric,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalOptions {
    pub weighting: Weighting,
    pub covering: CoveringDirection,
}

/// One evaluated sketch.
#[derive(Clone, Debug)]
pub struct EvalItem<'a> {
    pub predicted: &'a GroupLabels,
    pub truth: &'a GroupLabels,
    pub category: Option<&'a str>,
    /// Needed only for arc-length weighting.
    pub sketch: Option<&'a Sketch>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CategoryRow {
    pub category: String,
    pub sketches: usize,
    pub mean: PartitionMetrics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub per_sketch: Vec<PartitionMetrics>,
    /// Sorted by category name.
    pub per_category: Vec<CategoryRow>,
    /// Unweighted mean of the category means.
    pub average: PartitionMetrics,
    pub options: EvalOptions,
}

pub const UNCATEGORIZED: &str = "uncategorized";

pub fn metrics_for(item: &EvalItem<'_>, opts: EvalOptions) -> Result<PartitionMetrics> {
    let weights = match opts.weighting {
        Weighting::Equal => None,
        Weighting::ArcLength => {
            let s = item.sketch.ok_or_else(|| {
                Error::Contract("arc-length weighting needs the sketch geometry".into())
            })?;
            Some(arc_length_weights(s))
        }
    };
    let w = weights.as_deref();
    let (p, t) = (item.predicted, item.truth);
    let sc = match opts.covering {
        CoveringDirection::HumanByMachine => sc_weighted(p, t, w)?,
        CoveringDirection::Symmetric => 0.5 * (sc_weighted(p, t, w)? + sc_weighted(t, p, w)?),
    };
    Ok(PartitionMetrics {
        voi: voi_weighted(p, t, w)?,
        pri: pri_weighted(p, t, w)?,
        sc,
    })
}

fn mean(ms: impl Iterator<Item = PartitionMetrics>) -> PartitionMetrics {
    let mut acc = PartitionMetrics::default();
    let mut k = 0usize;
    for m in ms {
        acc.voi += m.voi;
        acc.pri += m.pri;
        acc.sc += m.sc;
        k += 1;
    }
    let k = k.max(1) as f64;
    PartitionMetrics {
        voi: acc.voi / k,
        pri: acc.pri / k,
        sc: acc.sc / k,
    }
}

/// Per-sketch metrics, their mean within each category, and the mean over categories.
pub fn evaluate(items: &[EvalItem<'_>], opts: EvalOptions) -> Result<EvalReport> {
    if items.is_empty() {
        return Err(Error::EmptyInput("nothing to evaluate".into()));
    }
    let per_sketch = items
        .iter()
        .enumerate()
        .map(|(i, it)| metrics_for(it, opts).map_err(|e| Error::at_record(i, e)))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(items, per_sketch, opts))
}

fn summarize(
    items: &[EvalItem<'_>],
    per_sketch: Vec<PartitionMetrics>,
    opts: EvalOptions,
) -> EvalReport {
    let mut by_cat: BTreeMap<&str, Vec<PartitionMetrics>> = BTreeMap::new();
    for (it, m) in items.iter().zip(&per_sketch) {
        by_cat
            .entry(it.category.unwrap_or(UNCATEGORIZED))
            .or_default()
            .push(*m);
    }
    let per_category: Vec<CategoryRow> = by_cat
        .into_iter()
        .map(|(c, ms)| CategoryRow {
            category: c.to_string(),
            sketches: ms.len(),
            mean: mean(ms.into_iter()),
        })
        .collect();
    let average = mean(per_category.iter().map(|r| r.mean));
    EvalReport {
        per_sketch,
        per_category,
        average,
        options: opts,
    }
}

impl EvalReport {
    /// Tab-separated table with a commented header; category rows only when requested.
    pub fn to_table(&self, per_category: bool) -> String {
        let mut s = String::new();
        let weighting = match self.options.weighting {
            Weighting::Equal => "segments weighted equally",
            Weighting::ArcLength => "segments weighted by offset length",
        };
        let covering = match self.options.covering {
            CoveringDirection::HumanByMachine => {
                "sc = covering of human grouping by machine grouping"
            }
            CoveringDirection::Symmetric => "sc = mean covering in both directions",
        };
        let _ = writeln!(
            s,
            "# voi in bits (log base 2), lower is better; pri and sc higher is better"
        );
        let _ = writeln!(s, "# {weighting}; {covering}");
        let _ = writeln!(s, "category\tsketches\tvoi\tpri\tsc");
        let row = |s: &mut String, name: &str, k: usize, m: &PartitionMetrics| {
            let _ = writeln!(s, "{name}\t{k}\t{:.4}\t{:.4}\t{:.4}", m.voi, m.pri, m.sc);
        };
        if per_category {
            for r in &self.per_category {
                row(&mut s, &r.category, r.sketches, &r.mean);
            }
        }
        row(&mut s, "Average", self.per_sketch.len(), &self.average);
        s
    }
}
