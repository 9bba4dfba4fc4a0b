//! Binary raster to polylines.

use std::collections::HashSet;

use image::ImageFormat;

use crate::error::{Error, Result};

type Point = (f64, f64);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bitmap {
    width: usize,
    height: usize,
    fg: Vec<bool>,
}

impl Bitmap {
    pub fn new(width: usize, height: usize, fg: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyInput("bitmap has no pixels".into()));
        }
        if fg.len() != width * height {
            return Err(Error::Validation(format!(
                "{} pixels for a {width}x{height} bitmap",
                fg.len()
            )));
        }
        Ok(Bitmap { width, height, fg })
    }

    /// Pixels darker than `threshold` are foreground; `invert` selects the light ones instead.
    pub fn from_gray(
        width: usize,
        height: usize,
        gray: &[u8],
        threshold: u8,
        invert: bool,
    ) -> Result<Self> {
        Self::new(
            width,
            height,
            gray.iter().map(|&v| (v < threshold) != invert).collect(),
        )
    }

    /// Foreground wherever `f(x, y)` holds.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let fg = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(width, height, fg)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.fg[y as usize * self.width + x as usize]
    }

    /// Neighbours under mixed adjacency: 4-neighbours, plus diagonal ones not already
    /// reachable through a shared 4-neighbour. Components equal the 8-connected ones.
    fn neighbours(&self, x: isize, y: isize) -> Vec<(isize, isize)> {
        let mut out = Vec::with_capacity(4);
        for (dx, dy) in [(0, -1), (-1, 0), (1, 0), (0, 1)] {
            if self.get(x + dx, y + dy) {
                out.push((x + dx, y + dy));
            }
        }
        for (dx, dy) in [(-1, -1), (1, -1), (-1, 1), (1, 1)] {
            if self.get(x + dx, y + dy) && !self.get(x + dx, y) && !self.get(x, y + dy) {
                out.push((x + dx, y + dy));
            }
        }
        out
    }
}

/// 8-bit binary PGM, thresholded at 128: dark pixels are strokes unless `invert`.
pub fn read_pgm(bytes: &[u8], invert: bool) -> Result<Bitmap> {
    if !bytes.starts_with(b"P5") {
        return Err(Error::Validation("not a binary PGM (P5) image".into()));
    }
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Pnm)?.to_luma8();
    Bitmap::from_gray(
        img.width() as usize,
        img.height() as usize,
        img.as_raw(),
        128,
        invert,
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct TracedEdges {
    /// Pixel coordinates, x to the right and y down.
    pub polylines: Vec<Vec<Point>>,
    /// Foreground extent in pixels.
    pub bbox: (f64, f64),
}

/// Zhang–Suen thinning to a one-pixel-wide skeleton.
pub fn thin(bitmap: &Bitmap) -> Bitmap {
    let mut b = bitmap.clone();
    let (w, h) = (b.width as isize, b.height as isize);
    loop {
        let mut changed = false;
        for pass in 0..2 {
            let mut clear = Vec::new();
            for y in 0..h {
                for x in 0..w {
                    if !b.get(x, y) {
                        continue;
                    }
                    // P2..P9 clockwise from north
                    let n = [
                        b.get(x, y - 1),
                        b.get(x + 1, y - 1),
                        b.get(x + 1, y),
                        b.get(x + 1, y + 1),
                        b.get(x, y + 1),
                        b.get(x - 1, y + 1),
                        b.get(x - 1, y),
                        b.get(x - 1, y - 1),
                    ];
                    let count = n.iter().filter(|&&v| v).count();
                    let transitions = (0..8).filter(|&i| !n[i] && n[(i + 1) % 8]).count();
                    let (p2, p4, p6, p8) = (n[0], n[2], n[4], n[6]);
                    let cond = if pass == 0 {
                        !(p2 && p4 && p6) && !(p4 && p6 && p8)
                    } else {
                        !(p2 && p4 && p8) && !(p2 && p6 && p8)
                    };
                    if (2..=6).contains(&count) && transitions == 1 && cond {
                        clear.push((y * w + x) as usize);
                    }
                }
            }
            changed |= !clear.is_empty();
            for i in clear {
                b.fg[i] = false;
            }
        }
        if !changed {
            return b;
        }
    }
}

/// Thin, then chain foreground pixels into polylines split at junctions, simplified at 1 pixel.
///
/// The bounding box is taken before thinning. Connected junction pixels (three or more neighbours) form one junction, located at
/// their centroid. Closed loops without junctions start at their first pixel in
/// row-major order. Isolated pixels become single-point polylines.
pub fn trace_edges(bitmap: &Bitmap) -> Result<TracedEdges> {
    let (w, h) = (bitmap.width as isize, bitmap.height as isize);
    let foreground = |b: &Bitmap| -> Vec<(isize, isize)> {
        (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .filter(|&(x, y)| b.get(x, y))
            .collect()
    };
    let pixels = foreground(bitmap);
    if pixels.is_empty() {
        return Err(Error::EmptyInput("bitmap has no foreground pixels".into()));
    }
    let (x0, x1) = (
        pixels.iter().map(|p| p.0).min().unwrap(),
        pixels.iter().map(|p| p.0).max().unwrap(),
    );
    let (y0, y1) = (
        pixels.iter().map(|p| p.1).min().unwrap(),
        pixels.iter().map(|p| p.1).max().unwrap(),
    );
    let bbox = ((x1 - x0 + 1) as f64, (y1 - y0 + 1) as f64);
    let skeleton = thin(bitmap);
    let bitmap = &skeleton;
    let pixels = foreground(bitmap);

    let idx = |p: (isize, isize)| (p.1 * w + p.0) as usize;
    let degree = |p: (isize, isize)| bitmap.neighbours(p.0, p.1).len();
    let is_junction = |p: (isize, isize)| degree(p) >= 3;

    // junction clusters and their centroids
    let mut cluster = vec![usize::MAX; (w * h) as usize];
    let mut centroids: Vec<Point> = Vec::new();
    for &p in &pixels {
        if !is_junction(p) || cluster[idx(p)] != usize::MAX {
            continue;
        }
        let id = centroids.len();
        let mut stack = vec![p];
        cluster[idx(p)] = id;
        let (mut sx, mut sy, mut k) = (0.0, 0.0, 0.0);
        while let Some(q) = stack.pop() {
            sx += q.0 as f64;
            sy += q.1 as f64;
            k += 1.0;
            for r in bitmap.neighbours(q.0, q.1) {
                if is_junction(r) && cluster[idx(r)] == usize::MAX {
                    cluster[idx(r)] = id;
                    stack.push(r);
                }
            }
        }
        centroids.push((sx / k, sy / k));
    }
    let position = |p: (isize, isize)| -> Point {
        match cluster[idx(p)] {
            usize::MAX => (p.0 as f64, p.1 as f64),
            c => centroids[c],
        }
    };

    let edge = |a: (isize, isize), b: (isize, isize)| {
        if idx(a) < idx(b) {
            (idx(a), idx(b))
        } else {
            (idx(b), idx(a))
        }
    };
    let mut used: HashSet<(usize, usize)> = HashSet::new();
    let mut chains: Vec<Vec<(isize, isize)>> = Vec::new();
    let walk = |start: (isize, isize), next: (isize, isize), used: &mut HashSet<(usize, usize)>| {
        let mut chain = vec![start, next];
        used.insert(edge(start, next));
        let mut cur = next;
        while degree(cur) == 2 {
            let Some(n) = bitmap
                .neighbours(cur.0, cur.1)
                .into_iter()
                .find(|&n| !used.contains(&edge(cur, n)))
            else {
                break;
            };
            used.insert(edge(cur, n));
            chain.push(n);
            cur = n;
        }
        chain
    };
    for &p in &pixels {
        if degree(p) == 2 {
            continue;
        }
        for n in bitmap.neighbours(p.0, p.1) {
            if used.contains(&edge(p, n)) {
                continue;
            }
            // edges inside a junction cluster carry no geometry
            if is_junction(p) && is_junction(n) && cluster[idx(p)] == cluster[idx(n)] {
                used.insert(edge(p, n));
                continue;
            }
            chains.push(walk(p, n, &mut used));
        }
        if degree(p) == 0 {
            chains.push(vec![p]);
        }
    }
    // loops made only of degree-2 pixels
    for &p in &pixels {
        if degree(p) != 2 {
            continue;
        }
        if let Some(n) = bitmap
            .neighbours(p.0, p.1)
            .into_iter()
            .find(|&n| !used.contains(&edge(p, n)))
        {
            chains.push(walk(p, n, &mut used));
        }
    }

    let polylines = chains
        .into_iter()
        .map(|c| {
            let mut pts: Vec<Point> = c.into_iter().map(position).collect();
            pts.dedup();
            simplify(&pts, 1.0)
        })
        .collect();
    Ok(TracedEdges { polylines, bbox })
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return (p.0 - a.0).hypot(p.1 - a.1);
    }
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0);
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

/// Douglas–Peucker: keep a point when it lies farther than `tolerance` from the chord.
pub fn simplify(points: &[Point], tolerance: f64) -> Vec<Point> {
    if points.len() <= 2 {
        return points.to_vec();
    }
    let mut keep = vec![false; points.len()];
    keep[0] = true;
    keep[points.len() - 1] = true;
    let mut stack = vec![(0, points.len() - 1)];
    while let Some((a, b)) = stack.pop() {
        let mut far = (0.0, 0);
        for i in a + 1..b {
            let d = point_segment_distance(points[i], points[a], points[b]);
            if d > far.0 {
                far = (d, i);
            }
        }
        if far.0 > tolerance {
            keep[far.1] = true;
            stack.push((a, far.1));
            stack.push((far.1, b));
        }
    }
    points
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(p, _)| *p)
        .collect()
}
