//! End covers by subdivision, boundary covers over the faces of B0, and the
//! planar filler for the hole left inside a boundary cover.

use std::cmp::Ordering;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::complexity::RunStats;
use crate::field::VectorField;
use crate::interval::{IBox, Interval};
use crate::scaffold::{end_enc, ScaffoldError};

#[derive(Debug, Error)]
pub enum CoverError {
    #[error(transparent)]
    Scaffold(#[from] ScaffoldError),
    #[error("boundary covers need n >= 2; for n = 1 the faces are points, run an end cover on each")]
    Dimension,
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverKind {
    EndCover,
    BoundaryCover,
    FilledBoundary,
}

#[derive(Debug, Clone)]
pub struct CoverBox {
    pub b: IBox,
    pub src: String,
}

#[derive(Debug, Clone)]
pub struct Cover {
    pub kind: CoverKind,
    pub eps: f64,
    pub horizon: f64,
    pub boxes: Vec<CoverBox>,
    pub stats: RunStats,
    /// Under-boxes `ulB0` whose end enclosures were emitted, with their labels.
    pub leaves: Vec<(IBox, String)>,
    pub note: Option<String>,
}

impl Cover {
    pub fn union_contains(&self, p: &[f64]) -> bool {
        self.boxes.iter().any(|b| b.b.contains_point(p))
    }

    pub fn hull(&self) -> Option<IBox> {
        let mut it = self.boxes.iter();
        let first = it.next()?.b.clone();
        Some(it.fold(first, |h, b| h.hull(&b.b)))
    }

    pub fn min_leaf_width(&self) -> Option<f64> {
        self.leaves.iter().map(|(b, _)| b.wmax()).reduce(f64::min)
    }
}

fn cmp_box(a: &IBox, b: &IBox) -> Ordering {
    for (x, y) in a.dims.iter().zip(&b.dims) {
        let o = x.lo.total_cmp(&y.lo).then(x.hi.total_cmp(&y.hi));
        if o != Ordering::Equal {
            return o;
        }
    }
    Ordering::Equal
}

/// Sort canonically and drop boxes contained in another one.
fn canonicalize(mut boxes: Vec<CoverBox>) -> Vec<CoverBox> {
    boxes.sort_by(|a, b| cmp_box(&a.b, &b.b).then_with(|| a.src.cmp(&b.src)));
    boxes.dedup_by(|a, b| cmp_box(&a.b, &b.b) == Ordering::Equal);
    // larger boxes first so a subset test only looks at survivors
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&i, &j| {
        boxes[j].b.volume().total_cmp(&boxes[i].b.volume()).then(i.cmp(&j))
    });
    let mut keep = vec![false; boxes.len()];
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        if !kept.iter().any(|&k| boxes[i].b.subset(&boxes[k].b)) {
            keep[i] = true;
            kept.push(i);
        }
    }
    boxes
        .into_iter()
        .zip(keep)
        .filter_map(|(b, k)| k.then_some(b))
        .collect()
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, CoverError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CoverError::Pool(e.to_string()))
}

struct Solved {
    ul: IBox,
    ol: IBox,
    stats: RunStats,
}

/// Subdivision end cover of `End_f(B0, H)` with boxes of width below `eps`.
pub fn end_cover(
    f: &VectorField,
    b0: &IBox,
    eps: f64,
    horizon: f64,
    workers: usize,
) -> Result<Cover, CoverError> {
    let start = Instant::now();
    let pool = pool(workers)?;
    let mut queue = vec![b0.clone()];
    let mut stats = RunStats::default();
    let mut boxes = Vec::new();
    let mut leaves = Vec::new();
    let mut calls = 0usize;
    // FIFO processed one generation at a time
    while !queue.is_empty() {
        let results: Vec<Result<Solved, ScaffoldError>> = pool.install(|| {
            queue
                .par_iter()
                .map(|b| {
                    let p0 = b.mid();
                    end_enc(f, b, eps, &p0, horizon).map(|r| Solved {
                        ul: r.ul_b0,
                        ol: r.ol_b1,
                        stats: r.stats,
                    })
                })
                .collect()
        });
        let mut next = Vec::new();
        for (b, r) in queue.iter().zip(results) {
            let r = r?;
            calls += 1;
            let label = format!("leaf{calls}");
            stats.merge(&r.stats);
            boxes.push(CoverBox {
                b: r.ol,
                src: label.clone(),
            });
            leaves.push((r.ul.clone(), label));
            if r.ul != *b {
                next.extend(b.subdivide());
            }
        }
        log::info!("end cover generation: {} solved, {} queued", queue.len(), next.len());
        queue = next;
    }
    stats.end_enc_calls = calls;
    stats.wall_time = start.elapsed().as_secs_f64();
    Ok(Cover {
        kind: CoverKind::EndCover,
        eps,
        horizon,
        boxes: canonicalize(boxes),
        stats,
        leaves,
        note: None,
    })
}

/// The `2n` faces of `b`; face `2d` fixes dimension `d` at its lower end.
pub fn faces(b: &IBox) -> Vec<IBox> {
    let mut out = Vec::with_capacity(2 * b.n());
    for d in 0..b.n() {
        for end in [b.dims[d].lo, b.dims[d].hi] {
            let mut f = b.clone();
            f.dims[d] = Interval::point(end);
            out.push(f);
        }
    }
    out
}

/// Union of end covers of the faces of `B0`; covers the boundary of the end set.
pub fn boundary_cover(
    f: &VectorField,
    b0: &IBox,
    eps: f64,
    horizon: f64,
    workers: usize,
) -> Result<Cover, CoverError> {
    if b0.n() < 2 {
        return Err(CoverError::Dimension);
    }
    let start = Instant::now();
    let mut stats = RunStats::default();
    let mut boxes = Vec::new();
    let mut leaves = Vec::new();
    for (i, face) in faces(b0).iter().enumerate() {
        let c = end_cover(f, face, eps, horizon, workers)?;
        stats.merge(&c.stats);
        let tag = |s: &str| format!("face{i}-{s}");
        boxes.extend(c.boxes.into_iter().map(|b| CoverBox {
            src: tag(&b.src),
            b: b.b,
        }));
        leaves.extend(c.leaves.into_iter().map(|(b, s)| (b, tag(&s))));
    }
    stats.wall_time = start.elapsed().as_secs_f64();
    Ok(Cover {
        kind: CoverKind::BoundaryCover,
        eps,
        horizon,
        boxes: canonicalize(boxes),
        stats,
        leaves,
        note: None,
    })
}

#[derive(Debug, Clone)]
pub enum FillOutcome {
    Filled(Cover),
    /// No hole: the cover already contains its interior.
    Unchanged(Cover),
    Skipped(String),
}

/// True if the axis-aligned rectangle `cell` is covered by the union of `boxes`.
fn rect_covered(cell: [f64; 4], boxes: &[[f64; 4]]) -> bool {
    let [x0, x1, y0, y1] = cell;
    let hits: Vec<&[f64; 4]> = boxes
        .iter()
        .filter(|b| b[0] < x1 && b[1] > x0 && b[2] < y1 && b[3] > y0)
        .collect();
    if hits.is_empty() {
        return false;
    }
    let mut xs: Vec<f64> = vec![x0, x1];
    for b in &hits {
        if b[0] > x0 && b[0] < x1 {
            xs.push(b[0]);
        }
        if b[1] > x0 && b[1] < x1 {
            xs.push(b[1]);
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    for w in xs.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mut ys: Vec<(f64, f64)> = hits
            .iter()
            .filter(|h| h[0] <= a && h[1] >= b)
            .map(|h| (h[2], h[3]))
            .collect();
        ys.sort_by(|p, q| p.0.total_cmp(&q.0));
        let mut reach = y0;
        for (lo, hi) in ys {
            if lo > reach {
                break;
            }
            reach = reach.max(hi);
        }
        if reach < y1 {
            return false;
        }
    }
    true
}

/// Fill the single hole of a planar boundary cover.
///
/// The grid cell is `eps/2`, shrunk when needed so that a cell touching a
/// cover box stays within `eps` of the end set.
pub fn filler_2d(cover: &Cover, eps: f64) -> FillOutcome {
    let widest = cover.boxes.iter().map(|b| b.b.wmax()).fold(0.0, f64::max);
    if widest >= eps {
        return FillOutcome::Skipped(format!("cover box of width {widest} is not below epsilon"));
    }
    filler_2d_cell(cover, (eps / 2.0).min(0.99 * (eps - widest)))
}

fn filler_2d_cell(cover: &Cover, cell: f64) -> FillOutcome {
    let n = cover.boxes.first().map(|b| b.b.n()).unwrap_or(0);
    if n != 2 {
        return FillOutcome::Skipped(format!("filler needs n = 2, got n = {n}"));
    }
    let hull = cover.hull().unwrap();
    // two spare rings of cells so the outside is connected
    let x0 = hull.dims[0].lo - 2.0 * cell;
    let y0 = hull.dims[1].lo - 2.0 * cell;
    let nx = ((hull.dims[0].width() / cell).ceil() as usize) + 4;
    let ny = ((hull.dims[1].width() / cell).ceil() as usize) + 4;
    let rects: Vec<[f64; 4]> = cover
        .boxes
        .iter()
        .map(|b| [b.b.dims[0].lo, b.b.dims[0].hi, b.b.dims[1].lo, b.b.dims[1].hi])
        .collect();
    let cell_rect = |i: usize, j: usize| {
        let xa = x0 + i as f64 * cell;
        let ya = y0 + j as f64 * cell;
        [xa, x0 + (i + 1) as f64 * cell, ya, y0 + (j + 1) as f64 * cell]
    };
    // a cell is a wall when it meets the closed union
    let wall: Vec<bool> = (0..nx * ny)
        .into_par_iter()
        .map(|k| {
            let c = cell_rect(k % nx, k / nx);
            rects
                .iter()
                .any(|b| b[0] <= c[1] && b[1] >= c[0] && b[2] <= c[3] && b[3] >= c[2])
        })
        .collect();
    let idx = |i: usize, j: usize| j * nx + i;
    let neighbours = |i: usize, j: usize| {
        let mut v = Vec::with_capacity(8);
        for dj in -1i64..=1 {
            for di in -1i64..=1 {
                if di == 0 && dj == 0 {
                    continue;
                }
                let (a, b) = (i as i64 + di, j as i64 + dj);
                if a >= 0 && b >= 0 && (a as usize) < nx && (b as usize) < ny {
                    v.push((a as usize, b as usize));
                }
            }
        }
        v
    };
    // label: 0 unvisited, 1 outside, 2.. hole components
    let mut label = vec![0usize; nx * ny];
    let flood = |seed: (usize, usize), tag: usize, label: &mut Vec<usize>| {
        let mut stack = vec![seed];
        label[idx(seed.0, seed.1)] = tag;
        let mut cells = Vec::new();
        while let Some((i, j)) = stack.pop() {
            cells.push((i, j));
            for (a, b) in neighbours(i, j) {
                let k = idx(a, b);
                if !wall[k] && label[k] == 0 {
                    label[k] = tag;
                    stack.push((a, b));
                }
            }
        }
        cells
    };
    flood((0, 0), 1, &mut label);
    let mut holes: Vec<Vec<(usize, usize)>> = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let k = idx(i, j);
            if !wall[k] && label[k] == 0 {
                let tag = holes.len() + 2;
                holes.push(flood((i, j), tag, &mut label));
            }
        }
    }
    match holes.len() {
        0 => {
            let mut c = cover.clone();
            c.note = Some("interior empty".into());
            FillOutcome::Unchanged(c)
        }
        1 => {
            let mut c = cover.clone();
            c.kind = CoverKind::FilledBoundary;
            // walls not reached from outside may hold uncovered interior points
            let mut cells = holes[0].clone();
            cells.extend(
                (0..nx * ny)
                    .filter(|&k| wall[k] && label[k] == 0)
                    .map(|k| (k % nx, k / nx))
                    .filter(|&(i, j)| !rect_covered(cell_rect(i, j), &rects)),
            );
            cells.sort_unstable();
            for &(i, j) in &cells {
                let r = cell_rect(i, j);
                c.boxes.push(CoverBox {
                    b: IBox::new(vec![Interval::new(r[0], r[1]), Interval::new(r[2], r[3])]),
                    src: "filler".into(),
                });
            }
            c.boxes = canonicalize(c.boxes);
            FillOutcome::Filled(c)
        }
        k => {
            log::info!("filler holes: {:?}", holes.iter().map(|h| (h.len(), h[0])).collect::<Vec<_>>());
            FillOutcome::Skipped(format!("epsilon not small enough: {k} holes"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(x0: f64, x1: f64, y0: f64, y1: f64) -> CoverBox {
        CoverBox {
            b: IBox::new(vec![Interval::new(x0, x1), Interval::new(y0, y1)]),
            src: "t".into(),
        }
    }

    fn cover_of(boxes: Vec<CoverBox>) -> Cover {
        Cover {
            kind: CoverKind::BoundaryCover,
            eps: 1.0,
            horizon: 1.0,
            boxes,
            stats: RunStats::default(),
            leaves: vec![],
            note: None,
        }
    }

    /// Ring of boxes of width 0.25 around `[0,4]^2`.
    fn annulus() -> Cover {
        let mut v = Vec::new();
        for k in 0..18 {
            let a = -0.25 + 0.25 * k as f64;
            v.push(rect(a, a + 0.25, -0.25, 0.0));
            v.push(rect(a, a + 0.25, 4.0, 4.25));
            v.push(rect(-0.25, 0.0, a, a + 0.25));
            v.push(rect(4.0, 4.25, a, a + 0.25));
        }
        cover_of(v)
    }

    #[test]
    fn canonical_prune_drops_contained_boxes() {
        let c = canonicalize(vec![rect(0.0, 1.0, 0.0, 1.0), rect(0.2, 0.4, 0.2, 0.4), rect(0.0, 1.0, 0.0, 1.0)]);
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn rect_coverage_by_pieces() {
        let pieces = [[0.0, 0.5, 0.0, 1.0], [0.5, 1.0, 0.0, 0.6], [0.4, 1.0, 0.5, 1.0]];
        assert!(rect_covered([0.0, 1.0, 0.0, 1.0], &pieces));
        assert!(!rect_covered([0.0, 1.0, 0.0, 1.1], &pieces));
    }

    #[test]
    fn filler_tiles_annulus_hole() {
        let c = annulus();
        let eps = 0.5;
        let ring: Vec<[f64; 4]> = c
            .boxes
            .iter()
            .map(|b| [b.b.dims[0].lo, b.b.dims[0].hi, b.b.dims[1].lo, b.b.dims[1].hi])
            .collect();
        match filler_2d(&c, eps) {
            FillOutcome::Filled(f) => {
                assert_eq!(f.kind, CoverKind::FilledBoundary);
                let fill: Vec<&CoverBox> = f.boxes.iter().filter(|b| b.src == "filler").collect();
                assert!(!fill.is_empty());
                let outer = IBox::new(vec![Interval::new(-0.25, 4.25), Interval::new(-0.25, 4.25)]);
                for b in &fill {
                    assert!(b.b.wmax() < eps);
                    // inside the ring, or a wall cell touching it
                    let r = [b.b.dims[0].lo, b.b.dims[0].hi, b.b.dims[1].lo, b.b.dims[1].hi];
                    let touches = ring.iter().any(|q| q[0] <= r[1] && q[1] >= r[0] && q[2] <= r[3] && q[3] >= r[2]);
                    assert!(b.b.subset(&outer) || touches, "{:?}", b.b);
                }
                // every interior point is covered
                for i in 0..=40 {
                    for j in 0..=40 {
                        let p = [i as f64 / 10.0, j as f64 / 10.0];
                        assert!(f.union_contains(&p), "{p:?}");
                    }
                }
                // points well outside stay uncovered
                assert!(!f.union_contains(&[-0.8, 2.0]));
                assert!(!f.union_contains(&[2.0, 4.8]));
            }
            other => panic!("expected fill, got {other:?}"),
        }
    }

    #[test]
    fn solid_block_is_unchanged() {
        let c = cover_of(vec![rect(0.0, 1.0, 0.0, 1.0), rect(1.0, 2.0, 0.0, 1.0)]);
        match filler_2d(&c, 1.5) {
            FillOutcome::Unchanged(c) => assert_eq!(c.note.as_deref(), Some("interior empty")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn two_holes_are_skipped() {
        let mut v = annulus().boxes;
        // a wall through the middle splits the hole in two
        for k in 0..16 {
            let a = 0.25 * k as f64;
            v.push(rect(1.875, 2.125, a, a + 0.25));
        }
        match filler_2d(&cover_of(v), 0.5) {
            FillOutcome::Skipped(msg) => assert!(msg.contains("not small enough")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wide_boxes_are_skipped() {
        assert!(matches!(filler_2d(&annulus(), 0.25), FillOutcome::Skipped(_)));
    }

    #[test]
    fn faces_are_degenerate_boxes() {
        let b = IBox::new(vec![Interval::new(0.0, 1.0), Interval::new(2.0, 3.0)]);
        let fs = faces(&b);
        assert_eq!(fs.len(), 4);
        assert_eq!(fs[0].dim(), 1);
        assert_eq!(fs[3].dims[1], Interval::point(3.0));
    }

    #[test]
    fn decay_cover_is_one_call() {
        let f = VectorField::parse(&["x"], &["-x"], &[], 20).unwrap();
        let b0 = IBox::new(vec![Interval::new(0.9, 1.1)]);
        let c = end_cover(&f, &b0, 1.0, 1.0, 1).unwrap();
        assert_eq!(c.stats.end_enc_calls, 1);
        assert_eq!(c.boxes.len(), 1);
        assert!(c.boxes[0].b.wmax() < 1.0);
        assert!(boundary_cover(&f, &b0, 1.0, 1.0, 1).is_err());
    }
}
