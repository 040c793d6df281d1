//! Brute-force planar reference on a uniform grid of cell centres.
//!
//! Everything here is evaluated directly from distances, with its own bucket
//! index, so it can serve as an independent check of the ray pipeline.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagram::{DiagramTuple, Problem};
use crate::dominance::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, NormSpec};

/// A `resolution x resolution` grid over a planar box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    bbox: BoundingBox,
    resolution: usize,
}

impl GridSpec {
    pub fn new(bbox: BoundingBox, resolution: usize) -> Result<Self> {
        if bbox.dim() != 2 {
            return Err(Error::Dimension {
                expected: 2,
                found: bbox.dim(),
            });
        }
        if resolution < 32 {
            return Err(Error::param(format!("grid resolution must be >= 32, got {resolution}")));
        }
        Ok(GridSpec { bbox, resolution })
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn cell_count(&self) -> usize {
        self.resolution * self.resolution
    }

    pub fn cell_size(&self) -> [f64; 2] {
        let lo = self.bbox.lo().coords();
        let hi = self.bbox.hi().coords();
        let n = self.resolution as f64;
        [(hi[0] - lo[0]) / n, (hi[1] - lo[1]) / n]
    }

    /// Euclidean cell diagonal, the slack unit of grid comparisons.
    pub fn cell_diagonal(&self) -> f64 {
        let [hx, hy] = self.cell_size();
        hx.hypot(hy)
    }

    /// Centre of cell `idx = iy * resolution + ix`.
    pub fn center(&self, idx: usize) -> [f64; 2] {
        let (ix, iy) = (idx % self.resolution, idx / self.resolution);
        let lo = self.bbox.lo().coords();
        let [hx, hy] = self.cell_size();
        [lo[0] + (ix as f64 + 0.5) * hx, lo[1] + (iy as f64 + 0.5) * hy]
    }

    fn neighbours4(&self, idx: usize) -> impl Iterator<Item = usize> {
        let n = self.resolution;
        let (ix, iy) = (idx % n, idx / n);
        [
            (ix > 0).then(|| idx - 1),
            (ix + 1 < n).then(|| idx + 1),
            (iy > 0).then(|| idx - n),
            (iy + 1 < n).then(|| idx + n),
        ]
        .into_iter()
        .flatten()
    }

    fn neighbours8(&self, idx: usize) -> impl Iterator<Item = usize> {
        let n = self.resolution as isize;
        let (ix, iy) = (idx as isize % n, idx as isize / n);
        (-1..=1)
            .flat_map(move |dy| (-1..=1).map(move |dx| (ix + dx, iy + dy)))
            .filter(move |&(x, y)| x >= 0 && y >= 0 && x < n && y < n && (x, y) != (ix, iy))
            .map(move |(x, y)| (y * n + x) as usize)
    }
}

/// Per-component membership of every cell centre.
#[derive(Clone, Debug, PartialEq)]
pub struct MembershipGrid {
    spec: GridSpec,
    layers: Vec<Vec<bool>>,
}

impl MembershipGrid {
    pub fn new(spec: GridSpec, layers: Vec<Vec<bool>>) -> Result<Self> {
        if let Some(l) = layers.iter().find(|l| l.len() != spec.cell_count()) {
            return Err(Error::domain(format!(
                "layer has {} cells, grid has {}",
                l.len(),
                spec.cell_count()
            )));
        }
        Ok(MembershipGrid { spec, layers })
    }

    /// `k` layers with no labels.
    pub fn empty(spec: GridSpec, k: usize) -> Self {
        let n = spec.cell_count();
        MembershipGrid {
            spec,
            layers: vec![vec![false; n]; k],
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn components(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, k: usize) -> &[bool] {
        &self.layers[k]
    }

    pub fn contains(&self, k: usize, idx: usize) -> bool {
        self.layers[k][idx]
    }

    pub fn label_count(&self, idx: usize) -> usize {
        self.layers.iter().filter(|l| l[idx]).count()
    }

    pub fn count(&self, k: usize) -> usize {
        self.layers[k].iter().filter(|&&b| b).count()
    }

    /// Labeled fraction of component `k`.
    pub fn fraction(&self, k: usize) -> f64 {
        self.count(k) as f64 / self.spec.cell_count() as f64
    }

    /// Grown by one cell in all eight directions.
    pub fn dilated(&self) -> MembershipGrid {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                (0..l.len())
                    .map(|i| l[i] || self.spec.neighbours8(i).any(|j| l[j]))
                    .collect()
            })
            .collect();
        MembershipGrid {
            spec: self.spec.clone(),
            layers,
        }
    }

    /// Cells of component `k` here that `other` lacks.
    pub fn excess_cells(&self, k: usize, other: &MembershipGrid) -> usize {
        self.layers[k]
            .iter()
            .zip(&other.layers[k])
            .filter(|(a, b)| **a && !**b)
            .count()
    }

    /// Labeled cells of `k` with an unlabeled 4-neighbour.
    pub fn boundary_cells(&self, k: usize) -> Vec<usize> {
        let l = &self.layers[k];
        (0..l.len())
            .filter(|&i| l[i] && self.spec.neighbours4(i).any(|j| !l[j]))
            .collect()
    }

    /// Centres of the cells of component `k`.
    pub fn layer_cloud(&self, k: usize) -> PointCloud {
        let mut c = PointCloud::new(2);
        for (i, _) in self.layers[k].iter().enumerate().filter(|(_, b)| **b) {
            c.push(&self.spec.center(i));
        }
        c
    }

    /// Binary PGM, one byte per cell: 255 minus 64 per label, rows from the
    /// top of the box down.
    pub fn to_pgm(&self) -> Vec<u8> {
        let n = self.spec.resolution;
        let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
        for iy in (0..n).rev() {
            for ix in 0..n {
                let c = self.label_count(iy * n + ix).min(3) as u8;
                out.push(255 - 64 * c);
            }
        }
        out
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_pgm()).map_err(|e| Error::io(path, e))
    }

    fn same_spec(&self, other: &MembershipGrid) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::domain("grids have different specs"));
        }
        Ok(())
    }
}

/// Uniform buckets over a planar point set. Queries scan rings of buckets
/// outward and stop once the Euclidean gap, scaled by the norm's lower
/// bound, exceeds what is being looked for.
struct BucketIndex {
    lo: [f64; 2],
    cell: f64,
    nx: usize,
    ny: usize,
    starts: Vec<usize>,
    pts: Vec<[f64; 2]>,
    // Chebyshev bucket distance to the nearest nonempty bucket
    skip: Vec<usize>,
    // point counts: row_pref[y * (nx + 1) + x] over buckets (0..x, y)
    row_pref: Vec<usize>,
    col_pref: Vec<usize>,
    c: f64,
}

impl BucketIndex {
    fn new(points: &[[f64; 2]], norm: &NormSpec) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        if points.is_empty() {
            lo = [0.0; 2];
            hi = [0.0; 2];
        }
        let ext = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
        let per_axis = ((points.len() as f64).sqrt().ceil() as usize).clamp(1, 1024);
        let cell = ext / per_axis as f64;
        let nx = (((hi[0] - lo[0]) / cell).floor() as usize + 1).min(per_axis + 1);
        let ny = (((hi[1] - lo[1]) / cell).floor() as usize + 1).min(per_axis + 1);
        let mut idx = BucketIndex {
            lo,
            cell,
            nx,
            ny,
            starts: Vec::new(),
            pts: Vec::new(),
            skip: Vec::new(),
            row_pref: Vec::new(),
            col_pref: Vec::new(),
            c: norm.euclidean_lower_bound(2),
        };
        let mut counts = vec![0usize; nx * ny + 1];
        let keys: Vec<usize> = points
            .iter()
            .map(|p| {
                let (bx, by) = idx.bucket_of(p);
                by * nx + bx
            })
            .collect();
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for i in 0..nx * ny {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut pts = vec![[0.0; 2]; points.len()];
        for (p, &k) in points.iter().zip(&keys) {
            pts[fill[k]] = *p;
            fill[k] += 1;
        }
        idx.starts = counts;
        idx.pts = pts;
        idx.skip = idx.empty_distance();
        idx.row_pref = vec![0; ny * (nx + 1)];
        idx.col_pref = vec![0; nx * (ny + 1)];
        for y in 0..ny {
            for x in 0..nx {
                let c = idx.bucket_len(y * nx + x);
                idx.row_pref[y * (nx + 1) + x + 1] = idx.row_pref[y * (nx + 1) + x] + c;
                idx.col_pref[x * (ny + 1) + y + 1] = idx.col_pref[x * (ny + 1) + y] + c;
            }
        }
        idx
    }

    fn bucket_len(&self, b: usize) -> usize {
        self.starts[b + 1] - self.starts[b]
    }

    fn bucket_of(&self, p: &[f64; 2]) -> (usize, usize) {
        let f = |v: f64, lo: f64, n: usize| (((v - lo) / self.cell).floor().max(0.0) as usize).min(n - 1);
        (f(p[0], self.lo[0], self.nx), f(p[1], self.lo[1], self.ny))
    }

    fn empty_distance(&self) -> Vec<usize> {
        let (nx, ny) = (self.nx, self.ny);
        let mut dist = vec![usize::MAX; nx * ny];
        let mut queue = VecDeque::new();
        for b in 0..nx * ny {
            if self.starts[b + 1] > self.starts[b] {
                dist[b] = 0;
                queue.push_back(b);
            }
        }
        while let Some(b) = queue.pop_front() {
            let (bx, by) = ((b % nx) as isize, (b / nx) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (x, y) = (bx + dx, by + dy);
                    if x < 0 || y < 0 || x >= nx as isize || y >= ny as isize {
                        continue;
                    }
                    let j = y as usize * nx + x as usize;
                    if dist[j] == usize::MAX {
                        dist[j] = dist[b] + 1;
                        queue.push_back(j);
                    }
                }
            }
        }
        dist
    }

    fn ring(&self, bx: usize, by: usize, k: usize, mut visit: impl FnMut(&[[f64; 2]]) -> bool) -> bool {
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        let (bx, by, k) = (bx as isize, by as isize, k as isize);
        let mut bucket = |b: usize| -> bool { visit(&self.pts[self.starts[b]..self.starts[b + 1]]) };
        let (x0, x1) = ((bx - k).max(0), (bx + k).min(nx - 1));
        for y in [by - k, by + k] {
            if y < 0 || y >= ny || (k == 0 && y != by) {
                continue;
            }
            let row = y as usize * (self.nx + 1);
            if self.row_pref[row + x1 as usize + 1] == self.row_pref[row + x0 as usize] {
                continue;
            }
            for x in x0..=x1 {
                let b = y as usize * self.nx + x as usize;
                if self.bucket_len(b) > 0 && bucket(b) {
                    return true;
                }
            }
            if k == 0 {
                return false;
            }
        }
        let (y0, y1) = ((by - k + 1).max(0), (by + k - 1).min(ny - 1));
        if y0 > y1 {
            return false;
        }
        for x in [bx - k, bx + k] {
            if x < 0 || x >= nx {
                continue;
            }
            let col = x as usize * (self.ny + 1);
            if self.col_pref[col + y1 as usize + 1] == self.col_pref[col + y0 as usize] {
                continue;
            }
            for y in y0..=y1 {
                let b = y as usize * self.nx + x as usize;
                if self.bucket_len(b) > 0 && bucket(b) {
                    return true;
                }
            }
        }
        false
    }

    /// Norm distance below which ring `k` cannot contain anything.
    fn ring_bound(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.c * (k - 1) as f64 * self.cell
        }
    }

    fn nearest(&self, x: &[f64; 2], norm: &NormSpec) -> f64 {
        let mut best = f64::INFINITY;
        if self.pts.is_empty() {
            return best;
        }
        let (bx, by) = self.bucket_of(x);
        let first = self.skip[by * self.nx + bx];
        for k in first..=self.nx.max(self.ny) {
            if self.ring_bound(k) >= best {
                break;
            }
            self.ring(bx, by, k, |pts| {
                for p in pts {
                    best = best.min(norm.dist(x, p));
                }
                false
            });
        }
        best
    }

    /// Some point strictly closer than `r`?
    fn any_within(&self, x: &[f64; 2], r: f64, norm: &NormSpec) -> bool {
        if self.pts.is_empty() {
            return false;
        }
        let (bx, by) = self.bucket_of(x);
        let first = self.skip[by * self.nx + bx];
        for k in first..=self.nx.max(self.ny) {
            if self.ring_bound(k) >= r {
                return false;
            }
            if self.ring(bx, by, k, |pts| pts.iter().any(|p| norm.dist(x, p) < r)) {
                return true;
            }
        }
        false
    }
}

fn planar_points(cloud: &PointCloud) -> Result<Vec<[f64; 2]>> {
    if cloud.dim() != 2 {
        return Err(Error::Dimension {
            expected: 2,
            found: cloud.dim(),
        });
    }
    Ok(cloud.points().map(|p| [p[0], p[1]]).collect())
}

/// Cells whose centre `x` satisfies `d(x, P) <= d(x, A)`, compared exactly.
pub fn grid_dom(p: &PointCloud, a: &PointCloud, spec: &GridSpec, norm: &NormSpec) -> Result<MembershipGrid> {
    if p.is_empty() || a.is_empty() {
        return Err(Error::domain("grid dominance needs nonempty clouds"));
    }
    norm.check_dim(2)?;
    let pi = BucketIndex::new(&planar_points(p)?, norm);
    let ai = BucketIndex::new(&planar_points(a)?, norm);
    let layer = (0..spec.cell_count())
        .into_par_iter()
        .map(|i| {
            let x = spec.center(i);
            !ai.any_within(&x, pi.nearest(&x, norm), norm)
        })
        .collect();
    MembershipGrid::new(spec.clone(), vec![layer])
}

/// `Dom` on grids: component `k` is the set of cell centres at least as close
/// to `P_k` as to the cells (and sites) of every other component.
///
/// Only boundary cells of the competitors are indexed. For an unlabeled query
/// cell the nearest labeled cell can always be pushed, one step at a time
/// toward the query, onto a boundary cell without increasing any coordinate
/// gap, so the distance is unchanged. Query cells labeled by a competitor
/// are at distance zero from it.
pub fn grid_dom_map(prob: &Problem, current: &MembershipGrid) -> Result<MembershipGrid> {
    if prob.dim() != 2 {
        return Err(Error::Dimension {
            expected: 2,
            found: prob.dim(),
        });
    }
    if current.components() != prob.k() {
        return Err(Error::domain(format!(
            "grid has {} components, problem has {} sites",
            current.components(),
            prob.k()
        )));
    }
    if prob.k() < 2 {
        return Err(Error::domain("no competing components"));
    }
    let spec = &current.spec;
    let norm = prob.norm();
    let boundaries: Vec<Vec<[f64; 2]>> = (0..prob.k())
        .map(|j| {
            let mut pts: Vec<[f64; 2]> = current.boundary_cells(j).into_iter().map(|i| spec.center(i)).collect();
            pts.extend(prob.sites()[j].points().iter().map(|p| [p.coords()[0], p.coords()[1]]));
            pts
        })
        .collect();
    let layers = (0..prob.k())
        .map(|k| {
            let own: Vec<[f64; 2]> = prob.sites()[k].points().iter().map(|p| [p.coords()[0], p.coords()[1]]).collect();
            let own = BucketIndex::new(&own, norm);
            let others: Vec<[f64; 2]> = boundaries
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .flat_map(|(_, b)| b.iter().copied())
                .collect();
            let others = BucketIndex::new(&others, norm);
            (0..spec.cell_count())
                .into_par_iter()
                .map(|i| {
                    let x = spec.center(i);
                    let dp = own.nearest(&x, norm);
                    let covered = (0..prob.k()).any(|j| j != k && current.layers[j][i]);
                    if covered {
                        dp <= 0.0
                    } else {
                        !others.any_within(&x, dp, norm)
                    }
                })
                .collect()
        })
        .collect();
    MembershipGrid::new(spec.clone(), layers)
}

/// Cell centres of component `k` together with its site points.
pub fn grid_component_cloud(prob: &Problem, grid: &MembershipGrid, k: usize) -> PointCloud {
    let mut c = grid.layer_cloud(k);
    for p in prob.sites()[k].points() {
        c.push(p.coords());
    }
    c
}

/// Hausdorff distance between component `k` of two grids, each taken as its
/// cell centres plus the site points. Exact, using only boundary cells as
/// targets by the same argument as in [`grid_dom_map`].
pub fn grid_hausdorff(prob: &Problem, a: &MembershipGrid, b: &MembershipGrid, k: usize) -> Result<f64> {
    a.same_spec(b)?;
    let norm = prob.norm();
    let spec = &a.spec;
    let sites: Vec<[f64; 2]> = prob.sites()[k].points().iter().map(|p| [p.coords()[0], p.coords()[1]]).collect();
    let directed = |from: &MembershipGrid, to: &MembershipGrid| {
        let mut targets: Vec<[f64; 2]> = to.boundary_cells(k).into_iter().map(|i| spec.center(i)).collect();
        targets.extend_from_slice(&sites);
        let idx = BucketIndex::new(&targets, norm);
        let cells = (0..spec.cell_count())
            .into_par_iter()
            .filter(|&i| from.layers[k][i] && !to.layers[k][i])
            .map(|i| idx.nearest(&spec.center(i), norm))
            .reduce(|| 0.0, f64::max);
        let points = sites
            .iter()
            .map(|x| idx.nearest(x, norm))
            .fold(0.0, f64::max);
        cells.max(points)
    };
    Ok(directed(a, b).max(directed(b, a)))
}

/// Inner and outer grids of the grid-based iteration.
#[derive(Clone, Debug)]
pub struct GridTrace {
    pub inner: Vec<MembershipGrid>,
    pub outer: Vec<MembershipGrid>,
    /// `gaps[n][k]`: Hausdorff distance between the inner and outer grids.
    pub gaps: Vec<Vec<f64>>,
}

impl GridTrace {
    pub fn max_gap(&self, n: usize) -> f64 {
        self.gaps[n].iter().copied().fold(0.0, f64::max)
    }
}

/// Runs `iters` inner/outer rounds on the grid starting from the bare sites.
/// Stops early once the outer grid repeats.
pub fn grid_iterate(prob: &Problem, spec: &GridSpec, iters: usize) -> Result<GridTrace> {
    let gap = |i: &MembershipGrid, o: &MembershipGrid| -> Result<Vec<f64>> {
        (0..prob.k()).map(|k| grid_hausdorff(prob, i, o, k)).collect()
    };
    let i0 = MembershipGrid::empty(spec.clone(), prob.k());
    let o0 = grid_dom_map(prob, &i0)?;
    let mut trace = GridTrace {
        gaps: vec![gap(&i0, &o0)?],
        inner: vec![i0],
        outer: vec![o0],
    };
    for _ in 0..iters {
        let prev = trace.outer.last().expect("nonempty");
        let inner = grid_dom_map(prob, prev)?;
        let outer = grid_dom_map(prob, &inner)?;
        let repeat = &outer == prev;
        trace.gaps.push(gap(&inner, &outer)?);
        trace.inner.push(inner);
        trace.outer.push(outer);
        if repeat {
            break;
        }
    }
    Ok(trace)
}

/// Exact Hausdorff distance between two planar clouds.
pub fn hausdorff(a: &PointCloud, b: &PointCloud, norm: &NormSpec) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain("Hausdorff distance of an empty cloud"));
    }
    norm.check_dim(2)?;
    let pa = planar_points(a)?;
    let pb = planar_points(b)?;
    let directed = |from: &[[f64; 2]], to: &[[f64; 2]]| {
        let idx = BucketIndex::new(to, norm);
        from.par_iter().map(|x| idx.nearest(x, norm)).reduce(|| 0.0, f64::max)
    };
    Ok(directed(&pa, &pb).max(directed(&pb, &pa)))
}

/// Fraction of cells labeled `k` in exactly one of the grids.
pub fn symdiff_fraction(a: &MembershipGrid, b: &MembershipGrid, k: usize) -> Result<f64> {
    a.same_spec(b)?;
    if k >= a.components() || k >= b.components() {
        return Err(Error::domain(format!("component {k} out of range")));
    }
    let diff = a.layers[k].iter().zip(&b.layers[k]).filter(|(x, y)| x != y).count();
    Ok(diff as f64 / a.spec.cell_count() as f64)
}

/// Sign of `d(x, P) - d(x, A)` at a cell centre.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellClass {
    StrictIn,
    Equal,
    StrictOut,
}

/// Outcome of [`boundary_bisector_check`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BisectorReport {
    pub pass: bool,
    /// Fraction of cells in the equality band.
    pub band_fraction: f64,
    /// Cells on the boundary of the rasterized dominance region.
    pub boundary_cells: usize,
    /// Boundary cells more than one cell away from the bisector.
    pub stray_boundary_cells: usize,
    /// Equality cells without both a strict-in and a strict-out cell
    /// within one cell, i.e. where the band has interior.
    pub thick_band_cells: usize,
    pub tolerance: f64,
}

/// Compares the boundary of `dom(P, A)` on the grid with the bisector
/// `d(x, P) = d(x, A)`.
///
/// Cells are classified with a tolerance of `1e-9 * diameter`. The bisector
/// is made of the equality cells and of strict cells next to a strict cell
/// of the opposite sign. The check passes when every boundary cell of the
/// rasterized region is within one cell of the bisector and the equality
/// band has no interior.
pub fn boundary_bisector_check(
    p: &PointCloud,
    a: &PointCloud,
    spec: &GridSpec,
    norm: &NormSpec,
) -> Result<BisectorReport> {
    if p.is_empty() || a.is_empty() {
        return Err(Error::domain("bisector check needs nonempty clouds"));
    }
    norm.check_dim(2)?;
    let tol = 1e-9 * spec.bbox.diameter();
    let pi = BucketIndex::new(&planar_points(p)?, norm);
    let ai = BucketIndex::new(&planar_points(a)?, norm);
    let diffs: Vec<f64> = (0..spec.cell_count())
        .into_par_iter()
        .map(|i| {
            let x = spec.center(i);
            pi.nearest(&x, norm) - ai.nearest(&x, norm)
        })
        .collect();
    let class: Vec<CellClass> = diffs
        .iter()
        .map(|&f| {
            if f < -tol {
                CellClass::StrictIn
            } else if f > tol {
                CellClass::StrictOut
            } else {
                CellClass::Equal
            }
        })
        .collect();
    let member: Vec<bool> = diffs.iter().map(|&f| f <= 0.0).collect();
    let opposite = |c: CellClass, d: CellClass| {
        matches!(
            (c, d),
            (CellClass::StrictIn, CellClass::StrictOut) | (CellClass::StrictOut, CellClass::StrictIn)
        )
    };
    let bisector: Vec<bool> = (0..class.len())
        .map(|i| class[i] == CellClass::Equal || spec.neighbours4(i).any(|j| opposite(class[i], class[j])))
        .collect();
    let near_bisector = |i: usize| bisector[i] || spec.neighbours8(i).any(|j| bisector[j]);

    let boundary: Vec<usize> = (0..member.len())
        .filter(|&i| member[i] && spec.neighbours4(i).any(|j| !member[j]))
        .collect();
    let stray = boundary.iter().filter(|&&i| !near_bisector(i)).count();
    let band: Vec<usize> = (0..class.len()).filter(|&i| class[i] == CellClass::Equal).collect();
    let thick = band
        .iter()
        .filter(|&&i| {
            let near = |c: CellClass| spec.neighbours8(i).any(|j| class[j] == c);
            !(near(CellClass::StrictIn) && near(CellClass::StrictOut))
        })
        .count();
    Ok(BisectorReport {
        pass: stray == 0 && thick == 0,
        band_fraction: band.len() as f64 / spec.cell_count() as f64,
        boundary_cells: boundary.len(),
        stray_boundary_cells: stray,
        thick_band_cells: thick,
        tolerance: tol,
    })
}

/// Cells whose centre lies in the ray fans of each planar region.
pub fn rasterize_tuple(tuple: &DiagramTuple, spec: &GridSpec) -> Result<MembershipGrid> {
    let layers = tuple
        .regions
        .iter()
        .map(|r| {
            if r.dim() != 2 {
                return Err(Error::Dimension {
                    expected: 2,
                    found: r.dim(),
                });
            }
            let fans = r.planar_fans()?;
            Ok((0..spec.cell_count())
                .into_par_iter()
                .map(|i| fans.contains(&spec.center(i)))
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    MembershipGrid::new(spec.clone(), layers)
}
