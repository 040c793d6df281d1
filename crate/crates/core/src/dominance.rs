//! Dominance regions `dom(P, A)` as ray bundles.
//!
//! A region is stored as rays shot from every point of its site. Each ray ends
//! at the last parameter where the moving point is still at least as close to
//! the ray's source as to the competing cloud `A`. For a single source under
//! a strictly convex norm the in-region parameters form a prefix of the ray,
//! so the endpoint is found by bisection.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{box_exit_raw, euclid_dist, segment_dist_raw, BoundingBox, NormSpec, Vector};
use crate::spatial::KdTree;

/// One generator `P_k`: a nonempty finite point set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub id: usize,
    points: Vec<Vector>,
}

impl Site {
    pub fn new(id: usize, points: Vec<Vector>) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::param(format!("site {id} has no points")))?;
        if let Some(bad) = points.iter().find(|p| p.dim() != first.dim()) {
            return Err(Error::Dimension {
                expected: first.dim(),
                found: bad.dim(),
            });
        }
        Ok(Site { id, points })
    }

    pub fn points(&self) -> &[Vector] {
        &self.points
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn cloud(&self) -> PointCloud {
        PointCloud::from_vectors(&self.points)
    }
}

/// A finite sample of a region, stored as a flat coordinate buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize) -> Self {
        PointCloud {
            dim,
            coords: Vec::new(),
        }
    }

    pub fn from_vectors(points: &[Vector]) -> Self {
        let dim = points.first().map_or(2, Vector::dim);
        let mut c = PointCloud::new(dim);
        for p in points {
            c.push(p.coords());
        }
        c
    }

    pub fn push(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.dim, "point dimension");
        self.coords.extend_from_slice(p);
    }

    pub fn extend(&mut self, other: &PointCloud) {
        assert_eq!(self.dim, other.dim, "cloud dimension");
        self.coords.extend_from_slice(&other.coords);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_vectors(&self) -> Vec<Vector> {
        self.points().map(|p| Vector::from_raw(p.to_vec())).collect()
    }

    pub(crate) fn raw(&self) -> &[f64] {
        &self.coords
    }

    /// Concatenation of several clouds, in order.
    pub fn union<'a>(dim: usize, parts: impl IntoIterator<Item = &'a PointCloud>) -> PointCloud {
        let mut out = PointCloud::new(dim);
        for p in parts {
            out.extend(p);
        }
        out
    }
}

/// How distance-to-cloud queries are answered. Both are exact.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Acceleration {
    /// Full scan of the competing cloud for every query.
    Direct,
    /// kd-tree with norm-aware pruning.
    #[default]
    KdTree,
}

/// Distance oracle for the competing set `A` of a dominance computation.
pub(crate) enum CompetitorIndex<'a> {
    Direct(&'a PointCloud),
    Tree(KdTree),
}

impl<'a> CompetitorIndex<'a> {
    pub(crate) fn new(cloud: &'a PointCloud, accel: Acceleration) -> Self {
        match accel {
            Acceleration::Direct => CompetitorIndex::Direct(cloud),
            Acceleration::KdTree => CompetitorIndex::Tree(KdTree::new(cloud.dim(), cloud.raw())),
        }
    }

    pub(crate) fn nearest(&self, x: &[f64], norm: &NormSpec) -> f64 {
        match self {
            CompetitorIndex::Direct(c) => c.points().map(|a| norm.dist(x, a)).fold(f64::INFINITY, f64::min),
            CompetitorIndex::Tree(t) => t.nearest(x, norm),
        }
    }

    /// Is some competitor strictly closer to `x` than `r`?
    #[inline]
    pub(crate) fn any_within(&self, x: &[f64], r: f64, norm: &NormSpec) -> bool {
        match self {
            // the direct route deliberately scans everything
            CompetitorIndex::Direct(_) => self.nearest(x, norm) < r,
            CompetitorIndex::Tree(t) => t.any_within(x, r, norm),
        }
    }
}

/// Tuning of a single dominance-region computation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DomParams {
    /// Width of the final bisection bracket.
    pub eps: f64,
    /// Number of angular refinement passes (planar only).
    pub adaptive_depth: usize,
    /// Adjacent endpoints farther apart than this get a ray in between.
    pub refine_threshold: f64,
    pub acceleration: Acceleration,
}

impl DomParams {
    /// Defaults for `ray_count` rays in `bbox`: eps = 1e-6 diameter,
    /// threshold = 2 diameter / ray_count, two refinement passes.
    pub fn for_box(bbox: &BoundingBox, ray_count: usize) -> Self {
        let diam = bbox.diameter();
        DomParams {
            eps: 1e-6 * diam,
            adaptive_depth: 2,
            refine_threshold: 2.0 * diam / ray_count.max(1) as f64,
            acceleration: Acceleration::KdTree,
        }
    }
}

/// A single ray `source + t * direction`, `0 <= t <= t_end`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ray {
    /// Index into the owning region's sources.
    pub source: usize,
    pub direction: Vector,
    pub t_end: f64,
}

/// A dominance region as a union of rays from its site points.
///
/// Rays are grouped by source; within a group they are ordered by angle in
/// the plane and by generation order in higher dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionRays {
    pub site_id: usize,
    sources: Vec<Vector>,
    rays: Vec<Ray>,
    /// Number of `Dom` applications that produced this region.
    pub generation: u32,
}

impl RegionRays {
    /// Assembles a region from explicit rays. Every ray must refer to an
    /// existing source and carry a nonnegative, finite `t_end`.
    pub fn from_rays(site_id: usize, sources: Vec<Vector>, rays: Vec<Ray>, generation: u32) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::domain("region without sources"));
        }
        let dim = sources[0].dim();
        for r in &rays {
            if r.source >= sources.len() {
                return Err(Error::domain(format!("ray refers to missing source {}", r.source)));
            }
            if r.direction.dim() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: r.direction.dim(),
                });
            }
            if !(r.t_end >= 0.0 && r.t_end.is_finite()) {
                return Err(Error::domain(format!("invalid ray end {}", r.t_end)));
            }
        }
        let mut region = RegionRays {
            site_id,
            sources,
            rays,
            generation,
        };
        region.sort_rays();
        Ok(region)
    }

    /// The site itself: every ray has zero length.
    pub fn site_only(site: &Site, dirs: &[Vector]) -> Self {
        let rays = (0..site.points().len())
            .flat_map(|s| {
                dirs.iter().map(move |u| Ray {
                    source: s,
                    direction: u.clone(),
                    t_end: 0.0,
                })
            })
            .collect();
        let mut r = RegionRays {
            site_id: site.id,
            sources: site.points().to_vec(),
            rays,
            generation: 0,
        };
        r.sort_rays();
        r
    }

    /// The whole box: every ray runs to the box boundary.
    pub fn whole_box(site: &Site, dirs: &[Vector], bbox: &BoundingBox) -> Self {
        let mut r = RegionRays::site_only(site, dirs);
        for ray in &mut r.rays {
            ray.t_end = box_exit_raw(r.sources[ray.source].coords(), ray.direction.coords(), bbox);
        }
        r
    }

    pub fn sources(&self) -> &[Vector] {
        &self.sources
    }

    pub fn rays(&self) -> &[Ray] {
        &self.rays
    }

    pub fn dim(&self) -> usize {
        self.sources[0].dim()
    }

    pub fn endpoint(&self, ray: &Ray) -> Vector {
        self.sources[ray.source].along(ray.direction.coords(), ray.t_end)
    }

    fn sort_rays(&mut self) {
        if self.dim() == 2 {
            self.rays.sort_by(|a, b| {
                a.source
                    .cmp(&b.source)
                    .then(angle(a.direction.coords()).total_cmp(&angle(b.direction.coords())))
            });
        } else {
            self.rays.sort_by_key(|r| r.source);
        }
    }

    /// Rays of each source as index ranges into `rays()`.
    pub(crate) fn groups(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::with_capacity(self.sources.len());
        let mut start = 0;
        for s in 0..self.sources.len() {
            let mut end = start;
            while end < self.rays.len() && self.rays[end].source == s {
                end += 1;
            }
            out.push(start..end);
            start = end;
        }
        out
    }

    /// Fan polygons around each source, for point-in-region tests.
    pub fn planar_fans(&self) -> Result<PlanarFans> {
        if self.dim() != 2 {
            return Err(Error::Dimension {
                expected: 2,
                found: self.dim(),
            });
        }
        let fans = self
            .groups()
            .into_iter()
            .enumerate()
            .map(|(s, range)| {
                let src = self.sources[s].coords();
                let mut angles = Vec::with_capacity(range.len());
                let mut ends = Vec::with_capacity(range.len());
                for ray in &self.rays[range] {
                    let u = ray.direction.coords();
                    angles.push(angle(u));
                    ends.push([src[0] + ray.t_end * u[0], src[1] + ray.t_end * u[1]]);
                }
                Fan {
                    source: [src[0], src[1]],
                    angles,
                    ends,
                }
            })
            .collect();
        Ok(PlanarFans { fans })
    }

    /// Sources plus the fan outlines (chords between angularly adjacent
    /// endpoints) sampled every `spacing`. In more than two dimensions this
    /// falls back to sources and endpoints.
    pub fn outline_cloud(&self, spacing: f64) -> PointCloud {
        assert!(spacing > 0.0, "outline spacing must be positive");
        let dim = self.dim();
        let mut cloud = PointCloud::new(dim);
        for (s, range) in self.groups().into_iter().enumerate() {
            let src = self.sources[s].coords();
            cloud.push(src);
            if dim != 2 {
                for ray in &self.rays[range] {
                    if ray.t_end > 0.0 {
                        cloud.push(self.endpoint(ray).coords());
                    }
                }
                continue;
            }
            let ends: Vec<[f64; 2]> = self.rays[range]
                .iter()
                .map(|r| {
                    let u = r.direction.coords();
                    [src[0] + r.t_end * u[0], src[1] + r.t_end * u[1]]
                })
                .collect();
            let n = ends.len();
            for i in 0..n {
                let (a, b) = (ends[i], ends[(i + 1) % n]);
                let len = euclid_dist(&a, &b);
                let steps = (len / spacing).ceil().max(1.0) as usize;
                for k in 0..steps {
                    let t = k as f64 / steps as f64;
                    cloud.push(&[a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
                }
            }
        }
        cloud
    }
}

/// Angle of a planar direction in `[0, 2*pi)`.
#[inline]
pub(crate) fn angle(u: &[f64]) -> f64 {
    let a = u[1].atan2(u[0]);
    if a < 0.0 {
        a + TAU
    } else {
        a
    }
}

#[derive(Clone, Debug)]
struct Fan {
    source: [f64; 2],
    angles: Vec<f64>,
    ends: Vec<[f64; 2]>,
}

#[inline]
fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

impl Fan {
    fn contains(&self, x: &[f64]) -> bool {
        let s = self.source;
        let x = [x[0], x[1]];
        if x == s {
            return true;
        }
        let n = self.angles.len();
        if n == 0 {
            return false;
        }
        let th = angle(&[x[0] - s[0], x[1] - s[1]]);
        let k = self.angles.partition_point(|a| *a <= th);
        let i = if k == 0 { n - 1 } else { k - 1 };
        let j = (i + 1) % n;
        let (a, b) = (self.ends[i], self.ends[j]);
        // inclusive point-in-triangle (s, a, b), tolerant to round-off
        let scale = 1e-12 * (1.0 + euclid_dist(&a, &s).max(euclid_dist(&b, &s))).powi(2);
        let area = cross(s, a, b);
        if area.abs() <= scale {
            // degenerate sector: only points on the two rays count
            return on_segment(s, a, x, scale) || on_segment(s, b, x, scale);
        }
        let sign = area.signum();
        sign * cross(s, a, x) >= -scale && sign * cross(a, b, x) >= -scale && sign * cross(b, s, x) >= -scale
    }
}

fn on_segment(a: [f64; 2], b: [f64; 2], x: [f64; 2], tol: f64) -> bool {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    if len2 <= tol {
        let e = [x[0] - a[0], x[1] - a[1]];
        return e[0] * e[0] + e[1] * e[1] <= tol;
    }
    if cross(a, b, x).abs() > tol {
        return false;
    }
    let t = (x[0] - a[0]) * d[0] + (x[1] - a[1]) * d[1];
    t >= -tol && t <= len2 + tol
}

/// Star polygons spanned by a planar region's rays, one per source.
#[derive(Clone, Debug)]
pub struct PlanarFans {
    fans: Vec<Fan>,
}

impl PlanarFans {
    pub fn contains(&self, x: &[f64]) -> bool {
        self.fans.iter().any(|f| f.contains(x))
    }
}

/// Parameter where the ray `p + t u` leaves `{x : ||x - p|| <= d(x, A)}`,
/// within `eps`, clipped to the box. Returns the inner end of the final
/// bracket.
pub fn ray_endpoint(
    p: &Vector,
    u: &Vector,
    a_cloud: &PointCloud,
    bbox: &BoundingBox,
    norm: &NormSpec,
    eps: f64,
) -> Result<f64> {
    check_ray_inputs(p, u, a_cloud, bbox, norm, eps)?;
    let index = CompetitorIndex::new(a_cloud, Acceleration::KdTree);
    if index.nearest(p.coords(), norm) == 0.0 {
        return Err(Error::NotSeparated(format!(
            "ray source {:?} lies in the competing set",
            p.coords()
        )));
    }
    Ok(shoot(p.coords(), u.coords(), &index, bbox, norm, eps))
}

fn check_ray_inputs(
    p: &Vector,
    u: &Vector,
    a_cloud: &PointCloud,
    bbox: &BoundingBox,
    norm: &NormSpec,
    eps: f64,
) -> Result<()> {
    norm.check_dim(p.dim())?;
    for d in [u.dim(), a_cloud.dim(), bbox.dim()] {
        if d != p.dim() {
            return Err(Error::Dimension {
                expected: p.dim(),
                found: d,
            });
        }
    }
    if a_cloud.is_empty() {
        return Err(Error::domain("competing cloud is empty"));
    }
    if !(eps > 0.0) {
        return Err(Error::param(format!("eps must be positive, got {eps}")));
    }
    if u.coords().iter().all(|c| *c == 0.0) {
        return Err(Error::param("ray direction must be nonzero"));
    }
    if !bbox.contains(p.coords()) {
        return Err(Error::domain(format!("ray source {:?} outside the box", p.coords())));
    }
    Ok(())
}

#[inline]
fn in_dom(p: &[f64], x: &[f64], index: &CompetitorIndex<'_>, norm: &NormSpec) -> bool {
    !index.any_within(x, norm.dist(x, p), norm)
}

pub(crate) fn shoot(
    p: &[f64],
    u: &[f64],
    index: &CompetitorIndex<'_>,
    bbox: &BoundingBox,
    norm: &NormSpec,
    eps: f64,
) -> f64 {
    let exit = box_exit_raw(p, u, bbox);
    if exit == 0.0 {
        return 0.0;
    }
    let mut x: Vec<f64> = p.iter().zip(u).map(|(a, b)| a + exit * b).collect();
    if in_dom(p, &x, index, norm) {
        return exit;
    }
    let (mut lo, mut hi) = (0.0, exit);
    while hi - lo > eps {
        let mid = 0.5 * (lo + hi);
        for (k, xk) in x.iter_mut().enumerate() {
            *xk = p[k] + mid * u[k];
        }
        if in_dom(p, &x, index, norm) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// `dom(P, A)` as rays from every point of `site` in every direction of
/// `dirs`, followed by up to `adaptive_depth` angular refinement passes.
pub fn dom_region(
    site: &Site,
    a_cloud: &PointCloud,
    dirs: &[Vector],
    bbox: &BoundingBox,
    norm: &NormSpec,
    params: &DomParams,
) -> Result<RegionRays> {
    if dirs.is_empty() {
        return Err(Error::param("no ray directions"));
    }
    let dim = site.dim();
    norm.check_dim(dim)?;
    if a_cloud.is_empty() {
        return Err(Error::domain("competing cloud is empty"));
    }
    if a_cloud.dim() != dim || bbox.dim() != dim {
        return Err(Error::Dimension {
            expected: dim,
            found: if a_cloud.dim() != dim { a_cloud.dim() } else { bbox.dim() },
        });
    }
    if !(params.eps > 0.0) {
        return Err(Error::param(format!("eps must be positive, got {}", params.eps)));
    }
    if let Some(u) = dirs.iter().find(|u| u.dim() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            found: u.dim(),
        });
    }
    let index = CompetitorIndex::new(a_cloud, params.acceleration);
    for p in site.points() {
        if !bbox.contains(p.coords()) {
            return Err(Error::domain(format!("site {} point {:?} outside the box", site.id, p.coords())));
        }
        if index.nearest(p.coords(), norm) == 0.0 {
            return Err(Error::NotSeparated(format!(
                "site {} point {:?} lies in the competing set",
                site.id,
                p.coords()
            )));
        }
    }

    let sources = site.points().to_vec();
    let jobs: Vec<(usize, &Vector)> = (0..sources.len()).flat_map(|s| dirs.iter().map(move |u| (s, u))).collect();
    let rays: Vec<Ray> = jobs
        .par_iter()
        .map(|&(s, u)| Ray {
            source: s,
            direction: u.clone(),
            t_end: shoot(sources[s].coords(), u.coords(), &index, bbox, norm, params.eps),
        })
        .collect();
    let mut region = RegionRays {
        site_id: site.id,
        sources,
        rays,
        generation: 1,
    };
    region.sort_rays();
    if dim == 2 {
        for _ in 0..params.adaptive_depth {
            if !refine_pass(&mut region, &index, bbox, norm, params) {
                break;
            }
        }
    }
    Ok(region)
}

/// Inserts a bisecting ray between every pair of angularly adjacent rays
/// whose endpoints are farther apart than the threshold. Returns whether
/// anything was inserted.
fn refine_pass(
    region: &mut RegionRays,
    index: &CompetitorIndex<'_>,
    bbox: &BoundingBox,
    norm: &NormSpec,
    params: &DomParams,
) -> bool {
    let mut new_dirs: Vec<(usize, Vector)> = Vec::new();
    for range in region.groups() {
        let group = &region.rays[range];
        let n = group.len();
        if n < 2 {
            continue;
        }
        for i in 0..n {
            let (a, b) = (&group[i], &group[(i + 1) % n]);
            let ea = region.endpoint(a);
            let eb = region.endpoint(b);
            if euclid_dist(ea.coords(), eb.coords()) <= params.refine_threshold {
                continue;
            }
            let ua = a.direction.coords();
            let ub = b.direction.coords();
            let mid = [ua[0] + ub[0], ua[1] + ub[1]];
            let len = (mid[0] * mid[0] + mid[1] * mid[1]).sqrt();
            if len < 1e-12 {
                continue;
            }
            let m = Vector::from_raw(vec![mid[0] / len, mid[1] / len]);
            if m == a.direction || m == b.direction {
                continue;
            }
            new_dirs.push((a.source, m));
        }
    }
    if new_dirs.is_empty() {
        return false;
    }
    let sources = &region.sources;
    let new_rays: Vec<Ray> = new_dirs
        .into_par_iter()
        .map(|(s, u)| {
            let t_end = shoot(sources[s].coords(), u.coords(), index, bbox, norm, params.eps);
            Ray {
                source: s,
                direction: u,
                t_end,
            }
        })
        .collect();
    region.rays.extend(new_rays);
    region.sort_rays();
    true
}

/// Cloud made of every source, every ray endpoint and `samples_per_ray - 1`
/// equally spaced interior points per ray.
pub fn region_to_cloud(region: &RegionRays, samples_per_ray: usize) -> Result<PointCloud> {
    if samples_per_ray == 0 {
        return Err(Error::param("samples_per_ray must be at least 1"));
    }
    let mut cloud = PointCloud::new(region.dim());
    for (s, range) in region.groups().into_iter().enumerate() {
        let src = region.sources[s].coords();
        cloud.push(src);
        for ray in &region.rays[range] {
            if ray.t_end <= 0.0 {
                continue;
            }
            let u = ray.direction.coords();
            for i in 1..=samples_per_ray {
                let t = ray.t_end * i as f64 / samples_per_ray as f64;
                let p: Vec<f64> = src.iter().zip(u).map(|(a, b)| a + t * b).collect();
                cloud.push(&p);
            }
        }
    }
    Ok(cloud)
}

/// Distance from `x` to the union of the region's ray segments.
pub fn dist_point_to_region(x: &Vector, region: &RegionRays, norm: &NormSpec, tol: f64) -> Result<f64> {
    if region.rays.is_empty() {
        return Err(Error::domain("region has no rays"));
    }
    if x.dim() != region.dim() {
        return Err(Error::Dimension {
            expected: region.dim(),
            found: x.dim(),
        });
    }
    norm.check_dim(x.dim())?;
    if !(tol > 0.0) {
        return Err(Error::param(format!("tolerance must be positive, got {tol}")));
    }
    let mut best = f64::INFINITY;
    for ray in &region.rays {
        let a = region.sources[ray.source].coords();
        // a lower bound that lets most segments be skipped
        if norm.dist(x.coords(), a) - ray.t_end * norm.eval(ray.direction.coords()) >= best {
            continue;
        }
        let b = region.endpoint(ray);
        best = best.min(segment_dist_raw(x.coords(), a, b.coords(), norm, tol));
        if best == 0.0 {
            break;
        }
    }
    Ok(best)
}
