//! The `Dom` mapping on tuples of regions and the inner/outer iteration.
//!
//! Starting from the sites `I(0)`, the outer tuple is `O(n) = Dom(I(n))` and
//! the next inner tuple is `I(n+1) = Dom(O(n))`. The inner sequence grows, the
//! outer one shrinks, and every double zone diagram sits between them.

use std::fmt;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dominance::{dom_region, region_to_cloud, Acceleration, DomParams, PointCloud, RegionRays, Site};
use crate::error::{Error, Result};
use crate::geometry::{unit_directions, BoundingBox, NormSpec, Vector};
use crate::oracle::{rasterize_tuple, GridSpec, MembershipGrid};
use crate::spatial::KdTree;

/// Discretization and stopping parameters of the iteration. Fields left as
/// `None` resolve to box-relative defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IterationParams {
    /// Rays per site point (before refinement).
    pub ray_count: usize,
    /// Bisection width; default `1e-6 * diameter`.
    pub eps_endpoint: Option<f64>,
    pub samples_per_ray: usize,
    pub adaptive_depth: usize,
    pub max_iters: usize,
    /// Convergence threshold as a fraction of the box diameter.
    pub gap_tol: f64,
    /// Default `2 * diameter / ray_count`.
    pub refine_threshold: Option<f64>,
    /// Allowed sandwich excess; default `4 * diameter / ray_count`.
    pub monotone_slack: Option<f64>,
    /// Outline sampling step for Hausdorff gaps; default `diameter / 1024`.
    pub gap_spacing: Option<f64>,
    pub acceleration: Acceleration,
}

impl Default for IterationParams {
    fn default() -> Self {
        IterationParams {
            ray_count: 720,
            eps_endpoint: None,
            samples_per_ray: 4,
            adaptive_depth: 2,
            max_iters: 8,
            gap_tol: 0.01,
            refine_threshold: None,
            monotone_slack: None,
            gap_spacing: None,
            acceleration: Acceleration::KdTree,
        }
    }
}

impl IterationParams {
    pub fn validate(&self) -> Result<()> {
        if self.ray_count < 4 {
            return Err(Error::param(format!("ray_count must be >= 4, got {}", self.ray_count)));
        }
        if self.samples_per_ray == 0 {
            return Err(Error::param("samples_per_ray must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters must be positive"));
        }
        if !(self.gap_tol > 0.0 && self.gap_tol < 1.0) {
            return Err(Error::param(format!("gap_tol must lie in (0, 1), got {}", self.gap_tol)));
        }
        for (name, v) in [
            ("eps_endpoint", self.eps_endpoint),
            ("refine_threshold", self.refine_threshold),
            ("monotone_slack", self.monotone_slack),
            ("gap_spacing", self.gap_spacing),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::param(format!("{name} must be positive, got {v}")));
                }
            }
        }
        Ok(())
    }

    pub fn eps(&self, bbox: &BoundingBox) -> f64 {
        self.eps_endpoint.unwrap_or(1e-6 * bbox.diameter())
    }

    pub fn refine(&self, bbox: &BoundingBox) -> f64 {
        self.refine_threshold
            .unwrap_or(2.0 * bbox.diameter() / self.ray_count as f64)
    }

    pub fn slack(&self, bbox: &BoundingBox) -> f64 {
        self.monotone_slack
            .unwrap_or(4.0 * bbox.diameter() / self.ray_count as f64)
    }

    pub fn spacing(&self, bbox: &BoundingBox) -> f64 {
        self.gap_spacing.unwrap_or(bbox.diameter() / 1024.0)
    }
}

/// A validated problem instance.
#[derive(Clone, Debug)]
pub struct Problem {
    sites: Vec<Site>,
    bbox: BoundingBox,
    norm: NormSpec,
    pub params: IterationParams,
    dirs: Vec<Vector>,
}

impl Problem {
    pub fn new(
        sites: Vec<Vec<Vector>>,
        bbox: BoundingBox,
        norm: NormSpec,
        params: IterationParams,
    ) -> Result<Self> {
        if sites.len() < 2 {
            return Err(Error::domain(format!("need at least 2 sites, got {}", sites.len())));
        }
        norm.validate()?;
        params.validate()?;
        let dim = bbox.dim();
        norm.check_dim(dim)?;
        let sites = sites
            .into_iter()
            .enumerate()
            .map(|(k, pts)| Site::new(k, pts))
            .collect::<Result<Vec<_>>>()?;
        for s in &sites {
            if s.dim() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: s.dim(),
                });
            }
            if let Some(p) = s.points().iter().find(|p| !bbox.contains(p.coords())) {
                return Err(Error::domain(format!(
                    "site {} point {:?} lies outside the box",
                    s.id,
                    p.coords()
                )));
            }
        }
        for j in 0..sites.len() {
            for k in j + 1..sites.len() {
                if set_distance(&sites[j], &sites[k], &norm) <= 0.0 {
                    return Err(Error::NotSeparated(format!(
                        "sites {j} and {k} share a point"
                    )));
                }
            }
        }
        let dirs = unit_directions(dim, params.ray_count)?;
        Ok(Problem {
            sites,
            bbox,
            norm,
            params,
            dirs,
        })
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn norm(&self) -> &NormSpec {
        &self.norm
    }

    pub fn directions(&self) -> &[Vector] {
        &self.dirs
    }

    pub fn k(&self) -> usize {
        self.sites.len()
    }

    pub fn dim(&self) -> usize {
        self.bbox.dim()
    }

    /// `r_k = min_{j != k} d(P_k, P_j)`.
    pub fn site_separation(&self, k: usize) -> f64 {
        (0..self.k())
            .filter(|&j| j != k)
            .map(|j| set_distance(&self.sites[k], &self.sites[j], &self.norm))
            .fold(f64::INFINITY, f64::min)
    }

    /// `r = min_k r_k`.
    pub fn min_separation(&self) -> f64 {
        (0..self.k()).map(|k| self.site_separation(k)).fold(f64::INFINITY, f64::min)
    }

    pub fn dom_params(&self) -> DomParams {
        DomParams {
            eps: self.params.eps(&self.bbox),
            adaptive_depth: self.params.adaptive_depth,
            refine_threshold: self.params.refine(&self.bbox),
            acceleration: self.params.acceleration,
        }
    }

    /// Same instance with different parameters.
    pub fn with_params(&self, params: IterationParams) -> Result<Problem> {
        params.validate()?;
        let dirs = unit_directions(self.dim(), params.ray_count)?;
        Ok(Problem {
            params,
            dirs,
            ..self.clone()
        })
    }
}

fn set_distance(a: &Site, b: &Site, norm: &NormSpec) -> f64 {
    let mut best = f64::INFINITY;
    for p in a.points() {
        for q in b.points() {
            best = best.min(norm.dist(p.coords(), q.coords()));
        }
    }
    best
}

/// Which member of the iteration a tuple is.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Inner(usize),
    Outer(usize),
    /// Least double zone diagram `m` (final inner tuple).
    Least,
    /// Greatest double zone diagram `M` (final outer tuple).
    Greatest,
    Zone,
    /// Anything built by hand.
    Other,
}

impl Label {
    fn after_dom(self) -> Label {
        match self {
            Label::Inner(n) => Label::Outer(n),
            Label::Outer(n) => Label::Inner(n + 1),
            Label::Least => Label::Greatest,
            Label::Greatest => Label::Least,
            Label::Zone => Label::Zone,
            Label::Other => Label::Other,
        }
    }

    /// Inner-type tuples are drawn solid, outer ones translucent.
    pub fn is_outer(self) -> bool {
        matches!(self, Label::Outer(_) | Label::Greatest)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Inner(n) => write!(f, "I({n})"),
            Label::Outer(n) => write!(f, "O({n})"),
            Label::Least => write!(f, "m"),
            Label::Greatest => write!(f, "M"),
            Label::Zone => write!(f, "zone"),
            Label::Other => write!(f, "other"),
        }
    }
}

/// A `K`-indexed tuple of regions.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagramTuple {
    pub regions: Vec<RegionRays>,
    pub label: Label,
}

impl DiagramTuple {
    /// `I(0)`: every region is its site.
    pub fn sites_only(prob: &Problem) -> Self {
        DiagramTuple {
            regions: prob
                .sites
                .iter()
                .map(|s| RegionRays::site_only(s, &prob.dirs))
                .collect(),
            label: Label::Inner(0),
        }
    }

    /// Every region is the whole box.
    pub fn whole_box(prob: &Problem) -> Self {
        DiagramTuple {
            regions: prob
                .sites
                .iter()
                .map(|s| RegionRays::whole_box(s, &prob.dirs, &prob.bbox))
                .collect(),
            label: Label::Other,
        }
    }

    pub fn k(&self) -> usize {
        self.regions.len()
    }

    pub fn ray_count(&self) -> usize {
        self.regions.iter().map(|r| r.rays().len()).sum()
    }

    pub fn clouds(&self, samples_per_ray: usize) -> Result<Vec<PointCloud>> {
        self.regions.iter().map(|r| region_to_cloud(r, samples_per_ray)).collect()
    }

    pub fn relabel(mut self, label: Label) -> Self {
        self.label = label;
        self
    }
}

/// `Dom(R)_k = dom(P_k, U_{j != k} R_j)` for every `k`.
pub fn dom_map(prob: &Problem, current: &DiagramTuple) -> Result<DiagramTuple> {
    dom_map_with(prob, current, &prob.dirs, prob.params.samples_per_ray)
}

fn dom_map_with(
    prob: &Problem,
    current: &DiagramTuple,
    dirs: &[Vector],
    samples_per_ray: usize,
) -> Result<DiagramTuple> {
    if current.k() != prob.k() {
        return Err(Error::domain(format!(
            "tuple has {} components, problem has {} sites",
            current.k(),
            prob.k()
        )));
    }
    let clouds = current.clouds(samples_per_ray)?;
    let params = prob.dom_params();
    let generation = current.regions.iter().map(|r| r.generation).max().unwrap_or(0) + 1;
    let regions = prob
        .sites
        .par_iter()
        .map(|site| {
            let k = site.id;
            let others = PointCloud::union(
                prob.dim(),
                clouds.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, c)| c),
            );
            let mut r = dom_region(site, &others, dirs, &prob.bbox, &prob.norm, &params)?;
            r.generation = generation;
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DiagramTuple {
        regions,
        label: current.label.after_dom(),
    })
}

/// The Voronoi diagram `O(0) = Dom(I(0))`.
pub fn voronoi(prob: &Problem) -> Result<DiagramTuple> {
    dom_map(prob, &DiagramTuple::sites_only(prob))
}

/// Hausdorff distance between two clouds under `norm`.
pub fn cloud_hausdorff(a: &PointCloud, b: &PointCloud, norm: &NormSpec) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain("Hausdorff distance of an empty cloud"));
    }
    if a.dim() != b.dim() {
        return Err(Error::Dimension {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let directed = |from: &PointCloud, to: &PointCloud| {
        let tree = KdTree::new(to.dim(), to.raw());
        from.points()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|p| tree.nearest(p, norm))
            .reduce(|| 0.0, f64::max)
    };
    Ok(directed(a, b).max(directed(b, a)))
}

/// Smallest distance between a point of `a` and a point of `b`.
pub fn cloud_distance(a: &PointCloud, b: &PointCloud, norm: &NormSpec) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain("distance to an empty cloud"));
    }
    if a.dim() != b.dim() {
        return Err(Error::Dimension {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let tree = KdTree::new(b.dim(), b.raw());
    Ok(a.points()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|p| tree.nearest(p, norm))
        .reduce(|| f64::INFINITY, f64::min))
}

/// Per-component Hausdorff distance between the outlines of two tuples,
/// sampled every `spacing`.
pub fn convergence_gap(a: &DiagramTuple, b: &DiagramTuple, norm: &NormSpec, spacing: f64) -> Result<Vec<f64>> {
    if a.k() != b.k() {
        return Err(Error::domain(format!(
            "tuples have {} and {} components",
            a.k(),
            b.k()
        )));
    }
    if !(spacing > 0.0) {
        return Err(Error::param("gap spacing must be positive"));
    }
    a.regions
        .iter()
        .zip(&b.regions)
        .map(|(ra, rb)| cloud_hausdorff(&ra.outline_cloud(spacing), &rb.outline_cloud(spacing), norm))
        .collect()
}

/// Largest distance by which some endpoint of `inner` sticks out of `outer`,
/// in Euclidean units. Planar regions are compared as fans; in higher
/// dimensions matching directions are compared by length.
fn inclusion_excess(inner: &RegionRays, outer: &RegionRays, spacing: f64) -> Result<f64> {
    if inner.dim() != 2 {
        let mut worst: f64 = 0.0;
        for a in inner.rays() {
            if let Some(b) = outer
                .rays()
                .iter()
                .find(|b| b.source == a.source && b.direction == a.direction)
            {
                worst = worst.max(a.t_end - b.t_end);
            }
        }
        return Ok(worst);
    }
    let fans = outer.planar_fans()?;
    let outside: Vec<Vector> = inner
        .rays()
        .iter()
        .map(|r| inner.endpoint(r))
        .filter(|e| !fans.contains(e.coords()))
        .collect();
    if outside.is_empty() {
        return Ok(0.0);
    }
    let outline = outer.outline_cloud(spacing);
    let tree = KdTree::new(2, outline.raw());
    Ok(outside
        .iter()
        .map(|e| tree.nearest(e.coords(), &NormSpec::L2))
        .fold(0.0, f64::max))
}

/// One recorded breach of the expected inclusions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotoneBreach {
    pub iteration: usize,
    pub which: String,
    pub component: usize,
    pub excess: f64,
}

/// Record of a full inner/outer run.
#[derive(Clone, Debug)]
pub struct IterationTrace {
    /// `I(0) ..= I(n)`.
    pub inner: Vec<DiagramTuple>,
    /// `O(0) ..= O(n)`.
    pub outer: Vec<DiagramTuple>,
    /// `gaps[n][k]`: Hausdorff distance between `I(n)_k` and `O(n)_k`.
    pub gaps: Vec<Vec<f64>>,
    /// Wall time of each iteration (both `Dom` applications).
    pub times: Vec<Duration>,
    pub converged: bool,
    /// The norm lies outside the strictly convex setting covered by the
    /// convergence theory.
    pub outside_guarantees: bool,
    /// Breaches above the slack. Only non-strictly-convex runs can end up
    /// here; strictly convex runs fail instead.
    pub breaches: Vec<MonotoneBreach>,
}

impl IterationTrace {
    pub fn iterations(&self) -> usize {
        self.inner.len() - 1
    }

    pub fn max_gap(&self, n: usize) -> f64 {
        self.gaps[n].iter().copied().fold(0.0, f64::max)
    }

    pub fn final_gap(&self) -> f64 {
        self.max_gap(self.gaps.len() - 1)
    }

    pub fn final_inner(&self) -> &DiagramTuple {
        self.inner.last().expect("trace has I(0)")
    }

    pub fn final_outer(&self) -> &DiagramTuple {
        self.outer.last().expect("trace has O(0)")
    }
}

/// Alternates `Dom` until the inner and outer tuples are within
/// `gap_tol * diameter` of each other or `max_iters` is reached.
///
/// Fails with [`Error::Monotonicity`] when a strictly convex run breaks the
/// sandwich by more than the slack; other norms only record the breach.
pub fn iterate(prob: &Problem) -> Result<IterationTrace> {
    run_iteration(prob, true)
}

/// Like [`iterate`] but every breach is recorded instead of failing.
pub fn iterate_recording(prob: &Problem) -> Result<IterationTrace> {
    run_iteration(prob, false)
}

fn run_iteration(prob: &Problem, fail_fast: bool) -> Result<IterationTrace> {
    let bbox = &prob.bbox;
    let spacing = prob.params.spacing(bbox);
    let slack = prob.params.slack(bbox);
    let target = prob.params.gap_tol * bbox.diameter();
    let strict = prob.norm.is_strictly_convex();

    let start = Instant::now();
    let i0 = DiagramTuple::sites_only(prob);
    let o0 = dom_map(prob, &i0)?;
    let mut trace = IterationTrace {
        gaps: vec![convergence_gap(&i0, &o0, &prob.norm, spacing)?],
        inner: vec![i0],
        outer: vec![o0],
        times: vec![start.elapsed()],
        converged: false,
        outside_guarantees: !strict,
        breaches: Vec::new(),
    };
    trace.converged = trace.final_gap() <= target;

    for n in 1..=prob.params.max_iters {
        if trace.converged {
            break;
        }
        let start = Instant::now();
        let inner = dom_map(prob, trace.final_outer())?.relabel(Label::Inner(n));
        let outer = dom_map(prob, &inner)?.relabel(Label::Outer(n));

        let prev_inner = trace.final_inner();
        let prev_outer = trace.final_outer();
        let mut breaches = Vec::new();
        for k in 0..prob.k() {
            let checks = [
                ("I(n-1) in I(n)", &prev_inner.regions[k], &inner.regions[k]),
                ("O(n) in O(n-1)", &outer.regions[k], &prev_outer.regions[k]),
                ("I(n) in O(n)", &inner.regions[k], &outer.regions[k]),
            ];
            for (which, small, big) in checks {
                let excess = inclusion_excess(small, big, spacing)?;
                if excess > slack {
                    if strict && fail_fast {
                        return Err(Error::Monotonicity {
                            iteration: n,
                            which: format!("{which}, component {k}"),
                            excess,
                            slack,
                        });
                    }
                    breaches.push(MonotoneBreach {
                        iteration: n,
                        which: which.to_string(),
                        component: k,
                        excess,
                    });
                }
            }
        }

        trace.breaches.extend(breaches);
        trace.gaps.push(convergence_gap(&inner, &outer, &prob.norm, spacing)?);
        trace.inner.push(inner);
        trace.outer.push(outer);
        trace.times.push(start.elapsed());
        trace.converged = trace.final_gap() <= target;
    }
    Ok(trace)
}

/// Hausdorff gaps between `Dom(input)` and `target`, with `Dom` recomputed on
/// a ray set rotated by half a step and doubled cloud sampling, so the value
/// reflects discretization stability rather than a bitwise rerun.
pub fn dom_residual(prob: &Problem, input: &DiagramTuple, target: &DiagramTuple) -> Result<Vec<f64>> {
    let dirs = if prob.dim() == 2 {
        let n = prob.params.ray_count;
        (0..n)
            .map(|i| {
                let a = std::f64::consts::TAU * (i as f64 + 0.5) / n as f64;
                Vector::xy(a.cos(), a.sin())
            })
            .collect()
    } else {
        prob.dirs.clone()
    };
    let image = dom_map_with(prob, input, &dirs, 2 * prob.params.samples_per_ray)?;
    convergence_gap(&image, target, &prob.norm, prob.params.spacing(&prob.bbox))
}

/// The two zone diagrams assembled from a two-site run, with their
/// fixed-point residuals `H(T_k, Dom(T)_k)`.
#[derive(Clone, Debug)]
pub struct ZonePair {
    /// `(m_1, M_2)`.
    pub least_first: DiagramTuple,
    /// `(M_1, m_2)`.
    pub greatest_first: DiagramTuple,
    pub residuals: [Vec<f64>; 2],
}

impl ZonePair {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().flatten().copied().fold(0.0, f64::max)
    }
}

/// Builds `(m_1, M_2)` and `(M_1, m_2)` from the final inner (`m`) and outer
/// (`M`) tuples of a two-site trace.
pub fn two_site_zone(prob: &Problem, trace: &IterationTrace) -> Result<ZonePair> {
    if prob.k() != 2 {
        return Err(Error::domain(format!(
            "zone assembly needs exactly 2 sites, got {}",
            prob.k()
        )));
    }
    let m = trace.final_inner();
    let big = trace.final_outer();
    let least_first = DiagramTuple {
        regions: vec![m.regions[0].clone(), big.regions[1].clone()],
        label: Label::Zone,
    };
    let greatest_first = DiagramTuple {
        regions: vec![big.regions[0].clone(), m.regions[1].clone()],
        label: Label::Zone,
    };
    let residuals = [
        dom_residual(prob, &least_first, &least_first)?,
        dom_residual(prob, &greatest_first, &greatest_first)?,
    ];
    Ok(ZonePair {
        least_first,
        greatest_first,
        residuals,
    })
}

/// One inclusion tested by [`check_sandwich`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InclusionCheck {
    /// `"I(n) in I(n+1)"`, `"O(n+1) in O(n)"` or `"I(n) in O(m)"`.
    pub relation: String,
    pub n: usize,
    pub m: usize,
    pub component: usize,
    /// Cells of the smaller set outside the one-cell dilation of the larger.
    pub violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub resolution: usize,
    pub checks: Vec<InclusionCheck>,
    pub total_violations: usize,
}

/// Rasterizes every tuple of the trace and verifies the monotone sandwich
/// `I(n) in I(n+1)`, `O(n+1) in O(n)` and `I(n) in O(m)` for all `n, m`, up to
/// a one-cell dilation.
pub fn check_sandwich(prob: &Problem, trace: &IterationTrace, resolution: usize) -> Result<SandwichReport> {
    let spec = GridSpec::new(prob.bbox.clone(), resolution)?;
    let inner: Vec<MembershipGrid> = trace
        .inner
        .iter()
        .map(|t| rasterize_tuple(t, &spec))
        .collect::<Result<_>>()?;
    let outer: Vec<MembershipGrid> = trace
        .outer
        .iter()
        .map(|t| rasterize_tuple(t, &spec))
        .collect::<Result<_>>()?;
    let dilated_inner: Vec<MembershipGrid> = inner.iter().map(MembershipGrid::dilated).collect();
    let dilated_outer: Vec<MembershipGrid> = outer.iter().map(MembershipGrid::dilated).collect();

    let mut checks = Vec::new();
    for k in 0..prob.k() {
        for n in 0..inner.len() {
            if n + 1 < inner.len() {
                checks.push(InclusionCheck {
                    relation: "I(n) in I(n+1)".into(),
                    n,
                    m: n + 1,
                    component: k,
                    violations: inner[n].excess_cells(k, &dilated_inner[n + 1]),
                });
                checks.push(InclusionCheck {
                    relation: "O(n+1) in O(n)".into(),
                    n,
                    m: n + 1,
                    component: k,
                    violations: outer[n + 1].excess_cells(k, &dilated_outer[n]),
                });
            }
            for m in 0..outer.len() {
                checks.push(InclusionCheck {
                    relation: "I(n) in O(m)".into(),
                    n,
                    m,
                    component: k,
                    violations: inner[n].excess_cells(k, &dilated_outer[m]),
                });
            }
        }
    }
    let total_violations = checks.iter().map(|c| c.violations).sum();
    Ok(SandwichReport {
        resolution,
        checks,
        total_violations,
    })
}
