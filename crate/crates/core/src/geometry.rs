//! Metric kernel: norms, ray directions, distances and the world box.
//!
//! Every norm offered here is *absolute*: its value depends only on the
//! absolute values of the coordinates and is nondecreasing in each of them.
//! The spatial indexes rely on that to bound distances to axis-aligned boxes.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance used by [`strict_convexity_probe`].
pub const PROBE_TOLERANCE: f64 = 1e-9;

/// A point or displacement in `R^d`, `d >= 2`, with finite coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::param(format!(
                "vectors need at least 2 coordinates, got {}",
                coords.len()
            )));
        }
        if let Some(c) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::param(format!("non-finite coordinate {c}")));
        }
        Ok(Vector(coords))
    }

    pub fn xy(x: f64, y: f64) -> Self {
        Vector::new(vec![x, y]).expect("finite planar vector")
    }

    /// Builds a vector from coordinates already known to be valid.
    pub(crate) fn from_raw(coords: Vec<f64>) -> Self {
        debug_assert!(coords.len() >= 2 && coords.iter().all(|c| c.is_finite()));
        Vector(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        same_dim(self, other)?;
        Ok(Vector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect()))
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        same_dim(self, other)?;
        Ok(Vector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()))
    }

    pub fn scale(&self, t: f64) -> Vector {
        Vector(self.0.iter().map(|a| a * t).collect())
    }

    /// `self + t * dir`, without dimension checks.
    pub(crate) fn along(&self, dir: &[f64], t: f64) -> Vector {
        Vector(self.0.iter().zip(dir).map(|(p, u)| p + t * u).collect())
    }

    pub fn euclidean_len(&self) -> f64 {
        euclid(&self.0)
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Vector::new(v)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

impl AsRef<[f64]> for Vector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn same_dim(a: &Vector, b: &Vector) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

pub(crate) fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

pub(crate) fn euclid_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// The norm used for every distance in a problem instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormSpec {
    /// `l_p` norm; `p = f64::INFINITY` is the max norm.
    Lp(f64),
    /// Planar norm `delta * sqrt(alpha^2 x^2 + y^2) + (1 - delta*alpha)|x| + (1 - delta)|y|`,
    /// strictly convex but not smooth.
    Strange { alpha: f64, delta: f64 },
}

impl NormSpec {
    pub const L1: NormSpec = NormSpec::Lp(1.0);
    pub const L2: NormSpec = NormSpec::Lp(2.0);
    pub const LINF: NormSpec = NormSpec::Lp(f64::INFINITY);

    pub fn lp(p: f64) -> Result<Self> {
        let n = NormSpec::Lp(p);
        n.validate()?;
        Ok(n)
    }

    pub fn strange(alpha: f64, delta: f64) -> Result<Self> {
        let n = NormSpec::Strange { alpha, delta };
        n.validate()?;
        Ok(n)
    }

    /// The strange norm with `alpha = delta = 0.1`.
    pub fn strange_default() -> Self {
        NormSpec::Strange {
            alpha: 0.1,
            delta: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NormSpec::Lp(p) => {
                if p.is_nan() || p < 1.0 {
                    return Err(Error::param(format!("l_p norm requires p >= 1, got {p}")));
                }
            }
            NormSpec::Strange { alpha, delta } => {
                let ok = alpha.is_finite()
                    && delta.is_finite()
                    && alpha > 0.0
                    && delta > 0.0
                    && delta < 1.0
                    && delta * alpha < 1.0;
                if !ok {
                    return Err(Error::param(format!(
                        "strange norm requires 0 < alpha, 0 < delta < 1, delta*alpha < 1; got alpha={alpha}, delta={delta}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Checks that the norm can act on `dim`-dimensional vectors.
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        match self {
            NormSpec::Strange { .. } if dim != 2 => Err(Error::Dimension {
                expected: 2,
                found: dim,
            }),
            _ if dim < 2 => Err(Error::Dimension {
                expected: 2,
                found: dim,
            }),
            _ => Ok(()),
        }
    }

    /// True for the norms covered by the convergence theory (strictly convex
    /// unit sphere): `l_p` with `1 < p < inf` and the strange norm.
    pub fn is_strictly_convex(&self) -> bool {
        match *self {
            NormSpec::Lp(p) => p > 1.0 && p.is_finite(),
            NormSpec::Strange { .. } => true,
        }
    }

    /// A constant `c > 0` with `||v|| >= c * ||v||_2` for all `v` in `R^dim`.
    pub fn euclidean_lower_bound(&self, dim: usize) -> f64 {
        match *self {
            NormSpec::Lp(p) if p <= 2.0 => 1.0,
            NormSpec::Lp(p) if p.is_infinite() => 1.0 / (dim as f64).sqrt(),
            NormSpec::Lp(p) => (dim as f64).powf(1.0 / p - 0.5),
            NormSpec::Strange { alpha, delta } => (1.0 - delta * alpha).min(1.0 - delta),
        }
    }

    /// `||v||`. The dimension must already have been checked.
    #[inline]
    pub(crate) fn eval(&self, v: &[f64]) -> f64 {
        match *self {
            NormSpec::Lp(p) => lp_of(v.iter().copied(), p),
            NormSpec::Strange { alpha, delta } => strange_of(v[0], v[1], alpha, delta),
        }
    }

    /// `||a - b||`. The dimension must already have been checked.
    #[inline]
    pub(crate) fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            NormSpec::Lp(p) => lp_of(a.iter().zip(b).map(|(x, y)| x - y), p),
            NormSpec::Strange { alpha, delta } => {
                strange_of(a[0] - b[0], a[1] - b[1], alpha, delta)
            }
        }
    }
}

#[inline]
fn lp_of(v: impl Iterator<Item = f64> + Clone, p: f64) -> f64 {
    if p == 2.0 {
        v.map(|c| c * c).sum::<f64>().sqrt()
    } else if p == 1.0 {
        v.map(f64::abs).sum()
    } else if p.is_infinite() {
        v.fold(0.0f64, |m, c| m.max(c.abs()))
    } else {
        let s: f64 = v.clone().map(|c| c.abs().powf(p)).sum();
        if s.is_finite() && s > f64::MIN_POSITIVE {
            return s.powf(1.0 / p);
        }
        // rescale by the largest entry when |c|^p over- or underflows
        let m = v.clone().fold(0.0f64, |m, c| m.max(c.abs()));
        if m == 0.0 {
            return 0.0;
        }
        m * v.map(|c| (c.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

#[inline]
fn strange_of(x: f64, y: f64, alpha: f64, delta: f64) -> f64 {
    delta * (alpha * alpha * x * x + y * y).sqrt()
        + (1.0 - delta * alpha) * x.abs()
        + (1.0 - delta) * y.abs()
}

impl fmt::Display for NormSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            NormSpec::Lp(p) if p == 1.0 => write!(f, "l1"),
            NormSpec::Lp(p) if p == 2.0 => write!(f, "l2"),
            NormSpec::Lp(p) if p.is_infinite() => write!(f, "linf"),
            NormSpec::Lp(p) => write!(f, "lp:{p}"),
            NormSpec::Strange { alpha, delta } => write!(f, "strange:{alpha}:{delta}"),
        }
    }
}

/// Parses `l1`, `l2`, `linf`, `lp:<p>`, `strange` or `strange:<alpha>:<delta>`.
impl FromStr for NormSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |what: &str| Error::param(format!("unrecognised norm `{s}`: {what}"));
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad("expected a number"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        let norm = match parts.as_slice() {
            ["l1"] => NormSpec::L1,
            ["l2"] => NormSpec::L2,
            ["linf"] => NormSpec::LINF,
            ["lp", p] if p.trim() == "inf" => NormSpec::LINF,
            ["lp", p] => NormSpec::Lp(num(p)?),
            ["strange"] => NormSpec::strange_default(),
            ["strange", a, d] => NormSpec::Strange {
                alpha: num(a)?,
                delta: num(d)?,
            },
            _ => return Err(bad("expected l1, l2, linf, lp:<p> or strange:<alpha>:<delta>")),
        };
        norm.validate()?;
        Ok(norm)
    }
}

/// Checked `||v||`.
pub fn norm_eval(norm: &NormSpec, v: &Vector) -> Result<f64> {
    norm.check_dim(v.dim())?;
    Ok(norm.eval(v.coords()))
}

/// Axis-aligned compact world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    lo: Vector,
    hi: Vector,
}

impl BoundingBox {
    pub fn new(lo: Vector, hi: Vector) -> Result<Self> {
        same_dim(&lo, &hi)?;
        for (i, (l, h)) in lo.coords().iter().zip(hi.coords()).enumerate() {
            if l >= h {
                return Err(Error::param(format!(
                    "box axis {i}: lo {l} must be below hi {h}"
                )));
            }
        }
        Ok(BoundingBox { lo, hi })
    }

    /// The square `[-half, half]^2`.
    pub fn square(half: f64) -> Self {
        BoundingBox::new(Vector::xy(-half, -half), Vector::xy(half, half)).expect("valid square")
    }

    pub fn lo(&self) -> &Vector {
        &self.lo
    }

    pub fn hi(&self) -> &Vector {
        &self.hi
    }

    pub fn dim(&self) -> usize {
        self.lo.dim()
    }

    /// Euclidean length of the main diagonal.
    pub fn diameter(&self) -> f64 {
        euclid_dist(self.lo.coords(), self.hi.coords())
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p
                .iter()
                .zip(self.lo.coords().iter().zip(self.hi.coords()))
                .all(|(x, (l, h))| *l <= *x && *x <= *h)
    }
}

/// Largest `t >= 0` with `p + t u` still inside `bbox`.
pub fn box_exit(p: &Vector, u: &Vector, bbox: &BoundingBox) -> Result<f64> {
    same_dim(p, u)?;
    if p.dim() != bbox.dim() {
        return Err(Error::Dimension {
            expected: bbox.dim(),
            found: p.dim(),
        });
    }
    if u.coords().iter().all(|c| *c == 0.0) {
        return Err(Error::param("ray direction must be nonzero"));
    }
    if !bbox.contains(p.coords()) {
        return Err(Error::domain(format!(
            "ray source {:?} lies outside the box",
            p.coords()
        )));
    }
    Ok(box_exit_raw(p.coords(), u.coords(), bbox))
}

pub(crate) fn box_exit_raw(p: &[f64], u: &[f64], bbox: &BoundingBox) -> f64 {
    let mut t = f64::INFINITY;
    for i in 0..p.len() {
        let (lo, hi) = (bbox.lo.0[i], bbox.hi.0[i]);
        let s = if u[i] > 0.0 {
            (hi - p[i]) / u[i]
        } else if u[i] < 0.0 {
            (lo - p[i]) / u[i]
        } else {
            continue;
        };
        t = t.min(s);
    }
    t.max(0.0)
}

/// `count` deterministic Euclidean-unit directions in `R^d`.
///
/// In the plane the angles are `2*pi*i/count` starting at 0. In three
/// dimensions a Fibonacci spiral is used; above that, Halton points are mapped
/// to Gaussians by Box-Muller and normalised.
pub fn unit_directions(d: usize, count: usize) -> Result<Vec<Vector>> {
    if d < 2 {
        return Err(Error::param(format!("dimension must be >= 2, got {d}")));
    }
    if count < 4 {
        return Err(Error::param(format!(
            "need at least 4 directions, got {count}"
        )));
    }
    let dirs = match d {
        2 => (0..count)
            .map(|i| {
                let (s, c) = (2.0 * PI * i as f64 / count as f64).sin_cos();
                Vector::from_raw(vec![c, s])
            })
            .collect(),
        3 => {
            let golden_angle = PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|i| {
                    let z = 1.0 - (2 * i + 1) as f64 / count as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let (s, c) = (golden_angle * i as f64).sin_cos();
                    Vector::from_raw(vec![r * c, r * s, z])
                })
                .collect()
        }
        _ => halton_sphere(d, count),
    };
    Ok(dirs)
}

const PRIMES: [u64; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    inv = r;
    inv
}

fn halton_sphere(d: usize, count: usize) -> Vec<Vector> {
    let pairs = d.div_ceil(2);
    assert!(2 * pairs <= PRIMES.len(), "dimension {d} too large for the Halton table");
    let mut out = Vec::with_capacity(count);
    let mut i = 1u64;
    while out.len() < count {
        let mut g = Vec::with_capacity(2 * pairs);
        for k in 0..pairs {
            let u1 = radical_inverse(i, PRIMES[2 * k]).max(1e-300);
            let u2 = radical_inverse(i, PRIMES[2 * k + 1]);
            let r = (-2.0 * u1.ln()).sqrt();
            let (s, c) = (2.0 * PI * u2).sin_cos();
            g.push(r * c);
            g.push(r * s);
        }
        g.truncate(d);
        let len = euclid(&g);
        i += 1;
        if len > 1e-12 {
            out.push(Vector::from_raw(g.iter().map(|c| c / len).collect()));
        }
    }
    out
}

/// `min_{a in set} ||x - a||`.
pub fn dist_point_to_points(x: &Vector, set: &[Vector], norm: &NormSpec) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::domain("distance to an empty point set"));
    }
    norm.check_dim(x.dim())?;
    let mut best = f64::INFINITY;
    for a in set {
        same_dim(x, a)?;
        best = best.min(norm.dist(x.coords(), a.coords()));
    }
    Ok(best)
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for the minimum of a unimodal `f` on `[lo, hi]`,
/// stopping once the bracket is narrower than `xtol`. Returns `(t, f(t))`.
pub(crate) fn golden_section_min(
    mut f: impl FnMut(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    xtol: f64,
) -> (f64, f64) {
    let (a0, b0) = (lo, hi);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > xtol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    let mut best = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    for t in [a0, b0] {
        let v = f(t);
        if v < best.1 {
            best = (t, v);
        }
    }
    best
}

/// `min_{t in [0,1]} ||x - (a + t (b - a))||` to within `tol`.
pub fn dist_point_to_segment(
    x: &Vector,
    a: &Vector,
    b: &Vector,
    norm: &NormSpec,
    tol: f64,
) -> Result<f64> {
    same_dim(x, a)?;
    same_dim(a, b)?;
    norm.check_dim(x.dim())?;
    if !(tol > 0.0) {
        return Err(Error::param(format!("tolerance must be positive, got {tol}")));
    }
    Ok(segment_dist_raw(x.coords(), a.coords(), b.coords(), norm, tol))
}

pub(crate) fn segment_dist_raw(x: &[f64], a: &[f64], b: &[f64], norm: &NormSpec, tol: f64) -> f64 {
    let len = norm.dist(a, b);
    if len == 0.0 {
        return norm.dist(x, a);
    }
    let mut buf = vec![0.0; x.len()];
    let f = |t: f64| {
        for i in 0..x.len() {
            buf[i] = x[i] - (a[i] + t * (b[i] - a[i]));
        }
        norm.eval(&buf)
    };
    // f is `len`-Lipschitz in t, so a bracket of tol/len pins the value to tol
    golden_section_min(f, 0.0, 1.0, tol / len).1
}

/// Outcome of [`strict_convexity_probe`]. `convex_evidence == true` is
/// evidence only, never a proof.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexityProbe {
    pub convex_evidence: bool,
    pub witness: Option<(Vector, Vector)>,
}

/// Looks for a segment on the unit sphere of a planar norm.
pub fn strict_convexity_probe(norm: &NormSpec, samples: usize) -> Result<ConvexityProbe> {
    strict_convexity_probe_with(norm, 2, samples, PROBE_TOLERANCE)
}

/// Samples at least `samples` pairs of distinct unit vectors `(x, y)` and
/// flags the widest pair whose midpoint still has norm `>= 1 - tol`.
pub fn strict_convexity_probe_with(
    norm: &NormSpec,
    dim: usize,
    samples: usize,
    tol: f64,
) -> Result<ConvexityProbe> {
    if samples < 100 {
        return Err(Error::param(format!(
            "probe needs at least 100 samples, got {samples}"
        )));
    }
    norm.check_dim(dim)?;
    // m directions give m(m-1)/2 pairs; multiples of 8 keep the axes and
    // diagonals in the planar sample
    let mut m = 8;
    while m * (m - 1) / 2 < samples {
        m += 8;
    }
    let unit: Vec<Vec<f64>> = unit_directions(dim, m)?
        .into_iter()
        .map(|u| {
            let n = norm.eval(u.coords());
            u.coords().iter().map(|c| c / n).collect()
        })
        .collect();
    let mut witness: Option<(usize, usize, f64)> = None;
    let mut mid = vec![0.0; dim];
    for i in 0..m {
        for j in i + 1..m {
            for k in 0..dim {
                mid[k] = 0.5 * (unit[i][k] + unit[j][k]);
            }
            if norm.eval(&mid) >= 1.0 - tol {
                let sep = euclid_dist(&unit[i], &unit[j]);
                if witness.map_or(true, |(_, _, s)| sep > s + 1e-12) {
                    witness = Some((i, j, sep));
                }
            }
        }
    }
    Ok(match witness {
        None => ConvexityProbe {
            convex_evidence: true,
            witness: None,
        },
        Some((i, j, _)) => ConvexityProbe {
            convex_evidence: false,
            witness: Some((
                Vector::from_raw(unit[i].clone()),
                Vector::from_raw(unit[j].clone()),
            )),
        },
    })
}
