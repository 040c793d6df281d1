//! Runtime scaling of one inner/outer round with the direct (full-scan)
//! distance queries.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diagram::{dom_map, voronoi, IterationParams, Problem};
use crate::dominance::Acceleration;
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, NormSpec, Vector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub ks: Vec<usize>,
    pub points_per_site: usize,
    pub ray_count: usize,
    /// Each timing is the minimum over this many runs.
    pub repeats: usize,
    /// Pool size for the speedup measurement on the largest `K`; 0 skips it.
    pub speedup_workers: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            ks: vec![2, 4, 8, 16],
            points_per_site: 3,
            ray_count: 32,
            repeats: 2,
            speedup_workers: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchPoint {
    pub k: usize,
    pub points_per_site: usize,
    pub ray_count: usize,
    /// `G * K * ray_count`.
    pub size: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Speedup {
    pub k: usize,
    pub workers: usize,
    pub serial_seconds: f64,
    pub parallel_seconds: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub points: Vec<BenchPoint>,
    /// Least-squares slope of log(seconds) against log(size).
    pub exponent: f64,
    pub speedup: Option<Speedup>,
    /// Threads available to the process.
    pub available_parallelism: usize,
}

/// `k` sites of `g` points each. Site centres are drawn uniformly with
/// rejection until they are at least `diameter / (4 sqrt(k))` apart; the
/// points of a site lie within an eighth of that around its centre.
pub fn random_sites(rng: &mut impl Rng, bbox: &BoundingBox, k: usize, g: usize) -> Result<Vec<Vec<Vector>>> {
    if k == 0 || g == 0 {
        return Err(Error::param("random sites need k >= 1 and g >= 1"));
    }
    let dim = bbox.dim();
    let sep = bbox.diameter() / (4.0 * (k as f64).sqrt());
    let rad = sep / 8.0;
    let lo = bbox.lo().coords();
    let hi = bbox.hi().coords();
    if (0..dim).any(|a| hi[a] - lo[a] <= 2.0 * rad) {
        return Err(Error::param("box too small for the requested sites"));
    }
    let mut centres: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut tries = 0usize;
    while centres.len() < k {
        tries += 1;
        if tries > 100_000 {
            return Err(Error::param(format!("could not place {k} separated sites")));
        }
        let c: Vec<f64> = (0..dim).map(|a| rng.gen_range(lo[a] + rad..hi[a] - rad)).collect();
        let far = centres
            .iter()
            .all(|o| o.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= sep);
        if far {
            centres.push(c);
        }
    }
    centres
        .iter()
        .map(|c| {
            (0..g)
                .map(|_| loop {
                    let off: Vec<f64> = (0..dim).map(|_| rng.gen_range(-rad..rad)).collect();
                    if off.iter().map(|v| v * v).sum::<f64>() <= rad * rad {
                        break Vector::new(c.iter().zip(&off).map(|(a, b)| a + b).collect());
                    }
                })
                .collect()
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::param("slope fit needs at least two paired samples"));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(Error::param("slope fit needs positive samples"));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::param("slope fit needs distinct sizes"));
    }
    Ok(sxy / sxx)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::param(format!("thread pool: {e}")))
}

/// Seconds for `I(1) = Dom(O(0))` followed by `O(1) = Dom(I(1))`, minimum
/// over `repeats` runs.
fn time_round(prob: &Problem, repeats: usize) -> Result<f64> {
    let o0 = voronoi(prob)?;
    let mut best = f64::INFINITY;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        let i1 = dom_map(prob, &o0)?;
        let _o1 = dom_map(prob, &i1)?;
        best = best.min(start.elapsed().as_secs_f64());
    }
    Ok(best)
}

pub fn run_bench(
    cfg: &BenchConfig,
    norm: &NormSpec,
    bbox: &BoundingBox,
    base: &IterationParams,
    rng: &mut impl Rng,
) -> Result<BenchReport> {
    if cfg.ks.len() < 2 {
        return Err(Error::param("bench needs at least two values of k"));
    }
    let params = IterationParams {
        ray_count: cfg.ray_count,
        adaptive_depth: 0,
        acceleration: Acceleration::Direct,
        ..base.clone()
    };
    let mut problems = Vec::new();
    for &k in &cfg.ks {
        if k < 2 {
            return Err(Error::param("bench k values must be >= 2"));
        }
        let sites = random_sites(rng, bbox, k, cfg.points_per_site)?;
        problems.push(Problem::new(sites, bbox.clone(), *norm, params.clone())?);
    }
    let mut points = Vec::new();
    for prob in &problems {
        points.push(BenchPoint {
            k: prob.k(),
            points_per_site: cfg.points_per_site,
            ray_count: cfg.ray_count,
            size: cfg.points_per_site * prob.k() * cfg.ray_count,
            seconds: time_round(prob, cfg.repeats)?,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.size as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.seconds).collect();
    let exponent = loglog_slope(&xs, &ys)?;

    let speedup = if cfg.speedup_workers > 0 {
        let largest = problems.last().expect("at least two problems");
        let serial = pool(1)?.install(|| time_round(largest, cfg.repeats))?;
        let parallel = pool(cfg.speedup_workers)?.install(|| time_round(largest, cfg.repeats))?;
        Some(Speedup {
            k: largest.k(),
            workers: cfg.speedup_workers,
            serial_seconds: serial,
            parallel_seconds: parallel,
            ratio: serial / parallel,
        })
    } else {
        None
    };
    Ok(BenchReport {
        points,
        exponent,
        speedup,
        available_parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
    })
}
