//! Configuration, run modes, and output files of the `zonelab` tool.

mod bench;
mod export;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use bench::{loglog_slope, random_sites, run_bench, BenchConfig, BenchPoint, BenchReport, Speedup};
pub use export::{
    component_color, export_csv, export_svg, format_sig12, read_csv, render_svg, write_csv, CsvRay, SvgStyle,
};

use crate::diagram::{
    check_sandwich, dom_residual, iterate_recording, two_site_zone, voronoi, convergence_gap, DiagramTuple,
    IterationParams, IterationTrace, MonotoneBreach, Problem,
};
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, NormSpec, Vector};
use crate::oracle::{grid_iterate, rasterize_tuple, symdiff_fraction, GridSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Voronoi,
    Zone,
    OracleCompare,
    Bench,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "voronoi" => Ok(Mode::Voronoi),
            "zone" => Ok(Mode::Zone),
            "oracle-compare" => Ok(Mode::OracleCompare),
            "bench" => Ok(Mode::Bench),
            other => Err(Error::param(format!("unknown mode {other:?}"))),
        }
    }
}

/// Thread count: a positive integer or `"auto"`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Workers {
    Count(usize),
    #[default]
    #[serde(with = "auto")]
    Auto,
}

mod auto {
    use serde::{de, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("auto")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s: String = de::Deserialize::deserialize(d)?;
        if s == "auto" {
            Ok(())
        } else {
            Err(de::Error::custom(format!("expected \"auto\" or a positive integer, got {s:?}")))
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub svg: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub pgm: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSites {
    pub count: usize,
    #[serde(default = "one")]
    pub points_per_site: usize,
}

fn one() -> usize {
    1
}

fn default_resolution() -> usize {
    256
}

fn default_norm() -> String {
    "l2".into()
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Option<Mode>,
    #[serde(default = "default_norm")]
    norm: String,
    #[serde(rename = "box")]
    bbox: RawBox,
    #[serde(default)]
    sites: Vec<Vec<Vec<f64>>>,
    random_sites: Option<RandomSites>,
    #[serde(default)]
    iteration: IterationParams,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    workers: Workers,
    #[serde(default)]
    output: OutputPaths,
    #[serde(default = "default_resolution")]
    oracle_resolution: usize,
    #[serde(default)]
    svg_style: SvgStyle,
    #[serde(default)]
    bench: BenchConfig,
}

/// A validated configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub mode: Mode,
    pub norm: NormSpec,
    pub bbox: BoundingBox,
    /// Present for every mode except bench.
    pub problem: Option<Problem>,
    pub iteration: IterationParams,
    pub seed: u64,
    pub workers: Workers,
    pub output: OutputPaths,
    pub oracle_resolution: usize,
    pub svg_style: SvgStyle,
    pub bench: BenchConfig,
}

fn config_err(path: &str, message: impl ToString) -> Error {
    Error::Config {
        path: path.into(),
        message: message.to_string(),
    }
}

/// Parses and validates a JSON configuration. `mode` may be left out of the
/// document when `mode_override` is given.
pub fn parse_config(text: &str, mode_override: Option<Mode>) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        config_err(&path, e.into_inner())
    })?;
    let mode = mode_override
        .or(raw.mode)
        .ok_or_else(|| config_err("mode", "missing run mode"))?;
    let norm: NormSpec = raw.norm.parse().map_err(|e: Error| config_err("norm", e))?;
    let vec = |v: Vec<f64>, path: &str| Vector::new(v).map_err(|e| config_err(path, e));
    let bbox = BoundingBox::new(vec(raw.bbox.lo, "box.lo")?, vec(raw.bbox.hi, "box.hi")?)
        .map_err(|e| config_err("box", e))?;
    norm.check_dim(bbox.dim()).map_err(|e| config_err("norm", e))?;
    raw.iteration.validate().map_err(|e| config_err("iteration", e))?;
    if raw.oracle_resolution < 32 {
        return Err(config_err("oracle_resolution", "must be >= 32"));
    }
    if let Workers::Count(0) = raw.workers {
        return Err(config_err("workers", "must be positive"));
    }

    let problem = if mode == Mode::Bench {
        None
    } else {
        let sites = if !raw.sites.is_empty() {
            if raw.random_sites.is_some() {
                return Err(config_err("random_sites", "give either sites or random_sites"));
            }
            raw.sites
                .into_iter()
                .enumerate()
                .map(|(k, pts)| {
                    pts.into_iter()
                        .enumerate()
                        .map(|(i, p)| vec(p, &format!("sites[{k}][{i}]")))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?
        } else if let Some(r) = raw.random_sites {
            let mut rng = ChaCha8Rng::seed_from_u64(raw.seed);
            random_sites(&mut rng, &bbox, r.count, r.points_per_site).map_err(|e| config_err("random_sites", e))?
        } else {
            return Err(config_err("sites", "missing sites"));
        };
        Some(Problem::new(sites, bbox.clone(), norm, raw.iteration.clone())?)
    };
    Ok(RunConfig {
        mode,
        norm,
        bbox,
        problem,
        iteration: raw.iteration,
        seed: raw.seed,
        workers: raw.workers,
        output: raw.output,
        oracle_resolution: raw.oracle_resolution,
        svg_style: raw.svg_style,
        bench: raw.bench,
    })
}

pub fn load_config(path: &Path, mode_override: Option<Mode>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, mode_override)
}

/// Outcome of one invariant check. Hard checks decide the exit status.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub hard: bool,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoneSummary {
    /// Fixed-point residuals of `(m_1, M_2)` and `(M_1, m_2)`.
    pub residuals: [Vec<f64>; 2],
    /// Per-component Hausdorff distance between the two zone diagrams.
    pub difference: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub resolution: usize,
    /// `inner[n][k]`: symmetric-difference fraction of `I(n)_k`.
    pub inner: Vec<Vec<f64>>,
    pub outer: Vec<Vec<f64>>,
    pub grid_gaps: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: Mode,
    pub norm: String,
    pub sites: usize,
    pub dim: usize,
    /// Inner/outer pairs computed, `(I(0), O(0))` included; equals `gaps.len()`.
    pub iterations: usize,
    pub gaps: Vec<Vec<f64>>,
    pub seconds: Vec<f64>,
    /// Rays in the outer tuple of each iteration.
    pub ray_counts: Vec<usize>,
    pub converged: bool,
    pub outside_guarantees: bool,
    pub breaches: Vec<MonotoneBreach>,
    pub checks: Vec<CheckOutcome>,
    pub zone: Option<ZoneSummary>,
    pub oracle: Option<OracleSummary>,
    pub bench: Option<BenchReport>,
    pub total_seconds: f64,
}

impl RunReport {
    fn new(mode: Mode, norm: &NormSpec, sites: usize, dim: usize) -> Self {
        RunReport {
            mode,
            norm: norm.to_string(),
            sites,
            dim,
            iterations: 0,
            gaps: vec![],
            seconds: vec![],
            ray_counts: vec![],
            converged: false,
            outside_guarantees: !norm.is_strictly_convex(),
            breaches: vec![],
            checks: vec![],
            zone: None,
            oracle: None,
            bench: None,
            total_seconds: 0.0,
        }
    }

    /// Some hard invariant failed.
    pub fn failed(&self) -> bool {
        self.checks.iter().any(|c| c.hard && !c.passed)
    }

    fn check(&mut self, name: &str, hard: bool, passed: bool, detail: String) {
        self.checks.push(CheckOutcome {
            name: name.into(),
            hard,
            passed,
            detail,
        });
    }

    fn record_trace(&mut self, trace: &IterationTrace) {
        self.iterations = trace.gaps.len();
        self.gaps = trace.gaps.clone();
        self.seconds = trace.times.iter().map(|t| t.as_secs_f64()).collect();
        self.ray_counts = trace.outer.iter().map(|t| t.ray_count()).collect();
        self.converged = trace.converged;
        self.outside_guarantees = trace.outside_guarantees;
        self.breaches = trace.breaches.clone();
    }
}

/// Everything a run produced.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub trace: Option<IterationTrace>,
    pub voronoi: Option<DiagramTuple>,
}

fn pool_size(workers: Workers) -> usize {
    match workers {
        Workers::Count(n) => n,
        Workers::Auto => std::thread::available_parallelism().map_or(1, |n| n.get()),
    }
}

/// Executes the configured mode inside a pool of the configured size and
/// writes the requested outputs.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(pool_size(config.workers))
        .build()
        .map_err(|e| Error::param(format!("thread pool: {e}")))?;
    pool.install(|| run_in_pool(config))
}

fn run_in_pool(config: &RunConfig) -> Result<RunOutput> {
    let start = Instant::now();
    let mut out = match config.mode {
        Mode::Voronoi => run_voronoi(config)?,
        Mode::Zone => run_zone(config)?,
        Mode::OracleCompare => run_oracle_compare(config)?,
        Mode::Bench => run_bench_mode(config)?,
    };
    out.report.total_seconds = start.elapsed().as_secs_f64();
    if let Some(path) = &config.output.report {
        let text = serde_json::to_string_pretty(&out.report).expect("report serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))?;
    }
    Ok(out)
}

fn problem(config: &RunConfig) -> Result<&Problem> {
    config
        .problem
        .as_ref()
        .ok_or_else(|| config_err("sites", "this mode needs sites"))
}

fn write_figures(config: &RunConfig, prob: &Problem, tuples: &[&DiagramTuple], csv_tuple: &DiagramTuple) -> Result<()> {
    if let Some(path) = &config.output.svg {
        if prob.dim() != 2 {
            return Err(config_err("output.svg", "figures are planar only"));
        }
        export_svg(tuples, prob.sites(), prob.bbox(), config.svg_style, path)?;
    }
    if let Some(path) = &config.output.csv {
        export_csv(csv_tuple, path)?;
    }
    Ok(())
}

fn run_voronoi(config: &RunConfig) -> Result<RunOutput> {
    let prob = problem(config)?;
    let mut report = RunReport::new(config.mode, prob.norm(), prob.k(), prob.dim());
    let start = Instant::now();
    let vor = voronoi(prob)?;
    report.iterations = 1;
    report.seconds = vec![start.elapsed().as_secs_f64()];
    report.ray_counts = vec![vor.ray_count()];
    if prob.dim() == 2 {
        let spec = GridSpec::new(prob.bbox().clone(), config.oracle_resolution)?;
        let grid = rasterize_tuple(&vor, &spec)?.dilated();
        let uncovered = (0..spec.cell_count()).filter(|&i| grid.label_count(i) == 0).count();
        report.check(
            "voronoi-coverage",
            true,
            uncovered == 0,
            format!("{uncovered} cells outside every dilated region"),
        );
    }
    write_figures(config, prob, &[&vor], &vor)?;
    Ok(RunOutput {
        report,
        trace: None,
        voronoi: Some(vor),
    })
}

fn iteration_checks(report: &mut RunReport, config: &RunConfig, prob: &Problem, trace: &IterationTrace) -> Result<()> {
    let strict = prob.norm().is_strictly_convex();
    let diam = prob.bbox().diameter();
    let bound = 2.0 * prob.params.gap_tol * diam;
    report.check(
        "monotone-rays",
        strict,
        trace.breaches.is_empty(),
        format!("{} breaches above slack {:.6}", trace.breaches.len(), prob.params.slack(prob.bbox())),
    );
    if prob.dim() == 2 {
        let sw = check_sandwich(prob, trace, config.oracle_resolution)?;
        report.check(
            "sandwich-grid",
            strict,
            sw.total_violations == 0,
            format!("{} cells outside one-cell dilations at {}^2", sw.total_violations, sw.resolution),
        );
    }
    report.check(
        "converged",
        false,
        trace.converged,
        format!(
            "final max gap {:.6} against {:.6}",
            trace.final_gap(),
            prob.params.gap_tol * diam
        ),
    );
    if trace.converged {
        let res = dom_residual(prob, trace.final_inner(), trace.final_outer())?;
        let worst = res.iter().copied().fold(0.0, f64::max);
        report.check(
            "fixed-point-residual",
            strict,
            worst <= bound,
            format!("H(Dom(I), O) = {worst:.6}, bound {bound:.6}"),
        );
    }
    Ok(())
}

fn run_zone(config: &RunConfig) -> Result<RunOutput> {
    let prob = problem(config)?;
    let mut report = RunReport::new(config.mode, prob.norm(), prob.k(), prob.dim());
    let trace = iterate_recording(prob)?;
    report.record_trace(&trace);
    iteration_checks(&mut report, config, prob, &trace)?;
    if prob.k() == 2 {
        let zone = two_site_zone(prob, &trace)?;
        let bound = 2.0 * prob.params.gap_tol * prob.bbox().diameter();
        let worst = zone.max_residual();
        report.check(
            "zone-residual",
            false,
            worst <= bound,
            format!("max residual {worst:.6}, bound {bound:.6}"),
        );
        report.zone = Some(ZoneSummary {
            difference: convergence_gap(
                &zone.least_first,
                &zone.greatest_first,
                prob.norm(),
                prob.params.spacing(prob.bbox()),
            )?,
            residuals: zone.residuals,
        });
    }
    write_figures(
        config,
        prob,
        &[trace.final_outer(), trace.final_inner()],
        trace.final_inner(),
    )?;
    Ok(RunOutput {
        report,
        trace: Some(trace),
        voronoi: None,
    })
}

fn run_oracle_compare(config: &RunConfig) -> Result<RunOutput> {
    let prob = problem(config)?;
    let mut report = RunReport::new(config.mode, prob.norm(), prob.k(), prob.dim());
    let trace = iterate_recording(prob)?;
    report.record_trace(&trace);
    let spec = GridSpec::new(prob.bbox().clone(), config.oracle_resolution)?;
    let grid = grid_iterate(prob, &spec, trace.iterations())?;
    let compare = |rays: &[DiagramTuple], cells: &[crate::oracle::MembershipGrid]| -> Result<Vec<Vec<f64>>> {
        rays.iter()
            .zip(cells)
            .map(|(t, g)| {
                let r = rasterize_tuple(t, &spec)?;
                (0..prob.k()).map(|k| symdiff_fraction(&r, g, k)).collect()
            })
            .collect()
    };
    let summary = OracleSummary {
        resolution: spec.resolution(),
        inner: compare(&trace.inner, &grid.inner)?,
        outer: compare(&trace.outer, &grid.outer)?,
        grid_gaps: grid.gaps.clone(),
    };
    let worst = summary
        .inner
        .iter()
        .chain(&summary.outer)
        .flatten()
        .copied()
        .fold(0.0, f64::max);
    report.check(
        "oracle-symdiff",
        prob.norm().is_strictly_convex(),
        worst < 0.02,
        format!("max symmetric-difference fraction {worst:.6}"),
    );
    report.oracle = Some(summary);
    if let Some(path) = &config.output.pgm {
        grid.outer.last().expect("grid trace has O(0)").write_pgm(path)?;
    }
    write_figures(
        config,
        prob,
        &[trace.final_outer(), trace.final_inner()],
        trace.final_inner(),
    )?;
    Ok(RunOutput {
        report,
        trace: Some(trace),
        voronoi: None,
    })
}

fn run_bench_mode(config: &RunConfig) -> Result<RunOutput> {
    let dim = config.bbox.dim();
    let mut report = RunReport::new(config.mode, &config.norm, 0, dim);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bench = run_bench(&config.bench, &config.norm, &config.bbox, &config.iteration, &mut rng)?;
    report.check(
        "bench-exponent",
        false,
        (1.7..=2.3).contains(&bench.exponent),
        format!("fitted exponent {:.4}", bench.exponent),
    );
    if let Some(s) = &bench.speedup {
        report.check(
            "bench-speedup",
            false,
            s.ratio >= 3.0,
            format!(
                "{:.2}x on {} workers for k = {} ({} hardware threads)",
                s.ratio, s.workers, s.k, bench.available_parallelism
            ),
        );
    }
    report.bench = Some(bench);
    Ok(RunOutput {
        report,
        trace: None,
        voronoi: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "mode": "zone",
        "norm": "l2",
        "box": {"lo": [-5, -5], "hi": [5, 5]},
        "sites": [[[-1, 0]], [[1, 0]]]
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL, None).unwrap();
        assert_eq!(c.mode, Mode::Zone);
        assert_eq!(c.iteration.ray_count, 720);
        assert_eq!(c.iteration.max_iters, 8);
        assert_eq!(c.iteration.gap_tol, 0.01);
        let p = c.problem.unwrap();
        assert!((p.params.eps(p.bbox()) - 1e-6 * 200f64.sqrt()).abs() < 1e-15);
        assert_eq!(c.workers, Workers::Auto);
    }

    #[test]
    fn bad_norm_is_reported_at_its_field() {
        let text = MINIMAL.replace("\"l2\"", "\"lp:0.5\"");
        match parse_config(&text, None) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "norm"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schema_errors_carry_the_path() {
        let text = MINIMAL.replace("\"sites\"", "\"iteration\": {\"ray_count\": \"many\"}, \"sites\"");
        match parse_config(&text, None) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "iteration.ray_count"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn shared_site_point_is_rejected() {
        let text = MINIMAL.replace("[[[-1, 0]], [[1, 0]]]", "[[[-1, 0], [2, 2]], [[1, 0], [2, 2]]]");
        let err = parse_config(&text, None).unwrap_err();
        assert!(matches!(err, Error::NotSeparated(ref m) if m.contains("0 and 1")), "{err}");
    }

    #[test]
    fn workers_forms() {
        let c = parse_config(&MINIMAL.replace("\"norm\"", "\"workers\": 3, \"norm\""), None).unwrap();
        assert_eq!(c.workers, Workers::Count(3));
        let c = parse_config(&MINIMAL.replace("\"norm\"", "\"workers\": \"auto\", \"norm\""), None).unwrap();
        assert_eq!(c.workers, Workers::Auto);
        assert!(parse_config(&MINIMAL.replace("\"norm\"", "\"workers\": \"many\", \"norm\""), None).is_err());
    }

    #[test]
    fn mode_override_and_missing_mode() {
        let text = MINIMAL.replace("\"mode\": \"zone\",", "");
        assert!(parse_config(&text, None).is_err());
        assert_eq!(parse_config(&text, Some(Mode::Voronoi)).unwrap().mode, Mode::Voronoi);
    }

    #[test]
    fn random_sites_come_from_the_seed() {
        let text = r#"{"mode": "zone", "box": {"lo": [-5, -5], "hi": [5, 5]},
                       "random_sites": {"count": 4}, "seed": 11}"#;
        let a = parse_config(text, None).unwrap().problem.unwrap();
        let b = parse_config(text, None).unwrap().problem.unwrap();
        assert_eq!(a.k(), 4);
        for (s, t) in a.sites().iter().zip(b.sites()) {
            assert_eq!(s.points(), t.points());
        }
    }

    #[test]
    fn voronoi_run_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = parse_config(MINIMAL, Some(Mode::Voronoi)).unwrap();
        c.output.svg = Some(dir.path().join("v.svg"));
        c.output.csv = Some(dir.path().join("v.csv"));
        c.output.report = Some(dir.path().join("v.json"));
        let out = run(&c).unwrap();
        assert!(!out.report.failed(), "{:?}", out.report.checks);
        assert!(dir.path().join("v.svg").exists());
        let rows = read_csv(&dir.path().join("v.csv")).unwrap();
        assert_eq!(rows.len(), out.voronoi.unwrap().ray_count());
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("v.json")).unwrap()).unwrap();
        assert_eq!(json["mode"], "voronoi");
    }
}
