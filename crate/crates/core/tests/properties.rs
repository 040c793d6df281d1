use std::process::Command;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use zonelab::cli_io::{export_csv, random_sites, read_csv};
use zonelab::diagram::{cloud_hausdorff, iterate, voronoi, IterationParams, Problem};
use zonelab::dominance::{dom_region, region_to_cloud, DomParams, PointCloud, Site};
use zonelab::geometry::{dist_point_to_points, unit_directions, BoundingBox, NormSpec, Vector};
use zonelab::oracle::{grid_dom, grid_iterate, GridSpec};

fn unit_box() -> BoundingBox {
    BoundingBox::square(1.0)
}

fn norm_strategy() -> impl Strategy<Value = NormSpec> {
    prop_oneof![
        Just(NormSpec::L2),
        Just(NormSpec::L1),
        Just(NormSpec::LINF),
        (1.2f64..4.0).prop_map(NormSpec::Lp),
        Just(NormSpec::strange_default()),
    ]
}

fn point() -> impl Strategy<Value = (f64, f64)> {
    (-0.9f64..0.9, -0.9f64..0.9)
}

/// A site point and 1..5 competitors at least 0.05 away from it.
fn site_and_competitors() -> impl Strategy<Value = ((f64, f64), Vec<(f64, f64)>)> {
    (point(), prop::collection::vec(point(), 1..5)).prop_filter("competitor too close", |(p, a)| {
        a.iter().all(|q| (q.0 - p.0).hypot(q.1 - p.1) > 0.05)
    })
}

fn cloud(pts: &[(f64, f64)]) -> PointCloud {
    let v: Vec<Vector> = pts.iter().map(|&(x, y)| Vector::xy(x, y)).collect();
    PointCloud::from_vectors(&v)
}

fn plain_params(bbox: &BoundingBox, rays: usize) -> DomParams {
    DomParams {
        adaptive_depth: 0,
        ..DomParams::for_box(bbox, rays)
    }
}

fn dist(x: &Vector, pts: &[(f64, f64)], norm: &NormSpec) -> f64 {
    let v: Vec<Vector> = pts.iter().map(|&(x, y)| Vector::xy(x, y)).collect();
    dist_point_to_points(x, &v, norm).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ray_prefix_is_dominated_and_stops_at_the_boundary(
        (p, a) in site_and_competitors(),
        norm in norm_strategy(),
    ) {
        let bbox = unit_box();
        let params = plain_params(&bbox, 32);
        let site = Site::new(0, vec![Vector::xy(p.0, p.1)]).unwrap();
        let dirs = unit_directions(2, 32).unwrap();
        let region = dom_region(&site, &cloud(&a), &dirs, &bbox, &norm, &params).unwrap();
        let pv = Vector::xy(p.0, p.1);
        let tol = 1e-9;
        for ray in region.rays() {
            prop_assert!(ray.t_end >= 0.0);
            for i in 0..=8 {
                let x = pv.add(&ray.direction.scale(ray.t_end * i as f64 / 8.0)).unwrap();
                let own = dist(&x, &[p], &norm);
                prop_assert!(own <= dist(&x, &a, &norm) + tol, "prefix point {:?} not dominated", x);
            }
            let beyond = pv.add(&ray.direction.scale(ray.t_end + 3.0 * params.eps)).unwrap();
            if bbox.contains(beyond.coords()) {
                let own = dist(&beyond, &[p], &norm);
                prop_assert!(own >= dist(&beyond, &a, &norm) - tol, "endpoint short of the boundary");
            }
        }
    }

    #[test]
    fn more_competitors_never_grow_a_region(
        (p, a) in site_and_competitors(),
        extra in prop::collection::vec(point(), 1..4),
        norm in norm_strategy(),
    ) {
        let bbox = unit_box();
        let params = plain_params(&bbox, 24);
        let site = Site::new(0, vec![Vector::xy(p.0, p.1)]).unwrap();
        let dirs = unit_directions(2, 24).unwrap();
        let mut bigger = a.clone();
        bigger.extend(extra.iter().filter(|q| (q.0 - p.0).hypot(q.1 - p.1) > 0.05));
        let small = dom_region(&site, &cloud(&bigger), &dirs, &bbox, &norm, &params).unwrap();
        let large = dom_region(&site, &cloud(&a), &dirs, &bbox, &norm, &params).unwrap();
        prop_assert_eq!(small.rays().len(), large.rays().len());
        for (s, l) in small.rays().iter().zip(large.rays()) {
            prop_assert_eq!(&s.direction, &l.direction);
            prop_assert!(s.t_end <= l.t_end + params.eps);
        }
    }

    #[test]
    fn half_distance_ball_is_dominated((p, a) in site_and_competitors(), norm in norm_strategy()) {
        let bbox = unit_box();
        let params = plain_params(&bbox, 32);
        let pv = Vector::xy(p.0, p.1);
        let site = Site::new(0, vec![pv.clone()]).unwrap();
        let dirs = unit_directions(2, 32).unwrap();
        let region = dom_region(&site, &cloud(&a), &dirs, &bbox, &norm, &params).unwrap();
        let r = dist(&pv, &a, &norm);
        for ray in region.rays() {
            let end = pv.add(&ray.direction.scale(ray.t_end)).unwrap();
            let reach = dist(&end, &[p], &norm);
            // either the ray reached half the distance or the box stopped it
            let exit = zonelab::geometry::box_exit(&pv, &ray.direction, &bbox).unwrap();
            prop_assert!(reach >= r / 2.0 - 2.0 * params.eps || ray.t_end >= exit - params.eps);
        }
    }

    #[test]
    fn grid_dom_of_a_union_is_the_intersection(
        p in point(),
        a in prop::collection::vec(point(), 1..4),
        b in prop::collection::vec(point(), 1..4),
        norm in norm_strategy(),
    ) {
        let spec = GridSpec::new(unit_box(), 48).unwrap();
        let pc = cloud(&[p]);
        let mut ab = a.clone();
        ab.extend(&b);
        let ga = grid_dom(&pc, &cloud(&a), &spec, &norm).unwrap();
        let gb = grid_dom(&pc, &cloud(&b), &spec, &norm).unwrap();
        let gab = grid_dom(&pc, &cloud(&ab), &spec, &norm).unwrap();
        for cell in 0..spec.cell_count() {
            prop_assert_eq!(gab.contains(0, cell), ga.contains(0, cell) && gb.contains(0, cell));
        }
    }
}

#[test]
fn grid_iteration_is_nested() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let bbox = BoundingBox::square(5.0);
    let sites = random_sites(&mut rng, &bbox, 4, 2).unwrap();
    for norm in [NormSpec::L2, NormSpec::L1, NormSpec::strange_default()] {
        let prob = Problem::new(sites.clone(), bbox.clone(), norm, IterationParams::default()).unwrap();
        let spec = GridSpec::new(bbox.clone(), 96).unwrap();
        let g = grid_iterate(&prob, &spec, 4).unwrap();
        for n in 0..g.inner.len() {
            for k in 0..prob.k() {
                assert_eq!(g.inner[n].excess_cells(k, &g.outer[n]), 0, "{norm:?} I({n}) in O({n})");
                if n > 0 {
                    assert_eq!(g.inner[n - 1].excess_cells(k, &g.inner[n]), 0, "{norm:?} I grows");
                    assert_eq!(g.outer[n].excess_cells(k, &g.outer[n - 1]), 0, "{norm:?} O shrinks");
                }
            }
        }
    }
}

#[test]
fn inner_iterates_approach_the_last_one_monotonically() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let bbox = BoundingBox::square(5.0);
    let sites = random_sites(&mut rng, &bbox, 5, 1).unwrap();
    let params = IterationParams {
        ray_count: 360,
        max_iters: 6,
        gap_tol: 1e-6,
        ..IterationParams::default()
    };
    let prob = Problem::new(sites, bbox.clone(), NormSpec::L2, params).unwrap();
    let t = iterate(&prob).unwrap();
    let last = t.final_inner().clouds(4).unwrap();
    let slack = prob.params.slack(&bbox);
    let mut prev = vec![f64::INFINITY; prob.k()];
    for n in 1..t.inner.len() {
        let clouds = t.inner[n].clouds(4).unwrap();
        for k in 0..prob.k() {
            let h = cloud_hausdorff(&clouds[k], &last[k], prob.norm()).unwrap();
            assert!(h <= prev[k] + slack, "component {k}: {h} after {} at n={n}", prev[k]);
            prev[k] = h;
        }
    }
}

#[test]
fn symmetric_pair_gives_mirrored_csv() {
    let bbox = BoundingBox::square(2.0);
    let params = IterationParams {
        ray_count: 64,
        adaptive_depth: 0,
        max_iters: 3,
        ..IterationParams::default()
    };
    let sites = vec![vec![Vector::xy(0.0, 1.0)], vec![Vector::xy(0.0, -1.0)]];
    let prob = Problem::new(sites, bbox.clone(), NormSpec::L2, params).unwrap();
    let t = iterate(&prob).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pair.csv");
    export_csv(t.final_inner(), &path).unwrap();
    let rows = read_csv(&path).unwrap();
    let (upper, lower): (Vec<_>, Vec<_>) = rows.iter().partition(|r| r.component == 0);
    assert_eq!(upper.len(), 64);
    assert_eq!(lower.len(), 64);
    let tol = 1e-5 * bbox.diameter();
    for u in &upper {
        let m = lower
            .iter()
            .find(|l| (l.direction[0] - u.direction[0]).abs() < 1e-9 && (l.direction[1] + u.direction[1]).abs() < 1e-9)
            .expect("mirrored direction");
        assert!((m.t_end - u.t_end).abs() <= tol, "{:?} vs {:?}", u, m);
        assert_eq!(m.source, vec![u.source[0], -u.source[1]]);
    }
}

#[test]
fn voronoi_in_three_dimensions() {
    let bbox = BoundingBox::new(Vector::new(vec![-1.0; 3]).unwrap(), Vector::new(vec![1.0; 3]).unwrap()).unwrap();
    let pts = [[0.5, 0.0, 0.0], [-0.5, 0.2, 0.0], [0.0, -0.4, 0.5]];
    let sites: Vec<Vec<Vector>> = pts.iter().map(|p| vec![Vector::new(p.to_vec()).unwrap()]).collect();
    let params = IterationParams {
        ray_count: 200,
        ..IterationParams::default()
    };
    let prob = Problem::new(sites, bbox.clone(), NormSpec::L2, params).unwrap();
    let v = voronoi(&prob).unwrap();
    let eps = prob.params.eps(&bbox);
    for (k, region) in v.regions.iter().enumerate() {
        let own = prob.sites()[k].points();
        let others: Vec<Vector> = prob
            .sites()
            .iter()
            .filter(|s| s.id != k)
            .flat_map(|s| s.points().to_vec())
            .collect();
        for ray in region.rays() {
            let x = region.endpoint(ray);
            let d_own = dist_point_to_points(&x, own, prob.norm()).unwrap();
            let d_other = dist_point_to_points(&x, &others, prob.norm()).unwrap();
            assert!(d_own <= d_other + 1e-9, "endpoint {x:?} of site {k}");
        }
        let cloud = region_to_cloud(region, 2).unwrap();
        assert!(cloud.len() > region.rays().len());
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v3.csv");
    export_csv(&v, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("component_id,source_x,source_y,source_z,dir_x,dir_y,dir_z,t_end\n"));
    assert_eq!(text.lines().count(), 1 + v.ray_count());
    let rows = read_csv(&path).unwrap();
    for r in rows {
        assert_eq!(r.direction.len(), 3);
        assert!(r.t_end >= -eps);
    }
}

fn zonelab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_zonelab"))
}

#[test]
fn cli_zone_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{
            "norm": "l2",
            "box": {"lo": [-2, -2], "hi": [2, 2]},
            "sites": [[[0, 1]], [[0, -1]], [[1.2, 0.3]]],
            "iteration": {"ray_count": 180},
            "seed": 3
        }"#,
    )
    .unwrap();
    let (svg, csv, report) = (dir.path().join("z.svg"), dir.path().join("z.csv"), dir.path().join("z.json"));
    let out = zonelab()
        .args(["zone", "--config"])
        .arg(&cfg)
        .arg("--svg")
        .arg(&svg)
        .arg("--csv")
        .arg(&csv)
        .arg("--report")
        .arg(&report)
        .args(["--workers", "2"])
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "stdout {stdout} stderr {}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("sandwich-grid"));
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<svg"));
    assert!(read_csv(&csv).unwrap().len() >= 3 * 180);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["mode"], "zone");
    assert!(json["iterations"].as_u64().unwrap() >= 1);
}

#[test]
fn cli_reports_config_errors_with_their_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(
        &cfg,
        r#"{"norm": "l0", "box": {"lo": [-1, -1], "hi": [1, 1]}, "sites": [[[0, 0]], [[0.5, 0]]]}"#,
    )
    .unwrap();
    let out = zonelab().args(["voronoi", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("norm"));

    let missing = zonelab().args(["voronoi", "--config", "/nonexistent/x.json"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}
