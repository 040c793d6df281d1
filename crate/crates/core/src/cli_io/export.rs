//! SVG figures and CSV endpoint tables.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagram::DiagramTuple;
use crate::dominance::Site;
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22",
];

const CANVAS: f64 = 800.0;

/// How rays are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SvgStyle {
    /// Only the endpoints, as small dots.
    #[default]
    Endpoints,
    /// Each ray as a segment from its source.
    Rays,
}

pub fn component_color(k: usize) -> &'static str {
    PALETTE[k % PALETTE.len()]
}

/// Renders the tuples over the box: outer-type tuples translucent, inner
/// ones solid, sites as dots on top.
pub fn render_svg(tuples: &[&DiagramTuple], sites: &[Site], bbox: &BoundingBox, style: SvgStyle) -> Result<String> {
    if tuples.is_empty() {
        return Err(Error::domain("nothing to draw"));
    }
    if bbox.dim() != 2 {
        return Err(Error::Dimension {
            expected: 2,
            found: bbox.dim(),
        });
    }
    let lo = bbox.lo().coords();
    let hi = bbox.hi().coords();
    let scale = CANVAS / (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let (w, h) = ((hi[0] - lo[0]) * scale, (hi[1] - lo[1]) * scale);
    let px = |p: &[f64]| ((p[0] - lo[0]) * scale, (hi[1] - p[1]) * scale);

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.3} {h:.3}">"#
    );
    let _ = writeln!(out, r##"<rect x="0" y="0" width="{w:.3}" height="{h:.3}" fill="#ffffff" stroke="#000000"/>"##);
    // outer tuples first so inner ones stay visible
    let mut ordered: Vec<&DiagramTuple> = tuples.iter().copied().filter(|t| t.label.is_outer()).collect();
    ordered.extend(tuples.iter().copied().filter(|t| !t.label.is_outer()));
    for t in ordered {
        if t.regions.iter().any(|r| r.dim() != 2) {
            return Err(Error::Dimension {
                expected: 2,
                found: t.regions[0].dim(),
            });
        }
        let opacity = if t.label.is_outer() { 0.3 } else { 1.0 };
        let _ = writeln!(out, r#"<g id="{}" opacity="{opacity}">"#, t.label);
        for r in &t.regions {
            let color = component_color(r.site_id);
            match style {
                SvgStyle::Endpoints => {
                    let _ = writeln!(out, r#"<g fill="{color}">"#);
                    for ray in r.rays() {
                        let (x, y) = px(r.endpoint(ray).coords());
                        let _ = writeln!(out, r#"<circle cx="{x:.3}" cy="{y:.3}" r="1"/>"#);
                    }
                }
                SvgStyle::Rays => {
                    let _ = writeln!(out, r#"<g stroke="{color}" stroke-width="0.6">"#);
                    for ray in r.rays() {
                        let (x1, y1) = px(r.sources()[ray.source].coords());
                        let (x2, y2) = px(r.endpoint(ray).coords());
                        let _ = writeln!(out, r#"<line x1="{x1:.3}" y1="{y1:.3}" x2="{x2:.3}" y2="{y2:.3}"/>"#);
                    }
                }
            }
            let _ = writeln!(out, "</g>");
        }
        let _ = writeln!(out, "</g>");
    }
    let _ = writeln!(out, r##"<g id="sites" stroke="#000000" stroke-width="1">"##);
    for s in sites {
        for p in s.points() {
            let (x, y) = px(p.coords());
            let _ = writeln!(out, r#"<circle cx="{x:.3}" cy="{y:.3}" r="4" fill="{}"/>"#, component_color(s.id));
        }
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, "</svg>");
    Ok(out)
}

pub fn export_svg(tuples: &[&DiagramTuple], sites: &[Site], bbox: &BoundingBox, style: SvgStyle, path: &Path) -> Result<()> {
    let text = render_svg(tuples, sites, bbox, style)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `v` with 12 significant digits in plain decimal notation.
pub fn format_sig12(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let exp = v.abs().log10().floor() as i32;
    let decimals = (11 - exp).max(0) as usize;
    let mut s = format!("{v:.decimals$}");
    if s.contains('.') {
        let trimmed = s.trim_end_matches('0').trim_end_matches('.').len();
        s.truncate(trimmed);
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

fn axis(i: usize) -> String {
    match i {
        0 => "x".into(),
        1 => "y".into(),
        2 => "z".into(),
        _ => format!("x{i}"),
    }
}

/// Writes one row per ray in (component, source, direction) order.
pub fn write_csv<W: std::io::Write>(tuple: &DiagramTuple, out: W) -> std::result::Result<(), csv::Error> {
    let dim = tuple.regions.first().map_or(2, |r| r.dim());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["component_id".to_string()];
    header.extend((0..dim).map(|i| format!("source_{}", axis(i))));
    header.extend((0..dim).map(|i| format!("dir_{}", axis(i))));
    header.push("t_end".into());
    w.write_record(&header)?;
    for r in &tuple.regions {
        for ray in r.rays() {
            let mut row = vec![r.site_id.to_string()];
            row.extend(r.sources()[ray.source].coords().iter().map(|&v| format_sig12(v)));
            row.extend(ray.direction.coords().iter().map(|&v| format_sig12(v)));
            row.push(format_sig12(ray.t_end));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn export_csv(tuple: &DiagramTuple, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(tuple, file).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

/// One parsed CSV row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRay {
    pub component: usize,
    pub source: Vec<f64>,
    pub direction: Vec<f64>,
    pub t_end: f64,
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRay>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let width = r.headers().map_err(csv_err)?.len();
    if width < 4 || width % 2 != 0 {
        return Err(Error::domain(format!("{}: unexpected column count {width}", path.display())));
    }
    let dim = (width - 2) / 2;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| Error::domain(format!("{}: bad number {:?}", path.display(), &rec[i])))
        };
        let component = rec[0]
            .parse()
            .map_err(|_| Error::domain(format!("{}: bad component {:?}", path.display(), &rec[0])))?;
        rows.push(CsvRay {
            component,
            source: (1..=dim).map(num).collect::<Result<_>>()?,
            direction: (dim + 1..=2 * dim).map(num).collect::<Result<_>>()?,
            t_end: num(2 * dim + 1)?,
        });
    }
    Ok(rows)
}
