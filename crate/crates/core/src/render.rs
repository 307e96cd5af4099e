//! Deterministic SVG rendering of power diagrams.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cells::PowerCellStats;
use crate::config::{Palette, RenderSection};
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::measure::{DiscreteTargetMeasure, SourceDomain};
use crate::singularity::{Crossing, SingularityGraph};

/// Fraction of the scene extent added around it.
const MARGIN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneCell {
    pub index: usize,
    pub polygon: Vec<Point2>,
    pub fill: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOverlay {
    pub p: Point2,
    pub q: Point2,
    /// Crossing positions and whether each one is singular.
    pub markers: Vec<(Point2, bool)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderScene {
    /// World-space viewport `(lo, hi)`.
    pub viewport: (Point2, Point2),
    pub size: u32,
    pub outline: Vec<Point2>,
    pub cells: Vec<SceneCell>,
    pub targets: Vec<(Point2, String)>,
    pub singular_edges: Vec<[Point2; 2]>,
    pub probe: Option<ProbeOverlay>,
}

/// Colour of group `g`; cells of one group differ slightly in lightness.
fn colour(palette: Palette, group: usize, cell: usize) -> String {
    let shade = (cell % 5) as f64 * 0.03;
    let (h, s, l) = match palette {
        Palette::Default => ((group as f64 * 137.508) % 360.0, 0.55, 0.62 + shade),
        Palette::Grey => (0.0, 0.0, 0.55 + 0.25 * ((group % 4) as f64 / 3.0) + shade * 0.5),
    };
    let (r, g, b) = hsl_to_rgb(h, s, l.min(0.95));
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn hsl_to_rgb(h: f64, s: f64, l: f64) -> (u8, u8, u8) {
    let c = (1.0 - (2.0 * l - 1.0).abs()) * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = l - 0.5 * c;
    let to = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    (to(r), to(g), to(b))
}

impl RenderScene {
    /// Builds the scene from exact planar cell statistics. Cells are coloured
    /// by `labels` when given, otherwise by the singularity regions, otherwise
    /// all alike.
    pub fn build(
        stats: &PowerCellStats,
        domain: &SourceDomain,
        target: &DiscreteTargetMeasure,
        labels: Option<&[usize]>,
        graph: Option<&SingularityGraph>,
        options: &RenderSection,
    ) -> Result<Self> {
        let cells = stats.cells.as_ref().ok_or(Error::FacetMeasuresUnavailable)?;
        if cells.len() != target.len() {
            return Err(Error::LengthMismatch {
                expected: target.len(),
                found: cells.len(),
            });
        }
        let outline = domain
            .polygon_2d()
            .ok_or_else(|| Error::DimensionUnsupported(domain.dim()))?
            .vertices()
            .to_vec();

        let mut group = vec![0usize; target.len()];
        if let Some(l) = labels.filter(|l| l.len() == target.len()) {
            group.copy_from_slice(l);
        } else if let Some(g) = graph {
            for (r, region) in g.regions.iter().enumerate() {
                for &c in &region.cells {
                    group[c] = r;
                }
            }
        }

        let scene_cells = cells
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_empty())
            .map(|(i, c)| SceneCell {
                index: i,
                polygon: c.vertices().to_vec(),
                fill: colour(options.palette, group[i], i),
            })
            .collect();
        let targets: Vec<(Point2, String)> = (0..target.len())
            .map(|i| (target.point2(i), colour(options.palette, group[i], 0)))
            .collect();
        let singular_edges = match graph {
            Some(g) if options.show_singular_edges => g.facets.iter().map(|f| f.segment).collect(),
            _ => Vec::new(),
        };

        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in outline.iter().chain(targets.iter().map(|(p, _)| p)) {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let pad = MARGIN * (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
        Ok(Self {
            viewport: ([lo[0] - pad, lo[1] - pad], [hi[0] + pad, hi[1] + pad]),
            size: options.size,
            outline,
            cells: scene_cells,
            targets,
            singular_edges,
            probe: None,
        })
    }

    pub fn with_probe(mut self, p: Point2, q: Point2, crossings: &[Crossing]) -> Self {
        let markers = crossings
            .iter()
            .map(|c| ([p[0] + c.t * (q[0] - p[0]), p[1] + c.t * (q[1] - p[1])], c.is_singular))
            .collect();
        self.probe = Some(ProbeOverlay { p, q, markers });
        self
    }

    fn pixel_size(&self) -> (f64, f64, f64) {
        let (lo, hi) = self.viewport;
        let (w, h) = (hi[0] - lo[0], hi[1] - lo[1]);
        let scale = self.size as f64 / w.max(h);
        (scale, w * scale, h * scale)
    }

    fn to_px(&self, p: Point2) -> (f64, f64) {
        let (lo, hi) = self.viewport;
        let (scale, _, _) = self.pixel_size();
        ((p[0] - lo[0]) * scale, (hi[1] - p[1]) * scale)
    }

    fn points(&self, poly: &[Point2]) -> String {
        let mut s = String::new();
        for (k, &p) in poly.iter().enumerate() {
            let (x, y) = self.to_px(p);
            if k > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{x:.3},{y:.3}");
        }
        s
    }

    pub fn to_svg(&self) -> String {
        let (_, w, h) = self.pixel_size();
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.3} {h:.3}">"#
        );
        let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
        let _ = writeln!(out, r##"<g id="cells" stroke="#333333" stroke-width="0.5">"##);
        for c in &self.cells {
            let _ = writeln!(
                out,
                r#"<polygon data-cell="{}" points="{}" fill="{}"/>"#,
                c.index,
                self.points(&c.polygon),
                c.fill
            );
        }
        let _ = writeln!(out, "</g>");
        let _ = writeln!(
            out,
            r##"<polygon id="domain" points="{}" fill="none" stroke="#000000" stroke-width="1.5"/>"##,
            self.points(&self.outline)
        );
        if !self.singular_edges.is_empty() {
            let _ = writeln!(out, r##"<g id="singular" stroke="#d62728" stroke-width="3" stroke-linecap="round">"##);
            for e in &self.singular_edges {
                let (a, b) = (self.to_px(e[0]), self.to_px(e[1]));
                let _ = writeln!(out, r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}"/>"#, a.0, a.1, b.0, b.1);
            }
            let _ = writeln!(out, "</g>");
        }
        let _ = writeln!(out, r##"<g id="targets" stroke="#000000" stroke-width="0.5">"##);
        for (p, fill) in &self.targets {
            let (x, y) = self.to_px(*p);
            let _ = writeln!(out, r#"<circle cx="{x:.3}" cy="{y:.3}" r="2.5" fill="{fill}"/>"#);
        }
        let _ = writeln!(out, "</g>");
        if let Some(probe) = &self.probe {
            let (a, b) = (self.to_px(probe.p), self.to_px(probe.q));
            let _ = writeln!(out, r#"<g id="probe">"#);
            let _ = writeln!(
                out,
                r##"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="#1f77b4" stroke-width="1.5"/>"##,
                a.0, a.1, b.0, b.1
            );
            for (m, singular) in &probe.markers {
                let (x, y) = self.to_px(*m);
                let fill = if *singular { "#d62728" } else { "#1f77b4" };
                let _ = writeln!(out, r#"<circle cx="{x:.3}" cy="{y:.3}" r="3" fill="{fill}"/>"#);
            }
            let _ = writeln!(out, "</g>");
        }
        out.push_str("</svg>\n");
        out
    }
}
