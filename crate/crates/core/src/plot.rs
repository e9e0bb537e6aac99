//! Minimal SVG output: quiver overlays, contour lines and line traces.

use std::fmt::Write;

use crate::dynamics::VectorFieldSamples;
use crate::error::{shape, Result};
use crate::field::{NodalField, PointSet};

pub const NOISY: &str = "blue";
pub const CLEAN: &str = "black";
pub const RESTORED: &str = "red";

const SIZE: f64 = 600.0;
const MARGIN: f64 = 30.0;

/// Maps a data rectangle onto the drawing area, y pointing up.
struct Frame {
    lo: [f64; 2],
    scale: f64,
    height: f64,
}

impl Frame {
    fn new(lo: [f64; 2], hi: [f64; 2]) -> Frame {
        let w = (hi[0] - lo[0]).max(1e-12);
        let h = (hi[1] - lo[1]).max(1e-12);
        let scale = (SIZE - 2.0 * MARGIN) / w.max(h);
        Frame { lo, scale, height: h * scale + 2.0 * MARGIN }
    }

    fn width(&self, hi0: f64) -> f64 {
        (hi0 - self.lo[0]).max(1e-12) * self.scale + 2.0 * MARGIN
    }

    fn x(&self, v: f64) -> f64 {
        MARGIN + (v - self.lo[0]) * self.scale
    }

    fn y(&self, v: f64) -> f64 {
        self.height - MARGIN - (v - self.lo[1]) * self.scale
    }
}

fn header(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
}

fn bounds(points: impl Iterator<Item = [f64; 2]>) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    (lo, hi)
}

/// One set of arrows.
pub struct QuiverLayer<'a> {
    pub samples: &'a VectorFieldSamples,
    pub color: &'a str,
}

/// Arrows for every sample of every layer, all sharing one length scale. Samples
/// must be two-dimensional; see [`project_plane`] for higher dimensions.
pub fn quiver_svg(layers: &[QuiverLayer<'_>]) -> Result<String> {
    if layers.is_empty() || layers.iter().any(|l| l.samples.dim() != 2 || l.samples.is_empty()) {
        return Err(shape("quiver plots need non-empty two-dimensional samples"));
    }
    let (lo, hi) = bounds(layers.iter().flat_map(|l| l.samples.points().iter().map(|p| [p[0], p[1]])));
    let frame = Frame::new(lo, hi);
    let n = layers[0].samples.len() as f64;
    // Arrow length: the longest vector spans about one average sample spacing.
    let spacing = ((hi[0] - lo[0]).max(1e-12) * (hi[1] - lo[1]).max(1e-12) / n).sqrt();
    let vmax = layers.iter().flat_map(|l| l.samples.vectors().chunks(2).map(|v| v[0].hypot(v[1]))).fold(0.0, f64::max);
    let len = if vmax > 0.0 { spacing / vmax } else { 0.0 };
    let mut out = String::new();
    header(&mut out, frame.width(hi[0]), frame.height);
    for layer in layers {
        let _ = writeln!(out, r#"<g stroke="{c}" fill="{c}" stroke-width="1">"#, c = layer.color);
        for j in 0..layer.samples.len() {
            let p = layer.samples.points().get(j);
            let v = layer.samples.vector(j);
            let (x0, y0) = (frame.x(p[0]), frame.y(p[1]));
            let (x1, y1) = (frame.x(p[0] + len * v[0]), frame.y(p[1] + len * v[1]));
            let _ = writeln!(out, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y1:.2}"/>"#);
            let (dx, dy) = (x1 - x0, y1 - y0);
            let l = dx.hypot(dy);
            let (ux, uy) = if l > 0.0 { (dx / l, dy / l) } else { (0.0, 0.0) };
            let head = 0.3 * l;
            let (bx, by) = (x1 - head * ux, y1 - head * uy);
            let (px, py) = (-uy * head * 0.5, ux * head * 0.5);
            let _ = writeln!(
                out,
                r#"<polygon points="{x1:.2},{y1:.2} {:.2},{:.2} {:.2},{:.2}"/>"#,
                bx + px,
                by + py,
                bx - px,
                by - py
            );
        }
        let _ = writeln!(out, "</g>");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Projects samples onto the plane of their two leading principal directions.
pub fn project_plane(samples: &VectorFieldSamples) -> Result<VectorFieldSamples> {
    let n = samples.dim();
    if n == 2 {
        return Ok(samples.clone());
    }
    let pts = samples.points();
    let m = pts.len();
    if m < 2 {
        return Err(shape("need at least two samples to project"));
    }
    let mean: Vec<f64> = (0..n).map(|a| pts.iter().map(|p| p[a]).sum::<f64>() / m as f64).collect();
    let centred = nalgebra::DMatrix::from_fn(m, n, |i, a| pts.get(i)[a] - mean[a]);
    let svd = centred.svd(false, true);
    let vt = svd.v_t.ok_or_else(|| shape("principal directions unavailable"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let axis = |c: usize, v: &[f64]| -> f64 { (0..n).map(|a| vt[(order[c], a)] * v[a]).sum() };
    let mut coords = Vec::with_capacity(2 * m);
    let mut vecs = Vec::with_capacity(2 * m);
    for j in 0..m {
        let c: Vec<f64> = (0..n).map(|a| pts.get(j)[a] - mean[a]).collect();
        coords.extend([axis(0, &c), axis(1, &c)]);
        let v = samples.vector(j);
        vecs.extend([axis(0, v), axis(1, v)]);
    }
    VectorFieldSamples::new(PointSet::new(2, coords)?, vecs, None)
}

/// Iso-lines of a 2-D nodal field at `levels` evenly spaced values, by marching squares.
pub fn contour_svg(field: &NodalField, levels: usize) -> Result<String> {
    let g = field.grid();
    if g.dim() != 2 {
        return Err(shape("contour plots need a two-dimensional field"));
    }
    let (nx, ny) = (g.counts()[0], g.counts()[1]);
    let vals = field.values();
    let at = |i: usize, j: usize| vals[g.flat_index(&[i, j])];
    let (vmin, vmax) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let lo = [g.mins()[0], g.mins()[1]];
    let hi = g.maxs();
    let frame = Frame::new(lo, [hi[0], hi[1]]);
    let mut out = String::new();
    header(&mut out, frame.width(hi[0]), frame.height);
    let _ = writeln!(
        out,
        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="gray"/>"#,
        frame.x(lo[0]),
        frame.y(hi[1]),
        frame.x(hi[0]) - frame.x(lo[0]),
        frame.y(lo[1]) - frame.y(hi[1])
    );
    if !(vmax > vmin) {
        out.push_str("</svg>\n");
        return Ok(out);
    }
    for l in 0..levels {
        let c = vmin + (vmax - vmin) * (l as f64 + 0.5) / levels as f64;
        let _ = writeln!(out, r#"<g stroke="black" stroke-width="1" data-level="{c:.6}">"#);
        for i in 0..nx - 1 {
            for j in 0..ny - 1 {
                let x = [g.coordinate(0, i), g.coordinate(0, i + 1)];
                let y = [g.coordinate(1, j), g.coordinate(1, j + 1)];
                // Corners counter-clockwise from the lower left.
                let corners = [
                    (x[0], y[0], at(i, j)),
                    (x[1], y[0], at(i + 1, j)),
                    (x[1], y[1], at(i + 1, j + 1)),
                    (x[0], y[1], at(i, j + 1)),
                ];
                let mut crossings = Vec::with_capacity(4);
                for e in 0..4 {
                    let (ax, ay, av) = corners[e];
                    let (bx, by, bv) = corners[(e + 1) % 4];
                    if (av < c) != (bv < c) {
                        let t = (c - av) / (bv - av);
                        crossings.push((ax + t * (bx - ax), ay + t * (by - ay)));
                    }
                }
                let segments: &[(usize, usize)] = match crossings.len() {
                    2 => &[(0, 1)],
                    // Saddle: pair by the cell-centre value.
                    4 => {
                        let centre = 0.25 * corners.iter().map(|c| c.2).sum::<f64>();
                        if (centre < c) == (corners[0].2 < c) {
                            &[(0, 3), (1, 2)]
                        } else {
                            &[(0, 1), (2, 3)]
                        }
                    }
                    _ => &[],
                };
                for &(a, b) in segments {
                    let _ = writeln!(
                        out,
                        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#,
                        frame.x(crossings[a].0),
                        frame.y(crossings[a].1),
                        frame.x(crossings[b].0),
                        frame.y(crossings[b].1)
                    );
                }
            }
        }
        let _ = writeln!(out, "</g>");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// One named series against its index.
pub struct Trace<'a> {
    pub values: &'a [f64],
    pub color: &'a str,
}

/// Line plot of several series over a shared index axis.
pub fn trace_svg(traces: &[Trace<'_>]) -> Result<String> {
    let len = traces.iter().map(|t| t.values.len()).max().unwrap_or(0);
    if len < 2 {
        return Err(shape("traces need at least two values"));
    }
    let (mut vmin, mut vmax) = traces
        .iter()
        .flat_map(|t| t.values.iter())
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(vmax > vmin) {
        vmin -= 0.5;
        vmax += 0.5;
    }
    let (w, h) = (SIZE, SIZE * 0.6);
    let sx = (w - 2.0 * MARGIN) / (len - 1) as f64;
    let sy = (h - 2.0 * MARGIN) / (vmax - vmin);
    let mut out = String::new();
    header(&mut out, w, h);
    for t in traces {
        let pts: Vec<String> = t
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, v)| format!("{:.2},{:.2}", MARGIN + i as f64 * sx, h - MARGIN - (v - vmin) * sy))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="1" points="{}"/>"#,
            t.color,
            pts.join(" ")
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}
