//! Standalone SVG scatter plots.

use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result, Scalar, Tensor};

use super::project::{far_first, View, DEFAULT_VIEWS};
use super::EmbeddingSet;

/// Class colors, cycled for labels beyond ten.
pub const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

const LEGEND_WIDTH: f64 = 150.0;
const TITLE_HEIGHT: f64 = 28.0;
const PAD: f64 = 12.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SvgOptions {
    /// Side of one square plot panel, in pixels.
    pub panel_size: f64,
    pub marker_radius: f64,
    pub marker_opacity: f64,
    pub title: Option<String>,
    /// View for 3-D sets; `None` draws one panel per default view.
    pub view: Option<View>,
    pub show_weights: bool,
    pub show_centers: bool,
    pub show_targets: bool,
}

impl Default for SvgOptions {
    fn default() -> Self {
        SvgOptions {
            panel_size: 480.0,
            marker_radius: 2.0,
            marker_opacity: 0.6,
            title: None,
            view: None,
            show_weights: true,
            show_centers: true,
            show_targets: true,
        }
    }
}

fn color(label: usize) -> &'static str {
    PALETTE[label % PALETTE.len()]
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Fixed-precision pixel coordinate.
fn px(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

/// Screen-space content of one panel.
struct Panel {
    points: Vec<[f64; 2]>,
    /// Drawing order of `points`.
    order: Vec<usize>,
    labels: Vec<usize>,
    weights: Option<Vec<[f64; 2]>>,
    centers: Option<Vec<[f64; 2]>>,
    targets: Option<Vec<[f64; 2]>>,
    unit_circle: bool,
    caption: Option<String>,
}

fn rows2<T: Scalar>(t: &Tensor<T>) -> Vec<[f64; 2]> {
    (0..t.shape()[0]).map(|i| [t.row(i)[0].to_f64_lossy(), t.row(i)[1].to_f64_lossy()]).collect()
}

fn rows3<T: Scalar>(t: &Tensor<T>, view: View) -> Vec<[f64; 2]> {
    (0..t.shape()[0])
        .map(|i| {
            let r = t.row(i);
            let q = view.apply([r[0].to_f64_lossy(), r[1].to_f64_lossy(), r[2].to_f64_lossy()]);
            [q[0], q[1]]
        })
        .collect()
}

fn panels<T: Scalar>(es: &EmbeddingSet<T>, opts: &SvgOptions) -> Result<Vec<Panel>> {
    let pick = |on: bool, t: &Option<Tensor<T>>| if on { t.clone() } else { None };
    let weights = pick(opts.show_weights, &es.overlays.weights);
    let centers = pick(opts.show_centers, &es.overlays.centers);
    let targets = pick(opts.show_targets, &es.overlays.targets);
    match es.dim() {
        2 => Ok(vec![Panel {
            points: rows2(&es.points),
            order: (0..es.len()).collect(),
            labels: es.labels.clone(),
            weights: weights.as_ref().map(rows2),
            centers: centers.as_ref().map(rows2),
            targets: targets.as_ref().map(rows2),
            unit_circle: false,
            caption: None,
        }]),
        3 => {
            let views: Vec<View> = match opts.view {
                Some(v) => vec![v],
                None => DEFAULT_VIEWS.to_vec(),
            };
            Ok(views
                .into_iter()
                .map(|v| {
                    let depth: Vec<f64> = (0..es.len())
                        .map(|i| {
                            let r = es.points.row(i);
                            v.apply([r[0].to_f64_lossy(), r[1].to_f64_lossy(), r[2].to_f64_lossy()])[2]
                        })
                        .collect();
                    Panel {
                        points: rows3(&es.points, v),
                        order: far_first(&depth),
                        labels: es.labels.clone(),
                        weights: weights.as_ref().map(|t| rows3(t, v)),
                        centers: centers.as_ref().map(|t| rows3(t, v)),
                        targets: targets.as_ref().map(|t| rows3(t, v)),
                        unit_circle: false,
                        caption: Some(format!("azimuth {}°, elevation {}°", v.azimuth, v.elevation)),
                    }
                })
                .collect())
        }
        d => Err(Error::Dimension(format!("cannot plot {d}-D points"))),
    }
}

/// Half-width of the square data window centered on the origin.
fn half_extent(panel: &Panel) -> f64 {
    if panel.unit_circle {
        return 1.15;
    }
    let mut h = 0.0f64;
    let sets = [Some(&panel.points), panel.centers.as_ref(), panel.targets.as_ref()];
    for p in sets.into_iter().flatten().flatten() {
        h = h.max(p[0].abs()).max(p[1].abs());
    }
    if h > 0.0 && h.is_finite() {
        h * 1.08
    } else {
        1.0
    }
}

fn draw_panel(out: &mut String, panel: &Panel, x0: f64, y0: f64, size: f64, opts: &SvgOptions) {
    let h = half_extent(panel);
    let to_px = |p: [f64; 2]| -> (f64, f64) {
        (x0 + (p[0] + h) / (2.0 * h) * size, y0 + (h - p[1]) / (2.0 * h) * size)
    };
    let (ox, oy) = to_px([0.0, 0.0]);
    let _ = writeln!(
        out,
        r##"<g class="panel"><rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#cccccc"/>"##,
        px(x0),
        px(y0),
        px(size),
        px(size)
    );
    let _ = writeln!(
        out,
        r##"<path class="axes" d="M{} {}H{}M{} {}V{}" stroke="#e0e0e0" stroke-width="1"/>"##,
        px(x0),
        px(oy),
        px(x0 + size),
        px(ox),
        px(y0),
        px(y0 + size)
    );
    if panel.unit_circle {
        let _ = writeln!(
            out,
            r##"<circle class="unit-circle" cx="{}" cy="{}" r="{}" fill="none" stroke="#555555" stroke-width="1"/>"##,
            px(ox),
            px(oy),
            px(size / (2.0 * h))
        );
    }
    if let Some(c) = &panel.caption {
        let _ = writeln!(
            out,
            r##"<text class="caption" x="{}" y="{}" font-family="sans-serif" font-size="11" fill="#444444">{}</text>"##,
            px(x0 + 4.0),
            px(y0 + size - 5.0),
            escape(c)
        );
    }
    let _ = writeln!(out, r#"<g class="points" fill-opacity="{}">"#, opts.marker_opacity);
    for &i in &panel.order {
        let (x, y) = to_px(panel.points[i]);
        let _ = writeln!(
            out,
            r#"<circle class="pt" cx="{}" cy="{}" r="{}" fill="{}"/>"#,
            px(x),
            px(y),
            px(opts.marker_radius),
            color(panel.labels[i])
        );
    }
    out.push_str("</g>\n");
    if let Some(w) = &panel.weights {
        // rays scaled to the window, direction only
        let reach = 0.95 * h;
        for (j, d) in w.iter().enumerate() {
            let n = (d[0] * d[0] + d[1] * d[1]).sqrt();
            if !(n > 0.0) {
                continue;
            }
            let (x, y) = to_px([d[0] / n * reach, d[1] / n * reach]);
            let _ = writeln!(
                out,
                r#"<line class="weight" x1="{}" y1="{}" x2="{}" y2="{}" stroke="{}" stroke-width="2"/>"#,
                px(ox),
                px(oy),
                px(x),
                px(y),
                color(j)
            );
        }
    }
    if let Some(c) = &panel.centers {
        let s = 4.0 * opts.marker_radius.max(1.0);
        for (j, p) in c.iter().enumerate() {
            let (x, y) = to_px(*p);
            let _ = writeln!(
                out,
                r##"<rect class="center" x="{}" y="{}" width="{}" height="{}" fill="{}" stroke="#000000"/>"##,
                px(x - s / 2.0),
                px(y - s / 2.0),
                px(s),
                px(s),
                color(j)
            );
        }
    }
    if let Some(t) = &panel.targets {
        let a = 3.0 * opts.marker_radius.max(1.5);
        for p in t {
            let (x, y) = to_px(*p);
            let _ = writeln!(
                out,
                r##"<path class="target" d="M{} {}L{} {}M{} {}L{} {}" stroke="#000000" stroke-width="2"/>"##,
                px(x - a),
                px(y - a),
                px(x + a),
                px(y + a),
                px(x - a),
                px(y + a),
                px(x + a),
                px(y - a)
            );
        }
    }
    out.push_str("</g>\n");
}

fn document(panels: &[Panel], class_names: &[String], opts: &SvgOptions) -> String {
    let size = opts.panel_size;
    let top = if opts.title.is_some() { TITLE_HEIGHT } else { 0.0 } + PAD;
    let width = PAD + panels.len() as f64 * (size + PAD) + LEGEND_WIDTH;
    let legend_h = 18.0 * class_names.len() as f64 + PAD;
    let height = top + size.max(legend_h) + PAD;
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = px(width),
        h = px(height)
    );
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n");
    if let Some(t) = &opts.title {
        let _ = writeln!(
            out,
            r#"<text class="title" x="{}" y="{}" font-family="sans-serif" font-size="16">{}</text>"#,
            px(PAD),
            px(PAD + 14.0),
            escape(t)
        );
    }
    for (k, p) in panels.iter().enumerate() {
        draw_panel(&mut out, p, PAD + k as f64 * (size + PAD), top, size, opts);
    }
    let lx = PAD + panels.len() as f64 * (size + PAD);
    out.push_str("<g class=\"legend\" font-family=\"sans-serif\" font-size=\"12\">\n");
    for (j, name) in class_names.iter().enumerate() {
        let y = top + 18.0 * j as f64;
        let _ = writeln!(
            out,
            r#"<g class="entry"><rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text></g>"#,
            px(lx),
            px(y),
            color(j),
            px(lx + 16.0),
            px(y + 9.5),
            escape(name)
        );
    }
    out.push_str("</g>\n</svg>\n");
    out
}

/// Scatter plot of the set: one marker per sample, legend of class names and
/// the overlays enabled in `opts`. 3-D sets are drawn through `opts.view` or,
/// when unset, side by side through the three default views.
pub fn render_svg<T: Scalar>(es: &EmbeddingSet<T>, opts: &SvgOptions) -> Result<String> {
    if es.is_empty() {
        return Err(Error::Input("cannot render an empty embedding set".into()));
    }
    Ok(document(&panels(es, opts)?, &es.class_names, opts))
}

pub fn write_svg(path: &Path, svg: &str) -> Result<()> {
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitCircleRender {
    pub svg: String,
    /// Points left out because their norm was (near) zero.
    pub skipped: usize,
}

/// 2-D points scaled onto the unit circle, drawn with the reference circle.
/// Weight directions are kept; centers and targets are not drawn.
pub fn render_unit_circle_projection<T: Scalar>(es: &EmbeddingSet<T>, opts: &SvgOptions) -> Result<UnitCircleRender> {
    if es.dim() != 2 {
        return Err(Error::Dimension(format!("unit-circle projection needs 2-D points, got {}-D", es.dim())));
    }
    if es.is_empty() {
        return Err(Error::Input("cannot render an empty embedding set".into()));
    }
    let mut points = Vec::with_capacity(es.len());
    let mut labels = Vec::with_capacity(es.len());
    let mut skipped = 0;
    for (i, p) in rows2(&es.points).into_iter().enumerate() {
        let n = (p[0] * p[0] + p[1] * p[1]).sqrt();
        if n > crate::tensor::NORM_EPS {
            points.push([p[0] / n, p[1] / n]);
            labels.push(es.labels[i]);
        } else {
            skipped += 1;
        }
    }
    let panel = Panel {
        order: (0..points.len()).collect(),
        points,
        labels,
        weights: if opts.show_weights { es.overlays.weights.as_ref().map(rows2) } else { None },
        centers: None,
        targets: None,
        unit_circle: true,
        caption: (skipped > 0).then(|| format!("{skipped} zero-norm point(s) skipped")),
    };
    Ok(UnitCircleRender { svg: document(&[panel], &es.class_names, opts), skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{make_target_layout, LayoutKind};
    use crate::viz::Overlays;
    use crate::Rng;

    fn ten() -> EmbeddingSet<f64> {
        let pts = Tensor::<f64>::randn(&[10, 2], 1.0, &mut Rng::new(1)).unwrap();
        let names = (0..10).map(|i| format!("c{i}")).collect();
        EmbeddingSet::new(pts, (0..10).collect(), names).unwrap()
    }

    fn count(doc: &roxmltree::Document, class: &str) -> usize {
        doc.descendants().filter(|n| n.attribute("class") == Some(class)).count()
    }

    #[test]
    fn markers_and_legend() {
        let svg = render_svg(&ten(), &SvgOptions::default()).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(count(&doc, "pt"), 10);
        assert_eq!(count(&doc, "entry"), 10);
        assert_eq!(svg, render_svg(&ten(), &SvgOptions::default()).unwrap());
    }

    #[test]
    fn circle_targets_become_crosses_at_layout_points() {
        let layout = make_target_layout::<f64>(LayoutKind::Circle, 10, 2, 1.0).unwrap();
        let es = ten()
            .with_overlays(Overlays { targets: Some(layout.targets.clone()), ..Overlays::default() })
            .unwrap();
        let opts = SvgOptions::default();
        let svg = render_svg(&es, &opts).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let crosses: Vec<_> = doc.descendants().filter(|n| n.attribute("class") == Some("target")).collect();
        assert_eq!(crosses.len(), 10);
        // recover each cross center from its path and map back to data space
        let pts = rows2(&es.points);
        let mut h = 0.0f64;
        for p in pts.iter().chain(rows2(&layout.targets).iter()) {
            h = h.max(p[0].abs()).max(p[1].abs());
        }
        h *= 1.08;
        let size = opts.panel_size;
        for (j, node) in crosses.iter().enumerate() {
            let d = node.attribute("d").unwrap();
            let nums: Vec<f64> =
                d.split(['M', 'L', ' ']).filter(|s| !s.is_empty()).map(|s| s.parse().unwrap()).collect();
            let (cx, cy) = ((nums[0] + nums[2]) / 2.0, (nums[1] + nums[3]) / 2.0);
            let x = (cx - PAD) / size * 2.0 * h - h;
            let y = h - (cy - PAD) / size * 2.0 * h;
            let t = layout.targets.row(j);
            assert!((x - t[0]).abs() < 0.01 * h && (y - t[1]).abs() < 0.01 * h, "cross {j}");
        }
    }

    #[test]
    fn unit_circle_projection() {
        let pts = Tensor::from_rows(&[vec![3.0f64, 4.0], vec![0.0, 0.0], vec![0.6, 0.8]]).unwrap();
        let es = EmbeddingSet::new(pts, vec![0, 1, 1], vec!["a".into(), "b".into()]).unwrap();
        let r = render_unit_circle_projection(&es, &SvgOptions::default()).unwrap();
        assert_eq!(r.skipped, 1);
        let doc = roxmltree::Document::parse(&r.svg).unwrap();
        let pts: Vec<_> = doc.descendants().filter(|n| n.attribute("class") == Some("pt")).collect();
        assert_eq!(pts.len(), 2);
        // (3,4) and (0.6,0.8) land on the same pixel
        assert_eq!(pts[0].attribute("cx"), pts[1].attribute("cx"));
        assert_eq!(pts[0].attribute("cy"), pts[1].attribute("cy"));
        assert_eq!(count(&doc, "unit-circle"), 1);
        let three = EmbeddingSet::new(Tensor::<f64>::zeros(&[1, 3]).unwrap(), vec![0], vec!["a".into()]).unwrap();
        assert!(render_unit_circle_projection(&three, &SvgOptions::default()).is_err());
    }

    #[test]
    fn three_d_default_views_and_escaping() {
        let pts = Tensor::<f64>::randn(&[7, 3], 1.0, &mut Rng::new(3)).unwrap();
        let es = EmbeddingSet::new(pts, vec![0; 7], vec!["a<b & \"c\"".into()]).unwrap();
        let opts = SvgOptions { title: Some("T & 3-D".into()), ..SvgOptions::default() };
        let svg = render_svg(&es, &opts).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(count(&doc, "panel"), 3);
        assert_eq!(count(&doc, "pt"), 21);
        let single = SvgOptions { view: Some(View { azimuth: 10.0, elevation: 20.0 }), ..opts };
        let doc2 = render_svg(&es, &single).unwrap();
        assert_eq!(count(&roxmltree::Document::parse(&doc2).unwrap(), "panel"), 1);
    }
}
