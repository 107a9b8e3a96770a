//! Standalone SVG figures: information planes, MI-vs-epoch curves with
//! variance bands, and accuracy curves with confidence bands.
//!
//! Output is deterministic: fixed iteration orders and fixed-precision
//! coordinate formatting, so identical inputs yield byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::RunArtifacts;
use crate::infoplane::{CurveAggregate, InfoPoint, RunAggregate};

/// Ten-color categorical palette for layer identity.
const LAYER_COLORS: &[&str] = &[
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

/// Perceptually ordered epoch gradient (dark violet to yellow), sampled at
/// five anchors and interpolated linearly in RGB.
const EPOCH_ANCHORS: &[(f64, (u8, u8, u8))] = &[
    (0.00, (0x44, 0x01, 0x54)),
    (0.25, (0x3b, 0x52, 0x8b)),
    (0.50, (0x21, 0x91, 0x8c)),
    (0.75, (0x5e, 0xc9, 0x62)),
    (1.00, (0xfd, 0xe7, 0x25)),
];

fn epoch_color(fraction: f64) -> String {
    let f = fraction.clamp(0.0, 1.0);
    let mut lo = EPOCH_ANCHORS[0];
    let mut hi = *EPOCH_ANCHORS.last().unwrap();
    for w in EPOCH_ANCHORS.windows(2) {
        if f >= w[0].0 && f <= w[1].0 {
            lo = w[0];
            hi = w[1];
            break;
        }
    }
    let t = if hi.0 > lo.0 { (f - lo.0) / (hi.0 - lo.0) } else { 0.0 };
    let mix = |a: u8, b: u8| -> u8 { (a as f64 + t * (b as f64 - a as f64)).round() as u8 };
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(lo.1 .0, hi.1 .0),
        mix(lo.1 .1, hi.1 .1),
        mix(lo.1 .2, hi.1 .2)
    )
}

fn layer_color(layer: usize) -> &'static str {
    LAYER_COLORS[layer % LAYER_COLORS.len()]
}

fn esc(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Pixel coordinate with stable two-decimal formatting.
fn px(v: f64) -> String {
    format!("{v:.2}")
}

/// Tick positions with a 1/2/5 step covering `[lo, hi]`.
fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let mut ticks = Vec::new();
    let mut t = (lo / step).ceil() * step;
    while t <= hi + 1e-9 * span {
        ticks.push(if t.abs() < 1e-12 { 0.0 } else { t });
        t += step;
    }
    ticks
}

fn tick_label(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.2}")
    }
}

/// Geometry and axis policy of an information-plane figure.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneStyle {
    /// Default x axis range in bits; expands to fit the data.
    pub x_range: (f64, f64),
    /// Default y axis range in bits; expands to fit the data.
    pub y_range: (f64, f64),
    /// Optional zoom window `(x_lo, x_hi, y_lo, y_hi)` rendered as a second
    /// panel for the dense upper-right region.
    pub zoom: Option<(f64, f64, f64, f64)>,
    pub marker_radius: f64,
    pub panel_width: f64,
    pub panel_height: f64,
}

impl Default for PlaneStyle {
    fn default() -> Self {
        PlaneStyle {
            x_range: (0.0, 12.0),
            y_range: (0.0, 1.0),
            zoom: None,
            marker_radius: 2.5,
            panel_width: 560.0,
            panel_height: 440.0,
        }
    }
}

impl PlaneStyle {
    /// Default axis ranges for a dataset: x up to `log2 |D|`, y up to
    /// `log2 C`, with the zoom panel framing the upper-right area.
    pub fn for_dataset(dataset_size: usize, num_classes: usize) -> PlaneStyle {
        let x_max = (dataset_size.max(2) as f64).log2();
        let y_max = (num_classes.max(2) as f64).log2();
        PlaneStyle {
            x_range: (0.0, x_max),
            y_range: (0.0, y_max),
            zoom: Some((0.6 * x_max, 1.02 * x_max, 0.5 * y_max, 1.02 * y_max)),
            ..PlaneStyle::default()
        }
    }
}

struct Frame {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        self.left + (v - self.x_lo) / (self.x_hi - self.x_lo) * self.width
    }

    fn y(&self, v: f64) -> f64 {
        self.top + self.height - (v - self.y_lo) / (self.y_hi - self.y_lo) * self.height
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_lo && x <= self.x_hi && y >= self.y_lo && y <= self.y_hi
    }
}

fn draw_axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let _ = write!(
        out,
        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="white" stroke="#333333" stroke-width="1"/>"#,
        px(f.left),
        px(f.top),
        px(f.width),
        px(f.height)
    );
    for t in nice_ticks(f.x_lo, f.x_hi) {
        let x = f.x(t);
        let _ = write!(
            out,
            r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="#333333" stroke-width="1"/><text x="{0}" y="{3}" font-size="11" text-anchor="middle" fill="#333333">{4}</text>"#,
            px(x),
            px(f.top + f.height),
            px(f.top + f.height + 5.0),
            px(f.top + f.height + 18.0),
            tick_label(t)
        );
    }
    for t in nice_ticks(f.y_lo, f.y_hi) {
        let y = f.y(t);
        let _ = write!(
            out,
            r#"<line x1="{0}" y1="{2}" x2="{1}" y2="{2}" stroke="#333333" stroke-width="1"/><text x="{3}" y="{4}" font-size="11" text-anchor="end" fill="#333333">{5}</text>"#,
            px(f.left - 5.0),
            px(f.left),
            px(y),
            px(f.left - 8.0),
            px(y + 3.5),
            tick_label(t)
        );
    }
    let _ = write!(
        out,
        r#"<text x="{}" y="{}" font-size="13" text-anchor="middle" fill="#111111">{}</text>"#,
        px(f.left + f.width / 2.0),
        px(f.top + f.height + 38.0),
        esc(x_label)
    );
    let _ = write!(
        out,
        r#"<text x="{}" y="{}" font-size="13" text-anchor="middle" fill="#111111" transform="rotate(-90 {} {})">{}</text>"#,
        px(f.left - 45.0),
        px(f.top + f.height / 2.0),
        px(f.left - 45.0),
        px(f.top + f.height / 2.0),
        esc(y_label)
    );
}

fn svg_open(width: f64, height: f64) -> String {
    format!(
        concat!(
            r#"<?xml version="1.0" encoding="UTF-8"?>"#,
            "\n",
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="Helvetica,Arial,sans-serif">"#,
            "\n",
            r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#,
            "\n"
        ),
        w = px(width),
        h = px(height)
    )
}

fn plane_panel(
    out: &mut String,
    frame: &Frame,
    layers: &[(String, Vec<InfoPoint>)],
    epoch_range: (u64, u64),
    marker_radius: f64,
    clip_id: &str,
) {
    draw_axes(out, frame, "I(X;T) [bits]", "I(T;Y) [bits]");
    let _ = write!(
        out,
        r#"<clipPath id="{clip_id}"><rect x="{}" y="{}" width="{}" height="{}"/></clipPath><g clip-path="url(#{clip_id})">"#,
        px(frame.left - marker_radius),
        px(frame.top - marker_radius),
        px(frame.width + 2.0 * marker_radius),
        px(frame.height + 2.0 * marker_radius)
    );
    let (e_lo, e_hi) = epoch_range;
    let denom = (e_hi.saturating_sub(e_lo)).max(1) as f64;
    for (l, (_, points)) in layers.iter().enumerate() {
        if points.len() > 1 {
            let path: Vec<String> = points
                .iter()
                .map(|p| format!("{},{}", px(frame.x(p.i_xt)), px(frame.y(p.i_ty))))
                .collect();
            let _ = write!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="0.8" stroke-opacity="0.55"/>"#,
                path.join(" "),
                layer_color(l)
            );
        }
        for p in points {
            let color = epoch_color((p.epoch - e_lo) as f64 / denom);
            let _ = write!(
                out,
                r#"<circle cx="{}" cy="{}" r="{}" fill="{}" stroke="{}" stroke-width="0.5"/>"#,
                px(frame.x(p.i_xt)),
                px(frame.y(p.i_ty)),
                px(marker_radius),
                color,
                layer_color(l)
            );
        }
    }
    out.push_str("</g>");
}

fn epoch_colorbar(out: &mut String, x: f64, top: f64, height: f64, epoch_range: (u64, u64)) {
    out.push_str(r#"<defs><linearGradient id="epochs" x1="0" y1="1" x2="0" y2="0">"#);
    for (f, _) in EPOCH_ANCHORS {
        let _ = write!(
            out,
            r#"<stop offset="{}" stop-color="{}"/>"#,
            f,
            epoch_color(*f)
        );
    }
    out.push_str("</linearGradient></defs>");
    let _ = write!(
        out,
        r#"<rect x="{}" y="{}" width="12" height="{}" fill="url(#epochs)" stroke="#333333" stroke-width="0.5"/>"#,
        px(x),
        px(top),
        px(height)
    );
    let _ = write!(
        out,
        r#"<text x="{0}" y="{1}" font-size="10" fill="#333333">{2}</text><text x="{0}" y="{3}" font-size="10" fill="#333333">{4}</text><text x="{0}" y="{5}" font-size="10" fill="#333333">epoch</text>"#,
        px(x + 16.0),
        px(top + height),
        epoch_range.0,
        px(top + 8.0),
        epoch_range.1,
        px(top - 8.0)
    );
}

fn layer_legend(out: &mut String, x: f64, y: f64, names: &[String]) {
    for (l, name) in names.iter().enumerate() {
        let ly = y + 16.0 * l as f64;
        let _ = write!(
            out,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}" font-size="11" fill="#111111">{}</text>"#,
            px(x),
            px(ly),
            layer_color(l),
            px(x + 14.0),
            px(ly + 9.0),
            esc(name)
        );
    }
}

/// Information plane: one epoch-colored scatter/line per layer, with an
/// optional zoom panel. Axes expand to keep every marker inside the frame.
pub fn plot_plane(layers: &[(String, Vec<InfoPoint>)], style: &PlaneStyle, title: &str) -> String {
    assert!(
        layers.iter().any(|(_, p)| !p.is_empty()),
        "plot_plane needs at least one point"
    );
    let margin_left = 70.0;
    let margin_top = 46.0;
    let margin_bottom = 60.0;
    let colorbar_space = 64.0;

    let mut x_hi = style.x_range.1;
    let mut y_hi = style.y_range.1;
    let mut x_lo = style.x_range.0;
    let mut y_lo = style.y_range.0;
    let mut e_lo = u64::MAX;
    let mut e_hi = 0u64;
    for (_, points) in layers {
        for p in points {
            x_hi = x_hi.max(p.i_xt * 1.02);
            y_hi = y_hi.max(p.i_ty * 1.02);
            x_lo = x_lo.min(p.i_xt);
            y_lo = y_lo.min(p.i_ty);
            e_lo = e_lo.min(p.epoch);
            e_hi = e_hi.max(p.epoch);
        }
    }
    let epoch_range = (e_lo.min(e_hi), e_hi);

    let panels = 1 + usize::from(style.zoom.is_some());
    let total_width =
        margin_left + style.panel_width + colorbar_space + (style.panel_width + 50.0) * (panels - 1) as f64;
    let total_height = margin_top + style.panel_height + margin_bottom;

    let mut out = svg_open(total_width, total_height);
    let _ = write!(
        out,
        r#"<text x="{}" y="24" font-size="15" text-anchor="middle" fill="#111111">{}</text>"#,
        px(total_width / 2.0),
        esc(title)
    );

    let main = Frame {
        left: margin_left,
        top: margin_top,
        width: style.panel_width,
        height: style.panel_height,
        x_lo,
        x_hi,
        y_lo,
        y_hi,
    };
    plane_panel(&mut out, &main, layers, epoch_range, style.marker_radius, "clip-main");
    let names: Vec<String> = layers.iter().map(|(n, _)| n.clone()).collect();
    layer_legend(&mut out, margin_left + 10.0, margin_top + 8.0, &names);

    if let Some((zx0, zx1, zy0, zy1)) = style.zoom {
        let zoom = Frame {
            left: margin_left + style.panel_width + 50.0,
            top: margin_top,
            width: style.panel_width,
            height: style.panel_height,
            x_lo: zx0,
            x_hi: zx1,
            y_lo: zy0,
            y_hi: zy1,
        };
        let zoomed: Vec<(String, Vec<InfoPoint>)> = layers
            .iter()
            .map(|(n, pts)| {
                (
                    n.clone(),
                    pts.iter()
                        .filter(|p| zoom.contains(p.i_xt, p.i_ty))
                        .copied()
                        .collect(),
                )
            })
            .collect();
        plane_panel(&mut out, &zoom, &zoomed, epoch_range, style.marker_radius, "clip-zoom");
        let _ = write!(
            out,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="middle" fill="#333333">upper-right detail</text>"#,
            px(zoom.left + zoom.width / 2.0),
            px(margin_top - 8.0)
        );
    }

    epoch_colorbar(
        &mut out,
        total_width - colorbar_space + 8.0,
        margin_top,
        style.panel_height,
        epoch_range,
    );
    out.push_str("</svg>\n");
    out
}

fn band_path(f: &Frame, upper: &[(f64, f64)], lower: &[(f64, f64)]) -> String {
    let mut d = String::from("M");
    for (i, &(x, y)) in upper.iter().enumerate() {
        if i > 0 {
            d.push('L');
        }
        let _ = write!(d, "{},{}", px(f.x(x)), px(f.y(y)));
    }
    for &(x, y) in lower.iter().rev() {
        let _ = write!(d, "L{},{}", px(f.x(x)), px(f.y(y)));
    }
    d.push('Z');
    d
}

fn curve_points(f: &Frame, series: &[(f64, f64)]) -> String {
    series
        .iter()
        .map(|&(x, y)| format!("{},{}", px(f.x(x)), px(f.y(y))))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Mean accuracy per epoch with a shaded 95% confidence band, train and test
/// distinguished.
pub fn plot_accuracy(train: &[CurveAggregate], test: &[CurveAggregate], title: &str) -> String {
    assert!(!train.is_empty(), "plot_accuracy needs at least one epoch");
    let width = 640.0;
    let height = 430.0;
    let frame = Frame {
        left: 70.0,
        top: 46.0,
        width: width - 100.0,
        height: height - 110.0,
        x_lo: train.first().unwrap().epoch as f64,
        x_hi: train.last().unwrap().epoch as f64.max(train.first().unwrap().epoch as f64 + 1.0),
        y_lo: 0.0,
        y_hi: 1.0,
    };
    let mut out = svg_open(width, height);
    let _ = write!(
        out,
        r#"<text x="{}" y="24" font-size="15" text-anchor="middle" fill="#111111">{}</text>"#,
        px(width / 2.0),
        esc(title)
    );
    draw_axes(&mut out, &frame, "epoch", "accuracy");

    for (series, color, dash, label, label_dy) in [
        (train, "#1f77b4", "", "train", 0.0),
        (test, "#d62728", r#" stroke-dasharray="5,3""#, "test", 16.0),
    ] {
        let band_hi: Vec<(f64, f64)> = series
            .iter()
            .map(|c| (c.epoch as f64, (c.accuracy_mean + c.accuracy_ci95).min(1.0)))
            .collect();
        let band_lo: Vec<(f64, f64)> = series
            .iter()
            .map(|c| (c.epoch as f64, (c.accuracy_mean - c.accuracy_ci95).max(0.0)))
            .collect();
        let _ = write!(
            out,
            r#"<path d="{}" fill="{}" fill-opacity="0.18" stroke="none"/>"#,
            band_path(&frame, &band_hi, &band_lo),
            color
        );
        let mean: Vec<(f64, f64)> = series
            .iter()
            .map(|c| (c.epoch as f64, c.accuracy_mean))
            .collect();
        let _ = write!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"{}/>"#,
            curve_points(&frame, &mean),
            color,
            dash
        );
        let _ = write!(
            out,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}" font-size="11" fill="#111111">{}</text>"#,
            px(frame.left + 10.0),
            px(frame.top + 8.0 + label_dy),
            color,
            px(frame.left + 24.0),
            px(frame.top + 17.0 + label_dy),
            label
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Two panels of MI against epochs (I(X;T) left, I(T;Y) right), one mean
/// line per layer with a one-standard-deviation band.
pub fn plot_mi_vs_epoch(agg: &RunAggregate, title: &str) -> String {
    assert!(!agg.layers.is_empty() && !agg.layers[0].is_empty());
    let panel_w = 430.0;
    let panel_h = 340.0;
    let width = 70.0 + panel_w + 60.0 + panel_w + 40.0;
    let height = 46.0 + panel_h + 70.0;
    let mut out = svg_open(width, height);
    let _ = write!(
        out,
        r#"<text x="{}" y="24" font-size="15" text-anchor="middle" fill="#111111">{}</text>"#,
        px(width / 2.0),
        esc(title)
    );

    let e_lo = agg.layers[0][0].epoch as f64;
    let e_hi = (agg.layers[0].last().unwrap().epoch as f64).max(e_lo + 1.0);
    for (panel, (quantity, label)) in [("i_xt", "I(X;T) [bits]"), ("i_ty", "I(T;Y) [bits]")]
        .into_iter()
        .enumerate()
    {
        let mut y_hi = 1e-9;
        for layer in &agg.layers {
            for a in layer {
                let (mean, var) = if quantity == "i_xt" {
                    (a.i_xt_mean, a.i_xt_var)
                } else {
                    (a.i_ty_mean, a.i_ty_var)
                };
                y_hi = y_hi.max(mean + var.sqrt());
            }
        }
        let frame = Frame {
            left: 70.0 + (panel_w + 60.0) * panel as f64,
            top: 46.0,
            width: panel_w,
            height: panel_h,
            x_lo: e_lo,
            x_hi: e_hi,
            y_lo: 0.0,
            y_hi: y_hi * 1.05,
        };
        draw_axes(&mut out, &frame, "epoch", label);
        for (l, layer) in agg.layers.iter().enumerate() {
            let pick = |a: &crate::infoplane::AggregatePoint| -> (f64, f64) {
                if quantity == "i_xt" {
                    (a.i_xt_mean, a.i_xt_var)
                } else {
                    (a.i_ty_mean, a.i_ty_var)
                }
            };
            let upper: Vec<(f64, f64)> = layer
                .iter()
                .map(|a| {
                    let (m, v) = pick(a);
                    (a.epoch as f64, m + v.sqrt())
                })
                .collect();
            let lower: Vec<(f64, f64)> = layer
                .iter()
                .map(|a| {
                    let (m, v) = pick(a);
                    (a.epoch as f64, (m - v.sqrt()).max(0.0))
                })
                .collect();
            let _ = write!(
                out,
                r#"<path d="{}" fill="{}" fill-opacity="0.15" stroke="none"/>"#,
                band_path(&frame, &upper, &lower),
                layer_color(l)
            );
            let mean: Vec<(f64, f64)> = layer
                .iter()
                .map(|a| (a.epoch as f64, pick(a).0))
                .collect();
            let _ = write!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.4"/>"#,
                curve_points(&frame, &mean),
                layer_color(l)
            );
        }
        if panel == 0 {
            layer_legend(&mut out, frame.left + 10.0, frame.top + 8.0, &agg.layer_names);
        }
    }
    out.push_str("</svg>\n");
    out
}

fn estimator_tag(e: crate::infoplane::Estimator) -> &'static str {
    match e {
        crate::infoplane::Estimator::Exact => "exact",
        crate::infoplane::Estimator::Binned { .. } => "binned",
    }
}

/// Render every figure for a finished experiment into `dir`:
/// `information_plane_<est>.svg`, `information_plane_<est>_median_run.svg`,
/// `mi_vs_epoch_<est>.svg`, and `accuracy.svg`.
pub fn write_plots(artifacts: &RunArtifacts, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut emit = |name: String, contents: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };

    let style = PlaneStyle::for_dataset(artifacts.dataset_size, artifacts.num_classes);
    for set in [artifacts.exact.as_ref(), artifacts.binned.as_ref()]
        .into_iter()
        .flatten()
    {
        let tag = estimator_tag(set.estimator);
        let mean_layers: Vec<(String, Vec<InfoPoint>)> = artifacts
            .layer_names
            .iter()
            .enumerate()
            .map(|(l, name)| (name.clone(), set.aggregate.mean_layer_points(l)))
            .collect();
        emit(
            format!("information_plane_{tag}.svg"),
            plot_plane(
                &mean_layers,
                &style,
                &format!("{} information plane ({})", artifacts.config.name, set.estimator),
            ),
        )?;

        let median = &set.runs[set
            .runs
            .iter()
            .position(|r| r.run_id == set.aggregate.median_run)
            .expect("median run present")];
        let median_layers: Vec<(String, Vec<InfoPoint>)> = artifacts
            .layer_names
            .iter()
            .enumerate()
            .map(|(l, name)| (name.clone(), median.layers[l].clone()))
            .collect();
        emit(
            format!("information_plane_{tag}_median_run.svg"),
            plot_plane(
                &median_layers,
                &style,
                &format!(
                    "{} median-deviating repetition {} ({})",
                    artifacts.config.name, median.run_id, set.estimator
                ),
            ),
        )?;

        emit(
            format!("mi_vs_epoch_{tag}.svg"),
            plot_mi_vs_epoch(
                &set.aggregate,
                &format!("{} MI vs epoch ({})", artifacts.config.name, set.estimator),
            ),
        )?;
    }

    let primary = artifacts.primary();
    emit(
        "accuracy.svg".to_string(),
        plot_accuracy(
            &primary.aggregate.train,
            &primary.aggregate.test,
            &format!("{} accuracy (95% CI)", artifacts.config.name),
        ),
    )?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(epoch: u64, layer: usize, i_xt: f64, i_ty: f64) -> InfoPoint {
        InfoPoint {
            epoch,
            layer,
            i_xt,
            i_ty,
        }
    }

    #[test]
    fn single_marker_inside_axis_box() {
        let layers = vec![("tanh3".to_string(), vec![point(1, 0, 6.0, 0.5)])];
        let svg = plot_plane(&layers, &PlaneStyle::default(), "one point");
        roxmltree::Document::parse(&svg).expect("well-formed XML");
        // The marker for (6.0, 0.5) on [0,12]x[0,1] sits at the panel center.
        assert!(svg.contains(r#"<circle cx="350.00" cy="266.00""#), "{svg}");
    }

    #[test]
    fn out_of_range_points_expand_axes() {
        let inside = vec![("a".to_string(), vec![point(1, 0, 6.0, 0.5)])];
        let outside = vec![(
            "a".to_string(),
            vec![point(1, 0, 6.0, 0.5), point(2, 0, 15.0, 1.5)],
        )];
        let style = PlaneStyle::default();
        let svg = plot_plane(&outside, &style, "expanded");
        roxmltree::Document::parse(&svg).unwrap();
        // All circle x-coordinates stay inside the main panel.
        let doc = roxmltree::Document::parse(&svg).unwrap();
        for node in doc.descendants().filter(|n| n.has_tag_name("circle")) {
            let cx: f64 = node.attribute("cx").unwrap().parse().unwrap();
            let cy: f64 = node.attribute("cy").unwrap().parse().unwrap();
            assert!(cx >= 70.0 - 3.0 && cx <= 70.0 + 560.0 + 3.0);
            assert!(cy >= 46.0 - 3.0 && cy <= 46.0 + 440.0 + 3.0);
        }
        // And the scale differs from the in-range plot.
        let svg_inside = plot_plane(&inside, &style, "expanded");
        assert_ne!(svg, svg_inside);
    }

    #[test]
    fn identical_inputs_give_identical_bytes() {
        let layers = vec![(
            "relu4".to_string(),
            (1..40).map(|e| point(e, 0, 12.0 - e as f64 * 0.1, e as f64 * 0.02)).collect(),
        )];
        let style = PlaneStyle::for_dataset(4096, 2);
        let a = plot_plane(&layers, &style, "determinism");
        let b = plot_plane(&layers, &style, "determinism");
        assert_eq!(a, b);
        roxmltree::Document::parse(&a).unwrap();
        assert!(a.contains("upper-right detail"), "zoom panel present");
    }

    #[test]
    fn accuracy_plot_handles_constant_series() {
        let series: Vec<CurveAggregate> = (1..=5)
            .map(|epoch| CurveAggregate {
                epoch,
                accuracy_mean: 0.5,
                accuracy_ci95: 0.0,
                loss_mean: 0.7,
                loss_ci95: 0.0,
            })
            .collect();
        let svg = plot_accuracy(&series, &series, "flat");
        roxmltree::Document::parse(&svg).unwrap();
        // Zero-width band collapses onto the mean line: the band path's
        // upper and lower edges coincide.
        assert!(svg.contains("fill-opacity"));
    }

    #[test]
    fn epoch_gradient_endpoints() {
        assert_eq!(epoch_color(0.0), "#440154");
        assert_eq!(epoch_color(1.0), "#fde725");
        assert_eq!(epoch_color(0.5), "#21918c");
    }
}
