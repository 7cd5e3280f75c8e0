//! Deterministic standalone SVG figures for the four output kinds:
//! normalized fringe with fit overlay, ensemble histogram with normal
//! curve, pump sweep with TOD line, and the fringe-width range map.
//!
//! Rendering is pure string building with fixed-precision coordinates, so
//! identical inputs produce byte-identical files.

use crate::commands::{FitReport, McReport, RANGEMAP_CSV_HEADER};
use crate::error::{CliError, CliResult};
use qwli::estimator::TodResult;
use qwli::optics::{detuning, SpectralPoint};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PlotKind {
    Fringe,
    Histogram,
    Sweep,
    Rangemap,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 78.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 42.0;
const MARGIN_B: f64 = 58.0;

struct Svg {
    body: String,
}

impl Svg {
    fn new() -> Self {
        let mut body = String::new();
        let _ = writeln!(
            body,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
        );
        let _ = writeln!(
            body,
            "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
        );
        Svg { body }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        let _ = writeln!(
            self.body,
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"{stroke}\" stroke-width=\"{width}\"/>"
        );
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"{r}\" fill=\"{fill}\"/>"
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{fill}\"/>"
        );
    }

    fn polyline(&mut self, points: &[(f64, f64)], stroke: &str, width: f64) {
        let mut path = String::new();
        for (x, y) in points {
            let _ = write!(path, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(
            self.body,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{width}\"/>",
            path.trim_end()
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, size: f64, content: &str) {
        let _ = writeln!(
            self.body,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"{anchor}\" font-family=\"sans-serif\" font-size=\"{size}\">{content}</text>"
        );
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

/// Linear data→pixel axes over the plot area.
struct Axes {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Axes {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        let pad = |lo: f64, hi: f64| {
            let span = (hi - lo).abs().max(1e-300);
            (lo - 0.05 * span, hi + 0.05 * span)
        };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        Axes { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_B - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).abs().max(1e-300);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(mag * 10.0);
    let mut t = (lo / step).ceil() * step;
    let mut ticks = Vec::new();
    while t <= hi + step * 1e-9 {
        ticks.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    ticks
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e5).contains(&a) {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.').to_string();
        if s.is_empty() || s == "-" {
            "0".into()
        } else {
            s
        }
    } else {
        format!("{v:.2e}")
    }
}

fn draw_frame(svg: &mut Svg, axes: &Axes, x_label: &str, y_label: &str, title: &str) {
    let (left, right) = (MARGIN_L, WIDTH - MARGIN_R);
    let (top, bottom) = (MARGIN_T, HEIGHT - MARGIN_B);
    svg.line(left, bottom, right, bottom, "black", 1.0);
    svg.line(left, top, left, bottom, "black", 1.0);
    for t in nice_ticks(axes.x0, axes.x1) {
        let x = axes.px(t);
        svg.line(x, bottom, x, bottom + 5.0, "black", 1.0);
        svg.text(x, bottom + 18.0, "middle", 11.0, &fmt_tick(t));
    }
    for t in nice_ticks(axes.y0, axes.y1) {
        let y = axes.py(t);
        svg.line(left - 5.0, y, left, y, "black", 1.0);
        svg.text(left - 8.0, y + 4.0, "end", 11.0, &fmt_tick(t));
    }
    svg.text((left + right) / 2.0, HEIGHT - 16.0, "middle", 13.0, x_label);
    let _ = writeln!(
        svg.body,
        "<text x=\"18\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 18 {:.2})\">{}</text>",
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        y_label
    );
    svg.text((left + right) / 2.0, 24.0, "middle", 14.0, title);
}

fn read_to_string(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))
}

fn plot_fringe(input: &Path) -> CliResult<String> {
    let report: FitReport = serde_json::from_str(&read_to_string(input)?).map_err(|e| {
        CliError::usage(format!(
            "{} does not look like a fit output (kind fringe): {e}",
            input.display()
        ))
    })?;
    if report.fringe.is_empty() {
        return Err(CliError::usage("fit output carries no fringe points"));
    }
    let xs: Vec<f64> = report.fringe.iter().map(|p| p.lambda_s_m * 1e9).collect();
    let ys: Vec<f64> = report.fringe.iter().map(|p| p.value).collect();
    let (xmin, xmax) = (
        xs.iter().cloned().fold(f64::INFINITY, f64::min),
        xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    let ymax = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let axes = Axes::new(xmin, xmax, 0.0, ymax);
    let mut svg = Svg::new();
    let fit = &report.fit;
    draw_frame(
        &mut svg,
        &axes,
        "signal wavelength (nm)",
        "normalized coincidences",
        &format!(
            "D = {:.4} ± {:.4} ps/(nm.km), V = {:.3}",
            fit.d_ps_nm_km, fit.d_sigma_ps_nm_km, fit.visibility
        ),
    );
    // Model curve from the fitted parameters.
    let pump = SpectralPoint::from_wavelength(fit.pump_m).map_err(CliError::from)?;
    let mut curve = Vec::with_capacity(400);
    for k in 0..400 {
        let lam_nm = xmin + (xmax - xmin) * k as f64 / 399.0;
        let point = SpectralPoint::from_wavelength(lam_nm * 1e-9).map_err(CliError::from)?;
        let dw = detuning(point, pump);
        let phase = fit.beta2_si * dw * dw * fit.sut_length_m + fit.phi_off_rad;
        let value = 0.5 * fit.amplitude * (1.0 + fit.visibility * phase.cos());
        curve.push((axes.px(lam_nm), axes.py(value)));
    }
    svg.polyline(&curve, "#d1495b", 1.5);
    for p in &report.fringe {
        let x = axes.px(p.lambda_s_m * 1e9);
        let (lo, hi) = (axes.py(p.value - p.sigma), axes.py(p.value + p.sigma));
        svg.line(x, lo, x, hi, "#1f6feb", 1.0);
        svg.circle(x, axes.py(p.value), 2.2, "#1f6feb");
    }
    Ok(svg.finish())
}

fn plot_histogram(input: &Path) -> CliResult<String> {
    let report: McReport = serde_json::from_str(&read_to_string(input)?).map_err(|e| {
        CliError::usage(format!(
            "{} does not look like a Monte-Carlo output (kind histogram): {e}",
            input.display()
        ))
    })?;
    let h = &report.histogram;
    if h.counts.is_empty() || h.bin_edges.len() != h.counts.len() + 1 {
        return Err(CliError::usage("histogram data is empty or inconsistent"));
    }
    let cmax = *h.counts.iter().max().unwrap() as f64;
    let axes = Axes::new(h.bin_edges[0], *h.bin_edges.last().unwrap(), 0.0, cmax);
    let mut svg = Svg::new();
    let stats = &report.stats;
    draw_frame(
        &mut svg,
        &axes,
        "extracted CD (ps/(nm.km))",
        "runs per bin",
        &format!(
            "mean {:.4}, std {:.4}, n = {}, normality p = {:.3}",
            stats.mean_d_ps_nm_km, stats.std_d_ps_nm_km, stats.n, stats.normality_pvalue
        ),
    );
    for (k, &count) in h.counts.iter().enumerate() {
        let x0 = axes.px(h.bin_edges[k]);
        let x1 = axes.px(h.bin_edges[k + 1]);
        let y = axes.py(count as f64);
        svg.rect(x0, y, (x1 - x0).max(0.5), axes.py(0.0) - y, "#7aa6d8");
    }
    // Normal-distribution overlay scaled to counts per bin.
    if stats.std_d_ps_nm_km > 0.0 {
        let bin_width = h.bin_edges[1] - h.bin_edges[0];
        let scale = stats.n as f64 * bin_width
            / (stats.std_d_ps_nm_km * (2.0 * std::f64::consts::PI).sqrt());
        let mut curve = Vec::with_capacity(240);
        for k in 0..240 {
            let x = axes.x0 + (axes.x1 - axes.x0) * k as f64 / 239.0;
            let z = (x - stats.mean_d_ps_nm_km) / stats.std_d_ps_nm_km;
            curve.push((axes.px(x), axes.py(scale * (-0.5 * z * z).exp())));
        }
        svg.polyline(&curve, "#d1495b", 1.5);
    }
    Ok(svg.finish())
}

fn plot_sweep(input: &Path) -> CliResult<String> {
    let tod: TodResult = serde_json::from_str(&read_to_string(input)?).map_err(|e| {
        CliError::usage(format!(
            "{} does not look like a sweep output (kind sweep): {e}",
            input.display()
        ))
    })?;
    if tod.per_point.is_empty() {
        return Err(CliError::usage("sweep output carries no per-point fits"));
    }
    let xs: Vec<f64> = tod.per_point.iter().map(|f| f.pump_m * 1e9).collect();
    let ys: Vec<f64> = tod.per_point.iter().map(|f| f.d_ps_nm_km).collect();
    let ss: Vec<f64> = tod.per_point.iter().map(|f| f.d_sigma_ps_nm_km).collect();
    let xmin = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let xmax = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ymin = ys
        .iter()
        .zip(&ss)
        .map(|(y, s)| y - 3.0 * s)
        .fold(f64::INFINITY, f64::min);
    let ymax = ys
        .iter()
        .zip(&ss)
        .map(|(y, s)| y + 3.0 * s)
        .fold(f64::NEG_INFINITY, f64::max);
    let axes = Axes::new(xmin, xmax, ymin, ymax);
    let mut svg = Svg::new();
    draw_frame(
        &mut svg,
        &axes,
        "pump wavelength (nm)",
        "extracted CD (ps/(nm.km))",
        &format!(
            "TOD = {:.4} ± {:.4} ps/(nm^2.km)",
            tod.slope_ps_nm2_km, tod.slope_sigma_ps_nm2_km
        ),
    );
    let x_ref_nm = tod.reference_pump_m * 1e9;
    let line: Vec<(f64, f64)> = [axes.x0, axes.x1]
        .iter()
        .map(|&x| {
            (
                axes.px(x),
                axes.py(tod.intercept_d_ps_nm_km + tod.slope_ps_nm2_km * (x - x_ref_nm)),
            )
        })
        .collect();
    svg.polyline(&line, "#d1495b", 1.5);
    for ((&x, &y), &s) in xs.iter().zip(&ys).zip(&ss) {
        let px = axes.px(x);
        svg.line(px, axes.py(y - s), px, axes.py(y + s), "#1f6feb", 1.0);
        svg.circle(px, axes.py(y), 2.6, "#1f6feb");
    }
    Ok(svg.finish())
}

fn zone_color(zone: &str) -> Option<&'static str> {
    match zone {
        "too_narrow" => Some("#f2d43d"),
        "accessible" => Some("#ef8a3c"),
        "wide" => Some("#f4b183"),
        "too_wide" => Some("#d1495b"),
        _ => None,
    }
}

fn plot_rangemap(input: &Path) -> CliResult<String> {
    let text = read_to_string(input)?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(RANGEMAP_CSV_HEADER) {
        return Err(CliError::usage(format!(
            "{} does not look like a range-map CSV (kind rangemap)",
            input.display()
        )));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(CliError::usage(format!(
                "range-map row {} malformed",
                idx + 2
            )));
        }
        let length: f64 = fields[0]
            .parse()
            .map_err(|_| CliError::usage(format!("bad length at row {}", idx + 2)))?;
        let d: f64 = fields[1]
            .parse()
            .map_err(|_| CliError::usage(format!("bad CD at row {}", idx + 2)))?;
        let zone = zone_color(fields[3].trim()).ok_or_else(|| {
            CliError::usage(format!("unknown zone {:?} at row {}", fields[3], idx + 2))
        })?;
        rows.push((length, d, zone));
    }
    if rows.is_empty() {
        return Err(CliError::usage("range-map CSV has no cells"));
    }
    let mut lengths: Vec<f64> = rows.iter().map(|r| r.0).collect();
    lengths.dedup();
    let mut d_values: Vec<f64> = rows.iter().map(|r| r.1).collect();
    d_values.sort_by(f64::total_cmp);
    d_values.dedup();
    let nl = lengths.len();
    let nd = d_values.len();
    // Cells are drawn on the index grid; lengths are log-spaced and CD may
    // be log- or linear-spaced, so index position is the faithful layout.
    let axes = Axes::new(-0.5, nl as f64 - 0.5, -0.5, nd as f64 - 0.5);
    let mut svg = Svg::new();
    let cell_w = axes.px(0.5) - axes.px(-0.5);
    let cell_h = axes.py(-0.5) - axes.py(0.5);
    let d_index: std::collections::BTreeMap<u64, usize> = d_values
        .iter()
        .enumerate()
        .map(|(j, v)| (v.to_bits(), j))
        .collect();
    for (length, d, color) in &rows {
        let i = lengths
            .iter()
            .position(|l| l == length)
            .expect("length from rows");
        let j = d_index[&d.to_bits()];
        let x = axes.px(i as f64 - 0.5);
        let y = axes.py(j as f64 + 0.5);
        svg.rect(x, y, cell_w + 0.3, cell_h + 0.3, color);
    }
    // Frame and sparse labels at min/mid/max grid positions.
    let (left, right) = (MARGIN_L, WIDTH - MARGIN_R);
    let (top, bottom) = (MARGIN_T, HEIGHT - MARGIN_B);
    svg.line(left, bottom, right, bottom, "black", 1.0);
    svg.line(left, top, left, bottom, "black", 1.0);
    for idx in [0, nl / 2, nl - 1] {
        let x = axes.px(idx as f64);
        svg.line(x, bottom, x, bottom + 5.0, "black", 1.0);
        svg.text(x, bottom + 18.0, "middle", 11.0, &fmt_tick(lengths[idx]));
    }
    for idx in [0, nd / 2, nd - 1] {
        let y = axes.py(idx as f64);
        svg.line(left - 5.0, y, left, y, "black", 1.0);
        svg.text(left - 8.0, y + 4.0, "end", 11.0, &fmt_tick(d_values[idx]));
    }
    svg.text(
        (left + right) / 2.0,
        HEIGHT - 16.0,
        "middle",
        13.0,
        "sample length (m)",
    );
    let _ = writeln!(
        svg.body,
        "<text x=\"18\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 18 {:.2})\">CD (ps/(nm.km))</text>",
        (top + bottom) / 2.0,
        (top + bottom) / 2.0
    );
    svg.text(
        (left + right) / 2.0,
        24.0,
        "middle",
        14.0,
        "first quadratic fringe width: working zones",
    );
    for (k, (zone, color)) in [
        ("too_narrow", "#f2d43d"),
        ("accessible", "#ef8a3c"),
        ("wide", "#f4b183"),
        ("too_wide", "#d1495b"),
    ]
    .iter()
    .enumerate()
    {
        let x = left + 8.0 + 150.0 * k as f64;
        svg.rect(x, top + 6.0, 12.0, 12.0, color);
        svg.text(x + 16.0, top + 16.0, "start", 11.0, zone);
    }
    Ok(svg.finish())
}

pub fn cmd_plot(input: &Path, kind: PlotKind, out: &Path) -> CliResult<()> {
    let svg = match kind {
        PlotKind::Fringe => plot_fringe(input)?,
        PlotKind::Histogram => plot_histogram(input)?,
        PlotKind::Sweep => plot_sweep(input)?,
        PlotKind::Rangemap => plot_rangemap(input)?,
    };
    std::fs::write(out, svg)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", out.display())))?;
    println!("wrote {}", out.display());
    Ok(())
}
