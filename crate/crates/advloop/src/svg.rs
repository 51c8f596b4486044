//! Dependency-free SVG emission for the report plots: precision/recall vs
//! perturbation budget, trajectory overlays on the track, and confusion
//! heatmaps. Output is plain text with fixed float formatting, so plots are
//! diffable across runs.

use std::fmt::Write;

pub struct SvgCanvas {
    pub width: f64,
    pub height: f64,
    body: String,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl SvgCanvas {
    pub fn new(width: f64, height: f64) -> Self {
        SvgCanvas {
            width,
            height,
            body: String::new(),
        }
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, stroke: &str) {
        let _ = writeln!(
            self.body,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{fill}\" stroke=\"{stroke}\"/>"
        );
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        let _ = writeln!(
            self.body,
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"{stroke}\" stroke-width=\"{width:.2}\"/>"
        );
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, width: f64, dash: &str) {
        if pts.is_empty() {
            return;
        }
        let mut d = String::new();
        for (x, y) in pts {
            let _ = write!(d, "{x:.2},{y:.2} ");
        }
        let dash_attr = if dash.is_empty() {
            String::new()
        } else {
            format!(" stroke-dasharray=\"{dash}\"")
        };
        let _ = writeln!(
            self.body,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{width:.2}\"{dash_attr}/>",
            d.trim_end()
        );
    }

    pub fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"{r:.2}\" fill=\"{fill}\"/>"
        );
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, content: &str) {
        let _ = writeln!(
            self.body,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"{size:.1}\" font-family=\"sans-serif\" text-anchor=\"{anchor}\">{}</text>",
            esc(content)
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"0 0 {:.0} {:.0}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.width, self.height, self.width, self.height, self.body
        )
    }
}

/// One plotted line series.
pub struct Series {
    pub label: String,
    pub color: String,
    pub dash: String,
    pub points: Vec<(f64, f64)>,
}

/// Generic x/y line chart with axes, ticks and a legend.
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    y_range: (f64, f64),
) -> String {
    let (w, h) = (640.0, 420.0);
    let (ml, mr, mt, mb) = (60.0, 160.0, 40.0, 50.0);
    let plot_w = w - ml - mr;
    let plot_h = h - mt - mb;
    let mut svg = SvgCanvas::new(w, h);

    let xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    let (x_min, x_max) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let x_span = (x_max - x_min).max(1e-9);
    let (y_min, y_max) = y_range;
    let y_span = (y_max - y_min).max(1e-9);
    let px = |x: f64| ml + (x - x_min) / x_span * plot_w;
    let py = |y: f64| mt + plot_h - (y - y_min) / y_span * plot_h;

    svg.text(w / 2.0 - mr / 2.0, 22.0, 16.0, "middle", title);
    svg.rect(ml, mt, plot_w, plot_h, "none", "#333333");
    // y ticks
    for k in 0..=5 {
        let y = y_min + y_span * k as f64 / 5.0;
        svg.line(ml - 4.0, py(y), ml, py(y), "#333333", 1.0);
        svg.line(ml, py(y), ml + plot_w, py(y), "#dddddd", 0.5);
        svg.text(ml - 8.0, py(y) + 4.0, 11.0, "end", &format!("{y:.2}"));
    }
    // x ticks at the data points of the first series
    if let Some(s0) = series.first() {
        for (x, _) in &s0.points {
            svg.line(px(*x), mt + plot_h, px(*x), mt + plot_h + 4.0, "#333333", 1.0);
            svg.text(px(*x), mt + plot_h + 18.0, 11.0, "middle", &format!("{x}"));
        }
    }
    svg.text(ml + plot_w / 2.0, h - 12.0, 12.0, "middle", x_label);
    svg.text(16.0, mt + plot_h / 2.0, 12.0, "middle", y_label);

    for (i, s) in series.iter().enumerate() {
        let pts: Vec<(f64, f64)> = s.points.iter().map(|&(x, y)| (px(x), py(y))).collect();
        svg.polyline(&pts, &s.color, 2.0, &s.dash);
        for &(x, y) in &pts {
            svg.circle(x, y, 3.0, &s.color);
        }
        let ly = mt + 14.0 + i as f64 * 18.0;
        svg.line(w - mr + 10.0, ly - 4.0, w - mr + 34.0, ly - 4.0, &s.color, 2.0);
        svg.text(w - mr + 40.0, ly, 11.0, "start", &s.label);
    }
    svg.finish()
}

/// Trajectory overlay: track outline plus one path per scenario.
pub struct TrajectoryPlot {
    pub title: String,
    pub centerline: Vec<(f64, f64)>,
    pub lane_width: f64,
    pub stop_points: Vec<(f64, f64)>,
    pub paths: Vec<Series>,
}

pub fn trajectory_plot(p: &TrajectoryPlot) -> String {
    let (w, h) = (720.0, 560.0);
    let (ml, mr, mt, mb) = (50.0, 190.0, 40.0, 40.0);
    let mut svg = SvgCanvas::new(w, h);

    let all: Vec<(f64, f64)> = p
        .centerline
        .iter()
        .chain(p.paths.iter().flat_map(|s| s.points.iter()))
        .cloned()
        .collect();
    let (mut x_min, mut x_max, mut y_min, mut y_max) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in &all {
        x_min = x_min.min(*x);
        x_max = x_max.max(*x);
        y_min = y_min.min(*y);
        y_max = y_max.max(*y);
    }
    let pad = 0.2;
    x_min -= pad;
    x_max += pad;
    y_min -= pad;
    y_max += pad;
    let scale = ((w - ml - mr) / (x_max - x_min)).min((h - mt - mb) / (y_max - y_min));
    let px = |x: f64| ml + (x - x_min) * scale;
    let py = |y: f64| h - mb - (y - y_min) * scale; // world +y is up

    svg.text((ml + w - mr) / 2.0, 22.0, 16.0, "middle", &p.title);

    // lane edges and centerline
    let mut closed = p.centerline.clone();
    if let Some(&first) = closed.first() {
        closed.push(first);
    }
    let to_screen = |pts: &[(f64, f64)]| pts.iter().map(|&(x, y)| (px(x), py(y))).collect::<Vec<_>>();
    svg.polyline(&to_screen(&closed), "#bbbbbb", (p.lane_width * scale).max(2.0), "");
    svg.polyline(&to_screen(&closed), "#888888", 1.0, "4 3");
    for &(x, y) in &p.stop_points {
        svg.circle(px(x), py(y), 5.0, "#cc2222");
    }

    for (i, s) in p.paths.iter().enumerate() {
        svg.polyline(&to_screen(&s.points), &s.color, 1.6, &s.dash);
        let ly = mt + 14.0 + i as f64 * 18.0;
        svg.line(w - mr + 10.0, ly - 4.0, w - mr + 34.0, ly - 4.0, &s.color, 2.0);
        svg.text(w - mr + 40.0, ly, 11.0, "start", &s.label);
    }
    svg.text(w - mr + 10.0, mt + 14.0 + p.paths.len() as f64 * 18.0 + 6.0, 10.0, "start", "red dots: stop lines");
    svg.finish()
}

/// 5x5 confusion heatmap with counts.
pub fn confusion_heatmap(title: &str, names: &[&str], counts: &[[u64; 5]; 5]) -> String {
    let (w, h) = (520.0, 480.0);
    let (ml, mt) = (130.0, 90.0);
    let cell = 70.0;
    let mut svg = SvgCanvas::new(w, h);
    svg.text(w / 2.0, 26.0, 15.0, "middle", title);
    svg.text(ml + 2.5 * cell, 52.0, 12.0, "middle", "predicted");
    svg.text(22.0, mt + 2.5 * cell, 12.0, "middle", "truth");

    let max = counts.iter().flatten().cloned().max().unwrap_or(1).max(1);
    for (r, row) in counts.iter().enumerate() {
        svg.text(
            ml - 8.0,
            mt + r as f64 * cell + cell / 2.0 + 4.0,
            11.0,
            "end",
            names[r],
        );
        for (c, &v) in row.iter().enumerate() {
            if r == 0 {
                svg.text(
                    ml + c as f64 * cell + cell / 2.0,
                    mt - 8.0,
                    11.0,
                    "middle",
                    names[c],
                );
            }
            let intensity = (v as f64 / max as f64 * 200.0) as u8;
            let fill = format!("rgb({},{},255)", 235 - intensity.min(180), 240 - intensity);
            svg.rect(ml + c as f64 * cell, mt + r as f64 * cell, cell, cell, &fill, "#666666");
            svg.text(
                ml + c as f64 * cell + cell / 2.0,
                mt + r as f64 * cell + cell / 2.0 + 4.0,
                13.0,
                "middle",
                &v.to_string(),
            );
        }
    }
    svg.finish()
}
