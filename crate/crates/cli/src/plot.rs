//! Self-contained SVG line chart of the mean gap across runs.

use std::fmt::Write;

use dlrc_core::RoundMetrics;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 44.0;
const BOTTOM: f64 = 52.0;
const COLOR: &str = "#1f5fa8";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub rounds: Vec<usize>,
    pub mean: Vec<f64>,
    /// Sample standard deviation; `None` for a single run.
    pub std: Option<Vec<f64>>,
    pub runs: usize,
}

/// Mean and standard deviation of `gap_raw` round by round. Every run must
/// record the same rounds.
pub fn aggregate(runs: &[Vec<RoundMetrics>]) -> Result<Series, String> {
    let first = runs.first().ok_or("no runs to plot")?;
    let rounds: Vec<usize> = first.iter().map(|m| m.round).collect();
    for (k, run) in runs.iter().enumerate().skip(1) {
        if run.len() != rounds.len() || run.iter().zip(&rounds).any(|(m, &r)| m.round != r) {
            return Err(format!("run {} records different rounds than run 1", k + 1));
        }
    }
    let n = runs.len() as f64;
    let mean: Vec<f64> = (0..rounds.len())
        .map(|t| runs.iter().map(|r| r[t].gap_raw).sum::<f64>() / n)
        .collect();
    let std = (runs.len() > 1).then(|| {
        (0..rounds.len())
            .map(|t| {
                let ss: f64 = runs.iter().map(|r| (r[t].gap_raw - mean[t]).powi(2)).sum();
                (ss / (n - 1.0)).sqrt()
            })
            .collect()
    });
    Ok(Series {
        rounds,
        mean,
        std,
        runs: runs.len(),
    })
}

fn nice_ticks(lo: f64, hi: f64) -> (Vec<f64>, f64) {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|f| f * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut ticks = Vec::new();
    let mut k = (lo / step).ceil();
    while k * step <= hi + 1e-9 * step {
        ticks.push(k * step);
        k += 1.0;
    }
    (ticks, step)
}

fn tick_label(v: f64, step: f64) -> String {
    let digits = (-step.log10().floor()).max(0.0) as usize;
    let s = format!("{v:.digits$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render_svg(series: &Series, axis: Axis, title: &str) -> String {
    let xs: Vec<f64> = series
        .rounds
        .iter()
        .map(|&r| match axis {
            Axis::Linear => r as f64,
            Axis::Log => (r.max(1) as f64).log10(),
        })
        .collect();
    let (mut x_lo, mut x_hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if x_hi <= x_lo {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    let upper: Vec<f64> = match &series.std {
        Some(s) => series.mean.iter().zip(s).map(|(m, s)| m + s).collect(),
        None => series.mean.clone(),
    };
    let lower: Vec<f64> = match &series.std {
        Some(s) => series.mean.iter().zip(s).map(|(m, s)| m - s).collect(),
        None => series.mean.clone(),
    };
    let y_lo = lower.iter().copied().fold(0.0, f64::min);
    let mut y_hi = upper.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if y_hi <= y_lo {
        y_hi = y_lo + 1.0;
    }
    y_hi += 0.05 * (y_hi - y_lo);

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let py = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    );

    let x_ticks: Vec<(f64, String)> = match axis {
        Axis::Log => (x_lo.ceil() as i32..=x_hi.floor() as i32)
            .map(|k| (k as f64, format!("{}", 10f64.powi(k))))
            .collect(),
        Axis::Linear => {
            let (t, step) = nice_ticks(x_lo, x_hi);
            t.into_iter().map(|v| (v, tick_label(v, step))).collect()
        }
    };
    let (y_ticks, y_step) = nice_ticks(y_lo, y_hi);
    let _ = writeln!(svg, r##"<g stroke="#dddddd" stroke-width="1">"##);
    for (x, _) in &x_ticks {
        let _ = writeln!(svg, r#"<line x1="{0:.2}" y1="{TOP:.2}" x2="{0:.2}" y2="{1:.2}"/>"#, px(*x), TOP + plot_h);
    }
    for y in &y_ticks {
        let _ = writeln!(svg, r#"<line x1="{LEFT:.2}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}"/>"#, py(*y), LEFT + plot_w);
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="black"/>"#
    );
    for (x, label) in &x_ticks {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#,
            px(*x),
            TOP + plot_h + 18.0
        );
    }
    for y in &y_ticks {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            py(*y) + 4.0,
            tick_label(*y, y_step)
        );
    }
    let x_name = match axis {
        Axis::Log => "round (log scale)",
        Axis::Linear => "round",
    };
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x_name}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{0:.2}" text-anchor="middle" transform="rotate(-90 16 {0:.2})">CCE-gap</text>"#,
        TOP + plot_h / 2.0
    );

    if series.std.is_some() {
        let mut pts = String::new();
        for (x, y) in xs.iter().zip(&upper) {
            let _ = write!(pts, "{:.2},{:.2} ", px(*x), py(*y));
        }
        for (x, y) in xs.iter().zip(&lower).rev() {
            let _ = write!(pts, "{:.2},{:.2} ", px(*x), py(*y));
        }
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="{COLOR}" fill-opacity="0.22" stroke="none"/>"#,
            pts.trim_end()
        );
    }
    let mut line = String::new();
    for (x, y) in xs.iter().zip(&series.mean) {
        let _ = write!(line, "{:.2},{:.2} ", px(*x), py(*y));
    }
    let _ = writeln!(
        svg,
        r#"<polyline points="{}" fill="none" stroke="{COLOR}" stroke-width="1.8"/>"#,
        line.trim_end()
    );

    let legend_x = LEFT + plot_w - 170.0;
    let _ = writeln!(
        svg,
        r#"<line x1="{0:.2}" y1="{1:.2}" x2="{2:.2}" y2="{1:.2}" stroke="{COLOR}" stroke-width="1.8"/>"#,
        legend_x,
        TOP + 16.0,
        legend_x + 22.0
    );
    let runs = if series.runs == 1 { "1 run".to_string() } else { format!("mean of {} runs", series.runs) };
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{runs}</text>"#, legend_x + 28.0, TOP + 20.0);
    if series.std.is_some() {
        let _ = writeln!(
            svg,
            r#"<rect x="{:.2}" y="{:.2}" width="22" height="10" fill="{COLOR}" fill-opacity="0.22"/>"#,
            legend_x,
            TOP + 29.0
        );
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">± 1 std</text>"#, legend_x + 28.0, TOP + 38.0);
    }
    svg.push_str("</svg>\n");
    svg
}
