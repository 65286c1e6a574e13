//! Hand-written SVG learning curves: per variant a mean line over seeds
//! and a shaded band from the lowest to the highest seed.

use std::fmt::Write;

use softworld::policy::Variant;

pub struct Series {
    pub variant: Variant,
    /// Rewards by episode, one vector per seed.
    pub runs: Vec<Vec<f64>>,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

fn color(v: Variant) -> &'static str {
    match v {
        Variant::Sac => "#1f77b4",
        Variant::SoftgptS => "#ff7f0e",
        Variant::SoftgptSr => "#2ca02c",
        Variant::SoftgptFull => "#d62728",
    }
}

/// `(mean, min, max)` over the seeds that reached each episode.
fn envelope(runs: &[Vec<f64>]) -> Vec<(f64, f64, f64)> {
    let len = runs.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|i| {
            let vals: Vec<f64> = runs.iter().filter_map(|r| r.get(i).copied()).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (mean, lo, hi)
        })
        .collect()
}

pub fn learning_curves(title: &str, series: &[Series]) -> String {
    let envelopes: Vec<Vec<(f64, f64, f64)>> = series.iter().map(|s| envelope(&s.runs)).collect();
    let episodes = envelopes.iter().map(Vec::len).max().unwrap_or(0);
    let x_max = episodes.saturating_sub(1).max(1) as f64;
    let mut y_min = envelopes.iter().flatten().map(|e| e.1).fold(f64::INFINITY, f64::min);
    let mut y_max = envelopes.iter().flatten().map(|e| e.2).fold(f64::NEG_INFINITY, f64::max);
    if !y_min.is_finite() || !y_max.is_finite() {
        (y_min, y_max) = (0.0, 1.0);
    }
    if y_max - y_min < 1e-9 {
        (y_min, y_max) = (y_min - 0.5, y_max + 0.5);
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + plot_w * x / x_max;
    let py = |y: f64| TOP + plot_h * (1.0 - (y - y_min) / (y_max - y_min));

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="16">{}</text>"#, LEFT + plot_w / 2.0, escape(title));

    // Axes and ticks.
    let (x0, y0, x1, y1) = (LEFT, TOP + plot_h, LEFT + plot_w, TOP);
    let _ = writeln!(s, r#"<path d="M{x0:.1} {y1:.1} V{y0:.1} H{x1:.1}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let ex = f * x_max;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11">{:.0}</text>"#, px(ex), y0 + 16.0, ex + 1.0);
        let ry = y_min + f * (y_max - y_min);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="11">{ry:.3}</text>"#, x0 - 6.0, py(ry) + 4.0);
    }
    let _ =
        writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13">episode</text>"#, LEFT + plot_w / 2.0, HEIGHT - 18.0);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" font-size="13" transform="rotate(-90 18 {:.1})">reward</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    for (series, env) in series.iter().zip(&envelopes) {
        let c = color(series.variant);
        let upper = env.iter().enumerate().map(|(i, e)| format!("{:.2},{:.2}", px(i as f64), py(e.2)));
        let lower = env.iter().enumerate().rev().map(|(i, e)| format!("{:.2},{:.2}", px(i as f64), py(e.1)));
        let band: Vec<String> = upper.chain(lower).collect();
        let _ = writeln!(s, r#"<polygon points="{}" fill="{c}" fill-opacity="0.2" stroke="none"/>"#, band.join(" "));
        let mean: Vec<String> = env.iter().enumerate().map(|(i, e)| format!("{:.2},{:.2}", px(i as f64), py(e.0))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="1.5"/>"#, mean.join(" "));
    }

    for (i, series) in series.iter().enumerate() {
        let y = TOP + 10.0 + 22.0 * i as f64;
        let x = WIDTH - RIGHT + 20.0;
        let _ = writeln!(
            s,
            r#"<g class="legend"><rect x="{x:.1}" y="{:.1}" width="14" height="4" fill="{}"/><text x="{:.1}" y="{:.1}" font-size="12">{}</text></g>"#,
            y - 4.0,
            color(series.variant),
            x + 20.0,
            y + 2.0,
            series.variant
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(v: Variant, seeds: usize) -> Series {
        Series { variant: v, runs: (0..seeds).map(|k| (0..12).map(|e| (e * (k + 1)) as f64 * 0.01).collect()).collect() }
    }

    #[test]
    fn single_curve_is_well_formed() {
        let svg = learning_curves("rolling", &[Series { variant: Variant::Sac, runs: vec![vec![0.1, 0.3, 0.2]] }]);
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        assert_eq!(doc.descendants().filter(|n| n.has_tag_name("polyline")).count(), 1);
    }

    #[test]
    fn one_legend_entry_per_variant() {
        let all: Vec<Series> = Variant::ALL.iter().map(|&v| series(v, 3)).collect();
        let svg = learning_curves("rolling", &all);
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let labels: Vec<&str> = doc
            .descendants()
            .filter(|n| n.attribute("class") == Some("legend"))
            .filter_map(|g| g.descendants().find(|n| n.has_tag_name("text")).and_then(|t| t.text()))
            .collect();
        assert_eq!(labels, ["sac", "softgpt_s", "softgpt_sr", "softgpt_full"]);
        assert_eq!(svg, learning_curves("rolling", &all));
    }

    #[test]
    fn envelope_spans_the_seeds() {
        let env = envelope(&[vec![1.0, 2.0], vec![3.0]]);
        assert_eq!(env, [(2.0, 1.0, 3.0), (2.0, 2.0, 2.0)]);
        // Flat or single-point data still yields a drawable range.
        let svg = learning_curves("t", &[Series { variant: Variant::Sac, runs: vec![vec![0.5]] }]);
        assert!(roxmltree::Document::parse(&svg).is_ok());
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
