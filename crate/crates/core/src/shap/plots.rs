//! SVG renderings of attribution summaries. Output depends only on the
//! inputs, so reruns produce identical bytes.

use super::{DependenceData, Explanation, SummaryData};
use crate::svg::{num, ramp, Svg};

const LEFT: f64 = 170.0;
const RIGHT: f64 = 40.0;
const TOP: f64 = 40.0;
const ROW_H: f64 = 28.0;
const PLOT_W: f64 = 480.0;

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-9);
    (lo - pad, hi + pad)
}

/// Dot plot: one row per feature, points at their SHAP value colored from
/// low (blue) to high (red) feature value. Overlapping points are spread
/// vertically by rank within a histogram bucket.
pub fn summary_svg(data: &SummaryData, comment: &str) -> String {
    let rows = data.features.len().max(1) as f64;
    let height = TOP + rows * ROW_H + 50.0;
    let mut svg = Svg::new(LEFT + PLOT_W + RIGHT, height);
    let (lo, hi) = extent(data.features.iter().flat_map(|f| f.points.iter().map(|p| p.phi)).chain([0.0]));
    let sx = |v: f64| LEFT + (v - lo) / (hi - lo) * PLOT_W;
    let bottom = TOP + rows * ROW_H;
    svg.line(sx(0.0), TOP - 10.0, sx(0.0), bottom, "#999999", 1.0);
    for (r, f) in data.features.iter().enumerate() {
        let cy = TOP + (r as f64 + 0.5) * ROW_H;
        svg.text(LEFT - 8.0, cy + 4.0, 11.0, "end", &f.name);
        let mut buckets = std::collections::HashMap::new();
        for p in &f.points {
            let b = ((sx(p.phi) - LEFT) / 3.0).floor() as i64;
            let k: &mut usize = buckets.entry(b).or_default();
            let step = (*k as f64 / 2.0).ceil() * if k.is_multiple_of(2) { 1.0 } else { -1.0 };
            *k += 1;
            let dy = (step * 1.5).clamp(-ROW_H * 0.45, ROW_H * 0.45);
            svg.circle(sx(p.phi), cy + dy, 2.0, &ramp(p.color));
        }
    }
    svg.line(LEFT, bottom, LEFT + PLOT_W, bottom, "black", 1.0);
    for t in 0..=4 {
        let v = lo + (hi - lo) * t as f64 / 4.0;
        svg.text(sx(v), bottom + 16.0, 10.0, "middle", &num(v));
    }
    svg.text(LEFT + PLOT_W / 2.0, bottom + 36.0, 12.0, "middle", "SHAP value");
    svg.finish(comment)
}

/// Scatter of raw feature value against SHAP value, colored by the
/// interaction feature when there is one.
pub fn dependence_svg(data: &DependenceData, comment: &str) -> String {
    let (w, h, m) = (560.0, 400.0, 60.0);
    let mut svg = Svg::new(w, h);
    let (xl, xh) = extent(data.points.iter().map(|p| p.x));
    let (yl, yh) = extent(data.points.iter().map(|p| p.phi));
    let (cl, ch) = extent(data.points.iter().filter_map(|p| p.color));
    let sx = |v: f64| m + (v - xl) / (xh - xl) * (w - 2.0 * m);
    let sy = |v: f64| h - m - (v - yl) / (yh - yl) * (h - 2.0 * m);
    svg.line(m, h - m, w - m, h - m, "black", 1.0);
    svg.line(m, m, m, h - m, "black", 1.0);
    if yl < 0.0 && yh > 0.0 {
        svg.dashed_line(m, sy(0.0), w - m, sy(0.0), "#999999");
    }
    for p in &data.points {
        let fill = p.color.map_or("#1e40ff".to_string(), |c| ramp((c - cl) / (ch - cl)));
        svg.circle(sx(p.x), sy(p.phi), 2.5, &fill);
    }
    for t in 0..=4 {
        let f = t as f64 / 4.0;
        svg.text(sx(xl + (xh - xl) * f), h - m + 16.0, 10.0, "middle", &num(xl + (xh - xl) * f));
        svg.text(m - 6.0, sy(yl + (yh - yl) * f) + 3.0, 10.0, "end", &num(yl + (yh - yl) * f));
    }
    svg.text(w / 2.0, h - 14.0, 12.0, "middle", &data.feature);
    svg.text(14.0, m - 20.0, 12.0, "start", &format!("SHAP value for {}", data.feature));
    if let Some(c) = &data.color_feature {
        svg.text(w - m, m - 20.0, 11.0, "end", &format!("color: {c}"));
    }
    svg.finish(comment)
}

/// Horizontal force plot. Positive contributions (red) push from the base
/// value toward the output from the left, negative ones (blue) from the
/// right; the two stacks meet at the output value.
pub fn force_svg(exp: &Explanation, max_labels: usize, comment: &str) -> String {
    let (w, h, m) = (720.0, 200.0, 40.0);
    let mut svg = Svg::new(w, h);
    let pos: f64 = exp.contributions.iter().filter(|c| c.phi > 0.0).map(|c| c.phi).sum();
    let neg: f64 = exp.contributions.iter().filter(|c| c.phi < 0.0).map(|c| c.phi).sum();
    let lo = exp.output_value - pos;
    let hi = exp.output_value - neg;
    let (lo, hi) = extent([lo, hi, exp.base_value].into_iter());
    let sx = |v: f64| m + (v - lo) / (hi - lo) * (w - 2.0 * m);
    let y = 90.0;
    let mut left = exp.output_value - pos;
    let mut right = exp.output_value - neg;
    let mut positives: Vec<_> = exp.contributions.iter().filter(|c| c.phi > 0.0).collect();
    positives.reverse();
    for c in positives {
        svg.rect(sx(left), y, sx(left + c.phi) - sx(left), 24.0, "#ff0051");
        left += c.phi;
    }
    let mut negatives: Vec<_> = exp.contributions.iter().filter(|c| c.phi < 0.0).collect();
    negatives.reverse();
    for c in negatives {
        svg.rect(sx(right + c.phi), y, sx(right) - sx(right + c.phi), 24.0, "#008bfb");
        right += c.phi;
    }
    svg.line(sx(exp.output_value), y - 20.0, sx(exp.output_value), y + 30.0, "black", 1.5);
    svg.dashed_line(sx(exp.base_value), y - 10.0, sx(exp.base_value), y + 34.0, "#666666");
    svg.text(sx(exp.output_value), y - 26.0, 12.0, "middle", &format!("f(x) = {:.2}", exp.output_value));
    svg.text(sx(exp.base_value), y + 48.0, 10.0, "middle", &format!("base value {:.2}", exp.base_value));
    for (k, c) in exp.contributions.iter().take(max_labels).enumerate() {
        svg.text(
            m,
            y + 70.0 + 12.0 * (k / 3) as f64,
            9.0,
            "start",
            &format!("{}{} = {} ({:+.3})", "    ".repeat(k % 3 * 6), c.feature, num(c.value), c.phi),
        );
    }
    svg.text(w / 2.0, 20.0, 12.0, "middle", &exp.caption());
    svg.finish(comment)
}
