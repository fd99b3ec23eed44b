//! Reward-convergence plot from the training metrics file.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ppo::{read_metrics, TrainMetrics};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 60.0;
const TICKS: usize = 5;

/// Trailing mean over the last `window` values (fewer at the start).
///
/// Each mean is taken as an offset from the oldest value in its window, so a
/// constant series maps to itself exactly.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..values.len())
        .map(|i| {
            let slice = &values[(i + 1).saturating_sub(window)..=i];
            let base = slice[0];
            base + slice.iter().map(|v| v - base).sum::<f64>() / slice.len() as f64
        })
        .collect()
}

pub fn render_reward_curve(metrics_path: impl AsRef<Path>, window: usize) -> Result<String> {
    let metrics = read_metrics(metrics_path)?;
    reward_curve_svg(&metrics, window)
}

/// Raw mean episode reward against environment steps, plus its moving average.
/// Rows without a finite reward (no finished episode yet) are skipped.
pub fn reward_curve_svg(metrics: &[TrainMetrics], window: usize) -> Result<String> {
    let points: Vec<(f64, f64)> = metrics
        .iter()
        .filter(|m| m.mean_ep_reward.is_finite())
        .map(|m| (m.env_steps as f64, m.mean_ep_reward))
        .collect();
    if points.is_empty() {
        return Err(Error::EmptyInput("metrics contain no finite episode reward"));
    }
    let raw: Vec<f64> = points.iter().map(|p| p.1).collect();
    let smooth = moving_average(&raw, window);

    let (x_lo, x_hi) = span(points.iter().map(|p| p.0));
    let (y_lo, y_hi) = span(raw.iter().chain(&smooth).copied());
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let px = |x: f64| MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let py = |y: f64| MARGIN_TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    writeln!(svg, r##"<?xml version="1.0" encoding="UTF-8"?>"##).unwrap();
    writeln!(
        svg,
        r##"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"##
    )
    .unwrap();
    let (left, right, top, bottom) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT, MARGIN_TOP, HEIGHT - MARGIN_BOTTOM);
    writeln!(
        svg,
        r##"<path class="axes" d="M{left},{top} L{left},{bottom} L{right},{bottom}" fill="none" stroke="#000"/>"##
    )
    .unwrap();
    for k in 0..=TICKS {
        let f = k as f64 / TICKS as f64;
        let xv = x_lo + f * (x_hi - x_lo);
        let yv = y_lo + f * (y_hi - y_lo);
        writeln!(
            svg,
            r##"<text class="xtick" x="{:.3}" y="{:.3}" font-size="11" text-anchor="middle">{xv:.0}</text>"##,
            px(xv),
            bottom + 18.0
        )
        .unwrap();
        writeln!(
            svg,
            r##"<text class="ytick" x="{:.3}" y="{:.3}" font-size="11" text-anchor="end">{yv:.2}</text>"##,
            left - 6.0,
            py(yv) + 4.0
        )
        .unwrap();
    }
    writeln!(
        svg,
        r##"<text class="xlabel" x="{:.3}" y="{:.3}" font-size="14" text-anchor="middle">environment steps</text>"##,
        left + 0.5 * plot_w,
        HEIGHT - 15.0
    )
    .unwrap();
    writeln!(
        svg,
        r##"<text class="ylabel" x="20" y="{:.3}" font-size="14" text-anchor="middle" transform="rotate(-90 20 {:.3})">mean episode reward</text>"##,
        top + 0.5 * plot_h,
        top + 0.5 * plot_h
    )
    .unwrap();

    let polyline = |ys: &[f64]| -> String {
        points
            .iter()
            .zip(ys)
            .map(|((x, _), y)| format!("{:.3},{:.3}", px(*x), py(*y)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    writeln!(
        svg,
        r##"<polyline class="raw" points="{}" fill="none" stroke="#a0aec0" stroke-width="1"/>"##,
        polyline(&raw)
    )
    .unwrap();
    writeln!(
        svg,
        r##"<polyline class="smoothed" data-window="{}" points="{}" fill="none" stroke="#2b6cb0" stroke-width="2"/>"##,
        window.max(1),
        polyline(&smooth)
    )
    .unwrap();
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Min and max of the values, widened when degenerate.
fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 1.0, hi + 1.0)
    }
}
