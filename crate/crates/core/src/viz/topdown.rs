//! Top-down orthographic SVG of the world and a flown trajectory.

use std::fmt::Write as _;

use super::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::world::World;

pub const CANVAS_WIDTH: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TopdownOptions {
    /// Fractions of the episode duration at which snapshot markers are drawn.
    pub snapshot_fractions: Vec<f64>,
}

impl TopdownOptions {
    /// Markers at `k / slices` for `k = 0..=slices`; no markers for 0.
    pub fn with_slices(slices: usize) -> Self {
        let snapshot_fractions = if slices == 0 {
            Vec::new()
        } else {
            (0..=slices).map(|k| k as f64 / slices as f64).collect()
        };
        Self { snapshot_fractions }
    }
}

impl Default for TopdownOptions {
    fn default() -> Self {
        Self::with_slices(8)
    }
}

/// For each fraction `f`, the index of the record whose time is nearest to
/// `f * T`, where `T` is the time of the last record. Ties go to the earlier record.
pub fn snapshot_indices(trajectory: &[TrajectoryRecord], fractions: &[f64]) -> Vec<usize> {
    let Some(last) = trajectory.last() else {
        return Vec::new();
    };
    let total = last.t;
    fractions
        .iter()
        .map(|f| {
            let target = f * total;
            let mut best = 0;
            for (i, r) in trajectory.iter().enumerate() {
                if (r.t - target).abs() < (trajectory[best].t - target).abs() {
                    best = i;
                }
            }
            best
        })
        .collect()
}

struct Projection {
    x_min: f64,
    y_max: f64,
    scale: f64,
}

impl Projection {
    fn point(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.x_min) * self.scale, (self.y_max - y) * self.scale)
    }
}

pub fn render_topdown(
    world: &World,
    trajectory: &[TrajectoryRecord],
    options: &TopdownOptions,
) -> Result<String> {
    if trajectory.is_empty() {
        return Err(Error::EmptyInput("trajectory has no records"));
    }
    let (lo, hi) = (world.bounds.min(), world.bounds.max());
    let proj = Projection {
        x_min: lo.x,
        y_max: hi.y,
        scale: CANVAS_WIDTH / (hi.x - lo.x),
    };
    let height = (hi.y - lo.y) * proj.scale;
    let max_height = world
        .buildings
        .iter()
        .map(|b| b.max().z)
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);

    let mut svg = String::new();
    writeln!(svg, r##"<?xml version="1.0" encoding="UTF-8"?>"##).unwrap();
    writeln!(
        svg,
        r##"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w:.0}" height="{height:.3}" viewBox="0 0 {w:.0} {height:.3}">"##,
        w = CANVAS_WIDTH
    )
    .unwrap();
    writeln!(
        svg,
        r##"<polygon class="bounds" points="0,0 {w:.3},0 {w:.3},{height:.3} 0,{height:.3}" fill="#f7f7f2" stroke="#333" stroke-width="2"/>"##,
        w = CANVAS_WIDTH
    )
    .unwrap();

    for (i, b) in world.buildings.iter().enumerate() {
        let (x, y) = proj.point(b.min().x, b.max().y);
        let w = 2.0 * b.half_extents.x * proj.scale;
        let h = 2.0 * b.half_extents.y * proj.scale;
        let shade = 0.25 + 0.65 * b.max().z / max_height;
        writeln!(
            svg,
            r##"<rect class="building" data-index="{i}" x="{x:.3}" y="{y:.3}" width="{w:.3}" height="{h:.3}" fill="#4a5568" fill-opacity="{shade:.3}" stroke="#1a202c"/>"##
        )
        .unwrap();
    }

    let (gx, gy) = proj.point(world.goal_center.x, world.goal_center.y);
    writeln!(
        svg,
        r##"<circle class="goal" cx="{gx:.3}" cy="{gy:.3}" r="{:.3}" fill="#38a169" fill-opacity="0.35" stroke="#276749" stroke-width="2"/>"##,
        world.goal_radius * proj.scale
    )
    .unwrap();
    let (sx, sy) = proj.point(world.spawn_center.x, world.spawn_center.y);
    writeln!(
        svg,
        r##"<path class="spawn" d="M{:.3},{:.3} L{:.3},{:.3} M{:.3},{:.3} L{:.3},{:.3}" stroke="#2b6cb0" stroke-width="3"/>"##,
        sx - 8.0,
        sy - 8.0,
        sx + 8.0,
        sy + 8.0,
        sx - 8.0,
        sy + 8.0,
        sx + 8.0,
        sy - 8.0
    )
    .unwrap();

    let points: Vec<String> = trajectory
        .iter()
        .map(|r| {
            let (x, y) = proj.point(r.position.x, r.position.y);
            format!("{x:.3},{y:.3}")
        })
        .collect();
    writeln!(
        svg,
        r##"<polyline class="trajectory" points="{}" fill="none" stroke="#c53030" stroke-width="2"/>"##,
        points.join(" ")
    )
    .unwrap();

    let indices = snapshot_indices(trajectory, &options.snapshot_fractions);
    for (f, &i) in options.snapshot_fractions.iter().zip(&indices) {
        let r = &trajectory[i];
        let (x, y) = proj.point(r.position.x, r.position.y);
        writeln!(
            svg,
            r##"<g class="snapshot" data-fraction="{f}" data-step="{}"><polygon points="{:.3},{:.3} {:.3},{:.3} {:.3},{:.3} {:.3},{:.3}" fill="#dd6b20"/><text x="{:.3}" y="{:.3}" font-size="12">t={:.2}s</text></g>"##,
            r.step,
            x,
            y - 6.0,
            x + 6.0,
            y,
            x,
            y + 6.0,
            x - 6.0,
            y,
            x + 8.0,
            y - 8.0,
            r.t
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
