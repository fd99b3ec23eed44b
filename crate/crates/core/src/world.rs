//! Static urban scene and its procedural generator.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{point_in_box, BuildingBox, Vec3};

/// Attempt budget for rejection-sampled placements.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct World {
    pub seed: u64,
    pub bounds: BuildingBox,
    pub buildings: Vec<BuildingBox>,
    pub spawn_center: Vec3,
    pub spawn_radius: f64,
    pub goal_center: Vec3,
    pub goal_radius: f64,
}

impl World {
    pub fn inside_any_building(&self, p: Vec3) -> bool {
        self.buildings.iter().any(|b| point_in_box(p, b))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.bounds.half_extents.x > 0.0
            && self.bounds.half_extents.y > 0.0
            && self.bounds.half_extents.z > 0.0)
        {
            return bad("bounds half_extents must be positive".into());
        }
        for (i, b) in self.buildings.iter().enumerate() {
            if !(b.center.is_finite() && b.half_extents.is_finite()) {
                return bad(format!("building {i} has non-finite geometry"));
            }
            if !(b.half_extents.x > 0.0 && b.half_extents.y > 0.0 && b.half_extents.z > 0.0) {
                return bad(format!("building {i} has a non-positive half extent"));
            }
            if b.center.z != b.half_extents.z {
                return bad(format!("building {i} does not rest on the ground plane"));
            }
        }
        if !(self.goal_radius > 0.0 && self.goal_radius.is_finite()) {
            return bad("goal_radius must be positive".into());
        }
        if !(self.spawn_radius >= 0.0 && self.spawn_radius.is_finite()) {
            return bad("spawn_radius must be non-negative".into());
        }
        for (name, p) in [("spawn_center", self.spawn_center), ("goal_center", self.goal_center)] {
            if !point_in_box(p, &self.bounds) {
                return bad(format!("{name} lies outside the world bounds"));
            }
            if self.inside_any_building(p) {
                return bad(format!("{name} lies inside a building"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("world serializes")
    }

    pub fn from_json(text: &str) -> Result<World> {
        let world: World = serde_json::from_str(text)?;
        world.validate()?;
        Ok(world)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<World> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        World::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::file(path, e))
    }
}

/// Parameters of the procedural city generator. Lengths in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n_buildings: usize,
    /// Full extents of the world bounds; the bounds sit on the ground plane.
    pub extent: [f64; 3],
    pub height_min: f64,
    pub height_max: f64,
    /// Range of full building widths along x and y.
    pub footprint_min: f64,
    pub footprint_max: f64,
    pub spawn_radius: f64,
    pub goal_radius: f64,
    /// Altitude band for spawn and goal centers.
    pub altitude_min: f64,
    pub altitude_max: f64,
    /// Minimum horizontal distance between spawn and goal centers.
    pub min_separation: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_buildings: 10,
            extent: [100.0, 100.0, 60.0],
            height_min: 10.0,
            height_max: 45.0,
            footprint_min: 6.0,
            footprint_max: 14.0,
            spawn_radius: 3.0,
            goal_radius: 5.0,
            altitude_min: 8.0,
            altitude_max: 30.0,
            min_separation: 40.0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !self.extent.iter().all(|e| *e > 0.0 && e.is_finite()) {
            return bad("extent components must be positive and finite");
        }
        if !(self.height_min > 0.0 && self.height_min <= self.height_max) {
            return bad("height_min must be positive and at most height_max");
        }
        if !(self.footprint_min > 0.0 && self.footprint_min <= self.footprint_max) {
            return bad("footprint_min must be positive and at most footprint_max");
        }
        if !(self.goal_radius > 0.0) {
            return bad("goal_radius must be positive");
        }
        if !(self.spawn_radius >= 0.0) {
            return bad("spawn_radius must be non-negative");
        }
        if !(0.0 <= self.altitude_min
            && self.altitude_min <= self.altitude_max
            && self.altitude_max <= self.extent[2])
        {
            return bad("altitude_min and altitude_max must satisfy 0 <= altitude_min <= altitude_max <= extent[2]");
        }
        if !(self.min_separation >= 0.0) {
            return bad("min_separation must be non-negative");
        }
        Ok(())
    }
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Builds a city on a jittered grid. Deterministic in `(config, seed)`.
pub fn generate_world(config: &GenConfig, seed: u64) -> Result<World> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [ex, ey, ez] = config.extent;
    let bounds = BuildingBox::new(
        Vec3::new(0.0, 0.0, 0.5 * ez),
        Vec3::new(0.5 * ex, 0.5 * ey, 0.5 * ez),
    );

    let n = config.n_buildings;
    let mut buildings = Vec::with_capacity(n);
    if n > 0 {
        let cols = (n as f64).sqrt().ceil() as usize;
        let rows = n.div_ceil(cols);
        let cell_w = ex / cols as f64;
        let cell_h = ey / rows as f64;
        for i in 0..n {
            let (row, col) = (i / cols, i % cols);
            let x0 = -0.5 * ex + col as f64 * cell_w;
            let y0 = -0.5 * ey + row as f64 * cell_h;
            let half_x = (0.5 * uniform(&mut rng, config.footprint_min, config.footprint_max))
                .min(0.45 * cell_w);
            let half_y = (0.5 * uniform(&mut rng, config.footprint_min, config.footprint_max))
                .min(0.45 * cell_h);
            let height = uniform(&mut rng, config.height_min, config.height_max).min(ez);
            let cx = uniform(&mut rng, x0 + half_x, x0 + cell_w - half_x);
            let cy = uniform(&mut rng, y0 + half_y, y0 + cell_h - half_y);
            buildings.push(BuildingBox::on_ground(cx, cy, half_x, half_y, height));
        }
    }

    let margin_x = config.spawn_radius.max(config.goal_radius).min(0.25 * ex);
    let margin_y = config.spawn_radius.max(config.goal_radius).min(0.25 * ey);
    let sample_point = |rng: &mut ChaCha8Rng| {
        Vec3::new(
            uniform(rng, -0.5 * ex + margin_x, 0.5 * ex - margin_x),
            uniform(rng, -0.5 * ey + margin_y, 0.5 * ey - margin_y),
            uniform(rng, config.altitude_min, config.altitude_max),
        )
    };
    let blocked = |p: Vec3| buildings.iter().any(|b| point_in_box(p, b));

    let spawn_center = (0..MAX_PLACEMENT_ATTEMPTS)
        .map(|_| sample_point(&mut rng))
        .find(|p| !blocked(*p))
        .ok_or_else(|| {
            Error::GenerationFailed(format!(
                "no spawn position outside buildings after {MAX_PLACEMENT_ATTEMPTS} attempts"
            ))
        })?;
    let horizontal = |a: Vec3, b: Vec3| (a.x - b.x).hypot(a.y - b.y);
    let goal_center = (0..MAX_PLACEMENT_ATTEMPTS)
        .map(|_| sample_point(&mut rng))
        .find(|p| !blocked(*p) && horizontal(*p, spawn_center) >= config.min_separation)
        .ok_or_else(|| {
            Error::GenerationFailed(format!(
                "no goal position outside buildings and {} m from spawn after {MAX_PLACEMENT_ATTEMPTS} attempts",
                config.min_separation
            ))
        })?;

    Ok(World {
        seed,
        bounds,
        buildings,
        spawn_center,
        spawn_radius: config.spawn_radius,
        goal_center,
        goal_radius: config.goal_radius,
    })
}
