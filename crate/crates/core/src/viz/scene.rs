//! Wavefront OBJ export of buildings, ground and the flown path.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::geometry::BuildingBox;
use crate::world::World;

/// Outward-facing triangles over corner indices `x | y << 1 | z << 2`.
const CUBOID_TRIANGLES: [[usize; 3]; 12] = [
    [0, 2, 3],
    [0, 3, 1],
    [4, 5, 7],
    [4, 7, 6],
    [0, 1, 5],
    [0, 5, 4],
    [2, 6, 7],
    [2, 7, 3],
    [0, 4, 6],
    [0, 6, 2],
    [1, 3, 7],
    [1, 7, 5],
];

fn corners(b: &BuildingBox) -> [[f64; 3]; 8] {
    let (lo, hi) = (b.min(), b.max());
    std::array::from_fn(|i| {
        [
            if i & 1 == 0 { lo.x } else { hi.x },
            if i & 2 == 0 { lo.y } else { hi.y },
            if i & 4 == 0 { lo.z } else { hi.z },
        ]
    })
}

/// Vertex count is `4 + 8 * buildings + trajectory points`.
pub fn scene_obj(world: &World, trajectory: &[TrajectoryRecord]) -> String {
    let mut obj = String::new();
    writeln!(obj, "# uam scene, world seed {}", world.seed).unwrap();
    let (lo, hi) = (world.bounds.min(), world.bounds.max());
    writeln!(obj, "o ground").unwrap();
    for (x, y) in [(lo.x, lo.y), (hi.x, lo.y), (hi.x, hi.y), (lo.x, hi.y)] {
        writeln!(obj, "v {x} {y} {}", lo.z).unwrap();
    }
    writeln!(obj, "f 1 2 3 4").unwrap();
    let mut next = 5;
    for (i, b) in world.buildings.iter().enumerate() {
        writeln!(obj, "o building_{i}").unwrap();
        for [x, y, z] in corners(b) {
            writeln!(obj, "v {x} {y} {z}").unwrap();
        }
        for [a, b, c] in CUBOID_TRIANGLES {
            writeln!(obj, "f {} {} {}", next + a, next + b, next + c).unwrap();
        }
        next += 8;
    }
    if !trajectory.is_empty() {
        writeln!(obj, "o trajectory").unwrap();
        for r in trajectory {
            writeln!(obj, "v {} {} {}", r.position.x, r.position.y, r.position.z).unwrap();
        }
        if trajectory.len() >= 2 {
            let indices: Vec<String> = (next..next + trajectory.len()).map(|i| i.to_string()).collect();
            writeln!(obj, "l {}", indices.join(" ")).unwrap();
        }
    }
    obj
}

pub fn export_scene(world: &World, trajectory: &[TrajectoryRecord], path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let obj = scene_obj(world, trajectory);
    fs::write(path, &obj).map_err(|e| Error::file(path, e))?;
    Ok(obj)
}
