//! File emitters for trajectories, top-down SVG views, reward curves and OBJ scenes.

mod reward_curve;
mod scene;
mod topdown;
mod trajectory;

pub use reward_curve::{moving_average, render_reward_curve, reward_curve_svg};
pub use scene::{export_scene, scene_obj};
pub use topdown::{render_topdown, snapshot_indices, TopdownOptions, CANVAS_WIDTH};
pub(crate) use trajectory::csv_error;
pub use trajectory::{
    parse_trajectory, read_trajectory, trajectory_csv, validate_trajectory, write_trajectory,
    TrajectoryRecord, TRAJECTORY_HEADER,
};
