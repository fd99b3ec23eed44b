//! Per-step trajectory records and their CSV form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::env::{Action, RewardBreakdown, Termination, UamState};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub const TRAJECTORY_HEADER: &str = "step,t,x,y,z,vx,vy,vz,wx,wy,wz,ax,ay,az,reward,term";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub step: u32,
    /// Elapsed time `step * dt` in seconds.
    pub t: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    pub angular_velocity: Vec3,
    /// Command applied on the transition into this state; zero for the start row.
    pub action: Vec3,
    pub reward: f64,
    pub term: Termination,
}

impl TrajectoryRecord {
    pub fn initial(state: &UamState, dt: f64) -> Self {
        Self::from_state(state, dt, Action::default(), RewardBreakdown::default(), Termination::Running)
    }

    pub fn from_state(
        state: &UamState,
        dt: f64,
        action: Action,
        reward: RewardBreakdown,
        term: Termination,
    ) -> Self {
        Self {
            step: state.step_index,
            t: f64::from(state.step_index) * dt,
            position: state.position,
            velocity: state.velocity,
            angular_velocity: state.angular_velocity(),
            action: action.command,
            reward: reward.total,
            term,
        }
    }
}

/// Checks that steps increase strictly from 0 and only the last row is terminal.
pub fn validate_trajectory(records: &[TrajectoryRecord]) -> Result<()> {
    for (i, r) in records.iter().enumerate() {
        let expected_terminal = i + 1 == records.len();
        if i == 0 && r.step != 0 {
            return Err(Error::Config("trajectory must start at step 0".into()));
        }
        if i > 0 && r.step <= records[i - 1].step {
            return Err(Error::Config(format!("step does not increase at row {i}")));
        }
        if r.term.is_terminal() != expected_terminal {
            return Err(Error::Config(format!(
                "row {i} has termination {} but only the final row may be terminal",
                r.term
            )));
        }
    }
    Ok(())
}

fn push_float(out: &mut String, v: f64) {
    // 17 significant digits round-trip every finite f64.
    write!(out, ",{v:.16e}").unwrap();
}

pub fn trajectory_csv(records: &[TrajectoryRecord]) -> String {
    let mut out = String::with_capacity(64 + records.len() * 400);
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for r in records {
        write!(out, "{}", r.step).unwrap();
        push_float(&mut out, r.t);
        for v in [r.position, r.velocity, r.angular_velocity, r.action] {
            for c in v.to_array() {
                push_float(&mut out, c);
            }
        }
        push_float(&mut out, r.reward);
        writeln!(out, ",{}", r.term).unwrap();
    }
    out
}

pub fn write_trajectory(records: &[TrajectoryRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, trajectory_csv(records)).map_err(|e| Error::file(path, e))
}

pub fn read_trajectory(path: impl AsRef<Path>) -> Result<Vec<TrajectoryRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    parse_trajectory(&text)
}

pub fn parse_trajectory(text: &str) -> Result<Vec<TrajectoryRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| csv_error(e, 1))?;
    if header.iter().collect::<Vec<_>>().join(",") != TRAJECTORY_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{TRAJECTORY_HEADER}`"),
        });
    }
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(e, 0))?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Parse { line, message };
        let float = |i: usize| -> Result<f64> {
            row[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| bad(format!("column {}: {e}", i + 1)))
        };
        let vec3 = |i: usize| -> Result<Vec3> { Ok(Vec3::new(float(i)?, float(i + 1)?, float(i + 2)?)) };
        let step = row[0]
            .trim()
            .parse::<u32>()
            .map_err(|e| bad(format!("column 1: {e}")))?;
        let term = Termination::parse(row[15].trim())
            .ok_or_else(|| bad(format!("unknown termination `{}`", &row[15])))?;
        records.push(TrajectoryRecord {
            step,
            t: float(1)?,
            position: vec3(2)?,
            velocity: vec3(5)?,
            angular_velocity: vec3(8)?,
            action: vec3(11)?,
            reward: float(14)?,
            term,
        });
    }
    Ok(records)
}

pub(crate) fn csv_error(e: csv::Error, fallback_line: u64) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line());
    Error::Parse {
        line,
        message: e.to_string(),
    }
}
