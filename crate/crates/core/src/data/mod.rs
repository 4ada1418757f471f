//! Agent-frame records, scenes, windowing into observation/prediction
//! samples, and CSV ingestion.
//!
//! The on-disk schema is a UTF-8, LF-terminated CSV with header
//! `Fid,Aid,x,y,Lid,pa,f,mb,lid,ls,lt`, optionally accompanied by a JSON map
//! sidecar describing lights, lanes, and influence areas.

mod window;

pub use window::{
    from_relative, to_relative, window_scene, AgentFrameContext, RelativeWindow, TrajectoryWindow,
};

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

pub const CSV_HEADER: &str = "Fid,Aid,x,y,Lid,pa,f,mb,lid,ls,lt";

/// Native frame rate of generated data, in frames per second.
pub const FRAMES_PER_SECOND: f64 = 3.0;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Row { line: usize, msg: String },
    #[error("bad header: expected `{CSV_HEADER}`, got `{got}`")]
    Header { got: String },
    #[error("line {line}: duplicate record for frame {frame}, agent {agent}")]
    DuplicateAgent { line: usize, frame: i64, agent: i64 },
    #[error("line {line}: frame id {frame} decreases (previous {prev})")]
    NonMonotoneFrame { line: usize, frame: i64, prev: i64 },
    #[error("map sidecar: {0}")]
    Map(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LightState {
    Red,
    Green,
    Yellow,
}

impl LightState {
    pub fn code(self) -> &'static str {
        match self {
            LightState::Red => "R",
            LightState::Green => "G",
            LightState::Yellow => "Y",
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        match s {
            "R" => Some(LightState::Red),
            "G" => Some(LightState::Green),
            "Y" => Some(LightState::Yellow),
            _ => None,
        }
    }

    /// Index into one-hot encodings: R=0, G=1, Y=2.
    pub fn index(self) -> usize {
        match self {
            LightState::Red => 0,
            LightState::Green => 1,
            LightState::Yellow => 2,
        }
    }
}

impl fmt::Display for LightState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Maneuver {
    Straight,
    Left,
    Right,
}

impl Maneuver {
    pub fn code(self) -> &'static str {
        match self {
            Maneuver::Straight => "S",
            Maneuver::Left => "L",
            Maneuver::Right => "R",
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        match s {
            "S" => Some(Maneuver::Straight),
            "L" => Some(Maneuver::Left),
            "R" => Some(Maneuver::Right),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Maneuver::Straight => 0,
            Maneuver::Left => 1,
            Maneuver::Right => 2,
        }
    }
}

/// One agent-frame observation: identity, position in pixels, lane, and the
/// five traffic-light context fields.
///
/// The lane id's sign encodes the travel direction group; `head_of_queue`
/// implies `in_influence_area`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentRecord {
    pub frame_id: i64,
    pub agent_id: i64,
    pub x: f64,
    pub y: f64,
    pub lane_id: i64,
    pub in_influence_area: bool,
    pub head_of_queue: bool,
    pub maneuver: Maneuver,
    pub light_id: i64,
    pub light_state: LightState,
    pub light_remaining: f64,
}

impl AgentRecord {
    /// Checks the record invariants, reporting the first violation.
    pub fn validate(&self) -> Result<(), String> {
        if self.frame_id < 0 {
            return Err(format!("frame_id {} is negative", self.frame_id));
        }
        if !self.light_remaining.is_finite() || self.light_remaining < 0.0 {
            return Err(format!(
                "light_remaining {} must be finite and >= 0",
                self.light_remaining
            ));
        }
        if self.head_of_queue && !self.in_influence_area {
            return Err("head_of_queue set outside the influence area".to_string());
        }
        if !(self.x.is_finite() && self.y.is_finite()) {
            return Err("non-finite position".to_string());
        }
        Ok(())
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.frame_id,
            self.agent_id,
            self.x,
            self.y,
            self.lane_id,
            self.in_influence_area as u8,
            self.head_of_queue as u8,
            self.maneuver.code(),
            self.light_id,
            self.light_state.code(),
            self.light_remaining,
        )
    }
}

/// Records grouped by frame, frames sorted ascending. Within one frame every
/// agent id is unique.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    frames: Vec<(i64, Vec<AgentRecord>)>,
    pub frame_period: f64,
    pub map: Option<MapInfo>,
}

impl Scene {
    pub fn new(frames: Vec<(i64, Vec<AgentRecord>)>) -> Self {
        Scene {
            frames,
            frame_period: 1.0 / FRAMES_PER_SECOND,
            map: None,
        }
    }

    pub fn empty() -> Self {
        Scene::new(Vec::new())
    }

    pub fn frames(&self) -> &[(i64, Vec<AgentRecord>)] {
        &self.frames
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn num_records(&self) -> usize {
        self.frames.iter().map(|(_, rs)| rs.len()).sum()
    }

    /// All records in frame order.
    pub fn records(&self) -> impl Iterator<Item = &AgentRecord> {
        self.frames.iter().flat_map(|(_, rs)| rs.iter())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for (_, records) in &self.frames {
            for r in records {
                out.push_str(&r.to_csv_row());
                out.push('\n');
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut f = fs::File::create(path)?;
        f.write_all(self.to_csv_string().as_bytes())?;
        Ok(())
    }
}

/// Parses a dataset CSV into a scene. Rows must arrive grouped by
/// non-decreasing frame id; duplicate `(frame, agent)` pairs, missing
/// columns, and invariant violations are rejected with their line numbers.
pub fn parse_dataset(path: &Path) -> Result<Scene, DataError> {
    let text = fs::read_to_string(path)?;
    parse_dataset_str(&text)
}

pub fn parse_dataset_str(text: &str) -> Result<Scene, DataError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("").trim_end_matches('\r');
    if header != CSV_HEADER {
        return Err(DataError::Header {
            got: header.to_string(),
        });
    }

    let mut frames: Vec<(i64, Vec<AgentRecord>)> = Vec::new();
    let mut seen: HashSet<(i64, i64)> = HashSet::new();
    let mut prev_frame: Option<i64> = None;

    for (i, raw) in lines.enumerate() {
        let line = i + 2; // 1-based, after the header
        let raw = raw.trim_end_matches('\r');
        if raw.is_empty() {
            continue;
        }
        let record = parse_row(raw, line)?;
        record
            .validate()
            .map_err(|msg| DataError::Row { line, msg })?;

        if let Some(prev) = prev_frame {
            if record.frame_id < prev {
                return Err(DataError::NonMonotoneFrame {
                    line,
                    frame: record.frame_id,
                    prev,
                });
            }
        }
        prev_frame = Some(record.frame_id);

        if !seen.insert((record.frame_id, record.agent_id)) {
            return Err(DataError::DuplicateAgent {
                line,
                frame: record.frame_id,
                agent: record.agent_id,
            });
        }

        match frames.last_mut() {
            Some((fid, rs)) if *fid == record.frame_id => rs.push(record),
            _ => frames.push((record.frame_id, vec![record])),
        }
    }
    Ok(Scene::new(frames))
}

fn parse_row(raw: &str, line: usize) -> Result<AgentRecord, DataError> {
    let cols: Vec<&str> = raw.split(',').collect();
    if cols.len() != 11 {
        return Err(DataError::Row {
            line,
            msg: format!("expected 11 columns, got {}", cols.len()),
        });
    }
    let err = |msg: String| DataError::Row { line, msg };
    let int = |s: &str, name: &str| -> Result<i64, DataError> {
        s.parse()
            .map_err(|_| err(format!("{name}: `{s}` is not an integer")))
    };
    let float = |s: &str, name: &str| -> Result<f64, DataError> {
        s.parse()
            .map_err(|_| err(format!("{name}: `{s}` is not a number")))
    };
    let boolean = |s: &str, name: &str| -> Result<bool, DataError> {
        match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(err(format!("{name}: `{s}` must be 0 or 1"))),
        }
    };

    Ok(AgentRecord {
        frame_id: int(cols[0], "Fid")?,
        agent_id: int(cols[1], "Aid")?,
        x: float(cols[2], "x")?,
        y: float(cols[3], "y")?,
        lane_id: int(cols[4], "Lid")?,
        in_influence_area: boolean(cols[5], "pa")?,
        head_of_queue: boolean(cols[6], "f")?,
        maneuver: Maneuver::from_code(cols[7])
            .ok_or_else(|| err(format!("mb: `{}` must be S, L, or R", cols[7])))?,
        light_id: int(cols[8], "lid")?,
        light_state: LightState::from_code(cols[9])
            .ok_or_else(|| err(format!("ls: `{}` must be R, G, or Y", cols[9])))?,
        light_remaining: float(cols[10], "lt")?,
    })
}

// --- Map sidecar -----------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapPhase {
    pub state: LightState,
    pub dur: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapLight {
    pub id: i64,
    pub x: f64,
    pub y: f64,
    pub cycle: Vec<MapPhase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapLane {
    pub id: i64,
    pub dir: String,
    pub polyline: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapInfluenceArea {
    pub light_id: i64,
    pub polygon: Vec<[f64; 2]>,
}

/// Optional JSON sidecar with light positions and cycles, lane polylines,
/// and influence-area polygons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapInfo {
    pub lights: Vec<MapLight>,
    pub lanes: Vec<MapLane>,
    pub influence_areas: Vec<MapInfluenceArea>,
}

impl MapInfo {
    pub fn load(path: &Path) -> Result<Self, DataError> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Axis-aligned bounding box of the light positions, used as the
    /// intersection core when classifying road vs intersection zones.
    pub fn intersection_box(&self) -> Option<[f64; 4]> {
        if self.lights.is_empty() {
            return None;
        }
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for l in &self.lights {
            x0 = x0.min(l.x);
            y0 = y0.min(l.y);
            x1 = x1.max(l.x);
            y1 = y1.max(l.y);
        }
        Some([x0, y0, x1, y1])
    }
}
