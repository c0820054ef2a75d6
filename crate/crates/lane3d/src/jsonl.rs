//! JSON Lines frame records: one frame per line with camera, lanes and
//! optionally an anchor tensor.
//!
//! Reals are written in scientific notation with 17 significant digits so
//! every `f64` survives a write/read cycle bit for bit.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use lane3d_core::anchor::AnchorSet;
use lane3d_core::{AnchorTensor, CameraModel, EgoPoint, GeometryError, Intrinsics, Lane3D, LaneCategory};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: field `{field}`: {message}")]
    Schema { line: usize, field: String, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A record field that failed validation.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    fn new(field: impl Into<String>, message: impl ToString) -> Self {
        Self { field: field.into(), message: message.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRecord {
    pub height_m: f64,
    pub pitch_deg: f64,
    /// Intrinsic matrix, row-major.
    #[serde(rename = "K")]
    pub k: [f64; 9],
    pub width: u32,
    pub height: u32,
}

impl CameraRecord {
    pub fn from_model(cam: &CameraModel) -> Self {
        let (width, height) = cam.image_size();
        Self {
            height_m: cam.height_m(),
            pitch_deg: cam.pitch_rad().to_degrees(),
            k: cam.intrinsics().to_row_major(),
            width,
            height,
        }
    }

    pub fn to_model(&self) -> Result<CameraModel, GeometryError> {
        self.to_model_with_pitch(self.pitch_deg.to_radians())
    }

    /// Same camera with an exact pitch in radians, for callers that kept it.
    pub fn to_model_with_pitch(&self, pitch_rad: f64) -> Result<CameraModel, GeometryError> {
        let k = Intrinsics::from_row_major(&self.k)?;
        CameraModel::new(self.height_m, pitch_rad, k, (self.width, self.height))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneRecord {
    pub category: LaneCategory,
    pub points: Vec<[f64; 3]>,
    /// 0 or 1 per point.
    pub visibility: Vec<u8>,
    pub prob: f64,
}

impl LaneRecord {
    pub fn from_lane(lane: &Lane3D) -> Self {
        Self {
            category: lane.category(),
            points: lane.points().iter().map(|p| [p.x, p.y, p.z]).collect(),
            visibility: lane.visibility().iter().map(|&v| v as u8).collect(),
            prob: lane.prob(),
        }
    }

    fn to_lane(&self, field: &str) -> Result<Lane3D, FieldError> {
        if self.visibility.len() != self.points.len() {
            let msg = format!("{} entries for {} points", self.visibility.len(), self.points.len());
            return Err(FieldError::new(format!("{field}.visibility"), msg));
        }
        if let Some(i) = self.visibility.iter().position(|&v| v > 1) {
            return Err(FieldError::new(format!("{field}.visibility[{i}]"), "must be 0 or 1"));
        }
        let points = self.points.iter().map(|p| EgoPoint::new(p[0], p[1], p[2])).collect();
        let visibility = self.visibility.iter().map(|&v| v == 1).collect();
        Lane3D::new(self.category, points, visibility, self.prob).map_err(|e| {
            let sub = match e {
                lane3d_core::LaneError::InvalidProb(_) => "prob",
                _ => "points",
            };
            FieldError::new(format!("{field}.{sub}"), e)
        })
    }
}

/// One lane type's anchor attributes as nested `N × K` arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorSetRecord {
    pub x_offsets: Vec<Vec<f64>>,
    pub heights: Vec<Vec<f64>>,
    pub visibility: Vec<Vec<f64>>,
    pub prob: Vec<f64>,
}

impl AnchorSetRecord {
    fn from_set(set: &AnchorSet, k: usize) -> Self {
        let rows = |v: &[f64]| -> Vec<Vec<f64>> { if k == 0 { Vec::new() } else { v.chunks(k).map(<[f64]>::to_vec).collect() } };
        Self {
            x_offsets: rows(&set.x_offsets),
            heights: rows(&set.heights),
            visibility: rows(&set.visibility),
            prob: set.prob.clone(),
        }
    }

    fn shape(&self) -> (usize, usize) {
        (self.prob.len(), self.x_offsets.first().map_or(0, Vec::len))
    }

    fn to_set(&self, field: &str, (n, k): (usize, usize)) -> Result<AnchorSet, FieldError> {
        let flat = |name: &str, rows: &[Vec<f64>]| -> Result<Vec<f64>, FieldError> {
            if rows.len() != n {
                return Err(FieldError::new(format!("{field}.{name}"), format!("{} rows, expected {n}", rows.len())));
            }
            if let Some(i) = rows.iter().position(|r| r.len() != k) {
                let msg = format!("{} entries, expected {k}", rows[i].len());
                return Err(FieldError::new(format!("{field}.{name}[{i}]"), msg));
            }
            Ok(rows.concat())
        };
        Ok(AnchorSet {
            x_offsets: flat("x_offsets", &self.x_offsets)?,
            heights: flat("heights", &self.heights)?,
            visibility: flat("visibility", &self.visibility)?,
            prob: self.prob.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorRecord {
    pub laneline: AnchorSetRecord,
    pub centerline: AnchorSetRecord,
}

impl AnchorRecord {
    pub fn from_tensor(t: &AnchorTensor) -> Self {
        Self {
            laneline: AnchorSetRecord::from_set(t.set(LaneCategory::Laneline), t.num_y()),
            centerline: AnchorSetRecord::from_set(t.set(LaneCategory::Centerline), t.num_y()),
        }
    }

    pub fn to_tensor(&self) -> Result<AnchorTensor, FieldError> {
        let shape = self.laneline.shape();
        let laneline = self.laneline.to_set("anchors.laneline", shape)?;
        let centerline = self.centerline.to_set("anchors.centerline", shape)?;
        AnchorTensor::from_sets(shape.0, shape.1, laneline, centerline).map_err(|e| FieldError::new("anchors", e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub frame_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<CameraRecord>,
    pub lanes: Vec<LaneRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchors: Option<AnchorRecord>,
}

impl FrameRecord {
    pub fn new(frame_id: impl Into<String>, camera: Option<&CameraModel>, lanes: &[Lane3D]) -> Self {
        Self {
            frame_id: frame_id.into(),
            camera: camera.map(CameraRecord::from_model),
            lanes: lanes.iter().map(LaneRecord::from_lane).collect(),
            anchors: None,
        }
    }

    pub fn to_lanes(&self) -> Result<Vec<Lane3D>, FieldError> {
        self.lanes.iter().enumerate().map(|(i, l)| l.to_lane(&format!("lanes[{i}]"))).collect()
    }

    pub fn to_camera(&self) -> Result<Option<CameraModel>, FieldError> {
        self.camera.as_ref().map(|c| c.to_model().map_err(|e| FieldError::new("camera", e))).transpose()
    }

    pub fn to_tensor(&self) -> Result<Option<AnchorTensor>, FieldError> {
        self.anchors.as_ref().map(AnchorRecord::to_tensor).transpose()
    }

    /// Everything the typed accessors would reject.
    pub fn validate(&self) -> Result<(), FieldError> {
        self.to_camera()?;
        self.to_lanes()?;
        self.to_tensor()?;
        Ok(())
    }
}

/// Writes every `f64` with 17 significant digits.
#[derive(Debug, Clone, Copy, Default)]
pub struct PreciseFormatter;

impl serde_json::ser::Formatter for PreciseFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        write!(writer, "{value:.8e}")
    }
}

/// Serializes a value on one line with [`PreciseFormatter`].
pub fn to_precise_line<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, PreciseFormatter);
    value.serialize(&mut ser).expect("records serialize to JSON");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

/// Field path of a deserialization error. Missing and unknown keys are
/// reported at their parent, so the key named in the message is appended.
fn offending_field(path: &str, message: &str) -> String {
    let named = ["missing field `", "unknown field `"]
        .iter()
        .find_map(|prefix| message.split_once(prefix).and_then(|(_, rest)| rest.split_once('`')).map(|(name, _)| name));
    match (path, named) {
        (".", Some(name)) => name.to_string(),
        (p, Some(name)) if !p.ends_with(name) => format!("{p}.{name}"),
        (p, _) => p.to_string(),
    }
}

/// Parses and validates one line (`line` is 1-based, for messages).
pub fn parse_line(text: &str, line: usize) -> Result<FrameRecord, JsonlError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let record: FrameRecord = match serde_path_to_error::deserialize(&mut de) {
        Ok(r) => r,
        Err(e) => {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let message = inner.to_string();
            return Err(match inner.classify() {
                serde_json::error::Category::Data => JsonlError::Schema { line, field: offending_field(&path, &message), message },
                _ => JsonlError::Parse { line, message: inner.to_string() },
            });
        }
    };
    de.end().map_err(|e| JsonlError::Parse { line, message: e.to_string() })?;
    record.validate().map_err(|e| JsonlError::Schema { line, field: e.field, message: e.message })?;
    Ok(record)
}

/// Reads all records; blank lines are skipped.
pub fn read_jsonl_from<R: BufRead>(reader: R) -> Result<Vec<FrameRecord>, JsonlError> {
    let mut out = Vec::new();
    for (i, text) in reader.lines().enumerate() {
        let text = text.map_err(|e| match e.kind() {
            io::ErrorKind::InvalidData => JsonlError::Parse { line: i + 1, message: "invalid UTF-8".into() },
            _ => JsonlError::Io(e),
        })?;
        if text.trim().is_empty() {
            continue;
        }
        out.push(parse_line(&text, i + 1)?);
    }
    Ok(out)
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<FrameRecord>, JsonlError> {
    read_jsonl_from(BufReader::new(File::open(path)?))
}

pub fn write_jsonl_to<W: Write>(mut writer: W, frames: &[FrameRecord]) -> io::Result<()> {
    for f in frames {
        writer.write_all(to_precise_line(f).as_bytes())?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn write_jsonl(path: impl AsRef<Path>, frames: &[FrameRecord]) -> io::Result<()> {
    write_jsonl_to(BufWriter::new(File::create(path)?), frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lane() -> Lane3D {
        let pts = vec![EgoPoint::new(0.1, 3.0, -0.2), EgoPoint::new(1.0 / 3.0, 7.5, 0.0)];
        Lane3D::new(LaneCategory::Centerline, pts, vec![true, false], 0.625).unwrap()
    }

    #[test]
    fn floats_carry_17_digits() {
        let line = to_precise_line(&[0.1f64, 1.0 / 3.0]);
        assert_eq!(line, "[1.0000000000000001e-1,3.3333333333333331e-1]");
    }

    #[test]
    fn record_round_trip() {
        let cam = CameraModel::new(1.55, 0.05, Intrinsics { fx: 2015.0, fy: 2015.0, cx: 960.0, cy: 540.0 }, (1920, 1080)).unwrap();
        let rec = FrameRecord::new("f0", Some(&cam), &[lane()]);
        let back = parse_line(&to_precise_line(&rec), 1).unwrap();
        assert_eq!(back, rec);
        assert_eq!(back.to_lanes().unwrap(), vec![lane()]);
    }

    #[test]
    fn tensor_round_trip() {
        let mut t = AnchorTensor::zeros(3, 2);
        t.set_mut(LaneCategory::Laneline).x_offsets[3] = -0.25;
        t.set_mut(LaneCategory::Centerline).prob[1] = 1.0;
        let rec = AnchorRecord::from_tensor(&t);
        assert_eq!(rec.laneline.x_offsets, vec![vec![0.0, 0.0], vec![0.0, -0.25], vec![0.0, 0.0]]);
        assert_eq!(rec.to_tensor().unwrap(), t);
    }

    #[test]
    fn ragged_anchor_rows_name_the_row() {
        let mut rec = AnchorRecord::from_tensor(&AnchorTensor::zeros(2, 3));
        rec.centerline.heights[1].pop();
        assert_eq!(rec.to_tensor().unwrap_err().field, "anchors.centerline.heights[1]");
    }

    #[test]
    fn errors_are_classified() {
        assert!(matches!(parse_line(r#"{"frame_id": "a", "lanes": ["#, 4), Err(JsonlError::Parse { line: 4, .. })));
        assert!(matches!(parse_line(r#"{"frame_id": "a", "lanes": []} x"#, 1), Err(JsonlError::Parse { .. })));
        match parse_line(r#"{"frame_id": "a", "lanes": [{"category": "laneline", "points": [], "visibility": []}]}"#, 1) {
            Err(JsonlError::Schema { field, .. }) => assert_eq!(field, "lanes[0].prob"),
            other => panic!("{other:?}"),
        }
        match parse_line(r#"{"frame_id": 3, "lanes": []}"#, 2) {
            Err(JsonlError::Schema { line: 2, field, .. }) => assert_eq!(field, "frame_id"),
            other => panic!("{other:?}"),
        }
        match parse_line(r#"{"frame_id": "a", "lanes": [{"category": "laneline", "points": [[0,1,0],[0,2,0]], "visibility": [1], "prob": 1}]}"#, 1) {
            Err(JsonlError::Schema { field, .. }) => assert_eq!(field, "lanes[0].visibility"),
            other => panic!("{other:?}"),
        }
    }
}
