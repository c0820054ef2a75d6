use std::io::Write;

use lane3d::jsonl::{read_jsonl, read_jsonl_from, write_jsonl, AnchorRecord, FrameRecord, JsonlError};
use lane3d::raster_file::{read_raster, write_raster};
use lane3d_core::anchor::encode;
use lane3d_core::fixtures::{generate_scene, CameraRanges, RoadSpec, VehicleSpec};
use lane3d_core::{AnchorConfig, EgoPoint, Intrinsics, Lane3D, LaneCategory, Raster};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_ranges() -> CameraRanges {
    CameraRanges { intrinsics: Intrinsics { fx: 400.0, fy: 400.0, cx: 160.0, cy: 120.0 }, image_size: (320, 240), ..CameraRanges::default() }
}

fn random_lane(rng: &mut ChaCha8Rng) -> Lane3D {
    let n = rng.random_range(2..40);
    let mut y = rng.random_range(0.5..5.0);
    let mut pts = Vec::with_capacity(n);
    let mut vis = Vec::with_capacity(n);
    for _ in 0..n {
        y += rng.random_range(1e-3..4.0);
        pts.push(EgoPoint::new(rng.random_range(-20.0..20.0), y, rng.random_range(-2.0..1.0)));
        vis.push(rng.random_bool(0.7));
    }
    let cat = if rng.random_bool(0.5) { LaneCategory::Laneline } else { LaneCategory::Centerline };
    Lane3D::new(cat, pts, vis, rng.random_range(0.0..=1.0)).unwrap()
}

fn bits(lanes: &[Lane3D]) -> Vec<u64> {
    lanes.iter().flat_map(|l| l.points().iter().flat_map(|p| [p.x, p.y, p.z]).chain([l.prob()])).map(f64::to_bits).collect()
}

#[test]
fn random_frames_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("frames.jsonl");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let scene = generate_scene(&RoadSpec::flat_straight(), 3, &small_ranges()).unwrap();
    let lanes: Vec<Vec<Lane3D>> = (0..50).map(|_| (0..rng.random_range(0..8)).map(|_| random_lane(&mut rng)).collect()).collect();
    let frames: Vec<FrameRecord> =
        lanes.iter().enumerate().map(|(i, l)| FrameRecord::new(format!("f{i}"), (i % 2 == 0).then_some(&scene.camera), l)).collect();
    write_jsonl(&path, &frames).unwrap();
    let back = read_jsonl(&path).unwrap();
    assert_eq!(back, frames);
    for (rec, orig) in back.iter().zip(&lanes) {
        assert_eq!(bits(&rec.to_lanes().unwrap()), bits(orig));
    }
}

#[test]
fn generated_fixture_and_its_anchors_round_trip() {
    let spec = RoadSpec { vehicles: vec![VehicleSpec { x: 0.0, y: 25.0, size: (1.8, 4.5, 1.5) }], ..RoadSpec::flat_straight() };
    let scene = generate_scene(&spec, 11, &small_ranges()).unwrap();
    let mut rec = FrameRecord::new("scene", Some(&scene.camera), &scene.lanes_gt);
    let enc = encode(&scene.lanes_gt, &AnchorConfig::default(), scene.camera.height_m()).unwrap();
    rec.anchors = Some(AnchorRecord::from_tensor(&enc.tensor));

    let mut buf = Vec::new();
    lane3d::jsonl::write_jsonl_to(&mut buf, std::slice::from_ref(&rec)).unwrap();
    let back = read_jsonl_from(buf.as_slice()).unwrap();
    assert_eq!(back, vec![rec]);
    assert_eq!(back[0].to_lanes().unwrap(), scene.lanes_gt);
    assert_eq!(back[0].to_tensor().unwrap(), Some(enc.tensor));
    let cam = back[0].to_camera().unwrap().unwrap();
    assert_eq!((cam.height_m(), cam.intrinsics(), cam.image_size()), (scene.camera.height_m(), scene.camera.intrinsics(), (320, 240)));
    assert!((cam.pitch_rad() - scene.camera.pitch_rad()).abs() < 1e-15);

    let dir = tempfile::tempdir().unwrap();
    write_raster(dir.path().join("d.l3dr"), &scene.depth_map).unwrap();
    write_raster(dir.path().join("s.l3dr"), &scene.semantic_map).unwrap();
    let depth: Raster<f32> = read_raster(dir.path().join("d.l3dr")).unwrap();
    let semantic: Raster<u8> = read_raster(dir.path().join("s.l3dr")).unwrap();
    assert!(depth.data().iter().zip(scene.depth_map.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(semantic, scene.semantic_map);
    let len = std::fs::metadata(dir.path().join("d.l3dr")).unwrap().len();
    assert_eq!(len, 13 + 320 * 240 * 4);
}

const GOOD: &str = r#"{"frame_id": "a", "lanes": [{"category": "laneline", "points": [[0, 1, 0], [0, 2, 0]], "visibility": [1, 1], "prob": 1}]}"#;

fn read_str(text: &str) -> Result<Vec<FrameRecord>, JsonlError> {
    read_jsonl_from(text.as_bytes())
}

#[test]
fn truncated_line_reports_its_number() {
    let text = format!("{GOOD}\n{GOOD}\n{}\n", &GOOD[..GOOD.len() - 20]);
    match read_str(&text) {
        Err(JsonlError::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    // a file cut mid-line without a trailing newline is the same error
    assert!(matches!(read_str(&format!("{GOOD}\n{}", &GOOD[..30])), Err(JsonlError::Parse { line: 2, .. })));
}

#[test]
fn schema_errors_name_the_field() {
    let cases = [
        (GOOD.replace("[1, 1]", "[1]"), "lanes[0].visibility"),
        (GOOD.replace("[1, 1]", "[1, 2]"), "lanes[0].visibility[1]"),
        (GOOD.replace(r#""prob": 1"#, r#""prob": 1.5"#), "lanes[0].prob"),
        (GOOD.replace("[0, 2, 0]", "[0, 0.5, 0]"), "lanes[0].points"),
        (GOOD.replace("laneline", "curb"), "lanes[0].category"),
        (GOOD.replace(r#""frame_id": "a", "#, ""), "frame_id"),
        (GOOD.replace(r#""frame_id": "a""#, r#""frame_id": "a", "extra": 1"#), "extra"),
        (
            GOOD.replace(r#""lanes""#, r#""camera": {"height_m": 1.5, "pitch_deg": 1, "K": [1, 0, 0], "width": 2, "height": 2}, "lanes""#),
            "camera.K",
        ),
    ];
    for (text, field) in cases {
        match read_str(&format!("{GOOD}\n\n{text}\n")) {
            Err(JsonlError::Schema { line: 3, field: f, .. }) => assert_eq!(f, field),
            other => panic!("{field}: {other:?}"),
        }
    }
}

#[test]
fn writer_emits_one_line_per_frame() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.jsonl");
    let frames = read_str(&format!("{GOOD}\n{}\n", GOOD.replace("\"a\"", "\"b\""))).unwrap();
    write_jsonl(&path, &frames).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.contains("1.0000000000000000e0"));
    let mut f = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
    writeln!(f, "   ").unwrap();
    assert_eq!(read_jsonl(&path).unwrap(), frames);
}
