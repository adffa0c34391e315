use std::collections::BTreeMap;
use std::path::PathBuf;

use proptest::prelude::*;
use sha2::{Digest, Sha256};
use xdrive_core::render::*;
use xdrive_core::sim::*;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn frame_hash(f: &Frame) -> String {
    let mut h = Sha256::new();
    h.update(format!("{}x{}x{}", f.width, f.height, f.channels));
    h.update(&f.data);
    hex::encode(h.finalize())
}

fn approach(env: &Env, tag: SegmentTag, offset: f64) -> EgoState {
    let leg = env.route.legs.iter().find(|l| l.tag == tag).unwrap();
    let s = leg.s_start + offset;
    env.state_at(env.route.pose_at(s), 0.0, s, 0.0)
}

#[test]
fn uniform_road_scene() {
    let spec = TrackSpec::parse(
        r#"
        name = "wide"
        lane_width = 200.0
        [[nodes]]
        id = "start"
        x = 0.0
        y = 0.0
        heading = 0.3
        [[segments]]
        id = "s"
        from = "start"
        to = "goal"
        kind = "straight"
        length = 500.0
        "#,
    )
    .unwrap();
    let track = spec.build().unwrap();
    let route = plan_route(&track, "start", "goal", 15).unwrap();
    let env = Env::new(track.clone().into(), route.into(), EnvConfig::default());
    // 50 m left of the centerline: no markings anywhere in view
    let base = env.route.pose_at(200.0);
    let (c, s) = base.tangent();
    let pose = Pose::new(base.x - 50.0 * s, base.y + 50.0 * c, base.yaw);
    let state = env.state_at(pose, 0.0, 200.0, 0.0);
    for cfg in [RenderConfig::desk(), RenderConfig::paper_scale()] {
        let f = render_frame(&track, &state, &cfg).unwrap();
        let road = cfg.palette.road;
        let want: Vec<u8> = if cfg.channels == 1 { vec![Palette::gray(road)] } else { road.to_vec() };
        for px in f.data.chunks(cfg.channels) {
            assert_eq!(px, &want[..]);
        }
    }
}

#[test]
fn same_pose_same_pixels() {
    let env = Env::builtin("track-b", 15, EnvConfig::default()).unwrap();
    let st = approach(&env, SegmentTag::ArcRight, 3.0);
    let a = render_frame(&env.track, &st, &RenderConfig::desk()).unwrap();
    let b = render_frame(&env.track, &st, &RenderConfig::desk()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn junction_shows_both_arms() {
    let env = Env::builtin("track-a", 15, EnvConfig::default()).unwrap();
    let cfg = RenderConfig::desk();
    let road = Palette::gray(cfg.palette.road);
    let marking = Palette::gray(cfg.palette.marking);
    for tag in [SegmentTag::TJunctionLeft, SegmentTag::TJunctionRight] {
        let st = approach(&env, tag, -8.0);
        let f = render_frame(&env.track, &st, &cfg).unwrap();
        // sample 10 m ahead of the junction entry, 14 m to each side: the arm ends
        let on_road = |left: f64| {
            let col = (cfg.width as f64 / 2.0 - left / cfg.meters_per_pixel) as usize;
            let row = (cfg.height as f64 * 0.8 - (8.0 + 14.0) / cfg.meters_per_pixel) as usize;
            let v = f.data[row * cfg.width + col];
            v == road || v == marking
        };
        assert!(on_road(14.0) && on_road(-14.0), "{tag:?}");
    }
}

#[test]
fn golden_frames() {
    let env = Env::builtin("track-a", 15, EnvConfig::default()).unwrap();
    let cases = [
        ("t-left-approach", SegmentTag::TJunctionLeft, -8.0),
        ("t-right-approach", SegmentTag::TJunctionRight, -8.0),
        ("bend-left", SegmentTag::ArcLeft, 5.0),
        ("bend-right", SegmentTag::ArcRight, 5.0),
        ("straight", SegmentTag::Straight, 10.0),
    ];
    let mut got = BTreeMap::new();
    for (name, tag, off) in cases {
        let st = approach(&env, tag, off);
        for (profile, cfg) in [("desk", RenderConfig::desk()), ("paper", RenderConfig::paper_scale())] {
            let f = render_frame(&env.track, &st, &cfg).unwrap();
            got.insert(format!("{name}/{profile}"), frame_hash(&f));
        }
    }
    let path = fixtures().join("golden_frames.txt");
    if std::env::var_os("XDRIVE_BLESS").is_some() {
        let text: String = got.iter().map(|(k, v)| format!("{k} {v}\n")).collect();
        std::fs::write(&path, text).unwrap();
    }
    let text = std::fs::read_to_string(&path).unwrap();
    let want: BTreeMap<String, String> = text
        .lines()
        .filter_map(|l| l.split_once(' '))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    assert_eq!(got, want);
}

#[test]
fn forward_motion_scrolls_the_image() {
    let env = Env::builtin("straight", 15, EnvConfig::default()).unwrap();
    let cfg = RenderConfig::desk();
    let shift_px = 7;
    let s0 = 40.0;
    let s1 = s0 + shift_px as f64 * cfg.meters_per_pixel;
    let a = render_frame(&env.track, &env.state_at(env.route.pose_at(s0), 0.0, s0, 0.0), &cfg).unwrap();
    let b = render_frame(&env.track, &env.state_at(env.route.pose_at(s1), 0.0, s1, 0.0), &cfg).unwrap();
    // content at row r in `a` shows up at row r + shift in `b`
    let mismatch = |k: usize| {
        (0..cfg.height - k)
            .flat_map(|r| (0..cfg.width).map(move |c| (r, c)))
            .filter(|&(r, c)| a.data[r * cfg.width + c] != b.data[(r + k) * cfg.width + c])
            .count()
    };
    let best = (0..15).min_by_key(|&k| mismatch(k)).unwrap();
    assert!(best.abs_diff(shift_px) <= 1, "best shift {best}");
    assert!(mismatch(0) > 0, "scene must not be translation invariant");
}

#[test]
fn tiny_frame_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("z.png");
    let f = Frame::new(2, 2, 1).unwrap();
    write_frame(&f, &p).unwrap();
    assert_eq!(read_frame(&p).unwrap(), f);
}

#[test]
fn truncated_file_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.png");
    let env = Env::builtin("track-a", 15, EnvConfig::default()).unwrap();
    let f = render_frame(&env.track, &env.reset(), &RenderConfig::desk()).unwrap();
    write_frame(&f, &p).unwrap();
    let bytes = std::fs::read(&p).unwrap();
    for cut in [0, 8, 30, bytes.len() / 2, bytes.len() - 13] {
        std::fs::write(&p, &bytes[..cut]).unwrap();
        assert!(matches!(read_frame(&p), Err(RenderError::Format(_))), "cut at {cut}");
    }
    assert!(matches!(read_frame(&dir.path().join("missing.png")), Err(RenderError::Io(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn random_frames_round_trip(data in proptest::collection::vec(any::<u8>(), 64 * 64 * 3),
                                rgb in any::<bool>(), t in 0.0..1e4f64) {
        let channels = if rgb { 3 } else { 1 };
        let mut f = Frame::from_levels(64, 64, channels, data[..64 * 64 * channels].to_vec()).unwrap();
        f.meta = FrameMeta { frame_id: "f-1".into(), sim_time: t, action_category: Some(ActionCategory::TurnLeftT) };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.png");
        write_frame(&f, &p).unwrap();
        prop_assert_eq!(read_frame(&p).unwrap(), f);
    }
}
