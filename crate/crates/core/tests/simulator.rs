use std::path::Path;

use composite_cbf::controller::Mission;
use composite_cbf::obstacles::{Bounds, SceneKind, SceneSpec};
use composite_cbf::simulator::{dead_end_check, read_trace, run, trace_csv, write_trace, Scenario};
use composite_cbf::Vec3;

fn scenarios_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios"))
}

#[test]
fn shipped_scenarios_match_builtins() {
    let corridor = Scenario::load(scenarios_dir().join("corridor.json")).unwrap();
    assert_eq!(corridor, Scenario::corridor());
    let forest = Scenario::load(scenarios_dir().join("forest.json")).unwrap();
    assert_eq!(forest, Scenario::forest());
    Scenario::load(scenarios_dir().join("hover.json")).unwrap();
}

#[test]
fn hover_without_obstacles_stays_put() {
    let sc = Scenario::load(scenarios_dir().join("hover.json")).unwrap();
    let trace = run(&sc).unwrap().into_result().unwrap();
    let drift = (trace.last().unwrap().x - Vec3::from(sc.initial.position)).norm();
    assert!(drift < 0.01, "drift {drift}");
    assert_eq!(trace.iter().map(|r| r.qp_cost).sum::<f64>(), 0.0);
}

#[test]
fn obstacle_free_flight_leaves_filter_idle() {
    let sc = Scenario {
        scene: SceneSpec {
            generator: SceneKind::RandomBox,
            seed: 0,
            count: 0,
            bounds: Bounds::new([0.0; 3], [1.0; 3]),
            dead_end: false,
            keepout: None,
        },
        duration: 10.0,
        ..Scenario::corridor()
    };
    let trace = run(&sc).unwrap().into_result().unwrap();
    assert_eq!(trace.iter().map(|r| r.qp_cost).sum::<f64>(), 0.0);
    assert!(trace.last().unwrap().v.x > 0.99);
}

#[test]
fn open_corridor_is_not_a_dead_end() {
    let mut sc = Scenario::corridor();
    sc.scene.dead_end = false;
    sc.duration = 25.0;
    let trace = run(&sc).unwrap().into_result().unwrap();
    assert!(!dead_end_check(&trace, &sc.mission).unwrap());
    assert!(trace.iter().all(|r| r.min_nu0 >= 0.0));
}

#[test]
fn hover_mission_is_outside_the_dead_end_check() {
    let sc = Scenario::load(scenarios_dir().join("hover.json")).unwrap();
    let trace = run(&sc).unwrap().trace;
    assert!(dead_end_check(&trace, &Mission::Hover).is_err());
}

#[test]
fn full_trace_file_has_one_line_per_cycle() {
    let sc = Scenario::corridor();
    let trace = run(&sc).unwrap().into_result().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    write_trace(&trace, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 6001);
    assert!(text.starts_with("t,x,y,z,vx,vy,vz,qw,qx,qy,qz,T,"));
    let back = read_trace(&path).unwrap();
    assert_eq!(trace_csv(&back), text);
}

#[test]
fn unwritable_trace_path_names_the_path() {
    let err = write_trace(&[], "/nonexistent-dir/trace.csv").unwrap_err();
    assert!(err.to_string().contains("/nonexistent-dir/trace.csv"));
}

#[test]
fn adversarial_noise_stress_stays_safe() {
    let mut sc = Scenario::forest();
    sc.duration = 20.0;
    sc.velocity_noise = 0.3;
    sc.seed = 5;
    let trace = run(&sc).unwrap().into_result().unwrap();
    assert!(trace.iter().all(|r| r.min_nu0 >= 0.0));
}
