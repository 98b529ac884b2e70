mod common;

use proptest::prelude::*;
use stlcbf::monitor::{monitor, SampledSignal};
use stlcbf::plant::Plant;
use stlcbf::scenario::{prepare, ScenarioConfig};
use stlcbf::sim::{rk4_step, run_pipeline, run_scenario, TrajectoryLog};

fn csv_bytes(log: &TrajectoryLog) -> Vec<u8> {
    let mut buf = Vec::new();
    log.write_csv(&mut buf).unwrap();
    buf
}

fn final_norm(log: &TrajectoryLog) -> f64 {
    log.rows.last().unwrap().x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

proptest! {
    #[test]
    fn unforced_plant_state_is_constant(
        x in prop::collection::vec(-5.0..5.0f64, 3),
        dt in 1e-4..0.5f64,
        steps in 1usize..50,
    ) {
        let plant = Plant::Unicycle { l: 0.036 };
        let mut y = x.clone();
        for k in 0..steps {
            y = rk4_step(|_, s| plant.deriv(s, &[0.0, 0.0], &[0.0, 0.0]).unwrap().as_slice().to_vec(), k as f64 * dt, &y, dt);
        }
        prop_assert_eq!(y, x);
    }
}

#[test]
fn runs_are_bit_identical() {
    let cfg = common::reach_avoid();
    assert_eq!(csv_bytes(&run_scenario(&cfg).unwrap()), csv_bytes(&run_scenario(&cfg).unwrap()));
}

#[test]
fn effective_config_round_trip_reproduces_the_log() {
    let cfg = common::reach_avoid();
    let again = ScenarioConfig::from_json(&cfg.effective().to_json()).unwrap();
    assert_eq!(csv_bytes(&run_scenario(&cfg).unwrap()), csv_bytes(&run_scenario(&again).unwrap()));
}

#[test]
fn switching_times_are_log_timestamps() {
    let cfg = common::reach_avoid();
    let p = prepare(&cfg).unwrap();
    let log = run_pipeline(&cfg, &p).unwrap();
    for s in &p.timed.switching {
        assert_eq!(log.rows.iter().filter(|r| r.t == s.time).count(), 1, "t = {}", s.time);
    }
}

#[test]
fn halving_dt_changes_the_final_state_little() {
    let mut cfg = common::reach_avoid();
    cfg.sim.dt = 0.01;
    let coarse = final_norm(&run_scenario(&cfg).unwrap());
    cfg.sim.dt = 0.005;
    let fine = final_norm(&run_scenario(&cfg).unwrap());
    assert!((coarse - fine).abs() < 1e-3, "{coarse} vs {fine}");
}

#[test]
fn without_disturbance_the_estimate_is_exact() {
    let cfg = ScenarioConfig::load(&common::scenario_path("paper_sec4_no_disturbance.json")).unwrap();
    let p = prepare(&cfg).unwrap();
    let log = run_pipeline(&cfg, &p).unwrap();
    let worst = log.rows.iter().flat_map(|r| r.x.iter().zip(&r.xhat).map(|(a, b)| (a - b).abs())).fold(0.0, f64::max);
    assert_eq!(worst, 0.0);
    let times = log.rows.iter().map(|r| r.t).collect();
    let states = log.rows.iter().map(|r| r.x.clone()).collect();
    assert!(monitor(&p.original, &cfg.predicates, &SampledSignal::new(times, states).unwrap()).unwrap().satisfied);
    assert!(log.min_hhat() >= 0.0);
}

#[test]
fn tight_input_bounds_violate_the_specification() {
    let cfg = ScenarioConfig::load(&common::scenario_path("tight_bounds.json")).unwrap();
    let p = prepare(&cfg).unwrap();
    let log = run_pipeline(&cfg, &p).unwrap();
    let times = log.rows.iter().map(|r| r.t).collect();
    let states = log.rows.iter().map(|r| r.x.clone()).collect();
    let v = monitor(&p.original, &cfg.predicates, &SampledSignal::new(times, states).unwrap()).unwrap();
    assert!(!v.satisfied && v.robustness < 0.0);
}
