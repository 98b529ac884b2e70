mod common;

use proptest::prelude::*;
use stlcbf::cbf::{eval_cbf, CbfSpec, NodeParams};
use stlcbf::scenario::prepare;
use stlcbf::tree::NodeKind;

fn spec() -> CbfSpec {
    prepare(&common::reach_avoid()).unwrap().spec
}

fn position() -> impl Strategy<Value = Vec<f64>> {
    (-2.5..3.5f64, -2.5..3.0f64, -3.0..3.0f64).prop_map(|(x, y, th)| vec![x, y, th])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn temporal_term_vanishes_at_terminal_time(x in position()) {
        let spec = spec();
        for (k, n) in spec.timed.tree.nodes().iter().enumerate() {
            let NodeKind::Temporal { .. } = n.kind else { continue };
            let t = spec.timed.timings[k].terminal - 1e-9;
            if t < 0.0 {
                continue;
            }
            let parent = spec.eval_node(k, &x, t).unwrap();
            let child = spec.eval_node(n.children[0], &x, t).unwrap();
            if let (Some(p), Some(c)) = (parent, child) {
                prop_assert!((p.0 - c.0).abs() <= 1e-8, "node {}: {} vs {}", k, p.0, c.0);
            }
        }
    }

    #[test]
    fn conjunctions_under_approximate_their_children(x in position(), t in 0.0..24.0f64) {
        let spec = spec();
        for (k, n) in spec.timed.tree.nodes().iter().enumerate() {
            let NodeParams::Conjunction { .. } = spec.params[k] else { continue };
            let Some((value, _, _)) = spec.eval_node(k, &x, t).unwrap() else { continue };
            for &c in &n.children {
                if let Some((cv, _, _)) = spec.eval_node(c, &x, t).unwrap() {
                    prop_assert!(value <= cv);
                }
            }
        }
    }

    #[test]
    fn pruning_is_monotone_in_time(x in position(), mut ts in prop::collection::vec(0.0..26.0f64, 2..12)) {
        let spec = spec();
        ts.sort_by(f64::total_cmp);
        let mut prev: Option<Vec<bool>> = None;
        for t in ts {
            let active = eval_cbf(&spec, &x, t).unwrap().active;
            if let Some(p) = &prev {
                for (was, is) in p.iter().zip(&active) {
                    prop_assert!(*was || !*is, "a pruned node came back at t = {}", t);
                }
            }
            prev = Some(active);
        }
    }
}

#[test]
fn expires_at_the_horizon() {
    let spec = spec();
    let v = eval_cbf(&spec, &[0.0, 0.0, 0.0], 24.0).unwrap();
    assert!(v.expired && v.value == f64::INFINITY);
    assert!(!eval_cbf(&spec, &[0.0, 0.0, 0.0], 23.999).unwrap().expired);
}

#[test]
fn leaves_are_pruned_at_release() {
    let spec = spec();
    let before = eval_cbf(&spec, &[1.0, 0.0, 0.0], 4.999).unwrap();
    let after = eval_cbf(&spec, &[1.0, 0.0, 0.0], 5.0).unwrap();
    assert!(before.active[1] && !after.active[1]);
    assert!(after.active[2]);
}
