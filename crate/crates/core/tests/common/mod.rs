#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use stlcbf::scenario::ScenarioConfig;
use stlcbf::stl::{Formula, Interval, PredicateDef, PredicateTable, Shape};

pub const REACH_AVOID_DESIRED: &str = "F[5,5] mu3 & F[10,10] mu3 & F[5,6] G[1,2] mu2 & F[12,13] (G[0,2] mu3 & F[1,2] mu1) & G[0,24] not_mu4 & F[0,24] mu5";

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

pub fn reach_avoid() -> ScenarioConfig {
    ScenarioConfig::load(&scenario_path("paper_sec4.json")).expect("shipped scenario loads")
}

/// Half-plane predicates `x_i - c >= 0` on a planar signal.
pub fn planar_table() -> PredicateTable {
    let mut t = PredicateTable::new();
    let cuts = [(0, -0.3), (0, 0.2), (1, -0.1), (1, 0.4)];
    for (k, (axis, c)) in cuts.into_iter().enumerate() {
        let mut a = vec![0.0, 0.0];
        a[axis] = 1.0;
        t.insert(PredicateDef::new(format!("p{k}"), Shape::Affine { a, b: -c }).expect("valid predicate")).expect("unique name");
    }
    t
}

pub const PLANAR_NAMES: [&str; 4] = ["p0", "p1", "p2", "p3"];

/// Random interval with integer endpoints in `[0, max]`.
pub fn int_interval<R: Rng>(rng: &mut R, max: u32) -> Interval {
    let a = rng.gen_range(0..=max);
    let b = rng.gen_range(a..=max);
    Interval::of(a as f64, b as f64)
}

/// Random formula of temporal depth at most `depth` with integer interval
/// endpoints no larger than `max_end`.
pub fn random_formula<R: Rng>(rng: &mut R, depth: usize, max_end: u32) -> Formula {
    let leaf = |rng: &mut R| {
        let name = PLANAR_NAMES[rng.gen_range(0..PLANAR_NAMES.len())];
        match rng.gen_range(0..10) {
            0 => Formula::True,
            1..=3 => Formula::not_pred(name),
            _ => Formula::pred(name),
        }
    };
    if depth == 0 {
        return leaf(rng);
    }
    match rng.gen_range(0..6) {
        0 => leaf(rng),
        1 => {
            let n = rng.gen_range(2..=3);
            Formula::And((0..n).map(|_| random_formula(rng, depth - 1, max_end)).collect())
        }
        2 => Formula::always(int_interval(rng, max_end), random_formula(rng, depth - 1, max_end)),
        3 => Formula::eventually(int_interval(rng, max_end), random_formula(rng, depth - 1, max_end)),
        4 => Formula::until(
            int_interval(rng, max_end),
            random_formula(rng, depth - 1, max_end),
            random_formula(rng, depth - 1, max_end),
        ),
        _ => {
            let i = int_interval(rng, max_end);
            Formula::always(i, Formula::eventually(int_interval(rng, max_end), leaf(rng)))
        }
    }
}

pub mod strategy {
    use proptest::prelude::*;
    use stlcbf::stl::{Formula, Interval};

    use super::PLANAR_NAMES;

    pub fn interval(max: u32) -> impl Strategy<Value = Interval> {
        (0..=max, 0..=max).prop_map(|(a, b)| Interval::of(a.min(b) as f64, a.max(b) as f64))
    }

    pub fn leaf() -> impl Strategy<Value = Formula> {
        let name = prop::sample::select(PLANAR_NAMES.to_vec());
        prop_oneof![
            1 => Just(Formula::True),
            4 => name.clone().prop_map(Formula::pred),
            2 => name.prop_map(Formula::not_pred),
        ]
    }

    /// Formulas over the planar predicates with integer intervals.
    pub fn formula(depth: u32, max_end: u32) -> impl Strategy<Value = Formula> {
        leaf().prop_recursive(depth, 24, 3, move |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 2..=3).prop_map(Formula::And),
                (interval(max_end), inner.clone()).prop_map(|(i, f)| Formula::always(i, f)),
                (interval(max_end), inner.clone()).prop_map(|(i, f)| Formula::eventually(i, f)),
                (interval(max_end), inner.clone(), inner).prop_map(|(i, l, r)| Formula::until(i, l, r)),
            ]
        })
    }

    /// Planar signal on `[0, end]` with `n` random sample times.
    pub fn signal(end: f64, max_samples: usize) -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>)> {
        (2..=max_samples)
            .prop_flat_map(move |n| {
                (
                    prop::collection::vec(0.0..end, n - 2),
                    prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 2), n),
                )
            })
            .prop_map(move |(mut times, states)| {
                times.extend([0.0, end]);
                times.sort_by(f64::total_cmp);
                times.dedup();
                let states = states.into_iter().take(times.len()).collect();
                (times, states)
            })
    }
}
