mod common;

use proptest::prelude::*;
use stlcbf::stl::parse_formula;
use stlcbf::transform::{check_desired_form, to_desired_form, RuleId, TransformConfig};

use common::{planar_table, strategy};

proptest! {
    #[test]
    fn output_is_in_desired_form(f in strategy::formula(4, 6)) {
        let d = to_desired_form(&f, &planar_table(), &TransformConfig::default()).unwrap();
        prop_assert!(check_desired_form(&d.formula).is_empty(), "{}", d.formula);
    }

    #[test]
    fn transform_is_idempotent(f in strategy::formula(4, 6)) {
        let cfg = TransformConfig::default();
        let d = to_desired_form(&f, &planar_table(), &cfg).unwrap();
        let again = to_desired_form(&d.formula, &d.predicates, &cfg).unwrap();
        prop_assert_eq!(&again.formula, &d.formula);
        prop_assert!(again.trace.entries.is_empty());
        prop_assert_eq!(again.predicates, d.predicates);
    }

    #[test]
    fn trace_replays_to_the_output(f in strategy::formula(4, 6)) {
        let d = to_desired_form(&f, &planar_table(), &TransformConfig::default()).unwrap();
        prop_assert_eq!(d.trace.replay(&f).unwrap(), d.formula);
    }

    #[test]
    fn output_has_no_until(f in strategy::formula(4, 6)) {
        let d = to_desired_form(&f, &planar_table(), &TransformConfig::default()).unwrap();
        prop_assert!(!d.formula.to_string().contains('U'));
    }
}

#[test]
fn reach_avoid_formula_reaches_the_expected_form() {
    let cfg = common::reach_avoid();
    let f = parse_formula(&cfg.formula, &cfg.predicates).unwrap();
    let d = to_desired_form(&f, &cfg.predicates, &cfg.transform).unwrap();
    assert_eq!(d.formula.to_string(), common::REACH_AVOID_DESIRED);
    let rules: Vec<RuleId> = d.trace.entries.iter().map(|e| e.rule).collect();
    let expected = [RuleId::Until, RuleId::FoldPredicates, RuleId::SplitAlwaysEventually, RuleId::FlattenAnd];
    assert_eq!(rules, expected);
    assert!(d.predicates.contains("not_mu4"));
}
