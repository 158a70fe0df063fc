use evgrid::milp::{branch_and_bound, write_lp, BnbOptions, LinearConstraint, MilpModel, Sense, SolveStatus, VarKind};
use proptest::prelude::*;

fn knapsack(values: &[f64], weights: &[f64], cap: f64) -> MilpModel {
    let mut m = MilpModel::new();
    let ids: Vec<_> = values
        .iter()
        .enumerate()
        .map(|(k, &v)| m.add_var(format!("z{k}"), 0.0, 1.0, VarKind::Binary, -v).unwrap())
        .collect();
    let terms = ids.iter().zip(weights).map(|(&id, &w)| (id, w)).collect();
    m.add_constraint(LinearConstraint::new("cap", "cap", terms, Sense::Le, cap)).unwrap();
    m
}

fn brute_force(values: &[f64], weights: &[f64], cap: f64) -> f64 {
    let n = values.len();
    (0u32..1 << n)
        .filter(|mask| (0..n).filter(|k| mask >> k & 1 == 1).map(|k| weights[k]).sum::<f64>() <= cap + 1e-9)
        .map(|mask| -(0..n).filter(|k| mask >> k & 1 == 1).map(|k| values[k]).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn infeasible_integer_program() {
    let mut m = MilpModel::new();
    let a = m.add_var("a", 0.0, 1.0, VarKind::Binary, 1.0).unwrap();
    let b = m.add_var("b", 0.0, 1.0, VarKind::Binary, 1.0).unwrap();
    m.add_constraint(LinearConstraint::new("odd", "half", vec![(a, 2.0), (b, 2.0)], Sense::Eq, 1.0)).unwrap();
    let r = branch_and_bound(&m, &BnbOptions::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Infeasible);
}

#[test]
fn lp_export_names_every_variable() {
    let m = knapsack(&[3.0, 4.0], &[2.0, 3.0], 4.0);
    let mut buf = Vec::new();
    write_lp(&m, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.contains("z0") && text.contains("z1"));
    assert!(text.to_lowercase().contains("binar"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn knapsack_matches_enumeration(
        items in prop::collection::vec((1u32..30, 1u32..20), 1..10),
        frac in 0.1f64..0.9,
    ) {
        let values: Vec<f64> = items.iter().map(|i| i.0 as f64).collect();
        let weights: Vec<f64> = items.iter().map(|i| i.1 as f64).collect();
        let cap = (weights.iter().sum::<f64>() * frac).floor();
        let m = knapsack(&values, &weights, cap);
        let r = branch_and_bound(&m, &BnbOptions { gap_tol: 0.0, ..Default::default() }).unwrap();
        prop_assert_eq!(r.status, SolveStatus::Optimal);
        prop_assert!((r.objective - brute_force(&values, &weights, cap)).abs() < 1e-6);
        prop_assert!(m.max_violation(&r.values) < 1e-6);
    }
}
