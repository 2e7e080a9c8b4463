mod common;

use frpsim::milp::{self, LinExpr, ModelBuilder, Sense};
use proptest::prelude::*;

/// Covering LP: min c'x, A x >= b, x >= 0 with positive data, always feasible
/// and bounded.
fn covering_lp() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>, Vec<f64>)> {
    (2usize..7, 1usize..6).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(1.0f64..20.0, n),
            prop::collection::vec(prop::collection::vec(0.1f64..5.0, n), m),
            prop::collection::vec(1.0f64..50.0, m),
        )
    })
}

fn build(c: &[f64], a: &[Vec<f64>], b: &[f64], binary: bool) -> ModelBuilder {
    let mut m = ModelBuilder::new();
    let x: Vec<_> = c
        .iter()
        .map(|&ci| if binary { m.add_binary(ci) } else { m.add_var(0.0, f64::INFINITY, ci) })
        .collect();
    for (row, &rhs) in a.iter().zip(b) {
        let mut e = LinExpr::new();
        for (j, &aij) in row.iter().enumerate() {
            e.add_term(x[j], aij);
        }
        m.add_constraint(e, Sense::Ge, if binary { rhs.min(row.iter().sum::<f64>()) } else { rhs });
    }
    m
}

proptest! {
    #![proptest_config(common::seeded(24))]

    #[test]
    fn lp_objective_equals_dual_objective((c, a, b) in covering_lp()) {
        let m = build(&c, &a, &b, false);
        let sol = milp::solve_optimal(&m, &common::solver()).unwrap();
        let duals = sol.duals.as_ref().unwrap();
        // variable bounds are all zero lower bounds, so only row terms remain
        let dual_obj: f64 = b.iter().zip(duals).map(|(bi, yi)| bi * yi).sum();
        prop_assert!(duals.iter().all(|&y| y >= -1e-9));
        prop_assert!((sol.objective - dual_obj).abs() <= 1e-5 * sol.objective.abs().max(1.0));
    }

    #[test]
    fn repeated_solves_return_the_same_point((c, a, b) in covering_lp(), binary in any::<bool>()) {
        let m = build(&c, &a, &b, binary);
        let first = milp::solve_optimal(&m, &common::solver()).unwrap();
        let second = milp::solve_optimal(&m, &common::solver()).unwrap();
        prop_assert_eq!(first.values, second.values);
        prop_assert_eq!(first.objective, second.objective);
    }
}

#[test]
fn zero_objective_mip_reports_a_finite_gap() {
    let mut m = ModelBuilder::new();
    let x = m.add_binary(0.0);
    let y = m.add_binary(0.0);
    m.add_constraint(LinExpr::from(x) + y, Sense::Ge, 1.0);
    let sol = milp::solve_optimal(&m, &common::solver()).unwrap();
    assert_eq!(sol.objective, 0.0);
    assert_eq!(sol.mip_gap, 0.0);
    assert!(sol.values[0] + sol.values[1] >= 1.0 - 1e-9);
}
