use super::*;
use crate::coupled::march;
use crate::tensor::SymTensor3;
use crate::testing::{smooth_problem, zero_problem};
use crate::Regime;

#[test]
fn zero_trajectory_has_zero_slack_at_zero_test() {
    for regime in [Regime::Regularized, Regime::Sweeping] {
        let p = zero_problem(regime);
        let traj = march(&p, true).unwrap();
        let zero = TensorField::zeros(*p.constraint.grid());
        for step in [1, 5, 20] {
            assert_eq!(vi_slacks(&p, &traj, step, std::slice::from_ref(&zero)).unwrap(), vec![0.0]);
        }
        let rep = vi_residual(&p, &traj, 10, 3).unwrap();
        assert!(rep.passes(0.0), "{rep:?}");
    }
}

#[test]
fn own_stress_as_test_gives_zero_slack() {
    let p = smooth_problem(4, Regime::Regularized, 0.02);
    let traj = march(&p, true).unwrap();
    for step in 1..traj.states.len() {
        let own = traj.states[step].sigma.clone();
        assert_eq!(vi_slacks(&p, &traj, step, &[own]).unwrap()[0], 0.0);
    }
}

#[test]
fn solver_output_satisfies_pointwise_inequality() {
    for regime in [Regime::Regularized, Regime::Sweeping] {
        let p = smooth_problem(4, regime, 0.02);
        let traj = march(&p, true).unwrap();
        let rep = vi_residual(&p, &traj, 50, 11).unwrap();
        assert!(rep.passes(1e-8), "{regime:?}: {} at step {}", rep.min_normalized, rep.worst_step);
        assert_eq!(rep.rows.len(), traj.states.len() - 1);
    }
}

#[test]
fn outward_corruption_is_flagged() {
    let p = smooth_problem(4, Regime::Sweeping, 0.02);
    let mut traj = march(&p, true).unwrap();
    let clean = vi_residual(&p, &traj, 30, 5).unwrap();
    assert!(clean.passes(1e-8));
    let last = traj.states.len() - 1;
    let bump = SymTensor3::new(0.0, 0.0, 0.0, 0.5, 0.0, 0.0);
    let s = &traj.states[last].sigma;
    traj.states[last].sigma = s.map(|_, x| *x + bump);
    let corrupt = vi_residual(&p, &traj, 30, 5).unwrap();
    assert!(!corrupt.passes(1e-8), "{}", corrupt.min_normalized);
    assert_eq!(corrupt.worst_step, last);
}

#[test]
fn undriven_stress_growth_violates_weak_inequality() {
    let p = zero_problem(Regime::Regularized);
    let mut traj = march(&p, true).unwrap();
    let dev = SymTensor3::new(0.2, -0.1, -0.1, 0.0, 0.0, 0.0);
    for s in traj.states.iter_mut().skip(1) {
        s.sigma = s.sigma.map(|_, _| dev * s.t);
    }
    let zero = vec![TensorField::zeros(*p.constraint.grid()); traj.states.len()];
    let slacks = weak_vi_slacks(&p, &traj, &[zero]).unwrap();
    assert!(slacks[0].iter().all(|&s| s < 0.0), "{:?}", slacks[0]);
}

#[test]
fn own_path_gives_zero_weak_slack() {
    let p = smooth_problem(4, Regime::Regularized, 0.02);
    let traj = march(&p, true).unwrap();
    let own: Vec<TensorField> = traj.states.iter().map(|s| s.sigma.clone()).collect();
    let slacks = weak_vi_slacks(&p, &traj, &[own]).unwrap();
    assert!(slacks[0].iter().all(|&s| s.abs() <= 1e-10), "{:?}", slacks[0]);
}

#[test]
fn zero_trajectory_weak_slack_with_zero_path() {
    let p = zero_problem(Regime::Sweeping);
    let traj = march(&p, true).unwrap();
    let zero = vec![TensorField::zeros(*p.constraint.grid()); traj.states.len()];
    let slacks = weak_vi_slacks(&p, &traj, &[zero]).unwrap();
    assert!(slacks[0].iter().all(|&s| s == 0.0));
}

#[test]
fn solver_output_satisfies_weak_inequality() {
    for regime in [Regime::Regularized, Regime::Sweeping] {
        let p = smooth_problem(4, regime, 0.02);
        let traj = march(&p, true).unwrap();
        let rep = weak_vi_residual(&p, &traj, 20, 17).unwrap();
        assert!(rep.passes(1e-6), "{regime:?}: {} at step {}", rep.min_normalized, rep.worst_step);
    }
}

#[test]
fn random_paths_are_feasible() {
    let p = smooth_problem(4, Regime::Regularized, 0.05);
    let traj = march(&p, true).unwrap();
    let paths = random_feasible_paths(&p, &traj, 3, 1).unwrap();
    for path in &paths {
        for (eta, s) in path.iter().zip(&traj.states) {
            assert!(p.constraint.membership(eta, s.t, 1e-12).unwrap().feasible);
        }
    }
}

#[test]
fn zero_run_energy_is_zero() {
    let traj = march(&zero_problem(Regime::Regularized), true).unwrap();
    let e = energy_report(&traj);
    assert_eq!((e.sup_e1, e.sup_e2, e.sup_e3), (0.0, 0.0, 0.0));
    assert_eq!((e.ratio_e1, e.ratio_e2, e.ratio_e3), (0.0, 0.0, 0.0));
}

#[test]
fn energy_records_match_report() {
    let traj = march(&smooth_problem(4, Regime::Regularized, 0.02), true).unwrap();
    let e = energy_report(&traj);
    for (row, rec) in e.rows.iter().zip(&traj.records) {
        assert!((row.e1 - rec.energy_lhs).abs() <= 1e-12 * (1.0 + row.e1));
        assert!((row.data_v - rec.energy_rhs).abs() <= 1e-12 * row.data_v);
    }
    assert!(e.sup_e2.is_finite() && e.sup_e2 > 0.0);
}

#[test]
fn undriven_homogeneous_stress_decays() {
    use crate::constraint::{ConstraintSet, ShiftField, ThresholdField};
    use crate::fields::Grid;
    let mut p = zero_problem(Regime::Regularized);
    let g = Grid::point();
    p.constraint = ConstraintSet::new(g, ThresholdField::constant(1.0).unwrap(), ShiftField::zero());
    p.v0 = VectorField::zeros(g);
    p.sigma0 = TensorField::constant(g, SymTensor3::new(0.5, -0.2, 0.1, 0.6, 0.0, 0.3));
    let e = energy_report(&march(&p, false).unwrap());
    assert!(e.max_sigma_increase < 0.0, "{}", e.max_sigma_increase);
}

#[test]
fn zero_data_mechanical_energy_is_nonincreasing() {
    let mut p = zero_problem(Regime::Regularized);
    let g = *p.constraint.grid();
    p.sigma0 = TensorField::from_fn(g, |x| SymTensor3::new(0.2 * x[1], 0.0, -0.1, 0.4 * x[0], 0.0, 0.1));
    for regime in [Regime::Regularized, Regime::Sweeping] {
        p.regime = regime;
        let e = energy_report(&march(&p, false).unwrap());
        assert!(e.max_mechanical_increase <= 1e-10, "{regime:?}: {}", e.max_mechanical_increase);
    }
}

#[test]
fn default_suite_passes() {
    let rep = invariant_suite(&SuiteConfig::default()).unwrap();
    assert!(rep.pass, "{:?}", rep.entries.iter().filter(|e| !e.pass).collect::<Vec<_>>());
    rep.check().unwrap();
    assert!(rep.entries.iter().any(|e| e.invariant == "degenerate_axis"));
}

#[test]
fn suite_failure_names_invariant() {
    let mut rep = invariant_suite(&SuiteConfig { korn_samples: 5, gauss_green_pairs: 3, projection_pairs: 10, ..SuiteConfig::default() }).unwrap();
    rep.entries[0].pass = false;
    match rep.check() {
        Err(Error::SuiteFailure { invariant, .. }) => assert_eq!(invariant, rep.entries[0].invariant),
        other => panic!("{other:?}"),
    }
}

#[test]
fn summary_serializes_checks() {
    let s = Summary::new("verify", vec![Check::at_most("a", 1.0, 2.0), Check::at_least("b", 0.5, 0.9)]);
    assert!(!s.pass);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("summary.json");
    s.write_json(&path).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(v["checks"][1]["pass"], false);
    assert!(format!("{}", s.checks[0]).starts_with("PASS a"));
}

#[test]
fn transported_points_land_in_the_later_set() {
    let p = smooth_problem(4, Regime::Regularized, 0.05);
    let c = shrink_transport_check(&p.constraint, p.horizon, 100, 9).unwrap();
    assert!(c.worst_violation <= 1e-12, "{c:?}");
    assert_eq!(c.skipped_wide, 0);
}

#[test]
fn resolvent_satisfies_its_inequality() {
    let p = smooth_problem(3, Regime::Regularized, 0.05);
    for kappa in [0.0, 1.0] {
        let c = resolvent_check(&p.constraint, 0.2, 0.1, kappa, 3, 10, (1e-12, 50_000), 4).unwrap();
        assert!(c.worst_normalized_slack >= -1e-8, "kappa {kappa}: {c:?}");
    }
}
