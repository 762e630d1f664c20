use ctax_core::calibration::{build_calibration, Calibration, PRESETS};
use ctax_core::dual::HyperDual;
use ctax_core::model::{equation_names, Model, Scenario, Var, NV, NX};
use ctax_core::perturbation::{differentiate, solve_first_order, solve_policy, solve_second_order, Order};
use ctax_core::harness::DEFAULT_SEED;
use ctax_core::simulate::{expectation_errors, innovations, mean_with_se, simulate_pruned, DEFAULT_BURN_IN, DEFAULT_HORIZON};
use ctax_core::steady_state::solve_steady_state;
use ctax_core::validation::{identity_audit, AuditReport, AuditTolerances};
use proptest::prelude::*;

fn scenarios(c: &Calibration) -> [Scenario; 5] {
    [
        Scenario::Bau,
        Scenario::Unconstrained,
        Scenario::Constrained { xi: 0.0 },
        Scenario::Constrained { xi: c.gamma },
        Scenario::Constrained { xi: 1.0 },
    ]
}

fn eval(model: &Model, args: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; NV];
    model.residuals(&args[..NV], &args[NV..2 * NV], args[2 * NV], &mut out).unwrap();
    out
}

/// Directional first and second derivatives of the residuals along `d`.
fn dual_directional(model: &Model, args: &[f64], d: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let hd: Vec<HyperDual> = args.iter().zip(d).map(|(&a, &s)| HyperDual::new(a, s, s, 0.0)).collect();
    let mut out = vec![HyperDual::default(); NV];
    model.residuals(&hd[..NV], &hd[NV..2 * NV], hd[2 * NV], &mut out).unwrap();
    (out.iter().map(|r| r.e1).collect(), out.iter().map(|r| r.e12).collect())
}

fn shifted(args: &[f64], d: &[f64], h: f64) -> Vec<f64> {
    args.iter().zip(d).map(|(a, s)| a + h * s).collect()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hyper_dual_matches_central_differences(
        which in 0usize..5,
        offsets in prop::collection::vec(-1.0f64..1.0, 2 * NV + 1),
        dir in prop::collection::vec(-1.0f64..1.0, 2 * NV + 1),
    ) {
        let c = Calibration::baseline();
        let ss = solve_steady_state(scenarios(&c)[which], &c).unwrap();
        let model = ss.model();
        // a point within 0.5% of the steady state, in relative terms
        let base: Vec<f64> = ss.values.iter().chain(&ss.values).chain([&0.0]).copied().collect();
        let mut args: Vec<f64> = base.iter().zip(&offsets).map(|(v, o)| v + 0.005 * o * v.abs().max(1e-3)).collect();
        let mut d: Vec<f64> = base.iter().zip(&dir).map(|(v, s)| s * v.abs().max(1e-2)).collect();
        for block in [0, NV] {
            let m = block + Var::Mu.idx();
            if base[m] == 0.0 {
                // abatement is pinned at the corner in business as usual
                args[m] = 0.0;
                d[m] = 0.0;
            }
        }
        let (g, hdd) = dual_directional(&model, &args, &d);
        let h = 1e-6;
        let (fp, fm) = (eval(&model, &shifted(&args, &d, h)), eval(&model, &shifted(&args, &d, -h)));
        let h2 = 1e-4;
        let (gp, _) = dual_directional(&model, &shifted(&args, &d, h2), &d);
        let (gm, _) = dual_directional(&model, &shifted(&args, &d, -h2), &d);
        for i in 0..NV {
            let fd1 = (fp[i] - fm[i]) / (2.0 * h);
            prop_assert!(rel_err(g[i], fd1) <= 1e-6, "eq {i}: dual {} fd {}", g[i], fd1);
            let fd2 = (gp[i] - gm[i]) / (2.0 * h2);
            prop_assert!(rel_err(hdd[i], fd2) <= 1e-6, "eq {i}: dual {} fd {}", hdd[i], fd2);
        }
    }

    #[test]
    fn linear_models_have_no_second_order_terms(
        rho1 in -0.9f64..0.9,
        rho2 in -0.9f64..0.9,
        c21 in -1.0f64..1.0,
        k in prop::collection::vec(-2.0f64..2.0, 2),
        beta in 0.5f64..0.99,
    ) {
        let point = [0.3, -0.2, 1.5];
        let f = move |zn: &[HyperDual], z: &[HyperDual], u: HyperDual, out: &mut [HyperDual]| {
            let p = |v: HyperDual, i: usize| v - HyperDual::constant(point[i]);
            out[0] = p(zn[0], 0) - p(z[0], 0) * rho1 - u;
            out[1] = p(zn[1], 1) - p(z[1], 1) * rho2 - p(z[0], 0) * c21;
            out[2] = p(z[2], 2) - p(zn[2], 2) * beta - p(z[0], 0) * k[0] - p(z[1], 1) * k[1];
            Ok(())
        };
        let names = vec!["x1".to_string(), "x2".to_string(), "y".to_string()];
        let b = differentiate(&point, 2, names, 0.1, f).unwrap();
        prop_assert!(b.f2.iter().all(|h| h.amax() == 0.0));
        let first = solve_first_order(&b).unwrap();
        prop_assert_eq!(first.n_stable, 2);
        let second = solve_second_order(&b, &first).unwrap();
        let zero = |m: f64| m.abs() <= 1e-12;
        prop_assert!(second.hxx.iter().chain(&second.gxx).all(|m| zero(m.amax())));
        prop_assert!(zero(second.hss.amax()) && zero(second.gss.amax()));
        prop_assert!((second.hx.clone() - first.hx.clone()).amax() <= 1e-12);
    }

    #[test]
    fn blanchard_kahn_holds_for_any_transfer_share(xi in 0.0f64..=1.0) {
        let c = Calibration::baseline();
        let ss = solve_steady_state(Scenario::Constrained { xi }, &c).unwrap();
        let p = solve_policy(&ss, Order::First).unwrap();
        prop_assert_eq!(p.n_stable, NX);
    }
}

#[test]
fn blanchard_kahn_count_in_every_scenario_and_preset() {
    for preset in PRESETS {
        let c = build_calibration(preset, &[]).unwrap();
        for s in scenarios(&c) {
            let ss = solve_steady_state(s, &c).unwrap();
            let p = solve_policy(&ss, Order::Second).unwrap();
            assert_eq!(p.n_stable, NX, "{preset} {s}");
            assert!(p.borderline.is_empty(), "{preset} {s}");
        }
    }
}

#[test]
fn pruned_simulation_is_bit_reproducible() {
    let c = Calibration::baseline();
    let ss = solve_steady_state(Scenario::Constrained { xi: 1.0 }, &c).unwrap();
    let p = solve_policy(&ss, Order::Second).unwrap();
    let a = simulate_pruned(&p, 20_000, 500, 77).unwrap();
    let b = simulate_pruned(&p, 20_000, 500, 77).unwrap();
    assert!(a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
    let other = simulate_pruned(&p, 20_000, 500, 78).unwrap();
    assert_ne!(a.data, other.data);
}

#[test]
fn independent_seeds_agree_within_sampling_error() {
    let c = Calibration::baseline();
    for s in scenarios(&c) {
        let ss = solve_steady_state(s, &c).unwrap();
        let p = solve_policy(&ss, Order::Second).unwrap();
        let a = simulate_pruned(&p, 100_000, 1_000, 1).unwrap();
        let b = simulate_pruned(&p, 100_000, 1_000, 2).unwrap();
        for v in [Var::Y, Var::C, Var::I, Var::E, Var::X, Var::Tau] {
            let (ma, sa) = mean_with_se(&a.series(v.idx()).collect::<Vec<_>>());
            let (mb, sb) = mean_with_se(&b.series(v.idx()).collect::<Vec<_>>());
            let bound = 3.0 * (sa * sa + sb * sb).sqrt();
            assert!((ma - mb).abs() <= bound.max(1e-14), "{s} {}: {ma} vs {mb} (bound {bound})", v.name());
        }
    }
}

fn audit(s: Scenario, order: Order) -> AuditReport {
    let c = Calibration::baseline();
    let ss = solve_steady_state(s, &c).unwrap();
    let p = solve_policy(&ss, order).unwrap();
    let paths = simulate_pruned(&p, DEFAULT_HORIZON, DEFAULT_BURN_IN, DEFAULT_SEED).unwrap();
    identity_audit(paths.rows(), &ss.model(), AuditTolerances::for_path(s, order))
}

#[test]
fn identities_hold_along_first_order_paths() {
    let c = Calibration::baseline();
    for s in scenarios(&c) {
        let report = audit(s, Order::First);
        assert!(report.pass(), "{s}: {report:?}");
    }
    assert!(audit(Scenario::Bau, Order::First).get("walras").unwrap().max_residual <= 1e-8);
}

#[test]
fn identities_hold_along_second_order_paths() {
    let c = Calibration::baseline();
    let failed: Vec<String> = scenarios(&c)
        .into_iter()
        .map(|s| (s, audit(s, Order::Second)))
        .filter(|(_, r)| !r.pass())
        .map(|(s, r)| format!("{s}: {:?}", r.entries.iter().filter(|e| !e.pass).collect::<Vec<_>>()))
        .collect();
    assert!(failed.is_empty(), "{failed:#?}");
}

fn resource_residual(sigma_eta: f64, order: Order) -> f64 {
    let c = Calibration::baseline().with("sigma_eta", sigma_eta).unwrap();
    let ss = solve_steady_state(Scenario::Unconstrained, &c).unwrap();
    let p = solve_policy(&ss, order).unwrap();
    let paths = simulate_pruned(&p, 20_000, 500, 11).unwrap();
    identity_audit(paths.rows(), &ss.model(), AuditTolerances::for_path(Scenario::Unconstrained, order))
        .get("resource")
        .unwrap()
        .max_residual
}

#[test]
fn resource_residual_shrinks_with_shock_size() {
    let first = resource_residual(0.007, Order::First) / resource_residual(0.0035, Order::First);
    assert!((3.0..=5.0).contains(&first), "first-order ratio {first}");
    let second = resource_residual(0.007, Order::Second) / resource_residual(0.0035, Order::Second);
    assert!(second >= 3.0, "second-order ratio {second}");
}

#[test]
fn second_order_residuals_do_not_exceed_first_order() {
    for s in [Scenario::Unconstrained, Scenario::Constrained { xi: 0.0 }, Scenario::Constrained { xi: 1.0 }] {
        let (a, b) = (audit(s, Order::First), audit(s, Order::Second));
        for id in ["resource", "walras"] {
            let (r1, r2) = (a.get(id).unwrap().max_residual, b.get(id).unwrap().max_residual);
            assert!(r2 <= r1 + 1e-15, "{s} {id}: {r2} > {r1}");
        }
    }
}

fn euler_errors(sigma_eta: f64, s: Scenario, order: Order) -> Vec<f64> {
    let c = Calibration::baseline().with("sigma_eta", sigma_eta).unwrap();
    let ss = solve_steady_state(s, &c).unwrap();
    expectation_errors(&solve_policy(&ss, order).unwrap(), &innovations(3, 5_000)).unwrap()
}

#[test]
fn second_order_reduces_expectational_errors() {
    for s in [Scenario::Bau, Scenario::Unconstrained, Scenario::Constrained { xi: 1.0 }] {
        let (e1, e2) = (euler_errors(0.007, s, Order::First), euler_errors(0.007, s, Order::Second));
        for (i, name) in equation_names(s).iter().enumerate() {
            assert!(e2[i] <= e1[i] + 1e-14, "{s} {name}: {} > {}", e2[i], e1[i]);
        }
        let k = equation_names(s).iter().position(|&n| n == "capital_euler").unwrap();
        let first = e1[k] / euler_errors(0.0035, s, Order::First)[k];
        let second = e2[k] / euler_errors(0.0035, s, Order::Second)[k];
        assert!((3.0..=5.0).contains(&first), "{s}: first-order ratio {first}");
        assert!(second >= 6.0, "{s}: second-order ratio {second}");
    }
}
