use ctax_core::calibration::Calibration;
use ctax_core::model::{Scenario, Var, NX};
use ctax_core::perturbation::{solve_policy, Order, PolicySolution};
use ctax_core::steady_state::solve_steady_state;
use ctax_core::validation::{perfect_foresight_path, ForesightPath, PF_DEFAULT_HORIZON, PF_INTERIOR_TOL};

const VARS: [Var; 3] = [Var::Y, Var::C, Var::I];
const WINDOW: usize = 200;

/// First-order response to a TFP level displaced by `a0` in period 0.
fn linear_response(p: &PolicySolution, a0: f64, v: Var) -> Vec<f64> {
    let mut xf = vec![0.0; NX];
    xf[Var::LogA.idx()] = a0;
    let xs = vec![0.0; NX];
    let mut out = Vec::with_capacity(WINDOW);
    for _ in 0..WINDOW {
        out.push(p.observe(&xf, &xs)[v.idx()] - p.ss[v.idx()]);
        xf = p.step(&xf, &xs, 0.0).0;
    }
    out
}

fn foresight(s: Scenario, a0: f64) -> ForesightPath {
    let c = Calibration::baseline();
    let ss = solve_steady_state(s, &c).unwrap();
    let mut x0 = ss.values[..NX].to_vec();
    x0[Var::LogA.idx()] = a0;
    perfect_foresight_path(s, &c, &x0, &[], PF_DEFAULT_HORIZON).unwrap()
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn max_gap(s: Scenario, p: &PolicySolution, a0: f64) -> f64 {
    let path = foresight(s, a0);
    VARS.iter()
        .map(|&v| {
            let exact = path.deviation(v);
            let lin = linear_response(p, a0, v);
            lin.iter().zip(&exact).map(|(l, e)| (l - e).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

fn first_order(s: Scenario) -> PolicySolution {
    let ss = solve_steady_state(s, &Calibration::baseline()).unwrap();
    solve_policy(&ss, Order::First).unwrap()
}

#[test]
fn small_impulse_tracks_linear_response() {
    for s in [Scenario::Bau, Scenario::Constrained { xi: 1.0 }] {
        let p = first_order(s);
        let path = foresight(s, 0.001);
        assert!(path.max_residual <= PF_INTERIOR_TOL);
        for v in VARS {
            let exact = path.deviation(v);
            let lin = linear_response(&p, 0.001, v);
            let r = correlation(&lin, &exact[..WINDOW]);
            assert!(r >= 0.999, "{s} {}: correlation {r}", v.name());
        }
    }
}

#[test]
fn linearization_error_is_quadratic_in_shock_size() {
    for s in [Scenario::Bau, Scenario::Unconstrained] {
        let p = first_order(s);
        let ratio = max_gap(s, &p, 0.001) / max_gap(s, &p, 0.0001);
        assert!((50.0..=200.0).contains(&ratio), "{s}: ratio {ratio}");
    }
}

#[test]
fn residual_trace_decreases() {
    let path = foresight(Scenario::Bau, 0.001);
    assert!(path.trace.windows(2).all(|w| w[1] < w[0]));
    assert!(path.terminal_gap <= 1e-6);
}
