//! Deterministic steady states.
//!
//! Each regime is reduced to a low-dimensional problem in output (and the tax
//! rate for the constrained planner), assembled into a full variable vector
//! and then polished by damped Newton on the complete residual system.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::calibration::{utility, Calibration};
use crate::dual::HyperDual;
use crate::error::{Error, Result};
use crate::model::{Model, Scenario, Var, NV};

/// Residual tolerance for certified steady states.
pub const CERTIFY_TOL: f64 = 1e-10;
const NEWTON_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct SteadyState {
    pub scenario: Scenario,
    pub calib: Calibration,
    pub values: Vec<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
}

impl SteadyState {
    pub fn get(&self, v: Var) -> f64 {
        self.values[v.idx()]
    }

    pub fn model(&self) -> Model {
        Model { scenario: self.scenario, calib: self.calib.clone() }
    }
}

/// Solves the steady state of any scenario.
pub fn solve_steady_state(scenario: Scenario, calib: &Calibration) -> Result<SteadyState> {
    match scenario {
        Scenario::Bau => solve_ss_bau(calib),
        Scenario::Unconstrained => solve_ss_unconstrained(calib),
        Scenario::Constrained { xi } => solve_ss_constrained(calib, xi),
    }
}

/// Closed-form BAU steady state.
pub fn solve_ss_bau(calib: &Calibration) -> Result<SteadyState> {
    let model = Model::new(Scenario::Bau, calib.clone())?;
    let (mu, y) = production_block(calib, 0.0)?;
    let z = assemble(&model, 0.0, mu, y)?;
    certify(model, z, 0)
}

/// First-best planner steady state with `τ* = βχ/(1-βη)`.
pub fn solve_ss_unconstrained(calib: &Calibration) -> Result<SteadyState> {
    let model = Model::new(Scenario::Unconstrained, calib.clone())?;
    let tau = ss_scc(0.0, calib)?;
    let (mu, y) = production_block(calib, tau)?;
    let z = assemble(&model, tau, mu, y)?;
    polish(model, z)
}

/// Constrained planner steady state for transfer share `xi`.
///
/// The tax rate is found by a secant iteration on
/// `τ = V^X(λ^H(τ)) / (1 + (ξ/γ) λ^H(τ))`, warm-started at the unconstrained
/// tax, and the full system is then polished by Newton.
pub fn solve_ss_constrained(calib: &Calibration, xi: f64) -> Result<SteadyState> {
    let model = Model::new(Scenario::Constrained { xi }, calib.clone())?;
    let xg = model.xi_over_gamma();
    let map = |tau: f64| -> Result<(f64, Vec<f64>)> {
        let (mu, y) = production_block(calib, tau)?;
        let z = assemble(&model, tau, mu, y)?;
        let lam_h = z[Var::LamH.idx()];
        Ok((ss_scc(lam_h, calib)? / (1.0 + xg * lam_h) - tau, z))
    };
    let mut t0 = ss_scc(0.0, calib)?;
    let (mut g0, mut z) = map(t0)?;
    let mut t1 = t0 + g0;
    let mut iterations = 0;
    while g0.abs() > 1e-14 && iterations < 200 {
        iterations += 1;
        let (g1, z1) = map(t1)?;
        z = z1;
        if g1.abs() <= 1e-14 || t1 == t0 {
            g0 = g1;
            break;
        }
        let next = t1 - g1 * (t1 - t0) / (g1 - g0);
        t0 = t1;
        g0 = g1;
        t1 = next.max(0.0);
    }
    if g0.abs() > 1e-8 {
        return Err(Error::NoConvergence { solver: "constrained tax fixed point", iterations, residual: g0.abs() });
    }
    polish(model, z)
}

/// Steady-state social cost of carbon `β χ (1 + λ^H) / (1 - βη)`.
pub fn ss_scc(lambda_h: f64, calib: &Calibration) -> Result<f64> {
    let be = calib.beta * calib.eta_pollution;
    if be >= 1.0 {
        return Err(Error::Domain { what: "beta * eta_pollution", value: be });
    }
    if !(lambda_h >= 0.0) {
        return Err(Error::Domain { what: "marginal-utility gap", value: lambda_h });
    }
    Ok(calib.beta * calib.chi * (1.0 + lambda_h) / (1.0 - be))
}

/// Optimal abatement given output and the tax, from the abatement condition.
fn abatement_given(calib: &Calibration, tau: f64, y: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    let ratio = tau * calib.phi1 * y.powf(-calib.phi2) / (calib.theta1 * calib.theta2);
    ratio.powf(1.0 / (calib.theta2 - 1.0))
}

/// Solves production, emissions, abatement and capital for a given tax,
/// returning `(μ, Y)`.
fn production_block(calib: &Calibration, tau: f64) -> Result<(f64, f64)> {
    let gap = |y: f64| -> f64 {
        let mu = abatement_given(calib, tau, y);
        let e = (1.0 - mu) * calib.phi1 * y.powf(1.0 - calib.phi2);
        let rho = 1.0 - calib.theta1 * mu.powf(calib.theta2) - tau * (1.0 - calib.phi2) * e / y;
        let k = calib.alpha * rho * y / (1.0 / calib.beta - 1.0 + calib.delta);
        y - calib.a * k.powf(calib.alpha) * calib.n.powf(1.0 - calib.alpha)
    };
    let mut y = 1.0;
    for it in 0..100 {
        let r = gap(y);
        if r.abs() < 1e-15 {
            break;
        }
        let h = 1e-7 * y;
        let slope = (gap(y + h) - gap(y - h)) / (2.0 * h);
        let mut step = r / slope;
        while !(y - step > 0.0) || !gap(y - step).is_finite() {
            step *= 0.5;
        }
        y -= step;
        if step.abs() < 1e-15 * y {
            break;
        }
        if it == 99 {
            return Err(Error::NoConvergence { solver: "steady-state output", iterations: it, residual: r.abs() });
        }
    }
    let mu = abatement_given(calib, tau, y);
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::Domain { what: "abatement share mu", value: mu });
    }
    Ok((mu, y))
}

/// Fills every slot from `(τ, μ, Y)` using the static and steady-state
/// relations of the scenario.
fn assemble(model: &Model, tau: f64, mu: f64, y: f64) -> Result<Vec<f64>> {
    use Var::*;
    let p = &model.calib;
    let mut z = vec![0.0; NV];
    let f = p.theta1 * mu.powf(p.theta2);
    let e = (1.0 - mu) * p.phi1 * y.powf(1.0 - p.phi2);
    let rho = 1.0 - f - tau * (1.0 - p.phi2) * e / y;
    let k = p.alpha * rho * y / (1.0 / p.beta - 1.0 + p.delta);
    let i = p.delta * k;
    let c = y - i - f * y;
    let w = (1.0 - p.alpha) * rho * y / p.n;
    let x = e / (1.0 - p.eta_pollution);
    let t = tau * e;
    let d = y - w * p.n - i - f * y - t;
    let th = match model.scenario {
        Scenario::Bau => t,
        Scenario::Unconstrained => t + d,
        Scenario::Constrained { .. } => model.xi_over_gamma() * t,
    };
    let (ch, cs) = match model.scenario {
        Scenario::Unconstrained => (c, c),
        _ => {
            let ch = w * p.n + th;
            (ch, (c - p.gamma * ch) / (1.0 - p.gamma))
        }
    };
    let sh = crate::calibration::surplus(ch, x, p, "hand-to-mouth")?;
    let ss = crate::calibration::surplus(cs, x, p, "saver")?;
    let lam_s = ss.powf(-p.sigma);
    let lam_h = p.gamma * (sh.powf(-p.sigma) - lam_s) / lam_s;
    let vx = match model.scenario {
        Scenario::Unconstrained => ss_scc(0.0, p)?,
        _ => p.beta * p.chi * (1.0 + lam_h) / (1.0 - p.beta * p.eta_pollution),
    };
    let uh = utility(sh, p.sigma) / (1.0 - p.beta);
    let us = utility(ss, p.sigma) / (1.0 - p.beta);

    z[K.idx()] = k;
    z[X.idx()] = x;
    z[Y.idx()] = y;
    z[C.idx()] = c;
    z[CH.idx()] = ch;
    z[CS.idx()] = cs;
    z[I.idx()] = i;
    z[W.idx()] = w;
    z[D.idx()] = d;
    z[E.idx()] = e;
    z[Mu.idx()] = mu;
    z[Tau.idx()] = tau;
    z[LamS.idx()] = lam_s;
    z[LamH.idx()] = lam_h;
    z[VE.idx()] = tau;
    z[VX.idx()] = vx;
    z[Q.idx()] = p.delta.powf(p.eps_adj) / p.b1;
    z[Rho.idx()] = rho;
    z[T.idx()] = t;
    z[TH.idx()] = th;
    z[TS.idx()] = (t - p.gamma * th) / (1.0 - p.gamma);
    z[UH.idx()] = uh;
    z[US.idx()] = us;
    z[Wel.idx()] = p.gamma * uh + (1.0 - p.gamma) * us;
    z[Pb.idx()] = p.beta;
    z[Ps.idx()] = p.beta * d / (1.0 - p.beta);
    Ok(z)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn certify(model: Model, values: Vec<f64>, iterations: usize) -> Result<SteadyState> {
    let r = model.static_residuals(&values)?;
    let residual_norm = inf_norm(&r);
    if !(residual_norm <= CERTIFY_TOL) {
        return Err(Error::NoConvergence { solver: "steady-state certification", iterations, residual: residual_norm });
    }
    Ok(SteadyState { scenario: model.scenario, calib: model.calib, values, iterations, residual_norm })
}

fn polish(model: Model, guess: Vec<f64>) -> Result<SteadyState> {
    let (z, iterations) = newton(&model, guess)?;
    certify(model, z, iterations)
}

/// Jacobian of `z ↦ F(z, z, 0)`.
pub fn static_jacobian(model: &Model, z: &[f64]) -> Result<DMatrix<f64>> {
    let mut jac = DMatrix::zeros(NV, NV);
    let mut zd: Vec<HyperDual> = z.iter().map(|&v| HyperDual::constant(v)).collect();
    let mut out = vec![HyperDual::default(); NV];
    for j in 0..NV {
        zd[j].e1 = 1.0;
        model.residuals(&zd, &zd, HyperDual::constant(0.0), &mut out)?;
        zd[j].e1 = 0.0;
        for (i, r) in out.iter().enumerate() {
            if !r.e1.is_finite() {
                return Err(Error::Singularity { equation: model.layout().equations[i] });
            }
            jac[(i, j)] = r.e1;
        }
    }
    Ok(jac)
}

/// Damped Newton on the steady-state system. Trial points outside the model
/// domain count as failed line-search steps.
pub fn newton(model: &Model, guess: Vec<f64>) -> Result<(Vec<f64>, usize)> {
    const MAX_ITER: usize = 100;
    let mut z = guess;
    let mut r = model.static_residuals(&z)?;
    let mut norm = inf_norm(&r);
    for iter in 0..MAX_ITER {
        if norm <= NEWTON_TOL {
            return Ok((z, iter));
        }
        let jac = static_jacobian(model, &z)?;
        let step = jac
            .lu()
            .solve(&DVector::from_column_slice(&r))
            .ok_or(Error::Singularity { equation: "steady-state Jacobian" })?;
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = z.iter().zip(step.iter()).map(|(a, d)| a - lambda * d).collect();
            if let Ok(rt) = model.static_residuals(&trial) {
                let nt = inf_norm(&rt);
                if nt.is_finite() && (nt < (1.0 - 1e-4 * lambda) * norm || nt <= NEWTON_TOL) {
                    z = trial;
                    r = rt;
                    norm = nt;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-10 {
                if norm <= CERTIFY_TOL {
                    return Ok((z, iter));
                }
                return Err(Error::DampingFloor { solver: "steady-state Newton", iteration: iter, residual: norm });
            }
        }
    }
    if norm <= NEWTON_TOL {
        Ok((z, MAX_ITER))
    } else {
        Err(Error::NoConvergence { solver: "steady-state Newton", iterations: MAX_ITER, residual: norm })
    }
}
