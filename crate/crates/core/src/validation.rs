//! Independent checks on the solver stack: a perfect-foresight path solver
//! and an audit of the accounting identities.

use rayon::prelude::*;
use serde::Serialize;

use crate::calibration::Calibration;
use crate::dual::HyperDual;
use crate::error::{Error, Result};
use crate::linalg::BandMatrix;
use crate::model::{saver_budget_residual, Model, Scenario, Var, NV, NX};
use crate::perturbation::Order;
use crate::steady_state::solve_steady_state;

pub const PF_TOL: f64 = 1e-10;
pub const PF_INTERIOR_TOL: f64 = 1e-8;
pub const PF_TERMINAL_TOL: f64 = 1e-6;
pub const PF_MAX_ITER: usize = 50;
/// Default horizon. Atmospheric carbon decays by about 0.2% per quarter, so
/// the stock needs a few thousand periods to settle.
pub const PF_DEFAULT_HORIZON: usize = 3_000;

#[derive(Debug, Clone, Serialize)]
pub struct ForesightPath {
    pub horizon: usize,
    /// `horizon + 1` variable vectors; the last is pinned to the steady state
    /// in its non-predetermined entries.
    pub values: Vec<Vec<f64>>,
    pub terminal: &'static str,
    pub steady_state: Vec<f64>,
    pub max_residual: f64,
    /// Largest scaled gap between the terminal states and the steady state.
    pub terminal_gap: f64,
    /// Infinity norm of the stacked residual after each Newton iteration.
    pub trace: Vec<f64>,
}

impl ForesightPath {
    /// Deviations of one variable from the steady state.
    pub fn deviation(&self, v: Var) -> Vec<f64> {
        self.values.iter().map(|z| z[v.idx()] - self.steady_state[v.idx()]).collect()
    }
}

struct Stack<'a> {
    model: &'a Model,
    x0: &'a [f64],
    y_terminal: &'a [f64],
    shocks: &'a [f64],
    horizon: usize,
}

impl Stack<'_> {
    fn shock(&self, t: usize) -> f64 {
        self.shocks.get(t).copied().unwrap_or(0.0)
    }

    /// Variable vector of period `t` from the unknowns, stored in blocks
    /// `(x_{t+1}, y_t)`.
    fn period(&self, w: &[f64], t: usize) -> Vec<f64> {
        let mut z = vec![0.0; NV];
        if t == 0 {
            z[..NX].copy_from_slice(self.x0);
        } else {
            z[..NX].copy_from_slice(&w[(t - 1) * NV..(t - 1) * NV + NX]);
        }
        if t == self.horizon {
            z[NX..].copy_from_slice(self.y_terminal);
        } else {
            z[NX..].copy_from_slice(&w[t * NV + NX..(t + 1) * NV]);
        }
        z
    }

    fn residuals(&self, w: &[f64]) -> Result<Vec<f64>> {
        let blocks: Vec<Vec<f64>> = (0..self.horizon)
            .into_par_iter()
            .map(|t| {
                let mut out = vec![0.0; NV];
                let (z, zn) = (self.period(w, t), self.period(w, t + 1));
                self.model
                    .residuals(&zn, &z, self.shock(t), &mut out)
                    .map_err(|e| Error::Path { period: t, source: Box::new(e) })?;
                Ok(out)
            })
            .collect::<Result<_>>()?;
        Ok(blocks.concat())
    }

    fn jacobian(&self, w: &[f64]) -> Result<BandMatrix> {
        let n = self.horizon * NV;
        let band = 2 * NV - 1;
        let blocks: Vec<(Vec<f64>, Vec<f64>)> = (0..self.horizon)
            .into_par_iter()
            .map(|t| {
                let mut z: Vec<HyperDual> = self.period(w, t).into_iter().map(HyperDual::constant).collect();
                let mut zn: Vec<HyperDual> = self.period(w, t + 1).into_iter().map(HyperDual::constant).collect();
                let u = HyperDual::constant(self.shock(t));
                let mut out = vec![HyperDual::default(); NV];
                let mut d_next = vec![0.0; NV * NV];
                let mut d_curr = vec![0.0; NV * NV];
                for j in 0..NV {
                    zn[j].e1 = 1.0;
                    self.model.residuals(&zn, &z, u, &mut out)?;
                    zn[j].e1 = 0.0;
                    for i in 0..NV {
                        d_next[i * NV + j] = out[i].e1;
                    }
                    z[j].e1 = 1.0;
                    self.model.residuals(&zn, &z, u, &mut out)?;
                    z[j].e1 = 0.0;
                    for i in 0..NV {
                        d_curr[i * NV + j] = out[i].e1;
                    }
                }
                Ok((d_next, d_curr))
            })
            .collect::<Result<_>>()?;
        let mut jac = BandMatrix::zeros(n, band, band);
        for (t, (d_next, d_curr)) in blocks.iter().enumerate() {
            let row0 = t * NV;
            for i in 0..NV {
                let r = row0 + i;
                for j in 0..NV {
                    let c = d_curr[i * NV + j];
                    if c != 0.0 {
                        if j < NX {
                            if t > 0 {
                                jac.set(r, (t - 1) * NV + j, c);
                            }
                        } else {
                            jac.set(r, t * NV + j, c);
                        }
                    }
                    let c = d_next[i * NV + j];
                    if c != 0.0 {
                        if j < NX {
                            jac.set(r, t * NV + j, c);
                        } else if t + 1 < self.horizon {
                            jac.set(r, (t + 1) * NV + j, c);
                        }
                    }
                }
            }
        }
        Ok(jac)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves the deterministic model over `horizon` periods by Newton's method
/// on the stacked residuals, with the non-predetermined variables of the
/// final period fixed at the steady state.
///
/// `initial_states` are the levels of `K`, `X` and `logA` in period 0 and
/// `shocks[t]` is the TFP innovation between periods `t` and `t + 1`.
pub fn perfect_foresight_path(
    scenario: Scenario,
    calib: &Calibration,
    initial_states: &[f64],
    shocks: &[f64],
    horizon: usize,
) -> Result<ForesightPath> {
    if initial_states.len() != NX {
        return Err(Error::Validation { field: "initial_states", reason: format!("expected {NX} values") });
    }
    if horizon < 2 {
        return Err(Error::Validation { field: "horizon", reason: "must be at least 2".into() });
    }
    let ss = solve_steady_state(scenario, calib)?;
    let model = ss.model();
    let stack = Stack { model: &model, x0: initial_states, y_terminal: &ss.values[NX..], shocks, horizon };

    let mut w: Vec<f64> = (0..horizon).flat_map(|_| ss.values.iter().copied()).collect();
    let mut r = stack.residuals(&w)?;
    let mut norm = inf_norm(&r);
    let mut trace = vec![norm];
    let mut iter = 0;
    while norm > PF_TOL {
        if iter == PF_MAX_ITER {
            return Err(Error::NoConvergence { solver: "perfect-foresight Newton", iterations: iter, residual: norm });
        }
        iter += 1;
        let mut step = r.clone();
        stack.jacobian(&w)?.solve(&mut step)?;
        let mut lambda = 1.0;
        loop {
            let mut trial: Vec<f64> = w.iter().zip(&step).map(|(a, d)| a - lambda * d).collect();
            // rounding can push a pinned zero abatement share just below zero
            for t in 0..horizon {
                let m = &mut trial[t * NV + Var::Mu.idx()];
                *m = m.clamp(0.0, 1.0);
            }
            if let Ok(rt) = stack.residuals(&trial) {
                let nt = inf_norm(&rt);
                if nt.is_finite() && nt < (1.0 - 1e-4 * lambda) * norm {
                    w = trial;
                    r = rt;
                    norm = nt;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-6 {
                return Err(Error::DampingFloor { solver: "perfect-foresight Newton", iteration: iter, residual: norm });
            }
        }
        trace.push(norm);
    }

    let values: Vec<Vec<f64>> = (0..=horizon).map(|t| stack.period(&w, t)).collect();
    let last = &values[horizon];
    let terminal_gap = (0..NX)
        .map(|j| (last[j] - ss.values[j]).abs() / ss.values[j].abs().max(1.0))
        .fold(0.0, f64::max);
    if terminal_gap > PF_TERMINAL_TOL {
        return Err(Error::TerminalCondition { gap: terminal_gap });
    }
    Ok(ForesightPath {
        horizon,
        values,
        terminal: "steady-state level",
        steady_state: ss.values.clone(),
        max_residual: norm,
        terminal_gap,
        trace,
    })
}

/// Tolerances for [`identity_audit`], applied to scaled residuals.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AuditTolerances {
    pub walras: f64,
    pub government_budget: f64,
    pub transfers: f64,
    pub resource: f64,
    pub aggregation: f64,
    pub tax_rule: f64,
}

impl AuditTolerances {
    pub const STEADY_STATE: Self = Self {
        walras: 1e-10,
        government_budget: 1e-10,
        transfers: 1e-10,
        resource: 1e-10,
        aggregation: 1e-10,
        tax_rule: 1e-10,
    };

    /// Tolerances along simulated paths. Without abatement every identity is
    /// linear in the approximated variables and holds to rounding. With
    /// abatement the resource constraint carries the approximation error of
    /// `f(mu) Y`, and the saver budget inherits it through Walras' law.
    pub fn for_path(scenario: Scenario, order: Order) -> Self {
        let exact = Self {
            walras: 1e-8,
            government_budget: 1e-12,
            transfers: 1e-12,
            resource: 1e-8,
            aggregation: 1e-10,
            tax_rule: 1e-8,
        };
        if scenario == Scenario::Bau {
            return exact;
        }
        let approx = match order {
            Order::First => 2e-3,
            Order::Second => 1e-4,
        };
        Self { walras: approx, resource: approx, ..exact }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditEntry {
    pub identity: &'static str,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub entries: Vec<AuditEntry>,
    pub observations: usize,
}

impl AuditReport {
    pub fn pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn get(&self, identity: &str) -> Option<&AuditEntry> {
        self.entries.iter().find(|e| e.identity == identity)
    }
}

/// Scaled residuals of the accounting identities at one observation, in the
/// order walras, government budget, transfers, resource, aggregation, tax
/// rule.
pub fn identity_residuals(z: &[f64], model: &Model) -> [f64; 6] {
    use Var::*;
    let p = &model.calib;
    let g = |v: Var| z[v.idx()];
    let f_mu = p.theta1 * g(Mu).max(0.0).powf(p.theta2);
    let xg = model.xi_over_gamma();
    let transfer_rule = match model.scenario {
        Scenario::Bau => g(TH) - g(Tau) * g(E),
        Scenario::Unconstrained => g(TH) - g(Tau) * g(E) - g(D),
        Scenario::Constrained { .. } => g(TH) - xg * g(Tau) * g(E),
    };
    let tax_rule = match model.scenario {
        Scenario::Bau => g(Tau),
        Scenario::Unconstrained => (g(Tau) - g(VX)) / g(VX).abs().max(1e-300),
        Scenario::Constrained { .. } => (g(Tau) * (1.0 + xg * g(LamH)) - g(VX)) / g(VX).abs().max(1e-300),
    };
    [
        saver_budget_residual(z, p) / g(CS),
        g(T) - g(Tau) * g(E),
        (g(T) - p.gamma * g(TH) - (1.0 - p.gamma) * g(TS)).abs().max(transfer_rule.abs()),
        (g(Y) - g(C) - g(I) - f_mu * g(Y)) / g(Y),
        (g(C) - p.gamma * g(CH) - (1.0 - p.gamma) * g(CS)) / g(C),
        tax_rule,
    ]
}

/// Largest scaled residual of each accounting identity over a set of
/// observations.
pub fn identity_audit<'a, I>(observations: I, model: &Model, tol: AuditTolerances) -> AuditReport
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut worst = [0.0f64; 6];
    let mut count = 0;
    for z in observations {
        for (w, r) in worst.iter_mut().zip(identity_residuals(z, model)) {
            *w = if r.is_nan() { f64::NAN } else { w.max(r.abs()) };
        }
        count += 1;
    }
    let names = ["walras", "government_budget", "transfers", "resource", "aggregation", "tax_rule"];
    let tols = [tol.walras, tol.government_budget, tol.transfers, tol.resource, tol.aggregation, tol.tax_rule];
    let entries = names
        .iter()
        .zip(worst)
        .zip(tols)
        .map(|((&identity, max_residual), tolerance)| AuditEntry {
            identity,
            max_residual,
            tolerance,
            pass: max_residual <= tolerance,
        })
        .collect();
    AuditReport { entries, observations: count }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturbation::solve_policy;
    use crate::simulate::simulate_pruned;

    #[test]
    fn zero_shock_path_from_steady_state_is_flat() {
        let c = Calibration::baseline();
        let ss = solve_steady_state(Scenario::Bau, &c).unwrap();
        let path = perfect_foresight_path(Scenario::Bau, &c, &ss.values[..NX], &[], 300).unwrap();
        for z in &path.values {
            for (a, b) in z.iter().zip(&ss.values) {
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn short_horizon_violates_terminal_condition() {
        let c = Calibration::baseline();
        let ss = solve_steady_state(Scenario::Bau, &c).unwrap();
        let mut x0 = ss.values[..NX].to_vec();
        x0[Var::LogA.idx()] = 0.01;
        let err = perfect_foresight_path(Scenario::Bau, &c, &x0, &[], 20).unwrap_err();
        assert!(matches!(err, Error::TerminalCondition { .. }), "{err}");
    }

    #[test]
    fn bad_initial_states_are_rejected() {
        let c = Calibration::baseline();
        assert!(perfect_foresight_path(Scenario::Bau, &c, &[1.0], &[], 100).is_err());
    }

    #[test]
    fn steady_states_pass_audit() {
        let c = Calibration::baseline();
        for s in [Scenario::Bau, Scenario::Unconstrained, Scenario::Constrained { xi: 0.0 }, Scenario::Constrained { xi: 1.0 }] {
            let ss = solve_steady_state(s, &c).unwrap();
            let report = identity_audit([ss.values.as_slice()], &ss.model(), AuditTolerances::STEADY_STATE);
            assert!(report.pass(), "{s:?}: {report:?}");
        }
    }

    #[test]
    fn first_order_bau_path_passes_audit() {
        let ss = solve_steady_state(Scenario::Bau, &Calibration::baseline()).unwrap();
        let p = solve_policy(&ss, Order::First).unwrap();
        let paths = simulate_pruned(&p, 5_000, 100, 3).unwrap();
        let report = identity_audit(paths.rows(), &ss.model(), AuditTolerances::for_path(Scenario::Bau, Order::First));
        assert!(report.pass(), "{report:?}");
        assert!(report.get("resource").unwrap().max_residual < 1e-12);
    }
}
