//! Pruned simulation, moments, the stochastic steady state and impulse
//! responses.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Scenario, Var, NV};
use crate::perturbation::{Order, PolicySolution};

pub const DEFAULT_HORIZON: usize = 100_000;
pub const DEFAULT_BURN_IN: usize = 1_000;
/// Number of batches used for Monte-Carlo standard errors.
pub const BATCHES: usize = 50;
const SSS_TOL: f64 = 1e-12;
const SSS_MAX_ITER: usize = 1_000_000;

#[derive(Debug, Clone, Serialize)]
pub struct StochasticSteadyState {
    /// Second-order state register at the fixed point.
    pub xs: Vec<f64>,
    /// Full variable vector at the fixed point.
    pub values: Vec<f64>,
    pub iterations: usize,
}

/// Simulated variable paths, one row per period after burn-in.
#[derive(Debug, Clone)]
pub struct Paths {
    pub n: usize,
    pub data: Vec<f64>,
    pub seed: u64,
    pub horizon: usize,
    pub burn_in: usize,
    pub order: Order,
    pub scenario: Option<Scenario>,
}

impl Paths {
    pub fn len(&self) -> usize {
        self.data.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.n..(t + 1) * self.n]
    }

    pub fn series(&self, v: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().skip(v).step_by(self.n).copied()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n)
    }
}

/// Applies the model-specific identity closure and domain checks.
fn finish(policy: &PolicySolution, z: &mut [f64], period: usize) -> Result<()> {
    if let Some(model) = &policy.model {
        model.close_identities(z);
        let chi_x = model.calib.chi * z[Var::X.idx()];
        for (agent, v) in [("hand-to-mouth", Var::CH), ("saver", Var::CS)] {
            let s = z[v.idx()] - chi_x;
            if !(s > 0.0) {
                return Err(Error::Path { period, source: Box::new(Error::UtilityDomain { agent, surplus: s }) });
            }
        }
    }
    Ok(())
}

/// Observation at the given registers with the identity closure applied.
pub fn observe(policy: &PolicySolution, xf: &[f64], xs: &[f64]) -> Vec<f64> {
    let mut z = policy.observe(xf, xs);
    if let Some(model) = &policy.model {
        model.close_identities(&mut z);
    }
    z
}

/// Iterates the pruned transition with zero innovations from the
/// deterministic steady state to its fixed point.
pub fn stochastic_steady_state(policy: &PolicySolution) -> Result<StochasticSteadyState> {
    let nx = policy.nx;
    let xf = vec![0.0; nx];
    let mut xs = vec![0.0; nx];
    for it in 1..=SSS_MAX_ITER {
        let (_, next) = policy.step(&xf, &xs, 0.0);
        let gap = next.iter().zip(&xs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        xs = next;
        if gap <= SSS_TOL {
            let mut values = policy.observe(&xf, &xs);
            finish(policy, &mut values, 0)?;
            return Ok(StochasticSteadyState { xs, values, iterations: it });
        }
        if !gap.is_finite() {
            break;
        }
    }
    Err(Error::Divergence { iterations: SSS_MAX_ITER })
}

/// Draws the innovation sequence for a seed.
pub fn innovations(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Runs the pruned recursion over a given innovation sequence starting from
/// the supplied registers and calls `visit(t, xf, xs, z)` for every period.
pub fn run_pruned<F>(
    policy: &PolicySolution,
    start_xs: &[f64],
    shocks: &[f64],
    mut visit: F,
) -> Result<()>
where
    F: FnMut(usize, &[f64], &[f64], &[f64]),
{
    let mut xf = vec![0.0; policy.nx];
    let mut xs = start_xs.to_vec();
    for (t, &eps) in shocks.iter().enumerate() {
        let mut z = policy.observe(&xf, &xs);
        finish(policy, &mut z, t)?;
        visit(t, &xf, &xs, &z);
        let (nf, ns) = policy.step(&xf, &xs, eps);
        xf = nf;
        xs = ns;
    }
    Ok(())
}

/// Pruned simulation from the stochastic steady state.
///
/// Period `t` is observed before the innovation that moves the states to
/// `t + 1` is drawn. The first `burn_in` periods are discarded.
pub fn simulate_pruned(policy: &PolicySolution, horizon: usize, burn_in: usize, seed: u64) -> Result<Paths> {
    if horizon == 0 {
        return Err(Error::Config("simulation horizon must be at least 1".into()));
    }
    let sss = stochastic_steady_state(policy)?;
    let shocks = innovations(seed, burn_in + horizon);
    let mut data = Vec::with_capacity(horizon * policy.n);
    run_pruned(policy, &sss.xs, &shocks, |t, _, _, z| {
        if t >= burn_in {
            data.extend_from_slice(z);
        }
    })?;
    Ok(Paths {
        n: policy.n,
        data,
        seed,
        horizon,
        burn_in,
        order: policy.order,
        scenario: policy.model.as_ref().map(|m| m.scenario),
    })
}

/// Naive unpruned second-order simulation, for comparison with the pruned
/// scheme.
pub fn simulate_unpruned(policy: &PolicySolution, shocks: &[f64]) -> Vec<Vec<f64>> {
    let nx = policy.nx;
    let zero = vec![0.0; nx];
    let mut x = vec![0.0; nx];
    let mut out = Vec::with_capacity(shocks.len());
    for &eps in shocks {
        let mut z = policy.observe(&x, &zero);
        if let Some(m) = &policy.model {
            m.close_identities(&mut z);
        }
        out.push(z);
        let (f, s) = policy.step(&x, &zero, eps);
        x = f.iter().zip(&s).map(|(a, b)| a + b).collect();
    }
    out
}

/// One reported statistic with its Monte-Carlo standard error.
#[derive(Debug, Clone, Serialize)]
pub struct Moment {
    pub name: String,
    pub value: f64,
    pub se: f64,
    /// Set when the statistic could not be computed, e.g. a non-positive
    /// value under a logarithm.
    pub flag: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Welfare {
    pub aggregate: f64,
    pub htm: f64,
    pub saver: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub scenario: Option<Scenario>,
    pub seed: u64,
    pub horizon: usize,
    pub burn_in: usize,
    pub order: Order,
    /// Rows of the means table.
    pub means: Vec<Moment>,
    /// Rows of the standard-deviation table, in percent.
    pub log_stds: Vec<Moment>,
    /// Sample mean of every model variable.
    pub variable_means: Vec<(String, f64)>,
    pub welfare: Welfare,
    pub stochastic_steady_state: Vec<f64>,
}

impl SimulationReport {
    pub fn mean(&self, row: &str) -> Option<&Moment> {
        self.means.iter().find(|m| m.name == row)
    }

    pub fn log_std(&self, row: &str) -> Option<&Moment> {
        self.log_stds.iter().find(|m| m.name == row)
    }
}

/// Row labels of the means table.
pub const MEAN_ROWS: [&str; 15] = [
    "Y_t", "I_t", "f(mu_t)Y_t", "C_t", "C^S_t", "C^H_t", "V^X_t", "tau_t", "E_t", "tau_tE_t", "X_t", "mu_t",
    "W_t", "U^S_t", "U^H_t",
];

/// Row labels of the standard-deviation table.
pub const STD_ROWS: [&str; 9] = [
    "log(Y_t)",
    "log(I_t)",
    "log(C_t)",
    "log(C^S_t)",
    "log(C^H_t)",
    "log(lambda^H_t)",
    "log(tau_t)",
    "log(E_t)",
    "log(V^X_t)",
];

/// Value of a means-table row at one observation.
pub fn mean_row_value(row: &str, z: &[f64], theta1: f64, theta2: f64) -> f64 {
    use Var::*;
    let g = |v: Var| z[v.idx()];
    match row {
        "Y_t" => g(Y),
        "I_t" => g(I),
        "f(mu_t)Y_t" => theta1 * g(Mu).max(0.0).powf(theta2) * g(Y),
        "C_t" => g(C),
        "C^S_t" => g(CS),
        "C^H_t" => g(CH),
        "V^X_t" => g(VX),
        "tau_t" => g(Tau),
        "E_t" => g(E),
        "tau_tE_t" => g(Tau) * g(E),
        "X_t" => g(X),
        "mu_t" => g(Mu),
        "W_t" => g(Wel),
        "U^S_t" => g(US),
        "U^H_t" => g(UH),
        other => panic!("unknown means row {other}"),
    }
}

fn std_row_var(row: &str) -> Var {
    match row {
        "log(Y_t)" => Var::Y,
        "log(I_t)" => Var::I,
        "log(C_t)" => Var::C,
        "log(C^S_t)" => Var::CS,
        "log(C^H_t)" => Var::CH,
        "log(lambda^H_t)" => Var::LamH,
        "log(tau_t)" => Var::Tau,
        "log(E_t)" => Var::E,
        "log(V^X_t)" => Var::VX,
        other => panic!("unknown std row {other}"),
    }
}

/// Whether a log-std row is identically zero by construction of the regime.
pub fn structural_zero(scenario: Option<Scenario>, row: &str) -> bool {
    matches!(
        (scenario, row),
        (Some(Scenario::Bau), "log(tau_t)") | (Some(Scenario::Unconstrained), "log(lambda^H_t)")
    )
}

/// Sample mean with a batch-means standard error.
pub fn mean_with_se(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let b = BATCHES.min(n);
    if b < 2 {
        return (mean, f64::NAN);
    }
    let size = n / b;
    let bm: Vec<f64> = (0..b).map(|k| x[k * size..(k + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let bmean = bm.iter().sum::<f64>() / b as f64;
    let var = bm.iter().map(|v| (v - bmean).powi(2)).sum::<f64>() / (b - 1) as f64;
    (mean, (var / b as f64).sqrt())
}

/// Sample standard deviation with a batch-means standard error.
pub fn std_with_se(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = x.iter().map(|v| (v - mean).powi(2)).collect();
    let (var, var_se) = mean_with_se(&dev);
    let sd = var.sqrt();
    let se = if sd > 0.0 { var_se / (2.0 * sd) } else { 0.0 };
    (sd, se)
}

/// Table rows and welfare summaries from simulated paths.
pub fn moments(paths: &Paths, theta1: f64, theta2: f64, sss: &[f64]) -> Result<SimulationReport> {
    if paths.is_empty() {
        return Err(Error::Config("moments need a non-empty path".into()));
    }
    let means: Vec<Moment> = MEAN_ROWS
        .iter()
        .map(|&row| {
            let x: Vec<f64> = paths.rows().map(|z| mean_row_value(row, z, theta1, theta2)).collect();
            let (value, se) = mean_with_se(&x);
            Moment { name: row.to_string(), value, se, flag: None }
        })
        .collect();
    let log_stds = STD_ROWS
        .iter()
        .map(|&row| {
            if structural_zero(paths.scenario, row) {
                return Moment { name: row.to_string(), value: 0.0, se: 0.0, flag: None };
            }
            let raw: Vec<f64> = paths.series(std_row_var(row).idx()).collect();
            if let Some(bad) = raw.iter().find(|v| !(**v > 0.0)) {
                return Moment {
                    name: row.to_string(),
                    value: f64::NAN,
                    se: f64::NAN,
                    flag: Some(format!("non-positive value {bad:e} under log")),
                };
            }
            let logs: Vec<f64> = raw.iter().map(|v| v.ln()).collect();
            let (sd, se) = std_with_se(&logs);
            Moment { name: row.to_string(), value: 100.0 * sd, se: 100.0 * se, flag: None }
        })
        .collect();
    let variable_means: Vec<(String, f64)> = Var::ALL
        .iter()
        .map(|v| (v.name().to_string(), paths.series(v.idx()).sum::<f64>() / paths.len() as f64))
        .collect();
    let get = |name: &str| variable_means.iter().find(|(n, _)| n == name).map(|x| x.1).unwrap_or(f64::NAN);
    let welfare = Welfare { aggregate: get("Wel"), htm: get("UH"), saver: get("US") };
    Ok(SimulationReport {
        scenario: paths.scenario,
        seed: paths.seed,
        horizon: paths.horizon,
        burn_in: paths.burn_in,
        order: paths.order,
        means,
        log_stds,
        variable_means,
        welfare,
        stochastic_steady_state: sss.to_vec(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct IrfSet {
    pub names: Vec<String>,
    pub scenario: Option<Scenario>,
    pub shock_sds: f64,
    pub generalized: bool,
    /// `(horizon + 1)` rows of absolute deviations × 100, impact first.
    pub data: Vec<Vec<f64>>,
}

impl IrfSet {
    pub fn path(&self, v: Var) -> Vec<f64> {
        self.data.iter().map(|r| r[v.idx()]).collect()
    }
}

fn var_names(n: usize) -> Vec<String> {
    if n == NV {
        Var::ALL.iter().map(|v| v.name().to_string()).collect()
    } else {
        (0..n).map(|i| format!("z{i}")).collect()
    }
}

/// Difference of two zero-innovation pruned paths from the stochastic
/// steady state, one of which receives `shock_sds` standard deviations at
/// impact.
pub fn irf(policy: &PolicySolution, sss: &StochasticSteadyState, shock_sds: f64, horizon: usize) -> Result<IrfSet> {
    let paths = |impact: f64| -> Result<Vec<Vec<f64>>> {
        let mut xf: Vec<f64> = policy.eta.iter().map(|e| e * impact).collect();
        let mut xs = sss.xs.clone();
        let mut rows = Vec::with_capacity(horizon + 1);
        for h in 0..=horizon {
            let mut z = policy.observe(&xf, &xs);
            finish(policy, &mut z, h)?;
            rows.push(z);
            let (nf, ns) = policy.step(&xf, &xs, 0.0);
            xf = nf;
            xs = ns;
        }
        Ok(rows)
    };
    let base = paths(0.0)?;
    let hit = paths(shock_sds)?;
    let data = hit
        .iter()
        .zip(&base)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| 100.0 * (x - y)).collect())
        .collect();
    Ok(IrfSet {
        names: var_names(policy.n),
        scenario: policy.model.as_ref().map(|m| m.scenario),
        shock_sds,
        generalized: false,
        data,
    })
}

/// Generalized impulse response: the average over `draws` simulated
/// histories of the difference between paths with and without an extra
/// impact innovation, holding future innovations fixed.
pub fn girf(
    policy: &PolicySolution,
    shock_sds: f64,
    horizon: usize,
    draws: usize,
    burn_in: usize,
    seed: u64,
) -> Result<IrfSet> {
    let sss = stochastic_steady_state(policy)?;
    let n = policy.n;
    let diffs: Vec<Vec<f64>> = (0..draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(d as u64 + 1);
            let shocks: Vec<f64> = (0..burn_in + horizon + 1).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mut xf = vec![0.0; policy.nx];
            let mut xs = sss.xs.clone();
            for &e in &shocks[..burn_in] {
                let (a, b) = policy.step(&xf, &xs, e);
                xf = a;
                xs = b;
            }
            let mut acc = vec![0.0; (horizon + 1) * n];
            let mut run = |extra: f64, sign: f64| -> Result<()> {
                let mut f: Vec<f64> = xf.iter().zip(policy.eta.iter()).map(|(x, e)| x + e * extra).collect();
                let mut s = xs.clone();
                for h in 0..=horizon {
                    let mut z = policy.observe(&f, &s);
                    finish(policy, &mut z, h)?;
                    for (k, v) in z.iter().enumerate() {
                        acc[h * n + k] += sign * v;
                    }
                    let (a, b) = policy.step(&f, &s, shocks[burn_in + h]);
                    f = a;
                    s = b;
                }
                Ok(())
            };
            run(shock_sds, 1.0)?;
            run(0.0, -1.0)?;
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut mean = vec![0.0; (horizon + 1) * n];
    for d in &diffs {
        for (m, v) in mean.iter_mut().zip(d) {
            *m += v;
        }
    }
    let data = mean.chunks(n).map(|r| r.iter().map(|v| 100.0 * v / draws as f64).collect()).collect();
    Ok(IrfSet {
        names: var_names(n),
        scenario: policy.model.as_ref().map(|m| m.scenario),
        shock_sds,
        generalized: true,
        data,
    })
}

/// Gauss–Hermite nodes and weights for a standard normal, three points.
pub const GH3: [(f64, f64); 3] = [(-1.7320508075688772, 1.0 / 6.0), (0.0, 2.0 / 3.0), (1.7320508075688772, 1.0 / 6.0)];

/// Mean absolute expectational error per equation along a pruned path, with
/// the expectation over next period's innovation taken by quadrature.
pub fn expectation_errors(policy: &PolicySolution, shocks: &[f64]) -> Result<Vec<f64>> {
    let model = policy
        .model
        .as_ref()
        .ok_or_else(|| Error::Config("expectation errors need a model-backed policy".into()))?;
    let sss = stochastic_steady_state(policy)?;
    let n = policy.n;
    let mut sum = vec![0.0; n];
    let mut count = 0usize;
    let mut err: Option<Error> = None;
    run_pruned(policy, &sss.xs, shocks, |_, xf, xs, z| {
        if err.is_some() {
            return;
        }
        let mut expected = vec![0.0; n];
        for (node, w) in GH3 {
            let (nf, ns) = policy.step(xf, xs, node);
            let zn = observe(policy, &nf, &ns);
            let mut out = vec![0.0; n];
            let u = node * model.calib.sigma_eta;
            if let Err(e) = model.residuals(&zn, z, u, &mut out) {
                err = Some(e);
                return;
            }
            for i in 0..n {
                expected[i] += w * out[i];
            }
        }
        for i in 0..n {
            sum[i] += expected[i].abs();
        }
        count += 1;
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(sum.into_iter().map(|s| s / count as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::Calibration;
    use crate::perturbation::solve_policy;
    use crate::steady_state::solve_ss_bau;
    use approx::assert_relative_eq;

    fn bau(order: Order) -> PolicySolution {
        solve_policy(&solve_ss_bau(&Calibration::baseline()).unwrap(), order).unwrap()
    }

    #[test]
    fn linear_policy_sss_is_deterministic_steady_state() {
        let p = bau(Order::First);
        let s = stochastic_steady_state(&p).unwrap();
        assert_eq!(s.values, {
            let mut z = p.ss.clone();
            p.model.as_ref().unwrap().close_identities(&mut z);
            z
        });
    }

    #[test]
    fn bau_sss_has_precautionary_capital() {
        let p = bau(Order::Second);
        let s = stochastic_steady_state(&p).unwrap();
        assert!(s.values[Var::K.idx()] > p.ss[Var::K.idx()]);
    }

    #[test]
    fn same_seed_same_paths() {
        let p = bau(Order::Second);
        let a = simulate_pruned(&p, 2_000, 100, 7).unwrap();
        let b = simulate_pruned(&p, 2_000, 100, 7).unwrap();
        assert!(a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = simulate_pruned(&p, 2_000, 100, 8).unwrap();
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn zero_horizon_is_rejected() {
        assert!(simulate_pruned(&bau(Order::First), 0, 10, 1).is_err());
    }

    #[test]
    fn linear_policy_pruned_equals_unpruned() {
        let p = bau(Order::First);
        let shocks = innovations(3, 500);
        let naive = simulate_unpruned(&p, &shocks);
        let mut k = 0;
        run_pruned(&p, &[0.0; 3], &shocks, |t, _, _, z| {
            assert_eq!(z, naive[t].as_slice());
            k += 1;
        })
        .unwrap();
        assert_eq!(k, 500);
    }

    #[test]
    fn tfp_moments_match_ar1() {
        let p = bau(Order::Second);
        let paths = simulate_pruned(&p, DEFAULT_HORIZON, DEFAULT_BURN_IN, 11).unwrap();
        let a: Vec<f64> = paths.series(Var::LogA.idx()).collect();
        let (m, se) = mean_with_se(&a);
        let (sd, _) = std_with_se(&a);
        assert!(m.abs() < 4.0 * se, "{m} {se}");
        let target = 0.007 / (1.0f64 - 0.95 * 0.95).sqrt();
        assert_relative_eq!(target, 0.02242, epsilon = 1e-5);
        assert_relative_eq!(sd, target, max_relative = 0.02);
    }

    #[test]
    fn zero_shock_irf_is_zero() {
        let p = bau(Order::Second);
        let s = stochastic_steady_state(&p).unwrap();
        let r = irf(&p, &s, 0.0, 20).unwrap();
        assert!(r.data.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn irf_states_fixed_at_impact_and_tfp_decays() {
        let p = bau(Order::First);
        let s = stochastic_steady_state(&p).unwrap();
        let r = irf(&p, &s, 1.0, 200).unwrap();
        assert_eq!(r.data[0][Var::K.idx()], 0.0);
        assert_eq!(r.data[0][Var::X.idx()], 0.0);
        let a = r.path(Var::LogA);
        for h in 0..10 {
            assert_relative_eq!(a[h + 1] / a[h], 0.95, epsilon = 1e-6);
        }
    }

    #[test]
    fn flagged_log_entry_for_non_positive_values() {
        let p = bau(Order::Second);
        let mut paths = simulate_pruned(&p, 500, 10, 1).unwrap();
        paths.scenario = None;
        let r = moments(&paths, 0.05607, 2.8, &p.ss).unwrap();
        let tau = r.log_std("log(tau_t)").unwrap();
        assert!(tau.flag.is_some());
        assert!(tau.value.is_nan());
    }

    #[test]
    fn batch_standard_error_of_iid_mean() {
        let x = innovations(5, 100_000);
        let (m, se) = mean_with_se(&x);
        assert!(m.abs() < 0.02);
        assert_relative_eq!(se, 1.0 / (100_000f64).sqrt(), max_relative = 0.3);
    }
}
