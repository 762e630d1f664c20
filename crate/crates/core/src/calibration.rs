//! Structural parameters, presets and the scalar building blocks shared by
//! the residual system and the steady-state solvers.

use serde::Serialize;

use crate::dual::Real;
use crate::error::{Error, Result};

/// Names accepted by [`build_calibration`].
pub const PRESETS: [&str; 7] = [
    "baseline",
    "gamma_low",
    "gamma_high",
    "theta1_high",
    "sigma_low",
    "chi_high",
    "eps_high",
];

/// Parameter names accepted as overrides.
pub const PARAMETERS: [&str; 15] = [
    "gamma",
    "beta",
    "sigma",
    "chi",
    "alpha",
    "delta",
    "eps_adj",
    "rho_a",
    "sigma_eta",
    "eta_pollution",
    "theta1",
    "theta2",
    "phi1",
    "phi2",
    "xi",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub gamma: f64,
    pub beta: f64,
    pub sigma: f64,
    pub chi: f64,
    pub alpha: f64,
    pub delta: f64,
    pub eps_adj: f64,
    pub rho_a: f64,
    pub sigma_eta: f64,
    pub eta_pollution: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub phi1: f64,
    pub phi2: f64,
    /// Default share of tax revenue rebated to hand-to-mouth households.
    pub xi: f64,
    /// TFP shifter, anchored so that BAU steady-state output is one.
    pub a: f64,
    pub b1: f64,
    pub b2: f64,
    pub n: f64,
}

impl Calibration {
    pub fn baseline() -> Self {
        let mut c = Calibration {
            gamma: 0.20,
            beta: 0.98267,
            sigma: 4.199,
            chi: 4e-4,
            alpha: 0.36,
            delta: 0.025,
            eps_adj: 0.0,
            rho_a: 0.95,
            sigma_eta: 0.007,
            eta_pollution: 0.9979,
            theta1: 0.05607,
            theta2: 2.8,
            phi1: 1.0,
            phi2: 0.304,
            xi: 0.20,
            a: 0.0,
            b1: 0.0,
            b2: 0.0,
            n: 1.0,
        };
        c.refresh_derived();
        c
    }

    /// BAU steady-state capital, which pins down `A`.
    pub fn k_bau(&self) -> f64 {
        self.alpha / (1.0 / self.beta - 1.0 + self.delta)
    }

    fn refresh_derived(&mut self) {
        let k = self.k_bau();
        self.a = 1.0 / (self.n.powf(1.0 - self.alpha) * k.powf(self.alpha));
        self.b1 = self.delta.powf(self.eps_adj);
        self.b2 = -self.delta * self.eps_adj / (1.0 - self.eps_adj);
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        Ok(match name {
            "gamma" => self.gamma,
            "beta" => self.beta,
            "sigma" => self.sigma,
            "chi" => self.chi,
            "alpha" => self.alpha,
            "delta" => self.delta,
            "eps_adj" => self.eps_adj,
            "rho_a" => self.rho_a,
            "sigma_eta" => self.sigma_eta,
            "eta_pollution" => self.eta_pollution,
            "theta1" => self.theta1,
            "theta2" => self.theta2,
            "phi1" => self.phi1,
            "phi2" => self.phi2,
            "xi" => self.xi,
            other => return Err(Error::UnknownParameter(other.to_string())),
        })
    }

    fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let slot = match name {
            "gamma" => &mut self.gamma,
            "beta" => &mut self.beta,
            "sigma" => &mut self.sigma,
            "chi" => &mut self.chi,
            "alpha" => &mut self.alpha,
            "delta" => &mut self.delta,
            "eps_adj" => &mut self.eps_adj,
            "rho_a" => &mut self.rho_a,
            "sigma_eta" => &mut self.sigma_eta,
            "eta_pollution" => &mut self.eta_pollution,
            "theta1" => &mut self.theta1,
            "theta2" => &mut self.theta2,
            "phi1" => &mut self.phi1,
            "phi2" => &mut self.phi2,
            "xi" => &mut self.xi,
            other => return Err(Error::UnknownParameter(other.to_string())),
        };
        *slot = value;
        Ok(())
    }

    /// Returns a copy with one parameter replaced and derived constants
    /// recomputed.
    pub fn with(&self, name: &str, value: f64) -> Result<Self> {
        let mut c = self.clone();
        c.set(name, value)?;
        c.refresh_derived();
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, field: &'static str, reason: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::Validation { field, reason: reason.to_string() })
            }
        }
        check((0.0..1.0).contains(&self.gamma), "gamma", "must satisfy 0 <= gamma < 1")?;
        check(self.beta > 0.0 && self.beta < 1.0, "beta", "must lie in (0, 1)")?;
        check(self.sigma > 0.0, "sigma", "must be positive")?;
        check(self.chi >= 0.0, "chi", "must be non-negative")?;
        check(self.alpha > 0.0 && self.alpha < 1.0, "alpha", "must lie in (0, 1)")?;
        check(self.delta > 0.0 && self.delta < 1.0, "delta", "must lie in (0, 1)")?;
        check(self.eps_adj >= 0.0, "eps_adj", "must be non-negative")?;
        check(self.eps_adj != 1.0, "eps_adj", "eps_adj = 1 is not supported")?;
        check(self.rho_a.abs() < 1.0, "rho_a", "must satisfy |rho_a| < 1")?;
        check(self.sigma_eta >= 0.0, "sigma_eta", "must be non-negative")?;
        check(
            self.eta_pollution > 0.0 && self.eta_pollution < 1.0,
            "eta_pollution",
            "must lie in (0, 1)",
        )?;
        check(self.theta1 > 0.0, "theta1", "must be positive")?;
        check(self.theta2 > 1.0, "theta2", "must exceed 1")?;
        check(self.phi1 > 0.0, "phi1", "must be positive")?;
        check(self.phi2 >= 0.0 && self.phi2 < 1.0, "phi2", "must lie in [0, 1)")?;
        check((0.0..=1.0).contains(&self.xi), "xi", "must lie in [0, 1]")?;
        check(self.n > 0.0, "n", "must be positive")?;
        let finite = [self.gamma, self.beta, self.sigma, self.chi, self.alpha, self.delta]
            .iter()
            .chain([self.rho_a, self.sigma_eta, self.theta1, self.theta2, self.phi1].iter())
            .all(|v| v.is_finite());
        check(finite, "calibration", "all parameters must be finite")
    }
}

/// Builds a calibration from a named preset and a list of overrides.
///
/// The preset `xi` follows `gamma` unless `xi` is overridden explicitly.
pub fn build_calibration(preset: &str, overrides: &[(&str, f64)]) -> Result<Calibration> {
    let mut c = Calibration::baseline();
    match preset {
        "baseline" => {}
        "gamma_low" => c.gamma = 0.11,
        "gamma_high" => c.gamma = 0.33,
        "theta1_high" => c.theta1 = 0.05607 * 3.5,
        "sigma_low" => c.sigma = 2.0,
        "chi_high" => c.chi = 8.7360e-4,
        "eps_high" => c.eps_adj = 1.5,
        other => return Err(Error::UnknownPreset(other.to_string())),
    }
    c.xi = c.gamma;
    let mut xi_set = false;
    for &(name, value) in overrides {
        c.set(name, value)?;
        xi_set |= name == "xi";
    }
    if !xi_set {
        c.xi = c.gamma;
    }
    c.refresh_derived();
    c.validate()?;
    Ok(c)
}

/// Capital adjustment function `Φ(I/K)` and its slope.
pub fn adjustment_cost(i_over_k: f64, calib: &Calibration) -> Result<(f64, f64)> {
    if calib.eps_adj == 1.0 {
        return Err(Error::UnsupportedCurvature);
    }
    if !(i_over_k > 0.0) {
        return Err(Error::Domain { what: "investment-capital ratio", value: i_over_k });
    }
    if calib.eps_adj == 0.0 {
        return Ok((i_over_k, 1.0));
    }
    Ok((phi_adj(i_over_k, calib), calib.b1 * i_over_k.powf(-calib.eps_adj)))
}

/// Abatement cost share `f(μ)` and marginal cost `f'(μ)`.
pub fn abatement_cost(mu: f64, calib: &Calibration) -> Result<(f64, f64)> {
    check_mu(mu)?;
    if mu == 0.0 {
        return Ok((0.0, 0.0));
    }
    Ok((
        calib.theta1 * mu.powf(calib.theta2),
        calib.theta1 * calib.theta2 * mu.powf(calib.theta2 - 1.0),
    ))
}

/// Marginal disutility of the GHG stock, `u_X = -χ (C - χX)^{-σ}`.
pub fn marginal_disutility(c: f64, x: f64, calib: &Calibration) -> Result<f64> {
    let s = surplus(c, x, calib, "household")?;
    Ok(-calib.chi * s.powf(-calib.sigma))
}

/// Weighted relative gap between hand-to-mouth and saver marginal utility.
pub fn marginal_utility_gap(ch: f64, cs: f64, x: f64, calib: &Calibration) -> Result<f64> {
    let sh = surplus(ch, x, calib, "hand-to-mouth")?;
    let ss = surplus(cs, x, calib, "saver")?;
    let ls = ss.powf(-calib.sigma);
    Ok(calib.gamma * (sh.powf(-calib.sigma) - ls) / ls)
}

/// Effective relative risk aversion `σ / (1 - χX/C)`.
pub fn effective_rra(c: f64, x: f64, calib: &Calibration) -> Result<f64> {
    let s = c - calib.chi * x;
    if !(s > 0.0) {
        return Err(Error::Domain { what: "consumption net of externality", value: s });
    }
    Ok(calib.sigma / (1.0 - calib.chi * x / c))
}

/// Period utility of surplus consumption.
pub fn utility<T: Real>(surplus: T, sigma: f64) -> T {
    if sigma == 1.0 {
        surplus.ln()
    } else {
        surplus.powf(1.0 - sigma) / (1.0 - sigma)
    }
}

pub(crate) fn phi_adj<T: Real>(i_over_k: T, calib: &Calibration) -> T {
    let e = calib.eps_adj;
    i_over_k.powf(1.0 - e) * (calib.b1 / (1.0 - e)) + calib.b2
}

pub(crate) fn check_mu(mu: f64) -> Result<()> {
    if (0.0..=1.0).contains(&mu) {
        Ok(())
    } else {
        Err(Error::Domain { what: "abatement share mu", value: mu })
    }
}

pub(crate) fn surplus(c: f64, x: f64, calib: &Calibration, agent: &'static str) -> Result<f64> {
    let s = c - calib.chi * x;
    if s > 0.0 {
        Ok(s)
    } else {
        Err(Error::UtilityDomain { agent, surplus: s })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn baseline_matches_table_values() {
        let c = build_calibration("baseline", &[]).unwrap();
        assert_eq!(c.gamma, 0.20);
        assert_eq!(c.beta, 0.98267);
        assert_eq!(c.sigma, 4.199);
        assert_eq!(c.chi, 4e-4);
        assert_eq!(c.eta_pollution, 0.9979);
        assert_eq!(c.theta1, 0.05607);
        assert_eq!(c.theta2, 2.8);
        assert_eq!((c.phi1, c.phi2), (1.0, 0.304));
        assert_eq!((c.alpha, c.delta, c.eps_adj), (0.36, 0.025, 0.0));
        assert_eq!((c.rho_a, c.sigma_eta), (0.95, 0.007));
        assert_eq!((c.b1, c.b2), (1.0, 0.0));
        assert_relative_eq!(c.a * c.k_bau().powf(c.alpha), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn override_keeps_the_rest() {
        let base = build_calibration("baseline", &[]).unwrap();
        let c = build_calibration("baseline", &[("gamma", 0.11)]).unwrap();
        assert_eq!(c.gamma, 0.11);
        assert_eq!(c.xi, 0.11);
        assert_eq!(c.beta, base.beta);
        assert_eq!(c.a, base.a);
        let low = build_calibration("gamma_low", &[]).unwrap();
        assert_eq!(low, c);
    }

    #[test]
    fn invalid_gamma_names_the_field() {
        match build_calibration("baseline", &[("gamma", 1.2)]) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "gamma"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_names_are_rejected() {
        assert!(matches!(build_calibration("nope", &[]), Err(Error::UnknownPreset(_))));
        assert!(matches!(
            build_calibration("baseline", &[("kappa", 1.0)]),
            Err(Error::UnknownParameter(_))
        ));
        match build_calibration("baseline", &[("eps_adj", 1.0)]) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "eps_adj"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn presets_change_one_parameter() {
        let base = Calibration::baseline();
        let cases = [
            ("gamma_high", "gamma", 0.33),
            ("theta1_high", "theta1", 0.05607 * 3.5),
            ("sigma_low", "sigma", 2.0),
            ("chi_high", "chi", 8.7360e-4),
            ("eps_high", "eps_adj", 1.5),
        ];
        for (preset, field, value) in cases {
            let c = build_calibration(preset, &[]).unwrap();
            assert_eq!(c.get(field).unwrap(), value, "{preset}");
            for p in PARAMETERS.iter().filter(|p| **p != field && **p != "xi") {
                assert_eq!(c.get(p).unwrap(), base.get(p).unwrap(), "{preset}.{p}");
            }
        }
    }

    #[test]
    fn adjustment_cost_identity_at_zero_curvature() {
        let c = Calibration::baseline();
        assert_eq!(adjustment_cost(0.4, &c).unwrap(), (0.4, 1.0));
    }

    #[test]
    fn adjustment_cost_normalised_at_depreciation() {
        let c = build_calibration("eps_high", &[]).unwrap();
        let (phi, dphi) = adjustment_cost(0.025, &c).unwrap();
        assert_relative_eq!(phi, 0.025, max_relative = 1e-13);
        assert_relative_eq!(dphi, 1.0, max_relative = 1e-13);
    }

    #[test]
    fn adjustment_cost_slope_matches_finite_difference() {
        let c = build_calibration("eps_high", &[]).unwrap();
        let h = 1e-6;
        let (_, dphi) = adjustment_cost(0.05, &c).unwrap();
        let up = adjustment_cost(0.05 + h, &c).unwrap().0;
        let dn = adjustment_cost(0.05 - h, &c).unwrap().0;
        assert_relative_eq!(dphi, (up - dn) / (2.0 * h), max_relative = 1e-8);
    }

    #[test]
    fn adjustment_cost_errors() {
        let c = Calibration::baseline();
        assert!(matches!(adjustment_cost(0.0, &c), Err(Error::Domain { .. })));
        let mut bad = c.clone();
        bad.eps_adj = 1.0;
        assert!(matches!(adjustment_cost(0.1, &bad), Err(Error::UnsupportedCurvature)));
    }

    #[test]
    fn abatement_cost_values() {
        let c = Calibration::baseline();
        assert_eq!(abatement_cost(0.0, &c).unwrap(), (0.0, 0.0));
        let (f, df) = abatement_cost(1.0, &c).unwrap();
        assert_relative_eq!(f, 0.05607, max_relative = 1e-15);
        assert_relative_eq!(df, 0.05607 * 2.8, max_relative = 1e-15);
        assert_relative_eq!(df, 0.1570, epsilon = 5e-5);
        let (_, df) = abatement_cost(0.322, &c).unwrap();
        // 0.322 is the rounded unconstrained abatement share
        assert_relative_eq!(df, 0.02033, max_relative = 1e-2);
        assert!(matches!(abatement_cost(1.01, &c), Err(Error::Domain { .. })));
        assert!(matches!(abatement_cost(-0.1, &c), Err(Error::Domain { .. })));
    }

    #[test]
    fn risk_aversion_footnote_values() {
        let c = Calibration::baseline();
        assert_relative_eq!(effective_rra(0.8261, 476.19, &c).unwrap(), 5.46, epsilon = 0.005);
        assert_relative_eq!(effective_rra(0.6400, 476.19, &c).unwrap(), 5.98, epsilon = 0.005);
        assert_eq!(effective_rra(0.7, 0.0, &c).unwrap(), c.sigma);
        assert!(effective_rra(0.1, 476.19, &c).is_err());
    }

    #[test]
    fn gap_is_zero_at_equal_consumption() {
        let c = Calibration::baseline();
        assert_eq!(marginal_utility_gap(0.7, 0.7, 300.0, &c).unwrap(), 0.0);
        assert!(marginal_utility_gap(0.6, 0.8, 300.0, &c).unwrap() > 0.0);
    }
}
