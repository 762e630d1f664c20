//! Variable layout and the equilibrium residual system `F(z', z, u) = 0`.

use std::fmt;

use serde::Serialize;

use crate::calibration::{check_mu, phi_adj, utility, Calibration};
use crate::dual::Real;
use crate::error::{Error, Result};

/// Policy regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Scenario {
    Bau,
    Unconstrained,
    Constrained { xi: f64 },
}

impl Scenario {
    pub fn label(&self, calib: &Calibration) -> String {
        match *self {
            Scenario::Bau => "BAU".into(),
            Scenario::Unconstrained => "Unconstrained".into(),
            Scenario::Constrained { xi } => {
                if xi == calib.gamma && xi != 0.0 && xi != 1.0 {
                    "Constrained(xi=gamma)".into()
                } else {
                    format!("Constrained(xi={xi})")
                }
            }
        }
    }

    pub fn is_planner(&self) -> bool {
        !matches!(self, Scenario::Bau)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::Bau => write!(f, "bau"),
            Scenario::Unconstrained => write!(f, "unconstrained"),
            Scenario::Constrained { xi } => write!(f, "constrained:{xi}"),
        }
    }
}

macro_rules! variables {
    ($($name:ident => $label:literal),* $(,)?) => {
        /// Model variables. The first [`NX`] are predetermined states.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        #[repr(usize)]
        pub enum Var { $($name),* }

        impl Var {
            pub const ALL: [Var; NV] = [$(Var::$name),*];
            pub const fn name(self) -> &'static str {
                match self { $(Var::$name => $label),* }
            }
        }
    };
}

pub const NV: usize = 27;
pub const NX: usize = 3;

variables! {
    K => "K", X => "X", LogA => "logA",
    Y => "Y", C => "C", CH => "CH", CS => "CS", I => "I", W => "W", D => "D",
    E => "E", Mu => "mu", Tau => "tau", LamS => "lambdaS", LamH => "lambdaH",
    VE => "VE", VX => "VX", Q => "Q", Rho => "rho", T => "T", TH => "TH", TS => "TS",
    UH => "UH", US => "US", Wel => "Wel", Pb => "Pb", Ps => "Ps",
}

impl Var {
    pub const fn idx(self) -> usize {
        self as usize
    }

    pub fn from_name(name: &str) -> Option<Var> {
        Var::ALL.iter().copied().find(|v| v.name() == name)
    }
}

/// Names of the residual rows, in row order.
pub fn equation_names(scenario: Scenario) -> [&'static str; NV] {
    let (htm, abatement, tax, emissions) = match scenario {
        Scenario::Bau => ("htm_budget", "no_abatement", "zero_tax", "emissions_price"),
        Scenario::Unconstrained => (
            "consumption_equalization",
            "abatement_foc",
            "tax_equals_scc",
            "emissions_foc",
        ),
        Scenario::Constrained { .. } => ("htm_budget", "abatement_foc", "tax_rule", "emissions_foc"),
    };
    [
        "ghg_law",
        "capital_law",
        "tfp_law",
        "production",
        "emissions",
        "resource",
        "consumption_aggregation",
        htm,
        "government_budget",
        "transfer_aggregation",
        "transfer_rule",
        "saver_marginal_utility",
        "marginal_utility_gap",
        "output_foc",
        "labor_foc",
        "investment_foc",
        "capital_euler",
        abatement,
        tax,
        emissions,
        "scc",
        "dividends",
        "htm_value",
        "saver_value",
        "welfare",
        "bond_price",
        "stock_price",
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct VariableLayout {
    pub variables: Vec<&'static str>,
    pub equations: Vec<&'static str>,
    pub n_states: usize,
}

impl VariableLayout {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| *v == name)
    }
}

pub fn variable_layout(scenario: Scenario) -> VariableLayout {
    VariableLayout {
        variables: Var::ALL.iter().map(|v| v.name()).collect(),
        equations: equation_names(scenario).to_vec(),
        n_states: NX,
    }
}

/// Scenario-specific model ready for evaluation.
#[derive(Debug, Clone)]
pub struct Model {
    pub scenario: Scenario,
    pub calib: Calibration,
}

impl Model {
    pub fn new(scenario: Scenario, calib: Calibration) -> Result<Self> {
        calib.validate()?;
        if let Scenario::Constrained { xi } = scenario {
            if !(0.0..=1.0).contains(&xi) {
                return Err(Error::Validation { field: "xi", reason: format!("{xi} outside [0, 1]") });
            }
            if calib.gamma <= 0.0 {
                return Err(Error::Validation {
                    field: "gamma",
                    reason: "constrained planner requires gamma > 0".into(),
                });
            }
        }
        Ok(Self { scenario, calib })
    }

    pub fn layout(&self) -> VariableLayout {
        variable_layout(self.scenario)
    }

    /// Transfer share to hand-to-mouth households relative to their
    /// population share, `ξ/γ`; zero outside the constrained regime.
    pub fn xi_over_gamma(&self) -> f64 {
        match self.scenario {
            Scenario::Constrained { xi } => xi / self.calib.gamma,
            _ => 0.0,
        }
    }

    /// Evaluates all residuals. `zn` is next period, `z` current period and
    /// `u` the TFP innovation realised between them.
    pub fn residuals<R: Real>(&self, zn: &[R], z: &[R], u: R, out: &mut [R]) -> Result<()> {
        use Var::*;
        debug_assert!(zn.len() == NV && z.len() == NV && out.len() == NV);
        let p = &self.calib;
        let g = |v: Var| z[v.idx()];
        let gn = |v: Var| zn[v.idx()];

        let sh = g(CH) - g(X) * p.chi;
        let ss = g(CS) - g(X) * p.chi;
        let ssn = gn(CS) - gn(X) * p.chi;
        for (agent, s) in [("hand-to-mouth", sh.re()), ("saver", ss.re()), ("saver", ssn.re())] {
            if !(s > 0.0) {
                return Err(Error::UtilityDomain { agent, surplus: s });
            }
        }
        check_mu(g(Mu).re())?;
        let ik = g(I) / g(K);
        let ikn = gn(I) / gn(K);
        if !(ik.re() > 0.0) || !(ikn.re() > 0.0) {
            return Err(Error::Domain { what: "investment-capital ratio", value: ik.re() });
        }
        if !(g(K).re() > 0.0) || !(g(Y).re() > 0.0) {
            return Err(Error::Domain { what: "capital or output", value: g(K).re().min(g(Y).re()) });
        }

        let f_mu = g(Mu).powf(p.theta2) * p.theta1;
        let sdf = gn(LamS) / g(LamS) * p.beta;
        let xg = self.xi_over_gamma();
        let tau_e = g(Tau) * g(E);
        let n_lab = p.n;

        out[0] = gn(X) - (g(X) * p.eta_pollution + g(E));
        out[1] = gn(K) - (g(K) * (1.0 - p.delta) + phi_adj(ik, p) * g(K));
        out[2] = gn(LogA) - (g(LogA) * p.rho_a + u);
        out[3] = g(Y) - g(LogA).exp() * g(K).powf(p.alpha) * (p.a * n_lab.powf(1.0 - p.alpha));
        out[4] = g(E) - (R::cst(1.0) - g(Mu)) * g(Y).powf(1.0 - p.phi2) * p.phi1;
        out[5] = g(Y) - g(C) - g(I) - f_mu * g(Y);
        out[6] = g(C) - g(CH) * p.gamma - g(CS) * (1.0 - p.gamma);
        out[7] = match self.scenario {
            Scenario::Unconstrained => g(CH) - g(CS),
            _ => g(CH) - (g(W) * n_lab + g(TH)),
        };
        out[8] = tau_e - g(T);
        out[9] = g(T) - g(TH) * p.gamma - g(TS) * (1.0 - p.gamma);
        out[10] = g(TH)
            - match self.scenario {
                Scenario::Bau => tau_e,
                Scenario::Unconstrained => tau_e + g(D),
                Scenario::Constrained { .. } => tau_e * xg,
            };
        out[11] = g(LamS) - ss.powf(-p.sigma);
        out[12] = g(LamH) - (sh.powf(-p.sigma) - g(LamS)) / g(LamS) * p.gamma;
        out[13] = g(Rho) - (R::cst(1.0) - f_mu - g(VE) * g(E) / g(Y) * (1.0 - p.phi2));
        out[14] = g(W) - g(Rho) * g(Y) * ((1.0 - p.alpha) / n_lab);
        out[15] = g(Q) * ik.powf(-p.eps_adj) * p.b1 - 1.0;
        let payoff = gn(Rho) * gn(Y) / gn(K) * p.alpha
            + gn(Q) * (phi_adj(ikn, p) + (1.0 - p.delta) - ikn.powf(1.0 - p.eps_adj) * p.b1);
        out[16] = g(Q) - sdf * payoff;
        out[17] = match self.scenario {
            Scenario::Bau => g(Mu),
            _ => {
                let df = g(Mu).powf(p.theta2 - 1.0) * (p.theta1 * p.theta2);
                g(VE) * g(E) / (R::cst(1.0) - g(Mu)) - df * g(Y)
            }
        };
        out[18] = match self.scenario {
            Scenario::Bau => g(Tau),
            Scenario::Unconstrained => g(Tau) - g(VX),
            Scenario::Constrained { .. } => g(Tau) - g(VX) / (g(LamH) * xg + 1.0),
        };
        out[19] = match self.scenario {
            Scenario::Bau => g(VE) - g(Tau),
            Scenario::Unconstrained => g(VE) - g(VX),
            Scenario::Constrained { .. } => g(VE) - (g(VX) - g(LamH) * g(Tau) * xg),
        };
        let damage = match self.scenario {
            Scenario::Unconstrained => R::cst(p.chi),
            _ => (gn(LamH) + 1.0) * p.chi,
        };
        out[20] = g(VX) - sdf * (gn(VX) * p.eta_pollution + damage);
        out[21] = g(D) - (g(Y) - g(W) * n_lab - g(I) - f_mu * g(Y) - tau_e);
        out[22] = g(UH) - (utility(sh, p.sigma) + gn(UH) * p.beta);
        out[23] = g(US) - (utility(ss, p.sigma) + gn(US) * p.beta);
        out[24] = g(Wel) - (g(UH) * p.gamma + g(US) * (1.0 - p.gamma));
        out[25] = g(Pb) - sdf;
        out[26] = g(Ps) - sdf * (gn(D) + gn(Ps));
        Ok(())
    }

    /// Recomputes the tax and transfer slots from their defining identities
    /// so that the government budget, transfer aggregation, transfer rule and
    /// tax rule hold exactly at `z`.
    pub fn close_identities(&self, z: &mut [f64]) {
        use Var::*;
        let p = &self.calib;
        let tau = match self.scenario {
            Scenario::Bau => 0.0,
            Scenario::Unconstrained => z[VX.idx()],
            Scenario::Constrained { .. } => z[VX.idx()] / (1.0 + self.xi_over_gamma() * z[LamH.idx()]),
        };
        let t = tau * z[E.idx()];
        let th = match self.scenario {
            Scenario::Bau => t,
            Scenario::Unconstrained => t + z[D.idx()],
            Scenario::Constrained { .. } => self.xi_over_gamma() * t,
        };
        z[Tau.idx()] = tau;
        z[T.idx()] = t;
        z[TH.idx()] = th;
        z[TS.idx()] = (t - p.gamma * th) / (1.0 - p.gamma);
    }

    /// Residuals at a point repeated in both periods with zero innovation.
    pub fn static_residuals(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; NV];
        self.residuals(z, z, 0.0, &mut out)?;
        Ok(out)
    }
}

/// Residual of the saver budget constraint, which the system omits.
///
/// With one unit of equity held by savers in aggregate and bonds in zero net
/// supply the constraint reduces to `W N + D/(1-γ) + T^S - C^S = 0`.
pub fn saver_budget_residual(z: &[f64], calib: &Calibration) -> f64 {
    use Var::*;
    z[W.idx()] * calib.n + z[D.idx()] / (1.0 - calib.gamma) + z[TS.idx()] - z[CS.idx()]
}
