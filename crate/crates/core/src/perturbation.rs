//! First- and second-order perturbation around the deterministic steady
//! state.
//!
//! The system is `E_t F(z_{t+1}, z_t, u_{t+1}) = 0` with the states `x` in
//! the first `nx` slots of `z` and the controls `y` in the rest. The solution
//! takes the form
//!
//! ```text
//! x' = x̄ + hx x̂ + ½ hxx[x̂, x̂] + ½ hss + η ε'
//! y  = ȳ + gx x̂ + ½ gxx[x̂, x̂] + ½ gss
//! ```
//!
//! with `ε` standard normal. Derivatives come from hyper-dual evaluation of
//! the residuals, the linear part from an ordered QZ decomposition and the
//! quadratic part from the linear systems implied by differentiating the
//! equilibrium conditions twice.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::dual::HyperDual;
use crate::error::{Error, Result};
use crate::linalg::{qz_ordered, UNIT_CIRCLE_THRESHOLD};
use crate::model::Model;
use crate::steady_state::SteadyState;

/// First and second derivatives of the residuals with respect to the
/// stacked arguments `[z_next, z_curr, u]`.
#[derive(Debug, Clone)]
pub struct DerivativeBundle {
    pub n: usize,
    pub nx: usize,
    pub point: Vec<f64>,
    pub equations: Vec<String>,
    /// Standard deviation of the innovation `u`.
    pub shock_scale: f64,
    /// `n × (2n+1)` Jacobian.
    pub f1: DMatrix<f64>,
    /// One `(2n+1) × (2n+1)` Hessian per equation.
    pub f2: Vec<DMatrix<f64>>,
}

impl DerivativeBundle {
    pub fn n_args(&self) -> usize {
        2 * self.n + 1
    }

    /// `F_{z'}`.
    pub fn f_next(&self) -> DMatrix<f64> {
        self.f1.columns(0, self.n).into_owned()
    }

    /// `F_z`.
    pub fn f_curr(&self) -> DMatrix<f64> {
        self.f1.columns(self.n, self.n).into_owned()
    }

    /// `F_u`.
    pub fn f_shock(&self) -> DVector<f64> {
        self.f1.column(2 * self.n).into_owned()
    }

    /// Largest absolute asymmetry across all Hessian slices.
    pub fn max_asymmetry(&self) -> f64 {
        self.f2.iter().map(|h| (h - h.transpose()).amax()).fold(0.0, f64::max)
    }

    /// Same bundle with every second derivative set to zero.
    pub fn without_curvature(&self) -> Self {
        let m = self.n_args();
        Self { f2: vec![DMatrix::zeros(m, m); self.n], ..self.clone() }
    }
}

/// Differentiates an arbitrary residual function at `(point, point, 0)`.
///
/// `f(z_next, z_curr, u, out)` must be pure. Every entry of the Hessian grid
/// is computed from its own hyper-dual evaluation so that symmetry is an
/// outcome rather than an assumption.
pub fn differentiate<F>(
    point: &[f64],
    nx: usize,
    equations: Vec<String>,
    shock_scale: f64,
    f: F,
) -> Result<DerivativeBundle>
where
    F: Fn(&[HyperDual], &[HyperDual], HyperDual, &mut [HyperDual]) -> Result<()> + Sync,
{
    let n = point.len();
    let m = 2 * n + 1;
    let base: Vec<HyperDual> = point
        .iter()
        .chain(point.iter())
        .chain(std::iter::once(&0.0))
        .map(|&v| HyperDual::constant(v))
        .collect();
    // column p: first derivatives and the Hessian row for argument p
    let columns: Vec<(Vec<f64>, Vec<Vec<f64>>)> = (0..m)
        .into_par_iter()
        .map(|p| {
            let mut args = base.clone();
            let mut out = vec![HyperDual::default(); n];
            let mut d1 = Vec::new();
            let mut rows = Vec::with_capacity(m);
            for q in 0..m {
                args[p].e1 = 1.0;
                args[q].e2 = 1.0;
                let res = f(&args[..n], &args[n..2 * n], args[2 * n], &mut out);
                args[p].e1 = 0.0;
                args[q].e2 = 0.0;
                res?;
                if q == p {
                    d1 = out.iter().map(|r| r.e1).collect();
                }
                rows.push(out.iter().map(|r| r.e12).collect());
            }
            Ok((d1, rows))
        })
        .collect::<Result<_>>()?;

    let mut f1 = DMatrix::zeros(n, m);
    let mut f2 = vec![DMatrix::zeros(m, m); n];
    for (p, (d1, rows)) in columns.iter().enumerate() {
        for (q, e12) in rows.iter().enumerate() {
            for i in 0..n {
                f2[i][(p, q)] = e12[i];
            }
        }
        for i in 0..n {
            f1[(i, p)] = d1[i];
        }
    }
    for i in 0..n {
        let finite = f1.row(i).iter().all(|v| v.is_finite()) && f2[i].iter().all(|v| v.is_finite());
        if !finite {
            let name = equations.get(i).cloned().unwrap_or_else(|| format!("row {i}"));
            return Err(Error::Singularity { equation: leak(name) });
        }
    }
    Ok(DerivativeBundle { n, nx, point: point.to_vec(), equations, shock_scale, f1, f2 })
}

fn leak(s: String) -> &'static str {
    Box::leak(s.into_boxed_str())
}

/// Differentiates the model residuals at a certified steady state.
pub fn differentiate_system(ss: &SteadyState) -> Result<DerivativeBundle> {
    let model = ss.model();
    let names = model.layout().equations.iter().map(|s| s.to_string()).collect();
    differentiate(&ss.values, crate::model::NX, names, model.calib.sigma_eta, |zn, z, u, out| {
        model.residuals(zn, z, u, out)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Order {
    First,
    Second,
}

impl Order {
    pub fn from_int(k: u8) -> Option<Order> {
        match k {
            1 => Some(Order::First),
            2 => Some(Order::Second),
            _ => None,
        }
    }
}

/// Perturbation solution. Second-order members are zero for a first-order
/// solution.
#[derive(Debug, Clone)]
pub struct PolicySolution {
    pub n: usize,
    pub nx: usize,
    pub ss: Vec<f64>,
    pub hx: DMatrix<f64>,
    pub gx: DMatrix<f64>,
    pub hxx: Vec<DMatrix<f64>>,
    pub gxx: Vec<DMatrix<f64>>,
    pub hss: DVector<f64>,
    pub gss: DVector<f64>,
    /// Loading of a unit innovation on the states.
    pub eta: DVector<f64>,
    pub eigenvalues: Vec<(f64, f64)>,
    pub n_stable: usize,
    /// Indices of eigenvalues within `1e-8` of the unit circle.
    pub borderline: Vec<usize>,
    pub order: Order,
    /// Model the solution belongs to, if any.
    pub model: Option<Model>,
}

impl PolicySolution {
    pub fn ny(&self) -> usize {
        self.n - self.nx
    }

    /// Solution with the second-order terms removed.
    pub fn truncated(&self) -> Self {
        let nx = self.nx;
        Self {
            hxx: vec![DMatrix::zeros(nx, nx); nx],
            gxx: vec![DMatrix::zeros(nx, nx); self.ny()],
            hss: DVector::zeros(nx),
            gss: DVector::zeros(self.ny()),
            order: Order::First,
            ..self.clone()
        }
    }

    /// Solution without the uncertainty corrections, i.e. the second-order
    /// approximation to the deterministic model.
    pub fn deterministic(&self) -> Self {
        Self { hss: DVector::zeros(self.nx), gss: DVector::zeros(self.ny()), ..self.clone() }
    }

    /// Full variable vector implied by first- and second-order state
    /// registers (deviations from the steady state).
    pub fn observe(&self, xf: &[f64], xs: &[f64]) -> Vec<f64> {
        let nx = self.nx;
        let mut z = self.ss.clone();
        let xt: Vec<f64> = (0..nx).map(|j| xf[j] + xs[j]).collect();
        for j in 0..nx {
            z[j] += xt[j];
        }
        for v in 0..self.ny() {
            let mut acc = 0.0;
            for j in 0..nx {
                acc += self.gx[(v, j)] * xt[j];
            }
            if self.order == Order::Second {
                acc += 0.5 * quad(&self.gxx[v], xf) + 0.5 * self.gss[v];
            }
            z[nx + v] += acc;
        }
        z
    }

    /// Advances the pruned state registers by one period.
    pub fn step(&self, xf: &[f64], xs: &[f64], eps: f64) -> (Vec<f64>, Vec<f64>) {
        let nx = self.nx;
        let mut nf = vec![0.0; nx];
        let mut ns = vec![0.0; nx];
        for a in 0..nx {
            let (mut f, mut s) = (self.eta[a] * eps, 0.0);
            for j in 0..nx {
                f += self.hx[(a, j)] * xf[j];
                s += self.hx[(a, j)] * xs[j];
            }
            if self.order == Order::Second {
                s += 0.5 * quad(&self.hxx[a], xf) + 0.5 * self.hss[a];
            }
            nf[a] = f;
            ns[a] = s;
        }
        (nf, ns)
    }
}

fn quad(m: &DMatrix<f64>, x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            acc += m[(i, j)] * x[i] * x[j];
        }
    }
    acc
}

/// Loading of the innovation on the states, read off the state-law rows.
fn shock_loading(bundle: &DerivativeBundle) -> Result<DVector<f64>> {
    let (n, nx) = (bundle.n, bundle.nx);
    let a = bundle.f_next();
    let fu = bundle.f_shock();
    let mut eta = DVector::zeros(nx);
    for i in 0..n {
        if fu[i] == 0.0 {
            continue;
        }
        let nonzero: Vec<usize> = (0..n).filter(|&k| a[(i, k)] != 0.0).collect();
        match nonzero.as_slice() {
            [j] if *j < nx => eta[*j] = -fu[i] / a[(i, *j)] * bundle.shock_scale,
            _ => {
                return Err(Error::LinearAlgebra(format!(
                    "innovation enters equation `{}`, which is not a state law",
                    bundle.equations.get(i).map(String::as_str).unwrap_or("?")
                )))
            }
        }
    }
    Ok(eta)
}

/// Linear policy from the ordered QZ decomposition of `(−F_z, F_{z'})`.
pub fn solve_first_order(bundle: &DerivativeBundle) -> Result<PolicySolution> {
    let (n, nx) = (bundle.n, bundle.nx);
    let ny = n - nx;
    let a = bundle.f_next();
    let b = -bundle.f_curr();
    let qz = qz_ordered(&b, &a)?;
    let borderline: Vec<usize> = qz
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, (re, im))| {
            let m = re.hypot(*im);
            m.is_finite() && (m - 1.0).abs() < 1.0 - UNIT_CIRCLE_THRESHOLD
        })
        .map(|(k, _)| k)
        .collect();
    if qz.n_stable != nx {
        return Err(Error::BlanchardKahn { stable: qz.n_stable, states: nx });
    }
    let z11 = qz.z.view((0, 0), (nx, nx)).into_owned();
    let z21 = qz.z.view((nx, 0), (ny, nx)).into_owned();
    let s11 = qz.s.view((0, 0), (nx, nx)).into_owned();
    let t11 = qz.t.view((0, 0), (nx, nx)).into_owned();
    let z11_inv = z11
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::LinearAlgebra("stable block of Schur vectors is singular".into()))?;
    let t11_inv = t11
        .try_inverse()
        .ok_or_else(|| Error::LinearAlgebra("stable block of the pencil is singular".into()))?;
    let hx = &z11 * t11_inv * s11 * &z11_inv;
    let gx = z21 * &z11_inv;
    let eta = shock_loading(bundle)?;
    Ok(PolicySolution {
        n,
        nx,
        ss: bundle.point.clone(),
        hx,
        gx,
        hxx: vec![DMatrix::zeros(nx, nx); nx],
        gxx: vec![DMatrix::zeros(nx, nx); ny],
        hss: DVector::zeros(nx),
        gss: DVector::zeros(ny),
        eta,
        eigenvalues: qz.eigenvalues,
        n_stable: qz.n_stable,
        borderline,
        order: Order::First,
        model: None,
    })
}

/// Quadratic and uncertainty-correction terms given the linear solution.
pub fn solve_second_order(bundle: &DerivativeBundle, first: &PolicySolution) -> Result<PolicySolution> {
    let (n, nx) = (bundle.n, bundle.nx);
    let ny = n - nx;
    let m = bundle.n_args();
    let a = bundle.f_next();
    let fz = bundle.f_curr();
    let (hx, gx) = (&first.hx, &first.gx);

    // d[z', z, u]/dx
    let mut dm = DMatrix::zeros(m, nx);
    dm.view_mut((0, 0), (nx, nx)).copy_from(hx);
    dm.view_mut((nx, 0), (ny, nx)).copy_from(&(gx * hx));
    dm.view_mut((n, 0), (nx, nx)).copy_from(&DMatrix::identity(nx, nx));
    dm.view_mut((n + nx, 0), (ny, nx)).copy_from(gx);

    // coefficient of a state-block unknown once routed through y' = gx x'
    let a_y = a.columns(nx, ny).into_owned();
    let coef_x = a.columns(0, nx) + &a_y * gx;

    let k = nx * nx;
    let dim = n * k;
    let mut lhs = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    for i in 0..n {
        let hm = dm.transpose() * &bundle.f2[i] * &dm;
        for j in 0..nx {
            for c in 0..nx {
                let row = i * k + j * nx + c;
                rhs[row] = -hm[(j, c)];
                for v in 0..nx {
                    lhs[(row, v * k + j * nx + c)] += coef_x[(i, v)];
                }
                for v in nx..n {
                    let av = a[(i, v)];
                    if av != 0.0 {
                        for b in 0..nx {
                            let hb = hx[(b, j)];
                            if hb == 0.0 {
                                continue;
                            }
                            for d in 0..nx {
                                lhs[(row, v * k + b * nx + d)] += av * hb * hx[(d, c)];
                            }
                        }
                    }
                    lhs[(row, v * k + j * nx + c)] += fz[(i, v)];
                }
            }
        }
    }
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::LinearAlgebra("second-order state system is singular".into()))?;
    let block = |v: usize| {
        let p = DMatrix::from_fn(nx, nx, |b, d| sol[v * k + b * nx + d]);
        (&p + p.transpose()) * 0.5
    };
    let hxx: Vec<_> = (0..nx).map(block).collect();
    let gxx: Vec<_> = (nx..n).map(block).collect();

    // uncertainty corrections
    let eta = &first.eta;
    let mut nvec = DVector::zeros(m);
    nvec.rows_mut(0, nx).copy_from(eta);
    nvec.rows_mut(nx, ny).copy_from(&(gx * eta));
    nvec[2 * n] = bundle.shock_scale;
    let mut lhs = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    for i in 0..n {
        for v in 0..nx {
            lhs[(i, v)] = coef_x[(i, v)];
        }
        for v in nx..n {
            lhs[(i, v)] = a[(i, v)] + fz[(i, v)];
        }
        let mut acc = (nvec.transpose() * &bundle.f2[i] * &nvec)[(0, 0)];
        for w in 0..ny {
            let aw = a[(i, nx + w)];
            if aw != 0.0 {
                acc += aw * (eta.transpose() * &gxx[w] * eta)[(0, 0)];
            }
        }
        rhs[i] = -acc;
    }
    let pss = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::LinearAlgebra("uncertainty-correction system is singular".into()))?;

    Ok(PolicySolution {
        hxx,
        gxx,
        hss: pss.rows(0, nx).into_owned(),
        gss: pss.rows(nx, ny).into_owned(),
        order: Order::Second,
        ..first.clone()
    })
}

/// Steady state, derivatives and policy for a model in one call.
pub fn solve_policy(ss: &SteadyState, order: Order) -> Result<PolicySolution> {
    let bundle = differentiate_system(ss)?;
    let first = solve_first_order(&bundle)?;
    let mut policy = match order {
        Order::First => first,
        Order::Second => solve_second_order(&bundle, &first)?,
    };
    policy.model = Some(ss.model());
    Ok(policy)
}
