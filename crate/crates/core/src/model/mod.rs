//! DDE systems with state- and parameter-dependent delays and their
//! derivatives at steady states.
//!
//! A system is `x'(t) = f(x_0, x_1, ..., x_m, alpha)` with `x_i = x(t - tau_i)`
//! and `tau_i = tau_i(x(t), alpha)`. Index 0 is the undelayed argument;
//! `tau_0` is identically zero with zero gradients.
//!
//! Derivatives come either from the system itself ([`DdeSystem::analytic_first`],
//! [`DdeSystem::analytic_second`]) or from central finite differences with
//! per-coordinate step `h0 * (1 + |z_j|)`.

pub mod builtin;
pub mod expr;
pub mod json;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative base step for first derivatives.
pub const FD_STEP_FIRST: f64 = 1e-6;
/// Relative base step for mixed second derivatives.
pub const FD_STEP_SECOND: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    /// State dimension.
    pub n: usize,
    /// Parameter dimension.
    pub n_alpha: usize,
    /// Number of delays, not counting `tau_0 = 0`.
    pub m: usize,
}

/// First-order data at a steady configuration `(x, x, ..., x, alpha)`.
#[derive(Debug, Clone)]
pub struct FirstDerivatives {
    /// `A_i = df/dx_i`, `m + 1` matrices of size `n x n`.
    pub a: Vec<DMatrix<f64>>,
    /// `df/dalpha`, `n x n_alpha`.
    pub f_alpha: DMatrix<f64>,
    /// Gradients of `tau_1..tau_m` w.r.t. the current state (no index-0 entry).
    pub grad_x_tau: Vec<DVector<f64>>,
    /// Gradients of `tau_1..tau_m` w.r.t. the parameters (no index-0 entry).
    pub grad_alpha_tau: Vec<DVector<f64>>,
}

/// Derivatives of the `A_i` at a steady configuration.
///
/// `da_dx[i][mu]` is the total derivative of `A_i(x, ..., x, alpha)` w.r.t.
/// `x_mu` (all arguments move together); `da_dalpha[i][k]` the partial
/// derivative w.r.t. `alpha_k`.
#[derive(Debug, Clone)]
pub struct SecondDerivatives {
    pub da_dx: Vec<Vec<DMatrix<f64>>>,
    pub da_dalpha: Vec<Vec<DMatrix<f64>>>,
}

/// A delay differential system.
pub trait DdeSystem: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn dims(&self) -> Dims;

    /// `args` holds `m + 1` state vectors, `args[0] = x(t)`.
    fn rhs(&self, args: &[DVector<f64>], alpha: &DVector<f64>) -> DVector<f64>;

    /// Delay `tau_i` for `i` in `1..=m`, as a function of the current state.
    fn delay(&self, i: usize, x: &DVector<f64>, alpha: &DVector<f64>) -> f64;

    fn analytic_first(&self, _x: &DVector<f64>, _alpha: &DVector<f64>) -> Option<FirstDerivatives> {
        None
    }

    fn analytic_second(
        &self,
        _x: &DVector<f64>,
        _alpha: &DVector<f64>,
    ) -> Option<SecondDerivatives> {
        None
    }

    fn state_names(&self) -> Vec<String> {
        (1..=self.dims().n).map(|j| format!("x{j}")).collect()
    }

    fn param_names(&self) -> Vec<String> {
        (1..=self.dims().n_alpha).map(|k| format!("a{k}")).collect()
    }
}

/// Where derivatives come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Provider {
    /// Analytic when the system offers it, finite differences otherwise.
    #[default]
    Auto,
    Analytic,
    FiniteDifference,
}

/// A system together with its derivative provider. Cheap to clone and
/// safe to share across threads.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    system: Arc<dyn DdeSystem>,
    provider: Provider,
}

impl ModelSpec {
    pub fn new(system: impl DdeSystem + 'static) -> Self {
        Self::from_arc(Arc::new(system))
    }

    pub fn from_arc(system: Arc<dyn DdeSystem>) -> Self {
        let d = system.dims();
        assert!(
            d.n >= 1 && d.n_alpha >= 1,
            "model needs n >= 1 and n_alpha >= 1"
        );
        ModelSpec {
            system,
            provider: Provider::Auto,
        }
    }

    /// Looks up a built-in model by name, or loads a JSON model file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if let Some(m) = builtin::by_name(name_or_path) {
            return Ok(m);
        }
        let path = std::path::Path::new(name_or_path);
        if path.exists() {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::input(format!("cannot read {name_or_path}: {e}")))?;
            return Ok(ModelSpec::new(json::ExprModel::from_json(&text)?));
        }
        Err(Error::input(format!(
            "unknown model '{name_or_path}' (built-ins: {})",
            builtin::NAMES.join(", ")
        )))
    }

    pub fn with_provider(mut self, provider: Provider) -> Self {
        self.provider = provider;
        self
    }

    pub fn provider(&self) -> Provider {
        self.provider
    }

    pub fn system(&self) -> &dyn DdeSystem {
        self.system.as_ref()
    }

    pub fn name(&self) -> &str {
        self.system.name()
    }

    pub fn dims(&self) -> Dims {
        self.system.dims()
    }

    pub fn n(&self) -> usize {
        self.dims().n
    }

    pub fn n_alpha(&self) -> usize {
        self.dims().n_alpha
    }

    pub fn m(&self) -> usize {
        self.dims().m
    }

    pub fn check_state(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::input(format!(
                "state has length {}, model '{}' expects {}",
                x.len(),
                self.name(),
                self.n()
            )));
        }
        Ok(())
    }

    pub fn check_alpha(&self, alpha: &DVector<f64>) -> Result<()> {
        if alpha.len() != self.n_alpha() {
            return Err(Error::input(format!(
                "parameter vector has length {}, model '{}' expects {}",
                alpha.len(),
                self.name(),
                self.n_alpha()
            )));
        }
        Ok(())
    }

    /// All `m + 1` delays at `(x, alpha)`, `tau[0] = 0`. Negative delays are rejected.
    pub fn delays(&self, x: &DVector<f64>, alpha: &DVector<f64>) -> Result<Vec<f64>> {
        let m = self.m();
        let mut tau = Vec::with_capacity(m + 1);
        tau.push(0.0);
        for i in 1..=m {
            let t = self.system.delay(i, x, alpha);
            if !t.is_finite() || t < 0.0 {
                return Err(Error::domain(format!(
                    "delay tau_{i} evaluates to {t} at x = {:?}, alpha = {:?}",
                    x.as_slice(),
                    alpha.as_slice()
                )));
            }
            tau.push(t);
        }
        Ok(tau)
    }

    /// `f(x, x, ..., x, alpha)`.
    pub fn steady_rhs(&self, x: &DVector<f64>, alpha: &DVector<f64>) -> DVector<f64> {
        let args = vec![x.clone(); self.m() + 1];
        self.system.rhs(&args, alpha)
    }

    fn use_analytic(&self) -> bool {
        self.provider != Provider::FiniteDifference
    }

    /// First-order derivatives at the steady configuration.
    pub fn first_derivatives(
        &self,
        x: &DVector<f64>,
        alpha: &DVector<f64>,
    ) -> Result<FirstDerivatives> {
        if self.use_analytic() {
            if let Some(d) = self.system.analytic_first(x, alpha) {
                return Ok(d);
            }
            if self.provider == Provider::Analytic {
                return Err(Error::input(format!(
                    "model '{}' has no analytic derivatives",
                    self.name()
                )));
            }
        }
        fd_first(self, x, alpha)
    }

    pub fn second_derivatives(
        &self,
        x: &DVector<f64>,
        alpha: &DVector<f64>,
    ) -> Result<SecondDerivatives> {
        if self.use_analytic() {
            if let Some(d) = self.system.analytic_second(x, alpha) {
                return Ok(d);
            }
            if self.provider == Provider::Analytic {
                return Err(Error::input(format!(
                    "model '{}' has no analytic derivatives",
                    self.name()
                )));
            }
        }
        Ok(fd_second(self, x, alpha))
    }
}

/// `f(x_0, ..., x_m, alpha)`.
pub fn evaluate_rhs(
    model: &ModelSpec,
    x_args: &[DVector<f64>],
    alpha: &DVector<f64>,
) -> Result<DVector<f64>> {
    let d = model.dims();
    if x_args.len() != d.m + 1 {
        return Err(Error::input(format!(
            "expected {} state arguments, got {}",
            d.m + 1,
            x_args.len()
        )));
    }
    for x in x_args {
        model.check_state(x)?;
    }
    model.check_alpha(alpha)?;
    let out = model.system().rhs(x_args, alpha);
    if out.len() != d.n {
        return Err(Error::numerical(format!(
            "model '{}' returned {} components, expected {}",
            model.name(),
            out.len(),
            d.n
        )));
    }
    Ok(out)
}

/// Everything the transposed Jacobian needs at a steady state.
#[derive(Debug, Clone)]
pub struct DerivativeBundle {
    /// `tau_0..tau_m`, `tau[0] = 0`.
    pub tau: Vec<f64>,
    /// `A_0..A_m`.
    pub a: Vec<DMatrix<f64>>,
    /// `grad_x tau_0..tau_m`, index 0 is the zero vector.
    pub grad_x_tau: Vec<DVector<f64>>,
    /// `grad_alpha tau_0..tau_m`, index 0 is the zero vector.
    pub grad_alpha_tau: Vec<DVector<f64>>,
    /// `df/dalpha`, `n x n_alpha`.
    pub f_alpha: DMatrix<f64>,
    pub second: SecondDerivatives,
}

impl DerivativeBundle {
    pub fn n(&self) -> usize {
        self.a[0].nrows()
    }

    pub fn n_alpha(&self) -> usize {
        self.f_alpha.ncols()
    }

    pub fn m(&self) -> usize {
        self.a.len() - 1
    }

    /// `(sum_i A_i)^T`, the transposed Jacobian of `x -> f(x, ..., x, alpha)`.
    pub fn grad_x_f(&self) -> DMatrix<f64> {
        self.a
            .iter()
            .fold(DMatrix::zeros(self.n(), self.n()), |acc, a| acc + a)
            .transpose()
    }

    /// `(df/dalpha)^T`, `n_alpha x n`.
    pub fn grad_alpha_f(&self) -> DMatrix<f64> {
        self.f_alpha.transpose()
    }

    /// `n x n` matrix with entries `sum_rho v_rho d^2 f_nu / dx_mu dx_rho(t - tau_i)`
    /// (row `mu`, column `nu`).
    pub fn hess_x(&self, v: &DVector<f64>, i: usize) -> DMatrix<f64> {
        contract(&self.second.da_dx[i], v)
    }

    /// `n_alpha x n` analogue of [`hess_x`](Self::hess_x) with `d/dalpha_mu`.
    pub fn hess_alpha(&self, v: &DVector<f64>, i: usize) -> DMatrix<f64> {
        contract(&self.second.da_dalpha[i], v)
    }
}

fn contract(slices: &[DMatrix<f64>], v: &DVector<f64>) -> DMatrix<f64> {
    let n = v.len();
    let mut out = DMatrix::zeros(slices.len(), n);
    for (mu, d) in slices.iter().enumerate() {
        let row = d * v;
        out.row_mut(mu).copy_from(&row.transpose());
    }
    out
}

/// Collects all derivative families at `(x_tilde, alpha)`.
///
/// The point is assumed to be a steady state; this is not re-checked.
pub fn bundle_derivatives(
    model: &ModelSpec,
    x_tilde: &DVector<f64>,
    alpha: &DVector<f64>,
) -> Result<DerivativeBundle> {
    model.check_state(x_tilde)?;
    model.check_alpha(alpha)?;
    let tau = model.delays(x_tilde, alpha)?;
    let first = model.first_derivatives(x_tilde, alpha)?;
    let second = model.second_derivatives(x_tilde, alpha)?;
    let d = model.dims();

    let mut grad_x_tau = vec![DVector::zeros(d.n)];
    grad_x_tau.extend(first.grad_x_tau);
    let mut grad_alpha_tau = vec![DVector::zeros(d.n_alpha)];
    grad_alpha_tau.extend(first.grad_alpha_tau);

    Ok(DerivativeBundle {
        tau,
        a: first.a,
        grad_x_tau,
        grad_alpha_tau,
        f_alpha: first.f_alpha,
        second,
    })
}

fn step(h0: f64, z: f64) -> f64 {
    h0 * (1.0 + z.abs())
}

fn checked_delay(
    model: &ModelSpec,
    i: usize,
    x: &DVector<f64>,
    alpha: &DVector<f64>,
) -> Result<f64> {
    let t = model.system().delay(i, x, alpha);
    if !t.is_finite() || t < 0.0 {
        return Err(Error::domain(format!(
            "delay tau_{i} evaluates to {t} at a finite-difference point"
        )));
    }
    Ok(t)
}

/// Central-difference first derivatives.
pub fn fd_first(
    model: &ModelSpec,
    x: &DVector<f64>,
    alpha: &DVector<f64>,
) -> Result<FirstDerivatives> {
    let d = model.dims();
    let sys = model.system();
    let base = vec![x.clone(); d.m + 1];

    let mut a = Vec::with_capacity(d.m + 1);
    for i in 0..=d.m {
        let mut ai = DMatrix::zeros(d.n, d.n);
        for rho in 0..d.n {
            let h = step(FD_STEP_FIRST, x[rho]);
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[i][rho] += h;
            minus[i][rho] -= h;
            let col = (sys.rhs(&plus, alpha) - sys.rhs(&minus, alpha)) / (2.0 * h);
            ai.set_column(rho, &col);
        }
        a.push(ai);
    }

    let mut f_alpha = DMatrix::zeros(d.n, d.n_alpha);
    for k in 0..d.n_alpha {
        let h = step(FD_STEP_FIRST, alpha[k]);
        let mut ap = alpha.clone();
        let mut am = alpha.clone();
        ap[k] += h;
        am[k] -= h;
        let col = (sys.rhs(&base, &ap) - sys.rhs(&base, &am)) / (2.0 * h);
        f_alpha.set_column(k, &col);
    }

    let mut grad_x_tau = Vec::with_capacity(d.m);
    let mut grad_alpha_tau = Vec::with_capacity(d.m);
    for i in 1..=d.m {
        checked_delay(model, i, x, alpha)?;
        let mut gx = DVector::zeros(d.n);
        for j in 0..d.n {
            let h = step(FD_STEP_FIRST, x[j]);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            gx[j] = (checked_delay(model, i, &xp, alpha)? - checked_delay(model, i, &xm, alpha)?)
                / (2.0 * h);
        }
        let mut ga = DVector::zeros(d.n_alpha);
        for k in 0..d.n_alpha {
            let h = step(FD_STEP_FIRST, alpha[k]);
            let mut ap = alpha.clone();
            let mut am = alpha.clone();
            ap[k] += h;
            am[k] -= h;
            ga[k] =
                (checked_delay(model, i, x, &ap)? - checked_delay(model, i, x, &am)?) / (2.0 * h);
        }
        grad_x_tau.push(gx);
        grad_alpha_tau.push(ga);
    }

    Ok(FirstDerivatives {
        a,
        f_alpha,
        grad_x_tau,
        grad_alpha_tau,
    })
}

/// Perturbs the delayed arguments and/or the parameters by a step.
type Shift<'a> = dyn Fn(f64, &mut Vec<DVector<f64>>, &mut DVector<f64>) + 'a;

/// Four-point mixed central differences for the derivatives of the `A_i`.
pub fn fd_second(model: &ModelSpec, x: &DVector<f64>, alpha: &DVector<f64>) -> SecondDerivatives {
    let d = model.dims();
    let sys = model.system();
    let base = vec![x.clone(); d.m + 1];

    let mixed = |shift: &Shift<'_>, h1: f64, i: usize, rho: usize| -> DVector<f64> {
        let h2 = step(FD_STEP_SECOND, x[rho]);
        let eval = |s: f64, t: f64| {
            let mut args = base.clone();
            let mut al = alpha.clone();
            shift(s, &mut args, &mut al);
            args[i][rho] += t;
            sys.rhs(&args, &al)
        };
        (eval(h1, h2) - eval(h1, -h2) - eval(-h1, h2) + eval(-h1, -h2)) / (4.0 * h1 * h2)
    };

    let mut da_dx = Vec::with_capacity(d.m + 1);
    let mut da_dalpha = Vec::with_capacity(d.m + 1);
    for i in 0..=d.m {
        let mut per_mu = Vec::with_capacity(d.n);
        for mu in 0..d.n {
            let h1 = step(FD_STEP_SECOND, x[mu]);
            let shift = |s: f64, args: &mut Vec<DVector<f64>>, _: &mut DVector<f64>| {
                for arg in args.iter_mut() {
                    arg[mu] += s;
                }
            };
            let mut m = DMatrix::zeros(d.n, d.n);
            for rho in 0..d.n {
                m.set_column(rho, &mixed(&shift, h1, i, rho));
            }
            per_mu.push(m);
        }
        da_dx.push(per_mu);

        let mut per_k = Vec::with_capacity(d.n_alpha);
        for k in 0..d.n_alpha {
            let h1 = step(FD_STEP_SECOND, alpha[k]);
            let shift = |s: f64, _: &mut Vec<DVector<f64>>, al: &mut DVector<f64>| {
                al[k] += s;
            };
            let mut m = DMatrix::zeros(d.n, d.n);
            for rho in 0..d.n {
                m.set_column(rho, &mixed(&shift, h1, i, rho));
            }
            per_k.push(m);
        }
        da_dalpha.push(per_k);
    }

    SecondDerivatives { da_dx, da_dalpha }
}
