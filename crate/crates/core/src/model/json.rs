//! Models defined by expression strings in a JSON document.
//!
//! ```json
//! { "n": 1, "n_alpha": 3,
//!   "delays": ["a3"],
//!   "f": ["-a1*x1 - a2*x1_d1"],
//!   "names": {"x": ["x"], "alpha": ["a_p", "b_p", "tau"]} }
//! ```
//!
//! Symbols: `x1..xn` for the current state, `xj_di` for component `j`
//! delayed by `tau_i`, `a1..a{n_alpha}` for the parameters. Delay
//! expressions may only use the current state and the parameters.
//! Derivatives are obtained by symbolic differentiation of the parsed
//! expressions.

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use super::expr::{parse, Expr, ParseError};
use super::{DdeSystem, Dims, FirstDerivatives, SecondDerivatives};
use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    #[serde(default)]
    name: Option<String>,
    n: usize,
    n_alpha: usize,
    #[serde(default)]
    delays: Vec<String>,
    f: Vec<String>,
    #[serde(default)]
    names: Option<Names>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Names {
    #[serde(default)]
    x: Vec<String>,
    #[serde(default)]
    alpha: Vec<String>,
}

/// Variable layout: `[x_0 (n), x_1 (n), ..., x_m (n), alpha (n_alpha)]`.
#[derive(Debug, Clone)]
pub struct ExprModel {
    name: String,
    dims: Dims,
    f: Vec<Expr>,
    delays: Vec<Expr>,
    /// `df[nu][v]`
    df: Vec<Vec<Expr>>,
    /// `d2f[nu][v][w]` for every variable `v` and state variable `w`.
    d2f: Vec<Vec<Vec<Expr>>>,
    /// `dtau[i-1][v]` for current-state and parameter variables.
    dtau: Vec<Vec<Expr>>,
    state_names: Vec<String>,
    param_names: Vec<String>,
}

fn resolve_symbol(name: &str, n: usize, m: usize, n_alpha: usize) -> Option<usize> {
    let index = |s: &str, max: usize| -> Option<usize> {
        let k: usize = s.parse().ok()?;
        (k >= 1 && k <= max && !s.starts_with('0')).then(|| k - 1)
    };
    if let Some(rest) = name.strip_prefix('a') {
        return index(rest, n_alpha).map(|k| n * (m + 1) + k);
    }
    let rest = name.strip_prefix('x')?;
    match rest.split_once("_d") {
        Some((j, i)) => {
            let j = index(j, n)?;
            let i = index(i, m)? + 1;
            Some(i * n + j)
        }
        None => index(rest, n),
    }
}

impl ExprModel {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        Self::build(file)
    }

    fn build(file: ModelFile) -> Result<Self> {
        let (n, n_alpha, m) = (file.n, file.n_alpha, file.delays.len());
        if n == 0 || n_alpha == 0 {
            return Err(Error::input("model file needs n >= 1 and n_alpha >= 1"));
        }
        if file.f.len() != n {
            return Err(Error::input(format!(
                "model file has {} right-hand-side expressions, n = {n}",
                file.f.len()
            )));
        }
        let resolve = |s: &str| resolve_symbol(s, n, m, n_alpha);
        let f = file
            .f
            .iter()
            .enumerate()
            .map(|(k, src)| parse(&format!("f[{k}]"), src, resolve))
            .collect::<std::result::Result<Vec<_>, ParseError>>()?;
        let delay_resolve = |s: &str| resolve(s).filter(|&v| v < n || v >= n * (m + 1));
        let delays = file
            .delays
            .iter()
            .enumerate()
            .map(|(k, src)| parse(&format!("delays[{k}]"), src, delay_resolve))
            .collect::<std::result::Result<Vec<_>, ParseError>>()?;

        let nvars = n * (m + 1) + n_alpha;
        let nstate = n * (m + 1);
        let df: Vec<Vec<Expr>> = f
            .iter()
            .map(|e| (0..nvars).map(|v| e.diff(v)).collect())
            .collect();
        let d2f = df
            .iter()
            .map(|row| {
                (0..nvars)
                    .map(|v| (0..nstate).map(|w| row[w].diff(v)).collect())
                    .collect()
            })
            .collect();
        let dtau = delays
            .iter()
            .map(|e| (0..nvars).map(|v| e.diff(v)).collect())
            .collect();

        let names = file.names.unwrap_or_default();
        let state_names = if names.x.len() == n {
            names.x
        } else {
            (1..=n).map(|j| format!("x{j}")).collect()
        };
        let param_names = if names.alpha.len() == n_alpha {
            names.alpha
        } else {
            (1..=n_alpha).map(|k| format!("a{k}")).collect()
        };

        Ok(ExprModel {
            name: file.name.unwrap_or_else(|| "json-model".into()),
            dims: Dims { n, n_alpha, m },
            f,
            delays,
            df,
            d2f,
            dtau,
            state_names,
            param_names,
        })
    }

    fn vars(&self, args: &[DVector<f64>], alpha: &DVector<f64>) -> Vec<f64> {
        let mut v: Vec<f64> = args.iter().flat_map(|a| a.iter().copied()).collect();
        v.extend(alpha.iter().copied());
        v
    }

    fn steady_vars(&self, x: &DVector<f64>, alpha: &DVector<f64>) -> Vec<f64> {
        self.vars(&vec![x.clone(); self.dims.m + 1], alpha)
    }

    fn state_var(&self, i: usize, j: usize) -> usize {
        i * self.dims.n + j
    }

    fn param_var(&self, k: usize) -> usize {
        self.dims.n * (self.dims.m + 1) + k
    }
}

impl DdeSystem for ExprModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn dims(&self) -> Dims {
        self.dims
    }

    fn rhs(&self, args: &[DVector<f64>], alpha: &DVector<f64>) -> DVector<f64> {
        let v = self.vars(args, alpha);
        DVector::from_iterator(self.dims.n, self.f.iter().map(|e| e.eval(&v)))
    }

    fn delay(&self, i: usize, x: &DVector<f64>, alpha: &DVector<f64>) -> f64 {
        self.delays[i - 1].eval(&self.steady_vars(x, alpha))
    }

    fn analytic_first(&self, x: &DVector<f64>, alpha: &DVector<f64>) -> Option<FirstDerivatives> {
        let Dims { n, n_alpha, m } = self.dims;
        let v = self.steady_vars(x, alpha);
        let a = (0..=m)
            .map(|i| DMatrix::from_fn(n, n, |nu, rho| self.df[nu][self.state_var(i, rho)].eval(&v)))
            .collect();
        let f_alpha = DMatrix::from_fn(n, n_alpha, |nu, k| self.df[nu][self.param_var(k)].eval(&v));
        let grad_x_tau = self
            .dtau
            .iter()
            .map(|d| DVector::from_fn(n, |j, _| d[j].eval(&v)))
            .collect();
        let grad_alpha_tau = self
            .dtau
            .iter()
            .map(|d| DVector::from_fn(n_alpha, |k, _| d[self.param_var(k)].eval(&v)))
            .collect();
        Some(FirstDerivatives {
            a,
            f_alpha,
            grad_x_tau,
            grad_alpha_tau,
        })
    }

    fn analytic_second(&self, x: &DVector<f64>, alpha: &DVector<f64>) -> Option<SecondDerivatives> {
        let Dims { n, n_alpha, m } = self.dims;
        let v = self.steady_vars(x, alpha);
        let da_dx = (0..=m)
            .map(|i| {
                (0..n)
                    .map(|mu| {
                        DMatrix::from_fn(n, n, |nu, rho| {
                            (0..=m)
                                .map(|j| {
                                    self.d2f[nu][self.state_var(j, mu)][self.state_var(i, rho)]
                                        .eval(&v)
                                })
                                .sum()
                        })
                    })
                    .collect()
            })
            .collect();
        let da_dalpha = (0..=m)
            .map(|i| {
                (0..n_alpha)
                    .map(|k| {
                        DMatrix::from_fn(n, n, |nu, rho| {
                            self.d2f[nu][self.param_var(k)][self.state_var(i, rho)].eval(&v)
                        })
                    })
                    .collect()
            })
            .collect();
        Some(SecondDerivatives { da_dx, da_dalpha })
    }

    fn state_names(&self) -> Vec<String> {
        self.state_names.clone()
    }

    fn param_names(&self) -> Vec<String> {
        self.param_names.clone()
    }
}
