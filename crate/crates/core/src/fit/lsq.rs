//! Bounded Levenberg-Marquardt with numerical Jacobians.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Box constraints; infinite entries mean unbounded.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::input("bound vectors differ in length"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l.is_nan() || u.is_nan() || l > u) {
            return Err(Error::input("each lower bound must not exceed its upper bound"));
        }
        Ok(Bounds { lower, upper })
    }

    pub fn unbounded(n: usize) -> Self {
        Bounds { lower: vec![f64::NEG_INFINITY; n], upper: vec![f64::INFINITY; n] }
    }

    fn clamp(&self, p: &mut [f64]) {
        for ((v, &l), &u) in p.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(l, u);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsqOptions {
    pub max_iterations: usize,
    /// Relative cost change that ends the search.
    pub ftol: f64,
    /// Relative step length that ends the search.
    pub xtol: f64,
    /// Largest |cos| between the residual and a Jacobian column at
    /// convergence.
    pub gtol: f64,
    /// Relative central-difference step.
    pub jacobian_step: f64,
}

impl Default for LsqOptions {
    fn default() -> Self {
        LsqOptions { max_iterations: 500, ftol: 1e-10, xtol: 1e-12, gtol: 1e-8, jacobian_step: 6e-6 }
    }
}

/// Outcome of a least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    /// One-sigma uncertainties from the covariance.
    pub sigmas: Vec<f64>,
    pub at_bound: Vec<bool>,
    /// Covariance scaled by the reduced χ².
    pub covariance: DMatrix<f64>,
    /// Σ (residual/σ)².
    pub chi2: f64,
    pub iterations: usize,
    pub converged: bool,
    /// max_j |cos∠(r, J_j)| over free parameters at the solution.
    pub gradient_norm: f64,
}

impl FitReport {
    /// (value, sigma) by parameter name.
    pub fn param(&self, name: &str) -> Option<(f64, f64)> {
        self.names.iter().position(|n| n == name).map(|i| (self.values[i], self.sigmas[i]))
    }

    pub fn value(&self, name: &str) -> f64 {
        self.param(name).map(|p| p.0).unwrap_or(f64::NAN)
    }

    pub(crate) fn with_names(mut self, names: &[&str]) -> Self {
        self.names = names.iter().map(|s| s.to_string()).collect();
        self
    }
}

/// Central-difference Jacobian of weighted residuals; steps are shifted
/// inside the bounds when a parameter sits on one.
pub fn numerical_jacobian(
    model: &dyn Fn(&[f64], &mut [f64]),
    p: &[f64],
    weights: &[f64],
    bounds: &Bounds,
    rel_step: f64,
) -> DMatrix<f64> {
    let m = weights.len();
    let n = p.len();
    let mut jac = DMatrix::<f64>::zeros(m, n);
    let mut plus = vec![0.0; m];
    let mut minus = vec![0.0; m];
    let mut q = p.to_vec();
    for j in 0..n {
        let h = rel_step * p[j].abs().max(1.0);
        let (mut hi, mut lo) = (p[j] + h, p[j] - h);
        if hi > bounds.upper[j] {
            hi = p[j];
            lo = p[j] - 2.0 * h;
        } else if lo < bounds.lower[j] {
            lo = p[j];
            hi = p[j] + 2.0 * h;
        }
        q[j] = hi;
        model(&q, &mut plus);
        q[j] = lo;
        model(&q, &mut minus);
        q[j] = p[j];
        let span = hi - lo;
        for i in 0..m {
            jac[(i, j)] = (plus[i] - minus[i]) / span * weights[i];
        }
    }
    jac
}

fn residuals(model: &dyn Fn(&[f64], &mut [f64]), p: &[f64], data: &[f64], w: &[f64], buf: &mut [f64]) -> Result<f64> {
    model(p, buf);
    let mut cost = 0.0;
    for i in 0..data.len() {
        buf[i] = (buf[i] - data[i]) * w[i];
        cost += buf[i] * buf[i];
    }
    if cost.is_finite() {
        Ok(cost)
    } else {
        Err(Error::numeric(format!("model produced non-finite residuals at {p:?}")))
    }
}

/// Minimises Σ((model(p) − data)/σ)² within `bounds`.
///
/// Hitting the iteration cap yields `converged == false` rather than an
/// error. Errors are reserved for invalid input and non-finite model output
/// at the starting point.
pub fn least_squares(
    model: &dyn Fn(&[f64], &mut [f64]),
    data: &[f64],
    sigma: Option<&[f64]>,
    init: &[f64],
    bounds: &Bounds,
    opts: &LsqOptions,
) -> Result<FitReport> {
    let m = data.len();
    let n = init.len();
    if bounds.lower.len() != n {
        return Err(Error::input(format!("{} bounds for {n} parameters", bounds.lower.len())));
    }
    if init.iter().any(|v| !v.is_finite()) {
        return Err(Error::input(format!("non-finite initial parameters {init:?}")));
    }
    if init.iter().enumerate().any(|(j, &v)| v < bounds.lower[j] || v > bounds.upper[j]) {
        return Err(Error::input(format!("initial parameters {init:?} violate the bounds")));
    }
    if m < n {
        return Err(Error::input(format!("{m} data points cannot fix {n} parameters")));
    }
    let w: Vec<f64> = match sigma {
        Some(s) => {
            if s.len() != m || s.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::input("sigma must be positive and match the data length"));
            }
            s.iter().map(|v| 1.0 / v).collect()
        }
        None => vec![1.0; m],
    };

    let mut p = init.to_vec();
    let mut r = vec![0.0; m];
    let mut cost = residuals(model, &p, data, &w, &mut r)?;
    let mut trial_r = vec![0.0; m];
    let mut lambda = 0.0;
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_measure = f64::INFINITY;

    while iterations < opts.max_iterations {
        let jac = numerical_jacobian(model, &p, &w, bounds, opts.jacobian_step);
        let rv = DVector::from_column_slice(&r);
        let g = jac.tr_mul(&rv);
        let free: Vec<usize> = (0..n)
            .filter(|&j| !((p[j] <= bounds.lower[j] && g[j] > 0.0) || (p[j] >= bounds.upper[j] && g[j] < 0.0)))
            .collect();
        grad_measure = cosine_measure(&jac, &rv, &free);
        if cost == 0.0 || grad_measure < opts.gtol || free.is_empty() {
            converged = true;
            break;
        }
        let jtj = jac.tr_mul(&jac);
        let k = free.len();
        let a = DMatrix::from_fn(k, k, |i, j| jtj[(free[i], free[j])]);
        let b = DVector::from_fn(k, |i, _| -g[free[i]]);
        let diag_max = (0..k).map(|i| a[(i, i)]).fold(0.0, f64::max);
        let mut accepted = false;
        loop {
            let mut damped = a.clone();
            for i in 0..k {
                damped[(i, i)] += lambda * a[(i, i)].max(1e-12 * diag_max);
            }
            let step = damped.clone().cholesky().map(|c| c.solve(&b)).or_else(|| damped.lu().solve(&b));
            if let Some(step) = step {
                let mut trial = p.clone();
                for (i, &j) in free.iter().enumerate() {
                    trial[j] += step[i];
                }
                bounds.clamp(&mut trial);
                let step_norm = p.iter().zip(&trial).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                let p_norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                if step_norm <= opts.xtol * (p_norm + opts.xtol) {
                    converged = true;
                    break;
                }
                let trial_cost = residuals(model, &trial, data, &w, &mut trial_r).unwrap_or(f64::INFINITY);
                if trial_cost < cost {
                    let rel = (cost - trial_cost) / cost;
                    p = trial;
                    std::mem::swap(&mut r, &mut trial_r);
                    cost = trial_cost;
                    lambda = if lambda < 1e-9 { 0.0 } else { lambda / 5.0 };
                    accepted = true;
                    if rel < opts.ftol {
                        converged = true;
                    }
                    break;
                }
                let moved = p.iter().zip(&trial).any(|(a, b)| a != b);
                if !moved {
                    // Step below floating-point resolution: nothing left to gain.
                    converged = true;
                    break;
                }
            }
            lambda = if lambda == 0.0 { 1e-3 } else { lambda * 10.0 };
            if lambda > 1e16 {
                break;
            }
        }
        if accepted {
            iterations += 1;
        }
        if converged || !accepted {
            if !accepted && !converged {
                converged = grad_measure < opts.gtol.sqrt();
            }
            break;
        }
    }

    let jac = numerical_jacobian(model, &p, &w, bounds, opts.jacobian_step);
    let rv = DVector::from_column_slice(&r);
    let g = jac.tr_mul(&rv);
    let free: Vec<usize> = (0..n)
        .filter(|&j| !((p[j] <= bounds.lower[j] && g[j] > 0.0) || (p[j] >= bounds.upper[j] && g[j] < 0.0)))
        .collect();
    if converged {
        grad_measure = cosine_measure(&jac, &rv, &free);
    }
    let dof = (m as f64 - n as f64).max(1.0);
    let reduced = if m > n { cost / dof } else { 1.0 };
    let covariance = pseudo_inverse(&jac.tr_mul(&jac)) * reduced;
    let sigmas = (0..n).map(|j| covariance[(j, j)].max(0.0).sqrt()).collect();
    let at_bound = (0..n).map(|j| p[j] <= bounds.lower[j] || p[j] >= bounds.upper[j]).collect();
    Ok(FitReport {
        names: (0..n).map(|j| format!("p{j}")).collect(),
        values: p,
        sigmas,
        at_bound,
        covariance,
        chi2: cost,
        iterations,
        converged,
        gradient_norm: grad_measure,
    })
}

fn cosine_measure(jac: &DMatrix<f64>, r: &DVector<f64>, free: &[usize]) -> f64 {
    let rn = r.norm();
    if rn == 0.0 {
        return 0.0;
    }
    free.iter()
        .map(|&j| {
            let col = jac.column(j);
            let cn = col.norm();
            if cn == 0.0 {
                0.0
            } else {
                (col.dot(r) / (cn * rn)).abs()
            }
        })
        .fold(0.0, f64::max)
}

fn pseudo_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    svd.pseudo_inverse(smax * 1e-14).unwrap_or_else(|_| DMatrix::from_element(a.nrows(), a.ncols(), f64::NAN))
}
