//! Quasi-Newton minimisation with finite-difference gradients.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Stop once an iteration improves the objective by less than this,
    /// relative to `max(|f|, 1)`.
    pub rel_tol: f64,
}

impl BfgsOptions {
    /// Iteration cap of `500 * n_params`, relative tolerance `1e-8`.
    pub fn for_params(n_params: usize) -> Self {
        Self {
            max_iterations: 500 * n_params.max(1),
            rel_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Central-difference gradient with step `eps^(1/3) * max(1, |x_i|)`.
pub fn numerical_gradient<F>(f: &F, x: &DVector<f64>) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let base_step = f64::EPSILON.cbrt();
    let mut probe = x.clone();
    DVector::from_iterator(
        x.len(),
        (0..x.len()).map(|i| {
            let h = base_step * x[i].abs().max(1.0);
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        }),
    )
}

/// Minimises `f` from `x0` with BFGS and a backtracking Armijo line search.
///
/// The returned point never has a larger objective than `x0`.
pub fn minimize<F>(f: F, x0: DVector<f64>, options: BfgsOptions) -> Minimum
where
    F: Fn(&DVector<f64>) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut fx = f(&x);
    if !fx.is_finite() {
        return Minimum {
            x,
            value: fx,
            iterations: 0,
            converged: false,
        };
    }
    let mut g = numerical_gradient(&f, &x);
    let mut inv_hessian = DMatrix::<f64>::identity(n, n);
    let mut converged = false;
    let mut iterations = 0;
    let mut small_steps = 0;

    while iterations < options.max_iterations {
        iterations += 1;
        if g.norm() <= 1e-12 * fx.abs().max(1.0) {
            converged = true;
            break;
        }
        let mut direction = -(&inv_hessian * &g);
        let mut slope = g.dot(&direction);
        if slope >= 0.0 {
            inv_hessian = DMatrix::identity(n, n);
            direction = -g.clone();
            slope = g.dot(&direction);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let candidate = &x + &direction * step;
            let fc = f(&candidate);
            if fc.is_finite() && fc <= fx + 1e-4 * step * slope {
                accepted = Some((candidate, fc));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            // no descent along the quasi-Newton direction; retry once from steepest descent
            if inv_hessian != DMatrix::identity(n, n) {
                inv_hessian = DMatrix::identity(n, n);
                continue;
            }
            // steepest descent cannot improve either: gradient is at noise level
            converged = true;
            break;
        };

        let g_new = numerical_gradient(&f, &x_new);
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let hy = &inv_hessian * &y;
            let yhy = y.dot(&hy);
            inv_hessian += (&s * s.transpose()) * (rho * rho * yhy + rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }

        let improvement = fx - f_new;
        x = x_new;
        g = g_new;
        fx = f_new;
        if improvement < options.rel_tol * fx.abs().max(1.0) {
            small_steps += 1;
            if small_steps >= 2 {
                converged = true;
                break;
            }
        } else {
            small_steps = 0;
        }
    }

    Minimum {
        x,
        value: fx,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock_minimum() {
        let rosen = |v: &DVector<f64>| (1.0 - v[0]).powi(2) + 100.0 * (v[1] - v[0] * v[0]).powi(2);
        let res = minimize(
            rosen,
            DVector::from_vec(vec![-1.2, 1.0]),
            BfgsOptions::for_params(2),
        );
        assert!((res.x[0] - 1.0).abs() < 1e-4, "{:?}", res.x);
        assert!((res.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn quadratic_gradient_matches() {
        let f = |v: &DVector<f64>| 3.0 * v[0] * v[0] + v[0] * v[1] + 2.0 * v[1] * v[1];
        let g = numerical_gradient(&f, &DVector::from_vec(vec![1.0, -2.0]));
        assert!((g[0] - 4.0).abs() < 1e-8);
        assert!((g[1] + 7.0).abs() < 1e-8);
    }

    #[test]
    fn never_worse_than_start() {
        let f = |v: &DVector<f64>| v[0].abs().sqrt();
        let x0 = DVector::from_vec(vec![0.0]);
        let res = minimize(f, x0, BfgsOptions::for_params(1));
        assert!(res.value <= 0.0);
    }
}
