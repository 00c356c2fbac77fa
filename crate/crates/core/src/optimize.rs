//! Derivative-free local minimization.

/// Settings for [`nelder_mead`].
#[derive(Debug, Clone, Copy)]
pub struct NelderMead {
    pub max_iterations: usize,
    /// Stop when both the spread of simplex values and the simplex diameter
    /// fall below this.
    pub tolerance: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead {
            max_iterations: 200,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Standard Nelder–Mead (reflection 1, expansion 2, contraction ½,
/// shrink ½) started from `x0` with per-coordinate initial offsets `step`.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], step: &[f64], opts: NelderMead) -> Minimum {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for k in 0..n {
        let mut x = x0.to_vec();
        x[k] += step[k];
        let v = f(&x);
        simplex.push((x, v));
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[n].1 - simplex[0].1;
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread.abs() <= opts.tolerance && diameter <= opts.tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|(x, _)| x[k]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };

        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = f(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let x = along(-0.5);
            let v = f(&x);
            (x, v)
        } else {
            let x = along(0.5);
            let v = f(&x);
            (x, v)
        };
        if fc < fr.min(simplex[n].1) {
            simplex[n] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for (x, v) in simplex[1..].iter_mut() {
            for (xi, bi) in x.iter_mut().zip(&best) {
                *xi = bi + 0.5 * (*xi - bi);
            }
            *v = f(x);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        iterations,
        converged,
    }
}

/// Settings for [`levenberg_marquardt`].
#[derive(Debug, Clone, Copy)]
pub struct LevenbergMarquardt {
    pub max_iterations: usize,
    /// Relative objective decrease, and relative step size, below which the
    /// iteration is considered converged.
    pub tolerance: f64,
    /// Objective below which the fit counts as exact.
    pub exact: f64,
}

impl Default for LevenbergMarquardt {
    fn default() -> Self {
        LevenbergMarquardt {
            max_iterations: 2000,
            tolerance: 1e-13,
            exact: 1e-24,
        }
    }
}

/// Minimizes `‖r(x)‖²` with a central-difference Jacobian and identity
/// damping. Steps are only accepted when they lower the objective.
pub fn levenberg_marquardt(residuals: impl Fn(&[f64]) -> Vec<f64>, x0: &[f64], opts: LevenbergMarquardt) -> Minimum {
    let n = x0.len();
    let sq = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    let mut x = x0.to_vec();
    let mut r = residuals(&x);
    let mut value = sq(&r);
    let mut mu = 1e-3;
    let mut iterations = 0;
    let mut converged = value <= opts.exact;

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let m = r.len();
        let mut jac = vec![0.0; m * n];
        for k in 0..n {
            let h = 1e-6 * x[k].abs().max(1.0);
            let mut xp = x.clone();
            xp[k] += h;
            let rp = residuals(&xp);
            xp[k] = x[k] - h;
            let rm = residuals(&xp);
            for i in 0..m {
                jac[i * n + k] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let mut jtj = vec![0.0; n * n];
        let mut grad = vec![0.0; n];
        for i in 0..m {
            let row = &jac[i * n..(i + 1) * n];
            for a in 0..n {
                grad[a] += row[a] * r[i];
                for b in 0..=a {
                    jtj[a * n + b] += row[a] * row[b];
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                jtj[b * n + a] = jtj[a * n + b];
            }
        }
        let scale = (0..n).map(|a| jtj[a * n + a]).fold(0.0, f64::max).max(1e-300);

        loop {
            let mut damped = jtj.clone();
            for a in 0..n {
                damped[a * n + a] += mu * scale;
            }
            let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
            let step = solve_spd(&damped, &rhs, n);
            if let Some(step) = step {
                let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
                let rt = residuals(&trial);
                let vt = sq(&rt);
                if vt < value {
                    let step_norm = step.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let decrease = value - vt;
                    x = trial;
                    r = rt;
                    value = vt;
                    mu = (mu / 3.0).max(1e-15);
                    if value <= opts.exact
                        || decrease <= opts.tolerance * value
                        || step_norm <= opts.tolerance * (x_norm + opts.tolerance)
                    {
                        converged = true;
                    }
                    break;
                }
            }
            mu *= 4.0;
            if mu > 1e16 {
                // No descent direction is visible at finite-difference
                // resolution: treat the point as stationary.
                converged = true;
                break;
            }
        }
    }
    Minimum {
        x,
        value,
        iterations,
        converged,
    }
}

/// Solves `A x = b` for a symmetric positive definite `n×n` matrix by
/// Cholesky factorization. Returns `None` if `A` is not numerically PD.
pub fn solve_spd(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            if i == j {
                let d = a[i * n + i] - s;
                if d <= 0.0 || !d.is_finite() {
                    return None;
                }
                l[i * n + i] = d.sqrt();
            } else {
                l[i * n + j] = (a[i * n + j] - s) / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i * n + i];
    }
    Some(x)
}
