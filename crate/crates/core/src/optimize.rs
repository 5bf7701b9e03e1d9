//! Derivative-free maximization (Nelder-Mead simplex).

/// Result of one simplex run.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// Settings for [`nelder_mead_max`].
#[derive(Debug, Clone, Copy)]
pub struct NelderMead {
    pub initial_step: f64,
    pub max_evals: usize,
    /// Stop once the spread of simplex values falls below this.
    pub ftol: f64,
    /// Stop as soon as the best value exceeds this.
    pub target: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            initial_step: 0.5,
            max_evals: 10_000,
            ftol: 1e-14,
            target: f64::INFINITY,
        }
    }
}

/// Maximizes `f` from `x0` with the standard reflection / expansion /
/// contraction / shrink coefficients (1, 2, 1/2, 1/2).
///
/// A converged simplex is restarted once around its best vertex, which
/// guards against premature collapse on non-smooth objectives such as a
/// smallest eigenvalue.
pub fn nelder_mead_max<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: NelderMead) -> Optimum {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        // minimize the negative; NaN counts as worst
        if v.is_nan() {
            f64::INFINITY
        } else {
            -v
        }
    };

    let mut start = x0.to_vec();
    let mut step = opts.initial_step;
    let mut best = Optimum {
        x: start.clone(),
        value: f64::NEG_INFINITY,
        evaluations: 0,
    };
    for _restart in 0..4 {
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        let v = eval(&start, &mut evals);
        simplex.push((start.clone(), v));
        for i in 0..n {
            let mut x = start.clone();
            x[i] += if x[i].abs() > 1e-3 { step * x[i].abs().max(1.0) } else { step };
            let v = eval(&x, &mut evals);
            simplex.push((x, v));
        }

        while evals < opts.max_evals {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            if -simplex[0].1 > opts.target {
                break;
            }
            let spread = simplex[n].1 - simplex[0].1;
            if spread.abs() <= opts.ftol * (simplex[0].1.abs() + opts.ftol) {
                break;
            }
            let mut centroid = vec![0.0; n];
            for (x, _) in &simplex[..n] {
                for (c, xi) in centroid.iter_mut().zip(x) {
                    *c += xi / n as f64;
                }
            }
            let worst = simplex[n].clone();
            let along = |t: f64| -> Vec<f64> {
                centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (c - w)).collect()
            };
            let xr = along(1.0);
            let fr = eval(&xr, &mut evals);
            if fr < simplex[0].1 {
                let xe = along(2.0);
                let fe = eval(&xe, &mut evals);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                let (xc, fc) = if fr < worst.1 {
                    let xc = along(0.5);
                    let fc = eval(&xc, &mut evals);
                    (xc, fc)
                } else {
                    let xc = along(-0.5);
                    let fc = eval(&xc, &mut evals);
                    (xc, fc)
                };
                if fc < worst.1.min(fr) {
                    simplex[n] = (xc, fc);
                } else {
                    let x0 = simplex[0].0.clone();
                    for item in simplex.iter_mut().skip(1) {
                        let x: Vec<f64> = x0.iter().zip(&item.0).map(|(a, b)| a + 0.5 * (b - a)).collect();
                        let v = eval(&x, &mut evals);
                        *item = (x, v);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, v) = simplex.swap_remove(0);
        let improved = -v > best.value + 1e-12 * best.value.abs().max(1.0);
        if -v > best.value {
            best.x = x.clone();
            best.value = -v;
        }
        if !improved || best.value > opts.target || evals >= opts.max_evals {
            break;
        }
        start = x;
        step *= 0.5;
    }
    best.evaluations = evals;
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximizes_concave_quadratic() {
        let f = |x: &[f64]| -(x[0] - 1.0).powi(2) - 2.0 * (x[1] + 0.5).powi(2) + 3.0;
        let r = nelder_mead_max(f, &[0.0, 0.0], NelderMead::default());
        assert!((r.value - 3.0).abs() < 1e-10);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] + 0.5).abs() < 1e-5);
    }

    #[test]
    fn respects_budget_and_target() {
        let f = |x: &[f64]| -x.iter().map(|v| (v - 3.0).powi(2)).sum::<f64>();
        let r = nelder_mead_max(f, &[0.0; 4], NelderMead { max_evals: 50, ..Default::default() });
        assert!(r.evaluations <= 50 + 8);
        let r = nelder_mead_max(f, &[0.0; 4], NelderMead { target: -1.0, ..Default::default() });
        assert!(r.value > -1.0);
    }

    #[test]
    fn maximizes_nonsmooth_min() {
        // max of min(x, 2 - x, y, 1 - y) is 0.5 at (1, 0.5)
        let f = |x: &[f64]| x[0].min(2.0 - x[0]).min(x[1]).min(1.0 - x[1]);
        let r = nelder_mead_max(f, &[0.2, 0.1], NelderMead::default());
        assert!((r.value - 0.5).abs() < 1e-6, "{}", r.value);
    }
}
