//! BFGS with backtracking line search for small dense problems.

/// Stopping rule and line-search constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    /// Converged once the gradient's ∞-norm falls below this.
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Step shrink factor per backtrack.
    pub shrink: f64,
    pub max_backtracks: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            gradient_tolerance: 1e-6,
            max_iterations: 500,
            armijo: 1e-4,
            shrink: 0.5,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOutcome<const N: usize> {
    pub x: [f64; N],
    pub value: f64,
    pub gradient: [f64; N],
    pub iterations: usize,
    pub converged: bool,
    pub evaluations: usize,
}

fn inf_norm<const N: usize>(v: &[f64; N]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot<const N: usize>(a: &[f64; N], b: &[f64; N]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn scaled_identity<const N: usize>(scale: f64) -> [[f64; N]; N] {
    let mut h = [[0.0; N]; N];
    for (i, row) in h.iter_mut().enumerate() {
        row[i] = scale;
    }
    h
}

/// Minimizes `f`, which returns `None` (or a non-finite value) outside its domain.
///
/// A trial step is accepted on Armijo decrease. Close to the optimum the
/// decrease drops below the rounding noise of `f`; there a step is also
/// accepted when `f` does not rise beyond that noise and the gradient norm
/// shrinks.
pub fn minimize<const N: usize, F>(mut f: F, x0: [f64; N], opts: &BfgsOptions) -> BfgsOutcome<N>
where
    F: FnMut(&[f64; N]) -> Option<(f64, [f64; N])>,
{
    let mut evaluations = 1;
    let (mut fx, mut g) = match f(&x0) {
        Some((v, g)) if v.is_finite() && g.iter().all(|x| x.is_finite()) => (v, g),
        _ => {
            return BfgsOutcome {
                x: x0,
                value: f64::NAN,
                gradient: [f64::NAN; N],
                iterations: 0,
                converged: false,
                evaluations,
            }
        }
    };
    let mut x = x0;
    let mut h = scaled_identity::<N>(1.0 / inf_norm(&g).max(1.0));
    let mut fresh_h = true;
    let mut iterations = 0;
    let mut converged = inf_norm(&g) < opts.gradient_tolerance;

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let mut p = [0.0; N];
        for i in 0..N {
            p[i] = -dot(&h[i], &g);
        }
        let mut slope = dot(&g, &p);
        if !(slope < 0.0) {
            h = scaled_identity(1.0 / inf_norm(&g).max(1.0));
            fresh_h = true;
            for i in 0..N {
                p[i] = -h[i][i] * g[i];
            }
            slope = dot(&g, &p);
        }

        let noise = 1e-13 * fx.abs().max(1.0);
        let g_norm = inf_norm(&g);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let mut trial = x;
            for i in 0..N {
                trial[i] += step * p[i];
            }
            evaluations += 1;
            if let Some((ft, gt)) = f(&trial) {
                if ft.is_finite() && gt.iter().all(|v| v.is_finite()) {
                    let armijo = ft <= fx + opts.armijo * step * slope;
                    let flat = ft <= fx + noise && inf_norm(&gt) < g_norm;
                    if armijo || flat {
                        accepted = Some((trial, ft, gt));
                        break;
                    }
                }
            }
            step *= opts.shrink;
        }

        let Some((x_new, f_new, g_new)) = accepted else {
            if fresh_h {
                break;
            }
            h = scaled_identity(1.0 / g_norm.max(1.0));
            fresh_h = true;
            continue;
        };

        let mut s = [0.0; N];
        let mut y = [0.0; N];
        for i in 0..N {
            s[i] = x_new[i] - x[i];
            y[i] = g_new[i] - g[i];
        }
        let sy = dot(&s, &y);
        let yy = dot(&y, &y);
        if sy > 1e-12 * libm::sqrt(dot(&s, &s) * yy) {
            if fresh_h {
                h = scaled_identity(sy / yy);
                fresh_h = false;
            }
            // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ
            let rho = 1.0 / sy;
            let mut hy = [0.0; N];
            for i in 0..N {
                hy[i] = dot(&h[i], &y);
            }
            let yhy = dot(&y, &hy);
            for i in 0..N {
                for j in 0..N {
                    h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        x = x_new;
        fx = f_new;
        g = g_new;
        converged = inf_norm(&g) < opts.gradient_tolerance;
    }

    BfgsOutcome { x, value: fx, gradient: g, iterations, converged, evaluations }
}
