//! Exact log-likelihood, its analytic gradient and maximum-likelihood fitting.
//!
//! For events `τ_n` of direction `d_n` on `[0, T]`:
//!
//! ```text
//! L(θ) = Σ_n log λ_{d_n}(τ_n−) − 2μT − (α1 + α2)/β · Σ_n (1 − e^{−β(T − τ_n)})
//! ```
//!
//! The kernel sums `S_k(n) = Σ_{m<n, d_m=k} e^{−β(τ_n − τ_m)}` and their
//! `β`-derivatives are carried forward in one pass, so value and gradient
//! cost O(N).

use crate::clock::Stopwatch;
use crate::error::{Error, Result};
use crate::math;
use crate::model::{EventSequence, HawkesParams};
use crate::optim::{self, BfgsOptions};

/// Minimum number of events accepted by [`fit_mle`].
pub const MIN_FIT_EVENTS: usize = 10;

fn check_evaluable(params: &HawkesParams) -> Result<()> {
    let ok = params.mu > 0.0
        && params.beta > 0.0
        && params.alpha1 >= 0.0
        && params.alpha2 >= 0.0
        && params.to_array().iter().all(|v| v.is_finite());
    if ok {
        Ok(())
    } else {
        params.check()
    }
}

/// Log-likelihood and gradient with respect to `(μ, α1, α2, β)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodValue {
    pub value: f64,
    pub gradient: [f64; 4],
}

/// Log-likelihood of `seq` under `params`. Stationarity is not required.
pub fn log_likelihood(params: &HawkesParams, seq: &EventSequence) -> Result<f64> {
    check_evaluable(params)?;
    let v = evaluate::<false>(params, seq);
    if v.value.is_finite() {
        Ok(v.value)
    } else {
        Err(Error::NonFinite("log-likelihood"))
    }
}

/// Log-likelihood together with its exact gradient.
pub fn log_likelihood_grad(params: &HawkesParams, seq: &EventSequence) -> Result<LikelihoodValue> {
    check_evaluable(params)?;
    let v = evaluate::<true>(params, seq);
    if v.value.is_finite() && v.gradient.iter().all(|g| g.is_finite()) {
        Ok(v)
    } else {
        Err(Error::NonFinite("log-likelihood gradient"))
    }
}

fn evaluate<const GRAD: bool>(p: &HawkesParams, seq: &EventSequence) -> LikelihoodValue {
    let (mu, a1, a2, beta) = (p.mu, p.alpha1, p.alpha2, p.beta);
    let horizon = seq.horizon();
    // Kernel sums S[k] and dS[k]/dβ for up (0) and down (1) sources.
    let mut s = [0.0f64; 2];
    let mut ds = [0.0f64; 2];
    let mut prev = 0.0;
    let mut log_sum = 0.0;
    let mut g = [0.0f64; 4];
    let mut tail = 0.0; // Σ (1 − e^{−β(T−τ)})
    let mut tail_dt = 0.0; // Σ (T−τ) e^{−β(T−τ)}

    for e in seq.iter() {
        let dt = e.time - prev;
        prev = e.time;
        let decay = math::exp(-beta * dt);
        if GRAD {
            ds[0] = decay * (ds[0] - dt * s[0]);
            ds[1] = decay * (ds[1] - dt * s[1]);
        }
        s[0] *= decay;
        s[1] *= decay;

        let own = e.direction.index();
        let other = 1 - own;
        let lambda = mu + a1 * s[own] + a2 * s[other];
        log_sum += math::ln(lambda);

        let rest = horizon - e.time;
        let survive = -math::exp_m1(-beta * rest);
        tail += survive;
        if GRAD {
            let inv = 1.0 / lambda;
            g[0] += inv;
            g[1] += s[own] * inv;
            g[2] += s[other] * inv;
            g[3] += (a1 * ds[own] + a2 * ds[other]) * inv;
            tail_dt += rest * (1.0 - survive);
        }
        s[own] += 1.0;
    }

    let branching_mass = (a1 + a2) / beta;
    let value = log_sum - 2.0 * mu * horizon - branching_mass * tail;
    if GRAD {
        g[0] -= 2.0 * horizon;
        g[1] -= tail / beta;
        g[2] -= tail / beta;
        g[3] -= -branching_mass / beta * tail + branching_mass * tail_dt;
    }
    LikelihoodValue { value, gradient: g }
}

/// Starting point for [`fit_mle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// `μ = N / (2T) · 0.5`, branching ratio 0.5 split evenly, `β = 1`.
    Auto,
    Given(HawkesParams),
}

impl Init {
    pub fn resolve(&self, seq: &EventSequence) -> Result<HawkesParams> {
        match *self {
            Init::Auto => {
                let n = seq.len() as f64;
                let t = seq.horizon().max(f64::MIN_POSITIVE);
                Ok(HawkesParams::new(0.5 * n / (2.0 * t), 0.25, 0.25, 1.0))
            }
            Init::Given(p) => {
                p.check()?;
                if p.alpha1 <= 0.0 || p.alpha2 <= 0.0 {
                    return Err(Error::InvalidConfig(
                        "initial excitations must be strictly positive".into(),
                    ));
                }
                Ok(p)
            }
        }
    }
}

/// Outcome of a likelihood maximization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub params: HawkesParams,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Seconds spent in the fit; zero when built without `std`.
    pub wall_time: f64,
    /// ∞-norm of the gradient in the optimizer's coordinates at the returned point.
    pub gradient_norm: f64,
}

/// Maps unconstrained coordinates to parameters:
/// `μ, α1, α2, δ = softplus(x)`, `β = α1 + α2 + δ`.
pub fn params_from_unconstrained(x: &[f64; 4]) -> HawkesParams {
    HawkesParams::from_excess_form([
        math::softplus(x[0]),
        math::softplus(x[1]),
        math::softplus(x[2]),
        math::softplus(x[3]),
    ])
}

/// Inverse of [`params_from_unconstrained`]; requires `α > 0` and `β > α1 + α2`.
pub fn params_to_unconstrained(p: &HawkesParams) -> [f64; 4] {
    let c = p.to_excess_form();
    [
        math::softplus_inv(c[0]),
        math::softplus_inv(c[1]),
        math::softplus_inv(c[2]),
        math::softplus_inv(c[3]),
    ]
}

/// Gradient of `L` in unconstrained coordinates from its gradient in `(μ, α1, α2, β)`.
fn chain_to_unconstrained(x: &[f64; 4], g: &[f64; 4]) -> [f64; 4] {
    let d = [
        math::sigmoid(x[0]),
        math::sigmoid(x[1]),
        math::sigmoid(x[2]),
        math::sigmoid(x[3]),
    ];
    [g[0] * d[0], (g[1] + g[3]) * d[1], (g[2] + g[3]) * d[2], g[3] * d[3]]
}

/// Maximizes the log-likelihood over the stationary region with BFGS in
/// softplus coordinates. Non-convergence is reported, not raised.
pub fn fit_mle(seq: &EventSequence, init: Init) -> Result<FitResult> {
    fit_mle_with(seq, init, &BfgsOptions::default())
}

pub fn fit_mle_with(seq: &EventSequence, init: Init, opts: &BfgsOptions) -> Result<FitResult> {
    let clock = Stopwatch::start();
    if seq.len() < MIN_FIT_EVENTS {
        return Err(Error::NotEnoughEvents { needed: MIN_FIT_EVENTS, got: seq.len() });
    }
    let start = params_to_unconstrained(&init.resolve(seq)?);
    let objective = |x: &[f64; 4]| {
        let p = params_from_unconstrained(x);
        if !(p.mu > 0.0 && p.alpha1 >= 0.0 && p.alpha2 >= 0.0 && p.beta > p.alpha1 + p.alpha2) {
            return None;
        }
        let v = evaluate::<true>(&p, seq);
        let g = chain_to_unconstrained(x, &v.gradient);
        Some((-v.value, [-g[0], -g[1], -g[2], -g[3]]))
    };
    let out = optim::minimize(objective, start, opts);
    if !out.value.is_finite() {
        return Err(Error::NonFinite("log-likelihood at the initial point"));
    }
    let params = params_from_unconstrained(&out.x);
    Ok(FitResult {
        params,
        loglik: -out.value,
        iterations: out.iterations,
        converged: out.converged,
        wall_time: clock.seconds(),
        gradient_norm: out.gradient.iter().fold(0.0, |m, v| m.max(v.abs())),
    })
}
