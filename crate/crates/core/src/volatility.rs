//! Closed-form Hawkes volatility and the realized-volatility benchmark.
//!
//! With `β = diag(β, β)`, `u = (1, −1)`, mark-mean matrix
//! `Z̄ = [[E Z1, E Z2], [E Z1, E Z2]]` and second-moment matrix `Z̄⁽²⁾` built
//! the same way from `E Z²`:
//!
//! ```text
//! E[λ]    = (β − α)⁻¹ β μ
//! E[λλᵀ]  = (β − α)⁻¹ (½ α Dg(E[λ]) α + β μ E[λ]ᵀ)
//! B       = {Z̄ᵀ ∘ E[λλᵀ] + Dg(E[λ]) (α ∘ Z̄)ᵀ − Dg(E Z) E[λ] E[λ]ᵀ} (β − α)⁻¹
//! Var(N1(t) − N2(t)) = uᵀ [ Z̄∘B + (Z̄∘B)ᵀ + Z̄⁽²⁾ ∘ Dg(E[λ]) ] u · t
//! ```

use crate::error::{Error, Result};
use crate::linalg::{Mat2, Vec2};
use crate::math;
use crate::model::{EventSequence, HawkesParams, MarkMoments};

/// Seconds in a trading year: 252 days of 6.5 hours.
pub const TRADING_SECONDS_PER_YEAR: f64 = 252.0 * 6.5 * 3600.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolConfig {
    /// Price units per tick.
    pub tick_size: f64,
    /// Seconds over which the variance accrues.
    pub horizon_t: f64,
    /// Seconds per year used to annualize.
    pub annualization: f64,
}

impl Default for VolConfig {
    fn default() -> Self {
        VolConfig { tick_size: 1.0, horizon_t: 1.0, annualization: TRADING_SECONDS_PER_YEAR }
    }
}

impl VolConfig {
    pub fn check(&self) -> Result<()> {
        for (name, v) in [
            ("tick_size", self.tick_size),
            ("horizon_t", self.horizon_t),
            ("annualization", self.annualization),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(alloc::format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Stationary moments of the intensity together with `B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSet {
    pub e_lambda: Vec2,
    pub e_lambda_outer: Mat2,
    pub b_matrix: Mat2,
}

fn alpha_matrix(p: &HawkesParams) -> Mat2 {
    Mat2::new(p.alpha1, p.alpha2, p.alpha2, p.alpha1)
}

/// `(β − α)⁻¹`, which exists for every stationary parameter set.
fn resolvent(p: &HawkesParams) -> Result<Mat2> {
    p.check()?;
    (Mat2::diag(Vec2::splat(p.beta)) - alpha_matrix(p))
        .inverse()
        .ok_or(Error::NonFinite("(beta - alpha) inverse"))
}

/// `E[λ_t] = (β − α)⁻¹ β μ`.
pub fn mean_intensity(params: &HawkesParams) -> Result<Vec2> {
    let r = resolvent(params)?;
    Ok(r * Vec2::splat(params.beta * params.mu))
}

/// `E[λ_t λ_tᵀ]`, evaluated as written without symmetrization.
pub fn second_moment(params: &HawkesParams) -> Result<Mat2> {
    let r = resolvent(params)?;
    let e = r * Vec2::splat(params.beta * params.mu);
    let a = alpha_matrix(params);
    let inner = a * Mat2::diag(e) * a * 0.5 + Vec2::splat(params.beta * params.mu).outer(e);
    let m = r * inner;
    let scale = m.0[0][0].abs().max(1.0);
    assert!(
        (m.0[0][1] - m.0[1][0]).abs() <= 1e-10 * scale,
        "second moment lost symmetry: {m:?}"
    );
    Ok(m)
}

fn mark_mean_matrix(z: &MarkMoments) -> Mat2 {
    Mat2::new(z.z1_mean, z.z2_mean, z.z1_mean, z.z2_mean)
}

fn mark_square_matrix(z: &MarkMoments) -> Mat2 {
    Mat2::new(z.z1_sq, z.z2_sq, z.z1_sq, z.z2_sq)
}

/// The `B` matrix; `Dg(Z̄)` is read as `diag(E Z1, E Z2)`.
pub fn b_matrix(params: &HawkesParams, marks: &MarkMoments) -> Result<Mat2> {
    Ok(moments(params, marks)?.b_matrix)
}

/// `E[λ]`, `E[λλᵀ]` and `B` in one pass.
pub fn moments(params: &HawkesParams, marks: &MarkMoments) -> Result<MomentSet> {
    marks.check()?;
    let r = resolvent(params)?;
    let e_lambda = mean_intensity(params)?;
    let e_outer = second_moment(params)?;
    let zbar = mark_mean_matrix(marks);
    let a = alpha_matrix(params);
    let braces = zbar.transpose().hadamard(e_outer) + Mat2::diag(e_lambda) * a.hadamard(zbar).transpose()
        - Mat2::diag(Vec2(marks.means())) * e_lambda.outer(e_lambda);
    Ok(MomentSet { e_lambda, e_lambda_outer: e_outer, b_matrix: braces * r })
}

/// Long-run variance of `N1(t) − N2(t)` per unit time, in ticks².
pub fn variance_rate(params: &HawkesParams, marks: &MarkMoments) -> Result<f64> {
    let m = moments(params, marks)?;
    let zbar = mark_mean_matrix(marks);
    let z2 = mark_square_matrix(marks);
    let core = zbar.hadamard(m.b_matrix).symmetrized_sum() + z2.hadamard(Mat2::diag(m.e_lambda));
    let rate = core.quadratic_form(Vec2::new(1.0, -1.0));
    if !rate.is_finite() {
        return Err(Error::NonFinite("variance rate"));
    }
    if rate < 0.0 {
        return Err(Error::NegativeRadicand(rate));
    }
    Ok(rate)
}

/// Standard deviation of net price movement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HawkesVolatility {
    /// Variance of `N1 − N2` per second, ticks².
    pub variance_rate: f64,
    /// `SD(N1(t) − N2(t))` over `cfg.horizon_t`, in ticks.
    pub sd_ticks: f64,
    /// Same, in price units.
    pub sd_price: f64,
    /// Price units per square-root second.
    pub per_sec_sqrt: f64,
    /// Price units over one year of `cfg.annualization` seconds.
    pub annualized: f64,
}

pub fn hawkes_volatility(
    params: &HawkesParams,
    marks: &MarkMoments,
    cfg: &VolConfig,
) -> Result<HawkesVolatility> {
    cfg.check()?;
    let rate = variance_rate(params, marks)?;
    let sd_ticks = math::sqrt(rate * cfg.horizon_t);
    let per_sec = math::sqrt(rate);
    Ok(HawkesVolatility {
        variance_rate: rate,
        sd_ticks,
        sd_price: cfg.tick_size * sd_ticks,
        per_sec_sqrt: cfg.tick_size * per_sec,
        annualized: cfg.tick_size * per_sec * math::sqrt(cfg.annualization),
    })
}

/// Sample means of the mark and the squared mark per direction.
pub fn estimate_mark_moments(seq: &EventSequence) -> Result<MarkMoments> {
    let mut n = [0usize; 2];
    let mut s1 = [0.0f64; 2];
    let mut s2 = [0.0f64; 2];
    for e in seq.iter() {
        let k = e.direction.index();
        let z = e.mark as f64;
        n[k] += 1;
        s1[k] += z;
        s2[k] += z * z;
    }
    for (k, d) in [crate::Direction::Up, crate::Direction::Down].into_iter().enumerate() {
        if n[k] == 0 {
            return Err(Error::MissingDirection(d));
        }
    }
    let f = |k: usize| (s1[k] / n[k] as f64, s2[k] / n[k] as f64);
    let (m1, q1) = f(0);
    let (m2, q2) = f(1);
    // Sums of integers are exact, so Jensen holds without rounding slack.
    Ok(MarkMoments { z1_mean: m1, z2_mean: m2, z1_sq: q1.max(m1 * m1), z2_sq: q2.max(m2 * m2) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealizedVolatility {
    /// `sqrt(Σ r²)` over the window.
    pub realized: f64,
    /// `realized · sqrt(annualization / horizon_t)`.
    pub annualized: f64,
    pub returns: usize,
}

/// Square root of summed squared log returns of a price path sampled on a
/// regular grid; `cfg.horizon_t` is the window length used to annualize.
pub fn realized_volatility(prices: &[f64], cfg: &VolConfig) -> Result<RealizedVolatility> {
    cfg.check()?;
    if prices.len() < 2 {
        return Err(Error::NotEnoughEvents { needed: 2, got: prices.len() });
    }
    if let Some((index, &price)) = prices.iter().enumerate().find(|(_, p)| !(**p > 0.0)) {
        return Err(Error::NonPositivePrice { index, price });
    }
    let mut sum = 0.0;
    let mut prev = math::ln(prices[0]);
    for &p in &prices[1..] {
        let lp = math::ln(p);
        sum += (lp - prev) * (lp - prev);
        prev = lp;
    }
    let realized = math::sqrt(sum);
    Ok(RealizedVolatility {
        realized,
        annualized: realized * math::sqrt(cfg.annualization / cfg.horizon_t),
        returns: prices.len() - 1,
    })
}

/// Last observed value at or before each grid point `start + k·step`,
/// `k = 0..=floor((end − start)/step)`. `times` must be non-decreasing and
/// `start >= times[0]`.
pub fn sample_on_grid(times: &[f64], values: &[f64], start: f64, end: f64, step: f64) -> alloc::vec::Vec<f64> {
    let mut out = alloc::vec::Vec::new();
    if times.is_empty() || !(step > 0.0) || end < start {
        return out;
    }
    let count = math::floor((end - start) / step + 1e-9) as usize + 1;
    let mut j = 0;
    for k in 0..count {
        let g = start + k as f64 * step;
        while j + 1 < times.len() && times[j + 1] <= g {
            j += 1;
        }
        out.push(values[j]);
    }
    out
}
