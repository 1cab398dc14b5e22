//! Spectral representation of fractional powers,
//!
//! ```text
//! 1/(w^β + z) = sin(πβ)/π ∫₀^∞ s^{−β} / ((w + s) σ_β(s, z)) ds,
//! σ_β(s, z) = 1 + s^{−2β} z² + 2 z s^{−β} cos(πβ),
//! ```
//!
//! evaluated in the variable `ln s`, where every integrand used here decays
//! exponentially at both ends. The integration range is split at the dyadic
//! points `2^{−k} z^{1/β}`, at `z^{1/β}` and at `1`, and beyond the outermost
//! of these the panels double in width towards the truncation points. For `β > 1/2` the
//! factor `1/σ_β` peaks at `s = z^{1/β}` with a width of order `sin πβ` in
//! `ln s`, and the panels are refined geometrically towards that point.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quad::{integrate_vec, QuadOptions, QuadResult};

/// `ln σ_β(s, z)` as a function of `t = ln s` and `ln z`, using the sum of
/// squares `(1 + r cos πβ)² + (r sin πβ)²` with `r = z s^{−β}` and factoring
/// out `r²` when `r > 1`, so that it stays finite for any `t`.
pub fn ln_sigma_beta(t: f64, ln_z: f64, beta: f64) -> f64 {
    let (sn, cs) = (PI * beta).sin_cos();
    let ln_r = ln_z - beta * t;
    if ln_r > 0.0 {
        let inv = (-ln_r).exp();
        2.0 * ln_r + ((inv + cs).powi(2) + sn * sn).ln()
    } else {
        let r = ln_r.exp();
        ((1.0 + r * cs).powi(2) + (r * sn).powi(2)).ln()
    }
}

/// `ln(x + e^t)` for `x ≥ 0`, without forming `e^t`.
pub fn ln_add_exp(x: f64, t: f64) -> f64 {
    let ln_x = x.ln();
    if ln_x > t {
        ln_x + (t - ln_x).exp().ln_1p()
    } else {
        t + (ln_x - t).exp().ln_1p()
    }
}

/// Number of dyadic panels below `z^{1/β}`.
const DYADIC_PANELS: usize = 8;

/// Breakpoints in `ln s` for an integrand whose small-`s` behaviour is
/// `s^{α_lo}` (in the measure `d ln s`) and whose large-`s` behaviour is
/// `s^{−α_hi}`.
pub fn log_panels(w: f64, z: f64, beta: f64, alpha_lo: f64, alpha_hi: f64) -> Vec<f64> {
    let ln_zb = (z > 0.0).then(|| z.ln() / beta);
    let mut small: f64 = 0.0;
    let mut large: f64 = 0.0;
    for v in [(w > 0.0).then(|| w.ln()), ln_zb].into_iter().flatten() {
        small = small.min(v);
        large = large.max(v);
    }
    let lo = small - 42.0 / alpha_lo;
    let hi = large + 42.0 / alpha_hi;
    let mut edges = vec![lo, hi, 0.0];
    let mut step = 1.0;
    while small - step > lo || large + step < hi {
        edges.push(small - step);
        edges.push(large + step);
        step *= 2.0;
    }
    if let Some(ln_zb) = ln_zb {
        for k in 0..=DYADIC_PANELS {
            edges.push(ln_zb - k as f64 * std::f64::consts::LN_2);
        }
        if beta > 0.5 {
            let width = (PI * beta).sin();
            let mut offset = 1.0;
            while offset > 0.25 * width {
                edges.push(ln_zb + offset);
                edges.push(ln_zb - offset);
                offset *= 0.5;
            }
        }
    }
    if w > 0.0 {
        edges.push(w.ln());
    }
    edges.retain(|e| *e >= lo && *e <= hi);
    edges.sort_by(|a, b| a.total_cmp(b));
    edges.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    edges
}

/// Integrates a vector-valued `h(t)` over `t = ln s ∈ ℝ` on the given
/// log-panels; `h` already includes the Jacobian `s`.
pub fn integrate_log_panels<F>(mut h: F, edges: &[f64], dim: usize, opts: QuadOptions) -> Result<QuadResult>
where
    F: FnMut(f64, &mut [f64]),
{
    let mut value = vec![0.0; dim];
    let mut error = 0.0;
    let mut evaluations = 0;
    for w in edges.windows(2) {
        let r = integrate_vec(&mut h, w[0], w[1], dim, opts)?;
        for (acc, v) in value.iter_mut().zip(&r.value) {
            *acc += v;
        }
        error += r.error;
        evaluations += r.evaluations;
    }
    Ok(QuadResult { value, error, evaluations })
}

/// Evaluates `1/(w^β + z)` through the spectral integral.
pub fn spectral_fraction(w: f64, z: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParameter(format!("beta = {beta} must lie in (0, 1)")));
    }
    if !(w >= 0.0 && z >= 0.0) || w.powf(beta) + z <= 0.0 {
        return Err(Error::InvalidParameter(format!("need w, z ≥ 0 with w^β + z > 0, got w={w}, z={z}")));
    }
    let alpha_lo = if w > 0.0 { 1.0 - beta } else { beta };
    let edges = log_panels(w, z, beta, alpha_lo, beta);
    let opts = QuadOptions { abs_tol: 1e-14, rel_tol: 1e-13, max_intervals: 4000 };
    // Evaluated as the exponential of its logarithm in `t = ln s`, since for
    // β near 0 or 1 the panels reach far beyond the range of `f64` in `s`.
    let ln_z = z.ln();
    let r = integrate_log_panels(
        |t, out| out[0] = ((1.0 - beta) * t - ln_add_exp(w, t) - ln_sigma_beta(t, ln_z, beta)).exp(),
        &edges,
        1,
        opts,
    )?;
    let sn = (PI * beta).sin();
    let (total, error) = (r.value[0], r.error);
    let value = sn / PI * total;
    let target = 1e-8 * value.abs();
    if error * sn / PI > target {
        return Err(Error::Quadrature { achieved: error * sn / PI, requested: target });
    }
    Ok(value)
}
