//! The polynomial family `P_t` behind the finite-range decomposition.
//!
//! Let `ψ(s) ∝ exp(−a/(1−4s²))` on `(−½, ½)` and `φ = ψ ⋆ ψ`, supported on
//! `[−1, 1]` with `φ̂ = ψ̂² ≥ 0`. With `x = 2 − 2cos θ ∈ [0, 4]` put
//!
//! ```text
//! P_t(x) = (κ t)^{−1} Σ_{|m|<t} φ(m/t) cos(mθ)
//!        = κ^{−1} Σ_{k∈Z} φ̂(t(θ + 2πk))          (Poisson summation)
//! ```
//!
//! `cos(mθ) = T_m(1 − x/2)`, so `P_t` is a polynomial of degree `< t` in `x`,
//! nonnegative by the second form, equal to `φ(0)/(κt)` for `t < 1`, and
//!
//! ```text
//! ∫₀^∞ t P_t(x) dt = κ^{−1} ∫₀^∞ u φ̂(u) du · Σ_k (θ + 2πk)^{−2} = 1/x
//! ```
//!
//! once `κ = ∫₀^∞ u φ̂(u) du = 2[∫₀¹ (φ(0) − φ(s))/s² ds + φ(0)]`. Because `ψ`
//! is of Gevrey class 2, `φ̂(u) ≲ e^{−c√u}` and hence
//! `P_t(x) ≲ e^{−c(xt²)^{1/4}}`.
//!
//! Both `ψ ⋆ ψ` and `ψ̂` are integrals of functions that vanish to all orders
//! at the edge of their support, so the plain trapezoidal rule converges
//! faster than any power of the step and reaches round-off with a few
//! hundred nodes. The deficit `D(u) = (φ(0) − φ(u))/u²` is tabulated once on
//! Chebyshev panels; everything else is read off that table.

use std::f64::consts::PI;

use crate::error::Result;
use crate::quad::{integrate, QuadOptions};

/// Default sharpness `a` of the bump `ψ(s) ∝ exp(−a/(1−4s²))`.
pub const DEFAULT_SHARPNESS: f64 = 8.0;

/// `ψ(s) = exp(a − a/(1−4s²)) = exp(−4as²/(1−4s²))` on `|s| < ½`, scaled
/// so that `ψ(0) = 1`.
pub fn bump(a: f64, s: f64) -> f64 {
    let s2 = 4.0 * s * s;
    let r = 1.0 - s2;
    if r <= 0.0 {
        0.0
    } else {
        (-a * s2 / r).exp()
    }
}

/// Trapezoidal nodes per unit length for the convolution integrals.
const CONV_NODES: usize = 512;
/// Trapezoidal nodes per unit length for the transform `ψ̂`.
const TRANSFORM_NODES: usize = 4096;

/// `φ(u) = ∫ ψ(v) ψ(u − v) dv`, even and supported on `[−1, 1]`.
pub fn bump_autocorrelation(a: f64, u: f64) -> f64 {
    let u = u.abs();
    if u >= 1.0 {
        return 0.0;
    }
    let h = 1.0 / CONV_NODES as f64;
    let half = CONV_NODES as i64 / 2;
    (-half..=half).map(|i| i as f64 * h).map(|v| bump(a, v) * bump(a, u - v)).sum::<f64>() * h
}

/// `φ(0) − φ(u) = ½ ∫ (ψ(v+u) − ψ(v))² dv`, which has no cancellation at
/// small `u`.
pub fn bump_deficit(a: f64, u: f64) -> f64 {
    let u = u.abs();
    let h = 1.0 / CONV_NODES as f64;
    let n = CONV_NODES as i64;
    let lo = -((0.5 + u) * n as f64).ceil() as i64;
    (lo..=n / 2)
        .map(|i| i as f64 * h)
        .map(|v| {
            let d = bump(a, v + u) - bump(a, v);
            d * d
        })
        .sum::<f64>()
        * 0.5
        * h
}

const PANELS: usize = 32;
const PANEL_ORDER: usize = 24;

/// Chebyshev expansion of a smooth function on one panel `[a, b]`.
#[derive(Clone, Debug)]
struct ChebPanel {
    a: f64,
    b: f64,
    coeffs: Vec<f64>,
    /// Coefficients of the antiderivative vanishing at `a`, in `u` units.
    integral: Vec<f64>,
}

impl ChebPanel {
    fn fit(a: f64, b: f64, f: impl Fn(f64) -> f64) -> Self {
        let k = PANEL_ORDER;
        let values: Vec<f64> = (0..k)
            .map(|j| {
                let t = (PI * (j as f64 + 0.5) / k as f64).cos();
                f(0.5 * (a + b) + 0.5 * (b - a) * t)
            })
            .collect();
        let mut coeffs: Vec<f64> = (0..k)
            .map(|m| {
                let s: f64 = values
                    .iter()
                    .enumerate()
                    .map(|(j, v)| v * (PI * m as f64 * (j as f64 + 0.5) / k as f64).cos())
                    .sum();
                2.0 * s / k as f64
            })
            .collect();
        coeffs[0] *= 0.5;
        let half = 0.5 * (b - a);
        let at = |m: usize| if m < k { coeffs[m] } else { 0.0 };
        let mut integral = vec![0.0; k + 1];
        integral[1] = half * (at(0) - 0.5 * at(2));
        for m in 2..=k {
            integral[m] = half * (at(m - 1) - at(m + 1)) / (2.0 * m as f64);
        }
        // Fix the constant so that the antiderivative vanishes at t = −1.
        let at_minus_one: f64 =
            integral.iter().enumerate().skip(1).map(|(m, c)| if m % 2 == 0 { *c } else { -c }).sum();
        integral[0] = -at_minus_one;
        Self { a, b, coeffs, integral }
    }

    fn local(&self, u: f64) -> f64 {
        (2.0 * u - self.a - self.b) / (self.b - self.a)
    }

    fn eval(&self, u: f64) -> f64 {
        clenshaw(&self.coeffs, self.local(u))
    }

    fn antiderivative(&self, u: f64) -> f64 {
        clenshaw(&self.integral, self.local(u))
    }

    fn total(&self) -> f64 {
        self.integral.iter().sum()
    }
}

fn clenshaw(c: &[f64], t: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * t * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    t * b1 - b2 + c[0]
}

/// Coefficients `c_{j,m}` of the slice functions `S_j` for a fixed set of
/// scale edges; see [`PtFamily::slices`].
#[derive(Clone, Debug)]
pub struct SliceCoefficients {
    /// Range of the operator the family is applied to.
    pub range: f64,
    /// Scale edges `T_0 < T_1 < … < T_J`.
    pub edges: Vec<f64>,
    /// `coeffs[j][m]` for slice `j+1` and `m = 0, 1, …` (only `m R < T_{j+1}`).
    pub coeffs: Vec<Vec<f64>>,
    norm: f64,
}

impl SliceCoefficients {
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Highest Chebyshev index used by any slice.
    pub fn max_degree(&self) -> usize {
        self.coeffs.iter().map(|c| c.len().saturating_sub(1)).max().unwrap_or(0)
    }

    /// Evaluates `S_j(x)` for every slice, writing into `out` (length `len()`).
    /// Requires `x ∈ [0, 4]`.
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        let y = 1.0 - 0.5 * x;
        for (slot, c) in out.iter_mut().zip(&self.coeffs) {
            *slot = (2.0 * clenshaw(c, y) - c[0]) * self.norm;
        }
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(x, &mut out);
        out
    }
}

/// The family `P_t` together with its normalisation constants.
#[derive(Clone, Debug)]
pub struct PtFamily {
    /// Sharpness `a` of the bump.
    pub sharpness: f64,
    /// `φ(0) = ∫ ψ²`.
    pub phi0: f64,
    /// `κ = ∫₀^∞ u φ̂(u) du`.
    pub kappa: f64,
    panels: Vec<ChebPanel>,
    /// `∫₀^{a_p} D` at the left edge of every panel.
    cumulative: Vec<f64>,
    psi_grid: Vec<(f64, f64)>,
}

impl PtFamily {
    pub fn new() -> Self {
        Self::with_sharpness(DEFAULT_SHARPNESS)
    }

    /// Family built on `ψ(s) ∝ exp(−a/(1−4s²))`. Larger `a` concentrates `ψ`
    /// and pushes the bulk of `φ̂` to lower frequencies, at the price of a
    /// later onset of the stretched-exponential tail.
    pub fn with_sharpness(a: f64) -> Self {
        let phi0 = bump_autocorrelation(a, 0.0);
        let panels: Vec<ChebPanel> = (0..PANELS)
            .map(|p| {
                let lo = p as f64 / PANELS as f64;
                let hi = (p + 1) as f64 / PANELS as f64;
                ChebPanel::fit(lo, hi, |u| bump_deficit(a, u) / (u * u))
            })
            .collect();
        let mut cumulative = Vec::with_capacity(PANELS + 1);
        let mut acc = 0.0;
        for p in &panels {
            cumulative.push(acc);
            acc += p.total();
        }
        cumulative.push(acc);
        let h = 1.0 / TRANSFORM_NODES as f64;
        let half = TRANSFORM_NODES as i64 / 2;
        let psi_grid = (1..half).map(|i| i as f64 * h).map(|s| (s, bump(a, s))).collect();
        Self { sharpness: a, phi0, kappa: 2.0 * (acc + phi0), panels, cumulative, psi_grid }
    }

    fn panel_of(&self, u: f64) -> usize {
        ((u * PANELS as f64) as usize).min(PANELS - 1)
    }

    /// `D(u) = (φ(0) − φ(u))/u²` on `[0, 1]`.
    pub fn deficit_ratio(&self, u: f64) -> f64 {
        let u = u.abs().min(1.0);
        self.panels[self.panel_of(u)].eval(u)
    }

    /// `∫₀^u D(s) ds` for `u ∈ [0, 1]`.
    pub fn deficit_integral(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let p = self.panel_of(u);
        self.cumulative[p] + self.panels[p].antiderivative(u)
    }

    /// `φ(u)` from the table.
    pub fn phi(&self, u: f64) -> f64 {
        let u = u.abs();
        if u >= 1.0 {
            return 0.0;
        }
        (self.phi0 - u * u * self.deficit_ratio(u)).max(0.0)
    }

    /// `ψ̂(ω) = ∫ ψ(s) e^{−iωs} ds`.
    pub fn psi_hat(&self, omega: f64) -> f64 {
        let h = 1.0 / TRANSFORM_NODES as f64;
        let s: f64 = self.psi_grid.iter().map(|&(s, v)| v * (omega * s).cos()).sum();
        h * (bump(self.sharpness, 0.0) + 2.0 * s)
    }

    /// `φ̂(ω) = ψ̂(ω)²`.
    pub fn phi_hat(&self, omega: f64) -> f64 {
        let b = self.psi_hat(omega);
        b * b
    }

    /// `P_t(x)` for `t > 0`, `x ∈ [0, 4]`.
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        if t <= 64.0 {
            self.eval_direct(t, x)
        } else {
            self.eval_poisson(t, x)
        }
    }

    /// Direct Chebyshev form `(κt)^{−1} Σ_{|m|<t} φ(m/t) cos(mθ)`.
    pub fn eval_direct(&self, t: f64, x: f64) -> f64 {
        let y = 1.0 - 0.5 * x;
        let mut s = self.phi0;
        let (mut prev, mut cur) = (1.0, y);
        let mut m = 1usize;
        while (m as f64) < t {
            s += 2.0 * self.phi(m as f64 / t) * cur;
            let next = 2.0 * y * cur - prev;
            prev = cur;
            cur = next;
            m += 1;
        }
        s / (self.kappa * t)
    }

    /// Poisson form `κ^{−1} Σ_k φ̂(t(θ + 2πk))`.
    pub fn eval_poisson(&self, t: f64, x: f64) -> f64 {
        let theta = theta_of(x);
        let mut s = self.phi_hat(t * theta);
        for k in 1..64 {
            let a = self.phi_hat(t * (2.0 * PI * k as f64 - theta));
            let b = self.phi_hat(t * (2.0 * PI * k as f64 + theta));
            s += a + b;
            if a + b <= 1e-17 * s {
                break;
            }
        }
        s / self.kappa
    }

    /// Chebyshev degree of `P_t`, which is `⌈t⌉ − 1` and never exceeds `⌊t⌋`.
    pub fn degree(&self, t: f64) -> usize {
        (t.ceil() as usize).saturating_sub(1)
    }

    /// Builds the slice functions
    ///
    /// `S_j(x) = R^{−2} ∫_{T_{j−1}}^{T_j} t P_{t/R}(x) dt
    ///        = (Rκ)^{−1} [c_{j,0} + 2 Σ_{m≥1} c_{j,m} cos(mθ)]`
    ///
    /// with `c_{j,m} = ∫_{T_{j−1}}^{T_j} φ(mR/t) dt`. Applied to an operator of
    /// range `R`, `S_j` has range `< T_j`; and `Σ_j S_j(x) → 1/x` as the last
    /// edge grows.
    ///
    /// Substituting `u = mR/t` and `φ = φ(0) − u² D(u)` gives
    /// `c_{j,m} = φ(0)(T_j − max(T_{j−1}, mR)) − mR ∫_{mR/T_j}^{min(1, mR/T_{j−1})} D`.
    pub fn slices(&self, range: f64, edges: &[f64]) -> Result<SliceCoefficients> {
        let bad_edges = edges.windows(2).any(|w| !(w[1] > w[0])) || edges.first().is_some_and(|e| *e < 0.0);
        if !(range > 0.0) || bad_edges {
            return Err(crate::Error::InvalidParameter(
                "slice edges must be increasing and nonnegative, range positive".into(),
            ));
        }
        let mut coeffs = Vec::with_capacity(edges.len().saturating_sub(1));
        for w in edges.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let mut c = vec![self.phi0 * (hi - lo)];
            let mut m = 1usize;
            while (m as f64) * range < hi {
                let mr = m as f64 * range;
                let a1 = mr / hi;
                let a2 = if lo > mr { mr / lo } else { 1.0 };
                let v = self.phi0 * (hi - lo.max(mr)) - mr * (self.deficit_integral(a2) - self.deficit_integral(a1));
                c.push(v);
                m += 1;
            }
            coeffs.push(c);
        }
        Ok(SliceCoefficients { range, edges: edges.to_vec(), coeffs, norm: 1.0 / (range * self.kappa) })
    }

    /// `G(v) = ∫₀^v u φ̂(u) du = 2v² ∫₀¹ φ(s) k(vs) ds` with
    /// `k(w) = sin w / w − 2 sin²(w/2)/w²`.
    pub fn moment_partial(&self, v: f64) -> Result<f64> {
        if v == 0.0 {
            return Ok(0.0);
        }
        let k = |w: f64| {
            if w.abs() < 1e-3 {
                let w2 = w * w;
                0.5 - w2 / 8.0 + w2 * w2 / 144.0
            } else {
                let h = (0.5 * w).sin();
                w.sin() / w - 2.0 * h * h / (w * w)
            }
        };
        let opts = QuadOptions { abs_tol: 1e-14 / (v * v), rel_tol: 1e-12, max_intervals: 20000 };
        let (r, _) = integrate(|s| self.phi(s) * k(v * s), 0.0, 1.0, opts)?;
        Ok(2.0 * v * v * r)
    }

    /// `R^{−2} ∫_T^∞ t P_{t/R}(x) dt = κ^{−1} Σ_k ω_k^{−2} (κ − G(Tω_k/R))`
    /// with `ω_k = |θ + 2πk|`.
    /// From `T = 0` the sum is `Σ_k ω_k^{−2} = 1/(4 sin²(θ/2)) = 1/x`.
    pub fn tail(&self, range: f64, start: f64, x: f64) -> Result<f64> {
        if start == 0.0 {
            return Ok(1.0 / x);
        }
        let theta = theta_of(x);
        let mut s = 0.0;
        let mut add = |omega: f64| -> Result<f64> {
            let rest = self.kappa - self.moment_partial(start * omega / range)?;
            s += rest.max(0.0) / (omega * omega);
            Ok(rest)
        };
        add(theta)?;
        for k in 1..4096 {
            let a = add(2.0 * PI * k as f64 - theta)?;
            let b = add(2.0 * PI * k as f64 + theta)?;
            if a.abs() + b.abs() < 1e-12 * self.kappa {
                break;
            }
        }
        Ok(s / self.kappa)
    }
}

impl Default for PtFamily {
    fn default() -> Self {
        Self::new()
    }
}

/// `θ = arccos(1 − x/2) = 2 arcsin(√x / 2)` for `x ∈ [0, 4]`.
pub fn theta_of(x: f64) -> f64 {
    2.0 * (0.5 * x.max(0.0).sqrt()).min(1.0).asin()
}
