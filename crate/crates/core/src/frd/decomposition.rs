//! Covariance slices `Γ_j`, the torus tail `Γ_N^Λ` and the zero-mode weight
//! `t_N`.
//!
//! Every slice multiplier depends on the momentum only through the per-axis
//! symbols `u_i = 4 sin²(p_i/2)`, so [`SliceEvaluator`] works one momentum at a
//! time and is shared by the torus decomposition and the infinite-volume
//! tables. Two backends are available.
//!
//! * `FourierWindow` cuts the heat-kernel representation
//!   `1/s = ∫₀^∞ e^{−τs} dτ` at `τ_j = L^{(2−η)j}/c_w`, so that
//!   `Γ̂_j = (e^{−τ_{j−1}s} − e^{−τ_j s})/s`. Exact by construction, with an
//!   approximately finite range.
//! * `PolyFiniteRange` uses the slice functions of [`PtFamily`]. At `η = 0`
//!   the symbol is a polynomial in the `cos p_i` and `Γ̂_j = S_j(L/M)/M`. For
//!   `η > 0` the fractional power is written as a spectral integral over
//!   `s` of first-order symbols and the slices are applied under the
//!   integral; counterterms enter through a Neumann series.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ptfamily::{PtFamily, SliceCoefficients};
use super::spectral::{integrate_log_panels, ln_add_exp, ln_sigma_beta, log_panels};
use crate::error::{Error, Result};
use crate::lattice::{axis_table, class_index_map, for_each_class, OperatorSymbol, TorusFft, TorusSpec};
use crate::quad::QuadOptions;

/// Heat-time normalisation of the window backend, `τ_j = L^{(2−η)j}/c_w`.
pub const WINDOW_CONSTANT: f64 = 16.0;

/// Relative size below which a Neumann term ends the series.
pub const NEUMANN_CUTOFF: f64 = 1e-12;

const MAX_NEUMANN_ORDER: usize = 4000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    FourierWindow,
    PolyFiniteRange,
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::FourierWindow => "fourier_window",
            Backend::PolyFiniteRange => "poly_finite_range",
        })
    }
}

/// Slice values at one momentum.
#[derive(Clone, Debug)]
pub struct MomentumSlices {
    /// `Γ̂_1 … Γ̂_J`.
    pub slices: Vec<f64>,
    /// Closed-form remainder `Σ_{j>J} Γ̂_j` when the backend provides one.
    pub tail: Option<f64>,
    /// Number of Neumann terms used (0 when no series is needed).
    pub neumann_order: usize,
    /// `q/λ̃`, the ratio controlling the Neumann series.
    pub contraction: f64,
}

#[derive(Clone, Debug)]
enum Plan {
    Window { taus: Vec<f64> },
    Poly { coeffs: SliceCoefficients, scale: f64 },
    Spectral { coeffs: SliceCoefficients, kappa_f: f64 },
}

/// Evaluates `Γ̂_1 … Γ̂_J` of a fixed operator at any momentum.
#[derive(Clone, Debug)]
pub struct SliceEvaluator {
    pub op: OperatorSymbol,
    pub backend: Backend,
    pub d: usize,
    pub l: usize,
    pub levels: usize,
    family: PtFamily,
    plan: Plan,
}

/// Largest value of `(1 + ā_Δ) u + Σ c_q u^{q/2}` over `u ∈ [0, 4]`.
fn axis_polynomial_max(op: &OperatorSymbol) -> f64 {
    let f = |u: f64| {
        let mut v = (1.0 + op.a_delta) * u;
        for &(q, c) in &op.higher_terms {
            v += c * u.powi((q / 2) as i32);
        }
        v
    };
    let samples = 1 << 14;
    (0..=samples).map(|i| f(4.0 * i as f64 / samples as f64)).fold(0.0, f64::max)
}

/// Smallest `s` with `L^s ≥ v`.
fn log_ceil(l: usize, v: f64) -> usize {
    let mut s = 0;
    let mut p = 1.0;
    while p < v {
        p *= l as f64;
        s += 1;
    }
    s
}

impl SliceEvaluator {
    /// Prepares the first `levels` slices, with scale edges `T_j = L^j`.
    pub fn new(op: &OperatorSymbol, d: usize, l: usize, levels: usize, backend: Backend) -> Result<Self> {
        if d == 0 || l < 2 {
            return Err(Error::InvalidParameter(format!("need d ≥ 1 and L ≥ 2, got d={d}, L={l}")));
        }
        let family = PtFamily::new();
        let edges: Vec<f64> =
            std::iter::once(0.0).chain((1..=levels).map(|j| (l as f64).powi(j as i32))).collect();
        let plan = match backend {
            Backend::FourierWindow => {
                let gap = 2.0 - op.eta;
                let taus = std::iter::once(0.0)
                    .chain((1..=levels).map(|j| (l as f64).powf(gap * j as f64) / WINDOW_CONSTANT))
                    .collect();
                Plan::Window { taus }
            }
            Backend::PolyFiniteRange if op.eta == 0.0 => {
                let bound = op.a_mass + d as f64 * axis_polynomial_max(op);
                let scale = bound * (1.0 + 1e-9) / 3.0;
                let coeffs = family.slices(op.polynomial_range() as f64, &edges)?;
                Plan::Poly { coeffs, scale }
            }
            Backend::PolyFiniteRange => {
                let delta_free = op.a_delta == 0.0 && op.higher_terms.iter().all(|&(_, c)| c == 0.0);
                let kappa_f = op.neumann_dominance();
                if !delta_free && op.higher_terms.iter().any(|&(q, _)| q > 8) {
                    return Err(Error::Unsupported(
                        "spectral path implements counterterms of derivative order at most 8".into(),
                    ));
                }
                let range = if kappa_f > 0.0 { 3.0 } else { 1.0 };
                let coeffs = family.slices(range, &edges)?;
                Plan::Spectral { coeffs, kappa_f }
            }
        };
        Ok(Self { op: op.clone(), backend, d, l, levels, family, plan })
    }

    pub fn family(&self) -> &PtFamily {
        &self.family
    }

    /// Upper edge `T_J = L^J` of the last prepared slice, or `0` when none are.
    pub fn last_edge(&self) -> f64 {
        if self.levels == 0 {
            0.0
        } else {
            (self.l as f64).powi(self.levels as i32)
        }
    }

    /// Slices at the momentum with per-axis symbols `u`, with the closed-form
    /// remainder when the backend has one.
    pub fn eval(&self, u: &[f64]) -> Result<MomentumSlices> {
        self.eval_with(u, true)
    }

    /// As [`eval`](Self::eval); the remainder is skipped unless `with_tail`.
    pub fn eval_with(&self, u: &[f64], with_tail: bool) -> Result<MomentumSlices> {
        let s = self.op.value_from_axes(u);
        match &self.plan {
            Plan::Window { taus } => {
                let mut slices = vec![0.0; self.levels];
                self.slices_at_symbol(s, &mut slices)?;
                let tail = if s > 0.0 && with_tail { Some((-taus[self.levels] * s).exp() / s) } else { None };
                Ok(MomentumSlices { slices, tail, neumann_order: 0, contraction: 0.0 })
            }
            Plan::Poly { coeffs, scale } => {
                let mut slices = vec![0.0; self.levels];
                self.slices_at_symbol(s, &mut slices)?;
                let tail = if s > 0.0 && with_tail {
                    Some(self.family.tail(coeffs.range, self.last_edge(), s / scale)? / scale)
                } else {
                    None
                };
                Ok(MomentumSlices { slices, tail, neumann_order: 0, contraction: 0.0 })
            }
            Plan::Spectral { coeffs, kappa_f } => self.eval_spectral(coeffs, *kappa_f, u),
        }
    }

    /// Writes the slices at `u` into `out` (length `levels`) without the
    /// remainder and without allocating on the window and polynomial paths.
    pub fn slices_into(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        match &self.plan {
            Plan::Spectral { .. } => out.copy_from_slice(&self.eval_with(u, false)?.slices),
            _ => self.slices_at_symbol(self.op.value_from_axes(u), out)?,
        }
        Ok(())
    }

    /// Slices as functions of the symbol value `s`, available on the window
    /// backend and on the polynomial backend at `η = 0`.
    pub fn slices_at_symbol(&self, s: f64, out: &mut [f64]) -> Result<()> {
        match &self.plan {
            Plan::Window { taus } => {
                // (e^{−τ₀s} − e^{−τ₁s})/s = −e^{−τ₀s} expm1(−(τ₁−τ₀)s)/s
                for (slot, w) in out.iter_mut().zip(taus.windows(2)) {
                    *slot = if s == 0.0 { w[1] - w[0] } else { -(-w[0] * s).exp() * (-(w[1] - w[0]) * s).exp_m1() / s };
                }
            }
            Plan::Poly { coeffs, scale } => {
                coeffs.eval_into(s / scale, out);
                for v in out.iter_mut() {
                    *v /= scale;
                }
            }
            Plan::Spectral { .. } => {
                return Err(Error::Unsupported("slices at η > 0 are not functions of the symbol alone".into()))
            }
        }
        Ok(())
    }

    /// Degree of the slices as polynomials in the symbol, on the polynomial
    /// backend at `η = 0`.
    pub fn symbol_degree(&self) -> Option<usize> {
        match &self.plan {
            Plan::Poly { coeffs, .. } => Some(coeffs.max_degree()),
            _ => None,
        }
    }

    fn eval_spectral(&self, coeffs: &SliceCoefficients, kappa_f: f64, u: &[f64]) -> Result<MomentumSlices> {
        let beta = self.op.beta();
        let lambda: f64 = u.iter().sum();
        let a = self.op.a_mass;
        let z = a + kappa_f * lambda;
        let four_d = 4.0 * self.d as f64;
        let (ln_z, ln_z_lo, ln_z_hi) = (z.ln(), a.ln(), (a + four_d * kappa_f).ln());
        let levels = self.levels;
        let prefactor = (PI * beta).sin() / PI;
        let alpha_lo = if lambda > 0.0 { 1.0 - beta } else { beta.min(1.0 - beta) };
        let edges = log_panels(lambda, z, beta, alpha_lo, beta);
        let mut buf = vec![0.0; levels];
        let base = if levels == 0 {
            Vec::new()
        } else {
            let r = integrate_log_panels(
                |t, out| {
                    let ln_m = 3f64.ln() - ln_add_exp(four_d, t) - ln_sigma_beta(t, ln_z_lo, beta).max(ln_sigma_beta(t, ln_z_hi, beta));
                    coeffs.eval_into((ln_m + ln_add_exp(lambda, t) + ln_sigma_beta(t, ln_z, beta)).exp(), &mut buf);
                    let w = ((1.0 - beta) * t + ln_m).exp();
                    for (o, v) in out.iter_mut().zip(&buf) {
                        *o = w * v;
                    }
                },
                &edges,
                levels,
                QuadOptions { abs_tol: 1e-14, rel_tol: 1e-12, max_intervals: 4000 },
            )?;
            r.value.into_iter().map(|v| prefactor * v).collect::<Vec<f64>>()
        };
        let delta = self.op.delta_from_axes(u);
        if delta == 0.0 && kappa_f == 0.0 {
            return Ok(MomentumSlices { slices: base, tail: None, neumann_order: 0, contraction: 0.0 });
        }
        // 1/(λ̃ − q) = Σ_n q^n λ̃^{−(n+1)} with λ̃ = λ^β + z and q = κ_F λ − δλ ≥ 0.
        let q = kappa_f * lambda - delta;
        let lt = self.op.fractional_part(lambda) + z;
        if lt <= 0.0 {
            return Ok(MomentumSlices { slices: base, tail: None, neumann_order: 0, contraction: 0.0 });
        }
        let ratio = q / lt;
        if !(0.0..1.0).contains(&ratio) {
            return Err(Error::NonConvergent(format!("Neumann ratio q/λ̃ = {ratio} outside [0, 1)")));
        }
        let partial: Vec<f64> = base
            .iter()
            .scan(0.0, |acc, v| {
                *acc += v;
                Some(*acc)
            })
            .collect();
        let r_q = self.op.polynomial_range() as f64;
        let mut slices = vec![0.0; levels];
        let mut term = 1.0 / lt;
        let mut sum = 0.0;
        let mut order = 0;
        for n in 0..MAX_NEUMANN_ORDER {
            sum += term;
            order = n + 1;
            let shift = log_ceil(self.l, (n + 1) as f64 + n as f64 * r_q);
            let qn = q.powi(n as i32);
            let cumulative = |j: usize| -> f64 {
                if j <= shift {
                    0.0
                } else {
                    qn * partial[j - shift - 1].powi(n as i32 + 1)
                }
            };
            for j in 1..=levels {
                slices[j - 1] += cumulative(j) - cumulative(j - 1);
            }
            term *= ratio;
            if term < NEUMANN_CUTOFF * sum || q == 0.0 {
                break;
            }
        }
        Ok(MomentumSlices { slices, tail: None, neumann_order: order, contraction: ratio })
    }
}

/// One covariance slice on the torus.
#[derive(Debug)]
pub struct CovSlice {
    pub j: usize,
    /// Fourier multiplier in torus site order.
    pub multiplier: Vec<f64>,
    pub is_torus_tail: bool,
    kernel: OnceLock<Vec<f64>>,
}

impl Clone for CovSlice {
    fn clone(&self) -> Self {
        let kernel = OnceLock::new();
        if let Some(k) = self.kernel.get() {
            let _ = kernel.set(k.clone());
        }
        Self { j: self.j, multiplier: self.multiplier.clone(), is_torus_tail: self.is_torus_tail, kernel }
    }
}

impl CovSlice {
    pub fn new(j: usize, multiplier: Vec<f64>, is_torus_tail: bool) -> Self {
        Self { j, multiplier, is_torus_tail, kernel: OnceLock::new() }
    }

    /// Real-space kernel, computed on first use.
    pub fn kernel(&self, torus: &TorusSpec) -> Result<&[f64]> {
        if let Some(k) = self.kernel.get() {
            return Ok(k);
        }
        let k = TorusFft::new(*torus).kernel_from_multiplier(&self.multiplier)?;
        Ok(self.kernel.get_or_init(|| k))
    }

    pub fn min_multiplier(&self) -> f64 {
        self.multiplier.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `C^{(a)} = Σ_{j<N} Γ_j + Γ_N^Λ + t_N Q_N` on the torus `Λ_N`.
#[derive(Clone, Debug)]
pub struct CovarianceDecomposition {
    pub torus: TorusSpec,
    pub op: OperatorSymbol,
    pub backend: Backend,
    /// `Γ_1 … Γ_{N−1}`.
    pub slices: Vec<CovSlice>,
    /// `Γ_N^Λ`, zero at `p = 0`.
    pub tail: CovSlice,
    /// `None` when `a^{(∅)} = 0`: the zero mode is excluded and `t_N^{−1} = 0`.
    /// With a single scale there are no slices and `t_1 = 1/a^{(∅)}` carries the
    /// whole zero mode; for `N ≥ 2` it lies strictly inside `(0, 1/a^{(∅)})`.
    pub t_n: Option<f64>,
    /// Kernel value `L^{−dN}` of `Q_N`.
    pub q_n: f64,
    pub neumann_order: usize,
    pub neumann_contraction: f64,
}

/// Builds the decomposition on `torus`.
pub fn decompose(op: &OperatorSymbol, torus: &TorusSpec, backend: Backend) -> Result<CovarianceDecomposition> {
    op.validate_on(torus)?;
    let side = torus.side();
    let levels = torus.n - 1;
    let eval = SliceEvaluator::new(op, torus.d, torus.l, levels, backend)?;
    let table = axis_table(side);
    let mut classes = Vec::new();
    for_each_class(torus.d, side, |k, _| classes.push(k.to_vec()));
    let per_class: Vec<(MomentumSlices, f64)> = classes
        .par_iter()
        .map(|k| {
            let u: Vec<f64> = k.iter().map(|&v| table[v]).collect();
            let value = op.value_from_axes(&u);
            eval.eval(&u).map(|m| (m, value))
        })
        .collect::<Result<_>>()?;
    let (map, _) = class_index_map(torus);
    let volume = torus.volume();
    let mut slices: Vec<Vec<f64>> = vec![vec![0.0; volume]; levels];
    let mut tail = vec![0.0; volume];
    for (site, &c) in map.iter().enumerate() {
        let (m, value) = &per_class[c];
        for (j, v) in m.slices.iter().enumerate() {
            slices[j][site] = *v;
        }
        if site != 0 {
            tail[site] = m.tail.unwrap_or_else(|| 1.0 / value - m.slices.iter().sum::<f64>());
        }
    }
    let zero = &per_class[map[0]].0;
    let t_n = if op.a_mass > 0.0 {
        Some(zero.tail.unwrap_or_else(|| 1.0 / op.a_mass - zero.slices.iter().sum::<f64>()))
    } else {
        None
    };
    let neumann_order = per_class.iter().map(|(m, _)| m.neumann_order).max().unwrap_or(0);
    let neumann_contraction = per_class.iter().map(|(m, _)| m.contraction).fold(0.0, f64::max);
    Ok(CovarianceDecomposition {
        torus: *torus,
        op: op.clone(),
        backend,
        slices: slices.into_iter().enumerate().map(|(j, m)| CovSlice::new(j + 1, m, false)).collect(),
        tail: CovSlice::new(torus.n, tail, true),
        t_n,
        q_n: 1.0 / volume as f64,
        neumann_order,
        neumann_contraction,
    })
}

impl CovarianceDecomposition {
    /// Number of scales `N`.
    pub fn scales(&self) -> usize {
        self.torus.n
    }

    /// Slice `Γ_j` for `1 ≤ j ≤ N`, the last one being the torus tail.
    pub fn slice(&self, j: usize) -> Option<&CovSlice> {
        match j {
            0 => None,
            j if j < self.torus.n => self.slices.get(j - 1),
            j if j == self.torus.n => Some(&self.tail),
            _ => None,
        }
    }

    /// Multiplier of `w_j = Σ_{k≤j} Γ_k` for `0 ≤ j ≤ N`.
    pub fn w_multiplier(&self, j: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.torus.volume()];
        for k in 1..=j.min(self.torus.n) {
            let s = self.slice(k).expect("slice index in range");
            for (a, b) in w.iter_mut().zip(&s.multiplier) {
                *a += b;
            }
        }
        w
    }

    /// Real-space kernel of `w_j`.
    pub fn w_kernel(&self, j: usize) -> Result<Vec<f64>> {
        TorusFft::new(self.torus).kernel_from_multiplier(&self.w_multiplier(j))
    }

    /// `Σ_x w_j(x)²`, by Plancherel.
    pub fn w_square_sum(&self, j: usize) -> f64 {
        let w = self.w_multiplier(j);
        w.iter().map(|v| v * v).sum::<f64>() / self.torus.volume() as f64
    }

    /// `Σ_x w_j(x)`, which is the multiplier at `p = 0`.
    pub fn w_sum(&self, j: usize) -> f64 {
        self.w_multiplier(j)[0]
    }

    /// Multiplier of the full covariance reassembled from the pieces. At
    /// `a^{(∅)} = 0` the zero mode is dropped.
    pub fn assembled_multiplier(&self) -> Vec<f64> {
        let mut w = self.w_multiplier(self.torus.n);
        match self.t_n {
            Some(t) => w[0] += t,
            None => w[0] = 0.0,
        }
        w
    }

    /// `‖Σ Γ_j + Γ_N^Λ + t_N Q_N − C‖_∞ / ‖C‖_∞` in real space, with `C` from a
    /// direct Fourier inversion of the symbol.
    pub fn exactness_residual(&self) -> Result<f64> {
        let exclude = self.op.a_mass == 0.0;
        let exact = crate::lattice::green_function(&self.op, &self.torus, exclude)?;
        let fft = TorusFft::new(self.torus);
        let assembled = fft.kernel_from_multiplier(&self.assembled_multiplier())?;
        let scale = exact.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let diff = exact.values.iter().zip(&assembled).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        Ok(diff / scale)
    }

    /// Smallest multiplier value over all slices and the tail.
    pub fn min_multiplier(&self) -> f64 {
        self.slices.iter().chain(std::iter::once(&self.tail)).map(CovSlice::min_multiplier).fold(f64::INFINITY, f64::min)
    }

    /// `sup_x |Γ_j(x)|` for `1 ≤ j ≤ N`.
    pub fn slice_sup(&self, j: usize) -> Result<f64> {
        let s = self.slice(j).ok_or_else(|| Error::InvalidParameter(format!("no slice {j}")))?;
        Ok(s.kernel(&self.torus)?.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
    }

    /// Largest `|Γ_j(x)|/‖Γ_j‖_∞` over sites with `ℓ¹` distance at least `r`.
    pub fn slice_tail_beyond(&self, j: usize, r: i64) -> Result<f64> {
        let s = self.slice(j).ok_or_else(|| Error::InvalidParameter(format!("no slice {j}")))?;
        let k = s.kernel(&self.torus)?;
        let sup = k.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut worst = 0.0_f64;
        for (x, v) in k.iter().enumerate() {
            if self.torus.l1_norm(x) >= r {
                worst = worst.max(v.abs());
            }
        }
        Ok(worst / sup)
    }
}

/// `β_j = (n+8) Σ_x (w_{j+1}(x)² − w_j(x)²)` for `0 ≤ j < N`.
pub fn bubble_beta(decomp: &CovarianceDecomposition, j: usize, n: usize) -> Result<f64> {
    if j + 1 > decomp.torus.n {
        return Err(Error::InvalidParameter(format!("β_{j} needs w_{} but N = {}", j + 1, decomp.torus.n)));
    }
    Ok((n as f64 + 8.0) * (decomp.w_square_sum(j + 1) - decomp.w_square_sum(j)))
}

/// `t_N` of the decomposition, or an error when the zero mode is excluded.
pub fn t_n(op: &OperatorSymbol, torus: &TorusSpec, backend: Backend) -> Result<f64> {
    if op.a_mass <= 0.0 {
        return Err(Error::ZeroModeNotExcluded);
    }
    let eval = SliceEvaluator::new(op, torus.d, torus.l, torus.n - 1, backend)?;
    let m = eval.eval(&vec![0.0; torus.d])?;
    let t = m.tail.unwrap_or_else(|| 1.0 / op.a_mass - m.slices.iter().sum::<f64>());
    if t <= 0.0 {
        return Err(Error::NonConvergent(format!("t_N = {t} is not positive")));
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(eta: f64, a: f64) -> OperatorSymbol {
        OperatorSymbol::new(eta, a, 0.0).unwrap()
    }

    #[test]
    fn window_slices_sum_to_inverse() {
        let e = SliceEvaluator::new(&op(0.0, 0.1), 4, 2, 5, Backend::FourierWindow).unwrap();
        for u in [[0.0, 0.0, 0.0, 0.0], [0.3, 1.0, 2.0, 4.0], [1e-3, 0.0, 0.0, 0.0]] {
            let m = e.eval(&u).unwrap();
            let s = 0.1 + u.iter().sum::<f64>();
            let total: f64 = m.slices.iter().sum::<f64>() + m.tail.unwrap();
            assert!((total * s - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn poly_slices_sum_to_inverse() {
        let e = SliceEvaluator::new(&op(0.0, 0.0), 4, 2, 4, Backend::PolyFiniteRange).unwrap();
        for u in [[0.01, 0.0, 0.0, 0.0], [0.3, 1.0, 2.0, 4.0], [4.0, 4.0, 4.0, 4.0]] {
            let m = e.eval(&u).unwrap();
            let s = u.iter().sum::<f64>();
            let total: f64 = m.slices.iter().sum::<f64>() + m.tail.unwrap();
            assert!((total * s - 1.0).abs() < 1e-9, "{}", total * s);
            assert!(m.slices.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn spectral_slices_are_nonnegative_and_bounded() {
        let e = SliceEvaluator::new(&op(0.5, 0.1), 4, 2, 4, Backend::PolyFiniteRange).unwrap();
        for u in [[0.0, 0.0, 0.0, 0.0], [0.3, 1.0, 2.0, 4.0]] {
            let m = e.eval(&u).unwrap();
            let s = OperatorSymbol::new(0.5, 0.1, 0.0).unwrap().value_from_axes(&u);
            assert!(m.slices.iter().all(|v| *v >= -1e-14));
            assert!(m.slices.iter().sum::<f64>() < 1.0 / s);
        }
    }

    #[test]
    fn neumann_series_reassembles_counterterms() {
        let with = OperatorSymbol::new(0.5, 0.2, -0.05).unwrap().with_higher_terms(vec![(4, 0.01)]).unwrap();
        let e = SliceEvaluator::new(&with, 3, 2, 12, Backend::PolyFiniteRange).unwrap();
        let u = [0.7, 1.3, 0.2];
        let m = e.eval(&u).unwrap();
        assert!(m.neumann_order > 1);
        let total: f64 = m.slices.iter().sum();
        let exact = 1.0 / with.value_from_axes(&u);
        assert!(total < exact && total > 0.9 * exact, "{total} vs {exact}");
    }

    #[test]
    fn log_ceil_matches_definition() {
        assert_eq!(log_ceil(2, 1.0), 0);
        assert_eq!(log_ceil(2, 3.0), 2);
        assert_eq!(log_ceil(3, 9.0), 2);
        assert_eq!(log_ceil(3, 9.5), 3);
    }
}
