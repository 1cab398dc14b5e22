//! Torus geometry, discrete Fourier transforms and the Fourier symbol of the
//! counterterm-modified fractional Laplacian.
//!
//! Sites of `Λ_N` are stored row-major over residues `x mod L^N` (the last
//! axis is contiguous), which is exactly the layout the FFT expects. The
//! centred coordinate box `[−⌊(L^N−1)/2⌋, ⌊L^N/2⌋]^d` is recovered by
//! [`TorusSpec::coords`]. Fourier transforms follow
//! `ĝ(p) = Σ_x e^{−ix·p} g(x)` with inverse `g(x) = |Λ|^{−1} Σ_p e^{ix·p} ĝ(p)`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// Geometry of the periodic lattice `Λ_N` of side `L^N` in `d` dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusSpec {
    pub d: usize,
    pub l: usize,
    pub n: usize,
}

impl TorusSpec {
    pub fn new(d: usize, l: usize, n: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        if l < 2 {
            return Err(Error::InvalidParameter(format!("block side L = {l} must be at least 2")));
        }
        if n == 0 {
            return Err(Error::InvalidParameter("number of scales N must be at least 1".into()));
        }
        let side = (l as u128).checked_pow(n as u32);
        let volume = side.and_then(|s| s.checked_pow(d as u32));
        match volume {
            Some(v) if v <= u32::MAX as u128 => Ok(Self { d, l, n }),
            _ => Err(Error::InvalidParameter(format!("torus L^(dN) with d={d}, L={l}, N={n} is too large"))),
        }
    }

    /// Side length `L^N`.
    pub fn side(&self) -> usize {
        self.l.pow(self.n as u32)
    }

    /// Number of sites `L^{dN}`.
    pub fn volume(&self) -> usize {
        self.side().pow(self.d as u32)
    }

    /// Lower end of the centred coordinate box, `−⌊(L^N − 1)/2⌋`.
    pub fn coord_min(&self) -> i64 {
        -(((self.side() - 1) / 2) as i64)
    }

    /// Upper end of the centred coordinate box, `⌊L^N/2⌋`.
    pub fn coord_max(&self) -> i64 {
        (self.side() / 2) as i64
    }

    /// Residues `x_i mod L^N` of the site with the given index.
    pub fn residues(&self, index: usize) -> Vec<usize> {
        let side = self.side();
        let mut r = vec![0; self.d];
        let mut rest = index;
        for axis in (0..self.d).rev() {
            r[axis] = rest % side;
            rest /= side;
        }
        r
    }

    /// Centred coordinates of the site with the given index.
    pub fn coords(&self, index: usize) -> Vec<i64> {
        let side = self.side() as i64;
        let max = self.coord_max();
        self.residues(index)
            .into_iter()
            .map(|r| {
                let r = r as i64;
                if r > max {
                    r - side
                } else {
                    r
                }
            })
            .collect()
    }

    /// Index of the site with the given (arbitrary integer) coordinates,
    /// wrapped periodically.
    pub fn index(&self, coords: &[i64]) -> usize {
        let side = self.side() as i64;
        coords.iter().fold(0usize, |acc, &c| acc * side as usize + c.rem_euclid(side) as usize)
    }

    /// Periodic ℓ∞ distance of a site from the origin.
    pub fn linf_norm(&self, index: usize) -> i64 {
        self.coords(index).iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    /// Periodic ℓ¹ distance of a site from the origin.
    pub fn l1_norm(&self, index: usize) -> i64 {
        self.coords(index).iter().map(|c| c.abs()).sum()
    }

    /// Euclidean norm of the centred coordinates.
    pub fn euclid_norm(&self, index: usize) -> f64 {
        self.coords(index).iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt()
    }

    /// Site index of `x − y`.
    pub fn difference(&self, x: usize, y: usize) -> usize {
        let side = self.side();
        let rx = self.residues(x);
        let ry = self.residues(y);
        rx.iter().zip(&ry).fold(0, |acc, (&a, &b)| acc * side + (a + side - b) % side)
    }
}

/// The dual lattice `2π L^{−N} Λ_N`, one momentum per site index.
#[derive(Clone, Debug)]
pub struct MomentumGrid {
    pub torus: TorusSpec,
}

impl MomentumGrid {
    pub fn new(torus: TorusSpec) -> Self {
        Self { torus }
    }

    pub fn len(&self) -> usize {
        self.torus.volume()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Momentum components in `(−π, π]` for the given index.
    pub fn momentum(&self, index: usize) -> Vec<f64> {
        let side = self.torus.side() as f64;
        self.torus.coords(index).into_iter().map(|k| 2.0 * PI * k as f64 / side).collect()
    }

    /// Index of the zero mode.
    pub fn zero_mode(&self) -> usize {
        0
    }

    pub fn is_zero_mode(&self, index: usize) -> bool {
        index == 0
    }
}

/// `λ(p) = 2 Σ_i (1 − cos p_i)`, the symbol of the nearest-neighbour Laplacian.
pub fn symbol_lambda(p: &[f64]) -> f64 {
    p.iter().map(|&x| 2.0 * (1.0 - x.cos())).sum()
}

/// Per-axis symbol `u = 2 − 2 cos p = 4 sin²(p/2)`, computed without cancellation.
pub fn axis_symbol(p: f64) -> f64 {
    let s = (0.5 * p).sin();
    4.0 * s * s
}

/// Fourier multiplier of `L_η^{(a)}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSymbol {
    pub eta: f64,
    pub a_mass: f64,
    pub a_delta: f64,
    /// Pairs `(q, c)` of an even derivative order `q ≥ 4` and its coefficient,
    /// represented by the scalar symbol `c Σ_i (2 − 2cos p_i)^{q/2}`.
    #[serde(default)]
    pub higher_terms: Vec<(u32, f64)>,
}

impl OperatorSymbol {
    pub fn new(eta: f64, a_mass: f64, a_delta: f64) -> Result<Self> {
        let op = Self { eta, a_mass, a_delta, higher_terms: Vec::new() };
        op.check_coefficients()?;
        Ok(op)
    }

    pub fn with_higher_terms(mut self, terms: Vec<(u32, f64)>) -> Result<Self> {
        self.higher_terms = terms;
        self.check_coefficients()?;
        Ok(self)
    }

    /// The plain fractional Laplacian `(−Δ)^{1−η/2}`.
    pub fn fractional(eta: f64) -> Result<Self> {
        Self::new(eta, 0.0, 0.0)
    }

    fn check_coefficients(&self) -> Result<()> {
        if !(0.0..2.0).contains(&self.eta) {
            return Err(Error::InvalidParameter(format!("eta = {} outside [0, 2)", self.eta)));
        }
        if !(self.a_mass >= 0.0) || !self.a_mass.is_finite() {
            return Err(Error::InvalidParameter(format!("a_mass = {} must be finite and nonnegative", self.a_mass)));
        }
        if !self.a_delta.is_finite() {
            return Err(Error::InvalidParameter("a_delta must be finite".into()));
        }
        for &(q, c) in &self.higher_terms {
            if q < 4 || q % 2 != 0 || !c.is_finite() {
                return Err(Error::InvalidParameter(format!("higher term (q={q}, c={c}) needs even q ≥ 4")));
            }
        }
        Ok(())
    }

    /// Exponent `β = 1 − η/2` of the fractional power.
    pub fn beta(&self) -> f64 {
        1.0 - 0.5 * self.eta
    }

    /// Range (in lattice steps) of the polynomial part `ā_Δ λ + higher terms`.
    pub fn polynomial_range(&self) -> usize {
        self.higher_terms.iter().map(|&(q, _)| (q / 2) as usize).max().unwrap_or(1).max(1)
    }

    /// Counterterm part `δλ = ā_Δ λ + Σ c_q Σ_i u_i^{q/2}` from per-axis symbols.
    pub fn delta_from_axes(&self, u: &[f64]) -> f64 {
        let lambda: f64 = u.iter().sum();
        let mut v = self.a_delta * lambda;
        for &(q, c) in &self.higher_terms {
            let h = (q / 2) as i32;
            v += c * u.iter().map(|x| x.powi(h)).sum::<f64>();
        }
        v
    }

    /// Whether the symbol splits as `a + Σ_i h(u_i)`, which holds for `η = 0`.
    pub fn is_axis_additive(&self) -> bool {
        self.eta == 0.0
    }

    /// Per-axis part `h(u) = (1 + ā_Δ) u + Σ_q c_q u^{q/2}`; when the symbol
    /// is axis-additive it equals `a + Σ_i h(u_i)`.
    pub fn axis_part(&self, u: f64) -> f64 {
        let mut v = (1.0 + self.a_delta) * u;
        for &(q, c) in &self.higher_terms {
            v += c * u.powi((q / 2) as i32);
        }
        v
    }

    /// Symbol value from per-axis symbols `u_i = 2 − 2cos p_i`.
    pub fn value_from_axes(&self, u: &[f64]) -> f64 {
        let lambda: f64 = u.iter().sum();
        self.fractional_part(lambda) + self.a_mass + self.delta_from_axes(u)
    }

    /// `λ^{1−η/2}`, exactly `λ` when `η = 0`.
    pub fn fractional_part(&self, lambda: f64) -> f64 {
        if self.eta == 0.0 {
            lambda
        } else if lambda <= 0.0 {
            0.0
        } else {
            lambda.powf(self.beta())
        }
    }

    /// Smallest constant `κ_F ≥ 0` with `κ_F λ − δλ ≥ 0` for every momentum.
    pub fn neumann_dominance(&self) -> f64 {
        let mut k = self.a_delta.max(0.0);
        for &(q, c) in &self.higher_terms {
            let h = (q / 2) as i32;
            k += c.max(0.0) * 4f64.powi(h - 1);
        }
        k
    }

    /// Checks the symbol is strictly positive at every nonzero momentum of the
    /// torus and that `symbol − a_mass ≥ 0` there.
    pub fn validate_on(&self, torus: &TorusSpec) -> Result<()> {
        let side = torus.side();
        let table = axis_table(side);
        let mut worst: Option<(f64, Vec<usize>)> = None;
        for_each_class(torus.d, side, |k, _| {
            if k.iter().all(|&v| v == 0) {
                return;
            }
            let u: Vec<f64> = k.iter().map(|&v| table[v]).collect();
            let v = self.value_from_axes(&u) - self.a_mass;
            if v <= 0.0 && worst.as_ref().map_or(true, |(w, _)| v < *w) {
                worst = Some((v, k.to_vec()));
            }
        });
        match worst {
            None => Ok(()),
            Some((value, k)) => Err(Error::InadmissibleSymbol {
                value: value + self.a_mass,
                momentum: format!("2π/{side}·{k:?}"),
            }),
        }
    }
}

/// `symbol_full` on an explicit momentum vector.
pub fn symbol_full(op: &OperatorSymbol, p: &[f64]) -> f64 {
    let u: Vec<f64> = p.iter().map(|&x| axis_symbol(x)).collect();
    op.value_from_axes(&u)
}

/// Per-axis symbol table `u[k] = 4 sin²(πk/side)` for `k = 0..=side/2`.
pub fn axis_table(side: usize) -> Vec<f64> {
    (0..=side / 2).map(|k| axis_symbol(2.0 * PI * k as f64 / side as f64)).collect()
}

/// Number of ordered momentum tuples sharing the sorted reduced index `k`
/// (entries `min(k_i, side − k_i)` in nondecreasing order).
pub fn class_multiplicity(k: &[usize], side: usize) -> f64 {
    let d = k.len();
    let mut mult = (1..=d).product::<usize>() as f64;
    let mut run = 1usize;
    for i in 1..=d {
        if i < d && k[i] == k[i - 1] {
            run += 1;
        } else {
            mult /= (1..=run).product::<usize>() as f64;
            run = 1;
        }
    }
    for &v in k {
        if v != 0 && !(side % 2 == 0 && v == side / 2) {
            mult *= 2.0;
        }
    }
    mult
}

/// Visits every symmetry class of momenta on a grid of the given side: the
/// callback receives the sorted reduced index and its multiplicity. Any
/// function of the per-axis symbols that is symmetric under axis permutations
/// can be summed over the full grid this way.
pub fn for_each_class<F>(d: usize, side: usize, mut f: F)
where
    F: FnMut(&[usize], f64),
{
    let top = side / 2;
    let mut k = vec![0usize; d];
    loop {
        f(&k, class_multiplicity(&k, side));
        // advance to the next nondecreasing tuple
        let mut i = d;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if k[i] < top {
                let v = k[i] + 1;
                for slot in k.iter_mut().skip(i) {
                    *slot = v;
                }
                break;
            }
        }
    }
}

/// Number of symmetry classes visited by [`for_each_class`].
pub fn class_count(d: usize, side: usize) -> usize {
    let m = side / 2 + 1;
    // binomial(m + d − 1, d)
    let mut c = 1u128;
    for i in 0..d {
        c = c * (m + i) as u128 / (i + 1) as u128;
    }
    c as usize
}

/// Maps every site index of a torus to the position of its symmetry class
/// in the order produced by [`for_each_class`].
pub fn class_index_map(torus: &TorusSpec) -> (Vec<usize>, usize) {
    let side = torus.side();
    let mut lookup = HashMap::new();
    let mut count = 0;
    for_each_class(torus.d, side, |k, _| {
        lookup.insert(k.to_vec(), count);
        count += 1;
    });
    let map = (0..torus.volume())
        .map(|i| {
            let mut k: Vec<usize> = torus.residues(i).into_iter().map(|r| r.min(side - r)).collect();
            k.sort_unstable();
            lookup[&k]
        })
        .collect();
    (map, count)
}

/// `n` real components per site, stored site-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub n: usize,
    pub values: Vec<f64>,
}

impl Field {
    pub fn zeros(n: usize, volume: usize) -> Self {
        Self { n, values: vec![0.0; n * volume] }
    }

    pub fn from_values(n: usize, volume: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * volume {
            return Err(Error::DimensionMismatch { expected: n * volume, found: values.len() });
        }
        Ok(Self { n, values })
    }

    pub fn volume(&self) -> usize {
        self.values.len() / self.n
    }

    pub fn site(&self, x: usize) -> &[f64] {
        &self.values[x * self.n..(x + 1) * self.n]
    }

    pub fn site_mut(&mut self, x: usize) -> &mut [f64] {
        &mut self.values[x * self.n..(x + 1) * self.n]
    }

    /// Copies component `c` into a contiguous scalar array.
    pub fn component(&self, c: usize) -> Vec<f64> {
        self.values.iter().skip(c).step_by(self.n).copied().collect()
    }

    pub fn set_component(&mut self, c: usize, data: &[f64]) {
        for (x, v) in data.iter().enumerate() {
            self.values[x * self.n + c] = *v;
        }
    }
}

/// Planned d-dimensional FFT on a torus.
#[derive(Clone)]
pub struct TorusFft {
    torus: TorusSpec,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for TorusFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TorusFft").field("torus", &self.torus).finish()
    }
}

impl TorusFft {
    pub fn new(torus: TorusSpec) -> Self {
        let mut planner = FftPlanner::new();
        let side = torus.side();
        Self { torus, forward: planner.plan_fft_forward(side), inverse: planner.plan_fft_inverse(side) }
    }

    pub fn torus(&self) -> &TorusSpec {
        &self.torus
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let side = self.torus.side();
        let volume = data.len();
        let mut line = vec![Complex64::new(0.0, 0.0); side];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        let mut stride = 1;
        for _axis in 0..self.torus.d {
            if stride == 1 {
                for chunk in data.chunks_exact_mut(side) {
                    plan.process_with_scratch(chunk, &mut scratch);
                }
            } else {
                let block = stride * side;
                for base in (0..volume).step_by(block) {
                    for offset in 0..stride {
                        let start = base + offset;
                        for (i, slot) in line.iter_mut().enumerate() {
                            *slot = data[start + i * stride];
                        }
                        plan.process_with_scratch(&mut line, &mut scratch);
                        for (i, v) in line.iter().enumerate() {
                            data[start + i * stride] = *v;
                        }
                    }
                }
            }
            stride *= side;
        }
    }

    /// In-place forward transform `ĝ(p) = Σ_x e^{−ix·p} g(x)`.
    pub fn forward_in_place(&self, data: &mut [Complex64]) -> Result<()> {
        self.check_len(data.len())?;
        self.transform(data, &self.forward);
        Ok(())
    }

    /// In-place inverse transform including the `1/|Λ|` normalisation.
    pub fn inverse_in_place(&self, data: &mut [Complex64]) -> Result<()> {
        self.check_len(data.len())?;
        self.transform(data, &self.inverse);
        let scale = 1.0 / data.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
        Ok(())
    }

    pub fn forward_real(&self, g: &[f64]) -> Result<Vec<Complex64>> {
        let mut data: Vec<Complex64> = g.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_in_place(&mut data)?;
        Ok(data)
    }

    /// Applies a real, even Fourier multiplier to a real field.
    pub fn apply_multiplier(&self, g: &[f64], multiplier: &[f64]) -> Result<Vec<f64>> {
        self.check_len(multiplier.len())?;
        let mut data = self.forward_real(g)?;
        for (v, m) in data.iter_mut().zip(multiplier) {
            *v *= *m;
        }
        self.inverse_in_place(&mut data)?;
        Ok(data.into_iter().map(|c| c.re).collect())
    }

    /// Real-space kernel `K(x) = |Λ|^{−1} Σ_p e^{ix·p} m(p)` of an even multiplier.
    pub fn kernel_from_multiplier(&self, multiplier: &[f64]) -> Result<Vec<f64>> {
        let mut data: Vec<Complex64> = multiplier.iter().map(|&m| Complex64::new(m, 0.0)).collect();
        self.inverse_in_place(&mut data)?;
        Ok(data.into_iter().map(|c| c.re).collect())
    }

    fn check_len(&self, len: usize) -> Result<()> {
        let volume = self.torus.volume();
        if len != volume {
            return Err(Error::DimensionMismatch { expected: volume, found: len });
        }
        Ok(())
    }
}

/// Forward transform of a complex field on the torus.
pub fn fft_forward(torus: &TorusSpec, field: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut data = field.to_vec();
    TorusFft::new(*torus).forward_in_place(&mut data)?;
    Ok(data)
}

/// Inverse transform, `fft_inverse ∘ fft_forward = id`.
pub fn fft_inverse(torus: &TorusSpec, field: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut data = field.to_vec();
    TorusFft::new(*torus).inverse_in_place(&mut data)?;
    Ok(data)
}

/// Symbol values of an operator on every momentum of the torus grid.
pub fn symbol_on_grid(op: &OperatorSymbol, torus: &TorusSpec) -> Vec<f64> {
    let side = torus.side();
    let table = axis_table(side);
    let mut u = vec![0.0; torus.d];
    (0..torus.volume())
        .map(|i| {
            for (slot, r) in u.iter_mut().zip(torus.residues(i)) {
                *slot = table[r.min(side - r)];
            }
            op.value_from_axes(&u)
        })
        .collect()
}

/// Real-space kernel on the torus.
#[derive(Clone, Debug)]
pub struct Kernel {
    pub torus: TorusSpec,
    pub values: Vec<f64>,
}

impl Kernel {
    pub fn at(&self, x: &[i64]) -> f64 {
        self.values[self.torus.index(x)]
    }
}

/// Green's function `C^{(a)} = (L_η^{(a)})^{−1}` on the torus. When
/// `exclude_zero_mode` is set the zero mode is dropped from the Fourier sum,
/// which gives the massless quotient Green's function.
pub fn green_function(op: &OperatorSymbol, torus: &TorusSpec, exclude_zero_mode: bool) -> Result<Kernel> {
    if op.a_mass == 0.0 && !exclude_zero_mode {
        return Err(Error::ZeroModeNotExcluded);
    }
    op.validate_on(torus)?;
    let mut multiplier: Vec<f64> = symbol_on_grid(op, torus).into_iter().map(|s| 1.0 / s).collect();
    if exclude_zero_mode {
        multiplier[0] = 0.0;
    }
    let values = TorusFft::new(*torus).kernel_from_multiplier(&multiplier)?;
    Ok(Kernel { torus: *torus, values })
}

/// `γ(d, η) = 2^{−2+η} π^{−d/2} Γ((d−2+η)/2) / Γ((2−η)/2)`, the constant of the
/// infinite-volume decay `C(x) ~ γ |x|^{−(d−2+η)}`.
pub fn green_gamma(d: usize, eta: f64) -> Result<f64> {
    if d < 3 || !(0.0..1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!("green_gamma needs d ≥ 3 and η ∈ [0,1), got d={d}, η={eta}")));
    }
    let d = d as f64;
    Ok(2f64.powf(eta - 2.0) * PI.powf(-0.5 * d) * gamma(0.5 * (d - 2.0 + eta)) / gamma(0.5 * (2.0 - eta)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinate_box_has_side_points() {
        for (l, n) in [(2, 3), (3, 2), (3, 1)] {
            let t = TorusSpec::new(1, l, n).unwrap();
            let coords: Vec<i64> = (0..t.volume()).map(|i| t.coords(i)[0]).collect();
            assert_eq!(*coords.iter().min().unwrap(), t.coord_min());
            assert_eq!(*coords.iter().max().unwrap(), t.coord_max());
            assert_eq!(coords.len(), t.side());
        }
    }

    #[test]
    fn index_round_trips_coordinates() {
        let t = TorusSpec::new(3, 2, 2).unwrap();
        for i in 0..t.volume() {
            assert_eq!(t.index(&t.coords(i)), i);
        }
    }

    #[test]
    fn symbol_lambda_examples() {
        assert_eq!(symbol_lambda(&[0.0; 4]), 0.0);
        assert!((symbol_lambda(&[PI; 4]) - 16.0).abs() < 1e-14);
        assert!((symbol_lambda(&[PI / 2.0, 0.0]) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn symbol_full_examples() {
        let massless = OperatorSymbol::fractional(0.0).unwrap();
        assert_eq!(symbol_full(&massless, &[0.0; 4]), 0.0);
        let massive = OperatorSymbol::new(0.0, 0.1, 0.0).unwrap();
        assert!((symbol_full(&massive, &[PI; 4]) - 16.1).abs() < 1e-13);
        let half = OperatorSymbol::fractional(1.0).unwrap();
        assert!((symbol_full(&half, &[PI / 2.0, 0.0]) - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn class_multiplicities_cover_grid() {
        for (d, side) in [(1, 8), (2, 6), (3, 4), (4, 8), (3, 5)] {
            let mut total = 0.0;
            let mut count = 0;
            for_each_class(d, side, |_, m| {
                total += m;
                count += 1;
            });
            assert_eq!(total as usize, side.pow(d as u32));
            assert_eq!(count, class_count(d, side));
        }
    }

    #[test]
    fn inadmissible_symbol_rejected() {
        let op = OperatorSymbol::new(0.0, 0.0, -1.5).unwrap();
        let t = TorusSpec::new(2, 2, 2).unwrap();
        assert!(matches!(op.validate_on(&t), Err(Error::InadmissibleSymbol { .. })));
    }

    #[test]
    fn gamma_constant_examples() {
        assert!((green_gamma(4, 0.0).unwrap() - 1.0 / (4.0 * PI * PI)).abs() < 1e-15);
        assert!((green_gamma(5, 0.0).unwrap() - 1.0 / (8.0 * PI * PI)).abs() < 1e-15);
        assert!(green_gamma(2, 0.0).is_err());
        assert!(green_gamma(4, 1.0).is_err());
    }

    #[test]
    fn massless_without_exclusion_is_rejected() {
        let t = TorusSpec::new(2, 2, 1).unwrap();
        let op = OperatorSymbol::fractional(0.0).unwrap();
        assert!(matches!(green_function(&op, &t, false), Err(Error::ZeroModeNotExcluded)));
    }
}
