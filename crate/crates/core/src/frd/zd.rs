//! Scale tables of the infinite-volume slices on `Z^d`.
//!
//! A polynomial slice `Γ_j` has range `< L^j`, so on a torus of side
//! `M ≥ 2L^j` its periodisation does not overlap itself: `Γ_j(0)` and
//! `Σ_x w_j(x)²` computed from the torus momentum sum are the `Z^d` values,
//! not approximations.
//!
//! At `η = 0` the symbol is `a + Σ_i h(u_i)` and every slice is a polynomial
//! in it, so these sums are expectations of a polynomial in a sum of
//! independent per-axis variables. [`SumRule`] builds, one axis at a time,
//! an interpolatory rule on Chebyshev points that is exact up to the needed
//! degree; the cost grows like `d · L^{2J}` instead of `L^{dJ}`. Other
//! operators fall back to sums over momentum symmetry classes.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::decomposition::{Backend, SliceEvaluator};
use crate::error::{Error, Result};
use crate::lattice::{axis_table, class_multiplicity, OperatorSymbol};

/// Largest number of scales handled by the table builders.
pub const MAX_LEVELS: usize = 64;

/// A positive discrete measure on the real line, or an interpolatory rule
/// standing in for one.
#[derive(Clone, Debug)]
pub struct SumRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SumRule {
    /// Unit mass at `0`.
    pub fn point() -> Self {
        Self { nodes: vec![0.0], weights: vec![1.0] }
    }

    /// Law of `h(u(p))` for `p` uniform on the `side` momenta of a circle,
    /// folded under `p ↦ −p`.
    pub fn axis(op: &OperatorSymbol, side: usize) -> Self {
        let table = axis_table(side);
        let half = side / 2;
        let mut nodes = Vec::with_capacity(half + 1);
        let mut weights = Vec::with_capacity(half + 1);
        for (k, &u) in table.iter().enumerate().take(half + 1) {
            let m = if k == 0 || (side % 2 == 0 && k == half) { 1.0 } else { 2.0 };
            nodes.push(op.axis_part(u));
            weights.push(m / side as f64);
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Rule for `X + Y` with `X ~ self`, `Y ~ other` independent, exact for
    /// polynomials of degree `< size`. Small products are returned as is.
    pub fn convolve(&self, other: &Self, size: usize) -> Self {
        let pairs = || {
            self.nodes.iter().zip(&self.weights).flat_map(move |(x, wx)| {
                other.nodes.iter().zip(&other.weights).map(move |(y, wy)| (x + y, wx * wy))
            })
        };
        if self.len() * other.len() <= size {
            let (nodes, weights) = pairs().unzip();
            return Self { nodes, weights };
        }
        let (lo, hi) = pairs().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (v, _)| (lo.min(v), hi.max(v)));
        let (mid, half) = (0.5 * (hi + lo), 0.5 * (hi - lo).max(f64::MIN_POSITIVE));
        // Chebyshev moments μ_m = E[T_m(t)] of the rescaled variable, run over
        // blocks of atoms so that the recurrence vectorises.
        const BLOCK: usize = 64;
        let mut mu = vec![0.0; size];
        let atoms: Vec<(f64, f64)> = pairs().map(|(v, w)| ((v - mid) / half, w)).collect();
        for block in atoms.chunks(BLOCK) {
            let k = block.len();
            let mut t = [0.0; BLOCK];
            let mut w = [0.0; BLOCK];
            for (i, &(ti, wi)) in block.iter().enumerate() {
                t[i] = ti;
                w[i] = wi;
            }
            let mut prev = [0.0; BLOCK];
            let mut cur = w;
            mu[0] += w[..k].iter().sum::<f64>();
            for i in 0..BLOCK {
                prev[i] = w[i];
                cur[i] = w[i] * t[i];
            }
            for slot in mu.iter_mut().skip(1) {
                *slot += cur.iter().sum::<f64>();
                for i in 0..BLOCK {
                    let next = 2.0 * t[i] * cur[i] - prev[i];
                    prev[i] = cur[i];
                    cur[i] = next;
                }
            }
        }
        // Interpolation on the first-kind Chebyshev points t_k = cos θ_k.
        let n = size as f64;
        let mut nodes = Vec::with_capacity(size);
        let mut weights = Vec::with_capacity(size);
        for k in 0..size {
            let theta = PI * (k as f64 + 0.5) / n;
            let w: f64 = mu[0] + 2.0 * (1..size).map(|m| mu[m] * (m as f64 * theta).cos()).sum::<f64>();
            nodes.push(mid + half * theta.cos());
            weights.push(w / n);
        }
        Self { nodes, weights }
    }

    /// Rule for the sum over `axes` copies of `axis`, exact for polynomials
    /// of degree `< size`.
    pub fn power(axis: &Self, axes: usize, size: usize) -> Self {
        (0..axes).fold(Self::point(), |acc, _| acc.convolve(axis, size))
    }
}

/// Per-scale quantities used by the coupling flow.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScaleTables {
    pub d: usize,
    pub l: usize,
    pub op: OperatorSymbol,
    pub backend: Backend,
    /// `Γ_j(0) = sup_x |Γ_j(x)|` for `j = 1..=J` (index `j − 1`).
    pub gamma_zero: Vec<f64>,
    /// `Γ_j^{(1)} = Σ_x Γ_j(x)` for `j = 1..=J` (index `j − 1`).
    pub gamma_sum: Vec<f64>,
    /// `w_j^{(1)} = Σ_x w_j(x)` for `j = 0..=J`.
    pub w_sum: Vec<f64>,
    /// `Σ_x w_j(x)²` for `j = 0..=J`.
    pub w_square: Vec<f64>,
    /// Side of the momentum grid used for scale `j` (index `j − 1`).
    pub grid_sides: Vec<usize>,
}

impl ScaleTables {
    /// Number of computed slices `J`.
    pub fn levels(&self) -> usize {
        self.gamma_zero.len()
    }

    /// `β_j = (n+8) Σ_x (w_{j+1}² − w_j²)` for `0 ≤ j < J`.
    pub fn beta(&self, j: usize, n: usize) -> Option<f64> {
        (j + 1 < self.w_square.len()).then(|| (n as f64 + 8.0) * (self.w_square[j + 1] - self.w_square[j]))
    }

    /// All available `β_j`.
    pub fn betas(&self, n: usize) -> Vec<f64> {
        (0..self.levels()).filter_map(|j| self.beta(j, n)).collect()
    }
}

/// Visits nondecreasing tuples `k` of length `d` with entries in `[first, top]`
/// and `k[0] = first`.
fn for_each_class_from<F: FnMut(&[usize])>(d: usize, top: usize, first: usize, mut f: F) {
    let mut k = vec![first; d];
    loop {
        f(&k);
        let mut i = d;
        loop {
            if i <= 1 {
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

/// Sums `f(u)·multiplicity` over every momentum class of a grid of the given
/// side, in parallel over the smallest index. `f` writes `dim` values.
pub fn class_sum<F>(d: usize, side: usize, dim: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    let table = axis_table(side);
    let top = side / 2;
    let partials: Vec<Vec<f64>> = (0..=top)
        .into_par_iter()
        .map(|first| {
            let mut acc = vec![0.0; dim];
            let mut buf = vec![0.0; dim];
            let mut u = vec![0.0; d];
            let mut err = None;
            for_each_class_from(d, top, first, |k| {
                if err.is_some() {
                    return;
                }
                for (slot, &v) in u.iter_mut().zip(k) {
                    *slot = table[v];
                }
                if let Err(e) = f(&u, &mut buf) {
                    err = Some(e);
                    return;
                }
                let m = class_multiplicity(k, side);
                for (a, b) in acc.iter_mut().zip(&buf) {
                    *a += m * b;
                }
            });
            match err {
                Some(e) => Err(e),
                None => Ok(acc),
            }
        })
        .collect::<Result<_>>()?;
    let mut total = vec![0.0; dim];
    for p in partials {
        for (a, b) in total.iter_mut().zip(p) {
            *a += b;
        }
    }
    Ok(total)
}

/// Torus side on which scale `j` is computed without self-overlap.
fn grid_side(l: usize, j: usize, backend: Backend) -> usize {
    let base = l.pow(j as u32);
    match backend {
        Backend::PolyFiniteRange => 2 * base,
        Backend::FourierWindow => 4 * base,
    }
}

/// Computes the tables for `j = 1..=levels`.
pub fn infinite_volume_tables(
    op: &OperatorSymbol,
    d: usize,
    l: usize,
    levels: usize,
    backend: Backend,
) -> Result<ScaleTables> {
    if levels == 0 || levels > MAX_LEVELS {
        return Err(Error::InvalidParameter(format!("number of scales must lie in 1..={MAX_LEVELS}")));
    }
    let eval = SliceEvaluator::new(op, d, l, levels, backend)?;
    let at_zero = eval.eval_with(&vec![0.0; d], false)?;
    let gamma_sum = at_zero.slices.clone();
    let mut w_sum = vec![0.0];
    for g in &gamma_sum {
        w_sum.push(w_sum.last().unwrap() + g);
    }
    let (gamma_zero, w_square, grid_sides) = match eval.symbol_degree().filter(|_| op.is_axis_additive()) {
        Some(degree) => rule_tables(&eval, op, d, levels, degree)?,
        None => class_tables(&eval, d, l, levels, backend)?,
    };
    Ok(ScaleTables { d, l, op: op.clone(), backend, gamma_zero, gamma_sum, w_sum, w_square, grid_sides })
}

type TableColumns = (Vec<f64>, Vec<f64>, Vec<usize>);

fn rule_tables(eval: &SliceEvaluator, op: &OperatorSymbol, d: usize, levels: usize, degree: usize) -> Result<TableColumns> {
    // w_J² has degree 2·degree in the symbol and trigonometric degree
    // 2·degree·R per axis; the grid resolves both exactly.
    let side = 2 * degree * op.polynomial_range() + 2;
    let rule = SumRule::power(&SumRule::axis(op, side), d, 2 * degree + 1);
    let mut gamma_zero = vec![0.0; levels];
    let mut w_square = vec![0.0; levels + 1];
    let mut buf = vec![0.0; levels];
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        eval.slices_at_symbol(op.a_mass + x, &mut buf)?;
        let mut acc = 0.0;
        for j in 0..levels {
            acc += buf[j];
            gamma_zero[j] += w * buf[j];
            w_square[j + 1] += w * acc * acc;
        }
    }
    Ok((gamma_zero, w_square, vec![side; levels]))
}

fn class_tables(eval: &SliceEvaluator, d: usize, l: usize, levels: usize, backend: Backend) -> Result<TableColumns> {
    let mut gamma_zero = Vec::with_capacity(levels);
    let mut w_square = vec![0.0];
    let mut grid_sides = Vec::with_capacity(levels);
    for j in 1..=levels {
        let side = grid_side(l, j, backend);
        let sums = class_sum(d, side, 2, |u, out| {
            let mut buf = [0.0; MAX_LEVELS];
            let m = &mut buf[..levels];
            eval.slices_into(u, m)?;
            let w: f64 = m[..j].iter().sum();
            out[0] = m[j - 1];
            out[1] = w * w;
            Ok(())
        })?;
        let volume = (side as f64).powi(d as i32);
        gamma_zero.push(sums[0] / volume);
        w_square.push(sums[1] / volume);
        grid_sides.push(side);
    }
    Ok((gamma_zero, w_square, grid_sides))
}

/// Slice profiles `Γ_j(r e_1)` along a lattice axis.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AxisProfiles {
    /// `profiles[j − 1][r]` for `j = 1..=J`, `r = 0..=r_max`.
    pub profiles: Vec<Vec<f64>>,
    /// Torus side of the momentum sum.
    pub side: usize,
}

impl AxisProfiles {
    pub fn levels(&self) -> usize {
        self.profiles.len()
    }

    /// `w_j(r e_1) = Σ_{k≤j} Γ_k(r e_1)`.
    pub fn partial_sum(&self, j: usize, r: usize) -> f64 {
        self.profiles[..j].iter().map(|p| p[r]).sum()
    }
}

/// Evaluates `Γ_j(r e_1)` for `j ≤ levels` and `r ≤ r_max` on `Z^d`.
pub fn axis_profiles(op: &OperatorSymbol, d: usize, l: usize, levels: usize, r_max: usize) -> Result<AxisProfiles> {
    if d < 2 || !(1..=MAX_LEVELS).contains(&levels) {
        return Err(Error::InvalidParameter(format!("axis profiles need d ≥ 2 and 1..={MAX_LEVELS} scales")));
    }
    let eval = SliceEvaluator::new(op, d, l, levels, Backend::PolyFiniteRange)?;
    let range = op.polynomial_range();
    let (side, transverse) = match eval.symbol_degree().filter(|_| op.is_axis_additive()) {
        Some(degree) => {
            // Longitudinal grid resolves cos(r p₁)·Γ̂_j exactly; the
            // transverse rule integrates the remaining axes exactly.
            let side = degree * range + r_max + 1;
            let perp_side = 2 * degree * range + 2;
            let perp = SumRule::power(&SumRule::axis(op, perp_side), d - 1, degree + 1);
            let table = axis_table(side);
            let mut out = vec![0.0; levels * (side / 2 + 1)];
            let mut buf = vec![0.0; levels];
            for k1 in 0..=side / 2 {
                let h1 = op.a_mass + op.axis_part(table[k1]);
                let row = &mut out[k1 * levels..(k1 + 1) * levels];
                for (x, w) in perp.nodes.iter().zip(&perp.weights) {
                    eval.slices_at_symbol(h1 + x, &mut buf)?;
                    for (o, v) in row.iter_mut().zip(&buf) {
                        *o += w * v;
                    }
                }
            }
            (side, out)
        }
        None => {
            let side = l.pow(levels as u32) + r_max;
            let table = axis_table(side);
            let volume = (side as f64).powi(d as i32 - 1);
            let mut out = class_sum(d - 1, side, levels * (side / 2 + 1), |uperp, out| {
                let mut u = vec![0.0; d];
                u[1..].copy_from_slice(uperp);
                for k1 in 0..=side / 2 {
                    u[0] = table[k1];
                    eval.slices_into(&u, &mut out[k1 * levels..(k1 + 1) * levels])?;
                }
                Ok(())
            })?;
            out.iter_mut().for_each(|v| *v /= volume);
            (side, out)
        }
    };
    let half = side / 2;
    let mut profiles = vec![vec![0.0; r_max + 1]; levels];
    for k1 in 0..=half {
        let weight = if k1 == 0 || (side % 2 == 0 && k1 == half) { 1.0 } else { 2.0 };
        let angle = 2.0 * PI * k1 as f64 / side as f64;
        for r in 0..=r_max {
            let c = weight * (angle * r as f64).cos() / side as f64;
            for (j, p) in profiles.iter_mut().enumerate() {
                p[r] += c * transverse[k1 * levels + j];
            }
        }
    }
    Ok(AxisProfiles { profiles, side })
}

/// The `Z^d` Green's function along a lattice axis, `w_J(r e_1)` plus the
/// remainder `Σ_{j>J} Γ_j(r e_1)` estimated from the scaling
/// `Γ_{J+k}(x) ≈ L^{−(d−2+η)k} Γ_J(x/L^k)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GreenAxis {
    pub partial: Vec<f64>,
    pub remainder: Vec<f64>,
    pub levels: usize,
}

impl GreenAxis {
    pub fn value(&self, r: usize) -> f64 {
        self.partial[r] + self.remainder[r]
    }
}

pub fn green_axis(op: &OperatorSymbol, d: usize, l: usize, levels: usize, r_max: usize) -> Result<GreenAxis> {
    if op.a_mass != 0.0 {
        return Err(Error::InvalidParameter("the scaling remainder needs a massless operator".into()));
    }
    let prof = axis_profiles(op, d, l, levels, r_max)?;
    let last = &prof.profiles[levels - 1];
    let at = |y: f64| {
        let i = (y.floor() as usize).min(r_max.saturating_sub(1));
        let f = y - i as f64;
        if r_max == 0 {
            last[0]
        } else {
            (1.0 - f) * last[i] + f * last[i + 1]
        }
    };
    let rho = (l as f64).powf(-(d as f64 - 2.0 + op.eta));
    let remainder = (0..=r_max)
        .map(|r| {
            let (mut s, mut scale, mut factor) = (0.0, l as f64, rho);
            while factor > 1e-18 {
                s += factor * at(r as f64 / scale);
                scale *= l as f64;
                factor *= rho;
            }
            s
        })
        .collect();
    let partial = (0..=r_max).map(|r| prof.partial_sum(levels, r)).collect();
    Ok(GreenAxis { partial, remainder, levels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::class_count;

    #[test]
    fn class_sum_counts_every_momentum() {
        for (d, side) in [(2, 6), (3, 5), (4, 8)] {
            let s = class_sum(d, side, 1, |_, out| {
                out[0] = 1.0;
                Ok(())
            })
            .unwrap();
            assert!((s[0] - (side as f64).powi(d as i32)).abs() < 1e-9);
        }
        let mut n = 0;
        for first in 0..=4 {
            for_each_class_from(3, 4, first, |_| n += 1);
        }
        assert_eq!(n, class_count(3, 8));
    }

    #[test]
    fn sum_rule_reproduces_moments_of_sums() {
        let op = OperatorSymbol::new(0.0, 0.0, 0.3).unwrap().with_higher_terms(vec![(4, 0.05)]).unwrap();
        let side = 12;
        let axis = SumRule::axis(&op, side);
        let rule = SumRule::power(&axis, 3, 9);
        assert_eq!(rule.len(), 9);
        let table = axis_table(side);
        for k in 0..9 {
            let mut exact = 0.0;
            for a in 0..side {
                for b in 0..side {
                    for c in 0..side {
                        let x: f64 = [a, b, c].iter().map(|&i| op.axis_part(table[i.min(side - i)])).sum();
                        exact += x.powi(k as i32);
                    }
                }
            }
            exact /= (side as f64).powi(3);
            let approx: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * x.powi(k as i32)).sum();
            assert!((approx - exact).abs() < 1e-12 * exact.max(1.0), "k={k}: {approx} vs {exact}");
        }
    }

    #[test]
    fn rule_and_class_paths_agree() {
        let op = OperatorSymbol::new(0.0, 0.1, 0.0).unwrap();
        let eval = SliceEvaluator::new(&op, 3, 2, 4, Backend::PolyFiniteRange).unwrap();
        let degree = eval.symbol_degree().unwrap();
        let (g1, w1, _) = rule_tables(&eval, &op, 3, 4, degree).unwrap();
        let (g2, w2, _) = class_tables(&eval, 3, 2, 4, Backend::PolyFiniteRange).unwrap();
        for j in 0..4 {
            assert!((g1[j] - g2[j]).abs() < 1e-13, "Γ_{}(0): {} vs {}", j + 1, g1[j], g2[j]);
            assert!((w1[j + 1] - w2[j + 1]).abs() < 1e-13, "w_{}²: {} vs {}", j + 1, w1[j + 1], w2[j + 1]);
        }
        let prof = axis_profiles(&op, 3, 2, 4, 6).unwrap();
        let op_frac = op.clone();
        // The class path recomputes the same profiles on a finite torus.
        let eval2 = SliceEvaluator::new(&op_frac, 3, 2, 4, Backend::PolyFiniteRange).unwrap();
        let side = 22;
        let table = axis_table(side);
        for r in [0usize, 3, 6] {
            let mut v = 0.0;
            for_each_full(3, side, |k| {
                let u: Vec<f64> = k.iter().map(|&i| table[i.min(side - i)]).collect();
                let m = eval2.eval_with(&u, false).unwrap();
                v += m.slices[3] * (2.0 * PI * (k[0] * r) as f64 / side as f64).cos();
            });
            v /= (side as f64).powi(3);
            assert!((v - prof.profiles[3][r]).abs() < 1e-13, "r={r}: {v} vs {}", prof.profiles[3][r]);
        }
    }

    fn for_each_full(d: usize, side: usize, mut f: impl FnMut(&[usize])) {
        let mut k = vec![0; d];
        'outer: loop {
            f(&k);
            for slot in k.iter_mut() {
                *slot += 1;
                if *slot < side {
                    continue 'outer;
                }
                *slot = 0;
            }
            return;
        }
    }

    #[test]
    fn tables_match_torus_decomposition() {
        use crate::frd::decomposition::decompose;
        use crate::lattice::TorusSpec;
        let op = OperatorSymbol::new(0.0, 0.0, 0.0).unwrap();
        let tables = infinite_volume_tables(&op, 3, 2, 2, Backend::PolyFiniteRange).unwrap();
        // Side 8 leaves Γ_1, Γ_2 (range < 4) free of self-overlap.
        let dec = decompose(&op, &TorusSpec::new(3, 2, 3).unwrap(), Backend::PolyFiniteRange).unwrap();
        for j in 1..=2 {
            let k = dec.slice(j).unwrap().kernel(&dec.torus).unwrap();
            assert!((k[0] - tables.gamma_zero[j - 1]).abs() < 1e-14);
            assert!((dec.w_square_sum(j) - tables.w_square[j]).abs() < 1e-14);
        }
    }
}
