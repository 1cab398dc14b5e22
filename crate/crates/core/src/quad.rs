//! Numerical quadrature used throughout the crate.
//!
//! The workhorse is a globally adaptive 21-point Gauss–Kronrod rule that
//! integrates vector-valued integrands (all components share the same
//! subdivision, which is what the covariance slices need). Semi-infinite
//! ranges are mapped onto finite ones by the caller through explicit
//! substitutions, so every routine here works on bounded intervals.

use std::collections::BinaryHeap;
use std::cmp::Ordering;

use gauss_quad::{GaussHermite, GaussLegendre};

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// Gauss weights paired with the odd-indexed Kronrod nodes.
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Tolerances and limits for [`integrate_vec`] and [`integrate`].
#[derive(Clone, Copy, Debug)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { abs_tol: 1e-14, rel_tol: 1e-12, max_intervals: 4000 }
    }
}

impl QuadOptions {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        Self { abs_tol, rel_tol, ..Self::default() }
    }
}

/// Outcome of an adaptive integration.
#[derive(Clone, Debug)]
pub struct QuadResult {
    pub value: Vec<f64>,
    /// Estimated absolute error (max over components).
    pub error: f64,
    pub evaluations: usize,
}

struct Panel {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod_panel<F>(f: &mut F, a: f64, b: f64, dim: usize, buf: &mut [f64]) -> Panel
where
    F: FnMut(f64, &mut [f64]),
{
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut resk = vec![0.0; dim];
    let mut resg = vec![0.0; dim];
    f(centre, buf);
    for c in 0..dim {
        resk[c] = WGK[10] * buf[c];
    }
    for i in 0..10 {
        let dx = half * XGK[i];
        let mut lo = vec![0.0; dim];
        f(centre - dx, &mut lo);
        f(centre + dx, buf);
        for c in 0..dim {
            let s = lo[c] + buf[c];
            resk[c] += WGK[i] * s;
            if i % 2 == 1 {
                resg[c] += WG[i / 2] * s;
            }
        }
    }
    let mut error: f64 = 0.0;
    for c in 0..dim {
        resk[c] *= half;
        resg[c] *= half;
        error = error.max((resk[c] - resg[c]).abs());
    }
    Panel { a, b, value: resk, error }
}

/// Adaptive Gauss–Kronrod integration of a vector-valued integrand on `[a, b]`.
///
/// The integrand receives the abscissa and a buffer of length `dim` to fill.
/// Convergence is declared when the summed error estimate falls below
/// `max(abs_tol, rel_tol · max_c |I_c|)`.
pub fn integrate_vec<F>(mut f: F, a: f64, b: f64, dim: usize, opts: QuadOptions) -> Result<QuadResult>
where
    F: FnMut(f64, &mut [f64]),
{
    if a == b {
        return Ok(QuadResult { value: vec![0.0; dim], error: 0.0, evaluations: 0 });
    }
    let mut buf = vec![0.0; dim];
    let first = kronrod_panel(&mut f, a, b, dim, &mut buf);
    let mut total = first.value.clone();
    let mut total_err = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    let mut evaluations = 21;
    loop {
        let scale = total.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let target = opts.abs_tol.max(opts.rel_tol * scale);
        if total_err <= target {
            break;
        }
        if heap.len() >= opts.max_intervals {
            return Err(Error::Quadrature { achieved: total_err, requested: target });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::Quadrature { achieved: total_err, requested: target });
        }
        let left = kronrod_panel(&mut f, worst.a, mid, dim, &mut buf);
        let right = kronrod_panel(&mut f, mid, worst.b, dim, &mut buf);
        evaluations += 42;
        for c in 0..dim {
            total[c] += left.value[c] + right.value[c] - worst.value[c];
        }
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // Re-sum from the panels to shed accumulated cancellation in `total`.
    let mut value = vec![0.0; dim];
    let mut error = 0.0;
    for p in heap.iter() {
        for c in 0..dim {
            value[c] += p.value[c];
        }
        error += p.error;
    }
    Ok(QuadResult { value, error, evaluations })
}

/// Scalar convenience wrapper around [`integrate_vec`].
pub fn integrate<F>(mut f: F, a: f64, b: f64, opts: QuadOptions) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    let r = integrate_vec(|x, out| out[0] = f(x), a, b, 1, opts)?;
    Ok((r.value[0], r.error))
}

/// Composite Simpson rule on `2m` panels.
pub fn simpson<F>(f: &F, a: f64, b: f64, panels: usize) -> f64
where
    F: Fn(f64) -> f64,
{
    let n = panels + panels % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Simpson rule with panel doubling until two successive values agree to
/// `rel_tol`. Returns the refined value and the final panel count.
pub fn simpson_refined<F>(f: &F, a: f64, b: f64, rel_tol: f64) -> Result<(f64, usize)>
where
    F: Fn(f64) -> f64,
{
    let mut panels = 64;
    let mut prev = simpson(f, a, b, panels);
    while panels < (1 << 22) {
        panels *= 2;
        let next = simpson(f, a, b, panels);
        if (next - prev).abs() <= rel_tol * next.abs().max(1e-300) {
            return Ok((next, panels));
        }
        prev = next;
    }
    Err(Error::Quadrature { achieved: f64::NAN, requested: rel_tol })
}

/// Gauss–Legendre nodes and weights mapped to `[a, b]`.
pub fn gauss_legendre(order: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(order.try_into().expect("order must be positive"));
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    rule.as_node_weight_pairs().iter().map(|&(x, w)| (c + h * x, h * w)).collect()
}

/// Gauss–Hermite nodes and weights for the standard normal density, i.e.
/// `Σ w_i f(x_i) ≈ E[f(X)]` with `X ~ N(0, 1)`.
pub fn gauss_hermite_normal(order: usize) -> Vec<(f64, f64)> {
    let rule = GaussHermite::new(order.try_into().expect("order must be positive"));
    let norm = std::f64::consts::PI.sqrt();
    rule.as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (x * std::f64::consts::SQRT_2, w / norm))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let (v, _) = integrate(|x| 3.0 * x * x - 2.0 * x + 1.0, -1.0, 2.0, QuadOptions::default()).unwrap();
        assert!((v - 9.0).abs() < 1e-13);
    }

    #[test]
    fn endpoint_singularity_converges() {
        let (v, _) = integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0, QuadOptions::new(1e-12, 1e-12)).unwrap();
        assert!((v - 2.0).abs() < 1e-9);
    }

    #[test]
    fn vector_components_share_panels() {
        let r = integrate_vec(
            |x, out| {
                out[0] = x.sin();
                out[1] = x.exp();
            },
            0.0,
            1.0,
            2,
            QuadOptions::default(),
        )
        .unwrap();
        assert!((r.value[0] - (1.0 - 1f64.cos())).abs() < 1e-14);
        assert!((r.value[1] - (1f64.exp() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn hermite_reproduces_normal_moments() {
        let rule = gauss_hermite_normal(20);
        let m2: f64 = rule.iter().map(|(x, w)| w * x * x).sum();
        let m4: f64 = rule.iter().map(|(x, w)| w * x.powi(4)).sum();
        assert!((m2 - 1.0).abs() < 1e-12);
        assert!((m4 - 3.0).abs() < 1e-11);
    }

    #[test]
    fn simpson_refines_to_tolerance() {
        let (v, _) = simpson_refined(&|x: f64| (-x * x).exp(), -8.0, 8.0, 1e-12).unwrap();
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-10);
    }
}
