//! Reduction of torus expectations to integrals over the constant field.
//!
//! Splitting `C = w_N + t_N Q_N` writes every Gaussian expectation on the
//! torus as an `n`-dimensional integral over the constant field `y`, with the
//! fluctuation field of covariance `w_N` absorbed into a weight
//! `Z_N(φ) = E_{w_N}[e^{−V_0(φ + ζ)}]`. Two weights are provided:
//!
//! * [`EffectivePotentialZero`]: `Z_N ≈ e^{−u_N − V_N}` with the endpoint
//!   couplings of the flow;
//! * [`SmearedPotential`]: the exact weight, computed by tensor trapezoid
//!   quadrature over the eigenmodes of `w_N`. It is only affordable on tiny
//!   lattices and serves, together with [`lattice_mgf`] and
//!   [`lattice_two_point`], as the oracle for the reduction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frd::CovarianceDecomposition;
use crate::lattice::{TorusFft, TorusSpec};
use crate::predictor::{Direction, YDistribution};

/// Local quartic potential `Σ_x (ν|φ_x|²/2 + g|φ_x|⁴/4)` on an `n`-component
/// field stored site-major.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalQuartic {
    pub nu: f64,
    pub g: f64,
}

impl LocalQuartic {
    pub fn new(nu: f64, g: f64) -> Result<Self> {
        if !(g > 0.0) || !nu.is_finite() {
            return Err(Error::InvalidParameter(format!("potential needs g > 0 and finite ν, got g = {g}, ν = {nu}")));
        }
        Ok(Self { nu, g })
    }

    pub fn site(&self, s: f64) -> f64 {
        0.5 * self.nu * s + 0.25 * self.g * s * s
    }

    /// Potential of a site-major field with `n` components.
    pub fn eval(&self, phi: &[f64], n: usize) -> f64 {
        phi.chunks_exact(n).map(|c| self.site(c.iter().map(|v| v * v).sum())).sum()
    }
}

/// A weight `Z_N(φ)` on lattice fields, together with its observable
/// insertion `Z_{N,ox}(φ)`.
pub trait ZeroModeWeight: Sync {
    fn components(&self) -> usize;

    fn volume(&self) -> usize;

    fn z(&self, phi: &[f64]) -> f64;

    /// `Z_{N,ox}` with insertion `φ_o^{(1)} φ_x^{(1)}`.
    fn z_two_point(&self, phi: &[f64], o: usize, x: usize) -> f64;
}

/// The endpoint potential `V(y) = |Λ|(ν_N|y|²/2 + g_N|y|⁴/4)` and the weight
/// `e^{−u_N − V_N(φ)}` built from it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectivePotentialZero {
    pub n: usize,
    pub volume: usize,
    pub nu_n: f64,
    pub g_n: f64,
    pub u_n: f64,
    /// Observable coefficients `λ_o λ_x` multiplying the insertion.
    pub lambda_ox: f64,
}

impl EffectivePotentialZero {
    pub fn new(n: usize, volume: usize, nu_n: f64, g_n: f64, u_n: f64) -> Result<Self> {
        LocalQuartic::new(nu_n, g_n)?;
        if n == 0 || volume == 0 {
            return Err(Error::InvalidParameter("n and |Λ| must be positive".into()));
        }
        Ok(Self { n, volume, nu_n, g_n, u_n, lambda_ox: 1.0 })
    }

    pub fn with_lambda(mut self, lambda_o: f64, lambda_x: f64) -> Self {
        self.lambda_ox = lambda_o * lambda_x;
        self
    }

    fn local(&self) -> LocalQuartic {
        LocalQuartic { nu: self.nu_n, g: self.g_n }
    }

    /// `V(y)` on the constant field with `|y|² = y2`.
    pub fn constant_field(&self, y2: f64) -> f64 {
        self.volume as f64 * self.local().site(y2)
    }
}

impl ZeroModeWeight for EffectivePotentialZero {
    fn components(&self) -> usize {
        self.n
    }

    fn volume(&self) -> usize {
        self.volume
    }

    fn z(&self, phi: &[f64]) -> f64 {
        (-self.u_n - self.local().eval(phi, self.n)).exp()
    }

    fn z_two_point(&self, phi: &[f64], o: usize, x: usize) -> f64 {
        self.lambda_ox * phi[o * self.n] * phi[x * self.n] * self.z(phi)
    }
}

/// Orthonormal real eigenvectors of a translation-invariant covariance with
/// their standard deviations; modes of zero variance are dropped.
#[derive(Clone, Debug)]
pub struct GaussianModes {
    pub volume: usize,
    pub vectors: Vec<Vec<f64>>,
    pub std: Vec<f64>,
}

impl GaussianModes {
    /// Real Fourier basis of the torus: `cos(p·x)` for `p ≡ −p`, and the
    /// pair `cos(p·x)`, `sin(p·x)` for every other pair `{p, −p}`.
    pub fn from_multiplier(torus: &TorusSpec, multiplier: &[f64]) -> Result<Self> {
        let volume = torus.volume();
        if multiplier.len() != volume {
            return Err(Error::DimensionMismatch { expected: volume, found: multiplier.len() });
        }
        let side = torus.side();
        let residues: Vec<Vec<usize>> = (0..volume).map(|x| torus.residues(x)).collect();
        let negate = |p: usize| -> usize {
            let r: Vec<i64> = residues[p].iter().map(|&v| ((side - v) % side) as i64).collect();
            torus.index(&r)
        };
        let phase = |p: usize, x: usize| -> f64 {
            let dot: usize = residues[p].iter().zip(&residues[x]).map(|(a, b)| a * b).sum();
            std::f64::consts::TAU * (dot % side) as f64 / side as f64
        };
        let mut vectors = Vec::new();
        let mut std = Vec::new();
        let mut push = |v: Vec<f64>, var: f64| -> Result<()> {
            if var < -1e-14 {
                return Err(Error::InvalidParameter(format!("negative variance {var:e}")));
            }
            if var > 0.0 {
                let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                vectors.push(v.iter().map(|a| a / norm).collect());
                std.push(var.sqrt());
            }
            Ok(())
        };
        for p in 0..volume {
            let q = negate(p);
            if q < p {
                continue;
            }
            push((0..volume).map(|x| phase(p, x).cos()).collect(), multiplier[p])?;
            if q != p {
                push((0..volume).map(|x| phase(p, x).sin()).collect(), multiplier[p])?;
            }
        }
        Ok(Self { volume, vectors, std })
    }

    pub fn rank(&self) -> usize {
        self.std.len()
    }
}

/// Tensor trapezoid expectation of `h(φ_0 + ζ)` with `ζ` an `n`-component
/// Gaussian field whose components are independent with covariance given by
/// `modes`. Each mode amplitude is integrated over `|a| ≤ min(8.5σ, radius)`
/// with `order` nodes.
pub fn gaussian_expectation<H>(modes: &GaussianModes, n: usize, order: usize, shift: &[f64], radius: f64, h: H) -> f64
where
    H: Fn(&[f64]) -> f64 + Sync,
{
    let order = order.max(3);
    let rules: Vec<Vec<(f64, f64)>> = modes
        .std
        .iter()
        .map(|&sigma| {
            let r = (8.5 * sigma).min(radius);
            let step = 2.0 * r / (order - 1) as f64;
            let norm = step / (sigma * (std::f64::consts::TAU).sqrt());
            (0..order)
                .map(|i| {
                    let a = -r + step * i as f64;
                    let end = if i == 0 || i == order - 1 { 0.5 } else { 1.0 };
                    (a, end * norm * (-0.5 * (a / sigma).powi(2)).exp())
                })
                .collect()
        })
        .collect();
    let dims = n * modes.rank();
    let volume = modes.volume;
    let total = order.pow(dims as u32);
    let head = if dims == 0 { 1 } else { order };
    let inner = total / head;
    (0..head)
        .into_par_iter()
        .map(|first| {
            let mut field = vec![0.0; n * volume];
            let mut digits = vec![0usize; dims];
            let mut acc = 0.0;
            for rest in 0..inner {
                let mut r = rest;
                for d in digits.iter_mut().skip(1) {
                    *d = r % order;
                    r /= order;
                }
                if dims > 0 {
                    digits[0] = first;
                }
                field.copy_from_slice(shift);
                let mut weight = 1.0;
                for (k, &digit) in digits.iter().enumerate() {
                    let mode = k / n;
                    let c = k % n;
                    let (a, w) = rules[mode][digit];
                    weight *= w;
                    for (x, v) in modes.vectors[mode].iter().enumerate() {
                        field[x * n + c] += a * v;
                    }
                }
                acc += weight * h(&field);
            }
            acc
        })
        .sum()
}

/// Radius beyond which `e^{−V}` is below `e^{−46}` for every field of that
/// Euclidean norm, from `Σ|φ_x|⁴ ≥ (Σ|φ_x|²)²/|Λ|`.
pub fn coercivity_radius(potential: &LocalQuartic, volume: usize) -> f64 {
    let neg = (-potential.nu).max(0.0);
    let a = potential.g / (4.0 * volume as f64);
    let s = (0.5 * neg + (0.25 * neg * neg + 4.0 * a * 46.0).sqrt()) / (2.0 * a);
    s.sqrt()
}

/// The exact weight `Z_N(φ) = E_{w_N}[e^{−V_0(φ + ζ)}]` on a tiny lattice.
#[derive(Clone, Debug)]
pub struct SmearedPotential {
    pub n: usize,
    pub potential: LocalQuartic,
    pub modes: GaussianModes,
    pub order: usize,
}

impl SmearedPotential {
    /// Uses the eigenmodes of `w_N` from `decomp`.
    pub fn new(decomp: &CovarianceDecomposition, n: usize, potential: LocalQuartic, order: usize) -> Result<Self> {
        let modes = GaussianModes::from_multiplier(&decomp.torus, &decomp.w_multiplier(decomp.scales()))?;
        let dims = n * modes.rank();
        if (order as f64).powi(dims as i32) > 5e7 {
            return Err(Error::Unsupported(format!("{dims}-dimensional tensor quadrature of order {order} is too large")));
        }
        Ok(Self { n, potential, modes, order })
    }
}

impl ZeroModeWeight for SmearedPotential {
    fn components(&self) -> usize {
        self.n
    }

    fn volume(&self) -> usize {
        self.modes.volume
    }

    fn z(&self, phi: &[f64]) -> f64 {
        gaussian_expectation(&self.modes, self.n, self.order, phi, f64::INFINITY, |f| (-self.potential.eval(f, self.n)).exp())
    }

    fn z_two_point(&self, phi: &[f64], o: usize, x: usize) -> f64 {
        let n = self.n;
        gaussian_expectation(&self.modes, n, self.order, phi, f64::INFINITY, |f| f[o * n] * f[x * n] * (-self.potential.eval(f, n)).exp())
    }
}

/// Left side of the reduction: `E_C[e^{−V(φ)+(f,φ)}]/E_C[e^{−V(φ)}]` for the
/// full covariance `C` of `decomp`, by tensor quadrature over all its modes.
pub fn lattice_mgf(decomp: &CovarianceDecomposition, n: usize, potential: LocalQuartic, f: &[f64], order: usize) -> Result<f64> {
    let modes = full_modes(decomp, n, f.len(), order)?;
    let zero = vec![0.0; f.len()];
    let radius = coercivity_radius(&potential, decomp.torus.volume());
    let num = gaussian_expectation(&modes, n, order, &zero, radius, |p| {
        (-potential.eval(p, n) + p.iter().zip(f).map(|(a, b)| a * b).sum::<f64>()).exp()
    });
    let den = gaussian_expectation(&modes, n, order, &zero, radius, |p| (-potential.eval(p, n)).exp());
    Ok(num / den)
}

/// Left side of the two-point reduction: `E_C[φ_o^{(1)}φ_x^{(1)} e^{−V}]/E_C[e^{−V}]`.
pub fn lattice_two_point(
    decomp: &CovarianceDecomposition,
    n: usize,
    potential: LocalQuartic,
    o: usize,
    x: usize,
    order: usize,
) -> Result<f64> {
    let len = n * decomp.torus.volume();
    let modes = full_modes(decomp, n, len, order)?;
    let zero = vec![0.0; len];
    let radius = coercivity_radius(&potential, decomp.torus.volume());
    let num = gaussian_expectation(&modes, n, order, &zero, radius, |p| p[o * n] * p[x * n] * (-potential.eval(p, n)).exp());
    let den = gaussian_expectation(&modes, n, order, &zero, radius, |p| (-potential.eval(p, n)).exp());
    Ok(num / den)
}

fn full_modes(decomp: &CovarianceDecomposition, n: usize, len: usize, order: usize) -> Result<GaussianModes> {
    if decomp.t_n.is_none() {
        return Err(Error::ZeroModeNotExcluded);
    }
    if len != n * decomp.torus.volume() {
        return Err(Error::DimensionMismatch { expected: n * decomp.torus.volume(), found: len });
    }
    let modes = GaussianModes::from_multiplier(&decomp.torus, &decomp.assembled_multiplier())?;
    if (order as f64).powi((n * modes.rank()) as i32) > 5e7 {
        return Err(Error::Unsupported(format!("{} scalar degrees of freedom are too many for tensor quadrature", n * modes.rank())));
    }
    Ok(modes)
}

/// How the `y`-integral is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct YQuadrature {
    /// Simpson nodes per axis (odd, `≡ 1 mod 4`) for `n ≤ 3`.
    pub nodes_per_axis: usize,
    /// Importance samples for `n > 3`.
    pub samples: usize,
    pub seed: u64,
}

impl YQuadrature {
    pub fn for_components(n: usize) -> Self {
        let nodes_per_axis = match n {
            1 => 401,
            2 => 161,
            _ => 61,
        };
        Self { nodes_per_axis, samples: 400_000, seed: 0x5eed }
    }
}

/// Data of the reduced integrals: components, volume, the zero-mode weight
/// `t_N` (absent when the mass vanishes) and the quadrature plan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedIntegralSpec {
    pub n: usize,
    pub volume: usize,
    pub t_n: Option<f64>,
    pub plan: YQuadrature,
}

impl ReducedIntegralSpec {
    pub fn from_decomposition(decomp: &CovarianceDecomposition, n: usize) -> Self {
        Self { n, volume: decomp.torus.volume(), t_n: decomp.t_n, plan: YQuadrature::for_components(n) }
    }

    /// Log of the Gaussian weight `e^{−½ t_N^{−1} |Λ| |y|²}`.
    pub fn log_gaussian(&self, y2: f64) -> f64 {
        match self.t_n {
            Some(t) => -0.5 * self.volume as f64 * y2 / t,
            None => 0.0,
        }
    }
}

/// A ratio of reduced integrals with an error estimate: the Simpson minus
/// coarse-grid difference, or the Monte Carlo standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// `(∫ num)/(∫ den)` over `y ∈ R^n`, with the Gaussian zero-mode weight of
/// `spec` multiplied into both integrands.
pub fn integrate_ratio<A, B>(spec: &ReducedIntegralSpec, num: A, den: B) -> Result<Estimate>
where
    A: Fn(&[f64]) -> f64 + Sync,
    B: Fn(&[f64]) -> f64 + Sync,
{
    let n = spec.n;
    let full = |y: &[f64], h: &dyn Fn(&[f64]) -> f64| -> f64 {
        let y2: f64 = y.iter().map(|v| v * v).sum();
        h(y) * spec.log_gaussian(y2).exp()
    };
    let radius = envelope_radius(n, &|y| full(y, &den)).max(envelope_radius(n, &|y| full(y, &num).abs()));
    if n <= 3 {
        let (a, ea) = simpson_cube(n, radius, spec.plan.nodes_per_axis, &|y| full(y, &num))?;
        let (b, eb) = simpson_cube(n, radius, spec.plan.nodes_per_axis, &|y| full(y, &den))?;
        if !(b > 0.0) || !a.is_finite() {
            return Err(Error::Quadrature { achieved: f64::NAN, requested: 0.0 });
        }
        let value = a / b;
        Ok(Estimate { value, error: value.abs() * (ea / a.abs().max(1e-300) + eb / b) })
    } else {
        importance_ratio(spec, radius / 3.0, &|y| full(y, &num), &|y| full(y, &den))
    }
}

/// Smallest radius beyond which the integrand has fallen by `e^{−40}` along
/// every coordinate axis.
fn envelope_radius(n: usize, h: &dyn Fn(&[f64]) -> f64) -> f64 {
    let mut y = vec![0.0; n];
    let mut peak = h(&y).abs();
    let mut samples = Vec::new();
    for axis in 0..n {
        for sign in [-1.0, 1.0] {
            let mut r = 1e-3;
            while r < 1e6 {
                y.iter_mut().for_each(|v| *v = 0.0);
                y[axis] = sign * r;
                let v = h(&y).abs();
                peak = peak.max(v);
                samples.push((r, v));
                r *= 1.25;
            }
        }
    }
    let cut = peak * (-40.0_f64).exp();
    let mut radius: f64 = 1e-3;
    for (r, v) in samples {
        if v > cut {
            radius = radius.max(r * 1.25);
        }
    }
    radius
}

fn simpson_cube(n: usize, radius: f64, nodes: usize, h: &(dyn Fn(&[f64]) -> f64 + Sync)) -> Result<(f64, f64)> {
    if nodes < 5 || nodes % 4 != 1 {
        return Err(Error::InvalidParameter(format!("Simpson nodes per axis must be ≡ 1 mod 4 and ≥ 5, got {nodes}")));
    }
    let step = 2.0 * radius / (nodes - 1) as f64;
    let fine: Vec<f64> = (0..nodes).map(|i| if i == 0 || i == nodes - 1 { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 }).collect();
    let half = (nodes - 1) / 2 + 1;
    let coarse: Vec<f64> = (0..nodes)
        .map(|i| {
            if i % 2 == 1 {
                0.0
            } else {
                let k = i / 2;
                2.0 * if k == 0 || k == half - 1 { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 }
            }
        })
        .collect();
    let total = nodes.pow(n as u32);
    let (a, b) = (0..total)
        .into_par_iter()
        .map(|mut idx| {
            let mut y = [0.0; 3];
            let mut wf = 1.0;
            let mut wc = 1.0;
            for yk in y.iter_mut().take(n) {
                let i = idx % nodes;
                idx /= nodes;
                *yk = -radius + step * i as f64;
                wf *= fine[i];
                wc *= coarse[i];
            }
            let v = h(&y[..n]);
            (wf * v, wc * v)
        })
        .reduce(|| (0.0, 0.0), |p, q| (p.0 + q.0, p.1 + q.1));
    let scale = (step / 3.0).powi(n as i32);
    Ok((a * scale, (a - b).abs() * scale))
}

fn importance_ratio(
    spec: &ReducedIntegralSpec,
    sigma: f64,
    num: &(dyn Fn(&[f64]) -> f64 + Sync),
    den: &(dyn Fn(&[f64]) -> f64 + Sync),
) -> Result<Estimate> {
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.plan.seed);
    let samples = spec.plan.samples.max(2);
    let mut draws = vec![0.0; samples * n];
    for v in draws.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v = sigma * z;
    }
    let (sa, sb, saa, sbb, sab) = draws
        .par_chunks(n)
        .map(|y| {
            let y2: f64 = y.iter().map(|v| v * v).sum();
            let q = (-0.5 * y2 / (sigma * sigma)).exp();
            let (a, b) = (num(y) / q, den(y) / q);
            (a, b, a * a, b * b, a * b)
        })
        .reduce(|| (0.0, 0.0, 0.0, 0.0, 0.0), |p, q| (p.0 + q.0, p.1 + q.1, p.2 + q.2, p.3 + q.3, p.4 + q.4));
    let m = samples as f64;
    let (ma, mb) = (sa / m, sb / m);
    if !(mb > 0.0) {
        return Err(Error::Quadrature { achieved: f64::NAN, requested: 0.0 });
    }
    let r = ma / mb;
    let var = (saa / m - 2.0 * r * sab / m + r * r * sbb / m) / (mb * mb);
    Ok(Estimate { value: r, error: (var.max(0.0) / m).sqrt() })
}

/// The two equivalent forms of the reduced moment generating function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MgfForm {
    /// `e^{½(f,Cf)} ∫Z_N(y1 + Cf)…/∫Z_N(y1)…`.
    Cov,
    /// `e^{½(f,w_N f)} ∫Z_N(y1 + w_N f) e^{(f,y1)}…/∫Z_N(y1)…`.
    W,
}

fn apply_per_component(fft: &TorusFft, f: &[f64], n: usize, multiplier: &[f64]) -> Result<Vec<f64>> {
    let volume = multiplier.len();
    let mut out = vec![0.0; f.len()];
    for c in 0..n {
        let comp: Vec<f64> = (0..volume).map(|x| f[x * n + c]).collect();
        let g = fft.apply_multiplier(&comp, multiplier)?;
        for (x, v) in g.into_iter().enumerate() {
            out[x * n + c] = v;
        }
    }
    Ok(out)
}

/// Moment generating function of the torus measure reduced to the constant
/// field, with `f` site-major.
pub fn reduced_mgf<Z: ZeroModeWeight>(
    spec: &ReducedIntegralSpec,
    weight: &Z,
    f: &[f64],
    decomp: &CovarianceDecomposition,
    form: MgfForm,
) -> Result<Estimate> {
    let n = spec.n;
    let volume = decomp.torus.volume();
    if f.len() != n * volume {
        return Err(Error::DimensionMismatch { expected: n * volume, found: f.len() });
    }
    if weight.components() != n || weight.volume() != volume {
        return Err(Error::DimensionMismatch { expected: n * volume, found: weight.components() * weight.volume() });
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("external field must be finite".into()));
    }
    let fft = TorusFft::new(decomp.torus);
    let multiplier = match form {
        MgfForm::Cov => {
            if decomp.t_n.is_none() {
                return Err(Error::Unsupported("the covariance form needs a massive operator; use the W form".into()));
            }
            decomp.assembled_multiplier()
        }
        MgfForm::W => decomp.w_multiplier(decomp.scales()),
    };
    let shift = apply_per_component(&fft, f, n, &multiplier)?;
    let quad: f64 = f.iter().zip(&shift).map(|(a, b)| a * b).sum();
    let total: Vec<f64> = (0..n).map(|c| (0..volume).map(|x| f[x * n + c]).sum()).collect();
    let field = |y: &[f64], with_shift: bool| -> Vec<f64> {
        (0..n * volume).map(|i| y[i % n] + if with_shift { shift[i] } else { 0.0 }).collect()
    };
    let ratio = integrate_ratio(
        spec,
        |y| {
            let linear = match form {
                MgfForm::Cov => 0.0,
                MgfForm::W => y.iter().zip(&total).map(|(a, b)| a * b).sum(),
            };
            weight.z(&field(y, true)) * linear.exp()
        },
        |y| weight.z(&field(y, false)),
    )?;
    let pre = (0.5 * quad).exp();
    Ok(Estimate { value: pre * ratio.value, error: pre * ratio.error })
}

/// `∫Z_{N,ox}(y1)…/∫Z_N(y1)…`, the reduced two-point function at sites `o`, `x`.
pub fn reduced_two_point_ratio<Z: ZeroModeWeight>(spec: &ReducedIntegralSpec, weight: &Z, o: usize, x: usize) -> Result<Estimate> {
    let n = spec.n;
    let volume = weight.volume();
    if o >= volume || x >= volume {
        return Err(Error::InvalidParameter(format!("sites {o}, {x} outside a torus of {volume} sites")));
    }
    let field = |y: &[f64]| -> Vec<f64> { (0..n * volume).map(|i| y[i % n]).collect() };
    integrate_ratio(spec, |y| weight.z_two_point(&field(y), o, x), |y| weight.z(&field(y)))
}

/// The plateau assembly `w_N(x) + (h′_N)² E[|Y|²]/n` of the two-point
/// function, with `h′_N = g_N^{−1/4} L^{−dN/4}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedTwoPoint {
    pub w_n: f64,
    pub h_prime: f64,
    pub y_second_moment: f64,
    pub value: f64,
}

pub fn reduced_two_point(
    potential: &EffectivePotentialZero,
    decomp: Option<&CovarianceDecomposition>,
    x: usize,
) -> Result<ReducedTwoPoint> {
    let decomp = decomp.ok_or_else(|| Error::InvalidParameter("the two-point assembly needs a covariance decomposition".into()))?;
    if potential.lambda_ox == 0.0 {
        return Err(Error::InvalidParameter("observable coefficients must be nonzero".into()));
    }
    let kernel = decomp.w_kernel(decomp.scales())?;
    let w_n = *kernel.get(x).ok_or_else(|| Error::InvalidParameter(format!("site {x} outside the torus")))?;
    let n = potential.n;
    let h_prime = potential.g_n.powf(-0.25) * (decomp.torus.volume() as f64).powf(-0.25);
    let y2 = YDistribution::new(n)?.moment(1, Direction::Radial)?;
    let value = w_n + h_prime * h_prime * y2 / n as f64;
    Ok(ReducedTwoPoint { w_n, h_prime, y_second_moment: y2, value })
}

/// Scalings of the constant field used in the limit analysis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YScaling {
    /// `z = t_N^{−1/2} |Λ|^{1/2} y`.
    Gaussian,
    /// `z = |Λ|^{1/4} g^{1/4} y` for a reference coupling `g`.
    Quartic { g_ref: f64 },
}

/// Outcome of [`y_change_of_variables`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeOfVariables {
    pub scale: f64,
    pub ratio_y: f64,
    pub ratio_z: f64,
    pub relative_difference: f64,
    /// `(z, log integrand(z) − log integrand(0))` on a grid along the first axis.
    pub profile: Vec<(f64, f64)>,
}

/// Re-evaluates the MGF ratio of the constant-field integral with external
/// total field `total` after the substitution `y = z/scale`, on the image of
/// the `y`-grid. The Jacobian `scale^{−n}` cancels between numerator and
/// denominator.
pub fn y_change_of_variables(
    spec: &ReducedIntegralSpec,
    potential: &EffectivePotentialZero,
    total: &[f64],
    scaling: YScaling,
) -> Result<ChangeOfVariables> {
    let n = spec.n;
    if total.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: total.len() });
    }
    let volume = spec.volume as f64;
    let scale = match scaling {
        YScaling::Gaussian => {
            let t = spec.t_n.ok_or_else(|| Error::Unsupported("Gaussian scaling needs t_N".into()))?;
            (volume / t).sqrt()
        }
        YScaling::Quartic { g_ref } => (volume * g_ref).powf(0.25),
    };
    let log_den = |y: &[f64]| -> f64 {
        let y2: f64 = y.iter().map(|v| v * v).sum();
        -potential.u_n - potential.constant_field(y2) + spec.log_gaussian(y2)
    };
    let log_num = |y: &[f64]| log_den(y) + y.iter().zip(total).map(|(a, b)| a * b).sum::<f64>();
    let radius = envelope_radius(n, &|y| log_num(y).exp()).max(envelope_radius(n, &|y| log_den(y).exp()));
    let nodes = spec.plan.nodes_per_axis;
    let in_y = |h: &(dyn Fn(&[f64]) -> f64 + Sync)| simpson_cube(n, radius, nodes, h);
    let ry = in_y(&|y| log_num(y).exp())?.0 / in_y(&|y| log_den(y).exp())?.0;
    let jac = scale.powi(-(n as i32));
    let back = |z: &[f64]| -> Vec<f64> { z.iter().map(|v| v / scale).collect() };
    let in_z = |h: &(dyn Fn(&[f64]) -> f64 + Sync)| simpson_cube(n, radius * scale, nodes, h);
    let rz = in_z(&|z| jac * log_num(&back(z)).exp())?.0 / in_z(&|z| jac * log_den(&back(z)).exp())?.0;
    let origin = log_den(&vec![0.0; n]);
    let profile = (0..=40)
        .map(|i| {
            let z = 4.0 * i as f64 / 40.0;
            let mut y = vec![0.0; n];
            y[0] = z / scale;
            (z, log_den(&y) - origin)
        })
        .collect();
    Ok(ChangeOfVariables { scale, ratio_y: ry, ratio_z: rz, relative_difference: ((ry - rz) / ry).abs(), profile })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frd::{decompose, Backend};
    use crate::lattice::OperatorSymbol;
    use rand::RngExt;

    fn tiny(a_mass: f64) -> CovarianceDecomposition {
        let op = OperatorSymbol::new(0.0, a_mass, 0.0).unwrap();
        decompose(&op, &TorusSpec::new(2, 2, 1).unwrap(), Backend::PolyFiniteRange).unwrap()
    }

    #[test]
    fn real_basis_is_orthonormal_and_diagonalises() {
        let torus = TorusSpec::new(1, 3, 1).unwrap();
        let mult = vec![2.0, 0.5, 0.5];
        let modes = GaussianModes::from_multiplier(&torus, &mult).unwrap();
        assert_eq!(modes.rank(), 3);
        for a in &modes.vectors {
            for b in &modes.vectors {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                assert!((dot - if std::ptr::eq(a, b) { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        let fft = TorusFft::new(torus);
        let kernel = fft.kernel_from_multiplier(&mult).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                let dense: f64 = modes.vectors.iter().zip(&modes.std).map(|(v, s)| s * s * v[x] * v[y]).sum();
                assert!((dense - kernel[torus.difference(x, y)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_field_gives_one() {
        let dec = tiny(0.3);
        let pot = EffectivePotentialZero::new(1, 4, 0.1, 0.5, 0.0).unwrap();
        let spec = ReducedIntegralSpec::from_decomposition(&dec, 1);
        for form in [MgfForm::Cov, MgfForm::W] {
            let v = reduced_mgf(&spec, &pot, &[0.0; 4], &dec, form).unwrap();
            assert_eq!(v.value, 1.0);
        }
    }

    #[test]
    fn tiny_lattice_mgf_identity() {
        let dec = tiny(0.3);
        let pot = LocalQuartic::new(0.1, 0.5).unwrap();
        let f = [0.3, -0.2, 0.45, 0.1];
        let lhs = lattice_mgf(&dec, 1, pot, &f, 28).unwrap();
        let weight = SmearedPotential::new(&dec, 1, pot, 28).unwrap();
        let spec = ReducedIntegralSpec::from_decomposition(&dec, 1);
        for form in [MgfForm::Cov, MgfForm::W] {
            let rhs = reduced_mgf(&spec, &weight, &f, &dec, form).unwrap().value;
            assert!(((lhs - rhs) / lhs).abs() < 1e-6, "{form:?}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn tiny_lattice_two_point_identity() {
        let dec = tiny(0.3);
        let pot = LocalQuartic::new(0.1, 0.5).unwrap();
        let weight = SmearedPotential::new(&dec, 1, pot, 28).unwrap();
        let spec = ReducedIntegralSpec::from_decomposition(&dec, 1);
        for x in [0, 1, 3] {
            let lhs = lattice_two_point(&dec, 1, pot, 0, x, 28).unwrap();
            let rhs = reduced_two_point_ratio(&spec, &weight, 0, x).unwrap().value;
            assert!(((lhs - rhs) / lhs).abs() < 1e-6, "x = {x}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn two_component_identity_on_two_sites() {
        let op = OperatorSymbol::new(0.0, 0.5, 0.0).unwrap();
        let dec = decompose(&op, &TorusSpec::new(1, 2, 1).unwrap(), Backend::PolyFiniteRange).unwrap();
        let pot = LocalQuartic::new(-0.2, 0.8).unwrap();
        let f = [0.2, -0.1, 0.05, 0.3];
        let lhs = lattice_mgf(&dec, 2, pot, &f, 24).unwrap();
        let weight = SmearedPotential::new(&dec, 2, pot, 24).unwrap();
        let spec = ReducedIntegralSpec::from_decomposition(&dec, 2);
        let rhs = reduced_mgf(&spec, &weight, &f, &dec, MgfForm::W).unwrap().value;
        assert!(((lhs - rhs) / lhs).abs() < 1e-6, "{lhs} vs {rhs}");
    }

    #[test]
    fn constant_weight_factor_cancels_and_forms_agree() {
        let op = OperatorSymbol::new(0.0, 0.1, 0.0).unwrap();
        let dec = decompose(&op, &TorusSpec::new(2, 2, 2).unwrap(), Backend::PolyFiniteRange).unwrap();
        let spec = ReducedIntegralSpec::from_decomposition(&dec, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f: Vec<f64> = (0..16).map(|_| rng.random_range(-0.3..0.3)).collect();
        let base = EffectivePotentialZero::new(1, 16, 0.05, 0.2, 0.0).unwrap();
        let shifted = EffectivePotentialZero { u_n: 7.5, ..base };
        let a = reduced_mgf(&spec, &base, &f, &dec, MgfForm::Cov).unwrap().value;
        let b = reduced_mgf(&spec, &shifted, &f, &dec, MgfForm::Cov).unwrap().value;
        assert!(((a - b) / a).abs() < 1e-13);
        let neg: Vec<f64> = f.iter().map(|v| -v).collect();
        let c = reduced_mgf(&spec, &base, &neg, &dec, MgfForm::Cov).unwrap().value;
        assert!(((a - c) / a).abs() < 1e-12);
    }

    #[test]
    fn large_coupling_matches_quartic_limit() {
        let op = OperatorSymbol::new(0.0, 0.0, 0.0).unwrap();
        let dec = decompose(&op, &TorusSpec::new(2, 2, 1).unwrap(), Backend::PolyFiniteRange).unwrap();
        let spec = ReducedIntegralSpec::from_decomposition(&dec, 1);
        let g = 1e6;
        let pot = EffectivePotentialZero::new(1, 4, 0.0, g, 0.0).unwrap();
        let s = 0.8;
        let f = vec![s * (4.0 * g).powf(0.25) / 4.0; 4];
        let v = reduced_mgf(&spec, &pot, &f, &dec, MgfForm::W).unwrap().value;
        let ng = YDistribution::new(1).unwrap().mgf(s).unwrap();
        assert!(((v - ng) / ng).abs() < 1e-6, "{v} vs {ng}");
    }

    #[test]
    fn plateau_assembly() {
        let op = OperatorSymbol::new(0.0, 0.0, 0.0).unwrap();
        let dec = decompose(&op, &TorusSpec::new(4, 2, 2).unwrap(), Backend::PolyFiniteRange).unwrap();
        let pot = EffectivePotentialZero::new(1, 256, 0.0, 0.01, 0.0).unwrap();
        let r = reduced_two_point(&pot, Some(&dec), 0).unwrap();
        let w0 = dec.w_kernel(2).unwrap()[0];
        let expected = w0 + (0.01_f64).powf(-0.5) / 16.0 * 0.675_978_240_067_284_7;
        assert!((r.value - expected).abs() < 1e-8 * expected);
        let heavy = EffectivePotentialZero::new(1, 256, 0.0, 1e12, 0.0).unwrap();
        assert!((reduced_two_point(&heavy, Some(&dec), 3).unwrap().value - dec.w_kernel(2).unwrap()[3]).abs() < 1e-6);
        assert!(reduced_two_point(&pot, None, 0).is_err());
    }

    #[test]
    fn change_of_variables_is_exact() {
        let dec = tiny(0.3);
        let spec = ReducedIntegralSpec::from_decomposition(&dec, 1);
        let pot = EffectivePotentialZero::new(1, 4, 0.0, 0.7, 1.0).unwrap();
        for scaling in [YScaling::Gaussian, YScaling::Quartic { g_ref: 0.35 }] {
            let c = y_change_of_variables(&spec, &pot, &[0.4], scaling).unwrap();
            assert!(c.relative_difference < 1e-12, "{scaling:?}: {c:?}");
        }
        let massless = ReducedIntegralSpec { t_n: None, ..spec };
        let c = y_change_of_variables(&massless, &pot, &[0.4], YScaling::Quartic { g_ref: 0.35 }).unwrap();
        assert!(c.ratio_y.is_finite() && c.relative_difference < 1e-12);
        for (z, log) in c.profile {
            assert!((log + z.powi(4) / 4.0 * 0.7 / 0.35).abs() < 1e-10);
        }
        assert!(y_change_of_variables(&massless, &pot, &[0.4], YScaling::Gaussian).is_err());
    }

    #[test]
    fn importance_sampling_for_many_components() {
        let op = OperatorSymbol::new(0.0, 0.0, 0.0).unwrap();
        let dec = decompose(&op, &TorusSpec::new(1, 2, 1).unwrap(), Backend::PolyFiniteRange).unwrap();
        let spec = ReducedIntegralSpec::from_decomposition(&dec, 4);
        let pot = EffectivePotentialZero::new(4, 2, 0.0, 1.0, 0.0).unwrap();
        let r = reduced_two_point_ratio(&spec, &pot, 0, 1).unwrap();
        let exact = YDistribution::new(4).unwrap().moment(1, Direction::Radial).unwrap() / 4.0 / 2.0_f64.sqrt();
        assert!(r.error > 0.0 && (r.value - exact).abs() < 4.0 * r.error, "{r:?} vs {exact}");
    }
}
