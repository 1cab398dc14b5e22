//! Monte Carlo sampling of `Z^{−1} e^{−H(φ)} dφ` on small tori, with
//!
//! ```text
//! H(φ) = ½(φ, (−Δ)^{1−η/2} φ) + Σ_x (ν|φ_x|²/2 + g|φ_x|⁴/4).
//! ```
//!
//! Two samplers are provided. Fourier-accelerated HMC uses the mass matrix
//! `M(p) = λ(p)^{1−η/2} + m_0`, so every free mode oscillates at a comparable
//! frequency; the kinetic force is applied in momentum space. Single-site
//! Metropolis keeps `(−Δ)^{1−η/2}φ` up to date through the sparse real-space
//! kernel and is meant for tiny lattices.
//!
//! Each chain owns a ChaCha stream selected by its index, so a seed fixes
//! every observable bit for bit.

use rustfft::num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{class_index_map, symbol_on_grid, Field, OperatorSymbol, TorusFft, TorusSpec};

/// Largest lattice accepted without the override flag in `d = 4`.
pub const BUDGET_D4: usize = 16 * 16 * 16 * 16;
/// Largest lattice accepted without the override flag in `d = 5`.
pub const BUDGET_D5: usize = 8 * 8 * 8 * 8 * 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Metropolis,
    Hmc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HmcParams {
    pub trajectory_length: f64,
    pub leapfrog_steps: usize,
    /// Mass `m_0` added to the symbol in the kinetic mass matrix; chosen from
    /// `ν`, `g` and the volume when absent.
    #[serde(default)]
    pub fa_mass: Option<f64>,
}

impl Default for HmcParams {
    fn default() -> Self {
        Self { trajectory_length: std::f64::consts::FRAC_PI_2, leapfrog_steps: 24, fa_mass: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MCConfig {
    pub d: usize,
    pub side: usize,
    pub n: usize,
    pub g: f64,
    pub nu: f64,
    pub eta: f64,
    pub algorithm: Algorithm,
    /// Total updates per chain, thermalization included.
    pub sweeps: usize,
    pub thermalization: usize,
    pub stride: usize,
    pub seed: u64,
    #[serde(default = "one")]
    pub chains: usize,
    #[serde(default)]
    pub hmc: HmcParams,
    #[serde(default = "default_step")]
    pub metropolis_step: f64,
    /// Integer mode vectors `m`, i.e. `k = 2π m`, for the `χ^{(k)}` projections.
    #[serde(default)]
    pub chi_modes: Vec<Vec<u32>>,
    /// Record the class-averaged power spectrum `|φ̂(p)|²/|Λ|`.
    #[serde(default)]
    pub record_spectrum: bool,
    #[serde(default)]
    pub override_budget: bool,
}

fn one() -> usize {
    1
}

fn default_step() -> f64 {
    1.0
}

impl MCConfig {
    pub fn new(d: usize, side: usize, n: usize, g: f64, nu: f64, eta: f64) -> Self {
        Self {
            d,
            side,
            n,
            g,
            nu,
            eta,
            algorithm: Algorithm::Hmc,
            sweeps: 2000,
            thermalization: 200,
            stride: 1,
            seed: 1,
            chains: 1,
            hmc: HmcParams::default(),
            metropolis_step: 1.0,
            chi_modes: vec![vec![0; d]],
            record_spectrum: false,
            override_budget: false,
        }
    }

    /// The torus `Λ_N` of side `L^N`.
    pub fn on_torus(torus: &TorusSpec, n: usize, g: f64, nu: f64, eta: f64) -> Self {
        Self::new(torus.d, torus.side(), n, g, nu, eta)
    }

    pub fn volume(&self) -> usize {
        self.side.pow(self.d as u32)
    }

    /// Geometry as a one-level torus of the same side, for Fourier work.
    pub fn geometry(&self) -> TorusSpec {
        TorusSpec { d: self.d, l: self.side, n: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.side == 0 || self.n == 0 || self.chains == 0 || self.stride == 0 {
            return Err(Error::InvalidParameter("d, side, n, chains and stride must be positive".into()));
        }
        if !(self.g >= 0.0) || !self.nu.is_finite() || !(0.0..2.0).contains(&self.eta) {
            return Err(Error::InvalidParameter(format!("need g ≥ 0, finite ν and η ∈ [0, 2); got g = {}, ν = {}, η = {}", self.g, self.nu, self.eta)));
        }
        if self.g == 0.0 && !(self.nu > 0.0) {
            return Err(Error::InvalidParameter("the free field needs ν > 0".into()));
        }
        if self.sweeps <= self.thermalization {
            return Err(Error::InvalidParameter(format!("sweeps = {} must exceed thermalization = {}", self.sweeps, self.thermalization)));
        }
        if self.algorithm == Algorithm::Hmc && (self.hmc.leapfrog_steps == 0 || !(self.hmc.trajectory_length > 0.0)) {
            return Err(Error::InvalidParameter("HMC needs positive trajectory length and step count".into()));
        }
        if let Some(m) = self.hmc.fa_mass {
            if !(m > 0.0) {
                return Err(Error::InvalidParameter(format!("Fourier-acceleration mass {m} must be positive")));
            }
        }
        for m in &self.chi_modes {
            mode_function(self.d, self.side, m)?;
        }
        let sites = self.volume();
        let limit = match self.d {
            5 => BUDGET_D5,
            _ => BUDGET_D4,
        };
        if sites > limit && !self.override_budget {
            return Err(Error::Budget { sites, limit });
        }
        Ok(())
    }

    fn fa_mass(&self) -> f64 {
        self.hmc.fa_mass.unwrap_or_else(|| {
            let zero_mode = (self.g / self.volume() as f64).sqrt();
            (self.nu.max(0.0) + zero_mode).max(1e-6)
        })
    }
}

/// `E^{(k)}(x) = Π_i e_{m_i}(x_i)` with `e_0 = 1` and
/// `e_m(x) = √2 sin(2π m x/side)`, the lattice form of the sine modes with
/// `k = 2π m`; `m_i` must lie in `[0, side/2)`.
pub fn mode_function(d: usize, side: usize, m: &[u32]) -> Result<Vec<f64>> {
    if m.len() != d || m.iter().any(|&v| 2 * v as usize >= side && v != 0) {
        return Err(Error::OffGrid(format!("{m:?} on a torus of side {side}")));
    }
    let torus = TorusSpec { d, l: side, n: 1 };
    Ok((0..torus.volume())
        .map(|x| {
            torus
                .residues(x)
                .iter()
                .zip(m)
                .map(|(&r, &k)| {
                    if k == 0 {
                        1.0
                    } else {
                        std::f64::consts::SQRT_2 * (std::f64::consts::TAU * (k as usize * r) as f64 / side as f64).sin()
                    }
                })
                .product()
        })
        .collect())
}

/// Converts a macroscopic mode `k ∈ (2πZ_{≥0})^d` to its integer vector.
pub fn mode_from_k(k: &[f64], side: usize) -> Result<Vec<u32>> {
    k.iter()
        .map(|&v| {
            let m = v / std::f64::consts::TAU;
            let r = m.round();
            if (m - r).abs() > 1e-9 || r < 0.0 || (r > 0.0 && 2.0 * r >= side as f64) {
                Err(Error::OffGrid(format!("{k:?} on a torus of side {side}")))
            } else {
                Ok(r as u32)
            }
        })
        .collect()
}

/// Spectral and local data shared by both samplers.
struct Action {
    n: usize,
    volume: usize,
    nu: f64,
    g: f64,
    fft: TorusFft,
    symbol: Vec<f64>,
}

impl Action {
    fn new(config: &MCConfig) -> Result<Self> {
        let torus = config.geometry();
        let op = OperatorSymbol::fractional(config.eta)?;
        Ok(Self {
            n: config.n,
            volume: config.volume(),
            nu: config.nu,
            g: config.g,
            fft: TorusFft::new(torus),
            symbol: symbol_on_grid(&op, &torus),
        })
    }

    fn site_potential(&self, s: f64) -> f64 {
        0.5 * self.nu * s + 0.25 * self.g * s * s
    }

    fn potential(&self, phi: &[f64]) -> f64 {
        phi.chunks_exact(self.n).map(|c| self.site_potential(c.iter().map(|v| v * v).sum())).sum()
    }

    /// `(−Δ)^{1−η/2}φ`, component by component.
    fn kinetic_apply(&self, phi: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; phi.len()];
        for c in 0..self.n {
            let comp: Vec<f64> = phi.iter().skip(c).step_by(self.n).copied().collect();
            let k = self.fft.apply_multiplier(&comp, &self.symbol)?;
            for (x, v) in k.into_iter().enumerate() {
                out[x * self.n + c] = v;
            }
        }
        Ok(out)
    }

    fn energy(&self, phi: &[f64]) -> Result<f64> {
        let k = self.kinetic_apply(phi)?;
        Ok(0.5 * phi.iter().zip(&k).map(|(a, b)| a * b).sum::<f64>() + self.potential(phi))
    }

    fn force_into(&self, phi: &[f64], kphi: &[f64], out: &mut [f64]) {
        for ((o, site), ksite) in out.chunks_exact_mut(self.n).zip(phi.chunks_exact(self.n)).zip(kphi.chunks_exact(self.n)) {
            let s: f64 = site.iter().map(|v| v * v).sum();
            let factor = self.nu + self.g * s;
            for ((f, v), k) in o.iter_mut().zip(site).zip(ksite) {
                *f = k + factor * v;
            }
        }
    }
}

/// `H(φ)` with the kinetic term evaluated spectrally.
pub fn hamiltonian(config: &MCConfig, field: &Field) -> Result<f64> {
    if field.n != config.n || field.volume() != config.volume() {
        return Err(Error::DimensionMismatch { expected: config.n * config.volume(), found: field.values.len() });
    }
    Action::new(config)?.energy(&field.values)
}

/// Fourier-accelerated leapfrog integrator.
struct Hmc<'a> {
    action: &'a Action,
    mass: Vec<f64>,
    steps: usize,
    length: f64,
}

/// Scratch fields for one component-major leapfrog trajectory.
struct Trajectory {
    phi: Vec<f64>,
    kphi: Vec<f64>,
    pi: Vec<f64>,
    force: Vec<f64>,
    phi_hat: Vec<Vec<Complex64>>,
    buf: Vec<Complex64>,
}

impl<'a> Hmc<'a> {
    fn new(action: &'a Action, config: &MCConfig) -> Self {
        let m0 = config.fa_mass();
        Self {
            action,
            mass: action.symbol.iter().map(|s| s + m0).collect(),
            steps: config.hmc.leapfrog_steps,
            length: config.hmc.trajectory_length,
        }
    }

    fn component(values: &[f64], n: usize, c: usize, out: &mut [Complex64]) {
        for (o, v) in out.iter_mut().zip(values.iter().skip(c).step_by(n)) {
            *o = Complex64::new(*v, 0.0);
        }
    }

    /// Refreshes `φ̂` and `Kφ` from the real-space field.
    fn prepare(&self, t: &mut Trajectory) -> Result<()> {
        let n = self.action.n;
        for c in 0..n {
            Self::component(&t.phi, n, c, &mut t.buf);
            self.action.fft.forward_in_place(&mut t.buf)?;
            t.phi_hat[c].copy_from_slice(&t.buf);
        }
        self.sync_real(t)
    }

    /// `φ = Re F^{−1}[φ̂ + i λφ̂]`, `Kφ = Im F^{−1}[φ̂ + i λφ̂]`.
    fn sync_real(&self, t: &mut Trajectory) -> Result<()> {
        let n = self.action.n;
        for c in 0..n {
            for ((b, h), s) in t.buf.iter_mut().zip(&t.phi_hat[c]).zip(&self.action.symbol) {
                *b = h + Complex64::new(0.0, 1.0) * h * s;
            }
            self.action.fft.inverse_in_place(&mut t.buf)?;
            for (x, v) in t.buf.iter().enumerate() {
                t.phi[x * n + c] = v.re;
                t.kphi[x * n + c] = v.im;
            }
        }
        Ok(())
    }

    fn kinetic(&self, t: &mut Trajectory) -> Result<f64> {
        let n = self.action.n;
        let mut total = 0.0;
        for c in 0..n {
            Self::component(&t.pi, n, c, &mut t.buf);
            self.action.fft.forward_in_place(&mut t.buf)?;
            total += t.buf.iter().zip(&self.mass).map(|(v, m)| v.norm_sqr() / m).sum::<f64>();
        }
        Ok(0.5 * total / self.action.volume as f64)
    }

    fn draw_momenta(&self, t: &mut Trajectory, rng: &mut ChaCha8Rng) -> Result<()> {
        let n = self.action.n;
        for c in 0..n {
            for b in t.buf.iter_mut() {
                *b = Complex64::new(rng.sample(StandardNormal), 0.0);
            }
            self.action.fft.forward_in_place(&mut t.buf)?;
            for (b, m) in t.buf.iter_mut().zip(&self.mass) {
                *b *= m.sqrt();
            }
            self.action.fft.inverse_in_place(&mut t.buf)?;
            for (x, v) in t.buf.iter().enumerate() {
                t.pi[x * n + c] = v.re;
            }
        }
        Ok(())
    }

    fn action_value(&self, t: &Trajectory) -> f64 {
        0.5 * t.phi.iter().zip(&t.kphi).map(|(a, b)| a * b).sum::<f64>() + self.action.potential(&t.phi)
    }

    /// Integrates `steps` leapfrog steps of size `eps` from the current
    /// `(φ, π)` and returns `H_end − H_start`.
    fn integrate(&self, t: &mut Trajectory, eps: f64, steps: usize) -> Result<f64> {
        let n = self.action.n;
        let start = self.action_value(t) + self.kinetic(t)?;
        self.action.force_into(&t.phi, &t.kphi, &mut t.force);
        for (p, f) in t.pi.iter_mut().zip(&t.force) {
            *p -= 0.5 * eps * f;
        }
        for s in 0..steps {
            for c in 0..n {
                Self::component(&t.pi, n, c, &mut t.buf);
                self.action.fft.forward_in_place(&mut t.buf)?;
                for ((h, b), m) in t.phi_hat[c].iter_mut().zip(&t.buf).zip(&self.mass) {
                    *h += b * (eps / m);
                }
            }
            self.sync_real(t)?;
            self.action.force_into(&t.phi, &t.kphi, &mut t.force);
            let w = if s + 1 == steps { 0.5 * eps } else { eps };
            for (p, f) in t.pi.iter_mut().zip(&t.force) {
                *p -= w * f;
            }
        }
        Ok(self.action_value(t) + self.kinetic(t)? - start)
    }

    fn scratch(&self, phi: &[f64]) -> Trajectory {
        let len = phi.len();
        let volume = self.action.volume;
        Trajectory {
            phi: phi.to_vec(),
            kphi: vec![0.0; len],
            pi: vec![0.0; len],
            force: vec![0.0; len],
            phi_hat: vec![vec![Complex64::new(0.0, 0.0); volume]; self.action.n],
            buf: vec![Complex64::new(0.0, 0.0); volume],
        }
    }

    /// One Metropolis-corrected trajectory; returns whether it was accepted
    /// and `ΔH`.
    fn update(&self, phi: &mut Vec<f64>, rng: &mut ChaCha8Rng) -> Result<(bool, f64)> {
        let mut t = self.scratch(phi);
        self.prepare(&mut t)?;
        self.draw_momenta(&mut t, rng)?;
        let jitter: f64 = rng.random();
        let eps = self.length / self.steps as f64 * (0.9 + 0.2 * jitter);
        let dh = self.integrate(&mut t, eps, self.steps)?;
        let u: f64 = rng.random();
        let accept = dh.is_finite() && u < (-dh).exp();
        if accept {
            *phi = t.phi;
        }
        Ok((accept, dh))
    }
}

/// `ΔH` of a single leapfrog trajectory of fixed length from the given field
/// and momenta, using `steps` steps; used to check the integrator order.
pub fn leapfrog_energy_error(config: &MCConfig, field: &Field, momenta: &[f64], steps: usize) -> Result<f64> {
    config.validate()?;
    let action = Action::new(config)?;
    let hmc = Hmc::new(&action, config);
    if momenta.len() != field.values.len() || field.values.len() != config.n * config.volume() {
        return Err(Error::DimensionMismatch { expected: config.n * config.volume(), found: momenta.len() });
    }
    let mut t = hmc.scratch(&field.values);
    hmc.prepare(&mut t)?;
    t.pi.copy_from_slice(momenta);
    hmc.integrate(&mut t, config.hmc.trajectory_length / steps as f64, steps)
}

/// Single-site Metropolis with `(−Δ)^{1−η/2}φ` maintained incrementally.
struct Metropolis<'a> {
    action: &'a Action,
    /// `(offset index, K(offset))` for the nonzero entries of the kernel.
    kernel: Vec<(usize, f64)>,
    k0: f64,
    torus: TorusSpec,
    step: f64,
}

impl<'a> Metropolis<'a> {
    fn new(action: &'a Action, config: &MCConfig) -> Result<Self> {
        let values = action.fft.kernel_from_multiplier(&action.symbol)?;
        let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
        let kernel = values.iter().enumerate().filter(|(_, v)| v.abs() > 1e-14 * scale).map(|(i, &v)| (i, v)).collect();
        Ok(Self { action, kernel, k0: values[0], torus: config.geometry(), step: config.metropolis_step })
    }

    fn sweep(&self, phi: &mut [f64], kphi: &mut [f64], rng: &mut ChaCha8Rng) -> usize {
        let n = self.action.n;
        let mut accepted = 0;
        let mut delta = vec![0.0; n];
        for x in 0..self.action.volume {
            for d in delta.iter_mut() {
                let u: f64 = rng.random();
                *d = self.step * (2.0 * u - 1.0);
            }
            let site = &phi[x * n..(x + 1) * n];
            let old: f64 = site.iter().map(|v| v * v).sum();
            let new: f64 = site.iter().zip(&delta).map(|(a, b)| (a + b) * (a + b)).sum();
            let dk: f64 = delta.iter().zip(&kphi[x * n..(x + 1) * n]).map(|(a, b)| a * b).sum::<f64>()
                + 0.5 * self.k0 * delta.iter().map(|v| v * v).sum::<f64>();
            let ds = dk + self.action.site_potential(new) - self.action.site_potential(old);
            let u: f64 = rng.random();
            if u < (-ds).exp() {
                accepted += 1;
                for (v, d) in phi[x * n..(x + 1) * n].iter_mut().zip(&delta) {
                    *v += d;
                }
                for &(offset, kv) in &self.kernel {
                    let y = self.torus_shift(x, offset);
                    for (c, d) in delta.iter().enumerate() {
                        kphi[y * n + c] += kv * d;
                    }
                }
            }
        }
        accepted
    }

    fn torus_shift(&self, x: usize, offset: usize) -> usize {
        let side = self.torus.l;
        let mut a = x;
        let mut b = offset;
        let mut out = 0;
        let mut stride = 1;
        for _ in 0..self.torus.d {
            out += ((a % side + b % side) % side) * stride;
            a /= side;
            b /= side;
            stride *= side;
        }
        out
    }
}

/// Time series of one run, concatenated over chains.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Observables {
    pub config: MCConfig,
    pub volume: usize,
    pub measurements: usize,
    pub acceptance: f64,
    /// Mean `|ΔH|` per HMC trajectory (zero for Metropolis).
    pub mean_abs_dh: f64,
    /// `Φ_N = |Λ|^{−1} Σ_x φ_x`, `n` entries per measurement.
    pub phi_mean: Vec<f64>,
    /// `|Λ| Σ_c (φ^{(c)}, E^{(k)})²` per configured mode.
    pub chi_series: Vec<Vec<f64>>,
    /// Displacements `r = 0..=side/2` along the axes.
    pub distances: Vec<usize>,
    /// `G(r)` averaged over translations and axes, per distance.
    pub two_point: Vec<Vec<f64>>,
    pub spectrum: Option<Spectrum>,
}

/// Class-averaged power spectrum; classes identify momenta related by
/// lattice symmetries.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Spectrum {
    /// Representative momentum index of each class.
    pub representative: Vec<usize>,
    pub multiplicity: Vec<usize>,
    pub series: Vec<Vec<f64>>,
}

struct Measurer {
    n: usize,
    volume: usize,
    side: usize,
    d: usize,
    modes: Vec<Vec<f64>>,
    fft: TorusFft,
    classes: Option<(Vec<usize>, usize)>,
}

#[derive(Default)]
struct ChainRecord {
    phi_mean: Vec<f64>,
    chi: Vec<Vec<f64>>,
    two_point: Vec<Vec<f64>>,
    spectrum: Vec<Vec<f64>>,
    accepted: usize,
    proposals: usize,
    abs_dh: f64,
}

impl Measurer {
    fn new(config: &MCConfig) -> Result<Self> {
        let modes = config.chi_modes.iter().map(|m| mode_function(config.d, config.side, m)).collect::<Result<_>>()?;
        let torus = config.geometry();
        Ok(Self {
            n: config.n,
            volume: config.volume(),
            side: config.side,
            d: config.d,
            modes,
            fft: TorusFft::new(torus),
            classes: config.record_spectrum.then(|| class_index_map(&torus)),
        })
    }

    fn record(&self, phi: &[f64], rec: &mut ChainRecord) -> Result<()> {
        let n = self.n;
        let vol = self.volume as f64;
        for c in 0..n {
            rec.phi_mean.push(phi.iter().skip(c).step_by(n).sum::<f64>() / vol);
        }
        for (series, e) in rec.chi.iter_mut().zip(&self.modes) {
            let mut total = 0.0;
            for c in 0..n {
                let proj: f64 = phi.iter().skip(c).step_by(n).zip(e).map(|(a, b)| a * b).sum::<f64>() / vol;
                total += proj * proj;
            }
            series.push(vol * total);
        }
        let mut power = vec![0.0; self.volume];
        for c in 0..n {
            let comp: Vec<f64> = phi.iter().skip(c).step_by(n).copied().collect();
            for (p, v) in power.iter_mut().zip(self.fft.forward_real(&comp)?) {
                *p += v.norm_sqr();
            }
        }
        if let Some((map, count)) = &self.classes {
            let mut sums = vec![0.0; *count];
            let mut counts = vec![0usize; *count];
            for (p, &k) in map.iter().enumerate() {
                sums[k] += power[p] / vol;
                counts[k] += 1;
            }
            for (k, series) in rec.spectrum.iter_mut().enumerate() {
                series.push(sums[k] / counts[k] as f64);
            }
        }
        let corr = self.fft.kernel_from_multiplier(&power)?;
        let mut stride = 1;
        let mut axis_strides = Vec::with_capacity(self.d);
        for _ in 0..self.d {
            axis_strides.push(stride);
            stride *= self.side;
        }
        for (r, series) in rec.two_point.iter_mut().enumerate() {
            let g: f64 = axis_strides.iter().map(|s| corr[r * s]).sum::<f64>() / (self.d as f64 * vol);
            series.push(g);
        }
        Ok(())
    }
}

fn chain_seed(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

/// Draws the initial field from the Gaussian measure with covariance
/// `M^{−1}`, the free measure of the Fourier-acceleration mass matrix.
fn gaussian_start(config: &MCConfig, action: &Action, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let n = config.n;
    let m0 = config.fa_mass();
    let mut phi = vec![0.0; n * config.volume()];
    let mut buf: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); config.volume()];
    for c in 0..n {
        for b in buf.iter_mut() {
            *b = Complex64::new(rng.sample(StandardNormal), 0.0);
        }
        action.fft.forward_in_place(&mut buf)?;
        for (b, s) in buf.iter_mut().zip(&action.symbol) {
            *b /= (s + m0).sqrt();
        }
        action.fft.inverse_in_place(&mut buf)?;
        for (x, v) in buf.iter().enumerate() {
            phi[x * n + c] = v.re;
        }
    }
    Ok(phi)
}

fn run_chain(config: &MCConfig, chain: usize, action: &Action, measurer: &Measurer) -> Result<ChainRecord> {
    let mut rng = chain_seed(config.seed, chain);
    let mut phi = gaussian_start(config, action, &mut rng)?;
    let mut rec = ChainRecord {
        chi: vec![Vec::new(); measurer.modes.len()],
        two_point: vec![Vec::new(); config.side / 2 + 1],
        spectrum: vec![Vec::new(); measurer.classes.as_ref().map_or(0, |c| c.1)],
        ..Default::default()
    };
    match config.algorithm {
        Algorithm::Hmc => {
            let hmc = Hmc::new(action, config);
            for sweep in 0..config.sweeps {
                let (accepted, dh) = hmc.update(&mut phi, &mut rng)?;
                rec.accepted += accepted as usize;
                rec.proposals += 1;
                rec.abs_dh += dh.abs();
                if sweep >= config.thermalization && (sweep - config.thermalization) % config.stride == 0 {
                    measurer.record(&phi, &mut rec)?;
                }
            }
        }
        Algorithm::Metropolis => {
            let metro = Metropolis::new(action, config)?;
            let mut kphi = action.kinetic_apply(&phi)?;
            for sweep in 0..config.sweeps {
                rec.accepted += metro.sweep(&mut phi, &mut kphi, &mut rng);
                rec.proposals += config.volume();
                if sweep >= config.thermalization && (sweep - config.thermalization) % config.stride == 0 {
                    measurer.record(&phi, &mut rec)?;
                }
            }
        }
    }
    Ok(rec)
}

/// Runs all chains of `config` and concatenates their series.
pub fn run(config: &MCConfig) -> Result<Observables> {
    config.validate()?;
    let action = Action::new(config)?;
    let measurer = Measurer::new(config)?;
    let records: Vec<ChainRecord> =
        (0..config.chains).into_par_iter().map(|c| run_chain(config, c, &action, &measurer)).collect::<Result<_>>()?;
    let proposals: usize = records.iter().map(|r| r.proposals).sum();
    let accepted: usize = records.iter().map(|r| r.accepted).sum();
    let acceptance = accepted as f64 / proposals as f64;
    if acceptance < 0.01 {
        let hint = match config.algorithm {
            Algorithm::Hmc => format!("increase leapfrog_steps (now {}) or shorten trajectory_length", config.hmc.leapfrog_steps),
            Algorithm::Metropolis => format!("decrease metropolis_step (now {})", config.metropolis_step),
        };
        return Err(Error::StepSize { rate: acceptance, hint });
    }
    let mut obs = Observables {
        config: config.clone(),
        volume: config.volume(),
        measurements: 0,
        acceptance,
        mean_abs_dh: match config.algorithm {
            Algorithm::Hmc => records.iter().map(|r| r.abs_dh).sum::<f64>() / proposals as f64,
            Algorithm::Metropolis => 0.0,
        },
        phi_mean: Vec::new(),
        chi_series: vec![Vec::new(); config.chi_modes.len()],
        distances: (0..=config.side / 2).collect(),
        two_point: vec![Vec::new(); config.side / 2 + 1],
        spectrum: None,
    };
    let mut spectrum: Vec<Vec<f64>> = Vec::new();
    for rec in records {
        obs.phi_mean.extend(rec.phi_mean);
        for (a, b) in obs.chi_series.iter_mut().zip(rec.chi) {
            a.extend(b);
        }
        for (a, b) in obs.two_point.iter_mut().zip(rec.two_point) {
            a.extend(b);
        }
        if spectrum.is_empty() {
            spectrum = rec.spectrum;
        } else {
            for (a, b) in spectrum.iter_mut().zip(rec.spectrum) {
                a.extend(b);
            }
        }
    }
    obs.measurements = obs.phi_mean.len() / config.n;
    if let Some((map, count)) = measurer.classes {
        let mut representative = vec![usize::MAX; count];
        let mut multiplicity = vec![0; count];
        for (p, &k) in map.iter().enumerate() {
            if representative[k] == usize::MAX {
                representative[k] = p;
            }
            multiplicity[k] += 1;
        }
        obs.spectrum = Some(Spectrum { representative, multiplicity, series: spectrum });
    }
    Ok(obs)
}

/// Mean of a series with its jackknife error and autocorrelation data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub error: f64,
    pub tau_int: f64,
    pub effective_samples: f64,
}

/// Integrated autocorrelation time `½ + Σ_{t≤W} ρ(t)` with the self-consistent
/// window `W ≥ 6τ(W)`.
pub fn integrated_autocorrelation(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return 0.5;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let var = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if var <= 0.0 {
        return 0.5;
    }
    let mut tau = 0.5;
    for t in 1..n / 2 {
        let c: f64 = series[..n - t].iter().zip(&series[t..]).map(|(a, b)| (a - mean) * (b - mean)).sum::<f64>() / (n - t) as f64;
        tau += c / var;
        if t as f64 >= 6.0 * tau {
            break;
        }
    }
    tau.max(0.5)
}

/// Blocked jackknife of `f` applied to the means of several equally long
/// series. Returns the full-sample value and its error.
pub fn jackknife<F>(series: &[&[f64]], blocks: usize, f: F) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    let len = series.first().map_or(0, |s| s.len());
    if len < 2 || series.iter().any(|s| s.len() != len) {
        return Err(Error::InvalidParameter("jackknife needs equally long series of at least two entries".into()));
    }
    let blocks = blocks.clamp(2, len);
    let size = len / blocks;
    let used = size * blocks;
    let totals: Vec<f64> = series.iter().map(|s| s[..used].iter().sum()).collect();
    let full: Vec<f64> = totals.iter().map(|t| t / used as f64).collect();
    let value = f(&full);
    let mut estimates = Vec::with_capacity(blocks);
    let mut means = vec![0.0; series.len()];
    for b in 0..blocks {
        for (m, (s, t)) in means.iter_mut().zip(series.iter().zip(&totals)) {
            let block: f64 = s[b * size..(b + 1) * size].iter().sum();
            *m = (t - block) / (used - size) as f64;
        }
        estimates.push(f(&means));
    }
    let mean = estimates.iter().sum::<f64>() / blocks as f64;
    let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() * (blocks - 1) as f64 / blocks as f64;
    Ok((value, var.sqrt()))
}

const JACKKNIFE_BLOCKS: usize = 50;

/// Mean, jackknife error and autocorrelation of a single series.
pub fn estimate(series: &[f64]) -> Result<Estimate> {
    let (mean, error) = jackknife(&[series], JACKKNIFE_BLOCKS, |m| m[0])?;
    let tau = integrated_autocorrelation(series);
    Ok(Estimate { mean, error, tau_int: tau, effective_samples: series.len() as f64 / (2.0 * tau) })
}

impl Observables {
    /// Per-measurement `|Φ_N|²`.
    pub fn phi_squared(&self) -> Vec<f64> {
        self.phi_mean.chunks_exact(self.config.n).map(|c| c.iter().map(|v| v * v).sum()).collect()
    }

    /// `χ^{(0)} = |Λ| ⟨|Φ_N|²⟩`.
    pub fn chi_zero(&self) -> Result<Estimate> {
        let v = self.volume as f64;
        let s: Vec<f64> = self.phi_squared().into_iter().map(|m| v * m).collect();
        estimate(&s)
    }

    /// Largest relative difference between `|Λ||Φ_N|²` and the recorded
    /// zero-mode projection, sample by sample.
    pub fn chi_zero_consistency(&self) -> Option<f64> {
        let idx = self.config.chi_modes.iter().position(|m| m.iter().all(|&v| v == 0))?;
        let v = self.volume as f64;
        Some(
            self.phi_squared()
                .iter()
                .zip(&self.chi_series[idx])
                .map(|(a, b)| ((v * a - b) / b.abs().max(1e-300)).abs())
                .fold(0.0, f64::max),
        )
    }

    /// Component Binder ratio `E[Σ_c Φ_c⁴]/n / (E[|Φ|²]/n)²`.
    pub fn binder(&self) -> Result<Estimate> {
        let n = self.config.n;
        let m2 = self.phi_squared();
        let m4: Vec<f64> = self.phi_mean.chunks_exact(n).map(|c| c.iter().map(|v| v.powi(4)).sum()).collect();
        let nf = n as f64;
        let (mean, error) = jackknife(&[&m2, &m4], JACKKNIFE_BLOCKS, |m| (m[1] / nf) / (m[0] / nf).powi(2))?;
        let tau = integrated_autocorrelation(&m2);
        Ok(Estimate { mean, error, tau_int: tau, effective_samples: m2.len() as f64 / (2.0 * tau) })
    }

    pub fn two_point_estimates(&self) -> Result<Vec<(usize, Estimate)>> {
        self.distances.iter().zip(&self.two_point).map(|(&r, s)| Ok((r, estimate(s)?))).collect()
    }
}

/// `χ^{(k)}` for a macroscopic mode `k ∈ (2πZ_{≥0})^d` recorded by the run.
pub fn measure_chi_k(obs: &Observables, k: &[f64]) -> Result<Estimate> {
    let m = mode_from_k(k, obs.config.side)?;
    if m.len() != obs.config.d {
        return Err(Error::OffGrid(format!("{k:?} in d = {}", obs.config.d)));
    }
    let idx = obs
        .config
        .chi_modes
        .iter()
        .position(|v| *v == m)
        .ok_or_else(|| Error::InvalidParameter(format!("mode {m:?} was not recorded; add it to chi_modes")))?;
    estimate(&obs.chi_series[idx])
}

/// Histogram of the rescaled zero mode `b_N^{−1}Φ_N`, all components pooled.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZeroModeHistogram {
    pub scale: f64,
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
    pub binder: Estimate,
    pub effective_samples: f64,
    /// Fewer than 100 effective samples.
    pub insufficient: bool,
}

pub fn zero_mode_histogram(obs: &Observables, b_n: f64, bins: usize) -> Result<ZeroModeHistogram> {
    if !(b_n > 0.0) || bins == 0 {
        return Err(Error::InvalidParameter("need b_N > 0 and at least one bin".into()));
    }
    let values: Vec<f64> = obs.phi_mean.iter().map(|v| v / b_n).collect();
    let reach = values.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-12) * 1.0001;
    let width = 2.0 * reach / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in &values {
        let i = (((v + reach) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    let total = values.len() as f64;
    let binder = obs.binder()?;
    Ok(ZeroModeHistogram {
        scale: b_n,
        edges: (0..=bins).map(|i| -reach + width * i as f64).collect(),
        density: counts.iter().map(|&c| c as f64 / (total * width)).collect(),
        binder,
        effective_samples: binder.effective_samples,
        insufficient: binder.effective_samples < 100.0,
    })
}

/// Comparison of one momentum class with the free covariance `n/(λ^{1−η/2} + ν)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ModeCheck {
    pub representative: usize,
    pub multiplicity: usize,
    pub exact: f64,
    pub measured: Estimate,
    pub deviation_sigma: f64,
}

pub fn free_field_check(obs: &Observables) -> Result<Vec<ModeCheck>> {
    let c = &obs.config;
    if c.g != 0.0 {
        return Err(Error::InvalidParameter("the free-field oracle needs g = 0".into()));
    }
    let spectrum = obs.spectrum.as_ref().ok_or_else(|| Error::InvalidParameter("run without record_spectrum".into()))?;
    let op = OperatorSymbol::new(c.eta, c.nu, 0.0)?;
    let symbol = symbol_on_grid(&op, &c.geometry());
    spectrum
        .representative
        .iter()
        .zip(&spectrum.multiplicity)
        .zip(&spectrum.series)
        .map(|((&p, &mult), series)| {
            let exact = c.n as f64 / symbol[p];
            let measured = estimate(series)?;
            Ok(ModeCheck { representative: p, multiplicity: mult, exact, measured, deviation_sigma: (measured.mean - exact).abs() / measured.error })
        })
        .collect()
}

/// One point of a Binder scan.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanPoint {
    pub side: usize,
    pub nu: f64,
    pub binder: Estimate,
    pub chi_zero: Estimate,
    pub acceptance: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Crossing {
    pub nu: f64,
    pub binder: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BinderScan {
    pub points: Vec<ScanPoint>,
    /// Crossing of the curves of the first two sides, by linear interpolation.
    pub crossing: Option<Crossing>,
}

/// Runs `base` at every `(side, ν)` pair. The seed of each run is derived
/// from the base seed and the point index.
pub fn binder_scan(base: &MCConfig, sides: &[usize], nus: &[f64]) -> Result<BinderScan> {
    let jobs: Vec<(usize, usize, f64)> =
        sides.iter().flat_map(|&s| nus.iter().map(move |&nu| (s, nu))).enumerate().map(|(i, (s, nu))| (i, s, nu)).collect();
    let points: Vec<ScanPoint> = jobs
        .par_iter()
        .map(|&(i, side, nu)| {
            let config = MCConfig { side, nu, seed: base.seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1)), ..base.clone() };
            let obs = run(&config)?;
            Ok(ScanPoint { side, nu, binder: obs.binder()?, chi_zero: obs.chi_zero()?, acceptance: obs.acceptance })
        })
        .collect::<Result<_>>()?;
    let crossing = if sides.len() >= 2 { find_crossing(&points, sides[0], sides[1]) } else { None };
    Ok(BinderScan { points, crossing })
}

fn find_crossing(points: &[ScanPoint], a: usize, b: usize) -> Option<Crossing> {
    let curve = |s: usize| -> Vec<(f64, f64)> {
        let mut v: Vec<(f64, f64)> = points.iter().filter(|p| p.side == s).map(|p| (p.nu, p.binder.mean)).collect();
        v.sort_by(|x, y| x.0.total_cmp(&y.0));
        v
    };
    let (ca, cb) = (curve(a), curve(b));
    for (wa, wb) in ca.windows(2).zip(cb.windows(2)) {
        let d0 = wa[0].1 - wb[0].1;
        let d1 = wa[1].1 - wb[1].1;
        if d0 == 0.0 {
            return Some(Crossing { nu: wa[0].0, binder: wa[0].1 });
        }
        if d0 * d1 < 0.0 {
            let t = d0 / (d0 - d1);
            let nu = wa[0].0 + t * (wa[1].0 - wa[0].0);
            let ba = wa[0].1 + t * (wa[1].1 - wa[0].1);
            let bb = wb[0].1 + t * (wb[1].1 - wb[0].1);
            return Some(Crossing { nu, binder: 0.5 * (ba + bb) });
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::simpson_refined;

    fn random_field(config: &MCConfig, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..config.n * config.volume()).map(|_| rng.sample(StandardNormal)).collect();
        Field::from_values(config.n, config.volume(), values).unwrap()
    }

    #[test]
    fn hamiltonian_trivial_cases() {
        let c = MCConfig::new(3, 4, 2, 0.3, 0.7, 0.5);
        assert_eq!(hamiltonian(&c, &Field::zeros(2, 64)).unwrap(), 0.0);
        let constant = Field::from_values(2, 64, [0.4, -0.3].repeat(64)).unwrap();
        let y2 = 0.25;
        let expected = 64.0 * (0.7 * y2 / 2.0 + 0.3 * y2 * y2 / 4.0);
        assert!((hamiltonian(&c, &constant).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn spectral_kinetic_matches_dense_form() {
        let c = MCConfig::new(4, 4, 1, 0.0, 1.0, 0.5);
        let torus = c.geometry();
        let op = OperatorSymbol::fractional(0.5).unwrap();
        let symbol = symbol_on_grid(&op, &torus);
        let vol = c.volume();
        let kernel: Vec<f64> = (0..vol)
            .map(|x| {
                let rx = torus.residues(x);
                (0..vol)
                    .map(|p| {
                        let dot: usize = torus.residues(p).iter().zip(&rx).map(|(a, b)| a * b).sum();
                        symbol[p] * (std::f64::consts::TAU * (dot % 4) as f64 / 4.0).cos()
                    })
                    .sum::<f64>()
                    / vol as f64
            })
            .collect();
        let f = random_field(&c, 5);
        let mut dense = 0.0;
        for x in 0..vol {
            for y in 0..vol {
                dense += f.values[x] * kernel[torus.difference(x, y)] * f.values[y];
            }
        }
        let h = hamiltonian(&c, &f).unwrap() - f.values.iter().map(|v| 0.5 * v * v).sum::<f64>();
        assert!((h - 0.5 * dense).abs() < 1e-9 * dense.abs(), "{h} vs {}", 0.5 * dense);
    }

    #[test]
    fn sine_modes_are_orthonormal() {
        let (d, side) = (2, 8);
        let modes = [vec![0, 0], vec![1, 0], vec![0, 3], vec![2, 1], vec![3, 3]];
        let vol = (side * side) as f64;
        for a in &modes {
            for b in &modes {
                let ea = mode_function(d, side, a).unwrap();
                let eb = mode_function(d, side, b).unwrap();
                let dot: f64 = ea.iter().zip(&eb).map(|(x, y)| (x / vol) * (y / vol)).sum::<f64>() * vol;
                assert!((dot - if a == b { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
        }
        assert!(matches!(mode_function(d, side, &[4, 0]), Err(Error::OffGrid(_))));
        assert!(matches!(mode_from_k(&[1.0, 0.0], side), Err(Error::OffGrid(_))));
        assert_eq!(mode_from_k(&[std::f64::consts::TAU, 0.0], side).unwrap(), vec![1, 0]);
    }

    #[test]
    fn single_site_moments_match_quadrature() {
        let mut c = MCConfig::new(1, 1, 1, 0.1, 0.5, 0.0);
        c.algorithm = Algorithm::Metropolis;
        c.metropolis_step = 2.5;
        c.sweeps = 200_000;
        c.thermalization = 1000;
        c.chi_modes = vec![];
        let obs = run(&c).unwrap();
        let w = |y: f64| (-0.25 * y * y - 0.025 * y.powi(4)).exp();
        let z = simpson_refined(&w, -30.0, 30.0, 1e-12).unwrap().0;
        let m2 = simpson_refined(&|y: f64| y * y * w(y), -30.0, 30.0, 1e-12).unwrap().0 / z;
        let m4 = simpson_refined(&|y: f64| y.powi(4) * w(y), -30.0, 30.0, 1e-12).unwrap().0 / z;
        let s2 = estimate(&obs.phi_squared()).unwrap();
        let q: Vec<f64> = obs.phi_mean.iter().map(|v| v.powi(4)).collect();
        let s4 = estimate(&q).unwrap();
        assert!((s2.mean - m2).abs() < 3.0 * s2.error, "{s2:?} vs {m2}");
        assert!((s4.mean - m4).abs() < 3.0 * s4.error, "{s4:?} vs {m4}");
        let mean = estimate(&obs.phi_mean).unwrap();
        assert!(mean.mean.abs() < 3.0 * mean.error);
    }

    #[test]
    fn free_field_small_lattice_hmc_and_metropolis() {
        for algorithm in [Algorithm::Hmc, Algorithm::Metropolis] {
            let mut c = MCConfig::new(2, 4, 2, 0.0, 0.5, 0.5);
            c.algorithm = algorithm;
            c.sweeps = 4000;
            c.thermalization = 200;
            c.record_spectrum = true;
            c.chi_modes = vec![vec![0, 0], vec![1, 0], vec![1, 1]];
            let obs = run(&c).unwrap();
            for m in free_field_check(&obs).unwrap() {
                assert!(m.deviation_sigma < 3.5, "{algorithm:?}: {m:?}");
            }
            let op = OperatorSymbol::new(0.5, 0.5, 0.0).unwrap();
            for (k, m) in [([0.0, 0.0], [0.0, 0.0]), ([std::f64::consts::TAU, 0.0], [std::f64::consts::FRAC_PI_2, 0.0])] {
                let est = measure_chi_k(&obs, &k).unwrap();
                let exact = 2.0 / crate::lattice::symbol_full(&op, &m);
                assert!((est.mean - exact).abs() < 3.5 * est.error, "{algorithm:?} {k:?}: {est:?} vs {exact}");
            }
            assert!(obs.chi_zero_consistency().unwrap() < 1e-12);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let mut c = MCConfig::new(2, 4, 1, 0.2, -0.1, 0.0);
        c.sweeps = 60;
        c.thermalization = 10;
        c.chains = 2;
        let a = run(&c).unwrap();
        let b = run(&c).unwrap();
        assert!(a.phi_mean.iter().zip(&b.phi_mean).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(a.two_point[1].iter().zip(&b.two_point[1]).all(|(x, y)| x.to_bits() == y.to_bits()));
        c.seed = 2;
        assert_ne!(run(&c).unwrap().phi_mean, a.phi_mean);
    }

    #[test]
    fn leapfrog_error_scales_with_step_squared() {
        let mut c = MCConfig::new(3, 4, 1, 0.5, 0.3, 0.0);
        c.hmc.trajectory_length = 1.0;
        let f = random_field(&c, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut sq = [0.0; 2];
        for _ in 0..8 {
            let momenta: Vec<f64> = (0..64).map(|_| rng.sample(StandardNormal)).collect();
            for (s, steps) in sq.iter_mut().zip([10, 20]) {
                *s += leapfrog_energy_error(&c, &f, &momenta, steps).unwrap().powi(2);
            }
        }
        let ratio = sq[0] / sq[1];
        assert!((12.0..20.0).contains(&ratio), "ΔH² ratio {ratio}");
    }

    #[test]
    fn binder_limits() {
        let mut c = MCConfig::new(2, 4, 1, 0.05, 4.0, 0.0);
        c.sweeps = 6000;
        c.thermalization = 200;
        let b = run(&c).unwrap().binder().unwrap();
        assert!((b.mean - 3.0).abs() < 0.3, "{b:?}");
        c.nu = -4.0;
        let b = run(&c).unwrap().binder().unwrap();
        assert!((b.mean - 1.0).abs() < 0.02, "{b:?}");
        let hist = zero_mode_histogram(&run(&c).unwrap(), 1.0, 20).unwrap();
        let mass: f64 = hist.density.iter().sum::<f64>() * (hist.edges[1] - hist.edges[0]);
        assert!((mass - 1.0).abs() < 1e-12 && !hist.insufficient);
    }

    #[test]
    fn jackknife_of_linear_statistic_is_standard_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let e = estimate(&s).unwrap();
        assert!((e.error - 0.01).abs() < 0.002, "{e:?}");
        assert!((e.tau_int - 0.5).abs() < 0.1);
        let mut ar = vec![0.0; 20_000];
        for i in 1..ar.len() {
            ar[i] = 0.9 * ar[i - 1] + rng.sample::<f64, _>(StandardNormal);
        }
        let tau = integrated_autocorrelation(&ar);
        assert!((tau - 9.5).abs() < 2.0, "tau {tau}");
    }

    #[test]
    fn budget_and_validation() {
        let c = MCConfig::new(5, 16, 1, 0.1, 0.0, 0.0);
        assert!(matches!(c.validate(), Err(Error::Budget { .. })));
        let ok = MCConfig { override_budget: true, ..c.clone() };
        assert!(ok.validate().is_ok());
        let bad = MCConfig { thermalization: 5000, ..MCConfig::new(2, 4, 1, 0.1, 0.0, 0.0) };
        assert!(bad.validate().is_err());
        let mut tiny_steps = MCConfig::new(2, 8, 1, 0.1, 0.0, 0.0);
        tiny_steps.hmc.leapfrog_steps = 1;
        tiny_steps.hmc.trajectory_length = 40.0;
        tiny_steps.sweeps = 40;
        tiny_steps.thermalization = 1;
        assert!(matches!(run(&tiny_steps), Err(Error::StepSize { .. })));
    }
}
