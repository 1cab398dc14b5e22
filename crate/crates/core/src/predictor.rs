//! Closed-form finite-size-scaling predictions at the critical point.
//!
//! Everything here is a formula or a low-dimensional integral against the
//! quartic weight `e^{−|y|⁴/4}` on `R^n`. Isotropic integrals are reduced to
//! one radial integral and evaluated by refined Simpson quadrature on
//! `[0, R]`, with `R` large enough that the discarded weight is below
//! `e^{−40}`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};
use crate::lattice::{green_gamma, TorusFft, TorusSpec};
use crate::quad::simpson_refined;

/// Base truncation radius `max(8, 40^{1/4}·4)` of the quartic-weight integrals.
pub fn quartic_radius() -> f64 {
    8f64.max(40f64.powf(0.25) * 4.0)
}

const REL_TOL: f64 = 1e-13;

fn radial_integral(f: impl Fn(f64) -> f64, radius: f64) -> Result<f64> {
    Ok(simpson_refined(&f, 0.0, radius, REL_TOL)?.0)
}

/// Whether `(d, η)` sits at the upper critical dimension `4 − 2η`.
pub fn is_upper_critical(d: usize, eta: f64) -> bool {
    (d as f64 - (4.0 - 2.0 * eta)).abs() < 1e-12
}

fn check_regime(d: usize, eta: f64) -> Result<()> {
    if d < 4 || !(0.0..0.5).contains(&eta) {
        return Err(Error::InvalidParameter(format!("predictions need d ≥ 4 and η ∈ [0, 1/2), got d = {d}, η = {eta}")));
    }
    Ok(())
}

/// The three field scales `a_N`, `b_N`, `c_N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    pub a_n: f64,
    pub b_n: f64,
    pub c_n: f64,
}

/// `a_N = L^{−dN/2}`, `b_N = N^{1/4}L^{−N}` at the upper critical dimension
/// and `g^{−1/4}L^{−dN/4}` above it, `c_N = L^{−(d−2+η)N/2}`.
pub fn scales(d: usize, eta: f64, g: f64, l: usize, n_scales: usize) -> Result<Scales> {
    check_regime(d, eta)?;
    if !(g > 0.0) || l < 2 || n_scales == 0 {
        return Err(Error::InvalidParameter(format!("need g > 0, L ≥ 2, N ≥ 1; got g = {g}, L = {l}, N = {n_scales}")));
    }
    let (df, lf, nf) = (d as f64, l as f64, n_scales as f64);
    let b_n = if is_upper_critical(d, eta) { nf.powf(0.25) * lf.powf(-nf) } else { g.powf(-0.25) * lf.powf(-df * nf / 4.0) };
    Ok(Scales { a_n: lf.powf(-df * nf / 2.0), b_n, c_n: lf.powf(-(df - 2.0 + eta) * nf / 2.0) })
}

/// Direction of a moment of `Y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `E[|Y|^{2p}]`.
    Radial,
    /// `E[(e·Y)^{2p}]` for a unit vector `e`.
    Unit,
}

/// `E[(e·U)^{2p}]` for `U` uniform on the unit sphere of `R^n`.
pub fn sphere_moment(n: usize, p: u32) -> f64 {
    let (nf, pf) = (n as f64, p as f64);
    (ln_gamma(0.5 * nf) + ln_gamma(pf + 0.5) - 0.5 * PI.ln() - ln_gamma(pf + 0.5 * nf)).exp()
}

/// The `R^n`-valued law with density proportional to `e^{−|y|⁴/4}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct YDistribution {
    pub n: usize,
    /// `∫_0^∞ r^{n−1} e^{−r⁴/4} dr`, the normaliser up to the sphere area.
    pub radial_norm: f64,
}

impl YDistribution {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("component count must be positive".into()));
        }
        let k = n as i32 - 1;
        let radial_norm = radial_integral(|r| r.powi(k) * (-0.25 * r.powi(4)).exp(), quartic_radius())?;
        Ok(Self { n, radial_norm })
    }

    /// Density of `|Y|` at `r`.
    pub fn radial_density(&self, r: f64) -> f64 {
        if r < 0.0 {
            return 0.0;
        }
        r.powi(self.n as i32 - 1) * (-0.25 * r.powi(4)).exp() / self.radial_norm
    }

    /// Density of one component `Y_1` at `y`; for `n = 1` this is the
    /// density of `Y` itself.
    pub fn marginal_density(&self, y: f64) -> Result<f64> {
        if self.n == 1 {
            return Ok((-0.25 * y.powi(4)).exp() / (2.0 * self.radial_norm));
        }
        // Integrate the remaining n−1 coordinates radially.
        let m = self.n - 1;
        let sphere = |k: usize| 2.0 * PI.powf(0.5 * k as f64) / gamma(0.5 * k as f64);
        let inner = radial_integral(|s| s.powi(m as i32 - 1) * (-0.25 * (y * y + s * s).powi(2)).exp(), quartic_radius())?;
        Ok(sphere(m) * inner / (sphere(self.n) * self.radial_norm))
    }

    /// `E[|Y|^{2p}]` or `E[(e·Y)^{2p}]` by quadrature. Odd moments of a
    /// component vanish by symmetry.
    pub fn moment(&self, p: u32, direction: Direction) -> Result<f64> {
        let k = self.n as i32 - 1 + 2 * p as i32;
        let radial = radial_integral(|r| r.powi(k) * (-0.25 * r.powi(4)).exp(), quartic_radius())? / self.radial_norm;
        Ok(match direction {
            Direction::Radial => radial,
            Direction::Unit => radial * sphere_moment(self.n, p),
        })
    }

    /// `E[Y_1^4]/E[Y_1^2]^2` for a single component `Y_1`, the Binder target
    /// of the zero mode. It rises from about 2.1885 at `n = 1` towards the
    /// Gaussian value 3 as `n` grows.
    pub fn binder_ratio(&self) -> Result<f64> {
        let m2 = self.moment(1, Direction::Unit)?;
        Ok(self.moment(2, Direction::Unit)? / (m2 * m2))
    }

    /// `E[e^{t·Y}]` for `|t| = a`, by quadrature of the radial integral
    /// against the spherical average `E[e^{a r U_1}]`.
    pub fn mgf(&self, a: f64) -> Result<f64> {
        let a = a.abs();
        let radius = quartic_radius() + 2.0 * a.cbrt();
        let k = self.n as i32 - 1;
        let num = radial_integral(|r| r.powi(k) * spherical_mgf_scaled(self.n, a * r, -0.25 * r.powi(4)), radius)?;
        Ok(num / self.radial_norm)
    }

    /// `Σ_p a^{2p} E[(e·Y)^{2p}]/(2p)!` with closed-form moments, truncated
    /// once terms fall below `1e−17` of the running sum.
    pub fn mgf_series(&self, a: f64) -> Result<f64> {
        if a == 0.0 {
            return Ok(1.0);
        }
        let mut sum = 0.0;
        let mut log_fact = 0.0;
        for p in 0..400u32 {
            if p > 0 {
                log_fact += ((2 * p - 1) as f64).ln() + ((2 * p) as f64).ln();
            }
            let m = y_moment_closed(self.n, p) * sphere_moment(self.n, p);
            let term = (2.0 * p as f64 * a.abs().ln() - log_fact).exp() * m;
            sum += term;
            if p > 2 && term < 1e-17 * sum {
                return Ok(sum);
            }
        }
        Err(Error::NonConvergent(format!("moment series at a = {a} did not settle")))
    }
}

/// `E[e^{t U_1}]·e^{shift}` for `U` uniform on the sphere of `R^n`, from
/// `Γ(n/2) Σ_p (t²/4)^p / (p! Γ(p + n/2))` summed in log space.
fn spherical_mgf_scaled(n: usize, t: f64, shift: f64) -> f64 {
    let h = 0.5 * n as f64;
    let x = 0.25 * t * t;
    if x == 0.0 {
        return shift.exp();
    }
    let lx = x.ln();
    let mut log_term = shift;
    let mut sum = log_term.exp();
    let mut p = 0.0;
    loop {
        log_term += lx - ((p + 1.0) * (p + h)).ln();
        p += 1.0;
        let term = log_term.exp();
        sum += term;
        if p > x.sqrt() + 5.0 && term <= 1e-18 * sum {
            return sum;
        }
        if p > 1e5 {
            return sum;
        }
    }
}

/// Closed form `E[|Y|^{2p}] = 2^p Γ((2p+n)/4)/Γ(n/4)`.
pub fn y_moment_closed(n: usize, p: u32) -> f64 {
    let nf = n as f64;
    (p as f64 * 2f64.ln() + ln_gamma((2.0 * p as f64 + nf) / 4.0) - ln_gamma(nf / 4.0)).exp()
}

/// `E[|Y|^{2p}]` (radial) or `E[(e·Y)^{2p}]` (unit direction) by quadrature.
pub fn y_moment(n: usize, p: u32, direction: Direction) -> Result<f64> {
    YDistribution::new(n)?.moment(p, direction)
}

/// Test function on the unit torus `T^d`, sampled at `x = i/m` on an `m^d`
/// grid, `n` components per site (site-major).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TestFunction {
    pub d: usize,
    pub n: usize,
    pub m: usize,
    pub values: Vec<f64>,
}

impl TestFunction {
    pub fn new(d: usize, n: usize, m: usize, values: Vec<f64>) -> Result<Self> {
        let expected = n * m.pow(d as u32);
        if values.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: values.len() });
        }
        if m < 2 {
            return Err(Error::InvalidParameter("test-function grid needs m ≥ 2".into()));
        }
        Ok(Self { d, n, m, values })
    }

    /// Samples `f(x)` (returning `n` components) on the grid.
    pub fn sample(d: usize, n: usize, m: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let sites = m.pow(d as u32);
        let mut values = Vec::with_capacity(n * sites);
        let mut x = vec![0.0; d];
        for s in 0..sites {
            let mut r = s;
            for i in (0..d).rev() {
                x[i] = (r % m) as f64 / m as f64;
                r /= m;
            }
            let v = f(&x);
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: v.len() });
            }
            values.extend(v);
        }
        Self::new(d, n, m, values)
    }

    pub fn zero(d: usize, n: usize, m: usize) -> Self {
        Self { d, n, m, values: vec![0.0; n * m.pow(d as u32)] }
    }

    fn sites(&self) -> usize {
        self.m.pow(self.d as u32)
    }

    /// `Φ(f) = ∫_{T^d} f`.
    pub fn average(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for site in self.values.chunks_exact(self.n) {
            for (o, v) in out.iter_mut().zip(site) {
                *o += v;
            }
        }
        let s = self.sites() as f64;
        out.iter_mut().for_each(|o| *o /= s);
        out
    }

    /// `(f, f) = ∫ |f|²`.
    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() / self.sites() as f64
    }

    /// Fourier coefficients `f̂_k = ∫ f(x) e^{−2πik·x} dx` of each component,
    /// indexed by grid residue.
    fn coefficients(&self) -> Result<Vec<Vec<Complex64>>> {
        let torus = TorusSpec::new(self.d, self.m, 1)?;
        let fft = TorusFft::new(torus);
        let sites = self.sites();
        (0..self.n)
            .map(|c| {
                let comp: Vec<f64> = (0..sites).map(|s| self.values[s * self.n + c]).collect();
                let mut hat = fft.forward_real(&comp)?;
                hat.iter_mut().for_each(|h| *h /= sites as f64);
                Ok(hat)
            })
            .collect()
    }
}

/// Limit measures on fields over the unit torus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LimitMeasure {
    /// White noise with mass `s`.
    WhiteNoise { s: f64 },
    /// Massless fractional Gaussian field with covariance `(−Δ)^{−1+η/2}`.
    GaussianField { eta: f64 },
    /// The constant field `Y·1`.
    NonGaussian,
}

/// Value of a limit MGF and an estimate of the error from the finite mode
/// cutoff (zero except for the Gaussian field).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MgfValue {
    pub value: f64,
    pub truncation: f64,
}

/// `E[e^{(ψ, f)}]` under the given limit measure.
pub fn limit_mgf(measure: LimitMeasure, f: &TestFunction) -> Result<MgfValue> {
    match measure {
        LimitMeasure::WhiteNoise { s } => {
            if !(s > 0.0) {
                return Err(Error::InvalidParameter(format!("white-noise mass s = {s} must be positive")));
            }
            Ok(MgfValue { value: (f.norm_sq() / (2.0 * s)).exp(), truncation: 0.0 })
        }
        LimitMeasure::GaussianField { eta } => {
            if !(0.0..2.0).contains(&eta) {
                return Err(Error::InvalidParameter(format!("η = {eta} outside [0, 2)")));
            }
            let mean = f.average();
            let scale = f.norm_sq().sqrt().max(1.0);
            if mean.iter().any(|m| m.abs() > 1e-12 * scale) {
                return Err(Error::InvalidParameter(format!("Gaussian-field MGF needs a mean-zero test function, got Φ(f) = {mean:?}")));
            }
            let torus = TorusSpec::new(f.d, f.m, 1)?;
            let beta = 1.0 - 0.5 * eta;
            let mut total = 0.0;
            let mut outer = 0.0;
            for hat in f.coefficients()? {
                for (i, h) in hat.iter().enumerate().skip(1) {
                    let k = torus.coords(i);
                    let k2: f64 = k.iter().map(|&c| (2.0 * PI * c as f64).powi(2)).sum();
                    let term = h.norm_sqr() * k2.powf(-beta);
                    total += term;
                    if k.iter().map(|c| c.unsigned_abs() as usize).max().unwrap_or(0) * 4 >= f.m {
                        outer += term;
                    }
                }
            }
            let value = (0.5 * total).exp();
            Ok(MgfValue { value, truncation: value * ((0.5 * outer).exp() - 1.0) })
        }
        LimitMeasure::NonGaussian => {
            let a = f.average().iter().map(|v| v * v).sum::<f64>().sqrt();
            Ok(MgfValue { value: YDistribution::new(f.n)?.mgf(a)?, truncation: 0.0 })
        }
    }
}

/// The constants `c₁ … c₄` of the finite-size-scaling limits.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FssConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub upper_critical: bool,
    /// Half-width of the `O(g)` uncertainty on `c₁`.
    pub c1_band: f64,
    /// Half-width of the `O(g)` uncertainty on `c₂` (zero at the upper
    /// critical dimension, where it is exact).
    pub c2_band: f64,
}

/// Constants for `(d, η, n, g)`. `a_delta` is the Laplacian counterterm
/// entering `c₁` at `η = 0`; pass 0 when it is not known, in which case the
/// band covers it.
pub fn fss_constants(d: usize, eta: f64, n: usize, g: f64, a_delta: f64) -> Result<FssConstants> {
    check_regime(d, eta)?;
    if n == 0 || !(g > 0.0) {
        return Err(Error::InvalidParameter(format!("need n ≥ 1 and g > 0, got n = {n}, g = {g}")));
    }
    let gamma_c = green_gamma(d, eta)?;
    let upper_critical = is_upper_critical(d, eta);
    let (c1, c1_band) = if eta == 0.0 { (gamma_c / (1.0 + a_delta), 5.0 * g * gamma_c) } else { (gamma_c, 0.0) };
    let (c2, c2_band) = if upper_critical { ((n as f64 + 8.0).sqrt() / (4.0 * PI), 0.0) } else { (1.0, 5.0 * g) };
    Ok(FssConstants { c1, c2, c3: 1.0 / (c2 * c2), c4: gamma_c / c1, upper_critical, c1_band, c2_band })
}

/// Model and lattice parameters of a prediction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionParams {
    pub d: usize,
    pub eta: f64,
    pub n: usize,
    pub g: f64,
    pub l: usize,
    pub n_scales: usize,
}

impl PredictionParams {
    pub fn scales(&self) -> Result<Scales> {
        scales(self.d, self.eta, self.g, self.l, self.n_scales)
    }

    pub fn constants(&self) -> Result<FssConstants> {
        fss_constants(self.d, self.eta, self.n, self.g, 0.0)
    }
}

/// Plateau level `c₂ E[|Y|²]/n · b_N²`.
pub fn plateau_level(params: &PredictionParams, constants: &FssConstants) -> Result<f64> {
    let b = params.scales()?.b_n;
    Ok(constants.c2 * y_moment(params.n, 1, Direction::Radial)? / params.n as f64 * b * b)
}

/// `C_x + c₂ E[|Y|²]/n · b_N²` with `C_x` the infinite-volume two-point
/// function at the displacement of interest.
pub fn plateau_two_point(c_x: f64, params: &PredictionParams, constants: &FssConstants) -> Result<f64> {
    Ok(c_x + plateau_level(params, constants)?)
}

/// Radius at which `c₁|x|^{−(d−2+η)}` equals the plateau level.
pub fn crossover_radius(params: &PredictionParams, constants: &FssConstants) -> Result<f64> {
    let level = plateau_level(params, constants)?;
    Ok((constants.c1 / level).powf(1.0 / (params.d as f64 - 2.0 + params.eta)))
}

/// Exponent of `|Λ|` in the leading growth of `χ^{(0)}`; the logarithmic
/// factor at the upper critical dimension is not included.
pub fn chi_volume_exponent(d: usize, eta: f64) -> Result<f64> {
    check_regime(d, eta)?;
    Ok(0.5)
}

/// Predicted `χ^{(k)}` for `k = 2π·modes`: the zero-mode branch
/// `c₃^{−1/2}E[|Y|²]·(N^{1/2}L^{2N} or L^{dN/2})`, otherwise
/// `n c₄^{−1}|k|^{−2+η}L^{(2−η)N}`.
pub fn chi_prediction(params: &PredictionParams, constants: &FssConstants, modes: &[u32]) -> Result<f64> {
    if modes.len() != params.d {
        return Err(Error::DimensionMismatch { expected: params.d, found: modes.len() });
    }
    let (lf, nf) = (params.l as f64, params.n_scales as f64);
    if modes.iter().all(|&m| m == 0) {
        let ey2 = y_moment(params.n, 1, Direction::Radial)?;
        let growth = if constants.upper_critical {
            nf.sqrt() * lf.powf(2.0 * nf)
        } else {
            lf.powf(params.d as f64 * nf / 2.0)
        };
        Ok(constants.c3.powf(-0.5) * ey2 * growth)
    } else {
        let k2: f64 = modes.iter().map(|&m| (2.0 * PI * m as f64).powi(2)).sum();
        Ok(params.n as f64 / constants.c4 * k2.sqrt().powf(-2.0 + params.eta) * lf.powf((2.0 - params.eta) * nf))
    }
}

/// Critical-window profile
/// `∫|y|² e^{−|y|⁴/4 − c s|y|²} dy / ∫|y|² e^{−|y|⁴/4} dy` over `R^n`.
pub fn window_profile(s: f64, n: usize, c: f64) -> Result<f64> {
    if n == 0 || !(c > 0.0) {
        return Err(Error::InvalidParameter(format!("need n ≥ 1 and c > 0, got n = {n}, c = {c}")));
    }
    let x = c * s;
    let k = n as i32 + 1;
    let peak = (-2.0 * x).max(0.0).sqrt();
    let radius = quartic_radius() + 1.5 * peak;
    // Factor out the maximum of the exponent to keep the integrand finite.
    let shift = if x < 0.0 { x * x } else { 0.0 };
    let num = radial_integral(|r| r.powi(k) * (-0.25 * r.powi(4) - x * r * r - shift).exp(), radius)?;
    let den = radial_integral(|r| r.powi(k) * (-0.25 * r.powi(4)).exp(), quartic_radius())?;
    Ok(num / den * shift.exp())
}
