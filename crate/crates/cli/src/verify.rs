//! The oracle suite behind `phi4lab verify`. Every check compares a library
//! path against an independent evaluation and records the worst deviation.

use phi4::frd::spectral_fraction;
use phi4::lattice::{OperatorSymbol, TorusSpec};
use phi4::montecarlo::{self, MCConfig};
use phi4::predictor::{y_moment_closed, Direction, YDistribution};
use phi4::zeromode::{self, LocalQuartic, MgfForm, ReducedIntegralSpec, SmearedPotential};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::commands::decompose_on;
use crate::config::{BackendChoice, VerifyConfig};

/// Quadrature order per Gaussian mode on the 4-site lattice.
const TINY_ORDER: usize = 28;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Worst observed deviation, in the units of `tolerance`.
    pub value: f64,
    pub tolerance: f64,
    pub detail: serde_json::Value,
}

impl Check {
    fn below(name: &str, value: f64, tolerance: f64, detail: serde_json::Value) -> Self {
        Self { name: name.into(), passed: value < tolerance, value, tolerance, detail }
    }
}

fn relative(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

pub fn decomposition_exactness() -> anyhow::Result<Check> {
    let mut worst = 0.0_f64;
    let mut cases = Vec::new();
    for d in [4, 5] {
        for eta in [0.0, 0.5] {
            for a in [0.0, 0.1] {
                let op = OperatorSymbol::new(eta, a, 0.0)?;
                let residual = decompose_on(d, 2, 2, &op, BackendChoice::Poly)?.exactness_residual()?;
                worst = worst.max(residual);
                cases.push(json!({ "d": d, "eta": eta, "a_mass": a, "residual": residual }));
            }
        }
    }
    Ok(Check::below("decomposition_exactness", worst, 1e-8, json!(cases)))
}

/// `1/(w^β + z)` against the spectral integral on a 5×5×3 grid.
pub fn spectral_identity() -> anyhow::Result<Check> {
    let mut worst = 0.0_f64;
    for w in [0.01_f64, 0.1, 1.0, 10.0, 100.0] {
        for z in [0.0, 0.01, 0.1, 1.0, 10.0] {
            for beta in [0.25, 0.5, 0.75] {
                let direct = 1.0 / (w.powf(beta) + z);
                worst = worst.max(relative(spectral_fraction(w, z, beta)?, direct));
            }
        }
    }
    Ok(Check::below("spectral_identity", worst, 1e-8, json!({ "grid": [5, 5, 3] })))
}

/// Quadrature moments of `Y` against their Gamma-function closed forms.
pub fn y_moments() -> anyhow::Result<Check> {
    let mut worst = 0.0_f64;
    let mut detail = Vec::new();
    for n in 1..=4 {
        let y = YDistribution::new(n)?;
        for p in 1..=3 {
            let q = y.moment(p, Direction::Radial)?;
            worst = worst.max(relative(q, y_moment_closed(n, p)));
        }
        let m2 = y_moment_closed(n, 1) / n as f64;
        let m4 = y_moment_closed(n, 2) * 3.0 / (n * (n + 2)) as f64;
        let binder = y.binder_ratio()?;
        worst = worst.max(relative(binder, m4 / (m2 * m2)));
        detail.push(json!({ "n": n, "binder": binder }));
    }
    let one = YDistribution::new(1)?;
    worst = worst.max((one.moment(2, Direction::Radial)? - 1.0).abs());
    Ok(Check::below("y_moments", worst, 1e-8, json!(detail)))
}

/// Random `(g, ν, a_mass, f)` draws on the 4-site torus; returns the
/// moment-generating-function and two-point identity checks.
pub fn tiny_identities(draws: usize, seed: u64) -> anyhow::Result<[Check; 2]> {
    let torus = TorusSpec::new(2, 2, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst_mgf, mut worst_two) = (0.0_f64, 0.0_f64);
    let mut cases = Vec::new();
    for _ in 0..draws {
        let g = rng.random_range(0.2..1.0);
        let nu = rng.random_range(-0.2..0.3);
        let a = rng.random_range(0.1..0.5);
        let f: Vec<f64> = (0..4).map(|_| rng.random_range(-0.5..0.5)).collect();
        let op = OperatorSymbol::new(0.0, a, 0.0)?;
        let decomp = phi4::frd::decompose(&op, &torus, phi4::frd::Backend::PolyFiniteRange)?;
        let pot = LocalQuartic::new(nu, g)?;
        let weight = SmearedPotential::new(&decomp, 1, pot, TINY_ORDER)?;
        let spec = ReducedIntegralSpec::from_decomposition(&decomp, 1);

        let lhs = zeromode::lattice_mgf(&decomp, 1, pot, &f, TINY_ORDER)?;
        for form in [MgfForm::Cov, MgfForm::W] {
            let rhs = zeromode::reduced_mgf(&spec, &weight, &f, &decomp, form)?.value;
            worst_mgf = worst_mgf.max(relative(rhs, lhs));
        }
        for x in [1, 3] {
            let lhs = zeromode::lattice_two_point(&decomp, 1, pot, 0, x, TINY_ORDER)?;
            let rhs = zeromode::reduced_two_point_ratio(&spec, &weight, 0, x)?.value;
            worst_two = worst_two.max(relative(rhs, lhs));
        }
        cases.push(json!({ "g": g, "nu": nu, "a_mass": a, "f": f }));
    }
    Ok([
        Check::below("tiny_mgf_identity", worst_mgf, 1e-6, json!(cases)),
        Check::below("tiny_two_point_identity", worst_two, 1e-6, json!(cases)),
    ])
}

/// Free field on `side⁴`: every momentum class within 3σ of `n/(symbol + ν)`.
pub fn free_field(eta: f64, side: usize, sweeps: usize, seed: u64) -> anyhow::Result<Check> {
    let mut config = MCConfig::new(4, side, 1, 0.0, 0.5, eta);
    config.sweeps = sweeps;
    config.thermalization = 200;
    config.seed = seed;
    config.record_spectrum = true;
    let obs = montecarlo::run(&config)?;
    let checks = montecarlo::free_field_check(&obs)?;
    let worst = checks.iter().map(|c| c.deviation_sigma).fold(0.0, f64::max);
    let min_eff = checks.iter().map(|c| c.measured.effective_samples).fold(f64::INFINITY, f64::min);
    Ok(Check::below(
        &format!("free_field_mc_eta_{eta}"),
        worst,
        3.0,
        json!({ "side": side, "classes": checks.len(), "acceptance": obs.acceptance, "min_effective_samples": min_eff }),
    ))
}

/// Runs every check in order, reporting each name before it starts.
pub fn run_suite(cfg: &VerifyConfig, progress: impl Fn(&str)) -> anyhow::Result<Vec<Check>> {
    let mut checks = Vec::new();
    progress("decomposition_exactness");
    checks.push(decomposition_exactness()?);
    progress("spectral_identity");
    checks.push(spectral_identity()?);
    progress("y_moments");
    checks.push(y_moments()?);
    progress("tiny_identities");
    checks.extend(tiny_identities(cfg.identity_draws, cfg.seed)?);
    for (i, eta) in [0.0, 0.5].into_iter().enumerate() {
        progress(&format!("free_field_mc_eta_{eta}"));
        checks.push(free_field(eta, cfg.free_field_side, cfg.free_field_sweeps, cfg.seed.wrapping_add(i as u64))?);
    }
    Ok(checks)
}
