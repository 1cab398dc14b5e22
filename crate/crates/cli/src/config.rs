//! Experiment configuration: one TOML document with a section per
//! subcommand. A file ending in `.json` is read as the JSON mirror of the
//! same schema. Every section is optional and unknown keys are rejected.

use std::path::Path;

use anyhow::{bail, Context};
use phi4::frd::Backend;
use phi4::lattice::{OperatorSymbol, TorusSpec};
use phi4::montecarlo::{Algorithm, HmcParams, MCConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub output: OutputConfig,
    pub lattice: LatticeConfig,
    pub symbol: SymbolConfig,
    pub decompose: DecomposeConfig,
    pub flow: FlowConfig,
    pub predict: PredictConfig,
    pub mc: McSection,
    pub verify: VerifyConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    pub verbosity: u8,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "phi4-out".into(), verbosity: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeConfig {
    pub d: usize,
    pub l: usize,
    pub n_scales: usize,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self { d: 4, l: 2, n_scales: 2 }
    }
}

impl LatticeConfig {
    pub fn torus(&self) -> anyhow::Result<TorusSpec> {
        Ok(TorusSpec::new(self.d, self.l, self.n_scales)?)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SymbolConfig {
    pub eta: f64,
    pub a_mass: f64,
    pub a_delta: f64,
    /// `[q, c]` pairs adding `c Σ_i (2 − 2cos p_i)^{q/2}`.
    pub higher_terms: Vec<(u32, f64)>,
}

impl SymbolConfig {
    pub fn operator(&self) -> anyhow::Result<OperatorSymbol> {
        Ok(OperatorSymbol::new(self.eta, self.a_mass, self.a_delta)?.with_higher_terms(self.higher_terms.clone())?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    Poly,
    Window,
}

impl From<BackendChoice> for Backend {
    fn from(b: BackendChoice) -> Self {
        match b {
            BackendChoice::Poly => Backend::PolyFiniteRange,
            BackendChoice::Window => Backend::FourierWindow,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecomposeConfig {
    pub backend: BackendChoice,
    /// Largest accepted relative exactness residual.
    pub threshold: f64,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self { backend: BackendChoice::Poly, threshold: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub n: usize,
    pub g0: f64,
    /// Number of computed `Z^d` scales feeding `β_j`, `Γ_j(0)`, `Γ_j^{(1)}`.
    pub levels: usize,
    pub j_max: usize,
    pub nu_bracket: (f64, f64),
    pub tol: f64,
    /// Last scale of the geometric-rate fit above the upper critical dimension.
    pub rate_fit_end: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self { n: 1, g0: 0.01, levels: 8, j_max: 400, nu_bracket: (-0.5, 0.5), tol: 1e-12, rate_fit_end: 8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictConfig {
    pub n: usize,
    pub g: f64,
    pub n_scales: Vec<usize>,
    /// Integer mode vectors `m` (`k = 2πm`) with `m ≠ 0`; empty means the
    /// first axis mode.
    pub modes: Vec<Vec<u32>>,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self { n: 1, g: 0.01, n_scales: vec![2, 3, 4], modes: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    /// Numbers of scales `N` of the compared lattices.
    pub n_scales: Vec<usize>,
    pub nus: Vec<f64>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self { n_scales: vec![2, 3], nus: (0..9).map(|i| -0.045 + 0.005 * i as f64).collect() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    pub n: usize,
    pub g: f64,
    pub nu: f64,
    pub algorithm: Algorithm,
    pub sweeps: usize,
    pub thermalization: usize,
    pub stride: usize,
    pub seed: u64,
    pub chains: usize,
    pub hmc: HmcParams,
    pub metropolis_step: f64,
    pub chi_modes: Vec<Vec<u32>>,
    pub record_spectrum: bool,
    pub histogram_bins: usize,
    pub scan: Option<ScanConfig>,
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            n: 1,
            g: 0.05,
            nu: -0.023,
            algorithm: Algorithm::Hmc,
            sweeps: 3000,
            thermalization: 200,
            stride: 1,
            seed: 1,
            chains: 1,
            hmc: HmcParams::default(),
            metropolis_step: 1.0,
            chi_modes: Vec::new(),
            record_spectrum: false,
            histogram_bins: 40,
            scan: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Random `(g, ν, a, f)` draws for the tiny-lattice identities.
    pub identity_draws: usize,
    pub free_field_side: usize,
    pub free_field_sweeps: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { seed: 7, identity_draws: 3, free_field_side: 4, free_field_sweeps: 4000 }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
        } else {
            Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
        }
    }

    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn to_json(&self) -> anyhow::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks the parts every subcommand relies on.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.lattice.torus()?;
        self.symbol.operator()?;
        if !(self.decompose.threshold > 0.0) {
            bail!("decompose.threshold must be positive");
        }
        if self.predict.n_scales.is_empty() {
            bail!("predict.n_scales must not be empty");
        }
        if let Some(scan) = &self.mc.scan {
            if scan.n_scales.len() < 2 || scan.nus.len() < 2 {
                bail!("mc.scan needs at least two lattices and two values of nu");
            }
        }
        Ok(())
    }

    /// Monte Carlo configuration on the torus of `lattice` with the `η` of
    /// `symbol`.
    pub fn mc_config(&self) -> anyhow::Result<MCConfig> {
        let torus = self.lattice.torus()?;
        let mc = &self.mc;
        let mut c = MCConfig::on_torus(&torus, mc.n, mc.g, mc.nu, self.symbol.eta);
        c.algorithm = mc.algorithm;
        c.sweeps = mc.sweeps;
        c.thermalization = mc.thermalization;
        c.stride = mc.stride;
        c.seed = mc.seed;
        c.chains = mc.chains;
        c.hmc = mc.hmc.clone();
        c.metropolis_step = mc.metropolis_step;
        c.record_spectrum = mc.record_spectrum;
        c.chi_modes = if mc.chi_modes.is_empty() {
            let mut first = vec![0; torus.d];
            first[0] = 1;
            vec![vec![0; torus.d], first]
        } else {
            mc.chi_modes.clone()
        };
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_both_formats() {
        let c = ExperimentConfig::default();
        let toml_text = c.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&toml_text).unwrap(), c);
        let json: ExperimentConfig = serde_json::from_str(&c.to_json().unwrap()).unwrap();
        assert_eq!(json, c);
        assert_eq!(c.hash(), json.hash());
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("[lattice]\nd = 5\n").is_ok());
        assert!(ExperimentConfig::from_toml("[lattice]\ndim = 5\n").is_err());
        assert!(ExperimentConfig::from_toml("[nonsense]\n").is_err());
        assert!(ExperimentConfig::from_toml("[mc.hmc]\nsteps = 3\n").is_err());
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let c = ExperimentConfig::from_toml("[flow]\ng0 = 0.02\n").unwrap();
        assert_eq!(c.flow.g0, 0.02);
        assert_eq!(c.flow.j_max, FlowConfig::default().j_max);
        assert!(c.validate().is_ok());
        let mc = c.mc_config().unwrap();
        assert_eq!(mc.side, 4);
        assert_eq!(mc.chi_modes.len(), 2);
    }
}
