//! Run configuration: a sectioned TOML document with unknown keys rejected.
//!
//! ```toml
//! [system]
//! n_t = 8
//! n_r = 8
//!
//! [problem]
//! beta = 1.0
//!
//! [distortion]
//! preset = "calibrated"
//!
//! [sweep]
//! gamma_db = [4.0, 8.0]
//! betas = [1.0, 100.0]
//! ```
//!
//! Every key and its default is listed in `docs/config.md`.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::constellation::PskConstellation;
use crate::simulator::{calibrate_epsilon, DistortionSpec, EeMode, Scheme, SweepConfig};
use crate::solver::SolverConfig;

/// Config problem, with the 1-based line it refers to when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn new(message: impl Into<String>) -> Self {
        Self { line: None, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "config error at line {line}: {}", self.message),
            None => write!(f, "config error: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Named distortion settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistortionPreset {
    /// `σ_w² = 0.1`, `ε = 0.56`. The ball is smaller than a typical
    /// distortion draw (`E‖w‖² = 0.8` at eight antennas).
    Undersized,
    /// `σ_w² = 0.02`, `ε = 0.56`: the radius matches the 99% quantile for
    /// eight antennas.
    Calibrated,
}

impl DistortionPreset {
    pub fn variance(self) -> f64 {
        match self {
            DistortionPreset::Undersized => 0.1,
            DistortionPreset::Calibrated => 0.02,
        }
    }

    pub fn epsilon(self) -> f64 {
        0.56
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub n_t: usize,
    pub n_r: usize,
    pub psk_order: usize,
    /// Phase of symbol 0 in radians.
    pub psk_offset: f64,
    pub noise_sigma: f64,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self { n_t: 8, n_r: 8, psk_order: 4, psk_offset: std::f64::consts::FRAC_PI_4, noise_sigma: 1.0 }
    }
}

/// Explicit channel for `solve`: `n_r` rows of `n_t` entries each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub beta: f64,
    /// Defaults to the distortion radius.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default = "default_gamma_db")]
    pub gamma_db: f64,
    /// Drawn from the seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbols: Option<Vec<usize>>,
    /// Drawn from the seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelSection>,
}

fn default_gamma_db() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistortionSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<DistortionPreset>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
    /// Calibrated from `variance` and `confidence` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub gamma_db: Vec<f64>,
    /// Defaults to `[problem.beta]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<f64>>,
    pub blocks: usize,
    pub symbols_per_block: usize,
    pub schemes: Vec<Scheme>,
    pub mi_bins: usize,
    pub ee_mode: EeMode,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            gamma_db: vec![0.0, 4.0, 8.0, 12.0, 16.0, 20.0],
            betas: None,
            blocks: 50,
            symbols_per_block: 100,
            schemes: Scheme::ALL.to_vec(),
            mi_bins: 64,
            ee_mode: EeMode::Literal,
        }
    }
}

/// Settings of the `validate` property suites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateSection {
    pub instances: usize,
    pub sphere_samples: usize,
    pub sizes: Vec<usize>,
    pub betas: Vec<f64>,
    pub epsilons: Vec<f64>,
    /// Constellation of the APGD-versus-NNLS check. Orders 4 and below give
    /// an orthogonal `A`, where momentum is zero under either rule.
    pub apgd_psk_order: usize,
    pub apgd_steps: usize,
}

impl Default for ValidateSection {
    fn default() -> Self {
        Self {
            instances: 50,
            sphere_samples: 2000,
            sizes: vec![2, 4],
            betas: vec![1.0, 10.0, 100.0],
            epsilons: vec![0.1, 0.56],
            apgd_psk_order: 16,
            apgd_steps: 150,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    /// Worker threads. Left out of embedded configs since results do not
    /// depend on it.
    #[serde(skip_serializing)]
    pub parallel: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { seed: 2024, parallel: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    #[default]
    Json,
    Toml,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Standard output when absent. Not embedded in reports, so the same
    /// run written to two paths produces identical files.
    #[serde(skip_serializing)]
    pub path: Option<PathBuf>,
    /// Format of the `solve` and `validate` reports.
    pub format: ReportFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub system: SystemSection,
    pub problem: ProblemSection,
    #[serde(default)]
    pub distortion: DistortionSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub validate: ValidateSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    /// Parses, fills in derived defaults and validates.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError {
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().trim_end().to_string(),
        })?;
        cfg.resolve().map_err(|(section, key, message)| ConfigError {
            line: locate(text, section, key),
            message: format!("{section}.{key}: {message}"),
        })?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Effective configuration with all defaults resolved, as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn constellation(&self) -> PskConstellation {
        PskConstellation::new(self.system.psk_order, self.system.psk_offset).expect("validated constellation")
    }

    pub fn distortion_spec(&self) -> DistortionSpec {
        DistortionSpec {
            variance: self.distortion.variance.expect("resolved"),
            epsilon: self.distortion.epsilon.expect("resolved"),
            confidence: self.distortion.confidence.expect("resolved"),
        }
    }

    /// Radius used by `solve`.
    pub fn problem_epsilon(&self) -> f64 {
        self.problem.epsilon.expect("resolved")
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            n_t: self.system.n_t,
            n_r: self.system.n_r,
            constellation: self.constellation(),
            gamma_db: self.sweep.gamma_db.clone(),
            betas: self.sweep.betas.clone().expect("resolved"),
            blocks: self.sweep.blocks,
            symbols_per_block: self.sweep.symbols_per_block,
            noise_sigma: self.system.noise_sigma,
            distortion: self.distortion_spec(),
            seed: self.run.seed,
            schemes: self.sweep.schemes.clone(),
            solver: self.solver.clone(),
            mi_bins: self.sweep.mi_bins,
            ee_mode: self.sweep.ee_mode,
            parallel: self.run.parallel,
        }
    }

    /// Re-checks after command-line overrides.
    pub fn revalidate(&mut self) -> Result<(), ConfigError> {
        self.resolve().map_err(|(section, key, message)| ConfigError::new(format!("{section}.{key}: {message}")))
    }

    fn resolve(&mut self) -> Result<(), (&'static str, &'static str, String)> {
        let sys = &self.system;
        if sys.n_t == 0 {
            return Err(("system", "n_t", "must be positive".into()));
        }
        if sys.n_r == 0 || sys.n_r > sys.n_t {
            return Err(("system", "n_r", format!("must lie in 1..={}, got {}", sys.n_t, sys.n_r)));
        }
        PskConstellation::new(sys.psk_order, sys.psk_offset).map_err(|e| ("system", "psk_order", e.to_string()))?;
        if !sys.psk_offset.is_finite() {
            return Err(("system", "psk_offset", "must be finite".into()));
        }
        if !(sys.noise_sigma.is_finite() && sys.noise_sigma > 0.0) {
            return Err(("system", "noise_sigma", format!("must be positive, got {}", sys.noise_sigma)));
        }

        let d = &mut self.distortion;
        let confidence = *d.confidence.get_or_insert(0.99);
        if !(confidence > 0.0 && confidence < 1.0) {
            return Err(("distortion", "confidence", format!("must lie in (0, 1), got {confidence}")));
        }
        if d.preset.is_none() && d.variance.is_none() && d.epsilon.is_none() {
            d.preset = Some(DistortionPreset::Calibrated);
        }
        if let Some(p) = d.preset {
            d.variance.get_or_insert(p.variance());
            d.epsilon.get_or_insert(p.epsilon());
        }
        let variance = *d.variance.get_or_insert(0.0);
        if !(variance.is_finite() && variance >= 0.0) {
            return Err(("distortion", "variance", format!("must be non-negative, got {variance}")));
        }
        let epsilon = match d.epsilon {
            Some(e) => e,
            None => calibrate_epsilon(confidence, variance, sys.n_t).map_err(|e| ("distortion", "epsilon", e.to_string()))?,
        };
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(("distortion", "epsilon", format!("must be non-negative, got {epsilon}")));
        }
        d.epsilon = Some(epsilon);

        let p = &mut self.problem;
        if !(p.beta.is_finite() && p.beta > 0.0) {
            return Err(("problem", "beta", format!("must be positive, got {}", p.beta)));
        }
        let eps = *p.epsilon.get_or_insert(epsilon);
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(("problem", "epsilon", format!("must be non-negative, got {eps}")));
        }
        if !p.gamma_db.is_finite() {
            return Err(("problem", "gamma_db", "must be finite".into()));
        }
        if let Some(symbols) = &p.symbols {
            if symbols.len() != sys.n_r {
                return Err(("problem", "symbols", format!("expected {} entries, got {}", sys.n_r, symbols.len())));
            }
            if let Some(bad) = symbols.iter().find(|&&s| s >= sys.psk_order) {
                return Err(("problem", "symbols", format!("symbol {bad} outside 0..{}", sys.psk_order)));
            }
        }
        if let Some(ch) = &p.channel {
            let shape_ok = |rows: &Vec<Vec<f64>>| rows.len() == sys.n_r && rows.iter().all(|r| r.len() == sys.n_t);
            if !shape_ok(&ch.re) || !shape_ok(&ch.im) {
                return Err(("channel", "re", format!("re and im must both be {} rows of {} entries", sys.n_r, sys.n_t)));
            }
            if ch.re.iter().chain(&ch.im).flatten().any(|v| !v.is_finite()) {
                return Err(("channel", "re", "entries must be finite".into()));
            }
        }
        let beta = p.beta;

        let s = &mut self.sweep;
        if s.gamma_db.is_empty() || s.gamma_db.iter().any(|g| !g.is_finite()) {
            return Err(("sweep", "gamma_db", "must be a non-empty list of finite values".into()));
        }
        let betas = s.betas.get_or_insert_with(|| vec![beta]);
        if betas.is_empty() || betas.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(("sweep", "betas", "must be a non-empty list of positive values".into()));
        }
        if s.blocks == 0 {
            return Err(("sweep", "blocks", "must be positive".into()));
        }
        if s.symbols_per_block == 0 {
            return Err(("sweep", "symbols_per_block", "must be positive".into()));
        }
        if s.schemes.is_empty() {
            return Err(("sweep", "schemes", "must name at least one scheme".into()));
        }
        if s.mi_bins < 2 {
            return Err(("sweep", "mi_bins", format!("must be at least 2, got {}", s.mi_bins)));
        }

        self.solver.validate().map_err(|e| ("solver", solver_key(&e), e))?;

        let v = &self.validate;
        if v.instances == 0 || v.sphere_samples == 0 || v.apgd_steps == 0 {
            return Err(("validate", "instances", "counts must be positive".into()));
        }
        if v.sizes.is_empty() || v.sizes.contains(&0) {
            return Err(("validate", "sizes", "must be a non-empty list of positive sizes".into()));
        }
        if v.betas.is_empty() || v.betas.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(("validate", "betas", "must be a non-empty list of positive values".into()));
        }
        if v.epsilons.is_empty() || v.epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(("validate", "epsilons", "must be a non-empty list of positive values".into()));
        }
        PskConstellation::new(v.apgd_psk_order, 0.0).map_err(|e| ("validate", "apgd_psk_order", e.to_string()))?;

        if self.run.parallel == 0 {
            return Err(("run", "parallel", "must be at least 1".into()));
        }
        Ok(())
    }
}

/// Best-effort key name from a solver validation message.
fn solver_key(message: &str) -> &'static str {
    const KEYS: [&str; 5] =
        ["outer_tolerance", "secular_tolerance", "bracket_inset", "cycle_tolerance", "max_iterations"];
    KEYS.into_iter().find(|k| message.contains(k)).unwrap_or("max_iterations")
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key = ...` inside `[section]`, falling back to the section
/// header.
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section || current == format!("problem.{section}") {
                header.get_or_insert(i + 1);
            }
            continue;
        }
        let in_section = current == section || current == format!("problem.{section}");
        if in_section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::from_toml_str(text)
    }

    #[test]
    fn minimal_config_resolves_defaults() {
        let cfg = parse("[problem]\nbeta = 1.0\n").unwrap();
        assert_eq!(cfg.system, SystemSection::default());
        assert_eq!(cfg.distortion.preset, Some(DistortionPreset::Calibrated));
        assert_eq!(cfg.distortion.variance, Some(0.02));
        assert_eq!(cfg.problem_epsilon(), 0.56);
        assert_eq!(cfg.sweep.betas, Some(vec![1.0]));
        assert_eq!(cfg.sweep_config().n_t, 8);
    }

    #[test]
    fn missing_beta_names_the_key() {
        let err = parse("[system]\nn_t = 4\nn_r = 4\n\n[problem]\ngamma_db = 3.0\n").unwrap_err();
        assert!(err.message.contains("beta"), "{err}");
        assert!(err.line.is_some());
        let err = parse("[system]\nn_t = 4\n").unwrap_err();
        assert!(err.message.contains("problem"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let err = parse("[problem]\nbata = 1.0\n").unwrap_err();
        assert!(err.message.contains("bata"), "{err}");
        assert_eq!(err.line, Some(2));
        let err = parse("[problem]\nbeta = 1.0\n[solver]\nmax_iteration = 3\n").unwrap_err();
        assert_eq!(err.line, Some(4));
        assert!(parse("[problem]\nbeta = 1.0\n[nonsense]\n").is_err());
    }

    #[test]
    fn semantic_errors_point_at_the_key() {
        let err = parse("[system]\nn_t = 2\nn_r = 4\n[problem]\nbeta = 1.0\n").unwrap_err();
        assert_eq!(err.line, Some(3));
        assert!(err.message.contains("system.n_r"));
        let err = parse("[problem]\nbeta = -1.0\n").unwrap_err();
        assert_eq!(err.line, Some(2));
        let err = parse("[problem]\nbeta = 1.0\n[system]\npsk_order = 6\n").unwrap_err();
        assert_eq!(err.line, Some(4));
        let err = parse("[problem]\nbeta = 1.0\n[solver]\ncycle_tolerance = 0.0\n").unwrap_err();
        assert_eq!(err.line, Some(4), "{err}");
    }

    #[test]
    fn presets_and_calibration() {
        let lit = parse("[problem]\nbeta = 1.0\n[distortion]\npreset = \"undersized\"\n").unwrap();
        assert_eq!(lit.distortion_spec().variance, 0.1);
        assert_eq!(lit.distortion_spec().epsilon, 0.56);
        let own = parse("[problem]\nbeta = 1.0\n[distortion]\nvariance = 0.02\n").unwrap();
        let eps = own.distortion_spec().epsilon;
        assert!((eps - 0.5657).abs() < 1e-3);
        let over = parse("[problem]\nbeta = 1.0\nepsilon = 0.0\n[distortion]\npreset = \"calibrated\"\nepsilon = 0.3\n")
            .unwrap();
        assert_eq!(over.problem_epsilon(), 0.0);
        assert_eq!(over.distortion_spec().epsilon, 0.3);
    }

    #[test]
    fn effective_config_round_trips() {
        let text = "[system]\nn_t = 2\nn_r = 2\n[problem]\nbeta = 10.0\nsymbols = [0, 3]\n\
                    [sweep]\nschemes = [\"nominal-slp\"]\n[run]\nseed = 7\nparallel = 4\n";
        let cfg = parse(text).unwrap();
        let embedded = cfg.to_toml();
        assert!(!embedded.contains("parallel"));
        let back = parse(&embedded).unwrap();
        assert_eq!(back.run.parallel, 1);
        assert_eq!(RunConfig { run: RunSection { parallel: 4, ..back.run.clone() }, ..back }, cfg);
    }

    #[test]
    fn explicit_channel_shape_is_checked() {
        let good = "[system]\nn_t = 2\nn_r = 1\n[problem]\nbeta = 1.0\n[problem.channel]\nre = [[1.0, 0.0]]\nim = [[0.0, 0.5]]\n";
        assert!(parse(good).is_ok());
        let bad = "[system]\nn_t = 2\nn_r = 1\n[problem]\nbeta = 1.0\n[problem.channel]\nre = [[1.0]]\nim = [[0.0, 0.5]]\n";
        let err = parse(bad).unwrap_err();
        assert_eq!(err.line, Some(7), "{err}");
    }
}
