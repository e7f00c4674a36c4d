//! Run configuration: a sectioned TOML file plus command-line overrides.
//!
//! ```toml
//! seed = 7
//! threads = 2
//! out = "results"
//! inputs = ["a.png", "b.png"]
//!
//! [fit]
//! iterations = 600
//!
//! [purify]
//! coarse_levels = 1
//! [purify.fit]
//! max_rank = 32
//!
//! [analyze]
//! kinds = ["mog", "beta"]
//!
//! [bench]
//! methods = ["putt", "tnp"]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TnpError};
use crate::metrics::{NoiseKind, DEFAULT_BINS, STRUCTURED_EPS};
use crate::putt::FitConfig;
use crate::tnp::PurifyConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub kinds: Vec<NoiseKind>,
    /// Side length of the square noise field.
    pub size: usize,
    pub levels: usize,
    pub bins: usize,
    pub match_snr: bool,
    /// Amplitude of the structured kind.
    pub eps: f64,
    /// Write one SVG histogram per kind, method and level.
    pub histograms: bool,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            kinds: vec![NoiseKind::Gaussian, NoiseKind::Mog, NoiseKind::Beta, NoiseKind::Uniform],
            size: 256,
            levels: 3,
            bins: DEFAULT_BINS,
            match_snr: true,
            eps: STRUCTURED_EPS,
            histograms: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "tt-gd")]
    TtGd,
    #[serde(rename = "qtt-gd")]
    QttGd,
    #[serde(rename = "putt")]
    Putt,
    #[serde(rename = "tnp")]
    Tnp,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::TtGd, Method::QttGd, Method::Putt, Method::Tnp];

    /// Label used in tables.
    pub fn label(self) -> &'static str {
        match self {
            Method::TtGd => "TT(gd)",
            Method::QttGd => "QTT(gd)",
            Method::Putt => "PuTT",
            Method::Tnp => "TNP",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    /// Perturbation added to each clean input when no perturbed images are
    /// supplied.
    pub noise: NoiseKind,
    pub eps: f64,
    pub match_snr: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            noise: NoiseKind::Structured,
            eps: STRUCTURED_EPS,
            match_snr: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; it replaces the seeds of every section.
    pub seed: u64,
    pub threads: usize,
    pub out: PathBuf,
    pub inputs: Vec<PathBuf>,
    /// Clean references paired with `inputs` (purify), or perturbed
    /// counterparts of `inputs` (bench). Empty when absent.
    pub pairs: Vec<PathBuf>,
    pub fit: FitConfig,
    pub purify: PurifyConfig,
    pub analyze: AnalyzeConfig,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 1,
            out: PathBuf::from("out"),
            inputs: Vec::new(),
            pairs: Vec::new(),
            fit: FitConfig::default(),
            purify: PurifyConfig::default(),
            analyze: AnalyzeConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| TnpError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| TnpError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Propagates the master seed and checks every section.
    pub fn resolve(mut self) -> Result<Self> {
        self.fit.seed = self.seed;
        self.purify.fit.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TnpError::Config(m.into()));
        if self.threads == 0 {
            return bad("threads must be at least 1");
        }
        if !self.pairs.is_empty() && self.pairs.len() != self.inputs.len() {
            return bad("pairs must be empty or match inputs one to one");
        }
        self.fit.validate()?;
        self.purify.validate()?;
        let a = &self.analyze;
        if a.kinds.is_empty() {
            return bad("analyze.kinds is empty");
        }
        if a.bins == 0 {
            return bad("analyze.bins must be positive");
        }
        if a.levels >= 30 || a.size >> a.levels < 2 || a.size % (1 << a.levels) != 0 {
            return bad("analyze.size must be divisible by 2^levels with at least 2 pixels left");
        }
        if !(a.eps.is_finite() && a.eps > 0.0) {
            return bad("analyze.eps must be positive");
        }
        let b = &self.bench;
        if b.methods.is_empty() {
            return bad("bench.methods is empty");
        }
        for (i, m) in b.methods.iter().enumerate() {
            if b.methods[..i].contains(m) {
                return bad("bench.methods has duplicates");
            }
        }
        if !(b.eps.is_finite() && b.eps > 0.0) {
            return bad("bench.eps must be positive");
        }
        Ok(())
    }
}
