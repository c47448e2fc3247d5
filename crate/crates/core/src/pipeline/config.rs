use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{load_bitext, BitextCorpus, LanguageTag, NormConfig};
use crate::error::{Error, Result};
use crate::generation::{FilterConfig, TransportConfig};
use crate::noising::NoiseConfig;
use crate::simjoin::JoinConfig;

pub const DEFAULT_GAMMA: f64 = 0.3;
pub const DEFAULT_BETA: f64 = 0.5;
pub const DEFAULT_TEMPERATURE: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub pivot_path: PathBuf,
    pub other_path: PathBuf,
    pub pivot_lang: LanguageTag,
    pub other_lang: LanguageTag,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// Reads a JSON manifest; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for entry in &mut manifest.entries {
            for p in [&mut entry.pivot_path, &mut entry.other_path] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.entries.first() else {
            return Err(Error::Config("manifest lists no corpora".into()));
        };
        let mut seen = std::collections::HashSet::new();
        for e in &self.entries {
            if e.pivot_lang != first.pivot_lang {
                return Err(Error::Config(format!(
                    "manifest mixes pivot languages {} and {}",
                    first.pivot_lang, e.pivot_lang
                )));
            }
            if e.other_lang == e.pivot_lang {
                return Err(Error::Config(format!("corpus {} pairs the pivot with itself", e.other_lang)));
            }
            if !seen.insert(e.other_lang.clone()) {
                return Err(Error::Config(format!("language {} appears twice in the manifest", e.other_lang)));
            }
        }
        Ok(())
    }

    pub fn pivot_lang(&self) -> &LanguageTag {
        &self.entries[0].pivot_lang
    }

    pub fn load_corpora(&self, norm: NormConfig) -> Result<Vec<BitextCorpus>> {
        use rayon::prelude::*;
        self.entries
            .par_iter()
            .map(|e| {
                load_bitext(
                    &e.pivot_path,
                    &e.other_path,
                    e.pivot_lang.clone(),
                    e.other_lang.clone(),
                    norm,
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    #[default]
    EditReplay,
    Http,
    Process,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub kind: GeneratorKind,
    /// Lexicon TSV per target language, for edit replay.
    pub lexicons: BTreeMap<String, PathBuf>,
    pub url: Option<String>,
    /// Per target language URL overrides.
    pub endpoints: BTreeMap<String, String>,
    /// Program and arguments of a generator speaking the line protocol on stdio.
    pub command: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub gamma: f64,
    pub beta: f64,
    pub temperature: f64,
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
    pub manifest: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Continue interrupted generation from the per-pair checkpoints.
    pub resume: bool,
    pub norm: NormConfig,
    pub join: JoinConfig,
    pub noise: NoiseConfig,
    pub filter: FilterConfig,
    pub transport: TransportConfig,
    pub generator: GeneratorConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            gamma: DEFAULT_GAMMA,
            beta: DEFAULT_BETA,
            temperature: DEFAULT_TEMPERATURE,
            seed: 0,
            jobs: 0,
            manifest: None,
            output_dir: PathBuf::from("eag-out"),
            resume: false,
            norm: NormConfig::default(),
            join: JoinConfig::default(),
            noise: NoiseConfig::default(),
            filter: FilterConfig::default(),
            transport: TransportConfig::default(),
            generator: GeneratorConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the configuration file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub gamma: Option<f64>,
    pub beta: Option<f64>,
    pub temperature: Option<f64>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub manifest: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl PipelineConfig {
    /// Parses a TOML configuration. Relative paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(m) = cfg.manifest.as_mut() {
            rebase(m);
        }
        rebase(&mut cfg.output_dir);
        for p in cfg.generator.lexicons.values_mut() {
            rebase(p);
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.gamma {
            self.gamma = v;
        }
        if let Some(v) = o.beta {
            self.beta = v;
        }
        if let Some(v) = o.temperature {
            self.temperature = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.jobs {
            self.jobs = v;
        }
        if let Some(v) = &o.manifest {
            self.manifest = Some(v.clone());
        }
        if let Some(v) = &o.output_dir {
            self.output_dir = v.clone();
        }
    }

    /// Join settings with the top-level `gamma` applied.
    pub fn join_config(&self) -> JoinConfig {
        JoinConfig {
            gamma: self.gamma,
            ..self.join.clone()
        }
    }

    /// Noise settings with the top-level `beta` and `seed` applied.
    pub fn noise_config(&self) -> NoiseConfig {
        NoiseConfig {
            beta: self.beta,
            seed: self.seed,
            ..self.noise.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.join_config().validate()?;
        self.noise_config().validate()?;
        if !(self.temperature >= 1.0) {
            return Err(Error::Config(format!("temperature must be >= 1, got {}", self.temperature)));
        }
        if self.filter.min_ratio > self.filter.max_ratio {
            return Err(Error::Config("filter min_ratio exceeds max_ratio".into()));
        }
        Ok(())
    }
}
