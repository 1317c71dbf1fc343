use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifiers::TreeConfig;
use crate::error::{Error, Result};
use crate::estimation::EmConfig;
use crate::freq::Smoothing;
use crate::metrics::DiscriminatorConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    IndepOverlap,
    MarginalInternal,
    MarginalExternal,
    LatentNb,
    Independent,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::IndepOverlap,
        Method::MarginalInternal,
        Method::MarginalExternal,
        Method::LatentNb,
        Method::Independent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::IndepOverlap => "indep_overlap",
            Method::MarginalInternal => "marginal_internal",
            Method::MarginalExternal => "marginal_external",
            Method::LatentNb => "latent_nb",
            Method::Independent => "independent",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }

    /// Stable index used for seed derivation.
    pub fn ordinal(self) -> u64 {
        self as u64
    }

    /// Everything except the independence baseline.
    pub fn is_proposed(self) -> bool {
        self != Method::Independent
    }
}

fn default_test_fraction() -> f64 {
    0.3
}

fn default_bootstrap() -> usize {
    1000
}

fn default_kl_alpha() -> f64 {
    0.5
}

/// One audit run. Relative paths are resolved against the directory of the
/// config file. Seeds nested in `em` and `discriminator` are ignored: every
/// stage seed derives from `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Output subdirectory name; defaults to the dataset file stem.
    #[serde(default)]
    pub dataset_name: Option<String>,
    pub dataset: PathBuf,
    pub discretization: PathBuf,
    /// Output subdirectory name; defaults to the separation file stem.
    #[serde(default)]
    pub separation_name: Option<String>,
    pub separation: PathBuf,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub em: EmConfig,
    #[serde(default)]
    pub smoothing: Smoothing,
    #[serde(default)]
    pub classifier: TreeConfig,
    #[serde(default)]
    pub discriminator: DiscriminatorConfig,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_kl_alpha")]
    pub kl_alpha: f64,
    /// Rows per synthetic table; defaults to the real test size.
    #[serde(default)]
    pub synthetic_size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    pub output: PathBuf,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c: ExperimentConfig = serde_json::from_str(&text)?;
        c.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(c)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn stem(p: &Path) -> String {
        p.file_stem()
            .map(|s| s.to_string_lossy().split('.').next().unwrap_or_default().to_string())
            .unwrap_or_default()
    }

    pub fn dataset_label(&self) -> String {
        self.dataset_name.clone().unwrap_or_else(|| Self::stem(&self.dataset))
    }

    pub fn separation_label(&self) -> String {
        self.separation_name.clone().unwrap_or_else(|| Self::stem(&self.separation))
    }

    /// `<output>/<dataset>/<separation>`
    pub fn run_dir(&self) -> PathBuf {
        self.resolve(&self.output).join(self.dataset_label()).join(self.separation_label())
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return Err(Error::Config("a method is listed twice".into()));
        }
        for p in [&self.dataset, &self.discretization, &self.separation] {
            let r = self.resolve(p);
            if !r.is_file() {
                return Err(Error::io(
                    &r,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "referenced file does not exist"),
                ));
            }
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!("test_fraction {} outside (0, 1)", self.test_fraction)));
        }
        if self.bootstrap == 0 {
            return Err(Error::Config("bootstrap needs at least one replicate".into()));
        }
        if self.synthetic_size == Some(0) {
            return Err(Error::Config("synthetic_size must be positive".into()));
        }
        if self.methods.contains(&Method::LatentNb) && self.em.k == 0 {
            return Err(Error::Config("latent_nb needs k >= 1".into()));
        }
        for name in [self.dataset_label(), self.separation_label()] {
            if name.is_empty() || name.contains(['/', '\\']) || name == ".." {
                return Err(Error::Config(format!("`{name}` is not a usable directory name")));
            }
        }
        Ok(())
    }

    /// Config as echoed into reports: everything except the output location.
    pub fn echo(&self) -> Result<serde_json::Value> {
        let mut v = serde_json::to_value(self)?;
        if let Some(m) = v.as_object_mut() {
            m.remove("output");
        }
        Ok(v)
    }
}
