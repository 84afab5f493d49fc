use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::generators::GeneratorSpec;
use crate::error::{invalid, Error, Result};
use crate::hst::{PotentialVariant, VerifyLevel};

/// Overrides `output.dir`.
pub const OUT_DIR_ENV: &str = "KSLAB_OUT_DIR";
/// Overrides `workers`.
pub const WORKERS_ENV: &str = "KSLAB_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Fractional weighted paging.
    Paging,
    /// k-server on a complete τ-adic HST or a tree file.
    Kserver,
    /// k-server on a random Euclidean metric through the dynamic embedding.
    Pipeline,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Paging => "paging",
            Self::Kserver => "kserver",
            Self::Pipeline => "pipeline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RequestSection {
    /// See [`GeneratorSpec`] for the accepted strings.
    pub generator: String,
    pub count: usize,
}

impl Default for RequestSection {
    fn default() -> Self {
        Self { generator: "uniform".into(), count: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PagingSection {
    pub n: usize,
    pub k: usize,
    /// `uniform`, `zipf`, `zipf:<s>` or a file with one weight per line.
    pub weights: String,
    pub delta: Option<f64>,
}

impl Default for PagingSection {
    fn default() -> Self {
        Self { n: 20, k: 5, weights: "uniform".into(), delta: None }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KServerSection {
    pub k: usize,
    /// A tree file; when absent a complete tree is built from the fields
    /// below.
    pub tree: Option<PathBuf>,
    pub branching: usize,
    pub height: usize,
    pub tau: f64,
    /// Weight of the edges below the root.
    pub top_weight: f64,
    pub variant: String,
    pub delta: Option<f64>,
    pub eps: Option<f64>,
}

impl Default for KServerSection {
    fn default() -> Self {
        Self {
            k: 3,
            tree: None,
            branching: 2,
            height: 4,
            tau: 2.0,
            top_weight: 8.0,
            variant: "weighted".into(),
            delta: None,
            eps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSection {
    pub points: usize,
    pub dim: usize,
    pub k: usize,
    pub tau: u32,
    pub leaf_cap: usize,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self { points: 12, dim: 2, k: 3, tau: 4, leaf_cap: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// File stem for `<name>.csv`, `<name>_timing.csv` and `<name>.txt`.
    pub name: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), name: "experiment".into() }
    }
}

/// A whole experiment as read from TOML. Only the section matching
/// `algorithm` is used.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub verify: String,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub requests: RequestSection,
    #[serde(default)]
    pub paging: PagingSection,
    #[serde(default)]
    pub kserver: KServerSection,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    /// A config with default sections.
    pub fn new(algorithm: Algorithm, seeds: Vec<u64>) -> Self {
        Self {
            algorithm,
            seeds,
            verify: "none".into(),
            workers: None,
            requests: RequestSection::default(),
            paging: PagingSection::default(),
            kserver: KServerSection::default(),
            pipeline: PipelineSection::default(),
            output: OutputSection::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Applies the environment overrides for the output directory and the
    /// worker count.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(dir) = std::env::var(OUT_DIR_ENV) {
            self.output.dir = PathBuf::from(dir);
        }
        if let Ok(w) = std::env::var(WORKERS_ENV) {
            let w: usize = w.parse().map_err(|_| Error::Parse(format!("{WORKERS_ENV} must be a positive integer")))?;
            if w == 0 {
                return invalid(format!("{WORKERS_ENV} must be positive"));
            }
            self.workers = Some(w);
        }
        Ok(())
    }

    pub fn verify_level(&self) -> Result<VerifyLevel> {
        if self.verify.is_empty() {
            Ok(VerifyLevel::None)
        } else {
            self.verify.parse()
        }
    }

    pub fn generator(&self) -> Result<GeneratorSpec> {
        self.requests.generator.parse()
    }

    pub fn variant(&self) -> Result<PotentialVariant> {
        self.kserver.variant.parse()
    }

    /// `k` of the selected algorithm.
    pub fn k(&self) -> usize {
        match self.algorithm {
            Algorithm::Paging => self.paging.k,
            Algorithm::Kserver => self.kserver.k,
            Algorithm::Pipeline => self.pipeline.k,
        }
    }

    pub fn set_k(&mut self, k: usize) {
        match self.algorithm {
            Algorithm::Paging => self.paging.k = k,
            Algorithm::Kserver => self.kserver.k = k,
            Algorithm::Pipeline => self.pipeline.k = k,
        }
    }

    /// Checks everything that can be checked without building instances.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return invalid("the seed list is empty");
        }
        if self.workers == Some(0) {
            return invalid("workers must be positive");
        }
        self.verify_level()?;
        let gen = self.generator()?;
        if self.requests.count == 0 && !matches!(gen, GeneratorSpec::Trace(_)) {
            return invalid("requests.count must be positive");
        }
        if self.k() == 0 {
            return invalid("k must be positive");
        }
        match self.algorithm {
            Algorithm::Paging => {
                if self.paging.k >= self.paging.n {
                    return invalid("paging needs k < n");
                }
            }
            Algorithm::Kserver => {
                self.variant()?;
            }
            Algorithm::Pipeline => {
                if self.pipeline.k > self.pipeline.points {
                    return invalid("pipeline needs k ≤ points");
                }
                if self.pipeline.tau < 4 {
                    return invalid("pipeline needs τ ≥ 4");
                }
                if gen.is_adaptive() {
                    return invalid("the pipeline does not support adaptive requests");
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_minimal_document() {
        let c = ExperimentConfig::parse("algorithm = \"paging\"\nseeds = [1, 2]\n").unwrap();
        assert_eq!(c.algorithm, Algorithm::Paging);
        assert_eq!(c.paging, PagingSection::default());
        assert_eq!(c.verify_level().unwrap(), VerifyLevel::None);
    }

    #[test]
    fn parses_sections() {
        let text = r#"
algorithm = "kserver"
seeds = [0]
verify = "full"
[requests]
generator = "zipf:1.2"
count = 40
[kserver]
k = 2
height = 3
variant = "cardinality"
[output]
dir = "results"
"#;
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.k(), 2);
        assert_eq!(c.kserver.height, 3);
        assert_eq!(c.generator().unwrap(), GeneratorSpec::Zipf { exponent: 1.2 });
        assert_eq!(c.variant().unwrap(), PotentialVariant::Cardinality);
        assert_eq!(c.output.dir, PathBuf::from("results"));
        assert_eq!(c.output.name, "experiment");
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(ExperimentConfig::parse("algorithm = \"paging\"\nseeds = []\n").is_err());
        assert!(ExperimentConfig::parse("algorithm = \"nope\"\nseeds = [1]\n").is_err());
        assert!(ExperimentConfig::parse("algorithm = \"paging\"\nseeds = [1]\nverify = \"most\"\n").is_err());
        assert!(ExperimentConfig::parse("algorithm = \"paging\"\nseeds = [1]\n[paging]\nn = 3\nk = 3\n").is_err());
        assert!(ExperimentConfig::parse("algorithm = \"paging\"\nseeds = [1]\ncolour = 1\n").is_err());
    }
}
