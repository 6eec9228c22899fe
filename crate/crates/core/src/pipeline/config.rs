use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::Stage;
use crate::categorization::Aggregation;
use crate::corpus::{DateWindow, Leaning};
use crate::dri::Wave;
use crate::embedding::{BatchOptions, EmbeddingCache, EmbeddingProvider, HttpEmbedder, MockEmbedder, ReductionSpec};
use crate::error::{Error, Result};
use crate::generation::{
    ChatClient, GenerationOptions, HttpChatClient, MockGenerator, PolicyScope, DEFAULT_DEDUP_THRESHOLD,
};
use crate::hashing::sha256_hex;

pub const ENV_EMBED_URL: &str = "DRIFORGE_EMBED_URL";
pub const ENV_EMBED_KEY: &str = "DRIFORGE_EMBED_KEY";
pub const ENV_LLM_URL: &str = "DRIFORGE_LLM_URL";
pub const ENV_LLM_KEY: &str = "DRIFORGE_LLM_KEY";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub articles: Option<PathBuf>,
    pub keywords: Option<PathBuf>,
    pub leanings: Option<PathBuf>,
    pub anchors: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub exemplars: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSettings {
    pub from: NaiveDate,
    pub to: NaiveDate,
    pub strict: bool,
}

impl Default for IngestSettings {
    fn default() -> Self {
        IngestSettings {
            from: NaiveDate::from_ymd_opt(2018, 1, 1).unwrap(),
            to: NaiveDate::from_ymd_opt(2024, 8, 29).unwrap(),
            strict: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSettings {
    pub provider: ProviderKind,
    pub url: Option<String>,
    pub model: String,
    pub dim: usize,
    pub batch_size: usize,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub parallelism: usize,
    /// Secret; only ever read from the environment.
    #[serde(skip)]
    pub api_key: Option<String>,
}

impl Default for EmbeddingSettings {
    fn default() -> Self {
        EmbeddingSettings {
            provider: ProviderKind::Mock,
            url: None,
            model: "paraphrase-multilingual-MiniLM-L12-v2".into(),
            dim: crate::embedding::DEFAULT_DIM,
            batch_size: 64,
            max_attempts: 3,
            backoff_ms: 500,
            parallelism: 4,
            api_key: None,
        }
    }
}

impl EmbeddingSettings {
    pub fn provider(&self) -> Result<Box<dyn EmbeddingProvider>> {
        Ok(match self.provider {
            ProviderKind::Mock => Box::new(MockEmbedder::new(self.dim)),
            ProviderKind::Http => {
                let url = self.url.as_deref().ok_or_else(|| {
                    Error::Config(format!("embedding.url or {ENV_EMBED_URL} is required for the http provider"))
                })?;
                Box::new(HttpEmbedder::new(url, self.api_key.clone(), &self.model, self.dim))
            }
        })
    }

    pub fn batch_options(&self) -> BatchOptions {
        BatchOptions {
            batch_size: self.batch_size,
            max_attempts: self.max_attempts,
            backoff: Duration::from_millis(self.backoff_ms),
            parallelism: self.parallelism,
        }
    }

    /// Opens the durable cache under `cache_dir`, or an in-memory one.
    pub fn cache(&self, provider: &dyn EmbeddingProvider, cache_dir: Option<&Path>) -> Result<EmbeddingCache> {
        match cache_dir {
            Some(dir) => {
                let name: String = format!("{}-{}", provider.provider_id(), provider.model_id())
                    .chars()
                    .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
                    .collect();
                EmbeddingCache::open(
                    &dir.join(format!("{name}.emb")),
                    provider.provider_id(),
                    provider.model_id(),
                    provider.dim(),
                )
            }
            None => Ok(EmbeddingCache::in_memory(provider.provider_id(), provider.model_id(), provider.dim())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CategorizeSettings {
    /// `none`, `pca`, `pca:<dim>` or `import:<path>`.
    pub reduction: String,
    pub aggregation: Aggregation,
}

impl Default for CategorizeSettings {
    fn default() -> Self {
        CategorizeSettings {
            reduction: "none".into(),
            aggregation: Aggregation::Max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectSettings {
    pub k: usize,
    pub leanings: Vec<Leaning>,
}

impl Default for SelectSettings {
    fn default() -> Self {
        SelectSettings {
            k: 500,
            leanings: Leaning::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSettings {
    pub provider: ProviderKind,
    pub url: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub statement_count: usize,
    pub policy_scope: PolicyScope,
    pub runs: usize,
    pub exemplars_per_prompt: usize,
    pub parallelism: usize,
    pub max_attempts: u32,
    pub transport_attempts: u32,
    pub backoff_ms: u64,
    pub strict: bool,
    pub dedup_threshold: f64,
    #[serde(skip)]
    pub api_key: Option<String>,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        GenerationSettings {
            provider: ProviderKind::Mock,
            url: None,
            model: "gpt-4o".into(),
            temperature: 0.2,
            statement_count: 5,
            policy_scope: PolicyScope::General,
            runs: 1,
            exemplars_per_prompt: 25,
            parallelism: 4,
            max_attempts: 3,
            transport_attempts: 3,
            backoff_ms: 500,
            strict: false,
            dedup_threshold: DEFAULT_DEDUP_THRESHOLD,
            api_key: None,
        }
    }
}

impl GenerationSettings {
    pub fn client(&self) -> Result<Box<dyn ChatClient>> {
        Ok(match self.provider {
            ProviderKind::Mock => Box::new(MockGenerator::new()),
            ProviderKind::Http => {
                let url = self.url.as_deref().ok_or_else(|| {
                    Error::Config(format!("generation.url or {ENV_LLM_URL} is required for the http provider"))
                })?;
                Box::new(HttpChatClient::new(url, self.api_key.clone(), &self.model))
            }
        })
    }

    pub fn options(&self) -> GenerationOptions {
        GenerationOptions {
            temperature: self.temperature,
            max_attempts: self.max_attempts,
            transport_attempts: self.transport_attempts,
            backoff: Duration::from_millis(self.backoff_ms),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReviewSettings {
    /// Filled-in review sheet. Without it the exported defaults apply.
    pub decisions: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreSettings {
    /// Instrument file. Without it the review stage's instrument is used.
    pub instrument: Option<PathBuf>,
    pub responses: BTreeMap<Wave, PathBuf>,
    pub permissive_missing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSettings {
    pub reference: Option<PathBuf>,
    pub judgments: Option<PathBuf>,
    pub candidates: usize,
}

impl Default for ValidateSettings {
    fn default() -> Self {
        ValidateSettings {
            reference: None,
            judgments: None,
            candidates: crate::validation::DEFAULT_CANDIDATES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSettings {
    pub histogram_bins: usize,
    pub overlap_ks: Vec<usize>,
}

impl Default for ReportSettings {
    fn default() -> Self {
        ReportSettings {
            histogram_bins: 100,
            overlap_ks: vec![10, 100, 500],
        }
    }
}

/// Declarative run configuration, read from TOML. Relative paths are
/// resolved against the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub paths: Paths,
    pub ingest: IngestSettings,
    pub embedding: EmbeddingSettings,
    pub categorize: CategorizeSettings,
    pub select: SelectSettings,
    pub generation: GenerationSettings,
    pub review: ReviewSettings,
    pub score: ScoreSettings,
    pub validate: ValidateSettings,
    pub report: ReportSettings,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            output_dir: PathBuf::from("out"),
            paths: Paths::default(),
            ingest: IngestSettings::default(),
            embedding: EmbeddingSettings::default(),
            categorize: CategorizeSettings::default(),
            select: SelectSettings::default(),
            generation: GenerationSettings::default(),
            review: ReviewSettings::default(),
            score: ScoreSettings::default(),
            validate: ValidateSettings::default(),
            report: ReportSettings::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

fn env(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.is_empty())
}

impl RunConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.check()?;
        Ok(cfg)
    }

    /// Loads a config file and applies environment overrides.
    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::io::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut cfg = Self::from_toml_str(&text, &base)?;
        cfg.apply_env();
        Ok(cfg)
    }

    pub fn apply_env(&mut self) {
        if let Some(url) = env(ENV_EMBED_URL) {
            self.embedding.url = Some(url);
        }
        self.embedding.api_key = env(ENV_EMBED_KEY);
        if let Some(url) = env(ENV_LLM_URL) {
            self.generation.url = Some(url);
        }
        self.generation.api_key = env(ENV_LLM_KEY);
    }

    /// Range checks that do not touch the file system.
    pub fn check(&self) -> Result<()> {
        if self.select.k == 0 {
            return Err(Error::Config("select.k must be at least 1".into()));
        }
        let t = self.generation.dedup_threshold;
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::Config(format!("generation.dedup_threshold {t} outside (0, 1]")));
        }
        if self.generation.statement_count == 0 || self.generation.runs == 0 {
            return Err(Error::Config("generation.statement_count and generation.runs must be at least 1".into()));
        }
        if self.report.histogram_bins == 0 || self.report.overlap_ks.contains(&0) {
            return Err(Error::Config("report bins and overlap ks must be at least 1".into()));
        }
        if self.select.leanings.is_empty() {
            return Err(Error::Config("select.leanings must not be empty".into()));
        }
        DateWindow::new(self.ingest.from, self.ingest.to)?;
        ReductionSpec::parse(&self.categorize.reduction)?;
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.output_dir().join(stage.as_str())
    }

    pub fn cache_dir(&self) -> Option<PathBuf> {
        self.paths.cache_dir.as_deref().map(|p| self.resolve(p))
    }

    /// A configured input path, resolved; errors name the missing key.
    pub fn required(&self, key: &str, value: Option<&PathBuf>) -> Result<PathBuf> {
        value
            .map(|p| self.resolve(p))
            .ok_or_else(|| Error::Config(format!("`{key}` must be set for this stage")))
    }

    pub fn reduction(&self) -> Result<ReductionSpec> {
        let mut spec = ReductionSpec::parse(&self.categorize.reduction)?;
        if let Some(p) = spec.import_path.take() {
            spec.import_path = Some(self.resolve(&p));
        }
        Ok(spec)
    }

    /// Input files a stage reads from outside the output directory.
    pub fn stage_inputs(&self, stage: Stage) -> Vec<(&'static str, Option<PathBuf>)> {
        let r = |p: &Option<PathBuf>| p.as_deref().map(|p| self.resolve(p));
        match stage {
            Stage::Ingest => vec![
                ("paths.articles", r(&self.paths.articles)),
                ("paths.keywords", r(&self.paths.keywords)),
                ("paths.leanings", r(&self.paths.leanings)),
            ],
            Stage::Embed | Stage::Select => Vec::new(),
            Stage::Categorize => {
                let mut v = vec![("paths.anchors", r(&self.paths.anchors))];
                if let Ok(spec) = self.reduction() {
                    if let Some(p) = spec.import_path {
                        v.push(("categorize.reduction", Some(p)));
                    }
                }
                v
            }
            Stage::Generate => {
                let mut v = vec![
                    ("paths.anchors", r(&self.paths.anchors)),
                    ("paths.templates", r(&self.paths.templates)),
                ];
                if self.paths.exemplars.is_some() {
                    v.push(("paths.exemplars", r(&self.paths.exemplars)));
                }
                v
            }
            Stage::Review => self
                .review
                .decisions
                .as_ref()
                .map(|p| vec![("review.decisions", Some(self.resolve(p)))])
                .unwrap_or_default(),
            Stage::Score => {
                let mut v: Vec<(&'static str, Option<PathBuf>)> = Vec::new();
                if self.score.instrument.is_some() {
                    v.push(("score.instrument", r(&self.score.instrument)));
                }
                if self.score.responses.is_empty() {
                    v.push(("score.responses", None));
                }
                for p in self.score.responses.values() {
                    v.push(("score.responses", Some(self.resolve(p))));
                }
                v
            }
            Stage::Validate => {
                let mut v = vec![("validate.reference", r(&self.validate.reference))];
                if self.validate.judgments.is_some() {
                    v.push(("validate.judgments", r(&self.validate.judgments)));
                }
                v
            }
            Stage::Report => Vec::new(),
        }
    }

    /// Checks that every input file the stage needs is configured and
    /// exists. The error names the offending path.
    pub fn validate_for(&self, stage: Stage) -> Result<()> {
        self.check()?;
        for (key, path) in self.stage_inputs(stage) {
            let path = path.ok_or_else(|| Error::Config(format!("`{key}` must be set for stage `{}`", stage.as_str())))?;
            if !path.exists() {
                return Err(Error::io(
                    path,
                    std::io::Error::new(std::io::ErrorKind::NotFound, format!("{key} not found")),
                ));
            }
        }
        Ok(())
    }

    /// Hash of the settings as written (paths unresolved, secrets and
    /// the output directory excluded), so the same experiment laid out in
    /// two directories hashes the same.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let text = toml::to_string(&c).expect("config serializes");
        sha256_hex(text)
    }

    pub fn window(&self) -> Result<DateWindow> {
        DateWindow::new(self.ingest.from, self.ingest.to)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_sections() {
        let cfg = RunConfig::from_toml_str("output_dir = \"o\"\n", Path::new("/tmp/x")).unwrap();
        assert_eq!(cfg.select.k, 500);
        assert_eq!(cfg.generation.temperature, 0.2);
        assert_eq!(cfg.generation.dedup_threshold, 0.95);
        assert_eq!(cfg.generation.policy_scope, PolicyScope::General);
        assert_eq!(cfg.output_dir(), PathBuf::from("/tmp/x/o"));
    }

    #[test]
    fn rejects_bad_ranges_and_unknown_keys() {
        let base = Path::new(".");
        assert!(RunConfig::from_toml_str("[select]\nk = 0\n", base).is_err());
        assert!(RunConfig::from_toml_str("[generation]\ndedup_threshold = 0.0\n", base).is_err());
        assert!(RunConfig::from_toml_str("[generation]\ndedup_threshold = 1.5\n", base).is_err());
        assert!(RunConfig::from_toml_str("[select]\nkk = 3\n", base).is_err());
        assert!(RunConfig::from_toml_str("[generation]\ndedup_threshold = 1.0\n", base).is_ok());
    }

    #[test]
    fn hash_ignores_output_dir_and_secrets() {
        let mut a = RunConfig::default();
        let mut b = RunConfig::default();
        b.output_dir = "elsewhere".into();
        b.embedding.api_key = Some("secret".into());
        assert_eq!(a.hash(), b.hash());
        a.select.k = 10;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn missing_stage_input_names_path() {
        let mut cfg = RunConfig::default();
        cfg.base_dir = PathBuf::from("/nonexistent-dir");
        cfg.score.responses.insert(Wave::Pre, "answers.csv".into());
        let err = cfg.validate_for(Stage::Score).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/answers.csv"));
        assert!(RunConfig::default().validate_for(Stage::Score).is_err());
    }
}
