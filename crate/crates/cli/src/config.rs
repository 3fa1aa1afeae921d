use std::fs;
use std::path::{Path, PathBuf};

use plangraph::backend::{BackendConfig, BackendKind};
use plangraph::embed::EmbedderConfig;
use plangraph::env::{MetricKind, TaskCorpus, World};
use plangraph::meta::MetaConfig;
use plangraph::rl_agent::RlConfig;
use plangraph::{Error, Result};
use serde::{Deserialize, Serialize};

/// One run: where the data lives, the retrieval knobs and the settings of
/// every stage. Read from a TOML file; relative paths are taken relative to
/// that file. Command line flags override individual fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Merge threshold δ.
    pub delta: f64,
    /// Number of start nodes and candidate paths.
    pub k: usize,
    pub metric: MetricKind,
    pub out: PathBuf,
    /// Drop the positive from the InfoNCE denominators.
    pub strict_paper_qpa: bool,
    pub world: Option<PathBuf>,
    /// A full corpus, split into support and query when those are not given.
    pub corpus: Option<PathBuf>,
    pub support_ratio: f64,
    pub support: Option<PathBuf>,
    pub query: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub bundle: Option<PathBuf>,
    pub embedder: EmbedderConfig,
    pub meta: MetaConfig,
    pub rl: RlConfig,
    pub backend: BackendConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            delta: 0.4,
            k: 3,
            metric: MetricKind::TokenF1,
            out: PathBuf::from("out"),
            strict_paper_qpa: false,
            world: None,
            corpus: None,
            support_ratio: 0.6,
            support: None,
            query: None,
            graph: None,
            bundle: None,
            embedder: EmbedderConfig::default(),
            meta: MetaConfig::default(),
            rl: RlConfig::default(),
            backend: BackendConfig::default(),
        }
    }
}

/// Flag values that win over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub delta: Option<f64>,
    pub k: Option<usize>,
    pub backend: Option<BackendKind>,
    pub noise: Option<f64>,
    pub metric: Option<MetricKind>,
    pub out: Option<PathBuf>,
    pub strict_paper_qpa: bool,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    /// Reads the file and makes every path in it absolute, so a resolved
    /// config written next to the outputs can be rerun from anywhere.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        let base = std::path::absolute(path.parent().unwrap_or(Path::new("")))?;
        config.rebase(&base);
        Ok(config)
    }

    /// The file named by `--config`, or the defaults rooted at the working
    /// directory.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out);
        for p in [&mut self.world, &mut self.corpus, &mut self.support, &mut self.query, &mut self.graph, &mut self.bundle]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    /// Applies flag overrides and copies the shared knobs (seed, K) into the
    /// stage configs, so the file cannot contradict itself.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.delta {
            self.delta = v;
        }
        if let Some(v) = o.k {
            self.k = v;
        }
        if let Some(v) = o.backend {
            self.backend.kind = v;
        }
        if let Some(v) = o.noise {
            self.backend.noise = v;
        }
        if let Some(v) = o.metric {
            self.metric = v;
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        self.strict_paper_qpa |= o.strict_paper_qpa;
        self.meta.seed = self.seed;
        self.rl.k = self.k;
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::Config(format!("delta must lie in [0, 1], got {}", self.delta)));
        }
        if self.k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        if !(self.support_ratio > 0.0 && self.support_ratio < 1.0) {
            return Err(Error::Config(format!("support_ratio must lie in (0, 1), got {}", self.support_ratio)));
        }
        self.embedder.validate()?;
        self.meta.validate()?;
        self.rl.validate()?;
        self.backend.validate()?;
        for p in [&self.world, &self.corpus, &self.support, &self.query, &self.graph, &self.bundle].into_iter().flatten()
        {
            if !p.exists() {
                return Err(Error::Config(format!("referenced path {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// Support and query sets: the two files if given, otherwise a seeded
    /// split of `corpus`.
    pub fn support_query(&self) -> Result<(TaskCorpus, TaskCorpus)> {
        match (&self.support, &self.query, &self.corpus) {
            (Some(s), Some(q), _) => Ok((TaskCorpus::read_jsonl(s)?, TaskCorpus::read_jsonl(q)?)),
            (_, _, Some(c)) => {
                plangraph::env::split_support_query(&TaskCorpus::read_jsonl(c)?, self.support_ratio, self.seed)
            }
            _ => Err(Error::Config("the config names neither support + query files nor a corpus".into())),
        }
    }

    pub fn support_set(&self) -> Result<TaskCorpus> {
        match &self.support {
            Some(s) => TaskCorpus::read_jsonl(s),
            None => Ok(self.support_query()?.0),
        }
    }

    pub fn query_set(&self) -> Result<TaskCorpus> {
        match &self.query {
            Some(q) => TaskCorpus::read_jsonl(q),
            None => Ok(self.support_query()?.1),
        }
    }

    pub fn load_world(&self) -> Result<Option<World>> {
        self.world.as_deref().map(World::load).transpose()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot render config: {e}")))
    }
}
