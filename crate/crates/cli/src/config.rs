use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use cirag::llm::{HttpBackend, HttpConfig, LlmBackend, ReplayBackend};
use cirag::PipelineConfig;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Http,
    Replay,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendSection {
    pub kind: BackendKind,
    /// Replay script (JSON) used when `kind = "replay"`.
    pub replay_script: Option<PathBuf>,
    pub http: HttpConfig,
}

/// Contents of the `--config` TOML file. Keys mirror the engine's config types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub pipeline: PipelineConfig,
    pub backend: BackendSection,
    pub workers: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            backend: BackendSection::default(),
            workers: 4,
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            None => Config::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let cfg: Config = toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
                // relative script paths resolve against the config file
                let mut cfg = cfg;
                if let (Some(script), Some(dir)) = (&cfg.backend.replay_script, p.parent()) {
                    if script.is_relative() {
                        cfg.backend.replay_script = Some(dir.join(script));
                    }
                }
                cfg
            }
        };
        if cfg.pipeline.max_iterations == 0 {
            bail!("pipeline.max_iterations must be at least 1");
        }
        cfg.pipeline.retriever.validate()?;
        cfg.workers = cfg.workers.max(1);
        Ok(cfg)
    }

    pub fn apply_overrides(&mut self, workers: Option<usize>, replay: Option<&Path>, max_steps: Option<usize>) -> Result<()> {
        if let Some(w) = workers {
            self.workers = w.max(1);
        }
        if let Some(r) = replay {
            self.backend.kind = BackendKind::Replay;
            self.backend.replay_script = Some(r.to_owned());
        }
        if let Some(l) = max_steps {
            if l == 0 {
                bail!("--max-steps must be at least 1");
            }
            self.pipeline.max_iterations = l;
        }
        self.pipeline.parallel_extraction = self.workers > 1;
        self.backend.http.max_in_flight = self.backend.http.max_in_flight.min(self.workers);
        Ok(())
    }

    pub fn backend(&self) -> Result<Arc<dyn LlmBackend>> {
        Ok(match self.backend.kind {
            BackendKind::Http => Arc::new(HttpBackend::new(self.backend.http.clone())?),
            BackendKind::Replay => {
                let path = self
                    .backend
                    .replay_script
                    .as_deref()
                    .context("backend.kind = \"replay\" needs backend.replay_script or --replay")?;
                Arc::new(ReplayBackend::load(path).with_context(|| format!("loading replay script {}", path.display()))?)
            }
        })
    }
}
