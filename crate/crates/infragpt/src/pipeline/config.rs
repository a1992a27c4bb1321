//! Pipeline configuration: one JSON file wiring endpoints, detector routes,
//! prompt fixtures, and runtime knobs together.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detection::DetectorRegistry;
use crate::error::{Error, Result};

/// How the pipeline is meant to run; the CLI subcommand has the final say.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Batch,
    Watch,
}

fn default_vlm_max_tokens() -> u32 {
    1024
}

fn default_max_repairs() -> u32 {
    2
}

fn default_concurrency() -> usize {
    8
}

fn default_inflight() -> usize {
    4
}

fn default_poll_interval() -> u64 {
    1000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Vision-language service URL, or "mock" to use the script file.
    pub vlm_endpoint: String,
    pub vlm_model: String,
    #[serde(default = "default_vlm_max_tokens")]
    pub vlm_max_tokens: u32,
    #[serde(default)]
    pub vlm_temperature: f64,
    pub detectors: DetectorRegistry,
    /// Paths below resolve relative to the config file's directory.
    pub screening_template: PathBuf,
    pub planning_template: PathBuf,
    pub fallback_actions: PathBuf,
    /// Canned responses for mocked endpoints; required if anything is "mock".
    #[serde(default)]
    pub script: Option<PathBuf>,
    #[serde(default = "default_max_repairs")]
    pub max_repairs: u32,
    #[serde(default = "default_concurrency")]
    pub concurrency_limit: usize,
    #[serde(default = "default_inflight")]
    pub inflight_per_endpoint: usize,
    /// Byte-identical runs: manifest timestamps, zero retry backoff,
    /// backend-reported latencies, scripted backends only.
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_poll_interval")]
    pub poll_interval_ms: u64,
    /// Optional scale for converting item sizes to meters downstream;
    /// carried through, never applied to stored pixel values.
    #[serde(default)]
    pub pixels_per_meter: Option<f64>,
}

impl PipelineConfig {
    /// Parse a config file, resolve its relative paths, and validate.
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("bad config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut self.screening_template);
        resolve(&mut self.planning_template);
        resolve(&mut self.fallback_actions);
        if let Some(script) = &mut self.script {
            resolve(script);
        }
        if let Some(out) = &mut self.output_path {
            resolve(out);
        }
    }

    /// Endpoints of every role, VLM first.
    fn endpoints(&self) -> [&str; 4] {
        [
            &self.vlm_endpoint,
            &self.detectors.routes.crack.endpoint,
            &self.detectors.routes.leak.endpoint,
            &self.detectors.routes.other.endpoint,
        ]
    }

    pub fn any_mocked(&self) -> bool {
        self.endpoints().contains(&"mock")
    }

    pub fn all_mocked(&self) -> bool {
        self.endpoints().iter().all(|e| *e == "mock")
    }

    pub fn validate(&self) -> Result<()> {
        if self.vlm_endpoint.is_empty() {
            return Err(Error::Config("vlm_endpoint must be set".into()));
        }
        if self.vlm_model.is_empty() {
            return Err(Error::Config("vlm_model must be set".into()));
        }
        if self.concurrency_limit < 1 {
            return Err(Error::Config("concurrency_limit must be at least 1".into()));
        }
        if self.max_repairs > 16 {
            return Err(Error::Config(format!(
                "max_repairs {} is unreasonably large (limit 16)",
                self.max_repairs
            )));
        }
        if self.poll_interval_ms == 0 {
            return Err(Error::Config("poll_interval_ms must be positive".into()));
        }
        self.detectors.validate()?;
        for (what, file) in [
            ("screening_template", &self.screening_template),
            ("planning_template", &self.planning_template),
            ("fallback_actions", &self.fallback_actions),
        ] {
            if !file.is_file() {
                return Err(Error::Config(format!("{what} {} does not exist", file.display())));
            }
        }
        if self.any_mocked() {
            match &self.script {
                Some(script) if script.is_file() => {}
                Some(script) => {
                    return Err(Error::Config(format!("script {} does not exist", script.display())))
                }
                None => {
                    return Err(Error::Config(
                        "an endpoint is \"mock\" but no script file is configured".into(),
                    ))
                }
            }
        }
        if self.deterministic && !self.all_mocked() {
            return Err(Error::Config(
                "deterministic mode requires every endpoint to be \"mock\"".into(),
            ));
        }
        Ok(())
    }
}
