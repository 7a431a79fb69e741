//! TOML application configuration with environment-variable interpolation.
//!
//! `${VAR}` patterns anywhere in the file are replaced from the environment
//! before parsing, so secrets and host names stay out of committed configs.
//! Each backend is either `script = "replay.jsonl"` (deterministic offline
//! replay) or an HTTP endpoint (`base_url` + `model`); command-line flags
//! override file values.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use prmkit::backends::{
    BackendConfig, CritiqueOptions, HttpBackend, ModelClient, PrmOutputParser, SamplingParams,
    ScriptedBackend,
};
use prmkit::domain::PromptTemplate;
use prmkit::mc_label::LabelWorld;
use prmkit::refined_bon::BonWorld;
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize, Default)]
pub struct AppConfig {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub backends: BackendsSection,
    #[serde(default)]
    pub templates: TemplatesSection,
    #[serde(default)]
    pub prm: PrmSection,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RunSection {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_aggregation")]
    pub aggregation: String,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_run_dir")]
    pub run_dir: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub top_p: Option<f64>,
    #[serde(default)]
    pub max_tokens: Option<u32>,
}

fn default_n() -> usize {
    8
}
fn default_aggregation() -> String {
    "avg".into()
}
fn default_concurrency() -> usize {
    4
}
fn default_m() -> usize {
    8
}
fn default_run_dir() -> String {
    "runs".into()
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            n: default_n(),
            aggregation: default_aggregation(),
            concurrency: default_concurrency(),
            m: default_m(),
            run_dir: default_run_dir(),
            seed: None,
            temperature: None,
            top_p: None,
            max_tokens: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
pub struct BackendsSection {
    pub policy: Option<BackendEntry>,
    pub prm: Option<BackendEntry>,
    pub completer: Option<BackendEntry>,
    pub judge: Option<BackendEntry>,
}

/// One backend: a scripted replay file or an HTTP endpoint.
#[derive(Debug, Clone, Deserialize)]
pub struct BackendEntry {
    #[serde(default)]
    pub script: Option<PathBuf>,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub retry_budget: u32,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub request_logprobs: bool,
    #[serde(default = "default_top_logprobs")]
    pub top_logprobs: u8,
}

fn default_timeout() -> u64 {
    120
}
fn default_retries() -> u32 {
    2
}
fn default_in_flight() -> usize {
    4
}
fn default_top_logprobs() -> u8 {
    5
}

impl BackendEntry {
    /// Build the bounded client for this backend, relative paths resolved
    /// against the config file's directory.
    pub fn build(&self, name: &str, config_dir: &Path) -> Result<Arc<ModelClient>> {
        if let Some(script) = &self.script {
            let path = if script.is_absolute() {
                script.clone()
            } else {
                config_dir.join(script)
            };
            let backend = ScriptedBackend::from_path(&path)
                .with_context(|| format!("backend `{name}`: loading script {path:?}"))?;
            return Ok(Arc::new(ModelClient::new(
                Arc::new(backend),
                self.max_in_flight,
                self.retry_budget,
            )));
        }
        let (Some(base_url), Some(model)) = (&self.base_url, &self.model) else {
            bail!("backend `{name}` needs either `script` or `base_url` + `model`");
        };
        let backend = HttpBackend::new(BackendConfig {
            base_url: base_url.clone(),
            model: model.clone(),
            auth_env: self.auth_env.clone(),
            timeout_secs: self.timeout_secs,
            retry_budget: self.retry_budget,
            max_in_flight: self.max_in_flight,
            request_logprobs: self.request_logprobs,
            top_logprobs: self.top_logprobs,
        })
        .with_context(|| format!("backend `{name}`"))?;
        Ok(Arc::new(ModelClient::new(
            Arc::new(backend),
            self.max_in_flight,
            self.retry_budget,
        )))
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
pub struct TemplatesSection {
    pub multichoice: Option<PathBuf>,
    pub freeform: Option<PathBuf>,
    pub critique: Option<PathBuf>,
    pub judge: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize, Default)]
pub struct PrmSection {
    /// Critique one step per request instead of the whole solution at once.
    #[serde(default)]
    pub per_step: bool,
}

/// Replace `${VAR}` with the environment value; unset variables are an error.
pub fn interpolate_env(text: &str) -> Result<String> {
    let re = regex::Regex::new(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}").expect("static regex");
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for caps in re.captures_iter(text) {
        let whole = caps.get(0).expect("match");
        let var = &caps[1];
        let value = std::env::var(var)
            .with_context(|| format!("config references unset environment variable `{var}`"))?;
        out.push_str(&text[last..whole.start()]);
        out.push_str(&value);
        last = whole.end();
    }
    out.push_str(&text[last..]);
    Ok(out)
}

pub struct LoadedConfig {
    pub config: AppConfig,
    pub dir: PathBuf,
    /// Raw (interpolated) text for the run-config snapshot.
    pub snapshot: toml::Value,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {path:?}"))?;
    let text = interpolate_env(&text)?;
    let config: AppConfig = toml::from_str(&text).context("parsing config")?;
    let snapshot: toml::Value = toml::from_str(&text).context("parsing config")?;
    let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    Ok(LoadedConfig {
        config,
        dir,
        snapshot,
    })
}

fn load_template(path: &Path) -> Result<PromptTemplate> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading template {path:?}"))?;
    let template: PromptTemplate =
        toml::from_str(&text).with_context(|| format!("parsing template {path:?}"))?;
    template
        .validate()
        .with_context(|| format!("template {path:?}"))?;
    Ok(template)
}

fn template_or_default(
    entry: &Option<PathBuf>,
    config_dir: &Path,
    default: PromptTemplate,
) -> Result<PromptTemplate> {
    match entry {
        Some(p) => {
            let path = if p.is_absolute() {
                p.clone()
            } else {
                config_dir.join(p)
            };
            load_template(&path)
        }
        None => Ok(default),
    }
}

impl LoadedConfig {
    pub fn sampling(&self, seed: Option<u64>) -> SamplingParams {
        let mut p = SamplingParams::default();
        if let Some(t) = self.config.run.temperature {
            p.temperature = t;
        }
        if let Some(t) = self.config.run.top_p {
            p.top_p = t;
        }
        if let Some(t) = self.config.run.max_tokens {
            p.max_tokens = t;
        }
        p.seed = seed.or(self.config.run.seed);
        p
    }

    pub fn bon_world(&self) -> Result<BonWorld> {
        let policy = self
            .config
            .backends
            .policy
            .as_ref()
            .context("config is missing [backends.policy]")?
            .build("policy", &self.dir)?;
        let prm = self
            .config
            .backends
            .prm
            .as_ref()
            .context("config is missing [backends.prm]")?
            .build("prm", &self.dir)?;
        let mut world = BonWorld::new(policy, prm);
        world.multichoice_template = template_or_default(
            &self.config.templates.multichoice,
            &self.dir,
            PromptTemplate::default_multichoice(),
        )?;
        world.freeform_template = template_or_default(
            &self.config.templates.freeform,
            &self.dir,
            PromptTemplate::default_freeform(),
        )?;
        world.critique_template = template_or_default(
            &self.config.templates.critique,
            &self.dir,
            PromptTemplate::default_critique(),
        )?;
        world.parser = Arc::new(PrmOutputParser::default());
        world.critique_opts = CritiqueOptions {
            per_step: self.config.prm.per_step,
        };
        Ok(world)
    }

    pub fn label_world(&self) -> Result<LabelWorld> {
        let judge = self
            .config
            .backends
            .judge
            .as_ref()
            .context("config is missing [backends.judge]")?
            .build("judge", &self.dir)?;
        let completer = self
            .config
            .backends
            .completer
            .as_ref()
            .context("config is missing [backends.completer]")?
            .build("completer", &self.dir)?;
        let mut world = LabelWorld::new(judge, completer);
        world.judge_template = template_or_default(
            &self.config.templates.judge,
            &self.dir,
            PromptTemplate::default_critique(),
        )?;
        world.multichoice_template = template_or_default(
            &self.config.templates.multichoice,
            &self.dir,
            PromptTemplate::default_multichoice(),
        )?;
        world.freeform_template = template_or_default(
            &self.config.templates.freeform,
            &self.dir,
            PromptTemplate::default_freeform(),
        )?;
        Ok(world)
    }
}

/// Parse repeated `--category` values into the filter set.
pub fn category_set(categories: &[String]) -> Option<BTreeSet<String>> {
    if categories.is_empty() {
        None
    } else {
        Some(categories.iter().cloned().collect())
    }
}
