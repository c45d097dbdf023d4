use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, ValueEnum};
use seckb::config::RunConfig;
use seckb::index::Facet;
use seckb::llm::PromptStyle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StyleArg {
    Completion,
    Chat,
}

impl From<StyleArg> for PromptStyle {
    fn from(s: StyleArg) -> Self {
        match s {
            StyleArg::Completion => PromptStyle::Completion,
            StyleArg::Chat => PromptStyle::Chat,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FacetArg {
    Api,
    Cause,
    Code,
}

impl From<FacetArg> for Facet {
    fn from(f: FacetArg) -> Self {
        match f {
            FacetArg::Api => Facet::Api,
            FacetArg::Cause => Facet::Cause,
            FacetArg::Code => Facet::Code,
        }
    }
}

/// Settings that override the configuration file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Knowledge-base directory.
    #[arg(long, global = true)]
    pub kb: Option<PathBuf>,
    #[arg(long, global = true)]
    pub hops: Option<usize>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub top_k: Option<usize>,
    #[arg(long, global = true)]
    pub examples_per_prompt: Option<usize>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub rank_cap: Option<usize>,
    #[arg(long, global = true)]
    pub threshold_api: Option<f64>,
    #[arg(long, global = true)]
    pub threshold_cause: Option<f64>,
    #[arg(long, global = true)]
    pub threshold_code: Option<f64>,
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true)]
    pub concurrency: Option<usize>,
    /// Prompt layout of the generation model.
    #[arg(long, global = true, value_enum)]
    pub style: Option<StyleArg>,
    /// Temperature of the generation model.
    #[arg(long, global = true)]
    pub temperature: Option<f64>,
    /// Client provider for every model stage (`offline` or `http`).
    #[arg(long, global = true)]
    pub provider: Option<String>,
    /// Model name for every model stage.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Embedding provider (`hash` or `http`).
    #[arg(long, global = true)]
    pub embedding_provider: Option<String>,
    #[arg(long, global = true)]
    pub embedding_dim: Option<usize>,
    /// Facet to switch off; repeatable.
    #[arg(long = "disable-facet", global = true, value_enum)]
    pub disable_facets: Vec<FacetArg>,
    /// Write zero timings so records are byte-identical across runs.
    #[arg(long, global = true)]
    pub no_timings: bool,
}

/// Built-in defaults, then the configuration file, then flags.
pub fn resolve(file_text: Option<&str>, flags: &Overrides) -> anyhow::Result<RunConfig> {
    let mut c = match file_text {
        Some(text) => toml::from_str::<RunConfig>(text).context("invalid configuration file")?,
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($flag:expr => $($field:tt)+) => {
            if let Some(v) = $flag.clone() {
                c.$($field)+ = v;
            }
        };
    }
    set!(flags.kb => kb_dir);
    set!(flags.hops => hop_limit);
    set!(flags.batch_size => batch_size);
    set!(flags.top_k => top_k);
    set!(flags.examples_per_prompt => examples_per_prompt);
    set!(flags.alpha => alpha);
    set!(flags.rank_cap => rank_cap);
    set!(flags.threshold_api => thresholds.api);
    set!(flags.threshold_cause => thresholds.cause);
    set!(flags.threshold_code => thresholds.code);
    set!(flags.samples => samples);
    set!(flags.concurrency => concurrency);
    set!(flags.temperature => generator.temperature);
    set!(flags.embedding_provider => embedding.provider);
    set!(flags.embedding_dim => embedding.dim);
    if let Some(style) = flags.style {
        c.generator.style = style.into();
    }
    for stage in [
        &mut c.summarizer,
        &mut c.draft,
        &mut c.cause,
        &mut c.generator,
    ] {
        if let Some(p) = &flags.provider {
            stage.provider = p.clone();
        }
        if let Some(m) = &flags.model {
            stage.model = m.clone();
        }
    }
    c.disabled_facets
        .extend(flags.disable_facets.iter().map(|&f| Facet::from(f)));
    if flags.no_timings {
        c.record_timings = false;
    }
    Ok(c)
}

pub fn load(flags: &Overrides) -> anyhow::Result<RunConfig> {
    let text = match &flags.config {
        Some(path) => Some(read(path)?),
        None => None,
    };
    resolve(text.as_deref(), flags)
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path)
        .with_context(|| format!("cannot read configuration file {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_file_beats_default() {
        let file = "top_k = 7\nhop_limit = 3\n[thresholds]\napi = 2.5\ncause = 0.75\ncode = 0.65\n";
        let none = Overrides::default();
        let flag = Overrides {
            top_k: Some(9),
            ..Overrides::default()
        };

        let c = resolve(None, &none).unwrap();
        assert_eq!((c.top_k, c.hop_limit, c.batch_size), (4, 2, 10));

        let c = resolve(Some(file), &none).unwrap();
        assert_eq!((c.top_k, c.hop_limit, c.thresholds.api), (7, 3, 2.5));

        let c = resolve(Some(file), &flag).unwrap();
        assert_eq!((c.top_k, c.hop_limit, c.batch_size), (9, 3, 10));
    }

    #[test]
    fn credentials_are_not_configuration() {
        assert!(resolve(Some("api_key = \"sk-test\"\n"), &Overrides::default()).is_err());
        let nested = "[generator]\nprovider = \"http\"\napi_key = \"sk-test\"\n";
        assert!(resolve(Some(nested), &Overrides::default()).is_err());
    }

    #[test]
    fn stage_settings_from_file() {
        let file = "[generator]\nstyle = \"completion\"\ntemperature = 0.8\n";
        let c = resolve(Some(file), &Overrides::default()).unwrap();
        assert_eq!(c.generator.style, PromptStyle::Completion);
        assert_eq!(c.generator.temperature, 0.8);
        assert_eq!(c.draft.temperature, 0.2);
        let flags = Overrides {
            style: Some(StyleArg::Chat),
            provider: Some("http".into()),
            ..Overrides::default()
        };
        let c = resolve(Some(file), &flags).unwrap();
        assert_eq!(c.generator.style, PromptStyle::Chat);
        assert_eq!(c.summarizer.provider, "http");
    }
}
