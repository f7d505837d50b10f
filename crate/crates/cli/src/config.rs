//! Endpoint settings: an optional TOML file of named endpoints, overridden
//! by command-line flags. The auth token only ever comes from the
//! environment.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use chainhash_core::PromptFormat;
use chainhash_net::{ApiStyle, ModelEndpoint};
use serde::Deserialize;

use crate::args::EndpointArgs;
use crate::fail::{Classify, CliResult, Failure};
use crate::io::read_text;

pub const TOKEN_ENV: &str = "CHAINHASH_API_TOKEN";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: Option<String>,
    pub api_style: Option<ApiStyle>,
    pub model: Option<String>,
    pub grey_box: Option<String>,
    pub max_parallel: Option<usize>,
    pub timeout_secs: Option<u64>,
    pub max_tokens: Option<u32>,
    pub retries: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub endpoints: BTreeMap<String, EndpointConfig>,
}

pub fn load_config(path: &Path) -> CliResult<ConfigFile> {
    toml::from_str(&read_text(path)?).or_validation_ctx(path.display())
}

pub fn prompt_format(id: &str) -> CliResult<PromptFormat> {
    PromptFormat::builtin(id).ok_or_else(|| {
        let known: Vec<String> = PromptFormat::builtins().iter().map(|f| f.id().to_owned()).collect();
        Failure::validation(format!("unknown prompt format {id:?} (known: {})", known.join(", ")))
    })
}

fn looks_like_url(s: &str) -> bool {
    s.starts_with("http://") || s.starts_with("https://")
}

impl EndpointConfig {
    /// Fields set in `over` win.
    pub fn merge(self, over: EndpointConfig) -> EndpointConfig {
        EndpointConfig {
            base_url: over.base_url.or(self.base_url),
            api_style: over.api_style.or(self.api_style),
            model: over.model.or(self.model),
            grey_box: over.grey_box.or(self.grey_box),
            max_parallel: over.max_parallel.or(self.max_parallel),
            timeout_secs: over.timeout_secs.or(self.timeout_secs),
            max_tokens: over.max_tokens.or(self.max_tokens),
            retries: over.retries.or(self.retries),
        }
    }

    pub fn build(self) -> CliResult<ModelEndpoint> {
        let url = self
            .base_url
            .ok_or_else(|| Failure::validation("endpoint has no base_url"))?;
        if !looks_like_url(&url) {
            return Err(Failure::validation(format!("endpoint {url:?} is not an http(s) URL")));
        }
        let mut ep = ModelEndpoint::new(url);
        if let Some(s) = self.api_style {
            ep.api_style = s;
        }
        if let Some(m) = self.model {
            ep.model = m;
        }
        if let Some(g) = self.grey_box {
            ep.grey_box_format = Some(prompt_format(&g)?);
        }
        if let Some(n) = self.max_parallel {
            if n == 0 {
                return Err(Failure::validation("max_parallel must be at least 1"));
            }
            ep.max_parallel = n;
        }
        if let Some(t) = self.timeout_secs {
            ep.timeout = Duration::from_secs(t);
        }
        if let Some(t) = self.max_tokens {
            ep.max_tokens = t;
        }
        if let Some(r) = self.retries {
            ep.retries = r;
        }
        if let Ok(token) = std::env::var(TOKEN_ENV) {
            if !token.is_empty() {
                ep.auth_token = Some(token);
            }
        }
        Ok(ep)
    }
}

pub fn resolve_endpoint(args: &EndpointArgs) -> CliResult<ModelEndpoint> {
    let file = match &args.config {
        Some(p) => load_config(p)?,
        None => ConfigFile::default(),
    };
    let base = if looks_like_url(&args.endpoint) {
        EndpointConfig {
            base_url: Some(args.endpoint.clone()),
            ..Default::default()
        }
    } else {
        file.endpoints.get(&args.endpoint).cloned().ok_or_else(|| {
            Failure::validation(format!(
                "{:?} is neither a URL nor an endpoint named in the config file",
                args.endpoint
            ))
        })?
    };
    base.merge(EndpointConfig {
        base_url: None,
        api_style: args.api,
        model: args.model.clone(),
        grey_box: args.grey_box.clone(),
        max_parallel: args.max_parallel,
        timeout_secs: args.timeout_secs,
        max_tokens: args.max_tokens,
        retries: args.retries,
    })
    .build()
}
