//! Model resolution: built-in case-study names or model files.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use shasmc::casestudy::{builtin_def, CaseStudyConfig, BUILTIN_MODELS};
use shasmc::model::NetworkDef;
use shasmc::network::{validate_network, Network};
use shasmc::predictor::Thresholds;

pub struct LoadedModel {
    pub def: NetworkDef,
    pub net: Network,
    /// Resolved configuration when the model is built in.
    pub case_study: Option<CaseStudyConfig>,
}

pub fn parse_thresholds(s: &str) -> Result<Thresholds, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    let arr: [f64; 4] = parts.try_into().map_err(|v: Vec<f64>| format!("expected 4 thresholds, got {}", v.len()))?;
    Thresholds::new(arr).map_err(|e| e.to_string())
}

fn read_config(path: &Path) -> Result<CaseStudyConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Reads a network definition from a `.toml` or `.json` file.
pub fn read_model_file(path: &Path) -> Result<NetworkDef> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::from_str(&text).with_context(|| format!("parsing {}", path.display())),
        Some("json") => serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display())),
        _ => bail!(
            "`{}` is neither a built-in model ({}) nor a .toml/.json model file",
            path.display(),
            BUILTIN_MODELS.join(", ")
        ),
    }
}

pub fn load(model: &str, config: Option<&Path>, thresholds: Option<Thresholds>) -> Result<LoadedModel> {
    let (def, case_study) = if BUILTIN_MODELS.contains(&model) {
        let mut cfg = match config {
            Some(p) => read_config(p)?,
            None => CaseStudyConfig::default(),
        };
        if let Some(t) = thresholds {
            cfg.environment = cfg.environment.with_thresholds(t);
        }
        let def = builtin_def(model, &cfg).expect("listed built-in")?;
        (def, Some(cfg))
    } else {
        if config.is_some() {
            bail!("--config only applies to the built-in models");
        }
        let mut def = read_model_file(Path::new(model))?;
        if let Some(t) = thresholds {
            for p in &mut def.predictors {
                p.thresholds = t;
            }
        }
        (def, None)
    };
    let net = validate_network(&def).map_err(|errs| {
        let lines: Vec<String> = errs.iter().map(|e| format!("  {e}")).collect();
        anyhow!("model `{model}` is invalid:\n{}", lines.join("\n"))
    })?;
    Ok(LoadedModel { def, net, case_study })
}
