use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LocalityError, Result};
use crate::patching::ChannelKind;
use crate::trace::{CycleLabel, Level};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    GenToy,
    Patch,
    Jacobian,
    Sae,
    Converge,
    Object3d,
    Report,
}

impl CommandKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::GenToy => "gen-toy",
            Self::Patch => "patch",
            Self::Jacobian => "jacobian",
            Self::Sae => "sae",
            Self::Converge => "converge",
            Self::Object3d => "object3d",
            Self::Report => "report",
        }
    }

    /// Commands whose output depends on random draws.
    pub fn needs_seed(self) -> bool {
        !matches!(self, Self::Report | Self::Converge)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SigmaMode {
    Fixed,
    Selfdrop,
    Snr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum JacobianMethod {
    Fd,
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaeOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
}

/// Everything a run depends on. The resolved form is written to
/// `run.json` in the output directory and can be replayed verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    /// Geometry JSON, maze text, ARC grid JSON or scene CSV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<PathBuf>,
    /// Toy config JSON or parameter bundle directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<Vec<ChannelKind>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_mode: Option<SigmaMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub examples: Option<usize>,
    /// Analysis cycle `HnLm`; selected by convergence when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycle: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_drop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_frac: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resamples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<JacobianMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<Level>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<CycleLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sae: Option<SaeOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_target: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surrogate: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_dims: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<PathBuf>,
}

impl RunConfig {
    pub fn empty(command: CommandKind) -> Self {
        Self {
            command,
            task: None,
            geometry: None,
            model: None,
            trace: None,
            channels: None,
            sigma_mode: None,
            sigma: None,
            seed: None,
            examples: None,
            cycle: None,
            probe: None,
            target_drop: None,
            threshold_frac: None,
            resamples: None,
            method: None,
            eps: None,
            level: None,
            label: None,
            sae: None,
            top_k: None,
            k_target: None,
            surrogate: None,
            feature_dims: None,
            inputs: Vec::new(),
        }
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LocalityError::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.geometry, &mut self.model, &mut self.trace]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        self.inputs.iter_mut().for_each(fix);
    }

    /// Makes every input path absolute so the manifest replays from any
    /// working directory.
    pub fn absolutize(&mut self) -> Result<()> {
        let abs = |p: &mut PathBuf| -> Result<()> {
            *p = std::fs::canonicalize(&*p).map_err(|e| LocalityError::io(&*p, e))?;
            Ok(())
        };
        for p in [&mut self.geometry, &mut self.model, &mut self.trace]
            .into_iter()
            .flatten()
        {
            abs(p)?;
        }
        self.inputs.iter_mut().try_for_each(abs)
    }
}
