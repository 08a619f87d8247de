//! Config-file loading and flag overrides for the `tafs` binary.
//!
//! The config file is TOML and maps one-to-one onto [`Config`]:
//!
//! ```toml
//! manifest = "data/manifest.json"   # relative paths resolve against this file
//! store = "data/store"
//! weights = "weights.afwb"
//! output_dir = "reports"
//! backend = "oracle"                 # toy | oracle | remote
//! remote_url = "http://127.0.0.1:9000"      # the backend POSTs to {remote_url}/ground
//! remote_timeout_secs = 10.0
//! confidence_threshold = 0.5
//! seed = 20241024
//! threads = 4
//! cors_origin = "http://localhost:5173"
//!
//! [segmentation]
//! mode = "noisy_oracle"              # neural | oracle | noisy_oracle
//! sigma = 0.1
//! seed = 1
//!
//! [icp]
//! max_iters = 50
//! tol = 1e-8
//! trim_fraction = 0.0
//!
//! [metrics]
//! iou_threshold = 0.5
//! gt_threshold = 0.5
//! auc_ties = "half"                  # half | pessimistic | optimistic
//! ```
//!
//! Every key is optional; unknown keys are rejected. Flags win over the file.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use tafs_core::affordseg::SegmentationMode;
use tafs_core::config::{BackendKind, Config};

/// Exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Validation = 1,
    Infrastructure = 2,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
    /// Extra machine-readable detail printed with the error.
    pub detail: Option<serde_json::Value>,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Validation,
            message: message.into(),
            detail: None,
        }
    }

    pub fn infra(message: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Infrastructure,
            message: message.into(),
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: serde_json::Value) -> Self {
        self.detail = Some(detail);
        self
    }

    pub fn code(&self) -> i32 {
        self.kind as i32
    }

    pub fn to_json(&self) -> serde_json::Value {
        let kind = match self.kind {
            ExitKind::Validation => "validation",
            ExitKind::Infrastructure => "infrastructure",
        };
        let mut v = serde_json::json!({ "error": self.message, "kind": kind });
        if let Some(d) = &self.detail {
            v["detail"] = d.clone();
        }
        v
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

pub fn parse_config(text: &str, base: &Path) -> Result<Config, String> {
    let mut c: Config = toml::from_str(text).map_err(|e| e.to_string())?;
    rebase(base, &mut c.manifest);
    rebase(base, &mut c.store);
    rebase(base, &mut c.weights);
    rebase(base, &mut c.output_dir);
    Ok(c)
}

/// Reads `path`, or returns the defaults when there is none.
pub fn load_config(path: Option<&Path>) -> Result<Config, CliError> {
    let Some(path) = path else {
        return Ok(Config::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::infra(format!("config {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base).map_err(|e| CliError::infra(format!("config {}: {e}", path.display())))
}

/// Flag values that override the config file; `None` leaves a field alone.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub manifest: Option<PathBuf>,
    pub store: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub backend: Option<BackendKind>,
    pub remote_url: Option<String>,
    pub remote_timeout_secs: Option<f64>,
    pub confidence_threshold: Option<f64>,
    pub seed: Option<u64>,
    /// `neural`, `oracle` or `noisy`.
    pub segmentation: Option<String>,
    pub sigma: Option<f64>,
    pub noise_seed: Option<u64>,
    pub threads: Option<usize>,
    pub cors_origin: Option<String>,
}

impl Overrides {
    pub fn apply(self, mut c: Config) -> Result<Config, CliError> {
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = self.$f {
                    c.$f = v;
                }
            )*};
        }
        macro_rules! set_opt {
            ($($f:ident),*) => {$(
                if self.$f.is_some() {
                    c.$f = self.$f;
                }
            )*};
        }
        set!(backend, remote_timeout_secs, confidence_threshold, seed);
        set_opt!(manifest, store, weights, output_dir, remote_url, threads, cors_origin);

        let (old_sigma, old_seed) = match c.segmentation {
            SegmentationMode::NoisyOracle { sigma, seed } => (Some(sigma), seed),
            _ => (None, 1),
        };
        let mode = match self.segmentation.as_deref() {
            Some("neural") => Some(SegmentationMode::Neural),
            Some("oracle") => Some(SegmentationMode::Oracle),
            Some("noisy") | Some("noisy_oracle") => None,
            Some(other) => {
                return Err(CliError::infra(format!(
                    "unknown segmentation '{other}' (expected neural, oracle or noisy)"
                )))
            }
            None if self.sigma.is_none() && self.noise_seed.is_none() => Some(c.segmentation),
            None => None,
        };
        c.segmentation = match mode {
            Some(m) => m,
            None => SegmentationMode::NoisyOracle {
                sigma: self
                    .sigma
                    .or(old_sigma)
                    .ok_or_else(|| CliError::infra("noisy segmentation needs --sigma"))?,
                seed: self.noise_seed.unwrap_or(old_seed),
            },
        };
        c.check().map_err(CliError::infra)?;
        Ok(c)
    }
}

/// Referenced paths must exist before a command starts.
pub fn check_paths(c: &Config) -> Result<(), CliError> {
    for (name, p) in [("manifest", &c.manifest), ("store", &c.store), ("weights", &c.weights)] {
        if let Some(p) = p {
            if !p.exists() {
                return Err(CliError::infra(format!("{name} {} does not exist", p.display())));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_example_parses() {
        let doc = include_str!("lib.rs")
            .split("```toml\n")
            .nth(1)
            .unwrap()
            .split("```")
            .next()
            .unwrap()
            .lines()
            .map(|l| l.trim_start_matches("//!").trim_start_matches(' '))
            .collect::<Vec<_>>()
            .join("\n");
        let c = parse_config(&doc, Path::new("/cfg")).unwrap();
        assert_eq!(c.manifest.as_deref(), Some(Path::new("/cfg/data/manifest.json")));
        assert_eq!(c.backend, BackendKind::Oracle);
        assert_eq!(c.segmentation, SegmentationMode::NoisyOracle { sigma: 0.1, seed: 1 });
        assert_eq!(c.threads, Some(4));
        assert_eq!(c.icp.max_iters, 50);
    }

    #[test]
    fn empty_file_is_default() {
        assert_eq!(parse_config("", Path::new(".")).unwrap(), Config::default());
        assert!(parse_config("colour = 1", Path::new(".")).is_err());
        assert!(parse_config("backend = \"gpu\"", Path::new(".")).is_err());
    }

    #[test]
    fn absolute_paths_are_kept() {
        let c = parse_config("manifest = \"/data/m.json\"", Path::new("/cfg")).unwrap();
        assert_eq!(c.manifest.as_deref(), Some(Path::new("/data/m.json")));
    }

    #[test]
    fn flags_win() {
        let file = parse_config(
            "backend = \"toy\"\nconfidence_threshold = 0.4\n[segmentation]\nmode = \"noisy_oracle\"\nsigma = 0.2\nseed = 9\n",
            Path::new("."),
        )
        .unwrap();
        let c = Overrides {
            backend: Some(BackendKind::Oracle),
            sigma: Some(0.05),
            ..Overrides::default()
        }
        .apply(file.clone())
        .unwrap();
        assert_eq!(c.backend, BackendKind::Oracle);
        assert_eq!(c.confidence_threshold, 0.4);
        assert_eq!(c.segmentation, SegmentationMode::NoisyOracle { sigma: 0.05, seed: 9 });

        let c = Overrides {
            segmentation: Some("oracle".into()),
            ..Overrides::default()
        }
        .apply(file.clone())
        .unwrap();
        assert_eq!(c.segmentation, SegmentationMode::Oracle);

        let unchanged = Overrides::default().apply(file.clone()).unwrap();
        assert_eq!(unchanged, file);
    }

    #[test]
    fn bad_overrides_are_infrastructure_errors() {
        let bad = [
            Overrides {
                segmentation: Some("magic".into()),
                ..Overrides::default()
            },
            Overrides {
                segmentation: Some("noisy".into()),
                ..Overrides::default()
            },
            Overrides {
                confidence_threshold: Some(2.0),
                ..Overrides::default()
            },
            Overrides {
                backend: Some(BackendKind::Remote),
                ..Overrides::default()
            },
        ];
        for o in bad {
            let err = o.clone().apply(Config::default()).unwrap_err();
            assert_eq!(err.code(), 2, "{o:?}");
        }
    }
}
