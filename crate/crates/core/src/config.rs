//! Run configuration shared by the CLI, the service and the benchmark.

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::affordseg::SegmentationMode;
use crate::bench::metrics::MetricParams;
use crate::cloudstore::IcpParams;
use crate::decision::DEFAULT_CONFIDENCE_THRESHOLD;
use crate::model::DEFAULT_SEED;
use crate::util::sha256_hex;
use crate::vlm::DEFAULT_REMOTE_TIMEOUT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Toy,
    Oracle,
    Remote,
}

impl BackendKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BackendKind::Toy => "toy",
            BackendKind::Oracle => "oracle",
            BackendKind::Remote => "remote",
        }
    }
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "toy" => Ok(BackendKind::Toy),
            "oracle" => Ok(BackendKind::Oracle),
            "remote" => Ok(BackendKind::Remote),
            other => Err(format!("unknown backend '{other}' (expected toy, oracle or remote)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub manifest: Option<PathBuf>,
    /// Defaults to `store/` next to the manifest.
    pub store: Option<PathBuf>,
    /// Generated from `seed` when absent.
    pub weights: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub backend: BackendKind,
    pub remote_url: Option<String>,
    pub remote_timeout_secs: f64,
    pub confidence_threshold: f64,
    pub seed: u64,
    pub segmentation: SegmentationMode,
    pub icp: IcpParams,
    pub metrics: MetricParams,
    /// Worker threads for the benchmark; all cores when absent.
    pub threads: Option<usize>,
    /// Allowed browser origin for the service; any origin when absent.
    pub cors_origin: Option<String>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            manifest: None,
            store: None,
            weights: None,
            output_dir: None,
            backend: BackendKind::Toy,
            remote_url: None,
            remote_timeout_secs: DEFAULT_REMOTE_TIMEOUT.as_secs_f64(),
            confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD,
            seed: DEFAULT_SEED,
            segmentation: SegmentationMode::Neural,
            icp: IcpParams::default(),
            metrics: MetricParams::default(),
            threads: None,
            cors_origin: None,
        }
    }
}

/// The fields that change results; paths and deployment knobs are left out
/// so a relocated dataset hashes the same.
#[derive(Serialize)]
struct HashedFields<'a> {
    backend: BackendKind,
    remote_url: &'a Option<String>,
    confidence_threshold: f64,
    seed: u64,
    segmentation: &'a SegmentationMode,
    icp: &'a IcpParams,
    metrics: &'a MetricParams,
}

impl Config {
    pub fn check(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(format!(
                "confidence_threshold {} outside [0, 1]",
                self.confidence_threshold
            ));
        }
        if self.backend == BackendKind::Remote && self.remote_url.is_none() {
            return Err("backend 'remote' needs remote_url".into());
        }
        if !(self.remote_timeout_secs > 0.0 && self.remote_timeout_secs.is_finite()) {
            return Err("remote_timeout_secs must be positive".into());
        }
        if let SegmentationMode::NoisyOracle { sigma, .. } = self.segmentation {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(format!("noise sigma {sigma} must be a finite non-negative number"));
            }
        }
        if !(0.0..1.0).contains(&self.icp.trim_fraction) {
            return Err(format!("icp.trim_fraction {} outside [0, 1)", self.icp.trim_fraction));
        }
        if self.threads == Some(0) {
            return Err("threads must be at least 1".into());
        }
        Ok(())
    }

    /// Short label such as `oracle+noisy(0.1)` for report rows.
    pub fn method(&self) -> String {
        let seg = match self.segmentation {
            SegmentationMode::Neural => "neural".to_string(),
            SegmentationMode::Oracle => "oracle".to_string(),
            SegmentationMode::NoisyOracle { sigma, .. } => format!("noisy({sigma})"),
        };
        format!("{}+{seg}", self.backend.as_str())
    }

    pub fn remote_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.remote_timeout_secs)
    }

    /// SHA-256 over the result-affecting fields.
    pub fn hash(&self) -> String {
        let fields = HashedFields {
            backend: self.backend,
            remote_url: &self.remote_url,
            confidence_threshold: self.confidence_threshold,
            seed: self.seed,
            segmentation: &self.segmentation,
            icp: &self.icp,
            metrics: &self.metrics,
        };
        sha256_hex(&serde_json::to_vec(&fields).expect("config serializes"))
    }
}
