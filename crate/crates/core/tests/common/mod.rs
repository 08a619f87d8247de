#![allow(dead_code)]

use std::path::PathBuf;

use tafs_core::affordseg::SegmentationMode;
use tafs_core::bench::fixture::{write_fixture, FixturePaths, FixtureSpec};
use tafs_core::bench::runner::{run_benchmark, BenchOptions, MetricsReport};
use tafs_core::config::{BackendKind, Config};
use tafs_core::pipeline::Engine;
use tempfile::TempDir;

pub struct Fixture {
    pub dir: TempDir,
    pub paths: FixturePaths,
}

pub fn fixture(spec: &FixtureSpec) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_fixture(dir.path(), spec).unwrap();
    Fixture { dir, paths }
}

pub fn small() -> Fixture {
    fixture(&FixtureSpec::default())
}

impl Fixture {
    pub fn config(&self, backend: BackendKind, segmentation: SegmentationMode) -> Config {
        Config {
            manifest: Some(self.paths.manifest.clone()),
            backend,
            segmentation,
            ..Config::default()
        }
    }

    pub fn engine(&self, backend: BackendKind, segmentation: SegmentationMode) -> Engine {
        Engine::load(&self.config(backend, segmentation)).unwrap()
    }

    pub fn out_dir(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

pub fn bench(config: &Config, threads: Option<usize>) -> MetricsReport {
    let engine = Engine::load(config).unwrap();
    let opts = BenchOptions {
        threads,
        ..BenchOptions::from_config(config)
    };
    run_benchmark(&engine, &opts).unwrap()
}
