//! Benchmark harness: sweeps a phantom across source-grid resolutions and
//! times per-voxel seeding against region seeding with identical tracker
//! settings.
//!
//! Phantom construction is excluded from the timings. One CSV row is emitted
//! per (resolution, algorithm, repeat) with a fixed column set, so reports
//! from different machines and runs can be concatenated and compared. The
//! CPU model string and worker count are recorded alongside; no cross-machine
//! claim is made beyond what those columns carry.

use std::io;
use std::time::Instant;

use thiserror::Error;

use crate::runner::{proposed_connectivity_par, traditional_connectivity_par, RunnerError};
use tracon_core::phantom::{Phantom, PhantomConfig, PhantomKind};
use tracon_core::{EndpointMode, RunParams, TrackParams};

/// Column set of the report CSV, in emission order.
pub const CSV_COLUMNS: [&str; 10] = [
    "phantom",
    "resolution_mm",
    "algorithm",
    "repeat",
    "n_source_voxels",
    "generated_streamlines",
    "mean_passthrough",
    "wall_time_s",
    "threads",
    "cpu_model",
];

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("resolutions {0:?} must be positive and strictly descending (coarse to fine)")]
    BadResolutions(Vec<f64>),
    #[error("repeats must be at least 1")]
    NoRepeats,
    #[error(transparent)]
    Runner(#[from] RunnerError),
    #[error(transparent)]
    Core(#[from] tracon_core::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub kind: PhantomKind,
    /// Source-grid resolutions in mm, coarse to fine.
    pub resolutions_mm: Vec<f64>,
    /// Accepted streamlines per voxel (per-voxel seeding).
    pub k: u64,
    /// Total accepted streamlines (region seeding).
    pub k_star: u64,
    pub repeats: u32,
    /// Worker count; 0 means the default.
    pub threads: usize,
    pub seed: u64,
}

/// One timed run.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub phantom: String,
    pub resolution_mm: f64,
    pub algorithm: String,
    pub repeat: u32,
    pub n_source_voxels: usize,
    pub generated_streamlines: u64,
    pub mean_passthrough: f64,
    pub wall_time_s: f64,
    pub threads: usize,
    pub cpu_model: String,
}

/// Tracker settings shared by both algorithms in every sweep.
pub fn bench_track_params(seed: u64) -> TrackParams {
    TrackParams {
        step_size: 0.5,
        max_steps: 200,
        angular_noise_deg: 5.0,
        min_length_mm: 0.0,
        rng_seed: seed,
    }
}

/// Runs the sweep; records appear per resolution, per repeat, per-voxel
/// seeding first.
pub fn run_bench(config: &BenchConfig) -> Result<Vec<BenchRecord>> {
    let rs = &config.resolutions_mm;
    let descending = rs.windows(2).all(|w| w[0] > w[1]);
    let positive = rs.iter().all(|&r| r > 0.0 && r.is_finite());
    if rs.is_empty() || !descending || !positive {
        return Err(BenchError::BadResolutions(rs.clone()));
    }
    if config.repeats == 0 {
        return Err(BenchError::NoRepeats);
    }

    let cpu = cpu_model();
    let threads_effective = effective_threads(config.threads);
    let tp = bench_track_params(config.seed);
    let mut records = Vec::new();
    for &res in rs {
        let phantom_config = match config.kind {
            PhantomKind::Bar => PhantomConfig::bar(res),
            PhantomKind::Slab => PhantomConfig::slab(res),
        };
        let phantom = Phantom::build(&phantom_config)?;
        let n_source = phantom.source.count_label(phantom_config.source_label);
        for repeat in 0..config.repeats {
            for algorithm in ["traditional", "proposed"] {
                let rp = RunParams {
                    k: config.k,
                    k_star: config.k_star,
                    endpoint_mode: EndpointMode::Both,
                };
                let started = Instant::now();
                let matrix = match algorithm {
                    "traditional" => traditional_connectivity_par(
                        &phantom.source,
                        phantom_config.source_label,
                        &phantom.targets,
                        &phantom.field,
                        &tp,
                        &rp,
                        config.threads,
                    )?,
                    _ => proposed_connectivity_par(
                        &phantom.source,
                        phantom_config.source_label,
                        &phantom.targets,
                        &phantom.field,
                        &tp,
                        &rp,
                        config.threads,
                    )?,
                };
                let wall_time_s = started.elapsed().as_secs_f64();
                let p = matrix.provenance();
                records.push(BenchRecord {
                    phantom: config.kind.to_string(),
                    resolution_mm: res,
                    algorithm: algorithm.to_string(),
                    repeat,
                    n_source_voxels: n_source,
                    generated_streamlines: p.generated_streamlines,
                    mean_passthrough: p.mean_passthrough(),
                    wall_time_s,
                    threads: threads_effective,
                    cpu_model: cpu.clone(),
                });
            }
        }
    }
    Ok(records)
}

/// Writes the report with the stable [`CSV_COLUMNS`] header.
pub fn write_csv(records: &[BenchRecord], out: &mut impl io::Write) -> io::Result<()> {
    writeln!(out, "{}", CSV_COLUMNS.join(","))?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{:.6},{:.6},{},{}",
            r.phantom,
            r.resolution_mm,
            r.algorithm,
            r.repeat,
            r.n_source_voxels,
            r.generated_streamlines,
            r.mean_passthrough,
            r.wall_time_s,
            r.threads,
            r.cpu_model,
        )?;
    }
    Ok(())
}

/// CPU model string from the OS, commas stripped to keep the CSV flat;
/// "unknown" when unavailable.
pub fn cpu_model() -> String {
    let info = match std::fs::read_to_string("/proc/cpuinfo") {
        Ok(s) => s,
        Err(_) => return String::from("unknown"),
    };
    for line in info.lines() {
        if let Some((key, value)) = line.split_once(':') {
            if key.trim() == "model name" {
                return value.trim().replace(',', ";");
            }
        }
    }
    String::from("unknown")
}

fn effective_threads(requested: usize) -> usize {
    if requested != 0 {
        return requested;
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_sweep_produces_one_record_per_cell() {
        let config = BenchConfig {
            kind: PhantomKind::Bar,
            resolutions_mm: vec![2.0],
            k: 3,
            k_star: 30,
            repeats: 2,
            threads: 1,
            seed: 5,
        };
        let records = run_bench(&config).unwrap();
        assert_eq!(records.len(), 4);
        assert_eq!(records[0].algorithm, "traditional");
        assert_eq!(records[1].algorithm, "proposed");
        assert_eq!(records[0].n_source_voxels, 3);
        assert_eq!(records[0].generated_streamlines, 9);
        assert_eq!(records[1].generated_streamlines, 30);
        assert!(records.iter().all(|r| r.wall_time_s >= 0.0));
        assert!(records.iter().all(|r| r.threads == 1));
    }

    #[test]
    fn csv_layout_is_stable() {
        let record = BenchRecord {
            phantom: "bar".into(),
            resolution_mm: 0.5,
            algorithm: "proposed".into(),
            repeat: 1,
            n_source_voxels: 192,
            generated_streamlines: 1000,
            mean_passthrough: 5.25,
            wall_time_s: 0.125,
            threads: 2,
            cpu_model: "Example CPU @ 3.00GHz".into(),
        };
        let mut out = Vec::new();
        write_csv(&[record], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "phantom,resolution_mm,algorithm,repeat,n_source_voxels,generated_streamlines,\
             mean_passthrough,wall_time_s,threads,cpu_model"
        );
        assert_eq!(
            lines.next().unwrap(),
            "bar,0.5,proposed,1,192,1000,5.250000,0.125000,2,Example CPU @ 3.00GHz"
        );
    }

    #[test]
    fn ascending_resolutions_are_rejected() {
        let config = BenchConfig {
            kind: PhantomKind::Bar,
            resolutions_mm: vec![1.0, 2.0],
            k: 1,
            k_star: 1,
            repeats: 1,
            threads: 1,
            seed: 0,
        };
        assert!(matches!(
            run_bench(&config),
            Err(BenchError::BadResolutions(_))
        ));
    }

    #[test]
    fn cpu_model_is_flat_text() {
        let model = cpu_model();
        assert!(!model.is_empty());
        assert!(!model.contains(','));
    }
}
