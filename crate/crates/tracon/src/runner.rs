//! Parallel drivers over the core algorithms.
//!
//! Every function here is bit-compatible with its serial counterpart: each
//! tracking attempt owns an RNG stream keyed by its ordinal, so scheduling
//! cannot change what any attempt produces, and acceptance is resolved in
//! ordinal order on one thread. `threads == 0` means the default worker
//! count; the result never depends on the value.

use rayon::prelude::*;
use thiserror::Error;

use tracon_core::connectivity::{contribution, Contribution, MatrixBuilder, RunInfo, TargetCols};
use tracon_core::streamline::endpoint_region;
use tracon_core::tracking::{
    label_tracks, region_attempt, voxel_attempt, voxel_stream_ordinal, TrackStats, RETRY_FACTOR,
};
use tracon_core::{
    Algorithm, ConnectivityMatrix, DirectionField, EndpointMode, Error as CoreError, LabelVolume,
    Provenance, RunParams, SourceRegion, Streamline, TrackParams, Tractogram,
};

/// Attempts processed per parallel block while scanning for acceptances.
const BLOCK: u64 = 512;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type Result<T> = std::result::Result<T, RunnerError>;

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()?)
}

/// First-`quota` acceptances of `attempt(ordinal)` in ordinal order.
///
/// Returns the accepted values plus the attempt count consumed, defined
/// exactly as the serial loop counts it: the ordinal of the final acceptance
/// plus one. `Err(generated)` when `cap` attempts cannot fill the quota.
fn ordinal_scan<T: Send>(
    quota: u64,
    cap: u64,
    attempt: impl Fn(u64) -> Option<T> + Sync,
) -> std::result::Result<(Vec<T>, u64), u64> {
    let mut accepted: Vec<T> = Vec::with_capacity(quota as usize);
    let mut attempts = 0u64;
    let mut next = 0u64;
    while (accepted.len() as u64) < quota && next < cap {
        let block_end = next.saturating_add(BLOCK).min(cap);
        let mut results: Vec<Option<T>> =
            (next..block_end).into_par_iter().map(&attempt).collect();
        for r in results.iter_mut() {
            if accepted.len() as u64 == quota {
                break;
            }
            attempts += 1;
            if let Some(v) = r.take() {
                accepted.push(v);
            }
        }
        next = block_end;
    }
    if (accepted.len() as u64) < quota {
        Err(accepted.len() as u64)
    } else {
        Ok((accepted, attempts))
    }
}

/// Region seeding in parallel; equals the serial driver exactly.
pub fn proposed_connectivity_par(
    source: &LabelVolume,
    source_label: u32,
    targets: &LabelVolume,
    field: &DirectionField,
    tp: &TrackParams,
    rp: &RunParams,
    threads: usize,
) -> Result<ConnectivityMatrix> {
    tp.validate()?;
    if rp.k_star == 0 {
        return Err(CoreError::BadRunParams {
            reason: "k_star must be at least 1",
        }
        .into());
    }
    let region = SourceRegion::new(source, source_label)?;
    let cols = TargetCols::from_targets(targets);
    let mode = rp.endpoint_mode;
    let scan = pool(threads)?.install(|| {
        ordinal_scan(rp.k_star, RETRY_FACTOR * rp.k_star, |ordinal| {
            region_attempt(&region, field, tp, ordinal)
                .map(|l| contribution(&l, &region, &cols, targets, mode))
        })
    });
    let (contributions, attempts) = scan.map_err(|generated| CoreError::AttemptCapExhausted {
        generated,
        requested: rp.k_star,
    })?;
    let mut builder = MatrixBuilder::new(&region, &cols, targets, mode);
    for c in &contributions {
        builder.add_contribution(c);
    }
    let run = RunInfo {
        k_star: Some(rp.k_star),
        rng_seed: Some(tp.rng_seed),
        attempts,
        ..RunInfo::default()
    };
    Ok(builder.finish(Algorithm::Proposed, run))
}

struct RowOutcome {
    counts: Vec<u64>,
    accepted: u64,
    attempts: u64,
}

/// Per-voxel seeding with rows distributed over workers; equals the serial
/// driver exactly (rows never share RNG streams).
pub fn traditional_connectivity_par(
    source: &LabelVolume,
    source_label: u32,
    targets: &LabelVolume,
    field: &DirectionField,
    tp: &TrackParams,
    rp: &RunParams,
    threads: usize,
) -> Result<ConnectivityMatrix> {
    tp.validate()?;
    if rp.k == 0 {
        return Err(CoreError::BadRunParams {
            reason: "k must be at least 1",
        }
        .into());
    }
    let region = SourceRegion::new(source, source_label)?;
    let cols = TargetCols::from_targets(targets);
    let nc = cols.n_cols();
    let mode = rp.endpoint_mode;
    let outcomes: Vec<RowOutcome> = pool(threads)?.install(|| {
        (0..region.len())
            .into_par_iter()
            .map(|row| {
                let voxel = region.voxel(row);
                let mut counts = vec![0u64; nc];
                let mut accepted = 0u64;
                let mut attempt = 0u64;
                while accepted < rp.k && attempt < RETRY_FACTOR * rp.k {
                    let ordinal = voxel_stream_ordinal(row, attempt as u32);
                    if let Some(l) = voxel_attempt(voxel, region.affine(), field, tp, ordinal) {
                        let labels = endpoint_region(&l, targets, mode);
                        if labels.is_empty() {
                            counts[0] += 1;
                        } else {
                            for label in labels {
                                let col = cols
                                    .col_of(label)
                                    .expect("endpoint labels come from the target volume");
                                counts[col] += 1;
                            }
                        }
                        accepted += 1;
                    }
                    attempt += 1;
                }
                RowOutcome {
                    counts,
                    accepted,
                    attempts: attempt,
                }
            })
            .collect()
    });

    let mut counts = Vec::with_capacity(region.len() * nc);
    let mut generated = 0u64;
    let mut attempts = 0u64;
    let mut flagged_rows = Vec::new();
    for (row, outcome) in outcomes.iter().enumerate() {
        counts.extend_from_slice(&outcome.counts);
        generated += outcome.accepted;
        attempts += outcome.attempts;
        if outcome.accepted < rp.k {
            flagged_rows.push(row);
        }
    }
    let provenance = Provenance {
        algorithm: Algorithm::Traditional,
        k: Some(rp.k),
        k_star: None,
        rng_seed: Some(tp.rng_seed),
        endpoint_mode: mode,
        source_dims: region.shape().dims(),
        target_dims: targets.shape().dims(),
        generated_streamlines: generated,
        attempts,
        passthrough_total: generated,
        flagged_rows,
    };
    Ok(ConnectivityMatrix::from_parts(
        region.voxels().to_vec(),
        cols.labels().to_vec(),
        counts,
        provenance,
    )?)
}

/// Pass-through accumulation of an existing tractogram, chunked over workers.
pub fn connectivity_from_tractogram_par(
    tg: &Tractogram,
    source: &LabelVolume,
    source_label: u32,
    targets: &LabelVolume,
    mode: EndpointMode,
    threads: usize,
) -> Result<ConnectivityMatrix> {
    if tg.is_empty() {
        return Err(CoreError::EmptyTractogram.into());
    }
    let region = SourceRegion::new(source, source_label)?;
    let cols = TargetCols::from_targets(targets);
    let builder = pool(threads)?.install(|| {
        tg.streamlines
            .par_chunks(256)
            .map(|chunk| {
                let mut partial = MatrixBuilder::new(&region, &cols, targets, mode);
                for l in chunk {
                    partial.add_streamline(l);
                }
                partial
            })
            .reduce(
                || MatrixBuilder::new(&region, &cols, targets, mode),
                |mut a, b| {
                    a.merge(b);
                    a
                },
            )
    });
    Ok(builder.finish(Algorithm::FromTractogram, RunInfo::default()))
}

/// Parallel region-seeded batch generation; tractogram and stats match the
/// serial generator byte for byte.
pub fn generate_region_tracks_par(
    region: &SourceRegion,
    field: &DirectionField,
    params: &TrackParams,
    k_star: u64,
    threads: usize,
) -> Result<(Tractogram, TrackStats)> {
    params.validate()?;
    if k_star == 0 {
        return Err(CoreError::BadRunParams {
            reason: "k_star must be at least 1",
        }
        .into());
    }
    let scan = pool(threads)?.install(|| {
        ordinal_scan(k_star, RETRY_FACTOR * k_star, |ordinal| {
            region_attempt(region, field, params, ordinal)
        })
    });
    let (streamlines, attempts) = scan.map_err(|generated| CoreError::AttemptCapExhausted {
        generated,
        requested: k_star,
    })?;
    let stats = TrackStats {
        generated: k_star,
        attempts,
        flagged_rows: Vec::new(),
    };
    Ok((label_tracks(streamlines, params, "region"), stats))
}

/// Parallel per-voxel batch generation; matches the serial generator.
pub fn generate_voxel_tracks_par(
    region: &SourceRegion,
    field: &DirectionField,
    params: &TrackParams,
    k: u64,
    threads: usize,
) -> Result<(Tractogram, TrackStats)> {
    params.validate()?;
    if k == 0 {
        return Err(CoreError::BadRunParams {
            reason: "k must be at least 1",
        }
        .into());
    }
    struct RowTracks {
        streamlines: Vec<Streamline>,
        attempts: u64,
    }
    let rows: Vec<RowTracks> = pool(threads)?.install(|| {
        (0..region.len())
            .into_par_iter()
            .map(|row| {
                let voxel = region.voxel(row);
                let mut streamlines = Vec::new();
                let mut attempt = 0u64;
                while (streamlines.len() as u64) < k && attempt < RETRY_FACTOR * k {
                    let ordinal = voxel_stream_ordinal(row, attempt as u32);
                    if let Some(l) = voxel_attempt(voxel, region.affine(), field, params, ordinal)
                    {
                        streamlines.push(l);
                    }
                    attempt += 1;
                }
                RowTracks {
                    streamlines,
                    attempts: attempt,
                }
            })
            .collect()
    });
    let mut streamlines = Vec::new();
    let mut stats = TrackStats::default();
    for (row, mut r) in rows.into_iter().enumerate() {
        if (r.streamlines.len() as u64) < k {
            stats.flagged_rows.push(row);
        }
        stats.generated += r.streamlines.len() as u64;
        stats.attempts += r.attempts;
        streamlines.append(&mut r.streamlines);
    }
    Ok((label_tracks(streamlines, params, "per-voxel"), stats))
}

/// One contribution per streamline (parallel map); callers replay them into
/// any builder. Exposed for pipeline tests.
pub fn contributions_par(
    tg: &Tractogram,
    region: &SourceRegion,
    cols: &TargetCols,
    targets: &LabelVolume,
    mode: EndpointMode,
    threads: usize,
) -> Result<Vec<Contribution>> {
    Ok(pool(threads)?.install(|| {
        tg.streamlines
            .par_iter()
            .map(|l| contribution(l, region, cols, targets, mode))
            .collect()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tracon_core::connectivity::{
        connectivity_from_tractogram, proposed_connectivity, traditional_connectivity,
    };
    use tracon_core::tracking::{generate_region_tracks, generate_voxel_tracks};
    use tracon_core::Affine;

    /// 12x3x3 corridor: targets at the x ends, trackable field between them,
    /// 3-voxel source bar in the middle.
    fn corridor() -> (LabelVolume, LabelVolume, DirectionField) {
        let affine = Affine::scaling([1.0; 3], [0.0; 3]).unwrap();
        let dims = [12, 3, 3];
        let source = LabelVolume::from_fn(dims, affine, |v| {
            if (4..7).contains(&v.i) && v.j == 1 && v.k == 1 {
                1
            } else {
                0
            }
        })
        .unwrap();
        let targets = LabelVolume::from_fn(dims, affine, |v| {
            if v.i < 2 {
                3
            } else if v.i >= 10 {
                5
            } else {
                0
            }
        })
        .unwrap();
        let field = DirectionField::from_fn(dims, affine, |v| {
            if (2..10).contains(&v.i) {
                [1.0, 0.0, 0.0]
            } else {
                [0.0, 0.0, 0.0]
            }
        })
        .unwrap();
        (source, targets, field)
    }

    fn noisy_params() -> TrackParams {
        TrackParams {
            step_size: 0.4,
            max_steps: 60,
            angular_noise_deg: 8.0,
            min_length_mm: 0.0,
            rng_seed: 41,
        }
    }

    #[test]
    fn proposed_parallel_equals_serial_for_any_thread_count() {
        let (source, targets, field) = corridor();
        let tp = noisy_params();
        let rp = RunParams {
            k: 5,
            k_star: 400,
            endpoint_mode: EndpointMode::Both,
        };
        let serial = proposed_connectivity(&source, 1, &targets, &field, &tp, &rp).unwrap();
        for threads in [1, 2, 7] {
            let par =
                proposed_connectivity_par(&source, 1, &targets, &field, &tp, &rp, threads)
                    .unwrap();
            assert_eq!(par, serial, "threads = {threads}");
        }
    }

    #[test]
    fn traditional_parallel_equals_serial() {
        let (source, targets, field) = corridor();
        let tp = noisy_params();
        let rp = RunParams {
            k: 30,
            k_star: 10,
            endpoint_mode: EndpointMode::Last,
        };
        let serial = traditional_connectivity(&source, 1, &targets, &field, &tp, &rp).unwrap();
        let par =
            traditional_connectivity_par(&source, 1, &targets, &field, &tp, &rp, 3).unwrap();
        assert_eq!(par, serial);
    }

    #[test]
    fn accumulation_is_independent_of_partitioning() {
        let (source, targets, field) = corridor();
        let tp = noisy_params();
        let region = SourceRegion::new(&source, 1).unwrap();
        let (tg, _) = generate_region_tracks(&region, &field, &tp, 700).unwrap();
        let serial =
            connectivity_from_tractogram(&tg, &source, 1, &targets, EndpointMode::Both).unwrap();
        for threads in [1, 2, 5] {
            let par = connectivity_from_tractogram_par(
                &tg,
                &source,
                1,
                &targets,
                EndpointMode::Both,
                threads,
            )
            .unwrap();
            assert_eq!(par, serial, "threads = {threads}");
        }
    }

    #[test]
    fn parallel_track_generation_matches_serial() {
        let (source, _, field) = corridor();
        let tp = noisy_params();
        let region = SourceRegion::new(&source, 1).unwrap();
        let (serial_tg, serial_stats) = generate_region_tracks(&region, &field, &tp, 90).unwrap();
        let (par_tg, par_stats) = generate_region_tracks_par(&region, &field, &tp, 90, 4).unwrap();
        assert_eq!(par_tg, serial_tg);
        assert_eq!(par_stats, serial_stats);

        let (serial_tg, serial_stats) = generate_voxel_tracks(&region, &field, &tp, 12).unwrap();
        let (par_tg, par_stats) = generate_voxel_tracks_par(&region, &field, &tp, 12, 4).unwrap();
        assert_eq!(par_tg, serial_tg);
        assert_eq!(par_stats, serial_stats);
    }

    #[test]
    fn attempt_cap_reports_progress() {
        let (source, targets, _) = corridor();
        let affine = *source.affine();
        let dead = DirectionField::from_fn([12, 3, 3], affine, |_| [0.0; 3]).unwrap();
        let tp = TrackParams::default();
        let rp = RunParams {
            k: 1,
            k_star: 10,
            endpoint_mode: EndpointMode::Both,
        };
        match proposed_connectivity_par(&source, 1, &targets, &dead, &tp, &rp, 2) {
            Err(RunnerError::Core(CoreError::AttemptCapExhausted {
                generated: 0,
                requested: 10,
            })) => {}
            other => panic!("expected AttemptCapExhausted, got {other:?}"),
        }
    }
}
