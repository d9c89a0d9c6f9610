//! Acceptance suite: one test per release criterion, each printing a
//! `acceptance N (...): pass` line on success. Criteria cover traversal
//! exactness, upsampling invariance, statistical equivalence of the two
//! seeding schemes, the wall-time scaling trend, super-resolution
//! self-consistency, byte-level determinism of the CLI, format fidelity, and
//! the counting invariants.
//!
//! Timing budgets assume a release-grade test profile (the workspace builds
//! tests at opt-level 2) and are generous for a single worker.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use tracon::bench::{run_bench, BenchConfig};
use tracon::runner::{
    generate_region_tracks_par, proposed_connectivity_par, traditional_connectivity_par,
};
use tracon::{matio, nifti, tck};
use tracon_core::connectivity::connectivity_from_tractogram;
use tracon_core::glyph::row_sectors;
use tracon_core::grid::{segment_voxels, voxel_of};
use tracon_core::phantom::{Phantom, PhantomConfig, PhantomKind};
use tracon_core::streamline::{passthrough_rows, upsample};
use tracon_core::superres::superres_connectivity;
use tracon_core::{
    Affine, Algorithm, ConnectivityMatrix, EndpointMode, GridShape, LabelVolume, RunParams,
    SourceRegion, TrackParams, Tractogram,
};

fn report(criterion: usize, label: &str) {
    println!("acceptance {criterion} ({label}): pass");
}

/// Independent oracle: fraction of the parameter range of segment `a..b`
/// spent inside voxel `v`, by slab-clipping in continuous index coordinates
/// where cell `v` spans `[v - 0.5, v + 0.5)` per axis.
fn parametric_overlap(a: [f64; 3], b: [f64; 3], v: [i32; 3], affine: &Affine) -> f64 {
    let ca = affine.apply_inverse(a);
    let cb = affine.apply_inverse(b);
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    for ax in 0..3 {
        let lo = v[ax] as f64 - 0.5;
        let hi = v[ax] as f64 + 0.5;
        let s = ca[ax];
        let d = cb[ax] - s;
        if d.abs() < 1e-12 {
            if s < lo || s >= hi {
                return 0.0;
            }
        } else {
            let mut ta = (lo - s) / d;
            let mut tb = (hi - s) / d;
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 >= t1 {
                return 0.0;
            }
        }
    }
    t1 - t0
}

/// World-length (mm) a polyline spends inside voxel `v`.
fn polyline_overlap_mm(l: &tracon_core::Streamline, v: [i32; 3], affine: &Affine) -> f64 {
    l.segments()
        .map(|(p, q)| {
            let len = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2) + (q[2] - p[2]).powi(2))
                .sqrt();
            parametric_overlap(p, q, v, affine) * len
        })
        .sum()
}

fn random_rotation(rng: &mut ChaCha12Rng) -> [[f64; 3]; 3] {
    let axis = loop {
        let v: [f64; 3] = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-3 {
            break [v[0] / n, v[1] / n, v[2] / n];
        }
    };
    let angle = rng.random_range(0.0..std::f64::consts::PI);
    let (s, c) = angle.sin_cos();
    let [x, y, z] = axis;
    [
        [
            c + x * x * (1.0 - c),
            x * y * (1.0 - c) - z * s,
            x * z * (1.0 - c) + y * s,
        ],
        [
            y * x * (1.0 - c) + z * s,
            c + y * y * (1.0 - c),
            y * z * (1.0 - c) - x * s,
        ],
        [
            z * x * (1.0 - c) - y * s,
            z * y * (1.0 - c) + x * s,
            c + z * z * (1.0 - c),
        ],
    ]
}

/// Rotation times per-axis scaling plus a translation: invertible by
/// construction, anisotropic, not axis-aligned.
fn random_affine(rng: &mut ChaCha12Rng) -> Affine {
    let r = random_rotation(rng);
    let s = [
        rng.random_range(0.3..2.2),
        rng.random_range(0.3..2.2),
        rng.random_range(0.3..2.2),
    ];
    let mut m = [[0.0f64; 4]; 4];
    for row in 0..3 {
        for col in 0..3 {
            m[row][col] = r[row][col] * s[col];
        }
        m[row][3] = rng.random_range(-25.0..25.0);
    }
    m[3] = [0.0, 0.0, 0.0, 1.0];
    Affine::new(m).unwrap()
}

#[test]
fn c1_traversal_matches_dense_sampling_oracle() {
    let started = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(101);
    let dims = [32usize, 32, 32];
    for _ in 0..1000 {
        let affine = random_affine(&mut rng);
        let shape = GridShape::new(dims, &affine).unwrap();
        let index_point = |rng: &mut ChaCha12Rng| {
            [
                rng.random_range(-2.0..34.0),
                rng.random_range(-2.0..34.0),
                rng.random_range(-2.0..34.0),
            ]
        };
        let a = affine.apply(index_point(&mut rng));
        let b = affine.apply(index_point(&mut rng));
        let walk: HashSet<[i32; 3]> = segment_voxels(a, b, &shape, &affine)
            .into_iter()
            .map(|v| v.as_array())
            .collect();

        let vs = affine.voxel_size();
        let spacing = vs[0].min(vs[1]).min(vs[2]) / 100.0;
        let len =
            ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2) + (b[2] - a[2]).powi(2)).sqrt();
        let n = (len / spacing).ceil().max(1.0) as usize;
        let mut dense: HashSet<[i32; 3]> = HashSet::new();
        for i in 0..=n {
            let t = i as f64 / n as f64;
            let p = [
                a[0] + t * (b[0] - a[0]),
                a[1] + t * (b[1] - a[1]),
                a[2] + t * (b[2] - a[2]),
            ];
            if let Some(v) = voxel_of(p, &shape, &affine) {
                dense.insert(v.as_array());
            }
        }

        // Sampling can miss a sliver thinner than one sample pitch; the walk
        // must never miss anything thicker than a grazing contact.
        let pitch_t = 1.0 / n as f64;
        for v in dense.difference(&walk) {
            let overlap = parametric_overlap(a, b, *v, &affine);
            assert!(
                overlap < 1e-6,
                "walk missed {v:?} with parametric overlap {overlap:e}"
            );
        }
        for v in walk.difference(&dense) {
            let overlap = parametric_overlap(a, b, *v, &affine);
            assert!(
                overlap > -1e-9 && overlap < pitch_t + 1e-9,
                "walk added {v:?} with parametric overlap {overlap:e}, sample pitch {pitch_t:e}"
            );
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "took {elapsed:.1} s, budget 10 s");
    report(1, "exact traversal equals dense-sampling oracle on 1000 segments");
}

#[test]
fn c2_upsampling_preserves_passthrough_rows() {
    let phantom = Phantom::build(&PhantomConfig::slab(2.0)).unwrap();
    let region = SourceRegion::new(&phantom.source, 1).unwrap();
    let tp = TrackParams {
        step_size: 0.5,
        max_steps: 200,
        angular_noise_deg: 8.0,
        min_length_mm: 0.0,
        rng_seed: 202,
    };
    let (tg, _) = generate_region_tracks_par(&region, &phantom.field, &tp, 200, 1).unwrap();
    assert_eq!(tg.len(), 200);
    for l in &tg.streamlines {
        let base = passthrough_rows(l, &region);
        assert!(!base.is_empty(), "seeded streamline must cross its seed row");
        for factor in [2.0, 5.0, 17.0] {
            let up = upsample(l, tp.step_size / factor).unwrap();
            let rows = passthrough_rows(&up, &region);
            if rows == base {
                continue;
            }
            // Any discrepancy must be a grazing contact on both routes.
            let before: HashSet<usize> = base.iter().copied().collect();
            let after: HashSet<usize> = rows.iter().copied().collect();
            for &row in before.symmetric_difference(&after) {
                let v = region.voxel(row).as_array();
                let overlap = polyline_overlap_mm(l, v, region.affine());
                assert!(
                    overlap < 1e-6,
                    "factor {factor}: row {row} ({v:?}) differs with {overlap:e} mm overlap"
                );
            }
        }
    }
    report(2, "passthrough rows unchanged by 2x, 5x, 17x upsampling");
}

#[test]
fn c3_seeding_schemes_are_statistically_equivalent_on_the_symmetric_phantom() {
    let started = Instant::now();
    let phantom = Phantom::build(&PhantomConfig::slab(2.0)).unwrap();
    let config = &phantom.config;
    let tp = TrackParams {
        step_size: 0.5,
        max_steps: 1000,
        angular_noise_deg: 5.0,
        min_length_mm: 0.0,
        rng_seed: 303,
    };
    let rp = RunParams {
        k: 100,
        k_star: 10_000,
        endpoint_mode: EndpointMode::Both,
    };
    let traditional = traditional_connectivity_par(
        &phantom.source,
        config.source_label,
        &phantom.targets,
        &phantom.field,
        &tp,
        &rp,
        1,
    )
    .unwrap();
    let proposed = proposed_connectivity_par(
        &phantom.source,
        config.source_label,
        &phantom.targets,
        &phantom.field,
        &tp,
        &rp,
        1,
    )
    .unwrap();

    for (name, matrix) in [("per-voxel", &traditional), ("region", &proposed)] {
        assert!(matrix.provenance().flagged_rows.is_empty());
        let norm = matrix.normalize_rows();
        for row in 0..matrix.n_rows() {
            assert!(!norm.is_zero_row(row), "{name} row {row} has no counts");
            for (&fraction, &label) in norm.row(row).iter().zip(matrix.col_labels()) {
                assert!(
                    (fraction - 0.5).abs() <= 0.05,
                    "{name} row {row} fraction to {label} is {fraction}"
                );
            }
        }
    }

    let parcels_traditional = traditional
        .parcellate(&phantom.source, config.source_label)
        .unwrap();
    let parcels_proposed = proposed
        .parcellate(&phantom.source, config.source_label)
        .unwrap();
    assert_eq!(
        parcels_traditional.labels(),
        parcels_proposed.labels(),
        "parcellations disagree"
    );

    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "took {elapsed:.1} s, budget 60 s");
    report(3, "both seeding schemes give 50/50 rows and identical parcellations");
}

#[test]
fn c4_wall_time_scales_linearly_per_voxel_and_stays_flat_for_region_seeding() {
    let started = Instant::now();
    let resolutions = [2.0, 1.0, 0.5];
    let config = BenchConfig {
        kind: PhantomKind::Bar,
        resolutions_mm: resolutions.to_vec(),
        k: 400,
        k_star: 2000,
        repeats: 5,
        threads: 1,
        seed: 404,
    };
    let records = run_bench(&config).unwrap();

    let mut cells: HashMap<(String, u64), Vec<f64>> = HashMap::new();
    for r in &records {
        cells
            .entry((r.algorithm.clone(), r.resolution_mm.to_bits()))
            .or_default()
            .push(r.wall_time_s);
    }
    let median = |alg: &str, res: f64| -> f64 {
        let mut times = cells[&(alg.to_string(), res.to_bits())].clone();
        times.sort_by(f64::total_cmp);
        times[times.len() / 2]
    };
    let t: Vec<f64> = resolutions.iter().map(|&r| median("traditional", r)).collect();
    let p: Vec<f64> = resolutions.iter().map(|&r| median("proposed", r)).collect();

    // Source voxel counts triple-check the 1 : 8 : 64 sweep.
    let n: Vec<usize> = records
        .iter()
        .filter(|r| r.algorithm == "traditional")
        .map(|r| r.n_source_voxels)
        .collect();
    assert!(n.contains(&3) && n.contains(&24) && n.contains(&192));

    assert!(
        t[1] / t[0] >= 4.0,
        "per-voxel seeding grew only {:.2}x over the first 8x voxel step (times {t:?})",
        t[1] / t[0]
    );
    assert!(
        t[2] / t[1] >= 4.0,
        "per-voxel seeding grew only {:.2}x over the second 8x voxel step (times {t:?})",
        t[2] / t[1]
    );
    assert!(
        p[2] / p[0] <= 2.0,
        "region seeding grew {:.2}x across the sweep (times {p:?})",
        p[2] / p[0]
    );
    let speedups: Vec<f64> = t.iter().zip(&p).map(|(t, p)| t / p).collect();
    assert!(
        speedups[0] < speedups[1] && speedups[1] < speedups[2],
        "speedup not strictly increasing: {speedups:?}"
    );

    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 600.0, "took {elapsed:.1} s, budget 600 s");
    report(
        4,
        "per-voxel cost tracks voxel count, region cost stays flat, speedup rises",
    );
}

#[test]
fn c5_superres_equals_plain_accumulation_and_finds_the_midplane() {
    // Reach-limited tracks: 17 steps of 0.5 mm reach 8.5 mm each way, so a
    // streamline touches one target at most and coverage windows cross over
    // exactly at the midplane.
    let mut config = PhantomConfig::bar(2.0);
    config.source_x_mm = [6.0, 34.0];
    let coarse = Phantom::build(&config).unwrap();
    let mut hi_config = config.clone();
    hi_config.source_res_mm = 0.5;
    let hi = Phantom::build(&hi_config).unwrap();

    let region = SourceRegion::new(&coarse.source, config.source_label).unwrap();
    let tp = TrackParams {
        step_size: 0.5,
        max_steps: 17,
        angular_noise_deg: 0.0,
        min_length_mm: 0.0,
        rng_seed: 505,
    };
    let (tg, _) = generate_region_tracks_par(&region, &coarse.field, &tp, 20_000, 1).unwrap();

    let sr = superres_connectivity(
        &tg,
        &hi.source,
        config.source_label,
        &hi.targets,
        EndpointMode::Both,
    )
    .unwrap();
    assert_eq!(sr.provenance().algorithm, Algorithm::SuperRes);

    // Plain accumulation on the same fine grid, without any upsampling.
    let plain = connectivity_from_tractogram(
        &tg,
        &hi.source,
        config.source_label,
        &hi.targets,
        EndpointMode::Both,
    )
    .unwrap();
    assert_eq!(sr.rows(), plain.rows());
    assert_eq!(sr.col_labels(), plain.col_labels());
    assert_eq!(sr.counts(), plain.counts(), "upsampled scoring changed counts");

    let parcels = sr.parcellate(&hi.source, config.source_label).unwrap();
    let midplane = coarse.midplane_x();
    let pitch = hi.source.shape().voxel_size()[0];
    let affine = *hi.source.affine();
    let left = config.left_label;
    let right = config.right_label;
    let mut seen_left = 0usize;
    let mut seen_right = 0usize;
    for v in hi.source.voxels_with_label(config.source_label) {
        let x = affine.apply([v.i as f64, v.j as f64, v.k as f64])[0];
        let label = parcels.label_at(v).unwrap();
        assert_ne!(label, 0, "uncovered fine voxel at x = {x} mm");
        if x < midplane - pitch {
            assert_eq!(label, left, "voxel at x = {x} mm flipped right");
            seen_left += 1;
        } else if x > midplane + pitch {
            assert_eq!(label, right, "voxel at x = {x} mm flipped left");
            seen_right += 1;
        }
    }
    assert!(seen_left > 0 && seen_right > 0);
    report(5, "superres equals plain fine-grid scoring, boundary within one fine voxel");
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tracon"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = binary().args(args).output().expect("spawn tracon");
    assert_eq!(
        out.status.code(),
        Some(0),
        "tracon {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_phantom(dir: &Path, phantom: &Phantom) -> (PathBuf, PathBuf, PathBuf) {
    let field = dir.join("field.nii");
    let source = dir.join("source.nii");
    let targets = dir.join("targets.nii");
    nifti::write_direction_field(&field, &phantom.field).unwrap();
    nifti::write_labels(&source, &phantom.source).unwrap();
    nifti::write_labels(&targets, &phantom.targets).unwrap();
    (field, source, targets)
}

#[test]
fn c6_cli_outputs_are_byte_identical_across_threads_and_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let phantom = Phantom::build(&PhantomConfig::slab(2.0)).unwrap();
    let (field, source, targets) = write_phantom(dir.path(), &phantom);
    let path = |name: &str| dir.path().join(name);
    let s = |p: &Path| p.to_str().unwrap().to_string();

    let mut csvs = Vec::new();
    let mut sidecars = Vec::new();
    for threads in ["1", "2", "8"] {
        let out = path(&format!("c{threads}.csv"));
        run_ok(&[
            "connectivity",
            "--algorithm",
            "proposed",
            "--source",
            &s(&source),
            "--label",
            "1",
            "--targets",
            &s(&targets),
            "--field",
            &s(&field),
            "--kstar",
            "400",
            "--noise-deg",
            "5",
            "--seed",
            "606",
            "--threads",
            threads,
            "--out",
            &s(&out),
        ]);
        csvs.push(std::fs::read(&out).unwrap());
        sidecars.push(std::fs::read(matio::sidecar_path(&out)).unwrap());
    }
    assert_eq!(csvs[0], csvs[1], "CSV differs between 1 and 2 workers");
    assert_eq!(csvs[0], csvs[2], "CSV differs between 1 and 8 workers");
    assert_eq!(sidecars[0], sidecars[1]);
    assert_eq!(sidecars[0], sidecars[2]);

    let mut tcks = Vec::new();
    for name in ["t1.tck", "t2.tck"] {
        let out = path(name);
        run_ok(&[
            "track",
            "--field",
            &s(&field),
            "--source",
            &s(&source),
            "--label",
            "1",
            "--algorithm",
            "region",
            "--kstar",
            "200",
            "--noise-deg",
            "5",
            "--seed",
            "606",
            "--out",
            &s(&out),
        ]);
        tcks.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(tcks[0], tcks[1], "TCK differs between identical runs");
    report(6, "CLI outputs byte-identical across worker counts and reruns");
}

#[test]
fn c7_formats_round_trip_without_loss() {
    let dir = tempfile::tempdir().unwrap();

    // Tractogram bytes survive encode -> parse -> encode unchanged.
    let phantom = Phantom::build(&PhantomConfig::slab(2.0)).unwrap();
    let region = SourceRegion::new(&phantom.source, 1).unwrap();
    let tp = TrackParams {
        step_size: 0.5,
        max_steps: 200,
        angular_noise_deg: 8.0,
        min_length_mm: 0.0,
        rng_seed: 707,
    };
    let (tg, _) = generate_region_tracks_par(&region, &phantom.field, &tp, 50, 1).unwrap();
    let bytes = tck::encode_tck(&tg).unwrap();
    let reread = tck::parse_tck(&bytes).unwrap();
    assert_eq!(bytes, tck::encode_tck(&reread).unwrap());
    let tck_path = dir.path().join("t.tck");
    tck::write_tck(&tck_path, &tg).unwrap();
    let from_file = tck::read_tck(&tck_path).unwrap();
    // Storage is Float32, so a file cycle quantizes coordinates once and
    // then holds them exactly.
    assert_eq!(from_file.streamlines, reread.streamlines);
    tck::write_tck(&tck_path, &from_file).unwrap();
    assert_eq!(std::fs::read(&tck_path).unwrap(), bytes);

    // Label volumes with a rotated anisotropic affine: labels exact, affine
    // within Float32 precision.
    let mut rng = ChaCha12Rng::seed_from_u64(717);
    for case in 0..10 {
        let affine = random_affine(&mut rng);
        let volume = LabelVolume::from_fn([7, 6, 5], affine, |v| {
            ((v.i * 31 + v.j * 7 + v.k) % 9) as u32
        })
        .unwrap();
        let path = dir.path().join(format!("labels{case}.nii"));
        nifti::write_labels(&path, &volume).unwrap();
        let back = nifti::read_labels(&path).unwrap();
        assert_eq!(back.labels(), volume.labels());
        let a = volume.affine().matrix();
        let b = back.affine().matrix();
        for row in 0..4 {
            for col in 0..4 {
                let tol = 1e-6 * a[row][col].abs().max(1.0);
                assert!(
                    (a[row][col] - b[row][col]).abs() <= tol,
                    "affine[{row}][{col}] drifted: {} vs {}",
                    a[row][col],
                    b[row][col]
                );
            }
        }
    }
    report(7, "TCK bytes and NIfTI labels plus affine survive round trips");
}

#[test]
fn c8_counting_invariants_hold() {
    let phantom = Phantom::build(&PhantomConfig::slab(2.0)).unwrap();
    let tp = TrackParams {
        step_size: 0.5,
        max_steps: 1000,
        angular_noise_deg: 5.0,
        min_length_mm: 0.0,
        rng_seed: 808,
    };

    // Per-voxel seeding in last-endpoint mode puts exactly one count per
    // accepted streamline somewhere in the row, unassigned column included.
    let k = 25;
    let rp = RunParams {
        k,
        k_star: 1000,
        endpoint_mode: EndpointMode::Last,
    };
    let last_mode =
        traditional_connectivity_par(&phantom.source, 1, &phantom.targets, &phantom.field, &tp, &rp, 1)
            .unwrap();
    assert!(last_mode.provenance().flagged_rows.is_empty());
    for row in 0..last_mode.n_rows() {
        let total: u64 = last_mode.row_counts(row).iter().sum();
        assert_eq!(total, k, "row {row} sums to {total}, not K = {k}");
    }

    // Accumulation is additive over tractogram concatenation.
    let region = SourceRegion::new(&phantom.source, 1).unwrap();
    let (tg, _) = generate_region_tracks_par(&region, &phantom.field, &tp, 300, 1).unwrap();
    let mut first = tg.streamlines.clone();
    let second = first.split_off(120);
    let whole = connectivity_from_tractogram(&tg, &phantom.source, 1, &phantom.targets, EndpointMode::Both)
        .unwrap();
    let part_a = connectivity_from_tractogram(
        &Tractogram::new(first),
        &phantom.source,
        1,
        &phantom.targets,
        EndpointMode::Both,
    )
    .unwrap();
    let part_b = connectivity_from_tractogram(
        &Tractogram::new(second),
        &phantom.source,
        1,
        &phantom.targets,
        EndpointMode::Both,
    )
    .unwrap();
    let merged = part_a.merged(&part_b).unwrap();
    assert_eq!(merged.rows(), whole.rows());
    assert_eq!(merged.col_labels(), whole.col_labels());
    assert_eq!(merged.counts(), whole.counts());

    // Scaling every count by the same positive factor never moves the argmax.
    let scaled = ConnectivityMatrix::from_parts(
        whole.rows().to_vec(),
        whole.col_labels().to_vec(),
        whole.counts().iter().map(|&c| c * 7).collect(),
        whole.provenance().clone(),
    )
    .unwrap();
    let parcels = whole.parcellate(&phantom.source, 1).unwrap();
    let parcels_scaled = scaled.parcellate(&phantom.source, 1).unwrap();
    assert_eq!(parcels.labels(), parcels_scaled.labels());

    // Pie sectors of any non-empty row close the circle.
    let mut checked = 0usize;
    for matrix in [&whole, &last_mode] {
        for min_fraction in [0.0, 0.02, 0.3] {
            for row in 0..matrix.n_rows() {
                let sectors = row_sectors(matrix.row_counts(row), matrix.col_labels(), min_fraction);
                if sectors.is_empty() {
                    continue;
                }
                let sum: f64 = sectors.iter().map(|s| s.angle_deg).sum();
                assert!(
                    (sum - 360.0).abs() <= 1e-6,
                    "row {row} sectors sum to {sum} degrees"
                );
                checked += 1;
            }
        }
    }
    let synthetic = row_sectors(&[5, 1, 2, 3, 0, 9], &[2, 4, 6, 8, 10], 0.25);
    let sum: f64 = synthetic.iter().map(|s| s.angle_deg).sum();
    assert!((sum - 360.0).abs() <= 1e-6);
    assert!(checked > 0);
    report(8, "row sums, additivity, argmax scaling, and sector closure all hold");
}
