//! Seeded probabilistic streamline propagation over a direction field.
//!
//! Reproducibility contract: every seed-and-track attempt owns a dedicated
//! counter-mode RNG stream derived from `(rng_seed, attempt ordinal)`, so a
//! run's output depends only on its parameters, never on scheduling. Region
//! runs use the global attempt ordinal directly; per-voxel runs pack
//! `(row, attempt)` into one ordinal so rows stay independent.

use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::{voxel_of, Affine, GridShape, SourceRegion, VoxelIndex};
use crate::streamline::{Streamline, Tractogram};
use crate::vec3::{self, Vec3};

/// Direction vectors must be unit within this tolerance, or exactly zero.
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// Attempt budget per requested streamline before a run gives up.
pub const RETRY_FACTOR: u64 = 50;

/// Per-voxel unit direction vectors; zero marks untrackable voxels.
#[derive(Debug, Clone)]
pub struct DirectionField {
    shape: GridShape,
    affine: Affine,
    vectors: Vec<Vec3>,
}

impl DirectionField {
    pub fn new(dims: [usize; 3], affine: Affine, vectors: Vec<Vec3>) -> Result<Self> {
        let shape = GridShape::new(dims, &affine)?;
        if vectors.len() != shape.n_voxels() {
            return Err(Error::DataLengthMismatch {
                got: vectors.len(),
                expected: shape.n_voxels(),
            });
        }
        for (index, v) in vectors.iter().enumerate() {
            let norm = vec3::norm(*v);
            if norm != 0.0 && libm::fabs(norm - 1.0) > UNIT_NORM_TOL {
                return Err(Error::NonUnitVector { index, norm });
            }
        }
        Ok(Self { shape, affine, vectors })
    }

    pub fn from_fn(
        dims: [usize; 3],
        affine: Affine,
        mut f: impl FnMut(VoxelIndex) -> Vec3,
    ) -> Result<Self> {
        let shape = GridShape::new(dims, &affine)?;
        let mut vectors = Vec::with_capacity(shape.n_voxels());
        for idx in 0..shape.n_voxels() {
            vectors.push(f(shape.from_linear(idx)));
        }
        Self::new(dims, affine, vectors)
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn affine(&self) -> &Affine {
        &self.affine
    }

    pub fn vectors(&self) -> &[Vec3] {
        &self.vectors
    }

    /// Vector at a voxel, `None` out of bounds.
    pub fn vector_at(&self, v: VoxelIndex) -> Option<Vec3> {
        if self.shape.contains(v) {
            Some(self.vectors[self.shape.linear(v)])
        } else {
            None
        }
    }

    pub fn voxel_of(&self, p: Vec3) -> Option<VoxelIndex> {
        voxel_of(p, &self.shape, &self.affine)
    }

    /// Nearest-neighbor field lookup at a world point. `None` when the point
    /// is outside the field or in a zero (untrackable) voxel.
    pub fn direction_at(&self, p: Vec3) -> Option<Vec3> {
        let v = self.voxel_of(p)?;
        let d = self.vectors[self.shape.linear(v)];
        if vec3::is_zero(d) {
            None
        } else {
            Some(d)
        }
    }
}

/// Parameters of a single streamline propagation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackParams {
    /// Propagation step in mm.
    pub step_size: f64,
    /// Step budget per direction (each half of the track).
    pub max_steps: u32,
    /// Std dev of the per-step angular perturbation, degrees.
    pub angular_noise_deg: f64,
    /// Tracks shorter than this are discarded.
    pub min_length_mm: f64,
    /// Master seed; every attempt derives its own stream from it.
    pub rng_seed: u64,
}

impl TrackParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::NonPositiveParam {
                what: "step_size",
                value: self.step_size,
            });
        }
        if !(self.angular_noise_deg >= 0.0 && self.angular_noise_deg.is_finite()) {
            return Err(Error::NonPositiveParam {
                what: "angular_noise_deg",
                value: self.angular_noise_deg,
            });
        }
        if !(self.min_length_mm >= 0.0 && self.min_length_mm.is_finite()) {
            return Err(Error::NonPositiveParam {
                what: "min_length_mm",
                value: self.min_length_mm,
            });
        }
        if self.max_steps == 0 {
            return Err(Error::NonPositiveParam {
                what: "max_steps",
                value: 0.0,
            });
        }
        Ok(())
    }
}

impl Default for TrackParams {
    fn default() -> Self {
        Self {
            step_size: 0.5,
            max_steps: 1000,
            angular_noise_deg: 0.0,
            min_length_mm: 0.0,
            rng_seed: 0,
        }
    }
}

/// Per-run streamline budgets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunParams {
    /// Accepted streamlines per source voxel (per-voxel seeding).
    pub k: u64,
    /// Total accepted streamlines (region seeding).
    pub k_star: u64,
    pub endpoint_mode: crate::streamline::EndpointMode,
}

impl Default for RunParams {
    fn default() -> Self {
        Self {
            k: 200,
            k_star: 100_000,
            endpoint_mode: crate::streamline::EndpointMode::default(),
        }
    }
}

/// RNG for one attempt: one keyed cipher, one stream per ordinal.
pub fn stream_rng(master_seed: u64, ordinal: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(ordinal);
    rng
}

/// Packs a per-voxel attempt into one stream ordinal; rows are independent
/// of each other and of how work is scheduled across them.
pub fn voxel_stream_ordinal(row: usize, attempt: u32) -> u64 {
    ((row as u64) << 32) | attempt as u64
}

/// Uniform sample inside one voxel's cell, in world mm.
pub fn sample_seed_in_voxel<R: Rng>(v: VoxelIndex, affine: &Affine, rng: &mut R) -> Vec3 {
    let c = [
        v.i as f64 - 0.5 + rng.random::<f64>(),
        v.j as f64 - 0.5 + rng.random::<f64>(),
        v.k as f64 - 0.5 + rng.random::<f64>(),
    ];
    affine.apply(c)
}

/// Uniform sample over a labeled region: pick a voxel uniformly from the
/// region's voxel list, then sample within it. A single-voxel region draws
/// exactly like [`sample_seed_in_voxel`] on that voxel.
pub fn sample_seed_in_region<R: Rng>(region: &SourceRegion, rng: &mut R) -> Vec3 {
    let row = if region.len() == 1 {
        0
    } else {
        rng.random_range(0..region.len())
    };
    sample_seed_in_voxel(region.voxel(row), region.affine(), rng)
}

/// Deterministic right-handed orthonormal pair completing `d`.
fn orthonormal_basis(d: Vec3) -> (Vec3, Vec3) {
    let ax = if libm::fabs(d[0]) <= libm::fabs(d[1]) && libm::fabs(d[0]) <= libm::fabs(d[2]) {
        [1.0, 0.0, 0.0]
    } else if libm::fabs(d[1]) <= libm::fabs(d[2]) {
        [0.0, 1.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    let e1 = vec3::normalize(vec3::cross(d, ax));
    let e2 = vec3::cross(d, e1);
    (e1, e2)
}

/// Rotates `d` by a polar angle drawn from N(0, sigma) at a uniform azimuth.
/// Draw order is fixed: polar first, then azimuth.
fn perturb<R: Rng>(d: Vec3, sigma_rad: f64, rng: &mut R) -> Vec3 {
    let theta: f64 = sigma_rad * rng.sample::<f64, _>(StandardNormal);
    let phi = 2.0 * core::f64::consts::PI * rng.random::<f64>();
    let (e1, e2) = orthonormal_basis(d);
    let lateral = vec3::add(
        vec3::scale(e1, libm::cos(phi)),
        vec3::scale(e2, libm::sin(phi)),
    );
    vec3::add(
        vec3::scale(d, libm::cos(theta)),
        vec3::scale(lateral, libm::sin(theta)),
    )
}

/// Marches from `start` with initial heading `init_dir`, returning the points
/// after `start`. Stops on leaving the field, entering a zero voxel, or the
/// step budget; the first point past the trackable domain is retained.
fn march<R: Rng>(
    start: Vec3,
    init_dir: Vec3,
    field: &DirectionField,
    params: &TrackParams,
    rng: &mut R,
) -> Vec<Vec3> {
    let sigma_rad = params.angular_noise_deg.to_radians();
    let mut points = Vec::new();
    let mut p = start;
    let mut prev_dir = init_dir;
    for _ in 0..params.max_steps {
        let mut base = match field.direction_at(p) {
            Some(d) => d,
            None => break,
        };
        // Fields encode orientation, not polarity: keep the heading coherent
        // with the previous step.
        if vec3::dot(base, prev_dir) < 0.0 {
            base = vec3::neg(base);
        }
        let dir = if sigma_rad == 0.0 {
            base
        } else {
            perturb(base, sigma_rad, rng)
        };
        p = vec3::add(p, vec3::scale(dir, params.step_size));
        points.push(p);
        prev_dir = dir;
    }
    points
}

/// Propagates one streamline from `seed` in both directions along the field.
///
/// Returns `None` when the seed is untrackable (outside the field or in a
/// zero voxel) or the finished track is shorter than `min_length_mm` or has
/// fewer than two points. Point order runs from the far end of the
/// initial-direction half, through the seed, to the far end of the opposite
/// half; all gaps equal `step_size`.
pub fn trac<R: Rng>(
    seed: Vec3,
    field: &DirectionField,
    params: &TrackParams,
    rng: &mut R,
) -> Option<Streamline> {
    let d0 = field.direction_at(seed)?;
    let forward = march(seed, d0, field, params, rng);
    let backward = march(seed, vec3::neg(d0), field, params, rng);

    let total_points = forward.len() + backward.len() + 1;
    if total_points < 2 {
        return None;
    }
    let length = (forward.len() + backward.len()) as f64 * params.step_size;
    if length < params.min_length_mm {
        return None;
    }
    let mut points = Vec::with_capacity(total_points);
    points.extend(forward.iter().rev());
    points.push(seed);
    points.extend(backward.iter());
    Some(Streamline::new(points).expect("track points are finite and >= 2"))
}

/// One region-seeded attempt under its own RNG stream.
pub fn region_attempt(
    region: &SourceRegion,
    field: &DirectionField,
    params: &TrackParams,
    ordinal: u64,
) -> Option<Streamline> {
    let mut rng = stream_rng(params.rng_seed, ordinal);
    let seed = sample_seed_in_region(region, &mut rng);
    trac(seed, field, params, &mut rng)
}

/// One attempt seeded inside a fixed voxel under its own RNG stream.
pub fn voxel_attempt(
    voxel: VoxelIndex,
    affine: &Affine,
    field: &DirectionField,
    params: &TrackParams,
    ordinal: u64,
) -> Option<Streamline> {
    let mut rng = stream_rng(params.rng_seed, ordinal);
    let seed = sample_seed_in_voxel(voxel, affine, &mut rng);
    trac(seed, field, params, &mut rng)
}

/// Bookkeeping of a batch generation run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackStats {
    pub generated: u64,
    pub attempts: u64,
    /// Rows whose per-voxel budget ran out before `k` acceptances.
    pub flagged_rows: Vec<usize>,
}

/// Generates `k_star` streamlines seeded over the whole region, accepting
/// attempts in ordinal order. Fails after `RETRY_FACTOR * k_star` attempts.
pub fn generate_region_tracks(
    region: &SourceRegion,
    field: &DirectionField,
    params: &TrackParams,
    k_star: u64,
) -> Result<(Tractogram, TrackStats)> {
    params.validate()?;
    if k_star == 0 {
        return Err(Error::BadRunParams {
            reason: "k_star must be at least 1",
        });
    }
    let cap = RETRY_FACTOR * k_star;
    let mut streamlines = Vec::new();
    let mut attempts = 0u64;
    while (streamlines.len() as u64) < k_star && attempts < cap {
        if let Some(l) = region_attempt(region, field, params, attempts) {
            streamlines.push(l);
        }
        attempts += 1;
    }
    if (streamlines.len() as u64) < k_star {
        return Err(Error::AttemptCapExhausted {
            generated: streamlines.len() as u64,
            requested: k_star,
        });
    }
    let stats = TrackStats {
        generated: k_star,
        attempts,
        flagged_rows: Vec::new(),
    };
    Ok((label_tracks(streamlines, params, "region"), stats))
}

/// Generates up to `k` streamlines per region voxel. A voxel that exhausts
/// `RETRY_FACTOR * k` attempts keeps what it has and is flagged, not failed.
pub fn generate_voxel_tracks(
    region: &SourceRegion,
    field: &DirectionField,
    params: &TrackParams,
    k: u64,
) -> Result<(Tractogram, TrackStats)> {
    params.validate()?;
    if k == 0 {
        return Err(Error::BadRunParams {
            reason: "k must be at least 1",
        });
    }
    let mut streamlines = Vec::new();
    let mut stats = TrackStats::default();
    for row in 0..region.len() {
        let voxel = region.voxel(row);
        let mut accepted = 0u64;
        let mut attempt = 0u64;
        while accepted < k && attempt < RETRY_FACTOR * k {
            let ordinal = voxel_stream_ordinal(row, attempt as u32);
            if let Some(l) = voxel_attempt(voxel, region.affine(), field, params, ordinal) {
                streamlines.push(l);
                accepted += 1;
            }
            attempt += 1;
        }
        stats.attempts += attempt;
        stats.generated += accepted;
        if accepted < k {
            stats.flagged_rows.push(row);
        }
    }
    Ok((label_tracks(streamlines, params, "per-voxel"), stats))
}

/// Wraps generated streamlines with the run's reproduction metadata. Batch
/// drivers (serial here, parallel in companion crates) share this so their
/// tractograms serialize identically.
pub fn label_tracks(streamlines: Vec<Streamline>, params: &TrackParams, seeding: &str) -> Tractogram {
    let mut tg = Tractogram::new(streamlines);
    tg.set_metadata("seeding", seeding);
    tg.set_metadata("step_size_mm", &alloc::format!("{}", params.step_size));
    tg.set_metadata(
        "angular_noise_deg",
        &alloc::format!("{}", params.angular_noise_deg),
    );
    tg.set_metadata("rng_seed", &alloc::format!("{}", params.rng_seed));
    tg
}
