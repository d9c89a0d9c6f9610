//! Voxel-to-region connectivity matrices and the algorithms that fill them.
//!
//! A matrix has one row per source voxel (rows follow [`SourceRegion`]'s
//! canonical ascending-linear order) and `M + 1` columns: column 0 counts
//! streamlines whose endpoints landed in no target region, columns `1..=M`
//! correspond to the sorted distinct non-zero target labels.
//!
//! Two fill strategies produce it:
//! - per-voxel seeding: `K` accepted streamlines per source voxel, each
//!   crediting only its seed voxel's row;
//! - region seeding: `K*` accepted streamlines over the whole region, each
//!   crediting every source row it passes through.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{LabelVolume, SourceRegion, VoxelIndex};
use crate::streamline::{endpoint_region, passthrough_rows, EndpointMode, Streamline, Tractogram};
use crate::tracking::{
    region_attempt, voxel_attempt, voxel_stream_ordinal, DirectionField, RunParams, TrackParams,
    RETRY_FACTOR,
};

/// Column layout over the target labels: index 0 is the unassigned column,
/// index `i + 1` is `labels()[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetCols {
    labels: Vec<u32>,
}

impl TargetCols {
    /// Columns for every distinct non-zero label of the target volume.
    pub fn from_targets(targets: &LabelVolume) -> Self {
        Self {
            labels: targets.distinct_labels(),
        }
    }

    pub fn from_labels(labels: Vec<u32>) -> Result<Self> {
        let ok = labels.windows(2).all(|w| w[0] < w[1]) && labels.iter().all(|&l| l != 0);
        if ok {
            Ok(Self { labels })
        } else {
            Err(Error::BadColumnLabels { labels })
        }
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn n_cols(&self) -> usize {
        self.labels.len() + 1
    }

    /// Column of a target label; labels absent from the targets have none.
    pub fn col_of(&self, label: u32) -> Option<usize> {
        self.labels.binary_search(&label).ok().map(|i| i + 1)
    }
}

/// How a matrix was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// Per-voxel seeding, endpoint attribution only.
    Traditional,
    /// Region seeding with pass-through attribution.
    Proposed,
    /// Pass-through accumulation of an existing tractogram.
    FromTractogram,
    /// Pass-through accumulation on a finer source grid.
    SuperRes,
    /// Loaded from a serialization that does not carry provenance.
    Unspecified,
}

impl core::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let s = match self {
            Algorithm::Traditional => "traditional",
            Algorithm::Proposed => "proposed",
            Algorithm::FromTractogram => "from-tractogram",
            Algorithm::SuperRes => "superres",
            Algorithm::Unspecified => "unspecified",
        };
        f.write_str(s)
    }
}

/// Everything needed to reproduce and interpret a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub algorithm: Algorithm,
    pub k: Option<u64>,
    pub k_star: Option<u64>,
    pub rng_seed: Option<u64>,
    pub endpoint_mode: EndpointMode,
    pub source_dims: [usize; 3],
    pub target_dims: [usize; 3],
    pub generated_streamlines: u64,
    pub attempts: u64,
    /// Sum over streamlines of the number of source rows credited.
    pub passthrough_total: u64,
    /// Rows whose per-voxel retry budget ran out (per-voxel seeding only).
    pub flagged_rows: Vec<usize>,
}

impl Provenance {
    /// Mean number of source rows credited per streamline.
    pub fn mean_passthrough(&self) -> f64 {
        if self.generated_streamlines == 0 {
            0.0
        } else {
            self.passthrough_total as f64 / self.generated_streamlines as f64
        }
    }
}

/// Dense row-major count matrix with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityMatrix {
    rows: Vec<VoxelIndex>,
    col_labels: Vec<u32>,
    counts: Vec<u64>,
    provenance: Provenance,
}

impl ConnectivityMatrix {
    /// Reassembles a matrix from raw parts (deserializers use this).
    pub fn from_parts(
        rows: Vec<VoxelIndex>,
        col_labels: Vec<u32>,
        counts: Vec<u64>,
        provenance: Provenance,
    ) -> Result<Self> {
        let labels_ok =
            col_labels.windows(2).all(|w| w[0] < w[1]) && col_labels.iter().all(|&l| l != 0);
        if !labels_ok {
            return Err(Error::BadColumnLabels { labels: col_labels });
        }
        if rows.is_empty() {
            return Err(Error::BadMatrixParts {
                reason: "matrix needs at least one row",
            });
        }
        let mut sorted = rows.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != rows.len() {
            return Err(Error::BadMatrixParts {
                reason: "row voxels are not distinct",
            });
        }
        if counts.len() != rows.len() * (col_labels.len() + 1) {
            return Err(Error::BadMatrixParts {
                reason: "count buffer does not match rows x columns",
            });
        }
        Ok(Self {
            rows,
            col_labels,
            counts,
            provenance,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Column count including the unassigned column 0.
    pub fn n_cols(&self) -> usize {
        self.col_labels.len() + 1
    }

    pub fn col_labels(&self) -> &[u32] {
        &self.col_labels
    }

    pub fn rows(&self) -> &[VoxelIndex] {
        &self.rows
    }

    pub fn row_voxel(&self, row: usize) -> VoxelIndex {
        self.rows[row]
    }

    pub fn count(&self, row: usize, col: usize) -> u64 {
        self.counts[row * self.n_cols() + col]
    }

    /// One row including the leading unassigned column.
    pub fn row_counts(&self, row: usize) -> &[u64] {
        let nc = self.n_cols();
        &self.counts[row * nc..(row + 1) * nc]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub(crate) fn set_algorithm(&mut self, algorithm: Algorithm) {
        self.provenance.algorithm = algorithm;
    }

    /// Row sum over the target columns `1..=M`.
    pub fn row_sum_targets(&self, row: usize) -> u64 {
        self.row_counts(row)[1..].iter().sum()
    }

    /// Elementwise sum of two matrices over identical rows and columns;
    /// numeric provenance fields add, flagged rows union.
    pub fn merged(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::NotConformable {
                reason: "row voxels differ",
            });
        }
        if self.col_labels != other.col_labels {
            return Err(Error::NotConformable {
                reason: "column labels differ",
            });
        }
        let counts = self
            .counts
            .iter()
            .zip(&other.counts)
            .map(|(a, b)| a + b)
            .collect();
        let mut flagged = self.provenance.flagged_rows.clone();
        flagged.extend(&other.provenance.flagged_rows);
        flagged.sort_unstable();
        flagged.dedup();
        let provenance = Provenance {
            generated_streamlines: self.provenance.generated_streamlines
                + other.provenance.generated_streamlines,
            attempts: self.provenance.attempts + other.provenance.attempts,
            passthrough_total: self.provenance.passthrough_total
                + other.provenance.passthrough_total,
            flagged_rows: flagged,
            ..self.provenance.clone()
        };
        Self::from_parts(self.rows.clone(), self.col_labels.clone(), counts, provenance)
    }

    /// Row-normalized copy over the target columns; see [`NormalizedRows`].
    pub fn normalize_rows(&self) -> NormalizedRows {
        normalize_rows(self)
    }

    /// Winner-take-all parcellation of the source region; see [`parcellate`].
    pub fn parcellate(&self, source: &LabelVolume, source_label: u32) -> Result<LabelVolume> {
        parcellate(self, source, source_label)
    }
}

/// Row-wise fractions over target columns `1..=M`; the unassigned column is
/// excluded from both the numerator and the denominator.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedRows {
    m: usize,
    values: Vec<f64>,
    zero_rows: Vec<bool>,
}

impl NormalizedRows {
    pub fn n_rows(&self) -> usize {
        self.zero_rows.len()
    }

    /// Number of target columns.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Fractions for one row, length `m`. All-zero rows stay all-zero.
    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.m..(row + 1) * self.m]
    }

    /// True when the row had no counts in any target column.
    pub fn is_zero_row(&self, row: usize) -> bool {
        self.zero_rows[row]
    }
}

pub fn normalize_rows(c: &ConnectivityMatrix) -> NormalizedRows {
    let m = c.col_labels().len();
    let mut values = Vec::with_capacity(c.n_rows() * m);
    let mut zero_rows = Vec::with_capacity(c.n_rows());
    for row in 0..c.n_rows() {
        let counts = &c.row_counts(row)[1..];
        let sum: u64 = counts.iter().sum();
        if sum == 0 {
            values.extend(core::iter::repeat(0.0).take(m));
            zero_rows.push(true);
        } else {
            values.extend(counts.iter().map(|&v| v as f64 / sum as f64));
            zero_rows.push(false);
        }
    }
    NormalizedRows { m, values, zero_rows }
}

/// Assigns each source voxel the target label with the highest count,
/// breaking ties toward the smallest label. Rows with no target counts and
/// all non-source voxels get label 0.
pub fn parcellate(
    c: &ConnectivityMatrix,
    source: &LabelVolume,
    source_label: u32,
) -> Result<LabelVolume> {
    let shape = *source.shape();
    let mut labels = vec![0u32; shape.n_voxels()];
    for (row, &v) in c.rows().iter().enumerate() {
        if source.label_at(v) != Some(source_label) {
            return Err(Error::RowNotInSource {
                row,
                voxel: v.as_array(),
            });
        }
        let counts = &c.row_counts(row)[1..];
        let mut best = 0u64;
        let mut best_label = 0u32;
        for (i, &count) in counts.iter().enumerate() {
            // Strict > with ascending labels makes ties resolve to the
            // smallest label.
            if count > best {
                best = count;
                best_label = c.col_labels()[i];
            }
        }
        labels[shape.linear(v)] = best_label;
    }
    LabelVolume::new(shape.dims(), *source.affine(), labels)
}

/// A streamline's credit against one matrix: the source rows it crosses and
/// the columns its endpoints select (column 0 when no endpoint landed in a
/// target region).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contribution {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

/// Computes a streamline's pass-through contribution.
pub fn contribution(
    l: &Streamline,
    region: &SourceRegion,
    cols: &TargetCols,
    targets: &LabelVolume,
    mode: EndpointMode,
) -> Contribution {
    let rows = passthrough_rows(l, region);
    let labels = endpoint_region(l, targets, mode);
    let cols: Vec<usize> = if labels.is_empty() {
        vec![0]
    } else {
        labels
            .iter()
            .map(|&label| {
                cols.col_of(label)
                    .expect("endpoint labels come from the target volume")
            })
            .collect()
    };
    Contribution { rows, cols }
}

/// Incrementally fills a count matrix. Order of additions never affects the
/// result, and disjoint builders over the same layout can be merged, so
/// callers are free to partition work however they like.
#[derive(Debug)]
pub struct MatrixBuilder<'a> {
    region: &'a SourceRegion,
    cols: &'a TargetCols,
    targets: &'a LabelVolume,
    mode: EndpointMode,
    counts: Vec<u64>,
    generated: u64,
    passthrough_total: u64,
}

impl<'a> MatrixBuilder<'a> {
    pub fn new(
        region: &'a SourceRegion,
        cols: &'a TargetCols,
        targets: &'a LabelVolume,
        mode: EndpointMode,
    ) -> Self {
        Self {
            region,
            cols,
            targets,
            mode,
            counts: vec![0; region.len() * cols.n_cols()],
            generated: 0,
            passthrough_total: 0,
        }
    }

    pub fn contribution(&self, l: &Streamline) -> Contribution {
        contribution(l, self.region, self.cols, self.targets, self.mode)
    }

    /// Credits every crossed row at every endpoint column.
    pub fn add_streamline(&mut self, l: &Streamline) {
        let c = self.contribution(l);
        self.add_contribution(&c);
    }

    pub fn add_contribution(&mut self, c: &Contribution) {
        let nc = self.cols.n_cols();
        for &row in &c.rows {
            for &col in &c.cols {
                self.counts[row * nc + col] += 1;
            }
        }
        self.generated += 1;
        self.passthrough_total += c.rows.len() as u64;
    }

    /// Credits only `row` at the streamline's endpoint columns (per-voxel
    /// seeding attribution).
    pub fn add_endpoint_only(&mut self, row: usize, l: &Streamline) {
        let labels = endpoint_region(l, self.targets, self.mode);
        let nc = self.cols.n_cols();
        if labels.is_empty() {
            self.counts[row * nc] += 1;
        } else {
            for label in labels {
                let col = self
                    .cols
                    .col_of(label)
                    .expect("endpoint labels come from the target volume");
                self.counts[row * nc + col] += 1;
            }
        }
        self.generated += 1;
        self.passthrough_total += 1;
    }

    /// Folds another builder's counts into this one.
    pub fn merge(&mut self, other: MatrixBuilder<'_>) {
        assert_eq!(self.counts.len(), other.counts.len(), "layout mismatch");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.generated += other.generated;
        self.passthrough_total += other.passthrough_total;
    }

    pub fn generated(&self) -> u64 {
        self.generated
    }

    pub fn finish(self, algorithm: Algorithm, run: RunInfo) -> ConnectivityMatrix {
        let provenance = Provenance {
            algorithm,
            k: run.k,
            k_star: run.k_star,
            rng_seed: run.rng_seed,
            endpoint_mode: self.mode,
            source_dims: self.region.shape().dims(),
            target_dims: self.targets.shape().dims(),
            generated_streamlines: self.generated,
            attempts: run.attempts,
            passthrough_total: self.passthrough_total,
            flagged_rows: run.flagged_rows,
        };
        ConnectivityMatrix {
            rows: self.region.voxels().to_vec(),
            col_labels: self.cols.labels().to_vec(),
            counts: self.counts,
            provenance,
        }
    }
}

/// Run facts a builder cannot observe on its own.
#[derive(Debug, Clone, Default)]
pub struct RunInfo {
    pub k: Option<u64>,
    pub k_star: Option<u64>,
    pub rng_seed: Option<u64>,
    pub attempts: u64,
    pub flagged_rows: Vec<usize>,
}

/// Pass-through accumulation of an existing tractogram.
pub fn connectivity_from_tractogram(
    tg: &Tractogram,
    source: &LabelVolume,
    source_label: u32,
    targets: &LabelVolume,
    mode: EndpointMode,
) -> Result<ConnectivityMatrix> {
    if tg.is_empty() {
        return Err(Error::EmptyTractogram);
    }
    let region = SourceRegion::new(source, source_label)?;
    let cols = TargetCols::from_targets(targets);
    let mut builder = MatrixBuilder::new(&region, &cols, targets, mode);
    for l in &tg.streamlines {
        builder.add_streamline(l);
    }
    Ok(builder.finish(Algorithm::FromTractogram, RunInfo::default()))
}

/// Per-voxel seeding: `K` accepted streamlines per source voxel, endpoint
/// attribution to the seed row only. A voxel that exhausts its retry budget
/// keeps its partial row and is flagged in the provenance.
pub fn traditional_connectivity(
    source: &LabelVolume,
    source_label: u32,
    targets: &LabelVolume,
    field: &DirectionField,
    tp: &TrackParams,
    rp: &RunParams,
) -> Result<ConnectivityMatrix> {
    tp.validate()?;
    if rp.k == 0 {
        return Err(Error::BadRunParams {
            reason: "k must be at least 1",
        });
    }
    let region = SourceRegion::new(source, source_label)?;
    let cols = TargetCols::from_targets(targets);
    let mut builder = MatrixBuilder::new(&region, &cols, targets, rp.endpoint_mode);
    let mut run = RunInfo {
        k: Some(rp.k),
        rng_seed: Some(tp.rng_seed),
        ..RunInfo::default()
    };
    for row in 0..region.len() {
        let voxel = region.voxel(row);
        let mut accepted = 0u64;
        let mut attempt = 0u64;
        while accepted < rp.k && attempt < RETRY_FACTOR * rp.k {
            let ordinal = voxel_stream_ordinal(row, attempt as u32);
            if let Some(l) = voxel_attempt(voxel, region.affine(), field, tp, ordinal) {
                builder.add_endpoint_only(row, &l);
                accepted += 1;
            }
            attempt += 1;
        }
        run.attempts += attempt;
        if accepted < rp.k {
            run.flagged_rows.push(row);
        }
    }
    Ok(builder.finish(Algorithm::Traditional, run))
}

/// Region seeding: `K*` accepted streamlines over the whole region, each
/// crediting every source row it passes through. Attempts are consumed in
/// ordinal order; the run fails (reporting progress) if `RETRY_FACTOR * K*`
/// attempts cannot produce `K*` streamlines.
pub fn proposed_connectivity(
    source: &LabelVolume,
    source_label: u32,
    targets: &LabelVolume,
    field: &DirectionField,
    tp: &TrackParams,
    rp: &RunParams,
) -> Result<ConnectivityMatrix> {
    tp.validate()?;
    if rp.k_star == 0 {
        return Err(Error::BadRunParams {
            reason: "k_star must be at least 1",
        });
    }
    let region = SourceRegion::new(source, source_label)?;
    let cols = TargetCols::from_targets(targets);
    let mut builder = MatrixBuilder::new(&region, &cols, targets, rp.endpoint_mode);
    let cap = RETRY_FACTOR * rp.k_star;
    let mut attempts = 0u64;
    while builder.generated() < rp.k_star && attempts < cap {
        if let Some(l) = region_attempt(&region, field, tp, attempts) {
            builder.add_streamline(&l);
        }
        attempts += 1;
    }
    if builder.generated() < rp.k_star {
        return Err(Error::AttemptCapExhausted {
            generated: builder.generated(),
            requested: rp.k_star,
        });
    }
    let run = RunInfo {
        k_star: Some(rp.k_star),
        rng_seed: Some(tp.rng_seed),
        attempts,
        ..RunInfo::default()
    };
    Ok(builder.finish(Algorithm::Proposed, run))
}
