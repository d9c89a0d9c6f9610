//! Voxel grids, world/voxel affine transforms, and exact segment traversal.
//!
//! Conventions used throughout the crate:
//! - An [`Affine`] maps *continuous voxel coordinates* to world millimetres.
//!   Integer coordinates are voxel centers, so voxel `(i, j, k)` covers the
//!   half-open cube `[c - 0.5, c + 0.5)` along each axis in voxel space.
//! - Linear voxel order is x-fastest: `i + nx * (j + ny * k)`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::vec3::{self, Vec3};

/// Minimum |det| of the upper-left 3x3 block for an affine to be invertible.
pub const MIN_AFFINE_DET: f64 = 1e-12;

/// 4x4 homogeneous transform from continuous voxel coordinates to world mm.
///
/// The inverse is computed once at construction; both directions are exact
/// closed-form evaluations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    fwd: [[f64; 4]; 4],
    inv: [[f64; 4]; 4],
}

impl Affine {
    /// Builds an affine from a row-major 4x4 matrix.
    ///
    /// The bottom row must be `(0, 0, 0, 1)` and the upper-left 3x3 block
    /// must have `|det| > MIN_AFFINE_DET`.
    pub fn new(matrix: [[f64; 4]; 4]) -> Result<Self> {
        if matrix[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::BadAffineBottomRow);
        }
        let m = &matrix;
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        if !det.is_finite() || libm::fabs(det) <= MIN_AFFINE_DET {
            return Err(Error::SingularAffine { det });
        }
        // Inverse of the 3x3 block via the adjugate, then the translation.
        let r = 1.0 / det;
        let a = [
            [
                (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * r,
                (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * r,
                (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * r,
            ],
            [
                (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * r,
                (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * r,
                (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * r,
            ],
            [
                (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * r,
                (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * r,
                (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * r,
            ],
        ];
        let t = [m[0][3], m[1][3], m[2][3]];
        let mut inv = [[0.0; 4]; 4];
        for row in 0..3 {
            for col in 0..3 {
                inv[row][col] = a[row][col];
            }
            inv[row][3] = -(a[row][0] * t[0] + a[row][1] * t[1] + a[row][2] * t[2]);
        }
        inv[3] = [0.0, 0.0, 0.0, 1.0];
        Ok(Self { fwd: matrix, inv })
    }

    pub fn identity() -> Self {
        Self::new([
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ])
        .expect("identity is invertible")
    }

    /// Axis-aligned affine: voxel `(0,0,0)` center maps to `origin`, voxel
    /// pitch is `spacing` per axis.
    pub fn scaling(spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        Self::new([
            [spacing[0], 0.0, 0.0, origin[0]],
            [0.0, spacing[1], 0.0, origin[1]],
            [0.0, 0.0, spacing[2], origin[2]],
            [0.0, 0.0, 0.0, 1.0],
        ])
    }

    pub fn matrix(&self) -> &[[f64; 4]; 4] {
        &self.fwd
    }

    /// Voxel coordinates -> world mm.
    pub fn apply(&self, p: Vec3) -> Vec3 {
        mat_apply(&self.fwd, p)
    }

    /// World mm -> voxel coordinates.
    pub fn apply_inverse(&self, p: Vec3) -> Vec3 {
        mat_apply(&self.inv, p)
    }

    /// Voxel pitch per axis: Euclidean norms of the 3x3 block's columns.
    pub fn voxel_size(&self) -> [f64; 3] {
        let m = &self.fwd;
        let col = |c: usize| vec3::norm([m[0][c], m[1][c], m[2][c]]);
        [col(0), col(1), col(2)]
    }
}

fn mat_apply(m: &[[f64; 4]; 4], p: Vec3) -> Vec3 {
    [
        m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2] + m[0][3],
        m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2] + m[1][3],
        m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2] + m[2][3],
    ]
}

/// Integer voxel index. May be out of bounds for a given grid; bounds are
/// checked against a [`GridShape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VoxelIndex {
    pub i: i32,
    pub j: i32,
    pub k: i32,
}

impl VoxelIndex {
    pub fn new(i: i32, j: i32, k: i32) -> Self {
        Self { i, j, k }
    }

    pub fn as_array(&self) -> [i32; 3] {
        [self.i, self.j, self.k]
    }
}

impl core::fmt::Display for VoxelIndex {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "({}, {}, {})", self.i, self.j, self.k)
    }
}

/// Grid extents plus the voxel pitch derived from the grid's affine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridShape {
    dims: [usize; 3],
    voxel_size: [f64; 3],
}

impl GridShape {
    pub fn new(dims: [usize; 3], affine: &Affine) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::EmptyGrid { dims });
        }
        Ok(Self {
            dims,
            voxel_size: affine.voxel_size(),
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxel_size(&self) -> [f64; 3] {
        self.voxel_size
    }

    pub fn n_voxels(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn contains(&self, v: VoxelIndex) -> bool {
        v.i >= 0
            && v.j >= 0
            && v.k >= 0
            && (v.i as usize) < self.dims[0]
            && (v.j as usize) < self.dims[1]
            && (v.k as usize) < self.dims[2]
    }

    /// Linear index with x fastest. The voxel must be in bounds.
    pub fn linear(&self, v: VoxelIndex) -> usize {
        debug_assert!(self.contains(v));
        v.i as usize + self.dims[0] * (v.j as usize + self.dims[1] * v.k as usize)
    }

    pub fn from_linear(&self, idx: usize) -> VoxelIndex {
        debug_assert!(idx < self.n_voxels());
        let nx = self.dims[0];
        let ny = self.dims[1];
        VoxelIndex::new((idx % nx) as i32, ((idx / nx) % ny) as i32, (idx / (nx * ny)) as i32)
    }
}

/// Integer-labeled volume; 0 means background. Immutable after construction.
#[derive(Debug, Clone)]
pub struct LabelVolume {
    shape: GridShape,
    affine: Affine,
    labels: Vec<u32>,
}

impl LabelVolume {
    pub fn new(dims: [usize; 3], affine: Affine, labels: Vec<u32>) -> Result<Self> {
        let shape = GridShape::new(dims, &affine)?;
        if labels.len() != shape.n_voxels() {
            return Err(Error::DataLengthMismatch {
                got: labels.len(),
                expected: shape.n_voxels(),
            });
        }
        Ok(Self { shape, affine, labels })
    }

    /// Builds a volume by evaluating `f` at every voxel in linear order.
    pub fn from_fn(
        dims: [usize; 3],
        affine: Affine,
        mut f: impl FnMut(VoxelIndex) -> u32,
    ) -> Result<Self> {
        let shape = GridShape::new(dims, &affine)?;
        let mut labels = Vec::with_capacity(shape.n_voxels());
        for idx in 0..shape.n_voxels() {
            labels.push(f(shape.from_linear(idx)));
        }
        Ok(Self { shape, affine, labels })
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn affine(&self) -> &Affine {
        &self.affine
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Label at a voxel, `None` if out of bounds.
    pub fn label_at(&self, v: VoxelIndex) -> Option<u32> {
        if self.shape.contains(v) {
            Some(self.labels[self.shape.linear(v)])
        } else {
            None
        }
    }

    /// Voxel containing a world point, `None` if outside the grid.
    pub fn voxel_of(&self, p: Vec3) -> Option<VoxelIndex> {
        voxel_of(p, &self.shape, &self.affine)
    }

    /// Label at a world point; out-of-bounds reads as background 0.
    pub fn label_at_world(&self, p: Vec3) -> u32 {
        self.voxel_of(p).map_or(0, |v| self.labels[self.shape.linear(v)])
    }

    /// Ascending list of distinct non-zero labels.
    pub fn distinct_labels(&self) -> Vec<u32> {
        let mut out: Vec<u32> = self.labels.iter().copied().filter(|&l| l != 0).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Voxels carrying `label`, ascending by linear index.
    pub fn voxels_with_label(&self, label: u32) -> Vec<VoxelIndex> {
        self.labels
            .iter()
            .enumerate()
            .filter(|&(_, &l)| l == label)
            .map(|(idx, _)| self.shape.from_linear(idx))
            .collect()
    }

    pub fn count_label(&self, label: u32) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

/// Canonical row indexing of one label's voxels: row `r` is the `r`-th voxel
/// carrying the label in ascending linear order. Connectivity matrices over a
/// source region use exactly this order.
#[derive(Debug, Clone)]
pub struct SourceRegion {
    shape: GridShape,
    affine: Affine,
    label: u32,
    rows: Vec<VoxelIndex>,
    // Linear voxel index -> row + 1; 0 means "not a source voxel".
    lut: Vec<u32>,
}

impl SourceRegion {
    pub fn new(source: &LabelVolume, label: u32) -> Result<Self> {
        let rows = source.voxels_with_label(label);
        if rows.is_empty() {
            return Err(Error::LabelMissing { label });
        }
        let shape = *source.shape();
        let mut lut = alloc::vec![0u32; shape.n_voxels()];
        for (r, &v) in rows.iter().enumerate() {
            lut[shape.linear(v)] = (r + 1) as u32;
        }
        Ok(Self {
            shape,
            affine: *source.affine(),
            label,
            rows,
            lut,
        })
    }

    pub fn label(&self) -> u32 {
        self.label
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn affine(&self) -> &Affine {
        &self.affine
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn voxel(&self, row: usize) -> VoxelIndex {
        self.rows[row]
    }

    pub fn voxels(&self) -> &[VoxelIndex] {
        &self.rows
    }

    /// Row of a voxel, `None` if out of bounds or not part of the region.
    pub fn row_of(&self, v: VoxelIndex) -> Option<usize> {
        if !self.shape.contains(v) {
            return None;
        }
        match self.lut[self.shape.linear(v)] {
            0 => None,
            r => Some((r - 1) as usize),
        }
    }
}

/// World mm -> continuous voxel coordinates.
pub fn world_to_voxel(p: Vec3, affine: &Affine) -> Vec3 {
    affine.apply_inverse(p)
}

/// Voxel containing a world point under the center convention, `None` if out
/// of bounds. A point exactly on a shared face belongs to the higher cell.
pub fn voxel_of(p: Vec3, shape: &GridShape, affine: &Affine) -> Option<VoxelIndex> {
    let c = world_to_voxel(p, affine);
    let dims = shape.dims();
    let mut out = [0i32; 3];
    for ax in 0..3 {
        let u = c[ax] + 0.5;
        if !(u >= 0.0 && u < dims[ax] as f64) {
            return None;
        }
        out[ax] = libm::floor(u) as i32;
    }
    Some(VoxelIndex::new(out[0], out[1], out[2]))
}

/// Exact traversal: every voxel whose cell the segment `[a, b]` (world mm)
/// crosses with positive length, in order from `a` to `b`, restricted to the
/// grid. Touching a cell only at an isolated boundary point may or may not
/// report that cell; such grazing contacts carry zero overlap.
///
/// If `a == b` the result is the single containing voxel, or empty when out
/// of bounds.
pub fn segment_voxels(a: Vec3, b: Vec3, shape: &GridShape, affine: &Affine) -> Vec<VoxelIndex> {
    let dims = shape.dims();
    if a == b {
        return voxel_of(a, shape, affine).into_iter().collect();
    }
    // Cell-corner coordinates: cell k spans [k, k+1) per axis.
    let shift = |p: Vec3| {
        let c = world_to_voxel(p, affine);
        [c[0] + 0.5, c[1] + 0.5, c[2] + 0.5]
    };
    let ua = shift(a);
    let ub = shift(b);
    let d = vec3::sub(ub, ua);

    // Clip t in [0, 1] against the grid box [0, n]^3.
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for ax in 0..3 {
        let n = dims[ax] as f64;
        if d[ax] == 0.0 {
            if !(ua[ax] >= 0.0 && ua[ax] < n) {
                return Vec::new();
            }
        } else {
            let mut lo = (0.0 - ua[ax]) / d[ax];
            let mut hi = (n - ua[ax]) / d[ax];
            if lo > hi {
                core::mem::swap(&mut lo, &mut hi);
            }
            t0 = t0.max(lo);
            t1 = t1.min(hi);
        }
    }
    if !(t0 <= t1) {
        return Vec::new();
    }

    let entry = vec3::add(ua, vec3::scale(d, t0));
    let mut cell = [0i64; 3];
    let mut step = [0i64; 3];
    let mut t_next = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for ax in 0..3 {
        let n = dims[ax] as i64;
        cell[ax] = (libm::floor(entry[ax]) as i64).clamp(0, n - 1);
        if d[ax] > 0.0 {
            step[ax] = 1;
            t_delta[ax] = 1.0 / d[ax];
            t_next[ax] = ((cell[ax] + 1) as f64 - ua[ax]) / d[ax];
        } else if d[ax] < 0.0 {
            step[ax] = -1;
            t_delta[ax] = -1.0 / d[ax];
            t_next[ax] = (cell[ax] as f64 - ua[ax]) / d[ax];
        }
    }

    let mut out = Vec::new();
    // A segment can cross at most sum(dims) face planes; the bound also stops
    // the walk if degenerate float input ever stalls an axis.
    let max_cells = dims[0] + dims[1] + dims[2] + 3;
    for _ in 0..max_cells {
        out.push(VoxelIndex::new(cell[0] as i32, cell[1] as i32, cell[2] as i32));
        let mut ax = 0;
        if t_next[1] < t_next[ax] {
            ax = 1;
        }
        if t_next[2] < t_next[ax] {
            ax = 2;
        }
        if !(t_next[ax] <= t1) {
            break;
        }
        cell[ax] += step[ax];
        if cell[ax] < 0 || cell[ax] >= dims[ax] as i64 {
            break;
        }
        t_next[ax] += t_delta[ax];
    }
    out
}
