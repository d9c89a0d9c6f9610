//! Synthetic two-slab phantoms for validation and benchmarking.
//!
//! Geometry (world mm): a box `[0, Lx] x [0, W] x [0, W]` with two target
//! slabs at the x extremes, a +x direction field in the corridor between
//! them, and a labeled source block in the middle. The field is zero inside
//! the slabs, so tracks terminate just after entering a target; with the
//! source centered, the phantom is mirror-symmetric about `x = Lx / 2`.
//!
//! Each constituent volume can be rendered at its own resolution, which must
//! divide every extent it touches so that voxel faces align with the
//! geometry exactly.

use alloc::format;

use crate::error::{Error, Result};
use crate::grid::{Affine, LabelVolume, VoxelIndex};
use crate::tracking::DirectionField;
use crate::vec3::Vec3;

/// Source presets: a thin bar or a thick slab spanning most of the
/// cross-section.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomKind {
    Bar,
    Slab,
}

impl core::fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            PhantomKind::Bar => "bar",
            PhantomKind::Slab => "slab",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomConfig {
    pub kind: PhantomKind,
    /// Box extents [Lx, W, W] in mm.
    pub box_mm: [f64; 3],
    /// Thickness of each target slab along x.
    pub slab_thickness_mm: f64,
    /// Source extent along x.
    pub source_x_mm: [f64; 2],
    /// Source extent along y and z (same range on both axes).
    pub source_cross_mm: [f64; 2],
    pub source_res_mm: f64,
    pub target_res_mm: f64,
    pub field_res_mm: f64,
    pub source_label: u32,
    /// Label of the x-min slab. Keeping it below `right_label` makes exact
    /// ties parcellate toward this side.
    pub left_label: u32,
    pub right_label: u32,
}

impl PhantomConfig {
    /// Thin 6x2x2 mm source bar; 3 source voxels at 2 mm resolution.
    pub fn bar(source_res_mm: f64) -> Self {
        Self {
            kind: PhantomKind::Bar,
            box_mm: [40.0, 12.0, 12.0],
            slab_thickness_mm: 4.0,
            source_x_mm: [16.0, 22.0],
            source_cross_mm: [4.0, 6.0],
            source_res_mm,
            target_res_mm: 1.0,
            field_res_mm: 2.0,
            source_label: 1,
            left_label: 3,
            right_label: 5,
        }
    }

    /// 8 mm-thick source slab spanning the cross-section with a 2 mm wall
    /// margin, centered on the midplane.
    pub fn slab(source_res_mm: f64) -> Self {
        Self {
            kind: PhantomKind::Slab,
            source_x_mm: [16.0, 24.0],
            source_cross_mm: [2.0, 10.0],
            ..Self::bar(source_res_mm)
        }
    }
}

/// The three rendered constituents of a phantom.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub config: PhantomConfig,
    pub source: LabelVolume,
    pub targets: LabelVolume,
    pub field: DirectionField,
}

impl Phantom {
    pub fn build(config: &PhantomConfig) -> Result<Self> {
        validate(config)?;
        let source = render_volume(config, config.source_res_mm, |c| {
            let in_x = c[0] >= config.source_x_mm[0] && c[0] < config.source_x_mm[1];
            let in_cross = (1..3).all(|ax| {
                c[ax] >= config.source_cross_mm[0] && c[ax] < config.source_cross_mm[1]
            });
            if in_x && in_cross {
                config.source_label
            } else {
                0
            }
        })?;
        let lx = config.box_mm[0];
        let t = config.slab_thickness_mm;
        let targets = render_volume(config, config.target_res_mm, |c| {
            if c[0] < t {
                config.left_label
            } else if c[0] >= lx - t {
                config.right_label
            } else {
                0
            }
        })?;
        let dims = grid_dims(config, config.field_res_mm)?;
        let affine = grid_affine(config.field_res_mm)?;
        let field = DirectionField::from_fn(dims, affine, |v| {
            let c = center(v, config.field_res_mm);
            if c[0] >= t && c[0] < lx - t {
                [1.0, 0.0, 0.0]
            } else {
                [0.0, 0.0, 0.0]
            }
        })?;
        Ok(Self {
            config: config.clone(),
            source,
            targets,
            field,
        })
    }

    /// Mirror-symmetry plane of the box.
    pub fn midplane_x(&self) -> f64 {
        self.config.box_mm[0] / 2.0
    }
}

fn validate(config: &PhantomConfig) -> Result<()> {
    for (what, value) in [
        ("source_res_mm", config.source_res_mm),
        ("target_res_mm", config.target_res_mm),
        ("field_res_mm", config.field_res_mm),
    ] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::NonPositiveParam { what, value });
        }
    }
    let [lx, w, w2] = config.box_mm;
    if w != w2 {
        return Err(Error::BadPhantom {
            reason: format!("cross-section must be square, got {w} x {w2}"),
        });
    }
    let t = config.slab_thickness_mm;
    if !(t > 0.0 && 2.0 * t < lx) {
        return Err(Error::BadPhantom {
            reason: format!("slab thickness {t} does not leave a corridor in a {lx} mm box"),
        });
    }
    let [x0, x1] = config.source_x_mm;
    if !(x0 >= t && x1 <= lx - t && x0 < x1) {
        return Err(Error::BadPhantom {
            reason: format!("source x extent [{x0}, {x1}] must sit inside the corridor"),
        });
    }
    let [c0, c1] = config.source_cross_mm;
    if !(c0 >= 0.0 && c1 <= w && c0 < c1) {
        return Err(Error::BadPhantom {
            reason: format!("source cross extent [{c0}, {c1}] must sit inside the box"),
        });
    }
    if config.source_label == 0
        || config.left_label == 0
        || config.right_label == 0
        || config.left_label == config.right_label
    {
        return Err(Error::BadPhantom {
            reason: format!(
                "labels (source {}, left {}, right {}) must be non-zero and the slabs distinct",
                config.source_label, config.left_label, config.right_label
            ),
        });
    }
    Ok(())
}

/// Length in cells of an extent at a resolution; the division must be exact.
fn cells(len_mm: f64, res_mm: f64) -> Result<usize> {
    let n = libm::round(len_mm / res_mm);
    if n < 1.0 || libm::fabs(n * res_mm - len_mm) > 1e-9 {
        return Err(Error::BadPhantom {
            reason: format!("extent {len_mm} mm is not a whole number of {res_mm} mm cells"),
        });
    }
    Ok(n as usize)
}

fn grid_dims(config: &PhantomConfig, res_mm: f64) -> Result<[usize; 3]> {
    Ok([
        cells(config.box_mm[0], res_mm)?,
        cells(config.box_mm[1], res_mm)?,
        cells(config.box_mm[2], res_mm)?,
    ])
}

fn grid_affine(res_mm: f64) -> Result<Affine> {
    Affine::scaling([res_mm; 3], [res_mm / 2.0; 3])
}

fn center(v: VoxelIndex, res_mm: f64) -> Vec3 {
    [
        (v.i as f64 + 0.5) * res_mm,
        (v.j as f64 + 0.5) * res_mm,
        (v.k as f64 + 0.5) * res_mm,
    ]
}

fn render_volume(
    config: &PhantomConfig,
    res_mm: f64,
    label_of: impl Fn(Vec3) -> u32,
) -> Result<LabelVolume> {
    let dims = grid_dims(config, res_mm)?;
    let affine = grid_affine(res_mm)?;
    LabelVolume::from_fn(dims, affine, |v| label_of(center(v, res_mm)))
}

/// Source voxel counts of the bar preset across a resolution sweep; the
/// fixed mm geometry means N scales with the inverse cube of the pitch.
pub fn source_voxels_at(config: &PhantomConfig) -> Result<usize> {
    let nx = cells(
        config.source_x_mm[1] - config.source_x_mm[0],
        config.source_res_mm,
    )?;
    let nc = cells(
        config.source_cross_mm[1] - config.source_cross_mm[0],
        config.source_res_mm,
    )?;
    Ok(nx * nc * nc)
}
