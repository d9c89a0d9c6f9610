//! Sub-voxel connectivity: accumulate a tractogram on a source grid finer
//! than the one it was tracked on.
//!
//! Points are first resampled to at most half the finest voxel pitch of the
//! high-resolution grid, then accumulated exactly like any other tractogram.
//! Because traversal is exact, the resampling cannot change which voxels a
//! polyline crosses; it exists so the invariant is also self-evident for
//! consumers that reason per-point, and the op asserts the equality in debug
//! builds.

use alloc::vec::Vec;

use crate::connectivity::{connectivity_from_tractogram, Algorithm, ConnectivityMatrix};
use crate::error::Result;
use crate::grid::LabelVolume;
use crate::streamline::{upsample, EndpointMode, Tractogram};

/// Point spacing used when accumulating on `hi_source`: half its finest
/// voxel pitch.
pub fn superres_spacing(hi_source: &LabelVolume) -> f64 {
    let vs = hi_source.shape().voxel_size();
    0.5 * vs[0].min(vs[1]).min(vs[2])
}

/// Accumulates `tg` on the high-resolution source grid.
pub fn superres_connectivity(
    tg: &Tractogram,
    hi_source: &LabelVolume,
    source_label: u32,
    targets: &LabelVolume,
    mode: EndpointMode,
) -> Result<ConnectivityMatrix> {
    let spacing = superres_spacing(hi_source);
    let mut dense = Tractogram {
        streamlines: Vec::with_capacity(tg.len()),
        metadata: tg.metadata.clone(),
    };
    for l in &tg.streamlines {
        dense.streamlines.push(upsample(l, spacing)?);
    }
    let mut matrix =
        connectivity_from_tractogram(&dense, hi_source, source_label, targets, mode)?;

    #[cfg(debug_assertions)]
    {
        let plain = connectivity_from_tractogram(tg, hi_source, source_label, targets, mode)?;
        debug_assert_eq!(
            matrix.counts(),
            plain.counts(),
            "resampling changed exact-traversal accumulation"
        );
    }

    matrix.set_algorithm(Algorithm::SuperRes);
    Ok(matrix)
}
