//! Streamline polylines, tractograms, resampling, and region classification.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{segment_voxels, LabelVolume, SourceRegion};
use crate::vec3::{self, Vec3};

/// Relative slack when deciding whether a gap needs subdividing. Gaps of an
/// already-resampled polyline are recomputed from rounded points and may
/// exceed the target by a few ulps; without slack, resampling would not be
/// idempotent.
const SPACING_SLACK: f64 = 1e-9;

/// Ordered polyline in world mm with at least two points, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Streamline {
    points: Vec<Vec3>,
}

impl Streamline {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::TooFewPoints { count: points.len() });
        }
        for (index, p) in points.iter().enumerate() {
            if !vec3::is_finite(*p) {
                return Err(Error::NonFinitePoint { index });
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    pub fn first(&self) -> Vec3 {
        self.points[0]
    }

    pub fn last(&self) -> Vec3 {
        self.points[self.points.len() - 1]
    }

    /// Consecutive point pairs in order.
    pub fn segments(&self) -> impl Iterator<Item = (Vec3, Vec3)> + '_ {
        self.points.windows(2).map(|w| (w[0], w[1]))
    }

    /// Sum of segment lengths in mm.
    pub fn arc_length(&self) -> f64 {
        self.segments().map(|(p, q)| vec3::norm(vec3::sub(q, p))).sum()
    }
}

/// A set of streamlines with free-form key/value metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tractogram {
    pub streamlines: Vec<Streamline>,
    pub metadata: Vec<(String, String)>,
}

impl Tractogram {
    pub fn new(streamlines: Vec<Streamline>) -> Self {
        Self {
            streamlines,
            metadata: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.streamlines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streamlines.is_empty()
    }

    pub fn set_metadata(&mut self, key: &str, value: &str) {
        match self.metadata.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = String::from(value),
            None => self.metadata.push((String::from(key), String::from(value))),
        }
    }

    pub fn metadata_value(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// Which endpoints of a streamline attribute its connection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EndpointMode {
    /// Only the final point `p^T`.
    Last,
    /// Both `p^1` and `p^T`.
    #[default]
    Both,
}

/// Evenly subdivides every gap longer than `max_spacing`.
///
/// A gap of length `d` becomes `ceil(d / max_spacing)` equal sub-gaps of
/// length `d / ceil(d / max_spacing) <= max_spacing`. Original points are
/// preserved; the polyline's geometry is unchanged. Applying the operation a
/// second time with the same spacing is an exact no-op.
pub fn upsample(l: &Streamline, max_spacing: f64) -> Result<Streamline> {
    if !(max_spacing > 0.0 && max_spacing.is_finite()) {
        return Err(Error::NonPositiveParam {
            what: "max_spacing",
            value: max_spacing,
        });
    }
    let mut out = Vec::with_capacity(l.num_points());
    out.push(l.first());
    for (p, q) in l.segments() {
        let d = vec3::norm(vec3::sub(q, p));
        if d > max_spacing * (1.0 + SPACING_SLACK) {
            // Small negative slack keeps an exact multiple (d == n * spacing,
            // up to rounding) at n pieces instead of n + 1.
            let n = libm::ceil(d / max_spacing - 1e-12) as usize;
            let n = n.max(2);
            for i in 1..n {
                let t = i as f64 / n as f64;
                out.push(vec3::add(p, vec3::scale(vec3::sub(q, p), t)));
            }
        }
        out.push(q);
    }
    Streamline::new(out)
}

/// Rows (in the region's canonical order) whose voxels the streamline passes
/// through, ascending and without duplicates.
pub fn passthrough_rows(l: &Streamline, region: &SourceRegion) -> Vec<usize> {
    let shape = region.shape();
    let affine = region.affine();
    let mut rows = Vec::new();
    for (p, q) in l.segments() {
        for v in segment_voxels(p, q, shape, affine) {
            if let Some(r) = region.row_of(v) {
                rows.push(r);
            }
        }
    }
    rows.sort_unstable();
    rows.dedup();
    rows
}

/// Non-zero target labels at the streamline's endpoints.
///
/// `Last` reads only the final point; `Both` reads the first point then the
/// final point, so the result holds 0, 1, or 2 entries (2 may repeat a label
/// when both endpoints fall in the same region). Endpoints outside the target
/// volume or in background contribute nothing.
pub fn endpoint_region(l: &Streamline, targets: &LabelVolume, mode: EndpointMode) -> Vec<u32> {
    let mut out = Vec::new();
    let mut push = |p: Vec3| {
        let label = targets.label_at_world(p);
        if label != 0 {
            out.push(label);
        }
    };
    match mode {
        EndpointMode::Last => push(l.last()),
        EndpointMode::Both => {
            push(l.first());
            push(l.last());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Affine;
    use alloc::vec;

    fn line(points: &[[f64; 3]]) -> Streamline {
        Streamline::new(points.to_vec()).unwrap()
    }

    #[test]
    fn construction_rejects_degenerate_input() {
        assert!(matches!(
            Streamline::new(vec![[0.0, 0.0, 0.0]]),
            Err(Error::TooFewPoints { count: 1 })
        ));
        assert!(matches!(
            Streamline::new(vec![[0.0, 0.0, 0.0], [f64::NAN, 0.0, 0.0]]),
            Err(Error::NonFinitePoint { index: 1 })
        ));
    }

    #[test]
    fn arc_length_sums_segments() {
        let l = line(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 2.0, 0.0]]);
        assert!((l.arc_length() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn upsample_splits_a_long_gap_evenly() {
        let l = line(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let up = upsample(&l, 0.5).unwrap();
        assert_eq!(up.num_points(), 5);
        for (p, q) in up.segments() {
            assert!((vec3::norm(vec3::sub(q, p)) - 0.5).abs() < 1e-12);
        }
        assert_eq!(up.first(), [0.0, 0.0, 0.0]);
        assert_eq!(up.last(), [2.0, 0.0, 0.0]);
    }

    #[test]
    fn upsample_rounds_subdivision_up() {
        // 1.0 mm gap at 0.3 mm spacing: 4 sub-gaps of 0.25 mm each.
        let l = line(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let up = upsample(&l, 0.3).unwrap();
        assert_eq!(up.num_points(), 5);
        for (p, q) in up.segments() {
            assert!((vec3::norm(vec3::sub(q, p)) - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn upsample_is_noop_for_short_gaps() {
        let l = line(&[[0.0, 0.0, 0.0], [0.4, 0.0, 0.0], [0.4, 0.4, 0.0]]);
        let up = upsample(&l, 0.5).unwrap();
        assert_eq!(up, l);
    }

    #[test]
    fn upsample_is_idempotent_exactly() {
        let l = line(&[
            [0.13, -4.2, 7.9],
            [1.04, -3.1, 8.3],
            [2.77, -3.0, 6.1],
            [2.90, -1.7, 5.9],
        ]);
        let once = upsample(&l, 0.37).unwrap();
        let twice = upsample(&once, 0.37).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn upsample_rejects_bad_spacing() {
        let l = line(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        assert!(upsample(&l, 0.0).is_err());
        assert!(upsample(&l, -1.0).is_err());
        assert!(upsample(&l, f64::NAN).is_err());
    }

    fn bar_region() -> SourceRegion {
        // 4x1x1 volume, label 6 on voxels 1 and 2.
        let affine = Affine::scaling([1.0, 1.0, 1.0], [0.5, 0.5, 0.5]).unwrap();
        let vol = LabelVolume::from_fn([4, 1, 1], affine, |v| {
            if v.i == 1 || v.i == 2 {
                6
            } else {
                0
            }
        })
        .unwrap();
        SourceRegion::new(&vol, 6).unwrap()
    }

    #[test]
    fn passthrough_reports_crossed_rows_once() {
        let region = bar_region();
        let l = line(&[[0.2, 0.5, 0.5], [1.6, 0.5, 0.5], [3.8, 0.5, 0.5]]);
        assert_eq!(passthrough_rows(&l, &region), vec![0, 1]);
    }

    #[test]
    fn passthrough_of_disjoint_streamline_is_empty() {
        let region = bar_region();
        let l = line(&[[0.1, 0.5, 0.5], [0.4, 0.5, 0.5]]);
        assert!(passthrough_rows(&l, &region).is_empty());
    }

    #[test]
    fn passthrough_is_invariant_under_upsampling() {
        let region = bar_region();
        let l = line(&[[0.2, 0.5, 0.5], [3.8, 0.6, 0.5]]);
        let base = passthrough_rows(&l, &region);
        for factor in [2.0, 5.0, 17.0] {
            let up = upsample(&l, 1.0 / factor).unwrap();
            assert_eq!(passthrough_rows(&up, &region), base);
        }
    }

    fn two_region_targets() -> LabelVolume {
        let affine = Affine::scaling([1.0, 1.0, 1.0], [0.5, 0.5, 0.5]).unwrap();
        LabelVolume::from_fn([4, 1, 1], affine, |v| match v.i {
            0 => 3,
            3 => 5,
            _ => 0,
        })
        .unwrap()
    }

    #[test]
    fn endpoint_region_reads_requested_endpoints() {
        let targets = two_region_targets();
        let l = line(&[[0.4, 0.5, 0.5], [1.5, 0.5, 0.5], [3.6, 0.5, 0.5]]);
        assert_eq!(endpoint_region(&l, &targets, EndpointMode::Both), vec![3, 5]);
        assert_eq!(endpoint_region(&l, &targets, EndpointMode::Last), vec![5]);
    }

    #[test]
    fn endpoint_region_ignores_background_and_outside() {
        let targets = two_region_targets();
        let inside_background = line(&[[1.5, 0.5, 0.5], [2.5, 0.5, 0.5]]);
        assert!(endpoint_region(&inside_background, &targets, EndpointMode::Both).is_empty());
        let outside = line(&[[0.4, 0.5, 0.5], [9.0, 0.5, 0.5]]);
        assert_eq!(
            endpoint_region(&outside, &targets, EndpointMode::Both),
            vec![3]
        );
        assert!(endpoint_region(&outside, &targets, EndpointMode::Last).is_empty());
    }

    #[test]
    fn last_mode_is_suffix_of_both_mode() {
        let targets = two_region_targets();
        let l = line(&[[0.4, 0.5, 0.5], [3.6, 0.5, 0.5]]);
        let both = endpoint_region(&l, &targets, EndpointMode::Both);
        let last = endpoint_region(&l, &targets, EndpointMode::Last);
        assert!(both.ends_with(&last));
    }

    #[test]
    fn tractogram_metadata_last_write_wins() {
        let mut tg = Tractogram::default();
        tg.set_metadata("step_size_mm", "0.5");
        tg.set_metadata("step_size_mm", "0.25");
        assert_eq!(tg.metadata_value("step_size_mm"), Some("0.25"));
        assert_eq!(tg.metadata.len(), 1);
    }
}
