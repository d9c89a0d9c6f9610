//! Pie-glyph rendering of connectivity profiles on an axial slice.
//!
//! Each source voxel in the slice becomes a pie whose sectors are the row's
//! target fractions (unassigned column excluded). Sectors start at 12
//! o'clock and advance clockwise in ascending label order; fractions below a
//! threshold are pooled into a trailing gray "other" sector. Output is a
//! self-contained SVG string; identical inputs render identical bytes.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::connectivity::ConnectivityMatrix;
use crate::error::{Error, Result};
use crate::grid::LabelVolume;

/// Fractions below this default are pooled into the "other" sector.
pub const DEFAULT_MIN_FRACTION: f64 = 0.02;

/// Rendered pixels per world millimetre.
const PX_PER_MM: f64 = 16.0;

/// Pie radius as a fraction of the smaller rendered voxel pitch.
const RADIUS_FRACTION: f64 = 0.45;

const OTHER_GRAY: Rgb = Rgb {
    r: 128,
    g: 128,
    b: 128,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rgb {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Rgb {
    pub fn hex(&self) -> String {
        format!("#{:02x}{:02x}{:02x}", self.r, self.g, self.b)
    }
}

/// Deterministic label -> color map. The default palette hashes each label
/// to a hue and probes until every label in the set has a distinct color.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Palette {
    colors: BTreeMap<u32, Rgb>,
}

impl Palette {
    /// Distinct deterministic colors for a label set.
    pub fn default_for(labels: &[u32]) -> Self {
        let mut sorted: Vec<u32> = labels.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let mut colors = BTreeMap::new();
        let mut used: Vec<Rgb> = Vec::with_capacity(sorted.len());
        for label in sorted {
            let mut salt = 0u64;
            let rgb = loop {
                let candidate = label_color(label, salt);
                if !used.contains(&candidate) && candidate != OTHER_GRAY {
                    break candidate;
                }
                salt += 1;
            };
            used.push(rgb);
            colors.insert(label, rgb);
        }
        Self { colors }
    }

    /// Color for a label; labels outside the palette derive their base color
    /// on the fly.
    pub fn color(&self, label: u32) -> Rgb {
        self.colors
            .get(&label)
            .copied()
            .unwrap_or_else(|| label_color(label, 0))
    }

    pub fn set_color(&mut self, label: u32, color: Rgb) {
        self.colors.insert(label, color);
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn label_color(label: u32, salt: u64) -> Rgb {
    let h = splitmix64((label as u64) ^ salt.wrapping_mul(0xA076_1D64_78BD_642F));
    let hue = (h % 360_000) as f64 / 1000.0;
    // Two saturation/value bands widen the usable gamut.
    let sat = if (h >> 40) & 1 == 0 { 0.62 } else { 0.82 };
    let val = if (h >> 41) & 1 == 0 { 0.92 } else { 0.72 };
    hsv_to_rgb(hue, sat, val)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> Rgb {
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - libm::fabs(hp % 2.0 - 1.0));
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let to_byte = |f: f64| libm::round((f + m) * 255.0) as u8;
    Rgb {
        r: to_byte(r),
        g: to_byte(g),
        b: to_byte(b),
    }
}

/// Slice orientation: the fixed axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceAxis {
    X,
    Y,
    Z,
}

impl SliceAxis {
    fn index(&self) -> usize {
        match self {
            SliceAxis::X => 0,
            SliceAxis::Y => 1,
            SliceAxis::Z => 2,
        }
    }

    /// In-plane axes (horizontal, vertical) for this slice orientation.
    fn plane(&self) -> (usize, usize) {
        match self {
            SliceAxis::X => (1, 2),
            SliceAxis::Y => (0, 2),
            SliceAxis::Z => (0, 1),
        }
    }
}

/// What fills one pie sector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SectorFill {
    Label(u32),
    /// Pool of fractions below the threshold.
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sector {
    pub fill: SectorFill,
    pub fraction: f64,
    pub angle_deg: f64,
}

/// Sectors of one matrix row: ascending label order, sub-threshold fractions
/// pooled into a trailing "other" sector. Empty for rows with no target
/// counts. Angles of a non-empty result sum to 360 degrees.
pub fn row_sectors(row_counts: &[u64], col_labels: &[u32], min_fraction: f64) -> Vec<Sector> {
    debug_assert_eq!(row_counts.len(), col_labels.len() + 1);
    let total: u64 = row_counts[1..].iter().sum();
    if total == 0 {
        return Vec::new();
    }
    let mut sectors = Vec::new();
    let mut other = 0.0;
    for (i, &count) in row_counts[1..].iter().enumerate() {
        if count == 0 {
            continue;
        }
        let fraction = count as f64 / total as f64;
        if fraction < min_fraction {
            other += fraction;
        } else {
            sectors.push(Sector {
                fill: SectorFill::Label(col_labels[i]),
                fraction,
                angle_deg: fraction * 360.0,
            });
        }
    }
    if other > 0.0 {
        sectors.push(Sector {
            fill: SectorFill::Other,
            fraction: other,
            angle_deg: other * 360.0,
        });
    }
    sectors
}

/// Renders the source voxels of one slice as pie glyphs.
///
/// `names` adds a legend block; absent labels fall back to their number.
pub fn render_pie_glyphs(
    c: &ConnectivityMatrix,
    source: &LabelVolume,
    source_label: u32,
    axis: SliceAxis,
    slice_index: usize,
    palette: &Palette,
    min_fraction: f64,
    names: Option<&BTreeMap<u32, String>>,
) -> Result<String> {
    if !(0.0..=1.0).contains(&min_fraction) {
        return Err(Error::NonPositiveParam {
            what: "min_fraction",
            value: min_fraction,
        });
    }
    let dims = source.shape().dims();
    let extent = dims[axis.index()];
    if slice_index >= extent {
        return Err(Error::SliceOutOfRange {
            index: slice_index,
            extent,
        });
    }
    let (ax_u, ax_v) = axis.plane();
    let voxel_size = source.shape().voxel_size();
    let pitch_u = voxel_size[ax_u] * PX_PER_MM;
    let pitch_v = voxel_size[ax_v] * PX_PER_MM;
    let grid_w = dims[ax_u] as f64 * pitch_u;
    let grid_h = dims[ax_v] as f64 * pitch_v;
    let radius = RADIUS_FRACTION * pitch_u.min(pitch_v);

    let legend: Vec<(Rgb, String)> = match names {
        Some(names) => {
            let mut entries: Vec<(Rgb, String)> = c
                .col_labels()
                .iter()
                .map(|&label| {
                    let name = names
                        .get(&label)
                        .cloned()
                        .unwrap_or_else(|| format!("{label}"));
                    (palette.color(label), format!("{label} {name}"))
                })
                .collect();
            entries.push((OTHER_GRAY, String::from("other")));
            entries
        }
        None => Vec::new(),
    };
    let legend_w = if legend.is_empty() { 0.0 } else { 220.0 };
    let width = grid_w + legend_w;
    let height = grid_h.max(24.0 + legend.len() as f64 * 18.0);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
        fmt_px(width),
        fmt_px(height),
        fmt_px(width),
        fmt_px(height)
    ));
    svg.push_str(&format!(
        "<rect width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>\n",
        fmt_px(width),
        fmt_px(height)
    ));

    for (row, &v) in c.rows().iter().enumerate() {
        let pos = v.as_array();
        if pos[axis.index()] != slice_index as i32 {
            continue;
        }
        if source.label_at(v) != Some(source_label) {
            continue;
        }
        let sectors = row_sectors(c.row_counts(row), c.col_labels(), min_fraction);
        if sectors.is_empty() {
            continue;
        }
        let cx = (pos[ax_u] as f64 + 0.5) * pitch_u;
        let cy = (pos[ax_v] as f64 + 0.5) * pitch_v;
        render_pie(&mut svg, cx, cy, radius, &sectors, palette);
    }

    for (i, (color, text)) in legend.iter().enumerate() {
        let y = 20.0 + i as f64 * 18.0;
        svg.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n",
            fmt_px(grid_w + 16.0),
            fmt_px(y - 10.0),
            color.hex()
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            fmt_px(grid_w + 34.0),
            fmt_px(y),
            xml_escape(text)
        ));
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}

fn render_pie(svg: &mut String, cx: f64, cy: f64, r: f64, sectors: &[Sector], palette: &Palette) {
    let fill_of = |s: &Sector| match s.fill {
        SectorFill::Label(label) => palette.color(label),
        SectorFill::Other => OTHER_GRAY,
    };
    if sectors.len() == 1 && sectors[0].angle_deg >= 360.0 - 1e-9 {
        svg.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{}\"/>\n",
            fmt_px(cx),
            fmt_px(cy),
            fmt_px(r),
            fill_of(&sectors[0]).hex()
        ));
        return;
    }
    let mut start = 0.0f64;
    for sector in sectors {
        let end = start + sector.angle_deg;
        let (x0, y0) = arc_point(cx, cy, r, start);
        let (x1, y1) = arc_point(cx, cy, r, end);
        let large_arc = if sector.angle_deg > 180.0 { 1 } else { 0 };
        svg.push_str(&format!(
            "<path d=\"M {} {} L {} {} A {} {} 0 {} 1 {} {} Z\" fill=\"{}\"/>\n",
            fmt_px(cx),
            fmt_px(cy),
            fmt_px(x0),
            fmt_px(y0),
            fmt_px(r),
            fmt_px(r),
            large_arc,
            fmt_px(x1),
            fmt_px(y1),
            fill_of(sector).hex()
        ));
        start = end;
    }
}

/// Point on the circle at `deg` clockwise from 12 o'clock (SVG y grows
/// downward, so the standard parametrization already turns clockwise).
fn arc_point(cx: f64, cy: f64, r: f64, deg: f64) -> (f64, f64) {
    let rad = (deg - 90.0).to_radians();
    (cx + r * libm::cos(rad), cy + r * libm::sin(rad))
}

fn fmt_px(v: f64) -> String {
    format!("{v:.3}")
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(ch),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectivity::{Algorithm, Provenance};
    use crate::grid::{Affine, VoxelIndex};
    use crate::streamline::EndpointMode;
    use alloc::vec;

    #[test]
    fn sectors_follow_label_order_with_threshold_pooling() {
        let sectors = row_sectors(&[5, 30, 10], &[4, 9], 0.02);
        assert_eq!(sectors.len(), 2);
        assert_eq!(sectors[0].fill, SectorFill::Label(4));
        assert!((sectors[0].angle_deg - 270.0).abs() < 1e-9);
        assert_eq!(sectors[1].fill, SectorFill::Label(9));
        assert!((sectors[1].angle_deg - 90.0).abs() < 1e-9);
    }

    #[test]
    fn small_fractions_pool_into_other() {
        let sectors = row_sectors(&[0, 1, 98, 1], &[2, 5, 7], 0.02);
        assert_eq!(sectors.len(), 2);
        assert_eq!(sectors[0].fill, SectorFill::Label(5));
        assert_eq!(sectors[1].fill, SectorFill::Other);
        assert!((sectors[1].fraction - 0.02).abs() < 1e-12);
    }

    #[test]
    fn sector_angles_sum_to_full_circle() {
        let cases: [(&[u64], &[u32]); 3] = [
            (&[0, 1, 1, 1], &[1, 2, 3]),
            (&[9, 997, 2, 1], &[10, 20, 30]),
            (&[0, 123_456, 1, 7_890], &[3, 4, 5]),
        ];
        for (counts, labels) in cases {
            let sectors = row_sectors(counts, labels, 0.02);
            let sum: f64 = sectors.iter().map(|s| s.angle_deg).sum();
            assert!((sum - 360.0).abs() < 1e-6, "sum = {sum}");
        }
    }

    #[test]
    fn zero_rows_have_no_sectors() {
        assert!(row_sectors(&[12, 0, 0], &[1, 2], 0.02).is_empty());
    }

    #[test]
    fn palette_colors_are_distinct_and_stable() {
        let labels: Vec<u32> = (1..=64).collect();
        let palette = Palette::default_for(&labels);
        let mut seen = Vec::new();
        for &label in &labels {
            let c = palette.color(label);
            assert!(!seen.contains(&c), "duplicate color for label {label}");
            seen.push(c);
        }
        let again = Palette::default_for(&labels);
        assert_eq!(palette, again);
    }

    fn test_matrix() -> (ConnectivityMatrix, LabelVolume) {
        let affine = Affine::scaling([1.0, 1.0, 1.0], [0.5, 0.5, 0.5]).unwrap();
        let source =
            LabelVolume::from_fn([2, 2, 1], affine, |v| if v.i == 0 { 1 } else { 0 }).unwrap();
        let rows = vec![VoxelIndex::new(0, 0, 0), VoxelIndex::new(0, 1, 0)];
        let counts = vec![0, 3, 1, 0, 0, 0];
        let provenance = Provenance {
            algorithm: Algorithm::FromTractogram,
            k: None,
            k_star: None,
            rng_seed: None,
            endpoint_mode: EndpointMode::Both,
            source_dims: [2, 2, 1],
            target_dims: [2, 2, 1],
            generated_streamlines: 4,
            attempts: 4,
            passthrough_total: 4,
            flagged_rows: vec![],
        };
        let m = ConnectivityMatrix::from_parts(rows, vec![3, 5], counts, provenance).unwrap();
        (m, source)
    }

    #[test]
    fn render_is_deterministic_and_skips_empty_rows() {
        let (m, source) = test_matrix();
        let palette = Palette::default_for(m.col_labels());
        let a = render_pie_glyphs(
            &m,
            &source,
            1,
            SliceAxis::Z,
            0,
            &palette,
            DEFAULT_MIN_FRACTION,
            None,
        )
        .unwrap();
        let b = render_pie_glyphs(
            &m,
            &source,
            1,
            SliceAxis::Z,
            0,
            &palette,
            DEFAULT_MIN_FRACTION,
            None,
        )
        .unwrap();
        assert_eq!(a, b);
        // One row has counts, the other renders nothing.
        assert_eq!(a.matches("<path").count(), 2);
        assert!(a.starts_with("<svg "));
        assert!(a.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn full_circle_renders_as_circle_element() {
        let (m, source) = test_matrix();
        let palette = Palette::default_for(m.col_labels());
        // Row 0 is [0, 3, 1]; with min_fraction above 0.25 the label-5 slice
        // pools into "other"... still two sectors. Use a one-label matrix.
        let rows = vec![VoxelIndex::new(0, 0, 0)];
        let counts = vec![0, 9];
        let single = ConnectivityMatrix::from_parts(
            rows,
            vec![3],
            counts,
            m.provenance().clone(),
        )
        .unwrap();
        let svg = render_pie_glyphs(
            &single,
            &source,
            1,
            SliceAxis::Z,
            0,
            &palette,
            DEFAULT_MIN_FRACTION,
            None,
        )
        .unwrap();
        assert_eq!(svg.matches("<circle").count(), 1);
        assert_eq!(svg.matches("<path").count(), 0);
    }

    #[test]
    fn slice_out_of_range_is_rejected() {
        let (m, source) = test_matrix();
        let palette = Palette::default_for(m.col_labels());
        let err = render_pie_glyphs(
            &m,
            &source,
            1,
            SliceAxis::Z,
            5,
            &palette,
            DEFAULT_MIN_FRACTION,
            None,
        );
        assert!(matches!(
            err,
            Err(Error::SliceOutOfRange { index: 5, extent: 1 })
        ));
    }

    #[test]
    fn legend_lists_labels_with_names() {
        let (m, source) = test_matrix();
        let palette = Palette::default_for(m.col_labels());
        let mut names = BTreeMap::new();
        names.insert(3u32, String::from("left cap"));
        let svg = render_pie_glyphs(
            &m,
            &source,
            1,
            SliceAxis::Z,
            0,
            &palette,
            DEFAULT_MIN_FRACTION,
            Some(&names),
        )
        .unwrap();
        assert!(svg.contains("3 left cap"));
        // Label 5 has no name entry; it falls back to the number.
        assert!(svg.contains(">5 5</text>"));
        assert!(svg.contains("other"));
    }
}
