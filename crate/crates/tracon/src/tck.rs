//! MRtrix `.tck` tractogram reader and writer.
//!
//! The format is a text header ("mrtrix tracks", `key: value` lines, `END`)
//! followed at a self-declared byte offset by float32 triplets: finite
//! triplets are points, an all-NaN triplet closes a streamline, and an
//! all-infinite triplet terminates the file. Reading accepts both float32
//! byte orders; writing always emits `Float32LE`. Anything that mixes those
//! triplet classes, truncates mid-triplet, or continues past the terminator
//! is reported as corruption with the byte offset where it happened.

use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use thiserror::Error;

use tracon_core::{Streamline, Tractogram};

const MAGIC_LINE: &str = "mrtrix tracks";
const RESERVED_KEYS: [&str; 3] = ["count", "datatype", "file"];

#[derive(Debug, Error)]
pub enum TckError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("first line is {found:?}, expected {MAGIC_LINE:?}")]
    BadMagic { found: String },
    #[error("header line {line_no} is not a \"key: value\" pair: {line:?}")]
    MalformedHeaderLine { line_no: usize, line: String },
    #[error("header field {field:?} appears more than once")]
    DuplicateField { field: &'static str },
    #[error("header ends without an END line")]
    MissingEnd,
    #[error("header field {field:?} is missing")]
    MissingField { field: &'static str },
    #[error("datatype {found:?} is unsupported; expected Float32LE or Float32BE")]
    UnsupportedDatatype { found: String },
    #[error("file field {found:?} does not have the form \". <offset>\"")]
    BadFileField { found: String },
    #[error("data offset {offset} is invalid for a header ending at byte {header_end} in a {file_len}-byte file")]
    BadOffset {
        offset: usize,
        header_end: usize,
        file_len: usize,
    },
    #[error("payload truncated at byte {offset}: no terminator triplet before end of data")]
    TruncatedPayload { offset: usize },
    #[error("triplet at byte {offset} mixes finite, NaN, or infinite components")]
    PartialSentinel { offset: usize },
    #[error("{got} bytes of trailing data after the terminator triplet at byte {offset}")]
    TrailingData { offset: usize, got: usize },
    #[error("streamline closed at byte {offset} has {points} point(s); at least 2 are required")]
    ShortStreamline { points: usize, offset: usize },
    #[error("terminator at byte {offset} arrives before the last streamline's delimiter")]
    UndelimitedStreamline { offset: usize },
    #[error("header declares count {declared} but the payload holds {found} streamlines")]
    CountMismatch { declared: u64, found: u64 },
    #[error("coordinate {value} cannot be stored as float32")]
    ValueOverflowsF32 { value: f64 },
    #[error("metadata entry {key:?} cannot be written: {reason}")]
    BadMetadata { key: String, reason: String },
    #[error(transparent)]
    Core(#[from] tracon_core::Error),
}

pub type Result<T> = std::result::Result<T, TckError>;

pub fn read_tck(path: &Path) -> Result<Tractogram> {
    parse_tck(&std::fs::read(path)?)
}

pub fn write_tck(path: &Path, tractogram: &Tractogram) -> Result<()> {
    std::fs::write(path, encode_tck(tractogram)?)?;
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum Triplet {
    Point([f64; 3]),
    Delimiter,
    Terminator,
}

fn classify(v: [f32; 3], offset: usize) -> Result<Triplet> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(Triplet::Point([
            f64::from(v[0]),
            f64::from(v[1]),
            f64::from(v[2]),
        ]))
    } else if v.iter().all(|c| c.is_nan()) {
        Ok(Triplet::Delimiter)
    } else if v.iter().all(|c| c.is_infinite()) {
        Ok(Triplet::Terminator)
    } else {
        Err(TckError::PartialSentinel { offset })
    }
}

/// Parse an in-memory `.tck` file.
pub fn parse_tck(bytes: &[u8]) -> Result<Tractogram> {
    let header = parse_header(bytes)?;
    if header.offset < header.end || header.offset > bytes.len() {
        return Err(TckError::BadOffset {
            offset: header.offset,
            header_end: header.end,
            file_len: bytes.len(),
        });
    }

    let payload = &bytes[header.offset..];
    let mut streamlines = Vec::new();
    let mut buf: Vec<[f64; 3]> = Vec::new();
    let mut terminated_at = None;
    let mut pos = 0usize;
    while pos + 12 <= payload.len() {
        let at = header.offset + pos;
        if let Some(offset) = terminated_at {
            return Err(TckError::TrailingData {
                offset,
                got: payload.len() - pos,
            });
        }
        let chunk = &payload[pos..pos + 12];
        let v = match header.big_endian {
            false => [
                LittleEndian::read_f32(&chunk[0..4]),
                LittleEndian::read_f32(&chunk[4..8]),
                LittleEndian::read_f32(&chunk[8..12]),
            ],
            true => [
                BigEndian::read_f32(&chunk[0..4]),
                BigEndian::read_f32(&chunk[4..8]),
                BigEndian::read_f32(&chunk[8..12]),
            ],
        };
        match classify(v, at)? {
            Triplet::Point(p) => buf.push(p),
            Triplet::Delimiter => {
                if buf.len() < 2 {
                    return Err(TckError::ShortStreamline {
                        points: buf.len(),
                        offset: at,
                    });
                }
                streamlines.push(Streamline::new(core::mem::take(&mut buf))?);
            }
            Triplet::Terminator => {
                if !buf.is_empty() {
                    return Err(TckError::UndelimitedStreamline { offset: at });
                }
                terminated_at = Some(at);
            }
        }
        pos += 12;
    }
    if pos < payload.len() {
        if let Some(offset) = terminated_at {
            return Err(TckError::TrailingData {
                offset,
                got: payload.len() - pos,
            });
        }
        return Err(TckError::TruncatedPayload {
            offset: header.offset + pos,
        });
    }
    if terminated_at.is_none() {
        return Err(TckError::TruncatedPayload {
            offset: bytes.len(),
        });
    }
    if let Some(declared) = header.count {
        if declared != streamlines.len() as u64 {
            return Err(TckError::CountMismatch {
                declared,
                found: streamlines.len() as u64,
            });
        }
    }

    let mut tractogram = Tractogram::new(streamlines);
    for (key, value) in header.metadata {
        tractogram.set_metadata(&key, &value);
    }
    Ok(tractogram)
}

/// Encode a tractogram as `.tck` bytes (always little-endian float32).
pub fn encode_tck(tractogram: &Tractogram) -> Result<Vec<u8>> {
    for (key, value) in &tractogram.metadata {
        let bad = |reason: &str| TckError::BadMetadata {
            key: key.clone(),
            reason: reason.to_string(),
        };
        if key.contains(':') || key.contains('\n') || key.is_empty() {
            return Err(bad("key must be non-empty and free of ':' and newlines"));
        }
        if RESERVED_KEYS.contains(&key.as_str()) {
            return Err(bad("key is reserved for the file structure"));
        }
        if value.contains('\n') {
            return Err(bad("value must not contain newlines"));
        }
    }

    let mut fixed = String::new();
    fixed.push_str(MAGIC_LINE);
    fixed.push('\n');
    for (key, value) in &tractogram.metadata {
        fixed.push_str(key);
        fixed.push_str(": ");
        fixed.push_str(value);
        fixed.push('\n');
    }
    fixed.push_str(&format!("count: {}\n", tractogram.len()));
    fixed.push_str("datatype: Float32LE\n");
    let tail_len = "END\n".len();
    // The offset appears inside the header, so its digit count feeds back
    // into the offset itself; iterate to the fixed point.
    let mut offset = 0usize;
    loop {
        let file_line = format!("file: . {offset}\n");
        let next = fixed.len() + file_line.len() + tail_len;
        if next == offset {
            break;
        }
        offset = next;
    }
    let mut out = fixed.into_bytes();
    out.extend_from_slice(format!("file: . {offset}\n").as_bytes());
    out.extend_from_slice(b"END\n");
    debug_assert_eq!(out.len(), offset);

    let mut scratch = [0u8; 4];
    let mut push = |out: &mut Vec<u8>, value: f32| {
        LittleEndian::write_f32(&mut scratch, value);
        out.extend_from_slice(&scratch);
    };
    for streamline in &tractogram.streamlines {
        for p in streamline.points() {
            for &c in p {
                let f = c as f32;
                if !f.is_finite() {
                    return Err(TckError::ValueOverflowsF32 { value: c });
                }
                push(&mut out, f);
            }
        }
        for _ in 0..3 {
            push(&mut out, f32::NAN);
        }
    }
    for _ in 0..3 {
        push(&mut out, f32::INFINITY);
    }
    Ok(out)
}

struct ParsedHeader {
    metadata: Vec<(String, String)>,
    count: Option<u64>,
    big_endian: bool,
    offset: usize,
    /// Byte just past the END line.
    end: usize,
}

fn parse_header(bytes: &[u8]) -> Result<ParsedHeader> {
    let mut pos = 0usize;
    let mut line_no = 0usize;
    let mut first = true;
    let mut metadata = Vec::new();
    let mut count = None;
    let mut datatype: Option<String> = None;
    let mut file_field: Option<String> = None;
    loop {
        let rest = &bytes[pos..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or(TckError::MissingEnd)?;
        let line = String::from_utf8_lossy(&rest[..nl]).into_owned();
        line_no += 1;
        pos += nl + 1;
        if first {
            if line != MAGIC_LINE {
                return Err(TckError::BadMagic { found: line });
            }
            first = false;
            continue;
        }
        if line == "END" {
            break;
        }
        let colon = line
            .find(':')
            .ok_or_else(|| TckError::MalformedHeaderLine {
                line_no,
                line: line.clone(),
            })?;
        let key = line[..colon].to_string();
        let value = line[colon + 1..].strip_prefix(' ').unwrap_or(&line[colon + 1..]);
        match key.as_str() {
            "count" => {
                if count.is_some() {
                    return Err(TckError::DuplicateField { field: "count" });
                }
                let parsed =
                    value
                        .trim()
                        .parse::<u64>()
                        .map_err(|_| TckError::MalformedHeaderLine {
                            line_no,
                            line: line.clone(),
                        })?;
                count = Some(parsed);
            }
            "datatype" => {
                if datatype.is_some() {
                    return Err(TckError::DuplicateField { field: "datatype" });
                }
                datatype = Some(value.to_string());
            }
            "file" => {
                if file_field.is_some() {
                    return Err(TckError::DuplicateField { field: "file" });
                }
                file_field = Some(value.to_string());
            }
            _ => metadata.push((key, value.to_string())),
        }
    }

    let datatype = datatype.ok_or(TckError::MissingField { field: "datatype" })?;
    let big_endian = match datatype.as_str() {
        "Float32LE" => false,
        "Float32BE" => true,
        _ => return Err(TckError::UnsupportedDatatype { found: datatype }),
    };
    let file_field = file_field.ok_or(TckError::MissingField { field: "file" })?;
    let offset = file_field
        .strip_prefix(". ")
        .and_then(|n| n.trim().parse::<usize>().ok())
        .ok_or_else(|| TckError::BadFileField {
            found: file_field.clone(),
        })?;
    Ok(ParsedHeader {
        metadata,
        count,
        big_endian,
        offset,
        end: pos,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Tractogram {
        let a = Streamline::new(vec![[0.0, 0.0, 0.0], [0.5, 0.25, -1.0], [1.0, 0.5, -2.0]])
            .unwrap();
        let b = Streamline::new(vec![[3.0, 3.5, 4.0], [3.0, 4.5, 4.0]]).unwrap();
        let mut t = Tractogram::new(vec![a, b]);
        t.set_metadata("step_size_mm", "0.5");
        t.set_metadata("seeding", "region");
        t
    }

    /// Re-encode the little-endian payload of `bytes` as Float32BE.
    fn to_big_endian(bytes: &[u8]) -> Vec<u8> {
        let text_end = bytes.windows(4).position(|w| w == b"END\n").unwrap() + 4;
        let header = String::from_utf8(bytes[..text_end].to_vec()).unwrap();
        let header = header.replace("datatype: Float32LE", "datatype: Float32BE");
        let mut out = header.into_bytes();
        assert_eq!(out.len(), text_end, "swap must preserve offsets");
        for chunk in bytes[text_end..].chunks_exact(4) {
            let v = LittleEndian::read_f32(chunk);
            let mut b = [0u8; 4];
            BigEndian::write_f32(&mut b, v);
            out.extend_from_slice(&b);
        }
        out
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let first = encode_tck(&sample()).unwrap();
        let back = parse_tck(&first).unwrap();
        let second = encode_tck(&back).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn metadata_and_points_survive_the_trip() {
        let bytes = encode_tck(&sample()).unwrap();
        let back = parse_tck(&bytes).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.streamlines[0].points()[1], [0.5, 0.25, -1.0]);
        assert_eq!(back.metadata_value("seeding"), Some("region"));
        assert_eq!(back.metadata_value("step_size_mm"), Some("0.5"));
    }

    #[test]
    fn big_endian_payload_reads_identically() {
        let le = encode_tck(&sample()).unwrap();
        let be = to_big_endian(&le);
        let from_le = parse_tck(&le).unwrap();
        let from_be = parse_tck(&be).unwrap();
        assert_eq!(from_le.len(), from_be.len());
        for (a, b) in from_le
            .streamlines
            .iter()
            .zip(from_be.streamlines.iter())
        {
            assert_eq!(a.points(), b.points());
        }
    }

    #[test]
    fn missing_magic_is_rejected() {
        let err = parse_tck(b"mrtrix image\nEND\n").unwrap_err();
        assert!(matches!(err, TckError::BadMagic { .. }));
    }

    #[test]
    fn truncation_names_the_byte_offset() {
        let bytes = encode_tck(&sample()).unwrap();
        let cut = bytes.len() - 17;
        match parse_tck(&bytes[..cut]) {
            Err(TckError::TruncatedPayload { offset }) => assert!(offset <= cut),
            other => panic!("expected TruncatedPayload, got {other:?}"),
        }
    }

    #[test]
    fn partial_sentinel_is_corruption() {
        let mut bytes = encode_tck(&sample()).unwrap();
        // First point's x becomes NaN while y and z stay finite.
        let payload_at = bytes.len() - (5 + 2) * 12;
        LittleEndian::write_f32(&mut bytes[payload_at..], f32::NAN);
        match parse_tck(&bytes) {
            Err(TckError::PartialSentinel { offset }) => assert_eq!(offset, payload_at),
            other => panic!("expected PartialSentinel, got {other:?}"),
        }
    }

    #[test]
    fn trailing_bytes_after_terminator_are_rejected() {
        let mut bytes = encode_tck(&sample()).unwrap();
        bytes.extend_from_slice(&[0u8; 12]);
        assert!(matches!(
            parse_tck(&bytes),
            Err(TckError::TrailingData { got: 12, .. })
        ));
        let mut ragged = encode_tck(&sample()).unwrap();
        ragged.extend_from_slice(&[1, 2, 3]);
        assert!(matches!(
            parse_tck(&ragged),
            Err(TckError::TrailingData { got: 3, .. })
        ));
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let bytes = encode_tck(&sample()).unwrap();
        let mut forged = bytes.clone();
        let at = forged
            .windows(9)
            .position(|w| w == b"count: 2\n")
            .unwrap();
        forged[at + 7] = b'3';
        match parse_tck(&forged) {
            Err(TckError::CountMismatch { declared, found }) => {
                assert_eq!(declared, 3);
                assert_eq!(found, 2);
            }
            other => panic!("expected CountMismatch, got {other:?}"),
        }
    }

    #[test]
    fn unsupported_datatype_is_named() {
        let bytes = encode_tck(&sample()).unwrap();
        let text_end = bytes.windows(4).position(|w| w == b"END\n").unwrap() + 4;
        let header = String::from_utf8(bytes[..text_end].to_vec()).unwrap();
        let header = header.replace("datatype: Float32LE", "datatype: Float64LE");
        let mut forged = header.into_bytes();
        forged.extend_from_slice(&bytes[text_end..]);
        match parse_tck(&forged) {
            Err(TckError::UnsupportedDatatype { found }) => assert_eq!(found, "Float64LE"),
            other => panic!("expected UnsupportedDatatype, got {other:?}"),
        }
    }

    #[test]
    fn single_point_streamline_is_rejected() {
        let ok = encode_tck(&sample()).unwrap();
        let text_end = ok.windows(4).position(|w| w == b"END\n").unwrap() + 4;
        let mut forged = ok[..text_end].to_vec();
        let push = |v: [f32; 3], out: &mut Vec<u8>| {
            for c in v {
                let mut b = [0u8; 4];
                LittleEndian::write_f32(&mut b, c);
                out.extend_from_slice(&b);
            }
        };
        push([1.0, 2.0, 3.0], &mut forged);
        push([f32::NAN; 3], &mut forged);
        push([f32::INFINITY; 3], &mut forged);
        // The count line still says 2; the short streamline errors first.
        match parse_tck(&forged) {
            Err(TckError::ShortStreamline { points: 1, .. }) => {}
            other => panic!("expected ShortStreamline, got {other:?}"),
        }
    }

    #[test]
    fn terminator_before_delimiter_is_rejected() {
        let ok = encode_tck(&sample()).unwrap();
        let text_end = ok.windows(4).position(|w| w == b"END\n").unwrap() + 4;
        let mut forged = ok[..text_end].to_vec();
        for v in [[1.0f32, 2.0, 3.0], [4.0, 5.0, 6.0], [f32::INFINITY; 3]] {
            for c in v {
                let mut b = [0u8; 4];
                LittleEndian::write_f32(&mut b, c);
                forged.extend_from_slice(&b);
            }
        }
        assert!(matches!(
            parse_tck(&forged),
            Err(TckError::UndelimitedStreamline { .. })
        ));
    }
}
