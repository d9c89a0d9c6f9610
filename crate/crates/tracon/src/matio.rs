//! Connectivity matrix serialization.
//!
//! Two on-disk forms:
//!
//! - CSV: a header row `unassigned,<label>,...` over the target columns,
//!   one data row per source voxel, plus a sidecar `<file>.rows` mapping
//!   row ordinals to voxel indices (`row,i,j,k`). Interoperable but carries
//!   no provenance; matrices read back report an unspecified algorithm.
//! - binary: a little-endian container (magic `CONNMTX\0`, version, full
//!   provenance record, label table, row index table, counts) that round
//!   trips a matrix exactly.
//!
//! `read_matrix` sniffs the magic to pick the decoder; `write_matrix`
//! dispatches on the file extension (`.bin` binary, `.csv` CSV).

use std::io::Write;
use std::path::{Path, PathBuf};

use byteorder::{ByteOrder, LittleEndian};
use thiserror::Error;

use tracon_core::{
    Algorithm, ConnectivityMatrix, EndpointMode, Provenance, VoxelIndex,
};

const MAGIC: &[u8; 8] = b"CONNMTX\0";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MatrixIoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("row sidecar {path} is missing; CSV matrices need the voxel index beside them")]
    MissingSidecar { path: PathBuf },
    #[error("{what} line {line_no}: {reason}")]
    BadLine {
        what: &'static str,
        line_no: usize,
        reason: String,
    },
    #[error("CSV holds {rows} count rows but the sidecar lists {voxels} voxels")]
    RowCountMismatch { rows: usize, voxels: usize },
    #[error("binary matrix: bad magic {found:?}")]
    BadMagic { found: [u8; 8] },
    #[error("binary matrix: unsupported version {found}")]
    BadVersion { found: u32 },
    #[error("binary matrix: file ends inside the {section} section")]
    Truncated { section: &'static str },
    #[error("binary matrix: {got} unexpected bytes after the counts section")]
    TrailingData { got: usize },
    #[error("binary matrix: {reason}")]
    BadField { reason: String },
    #[error("cannot infer a matrix format from {path:?}; use a .csv or .bin extension")]
    BadExtension { path: PathBuf },
    #[error(transparent)]
    Core(#[from] tracon_core::Error),
}

pub type Result<T> = std::result::Result<T, MatrixIoError>;

/// Path of the voxel index sidecar belonging to a CSV matrix.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    let mut name = csv.file_name().unwrap_or_default().to_os_string();
    name.push(".rows");
    csv.with_file_name(name)
}

/// Read a matrix in either format, sniffing the binary magic.
pub fn read_matrix(path: &Path) -> Result<ConnectivityMatrix> {
    let bytes = std::fs::read(path)?;
    if bytes.len() >= MAGIC.len() && &bytes[..MAGIC.len()] == MAGIC {
        decode_binary(&bytes)
    } else {
        read_csv(path, &bytes)
    }
}

/// Write a matrix; the extension picks the format.
pub fn write_matrix(path: &Path, matrix: &ConnectivityMatrix) -> Result<()> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("bin") => {
            std::fs::write(path, encode_binary(matrix))?;
            Ok(())
        }
        Some("csv") => write_csv(path, matrix),
        _ => Err(MatrixIoError::BadExtension {
            path: path.to_path_buf(),
        }),
    }
}

fn write_csv(path: &Path, matrix: &ConnectivityMatrix) -> Result<()> {
    let mut csv = Vec::new();
    let mut header = String::from("unassigned");
    for label in matrix.col_labels() {
        header.push(',');
        header.push_str(&label.to_string());
    }
    writeln!(csv, "{header}")?;
    for row in 0..matrix.n_rows() {
        let line = matrix
            .row_counts(row)
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(",");
        writeln!(csv, "{line}")?;
    }
    std::fs::write(path, csv)?;

    let mut rows = Vec::new();
    writeln!(rows, "row,i,j,k")?;
    for (ordinal, v) in matrix.rows().iter().enumerate() {
        writeln!(rows, "{ordinal},{},{},{}", v.i, v.j, v.k)?;
    }
    std::fs::write(sidecar_path(path), rows)?;
    Ok(())
}

fn read_csv(path: &Path, bytes: &[u8]) -> Result<ConnectivityMatrix> {
    let text = String::from_utf8_lossy(bytes);
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| MatrixIoError::BadLine {
        what: "matrix CSV",
        line_no: 1,
        reason: "file is empty".into(),
    })?;
    let mut cols = header.split(',');
    let first = cols.next().unwrap_or_default();
    if first != "unassigned" {
        return Err(MatrixIoError::BadLine {
            what: "matrix CSV",
            line_no: 1,
            reason: format!("first column is {first:?}, expected \"unassigned\""),
        });
    }
    let col_labels = cols
        .map(|c| {
            c.trim().parse::<u32>().map_err(|_| MatrixIoError::BadLine {
                what: "matrix CSV",
                line_no: 1,
                reason: format!("column label {c:?} is not an unsigned integer"),
            })
        })
        .collect::<Result<Vec<u32>>>()?;
    let n_cols = col_labels.len() + 1;

    let mut counts = Vec::new();
    let mut n_rows = 0usize;
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_cols {
            return Err(MatrixIoError::BadLine {
                what: "matrix CSV",
                line_no,
                reason: format!("expected {n_cols} fields, found {}", fields.len()),
            });
        }
        for f in fields {
            let c = f.trim().parse::<u64>().map_err(|_| MatrixIoError::BadLine {
                what: "matrix CSV",
                line_no,
                reason: format!("count {f:?} is not an unsigned integer"),
            })?;
            counts.push(c);
        }
        n_rows += 1;
    }

    let sidecar = sidecar_path(path);
    let rows_text = std::fs::read_to_string(&sidecar)
        .map_err(|_| MatrixIoError::MissingSidecar { path: sidecar })?;
    let mut rows = Vec::new();
    for (idx, line) in rows_text.lines().enumerate() {
        let line_no = idx + 1;
        if idx == 0 {
            if line != "row,i,j,k" {
                return Err(MatrixIoError::BadLine {
                    what: "row sidecar",
                    line_no,
                    reason: format!("header is {line:?}, expected \"row,i,j,k\""),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(MatrixIoError::BadLine {
                what: "row sidecar",
                line_no,
                reason: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let parse = |f: &str| {
            f.trim().parse::<i64>().map_err(|_| MatrixIoError::BadLine {
                what: "row sidecar",
                line_no,
                reason: format!("field {f:?} is not an integer"),
            })
        };
        let ordinal = parse(fields[0])?;
        if ordinal != rows.len() as i64 {
            return Err(MatrixIoError::BadLine {
                what: "row sidecar",
                line_no,
                reason: format!("row ordinal {ordinal} out of order, expected {}", rows.len()),
            });
        }
        rows.push(VoxelIndex::new(
            parse(fields[1])? as i32,
            parse(fields[2])? as i32,
            parse(fields[3])? as i32,
        ));
    }
    if rows.len() != n_rows {
        return Err(MatrixIoError::RowCountMismatch {
            rows: n_rows,
            voxels: rows.len(),
        });
    }

    let provenance = Provenance {
        algorithm: Algorithm::Unspecified,
        k: None,
        k_star: None,
        rng_seed: None,
        endpoint_mode: EndpointMode::Both,
        source_dims: [0; 3],
        target_dims: [0; 3],
        generated_streamlines: 0,
        attempts: 0,
        passthrough_total: 0,
        flagged_rows: Vec::new(),
    };
    Ok(ConnectivityMatrix::from_parts(
        rows, col_labels, counts, provenance,
    )?)
}

fn algorithm_code(a: Algorithm) -> u32 {
    match a {
        Algorithm::Unspecified => 0,
        Algorithm::Traditional => 1,
        Algorithm::Proposed => 2,
        Algorithm::FromTractogram => 3,
        Algorithm::SuperRes => 4,
    }
}

fn algorithm_from_code(c: u32) -> Result<Algorithm> {
    Ok(match c {
        0 => Algorithm::Unspecified,
        1 => Algorithm::Traditional,
        2 => Algorithm::Proposed,
        3 => Algorithm::FromTractogram,
        4 => Algorithm::SuperRes,
        other => {
            return Err(MatrixIoError::BadField {
                reason: format!("unknown algorithm code {other}"),
            })
        }
    })
}

/// Encode in the binary container format.
pub fn encode_binary(matrix: &ConnectivityMatrix) -> Vec<u8> {
    let p = matrix.provenance();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let push_u32 = |out: &mut Vec<u8>, v: u32| {
        let mut b = [0u8; 4];
        LittleEndian::write_u32(&mut b, v);
        out.extend_from_slice(&b);
    };
    let push_u64 = |out: &mut Vec<u8>, v: u64| {
        let mut b = [0u8; 8];
        LittleEndian::write_u64(&mut b, v);
        out.extend_from_slice(&b);
    };
    push_u32(&mut out, VERSION);
    push_u32(&mut out, algorithm_code(p.algorithm));
    push_u64(&mut out, matrix.n_rows() as u64);
    push_u64(&mut out, matrix.col_labels().len() as u64);
    for d in p.source_dims {
        push_u64(&mut out, d as u64);
    }
    for d in p.target_dims {
        push_u64(&mut out, d as u64);
    }
    push_u32(
        &mut out,
        match p.endpoint_mode {
            EndpointMode::Last => 0,
            EndpointMode::Both => 1,
        },
    );
    let flags = p.k.is_some() as u32 | (p.k_star.is_some() as u32) << 1
        | (p.rng_seed.is_some() as u32) << 2;
    push_u32(&mut out, flags);
    push_u64(&mut out, p.k.unwrap_or(0));
    push_u64(&mut out, p.k_star.unwrap_or(0));
    push_u64(&mut out, p.rng_seed.unwrap_or(0));
    push_u64(&mut out, p.generated_streamlines);
    push_u64(&mut out, p.attempts);
    push_u64(&mut out, p.passthrough_total);
    push_u64(&mut out, p.flagged_rows.len() as u64);
    for &label in matrix.col_labels() {
        push_u32(&mut out, label);
    }
    for v in matrix.rows() {
        for c in v.as_array() {
            let mut b = [0u8; 4];
            LittleEndian::write_i32(&mut b, c);
            out.extend_from_slice(&b);
        }
    }
    for &row in &p.flagged_rows {
        push_u64(&mut out, row as u64);
    }
    for &c in matrix.counts() {
        push_u64(&mut out, c);
    }
    out
}

/// Decode the binary container format.
pub fn decode_binary(bytes: &[u8]) -> Result<ConnectivityMatrix> {
    struct Reader<'a> {
        b: &'a [u8],
        pos: usize,
    }
    impl<'a> Reader<'a> {
        fn take(&mut self, n: usize, section: &'static str) -> Result<&'a [u8]> {
            if self.pos + n > self.b.len() {
                return Err(MatrixIoError::Truncated { section });
            }
            let s = &self.b[self.pos..self.pos + n];
            self.pos += n;
            Ok(s)
        }
        fn u32(&mut self, section: &'static str) -> Result<u32> {
            Ok(LittleEndian::read_u32(self.take(4, section)?))
        }
        fn u64(&mut self, section: &'static str) -> Result<u64> {
            Ok(LittleEndian::read_u64(self.take(8, section)?))
        }
        fn i32(&mut self, section: &'static str) -> Result<i32> {
            Ok(LittleEndian::read_i32(self.take(4, section)?))
        }
    }

    let mut r = Reader { b: bytes, pos: 0 };
    let magic = r.take(8, "magic")?;
    if magic != MAGIC {
        return Err(MatrixIoError::BadMagic {
            found: magic.try_into().unwrap(),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(MatrixIoError::BadVersion { found: version });
    }
    let algorithm = algorithm_from_code(r.u32("algorithm")?)?;
    let n_rows = r.u64("dims")? as usize;
    let n_labels = r.u64("dims")? as usize;
    let mut source_dims = [0usize; 3];
    for d in &mut source_dims {
        *d = r.u64("dims")? as usize;
    }
    let mut target_dims = [0usize; 3];
    for d in &mut target_dims {
        *d = r.u64("dims")? as usize;
    }
    let endpoint_mode = match r.u32("endpoint mode")? {
        0 => EndpointMode::Last,
        1 => EndpointMode::Both,
        other => {
            return Err(MatrixIoError::BadField {
                reason: format!("unknown endpoint mode code {other}"),
            })
        }
    };
    let flags = r.u32("flags")?;
    let k_raw = r.u64("run parameters")?;
    let k_star_raw = r.u64("run parameters")?;
    let seed_raw = r.u64("run parameters")?;
    let generated_streamlines = r.u64("run totals")?;
    let attempts = r.u64("run totals")?;
    let passthrough_total = r.u64("run totals")?;
    let n_flagged = r.u64("run totals")? as usize;
    let mut col_labels = Vec::with_capacity(n_labels);
    for _ in 0..n_labels {
        col_labels.push(r.u32("label table")?);
    }
    let mut rows = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let i = r.i32("row index table")?;
        let j = r.i32("row index table")?;
        let k = r.i32("row index table")?;
        rows.push(VoxelIndex::new(i, j, k));
    }
    let mut flagged_rows = Vec::with_capacity(n_flagged);
    for _ in 0..n_flagged {
        flagged_rows.push(r.u64("flagged rows")? as usize);
    }
    let mut counts = Vec::with_capacity(n_rows * (n_labels + 1));
    for _ in 0..n_rows * (n_labels + 1) {
        counts.push(r.u64("counts")?);
    }
    if r.pos != bytes.len() {
        return Err(MatrixIoError::TrailingData {
            got: bytes.len() - r.pos,
        });
    }

    let provenance = Provenance {
        algorithm,
        k: (flags & 1 != 0).then_some(k_raw),
        k_star: (flags & 2 != 0).then_some(k_star_raw),
        rng_seed: (flags & 4 != 0).then_some(seed_raw),
        endpoint_mode,
        source_dims,
        target_dims,
        generated_streamlines,
        attempts,
        passthrough_total,
        flagged_rows,
    };
    Ok(ConnectivityMatrix::from_parts(
        rows, col_labels, counts, provenance,
    )?)
}
