//! NIfTI-1 volume support, narrowed to what the pipeline exchanges: integer
//! label volumes and 4D direction fields, single-file `n+1` images only,
//! optionally gzip-compressed.
//!
//! Reading accepts either byte order (detected from `sizeof_hdr`) and takes
//! the world transform from the sform when present, falling back to the
//! quaternion qform. Writing always emits little-endian with an sform.
//! Intensity rescaling (`scl_slope`/`scl_inter`) is rejected rather than
//! silently applied: neither labels nor unit vectors survive it.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use thiserror::Error;

use tracon_core::{Affine, DirectionField, GridShape, LabelVolume};

const HEADER_LEN: usize = 348;
/// Header, extension flag, then data.
const DATA_OFFSET: usize = 352;
const MAGIC_SINGLE: &[u8; 4] = b"n+1\0";

const DT_U8: i16 = 2;
const DT_I16: i16 = 4;
const DT_I32: i16 = 8;
const DT_F32: i16 = 16;
const DT_F64: i16 = 64;
const DT_U16: i16 = 512;

#[derive(Debug, Error)]
pub enum NiftiError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a NIfTI-1 file: sizeof_hdr reads {found} in both byte orders (expected 348)")]
    BadSizeofHdr { found: i32 },
    #[error("unsupported magic {found:?}; only single-file \"n+1\" images are handled")]
    BadMagic { found: [u8; 4] },
    #[error("header: {reason}")]
    BadHeader { reason: String },
    #[error("datatype code {code} is not usable as {context}")]
    UnsupportedDatatype { code: i16, context: &'static str },
    #[error("voxel {index} holds negative value {value}, which cannot be a label")]
    NegativeLabel { index: usize, value: i64 },
    #[error("data section holds {got} bytes but the dimensions require {expected}")]
    DataLength { got: usize, expected: usize },
    #[error("neither sform nor qform is set; voxels cannot be placed in world space")]
    MissingAffine,
    #[error("scl_slope/scl_inter rescaling is set and not supported for this content")]
    UnsupportedScaling,
    #[error(transparent)]
    Core(#[from] tracon_core::Error),
}

pub type Result<T> = std::result::Result<T, NiftiError>;

/// Read a label volume from a `.nii` or `.nii.gz` file.
///
/// Accepted datatypes are uint8, int16, int32 and uint16; any negative sample
/// is an error, not a clamp.
pub fn read_labels(path: &Path) -> Result<LabelVolume> {
    let bytes = read_all(path)?;
    let hdr = Header::parse(&bytes)?;
    let dims = hdr.spatial_dims()?;
    if hdr.dim[0] > 3 {
        for extra in 4..=hdr.dim[0] as usize {
            if hdr.dim[extra] > 1 {
                return Err(NiftiError::BadHeader {
                    reason: format!(
                        "expected a 3D volume, found dim[{extra}] = {}",
                        hdr.dim[extra]
                    ),
                });
            }
        }
    }
    hdr.reject_scaling()?;
    let n = dims[0] * dims[1] * dims[2];
    let data = hdr.data_section(&bytes, n)?;
    let labels = match hdr.datatype {
        DT_U8 => data.iter().map(|&b| u32::from(b)).collect(),
        DT_I16 => decode_signed(data, 2, |c| i64::from(hdr.order.i16(c)))?,
        DT_I32 => decode_signed(data, 4, |c| i64::from(hdr.order.i32(c)))?,
        DT_U16 => data
            .chunks_exact(2)
            .map(|c| u32::from(hdr.order.u16(c)))
            .collect(),
        code => {
            return Err(NiftiError::UnsupportedDatatype {
                code,
                context: "labels",
            })
        }
    };
    let affine = hdr.affine()?;
    Ok(LabelVolume::new(dims, affine, labels)?)
}

/// Read a per-voxel direction field from a 4D volume whose fourth dimension
/// holds the three vector components as consecutive component volumes.
pub fn read_direction_field(path: &Path) -> Result<DirectionField> {
    let bytes = read_all(path)?;
    let hdr = Header::parse(&bytes)?;
    if hdr.dim[0] != 4 || hdr.dim[4] != 3 {
        return Err(NiftiError::BadHeader {
            reason: format!(
                "direction field must be 4D with 3 components, found dim[0] = {} and dim[4] = {}",
                hdr.dim[0], hdr.dim[4]
            ),
        });
    }
    hdr.reject_scaling()?;
    let dims = hdr.spatial_dims()?;
    let n = dims[0] * dims[1] * dims[2];
    let data = hdr.data_section(&bytes, n * 3)?;
    let comps: Vec<f64> = match hdr.datatype {
        DT_F32 => data
            .chunks_exact(4)
            .map(|c| f64::from(hdr.order.f32(c)))
            .collect(),
        DT_F64 => data.chunks_exact(8).map(|c| hdr.order.f64(c)).collect(),
        code => {
            return Err(NiftiError::UnsupportedDatatype {
                code,
                context: "a direction field",
            })
        }
    };
    let vectors: Vec<[f64; 3]> = (0..n)
        .map(|v| [comps[v], comps[n + v], comps[2 * n + v]])
        .collect();
    let affine = hdr.affine()?;
    Ok(DirectionField::new(dims, affine, vectors)?)
}

/// Write a label volume as little-endian int32 with an sform transform.
pub fn write_labels(path: &Path, volume: &LabelVolume) -> Result<()> {
    for (index, &label) in volume.labels().iter().enumerate() {
        if label > i32::MAX as u32 {
            return Err(NiftiError::BadHeader {
                reason: format!("label {label} at voxel {index} exceeds the int32 range"),
            });
        }
    }
    let mut out = header_bytes(volume.shape(), volume.affine(), DT_I32, 32, 3, 1);
    for &label in volume.labels() {
        let mut b = [0u8; 4];
        LittleEndian::write_i32(&mut b, label as i32);
        out.extend_from_slice(&b);
    }
    write_all(path, &out)
}

/// Write a direction field as little-endian float32 component volumes.
pub fn write_direction_field(path: &Path, field: &DirectionField) -> Result<()> {
    let mut out = header_bytes(field.shape(), field.affine(), DT_F32, 32, 4, 3);
    for comp in 0..3 {
        for v in field.vectors() {
            let mut b = [0u8; 4];
            LittleEndian::write_f32(&mut b, v[comp] as f32);
            out.extend_from_slice(&b);
        }
    }
    write_all(path, &out)
}

fn decode_signed(
    data: &[u8],
    width: usize,
    read: impl Fn(&[u8]) -> i64,
) -> Result<Vec<u32>> {
    data.chunks_exact(width)
        .enumerate()
        .map(|(index, c)| {
            let value = read(c);
            if value < 0 {
                Err(NiftiError::NegativeLabel { index, value })
            } else {
                Ok(value as u32)
            }
        })
        .collect()
}

#[derive(Clone, Copy)]
enum Order {
    Little,
    Big,
}

macro_rules! order_read {
    ($name:ident, $ty:ty, $method:ident) => {
        fn $name(self, b: &[u8]) -> $ty {
            match self {
                Order::Little => LittleEndian::$method(b),
                Order::Big => BigEndian::$method(b),
            }
        }
    };
}

impl Order {
    order_read!(i16, i16, read_i16);
    order_read!(u16, u16, read_u16);
    order_read!(i32, i32, read_i32);
    order_read!(f32, f32, read_f32);
    order_read!(f64, f64, read_f64);
}

struct Header {
    order: Order,
    dim: [i16; 8],
    datatype: i16,
    bitpix: i16,
    pixdim: [f32; 8],
    vox_offset: f32,
    scl_slope: f32,
    scl_inter: f32,
    qform_code: i16,
    sform_code: i16,
    quatern: [f32; 3],
    qoffset: [f32; 3],
    srow: [[f32; 4]; 3],
}

impl Header {
    fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(NiftiError::BadHeader {
                reason: format!("file holds {} bytes, header needs {HEADER_LEN}", bytes.len()),
            });
        }
        let le = LittleEndian::read_i32(&bytes[0..4]);
        let order = if le == HEADER_LEN as i32 {
            Order::Little
        } else if BigEndian::read_i32(&bytes[0..4]) == HEADER_LEN as i32 {
            Order::Big
        } else {
            return Err(NiftiError::BadSizeofHdr { found: le });
        };
        let magic: [u8; 4] = bytes[344..348].try_into().unwrap();
        if &magic != MAGIC_SINGLE {
            return Err(NiftiError::BadMagic { found: magic });
        }
        let mut dim = [0i16; 8];
        for (i, d) in dim.iter_mut().enumerate() {
            *d = order.i16(&bytes[40 + 2 * i..]);
        }
        let mut pixdim = [0f32; 8];
        for (i, p) in pixdim.iter_mut().enumerate() {
            *p = order.f32(&bytes[76 + 4 * i..]);
        }
        let mut srow = [[0f32; 4]; 3];
        for (r, row) in srow.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = order.f32(&bytes[280 + 16 * r + 4 * c..]);
            }
        }
        let hdr = Header {
            order,
            dim,
            datatype: order.i16(&bytes[70..]),
            bitpix: order.i16(&bytes[72..]),
            pixdim,
            vox_offset: order.f32(&bytes[108..]),
            scl_slope: order.f32(&bytes[112..]),
            scl_inter: order.f32(&bytes[116..]),
            qform_code: order.i16(&bytes[252..]),
            sform_code: order.i16(&bytes[254..]),
            quatern: [
                order.f32(&bytes[256..]),
                order.f32(&bytes[260..]),
                order.f32(&bytes[264..]),
            ],
            qoffset: [
                order.f32(&bytes[268..]),
                order.f32(&bytes[272..]),
                order.f32(&bytes[276..]),
            ],
            srow,
        };
        let expected_bitpix = match hdr.datatype {
            DT_U8 => 8,
            DT_I16 | DT_U16 => 16,
            DT_I32 | DT_F32 => 32,
            DT_F64 => 64,
            _ => hdr.bitpix,
        };
        if hdr.bitpix != expected_bitpix {
            return Err(NiftiError::BadHeader {
                reason: format!(
                    "bitpix {} does not match datatype {}",
                    hdr.bitpix, hdr.datatype
                ),
            });
        }
        if !(1..=7).contains(&hdr.dim[0]) {
            return Err(NiftiError::BadHeader {
                reason: format!("dim[0] = {} is outside 1..=7", hdr.dim[0]),
            });
        }
        Ok(hdr)
    }

    fn spatial_dims(&self) -> Result<[usize; 3]> {
        let mut dims = [0usize; 3];
        for ax in 0..3 {
            let d = if (ax as i16) < self.dim[0] { self.dim[ax + 1] } else { 1 };
            if d < 1 {
                return Err(NiftiError::BadHeader {
                    reason: format!("dim[{}] = {d} is not positive", ax + 1),
                });
            }
            dims[ax] = d as usize;
        }
        Ok(dims)
    }

    fn reject_scaling(&self) -> Result<()> {
        let slope_identity = self.scl_slope == 0.0 || self.scl_slope == 1.0;
        if slope_identity && (self.scl_inter == 0.0 || self.scl_slope == 0.0) {
            Ok(())
        } else {
            Err(NiftiError::UnsupportedScaling)
        }
    }

    fn data_section<'a>(&self, bytes: &'a [u8], samples: usize) -> Result<&'a [u8]> {
        let offset = self.vox_offset as usize;
        if (self.vox_offset as f64) < HEADER_LEN as f64
            || self.vox_offset != offset as f32
            || offset > bytes.len()
        {
            return Err(NiftiError::BadHeader {
                reason: format!("vox_offset {} is not a valid data offset", self.vox_offset),
            });
        }
        let expected = samples * (self.bitpix as usize / 8);
        let got = bytes.len() - offset;
        if got != expected {
            return Err(NiftiError::DataLength { got, expected });
        }
        Ok(&bytes[offset..])
    }

    fn affine(&self) -> Result<Affine> {
        let m = if self.sform_code > 0 {
            let mut m = [[0f64; 4]; 4];
            for r in 0..3 {
                for c in 0..4 {
                    m[r][c] = f64::from(self.srow[r][c]);
                }
            }
            m[3] = [0.0, 0.0, 0.0, 1.0];
            m
        } else if self.qform_code > 0 {
            self.qform_matrix()
        } else {
            return Err(NiftiError::MissingAffine);
        };
        Ok(Affine::new(m)?)
    }

    fn qform_matrix(&self) -> [[f64; 4]; 4] {
        let b = f64::from(self.quatern[0]);
        let c = f64::from(self.quatern[1]);
        let d = f64::from(self.quatern[2]);
        let a = (1.0 - b * b - c * c - d * d).max(0.0).sqrt();
        let qfac = if self.pixdim[0] < 0.0 { -1.0 } else { 1.0 };
        let sp = [
            f64::from(self.pixdim[1]),
            f64::from(self.pixdim[2]),
            f64::from(self.pixdim[3]) * qfac,
        ];
        let r = [
            [
                a * a + b * b - c * c - d * d,
                2.0 * (b * c - a * d),
                2.0 * (b * d + a * c),
            ],
            [
                2.0 * (b * c + a * d),
                a * a + c * c - b * b - d * d,
                2.0 * (c * d - a * b),
            ],
            [
                2.0 * (b * d - a * c),
                2.0 * (c * d + a * b),
                a * a + d * d - b * b - c * c,
            ],
        ];
        let mut m = [[0f64; 4]; 4];
        for row in 0..3 {
            for col in 0..3 {
                m[row][col] = r[row][col] * sp[col];
            }
            m[row][3] = f64::from(self.qoffset[row]);
        }
        m[3] = [0.0, 0.0, 0.0, 1.0];
        m
    }
}

/// 352-byte little-endian header plus the 4-byte "no extensions" flag.
fn header_bytes(
    shape: &GridShape,
    affine: &Affine,
    datatype: i16,
    bitpix: i16,
    ndim: i16,
    fourth: i16,
) -> Vec<u8> {
    let mut h = vec![0u8; DATA_OFFSET];
    LittleEndian::write_i32(&mut h[0..], HEADER_LEN as i32);
    h[38] = b'r';
    let dims = shape.dims();
    let dim: [i16; 8] = [
        ndim,
        dims[0] as i16,
        dims[1] as i16,
        dims[2] as i16,
        fourth,
        1,
        1,
        1,
    ];
    for (i, d) in dim.iter().enumerate() {
        LittleEndian::write_i16(&mut h[40 + 2 * i..], *d);
    }
    LittleEndian::write_i16(&mut h[70..], datatype);
    LittleEndian::write_i16(&mut h[72..], bitpix);
    let vs = affine.voxel_size();
    let pixdim: [f32; 8] = [
        1.0,
        vs[0] as f32,
        vs[1] as f32,
        vs[2] as f32,
        1.0,
        1.0,
        1.0,
        1.0,
    ];
    for (i, p) in pixdim.iter().enumerate() {
        LittleEndian::write_f32(&mut h[76 + 4 * i..], *p);
    }
    LittleEndian::write_f32(&mut h[108..], DATA_OFFSET as f32);
    // mm spatial units, seconds temporal.
    h[123] = 2 | 8;
    LittleEndian::write_i16(&mut h[254..], 1);
    let m = affine.matrix();
    for r in 0..3 {
        for c in 0..4 {
            LittleEndian::write_f32(&mut h[280 + 16 * r + 4 * c..], m[r][c] as f32);
        }
    }
    h[344..348].copy_from_slice(MAGIC_SINGLE);
    h
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn write_all(path: &Path, bytes: &[u8]) -> Result<()> {
    let gz = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("gz"));
    if gz {
        let file = std::fs::File::create(path)?;
        let mut enc = GzEncoder::new(file, Compression::default());
        enc.write_all(bytes)?;
        enc.finish()?;
    } else {
        std::fs::write(path, bytes)?;
    }
    Ok(())
}
