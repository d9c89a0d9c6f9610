//! Algorithmic core for voxel-to-region connectivity mapping.
//!
//! Everything in this crate is deterministic, pure computation: affine grids
//! and exact segment traversal ([`grid`]), streamline geometry and endpoint
//! classification ([`streamline`]), seeded probabilistic tracking
//! ([`tracking`]), connectivity accumulation and parcellation
//! ([`connectivity`]), sub-voxel accumulation ([`superres`]), pie-glyph
//! rendering ([`glyph`]), and synthetic phantoms ([`phantom`]).
//!
//! The crate is `no_std + alloc`; file formats, parallel drivers, and the CLI
//! live in the companion `tracon` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod connectivity;
pub mod error;
pub mod glyph;
pub mod grid;
pub mod phantom;
pub mod streamline;
pub mod superres;
pub mod tracking;
mod vec3;

pub use connectivity::{Algorithm, ConnectivityMatrix, Provenance, TargetCols};
pub use error::{Error, Result};
pub use grid::{Affine, GridShape, LabelVolume, SourceRegion, VoxelIndex};
pub use streamline::{EndpointMode, Streamline, Tractogram};
pub use tracking::{DirectionField, RunParams, TrackParams};
