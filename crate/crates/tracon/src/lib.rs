//! Host-side companion to `tracon-core`: file formats, parallel drivers,
//! benchmark harness, and the `tracon` command line tool.
//!
//! The core crate owns the geometry and counting algorithms; this crate adds
//! everything that needs an operating system. Volumes travel as NIfTI-1
//! (`.nii` / `.nii.gz`), streamlines as MRtrix `.tck`, and connectivity
//! matrices as CSV with a voxel sidecar or as a compact binary container.
//! The parallel drivers in [`runner`] are bit-compatible with the serial
//! reference paths regardless of thread count.

pub mod bench;
pub mod cli;
pub mod matio;
pub mod nifti;
pub mod runner;
pub mod tck;
