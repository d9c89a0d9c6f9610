//! Command-line interface.
//!
//! Every subcommand follows one exit-code contract: 0 on success (and for
//! `--help`/`--version`), 2 for argument errors including missing input
//! files, 1 for runtime errors such as corrupt file content or a failed run.
//!
//! A `--config FILE` of `key=value` lines can supply any flag. Its tokens are
//! injected right after the subcommand, before the explicit command line, so
//! flags typed on the command line override the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{self, BenchConfig, BenchError};
use crate::matio::{self, MatrixIoError};
use crate::nifti;
use crate::runner::{
    connectivity_from_tractogram_par, generate_region_tracks_par, generate_voxel_tracks_par,
    proposed_connectivity_par, traditional_connectivity_par, RunnerError,
};
use crate::tck;
use tracon_core::connectivity::parcellate;
use tracon_core::glyph::{render_pie_glyphs, Palette, SliceAxis};
use tracon_core::phantom::PhantomKind;
use tracon_core::superres::superres_connectivity;
use tracon_core::{
    ConnectivityMatrix, DirectionField, EndpointMode, Error as CoreError, LabelVolume, RunParams,
    SourceRegion, TrackParams, Tractogram,
};

#[derive(Parser)]
#[command(
    name = "tracon",
    version,
    about = "Voxel-to-region connectivity mapping toolkit",
    propagate_version = true,
    args_override_self = true
)]
pub struct Cli {
    /// key=value file supplying defaults for any flag of the subcommand;
    /// explicit command-line flags win
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate streamlines from a direction field and write a TCK file
    Track(TrackArgs),
    /// Build a voxel-to-region connectivity matrix
    Connectivity(ConnectivityArgs),
    /// Assign each source voxel to its dominant target region
    Parcellate(ParcellateArgs),
    /// Score an existing tractogram against a finer source grid
    Superres(SuperresArgs),
    /// Render a slice of per-voxel connectivity fractions as SVG pie glyphs
    Pieglyph(PieglyphArgs),
    /// Time per-voxel seeding against region seeding on synthetic phantoms
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TrackAlgorithm {
    /// K accepted streamlines per source voxel
    PerVoxel,
    /// K* accepted streamlines seeded across the whole region
    Region,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ConnAlgorithm {
    /// Per-voxel seeding, endpoint credit to the seed row
    Traditional,
    /// Region seeding, passthrough credit to every crossed row
    Proposed,
    /// Score a pre-generated tractogram
    FromTck,
}

impl ConnAlgorithm {
    fn name(self) -> &'static str {
        match self {
            ConnAlgorithm::Traditional => "traditional",
            ConnAlgorithm::Proposed => "proposed",
            ConnAlgorithm::FromTck => "from-tck",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EndpointArg {
    /// Credit only the forward endpoint
    Last,
    /// Credit both endpoints
    Both,
}

impl From<EndpointArg> for EndpointMode {
    fn from(a: EndpointArg) -> Self {
        match a {
            EndpointArg::Last => EndpointMode::Last,
            EndpointArg::Both => EndpointMode::Both,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    X,
    Y,
    Z,
}

impl From<AxisArg> for SliceAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::X => SliceAxis::X,
            AxisArg::Y => SliceAxis::Y,
            AxisArg::Z => SliceAxis::Z,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PhantomArg {
    Bar,
    Slab,
}

impl From<PhantomArg> for PhantomKind {
    fn from(a: PhantomArg) -> Self {
        match a {
            PhantomArg::Bar => PhantomKind::Bar,
            PhantomArg::Slab => PhantomKind::Slab,
        }
    }
}

#[derive(Args)]
pub struct TrackArgs {
    /// Direction-field volume, 4D NIfTI with three vector components
    #[arg(long, value_name = "F.nii")]
    pub field: PathBuf,
    /// Source label volume, NIfTI
    #[arg(long, value_name = "S.nii")]
    pub source: PathBuf,
    /// Source region label
    #[arg(long)]
    pub label: u32,
    /// Seeding scheme
    #[arg(long, value_enum)]
    pub algorithm: TrackAlgorithm,
    /// Accepted streamlines per voxel (per-voxel seeding)
    #[arg(long, default_value_t = 200)]
    pub k: u64,
    /// Total accepted streamlines (region seeding)
    #[arg(long, default_value_t = 100_000)]
    pub kstar: u64,
    /// Step size in mm
    #[arg(long, default_value_t = 0.5)]
    pub step: f64,
    /// Angular noise standard deviation in degrees
    #[arg(long, default_value_t = 0.0)]
    pub noise_deg: f64,
    /// Maximum steps per direction
    #[arg(long, default_value_t = 1000)]
    pub max_steps: u32,
    /// Minimum accepted streamline length in mm
    #[arg(long, default_value_t = 0.0)]
    pub min_length: f64,
    /// RNG seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker count; 0 means available parallelism
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Output tractogram, TCK
    #[arg(long, value_name = "T.tck")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ConnectivityArgs {
    /// Matrix construction scheme
    #[arg(long, value_enum)]
    pub algorithm: ConnAlgorithm,
    /// Source label volume, NIfTI
    #[arg(long, value_name = "S.nii")]
    pub source: PathBuf,
    /// Source region label
    #[arg(long)]
    pub label: u32,
    /// Target label volume, NIfTI
    #[arg(long, value_name = "A.nii")]
    pub targets: PathBuf,
    /// Direction field; required for traditional and proposed
    #[arg(long, value_name = "F.nii")]
    pub field: Option<PathBuf>,
    /// Input tractogram; required for from-tck
    #[arg(long, value_name = "T.tck")]
    pub tck: Option<PathBuf>,
    /// Accepted streamlines per voxel (traditional)
    #[arg(long, default_value_t = 200)]
    pub k: u64,
    /// Total accepted streamlines (proposed)
    #[arg(long, default_value_t = 100_000)]
    pub kstar: u64,
    /// Step size in mm
    #[arg(long, default_value_t = 0.5)]
    pub step: f64,
    /// Angular noise standard deviation in degrees
    #[arg(long, default_value_t = 0.0)]
    pub noise_deg: f64,
    /// Maximum steps per direction
    #[arg(long, default_value_t = 1000)]
    pub max_steps: u32,
    /// Minimum accepted streamline length in mm
    #[arg(long, default_value_t = 0.0)]
    pub min_length: f64,
    /// Endpoint crediting
    #[arg(long, value_enum, default_value = "both")]
    pub endpoint_mode: EndpointArg,
    /// RNG seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker count; 0 means available parallelism
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Output matrix; .csv writes a .rows sidecar, .bin is self-contained
    #[arg(long, value_name = "C.csv")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ParcellateArgs {
    /// Connectivity matrix, .csv or .bin
    #[arg(long, value_name = "C.csv")]
    pub matrix: PathBuf,
    /// Source label volume the matrix rows refer to, NIfTI
    #[arg(long, value_name = "S.nii")]
    pub source: PathBuf,
    /// Source region label
    #[arg(long)]
    pub label: u32,
    /// Output parcellation volume, NIfTI
    #[arg(long, value_name = "P.nii")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SuperresArgs {
    /// Input tractogram, TCK
    #[arg(long, value_name = "T.tck")]
    pub tck: PathBuf,
    /// Fine-grid source label volume, NIfTI
    #[arg(long, value_name = "S.nii")]
    pub hi_source: PathBuf,
    /// Source region label
    #[arg(long)]
    pub label: u32,
    /// Target label volume, NIfTI
    #[arg(long, value_name = "A.nii")]
    pub targets: PathBuf,
    /// Endpoint crediting
    #[arg(long, value_enum, default_value = "both")]
    pub endpoint_mode: EndpointArg,
    /// Output matrix; .csv writes a .rows sidecar, .bin is self-contained
    #[arg(long, value_name = "C.csv")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct PieglyphArgs {
    /// Connectivity matrix, .csv or .bin
    #[arg(long, value_name = "C.csv")]
    pub matrix: PathBuf,
    /// Source label volume the matrix rows refer to, NIfTI
    #[arg(long, value_name = "S.nii")]
    pub source: PathBuf,
    /// Source region label
    #[arg(long)]
    pub label: u32,
    /// Slice axis
    #[arg(long, value_enum, default_value = "z")]
    pub axis: AxisArg,
    /// Slice index along the axis
    #[arg(long)]
    pub slice: usize,
    /// Hide sectors below this fraction of the row total
    #[arg(long, default_value_t = 0.02)]
    pub min_fraction: f64,
    /// Optional TSV of LABEL<TAB>NAME lines for the legend
    #[arg(long, value_name = "names.tsv")]
    pub names: Option<PathBuf>,
    /// Output image, SVG
    #[arg(long, value_name = "G.svg")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct BenchArgs {
    /// Phantom geometry
    #[arg(long, value_enum, default_value = "bar")]
    pub phantom: PhantomArg,
    /// Source-grid resolutions in mm, comma separated, coarse to fine
    #[arg(long, value_name = "LIST", value_delimiter = ',', default_value = "2,1,0.5")]
    pub resolutions: Vec<f64>,
    /// Accepted streamlines per voxel (per-voxel seeding)
    #[arg(long, default_value_t = 200)]
    pub k: u64,
    /// Total accepted streamlines (region seeding)
    #[arg(long, default_value_t = 100_000)]
    pub kstar: u64,
    /// Timed repeats per configuration
    #[arg(long, default_value_t = 3)]
    pub repeat: u32,
    /// RNG seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker count; 0 means available parallelism
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Report CSV; omitted means stdout
    #[arg(long, value_name = "report.csv")]
    pub out: Option<PathBuf>,
}

/// Parses `std::env::args()` and runs one subcommand, returning the process
/// exit code.
pub fn run() -> i32 {
    run_from(std::env::args().collect())
}

/// [`run`] over an explicit argument vector, `argv[0]` being the program
/// name.
pub fn run_from(argv: Vec<String>) -> i32 {
    let expanded = match expand_config(argv) {
        Ok(tokens) => tokens,
        Err(message) => {
            eprintln!("error: {message}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(&expanded) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            2
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

enum CliError {
    /// Argument-level problem; exit 2.
    Usage(String),
    /// Failure while doing the work; exit 1.
    Runtime(anyhow::Error),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            // These can only arise from flag values here.
            CoreError::NonPositiveParam { .. }
            | CoreError::BadRunParams { .. }
            | CoreError::SliceOutOfRange { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(anyhow::Error::new(e)),
        }
    }
}

impl From<RunnerError> for CliError {
    fn from(e: RunnerError) -> Self {
        match e {
            RunnerError::Core(core) => CliError::from(core),
            other => CliError::Runtime(anyhow::Error::new(other)),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::BadResolutions(_) | BenchError::NoRepeats => {
                CliError::Usage(e.to_string())
            }
            BenchError::Runner(r) => CliError::from(r),
            BenchError::Core(c) => CliError::from(c),
        }
    }
}

fn runtime(
    e: impl std::error::Error + Send + Sync + 'static,
    path: &Path,
    action: &str,
) -> CliError {
    CliError::Runtime(anyhow::Error::new(e).context(format!("{action} {}", path.display())))
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "missing input file: {}",
            path.display()
        )))
    }
}

fn load_labels(path: &Path) -> Result<LabelVolume, CliError> {
    require_file(path)?;
    nifti::read_labels(path).map_err(|e| runtime(e, path, "reading"))
}

fn load_field(path: &Path) -> Result<DirectionField, CliError> {
    require_file(path)?;
    nifti::read_direction_field(path).map_err(|e| runtime(e, path, "reading"))
}

fn load_tractogram(path: &Path) -> Result<Tractogram, CliError> {
    require_file(path)?;
    tck::read_tck(path).map_err(|e| runtime(e, path, "reading"))
}

fn load_matrix(path: &Path) -> Result<ConnectivityMatrix, CliError> {
    require_file(path)?;
    matio::read_matrix(path).map_err(|e| match e {
        MatrixIoError::MissingSidecar { .. } => CliError::Usage(e.to_string()),
        other => runtime(other, path, "reading"),
    })
}

fn save_matrix(path: &Path, matrix: &ConnectivityMatrix) -> Result<(), CliError> {
    matio::write_matrix(path, matrix).map_err(|e| match e {
        MatrixIoError::BadExtension { .. } => CliError::Usage(e.to_string()),
        other => runtime(other, path, "writing"),
    })
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Track(a) => run_track(a),
        Command::Connectivity(a) => run_connectivity(a),
        Command::Parcellate(a) => run_parcellate(a),
        Command::Superres(a) => run_superres(a),
        Command::Pieglyph(a) => run_pieglyph(a),
        Command::Bench(a) => run_bench(a),
    }
}

fn run_track(a: TrackArgs) -> Result<(), CliError> {
    let field = load_field(&a.field)?;
    let source = load_labels(&a.source)?;
    let region = SourceRegion::new(&source, a.label)?;
    let params = TrackParams {
        step_size: a.step,
        max_steps: a.max_steps,
        angular_noise_deg: a.noise_deg,
        min_length_mm: a.min_length,
        rng_seed: a.seed,
    };
    let (tractogram, stats) = match a.algorithm {
        TrackAlgorithm::PerVoxel => {
            generate_voxel_tracks_par(&region, &field, &params, a.k, a.threads)?
        }
        TrackAlgorithm::Region => {
            generate_region_tracks_par(&region, &field, &params, a.kstar, a.threads)?
        }
    };
    tck::write_tck(&a.out, &tractogram).map_err(|e| runtime(e, &a.out, "writing"))?;
    println!(
        "wrote {} streamlines to {} ({} attempts)",
        tractogram.len(),
        a.out.display(),
        stats.attempts
    );
    Ok(())
}

fn run_connectivity(a: ConnectivityArgs) -> Result<(), CliError> {
    let source = load_labels(&a.source)?;
    let targets = load_labels(&a.targets)?;
    let mode = EndpointMode::from(a.endpoint_mode);
    let matrix = match a.algorithm {
        ConnAlgorithm::FromTck => {
            if a.field.is_some() {
                return Err(CliError::Usage(
                    "--field is not used with --algorithm from-tck".into(),
                ));
            }
            let Some(tck_path) = a.tck.as_deref() else {
                return Err(CliError::Usage(
                    "--algorithm from-tck requires --tck".into(),
                ));
            };
            let tractogram = load_tractogram(tck_path)?;
            connectivity_from_tractogram_par(
                &tractogram,
                &source,
                a.label,
                &targets,
                mode,
                a.threads,
            )?
        }
        tracked => {
            if a.tck.is_some() {
                return Err(CliError::Usage(
                    "--tck is only used with --algorithm from-tck".into(),
                ));
            }
            let Some(field_path) = a.field.as_deref() else {
                return Err(CliError::Usage(format!(
                    "--algorithm {} requires --field",
                    tracked.name()
                )));
            };
            let field = load_field(field_path)?;
            let tp = TrackParams {
                step_size: a.step,
                max_steps: a.max_steps,
                angular_noise_deg: a.noise_deg,
                min_length_mm: a.min_length,
                rng_seed: a.seed,
            };
            let rp = RunParams {
                k: a.k,
                k_star: a.kstar,
                endpoint_mode: mode,
            };
            match tracked {
                ConnAlgorithm::Traditional => traditional_connectivity_par(
                    &source, a.label, &targets, &field, &tp, &rp, a.threads,
                )?,
                _ => proposed_connectivity_par(
                    &source, a.label, &targets, &field, &tp, &rp, a.threads,
                )?,
            }
        }
    };
    save_matrix(&a.out, &matrix)?;
    println!(
        "wrote {}x{} connectivity matrix to {}",
        matrix.n_rows(),
        matrix.n_cols(),
        a.out.display()
    );
    Ok(())
}

fn run_parcellate(a: ParcellateArgs) -> Result<(), CliError> {
    let matrix = load_matrix(&a.matrix)?;
    let source = load_labels(&a.source)?;
    let volume = parcellate(&matrix, &source, a.label)?;
    nifti::write_labels(&a.out, &volume).map_err(|e| runtime(e, &a.out, "writing"))?;
    println!("wrote parcellation to {}", a.out.display());
    Ok(())
}

fn run_superres(a: SuperresArgs) -> Result<(), CliError> {
    let tractogram = load_tractogram(&a.tck)?;
    let hi_source = load_labels(&a.hi_source)?;
    let targets = load_labels(&a.targets)?;
    let matrix = superres_connectivity(
        &tractogram,
        &hi_source,
        a.label,
        &targets,
        EndpointMode::from(a.endpoint_mode),
    )?;
    save_matrix(&a.out, &matrix)?;
    println!(
        "wrote {}x{} connectivity matrix to {}",
        matrix.n_rows(),
        matrix.n_cols(),
        a.out.display()
    );
    Ok(())
}

fn run_pieglyph(a: PieglyphArgs) -> Result<(), CliError> {
    let matrix = load_matrix(&a.matrix)?;
    let source = load_labels(&a.source)?;
    let names = match &a.names {
        Some(path) => Some(load_names(path)?),
        None => None,
    };
    let palette = Palette::default_for(matrix.col_labels());
    let svg = render_pie_glyphs(
        &matrix,
        &source,
        a.label,
        SliceAxis::from(a.axis),
        a.slice,
        &palette,
        a.min_fraction,
        names.as_ref(),
    )?;
    std::fs::write(&a.out, svg).map_err(|e| runtime(e, &a.out, "writing"))?;
    println!("wrote pie glyphs to {}", a.out.display());
    Ok(())
}

fn run_bench(a: BenchArgs) -> Result<(), CliError> {
    let config = BenchConfig {
        kind: PhantomKind::from(a.phantom),
        resolutions_mm: a.resolutions.clone(),
        k: a.k,
        k_star: a.kstar,
        repeats: a.repeat,
        threads: a.threads,
        seed: a.seed,
    };
    let records = bench::run_bench(&config)?;
    let mut encoded = Vec::new();
    bench::write_csv(&records, &mut encoded)
        .map_err(|e| CliError::Runtime(anyhow::Error::new(e)))?;
    match &a.out {
        Some(path) => {
            std::fs::write(path, encoded).map_err(|e| runtime(e, path, "writing"))?;
            println!(
                "wrote {} benchmark records to {}",
                records.len(),
                path.display()
            );
        }
        None => {
            use std::io::Write as _;
            std::io::stdout()
                .write_all(&encoded)
                .map_err(|e| CliError::Runtime(anyhow::Error::new(e)))?;
        }
    }
    Ok(())
}

fn load_names(path: &Path) -> Result<BTreeMap<u32, String>, CliError> {
    require_file(path)?;
    let text = std::fs::read_to_string(path).map_err(|e| runtime(e, path, "reading"))?;
    let mut names = BTreeMap::new();
    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed = line
            .split_once('\t')
            .and_then(|(label, name)| label.trim().parse::<u32>().ok().map(|l| (l, name.trim())));
        let Some((label, name)) = parsed else {
            return Err(CliError::Runtime(anyhow::anyhow!(
                "{} line {}: expected LABEL<TAB>NAME",
                path.display(),
                line_no + 1
            )));
        };
        names.insert(label, name.to_string());
    }
    Ok(names)
}

/// Strips `--config` from `argv`, reads the file, and splices its `key=value`
/// pairs as `--key=value` tokens directly after the subcommand.
fn expand_config(argv: Vec<String>) -> Result<Vec<String>, String> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut config: Option<PathBuf> = None;
    let mut it = argv.into_iter();
    if let Some(program) = it.next() {
        rest.push(program);
    }
    while let Some(token) = it.next() {
        if token == "--config" {
            match it.next() {
                Some(path) => config = Some(PathBuf::from(path)),
                None => return Err("a value is required for '--config <FILE>'".into()),
            }
        } else if let Some(path) = token.strip_prefix("--config=") {
            config = Some(PathBuf::from(path));
        } else {
            rest.push(token);
        }
    }
    let Some(config) = config else {
        return Ok(rest);
    };
    let text = std::fs::read_to_string(&config)
        .map_err(|e| format!("missing config file {}: {e}", config.display()))?;
    let tokens = config_tokens(&text).map_err(|m| format!("{}: {m}", config.display()))?;
    let insert_at = rest
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, token)| !token.starts_with('-'))
        .map(|(i, _)| i + 1)
        .unwrap_or(rest.len());
    for (offset, token) in tokens.into_iter().enumerate() {
        rest.insert(insert_at + offset, token);
    }
    Ok(rest)
}

fn config_tokens(text: &str) -> Result<Vec<String>, String> {
    let mut tokens = Vec::new();
    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!(
                "line {}: expected key=value, got {:?}",
                line_no + 1,
                raw
            ));
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(format!("line {}: empty key", line_no + 1));
        }
        if key == "config" {
            return Err(format!("line {}: config files cannot set 'config'", line_no + 1));
        }
        tokens.push(format!("--{key}={}", value.trim()));
    }
    Ok(tokens)
}
