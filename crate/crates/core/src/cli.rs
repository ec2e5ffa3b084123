//! Command-line driver.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::align::{align, apply_alignment, AlignmentConfig};
use crate::error::{AlignError, Result};
use crate::evaluation::{
    error_report, pair_by_timestamp, run_simulation, scaling_benchmark, ErrorReport,
    SimulationSpec, DEFAULT_SLOPE_MIN_N, DEFAULT_THRESHOLDS_DEG,
};
use crate::io::{
    emit_report, ingest_pose_csv, write_pose_csv, write_report, AlignmentSummary, ColumnLayout,
    IngestOptions, Report, ReportFormat, RunConfig,
};
use crate::signed_perm::{enumerate_signed_permutations, SignedPermutation};
use crate::synthesis::{
    corrupt, derive_seed, generate_scenario, plant_global, random_rotations, CorruptionLevel,
    CorruptionSpec, ScenarioSpec,
};

const MAPPING_HELP: &str = "Axis mappings are written as three comma-separated terms \
`A<axis>-><sign>B<axis>`, e.g. \"Ax->-By, Ay->+Bx, Az->+Bz\". Whitespace and case are ignored, \
the sign is required, and each B axis must be used once.";

#[derive(Debug, Parser)]
#[command(name = "so3-align", version, about = "Correspondence-free alignment of rotation sets", after_help = MAPPING_HELP)]
pub struct Cli {
    /// Flat TOML file with default values for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a scenario, plant a transform, corrupt, align and report.
    Simulate(SimulateArgs),
    /// Align two pose CSVs (PASI on by default).
    Align(AlignArgs),
    /// Runtime scaling benchmark.
    Bench(BenchArgs),
    /// Print the signed permutation matrices.
    EnumerateL(EnumerateArgs),
    /// Check that a pose CSV parses.
    Validate(ValidateArgs),
    /// Write a generated (optionally planted and corrupted) rotation set as a pose CSV.
    Export(ExportArgs),
}

#[derive(Debug, Args, Default)]
pub struct MatcherArgs {
    /// spmc, frs or spmc_frs.
    #[arg(long)]
    pub matcher: Option<String>,
    /// mean_frame_procrustes, projected_mean or karcher.
    #[arg(long)]
    pub fusion: Option<String>,
    /// Azimuth histogram bins.
    #[arg(long)]
    pub bins: Option<usize>,
    /// One Procrustes refinement pass after fusion.
    #[arg(long)]
    pub refine: bool,
    /// Search all 48 signed permutations instead of the 24 proper ones.
    #[arg(long)]
    pub all_signs: bool,
    /// Run PASI matches on the thread pool.
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Args, Default)]
pub struct OutputArgs {
    /// Write the report here instead of stdout.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// json or csv.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario 1, 2 or 3.
    #[arg(long)]
    pub scenario: Option<u8>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Corruption level B1..B7.
    #[arg(long)]
    pub level: Option<String>,
    /// Custom rotational noise std, radians (overrides --level).
    #[arg(long)]
    pub noise_std: Option<f64>,
    /// Custom outlier fraction (overrides --level).
    #[arg(long)]
    pub outlier_fraction: Option<f64>,
    /// Plant this axis mapping (implies --pasi).
    #[arg(long)]
    pub mapping: Option<String>,
    /// Estimate the axis mapping.
    #[arg(long)]
    pub pasi: bool,
    /// Include wall-clock runtime in the report.
    #[arg(long)]
    pub timing: bool,
    #[command(flatten)]
    pub matcher: MatcherArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// Target poses (A).
    pub a: PathBuf,
    /// Source poses (B).
    pub b: PathBuf,
    /// PASI is the default; accepted for explicitness.
    #[arg(long, conflicts_with = "no_pasi")]
    pub pasi: bool,
    /// Assume both sets share axis conventions.
    #[arg(long)]
    pub no_pasi: bool,
    /// Column order, e.g. t,x,y,z,qw,qx,qy,qz.
    #[arg(long)]
    pub cols: Option<String>,
    /// Column order for B if it differs from --cols.
    #[arg(long)]
    pub cols_b: Option<String>,
    /// hamilton or jpl.
    #[arg(long)]
    pub quat: Option<String>,
    /// Evaluate against A by nearest timestamps (evaluation only).
    #[arg(long)]
    pub eval: bool,
    /// Largest timestamp gap accepted when pairing, seconds.
    #[arg(long)]
    pub max_gap: Option<f64>,
    /// Write per-pair errors as CSV (needs --eval).
    #[arg(long, requires = "eval")]
    pub errors_csv: Option<PathBuf>,
    #[command(flatten)]
    pub matcher: MatcherArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated set sizes.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub scenario: Option<u8>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Smallest size included in the slope fit.
    #[arg(long)]
    pub slope_min_n: Option<usize>,
    #[arg(long)]
    pub pasi: bool,
    #[command(flatten)]
    pub matcher: MatcherArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct EnumerateArgs {
    /// Only the 24 with determinant +1.
    #[arg(long)]
    pub proper: bool,
    /// Print JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub file: PathBuf,
    #[arg(long)]
    pub cols: Option<String>,
    #[arg(long)]
    pub quat: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub scenario: Option<u8>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Export `L^T a R_gt` instead of the targets.
    #[arg(long)]
    pub plant: bool,
    /// Mapping for --plant (identity by default).
    #[arg(long, requires = "plant")]
    pub mapping: Option<String>,
    #[arg(long)]
    pub level: Option<String>,
    /// Write the planted R_gt and L as JSON.
    #[arg(long, requires = "plant")]
    pub truth: Option<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code: 0 on success, 1 on a pipeline error
/// (reported as JSON on stderr), 2 on a usage error.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .try_init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) if e.is_broken_pipe() => 0,
        Err(e) => {
            let body =
                serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{body}");
            1
        }
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("SO3_ALIGN_THREADS") {
        let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            AlignError::InvalidConfig(format!("SO3_ALIGN_THREADS={v:?} is not a positive integer"))
        })?;
        // Fails only if a pool already exists, e.g. on repeated in-process runs.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let mut rc = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Simulate(a) => simulate(a, &mut rc),
        Command::Align(a) => align_cmd(a, &mut rc),
        Command::Bench(a) => bench(a, &mut rc),
        Command::EnumerateL(a) => enumerate(a),
        Command::Validate(a) => validate(a, &mut rc),
        Command::Export(a) => export(a, &mut rc),
    }
}

fn overlay<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

fn overlay_flag(slot: &mut Option<bool>, flag: bool) {
    if flag {
        *slot = Some(true);
    }
}

fn apply_matcher_args(rc: &mut RunConfig, m: MatcherArgs) {
    overlay(&mut rc.matcher, m.matcher);
    overlay(&mut rc.fusion, m.fusion);
    overlay(&mut rc.bins, m.bins);
    overlay_flag(&mut rc.procrustes_refine, m.refine);
    if m.all_signs {
        rc.proper_only = Some(false);
    }
    overlay_flag(&mut rc.parallel, m.parallel);
}

fn apply_output_args(rc: &mut RunConfig, o: OutputArgs) {
    overlay(&mut rc.output, o.out);
    overlay(&mut rc.format, o.format);
}

fn format_of(rc: &RunConfig) -> Result<ReportFormat> {
    rc.format
        .as_deref()
        .map(str::parse)
        .transpose()
        .map(Option::unwrap_or_default)
}

fn scenario_of(rc: &RunConfig, default_n: usize) -> Result<ScenarioSpec> {
    ScenarioSpec::scenario(
        rc.scenario.unwrap_or(1),
        rc.n.unwrap_or(default_n),
        rc.seed.unwrap_or(0),
    )
}

fn corruption_of(rc: &RunConfig) -> Result<Option<CorruptionSpec>> {
    let mut spec = match rc.level.as_deref() {
        Some(l) => Some(CorruptionSpec::level(l.parse::<CorruptionLevel>()?, 0)),
        None => None,
    };
    if rc.noise_std.is_some() || rc.outlier_fraction.is_some() {
        let base = spec.unwrap_or(CorruptionSpec {
            level: None,
            noise_std: 0.0,
            outlier_fraction: 0.0,
            seed: 0,
        });
        spec = Some(CorruptionSpec::custom(
            rc.noise_std.unwrap_or(base.noise_std),
            rc.outlier_fraction.unwrap_or(base.outlier_fraction),
            0,
        )?);
    }
    Ok(spec)
}

fn mapping_of(rc: &RunConfig) -> Result<SignedPermutation> {
    rc.mapping.as_deref().map_or(
        Ok(SignedPermutation::IDENTITY),
        SignedPermutation::from_mapping,
    )
}

fn ingest_opts(cols: Option<&str>, quat: Option<&str>) -> Result<IngestOptions> {
    Ok(IngestOptions {
        layout: cols.map(ColumnLayout::parse).transpose()?,
        convention: quat.map(str::parse).transpose()?.unwrap_or_default(),
    })
}

/// Writes `value` as JSON to the configured output or stdout.
fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
            serde_json::to_writer_pretty(&mut f, value)?;
            writeln!(f)?;
            f.flush()?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut stdout, value)?;
            writeln!(stdout)?;
        }
    }
    Ok(())
}

fn emit(report: Report<'_>, out: Option<&Path>, format: ReportFormat) -> Result<()> {
    match out {
        Some(path) => emit_report(report, path, format),
        None => write_report(report, std::io::stdout().lock(), format),
    }
}

fn thresholds(rc: &RunConfig) -> Vec<f64> {
    rc.thresholds
        .clone()
        .unwrap_or_else(|| DEFAULT_THRESHOLDS_DEG.to_vec())
}

fn simulate(a: SimulateArgs, rc: &mut RunConfig) -> Result<()> {
    overlay(&mut rc.scenario, a.scenario);
    overlay(&mut rc.n, a.n);
    overlay(&mut rc.trials, a.trials);
    overlay(&mut rc.seed, a.seed);
    overlay(&mut rc.level, a.level);
    overlay(&mut rc.noise_std, a.noise_std);
    overlay(&mut rc.outlier_fraction, a.outlier_fraction);
    overlay(&mut rc.mapping, a.mapping);
    overlay_flag(&mut rc.pasi, a.pasi);
    apply_matcher_args(rc, a.matcher);
    apply_output_args(rc, a.output);
    if rc.mapping.is_some() {
        rc.pasi = Some(true);
    }
    let spec = SimulationSpec {
        scenario: scenario_of(rc, 2000)?,
        trials: rc.trials.unwrap_or(1),
        corruption: corruption_of(rc)?,
        mapping: mapping_of(rc)?,
        align: rc.alignment()?,
        thresholds: thresholds(rc),
        seed: rc.seed.unwrap_or(0),
        timing: a.timing,
    };
    let report = run_simulation(&spec)?;
    match format_of(rc)? {
        ReportFormat::Json => emit_json(&report, rc.output.as_deref()),
        ReportFormat::Csv => emit(
            Report::Error(&report.errors),
            rc.output.as_deref(),
            ReportFormat::Csv,
        ),
    }
}

/// `align` output: the alignment summary plus optional evaluation.
#[derive(Debug, Serialize)]
struct AlignReport {
    n_a: usize,
    n_b: usize,
    #[serde(flatten)]
    alignment: AlignmentSummary,
    evaluation: Option<ErrorReport>,
}

fn align_cmd(a: AlignArgs, rc: &mut RunConfig) -> Result<()> {
    apply_matcher_args(rc, a.matcher);
    apply_output_args(rc, a.output);
    overlay(&mut rc.cols, a.cols);
    overlay(&mut rc.quat, a.quat);
    overlay(&mut rc.max_gap, a.max_gap);
    if a.no_pasi {
        rc.pasi = Some(false);
    } else if a.pasi || rc.pasi.is_none() {
        rc.pasi = Some(true);
    }
    let opts_a = ingest_opts(rc.cols.as_deref(), rc.quat.as_deref())?;
    let opts_b = match &a.cols_b {
        Some(c) => ingest_opts(Some(c), rc.quat.as_deref())?,
        None => opts_a.clone(),
    };
    let targets = ingest_pose_csv(&a.a, &opts_a)?;
    let sources = ingest_pose_csv(&a.b, &opts_b)?;
    let cfg: AlignmentConfig = rc.alignment()?;
    let ga = align(&targets, &sources, &cfg)?;
    let evaluation = if a.eval {
        let pairs = pair_by_timestamp(&targets, &sources, rc.max_gap.unwrap_or(0.01))?;
        let aligned = apply_alignment(&sources, &ga);
        let report = error_report(&targets, &aligned, &pairs, &thresholds(rc))?;
        if let Some(path) = &a.errors_csv {
            emit_report(Report::Error(&report), path, ReportFormat::Csv)?;
        }
        Some(report)
    } else {
        None
    };
    let report = AlignReport {
        n_a: targets.len(),
        n_b: sources.len(),
        alignment: AlignmentSummary::new(&ga, &cfg),
        evaluation,
    };
    match format_of(rc)? {
        ReportFormat::Json => emit_json(&report, rc.output.as_deref()),
        ReportFormat::Csv => emit(
            Report::Alignment(&report.alignment),
            rc.output.as_deref(),
            ReportFormat::Csv,
        ),
    }
}

fn bench(a: BenchArgs, rc: &mut RunConfig) -> Result<()> {
    overlay(&mut rc.sizes, a.sizes);
    overlay(&mut rc.repeats, a.repeats);
    overlay(&mut rc.scenario, a.scenario);
    overlay(&mut rc.seed, a.seed);
    overlay_flag(&mut rc.pasi, a.pasi);
    apply_matcher_args(rc, a.matcher);
    apply_output_args(rc, a.output);
    let sizes = rc
        .sizes
        .clone()
        .unwrap_or_else(|| vec![10_000, 100_000, 1_000_000]);
    let report = scaling_benchmark(
        &sizes,
        &scenario_of(rc, sizes[0])?,
        &rc.alignment()?,
        rc.repeats.unwrap_or(3),
        a.slope_min_n.unwrap_or(DEFAULT_SLOPE_MIN_N),
    )?;
    emit(
        Report::Scaling(&report),
        rc.output.as_deref(),
        format_of(rc)?,
    )
}

#[derive(Serialize)]
struct EnumeratedL {
    index: usize,
    mapping: String,
    l: [[i8; 3]; 3],
    det: i8,
}

fn enumerate(a: EnumerateArgs) -> Result<()> {
    let all = enumerate_signed_permutations(a.proper);
    let mut out = std::io::stdout().lock();
    if a.json {
        let rows: Vec<EnumeratedL> = all
            .iter()
            .enumerate()
            .map(|(index, l)| EnumeratedL {
                index,
                mapping: l.to_mapping(),
                l: l.l(),
                det: l.det(),
            })
            .collect();
        serde_json::to_writer_pretty(&mut out, &rows)?;
        writeln!(out)?;
    } else {
        for (k, l) in all.iter().enumerate() {
            let m = l.l();
            writeln!(out, "{k:2}  {}  det {:+}", l.to_mapping(), l.det())?;
            for row in m {
                writeln!(out, "    [{:2} {:2} {:2}]", row[0], row[1], row[2])?;
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ValidateReport {
    file: PathBuf,
    rows: usize,
    t_first: Option<f64>,
    t_last: Option<f64>,
}

fn validate(a: ValidateArgs, rc: &mut RunConfig) -> Result<()> {
    overlay(&mut rc.cols, a.cols);
    overlay(&mut rc.quat, a.quat);
    let set = ingest_pose_csv(
        &a.file,
        &ingest_opts(rc.cols.as_deref(), rc.quat.as_deref())?,
    )?;
    let ts = set.timestamps();
    emit_json(
        &ValidateReport {
            file: a.file,
            rows: set.len(),
            t_first: ts.and_then(|t| t.first().copied()),
            t_last: ts.and_then(|t| t.last().copied()),
        },
        None,
    )
}

#[derive(Serialize)]
struct Truth {
    r_gt: [[f64; 3]; 3],
    l: [[i8; 3]; 3],
    mapping: String,
}

fn export(a: ExportArgs, rc: &mut RunConfig) -> Result<()> {
    overlay(&mut rc.scenario, a.scenario);
    overlay(&mut rc.n, a.n);
    overlay(&mut rc.seed, a.seed);
    overlay(&mut rc.level, a.level);
    overlay(&mut rc.mapping, a.mapping);
    let seed = rc.seed.unwrap_or(0);
    let spec = scenario_of(rc, 2000)?.with_seed(derive_seed(seed, "targets"));
    let targets = generate_scenario(&spec)?;
    // Evenly spaced timestamps so exported pairs can be re-associated.
    let stamps: Vec<f64> = (0..targets.len()).map(|k| k as f64 * 0.01).collect();
    let mut set = crate::rotation::RotationSet::with_timestamps(targets.into_items(), stamps)?;
    if a.plant {
        let l = mapping_of(rc)?;
        let r_gt = random_rotations(1, derive_seed(seed, "r_gt"))[0];
        set = plant_global(&set, &r_gt, &l, None).set;
        if let Some(path) = &a.truth {
            let truth = Truth {
                r_gt: std::array::from_fn(|i| std::array::from_fn(|j| r_gt.matrix()[(i, j)])),
                l: l.l(),
                mapping: l.to_mapping(),
            };
            emit_json(&truth, Some(path))?;
        }
    }
    if let Some(c) = corruption_of(rc)? {
        set = corrupt(
            &set,
            &CorruptionSpec {
                seed: derive_seed(seed, "corrupt"),
                ..c
            },
        )?;
    }
    write_pose_csv(&set, &a.out)
}
