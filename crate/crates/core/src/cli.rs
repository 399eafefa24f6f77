//! Command-line surface. Every subcommand writes its artifacts plus a
//! `manifest.json` (tool version, resolved config, SHA-256 of inputs and
//! outputs) into `--out`.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::consensus::{staple_multiclass, RaterSet, DEFAULT_MAX_ITER, DEFAULT_TOLERANCE};
use crate::error::{Error, Result};
use crate::geometry::DEFAULT_SMOOTHING_WINDOW;
use crate::levels::{analyze_levels, level_lengths, read_levels_csv, write_levels_csv, LevelConfig, LevelExtent};
use crate::metrics::{cov, dice_multiclass, mae_levels, MetricsReport, SdConvention};
use crate::phantom::{generate_phantom, resample_study, PhantomSpec};
use crate::preprocess::{ElementShape, StructuringElement};
use crate::volume::{read_label_map, write_label_map, write_nifti, LabelMap, PmjPoint, ROOTLET_CLASSES};

pub const THREADS_ENV: &str = "ROOTLET_LEVELS_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "rootlet-levels",
    version,
    about = "Spinal levels from nerve-rootlet segmentations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Spinal level map, level extents and centerline from rootlet and cord masks.
    Levels(LevelsArgs),
    /// STAPLE consensus over two or more rater label maps.
    Staple(StapleArgs),
    /// Dice, COV and MAE reports.
    Metrics(MetricsArgs),
    /// Rerun the level pipeline at several isotropic resolutions.
    ResampleStudy(StudyArgs),
    /// Write a synthetic phantom with its truth manifest.
    Phantom(PhantomArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DilateUnit {
    Vox,
    Mm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Ball,
    Cube,
    Cross,
}

impl From<Shape> for ElementShape {
    fn from(s: Shape) -> Self {
        match s {
            Shape::Ball => ElementShape::Ball,
            Shape::Cube => ElementShape::Cube,
            Shape::Cross => ElementShape::Cross,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Both,
}

impl Format {
    fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovArg {
    Sample,
    Population,
}

impl From<CovArg> for SdConvention {
    fn from(c: CovArg) -> Self {
        match c {
            CovArg::Sample => SdConvention::Sample,
            CovArg::Population => SdConvention::Population,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PipelineArgs {
    /// Multi-class rootlet label map (classes 2–8).
    #[arg(long)]
    pub rootlets: PathBuf,
    /// Binary spinal cord mask.
    #[arg(long)]
    pub cord: PathBuf,
    /// PMJ as a single-voxel NIfTI label or a JSON file `{"point_mm": [x, y, z]}`.
    #[arg(long)]
    pub pmj: PathBuf,
    #[arg(long, default_value_t = 3.0)]
    pub dilate_radius: f64,
    #[arg(long, value_enum, default_value_t = DilateUnit::Vox)]
    pub dilate_unit: DilateUnit,
    #[arg(long, value_enum, default_value_t = Shape::Ball)]
    pub dilate_shape: Shape,
    #[arg(long, default_value_t = DEFAULT_SMOOTHING_WINDOW)]
    pub smooth_window: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutputArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    pub format: Format,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LevelsArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Subject identifier written to the CSV.
    #[arg(long, default_value = "sub-01")]
    pub subject: String,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StapleArgs {
    /// Rater label map; repeat for each rater.
    #[arg(long = "rater", required = true)]
    pub raters: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MetricsArgs {
    /// Predicted multi-class label map for Dice.
    #[arg(long, requires = "truth")]
    pub pred: Option<PathBuf>,
    /// Reference multi-class label map for Dice.
    #[arg(long, requires = "pred")]
    pub truth: Option<PathBuf>,
    /// Level CSV of one session; repeat to compute per-level COV of the mid PMJ distance.
    #[arg(long = "cov-input")]
    pub cov_inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = CovArg::Sample)]
    pub cov: CovArg,
    /// Reference level CSV for MAE.
    #[arg(long, requires = "mae_test")]
    pub mae_reference: Option<PathBuf>,
    /// Level CSV compared against the reference, as `NAME=PATH`; repeatable.
    #[arg(long = "mae-test", requires = "mae_reference")]
    pub mae_test: Vec<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StudyArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Optional intensity image, resampled linearly alongside the masks.
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.6,0.8,1.0,1.2,1.4,1.6")]
    pub spacings: Vec<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PhantomArgs {
    /// JSON phantom spec; defaults to a straight C2–C8 phantom.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the spec's noise sd.
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Result of a subcommand that did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Handled but degenerate input; artifacts carry a flag.
    Degenerate,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::Degenerate => 2,
        }
    }
}

/// Sizes the global rayon pool from `ROOTLET_LEVELS_THREADS` when set.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Argument(format!("{THREADS_ENV}={raw:?} is not a positive integer")))?;
    // a second initialisation in the same process is harmless
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `args` and runs the subcommand, returning the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match configure_threads().and_then(|_| run(&cli)) {
        Ok(outcome) => outcome.exit_code(),
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Levels(a) => cmd_levels(a),
        Command::Staple(a) => cmd_staple(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::ResampleStudy(a) => cmd_resample_study(a),
        Command::Phantom(a) => cmd_phantom(a),
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a C,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

/// Tracks files written into the output directory.
struct OutDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.dir.join(name)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    fn writer(&mut self, name: &str) -> Result<BufWriter<fs::File>> {
        let path = self.path(name);
        let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(BufWriter::new(f))
    }

    fn finish<C: Serialize>(mut self, command: &str, config: &C, inputs: &[&Path]) -> Result<()> {
        let mut input_sums = BTreeMap::new();
        for p in inputs {
            input_sums.insert(p.display().to_string(), sha256_file(p)?);
        }
        let mut outputs = BTreeMap::new();
        for name in &self.written {
            outputs.insert(name.clone(), sha256_file(&self.dir.join(name))?);
        }
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            inputs: input_sums,
            outputs,
        };
        self.json("manifest.json", &manifest)
    }
}

fn ensure_exists(paths: &[&Path]) -> Result<()> {
    for p in paths {
        if !p.is_file() {
            return Err(Error::io(
                *p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
            ));
        }
    }
    Ok(())
}

fn read_pmj(path: &Path, flags: &mut Vec<String>) -> Result<PmjPoint> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p: PmjPoint = serde_json::from_str(&text)?;
        return PmjPoint::new(p.point_mm);
    }
    let (p, n) = PmjPoint::from_label(&read_label_map(path)?)?;
    if n > 1 {
        flags.push(format!("pmj label has {n} voxels; using their centroid"));
    }
    Ok(p)
}

/// Config after resolving the dilation radius against the cord spacing.
#[derive(Debug, Serialize)]
struct ResolvedPipeline<'a, A: Serialize> {
    args: &'a A,
    level_config: LevelConfig,
}

fn level_config(p: &PipelineArgs, spacing: [f64; 3]) -> Result<LevelConfig> {
    let shape = p.dilate_shape.into();
    let element = match p.dilate_unit {
        DilateUnit::Mm => StructuringElement::from_mm(shape, p.dilate_radius, spacing)?,
        DilateUnit::Vox => {
            let r = p.dilate_radius;
            if r.fract() != 0.0 || r < 1.0 {
                return Err(Error::Argument(format!(
                    "voxel dilation radius must be a positive integer, got {r}"
                )));
            }
            StructuringElement::new(shape, r as u32)?
        }
    };
    Ok(LevelConfig {
        element,
        smoothing_window: p.smooth_window,
    })
}

struct PipelineInputs {
    rootlets: LabelMap,
    cord: LabelMap,
    pmj: PmjPoint,
    config: LevelConfig,
    flags: Vec<String>,
}

fn load_pipeline(p: &PipelineArgs) -> Result<PipelineInputs> {
    ensure_exists(&[&p.rootlets, &p.cord, &p.pmj])?;
    let rootlets = read_label_map(&p.rootlets)?;
    let cord = read_label_map(&p.cord)?;
    rootlets.grid().ensure_matches(cord.grid(), "rootlets vs cord")?;
    let mut flags = Vec::new();
    let pmj = read_pmj(&p.pmj, &mut flags)?;
    pmj.ensure_within(cord.grid())?;
    let config = level_config(p, cord.grid().spacing())?;
    Ok(PipelineInputs {
        rootlets,
        cord,
        pmj,
        config,
        flags,
    })
}

fn level_flags(extents: &[LevelExtent]) -> Vec<String> {
    extents
        .iter()
        .flat_map(|e| {
            e.flags
                .labels()
                .into_iter()
                .map(move |f| format!("level {}: {f}", e.level))
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct CenterlineSummary {
    first_slice: usize,
    last_slice: usize,
    total_length_mm: f64,
    smoothing_window: usize,
    interpolated_slices: Vec<usize>,
}

#[derive(Debug, Serialize)]
struct LevelsReport<'a> {
    subject: &'a str,
    pmj_mm: [f64; 3],
    centerline: CenterlineSummary,
    extents: &'a [LevelExtent],
    level_lengths_mm: BTreeMap<u8, f64>,
    flags: Vec<String>,
}

pub fn cmd_levels(args: &LevelsArgs) -> Result<Outcome> {
    let inputs = load_pipeline(&args.pipeline)?;
    let analysis = analyze_levels(&inputs.rootlets, &inputs.cord, &inputs.pmj, &inputs.config)?;
    let mut flags = inputs.flags;
    let degenerate = analysis.intersections.all_empty();
    if degenerate {
        flags.push("no rootlet class intersects the dilated cord".into());
    }
    flags.extend(level_flags(&analysis.extents));
    for f in &flags {
        warn!("{f}");
    }

    let mut out = OutDir::create(&args.output.out)?;
    write_label_map(&analysis.level_map.flattened, out.path("levels.nii.gz"))?;
    if args.output.format.csv() {
        write_levels_csv(&args.subject, &analysis.extents, out.writer("levels.csv")?)?;
        analysis.centerline.write_csv(out.writer("centerline.csv")?)?;
    }
    if args.output.format.json() {
        let cl = &analysis.centerline;
        let report = LevelsReport {
            subject: &args.subject,
            pmj_mm: inputs.pmj.point_mm,
            centerline: CenterlineSummary {
                first_slice: *cl.slices().start(),
                last_slice: *cl.slices().end(),
                total_length_mm: cl.total_length(),
                smoothing_window: cl.smoothing_window(),
                interpolated_slices: cl.slices().filter(|&s| cl.is_interpolated(s)).collect(),
            },
            extents: &analysis.extents,
            level_lengths_mm: level_lengths(&analysis.extents),
            flags,
        };
        out.json("report.json", &report)?;
    }
    let p = &args.pipeline;
    let resolved = ResolvedPipeline {
        args,
        level_config: inputs.config,
    };
    out.finish("levels", &resolved, &[&p.rootlets, &p.cord, &p.pmj])?;
    info!("levels written to {}", args.output.out.display());
    Ok(if degenerate {
        Outcome::Degenerate
    } else {
        Outcome::Success
    })
}

#[derive(Debug, Serialize)]
struct RaterPerformance<'a> {
    rater: &'a str,
    sensitivity: f64,
    specificity: f64,
}

#[derive(Debug, Serialize)]
struct ClassReport<'a> {
    class: u8,
    prior: f64,
    iterations: usize,
    converged: bool,
    raters: Vec<RaterPerformance<'a>>,
}

#[derive(Debug, Serialize)]
struct StapleReport<'a> {
    raters: &'a [String],
    classes: Vec<ClassReport<'a>>,
    warnings: &'a [String],
}

pub fn cmd_staple(args: &StapleArgs) -> Result<Outcome> {
    if args.raters.len() < 2 {
        return Err(Error::Argument(format!(
            "staple needs at least 2 --rater inputs, got {}",
            args.raters.len()
        )));
    }
    let paths: Vec<&Path> = args.raters.iter().map(PathBuf::as_path).collect();
    ensure_exists(&paths)?;
    let raters = args
        .raters
        .iter()
        .map(|p| Ok((p.display().to_string(), read_label_map(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let set = RaterSet::new(raters)?;
    let fused = staple_multiclass(&set, args.tol, args.max_iter)?;
    for w in &fused.warnings {
        warn!("{w}");
    }

    let mut out = OutDir::create(&args.output.out)?;
    write_label_map(&fused.consensus, out.path("consensus.nii.gz"))?;
    let report = StapleReport {
        raters: set.ids(),
        classes: fused
            .classes
            .iter()
            .map(|c| ClassReport {
                class: c.class,
                prior: c.result.prior,
                iterations: c.result.iterations,
                converged: c.result.converged,
                raters: set
                    .ids()
                    .iter()
                    .zip(c.result.sensitivity.iter().zip(&c.result.specificity))
                    .map(|(id, (&p, &q))| RaterPerformance {
                        rater: id,
                        sensitivity: p,
                        specificity: q,
                    })
                    .collect(),
            })
            .collect(),
        warnings: &fused.warnings,
    };
    out.json("staple_report.json", &report)?;
    out.finish("staple", args, &paths)?;
    Ok(if fused.classes.is_empty() {
        Outcome::Degenerate
    } else {
        Outcome::Success
    })
}

fn mid_distances(path: &Path) -> Result<BTreeMap<u8, f64>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(read_levels_csv(f)?
        .into_iter()
        .filter(|r| !r.is_empty())
        .filter_map(|r| Some((r.level, r.pmj_mid_mm?)))
        .collect())
}

fn parse_named(spec: &str) -> Result<(String, PathBuf)> {
    match spec.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => {
            let path = PathBuf::from(spec);
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .ok_or_else(|| Error::Argument(format!("cannot name MAE input {spec:?}")))?;
            Ok((name, path))
        }
    }
}

pub fn cmd_metrics(args: &MetricsArgs) -> Result<Outcome> {
    let mut report = MetricsReport::default();
    let mut inputs: Vec<PathBuf> = Vec::new();
    let mut degenerate = false;
    let mut requested = false;

    if let (Some(pred), Some(truth)) = (&args.pred, &args.truth) {
        requested = true;
        ensure_exists(&[pred, truth])?;
        inputs.extend([pred.clone(), truth.clone()]);
        let classes: Vec<u8> = ROOTLET_CLASSES.collect();
        let d = dice_multiclass(&read_label_map(pred)?, &read_label_map(truth)?, &classes)?;
        report.dice = d.per_class;
        report.dice_mean = d.mean;
        report.dice_sd = d.sd;
        report.flags.extend(d.flags);
        if report.dice.is_empty() {
            degenerate = true;
            report
                .flags
                .push("truth contains no rootlet class; Dice undefined".into());
        }
    }

    if !args.cov_inputs.is_empty() {
        requested = true;
        let mut per_level: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
        for p in &args.cov_inputs {
            ensure_exists(&[p])?;
            inputs.push(p.clone());
            for (l, d) in mid_distances(p)? {
                per_level.entry(l).or_default().push(d);
            }
        }
        for (l, values) in per_level {
            match cov(&values, args.cov.into()) {
                Ok(c) => {
                    report.cov.insert(l, c);
                }
                Err(Error::Degenerate(m)) => report.flags.push(format!("COV level {l}: {m}")),
                Err(e) => return Err(e),
            }
        }
        if report.cov.is_empty() {
            degenerate = true;
        }
    }

    if let Some(reference) = &args.mae_reference {
        requested = true;
        ensure_exists(&[reference])?;
        inputs.push(reference.clone());
        let refd = mid_distances(reference)?;
        for spec in &args.mae_test {
            let (name, path) = parse_named(spec)?;
            ensure_exists(&[&path])?;
            inputs.push(path.clone());
            match mae_levels(&refd, &mid_distances(&path)?) {
                Ok(m) => {
                    if !m.excluded.is_empty() {
                        report
                            .flags
                            .push(format!("MAE {name}: levels {:?} not shared; excluded", m.excluded));
                    }
                    report.mae.insert(name, m.mae_mm);
                }
                Err(Error::Degenerate(msg)) => {
                    degenerate = true;
                    report.flags.push(format!("MAE {name}: {msg}"));
                }
                Err(e) => return Err(e),
            }
        }
    }

    if !requested {
        return Err(Error::Argument(
            "nothing to compute: give --pred/--truth, --cov-input or --mae-reference/--mae-test".into(),
        ));
    }
    report.validate()?;
    let mut out = OutDir::create(&args.output.out)?;
    if args.output.format.json() {
        out.json("metrics.json", &report)?;
    }
    if args.output.format.csv() {
        report.write_csv(out.writer("metrics.csv")?)?;
    }
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    out.finish("metrics", args, &input_refs)?;
    Ok(if degenerate {
        Outcome::Degenerate
    } else {
        Outcome::Success
    })
}

pub fn cmd_resample_study(args: &StudyArgs) -> Result<Outcome> {
    let inputs = load_pipeline(&args.pipeline)?;
    let image = match &args.image {
        Some(p) => {
            ensure_exists(&[p])?;
            Some(crate::volume::read_nifti(p)?)
        }
        None => None,
    };
    let study = resample_study(
        image.as_ref(),
        &inputs.rootlets,
        &inputs.cord,
        &inputs.pmj,
        &args.spacings,
        &inputs.config,
    )?;
    let mut out = OutDir::create(&args.output.out)?;
    if args.output.format.json() {
        out.json("study.json", &study)?;
    }
    if args.output.format.csv() {
        let mut w = csv::Writer::from_writer(out.writer("study.csv")?);
        w.write_record(["spacing_mm", "mae_mm", "shared_levels", "excluded_levels", "flags"])?;
        let join = |v: &[u8]| v.iter().map(u8::to_string).collect::<Vec<_>>().join(";");
        for e in &study.entries {
            w.write_record([
                format!("{:.6}", e.spacing_mm),
                e.mae_mm.map(|m| format!("{m:.6}")).unwrap_or_default(),
                join(&e.shared_levels),
                join(&e.excluded_levels),
                e.flags.join(";"),
            ])?;
        }
        w.flush()?;
    }
    let p = &args.pipeline;
    let mut paths: Vec<&Path> = vec![&p.rootlets, &p.cord, &p.pmj];
    if let Some(img) = &args.image {
        paths.push(img);
    }
    let resolved = ResolvedPipeline {
        args,
        level_config: inputs.config,
    };
    out.finish("resample-study", &resolved, &paths)?;
    Ok(if study.entries.iter().all(|e| e.mae_mm.is_none()) {
        Outcome::Degenerate
    } else {
        Outcome::Success
    })
}

pub fn cmd_phantom(args: &PhantomArgs) -> Result<Outcome> {
    let mut spec = match &args.config {
        Some(p) => {
            ensure_exists(&[p])?;
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<PhantomSpec>(&text).map_err(|e| Error::Spec(e.to_string()))?
        }
        None => PhantomSpec::cervical([64, 64, 160], 0.8, 0),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(sd) = args.noise_sd {
        spec.noise_sd = sd;
    }
    let phantom = generate_phantom(&spec)?;
    let mut pmj_label = LabelMap::zeros(phantom.cord.grid().clone());
    let [i, j, k] = phantom.pmj_voxel;
    pmj_label.set(i, j, k, 1);

    let mut out = OutDir::create(&args.out)?;
    write_nifti(&phantom.image, out.path("image.nii.gz"))?;
    write_label_map(&phantom.cord, out.path("cord.nii.gz"))?;
    write_label_map(&phantom.rootlets, out.path("rootlets.nii.gz"))?;
    write_label_map(&pmj_label, out.path("pmj.nii.gz"))?;
    out.json("pmj.json", &phantom.pmj)?;
    out.json("truth.json", &phantom.manifest(&spec))?;
    let inputs: Vec<&Path> = args.config.iter().map(PathBuf::as_path).collect();
    out.finish("phantom", &spec, &inputs)?;
    Ok(Outcome::Success)
}
