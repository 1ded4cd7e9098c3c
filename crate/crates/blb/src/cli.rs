//! The `blb` command: `assess` runs one procedure on one dataset, `benchmark`
//! scores procedures against ground truth on synthetic data, and `rerun`
//! repeats a run from its manifest.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use blb_core::{
    mean_width, AdaptiveParams, DataMatrix, EstimatorKind, EstimatorSpec, MetricSpec,
    ProcedureConfig, ResampleFlavor, StreamKey, SubsampleMode, SubsetSize, Task,
};

use crate::error::{Error, Result};
use crate::formats::{
    self, digest, experiment_finals_table, experiment_trajectories_table, grid_table, unix_ms,
    GridCell, RunManifest, SummaryFile, Table, TrajectoryFile, TruthFile,
};
use crate::ingest::{ingest_csv, CsvSchema};
use crate::procedures::{run_method, Method};
use crate::simbench::{
    compute_ground_truth, generate, run_experiment, DataGeneratingSpec, GroundTruth, ProcedureCell,
};

pub const SUMMARY_FILE: &str = "summary.tsv";
pub const TRAJECTORY_FILE: &str = "trajectory.tsv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SELECTION_FILE: &str = "selection.json";
pub const TRUTH_FILE: &str = "truth.tsv";
pub const EXPERIMENT_TRAJECTORIES_FILE: &str = "trajectories.tsv";
pub const EXPERIMENT_FINAL_FILE: &str = "final.tsv";
pub const GRID_FILE: &str = "grid.tsv";

/// Below this many realizations the ground truth is flagged as low fidelity.
pub const LOW_FIDELITY_REALIZATIONS: usize = 100;

#[derive(Debug, Parser)]
#[command(
    name = "blb",
    version,
    about = "Estimator quality assessment with the Bag of Little Bootstraps"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assess an estimator on one dataset.
    Assess(AssessArgs),
    /// Compare procedures against Monte Carlo ground truth.
    Benchmark(BenchmarkArgs),
    /// Repeat the run recorded in a manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorChoice {
    Mean,
    Linreg,
    Logreg,
}

impl EstimatorChoice {
    fn task(self) -> Task {
        match self {
            EstimatorChoice::Logreg => Task::Classification,
            _ => Task::Regression,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricChoice {
    Ci,
    Stderr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodChoice {
    Blb,
    Boot,
    Bofn,
    Subsampling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FlavorChoice {
    Multinomial,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Fig1Classification,
    Fig1Regression,
    Fig3Grid,
    RealData,
}

#[derive(Debug, Clone, Args)]
pub struct EstimatorArgs {
    /// L2 penalty for linreg and logreg.
    #[arg(long, default_value_t = 0.0)]
    pub ridge: f64,
    /// Newton iteration cap for logreg.
    #[arg(long, default_value_t = 100)]
    pub max_iterations: usize,
    /// Gradient max-norm at which logreg stops.
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Args)]
pub struct AssessArgs {
    /// Numeric CSV input.
    #[arg(
        long,
        required_unless_present = "synthetic",
        conflicts_with = "synthetic"
    )]
    pub data: Option<PathBuf>,
    /// Synthetic dataset as key=value pairs, e.g. `task=classification,features=student_t:3,d=10`.
    #[arg(long)]
    pub synthetic: Option<String>,
    /// Rows to generate for --synthetic.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    /// Response column: a header name, a zero-based index, `last` or `none`.
    /// Defaults to `none` for mean and `last` otherwise.
    #[arg(long)]
    pub response: Option<String>,
    #[arg(long, value_enum)]
    pub estimator: EstimatorChoice,
    #[command(flatten)]
    pub solver: EstimatorArgs,
    #[arg(long, value_enum, default_value = "ci")]
    pub metric: MetricChoice,
    #[arg(long, default_value_t = 0.95)]
    pub coverage: f64,
    #[arg(long, value_enum, default_value = "blb")]
    pub method: MethodChoice,
    /// Subset size exponent: b = floor(n^gamma).
    #[arg(long, conflicts_with = "b")]
    pub gamma: Option<f64>,
    /// Explicit subset size.
    #[arg(long)]
    pub b: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub s: usize,
    #[arg(long, default_value_t = 100)]
    pub r: usize,
    /// Choose r and s at run time (blb only).
    #[arg(long)]
    pub adaptive: bool,
    #[arg(long, default_value_t = 0.05)]
    pub epsilon_r: f64,
    #[arg(long, default_value_t = 20)]
    pub window_r: usize,
    #[arg(long, default_value_t = 500)]
    pub r_max: usize,
    #[arg(long, default_value_t = 0.05)]
    pub epsilon_s: f64,
    #[arg(long, default_value_t = 3)]
    pub window_s: usize,
    #[arg(long, default_value_t = 50)]
    pub s_max: usize,
    #[arg(long, value_enum, default_value = "multinomial")]
    pub flavor: FlavorChoice,
    /// Draw BLB subsamples as disjoint blocks of a random partition.
    #[arg(long)]
    pub partition: bool,
    /// Convergence-rate exponent used to rescale bofn and subsampling output.
    #[arg(long, default_value_t = 0.5)]
    pub rate_exponent: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[arg(long, env = "BLB_OUT_DIR", default_value = "blb-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BenchmarkArgs {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Synthetic distribution; required without a synthetic preset.
    #[arg(long)]
    pub synthetic: Option<String>,
    /// Numeric CSV input for the real-data preset.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub response: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum)]
    pub estimator: Option<EstimatorChoice>,
    #[command(flatten)]
    pub solver: EstimatorArgs,
    #[arg(long, value_enum, default_value = "ci")]
    pub metric: MetricChoice,
    /// Comma-separated methods: blb, blb-adaptive, boot, bofn, subsampling.
    #[arg(long)]
    pub methods: Option<String>,
    /// Comma-separated subset exponents for blb, bofn and subsampling.
    #[arg(long)]
    pub gammas: Option<String>,
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub truth_realizations: Option<usize>,
    #[arg(long)]
    pub dataset_realizations: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[arg(long, env = "BLB_OUT_DIR", default_value = "blb-out")]
    pub out: PathBuf,
    /// Ground-truth cache; defaults to `<out>/cache`.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long)]
    pub no_cache: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RerunArgs {
    pub manifest: PathBuf,
    #[arg(long, env = "BLB_OUT_DIR", default_value = "blb-out")]
    pub out: PathBuf,
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Failures print one JSON error record on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) {
                print!("{e}");
                return 0;
            }
            eprint!("{e}");
            report_error("usage", &e.kind().to_string());
            return 2;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            report_error(e.code(), &e.to_string());
            1
        }
    }
}

fn report_error(code: &str, message: &str) {
    eprintln!(
        "{}",
        json!({ "error": { "code": code, "message": message } })
    );
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Assess(args) => assess(&args),
        Command::Benchmark(args) => benchmark(&args),
        Command::Rerun(args) => rerun(&args),
    }
}

fn estimator_spec(choice: EstimatorChoice, solver: &EstimatorArgs) -> Result<EstimatorSpec> {
    let kind = match choice {
        EstimatorChoice::Mean => EstimatorKind::WeightedMean,
        EstimatorChoice::Linreg => EstimatorKind::LeastSquares,
        EstimatorChoice::Logreg => EstimatorKind::LogisticNewton,
    };
    Ok(EstimatorSpec::new(
        kind,
        solver.max_iterations,
        solver.tolerance,
        solver.ridge,
    )?)
}

fn metric_spec(choice: MetricChoice, coverage: f64) -> Result<MetricSpec> {
    Ok(match choice {
        MetricChoice::Ci => MetricSpec::marginal_ci(coverage)?,
        MetricChoice::Stderr => MetricSpec::stderr(),
    })
}

fn default_response(choice: EstimatorChoice) -> &'static str {
    match choice {
        EstimatorChoice::Mean => "none",
        _ => "last",
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn value_name<T: ValueEnum>(v: T) -> String {
    v.to_possible_value().unwrap().get_name().to_string()
}

/// A loaded dataset and the digest identifying it.
struct Input {
    data: DataMatrix,
    digest: String,
}

fn load_data(path: &Path, response: &str, task: Task) -> Result<Input> {
    let schema = CsvSchema {
        response: response.parse()?,
        task,
    };
    let data = ingest_csv(path, &schema)?;
    Ok(Input {
        data,
        digest: formats::file_digest(path)?,
    })
}

fn synthesize(spec: &DataGeneratingSpec, n: usize) -> Result<Input> {
    let data = generate(spec, n, &mut StreamKey::root(spec.seed).rng())?;
    Ok(Input {
        data,
        digest: digest(format!("{spec} n={n}").as_bytes()),
    })
}

impl AssessArgs {
    fn procedure_config(&self) -> Result<ProcedureConfig> {
        let subset_size = match (self.b, self.gamma) {
            (Some(b), _) => SubsetSize::Explicit(b),
            (None, g) => SubsetSize::Exponent(g.unwrap_or(0.7)),
        };
        let adaptive = if self.adaptive {
            Some(AdaptiveParams::new(
                self.epsilon_r,
                self.window_r,
                self.r_max,
                self.epsilon_s,
                self.window_s,
                self.s_max,
            )?)
        } else {
            None
        };
        Ok(ProcedureConfig {
            subset_size,
            s: self.s,
            r: self.r,
            seed: self.seed,
            resample_flavor: match self.flavor {
                FlavorChoice::Multinomial => ResampleFlavor::Multinomial,
                FlavorChoice::Poisson => ResampleFlavor::Poisson,
            },
            subsample_mode: if self.partition {
                SubsampleMode::DisjointPartition
            } else {
                SubsampleMode::WithoutReplacement
            },
            adaptive,
            rate_exponent: self.rate_exponent,
            workers: self.workers,
        })
    }

    fn method(&self) -> Result<Method> {
        Ok(match (self.method, self.adaptive) {
            (MethodChoice::Blb, true) => Method::BlbAdaptive,
            (MethodChoice::Blb, false) => Method::Blb,
            (_, true) => {
                return Err(Error::Argument(
                    "--adaptive applies only to --method blb".into(),
                ))
            }
            (MethodChoice::Boot, false) => Method::Bootstrap,
            (MethodChoice::Bofn, false) => Method::Bofn,
            (MethodChoice::Subsampling, false) => Method::Subsampling,
        })
    }

    /// The command line with every default written out, minus `--out`.
    fn resolved_arguments(&self) -> Vec<String> {
        let mut a = vec!["assess".to_string()];
        let mut push = |k: &str, v: String| {
            a.push(format!("--{k}"));
            a.push(v);
        };
        if let Some(d) = &self.data {
            push("data", d.display().to_string());
        }
        if let Some(s) = &self.synthetic {
            push("synthetic", s.clone());
        }
        push("n", self.n.to_string());
        push(
            "response",
            self.response
                .clone()
                .unwrap_or_else(|| default_response(self.estimator).into()),
        );
        push("estimator", value_name(self.estimator));
        push("ridge", self.solver.ridge.to_string());
        push("max-iterations", self.solver.max_iterations.to_string());
        push("tolerance", self.solver.tolerance.to_string());
        push("metric", value_name(self.metric));
        push("coverage", self.coverage.to_string());
        push("method", value_name(self.method));
        match self.b {
            Some(b) => push("b", b.to_string()),
            None => push("gamma", self.gamma.unwrap_or(0.7).to_string()),
        }
        push("s", self.s.to_string());
        push("r", self.r.to_string());
        push("epsilon-r", self.epsilon_r.to_string());
        push("window-r", self.window_r.to_string());
        push("r-max", self.r_max.to_string());
        push("epsilon-s", self.epsilon_s.to_string());
        push("window-s", self.window_s.to_string());
        push("s-max", self.s_max.to_string());
        push("flavor", value_name(self.flavor));
        push("rate-exponent", self.rate_exponent.to_string());
        push("seed", self.seed.to_string());
        push("workers", self.workers.to_string());
        if self.adaptive {
            a.push("--adaptive".into());
        }
        if self.partition {
            a.push("--partition".into());
        }
        a
    }
}

fn config_json(config: &ProcedureConfig, b: usize) -> serde_json::Value {
    json!({
        "subset_size": match config.subset_size {
            SubsetSize::Exponent(g) => json!({ "exponent": g }),
            SubsetSize::Explicit(b) => json!({ "explicit": b }),
        },
        "b": b,
        "s": config.s,
        "r": config.r,
        "seed": config.seed,
        "resample_flavor": format!("{:?}", config.resample_flavor).to_lowercase(),
        "subsample_mode": format!("{:?}", config.subsample_mode).to_lowercase(),
        "adaptive": config.adaptive.as_ref().map(|p| json!({
            "epsilon_r": p.epsilon_r,
            "window_r": p.window_r,
            "r_max": p.r_max,
            "epsilon_s": p.epsilon_s,
            "window_s": p.window_s,
            "s_max": p.s_max,
        })),
        "rate_exponent": config.rate_exponent,
        "workers": config.workers,
    })
}

fn estimator_json(spec: &EstimatorSpec) -> serde_json::Value {
    json!({
        "kind": format!("{:?}", spec.kind()),
        "max_iterations": spec.max_iterations(),
        "gradient_tolerance": spec.gradient_tolerance(),
        "ridge_lambda": spec.ridge_lambda(),
    })
}

fn assess(args: &AssessArgs) -> Result<()> {
    let started = unix_ms();
    let estimator = estimator_spec(args.estimator, &args.solver)?;
    let metric = metric_spec(args.metric, args.coverage)?;
    let method = args.method()?;
    let config = args.procedure_config()?;
    let task = args.estimator.task();
    let input = match (&args.data, &args.synthetic) {
        (Some(path), _) => load_data(
            path,
            args.response
                .as_deref()
                .unwrap_or(default_response(args.estimator)),
            task,
        )?,
        (None, Some(spec)) => {
            let spec: DataGeneratingSpec = spec.parse()?;
            synthesize(&spec, args.n)?
        }
        (None, None) => {
            return Err(Error::Argument(
                "one of --data or --synthetic is required".into(),
            ))
        }
    };
    input.data.validate(task)?;
    let b = config.subset_size(input.data.n())?;

    let output = run_method(method, &input.data, &estimator, &metric, &config)?;

    create_dir(&args.out)?;
    let mut outputs = vec![SUMMARY_FILE.to_string(), TRAJECTORY_FILE.to_string()];
    let summary = SummaryFile {
        manifest: MANIFEST_FILE.into(),
        method: method.name().into(),
        summary: output.summary.clone(),
    };
    formats::write_text(&args.out.join(SUMMARY_FILE), &summary.to_table().to_text())?;
    let trajectory = TrajectoryFile {
        manifest: MANIFEST_FILE.into(),
        method: method.name().into(),
        trajectory: output.trajectory.clone(),
    };
    formats::write_text(
        &args.out.join(TRAJECTORY_FILE),
        &trajectory.to_table()?.to_text(),
    )?;
    if let Some(selection) = &output.selection {
        formats::write_json(&args.out.join(SELECTION_FILE), selection)?;
        outputs.push(SELECTION_FILE.into());
    }
    let manifest = RunManifest {
        command: "assess".into(),
        arguments: args.resolved_arguments(),
        configuration: json!({
            "method": method.name(),
            "procedure": config_json(&config, b),
            "estimator": estimator_json(&estimator),
            "metric": format!("{metric:?}"),
            "n": input.data.n(),
            "p": input.data.p(),
            "stats": output.stats,
        }),
        seed: config.seed,
        toolkit_version: env!("CARGO_PKG_VERSION").into(),
        input_digest: input.digest,
        started_unix_ms: started,
        finished_unix_ms: unix_ms(),
        outputs,
    };
    formats::write_json(&args.out.join(MANIFEST_FILE), &manifest)?;

    let headline = match mean_width(&output.summary) {
        Ok(w) => format!("mean CI width {w}"),
        Err(_) => format!("mean stderr {}", formats::summary_mean(&output.summary)),
    };
    println!(
        "{}: n = {}, b = {b}, {} resamples, {headline}; results in {}",
        method.name(),
        input.data.n(),
        output.stats.resamples,
        args.out.display()
    );
    Ok(())
}

/// Everything a benchmark needs after presets and flags are combined.
struct BenchPlan {
    preset: Option<Preset>,
    spec: Option<DataGeneratingSpec>,
    n: usize,
    estimator: EstimatorChoice,
    cells: Vec<ProcedureCell>,
    truth_realizations: usize,
    dataset_realizations: usize,
    grid: Option<(Vec<usize>, Vec<usize>)>,
}

const FIG1_GAMMAS: [f64; 5] = [0.5, 0.6, 0.7, 0.8, 0.9];
const GRID_R: [usize; 6] = [2, 5, 10, 20, 50, 100];
const GRID_S: [usize; 6] = [1, 2, 3, 5, 10, 20];

fn parse_methods(s: &str) -> Result<Vec<Method>> {
    s.split(',')
        .map(|m| match m.trim() {
            "blb" => Ok(Method::Blb),
            "blb-adaptive" => Ok(Method::BlbAdaptive),
            "boot" => Ok(Method::Bootstrap),
            "bofn" => Ok(Method::Bofn),
            "subsampling" => Ok(Method::Subsampling),
            other => Err(Error::Argument(format!("unknown method {other:?}"))),
        })
        .collect()
}

fn parse_gammas(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|g| {
            g.trim()
                .parse()
                .map_err(|_| Error::Argument(format!("bad exponent {g:?}")))
        })
        .collect()
}

fn cell(
    method: Method,
    gamma: f64,
    s: usize,
    r: usize,
    seed: u64,
    workers: usize,
) -> ProcedureCell {
    let label = match method {
        Method::Bootstrap => method.name().to_string(),
        _ => format!("{} gamma={gamma}", method.name()),
    };
    ProcedureCell {
        label,
        method,
        config: ProcedureConfig {
            subset_size: SubsetSize::Exponent(gamma),
            s,
            r,
            seed,
            adaptive: (method == Method::BlbAdaptive).then(AdaptiveParams::default),
            workers,
            ..ProcedureConfig::default()
        },
    }
}

fn method_cells(
    methods: &[Method],
    gammas: &[f64],
    s: usize,
    r: usize,
    seed: u64,
    workers: usize,
) -> Vec<ProcedureCell> {
    let mut cells = Vec::new();
    for &m in methods {
        if m == Method::Bootstrap {
            cells.push(cell(m, 1.0, s, r, seed, workers));
        } else {
            cells.extend(gammas.iter().map(|&g| cell(m, g, s, r, seed, workers)));
        }
    }
    cells
}

impl BenchmarkArgs {
    fn plan(&self) -> Result<BenchPlan> {
        let classification = "task=classification,features=student_t:3,d=10";
        let (spec_text, n, estimator, methods, gammas, truth, datasets) = match self.preset {
            Some(Preset::Fig1Classification) => (
                Some(classification.to_string()),
                20_000,
                EstimatorChoice::Logreg,
                "blb,bofn,subsampling,boot",
                FIG1_GAMMAS.to_vec(),
                2_000,
                5,
            ),
            Some(Preset::Fig1Regression) => (
                Some("task=regression,features=student_t:3,d=100".to_string()),
                20_000,
                EstimatorChoice::Linreg,
                "blb,bofn,subsampling,boot",
                FIG1_GAMMAS.to_vec(),
                2_000,
                5,
            ),
            Some(Preset::Fig3Grid) => (
                Some(classification.to_string()),
                2_000,
                EstimatorChoice::Logreg,
                "blb-adaptive,boot",
                vec![0.7],
                2_000,
                5,
            ),
            Some(Preset::RealData) => (
                None,
                0,
                EstimatorChoice::Logreg,
                "blb-adaptive,bofn,boot",
                vec![0.6, 0.7, 0.8],
                0,
                1,
            ),
            None => (
                None,
                20_000,
                EstimatorChoice::Logreg,
                "blb,boot",
                vec![0.7],
                2_000,
                5,
            ),
        };
        let spec_text = self.synthetic.clone().or(spec_text);
        let spec = match (&spec_text, self.preset) {
            (_, Some(Preset::RealData)) => {
                if self.synthetic.is_some() {
                    return Err(Error::Argument(
                        "the real-data preset takes --data, not --synthetic".into(),
                    ));
                }
                if self.data.is_none() {
                    return Err(Error::Argument("the real-data preset needs --data".into()));
                }
                None
            }
            (Some(text), _) => Some(text.parse::<DataGeneratingSpec>()?),
            (None, _) => {
                return Err(Error::Argument(
                    "benchmark needs --preset or --synthetic".into(),
                ))
            }
        };
        if self.data.is_some() && self.preset != Some(Preset::RealData) {
            return Err(Error::Argument(
                "--data is only used by the real-data preset".into(),
            ));
        }
        let methods = parse_methods(self.methods.as_deref().unwrap_or(methods))?;
        let gammas = match &self.gammas {
            Some(g) => parse_gammas(g)?,
            None => gammas,
        };
        let s = self.s.unwrap_or(10);
        let r = self.r.unwrap_or(100);
        let mut cells = method_cells(&methods, &gammas, s, r, self.seed, self.workers);
        let mut grid = None;
        if self.preset == Some(Preset::Fig3Grid) {
            let gamma = gammas.first().copied().unwrap_or(0.7);
            for &gr in &GRID_R {
                for &gs in &GRID_S {
                    let mut c = cell(Method::Blb, gamma, gs, gr, self.seed, self.workers);
                    c.label = grid_label(gr, gs);
                    cells.push(c);
                }
            }
            grid = Some((GRID_R.to_vec(), GRID_S.to_vec()));
        }
        Ok(BenchPlan {
            preset: self.preset,
            spec,
            n: self.n.unwrap_or(n),
            estimator: self.estimator.unwrap_or(estimator),
            cells,
            truth_realizations: self.truth_realizations.unwrap_or(truth),
            dataset_realizations: self.dataset_realizations.unwrap_or(datasets),
            grid,
        })
    }

    fn resolved_arguments(&self, plan: &BenchPlan) -> Vec<String> {
        let mut a = vec!["benchmark".to_string()];
        let mut push = |k: &str, v: String| {
            a.push(format!("--{k}"));
            a.push(v);
        };
        if let Some(p) = plan.preset {
            push("preset", value_name(p));
        }
        if let Some(spec) = &plan.spec {
            push("synthetic", spec.to_string());
            push("n", plan.n.to_string());
        }
        if let Some(d) = &self.data {
            push("data", d.display().to_string());
            push(
                "response",
                self.response
                    .clone()
                    .unwrap_or_else(|| default_response(plan.estimator).into()),
            );
        }
        push("estimator", value_name(plan.estimator));
        push("ridge", self.solver.ridge.to_string());
        push("max-iterations", self.solver.max_iterations.to_string());
        push("tolerance", self.solver.tolerance.to_string());
        push("metric", value_name(self.metric));
        if let Some(m) = &self.methods {
            push("methods", m.clone());
        }
        if let Some(g) = &self.gammas {
            push("gammas", g.clone());
        }
        push("s", self.s.unwrap_or(10).to_string());
        push("r", self.r.unwrap_or(100).to_string());
        push("truth-realizations", plan.truth_realizations.to_string());
        push(
            "dataset-realizations",
            plan.dataset_realizations.to_string(),
        );
        push("seed", self.seed.to_string());
        push("workers", self.workers.to_string());
        if let Some(c) = &self.cache_dir {
            push("cache-dir", c.display().to_string());
        }
        if self.no_cache {
            a.push("--no-cache".into());
        }
        a
    }
}

fn grid_label(r: usize, s: usize) -> String {
    format!("blb r={r} s={s}")
}

/// Cache key: digest of everything the ground truth depends on.
fn truth_key(
    spec: &DataGeneratingSpec,
    n: usize,
    realizations: usize,
    estimator: &EstimatorSpec,
    metric: &MetricSpec,
    seed: u64,
) -> (String, String) {
    let description = format!(
        "{spec} n={n} realizations={realizations} estimator={} metric={metric:?} seed={seed} format={}",
        estimator_json(estimator),
        formats::FORMAT_VERSION
    );
    (digest(description.as_bytes()), description)
}

/// Loads ground truth from the cache or computes and stores it. Returns the
/// truth and whether it came from the cache.
#[allow(clippy::too_many_arguments)]
fn ground_truth(
    spec: &DataGeneratingSpec,
    n: usize,
    realizations: usize,
    estimator: &EstimatorSpec,
    metric: &MetricSpec,
    seed: u64,
    workers: usize,
    cache: Option<&Path>,
) -> Result<(GroundTruth, TruthFile, bool)> {
    let (key, description) = truth_key(spec, n, realizations, estimator, metric, seed);
    let cache_path = cache.map(|dir| dir.join(format!("truth-{}.tsv", &key[..16])));
    if let Some(path) = &cache_path {
        if path.exists() {
            let file = TruthFile::from_table(&formats::read_table(path)?)?;
            if file.key == key {
                eprintln!("using cached ground truth {}", path.display());
                let truth = GroundTruth {
                    summary: file.summary.clone(),
                    num_realizations: file.num_realizations,
                    n: file.n,
                };
                return Ok((truth, file, true));
            }
        }
    }
    eprintln!("computing ground truth from {realizations} datasets of size {n}");
    let truth = compute_ground_truth(spec, n, realizations, estimator, metric, seed, workers)?;
    let file = TruthFile {
        key,
        description,
        num_realizations: realizations,
        n,
        summary: truth.summary.clone(),
    };
    if let (Some(dir), Some(path)) = (cache, &cache_path) {
        create_dir(dir)?;
        formats::write_text(path, &file.to_table().to_text())?;
    }
    Ok((truth, file, false))
}

fn benchmark(args: &BenchmarkArgs) -> Result<()> {
    let started = unix_ms();
    let plan = args.plan()?;
    let estimator = estimator_spec(plan.estimator, &args.solver)?;
    let metric = metric_spec(args.metric, 0.95)?;
    create_dir(&args.out)?;

    if plan.preset == Some(Preset::RealData) {
        return real_data(args, &plan, &estimator, &metric, started);
    }
    let spec = plan.spec.as_ref().expect("synthetic plans carry a spec");
    if spec.task != plan.estimator.task() && plan.estimator != EstimatorChoice::Mean {
        return Err(Error::Argument(
            "estimator does not match the synthetic task".into(),
        ));
    }
    if plan.truth_realizations < LOW_FIDELITY_REALIZATIONS {
        eprintln!(
            "warning: ground truth from only {} realizations is low fidelity",
            plan.truth_realizations
        );
    }
    let cache_dir = args
        .cache_dir
        .clone()
        .unwrap_or_else(|| args.out.join("cache"));
    let cache = (!args.no_cache).then_some(cache_dir.as_path());
    let (truth, truth_file, cached) = ground_truth(
        spec,
        plan.n,
        plan.truth_realizations,
        &estimator,
        &metric,
        args.seed,
        args.workers,
        cache,
    )?;
    formats::write_text(&args.out.join(TRUTH_FILE), &truth_file.to_table().to_text())?;

    let report = run_experiment(
        spec,
        plan.n,
        &plan.cells,
        &estimator,
        &metric,
        &truth,
        plan.dataset_realizations,
        args.seed,
    )?;
    let mut outputs = vec![
        TRUTH_FILE.to_string(),
        EXPERIMENT_TRAJECTORIES_FILE.to_string(),
        EXPERIMENT_FINAL_FILE.to_string(),
    ];
    formats::write_text(
        &args.out.join(EXPERIMENT_TRAJECTORIES_FILE),
        &experiment_trajectories_table(&report, MANIFEST_FILE).to_text(),
    )?;
    formats::write_text(
        &args.out.join(EXPERIMENT_FINAL_FILE),
        &experiment_finals_table(&report, MANIFEST_FILE).to_text(),
    )?;
    if let Some((rs, ss)) = &plan.grid {
        let mut cells = Vec::new();
        for &r in rs {
            for &s in ss {
                let c = report
                    .cell(&grid_label(r, s))
                    .expect("grid cells are planned");
                cells.push(GridCell {
                    r,
                    s,
                    relative_error: c.final_error_mean,
                    relative_error_se: c.final_error_se,
                });
            }
        }
        formats::write_text(
            &args.out.join(GRID_FILE),
            &grid_table(&cells, MANIFEST_FILE, plan.n).to_text(),
        )?;
        outputs.push(GRID_FILE.into());
    }
    let manifest = RunManifest {
        command: "benchmark".into(),
        arguments: args.resolved_arguments(&plan),
        configuration: json!({
            "spec": spec.to_string(),
            "n": plan.n,
            "estimator": estimator_json(&estimator),
            "metric": format!("{metric:?}"),
            "truth_realizations": plan.truth_realizations,
            "dataset_realizations": plan.dataset_realizations,
            "truth_cache": if cached { "hit" } else { "miss" },
            "truth_key": truth_file.key,
            "cells": plan.cells.iter().map(|c| json!({
                "label": c.label,
                "method": c.method.name(),
                "procedure": config_json(&c.config, c.config.subset_size.resolve(plan.n).unwrap_or(0)),
            })).collect::<Vec<_>>(),
        }),
        seed: args.seed,
        toolkit_version: env!("CARGO_PKG_VERSION").into(),
        input_digest: digest(format!("{spec} n={}", plan.n).as_bytes()),
        started_unix_ms: started,
        finished_unix_ms: unix_ms(),
        outputs,
    };
    formats::write_json(&args.out.join(MANIFEST_FILE), &manifest)?;

    for c in &report.cells {
        match c.final_error_mean {
            Some(e) => println!("{:<28} final relative error {e:.4}", c.label),
            None => println!("{:<28} failed", c.label),
        }
    }
    if report.has_failures() {
        let failed: Vec<String> = report
            .cells
            .iter()
            .filter(|c| !c.failures.is_empty())
            .map(|c| format!("{}: {}", c.label, c.failures.join("; ")))
            .collect();
        return Err(Error::Argument(format!(
            "procedures failed: {}",
            failed.join(" | ")
        )));
    }
    Ok(())
}

/// Runs each cell once on a real dataset and records absolute mean interval
/// width against time, since no ground truth exists.
fn real_data(
    args: &BenchmarkArgs,
    plan: &BenchPlan,
    estimator: &EstimatorSpec,
    metric: &MetricSpec,
    started: u128,
) -> Result<()> {
    let path = args.data.as_ref().expect("checked by plan");
    let task = plan.estimator.task();
    let input = load_data(
        path,
        args.response
            .as_deref()
            .unwrap_or(default_response(plan.estimator)),
        task,
    )?;
    input.data.validate(task)?;
    let mut table = Table::new(
        "realdata-trajectories",
        &["label", "method", "step", "elapsed_seconds", "mean"],
    );
    table.push_meta("manifest", MANIFEST_FILE);
    table.push_meta("n", input.data.n());
    let mut failures = Vec::new();
    for c in &plan.cells {
        match run_method(c.method, &input.data, estimator, metric, &c.config) {
            Ok(out) => {
                for (i, step) in out.trajectory.steps().iter().enumerate() {
                    table.rows.push(vec![
                        c.label.clone(),
                        c.method.name().into(),
                        i.to_string(),
                        step.elapsed_seconds.to_string(),
                        formats::summary_mean(&step.summary).to_string(),
                    ]);
                }
                println!(
                    "{:<28} final mean {}",
                    c.label,
                    formats::summary_mean(&out.summary)
                );
            }
            Err(e) => failures.push(format!("{}: {e}", c.label)),
        }
    }
    formats::write_text(
        &args.out.join(EXPERIMENT_TRAJECTORIES_FILE),
        &table.to_text(),
    )?;
    let manifest = RunManifest {
        command: "benchmark".into(),
        arguments: args.resolved_arguments(plan),
        configuration: json!({
            "n": input.data.n(),
            "p": input.data.p(),
            "estimator": estimator_json(estimator),
            "metric": format!("{metric:?}"),
            "cells": plan.cells.iter().map(|c| json!({
                "label": c.label,
                "method": c.method.name(),
                "procedure": config_json(&c.config, c.config.subset_size.resolve(input.data.n()).unwrap_or(0)),
            })).collect::<Vec<_>>(),
        }),
        seed: args.seed,
        toolkit_version: env!("CARGO_PKG_VERSION").into(),
        input_digest: input.digest,
        started_unix_ms: started,
        finished_unix_ms: unix_ms(),
        outputs: vec![EXPERIMENT_TRAJECTORIES_FILE.into()],
    };
    formats::write_json(&args.out.join(MANIFEST_FILE), &manifest)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "procedures failed: {}",
            failures.join(" | ")
        )))
    }
}

fn rerun(args: &RerunArgs) -> Result<()> {
    let manifest: RunManifest = formats::read_json(&args.manifest)?;
    let mut argv = vec![OsString::from("blb")];
    argv.extend(manifest.arguments.iter().map(OsString::from));
    argv.push("--out".into());
    argv.push(args.out.clone().into_os_string());
    let cli = Cli::try_parse_from(argv)
        .map_err(|e| Error::Argument(format!("manifest arguments: {e}")))?;
    if matches!(cli.command, Command::Rerun(_)) {
        return Err(Error::Argument("manifest records a rerun".into()));
    }
    execute(cli.command)
}
