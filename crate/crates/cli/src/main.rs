//! `varenn`: synthesize cubes, encode images, build datasets, train and
//! evaluate networks, run combination suites and ablations, render maps.
//!
//! Every verb accepts `--config <file.toml>`; command-line values override
//! the file. Each run records its resolved parameters as JSON next to its
//! outputs. Failures print one JSON line on stderr and exit with a code
//! that identifies the error category.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use varenn_core::config::{
    parse_setting, ExperimentOverrides, ResolvedParams, RunConfig, TrainOverrides,
};
use varenn_core::cube::global_minmax_of;
use varenn_core::encoder::{encode_window, export_png, EncodeOptions, Knockout, ScalingMode};
use varenn_core::experiment::{
    combinations, ActivationSetting, ExperimentSpec, PrecisionSetting, Target,
};
use varenn_core::lenet::Model;
use varenn_core::render::{render_map, MapKind, MapRecord};
use varenn_core::report::{ablation_tsv, load_suite_json, suite_summary, write_suite_report};
use varenn_core::runner::{
    evaluate_model, predictions_tsv, run_ablations, run_suite, train_model, with_threads,
    SuiteOptions,
};
use varenn_core::synth::{synth_generate, SynthSpec};
use varenn_core::window::WindowSpec;
use varenn_core::{load_cube, save_cube, Dataset, Error, Result, VariableId};

#[derive(Parser)]
#[command(
    name = "varenn",
    version,
    about = "Climate time series as images for CNN trend classification"
)]
struct Cli {
    /// TOML file supplying defaults for any option.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic climate cube.
    Synth(SynthArgs),
    /// Render one window of one cell as a PNG image.
    Encode(EncodeArgs),
    /// Build a labeled image dataset.
    Dataset(DatasetArgs),
    /// Train a network on a dataset.
    Train(TrainArgs),
    /// Score a trained network on a dataset.
    Eval(EvalArgs),
    /// Run the 92 input combinations for one target.
    Suite(SuiteArgs),
    /// Run the knockout and 10-year training variants of one experiment.
    Ablate(AblateArgs),
    /// Draw a class or error map from a predictions table.
    Render(RenderArgs),
    /// Rewrite the tables of a saved suite report.
    Report(ReportArgs),
}

fn thresholds(s: &str) -> std::result::Result<[f64; 4], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into()
        .map_err(|_| "expected four comma-separated thresholds".to_string())
}

#[derive(Args, Default)]
struct ExperimentArgs {
    /// Experiment id; within 1..=92 it also selects that row's inputs.
    /// Without it the id is looked up from the inputs.
    #[arg(long)]
    id: Option<u32>,
    /// tmp or pre.
    #[arg(long, value_parser = parse_setting::<Target>)]
    target: Option<Target>,
    /// Comma-separated input variables, e.g. pet,tmp,vap.
    #[arg(long, value_delimiter = ',')]
    inputs: Option<Vec<VariableId>>,
    /// none, seasonal_only or interannual_only.
    #[arg(long, value_parser = parse_setting::<Knockout>)]
    knockout: Option<Knockout>,
    #[arg(long)]
    training_years: Option<usize>,
    #[arg(long)]
    labeling_years: Option<usize>,
    /// Grid-selection threshold in [0, 1].
    #[arg(long)]
    c_t: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// global or per_image.
    #[arg(long, value_parser = parse_setting::<ScalingMode>)]
    scaling: Option<ScalingMode>,
    /// Feed 8-bit pixel levels to the network (true/false).
    #[arg(long)]
    quantize: Option<bool>,
    /// Permute labels across records (chance-level control).
    #[arg(long)]
    shuffle_labels: bool,
    /// Four descending category bounds, e.g. 5,2.5,0,-2.5.
    #[arg(long, value_parser = thresholds, allow_hyphen_values = true)]
    thresholds: Option<[f64; 4]>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    momentum: Option<f64>,
    /// f32 or f64.
    #[arg(long, value_parser = parse_setting::<PrecisionSetting>)]
    precision: Option<PrecisionSetting>,
    #[arg(long)]
    conv1: Option<usize>,
    #[arg(long)]
    conv2: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    /// relu or tanh.
    #[arg(long, value_parser = parse_setting::<ActivationSetting>)]
    activation: Option<ActivationSetting>,
}

impl ExperimentArgs {
    fn overrides(&self) -> ExperimentOverrides {
        ExperimentOverrides {
            id: self.id,
            target: self.target,
            inputs: self.inputs.clone(),
            knockout: self.knockout,
            training_years: self.training_years,
            labeling_years: self.labeling_years,
            c_t: self.c_t,
            seed: self.seed,
            scaling: self.scaling,
            quantize: self.quantize,
            shuffle_labels: self.shuffle_labels.then_some(true),
            thresholds: self.thresholds,
            train: TrainOverrides {
                epochs: self.epochs,
                base_lr: self.lr,
                decay_gamma: self.gamma,
                batch_size: self.batch_size,
                momentum: self.momentum,
                precision: self.precision,
                conv1_filters: self.conv1,
                conv2_filters: self.conv2,
                hidden: self.hidden,
                activation: self.activation,
            },
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Generator spec (TOML); without it a default spec is used.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    cells: usize,
    #[arg(long, default_value_t = 50)]
    years: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print the resolved generator spec and exit.
    #[arg(long)]
    print_spec: bool,
    /// Also write the planted per-cell trends as JSON.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    cube: Option<PathBuf>,
    #[arg(long)]
    cell_id: u32,
    /// Calendar year in which the training period starts.
    #[arg(long)]
    start_year: i32,
    #[command(flatten)]
    exp: ExperimentArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DatasetArgs {
    #[arg(long)]
    cube: Option<PathBuf>,
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory written by `dataset`.
    #[arg(long)]
    dataset: PathBuf,
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Output directory; defaults to the dataset directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Checkpoint written by `train`; defaults to <dataset>/model.ckpt.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SuiteArgs {
    #[arg(long)]
    cube: Option<PathBuf>,
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Run only these experiment ids (comma-separated).
    #[arg(long, value_delimiter = ',')]
    ids: Option<Vec<u32>>,
    /// Keep each experiment's manifest, checkpoint and predictions.
    #[arg(long)]
    artifacts: bool,
    /// With --artifacts, also keep each image cache.
    #[arg(long)]
    save_images: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    cube: Option<PathBuf>,
    #[command(flatten)]
    exp: ExperimentArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    /// predictions.tsv from `eval` or a suite artifact directory.
    #[arg(long)]
    predictions: PathBuf,
    /// predicted, truth or errors.
    #[arg(long, default_value = "errors")]
    kind: String,
    /// Only records of this split (train, validation, test).
    #[arg(long)]
    split: Option<String>,
    /// Training-period start year to draw; defaults to the latest present.
    #[arg(long)]
    year: Option<i32>,
    /// Degrees per pixel.
    #[arg(long, default_value_t = 0.5)]
    resolution: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// report.json written by `suite`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

struct Context {
    config: RunConfig,
    threads: usize,
}

impl Context {
    fn cube_path(&self, arg: &Option<PathBuf>) -> Result<PathBuf> {
        arg.clone()
            .or_else(|| self.config.cube.clone())
            .ok_or_else(|| {
                Error::Config("no cube given (--cube or `cube` in the config file)".into())
            })
    }

    fn out_path(&self, arg: &Option<PathBuf>) -> Result<PathBuf> {
        arg.clone()
            .or_else(|| self.config.out.clone())
            .ok_or_else(|| {
                Error::Config("no output path given (--out or `out` in the config file)".into())
            })
    }

    /// Defaults, then the config file, then the command line. An id within
    /// the table supplies its inputs unless inputs are given explicitly.
    fn spec(&self, base: ExperimentSpec, args: &ExperimentArgs) -> Result<ExperimentSpec> {
        let mut ov = self.config.experiment.clone();
        ov.merge(&args.overrides());
        let mut spec = base;
        if let (Some(id), None) = (ov.id, &ov.inputs) {
            if let Some(inputs) = combinations().get((id as usize).wrapping_sub(1)) {
                spec.inputs = inputs.clone();
            }
        }
        ov.apply(&mut spec);
        if ov.id.is_none() {
            spec.id = combinations()
                .iter()
                .position(|c| *c == spec.inputs)
                .map_or(0, |i| i as u32 + 1);
        }
        spec.validate()?;
        Ok(spec)
    }

    fn resolved(&self, command: &str) -> ResolvedParams {
        ResolvedParams::new(command, self.threads)
    }
}

fn default_spec() -> ExperimentSpec {
    ExperimentSpec::new(
        86,
        Target::Tmp,
        vec![VariableId::Pet, VariableId::Tmp, VariableId::Vap],
    )
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn synth(ctx: &Context, a: &SynthArgs) -> Result<()> {
    let spec = match &a.spec {
        Some(p) => SynthSpec::load(p)?,
        None => SynthSpec::desk_default(a.cells, a.years, a.seed),
    };
    if a.print_spec {
        print!("{}", spec.to_toml());
        return Ok(());
    }
    let out = ctx.out_path(&a.out)?;
    let generated = synth_generate(&spec)?;
    save_cube(&generated.cube, &out)?;
    let mut params = ctx
        .resolved("synth")
        .path("cube", &out)
        .setting("spec", &spec);
    if let Some(t) = &a.truth {
        let text = serde_json::to_string_pretty(&generated.truth).expect("truth serializes");
        write_text(t, &text)?;
        params = params.path("truth", t);
    }
    params.save(sibling(&out, ".resolved.json"))?;
    eprintln!(
        "wrote {} cells x {} years x {} variables to {}",
        spec.n_cells,
        spec.n_years,
        spec.variables.len(),
        out.display()
    );
    Ok(())
}

fn encode(ctx: &Context, a: &EncodeArgs) -> Result<()> {
    let cube = load_cube(ctx.cube_path(&a.cube)?)?;
    let spec = ctx.spec(default_spec(), &a.exp)?;
    let out = ctx.out_path(&a.out)?;
    let cell = cube
        .grid()
        .iter()
        .position(|g| g.cell_id == a.cell_id)
        .ok_or_else(|| Error::Validation(format!("cell {} is not in the cube", a.cell_id)))?;
    let offset = a.start_year - cube.start_year();
    if offset < 0 || (offset as usize + spec.training_years) > cube.n_years() {
        return Err(Error::Domain(format!(
            "training period starting {} is outside the cube",
            a.start_year
        )));
    }
    let window = WindowSpec {
        start_month_index: 12 * offset as usize,
        training_years: spec.training_years,
        labeling_years: spec.labeling_years,
    };
    let stats = global_minmax_of(&cube, &spec.inputs)?;
    let opts = EncodeOptions {
        knockout: spec.knockout,
        scaling: spec.scaling,
        quantize: true,
    };
    let img = encode_window(&cube, cell, &spec.inputs, &window, &stats, &opts)?
        .ok_or_else(|| Error::Dataset("the window contains missing values".into()))?;
    export_png(&img, &out)?;
    ctx.resolved("encode")
        .path("png", &out)
        .setting("cell_id", a.cell_id)
        .setting("start_year", a.start_year)
        .setting("inputs", &spec.inputs)
        .setting("knockout", spec.knockout)
        .setting("scaling", spec.scaling)
        .setting("training_years", spec.training_years)
        .save(sibling(&out, ".resolved.json"))
}

fn dataset(ctx: &Context, a: &DatasetArgs) -> Result<()> {
    let cube_path = ctx.cube_path(&a.cube)?;
    let cube = load_cube(&cube_path)?;
    let spec = ctx.spec(default_spec(), &a.exp)?;
    let out = ctx.out_path(&a.out)?;
    let ds = varenn_core::build_dataset(&cube, &spec)?;
    ds.save(&out)?;
    let mut params = ctx
        .resolved("dataset")
        .path("cube", &cube_path)
        .path("out", &out);
    params.experiment = Some(spec);
    params.save(out.join("resolved.json"))?;
    let h = &ds.manifest.header;
    eprintln!(
        "{} records from {} cells ({} windows excluded); histogram {:?}",
        ds.manifest.records.len(),
        h.selected_cells,
        h.excluded_windows,
        h.histogram
    );
    Ok(())
}

fn spec_from_header(ds: &Dataset) -> ExperimentSpec {
    let h = &ds.manifest.header;
    ExperimentSpec {
        knockout: h.knockout,
        training_years: h.training_years,
        labeling_years: h.labeling_years,
        seed: h.seed,
        c_t: h.c_t,
        shuffle_labels: h.shuffled_labels,
        ..ExperimentSpec::new(h.experiment_id, h.target, h.inputs.clone())
    }
}

fn train(ctx: &Context, a: &TrainArgs) -> Result<()> {
    let ds = Dataset::load(&a.dataset)?;
    let spec = ctx.spec(spec_from_header(&ds), &a.exp)?;
    let out = a.out.clone().unwrap_or_else(|| a.dataset.clone());
    create_dir(&out)?;
    let (model, log) = train_model(&ds, &spec.train, spec.seed)?;
    let ckpt = out.join("model.ckpt");
    std::fs::write(&ckpt, model.to_bytes()).map_err(|e| Error::io(&ckpt, e))?;
    write_text(&out.join("train_log.tsv"), &log.to_tsv())?;
    let mut params = ctx
        .resolved("train")
        .path("dataset", &a.dataset)
        .path("model", &ckpt);
    params.experiment = Some(spec);
    params.save(out.join("train.resolved.json"))?;
    if let Some(last) = log.records.last() {
        eprintln!(
            "{} epochs: train loss {:.4}, validation accuracy {:.4}",
            log.records.len(),
            last.train_loss,
            last.val_accuracy
        );
    }
    Ok(())
}

fn eval(ctx: &Context, a: &EvalArgs) -> Result<()> {
    let ds = Dataset::load(&a.dataset)?;
    let model_path = a
        .model
        .clone()
        .unwrap_or_else(|| a.dataset.join("model.ckpt"));
    let bytes = std::fs::read(&model_path).map_err(|e| Error::io(&model_path, e))?;
    let model = Model::from_bytes(&bytes)?;
    let out = a.out.clone().unwrap_or_else(|| a.dataset.clone());
    create_dir(&out)?;
    let ev = evaluate_model(&model, &ds)?;
    write_text(
        &out.join("predictions.tsv"),
        &predictions_tsv(&ds.manifest.records, &ev.predictions),
    )?;
    let summary = serde_json::json!({
        "confusion": ev.test,
        "accuracy": ev.accuracy,
        "kappa": ev.kappa,
        "held_out_accuracy": ev.held_out_accuracy,
        "majority_prior": ev.majority_prior,
    });
    let json = serde_json::to_string_pretty(&summary).expect("evaluation serializes");
    write_text(&out.join("evaluation.json"), &json)?;
    ctx.resolved("eval")
        .path("dataset", &a.dataset)
        .path("model", &model_path)
        .save(out.join("eval.resolved.json"))?;
    println!(
        "test accuracy {:.4}, weighted kappa {}, held-out accuracy {:.4}",
        ev.accuracy,
        ev.kappa.map_or("NA".to_string(), |k| format!("{k:.4}")),
        ev.held_out_accuracy
    );
    Ok(())
}

fn suite(ctx: &Context, a: &SuiteArgs) -> Result<()> {
    let cube_path = ctx.cube_path(&a.cube)?;
    let cube = load_cube(&cube_path)?;
    let template = ctx.spec(
        ExperimentSpec {
            id: 0,
            ..default_spec()
        },
        &a.exp,
    )?;
    let out = ctx.out_path(&a.out)?;
    create_dir(&out)?;
    let opts = SuiteOptions {
        ids: a.ids.clone().or_else(|| ctx.config.ids.clone()),
        artifacts: (a.artifacts).then(|| out.join("experiments")),
        save_images: a.save_images || ctx.config.save_images.unwrap_or(false),
    };
    let report = run_suite(&cube, &template, &opts)?;
    write_suite_report(&report, &out)?;
    let mut params = ctx
        .resolved("suite")
        .path("cube", &cube_path)
        .path("out", &out)
        .setting("ids", &opts.ids);
    params.experiment = Some(template);
    params.save(out.join("resolved.json"))?;
    print!("{}", suite_summary(&report));
    Ok(())
}

fn ablate(ctx: &Context, a: &AblateArgs) -> Result<()> {
    let cube_path = ctx.cube_path(&a.cube)?;
    let cube = load_cube(&cube_path)?;
    let spec = ctx.spec(default_spec(), &a.exp)?;
    let out = ctx.out_path(&a.out)?;
    create_dir(&out)?;
    let report = run_ablations(&cube, &spec)?;
    let tsv = ablation_tsv(&report);
    write_text(&out.join("ablation.tsv"), &tsv)?;
    write_text(
        &out.join("ablation.json"),
        &serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    let mut params = ctx
        .resolved("ablate")
        .path("cube", &cube_path)
        .path("out", &out);
    params.experiment = Some(spec);
    params.save(out.join("resolved.json"))?;
    print!("{tsv}");
    Ok(())
}

fn render(ctx: &Context, a: &RenderArgs) -> Result<()> {
    let kind = match a.kind.as_str() {
        "predicted" => MapKind::Predicted,
        "truth" => MapKind::Truth,
        "errors" => MapKind::Errors,
        k => return Err(Error::Validation(format!("unknown map kind '{k}'"))),
    };
    let text = std::fs::read_to_string(&a.predictions).map_err(|e| Error::io(&a.predictions, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split('\t').collect();
        let bad = || Error::Format(format!("{} line {}", a.predictions.display(), i + 1));
        if f.len() != 7 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        rows.push((
            f[4].to_string(),
            f[3].parse::<i32>().map_err(|_| bad())?,
            MapRecord {
                lat: num(f[1])?,
                lon: num(f[2])?,
                truth: f[5].parse().map_err(|_| bad())?,
                predicted: f[6].parse().map_err(|_| bad())?,
            },
        ));
    }
    rows.retain(|(split, _, _)| a.split.as_ref().is_none_or(|s| s == split));
    let year = a
        .year
        .or_else(|| rows.iter().map(|r| r.1).max())
        .ok_or_else(|| Error::Validation("no records to render".into()))?;
    let records: Vec<MapRecord> = rows.iter().filter(|r| r.1 == year).map(|r| r.2).collect();
    let raster = render_map(&records, kind, a.resolution)?;
    raster.save_png(&a.out)?;
    ctx.resolved("render")
        .path("predictions", &a.predictions)
        .path("png", &a.out)
        .setting("kind", &a.kind)
        .setting("split", &a.split)
        .setting("year", year)
        .setting("resolution", a.resolution)
        .save(sibling(&a.out, ".resolved.json"))
}

fn report(ctx: &Context, a: &ReportArgs) -> Result<()> {
    let r = load_suite_json(&a.input)?;
    write_suite_report(&r, &a.out)?;
    ctx.resolved("report")
        .path("input", &a.input)
        .path("out", &a.out)
        .save(a.out.join("report.resolved.json"))?;
    print!("{}", suite_summary(&r));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let threads = cli.threads.or(config.threads).unwrap_or(0);
    let ctx = Context { config, threads };
    with_threads(threads, || match &cli.command {
        Command::Synth(a) => synth(&ctx, a),
        Command::Encode(a) => encode(&ctx, a),
        Command::Dataset(a) => dataset(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Suite(a) => suite(&ctx, a),
        Command::Ablate(a) => ablate(&ctx, a),
        Command::Render(a) => render(&ctx, a),
        Command::Report(a) => report(&ctx, a),
    })?
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.json_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
