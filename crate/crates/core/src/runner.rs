//! Runs single experiments, 92-combination suites and ablation tables.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use varenn_lenet::{LabeledImages, Model, TrainLog};

use crate::catalog::VariableId;
use crate::cube::ClimateCube;
use crate::dataset::{build_dataset, Dataset, SampleRecord, Split};
use crate::encoder::{horizontally_striped, vertically_striped, Knockout};
use crate::error::{Error, Result};
use crate::experiment::{enumerate_combinations, ExperimentSpec, Target, TrainSettings};
use crate::stats::{
    accuracy, experiment_similarity, kruskal_wallis, mann_whitney_u, ols_regression,
    weighted_kappa, ConfusionMatrix, KappaWeights, OlsFit, SimilarityMatrix, StatTestResult,
    CLASSES,
};
use crate::window::enumerate_windows;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub id: u32,
    pub target: Target,
    pub inputs: Vec<VariableId>,
    pub knockout: Knockout,
    pub training_years: usize,
    pub samples: SplitCounts,
    /// Test-split confusion matrix.
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    /// Quadratic weighted kappa; absent when the marginals are degenerate.
    pub kappa: Option<f64>,
    /// Accuracy over validation and test records together.
    pub held_out_accuracy: f64,
    /// Largest class share among all records.
    pub majority_prior: f64,
    pub final_train_loss: f64,
}

/// A finished experiment with everything needed to reproduce its outputs.
#[derive(Debug)]
pub struct ExperimentRun {
    pub result: ExperimentResult,
    pub model: Model,
    pub log: TrainLog,
    pub dataset: Dataset,
    /// Predicted class index for every record, in manifest order.
    pub predictions: Vec<usize>,
}

impl ExperimentRun {
    /// Writes the manifest, image cache, checkpoint, training log and
    /// result into `dir`.
    pub fn write_artifacts(&self, dir: &Path, with_images: bool) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.dataset
            .manifest
            .save(dir.join(Dataset::MANIFEST_FILE))?;
        if with_images {
            self.dataset.images.save(dir.join(Dataset::IMAGES_FILE))?;
        }
        let write = |name: &str, bytes: &[u8]| {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
        };
        write("model.ckpt", &self.model.to_bytes())?;
        write("train_log.tsv", self.log.to_tsv().as_bytes())?;
        let json = serde_json::to_string_pretty(&self.result).expect("result serializes");
        write("result.json", json.as_bytes())?;
        write(
            "predictions.tsv",
            predictions_tsv(&self.dataset.manifest.records, &self.predictions).as_bytes(),
        )
    }
}

/// Runs `f` on a pool of `threads` workers; 0 uses the default pool.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} threads: {e}")))?;
    Ok(pool.install(f))
}

pub const PREDICTIONS_HEADER: &str = "cell_id\tlat\tlon\tstart_year\tsplit\tlabel\tpredicted";

/// One line per record with its true and predicted ordinal.
pub fn predictions_tsv(records: &[SampleRecord], predictions: &[usize]) -> String {
    let mut out = format!("{PREDICTIONS_HEADER}\n");
    for (r, p) in records.iter().zip(predictions) {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.cell_id,
            r.lat,
            r.lon,
            r.start_year,
            split_name(r.split),
            r.label,
            p + 1
        ));
    }
    out
}

pub fn split_name(s: Split) -> &'static str {
    match s {
        Split::Train => "train",
        Split::Validation => "validation",
        Split::Test => "test",
    }
}

fn confusion_over<'a>(records: impl Iterator<Item = (&'a SampleRecord, usize)>) -> ConfusionMatrix {
    let mut cm = ConfusionMatrix::new(CLASSES);
    for (r, p) in records {
        cm.add(r.class_index(), p);
    }
    cm
}

/// Trains a fresh network on the train split, logging validation scores.
pub fn train_model(
    dataset: &Dataset,
    settings: &TrainSettings,
    seed: u64,
) -> Result<(Model, TrainLog)> {
    let arch = settings.architecture();
    let cfg = settings.train_config(seed);
    let per = arch.input_len();
    let (train_x, train_y) = dataset.split_data(Split::Train);
    let (val_x, val_y) = dataset.split_data(Split::Validation);
    let train_set = LabeledImages::new(&train_x, &train_y, per)?;
    let val_set = LabeledImages::new(&val_x, &val_y, per)?;
    Ok(Model::train(&arch, &train_set, &val_set, &cfg)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Predicted class index for every record, in manifest order.
    pub predictions: Vec<usize>,
    pub test: ConfusionMatrix,
    pub accuracy: f64,
    pub kappa: Option<f64>,
    pub held_out_accuracy: f64,
    pub majority_prior: f64,
}

/// Scores every record; accuracy and kappa refer to the test split.
pub fn evaluate_model(model: &Model, dataset: &Dataset) -> Result<Evaluation> {
    let predictions: Vec<usize> = model
        .predict(dataset.images.data())?
        .into_iter()
        .map(|p| p.label)
        .collect();
    let records = &dataset.manifest.records;
    let paired = || records.iter().zip(predictions.iter().copied());
    let test = confusion_over(paired().filter(|(r, _)| r.split == Split::Test));
    let held_out = confusion_over(paired().filter(|(r, _)| r.split != Split::Train));
    if test.n() == 0 {
        return Err(Error::Dataset("test split has no samples".into()));
    }
    let mut class_counts = [0usize; CLASSES];
    for r in records {
        class_counts[r.class_index()] += 1;
    }
    Ok(Evaluation {
        accuracy: accuracy(&test)?,
        kappa: weighted_kappa(&test, KappaWeights::Quadratic).ok(),
        held_out_accuracy: accuracy(&held_out)?,
        majority_prior: *class_counts.iter().max().unwrap() as f64 / records.len() as f64,
        test,
        predictions,
    })
}

/// Trains on the train split and scores every record.
pub fn train_and_evaluate(dataset: Dataset, spec: &ExperimentSpec) -> Result<ExperimentRun> {
    let (model, log) = train_model(&dataset, &spec.train, spec.seed)?;
    let eval = evaluate_model(&model, &dataset)?;
    let count = |s| dataset.manifest.split_records(s).count();
    let result = ExperimentResult {
        id: spec.id,
        target: spec.target,
        inputs: spec.inputs.clone(),
        knockout: spec.knockout,
        training_years: spec.training_years,
        samples: SplitCounts {
            train: count(Split::Train),
            validation: count(Split::Validation),
            test: count(Split::Test),
        },
        confusion: eval.test,
        accuracy: eval.accuracy,
        kappa: eval.kappa,
        held_out_accuracy: eval.held_out_accuracy,
        majority_prior: eval.majority_prior,
        final_train_loss: log.records.last().map_or(0.0, |r| r.train_loss),
    };
    Ok(ExperimentRun {
        result,
        model,
        log,
        dataset,
        predictions: eval.predictions,
    })
}

/// Builds the dataset, trains and evaluates. Errors carry the experiment id.
pub fn run_experiment(cube: &ClimateCube, spec: &ExperimentSpec) -> Result<ExperimentRun> {
    build_dataset(cube, spec)
        .and_then(|ds| train_and_evaluate(ds, spec))
        .map_err(|e| Error::Experiment {
            id: spec.id,
            source: Box::new(e),
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub id: u32,
    pub inputs: Vec<VariableId>,
    pub accuracy: f64,
    pub kappa: Option<f64>,
    pub held_out_accuracy: f64,
    /// Mean distance from the target to the inputs.
    pub similarity: Option<f64>,
    pub samples: SplitCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteFailure {
    pub id: u32,
    pub inputs: Vec<VariableId>,
    pub category: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub group_a: usize,
    pub group_b: usize,
    pub test: StatTestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRegression {
    /// Number of input variables; 0 pools every row.
    pub group: usize,
    pub fit: OlsFit,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub kruskal_wallis: Option<StatTestResult>,
    pub pairwise: Vec<PairwiseTest>,
    pub regressions: Vec<GroupRegression>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub target: Target,
    pub c_t: f64,
    pub seed: u64,
    pub rows: Vec<SuiteRow>,
    pub failures: Vec<SuiteFailure>,
    pub stats: GroupStats,
}

#[derive(Debug, Clone, Default)]
pub struct SuiteOptions {
    /// Restrict the suite to these experiment ids.
    pub ids: Option<Vec<u32>>,
    /// Per-experiment artifacts go to `exp_NNN` subdirectories.
    pub artifacts: Option<PathBuf>,
    pub save_images: bool,
}

/// Group statistics over suite rows: Kruskal-Wallis across k-VAR groups,
/// pairwise Mann-Whitney U with a Bonferroni factor equal to the number of
/// pairs, and accuracy-on-similarity regressions per group and pooled.
pub fn group_statistics(rows: &[SuiteRow]) -> GroupStats {
    let groups: Vec<(usize, Vec<f64>)> = (1..=3)
        .map(|k| {
            let acc = rows
                .iter()
                .filter(|r| r.inputs.len() == k)
                .map(|r| r.accuracy)
                .collect();
            (k, acc)
        })
        .filter(|(_, a): &(usize, Vec<f64>)| !a.is_empty())
        .collect();
    let mut out = GroupStats::default();
    if groups.len() >= 2 {
        let lists: Vec<Vec<f64>> = groups.iter().map(|(_, a)| a.clone()).collect();
        out.kruskal_wallis = kruskal_wallis(&lists).ok();
        let n_pairs = groups.len() * (groups.len() - 1) / 2;
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                if let Ok(test) = mann_whitney_u(&groups[i].1, &groups[j].1, n_pairs) {
                    out.pairwise.push(PairwiseTest {
                        group_a: groups[i].0,
                        group_b: groups[j].0,
                        test,
                    });
                }
            }
        }
    }
    for k in 0..=3 {
        let (x, y): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| k == 0 || r.inputs.len() == k)
            .filter_map(|r| Some((r.similarity?, r.accuracy)))
            .unzip();
        if let Ok(fit) = ols_regression(&x, &y) {
            out.regressions.push(GroupRegression { group: k, fit });
        }
    }
    out
}

/// Runs every combination for `template.target`, optionally a subset.
/// Experiments run in parallel; one failing experiment is recorded and the
/// rest continue.
pub fn run_suite(
    cube: &ClimateCube,
    template: &ExperimentSpec,
    opts: &SuiteOptions,
) -> Result<SuiteReport> {
    let specs: Vec<ExperimentSpec> = enumerate_combinations(template)
        .into_iter()
        .filter(|s| opts.ids.as_ref().is_none_or(|ids| ids.contains(&s.id)))
        .collect();
    let similarity = SimilarityMatrix::from_cube(cube).ok();
    let outcomes: Vec<std::result::Result<SuiteRow, SuiteFailure>> = specs
        .par_iter()
        .map(|spec| {
            let fail = |e: Error| SuiteFailure {
                id: spec.id,
                inputs: spec.inputs.clone(),
                category: e.category().to_string(),
                message: e.to_string(),
            };
            let run = run_experiment(cube, spec).map_err(fail)?;
            if let Some(dir) = &opts.artifacts {
                run.write_artifacts(&dir.join(format!("exp_{:03}", spec.id)), opts.save_images)
                    .map_err(fail)?;
            }
            let r = run.result;
            Ok(SuiteRow {
                id: r.id,
                similarity: similarity.as_ref().and_then(|s| {
                    experiment_similarity(template.target.variable(), &r.inputs, s).ok()
                }),
                inputs: r.inputs,
                accuracy: r.accuracy,
                kappa: r.kappa,
                held_out_accuracy: r.held_out_accuracy,
                samples: r.samples,
            })
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => rows.push(r),
            Err(f) => failures.push(f),
        }
    }
    let stats = group_statistics(&rows);
    Ok(SuiteReport {
        target: template.target,
        c_t: template.c_t,
        seed: template.seed,
        rows,
        failures,
        stats,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub knockout: Knockout,
    pub training_years: usize,
    pub windows_per_cell: usize,
    /// Every image satisfied the stripe pattern its knockout implies.
    pub stripes_verified: bool,
    pub accuracy: f64,
    pub kappa: Option<f64>,
    pub held_out_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub base: ExperimentSpec,
    pub rows: Vec<AblationRow>,
}

pub const ABLATION_TRAINING_YEARS: usize = 10;

/// The four variants of `base`: default encoding, seasonal variation only,
/// interannual variation only, and a 10-year training period.
pub fn ablation_specs(base: &ExperimentSpec) -> Vec<(&'static str, ExperimentSpec)> {
    let with = |knockout, training_years| ExperimentSpec {
        knockout,
        training_years,
        ..base.clone()
    };
    vec![
        ("Default", with(Knockout::None, base.training_years)),
        (
            "Seasonal variations only",
            with(Knockout::SeasonalOnly, base.training_years),
        ),
        (
            "Interannual variations only",
            with(Knockout::InterannualOnly, base.training_years),
        ),
        (
            "10-year training",
            with(Knockout::None, ABLATION_TRAINING_YEARS),
        ),
    ]
}

fn stripes_hold(ds: &Dataset, knockout: Knockout) -> bool {
    (0..ds.images.len()).all(|i| match knockout {
        Knockout::None => true,
        Knockout::SeasonalOnly => horizontally_striped(ds.images.image(i)),
        Knockout::InterannualOnly => vertically_striped(ds.images.image(i)),
    })
}

pub fn run_ablations(cube: &ClimateCube, base: &ExperimentSpec) -> Result<AblationReport> {
    let mut rows = Vec::new();
    for (name, spec) in ablation_specs(base) {
        let wrap = |e: Error| Error::Experiment {
            id: spec.id,
            source: Box::new(e),
        };
        let windows_per_cell =
            enumerate_windows(cube.n_years(), spec.training_years, spec.labeling_years)
                .map_err(wrap)?
                .len();
        let ds = build_dataset(cube, &spec).map_err(wrap)?;
        let stripes_verified = stripes_hold(&ds, spec.knockout);
        if !stripes_verified {
            return Err(wrap(Error::Validation(format!(
                "{name} images are not striped"
            ))));
        }
        let run = train_and_evaluate(ds, &spec).map_err(wrap)?;
        rows.push(AblationRow {
            name: name.to_string(),
            knockout: spec.knockout,
            training_years: spec.training_years,
            windows_per_cell,
            stripes_verified,
            accuracy: run.result.accuracy,
            kappa: run.result.kappa,
            held_out_accuracy: run.result.held_out_accuracy,
        });
    }
    Ok(AblationReport {
        base: base.clone(),
        rows,
    })
}
