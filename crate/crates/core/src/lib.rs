//! Climate time series as images: monthly grids are rasterized into 60×60
//! RGB pictures (months down, years across, one variable per channel),
//! labeled by the change of temperature or precipitation over the following
//! decade, and classified with a LeNet network.
//!
//! The crate covers the whole pipeline: the binary climate cube and its
//! synthetic generator, windowing and labels, image encoding, dataset
//! assembly with grid-level splits, experiment suites over all 92 variable
//! combinations, knockout ablations, statistics and map rendering.

pub mod catalog;
pub mod config;
pub mod cube;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod render;
pub mod report;
pub mod rng;
pub mod runner;
pub mod stats;
pub mod synth;
pub mod window;

pub use catalog::VariableId;
pub use cube::{
    global_minmax, load_cube, save_cube, ClimateCube, GridCell, ScalingStats, ValueRange,
};
pub use dataset::{
    build_dataset, select_grids, split_grids, Dataset, DatasetManifest, SampleRecord, Split,
};
pub use encoder::{compose_rgb, encode_window, Knockout, MonthYearGrid, ScalingMode, VarennImage};
pub use error::{Error, Result};
pub use experiment::{enumerate_combinations, ExperimentSpec, Target, TrainSettings};
pub use runner::{
    run_ablations, run_experiment, run_suite, ExperimentResult, SuiteOptions, SuiteReport,
};
pub use stats::{ConfusionMatrix, KappaWeights, StatTestResult};
pub use synth::{synth_generate, SynthSpec, SynthTruth};
pub use varenn_lenet as lenet;
pub use window::{enumerate_windows, label_pre, label_tmp, trend_delta, LabelCategory, WindowSpec};
