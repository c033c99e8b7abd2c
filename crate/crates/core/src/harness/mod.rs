//! Dataset ingestion, metrics, experiment orchestration and reports.

mod experiment;
mod io;
mod metrics;
mod report;
mod synth;
mod verify;

pub use experiment::{
    run_experiment, train_generators, train_models, AttackSpec, DatasetSource, ExperimentConfig, GammaChoice, GeneratorSource, InteractionConfig,
    ModelEntry, SweepConfig, DEFAULT_SWEEP,
};
pub use io::{load_cifar_binary, load_idx, write_cifar_binary, write_idx};
pub use metrics::{compute_metrics, histogram, histogram_in, median, HistogramBin, Metrics};
pub use report::{
    aggregate, emit_report, histogram_rows, interaction_medians, read_metrics, AggregateRow, ExampleRow,
    ExperimentReport, GammaSelection, GeneratorStats, GridPoint, HistogramRow, InteractionRow, MetricsRow,
    ModelRecord, SweepRow,
};
pub use synth::{synth_dataset, SynthKind};
pub use verify::{verify_properties, PropertyCheck};
