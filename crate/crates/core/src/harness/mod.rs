//! Data generation, IDX ingestion and experiment orchestration.

mod data;
mod experiment;

pub use data::{
    generate_cluster_dataset, generate_spectral_matrix, load_idx, parse_idx_images, parse_idx_labels, spectrum,
    CENTROID_SCALE, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
pub use experiment::{
    decomposition_residual, run_experiment, run_experiment_to_file, run_tasks, spec_from_report, worker_limit, Cell,
    ExperimentKind, ExperimentSpec, Report, ReportFormat, ReportRow, COMMON_COLUMNS, CONFIG_PREFIX, WORKERS_ENV,
};
