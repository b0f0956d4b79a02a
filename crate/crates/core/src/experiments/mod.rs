//! Dataset generation and ingestion, evaluation metrics, and the LDL and
//! spectrum studies built on top of the models.

mod dataset;
mod fit;
mod metrics;
mod studies;

pub use dataset::{
    dataset_id, generate_filtered_suite, generate_synthetic_suite, load_tabular, synthetic_test_design,
    synthetic_train_design, Dataset, Manifest, Split, SplitRatios, DEFAULT_SIGMA_EPS, N_TEST, N_TRAIN_RANDOM,
};
pub use metrics::{
    delta_csv, delta_metrics, delta_table, evaluate_bnn, evaluate_nngp, metric_line, metrics_csv, parse_delta_csv,
    parse_metrics_csv, predictive_metrics, read_metrics_csv, DeltaSummary, MetricRow, ModelTag, NllMode, DELTA_HEADER,
    METRICS_HEADER,
};
pub use studies::{
    empirical_cdf, hyper_grid, ldl_cdf_study, ldl_csv, nngp_model_select, primary_hyper, spectrum_functions,
    spectrum_lines, spectrum_study, LdlGenerator, LdlRow, SpectrumSource, LDL_HEADER, SPECTRUM_HEADER,
};
pub use fit::{fit_bnn, fit_limiting_nngp, BnnFit, FilterSetting};
