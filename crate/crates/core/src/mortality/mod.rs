//! Distribution-valued responses from lifetables: age-at-death quantile
//! functions, Fréchet R², split-based prediction error and the end-to-end
//! model comparison.

mod lifetable;
mod metrics;
mod pipeline;
mod synthetic;

pub use lifetable::{age_histogram, lifetable_to_quantile, silverman_bandwidth, Lifetable, Smoothing, RADIX};
pub use metrics::{
    frechet_r2, mspe_splits, sample_frechet_mean_wasserstein, split_indices, FsiModel, GlobalFrechetModel,
    LocalFrechetModel, MspeReport, MspeSummary, SampleMeanModel, SplitModel, SplitRecord,
};
pub use pipeline::{
    read_lifetables, run_mortality_pipeline, write_mortality_outputs, CovariateTable, ModelRow, MortalityConfig,
    MortalityReport, WhatIfRow, DEFAULT_COVARIATES,
};
pub use synthetic::{
    generate_synthetic_mortality, synthetic_link, write_synthetic_mortality, SyntheticMortality, SyntheticTruth,
    SYNTH_AGE_RANGE,
};
