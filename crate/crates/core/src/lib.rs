//! Conformal prediction sets for classification when the label space is open:
//! closed-set split conformal sets, Good-Turing tests for unseen labels, a
//! selective calibration split with its weights, and the experiment harness.

pub mod closed_set;
pub mod csv_io;
pub mod data;
pub mod error;
pub mod good_turing;
pub mod models;
pub mod open_set;
pub mod selective_split;
pub mod simulation;

pub use closed_set::{
    aps_score, aps_scores, calibrate_threshold, closed_set_predict, conformal_pvalue, plug_in_predict,
    plug_in_predictor, smooth_unseen_probs, ApsConfig, CalibrationRecord, ClosedSetConfig, ClosedSetPredictor,
    LabelPValues, SplitConformal, UnseenSmoothing,
};
pub use data::{
    frequency_profile, label_count, observed_label_space, FrequencyProfile, Label, LabelTable, LabeledDataset,
    PredictionSet, RandomSource, Stream,
};
pub use error::{Error, Result};
pub use good_turing::{
    fit_frequency_scorer, gt_pvalue, power_law_weights, rgt_pvalue, seen_pvalue, xgt_pvalue, FrequencyScorer,
    GoodTuringTests, GtConfig, PValueVariant, PowerLawWeights, XgtPValue, XgtTester,
};
pub use models::{KnnClassifier, LofScorer, Metric};
pub use open_set::{
    allocation_loss, cardinality, cgtc_predict, tune_allocation, AlphaAllocation, Branch, CgtcEvaluation, CgtcModel,
    PipelineConfig, SplitStrategy, TuningConfig, TuningResult,
};
pub use selective_split::{
    make_policy, random_split, selective_split, weighted_predict, weighted_predictor, weights_fast, weights_naive,
    ConformalizationWeights, InclusionPolicy, SplitAssignment, WeightedSplitConformal,
};
pub use simulation::{
    dp_sample, evaluate_prediction, frequency_bin, new_label_probability, run_experiment, AllocationMode,
    DataSource, DpConfig, DpSample, Estimate, ExperimentMetrics, ExperimentSpec, FiniteConfig, FrequencyBins,
    Method, RepMetrics, TestPoint,
};
