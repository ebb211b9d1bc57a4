//! Evaluation: accuracy, uncertainty correlations, calibration, concept
//! interventions, quadrant routing and proxy annotator agreement.

mod eval;
mod intervene;
mod route;
mod stats;
pub mod table;

pub use eval::{
    evaluate, evaluate_inferences, evaluate_with, mean_interval_width, AleReference, ConceptCorrelation, EvalReport,
    ECE_BINS,
};
pub use intervene::{intervene, intervene_inferences, InterventionConfig, InterventionReport, Selection, Strategy};
pub use route::{
    proxy_iaa, proxy_iaa_inferences, quadrant_report, route, route_inferences, ConceptAgreement, IaaReport,
    QuadrantReport, QuadrantRow, RoutedExample,
};
pub use stats::{
    average_ranks, binarize_at_median, cohen_kappa, correlation_p_value, ece, krippendorff_alpha, median, pearson,
    spearman, Agreement, Correlation,
};
