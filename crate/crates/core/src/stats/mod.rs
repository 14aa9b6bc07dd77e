//! Questionnaire analysis: factor scoring, the Wilcoxon signed-rank test with
//! Hodges-Lehmann intervals and effect sizes, a rank-based ANOVA-type test
//! for the condition × order interaction, and the hypothesis decisions.

mod ats;
mod report;
mod scoring;
mod wilcoxon;

pub use ats::{ats_interaction, permutation_interaction, AtsMethod, AtsResult, SubjectScores};
pub use report::{analyze, evaluate_hypotheses, Direction, FactorReport, HypothesisDecision, Report};
pub use scoring::{read_responses, score_factors, Factor, FactorItem, FactorMap, FactorScores, QuestionnaireResponse, Scale};
pub use wilcoxon::{
    average_ranks, effect_label, hodges_lehmann_ci, signed_rank_null_counts, wilcoxon_signed_rank, EffectLabel,
    PValueMethod, TestResult, EXACT_LIMIT,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} nonzero pairs, got {got}")]
    TooFewPairs { needed: usize, got: usize },
    #[error("participant {participant}: missing item '{item}'")]
    MissingItem { participant: String, item: String },
    #[error("participant {participant}: item '{item}' score {score} outside {min}..={max}")]
    OutOfRange { participant: String, item: String, score: i64, min: i64, max: i64 },
    #[error("participant {participant} answered {condition} twice")]
    Duplicate { participant: String, condition: String },
    #[error("participant {0} lacks one of the two conditions")]
    Unpaired(String),
    #[error("factor map: {0}")]
    FactorMap(String),
    #[error("responses: {0}")]
    Input(String),
    #[error("design: {0}")]
    Design(String),
    #[error("no result for factor '{0}'")]
    MissingFactor(String),
}
