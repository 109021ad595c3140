//! Sparse coding, dictionary learning and the joint analysis loop.

mod analysis;
mod dictionary;
mod lasso;

pub use analysis::{
    analyze, analyze_fields, build_fields, field_from_signal, pose_step, seed_cloud, signal_matrix, signal_of,
    AnalysisState, Energy, IterationEnergy,
};
pub use dictionary::{
    code_all, dictionary_update, init_dictionary, learn_dictionary, objective_terms, refine_dictionary,
    total_objective, Dictionary, LearningTrace,
};
pub use lasso::{certificate_residual, lasso_code, lasso_objective, SparseCode, CERTIFICATE_TOL};
