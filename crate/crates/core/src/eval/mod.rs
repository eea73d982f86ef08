//! Retrieval recall, accuracy, zero-shot classification by class prompts and
//! linear probing on frozen image embeddings.

mod probe;
mod recall;
mod report;
mod zeroshot;

pub use probe::{train_linear_probe, train_probe_on_embeddings, ProbeConfig, ProbeHead, ProbeOutcome};
pub use recall::{
    rank_of_truth, recall_at_k, retrieval_eval, retrieval_eval_encoded, DirectionalRecall, RecallAt,
    RetrievalDirection, RetrievalReport, DEFAULT_KS,
};
pub use report::{accuracy, per_class_accuracy, ClassAccuracy, EvalReport, EvalTask, SummaryRow};
pub use zeroshot::{class_embeddings, zero_shot_classify, zero_shot_predict, ClassPromptSet};
