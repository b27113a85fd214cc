//! Entailment-tree reasoning over grounded evidence.
//!
//! A hypothesis is decomposed into a tree of simpler claims, each leaf is
//! scored against observations drawn from text, transcripts, images or video
//! with an anchor-and-adjust prompt, and leaf scores are combined into a
//! probability for the root by the chain rule. Multiple-choice questions get
//! one tree per option with shared leaves pruned and every score conditioned
//! on exactly one option being true.
//!
//! Model calls go through the traits in [`backends`]; the bundled mock makes
//! every pipeline deterministic.

pub mod backends;
pub mod config;
pub mod counterfactual;
pub mod decomposer;
pub mod error;
pub mod evidence;
pub mod inference;
pub mod model;
pub mod prompts;
pub mod retriever;
pub mod run;
pub mod scalar;
pub mod scorer;

/// Probabilities and scores throughout the pipeline.
pub type Prob = f64;

/// Frame-sampling parameters in floating point, as read from config files.
pub type FrameParams = evidence::FrameSamplingParams<f64>;
/// Frame-sampling parameters with exact rational thresholds.
pub type ExactFrameParams = evidence::FrameSamplingParams<Ratio>;
/// Exact rational scalar for the generic numeric kernels.
pub type Ratio = num_rational::Ratio<i64>;

pub use backends::{BackendError, BackendRegistry, Backends, MockScript};
pub use config::{Aggregation, ConfigFile, RunConfig};
pub use counterfactual::{answer_mcq, rescale_evidence, EvidenceInput, McqRun};
pub use decomposer::build_tree;
pub use error::{Error, ParseError, Result};
pub use evidence::{build_bank, frame_count, ExtractionFocus};
pub use inference::{aggregate_mean, infer, repropagate};
pub use model::{Claim, EvidenceBank, EvidenceFactor, ScoreTrace, SourceDescriptor, TreeNode};
pub use run::{score_hypothesis, RunDocument, TreeRun};
pub use scorer::{parse_score_trace, score_claim};
