//! Vulnerability scoping, exemplar mining, prompting, validation and
//! evaluation for LLM-driven patching of C programs.

pub mod diff;
pub mod error;
pub mod eval;
pub mod exemplar;
pub mod gateway;
pub mod model;
pub mod prompting;
pub mod prompts;
pub mod sample;
pub mod scoping;
pub mod validator;

pub use diff::{apply_patch, parse_diff, DiffError, Patch};
pub use error::PipelineError;
pub use eval::{classify_syneq, compute_metrics, Category, MetricsReport, PatchLabel};
pub use exemplar::{Exemplar, ExemplarPool};
pub use gateway::{Exchange, GatewayError, ProviderConfig, ProviderHandle};
pub use model::{DependenceGraph, ExternalFunctions, NodeId, Program, SourceFile, StatementNode};
pub use prompting::{CandidatePatch, RootCause};
pub use prompts::Verdict;
pub use sample::{DatasetSample, PreparedSample};
pub use scoping::{SliceResult, VulnLine, VulnSpec};
pub use validator::ValidationVerdict;
