//! Multi-provider patch validation.

use serde::{Deserialize, Serialize};

use crate::error::PipelineError;
use crate::gateway::ProviderHandle;
use crate::prompting::CandidatePatch;
use crate::prompts::{parse_verdict, validation_prompt, SliceFields, Verdict};
use crate::scoping::{RenderedSlice, VulnSpec};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatorAnswer {
    pub provider_id: String,
    pub answer: Verdict,
    /// Set when the provider failed; the answer is then `no`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationVerdict {
    pub ordinal: u32,
    pub answers: Vec<ValidatorAnswer>,
    /// At least one validator answered yes.
    pub retained: bool,
}

/// Asks one validator about one patch. A failed call counts as `no` and its
/// message is returned alongside.
pub fn validate_patch(
    provider: &ProviderHandle,
    rendered: &RenderedSlice,
    spec: &VulnSpec,
    patch: &CandidatePatch,
) -> ValidatorAnswer {
    let (cwe, lines) = (spec.cwe_text(), spec.lines_text());
    let prompt = validation_prompt(
        SliceFields {
            slice: &rendered.text,
            cwe_ids: &cwe,
            lines: &lines,
        },
        &patch.diff,
    );
    let (answer, error) = match provider.complete(&prompt) {
        Ok(ex) => {
            let v = parse_verdict(&ex.response);
            if v == Verdict::Unparseable {
                tracing::warn!(
                    provider = provider.id(),
                    ordinal = patch.ordinal,
                    "unparseable verdict counted as no"
                );
            }
            (v, None)
        }
        Err(e) => {
            tracing::warn!(provider = provider.id(), ordinal = patch.ordinal, error = %e, "validator failed");
            (Verdict::No, Some(e.to_string()))
        }
    };
    ValidatorAnswer {
        provider_id: provider.id().to_string(),
        answer,
        error,
    }
}

/// Runs every validator over every patch. Validators run concurrently, each
/// one walking the patches in ordinal order; answers are reported in
/// validator order so results do not depend on scheduling.
pub fn validate_all(
    patches: &[CandidatePatch],
    validators: &[&ProviderHandle],
    rendered: &RenderedSlice,
    spec: &VulnSpec,
) -> Result<Vec<ValidationVerdict>, PipelineError> {
    if validators.is_empty() {
        return Err(PipelineError::Config("no validator configured".into()));
    }
    let per_validator: Vec<Vec<ValidatorAnswer>> = std::thread::scope(|s| {
        let handles: Vec<_> = validators
            .iter()
            .map(|v| {
                s.spawn(move || {
                    patches
                        .iter()
                        .map(|p| validate_patch(v, rendered, spec, p))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("validator thread panicked"))
            .collect()
    });
    Ok(patches
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let answers: Vec<ValidatorAnswer> =
                per_validator.iter().map(|a| a[i].clone()).collect();
            ValidationVerdict {
                ordinal: p.ordinal,
                retained: answers.iter().any(|a| a.answer.is_yes()),
                answers,
            }
        })
        .collect())
}
