//! Prompt templates and verdict parsing.

use serde::{Deserialize, Serialize};

/// Appended to the mining prompt so that replies can be split mechanically.
pub const SECTIONING_INSTRUCTION: &str =
    "Answer with two sections headed exactly 'ROOT CAUSE:' and 'FIXING STRATEGY:'.";

/// Appended to the patch prompt so that candidate patches can be extracted.
pub const PATCH_FORMAT_INSTRUCTION: &str =
    "Format each patch as a fenced code block headed 'Patch N:' containing a unified diff against the shown line numbers.";

/// Values substituted into the slice-bearing templates.
#[derive(Debug, Clone, Copy)]
pub struct SliceFields<'a> {
    pub slice: &'a str,
    pub cwe_ids: &'a str,
    pub lines: &'a str,
}

fn slice_body(slice: &str) -> &str {
    slice.trim_end_matches('\n')
}

/// Mining prompt: slice, weakness classes, vulnerable lines and the known
/// fix, asking for reasoning from the external inputs onwards.
pub fn exemplar_prompt(f: SliceFields<'_>, patch: &str, external_inputs: &str) -> String {
    format!(
        "Q: Given the following code slice {}, which has a vulnerability among {} and lines {}, the patch is {}. \
         Starting with the external inputs: {}, reason about the vulnerable behavior step by step until the \
         vulnerability is determined.\n{}",
        slice_body(f.slice),
        f.cwe_ids,
        f.lines,
        patch.trim_end_matches('\n'),
        external_inputs,
        SECTIONING_INSTRUCTION
    )
}

pub fn root_cause_prompt(f: SliceFields<'_>, external_inputs: &str) -> String {
    format!(
        "Q: Given the following code slice: {} which has a vulnerability among {} and lines: {}. Starting with \
         the external inputs: {}, reason about the vulnerable behavior step by step until the vulnerability is \
         determined. If you encounter uncertainty due to a lack of function definitions, please tell the functions \
         needed with the format {{\"context_funcs\":[func_1,func_2,CALLER_of_func...]}} where \"CALLER_of_func\" \
         is a placeholder for the caller of the given functions.",
        slice_body(f.slice),
        f.cwe_ids,
        f.lines,
        external_inputs
    )
}

pub fn comparison_prompt(exemplar_root_cause: &str, testing_root_cause: &str) -> String {
    format!(
        "Q: Are the following two root causes similar? {exemplar_root_cause} {testing_root_cause} Please simply answer yes or no."
    )
}

/// One worked example inside the patch prompt.
#[derive(Debug, Clone, Copy)]
pub struct ExemplarFields<'a> {
    pub slice: SliceFields<'a>,
    pub root_cause: &'a str,
    pub fixing_strategy: &'a str,
    pub patch: &'a str,
}

fn patch_question(f: SliceFields<'_>) -> String {
    format!(
        "Q: Given the following code slice: {} which has a vulnerability among {} and lines: {}, please generate \
         five possible patches for the vulnerability.",
        slice_body(f.slice),
        f.cwe_ids,
        f.lines
    )
}

pub fn exemplar_block(e: ExemplarFields<'_>) -> String {
    format!(
        "{} A: Step 1. {}\nStep 2. {}\nStep 3. {}",
        patch_question(e.slice),
        e.root_cause,
        e.fixing_strategy,
        e.patch.trim_end_matches('\n')
    )
}

pub fn patch_prompt(
    exemplars: &[ExemplarFields<'_>],
    f: SliceFields<'_>,
    root_cause: &str,
) -> String {
    let mut out: String = exemplars.iter().map(|e| exemplar_block(*e) + " ").collect();
    out.push_str(&patch_question(f));
    out.push_str(" A: Step 1. ");
    out.push_str(root_cause);
    out.push('\n');
    out.push_str(PATCH_FORMAT_INSTRUCTION);
    out
}

pub fn validation_prompt(f: SliceFields<'_>, patch: &str) -> String {
    format!(
        "Q: Given the following code slice: {} which has a vulnerability among {} and lines: {}. Please validate \
         whether the following patch fixes the vulnerability while keeping the functionality: {}. Please simply \
         answer yes or no.",
        slice_body(f.slice),
        f.cwe_ids,
        f.lines,
        patch.trim_end_matches('\n')
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Yes,
    No,
    Unparseable,
}

impl Verdict {
    pub fn is_yes(self) -> bool {
        self == Verdict::Yes
    }
}

/// Reads the first alphabetic token of a reply, ignoring case.
pub fn parse_verdict(reply: &str) -> Verdict {
    let word: String = reply
        .trim()
        .chars()
        .skip_while(|c| !c.is_alphabetic())
        .take_while(|c| c.is_alphabetic())
        .collect();
    match word.to_lowercase().as_str() {
        "yes" => Verdict::Yes,
        "no" => Verdict::No,
        _ => Verdict::Unparseable,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts() {
        assert_eq!(
            parse_verdict("Yes, the patch bounds the copy."),
            Verdict::Yes
        );
        assert_eq!(parse_verdict("  **NO**."), Verdict::No);
        assert_eq!(parse_verdict("No."), Verdict::No);
        assert_eq!(parse_verdict("Yesterday"), Verdict::Unparseable);
        assert_eq!(parse_verdict("I think yes"), Verdict::Unparseable);
        assert_eq!(parse_verdict(""), Verdict::Unparseable);
    }

    #[test]
    fn templates_carry_the_reasoning_sentence() {
        let f = SliceFields {
            slice: "1: x\n",
            cwe_ids: "CWE-787",
            lines: "1",
        };
        let sentence = "reason about the vulnerable behavior step by step until the vulnerability is determined";
        assert!(exemplar_prompt(f, "@@", "1: x").contains(sentence));
        assert!(root_cause_prompt(f, "1: x").contains(sentence));
        assert!(root_cause_prompt(f, "")
            .contains(r#"{"context_funcs":[func_1,func_2,CALLER_of_func...]}"#));
    }

    #[test]
    fn patch_prompt_without_exemplars_starts_with_question() {
        let f = SliceFields {
            slice: "1: x",
            cwe_ids: "CWE-787",
            lines: "1",
        };
        let p = patch_prompt(&[], f, "rc");
        assert!(p.starts_with("Q: Given the following code slice: 1: x which"));
        assert!(p.ends_with(PATCH_FORMAT_INSTRUCTION));
        let e = ExemplarFields {
            slice: f,
            root_cause: "r",
            fixing_strategy: "s",
            patch: "d\n",
        };
        let p = patch_prompt(&[e], f, "rc");
        assert!(p.contains("Step 3. d Q: Given"));
    }
}
