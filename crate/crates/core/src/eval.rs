//! Patch classification and recall/precision/F1 metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff::apply_patch;
use crate::model::SourceFile;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("label for unknown sample `{0}`")]
    UnknownSample(String),
    #[error("label for unknown patch {ordinal} of sample `{sample_id}`")]
    UnknownPatch { sample_id: String, ordinal: u32 },
    #[error("conflicting {label_source} labels for patch {ordinal} of sample `{sample_id}`: {first} vs {second}")]
    Conflict {
        sample_id: String,
        ordinal: u32,
        label_source: LabelSource,
        first: Category,
        second: Category,
    },
    #[error("labels line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Patch category. Declaration order is specificity: earlier wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    SynEq,
    SemEq,
    Plausible,
    Incorrect,
}

impl Category {
    pub fn is_correct(self) -> bool {
        self != Category::Incorrect
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    Auto,
    Human,
}

impl fmt::Display for LabelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelSource::Auto => "auto",
            LabelSource::Human => "human",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchLabel {
    pub sample_id: String,
    pub ordinal: u32,
    pub category: Category,
    #[serde(default = "human")]
    pub source: LabelSource,
}

fn human() -> LabelSource {
    LabelSource::Human
}

/// Reads JSON-lines labels; blank lines are skipped.
pub fn parse_labels(text: &str) -> Result<Vec<PatchLabel>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::Format {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Removes `//` and `/* */` comments, leaving string and character
/// literals intact.
fn strip_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' | '\'' => {
                out.push(c);
                while let Some(d) = chars.next() {
                    out.push(d);
                    if d == '\\' {
                        if let Some(e) = chars.next() {
                            out.push(e);
                        }
                    } else if d == c || d == '\n' {
                        break;
                    }
                }
            }
            '/' if chars.peek() == Some(&'/') => {
                for d in chars.by_ref() {
                    if d == '\n' {
                        out.push('\n');
                        break;
                    }
                }
            }
            '/' if chars.peek() == Some(&'*') => {
                chars.next();
                let mut prev = ' ';
                for d in chars.by_ref() {
                    if d == '\n' {
                        out.push('\n');
                    }
                    if prev == '*' && d == '/' {
                        break;
                    }
                    prev = d;
                }
                out.push(' ');
            }
            _ => out.push(c),
        }
    }
    out
}

/// Comment-free text with whitespace runs collapsed to one space, lines
/// trimmed and blank lines dropped.
pub fn normalize(text: &str) -> String {
    strip_comments(text)
        .lines()
        .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynEqOutcome {
    pub equal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn patched_normalized(
    sources: &[SourceFile],
    diff: &str,
) -> Result<BTreeMap<String, String>, String> {
    let patched = apply_patch(sources, diff).map_err(|e| e.to_string())?;
    Ok(patched
        .into_iter()
        .map(|f| (f.path, normalize(&f.text)))
        .collect())
}

/// Applies both diffs to `sources` and compares the normalized results.
/// A diff that does not apply makes the outcome false with a note.
pub fn classify_syneq(sources: &[SourceFile], patch: &str, ground_truth: &str) -> SynEqOutcome {
    let a = patched_normalized(sources, patch);
    let b = patched_normalized(sources, ground_truth);
    match (a, b) {
        (Ok(a), Ok(b)) => SynEqOutcome {
            equal: a == b,
            note: None,
        },
        (Err(e), _) => SynEqOutcome {
            equal: false,
            note: Some(format!("patch does not apply: {e}")),
        },
        (_, Err(e)) => SynEqOutcome {
            equal: false,
            note: Some(format!("ground truth does not apply: {e}")),
        },
    }
}

/// One category per patch. Labels from the same source must agree; across
/// sources the most specific category wins.
pub fn merge_labels(labels: &[PatchLabel]) -> Result<BTreeMap<(String, u32), Category>, EvalError> {
    let mut by_source: BTreeMap<(String, u32, LabelSource), Category> = BTreeMap::new();
    for l in labels {
        let key = (l.sample_id.clone(), l.ordinal, l.source);
        match by_source.get(&key) {
            Some(&first) if first != l.category => {
                return Err(EvalError::Conflict {
                    sample_id: l.sample_id.clone(),
                    ordinal: l.ordinal,
                    label_source: l.source,
                    first,
                    second: l.category,
                })
            }
            _ => {
                by_source.insert(key, l.category);
            }
        }
    }
    let mut merged: BTreeMap<(String, u32), Category> = BTreeMap::new();
    for ((s, o, _), c) in by_source {
        merged
            .entry((s, o))
            .and_modify(|m| *m = (*m).min(c))
            .or_insert(c);
    }
    Ok(merged)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub fixed_samples: usize,
    pub patches: usize,
}

/// Harmonic mean of recall and precision; zero if either is zero.
pub fn f1(recall: f64, precision: f64) -> f64 {
    if recall <= 0.0 || precision <= 0.0 {
        0.0
    } else {
        2.0 * recall * precision / (recall + precision)
    }
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

impl CategoryMetrics {
    pub fn from_counts(
        fixed_samples: usize,
        samples: usize,
        patches: usize,
        generated: usize,
    ) -> Self {
        let (recall, precision) = (ratio(fixed_samples, samples), ratio(patches, generated));
        Self {
            recall,
            precision,
            f1: f1(recall, precision),
            fixed_samples,
            patches,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub syn_eq: CategoryMetrics,
    pub sem_eq: CategoryMetrics,
    pub plausible: CategoryMetrics,
    pub correct: CategoryMetrics,
    pub testing_samples: usize,
    pub fixed_samples: usize,
    pub generated_patches: usize,
    pub correct_patches: usize,
}

impl MetricsReport {
    pub fn rows(&self) -> [(&'static str, &CategoryMetrics); 4] {
        [
            ("SynEq", &self.syn_eq),
            ("SemEq", &self.sem_eq),
            ("Plausible", &self.plausible),
            ("Correct", &self.correct),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,recall,precision,f1,fixed_samples,patches\n");
        for (name, m) in self.rows() {
            out.push_str(&format!(
                "{name},{:.6},{:.6},{:.6},{},{}\n",
                m.recall, m.precision, m.f1, m.fixed_samples, m.patches
            ));
        }
        out
    }
}

/// Computes per-category metrics. `generated` maps every testing sample to
/// the ordinals of its generated patches (empty for samples that produced
/// none); unlabelled patches count as incorrect.
pub fn compute_metrics(
    generated: &BTreeMap<String, BTreeSet<u32>>,
    labels: &BTreeMap<(String, u32), Category>,
) -> Result<MetricsReport, EvalError> {
    for (sample_id, ordinal) in labels.keys() {
        let Some(ords) = generated.get(sample_id) else {
            return Err(EvalError::UnknownSample(sample_id.clone()));
        };
        if !ords.contains(ordinal) {
            return Err(EvalError::UnknownPatch {
                sample_id: sample_id.clone(),
                ordinal: *ordinal,
            });
        }
    }
    let samples = generated.len();
    let total: usize = generated.values().map(BTreeSet::len).sum();
    let metrics = |pred: &dyn Fn(Category) -> bool| {
        let mut fixed = 0;
        let mut patches = 0;
        for (s, ords) in generated {
            let n = ords
                .iter()
                .filter(|o| labels.get(&(s.clone(), **o)).is_some_and(|c| pred(*c)))
                .count();
            patches += n;
            fixed += usize::from(n > 0);
        }
        CategoryMetrics::from_counts(fixed, samples, patches, total)
    };
    let correct = metrics(&|c| c.is_correct());
    Ok(MetricsReport {
        syn_eq: metrics(&|c| c == Category::SynEq),
        sem_eq: metrics(&|c| c == Category::SemEq),
        plausible: metrics(&|c| c == Category::Plausible),
        correct,
        testing_samples: samples,
        fixed_samples: correct.fixed_samples,
        generated_patches: total,
        correct_patches: correct.patches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gen(spec: &[(&str, u32)]) -> BTreeMap<String, BTreeSet<u32>> {
        spec.iter()
            .map(|(s, n)| (s.to_string(), (1..=*n).collect()))
            .collect()
    }

    fn label(s: &str, o: u32, c: Category, source: LabelSource) -> PatchLabel {
        PatchLabel {
            sample_id: s.into(),
            ordinal: o,
            category: c,
            source,
        }
    }

    #[test]
    fn two_sample_example() {
        let labels = merge_labels(&[label("a", 2, Category::SemEq, LabelSource::Human)]).unwrap();
        let r = compute_metrics(&gen(&[("a", 5), ("b", 5)]), &labels).unwrap();
        assert_eq!(r.correct.recall, 0.5);
        assert_eq!(r.correct.precision, 0.1);
        assert!((r.correct.f1 - 0.1 / 0.6).abs() < 1e-12);
        assert_eq!(r.syn_eq.f1, 0.0);
    }

    #[test]
    fn empty_generation() {
        let r = compute_metrics(&gen(&[("a", 0)]), &BTreeMap::new()).unwrap();
        assert_eq!(
            (r.correct.recall, r.correct.precision, r.correct.f1),
            (0.0, 0.0, 0.0)
        );
        let r = compute_metrics(&BTreeMap::new(), &BTreeMap::new()).unwrap();
        assert_eq!(r.testing_samples, 0);
    }

    #[test]
    fn label_checks() {
        let bad = merge_labels(&[label("z", 1, Category::SemEq, LabelSource::Human)]).unwrap();
        assert_eq!(
            compute_metrics(&gen(&[("a", 1)]), &bad),
            Err(EvalError::UnknownSample("z".into()))
        );
        let bad = merge_labels(&[label("a", 4, Category::SemEq, LabelSource::Human)]).unwrap();
        assert!(matches!(
            compute_metrics(&gen(&[("a", 1)]), &bad),
            Err(EvalError::UnknownPatch { .. })
        ));
        let conflict = [
            label("a", 1, Category::SemEq, LabelSource::Human),
            label("a", 1, Category::Plausible, LabelSource::Human),
        ];
        assert!(matches!(
            merge_labels(&conflict),
            Err(EvalError::Conflict { .. })
        ));
        let layered = [
            label("a", 1, Category::Plausible, LabelSource::Human),
            label("a", 1, Category::SynEq, LabelSource::Auto),
            label("a", 1, Category::Plausible, LabelSource::Human),
        ];
        assert_eq!(
            merge_labels(&layered).unwrap()[&("a".into(), 1)],
            Category::SynEq
        );
    }

    #[test]
    fn labels_file_defaults_to_human() {
        let l =
            parse_labels("{\"sample_id\":\"a\",\"ordinal\":1,\"category\":\"SemEq\"}\n\n").unwrap();
        assert_eq!(l[0].source, LabelSource::Human);
        assert!(matches!(
            parse_labels("{}\n"),
            Err(EvalError::Format { line: 1, .. })
        ));
    }

    #[test]
    fn normalization() {
        let a = "int f() {\n    x = 1; // set\n\n  /* multi\n line */ return   x;\n}\n";
        let b = "int f() {\nx = 1;\n return x;\n}";
        assert_eq!(normalize(a), normalize(b));
        assert_eq!(
            normalize("p = \"// not a comment\";"),
            "p = \"// not a comment\";"
        );
    }

    #[test]
    fn syneq_reports_apply_failures() {
        let src = [SourceFile::new("a.c", "int x;\nint y;\n")];
        let gt = "@@ -2 +2 @@\n-int y;\n+int   y = 0;\n";
        assert!(classify_syneq(&src, "@@ -2 +2 @@\n-int y;\n+int y = 0;\n", gt).equal);
        let out = classify_syneq(&src, "@@ -2 +2 @@\n-int z;\n+int y = 0;\n", gt);
        assert!(!out.equal);
        assert!(out.note.unwrap().contains("patch does not apply"));
    }

    proptest! {
        #[test]
        fn harmonic_bounds(samples in 1usize..200, fixed_frac in 0.0f64..=1.0, gen_n in 1usize..1000, corr_frac in 0.0f64..=1.0) {
            let fixed = (samples as f64 * fixed_frac) as usize;
            let patches = (gen_n as f64 * corr_frac) as usize;
            let m = CategoryMetrics::from_counts(fixed, samples, patches, gen_n);
            prop_assert!((0.0..=1.0).contains(&m.f1));
            prop_assert!(m.f1 <= m.recall.max(m.precision) + 1e-12);
            prop_assert!(m.f1 <= 2.0 * m.recall.min(m.precision) + 1e-12);
            if m.recall == 0.0 || m.precision == 0.0 {
                prop_assert_eq!(m.f1, 0.0);
            }
        }

        #[test]
        fn correct_dominates_each_category(cats in proptest::collection::vec(0u8..4, 0..40)) {
            let cat = |n: u8| [Category::SynEq, Category::SemEq, Category::Plausible, Category::Incorrect][n as usize];
            let generated: BTreeMap<String, BTreeSet<u32>> =
                cats.chunks(5).enumerate().map(|(i, c)| (format!("s{i}"), (1..=c.len() as u32).collect())).collect();
            let labels: BTreeMap<(String, u32), Category> = cats
                .chunks(5)
                .enumerate()
                .flat_map(|(i, c)| c.iter().enumerate().map(move |(j, n)| ((format!("s{i}"), j as u32 + 1), cat(*n))))
                .collect();
            let r = compute_metrics(&generated, &labels).unwrap();
            for (_, m) in &r.rows()[..3] {
                prop_assert!(r.correct.patches >= m.patches);
                prop_assert!(r.correct.recall >= m.recall);
            }
            prop_assert_eq!(r.correct.patches, r.syn_eq.patches + r.sem_eq.patches + r.plausible.patches);
        }
    }
}
