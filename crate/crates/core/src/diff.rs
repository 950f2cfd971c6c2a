//! Unified-diff parsing and application.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use crate::model::SourceFile;
use crate::scoping::VulnLine;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DiffError {
    #[error("malformed diff at line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("diff targets `{0}`, which is not among the sources")]
    UnknownTarget(String),
    #[error("diff names no file and there are {0} sources to choose from")]
    AmbiguousTarget(usize),
    #[error("hunk {hunk} does not apply to {file}: context not found near line {line}")]
    ContextMismatch {
        file: String,
        hunk: usize,
        line: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HunkLine {
    Context(String),
    Remove(String),
    Add(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hunk {
    /// 1-based first line in the original file.
    pub old_start: usize,
    pub lines: Vec<HunkLine>,
}

impl Hunk {
    fn old_lines(&self) -> Vec<&str> {
        self.lines
            .iter()
            .filter_map(|l| match l {
                HunkLine::Context(s) | HunkLine::Remove(s) => Some(s.as_str()),
                HunkLine::Add(_) => None,
            })
            .collect()
    }

    fn new_lines(&self) -> Vec<&str> {
        self.lines
            .iter()
            .filter_map(|l| match l {
                HunkLine::Context(s) | HunkLine::Add(s) => Some(s.as_str()),
                HunkLine::Remove(_) => None,
            })
            .collect()
    }

    /// Original lines the hunk touches: every removed line, and for a pure
    /// insertion the line it follows.
    pub fn touched_lines(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut old = self.old_start;
        let mut pending_add = false;
        for l in &self.lines {
            match l {
                HunkLine::Context(_) => {
                    if pending_add {
                        out.push(old.saturating_sub(1).max(1));
                        pending_add = false;
                    }
                    old += 1;
                }
                HunkLine::Remove(_) => {
                    out.push(old);
                    pending_add = false;
                    old += 1;
                }
                HunkLine::Add(_) => {
                    if !out.last().is_some_and(|l| *l + 1 == old) {
                        pending_add = true;
                    }
                }
            }
        }
        if pending_add {
            out.push(old.saturating_sub(1).max(1));
        }
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilePatch {
    /// Path from the `---`/`+++` headers, `a/`/`b/` prefixes removed.
    pub path: Option<String>,
    pub hunks: Vec<Hunk>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Patch {
    pub files: Vec<FilePatch>,
}

impl Patch {
    pub fn is_empty(&self) -> bool {
        self.files.iter().all(|f| f.hunks.is_empty())
    }

    pub fn hunk_count(&self) -> usize {
        self.files.iter().map(|f| f.hunks.len()).sum()
    }
}

fn hunk_header() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@").expect("valid regex")
    })
}

fn header_path(rest: &str) -> Option<String> {
    let p = rest.split('\t').next().unwrap_or("").trim();
    if p.is_empty() || p == "/dev/null" {
        return None;
    }
    let p = p
        .strip_prefix("a/")
        .or_else(|| p.strip_prefix("b/"))
        .unwrap_or(p);
    Some(p.to_string())
}

/// Parses a unified diff. Hunk line counts in `@@` headers are not trusted;
/// hunk bodies run until the next header.
pub fn parse_diff(text: &str) -> Result<Patch, DiffError> {
    let mut patch = Patch::default();
    let mut current: Option<FilePatch> = None;
    let mut hunk: Option<Hunk> = None;

    let flush_hunk = |hunk: &mut Option<Hunk>, current: &mut Option<FilePatch>| {
        if let Some(mut h) = hunk.take() {
            while matches!(h.lines.last(), Some(HunkLine::Context(s)) if s.is_empty()) {
                h.lines.pop();
            }
            current
                .get_or_insert(FilePatch {
                    path: None,
                    hunks: Vec::new(),
                })
                .hunks
                .push(h);
        }
    };

    let lines: Vec<&str> = text.lines().collect();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        let lineno = i + 1;
        if let Some(rest) = line.strip_prefix("--- ") {
            if lines.get(i + 1).is_some_and(|n| n.starts_with("+++ ")) {
                flush_hunk(&mut hunk, &mut current);
                if let Some(f) = current.take() {
                    patch.files.push(f);
                }
                let new = header_path(&lines[i + 1][4..]);
                current = Some(FilePatch {
                    path: new.or_else(|| header_path(rest)),
                    hunks: Vec::new(),
                });
                i += 2;
                continue;
            }
        }
        if line.starts_with("@@") {
            flush_hunk(&mut hunk, &mut current);
            let caps = hunk_header()
                .captures(line)
                .ok_or_else(|| DiffError::Malformed {
                    line: lineno,
                    message: format!("bad hunk header `{line}`"),
                })?;
            let old_start: usize = caps[1].parse().map_err(|_| DiffError::Malformed {
                line: lineno,
                message: "hunk start out of range".into(),
            })?;
            hunk = Some(Hunk {
                old_start: old_start.max(1),
                lines: Vec::new(),
            });
            i += 1;
            continue;
        }
        if let Some(h) = hunk.as_mut() {
            if let Some(s) = line.strip_prefix('+') {
                h.lines.push(HunkLine::Add(s.to_string()));
            } else if let Some(s) = line.strip_prefix('-') {
                h.lines.push(HunkLine::Remove(s.to_string()));
            } else if let Some(s) = line.strip_prefix(' ') {
                h.lines.push(HunkLine::Context(s.to_string()));
            } else if line.is_empty() {
                h.lines.push(HunkLine::Context(String::new()));
            } else if line.starts_with('\\') {
                // "\ No newline at end of file"
            } else {
                flush_hunk(&mut hunk, &mut current);
            }
        }
        i += 1;
    }
    flush_hunk(&mut hunk, &mut current);
    if let Some(f) = current.take() {
        patch.files.push(f);
    }
    patch
        .files
        .retain(|f| !f.hunks.is_empty() || f.path.is_some());
    Ok(patch)
}

fn path_matches(source: &str, target: &str) -> bool {
    source == target
        || source.ends_with(&format!("/{target}"))
        || target.ends_with(&format!("/{source}"))
}

fn target_index(sources: &[SourceFile], path: Option<&str>) -> Result<usize, DiffError> {
    match path {
        Some(p) => sources
            .iter()
            .position(|s| s.path == p)
            .or_else(|| sources.iter().position(|s| path_matches(&s.path, p)))
            .ok_or_else(|| DiffError::UnknownTarget(p.to_string())),
        None if sources.len() == 1 => Ok(0),
        None => Err(DiffError::AmbiguousTarget(sources.len())),
    }
}

/// Applies every hunk with exact context matching. A hunk whose context is
/// not at its stated line is searched for at the nearest offset.
pub fn apply_patch(sources: &[SourceFile], diff: &str) -> Result<Vec<SourceFile>, DiffError> {
    apply_parsed(sources, &parse_diff(diff)?)
}

pub fn apply_parsed(sources: &[SourceFile], patch: &Patch) -> Result<Vec<SourceFile>, DiffError> {
    let mut out = sources.to_vec();
    let mut counter = 0;
    for fp in &patch.files {
        if fp.hunks.is_empty() {
            continue;
        }
        let idx = target_index(sources, fp.path.as_deref())?;
        let text = &out[idx].text;
        let trailing_newline = text.ends_with('\n');
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        // running shift from earlier hunks in this file
        let mut shift: isize = 0;
        for h in &fp.hunks {
            counter += 1;
            let old = h.old_lines();
            let expected = h.old_start as isize - 1 + shift;
            let at =
                find_block(&lines, &old, expected).ok_or_else(|| DiffError::ContextMismatch {
                    file: out[idx].path.clone(),
                    hunk: counter,
                    line: h.old_start,
                })?;
            let new: Vec<String> = h.new_lines().into_iter().map(str::to_string).collect();
            shift += new.len() as isize - old.len() as isize + (at as isize - expected);
            lines.splice(at..at + old.len(), new);
        }
        let mut text = lines.join("\n");
        if trailing_newline && !lines.is_empty() {
            text.push('\n');
        }
        out[idx].text = text;
    }
    Ok(out)
}

fn find_block(lines: &[String], block: &[&str], expected: isize) -> Option<usize> {
    let fits = |at: isize| {
        at >= 0
            && (at as usize) + block.len() <= lines.len()
            && block
                .iter()
                .enumerate()
                .all(|(k, b)| lines[at as usize + k] == *b)
    };
    if block.is_empty() {
        let at = expected.clamp(0, lines.len() as isize);
        return Some(at as usize);
    }
    let span = lines.len() as isize;
    for d in 0..=span {
        if fits(expected - d) {
            return Some((expected - d) as usize);
        }
        if d > 0 && fits(expected + d) {
            return Some((expected + d) as usize);
        }
    }
    None
}

/// Original-file lines touched by a diff. Paths fall back to `default_file`
/// when the diff carries no headers.
pub fn patch_locations(patch: &Patch, default_file: &str) -> BTreeSet<VulnLine> {
    patch
        .files
        .iter()
        .flat_map(|f| {
            let file = f.path.clone().unwrap_or_else(|| default_file.to_string());
            f.hunks
                .iter()
                .flat_map(|h| h.touched_lines())
                .map(move |line| VulnLine {
                    file: file.clone(),
                    line: line as u32,
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRC: &str = "a\nb\nc\nd\ne\n";

    fn src() -> Vec<SourceFile> {
        vec![SourceFile::new("x.c", SRC)]
    }

    #[test]
    fn empty_diff_is_identity() {
        assert_eq!(apply_patch(&src(), "").unwrap(), src());
    }

    #[test]
    fn single_line_replacement() {
        let d = "--- a/x.c\n+++ b/x.c\n@@ -2,3 +2,3 @@\n b\n-c\n+C\n d\n";
        let out = apply_patch(&src(), d).unwrap();
        assert_eq!(out[0].text, "a\nb\nC\nd\ne\n");
        assert_eq!(
            patch_locations(&parse_diff(d).unwrap(), "x.c")
                .into_iter()
                .map(|l| l.line)
                .collect::<Vec<_>>(),
            vec![3]
        );
    }

    #[test]
    fn offset_search_and_headerless_target() {
        let d = "@@ -1,2 +1,3 @@\n d\n+x\n e\n";
        let out = apply_patch(&src(), d).unwrap();
        assert_eq!(out[0].text, "a\nb\nc\nd\nx\ne\n");
        let loc: Vec<_> = patch_locations(&parse_diff(d).unwrap(), "x.c")
            .into_iter()
            .map(|l| l.line)
            .collect();
        assert_eq!(loc, vec![1]);
    }

    #[test]
    fn mismatch_names_the_hunk() {
        let d = "@@ -2,1 +2,1 @@\n-b\n+B\n@@ -4,1 +4,1 @@\n-zz\n+Z\n";
        match apply_patch(&src(), d).unwrap_err() {
            DiffError::ContextMismatch { hunk, .. } => assert_eq!(hunk, 2),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn multiple_hunks_track_shift() {
        let d = "@@ -1,1 +1,2 @@\n a\n+a2\n@@ -4,1 +5,1 @@\n-d\n+D\n";
        assert_eq!(
            apply_patch(&src(), d).unwrap()[0].text,
            "a\na2\nb\nc\nD\ne\n"
        );
    }

    #[test]
    fn unknown_and_ambiguous_targets() {
        let two = vec![SourceFile::new("x.c", SRC), SourceFile::new("y.c", SRC)];
        assert!(matches!(
            apply_patch(&two, "@@ -1 +1 @@\n-a\n+b\n"),
            Err(DiffError::AmbiguousTarget(2))
        ));
        let d = "--- a/z.c\n+++ b/z.c\n@@ -1 +1 @@\n-a\n+b\n";
        assert!(matches!(
            apply_patch(&two, d),
            Err(DiffError::UnknownTarget(_))
        ));
        let d = "--- a/src/y.c\n+++ b/src/y.c\n@@ -1 +1 @@\n-a\n+b\n";
        assert_eq!(apply_patch(&two, d).unwrap()[1].text, "b\nb\nc\nd\ne\n");
    }
}
