//! Unified-diff line classification and the changed-token mask.
//!
//! The diff text is never normalized: every offset indexes into the text
//! exactly as it was fed to the model, so source-token offsets stay valid.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::trace::SourceToken;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LineKind {
    Header,
    Context,
    Added,
    Removed,
}

impl LineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LineKind::Header => "header",
            LineKind::Context => "context",
            LineKind::Added => "added",
            LineKind::Removed => "removed",
        }
    }

    pub fn is_change(self) -> bool {
        matches!(self, LineKind::Added | LineKind::Removed)
    }
}

/// One line of a diff. `line_start..line_end` spans the line including its
/// terminator; `content_start..content_end` spans the content after the
/// marker (the whole line, minus terminator, for headers and unmarked
/// lines).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DiffLine {
    pub kind: LineKind,
    pub line_start: usize,
    pub line_end: usize,
    pub content_start: usize,
    pub content_end: usize,
    /// Offset of the `+`, `-` or space marker. `None` for headers and for
    /// unrecognized lines that degrade to context.
    pub marker_offset: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeChange {
    pub raw_text: String,
    pub lines: Vec<DiffLine>,
}

impl CodeChange {
    pub fn line_text(&self, line: &DiffLine) -> &str {
        &self.raw_text[line.line_start..line.line_end]
    }

    pub fn content(&self, line: &DiffLine) -> &str {
        &self.raw_text[line.content_start..line.content_end]
    }

    pub fn count(&self, kind: LineKind) -> usize {
        self.lines.iter().filter(|l| l.kind == kind).count()
    }
}

const HEADER_PREFIXES: [&str; 5] = ["@@", "+++", "---", "diff ", "index "];

/// Classifies every line of `text`. Any text is accepted; lines that are
/// not recognizable diff syntax become context lines.
pub fn parse_unified_diff(text: &str) -> CodeChange {
    let mut lines = Vec::new();
    let mut start = 0;
    while start < text.len() {
        let line_end = match text[start..].find('\n') {
            Some(pos) => start + pos + 1,
            None => text.len(),
        };
        let body = &text[start..line_end];
        let body = body.strip_suffix('\n').unwrap_or(body);
        let body = body.strip_suffix('\r').unwrap_or(body);
        let body_end = start + body.len();

        let (kind, marker) = if HEADER_PREFIXES.iter().any(|p| body.starts_with(p)) {
            (LineKind::Header, false)
        } else if body.starts_with('+') {
            (LineKind::Added, true)
        } else if body.starts_with('-') {
            (LineKind::Removed, true)
        } else if body.starts_with(' ') {
            (LineKind::Context, true)
        } else {
            (LineKind::Context, false)
        };

        lines.push(DiffLine {
            kind,
            line_start: start,
            line_end,
            content_start: if marker { start + 1 } else { start },
            content_end: body_end,
            marker_offset: marker.then_some(start),
        });
        start = line_end;
    }
    CodeChange {
        raw_text: text.to_string(),
        lines,
    }
}

/// The changed-token set C over 1-based source-token indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChangeMask {
    pub changed_indices: BTreeSet<usize>,
    pub n_tokens: usize,
}

impl ChangeMask {
    pub fn new(changed_indices: BTreeSet<usize>, n_tokens: usize) -> Result<Self> {
        if let Some(&bad) = changed_indices.iter().find(|&&i| i == 0 || i > n_tokens) {
            return Err(Error::InvalidInput(format!(
                "changed index {bad} outside [1, {n_tokens}]"
            )));
        }
        Ok(ChangeMask {
            changed_indices,
            n_tokens,
        })
    }

    /// A mask with no changed tokens.
    pub fn empty(n_tokens: usize) -> Self {
        ChangeMask {
            changed_indices: BTreeSet::new(),
            n_tokens,
        }
    }

    /// Whether the 1-based token index is in C.
    pub fn contains(&self, index: usize) -> bool {
        self.changed_indices.contains(&index)
    }

    /// Whether the 0-based row `row` is in C.
    pub fn contains_row(&self, row: usize) -> bool {
        self.changed_indices.contains(&(row + 1))
    }

    pub fn n_changed(&self) -> usize {
        self.changed_indices.len()
    }

    pub fn n_unchanged(&self) -> usize {
        self.n_tokens - self.changed_indices.len()
    }

    /// 1-based indices not in C, ascending.
    pub fn unchanged_indices(&self) -> Vec<usize> {
        (1..=self.n_tokens)
            .filter(|i| !self.changed_indices.contains(i))
            .collect()
    }
}

/// Token i is in C iff its byte interval intersects the content of an
/// added or removed line. Markers and headers never count.
pub fn build_change_mask(change: &CodeChange, tokens: &[SourceToken]) -> Result<ChangeMask> {
    let len = change.raw_text.len();
    // Sorted, non-overlapping because lines are.
    let changed: Vec<(usize, usize)> = change
        .lines
        .iter()
        .filter(|l| l.kind.is_change() && l.content_start < l.content_end)
        .map(|l| (l.content_start, l.content_end))
        .collect();

    let mut set = BTreeSet::new();
    for (i, tok) in tokens.iter().enumerate() {
        let index = i + 1;
        if tok.char_start >= tok.char_end || tok.char_end > len {
            return Err(Error::TokenOutOfRange {
                index,
                start: tok.char_start,
                end: tok.char_end,
                len,
            });
        }
        // First interval whose end lies past the token start.
        let k = changed.partition_point(|&(_, end)| end <= tok.char_start);
        if let Some(&(start, _)) = changed.get(k) {
            if start < tok.char_end {
                set.insert(index);
            }
        }
    }
    Ok(ChangeMask {
        changed_indices: set,
        n_tokens: tokens.len(),
    })
}

/// Splits `text` on whitespace into source tokens with byte offsets.
/// Useful for fixtures and demos; real traces carry the model's tokens.
pub fn whitespace_tokens(text: &str) -> Vec<SourceToken> {
    let mut out = Vec::new();
    let mut start = None;
    for (pos, ch) in text.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(SourceToken {
                    text: text[s..pos].to_string(),
                    char_start: s,
                    char_end: pos,
                });
            }
        } else if start.is_none() {
            start = Some(pos);
        }
    }
    if let Some(s) = start {
        out.push(SourceToken {
            text: text[s..].to_string(),
            char_start: s,
            char_end: text.len(),
        });
    }
    out
}
