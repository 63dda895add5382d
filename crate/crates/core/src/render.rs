//! Output formats for annotated documents.
//!
//! Marks come from labels only. Source text is escaped in every format, so
//! markup or glyphs already present in generated text stay inert.

use std::fmt::Write as _;

use crate::token::SegmentKind;
use crate::verify::{AnnotatedDocument, ClaimSummary, FlagReason, Label, LabeledSegment};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Html,
    Ansi,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "html" => Ok(Format::Html),
            "ansi" => Ok(Format::Ansi),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}` (expected html, ansi or json)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BadgeGlyphs {
    pub verified: String,
    pub flagged: String,
}

impl Default for BadgeGlyphs {
    fn default() -> Self {
        BadgeGlyphs {
            verified: "✓".into(),
            flagged: "⚠".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderOptions {
    pub format: Format,
    pub include_provenance_tooltips: bool,
    pub badge_glyphs: BadgeGlyphs,
    /// ANSI only: emit color escapes.
    pub color: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            format: Format::Html,
            include_provenance_tooltips: true,
            badge_glyphs: BadgeGlyphs::default(),
            color: true,
        }
    }
}

impl RenderOptions {
    pub fn with_format(format: Format) -> Self {
        RenderOptions {
            format,
            ..Default::default()
        }
    }
}

pub fn render(doc: &AnnotatedDocument, opts: &RenderOptions) -> String {
    match opts.format {
        Format::Html => render_html(doc, opts),
        Format::Ansi => render_ansi(doc, opts),
        Format::Json => render_json(doc),
    }
}

pub fn render_json(doc: &AnnotatedDocument) -> String {
    doc.to_json()
}

fn reason_text(reason: FlagReason) -> &'static str {
    match reason {
        FlagReason::UnknownClaimId => "unknown claim id",
        FlagReason::ValueMismatch => "value does not match the claim",
        FlagReason::MalformedToken => "malformed claim token",
        FlagReason::UnitMismatch => "unit does not match the claim",
        FlagReason::MultipleNumbers => "more than one number in the claim token",
    }
}

fn push_markup_char(out: &mut String, c: char) {
    match c {
        '&' => out.push_str("&amp;"),
        '<' => out.push_str("&lt;"),
        '>' => out.push_str("&gt;"),
        '"' => out.push_str("&quot;"),
        '\'' => out.push_str("&#39;"),
        c => out.push(c),
    }
}

fn escape_markup(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    text.chars().for_each(|c| push_markup_char(&mut out, c));
    out
}

/// Escapes text content and attribute values alike. Badge glyphs in source
/// text become numeric references so they cannot be mistaken for marks.
fn escape_html(text: &str, glyphs: &BadgeGlyphs) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if is_glyph_char(c, glyphs) {
            let _ = write!(out, "&#{};", c as u32);
        } else {
            push_markup_char(&mut out, c);
        }
    }
    out
}

fn is_glyph_char(c: char, glyphs: &BadgeGlyphs) -> bool {
    let single = |g: &str| {
        let mut chars = g.chars();
        chars.next() == Some(c) && chars.next().is_none()
    };
    single(&glyphs.verified) || single(&glyphs.flagged) || matches!(c, '✓' | '✔' | '⚠')
}

fn attr(text: &str, glyphs: &BadgeGlyphs) -> String {
    escape_html(text, glyphs).replace('\n', "&#10;")
}

fn tooltip_lines(claim: &ClaimSummary, value: &str) -> Vec<String> {
    let mut lines = vec![
        format!("Country: {}", claim.entity),
        format!("Date: {}", claim.time),
        format!("Value: {value}"),
    ];
    if !claim.indicator.is_empty() {
        lines.push(format!("Indicator: {}", claim.indicator));
    }
    if !claim.unit.is_empty() {
        lines.push(format!("Unit: {}", claim.unit));
    }
    lines
}

fn open_tag(seg: &LabeledSegment) -> String {
    match &seg.segment.kind {
        SegmentKind::ClaimToken {
            claim_id, policy_hint, ..
        } => match policy_hint {
            // id and hint are restricted to [A-Za-z0-9_.-]
            Some(p) => format!(r#"<claim id="{claim_id}" policy="{p}">"#),
            None => format!(r#"<claim id="{claim_id}">"#),
        },
        _ => String::new(),
    }
}

pub fn render_html(doc: &AnnotatedDocument, opts: &RenderOptions) -> String {
    let glyphs = &opts.badge_glyphs;
    let mut out = String::with_capacity(doc.segments.iter().map(|s| s.segment.text.len()).sum::<usize>() * 2);
    for seg in &doc.segments {
        let payload = seg.segment.payload_text().unwrap_or(&seg.segment.text);
        match (&seg.segment.kind, &seg.label) {
            (SegmentKind::ClaimToken { .. }, Some(Label::Verified { claim_id, .. })) => {
                let mut title = vec!["Verified data".to_string()];
                if opts.include_provenance_tooltips {
                    if let Some(claim) = doc.claims.get(claim_id) {
                        title.extend(tooltip_lines(claim, &claim.value.to_string()));
                    }
                }
                let _ = write!(
                    out,
                    r#"{}{}<sup class="verified-mark" title="{}" role="img" aria-label="Verified">{}</sup></claim>"#,
                    open_tag(seg),
                    escape_html(payload, glyphs),
                    attr(&title.join("\n"), glyphs),
                    escape_markup(&glyphs.verified),
                );
            }
            (
                SegmentKind::ClaimToken { .. },
                Some(Label::Flagged {
                    reason,
                    claim_id,
                    expected,
                }),
            ) => {
                let claim = claim_id.as_ref().and_then(|id| doc.claims.get(id));
                let title = match claim {
                    Some(claim) if opts.include_provenance_tooltips => {
                        let value = expected.as_ref().unwrap_or(&claim.value).to_string();
                        let mut lines = tooltip_lines(claim, &value);
                        if *reason != FlagReason::ValueMismatch {
                            lines.insert(0, format!("Needs verification: {}", reason_text(*reason)));
                        }
                        lines.join("\n")
                    }
                    _ => format!("Needs verification: {}", reason_text(*reason)),
                };
                let _ = write!(
                    out,
                    r#"{}<span class="needs-verify">{}</span><sup class="verify-pending" title="{}" role="img" aria-label="Needs verification">{}</sup></claim>"#,
                    open_tag(seg),
                    escape_html(payload, glyphs),
                    attr(&title, glyphs),
                    escape_markup(&glyphs.flagged),
                );
            }
            _ => out.push_str(&escape_html(&seg.segment.text, glyphs)),
        }
    }
    out
}

const GREEN: &str = "\x1b[32m";
const YELLOW: &str = "\x1b[33m";
const DIM: &str = "\x1b[2m";
const RESET: &str = "\x1b[0m";

/// Makes source text safe for a terminal: control characters other than
/// newline and tab are shown as `\u{..}` escapes, and badge glyphs as their
/// code point.
pub fn escape_terminal(text: &str, glyphs: &BadgeGlyphs) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if c.is_control() && c != '\n' && c != '\t' {
            let _ = write!(out, "\\u{{{:x}}}", c as u32);
        } else if is_glyph_char(c, glyphs) {
            let _ = write!(out, "[U+{:04X}]", c as u32);
        } else {
            out.push(c);
        }
    }
    out
}

pub fn render_ansi(doc: &AnnotatedDocument, opts: &RenderOptions) -> String {
    let glyphs = &opts.badge_glyphs;
    let paint = |color: &str, text: &str| {
        if opts.color {
            format!("{color}{text}{RESET}")
        } else {
            text.to_string()
        }
    };
    let mut out = String::new();
    for seg in &doc.segments {
        let payload = seg.segment.payload_text().unwrap_or(&seg.segment.text);
        match (&seg.segment.kind, &seg.label) {
            (SegmentKind::ClaimToken { .. }, Some(Label::Verified { .. })) => {
                let text = format!("{} {}", escape_terminal(payload, glyphs), glyphs.verified);
                out.push_str(&paint(GREEN, &text));
            }
            (SegmentKind::ClaimToken { .. }, Some(Label::Flagged { reason, expected, .. })) => {
                let text = format!("{} {}", escape_terminal(payload, glyphs), glyphs.flagged);
                out.push_str(&paint(YELLOW, &text));
                let note = match expected {
                    Some(v) => format!(" [{}; claim value {v}]", reason.as_str()),
                    None => format!(" [{}]", reason.as_str()),
                };
                out.push_str(&paint(DIM, &note));
            }
            _ => out.push_str(&escape_terminal(&seg.segment.text, glyphs)),
        }
    }
    out
}
