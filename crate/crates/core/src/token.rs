//! Claim tag and number lexing.
//!
//! Wire grammar of a claim-bound token:
//!
//! ```text
//! <claim id="ID">PAYLOAD</claim>
//! <claim id="ID" policy="P">PAYLOAD</claim>
//! ```
//!
//! with `ID` and `P` drawn from `[A-Za-z0-9_.-]+`. Tags do not nest. Anything
//! that is not a complete tag is plain text, and numbers outside tags are
//! bare numbers.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::claim::UnitTable;
use crate::decimal::{Decimal, DecimalError};
use crate::policy::NormalizedPayload;

/// Byte offsets `[start, end)` into the parsed text.
pub type Span = (usize, usize);

const OPEN: &str = "<claim";
const CLOSE: &str = "</claim>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SegmentKind {
    ClaimToken {
        claim_id: String,
        policy_hint: Option<String>,
        /// Span of the payload between the tags.
        payload: Span,
    },
    BareNumber,
    PlainText,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub text: String,
    pub span: Span,
}

impl Segment {
    pub fn is_numeric(&self) -> bool {
        !matches!(self.kind, SegmentKind::PlainText)
    }

    pub fn claim_id(&self) -> Option<&str> {
        match &self.kind {
            SegmentKind::ClaimToken { claim_id, .. } => Some(claim_id),
            _ => None,
        }
    }

    pub fn policy_hint(&self) -> Option<&str> {
        match &self.kind {
            SegmentKind::ClaimToken { policy_hint, .. } => policy_hint.as_deref(),
            _ => None,
        }
    }

    /// The claimed value text of a token, or the whole text of a bare number.
    pub fn payload_text(&self) -> Option<&str> {
        match &self.kind {
            SegmentKind::ClaimToken { payload, .. } => {
                Some(&self.text[payload.0 - self.span.0..payload.1 - self.span.0])
            }
            SegmentKind::BareNumber => Some(&self.text),
            SegmentKind::PlainText => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MalformedReason {
    BadOpeningTag,
    Unclosed,
    /// Another opening tag appears before the closing tag.
    Nested,
    StrayClosingTag,
}

impl fmt::Display for MalformedReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MalformedReason::BadOpeningTag => "opening tag does not match the claim grammar",
            MalformedReason::Unclosed => "claim tag is never closed",
            MalformedReason::Nested => "claim tag contains another claim tag",
            MalformedReason::StrayClosingTag => "closing tag without an opening tag",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MalformedTag {
    pub span: Span,
    pub reason: MalformedReason,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseReport {
    /// The input after marker stripping; segment spans index into it.
    pub source: String,
    pub segments: Vec<Segment>,
    pub malformed_tags: Vec<MalformedTag>,
    pub stripped_markers: usize,
}

fn marker_patterns() -> &'static (Regex, Regex) {
    static PATTERNS: OnceLock<(Regex, Regex)> = OnceLock::new();
    PATTERNS.get_or_init(|| {
        (
            Regex::new(r#"<sup class="(?:verified-mark|verify-pending)".*?</sup>"#).expect("regex"),
            Regex::new(r#"<span class="needs-verify".*?>(.*?)</span>"#).expect("regex"),
        )
    })
}

/// Removes verification superscripts and unwraps needs-verify spans.
pub fn strip_verification_markers(text: &str) -> String {
    strip_counted(text).0
}

/// Applies both patterns until nothing matches, so that markers assembled
/// by an earlier removal are removed too. Returns the count of removals.
fn strip_counted(text: &str) -> (String, usize) {
    let (sup, span) = marker_patterns();
    let mut current = text.to_string();
    let mut removed = 0;
    loop {
        let sups = sup.find_iter(&current).count();
        if sups > 0 {
            current = sup.replace_all(&current, "").into_owned();
        }
        let spans = span.find_iter(&current).count();
        if spans > 0 {
            current = span.replace_all(&current, "$1").into_owned();
        }
        if sups + spans == 0 {
            return (current, removed);
        }
        removed += sups + spans;
    }
}

fn is_attr_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'_' | b'.' | b'-')
}

/// `<claim` counts as an attempted tag unless it continues into a longer
/// name such as `<claims`.
fn is_open_attempt(bytes: &[u8], at: usize) -> bool {
    !bytes
        .get(at + OPEN.len())
        .is_some_and(|&b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b':'))
}

struct Opener {
    end: usize,
    id: Span,
    policy: Option<Span>,
}

fn parse_opener(bytes: &[u8], at: usize) -> Option<Opener> {
    fn attr(bytes: &[u8], at: usize, prefix: &[u8]) -> Option<(Span, usize)> {
        if !bytes[at..].starts_with(prefix) {
            return None;
        }
        let start = at + prefix.len();
        let mut i = start;
        while i < bytes.len() && is_attr_byte(bytes[i]) {
            i += 1;
        }
        if i == start || bytes.get(i) != Some(&b'"') {
            return None;
        }
        Some(((start, i), i + 1))
    }
    let (id, mut i) = attr(bytes, at + OPEN.len(), b" id=\"")?;
    let mut policy = None;
    if let Some((p, next)) = attr(bytes, i, b" policy=\"") {
        policy = Some(p);
        i = next;
    }
    if bytes.get(i) != Some(&b'>') {
        return None;
    }
    Some(Opener { end: i + 1, id, policy })
}

/// Extent reported for a malformed opening tag: through the next `>` unless
/// another `<` comes first.
fn attempt_extent(bytes: &[u8], at: usize) -> usize {
    for (i, &b) in bytes.iter().enumerate().skip(at + 1) {
        match b {
            b'>' => return i + 1,
            b'<' => break,
            _ => {}
        }
    }
    at + OPEN.len()
}

fn find_all(text: &str, needle: &str) -> Vec<usize> {
    text.match_indices(needle).map(|(i, _)| i).collect()
}

/// Splits text into claim tokens, bare numbers and plain text.
pub fn tokenize(text: &str) -> ParseReport {
    let (source, stripped_markers) = strip_counted(text);
    let bytes = source.as_bytes();
    let openers: Vec<usize> = find_all(&source, OPEN)
        .into_iter()
        .filter(|&i| is_open_attempt(bytes, i))
        .collect();
    let closers = find_all(&source, CLOSE);

    let mut segments = Vec::new();
    let mut malformed = Vec::new();
    let mut used_closers = Vec::new();
    let mut plain_start = 0;
    let mut ci = 0;

    for (oi, &at) in openers.iter().enumerate() {
        if at < plain_start {
            continue;
        }
        let Some(opener) = parse_opener(bytes, at) else {
            malformed.push(MalformedTag {
                span: (at, attempt_extent(bytes, at)),
                reason: MalformedReason::BadOpeningTag,
            });
            continue;
        };
        while ci < closers.len() && closers[ci] < opener.end {
            ci += 1;
        }
        let Some(&close) = closers.get(ci) else {
            malformed.push(MalformedTag {
                span: (at, opener.end),
                reason: MalformedReason::Unclosed,
            });
            continue;
        };
        if openers.get(oi + 1).is_some_and(|&next| next < close) {
            malformed.push(MalformedTag {
                span: (at, opener.end),
                reason: MalformedReason::Nested,
            });
            continue;
        }
        scan_plain(&source, plain_start, at, &mut segments);
        let end = close + CLOSE.len();
        segments.push(Segment {
            kind: SegmentKind::ClaimToken {
                claim_id: source[opener.id.0..opener.id.1].to_string(),
                policy_hint: opener.policy.map(|(s, e)| source[s..e].to_string()),
                payload: (opener.end, close),
            },
            text: source[at..end].to_string(),
            span: (at, end),
        });
        used_closers.push(close);
        ci += 1;
        plain_start = end;
    }
    scan_plain(&source, plain_start, source.len(), &mut segments);

    let mut used = used_closers.into_iter().peekable();
    for close in closers {
        if used.peek() == Some(&close) {
            used.next();
        } else {
            malformed.push(MalformedTag {
                span: (close, close + CLOSE.len()),
                reason: MalformedReason::StrayClosingTag,
            });
        }
    }
    malformed.sort_by_key(|m| m.span);

    ParseReport {
        source,
        segments,
        malformed_tags: malformed,
        stripped_markers,
    }
}

fn scan_plain(source: &str, start: usize, end: usize, out: &mut Vec<Segment>) {
    let mut text_start = start;
    for (s, e) in NumberScanner::new(source, start, end) {
        if s > text_start {
            push_plain(source, text_start, s, out);
        }
        out.push(Segment {
            kind: SegmentKind::BareNumber,
            text: source[s..e].to_string(),
            span: (s, e),
        });
        text_start = e;
    }
    if end > text_start {
        push_plain(source, text_start, end, out);
    }
}

fn push_plain(source: &str, start: usize, end: usize, out: &mut Vec<Segment>) {
    out.push(Segment {
        kind: SegmentKind::PlainText,
        text: source[start..end].to_string(),
        span: (start, end),
    });
}

/// Iterates numeric literals within `[start, end)` of `text`.
///
/// A literal is an optional sign, digits with optional comma or space
/// thousands groups, an optional fraction, an optional exponent and an
/// optional attached `%`. It may not continue a word: the character before
/// it must not be alphanumeric or `_`.
struct NumberScanner<'a> {
    text: &'a str,
    pos: usize,
    end: usize,
}

impl<'a> NumberScanner<'a> {
    fn new(text: &'a str, start: usize, end: usize) -> Self {
        NumberScanner { text, pos: start, end }
    }

    fn can_start(&self, at: usize) -> bool {
        let bytes = self.text.as_bytes();
        let digit_at = |i: usize| i < self.end && bytes[i].is_ascii_digit();
        let starts = digit_at(at) || (matches!(bytes[at], b'+' | b'-') && digit_at(at + 1));
        starts
            && !self.text[..at]
                .chars()
                .next_back()
                .is_some_and(|c| c.is_alphanumeric() || c == '_')
    }

    fn literal_end(&self, start: usize) -> usize {
        let b = self.text.as_bytes();
        let end = self.end;
        let digits_from = |mut i: usize| {
            while i < end && b[i].is_ascii_digit() {
                i += 1;
            }
            i
        };
        let mut i = start;
        if matches!(b[i], b'+' | b'-') {
            i += 1;
        }
        let int_start = i;
        i = digits_from(i);
        if i - int_start <= 3 {
            while i + 4 <= end
                && matches!(b[i], b',' | b' ')
                && b[i + 1..i + 4].iter().all(u8::is_ascii_digit)
                && !(i + 4 < end && b[i + 4].is_ascii_digit())
            {
                i += 4;
            }
        }
        if i + 1 < end && b[i] == b'.' && b[i + 1].is_ascii_digit() {
            i = digits_from(i + 1);
        }
        if i + 1 < end && matches!(b[i], b'e' | b'E') {
            let mut j = i + 1;
            if j < end && matches!(b[j], b'+' | b'-') {
                j += 1;
            }
            if j < end && b[j].is_ascii_digit() {
                i = digits_from(j);
            }
        }
        if i < end && b[i] == b'%' {
            i += 1;
        }
        i
    }
}

impl Iterator for NumberScanner<'_> {
    type Item = Span;

    fn next(&mut self) -> Option<Span> {
        let bytes = self.text.as_bytes();
        while self.pos < self.end {
            let at = self.pos;
            let b = bytes[at];
            if (b.is_ascii_digit() || b == b'+' || b == b'-') && self.can_start(at) {
                let end = self.literal_end(at);
                self.pos = end;
                return Some((at, end));
            }
            self.pos += 1;
        }
        None
    }
}

/// Spans of all numeric literals in `text`.
pub fn find_numbers(text: &str) -> Vec<Span> {
    NumberScanner::new(text, 0, text.len()).collect()
}

/// Parses one numeric literal as produced by the scanner.
pub fn parse_literal(literal: &str) -> Result<Decimal, DecimalError> {
    let cleaned: String = literal
        .trim_end_matches('%')
        .chars()
        .filter(|c| !matches!(c, ',' | ' '))
        .collect();
    Decimal::parse(&cleaned)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PayloadError {
    #[error("payload contains no number")]
    NoNumber,
    #[error("payload contains {0} numbers")]
    MultipleNumbers(usize),
    #[error("payload number is not representable: {0}")]
    Unparseable(#[from] DecimalError),
}

/// Configuration for payload normalization.
#[derive(Debug, Clone)]
pub struct Lexicon {
    units: UnitTable,
    unit_forms: Vec<(String, String)>,
    /// Words before a token searched for qualifiers.
    pub qualifier_window: usize,
    /// Words after a token searched for scale words.
    pub scale_lookahead: usize,
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon::new(UnitTable::default())
    }
}

/// Upper bound on bytes inspected per word when looking around a token, so
/// long runs of punctuation cannot make a lookup linear in the document.
const BYTES_PER_WORD: usize = 64;

impl Lexicon {
    pub fn new(units: UnitTable) -> Self {
        let unit_forms = units.surface_forms();
        Lexicon {
            units,
            unit_forms,
            qualifier_window: 3,
            scale_lookahead: 2,
        }
    }

    pub fn units(&self) -> &UnitTable {
        &self.units
    }

    /// Unit named at the start of `text`; `loose` restricts the match to
    /// forms that are unlikely to be ordinary words.
    fn unit_at_start(&self, text: &str, loose: bool) -> Option<String> {
        self.unit_forms.iter().find_map(|(form, unit)| {
            if loose && form.chars().count() < 2 && form.chars().all(char::is_alphanumeric) {
                return None;
            }
            let head = text.get(..form.len())?;
            let same = if form.chars().count() == 1 {
                head == form
            } else {
                head.eq_ignore_ascii_case(form)
            };
            let bounded = !ends_word(form) || !text[form.len()..].chars().next().is_some_and(is_word_char);
            (same && bounded).then(|| unit.clone())
        })
    }

    /// Unit symbol directly ending `text`, such as `$` in `US$`.
    fn unit_at_end(&self, text: &str, symbols_only: bool) -> Option<String> {
        self.unit_forms.iter().find_map(|(form, unit)| {
            if symbols_only && form.chars().any(|c| c.is_ascii_alphabetic()) && !form.ends_with('$') {
                return None;
            }
            let at = text.len().checked_sub(form.len())?;
            let tail = text.get(at..)?;
            let same = if form.chars().count() == 1 {
                tail == form
            } else {
                tail.eq_ignore_ascii_case(form)
            };
            let bounded = !starts_word(form) || !text[..at].chars().next_back().is_some_and(is_word_char);
            (same && bounded).then(|| unit.clone())
        })
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

fn starts_word(s: &str) -> bool {
    s.chars().next().is_some_and(is_word_char)
}

fn ends_word(s: &str) -> bool {
    s.chars().next_back().is_some_and(is_word_char)
}

/// Words of `text` in order: maximal alphanumeric runs, each `~` on its own.
pub fn words(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if is_word_char(c) {
            start.get_or_insert(i);
            continue;
        }
        if let Some(s) = start.take() {
            out.push(&text[s..i]);
        }
        if c == '~' {
            out.push(&text[i..i + 1]);
        }
    }
    if let Some(s) = start {
        out.push(&text[s..]);
    }
    out
}

/// Up to `count` words immediately before byte `at`, nearest last.
pub fn words_before(text: &str, at: usize, count: usize) -> Vec<&str> {
    if count == 0 {
        return Vec::new();
    }
    let mut from = at.saturating_sub(count * BYTES_PER_WORD);
    while !text.is_char_boundary(from) {
        from += 1;
    }
    let window = &text[from..at];
    let mut found = words(window);
    // a word cut by the window start is only a fragment
    if from > 0 && starts_word(window) && text[..from].chars().next_back().is_some_and(is_word_char) {
        found.remove(0);
    }
    let skip = found.len().saturating_sub(count);
    found.split_off(skip)
}

/// Up to `count` words immediately after byte `at`.
pub fn words_after(text: &str, at: usize, count: usize) -> Vec<&str> {
    if count == 0 {
        return Vec::new();
    }
    let mut to = (at + count * BYTES_PER_WORD).min(text.len());
    while !text.is_char_boundary(to) {
        to -= 1;
    }
    let window = &text[at..to];
    let mut found = words(window);
    if to < text.len() && ends_word(window) && text[to..].chars().next().is_some_and(is_word_char) {
        found.pop();
    }
    found.truncate(count);
    found
}

/// Whether a member of `qualifiers` occurs within `window` words before
/// `span` or inside it. Comparison ignores case.
pub fn detect_qualifier(context: &str, span: Span, qualifiers: &BTreeSet<String>, window: usize) -> bool {
    let lowered: BTreeSet<String> = qualifiers.iter().map(|q| q.to_lowercase()).collect();
    words_before(context, span.0, window)
        .into_iter()
        .chain(words(&context[span.0..span.1]))
        .any(|w| lowered.contains(&w.to_lowercase()))
}

/// Normalizes the payload of a claim token at `token` (whole tag) with
/// payload `payload` inside `source`.
///
/// Thousands separators are dropped and a `%` stays in percentage points.
/// The unit comes from the payload first, then from text right after the
/// tag, then from a currency symbol right before it.
pub fn parse_numeric_payload(
    source: &str,
    token: Span,
    payload: Span,
    lexicon: &Lexicon,
) -> Result<NormalizedPayload, PayloadError> {
    let text = &source[payload.0..payload.1];
    let numbers = find_numbers(text);
    let (a, b) = match numbers.as_slice() {
        [] => return Err(PayloadError::NoNumber),
        [one] => *one,
        many => return Err(PayloadError::MultipleNumbers(many.len())),
    };
    let literal = &text[a..b];
    let value = parse_literal(literal)?;

    let before = text[..a].trim_end();
    let after = text[b..].trim_start();
    let following = source[token.1..].trim_start_matches([' ', '\t']);
    let preceding = source[..token.0].trim_end_matches([' ', '\t']);
    let unit = if literal.ends_with('%') {
        Some("%".to_string())
    } else {
        lexicon
            .unit_at_start(after, false)
            .or_else(|| {
                // one scale word may sit between number and unit
                let rest = after.trim_start_matches(is_word_char).trim_start();
                (rest.len() < after.len())
                    .then(|| lexicon.unit_at_start(rest, false))
                    .flatten()
            })
            .or_else(|| lexicon.unit_at_end(before, false))
            .or_else(|| lexicon.unit_at_start(following, true))
            .or_else(|| lexicon.unit_at_end(preceding, true))
    };

    let mut scale_words: Vec<String> = words(&text[b..]).into_iter().map(str::to_string).collect();
    scale_words.extend(
        words_after(source, token.1, lexicon.scale_lookahead)
            .into_iter()
            .map(str::to_string),
    );
    let context_words = words_before(source, token.0, lexicon.qualifier_window)
        .into_iter()
        .chain(words(text))
        .map(str::to_lowercase)
        .collect();

    Ok(NormalizedPayload {
        value,
        unit_text: unit.filter(|u| !u.is_empty()),
        scale_words,
        context_words,
    })
}

/// Payload normalization for a parsed claim token segment.
pub fn normalize_token(
    source: &str,
    segment: &Segment,
    lexicon: &Lexicon,
) -> Option<Result<NormalizedPayload, PayloadError>> {
    match &segment.kind {
        SegmentKind::ClaimToken { payload, .. } => Some(parse_numeric_payload(source, segment.span, *payload, lexicon)),
        _ => None,
    }
}
