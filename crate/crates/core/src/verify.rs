//! Span labelling.
//!
//! Every numeric span of a document gets exactly one label. A claim token is
//! Verified only when its claim exists and some mode of the policy holds;
//! every other path ends in Flagged, and numbers outside tags are Bare.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::claim::{Claim, ClaimLookup};
use crate::decimal::Decimal;
use crate::policy::{evaluate, ModeDoc, PolicySpec, VerificationMode};
use crate::provenance::{check_provenance, Keyring, ProvenanceStatus};
use crate::token::{parse_numeric_payload, tokenize, Lexicon, MalformedTag, PayloadError, Segment, SegmentKind, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagReason {
    UnknownClaimId,
    ValueMismatch,
    MalformedToken,
    UnitMismatch,
    MultipleNumbers,
}

impl FlagReason {
    pub const ALL: [FlagReason; 5] = [
        FlagReason::UnknownClaimId,
        FlagReason::ValueMismatch,
        FlagReason::MalformedToken,
        FlagReason::UnitMismatch,
        FlagReason::MultipleNumbers,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FlagReason::UnknownClaimId => "unknown_claim_id",
            FlagReason::ValueMismatch => "value_mismatch",
            FlagReason::MalformedToken => "malformed_token",
            FlagReason::UnitMismatch => "unit_mismatch",
            FlagReason::MultipleNumbers => "multiple_numbers",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Label {
    Verified {
        claim_id: String,
        mode: VerificationMode,
    },
    Bare,
    Flagged {
        reason: FlagReason,
        claim_id: Option<String>,
        /// Reference value, set for value mismatches only.
        expected: Option<Decimal>,
    },
}

impl Label {
    pub fn is_verified(&self) -> bool {
        matches!(self, Label::Verified { .. })
    }

    pub fn is_flagged(&self) -> bool {
        matches!(self, Label::Flagged { .. })
    }

    fn flag(reason: FlagReason, claim_id: &str) -> Label {
        Label::Flagged {
            reason,
            claim_id: Some(claim_id.to_string()),
            expected: None,
        }
    }
}

/// Claim fields shown next to a labelled token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimSummary {
    pub indicator: String,
    pub entity: String,
    pub time: String,
    pub value: Decimal,
    pub unit: String,
}

impl From<&Claim> for ClaimSummary {
    fn from(c: &Claim) -> Self {
        ClaimSummary {
            indicator: c.indicator.clone(),
            entity: c.entity.clone(),
            time: c.time.clone(),
            value: c.value.clone(),
            unit: c.unit.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSegment {
    pub segment: Segment,
    /// Present exactly for claim tokens and bare numbers.
    pub label: Option<Label>,
}

#[derive(Debug, Clone)]
pub struct AnnotatedDocument {
    pub segments: Vec<LabeledSegment>,
    pub policy_name: String,
    pub claims_descriptor: String,
    /// Claims referenced by tokens that resolved, keyed by id.
    pub claims: BTreeMap<String, ClaimSummary>,
    pub malformed_tags: Vec<MalformedTag>,
    pub stripped_markers: usize,
    pub elapsed: Duration,
}

impl PartialEq for AnnotatedDocument {
    fn eq(&self, other: &Self) -> bool {
        self.segments == other.segments
            && self.policy_name == other.policy_name
            && self.claims_descriptor == other.claims_descriptor
            && self.claims == other.claims
            && self.malformed_tags == other.malformed_tags
            && self.stripped_markers == other.stripped_markers
    }
}

impl Eq for AnnotatedDocument {}

impl AnnotatedDocument {
    pub fn labels(&self) -> impl Iterator<Item = (&Segment, &Label)> {
        self.segments
            .iter()
            .filter_map(|s| s.label.as_ref().map(|l| (&s.segment, l)))
    }

    /// Text the document was built from, after marker stripping.
    pub fn source(&self) -> String {
        self.segments.iter().map(|s| s.segment.text.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VerificationReport {
    pub verified: usize,
    pub bare: usize,
    pub flagged: usize,
    pub by_reason: BTreeMap<FlagReason, usize>,
    pub elapsed: Duration,
}

impl VerificationReport {
    pub fn labeled(&self) -> usize {
        self.verified + self.bare + self.flagged
    }
}

/// Looks claims up through `inner` but hides any claim whose provenance does
/// not check out against the keyring. Without a keyring nothing is visible.
pub struct Attested<'a, L: ?Sized> {
    inner: &'a L,
    keyring: Option<&'a Keyring>,
}

impl<'a, L: ClaimLookup + ?Sized> Attested<'a, L> {
    pub fn new(inner: &'a L, keyring: Option<&'a Keyring>) -> Self {
        Attested { inner, keyring }
    }
}

impl<L: ClaimLookup + ?Sized> ClaimLookup for Attested<'_, L> {
    fn lookup(&self, claim_id: &str) -> Option<&Claim> {
        let keyring = self.keyring?;
        self.inner
            .lookup(claim_id)
            .filter(|c| check_provenance(c, keyring) == ProvenanceStatus::Valid)
    }

    fn describe(&self) -> String {
        self.inner.describe()
    }
}

/// Labels a single segment. Plain text has no label.
pub fn label_span<L: ClaimLookup + ?Sized>(
    segment: &Segment,
    source: &str,
    claims: &L,
    policy: &PolicySpec,
    lexicon: &Lexicon,
) -> Option<Label> {
    let (claim_id, payload) = match &segment.kind {
        SegmentKind::PlainText => return None,
        SegmentKind::BareNumber => return Some(Label::Bare),
        SegmentKind::ClaimToken { claim_id, payload, .. } => (claim_id, *payload),
    };
    Some(label_token(claim_id, segment.span, payload, source, claims, policy, lexicon).0)
}

fn label_token<'c, L: ClaimLookup + ?Sized>(
    claim_id: &str,
    token: Span,
    payload: Span,
    source: &str,
    claims: &'c L,
    policy: &PolicySpec,
    lexicon: &Lexicon,
) -> (Label, Option<&'c Claim>) {
    let Some(claim) = claims.lookup(claim_id) else {
        return (Label::flag(FlagReason::UnknownClaimId, claim_id), None);
    };
    let normalized = match parse_numeric_payload(source, token, payload, lexicon) {
        Ok(n) => n,
        Err(PayloadError::MultipleNumbers(_)) => {
            return (Label::flag(FlagReason::MultipleNumbers, claim_id), Some(claim));
        }
        Err(_) => return (Label::flag(FlagReason::MalformedToken, claim_id), Some(claim)),
    };
    if let Some(unit) = &normalized.unit_text {
        let claim_unit = lexicon
            .units()
            .canonicalize(&claim.unit)
            .unwrap_or_else(|| claim.unit.clone());
        if !claim_unit.is_empty() && &claim_unit != unit {
            return (Label::flag(FlagReason::UnitMismatch, claim_id), Some(claim));
        }
    }
    let result = evaluate(&normalized, claim, policy);
    let label = match result.mode {
        Some(mode) => Label::Verified {
            claim_id: claim_id.to_string(),
            mode,
        },
        None => Label::Flagged {
            reason: FlagReason::ValueMismatch,
            claim_id: Some(claim_id.to_string()),
            expected: Some(claim.value.clone()),
        },
    };
    (label, Some(claim))
}

/// Document verifier holding lexical configuration and, optionally, the
/// keyring consulted by policies that require provenance.
#[derive(Debug, Clone, Default)]
pub struct Verifier {
    pub lexicon: Lexicon,
    keyring: Option<Keyring>,
}

impl Verifier {
    pub fn new(lexicon: Lexicon) -> Self {
        Verifier { lexicon, keyring: None }
    }

    pub fn with_keyring(mut self, keyring: Keyring) -> Self {
        self.keyring = Some(keyring);
        self
    }

    pub fn keyring(&self) -> Option<&Keyring> {
        self.keyring.as_ref()
    }

    pub fn verify<L: ClaimLookup + ?Sized>(&self, text: &str, claims: &L, policy: &PolicySpec) -> AnnotatedDocument {
        if policy.require_provenance {
            self.run(text, &Attested::new(claims, self.keyring.as_ref()), policy)
        } else {
            self.run(text, claims, policy)
        }
    }

    fn run<L: ClaimLookup + ?Sized>(&self, text: &str, claims: &L, policy: &PolicySpec) -> AnnotatedDocument {
        let started = Instant::now();
        let report = tokenize(text);
        let mut referenced = BTreeMap::new();
        let mut segments = Vec::with_capacity(report.segments.len());
        for segment in report.segments {
            let label = match &segment.kind {
                SegmentKind::PlainText => None,
                SegmentKind::BareNumber => Some(Label::Bare),
                SegmentKind::ClaimToken { claim_id, payload, .. } => {
                    let (label, claim) = label_token(
                        claim_id,
                        segment.span,
                        *payload,
                        &report.source,
                        claims,
                        policy,
                        &self.lexicon,
                    );
                    if let Some(claim) = claim {
                        referenced
                            .entry(claim.claim_id.clone())
                            .or_insert_with(|| ClaimSummary::from(claim));
                    }
                    Some(label)
                }
            };
            segments.push(LabeledSegment { segment, label });
        }
        AnnotatedDocument {
            segments,
            policy_name: policy.name.clone(),
            claims_descriptor: claims.describe(),
            claims: referenced,
            malformed_tags: report.malformed_tags,
            stripped_markers: report.stripped_markers,
            elapsed: started.elapsed(),
        }
    }
}

/// Verifies `text` against `claims` under `policy` with default lexicon and
/// no keyring.
pub fn verify_document<L: ClaimLookup + ?Sized>(text: &str, claims: &L, policy: &PolicySpec) -> AnnotatedDocument {
    Verifier::default().verify(text, claims, policy)
}

pub fn summarize(doc: &AnnotatedDocument) -> VerificationReport {
    let mut report = VerificationReport {
        elapsed: doc.elapsed,
        ..Default::default()
    };
    for (_, label) in doc.labels() {
        match label {
            Label::Verified { .. } => report.verified += 1,
            Label::Bare => report.bare += 1,
            Label::Flagged { reason, .. } => {
                report.flagged += 1;
                *report.by_reason.entry(*reason).or_default() += 1;
            }
        }
    }
    report
}

// Canonical JSON form.

#[derive(Debug, Serialize, Deserialize)]
struct DocumentWire {
    policy: String,
    claims: String,
    segments: Vec<SegmentWire>,
    provenance: BTreeMap<String, ClaimSummary>,
    malformed_tags: Vec<MalformedTag>,
    stripped_markers: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum KindWire {
    ClaimToken,
    BareNumber,
    PlainText,
}

#[derive(Debug, Serialize, Deserialize)]
struct SegmentWire {
    kind: KindWire,
    text: String,
    span: Span,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    claim_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    policy_hint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    payload_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<LabelWire>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum StatusWire {
    Verified,
    Bare,
    Flagged,
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelWire {
    status: StatusWire,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    claim_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mode: Option<ModeDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reason: Option<FlagReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    expected: Option<Decimal>,
}

impl From<&Label> for LabelWire {
    fn from(label: &Label) -> Self {
        match label {
            Label::Verified { claim_id, mode } => LabelWire {
                status: StatusWire::Verified,
                claim_id: Some(claim_id.clone()),
                mode: Some(ModeDoc::from(mode)),
                reason: None,
                expected: None,
            },
            Label::Bare => LabelWire {
                status: StatusWire::Bare,
                claim_id: None,
                mode: None,
                reason: None,
                expected: None,
            },
            Label::Flagged {
                reason,
                claim_id,
                expected,
            } => LabelWire {
                status: StatusWire::Flagged,
                claim_id: claim_id.clone(),
                mode: None,
                reason: Some(*reason),
                expected: expected.clone(),
            },
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DocumentJsonError {
    #[error("malformed annotated document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("inconsistent annotated document: {0}")]
    Inconsistent(String),
}

fn inconsistent(msg: impl Into<String>) -> DocumentJsonError {
    DocumentJsonError::Inconsistent(msg.into())
}

impl TryFrom<LabelWire> for Label {
    type Error = DocumentJsonError;

    fn try_from(w: LabelWire) -> Result<Self, Self::Error> {
        Ok(match w.status {
            StatusWire::Verified => Label::Verified {
                claim_id: w
                    .claim_id
                    .ok_or_else(|| inconsistent("verified label without claim_id"))?,
                mode: w
                    .mode
                    .ok_or_else(|| inconsistent("verified label without mode"))?
                    .into(),
            },
            StatusWire::Bare => Label::Bare,
            StatusWire::Flagged => Label::Flagged {
                reason: w.reason.ok_or_else(|| inconsistent("flagged label without reason"))?,
                claim_id: w.claim_id,
                expected: w.expected,
            },
        })
    }
}

impl AnnotatedDocument {
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self.to_wire()).expect("document serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_wire()).expect("document serializes")
    }

    fn to_wire(&self) -> DocumentWire {
        DocumentWire {
            policy: self.policy_name.clone(),
            claims: self.claims_descriptor.clone(),
            segments: self
                .segments
                .iter()
                .map(|ls| {
                    let s = &ls.segment;
                    let (kind, claim_id, policy_hint, payload_text) = match &s.kind {
                        SegmentKind::ClaimToken {
                            claim_id, policy_hint, ..
                        } => (
                            KindWire::ClaimToken,
                            Some(claim_id.clone()),
                            policy_hint.clone(),
                            s.payload_text().map(str::to_string),
                        ),
                        SegmentKind::BareNumber => (KindWire::BareNumber, None, None, None),
                        SegmentKind::PlainText => (KindWire::PlainText, None, None, None),
                    };
                    SegmentWire {
                        kind,
                        text: s.text.clone(),
                        span: s.span,
                        claim_id,
                        policy_hint,
                        payload_text,
                        label: ls.label.as_ref().map(LabelWire::from),
                    }
                })
                .collect(),
            provenance: self.claims.clone(),
            malformed_tags: self.malformed_tags.clone(),
            stripped_markers: self.stripped_markers,
        }
    }

    /// Parses the canonical JSON form back into a document. `elapsed` is not
    /// part of the JSON and comes back as zero.
    pub fn from_json(json: &str) -> Result<Self, DocumentJsonError> {
        let wire: DocumentWire = serde_json::from_str(json)?;
        let mut segments = Vec::with_capacity(wire.segments.len());
        let mut at = 0;
        for s in wire.segments {
            if s.span.0 != at || s.span.1 < s.span.0 || s.span.1 - s.span.0 != s.text.len() {
                return Err(inconsistent(format!(
                    "segment span {:?} does not follow offset {at}",
                    s.span
                )));
            }
            at = s.span.1;
            let kind = match s.kind {
                KindWire::ClaimToken => {
                    let claim_id = s.claim_id.ok_or_else(|| inconsistent("claim token without claim_id"))?;
                    let open = s
                        .text
                        .find('>')
                        .ok_or_else(|| inconsistent("claim token without opening tag"))?
                        + 1;
                    let close = s
                        .text
                        .rfind("</claim>")
                        .filter(|&c| c >= open)
                        .ok_or_else(|| inconsistent("claim token without closing tag"))?;
                    SegmentKind::ClaimToken {
                        claim_id,
                        policy_hint: s.policy_hint,
                        payload: (s.span.0 + open, s.span.0 + close),
                    }
                }
                KindWire::BareNumber => SegmentKind::BareNumber,
                KindWire::PlainText => SegmentKind::PlainText,
            };
            let label = s.label.map(Label::try_from).transpose()?;
            if label.is_some() == matches!(kind, SegmentKind::PlainText) {
                return Err(inconsistent("labels must attach to numeric segments only"));
            }
            segments.push(LabeledSegment {
                segment: Segment {
                    kind,
                    text: s.text,
                    span: s.span,
                },
                label,
            });
        }
        Ok(AnnotatedDocument {
            segments,
            policy_name: wire.policy,
            claims_descriptor: wire.claims,
            claims: wire.provenance,
            malformed_tags: wire.malformed_tags,
            stripped_markers: wire.stripped_markers,
            elapsed: Duration::ZERO,
        })
    }
}

impl VerificationReport {
    pub fn to_json_value(&self) -> serde_json::Value {
        let by_reason: serde_json::Map<String, serde_json::Value> = FlagReason::ALL
            .iter()
            .map(|r| {
                (
                    r.as_str().to_string(),
                    self.by_reason.get(r).copied().unwrap_or(0).into(),
                )
            })
            .collect();
        serde_json::json!({
            "verified": self.verified,
            "bare": self.bare,
            "flagged": self.flagged,
            "by_reason": by_reason,
            "elapsed_us": self.elapsed.as_micros() as u64,
        })
    }
}
