//! Verification relations and policies.
//!
//! A policy is an ordered set of modes; a token verifies against a claim when
//! at least one mode holds. Order only decides which mode gets reported.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::claim::Claim;
use crate::decimal::Decimal;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("unknown policy preset `{0}`")]
    UnknownPreset(String),
    #[error("malformed policy document: {0}")]
    Json(String),
    #[error("invalid policy: {0}")]
    Invalid(String),
}

/// Scale multiplier and the surface forms that denote it (`K`, `thousand`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ScaleAlias {
    pub multiplier: Decimal,
    pub forms: BTreeSet<String>,
}

impl ScaleAlias {
    pub fn new<'a>(multiplier: &str, forms: impl IntoIterator<Item = &'a str>) -> Self {
        ScaleAlias {
            multiplier: Decimal::parse(multiplier).expect("valid multiplier literal"),
            forms: forms.into_iter().map(str::to_string).collect(),
        }
    }

    /// Single-character forms (`K`, `M`) match case-sensitively, longer forms
    /// ignore case.
    pub fn matches(&self, word: &str) -> bool {
        self.forms.iter().any(|form| form_matches(form, word))
    }
}

fn form_matches(form: &str, word: &str) -> bool {
    if form.chars().count() == 1 {
        form == word
    } else {
        form.to_lowercase() == word.to_lowercase()
    }
}

pub fn default_scale_table() -> Vec<ScaleAlias> {
    vec![
        ScaleAlias::new("1000", ["K", "thousand"]),
        ScaleAlias::new("1000000", ["M", "million", "mn"]),
        ScaleAlias::new("1000000000", ["B", "billion", "bn"]),
        ScaleAlias::new("1000000000000", ["T", "trillion"]),
    ]
}

pub fn default_qualifiers() -> BTreeSet<String> {
    ["about", "approximately", "roughly", "around", "nearly", "~"]
        .into_iter()
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum VerificationMode {
    Exact,
    Round {
        places: u32,
    },
    Alias {
        scales: Vec<ScaleAlias>,
        /// Accept an unmarked number when some multiplier fits. Off by
        /// default: a scale word must be present.
        infer_scale: bool,
    },
    Tolerance {
        delta: Decimal,
        rho: Decimal,
        /// Lowercase qualifier words; at least one must accompany the token.
        qualifiers: BTreeSet<String>,
    },
}

impl VerificationMode {
    pub fn kind(&self) -> &'static str {
        match self {
            VerificationMode::Exact => "exact",
            VerificationMode::Round { .. } => "round",
            VerificationMode::Alias { .. } => "alias",
            VerificationMode::Tolerance { .. } => "tolerance",
        }
    }

    fn validate(&self) -> Result<(), PolicyError> {
        match self {
            VerificationMode::Exact | VerificationMode::Round { .. } => Ok(()),
            VerificationMode::Alias { scales, .. } => {
                if scales.is_empty() {
                    return Err(PolicyError::Invalid("alias mode needs at least one scale".into()));
                }
                for scale in scales {
                    if !scale.multiplier.is_positive() {
                        return Err(PolicyError::Invalid(format!(
                            "scale multiplier {} is not positive",
                            scale.multiplier
                        )));
                    }
                    if scale.forms.is_empty() || scale.forms.iter().any(|f| !is_single_word(f)) {
                        return Err(PolicyError::Invalid(format!(
                            "scale {} needs non-empty single-word forms",
                            scale.multiplier
                        )));
                    }
                }
                Ok(())
            }
            VerificationMode::Tolerance { delta, rho, qualifiers } => {
                if delta.is_negative() || rho.is_negative() {
                    return Err(PolicyError::Invalid(
                        "tolerance delta and rho must be non-negative".into(),
                    ));
                }
                if qualifiers.is_empty() {
                    return Err(PolicyError::Invalid(
                        "tolerance mode needs a non-empty qualifier set".into(),
                    ));
                }
                if let Some(q) = qualifiers.iter().find(|q| !is_single_word(q)) {
                    return Err(PolicyError::Invalid(format!("qualifier `{q}` is not a single word")));
                }
                Ok(())
            }
        }
    }
}

fn is_single_word(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(char::is_whitespace)
}

impl fmt::Display for VerificationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VerificationMode::Exact => f.write_str("exact"),
            VerificationMode::Round { places } => write!(f, "round({places})"),
            VerificationMode::Alias { scales, .. } => {
                let m: Vec<String> = scales.iter().map(|s| s.multiplier.to_string()).collect();
                write!(f, "alias({})", m.join(","))
            }
            VerificationMode::Tolerance { delta, rho, .. } => write!(f, "tolerance(delta={delta}, rho={rho})"),
        }
    }
}

/// The set of permitted relations for one verification run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicySpec {
    pub name: String,
    modes: Vec<VerificationMode>,
    /// Only claims whose signature or Merkle proof verifies may back a
    /// Verified label.
    pub require_provenance: bool,
}

impl PolicySpec {
    pub fn new(name: impl Into<String>, modes: Vec<VerificationMode>) -> Result<Self, PolicyError> {
        if modes.is_empty() {
            return Err(PolicyError::Invalid("a policy needs at least one mode".into()));
        }
        for (i, mode) in modes.iter().enumerate() {
            mode.validate()?;
            if modes[..i].contains(mode) {
                return Err(PolicyError::Invalid(format!("duplicate mode {mode}")));
            }
        }
        Ok(PolicySpec {
            name: name.into(),
            modes,
            require_provenance: false,
        })
    }

    pub fn with_provenance(mut self, require: bool) -> Self {
        self.require_provenance = require;
        self
    }

    pub fn modes(&self) -> &[VerificationMode] {
        &self.modes
    }

    pub fn strict() -> Self {
        preset("strict").expect("preset")
    }

    /// Canonical JSON policy document.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(PolicyDoc::from(self)).expect("policy serializes")
    }
}

pub const PRESETS: [&str; 5] = ["strict", "round1", "round2", "int", "tolerant"];

pub fn preset(name: &str) -> Option<PolicySpec> {
    let modes = match name {
        "strict" => vec![VerificationMode::Exact],
        "round1" => vec![VerificationMode::Exact, VerificationMode::Round { places: 1 }],
        "round2" => vec![VerificationMode::Exact, VerificationMode::Round { places: 2 }],
        "int" => vec![VerificationMode::Exact, VerificationMode::Round { places: 0 }],
        "tolerant" => vec![
            VerificationMode::Exact,
            VerificationMode::Round { places: 1 },
            VerificationMode::Alias {
                scales: default_scale_table(),
                infer_scale: false,
            },
            VerificationMode::Tolerance {
                delta: Decimal::zero(),
                rho: Decimal::parse("0.01").expect("literal"),
                qualifiers: default_qualifiers(),
            },
        ],
        _ => return None,
    };
    Some(PolicySpec::new(name, modes).expect("presets are valid"))
}

/// Parses a preset name or a JSON policy document.
pub fn parse_policy(spec: &str) -> Result<PolicySpec, PolicyError> {
    let spec = spec.trim();
    if spec.starts_with('{') {
        let doc: PolicyDoc = serde_json::from_str(spec).map_err(|e| PolicyError::Json(e.to_string()))?;
        return doc.into_spec();
    }
    preset(spec).ok_or_else(|| PolicyError::UnknownPreset(spec.to_string()))
}

#[derive(Serialize, Deserialize)]
struct PolicyDoc {
    name: String,
    modes: Vec<ModeDoc>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    require_provenance: bool,
}

/// Wire form of a mode; also used for labels in annotated documents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModeDoc {
    Exact,
    Round {
        d: u32,
    },
    Alias {
        scales: Vec<ScaleDoc>,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        infer_scale: bool,
    },
    Tolerance {
        delta: Decimal,
        rho: Decimal,
        qualifiers: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleDoc {
    multiplier: Decimal,
    forms: Vec<String>,
}

impl From<&VerificationMode> for ModeDoc {
    fn from(mode: &VerificationMode) -> Self {
        match mode {
            VerificationMode::Exact => ModeDoc::Exact,
            VerificationMode::Round { places } => ModeDoc::Round { d: *places },
            VerificationMode::Alias { scales, infer_scale } => ModeDoc::Alias {
                scales: scales
                    .iter()
                    .map(|s| ScaleDoc {
                        multiplier: s.multiplier.clone(),
                        forms: s.forms.iter().cloned().collect(),
                    })
                    .collect(),
                infer_scale: *infer_scale,
            },
            VerificationMode::Tolerance { delta, rho, qualifiers } => ModeDoc::Tolerance {
                delta: delta.clone(),
                rho: rho.clone(),
                qualifiers: qualifiers.iter().cloned().collect(),
            },
        }
    }
}

impl From<ModeDoc> for VerificationMode {
    fn from(doc: ModeDoc) -> Self {
        match doc {
            ModeDoc::Exact => VerificationMode::Exact,
            ModeDoc::Round { d } => VerificationMode::Round { places: d },
            ModeDoc::Alias { scales, infer_scale } => VerificationMode::Alias {
                scales: scales
                    .into_iter()
                    .map(|s| ScaleAlias {
                        multiplier: s.multiplier,
                        forms: s.forms.into_iter().collect(),
                    })
                    .collect(),
                infer_scale,
            },
            ModeDoc::Tolerance { delta, rho, qualifiers } => VerificationMode::Tolerance {
                delta,
                rho,
                qualifiers: qualifiers.into_iter().map(|q| q.to_lowercase()).collect(),
            },
        }
    }
}

impl From<&PolicySpec> for PolicyDoc {
    fn from(p: &PolicySpec) -> Self {
        PolicyDoc {
            name: p.name.clone(),
            modes: p.modes.iter().map(ModeDoc::from).collect(),
            require_provenance: p.require_provenance,
        }
    }
}

impl PolicyDoc {
    fn into_spec(self) -> Result<PolicySpec, PolicyError> {
        let modes = self.modes.into_iter().map(VerificationMode::from).collect();
        Ok(PolicySpec::new(self.name, modes)?.with_provenance(self.require_provenance))
    }
}

/// A token's numeric payload, normalized into the claim's unit, together
/// with the words around it that the alias and tolerance relations consult.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedPayload {
    pub value: Decimal,
    /// Canonical unit written with the number, if any.
    pub unit_text: Option<String>,
    /// Candidate scale words: words after the number inside the payload and
    /// the words following the token.
    pub scale_words: Vec<String>,
    /// Lowercased words in the qualifier window before the token and inside
    /// the payload.
    pub context_words: Vec<String>,
}

impl NormalizedPayload {
    pub fn bare(value: Decimal) -> Self {
        NormalizedPayload {
            value,
            unit_text: None,
            scale_words: Vec::new(),
            context_words: Vec::new(),
        }
    }

    pub fn with_scale_word(mut self, word: &str) -> Self {
        self.scale_words.push(word.to_string());
        self
    }

    pub fn with_qualifier(mut self, word: &str) -> Self {
        self.context_words.push(word.to_lowercase());
        self
    }

    pub fn has_qualifier(&self, qualifiers: &BTreeSet<String>) -> bool {
        self.context_words.iter().any(|w| qualifiers.contains(w))
    }

    /// Whether any candidate word is a form in `scales`.
    pub fn has_scale_word(&self, scales: &[ScaleAlias]) -> bool {
        self.scale_words.iter().any(|w| scales.iter().any(|s| s.matches(w)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    /// First mode in policy order that held.
    pub mode: Option<VerificationMode>,
    pub detail: String,
}

impl MatchResult {
    pub fn matched(&self) -> bool {
        self.mode.is_some()
    }
}

pub fn check_exact(payload: &NormalizedPayload, claim: &Claim) -> bool {
    payload.value == claim.value
}

pub fn check_round(payload: &NormalizedPayload, claim: &Claim, places: u32) -> bool {
    payload.value.round_half_away(places) == claim.value.round_half_away(places)
}

pub fn check_alias(payload: &NormalizedPayload, claim: &Claim, scales: &[ScaleAlias], infer_scale: bool) -> bool {
    let fits = |scale: &ScaleAlias| &payload.value * &scale.multiplier == claim.value;
    let marked = payload
        .scale_words
        .iter()
        .any(|w| scales.iter().any(|s| s.matches(w) && fits(s)));
    marked || (infer_scale && !payload.has_scale_word(scales) && scales.iter().any(fits))
}

/// Half-width of the tolerance interval around `reference`.
pub fn tolerance_half_width(reference: &Decimal, delta: &Decimal, rho: &Decimal) -> Decimal {
    delta.clone().max(rho * &reference.abs())
}

pub fn check_tolerance(
    payload: &NormalizedPayload,
    claim: &Claim,
    delta: &Decimal,
    rho: &Decimal,
    qualifiers: &BTreeSet<String>,
) -> bool {
    if !payload.has_qualifier(qualifiers) {
        return false;
    }
    let half = tolerance_half_width(&claim.value, delta, rho);
    let low = &claim.value - &half;
    let high = &claim.value + &half;
    low <= payload.value && payload.value <= high
}

pub fn check_mode(payload: &NormalizedPayload, claim: &Claim, mode: &VerificationMode) -> bool {
    match mode {
        VerificationMode::Exact => check_exact(payload, claim),
        VerificationMode::Round { places } => check_round(payload, claim, *places),
        VerificationMode::Alias { scales, infer_scale } => check_alias(payload, claim, scales, *infer_scale),
        VerificationMode::Tolerance { delta, rho, qualifiers } => {
            check_tolerance(payload, claim, delta, rho, qualifiers)
        }
    }
}

pub fn evaluate(payload: &NormalizedPayload, claim: &Claim, policy: &PolicySpec) -> MatchResult {
    if let Some(mode) = policy.modes.iter().find(|m| check_mode(payload, claim, m)) {
        return MatchResult {
            mode: Some(mode.clone()),
            detail: format!("{} matches claim {} under {mode}", payload.value, claim.claim_id),
        };
    }
    let gap = (&payload.value - &claim.value).abs();
    MatchResult {
        mode: None,
        detail: format!(
            "{} differs from claim {} value {} by {gap}; no mode of policy `{}` holds",
            payload.value, claim.claim_id, claim.value, policy.name
        ),
    }
}

/// Syntactic refinement: `stricter` verifies a subset of what `looser`
/// verifies, on every input.
///
/// Each mode of `stricter` must be dominated by some mode of `looser`:
/// Exact by Exact or any Round; Round(d) only by Round(d) (rounding at
/// different precisions does not nest); Alias by an alias with a superset of
/// (multiplier, form) pairs, inference requiring an identical table;
/// Tolerance by a tolerance with larger bounds and a qualifier superset.
/// Requiring provenance in `looser` forces it in `stricter`.
pub fn refines(stricter: &PolicySpec, looser: &PolicySpec) -> bool {
    if looser.require_provenance && !stricter.require_provenance {
        return false;
    }
    stricter
        .modes
        .iter()
        .all(|a| looser.modes.iter().any(|b| dominated(a, b)))
}

fn scale_pairs(scales: &[ScaleAlias]) -> BTreeSet<(&Decimal, &str)> {
    scales
        .iter()
        .flat_map(|s| s.forms.iter().map(move |f| (&s.multiplier, f.as_str())))
        .collect()
}

fn dominated(a: &VerificationMode, b: &VerificationMode) -> bool {
    use VerificationMode::*;
    match (a, b) {
        (Exact, Exact) | (Exact, Round { .. }) => true,
        (Round { places: p1 }, Round { places: p2 }) => p1 == p2,
        (
            Alias {
                scales: s1,
                infer_scale: i1,
            },
            Alias {
                scales: s2,
                infer_scale: i2,
            },
        ) => {
            let (p1, p2) = (scale_pairs(s1), scale_pairs(s2));
            if *i1 {
                *i2 && p1 == p2
            } else {
                p1.is_subset(&p2)
            }
        }
        (
            Tolerance {
                delta: d1,
                rho: r1,
                qualifiers: q1,
            },
            Tolerance {
                delta: d2,
                rho: r2,
                qualifiers: q2,
            },
        ) => d1 <= d2 && r1 <= r2 && q1.is_subset(q2),
        _ => false,
    }
}
