//! Claims, claim sets and the identifier index.
//!
//! Two ingestion formats are accepted:
//!
//! * the canonical claim file, `{"version": 1, "claims": [...]}` with decimal
//!   values written as strings, and
//! * the nested retriever payload (`data[].data[]` entries carrying
//!   `country`, `date`, `value` and `claim_id`), accepted verbatim.
//!
//! Values never pass through `f64`: JSON numbers are captured as raw text and
//! parsed straight into [`Decimal`].

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::decimal::Decimal;
use crate::provenance::MerkleProof;

pub const CLAIM_FILE_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClaimError {
    #[error("malformed JSON at byte {offset}: {message}")]
    Json { offset: usize, message: String },
    #[error("unsupported claim file version {0}")]
    UnsupportedVersion(u64),
    #[error("duplicate claim_id `{0}`")]
    DuplicateId(String),
    #[error("claim #{index} has an empty claim_id")]
    EmptyId { index: usize },
    #[error("claim `{claim_id}`: value `{value}` is not a finite decimal")]
    InvalidValue { claim_id: String, value: String },
    #[error("claim `{claim_id}`: unit `{unit}` is not in the unit table")]
    UnknownUnit { claim_id: String, unit: String },
    #[error("claim `{claim_id}`: {message}")]
    InvalidField { claim_id: String, message: String },
    #[error("malformed retriever payload: {0}")]
    Payload(String),
}

/// One authoritative structured fact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Claim {
    pub claim_id: String,
    pub indicator: String,
    pub entity: String,
    pub time: String,
    pub value: Decimal,
    pub unit: String,
    pub metadata: BTreeMap<String, String>,
    pub signature: Option<Vec<u8>>,
    /// Signature algorithm identifier, e.g. `ed25519`.
    pub algorithm: Option<String>,
    pub merkle_proof: Option<MerkleProof>,
}

impl Claim {
    pub fn new(
        claim_id: impl Into<String>,
        indicator: impl Into<String>,
        entity: impl Into<String>,
        time: impl Into<String>,
        value: Decimal,
        unit: impl Into<String>,
    ) -> Self {
        Claim {
            claim_id: claim_id.into(),
            indicator: indicator.into(),
            entity: entity.into(),
            time: time.into(),
            value,
            unit: unit.into(),
            metadata: BTreeMap::new(),
            signature: None,
            algorithm: None,
            merkle_proof: None,
        }
    }
}

/// Units a claim may carry, each with the surface aliases that mean the same
/// unit in generated text (`percent` for `%`, `$` for `USD`, ...).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitTable {
    units: BTreeMap<String, BTreeSet<String>>,
}

impl Default for UnitTable {
    fn default() -> Self {
        let rows: &[(&str, &[&str])] = &[
            ("%", &["percent", "per cent", "pct"]),
            ("USD", &["US$", "$"]),
            ("EUR", &["€"]),
            ("GBP", &["£"]),
            ("JPY", &["¥"]),
            ("CNY", &[]),
            ("INR", &["₹"]),
            ("PHP", &["₱"]),
            ("CAD", &[]),
            ("AUD", &[]),
            ("CHF", &[]),
            ("kg", &[]),
            ("t", &["tonnes"]),
            ("km", &[]),
            ("km2", &["sq. km"]),
            ("years", &[]),
            ("persons", &["people"]),
        ];
        let mut table = UnitTable { units: BTreeMap::new() };
        for (unit, aliases) in rows {
            table.insert(unit, aliases.iter().copied());
        }
        table
    }
}

impl UnitTable {
    pub fn empty() -> Self {
        UnitTable { units: BTreeMap::new() }
    }

    pub fn insert<'a>(&mut self, unit: &str, aliases: impl IntoIterator<Item = &'a str>) {
        self.units
            .entry(unit.to_string())
            .or_default()
            .extend(aliases.into_iter().map(str::to_string));
    }

    /// Maps a unit or alias to its canonical unit. The empty string maps to
    /// itself.
    pub fn canonicalize(&self, text: &str) -> Option<String> {
        if text.is_empty() {
            return Some(String::new());
        }
        if self.units.contains_key(text) {
            return Some(text.to_string());
        }
        self.units
            .iter()
            .find(|(_, aliases)| aliases.contains(text))
            .map(|(unit, _)| unit.clone())
    }

    /// Every surface form (units and aliases), longest first so that prefix
    /// matching prefers `US$` over `$`.
    pub fn surface_forms(&self) -> Vec<(String, String)> {
        let mut forms: Vec<(String, String)> = self
            .units
            .iter()
            .flat_map(|(unit, aliases)| {
                std::iter::once((unit.clone(), unit.clone()))
                    .chain(aliases.iter().map(move |a| (a.clone(), unit.clone())))
            })
            .collect();
        forms.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        forms
    }
}

/// An ordered collection of claims with unique identifiers.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClaimSet {
    claims: Vec<Claim>,
    ids: HashSet<String>,
    pub source_descriptor: String,
}

impl ClaimSet {
    pub fn new(source_descriptor: impl Into<String>) -> Self {
        ClaimSet {
            claims: Vec::new(),
            ids: HashSet::new(),
            source_descriptor: source_descriptor.into(),
        }
    }

    /// Builds a set, rejecting duplicate or empty identifiers.
    pub fn from_claims(
        source_descriptor: impl Into<String>,
        claims: impl IntoIterator<Item = Claim>,
    ) -> Result<Self, ClaimError> {
        let mut set = ClaimSet::new(source_descriptor);
        for claim in claims {
            set.push(claim)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, claim: Claim) -> Result<(), ClaimError> {
        if claim.claim_id.is_empty() {
            return Err(ClaimError::EmptyId {
                index: self.claims.len(),
            });
        }
        if !self.ids.insert(claim.claim_id.clone()) {
            return Err(ClaimError::DuplicateId(claim.claim_id));
        }
        self.claims.push(claim);
        Ok(())
    }

    pub fn claims(&self) -> &[Claim] {
        &self.claims
    }

    /// Mutable access for attaching signatures and proofs. Callers must not
    /// change `claim_id`.
    pub fn claims_mut(&mut self) -> &mut [Claim] {
        &mut self.claims
    }

    pub fn len(&self) -> usize {
        self.claims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.claims.is_empty()
    }

    pub fn into_claims(self) -> Vec<Claim> {
        self.claims
    }

    /// Serializes to the canonical claim file format.
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let file = ClaimFileOut {
            version: CLAIM_FILE_VERSION,
            claims: self.claims.iter().map(ClaimRecordOut::from).collect(),
        };
        let mut bytes = serde_json::to_vec_pretty(&file).expect("claim file serializes");
        bytes.push(b'\n');
        bytes
    }
}

/// Read access to claims by identifier.
pub trait ClaimLookup {
    fn lookup(&self, claim_id: &str) -> Option<&Claim>;

    /// Human-readable name of the claim source.
    fn describe(&self) -> String {
        String::new()
    }
}

/// Immutable identifier index over a [`ClaimSet`].
#[derive(Debug, Clone, Default)]
pub struct ClaimIndex {
    by_id: HashMap<String, Claim>,
    descriptor: String,
}

impl ClaimIndex {
    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    pub fn iter(&self) -> impl Iterator<Item = &Claim> {
        self.by_id.values()
    }

    pub fn contains(&self, claim_id: &str) -> bool {
        self.by_id.contains_key(claim_id)
    }

    /// A new index holding only the claims accepted by `keep`.
    pub fn retain(&self, mut keep: impl FnMut(&Claim) -> bool) -> ClaimIndex {
        ClaimIndex {
            by_id: self
                .by_id
                .iter()
                .filter(|(_, c)| keep(c))
                .map(|(id, c)| (id.clone(), c.clone()))
                .collect(),
            descriptor: self.descriptor.clone(),
        }
    }
}

impl ClaimLookup for ClaimIndex {
    fn lookup(&self, claim_id: &str) -> Option<&Claim> {
        self.by_id.get(claim_id)
    }

    fn describe(&self) -> String {
        self.descriptor.clone()
    }
}

/// Several indexes consulted in order; the first hit wins.
#[derive(Debug, Clone, Copy)]
pub struct Layered<'a> {
    layers: &'a [&'a ClaimIndex],
}

impl<'a> Layered<'a> {
    pub fn new(layers: &'a [&'a ClaimIndex]) -> Self {
        Layered { layers }
    }
}

impl ClaimLookup for Layered<'_> {
    fn lookup(&self, claim_id: &str) -> Option<&Claim> {
        self.layers.iter().find_map(|layer| layer.lookup(claim_id))
    }

    fn describe(&self) -> String {
        let names: Vec<&str> = self
            .layers
            .iter()
            .map(|l| l.descriptor())
            .filter(|d| !d.is_empty())
            .collect();
        names.join(" + ")
    }
}

pub fn index_claims(claims: ClaimSet) -> ClaimIndex {
    let descriptor = claims.source_descriptor.clone();
    let by_id = claims
        .into_claims()
        .into_iter()
        .map(|c| (c.claim_id.clone(), c))
        .collect();
    ClaimIndex { by_id, descriptor }
}

/// Parses a canonical claim file, validating units against the default table.
pub fn parse_claim_file(bytes: &[u8]) -> Result<ClaimSet, ClaimError> {
    parse_claim_file_with(bytes, &UnitTable::default())
}

pub fn parse_claim_file_with(bytes: &[u8], units: &UnitTable) -> Result<ClaimSet, ClaimError> {
    let file: ClaimFileIn = from_json(bytes)?;
    if file.version != CLAIM_FILE_VERSION {
        return Err(ClaimError::UnsupportedVersion(file.version));
    }
    let mut set = ClaimSet::new("claim file");
    for (index, record) in file.claims.into_iter().enumerate() {
        set.push(record.into_claim(index, units)?)?;
    }
    Ok(set)
}

/// Flattens a retriever payload into a claim set. Entries without a
/// `claim_id` are skipped: nothing can ever reference them.
pub fn ingest_retriever_payload(json: &[u8]) -> Result<ClaimSet, ClaimError> {
    let payload: RetrieverPayload = from_json(json)?;
    let mut set = ClaimSet::new("retriever payload");
    for indicator in payload.data {
        for entry in indicator.data {
            let Some(claim_id) = entry.claim_id.filter(|id| !id.is_empty()) else {
                continue;
            };
            let value = match entry.value.as_deref() {
                Some(raw) => raw_decimal(raw).ok_or_else(|| ClaimError::InvalidValue {
                    claim_id: claim_id.clone(),
                    value: raw.get().to_string(),
                })?,
                None => {
                    return Err(ClaimError::InvalidValue {
                        claim_id,
                        value: "<missing>".to_string(),
                    })
                }
            };
            let mut claim = Claim::new(
                claim_id,
                indicator.indicator_id.clone(),
                entry.country.unwrap_or_default(),
                entry.date.unwrap_or_default(),
                value,
                "",
            );
            if let Some(name) = &indicator.indicator_name {
                claim.metadata.insert("indicator_name".to_string(), name.clone());
            }
            set.push(claim)?;
        }
    }
    Ok(set)
}

/// Accepts either format, telling them apart by the top-level key
/// (`claims` for claim files, `data` for retriever payloads).
pub fn load_claims(bytes: &[u8], units: &UnitTable) -> Result<ClaimSet, ClaimError> {
    #[derive(Deserialize)]
    struct Probe {
        claims: Option<serde::de::IgnoredAny>,
        data: Option<serde::de::IgnoredAny>,
    }
    let probe: Probe = from_json(bytes)?;
    match (probe.claims, probe.data) {
        (Some(_), _) => parse_claim_file_with(bytes, units),
        (None, Some(_)) => ingest_retriever_payload(bytes),
        (None, None) => Err(ClaimError::Payload(
            "expected a `claims` array or a retriever `data` array".to_string(),
        )),
    }
}

fn from_json<'a, T: Deserialize<'a>>(bytes: &'a [u8]) -> Result<T, ClaimError> {
    serde_json::from_slice(bytes).map_err(|e| ClaimError::Json {
        offset: byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    })
}

fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = bytes.split(|&b| b == b'\n').take(line - 1).map(|l| l.len() + 1).sum();
    (line_start + column.saturating_sub(1)).min(bytes.len())
}

/// A JSON string or number holding a decimal.
fn raw_decimal(raw: &RawValue) -> Option<Decimal> {
    let text = raw.get().trim();
    let unquoted = if text.starts_with('"') {
        serde_json::from_str::<String>(text).ok()?
    } else {
        text.to_string()
    };
    Decimal::parse(unquoted.trim()).ok()
}

#[derive(Deserialize)]
struct ClaimFileIn {
    version: u64,
    claims: Vec<ClaimRecordIn>,
}

#[derive(Deserialize)]
struct ClaimRecordIn {
    claim_id: String,
    #[serde(default)]
    indicator: String,
    #[serde(default)]
    entity: String,
    #[serde(default)]
    time: String,
    value: Box<RawValue>,
    #[serde(default)]
    unit: String,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
    #[serde(default)]
    signature: Option<String>,
    #[serde(default)]
    algorithm: Option<String>,
    #[serde(default)]
    merkle_proof: Option<MerkleProof>,
}

impl ClaimRecordIn {
    fn into_claim(self, index: usize, units: &UnitTable) -> Result<Claim, ClaimError> {
        if self.claim_id.is_empty() {
            return Err(ClaimError::EmptyId { index });
        }
        let value = raw_decimal(&self.value).ok_or_else(|| ClaimError::InvalidValue {
            claim_id: self.claim_id.clone(),
            value: self.value.get().to_string(),
        })?;
        let unit = units.canonicalize(&self.unit).ok_or_else(|| ClaimError::UnknownUnit {
            claim_id: self.claim_id.clone(),
            unit: self.unit.clone(),
        })?;
        let signature = self
            .signature
            .map(|s| BASE64.decode(s.as_bytes()))
            .transpose()
            .map_err(|e| ClaimError::InvalidField {
                claim_id: self.claim_id.clone(),
                message: format!("signature is not base64: {e}"),
            })?;
        Ok(Claim {
            claim_id: self.claim_id,
            indicator: self.indicator,
            entity: self.entity,
            time: self.time,
            value,
            unit,
            metadata: self.metadata,
            signature,
            algorithm: self.algorithm,
            merkle_proof: self.merkle_proof,
        })
    }
}

#[derive(Serialize)]
struct ClaimFileOut<'a> {
    version: u64,
    claims: Vec<ClaimRecordOut<'a>>,
}

/// Wire form of a claim, also used by the service's claim endpoint.
#[derive(Serialize)]
pub struct ClaimRecordOut<'a> {
    pub claim_id: &'a str,
    pub indicator: &'a str,
    pub entity: &'a str,
    pub time: &'a str,
    pub value: &'a Decimal,
    pub unit: &'a str,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: &'a BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub signature: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub merkle_proof: Option<&'a MerkleProof>,
}

impl<'a> From<&'a Claim> for ClaimRecordOut<'a> {
    fn from(c: &'a Claim) -> Self {
        ClaimRecordOut {
            claim_id: &c.claim_id,
            indicator: &c.indicator,
            entity: &c.entity,
            time: &c.time,
            value: &c.value,
            unit: &c.unit,
            metadata: &c.metadata,
            signature: c.signature.as_ref().map(|s| BASE64.encode(s)),
            algorithm: c.algorithm.as_deref(),
            merkle_proof: c.merkle_proof.as_ref(),
        }
    }
}

#[derive(Deserialize)]
struct RetrieverPayload {
    data: Vec<RetrieverIndicator>,
}

#[derive(Deserialize)]
struct RetrieverIndicator {
    #[serde(default)]
    indicator_id: String,
    #[serde(default)]
    indicator_name: Option<String>,
    #[serde(default)]
    data: Vec<RetrieverEntry>,
}

#[derive(Deserialize)]
struct RetrieverEntry {
    #[serde(default)]
    country: Option<String>,
    #[serde(default)]
    date: Option<String>,
    #[serde(default)]
    value: Option<Box<RawValue>>,
    #[serde(default)]
    claim_id: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const RUNNING_EXAMPLE: &str = r#"{"version":1,"claims":[
        {"claim_id":"clm_7ef6","indicator":"GDP growth","entity":"PHL","time":"2024","value":"5.7","unit":"%"}
    ]}"#;

    const GDP_PAYLOAD: &str = r#"{
      "data": [
        {
          "indicator_id": "NY.GDP.MKTP.KD.ZG",
          "indicator_name": "GDP growth (annual %)",
          "data": [
            {"country": "Philippines", "date": "2024", "value": 5.69201612823412, "claim_id": "0328"}
          ]
        }
      ],
      "note": {"NY.GDP.MKTP.KD.ZG": ""}
    }"#;

    #[test]
    fn parses_running_example_claim() {
        let set = parse_claim_file(RUNNING_EXAMPLE.as_bytes()).unwrap();
        assert_eq!(set.len(), 1);
        let c = &set.claims()[0];
        assert_eq!(c.claim_id, "clm_7ef6");
        assert_eq!(c.entity, "PHL");
        assert_eq!(c.value.canonical(), "5.7");
        assert_eq!(c.unit, "%");
    }

    #[test]
    fn empty_claims_array() {
        let set = parse_claim_file(br#"{"version":1,"claims":[]}"#).unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let json = br#"{"version":1,"claims":[
            {"claim_id":"0328","value":"1"},{"claim_id":"0328","value":"2"}]}"#;
        let err = parse_claim_file(json).unwrap_err();
        assert_eq!(err, ClaimError::DuplicateId("0328".into()));
        assert!(err.to_string().contains("0328"));
    }

    #[test]
    fn bad_values_name_the_claim() {
        for value in [r#""abc""#, r#""NaN""#, "null", "true", r#""1,000""#] {
            let json = format!(r#"{{"version":1,"claims":[{{"claim_id":"x1","value":{value}}}]}}"#);
            let err = parse_claim_file(json.as_bytes()).unwrap_err();
            assert!(
                matches!(&err, ClaimError::InvalidValue { claim_id, .. } if claim_id == "x1"),
                "{value}: {err:?}"
            );
        }
    }

    #[test]
    fn malformed_json_reports_byte_offset() {
        let json = b"{\"version\":1,\n\"claims\":[ oops ]}";
        match parse_claim_file(json).unwrap_err() {
            ClaimError::Json { offset, .. } => assert_eq!(offset, 25),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_unit_and_version() {
        let json = br#"{"version":1,"claims":[{"claim_id":"a","value":"1","unit":"furlongs"}]}"#;
        assert!(matches!(parse_claim_file(json), Err(ClaimError::UnknownUnit { .. })));
        assert_eq!(
            parse_claim_file(br#"{"version":2,"claims":[]}"#),
            Err(ClaimError::UnsupportedVersion(2))
        );
    }

    #[test]
    fn unit_aliases_canonicalize() {
        let json = br#"{"version":1,"claims":[{"claim_id":"a","value":"1","unit":"percent"}]}"#;
        assert_eq!(parse_claim_file(json).unwrap().claims()[0].unit, "%");
    }

    #[test]
    fn ingests_gdp_payload() {
        let set = ingest_retriever_payload(GDP_PAYLOAD.as_bytes()).unwrap();
        assert_eq!(set.len(), 1);
        let c = &set.claims()[0];
        assert_eq!(c.claim_id, "0328");
        assert_eq!(c.indicator, "NY.GDP.MKTP.KD.ZG");
        assert_eq!(c.entity, "Philippines");
        assert_eq!(c.time, "2024");
        assert_eq!(c.value.canonical(), "5.69201612823412");
        assert_eq!(c.unit, "");
    }

    #[test]
    fn empty_payload_and_skipped_entries() {
        assert!(ingest_retriever_payload(br#"{"data":[]}"#).unwrap().is_empty());
        let json = br#"{"data":[{"indicator_id":"X","data":[
            {"country":"A","date":"2020","value":1.5,"claim_id":"k1"},
            {"country":"B","date":"2020","value":2.5},
            {"country":"C","date":"2020","value":null}]}]}"#;
        let set = ingest_retriever_payload(json).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.claims()[0].claim_id, "k1");
    }

    #[test]
    fn payload_value_must_be_numeric() {
        let json = br#"{"data":[{"indicator_id":"X","data":[{"value":"n/a","claim_id":"k1"}]}]}"#;
        assert!(matches!(
            ingest_retriever_payload(json),
            Err(ClaimError::InvalidValue { .. })
        ));
        assert!(matches!(
            ingest_retriever_payload(br#"{"rows":[]}"#),
            Err(ClaimError::Json { .. })
        ));
    }

    #[test]
    fn load_claims_detects_format() {
        let units = UnitTable::default();
        assert_eq!(load_claims(RUNNING_EXAMPLE.as_bytes(), &units).unwrap().len(), 1);
        assert_eq!(load_claims(GDP_PAYLOAD.as_bytes(), &units).unwrap().len(), 1);
        assert!(load_claims(b"{}", &units).is_err());
    }

    #[test]
    fn long_value_survives_serialization_byte_identically() {
        let set = ingest_retriever_payload(GDP_PAYLOAD.as_bytes()).unwrap();
        let text = String::from_utf8(set.to_json_bytes()).unwrap();
        assert!(text.contains(r#""value": "5.69201612823412""#), "{text}");
    }

    #[test]
    fn index_lookup() {
        let index = index_claims(parse_claim_file(RUNNING_EXAMPLE.as_bytes()).unwrap());
        assert_eq!(index.lookup("clm_7ef6").unwrap().value.canonical(), "5.7");
        assert!(index.lookup("clm_7ef7").is_none());
        let empty = index_claims(ClaimSet::default());
        assert!(empty.lookup("clm_7ef6").is_none());
        assert!(empty.lookup("").is_none());
    }

    #[test]
    fn index_over_ten_thousand_claims() {
        let claims = (0..10_000).map(|i| Claim::new(format!("c{i}"), "ind", "E", "2020", Decimal::from_i64(i), ""));
        let index = index_claims(ClaimSet::from_claims("synthetic", claims).unwrap());
        assert_eq!(index.len(), 10_000);
        for i in 0..10_000 {
            assert_eq!(index.lookup(&format!("c{i}")).unwrap().value, Decimal::from_i64(i));
        }
        for i in 10_000..10_100 {
            assert!(index.lookup(&format!("c{i}")).is_none());
        }
    }

    #[test]
    fn layered_lookup_prefers_first_layer() {
        let a =
            index_claims(ClaimSet::from_claims("a", [Claim::new("x", "", "", "", Decimal::from_i64(1), "")]).unwrap());
        let b = index_claims(
            ClaimSet::from_claims(
                "b",
                [
                    Claim::new("x", "", "", "", Decimal::from_i64(2), ""),
                    Claim::new("y", "", "", "", Decimal::from_i64(3), ""),
                ],
            )
            .unwrap(),
        );
        let layers = [&a, &b];
        let view = Layered::new(&layers);
        assert_eq!(view.lookup("x").unwrap().value, Decimal::from_i64(1));
        assert_eq!(view.lookup("y").unwrap().value, Decimal::from_i64(3));
        assert!(view.lookup("z").is_none());
    }

    fn arb_claim() -> impl Strategy<Value = Claim> {
        (
            "[a-z0-9_]{1,8}",
            "[A-Za-z .]{0,12}",
            "[A-Z]{3}",
            "(19|20)[0-9]{2}",
            (-1_000_000_000i64..1_000_000_000, 0u32..8),
            prop::sample::select(vec!["", "%", "USD", "kg"]),
            prop::collection::btree_map("[a-z]{1,5}", "[ -~]{0,10}", 0..3),
        )
            .prop_map(|(id, indicator, entity, time, (mantissa, scale), unit, metadata)| {
                let text = format!("{mantissa}e-{scale}");
                let mut c = Claim::new(id, indicator, entity, time, Decimal::parse(&text).unwrap(), unit);
                c.metadata = metadata;
                c
            })
    }

    proptest! {
        #[test]
        fn claim_file_round_trips(claims in prop::collection::vec(arb_claim(), 0..12)) {
            let mut set = ClaimSet::new("claim file");
            for c in claims {
                let _ = set.push(c);
            }
            let back = parse_claim_file(&set.to_json_bytes()).unwrap();
            prop_assert_eq!(back.len(), set.len());
            for (a, b) in set.claims().iter().zip(back.claims()) {
                prop_assert_eq!(a, b);
                prop_assert_eq!(a.value.canonical(), b.value.canonical());
            }
        }

        #[test]
        fn lookup_succeeds_iff_present(
            ids in prop::collection::btree_set("[a-z]{1,4}", 0..20),
            probe in "[a-z]{1,4}",
        ) {
            let set = ClaimSet::from_claims(
                "p",
                ids.iter().map(|id| Claim::new(id.clone(), "", "", "", Decimal::zero(), "")),
            ).unwrap();
            let index = index_claims(set);
            prop_assert_eq!(index.lookup(&probe).is_some(), ids.contains(&probe));
        }
    }
}
