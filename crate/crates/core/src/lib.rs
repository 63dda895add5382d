//! Verification of numbers in generated text against structured claims.
//!
//! Generated text binds numbers to claims with `<claim id="...">` tags. The
//! verifier labels every numeric span as Verified, Bare or Flagged under a
//! declared policy, and renderers derive marks from those labels alone.
//!
//! ```
//! use pcn_core::{index_claims, parse_claim_file, preset, summarize, verify_document};
//!
//! let claims = parse_claim_file(br#"{"version":1,"claims":[
//!     {"claim_id":"clm_7ef6","indicator":"GDP growth","entity":"PHL",
//!      "time":"2024","value":"5.7","unit":"%"}]}"#).unwrap();
//! let index = index_claims(claims);
//! let doc = verify_document(
//!     r#"Growth was <claim id="clm_7ef6" policy="round1">5.7</claim>% in 2024."#,
//!     &index,
//!     &preset("round1").unwrap(),
//! );
//! let report = summarize(&doc);
//! assert_eq!((report.verified, report.bare, report.flagged), (1, 1, 0));
//! ```

pub mod claim;
pub mod decimal;
pub mod policy;
pub mod provenance;
pub mod render;
pub mod token;
pub mod verify;

pub use claim::{
    index_claims, ingest_retriever_payload, load_claims, parse_claim_file, parse_claim_file_with, Claim, ClaimError,
    ClaimIndex, ClaimLookup, ClaimSet, Layered, UnitTable,
};
pub use decimal::{Decimal, DecimalError};
pub use policy::{
    evaluate, parse_policy, preset, refines, MatchResult, NormalizedPayload, PolicyError, PolicySpec, VerificationMode,
    PRESETS,
};
pub use provenance::{Keyring, MerkleProof, ProvenanceError, ProvenanceStatus, TrustAnchor};
pub use render::{render, render_ansi, render_html, render_json, Format, RenderOptions};
pub use token::{strip_verification_markers, tokenize, Lexicon, ParseReport, Segment, SegmentKind, Span};
pub use verify::{
    label_span, summarize, verify_document, AnnotatedDocument, FlagReason, Label, VerificationReport, Verifier,
};
