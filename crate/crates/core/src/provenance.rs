//! Claim authenticity: Ed25519 signatures over a canonical claim encoding and
//! SHA-256 Merkle inclusion proofs.
//!
//! The signed bytes are the sorted-key, whitespace-free JSON object over
//! `claim_id`, `entity`, `indicator`, `time`, `unit` and `value` (canonical
//! decimal string). Metadata, signatures and proofs are not covered.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::claim::{Claim, ClaimIndex, ClaimSet};

pub type Hash = [u8; 32];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProvenanceError {
    #[error("unsupported signature algorithm `{0}`")]
    UnsupportedAlgorithm(String),
    #[error("claim `{0}` carries no signature")]
    MissingSignature(String),
    #[error("claim `{0}` carries no Merkle proof")]
    MissingProof(String),
    #[error("Merkle proof depth {depth} cannot address leaf {leaf_index}")]
    DepthMismatch { depth: usize, leaf_index: u64 },
    #[error("invalid key: {0}")]
    InvalidKey(String),
    #[error("cannot build a Merkle tree over an empty claim set")]
    EmptyClaimSet,
    #[error("malformed keyring: {0}")]
    Keyring(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SignatureAlgorithm {
    Ed25519,
}

impl SignatureAlgorithm {
    pub fn id(self) -> &'static str {
        match self {
            SignatureAlgorithm::Ed25519 => "ed25519",
        }
    }
}

impl FromStr for SignatureAlgorithm {
    type Err = ProvenanceError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ed25519" | "eddsa" => Ok(SignatureAlgorithm::Ed25519),
            _ => Err(ProvenanceError::UnsupportedAlgorithm(s.to_string())),
        }
    }
}

impl fmt::Display for SignatureAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sibling {
    #[serde(with = "hex_hash")]
    pub hash: Hash,
    pub side: Side,
}

/// Inclusion proof of one claim in a published Merkle tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MerkleProof {
    pub leaf_index: u64,
    pub siblings: Vec<Sibling>,
    #[serde(with = "hex_hash")]
    pub root: Hash,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "base64_opt")]
    pub root_signature: Option<Vec<u8>>,
}

/// A provider's public key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrustAnchor {
    pub provider_id: String,
    pub public_key: Vec<u8>,
    pub accepted_algorithms: BTreeSet<SignatureAlgorithm>,
}

impl TrustAnchor {
    pub fn ed25519(provider_id: impl Into<String>, public_key: Vec<u8>) -> Result<Self, ProvenanceError> {
        let anchor = TrustAnchor {
            provider_id: provider_id.into(),
            public_key,
            accepted_algorithms: BTreeSet::from([SignatureAlgorithm::Ed25519]),
        };
        anchor.validate()?;
        Ok(anchor)
    }

    fn validate(&self) -> Result<(), ProvenanceError> {
        for alg in &self.accepted_algorithms {
            match alg {
                SignatureAlgorithm::Ed25519 => {
                    verifying_key(&self.public_key)?;
                }
            }
        }
        Ok(())
    }

    fn verify(&self, alg: SignatureAlgorithm, message: &[u8], signature: &[u8]) -> bool {
        if !self.accepted_algorithms.contains(&alg) {
            return false;
        }
        match alg {
            SignatureAlgorithm::Ed25519 => {
                let Ok(key) = verifying_key(&self.public_key) else {
                    return false;
                };
                let Ok(signature) = Signature::from_slice(signature) else {
                    return false;
                };
                key.verify_strict(message, &signature).is_ok()
            }
        }
    }
}

/// Trust anchors plus optionally pinned Merkle roots.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Keyring {
    pub anchors: Vec<TrustAnchor>,
    pub trusted_roots: BTreeSet<Hash>,
}

#[derive(Serialize, Deserialize)]
struct KeyringFile {
    #[serde(default)]
    anchors: Vec<AnchorRecord>,
    #[serde(default)]
    trusted_roots: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct AnchorRecord {
    provider_id: String,
    public_key: String,
    #[serde(default = "default_algorithms")]
    algorithms: Vec<String>,
}

fn default_algorithms() -> Vec<String> {
    vec![SignatureAlgorithm::Ed25519.id().to_string()]
}

impl Keyring {
    /// Parses a JSON keyring:
    /// `{"anchors":[{"provider_id","public_key":base64,"algorithms":[..]}],"trusted_roots":[hex]}`.
    pub fn from_json(bytes: &[u8]) -> Result<Self, ProvenanceError> {
        let file: KeyringFile = serde_json::from_slice(bytes).map_err(|e| ProvenanceError::Keyring(e.to_string()))?;
        let mut keyring = Keyring::default();
        for record in file.anchors {
            let public_key = BASE64
                .decode(record.public_key.as_bytes())
                .map_err(|e| ProvenanceError::Keyring(format!("{}: public_key: {e}", record.provider_id)))?;
            let accepted_algorithms = record
                .algorithms
                .iter()
                .map(|a| a.parse())
                .collect::<Result<BTreeSet<_>, _>>()?;
            let anchor = TrustAnchor {
                provider_id: record.provider_id,
                public_key,
                accepted_algorithms,
            };
            anchor.validate()?;
            keyring.anchors.push(anchor);
        }
        for root in file.trusted_roots {
            keyring
                .trusted_roots
                .insert(parse_hash(&root).map_err(ProvenanceError::Keyring)?);
        }
        Ok(keyring)
    }

    pub fn to_json(&self) -> String {
        let file = KeyringFile {
            anchors: self
                .anchors
                .iter()
                .map(|a| AnchorRecord {
                    provider_id: a.provider_id.clone(),
                    public_key: BASE64.encode(&a.public_key),
                    algorithms: a.accepted_algorithms.iter().map(|x| x.id().to_string()).collect(),
                })
                .collect(),
            trusted_roots: self.trusted_roots.iter().map(hex::encode).collect(),
        };
        serde_json::to_string_pretty(&file).expect("keyring serializes")
    }
}

/// Deterministic signing payload for a claim.
pub fn canonical_claim_bytes(claim: &Claim) -> Vec<u8> {
    let value = claim.value.canonical();
    let fields: BTreeMap<&str, &str> = BTreeMap::from([
        ("claim_id", claim.claim_id.as_str()),
        ("entity", claim.entity.as_str()),
        ("indicator", claim.indicator.as_str()),
        ("time", claim.time.as_str()),
        ("unit", claim.unit.as_str()),
        ("value", value.as_str()),
    ]);
    serde_json::to_vec(&fields).expect("string map serializes")
}

pub fn leaf_hash(claim: &Claim) -> Hash {
    Sha256::digest(canonical_claim_bytes(claim)).into()
}

fn node_hash(left: &Hash, right: &Hash) -> Hash {
    let mut hasher = Sha256::new();
    hasher.update(left);
    hasher.update(right);
    hasher.finalize().into()
}

fn verifying_key(bytes: &[u8]) -> Result<VerifyingKey, ProvenanceError> {
    let bytes: &[u8; 32] = bytes
        .try_into()
        .map_err(|_| ProvenanceError::InvalidKey(format!("expected 32 bytes, got {}", bytes.len())))?;
    VerifyingKey::from_bytes(bytes).map_err(|e| ProvenanceError::InvalidKey(e.to_string()))
}

fn signing_key(secret: &[u8]) -> Result<SigningKey, ProvenanceError> {
    let seed: &[u8; 32] = secret
        .try_into()
        .map_err(|_| ProvenanceError::InvalidKey(format!("expected a 32-byte seed, got {}", secret.len())))?;
    Ok(SigningKey::from_bytes(seed))
}

/// Public key for a 32-byte Ed25519 secret seed.
pub fn public_key_for(secret: &[u8]) -> Result<Vec<u8>, ProvenanceError> {
    Ok(signing_key(secret)?.verifying_key().to_bytes().to_vec())
}

/// Signs the canonical bytes of `claim` with a 32-byte Ed25519 seed.
pub fn sign_claim(claim: &Claim, secret: &[u8]) -> Result<Vec<u8>, ProvenanceError> {
    let key = signing_key(secret)?;
    Ok(key.sign(&canonical_claim_bytes(claim)).to_bytes().to_vec())
}

pub fn sign_root(root: &Hash, secret: &[u8]) -> Result<Vec<u8>, ProvenanceError> {
    let key = signing_key(secret)?;
    Ok(key.sign(root).to_bytes().to_vec())
}

fn claim_algorithm(claim: &Claim) -> Result<SignatureAlgorithm, ProvenanceError> {
    claim
        .algorithm
        .as_deref()
        .map(str::parse)
        .unwrap_or(Ok(SignatureAlgorithm::Ed25519))
}

pub fn verify_claim_signature(claim: &Claim, anchor: &TrustAnchor) -> Result<bool, ProvenanceError> {
    let signature = claim
        .signature
        .as_deref()
        .ok_or_else(|| ProvenanceError::MissingSignature(claim.claim_id.clone()))?;
    let alg = claim_algorithm(claim)?;
    Ok(anchor.verify(alg, &canonical_claim_bytes(claim), signature))
}

/// Folds the proof path from `leaf` and compares with the proof's root.
///
/// Sibling sides must agree with the bits of `leaf_index` (bit set means the
/// running node is a right child, so the sibling sits on the left).
pub fn verify_merkle_path(leaf: &Hash, proof: &MerkleProof) -> Result<bool, ProvenanceError> {
    let depth = proof.siblings.len();
    if depth < 64 && proof.leaf_index >> depth != 0 {
        return Err(ProvenanceError::DepthMismatch {
            depth,
            leaf_index: proof.leaf_index,
        });
    }
    let mut node = *leaf;
    for (level, sibling) in proof.siblings.iter().enumerate() {
        let is_right_child = level < 64 && (proof.leaf_index >> level) & 1 == 1;
        node = match (sibling.side, is_right_child) {
            (Side::Left, true) => node_hash(&sibling.hash, &node),
            (Side::Right, false) => node_hash(&node, &sibling.hash),
            _ => return Ok(false),
        };
    }
    Ok(node == proof.root)
}

/// Checks the claim's inclusion proof; a present root signature must also
/// verify under `anchor`.
pub fn verify_merkle_inclusion(claim: &Claim, anchor: &TrustAnchor) -> Result<bool, ProvenanceError> {
    let proof = claim
        .merkle_proof
        .as_ref()
        .ok_or_else(|| ProvenanceError::MissingProof(claim.claim_id.clone()))?;
    if !verify_merkle_path(&leaf_hash(claim), proof)? {
        return Ok(false);
    }
    Ok(match &proof.root_signature {
        Some(sig) => anchor.verify(SignatureAlgorithm::Ed25519, &proof.root, sig),
        None => true,
    })
}

/// Root and per-leaf proofs, in claim-set order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MerkleTree {
    pub root: Hash,
    pub proofs: Vec<MerkleProof>,
}

/// Balanced binary tree over leaf hashes; an odd node at any level is paired
/// with itself.
pub fn build_merkle_tree(claims: &ClaimSet) -> Result<MerkleTree, ProvenanceError> {
    if claims.is_empty() {
        return Err(ProvenanceError::EmptyClaimSet);
    }
    let mut levels: Vec<Vec<Hash>> = vec![claims.claims().iter().map(leaf_hash).collect()];
    while levels.last().map_or(0, Vec::len) > 1 {
        let level = levels.last().unwrap();
        let next = level
            .chunks(2)
            .map(|pair| node_hash(&pair[0], pair.get(1).unwrap_or(&pair[0])))
            .collect();
        levels.push(next);
    }
    let root = levels.last().unwrap()[0];
    let depth = levels.len() - 1;
    let proofs = (0..claims.len())
        .map(|leaf| {
            let mut index = leaf;
            let siblings = levels[..depth]
                .iter()
                .map(|level| {
                    let sibling_index = index ^ 1;
                    let hash = *level.get(sibling_index).unwrap_or(&level[index]);
                    let side = if index & 1 == 1 { Side::Left } else { Side::Right };
                    index >>= 1;
                    Sibling { hash, side }
                })
                .collect();
            MerkleProof {
                leaf_index: leaf as u64,
                siblings,
                root,
                root_signature: None,
            }
        })
        .collect();
    Ok(MerkleTree { root, proofs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProvenanceStatus {
    /// A signature or a Merkle proof with a signed or pinned root verified.
    Valid,
    /// Provenance material is present but nothing verifies.
    Invalid,
    /// The claim carries neither signature nor proof.
    Absent,
}

pub fn check_provenance(claim: &Claim, keyring: &Keyring) -> ProvenanceStatus {
    if claim.signature.is_none() && claim.merkle_proof.is_none() {
        return ProvenanceStatus::Absent;
    }
    let signed = claim.signature.is_some()
        && keyring
            .anchors
            .iter()
            .any(|a| verify_claim_signature(claim, a).unwrap_or(false));
    if signed {
        return ProvenanceStatus::Valid;
    }
    if let Some(proof) = &claim.merkle_proof {
        if verify_merkle_path(&leaf_hash(claim), proof).unwrap_or(false) {
            let anchored = match &proof.root_signature {
                Some(sig) => keyring
                    .anchors
                    .iter()
                    .any(|a| a.verify(SignatureAlgorithm::Ed25519, &proof.root, sig)),
                None => false,
            };
            if anchored || keyring.trusted_roots.contains(&proof.root) {
                return ProvenanceStatus::Valid;
            }
        }
    }
    ProvenanceStatus::Invalid
}

/// The sub-index of claims whose provenance verifies, plus the rejected ids.
pub fn provenance_view(index: &ClaimIndex, keyring: &Keyring) -> (ClaimIndex, Vec<(String, ProvenanceStatus)>) {
    let mut rejected = Vec::new();
    let view = index.retain(|claim| match check_provenance(claim, keyring) {
        ProvenanceStatus::Valid => true,
        status => {
            rejected.push((claim.claim_id.clone(), status));
            false
        }
    });
    rejected.sort();
    (view, rejected)
}

fn parse_hash(text: &str) -> Result<Hash, String> {
    let bytes = hex::decode(text).map_err(|e| format!("`{text}`: {e}"))?;
    bytes
        .try_into()
        .map_err(|b: Vec<u8>| format!("`{text}`: expected 32 bytes, got {}", b.len()))
}

mod hex_hash {
    use super::*;

    pub fn serialize<S: Serializer>(hash: &Hash, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(hash))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Hash, D::Error> {
        let text = String::deserialize(d)?;
        parse_hash(&text).map_err(serde::de::Error::custom)
    }
}

mod base64_opt {
    use super::*;

    pub fn serialize<S: Serializer>(bytes: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match bytes {
            Some(b) => s.serialize_str(&BASE64.encode(b)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|t| BASE64.decode(t.as_bytes()).map_err(serde::de::Error::custom))
            .transpose()
    }
}
