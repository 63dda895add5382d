//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines are always
//! printed; the process exits non-zero when any criterion fails.

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use pcn_core::policy::{default_qualifiers, default_scale_table, ScaleAlias};
use pcn_core::provenance::{
    build_merkle_tree, leaf_hash, public_key_for, sign_claim, sign_root, verify_claim_signature, verify_merkle_path,
};
use pcn_core::render::{render_ansi, render_html, Format, RenderOptions};
use pcn_core::{
    index_claims, ingest_retriever_payload, parse_claim_file, parse_policy, preset, refines,
    strip_verification_markers, summarize, verify_document, AnnotatedDocument, Claim, ClaimIndex, ClaimSet, Decimal,
    FlagReason, Keyring, Label, Lexicon, PolicySpec, TrustAnchor, VerificationMode, Verifier,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn d(s: &str) -> Decimal {
    Decimal::parse(s).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// Independent oracle: rational arithmetic, own payload extraction.

mod oracle {
    use super::*;

    pub fn rational(text: &str) -> Option<BigRational> {
        let text = text.replace(',', "");
        let (mantissa, exp) = match text.find(['e', 'E']) {
            Some(i) => (&text[..i], text[i + 1..].parse::<i64>().ok()?),
            None => (&text[..], 0),
        };
        let (neg, digits) = match mantissa.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
        };
        let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
        if int.is_empty() || !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let n: BigInt = format!("{int}{frac}").parse().ok()?;
        let scale = exp - frac.len() as i64;
        let ten = BigInt::from(10);
        let mut r = BigRational::from_integer(n);
        if scale >= 0 {
            r *= BigRational::from_integer(num_traits::pow(ten, scale as usize));
        } else {
            r /= BigRational::from_integer(num_traits::pow(ten, (-scale) as usize));
        }
        Some(if neg { -r } else { r })
    }

    pub fn dec(v: &Decimal) -> BigRational {
        rational(&v.to_string()).expect("decimal text")
    }

    fn round(x: &BigRational, places: u32) -> BigRational {
        let scale = BigRational::from_integer(num_traits::pow(BigInt::from(10), places as usize));
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        let y = x * &scale;
        let r = if y.is_negative() {
            -((-y) + &half).floor()
        } else {
            (y + &half).floor()
        };
        r / scale
    }

    pub fn words(text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut cur = String::new();
        for c in text.chars() {
            if c.is_alphanumeric() {
                cur.push(c);
            } else {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                if c == '~' {
                    out.push("~".into());
                }
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
        out
    }

    fn form_matches(form: &str, word: &str) -> bool {
        if form.chars().count() == 1 {
            form == word
        } else {
            form.to_lowercase() == word.to_lowercase()
        }
    }

    pub struct Token {
        pub value: BigRational,
        pub scale_words: Vec<String>,
        pub context: Vec<String>,
    }

    /// Reads a claim token from its own text and surroundings.
    pub fn read_token(source: &str, span: (usize, usize), expect_id: &str) -> Option<Token> {
        static TAG: OnceLock<Regex> = OnceLock::new();
        static NUMBER: OnceLock<Regex> = OnceLock::new();
        let tag = TAG.get_or_init(|| {
            Regex::new(r#"(?s)^<claim id="([A-Za-z0-9_.\-]+)"(?: policy="[A-Za-z0-9_.\-]+")?>(.*)</claim>$"#).unwrap()
        });
        let number =
            NUMBER.get_or_init(|| Regex::new(r"[+-]?\d{1,3}(?:,\d{3})+(?:\.\d+)?|[+-]?\d+(?:\.\d+)?").unwrap());
        let text = &source[span.0..span.1];
        let caps = tag.captures(text)?;
        if &caps[1] != expect_id {
            return None;
        }
        let payload = caps.get(2)?.as_str();
        let found: Vec<_> = number.find_iter(payload).collect();
        if found.len() != 1 {
            return None;
        }
        let m = found[0];
        let value = rational(m.as_str())?;
        let mut scale_words = words(&payload[m.end()..]);
        scale_words.extend(words(&source[span.1..]).into_iter().take(2));
        let before = words(&source[..span.0]);
        let mut context: Vec<String> = before[before.len().saturating_sub(3)..].to_vec();
        context.extend(words(payload));
        let context = context.into_iter().map(|w| w.to_lowercase()).collect();
        Some(Token {
            value,
            scale_words,
            context,
        })
    }

    pub fn holds(token: &Token, claim: &Claim, mode: &VerificationMode) -> bool {
        let v = dec(&claim.value);
        match mode {
            VerificationMode::Exact => token.value == v,
            VerificationMode::Round { places } => round(&token.value, *places) == round(&v, *places),
            VerificationMode::Alias { scales, infer_scale } => {
                let fits = |s: &ScaleAlias| &token.value * dec(&s.multiplier) == v;
                let marked = token.scale_words.iter().any(|w| {
                    scales
                        .iter()
                        .any(|s| s.forms.iter().any(|f| form_matches(f, w)) && fits(s))
                });
                let unmarked = !token
                    .scale_words
                    .iter()
                    .any(|w| scales.iter().any(|s| s.forms.iter().any(|f| form_matches(f, w))));
                marked || (*infer_scale && unmarked && scales.iter().any(fits))
            }
            VerificationMode::Tolerance { delta, rho, qualifiers } => {
                if !token.context.iter().any(|w| qualifiers.contains(w)) {
                    return false;
                }
                let bound = std::cmp::max(dec(delta), dec(rho) * v.abs());
                (&token.value - &v).abs() <= bound
            }
        }
    }
}

// Random generation.

fn rand_decimal(rng: &mut ChaCha8Rng) -> Decimal {
    let mantissa: i64 = match rng.gen_range(0..4) {
        0 => rng.gen_range(-100..100),
        1 => rng.gen_range(-100_000..100_000),
        _ => rng.gen_range(-100_000_000_000..100_000_000_000),
    };
    d(&format!("{mantissa}e-{}", rng.gen_range(0..7)))
}

fn rand_mode(rng: &mut ChaCha8Rng) -> VerificationMode {
    match rng.gen_range(0..4) {
        0 => VerificationMode::Exact,
        1 => VerificationMode::Round {
            places: rng.gen_range(0..5),
        },
        2 => {
            let table = default_scale_table();
            let k = rng.gen_range(1..=table.len());
            VerificationMode::Alias {
                scales: table[..k].to_vec(),
                infer_scale: rng.gen_bool(0.3),
            }
        }
        _ => {
            let all: Vec<String> = default_qualifiers().into_iter().collect();
            let mut q: BTreeSet<String> = all.iter().filter(|_| rng.gen_bool(0.5)).cloned().collect();
            q.insert(all.choose(rng).unwrap().clone());
            VerificationMode::Tolerance {
                delta: d(&format!("{}e-2", rng.gen_range(0..50))),
                rho: d(&format!("{}e-3", rng.gen_range(0..50))),
                qualifiers: q,
            }
        }
    }
}

fn rand_policy(rng: &mut ChaCha8Rng) -> PolicySpec {
    if rng.gen_bool(0.3) {
        return preset(["strict", "round1", "round2", "int", "tolerant"].choose(rng).unwrap()).unwrap();
    }
    let mut modes: Vec<VerificationMode> = Vec::new();
    for _ in 0..rng.gen_range(1..4) {
        let m = rand_mode(rng);
        if !modes.contains(&m) {
            modes.push(m);
        }
    }
    PolicySpec::new("random", modes).unwrap()
}

fn loosen(rng: &mut ChaCha8Rng, p: &PolicySpec) -> PolicySpec {
    let mut modes: Vec<VerificationMode> = Vec::new();
    for m in p.modes() {
        let widened = match m {
            VerificationMode::Exact if rng.gen_bool(0.5) => VerificationMode::Round {
                places: rng.gen_range(0..5),
            },
            VerificationMode::Alias { infer_scale: false, .. } => VerificationMode::Alias {
                scales: default_scale_table(),
                infer_scale: false,
            },
            VerificationMode::Tolerance { delta, rho, qualifiers } => VerificationMode::Tolerance {
                delta: delta + &d("0.1"),
                rho: rho + &d("0.005"),
                qualifiers: qualifiers.iter().cloned().chain(["about".to_string()]).collect(),
            },
            other => other.clone(),
        };
        if !modes.contains(&widened) {
            modes.push(widened);
        }
    }
    let extra = rand_mode(rng);
    if !modes.contains(&extra) {
        modes.push(extra);
    }
    PolicySpec::new("looser", modes).unwrap()
}

struct World {
    claims: HashMap<String, Claim>,
    /// Claims whose value is `base * multiplier`, with a form for it.
    scaled: HashMap<String, (Decimal, String)>,
    ids: Vec<String>,
    index: ClaimIndex,
}

fn gen_world(rng: &mut ChaCha8Rng, n: usize) -> World {
    let mut claims = Vec::new();
    let mut scaled = HashMap::new();
    let table = default_scale_table();
    for i in 0..n {
        let id = format!("c{i}");
        let unit = ["", "", "%", "USD"][rng.gen_range(0..4)];
        let value = if rng.gen_bool(0.3) {
            let base = d(&format!("{}e-{}", rng.gen_range(1..100_000), rng.gen_range(0..4)));
            let scale = table.choose(rng).unwrap();
            let form = scale
                .forms
                .iter()
                .cloned()
                .collect::<Vec<_>>()
                .choose(rng)
                .unwrap()
                .clone();
            let v = &base * &scale.multiplier;
            scaled.insert(id.clone(), (base, form));
            v
        } else {
            rand_decimal(rng)
        };
        claims.push(Claim::new(id, "indicator", "entity", "2024", value, unit));
    }
    let ids = claims.iter().map(|c| c.claim_id.clone()).collect();
    let map = claims.iter().map(|c| (c.claim_id.clone(), c.clone())).collect();
    World {
        claims: map,
        scaled,
        ids,
        index: index_claims(ClaimSet::from_claims("world", claims).unwrap()),
    }
}

const FILLER: &[&str] = &[
    "growth",
    "the",
    "was",
    "in",
    "about",
    "roughly",
    "~",
    "nearly",
    "approximately",
    "K",
    "million",
    "bn",
    "thousand",
    "verified",
    "✓",
    "value",
    "of",
    "and",
    "percent",
    "maybe",
    "exactly",
];

fn grouped(text: &str) -> String {
    let (sign, rest) = match text.strip_prefix('-') {
        Some(r) => ("-", r),
        None => ("", text),
    };
    let (int, frac) = rest.split_once('.').map_or((rest, None), |(a, b)| (a, Some(b)));
    let mut out = String::new();
    for (i, c) in int.chars().enumerate() {
        if i > 0 && (int.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    match frac {
        Some(f) => format!("{sign}{out}.{f}"),
        None => format!("{sign}{out}"),
    }
}

fn gen_payload(rng: &mut ChaCha8Rng, world: &World, id: &str) -> String {
    let Some(claim) = world.claims.get(id) else {
        return rand_decimal(rng).to_string();
    };
    let v = &claim.value;
    let unit = if claim.unit == "%" && rng.gen_bool(0.5) {
        "%"
    } else {
        ""
    };
    match rng.gen_range(0..7) {
        0 => format!("{v}{unit}"),
        1 => format!("{}{unit}", v.round_half_away(rng.gen_range(0..5))),
        2 => format!("{}{unit}", grouped(&v.to_string())),
        3 => match world.scaled.get(id) {
            Some((base, form)) if rng.gen_bool(0.5) => format!("{base}{form}"),
            Some((base, form)) => format!("{base} {form}"),
            None => v.to_string(),
        },
        4 => {
            let offset = d(&format!("{}e-{}", rng.gen_range(-500..500), rng.gen_range(0..5)));
            format!("{}{unit}", v + &offset)
        }
        5 => {
            let pct = d(&format!("{}e-4", rng.gen_range(-150..150)));
            format!("{}", v + &(v * &pct))
        }
        _ => rand_decimal(rng).to_string(),
    }
}

fn gen_doc(rng: &mut ChaCha8Rng, world: &World) -> String {
    let mut parts: Vec<String> = Vec::new();
    for _ in 0..rng.gen_range(1..10) {
        match rng.gen_range(0..10) {
            0..=2 => parts.push(FILLER.choose(rng).unwrap().to_string()),
            3 => parts.push(rand_decimal(rng).to_string()),
            _ => {
                let id = if rng.gen_bool(0.9) {
                    world.ids.choose(rng).unwrap().clone()
                } else {
                    "ghost".to_string()
                };
                if rng.gen_bool(0.4) {
                    parts.push(FILLER.choose(rng).unwrap().to_string());
                }
                let payload = gen_payload(rng, world, &id);
                let hint = if rng.gen_bool(0.2) { r#" policy="int""# } else { "" };
                parts.push(format!(r#"<claim id="{id}"{hint}>{payload}</claim>"#));
                if rng.gen_bool(0.3) {
                    parts.push(FILLER.choose(rng).unwrap().to_string());
                }
            }
        }
    }
    parts.join(" ")
}

// Criteria.

fn running_example() -> Outcome {
    let started = Instant::now();
    let claims = parse_claim_file(&std::fs::read(fixture("running_claims.json")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let index = index_claims(claims);
    let round1 = preset("round1").unwrap();
    let int = preset("int").unwrap();
    let cases: [(&str, &PolicySpec, Label); 4] = [
        (
            r#"<claim id="clm_7ef6" policy="round1">5.7</claim>"#,
            &round1,
            Label::Verified {
                claim_id: "clm_7ef6".into(),
                mode: VerificationMode::Exact,
            },
        ),
        (
            r#"<claim id="clm_7ef6" policy="int">6</claim>"#,
            &int,
            Label::Verified {
                claim_id: "clm_7ef6".into(),
                mode: VerificationMode::Round { places: 0 },
            },
        ),
        ("growth was 6.0 percent", &round1, Label::Bare),
        ("growth was 5.7 percent", &round1, Label::Bare),
    ];
    for (text, policy, expected) in cases {
        let doc = verify_document(text, &index, policy);
        let labels: Vec<&Label> = doc.labels().map(|(_, l)| l).collect();
        ensure(labels == vec![&expected], || format!("{text}: got {labels:?}"))?;
        let html = render_html(&doc, &RenderOptions::default());
        let marks = html.matches("verified-mark").count() + html.matches("verify-pending").count();
        let want = usize::from(expected != Label::Bare);
        ensure(marks == want, || format!("{text}: {marks} marks in {html}"))?;
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("4/4 labels exact, {elapsed:.2?}"))
}

fn gdp_scenario() -> Outcome {
    let payload = std::fs::read(fixture("gdp_payload.json")).map_err(|e| e.to_string())?;
    let response = std::fs::read_to_string(fixture("gdp_response.html")).map_err(|e| e.to_string())?;
    let claims = ingest_retriever_payload(&payload).map_err(|e| e.to_string())?;
    let claim = &claims.claims()[0];
    ensure(claim.claim_id == "0328" && claim.value == d("5.69201612823412"), || {
        format!("{claim:?}")
    })?;
    let index = index_claims(claims);

    let doc = verify_document(&response, &index, &PolicySpec::strict());
    let flagged: Vec<&Label> = doc.labels().map(|(_, l)| l).filter(|l| l.is_flagged()).collect();
    ensure(
        flagged
            == vec![&Label::Flagged {
                reason: FlagReason::ValueMismatch,
                claim_id: Some("0328".into()),
                expected: Some(d("5.69201612823412")),
            }],
        || format!("strict labels: {flagged:?}"),
    )?;
    ensure(!doc.labels().any(|(_, l)| l.is_verified()), || {
        "strict verified something".into()
    })?;
    let html = render_html(&doc, &RenderOptions::default());
    for needle in [
        r#"<sup class="verify-pending" title=""#,
        "Country: Philippines&#10;Date: 2024&#10;Value: 5.69201612823412",
        r#"role="img" aria-label="Needs verification">"#,
        r#"<span class="needs-verify">5.69%</span>"#,
    ] {
        ensure(html.contains(needle), || format!("strict html lacks {needle}: {html}"))?;
    }

    let round2 = parse_policy(&std::fs::read_to_string(fixture("round2_policy.json")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let doc = verify_document(&response, &index, &round2);
    let verified: Vec<&Label> = doc.labels().map(|(_, l)| l).filter(|l| l.is_verified()).collect();
    ensure(
        verified
            == vec![&Label::Verified {
                claim_id: "0328".into(),
                mode: VerificationMode::Round { places: 2 },
            }],
        || format!("round2 labels: {verified:?}"),
    )?;
    let html = render_html(&doc, &RenderOptions::default());
    ensure(
        html.matches(r#"<sup class="verified-mark" title="Verified data"#)
            .count()
            == 1,
        || format!("round2 html: {html}"),
    )?;
    Ok("strict: 1 flagged (value mismatch, 5.69201612823412); round2: 1 verified".into())
}

fn soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let mut worlds: Vec<World> = (0..20).map(|_| gen_world(&mut rng, 60)).collect();
    let mut checked = 0usize;
    let mut discrepancies = Vec::new();
    let docs = 12_000;
    for i in 0..docs {
        let world = &mut worlds[i % 20];
        let policy = rand_policy(&mut rng);
        let text = gen_doc(&mut rng, world);
        let doc = verify_document(&text, &world.index, &policy);
        let source = doc.source();
        for (seg, label) in doc.labels() {
            let Label::Verified { claim_id, mode } = label else {
                continue;
            };
            checked += 1;
            let claim = world.claims.get(claim_id);
            let ok = claim.is_some_and(|claim| {
                policy.modes().contains(mode)
                    && oracle::read_token(&source, seg.span, claim_id)
                        .is_some_and(|token| policy.modes().iter().any(|m| oracle::holds(&token, claim, m)))
            });
            if !ok && discrepancies.len() < 5 {
                discrepancies.push(format!("{} under {}", seg.text, policy.name));
            }
        }
    }
    ensure(discrepancies.is_empty(), || format!("discrepancies: {discrepancies:?}"))?;
    ensure(checked > 1000, || format!("only {checked} verified labels exercised"))?;
    Ok(format!(
        "{docs} documents, {checked} verified labels re-checked, 0 discrepancies"
    ))
}

/// One honest token per document, built to satisfy exactly `mode`.
struct Fixture {
    text: String,
    index: ClaimIndex,
    policy: PolicySpec,
    claim: Claim,
    payload: String,
    scale_form: Option<String>,
}

fn completeness_fixtures(rng: &mut ChaCha8Rng, per_mode: usize) -> Vec<Fixture> {
    let mut out = Vec::new();
    for kind in 0..4 {
        for i in 0..per_mode {
            let id = format!("k{kind}_{i}");
            let (value, payload, prefix, scale_form, mode) = match kind {
                0 => {
                    let v = rand_decimal(rng);
                    let p = if rng.gen_bool(0.3) {
                        grouped(&v.to_string())
                    } else {
                        v.to_string()
                    };
                    (v, p, "", None, VerificationMode::Exact)
                }
                1 => {
                    let v = rand_decimal(rng);
                    let places = rng.gen_range(0..5);
                    (
                        v.clone(),
                        v.round_half_away(places).to_string(),
                        "",
                        None,
                        VerificationMode::Round { places },
                    )
                }
                2 => {
                    let table = default_scale_table();
                    let scale = table.choose(rng).unwrap();
                    let forms: Vec<&String> = scale.forms.iter().collect();
                    let form = forms.choose(rng).unwrap().to_string();
                    let base = rand_decimal(rng);
                    let v = &base * &scale.multiplier;
                    let p = format!("{base} {form}");
                    (
                        v,
                        p,
                        "",
                        Some(form),
                        VerificationMode::Alias {
                            scales: table.clone(),
                            infer_scale: false,
                        },
                    )
                }
                _ => {
                    let v = rand_decimal(rng);
                    let delta = d(&format!("{}e-2", rng.gen_range(0..100)));
                    let rho = d(&format!("{}e-3", rng.gen_range(0..100)));
                    let half = std::cmp::max(delta.clone(), &rho * &v.abs());
                    // offset = half * k / 1000 for k in [-1000, 1000]
                    let k = d(&format!("{}e-3", rng.gen_range(-1000..=1000)));
                    let t = &v + &(&half * &k);
                    let qualifiers = default_qualifiers();
                    let q: Vec<&String> = qualifiers.iter().collect();
                    let word = q.choose(rng).unwrap();
                    let prefix: &'static str = Box::leak(format!("{word} ").into_boxed_str());
                    (
                        v,
                        t.to_string(),
                        prefix,
                        None,
                        VerificationMode::Tolerance { delta, rho, qualifiers },
                    )
                }
            };
            let claim = Claim::new(id.clone(), "indicator", "entity", "2024", value, "");
            let text = format!(r#"Reported {prefix}<claim id="{id}">{payload}</claim> overall."#);
            out.push(Fixture {
                text,
                index: index_claims(ClaimSet::from_claims("fixture", vec![claim.clone()]).unwrap()),
                policy: PolicySpec::new(format!("only-{}", mode.kind()), vec![mode]).unwrap(),
                claim,
                payload,
                scale_form,
            });
        }
    }
    out
}

fn completeness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    let fixtures = completeness_fixtures(&mut rng, 1000);
    let mut failures = Vec::new();
    for f in &fixtures {
        let doc = verify_document(&f.text, &f.index, &f.policy);
        let labels: Vec<&Label> = doc.labels().map(|(_, l)| l).collect();
        if !(labels.len() == 1 && labels[0].is_verified()) && failures.len() < 5 {
            failures.push(format!("{} under {}: {labels:?}", f.text, f.policy.name));
        }
    }
    ensure(failures.is_empty(), || format!("not verified: {failures:?}"))?;
    Ok(format!(
        "{} synthesized tokens (exact, round d in 0..=4, alias, tolerance), 100% verified",
        fixtures.len()
    ))
}

fn fail_closed() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let fixtures = completeness_fixtures(&mut rng, 100);
    let mut mutants = 0usize;
    let mut escaped = Vec::new();
    for f in &fixtures {
        let base = verify_document(&f.text, &f.index, &f.policy);
        if !base.labels().any(|(_, l)| l.is_verified()) {
            return Err(format!("fixture not verified: {}", f.text));
        }
        let id = &f.claim.claim_id;
        let open = format!(r#"<claim id="{id}">"#);
        let far = {
            // beyond every reach used by the fixtures (delta < 1, rho < 0.1)
            let v = oracle::dec(&f.claim.value);
            let bump = v.abs().ceil().to_integer() + BigInt::from(1000);
            bump.to_string()
        };
        let perturbed_payload = match &f.scale_form {
            Some(form) => {
                let base = f.payload.trim_end_matches(form.as_str()).trim();
                format!("{} {form}", &d(base) + &d(&far))
            }
            None => (&d(&f.payload.replace(',', "")) + &d(&far)).to_string(),
        };
        let variants = [
            f.text.replace(&open, "<claim>"),
            f.text.replace(&open, r#"<claim id="ghost_id">"#),
            f.text
                .replace(&format!("{open}{}", f.payload), &format!("{open}{perturbed_payload}")),
            f.text.replace(&open, &format!(r#"<claim id='{id}'>"#)),
            f.text.replace("</claim>", "</claim "),
            f.text.replace(
                &format!("{open}{}", f.payload),
                &format!("{open}{} {}", f.payload, f.payload),
            ),
        ];
        for mutant in variants {
            if mutant == f.text {
                return Err(format!("mutation left fixture unchanged: {}", f.text));
            }
            mutants += 1;
            let doc = verify_document(&mutant, &f.index, &f.policy);
            if doc.labels().any(|(_, l)| l.is_verified()) && escaped.len() < 5 {
                escaped.push(format!("{mutant} under {}", f.policy.name));
            }
        }
    }
    ensure(escaped.is_empty(), || format!("verified mutants: {escaped:?}"))?;
    ensure(mutants >= 1000, || format!("only {mutants} mutants"))?;
    Ok(format!(
        "{mutants} mutants over {} fixtures, 0 verified",
        fixtures.len()
    ))
}

fn verified_spans(doc: &AnnotatedDocument) -> BTreeSet<(usize, usize)> {
    doc.labels()
        .filter(|(_, l)| l.is_verified())
        .map(|(s, _)| s.span)
        .collect()
}

fn monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(54);
    let chain = [
        preset("strict").unwrap(),
        preset("round1").unwrap(),
        preset("tolerant").unwrap(),
    ];
    let mut pairs: Vec<(PolicySpec, PolicySpec)> = Vec::new();
    for i in 0..chain.len() {
        for j in i..chain.len() {
            if !refines(&chain[i], &chain[j]) {
                return Err(format!("{} does not refine {}", chain[i].name, chain[j].name));
            }
            pairs.push((chain[i].clone(), chain[j].clone()));
        }
    }
    while pairs.len() < 200 {
        let a = rand_policy(&mut rng);
        let b = if rng.gen_bool(0.7) {
            loosen(&mut rng, &a)
        } else {
            rand_policy(&mut rng)
        };
        if refines(&a, &b) {
            pairs.push((a, b));
        }
    }
    let worlds: Vec<World> = (0..10).map(|_| gen_world(&mut rng, 60)).collect();
    let docs = 2000;
    let mut comparisons = 0usize;
    let mut violations = Vec::new();
    for i in 0..docs {
        let world = &worlds[i % worlds.len()];
        let text = gen_doc(&mut rng, world);
        let mut selected: Vec<&(PolicySpec, PolicySpec)> = pairs[..6].iter().collect();
        selected.extend(pairs[6..].choose_multiple(&mut rng, 4));
        for (a, b) in selected {
            comparisons += 1;
            let sa = verified_spans(&verify_document(&text, &world.index, a));
            let sb = verified_spans(&verify_document(&text, &world.index, b));
            if !sa.is_subset(&sb) && violations.len() < 5 {
                violations.push(format!("{text} | {:?} vs {:?}", a.modes(), b.modes()));
            }
        }
    }
    ensure(violations.is_empty(), || format!("violations: {violations:?}"))?;
    Ok(format!(
        "{docs} documents, {} refinement pairs, {comparisons} comparisons, 0 violations",
        pairs.len()
    ))
}

const SPOOFS: &[&str] = &[
    "✓",
    "✔ verified",
    "verified",
    "Verified data",
    r#"<sup class="verified-mark" title="Verified data">OK</sup>"#,
    r#"<sup class="verified-mark">✓</sup>"#,
    r#"<span class="verified-mark">5.7</span>"#,
    r#"<span class="needs-verify">5.7</span>"#,
    "&#10003;",
    r#""status":"verified""#,
    "\x1b[32m5.7 ✓\x1b[0m",
    r#"<sup class="verified-mark""#,
    r#"<claim id='clm_7ef6'>5.7</claim>"#,
    r#"<claim id="clm_7ef6" >5.7</claim>"#,
    r#"<Claim id="clm_7ef6">5.7</Claim>"#,
    r#"<claim id="clm_7ef6">5.7"#,
    r#"<claim id="clm 7ef6">5.7</claim>"#,
    r#"<claim id="ghost">5.7</claim>"#,
    r#"<claim id="clm_7ef6">6.0</claim>"#,
    r#"<claim id="clm_7ef6">5.7 5.7</claim>"#,
    r#"<claim id="clm_7ef6" policy="round1">5.7</claim >"#,
    r#"<claim  id="clm_7ef6">5.7</claim>"#,
    r#"<claim id="">5.7</claim>"#,
    r#"<claim id="clm_7ef6" verified="true">5.7</claim>"#,
];

const HONEST: &str = r#"<claim id="clm_7ef6">5.7</claim>"#;

fn spoof_corpus() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let index = index_claims(
        ClaimSet::from_claims(
            "spoof",
            vec![Claim::new("clm_7ef6", "GDP growth", "PHL", "2024", d("5.7"), "%")],
        )
        .unwrap(),
    );
    let policy = PolicySpec::strict();
    let ansi_opts = RenderOptions::with_format(Format::Ansi);
    let html_opts = RenderOptions::default();
    let mut pure = 0;
    for case in 0..200 {
        let mut parts: Vec<&str> = Vec::new();
        if let Some(fragment) = SPOOFS.get(case) {
            parts.push(fragment);
        } else {
            for _ in 0..rng.gen_range(1..5) {
                parts.push(SPOOFS.choose(&mut rng).unwrap());
            }
        }
        let honest = if case >= SPOOFS.len() && rng.gen_bool(0.25) {
            rng.gen_range(1..3)
        } else {
            0
        };
        for _ in 0..honest {
            let at = rng.gen_range(0..=parts.len());
            parts.insert(at, HONEST);
        }
        if honest == 0 {
            pure += 1;
        }
        let text = parts.join(" . ");
        let doc = verify_document(&text, &index, &policy);
        let labels = doc.labels().filter(|(_, l)| l.is_verified()).count();
        let html = render_html(&doc, &html_opts);
        let html_marks = html.matches(r#"class="verified-mark""#).count();
        let ansi = render_ansi(&doc, &ansi_opts);
        let ansi_marks = ansi.matches('✓').count();
        let json = doc.to_json();
        let json_marks = json.matches(r#""status":"verified""#).count();
        let parsed = AnnotatedDocument::from_json(&json).map_err(|e| e.to_string())?;
        let parsed_marks = parsed.labels().filter(|(_, l)| l.is_verified()).count();
        ensure(
            [labels, html_marks, ansi_marks, json_marks, parsed_marks]
                .iter()
                .all(|&n| n == honest),
            || {
                format!(
                    "case {case} {text:?}: expected {honest}, labels {labels}, html {html_marks}, ansi {ansi_marks}, json {json_marks}"
                )
            },
        )?;
    }
    Ok(format!(
        "200 documents ({pure} pure spoof), marks equal verified labels in html, ansi and json"
    ))
}

fn linear_time() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(56);
    let build = |m: usize, rng: &mut ChaCha8Rng| {
        let claims: Vec<Claim> = (0..m)
            .map(|i| Claim::new(format!("c{i}"), "indicator", "entity", "2024", rand_decimal(rng), ""))
            .collect();
        index_claims(ClaimSet::from_claims(format!("{m}"), claims).unwrap())
    };
    let small = build(10_000, &mut rng);
    let large = build(100_000, &mut rng);
    let doc_for = |n: usize, rng: &mut ChaCha8Rng| {
        let mut text = String::new();
        for _ in 0..n {
            let id = format!("c{}", rng.gen_range(0..10_000));
            text.push_str(&format!(
                r#"The figure was <claim id="{id}">{}</claim>, up from 3.5 last year. "#,
                rand_decimal(rng)
            ));
        }
        text
    };
    let policy = preset("tolerant").unwrap();
    // Every sample verifies about 8000 spans in total (repeating smaller
    // documents), and rounds visit every configuration in turn, so machine
    // drift hits all of them alike. The minimum per configuration is kept.
    let sizes = [1000, 2000, 4000, 8000];
    let docs: Vec<String> = sizes.iter().map(|&n| doc_for(n, &mut rng)).collect();
    let sample = |text: &str, index: &ClaimIndex, reps: usize| {
        let t = Instant::now();
        for _ in 0..reps {
            std::hint::black_box(verify_document(text, index, &policy));
        }
        t.elapsed() / reps as u32
    };
    for text in &docs {
        sample(text, &small, 1);
        sample(text, &large, 1);
    }
    let mut rows = vec![(Duration::MAX, Duration::MAX); sizes.len()];
    for _ in 0..9 {
        for (i, text) in docs.iter().enumerate() {
            let reps = sizes[sizes.len() - 1] / sizes[i];
            rows[i].0 = rows[i].0.min(sample(text, &small, reps));
            rows[i].1 = rows[i].1.min(sample(text, &large, reps));
        }
    }
    let mut notes = Vec::new();
    let mut ok = true;
    for i in 1..rows.len() {
        for (label, prev, cur) in [("10k", rows[i - 1].0, rows[i].0), ("100k", rows[i - 1].1, rows[i].1)] {
            let ratio = cur.as_secs_f64() / prev.as_secs_f64();
            if ratio > 2.5 {
                ok = false;
                notes.push(format!("{label} {}->{}: x{ratio:.2}", sizes[i - 1], sizes[i]));
            }
        }
    }
    for (i, (a, b)) in rows.iter().enumerate() {
        let diff = (b.as_secs_f64() - a.as_secs_f64()).abs() / a.as_secs_f64();
        if diff > 0.25 {
            ok = false;
            notes.push(format!(
                "{} spans: 10k {a:.2?} vs 100k {b:.2?} ({:.0}%)",
                sizes[i],
                diff * 100.0
            ));
        }
    }
    let total = started.elapsed();
    if total > Duration::from_secs(60) {
        ok = false;
        notes.push(format!("total {total:?}"));
    }
    let table: Vec<String> = rows
        .iter()
        .zip(sizes)
        .map(|((a, b), n)| format!("{n}: {a:.1?}/{b:.1?}"))
        .collect();
    if ok {
        Ok(format!(
            "spans: 10k/100k claims = {}; total {total:.1?}",
            table.join(", ")
        ))
    } else {
        Err(format!("{}; {}", notes.join("; "), table.join(", ")))
    }
}

fn crypto() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(57);
    let secret: [u8; 32] = rng.gen();
    let anchor = TrustAnchor::ed25519("provider", public_key_for(&secret).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;

    let mut mutations = 0;
    for i in 0..1000 {
        let mut claim = Claim::new(
            format!("s{i}"),
            "GDP growth",
            "PHL",
            "2024",
            rand_decimal(&mut rng),
            "%",
        );
        claim.signature = Some(sign_claim(&claim, &secret).map_err(|e| e.to_string())?);
        if !verify_claim_signature(&claim, &anchor).map_err(|e| e.to_string())? {
            return Err(format!("untampered claim {i} failed"));
        }
        match rng.gen_range(0..6) {
            0 => claim.claim_id.push('x'),
            1 => claim.indicator.push_str(" (rev)"),
            2 => claim.entity = "PHX".into(),
            3 => claim.time = "2023".into(),
            4 => claim.value = &claim.value + &d(&format!("1e-{}", rng.gen_range(0..12))),
            _ => claim.unit = "USD".into(),
        }
        mutations += 1;
        if verify_claim_signature(&claim, &anchor).unwrap_or(false) {
            return Err(format!("tampered claim {i} still verifies: {claim:?}"));
        }
    }

    let claims: Vec<Claim> = (0..37)
        .map(|i| Claim::new(format!("m{i}"), "x", "y", "2024", rand_decimal(&mut rng), ""))
        .collect();
    let set = ClaimSet::from_claims("merkle", claims).unwrap();
    let tree = build_merkle_tree(&set).map_err(|e| e.to_string())?;
    let mut flips = 0;
    for (claim, proof) in set.claims().iter().zip(&tree.proofs) {
        let leaf = leaf_hash(claim);
        if !verify_merkle_path(&leaf, proof).map_err(|e| e.to_string())? {
            return Err(format!("proof for {} fails", claim.claim_id));
        }
    }
    for which in [0usize, 5, 17, 36] {
        let claim = &set.claims()[which];
        let proof = &tree.proofs[which];
        let leaf = leaf_hash(claim);
        for bit in 0..256 {
            let mut bad_leaf = leaf;
            bad_leaf[bit / 8] ^= 1 << (bit % 8);
            let mut bad_root = proof.clone();
            bad_root.root[bit / 8] ^= 1 << (bit % 8);
            flips += 2;
            if verify_merkle_path(&bad_leaf, proof).unwrap_or(false)
                || verify_merkle_path(&leaf, &bad_root).unwrap_or(false)
            {
                return Err(format!("bit {bit} flip accepted for leaf {which}"));
            }
            for s in 0..proof.siblings.len() {
                let mut bad = proof.clone();
                bad.siblings[s].hash[bit / 8] ^= 1 << (bit % 8);
                flips += 1;
                if verify_merkle_path(&leaf, &bad).unwrap_or(false) {
                    return Err(format!("sibling {s} bit {bit} flip accepted for leaf {which}"));
                }
            }
        }
    }

    // end to end: tampered claims never back a Verified label
    let root_sig = sign_root(&tree.root, &secret).map_err(|e| e.to_string())?;
    let mut stored = Vec::new();
    for (i, (claim, proof)) in set.claims().iter().zip(&tree.proofs).enumerate() {
        let mut claim = claim.clone();
        if i % 2 == 0 {
            claim.signature = Some(sign_claim(&claim, &secret).map_err(|e| e.to_string())?);
        } else {
            let mut proof = proof.clone();
            proof.root_signature = Some(root_sig.clone());
            claim.merkle_proof = Some(proof);
        }
        stored.push(claim);
    }
    let keyring = Keyring {
        anchors: vec![anchor],
        ..Default::default()
    };
    let verifier = Verifier::new(Lexicon::default()).with_keyring(keyring);
    let policy = PolicySpec::strict().with_provenance(true);
    let honest_text: String = stored
        .iter()
        .map(|c| format!(r#"<claim id="{}">{}</claim> "#, c.claim_id, c.value))
        .collect();
    let honest_index = index_claims(ClaimSet::from_claims("stored", stored.clone()).unwrap());
    let report = summarize(&verifier.verify(&honest_text, &honest_index, &policy));
    ensure(report.verified == stored.len(), || format!("untampered: {report:?}"))?;

    let mut tampered = stored.clone();
    for c in tampered.iter_mut() {
        c.value = &c.value + &d("0.5");
    }
    let tampered_text: String = tampered
        .iter()
        .map(|c| format!(r#"<claim id="{}">{}</claim> "#, c.claim_id, c.value))
        .collect();
    let tampered_index = index_claims(ClaimSet::from_claims("tampered", tampered.clone()).unwrap());
    let doc = verifier.verify(&tampered_text, &tampered_index, &policy);
    let report = summarize(&doc);
    ensure(report.verified == 0, || format!("tampered verified: {report:?}"))?;
    ensure(
        doc.labels().all(|(_, l)| {
            matches!(
                l,
                Label::Flagged {
                    reason: FlagReason::UnknownClaimId,
                    ..
                }
            )
        }),
        || "tampered claims not excluded".into(),
    )?;
    // same tampered claims without the requirement do verify: the gate is what stops them
    let open = summarize(&verify_document(&tampered_text, &tampered_index, &PolicySpec::strict()));
    ensure(open.verified == tampered.len(), || format!("control run: {open:?}"))?;

    Ok(format!(
        "{mutations} signed-field mutations rejected; {} proofs verify, {flips} bit flips rejected; {} tampered claims blocked",
        tree.proofs.len(),
        tampered.len()
    ))
}

fn idempotency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(58);
    let pieces = [
        r#"<sup class="verified-mark" title="Verified data">OK</sup>"#,
        r#"<sup class="verify-pending" title="Needs verification" role="img" aria-label="Needs verification">X</sup>"#,
        r#"<sup class="verified-mark""#,
        r#"<sup class="verify-"#,
        "pending\">",
        "</sup>",
        r#"<span class="needs-verify">"#,
        r#"<span class="needs-verify" data-x="1">"#,
        "</span>",
        "<sup>",
        "5.69",
        r#"<claim id="0328">"#,
        "</claim>",
        "\n",
        "text ",
    ];
    for case in 0..1000 {
        let text: String = (0..rng.gen_range(0..14))
            .map(|_| *pieces.choose(&mut rng).unwrap())
            .collect();
        let once = strip_verification_markers(&text);
        let twice = strip_verification_markers(&once);
        ensure(once == twice, || {
            format!("case {case}: {text:?} -> {once:?} -> {twice:?}")
        })?;
    }
    Ok("1000 marker combinations, strip twice == strip once".into())
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("running example", running_example),
        ("gdp growth scenario", gdp_scenario),
        ("soundness fuzz", soundness),
        ("completeness fuzz", completeness),
        ("fail-closed mutants", fail_closed),
        ("monotonicity", monotonicity),
        ("spoof corpus", spoof_corpus),
        ("linear time", linear_time),
        ("crypto tamper-evidence", crypto),
        ("marker idempotency", idempotency),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = started.elapsed();
        match outcome {
            Ok(detail) => println!("PASS  {name:<24} {detail} [{elapsed:.2?}]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name:<24} {detail} [{elapsed:.2?}]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
