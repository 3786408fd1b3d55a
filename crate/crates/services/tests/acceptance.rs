//! Acceptance suite. One line per criterion, `PASS` or `FAIL`, and a non-zero
//! exit status if anything failed. An optional argument filters criteria by
//! substring.

mod support;

use std::collections::BTreeSet;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::TestRunner;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::Value;

use support::{contains, date, json_has_integer, read_tree, record, run, Proc, Stack, NHS};
use vulncred::bank::{Category, CustomerRecord};
use vulncred::canonical::{canonicalize, from_canonical_bytes, parse, to_canonical_bytes, Nonce};
use vulncred::credential::{
    verify_full, ClaimValue, FailReason, SchemaDefinition, VerifiableCredential, DRIVER_CLAIMS, DRIVER_CONTEXT_GROUP,
};
use vulncred::did::{verify_signature, KeyPair};
use vulncred::disclosure::{DeriveError, PredicateRequest, Presentation, Selection};
use vulncred::exchange::{Decision, Outcome, PresentationResponse, RequestItem, RequestParams, VerificationResult};
use vulncred::issuer::read_journal;
use vulncred::ladder::{chain, Direction, LadderAnchor};
use vulncred::registry::{verify_chain, with_view, RegistryBlock, StatusList, StatusUpdate};
use vulncred::sample::{random_fairness_values, random_full_values, random_selection, Sandbox};
use vulncred::wallet::DecideOutcome;
use vulncred::{digest, CanonicalValue, Hash32, Timestamp};
use vulncred_services::bank_api::{FlagsView, ResponseAck, ReviewReport};
use vulncred_services::client::{join, RemoteRegistry};

type Criterion = (&'static str, fn() -> String);

const CRITERIA: &[Criterion] = &[
    ("scenario-1-fairness-for-all-over-cli", scenario_fairness_for_all),
    ("scenario-2-age-predicate", scenario_age_predicate),
    ("ladder-soundness-exhaustive", ladder_soundness),
    ("hiding", hiding),
    ("tamper-evidence", tamper_evidence),
    ("revocation-latency", revocation_latency),
    ("replay", replay),
    ("right-to-be-forgotten", right_to_be_forgotten),
    ("group-bundling", group_bundling),
    ("cryptographic-conformance", cryptographic_conformance),
];

fn main() -> ExitCode {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    let mut ran = 0;
    for (name, check) in CRITERIA {
        if filter.as_ref().is_some_and(|f| !name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let started = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check));
        let took = started.elapsed();
        match result {
            Ok(detail) => println!("PASS  {name}  [{:.2}s] {detail}", took.as_secs_f64()),
            Err(e) => {
                failed += 1;
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panicked".into());
                println!("FAIL  {name}  [{:.2}s] {msg}", took.as_secs_f64());
            }
        }
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn t0() -> Timestamp {
    Timestamp::ymd_hms(2021, 6, 1, 9, 0, 0).unwrap()
}

fn cli(exe: &str, args: &[&str]) -> Value {
    let (ok, out, err) = run(exe, args);
    assert!(ok, "{exe} {args:?} failed: {err}");
    serde_json::from_str(&out).unwrap_or_else(|e| panic!("{exe} {args:?} printed non-JSON ({e}): {out}"))
}

fn typed<T: serde::de::DeserializeOwned>(v: Value) -> T {
    serde_json::from_value(v).unwrap()
}

fn scenario_fairness_for_all() -> String {
    let registry_exe = env!("CARGO_BIN_EXE_registry");
    let issuer_exe = env!("CARGO_BIN_EXE_issuer");
    let bank_exe = env!("CARGO_BIN_EXE_bank");
    let wallet_exe = env!("CARGO_BIN_EXE_wallet");
    let dir = tempfile::tempdir().unwrap();
    let path = |p: &str| dir.path().join(p).to_string_lossy().into_owned();
    let started = Instant::now();

    let registry = Proc::start(registry_exe, &["serve", "--data", &path("registry"), "--listen", "127.0.0.1:0"], &[]);
    let wallet = Proc::start(
        wallet_exe,
        &["serve", "--store", &path("holder.wallet"), "--registry", &registry.url, "--listen", "127.0.0.1:0"],
        &[("VULNCRED_WALLET_PASSPHRASE", "correct horse battery staple")],
    );
    let holder_did: String = typed(cli(wallet_exe, &["did", "--agent", &wallet.url]));

    let records = path("records.csv");
    std::fs::write(
        &records,
        format!(
            "nhs_number,date_of_birth,assessment_date,driver_health,driver_life_events,driver_low_resilience,\
             driver_low_capability,work_incapacity_months,detail,subject_did\n\
             {},1996-03-02,2021-04-20,true,false,true,false,4,post-viral fatigue,{holder_did}\n",
            NHS[0]
        ),
    )
    .unwrap();
    let issuer = Proc::start(
        issuer_exe,
        &["serve", "--records", &records, "--registry", &registry.url, "--listen", "127.0.0.1:0", "--state", &path("issuer")],
        &[],
    );
    let bank = Proc::start(
        bank_exe,
        &["serve", "--registry", &registry.url, "--listen", "127.0.0.1:0", "--store", &path("bank")],
        &[],
    );

    let stored = cli(wallet_exe, &["obtain", "--issuer", &issuer.url, "--nhs-number", NHS[0], "--agent", &wallet.url]);
    assert_eq!(stored.as_array().map(Vec::len), Some(2), "pair stored: {stored}");

    let request = cli(bank_exe, &["open", "cust-1", "--holder-did", &holder_did, "--bank", &bank.url]);
    let request_id = request["request_id"].as_str().expect("request id").to_string();
    assert_eq!(request["scheme"], "FairnessForAll");
    let inbox = cli(wallet_exe, &["inbox", "--agent", &wallet.url]);
    assert_eq!(inbox[0]["request_id"], request_id.as_str());
    assert_eq!(inbox[0]["state"], "PENDING");

    let decided: DecideOutcome = typed(cli(wallet_exe, &["decide", &request_id, "--accept", "--agent", &wallet.url]));
    assert_eq!(decided.response.outcome, Outcome::Presented, "{:?}", decided.local_reason);

    let flags: FlagsView = typed(cli(bank_exe, &["flags", "cust-1", "--bank", &bank.url]));
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(5), "scenario took {elapsed:?}");

    let categories: BTreeSet<Category> = flags.care_support.iter().map(|f| f.category).collect();
    assert_eq!(categories, BTreeSet::from([Category::Health, Category::LowResilience]));
    let expected: BTreeSet<String> =
        DRIVER_CLAIMS.iter().map(|s| s.to_string()).chain(["work_incapacity_months".to_string()]).collect();
    for f in &flags.care_support {
        assert_eq!(f.review_due, f.created_at.plus_months(12), "flag {}", f.flag_id);
        assert_eq!(f.evidence.revealed.keys().cloned().collect::<BTreeSet<_>>(), expected);
        assert_eq!(f.evidence.revealed["work_incapacity_months"], ClaimValue::Integer(4));
    }

    let due = flags.care_support[0].review_due;
    let before: ReviewReport =
        typed(cli(bank_exe, &["review", "--now", &due.plus_seconds(-1).to_string(), "--bank", &bank.url]));
    assert!(before.due.is_empty(), "nothing is due a second early");
    let at: ReviewReport = typed(cli(bank_exe, &["review", "--now", &due.to_string(), "--bank", &bank.url]));
    assert_eq!(at.due.len(), 2, "both flags due at the boundary");

    let audit = cli(wallet_exe, &["audit", "--agent", &wallet.url]);
    assert_eq!(audit[0]["delivered"], true);
    format!("VERIFIED over processes and CLI consent in {:.2}s; review due at {due}", elapsed.as_secs_f64())
}

fn scenario_age_predicate() -> String {
    let stack = Stack::new(t0());
    let check = date(2021, 6, 1);
    let params = || Some(RequestParams::itemized(vec![RequestItem::age_at_least(18, check)], "age check"));
    let adult = stack.enrolled("adult", |did| record(NHS[1], date(1996, 3, 2), [true, false, false, false], 1, "x", did));
    let minor = stack.enrolled("minor", |did| record(NHS[2], date(2005, 7, 9), [false, true, false, false], 0, "y", did));

    let mut wires = Vec::new();
    let req = stack.open("adult-cust", &adult, params());
    let out: DecideOutcome = stack.decide(&adult, &req.request_id, &Decision::AcceptAll).json().unwrap();
    assert_eq!(out.response.outcome, Outcome::Presented, "{:?}", out.local_reason);
    wires.push((1996, out.response.to_bytes()));
    let ex = stack.bank.verifier_state().exchange(&req.request_id).unwrap();
    let Some(VerificationResult::Verified { facts }) = ex.outcome.map(|o| o.result) else {
        panic!("adult exchange not verified")
    };
    assert!(facts.revealed.is_empty(), "nothing revealed: {:?}", facts.revealed);
    assert_eq!(facts.proven.len(), 1);
    assert_eq!((facts.proven[0].claim.as_str(), facts.proven[0].op, facts.proven[0].threshold), ("birth_year", Direction::Lte, 2003));

    let req = stack.open("minor-cust", &minor, params());
    let out: DecideOutcome = stack.decide(&minor, &req.request_id, &Decision::AcceptAll).json().unwrap();
    assert_eq!(out.response.outcome, Outcome::Denied);
    assert!(out.response.presentation.is_none());
    assert_eq!(out.local_reason.as_deref(), Some("predicate on birth_year does not hold"));
    wires.push((2005, out.response.to_bytes()));
    let ex = stack.bank.verifier_state().exchange(&req.request_id).unwrap();
    assert_eq!(ex.outcome.map(|o| o.result), Some(VerificationResult::Denied));

    let store = read_tree(&stack.bank_store());
    for (year, wire) in &wires {
        let json: Value = serde_json::from_slice(wire).unwrap();
        assert!(!json_has_integer(&json, *year), "{year} on the wire");
        for (path, bytes) in &store {
            for line in bytes.split(|b| *b == b'\n').filter(|l| !l.is_empty()) {
                let json: Value = serde_json::from_slice(line).unwrap_or(Value::Null);
                assert!(!json_has_integer(&json, *year), "{year} in {}", path.display());
            }
        }
    }
    for needle in ["1996-03-02", "2005-07-09"] {
        assert!(wires.iter().all(|(_, w)| !contains(w, needle.as_bytes())));
        assert!(store.iter().all(|(_, b)| !contains(b, needle.as_bytes())), "{needle} stored");
    }
    "1996 verified, 2005 denied; birth year absent from wire and store".into()
}

fn ladder_soundness() -> String {
    let started = Instant::now();
    let (v_min, v_max) = (0i64, 200i64);
    let mut checked = 0u64;
    let mut counterexamples = Vec::new();
    for direction in [Direction::Gte, Direction::Lte] {
        for v in v_min..=v_max {
            let seed = digest(format!("seed-{v}-{}", direction.symbol()).as_bytes());
            let anchor = LadderAnchor::commit(direction, v_min, v_max, v, &seed).unwrap();
            for t in v_min..=v_max {
                checked += 1;
                let holds = direction.holds(v, t);
                let proved = match anchor.witness(&seed, v, t) {
                    Ok(w) => anchor.verify(t, &w),
                    Err(_) => false,
                };
                // The seed is the deepest link the holder knows.
                let forged = !holds && anchor.verify(t, &chain(&seed, 0));
                if proved != holds || forged {
                    counterexamples.push((direction, v, t));
                }
            }
        }
    }
    let took = started.elapsed();
    assert!(counterexamples.is_empty(), "counterexamples: {:?}", &counterexamples[..counterexamples.len().min(10)]);
    assert!(took < Duration::from_secs(60), "took {took:?}");
    format!("{checked} (direction, v, T) cases, 0 counterexamples")
}

/// Presentation bytes carry no undisclosed salt, ladder seed, text or date
/// value, and no undisclosed birth year as a JSON integer.
fn hiding() -> String {
    let mut rng = StdRng::seed_from_u64(0x5eed_0001);
    let schemas = [SchemaDefinition::vulnerability_status(), SchemaDefinition::fairness_for_all()];
    let mut credentials = 0;
    let mut hidden_claims = 0;
    for i in 0..600 {
        let schema = &schemas[i % 2];
        let mut sb = Sandbox::new();
        let values = if i % 2 == 0 { random_full_values(&mut rng) } else { random_fairness_values(&mut rng) };
        let (vc, secrets) = sb.issue(schema, &values, t0()).unwrap();
        let mut sel = random_selection(&mut rng, &vc, &secrets);
        if let Some(by) = values.get("birth_year").and_then(ClaimValue::as_integer) {
            if !sel.reveal.contains("birth_year") && rng.gen_bool(0.5) {
                sel.predicates.push(PredicateRequest { claim: "birth_year".into(), op: Direction::Lte, threshold: by + 3 });
            }
        }
        let nonce = Nonce::random();
        let p = sb.present(&vc, &secrets, &sel, nonce, t0()).unwrap();
        sb.verify(&p, nonce, t0()).unwrap();
        assert_eq!(p.revealed_names(), sel.reveal);

        let bytes = p.to_bytes();
        let json: Value = serde_json::from_slice(&bytes).unwrap();
        for c in secrets.claims.iter().filter(|c| !sel.reveal.contains(&c.name)) {
            hidden_claims += 1;
            assert!(!contains(&bytes, c.salt.to_hex().as_bytes()), "salt of {} leaked", c.name);
            match &c.value {
                ClaimValue::Text(_) | ClaimValue::Date(_) => {
                    assert!(!contains(&bytes, &c.value.value_bytes()), "value of {} leaked", c.name);
                }
                ClaimValue::Integer(y) if c.name == "birth_year" => {
                    assert!(!json_has_integer(&json, *y), "birth year leaked");
                }
                _ => {}
            }
        }
        // At v == T the honest witness is the seed itself.
        let witnesses: BTreeSet<Hash32> = p.predicates.iter().map(|x| x.witness).collect();
        for (name, seed) in secrets.ladder_seeds.iter().filter(|(n, _)| !sel.reveal.contains(*n)) {
            if !witnesses.contains(seed) {
                assert!(!contains(&bytes, seed.to_hex().as_bytes()), "ladder seed of {name} leaked");
            }
        }
        credentials += 1;
    }
    format!("{credentials} credentials over both schemas, {hidden_claims} undisclosed claims scanned")
}

fn flip(bytes: &[u8], bit: usize) -> Vec<u8> {
    let mut m = bytes.to_vec();
    m[bit / 8] ^= 1 << (bit % 8);
    m
}

fn tamper_evidence() -> String {
    let mut rng = StdRng::seed_from_u64(0x5eed_0002);
    let (mut blocks_n, mut envelopes_n, mut presentations_n, mut decode_rejects) = (0, 0, 0, 0);

    let mut sb = Sandbox::new();
    let mut list = StatusList::fresh(sb.issuer.clone(), "T0");
    sb.registry.publish_status(&StatusUpdate::new(list.clone(), &sb.issuer_keys)).unwrap();
    for i in 0..4 {
        list.version += 1;
        list.bits.set(i * 11);
        sb.registry.publish_status(&StatusUpdate::new(list.clone(), &sb.issuer_keys)).unwrap();
    }
    let values = random_full_values(&mut rng);
    let (vc, secrets) = sb.issue(&SchemaDefinition::vulnerability_status(), &values, t0()).unwrap();
    let nonce = Nonce::random();
    let sel = random_selection(&mut rng, &vc, &secrets);
    let p = sb.present(&vc, &secrets, &sel, nonce, t0()).unwrap();

    let chain_blocks = sb.registry.blocks().to_vec();
    assert!(verify_chain(&chain_blocks));
    for _ in 0..400 {
        let which = rng.gen_range(0..chain_blocks.len());
        let bytes = to_canonical_bytes(&chain_blocks[which]).unwrap();
        let m = flip(&bytes, rng.gen_range(0..bytes.len() * 8));
        let accepted = match from_canonical_bytes::<RegistryBlock>(&m) {
            Err(_) => {
                decode_rejects += 1;
                false
            }
            Ok(b) => {
                let mut tampered = chain_blocks.clone();
                tampered[which] = b;
                verify_chain(&tampered)
            }
        };
        assert!(!accepted, "registry block {which} flip accepted");
        blocks_n += 1;
    }

    let envelope = to_canonical_bytes(&vc).unwrap();
    for _ in 0..400 {
        let bit = rng.gen_range(0..envelope.len() * 8);
        let verdict = match from_canonical_bytes::<VerifiableCredential>(&flip(&envelope, bit)) {
            Err(_) => {
                decode_rejects += 1;
                Err(FailReason::SignatureInvalid)
            }
            Ok(vc) => sb.verify_credential(&vc, t0()),
        };
        assert!(verdict.is_err(), "envelope flip at bit {bit} accepted");
        envelopes_n += 1;
    }

    let presentation = p.to_bytes();
    for _ in 0..400 {
        let bit = rng.gen_range(0..presentation.len() * 8);
        let verdict = match from_canonical_bytes::<Presentation>(&flip(&presentation, bit)) {
            Err(_) => {
                decode_rejects += 1;
                Err(FailReason::SignatureInvalid)
            }
            Ok(p) => sb.verify(&p, nonce, t0()).map(|_| ()),
        };
        assert!(verdict.is_err(), "presentation flip at bit {bit} accepted");
        presentations_n += 1;
    }
    assert!(sb.verify(&p, nonce, t0()).is_ok(), "untouched presentation still verifies");
    let total = blocks_n + envelopes_n + presentations_n;
    format!(
        "{total}/{total} flips rejected ({blocks_n} blocks, {envelopes_n} envelopes, {presentations_n} presentations; \
         {decode_rejects} at strict decode)"
    )
}

fn revocation_latency() -> String {
    let stack = Stack::new(t0());
    let holder = stack.enrolled("h", |did| record(NHS[3], date(1980, 1, 1), [true, false, false, false], 2, "z", did));
    let journal = stack.issuer.journal_path().expect("journal").to_path_buf();
    let vc = read_journal(&journal).unwrap().into_iter().find(|vc| vc.subject == holder.did).unwrap();

    let verifier_view = RemoteRegistry::new(&stack.registry_url);
    let fresh = with_view(&verifier_view, |v| verify_full(&vc, v, stack.now())).unwrap();
    assert_eq!(fresh, Ok(()));
    let refreshed: Vec<Value> = stack.post(&holder.url, "/wallet/refresh", &Value::Null).json().unwrap();
    assert!(refreshed.iter().all(|e| e["last_status"]["verdict"] == "VALID"));

    let ack = stack.post(&stack.issuer_url, "/admin/revoke", &serde_json::json!({ "credential_id": vc.credential_id }));
    assert!(ack.ok(), "revoke: {} {}", ack.status, ack.error_message());

    let after = with_view(&verifier_view, |v| verify_full(&vc, v, stack.now())).unwrap();
    assert_eq!(after, Err(FailReason::Revoked));
    let refreshed: Vec<Value> = stack.post(&holder.url, "/wallet/refresh", &Value::Null).json().unwrap();
    let entry = refreshed.iter().find(|e| e["credential_id"] == vc.credential_id.as_str()).unwrap();
    assert_eq!(entry["last_status"]["verdict"], "INVALID");
    assert_eq!(entry["last_status"]["reason"], "REVOKED");
    let others = refreshed.iter().filter(|e| e["credential_id"] != vc.credential_id.as_str());
    assert!(others.into_iter().all(|e| e["last_status"]["verdict"] == "VALID"), "sibling credential unaffected");
    "verifier and holder both see REVOKED on the next read".into()
}

fn replay() -> String {
    let stack = Stack::new(t0());
    let holder = stack.enrolled("h", |did| record(NHS[4], date(1990, 2, 3), [true, true, false, false], 5, "w", did));
    let req = stack.open("c", &holder, None);
    let out: DecideOutcome = stack.decide(&holder, &req.request_id, &Decision::AcceptAll).json().unwrap();
    assert_eq!(out.response.outcome, Outcome::Presented);
    let flags_before = stack.bank.flags("c").unwrap().0.len();
    assert_eq!(flags_before, 2);

    let bytes = out.response.to_bytes();
    let _: PresentationResponse = from_canonical_bytes(&bytes).unwrap();
    let url = join(&stack.bank_url, "/present/response");
    let mut false_accepts = 0;
    for _ in 0..100 {
        let reply = stack.http.post_bytes(&url, &bytes).unwrap();
        assert!(reply.ok(), "{} {}", reply.status, reply.error_message());
        let ack: ResponseAck = from_canonical_bytes(&reply.body).unwrap();
        if ack.result != "REJECTED" || ack.reason != Some(FailReason::NonceReplayed) {
            false_accepts += 1;
        }
    }
    assert_eq!(false_accepts, 0);
    assert_eq!(stack.bank.flags("c").unwrap().0.len(), flags_before);
    assert_eq!(stack.bank.customer("c").unwrap().presentations.len(), 1);
    "100/100 replays rejected NONCE_REPLAYED, no new flags".into()
}

fn right_to_be_forgotten() -> String {
    let stack = Stack::new(t0());
    let detail = format!("bereavement {:032x}", rand::random::<u128>());
    let holder = stack.enrolled("h", |did| record(NHS[5], date(1977, 11, 23), [false, true, false, true], 3, &detail, did));
    let mut items: Vec<RequestItem> = DRIVER_CLAIMS.iter().map(|d| RequestItem::reveal(d)).collect();
    items.extend(["assessment_date", "nhs_number", "date_of_birth", "detail"].map(RequestItem::reveal));
    let req = stack.open("gone", &holder, Some(RequestParams::itemized(items, "records review")));
    let out: DecideOutcome = stack.decide(&holder, &req.request_id, &Decision::AcceptAll).json().unwrap();
    assert_eq!(out.response.outcome, Outcome::Presented, "{:?}", out.local_reason);
    let req = stack.open("gone", &holder, None);
    let out: DecideOutcome = stack.decide(&holder, &req.request_id, &Decision::AcceptAll).json().unwrap();
    assert_eq!(out.response.outcome, Outcome::Presented);

    let record: CustomerRecord = stack.bank.customer("gone").unwrap();
    assert_eq!(record.presentations.len(), 2);
    let mut needles: Vec<String> = vec![NHS[5].into(), "1977-11-23".into(), "2021-04-20".into(), detail.clone()];
    for sp in &record.presentations {
        needles.extend(sp.presentation.disclosed.iter().map(|d| d.salt.to_hex()));
        needles.extend(sp.presentation.predicates.iter().map(|p| p.witness.to_hex()));
        needles.push(sp.presentation.credential.claims_root.to_hex());
    }
    let scan = || -> Vec<String> {
        let store = read_tree(&stack.bank_store());
        needles.iter().filter(|n| store.iter().any(|(_, b)| contains(b, n.as_bytes()))).cloned().collect()
    };
    assert!(scan().contains(&detail), "evidence is on disk before erasure");

    let reply = stack.post(&stack.bank_url, "/forget/gone", &Value::Null);
    assert!(reply.ok());
    let report: Value = reply.json().unwrap();
    assert_eq!(report, serde_json::json!({ "flags": 2, "presentations": 2 }));
    assert_eq!(scan(), Vec::<String>::new());

    let again: Value = stack.post(&stack.bank_url, "/forget/gone", &Value::Null).json().unwrap();
    assert_eq!(again, serde_json::json!({ "flags": 0, "presentations": 0 }));
    let flags: FlagsView = stack.get(&stack.bank_url, "/flags/gone").json().unwrap();
    assert!(flags.care_support.is_empty());
    assert_eq!(flags.erased.len(), 2);
    format!("{} evidence needles gone from the store; repeat erasure reports zero", needles.len())
}

fn proper_subsets(members: &[String]) -> Vec<BTreeSet<String>> {
    (1..(1u32 << members.len()) - 1)
        .map(|mask| members.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, m)| m.clone()).collect())
        .collect()
}

fn group_bundling() -> String {
    let mut rng = StdRng::seed_from_u64(0x5eed_0003);
    let mut local = 0;
    let mut forged = 0;
    for (schema, values) in [
        (SchemaDefinition::vulnerability_status(), random_full_values(&mut rng)),
        (SchemaDefinition::fairness_for_all(), random_fairness_values(&mut rng)),
    ] {
        let mut sb = Sandbox::new();
        let (vc, secrets) = sb.issue(&schema, &values, t0()).unwrap();
        let group = vc.groups.iter().find(|g| g.group_id == DRIVER_CONTEXT_GROUP).expect("driver group").clone();
        let members: Vec<String> = group.members.iter().cloned().collect();
        let audience = vc.intended_audience.clone();
        for subset in proper_subsets(&members) {
            let sel = Selection { reveal: subset, predicates: Vec::new(), audience: audience.clone() };
            let r = sb.present(&vc, &secrets, &sel, Nonce::random(), t0());
            assert_eq!(r.err(), Some(DeriveError::GroupViolation(DRIVER_CONTEXT_GROUP.into())), "{}", schema.name);
            local += 1;
        }

        let whole = Selection { reveal: group.members.clone(), predicates: Vec::new(), audience };
        for drop in &members {
            let nonce = Nonce::random();
            let mut p = sb.present(&vc, &secrets, &whole, nonce, t0()).unwrap();
            p.disclosed.retain(|d| &d.name != drop);
            p.holder_signature = sb.holder_keys.sign(&p.signing_bytes());
            assert_eq!(sb.verify(&p, nonce, t0()), Err(FailReason::GroupViolation), "dropping {drop}");
            forged += 1;
        }
    }

    let stack = Stack::new(t0());
    let holder = stack.enrolled("h", |did| record(NHS[6], date(1988, 8, 8), [true, true, true, false], 1, "v", did));
    let items: Vec<RequestItem> = DRIVER_CLAIMS.iter().map(|d| RequestItem::reveal(d)).collect();
    let req = stack.open("g", &holder, Some(RequestParams::itemized(items, "split")));
    let out: DecideOutcome = stack.decide(&holder, &req.request_id, &Decision::Partial(vec![0, 1])).json().unwrap();
    assert_eq!(out.response.outcome, Outcome::Denied);
    assert!(out.response.presentation.is_none());
    let ex = stack.bank.verifier_state().exchange(&req.request_id).unwrap();
    assert_eq!(ex.outcome.map(|o| o.result), Some(VerificationResult::Denied));
    assert!(stack.bank.flags("g").unwrap().0.is_empty());
    format!("{local} split derivations refused, {forged} forged splits rejected GROUP_VIOLATION, split consent DENIED on the wire")
}

fn unhex<const N: usize>(s: &str) -> [u8; N] {
    hex::decode(s).unwrap().try_into().unwrap()
}

fn cryptographic_conformance() -> String {
    // (secret, public, message, signature)
    let vectors = [
        (
            "9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60",
            "d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a",
            "",
            "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e065224901555fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b",
        ),
        (
            "4ccd089b28ff96da9db6c346ec114e0f5b8a319f35aba624da8cf6ed4fb8a6fb",
            "3d4017c3e843895a92b70aa74d1b7ebc9c982ccf2ec4968cc0cd55f12af4660c",
            "72",
            "92a009a9f0d4cab8720e820b5f642540a2b27b5416503f8fb3762223ebdb69da085ac1e43e15996e458f3613d0f11d8c387b2eaeb4302aeeb00d291612bb0c00",
        ),
        (
            "c5aa8df43f9f837bedb7442f31dcb7b166d38535076f094b85ce3a2e0b4458f7",
            "fc51cd8e6218a1a38da47ed00230f0580816ed13ba3303ac5deb911548908025",
            "af82",
            "6291d657deec24024827e69c3abe01a30ce548a284743a445e3680d7db5ac3ac18ff9b538d16f290ae67f760984dc6594a7c15e9716ed28dc027beceea1ec40a",
        ),
    ];
    for (i, (secret, public, message, signature)) in vectors.iter().enumerate() {
        let keys = KeyPair::from_seed(unhex(secret));
        let msg = hex::decode(message).unwrap();
        assert_eq!(keys.public.to_hex(), *public, "vector {} public key", i + 1);
        let sig = keys.sign(&msg);
        assert_eq!(sig.to_hex(), *signature, "vector {} signature", i + 1);
        assert!(verify_signature(&keys.public, &msg, &sig));
        let mut bad = msg.clone();
        bad.push(0);
        assert!(!verify_signature(&keys.public, &bad, &sig));
    }

    assert_eq!(digest(b"").to_hex(), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    assert_eq!(digest(b"abc").to_hex(), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    assert_eq!(Hash32::from_hex(&digest(b"abc").to_hex()).unwrap(), digest(b"abc"));

    let mut runner = TestRunner::deterministic();
    let strategy = canonical_values();
    for n in 0..10_000 {
        let v = strategy.new_tree(&mut runner).unwrap().current();
        let bytes = canonicalize(&v);
        let back = parse(&bytes).unwrap_or_else(|e| panic!("value {n} failed to parse back: {e}"));
        assert!(back.semantic_eq(&v), "value {n}: {v:?} came back as {back:?}");
        assert_eq!(canonicalize(&back), bytes);
    }
    "3 RFC 8032 vectors, SHA-256 empty-string vector, 10000 canonical round-trips".into()
}

fn canonical_values() -> impl Strategy<Value = CanonicalValue> {
    use proptest::prelude::*;
    let leaf = prop_oneof![
        Just(CanonicalValue::Null),
        any::<bool>().prop_map(CanonicalValue::Bool),
        any::<i64>().prop_map(CanonicalValue::Integer),
        "\\PC{0,12}".prop_map(CanonicalValue::Text),
        "[\\x00-\\x1f\"\\\\a-z]{0,6}".prop_map(CanonicalValue::Text),
        (1i32..=9999, 1u32..=12, 1u32..=28)
            .prop_map(|(y, m, d)| CanonicalValue::Date(chrono::NaiveDate::from_ymd_opt(y, m, d).unwrap())),
    ];
    leaf.prop_recursive(4, 48, 6, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..6).prop_map(CanonicalValue::List),
            prop::collection::btree_map("\\PC{0,8}", inner, 0..6).prop_map(CanonicalValue::Map),
        ]
    })
}
