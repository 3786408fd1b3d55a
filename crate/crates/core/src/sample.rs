//! A self-contained issuer/holder/verifier sandbox over an in-memory
//! registry, plus synthetic subject data. Used by the browser demo and the
//! property suites.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, NaiveDate};
use rand::distributions::Alphanumeric;
use rand::Rng;

use crate::canonical::Nonce;
use crate::credential::{
    issue, verify_full, ClaimValue, CredentialError, FailReason, HolderSecrets, Issuance, SchemaDefinition,
    StatusSlots, Validity, VerifiableCredential, DRIVER_CLAIMS,
};
use crate::did::{generate_did, Did, DidAnchor, KeyPair};
use crate::disclosure::{derive, verify_presentation, DeriveError, DisclosedFacts, Expectation, Presentation, ReplayCache, Selection};
use crate::registry::{Registry, StatusList, StatusUpdate};
use crate::time::Timestamp;

pub struct Sandbox {
    pub registry: Registry,
    pub issuer: Did,
    pub issuer_keys: KeyPair,
    pub holder: Did,
    pub holder_keys: KeyPair,
    pub verifier: Did,
    pub replay: ReplayCache,
    slots: StatusSlots,
}

impl Default for Sandbox {
    fn default() -> Self {
        Self::new()
    }
}

impl Sandbox {
    /// Fresh registry with an anchored issuer and holder.
    pub fn new() -> Self {
        let mut registry = Registry::in_memory();
        let (issuer, idoc, issuer_keys) = generate_did(Some("https://issuer.example".into()));
        registry.anchor(&DidAnchor::new(idoc, &issuer_keys)).expect("fresh issuer anchors");
        let (holder, hdoc, holder_keys) = generate_did(None);
        registry.anchor(&DidAnchor::new(hdoc, &holder_keys)).expect("fresh holder anchors");
        let (verifier, _, _) = generate_did(None);
        Sandbox {
            registry,
            issuer,
            issuer_keys,
            holder,
            holder_keys,
            verifier,
            replay: ReplayCache::default(),
            slots: StatusSlots::new(),
        }
    }

    pub fn issue(
        &mut self,
        schema: &SchemaDefinition,
        values: &BTreeMap<String, ClaimValue>,
        now: Timestamp,
    ) -> Result<(VerifiableCredential, HolderSecrets), CredentialError> {
        let (status, opened) = self.slots.next_free();
        if opened {
            let fresh = StatusList::fresh(self.issuer.clone(), status.list_id.clone());
            self.registry.publish_status(&StatusUpdate::new(fresh, &self.issuer_keys))?;
        }
        issue(
            Issuance {
                schema,
                issuer: &self.issuer,
                issuer_keys: &self.issuer_keys,
                subject: &self.holder,
                values,
                issued_at: now,
                validity: Validity::default(),
                status,
            },
            &mut self.slots,
        )
    }

    pub fn present(
        &self,
        vc: &VerifiableCredential,
        secrets: &HolderSecrets,
        selection: &Selection,
        nonce: Nonce,
        now: Timestamp,
    ) -> Result<Presentation, DeriveError> {
        derive(vc, secrets, selection, &self.verifier, nonce, &self.holder_keys, now)
    }

    pub fn verify(&self, p: &Presentation, nonce: Nonce, now: Timestamp) -> Result<DisclosedFacts, FailReason> {
        let expect = Expectation { verifier: &self.verifier, nonce, replay: &self.replay };
        verify_presentation(p, &self.registry, &expect, now)
    }

    pub fn verify_credential(&self, vc: &VerifiableCredential, now: Timestamp) -> Result<(), FailReason> {
        verify_full(vc, &self.registry, now)
    }

    pub fn revoke(&mut self, vc: &VerifiableCredential) -> Result<(), CredentialError> {
        let current = self
            .registry
            .latest_status(&self.issuer, &vc.status_ref.list_id)
            .map_err(|e| CredentialError::NotFound(e.to_string()))?;
        if let Some(update) = crate::credential::revocation_update(&self.issuer_keys, &current, &vc.status_ref)? {
            self.registry.publish_status(&update)?;
        }
        Ok(())
    }
}

fn random_text<R: Rng>(rng: &mut R, len: usize) -> String {
    rng.sample_iter(&Alphanumeric).take(len).map(char::from).collect()
}

fn random_date<R: Rng>(rng: &mut R, from_year: i32, to_year: i32) -> NaiveDate {
    let start = NaiveDate::from_ymd_opt(from_year, 1, 1).expect("valid");
    let end = NaiveDate::from_ymd_opt(to_year, 12, 31).expect("valid");
    start + chrono::Duration::days(rng.gen_range(0..=(end - start).num_days()))
}

/// Values for a full credential. Text and dates are high-entropy so that
/// byte scans for them cannot hit by accident.
pub fn random_full_values<R: Rng>(rng: &mut R) -> BTreeMap<String, ClaimValue> {
    let dob = random_date(rng, 1920, 2010);
    let assessed = random_date(rng, dob.year().max(2015), 2024);
    let mut v = random_fairness_values(rng);
    v.insert("nhs_number".into(), ClaimValue::Text(format!("nhs-{}", random_text(rng, 16))));
    v.insert("date_of_birth".into(), ClaimValue::Date(dob));
    v.insert("birth_year".into(), ClaimValue::Integer(i64::from(dob.year())));
    v.insert("assessment_date".into(), ClaimValue::Date(assessed.max(dob)));
    if rng.gen_bool(0.8) {
        v.insert("detail".into(), ClaimValue::Text(format!("detail {}", random_text(rng, 24))));
    }
    v
}

pub fn random_fairness_values<R: Rng>(rng: &mut R) -> BTreeMap<String, ClaimValue> {
    let mut v: BTreeMap<String, ClaimValue> =
        DRIVER_CLAIMS.iter().map(|d| (d.to_string(), ClaimValue::Boolean(rng.gen()))).collect();
    v.insert("work_incapacity_months".into(), ClaimValue::Integer(rng.gen_range(0..=120)));
    v
}

/// A random selection that respects disclosure groups: each group is either
/// wholly revealed or not at all.
pub fn random_selection<R: Rng>(rng: &mut R, vc: &VerifiableCredential, secrets: &HolderSecrets) -> Selection {
    let mut reveal = BTreeSet::new();
    for c in &secrets.claims {
        if vc.group_of(&c.name).is_none() && rng.gen_bool(0.5) {
            reveal.insert(c.name.clone());
        }
    }
    for g in &vc.groups {
        if rng.gen_bool(0.5) {
            reveal.extend(g.members.iter().cloned());
        }
    }
    Selection { reveal, predicates: Vec::new(), audience: vc.intended_audience.clone() }
}
