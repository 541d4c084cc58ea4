//! Benchmark scenarios against a running gateway: first-byte latency,
//! chain-length overhead, bandwidth-capped use cases, and isolated
//! crypto primitive timings. All scenarios return [`BenchReport`]s; the
//! binary prints them and optionally writes the CSV form.

use std::io;
use std::path::Path;
use std::time::Instant;

use objectlens_core::crypto::{
    decode_b64, hom_add, hom_decrypt, hom_encrypt, hom_keygen, peks_encrypt, peks_keygen,
    peks_test, peks_trapdoor, pre_decrypt, pre_reencrypt, pre_token, HomCiphertext, HomSecretKey,
    DEFAULT_PLAINTEXT_BOUND,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::client::{reenc_header, trapdoor_header, Gateway};
use crate::datasets::{self, CovidSidecar};
use crate::policies;
use crate::ratelimit::TokenBucket;
use crate::report::{summarize, BenchReport};
use crate::CliError;

#[derive(Clone)]
pub struct Target {
    pub gateway: String,
    pub token: String,
}

impl Target {
    pub fn client(&self) -> Result<Gateway, CliError> {
        Gateway::new(&self.gateway, &self.token)
    }
}

/// Bandwidth profiles mirroring common access links.
#[derive(Clone, Copy)]
pub struct Profile {
    pub name: &'static str,
    pub mbps: f64,
}

pub const PROFILES: &[Profile] = &[
    Profile { name: "4g", mbps: 28.9 },
    Profile { name: "fiber", mbps: 55.98 },
    Profile { name: "lan", mbps: 887.0 },
];

pub fn profile_by_name(name: &str) -> Option<Profile> {
    PROFILES.iter().copied().find(|p| p.name == name)
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum UseCase {
    Covid,
    Adult,
}

impl UseCase {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "covid" => Some(UseCase::Covid),
            "adult" => Some(UseCase::Adult),
            _ => None,
        }
    }
}

/// Roughly `size` bytes of well-formed JSON: a tiny `meta` marker field
/// (the subscription point for inert chains) plus random string rows.
pub fn filler_json(size: usize, rng: &mut impl Rng) -> Vec<u8> {
    let mut out = Vec::with_capacity(size + 96);
    out.extend_from_slice(b"{\"meta\":\"bench\",\"rows\":[");
    let mut first = true;
    while out.len() + 70 < size {
        if !first {
            out.push(b',');
        }
        first = false;
        out.push(b'"');
        for _ in 0..64 {
            out.push(b'a' + rng.gen_range(0..26u8));
        }
        out.push(b'"');
    }
    if first {
        out.extend_from_slice(b"\"\"");
    }
    out.extend_from_slice(b"]}");
    out
}

/// Runs `trials` measurements on each of `clients` concurrent clients,
/// every client over its own connection. Returns one sample list per
/// client.
fn run_clients(
    t: &Target,
    clients: usize,
    trials: usize,
    measure: impl Fn(&Gateway, usize) -> Result<f64, CliError> + Sync,
) -> Result<Vec<Vec<f64>>, CliError> {
    assert!(clients >= 1);
    let results: Vec<Result<Vec<f64>, CliError>> = std::thread::scope(|s| {
        let measure = &measure;
        let handles: Vec<_> = (0..clients)
            .map(|_| {
                s.spawn(move || -> Result<Vec<f64>, CliError> {
                    let gw = t.client()?;
                    (0..trials).map(|i| measure(&gw, i)).collect()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("client thread panicked"))
            .collect()
    });
    results.into_iter().collect()
}

/// Overall report plus one per-client report when more than one client ran.
fn reports_for(scenario: &str, per_client: Vec<Vec<f64>>, bytes: u64) -> Vec<BenchReport> {
    let mut out = Vec::new();
    let overall: Vec<f64> = per_client.iter().flatten().copied().collect();
    out.push(BenchReport::new(scenario, overall, bytes));
    if per_client.len() > 1 {
        for (c, samples) in per_client.into_iter().enumerate() {
            out.push(BenchReport::new(format!("{scenario}.c{c}"), samples, bytes));
        }
    }
    out
}

fn timed_get(gw: &Gateway, path: &str, headers: &[(String, String)], cap_mbps: Option<f64>) -> Result<(f64, f64), CliError> {
    let cap = cap_mbps.map(TokenBucket::from_mbps);
    let stats = gw.get_object(path, headers, &mut io::sink(), cap)?;
    Ok((
        stats.ttfb.as_secs_f64() * 1000.0,
        stats.total.as_secs_f64() * 1000.0,
    ))
}

/// Time to first body byte for raw objects vs the same objects behind a
/// single inert step, over each size in `sizes`.
pub fn run_ttfb(
    t: &Target,
    sizes: &[usize],
    trials: usize,
    clients: usize,
    account: &str,
    container: &str,
    seed: u64,
) -> Result<Vec<BenchReport>, CliError> {
    let setup = t.client()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut reports = Vec::new();

    for &size in sizes {
        let body = filler_json(size, &mut rng);
        let actual = body.len() as u64;
        let raw_path = format!("{account}/{container}/raw-{size}.json");
        let noop_path = format!("{account}/{container}/noop-{size}.json");
        setup.put_object_bytes(&raw_path, body.clone())?;
        setup.put_object_bytes(&noop_path, body)?;
        setup.put_policy(&policies::noop_chain(
            &format!("bench.noop-{size}"),
            &format!("v1/{noop_path}"),
            1,
            "$.meta",
        ))?;

        let raw = run_clients(t, clients, trials, |gw, _| {
            Ok(timed_get(gw, &raw_path, &[], None)?.0)
        })?;
        let noop = run_clients(t, clients, trials, |gw, _| {
            Ok(timed_get(gw, &noop_path, &[], None)?.0)
        })?;

        let raw_mean = summarize(&raw.concat()).mean;
        let noop_mean = summarize(&noop.concat()).mean;
        reports.extend(reports_for(&format!("ttfb-raw-{size}"), raw, actual));
        let mut noop_reports = reports_for(&format!("ttfb-noop-{size}"), noop, actual);
        noop_reports[0]
            .extra
            .push(("overhead_ms".into(), noop_mean - raw_mean));
        noop_reports[0]
            .extra
            .push(("reference_overhead_ms".into(), 9.0));
        reports.extend(noop_reports);
    }
    Ok(reports)
}

/// Full-download latency across inert chains of the given lengths over
/// one object; length 0 means no policy and serves as the raw baseline.
pub fn run_chain(
    t: &Target,
    lengths: &[usize],
    size: usize,
    trials: usize,
    clients: usize,
    account: &str,
    container: &str,
    seed: u64,
) -> Result<Vec<BenchReport>, CliError> {
    let setup = t.client()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let path = format!("{account}/{container}/chain.json");
    let body = filler_json(size, &mut rng);
    let actual = body.len() as u64;
    setup.put_object_bytes(&path, body)?;

    let policy_id = "bench.chain";
    let mut reports = Vec::new();
    let mut means: Vec<(usize, f64)> = Vec::new();

    for &len in lengths {
        if len == 0 {
            let _ = setup.delete_policy(policy_id);
        } else {
            setup.put_policy(&policies::noop_chain(
                policy_id,
                &format!("v1/{path}"),
                len,
                "$.meta",
            ))?;
        }
        let samples = run_clients(t, clients, trials, |gw, _| {
            Ok(timed_get(gw, &path, &[], None)?.1)
        })?;
        means.push((len, summarize(&samples.concat()).mean));
        reports.extend(reports_for(&format!("chain-{len}"), samples, actual));
    }
    let _ = setup.delete_policy(policy_id);

    // Growth factor of the longest chain over the shortest policied one.
    let policied: Vec<(usize, f64)> = means.into_iter().filter(|(l, _)| *l >= 1).collect();
    if policied.len() >= 2 {
        let (lo_len, lo) = policied[0];
        let (hi_len, hi) = policied[policied.len() - 1];
        let scenario = format!("chain-{hi_len}");
        if let Some(r) = reports.iter_mut().find(|r| r.scenario == scenario) {
            r.extra.push((format!("vs_len{lo_len}_x"), hi / lo));
        }
    }
    Ok(reports)
}

/// Raw download vs transformed view under a client-side bandwidth cap.
///
/// The scenario datasets, keys, and policies are generated from `seed`
/// into `workdir` and pushed to the gateway before measuring. The raw
/// series downloads an unprotected copy of the same file.
pub fn run_usecase(
    t: &Target,
    usecase: UseCase,
    profile: Profile,
    trials: usize,
    clients: usize,
    records: usize,
    seed: u64,
    workdir: &Path,
) -> Result<Vec<BenchReport>, CliError> {
    match usecase {
        UseCase::Covid => run_usecase_covid(t, profile, trials, clients, records, seed, workdir),
        UseCase::Adult => run_usecase_adult(t, profile, trials, clients, records, seed, workdir),
    }
}

fn run_usecase_covid(
    t: &Target,
    profile: Profile,
    trials: usize,
    clients: usize,
    records: usize,
    seed: u64,
    workdir: &Path,
) -> Result<Vec<BenchReport>, CliError> {
    let setup = t.client()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let owner = hom_keygen(&mut rng);
    let authority = hom_keygen(&mut rng);
    let files = datasets::gen_covid(workdir, records, &owner.pk, &mut rng)?;
    let sidecar: CovidSidecar = serde_json::from_slice(&std::fs::read(&files.sidecar)?)?;

    let data_path = "usecase/covid/covid.json";
    let raw_path = "usecase/covid/covid-raw.json";
    setup.put_meta("keys/covid-owner/hom", owner.pk.to_bytes())?;
    setup.put_object_file(data_path, &files.data)?;
    setup.put_object_file(raw_path, &files.data)?;
    setup.put_policy(&policies::covid(
        "usecase.covid",
        &format!("v1/{data_path}"),
        "meta://keys/covid-owner/hom",
    ))?;

    let token = pre_token(&owner.sk, &authority.pk)?;
    let headers = vec![reenc_header(&token.to_bytes())];

    // One checked view first: the aggregate must decrypt to the sidecar
    // total before its timing means anything.
    let mut view_body = Vec::new();
    setup.get_object(data_path, &headers, &mut view_body, None)?;
    let view_bytes = view_body.len() as u64;
    verify_covid_view(&view_body, &authority.sk, &sidecar)?;

    let raw = run_clients(t, clients, trials, |gw, _| {
        Ok(timed_get(gw, raw_path, &[], Some(profile.mbps))?.1)
    })?;
    let view = run_clients(t, clients, trials, |gw, _| {
        Ok(timed_get(gw, data_path, &headers, Some(profile.mbps))?.1)
    })?;

    let raw_mean = summarize(&raw.concat()).mean;
    let view_mean = summarize(&view.concat()).mean;
    let mut reports = reports_for(
        &format!("covid-raw-{}", profile.name),
        raw,
        files.data_bytes,
    );
    let mut view_reports = reports_for(&format!("covid-view-{}", profile.name), view, view_bytes);
    view_reports[0]
        .extra
        .push(("speedup_x".into(), raw_mean / view_mean));
    if profile.name == "4g" {
        view_reports[0]
            .extra
            .push(("reference_speedup_x".into(), 72.1));
    }
    reports.append(&mut view_reports);
    Ok(reports)
}

fn verify_covid_view(
    view: &[u8],
    sk: &HomSecretKey,
    sidecar: &CovidSidecar,
) -> Result<(), CliError> {
    let doc: serde_json::Value = serde_json::from_slice(view)?;
    let total = &doc["pediatric_total"];
    let count = total["count"].as_u64().unwrap_or(u64::MAX);
    if count != sidecar.count {
        return Err(CliError::invalid(format!(
            "view count {count} != expected {}",
            sidecar.count
        )));
    }
    if sidecar.count == 0 {
        return Ok(());
    }
    let ct_text = total["sum"]
        .as_str()
        .ok_or_else(|| CliError::invalid("view is missing the aggregate ciphertext"))?;
    let ct = HomCiphertext::from_bytes(&decode_b64(ct_text)?)?;
    let sum = pre_decrypt(sk, &ct, DEFAULT_PLAINTEXT_BOUND)?;
    if sum != sidecar.sum {
        return Err(CliError::invalid(format!(
            "view total {sum} != expected {}",
            sidecar.sum
        )));
    }
    Ok(())
}

fn run_usecase_adult(
    t: &Target,
    profile: Profile,
    trials: usize,
    clients: usize,
    records: usize,
    seed: u64,
    workdir: &Path,
) -> Result<Vec<BenchReport>, CliError> {
    let setup = t.client()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let reader = peks_keygen(&mut rng);
    let files = datasets::gen_adult(workdir, records, &[reader.pk.clone()], &mut rng)?;

    let data_path = "usecase/adult/adult.csv";
    let raw_path = "usecase/adult/adult-raw.csv";
    setup.put_object_file(data_path, &files.data)?;
    setup.put_object_file(raw_path, &files.data)?;
    setup.put_policy(&policies::adult("usecase.adult", &format!("v1/{data_path}")))?;

    let keyword = "prof-specialty";
    let trapdoor = peks_trapdoor(&reader.sk, keyword)?;
    let headers = vec![trapdoor_header(&trapdoor.to_bytes())];

    // Check the filter once against the sidecar before timing it.
    let mut view_body = Vec::new();
    setup.get_object(data_path, &headers, &mut view_body, None)?;
    let view_bytes = view_body.len() as u64;
    let expected = matching_rows(&files.sidecar, keyword)?;
    let got = csv_data_rows(&view_body)?;
    if got != expected {
        return Err(CliError::invalid(format!(
            "view kept {got} rows, sidecar says {expected} match {keyword}"
        )));
    }

    let raw = run_clients(t, clients, trials, |gw, _| {
        Ok(timed_get(gw, raw_path, &[], Some(profile.mbps))?.1)
    })?;
    let view = run_clients(t, clients, trials, |gw, _| {
        Ok(timed_get(gw, data_path, &headers, Some(profile.mbps))?.1)
    })?;

    let raw_mean = summarize(&raw.concat()).mean;
    let view_mean = summarize(&view.concat()).mean;
    let mut reports = reports_for(
        &format!("adult-raw-{}", profile.name),
        raw,
        files.data_bytes,
    );
    let mut view_reports = reports_for(&format!("adult-view-{}", profile.name), view, view_bytes);
    view_reports[0]
        .extra
        .push(("slowdown_x".into(), view_mean / raw_mean));
    if profile.name == "lan" {
        view_reports[0]
            .extra
            .push(("reference_slowdown_x".into(), 3.3));
    }
    reports.append(&mut view_reports);
    Ok(reports)
}

fn matching_rows(sidecar: &Path, keyword: &str) -> Result<u64, CliError> {
    let mut rdr = csv::Reader::from_path(sidecar)
        .map_err(|e| CliError::invalid(format!("sidecar read failed: {e}")))?;
    let mut n = 0;
    for row in rdr.records() {
        let row = row.map_err(|e| CliError::invalid(format!("sidecar row: {e}")))?;
        if &row[6] == keyword {
            n += 1;
        }
    }
    Ok(n)
}

fn csv_data_rows(body: &[u8]) -> Result<u64, CliError> {
    let mut rdr = csv::Reader::from_reader(body);
    let mut n = 0;
    for row in rdr.records() {
        row.map_err(|e| CliError::invalid(format!("view row: {e}")))?;
        n += 1;
    }
    Ok(n)
}

/// Reference timings for the primitive operations on other hardware;
/// reported next to measurements, never asserted.
const CRYPTO_REFERENCES: &[(&str, f64, f64)] = &[
    ("hom_add", 1.62, 616.0),
    ("pre_reencrypt", 7.29, 137.0),
    ("peks_test", 6.02, 166.0),
];

fn time_op(
    reports: &mut Vec<BenchReport>,
    trials: usize,
    name: &str,
    mut op: impl FnMut() -> Result<(), CliError>,
) -> Result<(), CliError> {
    for _ in 0..3 {
        op()?;
    }
    let mut samples = Vec::with_capacity(trials);
    for _ in 0..trials {
        let start = Instant::now();
        op()?;
        samples.push(start.elapsed().as_secs_f64() * 1000.0);
    }
    let mean = summarize(&samples).mean;
    let mut report = BenchReport::new(name, samples, 0).with_extra("ops_per_sec", 1000.0 / mean);
    if let Some((_, ref_ms, ref_ops)) = CRYPTO_REFERENCES.iter().find(|(n, _, _)| *n == name) {
        report = report
            .with_extra("reference_ms", *ref_ms)
            .with_extra("reference_ops_per_sec", *ref_ops);
    }
    reports.push(report);
    Ok(())
}

/// Isolated primitive timings: ciphertext addition, re-encryption,
/// keyword test, plus encrypt/decrypt context rows.
pub fn run_crypto(trials: usize) -> Result<Vec<BenchReport>, CliError> {
    let mut rng = ChaCha20Rng::seed_from_u64(4242);
    let owner = hom_keygen(&mut rng);
    let receiver = hom_keygen(&mut rng);
    let token = pre_token(&owner.sk, &receiver.pk)?;
    let bound = 1 << 20;
    let ct_a = hom_encrypt(&owner.pk, 123_456, bound, &mut rng)?;
    let ct_b = hom_encrypt(&owner.pk, 654_321, bound, &mut rng)?;

    let searcher = peks_keygen(&mut rng);
    let search_ct = peks_encrypt(
        &[searcher.pk.clone()],
        &["alpha".to_string(), "beta".to_string()],
        &mut rng,
    )?;
    let trapdoor = peks_trapdoor(&searcher.sk, "alpha")?;

    // Warm the discrete-log tables so decrypt timings measure decryption.
    hom_decrypt(&owner.sk, &ct_a, bound)?;
    pre_decrypt(&receiver.sk, &pre_reencrypt(&token, &ct_a)?, bound)?;

    let mut reports = Vec::new();
    time_op(&mut reports, trials, "hom_add", || {
        hom_add(&ct_a, &ct_b).map(|_| ()).map_err(Into::into)
    })?;
    time_op(&mut reports, trials, "pre_reencrypt", || {
        pre_reencrypt(&token, &ct_a).map(|_| ()).map_err(Into::into)
    })?;
    time_op(&mut reports, trials, "peks_test", || {
        peks_test(&search_ct, &trapdoor).map(|_| ()).map_err(Into::into)
    })?;
    let mut enc_rng = ChaCha20Rng::seed_from_u64(77);
    time_op(&mut reports, trials, "hom_encrypt", || {
        hom_encrypt(&owner.pk, 42, bound, &mut enc_rng)
            .map(|_| ())
            .map_err(Into::into)
    })?;
    time_op(&mut reports, trials, "hom_decrypt_2e20", || {
        hom_decrypt(&owner.sk, &ct_a, bound).map(|_| ()).map_err(Into::into)
    })?;

    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filler_json_is_valid_and_sized() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for size in [256usize, 10 * 1024, 1024 * 1024] {
            let body = filler_json(size, &mut rng);
            assert!(body.len() <= size + 96, "overshoot at {size}");
            assert!(body.len() + 80 >= size, "undershoot at {size}");
            let doc: serde_json::Value = serde_json::from_slice(&body).unwrap();
            assert_eq!(doc["meta"], "bench");
        }
    }

    #[test]
    fn profiles_cover_the_three_links() {
        assert_eq!(profile_by_name("4g").unwrap().mbps, 28.9);
        assert_eq!(profile_by_name("fiber").unwrap().mbps, 55.98);
        assert_eq!(profile_by_name("lan").unwrap().mbps, 887.0);
        assert!(profile_by_name("dsl").is_none());
    }

    #[test]
    fn crypto_bench_reports_reference_rows() {
        let reports = run_crypto(3).unwrap();
        let add = reports.iter().find(|r| r.scenario == "hom_add").unwrap();
        assert_eq!(add.samples_ms.len(), 3);
        assert!(add.extra.iter().any(|(k, v)| k == "reference_ms" && *v == 1.62));
        assert!(add.extra.iter().any(|(k, _)| k == "ops_per_sec"));
        assert!(reports.iter().any(|r| r.scenario == "pre_reencrypt"));
        assert!(reports.iter().any(|r| r.scenario == "peks_test"));
    }
}
