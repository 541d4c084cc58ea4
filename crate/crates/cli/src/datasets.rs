//! Seeded dataset generators. Every generator writes the dataset plus a
//! plaintext sidecar carrying the ground truth, so correctness checks
//! never re-derive expectations from ciphertext. The same seed and
//! record count reproduce the files byte for byte.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use objectlens_core::crypto::{
    encode_b64, hom_encrypt, peks_encrypt, HomPublicKey, PeksPublicKey, DEFAULT_PLAINTEXT_BOUND,
};
use rand::{CryptoRng, Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub struct DatasetFiles {
    pub data: PathBuf,
    pub sidecar: PathBuf,
    pub data_bytes: u64,
}

const FIRST_NAMES: &[&str] = &[
    "Ada", "Grace", "Edsger", "Alan", "Barbara", "Donald", "Radia", "Ken", "Dennis", "Frances",
    "Niklaus", "Leslie", "Tony", "Margaret", "John", "Kathleen",
];
const LAST_NAMES: &[&str] = &[
    "Lovelace", "Hopper", "Dijkstra", "Turing", "Liskov", "Knuth", "Perlman", "Thompson",
    "Ritchie", "Allen", "Wirth", "Lamport", "Hoare", "Hamilton", "Backus", "Booth",
];

fn pick<'a, R: Rng>(rng: &mut R, pool: &[&'a str]) -> &'a str {
    pool[rng.gen_range(0..pool.len())]
}

// Salary ledger

#[derive(Serialize)]
struct EmployeeRecord {
    name: String,
    #[serde(rename = "SSN")]
    ssn: String,
    salary: String,
}

#[derive(Serialize, Deserialize)]
pub struct EmployeeSidecar {
    pub count: u64,
    pub sum: u64,
    /// Integer average, `sum / count` rounded down.
    pub average: u64,
    pub names: Vec<String>,
    pub salaries: Vec<u64>,
}

/// Employee ledger: `{"employee": [{name, SSN, salary}, ...]}` with each
/// salary encrypted under the owner's summation key.
pub fn gen_employees<R: RngCore + CryptoRng>(
    dir: &Path,
    records: usize,
    owner_pk: &HomPublicKey,
    rng: &mut R,
) -> Result<DatasetFiles, CliError> {
    fs::create_dir_all(dir)?;
    let mut rows = Vec::with_capacity(records);
    let mut names = Vec::with_capacity(records);
    let mut salaries = Vec::with_capacity(records);
    for _ in 0..records {
        let name = format!("{} {}", pick(rng, FIRST_NAMES), pick(rng, LAST_NAMES));
        let ssn = format!(
            "{:03}-{:02}-{:04}",
            rng.gen_range(100..900),
            rng.gen_range(10..100),
            rng.gen_range(1000..10000)
        );
        let salary = rng.gen_range(30_000u64..180_000);
        let ct = hom_encrypt(owner_pk, salary, DEFAULT_PLAINTEXT_BOUND, rng)?;
        rows.push(EmployeeRecord {
            name: name.clone(),
            ssn,
            salary: encode_b64(&ct.to_bytes()),
        });
        names.push(name);
        salaries.push(salary);
    }

    let data = dir.join("employees.json");
    let body = serde_json::to_vec_pretty(&serde_json::json!({ "employee": rows }))?;
    fs::write(&data, &body)?;

    let sum: u64 = salaries.iter().sum();
    let count = records as u64;
    let sidecar = dir.join("employees.plain.json");
    let side = EmployeeSidecar {
        count,
        sum,
        average: if count == 0 { 0 } else { sum / count },
        names,
        salaries,
    };
    fs::write(&sidecar, serde_json::to_vec_pretty(&side)?)?;

    Ok(DatasetFiles { data, sidecar, data_bytes: body.len() as u64 })
}

// Facility reports

#[derive(Serialize)]
struct FacilityRecord {
    facility_id: String,
    name: String,
    region: String,
    staff: u32,
    pediatric_beds: String,
    /// Hourly occupancy counts for a year; bulk that a view never needs.
    occupancy: Vec<u16>,
    admissions: Vec<u16>,
}

#[derive(Serialize, Deserialize)]
pub struct CovidSidecar {
    pub count: u64,
    pub sum: u64,
    pub average: u64,
    pub beds: Vec<u64>,
}

const SERIES_LEN: usize = 8760;

/// Facility reports: one record per facility whose `pediatric_beds`
/// count is encrypted under the owner's key, padded with a year of
/// hourly series data. Around 80 KB per facility, so ~130 facilities
/// pass the 10 MB mark.
pub fn gen_covid<R: RngCore + CryptoRng>(
    dir: &Path,
    facilities: usize,
    owner_pk: &HomPublicKey,
    rng: &mut R,
) -> Result<DatasetFiles, CliError> {
    fs::create_dir_all(dir)?;
    let data = dir.join("covid.json");
    let mut w = BufWriter::new(File::create(&data)?);
    w.write_all(b"{\"facility\":[")?;

    let mut beds_all = Vec::with_capacity(facilities);
    for i in 0..facilities {
        let beds = rng.gen_range(0u64..400);
        let ct = hom_encrypt(owner_pk, beds, DEFAULT_PLAINTEXT_BOUND, rng)?;
        let record = FacilityRecord {
            facility_id: format!("FAC{i:05}"),
            name: format!("{} {} Medical Center", pick(rng, LAST_NAMES), pick(rng, FIRST_NAMES)),
            region: format!("R{}", rng.gen_range(1..10)),
            staff: rng.gen_range(20..2000),
            pediatric_beds: encode_b64(&ct.to_bytes()),
            occupancy: (0..SERIES_LEN).map(|_| rng.gen_range(0..1000)).collect(),
            admissions: (0..SERIES_LEN).map(|_| rng.gen_range(0..200)).collect(),
        };
        if i > 0 {
            w.write_all(b",")?;
        }
        serde_json::to_writer(&mut w, &record)?;
        beds_all.push(beds);
    }
    w.write_all(b"]}")?;
    w.flush()?;
    let data_bytes = fs::metadata(&data)?.len();

    let sum: u64 = beds_all.iter().sum();
    let count = facilities as u64;
    let sidecar = dir.join("covid.plain.json");
    let side = CovidSidecar {
        count,
        sum,
        average: if count == 0 { 0 } else { sum / count },
        beds: beds_all,
    };
    fs::write(&sidecar, serde_json::to_vec_pretty(&side)?)?;

    Ok(DatasetFiles { data, sidecar, data_bytes })
}

// Census table

/// The searchable occupation vocabulary: 14 values, one per keyword of
/// the census table's search column.
pub const OCCUPATIONS: &[&str] = &[
    "adm-clerical",
    "armed-forces",
    "craft-repair",
    "exec-managerial",
    "farming-fishing",
    "handlers-cleaners",
    "machine-op-inspct",
    "other-service",
    "priv-house-serv",
    "prof-specialty",
    "protective-serv",
    "sales",
    "tech-support",
    "transport-moving",
];

pub const ADULT_HEADER: [&str; 14] = [
    "age",
    "workclass",
    "fnlwgt",
    "education",
    "education_num",
    "marital_status",
    "occupation",
    "relationship",
    "race",
    "sex",
    "capital_gain",
    "capital_loss",
    "hours_per_week",
    "native_country",
];

const WORKCLASS: &[&str] = &[
    "Private", "Self-emp-not-inc", "Self-emp-inc", "Federal-gov", "Local-gov", "State-gov",
    "Without-pay",
];
const EDUCATION: &[&str] = &[
    "Bachelors", "HS-grad", "11th", "Masters", "9th", "Some-college", "Assoc-acdm", "Doctorate",
];
const MARITAL: &[&str] = &[
    "Married-civ-spouse", "Divorced", "Never-married", "Separated", "Widowed",
];
const RELATIONSHIP: &[&str] = &[
    "Wife", "Own-child", "Husband", "Not-in-family", "Other-relative", "Unmarried",
];
const RACE: &[&str] = &["White", "Asian-Pac-Islander", "Amer-Indian-Eskimo", "Other", "Black"];
const SEX: &[&str] = &["Male", "Female"];
const COUNTRY: &[&str] = &[
    "United-States", "Mexico", "Philippines", "Germany", "Canada", "India", "Japan", "Cuba",
];

/// Census table: 14 columns, the occupation column encrypted so that the
/// listed readers can search it by keyword. The sidecar is the same
/// table with the occupation in plain text.
pub fn gen_adult<R: RngCore + CryptoRng>(
    dir: &Path,
    records: usize,
    readers: &[PeksPublicKey],
    rng: &mut R,
) -> Result<DatasetFiles, CliError> {
    if readers.is_empty() {
        return Err(CliError::invalid(
            "census data needs at least one search reader key",
        ));
    }
    fs::create_dir_all(dir)?;
    let data = dir.join("adult.csv");
    let sidecar = dir.join("adult.plain.csv");
    let mut enc = csv::Writer::from_path(&data).map_err(csv_err)?;
    let mut plain = csv::Writer::from_path(&sidecar).map_err(csv_err)?;
    enc.write_record(ADULT_HEADER).map_err(csv_err)?;
    plain.write_record(ADULT_HEADER).map_err(csv_err)?;

    for _ in 0..records {
        let occupation = pick(rng, OCCUPATIONS).to_string();
        let ct = peks_encrypt(readers, std::slice::from_ref(&occupation), rng)?;
        let mut row = vec![
            rng.gen_range(17u32..80).to_string(),
            pick(rng, WORKCLASS).to_string(),
            rng.gen_range(10_000u32..1_000_000).to_string(),
            pick(rng, EDUCATION).to_string(),
            rng.gen_range(1u32..17).to_string(),
            pick(rng, MARITAL).to_string(),
            encode_b64(&ct.to_bytes()),
            pick(rng, RELATIONSHIP).to_string(),
            pick(rng, RACE).to_string(),
            pick(rng, SEX).to_string(),
            rng.gen_range(0u32..5000).to_string(),
            rng.gen_range(0u32..2000).to_string(),
            rng.gen_range(1u32..99).to_string(),
            pick(rng, COUNTRY).to_string(),
        ];
        enc.write_record(&row).map_err(csv_err)?;
        row[6] = occupation;
        plain.write_record(&row).map_err(csv_err)?;
    }
    enc.flush()?;
    plain.flush()?;
    let data_bytes = fs::metadata(&data)?.len();
    Ok(DatasetFiles { data, sidecar, data_bytes })
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::invalid(format!("csv write failed: {e}"))
}
