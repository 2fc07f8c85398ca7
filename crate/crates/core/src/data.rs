//! Categorical datasets with binary labels.
//!
//! Also hosts the seed-string generator: strings over the alphabet
//! `1..=B` labelled positive iff they agree with a hidden seed string in
//! exactly `m` positions.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::kb::{validate_name, KbError};
use crate::query::{Domains, Query};

/// Label column written for generated data.
pub const SYNTH_LABEL_COLUMN: &str = "label";
pub const SYNTH_POSITIVE: &str = "pos";
pub const SYNTH_NEGATIVE: &str = "neg";
pub const SYNTH_DATA_FILE: &str = "data.csv";
pub const SYNTH_SEED_FILE: &str = "seed.txt";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("label column {0:?} not found in header")]
    MissingLabelColumn(String),
    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("row {row}, column {column:?}: empty cell")]
    EmptyCell { row: usize, column: String },
    #[error("dataset has no features")]
    NoFeatures,
    #[error("duplicate feature {0:?}")]
    DuplicateFeature(String),
    #[error("instance {index} has {found} values, schema has {expected} features")]
    Arity { index: usize, expected: usize, found: usize },
    #[error(transparent)]
    Name(#[from] KbError),
    #[error("dataset has no {0} instances")]
    EmptyClass(&'static str),
    #[error("train fraction {0} is not in (0, 1)")]
    BadFraction(f64),
    #[error("invalid seed spec: {0}")]
    SeedSpec(String),
    #[error("string {string:?} does not fit the seed spec: {reason}")]
    BadString { string: String, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Instance {
    /// One value per schema feature, in schema order.
    pub values: Vec<String>,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<String>,
    domains: Vec<BTreeSet<String>>,
    instances: Vec<Instance>,
}

impl Dataset {
    pub fn new(features: Vec<String>, instances: Vec<Instance>) -> Result<Self, DataError> {
        if features.is_empty() {
            return Err(DataError::NoFeatures);
        }
        let mut seen = HashSet::new();
        for f in &features {
            validate_name(f)?;
            if !seen.insert(f.as_str()) {
                return Err(DataError::DuplicateFeature(f.clone()));
            }
        }
        let mut domains = vec![BTreeSet::new(); features.len()];
        for (index, inst) in instances.iter().enumerate() {
            if inst.values.len() != features.len() {
                return Err(DataError::Arity {
                    index,
                    expected: features.len(),
                    found: inst.values.len(),
                });
            }
            for (d, v) in domains.iter_mut().zip(&inst.values) {
                if !d.contains(v) {
                    validate_name(v)?;
                    d.insert(v.clone());
                }
            }
        }
        Ok(Dataset {
            features,
            domains,
            instances,
        })
    }

    /// Features `a1..aL`, one per character of each string.
    pub fn from_strings<S: AsRef<str>>(rows: &[(S, bool)]) -> Result<Self, DataError> {
        let len = rows.first().map_or(0, |(s, _)| s.as_ref().chars().count());
        let features = (1..=len).map(|i| format!("a{i}")).collect();
        let instances = rows
            .iter()
            .map(|(s, label)| Instance {
                values: s.as_ref().chars().map(|c| c.to_string()).collect(),
                label: *label,
            })
            .collect();
        Dataset::new(features, instances)
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f == name)
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn n_positive(&self) -> usize {
        self.instances.iter().filter(|i| i.label).count()
    }

    /// Observed values of the feature at `index`.
    pub fn domain(&self, index: usize) -> &BTreeSet<String> {
        &self.domains[index]
    }

    pub fn domains(&self) -> Domains {
        self.features
            .iter()
            .cloned()
            .zip(self.domains.iter().cloned())
            .collect()
    }

    pub fn query_of(&self, instance: &Instance) -> Query {
        let mut q = Query::new();
        for (f, v) in self.features.iter().zip(&instance.values) {
            q.assign(f.clone(), v.clone()).expect("names validated at construction");
        }
        q
    }

    fn with_instances(&self, instances: Vec<Instance>) -> Dataset {
        Dataset::new(self.features.clone(), instances).expect("instances drawn from a valid dataset")
    }

    pub fn write_csv<W: io::Write>(&self, writer: W, label_column: &str, positive: &str, negative: &str) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.features.iter().map(String::as_str).collect();
        header.push(label_column);
        w.write_record(&header)?;
        for inst in &self.instances {
            let mut row: Vec<&str> = inst.values.iter().map(String::as_str).collect();
            row.push(if inst.label { positive } else { negative });
            w.write_record(&row)?;
        }
        w.flush().map_err(|source| DataError::Io {
            path: "<csv>".into(),
            source,
        })?;
        Ok(())
    }
}

/// Reads a header-rowed CSV. Every column except `label_column` becomes a
/// categorical feature; a row is positive iff its label equals
/// `positive_label`.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str, positive_label: &str) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(io_err(path))?;
    read_csv(file, label_column, positive_label)
}

pub fn read_csv<R: io::Read>(reader: R, label_column: &str, positive_label: &str) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DataError::MissingLabelColumn(label_column.to_string()))?;
    let features: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let mut instances = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        // header is row 1
        let row = i + 2;
        if record.len() != header.len() {
            return Err(DataError::RaggedRow {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        let mut values = Vec::with_capacity(features.len());
        let mut label = false;
        for (j, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                return Err(DataError::EmptyCell {
                    row,
                    column: header[j].clone(),
                });
            }
            if j == label_idx {
                label = cell == positive_label;
            } else {
                values.push(cell.to_string());
            }
        }
        instances.push(Instance { values, label });
    }
    Dataset::new(features, instances)
}

/// Replicates random instances of the smaller class until both classes
/// have the same size. The original instances come first, in order.
pub fn balance(ds: &Dataset, rng_seed: u64) -> Result<Dataset, DataError> {
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..ds.len()).partition(|&i| ds.instances[i].label);
    if pos.is_empty() {
        return Err(DataError::EmptyClass("positive"));
    }
    if neg.is_empty() {
        return Err(DataError::EmptyClass("negative"));
    }
    let (smaller, deficit) = if pos.len() < neg.len() {
        (&pos, neg.len() - pos.len())
    } else {
        (&neg, pos.len() - neg.len())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut instances = ds.instances.clone();
    for _ in 0..deficit {
        let pick = smaller[rng.random_range(0..smaller.len())];
        instances.push(ds.instances[pick].clone());
    }
    Ok(ds.with_instances(instances))
}

/// Shuffles and cuts at `floor(train_fraction * n)`.
pub fn split(ds: &Dataset, train_fraction: f64, rng_seed: u64) -> Result<(Dataset, Dataset), DataError> {
    let (train, test) = split_indices(ds.len(), train_fraction, rng_seed)?;
    let pick = |idx: &[usize]| ds.with_instances(idx.iter().map(|&i| ds.instances[i].clone()).collect());
    Ok((pick(&train), pick(&test)))
}

pub fn split_indices(n: usize, train_fraction: f64, rng_seed: u64) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::BadFraction(train_fraction));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(rng_seed));
    // The epsilon keeps products like 0.7 * 10 from landing just below 7.
    let n_train = ((train_fraction * n as f64) + 1e-9).floor() as usize;
    let test = idx.split_off(n_train.min(n));
    Ok((idx, test))
}

/// Hidden seed string of a synthetic dataset. Symbols are `1..=alphabet_size`
/// written as single digits, so the alphabet is limited to 9 symbols.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedSpec {
    seed: Vec<u8>,
    alphabet_size: u8,
    match_count: usize,
}

impl SeedSpec {
    pub fn new(seed: &str, alphabet_size: u8, match_count: usize) -> Result<Self, DataError> {
        if !(2..=9).contains(&alphabet_size) {
            return Err(DataError::SeedSpec(format!("alphabet size {alphabet_size} not in 2..=9")));
        }
        if seed.is_empty() {
            return Err(DataError::SeedSpec("empty seed".into()));
        }
        let symbols = parse_symbols(seed, alphabet_size).map_err(DataError::SeedSpec)?;
        if match_count > symbols.len() {
            return Err(DataError::SeedSpec(format!(
                "match count {match_count} exceeds length {}",
                symbols.len()
            )));
        }
        Ok(SeedSpec {
            seed: symbols,
            alphabet_size,
            match_count,
        })
    }

    pub fn random(length: usize, alphabet_size: u8, match_count: usize, rng: &mut impl Rng) -> Result<Self, DataError> {
        let seed: String = (0..length)
            .map(|_| char::from(b'0' + rng.random_range(1..=alphabet_size.clamp(1, 9))))
            .collect();
        SeedSpec::new(&seed, alphabet_size, match_count)
    }

    /// [`SeedSpec::random`] driven by a ChaCha8 stream seeded with `rng_seed`.
    pub fn from_rng_seed(length: usize, alphabet_size: u8, match_count: usize, rng_seed: u64) -> Result<Self, DataError> {
        SeedSpec::random(length, alphabet_size, match_count, &mut ChaCha8Rng::seed_from_u64(rng_seed))
    }

    pub fn length(&self) -> usize {
        self.seed.len()
    }

    pub fn alphabet_size(&self) -> u8 {
        self.alphabet_size
    }

    pub fn match_count(&self) -> usize {
        self.match_count
    }

    /// Seed symbol at a 0-based position.
    pub fn symbol(&self, position: usize) -> u8 {
        self.seed[position]
    }

    pub fn seed_string(&self) -> String {
        self.seed.iter().map(|&s| char::from(b'0' + s)).collect()
    }

    pub fn matches(&self, symbols: &[u8]) -> usize {
        symbols.iter().zip(&self.seed).filter(|(a, b)| a == b).count()
    }

    /// The sidecar text stored next to generated data.
    pub fn to_sidecar(&self) -> String {
        format!(
            "seed={}\nalphabet={}\nmatch={}\n",
            self.seed_string(),
            self.alphabet_size,
            self.match_count
        )
    }

    pub fn from_sidecar(text: &str) -> Result<Self, DataError> {
        let mut seed = None;
        let mut alphabet = None;
        let mut matches = None;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| DataError::SeedSpec(format!("bad line {line:?}")))?;
            let bad = |_| DataError::SeedSpec(format!("bad value in {line:?}"));
            match k.trim() {
                "seed" => seed = Some(v.trim().to_string()),
                "alphabet" => alphabet = Some(v.trim().parse::<u8>().map_err(bad)?),
                "match" => matches = Some(v.trim().parse::<usize>().map_err(bad)?),
                other => return Err(DataError::SeedSpec(format!("unknown key {other:?}"))),
            }
        }
        match (seed, alphabet, matches) {
            (Some(s), Some(a), Some(m)) => SeedSpec::new(&s, a, m),
            _ => Err(DataError::SeedSpec("sidecar needs seed, alphabet and match".into())),
        }
    }
}

impl fmt::Display for SeedSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (alphabet {}, match {})", self.seed_string(), self.alphabet_size, self.match_count)
    }
}

fn parse_symbols(s: &str, alphabet_size: u8) -> Result<Vec<u8>, String> {
    s.chars()
        .map(|c| match c.to_digit(10) {
            Some(d) if d >= 1 && d <= alphabet_size as u32 => Ok(d as u8),
            _ => Err(format!("symbol {c:?} outside 1..={alphabet_size}")),
        })
        .collect()
}

/// Whether `s` agrees with the seed in exactly `match_count` positions.
pub fn label_synthetic(s: &str, spec: &SeedSpec) -> Result<bool, DataError> {
    let bad = |reason: String| DataError::BadString {
        string: s.to_string(),
        reason,
    };
    let symbols = parse_symbols(s, spec.alphabet_size).map_err(bad)?;
    if symbols.len() != spec.length() {
        return Err(bad(format!("length {} != {}", symbols.len(), spec.length())));
    }
    Ok(spec.matches(&symbols) == spec.match_count)
}

/// Generates `n_samples / 2` positive and `n_samples - n_samples / 2`
/// negative strings, shuffled. Positives are uniform over strings with
/// exactly `match_count` agreements (the same law as rejection sampling,
/// without its cost when positives are rare); negatives are drawn by
/// rejection.
pub fn generate_synthetic(spec: &SeedSpec, n_samples: usize, rng_seed: u64) -> Result<Dataset, DataError> {
    if n_samples == 0 {
        return Err(DataError::SeedSpec("n_samples must be positive".into()));
    }
    let len = spec.length();
    let b = spec.alphabet_size;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let n_pos = n_samples / 2;
    let mut rows: Vec<(Vec<u8>, bool)> = Vec::with_capacity(n_samples);
    for _ in 0..n_pos {
        let agree: HashSet<usize> = sample(&mut rng, len, spec.match_count).into_iter().collect();
        let s = (0..len)
            .map(|i| {
                if agree.contains(&i) {
                    spec.seed[i]
                } else {
                    // uniform over the b - 1 other symbols
                    let r = rng.random_range(1..b);
                    if r >= spec.seed[i] {
                        r + 1
                    } else {
                        r
                    }
                }
            })
            .collect();
        rows.push((s, true));
    }
    while rows.len() < n_samples {
        let s: Vec<u8> = (0..len).map(|_| rng.random_range(1..=b)).collect();
        if spec.matches(&s) != spec.match_count {
            rows.push((s, false));
        }
    }
    rows.shuffle(&mut rng);
    let features = (1..=len).map(|i| format!("a{i}")).collect();
    let instances = rows
        .into_iter()
        .map(|(s, label)| Instance {
            values: s.iter().map(|d| d.to_string()).collect(),
            label,
        })
        .collect();
    Dataset::new(features, instances)
}

/// Writes `data.csv` and the `seed.txt` sidecar into `dir`.
pub fn write_synthetic(ds: &Dataset, spec: &SeedSpec, dir: impl AsRef<Path>) -> Result<(), DataError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let data_path = dir.join(SYNTH_DATA_FILE);
    let file = fs::File::create(&data_path).map_err(io_err(&data_path))?;
    ds.write_csv(io::BufWriter::new(file), SYNTH_LABEL_COLUMN, SYNTH_POSITIVE, SYNTH_NEGATIVE)?;
    let seed_path = dir.join(SYNTH_SEED_FILE);
    fs::write(&seed_path, spec.to_sidecar()).map_err(io_err(&seed_path))?;
    Ok(())
}

pub fn read_seed_spec(path: impl AsRef<Path>) -> Result<SeedSpec, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    SeedSpec::from_sidecar(&text)
}
