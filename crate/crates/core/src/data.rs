//! NSL-KDD-format data pipeline: CSV parsing, train/test splitting, schema
//! fitting (categorical vocabularies + standardization statistics) and
//! encoding into standardized feature matrices with one-hot binary labels.
//!
//! Schema statistics are always fit on the training split alone; encoding a
//! test split reuses them, so no information leaks across the partition.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::io::{load_matrix, parse_kv, read_text, save_matrix, write_atomic};
use crate::Real;

/// Fields per line: 41 features, attack label, difficulty.
pub const FIELDS_PER_RECORD: usize = 43;
/// Numeric features per record (41 minus the 3 categorical fields).
pub const NUM_NUMERIC: usize = 38;
/// Binary label width: `normal` = column 0, `anomaly` = column 1.
pub const LABEL_DIM: usize = 2;
/// The label value identifying benign traffic.
pub const NORMAL_LABEL: &str = "normal";

/// Names of the 38 numeric features, in record order.
pub const NUMERIC_NAMES: [&str; NUM_NUMERIC] = [
    "duration",
    "src_bytes",
    "dst_bytes",
    "land",
    "wrong_fragment",
    "urgent",
    "hot",
    "num_failed_logins",
    "logged_in",
    "num_compromised",
    "root_shell",
    "su_attempted",
    "num_root",
    "num_file_creations",
    "num_shells",
    "num_access_files",
    "num_outbound_cmds",
    "is_host_login",
    "is_guest_login",
    "count",
    "srv_count",
    "serror_rate",
    "srv_serror_rate",
    "rerror_rate",
    "srv_rerror_rate",
    "same_srv_rate",
    "diff_srv_rate",
    "srv_diff_host_rate",
    "dst_host_count",
    "dst_host_srv_count",
    "dst_host_same_srv_rate",
    "dst_host_diff_srv_rate",
    "dst_host_same_src_port_rate",
    "dst_host_srv_diff_host_rate",
    "dst_host_serror_rate",
    "dst_host_srv_serror_rate",
    "dst_host_rerror_rate",
    "dst_host_srv_rerror_rate",
];

/// Names of the categorical fields, in record order.
pub const CATEGORICAL_NAMES: [&str; 3] = ["protocol_type", "service", "flag"];

/// One parsed NSL-KDD record: 38 numeric features, 3 categorical features,
/// the attack label, and the trailing difficulty score. The difficulty
/// column is parsed for fidelity but never encoded.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub numeric: [Real; NUM_NUMERIC],
    pub protocol_type: String,
    pub service: String,
    pub flag: String,
    pub attack_label: String,
    pub difficulty: i64,
}

impl RawRecord {
    pub fn categorical(&self, field: usize) -> &str {
        match field {
            0 => &self.protocol_type,
            1 => &self.service,
            2 => &self.flag,
            _ => panic!("categorical field index out of range: {field}"),
        }
    }

    /// True label row: `normal` maps to (1, 0), every attack to (0, 1).
    pub fn label_row(&self) -> [Real; LABEL_DIM] {
        if self.attack_label == NORMAL_LABEL {
            [1.0, 0.0]
        } else {
            [0.0, 1.0]
        }
    }
}

/// Parse one CSV line. `line_no` is 1-based and only used in errors.
pub fn parse_line(line_no: usize, line: &str) -> Result<RawRecord> {
    let line = line.strip_suffix('\r').unwrap_or(line);
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != FIELDS_PER_RECORD {
        return Err(CoreError::Structure {
            line: line_no,
            expected: FIELDS_PER_RECORD,
            found: fields.len(),
        });
    }
    let parse_num = |idx: usize| -> Result<Real> {
        fields[idx].trim().parse::<Real>().map_err(|_| CoreError::Parse {
            line: line_no,
            detail: format!("field {} is not numeric: {:?}", idx + 1, fields[idx]),
        })
    };
    let mut numeric = [0.0 as Real; NUM_NUMERIC];
    numeric[0] = parse_num(0)?;
    for i in 0..NUM_NUMERIC - 1 {
        numeric[i + 1] = parse_num(4 + i)?;
    }
    let categorical = |idx: usize| -> Result<String> {
        let v = fields[idx].trim();
        if v.is_empty() {
            return Err(CoreError::Parse {
                line: line_no,
                detail: format!("categorical field {} is empty", idx + 1),
            });
        }
        Ok(v.to_string())
    };
    let attack_label = categorical(41)?;
    let difficulty = fields[42].trim().parse::<i64>().map_err(|_| CoreError::Parse {
        line: line_no,
        detail: format!("difficulty is not an integer: {:?}", fields[42]),
    })?;
    Ok(RawRecord {
        numeric,
        protocol_type: categorical(1)?,
        service: categorical(2)?,
        flag: categorical(3)?,
        attack_label,
        difficulty,
    })
}

/// Parse an NSL-KDD-format file (no header, 43 comma-separated fields per
/// line) into records, preserving line order.
pub fn parse_csv(path: &Path) -> Result<Vec<RawRecord>> {
    let file = File::open(path).map_err(|e| CoreError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CoreError::io(path, e))?;
        records.push(parse_line(i + 1, &line)?);
    }
    Ok(records)
}

/// Deterministic train/test partition parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    /// Fraction of records assigned to the test split, in (0, 1).
    pub test_fraction: f64,
    pub shuffle_seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.2,
            shuffle_seed: 0,
        }
    }
}

/// Split records into disjoint train/test partitions.
///
/// The test split gets `round(n * test_fraction)` records chosen by a
/// seeded uniform shuffle; both partitions keep the original record order.
pub fn split(records: Vec<RawRecord>, spec: SplitSpec) -> Result<(Vec<RawRecord>, Vec<RawRecord>)> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(CoreError::config(format!(
            "test_fraction must be in (0, 1), got {}",
            spec.test_fraction
        )));
    }
    let n = records.len();
    let test_size = (n as f64 * spec.test_fraction).round() as usize;
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.shuffle_seed);
    indices.shuffle(&mut rng);
    let mut in_test = vec![false; n];
    for &i in &indices[..test_size] {
        in_test[i] = true;
    }
    let mut train = Vec::with_capacity(n - test_size);
    let mut test = Vec::with_capacity(test_size);
    for (i, record) in records.into_iter().enumerate() {
        if in_test[i] {
            test.push(record);
        } else {
            train.push(record);
        }
    }
    Ok((train, test))
}

/// Per-column standardization statistics. A constant column records
/// `std == 0`; the transform then divides by 1 instead.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnStats {
    pub mean: Real,
    pub std: Real,
}

impl ColumnStats {
    pub fn divisor(&self) -> Real {
        if self.std == 0.0 {
            1.0
        } else {
            self.std
        }
    }
}

/// Options controlling schema fitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemaOptions {
    /// Standardize the one-hot expansions along with the numeric columns.
    /// When false, one-hot columns pass through unchanged.
    pub standardize_one_hot: bool,
}

impl Default for SchemaOptions {
    fn default() -> Self {
        SchemaOptions {
            standardize_one_hot: true,
        }
    }
}

/// Encoding schema fit on a training split: categorical vocabularies plus
/// per-encoded-column mean/std.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    /// Sorted, duplicate-free vocabularies for protocol_type, service, flag.
    pub vocabs: [Vec<String>; 3],
    /// Statistics for every encoded column, fit on the training split.
    pub col_stats: Vec<ColumnStats>,
    pub encoded_dim: usize,
    pub options: SchemaOptions,
}

impl FeatureSchema {
    /// Expand one record into its un-standardized encoded row. Returns the
    /// number of categorical values not found in the vocabularies (those
    /// one-hot groups stay all zero).
    pub fn expand(&self, record: &RawRecord, row: &mut [Real]) -> usize {
        assert_eq!(row.len(), self.encoded_dim, "row buffer has wrong width");
        row.fill(0.0);
        row[0] = record.numeric[0];
        let mut offset = 1;
        let mut unseen = 0;
        for (field, vocab) in self.vocabs.iter().enumerate() {
            match vocab.binary_search_by(|v| v.as_str().cmp(record.categorical(field))) {
                Ok(pos) => row[offset + pos] = 1.0,
                Err(_) => unseen += 1,
            }
            offset += vocab.len();
        }
        row[offset..].copy_from_slice(&record.numeric[1..]);
        unseen
    }

    /// Human-readable name of each encoded column, in order.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.encoded_dim);
        names.push(NUMERIC_NAMES[0].to_string());
        for (field, vocab) in self.vocabs.iter().enumerate() {
            for value in vocab {
                names.push(format!("{}={}", CATEGORICAL_NAMES[field], value));
            }
        }
        for name in &NUMERIC_NAMES[1..] {
            names.push(name.to_string());
        }
        names
    }

    /// Column index ranges of the three one-hot groups.
    pub fn one_hot_ranges(&self) -> [std::ops::Range<usize>; 3] {
        let mut offset = 1;
        let mut ranges = [0..0, 0..0, 0..0];
        for (field, vocab) in self.vocabs.iter().enumerate() {
            ranges[field] = offset..offset + vocab.len();
            offset += vocab.len();
        }
        ranges
    }
}

/// Fit vocabularies and standardization statistics on a training split.
///
/// Vocabularies are collected from the given records only and sorted
/// lexicographically. Means and stds (population) are computed per encoded
/// column in two passes.
pub fn fit_schema(train: &[RawRecord], options: SchemaOptions) -> Result<FeatureSchema> {
    if train.is_empty() {
        return Err(CoreError::config("cannot fit a schema on an empty training split"));
    }
    let mut vocabs: [Vec<String>; 3] = Default::default();
    for (field, vocab) in vocabs.iter_mut().enumerate() {
        let mut values: Vec<String> = train
            .iter()
            .map(|r| r.categorical(field).to_string())
            .collect();
        values.sort_unstable();
        values.dedup();
        *vocab = values;
    }
    let encoded_dim = encoded_dim_for(&vocabs);
    let mut schema = FeatureSchema {
        vocabs,
        col_stats: vec![ColumnStats { mean: 0.0, std: 0.0 }; encoded_dim],
        encoded_dim,
        options,
    };

    let n = train.len() as Real;
    let mut row = vec![0.0 as Real; encoded_dim];
    let mut sums = vec![0.0 as Real; encoded_dim];
    for record in train {
        schema.expand(record, &mut row);
        for (s, &v) in sums.iter_mut().zip(&row) {
            *s += v;
        }
    }
    let means: Vec<Real> = sums.iter().map(|&s| s / n).collect();
    let mut sq = vec![0.0 as Real; encoded_dim];
    for record in train {
        schema.expand(record, &mut row);
        for ((q, &v), &m) in sq.iter_mut().zip(&row).zip(&means) {
            let d = v - m;
            *q += d * d;
        }
    }
    for (col, stats) in schema.col_stats.iter_mut().enumerate() {
        stats.mean = means[col];
        stats.std = (sq[col] / n).sqrt();
    }
    if !options.standardize_one_hot {
        for range in schema.one_hot_ranges() {
            for stats in &mut schema.col_stats[range] {
                *stats = ColumnStats { mean: 0.0, std: 1.0 };
            }
        }
    }
    Ok(schema)
}

fn encoded_dim_for(vocabs: &[Vec<String>; 3]) -> usize {
    NUM_NUMERIC + vocabs.iter().map(Vec::len).sum::<usize>()
}

/// Which partition an encoded dataset came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceSplit {
    Train,
    Test,
}

impl SourceSplit {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceSplit::Train => "train",
            SourceSplit::Test => "test",
        }
    }
}

/// Standardized feature matrix with one-hot binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    /// N x D matrix in standardized units.
    pub features: Array2<Real>,
    /// N x 2 one-hot matrix; column 0 = normal, column 1 = anomaly.
    pub labels: Array2<Real>,
    pub source_split: SourceSplit,
    /// Categorical values that were missing from the schema vocabularies.
    pub unseen_categorical: usize,
}

impl EncodedDataset {
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// True class index per row (0 = normal, 1 = anomaly).
    pub fn class_indices(&self) -> Vec<usize> {
        self.labels
            .rows()
            .into_iter()
            .map(|r| if r[1] > r[0] { 1 } else { 0 })
            .collect()
    }

    /// New dataset holding the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> EncodedDataset {
        EncodedDataset {
            features: self.features.select(Axis(0), indices),
            labels: self.labels.select(Axis(0), indices),
            source_split: self.source_split,
            unseen_categorical: 0,
        }
    }

    /// Seeded uniform subsample without replacement, original order kept.
    /// Asking for more rows than exist returns the whole dataset.
    pub fn subsample(&self, n: usize, seed: u64) -> EncodedDataset {
        if n >= self.len() {
            return self.clone();
        }
        let mut indices: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        indices.shuffle(&mut rng);
        let mut chosen = indices[..n].to_vec();
        chosen.sort_unstable();
        self.select_rows(&chosen)
    }

    /// Check the structural invariants: finite features, one-hot labels.
    pub fn validate(&self) -> Result<()> {
        if self.labels.nrows() != self.features.nrows() {
            return Err(CoreError::shape("feature and label row counts differ"));
        }
        if self.labels.ncols() != LABEL_DIM {
            return Err(CoreError::shape("labels must have 2 columns"));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::Numerical("non-finite feature value".into()));
        }
        for (i, row) in self.labels.rows().into_iter().enumerate() {
            let ok = (row[0] == 0.0 || row[0] == 1.0)
                && (row[1] == 0.0 || row[1] == 1.0)
                && row[0] + row[1] == 1.0;
            if !ok {
                return Err(CoreError::Numerical(format!("label row {i} is not one-hot")));
            }
        }
        Ok(())
    }
}

/// Encode records with a fitted schema: one-hot expansion, z-scoring with
/// the schema's training statistics, binary one-hot labels. The difficulty
/// field is dropped. Unseen categorical values leave their one-hot group
/// all zero and are counted on the returned dataset.
pub fn encode(records: &[RawRecord], schema: &FeatureSchema, source_split: SourceSplit) -> Result<EncodedDataset> {
    let n = records.len();
    let d = schema.encoded_dim;
    let mut features = Array2::<Real>::zeros((n, d));
    let mut labels = Array2::<Real>::zeros((n, LABEL_DIM));
    let mut unseen = 0usize;
    let mut row = vec![0.0 as Real; d];
    for (i, record) in records.iter().enumerate() {
        unseen += schema.expand(record, &mut row);
        for (j, &v) in row.iter().enumerate() {
            let stats = &schema.col_stats[j];
            features[[i, j]] = (v - stats.mean) / stats.divisor();
        }
        let lab = record.label_row();
        labels[[i, 0]] = lab[0];
        labels[[i, 1]] = lab[1];
    }
    if unseen > 0 {
        log::warn!(
            "{} categorical value(s) not in the training vocabulary; encoded as all-zero groups",
            unseen
        );
    }
    let dataset = EncodedDataset {
        features,
        labels,
        source_split,
        unseen_categorical: unseen,
    };
    dataset.validate()?;
    Ok(dataset)
}

// ---------------------------------------------------------------------------
// Attack-category bookkeeping (for split reports)
// ---------------------------------------------------------------------------

/// Coarse class of an attack label, used for split distribution reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AttackCategory {
    Normal,
    Dos,
    Probe,
    R2l,
    U2r,
    Other,
}

impl AttackCategory {
    pub const ALL: [AttackCategory; 6] = [
        AttackCategory::Normal,
        AttackCategory::Dos,
        AttackCategory::Probe,
        AttackCategory::R2l,
        AttackCategory::U2r,
        AttackCategory::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackCategory::Normal => "normal",
            AttackCategory::Dos => "dos",
            AttackCategory::Probe => "probe",
            AttackCategory::R2l => "r2l",
            AttackCategory::U2r => "u2r",
            AttackCategory::Other => "other",
        }
    }
}

/// Map an NSL-KDD attack label to its category.
pub fn categorize(attack_label: &str) -> AttackCategory {
    const DOS: &[&str] = &[
        "back", "land", "neptune", "pod", "smurf", "teardrop", "apache2", "udpstorm",
        "processtable", "mailbomb",
    ];
    const PROBE: &[&str] = &["ipsweep", "nmap", "portsweep", "satan", "mscan", "saint"];
    const R2L: &[&str] = &[
        "ftp_write", "guess_passwd", "imap", "multihop", "phf", "spy", "warezclient",
        "warezmaster", "sendmail", "named", "snmpgetattack", "snmpguess", "xlock", "xsnoop",
        "worm", "httptunnel",
    ];
    const U2R: &[&str] = &["buffer_overflow", "loadmodule", "perl", "rootkit", "ps", "sqlattack", "xterm"];
    if attack_label == NORMAL_LABEL {
        AttackCategory::Normal
    } else if DOS.contains(&attack_label) {
        AttackCategory::Dos
    } else if PROBE.contains(&attack_label) {
        AttackCategory::Probe
    } else if R2L.contains(&attack_label) {
        AttackCategory::R2l
    } else if U2R.contains(&attack_label) {
        AttackCategory::U2r
    } else {
        AttackCategory::Other
    }
}

/// Per-category record counts of one split.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassTable {
    counts: BTreeMap<AttackCategory, usize>,
    total: usize,
}

impl ClassTable {
    pub fn from_records(records: &[RawRecord]) -> ClassTable {
        let mut table = ClassTable::default();
        for r in records {
            *table.counts.entry(categorize(&r.attack_label)).or_insert(0) += 1;
            table.total += 1;
        }
        table
    }

    pub fn count(&self, category: AttackCategory) -> usize {
        self.counts.get(&category).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn proportion(&self, category: AttackCategory) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count(category) as f64 / self.total as f64
        }
    }
}

/// Published class distribution of the KDDTrain+ file under its 80/20
/// split: (category, train count, test count). Used as a reference for
/// distribution checks (proportions, with tolerance — the exact published
/// partition is not reproducible from the file alone).
pub const REFERENCE_SPLIT_COUNTS: [(AttackCategory, usize, usize); 5] = [
    (AttackCategory::Normal, 53875, 13468),
    (AttackCategory::Dos, 36742, 9185),
    (AttackCategory::Probe, 9325, 2331),
    (AttackCategory::R2l, 796, 199),
    (AttackCategory::U2r, 42, 10),
];

/// Total records in the KDDTrain+ file.
pub const REFERENCE_TOTAL_RECORDS: usize = 125_973;

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

const SCHEMA_HEADER: &str = "advids-schema v1";
const REPORT_HEADER: &str = "advids-split-report v1";

/// Write a schema as a self-describing plain-text key/value file.
pub fn save_schema(path: &Path, schema: &FeatureSchema) -> Result<()> {
    let names = schema.column_names();
    write_atomic(path, |w| {
        use std::io::Write;
        let io_err = |e| CoreError::io(path, e);
        writeln!(w, "{SCHEMA_HEADER}").map_err(io_err)?;
        writeln!(w, "standardize_one_hot {}", schema.options.standardize_one_hot).map_err(io_err)?;
        writeln!(w, "encoded_dim {}", schema.encoded_dim).map_err(io_err)?;
        for (field, vocab) in schema.vocabs.iter().enumerate() {
            writeln!(w, "vocab {} {}", CATEGORICAL_NAMES[field], vocab.join(",")).map_err(io_err)?;
        }
        for (col, stats) in schema.col_stats.iter().enumerate() {
            writeln!(w, "col {} {} {} {}", col, names[col], stats.mean, stats.std).map_err(io_err)?;
        }
        Ok(())
    })
}

/// Load a schema written by [`save_schema`].
pub fn load_schema(path: &Path) -> Result<FeatureSchema> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    if lines.next().map(str::trim_end) != Some(SCHEMA_HEADER) {
        return Err(CoreError::format(path, "missing schema header"));
    }
    let kv = parse_kv(&text);
    let field_err = |detail: &str| CoreError::format(path, detail.to_string());
    let mut standardize_one_hot = true;
    let mut encoded_dim = None;
    let mut vocabs: [Vec<String>; 3] = Default::default();
    let mut stats: Vec<(usize, ColumnStats)> = Vec::new();
    for (key, value) in &kv {
        match key.as_str() {
            "standardize_one_hot" => {
                standardize_one_hot = value.parse().map_err(|_| field_err("bad standardize_one_hot"))?;
            }
            "encoded_dim" => {
                encoded_dim = Some(value.parse::<usize>().map_err(|_| field_err("bad encoded_dim"))?);
            }
            "vocab" => {
                let (name, values) = value
                    .split_once(' ')
                    .ok_or_else(|| field_err("vocab line missing values"))?;
                let field = CATEGORICAL_NAMES
                    .iter()
                    .position(|n| *n == name)
                    .ok_or_else(|| field_err("unknown vocab field"))?;
                vocabs[field] = values.split(',').map(str::to_string).collect();
            }
            "col" => {
                let parts: Vec<&str> = value.split(' ').collect();
                if parts.len() != 4 {
                    return Err(field_err("col line must be: index name mean std"));
                }
                let idx: usize = parts[0].parse().map_err(|_| field_err("bad col index"))?;
                let mean: Real = parts[2].parse().map_err(|_| field_err("bad col mean"))?;
                let std: Real = parts[3].parse().map_err(|_| field_err("bad col std"))?;
                stats.push((idx, ColumnStats { mean, std }));
            }
            _ => {}
        }
    }
    let encoded_dim = encoded_dim.ok_or_else(|| field_err("missing encoded_dim"))?;
    if encoded_dim != encoded_dim_for(&vocabs) {
        return Err(field_err("encoded_dim inconsistent with vocabularies"));
    }
    let mut col_stats = vec![ColumnStats { mean: 0.0, std: 0.0 }; encoded_dim];
    if stats.len() != encoded_dim {
        return Err(field_err("wrong number of col lines"));
    }
    for (idx, s) in stats {
        if idx >= encoded_dim {
            return Err(field_err("col index out of range"));
        }
        col_stats[idx] = s;
    }
    Ok(FeatureSchema {
        vocabs,
        col_stats,
        encoded_dim,
        options: SchemaOptions { standardize_one_hot },
    })
}

/// Persist an encoded dataset as one matrix file: features with the two
/// label columns appended on the right.
pub fn save_dataset(path: &Path, dataset: &EncodedDataset) -> Result<()> {
    let mut combined = Array2::<Real>::zeros((dataset.len(), dataset.dim() + LABEL_DIM));
    combined
        .slice_mut(ndarray::s![.., ..dataset.dim()])
        .assign(&dataset.features);
    combined
        .slice_mut(ndarray::s![.., dataset.dim()..])
        .assign(&dataset.labels);
    save_matrix(path, &combined)
}

/// Load a dataset written by [`save_dataset`]. The feature width is the
/// stored width minus the two label columns.
pub fn load_dataset(path: &Path, source_split: SourceSplit) -> Result<EncodedDataset> {
    let combined = load_matrix(path)?;
    if combined.ncols() < LABEL_DIM + 1 {
        return Err(CoreError::format(path, "matrix too narrow for features + labels"));
    }
    let d = combined.ncols() - LABEL_DIM;
    let dataset = EncodedDataset {
        features: combined.slice(ndarray::s![.., ..d]).to_owned(),
        labels: combined.slice(ndarray::s![.., d..]).to_owned(),
        source_split,
        unseen_categorical: 0,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Write the split distribution report: per-category counts and fractions
/// for both partitions.
pub fn save_split_report(path: &Path, train: &ClassTable, test: &ClassTable) -> Result<()> {
    write_atomic(path, |w| {
        use std::io::Write;
        let io_err = |e| CoreError::io(path, e);
        writeln!(w, "{REPORT_HEADER}").map_err(io_err)?;
        writeln!(w, "total_train {}", train.total()).map_err(io_err)?;
        writeln!(w, "total_test {}", test.total()).map_err(io_err)?;
        for category in AttackCategory::ALL {
            if train.count(category) == 0 && test.count(category) == 0 {
                continue;
            }
            writeln!(
                w,
                "class {} train {} {} test {} {}",
                category.as_str(),
                train.count(category),
                train.proportion(category),
                test.count(category),
                test.proportion(category),
            )
            .map_err(io_err)?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record_line(label: &str) -> String {
        // duration, protocol, service, flag, then 37 numerics, label, difficulty
        let mut fields = vec!["0".to_string(), "tcp".into(), "http".into(), "SF".into()];
        fields.extend((0..37).map(|i| format!("{i}")));
        fields.push(label.to_string());
        fields.push("17".into());
        fields.join(",")
    }

    #[test]
    fn parses_a_well_formed_line() {
        let record = parse_line(1, &record_line("neptune")).unwrap();
        assert_eq!(record.protocol_type, "tcp");
        assert_eq!(record.service, "http");
        assert_eq!(record.flag, "SF");
        assert_eq!(record.attack_label, "neptune");
        assert_eq!(record.difficulty, 17);
        assert_eq!(record.numeric[0], 0.0);
        assert_eq!(record.numeric[1], 0.0); // src_bytes = first generated numeric
        assert_eq!(record.numeric[37], 36.0);
    }

    #[test]
    fn wrong_field_count_is_structural_with_line_number() {
        let line = record_line("normal");
        let short = line.rsplit_once(',').unwrap().0;
        match parse_line(7, short) {
            Err(CoreError::Structure { line, expected, found }) => {
                assert_eq!(line, 7);
                assert_eq!(expected, 43);
                assert_eq!(found, 42);
            }
            other => panic!("expected structural error, got {other:?}"),
        }
    }

    #[test]
    fn bad_number_is_a_parse_error_with_line_number() {
        let line = record_line("normal").replacen("0,tcp", "zero,tcp", 1);
        match parse_line(3, &line) {
            Err(CoreError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_parses_to_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        std::fs::write(&path, "").unwrap();
        assert!(parse_csv(&path).unwrap().is_empty());
    }

    #[test]
    fn split_sizes_follow_rounding() {
        let records: Vec<RawRecord> = (0..10)
            .map(|_| parse_line(1, &record_line("normal")).unwrap())
            .collect();
        let (train, test) = split(records, SplitSpec { test_fraction: 0.2, shuffle_seed: 1 }).unwrap();
        assert_eq!(test.len(), 2);
        assert_eq!(train.len(), 8);
    }

    #[test]
    fn split_is_deterministic_under_seed() {
        let make = || -> Vec<RawRecord> {
            (0..10)
                .map(|i| {
                    let mut r = parse_line(1, &record_line("normal")).unwrap();
                    r.numeric[0] = i as Real;
                    r
                })
                .collect()
        };
        let spec = SplitSpec { test_fraction: 0.2, shuffle_seed: 99 };
        let a = split(make(), spec).unwrap();
        let b = split(make(), spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        for f in [0.0, 1.0, -0.5, 1.5] {
            let records = vec![parse_line(1, &record_line("normal")).unwrap()];
            match split(records, SplitSpec { test_fraction: f, shuffle_seed: 0 }) {
                Err(CoreError::Config(_)) => {}
                other => panic!("fraction {f}: expected config error, got {other:?}"),
            }
        }
    }

    #[test]
    fn vocabularies_are_sorted_and_deduplicated() {
        let mut records = Vec::new();
        for proto in ["udp", "tcp", "icmp", "tcp", "udp"] {
            let mut r = parse_line(1, &record_line("normal")).unwrap();
            r.protocol_type = proto.into();
            records.push(r);
        }
        let schema = fit_schema(&records, SchemaOptions::default()).unwrap();
        assert_eq!(schema.vocabs[0], vec!["icmp", "tcp", "udp"]);
        assert_eq!(schema.encoded_dim, NUM_NUMERIC + 3 + 1 + 1);
    }

    #[test]
    fn single_record_schema_has_zero_stds_and_unit_divisors() {
        let records = vec![parse_line(1, &record_line("normal")).unwrap()];
        let schema = fit_schema(&records, SchemaOptions::default()).unwrap();
        assert!(schema.col_stats.iter().all(|s| s.std == 0.0));
        assert!(schema.col_stats.iter().all(|s| s.divisor() == 1.0));
        let encoded = encode(&records, &schema, SourceSplit::Train).unwrap();
        // (v - mean) / 1 with mean == v: everything becomes zero.
        assert!(encoded.features.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn attack_labels_map_to_anomaly_one_hot() {
        let mut neptune = parse_line(1, &record_line("neptune")).unwrap();
        assert_eq!(neptune.label_row(), [0.0, 1.0]);
        neptune.attack_label = "normal".into();
        assert_eq!(neptune.label_row(), [1.0, 0.0]);
    }

    #[test]
    fn one_hot_groups_sum_to_one_before_standardization() {
        let records: Vec<RawRecord> = ["tcp", "udp", "icmp"]
            .iter()
            .map(|p| {
                let mut r = parse_line(1, &record_line("normal")).unwrap();
                r.protocol_type = (*p).into();
                r
            })
            .collect();
        let schema = fit_schema(&records, SchemaOptions::default()).unwrap();
        let mut row = vec![0.0 as Real; schema.encoded_dim];
        for record in &records {
            let unseen = schema.expand(record, &mut row);
            assert_eq!(unseen, 0);
            for range in schema.one_hot_ranges() {
                let sum: Real = row[range].iter().sum();
                assert_eq!(sum, 1.0);
            }
        }
    }

    #[test]
    fn unseen_categorical_encodes_as_zero_group_and_is_counted() {
        let train = vec![parse_line(1, &record_line("normal")).unwrap()];
        let schema = fit_schema(&train, SchemaOptions::default()).unwrap();
        let mut odd = parse_line(1, &record_line("normal")).unwrap();
        odd.service = "uucp".into();
        let mut row = vec![0.0 as Real; schema.encoded_dim];
        let unseen = schema.expand(&odd, &mut row);
        assert_eq!(unseen, 1);
        let ranges = schema.one_hot_ranges();
        let service_sum: Real = row[ranges[1].clone()].iter().sum();
        assert_eq!(service_sum, 0.0);
        let encoded = encode(&[odd], &schema, SourceSplit::Test).unwrap();
        assert_eq!(encoded.unseen_categorical, 1);
    }

    #[test]
    fn refitting_identical_data_gives_identical_schema() {
        let records: Vec<RawRecord> = (0..50)
            .map(|i| {
                let mut r = parse_line(1, &record_line(if i % 3 == 0 { "neptune" } else { "normal" })).unwrap();
                r.numeric[5] = (i * i) as Real;
                r.protocol_type = if i % 2 == 0 { "tcp" } else { "udp" }.into();
                r
            })
            .collect();
        let a = fit_schema(&records, SchemaOptions::default()).unwrap();
        let b = fit_schema(&records, SchemaOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn category_mapping_covers_reference_labels() {
        assert_eq!(categorize("normal"), AttackCategory::Normal);
        assert_eq!(categorize("neptune"), AttackCategory::Dos);
        assert_eq!(categorize("satan"), AttackCategory::Probe);
        assert_eq!(categorize("guess_passwd"), AttackCategory::R2l);
        assert_eq!(categorize("rootkit"), AttackCategory::U2r);
        assert_eq!(categorize("zzz-unknown"), AttackCategory::Other);
    }

    #[test]
    fn schema_file_round_trips() {
        let records: Vec<RawRecord> = ["tcp", "udp"]
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut r = parse_line(1, &record_line("normal")).unwrap();
                r.protocol_type = (*p).into();
                r.numeric[7] = i as Real + 0.25;
                r
            })
            .collect();
        let schema = fit_schema(&records, SchemaOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("schema.txt");
        save_schema(&path, &schema).unwrap();
        let back = load_schema(&path).unwrap();
        assert_eq!(schema, back);
    }

    #[test]
    fn dataset_file_round_trips() {
        let records: Vec<RawRecord> = (0..5)
            .map(|i| {
                let mut r = parse_line(1, &record_line(if i % 2 == 0 { "normal" } else { "smurf" })).unwrap();
                r.numeric[3] = i as Real;
                r
            })
            .collect();
        let schema = fit_schema(&records, SchemaOptions::default()).unwrap();
        let encoded = encode(&records, &schema, SourceSplit::Train).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.mat");
        save_dataset(&path, &encoded).unwrap();
        let back = load_dataset(&path, SourceSplit::Train).unwrap();
        assert_eq!(encoded.features, back.features);
        assert_eq!(encoded.labels, back.labels);
    }
}
