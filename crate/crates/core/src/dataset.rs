//! Reader for the UCI HAR "Inertial Signals" distribution.
//!
//! Layout under the dataset root, for `split` in `train`/`test`:
//!
//! ```text
//! <split>/Inertial Signals/<stream>_<split>.txt   9 files, 128 columns each
//! <split>/y_<split>.txt                           activity id per row (1-6)
//! <split>/subject_<split>.txt                     subject id per row (1-30)
//! ```
//!
//! Row `i` of every file describes the same window. Values are plain
//! whitespace-separated decimal text.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{NUM_CLASSES, NUM_STREAMS, WINDOW_LEN};

/// Stream file stems in the fixed order used everywhere downstream.
pub const STREAM_ORDER: [&str; NUM_STREAMS] = [
    "body_acc_x",
    "body_acc_y",
    "body_acc_z",
    "body_gyro_x",
    "body_gyro_y",
    "body_gyro_z",
    "total_acc_x",
    "total_acc_y",
    "total_acc_z",
];

pub const TRAIN_COUNTS: [usize; NUM_CLASSES] = [1226, 1073, 986, 1286, 1374, 1407];
pub const TEST_COUNTS: [usize; NUM_CLASSES] = [496, 471, 420, 491, 532, 537];
pub const MAX_SUBJECT_ID: u8 = 30;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing dataset file {0}")]
    MissingFile(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: expected {expected} columns, found {found}")]
    Columns {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}: line {line}, column {column}: cannot parse {token:?}")]
    Token {
        path: PathBuf,
        line: usize,
        column: usize,
        token: String,
    },
    #[error("{path}: line {line}, column {column}: non-finite value")]
    NonFinite {
        path: PathBuf,
        line: usize,
        column: usize,
    },
    #[error("{path} has {found} rows but {reference} has {expected}")]
    RowMismatch {
        path: PathBuf,
        found: usize,
        reference: PathBuf,
        expected: usize,
    },
    #[error("unknown activity id {0}")]
    UnknownActivity(i64),
    #[error("{path}: line {line}: subject id {id} outside 1..=30")]
    SubjectOutOfRange { path: PathBuf, line: usize, id: i64 },
    #[error("{split} split does not match the published class counts:\n{table}")]
    CountMismatch { split: Split, table: CountTable },
    #[error("window needs {NUM_STREAMS} streams of {WINDOW_LEN} finite values")]
    BadWindow,
}

/// The six activities, in their published id order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActivityClass {
    Walking,
    WalkingUpstairs,
    WalkingDownstairs,
    Sitting,
    Standing,
    Laying,
}

impl ActivityClass {
    pub const ALL: [ActivityClass; NUM_CLASSES] = [
        ActivityClass::Walking,
        ActivityClass::WalkingUpstairs,
        ActivityClass::WalkingDownstairs,
        ActivityClass::Sitting,
        ActivityClass::Standing,
        ActivityClass::Laying,
    ];

    /// Maps a dataset id (1-6) to its class.
    pub fn from_id(id: i64) -> Result<Self, DatasetError> {
        match id {
            1..=6 => Ok(Self::ALL[(id - 1) as usize]),
            _ => Err(DatasetError::UnknownActivity(id)),
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn id(self) -> u8 {
        self.index() as u8 + 1
    }

    /// Zero-based position, used for logits and confusion matrix rows.
    pub fn index(self) -> usize {
        self as usize
    }

    /// Short label: Wlk, WUp, WDn, Sit, Stn, Lay.
    pub fn label(self) -> &'static str {
        match self {
            Self::Walking => "Wlk",
            Self::WalkingUpstairs => "WUp",
            Self::WalkingDownstairs => "WDn",
            Self::Sitting => "Sit",
            Self::Standing => "Stn",
            Self::Laying => "Lay",
        }
    }
}

impl fmt::Display for ActivityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Convenience alias for [`ActivityClass::from_id`].
pub fn class_of(id: i64) -> Result<ActivityClass, DatasetError> {
    ActivityClass::from_id(id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn published_counts(self) -> [usize; NUM_CLASSES] {
        match self {
            Split::Train => TRAIN_COUNTS,
            Split::Test => TEST_COUNTS,
        }
    }

    pub fn published_total(self) -> usize {
        self.published_counts().iter().sum()
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}, expected train or test")),
        }
    }
}

/// One 2.56 s window: 9 streams of 128 readings in [`STREAM_ORDER`].
#[derive(Clone, PartialEq)]
pub struct InertialWindow {
    streams: Box<[[f64; WINDOW_LEN]; NUM_STREAMS]>,
}

impl fmt::Debug for InertialWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InertialWindow").finish_non_exhaustive()
    }
}

impl InertialWindow {
    pub fn zeros() -> Self {
        Self {
            streams: Box::new([[0.0; WINDOW_LEN]; NUM_STREAMS]),
        }
    }

    pub fn from_streams(streams: &[Vec<f64>]) -> Result<Self, DatasetError> {
        if streams.len() != NUM_STREAMS {
            return Err(DatasetError::BadWindow);
        }
        let mut w = Self::zeros();
        for (dst, src) in w.streams.iter_mut().zip(streams) {
            if src.len() != WINDOW_LEN || src.iter().any(|v| !v.is_finite()) {
                return Err(DatasetError::BadWindow);
            }
            dst.copy_from_slice(src);
        }
        Ok(w)
    }

    pub fn stream(&self, index: usize) -> &[f64; WINDOW_LEN] {
        &self.streams[index]
    }

    pub fn stream_mut(&mut self, index: usize) -> &mut [f64; WINDOW_LEN] {
        &mut self.streams[index]
    }

    pub fn streams(&self) -> impl Iterator<Item = &[f64; WINDOW_LEN]> {
        self.streams.iter()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub window: InertialWindow,
    pub class: ActivityClass,
    pub subject_id: u8,
}

/// Per-class count comparison against the published table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTable {
    pub found: [usize; NUM_CLASSES],
    pub expected: [usize; NUM_CLASSES],
}

impl CountTable {
    pub fn matches(&self) -> bool {
        self.found == self.expected
    }
}

impl fmt::Display for CountTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "class  expected  found   diff")?;
        for class in ActivityClass::ALL {
            let (e, n) = (self.expected[class.index()], self.found[class.index()]);
            writeln!(f, "{:<5} {:>9} {:>6} {:>+6}", class.label(), e, n, n as i64 - e as i64)?;
        }
        let (e, n): (usize, usize) = (self.expected.iter().sum(), self.found.iter().sum());
        write!(f, "total {:>9} {:>6} {:>+6}", e, n, n as i64 - e as i64)
    }
}

#[derive(Debug, Clone)]
pub struct SplitManifest {
    pub split: Split,
    pub samples: Vec<LabeledSample>,
    pub per_class_counts: [usize; NUM_CLASSES],
}

impl SplitManifest {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn count_table(&self) -> CountTable {
        CountTable {
            found: self.per_class_counts,
            expected: self.split.published_counts(),
        }
    }

    /// Errors unless every per-class count equals the published one.
    pub fn verify_counts(&self) -> Result<(), DatasetError> {
        let table = self.count_table();
        if table.matches() {
            Ok(())
        } else {
            Err(DatasetError::CountMismatch {
                split: self.split,
                table,
            })
        }
    }
}

/// A parsed rows x columns text matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TextMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl TextMatrix {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Parses whitespace-separated reals with a fixed column count per line.
///
/// Blank lines are skipped. Parsing is locale-independent.
pub fn parse_matrix<R: BufRead>(
    reader: R,
    cols: usize,
    path: &Path,
) -> Result<TextMatrix, DatasetError> {
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io {
            path: path.to_owned(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let start = data.len();
        for (c, token) in line.split_whitespace().enumerate() {
            let value: f64 = token.parse().map_err(|_| DatasetError::Token {
                path: path.to_owned(),
                line: line_no,
                column: c + 1,
                token: token.to_owned(),
            })?;
            if !value.is_finite() {
                return Err(DatasetError::NonFinite {
                    path: path.to_owned(),
                    line: line_no,
                    column: c + 1,
                });
            }
            data.push(value);
        }
        let found = data.len() - start;
        if found != cols {
            return Err(DatasetError::Columns {
                path: path.to_owned(),
                line: line_no,
                expected: cols,
                found,
            });
        }
        rows += 1;
    }
    Ok(TextMatrix { rows, cols, data })
}

fn open(path: &Path) -> Result<BufReader<File>, DatasetError> {
    match File::open(path) {
        Ok(f) => Ok(BufReader::new(f)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(DatasetError::MissingFile(path.to_owned()))
        }
        Err(source) => Err(DatasetError::Io {
            path: path.to_owned(),
            source,
        }),
    }
}

/// Parses one inertial signal file into a rows x 128 matrix.
pub fn parse_signal_file(path: &Path) -> Result<TextMatrix, DatasetError> {
    parse_matrix(open(path)?, WINDOW_LEN, path)
}

/// Parses a single-column file of integer ids.
pub fn parse_id_file(path: &Path) -> Result<Vec<i64>, DatasetError> {
    let m = parse_matrix(open(path)?, 1, path)?;
    m.data
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v.fract() == 0.0 && v.abs() < 1e15 {
                Ok(v as i64)
            } else {
                Err(DatasetError::Token {
                    path: path.to_owned(),
                    line: i + 1,
                    column: 1,
                    token: v.to_string(),
                })
            }
        })
        .collect()
}

/// Paths of the 11 files making up one split.
#[derive(Debug, Clone)]
pub struct SplitPaths {
    pub streams: [PathBuf; NUM_STREAMS],
    pub labels: PathBuf,
    pub subjects: PathBuf,
}

impl SplitPaths {
    pub fn new(root: &Path, split: Split) -> Self {
        let dir = root.join(split.name());
        let signals = dir.join("Inertial Signals");
        Self {
            streams: STREAM_ORDER.map(|s| signals.join(format!("{s}_{}.txt", split.name()))),
            labels: dir.join(format!("y_{}.txt", split.name())),
            subjects: dir.join(format!("subject_{}.txt", split.name())),
        }
    }

    pub fn all(&self) -> impl Iterator<Item = &PathBuf> {
        self.streams.iter().chain([&self.labels, &self.subjects])
    }
}

/// Reads a split without checking it against the published counts.
pub fn read_split(root: &Path, split: Split) -> Result<SplitManifest, DatasetError> {
    let paths = SplitPaths::new(root, split);
    // Report a missing file by name before spending time parsing the others.
    if let Some(missing) = paths.all().find(|p| !p.is_file()) {
        return Err(DatasetError::MissingFile(missing.clone()));
    }
    let labels = parse_id_file(&paths.labels)?;
    let subjects = parse_id_file(&paths.subjects)?;
    let streams: Vec<TextMatrix> = paths
        .streams
        .par_iter()
        .map(|p| parse_signal_file(p))
        .collect::<Result<_, _>>()?;

    let rows = labels.len();
    if subjects.len() != rows {
        return Err(DatasetError::RowMismatch {
            path: paths.subjects.clone(),
            found: subjects.len(),
            reference: paths.labels.clone(),
            expected: rows,
        });
    }
    for (m, p) in streams.iter().zip(&paths.streams) {
        if m.rows != rows {
            return Err(DatasetError::RowMismatch {
                path: p.clone(),
                found: m.rows,
                reference: paths.labels.clone(),
                expected: rows,
            });
        }
    }

    let mut per_class_counts = [0; NUM_CLASSES];
    let mut samples = Vec::with_capacity(rows);
    for (r, (&label, &subject)) in labels.iter().zip(&subjects).enumerate() {
        let class = ActivityClass::from_id(label)?;
        if !(1..=MAX_SUBJECT_ID as i64).contains(&subject) {
            return Err(DatasetError::SubjectOutOfRange {
                path: paths.subjects.clone(),
                line: r + 1,
                id: subject,
            });
        }
        let mut window = InertialWindow::zeros();
        for (s, m) in streams.iter().enumerate() {
            window.stream_mut(s).copy_from_slice(m.row(r));
        }
        per_class_counts[class.index()] += 1;
        samples.push(LabeledSample {
            window,
            class,
            subject_id: subject as u8,
        });
    }
    Ok(SplitManifest {
        split,
        samples,
        per_class_counts,
    })
}

/// Reads a split and requires its class counts to match the published table.
pub fn load_split(root: &Path, split: Split) -> Result<SplitManifest, DatasetError> {
    let manifest = read_split(root, split)?;
    manifest.verify_counts()?;
    Ok(manifest)
}
