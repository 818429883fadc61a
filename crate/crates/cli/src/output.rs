//! Atomic file output and the plain-text report formats.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use har_core::metrics::{EvalReport, RocCurve};
use har_core::nn::EpochRecord;
use har_core::ActivityClass;
use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use crate::error::CliError;

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let tmp = temp_file(dir).map_err(CliError::io(dir))?;
    let mut w = BufWriter::new(tmp);
    body(&mut w).and_then(|_| w.flush()).map_err(CliError::io(path))?;
    let tmp = w.into_inner().map_err(|e| CliError::Io {
        path: path.to_owned(),
        source: e.into_error(),
    })?;
    tmp.as_file().sync_all().map_err(CliError::io(path))?;
    tmp.persist(path).map_err(|e| CliError::Io {
        path: path.to_owned(),
        source: e.error,
    })?;
    Ok(())
}

fn temp_file(dir: &Path) -> io::Result<NamedTempFile> {
    let mut builder = tempfile::Builder::new();
    builder.prefix(".har-");
    // Temp files default to owner-only; outputs should get ordinary permissions.
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        builder.permissions(fs::Permissions::from_mode(0o644));
    }
    builder.tempfile_in(dir)
}

pub const EPOCHS_HEADER: &str = "epoch,train_loss,train_acc,test_acc,test_precision,test_recall,test_f1";

pub fn epochs_csv(records: &[EpochRecord]) -> String {
    let mut out = String::from(EPOCHS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.epoch, r.train_loss, r.train_acc, r.test_acc, r.test_precision, r.test_recall, r.test_f1
        ));
    }
    out
}

pub fn roc_csv(curve: &RocCurve) -> String {
    let mut out = String::from("fpr,tpr\n");
    for (fpr, tpr) in &curve.points {
        out.push_str(&format!("{fpr},{tpr}\n"));
    }
    out
}

/// Published results of the reference model on the test split, as fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

impl Reference {
    pub fn published() -> Self {
        Self {
            accuracy: 0.9525,
            per_class_accuracy: vec![0.9738, 0.9490, 0.9548, 0.8717, 0.9624, 0.9981],
            macro_precision: 0.9532,
            macro_recall: 0.9516,
            macro_f1: 0.9524,
        }
    }
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub split: String,
    pub checkpoint_epoch: usize,
    pub samples: usize,
    pub classes: Vec<String>,
    pub accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<u64>>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub mean_class_f1: f64,
    pub per_class_precision: Vec<f64>,
    pub per_class_recall: Vec<f64>,
    pub zero_division: bool,
    /// One-vs-rest AUC; null for classes absent from (or filling) the split.
    pub auc: Vec<Option<f64>>,
    pub reference: Reference,
}

impl Report {
    pub fn new(split: &str, checkpoint_epoch: usize, eval: &EvalReport) -> Self {
        let m = &eval.macro_scores;
        Self {
            split: split.to_owned(),
            checkpoint_epoch,
            samples: eval.samples,
            classes: ActivityClass::ALL.iter().map(|c| c.label().to_owned()).collect(),
            accuracy: eval.accuracy,
            per_class_accuracy: eval.per_class_accuracy.clone(),
            confusion: eval.confusion.rows(),
            macro_precision: m.precision,
            macro_recall: m.recall,
            macro_f1: m.f1,
            mean_class_f1: m.mean_class_f1,
            per_class_precision: m.per_class_precision.clone(),
            per_class_recall: m.per_class_recall.clone(),
            zero_division: m.zero_division,
            auc: eval.roc.iter().map(|r| r.as_ref().map(|c| c.auc)).collect(),
            reference: Reference::published(),
        }
    }

    /// Human-readable summary with the gap to the published figures.
    pub fn summary(&self) -> String {
        let pct = |v: f64| format!("{:6.2}", 100.0 * v);
        let gap = |a: f64, b: f64| format!("{:+6.2}", 100.0 * (a - b));
        let r = &self.reference;
        let mut s = format!("{} split, {} samples, checkpoint epoch {}\n", self.split, self.samples, self.checkpoint_epoch);
        s.push_str("class   acc%  published   gap   auc\n");
        for (i, label) in self.classes.iter().enumerate() {
            let auc = self.auc[i].map_or("   n/a".to_owned(), |a| format!("{a:.4}"));
            s.push_str(&format!(
                "{label:<5} {} {:>10} {} {auc}\n",
                pct(self.per_class_accuracy[i]),
                pct(r.per_class_accuracy[i]),
                gap(self.per_class_accuracy[i], r.per_class_accuracy[i]),
            ));
        }
        for (name, ours, theirs) in [
            ("Total", self.accuracy, r.accuracy),
            ("Prec", self.macro_precision, r.macro_precision),
            ("Rec", self.macro_recall, r.macro_recall),
            ("F1", self.macro_f1, r.macro_f1),
        ] {
            s.push_str(&format!("{name:<5} {} {:>10} {}\n", pct(ours), pct(theirs), gap(ours, theirs)));
        }
        s.push_str("confusion (rows true, columns predicted):\n      ");
        for label in &self.classes {
            s.push_str(&format!("{label:>6}"));
        }
        s.push('\n');
        for (label, row) in self.classes.iter().zip(&self.confusion) {
            s.push_str(&format!("{label:<6}"));
            for v in row {
                s.push_str(&format!("{v:>6}"));
            }
            s.push('\n');
        }
        s
    }
}
