use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use har_core::dataset::{read_split, LabeledSample, Split, SplitManifest};
use har_core::features::{apply_normalizer, fit_normalizer, FeatureCache, FeatureExtractor, NormStats};
use har_core::nn::{evaluate as evaluate_model, train_with, Checkpoint, Example};
use har_core::{ActivityClass, WelchConfig};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{epochs_csv, roc_csv, write_atomic, Report};

/// File names inside the output directory.
#[derive(Debug, Clone)]
pub struct OutputLayout {
    pub dir: PathBuf,
}

impl OutputLayout {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn features(&self, split: Split) -> PathBuf {
        self.dir.join(format!("features_{}.bin", split.name()))
    }

    pub fn norm_stats(&self) -> PathBuf {
        self.dir.join("norm_stats.json")
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.dir.join("model.harmcnn")
    }

    pub fn epochs(&self) -> PathBuf {
        self.dir.join("epochs.csv")
    }

    pub fn report(&self) -> PathBuf {
        self.dir.join("report.json")
    }

    pub fn roc(&self, class: ActivityClass) -> PathBuf {
        self.dir.join(format!("roc_{}.csv", class.label()))
    }
}

/// Keeps at most `n` samples, taking classes in turn (in file order within
/// each class) so every class stays represented. Output keeps file order.
pub fn stratified_subset<T>(items: Vec<T>, n: usize, class_of: impl Fn(&T) -> ActivityClass) -> Vec<T> {
    if n >= items.len() {
        return items;
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ActivityClass::ALL.len()];
    for (i, item) in items.iter().enumerate() {
        by_class[class_of(item).index()].push(i);
    }
    let mut keep = vec![false; items.len()];
    let (mut taken, mut round) = (0, 0);
    while taken < n {
        for class in &by_class {
            if taken < n {
                if let Some(&i) = class.get(round) {
                    keep[i] = true;
                    taken += 1;
                }
            }
        }
        round += 1;
    }
    items.into_iter().zip(keep).filter_map(|(x, k)| k.then_some(x)).collect()
}

/// The `norm_stats.json` sidecar: the statistics plus the settings they
/// were fitted under, so stale caches are detected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub dataset_root: PathBuf,
    pub subset: Option<usize>,
    pub welch: WelchConfig,
    pub train_records: usize,
    pub test_records: usize,
    pub norm_stats: NormStats,
}

pub struct Context<'a> {
    pub config: &'a RunConfig,
    /// Limit each split to this many windows (stratified).
    pub subset: Option<usize>,
    /// Progress and warnings.
    pub log: &'a mut dyn Write,
}

impl Context<'_> {
    fn layout(&self) -> OutputLayout {
        OutputLayout::new(&self.config.output_dir)
    }

    fn warn(&mut self, msg: impl AsRef<str>) {
        let _ = writeln!(self.log, "warning: {}", msg.as_ref());
    }

    fn load_samples(&mut self, split: Split) -> Result<Vec<LabeledSample>, CliError> {
        let manifest: SplitManifest = read_split(&self.config.dataset_root, split)?;
        let table = manifest.count_table();
        if !table.matches() {
            self.warn(format!("{split} split differs from the published class counts:\n{table}"));
        }
        Ok(match self.subset {
            Some(n) => stratified_subset(manifest.samples, n, |s| s.class),
            None => manifest.samples,
        })
    }
}

fn extract_cache(extractor: &FeatureExtractor, samples: &[LabeledSample]) -> Result<FeatureCache, CliError> {
    let tensors = extractor.extract_all(samples)?;
    let mut cache = FeatureCache::new(extractor.freq_bins(), extractor.power_bins());
    // The cache stores f32; round here so in-memory and on-disk features agree.
    cache.records = samples.iter().zip(tensors).map(|(s, t)| (s.class, t.round_to_f32())).collect();
    Ok(cache)
}

fn read_cache(path: &Path) -> Result<FeatureCache, CliError> {
    let file = File::open(path).map_err(CliError::io(path))?;
    FeatureCache::read_from(BufReader::new(file)).map_err(|source| CliError::Cache {
        path: path.to_owned(),
        source,
    })
}

fn write_cache(path: &Path, cache: &FeatureCache) -> Result<(), CliError> {
    write_atomic(path, |w| {
        cache.write_to(w).map_err(|e| match e {
            har_core::features::FeatureError::Io(io) => io,
            other => std::io::Error::other(other.to_string()),
        })
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_atomic(path, |w| w.write_all(text.as_bytes()))
}

pub struct Features {
    pub train: FeatureCache,
    pub test: FeatureCache,
    pub sidecar: FeatureSidecar,
}

/// `validate`: loads both splits and compares their class counts with the
/// published table. Returns the count tables; mismatches are errors.
pub fn validate(root: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let mut mismatch = None;
    for split in [Split::Train, Split::Test] {
        let manifest = read_split(root, split)?;
        let table = manifest.count_table();
        let _ = writeln!(out, "{split}: {} windows\n{table}\n", manifest.len());
        if mismatch.is_none() {
            mismatch = manifest.verify_counts().err();
        }
    }
    match mismatch {
        Some(e) => Err(e.into()),
        None => {
            let _ = writeln!(out, "all class counts match the published table");
            Ok(())
        }
    }
}

/// `extract`: writes both feature caches and the normalization sidecar.
pub fn extract(ctx: &mut Context) -> Result<Features, CliError> {
    let extractor = FeatureExtractor::new(ctx.config.welch)?;
    let layout = ctx.layout();
    let train_samples = ctx.load_samples(Split::Train)?;
    let train = extract_cache(&extractor, &train_samples)?;
    drop(train_samples);
    let test_samples = ctx.load_samples(Split::Test)?;
    let test = extract_cache(&extractor, &test_samples)?;
    drop(test_samples);

    let raw: Vec<_> = train.records.iter().map(|(_, t)| t.clone()).collect();
    let norm_stats = fit_normalizer(&raw, ctx.config.norm_epsilon)?.round_to_f32();
    let sidecar = FeatureSidecar {
        dataset_root: ctx.config.dataset_root.clone(),
        subset: ctx.subset,
        welch: ctx.config.welch,
        train_records: train.records.len(),
        test_records: test.records.len(),
        norm_stats,
    };
    write_cache(&layout.features(Split::Train), &train)?;
    write_cache(&layout.features(Split::Test), &test)?;
    write_json(&layout.norm_stats(), &sidecar)?;
    let _ = writeln!(
        ctx.log,
        "extracted {} train and {} test windows into {}",
        train.records.len(),
        test.records.len(),
        layout.dir.display()
    );
    Ok(Features { train, test, sidecar })
}

/// Reuses caches from an earlier `extract` when they were made with the
/// current settings, otherwise extracts again.
fn features_for_training(ctx: &mut Context) -> Result<Features, CliError> {
    let layout = ctx.layout();
    let sidecar: Option<FeatureSidecar> = fs::read_to_string(layout.norm_stats())
        .ok()
        .and_then(|text| serde_json::from_str(&text).ok());
    if let Some(sidecar) = sidecar {
        let current = sidecar.dataset_root == ctx.config.dataset_root
            && sidecar.subset == ctx.subset
            && sidecar.welch == ctx.config.welch
            && sidecar.norm_stats.epsilon == ctx.config.norm_epsilon;
        let (train_path, test_path) = (layout.features(Split::Train), layout.features(Split::Test));
        if current && train_path.is_file() && test_path.is_file() {
            let train = read_cache(&train_path)?;
            let test = read_cache(&test_path)?;
            if train.records.len() == sidecar.train_records && test.records.len() == sidecar.test_records {
                let _ = writeln!(ctx.log, "using cached features in {}", layout.dir.display());
                return Ok(Features { train, test, sidecar });
            }
        }
    }
    extract(ctx)
}

fn examples(cache: &FeatureCache, stats: &NormStats) -> Result<Vec<Example<f32>>, CliError> {
    cache
        .records
        .iter()
        .map(|(class, t)| Ok(Example::from_features(&apply_normalizer(t, stats)?, class.index())))
        .collect()
}

/// `train`: fits the network and writes the best-epoch checkpoint and the
/// epoch log.
pub fn train(ctx: &mut Context) -> Result<Checkpoint, CliError> {
    let features = features_for_training(ctx)?;
    let stats = features.sidecar.norm_stats.clone();
    let train_set = examples(&features.train, &stats)?;
    let test_set = examples(&features.test, &stats)?;
    drop(features);

    let config = ctx.config;
    let log = &mut *ctx.log;
    let run = train_with(&config.model, &config.train, &train_set, &test_set, |r| {
        let _ = writeln!(
            log,
            "epoch {:>3}: loss {:.4}  train {:.2}%  test {:.2}%  f1 {:.4}",
            r.epoch,
            r.train_loss,
            100.0 * r.train_acc,
            100.0 * r.test_acc,
            r.test_f1
        );
    })?;

    let checkpoint = Checkpoint {
        params: run.best_params.clone(),
        norm_stats: stats,
        welch: config.welch,
        epoch: run.best_epoch,
    };
    let layout = ctx.layout();
    write_atomic(&layout.checkpoint(), |w| {
        checkpoint.write_to(w).map_err(|e| match e {
            har_core::nn::NnError::Io(io) => io,
            other => std::io::Error::other(other.to_string()),
        })
    })?;
    let csv = epochs_csv(&run.epochs);
    write_atomic(&layout.epochs(), |w| w.write_all(csv.as_bytes()))?;
    let best = run.best_record();
    let _ = writeln!(
        ctx.log,
        "best epoch {} of {}: test accuracy {:.2}%, checkpoint {}",
        best.epoch,
        run.epochs.len(),
        100.0 * best.test_acc,
        layout.checkpoint().display()
    );
    Ok(checkpoint)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    let file = File::open(path).map_err(CliError::io(path))?;
    Checkpoint::read_from(BufReader::new(file)).map_err(|source| CliError::Checkpoint {
        path: path.to_owned(),
        source,
    })
}

/// `evaluate`: scores `split` with a checkpoint and writes `report.json` and
/// one ROC point file per class.
pub fn evaluate(ctx: &mut Context, checkpoint: &Path, split: Split) -> Result<Report, CliError> {
    let ckpt = load_checkpoint(checkpoint)?;
    let samples = ctx.load_samples(split)?;
    let extractor = FeatureExtractor::new(ckpt.welch)?;
    let raw = extractor.extract_all(&samples)?;
    let examples: Vec<Example<f32>> = raw
        .iter()
        .zip(&samples)
        .map(|(t, s)| ckpt.example(t, s.class))
        .collect::<Result<_, _>>()?;
    drop(samples);
    let eval = evaluate_model(&ckpt.params, &examples)?;
    let report = Report::new(split.name(), ckpt.epoch, &eval);

    let layout = ctx.layout();
    write_json(&layout.report(), &report)?;
    for (class, curve) in ActivityClass::ALL.iter().zip(&eval.roc) {
        let path = layout.roc(*class);
        match curve {
            Some(curve) => {
                let csv = roc_csv(curve);
                write_atomic(&path, |w| w.write_all(csv.as_bytes()))?;
            }
            None => {
                // A stale curve from an earlier run would be misleading.
                let _ = fs::remove_file(&path);
                ctx.warn(format!("no ROC curve for {class}: the split lacks positives or negatives"));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_is_stratified_and_ordered() {
        let classes: Vec<ActivityClass> = [0, 0, 0, 0, 1, 5, 5, 3, 0, 1]
            .iter()
            .map(|&i| ActivityClass::ALL[i])
            .collect();
        let indexed: Vec<(usize, ActivityClass)> = classes.into_iter().enumerate().collect();
        let picked = stratified_subset(indexed.clone(), 5, |x| x.1);
        let idx: Vec<usize> = picked.iter().map(|x| x.0).collect();
        // Round 1 takes the first of classes 0, 1, 3, 5; round 2 adds the
        // second class-0 window.
        assert_eq!(idx, vec![0, 1, 4, 5, 7]);
        assert_eq!(stratified_subset(indexed.clone(), 50, |x| x.1).len(), 10);
        assert!(stratified_subset(indexed, 0, |x| x.1).is_empty());
    }
}
