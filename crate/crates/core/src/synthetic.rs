//! Synthetic recordings in the UCI HAR on-disk layout.
//!
//! The generator is a crude physical model, not a substitute for real data:
//! walking classes get periodic body acceleration and rotation at distinct
//! step rates, the static classes differ mainly in how gravity projects onto
//! the device axes. Sitting and standing are deliberately close so the
//! classifier has a realistic pair to confuse. Every window is drawn from its
//! own ChaCha8 stream, so output is reproducible and independent of thread
//! count.

use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{ActivityClass, InertialWindow, LabeledSample, Split, SplitPaths, TEST_COUNTS, TRAIN_COUNTS};
use crate::{NUM_CLASSES, SAMPLE_RATE_HZ, WINDOW_LEN};

/// Subjects that the published partition puts in the test split.
pub const TEST_SUBJECTS: [u8; 9] = [2, 4, 9, 10, 12, 13, 18, 20, 24];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub train_counts: [usize; NUM_CLASSES],
    pub test_counts: [usize; NUM_CLASSES],
}

impl Default for SyntheticSpec {
    /// Same per-class counts as the published dataset.
    fn default() -> Self {
        Self {
            seed: 0,
            train_counts: TRAIN_COUNTS,
            test_counts: TEST_COUNTS,
        }
    }
}

impl SyntheticSpec {
    pub fn counts(&self, split: Split) -> [usize; NUM_CLASSES] {
        match split {
            Split::Train => self.train_counts,
            Split::Test => self.test_counts,
        }
    }
}

pub(crate) fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; 1 - u keeps the log argument in (0, 1].
    let u: f64 = 1.0 - rng.gen::<f64>();
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (2.0 * PI * v).cos()
}

struct Motion {
    step_hz: f64,
    acc_amp: f64,
    gyro_amp: f64,
    gravity: [f64; 3],
}

fn motion(class: ActivityClass) -> Motion {
    let walking = |step_hz, acc_amp, gyro_amp, pitch: f64| Motion {
        step_hz,
        acc_amp,
        gyro_amp,
        gravity: [pitch.cos(), -0.15, pitch.sin()],
    };
    let still = |gravity| Motion {
        step_hz: 0.0,
        acc_amp: 0.0,
        gyro_amp: 0.0,
        gravity,
    };
    match class {
        ActivityClass::Walking => walking(1.8, 0.25, 0.5, 0.12),
        ActivityClass::WalkingUpstairs => walking(1.5, 0.2, 0.4, 0.25),
        ActivityClass::WalkingDownstairs => walking(2.1, 0.4, 0.7, 0.02),
        ActivityClass::Sitting => still([0.93, -0.1, 0.35]),
        ActivityClass::Standing => still([0.98, -0.12, 0.2]),
        ActivityClass::Laying => still([0.05, 0.55, 0.83]),
    }
}

/// One window of `class` for `subject`, drawn from `rng`.
pub fn synth_window<R: Rng>(class: ActivityClass, subject: u8, rng: &mut R) -> InertialWindow {
    let m = motion(class);
    // Each subject wears the device at a slightly different angle.
    let mut subject_rng = ChaCha8Rng::seed_from_u64(u64::from(subject));
    let tilt: [f64; 3] = std::array::from_fn(|_| 0.05 * gaussian(&mut subject_rng));
    let gravity: [f64; 3] = std::array::from_fn(|a| m.gravity[a] + tilt[a] + 0.04 * gaussian(rng));

    let step = m.step_hz * (1.0 + 0.06 * gaussian(rng));
    let acc_amp = m.acc_amp * (1.0 + 0.15 * gaussian(rng));
    let gyro_amp = m.gyro_amp * (1.0 + 0.15 * gaussian(rng));
    let phase = rng.gen_range(0.0..2.0 * PI);
    let axis_gain = [1.0, 0.45, 0.6];
    let axis_phase = [0.0, 1.1, 2.3];
    let harmonic = 0.35 + 0.1 * gaussian(rng);

    let mut w = InertialWindow::zeros();
    for i in 0..WINDOW_LEN {
        let t = i as f64 / SAMPLE_RATE_HZ;
        for a in 0..3 {
            let theta = 2.0 * PI * step * t + phase + axis_phase[a];
            let gait = theta.sin() + harmonic * (2.0 * theta).sin();
            let body = acc_amp * axis_gain[a] * gait + 0.01 * gaussian(rng);
            let gyro = gyro_amp * axis_gain[2 - a] * (theta + 0.7).cos() + 0.02 * gaussian(rng);
            w.stream_mut(a)[i] = body;
            w.stream_mut(3 + a)[i] = gyro;
            w.stream_mut(6 + a)[i] = body + gravity[a] + 0.003 * gaussian(rng);
        }
    }
    w
}

/// Subjects belonging to `split`, ascending.
pub fn subjects(split: Split) -> Vec<u8> {
    (1..=crate::dataset::MAX_SUBJECT_ID)
        .filter(|s| TEST_SUBJECTS.contains(s) == (split == Split::Test))
        .collect()
}

/// All windows of one split, ordered by subject and then activity like the
/// published files.
pub fn synth_split(spec: &SyntheticSpec, split: Split) -> Vec<LabeledSample> {
    let subjects = subjects(split);
    let mut rows: Vec<(u8, ActivityClass)> = Vec::new();
    for class in ActivityClass::ALL {
        for k in 0..spec.counts(split)[class.index()] {
            rows.push((subjects[k % subjects.len()], class));
        }
    }
    rows.sort_by_key(|&(s, c)| (s, c));
    let stream_base = match split {
        Split::Train => 0,
        Split::Test => 1 << 32,
    };
    rows.par_iter()
        .enumerate()
        .map(|(i, &(subject_id, class))| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(stream_base + i as u64);
            LabeledSample {
                window: synth_window(class, subject_id, &mut rng),
                class,
                subject_id,
            }
        })
        .collect()
}

/// Formats a value like the published text files: 16 characters wide,
/// eight significant digits, three-digit exponent (`  2.5808515e-001`).
pub fn format_value(v: f64) -> String {
    let s = format!("{v:.7e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{:>16}", format!("{mantissa}e{sign}{:03}", exp.abs()))
}

fn write_lines(path: &Path, lines: impl Iterator<Item = String>) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for line in lines {
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Writes `samples` as one split under `root`, creating directories.
pub fn write_split(root: &Path, split: Split, samples: &[LabeledSample]) -> io::Result<()> {
    let paths = SplitPaths::new(root, split);
    fs::create_dir_all(paths.streams[0].parent().expect("signal directory"))?;
    paths.streams.par_iter().enumerate().try_for_each(|(s, path)| {
        write_lines(
            path,
            samples.iter().map(|x| x.window.stream(s).iter().map(|&v| format_value(v)).collect::<String>()),
        )
    })?;
    write_lines(&paths.labels, samples.iter().map(|x| x.class.id().to_string()))?;
    write_lines(&paths.subjects, samples.iter().map(|x| x.subject_id.to_string()))
}

/// Generates and writes both splits.
pub fn write_dataset(root: &Path, spec: &SyntheticSpec) -> io::Result<()> {
    for split in [Split::Train, Split::Test] {
        write_split(root, split, &synth_split(spec, split))?;
    }
    Ok(())
}
