//! Helpers shared by the CLI integration tests and the acceptance suite.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use har_core::synthetic::{write_dataset, SyntheticSpec};

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Run {
    pub fn ok(&self) -> bool {
        self.code == 0
    }
}

impl From<Output> for Run {
    fn from(o: Output) -> Self {
        Self {
            code: o.status.code().unwrap_or(-1),
            stdout: String::from_utf8_lossy(&o.stdout).into_owned(),
            stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
        }
    }
}

/// Runs the `har` binary built for this test target.
pub fn har<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Run {
    Command::new(env!("CARGO_BIN_EXE_har"))
        .args(args)
        .output()
        .expect("har binary runs")
        .into()
}

/// Scratch directory under the cargo target dir, emptied on first use.
pub fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

/// A generated dataset with exactly the published class counts, written
/// once per test process.
pub fn full_dataset(owner: &str) -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = scratch(&format!("{owner}-synthetic-full"));
        write_dataset(&dir, &SyntheticSpec::default()).expect("dataset written");
        dir
    })
}

/// A few windows per class; fails the published count check.
pub fn small_dataset(dir: &Path) {
    let spec = SyntheticSpec {
        seed: 5,
        train_counts: [5, 4, 4, 5, 5, 4],
        test_counts: [2, 2, 2, 3, 2, 2],
    };
    write_dataset(dir, &spec).expect("dataset written");
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}
