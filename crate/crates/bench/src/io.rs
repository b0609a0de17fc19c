//! Dataset files on disk.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use distrobust_core::data::{parse_idx, Dataset, Split};

/// Environment variable naming the directory that holds the IDX files.
pub const DATA_ROOT_ENV: &str = "DISTROBUST_DATA";

/// Standard file names of the FashionMNIST/MNIST IDX distribution.
pub const TRAIN_FILES: (&str, &str) = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte");
pub const TEST_FILES: (&str, &str) = ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte");

pub fn load_idx(images: &Path, labels: &Path, split: Split) -> Result<Dataset> {
    let img = std::fs::read(images).with_context(|| format!("reading {}", images.display()))?;
    let lab = std::fs::read(labels).with_context(|| format!("reading {}", labels.display()))?;
    parse_idx(&img, &lab, split).with_context(|| format!("parsing {} / {}", images.display(), labels.display()))
}

/// The directory in `DISTROBUST_DATA`, falling back to `data/fashion-mnist`
/// under the current directory or any of its ancestors.
pub fn data_root() -> Option<PathBuf> {
    if let Some(p) = std::env::var_os(DATA_ROOT_ENV) {
        return Some(PathBuf::from(p));
    }
    let cwd = std::env::current_dir().ok()?;
    cwd.ancestors()
        .map(|a| a.join("data").join("fashion-mnist"))
        .find(|p| p.join(TRAIN_FILES.0).is_file())
}

/// Train and test splits from `root`.
pub fn load_pair(root: &Path) -> Result<(Dataset, Dataset)> {
    let train = load_idx(&root.join(TRAIN_FILES.0), &root.join(TRAIN_FILES.1), Split::Train)?;
    let test = load_idx(&root.join(TEST_FILES.0), &root.join(TEST_FILES.1), Split::Test)?;
    Ok((train, test))
}
