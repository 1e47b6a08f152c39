//! Dataset ingestion: class-labeled directory scanning, deterministic
//! stratified splitting, and manifest export.

mod batches;
mod synthetic;
mod transform;

pub use batches::{batches, prepare_image_for_model, Batch, BatchOptions};
pub use synthetic::write_texture_dataset;
pub use transform::{
    augment, denormalize, load_resize, normalize, resize_for_model, AugmentConfig, IMAGENET_MEAN,
    IMAGENET_STD,
};

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::rng::substream;

/// The five disease categories, in their fixed class-id order.
pub const CLASS_NAMES: [&str; 5] = ["normal", "pneumonia", "tuberculosis", "covid19", "lung_cancer"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub path: PathBuf,
    pub class_id: usize,
}

/// Ordered sample list with class names and per-sample split assignment.
/// Identical `(directory, seed, fractions)` always produce identical
/// manifests.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub samples: Vec<Sample>,
    pub class_names: Vec<String>,
    pub split_assignment: Vec<Split>,
    pub seed: u64,
}

impl DatasetManifest {
    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    /// Manifest indices belonging to one split, in manifest order.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        self.split_assignment
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn per_class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.class_names.len()];
        for s in &self.samples {
            counts[s.class_id] += 1;
        }
        counts
    }

    /// Writes `path,class,split` rows, one per sample, in manifest order.
    pub fn export_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("path,class,split\n");
        for (sample, split) in self.samples.iter().zip(&self.split_assignment) {
            out.push_str(&format!(
                "{},{},{}\n",
                sample.path.display(),
                self.class_names[sample.class_id],
                split
            ));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn is_image_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| {
            let e = e.to_ascii_lowercase();
            e == "png" || e == "jpg" || e == "jpeg"
        })
        .unwrap_or(false)
}

/// Scans a directory holding one subdirectory per class name. Samples are
/// sorted lexicographically by path; unknown subdirectories are rejected.
pub fn scan_directory(root: &Path) -> Result<DatasetManifest> {
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut found_dirs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        if entry.path().is_dir() {
            found_dirs.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    for dir in &found_dirs {
        if !CLASS_NAMES.contains(&dir.as_str()) {
            return Err(Error::Input(format!(
                "unknown subdirectory \"{dir}\" in {}; expected only {CLASS_NAMES:?}",
                root.display()
            )));
        }
    }
    for name in CLASS_NAMES {
        if !found_dirs.iter().any(|d| d == name) {
            return Err(Error::Input(format!(
                "missing class directory \"{name}\" in {}; expected {CLASS_NAMES:?}",
                root.display()
            )));
        }
    }

    let mut samples = Vec::new();
    for (class_id, name) in CLASS_NAMES.iter().enumerate() {
        let class_dir = root.join(name);
        let entries = fs::read_dir(&class_dir).map_err(|e| Error::io(&class_dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&class_dir, e))?;
            let path = entry.path();
            if path.is_file() && is_image_file(&path) {
                samples.push(Sample { path, class_id });
            }
        }
    }
    if samples.is_empty() {
        return Err(Error::Input(format!("no images found under {}", root.display())));
    }
    samples.sort_by(|a, b| a.path.cmp(&b.path));
    let n = samples.len();
    Ok(DatasetManifest {
        samples,
        class_names: CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
        split_assignment: vec![Split::Train; n],
        seed: 0,
    })
}

/// Largest-remainder apportionment of `total` into three parts.
fn apportion(total: usize, fractions: (f64, f64, f64)) -> [usize; 3] {
    let fr = [fractions.0, fractions.1, fractions.2];
    let exact: Vec<f64> = fr.iter().map(|f| f * total as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut leftover = total - sizes.iter().sum::<usize>();
    // hand remaining slots to the largest fractional parts; ties go to the
    // earlier split for determinism
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in &order {
        if leftover == 0 {
            break;
        }
        sizes[i] += 1;
        leftover -= 1;
    }
    [sizes[0], sizes[1], sizes[2]]
}

/// Shuffles each class with its own seeded stream, then assigns samples to
/// train/val/test proportionally (within ±1 per class).
pub fn stratified_split(
    manifest: &DatasetManifest,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetManifest> {
    let sum = fractions.0 + fractions.1 + fractions.2;
    if fractions.0 <= 0.0 || fractions.1 <= 0.0 || fractions.2 <= 0.0 || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions must be positive and sum to 1, got {fractions:?}"
        )));
    }
    let mut out = manifest.clone();
    out.seed = seed;
    for (class_id, class_name) in manifest.class_names.iter().enumerate() {
        let mut indices: Vec<usize> = manifest
            .samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.class_id == class_id)
            .map(|(i, _)| i)
            .collect();
        if indices.len() < 3 {
            return Err(Error::Input(format!(
                "class \"{class_name}\" has {} samples; at least 3 are needed to populate all splits",
                indices.len()
            )));
        }
        // Fisher-Yates with a per-class substream
        let mut rng = substream(seed, &[class_id as u64]);
        for i in (1..indices.len()).rev() {
            let j = rand::Rng::gen_range(&mut rng, 0..=i);
            indices.swap(i, j);
        }
        let [n_train, n_val, _] = apportion(indices.len(), fractions);
        for (pos, &idx) in indices.iter().enumerate() {
            out.split_assignment[idx] = if pos < n_train {
                Split::Train
            } else if pos < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest_with(counts: &[usize]) -> DatasetManifest {
        let mut samples = Vec::new();
        for (class_id, &n) in counts.iter().enumerate() {
            for i in 0..n {
                samples.push(Sample {
                    path: PathBuf::from(format!("{}/img{i:03}.png", CLASS_NAMES[class_id])),
                    class_id,
                });
            }
        }
        let len = samples.len();
        DatasetManifest {
            samples,
            class_names: CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
            split_assignment: vec![Split::Train; len],
            seed: 0,
        }
    }

    #[test]
    fn exact_proportions_split_cleanly() {
        let m = manifest_with(&[100; 5]);
        let s = stratified_split(&m, (0.7, 0.15, 0.15), 3).unwrap();
        for class_id in 0..5 {
            let counts: Vec<usize> = [Split::Train, Split::Val, Split::Test]
                .iter()
                .map(|&sp| {
                    s.samples
                        .iter()
                        .zip(&s.split_assignment)
                        .filter(|(smp, &a)| smp.class_id == class_id && a == sp)
                        .count()
                })
                .collect();
            assert_eq!(counts, vec![70, 15, 15]);
        }
    }

    #[test]
    fn same_seed_gives_identical_assignment() {
        let m = manifest_with(&[10, 20, 7, 9, 13]);
        let a = stratified_split(&m, (0.7, 0.15, 0.15), 11).unwrap();
        let b = stratified_split(&m, (0.7, 0.15, 0.15), 11).unwrap();
        assert_eq!(a, b);
        let c = stratified_split(&m, (0.7, 0.15, 0.15), 12).unwrap();
        assert_ne!(a.split_assignment, c.split_assignment);
    }

    #[test]
    fn seven_samples_follow_largest_remainder() {
        // 7 * (0.7, 0.15, 0.15) = (4.9, 1.05, 1.05): floors (4,1,1), the
        // leftover goes to the largest remainder, i.e. train
        assert_eq!(apportion(7, (0.7, 0.15, 0.15)), [5, 1, 1]);
        let m = manifest_with(&[7, 7, 7, 7, 7]);
        let s = stratified_split(&m, (0.7, 0.15, 0.15), 5).unwrap();
        assert_eq!(s.split_indices(Split::Train).len(), 25);
        assert_eq!(s.split_indices(Split::Val).len(), 5);
        assert_eq!(s.split_indices(Split::Test).len(), 5);
    }

    #[test]
    fn split_is_a_partition_within_one_per_class() {
        let m = manifest_with(&[23, 31, 8, 17, 40]);
        let s = stratified_split(&m, (0.6, 0.2, 0.2), 2).unwrap();
        let total: usize = [Split::Train, Split::Val, Split::Test]
            .iter()
            .map(|&sp| s.split_indices(sp).len())
            .sum();
        assert_eq!(total, s.samples.len());
        for class_id in 0..5 {
            let n = m.per_class_counts()[class_id] as f64;
            for (frac, sp) in [(0.6, Split::Train), (0.2, Split::Val), (0.2, Split::Test)] {
                let got = s
                    .samples
                    .iter()
                    .zip(&s.split_assignment)
                    .filter(|(smp, &a)| smp.class_id == class_id && a == sp)
                    .count() as f64;
                assert!((got - frac * n).abs() <= 1.0, "class {class_id} {sp}: {got} vs {}", frac * n);
            }
        }
    }

    #[test]
    fn tiny_class_is_rejected() {
        let m = manifest_with(&[10, 10, 2, 10, 10]);
        let err = stratified_split(&m, (0.7, 0.15, 0.15), 1).unwrap_err().to_string();
        assert!(err.contains("tuberculosis"), "{err}");
    }
}
