//! Dataset manifests and PNG directory ingestion.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{center_crop_resize, random_crop, synth_image, DataError, Family, ImageBuffer};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSource {
    /// Generated on the fly; nothing touches the disk.
    Synthetic { family: Family },
    /// A directory of 8-bit PNG files. Relative roots resolve against the
    /// manifest's own directory.
    Directory { root: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CropPolicy {
    CenterResize,
    RandomCrop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub source: DatasetSource,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_side")]
    pub side: usize,
    #[serde(default = "default_crop")]
    pub crop: CropPolicy,
    #[serde(default = "default_train")]
    pub train: usize,
    #[serde(default = "default_test")]
    pub test: usize,
    /// Explicit file lists, relative to the source root. When present they
    /// fix the split exactly; otherwise the directory is scanned and shuffled.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub train_files: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub test_files: Vec<String>,
}

fn default_side() -> usize {
    128
}
fn default_crop() -> CropPolicy {
    CropPolicy::CenterResize
}
fn default_train() -> usize {
    200
}
fn default_test() -> usize {
    32
}

impl DatasetManifest {
    pub fn synthetic(family: Family, seed: u64) -> Self {
        Self {
            name: family.as_str().into(),
            source: DatasetSource::Synthetic { family },
            seed,
            side: default_side(),
            crop: default_crop(),
            train: default_train(),
            test: default_test(),
            train_files: Vec::new(),
            test_files: Vec::new(),
        }
    }

    pub fn directory(name: &str, root: impl Into<PathBuf>, seed: u64) -> Self {
        Self {
            name: name.into(),
            source: DatasetSource::Directory { root: root.into() },
            ..Self::synthetic(Family::Disks, seed)
        }
    }

    pub fn with_counts(mut self, train: usize, test: usize) -> Self {
        self.train = train;
        self.test = test;
        self
    }

    pub fn with_side(mut self, side: usize) -> Self {
        self.side = side;
        self
    }

    pub fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Test => self.test,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::Manifest(m));
        if self.side == 0 {
            return bad("side must be positive".into());
        }
        if self.train == 0 && self.test == 0 {
            return bad("both split sizes are zero".into());
        }
        let listed = !self.train_files.is_empty() || !self.test_files.is_empty();
        if listed {
            if self.train_files.len() != self.train || self.test_files.len() != self.test {
                return bad(format!(
                    "file lists hold {}/{} entries but the counts are {}/{}",
                    self.train_files.len(),
                    self.test_files.len(),
                    self.train,
                    self.test
                ));
            }
            if let Some(f) = self.train_files.iter().find(|f| self.test_files.contains(f)) {
                return bad(format!("`{f}` appears in both train and test lists"));
            }
        }
        Ok(())
    }

    /// Rewrites a relative directory root to be relative to `base`.
    pub fn resolve_against(mut self, base: &Path) -> Self {
        if let DatasetSource::Directory { root } = &mut self.source {
            if root.is_relative() {
                *root = base.join(&*root);
            }
        }
        self
    }
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest, DataError> {
    let text = std::fs::read_to_string(path)?;
    let m: DatasetManifest = serde_json::from_str(&text)
        .map_err(|e| DataError::Manifest(format!("{}: {e}", path.display())))?;
    m.validate()?;
    Ok(m.resolve_against(path.parent().unwrap_or(Path::new("."))))
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<(), DataError> {
    let text = serde_json::to_string_pretty(manifest).map_err(|e| DataError::Manifest(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Sorted `*.png` files directly inside `root`. Errors if there are none.
pub fn scan_directory(root: &Path) -> Result<Vec<PathBuf>, DataError> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(root)? {
        let path = entry?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && path.is_file() {
            files.push(path);
        } else {
            log::debug!("skipping non-PNG entry {}", path.display());
        }
    }
    if files.is_empty() {
        return Err(DataError::EmptyDirectory(root.to_path_buf()));
    }
    files.sort();
    Ok(files)
}

fn apply_crop(img: &ImageBuffer, m: &DatasetManifest, key: u64) -> Result<ImageBuffer, DataError> {
    match m.crop {
        CropPolicy::CenterResize => center_crop_resize(img, m.side),
        CropPolicy::RandomCrop => {
            let mut rng = ChaCha8Rng::seed_from_u64(m.seed);
            rng.set_stream(key);
            random_crop(img, m.side, &mut rng)
        }
    }
}

/// Loads one split. Synthetic sources use indices `0..train` for training
/// and the following `test` indices for testing. Directory sources walk a
/// seeded shuffle of the scanned files, skipping undecodable ones with a
/// warning; the first `train` decodable files form the training split and
/// the next `test` the test split, so the two never overlap.
pub fn load_split(m: &DatasetManifest, split: Split) -> Result<Vec<ImageBuffer>, DataError> {
    m.validate()?;
    match &m.source {
        DatasetSource::Synthetic { family } => {
            let range = match split {
                Split::Train => 0..m.train as u64,
                Split::Test => m.train as u64..(m.train + m.test) as u64,
            };
            range.map(|i| synth_image(*family, m.seed, i, m.side)).collect()
        }
        DatasetSource::Directory { root } => {
            if !m.train_files.is_empty() || !m.test_files.is_empty() {
                let list = match split {
                    Split::Train => &m.train_files,
                    Split::Test => &m.test_files,
                };
                return list
                    .iter()
                    .enumerate()
                    .map(|(i, f)| {
                        let key = if split == Split::Train { i } else { m.train + i } as u64;
                        apply_crop(&ImageBuffer::load_png(&root.join(f))?, m, key)
                    })
                    .collect();
            }
            let mut files = scan_directory(root)?;
            files.shuffle(&mut ChaCha8Rng::seed_from_u64(m.seed));
            let want = m.count(split);
            let skip = if split == Split::Train { 0 } else { m.train };
            let mut out = Vec::with_capacity(want);
            let mut decodable = 0usize;
            for path in &files {
                if out.len() == want {
                    break;
                }
                let img = match ImageBuffer::load_png(path) {
                    Ok(img) => img,
                    Err(e) => {
                        log::warn!("skipping {}: {e}", path.display());
                        continue;
                    }
                };
                decodable += 1;
                if decodable <= skip {
                    continue;
                }
                out.push(apply_crop(&img, m, (decodable - 1) as u64)?);
            }
            if out.len() < want {
                return Err(DataError::Manifest(format!(
                    "{} has too few decodable PNG files for {} train + {} test",
                    root.display(),
                    m.train,
                    m.test
                )));
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_splits_are_disjoint_and_sized() {
        let m = DatasetManifest::synthetic(Family::Stripes, 3).with_counts(4, 2).with_side(32);
        let tr = load_split(&m, Split::Train).unwrap();
        let te = load_split(&m, Split::Test).unwrap();
        assert_eq!((tr.len(), te.len()), (4, 2));
        assert!(tr.iter().all(|a| te.iter().all(|b| a != b)));
    }

    #[test]
    fn manifest_json_round_trip() {
        let m = DatasetManifest::directory("x", "imgs", 9).with_counts(8, 2);
        let text = serde_json::to_string(&m).unwrap();
        let back: DatasetManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        let d: DatasetManifest = serde_json::from_str(r#"{"name":"d","source":{"kind":"synthetic","family":"disks"}}"#).unwrap();
        assert_eq!((d.train, d.test, d.side), (200, 32, 128));
    }

    #[test]
    fn list_validation() {
        let mut m = DatasetManifest::directory("x", "imgs", 0).with_counts(1, 1);
        m.train_files = vec!["a.png".into()];
        m.test_files = vec!["a.png".into()];
        assert!(m.validate().is_err());
    }
}
