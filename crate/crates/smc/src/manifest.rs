//! Dataset manifests.
//!
//! A manifest is a TOML file of `key = "path"` lines. Relative paths are
//! resolved against the manifest's directory.
//!
//! ```toml
//! tags = "tags.mtx"                      # coordinate, confidences in [0, 1]
//! image_features = "image_features.mtx"  # array, one row per image
//! tag_features = "tag_features.mtx"      # array, one row per tag
//! image_ids = "image_ids.txt"
//! tag_names = "tag_names.txt"
//! ground_truth = "ground_truth.mtx"      # optional, binary
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use smc_core::tagmat::{DatasetBundle, FeatureMatrix};

use crate::error::{io_err, Error, Result};
use crate::{ids, mtx};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tags: PathBuf,
    pub image_features: PathBuf,
    pub tag_features: PathBuf,
    pub image_ids: PathBuf,
    pub tag_names: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
}

impl Manifest {
    /// The conventional file names inside one directory.
    pub fn standard(with_ground_truth: bool) -> Self {
        Self {
            tags: "tags.mtx".into(),
            image_features: "image_features.mtx".into(),
            tag_features: "tag_features.mtx".into(),
            image_ids: "image_ids.txt".into(),
            tag_names: "tag_names.txt".into(),
            ground_truth: with_ground_truth.then(|| "ground_truth.mtx".into()),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        toml::from_str(&text).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        fs::write(path, text).map_err(io_err(path))
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn features(path: &Path) -> Result<FeatureMatrix> {
    FeatureMatrix::new(mtx::read_dense(path)?).map_err(|e| Error::Manifest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Loads and validates every file a manifest names.
pub fn load_dataset(manifest_path: &Path) -> Result<DatasetBundle> {
    let manifest = Manifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let bundle = DatasetBundle {
        tags: mtx::read_tags(&resolve(base, &manifest.tags))?,
        image_features: features(&resolve(base, &manifest.image_features))?,
        tag_features: features(&resolve(base, &manifest.tag_features))?,
        image_ids: ids::read_ids(&resolve(base, &manifest.image_ids))?,
        tag_names: ids::read_ids(&resolve(base, &manifest.tag_names))?,
        ground_truth: match &manifest.ground_truth {
            Some(p) => Some(mtx::read_tags(&resolve(base, p))?),
            None => None,
        },
    };
    bundle.validate().map_err(|e| Error::Manifest {
        path: manifest_path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(bundle)
}

/// Writes a bundle with the standard file names into `dir` and returns the
/// manifest path.
pub fn save_dataset(bundle: &DatasetBundle, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest = Manifest::standard(bundle.ground_truth.is_some());
    mtx::write_tags(&dir.join(&manifest.tags), &bundle.tags)?;
    mtx::write_dense(&dir.join(&manifest.image_features), bundle.image_features.matrix())?;
    mtx::write_dense(&dir.join(&manifest.tag_features), bundle.tag_features.matrix())?;
    ids::write_ids(&dir.join(&manifest.image_ids), &bundle.image_ids)?;
    ids::write_ids(&dir.join(&manifest.tag_names), &bundle.tag_names)?;
    if let (Some(truth), Some(p)) = (&bundle.ground_truth, &manifest.ground_truth) {
        mtx::write_tags(&dir.join(p), truth)?;
    }
    let path = dir.join("manifest.toml");
    manifest.write(&path)?;
    Ok(path)
}
