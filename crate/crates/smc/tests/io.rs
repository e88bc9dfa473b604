use std::fs;
use std::path::Path;

use smc::error::Error;
use smc::manifest::{load_dataset, save_dataset};
use smc::mtx;
use smc_core::tagmat::{DatasetBundle, FeatureMatrix, TagMatrix};
use smc_core::testkit::{gen_tagged_bundle, TaggedBundleSpec};
use smc_core::DMatrix;

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

/// Three images, four tags, written by hand.
fn toy(dir: &Path, tag_rows: usize) {
    write(
        dir,
        "tags.mtx",
        &format!("%%MatrixMarket matrix coordinate real general\n% toy\n{tag_rows} 4 3\n1 1 1\n2 3 0.5\n3 4 1\n"),
    );
    write(
        dir,
        "image_features.mtx",
        "%%MatrixMarket matrix array real general\n3 2\n1\n0\n1\n0\n1\n1\n",
    );
    write(
        dir,
        "tag_features.mtx",
        "%%MatrixMarket matrix array real general\n4 2\n1\n0\n1\n1\n0\n1\n1\n0\n",
    );
    write(dir, "image_ids.txt", "a.jpg\nb.jpg\nc.jpg\n");
    write(dir, "tag_names.txt", "sky\ncar\ntree\nroad\n");
    write(
        dir,
        "manifest.toml",
        "tags = \"tags.mtx\"\nimage_features = \"image_features.mtx\"\ntag_features = \"tag_features.mtx\"\nimage_ids = \"image_ids.txt\"\ntag_names = \"tag_names.txt\"\n",
    );
}

#[test]
fn toy_manifest_loads() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path(), 3);
    let b = load_dataset(&dir.path().join("manifest.toml")).unwrap();
    assert_eq!((b.tags.n_images(), b.tags.n_tags(), b.tags.nnz()), (3, 4, 3));
    assert_eq!(b.tags.get(1, 2), 0.5);
    assert_eq!(b.image_features.matrix()[(2, 0)], 1.0);
    assert_eq!(b.image_features.matrix()[(0, 1)], 0.0);
    assert_eq!(b.tag_names, ["sky", "car", "tree", "road"]);
    assert_eq!(b.image_ids[2], "c.jpg");
    assert!(b.ground_truth.is_none());
}

#[test]
fn row_count_mismatch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path(), 4);
    let err = load_dataset(&dir.path().join("manifest.toml")).unwrap_err();
    assert!(matches!(err, Error::Manifest { .. }), "{err}");
}

#[test]
fn missing_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path(), 3);
    fs::remove_file(dir.path().join("tag_names.txt")).unwrap();
    let err = load_dataset(&dir.path().join("manifest.toml")).unwrap_err().to_string();
    assert!(err.contains("tag_names.txt"), "{err}");
}

#[test]
fn labelme_shaped_bundle_round_trips() {
    // 2900 images, 495 tags, 4096-d image and 300-d tag features in the real
    // data; feature widths are reduced here to keep the files small.
    let (n_i, n_t) = (2900, 495);
    let mut triplets = Vec::new();
    for i in 0..n_i {
        for k in 0..5 {
            triplets.push((i, (i * 7 + k * 31) % n_t, 1.0));
        }
    }
    let tags = TagMatrix::from_triplets(n_i, n_t, triplets).unwrap();
    let bundle = DatasetBundle {
        ground_truth: Some(tags.clone()),
        tags,
        image_features: FeatureMatrix::new(DMatrix::from_fn(n_i, 16, |i, j| ((i * 16 + j) as f64).sin())).unwrap(),
        tag_features: FeatureMatrix::new(DMatrix::from_fn(n_t, 8, |i, j| ((i * 8 + j) as f64).cos())).unwrap(),
        image_ids: (0..n_i).map(|i| format!("{i}.jpg")).collect(),
        tag_names: (0..n_t).map(|j| format!("t{j}")).collect(),
    };
    let dir = tempfile::tempdir().unwrap();
    let manifest = save_dataset(&bundle, dir.path()).unwrap();
    let back = load_dataset(&manifest).unwrap();
    assert_eq!(back, bundle);
}

#[test]
fn synthetic_bundle_round_trips_bit_exactly() {
    let g = gen_tagged_bundle(&TaggedBundleSpec {
        images_per_cluster: 12,
        ..TaggedBundleSpec::default()
    })
    .unwrap();
    let bundle = DatasetBundle {
        tags: g.truth.clone(),
        image_features: g.v,
        tag_features: g.t,
        image_ids: (0..60).map(|i| i.to_string()).collect(),
        tag_names: (0..50).map(|j| j.to_string()).collect(),
        ground_truth: Some(g.truth),
    };
    let dir = tempfile::tempdir().unwrap();
    let back = load_dataset(&save_dataset(&bundle, dir.path()).unwrap()).unwrap();
    let bits = |m: &DMatrix<f64>| m.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(back.image_features.matrix()), bits(bundle.image_features.matrix()));
    assert_eq!(bits(back.tag_features.matrix()), bits(bundle.tag_features.matrix()));
    assert_eq!(back, bundle);
}

#[test]
fn dense_predictions_read_as_coordinates_too() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.mtx");
    let m = DMatrix::from_row_slice(2, 3, &[0.0, 0.25, 1.0, 0.5, 0.0, 0.0]);
    mtx::write_tags(&path, &TagMatrix::from_dense(&m).unwrap()).unwrap();
    assert_eq!(mtx::read_dense(&path).unwrap(), m);
}
