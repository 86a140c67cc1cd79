use std::fs;
use std::path::{Path, PathBuf};

use fedcorr::ingest::{mnist_dataset, parse_idx, parse_libsvm, parse_libsvm_str, read_idx_file, write_idx, write_libsvm, Task};
use fedcorr::Error;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn libsvm_fixture(name: &str, dim: Option<usize>) -> fedcorr::Result<fedcorr::ingest::LabeledDataset> {
    parse_libsvm(std::io::BufReader::new(fs::File::open(fixture(name)).unwrap()), dim)
}

fn parse_location(err: Error) -> String {
    match err {
        Error::Parse { location, .. } => location,
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn w8a_sample_is_dense_300_and_round_trips() {
    let ds = libsvm_fixture("w8a-sample.libsvm", Some(300)).unwrap();
    assert_eq!(ds.len(), 120);
    assert_eq!(ds.feature_dim, 300);
    assert_eq!(ds.task, Task::Binary);
    for i in 0..ds.len() {
        assert_eq!(ds.row(i).len(), 300);
        assert!(ds.row(i).iter().all(|&x| x == 0.0 || x == 1.0));
    }
    assert_eq!(ds.row(0)[0], 1.0);
    assert_eq!(ds.row(0)[299], 1.0);

    let mut buf = Vec::new();
    write_libsvm(&ds, &mut buf).unwrap();
    assert_eq!(parse_libsvm(buf.as_slice(), Some(300)).unwrap(), ds);
    // The fixture is already in canonical form.
    assert_eq!(String::from_utf8(buf).unwrap(), fs::read_to_string(fixture("w8a-sample.libsvm")).unwrap());
}

#[test]
fn regression_fixture_round_trips() {
    let ds = libsvm_fixture("regression.libsvm", None).unwrap();
    assert_eq!(ds.task, Task::Regression);
    assert_eq!(ds.feature_dim, 3);
    assert_eq!(ds.labels, vec![2.5, -0.75, 0.0]);
    assert_eq!(ds.row(0), &[0.5, 0.0, -1.25]);
    assert_eq!(ds.row(2), &[0.0, 0.0, 0.0]);
    let mut buf = Vec::new();
    write_libsvm(&ds, &mut buf).unwrap();
    assert_eq!(parse_libsvm(buf.as_slice(), Some(3)).unwrap(), ds);
}

#[test]
fn malformed_libsvm_fixtures_report_lines() {
    assert_eq!(parse_location(libsvm_fixture("bad-value.libsvm", None).unwrap_err()), "line 2");
    assert_eq!(parse_location(libsvm_fixture("descending.libsvm", None).unwrap_err()), "line 3");
    assert_eq!(parse_location(libsvm_fixture("zero-index.libsvm", None).unwrap_err()), "line 1");
    assert_eq!(parse_location(libsvm_fixture("w8a-sample.libsvm", Some(299)).unwrap_err()), "line 1");
}

#[test]
fn libsvm_examples() {
    let ds = parse_libsvm_str("+1 1:0.5 3:2.0\n-1\n", Some(3)).unwrap();
    assert_eq!(ds.row(0), &[0.5, 0.0, 2.0]);
    assert_eq!(ds.row(1), &[0.0, 0.0, 0.0]);
    assert_eq!(ds.labels, vec![1.0, -1.0]);
    assert!(matches!(parse_libsvm_str("1 2:x", None), Err(Error::Parse { .. })));
}

#[test]
fn idx_fixtures_round_trip() {
    for name in ["images-6x4x4.idx", "labels-6.idx"] {
        let bytes = fs::read(fixture(name)).unwrap();
        let t = parse_idx(&bytes).unwrap();
        assert_eq!(write_idx(&t).unwrap(), bytes, "{name}");
    }
    let labels = read_idx_file(&fixture("labels-6.idx")).unwrap();
    assert_eq!(labels.dims, vec![6]);
    assert_eq!(labels.data, vec![7, 2, 1, 0, 4, 9]);
    assert_eq!(read_idx_file(&fixture("labels-6.idx.gz")).unwrap(), labels);

    let images = read_idx_file(&fixture("images-6x4x4.idx")).unwrap();
    assert_eq!(images.dims, vec![6, 4, 4]);
    let ds = mnist_dataset(&images, &labels, 2).unwrap();
    assert_eq!((ds.len(), ds.feature_dim), (6, 4));
    // Each 2×2 output pixel averages a 2×2 block of the source.
    let img = &images.data[..16];
    let block = |r: usize, c: usize| {
        let s: u32 = [(r, c), (r, c + 1), (r + 1, c), (r + 1, c + 1)]
            .iter()
            .map(|&(i, j)| u32::from(img[i * 4 + j]))
            .sum();
        f64::from(s) / 4.0 / 255.0
    };
    let expect = [block(0, 0), block(0, 2), block(2, 0), block(2, 2)];
    for (a, b) in ds.row(0).iter().zip(expect) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn malformed_idx_fixtures_are_parse_errors() {
    for name in ["truncated.idx", "bad-magic.idx", "trailing.idx"] {
        let err = read_idx_file(&fixture(name)).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{name}: {err:?}");
    }
}

#[test]
fn idx_examples() {
    let labels = parse_idx(&[0, 0, 8, 1, 0, 0, 0, 2, 7, 2]).unwrap();
    assert_eq!(labels.data, vec![7, 2]);
    let image = parse_idx(&[0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 1, 2, 3, 4]).unwrap();
    assert_eq!(image.dims, vec![1, 2, 2]);
}

#[test]
fn bundled_mnist_subset_loads() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let images = read_idx_file(&root.join("mnist-subset-images.idx.gz")).unwrap();
    let labels = read_idx_file(&root.join("mnist-subset-labels.idx.gz")).unwrap();
    assert_eq!(images.dims, vec![5000, 28, 28]);
    let ds = mnist_dataset(&images, &labels, 16).unwrap();
    assert_eq!(ds.feature_dim, 256);
    assert_eq!(ds.num_classes(), Some(10));
    assert!(ds.features.iter().all(|x| (0.0..=1.0).contains(x)));
}
