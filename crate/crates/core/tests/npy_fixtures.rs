//! Files written by numpy itself parse to the values that produced them.

use std::path::PathBuf;

use conceptkit::io::{read_labels, read_matrix, read_vector, write_matrix};
use conceptkit::{Error, Matrix};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn numpy_f64_matrix() {
    let m: Matrix<f64> = read_matrix(fixture("numpy_f64_3x2.npy")).unwrap();
    assert_eq!(m.shape(), (3, 2));
    let expected: Vec<f64> = (0..6).map(|i| (i as f64 - 2.5) / 4.0).collect();
    assert_eq!(m.as_slice(), expected.as_slice());
}

#[test]
fn numpy_f32_matrix_is_widened() {
    let m: Matrix<f64> = read_matrix(fixture("numpy_f32_2x3.npy")).unwrap();
    assert_eq!(m.as_slice(), &[0.5, -1.25, 2.0, 3.0, 0.0, -0.75]);
}

#[test]
fn numpy_vector_and_labels() {
    assert_eq!(read_vector::<f64>(fixture("numpy_f64_vector.npy")).unwrap(), vec![1.5, -2.0, 0.25]);
    assert_eq!(read_labels(fixture("numpy_i64_labels.npy")).unwrap(), vec![0, 2, 1, 1]);
}

#[test]
fn numpy_fortran_order_rejected() {
    assert!(matches!(read_matrix::<f64>(fixture("numpy_f64_fortran.npy")), Err(Error::NpyOrder)));
}

#[test]
fn our_writer_matches_numpy_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.npy");
    let m: Matrix<f64> = read_matrix(fixture("numpy_f64_3x2.npy")).unwrap();
    write_matrix(&path, &m).unwrap();
    assert_eq!(std::fs::read(path).unwrap(), std::fs::read(fixture("numpy_f64_3x2.npy")).unwrap());
}
