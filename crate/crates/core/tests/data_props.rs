use ndarray::Array2;
use proptest::prelude::*;

use stablesgd::data::{self, Dataset};

/// Minimal reader written against the IDX layout directly: a 16-byte header of
/// big-endian u32 (magic, count, rows, cols) followed by raw pixels.
fn first_image(bytes: &[u8]) -> (u32, Vec<u8>) {
    let word = |k: usize| u32::from_be_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap());
    let (magic, rows, cols) = (word(0), word(2) as usize, word(3) as usize);
    (magic, bytes[16..16 + rows * cols].to_vec())
}

proptest! {
    #[test]
    fn idx_images_round_trip(count in 1usize..5, rows in 1usize..6, cols in 1usize..6, seed in any::<u8>()) {
        let pixels: Vec<u8> = (0..count * rows * cols).map(|k| (k as u8).wrapping_mul(31).wrapping_add(seed)).collect();
        let bytes = data::encode_idx_images(rows, cols, &pixels);
        let (c, r, k, px) = data::parse_idx_images(&bytes, "mem").unwrap();
        prop_assert_eq!((c, r, k), (count, rows, cols));
        prop_assert_eq!(&px, &pixels);
        let (magic, first) = first_image(&bytes);
        prop_assert_eq!(magic, 0x0000_0803);
        prop_assert_eq!(&first[..], &pixels[..rows * cols]);
    }

    #[test]
    fn idx_labels_round_trip(labels in prop::collection::vec(0u8..10, 1..50)) {
        let bytes = data::encode_idx_labels(&labels);
        prop_assert_eq!(u32::from_be_bytes(bytes[..4].try_into().unwrap()), 0x0000_0801);
        prop_assert_eq!(data::parse_idx_labels(&bytes, "mem").unwrap(), labels);
    }

    #[test]
    fn labelled_text_round_trips(m in 1usize..20, d in 1usize..6, seed in any::<u32>()) {
        let features = Array2::from_shape_fn((m, d), |(i, j)| ((i * 7 + j * 13) as f64 + seed as f64) / 97.0 - 3.0);
        let labels: Vec<usize> = (0..m).map(|i| (i + seed as usize) % 3).collect();
        let ds = Dataset::new("t", features.clone(), labels.clone(), 3).unwrap();
        let (raw, rows) = data::parse_labelled_rows(&ds.to_labelled_text(), d, "t").unwrap();
        prop_assert_eq!(raw.iter().map(|&v| v as usize).collect::<Vec<_>>(), labels);
        for (row, orig) in rows.iter().zip(features.outer_iter()) {
            prop_assert_eq!(row.as_slice(), orig.as_slice().unwrap());
        }
    }

    #[test]
    fn batches_partition_and_reproduce(m in 1usize..200, b in 1usize..64, seed in any::<u64>()) {
        prop_assume!(b <= m);
        let first = data::batches(m, b, seed).unwrap();
        prop_assert_eq!(&first, &data::batches(m, b, seed).unwrap());
        let mut seen: Vec<usize> = first.iter().flatten().copied().collect();
        prop_assert_eq!(first.len(), m.div_ceil(b));
        prop_assert!(first[..first.len() - 1].iter().all(|c| c.len() == b));
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..m).collect::<Vec<_>>());
    }
}

#[test]
fn ecg_split_is_disjoint_and_exhaustive() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ECG5000_TRAIN.tsv");
    let mut text = String::new();
    for i in 0..600 {
        text.push_str(&format!("{}", 1 + i % 5));
        for j in 0..140 {
            // Feature 0 carries the row id so the split can be traced back.
            let v = if j == 0 { i as f64 } else { ((i * j) % 17) as f64 };
            text.push_str(&format!("\t{v}"));
        }
        text.push('\n');
    }
    std::fs::write(&path, text).unwrap();
    let (train, test) = data::load_ecg5000(std::slice::from_ref(&path), 7).unwrap();
    assert_eq!((train.len(), test.len()), (500, 100));

    // Undo the standardisation of feature 0 to recover row ids.
    let ids = |ds: &Dataset| -> Vec<f64> { ds.features.column(0).to_vec() };
    let mut all: Vec<f64> = ids(&train).into_iter().chain(ids(&test)).collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    assert_eq!(all.len(), 600);

    let again = data::load_ecg5000(&[path], 7).unwrap();
    assert_eq!(again.0, train);
}
