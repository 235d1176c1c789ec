//! Installs dataset files into the data root from a local directory or a
//! zip archive (wheels are zip archives), verifying checksums or formats.
//!
//! There is no network download: point `--from` at wherever the files live.

use std::fs::{self, File};
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use sha2::{Digest, Sha256};

use stablesgd::data::{self, CIFAR_RECORD};
use stablesgd::Error;

/// sha256 of the tab-separated UCR archive release of ECG5000.
pub const ECG5000_TRAIN_SHA256: &str = "df86ac15d7e283e731db6be7865f5004b65bc639014cb8b9753c26e24a9092a1";
pub const ECG5000_TEST_SHA256: &str = "0192997dd1793880633bfb34ae3ad5129c09a8e0f210c469225451b92cdd8548";

#[derive(Debug, Clone, Copy, PartialEq)]
enum Check {
    Sha256(&'static str),
    IdxImages { count: usize },
    IdxLabels { count: usize },
    CifarBatch,
}

struct Wanted {
    /// Name written under the destination directory.
    target: &'static str,
    /// Accepted basenames in the source, tried in order; `.gz` variants are decompressed.
    candidates: &'static [&'static str],
    check: Check,
}

static CIFAR_BATCHES: [[&str; 1]; 6] = [
    ["data_batch_1.bin"],
    ["data_batch_2.bin"],
    ["data_batch_3.bin"],
    ["data_batch_4.bin"],
    ["data_batch_5.bin"],
    ["test_batch.bin"],
];

fn manifest(name: &str) -> Option<Vec<Wanted>> {
    let w = |target, candidates, check| Wanted { target, candidates, check };
    Some(match name {
        "ecg5000" => vec![
            w("ECG5000_TRAIN.tsv", &["ECG5000_TRAIN.tsv"][..], Check::Sha256(ECG5000_TRAIN_SHA256)),
            w("ECG5000_TEST.tsv", &["ECG5000_TEST.tsv"][..], Check::Sha256(ECG5000_TEST_SHA256)),
        ],
        "mnist" => vec![
            w(
                "train-images-idx3-ubyte",
                &["train-images-idx3-ubyte", "train-images.idx3-ubyte", "train-images-idx3-ubyte.gz"][..],
                Check::IdxImages { count: 60_000 },
            ),
            w(
                "train-labels-idx1-ubyte",
                &["train-labels-idx1-ubyte", "train-labels.idx1-ubyte", "train-labels-idx1-ubyte.gz"][..],
                Check::IdxLabels { count: 60_000 },
            ),
            w(
                "t10k-images-idx3-ubyte",
                &["t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte", "t10k-images-idx3-ubyte.gz"][..],
                Check::IdxImages { count: 10_000 },
            ),
            w(
                "t10k-labels-idx1-ubyte",
                &["t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte", "t10k-labels-idx1-ubyte.gz"][..],
                Check::IdxLabels { count: 10_000 },
            ),
        ],
        "cifar10" => CIFAR_BATCHES.iter().map(|c| w(c[0], &c[..], Check::CifarBatch)).collect(),
        _ => return None,
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn format_err(source_name: &str, message: String) -> Error {
    Error::Format {
        source_name: source_name.into(),
        offset: 0,
        message,
    }
}

fn verify(check: Check, bytes: &[u8], source_name: &str, skip_checksum: bool) -> stablesgd::Result<()> {
    match check {
        Check::Sha256(expected) => {
            let got = sha256_hex(bytes);
            if got != expected && !skip_checksum {
                return Err(format_err(source_name, format!("sha256 {got} does not match expected {expected}")));
            }
            Ok(())
        }
        Check::IdxImages { count } => {
            let (n, rows, cols, _) = data::parse_idx_images(bytes, source_name)?;
            if n != count || rows * cols != 784 {
                return Err(format_err(source_name, format!("expected {count} images of 28x28, found {n} of {rows}x{cols}")));
            }
            Ok(())
        }
        Check::IdxLabels { count } => {
            let labels = data::parse_idx_labels(bytes, source_name)?;
            if labels.len() != count {
                return Err(format_err(source_name, format!("expected {count} labels, found {}", labels.len())));
            }
            Ok(())
        }
        Check::CifarBatch => {
            if bytes.len() != 10_000 * CIFAR_RECORD {
                return Err(format_err(
                    source_name,
                    format!("expected {} bytes, found {}", 10_000 * CIFAR_RECORD, bytes.len()),
                ));
            }
            Ok(())
        }
    }
}

/// Looks a file up by basename in a directory tree or zip archive.
enum Source {
    Dir(PathBuf),
    Zip(zip::ZipArchive<File>, PathBuf),
}

impl Source {
    fn open(path: &Path) -> stablesgd::Result<Self> {
        let io = |e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        };
        if path.is_dir() {
            return Ok(Source::Dir(path.to_path_buf()));
        }
        let file = File::open(path).map_err(io)?;
        let archive = zip::ZipArchive::new(file)
            .map_err(|e| format_err(&path.display().to_string(), format!("not a directory or zip archive: {e}")))?;
        Ok(Source::Zip(archive, path.to_path_buf()))
    }

    fn find(&mut self, basename: &str) -> stablesgd::Result<Option<(String, Vec<u8>)>> {
        match self {
            Source::Dir(root) => {
                let mut stack = vec![root.clone()];
                while let Some(dir) = stack.pop() {
                    let Ok(entries) = fs::read_dir(&dir) else { continue };
                    let mut entries: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
                    entries.sort();
                    for p in entries {
                        if p.is_dir() {
                            stack.push(p);
                        } else if p.file_name().is_some_and(|n| n == basename) {
                            let bytes = fs::read(&p).map_err(|e| Error::Io {
                                path: p.clone(),
                                source: e,
                            })?;
                            return Ok(Some((p.display().to_string(), bytes)));
                        }
                    }
                }
                Ok(None)
            }
            Source::Zip(archive, path) => {
                let name = archive
                    .file_names()
                    .filter_map(|n| n.ok().map(|n| n.into_owned()))
                    .filter(|n| n.rsplit('/').next() == Some(basename))
                    .min();
                let Some(name) = name else { return Ok(None) };
                let label = format!("{}!{name}", path.display());
                let mut entry = archive
                    .by_name(&name)
                    .map_err(|e| format_err(&label, e.to_string()))?;
                let mut bytes = Vec::new();
                entry.read_to_end(&mut bytes).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                Ok(Some((label, bytes)))
            }
        }
    }
}

/// Installed files of one dataset.
#[derive(Debug, Clone)]
pub struct FetchReport {
    pub dest: PathBuf,
    pub files: Vec<(PathBuf, String)>,
}

/// Copies and verifies every file of dataset `name` from `from` into `dest_root/name`.
pub fn fetch(name: &str, from: &Path, dest_root: &Path, skip_checksum: bool) -> stablesgd::Result<FetchReport> {
    let wanted = manifest(name).ok_or_else(|| {
        Error::Domain(format!("unknown dataset {name:?} (expected ecg5000, mnist or cifar10)"))
    })?;
    let mut source = Source::open(from)?;
    let dest = dest_root.join(name);
    let mut staged = Vec::new();
    for w in &wanted {
        let mut found = None;
        for cand in w.candidates {
            if let Some((label, bytes)) = source.find(cand)? {
                let bytes = if cand.ends_with(".gz") {
                    let mut out = Vec::new();
                    GzDecoder::new(&bytes[..])
                        .read_to_end(&mut out)
                        .map_err(|e| format_err(&label, format!("gzip: {e}")))?;
                    out
                } else {
                    bytes
                };
                found = Some((label, bytes));
                break;
            }
        }
        let (label, bytes) = found.ok_or_else(|| {
            Error::Domain(format!("{} not found in {} (looked for {})", w.target, from.display(), w.candidates.join(", ")))
        })?;
        verify(w.check, &bytes, &label, skip_checksum)?;
        staged.push((w.target, bytes));
    }
    // Only touch the destination once every file has been verified.
    fs::create_dir_all(&dest).map_err(|e| Error::Io {
        path: dest.clone(),
        source: e,
    })?;
    let mut files = Vec::new();
    for (target, bytes) in staged {
        let path = dest.join(target);
        fs::write(&path, &bytes).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        files.push((path, sha256_hex(&bytes)));
    }
    Ok(FetchReport { dest, files })
}
