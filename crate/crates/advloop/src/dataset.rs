//! On-disk dataset layout: one `.adim` image and one `.txt` label file per
//! frame, plus a manifest and the seeded train/test split lists.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use advloop_core::codec::{decode_image, encode_image, encode_labels_text, parse_labels_text};
use advloop_core::render::{split_indices, Frame};

use crate::CliError;

pub const MANIFEST: &str = "manifest.txt";

pub fn frame_basename(index: usize) -> String {
    format!("frame_{index:06}")
}

/// Writes one frame's image and label files.
pub fn write_frame(dir: &Path, index: usize, frame: &Frame) -> Result<(), CliError> {
    let base = dir.join(frame_basename(index));
    fs::write(base.with_extension("adim"), encode_image(&frame.image))?;
    fs::write(
        base.with_extension("txt"),
        encode_labels_text(&frame.labels),
    )?;
    Ok(())
}

pub fn read_frame(dir: &Path, index: usize) -> Result<Frame, CliError> {
    let base = dir.join(frame_basename(index));
    let img_path = base.with_extension("adim");
    let bytes = fs::read(&img_path)
        .map_err(|e| CliError::MissingInput(format!("{}: {e}", img_path.display())))?;
    let (image, _) = decode_image(&bytes)
        .map_err(|e| CliError::MissingInput(format!("{}: {e}", img_path.display())))?;
    let txt_path = base.with_extension("txt");
    let text = fs::read_to_string(&txt_path)
        .map_err(|e| CliError::MissingInput(format!("{}: {e}", txt_path.display())))?;
    let labels = parse_labels_text(&text)
        .map_err(|e| CliError::MissingInput(format!("{}: {e}", txt_path.display())))?;
    Ok(Frame { image, labels })
}

/// Writes the manifest and the split lists for a generated dataset.
pub fn write_manifest(dir: &Path, n: usize, train_fraction: f64, seed: u64) -> Result<(), CliError> {
    let (train, test) = split_indices(n, train_fraction, seed);
    let mut manifest = fs::File::create(dir.join(MANIFEST))?;
    writeln!(manifest, "n = {n}")?;
    writeln!(manifest, "train_fraction = {train_fraction}")?;
    writeln!(manifest, "seed = {seed}")?;
    writeln!(manifest, "train = {}", train.len())?;
    writeln!(manifest, "test = {}", test.len())?;
    let list = |ids: &[usize]| {
        ids.iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join("\n")
    };
    fs::write(dir.join("train.txt"), list(&train) + "\n")?;
    fs::write(dir.join("test.txt"), list(&test) + "\n")?;
    Ok(())
}

fn read_split_list(path: &Path) -> Result<Vec<usize>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::MissingInput(format!("{}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<usize>()
                .map_err(|_| CliError::MissingInput(format!("{}: bad index {l:?}", path.display())))
        })
        .collect()
}

pub enum Split {
    Train,
    Test,
}

/// Loads one side of the dataset split.
pub fn load_split(dir: &Path, split: Split) -> Result<Vec<Frame>, CliError> {
    let list = match split {
        Split::Train => dir.join("train.txt"),
        Split::Test => dir.join("test.txt"),
    };
    let ids = read_split_list(&list)?;
    ids.iter().map(|&i| read_frame(dir, i)).collect()
}

pub fn dataset_dir(out: &Path) -> PathBuf {
    out.join("dataset")
}
