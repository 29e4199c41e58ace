//! CIFAR-10 binary record parsing and writing.
//!
//! A record is 3073 bytes: one label byte in [0, 9], then a 3 x 32 x 32
//! pixel block laid out channel-major (1024 red, 1024 green, 1024 blue,
//! each row-major). Pixels map to f64 by dividing by 255.

use super::LabeledBatch;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::fs;
use std::path::Path;

pub const CIFAR_CLASSES: usize = 10;
const PIXELS: usize = 3 * 32 * 32;
const RECORD: usize = 1 + PIXELS;

/// Parses one batch file of back-to-back records.
pub fn read_cifar10_file(path: &Path) -> Result<LabeledBatch> {
    let bytes = fs::read(path)
        .map_err(|e| Error::config("path", format!("cannot read {}: {e}", path.display())))?;
    parse_records(&bytes)
}

fn parse_records(bytes: &[u8]) -> Result<LabeledBatch> {
    if bytes.len() % RECORD != 0 {
        let offset = (bytes.len() / RECORD * RECORD) as u64;
        return Err(Error::Parse {
            offset,
            reason: format!(
                "truncated record: {} trailing bytes, need {RECORD}",
                bytes.len() % RECORD
            ),
        });
    }
    let n = bytes.len() / RECORD;
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * PIXELS);
    for r in 0..n {
        let start = r * RECORD;
        let label = bytes[start];
        if label > 9 {
            return Err(Error::Parse {
                offset: start as u64,
                reason: format!("label byte {label} exceeds 9"),
            });
        }
        labels.push(label as usize);
        data.extend(
            bytes[start + 1..start + RECORD]
                .iter()
                .map(|&b| b as f64 / 255.0),
        );
    }
    LabeledBatch::new(Tensor::from_vec(&[n, 3, 32, 32], data)?, labels)
}

/// Writes a batch in record format. Pixels are quantized to the nearest
/// 1/255 step, so values read by [`read_cifar10_file`] round-trip exactly.
pub fn write_cifar10_file(path: &Path, batch: &LabeledBatch) -> Result<()> {
    if batch.images.shape != [batch.len(), 3, 32, 32] {
        return Err(Error::shape(format!(
            "expected [B, 3, 32, 32] images, got {:?}",
            batch.images.shape
        )));
    }
    let mut bytes = Vec::with_capacity(batch.len() * RECORD);
    for r in 0..batch.len() {
        let label = batch.labels[r];
        if label > 9 {
            return Err(Error::config(
                "labels",
                format!("label {label} not writable as CIFAR-10"),
            ));
        }
        bytes.push(label as u8);
        bytes.extend(batch.images.row(r).iter().map(|&v| (v * 255.0).round() as u8));
    }
    fs::write(path, bytes)
        .map_err(|e| Error::config("path", format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

/// Loads the standard directory layout: `data_batch_1.bin` through
/// `data_batch_5.bin` concatenated as the train split, `test_batch.bin` as
/// the test split.
pub fn load_cifar10(dir: &Path) -> Result<(LabeledBatch, LabeledBatch)> {
    let mut parts = Vec::new();
    for i in 1..=5 {
        parts.push(read_cifar10_file(&dir.join(format!("data_batch_{i}.bin")))?);
    }
    let refs: Vec<&LabeledBatch> = parts.iter().collect();
    let train = LabeledBatch::concat(&refs)?;
    let test = read_cifar10_file(&dir.join("test_batch.bin"))?;
    Ok((train, test))
}
