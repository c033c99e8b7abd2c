//! IDX and CIFAR-10 binary containers.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::{Example, LabeledDataset};
use crate::numerics::ImageShape;

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;
const CIFAR_RECORD: usize = 3073;
const CIFAR_SIDE: usize = 32;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::Missing { path: path.to_path_buf() });
    }
    Ok(fs::read(path)?)
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    let b = bytes
        .get(at..at + 4)
        .ok_or_else(|| Error::format(at as u64, format!("truncated header: need 4 bytes, have {}", bytes.len().saturating_sub(at))))?;
    Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

/// Header dimensions and payload of an unsigned-byte IDX file.
fn parse_idx(bytes: &[u8], magic: u32) -> Result<(Vec<usize>, &[u8])> {
    let found = be_u32(bytes, 0)?;
    if found != magic {
        return Err(Error::format(0, format!("bad magic {found:#010x}, expected {magic:#010x}")));
    }
    let ndim = (magic & 0xff) as usize;
    let dims = (0..ndim)
        .map(|i| be_u32(bytes, 4 + 4 * i).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let start = 4 + 4 * ndim;
    let need: usize = dims.iter().product();
    let have = bytes.len() - start;
    if have < need {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated payload: expected {need} bytes after the header, found {have}"),
        ));
    }
    if have > need {
        return Err(Error::format((start + need) as u64, "trailing bytes after payload"));
    }
    Ok((dims, &bytes[start..]))
}

/// Reads an IDX image file (`0x00000803`, N×rows×cols) and its label file
/// (`0x00000801`, N). Images become single-channel; the class count is one
/// more than the largest label, and at least 2.
pub fn load_idx(images: &Path, labels: &Path) -> Result<LabeledDataset> {
    let img_bytes = read_file(images)?;
    let lbl_bytes = read_file(labels)?;
    let (dims, pixels) = parse_idx(&img_bytes, IDX_IMAGES)?;
    let (ldims, lbls) = parse_idx(&lbl_bytes, IDX_LABELS)?;
    if ldims[0] != dims[0] {
        return Err(Error::format(
            4,
            format!("label count {} does not match image count {}", ldims[0], dims[0]),
        ));
    }
    let shape = ImageShape::new(dims[1], dims[2], 1).map_err(|_| Error::format(8, "zero image dimension"))?;
    let d = shape.len();
    let examples = lbls
        .iter()
        .enumerate()
        .map(|(i, &l)| Example {
            pixels: pixels[i * d..(i + 1) * d].iter().map(|&p| p as f64).collect(),
            label: l as usize,
        })
        .collect();
    let classes = lbls.iter().map(|&l| l as usize + 1).max().unwrap_or(2).max(2);
    LabeledDataset::new(examples, shape, classes)
}

fn byte(p: f64) -> u8 {
    p.round().clamp(0.0, 255.0) as u8
}

/// Writes a single-channel dataset as an IDX image/label pair, rounding
/// pixels to bytes.
pub fn write_idx(dataset: &LabeledDataset, images: &Path, labels: &Path) -> Result<()> {
    let s = dataset.image_shape();
    if s.channels != 1 {
        return Err(Error::arg("IDX images are single-channel"));
    }
    let n = dataset.len() as u32;
    let mut img = Vec::with_capacity(16 + dataset.len() * s.len());
    img.extend(IDX_IMAGES.to_be_bytes());
    for v in [n, s.height as u32, s.width as u32] {
        img.extend(v.to_be_bytes());
    }
    let mut lbl = Vec::with_capacity(8 + dataset.len());
    lbl.extend(IDX_LABELS.to_be_bytes());
    lbl.extend(n.to_be_bytes());
    for ex in dataset.examples() {
        if ex.label > 255 {
            return Err(Error::arg("IDX labels are single bytes"));
        }
        img.extend(ex.pixels.iter().map(|&p| byte(p)));
        lbl.push(ex.label as u8);
    }
    fs::write(images, img)?;
    fs::write(labels, lbl)?;
    Ok(())
}

/// Reads 3073-byte records: a label byte, then 1024 red, 1024 green and
/// 1024 blue bytes in row-major order. Pixels are re-laid out as 32×32×3.
pub fn load_cifar_binary(path: &Path) -> Result<LabeledDataset> {
    let bytes = read_file(path)?;
    if bytes.len() % CIFAR_RECORD != 0 {
        return Err(Error::format(
            (bytes.len() - bytes.len() % CIFAR_RECORD) as u64,
            format!(
                "file size {} is not a multiple of the {CIFAR_RECORD}-byte record size",
                bytes.len()
            ),
        ));
    }
    let shape = ImageShape::new(CIFAR_SIDE, CIFAR_SIDE, 3)?;
    let plane = CIFAR_SIDE * CIFAR_SIDE;
    let mut examples = Vec::with_capacity(bytes.len() / CIFAR_RECORD);
    for (r, rec) in bytes.chunks(CIFAR_RECORD).enumerate() {
        if rec[0] > 9 {
            return Err(Error::format((r * CIFAR_RECORD) as u64, format!("label {} out of range", rec[0])));
        }
        let mut pixels = vec![0.0; shape.len()];
        for ch in 0..3 {
            for i in 0..plane {
                pixels[i * 3 + ch] = rec[1 + ch * plane + i] as f64;
            }
        }
        examples.push(Example {
            pixels,
            label: rec[0] as usize,
        });
    }
    LabeledDataset::new(examples, shape, 10)
}

/// Inverse of [`load_cifar_binary`] for 32×32×3 datasets.
pub fn write_cifar_binary(dataset: &LabeledDataset, path: &Path) -> Result<()> {
    let s = dataset.image_shape();
    if (s.height, s.width, s.channels) != (CIFAR_SIDE, CIFAR_SIDE, 3) {
        return Err(Error::arg("CIFAR-10 records are 32×32×3"));
    }
    let plane = CIFAR_SIDE * CIFAR_SIDE;
    let mut out = Vec::with_capacity(dataset.len() * CIFAR_RECORD);
    for ex in dataset.examples() {
        if ex.label > 9 {
            return Err(Error::arg("CIFAR-10 labels lie in 0..10"));
        }
        out.push(ex.label as u8);
        for ch in 0..3 {
            out.extend((0..plane).map(|i| byte(ex.pixels[i * 3 + ch])));
        }
    }
    fs::write(path, out)?;
    Ok(())
}
