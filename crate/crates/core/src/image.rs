//! Grayscale images: PGM read/write, patch extraction and overlap-averaged
//! reconstruction, PSNR.

use std::path::Path;

use rand::Rng;

use crate::dense::DenseMatrix;
use crate::error::{FaustError, Result};
use crate::io::write_atomic;

/// Parses a binary (`P5`, 8 or 16 bit) or ASCII (`P2`) PGM. Pixel values
/// are rescaled to `[0, 255]` when the header's maxval differs from 255.
pub fn parse_pgm(bytes: &[u8]) -> Result<DenseMatrix> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos).ok_or_else(|| FaustError::parse(1, "empty PGM"))?;
    let binary = match magic.as_str() {
        "P5" => true,
        "P2" => false,
        other => return Err(FaustError::parse(1, format!("unsupported image format {other:?}"))),
    };
    let mut header = [0usize; 3];
    for (k, h) in header.iter_mut().enumerate() {
        let tok = next_token(bytes, &mut pos).ok_or_else(|| FaustError::parse(1, "truncated PGM header"))?;
        *h = tok
            .parse()
            .map_err(|_| FaustError::parse(1, format!("bad PGM header field {k}: {tok:?}")))?;
    }
    let [width, height, maxval] = header;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(FaustError::parse(1, format!("bad PGM header {width} {height} {maxval}")));
    }
    let count = width * height;
    let raw: Vec<f64> = if binary {
        // Exactly one whitespace byte separates the header from the data.
        pos += 1;
        let wide = maxval > 255;
        let need = count * if wide { 2 } else { 1 };
        let data = bytes
            .get(pos..pos + need)
            .ok_or_else(|| FaustError::parse(1, format!("PGM data truncated: need {need} bytes")))?;
        if wide {
            data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64).collect()
        } else {
            data.iter().map(|&b| b as f64).collect()
        }
    } else {
        let mut v = Vec::with_capacity(count);
        for _ in 0..count {
            let tok = next_token(bytes, &mut pos)
                .ok_or_else(|| FaustError::parse(1, format!("PGM data truncated after {} values", v.len())))?;
            v.push(tok.parse::<u32>().map_err(|_| FaustError::parse(1, format!("bad pixel {tok:?}")))? as f64);
        }
        v
    };
    let scale = 255.0 / maxval as f64;
    DenseMatrix::from_vec(height, width, raw.into_iter().map(|p| p * scale).collect())
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

pub fn read_pgm(path: &Path) -> Result<DenseMatrix> {
    parse_pgm(&std::fs::read(path)?)
}

/// 8-bit binary PGM; values are rounded and clamped to `[0, 255]`.
pub fn pgm_bytes(img: &DenseMatrix) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.cols(), img.rows()).into_bytes();
    out.extend(img.as_slice().iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
    out
}

pub fn write_pgm(path: &Path, img: &DenseMatrix) -> Result<()> {
    write_atomic(path, &pgm_bytes(img))
}

/// `10 log₁₀(255² / MSE)`; infinite for identical images.
pub fn psnr(reference: &DenseMatrix, test: &DenseMatrix) -> Result<f64> {
    if reference.shape() != test.shape() {
        return Err(FaustError::dims(
            "psnr",
            format!("{:?}", reference.shape()),
            format!("{:?}", test.shape()),
        ));
    }
    let mse = (reference - test).frobenius_norm_sq() / (reference.rows() * reference.cols()) as f64;
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

/// Adds i.i.d. Gaussian noise of standard deviation `sigma`.
pub fn add_gaussian_noise(img: &DenseMatrix, sigma: f64, rng: &mut impl Rng) -> DenseMatrix {
    let noise = crate::synthetic::gaussian_matrix(img.rows(), img.cols(), rng);
    let mut out = img.clone();
    out.axpy(sigma, &noise);
    out
}

/// Top-left corners of all `p × p` patches, row by row.
pub fn all_patch_positions(rows: usize, cols: usize, p: usize) -> Vec<(usize, usize)> {
    if p == 0 || rows < p || cols < p {
        return Vec::new();
    }
    (0..=rows - p).flat_map(|i| (0..=cols - p).map(move |j| (i, j))).collect()
}

/// `count` corners drawn uniformly with replacement.
pub fn random_patch_positions(
    rows: usize,
    cols: usize,
    p: usize,
    count: usize,
    rng: &mut impl Rng,
) -> Vec<(usize, usize)> {
    (0..count)
        .map(|_| (rng.random_range(0..=rows - p), rng.random_range(0..=cols - p)))
        .collect()
}

/// Stacks patches as columns (`p² × count`), each patch read row by row.
pub fn extract_patches(img: &DenseMatrix, p: usize, positions: &[(usize, usize)]) -> Result<DenseMatrix> {
    if p == 0 || img.rows() < p || img.cols() < p {
        return Err(FaustError::InvalidInput(format!(
            "image {}x{} is smaller than the {p}x{p} patch",
            img.rows(),
            img.cols()
        )));
    }
    let n = positions.len();
    let mut data = vec![0.0; p * p * n];
    for (c, &(i0, j0)) in positions.iter().enumerate() {
        if i0 + p > img.rows() || j0 + p > img.cols() {
            return Err(FaustError::InvalidInput(format!("patch at ({i0}, {j0}) leaves the image")));
        }
        for di in 0..p {
            for dj in 0..p {
                data[(di * p + dj) * n + c] = img.get(i0 + di, j0 + dj);
            }
        }
    }
    DenseMatrix::from_vec(p * p, n, data)
}

/// Puts patch columns back at their positions and averages overlaps.
/// Pixels no patch covers are zero.
pub fn average_patches(
    rows: usize,
    cols: usize,
    p: usize,
    positions: &[(usize, usize)],
    patches: &DenseMatrix,
) -> Result<DenseMatrix> {
    if patches.rows() != p * p || patches.cols() != positions.len() {
        return Err(FaustError::dims(
            "patch matrix",
            format!("{}x{}", p * p, positions.len()),
            format!("{}x{}", patches.rows(), patches.cols()),
        ));
    }
    let mut sum = vec![0.0; rows * cols];
    let mut weight = vec![0.0; rows * cols];
    for (c, &(i0, j0)) in positions.iter().enumerate() {
        for di in 0..p {
            for dj in 0..p {
                let k = (i0 + di) * cols + j0 + dj;
                sum[k] += patches.get(di * p + dj, c);
                weight[k] += 1.0;
            }
        }
    }
    let data = sum
        .into_iter()
        .zip(weight)
        .map(|(s, w)| if w > 0.0 { s / w } else { 0.0 })
        .collect();
    DenseMatrix::from_vec(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    #[test]
    fn pgm_roundtrip() {
        let img = DenseMatrix::from_fn(5, 7, |i, j| (i * 40 + j * 3) as f64);
        let back = parse_pgm(&pgm_bytes(&img)).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn ascii_pgm_with_comments_and_maxval() {
        let text = b"P2\n# a comment\n3 2\n15\n0 15 5\n10 15 0\n";
        let img = parse_pgm(text).unwrap();
        assert_eq!(img.shape(), (2, 3));
        assert_eq!(img.get(0, 1), 255.0);
        assert_eq!(img.get(1, 0), 170.0);
        assert!(parse_pgm(b"P6\n1 1\n255\n\0\0\0").is_err());
        assert!(parse_pgm(b"P5\n4 4\n255\n\0\0").is_err());
    }

    #[test]
    fn identity_patch_pipeline_is_exact() {
        let img = synthetic::test_image(20);
        let pos = all_patch_positions(20, 20, 8);
        assert_eq!(pos.len(), 13 * 13);
        let patches = extract_patches(&img, 8, &pos).unwrap();
        let back = average_patches(20, 20, 8, &pos, &patches).unwrap();
        assert!(back.max_abs_diff(&img) < 1e-12);
    }

    #[test]
    fn patch_bigger_than_image() {
        let img = DenseMatrix::zeros(4, 4);
        assert!(extract_patches(&img, 8, &[]).is_err());
        assert!(all_patch_positions(4, 4, 8).is_empty());
    }

    #[test]
    fn psnr_values() {
        let a = DenseMatrix::zeros(4, 4);
        let b = DenseMatrix::from_fn(4, 4, |_, _| 255.0);
        assert!(psnr(&a, &b).unwrap().abs() < 1e-12);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    }
}
