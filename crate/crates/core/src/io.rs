//! Image files and synthetic phantoms.
//!
//! Raw format: 24-byte header `b"EQPNPIMG"`, `u32` height, `u32` width,
//! `u64` reserved (zero), then `height * width` row-major `f64`, all
//! little-endian. Round trips are bit-exact.
//!
//! PGM: 8-bit binary graymaps (`P5`). Reading maps a sample `v` to `v / 255`;
//! writing clamps to `[0, 1]` and rounds to the nearest of 256 levels, so a
//! PGM round trip loses everything below `1/510`.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};

use crate::error::{Error, Result};
use crate::grid::Image;

pub const RAW_MAGIC: &[u8; 8] = b"EQPNPIMG";
pub const RAW_HEADER_LEN: usize = 24;

pub fn encode_raw(x: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(RAW_HEADER_LEN + 8 * x.len());
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&(x.height() as u32).to_le_bytes());
    out.extend_from_slice(&(x.width() as u32).to_le_bytes());
    out.extend_from_slice(&0u64.to_le_bytes());
    for v in x.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_raw(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < RAW_HEADER_LEN {
        return Err(Error::Format(format!(
            "truncated header: {} of {RAW_HEADER_LEN} bytes",
            bytes.len()
        )));
    }
    if &bytes[..8] != RAW_MAGIC {
        return Err(Error::Format("bad magic, expected EQPNPIMG".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let (h, w) = (u32_at(8) as usize, u32_at(12) as usize);
    if h == 0 || w == 0 {
        return Err(Error::Format(format!("empty image {h}x{w}")));
    }
    let payload = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(8))
        .filter(|&n| n <= isize::MAX as usize - RAW_HEADER_LEN)
        .ok_or_else(|| Error::Format(format!("dimensions {h}x{w} overflow")))?;
    let body = &bytes[RAW_HEADER_LEN..];
    if body.len() < payload {
        return Err(Error::Format(format!(
            "truncated body: {} of {payload} bytes for {h}x{w}",
            body.len()
        )));
    }
    if body.len() > payload {
        return Err(Error::Format(format!(
            "{} trailing bytes after {h}x{w} image",
            body.len() - payload
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Image::new(h, w, data)
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let decoded = image::load_from_memory_with_format(bytes, ImageFormat::Pnm)
        .map_err(|e| Error::Format(format!("PGM: {e}")))?;
    let gray = match decoded {
        DynamicImage::ImageLuma8(g) => g,
        other => {
            return Err(Error::Format(format!(
                "only 8-bit graymaps are supported, got {:?}",
                other.color()
            )))
        }
    };
    let (w, h) = gray.dimensions();
    let data = gray
        .as_raw()
        .iter()
        .map(|&v| f64::from(v) / 255.0)
        .collect();
    Image::new(h as usize, w as usize, data)
}

pub fn encode_pgm(x: &Image) -> Result<Vec<u8>> {
    let samples: Vec<u8> = x
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let mut out = Cursor::new(Vec::new());
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(
            &samples,
            x.width() as u32,
            x.height() as u32,
            ExtendedColorType::L8,
        )
        .map_err(|e| Error::Format(format!("PGM: {e}")))?;
    Ok(out.into_inner())
}

/// Format is detected from the leading bytes.
pub fn load_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(b"P5") {
        decode_pgm(&bytes)
    } else if bytes.starts_with(b"EQPNP") || bytes.len() < RAW_HEADER_LEN {
        decode_raw(&bytes)
    } else {
        Err(Error::Format(format!("{}: bad magic", path.display())))
    }
}

/// PGM for a `.pgm` extension, raw otherwise.
pub fn save_image(path: &Path, x: &Image) -> Result<()> {
    let is_pgm = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    let bytes = if is_pgm {
        encode_pgm(x)?
    } else {
        encode_raw(x)
    };
    fs::write(path, bytes)?;
    Ok(())
}

/// Checkerboard of `block x block` squares, 1 in the top-left square.
pub fn checkerboard(height: usize, width: usize, block: usize) -> Result<Image> {
    if block == 0 {
        return Err(Error::InvalidArgument(
            "checkerboard block must be positive".into(),
        ));
    }
    Ok(Image::from_fn(height, width, |i, j| {
        if (i / block + j / block).is_multiple_of(2) {
            1.0
        } else {
            0.0
        }
    }))
}

/// `(value, semi-axis a, semi-axis b, centre x, centre y, angle in degrees)`
/// on `[-1, 1]^2`, x to the right and y upward. Values add where ellipses
/// overlap; the result is clamped to `[0, 1]`.
pub const SHEPP_LIKE_ELLIPSES: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

fn shepp_like(height: usize, width: usize) -> Image {
    Image::from_fn(height, width, |i, j| {
        let x = (2.0 * j as f64 + 1.0) / width as f64 - 1.0;
        let y = 1.0 - (2.0 * i as f64 + 1.0) / height as f64;
        let v: f64 = SHEPP_LIKE_ELLIPSES
            .iter()
            .filter(|&&(_, a, b, cx, cy, deg)| {
                let (s, c) = deg.to_radians().sin_cos();
                let (dx, dy) = (x - cx, y - cy);
                let u = dx * c + dy * s;
                let v = -dx * s + dy * c;
                (u / a).powi(2) + (v / b).powi(2) <= 1.0
            })
            .map(|e| e.0)
            .sum();
        v.clamp(0.0, 1.0)
    })
}

/// Synthetic test images with values in `[0, 1]`:
///
/// - `constant`: 0.5 everywhere;
/// - `impulse`: 1 at `(h/2, w/2)`, 0 elsewhere;
/// - `checkerboard` (blocks of `max(1, min(h, w)/8)`) or `checkerboard:B`;
/// - `shepp_like`: the ellipses of [`SHEPP_LIKE_ELLIPSES`].
pub fn make_phantom(name: &str, height: usize, width: usize) -> Result<Image> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument(format!(
            "empty phantom {height}x{width}"
        )));
    }
    let unknown = || Error::UnknownName {
        kind: "phantom",
        name: name.to_string(),
    };
    match name.split_once(':') {
        Some(("checkerboard", b)) => checkerboard(height, width, b.parse().map_err(|_| unknown())?),
        Some(_) => Err(unknown()),
        None => match name {
            "constant" => Ok(Image::filled(height, width, 0.5)),
            "impulse" => Ok(Image::basis(height, width, height / 2, width / 2)),
            "checkerboard" => checkerboard(height, width, (height.min(width) / 8).max(1)),
            "shepp_like" => Ok(shepp_like(height, width)),
            _ => Err(unknown()),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_header_layout() {
        let x = Image::from_slice_row(&[1.5, -2.0]);
        let b = encode_raw(&x);
        assert_eq!(b.len(), 24 + 16);
        assert_eq!(&b[8..12], &1u32.to_le_bytes());
        assert_eq!(&b[12..16], &2u32.to_le_bytes());
        assert_eq!(decode_raw(&b).unwrap(), x);
    }

    #[test]
    fn raw_errors() {
        let b = encode_raw(&Image::zeros(3, 3));
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(decode_raw(&bad), Err(Error::Format(_))));
        assert!(matches!(
            decode_raw(&b[..b.len() - 1]),
            Err(Error::Format(_))
        ));
        assert!(matches!(decode_raw(&b[..10]), Err(Error::Format(_))));
        let mut huge = b[..24].to_vec();
        huge[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        huge[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(decode_raw(&huge), Err(Error::Format(_))));
    }

    #[test]
    fn pgm_mapping() {
        let mut bytes = b"P5\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[255, 128]);
        let x = decode_pgm(&bytes).unwrap();
        assert_eq!(x.data(), &[1.0, 128.0 / 255.0]);
        let back = decode_pgm(&encode_pgm(&x).unwrap()).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn phantoms() {
        assert!(make_phantom("constant", 8, 8)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.5));
        let imp = make_phantom("impulse", 9, 8).unwrap();
        assert_eq!(imp.get(4, 4), 1.0);
        assert_eq!(imp.sum(), 1.0);
        let cb = make_phantom("checkerboard:2", 4, 4).unwrap();
        assert_eq!(
            cb.data(),
            &[1., 1., 0., 0., 1., 1., 0., 0., 0., 0., 1., 1., 0., 0., 1., 1.]
        );
        let s = make_phantom("shepp_like", 64, 64).unwrap();
        assert!(s.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(s.get(32, 32) > 0.0 && s.get(0, 0) == 0.0);
        assert!(matches!(
            make_phantom("nope", 8, 8),
            Err(Error::UnknownName { .. })
        ));
    }
}
