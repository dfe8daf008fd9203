//! PNG and binary PPM/PGM reading and writing.
//!
//! Integer channel `v` maps to `v / 255`; writing rounds `255 * x` to the
//! nearest integer, so `save` then `load` is the identity at 8-bit precision.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat, ImageReader};

use super::{ImageError, ImageGray, ImageRgb};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FileKind {
    Png,
    Pnm,
}

fn kind_from_extension(path: &Path) -> Result<FileKind, ImageError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("png") => Ok(FileKind::Png),
        Some("ppm") | Some("pgm") | Some("pnm") => Ok(FileKind::Pnm),
        _ => Err(ImageError::UnsupportedFormat(path.display().to_string())),
    }
}

fn decode(path: &Path) -> Result<DynamicImage, ImageError> {
    let display = path.display().to_string();
    let reader = ImageReader::open(path)
        .map_err(|source| ImageError::Io {
            path: display.clone(),
            source,
        })?
        .with_guessed_format()
        .map_err(|source| ImageError::Io {
            path: display.clone(),
            source,
        })?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Pnm) => {}
        _ => return Err(ImageError::UnsupportedFormat(display)),
    }
    let img = reader.decode().map_err(|e| ImageError::Decode {
        path: display,
        message: e.to_string(),
    })?;
    if img.width() == 0 || img.height() == 0 {
        return Err(ImageError::ZeroDimension {
            width: img.width() as usize,
            height: img.height() as usize,
        });
    }
    Ok(img)
}

#[inline]
fn quantize(v: f64) -> u8 {
    (super::clamp01(v) * 255.0).round() as u8
}

/// Load an 8-bit PNG or binary PPM as an RGB image.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageRgb, ImageError> {
    let rgb = decode(path.as_ref())?.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let data = rgb
        .into_raw()
        .into_iter()
        .map(|v| v as f64 / 255.0)
        .collect();
    ImageRgb::from_vec(w, h, data)
}

/// Load a single-channel mask. Gray files are read verbatim; color files are
/// reduced with Rec.601 luma.
pub fn load_gray(path: impl AsRef<Path>) -> Result<ImageGray, ImageError> {
    let img = decode(path.as_ref())?;
    match img {
        DynamicImage::ImageLuma8(gray) => {
            let (w, h) = (gray.width() as usize, gray.height() as usize);
            let data = gray
                .into_raw()
                .into_iter()
                .map(|v| v as f64 / 255.0)
                .collect();
            ImageGray::from_vec(w, h, data)
        }
        other => {
            let rgb = other.to_rgb8();
            let (w, h) = (rgb.width() as usize, rgb.height() as usize);
            let data = rgb
                .into_raw()
                .into_iter()
                .map(|v| v as f64 / 255.0)
                .collect();
            Ok(ImageRgb::from_vec(w, h, data)?.to_luma())
        }
    }
}

fn write_bytes(
    path: &Path,
    bytes: &[u8],
    width: usize,
    height: usize,
    color: ExtendedColorType,
) -> Result<(), ImageError> {
    let kind = kind_from_extension(path)?;
    let display = path.display().to_string();
    let file = File::create(path).map_err(|source| ImageError::Io {
        path: display.clone(),
        source,
    })?;
    let writer = BufWriter::new(file);
    let result = match kind {
        FileKind::Png => {
            PngEncoder::new(writer).write_image(bytes, width as u32, height as u32, color)
        }
        FileKind::Pnm => {
            let subtype = if color == ExtendedColorType::L8 {
                PnmSubtype::Graymap(SampleEncoding::Binary)
            } else {
                PnmSubtype::Pixmap(SampleEncoding::Binary)
            };
            PnmEncoder::new(writer).with_subtype(subtype).write_image(
                bytes,
                width as u32,
                height as u32,
                color,
            )
        }
    };
    result.map_err(|e| ImageError::Decode {
        path: display,
        message: e.to_string(),
    })
}

/// Save as 8-bit PNG or binary PPM (P6), chosen by file extension.
pub fn save_image(img: &ImageRgb, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let bytes: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    write_bytes(
        path.as_ref(),
        &bytes,
        img.width(),
        img.height(),
        ExtendedColorType::Rgb8,
    )
}

/// Save a gray image as 8-bit PNG or binary PGM (P5).
pub fn save_gray(img: &ImageGray, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let bytes: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    write_bytes(
        path.as_ref(),
        &bytes,
        img.width(),
        img.height(),
        ExtendedColorType::L8,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_red_png_pixel() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("red.png");
        image::RgbImage::from_raw(1, 1, vec![255, 0, 0])
            .unwrap()
            .save(&path)
            .unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.dims(), (1, 1));
        assert_eq!(img.get(0, 0), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn ppm_round_trip_is_exact_at_eight_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.ppm");
        let img = ImageRgb::from_vec(
            2,
            2,
            [10u8, 20, 30, 40, 50, 60, 70, 80, 90, 255, 0, 128]
                .iter()
                .map(|&v| v as f64 / 255.0)
                .collect(),
        )
        .unwrap();
        save_image(&img, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P6"));
        assert_eq!(load_image(&path).unwrap(), img);
    }

    #[test]
    fn corrupt_header_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ppm");
        std::fs::write(&path, b"P6\nnot a header\n\x00\x01").unwrap();
        let err = load_image(&path).unwrap_err();
        assert!(
            matches!(
                err,
                ImageError::Decode { .. } | ImageError::UnsupportedFormat(_)
            ),
            "{err:?}"
        );
        let junk = dir.path().join("junk.png");
        std::fs::write(&junk, b"hello world").unwrap();
        assert!(load_image(&junk).is_err());
    }

    #[test]
    fn missing_file_and_unknown_extension() {
        assert!(matches!(
            load_image("/definitely/not/here.png"),
            Err(ImageError::Io { .. })
        ));
        let img = ImageRgb::filled(1, 1, [0.5; 3]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            save_image(&img, dir.path().join("x.bmp")),
            Err(ImageError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn gray_masks_load_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let mask = ImageGray::from_vec(3, 1, vec![0.0, 128.0 / 255.0, 1.0]).unwrap();
        save_gray(&mask, &path).unwrap();
        assert_eq!(load_gray(&path).unwrap(), mask);
        let pgm = dir.path().join("m.pgm");
        save_gray(&mask, &pgm).unwrap();
        assert_eq!(load_gray(&pgm).unwrap(), mask);
    }
}
