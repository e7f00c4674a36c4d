//! 8-bit PNG input/output and atomic file writes.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};

use crate::error::{Result, TnpError};
use crate::image::ImageGrid;

fn codec(e: impl std::fmt::Display) -> TnpError {
    TnpError::Codec(e.to_string())
}

/// Decodes a PNG into `[0, 1]` reals. Palette and low-bit images are
/// expanded, 16-bit samples are truncated to 8 bits, alpha is dropped.
pub fn decode_png(bytes: &[u8]) -> Result<ImageGrid> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(Transformations::normalize_to_color8());
    read(decoder)
}

pub fn read_png(path: &Path) -> Result<ImageGrid> {
    let mut decoder = png::Decoder::new(BufReader::new(File::open(path)?));
    decoder.set_transformations(Transformations::normalize_to_color8());
    read(decoder)
}

fn read<R: std::io::BufRead + std::io::Seek>(decoder: png::Decoder<R>) -> Result<ImageGrid> {
    let mut reader = decoder.read_info().map_err(codec)?;
    let size = reader.output_buffer_size().ok_or_else(|| codec("image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(codec)?;
    let (h, w) = (info.height as usize, info.width as usize);
    let (stride, channels) = match info.color_type {
        ColorType::Grayscale => (1, 1),
        ColorType::GrayscaleAlpha => (2, 1),
        ColorType::Rgb => (3, 3),
        ColorType::Rgba => (4, 3),
        ColorType::Indexed => return Err(codec("palette was not expanded")),
    };
    let mut data = vec![0.0; h * w * channels];
    for r in 0..h {
        let row = &buf[r * info.line_size..];
        for col in 0..w {
            for c in 0..channels {
                data[(c * h + r) * w + col] = f64::from(row[col * stride + c]) / 255.0;
            }
        }
    }
    ImageGrid::new(h, w, channels, data)
}

/// `round(clamp(v, 0, 1) · 255)` with halves rounded up.
pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// The image as it reads back after an 8-bit round trip.
pub fn quantize_8bit(img: &ImageGrid) -> ImageGrid {
    img.map(|v| f64::from(to_u8(v)) / 255.0)
}

/// Encodes a 1- or 3-channel image as 8-bit grayscale or RGB.
pub fn encode_png(img: &ImageGrid) -> Result<Vec<u8>> {
    let color = match img.channels() {
        1 => ColorType::Grayscale,
        3 => ColorType::Rgb,
        c => return Err(codec(format!("cannot encode {c} channels"))),
    };
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    let mut pixels = Vec::with_capacity(h * w * ch);
    for r in 0..h {
        for col in 0..w {
            for c in 0..ch {
                pixels.push(to_u8(img.get(c, r, col)));
            }
        }
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
        enc.set_color(color);
        enc.set_depth(BitDepth::Eight);
        let mut writer = enc.write_header().map_err(codec)?;
        writer.write_image_data(&pixels).map_err(codec)?;
        writer.finish().map_err(codec)?;
    }
    Ok(out)
}

pub fn write_png(path: &Path, img: &ImageGrid) -> Result<()> {
    write_atomic(path, &encode_png(img)?)
}

/// Writes through a temporary file in the destination directory and renames
/// it into place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| TnpError::Io(e.error))?;
    Ok(())
}
