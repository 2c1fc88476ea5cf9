//! Pixel-buffer types, binary PNM (P5/P6) file I/O and fidelity metrics.
//!
//! Every raster is a plain row-major buffer with its dimensions; all values
//! are immutable after construction and every operation here is a pure
//! function. The only file format handled by the core is binary PNM with
//! maxval 255: lossless, header-trivial, and bit-exact under round-trip.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Errors from raster construction and PNM file handling.
#[derive(Debug, Error)]
pub enum ImageError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed PNM header: {0}")]
    MalformedHeader(String),
    #[error("unsupported PNM maxval {0} (only 255 is accepted)")]
    UnsupportedMaxval(u32),
    #[error("truncated PNM pixel data: expected {expected} bytes, found {found}")]
    TruncatedData { expected: usize, found: usize },
    #[error("invalid image dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("buffer length {len} does not match {width}x{height} ({channels} channel(s))")]
    BufferSize {
        width: usize,
        height: usize,
        channels: usize,
        len: usize,
    },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
}

fn check_dims(width: usize, height: usize) -> Result<(), ImageError> {
    if width == 0 || height == 0 {
        return Err(ImageError::InvalidDimensions { width, height });
    }
    Ok(())
}

/// 8-bit single-channel image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(ImageError::BufferSize {
                width,
                height,
                channels: 1,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Constant-valued image.
    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self, ImageError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x]
    }

    /// Replicate-border lookup: coordinates outside the image are clamped
    /// to the nearest edge pixel.
    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64) -> u8 {
        let xc = x.clamp(0, self.width as i64 - 1) as usize;
        let yc = y.clamp(0, self.height as i64 - 1) as usize;
        self.data[yc * self.width + xc]
    }

    pub fn save_pnm(&self, path: &Path) -> Result<(), ImageError> {
        write_pnm(path, b"P5", self.width, self.height, &self.data)
    }
}

/// 8-bit RGB image, row-major interleaved triples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        check_dims(width, height)?;
        if data.len() != 3 * width * height {
            return Err(ImageError::BufferSize {
                width,
                height,
                channels: 3,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self, ImageError> {
        let mut data = Vec::with_capacity(3 * width * height);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn save_pnm(&self, path: &Path) -> Result<(), ImageError> {
        write_pnm(path, b"P6", self.width, self.height, &self.data)
    }
}

/// Row-major plane of f64 samples; all values must stay finite.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatPlane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl FloatPlane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(ImageError::BufferSize {
                width,
                height,
                channels: 1,
                len: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(ImageError::NonFinite(i));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64) -> f64 {
        let xc = x.clamp(0, self.width as i64 - 1) as usize;
        let yc = y.clamp(0, self.height as i64 - 1) as usize;
        self.data[yc * self.width + xc]
    }
}

/// Foreground/background raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self, ImageError> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(ImageError::BufferSize {
                width,
                height,
                channels: 1,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Result<Self, ImageError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Out-of-image lookups are background.
    #[inline]
    pub fn get_or_background(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            false
        } else {
            self.data[y as usize * self.width + x as usize]
        }
    }

    pub fn count_foreground(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Flips foreground and background within the frame.
    pub fn complement(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&b| !b).collect(),
        }
    }

    /// Serializes as P5 with foreground = 255, background = 0.
    pub fn save_pnm(&self, path: &Path) -> Result<(), ImageError> {
        let bytes: Vec<u8> = self.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
        write_pnm(path, b"P5", self.width, self.height, &bytes)
    }

    /// Reinterprets a grayscale raster as a mask: nonzero = foreground.
    /// Inverse of the P5 mask serialization.
    pub fn from_gray(image: &GrayImage) -> Self {
        Self {
            width: image.width,
            height: image.height,
            data: image.data.iter().map(|&v| v != 0).collect(),
        }
    }
}

impl fmt::Display for BinaryMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for y in 0..self.height {
            for x in 0..self.width {
                f.write_str(if self.get(x, y) { "#" } else { "." })?;
            }
            f.write_str("\n")?;
        }
        Ok(())
    }
}

/// Result of loading a PNM file; the variant follows the magic number.
#[derive(Debug, Clone)]
pub enum PnmImage {
    Gray(GrayImage),
    Rgb(RgbImage),
}

impl PnmImage {
    pub fn width(&self) -> usize {
        match self {
            PnmImage::Gray(g) => g.width(),
            PnmImage::Rgb(c) => c.width(),
        }
    }

    pub fn height(&self) -> usize {
        match self {
            PnmImage::Gray(g) => g.height(),
            PnmImage::Rgb(c) => c.height(),
        }
    }

    /// Widens grayscale to RGB by channel replication; RGB passes through.
    pub fn into_rgb(self) -> RgbImage {
        match self {
            PnmImage::Rgb(c) => c,
            PnmImage::Gray(g) => {
                let mut data = Vec::with_capacity(3 * g.width() * g.height());
                for &v in g.data() {
                    data.extend_from_slice(&[v, v, v]);
                }
                RgbImage::new(g.width(), g.height(), data).expect("same dimensions")
            }
        }
    }
}

fn write_pnm(
    path: &Path,
    magic: &[u8],
    width: usize,
    height: usize,
    payload: &[u8],
) -> Result<(), ImageError> {
    let io_err = |source| ImageError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = Vec::with_capacity(payload.len() + 32);
    out.extend_from_slice(magic);
    out.push(b'\n');
    out.extend_from_slice(format!("{} {}\n255\n", width, height).as_bytes());
    out.extend_from_slice(payload);
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(&out).map_err(io_err)?;
    Ok(())
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a [u8], ImageError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ImageError::MalformedHeader(
                "unexpected end of header".into(),
            ));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<u32, ImageError> {
        let tok = self.token()?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| {
                ImageError::MalformedHeader(format!(
                    "{} is not a decimal number: {:?}",
                    what,
                    String::from_utf8_lossy(tok)
                ))
            })
    }
}

/// Loads a binary PGM (P5) or PPM (P6) file with maxval 255. The magic
/// number selects the returned variant.
pub fn load_pnm(path: &Path) -> Result<PnmImage, ImageError> {
    let bytes = fs::read(path).map_err(|source| ImageError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rd = HeaderReader::new(&bytes);
    let magic = rd.token()?;
    let channels = match magic {
        b"P5" => 1usize,
        b"P6" => 3usize,
        other => {
            return Err(ImageError::MalformedHeader(format!(
                "unknown magic {:?}",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let width = rd.number("width")? as usize;
    let height = rd.number("height")? as usize;
    let maxval = rd.number("maxval")?;
    if maxval != 255 {
        return Err(ImageError::UnsupportedMaxval(maxval));
    }
    check_dims(width, height)?;
    // Exactly one whitespace byte separates the header from the payload.
    if rd.pos >= bytes.len() || !bytes[rd.pos].is_ascii_whitespace() {
        return Err(ImageError::MalformedHeader(
            "missing whitespace after maxval".into(),
        ));
    }
    let payload = &bytes[rd.pos + 1..];
    let expected = channels * width * height;
    if payload.len() < expected {
        return Err(ImageError::TruncatedData {
            expected,
            found: payload.len(),
        });
    }
    let data = payload[..expected].to_vec();
    Ok(match channels {
        1 => PnmImage::Gray(GrayImage::new(width, height, data)?),
        _ => PnmImage::Rgb(RgbImage::new(width, height, data)?),
    })
}

/// BT.601 luma: round(0.299 R + 0.587 G + 0.114 B), per pixel.
pub fn rgb_to_gray(image: &RgbImage) -> GrayImage {
    let data = image
        .data()
        .chunks_exact(3)
        .map(|px| {
            let luma = 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64;
            luma.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayImage::new(image.width(), image.height(), data).expect("same dimensions")
}

/// Peak signal-to-noise ratio in decibels: 10·log10(255² / MSE).
///
/// Identical images have zero MSE; that case returns `f64::INFINITY` as the
/// sentinel rather than an error, so corpus runs survive a perfect
/// restoration.
pub fn psnr(reference: &GrayImage, test: &GrayImage) -> Result<f64, ImageError> {
    if reference.width() != test.width() || reference.height() != test.height() {
        return Err(ImageError::DimensionMismatch(
            reference.width(),
            reference.height(),
            test.width(),
            test.height(),
        ));
    }
    let sum_sq: f64 = reference
        .data()
        .iter()
        .zip(test.data())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    let mse = sum_sq / (reference.width() * reference.height()) as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0f64 * 255.0 / mse).log10())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("gesturekit-imagecore-tests");
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn load_p5_exact_bytes() {
        let path = tmp("p5_2x2.pgm");
        fs::write(&path, b"P5\n2 2\n255\n\x00\x40\x80\xff").unwrap();
        match load_pnm(&path).unwrap() {
            PnmImage::Gray(g) => {
                assert_eq!((g.width(), g.height()), (2, 2));
                assert_eq!(g.data(), &[0, 64, 128, 255]);
            }
            _ => panic!("expected gray"),
        }
    }

    #[test]
    fn load_p6_one_red_pixel() {
        let path = tmp("p6_1x1.ppm");
        fs::write(&path, b"P6\n1 1\n255\n\xff\x00\x00").unwrap();
        match load_pnm(&path).unwrap() {
            PnmImage::Rgb(c) => assert_eq!(c.get(0, 0), [255, 0, 0]),
            _ => panic!("expected rgb"),
        }
    }

    #[test]
    fn load_rejects_truncated_payload() {
        let path = tmp("trunc.pgm");
        fs::write(&path, b"P5\n4 4\n255\n01234567").unwrap();
        match load_pnm(&path) {
            Err(ImageError::TruncatedData { expected, found }) => {
                assert_eq!(expected, 16);
                assert_eq!(found, 8);
            }
            other => panic!("expected truncation error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn load_rejects_bad_maxval() {
        let path = tmp("maxval.pgm");
        fs::write(&path, b"P5\n1 1\n65535\n\x00\x00").unwrap();
        assert!(matches!(
            load_pnm(&path),
            Err(ImageError::UnsupportedMaxval(65535))
        ));
    }

    #[test]
    fn load_rejects_unknown_magic() {
        let path = tmp("magic.pnm");
        fs::write(&path, b"P3\n1 1\n255\n0 0 0\n").unwrap();
        assert!(matches!(
            load_pnm(&path),
            Err(ImageError::MalformedHeader(_))
        ));
    }

    #[test]
    fn load_missing_file_is_io_error() {
        let path = tmp("does-not-exist.pgm");
        let _ = fs::remove_file(&path);
        assert!(matches!(load_pnm(&path), Err(ImageError::Io { .. })));
    }

    #[test]
    fn header_comments_are_skipped() {
        let path = tmp("comments.pgm");
        fs::write(&path, b"P5 # magic\n# a comment line\n2 1 # dims\n255\n\x01\x02").unwrap();
        match load_pnm(&path).unwrap() {
            PnmImage::Gray(g) => assert_eq!(g.data(), &[1, 2]),
            _ => panic!("expected gray"),
        }
    }

    #[test]
    fn mask_saves_as_255_and_0() {
        let path = tmp("mask.pgm");
        let mask = BinaryMask::new(2, 1, vec![true, false]).unwrap();
        mask.save_pnm(&path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert!(bytes.ends_with(&[255, 0]));
        match load_pnm(&path).unwrap() {
            PnmImage::Gray(g) => assert_eq!(BinaryMask::from_gray(&g), mask),
            _ => panic!("expected gray"),
        }
    }

    #[test]
    fn zero_width_image_is_rejected() {
        assert!(matches!(
            GrayImage::new(0, 3, vec![]),
            Err(ImageError::InvalidDimensions { .. })
        ));
        assert!(matches!(
            RgbImage::new(3, 0, vec![]),
            Err(ImageError::InvalidDimensions { .. })
        ));
    }

    #[test]
    fn gray_roundtrip_is_identity() {
        let path = tmp("roundtrip.pgm");
        let img = GrayImage::new(3, 2, vec![9, 0, 255, 17, 128, 64]).unwrap();
        img.save_pnm(&path).unwrap();
        match load_pnm(&path).unwrap() {
            PnmImage::Gray(g) => assert_eq!(g, img),
            _ => panic!("expected gray"),
        }
    }

    #[test]
    fn rgb_to_gray_examples() {
        let img = RgbImage::new(
            3,
            1,
            vec![255, 255, 255, 0, 0, 0, 255, 0, 0],
        )
        .unwrap();
        let gray = rgb_to_gray(&img);
        // round(0.299*255) = round(76.245) = 76
        assert_eq!(gray.data(), &[255, 0, 76]);
    }

    #[test]
    fn psnr_examples() {
        let a = GrayImage::filled(4, 4, 10).unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);

        let b = GrayImage::filled(4, 4, 11).unwrap();
        let db = psnr(&a, &b).unwrap();
        assert!((db - 20.0 * 255.0f64.log10()).abs() < 1e-9, "got {db}");

        let black = GrayImage::filled(4, 4, 0).unwrap();
        let white = GrayImage::filled(4, 4, 255).unwrap();
        assert_eq!(psnr(&black, &white).unwrap(), 0.0);
    }

    #[test]
    fn psnr_rejects_dimension_mismatch() {
        let a = GrayImage::filled(4, 4, 0).unwrap();
        let b = GrayImage::filled(4, 5, 0).unwrap();
        assert!(matches!(
            psnr(&a, &b),
            Err(ImageError::DimensionMismatch(..))
        ));
    }

    #[test]
    fn psnr_decreases_as_a_single_pixel_difference_grows() {
        let a = GrayImage::filled(4, 4, 100).unwrap();
        let mut prev = f64::INFINITY;
        for delta in [1u8, 2, 5, 20, 80] {
            let mut data = a.data().to_vec();
            data[5] = 100 + delta;
            let b = GrayImage::new(4, 4, data).unwrap();
            let db = psnr(&a, &b).unwrap();
            assert!(db < prev, "psnr must strictly decrease: {db} !< {prev}");
            prev = db;
        }
    }
}
