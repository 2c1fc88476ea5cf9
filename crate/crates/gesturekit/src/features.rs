//! First-order histogram features of a segmented region.
//!
//! The histogram is built only over foreground pixels of the masked
//! grayscale image; the six statistics — mean, variance, skewness, excess
//! kurtosis, energy, entropy — follow the standard probability-weighted
//! formulas over the 256 gray levels.

use thiserror::Error;

use crate::imagecore::{BinaryMask, GrayImage};

/// Gray-level count used throughout.
pub const GRAY_LEVELS: usize = 256;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("mask has no foreground pixels")]
    EmptyRegion,
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("probabilities must be nonnegative and sum to 1 (sum = {0})")]
    NotAProbability(f64),
}

/// Normalized gray-level histogram: 256 probabilities summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    p: Vec<f64>,
}

impl Histogram {
    pub fn new(p: Vec<f64>) -> Result<Self, FeatureError> {
        if p.len() != GRAY_LEVELS || p.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(FeatureError::NotAProbability(f64::NAN));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(FeatureError::NotAProbability(sum));
        }
        Ok(Self { p })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }
}

/// The six statistics, in the fixed order used by every serialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub energy: f64,
    pub entropy: f64,
}

impl FeatureVector {
    pub fn to_array(self) -> [f64; 6] {
        [
            self.mean,
            self.variance,
            self.skewness,
            self.kurtosis,
            self.energy,
            self.entropy,
        ]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            mean: a[0],
            variance: a[1],
            skewness: a[2],
            kurtosis: a[3],
            energy: a[4],
            entropy: a[5],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Tallies intensities of foreground pixels only, normalized by the
/// foreground count.
pub fn region_histogram(
    image: &GrayImage,
    mask: &BinaryMask,
) -> Result<Histogram, FeatureError> {
    if image.width() != mask.width() || image.height() != mask.height() {
        return Err(FeatureError::DimensionMismatch(
            image.width(),
            image.height(),
            mask.width(),
            mask.height(),
        ));
    }
    let mut counts = [0u64; GRAY_LEVELS];
    let mut total = 0u64;
    for (&v, &m) in image.data().iter().zip(mask.data()) {
        if m {
            counts[v as usize] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(FeatureError::EmptyRegion);
    }
    let p = counts.iter().map(|&c| c as f64 / total as f64).collect();
    Ok(Histogram { p })
}

/// Evaluates the six table formulas. Conventions: 0·log₂0 ≡ 0 in the
/// entropy, and a zero-variance histogram reports skewness = kurtosis = 0
/// so constant regions never produce NaN downstream.
pub fn extract_features(hist: &Histogram) -> FeatureVector {
    let p = &hist.p;
    let mean: f64 = p.iter().enumerate().map(|(i, &pi)| i as f64 * pi).sum();
    let variance: f64 = p
        .iter()
        .enumerate()
        .map(|(i, &pi)| (i as f64 - mean).powi(2) * pi)
        .sum();
    let sigma = variance.sqrt();
    let (skewness, kurtosis) = if sigma == 0.0 {
        (0.0, 0.0)
    } else {
        let m3: f64 = p
            .iter()
            .enumerate()
            .map(|(i, &pi)| (i as f64 - mean).powi(3) * pi)
            .sum();
        let m4: f64 = p
            .iter()
            .enumerate()
            .map(|(i, &pi)| (i as f64 - mean).powi(4) * pi)
            .sum();
        (m3 / sigma.powi(3), m4 / sigma.powi(4) - 3.0)
    };
    let energy: f64 = p.iter().map(|&pi| pi * pi).sum();
    let entropy: f64 = -p
        .iter()
        .filter(|&&pi| pi > 0.0)
        .map(|&pi| pi * pi.log2())
        .sum::<f64>();
    FeatureVector {
        mean,
        variance,
        skewness,
        kurtosis,
        energy,
        entropy,
    }
}

/// Histogram and statistics in one step.
pub fn features_of_region(
    image: &GrayImage,
    mask: &BinaryMask,
) -> Result<FeatureVector, FeatureError> {
    Ok(extract_features(&region_histogram(image, mask)?))
}

/// Header of the CSV export shared by the feature dump and the dataset
/// tooling.
pub const CSV_HEADER: &str = "path,label,mean,variance,skewness,kurtosis,energy,entropy";

/// One CSV row in the export format: path, label, then the six statistics
/// with 9 significant digits.
pub fn csv_row(path: &str, label: &str, features: &FeatureVector) -> String {
    let f = features.to_array();
    format!(
        "{path},{label},{},{},{},{},{},{}",
        sig9(f[0]),
        sig9(f[1]),
        sig9(f[2]),
        sig9(f[3]),
        sig9(f[4]),
        sig9(f[5])
    )
}

fn sig9(v: f64) -> String {
    format!("{v:.8e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_histogram(level: usize) -> Histogram {
        let mut p = vec![0.0; GRAY_LEVELS];
        p[level] = 1.0;
        Histogram::new(p).unwrap()
    }

    #[test]
    fn region_histogram_examples() {
        let img = GrayImage::filled(4, 4, 7).unwrap();
        let mask = BinaryMask::filled(4, 4, true).unwrap();
        let hist = region_histogram(&img, &mask).unwrap();
        assert_eq!(hist.probabilities()[7], 1.0);
        assert_eq!(hist.probabilities().iter().sum::<f64>(), 1.0);

        let two = GrayImage::new(2, 1, vec![0, 255]).unwrap();
        let both = BinaryMask::filled(2, 1, true).unwrap();
        let hist = region_histogram(&two, &both).unwrap();
        assert_eq!(hist.probabilities()[0], 0.5);
        assert_eq!(hist.probabilities()[255], 0.5);

        let empty = BinaryMask::filled(4, 4, false).unwrap();
        assert!(matches!(
            region_histogram(&img, &empty),
            Err(FeatureError::EmptyRegion)
        ));

        let small = BinaryMask::filled(2, 2, true).unwrap();
        assert!(matches!(
            region_histogram(&img, &small),
            Err(FeatureError::DimensionMismatch(..))
        ));
    }

    #[test]
    fn region_histogram_matches_direct_tally() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let data: Vec<u8> = (0..256).map(|_| rng.gen()).collect();
        let mask_bits: Vec<bool> = (0..256).map(|_| rng.gen_bool(0.6)).collect();
        let img = GrayImage::new(16, 16, data.clone()).unwrap();
        let mask = BinaryMask::new(16, 16, mask_bits.clone()).unwrap();
        let hist = region_histogram(&img, &mask).unwrap();

        let mut counts = [0u32; GRAY_LEVELS];
        let mut n = 0u32;
        for i in 0..256 {
            if mask_bits[i] {
                counts[data[i] as usize] += 1;
                n += 1;
            }
        }
        for i in 0..GRAY_LEVELS {
            assert_eq!(hist.probabilities()[i], counts[i] as f64 / n as f64);
        }
    }

    #[test]
    fn constant_histogram_features() {
        let f = extract_features(&constant_histogram(42));
        assert_eq!(f.mean, 42.0);
        assert_eq!(f.variance, 0.0);
        assert_eq!(f.skewness, 0.0);
        assert_eq!(f.kurtosis, 0.0);
        assert_eq!(f.energy, 1.0);
        assert_eq!(f.entropy, 0.0);
    }

    #[test]
    fn uniform_histogram_features() {
        let hist = Histogram::new(vec![1.0 / 256.0; 256]).unwrap();
        let f = extract_features(&hist);
        assert!((f.mean - 127.5).abs() < 1e-12);
        assert_eq!(f.entropy, 8.0, "entropy of the uniform histogram is 8 bits");
        assert!((f.energy - 1.0 / 256.0).abs() < 1e-15);
    }

    #[test]
    fn two_level_histogram_features() {
        let mut p = vec![0.0; 256];
        p[0] = 0.5;
        p[255] = 0.5;
        let f = extract_features(&Histogram::new(p).unwrap());
        assert_eq!(f.mean, 127.5);
        assert_eq!(f.variance, 16256.25);
        assert_eq!(f.skewness, 0.0);
        assert_eq!(f.kurtosis, -2.0);
        assert_eq!(f.energy, 0.5);
        assert_eq!(f.entropy, 1.0);
    }

    #[test]
    fn features_of_region_composes() {
        let img = GrayImage::filled(3, 3, 10).unwrap();
        let full = BinaryMask::filled(3, 3, true).unwrap();
        let f = features_of_region(&img, &full).unwrap();
        assert_eq!((f.mean, f.variance, f.energy), (10.0, 0.0, 1.0));

        // Any image under a single-pixel mask is a one-sample region.
        let noisy = GrayImage::new(3, 3, vec![1, 2, 3, 4, 5, 6, 7, 8, 9]).unwrap();
        let mut single = vec![false; 9];
        single[4] = true;
        let f = features_of_region(
            &noisy,
            &BinaryMask::new(3, 3, single).unwrap(),
        )
        .unwrap();
        assert_eq!(f.variance, 0.0);
        assert_eq!(f.energy, 1.0);
    }

    #[test]
    fn shift_covariance() {
        // Region values shifted by +k: mean moves by k, the rest is
        // untouched (no clamping in this fixture).
        let base: Vec<u8> = vec![50, 60, 60, 70, 80, 80, 80, 90];
        let shifted: Vec<u8> = base.iter().map(|&v| v + 100).collect();
        let mask = BinaryMask::filled(8, 1, true).unwrap();
        let f0 = features_of_region(&GrayImage::new(8, 1, base).unwrap(), &mask).unwrap();
        let f1 = features_of_region(&GrayImage::new(8, 1, shifted).unwrap(), &mask).unwrap();
        assert!((f1.mean - f0.mean - 100.0).abs() < 1e-9);
        assert!((f1.variance - f0.variance).abs() < 1e-9);
        assert!((f1.skewness - f0.skewness).abs() < 1e-9);
        assert!((f1.kurtosis - f0.kurtosis).abs() < 1e-9);
        assert!((f1.energy - f0.energy).abs() < 1e-12);
        assert!((f1.entropy - f0.entropy).abs() < 1e-12);
    }

    #[test]
    fn symmetric_histogram_has_zero_skewness() {
        let mut p = vec![0.0; 256];
        p[100] = 0.25;
        p[120] = 0.2;
        p[140] = 0.1;
        p[160] = 0.2;
        p[180] = 0.25;
        let f = extract_features(&Histogram::new(p).unwrap());
        assert!(f.skewness.abs() < 1e-9, "skewness {}", f.skewness);
    }

    #[test]
    fn entropy_and_energy_bounds() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let raw: Vec<f64> = (0..256).map(|_| rng.gen_range(0.0..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|v| v / sum).collect();
            // Renormalize exactly enough for the constructor.
            let f = extract_features(&Histogram { p });
            assert!(f.entropy <= 8.0 + 1e-9);
            assert!(f.energy >= 1.0 / 256.0 - 1e-12);
            assert!(f.energy <= 1.0);
            assert!(f.is_finite());
        }
    }

    #[test]
    fn histogram_constructor_validates() {
        assert!(Histogram::new(vec![0.5; 256]).is_err(), "sums to 128");
        assert!(Histogram::new(vec![1.0; 1]).is_err(), "wrong length");
        let mut p = vec![0.0; 256];
        p[3] = 1.0;
        assert!(Histogram::new(p).is_ok());
    }

    #[test]
    fn csv_row_format() {
        let f = FeatureVector {
            mean: 127.5,
            variance: 16256.25,
            skewness: 0.0,
            kurtosis: -2.0,
            energy: 0.5,
            entropy: 1.0,
        };
        let row = csv_row("img/a.ppm", "Hi", &f);
        assert_eq!(
            row,
            "img/a.ppm,Hi,1.27500000e2,1.62562500e4,0.00000000e0,-2.00000000e0,5.00000000e-1,1.00000000e0"
        );
        assert_eq!(CSV_HEADER.split(',').count(), row.split(',').count());
    }
}
