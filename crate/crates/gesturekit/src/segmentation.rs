//! Hand-region segmentation: sRGB→CIELAB conversion, automatic
//! thresholding of the b* channel, morphological cleanup with the fixed
//! structuring elements, and Canny edge extraction.
//!
//! The pipeline composes, in order: `rgb_to_lab` → `extract_b` →
//! `otsu_threshold` → `binarize` → `erode` (5×5 diamond) → `dilate`
//! (6×6 block) → `map_mask` over the grayscale original → `canny`.

use thiserror::Error;

use crate::imagecore::{rgb_to_gray, BinaryMask, FloatPlane, GrayImage, RgbImage};

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
}

/// CIELAB image as three aligned planes. L* stays within [0, 100]; a* and
/// b* are unbounded (sRGB inputs land within roughly [−128, 127]).
#[derive(Debug, Clone)]
pub struct LabImage {
    l: FloatPlane,
    a: FloatPlane,
    b: FloatPlane,
}

impl LabImage {
    pub fn new(l: FloatPlane, a: FloatPlane, b: FloatPlane) -> Result<Self, SegmentError> {
        if l.width() != a.width()
            || l.width() != b.width()
            || l.height() != a.height()
            || l.height() != b.height()
        {
            return Err(SegmentError::DimensionMismatch(
                l.width(),
                l.height(),
                b.width(),
                b.height(),
            ));
        }
        if let Some(v) = l
            .data()
            .iter()
            .find(|&&v| !(-1e-6..=100.0 + 1e-6).contains(&v))
        {
            return Err(SegmentError::InvalidParams(format!(
                "L* value {v} outside [0, 100]"
            )));
        }
        Ok(Self { l, a, b })
    }

    pub fn width(&self) -> usize {
        self.l.width()
    }

    pub fn height(&self) -> usize {
        self.l.height()
    }

    pub fn l(&self) -> &FloatPlane {
        &self.l
    }

    pub fn a(&self) -> &FloatPlane {
        &self.a
    }

    pub fn b(&self) -> &FloatPlane {
        &self.b
    }
}

// D65 reference white.
const XN: f64 = 0.95047;
const YN: f64 = 1.0;
const ZN: f64 = 1.08883;

fn srgb_channel_to_linear(c: u8) -> f64 {
    let c = c as f64 / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// One sRGB triple through inverse gamma, the D65 RGB→XYZ matrix and the
/// standard XYZ→CIELAB mapping.
pub fn srgb_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let r = srgb_channel_to_linear(rgb[0]);
    let g = srgb_channel_to_linear(rgb[1]);
    let b = srgb_channel_to_linear(rgb[2]);
    let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    let fx = lab_f(x / XN);
    let fy = lab_f(y / YN);
    let fz = lab_f(z / ZN);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Converts a full image to CIELAB (sRGB input, D65 white point).
pub fn rgb_to_lab(image: &RgbImage) -> LabImage {
    let n = image.width() * image.height();
    let mut l = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for px in image.data().chunks_exact(3) {
        let lab = srgb_to_lab([px[0], px[1], px[2]]);
        // Guard the L* invariant against rounding drift.
        l.push(lab[0].clamp(0.0, 100.0));
        a.push(lab[1]);
        b.push(lab[2]);
    }
    let w = image.width();
    let h = image.height();
    LabImage::new(
        FloatPlane::new(w, h, l).expect("finite by construction"),
        FloatPlane::new(w, h, a).expect("finite by construction"),
        FloatPlane::new(w, h, b).expect("finite by construction"),
    )
    .expect("aligned planes")
}

/// The b* plane, unchanged.
pub fn extract_b(lab: &LabImage) -> FloatPlane {
    lab.b.clone()
}

/// Otsu's automatic threshold on a 256-bin linear quantization of the
/// plane's value range. Returns the bin boundary maximizing between-class
/// variance; ties break toward the smallest threshold. A constant plane
/// returns its constant.
pub fn otsu_threshold(plane: &FloatPlane) -> f64 {
    let data = plane.data();
    let min = data.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return min;
    }
    let bin_width = (max - min) / 256.0;
    let mut hist = [0u64; 256];
    for &v in data {
        let bin = (((v - min) / bin_width) as usize).min(255);
        hist[bin] += 1;
    }
    let total = data.len() as f64;
    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &h)| i as f64 * h as f64)
        .sum();

    let mut weight_lo = 0.0;
    let mut sum_lo = 0.0;
    let mut best_split = 0usize;
    let mut best_var = -1.0;
    // Split k: bins [0, k) against [k, 256).
    for k in 0..=256usize {
        let weight_hi = total - weight_lo;
        let var = if weight_lo > 0.0 && weight_hi > 0.0 {
            let mean_lo = sum_lo / weight_lo;
            let mean_hi = (sum_all - sum_lo) / weight_hi;
            weight_lo * weight_hi * (mean_lo - mean_hi) * (mean_lo - mean_hi)
        } else {
            0.0
        };
        if var > best_var {
            best_var = var;
            best_split = k;
        }
        if k < 256 {
            weight_lo += hist[k] as f64;
            sum_lo += k as f64 * hist[k] as f64;
        }
    }
    min + best_split as f64 * bin_width
}

/// Foreground strictly above the threshold.
pub fn binarize(plane: &FloatPlane, threshold: f64) -> BinaryMask {
    let data = plane.data().iter().map(|&v| v > threshold).collect();
    BinaryMask::new(plane.width(), plane.height(), data).expect("same dimensions")
}

/// Keeps original pixels where the mask is foreground, zero elsewhere.
pub fn map_mask(original: &GrayImage, mask: &BinaryMask) -> Result<GrayImage, SegmentError> {
    if original.width() != mask.width() || original.height() != mask.height() {
        return Err(SegmentError::DimensionMismatch(
            original.width(),
            original.height(),
            mask.width(),
            mask.height(),
        ));
    }
    let data = original
        .data()
        .iter()
        .zip(mask.data())
        .map(|(&v, &m)| if m { v } else { 0 })
        .collect();
    Ok(GrayImage::new(original.width(), original.height(), data).expect("same dimensions"))
}

/// Binary probe shape with an origin; drives erosion and dilation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuringElement {
    width: usize,
    height: usize,
    origin: (usize, usize),
    data: Vec<bool>,
}

impl StructuringElement {
    pub fn new(
        width: usize,
        height: usize,
        origin: (usize, usize),
        data: Vec<bool>,
    ) -> Result<Self, SegmentError> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(SegmentError::InvalidParams(format!(
                "structuring element {width}x{height} with {} cells",
                data.len()
            )));
        }
        let (or, oc) = origin;
        if or >= height || oc >= width {
            return Err(SegmentError::InvalidParams(format!(
                "origin ({or}, {oc}) outside the grid"
            )));
        }
        if !data[or * width + oc] {
            return Err(SegmentError::InvalidParams(
                "origin cell must be set".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            origin,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn origin(&self) -> (usize, usize) {
        self.origin
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    /// `(dr, dc)` displacement from the origin for every set cell.
    pub fn offsets(&self) -> Vec<(i32, i32)> {
        let (or, oc) = self.origin;
        let mut out = Vec::new();
        for r in 0..self.height {
            for c in 0..self.width {
                if self.data[r * self.width + c] {
                    out.push((r as i32 - or as i32, c as i32 - oc as i32));
                }
            }
        }
        out
    }

    /// Point reflection: grid flipped both ways, origin carried along.
    pub fn reflect(&self) -> Self {
        let mut data = vec![false; self.data.len()];
        for r in 0..self.height {
            for c in 0..self.width {
                data[(self.height - 1 - r) * self.width + (self.width - 1 - c)] =
                    self.data[r * self.width + c];
            }
        }
        Self {
            width: self.width,
            height: self.height,
            origin: (
                self.height - 1 - self.origin.0,
                self.width - 1 - self.origin.1,
            ),
            data,
        }
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// The 5×5 diamond used for erosion, origin at the centre.
pub fn erosion_element() -> StructuringElement {
    let rows = [
        [0, 0, 1, 0, 0],
        [0, 1, 1, 1, 0],
        [1, 1, 1, 1, 1],
        [0, 1, 1, 1, 0],
        [0, 0, 1, 0, 0],
    ];
    let data = rows.iter().flatten().map(|&v| v == 1).collect();
    StructuringElement::new(5, 5, (2, 2), data).expect("fixed shape is valid")
}

/// The all-set 6×6 block used for dilation. The even size forces an origin
/// convention: (2, 2), the upper-left of the four central cells.
pub fn dilation_element() -> StructuringElement {
    StructuringElement::new(6, 6, (2, 2), vec![true; 36]).expect("fixed shape is valid")
}

/// Erosion with set semantics: a pixel survives iff every set SE cell,
/// placed with the origin on that pixel, lands on foreground. Outside the
/// image is background.
pub fn erode(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    let offsets = se.offsets();
    let mut data = vec![false; mask.width() * mask.height()];
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            let all = offsets
                .iter()
                .all(|&(dr, dc)| mask.get_or_background(x as i64 + dc as i64, y as i64 + dr as i64));
            data[y * mask.width() + x] = all;
        }
    }
    BinaryMask::new(mask.width(), mask.height(), data).expect("same dimensions")
}

/// Minkowski dilation: the union of SE translates over all foreground
/// pixels; equivalently a pixel is set iff the reflected SE placed there
/// touches foreground.
pub fn dilate(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    let offsets = se.offsets();
    let mut data = vec![false; mask.width() * mask.height()];
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            let any = offsets
                .iter()
                .any(|&(dr, dc)| mask.get_or_background(x as i64 - dc as i64, y as i64 - dr as i64));
            data[y * mask.width() + x] = any;
        }
    }
    BinaryMask::new(mask.width(), mask.height(), data).expect("same dimensions")
}

/// Canny parameters. The hysteresis thresholds are fractions of the
/// maximum gradient magnitude of the image under test.
#[derive(Debug, Clone, PartialEq)]
pub struct CannyParams {
    sigma: f64,
    low: f64,
    high: f64,
}

impl CannyParams {
    pub fn new(sigma: f64, low: f64, high: f64) -> Result<Self, SegmentError> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(SegmentError::InvalidParams(format!("sigma {sigma}")));
        }
        if !(low.is_finite() && high.is_finite() && 0.0 < low && low < high && high <= 1.0) {
            return Err(SegmentError::InvalidParams(format!(
                "hysteresis fractions low={low} high={high}"
            )));
        }
        Ok(Self { sigma, low, high })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn low(&self) -> f64 {
        self.low
    }

    pub fn high(&self) -> f64 {
        self.high
    }
}

impl Default for CannyParams {
    fn default() -> Self {
        Self {
            sigma: 1.4,
            low: 0.10,
            high: 0.30,
        }
    }
}

/// Gaussian smoothing with a separable kernel of radius ⌈3σ⌉, replicating
/// the border.
pub fn gaussian_blur(image: &GrayImage, sigma: f64) -> FloatPlane {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
    for i in -radius..=radius {
        kernel.push((-(i as f64) * (i as f64) / (2.0 * sigma * sigma)).exp());
    }
    let norm: f64 = kernel.iter().sum();
    for k in kernel.iter_mut() {
        *k /= norm;
    }

    let w = image.width();
    let h = image.height();
    // Horizontal pass.
    let mut tmp = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, &k) in kernel.iter().enumerate() {
                let dx = ki as i64 - radius;
                acc += k * image.get_clamped(x as i64 + dx, y as i64) as f64;
            }
            tmp[y * w + x] = acc;
        }
    }
    // Vertical pass over the horizontal result.
    let row_clamped = |x: usize, y: i64| tmp[y.clamp(0, h as i64 - 1) as usize * w + x];
    let mut out = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, &k) in kernel.iter().enumerate() {
                let dy = ki as i64 - radius;
                acc += k * row_clamped(x, y as i64 + dy);
            }
            out[y * w + x] = acc;
        }
    }
    FloatPlane::new(w, h, out).expect("finite by construction")
}

/// Per-pixel Sobel responses and their Euclidean magnitude.
#[derive(Debug, Clone)]
pub struct GradientField {
    pub gx: FloatPlane,
    pub gy: FloatPlane,
    pub magnitude: FloatPlane,
}

/// 3×3 Sobel gradients with replicated borders.
pub fn sobel_gradients(plane: &FloatPlane) -> GradientField {
    let w = plane.width();
    let h = plane.height();
    let mut gx = vec![0.0f64; w * h];
    let mut gy = vec![0.0f64; w * h];
    let mut mag = vec![0.0f64; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let p = |dx: i64, dy: i64| plane.get_clamped(x + dx, y + dy);
            let sx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let sy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            let i = y as usize * w + x as usize;
            gx[i] = sx;
            gy[i] = sy;
            mag[i] = (sx * sx + sy * sy).sqrt();
        }
    }
    GradientField {
        gx: FloatPlane::new(w, h, gx).expect("finite"),
        gy: FloatPlane::new(w, h, gy).expect("finite"),
        magnitude: FloatPlane::new(w, h, mag).expect("finite"),
    }
}

// Neighbour pair along the quantized gradient direction, as (dx, dy).
// Directions are taken modulo 180° so antiparallel gradients quantize
// identically and the tie-break below stays orientation-stable.
fn nms_neighbours(gx: f64, gy: f64) -> ((i64, i64), (i64, i64)) {
    let mut angle = gy.atan2(gx);
    if angle < 0.0 {
        angle += std::f64::consts::PI;
    }
    let sector = ((angle / (std::f64::consts::PI / 4.0) + 0.5).floor() as usize) % 4;
    match sector {
        0 => ((1, 0), (-1, 0)),
        1 => ((1, 1), (-1, -1)),
        2 => ((0, 1), (0, -1)),
        _ => ((-1, 1), (1, -1)),
    }
}

/// Classic four-stage Canny: Gaussian smoothing, Sobel gradients,
/// non-maximum suppression quantized to four directions, and
/// double-threshold hysteresis with 8-connected linking. Thresholds are
/// `params` fractions of the maximum gradient magnitude.
pub fn canny(image: &GrayImage, params: &CannyParams) -> BinaryMask {
    let w = image.width();
    let h = image.height();
    let blurred = gaussian_blur(image, params.sigma());
    let grad = sobel_gradients(&blurred);
    let max_mag = grad
        .magnitude
        .data()
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    if max_mag <= 0.0 {
        return BinaryMask::filled(w, h, false).expect("valid dimensions");
    }
    let low = params.low() * max_mag;
    let high = params.high() * max_mag;

    // Non-maximum suppression. Of two equal neighbours along the gradient
    // line exactly one survives (strict test against the negative side).
    let mut thin = vec![0.0f64; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let i = y as usize * w + x as usize;
            let m = grad.magnitude.data()[i];
            if m < low {
                continue;
            }
            let (plus, minus) = nms_neighbours(grad.gx.data()[i], grad.gy.data()[i]);
            let m_plus = grad.magnitude.get_clamped(x + plus.0, y + plus.1);
            let m_minus = grad.magnitude.get_clamped(x + minus.0, y + minus.1);
            if m >= m_plus && m > m_minus {
                thin[i] = m;
            }
        }
    }

    // Hysteresis: flood from strong pixels through weak ones, 8-connected.
    let mut edges = vec![false; w * h];
    let mut stack = Vec::new();
    for (i, &m) in thin.iter().enumerate() {
        if m >= high && !edges[i] {
            edges[i] = true;
            stack.push(i);
            while let Some(j) = stack.pop() {
                let (jx, jy) = ((j % w) as i64, (j / w) as i64);
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        let (nx, ny) = (jx + dx, jy + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let n = ny as usize * w + nx as usize;
                        if !edges[n] && thin[n] >= low {
                            edges[n] = true;
                            stack.push(n);
                        }
                    }
                }
            }
        }
    }
    BinaryMask::new(w, h, edges).expect("same dimensions")
}

/// Pipeline knobs: edge-detector parameters and the mask polarity switch
/// for scenes where the hand is the low-b* region.
#[derive(Debug, Clone, Default)]
pub struct SegmentOptions {
    pub canny: CannyParams,
    pub invert: bool,
}

/// Everything the segmentation stage produces, intermediates included.
#[derive(Debug, Clone)]
pub struct SegmentationResult {
    pub mask: BinaryMask,
    pub masked_gray: GrayImage,
    pub edges: BinaryMask,
    pub threshold: f64,
}

/// Full segmentation chain over one RGB image. See the module docs for the
/// stage order.
pub fn segment_pipeline(image: &RgbImage, options: &SegmentOptions) -> SegmentationResult {
    let lab = rgb_to_lab(image);
    let b = extract_b(&lab);
    let threshold = otsu_threshold(&b);
    let mut mask = binarize(&b, threshold);
    if options.invert {
        mask = mask.complement();
    }
    let mask = dilate(&erode(&mask, &erosion_element()), &dilation_element());
    let masked_gray = map_mask(&rgb_to_gray(image), &mask).expect("pipeline rasters align");
    let edges = canny(&masked_gray, &options.canny);
    SegmentationResult {
        mask,
        masked_gray,
        edges,
        threshold,
    }
}
