//! Random-value impulse noise (RVIN) and the modified directional weighted
//! median filter (MDWMF) that removes it.
//!
//! Detection measures, at each pixel, the second-order directional
//! difference along a set of lines through the 5×5 neighbourhood. An
//! impulse differs from its surroundings in *every* direction, while an
//! edge pixel keeps at least one low-variation direction, so the noisy test
//! uses the minimum over lines. Flagged pixels are replaced by a weighted
//! median of the window in which the minimal-variation line (and the
//! centre) count double. The whole filter iterates with decreasing
//! thresholds, detecting each pass against that pass's input snapshot.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::imagecore::GrayImage;

/// Window radius of the 5×5 detection neighbourhood.
pub const WINDOW_RADIUS: i32 = 2;

#[derive(Debug, Error)]
pub enum DenoiseError {
    #[error("noise density {0} is outside [0, 1]")]
    InvalidDensity(f64),
    #[error("direction set is invalid: {0}")]
    InvalidDirections(String),
    #[error("pixel ({0}, {1}) is outside a {2}x{3} image")]
    OutOfBounds(usize, usize, usize, usize),
    #[error("difference list is empty")]
    EmptyDiffs,
    #[error("values ({0}) and weights ({1}) differ in length or are empty")]
    LengthMismatch(usize, usize),
    #[error("weights must be positive")]
    NonPositiveWeight,
    #[error("thresholds must be nonempty and positive")]
    InvalidThresholds,
    #[error("direction weight must be positive")]
    InvalidWeight,
    #[error("cannot parse config: {0}")]
    ConfigParse(String),
}

/// One direction line: the set of window offsets `(dr, dc)` lying on a
/// straight line through the centre, antipodally closed (contains
/// `(-dr, -dc)` whenever it contains `(dr, dc)`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectionLine {
    offsets: Vec<(i32, i32)>,
}

impl DirectionLine {
    pub fn offsets(&self) -> &[(i32, i32)] {
        &self.offsets
    }

    /// One representative offset per antipodal pair (`dr > 0`, or `dr == 0`
    /// and `dc > 0`).
    pub fn pairs(&self) -> impl Iterator<Item = (i32, i32)> + '_ {
        self.offsets
            .iter()
            .copied()
            .filter(|&(dr, dc)| dr > 0 || (dr == 0 && dc > 0))
    }

    pub fn contains(&self, offset: (i32, i32)) -> bool {
        self.offsets.contains(&offset)
    }
}

/// Ordered collection of disjoint direction lines covering (part of) the
/// 5×5 neighbourhood.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectionSet {
    lines: Vec<DirectionLine>,
}

impl DirectionSet {
    /// Builds a direction set from explicit offset lists, validating the
    /// window bound, antipodal closure and pairwise disjointness.
    pub fn new(lines: Vec<Vec<(i32, i32)>>) -> Result<Self, DenoiseError> {
        if lines.is_empty() {
            return Err(DenoiseError::InvalidDirections("no lines".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for line in &lines {
            if line.is_empty() {
                return Err(DenoiseError::InvalidDirections("empty line".into()));
            }
            for &(dr, dc) in line {
                if (dr, dc) == (0, 0) || dr.abs() > WINDOW_RADIUS || dc.abs() > WINDOW_RADIUS {
                    return Err(DenoiseError::InvalidDirections(format!(
                        "offset ({dr}, {dc}) outside the window"
                    )));
                }
                if !line.contains(&(-dr, -dc)) {
                    return Err(DenoiseError::InvalidDirections(format!(
                        "offset ({dr}, {dc}) lacks its antipode"
                    )));
                }
                if !seen.insert((dr, dc)) {
                    return Err(DenoiseError::InvalidDirections(format!(
                        "offset ({dr}, {dc}) appears in two lines"
                    )));
                }
            }
        }
        Ok(Self {
            lines: lines
                .into_iter()
                .map(|offsets| DirectionLine { offsets })
                .collect(),
        })
    }

    pub fn lines(&self) -> &[DirectionLine] {
        &self.lines
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }
}

/// The default direction set: the 12 antipodal pairs of the 5×5 window,
/// one line per pair. Ordered by primitive direction — (0,1), (1,0),
/// (1,1), (1,−1), (1,2), (2,1), (1,−2), (2,−1) — with the in-window
/// multiple following its primitive.
pub fn default_directions() -> DirectionSet {
    let pairs: [(i32, i32); 12] = [
        (0, 1),
        (0, 2),
        (1, 0),
        (2, 0),
        (1, 1),
        (2, 2),
        (1, -1),
        (2, -2),
        (1, 2),
        (2, 1),
        (1, -2),
        (2, -1),
    ];
    DirectionSet::new(
        pairs
            .iter()
            .map(|&(dr, dc)| vec![(dr, dc), (-dr, -dc)])
            .collect(),
    )
    .expect("built-in pairs are valid")
}

/// Coarser alternative: the 8 geometric lines of the window, grouping each
/// primitive direction with its in-window multiples (the horizontal line
/// is {(0,1), (0,2), (0,−1), (0,−2)}, and so on).
pub fn collinear_directions() -> DirectionSet {
    let groups: [&[(i32, i32)]; 8] = [
        &[(0, 1), (0, 2)],
        &[(1, 0), (2, 0)],
        &[(1, 1), (2, 2)],
        &[(1, -1), (2, -2)],
        &[(1, 2)],
        &[(2, 1)],
        &[(1, -2)],
        &[(2, -1)],
    ];
    DirectionSet::new(
        groups
            .iter()
            .map(|g| {
                g.iter()
                    .flat_map(|&(dr, dc)| [(dr, dc), (-dr, -dc)])
                    .collect()
            })
            .collect(),
    )
    .expect("built-in lines are valid")
}

/// Filter configuration: one detection threshold per iteration, the weight
/// granted to the minimal-variation line, and the direction geometry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MdwmfConfig {
    thresholds: Vec<u32>,
    weight: u32,
    directions: DirectionSet,
}

impl MdwmfConfig {
    pub fn new(
        thresholds: Vec<u32>,
        weight: u32,
        directions: DirectionSet,
    ) -> Result<Self, DenoiseError> {
        if thresholds.is_empty() || thresholds.iter().any(|&t| t == 0) {
            return Err(DenoiseError::InvalidThresholds);
        }
        if weight == 0 {
            return Err(DenoiseError::InvalidWeight);
        }
        Ok(Self {
            thresholds,
            weight,
            directions,
        })
    }

    pub fn thresholds(&self) -> &[u32] {
        &self.thresholds
    }

    pub fn weight(&self) -> u32 {
        self.weight
    }

    pub fn directions(&self) -> &DirectionSet {
        &self.directions
    }
}

impl Default for MdwmfConfig {
    /// Three iterations with thresholds [33, 23, 16] and weight 2.
    fn default() -> Self {
        Self::new(vec![33, 23, 16], 2, default_directions()).expect("defaults are valid")
    }
}

/// Plain key/value text: `thresholds=33,23,16` and `weight=2`, one per line.
impl fmt::Display for MdwmfConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ts: Vec<String> = self.thresholds.iter().map(|t| t.to_string()).collect();
        writeln!(f, "thresholds={}", ts.join(","))?;
        writeln!(f, "weight={}", self.weight)
    }
}

impl FromStr for MdwmfConfig {
    type Err = DenoiseError;

    /// Parses the key/value form written by `Display`. Unknown keys are
    /// ignored; the direction set is always the default.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut thresholds = vec![33, 23, 16];
        let mut weight = 2;
        for line in s.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| DenoiseError::ConfigParse(format!("missing '=' in {line:?}")))?;
            match key.trim() {
                "thresholds" => {
                    thresholds = value
                        .split(',')
                        .map(|t| t.trim().parse::<u32>())
                        .collect::<Result<_, _>>()
                        .map_err(|e| DenoiseError::ConfigParse(e.to_string()))?;
                }
                "weight" => {
                    weight = value
                        .trim()
                        .parse()
                        .map_err(|e: std::num::ParseIntError| {
                            DenoiseError::ConfigParse(e.to_string())
                        })?;
                }
                _ => {}
            }
        }
        Self::new(thresholds, weight, default_directions())
    }
}

/// Replaces each pixel, independently with probability `density`, by a
/// value drawn uniformly from [0, 255]. Returns the corrupted image and the
/// number of replaced positions (a redraw that happens to equal the
/// original still counts). Bit-reproducible for a fixed seed.
pub fn inject_rvin(
    image: &GrayImage,
    density: f64,
    seed: u64,
) -> Result<(GrayImage, usize), DenoiseError> {
    if !density.is_finite() || !(0.0..=1.0).contains(&density) {
        return Err(DenoiseError::InvalidDensity(density));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = image.data().to_vec();
    let mut corrupted = 0usize;
    for v in data.iter_mut() {
        if rng.gen::<f64>() < density {
            *v = rng.gen_range(0..=255u8);
            corrupted += 1;
        }
    }
    Ok((
        GrayImage::new(image.width(), image.height(), data).expect("same dimensions"),
        corrupted,
    ))
}

/// Second-order directional differences at `(x, y)`: for every line, the
/// sum over its antipodal pairs of |I(y+dr, x+dc) + I(y−dr, x−dc) − 2·I(y, x)|.
/// Neighbours outside the image replicate the border.
pub fn directional_differences(
    image: &GrayImage,
    x: usize,
    y: usize,
    dirs: &DirectionSet,
) -> Result<Vec<u32>, DenoiseError> {
    if x >= image.width() || y >= image.height() {
        return Err(DenoiseError::OutOfBounds(
            x,
            y,
            image.width(),
            image.height(),
        ));
    }
    Ok(diffs_at(image, x as i64, y as i64, dirs))
}

#[inline]
fn diffs_at(image: &GrayImage, x: i64, y: i64, dirs: &DirectionSet) -> Vec<u32> {
    let center = 2 * image.get_clamped(x, y) as i32;
    dirs.lines()
        .iter()
        .map(|line| {
            line.pairs()
                .map(|(dr, dc)| {
                    let a = image.get_clamped(x + dc as i64, y + dr as i64) as i32;
                    let b = image.get_clamped(x - dc as i64, y - dr as i64) as i32;
                    (a + b - center).unsigned_abs()
                })
                .sum()
        })
        .collect()
}

/// Noisy test: true iff the *minimum* directional difference exceeds the
/// threshold. An edge keeps one quiet direction; an impulse has none.
pub fn is_noisy(diffs: &[u32], threshold: u32) -> Result<bool, DenoiseError> {
    let min = diffs.iter().min().ok_or(DenoiseError::EmptyDiffs)?;
    Ok(*min > threshold)
}

/// Lower weighted median: sort value/weight pairs by value and return the
/// smallest value whose cumulative weight reaches half the total.
/// Equivalent to the lower median of the weight-replicated multiset.
pub fn weighted_median(values: &[u8], weights: &[u32]) -> Result<u8, DenoiseError> {
    if values.is_empty() || values.len() != weights.len() {
        return Err(DenoiseError::LengthMismatch(values.len(), weights.len()));
    }
    if weights.iter().any(|&w| w == 0) {
        return Err(DenoiseError::NonPositiveWeight);
    }
    let mut pairs: Vec<(u8, u32)> = values.iter().copied().zip(weights.iter().copied()).collect();
    pairs.sort_by_key(|&(v, _)| v);
    let total: u64 = weights.iter().map(|&w| w as u64).sum();
    let mut cumulative = 0u64;
    for (v, w) in pairs {
        cumulative += w as u64;
        if 2 * cumulative >= total {
            return Ok(v);
        }
    }
    unreachable!("cumulative weight reaches the total");
}

/// Runs the full multi-iteration filter. See [`mdwmf_with_stats`] for the
/// per-iteration changed-pixel counts.
pub fn mdwmf(image: &GrayImage, config: &MdwmfConfig) -> GrayImage {
    mdwmf_with_stats(image, config).0
}

/// One pass per configured threshold: detection statistics are computed
/// against that pass's input snapshot (no within-pass feedback), flagged
/// pixels are replaced by the weighted median of their 5×5 window with the
/// minimal-difference line and the centre weighted by `config.weight()`.
/// Returns the filtered image and, per iteration, how many pixels changed
/// value.
pub fn mdwmf_with_stats(image: &GrayImage, config: &MdwmfConfig) -> (GrayImage, Vec<usize>) {
    let width = image.width();
    let height = image.height();
    let dirs = config.directions();
    let weight = config.weight();

    let mut current = image.clone();
    let mut changed_per_iteration = Vec::with_capacity(config.thresholds().len());

    for &threshold in config.thresholds() {
        let snapshot = current;
        let mut out = snapshot.data().to_vec();
        out.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
            for (x, slot) in row.iter_mut().enumerate() {
                let diffs = diffs_at(&snapshot, x as i64, y as i64, dirs);
                let min = *diffs.iter().min().expect("direction set is nonempty");
                if min <= threshold {
                    continue;
                }
                let argmin = diffs.iter().position(|&d| d == min).expect("nonempty");
                let line = &dirs.lines()[argmin];
                let mut values = [0u8; 25];
                let mut weights = [1u32; 25];
                let mut n = 0;
                for dr in -WINDOW_RADIUS..=WINDOW_RADIUS {
                    for dc in -WINDOW_RADIUS..=WINDOW_RADIUS {
                        values[n] = snapshot.get_clamped(x as i64 + dc as i64, y as i64 + dr as i64);
                        if (dr, dc) == (0, 0) || line.contains((dr, dc)) {
                            weights[n] = weight;
                        }
                        n += 1;
                    }
                }
                *slot = weighted_median(&values, &weights).expect("window is nonempty");
            }
        });
        let changed = out
            .iter()
            .zip(snapshot.data())
            .filter(|(a, b)| a != b)
            .count();
        changed_per_iteration.push(changed);
        current = GrayImage::new(width, height, out).expect("same dimensions");
    }
    (current, changed_per_iteration)
}
