//! Seeded missingness generators: exact-count MCAR and bottom-right image
//! corner deletion.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::MaskedMatrix;
use crate::error::{Error, Result};

/// `n × p` indicator, `true` where an entry is missing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MissingMask(DMatrix<bool>);

impl MissingMask {
    pub fn new(bits: DMatrix<bool>) -> Self {
        Self(bits)
    }

    pub fn none(n: usize, p: usize) -> Self {
        Self(DMatrix::from_element(n, p, false))
    }

    /// Missing positions of a masked matrix.
    pub fn of(x: &MaskedMatrix) -> Self {
        Self(x.mask().map(|o| !o))
    }

    pub fn bits(&self) -> &DMatrix<bool> {
        &self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    #[inline]
    pub fn is_missing(&self, i: usize, j: usize) -> bool {
        self.0[(i, j)]
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    /// Missing `(row, col)` positions in row-major order.
    pub fn positions(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.count());
        for i in 0..self.nrows() {
            for j in 0..self.ncols() {
                if self.0[(i, j)] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Hide the masked entries of a complete matrix.
    pub fn apply(&self, complete: &DMatrix<f64>) -> Result<MaskedMatrix> {
        if complete.shape() != self.0.shape() {
            return Err(Error::Dimension(format!(
                "mask is {:?}, data is {:?}",
                self.0.shape(),
                complete.shape()
            )));
        }
        MaskedMatrix::new(complete.clone(), self.0.map(|m| !m))
    }

    pub fn is_subset_of(&self, other: &MissingMask) -> bool {
        self.0.shape() == other.0.shape() && self.0.iter().zip(other.0.iter()).all(|(&a, &b)| !a || b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaskSpec {
    Mcar {
        rate: f64,
        seed: u64,
    },
    MonotoneCorner {
        fraction: f64,
        image_height: usize,
        image_width: usize,
        #[serde(default = "default_share")]
        affected_share: f64,
        seed: u64,
    },
}

fn default_share() -> f64 {
    0.5
}

impl MaskSpec {
    pub fn generate(&self, n: usize, p: usize) -> Result<MissingMask> {
        match *self {
            MaskSpec::Mcar { rate, seed } => mcar_mask(n, p, rate, seed),
            MaskSpec::MonotoneCorner {
                fraction,
                image_height,
                image_width,
                affected_share,
                seed,
            } => {
                if image_height * image_width != p {
                    return Err(Error::Dimension(format!(
                        "image {image_height}x{image_width} does not have {p} pixels"
                    )));
                }
                monotone_corner_mask(n, image_height, image_width, fraction, affected_share, seed)
            }
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            MaskSpec::Mcar { seed, .. } | MaskSpec::MonotoneCorner { seed, .. } => *seed,
        }
    }

    pub fn with_seed(&self, new_seed: u64) -> Self {
        let mut s = self.clone();
        match &mut s {
            MaskSpec::Mcar { seed, .. } | MaskSpec::MonotoneCorner { seed, .. } => *seed = new_seed,
        }
        s
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
    }
}

/// Exactly `round(rate·n·p)` missing entries chosen by a seeded shuffle.
///
/// Afterwards every column keeps at least one observed entry: a fully
/// missing column has one random entry restored, and a random observed entry
/// of a column with at least two observations is removed instead.
pub fn mcar_mask(n: usize, p: usize, rate: f64, seed: u64) -> Result<MissingMask> {
    check_unit("rate", rate)?;
    let total = n * p;
    let count = (rate * total as f64).round() as usize;
    if count == 0 {
        return Ok(MissingMask::none(n, p));
    }
    if count > total - p {
        return Err(Error::Generation(format!(
            "{count} missing entries of {total} would leave some of the {p} columns unobserved"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions: Vec<usize> = (0..total).collect();
    positions.shuffle(&mut rng);
    let mut bits = DMatrix::from_element(n, p, false);
    // positions are row-major: idx = i·p + j
    for &idx in &positions[..count] {
        bits[(idx / p, idx % p)] = true;
    }

    let observed_in = |bits: &DMatrix<bool>, j: usize| (0..n).filter(|&i| !bits[(i, j)]).count();
    for j in 0..p {
        if observed_in(&bits, j) > 0 {
            continue;
        }
        let donors: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (0..p).map(move |c| (i, c)))
            .filter(|&(i, c)| c != j && !bits[(i, c)] && observed_in(&bits, c) >= 2)
            .collect();
        // count <= total - p guarantees a donor exists
        let (di, dc) = donors[rng.random_range(0..donors.len())];
        let restore = rng.random_range(0..n);
        bits[(restore, j)] = false;
        bits[(di, dc)] = true;
    }
    Ok(MissingMask(bits))
}

/// Delete the bottom-right `floor(r·h) × floor(r·w)` pixel rectangle in a
/// seeded sample of `round(affected_share·n)` images (pixels stored row-major).
pub fn monotone_corner_mask(
    n: usize,
    height: usize,
    width: usize,
    fraction: f64,
    affected_share: f64,
    seed: u64,
) -> Result<MissingMask> {
    check_unit("fraction", fraction)?;
    check_unit("affected_share", affected_share)?;
    if height == 0 || width == 0 {
        return Err(Error::Config("image dimensions must be positive".into()));
    }
    let p = height * width;
    let mut bits = DMatrix::from_element(n, p, false);
    let affected = ((affected_share * n as f64).round() as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = sample(&mut rng, n, affected);
    let dh = (fraction * height as f64).floor() as usize;
    let dw = (fraction * width as f64).floor() as usize;
    for i in rows.iter() {
        for r in (height - dh)..height {
            for c in (width - dw)..width {
                bits[(i, r * width + c)] = true;
            }
        }
    }
    Ok(MissingMask(bits))
}
