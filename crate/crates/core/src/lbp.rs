//! Local binary pattern histograms.
//!
//! Neighbor `k` of a ring with radius `R` and `P` samples sits at
//! `(R cos(2 pi k / P), -R sin(2 pi k / P))` relative to the center and is
//! bilinearly interpolated. Neighbor values at least the center value set
//! their bit (`n_k >= c`); comparisons carry a `1e-9` slack so that values
//! equal up to interpolation rounding count as ties.

use std::collections::HashMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{to_grayscale, Image};

const TIE_SLACK: f64 = 1e-9;
/// Largest sample count for variants whose bin table has `2^P` entries.
pub const MAX_TABLE_SAMPLES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LbpVariant {
    Plain,
    Uniform,
    Ri,
    RiUniform,
}

impl LbpVariant {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "plain" | "lbp" => LbpVariant::Plain,
            "uniform" | "u" => LbpVariant::Uniform,
            "ri" => LbpVariant::Ri,
            "ri-uniform" | "riu" | "riu2" => LbpVariant::RiUniform,
            _ => return Err(Error::config(format!("unknown LBP variant {name:?}"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    pub radius: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LbpConfig {
    pub variant: LbpVariant,
    pub rings: Vec<Ring>,
}

impl LbpConfig {
    pub fn single(variant: LbpVariant, radius: f64, samples: usize) -> Self {
        Self {
            variant,
            rings: vec![Ring { radius, samples }],
        }
    }

    /// Rings (1, 8), (2, 16), (3, 24) with uniform mapping.
    pub fn mlbp() -> Self {
        Self {
            variant: LbpVariant::Uniform,
            rings: vec![
                Ring { radius: 1.0, samples: 8 },
                Ring { radius: 2.0, samples: 16 },
                Ring { radius: 3.0, samples: 24 },
            ],
        }
    }

    pub fn feature_len(&self) -> usize {
        self.rings.iter().map(|r| bin_count(self.variant, r.samples)).sum()
    }
}

/// `sum_k 2^k [n_k >= c]`.
pub fn lbp_code(neighbors: &[f64], center: f64) -> u32 {
    neighbors
        .iter()
        .enumerate()
        .filter(|(_, n)| **n >= center - TIE_SLACK)
        .fold(0u32, |acc, (k, _)| acc | (1 << k))
}

fn rotl(code: u32, r: usize, p: usize) -> u32 {
    let mask = if p == 32 { u32::MAX } else { (1u32 << p) - 1 };
    let r = r % p;
    if r == 0 {
        return code & mask;
    }
    ((code << r) | (code >> (p - r))) & mask
}

/// Number of 0/1 transitions around the circular pattern.
pub fn transitions(code: u32, p: usize) -> u32 {
    (code ^ rotl(code, 1, p)).count_ones()
}

/// Smallest value over all cyclic rotations.
pub fn min_rotation(code: u32, p: usize) -> u32 {
    (0..p).map(|r| rotl(code, r, p)).min().unwrap_or(code)
}

/// Number of binary necklaces of length `p`.
fn necklace_count(p: usize) -> usize {
    fn phi(mut n: usize) -> usize {
        let mut out = n;
        let mut f = 2;
        while f * f <= n {
            if n % f == 0 {
                while n % f == 0 {
                    n /= f;
                }
                out -= out / f;
            }
            f += 1;
        }
        if n > 1 {
            out -= out / n;
        }
        out
    }
    let total: usize = (1..=p).filter(|d| p % d == 0).map(|d| phi(d) << (p / d)).sum();
    total / p
}

pub fn bin_count(variant: LbpVariant, p: usize) -> usize {
    match variant {
        LbpVariant::Plain => 1 << p,
        LbpVariant::Uniform => p * (p - 1) + 3,
        LbpVariant::Ri => necklace_count(p),
        LbpVariant::RiUniform => p + 2,
    }
}

/// Maps raw codes of one ring to histogram bins.
struct BinMap {
    variant: LbpVariant,
    p: usize,
    ri_index: HashMap<u32, usize>,
}

impl BinMap {
    fn new(variant: LbpVariant, p: usize) -> Result<Self> {
        if p < 4 || p > 32 {
            return Err(Error::config(format!("LBP needs 4 <= P <= 32 samples, got {p}")));
        }
        if matches!(variant, LbpVariant::Plain | LbpVariant::Ri) && p > MAX_TABLE_SAMPLES {
            return Err(Error::config(format!(
                "{variant:?} LBP supports at most {MAX_TABLE_SAMPLES} samples"
            )));
        }
        let mut ri_index = HashMap::new();
        if variant == LbpVariant::Ri {
            let mut reps: Vec<u32> = (0..(1u32 << p)).filter(|&c| min_rotation(c, p) == c).collect();
            reps.sort_unstable();
            ri_index = reps.into_iter().enumerate().map(|(i, c)| (c, i)).collect();
        }
        Ok(Self { variant, p, ri_index })
    }

    fn bin(&self, code: u32) -> usize {
        let p = self.p;
        match self.variant {
            LbpVariant::Plain => code as usize,
            LbpVariant::Ri => self.ri_index[&min_rotation(code, p)],
            LbpVariant::RiUniform => {
                if transitions(code, p) <= 2 {
                    code.count_ones() as usize
                } else {
                    p + 1
                }
            }
            LbpVariant::Uniform => {
                let ones = code.count_ones() as usize;
                if transitions(code, p) > 2 {
                    p * (p - 1) + 2
                } else if ones == 0 {
                    0
                } else if ones == p {
                    p * (p - 1) + 1
                } else {
                    // start of the run of ones: a set bit whose predecessor is clear
                    let start = (0..p)
                        .find(|&i| code & (1 << i) != 0 && code & (1 << ((i + p - 1) % p)) == 0)
                        .expect("uniform pattern has a run start");
                    1 + (ones - 1) * p + start
                }
            }
        }
    }
}

/// Ring sample offsets `(dx, dy)`. When `P` is divisible by 4 the first
/// quadrant is computed and the rest obtained by exact quarter turns.
fn ring_offsets(ring: &Ring) -> Vec<(f64, f64)> {
    let p = ring.samples;
    let trig = |k: usize| {
        let t = TAU * k as f64 / p as f64;
        (ring.radius * t.cos(), -ring.radius * t.sin())
    };
    if p % 4 != 0 {
        return (0..p).map(trig).collect();
    }
    let quarter = p / 4;
    (0..p)
        .map(|k| {
            let (mut dx, mut dy) = if k % quarter == 0 { (ring.radius, 0.0) } else { trig(k % quarter) };
            for _ in 0..k / quarter {
                (dx, dy) = (dy, -dx);
            }
            (dx, dy)
        })
        .collect()
}

fn bilinear(img: &Image, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let (fx, fy) = (x - x0, y - y0);
    let (xi, yi) = (x0 as usize, y0 as usize);
    let at = |dx: usize, dy: usize| img.get(xi + dx, yi + dy, 0);
    let top = if fx == 0.0 { at(0, 0) } else { at(0, 0) + fx * (at(1, 0) - at(0, 0)) };
    if fy == 0.0 {
        return top;
    }
    let bottom = if fx == 0.0 { at(0, 1) } else { at(0, 1) + fx * (at(1, 1) - at(0, 1)) };
    top + fy * (bottom - top)
}

/// Normalized histogram for one ring.
pub fn ring_histogram(img: &Image, variant: LbpVariant, ring: &Ring) -> Result<Vec<f64>> {
    if !(ring.radius >= 1.0) {
        return Err(Error::config("LBP radius must be at least 1"));
    }
    let map = BinMap::new(variant, ring.samples)?;
    let gray = to_grayscale(img);
    let margin = ring.radius.ceil() as usize;
    if gray.width() <= 2 * margin || gray.height() <= 2 * margin {
        return Err(Error::sizing(format!(
            "{}x{} image too small for LBP radius {}",
            gray.width(),
            gray.height(),
            ring.radius
        )));
    }
    let offsets = ring_offsets(ring);
    let mut counts = vec![0u64; bin_count(variant, ring.samples)];
    let mut neighbors = vec![0.0; ring.samples];
    for y in margin..gray.height() - margin {
        for x in margin..gray.width() - margin {
            for (n, (dx, dy)) in neighbors.iter_mut().zip(&offsets) {
                *n = bilinear(&gray, x as f64 + dx, y as f64 + dy);
            }
            let code = lbp_code(&neighbors, gray.get(x, y, 0));
            counts[map.bin(code)] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    Ok(counts.iter().map(|c| *c as f64 / total as f64).collect())
}

/// Concatenated per-ring histograms (a single ring is plain LBP; several
/// rings give multi-resolution LBP).
pub fn lbp_histogram(img: &Image, cfg: &LbpConfig) -> Result<Vec<f64>> {
    if cfg.rings.is_empty() {
        return Err(Error::config("LBP needs at least one ring"));
    }
    let mut out = Vec::with_capacity(cfg.feature_len());
    for ring in &cfg.rings {
        out.extend(ring_histogram(img, cfg.variant, ring)?);
    }
    Ok(out)
}
