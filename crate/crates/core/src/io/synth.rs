//! Procedural texture corpus used as a stand-in for real material datasets.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::io::dataset::{Item, LabeledDataset, Split, MANIFEST_FILE};
use crate::io::pnm::encode_pnm;
use crate::rng::{derive, seeded, Rng};

/// Training and test scale ranges of the disjoint-scale regime.
pub const DISJOINT_TRAIN_SCALES: (f64, f64) = (1.0, 1.3);
pub const DISJOINT_TEST_SCALES: (f64, f64) = (1.5, 2.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Texture {
    /// Oriented sinusoid with `period` pixels and orientation `angle` (degrees).
    Sinusoid { period: f64, angle: f64 },
    /// Gaussian blobs of `radius` pixels, `density` blobs per 100 square pixels.
    Blobs { radius: f64, density: f64 },
    /// Checkerboard with squares of `period` pixels.
    Checker { period: f64 },
}

impl Texture {
    /// Family of class `k`: families cycle, parameters change with each cycle.
    pub fn for_class(k: usize) -> Texture {
        let round = (k / 3) as f64;
        match k % 3 {
            0 => Texture::Sinusoid {
                period: 5.0 + 3.0 * round,
                angle: (40.0 * k as f64) % 180.0,
            },
            1 => Texture::Blobs {
                radius: 1.5 + round,
                density: 2.0,
            },
            _ => Texture::Checker { period: 3.0 + 2.0 * round },
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            Texture::Sinusoid { .. } => "sinusoid",
            Texture::Blobs { .. } => "blobs",
            Texture::Checker { .. } => "checker",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Jitter {
    pub scale: (f64, f64),
    /// Degrees.
    pub rotation: (f64, f64),
    pub brightness: (f64, f64),
    /// Standard deviation of additive pixel noise.
    pub noise: f64,
}

impl Default for Jitter {
    fn default() -> Self {
        Self {
            scale: (0.8, 1.25),
            rotation: (-15.0, 15.0),
            brightness: (-0.1, 0.1),
            noise: 0.03,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub classes: usize,
    /// Class `k` uses texture `k + class_offset` unless `textures` is set.
    pub class_offset: usize,
    pub textures: Option<Vec<Texture>>,
    pub side: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub jitter: Jitter,
    /// Training images draw scales from one range, test images from a
    /// disjoint larger one.
    pub disjoint_scale: bool,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: 4,
            class_offset: 0,
            textures: None,
            side: 48,
            train_per_class: 50,
            test_per_class: 50,
            jitter: Jitter::default(),
            disjoint_scale: false,
            seed: 0,
        }
    }
}

fn check_range(name: &str, r: (f64, f64)) -> Result<()> {
    if !(r.0.is_finite() && r.1.is_finite() && r.0 <= r.1) {
        return Err(Error::config(format!("{name} range {r:?} is invalid")));
    }
    Ok(())
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::config("a corpus needs at least two classes"));
        }
        if self.side < 8 {
            return Err(Error::config("image side must be at least 8"));
        }
        if self.train_per_class == 0 || self.test_per_class == 0 {
            return Err(Error::config("each split needs at least one image per class"));
        }
        if let Some(t) = &self.textures {
            if t.len() != self.classes {
                return Err(Error::config(format!("{} textures for {} classes", t.len(), self.classes)));
            }
        }
        check_range("scale", self.jitter.scale)?;
        check_range("rotation", self.jitter.rotation)?;
        check_range("brightness", self.jitter.brightness)?;
        if self.jitter.scale.0 <= 0.0 || !(self.jitter.noise >= 0.0) {
            return Err(Error::config("scales must be positive and noise nonnegative"));
        }
        Ok(())
    }

    pub fn texture(&self, class: usize) -> Texture {
        match &self.textures {
            Some(t) => t[class],
            None => Texture::for_class(class + self.class_offset),
        }
    }

    pub fn scale_range(&self, split: Split) -> (f64, f64) {
        match (self.disjoint_scale, split) {
            (false, _) => self.jitter.scale,
            (true, Split::Train) => DISJOINT_TRAIN_SCALES,
            (true, Split::Test) => DISJOINT_TEST_SCALES,
        }
    }

    pub fn class_name(&self, class: usize) -> String {
        format!("c{class}-{}", self.texture(class).family())
    }
}

fn uniform(rng: &mut Rng, r: (f64, f64), half_open: bool) -> f64 {
    if r.0 == r.1 {
        r.0
    } else if half_open {
        rng.random_range(r.0..r.1)
    } else {
        rng.random_range(r.0..=r.1)
    }
}

/// Renders one texture image at the given jitter values.
pub fn render(texture: &Texture, side: usize, scale: f64, rotation_deg: f64, brightness: f64, noise: f64, rng: &mut Rng) -> Image {
    let phase_x: f64 = rng.random_range(0.0..64.0);
    let phase_y: f64 = rng.random_range(0.0..64.0);
    let (sin_r, cos_r) = (rotation_deg * PI / 180.0).sin_cos();
    let frame = |x: usize, y: usize| -> (f64, f64) {
        let (x, y) = (x as f64, y as f64);
        (
            (cos_r * x - sin_r * y) / scale + phase_x,
            (sin_r * x + cos_r * y) / scale + phase_y,
        )
    };
    let blobs: Vec<(f64, f64)> = match texture {
        Texture::Blobs { density, .. } => {
            // blob centers in texture coordinates, covering the rotated frame
            let extent = side as f64 * 1.5 / scale + 8.0;
            let area = (2.0 * extent) * (2.0 * extent);
            let count = (area * density / 100.0).round() as usize;
            (0..count)
                .map(|_| {
                    (
                        phase_x + rng.random_range(-extent..extent),
                        phase_y + rng.random_range(-extent..extent),
                    )
                })
                .collect()
        }
        _ => Vec::new(),
    };
    let normal = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).unwrap();
    let mut values = vec![0.0; side * side];
    for y in 0..side {
        for x in 0..side {
            let (u, v) = frame(x, y);
            let base = match *texture {
                Texture::Sinusoid { period, angle } => {
                    let a = angle * PI / 180.0;
                    0.5 + 0.35 * (2.0 * PI * (u * a.cos() + v * a.sin()) / period).sin()
                }
                Texture::Blobs { radius, .. } => {
                    let s: f64 = blobs
                        .iter()
                        .map(|&(bx, by)| {
                            let d2 = (u - bx).powi(2) + (v - by).powi(2);
                            if d2 > 16.0 * radius * radius {
                                0.0
                            } else {
                                (-d2 / (2.0 * radius * radius)).exp()
                            }
                        })
                        .sum();
                    0.2 + 0.6 * s.min(1.0)
                }
                Texture::Checker { period } => {
                    let parity = ((u / period).floor() + (v / period).floor()).rem_euclid(2.0);
                    0.25 + 0.5 * parity
                }
            };
            let n = if noise > 0.0 { normal.sample(rng) } else { 0.0 };
            values[y * side + x] = base + brightness + n;
        }
    }
    Image::from_fn(side, side, |x, y| values[y * side + x])
}

/// Renders every image of the corpus in memory, in manifest order.
pub fn synth_images(spec: &SynthSpec) -> Result<(LabeledDataset, Vec<Image>)> {
    spec.validate()?;
    let mut jobs = Vec::new();
    for split in [Split::Train, Split::Test] {
        let per = match split {
            Split::Train => spec.train_per_class,
            Split::Test => spec.test_per_class,
        };
        for class in 0..spec.classes {
            for i in 0..per {
                jobs.push((split, class, i));
            }
        }
    }
    let rendered: Vec<(Item, Image)> = jobs
        .par_iter()
        .enumerate()
        .map(|(j, &(split, class, i))| {
            let mut rng = seeded(derive(spec.seed, j as u64));
            let scale = uniform(&mut rng, spec.scale_range(split), spec.disjoint_scale && split == Split::Train);
            let rotation = uniform(&mut rng, spec.jitter.rotation, false);
            let brightness = uniform(&mut rng, spec.jitter.brightness, false);
            let img = render(&spec.texture(class), spec.side, scale, rotation, brightness, spec.jitter.noise, &mut rng);
            // quantize so the in-memory corpus equals the one on disk
            let img = Image::from_fn(spec.side, spec.side, |x, y| (img.get(x, y, 0) * 255.0).round() / 255.0);
            let item = Item {
                path: format!("{}/{}/{i:04}.pgm", split.name(), spec.class_name(class)).into(),
                class,
                instance: None,
                scale: None,
                scale_factor: Some(scale),
                split,
            };
            (item, img)
        })
        .collect();
    let (items, images) = rendered.into_iter().unzip();
    let ds = LabeledDataset {
        root: Default::default(),
        classes: (0..spec.classes).map(|k| spec.class_name(k)).collect(),
        items,
        provenance: serde_json::json!({ "synth": spec }),
    };
    Ok((ds, images))
}

/// Writes the corpus under `out` with a manifest and returns it.
pub fn synth_generate(spec: &SynthSpec, out: impl AsRef<Path>) -> Result<LabeledDataset> {
    let out = out.as_ref();
    let (mut ds, images) = synth_images(spec)?;
    for (item, img) in ds.items.iter().zip(&images) {
        let path = out.join(&item.path);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, encode_pnm(img))?;
    }
    ds.root = out.to_path_buf();
    ds.save_manifest(out.join(MANIFEST_FILE))?;
    Ok(ds)
}
