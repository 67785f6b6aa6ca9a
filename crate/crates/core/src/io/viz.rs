//! Filter montages.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::io::pnm::write_image;

/// Atoms of a model reshaped for display. Each atom holds `tiles` blocks of
/// `channels * side * side` values (channel-major, then row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank {
    pub side: usize,
    pub channels: usize,
    pub tiles: usize,
    pub atoms: Vec<Vec<f64>>,
}

impl FilterBank {
    pub fn atom_len(&self) -> usize {
        self.tiles * self.channels * self.side * self.side
    }
}

pub const GAP: usize = 1;

/// Tiles every atom into a roughly square grid. Each atom is min-max
/// scaled to `[0, 1]` on its own; a constant atom becomes 0.5. Multi-tile
/// atoms stack their tiles vertically inside one cell.
pub fn montage(bank: &FilterBank) -> Result<Image> {
    let n = bank.atoms.len();
    if n == 0 || bank.side == 0 || bank.tiles == 0 || !(bank.channels == 1 || bank.channels == 3) {
        return Err(Error::config("filter bank is empty or malformed"));
    }
    if let Some(bad) = bank.atoms.iter().position(|a| a.len() != bank.atom_len()) {
        return Err(Error::config(format!(
            "atom {bad} has {} values, expected {}",
            bank.atoms[bad].len(),
            bank.atom_len()
        )));
    }
    let p = bank.side;
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let cell_w = p;
    let cell_h = bank.tiles * p + (bank.tiles - 1) * GAP;
    let width = cols * (cell_w + GAP) + GAP;
    let height = rows * (cell_h + GAP) + GAP;
    let plane = width * height;
    let mut pixels = vec![0.0; plane * bank.channels];
    for (a, atom) in bank.atoms.iter().enumerate() {
        let lo = atom.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = atom.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let scale = |x: f64| if hi > lo { (x - lo) / (hi - lo) } else { 0.5 };
        let x0 = GAP + (a % cols) * (cell_w + GAP);
        let y0 = GAP + (a / cols) * (cell_h + GAP);
        for t in 0..bank.tiles {
            let ty = y0 + t * (p + GAP);
            for c in 0..bank.channels {
                let base = (t * bank.channels + c) * p * p;
                for y in 0..p {
                    for x in 0..p {
                        pixels[c * plane + (ty + y) * width + x0 + x] = scale(atom[base + y * p + x]);
                    }
                }
            }
        }
    }
    Image::new(width, height, bank.channels, pixels)
}

pub fn viz_filters(bank: &FilterBank, out: impl AsRef<Path>) -> Result<Image> {
    let img = montage(bank)?;
    write_image(out, &img)?;
    Ok(img)
}
