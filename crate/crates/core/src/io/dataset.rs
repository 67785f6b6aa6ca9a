//! Labeled image collections and the directory layouts they are read from.
//!
//! * `kth-tips2`: `root/<class>/<sample_x>/<file>`; the sample directory
//!   gives the instance (`sample_a` is 1, or a trailing number) and the
//!   file name carries `scale_<n>`.
//! * `fmd`: `root/<class>/<file>` (an `image/` subdirectory is entered
//!   when present); each class is split in half with a seeded shuffle.
//! * `flat`: `root/{train,test}/<class>/<file>`.
//! * `manifest`: a `manifest.json` written by this crate.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::io::pnm::{is_image_file, read_image};
use crate::rng::{derive, seeded};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::config(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    KthTips2,
    Fmd,
    Flat,
    Manifest,
}

impl Layout {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "kth-tips2" | "kth" => Ok(Layout::KthTips2),
            "fmd" => Ok(Layout::Fmd),
            "flat" => Ok(Layout::Flat),
            "manifest" => Ok(Layout::Manifest),
            other => Err(Error::config(format!("unknown dataset layout '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Item {
    /// Relative to the dataset root.
    pub path: PathBuf,
    pub class: usize,
    #[serde(default)]
    pub instance: Option<u32>,
    /// Scale index 1..=9.
    #[serde(default)]
    pub scale: Option<u8>,
    /// Continuous scale factor of synthetic images.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_factor: Option<f64>,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    #[serde(skip)]
    pub root: PathBuf,
    pub classes: Vec<String>,
    pub items: Vec<Item>,
    /// Free-form description of how the dataset was produced.
    #[serde(default)]
    pub provenance: serde_json::Value,
}

/// How items are assigned to splits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitPolicy {
    /// KTH-TIPS2 instances placed in the training split.
    pub train_instances: Vec<u32>,
    /// Seed of the per-class shuffle for the `fmd` layout.
    pub seed: u64,
}

impl Default for SplitPolicy {
    fn default() -> Self {
        Self {
            train_instances: vec![1, 2],
            seed: 0,
        }
    }
}

impl LabeledDataset {
    pub fn split(&self, split: Split) -> Vec<&Item> {
        self.items.iter().filter(|i| i.split == split).collect()
    }

    pub fn labels(&self, split: Split) -> Vec<usize> {
        self.split(split).iter().map(|i| i.class).collect()
    }

    pub fn path_of(&self, item: &Item) -> PathBuf {
        self.root.join(&item.path)
    }

    /// Reads the images of `split` in manifest order.
    pub fn load_images(&self, split: Split) -> Result<Vec<Image>> {
        self.split(split)
            .par_iter()
            .map(|item| read_image(self.path_of(item)))
            .collect()
    }

    pub fn class_counts(&self, split: Split) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for item in self.split(split) {
            counts[item.class] += 1;
        }
        counts
    }

    /// Keeps only training items whose scale index is listed; the test
    /// split is untouched.
    pub fn filter_train_scales(&mut self, scales: &[u8]) {
        self.items
            .retain(|i| i.split == Split::Test || i.scale.is_some_and(|s| scales.contains(&s)));
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.classes.len();
        if k == 0 {
            return Err(Error::config("dataset has no classes"));
        }
        for item in &self.items {
            if item.class >= k {
                return Err(Error::config(format!(
                    "{} has class {} but there are {k} classes",
                    item.path.display(),
                    item.class
                )));
            }
            if let Some(s) = item.scale {
                if !(1..=9).contains(&s) {
                    return Err(Error::config(format!("{} has scale {s}", item.path.display())));
                }
            }
        }
        Ok(())
    }

    pub fn save_manifest(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Reads a manifest; item paths resolve against its directory.
    pub fn load_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut ds: LabeledDataset = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        ds.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        ds.validate()?;
        Ok(ds)
    }
}

fn layout_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Layout {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

fn visible_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| layout_err(dir, e.to_string()))?;
    let mut out: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| !p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.')))
        .collect();
    out.sort();
    Ok(out)
}

fn subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = visible_entries(dir)?;
    for e in &entries {
        if !e.is_dir() {
            return Err(layout_err(e, "expected a directory"));
        }
    }
    Ok(entries)
}

fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = visible_entries(dir)?;
    for e in &entries {
        if !e.is_file() || !is_image_file(e) {
            return Err(layout_err(e, "expected an image file"));
        }
    }
    if entries.is_empty() {
        return Err(layout_err(dir, "no images"));
    }
    Ok(entries)
}

fn name_of(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// `scale_<n>` inside a file name.
pub fn parse_scale(name: &str) -> Option<u8> {
    let rest = &name[name.find("scale_")? + 6..];
    let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
    digits.parse().ok().filter(|s| (1..=9).contains(s))
}

/// Instance number of a KTH-TIPS2 sample directory.
pub fn parse_instance(name: &str) -> Option<u32> {
    let digits: String = name.chars().rev().take_while(char::is_ascii_digit).collect();
    if !digits.is_empty() {
        return digits.chars().rev().collect::<String>().parse().ok();
    }
    let last = name.chars().last()?.to_ascii_lowercase();
    let stem = name.strip_suffix(|c: char| c.is_ascii_alphabetic())?;
    (stem.ends_with('_') && last.is_ascii_lowercase()).then(|| last as u32 - 'a' as u32 + 1)
}

fn relative(root: &Path, path: &Path) -> PathBuf {
    path.strip_prefix(root).unwrap_or(path).to_path_buf()
}

fn load_kth(root: &Path, policy: &SplitPolicy) -> Result<(Vec<String>, Vec<Item>)> {
    let mut classes = Vec::new();
    let mut items = Vec::new();
    for (class, cdir) in subdirs(root)?.into_iter().enumerate() {
        classes.push(name_of(&cdir));
        let samples = subdirs(&cdir)?;
        if samples.is_empty() {
            return Err(layout_err(&cdir, "class has no sample directories"));
        }
        for sdir in samples {
            let instance = parse_instance(&name_of(&sdir))
                .ok_or_else(|| layout_err(&sdir, "cannot read an instance number from the directory name"))?;
            let split = if policy.train_instances.contains(&instance) {
                Split::Train
            } else {
                Split::Test
            };
            for f in image_files(&sdir)? {
                items.push(Item {
                    scale: parse_scale(&name_of(&f)),
                    path: relative(root, &f),
                    class,
                    instance: Some(instance),
                    scale_factor: None,
                    split,
                });
            }
        }
    }
    Ok((classes, items))
}

fn load_fmd(root: &Path, policy: &SplitPolicy) -> Result<(Vec<String>, Vec<Item>)> {
    let base = if root.join("image").is_dir() {
        root.join("image")
    } else {
        root.to_path_buf()
    };
    let mut classes = Vec::new();
    let mut items = Vec::new();
    for (class, cdir) in subdirs(&base)?.into_iter().enumerate() {
        classes.push(name_of(&cdir));
        let files = image_files(&cdir)?;
        let mut order: Vec<usize> = (0..files.len()).collect();
        order.shuffle(&mut seeded(derive(policy.seed, class as u64)));
        let mut split = vec![Split::Test; files.len()];
        for &i in &order[..files.len() / 2] {
            split[i] = Split::Train;
        }
        for (f, s) in files.iter().zip(split) {
            items.push(Item {
                path: relative(root, f),
                class,
                instance: None,
                scale: parse_scale(&name_of(f)),
                scale_factor: None,
                split: s,
            });
        }
    }
    Ok((classes, items))
}

fn load_flat(root: &Path) -> Result<(Vec<String>, Vec<Item>)> {
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut found = Vec::new();
    for split in [Split::Train, Split::Test] {
        let sdir = root.join(split.name());
        if !sdir.is_dir() {
            return Err(layout_err(&sdir, "missing split directory"));
        }
        for cdir in subdirs(&sdir)? {
            let name = name_of(&cdir);
            let n = index.len();
            index.entry(name.clone()).or_insert(n);
            for f in image_files(&cdir)? {
                found.push((name.clone(), f, split));
            }
        }
    }
    // class ids follow sorted names regardless of discovery order
    let classes: Vec<String> = index.keys().cloned().collect();
    let items = found
        .into_iter()
        .map(|(name, f, split)| Item {
            class: classes.binary_search(&name).unwrap(),
            scale: parse_scale(&name_of(&f)),
            path: relative(root, &f),
            instance: None,
            scale_factor: None,
            split,
        })
        .collect();
    Ok((classes, items))
}

/// Reads a dataset tree. A scale filter keeps only the listed scale
/// indices in the training split.
pub fn load_dataset(
    root: impl AsRef<Path>,
    layout: Layout,
    policy: &SplitPolicy,
    scale_filter: Option<&[u8]>,
) -> Result<LabeledDataset> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(layout_err(root, "dataset root is not a directory"));
    }
    let mut ds = match layout {
        Layout::Manifest => LabeledDataset::load_manifest(root.join(MANIFEST_FILE))?,
        _ => {
            let (classes, items) = match layout {
                Layout::KthTips2 => load_kth(root, policy)?,
                Layout::Fmd => load_fmd(root, policy)?,
                _ => load_flat(root)?,
            };
            if classes.is_empty() {
                return Err(layout_err(root, "no class directories"));
            }
            LabeledDataset {
                root: root.to_path_buf(),
                classes,
                items,
                provenance: serde_json::json!({ "layout": layout, "policy": policy }),
            }
        }
    };
    if let Some(scales) = scale_filter {
        ds.filter_train_scales(scales);
    }
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::pnm::write_image;

    fn touch(path: &Path) {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        write_image(path, &Image::constant(4, 4, 1, 0.5)).unwrap();
    }

    #[test]
    fn name_parsing() {
        assert_eq!(parse_scale("15a-scale_3_im_1_col.png"), Some(3));
        assert_eq!(parse_scale("scale_10.pgm"), None);
        assert_eq!(parse_scale("plain.pgm"), None);
        assert_eq!(parse_instance("sample_a"), Some(1));
        assert_eq!(parse_instance("sample_d"), Some(4));
        assert_eq!(parse_instance("inst3"), Some(3));
        assert_eq!(parse_instance("misc"), None);
    }

    #[test]
    fn kth_layout_with_scale_filter() {
        let dir = tempfile::tempdir().unwrap();
        for class in ["cork", "wool"] {
            for s in ["a", "b", "c", "d"] {
                for scale in 1..=9 {
                    touch(&dir.path().join(format!("{class}/sample_{s}/x-scale_{scale}_im_1.pgm")));
                }
            }
        }
        let ds = load_dataset(dir.path(), Layout::KthTips2, &SplitPolicy::default(), None).unwrap();
        assert_eq!(ds.classes, vec!["cork", "wool"]);
        assert_eq!(ds.split(Split::Train).len(), 36);
        assert_eq!(ds.split(Split::Test).len(), 36);
        let filt =
            load_dataset(dir.path(), Layout::KthTips2, &SplitPolicy::default(), Some(&[3, 5, 7])).unwrap();
        assert_eq!(filt.split(Split::Train).len(), 12);
        assert!(filt.split(Split::Train).iter().all(|i| [3, 5, 7].contains(&i.scale.unwrap())));
        assert_eq!(filt.split(Split::Test), ds.split(Split::Test));
    }

    #[test]
    fn fmd_halves_each_class() {
        let dir = tempfile::tempdir().unwrap();
        for class in ["glass", "wood", "stone"] {
            for i in 0..7 {
                touch(&dir.path().join(format!("image/{class}/{i}.pgm")));
            }
        }
        let policy = SplitPolicy::default();
        let ds = load_dataset(dir.path(), Layout::Fmd, &policy, None).unwrap();
        assert_eq!(ds.class_counts(Split::Train), vec![3, 3, 3]);
        assert_eq!(ds.class_counts(Split::Test), vec![4, 4, 4]);
        let again = load_dataset(dir.path(), Layout::Fmd, &policy, None).unwrap();
        assert_eq!(ds, again);
        let img = ds.load_images(Split::Train).unwrap();
        assert_eq!(img.len(), 9);
    }

    #[test]
    fn malformed_trees_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        touch(&dir.path().join("train/a/0.pgm"));
        std::fs::create_dir_all(dir.path().join("test/a")).unwrap();
        std::fs::write(dir.path().join("test/a/notes.txt"), "x").unwrap();
        match load_dataset(dir.path(), Layout::Flat, &SplitPolicy::default(), None) {
            Err(Error::Layout { path, .. }) => assert!(path.ends_with("notes.txt")),
            other => panic!("{other:?}"),
        }
        std::fs::remove_file(dir.path().join("test/a/notes.txt")).unwrap();
        match load_dataset(dir.path(), Layout::Flat, &SplitPolicy::default(), None) {
            Err(Error::Layout { reason, .. }) => assert_eq!(reason, "no images"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        touch(&dir.path().join("train/b/0.pgm"));
        touch(&dir.path().join("train/a/0.pgm"));
        touch(&dir.path().join("test/a/1.pgm"));
        let ds = load_dataset(dir.path(), Layout::Flat, &SplitPolicy::default(), None).unwrap();
        assert_eq!(ds.classes, vec!["a", "b"]);
        ds.save_manifest(dir.path().join(MANIFEST_FILE)).unwrap();
        let back = load_dataset(dir.path(), Layout::Manifest, &SplitPolicy::default(), None).unwrap();
        assert_eq!(back, ds);
    }
}
