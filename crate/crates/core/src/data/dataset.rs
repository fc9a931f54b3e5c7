use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::image::{load_png, save_png, ImageRGB};
use super::resize::make_lr;
use crate::error::{config_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(config_err!("unknown split {other:?} (train, val or test)")),
        }
    }
}

/// A directory of HR PNGs at `<dir>/HR/*.png`, optionally with LR
/// counterparts at `<dir>/LR_x<r>/` carrying the same file names.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub dir: PathBuf,
    pub split: Option<Split>,
    pub scale: usize,
    pub files: Vec<PathBuf>,
}

/// An HR image cropped to a multiple of the scale and its LR partner.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    pub name: String,
    pub hr: ImageRGB,
    pub lr: ImageRGB,
}

pub fn lr_dir_name(scale: usize) -> String {
    format!("LR_x{scale}")
}

impl DatasetSpec {
    /// `<root>/<split>/HR/*.png`.
    pub fn new(root: impl AsRef<Path>, split: Split, scale: usize) -> Result<Self> {
        let mut spec = Self::from_dir(root.as_ref().join(split.name()), scale)?;
        spec.split = Some(split);
        Ok(spec)
    }

    /// A benchmark-style directory containing `HR/` directly.
    pub fn from_dir(dir: impl AsRef<Path>, scale: usize) -> Result<Self> {
        if scale == 0 {
            return Err(config_err!("scale must be positive"));
        }
        let dir = dir.as_ref().to_path_buf();
        let hr = dir.join("HR");
        let files = list_pngs(&hr)?;
        if files.is_empty() {
            return Err(Error::Data(format!("no PNG files in {}", hr.display())));
        }
        Ok(DatasetSpec { dir, split: None, scale, files })
    }

    pub fn lr_dir(&self) -> PathBuf {
        self.dir.join(lr_dir_name(self.scale))
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// Loads one pair. A cached or externally supplied LR file is used when
    /// present and of the right size; otherwise LR is synthesised.
    pub fn load_pair(&self, index: usize) -> Result<ImagePair> {
        let path = &self.files[index];
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let hr = load_png(path)?.modcrop(self.scale);
        let cached = self.lr_dir().join(&name);
        let lr = if cached.is_file() {
            let lr = load_png(&cached)?;
            if lr.width() * self.scale != hr.width() || lr.height() * self.scale != hr.height() {
                return Err(Error::Data(format!(
                    "{}: {}×{} LR does not match {}×{} HR at ×{}",
                    cached.display(),
                    lr.width(),
                    lr.height(),
                    hr.width(),
                    hr.height(),
                    self.scale
                )));
            }
            lr
        } else {
            make_lr(&hr, self.scale)?
        };
        Ok(ImagePair { name, hr, lr })
    }

    pub fn load_all(&self) -> Result<Vec<ImagePair>> {
        (0..self.len()).map(|i| self.load_pair(i)).collect()
    }

    /// Writes synthesised LR images to the cache directory.
    pub fn cache_lr(&self) -> Result<Vec<PathBuf>> {
        let dir = self.lr_dir();
        std::fs::create_dir_all(&dir)?;
        let mut written = Vec::new();
        for path in &self.files {
            let hr = load_png(path)?.modcrop(self.scale);
            let out = dir.join(path.file_name().unwrap_or_default());
            save_png(&make_lr(&hr, self.scale)?, &out)?;
            written.push(out);
        }
        Ok(written)
    }
}

/// Sorted `*.png` files of a directory.
pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Data(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let p = entry?.path();
        let is_png = p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && p.is_file() {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, img: &ImageRGB) {
        std::fs::create_dir_all(dir).unwrap();
        save_png(img, dir.join(name)).unwrap();
    }

    #[test]
    fn discovers_and_crops() {
        let tmp = tempfile::tempdir().unwrap();
        let hr = tmp.path().join("train/HR");
        write(&hr, "b.png", &ImageRGB::filled(21, 14, [9, 9, 9]));
        write(&hr, "a.png", &ImageRGB::filled(12, 12, [1, 2, 3]));
        std::fs::write(hr.join("notes.txt"), "x").unwrap();
        let spec = DatasetSpec::new(tmp.path(), Split::Train, 4).unwrap();
        assert_eq!(spec.len(), 2);
        assert!(spec.files[0].ends_with("a.png"));
        let pair = spec.load_pair(1).unwrap();
        assert_eq!((pair.hr.width(), pair.hr.height()), (20, 12));
        assert_eq!((pair.lr.width(), pair.lr.height()), (5, 3));
    }

    #[test]
    fn cached_lr_is_used_and_checked() {
        let tmp = tempfile::tempdir().unwrap();
        write(&tmp.path().join("HR"), "x.png", &ImageRGB::filled(8, 8, [50, 50, 50]));
        let spec = DatasetSpec::from_dir(tmp.path(), 2).unwrap();
        write(&spec.lr_dir(), "x.png", &ImageRGB::filled(4, 4, [7, 7, 7]));
        assert_eq!(spec.load_pair(0).unwrap().lr.pixel(0, 0), [7, 7, 7]);
        write(&spec.lr_dir(), "x.png", &ImageRGB::filled(3, 4, [7, 7, 7]));
        assert!(matches!(spec.load_pair(0), Err(Error::Data(_))));
    }

    #[test]
    fn degradation_is_deterministic() {
        let tmp = tempfile::tempdir().unwrap();
        let img = ImageRGB::from_fn(16, 12, |x, y| [(x * 13) as u8, (y * 19) as u8, ((x * y) % 256) as u8]);
        write(&tmp.path().join("HR"), "g.png", &img);
        let spec = DatasetSpec::from_dir(tmp.path(), 2).unwrap();
        let a = spec.load_pair(0).unwrap();
        let b = spec.load_pair(0).unwrap();
        assert_eq!(a.lr, b.lr);
        let cached = spec.cache_lr().unwrap();
        assert_eq!(load_png(&cached[0]).unwrap(), a.lr);
    }

    #[test]
    fn missing_or_empty_dir() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(DatasetSpec::from_dir(tmp.path(), 2), Err(Error::Data(_))));
        std::fs::create_dir_all(tmp.path().join("HR")).unwrap();
        assert!(matches!(DatasetSpec::from_dir(tmp.path(), 2), Err(Error::Data(_))));
        assert!("bogus".parse::<Split>().is_err());
    }
}
