//! Labeled image collections.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Random-access labeled images. `load` may be called any number of times
/// and must return the same image each time.
pub trait ImageSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn label(&self, id: usize) -> &str;

    /// Stable identifier such as `class/file.png`.
    fn image_id(&self, id: usize) -> String;

    fn load(&self, id: usize) -> Result<GrayImage>;

    /// Sorted distinct labels.
    fn classes(&self) -> Vec<String> {
        let mut c: Vec<String> = (0..self.len()).map(|i| self.label(i).to_owned()).collect();
        c.sort();
        c.dedup();
        c
    }
}

/// A root directory with one sub-directory per class.
#[derive(Debug, Clone)]
pub struct FolderDataset {
    root: PathBuf,
    items: Vec<(String, PathBuf)>,
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

impl FolderDataset {
    /// Indexes `root`. Classes and files are visited in sorted order, so ids
    /// are stable across runs.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        if !root.is_dir() {
            return Err(Error::io(
                root,
                std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
            ));
        }
        let mut items = Vec::new();
        for class_dir in sorted_entries(root)? {
            if !class_dir.is_dir() {
                continue;
            }
            let class = class_dir
                .file_name()
                .and_then(|n| n.to_str())
                .ok_or_else(|| Error::Dataset(format!("non-UTF-8 class directory {}", class_dir.display())))?
                .to_owned();
            for file in sorted_entries(&class_dir)? {
                if file.is_file() && is_image(&file) {
                    items.push((class.clone(), file));
                }
            }
        }
        if items.is_empty() {
            return Err(Error::Dataset(format!("no images under {}", root.display())));
        }
        Ok(Self {
            root: root.to_path_buf(),
            items,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, id: usize) -> &Path {
        &self.items[id].1
    }
}

impl ImageSource for FolderDataset {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn label(&self, id: usize) -> &str {
        &self.items[id].0
    }

    fn image_id(&self, id: usize) -> String {
        let file = self.items[id].1.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
        format!("{}/{}", self.items[id].0, file)
    }

    #[cfg(feature = "codecs")]
    fn load(&self, id: usize) -> Result<GrayImage> {
        crate::image::load_image(&self.items[id].1)
    }

    #[cfg(not(feature = "codecs"))]
    fn load(&self, id: usize) -> Result<GrayImage> {
        Err(Error::Format {
            path: self.items[id].1.clone(),
            message: "built without image codecs".into(),
        })
    }
}

/// Images held in memory, mostly for generated corpora and tests.
#[derive(Debug, Clone, Default)]
pub struct MemoryCorpus {
    items: Vec<(String, String, GrayImage)>,
}

impl MemoryCorpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, label: impl Into<String>, image_id: impl Into<String>, image: GrayImage) {
        self.items.push((label.into(), image_id.into(), image));
    }

    pub fn image(&self, id: usize) -> &GrayImage {
        &self.items[id].2
    }

    /// Writes `root/<class>/<name>.png` for every image.
    #[cfg(feature = "codecs")]
    pub fn write_folders(&self, root: impl AsRef<Path>) -> Result<()> {
        let root = root.as_ref();
        for (label, id, img) in &self.items {
            let dir = root.join(label);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let name = id.rsplit('/').next().unwrap_or(id);
            img.save_png(dir.join(format!("{name}.png")))?;
        }
        Ok(())
    }
}

impl ImageSource for MemoryCorpus {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn label(&self, id: usize) -> &str {
        &self.items[id].0
    }

    fn image_id(&self, id: usize) -> String {
        self.items[id].1.clone()
    }

    fn load(&self, id: usize) -> Result<GrayImage> {
        Ok(self.items[id].2.clone())
    }
}
