//! View sets, pose files and PNG images.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use raypose_core::{Image, Intrinsics, Pose};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewEntry {
    pub id: String,
    /// Image file, relative to the view set file.
    pub image: PathBuf,
    pub split: Split,
    /// Camera-to-world `[R | p]`, row-major.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<[[f64; 4]; 3]>,
    pub intrinsics: Intrinsics,
}

impl ViewEntry {
    pub fn pose(&self) -> Option<Pose> {
        self.pose.as_ref().map(Pose::from_rows)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ViewSet {
    pub views: Vec<ViewEntry>,
}

/// A view set together with the directory its image paths are relative to.
#[derive(Debug, Clone)]
pub struct LoadedViews {
    pub set: ViewSet,
    pub base: PathBuf,
}

impl LoadedViews {
    pub fn load(path: &Path) -> CliResult<Self> {
        let set: ViewSet = read_json(path)?;
        for v in &set.views {
            if v.split == Split::Train && v.pose.is_none() {
                return Err(CliError::Data(format!(
                    "{}: training view {} has no pose",
                    path.display(),
                    v.id
                )));
            }
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { set, base })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ViewEntry> {
        self.set.views.iter().filter(move |v| v.split == split)
    }

    pub fn image(&self, view: &ViewEntry) -> CliResult<Image> {
        read_png(&self.base.join(&view.image))
    }
}

/// `{"pose": [[...], [...], [...]]}`; extra fields are ignored, so a pose
/// estimate file is accepted as well.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseFile {
    pub pose: [[f64; 4]; 3],
}

pub fn read_pose(path: &Path) -> CliResult<Pose> {
    let file: PoseFile = read_json(path)?;
    Ok(Pose::from_rows(&file.pose))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn read_png(path: &Path) -> CliResult<Image> {
    let img = image::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    Ok(Image::from_rgb8(w as usize, h as usize, rgb.as_raw()))
}

pub fn write_png(path: &Path, img: &Image) -> CliResult<()> {
    let buffer = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, img.to_rgb8())
        .expect("buffer matches image size");
    let mut bytes = Vec::new();
    buffer
        .write_to(
            &mut std::io::Cursor::new(&mut bytes),
            image::ImageFormat::Png,
        )
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    write_file(path, &bytes)
}
