//! Image-directory datasets: `<root>/<fabric_id>/<image>.{png,pgm,bmp}`.

use std::fs;
use std::path::{Path, PathBuf};

use active_texture_core::{Dataset, DatasetError, DatasetOrigin, Fabric, ImageSource, TextureImage};
use image::imageops::{self, FilterType};
use image::{ImageBuffer, Luma, Rgb};

use crate::error::{HarnessError, Result};

const EXTENSIONS: [&str; 5] = ["png", "pgm", "ppm", "pnm", "bmp"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadOptions {
    /// Resample every image to (height, width); `None` keeps native sizes.
    pub size: Option<(usize, usize)>,
    /// 1 for grayscale, 3 for RGB.
    pub channels: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { size: None, channels: 1 }
    }
}

fn is_image(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn sorted_entries(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

fn decode_error(path: &Path, reason: impl ToString) -> DatasetError {
    DatasetError::Decode { path: path.display().to_string(), reason: reason.to_string() }
}

fn decode(path: &Path, options: &LoadOptions) -> Result<(Vec<f64>, usize, usize), DatasetError> {
    let img = image::open(path).map_err(|e| decode_error(path, e))?;
    let resize = |w: u32, h: u32| options.size.filter(|&(th, tw)| (th, tw) != (h as usize, w as usize));
    let scale = |v: u16| f64::from(v) / f64::from(u16::MAX);
    match options.channels {
        1 => {
            let mut buf = img.to_luma16();
            if let Some((h, w)) = resize(buf.width(), buf.height()) {
                buf = imageops::resize(&buf, w as u32, h as u32, FilterType::Triangle);
            }
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            Ok((buf.pixels().map(|p| scale(p.0[0])).collect(), h, w))
        }
        3 => {
            let mut buf = img.to_rgb16();
            if let Some((h, w)) = resize(buf.width(), buf.height()) {
                buf = imageops::resize(&buf, w as u32, h as u32, FilterType::Triangle);
            }
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            let mut pixels = vec![0.0; 3 * w * h];
            for (i, p) in buf.pixels().enumerate() {
                for c in 0..3 {
                    pixels[c * w * h + i] = scale(p.0[c]);
                }
            }
            Ok((pixels, h, w))
        }
        other => Err(DatasetError::Param(format!("unsupported channel count {other}"))),
    }
}

/// Reads one subdirectory per fabric, in name order; files inside are read
/// in name order and files without an image extension are ignored.
pub fn load_dataset(root: &Path, options: &LoadOptions) -> Result<Dataset, DatasetError> {
    let entries = sorted_entries(root).map_err(|_| DatasetError::DatasetEmpty)?;
    let mut fabrics = Vec::new();
    for dir in entries.into_iter().filter(|p| p.is_dir()) {
        let id =
            dir.file_name().and_then(|n| n.to_str()).ok_or_else(|| decode_error(&dir, "non UTF-8 name"))?.to_string();
        let files = sorted_entries(&dir).map_err(|e| decode_error(&dir, e))?;
        let mut images = Vec::new();
        for path in files.into_iter().filter(|p| p.is_file() && is_image(p)) {
            let (pixels, h, w) = decode(&path, options)?;
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            images.push(TextureImage::new(
                pixels,
                h,
                w,
                options.channels,
                id.clone(),
                format!("{id}/{name}"),
                ImageSource::File { path: path.display().to_string() },
            ));
        }
        if images.is_empty() {
            return Err(DatasetError::FabricEmpty(id));
        }
        fabrics.push(Fabric { id, images, generator: None });
    }
    if fabrics.is_empty() {
        return Err(DatasetError::DatasetEmpty);
    }
    Dataset::new(fabrics, DatasetOrigin::Files { root: root.display().to_string() })
}

fn quantize(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * f64::from(u16::MAX)).round() as u16
}

/// Writes every image as a 16-bit PNG named `<index>.png` under its fabric.
pub fn save_dataset(dataset: &Dataset, root: &Path) -> Result<()> {
    let (h, w, c) = (dataset.height(), dataset.width(), dataset.channels());
    for fabric in dataset.fabrics() {
        let dir = root.join(&fabric.id);
        fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
        for (i, img) in fabric.images.iter().enumerate() {
            let path = dir.join(format!("{i:04}.png"));
            let saved = if c == 1 {
                let data: Vec<u16> = img.pixels.iter().map(|&v| quantize(v)).collect();
                ImageBuffer::<Luma<u16>, _>::from_raw(w as u32, h as u32, data).expect("buffer size").save(&path)
            } else {
                let n = w * h;
                let data: Vec<u16> = (0..n)
                    .flat_map(|i| (0..3).map(move |ch| (ch, i)))
                    .map(|(ch, i)| quantize(img.pixels[ch * n + i]))
                    .collect();
                ImageBuffer::<Rgb<u16>, _>::from_raw(w as u32, h as u32, data).expect("buffer size").save(&path)
            };
            saved.map_err(|e| HarnessError::io(&path, std::io::Error::other(e.to_string())))?;
        }
    }
    Ok(())
}

/// One line per fabric plus the image shape, for `dataset inspect`.
pub fn describe(dataset: &Dataset) -> String {
    let mut out = format!(
        "{} fabrics, {} images, {}x{}x{} (HxWxC)\n",
        dataset.fabrics().len(),
        dataset.image_count(),
        dataset.height(),
        dataset.width(),
        dataset.channels()
    );
    for (id, n) in dataset.sample_counts() {
        out.push_str(&format!("{id}\t{n}\n"));
    }
    out
}
