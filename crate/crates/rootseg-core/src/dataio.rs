//! PNG codecs, dataset manifests and image/mask pairing.
//!
//! File conventions: photos are 8-bit RGB PNG; masks are single-channel
//! 8-bit PNG where any value above 127 decodes to root (1); probability
//! maps may be written as 16-bit grayscale PNG scaled by 65535.

use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, ImageReader, Rgb};

use crate::error::{Error, Result};
use crate::imagecore::RasterImage;

/// Reads a photo as a 3-channel image with values in `[0, 255]`.
pub fn read_image(path: &Path) -> Result<RasterImage> {
    let img = open(path)?.into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.as_raw().iter().map(|&v| v as f32).collect();
    RasterImage::from_vec(h, w, 3, data)
}

/// Reads a mask PNG; any 8-bit value above 127 decodes to 1.
pub fn read_mask(path: &Path) -> Result<RasterImage> {
    let img = open(path)?.into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img
        .as_raw()
        .iter()
        .map(|&v| if v > 127 { 1.0 } else { 0.0 })
        .collect();
    RasterImage::from_vec(h, w, 1, data)
}

/// Writes a 3-channel `[0, 255]` image as 8-bit RGB PNG.
pub fn write_image(path: &Path, img: &RasterImage) -> Result<()> {
    if img.channels() != 3 {
        return Err(Error::invalid_argument("write_image expects 3 channels"));
    }
    let buf: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| v.clamp(0.0, 255.0).round() as u8)
        .collect();
    let out: ImageBuffer<Rgb<u8>, _> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, buf)
            .expect("buffer size verified by RasterImage invariant");
    out.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Writes a `{0, 1}` mask as single-channel PNG with values 0/255.
pub fn write_mask(path: &Path, mask: &RasterImage) -> Result<()> {
    if mask.channels() != 1 {
        return Err(Error::invalid_argument("write_mask expects 1 channel"));
    }
    let buf: Vec<u8> = mask
        .data()
        .iter()
        .map(|&v| if v >= 0.5 { 255u8 } else { 0u8 })
        .collect();
    let out = GrayImage::from_raw(mask.width() as u32, mask.height() as u32, buf)
        .expect("buffer size verified by RasterImage invariant");
    out.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Writes a `[0, 1]` probability map as 16-bit grayscale PNG scaled by 65535.
pub fn write_prob16(path: &Path, prob: &RasterImage) -> Result<()> {
    if prob.channels() != 1 {
        return Err(Error::invalid_argument("write_prob16 expects 1 channel"));
    }
    let buf: Vec<u16> = prob
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let out: ImageBuffer<image::Luma<u16>, _> =
        ImageBuffer::from_raw(prob.width() as u32, prob.height() as u32, buf)
            .expect("buffer size verified by RasterImage invariant");
    out.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        source: e,
    })
}

fn open(path: &Path) -> Result<image::DynamicImage> {
    ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            source: e,
        })
}

/// Loads an image/mask pair, checking that dimensions agree.
pub fn load_pair(image_path: &Path, mask_path: &Path) -> Result<(RasterImage, RasterImage)> {
    let img = read_image(image_path)?;
    let mask = read_mask(mask_path)?;
    if img.height() != mask.height() || img.width() != mask.width() {
        return Err(Error::invalid_argument(format!(
            "dimension mismatch: {} is {}x{} but {} is {}x{}",
            image_path.display(),
            img.height(),
            img.width(),
            mask_path.display(),
            mask.height(),
            mask.width()
        )));
    }
    Ok((img, mask))
}

/// Number of root pixels in a binary mask.
pub fn count_root_pixels(mask: &RasterImage) -> u64 {
    mask.data().iter().filter(|&&v| v >= 0.5).count() as u64
}

/// One manifest row: an image/mask pair with its root-pixel count.
#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub mask: PathBuf,
    pub root_pixels: u64,
}

/// A validated dataset manifest.
///
/// Entries are sorted by image path so ordering never depends on filesystem
/// enumeration. `warnings` records rows whose stored root-pixel count
/// disagreed with a recount of the decoded mask (the recount wins).
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub warnings: Vec<String>,
}

pub const MANIFEST_HEADER: [&str; 3] = ["image", "mask", "root_pixels"];

/// Writes a manifest CSV with header `image,mask,root_pixels`.
pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::Csv)?;
    w.write_record(MANIFEST_HEADER).map_err(Error::Csv)?;
    for e in entries {
        w.write_record([
            e.image.to_string_lossy().as_ref(),
            e.mask.to_string_lossy().as_ref(),
            &e.root_pixels.to_string(),
        ])
        .map_err(Error::Csv)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Loads and validates a manifest CSV.
///
/// Relative paths are resolved against the manifest's directory. Every
/// mask is decoded and recounted; mismatching rows are corrected in memory
/// and reported in `warnings`.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let mut reader = csv::Reader::from_path(path).map_err(Error::Csv)?;
    let headers = reader.headers().map_err(Error::Csv)?.clone();
    for col in MANIFEST_HEADER {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::invalid_argument(format!(
                "manifest {} missing column '{col}'",
                path.display()
            )));
        }
    }
    let idx = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (ci, cm, cc) = (idx("image"), idx("mask"), idx("root_pixels"));
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    for record in reader.records() {
        let record = record.map_err(Error::Csv)?;
        let resolve = |s: &str| {
            let p = PathBuf::from(s);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let image = resolve(&record[ci]);
        let mask_path = resolve(&record[cm]);
        let stored: u64 = record[cc].parse().map_err(|_| {
            Error::invalid_argument(format!("manifest row has bad root_pixels '{}'", &record[cc]))
        })?;
        if !image.exists() {
            return Err(Error::invalid_argument(format!(
                "manifest references missing image {}",
                image.display()
            )));
        }
        let mask = read_mask(&mask_path)?;
        let recount = count_root_pixels(&mask);
        if recount != stored {
            warnings.push(format!(
                "{}: stored root_pixels {stored} != recount {recount}; using recount",
                mask_path.display()
            ));
        }
        entries.push(ManifestEntry {
            image,
            mask: mask_path,
            root_pixels: recount,
        });
    }
    if entries.is_empty() {
        return Err(Error::invalid_argument(format!(
            "empty dataset: manifest {} has no rows",
            path.display()
        )));
    }
    entries.sort_by(|a, b| a.image.cmp(&b.image));
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(DatasetManifest { entries, warnings })
}
