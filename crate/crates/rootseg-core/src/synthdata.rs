//! Deterministic synthetic root scenes with exact ground-truth masks.
//!
//! A scene is a textured soil background (base tone, low-frequency
//! blotches, Gaussian pixel noise) with bright curved strokes stamped on
//! top. Strokes are quadratic Bezier curves with jittered control points;
//! the mask is produced by the exact same disk stamping as the image, so
//! image and mask are aligned by construction.
//!
//! Generation is a pure function of the config: the background is drawn
//! before any stroke parameters are sampled, so two configs differing only
//! in root parameters share the same background for a given seed.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataio::{self, DatasetManifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::imagecore::RasterImage;
use crate::rng::seeded_rng;

/// Base soil tone (R, G, B).
const SOIL: [f32; 3] = [102.0, 84.0, 66.0];
/// Root tint per channel, relative to the sampled brightness.
const ROOT_TINT: [f32; 3] = [1.0, 0.95, 0.85];
/// Number of low-frequency background blotches.
const BLOTCH_COUNT: usize = 6;
/// Stroke length range as a fraction of the smaller image dimension.
const LENGTH_FRAC: (f32, f32) = (0.35, 0.75);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    /// Inclusive range for the number of strokes.
    pub root_count_range: (u32, u32),
    /// Stroke width range in pixels.
    pub root_width_range: (f32, f32),
    /// Root brightness range in intensity units.
    pub root_brightness_range: (f32, f32),
    /// Standard deviation of per-pixel background noise.
    pub background_noise_sigma: f32,
    /// Dimensionless stroke-bend parameter; 0 gives straight strokes.
    pub curvature: f32,
    pub seed: u64,
}

impl Default for SceneConfig {
    /// Desk-scale training default; tuned so the mean positive fraction is
    /// close to the 0.5% class imbalance the pipeline is designed around.
    fn default() -> Self {
        SceneConfig {
            height: 144,
            width: 192,
            root_count_range: (1, 1),
            root_width_range: (2.0, 3.0),
            root_brightness_range: (150.0, 210.0),
            background_noise_sigma: 6.0,
            curvature: 0.35,
            seed: 0,
        }
    }
}

impl SceneConfig {
    fn validate(&self) -> Result<()> {
        if self.height < 16 || self.width < 16 {
            return Err(Error::invalid_argument(format!(
                "scene dimensions {}x{} degenerate (minimum 16)",
                self.height, self.width
            )));
        }
        if self.root_count_range.0 > self.root_count_range.1 {
            return Err(Error::invalid_argument("empty root_count_range"));
        }
        let (wlo, whi) = self.root_width_range;
        if !(wlo > 0.0 && wlo <= whi) {
            return Err(Error::invalid_argument("bad root_width_range"));
        }
        let (blo, bhi) = self.root_brightness_range;
        if !(blo >= 0.0 && blo <= bhi && bhi <= 255.0) {
            return Err(Error::invalid_argument("bad root_brightness_range"));
        }
        if self.background_noise_sigma < 0.0 || self.curvature < 0.0 {
            return Err(Error::invalid_argument("negative noise sigma or curvature"));
        }
        Ok(())
    }
}

/// Generates one scene: a 3-channel image plus its aligned binary mask.
pub fn generate_scene(cfg: &SceneConfig) -> Result<(RasterImage, RasterImage)> {
    cfg.validate()?;
    let (h, w) = (cfg.height, cfg.width);
    let mut rng = seeded_rng(cfg.seed);

    let mut img = RasterImage::new(h, w, 3);
    // blotches first, then pixel noise; both before any stroke draws
    let mut blotches = Vec::with_capacity(BLOTCH_COUNT);
    for _ in 0..BLOTCH_COUNT {
        let cy = rng.random_range(0.0..h as f32);
        let cx = rng.random_range(0.0..w as f32);
        let radius = rng.random_range(0.15..0.5) * h.min(w) as f32;
        let amp = rng.random_range(-18.0..18.0);
        blotches.push((cy, cx, radius, amp));
    }
    let noise = Normal::new(0.0f32, cfg.background_noise_sigma.max(f32::MIN_POSITIVE)).unwrap();
    for y in 0..h {
        for x in 0..w {
            let mut level = 0.0;
            for &(cy, cx, r, a) in &blotches {
                let d2 = (y as f32 - cy).powi(2) + (x as f32 - cx).powi(2);
                level += a * (-d2 / (2.0 * r * r)).exp();
            }
            for c in 0..3 {
                let draw = noise.sample(&mut rng);
                let n = if cfg.background_noise_sigma > 0.0 { draw } else { 0.0 };
                img.set(y, x, c, (SOIL[c] + level + n).clamp(0.0, 255.0));
            }
        }
    }

    let mut mask = RasterImage::new(h, w, 1);
    let count = rng.random_range(cfg.root_count_range.0..=cfg.root_count_range.1);
    for _ in 0..count {
        stamp_stroke(cfg, &mut rng, &mut img, &mut mask);
    }
    Ok((img, mask))
}

fn stamp_stroke(
    cfg: &SceneConfig,
    rng: &mut impl Rng,
    img: &mut RasterImage,
    mask: &mut RasterImage,
) {
    let (h, w) = (cfg.height as f32, cfg.width as f32);
    let p0 = [rng.random_range(0.0..h), rng.random_range(0.0..w)];
    let theta = rng.random_range(0.0..std::f32::consts::TAU);
    let len = rng.random_range(LENGTH_FRAC.0..LENGTH_FRAC.1) * h.min(w);
    let dir = [theta.sin(), theta.cos()];
    let p2 = [p0[0] + len * dir[0], p0[1] + len * dir[1]];
    // control point: midpoint displaced along the stroke normal
    let bend = cfg.curvature * len * rng.random_range(-1.0..1.0);
    let p1 = [
        0.5 * (p0[0] + p2[0]) - dir[1] * bend,
        0.5 * (p0[1] + p2[1]) + dir[0] * bend,
    ];
    let stroke_w = rng.random_range(cfg.root_width_range.0..=cfg.root_width_range.1);
    let brightness = rng.random_range(cfg.root_brightness_range.0..=cfg.root_brightness_range.1);

    let radius = stroke_w / 2.0;
    let ir = radius.ceil() as isize;
    let steps = (2.5 * len).ceil().max(2.0) as usize;
    for s in 0..=steps {
        let t = s as f32 / steps as f32;
        let u = 1.0 - t;
        let qy = u * u * p0[0] + 2.0 * u * t * p1[0] + t * t * p2[0];
        let qx = u * u * p0[1] + 2.0 * u * t * p1[1] + t * t * p2[1];
        // slight along-stroke brightness gradient for texture
        let b = brightness * (0.95 + 0.1 * t);
        let (cy, cx) = (qy.round() as isize, qx.round() as isize);
        for dy in -ir..=ir {
            for dx in -ir..=ir {
                if (dy * dy + dx * dx) as f32 > radius * radius {
                    continue;
                }
                let (py, px) = (cy + dy, cx + dx);
                if py < 0 || px < 0 || py >= cfg.height as isize || px >= cfg.width as isize {
                    continue;
                }
                let (py, px) = (py as usize, px as usize);
                mask.set(py, px, 0, 1.0);
                for c in 0..3 {
                    img.set(py, px, c, (b * ROOT_TINT[c]).clamp(0.0, 255.0));
                }
            }
        }
    }
}

/// Generates `n` scenes, writes image/mask PNG pairs plus `manifest.csv`
/// into `out_dir`, and returns the manifest.
///
/// Scene `i` uses seed `cfg.seed ^ i`, so datasets can be regenerated (or
/// generated in parallel) index by index.
pub fn generate_dataset(cfg: &SceneConfig, n: usize, out_dir: &Path) -> Result<DatasetManifest> {
    if n == 0 {
        return Err(Error::invalid_argument("dataset size must be >= 1"));
    }
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let scene_cfg = SceneConfig {
            seed: cfg.seed ^ i as u64,
            ..cfg.clone()
        };
        let (img, mask) = generate_scene(&scene_cfg)?;
        let image_name = format!("scene_{i:04}.png");
        let mask_name = format!("scene_{i:04}_mask.png");
        dataio::write_image(&out_dir.join(&image_name), &img)?;
        dataio::write_mask(&out_dir.join(&mask_name), &mask)?;
        entries.push(ManifestEntry {
            image: image_name.into(),
            mask: mask_name.into(),
            root_pixels: dataio::count_root_pixels(&mask),
        });
    }
    dataio::write_manifest(&out_dir.join("manifest.csv"), &entries)?;
    // resolve the returned entries like a fresh load would
    let entries = entries
        .into_iter()
        .map(|e| ManifestEntry {
            image: out_dir.join(e.image),
            mask: out_dir.join(e.mask),
            root_pixels: e.root_pixels,
        })
        .collect();
    Ok(DatasetManifest {
        entries,
        warnings: Vec::new(),
    })
}
