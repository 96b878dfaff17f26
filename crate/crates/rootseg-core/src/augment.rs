//! Input normalization, color jitter and elastic grid deformation.
//!
//! Elastic deformation follows the jointly interpolated parameterization:
//! one draw `gamma ~ U[0, 1)` sets both the smoothing coefficient
//! `sigma = 15 + gamma * 45` and the displacement intensity
//! `alpha = (200 + gamma * 2300) * alpha_scale` with
//! `alpha_scale ~ U[0.4, 1)`, and the whole deformation is applied with
//! probability 0.9. The displacement field is uniform `[-1, 1]` noise
//! smoothed by a unit-sum Gaussian, so `alpha` is a hard bound on the
//! displacement magnitude.
//!
//! Images are warped with bilinear interpolation, masks with
//! nearest-neighbor so annotations stay binary; one field warps both.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::imagecore::RasterImage;

/// Smoothing coefficient range (pixels).
pub const SIGMA_RANGE: (f32, f32) = (15.0, 60.0);
/// Displacement intensity range before the random rescale.
pub const ALPHA_RANGE: (f32, f32) = (200.0, 2500.0);
/// Random rescale applied to alpha.
pub const ALPHA_SCALE_RANGE: (f32, f32) = (0.4, 1.0);
/// Probability that the elastic deformation is applied at all.
pub const ELASTIC_APPLY_PROBABILITY: f32 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticParams {
    pub gamma: f32,
    pub sigma: f32,
    pub alpha: f32,
    pub alpha_scale: f32,
    pub apply_probability: f32,
}

impl ElasticParams {
    /// Interpolates sigma and alpha jointly from one coefficient.
    pub fn from_gamma(gamma: f32, alpha_scale: f32) -> Self {
        let sigma = SIGMA_RANGE.0 + gamma * (SIGMA_RANGE.1 - SIGMA_RANGE.0);
        let alpha = (ALPHA_RANGE.0 + gamma * (ALPHA_RANGE.1 - ALPHA_RANGE.0)) * alpha_scale;
        ElasticParams {
            gamma,
            sigma,
            alpha,
            alpha_scale,
            apply_probability: ELASTIC_APPLY_PROBABILITY,
        }
    }
}

/// Draws deformation parameters: `gamma ~ U[0,1)`, `alpha_scale ~ U[0.4,1)`.
///
/// Whether to apply the deformation at all is a separate uniform draw the
/// caller makes against `apply_probability`.
pub fn sample_elastic(rng: &mut impl Rng) -> ElasticParams {
    let gamma = rng.random_range(0.0..1.0);
    let alpha_scale = rng.random_range(ALPHA_SCALE_RANGE.0..ALPHA_SCALE_RANGE.1);
    ElasticParams::from_gamma(gamma, alpha_scale)
}

/// Per-pixel (dy, dx) offsets for one tile.
#[derive(Debug, Clone)]
pub struct DisplacementField {
    pub height: usize,
    pub width: usize,
    pub dy: Vec<f32>,
    pub dx: Vec<f32>,
}

/// Maps `v -> v/255 - 0.5`.
pub fn normalize(tile: &RasterImage) -> RasterImage {
    let mut out = tile.clone();
    for v in out.data_mut() {
        *v = *v / 255.0 - 0.5;
    }
    out
}

/// Inverse of [`normalize`].
pub fn denormalize(tile: &RasterImage) -> RasterImage {
    let mut out = tile.clone();
    for v in out.data_mut() {
        *v = (*v + 0.5) * 255.0;
    }
    out
}

fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut i = i.rem_euclid(period);
    if i >= n as isize {
        i = period - i;
    }
    i as usize
}

/// Separable Gaussian smoothing with a unit-sum kernel and reflected
/// boundaries; kernel radius may exceed the image size.
fn gaussian_smooth(src: &[f32], h: usize, w: usize, sigma: f32) -> Vec<f32> {
    let radius = (4.0 * sigma).ceil().max(1.0) as usize;
    let mut kernel = Vec::with_capacity(2 * radius + 1);
    let s2 = 2.0 * (sigma as f64) * (sigma as f64);
    for k in -(radius as isize)..=radius as isize {
        kernel.push((-(k * k) as f64 / s2).exp());
    }
    let z: f64 = kernel.iter().sum();
    let kernel: Vec<f32> = kernel.iter().map(|v| (v / z) as f32).collect();

    // horizontal pass over an explicitly reflected row extension
    let mut tmp = vec![0.0f32; h * w];
    let mut extended = vec![0.0f32; w + 2 * radius];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for (j, e) in extended.iter_mut().enumerate() {
            *e = row[reflect(j as isize - radius as isize, w)];
        }
        let out_row = &mut tmp[y * w..(y + 1) * w];
        for (x, o) in out_row.iter_mut().enumerate() {
            let window = &extended[x..x + kernel.len()];
            let mut acc = 0.0;
            for (&kv, &v) in kernel.iter().zip(window) {
                acc += kv * v;
            }
            *o = acc;
        }
    }
    // vertical pass over an explicitly reflected column extension
    let mut out = vec![0.0f32; h * w];
    let mut column = vec![0.0f32; h + 2 * radius];
    for x in 0..w {
        for (j, e) in column.iter_mut().enumerate() {
            *e = tmp[reflect(j as isize - radius as isize, h) * w + x];
        }
        for y in 0..h {
            let window = &column[y..y + kernel.len()];
            let mut acc = 0.0;
            for (&kv, &v) in kernel.iter().zip(window) {
                acc += kv * v;
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Builds a smooth displacement field: per-axis uniform `[-1, 1]` noise,
/// Gaussian-smoothed, scaled by alpha.
pub fn make_field(
    height: usize,
    width: usize,
    params: &ElasticParams,
    rng: &mut impl Rng,
) -> DisplacementField {
    let mut draw_noise = |n: usize| -> Vec<f32> {
        (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect()
    };
    let noise_y = draw_noise(height * width);
    let noise_x = draw_noise(height * width);
    let scale = |mut v: Vec<f32>| {
        for x in &mut v {
            *x *= params.alpha;
        }
        v
    };
    let (dy, dx) = if params.alpha == 0.0 {
        (vec![0.0; height * width], vec![0.0; height * width])
    } else {
        (
            scale(gaussian_smooth(&noise_y, height, width, params.sigma)),
            scale(gaussian_smooth(&noise_x, height, width, params.sigma)),
        )
    };
    DisplacementField {
        height,
        width,
        dy,
        dx,
    }
}

fn sample_bilinear(img: &RasterImage, y: f32, x: f32, c: usize) -> f32 {
    let y0 = y.floor();
    let x0 = x.floor();
    let fy = y - y0;
    let fx = x - x0;
    let (h, w) = (img.height(), img.width());
    let yi = |d: isize| reflect(y0 as isize + d, h);
    let xi = |d: isize| reflect(x0 as isize + d, w);
    let v00 = img.at(yi(0), xi(0), c);
    let v01 = img.at(yi(0), xi(1), c);
    let v10 = img.at(yi(1), xi(0), c);
    let v11 = img.at(yi(1), xi(1), c);
    v00 * (1.0 - fy) * (1.0 - fx) + v01 * (1.0 - fy) * fx + v10 * fy * (1.0 - fx) + v11 * fy * fx
}

fn sample_nearest(img: &RasterImage, y: f32, x: f32, c: usize) -> f32 {
    let yi = reflect(y.round() as isize, img.height());
    let xi = reflect(x.round() as isize, img.width());
    img.at(yi, xi, c)
}

/// Warps an image (bilinear) and its mask (nearest-neighbor) with one
/// shared displacement field; boundaries reflect.
pub fn warp(
    img: &RasterImage,
    mask: &RasterImage,
    field: &DisplacementField,
) -> Result<(RasterImage, RasterImage)> {
    if img.height() != field.height
        || img.width() != field.width
        || mask.height() != field.height
        || mask.width() != field.width
    {
        return Err(Error::invalid_argument(format!(
            "warp dimension mismatch: image {}x{}, mask {}x{}, field {}x{}",
            img.height(),
            img.width(),
            mask.height(),
            mask.width(),
            field.height,
            field.width
        )));
    }
    let (h, w) = (field.height, field.width);
    let mut out_img = RasterImage::new(h, w, img.channels());
    let mut out_mask = RasterImage::new(h, w, mask.channels());
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let sy = y as f32 + field.dy[i];
            let sx = x as f32 + field.dx[i];
            for c in 0..img.channels() {
                out_img.set(y, x, c, sample_bilinear(img, sy, sx, c));
            }
            for c in 0..mask.channels() {
                out_mask.set(y, x, c, sample_nearest(mask, sy, sx, c));
            }
        }
    }
    Ok((out_img, out_mask))
}

/// Maximum jitter magnitudes; factors are drawn from `[1 - m, 1 + m]`
/// (hue from `[-m, +m]` turns).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterParams {
    pub brightness: f32,
    pub contrast: f32,
    pub saturation: f32,
    pub hue: f32,
}

impl Default for JitterParams {
    fn default() -> Self {
        JitterParams {
            brightness: 0.3,
            contrast: 0.3,
            saturation: 0.2,
            hue: 0.001,
        }
    }
}

fn rgb_to_hsv(r: f32, g: f32, b: f32) -> (f32, f32, f32) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        (((g - b) / delta).rem_euclid(6.0)) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f32, s: f32, v: f32) -> (f32, f32, f32) {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let c = v * s;
    let x = c * (1.0 - (h6.rem_euclid(2.0) - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match h6 as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    (r + m, g + m, b + m)
}

/// Randomized brightness/contrast/saturation/hue jitter for photos.
///
/// Factor draws happen in a fixed order; the four operations are then
/// applied in a random order. Output is clipped to `[0, 255]`. Masks are
/// never jittered.
pub fn color_jitter(img: &RasterImage, params: &JitterParams, rng: &mut impl Rng) -> Result<RasterImage> {
    if img.channels() != 3 {
        return Err(Error::invalid_argument(format!(
            "color_jitter expects a 3-channel image, got {}",
            img.channels()
        )));
    }
    if params.brightness < 0.0 || params.contrast < 0.0 || params.saturation < 0.0 || params.hue < 0.0
    {
        return Err(Error::invalid_argument("jitter magnitudes must be >= 0"));
    }
    fn factor(rng: &mut impl Rng, m: f32) -> f32 {
        if m == 0.0 {
            1.0
        } else {
            rng.random_range((1.0 - m).max(0.0)..=1.0 + m)
        }
    }
    let fb = factor(rng, params.brightness);
    let fc = factor(rng, params.contrast);
    let fs = factor(rng, params.saturation);
    let dh = if params.hue == 0.0 {
        0.0
    } else {
        rng.random_range(-params.hue..=params.hue)
    };
    let mut order = [0usize, 1, 2, 3];
    order.shuffle(rng);

    let mut out = img.clone();
    let npix = img.height() * img.width();
    for op in order {
        match op {
            0 if fb != 1.0 => {
                for v in out.data_mut() {
                    *v *= fb;
                }
            }
            1 if fc != 1.0 => {
                let mean: f32 = out.data().chunks_exact(3).map(|p| (p[0] + p[1] + p[2]) / 3.0).sum::<f32>()
                    / npix as f32;
                for v in out.data_mut() {
                    *v = mean + (*v - mean) * fc;
                }
            }
            2 if fs != 1.0 => {
                for px in out.data_mut().chunks_exact_mut(3) {
                    let gray = (px[0] + px[1] + px[2]) / 3.0;
                    for v in px {
                        *v = gray + (*v - gray) * fs;
                    }
                }
            }
            3 if dh != 0.0 => {
                for px in out.data_mut().chunks_exact_mut(3) {
                    let (h, s, v) = rgb_to_hsv(px[0] / 255.0, px[1] / 255.0, px[2] / 255.0);
                    let (r, g, b) = hsv_to_rgb(h + dh, s, v);
                    px[0] = r * 255.0;
                    px[1] = g * 255.0;
                    px[2] = b * 255.0;
                }
            }
            _ => {}
        }
    }
    for v in out.data_mut() {
        *v = v.clamp(0.0, 255.0);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    #[test]
    fn normalize_endpoints_and_roundtrip() {
        let tile = RasterImage::from_vec(1, 3, 1, vec![0.0, 127.5, 255.0]).unwrap();
        let n = normalize(&tile);
        assert_eq!(n.data(), &[-0.5, 0.0, 0.5]);
        let back = denormalize(&n);
        for (a, b) in back.data().iter().zip(tile.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn elastic_interpolation_endpoints() {
        let p0 = ElasticParams::from_gamma(0.0, 1.0);
        assert_eq!(p0.sigma, 15.0);
        assert_eq!(p0.alpha, 200.0);
        let p1 = ElasticParams::from_gamma(1.0, 1.0);
        assert_eq!(p1.sigma, 60.0);
        assert_eq!(p1.alpha, 2500.0);
        // alpha_scale multiplies alpha only
        let ps = ElasticParams::from_gamma(1.0, 0.4);
        assert_eq!(ps.sigma, 60.0);
        assert_eq!(ps.alpha, 1000.0);
        assert_eq!(ps.apply_probability, 0.9);
    }

    #[test]
    fn sampled_gamma_is_uniform_on_unit_interval() {
        let mut rng = seeded_rng(8);
        let mut sum = 0.0f64;
        for _ in 0..10_000 {
            let p = sample_elastic(&mut rng);
            assert!((0.0..1.0).contains(&p.gamma));
            assert!((ALPHA_SCALE_RANGE.0..ALPHA_SCALE_RANGE.1).contains(&p.alpha_scale));
            sum += p.gamma as f64;
        }
        let mean = sum / 10_000.0;
        assert!((0.48..=0.52).contains(&mean), "gamma mean {mean}");
    }

    #[test]
    fn zero_alpha_gives_zero_field() {
        let p = ElasticParams {
            alpha: 0.0,
            ..ElasticParams::from_gamma(0.5, 0.5)
        };
        let mut rng = seeded_rng(3);
        let f = make_field(20, 30, &p, &mut rng);
        assert!(f.dy.iter().all(|&v| v == 0.0));
        assert!(f.dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn field_magnitude_is_bounded_by_alpha() {
        for gamma in [0.0, 0.5, 0.99] {
            let p = ElasticParams::from_gamma(gamma, 0.9);
            let mut rng = seeded_rng(17);
            let f = make_field(40, 40, &p, &mut rng);
            for v in f.dy.iter().chain(f.dx.iter()) {
                assert!(v.abs() <= p.alpha, "offset {v} exceeds alpha {}", p.alpha);
            }
        }
    }

    #[test]
    fn larger_sigma_gives_smoother_field() {
        // identical noise (same seed), different smoothing
        let roughness = |sigma_gamma: f32| {
            let p = ElasticParams::from_gamma(sigma_gamma, 1.0);
            let mut rng = seeded_rng(42);
            let f = make_field(48, 48, &p, &mut rng);
            let mut acc = 0.0f64;
            let mut count = 0;
            for y in 0..48 {
                for x in 1..48 {
                    let i = y * 48 + x;
                    // normalize by alpha so only smoothness is compared
                    acc += ((f.dy[i] - f.dy[i - 1]).abs() / p.alpha) as f64;
                    count += 1;
                }
            }
            acc / count as f64
        };
        let rough_15 = roughness(0.0);
        let rough_60 = roughness(1.0);
        assert!(
            rough_60 < rough_15,
            "sigma 60 rougher than sigma 15: {rough_60} vs {rough_15}"
        );
    }

    #[test]
    fn zero_field_warp_is_identity() {
        let cfg = crate::synthdata::SceneConfig {
            seed: 4,
            ..Default::default()
        };
        let (img, mask) = crate::synthdata::generate_scene(&cfg).unwrap();
        let field = DisplacementField {
            height: img.height(),
            width: img.width(),
            dy: vec![0.0; img.height() * img.width()],
            dx: vec![0.0; img.height() * img.width()],
        };
        let (wi, wm) = warp(&img, &mask, &field).unwrap();
        assert_eq!(wi, img);
        assert_eq!(wm, mask);
    }

    #[test]
    fn warped_mask_stays_binary_and_matches_nearest_oracle() {
        let cfg = crate::synthdata::SceneConfig {
            seed: 12,
            ..Default::default()
        };
        let (img, mask) = crate::synthdata::generate_scene(&cfg).unwrap();
        let p = ElasticParams::from_gamma(0.4, 0.8);
        let mut rng = seeded_rng(7);
        let field = make_field(img.height(), img.width(), &p, &mut rng);
        let (_, warped) = warp(&img, &mask, &field).unwrap();
        let (h, w) = (mask.height(), mask.width());
        for y in 0..h {
            for x in 0..w {
                let v = warped.at(y, x, 0);
                assert!(v == 0.0 || v == 1.0);
                // independent nearest-neighbor resample
                let i = y * w + x;
                let sy = (y as f32 + field.dy[i]).round() as isize;
                let sx = (x as f32 + field.dx[i]).round() as isize;
                let expect = mask.at(reflect(sy, h), reflect(sx, w), 0);
                assert_eq!(v, expect, "mismatch at ({y}, {x})");
            }
        }
    }

    #[test]
    fn warp_rejects_dimension_mismatch() {
        let img = RasterImage::new(10, 10, 3);
        let mask = RasterImage::new(10, 10, 1);
        let field = DisplacementField {
            height: 8,
            width: 10,
            dy: vec![0.0; 80],
            dx: vec![0.0; 80],
        };
        assert!(warp(&img, &mask, &field).is_err());
    }

    #[test]
    fn zero_magnitude_jitter_is_identity() {
        let cfg = crate::synthdata::SceneConfig {
            seed: 6,
            ..Default::default()
        };
        let (img, _) = crate::synthdata::generate_scene(&cfg).unwrap();
        let p = JitterParams {
            brightness: 0.0,
            contrast: 0.0,
            saturation: 0.0,
            hue: 0.0,
        };
        let mut rng = seeded_rng(1);
        assert_eq!(color_jitter(&img, &p, &mut rng).unwrap(), img);
    }

    #[test]
    fn brightness_only_scales_constant_image() {
        let img = RasterImage::from_vec(2, 2, 3, vec![100.0; 12]).unwrap();
        let p = JitterParams {
            brightness: 0.3,
            contrast: 0.0,
            saturation: 0.0,
            hue: 0.0,
        };
        let mut rng = seeded_rng(2);
        let out = color_jitter(&img, &p, &mut rng).unwrap();
        let v0 = out.data()[0];
        assert!(out.data().iter().all(|&v| (v - v0).abs() < 1e-5));
        assert!((70.0..=130.0).contains(&v0), "brightness factor out of range: {v0}");
    }

    #[test]
    fn jitter_output_stays_in_byte_range() {
        let mut img = RasterImage::new(4, 4, 3);
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = ((i * 53) % 256) as f32;
        }
        let p = JitterParams::default();
        let mut rng = seeded_rng(10);
        for _ in 0..1000 {
            let out = color_jitter(&img, &p, &mut rng).unwrap();
            for &v in out.data() {
                assert!((0.0..=255.0).contains(&v));
            }
        }
    }

    #[test]
    fn jitter_rejects_single_channel() {
        let gray = RasterImage::new(4, 4, 1);
        let mut rng = seeded_rng(1);
        assert!(color_jitter(&gray, &JitterParams::default(), &mut rng).is_err());
    }

    #[test]
    fn jitter_is_deterministic_per_seed() {
        let cfg = crate::synthdata::SceneConfig {
            seed: 20,
            ..Default::default()
        };
        let (img, _) = crate::synthdata::generate_scene(&cfg).unwrap();
        let p = JitterParams::default();
        let a = color_jitter(&img, &p, &mut seeded_rng(55)).unwrap();
        let b = color_jitter(&img, &p, &mut seeded_rng(55)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hue_rotation_roundtrip_is_small_for_tiny_hue() {
        let mut img = RasterImage::new(2, 2, 3);
        let vals = [40.0, 90.0, 200.0, 10.0, 250.0, 30.0, 128.0, 128.0, 128.0, 5.0, 60.0, 220.0];
        img.data_mut().copy_from_slice(&vals);
        let p = JitterParams {
            brightness: 0.0,
            contrast: 0.0,
            saturation: 0.0,
            hue: 0.001,
        };
        let out = color_jitter(&img, &p, &mut seeded_rng(3)).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 4.0, "tiny hue moved {b} to {a}");
        }
    }
}
