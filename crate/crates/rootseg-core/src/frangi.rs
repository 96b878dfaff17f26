//! Multiscale Hessian vesselness baseline segmenter.
//!
//! The tubularity measure follows the classic bright-ridge vesselness:
//! with Hessian eigenvalues ordered |l1| <= |l2|, pixels with l2 >= 0 are
//! background (bright structures curve downward), otherwise
//! `exp(-Rb^2 / 2 beta^2) * (1 - exp(-S^2 / 2 c^2))` with `Rb = l1/l2` and
//! `S = sqrt(l1^2 + l2^2)`.
//!
//! Hessians are computed per scale by separable convolution with sampled
//! Gaussian-derivative kernels (radius `ceil(4 sigma)`, reflected
//! boundaries) and scale-normalized by `sigma^2`. The base kernel is
//! normalized to unit sum; the second-derivative kernel is shifted to zero
//! sum so constant and linear images produce exactly zero response.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::{binarize, RasterImage};

/// Baseline segmenter parameters; the decision vector tuned by CMA-ES.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrangiParams {
    /// Gaussian scales in pixels.
    pub sigmas: Vec<f32>,
    /// Ridge-anisotropy sensitivity.
    pub beta: f32,
    /// Structureness sensitivity, in intensity units.
    pub c: f32,
    /// Segmentation threshold on the vesselness response, in [0, 1].
    pub vesselness_threshold: f32,
    /// Connected components smaller than this many pixels are removed.
    pub min_component_size: usize,
}

impl Default for FrangiParams {
    fn default() -> Self {
        FrangiParams {
            sigmas: vec![1.0, 1.5, 2.0, 3.0],
            beta: 0.5,
            c: 15.0,
            vesselness_threshold: 0.15,
            min_component_size: 20,
        }
    }
}

impl FrangiParams {
    pub fn validate(&self) -> Result<()> {
        if self.sigmas.is_empty() || self.sigmas.iter().any(|&s| s <= 0.0 || !s.is_finite()) {
            return Err(Error::invalid_argument("sigmas must be non-empty and positive"));
        }
        if self.beta <= 0.0 || self.c <= 0.0 {
            return Err(Error::invalid_argument("beta and c must be positive"));
        }
        if !(0.0..=1.0).contains(&self.vesselness_threshold) {
            return Err(Error::invalid_argument("vesselness threshold outside [0, 1]"));
        }
        Ok(())
    }
}

/// Per-pixel scale-normalized second derivatives at one Gaussian scale.
#[derive(Debug, Clone)]
pub struct HessianField {
    pub height: usize,
    pub width: usize,
    pub hxx: Vec<f32>,
    pub hxy: Vec<f32>,
    pub hyy: Vec<f32>,
}

/// Symmetric index fold for out-of-range positions (period 2n-2).
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

/// Sampled Gaussian kernel and its first/second derivatives.
///
/// All three share the unit-sum normalization of the base kernel; the
/// second derivative is additionally shifted to exact zero sum.
fn derivative_kernels(sigma: f32) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let radius = (4.0 * sigma).ceil() as isize;
    let s2 = (sigma as f64).powi(2);
    let mut g = Vec::with_capacity((2 * radius + 1) as usize);
    let mut g1 = Vec::with_capacity(g.capacity());
    let mut g2 = Vec::with_capacity(g.capacity());
    for k in -radius..=radius {
        let x = k as f64;
        let e = (-x * x / (2.0 * s2)).exp();
        g.push(e);
        g1.push(-x / s2 * e);
        g2.push((x * x - s2) / (s2 * s2) * e);
    }
    let z: f64 = g.iter().sum();
    let g2_mean = g2.iter().sum::<f64>() / g2.len() as f64;
    (
        g.iter().map(|v| (v / z) as f32).collect(),
        g1.iter().map(|v| (v / z) as f32).collect(),
        g2.iter().map(|v| ((v - g2_mean) / z) as f32).collect(),
    )
}

/// 1-D convolution along rows (the x axis) with reflected boundaries.
fn conv_x(src: &[f32], h: usize, w: usize, kernel: &[f32]) -> Vec<f32> {
    let r = kernel.len() / 2;
    let mut out = vec![0.0f32; src.len()];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let out_row = &mut out[y * w..(y + 1) * w];
        let interior_end = w.saturating_sub(r);
        for x in 0..w.min(r) {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * row[reflect(x as isize + k as isize - r as isize, w)];
            }
            out_row[x] = acc;
        }
        for x in r..interior_end {
            let window = &row[x - r..x - r + kernel.len()];
            let mut acc = 0.0;
            for (&kv, &v) in kernel.iter().zip(window) {
                acc += kv * v;
            }
            out_row[x] = acc;
        }
        for x in interior_end.max(w.min(r))..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * row[reflect(x as isize + k as isize - r as isize, w)];
            }
            out_row[x] = acc;
        }
    }
    out
}

/// 1-D convolution along columns (the y axis) with reflected boundaries.
fn conv_y(src: &[f32], h: usize, w: usize, kernel: &[f32]) -> Vec<f32> {
    let r = kernel.len() / 2;
    let mut out = vec![0.0f32; src.len()];
    for (k, &kv) in kernel.iter().enumerate() {
        let dy = k as isize - r as isize;
        for y in 0..h {
            let sy = reflect(y as isize + dy, h);
            let src_row = &src[sy * w..(sy + 1) * w];
            let out_row = &mut out[y * w..(y + 1) * w];
            for (o, &v) in out_row.iter_mut().zip(src_row) {
                *o += kv * v;
            }
        }
    }
    out
}

/// Scale-normalized Hessian of the Gaussian-smoothed image.
pub fn gaussian_hessian(gray: &RasterImage, sigma: f32) -> Result<HessianField> {
    if gray.channels() != 1 {
        return Err(Error::invalid_argument(format!(
            "gaussian_hessian expects grayscale, got {} channels",
            gray.channels()
        )));
    }
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(Error::invalid_argument(format!("sigma {sigma} must be positive")));
    }
    let (h, w) = (gray.height(), gray.width());
    let (g, g1, g2) = derivative_kernels(sigma);
    let src = gray.data();
    let norm = sigma * sigma;
    let scale = |mut v: Vec<f32>| {
        for x in &mut v {
            *x *= norm;
        }
        v
    };
    let hxx = scale(conv_y(&conv_x(src, h, w, &g2), h, w, &g));
    let hyy = scale(conv_y(&conv_x(src, h, w, &g), h, w, &g2));
    let hxy = scale(conv_y(&conv_x(src, h, w, &g1), h, w, &g1));
    Ok(HessianField {
        height: h,
        width: w,
        hxx,
        hxy,
        hyy,
    })
}

/// Bright-ridge vesselness response of one Hessian field, in [0, 1].
pub fn vesselness(field: &HessianField, beta: f32, c: f32) -> RasterImage {
    let mut out = RasterImage::new(field.height, field.width, 1);
    let two_beta2 = 2.0 * beta * beta;
    let two_c2 = 2.0 * c * c;
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let (hxx, hxy, hyy) = (field.hxx[i], field.hxy[i], field.hyy[i]);
        let half_tr = 0.5 * (hxx + hyy);
        let d = (0.25 * (hxx - hyy) * (hxx - hyy) + hxy * hxy).sqrt();
        let (a, b) = (half_tr + d, half_tr - d);
        // order by magnitude: |l1| <= |l2|
        let (l1, l2) = if a.abs() <= b.abs() { (a, b) } else { (b, a) };
        if l2 >= 0.0 {
            *v = 0.0;
            continue;
        }
        let rb = l1 / l2;
        let s2 = l1 * l1 + l2 * l2;
        *v = (-rb * rb / two_beta2).exp() * (1.0 - (-s2 / two_c2).exp());
    }
    out
}

/// Labels 8-connected foreground components; returns per-pixel labels
/// (0 = background, 1..=count otherwise) and the component count.
pub fn label_components(mask: &RasterImage) -> (Vec<u32>, usize) {
    assert_eq!(mask.channels(), 1, "label_components expects a mask");
    let (h, w) = (mask.height(), mask.width());
    let data = mask.data();
    let mut labels = vec![0u32; h * w];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..h * w {
        if data[start] < 0.5 || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            let (y, x) = (idx / w, idx % w);
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if dy == 0 && dx == 0 {
                        continue;
                    }
                    let (ny, nx) = (y as isize + dy, x as isize + dx);
                    if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                        continue;
                    }
                    let nidx = ny as usize * w + nx as usize;
                    if data[nidx] >= 0.5 && labels[nidx] == 0 {
                        labels[nidx] = next;
                        stack.push(nidx);
                    }
                }
            }
        }
    }
    (labels, next as usize)
}

/// Removes 8-connected components smaller than `min_size` pixels.
pub fn component_filter(mask: &RasterImage, min_size: usize) -> RasterImage {
    if min_size == 0 {
        return mask.clone();
    }
    let (labels, count) = label_components(mask);
    let mut sizes = vec![0usize; count + 1];
    for &l in &labels {
        sizes[l as usize] += 1;
    }
    let mut out = RasterImage::new(mask.height(), mask.width(), 1);
    for (o, &l) in out.data_mut().iter_mut().zip(labels.iter()) {
        if l != 0 && sizes[l as usize] >= min_size {
            *o = 1.0;
        }
    }
    out
}

/// Full baseline segmentation: max-over-scales vesselness, threshold,
/// small-component removal. Color input is averaged to gray.
pub fn frangi_segment(image: &RasterImage, params: &FrangiParams) -> Result<RasterImage> {
    params.validate()?;
    let gray = image.to_gray();
    let mut best: Option<RasterImage> = None;
    for &sigma in &params.sigmas {
        let field = gaussian_hessian(&gray, sigma)?;
        let v = vesselness(&field, params.beta, params.c);
        best = Some(match best {
            None => v,
            Some(mut acc) => {
                for (a, &b) in acc.data_mut().iter_mut().zip(v.data()) {
                    if b > *a {
                        *a = b;
                    }
                }
                acc
            }
        });
    }
    let response = best.expect("sigmas verified non-empty");
    let mask = binarize(&response, params.vesselness_threshold)?;
    Ok(component_filter(&mask, params.min_component_size))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_image(h: usize, w: usize, v: f32) -> RasterImage {
        RasterImage::from_vec(h, w, 1, vec![v; h * w]).unwrap()
    }

    /// Horizontal bright bar on a dark background.
    fn bar_scene(h: usize, w: usize, bar_half_width: usize) -> RasterImage {
        let mut img = RasterImage::new(h, w, 1);
        let mid = h / 2;
        for y in mid - bar_half_width..=mid + bar_half_width {
            for x in 0..w {
                img.set(y, x, 0, 1.0);
            }
        }
        img
    }

    #[test]
    fn hessian_of_constant_is_zero() {
        let img = constant_image(32, 40, 1.0);
        let f = gaussian_hessian(&img, 2.0).unwrap();
        for i in 0..f.hxx.len() {
            assert!(f.hxx[i].abs() < 1e-6);
            assert!(f.hxy[i].abs() < 1e-6);
            assert!(f.hyy[i].abs() < 1e-6);
        }
    }

    #[test]
    fn hessian_of_ramp_is_zero_in_interior() {
        let (h, w) = (40, 40);
        let mut img = RasterImage::new(h, w, 1);
        for y in 0..h {
            for x in 0..w {
                img.set(y, x, 0, 0.01 * (2.0 * x as f32 + 3.0 * y as f32));
            }
        }
        let sigma = 2.0;
        let f = gaussian_hessian(&img, sigma).unwrap();
        let r = (4.0 * sigma).ceil() as usize;
        for y in r..h - r {
            for x in r..w - r {
                let i = y * w + x;
                assert!(f.hxx[i].abs() < 1e-6, "hxx {} at ({y}, {x})", f.hxx[i]);
                assert!(f.hxy[i].abs() < 1e-6);
                assert!(f.hyy[i].abs() < 1e-6);
            }
        }
    }

    #[test]
    fn hessian_of_gaussian_blob_matches_closed_form() {
        // a peak-1 Gaussian blob of scale s, smoothed at sigma, has
        // hxx(center) = -s^2 / (s^2 + sigma^2)^2, times sigma^2 after
        // scale normalization
        let (h, w) = (81, 81);
        let (cy, cx) = (40.0f32, 40.0f32);
        let s = 4.0f32;
        let mut img = RasterImage::new(h, w, 1);
        for y in 0..h {
            for x in 0..w {
                let r2 = (y as f32 - cy).powi(2) + (x as f32 - cx).powi(2);
                img.set(y, x, 0, (-r2 / (2.0 * s * s)).exp());
            }
        }
        let sigma = 3.0f32;
        let f = gaussian_hessian(&img, sigma).unwrap();
        let v = s * s + sigma * sigma;
        let expected = sigma * sigma * (-(s * s) / (v * v));
        let got = f.hxx[40 * w + 40];
        let rel = ((got - expected) / expected).abs();
        assert!(rel < 0.01, "hxx {got} vs closed form {expected} (rel {rel})");
    }

    #[test]
    fn vesselness_zero_field_and_dark_ridge() {
        let zero = HessianField {
            height: 2,
            width: 2,
            hxx: vec![0.0; 4],
            hxy: vec![0.0; 4],
            hyy: vec![0.0; 4],
        };
        assert!(vesselness(&zero, 0.5, 15.0).data().iter().all(|&v| v == 0.0));
        // dark ridge: dominant eigenvalue positive
        let dark = HessianField {
            height: 1,
            width: 1,
            hxx: vec![5.0],
            hxy: vec![0.0],
            hyy: vec![0.5],
        };
        assert_eq!(vesselness(&dark, 0.5, 15.0).data()[0], 0.0);
    }

    #[test]
    fn vesselness_matches_eigen_oracle() {
        // reference values from nalgebra's symmetric eigensolver
        let img = bar_scene(40, 60, 2);
        let field = gaussian_hessian(&img, 2.0).unwrap();
        let (beta, c) = (0.5, 0.25);
        let mine = vesselness(&field, beta, c);
        for i in 0..field.hxx.len() {
            let m = nalgebra::Matrix2::new(field.hxx[i], field.hxy[i], field.hxy[i], field.hyy[i]);
            let eig = nalgebra::SymmetricEigen::new(m);
            let (mut l1, mut l2) = (eig.eigenvalues[0], eig.eigenvalues[1]);
            if l1.abs() > l2.abs() {
                std::mem::swap(&mut l1, &mut l2);
            }
            let expect = if l2 >= 0.0 {
                0.0
            } else {
                let rb = l1 / l2;
                let s2 = l1 * l1 + l2 * l2;
                (-rb * rb / (2.0 * beta * beta)).exp() * (1.0 - (-s2 / (2.0 * c * c)).exp())
            };
            let got = mine.data()[i];
            assert!(
                (got - expect).abs() < 1e-5,
                "pixel {i}: {got} vs oracle {expect}"
            );
        }
    }

    #[test]
    fn bar_centerline_outscores_background() {
        let (h, w) = (41, 80);
        let img = bar_scene(h, w, 2);
        let field = gaussian_hessian(&img, 2.0).unwrap();
        let v = vesselness(&field, 0.5, 0.25);
        let mid = h / 2;
        let off = 8; // clearly outside the bar
        let mut wins = 0;
        for x in 0..w {
            if v.at(mid, x, 0) > v.at(mid + off, x, 0) {
                wins += 1;
            }
        }
        assert!(
            wins as f64 / w as f64 > 0.99,
            "centerline beat background at only {wins}/{w} columns"
        );
    }

    #[test]
    fn vesselness_invariant_to_constant_offset() {
        let img = bar_scene(30, 40, 2);
        let mut shifted = img.clone();
        for v in shifted.data_mut() {
            *v += 10.0;
        }
        let p = FrangiParams::default();
        let a = gaussian_hessian(&img, 2.0).unwrap();
        let b = gaussian_hessian(&shifted, 2.0).unwrap();
        let va = vesselness(&a, p.beta, p.c);
        let vb = vesselness(&b, p.beta, p.c);
        for (x, y) in va.data().iter().zip(vb.data()) {
            assert!((x - y).abs() < 1e-4);
        }
    }

    #[test]
    fn multiscale_max_dominates_single_scales() {
        let img = bar_scene(40, 60, 2);
        let p = FrangiParams {
            vesselness_threshold: 0.0,
            min_component_size: 0,
            ..FrangiParams::default()
        };
        let gray = img.to_gray();
        let mut max_map = vec![0.0f32; 40 * 60];
        for &s in &p.sigmas {
            let v = vesselness(&gaussian_hessian(&gray, s).unwrap(), p.beta, p.c);
            for (m, &x) in max_map.iter_mut().zip(v.data()) {
                *m = m.max(x);
            }
        }
        for &s in &p.sigmas {
            let v = vesselness(&gaussian_hessian(&gray, s).unwrap(), p.beta, p.c);
            for (m, &x) in max_map.iter().zip(v.data()) {
                assert!(*m >= x);
            }
        }
    }

    #[test]
    fn segment_constant_image_is_empty() {
        let img = constant_image(40, 40, 80.0);
        let mask = frangi_segment(&img, &FrangiParams::default()).unwrap();
        assert_eq!(mask.sum(), 0.0);
    }

    #[test]
    fn segment_recovers_bright_bar() {
        let mut img = constant_image(60, 80, 60.0);
        for y in 28..=31 {
            for x in 5..75 {
                img.set(y, x, 0, 200.0);
            }
        }
        let p = FrangiParams {
            sigmas: vec![1.5, 2.0, 3.0],
            beta: 0.5,
            c: 20.0,
            vesselness_threshold: 0.2,
            min_component_size: 5,
        };
        let mask = frangi_segment(&img, &p).unwrap();
        let mut bar = 0.0;
        let mut hit = 0.0;
        for y in 28..=31 {
            for x in 5..75 {
                bar += 1.0;
                hit += mask.at(y, x, 0);
            }
        }
        assert!(hit / bar >= 0.5, "bar overlap only {}", hit / bar);
    }

    #[test]
    fn segment_min_component_larger_than_image_empties_mask() {
        let mut img = constant_image(40, 40, 60.0);
        for x in 5..35 {
            img.set(20, x, 0, 220.0);
        }
        let p = FrangiParams {
            min_component_size: 40 * 40 + 1,
            ..FrangiParams::default()
        };
        assert_eq!(frangi_segment(&img, &p).unwrap().sum(), 0.0);
    }

    #[test]
    fn component_filter_cases() {
        let mut mask = RasterImage::new(20, 20, 1);
        // 5-pixel blob
        for x in 2..7 {
            mask.set(2, x, 0, 1.0);
        }
        assert_eq!(component_filter(&mask, 0), mask);
        assert_eq!(component_filter(&mask, 10).sum(), 0.0);

        // blobs of size 3 and 50; only the 50 survives min_size 10
        let mut two = RasterImage::new(20, 20, 1);
        for x in 1..4 {
            two.set(1, x, 0, 1.0);
        }
        for y in 10..15 {
            for x in 5..15 {
                two.set(y, x, 0, 1.0);
            }
        }
        let kept = component_filter(&two, 10);
        assert_eq!(kept.sum(), 50.0);
        assert_eq!(kept.at(1, 2, 0), 0.0);
        assert_eq!(kept.at(12, 7, 0), 1.0);
        // every surviving component is at least min_size (independent labelling)
        let (labels, count) = label_components(&kept);
        let mut sizes = vec![0usize; count + 1];
        for &l in &labels {
            sizes[l as usize] += 1;
        }
        for size in sizes.iter().skip(1) {
            assert!(*size >= 10);
        }
    }

    #[test]
    fn invalid_params_are_rejected() {
        let img = constant_image(20, 20, 1.0);
        let bad = FrangiParams {
            sigmas: vec![],
            ..FrangiParams::default()
        };
        assert!(frangi_segment(&img, &bad).is_err());
        let bad = FrangiParams {
            vesselness_threshold: 1.5,
            ..FrangiParams::default()
        };
        assert!(frangi_segment(&img, &bad).is_err());
        let color = RasterImage::new(8, 8, 3);
        assert!(gaussian_hessian(&color, 1.0).is_err());
    }
}
