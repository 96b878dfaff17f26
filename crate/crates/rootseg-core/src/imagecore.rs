//! Pixel containers, mirror padding, tile-grid planning and binarization.
//!
//! [`RasterImage`] is the universal container for photos (3 channels,
//! values in `[0, 255]`), probability maps (1 channel, `[0, 1]`) and
//! binary masks (1 channel, `{0, 1}`). Data is stored row-major with
//! interleaved channels.
//!
//! Tiling follows the valid-convolution network geometry: an input window
//! of `in_size` pixels produces a centered output window of `out_size`
//! pixels. A [`TileSpec`] records the input window in *padded*-image
//! coordinates and the output window in *original*-image coordinates;
//! padding the image by `(in_size - out_size) / 2` makes both origins
//! numerically equal.

use crate::error::{Error, Result};

/// H x W x C array of real-valued intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl RasterImage {
    /// Zero-filled image.
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        RasterImage {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    /// Wraps an existing buffer; `data.len()` must equal `h * w * c`.
    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::invalid_argument(format!(
                "buffer length {} does not match {}x{}x{}",
                data.len(),
                height,
                width,
                channels
            )));
        }
        Ok(RasterImage {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// One image row of channel-interleaved values.
    #[inline]
    pub fn row(&self, y: usize) -> &[f32] {
        let stride = self.width * self.channels;
        &self.data[y * stride..(y + 1) * stride]
    }

    /// Channel-mean grayscale copy; a single-channel image is cloned.
    pub fn to_gray(&self) -> RasterImage {
        if self.channels == 1 {
            return self.clone();
        }
        let mut out = RasterImage::new(self.height, self.width, 1);
        let c = self.channels as f32;
        for (dst, px) in out.data.iter_mut().zip(self.data.chunks_exact(self.channels)) {
            *dst = px.iter().sum::<f32>() / c;
        }
        out
    }

    /// Sum of all values; for a binary mask this is the foreground count.
    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }
}

/// Placement of one network input window and its output window.
///
/// `in_origin` addresses the padded image, `out_origin` the original one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileSpec {
    pub in_origin: (usize, usize),
    pub in_size: usize,
    pub out_origin: (usize, usize),
    pub out_size: usize,
}

impl TileSpec {
    /// Margin between the input and output windows on each side.
    pub fn margin(&self) -> usize {
        (self.in_size - self.out_size) / 2
    }
}

/// Pads by reflecting about the edge pixel without repeating it, so
/// `padded[-1] == original[1]`.
pub fn mirror_pad(img: &RasterImage, margin: usize) -> Result<RasterImage> {
    if margin >= img.height.min(img.width) && margin > 0 {
        return Err(Error::invalid_argument(format!(
            "mirror margin {} too large for {}x{} image (must be < min dimension)",
            margin, img.height, img.width
        )));
    }
    if margin == 0 {
        return Ok(img.clone());
    }
    let (h, w, c) = (img.height, img.width, img.channels);
    let mut out = RasterImage::new(h + 2 * margin, w + 2 * margin, c);
    let reflect = |i: isize, n: usize| -> usize {
        if i < 0 {
            (-i) as usize
        } else if i as usize >= n {
            2 * n - 2 - i as usize
        } else {
            i as usize
        }
    };
    for oy in 0..out.height {
        let sy = reflect(oy as isize - margin as isize, h);
        for ox in 0..out.width {
            let sx = reflect(ox as isize - margin as isize, w);
            for ch in 0..c {
                let v = img.data[(sy * w + sx) * c + ch];
                out.data[(oy * out.width + ox) * c + ch] = v;
            }
        }
    }
    Ok(out)
}

/// Plans a row-major tile grid whose output windows cover every pixel of an
/// `height x width` image.
///
/// The last row/column of tiles is shifted inward to fit, so trailing tiles
/// may overlap their predecessors; [`assemble`] resolves overlaps by letting
/// the later tile win. Images smaller than `out_size` must be padded by the
/// caller before planning.
pub fn plan_tile_grid(
    height: usize,
    width: usize,
    in_size: usize,
    out_size: usize,
) -> Result<Vec<TileSpec>> {
    if in_size <= out_size || out_size == 0 {
        return Err(Error::invalid_argument(format!(
            "need in_size > out_size > 0, got {in_size} and {out_size}"
        )));
    }
    if (in_size - out_size) % 2 != 0 {
        return Err(Error::invalid_argument(format!(
            "in_size - out_size must be even, got {in_size} - {out_size}"
        )));
    }
    if out_size > height || out_size > width {
        return Err(Error::invalid_argument(format!(
            "output window {out_size} exceeds image {height}x{width}; pad the image first"
        )));
    }
    let rows = height.div_ceil(out_size);
    let cols = width.div_ceil(out_size);
    let mut tiles = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let oy = (r * out_size).min(height - out_size);
        for q in 0..cols {
            let ox = (q * out_size).min(width - out_size);
            tiles.push(TileSpec {
                in_origin: (oy, ox),
                in_size,
                out_origin: (oy, ox),
                out_size,
            });
        }
    }
    Ok(tiles)
}

/// Crops the input window of `spec` out of a padded image.
pub fn extract_tile(padded: &RasterImage, spec: &TileSpec) -> Result<RasterImage> {
    let (oy, ox) = spec.in_origin;
    let n = spec.in_size;
    if oy + n > padded.height || ox + n > padded.width {
        return Err(Error::invalid_argument(format!(
            "tile window {}x{} at ({}, {}) outside padded image {}x{}",
            n, n, oy, ox, padded.height, padded.width
        )));
    }
    let c = padded.channels;
    let mut out = RasterImage::new(n, n, c);
    for y in 0..n {
        let src = &padded.row(oy + y)[ox * c..(ox + n) * c];
        out.data[y * n * c..(y + 1) * n * c].copy_from_slice(src);
    }
    Ok(out)
}

/// Writes output tiles back into a full-size single-channel image.
///
/// Tiles are applied in order, so later tiles overwrite earlier ones on
/// overlaps. Errors if any pixel of the assembled image is never covered.
pub fn assemble(tiles: &[(TileSpec, RasterImage)]) -> Result<RasterImage> {
    if tiles.is_empty() {
        return Err(Error::invalid_argument("no tiles to assemble"));
    }
    let mut height = 0;
    let mut width = 0;
    for (spec, img) in tiles {
        if img.height != spec.out_size || img.width != spec.out_size || img.channels != 1 {
            return Err(Error::invalid_argument(format!(
                "tile image {}x{}x{} does not match out_size {}",
                img.height, img.width, img.channels, spec.out_size
            )));
        }
        height = height.max(spec.out_origin.0 + spec.out_size);
        width = width.max(spec.out_origin.1 + spec.out_size);
    }
    let mut out = RasterImage::new(height, width, 1);
    let mut covered = vec![false; height * width];
    for (spec, img) in tiles {
        let (oy, ox) = spec.out_origin;
        for y in 0..spec.out_size {
            let dst_row = (oy + y) * width + ox;
            out.data[dst_row..dst_row + spec.out_size]
                .copy_from_slice(&img.data[y * spec.out_size..(y + 1) * spec.out_size]);
            covered[dst_row..dst_row + spec.out_size].fill(true);
        }
    }
    let uncovered: Vec<usize> = covered
        .iter()
        .enumerate()
        .filter(|(_, &c)| !c)
        .map(|(i, _)| i)
        .collect();
    if !uncovered.is_empty() {
        let preview: Vec<String> = uncovered
            .iter()
            .take(5)
            .map(|i| format!("({}, {})", i / width, i % width))
            .collect();
        return Err(Error::invalid_argument(format!(
            "{} pixels uncovered by tiles, first {}",
            uncovered.len(),
            preview.join(", ")
        )));
    }
    Ok(out)
}

/// Thresholds a probability map into a `{0, 1}` mask; `prob >= threshold`
/// maps to 1.
pub fn binarize(prob: &RasterImage, threshold: f32) -> Result<RasterImage> {
    if prob.channels != 1 {
        return Err(Error::invalid_argument(format!(
            "binarize expects a single-channel map, got {} channels",
            prob.channels
        )));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::invalid_argument(format!(
            "threshold {threshold} outside [0, 1]"
        )));
    }
    let mut out = RasterImage::new(prob.height, prob.width, 1);
    for (dst, &p) in out.data.iter_mut().zip(prob.data.iter()) {
        *dst = if p >= threshold { 1.0 } else { 0.0 };
    }
    Ok(out)
}
