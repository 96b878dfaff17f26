//! Segmentation metrics, skeleton-based root length, line-intersect
//! simulation and correlation statistics.
//!
//! Metrics with a 0/0 denominator are *undefined* (`None`), never silently
//! zero, and are excluded from aggregates — matching how images without
//! roots are treated in evaluation. F1 is computed through the Dice
//! identity `2*tp / (2*tp + fp + fn)`, which extends `2pr/(p+r)`
//! continuously to the empty-prediction case and is undefined only when
//! prediction and truth are both empty.
//!
//! Skeletonization is sequential directional thinning: per pass (N, S, E,
//! W) the border pixels of that direction are frozen, then deleted one by
//! one when deletion provably preserves 8-connectivity of the foreground
//! and 4-connectivity of the background (a 256-entry simple-point table),
//! with endpoints protected. Deletions never disconnect a component, and
//! disjoint components thin independently, so skeleton length is exactly
//! additive over components.

use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::RasterImage;

/// Pixel-wise confusion counts between a predicted and a reference mask.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }

    /// Pools counts from another image.
    pub fn accumulate(&mut self, other: &ConfusionCounts) {
        self.true_pos += other.true_pos;
        self.false_pos += other.false_pos;
        self.false_neg += other.false_neg;
        self.true_neg += other.true_neg;
    }
}

/// Derived metrics; `None` marks an undefined (0/0) value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub f1: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub accuracy: Option<f64>,
}

/// Counts agreement between two binary masks of equal shape.
pub fn confusion(pred: &RasterImage, truth: &RasterImage) -> Result<ConfusionCounts> {
    if pred.height() != truth.height()
        || pred.width() != truth.width()
        || pred.channels() != 1
        || truth.channels() != 1
    {
        return Err(Error::invalid_argument(format!(
            "confusion shape mismatch: {}x{}x{} vs {}x{}x{}",
            pred.height(),
            pred.width(),
            pred.channels(),
            truth.height(),
            truth.width(),
            truth.channels()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.data().iter().zip(truth.data().iter()) {
        match (p >= 0.5, t >= 0.5) {
            (true, true) => c.true_pos += 1,
            (true, false) => c.false_pos += 1,
            (false, true) => c.false_neg += 1,
            (false, false) => c.true_neg += 1,
        }
    }
    Ok(c)
}

/// Precision, recall, F1 and accuracy from confusion counts.
pub fn f1_precision_recall_accuracy(c: &ConfusionCounts) -> Metrics {
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            None
        } else {
            Some(num as f64 / den as f64)
        }
    };
    Metrics {
        f1: ratio(2 * c.true_pos, 2 * c.true_pos + c.false_pos + c.false_neg),
        precision: ratio(c.true_pos, c.true_pos + c.false_pos),
        recall: ratio(c.true_pos, c.true_pos + c.false_neg),
        accuracy: ratio(c.true_pos + c.true_neg, c.total()),
    }
}

/// `2pr / (p + r)`, the harmonic mean used throughout evaluation.
pub fn f1_from_precision_recall(precision: f64, recall: f64) -> f64 {
    2.0 * precision * recall / (precision + recall)
}

// --- skeletonization -------------------------------------------------------

// ring neighbor offsets, clockwise from north; bit i of a neighborhood
// mask corresponds to OFFS[i]
const OFFS: [(isize, isize); 8] = [
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
];

fn count_components(bits: u8, adjacent: impl Fn(usize, usize) -> bool) -> u32 {
    let mut seen = 0u8;
    let mut comps = 0;
    for start in 0..8 {
        if bits & (1 << start) == 0 || seen & (1 << start) != 0 {
            continue;
        }
        comps += 1;
        let mut stack = vec![start];
        seen |= 1 << start;
        while let Some(u) = stack.pop() {
            for v in 0..8 {
                if bits & (1 << v) != 0 && seen & (1 << v) == 0 && adjacent(u, v) {
                    seen |= 1 << v;
                    stack.push(v);
                }
            }
        }
    }
    comps
}

/// `SIMPLE[mask]` is true when deleting a pixel with that 8-neighborhood
/// keeps the foreground 8-connected and the background 4-connected.
static SIMPLE: LazyLock<[bool; 256]> = LazyLock::new(|| {
    let adj8 = |i: usize, j: usize| {
        let (ay, ax) = OFFS[i];
        let (by, bx) = OFFS[j];
        (ay - by).abs().max((ax - bx).abs()) == 1
    };
    let adj4 = |i: usize, j: usize| {
        let (ay, ax) = OFFS[i];
        let (by, bx) = OFFS[j];
        (ay - by).abs() + (ax - bx).abs() == 1
    };
    let mut table = [false; 256];
    for (mask, entry) in table.iter_mut().enumerate() {
        let fg = mask as u8;
        let bg = !fg;
        if count_components(fg, adj8) != 1 {
            continue;
        }
        // background 4-components that touch an edge neighbor (bits 0/2/4/6)
        let mut seen = 0u8;
        let mut touching = 0;
        for start in 0..8 {
            if bg & (1 << start) == 0 || seen & (1 << start) != 0 {
                continue;
            }
            let mut comp = 1u8 << start;
            let mut stack = vec![start];
            seen |= 1 << start;
            while let Some(u) = stack.pop() {
                for v in 0..8 {
                    if bg & (1 << v) != 0 && seen & (1 << v) == 0 && adj4(u, v) {
                        seen |= 1 << v;
                        comp |= 1 << v;
                        stack.push(v);
                    }
                }
            }
            if comp & 0b0101_0101 != 0 {
                touching += 1;
            }
        }
        *entry = touching == 1;
    }
    table
});

/// Thins a binary mask to a 1-pixel-wide, 8-connected skeleton.
pub fn skeletonize(mask: &RasterImage) -> RasterImage {
    let (h, w) = (mask.height(), mask.width());
    // 1-pixel zero border avoids bounds checks in the ring lookups
    let (ph, pw) = (h + 2, w + 2);
    let mut img = vec![0u8; ph * pw];
    for y in 0..h {
        for x in 0..w {
            if mask.at(y, x, 0) >= 0.5 {
                img[(y + 1) * pw + (x + 1)] = 1;
            }
        }
    }
    let ring = |img: &[u8], idx: usize| -> u8 {
        let y = (idx / pw) as isize;
        let x = (idx % pw) as isize;
        let mut m = 0u8;
        for (i, (dy, dx)) in OFFS.iter().enumerate() {
            if img[((y + dy) as usize) * pw + (x + dx) as usize] != 0 {
                m |= 1 << i;
            }
        }
        m
    };
    let dir_offsets: [isize; 4] = [-(pw as isize), pw as isize, 1, -1]; // N, S, E, W
    let mut changed = true;
    while changed {
        changed = false;
        for &d in &dir_offsets {
            // border pixels for this direction, frozen before deleting
            let candidates: Vec<usize> = (pw..img.len() - pw)
                .filter(|&i| img[i] != 0 && img[(i as isize + d) as usize] == 0)
                .collect();
            for idx in candidates {
                if img[idx] == 0 {
                    continue;
                }
                let m = ring(&img, idx);
                if m.count_ones() <= 1 {
                    continue; // endpoint or isolated pixel
                }
                if SIMPLE[m as usize] {
                    img[idx] = 0;
                    changed = true;
                }
            }
        }
    }
    let mut out = RasterImage::new(h, w, 1);
    for y in 0..h {
        for x in 0..w {
            if img[(y + 1) * pw + (x + 1)] != 0 {
                out.set(y, x, 0, 1.0);
            }
        }
    }
    out
}

/// Root length estimate: pixel count of the thinned mask.
pub fn root_length_px(mask: &RasterImage) -> u64 {
    skeletonize(mask).data().iter().filter(|&&v| v >= 0.5).count() as u64
}

// --- line-intersect simulation ---------------------------------------------

/// The manual counting grid overlaid on a rhizotron panel.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridSpec {
    /// Grid square size; the counting protocol uses 10, 20, 40 or 80 mm.
    pub square_size_mm: f64,
    pub mm_per_pixel: f64,
    pub panel_width_mm: f64,
    pub panel_height_mm: f64,
}

impl GridSpec {
    fn validate(&self) -> Result<()> {
        const SIZES: [f64; 4] = [10.0, 20.0, 40.0, 80.0];
        if !SIZES.contains(&self.square_size_mm) {
            return Err(Error::invalid_argument(format!(
                "grid square {} mm not one of {:?}",
                self.square_size_mm, SIZES
            )));
        }
        if self.mm_per_pixel <= 0.0 || self.panel_width_mm <= 0.0 || self.panel_height_mm <= 0.0 {
            return Err(Error::invalid_argument(
                "grid scale/panel dims must be positive",
            ));
        }
        Ok(())
    }
}

/// Simulates the manual line-intersect count.
///
/// Grid lines lie at interior multiples of the square size (panel borders
/// are not grid lines). A maximal run of root pixels along a line counts
/// as one crossing. Root intensity is crossings per metre of grid line,
/// with total line length `n_h * panel_width + n_v * panel_height`.
pub fn line_intersect(mask: &RasterImage, grid: &GridSpec) -> Result<(u64, f64)> {
    grid.validate()?;
    if mask.channels() != 1 {
        return Err(Error::invalid_argument("line_intersect expects a mask"));
    }
    let (h, w) = (mask.height(), mask.width());
    let s = grid.square_size_mm;

    let lines_in = |extent_mm: f64, pixels: usize| -> Vec<usize> {
        let mut lines = Vec::new();
        let mut k = 1;
        loop {
            let pos_mm = k as f64 * s;
            if pos_mm >= extent_mm {
                break;
            }
            let px = (pos_mm / grid.mm_per_pixel).round() as usize;
            if px < pixels {
                lines.push(px);
            }
            k += 1;
        }
        lines
    };
    let rows = lines_in(grid.panel_height_mm, h);
    let cols = lines_in(grid.panel_width_mm, w);
    if rows.is_empty() && cols.is_empty() {
        return Err(Error::invalid_argument(format!(
            "grid of {s} mm has no lines inside a {}x{} mm panel",
            grid.panel_width_mm, grid.panel_height_mm
        )));
    }

    let mut crossings = 0u64;
    for &y in &rows {
        let mut inside = false;
        for x in 0..w {
            let root = mask.at(y, x, 0) >= 0.5;
            if root && !inside {
                crossings += 1;
            }
            inside = root;
        }
    }
    for &x in &cols {
        let mut inside = false;
        for y in 0..h {
            let root = mask.at(y, x, 0) >= 0.5;
            if root && !inside {
                crossings += 1;
            }
            inside = root;
        }
    }

    let total_line_m = (rows.len() as f64 * grid.panel_width_mm
        + cols.len() as f64 * grid.panel_height_mm)
        / 1000.0;
    Ok((crossings, crossings as f64 / total_line_m))
}

// --- correlation statistics --------------------------------------------------

fn ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // ties share the mean of their rank span (1-based)
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = mean_rank;
        }
        i = j + 1;
    }
    out
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some(sxy / (sxx * syy).sqrt())
    }
}

/// Spearman rank correlation; ties receive mean ranks. `None` when either
/// input has zero rank variance.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<Option<f64>> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::invalid_argument(format!(
            "spearman needs two equal-length lists of >= 3 values, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    Ok(pearson(&ranks(xs), &ranks(ys)))
}

/// Coefficient of determination of the least-squares line of `ys` on `xs`.
pub fn r_squared(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::invalid_argument(format!(
            "r_squared needs two equal-length lists of >= 3 values, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid_argument("r_squared undefined for constant xs"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    let ss_tot: f64 = ys.iter().map(|&y| (y - my) * (y - my)).sum();
    if ss_tot == 0.0 {
        // constant ys are fit exactly by the zero-slope line
        return Ok(1.0);
    }
    Ok(1.0 - ss_res / ss_tot)
}

// --- aggregate report ---------------------------------------------------------

/// Per-image and aggregated metrics over a set of (prediction, truth) pairs.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub per_image: Vec<Metrics>,
    /// Metrics over all pixels pooled across images.
    pub pooled: Metrics,
    /// Mean/standard deviation over images whose truth contains roots;
    /// undefined per-image values are excluded.
    pub mean_f1: Option<f64>,
    pub std_f1: Option<f64>,
    pub mean_precision: Option<f64>,
    pub std_precision: Option<f64>,
    pub mean_recall: Option<f64>,
    pub std_recall: Option<f64>,
    /// Fraction of pixels predicted root / labelled root, pooled.
    pub prediction_mean: f64,
    pub true_mean: f64,
    pub rooted_images: usize,
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

/// Computes pooled and per-rooted-image statistics for a prediction set.
pub fn report(pairs: &[(RasterImage, RasterImage)]) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(Error::invalid_argument("report needs at least one image"));
    }
    let mut pooled = ConfusionCounts::default();
    let mut per_image = Vec::with_capacity(pairs.len());
    let mut rooted = 0usize;
    let mut f1s = Vec::new();
    let mut precisions = Vec::new();
    let mut recalls = Vec::new();
    for (pred, truth) in pairs {
        let c = confusion(pred, truth)?;
        pooled.accumulate(&c);
        let m = f1_precision_recall_accuracy(&c);
        if c.true_pos + c.false_neg > 0 {
            rooted += 1;
            if let Some(v) = m.f1 {
                f1s.push(v);
            }
            if let Some(v) = m.precision {
                precisions.push(v);
            }
            if let Some(v) = m.recall {
                recalls.push(v);
            }
        }
        per_image.push(m);
    }
    let total = pooled.total() as f64;
    let (mean_f1, std_f1) = mean_std(&f1s);
    let (mean_precision, std_precision) = mean_std(&precisions);
    let (mean_recall, std_recall) = mean_std(&recalls);
    Ok(MetricsReport {
        per_image,
        pooled: f1_precision_recall_accuracy(&pooled),
        mean_f1,
        std_f1,
        mean_precision,
        std_precision,
        mean_recall,
        std_recall,
        prediction_mean: (pooled.true_pos + pooled.false_pos) as f64 / total,
        true_mean: (pooled.true_pos + pooled.false_neg) as f64 / total,
        rooted_images: rooted,
    })
}
