//! Covariance Matrix Adaptation Evolution Strategy, plus the baseline
//! tuning objective `1 - mean(F1)`.
//!
//! The minimizer is the standard (mu/mu_w, lambda) strategy: rank-based
//! recombination weights, cumulative step-size adaptation, and rank-1 +
//! rank-mu covariance updates, with Hansen's published default constants.
//! Bounds are enforced by clipping sampled candidates coordinate-wise
//! before evaluation; the clipped point is also what enters the update.
//!
//! Non-finite objective values never crash a run: offending candidates are
//! assigned the worst finite fitness of their generation and logged.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analysis::{confusion, f1_precision_recall_accuracy};
use crate::error::{Error, Result};
use crate::frangi::{frangi_segment, FrangiParams};
use crate::imagecore::RasterImage;
use crate::rng::seeded_rng;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CmaConfig {
    pub dimension: usize,
    pub initial_mean: Vec<f64>,
    pub initial_sigma: f64,
    /// Candidates per generation; defaults to `4 + floor(3 ln n)`.
    pub population_size: Option<usize>,
    pub max_evaluations: usize,
    /// Stop once the best fitness reaches this value.
    pub target_fitness: f64,
    pub seed: u64,
    /// Optional per-coordinate [lo, hi] box.
    pub bounds: Option<Vec<(f64, f64)>>,
}

impl CmaConfig {
    pub fn new(initial_mean: Vec<f64>, initial_sigma: f64, seed: u64) -> Self {
        CmaConfig {
            dimension: initial_mean.len(),
            initial_mean,
            initial_sigma,
            population_size: None,
            max_evaluations: 5000,
            target_fitness: f64::NEG_INFINITY,
            seed,
            bounds: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dimension == 0 || self.initial_mean.len() != self.dimension {
            return Err(Error::invalid_argument(format!(
                "dimension {} does not match mean length {}",
                self.dimension,
                self.initial_mean.len()
            )));
        }
        if self.initial_sigma <= 0.0 {
            return Err(Error::invalid_argument("initial_sigma must be positive"));
        }
        if let Some(p) = self.population_size {
            if p < 2 {
                return Err(Error::invalid_argument("population_size must be >= 2"));
            }
        }
        if let Some(bounds) = &self.bounds {
            if bounds.len() != self.dimension {
                return Err(Error::invalid_argument("bounds length != dimension"));
            }
            if bounds.iter().any(|(lo, hi)| !(lo < hi)) {
                return Err(Error::invalid_argument("each bound needs lo < hi"));
            }
        }
        Ok(())
    }
}

/// End-of-generation snapshot; `best_fitness` is the best seen so far,
/// so the column is non-increasing down the history.
#[derive(Debug, Clone, Copy)]
pub struct GenerationStat {
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone)]
pub struct CmaResult {
    pub best_point: Vec<f64>,
    pub best_fitness: f64,
    pub evaluations_used: usize,
    pub history: Vec<GenerationStat>,
}

/// Minimizes a black-box objective.
pub fn cmaes_minimize(
    mut objective: impl FnMut(&[f64]) -> f64,
    cfg: &CmaConfig,
) -> Result<CmaResult> {
    cfg.validate()?;
    let n = cfg.dimension;
    let nf = n as f64;
    let lambda = cfg
        .population_size
        .unwrap_or_else(|| 4 + (3.0 * nf.ln()).floor() as usize)
        .max(2);
    let mu = lambda / 2;
    let raw_weights: Vec<f64> = (0..mu)
        .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - ((i + 1) as f64).ln())
        .collect();
    let wsum: f64 = raw_weights.iter().sum();
    let weights: Vec<f64> = raw_weights.iter().map(|w| w / wsum).collect();
    let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

    let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
    let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
    let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
    let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
    let c_mu = (2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff)).min(1.0 - c_1);
    let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

    let clip = |x: &mut DVector<f64>| {
        if let Some(bounds) = &cfg.bounds {
            for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
                *v = v.clamp(lo, hi);
            }
        }
    };

    let mut mean = DVector::from_column_slice(&cfg.initial_mean);
    clip(&mut mean);
    let mut sigma = cfg.initial_sigma;
    let mut cov = DMatrix::<f64>::identity(n, n);
    let mut p_c = DVector::<f64>::zeros(n);
    let mut p_sigma = DVector::<f64>::zeros(n);
    let mut rng = seeded_rng(cfg.seed);

    let mut best_point: Vec<f64> = mean.iter().copied().collect();
    let mut best_fitness = f64::INFINITY;
    let mut evaluations = 0usize;
    let mut history = Vec::new();
    let mut generation = 0usize;

    while evaluations + lambda <= cfg.max_evaluations && best_fitness > cfg.target_fitness {
        let eigen = nalgebra::SymmetricEigen::new(cov.clone());
        let sqrt_vals = eigen.eigenvalues.map(|v| v.max(1e-30).sqrt());
        let bd = &eigen.eigenvectors * DMatrix::from_diagonal(&sqrt_vals);

        let mut candidates = Vec::with_capacity(lambda);
        let mut fitnesses = Vec::with_capacity(lambda);
        for _ in 0..lambda {
            let z = DVector::from_iterator(
                n,
                (0..n).map(|_| {
                    let v: f64 = StandardNormal.sample(&mut rng);
                    v
                }),
            );
            let mut x = &mean + sigma * (&bd * z);
            clip(&mut x);
            let f = objective(x.as_slice());
            evaluations += 1;
            candidates.push(x);
            fitnesses.push(f);
        }

        // repair non-finite fitnesses to the generation's worst finite value
        let worst_finite = fitnesses
            .iter()
            .copied()
            .filter(|f| f.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        let fallback = if worst_finite.is_finite() { worst_finite } else { 1e300 };
        for f in &mut fitnesses {
            if !f.is_finite() {
                log::warn!("generation {generation}: non-finite objective value, using {fallback}");
                *f = fallback;
            }
        }

        let mut order: Vec<usize> = (0..lambda).collect();
        order.sort_by(|&a, &b| fitnesses[a].partial_cmp(&fitnesses[b]).unwrap());

        if fitnesses[order[0]] < best_fitness {
            best_fitness = fitnesses[order[0]];
            best_point = candidates[order[0]].iter().copied().collect();
        }

        let old_mean = mean.clone();
        let mut new_mean = DVector::zeros(n);
        for (w, &idx) in weights.iter().zip(order.iter()) {
            new_mean += *w * &candidates[idx];
        }
        mean = new_mean;

        let mean_shift = (&mean - &old_mean) / sigma;
        let inv_sqrt_vals = eigen.eigenvalues.map(|v| 1.0 / v.max(1e-30).sqrt());
        let c_inv_sqrt = &eigen.eigenvectors
            * DMatrix::from_diagonal(&inv_sqrt_vals)
            * eigen.eigenvectors.transpose();

        p_sigma = (1.0 - c_sigma) * &p_sigma
            + (c_sigma * (2.0 - c_sigma) * mu_eff).sqrt() * (&c_inv_sqrt * &mean_shift);
        let expected_decay = (1.0 - (1.0 - c_sigma).powi(2 * (generation as i32 + 1))).sqrt();
        let h_sigma = if p_sigma.norm() / expected_decay < (1.4 + 2.0 / (nf + 1.0)) * chi_n {
            1.0
        } else {
            0.0
        };
        p_c = (1.0 - c_c) * &p_c + h_sigma * (c_c * (2.0 - c_c) * mu_eff).sqrt() * &mean_shift;

        let mut rank_mu = DMatrix::<f64>::zeros(n, n);
        for (w, &idx) in weights.iter().zip(order.iter()) {
            let y = (&candidates[idx] - &old_mean) / sigma;
            rank_mu += *w * &y * y.transpose();
        }
        let delta_h = (1.0 - h_sigma) * c_c * (2.0 - c_c);
        cov = (1.0 - c_1 - c_mu + c_1 * delta_h) * cov
            + c_1 * (&p_c * p_c.transpose())
            + c_mu * rank_mu;
        cov = (&cov + cov.transpose()) * 0.5;

        sigma *= ((c_sigma / d_sigma) * (p_sigma.norm() / chi_n - 1.0)).exp();
        sigma = sigma.clamp(1e-300, 1e12);

        let mean_fitness = fitnesses.iter().sum::<f64>() / lambda as f64;
        history.push(GenerationStat {
            best_fitness,
            mean_fitness,
            sigma,
        });
        generation += 1;
    }

    Ok(CmaResult {
        best_point,
        best_fitness,
        evaluations_used: evaluations,
        history,
    })
}

// --- baseline tuning objective -----------------------------------------------

/// Decision-vector layout for baseline tuning:
/// `(sigma_min, sigma_max, beta, c, threshold, min_component_size)`.
/// Scales become [`FRANGI_DECODE_SCALES`] evenly spaced sigmas.
pub const FRANGI_VECTOR_DIM: usize = 6;
pub const FRANGI_DECODE_SCALES: usize = 4;

/// Default tuning box for the decision vector.
pub const FRANGI_TUNE_BOUNDS: [(f64, f64); FRANGI_VECTOR_DIM] = [
    (0.5, 6.0),   // sigma_min
    (1.0, 10.0),  // sigma_max
    (0.05, 3.0),  // beta
    (0.5, 100.0), // c
    (0.01, 0.9),  // vesselness threshold
    (0.0, 200.0), // min component size
];

/// Decodes a decision vector into valid parameters, clamping each
/// coordinate to its legal range and ordering the scale interval.
pub fn decode_frangi_vector(v: &[f64]) -> Result<FrangiParams> {
    if v.len() != FRANGI_VECTOR_DIM {
        return Err(Error::invalid_argument(format!(
            "frangi decision vector needs {FRANGI_VECTOR_DIM} coordinates, got {}",
            v.len()
        )));
    }
    let s_min = v[0].clamp(FRANGI_TUNE_BOUNDS[0].0, FRANGI_TUNE_BOUNDS[0].1);
    let s_max = v[1].clamp(s_min, FRANGI_TUNE_BOUNDS[1].1);
    let sigmas = (0..FRANGI_DECODE_SCALES)
        .map(|i| {
            let t = i as f64 / (FRANGI_DECODE_SCALES - 1) as f64;
            (s_min + t * (s_max - s_min)) as f32
        })
        .collect();
    Ok(FrangiParams {
        sigmas,
        beta: v[2].clamp(FRANGI_TUNE_BOUNDS[2].0, FRANGI_TUNE_BOUNDS[2].1) as f32,
        c: v[3].clamp(FRANGI_TUNE_BOUNDS[3].0, FRANGI_TUNE_BOUNDS[3].1) as f32,
        vesselness_threshold: v[4].clamp(0.0, 1.0) as f32,
        min_component_size: v[5].clamp(0.0, FRANGI_TUNE_BOUNDS[5].1).round() as usize,
    })
}

/// `1 - mean(F1)` of a segmenter over a labelled dataset; images whose
/// truth mask is empty are excluded from the mean (their F1 is undefined).
fn mean_f1_objective(
    dataset: &[(RasterImage, RasterImage)],
    mut segment: impl FnMut(&RasterImage) -> Result<RasterImage>,
) -> Result<f64> {
    let mut f1_sum = 0.0;
    let mut counted = 0usize;
    for (image, truth) in dataset {
        if truth.data().iter().all(|&v| v < 0.5) {
            continue;
        }
        let pred = segment(image)?;
        let c = confusion(&pred, truth)?;
        // truth is non-empty, so F1 is defined (0 for an empty prediction)
        let f1 = f1_precision_recall_accuracy(&c).f1.expect("rooted image");
        f1_sum += f1;
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::invalid_argument(
            "objective undefined: every image in the dataset has an empty mask",
        ));
    }
    Ok(1.0 - f1_sum / counted as f64)
}

/// Tuning objective for the Frangi baseline on a labelled dataset.
pub fn frangi_objective(dataset: &[(RasterImage, RasterImage)], vector: &[f64]) -> Result<f64> {
    let params = decode_frangi_vector(vector)?;
    mean_f1_objective(dataset, |image| frangi_segment(image, &params))
}
