use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::plant::{KinematicsLog, LEGS};
use crate::scalar::Real;

pub const MIN_SCALE: usize = 16;
pub const SCALE_COUNT: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DfaOptions {
    /// Integrate the mean-removed series before boxing. Turning this off
    /// analyses the raw series directly.
    pub profile: bool,
    /// Box sizes in samples; `None` uses [`default_scales`].
    pub scales: Option<Vec<usize>>,
}

impl Default for DfaOptions {
    fn default() -> Self {
        Self {
            profile: true,
            scales: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfaResult {
    pub alpha: f64,
    pub scales: Vec<usize>,
    pub fluctuations: Vec<f64>,
    pub fit_r2: f64,
}

/// Twelve log-spaced box sizes from 16 samples up to an eighth of the series.
pub fn default_scales(n: usize) -> Result<Vec<usize>, AnalysisError> {
    let max = n / 8;
    if max < 2 * MIN_SCALE {
        return Err(AnalysisError::SeriesTooShort {
            min: 8 * 2 * MIN_SCALE,
            got: n,
        });
    }
    let ratio = (max as f64 / MIN_SCALE as f64).ln();
    let mut scales: Vec<usize> = (0..SCALE_COUNT)
        .map(|k| (MIN_SCALE as f64 * (ratio * k as f64 / (SCALE_COUNT - 1) as f64).exp()).round() as usize)
        .collect();
    scales.dedup();
    Ok(scales)
}

/// Mean RMS residual of a first-degree fit over non-overlapping boxes.
fn fluctuation<T: Real>(y: &[T], s: usize) -> T {
    let boxes = y.len() / s;
    let half = T::from_count(s - 1) * T::c(0.5);
    let sxx = (0..s).fold(T::zero(), |acc, i| {
        let x = T::from_count(i) - half;
        acc + x * x
    });
    let mut total = T::zero();
    for chunk in y.chunks_exact(s).take(boxes) {
        let mean = crate::scalar::mean(chunk);
        let sxy = chunk
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (i, v)| acc + (T::from_count(i) - half) * (*v - mean));
        let slope = sxy / sxx;
        let sse = chunk.iter().enumerate().fold(T::zero(), |acc, (i, v)| {
            let r = *v - mean - slope * (T::from_count(i) - half);
            acc + r * r
        });
        total = total + (sse / T::from_count(s)).sqrt();
    }
    total / T::from_count(boxes)
}

/// Detrended fluctuation analysis with linear detrending.
pub fn dfa<T: Real>(series: &[T], options: &DfaOptions) -> Result<DfaResult, AnalysisError> {
    let n = series.len();
    let scales = match &options.scales {
        Some(s) => s.clone(),
        None => default_scales(n)?,
    };
    if scales.len() < 2 || scales.windows(2).any(|w| w[0] >= w[1]) || scales[0] < 3 {
        return Err(AnalysisError::InvalidScales(
            "need at least two strictly increasing scales of 3 or more samples".into(),
        ));
    }
    let largest = *scales.last().expect("checked non-empty");
    if n < 4 * largest {
        return Err(AnalysisError::SeriesTooShort {
            min: 4 * largest,
            got: n,
        });
    }
    if series.iter().all(|v| *v == series[0]) {
        return Err(AnalysisError::ConstantSeries);
    }
    let mean = crate::scalar::mean(series);
    let y: Vec<T> = if options.profile {
        series
            .iter()
            .scan(T::zero(), |acc, v| {
                *acc = *acc + (*v - mean);
                Some(*acc)
            })
            .collect()
    } else {
        series.iter().map(|v| *v - mean).collect()
    };
    let fluctuations: Vec<f64> = scales.iter().map(|&s| fluctuation(&y, s).f64()).collect();
    if fluctuations.iter().any(|f| !(*f > 0.0)) {
        return Err(AnalysisError::ConstantSeries);
    }
    let lx: Vec<f64> = scales.iter().map(|s| (*s as f64).ln()).collect();
    let ly: Vec<f64> = fluctuations.iter().map(|f| f.ln()).collect();
    let (alpha, fit_r2) = least_squares(&lx, &ly);
    Ok(DfaResult {
        alpha,
        scales,
        fluctuations,
        fit_r2,
    })
}

/// Slope and coefficient of determination of an ordinary least-squares line.
fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, r2)
}

/// Hip-to-foot distance of each leg at every logged sample.
pub fn endpoint_distance_series<T: Real>(log: &KinematicsLog<T>) -> [Vec<T>; LEGS] {
    std::array::from_fn(|leg| log.feet(leg).map(|p| p.distance_to_hip()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn white_noise(n: usize, seed: u64) -> Vec<f64> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::standard();
        (0..n).map(|_| normal.inverse_cdf(rng.random_range(1e-12..1.0))).collect()
    }

    #[test]
    fn scales_are_log_spaced() {
        let s = default_scales(10_000).unwrap();
        assert_eq!(s.len(), 12);
        assert_eq!(s[0], 16);
        assert_eq!(*s.last().unwrap(), 1250);
        assert!(default_scales(100).is_err());
    }

    #[test]
    fn white_noise_and_random_walk_exponents() {
        for seed in 0..5 {
            let start = std::time::Instant::now();
            let w = white_noise(10_000, seed);
            let r = dfa(&w, &DfaOptions::default()).unwrap();
            assert!((r.alpha - 0.5).abs() < 0.05, "white alpha {}", r.alpha);
            assert!(r.fit_r2 > 0.95);
            let walk: Vec<f64> = w
                .iter()
                .scan(0.0, |a, v| {
                    *a += v;
                    Some(*a)
                })
                .collect();
            let r = dfa(&walk, &DfaOptions::default()).unwrap();
            assert!((r.alpha - 1.5).abs() < 0.1, "walk alpha {}", r.alpha);
            assert!(r.fit_r2 > 0.95);
            assert!(start.elapsed().as_secs_f64() < 2.0);
        }
    }

    #[test]
    fn without_the_profile_step_exponents_drop_by_one() {
        let w = white_noise(10_000, 7);
        let opts = DfaOptions {
            profile: false,
            scales: None,
        };
        let walk: Vec<f64> = w
            .iter()
            .scan(0.0, |a, v| {
                *a += v;
                Some(*a)
            })
            .collect();
        let r = dfa(&walk, &opts).unwrap();
        assert!((r.alpha - 0.5).abs() < 0.05);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(dfa(&[2.0; 1000], &DfaOptions::default()), Err(AnalysisError::ConstantSeries));
        let w = white_noise(100, 1);
        let opts = DfaOptions {
            profile: true,
            scales: Some(vec![8, 30]),
        };
        assert!(matches!(dfa(&w, &opts), Err(AnalysisError::SeriesTooShort { .. })));
        let opts = DfaOptions {
            profile: true,
            scales: Some(vec![8, 8]),
        };
        assert!(matches!(dfa(&w, &opts), Err(AnalysisError::InvalidScales(_))));
    }

    #[test]
    fn single_box_fluctuation_matches_a_direct_fit() {
        // y = x^2 on 0..4: best line 4x - 2 over 0..4, residuals 2,-1,-2,-1,2.
        let y = [0.0, 1.0, 4.0, 9.0, 16.0];
        let f = fluctuation(&y, 5);
        assert!((f - (14.0f64 / 5.0).sqrt()).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn alpha_is_affine_invariant(seed in 0u64..1000, a in 0.01f64..100.0, b in -1e3f64..1e3, flip in any::<bool>()) {
            let w = white_noise(2048, seed);
            let a = if flip { -a } else { a };
            let t: Vec<f64> = w.iter().map(|v| a * v + b).collect();
            let r0 = dfa(&w, &DfaOptions::default()).unwrap();
            let r1 = dfa(&t, &DfaOptions::default()).unwrap();
            prop_assert!((r0.alpha - r1.alpha).abs() < 1e-9);
        }
    }
}
