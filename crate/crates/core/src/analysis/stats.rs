use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::AnalysisError;
use crate::babbling::BabblingKind;
use crate::kinematics::Condition;
use crate::plant::SUCCESS_DISTANCE;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub success: bool,
    /// Time of the first crossing of the success distance (s).
    pub travel_time: Option<f64>,
    /// Success distance over travel time (cm/s).
    pub speed: Option<f64>,
    pub final_displacement: f64,
    pub condition: Condition,
    pub kind: BabblingKind,
    pub seed: u64,
}

/// Walking outcome of a displacement trace sampled at `sample_rate`, with
/// sample `i` taken at `i / sample_rate`. The crossing time is interpolated
/// linearly between samples.
pub fn trial_stats<T: Real>(
    displacement: &[T],
    sample_rate: T,
    condition: Condition,
    kind: BabblingKind,
    seed: u64,
) -> TrialStats {
    let rate = sample_rate.f64();
    let d: Vec<f64> = displacement.iter().map(|v| v.f64()).collect();
    let crossing = d.iter().position(|v| *v >= SUCCESS_DISTANCE).map(|i| {
        if i == 0 {
            return 0.0;
        }
        let (a, b) = (d[i - 1], d[i]);
        let frac = (SUCCESS_DISTANCE - a) / (b - a);
        ((i - 1) as f64 + frac) / rate
    });
    let distance_cm = SUCCESS_DISTANCE * 100.0;
    TrialStats {
        success: crossing.is_some(),
        travel_time: crossing,
        speed: crossing.map(|t| distance_cm / t),
        final_displacement: d.last().copied().unwrap_or(0.0),
        condition,
        kind,
        seed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    /// Two-sided p-value.
    pub p: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Welch's unequal-variance two-sample t-test.
pub fn two_sample_test(a: &[f64], b: &[f64]) -> Result<WelchResult, AnalysisError> {
    let shortest = a.len().min(b.len());
    if shortest < 2 {
        return Err(AnalysisError::InsufficientData { min: 2, got: shortest });
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if se2 == 0.0 {
        let p = if ma == mb { 1.0 } else { 0.0 };
        let t = if ma == mb { 0.0 } else { (ma - mb).signum() * f64::INFINITY };
        return Ok(WelchResult { t, df: na + nb - 2.0, p });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(WelchResult { t, df, p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Two-sided tail of Student's t by substituting t = sqrt(nu) tan(u):
    /// the density becomes proportional to cos(u)^(nu - 1) on [0, pi/2].
    fn tail_by_quadrature(t: f64, nu: f64) -> f64 {
        let f = |u: f64| u.cos().powf(nu - 1.0);
        let simpson = |a: f64, b: f64| {
            let n = 20_000;
            let h = (b - a) / n as f64;
            let mut s = f(a) + f(b);
            for i in 1..n {
                s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        };
        let half_pi = std::f64::consts::FRAC_PI_2;
        simpson((t.abs() / nu.sqrt()).atan(), half_pi) / simpson(0.0, half_pi)
    }

    #[test]
    fn agrees_with_an_independent_tail_integral() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let na = rng.random_range(3..10);
            let nb = rng.random_range(3..10);
            let shift = rng.random_range(-1.0..1.0);
            let a: Vec<f64> = (0..na).map(|_| rng.random_range(0.0..1.0)).collect();
            let b: Vec<f64> = (0..nb).map(|_| shift + rng.random_range(0.0..2.0)).collect();
            let r = two_sample_test(&a, &b).unwrap();
            let oracle = tail_by_quadrature(r.t, r.df);
            assert!((r.p - oracle).abs() < 1e-6, "p {} vs {oracle}", r.p);
        }
    }

    #[test]
    fn trivial_groups() {
        let a = [0.3, 0.5, 0.9];
        assert_eq!(two_sample_test(&a, &a).unwrap().p, 1.0);
        let z = [0.0, 0.0, 0.0, 0.0];
        let o = [1.0, 1.0 + 1e-6, 1.0 - 1e-6, 1.0];
        assert!(two_sample_test(&z, &o).unwrap().p < 0.01);
        assert_eq!(
            two_sample_test(&[1.0], &a),
            Err(AnalysisError::InsufficientData { min: 2, got: 1 })
        );
    }

    #[test]
    fn welch_statistic_by_hand() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.0, 4.0, 6.0];
        let r = two_sample_test(&a, &b).unwrap();
        // var a = 5/3, var b = 4
        let se2: f64 = 5.0 / 12.0 + 4.0 / 3.0;
        assert!((r.t - (2.5 - 4.0) / se2.sqrt()).abs() < 1e-12);
        let df = se2 * se2 / ((5.0f64 / 12.0).powi(2) / 3.0 + (4.0f64 / 3.0).powi(2) / 2.0);
        assert!((r.df - df).abs() < 1e-12);
    }

    #[test]
    fn crossing_time_and_speed() {
        // 0.40 m reached exactly at sample 2000 of a 100 Hz trace.
        let d: Vec<f64> = (0..3000).map(|i| i as f64 * 0.0002).collect();
        let s = trial_stats(&d, 100.0, Condition::SlightContact, BabblingKind::Natural, 3);
        assert!(s.success);
        assert!((s.travel_time.unwrap() - 20.0).abs() < 1e-9);
        assert!((s.speed.unwrap() - 2.0).abs() < 1e-9);
        assert!((s.speed.unwrap() * s.travel_time.unwrap() - 40.0).abs() < 1e-12);

        let sat: Vec<f64> = (0..3000).map(|i| (i as f64 * 0.001).min(0.10)).collect();
        let s = trial_stats(&sat, 100.0, Condition::InAir, BabblingKind::Naive, 3);
        assert!(!s.success);
        assert_eq!(s.speed, None);
        assert_eq!(s.final_displacement, 0.10);
    }
}
