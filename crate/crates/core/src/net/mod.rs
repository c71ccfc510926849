//! The 6-15-3 inverse map from leg kinematics to motor commands.

mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::babbling::{BabblingKind, PwmSequence, PWM_MAX};
use crate::plant::{InverseMap, KinematicsLog};
use crate::scalar::Real;

pub use train::{train, Checkpoint, History, TrainConfig, CHECKPOINT_SCHEMA};

pub const INPUTS: usize = 6;
pub const HIDDEN: usize = 15;
pub const OUTPUTS: usize = 3;
/// Total number of weights and biases.
pub const PARAMETERS: usize = HIDDEN * INPUTS + HIDDEN + OUTPUTS * HIDDEN + OUTPUTS;
/// Smallest dataset `train` accepts.
pub const MIN_SAMPLES: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("non-finite network input")]
    NonFiniteInput,
    #[error("shape mismatch: {left} vs {right} elements")]
    ShapeMismatch { left: usize, right: usize },
    #[error("dataset has {got} samples, need at least {min}")]
    DatasetTooSmall { min: usize, got: usize },
    #[error("dataset contains non-finite values")]
    NonFiniteData,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Per-dimension affine input map `(x - mean) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization<T> {
    pub mean: [T; INPUTS],
    pub scale: [T; INPUTS],
}

impl<T: Real> Normalization<T> {
    pub fn identity() -> Self {
        Self {
            mean: [T::zero(); INPUTS],
            scale: [T::one(); INPUTS],
        }
    }

    /// Z-score constants of `rows`. Constant columns keep unit scale.
    pub fn fit(rows: &[[T; INPUTS]]) -> Self {
        if rows.is_empty() {
            return Self::identity();
        }
        let n = T::from_count(rows.len());
        let mean: [T; INPUTS] =
            std::array::from_fn(|d| rows.iter().fold(T::zero(), |acc, r| acc + r[d]) / n);
        let scale = std::array::from_fn(|d| {
            let var = rows
                .iter()
                .fold(T::zero(), |acc, r| acc + (r[d] - mean[d]) * (r[d] - mean[d]))
                / n;
            let sd = var.sqrt();
            if sd > T::epsilon() {
                sd
            } else {
                T::one()
            }
        });
        Self { mean, scale }
    }

    pub fn apply(&self, x: &[T; INPUTS]) -> [T; INPUTS] {
        std::array::from_fn(|d| (x[d] - self.mean[d]) / self.scale[d])
    }
}

/// Weights, biases, input normalization and the output affine map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    pub w1: [[T; INPUTS]; HIDDEN],
    pub b1: [T; HIDDEN],
    pub w2: [[T; HIDDEN]; OUTPUTS],
    pub b2: [T; OUTPUTS],
    pub input_norm: Normalization<T>,
    /// Commands produced for network outputs of -1 and +1.
    pub output_range: [T; 2],
}

/// Intermediate values of one forward pass in network units.
struct Activations<T> {
    input: [T; INPUTS],
    hidden: [T; HIDDEN],
    output: [T; OUTPUTS],
}

impl<T: Real> Mlp<T> {
    /// All weights and biases zero, identity normalization, PWM output range.
    pub fn zeros() -> Self {
        Self {
            w1: [[T::zero(); INPUTS]; HIDDEN],
            b1: [T::zero(); HIDDEN],
            w2: [[T::zero(); HIDDEN]; OUTPUTS],
            b2: [T::zero(); OUTPUTS],
            input_norm: Normalization::identity(),
            output_range: [T::zero(), T::c(f64::from(PWM_MAX))],
        }
    }

    /// Row norm every hidden unit gets from [`Mlp::nguyen_widrow`].
    pub fn nguyen_widrow_beta() -> T {
        T::c(0.7) * T::from_count(HIDDEN).powf(T::one() / T::from_count(INPUTS))
    }

    /// Hidden rows are random directions of length `0.7 * H^(1/D)`, hidden
    /// biases uniform in `[-beta, beta]`, output layer uniform in `[-0.5, 0.5]`.
    pub fn nguyen_widrow(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let beta = Self::nguyen_widrow_beta();
        let mut net = Self::zeros();
        for row in net.w1.iter_mut() {
            loop {
                let v: [f64; INPUTS] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-3 {
                    for (w, x) in row.iter_mut().zip(v) {
                        *w = T::c(x / norm) * beta;
                    }
                    break;
                }
            }
        }
        for b in net.b1.iter_mut() {
            *b = beta * T::c(rng.random_range(-1.0..=1.0));
        }
        for row in net.w2.iter_mut() {
            for w in row.iter_mut() {
                *w = T::c(rng.random_range(-0.5..=0.5));
            }
        }
        for b in net.b2.iter_mut() {
            *b = T::c(rng.random_range(-0.5..=0.5));
        }
        net
    }

    fn activations(&self, input: [T; INPUTS]) -> Activations<T> {
        let hidden = std::array::from_fn(|h| {
            let s = self.w1[h]
                .iter()
                .zip(&input)
                .fold(self.b1[h], |acc, (w, x)| acc + *w * *x);
            s.tanh()
        });
        let output = std::array::from_fn(|o| {
            let s = self.w2[o]
                .iter()
                .zip(&hidden)
                .fold(self.b2[o], |acc, (w, x)| acc + *w * *x);
            s.tanh()
        });
        Activations {
            input,
            hidden,
            output,
        }
    }

    /// Network output in `[-1, 1]` for an already normalized input.
    pub fn forward_normalized(&self, z: &[T; INPUTS]) -> [T; OUTPUTS] {
        self.activations(*z).output
    }

    fn scale_output(&self, y: [T; OUTPUTS]) -> [T; OUTPUTS] {
        let [lo, hi] = self.output_range;
        let half = (hi - lo) * T::c(0.5);
        std::array::from_fn(|o| (lo + (y[o] + T::one()) * half).max(lo).min(hi))
    }

    /// Motor commands for a raw 6D kinematic state.
    pub fn forward(&self, x: &[T; INPUTS]) -> Result<[T; OUTPUTS], NetError> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFiniteInput);
        }
        Ok(self.scale_output(self.forward_normalized(&self.input_norm.apply(x))))
    }

    /// Weights and biases in the order w1 (row-major), b1, w2, b2.
    pub fn parameters(&self) -> Vec<T> {
        let mut p = Vec::with_capacity(PARAMETERS);
        self.w1.iter().for_each(|r| p.extend_from_slice(r));
        p.extend_from_slice(&self.b1);
        self.w2.iter().for_each(|r| p.extend_from_slice(r));
        p.extend_from_slice(&self.b2);
        p
    }

    pub fn set_parameters(&mut self, p: &[T]) -> Result<(), NetError> {
        if p.len() != PARAMETERS {
            return Err(NetError::ShapeMismatch {
                left: p.len(),
                right: PARAMETERS,
            });
        }
        let mut it = p.iter().copied();
        let mut next = || it.next().expect("length checked");
        self.w1.iter_mut().flatten().for_each(|w| *w = next());
        self.b1.iter_mut().for_each(|w| *w = next());
        self.w2.iter_mut().flatten().for_each(|w| *w = next());
        self.b2.iter_mut().for_each(|w| *w = next());
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.parameters().iter().all(|v| v.is_finite())
    }

    /// Mean squared error over all outputs of a normalized batch.
    pub fn loss(&self, inputs: &[[T; INPUTS]], targets: &[[T; OUTPUTS]]) -> Result<T, NetError> {
        let pred: Vec<T> = inputs
            .iter()
            .flat_map(|z| self.forward_normalized(z))
            .collect();
        let truth: Vec<T> = targets.iter().flatten().copied().collect();
        mse(&pred, &truth)
    }

    /// Analytic gradient of [`Mlp::loss`], laid out like [`Mlp::parameters`].
    pub fn gradient(&self, inputs: &[[T; INPUTS]], targets: &[[T; OUTPUTS]]) -> Result<Vec<T>, NetError> {
        if inputs.len() != targets.len() {
            return Err(NetError::ShapeMismatch {
                left: inputs.len(),
                right: targets.len(),
            });
        }
        let mut gw1 = [[T::zero(); INPUTS]; HIDDEN];
        let mut gb1 = [T::zero(); HIDDEN];
        let mut gw2 = [[T::zero(); HIDDEN]; OUTPUTS];
        let mut gb2 = [T::zero(); OUTPUTS];
        let norm = T::c(2.0) / T::from_count((inputs.len() * OUTPUTS).max(1));
        for (z, t) in inputs.iter().zip(targets) {
            let a = self.activations(*z);
            let delta_out: [T; OUTPUTS] = std::array::from_fn(|o| {
                let y = a.output[o];
                norm * (y - t[o]) * (T::one() - y * y)
            });
            for o in 0..OUTPUTS {
                gb2[o] = gb2[o] + delta_out[o];
                for h in 0..HIDDEN {
                    gw2[o][h] = gw2[o][h] + delta_out[o] * a.hidden[h];
                }
            }
            for h in 0..HIDDEN {
                let back = (0..OUTPUTS).fold(T::zero(), |acc, o| acc + self.w2[o][h] * delta_out[o]);
                let delta = back * (T::one() - a.hidden[h] * a.hidden[h]);
                gb1[h] = gb1[h] + delta;
                for d in 0..INPUTS {
                    gw1[h][d] = gw1[h][d] + delta * a.input[d];
                }
            }
        }
        let mut g = Vec::with_capacity(PARAMETERS);
        gw1.iter().for_each(|r| g.extend_from_slice(r));
        g.extend_from_slice(&gb1);
        gw2.iter().for_each(|r| g.extend_from_slice(r));
        g.extend_from_slice(&gb2);
        Ok(g)
    }
}

impl<T: Real> InverseMap<T> for Mlp<T> {
    fn predict(&self, state: &[T; 6]) -> [T; 3] {
        self.scale_output(self.forward_normalized(&self.input_norm.apply(state)))
    }
}

pub fn mse<T: Real>(pred: &[T], truth: &[T]) -> Result<T, NetError> {
    if pred.len() != truth.len() {
        return Err(NetError::ShapeMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if pred.is_empty() {
        return Ok(T::zero());
    }
    let total = pred
        .iter()
        .zip(truth)
        .fold(T::zero(), |acc, (p, t)| acc + (*p - *t) * (*p - *t));
    Ok(total / T::from_count(pred.len()))
}

/// Where a dataset came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: BabblingKind,
    pub seed: u64,
    pub leg: usize,
}

/// Kinematics inputs paired with the commands that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    /// Raw 6D kinematics; `train` normalizes them on its training split.
    pub inputs: Vec<[T; INPUTS]>,
    /// Commands scaled to `[-1, 1]`.
    pub targets: Vec<[T; OUTPUTS]>,
    pub provenance: Option<Provenance>,
}

impl<T: Real> Dataset<T> {
    pub fn new(
        inputs: Vec<[T; INPUTS]>,
        targets: Vec<[T; OUTPUTS]>,
        provenance: Option<Provenance>,
    ) -> Result<Self, NetError> {
        if inputs.len() != targets.len() {
            return Err(NetError::ShapeMismatch {
                left: inputs.len(),
                right: targets.len(),
            });
        }
        let finite = inputs.iter().flatten().chain(targets.iter().flatten()).all(|v| v.is_finite());
        if !finite {
            return Err(NetError::NonFiniteData);
        }
        Ok(Self {
            inputs,
            targets,
            provenance,
        })
    }

    /// Pair every logged state of `leg` with the command applied at that
    /// sample.
    pub fn from_babbling(
        log: &KinematicsLog<T>,
        seq: &PwmSequence,
        leg: usize,
        kind: BabblingKind,
    ) -> Result<Self, NetError> {
        if log.len() != seq.len() {
            return Err(NetError::ShapeMismatch {
                left: log.len(),
                right: seq.len(),
            });
        }
        let inputs = log.legs[leg].iter().map(|s| s.joints.as_features()).collect();
        let targets = (0..seq.len())
            .map(|i| seq.sample(i).map(pwm_to_unit::<T>))
            .collect();
        Self::new(
            inputs,
            targets,
            Some(Provenance {
                kind,
                seed: seq.seed,
                leg,
            }),
        )
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Map a PWM command to the network's `[-1, 1]` output units.
pub fn pwm_to_unit<T: Real>(pwm: u8) -> T {
    T::c(f64::from(pwm)) / T::c(f64::from(PWM_MAX) / 2.0) - T::one()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nguyen_widrow_rows_have_the_closed_form_norm() {
        let beta = 0.7 * 15f64.powf(1.0 / 6.0);
        for seed in 0..10 {
            let net = Mlp::<f64>::nguyen_widrow(seed);
            for row in &net.w1 {
                let norm = row.iter().map(|w| w * w).sum::<f64>().sqrt();
                assert!((norm - beta).abs() < 1e-9);
            }
            assert!(net.b1.iter().all(|b| b.abs() <= beta));
        }
        assert_eq!(Mlp::<f64>::nguyen_widrow(3), Mlp::<f64>::nguyen_widrow(3));
        assert_ne!(Mlp::<f64>::nguyen_widrow(3), Mlp::<f64>::nguyen_widrow(4));
    }

    #[test]
    fn zero_net_outputs_the_midpoint() {
        let net = Mlp::<f64>::zeros();
        assert_eq!(net.forward(&[0.3; 6]).unwrap(), [127.5; 3]);
        assert_eq!(net.forward(&[f64::NAN; 6]), Err(NetError::NonFiniteInput));
    }

    #[test]
    fn hand_evaluated_net() {
        let mut net = Mlp::<f64>::zeros();
        net.w1 = [[0.1; 6]; 15];
        net.b1 = [0.1; 15];
        net.w2 = [[0.1; 15]; 3];
        net.b2 = [0.1; 3];
        // Hidden units all see 6 * 0.1 + 0.1.
        let h = (0.7f64).tanh();
        let y = (15.0 * 0.1 * h + 0.1).tanh();
        let expect = (y + 1.0) * 127.5;
        for v in net.forward(&[1.0; 6]).unwrap() {
            assert!((v - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn outputs_stay_in_pwm_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..20 {
            let mut net = Mlp::<f64>::nguyen_widrow(seed);
            let p: Vec<f64> = net.parameters().iter().map(|w| w * 50.0).collect();
            net.set_parameters(&p).unwrap();
            let x: [f64; 6] = std::array::from_fn(|_| rng.random_range(-1e6..1e6));
            assert!(net.forward(&x).unwrap().iter().all(|v| (0.0..=255.0).contains(v)));
        }
    }

    #[test]
    fn mse_matches_a_plain_loop() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[2.0, 3.0, 4.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert!(matches!(mse(&[1.0], &[1.0, 2.0]), Err(NetError::ShapeMismatch { .. })));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a: Vec<f64> = (0..300).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..300).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut acc = 0.0;
        for i in 0..a.len() {
            let d = a[i] - b[i];
            acc += d * d;
        }
        assert!((mse(&a, &b).unwrap() - acc / 300.0).abs() < 1e-12);
    }

    fn random_batch(rng: &mut ChaCha8Rng, n: usize) -> (Vec<[f64; 6]>, Vec<[f64; 3]>) {
        let x = (0..n)
            .map(|_| std::array::from_fn(|_| rng.random_range(-2.0..2.0)))
            .collect();
        let t = (0..n)
            .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
            .collect();
        (x, t)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let start = std::time::Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        for seed in 0..20 {
            let net = Mlp::<f64>::nguyen_widrow(seed);
            let (x, t) = random_batch(&mut rng, 4);
            let g = net.gradient(&x, &t).unwrap();
            let p = net.parameters();
            let mut worst: f64 = 0.0;
            for k in 0..PARAMETERS {
                let mut probe = net.clone();
                let mut q = p.clone();
                q[k] = p[k] + h;
                probe.set_parameters(&q).unwrap();
                let up = probe.loss(&x, &t).unwrap();
                q[k] = p[k] - h;
                probe.set_parameters(&q).unwrap();
                let down = probe.loss(&x, &t).unwrap();
                let fd = (up - down) / (2.0 * h);
                let rel = (g[k] - fd).abs() / fd.abs().max(g[k].abs()).max(1e-6);
                worst = worst.max(rel);
            }
            assert!(worst < 1e-4, "net {seed}: relative error {worst}");
        }
        assert!(start.elapsed().as_secs_f64() < 5.0);
    }

    #[test]
    fn gradient_is_zero_at_zero_residual_and_mean_invariant() {
        let net = Mlp::<f64>::nguyen_widrow(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (x, _) = random_batch(&mut rng, 5);
        let t: Vec<[f64; 3]> = x.iter().map(|z| net.forward_normalized(z)).collect();
        assert!(net.gradient(&x, &t).unwrap().iter().all(|g| *g == 0.0));

        let (x, t) = random_batch(&mut rng, 5);
        let g1 = net.gradient(&x, &t).unwrap();
        let x2: Vec<_> = x.iter().chain(&x).copied().collect();
        let t2: Vec<_> = t.iter().chain(&t).copied().collect();
        let g2 = net.gradient(&x2, &t2).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn parameter_round_trip() {
        let net = Mlp::<f64>::nguyen_widrow(8);
        let mut other = Mlp::zeros();
        other.set_parameters(&net.parameters()).unwrap();
        assert_eq!(net, other);
        assert!(other.set_parameters(&[0.0; 3]).is_err());
    }

    #[test]
    fn normalization_is_a_z_score() {
        let rows = vec![[1.0, 5.0, 0.0, 0.0, 0.0, 2.0], [3.0, 5.0, 0.0, 0.0, 0.0, -2.0]];
        let n = Normalization::fit(&rows);
        assert_eq!(n.mean[0], 2.0);
        assert_eq!(n.scale[0], 1.0);
        assert_eq!(n.scale[1], 1.0);
        assert_eq!(n.apply(&rows[1])[5], -1.0);
    }

    #[test]
    fn pwm_units() {
        assert_eq!(pwm_to_unit::<f64>(0), -1.0);
        assert_eq!(pwm_to_unit::<f64>(255), 1.0);
    }

    #[test]
    fn works_in_single_precision() {
        let net = Mlp::<f32>::nguyen_widrow(1);
        let y = net.forward(&[0.1; 6]).unwrap();
        assert!(y.iter().all(|v| (0.0..=255.0).contains(v)));
    }
}
