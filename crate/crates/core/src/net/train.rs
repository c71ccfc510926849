use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{Dataset, Mlp, NetError, Normalization, Provenance, INPUTS, MIN_SAMPLES, OUTPUTS, PARAMETERS};
use crate::scalar::Real;

pub const CHECKPOINT_SCHEMA: &str = "g2p.mlp.v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Epochs without a strict test-MSE decrease before stopping.
    pub patience: usize,
    /// Held-out size as a ratio to the training size.
    pub test_split: f64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Hold out the final contiguous block instead of a random subset.
    pub block_split: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            patience: 5,
            test_split: 0.25,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            batch_size: 32,
            seed: 0,
            block_split: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: &str| Err(NetError::InvalidConfig(m.to_string()));
        if !(self.test_split > 0.0 && self.test_split < 1.0) {
            return bad("test_split must lie in (0, 1)");
        }
        if self.max_epochs == 0 || self.patience >= self.max_epochs {
            return bad("need 0 <= patience < max_epochs");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0)
            || !(0.0..1.0).contains(&self.adam_beta1)
            || !(0.0..1.0).contains(&self.adam_beta2)
            || !(self.adam_epsilon > 0.0)
        {
            return bad("Adam hyperparameters out of range");
        }
        Ok(())
    }

    /// Number of held-out samples for a dataset of `n`.
    pub fn test_size(&self, n: usize) -> usize {
        let fraction = self.test_split / (1.0 + self.test_split);
        ((n as f64 * fraction).round() as usize).clamp(1, n.saturating_sub(1))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    /// Test MSE of the initial weights.
    pub initial_test_mse: f64,
    /// Per-epoch training MSE after the epoch's updates.
    pub train_mse: Vec<f64>,
    pub test_mse: Vec<f64>,
    /// Zero-based epoch whose weights were returned; `None` if no epoch beat
    /// the initial weights.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

impl History {
    pub fn epochs(&self) -> usize {
        self.test_mse.len()
    }

    pub fn best_test_mse(&self) -> f64 {
        self.best_epoch
            .map_or(self.initial_test_mse, |e| self.test_mse[e])
    }
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> Adam<T> {
    fn new() -> Self {
        Self {
            m: vec![T::zero(); PARAMETERS],
            v: vec![T::zero(); PARAMETERS],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [T], grad: &[T], cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (T::c(cfg.adam_beta1), T::c(cfg.adam_beta2));
        let lr = T::c(cfg.learning_rate);
        let eps = T::c(cfg.adam_epsilon);
        let c1 = T::one() - b1.powi(self.t);
        let c2 = T::one() - b2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = b1 * self.m[k] + (T::one() - b1) * grad[k];
            self.v[k] = b2 * self.v[k] + (T::one() - b2) * grad[k] * grad[k];
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            params[k] = params[k] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Train a freshly initialized network with Adam and early stopping.
///
/// Returns the weights with the lowest held-out MSE seen, including the
/// initial ones.
pub fn train<T: Real>(data: &Dataset<T>, cfg: &TrainConfig) -> Result<(Mlp<T>, History), NetError> {
    cfg.validate()?;
    if data.len() < MIN_SAMPLES {
        return Err(NetError::DatasetTooSmall {
            min: MIN_SAMPLES,
            got: data.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = data.len();
    let n_test = cfg.test_size(n);
    let mut order: Vec<usize> = (0..n).collect();
    if !cfg.block_split {
        order.shuffle(&mut rng);
    }
    let (train_idx, test_idx) = order.split_at(n - n_test);

    let train_raw: Vec<[T; INPUTS]> = train_idx.iter().map(|&i| data.inputs[i]).collect();
    let norm = Normalization::fit(&train_raw);
    let gather = |idx: &[usize]| -> (Vec<[T; INPUTS]>, Vec<[T; OUTPUTS]>) {
        idx.iter()
            .map(|&i| (norm.apply(&data.inputs[i]), data.targets[i]))
            .unzip()
    };
    let (train_x, train_t) = gather(train_idx);
    let (test_x, test_t) = gather(test_idx);

    let mut net = Mlp::nguyen_widrow(cfg.seed);
    net.input_norm = norm;
    let mut params = net.parameters();
    let mut best = net.clone();
    let mut history = History {
        initial_test_mse: net.loss(&test_x, &test_t)?.f64(),
        ..History::default()
    };
    let mut best_mse = history.initial_test_mse;
    let mut since_best = 0;
    let mut adam = Adam::new();
    let mut batch_order: Vec<usize> = (0..train_x.len()).collect();
    let mut bx = Vec::with_capacity(cfg.batch_size);
    let mut bt = Vec::with_capacity(cfg.batch_size);

    for epoch in 0..cfg.max_epochs {
        batch_order.shuffle(&mut rng);
        for chunk in batch_order.chunks(cfg.batch_size) {
            bx.clear();
            bt.clear();
            bx.extend(chunk.iter().map(|&i| train_x[i]));
            bt.extend(chunk.iter().map(|&i| train_t[i]));
            let grad = net.gradient(&bx, &bt)?;
            adam.step(&mut params, &grad, cfg);
            net.set_parameters(&params)?;
        }
        history.train_mse.push(net.loss(&train_x, &train_t)?.f64());
        let test = net.loss(&test_x, &test_t)?.f64();
        history.test_mse.push(test);
        if test < best_mse {
            best_mse = test;
            best = net.clone();
            history.best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                history.stopped_early = epoch + 1 < cfg.max_epochs;
                break;
            }
        }
    }
    Ok((best, history))
}

/// Self-describing training artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<T> {
    pub schema: String,
    pub layers: [usize; 3],
    pub net: Mlp<T>,
    pub config: TrainConfig,
    pub history: History,
    pub provenance: Option<Provenance>,
}

impl<T: Real + Serialize + DeserializeOwned> Checkpoint<T> {
    pub fn new(net: Mlp<T>, config: TrainConfig, history: History, provenance: Option<Provenance>) -> Self {
        Self {
            schema: CHECKPOINT_SCHEMA.to_string(),
            layers: [INPUTS, super::HIDDEN, OUTPUTS],
            net,
            config,
            history,
            provenance,
        }
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<(), NetError> {
        serde_json::to_writer_pretty(writer, self).map_err(|e| NetError::Checkpoint(e.to_string()))
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self, NetError> {
        let ck: Self = serde_json::from_reader(reader).map_err(|e| NetError::Checkpoint(e.to_string()))?;
        if ck.schema != CHECKPOINT_SCHEMA {
            return Err(NetError::Checkpoint(format!("unknown schema `{}`", ck.schema)));
        }
        if ck.layers != [INPUTS, super::HIDDEN, OUTPUTS] {
            return Err(NetError::Checkpoint(format!("unexpected layer sizes {:?}", ck.layers)));
        }
        if !ck.net.is_finite() {
            return Err(NetError::Checkpoint("non-finite weights".into()));
        }
        Ok(ck)
    }
}
