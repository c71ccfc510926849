//! Pseudo-random three-channel PWM babbling.
//!
//! Channel order is M1, M2, M3. M1 and M2 are the hip antagonists; M3 flexes
//! the knee. Both generators produce integer PWM levels held between control
//! updates and resampled at `sample_rate`.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PWM_MAX: u8 = 255;
pub const CHANNELS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BabblingError {
    #[error("babbling duration must be positive and finite, got {0}")]
    InvalidDuration(f64),
    #[error("invalid babbling parameters: {0}")]
    InvalidParams(String),
    #[error("channel {0} compared with itself")]
    SameChannel(usize),
    #[error("pwm file: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BabblingKind {
    Naive,
    Natural,
}

impl BabblingKind {
    pub const ALL: [BabblingKind; 2] = [BabblingKind::Naive, BabblingKind::Natural];

    pub fn name(self) -> &'static str {
        match self {
            BabblingKind::Naive => "naive",
            BabblingKind::Natural => "natural",
        }
    }
}

impl std::str::FromStr for BabblingKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "naive" => Ok(BabblingKind::Naive),
            "natural" => Ok(BabblingKind::Natural),
            other => Err(format!("unknown babbling kind `{other}`")),
        }
    }
}

/// Three equally long PWM channels sampled at `sample_rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwmSequence {
    pub channels: [Vec<u8>; CHANNELS],
    pub sample_rate: f64,
    pub duration: f64,
    pub seed: u64,
}

impl PwmSequence {
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Activations of all three motors at sample `i`.
    pub fn sample(&self, i: usize) -> [u8; CHANNELS] {
        [self.channels[0][i], self.channels[1][i], self.channels[2][i]]
    }

    /// An all-zero sequence, used for passive rollouts.
    pub fn silent(duration: f64, sample_rate: f64) -> Result<Self, BabblingError> {
        let n = sample_count(duration, sample_rate)?;
        Ok(Self {
            channels: [vec![0; n], vec![0; n], vec![0; n]],
            sample_rate,
            duration,
            seed: 0,
        })
    }

    /// Constant activation on every sample.
    pub fn constant(duration: f64, sample_rate: f64, pwm: [u8; CHANNELS]) -> Result<Self, BabblingError> {
        let n = sample_count(duration, sample_rate)?;
        Ok(Self {
            channels: pwm.map(|v| vec![v; n]),
            sample_rate,
            duration,
            seed: 0,
        })
    }

    /// Write `t_s,m1,m2,m3` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), BabblingError> {
        let io = |e: csv::Error| BabblingError::Io(e.to_string());
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t_s", "m1", "m2", "m3"]).map_err(io)?;
        for i in 0..self.len() {
            let t = i as f64 / self.sample_rate;
            let [a, b, c] = self.sample(i);
            w.write_record([t.to_string(), a.to_string(), b.to_string(), c.to_string()])
                .map_err(io)?;
        }
        w.flush().map_err(|e| BabblingError::Io(e.to_string()))
    }

    /// Read a file written by [`PwmSequence::write_csv`]. Lines starting with
    /// `#` are ignored. The seed is not stored in the rows and is supplied.
    pub fn read_csv<R: Read>(reader: R, seed: u64) -> Result<Self, BabblingError> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
        let mut channels: [Vec<u8>; CHANNELS] = Default::default();
        let mut times = Vec::new();
        for row in r.records() {
            let row = row.map_err(|e| BabblingError::Io(e.to_string()))?;
            if row.len() != 4 {
                return Err(BabblingError::Io(format!("expected 4 columns, got {}", row.len())));
            }
            times.push(
                row[0]
                    .parse::<f64>()
                    .map_err(|e| BabblingError::Io(e.to_string()))?,
            );
            for (ch, column) in channels.iter_mut().zip(1..) {
                ch.push(
                    row[column]
                        .parse::<u8>()
                        .map_err(|e| BabblingError::Io(e.to_string()))?,
                );
            }
        }
        if times.len() < 2 {
            return Err(BabblingError::Io("need at least two samples".into()));
        }
        let sample_rate = 1.0 / (times[1] - times[0]);
        let sample_rate = (sample_rate * 1e6).round() / 1e6;
        let duration = times.len() as f64 / sample_rate;
        Ok(Self {
            channels,
            sample_rate,
            duration,
            seed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NaiveParams {
    /// Rate at which every channel jumps to a new random level (Hz).
    pub step_change_freq: f64,
    /// Inclusive PWM range the levels are drawn from.
    pub amplitude_range: [u8; 2],
    /// Relative random variation of each hold length, 0 disables it.
    pub timing_jitter: f64,
}

impl Default for NaiveParams {
    fn default() -> Self {
        Self {
            step_change_freq: 1.3,
            amplitude_range: [0, PWM_MAX],
            timing_jitter: 0.0,
        }
    }
}

impl NaiveParams {
    pub fn validate(&self) -> Result<(), BabblingError> {
        if !(self.step_change_freq > 0.0 && self.step_change_freq.is_finite()) {
            return Err(BabblingError::InvalidParams("step_change_freq must be positive".into()));
        }
        if self.amplitude_range[0] >= self.amplitude_range[1] {
            return Err(BabblingError::InvalidParams("amplitude_range must have low < high".into()));
        }
        check_jitter(self.timing_jitter)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NaturalParams {
    /// Control update rate of the discretised sinusoids (Hz).
    pub step_freq: f64,
    /// Frequency of the underlying sinusoid (Hz).
    pub sinusoid_freq: f64,
    /// Inverse width of each activation peak (Hz); fixes the rectification level.
    pub peak_freq: f64,
    /// Nominal M1-M2 phase difference (degrees).
    pub m1_m2_phase: f64,
    /// Per-trial random deviation allowed around `m1_m2_phase` (degrees).
    pub m1_m2_phase_tolerance: f64,
    /// Advance of the M1-M3 phase every `increment_period` (degrees).
    pub m1_m3_phase_increment: f64,
    /// Length of one phase/baseline window (s).
    pub increment_period: f64,
    /// Each window redraws every baseline within ± this many PWM units.
    pub baseline_jitter: f64,
    /// Centre of each channel's baseline (PWM units).
    pub baselines: [f64; CHANNELS],
    /// Per-channel range the peak amplitude is drawn from, once per period.
    pub amplitude_ranges: [[f64; 2]; CHANNELS],
    /// Relative random variation of each hold length, 0 disables it.
    pub timing_jitter: f64,
}

impl Default for NaturalParams {
    fn default() -> Self {
        Self {
            step_freq: 6.0,
            sinusoid_freq: 0.6,
            peak_freq: 1.3,
            m1_m2_phase: 180.0,
            m1_m2_phase_tolerance: 20.0,
            m1_m3_phase_increment: 36.0,
            increment_period: 15.0,
            baseline_jitter: 30.0,
            baselines: [80.0, 30.0, 170.0],
            amplitude_ranges: [[40.0, 70.0], [40.0, 100.0], [10.0, 50.0]],
            timing_jitter: 0.0,
        }
    }
}

impl NaturalParams {
    pub fn validate(&self) -> Result<(), BabblingError> {
        let bad = |msg: &str| Err(BabblingError::InvalidParams(msg.to_string()));
        for (name, f) in [
            ("step_freq", self.step_freq),
            ("sinusoid_freq", self.sinusoid_freq),
            ("peak_freq", self.peak_freq),
            ("increment_period", self.increment_period),
        ] {
            if !(f > 0.0 && f.is_finite()) {
                return Err(BabblingError::InvalidParams(format!("{name} must be positive")));
            }
        }
        if self.peak_freq < self.sinusoid_freq {
            return bad("a peak cannot be wider than the sinusoid period");
        }
        if !(0.0..=20.0).contains(&self.m1_m2_phase_tolerance) {
            return bad("m1_m2_phase_tolerance must lie in [0, 20] degrees");
        }
        if !(self.baseline_jitter >= 0.0) {
            return bad("baseline_jitter must be non-negative");
        }
        for [lo, hi] in self.amplitude_ranges {
            if !(0.0..=255.0).contains(&lo) || !(0.0..=255.0).contains(&hi) || lo > hi {
                return bad("amplitude ranges must be sub-intervals of [0, 255]");
            }
        }
        check_jitter(self.timing_jitter)
    }

    /// Sine level above which the rectified lobe is kept, chosen so that each
    /// lobe lasts `1 / peak_freq` seconds within a `1 / sinusoid_freq` period.
    pub fn rectification_level(&self) -> f64 {
        let positive_fraction = (self.sinusoid_freq / self.peak_freq).min(1.0);
        (std::f64::consts::PI * positive_fraction).cos()
    }
}

fn check_jitter(jitter: f64) -> Result<(), BabblingError> {
    if !(0.0..0.5).contains(&jitter) {
        return Err(BabblingError::InvalidParams("timing_jitter must lie in [0, 0.5)".into()));
    }
    Ok(())
}

fn sample_count(duration: f64, sample_rate: f64) -> Result<usize, BabblingError> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(BabblingError::InvalidDuration(duration));
    }
    if !(sample_rate > 0.0 && sample_rate.is_finite()) {
        return Err(BabblingError::InvalidParams("sample_rate must be positive".into()));
    }
    Ok((duration * sample_rate).round() as usize)
}

/// Start times of successive held levels, covering `[0, duration)`.
fn update_times(rng: &mut ChaCha8Rng, rate: f64, jitter: f64, duration: f64) -> Vec<f64> {
    let mut times = vec![0.0];
    let mut t = 0.0;
    loop {
        let scale = if jitter > 0.0 {
            1.0 + rng.random_range(-jitter..jitter)
        } else {
            1.0
        };
        let k = times.len() as f64;
        // Without jitter the grid is exact, so no rounding drift accumulates.
        t = if jitter > 0.0 { t + scale / rate } else { k / rate };
        if t >= duration {
            break;
        }
        times.push(t);
    }
    times
}

/// Expand held levels onto the output sample grid.
fn resample(times: &[f64], levels: &[u8], n: usize, sample_rate: f64) -> Vec<u8> {
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    for i in 0..n {
        let t = i as f64 / sample_rate;
        while k + 1 < times.len() && times[k + 1] <= t + 1e-9 {
            k += 1;
        }
        out.push(levels[k]);
    }
    out
}

/// Independent random step levels on every channel.
pub fn generate_naive(
    duration: f64,
    sample_rate: f64,
    seed: u64,
    params: &NaiveParams,
) -> Result<PwmSequence, BabblingError> {
    let n = sample_count(duration, sample_rate)?;
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [lo, hi] = params.amplitude_range;
    let channels = std::array::from_fn(|_| {
        let times = update_times(&mut rng, params.step_change_freq, params.timing_jitter, duration);
        let levels: Vec<u8> = times.iter().map(|_| rng.random_range(lo..=hi)).collect();
        resample(&times, &levels, n, sample_rate)
    });
    Ok(PwmSequence {
        channels,
        sample_rate,
        duration,
        seed,
    })
}

/// Half-wave rectified, randomly scaled sinusoids with anti-phase hip
/// antagonists and a drifting M1-M3 phase.
pub fn generate_natural(
    duration: f64,
    sample_rate: f64,
    seed: u64,
    params: &NaturalParams,
) -> Result<PwmSequence, BabblingError> {
    let n = sample_count(duration, sample_rate)?;
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let tol = params.m1_m2_phase_tolerance;
    let m1_m2 = params.m1_m2_phase + if tol > 0.0 { rng.random_range(-tol..=tol) } else { 0.0 };
    let m1_m3_start = rng.random_range(0.0..360.0);
    let times = update_times(&mut rng, params.step_freq, params.timing_jitter, duration);

    let windows = (duration / params.increment_period).ceil() as usize + 1;
    let jitter = params.baseline_jitter;
    let baselines: Vec<[f64; CHANNELS]> = (0..windows)
        .map(|_| {
            std::array::from_fn(|ch| {
                let offset = if jitter > 0.0 { rng.random_range(-jitter..=jitter) } else { 0.0 };
                params.baselines[ch] + offset
            })
        })
        .collect();

    // Cycle counts per channel can exceed duration * f by the accumulated
    // M3 phase advance, hence the generous bound.
    let max_cycles = (duration * params.sinusoid_freq).ceil() as usize
        + (windows as f64 * params.m1_m3_phase_increment / 360.0).ceil() as usize
        + 3;
    let amplitudes: [Vec<f64>; CHANNELS] = std::array::from_fn(|ch| {
        let [lo, hi] = params.amplitude_ranges[ch];
        (0..max_cycles)
            .map(|_| if hi > lo { rng.random_range(lo..=hi) } else { lo })
            .collect()
    });

    let level = params.rectification_level();
    let channels = std::array::from_fn(|ch| {
        let levels: Vec<u8> = times
            .iter()
            .map(|&t| {
                let window = ((t / params.increment_period).floor() as usize).min(windows - 1);
                let phase_deg = match ch {
                    0 => 0.0,
                    1 => -m1_m2,
                    _ => -(m1_m3_start + window as f64 * params.m1_m3_phase_increment),
                };
                // Cycles elapsed, in units of full periods.
                let cycles = t * params.sinusoid_freq + phase_deg / 360.0;
                let cycle = cycles.floor().rem_euclid(max_cycles as f64) as usize;
                let s = (std::f64::consts::TAU * cycles).sin();
                let lobe = ((s - level) / (1.0 - level)).max(0.0);
                let value = baselines[window][ch] + amplitudes[ch][cycle] * lobe;
                value.round().clamp(0.0, 255.0) as u8
            })
            .collect();
        resample(&times, &levels, n, sample_rate)
    });
    Ok(PwmSequence {
        channels,
        sample_rate,
        duration,
        seed,
    })
}

pub fn generate(
    kind: BabblingKind,
    duration: f64,
    sample_rate: f64,
    seed: u64,
    naive: &NaiveParams,
    natural: &NaturalParams,
) -> Result<PwmSequence, BabblingError> {
    match kind {
        BabblingKind::Naive => generate_naive(duration, sample_rate, seed, naive),
        BabblingKind::Natural => generate_natural(duration, sample_rate, seed, natural),
    }
}

/// Mean over time of `min(a, b) / 255`: 1 for two saturated channels, 0 for
/// channels that are never active together.
pub fn coactivation_index(seq: &PwmSequence, a: usize, b: usize) -> Result<f64, BabblingError> {
    if a == b {
        return Err(BabblingError::SameChannel(a));
    }
    if seq.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = seq.channels[a]
        .iter()
        .zip(&seq.channels[b])
        .map(|(&x, &y)| x.min(y) as f64 / PWM_MAX as f64)
        .sum();
    Ok(total / seq.len() as f64)
}
