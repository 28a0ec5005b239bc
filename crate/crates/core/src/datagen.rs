//! Synthetic visuo-proprioceptive corpus.
//!
//! Sequences are strings of three movement primitives drawn from a small
//! probabilistic finite state machine (A → B or C with equal chance, B and C
//! always return to A). Each primitive renders as a 16-joint trajectory and a
//! 20-dimensional vision latent made from a fixed linear image of the joints.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{PvrnnError, Result};
use crate::linalg::{squared_distance, Matrix};
use crate::network::{Frame, PROPRIO_DIM, VISION_LATENT_DIM};
use crate::noise::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Primitive {
    A,
    B,
    C,
}

impl Primitive {
    pub const ALL: [Primitive; 3] = [Primitive::A, Primitive::B, Primitive::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_char(self) -> char {
        match self {
            Primitive::A => 'A',
            Primitive::B => 'B',
            Primitive::C => 'C',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsmSpec {
    /// Row `i` holds the next-state probabilities of `Primitive::ALL[i]`.
    pub transitions: [[f64; 3]; 3],
    pub start: Primitive,
    pub primitives_per_sequence: usize,
    pub steps_per_primitive: usize,
}

impl Default for FsmSpec {
    fn default() -> Self {
        Self {
            transitions: [[0.0, 0.5, 0.5], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
            start: Primitive::A,
            primitives_per_sequence: 8,
            steps_per_primitive: 50,
        }
    }
}

impl FsmSpec {
    pub fn with_length(primitives_per_sequence: usize, steps_per_primitive: usize) -> Self {
        Self {
            primitives_per_sequence,
            steps_per_primitive,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.transitions.iter().enumerate() {
            let total: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
                return Err(PvrnnError::InvalidArgument(format!(
                    "transition row {i} must be a probability vector"
                )));
            }
        }
        if self.primitives_per_sequence == 0 || self.steps_per_primitive < 2 {
            return Err(PvrnnError::InvalidArgument(
                "sequences need at least one primitive of two or more steps".into(),
            ));
        }
        Ok(())
    }

    pub fn sequence_len(&self) -> usize {
        self.primitives_per_sequence * self.steps_per_primitive
    }
}

pub fn sample_labels<R: Rng + ?Sized>(fsm: &FsmSpec, rng: &mut R) -> Vec<Primitive> {
    let mut labels = Vec::with_capacity(fsm.primitives_per_sequence);
    let mut current = fsm.start;
    labels.push(current);
    while labels.len() < fsm.primitives_per_sequence {
        let row = &fsm.transitions[current.index()];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut next = Primitive::ALL[2];
        for (p, &prob) in Primitive::ALL.iter().zip(row) {
            acc += prob;
            if u < acc {
                next = *p;
                break;
            }
        }
        // Guard against rounding in the last bucket.
        if row[next.index()] == 0.0 {
            next = *Primitive::ALL
                .iter()
                .rev()
                .find(|p| row[p.index()] > 0.0)
                .expect("validated row");
        }
        labels.push(next);
        current = next;
    }
    labels
}

/// Sensor noise. Both channels get white Gaussian noise. Vision also gets a
/// slow shared drift standing in for changing illumination: `vision_drift_dims`
/// AR(1) processes with time constant `vision_drift_tau` steps, each moving
/// every vision dimension by a fixed ±1 pattern. `vision_drift_sd` is the
/// stationary per-dimension standard deviation of the summed drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub proprio_noise_sd: f64,
    pub vision_noise_sd: f64,
    #[serde(default)]
    pub vision_drift_sd: f64,
    #[serde(default = "default_drift_tau")]
    pub vision_drift_tau: f64,
    #[serde(default = "default_drift_dims")]
    pub vision_drift_dims: usize,
}

fn default_drift_tau() -> f64 {
    40.0
}

fn default_drift_dims() -> usize {
    3
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            proprio_noise_sd: 0.01,
            vision_noise_sd: 0.05,
            vision_drift_sd: 0.3,
            vision_drift_tau: default_drift_tau(),
            vision_drift_dims: default_drift_dims(),
        }
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            proprio_noise_sd: 0.0,
            vision_noise_sd: 0.0,
            vision_drift_sd: 0.0,
            ..Self::default()
        }
    }

    /// White noise only.
    pub fn white(proprio_noise_sd: f64, vision_noise_sd: f64) -> Self {
        Self {
            proprio_noise_sd,
            vision_noise_sd,
            vision_drift_sd: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for sd in [
            self.proprio_noise_sd,
            self.vision_noise_sd,
            self.vision_drift_sd,
        ] {
            if !(sd >= 0.0) || !sd.is_finite() {
                return Err(PvrnnError::InvalidArgument(format!("bad noise sd {sd}")));
            }
        }
        if !(self.vision_drift_tau >= 1.0) || !self.vision_drift_tau.is_finite() {
            return Err(PvrnnError::InvalidArgument(format!(
                "vision drift time constant {} must be >= 1",
                self.vision_drift_tau
            )));
        }
        if self.vision_drift_sd > 0.0 && self.vision_drift_dims == 0 {
            return Err(PvrnnError::InvalidArgument(
                "vision drift needs at least one direction".into(),
            ));
        }
        Ok(())
    }
}

const DRIFT_PATTERN_SEED: u64 = 99;

/// Fixed ±1 patterns, one per drift direction, shared by every sequence.
pub fn drift_patterns(dims: usize, width: usize) -> Vec<Vec<f64>> {
    let mut rng = rng_for(DRIFT_PATTERN_SEED, &[]);
    (0..dims)
        .map(|_| {
            (0..width)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect()
        })
        .collect()
}

/// Per-demonstrator amplitude scale and endpoint-preserving time warp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jitter {
    pub amplitude: f64,
    pub warp: f64,
}

impl Jitter {
    pub const NONE: Jitter = Jitter {
        amplitude: 1.0,
        warp: 0.0,
    };

    /// Three demonstrator profiles, cycled across sequences.
    pub fn participant(i: usize) -> Jitter {
        match i % 3 {
            0 => Jitter::NONE,
            1 => Jitter {
                amplitude: 1.1,
                warp: 0.25,
            },
            _ => Jitter {
                amplitude: 0.9,
                warp: -0.25,
            },
        }
    }

    fn warp_phase(&self, phase: f64) -> f64 {
        use std::f64::consts::TAU;
        phase + self.warp * (TAU * phase).sin() / TAU
    }
}

const ARM_JOINTS: usize = 6;
const TORSO_YAW: usize = 12;
const TORSO_PITCH: usize = 13;
const HEAD_YAW: usize = 14;
const HEAD_PITCH: usize = 15;
/// The right arm mirrors the left with these joint signs.
const MIRROR: [f64; ARM_JOINTS] = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
const REPETITIONS: f64 = 3.0;

/// Deterministic primitive templates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveBank {
    pub steps: usize,
    pub neutral: Vec<f64>,
    /// Vision latent = `projection · (p - neutral) + offset[label] · envelope`.
    pub projection: Matrix,
    pub vision_offsets: Vec<Vec<f64>>,
    /// `[label][step][joint]`
    pub proprio: Vec<Vec<Vec<f64>>>,
    /// `[label][step][latent]`
    pub vision: Vec<Vec<Vec<f64>>>,
}

impl PrimitiveBank {
    pub fn new(steps: usize) -> Self {
        let mut neutral = vec![0.0; PROPRIO_DIM];
        let left = [0.1, -0.2, 0.15, 0.3, 0.0, -0.1];
        for k in 0..ARM_JOINTS {
            neutral[k] = left[k];
            neutral[ARM_JOINTS + k] = MIRROR[k] * left[k];
        }
        // The projection is part of the corpus definition, not of any data seed.
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0F_B0A2D);
        let mut projection = Matrix::zeros(VISION_LATENT_DIM, PROPRIO_DIM);
        for v in &mut projection.data {
            *v = rng.random_range(-0.3..0.3);
        }
        let mut vision_offsets = vec![vec![0.0; VISION_LATENT_DIM]; 3];
        for j in 0..VISION_LATENT_DIM {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            vision_offsets[1][j] = 0.35 * sign;
            vision_offsets[2][j] = -0.35 * sign;
        }
        let mut bank = Self {
            steps,
            neutral,
            projection,
            vision_offsets,
            proprio: Vec::new(),
            vision: Vec::new(),
        };
        for label in Primitive::ALL {
            let (mut ps, mut vs) = (Vec::with_capacity(steps), Vec::with_capacity(steps));
            for s in 0..steps {
                let (p, v) = bank.evaluate(label, s as f64 / steps as f64, Jitter::NONE);
                ps.push(p);
                vs.push(v);
            }
            bank.proprio.push(ps);
            bank.vision.push(vs);
        }
        bank
    }

    /// Joint and vision-latent vectors of `label` at `phase ∈ [0, 1)`.
    /// Every primitive passes through the neutral posture at phase 0 and 1.
    pub fn evaluate(&self, label: Primitive, phase: f64, jitter: Jitter) -> (Vec<f64>, Vec<f64>) {
        use std::f64::consts::PI;
        let phi = jitter.warp_phase(phase);
        let osc = (2.0 * PI * REPETITIONS * phi).sin();
        let bump = (PI * REPETITIONS * phi).sin().powi(2);
        let envelope = (PI * phi).sin();

        let mut dev = vec![0.0; PROPRIO_DIM];
        match label {
            Primitive::A => {
                let lift = [0.6, 0.0, 0.3, 0.0, 0.2, 0.0];
                let wave = [0.0, 0.4, 0.0, 0.5, 0.0, 0.3];
                for k in 0..ARM_JOINTS {
                    let v = lift[k] * bump + wave[k] * osc;
                    dev[k] = v;
                    dev[ARM_JOINTS + k] = MIRROR[k] * v;
                }
                dev[TORSO_PITCH] = 0.05 * osc;
            }
            Primitive::B | Primitive::C => {
                let side = if label == Primitive::B { 1.0 } else { -1.0 };
                let lead = [0.35, 0.25, 0.0, 0.2, 0.1, 0.0];
                let trail = [0.1, -0.2, 0.25, 0.15, 0.0, 0.1];
                let (first, second) = if side > 0.0 {
                    (lead, trail)
                } else {
                    (trail, lead)
                };
                for k in 0..ARM_JOINTS {
                    dev[k] = first[k] * bump;
                    dev[ARM_JOINTS + k] = MIRROR[k] * second[k] * bump;
                }
                dev[TORSO_YAW] = side * 0.6 * bump;
                dev[TORSO_PITCH] = 0.1 * osc;
                dev[HEAD_YAW] = side * 0.3 * bump;
                dev[HEAD_PITCH] = -0.1 * bump;
            }
        }
        dev.iter_mut().for_each(|v| *v *= jitter.amplitude);

        let proprio: Vec<f64> = self.neutral.iter().zip(&dev).map(|(n, d)| n + d).collect();
        let mut vision = vec![0.0; VISION_LATENT_DIM];
        self.projection.matvec_add(&dev, &mut vision);
        for (v, off) in vision.iter_mut().zip(&self.vision_offsets[label.index()]) {
            *v += off * envelope * jitter.amplitude;
        }
        (proprio, vision)
    }
}

/// RMS over steps of the per-step Euclidean distance between two trajectories.
pub fn template_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let total: f64 = a.iter().zip(b).map(|(x, y)| squared_distance(x, y)).sum();
    (total / a.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sequence {
    pub labels: Vec<Primitive>,
    pub participant: usize,
    /// `[step][joint]`, in `[-1, 1]`
    pub proprio: Vec<Vec<f64>>,
    /// `[step][latent]`, in `[-1, 1]`
    pub vision: Vec<Vec<f64>>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.proprio.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proprio.is_empty()
    }

    /// Per-step frames in output-channel order (proprioception, vision).
    pub fn frames(&self) -> Vec<Frame> {
        self.proprio
            .iter()
            .zip(&self.vision)
            .map(|(p, v)| vec![p.clone(), v.clone()])
            .collect()
    }

    pub fn label_string(&self) -> String {
        self.labels.iter().map(|l| l.as_char()).collect()
    }
}

pub fn render<R: Rng + ?Sized>(
    labels: &[Primitive],
    bank: &PrimitiveBank,
    noise: &NoiseSpec,
    rng: &mut R,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    render_with(labels, bank, Jitter::NONE, noise, rng)
}

/// Concatenated primitives of one demonstrator plus sensor noise, clamped to `[-1, 1]`.
pub fn render_with<R: Rng + ?Sized>(
    labels: &[Primitive],
    bank: &PrimitiveBank,
    jitter: Jitter,
    noise: &NoiseSpec,
    rng: &mut R,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = labels.len() * bank.steps;
    let mut proprio = Vec::with_capacity(n);
    let mut vision = Vec::with_capacity(n);
    let p_noise = Normal::new(0.0, noise.proprio_noise_sd).expect("finite sd");
    let v_noise = Normal::new(0.0, noise.vision_noise_sd).expect("finite sd");
    let drifting = noise.vision_drift_sd > 0.0;
    let (patterns, rho, drift_sd) = if drifting {
        let k = noise.vision_drift_dims;
        (
            drift_patterns(k, bank.vision[0][0].len()),
            (-1.0 / noise.vision_drift_tau).exp(),
            noise.vision_drift_sd / (k as f64).sqrt(),
        )
    } else {
        (Vec::new(), 0.0, 0.0)
    };
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut drift: Vec<f64> = patterns
        .iter()
        .map(|_| drift_sd * unit.sample(rng))
        .collect();
    for &label in labels {
        for s in 0..bank.steps {
            let (mut p, mut v) = if jitter == Jitter::NONE {
                (
                    bank.proprio[label.index()][s].clone(),
                    bank.vision[label.index()][s].clone(),
                )
            } else {
                bank.evaluate(label, s as f64 / bank.steps as f64, jitter)
            };
            for x in &mut p {
                *x = (*x + p_noise.sample(rng)).clamp(-1.0, 1.0);
            }
            for (g, pattern) in drift.iter_mut().zip(&patterns) {
                *g = rho * *g + (1.0 - rho * rho).sqrt() * drift_sd * unit.sample(rng);
                for (x, d) in v.iter_mut().zip(pattern) {
                    *x += *g * d;
                }
            }
            for x in &mut v {
                *x = (*x + v_noise.sample(rng)).clamp(-1.0, 1.0);
            }
            proprio.push(p);
            vision.push(v);
        }
    }
    (proprio, vision)
}

/// Nearest-template label of each `steps`-long segment of a joint trajectory.
pub fn decode_labels(proprio: &[Vec<f64>], bank: &PrimitiveBank) -> Vec<Primitive> {
    proprio
        .chunks(bank.steps)
        .map(|segment| {
            *Primitive::ALL
                .iter()
                .min_by(|a, b| {
                    let da = template_distance(segment, &bank.proprio[a.index()]);
                    let db = template_distance(segment, &bank.proprio[b.index()]);
                    da.total_cmp(&db)
                })
                .expect("three primitives")
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub fsm: FsmSpec,
    pub noise: NoiseSpec,
    pub seed: u64,
}

impl DatasetConfig {
    /// 30 training and 3 test sequences of 8 × 50 steps.
    pub fn full(seed: u64) -> Self {
        Self {
            n_train: 30,
            n_test: 3,
            fsm: FsmSpec::default(),
            noise: NoiseSpec::default(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceDataset {
    pub split: String,
    pub seed: u64,
    pub fsm: FsmSpec,
    pub noise: NoiseSpec,
    pub sequences: Vec<Sequence>,
}

impl SequenceDataset {
    pub fn frames(&self) -> Vec<Vec<Frame>> {
        self.sequences.iter().map(Sequence::frames).collect()
    }

    pub fn sequence_len(&self) -> usize {
        self.sequences.first().map_or(0, Sequence::len)
    }
}

const TRAIN_STREAM: u64 = 0;
const TEST_STREAM: u64 = 1;
const MAX_TEST_REDRAWS: u64 = 256;

/// Training and test corpora from disjoint random streams. Test label
/// strings avoid every training string unless the grammar runs out of them.
pub fn build_dataset(config: &DatasetConfig) -> Result<(SequenceDataset, SequenceDataset)> {
    config.fsm.validate()?;
    config.noise.validate()?;
    let bank = PrimitiveBank::new(config.fsm.steps_per_primitive);
    let make = |labels: Vec<Primitive>, participant: usize, rng: &mut ChaCha8Rng| {
        let (proprio, vision) = render_with(
            &labels,
            &bank,
            Jitter::participant(participant),
            &config.noise,
            rng,
        );
        Sequence {
            labels,
            participant,
            proprio,
            vision,
        }
    };

    let mut train = Vec::with_capacity(config.n_train);
    for i in 0..config.n_train {
        let mut rng = rng_for(config.seed, &[TRAIN_STREAM, i as u64]);
        let labels = sample_labels(&config.fsm, &mut rng);
        train.push(make(labels, i % 3, &mut rng));
    }
    let seen: HashSet<Vec<Primitive>> = train.iter().map(|s| s.labels.clone()).collect();

    let mut test = Vec::with_capacity(config.n_test);
    for i in 0..config.n_test {
        let mut labels = Vec::new();
        for attempt in 0..MAX_TEST_REDRAWS {
            let mut rng = rng_for(config.seed, &[TEST_STREAM, i as u64, attempt]);
            labels = sample_labels(&config.fsm, &mut rng);
            if !seen.contains(&labels) {
                break;
            }
        }
        let mut rng = rng_for(config.seed, &[TEST_STREAM, i as u64, MAX_TEST_REDRAWS]);
        test.push(make(labels, i % 3, &mut rng));
    }

    let wrap = |split: &str, sequences| SequenceDataset {
        split: split.to_string(),
        seed: config.seed,
        fsm: config.fsm.clone(),
        noise: config.noise,
        sequences,
    };
    Ok((wrap("train", train), wrap("test", test)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_fsm_is_valid() {
        let fsm = FsmSpec::default();
        fsm.validate().unwrap();
        assert_eq!(fsm.sequence_len(), 400);
        let mut bad = fsm.clone();
        bad.transitions[0] = [0.2, 0.5, 0.5];
        assert!(bad.validate().is_err());
    }

    #[test]
    fn labels_follow_grammar_and_are_reproducible() {
        let fsm = FsmSpec::default();
        for seed in 0..200 {
            let labels = sample_labels(&fsm, &mut ChaCha8Rng::seed_from_u64(seed));
            assert_eq!(labels.len(), 8);
            assert_eq!(labels[0], Primitive::A);
            for w in labels.windows(2) {
                match w[0] {
                    Primitive::A => assert_ne!(w[1], Primitive::A),
                    _ => assert_eq!(w[1], Primitive::A),
                }
            }
        }
        let a = sample_labels(&fsm, &mut ChaCha8Rng::seed_from_u64(3));
        let b = sample_labels(&fsm, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }

    #[test]
    fn templates_start_and_end_at_neutral() {
        let bank = PrimitiveBank::new(50);
        for label in Primitive::ALL {
            let t = &bank.proprio[label.index()];
            assert_eq!(t.len(), 50);
            assert!(squared_distance(&t[0], &bank.neutral) < 1e-24);
            let (end, _) = bank.evaluate(label, 1.0, Jitter::NONE);
            assert!(squared_distance(&end, &bank.neutral) < 1e-24);
            assert!(t.iter().flatten().all(|v| v.abs() <= 1.0));
            assert!(bank.vision[label.index()]
                .iter()
                .flatten()
                .all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn noiseless_render_is_exact_concatenation() {
        let bank = PrimitiveBank::new(50);
        let labels = [Primitive::A, Primitive::C, Primitive::A, Primitive::B];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (p, v) = render(&labels, &bank, &NoiseSpec::none(), &mut rng);
        assert_eq!(p.len(), 200);
        for (i, label) in labels.iter().enumerate() {
            for s in 0..50 {
                assert_eq!(p[i * 50 + s], bank.proprio[label.index()][s]);
                assert_eq!(v[i * 50 + s], bank.vision[label.index()][s]);
            }
        }
        // Jumps across segment joints are no larger than jumps inside a segment.
        let max_step = |range: std::ops::Range<usize>| {
            range
                .map(|t| squared_distance(&p[t], &p[t + 1]).sqrt())
                .fold(0.0, f64::max)
        };
        let inside = max_step(0..49);
        for joint in [49usize, 99, 149] {
            let jump = squared_distance(&p[joint], &p[joint + 1]).sqrt();
            assert!(jump <= inside + 1e-12, "jump {jump} at {joint} vs {inside}");
        }
    }

    #[test]
    fn primitives_are_well_separated() {
        let bank = PrimitiveBank::new(50);
        let noise = NoiseSpec::default();
        for (i, a) in Primitive::ALL.iter().enumerate() {
            for b in &Primitive::ALL[i + 1..] {
                let dp = template_distance(&bank.proprio[a.index()], &bank.proprio[b.index()]);
                let dv = template_distance(&bank.vision[a.index()], &bank.vision[b.index()]);
                assert!(
                    dp >= 10.0 * noise.proprio_noise_sd,
                    "{a:?}/{b:?} proprio {dp}"
                );
                assert!(
                    dv >= 10.0 * noise.vision_noise_sd,
                    "{a:?}/{b:?} vision {dv}"
                );
            }
        }
    }

    #[test]
    fn vision_drift_has_the_requested_scale_and_memory() {
        let bank = PrimitiveBank::new(50);
        let labels = vec![Primitive::A; 400];
        let mut noise = NoiseSpec::none();
        noise.vision_drift_sd = 0.1;
        noise.vision_drift_tau = 5.0;
        let (p, v) = render(&labels, &bank, &noise, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(p[17], bank.proprio[0][17]);
        let patterns = drift_patterns(noise.vision_drift_dims, v[0].len());
        // Residuals stay well inside [-1, 1], so clamping never bites here.
        let resid: Vec<Vec<f64>> = v
            .iter()
            .enumerate()
            .map(|(t, x)| {
                x.iter()
                    .zip(&bank.vision[0][t % 50])
                    .map(|(a, b)| a - b)
                    .collect()
            })
            .collect();
        let var =
            resid.iter().flatten().map(|r| r * r).sum::<f64>() / (resid.len() * v[0].len()) as f64;
        assert!((var.sqrt() - 0.1).abs() < 0.01, "sd {}", var.sqrt());
        // Projection on one direction is an AR(1) with coefficient exp(-1/tau).
        let g: Vec<f64> = resid
            .iter()
            .map(|r| r.iter().zip(&patterns[0]).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let lag1 =
            g.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / g.iter().map(|x| x * x).sum::<f64>();
        assert!((lag1 - (-0.2f64).exp()).abs() < 0.05, "lag1 {lag1}");
    }

    #[test]
    fn noise_spec_is_validated() {
        assert!(NoiseSpec::default().validate().is_ok());
        let mut n = NoiseSpec::default();
        n.vision_drift_tau = 0.5;
        assert!(n.validate().is_err());
        let mut n = NoiseSpec::default();
        n.vision_drift_dims = 0;
        assert!(n.validate().is_err());
        assert!(NoiseSpec::white(-1.0, 0.0).validate().is_err());
    }

    fn residual_sd(out: &[Vec<f64>], clean: &[Vec<f64>]) -> Vec<f64> {
        let dims = out[0].len();
        (0..dims)
            .map(|j| {
                let ss: f64 = out
                    .iter()
                    .zip(clean)
                    .map(|(o, c)| (o[j] - c[j]).powi(2))
                    .sum();
                (ss / out.len() as f64).sqrt()
            })
            .collect()
    }

    #[test]
    fn white_noise_has_the_requested_variance() {
        let bank = PrimitiveBank::new(50);
        let labels = vec![Primitive::A; 200];
        let noise = NoiseSpec::white(0.01, 0.05);
        let (p, v) = render(&labels, &bank, &noise, &mut ChaCha8Rng::seed_from_u64(2));
        let clean_p: Vec<Vec<f64>> = (0..p.len())
            .map(|t| bank.proprio[0][t % 50].clone())
            .collect();
        let clean_v: Vec<Vec<f64>> = (0..v.len())
            .map(|t| bank.vision[0][t % 50].clone())
            .collect();
        for (sd, want) in residual_sd(&p, &clean_p)
            .into_iter()
            .map(|s| (s, 0.01))
            .chain(residual_sd(&v, &clean_v).into_iter().map(|s| (s, 0.05)))
        {
            assert!(
                (sd * sd / (want * want) - 1.0).abs() < 0.1,
                "sd {sd} vs {want}"
            );
        }
    }

    #[test]
    fn vision_fluctuates_more_than_proprio_by_default() {
        let bank = PrimitiveBank::new(50);
        let labels = [Primitive::A, Primitive::B, Primitive::A, Primitive::C];
        let (p, v) = render(
            &labels,
            &bank,
            &NoiseSpec::default(),
            &mut ChaCha8Rng::seed_from_u64(6),
        );
        let (cp, cv) = render(
            &labels,
            &bank,
            &NoiseSpec::none(),
            &mut ChaCha8Rng::seed_from_u64(6),
        );
        let mean = |x: Vec<f64>| x.iter().sum::<f64>() / x.len() as f64;
        assert!(mean(residual_sd(&v, &cv)) > mean(residual_sd(&p, &cp)));
    }
}
