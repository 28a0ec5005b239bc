#![allow(dead_code)]

use pvrnn::datagen::{build_dataset, DatasetConfig, FsmSpec, SequenceDataset};
use pvrnn::network::{Frame, NetworkSpec};

/// `∫ q log(q / p)` for one dimension by composite Simpson quadrature over
/// `mu_q ± 12 sigma_q`. The integrand is built from log-densities.
pub fn kl_quadrature_1d(mq: f64, sq: f64, mp: f64, sp: f64) -> f64 {
    let n = 20_000;
    let (a, b) = (mq - 12.0 * sq, mq + 12.0 * sq);
    let h = (b - a) / n as f64;
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let f = |x: f64| {
        let lq = -0.5 * ((x - mq) / sq).powi(2) - sq.ln() - 0.5 * ln2pi;
        let lp = -0.5 * ((x - mp) / sp).powi(2) - sp.ln() - 0.5 * ln2pi;
        lq.exp() * (lq - lp)
    };
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

pub fn kl_quadrature(mq: &[f64], sq: &[f64], mp: &[f64], sp: &[f64]) -> f64 {
    (0..mq.len())
        .map(|i| kl_quadrature_1d(mq[i], sq[i], mp[i], sp[i]))
        .sum()
}

/// Worked Welch examples: samples with the published `t`, degrees of freedom and two-sided `p`.
pub struct WelchCase {
    pub a: &'static [f64],
    pub b: &'static [f64],
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

pub const WELCH_CASES: [WelchCase; 2] = [
    WelchCase {
        a: &[
            27.5, 21.0, 19.0, 23.6, 17.0, 17.9, 16.9, 20.1, 21.9, 22.6, 23.1, 19.6, 19.0, 21.7,
            21.4,
        ],
        b: &[
            27.1, 22.0, 20.8, 23.4, 23.4, 23.5, 25.8, 22.0, 24.8, 20.2, 21.9, 22.1, 22.9, 20.5,
            24.4,
        ],
        t: -2.455356398,
        df: 24.98852929,
        p: 0.021378001,
    },
    WelchCase {
        a: &[17.2, 20.9, 22.6, 18.1, 21.7, 21.4, 23.5, 24.2, 14.7, 21.8],
        b: &[
            21.5, 22.8, 21.0, 23.0, 21.6, 23.6, 22.5, 20.7, 23.4, 21.8, 20.7, 21.7, 21.5, 22.5,
            23.6, 21.5, 22.5, 23.5, 21.5, 21.8,
        ],
        t: -1.565433524,
        df: 9.904741249,
        p: 0.148841697,
    },
];

/// Corpus of `n_train` sequences of `primitives × steps` frames.
pub fn small_corpus(
    n_train: usize,
    primitives: usize,
    steps: usize,
    seed: u64,
) -> (SequenceDataset, SequenceDataset) {
    let mut cfg = DatasetConfig::full(seed);
    cfg.n_train = n_train;
    cfg.n_test = 1;
    cfg.fsm = FsmSpec::with_length(primitives, steps);
    build_dataset(&cfg).unwrap()
}

pub fn constant_frames(spec: &NetworkSpec, t: usize, value: f64) -> Vec<Frame> {
    vec![spec.outputs.iter().map(|o| vec![value; o.dim]).collect(); t]
}

/// Smooth bounded targets for a network with the given output widths.
pub fn wave_frames(spec: &NetworkSpec, t: usize, phase: f64) -> Vec<Frame> {
    (0..t)
        .map(|k| {
            spec.outputs
                .iter()
                .map(|o| {
                    (0..o.dim)
                        .map(|i| 0.6 * (0.3 * k as f64 + phase + i as f64).sin())
                        .collect()
                })
                .collect()
        })
        .collect()
}
