//! Reader observations: the per-antenna averaged power of one Tag symbol
//! period, bias removal and noise normalization.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{complex_normal, ChannelRealization, SystemParams};
use crate::stats::{Estimate, Z95};

/// How the averaged power `ybar` is generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Fidelity {
    /// Draws every ambient symbol and noise sample and averages `|z|^2`.
    /// Costs `O(N)` per observation.
    SymbolLevel,
    /// Exact law of the average: `mu / (2N) * chi2(2N)`.
    #[default]
    ChiSquare,
    /// Large-`N` approximation `mu * (1 + n / sqrt(N))`.
    Gaussian,
}

impl Fidelity {
    pub const ALL: [Fidelity; 3] = [
        Fidelity::SymbolLevel,
        Fidelity::ChiSquare,
        Fidelity::Gaussian,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Fidelity::SymbolLevel => "symbol_level",
            Fidelity::ChiSquare => "chi_square",
            Fidelity::Gaussian => "gaussian",
        }
    }
}

impl fmt::Display for Fidelity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Fidelity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Fidelity::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                format!("unknown fidelity `{s}` (expected symbol_level, chi_square or gaussian)")
            })
    }
}

/// Averaged powers seen by the Reader over `J` symbol periods.
#[derive(Debug, Clone, PartialEq)]
pub struct ReaderObservation {
    ybar: DMatrix<f64>,
    fidelity: Fidelity,
    n_avg: usize,
    c_used: Vec<f64>,
    c_true: Vec<f64>,
}

impl ReaderObservation {
    /// Wraps externally produced averaged powers; the bias used defaults to
    /// `c_true`.
    pub fn from_parts(
        ybar: DMatrix<f64>,
        fidelity: Fidelity,
        n_avg: usize,
        c_true: Vec<f64>,
    ) -> Result<Self> {
        if c_true.len() != ybar.nrows() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} bias values", ybar.nrows()),
                actual: format!("{}", c_true.len()),
            });
        }
        if n_avg < 1 {
            return Err(Error::invalid("N", "averaging length must be at least 1"));
        }
        Ok(Self {
            ybar,
            fidelity,
            n_avg,
            c_used: c_true.clone(),
            c_true,
        })
    }

    /// `Q x J` averaged powers.
    pub fn ybar(&self) -> &DMatrix<f64> {
        &self.ybar
    }

    pub fn fidelity(&self) -> Fidelity {
        self.fidelity
    }

    /// Ambient symbols averaged per Tag symbol period.
    pub fn averaging_length(&self) -> usize {
        self.n_avg
    }

    /// Bias subtracted downstream; starts out equal to [`Self::c_true`].
    pub fn c_used(&self) -> &[f64] {
        &self.c_used
    }

    pub fn c_true(&self) -> &[f64] {
        &self.c_true
    }

    /// Periods `start..start+len` with the same bias.
    pub fn window(&self, start: usize, len: usize) -> ReaderObservation {
        ReaderObservation {
            ybar: self.ybar.columns(start, len).into_owned(),
            fidelity: self.fidelity,
            n_avg: self.n_avg,
            c_used: self.c_used.clone(),
            c_true: self.c_true.clone(),
        }
    }

    /// Replaces the bias used downstream, e.g. with a pilot estimate.
    pub fn with_bias(mut self, c: Vec<f64>) -> Result<Self> {
        if c.len() != self.c_true.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} bias values", self.c_true.len()),
                actual: format!("{}", c.len()),
            });
        }
        self.c_used = c;
        Ok(self)
    }
}

/// `c_q = P_s |h_q^SR|^2 + sigma2`, the power that carries no Tag data.
pub fn true_bias(params: &SystemParams, ch: &ChannelRealization) -> Vec<f64> {
    ch.h_sr()
        .iter()
        .map(|h| params.ps() * h.norm_sqr() + params.sigma2())
        .collect()
}

/// Mean averaged power `mu = P_s |h_q^SR + h_q^TR G x|^2 + sigma2`.
pub fn mean_power(params: &SystemParams, ch: &ChannelRealization, q: usize, x: &[f64]) -> f64 {
    params.ps() * ch.composite_gain(params, q, x).norm_sqr() + params.sigma2()
}

/// Noise-free averaged powers `mu` for every antenna and column of `x`.
pub fn mean_observation(
    params: &SystemParams,
    ch: &ChannelRealization,
    x: &DMatrix<f64>,
) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(ch.reader_antennas(), x.ncols());
    for j in 0..x.ncols() {
        let xj: Vec<f64> = x.column(j).iter().copied().collect();
        for q in 0..ch.reader_antennas() {
            out[(q, j)] = mean_power(params, ch, q, &xj);
        }
    }
    out
}

/// Generates the Reader's averaged power for every antenna and every column
/// of `x` (`M x J`, one transmit vector per period). Periods use disjoint
/// windows of ambient symbols and are independent given `x`.
pub fn observe_block<R: Rng + ?Sized>(
    params: &SystemParams,
    ch: &ChannelRealization,
    x: &DMatrix<f64>,
    fidelity: Fidelity,
    rng: &mut R,
) -> Result<ReaderObservation> {
    let (m, q_count, n) = (params.m(), params.q(), params.n());
    if n < 1 {
        return Err(Error::invalid("N", "averaging length must be at least 1"));
    }
    if x.nrows() != m || ch.tag_antennas() != m || ch.reader_antennas() != q_count {
        return Err(Error::DimensionMismatch {
            expected: format!("{m} Tag antennas, {q_count} Reader antennas"),
            actual: format!(
                "x has {} rows, channel is {}x{}",
                x.nrows(),
                ch.reader_antennas(),
                ch.tag_antennas()
            ),
        });
    }
    for (idx, v) in x.iter().enumerate() {
        if v.abs() > 1.0 || !v.is_finite() {
            return Err(Error::PassivityViolation {
                antenna: idx % m,
                magnitude: v.abs(),
            });
        }
    }

    let nf = n as f64;
    let gamma = match fidelity {
        Fidelity::ChiSquare => Some(Gamma::new(nf, 1.0 / nf).expect("N >= 1")),
        _ => None,
    };
    let amp_s = params.ps().sqrt();
    let amp_w = params.sigma2().sqrt();
    let sqrt_n = nf.sqrt();

    let j_count = x.ncols();
    let mut ybar = DMatrix::zeros(q_count, j_count);
    for j in 0..j_count {
        let xj: Vec<f64> = x.column(j).iter().copied().collect();
        for q in 0..q_count {
            let a = ch.composite_gain(params, q, &xj);
            let mu = params.ps() * a.norm_sqr() + params.sigma2();
            ybar[(q, j)] = match fidelity {
                Fidelity::SymbolLevel => {
                    let mut acc = 0.0;
                    for _ in 0..n {
                        let s = complex_normal(rng) * amp_s;
                        let w = complex_normal(rng) * amp_w;
                        acc += (a * s + w).norm_sqr();
                    }
                    acc / nf
                }
                Fidelity::ChiSquare => mu * gamma.as_ref().unwrap().sample(rng),
                Fidelity::Gaussian => {
                    let g: f64 = rng.sample(StandardNormal);
                    mu * (1.0 + g / sqrt_n)
                }
            };
        }
    }
    let c_true = true_bias(params, ch);
    Ok(ReaderObservation {
        ybar,
        fidelity,
        n_avg: n,
        c_used: c_true.clone(),
        c_true,
    })
}

/// Pilot-based bias estimate: the Tag stays silent (`x = 0`) for one period
/// of `n_bias` ambient symbols and the averaged power is taken as `c_q`.
pub fn estimate_bias<R: Rng + ?Sized>(
    params: &SystemParams,
    ch: &ChannelRealization,
    fidelity: Fidelity,
    n_bias: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n_bias < 1 {
        return Err(Error::invalid("n_bias", "pilot length must be at least 1"));
    }
    let pilot = params.with_n(n_bias)?;
    let silent = DMatrix::zeros(params.m(), 1);
    let obs = observe_block(&pilot, ch, &silent, fidelity, rng)?;
    Ok(obs.ybar.column(0).iter().copied().collect())
}

/// Bias-free, unit-noise observation `y = sqrt(N) (ybar - c) / c`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedObservation {
    y: DMatrix<f64>,
}

impl NormalizedObservation {
    pub fn from_matrix(y: DMatrix<f64>) -> Self {
        Self { y }
    }

    /// `Q x J`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn reader_antennas(&self) -> usize {
        self.y.nrows()
    }

    pub fn periods(&self) -> usize {
        self.y.ncols()
    }

    /// Columns `start..start+len` as a new observation.
    pub fn window(&self, start: usize, len: usize) -> NormalizedObservation {
        NormalizedObservation {
            y: self.y.columns(start, len).into_owned(),
        }
    }
}

pub fn linearize_normalize(obs: &ReaderObservation) -> Result<NormalizedObservation> {
    if let Some((q, &c)) = obs
        .c_used
        .iter()
        .enumerate()
        .find(|(_, c)| !c.is_finite() || **c <= 0.0)
    {
        return Err(Error::NonPositiveBias {
            antenna: q,
            value: c,
        });
    }
    let sqrt_n = (obs.n_avg as f64).sqrt();
    let y = DMatrix::from_fn(obs.ybar.nrows(), obs.ybar.ncols(), |q, j| {
        let c = obs.c_used[q];
        sqrt_n * (obs.ybar[(q, j)] - c) / c
    });
    Ok(NormalizedObservation { y })
}

/// Relative weight of the quadratic term dropped by the linearization,
/// `E[|h^TR G x|^2] / E[|2 Re{h^SR* h^TR G x} + |h^TR G x|^2|]`, for the
/// all-ones BPSK vector. `P_s` cancels between numerator and denominator.
pub fn linearization_error<R: Rng + ?Sized>(
    params: &SystemParams,
    n_samples: usize,
    rng: &mut R,
) -> Result<Estimate> {
    if n_samples < 10_000 {
        return Err(Error::invalid(
            "n_samples",
            format!("need at least 10^4, got {n_samples}"),
        ));
    }
    let g = params.backscatter_gain();
    let m = params.m();
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..n_samples {
        let sr = complex_normal(rng);
        let mut reflected = num_complex::Complex64::new(0.0, 0.0);
        for _ in 0..m {
            let tr = complex_normal(rng);
            let st = complex_normal(rng);
            reflected += tr * st;
        }
        reflected *= g;
        let quad = reflected.norm_sqr();
        let a = quad;
        let b = (2.0 * (sr.conj() * reflected).re + quad).abs();
        sa += a;
        sb += b;
        saa += a * a;
        sbb += b * b;
        sab += a * b;
    }
    let n = n_samples as f64;
    let (ma, mb) = (sa / n, sb / n);
    let var_a = (saa - n * ma * ma) / (n - 1.0);
    let var_b = (sbb - n * mb * mb) / (n - 1.0);
    let cov = (sab - n * ma * mb) / (n - 1.0);
    let ratio = ma / mb;
    let var_ratio = (var_a - 2.0 * ratio * cov + ratio * ratio * var_b) / (n * mb * mb);
    Ok(Estimate {
        value: ratio,
        half_width: Z95 * var_ratio.max(0.0).sqrt(),
        samples: n_samples as u64,
    })
}
