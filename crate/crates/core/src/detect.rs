//! Coherent and non-coherent detectors.
//!
//! All exhaustive searches enumerate hypotheses from `(+1, ..., +1)` downward
//! in lexicographic order and keep the first strict improvement, so ties go
//! to the lexicographically largest symbol vector. This matches the `>= 0`
//! rule of the linear detector and keeps the detectors decision-for-decision
//! comparable.

use nalgebra::DMatrix;

use crate::codec::{diff_unmap, OrthogonalDesign, DIFF_ALPHABET};
use crate::error::{Error, Result};
use crate::model::{ChannelRealization, EffectiveChannel, SystemParams};
use crate::phy::{NormalizedObservation, ReaderObservation};

/// `Lambda` with `Lambda u = [h x_1, ..., h x_M]^T` for one Reader antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionMatrix {
    lambda: DMatrix<f64>,
}

impl DecisionMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.lambda
    }
}

pub fn build_decision_matrix(h_q: &[f64], design: &OrthogonalDesign) -> Result<DecisionMatrix> {
    let m = design.order();
    if h_q.len() != m {
        return Err(Error::DimensionMismatch {
            expected: format!("{m} channel gains"),
            actual: format!("{}", h_q.len()),
        });
    }
    let mut lambda = DMatrix::zeros(m, m);
    for j in 0..m {
        for (antenna, &h) in h_q.iter().enumerate() {
            let (sign, k) = design.entry(antenna, j);
            lambda[(j, k)] += sign * h;
        }
    }
    Ok(DecisionMatrix { lambda })
}

fn check_coherent_dims(y: &NormalizedObservation, h: &EffectiveChannel) -> Result<usize> {
    let m = h.tag_antennas();
    if y.reader_antennas() != h.reader_antennas() || y.periods() != m {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{} observation", h.reader_antennas(), m),
            actual: format!("{}x{}", y.reader_antennas(), y.periods()),
        });
    }
    Ok(m)
}

/// `i`-th hypothesis in descending lexicographic order.
fn hypothesis(i: usize, m: usize) -> Vec<f64> {
    (0..m)
        .map(|k| if i >> (m - 1 - k) & 1 == 1 { -1.0 } else { 1.0 })
        .collect()
}

/// Symbol-by-symbol OSTBC detector on the linearized, normalized model:
/// `u_k = sign(sum_q v_{q,k})` with `v_q = Lambda_q^T y_q`.
pub fn detect_linear(y: &NormalizedObservation, h: &EffectiveChannel) -> Result<Vec<f64>> {
    let m = check_coherent_dims(y, h)?;
    let design = OrthogonalDesign::new(m)?;
    let ym = y.matrix();
    let mut v = vec![0.0; m];
    for q in 0..h.reader_antennas() {
        for j in 0..m {
            let yqj = ym[(q, j)];
            for antenna in 0..m {
                let (sign, k) = design.entry(antenna, j);
                v[k] += sign * h.matrix()[(q, antenna)] * yqj;
            }
        }
    }
    Ok(v.into_iter()
        .map(|s| if s >= 0.0 { 1.0 } else { -1.0 })
        .collect())
}

/// Exhaustive `argmin sum_q sum_j (y_{q,j} - h_q x_j)^2`.
pub fn detect_min_distance(y: &NormalizedObservation, h: &EffectiveChannel) -> Result<Vec<f64>> {
    let m = check_coherent_dims(y, h)?;
    let design = OrthogonalDesign::new(m)?;
    let ym = y.matrix();
    let hm = h.matrix();
    let mut best = (f64::INFINITY, 0usize);
    for i in 0..1usize << m {
        let u = hypothesis(i, m);
        let x = design.encode(&u)?;
        let xm = x.matrix();
        let mut dist = 0.0;
        for q in 0..h.reader_antennas() {
            for j in 0..m {
                let pred: f64 = (0..m).map(|a| hm[(q, a)] * xm[(a, j)]).sum();
                let e = ym[(q, j)] - pred;
                dist += e * e;
            }
        }
        if dist < best.0 {
            best = (dist, i);
        }
    }
    Ok(hypothesis(best.1, m))
}

/// Noise standard deviation assumed by the ML detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseMode {
    /// `varsigma = mu(x) / sqrt(N)`, depends on the hypothesis.
    #[default]
    Exact,
    /// `varsigma = c_q / sqrt(N)`, hypothesis independent.
    Approx,
}

/// Signal term `f_q(x)` assumed by the ML detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SignalModel {
    /// `P_s |h^SR + h^TR G x|^2 + sigma2 - c_q`, including the quadratic term.
    #[default]
    Accurate,
    /// First-order term `2 P_s Re{h^SR* h^TR G x}` only.
    Linearized,
}

/// ML detection on the averaged powers with the accurate signal model.
pub fn detect_ml_accurate(
    obs: &ReaderObservation,
    params: &SystemParams,
    ch: &ChannelRealization,
    noise: NoiseMode,
) -> Result<Vec<f64>> {
    detect_ml(obs, params, ch, noise, SignalModel::Accurate)
}

/// Maximizes `sum_{q,j} [-ln varsigma_{q,j} - (ybar_{q,j} - f_q(x_j) - c_q)^2 / (2 varsigma_{q,j}^2)]`
/// over all `2^M` BPSK vectors. The bias `c_q` is the observation's
/// `c_used`; channel knowledge is the genie realization `ch`.
pub fn detect_ml(
    obs: &ReaderObservation,
    params: &SystemParams,
    ch: &ChannelRealization,
    noise: NoiseMode,
    signal: SignalModel,
) -> Result<Vec<f64>> {
    let m = params.m();
    let q_count = params.q();
    let ybar = obs.ybar();
    if ybar.nrows() != q_count
        || ybar.ncols() != m
        || ch.tag_antennas() != m
        || ch.reader_antennas() != q_count
    {
        return Err(Error::DimensionMismatch {
            expected: format!("{q_count}x{m} observation"),
            actual: format!("{}x{}", ybar.nrows(), ybar.ncols()),
        });
    }
    let design = OrthogonalDesign::new(m)?;
    let sqrt_n = (obs.averaging_length() as f64).sqrt();
    let ps = params.ps();
    let sigma2 = params.sigma2();
    let c_used = obs.c_used();
    let rows: Vec<_> = (0..q_count)
        .map(|q| ch.backscatter_row(params, q))
        .collect();
    let h_sr = ch.h_sr();

    let mut best = (f64::NEG_INFINITY, 0usize);
    for i in 0..1usize << m {
        let u = hypothesis(i, m);
        let x = design.encode(&u)?;
        let xm = x.matrix();
        let mut loglik = 0.0;
        for (q, row) in rows.iter().enumerate() {
            let c = c_used[q];
            for j in 0..m {
                let reflected: num_complex::Complex64 =
                    row.iter().enumerate().map(|(a, g)| g * xm[(a, j)]).sum();
                let mu = ps * (h_sr[q] + reflected).norm_sqr() + sigma2;
                let c_true = ps * h_sr[q].norm_sqr() + sigma2;
                let f = match signal {
                    SignalModel::Accurate => mu - c_true,
                    SignalModel::Linearized => 2.0 * ps * (h_sr[q].conj() * reflected).re,
                };
                let sd = match noise {
                    NoiseMode::Exact => mu / sqrt_n,
                    NoiseMode::Approx => c / sqrt_n,
                };
                let r = (ybar[(q, j)] - f - c) / sd;
                loglik -= sd.ln() + 0.5 * r * r;
            }
        }
        if loglik > best.0 {
            best = (loglik, i);
        }
    }
    Ok(hypothesis(best.1, m))
}

/// Non-coherent detection of one bit pair from four consecutive periods
/// (reference block, then data block) of the normalized observation.
pub fn detect_differential(window: &NormalizedObservation) -> Result<(bool, bool)> {
    if window.periods() < 4 {
        return Err(Error::WindowTooShort(window.periods()));
    }
    let y = window.matrix();
    let (mut r1, mut r2) = (Vec::new(), Vec::new());
    for q in 0..window.reader_antennas() {
        let (y1, y2, y3, y4) = (y[(q, 0)], y[(q, 1)], y[(q, 2)], y[(q, 3)]);
        r1.push(y3 * y1 + y4 * y2);
        r2.push(y3 * y2 - y4 * y1);
    }
    let mut best = (f64::INFINITY, DIFF_ALPHABET[0]);
    for b in DIFF_ALPHABET {
        let (b1, b2) = (f64::from(b[0]), f64::from(b[1]));
        let dist: f64 = r1
            .iter()
            .zip(&r2)
            .map(|(a, c)| (b1 - a).powi(2) + (b2 - c).powi(2))
            .sum();
        if dist < best.0 {
            best = (dist, b);
        }
    }
    Ok(diff_unmap(best.1).expect("alphabet entries always invert"))
}
