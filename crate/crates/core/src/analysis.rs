//! Closed-form error probabilities and free-space path loss.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{sample_channel, ChannelRealization, SystemParams};
use crate::stats::{Accumulator, Estimate};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Standard normal tail `Q(x) = erfc(x / sqrt 2) / 2`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

fn normalized_cross_term(gamma_d: f64, ch: &ChannelRealization, q: usize, m: usize) -> f64 {
    let sr = ch.h_sr()[q];
    (sr.conj() * ch.h_tr()[(q, m)] * ch.h_st()[m]).re / (gamma_d * sr.norm_sqr() + 1.0)
}

/// Single-antenna BER of BPSK on one realization (uses entry `(0, 0)`).
pub fn siso_ber(params: &SystemParams, ch: &ChannelRealization) -> f64 {
    let gd = params.gamma_d();
    let scale = 2.0 * params.backscatter_gain() * (params.n() as f64).sqrt() * gd;
    q_function(scale * normalized_cross_term(gd, ch, 0, 0).abs())
}

/// BER of the linear OSTBC detector conditioned on the channel:
/// `Q(2 alpha A_TR sqrt(N) gamma_d sqrt(sum_{q,m} r_{q,m}^2))`.
pub fn conditional_ber(params: &SystemParams, ch: &ChannelRealization) -> f64 {
    let gd = params.gamma_d();
    let scale = 2.0 * params.backscatter_gain() * (params.n() as f64).sqrt() * gd;
    let mut energy = 0.0;
    for q in 0..ch.reader_antennas() {
        for m in 0..ch.tag_antennas() {
            let r = normalized_cross_term(gd, ch, q, m);
            energy += r * r;
        }
    }
    q_function(scale * energy.sqrt())
}

/// Conditional BER averaged over `n_channels` independent realizations.
pub fn theoretical_ber<R: Rng + ?Sized>(
    params: &SystemParams,
    n_channels: usize,
    rng: &mut R,
) -> Result<Estimate> {
    if n_channels < 1_000 {
        return Err(Error::invalid(
            "n_channels",
            format!("need at least 10^3, got {n_channels}"),
        ));
    }
    let acc: Accumulator = (0..n_channels)
        .map(|_| conditional_ber(params, &sample_channel(params, rng)))
        .collect();
    Ok(acc.estimate())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLossPoint {
    pub frequency: f64,
    pub distance: f64,
    /// Negative dB gain.
    pub loss: f64,
}

/// Free-space (exponent two, isotropic antennas) gain `20 log10(lambda / (4 pi d))`.
pub fn friis_path_loss(frequency: f64, distance: f64) -> Result<f64> {
    if !(frequency > 0.0 && frequency.is_finite()) {
        return Err(Error::invalid(
            "frequency",
            format!("must be positive, got {frequency}"),
        ));
    }
    if !(distance > 0.0 && distance.is_finite()) {
        return Err(Error::invalid(
            "distance",
            format!("must be positive, got {distance}"),
        ));
    }
    let lambda = SPEED_OF_LIGHT / frequency;
    Ok(20.0 * (lambda / (4.0 * std::f64::consts::PI * distance)).log10())
}

/// Path loss at each distance for one carrier.
pub fn path_loss_curve(frequency: f64, distances: &[f64]) -> Result<Vec<PathLossPoint>> {
    distances
        .iter()
        .map(|&d| {
            Ok(PathLossPoint {
                frequency,
                distance: d,
                loss: friis_path_loss(frequency, d)?,
            })
        })
        .collect()
}

/// `n` log-spaced distances from `start` to `stop`, both included.
pub fn log_space(start: f64, stop: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![start];
    }
    let (a, b) = (start.log10(), stop.log10());
    (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}
