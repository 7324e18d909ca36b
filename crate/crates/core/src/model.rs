//! Scenario parameters, fading channels and the linearized effective channel.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::stats::{Accumulator, Estimate};

/// Averaging lengths below this make the Gaussian approximation of the
/// averaged power questionable.
pub const MIN_RECOMMENDED_N: usize = 30;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Tag antenna counts with a real orthogonal design (1 is plain BPSK).
pub fn check_tag_antennas(m: usize) -> Result<()> {
    match m {
        1 | 2 | 4 | 8 => Ok(()),
        other => Err(Error::UnsupportedAntennaCount(other)),
    }
}

/// Scenario constants of one link.
///
/// Powers are normalized to the direct path, so `gamma_d = ps / sigma2` and
/// the relative SNR is `1 / (alpha * a_tr)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    m: usize,
    q: usize,
    n: usize,
    ps: f64,
    sigma2: f64,
    alpha: f64,
    a_tr: f64,
}

impl SystemParams {
    pub fn new(
        m: usize,
        q: usize,
        n: usize,
        ps: f64,
        sigma2: f64,
        alpha: f64,
        a_tr: f64,
    ) -> Result<Self> {
        check_tag_antennas(m)?;
        if q == 0 {
            return Err(Error::invalid("Q", "Reader needs at least one antenna"));
        }
        if n == 0 {
            return Err(Error::invalid("N", "averaging length must be at least 1"));
        }
        if !(ps.is_finite() && ps >= 0.0) {
            return Err(Error::invalid(
                "P_s",
                format!("must be finite and >= 0, got {ps}"),
            ));
        }
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::invalid(
                "sigma2",
                format!("must be finite and > 0, got {sigma2}"),
            ));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::invalid(
                "alpha",
                format!("must lie in (0, 1], got {alpha}"),
            ));
        }
        if !(a_tr > 0.0 && a_tr <= 1.0) {
            return Err(Error::invalid(
                "A_TR",
                format!("must lie in (0, 1], got {a_tr}"),
            ));
        }
        Ok(Self {
            m,
            q,
            n,
            ps,
            sigma2,
            alpha,
            a_tr,
        })
    }

    /// Builds parameters from the quantities the figures are drawn in:
    /// direct-link SNR, relative SNR and Tag hardware loss, all in dB.
    /// Noise power is fixed to one and the loss is an amplitude factor
    /// `alpha = 10^(-loss_db/20)`.
    pub fn from_db(
        m: usize,
        q: usize,
        n: usize,
        gamma_d_db: f64,
        delta_gamma_db: f64,
        alpha_loss_db: f64,
    ) -> Result<Self> {
        if !gamma_d_db.is_finite() || !delta_gamma_db.is_finite() || !alpha_loss_db.is_finite() {
            return Err(Error::invalid("snr", "dB quantities must be finite"));
        }
        if alpha_loss_db < 0.0 {
            return Err(Error::invalid(
                "alpha_db",
                "hardware loss cannot be negative",
            ));
        }
        let alpha = 10f64.powf(-alpha_loss_db / 20.0);
        let delta = db_to_linear(delta_gamma_db);
        if delta <= 1.0 {
            return Err(Error::invalid(
                "delta_gamma_db",
                format!("relative SNR must exceed 0 dB, got {delta_gamma_db}"),
            ));
        }
        let a_tr = 1.0 / (alpha * delta.sqrt());
        if a_tr > 1.0 {
            return Err(Error::invalid(
                "delta_gamma_db",
                format!("{delta_gamma_db} dB would need A_TR > 1 with {alpha_loss_db} dB Tag loss"),
            ));
        }
        Self::new(m, q, n, db_to_linear(gamma_d_db), 1.0, alpha, a_tr)
    }

    pub fn m(&self) -> usize {
        self.m
    }
    pub fn q(&self) -> usize {
        self.q
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn ps(&self) -> f64 {
        self.ps
    }
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn a_tr(&self) -> f64 {
        self.a_tr
    }

    /// Amplitude gain `alpha * A_TR` of the backscatter path.
    pub fn backscatter_gain(&self) -> f64 {
        self.alpha * self.a_tr
    }

    pub fn gamma_d(&self) -> f64 {
        self.ps / self.sigma2
    }

    pub fn gamma_d_db(&self) -> f64 {
        linear_to_db(self.gamma_d())
    }

    pub fn delta_gamma(&self) -> f64 {
        1.0 / (self.backscatter_gain() * self.backscatter_gain())
    }

    pub fn delta_gamma_db(&self) -> f64 {
        linear_to_db(self.delta_gamma())
    }

    pub fn with_n(mut self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("N", "averaging length must be at least 1"));
        }
        self.n = n;
        Ok(self)
    }

    pub fn with_antennas(mut self, m: usize, q: usize) -> Result<Self> {
        check_tag_antennas(m)?;
        if q == 0 {
            return Err(Error::invalid("Q", "Reader needs at least one antenna"));
        }
        self.m = m;
        self.q = q;
        Ok(self)
    }

    pub fn with_ps(mut self, ps: f64) -> Result<Self> {
        if !(ps.is_finite() && ps >= 0.0) {
            return Err(Error::invalid(
                "P_s",
                format!("must be finite and >= 0, got {ps}"),
            ));
        }
        self.ps = ps;
        Ok(self)
    }
}

/// One quasi-static draw of the small-scale fading.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    h_sr: Vec<Complex64>,
    h_st: Vec<Complex64>,
    h_tr: DMatrix<Complex64>,
}

impl ChannelRealization {
    pub fn from_parts(
        h_sr: Vec<Complex64>,
        h_st: Vec<Complex64>,
        h_tr: DMatrix<Complex64>,
    ) -> Result<Self> {
        if h_tr.nrows() != h_sr.len() || h_tr.ncols() != h_st.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("h_tr {}x{}", h_sr.len(), h_st.len()),
                actual: format!("h_tr {}x{}", h_tr.nrows(), h_tr.ncols()),
            });
        }
        Ok(Self { h_sr, h_st, h_tr })
    }

    /// Source to Reader, one entry per Reader antenna.
    pub fn h_sr(&self) -> &[Complex64] {
        &self.h_sr
    }

    /// Source to Tag, one entry per Tag antenna.
    pub fn h_st(&self) -> &[Complex64] {
        &self.h_st
    }

    /// Tag to Reader, `Q x M`.
    pub fn h_tr(&self) -> &DMatrix<Complex64> {
        &self.h_tr
    }

    pub fn reader_antennas(&self) -> usize {
        self.h_sr.len()
    }

    pub fn tag_antennas(&self) -> usize {
        self.h_st.len()
    }

    /// Row `q` of `h^TR G`: the complex backscatter gain of each Tag antenna
    /// seen at Reader antenna `q`.
    pub fn backscatter_row(&self, params: &SystemParams, q: usize) -> Vec<Complex64> {
        let g = params.backscatter_gain();
        (0..self.tag_antennas())
            .map(|m| self.h_tr[(q, m)] * self.h_st[m] * g)
            .collect()
    }

    /// `h_q^SR + h_q^TR G x`, the composite amplitude at antenna `q`.
    pub fn composite_gain(&self, params: &SystemParams, q: usize, x: &[f64]) -> Complex64 {
        let g = params.backscatter_gain();
        let reflected: Complex64 = x
            .iter()
            .enumerate()
            .map(|(m, &xm)| self.h_tr[(q, m)] * self.h_st[m] * xm)
            .sum();
        self.h_sr[q] + reflected * g
    }
}

pub(crate) fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws i.i.d. `CN(0, 1)` fading for every link of the scenario.
pub fn sample_channel<R: Rng + ?Sized>(params: &SystemParams, rng: &mut R) -> ChannelRealization {
    let (m, q) = (params.m(), params.q());
    let h_sr = (0..q).map(|_| complex_normal(rng)).collect();
    let h_st = (0..m).map(|_| complex_normal(rng)).collect();
    let h_tr = DMatrix::from_fn(q, m, |_, _| complex_normal(rng));
    ChannelRealization { h_sr, h_st, h_tr }
}

/// Real `Q x M` gain matrix of the linearized, noise-normalized model.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel {
    h: DMatrix<f64>,
}

impl EffectiveChannel {
    pub fn from_matrix(h: DMatrix<f64>) -> Self {
        Self { h }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    /// Row `q` as a vector of Tag-antenna gains.
    pub fn row(&self, q: usize) -> Vec<f64> {
        self.h.row(q).iter().copied().collect()
    }

    pub fn reader_antennas(&self) -> usize {
        self.h.nrows()
    }

    pub fn tag_antennas(&self) -> usize {
        self.h.ncols()
    }
}

/// `h_{q,m} = 2 alpha A_TR sqrt(N) gamma_d Re{h_q^SR* h_{q,m}^TR h_m^ST} / (gamma_d |h_q^SR|^2 + 1)`.
pub fn effective_channel(params: &SystemParams, ch: &ChannelRealization) -> EffectiveChannel {
    let gd = params.gamma_d();
    let scale = 2.0 * params.backscatter_gain() * (params.n() as f64).sqrt() * gd;
    let h = DMatrix::from_fn(ch.reader_antennas(), ch.tag_antennas(), |q, m| {
        let sr = ch.h_sr[q];
        let cross = (sr.conj() * ch.h_tr[(q, m)] * ch.h_st[m]).re;
        scale * cross / (gd * sr.norm_sqr() + 1.0)
    });
    EffectiveChannel { h }
}

/// One sample of `(gamma_d Re{h^SR* h^TR h^ST} / (gamma_d |h^SR|^2 + 1))^2`.
pub(crate) fn kappa_integrand(gamma_d: f64, sr: Complex64, tr: Complex64, st: Complex64) -> f64 {
    let r = gamma_d * (sr.conj() * tr * st).re / (gamma_d * sr.norm_sqr() + 1.0);
    r * r
}

/// Monte Carlo estimate of the per-link energy factor kappa(gamma_d) that
/// links the averaging length to the receive SNR.
pub fn compute_kappa<R: Rng + ?Sized>(
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
    let gd = params.gamma_d();
    let acc: Accumulator = (0..n_samples)
        .map(|_| {
            let sr = complex_normal(rng);
            let tr = complex_normal(rng);
            let st = complex_normal(rng);
            kappa_integrand(gd, sr, tr, st)
        })
        .collect();
    Ok(acc.estimate())
}

/// Receive SNR of the single-antenna reference and of the `M`-antenna Tag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceiveSnr {
    pub siso: f64,
    pub mimo: f64,
}

impl ReceiveSnr {
    pub fn siso_db(&self) -> f64 {
        linear_to_db(self.siso)
    }

    pub fn mimo_db(&self) -> f64 {
        linear_to_db(self.mimo)
    }
}

/// `gamma_R = 4 N kappa / delta_gamma`; an `M`-antenna Tag collects `M` times that.
pub fn receive_snr(params: &SystemParams, kappa: f64) -> Result<ReceiveSnr> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::invalid(
            "kappa",
            format!("must be positive, got {kappa}"),
        ));
    }
    let siso = 4.0 * params.n() as f64 * kappa / params.delta_gamma();
    Ok(ReceiveSnr {
        siso,
        mimo: params.m() as f64 * siso,
    })
}

/// Averaging length that realizes a target reference receive SNR.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AveragingLength {
    pub n: usize,
    /// Set when `n` is below [`MIN_RECOMMENDED_N`].
    pub short_averaging: bool,
}

/// Inverts `gamma_R = 4 N kappa / delta_gamma` for `N`, rounding to the
/// nearest integer and clamping to at least one.
pub fn n_for_target_gamma_r(
    params: &SystemParams,
    kappa: f64,
    target_gamma_r: f64,
) -> Result<AveragingLength> {
    if !(target_gamma_r > 0.0 && target_gamma_r.is_finite()) {
        return Err(Error::invalid(
            "gamma_r",
            format!("target must be positive, got {target_gamma_r}"),
        ));
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::invalid(
            "kappa",
            format!("must be positive, got {kappa}"),
        ));
    }
    let exact = target_gamma_r * params.delta_gamma() / (4.0 * kappa);
    let n = (exact.round() as usize).max(1);
    Ok(AveragingLength {
        n,
        short_averaging: n < MIN_RECOMMENDED_N,
    })
}
