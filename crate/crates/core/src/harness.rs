//! Deterministic parallel Monte Carlo BER estimation and parameter sweeps.
//!
//! A trial is one frame: a fresh channel realization carrying
//! `frame_blocks` code blocks. Trials are evaluated in batches on a rayon
//! pool; each trial draws only from its own substreams and batch tallies are
//! merged by integer addition, so the outcome does not depend on the number
//! of workers. The stop rule is checked between batches, whose sizes follow a
//! fixed schedule.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Add;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::analysis::theoretical_ber;
use crate::codec::{bpsk, concat_blocks, encode_coherent_block, encode_diff_stream, DiffState};
use crate::detect::{
    detect_differential, detect_linear, detect_min_distance, detect_ml_accurate, NoiseMode,
};
use crate::error::{Error, Result};
use crate::model::{
    check_tag_antennas, compute_kappa, db_to_linear, effective_channel, n_for_target_gamma_r,
    sample_channel, SystemParams,
};
use crate::phy::{estimate_bias, linearize_normalize, observe_block, Fidelity};
use crate::rng::{Purpose, StreamFactory};
use crate::stats::{binomial_half_width, Estimate};

pub const CSV_HEADER: &str = "sweep_var,value,detector,M,Q,N,gamma_d_db,delta_gamma_db,fidelity,bias_mode,trials,bits,errors,ber,ci95";

const FIRST_BATCH: u64 = 256;
const MAX_BATCH: u64 = 1 << 16;

/// Default number of channel draws behind a theoretical BER point.
pub const DEFAULT_THEORY_CHANNELS: usize = 10_000;

macro_rules! named_enum {
    ($ty:ident { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$($ty::$variant),+];

            pub fn name(&self) -> &'static str {
                match self {
                    $($ty::$variant => $name),+
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
                $ty::ALL.iter().copied().find(|v| v.name() == s).ok_or_else(|| {
                    let names: Vec<_> = $ty::ALL.iter().map(|v| v.name()).collect();
                    format!("unknown value `{s}` (expected one of: {})", names.join(", "))
                })
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum DetectorKind {
    /// ML on the averaged powers, signal-dependent noise.
    MlExact,
    /// ML on the averaged powers, noise deviation `c_q / sqrt(N)`.
    MlApprox,
    #[default]
    Linear,
    MinDistance,
    Differential,
}

named_enum!(DetectorKind {
    MlExact => "ml_exact",
    MlApprox => "ml_approx",
    Linear => "linear",
    MinDistance => "min_distance",
    Differential => "differential",
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SweepVar {
    #[default]
    GammaRDb,
    GammaDDb,
    DeltaGammaDb,
}

named_enum!(SweepVar {
    GammaRDb => "gamma_r_db",
    GammaDDb => "gamma_d_db",
    DeltaGammaDb => "delta_gamma_db",
});

/// How the Reader obtains the bias `c_q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum BiasMode {
    #[default]
    Perfect,
    /// Silent pilot of the given length; `None` uses the data averaging length.
    Estimated(Option<usize>),
}

impl BiasMode {
    fn resolved(self, n: usize) -> BiasMode {
        match self {
            BiasMode::Estimated(None) => BiasMode::Estimated(Some(n)),
            other => other,
        }
    }
}

impl fmt::Display for BiasMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BiasMode::Perfect => f.write_str("perfect"),
            BiasMode::Estimated(None) => f.write_str("estimated"),
            BiasMode::Estimated(Some(n)) => write!(f, "estimated:{n}"),
        }
    }
}

impl FromStr for BiasMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "perfect" => Ok(BiasMode::Perfect),
            "estimated" => Ok(BiasMode::Estimated(None)),
            other => other
                .strip_prefix("estimated:")
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|&n| n >= 1)
                .map(|n| BiasMode::Estimated(Some(n)))
                .ok_or_else(|| format!("unknown bias mode `{s}` (expected perfect, estimated or estimated:<N_bias>)")),
        }
    }
}

/// What produced a curve point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CurveKind {
    Simulated(DetectorKind),
    /// Channel-averaged closed-form BER of the linear detector.
    Theoretical,
}

impl fmt::Display for CurveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurveKind::Simulated(d) => d.fmt(f),
            CurveKind::Theoretical => f.write_str("theoretical"),
        }
    }
}

impl FromStr for CurveKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "theoretical" {
            Ok(CurveKind::Theoretical)
        } else {
            s.parse().map(CurveKind::Simulated)
        }
    }
}

/// Everything needed to run one BER curve.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub m: usize,
    pub q: usize,
    /// Averaging length used when no receive-SNR target applies.
    pub n: usize,
    pub gamma_d_db: f64,
    pub delta_gamma_db: f64,
    /// Tag hardware loss in dB (power); applied as an amplitude factor.
    pub alpha_db: f64,
    /// Fixed reference receive SNR for sweeps over other variables.
    pub gamma_r_db: Option<f64>,
    pub sweep: SweepVar,
    pub grid: Vec<f64>,
    pub detector: DetectorKind,
    pub fidelity: Fidelity,
    pub bias_mode: BiasMode,
    /// Blocks per channel realization; `None` picks 1 (coherent) or 16 (differential).
    pub frame_blocks: Option<usize>,
    pub master_seed: u64,
    pub max_trials: u64,
    pub target_bit_errors: u64,
    pub kappa_samples: usize,
    pub theory_channels: usize,
    pub workers: usize,
    pub diff_init: DiffState,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            m: 2,
            q: 1,
            n: 40_000,
            gamma_d_db: 15.0,
            delta_gamma_db: 40.0,
            alpha_db: 1.1,
            gamma_r_db: None,
            sweep: SweepVar::GammaRDb,
            grid: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            detector: DetectorKind::Linear,
            fidelity: Fidelity::ChiSquare,
            bias_mode: BiasMode::Perfect,
            frame_blocks: None,
            master_seed: 1,
            max_trials: 1_000_000,
            target_bit_errors: 200,
            kappa_samples: 1_000_000,
            theory_channels: DEFAULT_THEORY_CHANNELS,
            workers: 1,
            diff_init: DiffState::default(),
        }
    }
}

/// A grid value turned into concrete link parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedPoint {
    pub value: f64,
    pub params: SystemParams,
    pub kappa: Option<Estimate>,
    pub short_averaging: bool,
}

impl ExperimentConfig {
    pub fn frame_blocks(&self) -> usize {
        self.frame_blocks.unwrap_or(match self.detector {
            DetectorKind::Differential => 16,
            _ => 1,
        })
    }

    /// Information bits carried by one trial.
    pub fn bits_per_trial(&self) -> u64 {
        let f = self.frame_blocks() as u64;
        match self.detector {
            DetectorKind::Differential => 2 * (f - 1),
            _ => self.m as u64 * f,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_tag_antennas(self.m)?;
        if self.q == 0 {
            return Err(Error::invalid("Q", "Reader needs at least one antenna"));
        }
        if self.n == 0 {
            return Err(Error::invalid("N", "averaging length must be at least 1"));
        }
        if self.detector == DetectorKind::Differential {
            if self.m != 2 {
                return Err(Error::UnsupportedDifferential(self.m));
            }
            if self.frame_blocks() < 2 {
                return Err(Error::invalid(
                    "frame_blocks",
                    "differential frames need a reference block plus at least one data block",
                ));
            }
        }
        if self.frame_blocks() == 0 {
            return Err(Error::invalid("frame_blocks", "must be at least 1"));
        }
        if self.grid.is_empty() {
            return Err(Error::invalid("grid", "sweep grid is empty"));
        }
        if let Some(v) = self.grid.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid("grid", format!("non-finite grid value {v}")));
        }
        if let Some(g) = self.gamma_r_db {
            if !g.is_finite() {
                return Err(Error::invalid("gamma_r_db", "must be finite"));
            }
        }
        if self.max_trials == 0 {
            return Err(Error::invalid("max_trials", "must be at least 1"));
        }
        if self.workers == 0 {
            return Err(Error::invalid("workers", "must be at least 1"));
        }
        if self.kappa_samples < 10_000 {
            return Err(Error::invalid("kappa_samples", "need at least 10^4"));
        }
        if self.theory_channels < 1_000 {
            return Err(Error::invalid("theory_channels", "need at least 10^3"));
        }
        if let BiasMode::Estimated(Some(0)) = self.bias_mode {
            return Err(Error::invalid("n_bias", "pilot length must be at least 1"));
        }
        // Surfaces parameter-range errors (e.g. relative SNR) before any work.
        for &v in &self.grid {
            self.point_params(v)?;
        }
        Ok(())
    }

    fn point_params(&self, value: f64) -> Result<(SystemParams, Option<f64>)> {
        let (mut gd, mut dg, mut gr) = (self.gamma_d_db, self.delta_gamma_db, self.gamma_r_db);
        match self.sweep {
            SweepVar::GammaRDb => gr = Some(value),
            SweepVar::GammaDDb => gd = value,
            SweepVar::DeltaGammaDb => dg = value,
        }
        let params = SystemParams::from_db(self.m, self.q, self.n, gd, dg, self.alpha_db)?;
        Ok((params, gr))
    }

    /// Resolves one grid value. When a receive-SNR target applies, `N` is
    /// chosen from a seeded estimate of kappa at the point's direct-link SNR.
    pub fn resolve(&self, value: f64) -> Result<ResolvedPoint> {
        let (params, gamma_r_db) = self.point_params(value)?;
        let Some(gr) = gamma_r_db else {
            return Ok(ResolvedPoint {
                value,
                params,
                kappa: None,
                short_averaging: params.n() < crate::model::MIN_RECOMMENDED_N,
            });
        };
        let streams = StreamFactory::new(self.master_seed);
        let kappa = compute_kappa(
            &params,
            self.kappa_samples,
            &mut streams.stream(0, Purpose::Kappa),
        )?;
        let len = n_for_target_gamma_r(&params, kappa.value, db_to_linear(gr))?;
        Ok(ResolvedPoint {
            value,
            params: params.with_n(len.n)?,
            kappa: Some(kappa),
            short_averaging: len.short_averaging,
        })
    }
}

/// Running counts of a BER estimate; merging is plain addition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub trials: u64,
    pub bits: u64,
    pub errors: u64,
}

impl Add for Tally {
    type Output = Tally;

    fn add(self, o: Tally) -> Tally {
        Tally {
            trials: self.trials + o.trials,
            bits: self.bits + o.bits,
            errors: self.errors + o.errors,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerPoint {
    pub sweep_var: SweepVar,
    pub value: f64,
    pub curve: CurveKind,
    pub m: usize,
    pub q: usize,
    pub n: usize,
    pub gamma_d_db: f64,
    pub delta_gamma_db: f64,
    pub fidelity: Fidelity,
    pub bias_mode: BiasMode,
    pub trials: u64,
    pub bits: u64,
    pub errors: u64,
    pub ber: f64,
    pub ci95: f64,
    /// The trial cap was reached before the error target.
    pub low_confidence: bool,
}

impl BerPoint {
    pub fn estimate(&self) -> Estimate {
        Estimate {
            value: self.ber,
            half_width: self.ci95,
            samples: self.bits,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerCurve {
    pub master_seed: u64,
    pub points: Vec<BerPoint>,
}

impl BerCurve {
    pub fn bers(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.ber).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid("workers", e.to_string()))
}

fn bit_of(decision: f64) -> bool {
    decision < 0.0
}

/// Runs one frame and counts its bit errors.
fn run_trial(
    cfg: &ExperimentConfig,
    params: &SystemParams,
    streams: &StreamFactory,
    trial: u64,
) -> Result<Tally> {
    let ch = sample_channel(params, &mut streams.stream(trial, Purpose::Channel));
    let mut bit_rng = streams.stream(trial, Purpose::Bits);
    let mut obs_rng = streams.stream(trial, Purpose::Observation);
    let frame = cfg.frame_blocks();
    let m = params.m();

    let (bits, x) = if cfg.detector == DetectorKind::Differential {
        let bits: Vec<bool> = (0..2 * (frame - 1)).map(|_| bit_rng.random()).collect();
        let blocks = encode_diff_stream(&bits, cfg.diff_init)?;
        (bits, concat_blocks(&blocks))
    } else {
        let bits: Vec<bool> = (0..m * frame).map(|_| bit_rng.random()).collect();
        let blocks = bits
            .chunks_exact(m)
            .map(|c| encode_coherent_block(&c.iter().map(|&b| bpsk(b)).collect::<Vec<_>>()))
            .collect::<Result<Vec<_>>>()?;
        (bits, concat_blocks(&blocks))
    };

    let mut obs = observe_block(params, &ch, &x, cfg.fidelity, &mut obs_rng)?;
    if let BiasMode::Estimated(n_bias) = cfg.bias_mode {
        let c = estimate_bias(
            params,
            &ch,
            cfg.fidelity,
            n_bias.unwrap_or(params.n()),
            &mut streams.stream(trial, Purpose::Bias),
        )?;
        obs = obs.with_bias(c)?;
    }

    let mut errors = 0u64;
    match cfg.detector {
        DetectorKind::Linear | DetectorKind::MinDistance => {
            let y = linearize_normalize(&obs)?;
            let h = effective_channel(params, &ch);
            for b in 0..frame {
                let w = y.window(b * m, m);
                let u = if cfg.detector == DetectorKind::Linear {
                    detect_linear(&w, &h)?
                } else {
                    detect_min_distance(&w, &h)?
                };
                errors += count_errors(&u, &bits[b * m..(b + 1) * m]);
            }
        }
        DetectorKind::MlExact | DetectorKind::MlApprox => {
            let mode = if cfg.detector == DetectorKind::MlExact {
                NoiseMode::Exact
            } else {
                NoiseMode::Approx
            };
            for b in 0..frame {
                let u = detect_ml_accurate(&obs.window(b * m, m), params, &ch, mode)?;
                errors += count_errors(&u, &bits[b * m..(b + 1) * m]);
            }
        }
        DetectorKind::Differential => {
            let y = linearize_normalize(&obs)?;
            for i in 1..frame {
                let (b1, b2) = detect_differential(&y.window(2 * (i - 1), 4))?;
                let sent = &bits[2 * (i - 1)..2 * i];
                errors += u64::from(b1 != sent[0]) + u64::from(b2 != sent[1]);
            }
        }
    }
    Ok(Tally {
        trials: 1,
        bits: bits.len() as u64,
        errors,
    })
}

fn count_errors(decisions: &[f64], bits: &[bool]) -> u64 {
    decisions
        .iter()
        .zip(bits)
        .filter(|(&d, &b)| bit_of(d) != b)
        .count() as u64
}

fn simulate_point(cfg: &ExperimentConfig, point: &ResolvedPoint) -> Result<BerPoint> {
    let streams = StreamFactory::new(cfg.master_seed);
    let mut tally = Tally::default();
    let mut batch = FIRST_BATCH;
    while tally.trials < cfg.max_trials && tally.errors < cfg.target_bit_errors {
        let end = (tally.trials + batch).min(cfg.max_trials);
        let part = (tally.trials..end)
            .into_par_iter()
            .map(|t| run_trial(cfg, &point.params, &streams, t))
            .try_reduce(Tally::default, |a, b| Ok(a + b))?;
        tally = tally + part;
        batch = (batch * 2).min(MAX_BATCH);
    }
    let low_confidence = tally.errors < cfg.target_bit_errors;
    if low_confidence {
        log::warn!(
            "{} at {}={}: only {} errors after {} trials",
            cfg.detector,
            cfg.sweep,
            point.value,
            tally.errors,
            tally.trials
        );
    }
    Ok(point_record(
        cfg,
        point,
        CurveKind::Simulated(cfg.detector),
        tally,
        tally.errors as f64 / tally.bits as f64,
        binomial_half_width(tally.errors, tally.bits),
        low_confidence,
    ))
}

fn point_record(
    cfg: &ExperimentConfig,
    point: &ResolvedPoint,
    curve: CurveKind,
    tally: Tally,
    ber: f64,
    ci95: f64,
    low_confidence: bool,
) -> BerPoint {
    let p = &point.params;
    BerPoint {
        sweep_var: cfg.sweep,
        value: point.value,
        curve,
        m: p.m(),
        q: p.q(),
        n: p.n(),
        gamma_d_db: p.gamma_d_db(),
        delta_gamma_db: p.delta_gamma_db(),
        fidelity: cfg.fidelity,
        bias_mode: cfg.bias_mode.resolved(p.n()),
        trials: tally.trials,
        bits: tally.bits,
        errors: tally.errors,
        ber,
        ci95,
        low_confidence,
    }
}

fn warn_short(point: &ResolvedPoint) {
    if point.short_averaging {
        log::warn!(
            "N={} at grid value {} is below the recommended minimum averaging length",
            point.params.n(),
            point.value
        );
    }
}

/// Simulated BER at one grid value.
pub fn run_ber_point(cfg: &ExperimentConfig, value: f64) -> Result<BerPoint> {
    cfg.validate()?;
    let point = cfg.resolve(value)?;
    warn_short(&point);
    build_pool(cfg.workers)?.install(|| simulate_point(cfg, &point))
}

/// Simulated BER over the whole grid.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<BerCurve> {
    cfg.validate()?;
    let pool = build_pool(cfg.workers)?;
    let mut points = Vec::with_capacity(cfg.grid.len());
    for &value in &cfg.grid {
        let point = cfg.resolve(value)?;
        warn_short(&point);
        points.push(pool.install(|| simulate_point(cfg, &point))?);
    }
    Ok(BerCurve {
        master_seed: cfg.master_seed,
        points,
    })
}

/// Channel-averaged closed-form BER over the grid. Points record the number
/// of channel draws as `trials` and carry no bit counts.
pub fn run_theory_sweep(cfg: &ExperimentConfig) -> Result<BerCurve> {
    let mut probe = cfg.clone();
    probe.detector = DetectorKind::Linear;
    probe.validate()?;
    let streams = StreamFactory::new(cfg.master_seed);
    let mut points = Vec::with_capacity(cfg.grid.len());
    for &value in &cfg.grid {
        let point = cfg.resolve(value)?;
        let est = theoretical_ber(
            &point.params,
            cfg.theory_channels,
            &mut streams.stream(0, Purpose::Theory),
        )?;
        let tally = Tally {
            trials: cfg.theory_channels as u64,
            bits: 0,
            errors: 0,
        };
        points.push(point_record(
            &probe,
            &point,
            CurveKind::Theoretical,
            tally,
            est.value,
            est.half_width,
            false,
        ));
    }
    Ok(BerCurve {
        master_seed: cfg.master_seed,
        points,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes a curve as CSV (LF line endings, shortest round-trip float text).
pub fn write_results(curve: &BerCurve, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for p in &curve.points {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                p.sweep_var,
                p.value,
                p.curve,
                p.m,
                p.q,
                p.n,
                p.gamma_d_db,
                p.delta_gamma_db,
                p.fidelity,
                p.bias_mode,
                p.trials,
                p.bits,
                p.errors,
                p.ber,
                p.ci95
            )?;
        }
        w.flush()
    };
    write().map_err(io_err(path))
}

/// Reads a file written by [`write_results`]. `low_confidence` is not stored
/// and comes back as `false`.
pub fn read_results(path: &Path) -> Result<Vec<BerPoint>> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(file).lines();
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    match lines.next() {
        Some(Ok(h)) if h == CSV_HEADER => {}
        Some(Ok(h)) => return Err(parse_err(1, format!("unexpected header `{h}`"))),
        Some(Err(e)) => return Err(io_err(path)(e)),
        None => return Err(parse_err(1, "missing header".into())),
    }
    let mut points = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line.map_err(io_err(path))?;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 15 {
            return Err(parse_err(
                lineno,
                format!("expected 15 fields, got {}", f.len()),
            ));
        }
        fn field<T: FromStr>(f: &[&str], i: usize) -> std::result::Result<T, String>
        where
            T::Err: fmt::Display,
        {
            f[i].parse::<T>()
                .map_err(|e| format!("field {}: {e}", i + 1))
        }
        let point = (|| -> std::result::Result<BerPoint, String> {
            Ok(BerPoint {
                sweep_var: field(&f, 0)?,
                value: field(&f, 1)?,
                curve: field(&f, 2)?,
                m: field(&f, 3)?,
                q: field(&f, 4)?,
                n: field(&f, 5)?,
                gamma_d_db: field(&f, 6)?,
                delta_gamma_db: field(&f, 7)?,
                fidelity: field(&f, 8)?,
                bias_mode: field(&f, 9)?,
                trials: field(&f, 10)?,
                bits: field(&f, 11)?,
                errors: field(&f, 12)?,
                ber: field(&f, 13)?,
                ci95: field(&f, 14)?,
                low_confidence: false,
            })
        })()
        .map_err(|r| parse_err(lineno, r))?;
        points.push(point);
    }
    Ok(points)
}
