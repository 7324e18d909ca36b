//! Figure-reproduction presets. A preset fixes the scenario of each
//! sub-curve; run-control settings (seed, workers, fidelity, bias mode, stop
//! rule, sample counts) come from the user's configuration, with the chosen
//! scale filling in whatever the user left unset.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ambc::analysis::{log_space, path_loss_curve};
use ambc::harness::{
    run_sweep, run_theory_sweep, write_results, DetectorKind, ExperimentConfig, SweepVar,
};
use ambc::model::SystemParams;
use ambc::phy::linearization_error;
use ambc::rng::{Purpose, StreamFactory};

use crate::config::{ConfigError, Layered, Origin};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Scale {
    /// Coarse grids and small trial budgets for smoke runs.
    #[default]
    Quick,
    /// Figure-density grids and full trial budgets.
    Paper,
}

impl Scale {
    pub fn name(self) -> &'static str {
        match self {
            Scale::Quick => "quick",
            Scale::Paper => "paper",
        }
    }

    fn pick<T>(self, quick: T, paper: T) -> T {
        match self {
            Scale::Quick => quick,
            Scale::Paper => paper,
        }
    }

    fn max_trials(self) -> u64 {
        self.pick(20_000, 10_000_000)
    }

    fn kappa_samples(self) -> usize {
        self.pick(100_000, 1_000_000)
    }

    fn theory_channels(self) -> usize {
        self.pick(2_000, 10_000)
    }

    fn epsilon_samples(self) -> usize {
        self.pick(100_000, 1_000_000)
    }

    fn path_points(self) -> usize {
        self.pick(21, 201)
    }
}

pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "fig4a",
        summary: "BER vs gamma_r, coherent, delta_gamma 40 dB, five antenna configurations",
    },
    Preset {
        name: "fig4b",
        summary: "as fig4a at delta_gamma 50 dB",
    },
    Preset {
        name: "fig5",
        summary: "linearization error vs delta_gamma for M = 2, 4, 8",
    },
    Preset {
        name: "fig6",
        summary: "coherent BER vs gamma_d at delta_gamma 40 dB, N = 40000",
    },
    Preset {
        name: "fig7",
        summary: "coherent BER vs delta_gamma at gamma_r 5, 10, 15 dB, M = 2, Q = 1",
    },
    Preset {
        name: "fig8",
        summary: "free-space path loss vs distance at four carrier bands",
    },
    Preset {
        name: "fig9",
        summary: "differential vs coherent BER vs gamma_r, delta_gamma 40 dB",
    },
    Preset {
        name: "fig10a",
        summary: "differential BER vs gamma_d at delta_gamma 40 dB, N = 40000",
    },
    Preset {
        name: "fig10b",
        summary: "differential BER vs delta_gamma at gamma_r 5, 10, 15 dB",
    },
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.name).collect()
}

/// Band centres of GSM-900, GSM-1800, UMTS-2100 and 2.4 GHz WiFi.
pub const CARRIER_BANDS: [(&str, f64); 4] = [
    ("gsm900", 942.5e6),
    ("gsm1800", 1842.5e6),
    ("umts2100", 2140e6),
    ("wifi2400", 2440e6),
];

/// One output file of a preset run.
#[derive(Debug, Clone, PartialEq)]
pub enum Job {
    Simulated {
        file: String,
        config: ExperimentConfig,
    },
    Theoretical {
        file: String,
        config: ExperimentConfig,
    },
    LinearizationError {
        file: String,
        antennas: Vec<usize>,
        delta_gamma_db: Vec<f64>,
        template: ExperimentConfig,
        samples: usize,
    },
    PathLoss {
        file: String,
        distances: Vec<f64>,
    },
}

impl Job {
    pub fn file(&self) -> &str {
        match self {
            Job::Simulated { file, .. }
            | Job::Theoretical { file, .. }
            | Job::LinearizationError { file, .. }
            | Job::PathLoss { file, .. } => file,
        }
    }
}

fn range(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let count = ((stop - start) / step).round() as usize;
    (0..=count).map(|i| start + i as f64 * step).collect()
}

/// Applies the scale's run-control values to keys the user did not set.
fn run_control(base: &Layered, scale: Scale) -> ExperimentConfig {
    let mut cfg = base.config.clone();
    if !base.is_explicit("max_trials") {
        cfg.max_trials = scale.max_trials();
    }
    if !base.is_explicit("kappa_samples") {
        cfg.kappa_samples = scale.kappa_samples();
    }
    if !base.is_explicit("theory_channels") {
        cfg.theory_channels = scale.theory_channels();
    }
    cfg.frame_blocks = if base.is_explicit("frame_blocks") {
        cfg.frame_blocks
    } else {
        None
    };
    cfg
}

struct Scenario<'a> {
    template: &'a ExperimentConfig,
    prefix: &'a str,
}

impl Scenario<'_> {
    fn curve(
        &self,
        (m, q): (usize, usize),
        detector: DetectorKind,
        (sweep, grid): (SweepVar, &[f64]),
        delta_gamma_db: f64,
        gamma_r_db: Option<f64>,
    ) -> ExperimentConfig {
        let mut c = self.template.clone();
        c.m = m;
        c.q = q;
        c.detector = detector;
        c.sweep = sweep;
        c.grid = grid.to_vec();
        c.delta_gamma_db = delta_gamma_db;
        c.gamma_d_db = 15.0;
        c.gamma_r_db = gamma_r_db;
        c.n = 40_000;
        c
    }

    fn sim(&self, tag: &str, detector: DetectorKind, config: ExperimentConfig) -> Job {
        Job::Simulated {
            file: format!("{}_{}_{}.csv", self.prefix, tag, detector),
            config,
        }
    }

    fn theory(&self, tag: &str, config: ExperimentConfig) -> Job {
        Job::Theoretical {
            file: format!("{}_{}_theoretical.csv", self.prefix, tag),
            config,
        }
    }
}

/// Expands a preset into its sub-curves.
pub fn plan(name: &str, scale: Scale, base: &Layered) -> Result<Vec<Job>, ConfigError> {
    let template = run_control(base, scale);
    let s = Scenario {
        template: &template,
        prefix: name,
    };
    let gr_grid = scale.pick(range(0.0, 25.0, 5.0), range(0.0, 25.0, 2.5));
    let gd_grid = scale.pick(range(0.0, 60.0, 10.0), range(-10.0, 60.0, 5.0));
    let dg_grid = scale.pick(range(30.0, 50.0, 5.0), range(30.0, 50.0, 2.5));
    let coherent_configs = [(1, 1), (2, 1), (2, 2), (4, 2), (8, 2)];
    let mut jobs = Vec::new();

    match name {
        "fig4a" | "fig4b" => {
            let dg = if name == "fig4a" { 40.0 } else { 50.0 };
            for (m, q) in coherent_configs {
                let tag = format!("M{m}Q{q}");
                for det in [DetectorKind::MlExact, DetectorKind::Linear] {
                    let c = s.curve((m, q), det, (SweepVar::GammaRDb, &gr_grid), dg, None);
                    jobs.push(s.sim(&tag, det, c));
                }
                let c = s.curve(
                    (m, q),
                    DetectorKind::Linear,
                    (SweepVar::GammaRDb, &gr_grid),
                    dg,
                    None,
                );
                jobs.push(s.theory(&tag, c));
            }
        }
        "fig5" => jobs.push(Job::LinearizationError {
            file: "fig5_epsilon.csv".into(),
            antennas: vec![2, 4, 8],
            delta_gamma_db: scale.pick(range(20.0, 60.0, 10.0), range(20.0, 60.0, 2.5)),
            template: s.curve(
                (2, 1),
                DetectorKind::Linear,
                (SweepVar::DeltaGammaDb, &[40.0]),
                40.0,
                None,
            ),
            samples: if base.is_explicit("kappa_samples") {
                base.config.kappa_samples
            } else {
                scale.epsilon_samples()
            },
        }),
        "fig6" | "fig10a" => {
            let (det, configs): (_, &[(usize, usize)]) = if name == "fig6" {
                (DetectorKind::Linear, &[(1, 1), (2, 1), (2, 2)])
            } else {
                (DetectorKind::Differential, &[(2, 1), (2, 2)])
            };
            for &(m, q) in configs {
                let tag = format!("M{m}Q{q}");
                let c = s.curve((m, q), det, (SweepVar::GammaDDb, &gd_grid), 40.0, None);
                jobs.push(s.sim(&tag, det, c));
            }
        }
        "fig7" | "fig10b" => {
            let dets: &[DetectorKind] = if name == "fig7" {
                &[DetectorKind::MlExact, DetectorKind::Linear]
            } else {
                &[DetectorKind::Differential]
            };
            for gr in [5.0, 10.0, 15.0] {
                let tag = format!("gr{gr}");
                for &det in dets {
                    let c = s.curve(
                        (2, 1),
                        det,
                        (SweepVar::DeltaGammaDb, &dg_grid),
                        40.0,
                        Some(gr),
                    );
                    jobs.push(s.sim(&tag, det, c));
                }
            }
        }
        "fig8" => jobs.push(Job::PathLoss {
            file: "fig8_path_loss.csv".into(),
            distances: log_space(0.1, 10.0, scale.path_points()),
        }),
        "fig9" => {
            for (m, q) in [(1, 1), (2, 1), (2, 2)] {
                let tag = format!("M{m}Q{q}");
                let c = s.curve(
                    (m, q),
                    DetectorKind::Linear,
                    (SweepVar::GammaRDb, &gr_grid),
                    40.0,
                    None,
                );
                jobs.push(s.sim(&tag, DetectorKind::Linear, c));
            }
            for (m, q) in [(2, 1), (2, 2)] {
                let tag = format!("M{m}Q{q}");
                let c = s.curve(
                    (m, q),
                    DetectorKind::Differential,
                    (SweepVar::GammaRDb, &gr_grid),
                    40.0,
                    None,
                );
                jobs.push(s.sim(&tag, DetectorKind::Differential, c));
            }
        }
        other => {
            return Err(ConfigError::new(
                Origin::Preset(other.to_string()),
                format!("unknown preset; available: {}", preset_names().join(", ")),
            ))
        }
    }

    for job in &jobs {
        if let Job::Simulated { config, .. } | Job::Theoretical { config, .. } = job {
            let mut probe = Layered {
                config: config.clone(),
                explicit: Default::default(),
            };
            if matches!(job, Job::Theoretical { .. }) {
                probe.config.detector = DetectorKind::Linear;
            }
            probe.finish(Origin::Preset(name.to_string()))?;
        }
    }
    Ok(jobs)
}

/// A written job file and the grid values that hit the trial cap.
#[derive(Debug, Clone, PartialEq)]
pub struct JobOutput {
    pub path: PathBuf,
    pub low_confidence: Vec<f64>,
}

/// Runs one job and writes its CSV under `out_dir`.
pub fn run_job(job: &Job, out_dir: &Path) -> ambc::Result<JobOutput> {
    let path = out_dir.join(job.file());
    let mut low_confidence = Vec::new();
    log::info!("writing {}", path.display());
    match job {
        Job::Simulated { config, .. } => {
            let curve = run_sweep(config)?;
            low_confidence = curve
                .points
                .iter()
                .filter(|p| p.low_confidence)
                .map(|p| p.value)
                .collect();
            write_results(&curve, &path)?;
        }
        Job::Theoretical { config, .. } => write_results(&run_theory_sweep(config)?, &path)?,
        Job::LinearizationError {
            antennas,
            delta_gamma_db,
            template,
            samples,
            ..
        } => {
            let streams = StreamFactory::new(template.master_seed);
            let mut text = String::from("M,delta_gamma_db,epsilon,ci95,samples\n");
            for &m in antennas {
                for &dg in delta_gamma_db {
                    let p =
                        SystemParams::from_db(m, 1, 1, template.gamma_d_db, dg, template.alpha_db)?;
                    let e = linearization_error(
                        &p,
                        *samples,
                        &mut streams.stream(m as u64, Purpose::LinearizationError),
                    )?;
                    text.push_str(&format!(
                        "{m},{dg},{},{},{}\n",
                        e.value, e.half_width, e.samples
                    ));
                }
            }
            write_text(&path, &text)?;
        }
        Job::PathLoss { distances, .. } => {
            let mut text = String::from("band,frequency_hz,distance_m,loss_db\n");
            for (band, f) in CARRIER_BANDS {
                for p in path_loss_curve(f, distances)? {
                    text.push_str(&format!(
                        "{band},{},{},{}\n",
                        p.frequency, p.distance, p.loss
                    ));
                }
            }
            write_text(&path, &text)?;
        }
    }
    Ok(JobOutput {
        path,
        low_confidence,
    })
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .unwrap_or_default()
        .to_string_lossy()
        .into_owned()
}

fn write_text(path: &Path, text: &str) -> ambc::Result<()> {
    fs::write(path, text).map_err(|source| ambc::Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `manifest.txt`: the run's identity, one `file = ...` line per
/// output and one `low_confidence = <file> <value>` line per point that
/// stopped at the trial cap before reaching the error target.
pub fn write_manifest(
    out_dir: &Path,
    name: &str,
    scale: Scale,
    seed: u64,
    outputs: &[JobOutput],
) -> ambc::Result<PathBuf> {
    let path = out_dir.join("manifest.txt");
    let mut text = Vec::new();
    let mut body = || -> std::io::Result<()> {
        writeln!(text, "preset = {name}")?;
        writeln!(text, "scale = {}", scale.name())?;
        writeln!(text, "seed = {seed}")?;
        for o in outputs {
            writeln!(text, "file = {}", file_name(&o.path))?;
        }
        for o in outputs {
            for v in &o.low_confidence {
                writeln!(text, "low_confidence = {} {v}", file_name(&o.path))?;
            }
        }
        Ok(())
    };
    body().expect("writing to memory");
    write_text(&path, &String::from_utf8(text).expect("utf-8 text"))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_plans_valid_configs() {
        let base = Layered::default();
        for p in PRESETS {
            for scale in [Scale::Quick, Scale::Paper] {
                let jobs = plan(p.name, scale, &base).unwrap();
                assert!(!jobs.is_empty(), "{}", p.name);
                let mut files: Vec<_> = jobs.iter().map(Job::file).collect();
                files.sort();
                files.dedup();
                assert_eq!(files.len(), jobs.len(), "{}: duplicate file names", p.name);
            }
        }
    }

    #[test]
    fn unknown_preset_lists_names() {
        let e = plan("fig99", Scale::Quick, &Layered::default()).unwrap_err();
        for p in PRESETS {
            assert!(e.to_string().contains(p.name));
        }
    }

    #[test]
    fn user_run_control_survives_scale() {
        let mut base = Layered::default();
        base.set("max_trials", "77", Origin::Flag, None).unwrap();
        let jobs = plan("fig4a", Scale::Paper, &base).unwrap();
        match &jobs[0] {
            Job::Simulated { config, .. } => {
                assert_eq!(config.max_trials, 77);
                assert_eq!(config.kappa_samples, Scale::Paper.kappa_samples());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grids_include_endpoints() {
        assert_eq!(
            range(0.0, 25.0, 5.0),
            vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0]
        );
        assert_eq!(range(30.0, 50.0, 2.5).len(), 9);
    }
}
