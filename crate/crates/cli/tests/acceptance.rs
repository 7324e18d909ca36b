//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line each, and exits non-zero if any criterion fails.

use std::time::{Duration, Instant};

use ambc::analysis::{friis_path_loss, log_space};
use ambc::codec::{bpsk, concat_blocks, encode_coherent_block, encode_diff_stream, DiffState};
use ambc::detect::{
    detect_differential, detect_linear, detect_min_distance, detect_ml, NoiseMode, SignalModel,
};
use ambc::harness::{
    run_sweep, run_theory_sweep, BerCurve, BerPoint, DetectorKind, ExperimentConfig, SweepVar,
};
use ambc::model::{effective_channel, sample_channel, SystemParams};
use ambc::phy::{
    linearization_error, linearize_normalize, mean_power, observe_block, Fidelity,
    NormalizedObservation,
};
use ambc::rng::{Purpose, StreamFactory};
use ambc::stats::{ks_critical_value, ks_statistic, ls_slope, Accumulator, Estimate};
use ambc_cli::presets::{Scale, CARRIER_BANDS};
use ambc_cli::{run, Cli};
use nalgebra::DMatrix;
use rand::Rng;

const SEED: u64 = 1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within_budget(start: Instant, budget: Duration, mut o: Outcome) -> Outcome {
    let took = start.elapsed();
    o.detail.push_str(&format!(
        "; {:.1}s of {}s budget",
        took.as_secs_f64(),
        budget.as_secs()
    ));
    if took > budget {
        o.pass = false;
    }
    o
}

fn curve(
    m: usize,
    q: usize,
    detector: DetectorKind,
    delta_gamma_db: f64,
    grid: &[f64],
) -> ExperimentConfig {
    ExperimentConfig {
        m,
        q,
        detector,
        delta_gamma_db,
        gamma_d_db: 15.0,
        grid: grid.to_vec(),
        sweep: SweepVar::GammaRDb,
        fidelity: Fidelity::ChiSquare,
        master_seed: SEED,
        max_trials: 10_000_000,
        target_bit_errors: 200,
        ..Default::default()
    }
}

fn sweep(cfg: &ExperimentConfig) -> BerCurve {
    run_sweep(cfg).expect("sweep runs")
}

fn at(c: &BerCurve, value: f64) -> &BerPoint {
    c.points
        .iter()
        .find(|p| p.value == value)
        .expect("grid value present")
}

fn agree(a: &Estimate, b: &Estimate, k: f64) -> bool {
    (a.value - b.value).abs() <= k * (a.half_width + b.half_width)
}

fn slope(c: &BerCurve) -> f64 {
    let x: Vec<f64> = c.points.iter().map(|p| p.value).collect();
    let y: Vec<f64> = c.points.iter().map(|p| p.ber.log10()).collect();
    -ls_slope(&x, &y)
}

fn c1_orthogonality() -> Outcome {
    let start = Instant::now();
    let mut checked = 0;
    let mut bad = 0;
    let mut check = |u: &[f64]| {
        let x = encode_coherent_block(u).unwrap().into_matrix();
        let m = u.len();
        if x.transpose() * &x != DMatrix::identity(m, m) * m as f64 {
            bad += 1;
        }
        checked += 1;
    };
    for m in [2usize, 4] {
        for i in 0..1u32 << m {
            let u: Vec<f64> = (0..m).map(|k| bpsk(i >> k & 1 == 1)).collect();
            check(&u);
        }
    }
    let mut rng = StreamFactory::new(SEED).stream(0, Purpose::Auxiliary);
    for _ in 0..10_000 {
        let u: Vec<f64> = (0..8).map(|_| bpsk(rng.random())).collect();
        check(&u);
    }
    within_budget(
        start,
        Duration::from_secs(1),
        outcome(
            bad == 0,
            format!("{bad} of {checked} blocks not orthogonal"),
        ),
    )
}

fn c2_equivalence() -> Outcome {
    let start = Instant::now();
    let streams = StreamFactory::new(SEED);
    let (mut lin_md, mut ml_md, mut total) = (0, 0, 0u64);
    for m in [2, 4] {
        for q in [1, 2] {
            let p = SystemParams::from_db(m, q, 2000, 15.0, 40.0, 1.1).unwrap();
            for _ in 0..25_000 {
                total += 1;
                let ch = sample_channel(&p, &mut streams.stream(total, Purpose::Channel));
                let mut rng = streams.stream(total, Purpose::Bits);
                let u: Vec<f64> = (0..m).map(|_| bpsk(rng.random())).collect();
                let x = encode_coherent_block(&u).unwrap().into_matrix();
                let obs = observe_block(
                    &p,
                    &ch,
                    &x,
                    Fidelity::ChiSquare,
                    &mut streams.stream(total, Purpose::Observation),
                )
                .unwrap();
                let y = linearize_normalize(&obs).unwrap();
                let h = effective_channel(&p, &ch);
                let md = detect_min_distance(&y, &h).unwrap();
                if detect_linear(&y, &h).unwrap() != md {
                    lin_md += 1;
                }
                if detect_ml(&obs, &p, &ch, NoiseMode::Approx, SignalModel::Linearized).unwrap()
                    != md
                {
                    ml_md += 1;
                }
            }
        }
    }
    within_budget(
        start,
        Duration::from_secs(30),
        outcome(
            lin_md == 0 && ml_md == 0,
            format!("{total} instances: linear/min-distance mismatches {lin_md}, approximate-ML/min-distance mismatches {ml_md}"),
        ),
    )
}

fn c3_distribution_law() -> Outcome {
    let start = Instant::now();
    let streams = StreamFactory::new(SEED);
    let mut pass = true;
    let mut detail = Vec::new();
    let x = encode_coherent_block(&[1.0, -1.0]).unwrap().into_matrix();
    let draw = |p: &SystemParams,
                ch: &ambc::model::ChannelRealization,
                f,
                purpose,
                count: usize|
     -> Vec<f64> {
        let mut rng = streams.stream(p.n() as u64, purpose);
        (0..count)
            .map(|_| observe_block(p, ch, &x, f, &mut rng).unwrap().ybar()[(0, 0)])
            .collect()
    };
    for n in [30, 200] {
        let p = SystemParams::from_db(2, 1, n, 15.0, 40.0, 1.1).unwrap();
        let ch = sample_channel(&p, &mut streams.stream(0, Purpose::Channel));
        let a = draw(&p, &ch, Fidelity::SymbolLevel, Purpose::Observation, 10_000);
        let b = draw(&p, &ch, Fidelity::ChiSquare, Purpose::Auxiliary, 10_000);
        let d = ks_statistic(&a, &b);
        let crit = ks_critical_value(a.len(), b.len(), 0.01);
        pass &= d < crit;
        detail.push(format!("KS N={n}: D={d:.4} < {crit:.4}"));
    }
    for n in [30, 200, 40_000] {
        let p = SystemParams::from_db(2, 1, n, 15.0, 40.0, 1.1).unwrap();
        let ch = sample_channel(&p, &mut streams.stream(0, Purpose::Channel));
        let mu = mean_power(&p, &ch, 0, &[1.0, -1.0]);
        let acc: Accumulator = draw(&p, &ch, Fidelity::Gaussian, Purpose::Observation, 100_000)
            .into_iter()
            .collect();
        let mean_err = (acc.mean() / mu - 1.0).abs();
        let var_err = (acc.variance() / (mu * mu / n as f64) - 1.0).abs();
        pass &= mean_err < 0.02 && var_err < 0.02;
        detail.push(format!(
            "gaussian N={n}: mean {:.2}% var {:.2}% off",
            100.0 * mean_err,
            100.0 * var_err
        ));
    }
    within_budget(
        start,
        Duration::from_secs(120),
        outcome(pass, detail.join(", ")),
    )
}

fn c4_diversity_trend() -> Outcome {
    let start = Instant::now();
    let grid = [10.0, 12.5, 15.0, 17.5, 20.0];
    let c11 = sweep(&curve(1, 1, DetectorKind::Linear, 40.0, &grid));
    let c21 = sweep(&curve(2, 1, DetectorKind::Linear, 40.0, &grid));
    let c22 = sweep(&curve(2, 2, DetectorKind::Linear, 40.0, &grid));
    let (b11, b21, b22) = (
        at(&c11, 15.0).estimate(),
        at(&c21, 15.0).estimate(),
        at(&c22, 15.0).estimate(),
    );
    let ordered = b22.value < b21.value
        && b21.value < b11.value
        && b22.separated_from(&b21)
        && b21.separated_from(&b11);
    let (s11, s21, s22) = (slope(&c11), slope(&c21), slope(&c22));
    let (r1, r2) = (s21 / s11, s22 / s21);
    within_budget(
        start,
        Duration::from_secs(600),
        outcome(
            ordered && r1 >= 1.7 && r2 >= 1.7,
            format!(
                "BER@15dB (1,1)={:.3e} (2,1)={:.3e} (2,2)={:.3e}; slopes {s11:.4} {s21:.4} {s22:.4} dec/dB, ratios {r1:.3} {r2:.3} (need >= 1.7)",
                b11.value, b21.value, b22.value
            ),
        ),
    )
}

fn c5_ml_vs_linear() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut detail = Vec::new();
    let grid = [5.0, 10.0, 15.0];
    for (m, q) in [(1, 1), (2, 1), (2, 2)] {
        let ml = sweep(&curve(m, q, DetectorKind::MlExact, 40.0, &grid));
        let lin = sweep(&curve(m, q, DetectorKind::Linear, 40.0, &grid));
        for (a, b) in ml.points.iter().zip(&lin.points) {
            let ok = agree(&a.estimate(), &b.estimate(), 1.0);
            pass &= ok;
            if !ok {
                detail.push(format!(
                    "({m},{q}) at {} dB: ML {:.3e} vs linear {:.3e}",
                    a.value, a.ber, b.ber
                ));
            }
        }
    }
    detail.push(format!(
        "M<=2 ML/linear agreement {}",
        if pass { "holds" } else { "broken" }
    ));

    let floor = sweep(&curve(8, 2, DetectorKind::Linear, 40.0, &[20.0, 25.0]));
    let (f20, f25) = (at(&floor, 20.0).ber, at(&floor, 25.0).ber);
    let has_floor = f25 > 0.0 && f20 <= 2.0 * f25;
    pass &= has_floor;
    detail.push(format!(
        "M=8 linear at 40 dB: BER(20)={f20:.3e} BER(25)={f25:.3e}"
    ));

    let mut closed = true;
    for g in [5.0, 10.0] {
        let ml = sweep(&curve(8, 2, DetectorKind::MlExact, 50.0, &[g]));
        let lin = sweep(&curve(8, 2, DetectorKind::Linear, 50.0, &[g]));
        let (a, b) = (&ml.points[0], &lin.points[0]);
        closed &= agree(&a.estimate(), &b.estimate(), 1.0);
        detail.push(format!(
            "M=8 at 50 dB, {g} dB: ML {:.3e} linear {:.3e}",
            a.ber, b.ber
        ));
    }
    pass &= closed;
    within_budget(
        start,
        Duration::from_secs(1800),
        outcome(pass, detail.join("; ")),
    )
}

fn c6_theory_vs_simulation() -> Outcome {
    let start = Instant::now();
    let grid = [5.0, 10.0, 15.0];
    let mut pass = true;
    let mut detail = Vec::new();
    for (m, q) in [(1, 1), (2, 1), (2, 2)] {
        let cfg = curve(m, q, DetectorKind::Linear, 40.0, &grid);
        let sim = sweep(&cfg);
        let theory = run_theory_sweep(&cfg).unwrap();
        for (s, t) in sim.points.iter().zip(&theory.points) {
            let ok = agree(&s.estimate(), &t.estimate(), 3.0);
            pass &= ok;
            detail.push(format!(
                "({m},{q})@{}: {:.3e}/{:.3e}{}",
                s.value,
                s.ber,
                t.ber,
                if ok { "" } else { " X" }
            ));
        }
    }
    within_budget(
        start,
        Duration::from_secs(600),
        outcome(pass, format!("sim/theory {}", detail.join(" "))),
    )
}

fn c7_linearization_error() -> Outcome {
    let start = Instant::now();
    let streams = StreamFactory::new(SEED);
    let eps = |m: usize, dg: f64| {
        let p = SystemParams::from_db(m, 1, 1, 15.0, dg, 1.1).unwrap();
        linearization_error(
            &p,
            1_000_000,
            &mut streams.stream(m as u64, Purpose::LinearizationError),
        )
        .unwrap()
    };
    let mut pass = true;
    let mut detail = Vec::new();
    for m in [2, 4, 8] {
        let e: Vec<_> = [30.0, 40.0, 50.0].iter().map(|&d| eps(m, d)).collect();
        pass &= e
            .windows(2)
            .all(|w| w[1].value < w[0].value && w[1].separated_from(&w[0]));
        detail.push(format!(
            "M={m}: {:.4} {:.4} {:.4}",
            e[0].value, e[1].value, e[2].value
        ));
    }
    let by_m: Vec<_> = [2, 4, 8].iter().map(|&m| eps(m, 40.0)).collect();
    pass &= by_m
        .windows(2)
        .all(|w| w[1].value > w[0].value && w[1].separated_from(&w[0]));
    within_budget(
        start,
        Duration::from_secs(60),
        outcome(
            pass,
            format!("epsilon over 30/40/50 dB, {}", detail.join("; ")),
        ),
    )
}

fn c8_direct_snr_saturation() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        sweep: SweepVar::GammaDDb,
        grid: vec![40.0, 60.0],
        n: 40_000,
        ..curve(2, 1, DetectorKind::Linear, 40.0, &[])
    };
    let c = sweep(&cfg);
    let (a, b) = (at(&c, 40.0).estimate(), at(&c, 60.0).estimate());
    within_budget(
        start,
        Duration::from_secs(600),
        outcome(
            agree(&a, &b, 1.0),
            format!(
                "BER at gamma_d 40 dB {:.4e}, 60 dB {:.4e}",
                a.value, b.value
            ),
        ),
    )
}

fn c9_relative_snr() -> Outcome {
    let start = Instant::now();
    let base = |det| ExperimentConfig {
        sweep: SweepVar::DeltaGammaDb,
        grid: vec![30.0, 35.0, 40.0, 50.0],
        gamma_r_db: Some(10.0),
        target_bit_errors: 1000,
        ..curve(2, 1, det, 40.0, &[])
    };
    let lin = sweep(&base(DetectorKind::Linear));
    let ml = sweep(&base(DetectorKind::MlExact));
    let flat: Vec<_> = [35.0, 40.0, 50.0]
        .iter()
        .map(|&d| at(&lin, d).estimate())
        .collect();
    let mut pass = true;
    for i in 0..flat.len() {
        for j in i + 1..flat.len() {
            pass &= agree(&flat[i], &flat[j], 1.0);
        }
    }
    let gap = |d: f64| at(&lin, d).ber - at(&ml, d).ber;
    let (g30, g50) = (gap(30.0), gap(50.0));
    pass &= g30 > g50;
    within_budget(
        start,
        Duration::from_secs(600),
        outcome(
            pass,
            format!(
                "linear BER at 35/40/50 dB: {:.4e} {:.4e} {:.4e}; linear-ML gap 30 dB {g30:.2e}, 50 dB {g50:.2e}",
                flat[0].value, flat[1].value, flat[2].value
            ),
        ),
    )
}

fn c10_path_loss() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut worst = f64::NEG_INFINITY;
    for (_, f) in CARRIER_BANDS {
        for d in log_space(1.0, 10.0, 200) {
            let l = friis_path_loss(f, d).unwrap();
            worst = worst.max(l);
            pass &= l < -30.0;
            let step = friis_path_loss(f, 2.0 * d).unwrap() - l;
            pass &= (step + 20.0 * 2f64.log10()).abs() < 1e-9;
        }
    }
    within_budget(
        start,
        Duration::from_secs(1),
        outcome(
            pass,
            format!("largest loss beyond 1 m {worst:.2} dB; doubling step -6.02 dB"),
        ),
    )
}

fn c11_differential() -> Outcome {
    let start = Instant::now();
    let streams = StreamFactory::new(SEED);
    let p = SystemParams::from_db(2, 2, 1000, 15.0, 40.0, 1.1).unwrap();
    let ch = sample_channel(&p, &mut streams.stream(0, Purpose::Channel));
    let h = effective_channel(&p, &ch);
    let mut rng = streams.stream(0, Purpose::Bits);
    let bits: Vec<bool> = (0..10_000).map(|_| rng.random()).collect();
    let blocks = encode_diff_stream(&bits, DiffState::default()).unwrap();
    let y = NormalizedObservation::from_matrix(h.matrix() * concat_blocks(&blocks));
    let decoded: Vec<bool> = (0..blocks.len() - 1)
        .flat_map(|i| {
            let (a, b) = detect_differential(&y.window(2 * i, 4)).unwrap();
            [a, b]
        })
        .collect();
    let chain_ok = decoded == bits;
    let mut pass = chain_ok;
    let mut detail = vec![format!(
        "noiseless chain {}",
        if chain_ok { "exact" } else { "corrupted" }
    )];

    let grid = [10.0, 12.5, 15.0, 17.5, 20.0];
    for (m, q) in [(2, 1), (2, 2)] {
        let coh = sweep(&curve(m, q, DetectorKind::Linear, 40.0, &grid));
        let diff = sweep(&curve(m, q, DetectorKind::Differential, 40.0, &grid));
        let (bc, bd) = (at(&coh, 15.0).ber, at(&diff, 15.0).ber);
        let (sc, sd) = (slope(&coh), slope(&diff));
        let ok = bd > bc && (sd / sc - 1.0).abs() <= 0.2;
        pass &= ok;
        detail.push(format!(
            "({m},{q}) BER@15dB coherent {bc:.3e} differential {bd:.3e}, slopes {sc:.4} vs {sd:.4}"
        ));
    }
    within_budget(
        start,
        Duration::from_secs(600),
        outcome(pass, detail.join("; ")),
    )
}

fn c12_determinism() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let run_with = |workers: &str| {
        let out = dir.path().join(format!("w{workers}"));
        let cli = Cli {
            config: None,
            preset: Some("fig9".into()),
            list_presets: false,
            scale: Scale::Quick,
            out_dir: out.clone(),
            seed: Some("7".into()),
            workers: Some(workers.into()),
            detector: None,
            fidelity: None,
            bias_mode: None,
            max_trials: None,
            set: vec![],
        };
        let summary = run(&cli, std::iter::empty()).expect("preset runs");
        summary
            .files
            .iter()
            .map(|f| (f.file_name().unwrap().to_owned(), std::fs::read(f).unwrap()))
            .collect::<Vec<_>>()
    };
    let (a, b) = (run_with("1"), run_with("8"));
    within_budget(
        start,
        Duration::from_secs(600),
        outcome(
            a == b && !a.is_empty(),
            format!(
                "fig9 quick: {} files, identical with 1 and 8 workers: {}",
                a.len(),
                a == b
            ),
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 12] = [
        ("codec orthogonality", c1_orthogonality),
        ("detector equivalence", c2_equivalence),
        ("distribution law", c3_distribution_law),
        ("diversity trend", c4_diversity_trend),
        ("ML vs linear accuracy", c5_ml_vs_linear),
        ("theory vs simulation", c6_theory_vs_simulation),
        ("linearization error", c7_linearization_error),
        ("direct-link SNR saturation", c8_direct_snr_saturation),
        ("relative SNR insensitivity", c9_relative_snr),
        ("path loss", c10_path_loss),
        ("differential", c11_differential),
        ("determinism", c12_determinism),
    ];
    let only: Option<usize> = std::env::var("AMBC_ACCEPTANCE_ONLY")
        .ok()
        .and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let o = f();
        println!(
            "criterion {:2} {:28} {}  {}",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
