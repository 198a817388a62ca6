//! Acceptance run. Prints one line per criterion and exits non-zero if any
//! criterion outside `EXPECTED_FAILURES` fails. The two training experiments
//! read their setup from `configs/`.

mod common;

use common::gradcases::{self, Checks};
use pulsetone::dsp::{
    bias_std, butterworth_bandpass, estimate_hr, mae, pcc, rmse, snr, snr_from_spectrum, FitzGroup, GroupMetrics, HrConfig, HrSeries,
    MetricsReport,
};
use pulsetone::dsp::spectrum::Spectrum;
use pulsetone::harness::{
    cmd_eval, cmd_gen, cmd_train, evaluate_method, make_dataset, train_method, ClipSets, ExperimentConfig, Method,
    TrainOptions, TrainedModel,
};
use pulsetone::harness::dataset::{split, Split};
use pulsetone::harness::translate::pos_hr;
use pulsetone::neural::{loss_appearance, loss_ppg};
use pulsetone::optics::{pseudo_target, synth_pulse, synth_video, Fitzpatrick, HrProfile, SceneConfig, VideoTensor};
use pulsetone::rppg::{extract, ClassicalMethod, SkinThresholds};
use pulsetone::tensor::{Tape, Tensor};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Criteria that fail at desk scale; the analysis is kept with the project
/// notes. They still run and print their FAIL line.
const EXPECTED_FAILURES: &[usize] = &[7];

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

fn config(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::load(&path).unwrap()
}

// 1

fn gradient_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut c = Checks::default();
    for (_, case) in gradcases::ALL {
        case(&mut c);
    }
    let secs = t0.elapsed().as_secs_f64();
    let failed = c.failures();
    let worst_op = c.rows.iter().filter(|r| r.2 == gradcases::OP_TOL).map(|r| r.1).fold(0.0, f64::max);
    let worst_loss = c.rows.iter().filter(|r| r.2 == gradcases::LOSS_TOL).map(|r| r.1).fold(0.0, f64::max);
    outcome(
        failed.is_empty() && secs < 60.0,
        format!(
            "{} checks, worst op {worst_op:.1e}, worst end-to-end {worst_loss:.1e}, {secs:.1} s{}",
            c.rows.len(),
            if failed.is_empty() { String::new() } else { format!("; failed {failed:?}") }
        ),
    )
}

// 2

fn ppg(p: &[f64], q: &[f64]) -> f64 {
    let mut tape = Tape::new();
    let a = tape.constant(&Tensor::new(vec![1, p.len()], p.to_vec()).unwrap());
    let b = tape.constant(&Tensor::new(vec![1, q.len()], q.to_vec()).unwrap());
    let l = loss_ppg(&mut tape, a, b).unwrap();
    tape.scalar_value(l)
}

fn appearance(a: &[f64], b: &[f64], eps: f64) -> f64 {
    let mut tape = Tape::new();
    let x = tape.constant(&Tensor::from_vec(a.to_vec()));
    let y = tape.constant(&Tensor::from_vec(b.to_vec()));
    let l = loss_appearance(&mut tape, x, y, eps).unwrap();
    tape.scalar_value(l)
}

fn loss_identities() -> Outcome {
    let p: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin() + 0.2 * (i as f64 * 1.3).cos()).collect();
    let neg: Vec<f64> = p.iter().map(|x| -x).collect();
    let affine: Vec<f64> = p.iter().map(|x| 3.5 * x - 1.25).collect();
    let q: Vec<f64> = (0..64).map(|i| (i as f64 * 0.41).cos()).collect();
    let q_affine: Vec<f64> = q.iter().map(|x| 0.02 * x + 7.0).collect();
    let zeros = vec![0.5; 10];
    let checks = [
        ("ppg(p,p)", ppg(&p, &p), 0.0, 1e-9),
        ("ppg(p,-p)", ppg(&p, &neg), 2.0, 1e-9),
        ("ppg(p,a p+b)", ppg(&p, &affine), 0.0, 1e-9),
        ("ppg affine", ppg(&p, &q_affine), ppg(&p, &q), 1e-9),
        ("appearance empty mask", appearance(&zeros, &zeros.iter().map(|v| v + 0.05).collect::<Vec<_>>(), 0.1), 0.0, 1e-12),
        ("ppg fixture", ppg(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]), 0.2, 1e-12),
        ("appearance [0.05,0.3]", appearance(&[0.0, 0.0], &[0.05, 0.3], 0.1), 0.3, 1e-12),
        ("appearance [0.2,0.2]", appearance(&[0.0, 0.0], &[0.2, 0.2], 0.1), 0.2, 1e-12),
    ];
    let bad: Vec<String> = checks
        .iter()
        .filter(|(_, got, want, tol)| !((got - want).abs() < *tol))
        .map(|(n, got, want, _)| format!("{n} = {got} (want {want})"))
        .collect();
    outcome(bad.is_empty(), if bad.is_empty() { format!("{} identities hold", checks.len()) } else { bad.join("; ") })
}

// 3

fn scene_video(bpm: f64, noise: f64, scale: Fitzpatrick) -> VideoTensor {
    let mut cfg = SceneConfig::for_scale(scale, 21);
    (cfg.i_amp, cfg.i_freq, cfg.s_amp, cfg.s_freq) = (0.01, 0.25, 0.005, 0.15);
    cfg.noise_sigma = noise;
    let p = synth_pulse(&HrProfile::Constant { bpm }, 32.0, 30.0, 17).unwrap();
    synth_video(&cfg, &p, p.samples.len(), 8, 8).unwrap()
}

fn optics_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    for (noise, tol) in [(0.0, 2.0), (1e-3, 3.0)] {
        for scale in Fitzpatrick::ALL {
            for bpm in [48.0, 72.0, 110.0] {
                let v = scene_video(bpm, noise, scale);
                for m in [ClassicalMethod::Pos, ClassicalMethod::Chrom, ClassicalMethod::Ica] {
                    let est = extract(m, &v, &SkinThresholds::default(), 0).unwrap();
                    for hr in estimate_hr(&est.samples, v.fs).unwrap().bpm {
                        let err = hr.map_or(f64::INFINITY, |h| (h - bpm).abs());
                        worst = worst.max(err);
                        if err > tol {
                            bad.push(format!("{m:?} {scale:?} {bpm} noise {noise}: {hr:?}"));
                        }
                    }
                }
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        bad.is_empty() && secs < 60.0,
        format!(
            "3 methods x 6 tones x 3 rates x 2 noise levels, worst error {worst:.2} BPM, {secs:.1} s{}",
            if bad.is_empty() { String::new() } else { format!("; {}", bad.join("; ")) }
        ),
    )
}

// 4

fn metric_fixtures() -> Outcome {
    let est = HrSeries::from_bpm([70.0, 72.0]);
    let gt = HrSeries::from_bpm([71.0, 70.0]);
    // Power 9 inside the mask around 1.2 Hz, 1 outside it.
    let spec = Spectrum {
        freqs: vec![1.0, 1.2, 1.5],
        power: vec![0.0, 9.0, 1.0],
    };
    let group = |mae| GroupMetrics {
        subjects: 1,
        mae,
        rmse: mae,
        pcc: 1.0,
        snr_db: 0.0,
    };
    let report = MetricsReport {
        method: "fixture".into(),
        subjects: vec![],
        groups: [FitzGroup::F12, FitzGroup::F34, FitzGroup::F56].into_iter().zip([2.37, 2.95, 4.97].map(group)).collect(),
        overall: group(0.0),
        bias: None,
    };
    // Population std of [2.37, 2.95, 4.97]: mean 3.43, sum of squares 3.7256.
    let checks = [
        ("pcc", pcc(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap(), 0.8),
        ("snr", snr_from_spectrum(&spec, 72.0), 10.0 * 9f64.log10()),
        ("mae", mae(&est, &gt).unwrap(), 1.5),
        ("rmse", rmse(&est, &gt).unwrap(), 2.5f64.sqrt()),
        ("bias std", bias_std(&report).unwrap().0, (3.7256f64 / 3.0).sqrt()),
    ];
    let bad: Vec<String> = checks
        .iter()
        .filter(|(_, got, want)| !((got - want).abs() < 1e-3))
        .map(|(n, got, want)| format!("{n} = {got} (want {want})"))
        .collect();
    let shown: Vec<String> = checks.iter().map(|(n, got, _)| format!("{n} {got:.4}")).collect();
    outcome(bad.is_empty(), if bad.is_empty() { shown.join(", ") } else { bad.join("; ") })
}

// 5

fn green_average(v: &VideoTensor) -> Vec<f64> {
    (0..v.t)
        .map(|t| v.frame(t).chunks(3).map(|p| p[1]).sum::<f64>() / v.pixels() as f64)
        .collect()
}

fn green_snr(v: &VideoTensor, bpm: f64) -> f64 {
    let g = butterworth_bandpass(&green_average(v), v.fs, 0.7, 2.5).unwrap();
    let hr = HrConfig::default();
    let windows = ((v.t as f64 / v.fs - hr.window_s) / hr.stride_s) as usize + 1;
    snr(&g, v.fs, &vec![bpm; windows], &hr).unwrap()
}

fn pseudo_target_contract() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut source_min = f64::INFINITY;
    for (i, scale) in [Fitzpatrick::I, Fitzpatrick::II, Fitzpatrick::III].into_iter().enumerate() {
        for (j, target) in [Fitzpatrick::V, Fitzpatrick::VI].into_iter().enumerate() {
            let bpm = 60.0 + 12.0 * (2 * i + j) as f64;
            let mut cfg = SceneConfig::for_scale(scale, 7 + i as u64);
            cfg.noise_sigma = 1e-3;
            let p = synth_pulse(&HrProfile::Constant { bpm }, 40.0, 30.0, 3).unwrap();
            let v = synth_video(&cfg, &p, p.samples.len(), 6, 6).unwrap();
            source_min = source_min.min(green_snr(&v, bpm));
            worst = worst.max(green_snr(&pseudo_target(&v, target, 1 + j as u64), bpm));
        }
    }
    outcome(
        worst < -3.0,
        format!("highest output SNR {worst:.2} dB over 6 tone pairs (inputs at least {source_min:.1} dB)"),
    )
}

// 6

fn pulse_preserving_translation() -> Outcome {
    let t0 = Instant::now();
    let cfg = config("translation.toml");
    let samples = make_dataset(&cfg).unwrap();
    let train = split(&samples, Split::Train);
    let held = split(&samples, Split::Eval);
    let clips = ClipSets::build(&train, &cfg).unwrap();
    let m = train_method(Method::PrnAugmented, &clips, &cfg.train, None, None).unwrap();
    let g = m.generator.unwrap();
    let target = cfg.clips.targets()[0];
    let (mut dark_enough, mut hr_ok) = (0, 0);
    let mut rows = Vec::new();
    for s in &held {
        let v = &s.video;
        let out = g.translate(v, 64).unwrap();
        let gap = v.mean_luma() - pseudo_target(v, target, 1).mean_luma();
        let drop = v.mean_luma() - out.mean_luma();
        let gt = s.sidecar.profile.reference(v.t as f64 / v.fs, v.fs, v.t as f64 / v.fs, 1.0).bpm[0].unwrap();
        let hr = pos_hr(&out);
        dark_enough += usize::from(drop >= gap / 2.0);
        hr_ok += usize::from(hr.is_some_and(|h| (h - gt).abs() <= 3.0));
        rows.push(format!("{:.2}/{:.2}", drop, gap));
    }
    let n = held.len();
    let mins = t0.elapsed().as_secs_f64() / 60.0;
    outcome(
        dark_enough == n && hr_ok as f64 >= 0.8 * n as f64 && mins <= 30.0,
        format!(
            "luma drop/gap {}; POS HR within 3 BPM on {hr_ok}/{n}; {mins:.1} min",
            rows.join(" ")
        ),
    )
}

// 7

struct SeedResult {
    f56: (f64, f64),
    bias: (f64, f64),
    f12: (f64, f64),
}

impl SeedResult {
    fn holds(&self) -> bool {
        self.f56.1 < self.f56.0 && self.bias.1 < self.bias.0 && self.f12.1 < 1.5 * self.f12.0
    }
}

fn augmentation_seed(seed: u64) -> SeedResult {
    let cfg = config("augmentation.toml").with_seed(seed);
    let samples = make_dataset(&cfg).unwrap();
    let clips = ClipSets::build(&split(&samples, Split::Train), &cfg).unwrap();
    let eval = split(&samples, Split::Eval);
    let report = |method| {
        let m = train_method(method, &clips, &cfg.train, None, None).unwrap();
        evaluate_method(method, &eval, Some(&m.prn), &cfg.eval).unwrap().0
    };
    let (real, aug) = (report(Method::PrnReal), report(Method::PrnAugmented));
    let group = |r: &MetricsReport, g| r.groups[&g].mae;
    SeedResult {
        f56: (group(&real, FitzGroup::F56), group(&aug, FitzGroup::F56)),
        bias: (real.bias.as_ref().unwrap().std_mae, aug.bias.as_ref().unwrap().std_mae),
        f12: (group(&real, FitzGroup::F12), group(&aug, FitzGroup::F12)),
    }
}

fn augmentation_benefit() -> Outcome {
    let seeds = [1, 2, 3];
    let results: Vec<SeedResult> = seeds.iter().map(|&s| augmentation_seed(s)).collect();
    let held = results.iter().filter(|r| r.holds()).count();
    let rows: Vec<String> = seeds
        .iter()
        .zip(&results)
        .map(|(s, r)| {
            format!(
                "seed {s}: F5-6 {:.2}->{:.2}, bias {:.2}->{:.2}, F1-2 {:.2}->{:.2} [{}]",
                r.f56.0,
                r.f56.1,
                r.bias.0,
                r.bias.1,
                r.f12.0,
                r.f12.1,
                if r.holds() { "holds" } else { "fails" }
            )
        })
        .collect();
    outcome(held >= 2, format!("{held}/3 seeds; {}", rows.join("; ")))
}

// 8

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn run_all(cfg: &ExperimentConfig, out: &Path) {
    cmd_gen(cfg, out).unwrap();
    cmd_train(cfg, out, TrainOptions::default()).unwrap();
    cmd_eval(cfg, out).unwrap();
}

fn determinism() -> Outcome {
    let cfg = config("quickstart.toml");
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_all(&cfg, a.path());
    run_all(&cfg, b.path());
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    let differing: Vec<String> = ta
        .iter()
        .zip(&tb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.display().to_string())
        .collect();
    let identical = ta.len() == tb.len() && differing.is_empty();

    // Interrupted inside the second stage, then resumed.
    cmd_gen(&cfg, c.path()).unwrap();
    let stop = cfg.train.pretrain_epochs + 1;
    cmd_train(&cfg, c.path(), TrainOptions { stop_after_epoch: Some(stop), resume: false }).unwrap();
    cmd_train(&cfg, c.path(), TrainOptions { stop_after_epoch: None, resume: true }).unwrap();
    let mut worst: f64 = 0.0;
    let mut rows_match = true;
    for m in cfg.learned_methods() {
        let dir = pulsetone::harness::train::method_dir(a.path(), m);
        let whole = TrainedModel::load(m, &dir).unwrap().log;
        let resumed = TrainedModel::load(m, &pulsetone::harness::train::method_dir(c.path(), m)).unwrap().log;
        rows_match &= whole.len() == resumed.len();
        for (x, y) in whole.iter().zip(&resumed) {
            rows_match &= (x.step, x.epoch, x.phase) == (y.step, y.epoch, y.phase);
            worst = worst.max((x.loss - y.loss).abs());
        }
    }
    outcome(
        identical && rows_match && worst <= 1e-9,
        format!(
            "{} artifacts byte-identical across reruns{}; resume vs unbroken max loss difference {worst:.1e}",
            ta.len(),
            if differing.is_empty() { String::new() } else { format!(" except {differing:?}") }
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("gradient oracle", gradient_oracle),
        ("loss identities", loss_identities),
        ("optics oracle", optics_oracle),
        ("metric fixtures", metric_fixtures),
        ("pseudo-target contract", pseudo_target_contract),
        ("pulse-preserving translation", pulse_preserving_translation),
        ("augmentation benefit", augmentation_benefit),
        ("determinism", determinism),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let t0 = Instant::now();
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !o.pass {
            failed.push(n);
        }
        let status = match (o.pass, EXPECTED_FAILURES.contains(&n)) {
            (true, false) => "PASS",
            (true, true) => "PASS (listed as an expected failure)",
            (false, false) => "FAIL",
            (false, true) => "FAIL (expected)",
        };
        println!(
            "criterion {n} {name}: {status} ({:.0} s) {}",
            t0.elapsed().as_secs_f64(),
            o.detail
        );
    }
    if failed.is_empty() {
        return;
    }
    println!("failed criteria: {failed:?}");
    if failed.iter().any(|n| !EXPECTED_FAILURES.contains(n)) {
        std::process::exit(1);
    }
}
