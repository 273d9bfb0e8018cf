//! Figure suites: ratio study, quadratic and linear-MSE comparisons, MLP
//! diagnostics and feature spectra.

use std::path::{Path, PathBuf};

use muonlab_core::diagnostics::{comparison_ratio, spectrum, StepRecord};
use muonlab_core::matcore::random::{derive_seed, gaussian_matrix, rng_from_seed};
use muonlab_core::matcore::{frobenius_norm, operator_norm, Matrix};
use muonlab_core::problems::{quadratic_new, Problem};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, OptimizerKind, ProblemKind, ScheduleName};
use crate::emit::{csv_bytes, flattened_matrices_csv, json_bytes, records_csv, spectrum_csv, OutputGuard};
use crate::runner::{
    build_data, build_model, build_q, draw_w_star, grid_csv, problem_seed, run_seed, simulate, tune, write_seed,
    SeedRun,
};
use crate::{pool, HarnessError};

const STREAM_RATIO: u64 = 31;
const STREAM_FD: u64 = 32;

/// Files written by a suite.
#[derive(Clone, Debug)]
pub struct SuiteOutput<T> {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub result: T,
}

fn finish_suite<T>(guard: OutputGuard, out_dir: PathBuf, result: T) -> SuiteOutput<T> {
    SuiteOutput {
        out_dir,
        files: guard.commit(),
        result,
    }
}

fn start(cfg: &ExperimentConfig) -> Result<(OutputGuard, PathBuf), HarnessError> {
    cfg.validate()?;
    let out = cfg.out_dir();
    let mut guard = OutputGuard::new();
    guard.create_dir_all(&out)?;
    guard.write(&out.join("config.toml"), cfg.to_toml()?.as_bytes())?;
    Ok((guard, out))
}

fn variant(cfg: &ExperimentConfig, optimizer: OptimizerKind, schedule: ScheduleName, grid: &[f64]) -> ExperimentConfig {
    ExperimentConfig {
        optimizer,
        schedule,
        grid: grid.to_vec(),
        ..cfg.clone()
    }
}

/// Value at fraction `q` of the sorted sample, linearly interpolated.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

// ---------------------------------------------------------------- ratio study

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub sample: usize,
    pub d_f: f64,
    pub d_op: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioStats {
    pub samples: usize,
    pub l: f64,
    pub l_star: f64,
    pub min: f64,
    pub q10: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q90: f64,
    pub max: f64,
    pub fraction_above_3: f64,
}

#[derive(Clone, Debug)]
pub struct RatioStudy {
    pub rows: Vec<RatioRow>,
    pub w_stars: Vec<Matrix>,
    pub stats: RatioStats,
}

/// D_F²L/(D_op²L_*) for W₀ = 0 and `samples` draws of W* under a fixed Q.
pub fn ratio_study(cfg: &ExperimentConfig, samples: usize) -> Result<RatioStudy, HarnessError> {
    if samples == 0 {
        return Err(HarnessError::Config("ratio study needs at least one sample".into()));
    }
    let seed = problem_seed(cfg, cfg.seeds[0]);
    let q = build_q(cfg, seed)?;
    let meta = quadratic_new(q, Matrix::zeros(cfg.m, cfg.n), cfg.quadratic_scale)?.meta().clone();
    let (l, l_star) = (meta.l.expect("quadratic L"), meta.l_star.expect("quadratic L_*"));
    let base = derive_seed(seed, STREAM_RATIO);
    let drawn = pool::map_ordered((0..samples).collect(), cfg.worker_count(), |i| {
        let ws = draw_w_star(cfg, derive_seed(base, i as u64));
        let (d_f, d_op) = (frobenius_norm(&ws), operator_norm(&ws));
        (
            RatioRow {
                sample: i,
                d_f,
                d_op,
                ratio: comparison_ratio(d_f, d_op, l, l_star),
            },
            ws,
        )
    });
    let (rows, w_stars): (Vec<_>, Vec<_>) = drawn.into_iter().unzip();
    let mut sorted: Vec<f64> = rows.iter().map(|r: &RatioRow| r.ratio).collect();
    sorted.sort_by(f64::total_cmp);
    let stats = RatioStats {
        samples,
        l,
        l_star,
        min: sorted[0],
        q10: quantile(&sorted, 0.1),
        q25: quantile(&sorted, 0.25),
        median: quantile(&sorted, 0.5),
        q75: quantile(&sorted, 0.75),
        q90: quantile(&sorted, 0.9),
        max: sorted[samples - 1],
        fraction_above_3: sorted.iter().filter(|&&r| r > 3.0).count() as f64 / samples as f64,
    };
    Ok(RatioStudy { rows, w_stars, stats })
}

fn write_ratio_study(guard: &mut OutputGuard, dir: &Path, study: &RatioStudy) -> Result<(), HarnessError> {
    guard.write(
        &dir.join("ratio_study.csv"),
        &csv_bytes(
            &["sample", "d_F", "d_op", "ratio"],
            study
                .rows
                .iter()
                .map(|r| vec![r.sample.to_string(), r.d_f.to_string(), r.d_op.to_string(), r.ratio.to_string()]),
        ),
    )?;
    let ids: Vec<usize> = study.rows.iter().map(|r| r.sample).collect();
    guard.write(&dir.join("w_stars.csv"), &flattened_matrices_csv(&ids, &study.w_stars))?;
    guard.write(&dir.join("ratio_summary.json"), &json_bytes(&study.stats)?)
}

pub fn ratio_study_suite(cfg: &ExperimentConfig) -> Result<SuiteOutput<RatioStats>, HarnessError> {
    let (mut guard, out) = start(cfg)?;
    let study = ratio_study(cfg, cfg.ratio_samples)?;
    write_ratio_study(&mut guard, &out, &study)?;
    Ok(finish_suite(guard, out, study.stats))
}

// ------------------------------------------------------------------- figure 1

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig1Row {
    pub seed: u64,
    pub gd_final_f: f64,
    pub muon_final_f: f64,
    pub muon_lr: f64,
    pub muon_wins: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig1Summary {
    pub seeds: usize,
    pub iters: usize,
    pub muon_optimizer: String,
    pub muon_grid: Vec<f64>,
    pub win_fraction: f64,
    pub ratio_study: RatioStats,
}

/// Quadratic comparison: GD with η = 1/L against Muon tuned over `cfg.grid`,
/// both from W₀ = 0, one problem instance per seed.
pub fn figure1(cfg: &ExperimentConfig) -> Result<SuiteOutput<(Vec<Fig1Row>, Fig1Summary)>, HarnessError> {
    if cfg.problem != ProblemKind::Quadratic {
        return Err(HarnessError::Config("fig1 runs on the quadratic problem".into()));
    }
    if cfg.grid.is_empty() {
        return Err(HarnessError::Config("fig1 needs a Muon grid".into()));
    }
    let (mut guard, out) = start(cfg)?;
    let gd_cfg = ExperimentConfig {
        lr: 1.0,
        ..variant(cfg, OptimizerKind::Gd, ScheduleName::InverseL, &[])
    };
    let muon_cfg = variant(cfg, cfg.optimizer, cfg.schedule, &cfg.grid);
    let runs = pool::map_ordered(cfg.seeds.clone(), cfg.worker_count(), |seed| {
        let model = build_model(cfg, seed)?;
        let gd = simulate(&gd_cfg, &model, seed, 1.0, false)?;
        let (grid, idx, muon) = tune(&muon_cfg, &model, seed, &cfg.grid)?;
        Ok::<_, HarnessError>((seed, gd, grid, idx, muon))
    });
    let mut rows = Vec::with_capacity(runs.len());
    for run in runs {
        let (seed, gd, grid, idx, muon) = run?;
        let dir = out.join(format!("seed_{seed}"));
        guard.write(&dir.join("gd.csv"), &records_csv(&gd.records))?;
        guard.write(&dir.join("muon.csv"), &records_csv(&muon.records))?;
        guard.write(&dir.join("grid.csv"), &grid_csv(&grid))?;
        rows.push(Fig1Row {
            seed,
            gd_final_f: gd.final_f,
            muon_final_f: muon.final_f,
            muon_lr: cfg.grid[idx],
            muon_wins: muon.final_f < gd.final_f,
        });
    }
    guard.write(
        &out.join("fig1.csv"),
        &csv_bytes(
            &["seed", "gd_final_f", "muon_final_f", "muon_lr", "muon_wins"],
            rows.iter().map(|r| {
                vec![
                    r.seed.to_string(),
                    r.gd_final_f.to_string(),
                    r.muon_final_f.to_string(),
                    r.muon_lr.to_string(),
                    r.muon_wins.to_string(),
                ]
            }),
        ),
    )?;
    let study = ratio_study(cfg, cfg.ratio_samples)?;
    write_ratio_study(&mut guard, &out.join("ratio_study"), &study)?;
    let summary = Fig1Summary {
        seeds: rows.len(),
        iters: cfg.iters,
        muon_optimizer: muon_cfg.optimizer_spec().name().to_string(),
        muon_grid: cfg.grid.clone(),
        win_fraction: rows.iter().filter(|r| r.muon_wins).count() as f64 / rows.len() as f64,
        ratio_study: study.stats,
    };
    guard.write(&out.join("summary.json"), &json_bytes(&summary)?)?;
    Ok(finish_suite(guard, out, (rows, summary)))
}

// ------------------------------------------------------------------- figure 2

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig2Entry {
    pub optimizer: String,
    pub lr: f64,
    pub eta: Option<f64>,
    pub final_f: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig2Summary {
    pub seed: u64,
    pub features: String,
    pub classes: usize,
    pub d: usize,
    pub batch: usize,
    pub feature_ratio: f64,
    pub l: f64,
    pub l_star: f64,
    pub f_star: f64,
    pub optimizers: Vec<Fig2Entry>,
    pub best_optimizer: String,
    pub d_f: f64,
    pub d_op: f64,
    pub comparison_ratio: f64,
}

impl Fig2Summary {
    pub fn final_f(&self, optimizer: &str) -> Option<f64> {
        self.optimizers.iter().find(|e| e.optimizer == optimizer).map(|e| e.final_f)
    }
}

/// Linear MSE comparison of GD, Nesterov, Adam and Muon, each tuned on its
/// own grid. GD-family grids are multiples of 1/L. The comparison ratio uses
/// the best final iterate as W*.
pub fn figure2(cfg: &ExperimentConfig) -> Result<SuiteOutput<Vec<Fig2Summary>>, HarnessError> {
    if cfg.problem != ProblemKind::LinearMse {
        return Err(HarnessError::Config("fig2 runs on the linear MSE problem".into()));
    }
    if cfg.grid.is_empty() || cfg.baseline_grid.is_empty() {
        return Err(HarnessError::Config("fig2 needs both grid and baseline_grid".into()));
    }
    let (mut guard, out) = start(cfg)?;
    let arms = [
        variant(cfg, OptimizerKind::Gd, ScheduleName::InverseL, &cfg.baseline_grid),
        variant(cfg, OptimizerKind::Nesterov, ScheduleName::InverseL, &cfg.baseline_grid),
        variant(cfg, OptimizerKind::Adam, ScheduleName::Constant, &cfg.grid),
        variant(cfg, OptimizerKind::Muon, ScheduleName::Constant, &cfg.grid),
    ];
    let jobs: Vec<(u64, usize)> = cfg.seeds.iter().flat_map(|&s| (0..arms.len()).map(move |a| (s, a))).collect();
    let runs = pool::map_ordered(jobs, cfg.worker_count(), |(seed, a)| run_seed(&arms[a], seed));
    let mut runs = runs.into_iter();
    let mut summaries = Vec::new();
    for &seed in &cfg.seeds {
        let seed_runs: Vec<SeedRun> = runs.by_ref().take(arms.len()).collect::<Result<_, _>>()?;
        let dir = out.join(format!("seed_{seed}"));
        let mut entries = Vec::new();
        for (arm, run) in arms.iter().zip(&seed_runs) {
            let name = arm.optimizer_spec().name();
            write_seed(&mut guard, arm, &dir.join(name), run)?;
            entries.push(Fig2Entry {
                optimizer: name.to_string(),
                lr: run.lr,
                eta: run.trajectory.eta,
                final_f: run.trajectory.final_f,
            });
        }
        let best = (0..seed_runs.len())
            .min_by(|&a, &b| seed_runs[a].trajectory.final_f.total_cmp(&seed_runs[b].trajectory.final_f))
            .expect("four arms");
        let w_star = &seed_runs[best].trajectory.final_weights[0];
        let (x, _) = build_data(cfg, problem_seed(cfg, seed))?;
        let sv = spectrum(&x);
        let c = &seed_runs[best].constants;
        let (l, l_star) = (c.l.expect("MSE L"), c.l_star.expect("MSE L_*"));
        let (d_f, d_op) = (frobenius_norm(w_star), operator_norm(w_star));
        let summary = Fig2Summary {
            seed,
            features: format!("{:?}", cfg.features).to_lowercase(),
            classes: cfg.classes,
            d: x.rows(),
            batch: x.cols(),
            feature_ratio: sv.iter().map(|s| s * s).sum::<f64>() / (sv[0] * sv[0]),
            l,
            l_star,
            f_star: c.f_star.expect("least-squares optimum"),
            optimizers: entries,
            best_optimizer: arms[best].optimizer_spec().name().to_string(),
            d_f,
            d_op,
            comparison_ratio: if d_op > 0.0 { comparison_ratio(d_f, d_op, l, l_star) } else { f64::NAN },
        };
        guard.write(&dir.join("fig2_summary.json"), &json_bytes(&summary)?)?;
        summaries.push(summary);
    }
    Ok(finish_suite(guard, out, summaries))
}

// ------------------------------------------------------------------- figure 3

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig3Row {
    pub seed: u64,
    pub t: usize,
    pub muon_nuc2_over_j: f64,
    pub gd_fro2_over_l: f64,
    pub muon_exceeds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdCheck {
    pub linearity: f64,
    pub symmetry: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig3Seed {
    pub seed: u64,
    pub gd_lr: f64,
    pub muon_lr: f64,
    pub gd_final_f: f64,
    pub muon_final_f: f64,
    pub sampled_steps: usize,
    pub muon_exceeds: usize,
    pub all_finite: bool,
    pub fd: FdCheck,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig3Summary {
    pub layer: usize,
    pub iters: usize,
    pub cadence: usize,
    pub seeds: Vec<Fig3Seed>,
    pub pooled_fraction: f64,
    pub all_finite: bool,
    pub fd_max_residual: f64,
}

/// Largest normalized linearity and symmetry residuals of the diagnosed
/// layer's finite-difference Hessian at the initial weights.
pub fn fd_hvp_check(cfg: &ExperimentConfig, seed: u64, pairs: usize) -> Result<FdCheck, HarnessError> {
    let model = build_model(cfg, seed)?;
    let ws = model.initial_weights(seed);
    let p = model.layer_problem(&ws)?;
    let w = &ws[model.layer()];
    let (m, n) = w.shape();
    let mut rng = rng_from_seed(derive_seed(seed, STREAM_FD));
    let mut out = FdCheck {
        linearity: 0.0,
        symmetry: 0.0,
    };
    for _ in 0..pairs {
        let d1 = gaussian_matrix(&mut rng, m, n);
        let d2 = gaussian_matrix(&mut rng, m, n);
        let (a, b) = (0.7, -1.3);
        let mut comb = d1.scale(a);
        comb.axpy(b, &d2);
        let (h1, h2) = (p.hvp(w, &d1), p.hvp(w, &d2));
        let mut rhs = h1.scale(a);
        rhs.axpy(b, &h2);
        let lin = frobenius_norm(&p.hvp(w, &comb).sub(&rhs)) / frobenius_norm(&rhs).max(1.0);
        let (s1, s2) = (d1.dot(&h2), d2.dot(&h1));
        let sym = (s1 - s2).abs() / s1.abs().max(1.0);
        out.linearity = out.linearity.max(lin);
        out.symmetry = out.symmetry.max(sym);
    }
    Ok(out)
}

fn sampled(records: &[StepRecord], iters: usize) -> Vec<&StepRecord> {
    records.iter().filter(|r| r.t < iters).collect()
}

/// Compares Muon's ‖∇f‖_*²/J_t with GD's ‖∇f‖_F²/L_t on the diagnosed layer
/// at matching sampled steps.
pub fn compare_fig3(seed: u64, iters: usize, muon: &[StepRecord], gd: &[StepRecord]) -> (Vec<Fig3Row>, bool) {
    let (m, g) = (sampled(muon, iters), sampled(gd, iters));
    let finite = |v: Option<f64>| v.is_some_and(f64::is_finite);
    let all_finite = m.iter().chain(&g).all(|r| finite(r.j_t) && finite(r.l_t));
    let mut rows = Vec::new();
    for rm in &m {
        let Some(rg) = g.iter().find(|r| r.t == rm.t) else { continue };
        let (Some(j), Some(l)) = (rm.j_t, rg.l_t) else { continue };
        let muon_ratio = rm.grad_nuc * rm.grad_nuc / j;
        let gd_ratio = rg.grad_fro * rg.grad_fro / l;
        rows.push(Fig3Row {
            seed,
            t: rm.t,
            muon_nuc2_over_j: muon_ratio,
            gd_fro2_over_l: gd_ratio,
            muon_exceeds: muon_ratio > gd_ratio,
        });
    }
    (rows, all_finite)
}

/// MLP runs of GD and the configured Muon variant, both tuned, with J_t, L_t
/// and Ĵ_t logged for the diagnosed layer.
pub fn figure3(cfg: &ExperimentConfig) -> Result<SuiteOutput<(Vec<Fig3Row>, Fig3Summary)>, HarnessError> {
    if cfg.problem != ProblemKind::Mlp {
        return Err(HarnessError::Config("fig3 runs on the MLP problem".into()));
    }
    if cfg.grid.is_empty() || cfg.baseline_grid.is_empty() {
        return Err(HarnessError::Config("fig3 needs both grid and baseline_grid".into()));
    }
    let (mut guard, out) = start(cfg)?;
    let gd_cfg = variant(cfg, OptimizerKind::Gd, ScheduleName::Constant, &cfg.baseline_grid);
    let muon_cfg = variant(cfg, cfg.optimizer, ScheduleName::Constant, &cfg.grid);
    let runs = pool::map_ordered(cfg.seeds.clone(), cfg.worker_count(), |seed| {
        let gd = run_seed(&gd_cfg, seed)?;
        let muon = run_seed(&muon_cfg, seed)?;
        let fd = fd_hvp_check(cfg, seed, 5)?;
        Ok::<_, HarnessError>((gd, muon, fd))
    });
    let mut rows = Vec::new();
    let mut seeds = Vec::new();
    let mut layer = 0;
    for run in runs {
        let (gd, muon, fd) = run?;
        let seed = gd.seed;
        let dir = out.join(format!("seed_{seed}"));
        write_seed(&mut guard, &gd_cfg, &dir.join("gd"), &gd)?;
        write_seed(&mut guard, &muon_cfg, &dir.join("muon"), &muon)?;
        layer = muon.trajectory.checkpoints.first().map_or(layer, |c| c.layer);
        let (seed_rows, all_finite) = compare_fig3(seed, cfg.iters, &muon.trajectory.records, &gd.trajectory.records);
        seeds.push(Fig3Seed {
            seed,
            gd_lr: gd.lr,
            muon_lr: muon.lr,
            gd_final_f: gd.trajectory.final_f,
            muon_final_f: muon.trajectory.final_f,
            sampled_steps: seed_rows.len(),
            muon_exceeds: seed_rows.iter().filter(|r| r.muon_exceeds).count(),
            all_finite,
            fd,
        });
        rows.extend(seed_rows);
    }
    guard.write(
        &out.join("comparison.csv"),
        &csv_bytes(
            &["seed", "t", "muon_nuc2_over_J", "gd_fro2_over_L", "muon_exceeds"],
            rows.iter().map(|r| {
                vec![
                    r.seed.to_string(),
                    r.t.to_string(),
                    r.muon_nuc2_over_j.to_string(),
                    r.gd_fro2_over_l.to_string(),
                    r.muon_exceeds.to_string(),
                ]
            }),
        ),
    )?;
    let total: usize = seeds.iter().map(|s| s.sampled_steps).sum();
    let wins: usize = seeds.iter().map(|s| s.muon_exceeds).sum();
    let summary = Fig3Summary {
        layer,
        iters: cfg.iters,
        cadence: cfg.cadence,
        pooled_fraction: if total == 0 { 0.0 } else { wins as f64 / total as f64 },
        all_finite: seeds.iter().all(|s| s.all_finite),
        fd_max_residual: seeds.iter().map(|s| s.fd.linearity.max(s.fd.symmetry)).fold(0.0, f64::max),
        seeds,
    };
    guard.write(&out.join("summary.json"), &json_bytes(&summary)?)?;
    Ok(finish_suite(guard, out, (rows, summary)))
}

// -------------------------------------------------------------------- spectra

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectraSummary {
    pub features: String,
    pub d: usize,
    pub batch: usize,
    pub seeds: Vec<u64>,
    /// ‖X‖_F²/‖X‖_op² per seed.
    pub ratios: Vec<f64>,
    pub mean_ratio: f64,
}

/// Singular values and concentration ratio of the feature matrix per seed.
pub fn spectra(cfg: &ExperimentConfig) -> Result<SuiteOutput<SpectraSummary>, HarnessError> {
    let (mut guard, out) = start(cfg)?;
    let results = pool::map_ordered(cfg.seeds.clone(), cfg.worker_count(), |seed| {
        let (x, _) = build_data(cfg, problem_seed(cfg, seed))?;
        Ok::<_, HarnessError>((seed, x.shape(), spectrum(&x)))
    });
    let mut ratios = Vec::new();
    let mut shape = (cfg.d, cfg.batch);
    for r in results {
        let (seed, sh, sv) = r?;
        shape = sh;
        guard.write(&out.join(format!("seed_{seed}")).join("spectrum.csv"), &spectrum_csv(&sv))?;
        ratios.push(if sv[0] > 0.0 {
            sv.iter().map(|s| s * s).sum::<f64>() / (sv[0] * sv[0])
        } else {
            f64::NAN
        });
    }
    let summary = SpectraSummary {
        features: format!("{:?}", cfg.features).to_lowercase(),
        d: shape.0,
        batch: shape.1,
        seeds: cfg.seeds.clone(),
        mean_ratio: ratios.iter().sum::<f64>() / ratios.len() as f64,
        ratios,
    };
    guard.write(&out.join("summary.json"), &json_bytes(&summary)?)?;
    Ok(finish_suite(guard, out, summary))
}
