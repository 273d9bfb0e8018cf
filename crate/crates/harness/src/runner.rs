//! Seeded runs: problem construction, the optimizer loop with diagnostics,
//! grid tuning and per-seed artifacts.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use muonlab_core::diagnostics::{
    distance_metrics, hat_j_t, j_t, l_t, l_t_defaults, ratio_condition, summarize, RunSummary,
    StepRecord, SummaryInputs,
};
use muonlab_core::matcore::random::{derive_seed, rng_from_seed, uniform_matrix};
use muonlab_core::matcore::{frobenius_norm, polar, Matrix};
use muonlab_core::optim::{next_eta, BetaRule, EtaContext, Optimizer, Schedule, ScheduleKind};
use muonlab_core::problems::{
    gaussian_features, linear_mse_new, load_features_csv, load_labels_csv, lowrank_features, make_ill_conditioned_q,
    onehot_labels, quadratic_new, stochastic_oracle, teacher_labels, HvpKind, Mlp, MlpLayer, Problem, ProblemMeta,
    SpectrumProfile,
};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, FeatureKind, LabelKind, MlpTrain, ProblemKind, QProfile, ScheduleName};
use crate::emit::{csv_bytes, json_bytes, records_csv, OutputGuard};
use crate::{pool, HarnessError};

const STREAM_Q: u64 = 1;
const STREAM_W_STAR: u64 = 2;
const STREAM_FEATURES: u64 = 11;
const STREAM_LABELS: u64 = 12;
const STREAM_INIT: u64 = 21;
const STREAM_NOISE: u64 = 22;
const STREAM_POWER: u64 = 23;

/// Loss growth beyond this factor over the initial loss stops a run.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// Where a problem's smoothness constants and optimum come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub l: Option<f64>,
    pub l_star: Option<f64>,
    pub f_star: Option<f64>,
    pub source: String,
}

pub enum ModelKind {
    Single(Arc<dyn Problem>),
    Mlp { net: Arc<Mlp>, layer: usize, train: MlpTrain },
}

/// A constructed problem plus the facts the runner needs about it.
pub struct Model {
    pub kind: ModelKind,
    pub meta: ProblemMeta,
    pub source: &'static str,
}

impl Model {
    /// Index of the diagnosed parameter.
    pub fn layer(&self) -> usize {
        match &self.kind {
            ModelKind::Single(_) => 0,
            ModelKind::Mlp { layer, .. } => *layer,
        }
    }

    pub fn hvp_kind(&self) -> HvpKind {
        match &self.kind {
            ModelKind::Single(p) => p.hvp_kind(),
            ModelKind::Mlp { .. } => HvpKind::FiniteDifference,
        }
    }

    pub fn initial_weights(&self, seed: u64) -> Vec<Matrix> {
        match &self.kind {
            ModelKind::Single(p) => {
                let (m, n) = p.shape();
                vec![Matrix::zeros(m, n)]
            }
            ModelKind::Mlp { net, .. } => net.init_weights(derive_seed(seed, STREAM_INIT)),
        }
    }

    fn trained(&self) -> Vec<usize> {
        match &self.kind {
            ModelKind::Single(_) => vec![0],
            ModelKind::Mlp { net, train, layer } => match train {
                MlpTrain::All => (0..net.shapes().len()).collect(),
                MlpTrain::Layer => vec![*layer],
            },
        }
    }

    /// Loss, gradients of every parameter, and whether a ReLU kink is near.
    pub fn eval(&self, ws: &[Matrix]) -> (f64, Vec<Matrix>, bool) {
        match &self.kind {
            ModelKind::Single(p) => {
                let (f, g) = p.value_and_grad(&ws[0]);
                (f, vec![g], false)
            }
            ModelKind::Mlp { net, .. } => {
                let e = net.eval(ws);
                let kink = e.near_kink();
                (e.loss, e.grads, kink)
            }
        }
    }

    /// The diagnosed parameter as a standalone problem, others held at `ws`.
    pub fn layer_problem(&self, ws: &[Matrix]) -> Result<Arc<dyn Problem>, HarnessError> {
        Ok(match &self.kind {
            ModelKind::Single(p) => p.clone(),
            ModelKind::Mlp { net, layer, .. } => Arc::new(MlpLayer::new(net.clone(), ws.to_vec(), *layer)?),
        })
    }

    pub fn constants(&self) -> Constants {
        Constants {
            l: self.meta.l,
            l_star: self.meta.l_star,
            f_star: self.meta.f_star,
            source: self.source.to_string(),
        }
    }
}

/// Seed for problem data in a run with seed `seed`.
pub fn problem_seed(cfg: &ExperimentConfig, seed: u64) -> u64 {
    cfg.problem_seed.unwrap_or(seed)
}

/// Feature matrix X (d×B) and one-hot labels Y (c×B).
pub fn build_data(cfg: &ExperimentConfig, pseed: u64) -> Result<(Matrix, Matrix), HarnessError> {
    let fseed = derive_seed(pseed, STREAM_FEATURES);
    let x = match cfg.features {
        FeatureKind::Gaussian => gaussian_features(cfg.d, cfg.batch, fseed),
        FeatureKind::Lowrank => lowrank_features(cfg.d, cfg.batch, cfg.target_ratio, fseed)?,
        FeatureKind::Csv => {
            let path = cfg.features_csv.as_deref().ok_or_else(|| HarnessError::Config("features_csv unset".into()))?;
            load_features_csv(path, cfg.csv_header)?
        }
    };
    let lseed = derive_seed(pseed, STREAM_LABELS);
    let y = match cfg.labels {
        LabelKind::Random => onehot_labels(cfg.classes, x.cols(), lseed),
        LabelKind::Teacher => teacher_labels(&x, cfg.classes, cfg.label_noise, lseed)?,
        LabelKind::Csv => {
            let path = cfg.labels_csv.as_deref().ok_or_else(|| HarnessError::Config("labels_csv unset".into()))?;
            load_labels_csv(path, cfg.csv_header, cfg.label_format())?
        }
    };
    Ok((x, y))
}

/// Q for the quadratic problem.
pub fn build_q(cfg: &ExperimentConfig, pseed: u64) -> Result<Matrix, HarnessError> {
    let seed = derive_seed(pseed, STREAM_Q);
    Ok(match cfg.q_profile {
        QProfile::Identity => Matrix::identity(cfg.m),
        QProfile::Geometric => make_ill_conditioned_q(cfg.m, cfg.q_cond, SpectrumProfile::Geometric, seed)?.q,
        QProfile::TwoCluster => make_ill_conditioned_q(cfg.m, cfg.q_cond, SpectrumProfile::TwoCluster, seed)?.q,
    })
}

/// W* drawn entrywise from U(w_star_low, w_star_high).
pub fn draw_w_star(cfg: &ExperimentConfig, seed: u64) -> Matrix {
    uniform_matrix(&mut rng_from_seed(seed), cfg.m, cfg.n, cfg.w_star_low, cfg.w_star_high)
}

pub fn build_model(cfg: &ExperimentConfig, seed: u64) -> Result<Model, HarnessError> {
    let pseed = problem_seed(cfg, seed);
    match cfg.problem {
        ProblemKind::Quadratic => {
            let q = build_q(cfg, pseed)?;
            let ws = draw_w_star(cfg, derive_seed(pseed, STREAM_W_STAR));
            let p = quadratic_new(q, ws, cfg.quadratic_scale)?;
            let meta = p.meta().clone();
            Ok(Model {
                kind: ModelKind::Single(Arc::new(p)),
                meta,
                source: "closed_form",
            })
        }
        ProblemKind::LinearMse => {
            let (x, y) = build_data(cfg, pseed)?;
            let p = linear_mse_new(x, y)?.with_least_squares_optimum();
            let meta = p.meta().clone();
            Ok(Model {
                kind: ModelKind::Single(Arc::new(p)),
                meta,
                source: "closed_form_least_squares",
            })
        }
        ProblemKind::Mlp => {
            let (x, y) = build_data(cfg, pseed)?;
            let mut shapes = Vec::with_capacity(cfg.mlp_widths.len());
            let mut fan_in = x.rows();
            for &w in &cfg.mlp_widths {
                shapes.push((w, fan_in));
                fan_in = w;
            }
            let layer = cfg.mlp_layer.unwrap_or(shapes.len() / 2);
            let net = Arc::new(Mlp::new(shapes, x, y, cfg.mlp_loss)?);
            Ok(Model {
                kind: ModelKind::Mlp {
                    net,
                    layer,
                    train: cfg.mlp_train,
                },
                meta: ProblemMeta::default(),
                source: "unknown",
            })
        }
    }
}

/// Stepsize rule resolved against the problem constants.
#[derive(Clone, Debug)]
enum Stepper {
    Fixed(f64),
    Adaptive(Schedule),
}

fn stepper(cfg: &ExperimentConfig, meta: &ProblemMeta, shape: (usize, usize), lr: f64) -> Result<Stepper, HarnessError> {
    let need = |v: Option<f64>, name: &str| {
        v.ok_or_else(|| HarnessError::Config(format!("schedule {:?} needs {name}, unknown for this problem", cfg.schedule)))
    };
    let adaptive = |kind| {
        Stepper::Adaptive(Schedule {
            kind,
            beta_rule: BetaRule::Fixed { beta: cfg.beta },
        })
    };
    Ok(match cfg.schedule {
        ScheduleName::Constant => Stepper::Fixed(lr),
        ScheduleName::InverseL => Stepper::Fixed(lr / need(meta.l, "L")?),
        ScheduleName::AdaptiveL => adaptive(ScheduleKind::AdaptiveStarL {
            r: shape.0.min(shape.1),
            l: need(meta.l, "L")?,
        }),
        ScheduleName::AdaptiveLstar => adaptive(ScheduleKind::AdaptiveStarLstar {
            l_star: need(meta.l_star, "L_*")?,
        }),
    })
}

/// Weights and update direction saved at a logged step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: usize,
    pub layer: usize,
    pub weights: Vec<Matrix>,
    pub direction: Matrix,
    pub j_t: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    pub checkpoints: Vec<Checkpoint>,
    pub final_weights: Vec<Matrix>,
    pub final_f: f64,
    pub diverged: bool,
    /// The constant stepsize, when the schedule had one.
    pub eta: Option<f64>,
}

struct Pending {
    index: usize,
    problem: Arc<dyn Problem>,
    w: Matrix,
    o: Matrix,
    g: Matrix,
}

/// Runs `cfg.iters` steps from the model's initial point with tuning value
/// `lr`. With `diagnostics` off only f, gradient norms, η and distances are
/// logged.
pub fn simulate(
    cfg: &ExperimentConfig,
    model: &Model,
    seed: u64,
    lr: f64,
    diagnostics: bool,
) -> Result<Trajectory, HarnessError> {
    let layer = model.layer();
    let trained = model.trained();
    let spec = cfg.optimizer_spec();
    let mut ws = model.initial_weights(seed);
    let shape = ws[layer].shape();
    let step_rule = stepper(cfg, &model.meta, shape, lr)?;
    let mut opts: Vec<Optimizer> = trained.iter().map(|_| spec.build()).collect::<Result<_, _>>()?;
    let mut oracle = match (&model.kind, cfg.noise_sigma > 0.0) {
        (ModelKind::Single(p), true) => Some(stochastic_oracle(
            p.clone(),
            cfg.noise_sigma,
            cfg.noise_batch,
            derive_seed(seed, STREAM_NOISE),
        )?),
        (ModelKind::Mlp { .. }, true) => {
            return Err(HarnessError::Config("gradient noise is supported on single-matrix problems only".into()))
        }
        _ => None,
    };
    let fd = model.hvp_kind() == HvpKind::FiniteDifference;
    let w_star = model.meta.w_star.clone();

    let mut records: Vec<StepRecord> = Vec::new();
    let mut checkpoints = Vec::new();
    let mut pending: Option<Pending> = None;
    let mut f0: Option<f64> = None;
    let mut diverged = false;
    let mut final_f = f64::NAN;
    for t in 0..=cfg.iters {
        let (f, grads, kink) = model.eval(&ws);
        let g = &grads[layer];
        if let Some(p) = pending.take() {
            let q = hat_j_t(&*p.problem, &p.w, &p.o, &p.g, g);
            let rec = &mut records[p.index];
            if q.degenerate {
                rec.flags.degenerate_direction = true;
            } else {
                rec.hat_j_t = Some(q.value);
            }
        }
        let start = *f0.get_or_insert(f);
        let finite = f.is_finite() && grads.iter().all(Matrix::is_finite);
        diverged = !finite || (start > 0.0 && f > DIVERGENCE_FACTOR * start);
        final_f = f;
        let last = t == cfg.iters || diverged;
        let logged = last || t % cfg.cadence == 0;

        let mut rec = StepRecord {
            t,
            f,
            ..StepRecord::default()
        };
        let needs_polar = logged || (matches!(step_rule, Stepper::Adaptive(_)) && oracle.is_none());
        let pf = if finite && needs_polar { Some(polar(g)) } else { None };
        if logged {
            rec.grad_fro = if finite { frobenius_norm(g) } else { f64::NAN };
            rec.grad_nuc = pf.as_ref().map_or(f64::NAN, |p| p.nuclear_norm());
            if let (Some(ws_star), true) = (&w_star, finite) {
                let d = distance_metrics(&ws[layer], ws_star);
                rec.dist_fro = Some(d.fro);
                rec.dist_op = Some(d.op);
            }
            rec.flags.fd_kink = fd && kink;
            rec.flags.diverged = diverged;
        }
        if last {
            records.push(rec);
            break;
        }

        let mut used = grads.clone();
        if let Some(o) = oracle.as_mut() {
            let (m, n) = used[0].shape();
            used[0].axpy(1.0, &o.noise(m, n));
        }
        let eta = match &step_rule {
            Stepper::Fixed(e) => *e,
            Stepper::Adaptive(s) => {
                let nuc = if oracle.is_some() {
                    polar(&used[layer]).nuclear_norm()
                } else {
                    pf.as_ref().map_or(f64::NAN, |p| p.nuclear_norm())
                };
                next_eta(
                    s,
                    &EtaContext {
                        t,
                        grad_nuc: Some(nuc),
                        grad_fro: Some(frobenius_norm(&used[layer])),
                    },
                )?
            }
        };
        let mut next = ws.clone();
        let mut direction = None;
        for (opt, &l) in opts.iter_mut().zip(&trained) {
            let out = opt.step(&ws[l], &used[l], eta)?;
            next[l] = out.w;
            if l == layer {
                direction = out.direction;
            }
        }

        if logged {
            rec.eta = Some(eta);
            if diagnostics {
                let o = direction.unwrap_or_else(|| pf.as_ref().expect("finite gradient").o.clone());
                let problem = model.layer_problem(&ws)?;
                let w = &ws[layer];
                if cfg.diag_j {
                    let q = j_t(&*problem, w, &o);
                    if q.degenerate {
                        rec.flags.degenerate_direction = true;
                    } else {
                        rec.j_t = Some(q.value);
                    }
                }
                if cfg.diag_l {
                    let est = l_t(&*problem, w, &l_t_defaults(derive_seed(derive_seed(seed, STREAM_POWER), t as u64)));
                    rec.l_t = Some(est.value);
                    rec.flags.power_nonconverged = !est.converged;
                }
                if let (Some(j), Some(l)) = (rec.j_t, rec.l_t) {
                    if let Ok(rc) = ratio_condition(j, l, rec.grad_fro, rec.grad_nuc) {
                        rec.ratio_lhs = Some(rc.lhs);
                        rec.ratio_rhs = Some(rc.rhs);
                    }
                }
                if cfg.checkpoints {
                    checkpoints.push(Checkpoint {
                        t,
                        layer,
                        weights: ws.clone(),
                        direction: o.clone(),
                        j_t: rec.j_t,
                    });
                }
                if cfg.diag_hat_j {
                    pending = Some(Pending {
                        index: records.len(),
                        problem,
                        w: w.clone(),
                        o,
                        g: g.clone(),
                    });
                }
            }
            records.push(rec);
        }
        ws = next;
    }
    let eta = match step_rule {
        Stepper::Fixed(e) => Some(e),
        Stepper::Adaptive(_) => None,
    };
    Ok(Trajectory {
        records,
        checkpoints,
        final_weights: ws,
        final_f,
        diverged,
        eta,
    })
}

/// Outcome of one tuning grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lr: f64,
    pub final_f: f64,
    pub diverged: bool,
    pub selected: bool,
}

pub fn grid_csv(points: &[GridPoint]) -> Vec<u8> {
    csv_bytes(
        &["lr", "final_f", "diverged", "selected"],
        points.iter().map(|p| {
            vec![
                p.lr.to_string(),
                p.final_f.to_string(),
                p.diverged.to_string(),
                p.selected.to_string(),
            ]
        }),
    )
}

/// Runs every grid value without diagnostics and returns the index of the
/// lowest final loss among the runs that stayed finite and did not diverge.
pub fn tune(
    cfg: &ExperimentConfig,
    model: &Model,
    seed: u64,
    grid: &[f64],
) -> Result<(Vec<GridPoint>, usize, Trajectory), HarnessError> {
    let mut points = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, Trajectory)> = None;
    for (i, &lr) in grid.iter().enumerate() {
        let tr = simulate(cfg, model, seed, lr, false)?;
        let ok = !tr.diverged && tr.final_f.is_finite();
        points.push(GridPoint {
            lr,
            final_f: tr.final_f,
            diverged: !ok,
            selected: false,
        });
        if ok && best.as_ref().map_or(true, |(_, b)| tr.final_f < b.final_f) {
            best = Some((i, tr));
        }
    }
    let (idx, tr) = best.ok_or_else(|| HarnessError::Config(format!("every grid point diverged (seed {seed})")))?;
    points[idx].selected = true;
    Ok((points, idx, tr))
}

/// Everything produced for one seed, before it is written out.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub lr: f64,
    pub grid: Vec<GridPoint>,
    pub trajectory: Trajectory,
    pub summary: RunSummary,
    pub constants: Constants,
    pub wall_seconds: f64,
}

pub fn summary_inputs(constants: &Constants, eta: Option<f64>) -> SummaryInputs {
    SummaryInputs {
        l: constants.l,
        l_star: constants.l_star,
        f_star: constants.f_star,
        constant_eta: eta,
    }
}

fn wants_diagnostics(cfg: &ExperimentConfig) -> bool {
    cfg.diag_j || cfg.diag_l || cfg.diag_hat_j || cfg.checkpoints
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun, HarnessError> {
    let clock = Instant::now();
    let model = build_model(cfg, seed)?;
    let diag = wants_diagnostics(cfg);
    let (lr, grid, trajectory) = if cfg.grid.is_empty() {
        (cfg.lr, Vec::new(), simulate(cfg, &model, seed, cfg.lr, diag)?)
    } else {
        let (points, idx, tr) = tune(cfg, &model, seed, &cfg.grid)?;
        let lr = cfg.grid[idx];
        let tr = if diag { simulate(cfg, &model, seed, lr, true)? } else { tr };
        (lr, points, tr)
    };
    let constants = model.constants();
    let summary = summarize(&trajectory.records, &summary_inputs(&constants, trajectory.eta))?;
    Ok(SeedRun {
        seed,
        lr,
        grid,
        trajectory,
        summary,
        constants,
        wall_seconds: clock.elapsed().as_secs_f64(),
    })
}

/// Contents of `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub name: String,
    pub seed: u64,
    pub optimizer: String,
    pub schedule: ScheduleName,
    pub lr: f64,
    pub eta: Option<f64>,
    pub constants: Constants,
    pub summary: RunSummary,
    pub grid: Vec<GridPoint>,
}

impl SummaryFile {
    pub fn new(cfg: &ExperimentConfig, run: &SeedRun) -> Self {
        Self {
            name: cfg.name.clone(),
            seed: run.seed,
            optimizer: cfg.optimizer_spec().name().to_string(),
            schedule: cfg.schedule,
            lr: run.lr,
            eta: run.trajectory.eta,
            constants: run.constants.clone(),
            summary: run.summary.clone(),
            grid: run.grid.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SeedArtifact {
    pub seed: u64,
    pub lr: f64,
    pub dir: PathBuf,
    pub records: PathBuf,
    pub summary_path: PathBuf,
    pub grid: Option<PathBuf>,
    pub checkpoints: Option<PathBuf>,
    pub summary: RunSummary,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct RunArtifact {
    pub out_dir: PathBuf,
    pub config: PathBuf,
    pub seeds: Vec<SeedArtifact>,
    pub files: Vec<PathBuf>,
}

/// Writes one seed's records, summary, grid and checkpoints under `dir`.
pub fn write_seed(
    guard: &mut OutputGuard,
    cfg: &ExperimentConfig,
    dir: &Path,
    run: &SeedRun,
) -> Result<SeedArtifact, HarnessError> {
    let records = dir.join("records.csv");
    guard.write(&records, &records_csv(&run.trajectory.records))?;
    let summary_path = dir.join("summary.json");
    guard.write(&summary_path, &json_bytes(&SummaryFile::new(cfg, run))?)?;
    let grid = if run.grid.is_empty() {
        None
    } else {
        let p = dir.join("grid.csv");
        guard.write(&p, &grid_csv(&run.grid))?;
        Some(p)
    };
    let checkpoints = if cfg.checkpoints {
        let p = dir.join("checkpoints.json");
        guard.write(&p, &json_bytes(&run.trajectory.checkpoints)?)?;
        Some(p)
    } else {
        None
    };
    Ok(SeedArtifact {
        seed: run.seed,
        lr: run.lr,
        dir: dir.to_path_buf(),
        records,
        summary_path,
        grid,
        checkpoints,
        summary: run.summary.clone(),
        wall_seconds: run.wall_seconds,
    })
}

/// Runs every seed of `cfg` and writes `config.toml` plus `seed_<s>/` under
/// the output directory. Nothing is left behind on failure.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunArtifact, HarnessError> {
    cfg.validate()?;
    let out = cfg.out_dir();
    let mut guard = OutputGuard::new();
    guard.create_dir_all(&out)?;
    let config = out.join("config.toml");
    guard.write(&config, cfg.to_toml()?.as_bytes())?;
    let runs = pool::map_ordered(cfg.seeds.clone(), cfg.worker_count(), |s| run_seed(cfg, s));
    let mut seeds = Vec::with_capacity(runs.len());
    for run in runs {
        let run = run?;
        let dir = out.join(format!("seed_{}", run.seed));
        seeds.push(write_seed(&mut guard, cfg, &dir, &run)?);
    }
    Ok(RunArtifact {
        out_dir: out,
        config,
        seeds,
        files: guard.commit(),
    })
}

/// Recomputes J_t from a saved checkpoint.
pub fn replay_checkpoint_j(cfg: &ExperimentConfig, seed: u64, ckpt: &Checkpoint) -> Result<f64, HarnessError> {
    let model = build_model(cfg, seed)?;
    let problem = model.layer_problem(&ckpt.weights)?;
    Ok(j_t(&*problem, &ckpt.weights[ckpt.layer], &ckpt.direction).value)
}

