//! Command-line front end. Exit codes: 0 success, 1 a check failed,
//! 2 usage, config or I/O error.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{ExperimentConfig, Preset};
use crate::{checks, runner, suites, HarnessError};

#[derive(Debug, Parser)]
#[command(name = "muonlab", version, about = "Muon experiments and checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one configuration over its seeds.
    Run(Common),
    /// Comparison ratio of random quadratic targets.
    RatioStudy(Common),
    /// Quadratic: GD at 1/L against tuned Muon.
    Fig1(Common),
    /// Linear MSE: GD, Nesterov, Adam and Muon.
    Fig2(Scaled),
    /// MLP diagnostics for GD and Muon.
    Fig3(Scaled),
    /// Singular values of the feature matrix.
    Spectra(Common),
    /// Run a named verification check and print its JSON report.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat TOML file merged over the subcommand preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Replace the seed list with a single seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct Scaled {
    #[command(flatten)]
    pub common: Common,
    /// Use the full-size data and network.
    #[arg(long)]
    pub full_scale: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub check: String,
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn usage(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Usage(e.to_string())
}

impl Common {
    /// Config file (if any) plus flag overrides, merged over `preset`.
    pub fn resolve(&self, preset: Preset, extra: toml::Table) -> Result<ExperimentConfig, HarnessError> {
        let mut table = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
                text.parse::<toml::Table>().map_err(|e| HarnessError::Config(e.to_string()))?
            }
            None => toml::Table::new(),
        };
        table.extend(extra);
        let int = |v: u64| i64::try_from(v).map(toml::Value::Integer).map_err(usage);
        if let Some(s) = self.seed {
            table.insert("seeds".into(), toml::Value::Array(vec![int(s)?]));
        }
        if let Some(o) = &self.out {
            table.insert("out".into(), o.clone().into());
        }
        if let Some(i) = self.iters {
            table.insert("iters".into(), int(i as u64)?);
        }
        if let Some(o) = &self.optimizer {
            table.insert("optimizer".into(), o.replace('-', "_").into());
        }
        if let Some(lr) = self.lr {
            table.insert("lr".into(), lr.into());
        }
        if let Some(b) = self.beta {
            table.insert("beta".into(), b.into());
        }
        let text = toml::to_string(&table).map_err(|e| HarnessError::Config(e.to_string()))?;
        ExperimentConfig::from_toml_over(&text, preset)
    }
}

fn full_scale(preset: Preset, on: bool) -> toml::Table {
    let mut t = toml::Table::new();
    if !on {
        return t;
    }
    match preset {
        Preset::Fig2 => {
            t.insert("d".into(), 784.into());
            t.insert("batch".into(), 1000.into());
        }
        Preset::Fig3 => {
            t.insert("d".into(), 784.into());
            t.insert("batch".into(), 1000.into());
            t.insert("classes".into(), 10.into());
            t.insert(
                "mlp_widths".into(),
                toml::Value::Array(vec![128.into(), 64.into(), 10.into()]),
            );
        }
        _ => {}
    }
    t
}

fn execute(command: Command, stdout: &mut dyn Write) -> Result<i32, HarnessError> {
    let mut say = |line: String| writeln!(stdout, "{line}").map_err(|e| HarnessError::io("<stdout>", e));
    match command {
        Command::Run(c) => {
            let cfg = c.resolve(Preset::Run, toml::Table::new())?;
            let art = runner::run_experiment(&cfg)?;
            for s in &art.seeds {
                say(format!(
                    "seed {}: lr {} final f {}{}",
                    s.seed,
                    s.lr,
                    s.summary.final_f,
                    if s.summary.diverged { " (diverged)" } else { "" }
                ))?;
            }
            say(format!("wrote {}", art.out_dir.display()))?;
        }
        Command::RatioStudy(c) => {
            let cfg = c.resolve(Preset::RatioStudy, toml::Table::new())?;
            let out = suites::ratio_study_suite(&cfg)?;
            let s = &out.result;
            say(format!(
                "median {} (q10 {}, q90 {}), fraction above 3: {}",
                s.median, s.q10, s.q90, s.fraction_above_3
            ))?;
            say(format!("wrote {}", out.out_dir.display()))?;
        }
        Command::Fig1(c) => {
            let cfg = c.resolve(Preset::Fig1, toml::Table::new())?;
            let out = suites::figure1(&cfg)?;
            let s = &out.result.1;
            say(format!(
                "Muon wins on {:.1}% of {} seeds; ratio median {}",
                100.0 * s.win_fraction,
                s.seeds,
                s.ratio_study.median
            ))?;
            say(format!("wrote {}", out.out_dir.display()))?;
        }
        Command::Fig2(s) => {
            let cfg = s.common.resolve(Preset::Fig2, full_scale(Preset::Fig2, s.full_scale))?;
            let out = suites::figure2(&cfg)?;
            for r in &out.result {
                let finals: Vec<String> = r.optimizers.iter().map(|e| format!("{} {}", e.optimizer, e.final_f)).collect();
                say(format!(
                    "seed {}: {}; best {}, comparison ratio {}",
                    r.seed,
                    finals.join(", "),
                    r.best_optimizer,
                    r.comparison_ratio
                ))?;
            }
            say(format!("wrote {}", out.out_dir.display()))?;
        }
        Command::Fig3(s) => {
            let cfg = s.common.resolve(Preset::Fig3, full_scale(Preset::Fig3, s.full_scale))?;
            let out = suites::figure3(&cfg)?;
            let sum = &out.result.1;
            say(format!(
                "layer {}: Muon ratio exceeds GD at {:.1}% of sampled steps; fd residual {:e}",
                sum.layer,
                100.0 * sum.pooled_fraction,
                sum.fd_max_residual
            ))?;
            say(format!("wrote {}", out.out_dir.display()))?;
        }
        Command::Spectra(c) => {
            let cfg = c.resolve(Preset::Spectra, toml::Table::new())?;
            let out = suites::spectra(&cfg)?;
            say(format!("mean concentration ratio {}", out.result.mean_ratio))?;
            say(format!("wrote {}", out.out_dir.display()))?;
        }
        Command::Verify(v) => {
            let report = checks::run_check(&v.check, v.instances, v.seed)?;
            say(report.to_json())?;
            return Ok(if report.pass { 0 } else { 1 });
        }
    }
    Ok(0)
}

/// Parses `argv` (program name first) and runs it.
pub fn cli_main<I, S>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(stdout, "{text}") } else { write!(stderr, "{text}") };
            return code;
        }
    };
    match execute(cli.command, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "muonlab: {e}");
            2
        }
    }
}
