use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use scentnav::agent::{load_checkpoint, save_checkpoint, write_curve_csv};
use scentnav::conditions::{generate_benchmark_layout_with, ConditionSpec, Study, GOALS_PER_CONDITION};
use scentnav::experiments::{
    calibrate, regenerate, run_component_ablation, run_gamma_ablation, run_parameter_sweeps,
    run_sensitivity, write_bundle, Cell, ExperimentConfig, Lab, ReferenceTrends, Report, Table,
};
use scentnav::ConditionKind;

#[derive(Parser, Debug)]
#[command(name = "scentnav", version, about = "Simulate scent-driven navigation in hierarchical menus")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment configuration (TOML with [env], [memory], [train], [study]).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; falls back to SCENTNAV_SEED, then the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a benchmark layout as JSON.
    Generate {
        #[arg(long)]
        condition: ConditionKind,
        #[arg(long, default_value_t = 0)]
        goal: u8,
    },
    /// Train a policy for a study and save a checkpoint and learning curve.
    Train {
        #[arg(long)]
        study: Study,
        /// Training episodes.
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Evaluate a saved checkpoint on a study or a single condition.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        study: Option<Study>,
        #[arg(long)]
        condition: Option<ConditionKind>,
        /// Evaluation episodes per goal.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Train and evaluate one study (or all) and write report bundles.
    Bench {
        #[arg(long)]
        study: Option<Study>,
        /// Evaluation episodes per goal.
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Component and discount-factor ablations.
    Ablate {
        #[arg(long, value_enum, default_value_t = Which::All)]
        which: Which,
    },
    /// Retrieval-threshold and noise sweeps.
    Sweep,
    /// Parameter sensitivity of the agreement scores.
    Sense,
    /// Calibrate the memory parameters against the reference trends.
    Calibrate,
    /// Rebuild the derived files of a report bundle (the --out directory).
    Report,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Which {
    Components,
    Gamma,
    All,
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    let seed = match c.seed {
        Some(s) => Some(s),
        None => match std::env::var("SCENTNAV_SEED") {
            Ok(v) => Some(v.trim().parse().context("SCENTNAV_SEED must be an unsigned integer")?),
            Err(_) => None,
        },
    };
    if let Some(s) = seed {
        cfg.study.seed = s;
        cfg.train.seed = s;
    }
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_table(dir: &Path, name: &str, t: &Table) -> Result<()> {
    write(&dir.join(name), &t.to_csv())
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("value serializes")
}

fn print_summary(report: &Report) {
    for line in report.summary_lines() {
        println!("{}: {line}", report.study);
    }
}

fn bundle(cfg: &ExperimentConfig, out: &Path, study: Study, cells: &[Cell]) -> Result<()> {
    let dir = out.join(study.name());
    let report = write_bundle(&dir, study, cells, &cfg.hash(), cfg.study.seed, cfg.train.seed)?;
    write(&dir.join("config.toml"), &cfg.to_toml())?;
    print_summary(&report);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.common)?;
    let out = cli.common.out.clone();
    match cli.command {
        Command::Generate { condition, goal } => {
            if goal >= GOALS_PER_CONDITION {
                bail!("--goal must be below {GOALS_PER_CONDITION}");
            }
            let spec = ConditionSpec {
                kind: condition,
                goal_index: goal,
                seed: cfg.study.seed,
            };
            let layout = generate_benchmark_layout_with(&spec, &cfg.study.generator)?;
            let path = out.join(format!("{}_g{goal}.json", condition.name()));
            write(&path, &layout.to_json())?;
            println!("{}: wrote {}", condition.name(), path.display());
        }
        Command::Train { study, episodes, gamma } => {
            if let Some(n) = episodes {
                cfg.train.total_episodes = n;
            }
            if let Some(g) = gamma {
                cfg.train.gamma = g;
            }
            cfg.validate()?;
            let lab = Lab::new(cfg.clone()).with_jobs(cli.common.jobs);
            let trained = lab.default_policy(study)?;
            std::fs::create_dir_all(&out)?;
            let ckpt = out.join(format!("policy_{}.ckpt", study.name()));
            let meta = serde_json::json!({ "study": study, "train": cfg.train, "memory": cfg.memory });
            save_checkpoint(&ckpt, &trained.policy, &meta)?;
            write_curve_csv(&out.join(format!("curve_{}.csv", study.name())), &trained.curve)?;
            if let Some(last) = trained.curve.last() {
                println!(
                    "{}: update {} mean_steps={:.2} success_rate={:.3}",
                    study.name(),
                    last.update,
                    last.mean_steps,
                    last.success_rate
                );
            }
            println!("{}: wrote {}", study.name(), ckpt.display());
        }
        Command::Eval {
            checkpoint,
            study,
            condition,
            episodes,
        } => {
            if let Some(n) = episodes {
                cfg.study.episodes = n;
            }
            cfg.validate()?;
            let study = match (study, condition) {
                (Some(s), Some(c)) if c.study() != s => {
                    bail!("condition {c} does not belong to study {s}")
                }
                (Some(s), _) => s,
                (None, Some(c)) => c.study(),
                (None, None) => bail!("eval needs --study or --condition"),
            };
            let ck = load_checkpoint(&checkpoint)?;
            let lab = Lab::new(cfg.clone()).with_jobs(cli.common.jobs);
            let mut cells = lab.evaluate_study(study, &ck.policy, &cfg.memory, cfg.study.episodes)?;
            match condition {
                Some(c) => {
                    cells.retain(|cell| cell.kind == c);
                    let recs: Vec<_> = cells.iter().flat_map(|c| c.records.iter()).collect();
                    let n = recs.len() as f64;
                    let steps = recs.iter().map(|r| f64::from(r.steps)).sum::<f64>() / n;
                    let success = recs.iter().filter(|r| r.success).count() as f64 / n;
                    let dir = out.join(c.name());
                    let mut t = Table::new(&["goal_index", "episode", "steps", "clicks", "success", "lostness"]);
                    for cell in &cells {
                        for (e, r) in cell.records.iter().enumerate() {
                            t.push(vec![
                                cell.goal_index.to_string(),
                                e.to_string(),
                                r.steps.to_string(),
                                r.clicks.to_string(),
                                r.success.to_string(),
                                r.lostness.to_string(),
                            ]);
                        }
                    }
                    write_table(&dir, "results.csv", &t)?;
                    println!("{c}: mean_steps={steps:.2} success_rate={success:.3}");
                }
                None => bundle(&cfg, &out, study, &cells)?,
            }
        }
        Command::Bench { study, episodes, gamma } => {
            if let Some(n) = episodes {
                cfg.study.episodes = n;
            }
            if let Some(g) = gamma {
                cfg.train.gamma = g;
            }
            cfg.validate()?;
            let lab = Lab::new(cfg.clone()).with_jobs(cli.common.jobs);
            let studies = study.map_or(Study::ALL.to_vec(), |s| vec![s]);
            for s in studies {
                let cells = lab.run_study(s)?;
                bundle(&cfg, &out, s, &cells)?;
            }
        }
        Command::Ablate { which } => {
            let lab = Lab::new(cfg.clone()).with_jobs(cli.common.jobs);
            if which != Which::Gamma {
                let comp = run_component_ablation(&lab, &ReferenceTrends::default())?;
                write_table(&out, "plot_component_ablation.csv", &comp.table())?;
                write(&out.join("component_ablation.json"), &json(&comp))?;
                for r in &comp.rows {
                    println!(
                        "{}: trend_distance={:.3}",
                        r.variant.name(),
                        r.scores.trend_distance
                    );
                }
            }
            if which != Which::Components {
                let g = run_gamma_ablation(&lab)?;
                write_table(&out, "plot_gamma_ablation.csv", &g.table())?;
                write(&out.join("gamma_ablation.json"), &json(&g))?;
                for r in &g.rows {
                    println!("gamma {}: mean_steps={:.2} success_rate={:.3}", r.gamma, r.steps, r.success);
                }
            }
        }
        Command::Sweep => {
            let lab = Lab::new(cfg.clone()).with_jobs(cli.common.jobs);
            let s = run_parameter_sweeps(&lab)?;
            write_table(&out, "plot_sweeps.csv", &s.table())?;
            for r in s.theta.iter().chain(&s.sigma) {
                println!("{} {}: mean_steps={:.2} returns={:.2}", r.parameter, r.value, r.steps, r.returns);
            }
        }
        Command::Sense => {
            let lab = Lab::new(cfg.clone()).with_jobs(cli.common.jobs);
            let s = run_sensitivity(&lab, &cfg.memory, &ReferenceTrends::default())?;
            write_table(&out, "plot_sensitivity.csv", &s.table())?;
            write(&out.join("sensitivity.json"), &json(&s))?;
            for (level, v) in &s.mean_by_level {
                println!("level {:.0}%: mean_sensitivity={v:.3}", level * 100.0);
            }
        }
        Command::Calibrate => {
            let lab = Lab::new(cfg.clone()).with_jobs(cli.common.jobs);
            let c = calibrate(&lab, &ReferenceTrends::default())?;
            write_table(&out, "calibration_trace.csv", &c.table())?;
            write(&out.join("calibration.json"), &json(&c))?;
            let mut calibrated = cfg.clone();
            calibrated.memory = c.best;
            write(&out.join("calibrated.toml"), &calibrated.to_toml())?;
            println!(
                "calibration: {} trials, best objective {:.4}{}",
                c.trace.len(),
                c.best_objective,
                if c.budget_exhausted { " (budget exhausted)" } else { "" }
            );
        }
        Command::Report => {
            let report = regenerate(&out, cfg.env.n_max)?;
            print_summary(&report);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
