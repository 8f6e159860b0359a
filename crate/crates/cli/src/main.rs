//! `psd`: learn, simulate and analyse paired serial dictatorship scenarios.
//!
//! Exit codes: 0 on success, 1 on configuration or I/O errors, 2 when an
//! exhaustive oracle refuses an instance over its size guard.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use psd_core::equilibrium::RegretTrace;
use psd_core::experiment::{
    brute_force_report, force_exact, learn_profile, read_profile_csv, run_experiment_with, write_profile_csv,
    ResultMeta,
};
use psd_core::scenario::{generate_scenario, ScenarioConfig};
use psd_core::transport::{homogeneous_instance, solve_thresholds, optimum_crosscheck, SolveOptions};
use psd_core::welfare::{compare, StudentStats, Summary};
use psd_core::{Error, Exec, MechanismVariant, Result};

#[derive(Parser)]
#[command(name = "psd", version, about = "Paired serial dictatorship experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn an equilibrium profile; writes profile.csv and regret.csv.
    Learn(Common),
    /// Simulate a mechanism variant; writes stats.csv and result.json.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Overrides the configured variant.
        #[arg(long, value_enum)]
        variant: Option<Variant>,
        /// Play this profile (the `signal` column) instead of learning one.
        #[arg(long)]
        profile: Option<PathBuf>,
    },
    /// Exhaustive equilibria and property checks of a small game; writes bruteforce.json.
    Bruteforce(Common),
    /// Optimal threshold partition of a homogeneous scenario; writes transport.json.
    Transport {
        #[command(flatten)]
        common: Common,
        /// Also simulate the learned equilibrium against the optimum (crosscheck.json).
        #[arg(long)]
        crosscheck: bool,
    },
    /// Compare two simulation outputs; writes comparison.csv and summary.json.
    Report {
        /// Directory holding the treatment's stats.csv.
        #[arg(long)]
        treatment: PathBuf,
        /// Directory holding the baseline's stats.csv.
        #[arg(long)]
        baseline: PathBuf,
        /// Regret trace to take the final total regret from.
        #[arg(long)]
        regret: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Evaluate learner counterfactuals by re-running the mechanism.
    #[arg(long)]
    exact_counterfactuals: bool,
    /// Monte-Carlo draws behind the welfare statistics.
    #[arg(long)]
    draws: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    PairedSd,
    IndependentRsd,
    TieBreakFirst,
    Heuristic,
}

impl From<Variant> for MechanismVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::PairedSd => MechanismVariant::PairedSd,
            Variant::IndependentRsd => MechanismVariant::IndependentRsd,
            Variant::TieBreakFirst => MechanismVariant::PairedSdTieBreakFirst,
            Variant::Heuristic => MechanismVariant::PairedSdHeuristic,
        }
    }
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut cfg = ScenarioConfig::from_path(&self.config)
            .map_err(|e| Error::Config(format!("{}: {e}", self.config.display())))?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(draws) = self.draws {
            cfg.stat_draws = draws;
        }
        if self.exact_counterfactuals {
            force_exact(&mut cfg);
        }
        cfg.validate()?;
        if let Some(t) = self.threads {
            if t == 0 {
                return Err(Error::Config("--threads must be positive".into()));
            }
            psd_core::exec::set_threads(t);
        }
        Ok(cfg)
    }
}

/// Files written by one command, removed again if the command fails.
struct Outputs {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn open(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        std::fs::create_dir_all(dir)?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            created_dir,
            files: Vec::new(),
        })
    }

    fn file(&mut self, name: &str) -> PathBuf {
        let path = self.dir.join(name);
        self.files.push(path.clone());
        path
    }

    fn discard(self) {
        for f in &self.files {
            let _ = std::fs::remove_file(f);
        }
        if self.created_dir {
            let _ = std::fs::remove_dir(&self.dir);
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let out_dir = match &cli.command {
        Command::Learn(c) | Command::Bruteforce(c) => &c.out,
        Command::Simulate { common, .. } | Command::Transport { common, .. } => &common.out,
        Command::Report { out, .. } => out,
    };
    let mut outputs = match Outputs::open(out_dir) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };
    match run(&cli.command, &mut outputs) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            outputs.discard();
            fail(&e)
        }
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_guard() { 2 } else { 1 })
}

fn run(command: &Command, out: &mut Outputs) -> Result<()> {
    let exec = Exec::Parallel;
    match command {
        Command::Learn(common) => {
            let cfg = common.load()?;
            let (spec, prefs) = generate_scenario(&cfg)?;
            let learned = learn_profile(&cfg, &spec, &prefs, exec)?;
            write_profile_csv(&out.file("profile.csv"), &learned)?;
            learned.trace.write_csv(&out.file("regret.csv"))?;
            println!(
                "learned {} students: {:.1}% with top mass >= 0.9, tail regret {:.4}",
                spec.num_students,
                100.0 * learned.purity.frac_ge_0_9,
                learned.trace.tail_normalized_regret(25)
            );
        }
        Command::Simulate {
            common,
            variant,
            profile,
        } => {
            let mut cfg = common.load()?;
            if let Some(v) = variant {
                cfg.variant = (*v).into();
            }
            let profile = profile.as_deref().map(read_profile_csv).transpose()?;
            let result = run_experiment_with(&cfg, profile, exec)?;
            let (_, prefs) = generate_scenario(&cfg)?;
            result
                .stats
                .write_csv(&out.file("stats.csv"), &prefs, result.signals.as_deref())?;
            if let Some(learned) = &result.learned {
                write_profile_csv(&out.file("profile.csv"), learned)?;
                learned.trace.write_csv(&out.file("regret.csv"))?;
            }
            let meta = result.meta(&cfg);
            meta.write_json(&out.file("result.json"))?;
            let se = result.stats.welfare_se().map_or(String::new(), |se| format!(" (se {se:.4})"));
            println!(
                "{:?}: welfare {:.4}{se}, {} deterministic students",
                meta.variant,
                result.stats.welfare(),
                meta.n_deterministic_students
            );
        }
        Command::Bruteforce(common) => {
            let cfg = common.load()?;
            let (spec, prefs) = generate_scenario(&cfg)?;
            let report = brute_force_report(&spec, &prefs, cfg.signal_space())?;
            report.write_json(&out.file("bruteforce.json"))?;
            for eq in &report.equilibria {
                println!("equilibrium {:?}: payoffs {:?}", eq.signals, eq.payoffs);
            }
            if report.equilibria.is_empty() {
                println!("no pure equilibrium");
            }
        }
        Command::Transport { common, crosscheck } => {
            let cfg = common.load()?;
            let inst = homogeneous_instance(&cfg)?;
            let sol = solve_thresholds(
                &inst.grid,
                cfg.signals,
                &inst.courses,
                &inst.dorms,
                SolveOptions::default(),
                exec,
            )?;
            sol.write_json(&out.file("transport.json"))?;
            println!("optimal thresholds {:?}, objective {:.6}", sol.thresholds, sol.objective);
            if *crosscheck {
                let report = optimum_crosscheck(&cfg, exec)?;
                report.write_json(&out.file("crosscheck.json"))?;
                println!(
                    "simulated welfare {:.6} +- {:.6} ({:.2}% of optimum), {} students below independent RSD",
                    report.simulated_welfare,
                    report.simulated_se,
                    100.0 * report.welfare_ratio(),
                    report.students_below_irsd.len()
                );
            }
        }
        Command::Report {
            treatment,
            baseline,
            regret,
            ..
        } => {
            let a = StudentStats::read_csv(&treatment.join("stats.csv"))?;
            let b = StudentStats::read_csv(&baseline.join("stats.csv"))?;
            let report = compare(&a, &b)?;
            let final_regret = match regret {
                Some(path) => Some(RegretTrace::read_csv(path)?.final_total_regret()),
                None => {
                    let meta = treatment.join("result.json");
                    if meta.exists() {
                        ResultMeta::read_json(&meta)?.final_total_regret
                    } else {
                        None
                    }
                }
            };
            report.write_csv(&out.file("comparison.csv"))?;
            let summary = Summary::new(&report, a.zero_std_count(), final_regret);
            summary.write_json(&out.file("summary.json"))?;
            println!(
                "{}/{} improved (mean change {:.2}%), {}/{} reduced std (mean change {:.2}%)",
                report.count_mean_improved,
                report.n_students,
                report.mean_pct_mean_change,
                report.count_std_reduced,
                report.n_students,
                report.mean_pct_std_change
            );
        }
    }
    Ok(())
}
