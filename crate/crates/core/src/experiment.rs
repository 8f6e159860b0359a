//! Experiment orchestration: learn or construct a signal profile for the
//! configured variant, simulate it, and persist profiles and results.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::equilibrium::{
    brute_force_equilibria, learn_equilibrium, purify, CounterfactualMode, MixedProfile, PurityStats, RegretTrace,
    PURITY_LOOSE,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::market::{MarketSpec, PreferenceProfile, SignalSpace, TieBreakDraw};
use crate::mechanism::{heuristic_signals, run_paired_sd, run_tiebreak_first, MechanismVariant, SignalProfile};
use crate::rng;
use crate::scenario::{generate_scenario, labels, ScenarioConfig};
use crate::welfare::{
    determinism_check, envy_check, exact_outcome_stats, outcome_stats, pareto_improvement_search, Play, Sampling,
    StudentStats,
};

/// A learned mixed profile, its purification and learning diagnostics.
#[derive(Debug, Clone)]
pub struct LearnedProfile {
    pub mixed: MixedProfile,
    pub signals: SignalProfile,
    pub purity: PurityStats,
    pub trace: RegretTrace,
}

pub fn learn_profile(
    cfg: &ScenarioConfig,
    spec: &MarketSpec,
    prefs: &PreferenceProfile,
    exec: Exec,
) -> Result<LearnedProfile> {
    let (mixed, trace) = learn_equilibrium(spec, prefs, cfg.signal_space(), &cfg.learner_config(), exec)?;
    let (signals, purity) = purify(&mixed, PURITY_LOOSE)?;
    Ok(LearnedProfile {
        mixed,
        signals,
        purity,
        trace,
    })
}

/// `student_id, signal, top_mass, p_0, ..., p_{S-1}`.
pub fn write_profile_csv(path: &Path, learned: &LearnedProfile) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let s = learned.mixed.num_signals();
    let mut header = vec!["student_id".to_string(), "signal".into(), "top_mass".into()];
    header.extend((0..s).map(|k| format!("p_{k}")));
    w.write_record(&header)?;
    let top = learned.mixed.top_mass();
    for (i, probs) in learned.mixed.rows().enumerate() {
        let mut rec = vec![i.to_string(), learned.signals[i].to_string(), top[i].to_string()];
        rec.extend(probs.iter().map(|p| p.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// The `signal` column of a profile CSV.
pub fn read_profile_csv(path: &Path) -> Result<SignalProfile> {
    let mut r = csv::Reader::from_path(path)?;
    let col = r
        .headers()?
        .iter()
        .position(|h| h == "signal")
        .ok_or_else(|| Error::config(format!("{}: missing column signal", path.display())))?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            rec[col]
                .parse()
                .map_err(|e| Error::config(format!("{}: bad signal {:?}: {e}", path.display(), &rec[col])))
        })
        .collect()
}

/// Simulated outcome of one variant on one scenario.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub fingerprint: String,
    pub variant: MechanismVariant,
    /// The played profile; `None` for the tie-break-first variant, whose
    /// profile differs per draw.
    pub signals: Option<SignalProfile>,
    pub learned: Option<LearnedProfile>,
    /// Mean over draws of the fraction of students with top mass >= 0.9
    /// (tie-break-first only).
    pub revealed_purity: Option<f64>,
    pub stats: StudentStats,
    pub wall_clock_secs: f64,
}

impl ExperimentResult {
    pub fn meta(&self, cfg: &ScenarioConfig) -> ResultMeta {
        ResultMeta {
            fingerprint: self.fingerprint.clone(),
            variant: self.variant,
            seed: cfg.seed,
            num_students: cfg.num_students,
            signals: cfg.signals,
            stat_draws: self.stats.samples,
            purity: self.learned.as_ref().map(|l| l.purity),
            revealed_purity: self.revealed_purity,
            final_total_regret: self.learned.as_ref().map(|l| l.trace.final_total_regret()),
            n_deterministic_students: self.stats.zero_std_count(),
            welfare: self.stats.welfare(),
            wall_clock_secs: self.wall_clock_secs,
        }
    }
}

/// JSON sidecar of a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultMeta {
    pub fingerprint: String,
    pub variant: MechanismVariant,
    pub seed: u64,
    pub num_students: usize,
    pub signals: usize,
    pub stat_draws: usize,
    pub purity: Option<PurityStats>,
    pub revealed_purity: Option<f64>,
    pub final_total_regret: Option<f64>,
    pub n_deterministic_students: usize,
    pub welfare: f64,
    pub wall_clock_secs: f64,
}

impl ResultMeta {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    use std::io::Write;
    writeln!(f)?;
    Ok(())
}

/// Generate the scenario and run its configured variant.
pub fn run_experiment(cfg: &ScenarioConfig, exec: Exec) -> Result<ExperimentResult> {
    run_experiment_with(cfg, None, exec)
}

/// As [`run_experiment`]; a supplied profile replaces learning for the
/// paired variant.
pub fn run_experiment_with(cfg: &ScenarioConfig, profile: Option<SignalProfile>, exec: Exec) -> Result<ExperimentResult> {
    let start = Instant::now();
    let (spec, prefs) = generate_scenario(cfg)?;
    let n = spec.num_students;
    let space = cfg.signal_space();
    let seed = cfg.stats_seed();
    let draws = cfg.stat_draws;
    let simulate = |signals: &[usize], space: SignalSpace| {
        if cfg.exact_stats {
            exact_outcome_stats(signals, &spec, &prefs, space)
        } else {
            outcome_stats(Play::Pure(signals), &spec, &prefs, space, draws, seed, exec)
        }
    };
    let mut learned = None;
    let mut revealed_purity = None;
    let (signals, stats) = match cfg.variant {
        MechanismVariant::PairedSd => {
            let signals = match profile {
                Some(p) => {
                    space.check(&p)?;
                    if p.len() != n {
                        return Err(Error::config("profile does not cover every student"));
                    }
                    p
                }
                None => {
                    let l = learn_profile(cfg, &spec, &prefs, exec)?;
                    let s = l.signals.clone();
                    learned = Some(l);
                    s
                }
            };
            let stats = simulate(&signals, space)?;
            (Some(signals), stats)
        }
        MechanismVariant::IndependentRsd => {
            let signals = vec![0; n];
            let one = SignalSpace::new(1)?;
            let stats = simulate(&signals, one)?;
            (Some(signals), stats)
        }
        MechanismVariant::PairedSdHeuristic => {
            let signals = heuristic_signals(&prefs, space)?;
            let stats = simulate(&signals, space)?;
            (Some(signals), stats)
        }
        MechanismVariant::PairedSdTieBreakFirst => {
            if cfg.exact_stats {
                return Err(Error::config("exact_stats is not available for the tie-break-first variant"));
            }
            let tb_seed = rng::derive_seed(cfg.seed, labels::TIEBREAK_FIRST);
            let tbs: Vec<TieBreakDraw> = (0..cfg.tiebreak_first_draws)
                .map(|d| TieBreakDraw::random(n, tb_seed, 0, d as u64))
                .collect();
            let outcomes = run_tiebreak_first(&spec, &prefs, space, &cfg.learner_config(), &tbs, exec)?;
            let rows: Vec<Vec<f64>> = outcomes.iter().map(|o| o.allocation.utilities(&prefs)).collect();
            revealed_purity =
                Some(outcomes.iter().map(|o| o.purity.frac_ge_0_9).sum::<f64>() / outcomes.len().max(1) as f64);
            (None, StudentStats::from_samples(&rows)?)
        }
    };
    Ok(ExperimentResult {
        fingerprint: cfg.fingerprint(),
        variant: cfg.variant,
        signals,
        learned,
        revealed_purity,
        stats,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// One exact equilibrium of a small game and the property checks run on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumCheck {
    pub signals: SignalProfile,
    pub payoffs: Vec<f64>,
    pub std: Vec<f64>,
    /// Smallest entry of the envy matrix.
    pub min_envy: f64,
    pub is_deterministic: bool,
    pub fill_times_at_cutoffs: bool,
    /// Only searched for deterministic equilibria.
    pub pareto_improvable: Option<bool>,
}

/// Exhaustive analysis of a small game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForceReport {
    pub num_students: usize,
    pub num_signals: usize,
    /// Every pure profile with its exact expected payoffs.
    pub game: Vec<(SignalProfile, Vec<f64>)>,
    pub equilibria: Vec<EquilibriumCheck>,
}

impl BruteForceReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

pub fn brute_force_report(spec: &MarketSpec, prefs: &PreferenceProfile, space: SignalSpace) -> Result<BruteForceReport> {
    let table = crate::equilibrium::GameTable::build(spec, prefs, space)?;
    let game = table.profiles().map(|p| (p.clone(), table.payoff(&p).to_vec())).collect();
    let mut equilibria = Vec::new();
    for eq in brute_force_equilibria(spec, prefs, space)? {
        let exact = exact_outcome_stats(&eq.signals, spec, prefs, space)?;
        let envy = envy_check(&eq.signals, spec, prefs, space, crate::equilibrium::Evaluator::Exact)?;
        let det = determinism_check(&eq.signals, spec, prefs, space, Sampling::Exact)?;
        let pareto_improvable = if det.is_deterministic {
            let tb = TieBreakDraw::new((0..spec.num_students).collect(), (0..spec.num_students).collect())?;
            let a = run_paired_sd(&eq.signals, &tb, spec, prefs)?.allocation;
            Some(pareto_improvement_search(&a, spec, prefs)?.is_some())
        } else {
            None
        };
        equilibria.push(EquilibriumCheck {
            signals: eq.signals,
            payoffs: eq.payoffs,
            std: exact.std,
            min_envy: envy.iter().flatten().copied().fold(f64::INFINITY, f64::min),
            is_deterministic: det.is_deterministic,
            fill_times_at_cutoffs: det.fill_times_at_cutoffs,
            pareto_improvable,
        });
    }
    Ok(BruteForceReport {
        num_students: spec.num_students,
        num_signals: space.size(),
        game,
        equilibria,
    })
}

/// Force exact counterfactuals in the learner.
pub fn force_exact(cfg: &mut ScenarioConfig) {
    cfg.learner.counterfactuals = CounterfactualMode::Exact;
}
