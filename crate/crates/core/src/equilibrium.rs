//! Equilibrium computation: full-information exponential-weights learning
//! with regret diagnostics, and exact pure-Nash enumeration for tiny games.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::market::{MarketSpec, PreferenceProfile, SignalSpace, TieBreakDraw};
use crate::mechanism::{
    deviation_utility, exact_expected_payoffs, DrawBuffers, PayoffVector, SignalProfile, DRAW_CHUNK,
};
use crate::rng::{self, Purpose};

/// Per-student probability vectors over signals, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedProfile {
    num_signals: usize,
    probs: Vec<f64>,
}

impl MixedProfile {
    pub fn uniform(num_students: usize, space: SignalSpace) -> Self {
        let s = space.size();
        MixedProfile {
            num_signals: s,
            probs: vec![1.0 / s as f64; num_students * s],
        }
    }

    pub fn pure(signals: &[usize], space: SignalSpace) -> Result<Self> {
        space.check(signals)?;
        let s = space.size();
        let mut probs = vec![0.0; signals.len() * s];
        for (i, &x) in signals.iter().enumerate() {
            probs[i * s + x] = 1.0;
        }
        Ok(MixedProfile { num_signals: s, probs })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let s = rows.first().map_or(0, Vec::len);
        if s == 0 {
            return Err(Error::config("mixed profile needs at least one student and one signal"));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != s {
                return Err(Error::config(format!("student {i} has {} probabilities, expected {s}", r.len())));
            }
            if r.iter().any(|&p| !(p >= 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::Domain(format!("student {i} probabilities are not a distribution")));
            }
        }
        Ok(MixedProfile {
            num_signals: s,
            probs: rows.concat(),
        })
    }

    pub fn num_students(&self) -> usize {
        self.probs.len() / self.num_signals
    }

    pub fn num_signals(&self) -> usize {
        self.num_signals
    }

    pub fn probs(&self, i: usize) -> &[f64] {
        &self.probs[i * self.num_signals..(i + 1) * self.num_signals]
    }

    fn probs_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.probs[i * self.num_signals..(i + 1) * self.num_signals]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.probs.chunks_exact(self.num_signals)
    }

    /// Draw one signal per student.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> SignalProfile {
        self.rows().map(|p| sample_index(p, rng.random::<f64>())).collect()
    }

    /// Largest single-signal probability per student.
    pub fn top_mass(&self) -> Vec<f64> {
        self.rows().map(|p| p.iter().copied().fold(0.0, f64::max)).collect()
    }
}

fn sample_index(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (s, &q) in p.iter().enumerate() {
        acc += q;
        if u < acc {
            return s;
        }
    }
    // rounding left u above the cumulative sum: take the last supported signal
    p.iter().rposition(|&q| q > 0.0).unwrap_or(p.len() - 1)
}

/// Step size of the multiplicative update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum LearningRate {
    /// `sqrt(8 ln max(S, 2) / T)`.
    Hedge,
    Constant(f64),
}

impl LearningRate {
    pub fn eta(self, num_signals: usize, iterations: usize) -> f64 {
        match self {
            LearningRate::Hedge => (8.0 * (num_signals.max(2) as f64).ln() / iterations as f64).sqrt(),
            LearningRate::Constant(eta) => eta,
        }
    }
}

/// How payoffs are mapped to `[0, 1]` before the update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Normalization {
    /// Per-student running minimum and maximum of every payoff seen so far.
    RunningRange,
    /// The spread of the current iteration's payoff vector.
    IterationRange,
    Fixed { lo: f64, hi: f64 },
}

/// How the learner evaluates signals the student did not play.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CounterfactualMode {
    /// Frozen for populations above [`AUTO_FROZEN_ABOVE`], exact otherwise.
    Auto,
    Frozen,
    Exact,
}

/// Population size above which [`CounterfactualMode::Auto`] uses frozen traces.
pub const AUTO_FROZEN_ABOVE: usize = 100;

impl CounterfactualMode {
    pub fn resolve(self, num_students: usize) -> CounterfactualMode {
        match self {
            CounterfactualMode::Auto if num_students > AUTO_FROZEN_ABOVE => CounterfactualMode::Frozen,
            CounterfactualMode::Auto => CounterfactualMode::Exact,
            m => m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerConfig {
    pub iterations: usize,
    pub draws_per_iteration: usize,
    pub learning_rate: LearningRate,
    pub normalization: Normalization,
    pub counterfactuals: CounterfactualMode,
    /// Set by the caller; scenarios derive it from their own seed.
    #[serde(skip)]
    pub seed: u64,
}

/// Default step size on payoffs normalized to `[0, 1]`.
pub const DEFAULT_ETA: f64 = 2.0;

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            iterations: 200,
            draws_per_iteration: 200,
            learning_rate: LearningRate::Constant(DEFAULT_ETA),
            normalization: Normalization::RunningRange,
            counterfactuals: CounterfactualMode::Auto,
            seed: 0,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.draws_per_iteration == 0 {
            return Err(Error::config("learner iterations and draws_per_iteration must be positive"));
        }
        if let LearningRate::Constant(eta) = self.learning_rate {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::Domain(format!("learning rate {eta} must be positive")));
            }
        }
        if let Normalization::Fixed { lo, hi } = self.normalization {
            if !(lo < hi) {
                return Err(Error::Domain(format!("normalization bounds ({lo}, {hi}) are empty")));
            }
        }
        Ok(())
    }
}

/// Multiplicative-weights step with payoffs normalized by `(lo, hi)`.
///
/// Degenerate bounds (`hi <= lo`) leave the weights unchanged.
pub fn exp_weights_update(weights: &[f64], payoffs: &[f64], eta: f64, bounds: (f64, f64)) -> Vec<f64> {
    let mut out = weights.to_vec();
    update_in_place(&mut out, payoffs, eta, bounds);
    out
}

fn update_in_place(weights: &mut [f64], payoffs: &[f64], eta: f64, (lo, hi): (f64, f64)) {
    let range = hi - lo;
    if !(range > 0.0) {
        return;
    }
    let exps: Vec<f64> = payoffs.iter().map(|&u| eta * (u - lo) / range).collect();
    let top = weights
        .iter()
        .zip(&exps)
        .filter(|(&w, _)| w > 0.0)
        .map(|(_, &e)| e)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (w, e) in weights.iter_mut().zip(&exps) {
        *w *= (e - top).exp();
        total += *w;
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
}

/// External regret of a history: best fixed signal's mean payoff minus the
/// mean payoff of the signals actually played.
pub fn regret(history: &[PayoffVector], plays: &[usize]) -> Result<f64> {
    if history.is_empty() || history.len() != plays.len() {
        return Err(Error::config("regret needs one play per nonempty history entry"));
    }
    let s = history[0].len();
    let t = history.len() as f64;
    let mut totals = vec![0.0; s];
    let mut realized = 0.0;
    for (v, &p) in history.iter().zip(plays) {
        if v.len() != s || p >= s {
            return Err(Error::config("inconsistent payoff vector length or play"));
        }
        for (a, x) in totals.iter_mut().zip(v) {
            *a += x;
        }
        realized += v[p];
    }
    Ok(totals.iter().copied().fold(f64::NEG_INFINITY, f64::max) / t - realized / t)
}

/// Fraction of students whose top signal carries at least each threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PurityStats {
    pub threshold: f64,
    pub frac_above_threshold: f64,
    pub frac_ge_0_9: f64,
    pub frac_ge_1m1e9: f64,
}

/// Purity thresholds reported alongside every learned profile.
pub const PURITY_LOOSE: f64 = 0.9;
pub const PURITY_STRICT: f64 = 1.0 - 1e-9;

fn purity(mixed: &MixedProfile, threshold: f64) -> PurityStats {
    let top = mixed.top_mass();
    let n = top.len() as f64;
    let frac = |t: f64| top.iter().filter(|&&m| m >= t).count() as f64 / n;
    PurityStats {
        threshold,
        frac_above_threshold: frac(threshold),
        frac_ge_0_9: frac(PURITY_LOOSE),
        frac_ge_1m1e9: frac(PURITY_STRICT),
    }
}

/// Most likely signal per student (ties to the lower signal) and purity stats.
pub fn purify(mixed: &MixedProfile, threshold: f64) -> Result<(SignalProfile, PurityStats)> {
    if !(threshold > 0.5 && threshold <= 1.0) {
        return Err(Error::Domain(format!("purity threshold {threshold} outside (0.5, 1]")));
    }
    let signals = mixed
        .rows()
        .map(|p| {
            let mut best = 0;
            for (s, &q) in p.iter().enumerate() {
                if q > p[best] {
                    best = s;
                }
            }
            best
        })
        .collect();
    Ok((signals, purity(mixed, threshold)))
}

/// One learning iteration's diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Sum over students of `max_s u(s) - sum_s p(s) u(s)` for the iteration's
    /// averaged payoffs and the mixture held before the update.
    pub total_regret: f64,
    pub mean_regret: f64,
    /// Mean over students of regret divided by the student's running payoff range.
    pub mean_normalized_regret: f64,
    pub frac_top_signal_ge_0_9: f64,
    pub frac_top_signal_ge_1m1e9: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RegretTrace {
    pub records: Vec<IterationRecord>,
    /// Per-iteration, per-student regret in utility units.
    pub student_regret: Vec<Vec<f64>>,
}

impl RegretTrace {
    /// Mean of `mean_normalized_regret` over the last `k` iterations.
    pub fn tail_normalized_regret(&self, k: usize) -> f64 {
        let tail = &self.records[self.records.len().saturating_sub(k)..];
        tail.iter().map(|r| r.mean_normalized_regret).sum::<f64>() / tail.len().max(1) as f64
    }

    pub fn final_total_regret(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.total_regret)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "iteration",
            "total_regret",
            "mean_regret",
            "mean_normalized_regret",
            "frac_top_signal_ge_0.9",
            "frac_top_signal_ge_1m1e9",
        ])?;
        for r in &self.records {
            w.write_record([
                r.iteration.to_string(),
                r.total_regret.to_string(),
                r.mean_regret.to_string(),
                r.mean_normalized_regret.to_string(),
                r.frac_top_signal_ge_0_9.to_string(),
                r.frac_top_signal_ge_1m1e9.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read the per-iteration records written by [`RegretTrace::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let records = r
            .records()
            .map(|rec| {
                let rec = rec?;
                let field = |k: usize| -> Result<f64> {
                    rec.get(k)
                        .and_then(|x| x.parse().ok())
                        .ok_or_else(|| Error::config(format!("{}: bad regret row {rec:?}", path.display())))
                };
                Ok(IterationRecord {
                    iteration: field(0)? as usize,
                    total_regret: field(1)?,
                    mean_regret: field(2)?,
                    mean_normalized_regret: field(3)?,
                    frac_top_signal_ge_0_9: field(4)?,
                    frac_top_signal_ge_1m1e9: field(5)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RegretTrace {
            records,
            student_regret: Vec::new(),
        })
    }
}

/// Where each iteration's tie-break draws come from.
#[derive(Debug, Clone, Copy)]
enum TieBreaks<'a> {
    Random,
    Fixed(&'a TieBreakDraw),
}

/// Learn an approximate equilibrium with fresh tie-break draws every iteration.
pub fn learn_equilibrium(
    spec: &MarketSpec,
    prefs: &PreferenceProfile,
    space: SignalSpace,
    config: &LearnerConfig,
    exec: Exec,
) -> Result<(MixedProfile, RegretTrace)> {
    learn(spec, prefs, space, config, TieBreaks::Random, exec)
}

/// Learn with one tie-break draw known in advance; payoffs given signals are
/// deterministic, so each iteration evaluates that single draw.
pub fn learn_with_fixed_tiebreak(
    spec: &MarketSpec,
    prefs: &PreferenceProfile,
    space: SignalSpace,
    config: &LearnerConfig,
    tiebreak: &TieBreakDraw,
    exec: Exec,
) -> Result<(MixedProfile, RegretTrace)> {
    if tiebreak.len() != spec.num_students {
        return Err(Error::config("tie-break draw does not cover every student"));
    }
    learn(spec, prefs, space, config, TieBreaks::Fixed(tiebreak), exec)
}

fn learn(
    spec: &MarketSpec,
    prefs: &PreferenceProfile,
    space: SignalSpace,
    config: &LearnerConfig,
    tiebreaks: TieBreaks<'_>,
    exec: Exec,
) -> Result<(MixedProfile, RegretTrace)> {
    config.validate()?;
    prefs.check_against(spec)?;
    let n = spec.num_students;
    let s_count = space.size();
    let draws = match tiebreaks {
        TieBreaks::Random => config.draws_per_iteration,
        TieBreaks::Fixed(_) => 1,
    };
    let mode = config.counterfactuals.resolve(n);
    let eta = config.learning_rate.eta(s_count, config.iterations);
    let mut mixed = MixedProfile::uniform(n, space);
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    let mut trace = RegretTrace::default();

    for t in 0..config.iterations {
        let mut srng = rng::stream(config.seed, Purpose::SignalSample, t as u64, 0);
        let signals = mixed.sample(&mut srng);
        let (sums, _) = exec.fold_chunks(
            draws,
            DRAW_CHUNK,
            || (vec![0.0; n * s_count], DrawBuffers::default()),
            |(sum, buf), d| {
                let owned;
                let tb = match tiebreaks {
                    TieBreaks::Random => {
                        owned = TieBreakDraw::random(n, config.seed, 1 + t as u64, d as u64);
                        &owned
                    }
                    TieBreaks::Fixed(tb) => tb,
                };
                buf.realize(&signals, s_count, tb, spec, prefs);
                for i in 0..n {
                    let row = &mut sum[i * s_count..(i + 1) * s_count];
                    for (s, acc) in row.iter_mut().enumerate() {
                        *acc += match mode {
                            CounterfactualMode::Exact if s != signals[i] => {
                                deviation_utility(i, s, &signals, tb, spec, prefs)
                                    .expect("inputs validated above")
                            }
                            CounterfactualMode::Exact => buf.utility()[i],
                            _ => buf.frozen_utility(i, s, &signals, s_count, tb, spec, prefs),
                        };
                    }
                }
            },
            |(acc, _), (part, _)| {
                for (a, p) in acc.iter_mut().zip(part) {
                    *a += p;
                }
            },
        );

        let mut regrets = Vec::with_capacity(n);
        let mut norm_total = 0.0;
        for i in 0..n {
            let avg: Vec<f64> = sums[i * s_count..(i + 1) * s_count]
                .iter()
                .map(|x| x / draws as f64)
                .collect();
            let (min, max) = avg
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            lo[i] = lo[i].min(min);
            hi[i] = hi[i].max(max);
            let p = mixed.probs(i);
            let expected: f64 = p.iter().zip(&avg).map(|(p, u)| p * u).sum();
            let r = (max - expected).max(0.0);
            regrets.push(r);
            if hi[i] > lo[i] {
                norm_total += r / (hi[i] - lo[i]);
            }
            let bounds = match config.normalization {
                Normalization::RunningRange => (lo[i], hi[i]),
                Normalization::IterationRange => (min, max),
                Normalization::Fixed { lo, hi } => (lo, hi),
            };
            update_in_place(mixed.probs_mut(i), &avg, eta, bounds);
        }
        let total: f64 = regrets.iter().sum();
        let pur = purity(&mixed, PURITY_LOOSE);
        trace.records.push(IterationRecord {
            iteration: t,
            total_regret: total,
            mean_regret: total / n as f64,
            mean_normalized_regret: norm_total / n as f64,
            frac_top_signal_ge_0_9: pur.frac_ge_0_9,
            frac_top_signal_ge_1m1e9: pur.frac_ge_1m1e9,
        });
        trace.student_regret.push(regrets);
    }
    Ok((mixed, trace))
}

/// Largest `N` and `S` accepted by the exact game oracles.
pub const BRUTE_FORCE_MAX_STUDENTS: usize = 5;
pub const BRUTE_FORCE_MAX_SIGNALS: usize = 4;

/// Exact expected payoffs of every pure signal profile.
#[derive(Debug, Clone, PartialEq)]
pub struct GameTable {
    pub space: SignalSpace,
    pub num_students: usize,
    /// Indexed by the base-`S` code of the profile, student 0 most significant.
    pub payoffs: Vec<Vec<f64>>,
}

impl GameTable {
    pub fn build(spec: &MarketSpec, prefs: &PreferenceProfile, space: SignalSpace) -> Result<Self> {
        prefs.check_against(spec)?;
        let n = spec.num_students;
        if n > BRUTE_FORCE_MAX_STUDENTS {
            return Err(Error::guard("students", n as u128, BRUTE_FORCE_MAX_STUDENTS as u128));
        }
        if space.size() > BRUTE_FORCE_MAX_SIGNALS {
            return Err(Error::guard("signals", space.size() as u128, BRUTE_FORCE_MAX_SIGNALS as u128));
        }
        let count = space.size().pow(n as u32);
        let payoffs = (0..count)
            .map(|code| exact_expected_payoffs(&decode(code, n, space.size()), spec, prefs, space).map(|e| e.mean))
            .collect::<Result<_>>()?;
        Ok(GameTable {
            space,
            num_students: n,
            payoffs,
        })
    }

    pub fn profiles(&self) -> impl Iterator<Item = SignalProfile> + '_ {
        (0..self.payoffs.len()).map(|c| decode(c, self.num_students, self.space.size()))
    }

    pub fn payoff(&self, signals: &[usize]) -> &[f64] {
        &self.payoffs[encode(signals, self.space.size())]
    }

    /// Profitable unilateral deviations from `signals` beyond `tol`.
    pub fn deviations(&self, signals: &[usize], tol: f64) -> Vec<Deviation> {
        let base = self.payoff(signals);
        let mut out = Vec::new();
        let mut dev = signals.to_vec();
        for i in 0..self.num_students {
            for s in 0..self.space.size() {
                if s == signals[i] {
                    continue;
                }
                dev[i] = s;
                let gain = self.payoff(&dev)[i] - base[i];
                if gain > tol {
                    out.push(Deviation { student: i, to: s, gain });
                }
            }
            dev[i] = signals[i];
        }
        out
    }
}

fn decode(mut code: usize, n: usize, s: usize) -> SignalProfile {
    let mut out = vec![0; n];
    for slot in out.iter_mut().rev() {
        *slot = code % s;
        code /= s;
    }
    out
}

fn encode(signals: &[usize], s: usize) -> usize {
    signals.iter().fold(0, |acc, &x| acc * s + x)
}

/// A profitable unilateral signal change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub student: usize,
    pub to: usize,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PureEquilibrium {
    pub signals: SignalProfile,
    pub payoffs: Vec<f64>,
}

/// Tolerance for strict profitability in the exact oracles.
pub const NASH_TOL: f64 = 1e-9;

/// Every pure Nash profile with its exact expected payoffs.
pub fn brute_force_equilibria(
    spec: &MarketSpec,
    prefs: &PreferenceProfile,
    space: SignalSpace,
) -> Result<Vec<PureEquilibrium>> {
    let table = GameTable::build(spec, prefs, space)?;
    Ok(equilibria_of(&table))
}

pub fn equilibria_of(table: &GameTable) -> Vec<PureEquilibrium> {
    table
        .profiles()
        .filter(|p| table.deviations(p, NASH_TOL).is_empty())
        .map(|p| PureEquilibrium {
            payoffs: table.payoff(&p).to_vec(),
            signals: p,
        })
        .collect()
}

/// How [`is_equilibrium`] evaluates expected payoffs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evaluator {
    /// Enumerate within-class orderings.
    Exact,
    /// Average over seeded draws, the same draws for every deviation.
    MonteCarlo { draws: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub is_equilibrium: bool,
    pub deviations: Vec<Deviation>,
}

pub fn is_equilibrium(
    signals: &[usize],
    spec: &MarketSpec,
    prefs: &PreferenceProfile,
    space: SignalSpace,
    evaluator: Evaluator,
    tol: f64,
) -> Result<Verdict> {
    prefs.check_against(spec)?;
    space.check(signals)?;
    if signals.len() != spec.num_students {
        return Err(Error::config("signal profile does not cover every student"));
    }
    let n = spec.num_students;
    let s_count = space.size();
    // gains[i][s] = expected payoff of deviating to s minus the realized one
    let gains: Vec<Vec<f64>> = match evaluator {
        Evaluator::Exact => {
            let base = exact_expected_payoffs(signals, spec, prefs, space)?.mean;
            let mut dev = signals.to_vec();
            let mut g = vec![vec![0.0; s_count]; n];
            for i in 0..n {
                for s in 0..s_count {
                    if s != signals[i] {
                        dev[i] = s;
                        g[i][s] = exact_expected_payoffs(&dev, spec, prefs, space)?.mean[i] - base[i];
                    }
                }
                dev[i] = signals[i];
            }
            g
        }
        Evaluator::MonteCarlo { draws, seed } => {
            if draws == 0 {
                return Err(Error::TooFewDraws { needed: 1, got: 0 });
            }
            let mut g = vec![vec![0.0; s_count]; n];
            let mut buf = DrawBuffers::default();
            for d in 0..draws {
                let tb = TieBreakDraw::random(n, seed, 0, d as u64);
                buf.realize(signals, s_count, &tb, spec, prefs);
                for i in 0..n {
                    for s in 0..s_count {
                        if s != signals[i] {
                            g[i][s] += deviation_utility(i, s, signals, &tb, spec, prefs)? - buf.utility()[i];
                        }
                    }
                }
            }
            for row in &mut g {
                for x in row.iter_mut() {
                    *x /= draws as f64;
                }
            }
            g
        }
    };
    let deviations: Vec<Deviation> = gains
        .iter()
        .enumerate()
        .flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|&(_, &gain)| gain > tol)
                .map(move |(s, &gain)| Deviation { student: i, to: s, gain })
        })
        .collect();
    Ok(Verdict {
        is_equilibrium: deviations.is_empty(),
        deviations,
    })
}
