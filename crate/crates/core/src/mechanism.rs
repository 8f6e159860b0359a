//! Paired serial dictatorship, its independent-RSD special case, and the
//! payoff evaluators used by the learner and the exact oracles.

use serde::{Deserialize, Serialize};

use crate::equilibrium::{learn_with_fixed_tiebreak, purify, LearnerConfig, PurityStats, PURITY_LOOSE};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::rng;
use crate::market::{
    order_for_courses, order_for_dorms, run_sd, sd_pass, Allocation, Market, MarketSpec,
    PreferenceProfile, RunOutTrace, SignalSpace, TieBreakDraw,
};

/// One signal per student.
pub type SignalProfile = Vec<usize>;

/// One entry per signal.
pub type PayoffVector = Vec<f64>;

/// Largest number of within-class orderings an exact evaluator will enumerate.
pub const EXACT_ORDERINGS_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismVariant {
    PairedSd,
    IndependentRsd,
    PairedSdTieBreakFirst,
    PairedSdHeuristic,
}

/// Joint allocation plus both run-out traces.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub allocation: Allocation,
    pub course_trace: RunOutTrace,
    pub dorm_trace: RunOutTrace,
}

fn check_inputs(
    signals: &[usize],
    tiebreak: &TieBreakDraw,
    spec: &MarketSpec,
    prefs: &PreferenceProfile,
) -> Result<()> {
    prefs.check_against(spec)?;
    if signals.len() != spec.num_students || tiebreak.len() != spec.num_students {
        return Err(Error::config(format!(
            "{} signals and {} tie-break ranks for {} students",
            signals.len(),
            tiebreak.len(),
            spec.num_students
        )));
    }
    Ok(())
}

pub fn run_paired_sd(
    signals: &[usize],
    tiebreak: &TieBreakDraw,
    spec: &MarketSpec,
    prefs: &PreferenceProfile,
) -> Result<Outcome> {
    check_inputs(signals, tiebreak, spec, prefs)?;
    let course_order = order_for_courses(signals, &tiebreak.course)?;
    let dorm_order = order_for_dorms(signals, &tiebreak.dorm)?;
    let (courses, course_trace) = run_sd(Market::Courses, &course_order, spec, prefs)?;
    let (dorm_picks, dorm_trace) = run_sd(Market::Dorms, &dorm_order, spec, prefs)?;
    Ok(Outcome {
        allocation: Allocation {
            courses,
            dorms: dorm_picks.into_iter().map(|p| p.first().copied()).collect(),
        },
        course_trace,
        dorm_trace,
    })
}

pub fn run_independent_rsd(
    tiebreak: &TieBreakDraw,
    spec: &MarketSpec,
    prefs: &PreferenceProfile,
) -> Result<Allocation> {
    let signals = vec![0; spec.num_students];
    Ok(run_paired_sd(&signals, tiebreak, spec, prefs)?.allocation)
}

/// One revealed tie-break draw and the equilibrium played against it.
#[derive(Debug, Clone, PartialEq)]
pub struct RevealedOutcome {
    pub signals: SignalProfile,
    pub allocation: Allocation,
    pub purity: PurityStats,
}

/// The tie-break-first variant: each draw is revealed before signals are
/// chosen, so the learner faces deterministic payoffs. Draw `d` learns with
/// seed `derive_seed(config.seed, d)`.
pub fn run_tiebreak_first(
    spec: &MarketSpec,
    prefs: &PreferenceProfile,
    space: SignalSpace,
    config: &LearnerConfig,
    draws: &[TieBreakDraw],
    exec: Exec,
) -> Result<Vec<RevealedOutcome>> {
    config.validate()?;
    exec.map(draws.len(), |d| {
        let cfg = LearnerConfig {
            seed: rng::derive_seed(config.seed, d as u64),
            ..config.clone()
        };
        let (mixed, _) = learn_with_fixed_tiebreak(spec, prefs, space, &cfg, &draws[d], Exec::Sequential)?;
        let (signals, purity) = purify(&mixed, PURITY_LOOSE)?;
        let allocation = run_paired_sd(&signals, &draws[d], spec, prefs)?.allocation;
        Ok(RevealedOutcome {
            signals,
            allocation,
            purity,
        })
    })
    .into_iter()
    .collect()
}

/// Signals from the log-ratio rule: the signal nearest
/// `(S-1)/2 + ln(lambda/gamma)`, clamped, half-integer ties to the lower signal.
pub fn heuristic_signals(prefs: &PreferenceProfile, space: SignalSpace) -> Result<SignalProfile> {
    let rel = prefs
        .relative()
        .ok_or_else(|| Error::config("heuristic signals need (lambda, gamma) per student"))?;
    rel.iter()
        .enumerate()
        .map(|(i, r)| {
            if !(r.lambda > 0.0 && r.gamma > 0.0) {
                return Err(Error::Domain(format!(
                    "student {i}: lambda = {}, gamma = {} must be positive",
                    r.lambda, r.gamma
                )));
            }
            Ok(heuristic_signal((r.lambda / r.gamma).ln(), space))
        })
        .collect()
}

/// Heuristic signal for a given `ln(lambda/gamma)`.
pub fn heuristic_signal(log_ratio: f64, space: SignalSpace) -> usize {
    let target = space.highest() as f64 / 2.0 + log_ratio;
    let s = (target - 0.5).ceil();
    s.clamp(0.0, space.highest() as f64) as usize
}

/// Buffers for evaluating many draws over one population without allocating.
///
/// After [`DrawBuffers::realize`] the buffers hold both orderings, the fill
/// positions, each student's realized utility and, per market, `above[key]` =
/// number of students whose priority key exceeds `key`. A student's priority
/// key is `s*N + r_c` in the course market and `(S-1-s)*N + r_d` in the dorm
/// market; larger keys pick earlier.
#[derive(Debug, Clone, Default)]
pub struct DrawBuffers {
    slot: Vec<u32>,
    course_above: Vec<u32>,
    dorm_above: Vec<u32>,
    course_order: Vec<usize>,
    dorm_order: Vec<usize>,
    course_fill: Vec<usize>,
    dorm_fill: Vec<usize>,
    utility: Vec<f64>,
}

impl DrawBuffers {
    /// Run both markets for one draw.
    pub fn realize(
        &mut self,
        signals: &[usize],
        num_signals: usize,
        tiebreak: &TieBreakDraw,
        spec: &MarketSpec,
        prefs: &PreferenceProfile,
    ) {
        let n = spec.num_students;
        let top = num_signals - 1;
        layout(
            (0..n).map(|i| signals[i] * n + tiebreak.course[i]),
            num_signals * n,
            &mut self.slot,
            &mut self.course_above,
            &mut self.course_order,
        );
        layout(
            (0..n).map(|i| (top - signals[i]) * n + tiebreak.dorm[i]),
            num_signals * n,
            &mut self.slot,
            &mut self.dorm_above,
            &mut self.dorm_order,
        );
        self.utility.clear();
        self.utility.resize(n, 0.0);
        self.course_fill.resize(spec.num_courses(), 0);
        self.dorm_fill.resize(spec.num_dorms(), 0);
        let u = &mut self.utility;
        sd_pass(Market::Courses, spec, prefs, &self.course_order, &mut self.course_fill, |i, g| {
            u[i] += prefs.course_values(i)[g]
        });
        sd_pass(Market::Dorms, spec, prefs, &self.dorm_order, &mut self.dorm_fill, |i, g| {
            u[i] += prefs.dorm_values(i)[g]
        });
    }

    pub fn utility(&self) -> &[f64] {
        &self.utility
    }

    pub fn course_fill(&self) -> &[usize] {
        &self.course_fill
    }

    pub fn dorm_fill(&self) -> &[usize] {
        &self.dorm_fill
    }

    /// Student `i`'s utility from signal `s` against the realized fill
    /// positions (everyone else's picks held fixed).
    #[inline]
    pub fn frozen_utility(
        &self,
        i: usize,
        s: usize,
        signals: &[usize],
        num_signals: usize,
        tiebreak: &TieBreakDraw,
        spec: &MarketSpec,
        prefs: &PreferenceProfile,
    ) -> f64 {
        let n = spec.num_students;
        let top = num_signals - 1;
        let own_c = signals[i] * n + tiebreak.course[i];
        let key_c = s * n + tiebreak.course[i];
        let pos_c = self.course_above[key_c] as usize - usize::from(own_c > key_c);
        let own_d = (top - signals[i]) * n + tiebreak.dorm[i];
        let key_d = (top - s) * n + tiebreak.dorm[i];
        let pos_d = self.dorm_above[key_d] as usize - usize::from(own_d > key_d);
        frozen_value(Market::Courses, i, pos_c, &self.course_fill, spec.bundle_size, prefs)
            + frozen_value(Market::Dorms, i, pos_d, &self.dorm_fill, 1, prefs)
    }
}

/// Fill `order` with students by descending key and `above[key]` with the
/// number of keys strictly greater than `key`.
fn layout(
    keys: impl Iterator<Item = usize> + Clone,
    n_keys: usize,
    slot: &mut Vec<u32>,
    above: &mut Vec<u32>,
    order: &mut Vec<usize>,
) {
    slot.clear();
    slot.resize(n_keys, u32::MAX);
    for (i, k) in keys.enumerate() {
        slot[k] = i as u32;
    }
    above.resize(n_keys, 0);
    order.clear();
    let mut count = 0u32;
    for k in (0..n_keys).rev() {
        above[k] = count;
        if slot[k] != u32::MAX {
            order.push(slot[k] as usize);
            count += 1;
        }
    }
}

#[inline]
fn frozen_value(
    market: Market,
    i: usize,
    pos: usize,
    fill: &[usize],
    k: usize,
    prefs: &PreferenceProfile,
) -> f64 {
    let values = prefs.values(market, i);
    let mut total = 0.0;
    let mut taken = 0;
    for &g in prefs.ranking(market, i) {
        if taken == k {
            break;
        }
        if fill[g as usize] > pos {
            total += values[g as usize];
            taken += 1;
        }
    }
    total
}

/// Realized utility of student `i` after changing only their signal to `s`
/// and rerunning both markets with the same tie-break ranks.
pub fn deviation_utility(
    i: usize,
    s: usize,
    signals: &[usize],
    tiebreak: &TieBreakDraw,
    spec: &MarketSpec,
    prefs: &PreferenceProfile,
) -> Result<f64> {
    let mut dev = signals.to_vec();
    dev[i] = s;
    let mut u = 0.0;
    let mut fill_c = vec![0; spec.num_courses()];
    let mut fill_d = vec![0; spec.num_dorms()];
    let oc = order_for_courses(&dev, &tiebreak.course)?;
    sd_pass(Market::Courses, spec, prefs, &oc, &mut fill_c, |j, g| {
        if j == i {
            u += prefs.course_values(i)[g]
        }
    });
    let od = order_for_dorms(&dev, &tiebreak.dorm)?;
    sd_pass(Market::Dorms, spec, prefs, &od, &mut fill_d, |j, g| {
        if j == i {
            u += prefs.dorm_values(i)[g]
        }
    });
    Ok(u)
}

/// Student `i`'s realized utility at every signal, rerunning both markets.
pub fn counterfactual_payoffs_exact(
    i: usize,
    signals: &[usize],
    tiebreak: &TieBreakDraw,
    spec: &MarketSpec,
    prefs: &PreferenceProfile,
    space: SignalSpace,
) -> Result<PayoffVector> {
    check_inputs(signals, tiebreak, spec, prefs)?;
    space.check(signals)?;
    check_student(i, spec)?;
    (0..space.size())
        .map(|s| deviation_utility(i, s, signals, tiebreak, spec, prefs))
        .collect()
}

/// Student `i`'s utility at every signal, reading availability off the
/// realized traces instead of rerunning.
pub fn counterfactual_payoffs_frozen(
    i: usize,
    outcome: &Outcome,
    signals: &[usize],
    tiebreak: &TieBreakDraw,
    spec: &MarketSpec,
    prefs: &PreferenceProfile,
    space: SignalSpace,
) -> Result<PayoffVector> {
    check_inputs(signals, tiebreak, spec, prefs)?;
    space.check(signals)?;
    check_student(i, spec)?;
    let n = spec.num_students;
    let top = space.highest();
    let course_key = |j: usize, s: usize| s * n + tiebreak.course[j];
    let dorm_key = |j: usize, s: usize| (top - s) * n + tiebreak.dorm[j];
    Ok((0..space.size())
        .map(|s| {
            let kc = course_key(i, s);
            let kd = dorm_key(i, s);
            let pos_c = (0..n).filter(|&j| j != i && course_key(j, signals[j]) > kc).count();
            let pos_d = (0..n).filter(|&j| j != i && dorm_key(j, signals[j]) > kd).count();
            frozen_value(
                Market::Courses,
                i,
                pos_c,
                &outcome.course_trace.fill_position,
                spec.bundle_size,
                prefs,
            ) + frozen_value(Market::Dorms, i, pos_d, &outcome.dorm_trace.fill_position, 1, prefs)
        })
        .collect())
}

fn check_student(i: usize, spec: &MarketSpec) -> Result<()> {
    if i >= spec.num_students {
        return Err(Error::config(format!("student {i} out of range")));
    }
    Ok(())
}

/// Mean realized utility per student over `draws` seeded tie-break draws.
pub fn expected_payoffs(
    signals: &[usize],
    spec: &MarketSpec,
    prefs: &PreferenceProfile,
    space: SignalSpace,
    draws: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<f64>> {
    if draws == 0 {
        return Err(Error::TooFewDraws { needed: 1, got: 0 });
    }
    prefs.check_against(spec)?;
    space.check(signals)?;
    if signals.len() != spec.num_students {
        return Err(Error::config("signal profile does not cover every student"));
    }
    let n = spec.num_students;
    let sums = exec.fold_chunks(
        draws,
        DRAW_CHUNK,
        || (vec![0.0; n], DrawBuffers::default()),
        |(sum, buf), d| {
            let tb = TieBreakDraw::random(n, seed, 0, d as u64);
            buf.realize(signals, space.size(), &tb, spec, prefs);
            for (s, u) in sum.iter_mut().zip(buf.utility()) {
                *s += u;
            }
        },
        |(acc, _), (part, _)| {
            for (a, p) in acc.iter_mut().zip(part) {
                *a += p;
            }
        },
    );
    Ok(sums.0.into_iter().map(|s| s / draws as f64).collect())
}

/// Draws per work chunk in Monte-Carlo loops.
pub(crate) const DRAW_CHUNK: usize = 8;

/// Every within-class ordering of one market under `signals`, as complete
/// picking orders. Each is equally likely under uniform tie-breaking.
pub fn class_orderings(market: Market, signals: &[usize], space: SignalSpace) -> Result<Vec<Vec<usize>>> {
    space.check(signals)?;
    let mut classes: Vec<Vec<usize>> = vec![Vec::new(); space.size()];
    for (i, &s) in signals.iter().enumerate() {
        classes[s].push(i);
    }
    if market == Market::Courses {
        classes.reverse();
    }
    classes.retain(|c| !c.is_empty());
    let mut total: u128 = 1;
    for c in &classes {
        for f in 2..=c.len() as u128 {
            total = total.saturating_mul(f);
        }
    }
    if total > EXACT_ORDERINGS_LIMIT {
        return Err(Error::guard("within-class orderings", total, EXACT_ORDERINGS_LIMIT));
    }
    let mut out = Vec::with_capacity(total as usize);
    let mut current = classes;
    loop {
        out.push(current.concat());
        // odometer: advance the last class that still has a next permutation
        let mut advanced = false;
        for c in current.iter_mut().rev() {
            if next_permutation(c) {
                advanced = true;
                break;
            }
            // next_permutation wrapped this class back to sorted order
        }
        if !advanced {
            break;
        }
    }
    Ok(out)
}

/// Lexicographic successor; on the last permutation, resets to sorted and returns false.
pub(crate) fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        v.reverse();
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// All equally likely outcomes of one market: per-student picks and the trace.
pub fn market_outcomes(
    market: Market,
    signals: &[usize],
    spec: &MarketSpec,
    prefs: &PreferenceProfile,
    space: SignalSpace,
) -> Result<Vec<(Vec<Vec<usize>>, RunOutTrace)>> {
    prefs.check_against(spec)?;
    if signals.len() != spec.num_students {
        return Err(Error::config("signal profile does not cover every student"));
    }
    class_orderings(market, signals, space)?
        .iter()
        .map(|order| run_sd(market, order, spec, prefs))
        .collect()
}

/// Exact per-student mean and population standard deviation of utility.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactPayoffs {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Exact expectation over tie-breaking by enumerating class orderings.
///
/// The two markets use independent permutations and utility is additive, so
/// each market is enumerated separately and the variances add.
pub fn exact_expected_payoffs(
    signals: &[usize],
    spec: &MarketSpec,
    prefs: &PreferenceProfile,
    space: SignalSpace,
) -> Result<ExactPayoffs> {
    let n = spec.num_students;
    let mut mean = vec![0.0; n];
    let mut var = vec![0.0; n];
    for market in [Market::Courses, Market::Dorms] {
        let outcomes = market_outcomes(market, signals, spec, prefs, space)?;
        let m = outcomes.len() as f64;
        let vals: Vec<Vec<f64>> = outcomes
            .iter()
            .map(|(picks, _)| {
                (0..n)
                    .map(|i| picks[i].iter().map(|&g| prefs.values(market, i)[g]).sum())
                    .collect()
            })
            .collect();
        for i in 0..n {
            let mu = vals.iter().map(|v| v[i]).sum::<f64>() / m;
            let v = vals.iter().map(|v| (v[i] - mu).powi(2)).sum::<f64>() / m;
            mean[i] += mu;
            var[i] += v;
        }
    }
    Ok(ExactPayoffs {
        mean,
        std: var.into_iter().map(f64::sqrt).collect(),
    })
}

/// Student `i`'s exact expected utility at every signal, others fixed.
pub fn exact_deviation_payoffs(
    i: usize,
    signals: &[usize],
    spec: &MarketSpec,
    prefs: &PreferenceProfile,
    space: SignalSpace,
) -> Result<PayoffVector> {
    check_student(i, spec)?;
    let mut dev = signals.to_vec();
    (0..space.size())
        .map(|s| {
            dev[i] = s;
            Ok(exact_expected_payoffs(&dev, spec, prefs, space)?.mean[i])
        })
        .collect()
}
