//! Welfare statistics across tie-break draws, mechanism comparisons, and the
//! exact property oracles (envy, mutual swaps, Pareto improvements, run-out
//! times at deterministic outcomes).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::equilibrium::{Evaluator, MixedProfile};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::market::{
    run_out_times, Allocation, Market, MarketSpec, PreferenceProfile, RunOutTrace, SignalSpace, TieBreakDraw,
};
use crate::mechanism::{exact_expected_payoffs, market_outcomes, run_paired_sd, DrawBuffers, DRAW_CHUNK};
use crate::rng::{self, Purpose};

/// Per-student mean and standard deviation of realized utility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub samples: usize,
    /// Sample standard deviation of per-draw average utility (Monte-Carlo only).
    pub welfare_std: Option<f64>,
}

impl StudentStats {
    pub fn num_students(&self) -> usize {
        self.mean.len()
    }

    /// Standard error of each student's mean.
    pub fn std_error(&self) -> Vec<f64> {
        let root = (self.samples as f64).sqrt();
        self.std.iter().map(|s| s / root).collect()
    }

    /// Average of the per-student means.
    pub fn welfare(&self) -> f64 {
        self.mean.iter().sum::<f64>() / self.mean.len() as f64
    }

    /// Standard error of [`Self::welfare`], when known.
    pub fn welfare_se(&self) -> Option<f64> {
        self.welfare_std.map(|s| s / (self.samples as f64).sqrt())
    }

    /// Students whose utility never varied.
    pub fn zero_std_count(&self) -> usize {
        self.std.iter().filter(|&&s| s <= 1e-12).count()
    }

    pub fn write_csv(&self, path: &Path, prefs: &PreferenceProfile, signals: Option<&[usize]>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["student_id", "lambda", "gamma", "signal", "mean_utility", "std_utility"])?;
        let rel = prefs.relative();
        for i in 0..self.num_students() {
            let (l, g) = rel.map_or((String::new(), String::new()), |r| {
                (r[i].lambda.to_string(), r[i].gamma.to_string())
            });
            let s = signals.map_or(String::new(), |s| s[i].to_string());
            w.write_record([
                i.to_string(),
                l,
                g,
                s,
                self.mean[i].to_string(),
                self.std[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl StudentStats {
    /// Mean and sample standard deviation from per-draw utility rows.
    pub fn from_samples(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::TooFewDraws { needed: 2, got: rows.len() });
        }
        let n = rows[0].len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::config("utility samples cover different populations"));
        }
        let mut m = Moments::new(n + 1);
        for r in rows {
            let avg = r.iter().sum::<f64>() / n as f64;
            m.push(r.iter().copied().chain(std::iter::once(avg)));
        }
        Ok(m.into_stats())
    }

    /// Means and standard deviations from a file written by [`Self::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::config(format!("{}: missing column {name}", path.display())))
        };
        let (mc, sc) = (col("mean_utility")?, col("std_utility")?);
        let mut mean = Vec::new();
        let mut std = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |j: usize| {
                rec[j]
                    .parse::<f64>()
                    .map_err(|e| Error::config(format!("{}: bad number {:?}: {e}", path.display(), &rec[j])))
            };
            mean.push(parse(mc)?);
            std.push(parse(sc)?);
        }
        Ok(StudentStats {
            mean,
            std,
            samples: 0,
            welfare_std: None,
        })
    }
}

/// Welford accumulators, one per student.
#[derive(Debug, Clone)]
struct Moments {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(n: usize) -> Self {
        Moments {
            count: 0.0,
            mean: vec![0.0; n],
            m2: vec![0.0; n],
        }
    }

    fn push(&mut self, xs: impl IntoIterator<Item = f64>) {
        self.count += 1.0;
        for ((m, q), x) in self.mean.iter_mut().zip(&mut self.m2).zip(xs) {
            let d = x - *m;
            *m += d / self.count;
            *q += d * (x - *m);
        }
    }

    /// The last column holds per-draw average utility.
    fn into_stats(self) -> StudentStats {
        let mut std: Vec<f64> = self.m2.iter().map(|q| (q / (self.count - 1.0)).max(0.0).sqrt()).collect();
        let mut mean = self.mean;
        let welfare_std = std.pop();
        mean.pop();
        StudentStats {
            mean,
            std,
            samples: self.count as usize,
            welfare_std,
        }
    }

    fn merge(&mut self, other: Moments) {
        if other.count == 0.0 {
            return;
        }
        if self.count == 0.0 {
            *self = other;
            return;
        }
        let total = self.count + other.count;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * other.count / total;
            self.m2[i] += other.m2[i] + d * d * self.count * other.count / total;
        }
        self.count = total;
    }
}

/// Which signals the population sends in a welfare evaluation.
#[derive(Debug, Clone, Copy)]
pub enum Play<'a> {
    Pure(&'a [usize]),
    /// Signals are redrawn from the mixture on every draw.
    Mixed(&'a MixedProfile),
}

/// Monte-Carlo mean and sample standard deviation over `draws` tie-break draws.
pub fn outcome_stats(
    play: Play<'_>,
    spec: &MarketSpec,
    prefs: &PreferenceProfile,
    space: SignalSpace,
    draws: usize,
    seed: u64,
    exec: Exec,
) -> Result<StudentStats> {
    if draws < 2 {
        return Err(Error::TooFewDraws { needed: 2, got: draws });
    }
    prefs.check_against(spec)?;
    let n = spec.num_students;
    match play {
        Play::Pure(s) => {
            space.check(s)?;
            if s.len() != n {
                return Err(Error::config("signal profile does not cover every student"));
            }
        }
        Play::Mixed(m) => {
            if m.num_students() != n || m.num_signals() != space.size() {
                return Err(Error::config("mixed profile does not match the population or signal space"));
            }
        }
    }
    let moments = exec.fold_chunks(
        draws,
        DRAW_CHUNK,
        || (Moments::new(n + 1), DrawBuffers::default()),
        |(acc, buf), d| {
            let tb = TieBreakDraw::random(n, seed, 0, d as u64);
            match play {
                Play::Pure(s) => buf.realize(s, space.size(), &tb, spec, prefs),
                Play::Mixed(m) => {
                    let s = m.sample(&mut rng::stream(seed, Purpose::Stats, d as u64, 0));
                    buf.realize(&s, space.size(), &tb, spec, prefs)
                }
            }
            let u = buf.utility();
            let avg = u.iter().sum::<f64>() / n as f64;
            acc.push(u.iter().copied().chain(std::iter::once(avg)));
        },
        |(acc, _), (part, _)| acc.merge(part),
    )
    .0;
    Ok(moments.into_stats())
}

/// Exact mean and population standard deviation over every tie-break outcome.
pub fn exact_outcome_stats(
    signals: &[usize],
    spec: &MarketSpec,
    prefs: &PreferenceProfile,
    space: SignalSpace,
) -> Result<StudentStats> {
    let e = exact_expected_payoffs(signals, spec, prefs, space)?;
    Ok(StudentStats {
        mean: e.mean,
        std: e.std,
        samples: 0,
        welfare_std: None,
    })
}

/// Per-student percent changes moving to `a` from baseline `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// `None` where the baseline mean is zero.
    pub pct_mean_change: Vec<Option<f64>>,
    /// `None` where the baseline standard deviation is zero.
    pub pct_std_change: Vec<Option<f64>>,
    pub n_students: usize,
    pub count_mean_improved: usize,
    pub count_std_reduced: usize,
    pub mean_pct_mean_change: f64,
    pub mean_pct_std_change: f64,
}

impl ComparisonReport {
    pub fn frac_mean_improved(&self) -> f64 {
        self.count_mean_improved as f64 / self.n_students as f64
    }

    pub fn frac_std_reduced(&self) -> f64 {
        self.count_std_reduced as f64 / self.n_students as f64
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["student_id", "pct_mean_change", "pct_std_change"])?;
        let show = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
        for i in 0..self.n_students {
            w.write_record([i.to_string(), show(self.pct_mean_change[i]), show(self.pct_std_change[i])])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn compare(a: &StudentStats, b: &StudentStats) -> Result<ComparisonReport> {
    let n = a.num_students();
    if b.num_students() != n {
        return Err(Error::config("compared statistics cover different populations"));
    }
    let pct = |x: f64, base: f64| (base != 0.0).then(|| (x - base) / base * 100.0);
    let pct_mean_change: Vec<Option<f64>> = (0..n).map(|i| pct(a.mean[i], b.mean[i])).collect();
    let pct_std_change: Vec<Option<f64>> = (0..n).map(|i| pct(a.std[i], b.std[i])).collect();
    let avg = |v: &[Option<f64>]| {
        let defined: Vec<f64> = v.iter().flatten().copied().collect();
        if defined.is_empty() {
            0.0
        } else {
            defined.iter().sum::<f64>() / defined.len() as f64
        }
    };
    Ok(ComparisonReport {
        mean_pct_mean_change: avg(&pct_mean_change),
        mean_pct_std_change: avg(&pct_std_change),
        count_mean_improved: (0..n).filter(|&i| a.mean[i] > b.mean[i]).count(),
        count_std_reduced: (0..n).filter(|&i| a.std[i] < b.std[i]).count(),
        pct_mean_change,
        pct_std_change,
        n_students: n,
    })
}

/// `envy[i][j] = E[u_i(own bundle)] - E[u_i(j's bundle)]`.
pub fn envy_check(
    signals: &[usize],
    spec: &MarketSpec,
    prefs: &PreferenceProfile,
    space: SignalSpace,
    evaluator: Evaluator,
) -> Result<Vec<Vec<f64>>> {
    prefs.check_against(spec)?;
    space.check(signals)?;
    let n = spec.num_students;
    // cross[i][j] = E[u_i(bundle of j)]
    let mut cross = vec![vec![0.0; n]; n];
    match evaluator {
        Evaluator::Exact => {
            for market in [Market::Courses, Market::Dorms] {
                let outcomes = market_outcomes(market, signals, spec, prefs, space)?;
                let m = outcomes.len() as f64;
                for (picks, _) in &outcomes {
                    for (i, row) in cross.iter_mut().enumerate() {
                        let v = prefs.values(market, i);
                        for (j, cell) in row.iter_mut().enumerate() {
                            *cell += picks[j].iter().map(|&g| v[g]).sum::<f64>() / m;
                        }
                    }
                }
            }
        }
        Evaluator::MonteCarlo { draws, seed } => {
            if draws == 0 {
                return Err(Error::TooFewDraws { needed: 1, got: 0 });
            }
            for d in 0..draws {
                let tb = TieBreakDraw::random(n, seed, 0, d as u64);
                let a = run_paired_sd(signals, &tb, spec, prefs)?.allocation;
                for (i, row) in cross.iter_mut().enumerate() {
                    for (j, cell) in row.iter_mut().enumerate() {
                        *cell += prefs.utility(i, &a.courses[j], a.dorms[j]) / draws as f64;
                    }
                }
            }
        }
    }
    Ok((0..n).map(|i| (0..n).map(|j| cross[i][i] - cross[i][j]).collect()).collect())
}

/// Pairs in which each student strictly prefers the other's courses and dorm.
pub fn mutual_swap_check(
    allocation: &Allocation,
    prefs: &PreferenceProfile,
    pairs: &[(usize, usize)],
) -> Vec<(usize, usize)> {
    pairs
        .iter()
        .copied()
        .filter(|&(i, j)| {
            let own_i = allocation.utility(prefs, i);
            let own_j = allocation.utility(prefs, j);
            let swap_i = prefs.utility(i, &allocation.courses[j], allocation.dorms[j]);
            let swap_j = prefs.utility(j, &allocation.courses[i], allocation.dorms[i]);
            swap_i > own_i && swap_j > own_j
        })
        .collect()
}

/// Upper bound on the allocations [`pareto_improvement_search`] will enumerate.
pub const PARETO_ALLOCATIONS_LIMIT: u128 = 10_000_000;

/// Tolerance for "strictly better" in the Pareto search.
const STRICT_GAIN: f64 = 1e-9;

/// Search every feasible allocation for one that makes nobody worse off and
/// somebody strictly better off.
pub fn pareto_improvement_search(
    allocation: &Allocation,
    spec: &MarketSpec,
    prefs: &PreferenceProfile,
) -> Result<Option<Allocation>> {
    prefs.check_against(spec)?;
    let n = spec.num_students;
    let bundles = subsets_up_to(spec.num_courses(), spec.bundle_size);
    let dorms: Vec<Option<usize>> = std::iter::once(None).chain((0..spec.num_dorms()).map(Some)).collect();
    let per_student = (bundles.len() * dorms.len()) as u128;
    let total = (0..n).fold(1u128, |acc, _| acc.saturating_mul(per_student));
    if total > PARETO_ALLOCATIONS_LIMIT {
        return Err(Error::guard("candidate allocations", total, PARETO_ALLOCATIONS_LIMIT));
    }
    let current = allocation.utilities(prefs);
    // options each student weakly prefers to their current bundle
    let options: Vec<Vec<(usize, Option<usize>, f64)>> = (0..n)
        .map(|i| {
            let mut opts = Vec::new();
            for (b, courses) in bundles.iter().enumerate() {
                for &d in &dorms {
                    let u = prefs.utility(i, courses, d);
                    if u >= current[i] - STRICT_GAIN {
                        opts.push((b, d, u));
                    }
                }
            }
            opts.sort_by(|a, b| {
                let goods = |o: &(usize, Option<usize>, f64)| bundles[o.0].len() + usize::from(o.1.is_some());
                b.2.total_cmp(&a.2).then(goods(b).cmp(&goods(a)))
            });
            opts
        })
        .collect();
    let mut seats = spec.course_capacity.clone();
    let mut beds = spec.dorm_capacity.clone();
    let mut choice = vec![(0usize, None); n];
    let found = search(0, false, &options, &bundles, &current, &mut seats, &mut beds, &mut choice);
    Ok(found.then(|| Allocation {
        courses: choice.iter().map(|&(b, _)| bundles[b].clone()).collect(),
        dorms: choice.iter().map(|&(_, d)| d).collect(),
    }))
}

#[allow(clippy::too_many_arguments)]
fn search(
    i: usize,
    strict: bool,
    options: &[Vec<(usize, Option<usize>, f64)>],
    bundles: &[Vec<usize>],
    current: &[f64],
    seats: &mut [usize],
    beds: &mut [usize],
    choice: &mut [(usize, Option<usize>)],
) -> bool {
    if i == options.len() {
        return strict;
    }
    for &(b, d, u) in &options[i] {
        if bundles[b].iter().any(|&c| seats[c] == 0) || d.is_some_and(|d| beds[d] == 0) {
            continue;
        }
        for &c in &bundles[b] {
            seats[c] -= 1;
        }
        if let Some(d) = d {
            beds[d] -= 1;
        }
        choice[i] = (b, d);
        let better = strict || u > current[i] + STRICT_GAIN;
        if search(i + 1, better, options, bundles, current, seats, beds, choice) {
            return true;
        }
        for &c in &bundles[b] {
            seats[c] += 1;
        }
        if let Some(d) = d {
            beds[d] += 1;
        }
    }
    false
}

/// All subsets of `0..n` with at most `k` elements, in increasing order.
fn subsets_up_to(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..k.min(n) {
        let mut next = Vec::new();
        for s in &frontier {
            let start = s.last().map_or(0, |&x: &usize| x + 1);
            for c in start..n {
                let mut t: Vec<usize> = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Outcome variability across tie-break draws and the run-out-time check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterminismReport {
    /// Every student's bundle is the same in every draw.
    pub is_deterministic: bool,
    pub deterministic_students: usize,
    /// Every good's fill position is the same in every draw.
    pub fill_positions_constant: bool,
    /// Largest distance from a filled good's run-out time to the nearest class
    /// boundary of its market, over all draws.
    pub max_cutoff_gap: f64,
    /// `max_cutoff_gap <= 1/(2N)`; only meaningful when deterministic.
    pub fill_times_at_cutoffs: bool,
}

/// How [`determinism_check`] samples tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampling {
    /// Every within-class ordering of both markets.
    Exact,
    MonteCarlo { draws: usize, seed: u64 },
}

pub fn determinism_check(
    signals: &[usize],
    spec: &MarketSpec,
    prefs: &PreferenceProfile,
    space: SignalSpace,
    sampling: Sampling,
) -> Result<DeterminismReport> {
    prefs.check_against(spec)?;
    space.check(signals)?;
    let n = spec.num_students;
    // per market: list of (picks, trace) outcomes
    let per_market: Vec<Vec<(Vec<Vec<usize>>, RunOutTrace)>> = match sampling {
        Sampling::Exact => [Market::Courses, Market::Dorms]
            .into_iter()
            .map(|m| market_outcomes(m, signals, spec, prefs, space))
            .collect::<Result<_>>()?,
        Sampling::MonteCarlo { draws, seed } => {
            if draws < 2 {
                return Err(Error::TooFewDraws { needed: 2, got: draws });
            }
            let mut c = Vec::with_capacity(draws);
            let mut d = Vec::with_capacity(draws);
            for k in 0..draws {
                let tb = TieBreakDraw::random(n, seed, 0, k as u64);
                let out = run_paired_sd(signals, &tb, spec, prefs)?;
                c.push((out.allocation.courses, out.course_trace));
                d.push((
                    out.allocation.dorms.iter().map(|x| x.iter().copied().collect()).collect(),
                    out.dorm_trace,
                ));
            }
            vec![c, d]
        }
    };
    let mut student_fixed = vec![true; n];
    let mut fills_fixed = true;
    let mut max_gap: f64 = 0.0;
    for outcomes in &per_market {
        let (first_picks, first_trace) = &outcomes[0];
        for (picks, trace) in outcomes {
            for i in 0..n {
                let mut a = picks[i].clone();
                let mut b = first_picks[i].clone();
                a.sort_unstable();
                b.sort_unstable();
                if a != b {
                    student_fixed[i] = false;
                }
            }
            fills_fixed &= trace.fill_position == first_trace.fill_position;
            let times = run_out_times(trace, signals, space)?;
            for t in times.fill_time.iter().filter(|t| t.is_finite()) {
                let gap = times
                    .cutoff_times
                    .iter()
                    .map(|c| (t - c).abs())
                    .fold(f64::INFINITY, f64::min);
                max_gap = max_gap.max(gap);
            }
        }
    }
    let deterministic_students = student_fixed.iter().filter(|&&f| f).count();
    Ok(DeterminismReport {
        is_deterministic: deterministic_students == n,
        deterministic_students,
        fill_positions_constant: fills_fixed,
        max_cutoff_gap: max_gap,
        fill_times_at_cutoffs: max_gap <= 1.0 / (2.0 * n as f64) + 1e-12,
    })
}

/// Aggregate fields of a mechanism comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n_students: usize,
    pub frac_mean_improved: f64,
    pub mean_pct_mean_change: f64,
    pub frac_std_reduced: f64,
    pub mean_pct_std_change: f64,
    pub n_deterministic_students: usize,
    pub final_total_regret: Option<f64>,
}

impl Summary {
    pub fn new(report: &ComparisonReport, n_deterministic_students: usize, final_total_regret: Option<f64>) -> Self {
        Summary {
            n_students: report.n_students,
            frac_mean_improved: report.frac_mean_improved(),
            mean_pct_mean_change: report.mean_pct_mean_change,
            frac_std_reduced: report.frac_std_reduced(),
            mean_pct_std_change: report.mean_pct_std_change,
            n_deterministic_students,
            final_total_regret,
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        use std::io::Write;
        writeln!(f)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn motivating() -> (MarketSpec, PreferenceProfile) {
        let spec = MarketSpec::new(vec![1, 1], vec![1, 1], 1, 2).unwrap();
        let prefs = PreferenceProfile::new(
            vec![vec![0.0, 10.0], vec![0.0, 1.0]],
            vec![vec![0.0, 1.0], vec![0.0, 10.0]],
        )
        .unwrap();
        (spec, prefs)
    }

    fn two() -> SignalSpace {
        SignalSpace::new(2).unwrap()
    }

    #[test]
    fn equilibrium_stats_are_deterministic() {
        let (spec, prefs) = motivating();
        let s = outcome_stats(Play::Pure(&[1, 0]), &spec, &prefs, two(), 20, 1, Exec::Sequential).unwrap();
        assert_eq!(s.mean, vec![10.0, 10.0]);
        assert_eq!(s.std, vec![0.0, 0.0]);
        let e = exact_outcome_stats(&[1, 0], &spec, &prefs, two()).unwrap();
        assert_eq!(e.std, vec![0.0, 0.0]);
    }

    #[test]
    fn irsd_exact_stats() {
        let (spec, prefs) = motivating();
        let e = exact_outcome_stats(&[0, 0], &spec, &prefs, SignalSpace::new(1).unwrap()).unwrap();
        let four = [11.0f64, 10.0, 1.0, 0.0];
        let sd = (four.iter().map(|x| (x - 5.5).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert_abs_diff_eq!(sd, 25.25f64.sqrt(), epsilon = 1e-15);
        for i in 0..2 {
            assert_eq!(e.mean[i], 5.5);
            assert_abs_diff_eq!(e.std[i], sd, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_student_zero_std() {
        let spec = MarketSpec::new(vec![1], vec![1], 1, 1).unwrap();
        let prefs = PreferenceProfile::new(vec![vec![2.0]], vec![vec![3.0]]).unwrap();
        let s = outcome_stats(Play::Pure(&[0]), &spec, &prefs, SignalSpace::new(1).unwrap(), 5, 0, Exec::Parallel)
            .unwrap();
        assert_eq!(s.std, vec![0.0]);
        assert!(matches!(
            outcome_stats(Play::Pure(&[0]), &spec, &prefs, SignalSpace::new(1).unwrap(), 1, 0, Exec::Parallel),
            Err(Error::TooFewDraws { .. })
        ));
    }

    #[test]
    fn chunked_moments_match_two_pass() {
        let xs: Vec<f64> = (0..37).map(|i| ((i * 7919) % 101) as f64 / 3.0).collect();
        let mut a = Moments::new(1);
        let mut parts = Moments::new(1);
        for chunk in xs.chunks(5) {
            let mut m = Moments::new(1);
            for &x in chunk {
                m.push([x]);
                a.push([x]);
            }
            parts.merge(m);
        }
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert_abs_diff_eq!(parts.mean[0], mean, epsilon = 1e-12);
        assert_abs_diff_eq!(parts.m2[0] / 36.0, var, epsilon = 1e-10);
        assert_abs_diff_eq!(a.m2[0] / 36.0, var, epsilon = 1e-10);
    }

    #[test]
    fn comparison_examples() {
        let a = StudentStats {
            mean: vec![10.0, 10.0],
            std: vec![0.0, 0.0],
            samples: 0,
            welfare_std: None,
        };
        let b = StudentStats {
            mean: vec![5.5, 5.5],
            std: vec![25.25f64.sqrt(); 2],
            samples: 0,
            welfare_std: None,
        };
        let r = compare(&a, &b).unwrap();
        assert_abs_diff_eq!(r.mean_pct_mean_change, 4.5 / 5.5 * 100.0, epsilon = 1e-12);
        assert_eq!(r.mean_pct_std_change, -100.0);
        assert_eq!(r.count_mean_improved, 2);
        let same = compare(&b, &b).unwrap();
        assert_eq!(same.mean_pct_mean_change, 0.0);
        assert_eq!(same.count_mean_improved, 0);
    }

    #[test]
    fn zero_baseline_excluded_from_percentages() {
        let a = StudentStats {
            mean: vec![1.0, 2.0],
            std: vec![1.0, 1.0],
            samples: 2,
            welfare_std: None,
        };
        let b = StudentStats {
            mean: vec![0.0, 1.0],
            std: vec![0.0, 2.0],
            samples: 2,
            welfare_std: None,
        };
        let r = compare(&a, &b).unwrap();
        assert_eq!(r.pct_mean_change[0], None);
        assert_eq!(r.mean_pct_mean_change, 100.0);
        assert_eq!(r.count_mean_improved, 2);
        assert_eq!(r.mean_pct_std_change, -50.0);
    }

    #[test]
    fn no_envy_at_motivating_equilibrium() {
        let (spec, prefs) = motivating();
        let m = envy_check(&[1, 0], &spec, &prefs, two(), Evaluator::Exact).unwrap();
        // Chris: own 10 vs Doug's (c0, d1) worth 1
        assert_eq!(m[0][1], 9.0);
        assert!(m.iter().flatten().all(|&x| x >= -1e-9));
    }

    #[test]
    fn identical_students_no_envy() {
        let spec = MarketSpec::new(vec![1, 1], vec![1, 1], 1, 2).unwrap();
        let row_c = vec![1.0, 3.0];
        let row_d = vec![2.0, 0.5];
        let prefs = PreferenceProfile::new(vec![row_c.clone(), row_c], vec![row_d.clone(), row_d]).unwrap();
        let m = envy_check(&[0, 0], &spec, &prefs, SignalSpace::new(1).unwrap(), Evaluator::Exact).unwrap();
        assert!(m.iter().flatten().all(|&x| x.abs() < 1e-12));
    }

    fn outcome(c: [usize; 2], d: [usize; 2]) -> Allocation {
        Allocation {
            courses: vec![vec![c[0]], vec![c[1]]],
            dorms: vec![Some(d[0]), Some(d[1])],
        }
    }

    #[test]
    fn swap_detected_in_crossed_outcome() {
        let (_, prefs) = motivating();
        // Chris gets (c0, d1), Doug (c1, d0): both gain 9 by trading
        let crossed = outcome([0, 1], [1, 0]);
        assert_eq!(mutual_swap_check(&crossed, &prefs, &[(0, 1)]), vec![(0, 1)]);
        let aligned = outcome([1, 0], [0, 1]);
        assert!(mutual_swap_check(&aligned, &prefs, &[(0, 1)]).is_empty());
        let same = Allocation {
            courses: vec![vec![0], vec![0]],
            dorms: vec![Some(0), Some(0)],
        };
        assert!(mutual_swap_check(&same, &prefs, &[(0, 1)]).is_empty());
    }

    #[test]
    fn pareto_search_on_motivating_outcomes() {
        let (spec, prefs) = motivating();
        let crossed = outcome([0, 1], [1, 0]);
        let better = pareto_improvement_search(&crossed, &spec, &prefs).unwrap().unwrap();
        assert!(better.is_feasible(&spec));
        let (old, new) = (crossed.utilities(&prefs), better.utilities(&prefs));
        assert!(old.iter().zip(&new).all(|(o, n)| n >= o));
        assert_eq!(better, outcome([1, 0], [0, 1]));
        assert_eq!(pareto_improvement_search(&outcome([1, 0], [0, 1]), &spec, &prefs).unwrap(), None);
    }

    #[test]
    fn pareto_search_guarded() {
        let spec = MarketSpec::new(vec![1; 8], vec![1; 4], 3, 4).unwrap();
        let prefs = PreferenceProfile::new(vec![vec![1.0; 8]; 4], vec![vec![1.0; 4]; 4]).unwrap();
        let a = Allocation {
            courses: vec![vec![]; 4],
            dorms: vec![None; 4],
        };
        assert!(pareto_improvement_search(&a, &spec, &prefs).unwrap_err().is_guard());
    }

    #[test]
    fn subsets_counted() {
        assert_eq!(subsets_up_to(4, 2).len(), 11);
        assert_eq!(subsets_up_to(2, 5).len(), 4);
    }

    #[test]
    fn determinism_of_motivating_equilibrium() {
        let (spec, prefs) = motivating();
        let r = determinism_check(&[1, 0], &spec, &prefs, two(), Sampling::Exact).unwrap();
        assert!(r.is_deterministic);
        assert!(r.fill_times_at_cutoffs);
        let pooled = determinism_check(&[0, 0], &spec, &prefs, two(), Sampling::Exact).unwrap();
        assert!(!pooled.is_deterministic);
        assert_eq!(pooled.deterministic_students, 0);
    }

    #[test]
    fn samples_and_csv_roundtrip() {
        let rows = vec![vec![1.0, 4.0], vec![3.0, 4.0], vec![5.0, 4.0]];
        let s = StudentStats::from_samples(&rows).unwrap();
        assert_eq!(s.mean, vec![3.0, 4.0]);
        assert_eq!(s.std, vec![2.0, 0.0]);
        assert_eq!(s.samples, 3);
        assert_eq!(s.welfare_std, Some(1.0));
        assert!(StudentStats::from_samples(&rows[..1]).is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stats.csv");
        let (_, prefs) = motivating();
        s.write_csv(&path, &prefs, Some(&[1, 0])).unwrap();
        let back = StudentStats::read_csv(&path).unwrap();
        assert_eq!(back.mean, s.mean);
        assert_eq!(back.std, s.std);
    }
}
