//! Coarse-signal optimal transport for students who share course and dorm
//! values and differ only in the relative weight `lambda` they put on courses.
//!
//! A student of type `lambda` values a course-dorm pair at
//! `lambda/(1+lambda) v(c) + 1/(1+lambda) w(d)`. A threshold mechanism with `n`
//! signals cuts the sorted types into `n` contiguous cells; signals are matched
//! to courses co-monotonically (high signal, high `v`) and to dorms
//! anti-monotonically (low signal, high `w`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::equilibrium::{learn_equilibrium, purify, PurityStats, PURITY_LOOSE};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::market::{MarketSpec, PreferenceProfile, SignalSpace, TieBreakDraw};
use crate::mechanism::{next_permutation, run_paired_sd};
use crate::scenario::{generate_scenario, PreferenceModel, ScenarioConfig};
use crate::welfare::{outcome_stats, Play};

/// Marginal constraints hold to this tolerance.
pub const MARGINAL_TOL: f64 = 1e-10;

/// Discrete distribution of `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
    lower: f64,
}

impl LambdaGrid {
    /// `lower` is the infimum of the support; it must lie below every point.
    pub fn new(points: Vec<f64>, weights: Vec<f64>, lower: f64) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::config("lambda grid needs one weight per point"));
        }
        if !(lower >= 0.0 && lower < points[0]) || points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Domain("lambda grid points must be positive and strictly increasing".into()));
        }
        if points.iter().any(|p| !p.is_finite()) || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Domain("lambda grid has a non-finite point or negative weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("lambda weights sum to {total}, not 1")));
        }
        Ok(LambdaGrid { points, weights, lower })
    }

    /// `g` equal cells on `(lo, hi]`, each represented by its right endpoint.
    pub fn uniform(lo: f64, hi: f64, g: usize) -> Result<Self> {
        if g == 0 || !(lo < hi) {
            return Err(Error::config("uniform grid needs lo < hi and at least one cell"));
        }
        let points = (1..=g).map(|j| lo + (hi - lo) * (j as f64 / g as f64)).collect();
        LambdaGrid::new(points, vec![1.0 / g as f64; g], lo)
    }

    /// `g` equal-weight points `exp(step * (j - (g-1)/2))`, symmetric under
    /// `lambda -> 1/lambda`.
    pub fn log_symmetric(g: usize, step: f64) -> Result<Self> {
        let mid = (g as f64 - 1.0) / 2.0;
        let points = (0..g).map(|j| (step * (j as f64 - mid)).exp()).collect();
        LambdaGrid::new(points, vec![1.0 / g.max(1) as f64; g], 0.0)
    }

    /// Empirical distribution of the sample.
    pub fn from_samples(lambdas: &[f64]) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::config("no lambda samples"));
        }
        let mut sorted = lambdas.to_vec();
        sorted.sort_by(f64::total_cmp);
        let w = 1.0 / sorted.len() as f64;
        let mut points: Vec<f64> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for l in sorted {
            if points.last() == Some(&l) {
                *weights.last_mut().unwrap() += w;
            } else {
                points.push(l);
                weights.push(w);
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|x| *x /= total);
        LambdaGrid::new(points, weights, 0.0)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    /// Number of points at or below `t`.
    fn cut(&self, t: f64) -> usize {
        self.points.partition_point(|&p| p <= t)
    }

    /// The threshold value that puts exactly the first `k` points below it.
    fn threshold_at(&self, k: usize) -> f64 {
        if k == 0 {
            self.lower
        } else {
            self.points[k - 1]
        }
    }
}

fn course_weight(lambda: f64) -> f64 {
    lambda / (1.0 + lambda)
}

fn dorm_weight(lambda: f64) -> f64 {
    1.0 / (1.0 + lambda)
}

/// Interior cut points between consecutive signals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds(Vec<f64>);

impl Thresholds {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|t| !t.is_finite()) || values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Domain("thresholds must be finite and nondecreasing".into()));
        }
        Ok(Thresholds(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn num_signals(&self) -> usize {
        self.0.len() + 1
    }

    fn cuts(&self, grid: &LambdaGrid) -> Result<Vec<usize>> {
        let hi = grid.points[grid.len() - 1];
        if self.0.iter().any(|&t| t < grid.lower || t > hi) {
            return Err(Error::Domain(format!(
                "thresholds must lie in [{}, {hi}]",
                grid.lower
            )));
        }
        Ok(self.0.iter().map(|&t| grid.cut(t)).collect())
    }

    fn from_cuts(grid: &LambdaGrid, cuts: &[usize]) -> Self {
        Thresholds(cuts.iter().map(|&k| grid.threshold_at(k)).collect())
    }
}

/// Atoms of course or dorm quality, sorted by decreasing value, total mass 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodsDistribution {
    values: Vec<f64>,
    masses: Vec<f64>,
}

impl GoodsDistribution {
    pub fn new(values: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != masses.len() {
            return Err(Error::config("goods distribution needs one mass per value"));
        }
        if values.iter().any(|v| !v.is_finite()) || masses.iter().any(|m| !(*m >= 0.0)) {
            return Err(Error::Domain("goods distribution has a non-finite value or negative mass".into()));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > MARGINAL_TOL {
            return Err(Error::Domain(format!("goods masses sum to {total}, not 1")));
        }
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        Ok(GoodsDistribution {
            values: idx.iter().map(|&i| values[i]).collect(),
            masses: idx.iter().map(|&i| masses[i]).collect(),
        })
    }

    /// Capacities per student. The best `n` units are kept; a shortfall becomes
    /// a zero-value atom (no assignment).
    pub fn from_capacities(values: &[f64], capacities: &[usize], n: usize) -> Result<Self> {
        if values.len() != capacities.len() || n == 0 {
            return Err(Error::config("capacities and values differ in length"));
        }
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        let mut left = n;
        let mut vals = Vec::new();
        let mut units = Vec::new();
        for i in idx {
            let take = capacities[i].min(left);
            if take > 0 {
                vals.push(values[i]);
                units.push(take);
                left -= take;
            }
        }
        if left > 0 {
            vals.push(0.0);
            units.push(left);
        }
        let masses = units.iter().map(|&u| u as f64 / n as f64).collect();
        GoodsDistribution::new(vals, masses)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.masses).map(|(v, m)| v * m).sum()
    }
}

/// `u -> integral of the decreasing quantile function over [0, u]`.
#[derive(Debug, Clone)]
struct Stack {
    ends: Vec<f64>,
    prefix: Vec<f64>,
    values: Vec<f64>,
}

impl Stack {
    fn new(q: &GoodsDistribution) -> Self {
        let mut ends = Vec::with_capacity(q.values.len());
        let mut prefix = Vec::with_capacity(q.values.len());
        let (mut e, mut p) = (0.0, 0.0);
        for (v, m) in q.values.iter().zip(&q.masses) {
            e += m;
            p += v * m;
            ends.push(e);
            prefix.push(p);
        }
        Stack {
            ends,
            prefix,
            values: q.values.clone(),
        }
    }

    fn integral(&self, u: f64) -> f64 {
        let j = self.ends.partition_point(|&e| e <= u);
        let (start, base) = if j == 0 {
            (0.0, 0.0)
        } else {
            (self.ends[j - 1], self.prefix[j - 1])
        };
        match self.values.get(j) {
            Some(v) => base + (u - start).max(0.0) * v,
            None => base,
        }
    }
}

/// The three couplings of a threshold mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    /// `x[g][s]`: mass of type `g` sending signal `s`.
    pub x: Vec<Vec<f64>>,
    /// `y[s][c]`: mass of signal `s` matched to course atom `c`.
    pub y: Vec<Vec<f64>>,
    /// `z[s][d]`: mass of signal `s` matched to dorm atom `d`.
    pub z: Vec<Vec<f64>>,
}

impl TransportPlan {
    pub fn signal_masses(&self) -> Vec<f64> {
        column_sums(&self.x)
    }

    /// Signals nobody sends.
    pub fn empty_signals(&self) -> Vec<usize> {
        self.signal_masses()
            .iter()
            .enumerate()
            .filter(|(_, &m)| m <= MARGINAL_TOL)
            .map(|(s, _)| s)
            .collect()
    }

    /// Largest violation of any marginal constraint.
    pub fn marginal_error(&self, grid: &LambdaGrid, qc: &GoodsDistribution, qd: &GoodsDistribution) -> f64 {
        let masses = self.signal_masses();
        let row_sums = |m: &[Vec<f64>]| m.iter().map(|r| r.iter().sum::<f64>()).collect::<Vec<_>>();
        let gap = |a: &[f64], b: &[f64]| {
            if a.len() != b.len() {
                return f64::INFINITY;
            }
            a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        };
        [
            gap(&row_sums(&self.x), &grid.weights),
            gap(&row_sums(&self.y), &masses),
            gap(&row_sums(&self.z), &masses),
            gap(&column_sums(&self.y), &qc.masses),
            gap(&column_sums(&self.z), &qd.masses),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn check(&self, grid: &LambdaGrid, qc: &GoodsDistribution, qd: &GoodsDistribution) -> Result<()> {
        let err = self.marginal_error(grid, qc, qd);
        if err > MARGINAL_TOL {
            return Err(Error::Domain(format!("transport marginals off by {err:e}")));
        }
        Ok(())
    }
}

fn column_sums(m: &[Vec<f64>]) -> Vec<f64> {
    let cols = m.first().map_or(0, Vec::len);
    (0..cols).map(|j| m.iter().map(|r| r[j]).sum()).collect()
}

/// Assign every grid point to its signal cell; a point equal to a threshold
/// goes to the lower signal.
pub fn build_x(thresholds: &Thresholds, grid: &LambdaGrid, n: usize) -> Result<Vec<Vec<f64>>> {
    if thresholds.num_signals() != n {
        return Err(Error::config(format!(
            "{} thresholds do not define {n} signals",
            thresholds.values().len()
        )));
    }
    let cuts = thresholds.cuts(grid)?;
    let mut x = vec![vec![0.0; n]; grid.len()];
    for (g, row) in x.iter_mut().enumerate() {
        let s = cuts.iter().filter(|&&k| k <= g).count();
        row[s] = grid.weights[g];
    }
    Ok(x)
}

/// North-west-corner coupling of `rows` against `cols`, both in stacking order.
fn north_west(rows: &[f64], cols: &[f64]) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; cols.len()]; rows.len()];
    let mut r = rows.to_vec();
    let mut c = cols.to_vec();
    let (mut i, mut j) = (0, 0);
    while i < r.len() && j < c.len() {
        let t = r[i].min(c[j]);
        out[i][j] += t;
        r[i] -= t;
        c[j] -= t;
        if r[i] <= c[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// Quantile couplings: the highest signal takes the best courses, the lowest
/// signal takes the best dorms.
pub fn comonotone_couplings(
    masses: &[f64],
    qc: &GoodsDistribution,
    qd: &GoodsDistribution,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let total: f64 = masses.iter().sum();
    if masses.iter().any(|m| !(*m >= 0.0)) || (total - 1.0).abs() > MARGINAL_TOL {
        return Err(Error::Domain(format!("signal masses sum to {total}, not 1")));
    }
    let reversed: Vec<f64> = masses.iter().rev().copied().collect();
    let mut y = north_west(&reversed, &qc.masses);
    y.reverse();
    let z = north_west(masses, &qd.masses);
    Ok((y, z))
}

/// The full plan for a threshold vector, with marginals verified.
pub fn transport_plan(
    thresholds: &Thresholds,
    grid: &LambdaGrid,
    qc: &GoodsDistribution,
    qd: &GoodsDistribution,
) -> Result<TransportPlan> {
    let x = build_x(thresholds, grid, thresholds.num_signals())?;
    let (y, z) = comonotone_couplings(&column_sums(&x), qc, qd)?;
    let plan = TransportPlan { x, y, z };
    plan.check(grid, qc, qd)?;
    Ok(plan)
}

/// Expected utility per student under the plan.
pub fn plan_objective(plan: &TransportPlan, grid: &LambdaGrid, qc: &GoodsDistribution, qd: &GoodsDistribution) -> f64 {
    let masses = plan.signal_masses();
    let mut total = 0.0;
    for (s, &m) in masses.iter().enumerate() {
        if m <= 0.0 {
            continue;
        }
        let (mut a, mut b) = (0.0, 0.0);
        for (g, row) in plan.x.iter().enumerate() {
            a += row[s] * course_weight(grid.points[g]);
            b += row[s] * dorm_weight(grid.points[g]);
        }
        let ev: f64 = plan.y[s].iter().zip(&qc.values).map(|(p, v)| p * v).sum::<f64>() / m;
        let ew: f64 = plan.z[s].iter().zip(&qd.values).map(|(p, w)| p * w).sum::<f64>() / m;
        total += a * ev + b * ew;
    }
    total
}

pub fn welfare_objective(
    thresholds: &Thresholds,
    grid: &LambdaGrid,
    qc: &GoodsDistribution,
    qd: &GoodsDistribution,
) -> Result<f64> {
    let plan = transport_plan(thresholds, grid, qc, qd)?;
    Ok(plan_objective(&plan, grid, qc, qd))
}

/// Prefix sums for evaluating threshold vectors by cut index.
#[derive(Debug, Clone)]
struct Problem {
    mass: Vec<f64>,
    course: Vec<f64>,
    dorm: Vec<f64>,
    vc: Stack,
    wd: Stack,
}

impl Problem {
    fn new(grid: &LambdaGrid, qc: &GoodsDistribution, qd: &GoodsDistribution) -> Self {
        let prefix = |f: &dyn Fn(usize) -> f64| {
            let mut out = Vec::with_capacity(grid.len() + 1);
            let mut acc = 0.0;
            out.push(0.0);
            for g in 0..grid.len() {
                acc += f(g);
                out.push(acc);
            }
            out
        };
        Problem {
            mass: prefix(&|g| grid.weights[g]),
            course: prefix(&|g| grid.weights[g] * course_weight(grid.points[g])),
            dorm: prefix(&|g| grid.weights[g] * dorm_weight(grid.points[g])),
            vc: Stack::new(qc),
            wd: Stack::new(qd),
        }
    }

    fn grid_len(&self) -> usize {
        self.mass.len() - 1
    }

    /// Cell boundaries `0 = k_{-1} <= k_0 <= ... <= k_{n-2} <= k_{n-1} = G`.
    fn bounds(&self, cuts: &[usize], s: usize) -> (usize, usize) {
        let lo = if s == 0 { 0 } else { cuts[s - 1] };
        let hi = cuts.get(s).copied().unwrap_or(self.grid_len());
        (lo, hi)
    }

    /// `(mass, E[v | s], E[w | s])`.
    fn cell(&self, cuts: &[usize], s: usize) -> (f64, f64, f64) {
        let (lo, hi) = self.bounds(cuts, s);
        let total = self.mass[self.grid_len()];
        let (flo, fhi) = (self.mass[lo], self.mass[hi]);
        let m = fhi - flo;
        if m <= 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let v = self.vc.integral(total - flo) - self.vc.integral(total - fhi);
        let w = self.wd.integral(fhi) - self.wd.integral(flo);
        (m, v / m, w / m)
    }

    fn objective(&self, cuts: &[usize]) -> f64 {
        (0..=cuts.len())
            .map(|s| {
                let (lo, hi) = self.bounds(cuts, s);
                self.span_value(lo, hi)
            })
            .sum()
    }

    /// Contribution of a cell covering grid points `lo..hi`.
    fn span_value(&self, lo: usize, hi: usize) -> f64 {
        let total = self.mass[self.grid_len()];
        let (flo, fhi) = (self.mass[lo], self.mass[hi]);
        let m = fhi - flo;
        if m <= 0.0 {
            return 0.0;
        }
        let v = self.vc.integral(total - flo) - self.vc.integral(total - fhi);
        let w = self.wd.integral(fhi) - self.wd.integral(flo);
        ((self.course[hi] - self.course[lo]) * v + (self.dorm[hi] - self.dorm[lo]) * w) / m
    }

    /// Exact lattice optimum by dynamic programming over the last cut.
    fn best_cuts(&self, n: usize, exec: Exec) -> Vec<usize> {
        let g = self.grid_len();
        let mut value: Vec<f64> = (0..=g).map(|hi| self.span_value(0, hi)).collect();
        let mut argmax: Vec<Vec<usize>> = Vec::with_capacity(n.saturating_sub(1));
        for _ in 1..n {
            let step: Vec<(f64, usize)> = exec.map(g + 1, |hi| {
                let mut best = (f64::NEG_INFINITY, 0);
                for lo in 0..=hi {
                    let o = value[lo] + self.span_value(lo, hi);
                    if o > best.0 {
                        best = (o, lo);
                    }
                }
                best
            });
            value = step.iter().map(|b| b.0).collect();
            argmax.push(step.iter().map(|b| b.1).collect());
        }
        let mut cuts = vec![0; n.saturating_sub(1)];
        let mut hi = g;
        for (i, arg) in argmax.iter().enumerate().rev() {
            hi = arg[hi];
            cuts[i] = hi;
        }
        cuts
    }

    /// Best gain from moving one threshold by one grid point, per threshold.
    fn residuals(&self, cuts: &[usize]) -> Vec<f64> {
        let base = self.objective(cuts);
        let mut trial = cuts.to_vec();
        (0..cuts.len())
            .map(|i| {
                let lo = if i == 0 { 0 } else { cuts[i - 1] };
                let hi = cuts.get(i + 1).copied().unwrap_or(self.grid_len());
                let mut best: f64 = 0.0;
                for k in [cuts[i].wrapping_sub(1), cuts[i] + 1] {
                    if k >= lo && k <= hi {
                        trial[i] = k;
                        best = best.max(self.objective(&trial) - base);
                    }
                }
                trial[i] = cuts[i];
                best
            })
            .collect()
    }
}

/// Result of a threshold optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportSolution {
    pub thresholds: Thresholds,
    /// Grid points below each threshold.
    pub cuts: Vec<usize>,
    pub masses: Vec<f64>,
    /// `None` for signals with no mass.
    pub expected_course_value: Vec<Option<f64>>,
    pub expected_dorm_value: Vec<Option<f64>>,
    pub objective: f64,
    /// Per threshold, the largest objective gain from a one-point move.
    pub foc_residuals: Vec<f64>,
    /// Per threshold, `u(s+1) - u(s)` for the highest type in the lower cell.
    pub indifference_gaps: Vec<Option<f64>>,
    pub sweeps: usize,
    pub converged: bool,
    /// The exhaustive lattice optimum, when the guard allowed computing it.
    pub oracle: Option<OracleResult>,
    /// The exhaustive optimum beat coordinate ascent and was adopted.
    pub fallback_used: bool,
}

impl TransportSolution {
    pub fn max_residual(&self) -> f64 {
        self.foc_residuals.iter().copied().fold(0.0, f64::max)
    }

    /// Every signal has mass and every threshold lies strictly inside the grid.
    pub fn is_interior(&self, grid: &LambdaGrid) -> bool {
        self.masses.iter().all(|&m| m > MARGINAL_TOL) && self.cuts.iter().all(|&k| k > 0 && k < grid.len())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub thresholds: Thresholds,
    pub cuts: Vec<usize>,
    pub objective: f64,
    pub evaluations: u128,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_sweeps: usize,
    /// Run the exhaustive search when guarded and adopt it if it is better.
    pub fallback: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-8,
            max_sweeps: 200,
            fallback: true,
        }
    }
}

/// Lattice optimum by dynamic programming over cells, then coordinate ascent
/// sweeps (each moves every threshold to its best position between its
/// neighbours) until a sweep changes nothing.
pub fn solve_thresholds(
    grid: &LambdaGrid,
    n: usize,
    qc: &GoodsDistribution,
    qd: &GoodsDistribution,
    options: SolveOptions,
    exec: Exec,
) -> Result<TransportSolution> {
    if n == 0 {
        return Err(Error::config("need at least one signal"));
    }
    let p = Problem::new(grid, qc, qd);
    let g = grid.len();
    let mut cuts = p.best_cuts(n, exec);
    let mut sweeps = 0;
    let mut current = p.objective(&cuts);
    while sweeps < options.max_sweeps {
        sweeps += 1;
        let mut moved = false;
        for i in 0..cuts.len() {
            let lo = if i == 0 { 0 } else { cuts[i - 1] };
            let hi = cuts.get(i + 1).copied().unwrap_or(g);
            let mut trial = cuts.clone();
            let mut best = (current, cuts[i]);
            for k in lo..=hi {
                trial[i] = k;
                let o = p.objective(&trial);
                if o > best.0 {
                    best = (o, k);
                }
            }
            if best.1 != cuts[i] {
                cuts[i] = best.1;
                current = best.0;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    let mut residuals = p.residuals(&cuts);
    let mut converged = residuals.iter().all(|&r| r <= options.tol);
    let mut oracle = None;
    let mut fallback_used = false;
    if options.fallback && n > 1 && lattice_size(g, n) <= GRID_SEARCH_LIMIT {
        let o = grid_search_oracle(grid, n, qc, qd, exec)?;
        if o.objective > current + options.tol {
            cuts = o.cuts.clone();
            current = o.objective;
            residuals = p.residuals(&cuts);
            converged = residuals.iter().all(|&r| r <= options.tol);
            fallback_used = true;
        }
        oracle = Some(o);
    }
    let cells: Vec<(f64, f64, f64)> = (0..n).map(|s| p.cell(&cuts, s)).collect();
    let thresholds = Thresholds::from_cuts(grid, &cuts);
    let plan = transport_plan(&thresholds, grid, qc, qd)?;
    debug_assert!((plan_objective(&plan, grid, qc, qd) - current).abs() <= 1e-9 * (1.0 + current.abs()));
    let indifference_gaps = (0..cuts.len())
        .map(|i| {
            let (lo_cell, hi_cell) = (cells[i], cells[i + 1]);
            (cuts[i] > 0 && lo_cell.0 > 0.0 && hi_cell.0 > 0.0).then(|| {
                let l = grid.points[cuts[i] - 1];
                let u = |c: (f64, f64, f64)| course_weight(l) * c.1 + dorm_weight(l) * c.2;
                u(hi_cell) - u(lo_cell)
            })
        })
        .collect();
    Ok(TransportSolution {
        thresholds,
        masses: cells.iter().map(|c| c.0).collect(),
        expected_course_value: cells.iter().map(|c| (c.0 > 0.0).then_some(c.1)).collect(),
        expected_dorm_value: cells.iter().map(|c| (c.0 > 0.0).then_some(c.2)).collect(),
        cuts,
        objective: current,
        foc_residuals: residuals,
        indifference_gaps,
        sweeps,
        converged,
        oracle,
        fallback_used,
    })
}

/// Largest number of threshold vectors [`grid_search_oracle`] evaluates.
pub const GRID_SEARCH_LIMIT: u128 = 1_000_000;

/// Nondecreasing vectors of `n-1` cuts from `0..=g`.
pub fn lattice_size(g: usize, n: usize) -> u128 {
    binomial((g + n - 1) as u128, (n - 1) as u128)
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n.saturating_sub(k));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Exhaustive search over thresholds placed at grid points (or the infimum).
/// Ties go to the lexicographically smallest cut vector.
pub fn grid_search_oracle(
    grid: &LambdaGrid,
    n: usize,
    qc: &GoodsDistribution,
    qd: &GoodsDistribution,
    exec: Exec,
) -> Result<OracleResult> {
    if n < 2 {
        return Err(Error::config("grid search needs at least two signals"));
    }
    let g = grid.len();
    let evaluations = lattice_size(g, n);
    if evaluations > GRID_SEARCH_LIMIT {
        return Err(Error::guard("threshold lattice points", evaluations, GRID_SEARCH_LIMIT));
    }
    let p = Problem::new(grid, qc, qd);
    // split on the first cut; the rest is enumerated in order
    let best_per_first: Vec<(f64, Vec<usize>)> = exec.map(g + 1, |k0| {
        let mut cuts = vec![k0; n - 1];
        let mut best = (f64::NEG_INFINITY, cuts.clone());
        loop {
            let o = p.objective(&cuts);
            if o > best.0 {
                best = (o, cuts.clone());
            }
            // odometer over cuts[1..], nondecreasing
            let mut i = n - 2;
            loop {
                if i == 0 {
                    return best;
                }
                if cuts[i] < g {
                    cuts[i] += 1;
                    for j in i + 1..n - 1 {
                        cuts[j] = cuts[i];
                    }
                    break;
                }
                i -= 1;
            }
        }
    });
    let (objective, cuts) = best_per_first
        .into_iter()
        .reduce(|a, b| if b.0 > a.0 { b } else { a })
        .expect("at least one lattice point");
    Ok(OracleResult {
        thresholds: Thresholds::from_cuts(grid, &cuts),
        cuts,
        objective,
        evaluations,
    })
}

/// Outcome of comparing the quantile coupling against enumerated alternatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingVerdict {
    pub comonotone: f64,
    pub anti_monotone: f64,
    pub best_alternative: f64,
    pub enumerated: usize,
    pub is_optimal: bool,
}

/// Largest side [`comonotone_optimality_check`] enumerates.
pub const COUPLING_MAX_ATOMS: usize = 7;

/// Course-side value of every north-west-corner coupling obtained by
/// reordering signals and course atoms, against the co-monotone one.
pub fn comonotone_optimality_check(
    x: &[Vec<f64>],
    grid: &LambdaGrid,
    qc: &GoodsDistribution,
) -> Result<CouplingVerdict> {
    if x.len() != grid.len() {
        return Err(Error::config("type coupling does not match the grid"));
    }
    let n = x.first().map_or(0, Vec::len);
    // per nonempty signal: (mass, mean course weight), in signal order
    let rows: Vec<(f64, f64)> = (0..n)
        .filter_map(|s| {
            let m: f64 = x.iter().map(|r| r[s]).sum();
            let a: f64 = x.iter().zip(&grid.points).map(|(r, &l)| r[s] * course_weight(l)).sum();
            (m > MARGINAL_TOL).then(|| (m, a / m))
        })
        .collect();
    let cols: Vec<(f64, f64)> = qc
        .masses
        .iter()
        .zip(&qc.values)
        .filter(|(m, _)| **m > MARGINAL_TOL)
        .map(|(&m, &v)| (m, v))
        .collect();
    for (side, len) in [("signal atoms", rows.len()), ("course atoms", cols.len())] {
        if len > COUPLING_MAX_ATOMS {
            return Err(Error::guard(side, len as u128, COUPLING_MAX_ATOMS as u128));
        }
    }
    let value = |row_order: &[usize], col_order: &[usize]| {
        let rm: Vec<f64> = row_order.iter().map(|&i| rows[i].0).collect();
        let cm: Vec<f64> = col_order.iter().map(|&j| cols[j].0).collect();
        let plan = north_west(&rm, &cm);
        let mut total = 0.0;
        for (pi, &i) in row_order.iter().enumerate() {
            for (pj, &j) in col_order.iter().enumerate() {
                total += plan[pi][pj] * rows[i].1 * cols[j].1;
            }
        }
        total
    };
    let high_first: Vec<usize> = (0..rows.len()).rev().collect();
    let best_first: Vec<usize> = (0..cols.len()).collect();
    let comonotone = value(&high_first, &best_first);
    let low_first: Vec<usize> = (0..rows.len()).collect();
    let anti_monotone = value(&low_first, &best_first);
    let mut best_alternative = f64::NEG_INFINITY;
    let mut enumerated = 0;
    let mut r: Vec<usize> = (0..rows.len()).collect();
    loop {
        let mut c: Vec<usize> = (0..cols.len()).collect();
        loop {
            best_alternative = best_alternative.max(value(&r, &c));
            enumerated += 1;
            if !next_permutation(&mut c) {
                break;
            }
        }
        if !next_permutation(&mut r) {
            break;
        }
    }
    Ok(CouplingVerdict {
        comonotone,
        anti_monotone,
        best_alternative,
        enumerated,
        is_optimal: comonotone >= best_alternative - 1e-12 * (1.0 + comonotone.abs()),
    })
}

/// Simulated paired serial dictatorship against the threshold optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosscheckReport {
    pub num_students: usize,
    pub num_signals: usize,
    pub signals: Vec<usize>,
    pub purity: Option<PurityStats>,
    pub optimum: TransportSolution,
    pub simulated_welfare: f64,
    pub simulated_se: f64,
    pub irsd_welfare: f64,
    pub irsd_se: f64,
    /// Objective of the partition the learned signals induce, when they are
    /// monotone in `lambda`.
    pub equilibrium_objective: Option<f64>,
    pub simulated_masses: Vec<f64>,
    pub simulated_course_value: Vec<Option<f64>>,
    pub simulated_dorm_value: Vec<Option<f64>>,
    /// Students whose mean utility falls more than 3 standard errors below iRSD.
    pub students_below_irsd: Vec<usize>,
}

impl CrosscheckReport {
    pub fn welfare_ratio(&self) -> f64 {
        self.simulated_welfare / self.optimum.objective
    }

    pub fn below_optimum(&self) -> bool {
        self.simulated_welfare <= self.optimum.objective + 3.0 * self.simulated_se
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }
}

/// Learn an equilibrium of a homogeneous single-course scenario, simulate it
/// and iRSD, and compare both with the transport optimum on the empirical
/// `lambda` distribution.
#[derive(Debug, Clone)]
pub struct HomogeneousInstance {
    pub spec: MarketSpec,
    pub prefs: PreferenceProfile,
    /// `lambda / gamma` per student.
    pub lambdas: Vec<f64>,
    /// Empirical distribution of the generated students' `lambda`.
    pub grid: LambdaGrid,
    pub courses: GoodsDistribution,
    pub dorms: GoodsDistribution,
}

/// Generate a homogeneous single-course scenario and its transport inputs.
pub fn homogeneous_instance(cfg: &ScenarioConfig) -> Result<HomogeneousInstance> {
    let PreferenceModel::Homogeneous {
        course_values,
        dorm_values,
        ..
    } = &cfg.preferences
    else {
        return Err(Error::config("transport needs a homogeneous preference model"));
    };
    if cfg.bundle_size != 1 {
        return Err(Error::config("transport needs bundle_size = 1"));
    }
    let (spec, prefs) = generate_scenario(cfg)?;
    let n = spec.num_students;
    let rel = prefs.relative().expect("homogeneous profiles carry weights");
    let lambdas: Vec<f64> = rel.iter().map(|r| r.lambda / r.gamma).collect();
    let grid = LambdaGrid::from_samples(&lambdas)?;
    let courses = GoodsDistribution::from_capacities(course_values, &spec.course_capacity, n)?;
    let dorms = GoodsDistribution::from_capacities(dorm_values, &spec.dorm_capacity, n)?;
    Ok(HomogeneousInstance {
        spec,
        prefs,
        lambdas,
        grid,
        courses,
        dorms,
    })
}

pub fn optimum_crosscheck(cfg: &ScenarioConfig, exec: Exec) -> Result<CrosscheckReport> {
    let HomogeneousInstance {
        spec,
        prefs,
        lambdas,
        grid,
        courses: qc,
        dorms: qd,
    } = homogeneous_instance(cfg)?;
    let PreferenceModel::Homogeneous {
        course_values,
        dorm_values,
        ..
    } = &cfg.preferences
    else {
        unreachable!()
    };
    let n = spec.num_students;
    let space = cfg.signal_space();
    let optimum = solve_thresholds(&grid, space.size(), &qc, &qd, SolveOptions::default(), exec)?;

    let (signals, purity) = if space.size() > 1 {
        let (mixed, _) = learn_equilibrium(&spec, &prefs, space, &cfg.learner_config(), exec)?;
        let (s, p) = purify(&mixed, PURITY_LOOSE)?;
        (s, Some(p))
    } else {
        (vec![0; n], None)
    };
    let seed = cfg.stats_seed();
    let psd = outcome_stats(Play::Pure(&signals), &spec, &prefs, space, cfg.stat_draws, seed, exec)?;
    let one = SignalSpace::new(1)?;
    let irsd = outcome_stats(Play::Pure(&vec![0; n]), &spec, &prefs, one, cfg.stat_draws, seed, exec)?;
    let students_below_irsd = (0..n)
        .filter(|&i| {
            let se = ((psd.std[i].powi(2) + irsd.std[i].powi(2)) / cfg.stat_draws as f64).sqrt();
            psd.mean[i] < irsd.mean[i] - 3.0 * se
        })
        .collect();

    // per-signal course and dorm values actually received
    let s_count = space.size();
    let mut counts = vec![0usize; s_count];
    for &s in &signals {
        counts[s] += 1;
    }
    let mut course_sum = vec![0.0; s_count];
    let mut dorm_sum = vec![0.0; s_count];
    for d in 0..cfg.stat_draws {
        let tb = TieBreakDraw::random(n, seed, 0, d as u64);
        let a = run_paired_sd(&signals, &tb, &spec, &prefs)?.allocation;
        for i in 0..n {
            course_sum[signals[i]] += a.courses[i].iter().map(|&c| course_values[c]).sum::<f64>();
            dorm_sum[signals[i]] += a.dorms[i].map_or(0.0, |d| dorm_values[d]);
        }
    }
    let per_signal = |sum: &[f64]| -> Vec<Option<f64>> {
        (0..s_count)
            .map(|s| (counts[s] > 0).then(|| sum[s] / (counts[s] * cfg.stat_draws) as f64))
            .collect()
    };

    // signals nondecreasing in lambda define a threshold partition
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| lambdas[i].total_cmp(&lambdas[j]));
    let monotone = order.windows(2).all(|w| signals[w[0]] <= signals[w[1]])
        && order
            .windows(2)
            .all(|w| lambdas[w[0]] != lambdas[w[1]] || signals[w[0]] == signals[w[1]]);
    let equilibrium_objective = if monotone {
        let t: Vec<f64> = (1..s_count)
            .map(|s| {
                order
                    .iter()
                    .rev()
                    .find(|&&i| signals[i] < s)
                    .map_or(grid.lower(), |&i| lambdas[i])
            })
            .collect();
        Some(welfare_objective(&Thresholds::new(t)?, &grid, &qc, &qd)?)
    } else {
        None
    };

    Ok(CrosscheckReport {
        num_students: n,
        num_signals: s_count,
        purity,
        optimum,
        simulated_welfare: psd.welfare(),
        simulated_se: psd.welfare_se().unwrap_or(0.0),
        irsd_welfare: irsd.welfare(),
        irsd_se: irsd.welfare_se().unwrap_or(0.0),
        equilibrium_objective,
        simulated_masses: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        simulated_course_value: per_signal(&course_sum),
        simulated_dorm_value: per_signal(&dorm_sum),
        students_below_irsd,
        signals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn figure_grid() -> LambdaGrid {
        LambdaGrid::uniform(0.0, 1.0, 6).unwrap()
    }

    fn tiers(values: &[f64]) -> GoodsDistribution {
        let m = 1.0 / values.len() as f64;
        GoodsDistribution::new(values.to_vec(), vec![m; values.len()]).unwrap()
    }

    #[test]
    fn figure_masses() {
        let t = Thresholds::new(vec![0.5, 2.0 / 3.0]).unwrap();
        let x = build_x(&t, &figure_grid(), 3).unwrap();
        let m = column_sums(&x);
        let want = [0.5, 1.0 / 6.0, 1.0 / 3.0];
        for s in 0..3 {
            assert_abs_diff_eq!(m[s], want[s], epsilon = 4.0 * f64::EPSILON);
        }
    }

    #[test]
    fn single_signal_takes_everything() {
        let x = build_x(&Thresholds::new(vec![]).unwrap(), &figure_grid(), 1).unwrap();
        assert_abs_diff_eq!(column_sums(&x)[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn extreme_thresholds_leave_empty_cells() {
        let g = figure_grid();
        let t = Thresholds::new(vec![0.0, 1.0]).unwrap();
        let plan = transport_plan(&t, &g, &tiers(&[1.0, 0.0]), &tiers(&[1.0, 0.0])).unwrap();
        assert_eq!(plan.empty_signals(), vec![0, 2]);
        assert!(Thresholds::new(vec![0.7, 0.6]).is_err());
        assert!(build_x(&Thresholds::new(vec![1.5]).unwrap(), &g, 2).is_err());
    }

    #[test]
    fn one_signal_product_coupling() {
        let qc = tiers(&[3.0, 2.0, 1.0]);
        let (y, _) = comonotone_couplings(&[1.0], &qc, &tiers(&[1.0])).unwrap();
        assert_eq!(y, vec![qc.masses().to_vec()]);
    }

    #[test]
    fn two_by_two_diagonal() {
        let (y, z) = comonotone_couplings(&[0.5, 0.5], &tiers(&[2.0, 1.0]), &tiers(&[2.0, 1.0])).unwrap();
        // high signal (1) takes the good course (atom 0), low signal the good dorm
        assert_eq!(y, vec![vec![0.0, 0.5], vec![0.5, 0.0]]);
        assert_eq!(z, vec![vec![0.5, 0.0], vec![0.0, 0.5]]);
    }

    #[test]
    fn three_signals_four_tiers_split() {
        let (y, _) =
            comonotone_couplings(&[0.5, 1.0 / 6.0, 1.0 / 3.0], &tiers(&[4.0, 3.0, 2.0, 1.0]), &tiers(&[1.0])).unwrap();
        // signal 2 (1/3): tier 0 (1/4) + 1/12 of tier 1; signal 1: 1/6 of tier 1;
        // signal 0: tiers 2 and 3
        let want = [
            [0.0, 0.0, 0.25, 0.25],
            [0.0, 1.0 / 6.0, 0.0, 0.0],
            [0.25, 1.0 / 12.0, 0.0, 0.0],
        ];
        for s in 0..3 {
            for c in 0..4 {
                assert_abs_diff_eq!(y[s][c], want[s][c], epsilon = 1e-15);
            }
        }
        assert!(comonotone_couplings(&[0.5, 0.4], &tiers(&[1.0]), &tiers(&[1.0])).is_err());
    }

    #[test]
    fn capacities_normalized() {
        let q = GoodsDistribution::from_capacities(&[1.0, 5.0, 3.0], &[2, 1, 4], 4).unwrap();
        assert_eq!(q.values(), &[5.0, 3.0]);
        assert_eq!(q.masses(), &[0.25, 0.75]);
        let short = GoodsDistribution::from_capacities(&[2.0], &[1], 4).unwrap();
        assert_eq!(short.values(), &[2.0, 0.0]);
        assert_eq!(short.mean(), 0.5);
    }

    #[test]
    fn one_signal_objective_is_product_of_means() {
        let g = LambdaGrid::new(vec![0.5, 2.0, 3.0], vec![0.2, 0.3, 0.5], 0.0).unwrap();
        let qc = tiers(&[6.0, 1.0]);
        let qd = GoodsDistribution::new(vec![4.0, 2.0], vec![0.25, 0.75]).unwrap();
        let ea: f64 = g.points().iter().zip(g.weights()).map(|(&l, w)| w * course_weight(l)).sum();
        let eb: f64 = g.points().iter().zip(g.weights()).map(|(&l, w)| w * dorm_weight(l)).sum();
        let o = welfare_objective(&Thresholds::new(vec![]).unwrap(), &g, &qc, &qd).unwrap();
        assert_abs_diff_eq!(o, ea * 3.5 + eb * 2.5, epsilon = 1e-12);
    }

    #[test]
    fn constant_values_make_thresholds_irrelevant() {
        let g = LambdaGrid::uniform(0.0, 4.0, 10).unwrap();
        let qc = tiers(&[2.0, 2.0]);
        let qd = tiers(&[3.0, 3.0, 3.0]);
        let base = welfare_objective(&Thresholds::new(vec![]).unwrap(), &g, &qc, &qd).unwrap();
        for t in [vec![0.4, 2.0], vec![1.2, 1.2], vec![0.0, 4.0]] {
            let o = welfare_objective(&Thresholds::new(t).unwrap(), &g, &qc, &qd).unwrap();
            assert_abs_diff_eq!(o, base, epsilon = 1e-12);
        }
        let oracle = grid_search_oracle(&g, 3, &qc, &qd, Exec::Sequential).unwrap();
        assert_abs_diff_eq!(oracle.objective, base, epsilon = 1e-12);
    }

    #[test]
    fn constant_course_values_still_screen_dorms() {
        let g = LambdaGrid::uniform(0.0, 4.0, 10).unwrap();
        let qc = tiers(&[2.0, 2.0]);
        let qd = tiers(&[3.0, 1.0]);
        let pooled = welfare_objective(&Thresholds::new(vec![]).unwrap(), &g, &qc, &qd).unwrap();
        let best = grid_search_oracle(&g, 2, &qc, &qd, Exec::Sequential).unwrap();
        assert!(best.objective > pooled + 1e-6);
    }

    #[test]
    fn two_point_closed_form() {
        // lambda 1/3 (a=1/4, b=3/4) and 3 (a=3/4, b=1/4), half each
        let g = LambdaGrid::new(vec![1.0 / 3.0, 3.0], vec![0.5, 0.5], 0.0).unwrap();
        let qc = tiers(&[8.0, 2.0]);
        let qd = tiers(&[6.0, 4.0]);
        let t = Thresholds::new(vec![1.0 / 3.0]).unwrap();
        // low type: bad course, good dorm; high type: good course, bad dorm
        let want = 0.5 * (0.25 * 2.0 + 0.75 * 6.0) + 0.5 * (0.75 * 8.0 + 0.25 * 4.0);
        assert_abs_diff_eq!(welfare_objective(&t, &g, &qc, &qd).unwrap(), want, epsilon = 1e-12);
    }

    #[test]
    fn fast_objective_matches_plan() {
        let g = LambdaGrid::uniform(0.0, 3.0, 13).unwrap();
        let qc = GoodsDistribution::new(vec![5.0, 3.0, 2.5, 0.5], vec![0.1, 0.35, 0.3, 0.25]).unwrap();
        let qd = GoodsDistribution::new(vec![4.0, 1.0, 0.2], vec![0.45, 0.2, 0.35]).unwrap();
        let p = Problem::new(&g, &qc, &qd);
        for cuts in [vec![0, 0, 13], vec![2, 5, 9], vec![4, 4, 11], vec![13, 13, 13]] {
            let t = Thresholds::from_cuts(&g, &cuts);
            assert_eq!(t.cuts(&g).unwrap(), cuts);
            let slow = welfare_objective(&t, &g, &qc, &qd).unwrap();
            assert_abs_diff_eq!(p.objective(&cuts), slow, epsilon = 1e-12);
        }
    }

    #[test]
    fn grid_search_counts_evaluations() {
        let g = LambdaGrid::uniform(0.0, 1.0, 101).unwrap();
        let o = grid_search_oracle(&g, 2, &tiers(&[2.0, 1.0]), &tiers(&[2.0, 1.0]), Exec::Sequential).unwrap();
        assert_eq!(o.evaluations, 102);
        let big = LambdaGrid::uniform(0.0, 1.0, 512).unwrap();
        let err = grid_search_oracle(&big, 4, &tiers(&[2.0, 1.0]), &tiers(&[2.0, 1.0]), Exec::Sequential);
        assert!(err.unwrap_err().is_guard());
    }

    #[test]
    fn figure_instance_recovered() {
        // values chosen so the types at 1/2 and 2/3 are indifferent between
        // adjacent signals, with goods tiers aligned to the figure's cells
        let g = LambdaGrid::uniform(0.0, 1.0, 60).unwrap();
        let qc = GoodsDistribution::new(vec![2.5, 1.0, 0.0], vec![1.0 / 3.0, 1.0 / 6.0, 0.5]).unwrap();
        let qd = GoodsDistribution::new(vec![1.5, 1.0, 0.0], vec![0.5, 1.0 / 6.0, 1.0 / 3.0]).unwrap();
        let o = grid_search_oracle(&g, 3, &qc, &qd, Exec::Sequential).unwrap();
        assert!(o.cuts[0].abs_diff(30) <= 1 && o.cuts[1].abs_diff(40) <= 1, "{:?}", o.cuts);
    }

    #[test]
    fn symmetric_instance_cuts_at_one() {
        let g = LambdaGrid::log_symmetric(40, 0.1).unwrap();
        let q = tiers(&[3.0, 1.0]);
        let sol = solve_thresholds(&g, 2, &q, &q, SolveOptions::default(), Exec::Sequential).unwrap();
        let p = Problem::new(&g, &q, &q);
        assert_abs_diff_eq!(p.objective(&[20]), sol.objective, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.thresholds.values()[0], g.points()[19], epsilon = 1e-12);
    }

    #[test]
    fn extra_signals_do_not_help_with_aligned_tiers() {
        let g = LambdaGrid::uniform(0.0, 3.0, 30).unwrap();
        let qc = tiers(&[4.0, 1.0]);
        let qd = tiers(&[3.0, 0.5]);
        let two = solve_thresholds(&g, 2, &qc, &qd, SolveOptions::default(), Exec::Sequential).unwrap();
        let three = solve_thresholds(&g, 3, &qc, &qd, SolveOptions::default(), Exec::Sequential).unwrap();
        assert_abs_diff_eq!(two.objective, three.objective, epsilon = 1e-12);
    }

    #[test]
    fn solution_is_local_optimum() {
        let g = LambdaGrid::uniform(0.0, 5.0, 40).unwrap();
        let qc = GoodsDistribution::new(vec![6.0, 3.0, 1.0], vec![0.2, 0.5, 0.3]).unwrap();
        let qd = GoodsDistribution::new(vec![5.0, 2.0, 0.0], vec![0.3, 0.3, 0.4]).unwrap();
        let sol = solve_thresholds(&g, 3, &qc, &qd, SolveOptions::default(), Exec::Sequential).unwrap();
        assert!(sol.max_residual() <= 1e-8);
        assert!(sol.converged);
        let o = sol.oracle.as_ref().unwrap();
        assert!(sol.objective >= o.objective - 1e-12);
        let direct = welfare_objective(&sol.thresholds, &g, &qc, &qd).unwrap();
        assert_abs_diff_eq!(direct, sol.objective, epsilon = 1e-12);
    }

    #[test]
    fn comonotone_beats_permutations() {
        let g = LambdaGrid::new(vec![0.5, 1.0, 2.0], vec![1.0 / 3.0; 3], 0.0).unwrap();
        let x = build_x(&Thresholds::new(vec![0.5, 1.0]).unwrap(), &g, 3).unwrap();
        let v = comonotone_optimality_check(&x, &g, &tiers(&[3.0, 2.0, 1.0])).unwrap();
        assert_eq!(v.enumerated, 36);
        assert!(v.is_optimal);
        assert!(v.anti_monotone < v.comonotone - 1e-9);
        let flat = comonotone_optimality_check(&x, &g, &tiers(&[1.0])).unwrap();
        assert!(flat.is_optimal);
    }

    #[test]
    fn plans_conserve_marginals() {
        let g = LambdaGrid::uniform(0.0, 2.0, 17).unwrap();
        let qc = GoodsDistribution::new(vec![1.0, 0.3], vec![0.7, 0.3]).unwrap();
        let qd = GoodsDistribution::new(vec![2.0, 1.0, 0.1], vec![0.2, 0.2, 0.6]).unwrap();
        for t in [vec![0.2, 0.9, 1.5], vec![0.0, 0.0, 2.0], vec![1.0, 1.0, 1.0]] {
            let plan = transport_plan(&Thresholds::new(t).unwrap(), &g, &qc, &qd).unwrap();
            assert!(plan.marginal_error(&g, &qc, &qd) <= MARGINAL_TOL);
        }
    }
}
