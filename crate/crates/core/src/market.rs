//! Domain types and the serial-dictatorship engine for a single market.
//!
//! A population of `N` students (each of weight `1/N`) picks from a finite set
//! of courses (bundles of up to `bundle_size`) and a finite set of dorms (one
//! each). Preferences are additive: `u_i(C, d) = sum_{c in C} v_i(c) + w_i(d)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Sentinel fill position for a good that never reaches capacity.
pub const NEVER: usize = usize::MAX;

/// Capacities of both markets and the course bundle size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketSpec {
    pub course_capacity: Vec<usize>,
    pub dorm_capacity: Vec<usize>,
    pub bundle_size: usize,
    pub num_students: usize,
}

impl MarketSpec {
    pub fn new(
        course_capacity: Vec<usize>,
        dorm_capacity: Vec<usize>,
        bundle_size: usize,
        num_students: usize,
    ) -> Result<Self> {
        let spec = MarketSpec {
            course_capacity,
            dorm_capacity,
            bundle_size,
            num_students,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bundle_size == 0 {
            return Err(Error::config("bundle_size must be positive"));
        }
        if self.num_students == 0 {
            return Err(Error::config("num_students must be positive"));
        }
        if self.course_capacity.len() > u32::MAX as usize || self.dorm_capacity.len() > u32::MAX as usize {
            return Err(Error::config("too many goods"));
        }
        Ok(())
    }

    pub fn num_courses(&self) -> usize {
        self.course_capacity.len()
    }

    pub fn num_dorms(&self) -> usize {
        self.dorm_capacity.len()
    }

    pub fn capacity(&self, market: Market) -> &[usize] {
        match market {
            Market::Courses => &self.course_capacity,
            Market::Dorms => &self.dorm_capacity,
        }
    }

    /// Number of goods a student takes in `market` when enough are available.
    pub fn demand(&self, market: Market) -> usize {
        match market {
            Market::Courses => self.bundle_size,
            Market::Dorms => 1,
        }
    }
}

/// The two linked markets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Market {
    Courses,
    Dorms,
}

/// Relative-preference parameters `(lambda_i, gamma_i)` of a generated student.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeWeights {
    pub lambda: f64,
    pub gamma: f64,
}

/// Additive per-student values over courses and dorms.
///
/// Each student's goods are also kept ranked best-first (ties toward the lower
/// id) so a pick is a walk down that ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceProfile {
    num_students: usize,
    num_courses: usize,
    num_dorms: usize,
    course_values: Vec<f64>,
    dorm_values: Vec<f64>,
    relative: Option<Vec<RelativeWeights>>,
    course_rank: Vec<u32>,
    dorm_rank: Vec<u32>,
}

impl PreferenceProfile {
    /// Build from one row of course values and one row of dorm values per student.
    pub fn new(course_values: Vec<Vec<f64>>, dorm_values: Vec<Vec<f64>>) -> Result<Self> {
        let n = course_values.len();
        if n == 0 || dorm_values.len() != n {
            return Err(Error::config(format!(
                "preference tables cover {} and {} students",
                n,
                dorm_values.len()
            )));
        }
        let num_courses = course_values[0].len();
        let num_dorms = dorm_values[0].len();
        let flatten = |rows: Vec<Vec<f64>>, width: usize, what: &str| -> Result<Vec<f64>> {
            let mut flat = Vec::with_capacity(rows.len() * width);
            for (i, row) in rows.into_iter().enumerate() {
                if row.len() != width {
                    return Err(Error::config(format!(
                        "student {i} has {} {what} values, expected {width}",
                        row.len()
                    )));
                }
                if let Some(x) = row.iter().find(|x| !x.is_finite()) {
                    return Err(Error::Domain(format!("student {i} has non-finite {what} value {x}")));
                }
                flat.extend(row);
            }
            Ok(flat)
        };
        let course_values = flatten(course_values, num_courses, "course")?;
        let dorm_values = flatten(dorm_values, num_dorms, "dorm")?;
        let course_rank = rank_rows(&course_values, num_courses);
        let dorm_rank = rank_rows(&dorm_values, num_dorms);
        Ok(PreferenceProfile {
            num_students: n,
            num_courses,
            num_dorms,
            course_values,
            dorm_values,
            relative: None,
            course_rank,
            dorm_rank,
        })
    }

    /// Attach `(lambda, gamma)` per student.
    pub fn with_relative(mut self, relative: Vec<RelativeWeights>) -> Result<Self> {
        if relative.len() != self.num_students {
            return Err(Error::config("relative weights do not cover every student"));
        }
        self.relative = Some(relative);
        Ok(self)
    }

    pub fn num_students(&self) -> usize {
        self.num_students
    }

    pub fn num_courses(&self) -> usize {
        self.num_courses
    }

    pub fn num_dorms(&self) -> usize {
        self.num_dorms
    }

    pub fn relative(&self) -> Option<&[RelativeWeights]> {
        self.relative.as_deref()
    }

    pub fn course_values(&self, i: usize) -> &[f64] {
        &self.course_values[i * self.num_courses..(i + 1) * self.num_courses]
    }

    pub fn dorm_values(&self, i: usize) -> &[f64] {
        &self.dorm_values[i * self.num_dorms..(i + 1) * self.num_dorms]
    }

    pub fn values(&self, market: Market, i: usize) -> &[f64] {
        match market {
            Market::Courses => self.course_values(i),
            Market::Dorms => self.dorm_values(i),
        }
    }

    /// Goods of `market` ranked best-first for student `i`.
    pub fn ranking(&self, market: Market, i: usize) -> &[u32] {
        match market {
            Market::Courses => &self.course_rank[i * self.num_courses..(i + 1) * self.num_courses],
            Market::Dorms => &self.dorm_rank[i * self.num_dorms..(i + 1) * self.num_dorms],
        }
    }

    pub fn bundle_value(&self, i: usize, courses: &[usize]) -> f64 {
        let v = self.course_values(i);
        courses.iter().map(|&c| v[c]).sum()
    }

    pub fn utility(&self, i: usize, courses: &[usize], dorm: Option<usize>) -> f64 {
        self.bundle_value(i, courses) + dorm.map_or(0.0, |d| self.dorm_values(i)[d])
    }

    /// Check the table dimensions against a market.
    pub fn check_against(&self, spec: &MarketSpec) -> Result<()> {
        if self.num_students != spec.num_students {
            return Err(Error::config(format!(
                "preferences cover {} students, market has {}",
                self.num_students, spec.num_students
            )));
        }
        if self.num_courses != spec.num_courses() || self.num_dorms != spec.num_dorms() {
            return Err(Error::config(format!(
                "preferences cover {}x{} goods, market has {}x{}",
                self.num_courses,
                self.num_dorms,
                spec.num_courses(),
                spec.num_dorms()
            )));
        }
        Ok(())
    }
}

fn rank_rows(values: &[f64], width: usize) -> Vec<u32> {
    if width == 0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(values.len());
    for row in values.chunks_exact(width) {
        let mut idx: Vec<u32> = (0..width as u32).collect();
        idx.sort_by(|&a, &b| row[b as usize].total_cmp(&row[a as usize]).then(a.cmp(&b)));
        out.extend(idx);
    }
    out
}

/// The ordered signal set `{0, ..., S-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignalSpace(usize);

impl SignalSpace {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::config("signal space must contain at least one signal"));
        }
        Ok(SignalSpace(size))
    }

    pub fn size(self) -> usize {
        self.0
    }

    pub fn lowest(self) -> usize {
        0
    }

    pub fn highest(self) -> usize {
        self.0 - 1
    }

    pub fn check(self, signals: &[usize]) -> Result<()> {
        match signals.iter().position(|&s| s >= self.0) {
            Some(i) => Err(Error::config(format!(
                "student {i} sends signal {} outside 0..{}",
                signals[i], self.0
            ))),
            None => Ok(()),
        }
    }
}

/// Tie-breaking ranks: student `i` has rank `course[i]` (resp. `dorm[i]`);
/// within a signal class the higher rank picks first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TieBreakDraw {
    pub course: Vec<usize>,
    pub dorm: Vec<usize>,
}

impl TieBreakDraw {
    pub fn new(course: Vec<usize>, dorm: Vec<usize>) -> Result<Self> {
        check_permutation(&course)?;
        check_permutation(&dorm)?;
        if course.len() != dorm.len() {
            return Err(Error::config("tie-break permutations differ in length"));
        }
        Ok(TieBreakDraw { course, dorm })
    }

    /// Independent uniform permutations from the stream keyed `(seed, a, b)`.
    pub fn random(n: usize, seed: u64, a: u64, b: u64) -> Self {
        let mut r = rng::stream(seed, Purpose::TieBreak, a, b);
        let course = rng::permutation(&mut r, n);
        let dorm = rng::permutation(&mut r, n);
        TieBreakDraw { course, dorm }
    }

    pub fn len(&self) -> usize {
        self.course.len()
    }

    pub fn is_empty(&self) -> bool {
        self.course.is_empty()
    }

    pub fn ranks(&self, market: Market) -> &[usize] {
        match market {
            Market::Courses => &self.course,
            Market::Dorms => &self.dorm,
        }
    }
}

fn check_permutation(p: &[usize]) -> Result<()> {
    let mut seen = vec![false; p.len()];
    for &x in p {
        if x >= p.len() || std::mem::replace(&mut seen[x], true) {
            return Err(Error::config("tie-break ranks are not a permutation"));
        }
    }
    Ok(())
}

fn check_population(signals: &[usize], ranks: &[usize]) -> Result<()> {
    if signals.len() != ranks.len() {
        return Err(Error::config(format!(
            "{} signals but {} tie-break ranks",
            signals.len(),
            ranks.len()
        )));
    }
    Ok(())
}

/// Picking order in the course market: higher signal first, ties by higher rank.
pub fn order_for_courses(signals: &[usize], course_ranks: &[usize]) -> Result<Vec<usize>> {
    check_population(signals, course_ranks)?;
    let mut order: Vec<usize> = (0..signals.len()).collect();
    order.sort_unstable_by(|&a, &b| {
        (signals[b], course_ranks[b]).cmp(&(signals[a], course_ranks[a]))
    });
    Ok(order)
}

/// Picking order in the dorm market: lower signal first, ties by higher rank.
pub fn order_for_dorms(signals: &[usize], dorm_ranks: &[usize]) -> Result<Vec<usize>> {
    check_population(signals, dorm_ranks)?;
    let mut order: Vec<usize> = (0..signals.len()).collect();
    order.sort_unstable_by(|&a, &b| {
        signals[a]
            .cmp(&signals[b])
            .then(dorm_ranks[b].cmp(&dorm_ranks[a]))
    });
    Ok(order)
}

/// Picking order for `market`.
pub fn order_for(market: Market, signals: &[usize], tiebreak: &TieBreakDraw) -> Result<Vec<usize>> {
    match market {
        Market::Courses => order_for_courses(signals, &tiebreak.course),
        Market::Dorms => order_for_dorms(signals, &tiebreak.dorm),
    }
}

/// The `min(k, |available|)` most valuable available courses, best first
/// (ties toward the lowest course id).
pub fn best_bundle(available: &[bool], values: &[f64], k: usize) -> Vec<usize> {
    let mut open: Vec<usize> = (0..values.len()).filter(|&c| available[c]).collect();
    open.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    open.truncate(k);
    open
}

/// Chooses a student's pick from the goods still open.
///
/// The engine ships with [`Additive`]; a non-additive valuation plugs in here.
pub trait BundleChooser {
    fn choose(&self, market: Market, student: usize, available: &[bool], k: usize) -> Vec<usize>;
}

/// Top-`k` by additive value.
#[derive(Debug, Clone, Copy)]
pub struct Additive<'a>(pub &'a PreferenceProfile);

impl BundleChooser for Additive<'_> {
    fn choose(&self, market: Market, student: usize, available: &[bool], k: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        for &g in self.0.ranking(market, student) {
            if out.len() == k {
                break;
            }
            if available[g as usize] {
                out.push(g as usize);
            }
        }
        out
    }
}

/// When each good of one market reached capacity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOutTrace {
    pub market: Market,
    /// Number of picks made when the good's last unit was taken, or [`NEVER`].
    /// A student at 0-based position `p` finds the good open iff `fill > p`.
    pub fill_position: Vec<usize>,
    pub num_students: usize,
}

impl RunOutTrace {
    pub fn fill(&self, good: usize) -> Option<usize> {
        match self.fill_position[good] {
            NEVER => None,
            p => Some(p),
        }
    }

    /// Goods still open to the student picking at 0-based `position`.
    pub fn available_at(&self, position: usize) -> Vec<bool> {
        self.fill_position.iter().map(|&f| f > position).collect()
    }
}

/// Run serial dictatorship in one market along `order`.
///
/// Returns each student's picks (best first) and the run-out trace.
pub fn run_sd(
    market: Market,
    order: &[usize],
    spec: &MarketSpec,
    prefs: &PreferenceProfile,
) -> Result<(Vec<Vec<usize>>, RunOutTrace)> {
    check_order(order, spec.num_students)?;
    let mut picks = vec![Vec::new(); spec.num_students];
    let mut fill = vec![NEVER; spec.capacity(market).len()];
    sd_pass(market, spec, prefs, order, &mut fill, |i, g| picks[i].push(g));
    Ok((
        picks,
        RunOutTrace {
            market,
            fill_position: fill,
            num_students: spec.num_students,
        },
    ))
}

/// [`run_sd`] with a custom chooser.
pub fn run_sd_with<C: BundleChooser>(
    market: Market,
    order: &[usize],
    spec: &MarketSpec,
    chooser: &C,
) -> Result<(Vec<Vec<usize>>, RunOutTrace)> {
    check_order(order, spec.num_students)?;
    let cap = spec.capacity(market);
    let mut remaining = cap.to_vec();
    let mut available: Vec<bool> = remaining.iter().map(|&r| r > 0).collect();
    let mut fill = vec![NEVER; cap.len()];
    for (g, &c) in cap.iter().enumerate() {
        if c == 0 {
            fill[g] = 0;
        }
    }
    let mut picks = vec![Vec::new(); spec.num_students];
    for (pos, &i) in order.iter().enumerate() {
        let chosen = chooser.choose(market, i, &available, spec.demand(market));
        for &g in &chosen {
            if !available[g] {
                return Err(Error::config(format!("chooser picked unavailable good {g}")));
            }
            remaining[g] -= 1;
            if remaining[g] == 0 {
                available[g] = false;
                fill[g] = pos + 1;
            }
        }
        picks[i] = chosen;
    }
    Ok((
        picks,
        RunOutTrace {
            market,
            fill_position: fill,
            num_students: spec.num_students,
        },
    ))
}

fn check_order(order: &[usize], n: usize) -> Result<()> {
    if order.len() != n {
        return Err(Error::config(format!("ordering has {} students, market has {n}", order.len())));
    }
    check_permutation(order)
}

/// Core loop shared by every simulation path. Capacity-zero goods are
/// recorded as filled at position 0. `on_pick(student, good)` fires per pick.
#[inline]
pub(crate) fn sd_pass<F: FnMut(usize, usize)>(
    market: Market,
    spec: &MarketSpec,
    prefs: &PreferenceProfile,
    order: &[usize],
    fill: &mut [usize],
    mut on_pick: F,
) {
    let cap = spec.capacity(market);
    let k = spec.demand(market);
    let mut remaining: Vec<usize> = cap.to_vec();
    for (g, f) in fill.iter_mut().enumerate() {
        *f = if cap[g] == 0 { 0 } else { NEVER };
    }
    let mut open = cap.iter().filter(|&&c| c > 0).count();
    for (pos, &i) in order.iter().enumerate() {
        if open == 0 {
            break;
        }
        let mut taken = 0;
        for &g in prefs.ranking(market, i) {
            if taken == k {
                break;
            }
            let g = g as usize;
            if remaining[g] > 0 {
                remaining[g] -= 1;
                taken += 1;
                on_pick(i, g);
                if remaining[g] == 0 {
                    fill[g] = pos + 1;
                    open -= 1;
                }
            }
        }
    }
}

/// Per-student result of both markets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub courses: Vec<Vec<usize>>,
    pub dorms: Vec<Option<usize>>,
}

impl Allocation {
    pub fn num_students(&self) -> usize {
        self.dorms.len()
    }

    pub fn utility(&self, prefs: &PreferenceProfile, i: usize) -> f64 {
        prefs.utility(i, &self.courses[i], self.dorms[i])
    }

    pub fn utilities(&self, prefs: &PreferenceProfile) -> Vec<f64> {
        (0..self.num_students()).map(|i| self.utility(prefs, i)).collect()
    }

    /// Capacity and bundle-size constraints.
    pub fn is_feasible(&self, spec: &MarketSpec) -> bool {
        let mut seats = vec![0usize; spec.num_courses()];
        let mut beds = vec![0usize; spec.num_dorms()];
        for (bundle, dorm) in self.courses.iter().zip(&self.dorms) {
            if bundle.len() > spec.bundle_size {
                return false;
            }
            let mut sorted = bundle.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return false;
            }
            for &c in bundle {
                match seats.get_mut(c) {
                    Some(s) => *s += 1,
                    None => return false,
                }
            }
            if let Some(d) = *dorm {
                match beds.get_mut(d) {
                    Some(b) => *b += 1,
                    None => return false,
                }
            }
        }
        seats.iter().zip(&spec.course_capacity).all(|(s, c)| s <= c)
            && beds.iter().zip(&spec.dorm_capacity).all(|(b, c)| b <= c)
    }
}

/// Normalized run-out times of one market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutTimes {
    /// `fill_position / N`; `f64::INFINITY` for goods that never fill.
    pub fill_time: Vec<f64>,
    /// `t_s` = fraction of students with signal `>= s`, for `s = 0..=S`.
    pub signal_cutoffs: Vec<f64>,
    /// Times at which a signal class ends its turn in this market: `t_s` for
    /// courses (high signals first), `1 - t_s` for dorms (low signals first).
    pub cutoff_times: Vec<f64>,
}

impl RunOutTimes {
    /// Whether every filled good ran out within `tol` of some class boundary.
    pub fn fills_at_cutoffs(&self, tol: f64) -> bool {
        self.fill_time
            .iter()
            .filter(|t| t.is_finite())
            .all(|t| self.cutoff_times.iter().any(|c| (t - c).abs() <= tol))
    }
}

/// Normalize a trace and compute the signal cutoffs `t_s`.
pub fn run_out_times(trace: &RunOutTrace, signals: &[usize], space: SignalSpace) -> Result<RunOutTimes> {
    space.check(signals)?;
    if signals.len() != trace.num_students {
        return Err(Error::config("trace and signals cover different populations"));
    }
    let n = trace.num_students as f64;
    let fill_time = trace
        .fill_position
        .iter()
        .map(|&p| if p == NEVER { f64::INFINITY } else { p as f64 / n })
        .collect();
    let mut hist = vec![0usize; space.size()];
    for &s in signals {
        hist[s] += 1;
    }
    let mut signal_cutoffs = vec![0.0; space.size() + 1];
    let mut above = 0usize;
    for s in (0..space.size()).rev() {
        above += hist[s];
        signal_cutoffs[s] = above as f64 / n;
    }
    let cutoff_times = match trace.market {
        Market::Courses => signal_cutoffs.clone(),
        Market::Dorms => signal_cutoffs.iter().map(|t| 1.0 - t).collect(),
    };
    Ok(RunOutTimes {
        fill_time,
        signal_cutoffs,
        cutoff_times,
    })
}
