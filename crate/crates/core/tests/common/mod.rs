//! Seeded tiny markets and the exact-oracle property suites run on them.

#![allow(dead_code)]

use psd_core::equilibrium::{brute_force_equilibria, is_equilibrium, Evaluator, GameTable, PureEquilibrium};
use psd_core::mechanism::run_paired_sd;
use psd_core::rng::{self, Purpose};
use psd_core::welfare::{determinism_check, envy_check, mutual_swap_check, pareto_improvement_search, Sampling};
use psd_core::{MarketSpec, PreferenceProfile, SignalSpace, TieBreakDraw};
use rand::Rng;

pub const INSTANCES: usize = 50;
const MAX_SEEDS: u64 = 5_000;
const TOL: f64 = 1e-9;

pub struct Instance {
    pub spec: MarketSpec,
    pub prefs: PreferenceProfile,
    pub space: SignalSpace,
    /// `lambda` of students whose course values are `lambda * base` over a
    /// shared base and whose dorm values are shared; `None` for the rest.
    pub scale: Vec<Option<f64>>,
}

impl Instance {
    /// 2-4 students, 2-3 signals, 2-3 courses (bundles of 1-2), 2-3 dorms,
    /// capacities 1-2.
    pub fn generate(seed: u64) -> Instance {
        let mut r = rng::stream(seed, Purpose::Replication, 0xC0FFEE, 0);
        let n = r.random_range(2..=4usize);
        let s = r.random_range(2..=3usize);
        let courses = r.random_range(2..=3usize);
        let k = if courses == 3 { r.random_range(1..=2usize) } else { 1 };
        let dorms = r.random_range(2..=3usize);
        let course_capacity: Vec<usize> = (0..courses).map(|_| r.random_range(1..=2)).collect();
        let dorm_capacity: Vec<usize> = (0..dorms).map(|_| r.random_range(1..=2)).collect();
        let base: Vec<f64> = (0..courses).map(|_| r.random_range(0.5..10.0)).collect();
        let shared_dorm: Vec<f64> = (0..dorms).map(|_| r.random_range(0.5..10.0)).collect();
        let mut course_values = Vec::new();
        let mut dorm_values = Vec::new();
        let mut scale = Vec::new();
        for _ in 0..n {
            if r.random_bool(0.8) {
                let lambda = r.random_range(0.2..5.0);
                course_values.push(base.iter().map(|b| lambda * b).collect());
                dorm_values.push(shared_dorm.clone());
                scale.push(Some(lambda));
            } else {
                course_values.push((0..courses).map(|_| r.random_range(0.5..10.0)).collect());
                dorm_values.push((0..dorms).map(|_| r.random_range(0.5..10.0)).collect());
                scale.push(None);
            }
        }
        Instance {
            spec: MarketSpec::new(course_capacity, dorm_capacity, k, n).unwrap(),
            prefs: PreferenceProfile::new(course_values, dorm_values).unwrap(),
            space: SignalSpace::new(s).unwrap(),
            scale,
        }
    }

    /// Ordered pairs `(i, j)` where `i` cares more about the shared courses.
    pub fn comparable_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.spec.num_students;
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(b)) = (self.scale[i], self.scale[j]) {
                    if a > b {
                        pairs.push((i, j));
                    }
                }
            }
        }
        pairs
    }

    pub fn equilibria(&self) -> Vec<PureEquilibrium> {
        brute_force_equilibria(&self.spec, &self.prefs, self.space).unwrap()
    }

    pub fn is_deterministic(&self, signals: &[usize]) -> bool {
        determinism_check(signals, &self.spec, &self.prefs, self.space, Sampling::Exact)
            .unwrap()
            .is_deterministic
    }

    fn deterministic_equilibria(&self) -> Vec<PureEquilibrium> {
        self.equilibria()
            .into_iter()
            .filter(|eq| self.is_deterministic(&eq.signals))
            .collect()
    }
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for len in 0..n {
        out = out
            .into_iter()
            .flat_map(|p: Vec<usize>| {
                (0..=len).map(move |pos| {
                    let mut q = p.clone();
                    q.insert(pos, len);
                    q
                })
            })
            .collect();
    }
    out
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub checked: usize,
    pub failures: usize,
    pub first_failure: Option<String>,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.checked == INSTANCES && self.failures == 0
    }
}

/// Run `check` on seeded instances until `INSTANCES` of them had something to
/// check; `None` means nothing to check on that instance.
fn suite(name: &'static str, mut check: impl FnMut(&Instance) -> Option<Result<(), String>>) -> SuiteResult {
    let mut result = SuiteResult {
        name,
        checked: 0,
        failures: 0,
        first_failure: None,
    };
    for seed in 0..MAX_SEEDS {
        let inst = Instance::generate(seed);
        if let Some(outcome) = check(&inst) {
            result.checked += 1;
            if let Err(msg) = outcome {
                result.failures += 1;
                result.first_failure.get_or_insert(format!("seed {seed}: {msg}"));
            }
            if result.checked == INSTANCES {
                break;
            }
        }
    }
    result
}

/// Every entry of the envy matrix is nonnegative at every equilibrium.
pub fn envy_suite() -> SuiteResult {
    suite("envy-freeness", |inst| {
        let eqs = inst.equilibria();
        if eqs.is_empty() {
            return None;
        }
        for eq in &eqs {
            let envy = envy_check(&eq.signals, &inst.spec, &inst.prefs, inst.space, Evaluator::Exact).unwrap();
            let worst = envy.iter().flatten().copied().fold(f64::INFINITY, f64::min);
            if worst < -TOL {
                return Some(Err(format!("profile {:?} has envy {worst}", eq.signals)));
            }
        }
        Some(Ok(()))
    })
}

/// Comparable students on different signals never gain from swapping
/// bundles, under any tie-break.
pub fn swap_suite() -> SuiteResult {
    suite("no mutual swap", |inst| {
        let pairs = inst.comparable_pairs();
        let perms = permutations(inst.spec.num_students);
        let mut relevant = false;
        for eq in inst.equilibria() {
            let distinct: Vec<(usize, usize)> =
                pairs.iter().copied().filter(|&(i, j)| eq.signals[i] != eq.signals[j]).collect();
            if distinct.is_empty() {
                continue;
            }
            relevant = true;
            for rc in &perms {
                for rd in &perms {
                    let tb = TieBreakDraw::new(rc.clone(), rd.clone()).unwrap();
                    let a = run_paired_sd(&eq.signals, &tb, &inst.spec, &inst.prefs).unwrap().allocation;
                    let swaps = mutual_swap_check(&a, &inst.prefs, &distinct);
                    if !swaps.is_empty() {
                        return Some(Err(format!("profile {:?}: swap {swaps:?}", eq.signals)));
                    }
                }
            }
        }
        relevant.then_some(Ok(()))
    })
}

/// No allocation Pareto-improves a deterministic equilibrium allocation.
pub fn pareto_suite() -> SuiteResult {
    suite("pareto efficiency", |inst| {
        let det = inst.deterministic_equilibria();
        if det.is_empty() {
            return None;
        }
        let identity: Vec<usize> = (0..inst.spec.num_students).collect();
        let tb = TieBreakDraw::new(identity.clone(), identity).unwrap();
        for eq in &det {
            let a = run_paired_sd(&eq.signals, &tb, &inst.spec, &inst.prefs).unwrap().allocation;
            if let Some(better) = pareto_improvement_search(&a, &inst.spec, &inst.prefs).unwrap() {
                return Some(Err(format!("profile {:?}: {a:?} improved by {better:?}", eq.signals)));
            }
        }
        Some(Ok(()))
    })
}

/// At deterministic equilibria every good runs out at the same time in every
/// draw, and that time is a class cutoff.
pub fn run_out_suite() -> SuiteResult {
    suite("run-out at cutoffs", |inst| {
        let mut relevant = false;
        for eq in inst.equilibria() {
            let report =
                determinism_check(&eq.signals, &inst.spec, &inst.prefs, inst.space, Sampling::Exact).unwrap();
            if !report.is_deterministic {
                continue;
            }
            relevant = true;
            if !report.fill_positions_constant || !report.fill_times_at_cutoffs {
                return Some(Err(format!(
                    "profile {:?}: fill positions constant {}, largest gap to a cutoff {}",
                    eq.signals, report.fill_positions_constant, report.max_cutoff_gap
                )));
            }
        }
        relevant.then_some(Ok(()))
    })
}

/// A deterministic equilibrium stays an equilibrium when a new signal is added
/// above or below the existing ones.
pub fn expansion_suite() -> SuiteResult {
    suite("signal expansion", |inst| {
        let det = inst.deterministic_equilibria();
        if det.is_empty() {
            return None;
        }
        let bigger = SignalSpace::new(inst.space.size() + 1).unwrap();
        for eq in &det {
            let shifted: Vec<usize> = eq.signals.iter().map(|s| s + 1).collect();
            for embedded in [eq.signals.clone(), shifted] {
                let v = is_equilibrium(&embedded, &inst.spec, &inst.prefs, bigger, Evaluator::Exact, TOL).unwrap();
                if !v.is_equilibrium {
                    return Some(Err(format!("profile {embedded:?}: {:?}", v.deviations)));
                }
            }
        }
        Some(Ok(()))
    })
}

/// A student who cares more about the shared courses never reports a lower
/// signal than a comparable student, unless both are indifferent between the
/// two signals.
pub fn ordering_suite() -> SuiteResult {
    suite("signal ordering", |inst| {
        let pairs = inst.comparable_pairs();
        if pairs.is_empty() {
            return None;
        }
        let eqs = inst.equilibria();
        if eqs.is_empty() {
            return None;
        }
        let table = GameTable::build(&inst.spec, &inst.prefs, inst.space).unwrap();
        for eq in &eqs {
            let payoff_if = |student: usize, to: usize| {
                let mut p = eq.signals.clone();
                p[student] = to;
                table.payoff(&p)[student]
            };
            for &(i, j) in &pairs {
                let (si, sj) = (eq.signals[i], eq.signals[j]);
                if si >= sj {
                    continue;
                }
                let i_loss = eq.payoffs[i] - payoff_if(i, sj);
                let j_loss = eq.payoffs[j] - payoff_if(j, si);
                if i_loss > TOL || j_loss > TOL {
                    return Some(Err(format!(
                        "profile {:?}: {i} cares more than {j} but reports {si} < {sj} (losses {i_loss}, {j_loss})",
                        eq.signals
                    )));
                }
            }
        }
        Some(Ok(()))
    })
}
