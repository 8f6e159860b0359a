//! Scenario configuration and generation.

use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::equilibrium::LearnerConfig;
use crate::error::{Error, Result};
use crate::market::{MarketSpec, PreferenceProfile, RelativeWeights, SignalSpace};
use crate::mechanism::MechanismVariant;
use crate::rng::{self, Purpose};

/// Stream labels for seeds derived from a scenario seed.
pub mod labels {
    pub const LEARNER: u64 = 1;
    pub const STATS: u64 = 2;
    pub const TIEBREAK_FIRST: u64 = 3;
    pub const COURSE_CAPACITY: u64 = 4;
    pub const DORM_CAPACITY: u64 = 5;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub num_students: usize,
    pub num_courses: usize,
    #[serde(default = "one")]
    pub bundle_size: usize,
    pub num_dorms: usize,
    #[serde(default)]
    pub capacities: CapacityRule,
    pub preferences: PreferenceModel,
    #[serde(default = "ten")]
    pub signals: usize,
    #[serde(default = "default_variant")]
    pub variant: MechanismVariant,
    #[serde(default)]
    pub learner: LearnerConfig,
    /// Monte-Carlo draws behind the final welfare statistics.
    #[serde(default = "thousand")]
    pub stat_draws: usize,
    /// Tie-break draws learned separately by the tie-break-first variant.
    #[serde(default = "two_hundred")]
    pub tiebreak_first_draws: usize,
    /// Enumerate every tie-break ordering instead of sampling `stat_draws`.
    /// Only feasible for tiny markets; the std is then the population std.
    #[serde(default)]
    pub exact_stats: bool,
}

fn one() -> usize {
    1
}
fn ten() -> usize {
    10
}
fn thousand() -> usize {
    1000
}
fn two_hundred() -> usize {
    200
}
fn default_variant() -> MechanismVariant {
    MechanismVariant::PairedSd
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "kind")]
pub enum CapacityRule {
    /// One unit per good, then every remaining unit to a uniformly random
    /// good. Totals default to `N * bundle_size` seats and `N` beds.
    Multinomial {
        #[serde(default)]
        course_total: Option<usize>,
        #[serde(default)]
        dorm_total: Option<usize>,
    },
    /// Uniform composition (parts at least 1) of the total demanded. Totals
    /// default to `N * bundle_size` seats and `N` beds.
    RandomComposition {
        #[serde(default)]
        course_total: Option<usize>,
        #[serde(default)]
        dorm_total: Option<usize>,
    },
    Explicit { courses: Vec<usize>, dorms: Vec<usize> },
}

impl Default for CapacityRule {
    fn default() -> Self {
        CapacityRule::Multinomial {
            course_total: None,
            dorm_total: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "model")]
pub enum PreferenceModel {
    /// `u_i(C, d) = lambda_i * sum_c (v_ic + a*c) + gamma_i * (w_id + b*d)` with
    /// `lambda, gamma ~ U(0, weight_max)` and `v, w ~ U(0, idiosyncratic_max)`.
    Calibrated {
        #[serde(default = "ten_f")]
        weight_max: f64,
        #[serde(default = "five_f")]
        idiosyncratic_max: f64,
        #[serde(default = "course_slope")]
        course_slope: f64,
        #[serde(default = "dorm_slope")]
        dorm_slope: f64,
    },
    /// Shared `v`, `w`; student utility `lambda/(1+lambda) v(c) + 1/(1+lambda) w(d)`.
    Homogeneous {
        course_values: Vec<f64>,
        dorm_values: Vec<f64>,
        lambda: LambdaLaw,
    },
    Explicit {
        course_values: Vec<Vec<f64>>,
        dorm_values: Vec<Vec<f64>>,
    },
}

fn ten_f() -> f64 {
    10.0
}
fn five_f() -> f64 {
    5.0
}
fn course_slope() -> f64 {
    0.025
}
fn dorm_slope() -> f64 {
    0.1
}

/// Distribution of the relative preference `lambda` in homogeneous scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "kind")]
pub enum LambdaLaw {
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
    /// One value per student.
    Points { values: Vec<f64> },
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("num_students", self.num_students),
            ("num_courses", self.num_courses),
            ("bundle_size", self.bundle_size),
            ("num_dorms", self.num_dorms),
            ("signals", self.signals),
            ("stat_draws", self.stat_draws),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        self.learner.validate()?;
        if let CapacityRule::Explicit { courses, dorms } = &self.capacities {
            if courses.len() != self.num_courses || dorms.len() != self.num_dorms {
                return Err(Error::config(format!(
                    "capacities: {} courses and {} dorms listed, expected {} and {}",
                    courses.len(),
                    dorms.len(),
                    self.num_courses,
                    self.num_dorms
                )));
            }
        }
        match &self.preferences {
            PreferenceModel::Calibrated {
                weight_max,
                idiosyncratic_max,
                course_slope,
                dorm_slope,
            } => {
                if !(*weight_max > 0.0) || !(*idiosyncratic_max >= 0.0) {
                    return Err(Error::Domain("preferences: weight_max must be positive and idiosyncratic_max nonnegative".into()));
                }
                if !course_slope.is_finite() || !dorm_slope.is_finite() {
                    return Err(Error::Domain("preferences: slopes must be finite".into()));
                }
            }
            PreferenceModel::Homogeneous {
                course_values,
                dorm_values,
                lambda,
            } => {
                if course_values.len() != self.num_courses || dorm_values.len() != self.num_dorms {
                    return Err(Error::config("preferences: shared value tables do not match the good counts"));
                }
                match lambda {
                    LambdaLaw::Uniform { lo, hi } | LambdaLaw::LogUniform { lo, hi } => {
                        if !(*lo > 0.0 && lo <= hi && hi.is_finite()) {
                            return Err(Error::Domain(format!("preferences.lambda: need 0 < lo <= hi, got ({lo}, {hi})")));
                        }
                    }
                    LambdaLaw::Points { values } => {
                        if values.len() != self.num_students || values.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
                            return Err(Error::Domain("preferences.lambda: need one positive value per student".into()));
                        }
                    }
                }
            }
            PreferenceModel::Explicit {
                course_values,
                dorm_values,
            } => {
                if course_values.len() != self.num_students || dorm_values.len() != self.num_students {
                    return Err(Error::config("preferences: explicit tables must have one row per student"));
                }
            }
        }
        Ok(())
    }

    pub fn signal_space(&self) -> SignalSpace {
        SignalSpace::new(self.signals).expect("validated")
    }

    /// Learner settings with the seed derived from the scenario seed.
    pub fn learner_config(&self) -> LearnerConfig {
        LearnerConfig {
            seed: rng::derive_seed(self.seed, labels::LEARNER),
            ..self.learner.clone()
        }
    }

    pub fn stats_seed(&self) -> u64 {
        rng::derive_seed(self.seed, labels::STATS)
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A uniformly random composition of `total` into `bins` positive parts.
pub fn random_composition(total: usize, bins: usize, seed: u64) -> Result<Vec<usize>> {
    if bins == 0 || total < bins {
        return Err(Error::config(format!("cannot split {total} units into {bins} positive parts")));
    }
    let mut r = rng::stream(seed, Purpose::Capacities, total as u64, bins as u64);
    // bins-1 distinct bars among the total-1 gaps between units
    let mut bars: Vec<usize> = index::sample(&mut r, total - 1, bins - 1).into_iter().map(|b| b + 1).collect();
    bars.sort_unstable();
    let mut parts = Vec::with_capacity(bins);
    let mut prev = 0;
    for b in bars {
        parts.push(b - prev);
        prev = b;
    }
    parts.push(total - prev);
    Ok(parts)
}

/// `total` units over `bins` goods: one each, the rest uniformly at random.
pub fn multinomial_partition(total: usize, bins: usize, seed: u64) -> Result<Vec<usize>> {
    if bins == 0 || total < bins {
        return Err(Error::config(format!("cannot split {total} units into {bins} positive parts")));
    }
    let mut r = rng::stream(seed, Purpose::Capacities, total as u64, bins as u64);
    let mut parts = vec![1; bins];
    for _ in bins..total {
        parts[r.random_range(0..bins)] += 1;
    }
    Ok(parts)
}

/// Resolve the market and draw every student's preferences.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<(MarketSpec, PreferenceProfile)> {
    cfg.validate()?;
    let n = cfg.num_students;
    let (courses, dorms) = match &cfg.capacities {
        CapacityRule::Explicit { courses, dorms } => (courses.clone(), dorms.clone()),
        CapacityRule::Multinomial {
            course_total,
            dorm_total,
        } => (
            multinomial_partition(
                course_total.unwrap_or(n * cfg.bundle_size),
                cfg.num_courses,
                rng::derive_seed(cfg.seed, labels::COURSE_CAPACITY),
            )?,
            multinomial_partition(
                dorm_total.unwrap_or(n),
                cfg.num_dorms,
                rng::derive_seed(cfg.seed, labels::DORM_CAPACITY),
            )?,
        ),
        CapacityRule::RandomComposition {
            course_total,
            dorm_total,
        } => (
            random_composition(
                course_total.unwrap_or(n * cfg.bundle_size),
                cfg.num_courses,
                rng::derive_seed(cfg.seed, labels::COURSE_CAPACITY),
            )?,
            random_composition(
                dorm_total.unwrap_or(n),
                cfg.num_dorms,
                rng::derive_seed(cfg.seed, labels::DORM_CAPACITY),
            )?,
        ),
    };
    let spec = MarketSpec::new(courses, dorms, cfg.bundle_size, n)?;
    let mut r = rng::stream(cfg.seed, Purpose::Preferences, 0, 0);
    // (0, hi] so relative weights are strictly positive
    let mut open_unit = |hi: f64| hi * (1.0 - r.random::<f64>());
    let prefs = match &cfg.preferences {
        PreferenceModel::Calibrated {
            weight_max,
            idiosyncratic_max,
            course_slope,
            dorm_slope,
        } => {
            let mut cv = Vec::with_capacity(n);
            let mut dv = Vec::with_capacity(n);
            let mut rel = Vec::with_capacity(n);
            for _ in 0..n {
                let lambda = open_unit(*weight_max);
                let gamma = open_unit(*weight_max);
                cv.push(
                    (0..cfg.num_courses)
                        .map(|c| lambda * (open_unit(*idiosyncratic_max) + course_slope * c as f64))
                        .collect(),
                );
                dv.push(
                    (0..cfg.num_dorms)
                        .map(|d| gamma * (open_unit(*idiosyncratic_max) + dorm_slope * d as f64))
                        .collect(),
                );
                rel.push(RelativeWeights { lambda, gamma });
            }
            PreferenceProfile::new(cv, dv)?.with_relative(rel)?
        }
        PreferenceModel::Homogeneous {
            course_values,
            dorm_values,
            lambda,
        } => {
            let lambdas: Vec<f64> = match lambda {
                LambdaLaw::Uniform { lo, hi } => (0..n).map(|_| lo + (hi - lo) * r.random::<f64>()).collect(),
                LambdaLaw::LogUniform { lo, hi } => (0..n)
                    .map(|_| (lo.ln() + (hi.ln() - lo.ln()) * r.random::<f64>()).exp())
                    .collect(),
                LambdaLaw::Points { values } => values.clone(),
            };
            homogeneous_profile(course_values, dorm_values, &lambdas)?
        }
        PreferenceModel::Explicit {
            course_values,
            dorm_values,
        } => PreferenceProfile::new(course_values.clone(), dorm_values.clone())?,
    };
    prefs.check_against(&spec)?;
    Ok((spec, prefs))
}

/// Students sharing `v`, `w` and differing only in `lambda`.
pub fn homogeneous_profile(v: &[f64], w: &[f64], lambdas: &[f64]) -> Result<PreferenceProfile> {
    let mut cv = Vec::with_capacity(lambdas.len());
    let mut dv = Vec::with_capacity(lambdas.len());
    let mut rel = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::Domain(format!("lambda {l} must be positive")));
        }
        let a = l / (1.0 + l);
        let b = 1.0 / (1.0 + l);
        cv.push(v.iter().map(|x| a * x).collect());
        dv.push(w.iter().map(|x| b * x).collect());
        rel.push(RelativeWeights { lambda: a, gamma: b });
    }
    PreferenceProfile::new(cv, dv)?.with_relative(rel)
}
