//! Frozen-trace counterfactuals against full reruns.

use psd_core::mechanism::{counterfactual_payoffs_exact, counterfactual_payoffs_frozen, heuristic_signals, run_paired_sd};
use psd_core::scenario::{generate_scenario, ScenarioConfig};
use psd_core::{MarketSpec, PreferenceProfile, SignalSpace, TieBreakDraw};

fn utility_range(prefs: &PreferenceProfile, spec: &MarketSpec, i: usize) -> f64 {
    let mut c = prefs.course_values(i).to_vec();
    c.sort_by(|a, b| b.total_cmp(a));
    c.iter().take(spec.bundle_size).sum::<f64>() + prefs.dorm_values(i).iter().copied().fold(0.0, f64::max)
}

#[test]
fn two_students_agree_exactly() {
    let spec = MarketSpec::new(vec![1, 1], vec![1, 1], 1, 2).unwrap();
    let prefs = PreferenceProfile::new(vec![vec![0.0, 10.0], vec![0.0, 1.0]], vec![vec![0.0, 1.0], vec![0.0, 10.0]]).unwrap();
    let space = SignalSpace::new(2).unwrap();
    for signals in [[0, 0], [0, 1], [1, 0], [1, 1]] {
        for rc in [[0, 1], [1, 0]] {
            for rd in [[0, 1], [1, 0]] {
                let tb = TieBreakDraw::new(rc.to_vec(), rd.to_vec()).unwrap();
                let outcome = run_paired_sd(&signals, &tb, &spec, &prefs).unwrap();
                for i in 0..2 {
                    let exact = counterfactual_payoffs_exact(i, &signals, &tb, &spec, &prefs, space).unwrap();
                    let frozen = counterfactual_payoffs_frozen(i, &outcome, &signals, &tb, &spec, &prefs, space).unwrap();
                    assert_eq!(exact, frozen, "signals {signals:?} ranks {rc:?} {rd:?} student {i}");
                }
            }
        }
    }
}

/// On the large calibrated market the frozen approximation reproduces the
/// realized payoff exactly and stays close to reruns at other signals. The
/// worst single gap is reported, not bounded.
#[test]
fn large_market_subsample_is_close() {
    let cfg = ScenarioConfig::from_toml_str(
        "seed = 11\nnum_students = 1000\nnum_courses = 40\nbundle_size = 4\nnum_dorms = 10\nsignals = 10\n[preferences]\nmodel = \"calibrated\"\n",
    )
    .unwrap();
    let (spec, prefs) = generate_scenario(&cfg).unwrap();
    let space = cfg.signal_space();
    let signals = heuristic_signals(&prefs, space).unwrap();
    let mut gaps = Vec::new();
    for d in 0..2u64 {
        let tb = TieBreakDraw::random(spec.num_students, 11, 7, d);
        let outcome = run_paired_sd(&signals, &tb, &spec, &prefs).unwrap();
        let realized = outcome.allocation.utilities(&prefs);
        for i in (0..spec.num_students).step_by(20) {
            let exact = counterfactual_payoffs_exact(i, &signals, &tb, &spec, &prefs, space).unwrap();
            let frozen = counterfactual_payoffs_frozen(i, &outcome, &signals, &tb, &spec, &prefs, space).unwrap();
            assert!((frozen[signals[i]] - realized[i]).abs() <= 1e-9);
            assert!((exact[signals[i]] - realized[i]).abs() <= 1e-9);
            let range = utility_range(&prefs, &spec, i);
            for s in 0..space.size() {
                gaps.push((frozen[s] - exact[s]).abs() / range);
            }
        }
    }
    gaps.sort_by(f64::total_cmp);
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let max = *gaps.last().unwrap();
    let flagged = gaps.iter().filter(|&&g| g > 0.05).count() as f64 / gaps.len() as f64;
    println!(
        "frozen vs exact over {} payoffs: mean gap {mean:.5}, max gap {max:.5} of the utility range, {:.2}% above 5%",
        gaps.len(),
        100.0 * flagged
    );
    assert!(mean <= 0.01, "mean gap {mean}");
    assert!(flagged <= 0.05, "{flagged} of payoffs off by more than 5%");
}
