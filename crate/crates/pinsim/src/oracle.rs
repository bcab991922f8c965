//! Ground-truth game analysis by exhaustive enumeration: pure Nash
//! equilibria, efficient assignments, expected payoffs, and the mean-field
//! drift of the learning dynamics.
//!
//! Everything here is exact finite summation over pure profiles, capped at
//! [`crate::profiles::ENUMERATION_CAP`] profiles; larger games are refused so
//! callers can fall back to sampling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{common_utility, AssignmentProfile, GameSpec};
use crate::profiles::{check_enumerable, ProfileIter};
use crate::simplex::{perturb, SimplexPoint};

/// Default tolerance on utility comparisons in the Nash test.
pub const NASH_TOLERANCE: f64 = 1e-9;

/// Pure Nash equilibria and efficient assignments of a game, with the full
/// objective landscape attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    /// Profiles where no single thread can raise the utility by more than
    /// `tolerance` with a unilateral CPU switch; lexicographic order.
    pub pure_nash: Vec<AssignmentProfile>,
    /// Profiles within `tolerance` of the maximum objective; lexicographic
    /// order. Always a subset of `pure_nash` under the shared utility.
    pub efficient: Vec<AssignmentProfile>,
    /// Objective value `f` of every pure profile, in enumeration order.
    pub f_values: Vec<(AssignmentProfile, f64)>,
    pub tolerance: f64,
}

impl EquilibriumReport {
    pub fn f_max(&self) -> f64 {
        self.f_values
            .iter()
            .map(|(_, f)| *f)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest common utility over pure profiles.
    pub fn u_max(&self, game: &GameSpec) -> f64 {
        self.f_max() / game.speed_scale
    }
}

/// Expected one-step strategy motion per agent under the perturbed dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    /// One drift vector per agent, each of length `m`.
    pub drift: Vec<Vec<f64>>,
    /// Max over agents and coordinates of the absolute drift.
    pub sup_norm: f64,
}

/// Enumerates every pure profile and classifies Nash equilibria (weak
/// inequality: ties count) and efficient assignments.
pub fn enumerate_pure_nash(game: &GameSpec, tol: f64) -> Result<EquilibriumReport> {
    if !tol.is_finite() || tol < 0.0 {
        return Err(Error::invalid(format!("tolerance must be >= 0, got {tol}")));
    }
    let n = game.num_agents();
    let m = game.num_cpus();
    check_enumerable(n, m)?;

    let mut f_values = Vec::new();
    let mut pure_nash = Vec::new();
    let mut f_max = f64::NEG_INFINITY;

    for profile in ProfileIter::new(n, m) {
        let u = common_utility(&profile, game)?;
        let f = u * game.speed_scale;
        f_max = f_max.max(f);

        let mut is_nash = true;
        'agents: for i in 0..n {
            let here = profile.cpu_of()[i];
            for j in 0..m {
                if j == here {
                    continue;
                }
                let u_dev = common_utility(&profile.with_move(i, j), game)?;
                if u_dev > u + tol {
                    is_nash = false;
                    break 'agents;
                }
            }
        }
        if is_nash {
            pure_nash.push(profile.clone());
        }
        f_values.push((profile, f));
    }

    let efficient = f_values
        .iter()
        .filter(|(_, f)| *f >= f_max - tol)
        .map(|(p, _)| p.clone())
        .collect();

    Ok(EquilibriumReport {
        pure_nash,
        efficient,
        f_values,
        tolerance: tol,
    })
}

/// Expected payoff of each action of `agent`, holding the other agents at
/// their mixed strategies: entry `j` sums `u(j, a_{-i})` over all opponent
/// pure profiles weighted by their joint probability. Exact summation.
pub fn expected_payoff_vector(
    sigma_profile: &[SimplexPoint],
    game: &GameSpec,
    agent: usize,
) -> Result<Vec<f64>> {
    let n = game.num_agents();
    let m = game.num_cpus();
    if sigma_profile.len() != n {
        return Err(Error::invalid(format!(
            "strategy profile covers {} agents but game has {n}",
            sigma_profile.len()
        )));
    }
    if agent >= n {
        return Err(Error::invalid(format!("agent {agent} out of range for {n} agents")));
    }
    for (i, sigma) in sigma_profile.iter().enumerate() {
        if sigma.len() != m {
            return Err(Error::invalid(format!(
                "agent {i} strategy has {} actions, game has {m}",
                sigma.len()
            )));
        }
    }
    check_enumerable(n.saturating_sub(1), m)?;

    let opponents: Vec<usize> = (0..n).filter(|i| *i != agent).collect();
    let mut payoff = vec![0.0_f64; m];
    // Iterate opponent pure profiles with an odometer over the opponents.
    for opp in ProfileIter::new(opponents.len(), m) {
        let mut weight = 1.0;
        for (slot, &i) in opponents.iter().enumerate() {
            weight *= sigma_profile[i].weights()[opp.cpu_of()[slot]];
        }
        if weight == 0.0 {
            continue;
        }
        let mut full = vec![0usize; n];
        for (slot, &i) in opponents.iter().enumerate() {
            full[i] = opp.cpu_of()[slot];
        }
        for (j, entry) in payoff.iter_mut().enumerate() {
            full[agent] = j;
            *entry += weight * common_utility(&AssignmentProfile::new(full.clone()), game)?;
        }
    }
    Ok(payoff)
}

/// Exact mean-field drift of the nominal strategies at `x_profile`: the
/// expectation of `u(a) * (e_{a_i} - x_i)` with `a` drawn from the
/// lambda-perturbed strategies, summed over all pure profiles.
pub fn mean_field_drift(
    x_profile: &[SimplexPoint],
    game: &GameSpec,
    lambda: f64,
) -> Result<DriftReport> {
    let n = game.num_agents();
    let m = game.num_cpus();
    if x_profile.len() != n {
        return Err(Error::invalid(format!(
            "strategy profile covers {} agents but game has {n}",
            x_profile.len()
        )));
    }
    for (i, x) in x_profile.iter().enumerate() {
        if x.len() != m {
            return Err(Error::invalid(format!(
                "agent {i} strategy has {} actions, game has {m}",
                x.len()
            )));
        }
    }
    check_enumerable(n, m)?;

    let sigma: Vec<SimplexPoint> = x_profile
        .iter()
        .map(|x| perturb(x, lambda))
        .collect::<Result<_>>()?;

    let mut drift = vec![vec![0.0_f64; m]; n];
    for profile in ProfileIter::new(n, m) {
        let mut weight = 1.0;
        for (i, s) in sigma.iter().enumerate() {
            weight *= s.weights()[profile.cpu_of()[i]];
        }
        if weight == 0.0 {
            continue;
        }
        let u = common_utility(&profile, game)?;
        let scaled = weight * u;
        for i in 0..n {
            let chosen = profile.cpu_of()[i];
            let x = x_profile[i].weights();
            for j in 0..m {
                let target = if j == chosen { 1.0 } else { 0.0 };
                drift[i][j] += scaled * (target - x[j]);
            }
        }
    }

    let sup_norm = drift
        .iter()
        .flat_map(|row| row.iter())
        .map(|d| d.abs())
        .fold(0.0, f64::max);

    Ok(DriftReport { drift, sup_norm })
}

/// True when the mean-field drift at `x_profile` is within `tol` in sup norm.
pub fn is_stationary(
    x_profile: &[SimplexPoint],
    game: &GameSpec,
    lambda: f64,
    tol: f64,
) -> Result<bool> {
    Ok(mean_field_drift(x_profile, game, lambda)?.sup_norm <= tol)
}

/// Strategy profile sitting exactly at the vertices of a pure profile.
pub fn vertex_strategies(profile: &AssignmentProfile, m: usize) -> Result<Vec<SimplexPoint>> {
    profile
        .cpu_of()
        .iter()
        .map(|&j| SimplexPoint::vertex(m, j))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::Platform;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_thread_game() -> GameSpec {
        GameSpec::new(Platform::idle_unit_cpus(2).unwrap(), vec![1.0, 1.0], 0.0, 1.0).unwrap()
    }

    fn experiment_game() -> GameSpec {
        GameSpec::new(
            Platform::idle_unit_cpus(3).unwrap(),
            vec![1.0, 1.0, 0.5, 1.0],
            0.04,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn anti_coordination_nash_set() {
        // Brute force over the 4 profiles: split placements score f = 1,
        // shared placements f = 0.5, so exactly the splits are Nash.
        let report = enumerate_pure_nash(&two_thread_game(), NASH_TOLERANCE).unwrap();
        let nash: Vec<&[usize]> = report.pure_nash.iter().map(|p| p.cpu_of()).collect();
        assert_eq!(nash, vec![&[0, 1][..], &[1, 0][..]]);
        assert_eq!(report.efficient.len(), 2);
        for (p, f) in &report.f_values {
            let expected = if p.cpu_of()[0] == p.cpu_of()[1] { 0.5 } else { 1.0 };
            assert_eq!(*f, expected);
        }
    }

    #[test]
    fn single_agent_nash_is_argmax() {
        let game = GameSpec::new(
            Platform::new(vec![1.0, 2.0, 2.0], vec![0.0, 0.0, 0.5]).unwrap(),
            vec![1.5],
            0.0,
            2.0,
        )
        .unwrap();
        // Available capacities are (1.0, 2.0, 1.0); the unique argmax of the
        // single thread's speed is CPU 1 where it runs at full demand.
        let report = enumerate_pure_nash(&game, NASH_TOLERANCE).unwrap();
        let nash: Vec<&[usize]> = report.pure_nash.iter().map(|p| p.cpu_of()).collect();
        assert_eq!(nash, vec![&[1][..]]);
        assert_eq!(report.efficient, report.pure_nash);
    }

    #[test]
    fn experiment_game_efficient_structure() {
        // In every efficient profile the three unit-demand threads occupy
        // three distinct CPUs and the half-demand thread shares with one.
        let report = enumerate_pure_nash(&experiment_game(), NASH_TOLERANCE).unwrap();
        assert!(!report.efficient.is_empty());
        for p in &report.efficient {
            let cpus = p.cpu_of();
            let mut units = [cpus[0], cpus[1], cpus[3]];
            units.sort_unstable();
            assert_eq!(units, [0, 1, 2], "unit threads not spread in {cpus:?}");
            assert!(units.contains(&cpus[2]));
        }
        // Efficiency implies Nash under the shared utility.
        for p in &report.efficient {
            assert!(report.pure_nash.contains(p));
        }
    }

    #[test]
    fn enumerate_refuses_oversized_games() {
        let game = GameSpec::new(
            Platform::idle_unit_cpus(4).unwrap(),
            vec![0.5; 12],
            0.0,
            1.0,
        )
        .unwrap();
        assert!(matches!(
            enumerate_pure_nash(&game, NASH_TOLERANCE),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn expected_payoff_at_pure_opponents_is_exact_utility() {
        let game = experiment_game();
        let m = game.num_cpus();
        let opponents: AssignmentProfile = vec![0, 1, 2, 0].into();
        let sigma = vertex_strategies(&opponents, m).unwrap();
        let payoff = expected_payoff_vector(&sigma, &game, 2).unwrap();
        for (j, entry) in payoff.iter().enumerate() {
            let expected = common_utility(&opponents.with_move(2, j), &game).unwrap();
            assert!((entry - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn expected_payoff_single_agent_lists_pure_utilities() {
        let game = GameSpec::new(
            Platform::new(vec![1.0, 0.5], vec![0.0, 0.0]).unwrap(),
            vec![1.0],
            0.0,
            1.0,
        )
        .unwrap();
        let sigma = vec![SimplexPoint::uniform(2).unwrap()];
        let payoff = expected_payoff_vector(&sigma, &game, 0).unwrap();
        assert_eq!(payoff, vec![1.0, 0.5]);
    }

    #[test]
    fn expected_payoff_against_uniform_opponent_averages() {
        // Two agents, two CPUs: against a uniform opponent each entry is the
        // average of the two pure utilities (hand enumeration of 2 terms).
        let game = two_thread_game();
        let sigma = vec![SimplexPoint::uniform(2).unwrap(), SimplexPoint::uniform(2).unwrap()];
        let payoff = expected_payoff_vector(&sigma, &game, 0).unwrap();
        let split = common_utility(&vec![0, 1].into(), &game).unwrap();
        let shared = common_utility(&vec![0, 0].into(), &game).unwrap();
        let expected = 0.5 * (split + shared);
        assert!((payoff[0] - expected).abs() < 1e-15);
        assert!((payoff[1] - expected).abs() < 1e-15);

        // Monte-Carlo cross-check of the same quantity.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let draws = 200_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let opp = usize::from(rng.gen::<f64>() < 0.5);
            acc += common_utility(&vec![0, opp].into(), &game).unwrap();
        }
        assert!((payoff[0] - acc / draws as f64).abs() < 0.005);
    }

    #[test]
    fn every_pure_profile_is_stationary_without_perturbation() {
        // Vertex absorption is what makes lambda > 0 necessary: with zero
        // mutation every one of the 81 pure profiles, equilibrium or not,
        // has exactly zero drift.
        let game = experiment_game();
        for profile in ProfileIter::new(4, 3) {
            let x = vertex_strategies(&profile, game.num_cpus()).unwrap();
            let report = mean_field_drift(&x, &game, 0.0).unwrap();
            assert_eq!(
                report.sup_norm,
                0.0,
                "profile {:?} should be absorbing",
                profile.cpu_of()
            );
            assert!(is_stationary(&x, &game, 0.0, 1e-12).unwrap());
        }
    }

    #[test]
    fn drift_two_action_closed_form() {
        // Single agent, two CPUs, mid-simplex: the two-term expansion gives
        // drift = 0.25 * (u(0) - u(1)) * (1, -1).
        let game = GameSpec::new(
            Platform::new(vec![1.0, 0.5], vec![0.0, 0.0]).unwrap(),
            vec![1.0],
            0.0,
            1.0,
        )
        .unwrap();
        let u0 = common_utility(&vec![0].into(), &game).unwrap();
        let u1 = common_utility(&vec![1].into(), &game).unwrap();
        let x = vec![SimplexPoint::new(vec![0.5, 0.5]).unwrap()];
        let report = mean_field_drift(&x, &game, 0.0).unwrap();
        let expected = 0.25 * (u0 - u1);
        assert!((report.drift[0][0] - expected).abs() < 1e-15);
        assert!((report.drift[0][1] + expected).abs() < 1e-15);
    }

    #[test]
    fn interior_non_equilibrium_point_is_not_stationary() {
        let game = two_thread_game();
        let x = vec![
            SimplexPoint::new(vec![0.6, 0.4]).unwrap(),
            SimplexPoint::new(vec![0.6, 0.4]).unwrap(),
        ];
        assert!(!is_stationary(&x, &game, 0.0, 1e-6).unwrap());
    }

    #[test]
    fn perturbed_drift_at_efficient_vertices_is_lambda_small() {
        let game = experiment_game();
        let lambda = 0.005;
        let report = enumerate_pure_nash(&game, NASH_TOLERANCE).unwrap();
        let u_max = report.u_max(&game);
        for profile in &report.efficient {
            let x = vertex_strategies(profile, game.num_cpus()).unwrap();
            let drift = mean_field_drift(&x, &game, lambda).unwrap();
            assert!(
                drift.sup_norm <= 2.0 * lambda * u_max,
                "sup norm {} exceeds 2*lambda*u_max at {:?}",
                drift.sup_norm,
                profile.cpu_of()
            );
            // The perturbed equilibrium strategies pass the stationarity
            // test at the matching tolerance.
            let perturbed: Vec<SimplexPoint> = profile
                .cpu_of()
                .iter()
                .map(|&j| perturb(&SimplexPoint::vertex(game.num_cpus(), j).unwrap(), lambda).unwrap())
                .collect();
            assert!(is_stationary(&perturbed, &game, lambda, 3.0 * lambda * u_max).unwrap());
        }
    }

    #[test]
    fn drift_rows_are_tangent_to_the_simplex() {
        let game = experiment_game();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let x: Vec<SimplexPoint> = (0..4)
                .map(|_| {
                    let raw: Vec<f64> = (0..3).map(|_| rng.gen_range(0.01..1.0)).collect();
                    let total: f64 = raw.iter().sum();
                    SimplexPoint::new(raw.iter().map(|w| w / total).collect()).unwrap()
                })
                .collect();
            let report = mean_field_drift(&x, &game, 0.02).unwrap();
            for row in &report.drift {
                let s: f64 = row.iter().sum();
                assert!(s.abs() <= 1e-12, "drift row sums to {s}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn nash_set_is_invariant_under_thread_relabeling(
            demands in proptest::collection::vec(0.25f64..1.0, 2..5),
            seed in any::<u64>()
        ) {
            let n = demands.len();
            let m = 3;
            let game = GameSpec::new(
                Platform::idle_unit_cpus(m).unwrap(),
                demands.clone(),
                0.02,
                1.0,
            ).unwrap();

            // Deterministic pseudo-random permutation of the threads.
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..n).rev() {
                order.swap(i, rng.gen_range(0..=i));
            }
            let permuted = GameSpec::new(
                Platform::idle_unit_cpus(m).unwrap(),
                order.iter().map(|&i| demands[i]).collect(),
                0.02,
                1.0,
            ).unwrap();

            let base = enumerate_pure_nash(&game, NASH_TOLERANCE).unwrap();
            let relabeled = enumerate_pure_nash(&permuted, NASH_TOLERANCE).unwrap();

            let mut mapped: Vec<Vec<usize>> = base
                .pure_nash
                .iter()
                .map(|p| order.iter().map(|&i| p.cpu_of()[i]).collect())
                .collect();
            mapped.sort();
            let mut got: Vec<Vec<usize>> =
                relabeled.pure_nash.iter().map(|p| p.cpu_of().to_vec()).collect();
            got.sort();
            prop_assert_eq!(mapped, got);
        }
    }
}
