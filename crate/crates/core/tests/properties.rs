//! Randomised invariants across the public API.

use diplomat::domain::{enumerate_deals, random_scenario, welfare_optimal_greedy, GeneratorConfig, Scenario};
use diplomat::env::{AgentAction, EnvConfig, NegotiationEnv};
use diplomat::evaluation::{dominates, gini, pareto_front, read_episodes_csv, write_episodes_csv, EpisodeRecord};
use diplomat::protocol::MessageTag;
use diplomat::training::{compute_gae, normalize_advantages};
use proptest::prelude::*;

fn small_scenario() -> impl Strategy<Value = Scenario> {
    (2usize..=4, 1usize..=3, 2usize..=5, any::<u64>()).prop_map(|(n, m, k, seed)| {
        let gen = GeneratorConfig {
            agents: (n, n),
            issues: (m, m),
            values: (k, k),
            opposed_prob: 0.5,
            ..GeneratorConfig::default()
        };
        random_scenario(&gen, seed).unwrap()
    })
}

fn welfare(s: &Scenario, d: &diplomat::domain::Deal) -> f64 {
    (0..s.num_agents).map(|i| s.utility(i, d).unwrap()).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn utilities_stay_in_unit_interval(s in small_scenario()) {
        let deals: Vec<_> = enumerate_deals(&s).unwrap().collect();
        prop_assert_eq!(deals.len() as u128, s.deal_count());
        for d in &deals {
            for i in 0..s.num_agents {
                let u = s.utility(i, d).unwrap();
                prop_assert!((0.0..=1.0 + 1e-12).contains(&u));
            }
        }
    }

    #[test]
    fn scenario_json_round_trips(s in small_scenario()) {
        let back = Scenario::from_json(&s.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn greedy_optimum_matches_exhaustive(s in small_scenario()) {
        let best = enumerate_deals(&s).unwrap().map(|d| welfare(&s, &d)).fold(f64::MIN, f64::max);
        let greedy = welfare(&s, &welfare_optimal_greedy(&s));
        prop_assert!((best - greedy).abs() < 1e-9, "{best} vs {greedy}");
    }

    #[test]
    fn pareto_front_is_exactly_the_undominated_set(s in small_scenario()) {
        let front = pareto_front(&s).unwrap();
        let all: Vec<_> = enumerate_deals(&s)
            .unwrap()
            .map(|d| {
                let u: Vec<f64> = (0..s.num_agents).map(|i| s.utility(i, &d).unwrap()).collect();
                (d, u)
            })
            .collect();
        for (d, u) in &all {
            let undominated = !all.iter().any(|(_, v)| dominates(v, u));
            prop_assert_eq!(front.contains(d), undominated);
        }
        // the welfare optimum is never dominated
        prop_assert!(front.contains(&welfare_optimal_greedy(&s)));
    }

    #[test]
    fn random_play_terminates_with_finite_consistent_rewards(
        s in small_scenario(),
        picks in prop::collection::vec((0usize..7, 0.0f64..=1.0), 64),
        phase_free in any::<bool>(),
    ) {
        let budget = s.round_budgets.total();
        let n = s.num_agents;
        let config = EnvConfig { phase_free, ..EnvConfig::default() };
        let (mut env, _) = NegotiationEnv::reset(s, config, 11).unwrap();
        let mut steps = 0;
        let mut k = 0;
        while !env.is_done() {
            let actions: Vec<AgentAction> = (0..n)
                .map(|_| {
                    let (t, c) = picks[k % picks.len()];
                    k += 1;
                    AgentAction::new(MessageTag::ALL[t], c)
                })
                .collect();
            let r = env.step(&actions).unwrap();
            steps += 1;
            prop_assert_eq!(r.observations.len(), n);
            for b in &r.rewards {
                prop_assert!(b.total.is_finite());
            }
            prop_assert_eq!(r.done, env.is_done());
        }
        prop_assert!(steps <= budget);
        let result = env.result().unwrap();
        prop_assert_eq!(result.utilities.len(), n);
        if let Some(deal) = result.outcome.deal() {
            for (i, u) in result.utilities.iter().enumerate() {
                prop_assert_eq!(*u, env.scenario().utility(i, deal).unwrap());
            }
        }
    }

    #[test]
    fn gini_bounds_and_scale_invariance(
        u in prop::collection::vec(0.0f64..1.0, 1..12),
        scale in 0.1f64..10.0,
    ) {
        let g = gini(&u).unwrap();
        prop_assert!((0.0..1.0).contains(&g));
        let scaled: Vec<f64> = u.iter().map(|x| x * scale).collect();
        prop_assert!((gini(&scaled).unwrap() - g).abs() < 1e-9);
    }

    #[test]
    fn gae_with_unit_discount_is_reward_to_go(
        steps in prop::collection::vec((-1.0f64..1.0, any::<bool>()), 1..40),
    ) {
        let rewards: Vec<f64> = steps.iter().map(|s| s.0).collect();
        let mut dones: Vec<bool> = steps.iter().map(|s| s.1).collect();
        *dones.last_mut().unwrap() = true;
        let zeros = vec![0.0; rewards.len()];
        let (adv, ret) = compute_gae(&rewards, &zeros, &dones, 0.0, 1.0, 1.0).unwrap();
        let mut to_go = 0.0;
        for t in (0..rewards.len()).rev() {
            if dones[t] {
                to_go = 0.0;
            }
            to_go += rewards[t];
            prop_assert!((adv[t] - to_go).abs() < 1e-9);
            prop_assert!((ret[t] - to_go).abs() < 1e-9);
        }
    }

    #[test]
    fn normalised_advantages_have_zero_mean_unit_std(adv in prop::collection::vec(-5.0f64..5.0, 2..64)) {
        let z = normalize_advantages(&adv);
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        prop_assert!(mean.abs() < 1e-9);
        let var = z.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        prop_assert!(var < 1e-9 || (var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn episode_csv_round_trips(
        rows in prop::collection::vec(
            (2usize..5, any::<bool>(), 1usize..12, prop::option::of(any::<bool>())),
            1..10,
        ),
    ) {
        let records: Vec<EpisodeRecord> = rows
            .iter()
            .enumerate()
            .map(|(i, &(n, agreement, rounds, pareto))| EpisodeRecord {
                episode_id: i,
                seed: 1000 + i as u64,
                num_agents: n,
                num_issues: 1 + i % 3,
                agreement,
                rounds,
                utilities: (0..n).map(|j| (i * 7 + j) as f64 / 37.0).collect(),
                objective: i as f64 * 0.1 - 0.3,
                pareto: if agreement { pareto } else { None },
            })
            .collect();
        let mut buf = Vec::new();
        write_episodes_csv(&mut buf, &records).unwrap();
        prop_assert_eq!(read_episodes_csv(&buf[..]).unwrap(), records);
    }
}
