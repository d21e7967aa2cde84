use diffctl::cost::{mc_cost_pomdp, mc_cost_pomdp_direct, mc_cost_team_coupled, mc_cost_team_coupled_direct};
use diffctl::fixtures;
use diffctl::info::simulate_pomdp_reference;
use diffctl::info::simulate_team_decoupled;
use diffctl::policy::{
    interpolate, interpolate_team, quantize_actions, DecisionRule, Policy, StateCells, TeamPolicyTuple,
};
use diffctl::sde::{observation_stream, McConfig, NoisePlan, TimeGrid, STATE_STREAM};
use diffctl::solver::{
    backward_induction, build_discrete_mdp, evaluate_markov_table, exhaustive_optimum, random_challenger,
    team_brute_force, AgentClass, DiscreteControlProblem, KernelOptions, TeamProblem,
};
use diffctl::Error;
use proptest::prelude::*;

fn table_problem(s: usize, a: usize, steps: usize, weights: &[f64], costs: &[f64]) -> DiscreteControlProblem {
    let kernel = (0..s * a)
        .map(|r| {
            let w = &weights[r * s..(r + 1) * s];
            let total: f64 = w.iter().sum();
            w.iter().map(|v| v / total).collect()
        })
        .collect();
    DiscreteControlProblem {
        horizon_steps: steps,
        h: 0.5,
        cells: StateCells::uniform_1d(0.0, 1.0, s).unwrap(),
        actions: quantize_actions(&[-1.0], &[1.0], &[a]).unwrap(),
        kernel,
        stage_cost: costs[..s * a].to_vec(),
        terminal: costs[s * a..s * a + s].to_vec(),
        samples_per_row: 1,
        out_of_box: 0,
    }
}

fn small_problem() -> impl Strategy<Value = DiscreteControlProblem> {
    (1usize..=3, 1usize..=3, 1usize..=3).prop_flat_map(|(s, a, n)| {
        (
            prop::collection::vec(0.01f64..1.0, s * a * s),
            prop::collection::vec(0.0f64..2.0, s * a + s),
        )
            .prop_map(move |(w, c)| table_problem(s, a, n, &w, &c))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn backward_induction_is_the_exhaustive_optimum(p in small_problem()) {
        let (values, policy) = backward_induction(&p).unwrap();
        let brute = exhaustive_optimum(&p).unwrap();
        for (s, b) in brute.iter().enumerate() {
            prop_assert!((values.initial(s) - b).abs() <= 1e-12);
        }
        // The returned table attains the value it reports.
        let DecisionRule::Markov(m) = &policy.rule else { panic!("backward induction returns a Markov table") };
        let table: Vec<Vec<usize>> = m.rows.iter().map(|rows| rows.iter().map(|r| r.iter().position(|w| *w == 1.0).unwrap()).collect()).collect();
        prop_assert_eq!(evaluate_markov_table(&p, &table), values);
    }

    #[test]
    fn values_are_monotone_in_the_terminal_cost(p in small_problem(), bump in 0.0f64..1.0) {
        let mut q = p.clone();
        q.terminal.iter_mut().for_each(|t| *t += bump);
        let (a, _) = backward_induction(&p).unwrap();
        let (b, _) = backward_induction(&q).unwrap();
        for s in 0..p.states() {
            prop_assert!((b.initial(s) - a.initial(s) - bump).abs() <= 1e-12);
        }
    }

    #[test]
    fn future_observations_never_change_past_actions(k in 0usize..4, scale in -5.0f64..5.0) {
        let grid = TimeGrid::new(1.0, 4, 4).unwrap();
        let model = fixtures::pomdp_informative();
        let policy = interpolate(fixtures::latest_sign_policy(fixtures::three_actions(), 4, 4), grid).unwrap();
        let w = NoisePlan::generate(&grid, 1, 3, 0, STATE_STREAM);
        let y = NoisePlan::generate(&grid, 1, 3, 0, observation_stream(0));
        let mut altered = y.clone();
        let from = k * grid.inner_refine();
        for v in &mut altered.increments[from..] {
            *v *= scale;
        }
        let a = simulate_pomdp_reference(&model, &policy, &w, &y, &[0.2]).unwrap();
        let b = simulate_pomdp_reference(&model, &policy, &w, &altered, &[0.2]).unwrap();
        prop_assert_eq!(&a.action_indices[0][..=k], &b.action_indices[0][..=k]);
    }
}

#[test]
fn estimated_kernel_rows_are_distributions() {
    let grid = TimeGrid::new(1.0, 4, 8).unwrap();
    let cells = StateCells::uniform_1d(-2.0, 2.0, 5).unwrap();
    let opts = KernelOptions::new(300, 4);
    let p = build_discrete_mdp(
        &fixtures::tanh_drift(),
        &fixtures::tanh_cost(),
        &cells,
        &fixtures::three_actions(),
        &grid,
        &opts,
    )
    .unwrap();
    assert_eq!(p.kernel.len(), 15);
    assert_eq!(p.samples_per_row, 300);
    for row in &p.kernel {
        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
    assert!(p
        .stage_cost
        .iter()
        .chain(&p.terminal)
        .all(|c| c.is_finite() && *c >= 0.0));
}

#[test]
fn undersampled_kernels_are_rejected() {
    let grid = TimeGrid::new(1.0, 2, 2).unwrap();
    let cells = StateCells::uniform_1d(-1.0, 1.0, 2).unwrap();
    let opts = KernelOptions::new(10, 0);
    let r = build_discrete_mdp(
        &fixtures::tanh_drift(),
        &fixtures::tanh_cost(),
        &cells,
        &fixtures::three_actions(),
        &grid,
        &opts,
    );
    assert!(matches!(r, Err(Error::UndersampledRow { .. })));
}

#[test]
fn silent_channel_reweighting_is_the_direct_estimate() {
    let grid = TimeGrid::new(1.0, 2, 8).unwrap();
    let model = fixtures::pomdp_uninformative();
    let policy = interpolate(fixtures::latest_sign_policy(fixtures::two_actions(), 2, 2), grid).unwrap();
    let mc = McConfig::new(300, 8);
    let cost = fixtures::terminal_square_cost();
    let r = mc_cost_pomdp(&model, &policy, &cost, &mc, &[0.5]).unwrap();
    let d = mc_cost_pomdp_direct(&model, &policy, &cost, &mc, &[0.5]).unwrap();
    assert_eq!(r, d);
}

#[test]
fn uncoupled_team_reweighting_is_the_direct_estimate() {
    let grid = TimeGrid::new(1.0, 2, 8).unwrap();
    let model = fixtures::team_decoupled();
    let p = fixtures::sign_feedback_policy(2);
    let team = interpolate_team(
        TeamPolicyTuple {
            agents: vec![p.clone(), p],
        },
        grid,
    )
    .unwrap();
    let mc = McConfig::new(300, 8);
    let x0 = fixtures::team_initial_states();
    let r = mc_cost_team_coupled(&model, &team, &fixtures::team_cost(), &mc, &x0).unwrap();
    let d = mc_cost_team_coupled_direct(&model, &team, &fixtures::team_cost(), &mc, &x0).unwrap();
    assert!((r.mean - d.mean).abs() <= 1e-12, "{r:?} vs {d:?}");
}

#[test]
fn agent_paths_ignore_the_other_agents_policy() {
    let grid = TimeGrid::new(1.0, 4, 4).unwrap();
    let model = fixtures::team_coupled();
    let noise: Vec<NoisePlan> = model
        .agents
        .iter()
        .map(|a| NoisePlan::generate(&grid, 1, 5, 2, a.stream))
        .collect();
    let x0 = fixtures::team_initial_states();
    let fb = fixtures::sign_feedback_policy(4);
    let other = Policy::constant_open_loop(fixtures::three_actions(), 2, 4);
    let a = interpolate_team(
        TeamPolicyTuple {
            agents: vec![fb.clone(), fb.clone()],
        },
        grid,
    )
    .unwrap();
    let b = interpolate_team(
        TeamPolicyTuple {
            agents: vec![fb, other],
        },
        grid,
    )
    .unwrap();
    let pa = simulate_team_decoupled(&model, &a, &noise, &x0).unwrap();
    let pb = simulate_team_decoupled(&model, &b, &noise, &x0).unwrap();
    assert_eq!(pa[0].states.values, pb[0].states.values);
    assert_ne!(pa[1].states.values, pb[1].states.values);
}

#[test]
fn decoupled_team_optimum_is_the_sum_of_solo_optima() {
    let grid = TimeGrid::new(1.0, 2, 4).unwrap();
    let mc = McConfig::new(400, 2);
    let model = fixtures::team_decoupled();
    let class = AgentClass::Markov {
        actions: fixtures::two_actions(),
        cells: StateCells::uniform_1d(-1.0, 1.0, 2).unwrap(),
    };
    let x0 = fixtures::team_initial_states();
    let cost = fixtures::team_cost();
    let joint = team_brute_force(
        &TeamProblem::Coupled {
            model: &model,
            cost: &cost,
            x0: &x0,
        },
        &[class.clone(), class.clone()],
        &grid,
        &mc,
    )
    .unwrap();
    let agent_cost = fixtures::agent_cost();
    let mut sum = 0.0;
    for i in 0..2 {
        let solo = model.solo(i).unwrap();
        let x = [x0[i].clone()];
        let p = TeamProblem::Coupled {
            model: &solo,
            cost: &agent_cost,
            x0: &x,
        };
        sum += team_brute_force(&p, std::slice::from_ref(&class), &grid, &mc)
            .unwrap()
            .value
            .mean;
    }
    assert!((joint.value.mean - sum).abs() <= 1e-9, "{} vs {sum}", joint.value.mean);
}

#[test]
fn challengers_are_reproducible_distributions() {
    let grid = TimeGrid::new(1.0, 2, 4).unwrap();
    let class = AgentClass::Markov {
        actions: fixtures::three_actions(),
        cells: StateCells::uniform_1d(-1.0, 1.0, 2).unwrap(),
    };
    let classes = [class.clone(), class];
    let a = random_challenger(&classes, &grid, 7, 3).unwrap();
    assert_eq!(a, random_challenger(&classes, &grid, 7, 3).unwrap());
    assert_ne!(a, random_challenger(&classes, &grid, 7, 4).unwrap());
    assert_ne!(a.agents[0], a.agents[1]);
    for p in &a.agents {
        for k in 0..2 {
            for row in p.rows_at(k) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
        }
    }
}
