//! One function per experiment kind. Each reads only its config and writes
//! estimates, values and pass/fail checks into an [`Outcome`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, ExperimentKind};
use super::record::Outcome;
use crate::cost::{
    mc_cost_direct, mc_cost_pomdp, mc_cost_pomdp_direct, mc_cost_reweighted, mc_cost_team_coupled,
    mc_cost_team_coupled_direct, mc_cost_team_local_meas, mc_cost_team_local_meas_direct, CostSpec, Normalization,
};
use crate::error::{Error, Result};
use crate::estimate::EstimateWithError;
use crate::fixtures;
use crate::girsanov::{
    coupling_log_weights, drift_log_weights, second_moment_bound_check, team_observation_log_weights,
    weight_l1_distance, weight_mean,
};
use crate::info::{
    anticipative_probe_batch, audit_batch_coupled, audit_batch_full, audit_batch_local_meas, independence_audit,
    AuditBatch, CoupledLocalStateTeamModel, LocalMeasurementTeamModel, PartiallyObservedModel,
};
use crate::policy::{
    interpolate, interpolate_team, perturb_policy, quantize_actions, ActionGrid, InterpolatedPolicy,
    InterpolatedTeamPolicy, ObservationQuantizer, Policy, StateCells, TeamPolicyTuple,
};
use crate::sde::{
    derive_seed, dynkin_residual, girsanov_constant, validate_assumptions, Bump, BumpWeight, DiffusionModel, McConfig,
    ProbeBox, TestFunction, TimeGrid,
};
use crate::solver::{
    backward_induction, build_discrete_mdp, enumerate_wide_sense, exhaustive_optimum, random_challenger,
    solve_and_lift, team_brute_force, AgentClass, DiscreteControlProblem, KernelOptions, TeamProblem, WideSenseClass,
};

pub fn run(c: &ExperimentConfig) -> Result<Outcome> {
    let mut out = Outcome::default();
    match c.kind {
        ExperimentKind::Validate => validate(c, &mut out)?,
        ExperimentKind::Martingale => martingale(c, &mut out)?,
        ExperimentKind::SecondMoment => second_moment(c, &mut out)?,
        ExperimentKind::L1Continuity => l1_continuity(c, &mut out)?,
        ExperimentKind::EstimatorEquivalence => estimator_equivalence(c, &mut out)?,
        ExperimentKind::Dynkin => dynkin(c, &mut out)?,
        ExperimentKind::HSweep => h_sweep(c, &mut out)?,
        ExperimentKind::LiftConsistency => lift_consistency(c, &mut out)?,
        ExperimentKind::DpExact => dp_exact(c, &mut out)?,
        ExperimentKind::PomdpEnum => pomdp_enum(c, &mut out)?,
        ExperimentKind::TeamEnum => team_enum(c, &mut out)?,
        ExperimentKind::IndependenceAudit => audit(c, &mut out)?,
    }
    Ok(out)
}

fn grid(c: &ExperimentConfig) -> Result<TimeGrid> {
    TimeGrid::new(c.grid.horizon, c.grid.macro_steps, c.grid.inner_refine)
}

fn mc(c: &ExperimentConfig) -> McConfig {
    McConfig::new(c.sampling.paths, c.seed)
}

fn actions(c: &ExperimentConfig) -> Result<ActionGrid> {
    quantize_actions(&c.actions.lo, &c.actions.hi, &c.actions.levels)
}

fn cells(c: &ExperimentConfig) -> Result<StateCells> {
    StateCells::new(c.state.lo.clone(), c.state.hi.clone(), c.state.cells.clone())
}

fn quantizer(c: &ExperimentConfig) -> Result<ObservationQuantizer> {
    ObservationQuantizer::new(
        c.observation.lo.clone(),
        c.observation.hi.clone(),
        c.observation.levels.clone(),
    )
}

fn full_model(c: &ExperimentConfig) -> Result<DiffusionModel> {
    fixtures::fully_observed(&c.fixture).ok_or_else(|| Error::Config(format!("unknown fixture '{}'", c.fixture)))
}

fn probe_box(c: &ExperimentConfig) -> ProbeBox {
    ProbeBox {
        state_lo: c.state.lo.clone(),
        state_hi: c.state.hi.clone(),
        action_lo: c.actions.lo.clone(),
        action_hi: c.actions.hi.clone(),
    }
}

fn pomdp(c: &ExperimentConfig, mut m: PartiallyObservedModel) -> PartiallyObservedModel {
    m.inner.coupling = c.observation.coupling;
    m
}

fn local_team(c: &ExperimentConfig) -> LocalMeasurementTeamModel {
    let mut m = fixtures::team_local_meas();
    m.coupling = c.observation.coupling;
    m
}

fn single(p: InterpolatedPolicy) -> InterpolatedTeamPolicy {
    InterpolatedTeamPolicy { agents: vec![p] }
}

fn k_se(c: &ExperimentConfig) -> f64 {
    c.tolerance.se_multiplier
}

/// Markov rule on the configured cells: the last action on cells centred
/// below zero, the first action elsewhere.
fn feedback_policy(c: &ExperimentConfig, steps: usize) -> Result<Policy> {
    let cells = cells(c)?;
    let actions = actions(c)?;
    let last = actions.len() - 1;
    let row: Vec<usize> = (0..cells.count())
        .map(|i| if cells.center(i)[0] < 0.0 { last } else { 0 })
        .collect();
    Policy::deterministic_markov(actions, cells, &vec![row; steps])
}

fn uniform_policy(c: &ExperimentConfig, steps: usize) -> Result<Policy> {
    let a = actions(c)?;
    let n = a.len();
    Policy::open_loop(a, vec![vec![1.0 / n as f64; n]; steps])
}

fn latest_sign(c: &ExperimentConfig, steps: usize) -> Result<Policy> {
    if c.observation.history == 0 {
        return Err(Error::Config("observation.history must be at least 1".into()));
    }
    Ok(fixtures::latest_sign_policy(actions(c)?, steps, c.observation.history))
}

/// Three policies for the fully observed fixture: state feedback, a
/// constant action and the uniform relaxed control.
fn full_policies(c: &ExperimentConfig, steps: usize) -> Result<Vec<(&'static str, Policy)>> {
    let a = actions(c)?;
    let last = a.len() - 1;
    Ok(vec![
        ("feedback", feedback_policy(c, steps)?),
        ("constant", Policy::constant_open_loop(a, last, steps)),
        ("uniform", uniform_policy(c, steps)?),
    ])
}

/// Observation feedback, constant and uniform, for one observer.
fn observed_policies(c: &ExperimentConfig, steps: usize) -> Result<Vec<(&'static str, Policy)>> {
    Ok(vec![
        ("latest_sign", latest_sign(c, steps)?),
        ("constant", Policy::constant_open_loop(actions(c)?, 0, steps)),
        ("uniform", uniform_policy(c, steps)?),
    ])
}

fn local_team_tuples(c: &ExperimentConfig, steps: usize) -> Result<Vec<(&'static str, TeamPolicyTuple)>> {
    let a = actions(c)?;
    let last = a.len() - 1;
    let ls = latest_sign(c, steps)?;
    let u = uniform_policy(c, steps)?;
    Ok(vec![
        (
            "latest_sign",
            TeamPolicyTuple {
                agents: vec![ls.clone(), ls],
            },
        ),
        (
            "constant",
            TeamPolicyTuple {
                agents: vec![
                    Policy::constant_open_loop(a.clone(), last, steps),
                    Policy::constant_open_loop(a, 0, steps),
                ],
            },
        ),
        (
            "uniform",
            TeamPolicyTuple {
                agents: vec![u.clone(), u],
            },
        ),
    ])
}

fn coupled_team_tuples(c: &ExperimentConfig, steps: usize) -> Result<Vec<(&'static str, TeamPolicyTuple)>> {
    let a = actions(c)?;
    let last = a.len() - 1;
    let fb = feedback_policy(c, steps)?;
    let u = uniform_policy(c, steps)?;
    Ok(vec![
        (
            "feedback",
            TeamPolicyTuple {
                agents: vec![fb.clone(), fb],
            },
        ),
        (
            "constant",
            TeamPolicyTuple {
                agents: vec![
                    Policy::constant_open_loop(a.clone(), 0, steps),
                    Policy::constant_open_loop(a, last, steps),
                ],
            },
        ),
        (
            "uniform",
            TeamPolicyTuple {
                agents: vec![u.clone(), u],
            },
        ),
    ])
}

fn check_within(out: &mut Outcome, name: String, e: &EstimateWithError, target: f64, k: f64) {
    let passed = e.within(target, k);
    out.check(
        name,
        passed,
        format!("|{:.6} - {:.6}| <= {k} * {:.6}", e.mean, target, e.standard_error),
    );
}

fn check_agree(out: &mut Outcome, name: String, a: &EstimateWithError, b: &EstimateWithError, k: f64) {
    let passed = a.agrees_with(b, k);
    out.check(
        name,
        passed,
        format!("|{:.6} - {:.6}| <= {k} * {:.6}", a.mean, b.mean, a.combined_se(b)),
    );
}

fn validate(c: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    let model = full_model(c)?;
    let r = validate_assumptions(&model, c.sampling.probes, &probe_box(c))?;
    out.value("max_drift", r.max_drift);
    out.value("max_diffusion_norm", r.max_diffusion_norm);
    out.value("min_eigenvalue", r.min_eigenvalue);
    out.value("min_singular_value", r.min_singular_value);
    out.value("max_girsanov_integrand", r.max_girsanov_integrand);
    out.check(
        "drift_bound",
        r.bound_ok,
        format!(
            "max {:.6} vs declared {:.6}",
            r.max_drift.max(r.max_diffusion_norm),
            r.drift_bound
        ),
    );
    out.check(
        "ellipticity",
        r.ellipticity_ok,
        format!("min eigenvalue {:.6e} vs {:.6e}", r.min_eigenvalue, r.ellipticity),
    );
    out.check(
        "invertible",
        r.invertible,
        format!("min singular value {:.6e}", r.min_singular_value),
    );
    Ok(())
}

fn martingale(c: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    let (g, mc, k) = (grid(c)?, mc(c), k_se(c));
    let n = g.macro_steps();
    let model = full_model(c)?;
    let fb = interpolate(feedback_policy(c, n)?, g)?;
    let mut record = |name: &str, lw: Vec<f64>| {
        let e = weight_mean(&lw);
        out.estimate(format!("{name}.weight_mean"), e);
        check_within(out, format!("{name}.mean_is_one"), &e, 1.0, k);
    };
    record(&c.fixture, drift_log_weights(&model, &fb, &mc, &c.x0)?);

    let po = pomdp(c, fixtures::pomdp_bounded_g());
    let ls = single(interpolate(latest_sign(c, n)?, g)?);
    record(
        "pomdp_bounded_g",
        team_observation_log_weights(po.as_team(), &ls, &mc, &[fixtures::POMDP_X0])?,
    );

    let team = local_team(c);
    let tuple = interpolate_team(local_team_tuples(c, n)?.swap_remove(0).1, g)?;
    record(
        "team_local_meas",
        team_observation_log_weights(&team, &tuple, &mc, &[fixtures::POMDP_X0])?,
    );

    let coupled = fixtures::team_coupled();
    let tuple = interpolate_team(coupled_team_tuples(c, n)?.swap_remove(0).1, g)?;
    record(
        "team_coupled",
        coupling_log_weights(&coupled, &tuple, &mc, &fixtures::team_initial_states())?,
    );
    Ok(())
}

fn second_moment(c: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    let (g, mc, k) = (grid(c)?, mc(c), k_se(c));
    let (n, t) = (g.macro_steps(), g.horizon());
    let mut record = |name: &str, lw: Vec<f64>, m: f64| {
        let s = second_moment_bound_check(&lw, m, t);
        out.estimate(format!("{name}.second_moment"), s.second_moment);
        out.value(format!("{name}.cap"), s.cap);
        let passed = s.second_moment.mean <= s.cap + k * s.second_moment.standard_error;
        let detail = format!(
            "{:.6} <= {:.6} + {k} * {:.6}",
            s.second_moment.mean, s.cap, s.second_moment.standard_error
        );
        out.check(format!("{name}.below_cap"), passed, detail);
    };
    let model = full_model(c)?;
    let fb = interpolate(feedback_policy(c, n)?, g)?;
    let m = girsanov_constant(&model, &probe_box(c))?;
    record(&c.fixture, drift_log_weights(&model, &fb, &mc, &c.x0)?, m);

    let po = pomdp(c, fixtures::pomdp_bounded_g());
    let ls = single(interpolate(latest_sign(c, n)?, g)?);
    let m = po.observation().bound.powi(2);
    record(
        "pomdp_bounded_g",
        team_observation_log_weights(po.as_team(), &ls, &mc, &[fixtures::POMDP_X0])?,
        m,
    );

    let team = local_team(c);
    let tuple = interpolate_team(local_team_tuples(c, n)?.swap_remove(0).1, g)?;
    let m = team.observations.iter().map(|o| o.bound * o.bound).sum();
    record(
        "team_local_meas",
        team_observation_log_weights(&team, &tuple, &mc, &[fixtures::POMDP_X0])?,
        m,
    );

    let coupled = fixtures::team_coupled();
    let tuple = interpolate_team(coupled_team_tuples(c, n)?.swap_remove(0).1, g)?;
    let m = coupled.coupling_bounds.iter().map(|b| b * b).sum();
    record(
        "team_coupled",
        coupling_log_weights(&coupled, &tuple, &mc, &fixtures::team_initial_states())?,
        m,
    );

    // Z = exp(μ B_T − μ²T/2) exactly, so E[Z²] = e^{μ²T}.
    let mu = c.moments.exact_drift;
    let exact = fixtures::constant_drift(mu);
    let lw = drift_log_weights(&exact, &fb, &mc, &c.x0)?;
    let s = second_moment_bound_check(&lw, mu * mu, t);
    out.estimate("constant_drift.second_moment", s.second_moment);
    out.value("constant_drift.exact", s.cap);
    check_within(out, "constant_drift.matches_exact".into(), &s.second_moment, s.cap, k);
    Ok(())
}

fn l1_continuity(c: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    let (g, mc, k) = (grid(c)?, mc(c), k_se(c));
    let model = full_model(c)?;
    let base = feedback_policy(c, g.macro_steps())?;
    let base_i = interpolate(base.clone(), g)?;
    let zero = weight_l1_distance(
        &model,
        &interpolate(perturb_policy(&base, 0.0)?, g)?,
        &base_i,
        &mc,
        &c.x0,
    )?;
    out.estimate("eps=0", zero);
    out.check(
        "eps=0.exactly_zero",
        zero.mean == 0.0 && zero.standard_error == 0.0,
        format!("{:e}", zero.mean),
    );
    let mut prev: Option<(f64, EstimateWithError)> = None;
    for &eps in &c.continuity.eps {
        let d = weight_l1_distance(
            &model,
            &interpolate(perturb_policy(&base, eps)?, g)?,
            &base_i,
            &mc,
            &c.x0,
        )?;
        out.estimate(format!("eps={eps}"), d);
        out.check(format!("eps={eps}.positive"), d.mean > 0.0, format!("{:.6}", d.mean));
        if let Some((pe, p)) = prev {
            let bound = p.mean + k * d.combined_se(&p);
            out.check(
                format!("eps={eps}.not_above_eps={pe}"),
                d.mean <= bound,
                format!("{:.6} <= {:.6} + {k} * {:.6}", d.mean, p.mean, d.combined_se(&p)),
            );
        }
        prev = Some((eps, d));
    }
    Ok(())
}

fn estimator_equivalence(c: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    let (g, mc, k) = (grid(c)?, mc(c), k_se(c));
    let n = g.macro_steps();
    let mut pair = |name: String, direct: EstimateWithError, reweighted: EstimateWithError| {
        out.estimate(format!("{name}.direct"), direct);
        out.estimate(format!("{name}.reweighted"), reweighted);
        check_agree(out, format!("{name}.agree"), &direct, &reweighted, k);
    };

    let model = full_model(c)?;
    let cost = fixtures::tanh_cost();
    for (label, p) in full_policies(c, n)? {
        let p = interpolate(p, g)?;
        let d = mc_cost_direct(&model, &p, &cost, &mc, &c.x0)?;
        let r = mc_cost_reweighted(&model, &p, &cost, &mc, &c.x0, Normalization::Plain)?;
        pair(format!("{}.{label}", c.fixture), d, r);
    }

    let po = pomdp(c, fixtures::pomdp_bounded_g());
    let x0 = [fixtures::POMDP_X0];
    for (label, p) in observed_policies(c, n)? {
        let p = interpolate(p, g)?;
        let d = mc_cost_pomdp_direct(&po, &p, &cost, &mc, &x0)?;
        let r = mc_cost_pomdp(&po, &p, &cost, &mc, &x0)?;
        pair(format!("pomdp_bounded_g.{label}"), d, r);
    }

    let team = local_team(c);
    let cost = fixtures::shared_state_cost();
    for (label, t) in local_team_tuples(c, n)? {
        let t = interpolate_team(t, g)?;
        let d = mc_cost_team_local_meas_direct(&team, &t, &cost, &mc, &x0)?;
        let r = mc_cost_team_local_meas(&team, &t, &cost, &mc, &x0)?;
        pair(format!("team_local_meas.{label}"), d, r);
    }

    let coupled = fixtures::team_coupled();
    let cost = fixtures::team_cost();
    let x0s = fixtures::team_initial_states();
    for (label, t) in coupled_team_tuples(c, n)? {
        let t = interpolate_team(t, g)?;
        let d = mc_cost_team_coupled_direct(&coupled, &t, &cost, &mc, &x0s)?;
        let r = mc_cost_team_coupled(&coupled, &t, &cost, &mc, &x0s)?;
        pair(format!("team_coupled.{label}"), d, r);
    }
    Ok(())
}

fn dynkin(c: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    let (g, k) = (grid(c)?, k_se(c));
    let model = full_model(c)?;
    let policy = feedback_policy(c, g.macro_steps())?;
    let finest = c.grid.inner_refine * c.dynkin.refinements.iter().max().copied().unwrap_or(1);
    let mc = mc(c).with_refinement(finest);
    let r = c.dynkin.radius;
    let tests: [(&str, Bump); 3] = [
        ("bump", Bump::new(r, BumpWeight::One)),
        ("bump_sq_norm", Bump::new(r, BumpWeight::SquaredNorm)),
        ("bump_coordinate", Bump::new(r, BumpWeight::Coordinate(0))),
    ];
    for (name, f) in &tests {
        let mut prev: Option<EstimateWithError> = None;
        for &m in &c.dynkin.refinements {
            let gm = g.with_inner_refine(c.grid.inner_refine * m)?;
            let p = interpolate(policy.clone(), gm)?;
            let e = dynkin_residual(&model, &p, f as &dyn TestFunction, &mc, &c.x0)?;
            let delta = gm.delta();
            let label = format!("{name}.refine={m}");
            out.estimate(&label, e);
            let allowed = k * e.standard_error + c.dynkin.bias_slope * delta;
            out.check(
                format!("{label}.small"),
                e.mean.abs() <= allowed,
                format!(
                    "|{:.6}| <= {k} * {:.6} + {} * {delta}",
                    e.mean, e.standard_error, c.dynkin.bias_slope
                ),
            );
            if let Some(p) = prev {
                let bound = p.mean.abs() + k * e.combined_se(&p);
                out.check(
                    format!("{label}.not_growing"),
                    e.mean.abs() <= bound,
                    format!("|{:.6}| <= |{:.6}| + {k} * {:.6}", e.mean, p.mean, e.combined_se(&p)),
                );
            }
            prev = Some(e);
        }
    }
    Ok(())
}

struct SweepRow {
    macro_steps: usize,
    h: f64,
    /// Optimal discrete value from the first kernel build.
    j_first: f64,
    /// Spread of the optimal value over independent kernel builds.
    j_star: EstimateWithError,
    lifted: EstimateWithError,
}

/// Solves the discrete problem on `macro_steps` steps with `replicates`
/// independent kernel builds and evaluates the lift of the first build.
fn sweep_row(
    c: &ExperimentConfig,
    model: &DiffusionModel,
    cost: &CostSpec,
    macro_steps: usize,
    inner_refine: usize,
    cell_count: usize,
    replicates: usize,
    out: &mut Outcome,
) -> Result<SweepRow> {
    let g = TimeGrid::new(c.grid.horizon, macro_steps, inner_refine)?;
    let cells = StateCells::new(
        c.state.lo.clone(),
        c.state.hi.clone(),
        vec![cell_count; c.state.lo.len()],
    )?;
    let actions = actions(c)?;
    let opts = |r: usize| {
        let mut o = KernelOptions::new(
            c.sampling.kernel_samples,
            derive_seed(c.seed, (macro_steps as u64) << 32 | r as u64),
        )
        .with_start(c.state.kernel_start);
        o.min_samples = c.sampling.kernel_min_samples;
        o
    };
    let first = solve_and_lift(model, cost, &cells, &actions, &g, &opts(0), &c.x0)?;
    let rows = first
        .problem
        .kernel
        .iter()
        .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    if rows > c.tolerance.row_sum {
        return Err(Error::Config(format!("kernel row sums off by {rows:e}")));
    }
    let total = first.problem.samples_per_row * first.problem.kernel.len();
    let label = format!("n_h={macro_steps}");
    out.value(
        format!("{label}.out_of_box_fraction"),
        first.problem.out_of_box as f64 / total as f64,
    );
    let mut js = vec![first.j_star];
    let start = cells.locate(&c.x0).0;
    for r in 1..replicates {
        let problem = build_discrete_mdp(model, cost, &cells, &actions, &g, &opts(r))?;
        js.push(backward_induction(&problem)?.0.initial(start));
    }
    let lifted = mc_cost_direct(model, &first.policy, cost, &mc(c), &c.x0)?;
    Ok(SweepRow {
        macro_steps,
        h: g.h(),
        j_first: first.j_star,
        j_star: EstimateWithError::from_samples(&js),
        lifted,
    })
}

fn h_sweep(c: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    let k = k_se(c);
    let model = full_model(c)?;
    let cost = fixtures::tanh_cost();
    let mut rows = Vec::new();
    for (&n, &cells) in c.sweep.macro_steps.iter().zip(&c.sweep.cells) {
        let row = sweep_row(
            c,
            &model,
            &cost,
            n,
            c.sweep.total_inner_steps / n,
            cells,
            c.sampling.replicates,
            out,
        )?;
        let label = format!("n_h={n}");
        out.value(format!("{label}.h"), row.h);
        out.estimate(format!("{label}.j_star"), row.j_star);
        out.estimate(format!("{label}.lifted_cost"), row.lifted);
        rows.push(row);
    }
    let gaps: Vec<EstimateWithError> = rows
        .windows(2)
        .map(|w| EstimateWithError {
            mean: (w[0].j_star.mean - w[1].j_star.mean).abs(),
            standard_error: w[0].j_star.combined_se(&w[1].j_star),
            n: w[0].j_star.n,
        })
        .collect();
    for (i, gap) in gaps.iter().enumerate() {
        out.estimate(
            format!("gap.n_h={}->{}", rows[i].macro_steps, rows[i + 1].macro_steps),
            *gap,
        );
    }
    for (i, w) in gaps.windows(2).enumerate() {
        let bound = w[0].mean + k * w[0].combined_se(&w[1]);
        out.check(
            format!("gap_after_n_h={}.not_growing", rows[i + 1].macro_steps),
            w[1].mean <= bound,
            format!(
                "{:.6} <= {:.6} + {k} * {:.6}",
                w[1].mean,
                w[0].mean,
                w[0].combined_se(&w[1])
            ),
        );
    }
    if let Some(finest) = rows.last() {
        for r in &rows[..rows.len() - 1] {
            let se = finest.lifted.combined_se(&r.lifted);
            out.check(
                format!("finest_lift_vs_n_h={}", r.macro_steps),
                finest.lifted.mean <= r.lifted.mean + k * se,
                format!("{:.6} <= {:.6} + {k} * {:.6}", finest.lifted.mean, r.lifted.mean, se),
            );
        }
    }
    Ok(())
}

fn lift_consistency(c: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    let k = k_se(c);
    let model = full_model(c)?;
    let cost = fixtures::tanh_cost();
    let cells = *c
        .state
        .cells
        .first()
        .ok_or_else(|| Error::Config("state.cells is empty".into()))?;
    let row = sweep_row(c, &model, &cost, c.grid.macro_steps, c.grid.inner_refine, cells, 1, out)?;
    out.value("j_star", row.j_first);
    out.estimate("lifted_cost", row.lifted);
    let band =
        c.tolerance.lift_relative * row.j_first.abs().max(c.tolerance.lift_floor) + k * row.lifted.standard_error;
    let gap = (row.j_first - row.lifted.mean).abs();
    out.value("gap", gap);
    out.check(
        "lift_matches_discrete_value",
        gap <= band,
        format!("|{:.6} - {:.6}| = {gap:.6} <= {band:.6}", row.j_first, row.lifted.mean),
    );
    Ok(())
}

/// Random tabular problem: flat-Dirichlet kernel rows, uniform costs.
fn random_problem(rng: &mut ChaCha8Rng, e: &super::config::EnumerationConfig) -> Result<DiscreteControlProblem> {
    let s = rng.random_range(1..=e.max_cells);
    let a = rng.random_range(1..=e.max_actions);
    let steps = rng.random_range(1..=e.max_steps);
    let kernel = (0..s * a)
        .map(|_| {
            let w: Vec<f64> = (0..s).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let total: f64 = w.iter().sum();
            w.iter().map(|v| v / total).collect()
        })
        .collect();
    let stage_cost = (0..s * a).map(|_| rng.random::<f64>()).collect();
    let terminal = (0..s).map(|_| rng.random::<f64>()).collect();
    let p = DiscreteControlProblem {
        horizon_steps: steps,
        h: 1.0,
        cells: StateCells::uniform_1d(0.0, s as f64, s)?,
        actions: quantize_actions(&[0.0], &[1.0], &[a])?,
        kernel,
        stage_cost,
        terminal,
        samples_per_row: 0,
        out_of_box: 0,
    };
    p.validate()?;
    Ok(p)
}

fn dp_exact(c: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    let mut worst = 0.0f64;
    let mut max_row = 0.0f64;
    for i in 0..c.enumeration.problems {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(c.seed, i as u64));
        let p = random_problem(&mut rng, &c.enumeration)?;
        for row in &p.kernel {
            max_row = max_row.max((row.iter().sum::<f64>() - 1.0).abs());
        }
        let (values, _) = backward_induction(&p)?;
        let brute = exhaustive_optimum(&p)?;
        let diff = brute
            .iter()
            .enumerate()
            .map(|(s, b)| (values.initial(s) - b).abs())
            .fold(0.0, f64::max);
        out.value(format!("problem_{i}.max_abs_difference"), diff);
        worst = worst.max(diff);
    }
    out.value("max_abs_difference", worst);
    out.value("max_row_sum_error", max_row);
    out.check(
        "kernel_rows_sum_to_one",
        max_row <= c.tolerance.row_sum,
        format!("{max_row:e} <= {:e}", c.tolerance.row_sum),
    );
    out.check(
        "backward_matches_enumeration",
        worst <= c.tolerance.exact,
        format!("{worst:e} <= {:e}", c.tolerance.exact),
    );
    Ok(())
}

fn pomdp_enum(c: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    let (g, mc, k) = (grid(c)?, mc(c), k_se(c));
    let cost = fixtures::terminal_square_cost();
    let wide = WideSenseClass {
        actions: actions(c)?,
        quantizer: quantizer(c)?,
        history_len: c.observation.history,
    };
    let open = WideSenseClass {
        history_len: 0,
        ..wide.clone()
    };
    for (name, model, informative) in [
        ("informative", pomdp(c, fixtures::pomdp_informative()), true),
        ("uninformative", pomdp(c, fixtures::pomdp_uninformative()), false),
    ] {
        let ws = enumerate_wide_sense(&model, &cost, &wide, &g, &mc, &c.x0)?;
        let ol = enumerate_wide_sense(&model, &cost, &open, &g, &mc, &c.x0)?;
        out.estimate(format!("{name}.wide_sense_optimum"), ws.value);
        out.estimate(format!("{name}.open_loop_optimum"), ol.value);
        out.value(format!("{name}.wide_sense_candidates"), ws.candidates as f64);
        out.value(format!("{name}.open_loop_candidates"), ol.candidates as f64);
        let gain = ol.value.mean - ws.value.mean;
        let se = ws.value.combined_se(&ol.value);
        out.value(format!("{name}.gain"), gain);
        if informative {
            out.check(
                format!("{name}.observation_helps"),
                gain >= k * se,
                format!("{gain:.6} >= {k} * {se:.6}"),
            );
        } else {
            out.check(
                format!("{name}.no_gain"),
                gain.abs() <= k * se,
                format!("|{gain:.6}| <= {k} * {se:.6}"),
            );
        }
    }
    Ok(())
}

/// Brute-force optimum against randomized challengers on common noise.
fn team_vs_challengers(
    c: &ExperimentConfig,
    out: &mut Outcome,
    name: &str,
    problem: &TeamProblem<'_>,
    classes: &[AgentClass],
    label: u64,
) -> Result<()> {
    let (g, mc) = (grid(c)?, mc(c));
    let best = team_brute_force(problem, classes, &g, &mc)?;
    out.estimate(format!("{name}.optimum"), best.value);
    out.value(format!("{name}.candidates"), best.candidates as f64);
    let seed = derive_seed(c.seed, label);
    let mut lowest: Option<EstimateWithError> = None;
    let mut beaten = 0;
    for i in 0..c.enumeration.challengers {
        let t = interpolate_team(random_challenger(classes, &g, seed, i as u64)?, g)?;
        let v = problem.evaluate(&t, &mc)?;
        beaten += (best.value.mean <= v.mean) as usize;
        if lowest.is_none_or(|l| v.mean < l.mean) {
            lowest = Some(v);
        }
    }
    if let Some(l) = lowest {
        out.estimate(format!("{name}.best_challenger"), l);
    }
    out.value(format!("{name}.challengers_not_better"), beaten as f64);
    out.check(
        format!("{name}.optimum_beats_challengers"),
        beaten == c.enumeration.challengers,
        format!(
            "{beaten} of {} challengers cost at least {:.6}",
            c.enumeration.challengers, best.value.mean
        ),
    );
    Ok(())
}

fn team_enum(c: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    let (g, mc, k) = (grid(c)?, mc(c), k_se(c));
    let wide = AgentClass::WideSense(WideSenseClass {
        actions: actions(c)?,
        quantizer: quantizer(c)?,
        history_len: c.observation.history,
    });
    let markov = AgentClass::Markov {
        actions: actions(c)?,
        cells: cells(c)?,
    };

    let team = local_team(c);
    let cost = fixtures::shared_state_cost();
    let problem = TeamProblem::LocalMeasurement {
        model: &team,
        cost: &cost,
        x0: &c.x0,
    };
    team_vs_challengers(c, out, "team_local_meas", &problem, &[wide.clone(), wide], 1)?;

    let coupled = fixtures::team_coupled();
    let cost = fixtures::team_cost();
    let x0s = fixtures::team_initial_states();
    let problem = TeamProblem::Coupled {
        model: &coupled,
        cost: &cost,
        x0: &x0s,
    };
    team_vs_challengers(c, out, "team_coupled", &problem, &[markov.clone(), markov.clone()], 2)?;

    // Without coupling and with a separable cost the team problem splits.
    let decoupled: CoupledLocalStateTeamModel = fixtures::team_decoupled();
    let problem = TeamProblem::Coupled {
        model: &decoupled,
        cost: &cost,
        x0: &x0s,
    };
    let joint = team_brute_force(&problem, &[markov.clone(), markov.clone()], &g, &mc)?;
    out.estimate("decoupled.team_optimum", joint.value);
    let agent_cost = fixtures::agent_cost();
    let mut sum = 0.0;
    let mut var = joint.value.standard_error.powi(2);
    for i in 0..decoupled.len() {
        let solo = decoupled.solo(i)?;
        let x0 = [x0s[i].clone()];
        let p = TeamProblem::Coupled {
            model: &solo,
            cost: &agent_cost,
            x0: &x0,
        };
        let v = team_brute_force(&p, std::slice::from_ref(&markov), &g, &mc)?.value;
        out.estimate(format!("decoupled.solo_{i}_optimum"), v);
        sum += v.mean;
        var += v.standard_error.powi(2);
    }
    out.value("decoupled.solo_sum", sum);
    let se = var.sqrt();
    out.check(
        "decoupled.team_equals_solo_sum",
        (joint.value.mean - sum).abs() <= k * se,
        format!("|{:.6} - {sum:.6}| <= {k} * {se:.6}", joint.value.mean),
    );
    Ok(())
}

fn audit(c: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    let (g, mc) = (grid(c)?, mc(c));
    let n = g.macro_steps();
    let mut record = |name: &str, batch: AuditBatch, expect_flag: bool| -> Result<()> {
        let r = independence_audit(&batch)?;
        out.value(format!("{name}.max_abs_correlation"), r.max_abs_correlation);
        out.value(format!("{name}.threshold"), r.threshold);
        out.value(format!("{name}.pairs_tested"), r.pairs_tested as f64);
        let detail = format!(
            "{} flags over {} pairs, max |corr| {:.4}",
            r.flags.len(),
            r.pairs_tested,
            r.max_abs_correlation
        );
        if expect_flag {
            out.check(format!("{name}.flagged"), !r.clean(), detail);
        } else {
            out.check(format!("{name}.clean"), r.clean() && r.pairs_tested > 0, detail);
        }
        Ok(())
    };
    let model = full_model(c)?;
    record(
        &c.fixture,
        audit_batch_full(&model, &interpolate(feedback_policy(c, n)?, g)?, &mc, &c.x0)?,
        false,
    )?;

    let po = pomdp(c, fixtures::pomdp_informative());
    let ls = single(interpolate(latest_sign(c, n)?, g)?);
    record(
        "pomdp_informative",
        audit_batch_local_meas(po.as_team(), &ls, &mc, &[fixtures::POMDP_X0])?,
        false,
    )?;

    let team = local_team(c);
    let tuple = interpolate_team(local_team_tuples(c, n)?.swap_remove(0).1, g)?;
    record(
        "team_local_meas",
        audit_batch_local_meas(&team, &tuple, &mc, &[fixtures::POMDP_X0])?,
        false,
    )?;

    let coupled = fixtures::team_coupled();
    let tuple = interpolate_team(coupled_team_tuples(c, n)?.swap_remove(0).1, g)?;
    record(
        "team_coupled",
        audit_batch_coupled(&coupled, &tuple, &mc, &fixtures::team_initial_states())?,
        false,
    )?;

    record("anticipative_probe", anticipative_probe_batch(&g, &mc)?, true)?;
    Ok(())
}
