//! Small models with known properties, shared by tests, experiments and the CLI.

use crate::cost::CostSpec;
use crate::info::{CoupledLocalStateTeamModel, LocalMeasurementTeamModel, ObservationChannel, PartiallyObservedModel};
use crate::policy::{quantize_actions, ActionGrid, ObservationQuantizer, Policy, StateCells};
use crate::sde::{DiffusionModel, ProbeBox};

fn identity(out: &mut [f64]) {
    let n = (out.len() as f64).sqrt() as usize;
    out.fill(0.0);
    for i in 0..n {
        out[i * n + i] = 1.0;
    }
}

/// `dX = u tanh(X) dt + dB`, `u ∈ [-1, 1]`.
pub fn tanh_drift() -> DiffusionModel {
    DiffusionModel::new(
        "tanh_drift",
        1,
        1,
        |x, u, out| out[0] = u[0] * x[0].tanh(),
        |_x, out| out[0] = 1.0,
        1.0,
        0.5,
    )
    .expect("valid fixture")
    .with_girsanov_bound(1.0)
    .with_lipschitz(f64::INFINITY, 1.0)
}

/// Target for [`tanh_cost`]. With the target off zero, holding `x` near it
/// needs feedback: `u = -1` is restoring towards zero from either side.
pub const TANH_TARGET: f64 = 1.0;

/// `min((x − 1)², 4) + 0.1 u²` running, `min((x − 1)², 4)` terminal.
pub fn tanh_cost() -> CostSpec {
    let sq = |x: f64| ((x - TANH_TARGET) * (x - TANH_TARGET)).min(4.0);
    CostSpec::new(move |x, u| sq(x[0]) + 0.1 * u[0] * u[0], move |x| sq(x[0]), 4.1, 4.0)
}

/// `dX = dB` in `dim` dimensions; the action is ignored.
pub fn identity_diffusion(dim: usize) -> DiffusionModel {
    DiffusionModel::new(
        format!("identity_{dim}"),
        dim,
        dim,
        |_x, _u, out| out.fill(0.0),
        |_x, out| identity(out),
        1.0,
        0.5,
    )
    .expect("valid fixture")
    .with_girsanov_bound(0.0)
}

/// `dX = μ dt + dB`; the action is ignored.
pub fn constant_drift(mu: f64) -> DiffusionModel {
    DiffusionModel::new(
        "constant_drift",
        1,
        1,
        move |_x, _u, out| out[0] = mu,
        |_x, out| out[0] = 1.0,
        mu.abs().max(1.0),
        0.5,
    )
    .expect("valid fixture")
    .with_girsanov_bound(mu.abs())
}

/// Zero drift, `σ = diag(1, ε)`.
pub fn degenerate_diffusion(eps: f64) -> DiffusionModel {
    DiffusionModel::new(
        "degenerate_diffusion",
        2,
        1,
        |_x, _u, out| out.fill(0.0),
        move |_x, out| {
            out.fill(0.0);
            out[0] = 1.0;
            out[3] = eps;
        },
        1.0,
        0.1,
    )
    .expect("valid fixture")
}

/// Actions `{-1, 0, 1}`.
pub fn three_actions() -> ActionGrid {
    quantize_actions(&[-1.0], &[1.0], &[3]).expect("valid grid")
}

/// Actions `{-1, 1}`.
pub fn two_actions() -> ActionGrid {
    quantize_actions(&[-1.0], &[1.0], &[2]).expect("valid grid")
}

/// Sign quantizer on one observation coordinate.
pub fn sign_quantizer() -> ObservationQuantizer {
    ObservationQuantizer::new(vec![-1.0], vec![1.0], vec![2]).expect("valid quantizer")
}

/// Markov policy on two sign cells: `u = 1` for `x < 0`, `u = -1` for `x ≥ 0`.
pub fn sign_feedback_policy(steps: usize) -> Policy {
    let cells = StateCells::uniform_1d(-1.0, 1.0, 2).expect("valid cells");
    Policy::deterministic_markov(three_actions(), cells, &vec![vec![2, 0]; steps]).expect("valid policy")
}

/// Wide-sense policy on the sign quantizer that pushes against the sign of
/// the latest observation sample: the first action for `Y_{kh} ≥ 0`, the last
/// otherwise. `history_len` must be at least 1.
pub fn latest_sign_policy(actions: ActionGrid, steps: usize, history_len: usize) -> Policy {
    assert!(history_len >= 1, "the latest sample must be in the window");
    let q = sign_quantizer();
    let last = actions.len() - 1;
    let table: Vec<Vec<usize>> = (0..steps)
        .map(|k| {
            let width = (k + 1).min(history_len) as u32;
            let top = 2u64.pow(width - 1);
            (0..2u64.pow(width))
                .map(|code| if code / top == 1 { 0 } else { last })
                .collect()
        })
        .collect();
    Policy::deterministic_wide_sense(actions, q, history_len, &table).expect("valid policy")
}

/// Probe box for the one-dimensional fixtures.
pub fn unit_probe_box() -> ProbeBox {
    ProbeBox::cube(1, 3.0, 1, 1.0)
}

/// Fully observed fixture by name.
pub fn fully_observed(name: &str) -> Option<DiffusionModel> {
    match name {
        "tanh_drift" => Some(tanh_drift()),
        "identity_diffusion" => Some(identity_diffusion(1)),
        "constant_drift" => Some(constant_drift(0.8)),
        _ => None,
    }
}

pub const FULLY_OBSERVED: [&str; 3] = ["tanh_drift", "identity_diffusion", "constant_drift"];

/// Hidden `dX = (u tanh X + 0.1 tanh Y) dt + dB`, observed through `g = tanh`.
pub fn pomdp_bounded_g() -> PartiallyObservedModel {
    PartiallyObservedModel::new(
        "pomdp_bounded_g",
        1,
        1,
        |x, y, u, out| out[0] = u[0] * x[0].tanh() + 0.1 * y[0].tanh(),
        |_x, _y, out| out[0] = 1.0,
        ObservationChannel::new(1, 1.0, |x, out| out[0] = x[0].tanh()),
        1.1,
        0.5,
    )
    .expect("valid fixture")
}

/// `dX = u dt + dB` with `g = 1.5 tanh(2x)`: the observation sign carries
/// most of the sign of the state.
pub fn pomdp_informative() -> PartiallyObservedModel {
    PartiallyObservedModel::new(
        "pomdp_informative",
        1,
        1,
        |_x, _y, u, out| out[0] = u[0],
        |_x, _y, out| out[0] = 1.0,
        ObservationChannel::new(1, 1.5, |x, out| out[0] = 1.5 * (2.0 * x[0]).tanh()),
        1.0,
        0.5,
    )
    .expect("valid fixture")
}

/// Start for the information-value fixtures. Off zero, so the forced first
/// action can make `X_h` symmetric and the observed sign worth reading.
pub const POMDP_X0: f64 = 0.5;

/// Same state dynamics as [`pomdp_informative`], `g ≡ 0`.
pub fn pomdp_uninformative() -> PartiallyObservedModel {
    pomdp_informative().silenced()
}

/// Terminal cost `min(x², 4)` only.
pub fn terminal_square_cost() -> CostSpec {
    CostSpec::new(|_x, _u| 0.0, |x| (x[0] * x[0]).min(4.0), 0.0, 4.0)
}

/// Shared state `dX = ½(u¹ + u²) dt + dB` observed through `1.5 tanh(2x)` and `tanh(x)`.
pub fn team_local_meas() -> LocalMeasurementTeamModel {
    LocalMeasurementTeamModel::new(
        "team_local_meas",
        1,
        vec![1, 1],
        |_x, _y, u, out| out[0] = 0.5 * (u[0] + u[1]),
        |_x, _y, out| out[0] = 1.0,
        vec![
            ObservationChannel::new(1, 1.5, |x, out| out[0] = 1.5 * (2.0 * x[0]).tanh()),
            ObservationChannel::new(1, 1.0, |x, out| out[0] = x[0].tanh()),
        ],
        1.0,
        0.5,
    )
    .expect("valid fixture")
}

fn local_agent(name: &str) -> DiffusionModel {
    DiffusionModel::new(
        name,
        1,
        1,
        |_x, u, out| out[0] = 0.5 * u[0],
        |_x, out| out[0] = 1.0,
        1.0,
        0.5,
    )
    .expect("valid fixture")
    .with_girsanov_bound(0.5)
}

/// Two agents `dX^i = ½u^i dt + b^i_0 dt + dB^i` pulled towards each other by
/// `b^1_0 = ½ tanh(x² − x¹)`, `b^2_0 = ½ tanh(x¹ − x²)`.
pub fn team_coupled() -> CoupledLocalStateTeamModel {
    CoupledLocalStateTeamModel::new(
        "team_coupled",
        vec![local_agent("agent_0"), local_agent("agent_1")],
        |i, x, _u, out| {
            let d = if i == 0 { x[1] - x[0] } else { x[0] - x[1] };
            out[0] = 0.5 * d.tanh();
        },
        vec![0.5, 0.5],
    )
    .expect("valid fixture")
}

/// Same agents, no coupling.
pub fn team_decoupled() -> CoupledLocalStateTeamModel {
    team_coupled().without_coupling()
}

/// Agent `i`'s share of [`team_cost`]: `min(x², 4) + 0.05 u²`, terminal `min(x², 4)`.
pub fn agent_cost() -> CostSpec {
    CostSpec::new(
        |x, u| (x[0] * x[0]).min(4.0) + 0.05 * u[0] * u[0],
        |x| (x[0] * x[0]).min(4.0),
        4.05,
        4.0,
    )
}

/// Sum of [`agent_cost`] over both agents.
pub fn team_cost() -> CostSpec {
    CostSpec::new(
        |x, u| (0..2).map(|i| (x[i] * x[i]).min(4.0) + 0.05 * u[i] * u[i]).sum(),
        |x| (0..2).map(|i| (x[i] * x[i]).min(4.0)).sum(),
        8.1,
        8.0,
    )
}

pub fn team_initial_states() -> Vec<Vec<f64>> {
    vec![vec![0.5], vec![-0.5]]
}

/// Cost on the shared state of [`team_local_meas`]: `min(x², 4) + 0.05 |u|²`.
pub fn shared_state_cost() -> CostSpec {
    CostSpec::new(
        |x, u| (x[0] * x[0]).min(4.0) + 0.05 * u.iter().map(|v| v * v).sum::<f64>(),
        |x| (x[0] * x[0]).min(4.0),
        4.1,
        4.0,
    )
}
