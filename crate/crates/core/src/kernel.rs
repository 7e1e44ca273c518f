//! The φ/h function family, disruption probabilities, uninformed-event
//! probabilities, and stage-1 expected utilities.
//!
//! Everything here is a pure function of its inputs. Probabilities are
//! computed in log space and only exponentiated at the boundary, so large
//! bandwidths cannot underflow intermediate products.

use serde::{Deserialize, Serialize};

use crate::config::{AttentionProfile, GameConfig, Side};
use crate::error::{Error, Result};

/// Visibility threshold φ(λ): the own-source attention a player must cross
/// before attracting any attention from like-minded friends.
///
/// Returns `f64::INFINITY` for 0 ≤ λ ≤ 1 (a player no more visible than the
/// primary source is never worth attending); comparisons such as
/// `tau > phi(lambda)` behave correctly against it.
pub fn phi(lambda: f64) -> Result<f64> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::domain("phi", format!("lambda = {lambda} is negative")));
    }
    if lambda <= 1.0 {
        Ok(f64::INFINITY)
    } else {
        Ok((lambda / (lambda - 1.0)).ln())
    }
}

/// ln(e^y − 1) for y > 0, stable across the whole range.
pub(crate) fn ln_exp_m1(y: f64) -> f64 {
    if y > 36.0 {
        // ln(e^y(1−e^{−y})) = y + ln(1−e^{−y}), safe from exp overflow.
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

/// Influence function h(x;λ) = (1/λ)·log[(λ−1)(e^x − 1)] on x ≥ φ(λ), λ > 1.
///
/// h(φ(λ);λ) = 0; strictly increasing and strictly concave in x.
pub fn h(x: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 1.0) {
        return Err(Error::domain("h", format!("lambda = {lambda} must exceed 1")));
    }
    let threshold = phi(lambda)?;
    if !(x >= threshold) {
        return Err(Error::domain(
            "h",
            format!("x = {x} below phi(lambda) = {threshold}"),
        ));
    }
    Ok(((lambda - 1.0).ln() + ln_exp_m1(x)) / lambda)
}

/// ∂h/∂x = (1/λ)·e^x/(e^x−1), strictly inside (0,1) on (φ(λ), ∞).
///
/// At exactly x = φ(λ) the open-domain derivative is undefined; this returns
/// the one-sided limit 1.
pub fn h_x(x: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 1.0) {
        return Err(Error::domain("h_x", format!("lambda = {lambda} must exceed 1")));
    }
    let threshold = phi(lambda)?;
    if !(x >= threshold) {
        return Err(Error::domain(
            "h_x",
            format!("x = {x} below phi(lambda) = {threshold}"),
        ));
    }
    // e^x/(e^x-1) = 1/(1 - e^{-x})
    Ok((1.0 / (lambda * -(-x).exp_m1())).min(1.0))
}

/// ∂h/∂λ = (1/λ)·[1/(λ−1) − h(x;λ)]. The comparative-statics κ is its
/// negation; the sign switches exactly where h(x;λ) = 1/(λ−1).
pub fn h_lambda(x: f64, lambda: f64) -> Result<f64> {
    let hv = h(x, lambda)?;
    Ok((1.0 / (lambda - 1.0) - hv) / lambda)
}

/// ln(δ_sender + (1−δ_sender)·δ_receiver) where δ_sender = e^{−u} and
/// δ_receiver = e^{−v}: the log of one co-player factor of the uninformed
/// probability. Stable for arbitrarily large u, v ≥ 0.
pub(crate) fn log_channel_factor(u: f64, v: f64) -> f64 {
    debug_assert!(u >= 0.0 && v >= 0.0);
    let m = u.min(v);
    let a = (-(u - m)).exp();
    let b = -(-u).exp_m1() * (-(v - m)).exp();
    -m + (a + b).ln()
}

/// Disruption probabilities of every attention channel of a profile:
/// exp(−ν·x_i^s) per source slot and exp(−λ_i^j·x_i^j) per sender.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisruptionMatrix {
    /// `source[i][s]`: channel from source slot s to player i.
    pub source: Vec<Vec<f64>>,
    /// `peer[i][j]`: channel from sender j to receiver i; diagonal 1.
    pub peer: Vec<Vec<f64>>,
}

impl DisruptionMatrix {
    pub fn from_profile(x: &AttentionProfile, cfg: &GameConfig) -> Result<Self> {
        x.validate(cfg)?;
        let n = cfg.num_players();
        let nu = cfg.source_visibility;
        let source = (0..n)
            .map(|i| {
                (0..cfg.num_sources())
                    .map(|s| (-nu * x.source_attention(i, s)).exp())
                    .collect()
            })
            .collect();
        let peer = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            1.0
                        } else {
                            (-cfg.visibility(i, j) * x.peer_attention(i, j)).exp()
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(DisruptionMatrix { source, peer })
    }
}

/// log P(U_i | ω): player i stays uninformed in state ω iff every direct and
/// indirect channel to the revealing source(s) is disrupted.
///
/// Assumes `x` is feasible for `cfg`; see [`uninformed_prob`] for the
/// validating wrapper.
pub fn log_uninformed_prob(x: &AttentionProfile, cfg: &GameConfig, i: usize, omega: Side) -> f64 {
    let nu = cfg.source_visibility;
    let mut log_p = -nu * x.revealing_attention(cfg, i, omega);
    for j in 0..cfg.num_players() {
        if j == i {
            continue;
        }
        let u = nu * x.revealing_attention(cfg, j, omega);
        let v = cfg.visibility(i, j) * x.peer_attention(i, j);
        log_p += log_channel_factor(u, v);
    }
    log_p
}

/// P(U_i | ω) with feasibility validation.
pub fn uninformed_prob(
    x: &AttentionProfile,
    cfg: &GameConfig,
    i: usize,
    omega: Side,
) -> Result<f64> {
    if cfg.num_states != 2 {
        return Err(Error::domain(
            "uninformed_prob",
            "two-state operation called on an M-state config",
        ));
    }
    x.validate(cfg)?;
    Ok(log_uninformed_prob(x, cfg, i, omega).exp())
}

/// State-contingent plan for the uninformed event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Plan {
    /// Take the default action d_i when uninformed.
    Default,
    /// Take the opposite action when uninformed.
    Contrarian,
}

/// The state in which the plan's mismatch penalty is paid, i.e. the state
/// whose uninformed probability the plan's expected utility weights.
pub fn plan_penalty_state(side: Side, plan: Plan) -> Side {
    match plan {
        Plan::Default => side.opposite(),
        Plan::Contrarian => side,
    }
}

/// Stage-1 expected utility of player i and the plan attaining it:
/// max{ −(β_i/2)·P(U_i|ω≠d_i), −(1/2)·P(U_i|ω=d_i) }. Ties resolve to the
/// default plan.
pub fn stage1_utility(x: &AttentionProfile, cfg: &GameConfig, i: usize) -> Result<(f64, Plan)> {
    if cfg.num_states != 2 {
        return Err(Error::domain(
            "stage1_utility",
            "two-state operation called on an M-state config",
        ));
    }
    x.validate(cfg)?;
    Ok(stage1_utility_unchecked(x, cfg, i))
}

pub(crate) fn stage1_utility_unchecked(
    x: &AttentionProfile,
    cfg: &GameConfig,
    i: usize,
) -> (f64, Plan) {
    let side = cfg.players[i].side;
    let beta = cfg.players[i].beta;
    let log_p_mismatch = log_uninformed_prob(x, cfg, i, side.opposite());
    let log_p_match = log_uninformed_prob(x, cfg, i, side);
    // default >= contrarian  <=>  β·P(≠) <= P(=), compared in logs.
    if beta.ln() + log_p_mismatch <= log_p_match {
        (-0.5 * beta * log_p_mismatch.exp(), Plan::Default)
    } else {
        (-0.5 * log_p_match.exp(), Plan::Contrarian)
    }
}

/// Log-space expected value of the plan's maximand (the objective both
/// player problems maximize): −log P(U_i | penalty state of the plan).
pub fn plan_log_objective(x: &AttentionProfile, cfg: &GameConfig, i: usize, plan: Plan) -> f64 {
    let state = plan_penalty_state(cfg.players[i].side, plan);
    -log_uninformed_prob(x, cfg, i, state)
}
