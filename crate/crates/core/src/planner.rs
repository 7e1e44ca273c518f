//! The social planner's efficient attention profile and the welfare gap to
//! the echo-chamber equilibrium.
//!
//! For symmetric sides and small β the planner's first-order conditions
//! collapse to one increasing scalar equation in a = e^{x*} − 1; bisecting
//! it and mapping back yields the unique interior optimum, which features
//! cross-cutting exposure (y*, Δ* > 0) that no equilibrium can sustain.

use serde::{Deserialize, Serialize};

use crate::config::{AttentionProfile, GameConfig, Side, SourceKind};
use crate::error::{Error, Result};
use crate::kernel::log_uninformed_prob;
use crate::solver::symmetric_fixed_point;

/// The planner's symmetric interior optimum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EfficientProfile {
    pub lambda: f64,
    pub tau: f64,
    pub n: usize,
    /// Attention to the own-biased source.
    pub x_star: f64,
    /// Attention to the opposite source.
    pub y_star: f64,
    /// Attention to each like-minded friend.
    pub z_star: f64,
    /// Attention to each opposite-type player.
    pub delta_star: f64,
    /// Transformed variables a = e^{x*}−1, b = e^{y*}−1, c = e^{λz*}−1,
    /// d = e^{λΔ*}−1.
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    /// Residual of the bandwidth identity at the returned a.
    pub budget_residual: f64,
    pub valid: bool,
}

/// Left side of the scalar budget equation as a function of a; strictly
/// increasing on (1/(λ−1), N−1) and independent of τ.
fn budget_lhs(a: f64, lambda: f64, n: f64) -> f64 {
    let b = n * a / (n - 1.0 - a);
    let c = ((lambda - 1.0) * a - 1.0) / n;
    let d = lambda * a / (n - 1.0 - a);
    (a + 1.0).ln()
        + (b + 1.0).ln()
        + (n - 1.0) / lambda * (c + 1.0).ln()
        + n / lambda * (d + 1.0).ln()
}

fn check_region(lambda: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidRegion {
            condition: format!("N = {n} must be at least 2"),
        });
    }
    let nf = n as f64;
    if !(lambda > nf / (nf - 1.0)) {
        return Err(Error::InvalidRegion {
            condition: format!("lambda = {lambda} must exceed N/(N-1) = {}", nf / (nf - 1.0)),
        });
    }
    Ok(nf)
}

/// Infimum bandwidth for which the planner's solution is interior: the
/// budget equation evaluated at a = 1/(λ−1), where the c-term vanishes.
pub fn tau_threshold(lambda: f64, n: usize) -> Result<f64> {
    let nf = check_region(lambda, n)?;
    Ok(budget_lhs(1.0 / (lambda - 1.0), lambda, nf))
}

/// Solve the planner's problem for symmetric sides of `n` players with
/// common visibility `lambda` and bandwidth `tau`.
pub fn solve_efficient(lambda: f64, tau: f64, n: usize) -> Result<EfficientProfile> {
    let nf = check_region(lambda, n)?;
    let threshold = tau_threshold(lambda, n)?;
    if !(tau > threshold) {
        return Err(Error::InvalidRegion {
            condition: format!("tau = {tau} must exceed tau_threshold(lambda, N) = {threshold}"),
        });
    }
    // Bisect the increasing LHS over the validity window, endpoints nudged
    // inward to stay in the log domain.
    let mut lo = 1.0 / (lambda - 1.0) * (1.0 + 1e-12);
    let mut hi = (nf - 1.0) * (1.0 - 1e-12);
    if budget_lhs(hi, lambda, nf) < tau {
        return Err(Error::InvalidRegion {
            condition: format!("tau = {tau} beyond the representable interior window"),
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if budget_lhs(mid, lambda, nf) < tau {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let a = 0.5 * (lo + hi);
    let b = nf * a / (nf - 1.0 - a);
    let c = ((lambda - 1.0) * a - 1.0) / nf;
    let d = lambda * a / (nf - 1.0 - a);
    let x_star = (a + 1.0).ln();
    let y_star = (b + 1.0).ln();
    let z_star = (c + 1.0).ln() / lambda;
    let delta_star = (d + 1.0).ln() / lambda;
    let budget_residual =
        (x_star + y_star + (nf - 1.0) * z_star + nf * delta_star - tau).abs();
    let valid = a > 1.0 / (lambda - 1.0)
        && a < nf - 1.0
        && [x_star, y_star, z_star, delta_star].iter().all(|&v| v > 0.0)
        && budget_residual <= 1e-10 * tau.max(1.0);
    Ok(EfficientProfile {
        lambda,
        tau,
        n,
        x_star,
        y_star,
        z_star,
        delta_star,
        a,
        b,
        c,
        d,
        budget_residual,
        valid,
    })
}

/// Materialize the symmetric profile into a full attention matrix for a
/// two-sided config of `n` players per side.
pub fn efficient_attention_profile(
    ep: &EfficientProfile,
    cfg: &GameConfig,
) -> Result<AttentionProfile> {
    if cfg.merged_sources || cfg.num_sources() != 2 {
        return Err(Error::domain(
            "efficient_attention_profile",
            "needs the baseline two-source layout",
        ));
    }
    let mut x = AttentionProfile::zeros(cfg);
    for i in 0..cfg.num_players() {
        let side = cfg.players[i].side;
        let own = cfg.source_slots(SourceKind::own_biased(side)).start;
        let other = cfg
            .source_slots(SourceKind::own_biased(side.opposite()))
            .start;
        x.set_source_attention(i, own, ep.x_star);
        x.set_source_attention(i, other, ep.y_star);
        for j in 0..cfg.num_players() {
            if j != i {
                let v = if cfg.players[j].side == side {
                    ep.z_star
                } else {
                    ep.delta_star
                };
                x.set_peer_attention(i, j, v);
            }
        }
    }
    x.validate(cfg)?;
    Ok(x)
}

/// Utilitarian welfare of a profile under default-action plans:
/// −Σ_i (β_i/2)·P(U_i | ω ≠ d_i).
pub fn welfare(x: &AttentionProfile, cfg: &GameConfig) -> Result<f64> {
    x.validate(cfg)?;
    let mut w = 0.0;
    for i in 0..cfg.num_players() {
        let side = cfg.players[i].side;
        let log_p = log_uninformed_prob(x, cfg, i, side.opposite());
        w -= 0.5 * cfg.players[i].beta * log_p.exp();
    }
    Ok(w)
}

/// Welfare of the symmetric four-quantity profile in closed form,
/// −βN·e^{−x}·A^{N−1}·B^N; used for fast random-search comparisons.
pub fn symmetric_welfare(
    x: f64,
    y: f64,
    z: f64,
    delta: f64,
    lambda: f64,
    n: usize,
    beta: f64,
) -> f64 {
    let nf = n as f64;
    let a_factor = (-x).exp() + (1.0 - (-x).exp()) * (-lambda * z).exp();
    let b_factor = (-y).exp() + (1.0 - (-y).exp()) * (-lambda * delta).exp();
    -beta * nf * (-x).exp() * a_factor.powf(nf - 1.0) * b_factor.powf(nf)
}

/// Residual of the planner's four first-order conditions at a profile: the
/// relative spread of the four marginal welfare values, which coincide at
/// the interior optimum. An independent optimality check.
pub fn kkt_residual(ep: &EfficientProfile) -> f64 {
    let (x, y, z, dl) = (ep.x_star, ep.y_star, ep.z_star, ep.delta_star);
    let (lambda, nf) = (ep.lambda, ep.n as f64);
    let a_factor = (-x).exp() + (1.0 - (-x).exp()) * (-lambda * z).exp();
    let b_factor = (-y).exp() + (1.0 - (-y).exp()) * (-lambda * dl).exp();
    let ap = a_factor.powf(nf - 1.0);
    let am = a_factor.powf(nf - 2.0);
    let bp = b_factor.powf(nf);
    let bm = b_factor.powf(nf - 1.0);
    let ex = (-x).exp();
    let m_own_source =
        ex * ap * bp + (nf - 1.0) * ex * ex * (1.0 - (-lambda * z).exp()) * am * bp;
    let m_other_source = nf * ex * (-y).exp() * (1.0 - (-lambda * dl).exp()) * ap * bm;
    let m_friend = lambda * ex * (1.0 - ex) * (-lambda * z).exp() * am * bp;
    let m_cross = lambda * ex * (1.0 - (-y).exp()) * (-lambda * dl).exp() * ap * bm;
    let ms = [m_own_source, m_other_source, m_friend, m_cross];
    let hi = ms.iter().cloned().fold(f64::MIN, f64::max);
    let lo = ms.iter().cloned().fold(f64::MAX, f64::min);
    (hi - lo) / hi.abs().max(1e-300)
}

/// Welfare gap between the planner's optimum and the symmetric echo-chamber
/// equilibrium; strictly positive on the validity region.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapReport {
    pub efficient: EfficientProfile,
    pub welfare_efficient: f64,
    pub welfare_equilibrium: f64,
    pub gap: f64,
    pub relative: f64,
    pub equilibrium_x: f64,
}

pub fn efficiency_gap(lambda: f64, tau: f64, n: usize, beta: f64) -> Result<GapReport> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::domain("efficiency_gap", "beta must lie in (0,1)"));
    }
    let ep = solve_efficient(lambda, tau, n)?;
    let cfg = GameConfig::symmetric(n, beta, lambda, tau);
    let profile = efficient_attention_profile(&ep, &cfg)?;
    let welfare_efficient = welfare(&profile, &cfg)?;

    let x_n = symmetric_fixed_point(lambda, tau, n)?;
    let influence = crate::kernel::h(x_n, lambda)?;
    let mut eq_profile = AttentionProfile::zeros(&cfg);
    for side in [Side::L, Side::R] {
        let members = cfg.side_players(side);
        let slot = cfg.source_slots(SourceKind::own_biased(side)).start;
        for &i in &members {
            eq_profile.set_source_attention(i, slot, x_n);
            for &j in &members {
                if j != i {
                    eq_profile.set_peer_attention(i, j, influence);
                }
            }
        }
    }
    let welfare_equilibrium = welfare(&eq_profile, &cfg)?;
    let gap = welfare_efficient - welfare_equilibrium;
    Ok(GapReport {
        efficient: ep,
        welfare_efficient,
        welfare_equilibrium,
        gap,
        relative: gap / welfare_equilibrium.abs(),
        equilibrium_x: x_n,
    })
}
