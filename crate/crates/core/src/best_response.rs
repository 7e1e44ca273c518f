//! Single-player concave attention problems.
//!
//! Given the other players' strategies, a player's problem under either
//! state-contingent plan maximizes a strictly concave log-objective over his
//! budget simplex. The KKT conditions give every peer attention in closed
//! form as a function of the budget multiplier γ, so the best response
//! reduces to a one-dimensional bisection on γ.

use serde::{Deserialize, Serialize};

use crate::config::{AttentionProfile, GameConfig, SourceKind};
use crate::error::{Error, Result};
use crate::kernel::{ln_exp_m1, plan_log_objective, stage1_utility_unchecked, Plan};

/// Budget residual tolerance for the multiplier bisection.
const BUDGET_TOL: f64 = 1e-12;
const BISECT_ITERS: usize = 200;

/// Solution of one player's problem under one plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BestResponse {
    pub player: usize,
    pub plan: Plan,
    /// Attention to each source slot.
    pub source: Vec<f64>,
    /// Attention to each other player (self entry 0).
    pub peer: Vec<f64>,
    /// Lagrange multiplier γ of the bandwidth constraint. Equals the source
    /// visibility ν whenever the plan's source receives positive attention.
    pub multiplier: f64,
    /// Parties receiving positive attention.
    pub active_sources: Vec<usize>,
    pub active_peers: Vec<usize>,
    /// Value of the plan's log-objective −log P(U_i | penalty state) at the
    /// solution.
    pub objective: f64,
}

impl BestResponse {
    /// Sup-norm distance between this row and player `i`'s row of `x`,
    /// comparing source attention by kind aggregate (splits across
    /// same-kind sources are payoff-equivalent).
    pub fn row_distance(&self, x: &AttentionProfile, cfg: &GameConfig) -> f64 {
        let i = self.player;
        let mut d: f64 = 0.0;
        for kind in [SourceKind::LBiased, SourceKind::RBiased, SourceKind::Merged] {
            let mine: f64 = cfg.source_slots(kind).map(|s| self.source[s]).sum();
            let theirs = x.source_kind_attention(cfg, i, kind);
            d = d.max((mine - theirs).abs());
        }
        for j in 0..cfg.num_players() {
            if j != i {
                d = d.max((self.peer[j] - x.peer_attention(i, j)).abs());
            }
        }
        d
    }
}

/// Candidate peer attention x_i^j(γ) = (1/λ)·log max{(λ/γ − 1)(e^u − 1), 1},
/// where u = ν·(sender's attention to the plan's source kind).
fn candidate(lambda: f64, gamma: f64, u: f64) -> f64 {
    if lambda <= gamma || u <= 0.0 {
        return 0.0;
    }
    let t = (lambda / gamma - 1.0).ln() + ln_exp_m1(u);
    if t > 0.0 {
        t / lambda
    } else {
        0.0
    }
}

/// The unique maximizer of player `i`'s problem under `plan`, holding the
/// other rows of `others` fixed (row `i` is ignored).
pub fn best_response(
    i: usize,
    others: &AttentionProfile,
    cfg: &GameConfig,
    plan: Plan,
) -> Result<BestResponse> {
    others.validate(cfg)?;
    let me = &cfg.players[i];
    if !(me.tau > 0.0) {
        return Err(Error::domain("best_response", "empty budget"));
    }
    let nu = cfg.source_visibility;
    let n = cfg.num_players();
    let target_kind = if cfg.merged_sources {
        SourceKind::Merged
    } else {
        match plan {
            Plan::Default => SourceKind::own_biased(me.side),
            Plan::Contrarian => SourceKind::own_biased(me.side.opposite()),
        }
    };

    // ν-scaled co-player attention to the plan's source kind.
    let u: Vec<f64> = (0..n)
        .map(|j| {
            if j == i {
                0.0
            } else {
                nu * others.source_kind_attention(cfg, j, target_kind)
            }
        })
        .collect();
    let lam: Vec<f64> = (0..n).map(|j| cfg.visibility(i, j)).collect();

    let demand = |gamma: f64| -> f64 {
        (0..n)
            .filter(|&j| j != i)
            .map(|j| candidate(lam[j], gamma, u[j]))
            .sum()
    };

    let (gamma, peer_at, source_budget) = if demand(nu) <= me.tau {
        (nu, nu, me.tau - demand(nu))
    } else {
        // Bisect γ ∈ (ν, max λ): demand is strictly decreasing and reaches 0
        // at the upper end.
        let mut lo = nu;
        let mut hi = lam
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &l)| l)
            .fold(nu, f64::max);
        for _ in 0..BISECT_ITERS {
            let mid = 0.5 * (lo + hi);
            if demand(mid) > me.tau {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let gamma = 0.5 * (lo + hi);
        let residual = (demand(gamma) - me.tau).abs();
        if residual > BUDGET_TOL * me.tau.max(1.0) {
            return Err(Error::NonConvergence {
                residual,
                iterations: BISECT_ITERS,
                bracket: Some((lo, hi)),
            });
        }
        (gamma, gamma, 0.0)
    };

    let mut peer = vec![0.0; n];
    for (j, p) in peer.iter_mut().enumerate() {
        if j != i {
            *p = candidate(lam[j], peer_at, u[j]);
        }
    }
    let mut source = vec![0.0; cfg.num_sources()];
    let slots = cfg.source_slots(target_kind);
    let k = slots.len();
    for s in slots {
        source[s] = source_budget / k as f64;
    }

    let mut full = others.clone();
    full.set_row(i, &source, &peer);
    let objective = plan_log_objective(&full, cfg, i, plan);

    let active_sources = (0..cfg.num_sources()).filter(|&s| source[s] > 0.0).collect();
    let active_peers = (0..n).filter(|&j| peer[j] > 0.0).collect();
    Ok(BestResponse {
        player: i,
        plan,
        source,
        peer,
        multiplier: gamma,
        active_sources,
        active_peers,
        objective,
    })
}

/// Expected stage-1 utility of the plan behind `br`, at its solution.
pub fn response_utility(br: &BestResponse, cfg: &GameConfig) -> f64 {
    let beta = cfg.players[br.player].beta;
    match br.plan {
        Plan::Default => -0.5 * beta * (-br.objective).exp(),
        Plan::Contrarian => -0.5 * (-br.objective).exp(),
    }
}

/// Per-player dominance thresholds β̄_i and their minimum β̄. Below the
/// threshold, taking the default action when uninformed is dominant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub per_player: Vec<f64>,
    pub global: f64,
}

/// β̄_i = exp(ν·τ_i)·P(U_i | ω = d_i-revealing state) evaluated at the
/// adversarial profile where every other player devotes his full bandwidth
/// to the deviation-relevant source, against the deviator's best response.
pub fn beta_threshold(cfg: &GameConfig) -> Result<ThresholdReport> {
    cfg.validate()?;
    if cfg.num_states != 2 {
        return Err(Error::domain("beta_threshold", "requires the two-state game"));
    }
    let n = cfg.num_players();
    let nu = cfg.source_visibility;
    let mut per_player = Vec::with_capacity(n);
    for i in 0..n {
        if cfg.merged_sources {
            // With one mega source the uninformed likelihood ratio is 1, so
            // the default plan dominates for every β in (0,1).
            per_player.push(1.0);
            continue;
        }
        // All co-players put everything on the deviator's contrarian source.
        let deviation_kind = SourceKind::own_biased(cfg.players[i].side.opposite());
        let slot = cfg.source_slots(deviation_kind).start;
        let mut adversarial = AttentionProfile::zeros(cfg);
        for j in 0..n {
            if j != i {
                adversarial.set_source_attention(j, slot, cfg.players[j].tau);
            }
        }
        let br = best_response(i, &adversarial, cfg, Plan::Contrarian)?;
        per_player.push((nu * cfg.players[i].tau - br.objective).exp());
    }
    let global = per_player.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(ThresholdReport { per_player, global })
}

/// Outcome of checking one player's incentives at a candidate profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlayerCheck {
    pub player: usize,
    /// Utility improvement available by switching to the best response.
    pub gain: f64,
    /// Sup-norm distance between the player's row and the best response.
    pub distance: f64,
    pub best_plan: Plan,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub pass: bool,
    pub tol: f64,
    pub max_gain: f64,
    pub max_distance: f64,
    pub players: Vec<PlayerCheck>,
}

pub const DEFAULT_VERIFY_TOL: f64 = 1e-8;

/// Recompute every player's best response under both plans against `x` and
/// confirm the profile matches the better one, in utility and in sup-norm.
pub fn verify_equilibrium(
    x: &AttentionProfile,
    cfg: &GameConfig,
    tol: f64,
) -> Result<VerificationReport> {
    x.validate(cfg)?;
    let n = cfg.num_players();
    let mut players = Vec::with_capacity(n);
    let (mut max_gain, mut max_distance) = (f64::NEG_INFINITY, 0.0f64);
    for i in 0..n {
        let (current, _) = stage1_utility_unchecked(x, cfg, i);
        let br_default = best_response(i, x, cfg, Plan::Default)?;
        let br_contrarian = best_response(i, x, cfg, Plan::Contrarian)?;
        let u_default = response_utility(&br_default, cfg);
        let u_contrarian = response_utility(&br_contrarian, cfg);
        let (best, u_best) = if u_default >= u_contrarian {
            (&br_default, u_default)
        } else {
            (&br_contrarian, u_contrarian)
        };
        let gain = u_best - current;
        let distance = best.row_distance(x, cfg);
        max_gain = max_gain.max(gain);
        max_distance = max_distance.max(distance);
        players.push(PlayerCheck {
            player: i,
            gain,
            distance,
            best_plan: best.plan,
        });
    }
    Ok(VerificationReport {
        pass: max_gain <= tol && max_distance <= tol.max(1e-6),
        tol,
        max_gain,
        max_distance,
        players,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Side;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg_two_sided(n: usize, lambda: f64, tau: f64) -> GameConfig {
        GameConfig::symmetric(n, 0.05, lambda, tau)
    }

    #[test]
    fn all_budget_to_source_when_others_carry_nothing() {
        let cfg = cfg_two_sided(3, 5.0, 2.0);
        let others = AttentionProfile::zeros(&cfg);
        let br = best_response(0, &others, &cfg, Plan::Default).unwrap();
        assert!((br.source[0] - 2.0).abs() < 1e-12);
        assert!(br.peer.iter().all(|&v| v == 0.0));
        assert_eq!(br.multiplier, 1.0);
        assert_eq!(br.active_sources, vec![0]);
    }

    #[test]
    fn weakly_visible_co_player_is_ignored() {
        // (λ−1)(e^τ−1) ≤ 1 keeps the candidate clamped at zero.
        let cfg = cfg_two_sided(2, 1.2, 0.2);
        let mut others = AttentionProfile::zeros(&cfg);
        others.set_source_attention(1, 0, 0.2);
        let br = best_response(0, &others, &cfg, Plan::Default).unwrap();
        assert_eq!(br.peer[1], 0.0);
        assert!((br.source[0] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn opposite_type_players_with_zero_source_are_ignored() {
        let cfg = cfg_two_sided(3, 5.0, 2.0);
        let mut others = AttentionProfile::zeros(&cfg);
        // Same-side player 1 attends source l; opposite-side players attend r.
        others.set_source_attention(1, 0, 2.0);
        for j in cfg.side_players(Side::R) {
            others.set_source_attention(j, 1, 2.0);
        }
        let br = best_response(0, &others, &cfg, Plan::Default).unwrap();
        assert!(br.peer[1] > 0.0);
        for j in cfg.side_players(Side::R) {
            assert_eq!(br.peer[j], 0.0, "cross-side attention at {j}");
        }
    }

    #[test]
    fn budget_binds_and_multiplier_rises_when_source_unused() {
        // Highly informative co-players force γ > 1 and zero source attention.
        let cfg = cfg_two_sided(4, 12.0, 0.4);
        let mut others = AttentionProfile::zeros(&cfg);
        for j in cfg.side_players(Side::L) {
            if j != 0 {
                others.set_source_attention(j, 0, 0.4);
            }
        }
        let br = best_response(0, &others, &cfg, Plan::Default).unwrap();
        let total: f64 = br.source.iter().sum::<f64>() + br.peer.iter().sum::<f64>();
        assert!((total - 0.4).abs() < 1e-9);
        assert!(br.multiplier > 1.0);
        assert_eq!(br.source[0], 0.0);
        // γ > 1 iff own-source attention is zero.
        assert!(br.active_sources.is_empty());
    }

    fn random_feasible_row(
        rng: &mut ChaCha8Rng,
        cfg: &GameConfig,
        i: usize,
    ) -> (Vec<f64>, Vec<f64>) {
        let n = cfg.num_players();
        let k = cfg.num_sources();
        let mut w: Vec<f64> = (0..k + n).map(|_| -rng.gen::<f64>().ln()).collect();
        let slack: f64 = -rng.gen::<f64>().ln();
        let total: f64 = w.iter().sum::<f64>() + slack;
        let scale = cfg.players[i].tau / total;
        w.iter_mut().for_each(|v| *v *= scale);
        let (source, peer) = w.split_at(k);
        let mut peer = peer.to_vec();
        peer[i] = 0.0;
        (source.to_vec(), peer)
    }

    #[test]
    fn br_beats_random_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let cfg = cfg_two_sided(3, 4.0, 1.5);
        let mut others = AttentionProfile::zeros(&cfg);
        for j in 1..cfg.num_players() {
            let (s, p) = random_feasible_row(&mut rng, &cfg, j);
            others.set_row(j, &s, &p);
        }
        let br = best_response(0, &others, &cfg, Plan::Default).unwrap();
        let mut trial = others.clone();
        for _ in 0..10_000 {
            let (s, p) = random_feasible_row(&mut rng, &cfg, 0);
            trial.set_row(0, &s, &p);
            let obj = plan_log_objective(&trial, &cfg, 0, Plan::Default);
            assert!(
                obj <= br.objective + 1e-9,
                "random row beat BR: {obj} > {}",
                br.objective
            );
        }
    }

    #[test]
    fn objective_concave_along_segments() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = cfg_two_sided(3, 4.0, 1.5);
        let mut others = AttentionProfile::zeros(&cfg);
        for j in 1..cfg.num_players() {
            let (s, p) = random_feasible_row(&mut rng, &cfg, j);
            others.set_row(j, &s, &p);
        }
        let eval = |s: &[f64], p: &[f64]| {
            let mut t = others.clone();
            t.set_row(0, s, p);
            plan_log_objective(&t, &cfg, 0, Plan::Default)
        };
        for _ in 0..200 {
            let (s_a, p_a) = random_feasible_row(&mut rng, &cfg, 0);
            let (s_b, p_b) = random_feasible_row(&mut rng, &cfg, 0);
            let mid_s: Vec<f64> = s_a.iter().zip(&s_b).map(|(a, b)| 0.5 * (a + b)).collect();
            let mid_p: Vec<f64> = p_a.iter().zip(&p_b).map(|(a, b)| 0.5 * (a + b)).collect();
            let lhs = eval(&mid_s, &mid_p);
            let rhs = 0.5 * (eval(&s_a, &p_a) + eval(&s_b, &p_b));
            assert!(lhs >= rhs - 1e-12, "concavity violated: {lhs} < {rhs}");
        }
    }

    #[test]
    fn beta_threshold_symmetric_instance() {
        let cfg = cfg_two_sided(6, 5.0, 2.0);
        let rep = beta_threshold(&cfg).unwrap();
        assert!(rep.global > 0.0 && rep.global < 1.0);
        for &b in &rep.per_player {
            assert!((b - rep.global).abs() < 1e-12, "asymmetric thresholds");
        }
    }

    #[test]
    fn beta_threshold_useless_co_players_boundary() {
        // Co-players with tiny visibility carry no second-hand value: the
        // deviator's best response is the bare source, and β̄ → 1.
        let mut cfg = cfg_two_sided(2, 5.0, 1.0);
        for p in cfg.players.iter_mut() {
            p.lambda = 1e-6;
        }
        let rep = beta_threshold(&cfg).unwrap();
        for &b in &rep.per_player {
            assert!((b - 1.0).abs() < 1e-12, "expected boundary 1, got {b}");
        }
    }

    #[test]
    fn zero_profile_fails_verification() {
        let cfg = cfg_two_sided(3, 5.0, 2.0);
        let x = AttentionProfile::zeros(&cfg);
        let rep = verify_equilibrium(&x, &cfg, DEFAULT_VERIFY_TOL).unwrap();
        assert!(!rep.pass);
        assert!(rep.max_gain > 0.0);
    }
}
