//! Model variants: merged mega-source, multiple independent sources,
//! source-visibility rescaling, and the M-state symmetric game.

use serde::{Deserialize, Serialize};

use crate::config::{AttentionProfile, GameConfig, Side, SourceKind};
use crate::error::{Error, Result};
use crate::kernel::{ln_exp_m1, phi};
use crate::solver::Equilibrium;

/// The counterpart config of a merged-source game: the same players, all
/// one-minded, facing a single biased source.
pub fn one_sided_config(cfg_merged: &GameConfig) -> Result<GameConfig> {
    if !cfg_merged.merged_sources {
        return Err(Error::domain("one_sided_config", "config has split sources"));
    }
    let mut cfg = cfg_merged.clone();
    cfg.merged_sources = false;
    cfg.source_multiplicity = (1, 1);
    for p in cfg.players.iter_mut() {
        p.side = Side::L;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn relabel_profile(
    from_cfg: &GameConfig,
    from_slot: usize,
    to_cfg: &GameConfig,
    to_slot: usize,
    x: &AttentionProfile,
) -> AttentionProfile {
    let n = from_cfg.num_players();
    let mut out = AttentionProfile::zeros(to_cfg);
    for i in 0..n {
        out.set_source_attention(i, to_slot, x.source_attention(i, from_slot));
        for j in 0..n {
            if j != i {
                out.set_peer_attention(i, j, x.peer_attention(i, j));
            }
        }
    }
    out
}

/// Map an equilibrium of the merged game to the equivalent equilibrium of
/// the one-sided game (y_i^l = x_i^m, peer entries unchanged); utilities are
/// preserved exactly.
pub fn merge_map(cfg_merged: &GameConfig, eqm: &Equilibrium) -> Result<(GameConfig, Equilibrium)> {
    let cfg = one_sided_config(cfg_merged)?;
    let slot_l = cfg.source_slots(SourceKind::LBiased).start;
    let mut out = eqm.clone();
    out.side = Some(Side::L);
    out.network = relabel_profile(cfg_merged, 0, &cfg, slot_l, &eqm.network);
    Ok((cfg, out))
}

/// Inverse of [`merge_map`]: relabel a one-sided equilibrium into the merged
/// game.
pub fn merge_map_inverse(
    cfg_one_sided: &GameConfig,
    eqm: &Equilibrium,
) -> Result<(GameConfig, Equilibrium)> {
    if cfg_one_sided.merged_sources || !cfg_one_sided.side_players(Side::R).is_empty() {
        return Err(Error::domain(
            "merge_map_inverse",
            "expected a one-sided split-source game",
        ));
    }
    let mut cfg = cfg_one_sided.clone();
    cfg.merged_sources = true;
    cfg.validate()?;
    let slot_l = cfg_one_sided.source_slots(SourceKind::LBiased).start;
    let mut out = eqm.clone();
    out.side = None;
    out.network = relabel_profile(cfg_one_sided, slot_l, &cfg, 0, &eqm.network);
    Ok((cfg, out))
}

/// Aggregate a feasible profile of the multi-source game into the baseline
/// single-source-per-kind game: x_i^l = Σ_k y_i^{l_k} and likewise for r.
/// Equilibrium play is preserved under the map.
pub fn aggregate_sources(
    cfg_multi: &GameConfig,
    x: &AttentionProfile,
) -> Result<(GameConfig, AttentionProfile)> {
    if cfg_multi.merged_sources {
        return Err(Error::domain("aggregate_sources", "merged game has no kinds"));
    }
    x.validate(cfg_multi)?;
    let mut cfg = cfg_multi.clone();
    cfg.source_multiplicity = (1, 1);
    let n = cfg.num_players();
    let mut out = AttentionProfile::zeros(&cfg);
    for i in 0..n {
        out.set_source_attention(i, 0, x.source_kind_attention(cfg_multi, i, SourceKind::LBiased));
        out.set_source_attention(i, 1, x.source_kind_attention(cfg_multi, i, SourceKind::RBiased));
        for j in 0..n {
            if j != i {
                out.set_peer_attention(i, j, x.peer_attention(i, j));
            }
        }
    }
    Ok((cfg, out))
}

/// Canonical inverse of [`aggregate_sources`]: split each kind's attention
/// across `k1` L-biased and `k2` R-biased sources. Equal split by default;
/// custom nonnegative weights (summing to 1 per kind) may be supplied —
/// any split yields an equilibrium of the multi-source game.
pub fn split_sources(
    cfg_base: &GameConfig,
    x: &AttentionProfile,
    k1: usize,
    k2: usize,
    weights: Option<(&[f64], &[f64])>,
) -> Result<(GameConfig, AttentionProfile)> {
    if cfg_base.merged_sources || cfg_base.source_multiplicity != (1, 1) {
        return Err(Error::domain("split_sources", "expected the baseline layout"));
    }
    if k1 < 1 || k2 < 1 {
        return Err(Error::domain("split_sources", "need at least one source per kind"));
    }
    x.validate(cfg_base)?;
    let equal1 = vec![1.0 / k1 as f64; k1];
    let equal2 = vec![1.0 / k2 as f64; k2];
    let (w1, w2) = match weights {
        Some((a, b)) => (a.to_vec(), b.to_vec()),
        None => (equal1, equal2),
    };
    for (w, k) in [(&w1, k1), (&w2, k2)] {
        if w.len() != k
            || w.iter().any(|&v| v < 0.0)
            || (w.iter().sum::<f64>() - 1.0).abs() > 1e-12
        {
            return Err(Error::domain(
                "split_sources",
                "weights must be nonnegative and sum to 1 per kind",
            ));
        }
    }
    let mut cfg = cfg_base.clone();
    cfg.source_multiplicity = (k1, k2);
    let n = cfg.num_players();
    let mut out = AttentionProfile::zeros(&cfg);
    for i in 0..n {
        let xl = x.source_attention(i, 0);
        let xr = x.source_attention(i, 1);
        for (s, &w) in w1.iter().enumerate() {
            out.set_source_attention(i, s, w * xl);
        }
        for (s, &w) in w2.iter().enumerate() {
            out.set_source_attention(i, k1 + s, w * xr);
        }
        for j in 0..n {
            if j != i {
                out.set_peer_attention(i, j, x.peer_attention(i, j));
            }
        }
    }
    Ok((cfg, out))
}

/// The unit-visibility counterpart of a ν-game: λ̃ = λ/ν, τ̃ = ν·τ (floors
/// and pairwise rows transformed alike), ν̃ = 1.
pub fn rescaled_config(cfg: &GameConfig) -> GameConfig {
    let nu = cfg.source_visibility;
    let mut out = cfg.clone();
    out.source_visibility = 1.0;
    for p in out.players.iter_mut() {
        p.lambda /= nu;
        p.tau *= nu;
        if let Some(f) = p.tau_floor.as_mut() {
            *f *= nu;
        }
        if let Some(row) = p.lambda_in.as_mut() {
            for v in row.iter_mut() {
                *v /= nu;
            }
        }
    }
    out
}

/// Map an equilibrium of [`rescaled_config`]`(cfg)` back into the original
/// ν-game: every attention entry is divided by ν and multipliers are scaled
/// by ν; utilities, core and periphery carry over unchanged.
pub fn rescale_visibility(cfg: &GameConfig, eqm_rescaled: &Equilibrium) -> Result<Equilibrium> {
    cfg.validate()?;
    let nu = cfg.source_visibility;
    let mut out = eqm_rescaled.clone();
    for v in out.x_source.iter_mut() {
        *v /= nu;
    }
    for g in out.multipliers.iter_mut() {
        *g *= nu;
    }
    let n = cfg.num_players();
    let mut network = AttentionProfile::zeros(cfg);
    for i in 0..n {
        for s in 0..cfg.num_sources() {
            network.set_source_attention(i, s, eqm_rescaled.network.source_attention(i, s) / nu);
        }
        for j in 0..n {
            if j != i {
                network.set_peer_attention(i, j, eqm_rescaled.network.peer_attention(i, j) / nu);
            }
        }
    }
    out.network = network;
    Ok(out)
}

/// Parameters of the symmetric M-state game.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MStateParams {
    pub m: u32,
    pub n: usize,
    pub lambda: f64,
    pub tau: f64,
    pub beta: f64,
}

impl MStateParams {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::config("m", "need at least 2 states"));
        }
        if self.n < 2 {
            return Err(Error::config("n", "need at least 2 players per type"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::config("beta", "must lie in (0,1)"));
        }
        let mf = (self.m - 1) as f64;
        if !(self.lambda > 1.0 / mf) {
            return Err(Error::config(
                "lambda",
                format!("need lambda > 1/(M-1) = {}", 1.0 / mf),
            ));
        }
        let threshold = mf * phi(self.lambda * mf)?;
        if !(self.tau > threshold) {
            return Err(Error::config(
                "tau",
                format!("need tau > (M-1)·phi(lambda(M-1)) = {threshold}"),
            ));
        }
        Ok(())
    }
}

/// Solution of the symmetric M-state game: a generalized echo chamber with
/// Δ* = 0 and y* > z*.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MStateSolution {
    pub params: MStateParams,
    /// Attention to each disapproving source (M−1 of them).
    pub x_star: f64,
    /// Attention to each like-minded friend (N−1 of them).
    pub y_star: f64,
    /// Attention to each other player ((M−1)·N of them).
    pub z_star: f64,
    /// Attention to the own-type-revealing source; zero in the generalized
    /// echo chamber.
    pub delta_star: f64,
    pub budget_residual: f64,
    pub kkt_residual: f64,
}

fn clamped_log_gain(factor: f64, x: f64) -> f64 {
    if factor <= 0.0 || x <= 0.0 {
        return 0.0;
    }
    let t = factor.ln() + ln_exp_m1(x);
    t.max(0.0)
}

/// Solve the symmetric M-state game: x* is the unique fixed point of
/// (1/(M−1))·[τ − (N−1)·g1(x) − (M−1)N·g2(x)] with the clamped influence
/// maps g1 (toward like-minded friends) and g2 (toward all other players).
pub fn solve_m_state(params: &MStateParams) -> Result<MStateSolution> {
    params.validate()?;
    let (mf, nf) = ((params.m - 1) as f64, params.n as f64);
    let lambda = params.lambda;
    let g1 = |x: f64| clamped_log_gain(lambda * mf - 1.0, x) / lambda;
    let g2 = |x: f64| clamped_log_gain(lambda * (mf - 1.0) - 1.0, x) / lambda;
    let rhs = |x: f64| (params.tau - (nf - 1.0) * g1(x) - mf * nf * g2(x)) / mf;
    let (mut lo, mut hi) = (0.0, params.tau / mf);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid < rhs(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x_star = 0.5 * (lo + hi);
    let y_star = g1(x_star);
    let z_star = g2(x_star);
    if !(y_star > z_star) {
        return Err(Error::domain(
            "solve_m_state",
            "interior conditions hold but y* does not dominate z*",
        ));
    }
    let budget_residual =
        (mf * x_star + (nf - 1.0) * y_star + mf * nf * z_star - params.tau).abs();
    let sol = MStateSolution {
        params: params.clone(),
        x_star,
        y_star,
        z_star,
        delta_star: 0.0,
        budget_residual,
        kkt_residual: 0.0,
    };
    let kkt = m_state_kkt_residual(&sol);
    Ok(MStateSolution {
        kkt_residual: kkt,
        ..sol
    })
}

/// KKT residual of one player's problem against the M-state objective at the
/// symmetric solution: the marginal utilities of all positive variables must
/// coincide, the zero variables' marginals must not exceed them.
pub fn m_state_kkt_residual(sol: &MStateSolution) -> f64 {
    let p = &sol.params;
    let (mf, nf) = ((p.m - 1) as f64, p.n as f64);
    let lambda = p.lambda;
    let (x, y, z) = (sol.x_star, sol.y_star, sol.z_star);
    let ex = (-x).exp();
    let f_y = ex + (1.0 - ex) * (-lambda * y).exp();
    let f_z = ex + (1.0 - ex) * (-lambda * z).exp();
    // P(U_i|ω) for each of the M−1 mismatch states, common by symmetry.
    let p_u = ex * f_y.powf(nf - 1.0) * f_z.powf((mf - 1.0) * nf);
    // Marginal utilities (dropping the common β/M scale):
    let m_src = p_u;
    let m_friend = mf * p_u * lambda * (1.0 - ex) * (-lambda * y).exp() / f_y;
    let m_cross = (mf - 1.0) * p_u * lambda * (1.0 - ex) * (-lambda * z).exp() / f_z;
    let gamma = m_src;
    let mut worst = (m_friend - gamma).abs() / gamma;
    if z > 0.0 {
        worst = worst.max((m_cross - gamma).abs() / gamma);
    } else {
        // Complementary slackness: the zero variable's marginal must not
        // exceed the multiplier.
        worst = worst.max(((m_cross - gamma) / gamma).max(0.0));
    }
    // Δ* = 0 always satisfies its condition: the own-revealing source has
    // zero marginal value.
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::best_response::{verify_equilibrium, DEFAULT_VERIFY_TOL};
    use crate::kernel::{h, log_uninformed_prob, stage1_utility};
    use crate::solver::{
        combine_sides, solve_merged, solve_side, symmetric_fixed_point, SolverOptions,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn merged_equals_doubled_population() {
        // Symmetric sides, merged: one chamber of 2N players.
        let mut cfg = GameConfig::symmetric(3, 0.001, 5.0, 2.0);
        cfg.merged_sources = true;
        let sols = solve_merged(&cfg, &SolverOptions::default()).unwrap();
        let eq = sols.primary();
        let x6 = symmetric_fixed_point(5.0, 2.0, 6).unwrap();
        for &x in &eq.x_source {
            assert!((x - x6).abs() < 1e-9);
        }
        let (cfg_b, eq_b) = merge_map(&cfg, eq).unwrap();
        cfg_b.validate().unwrap();
        // The mapped profile is an equilibrium of the one-sided game.
        let direct = solve_side(&cfg_b, Side::L, &SolverOptions::default()).unwrap();
        for (a, b) in eq_b.x_source.iter().zip(&direct.primary().x_source) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn merge_round_trip_and_utilities() {
        let mut cfg = GameConfig::symmetric(2, 0.05, 4.0, 1.5);
        cfg.players[1].lambda = 3.0;
        cfg.players[2].tau = 1.8;
        cfg.merged_sources = true;
        let sols = solve_merged(&cfg, &SolverOptions::default()).unwrap();
        let eq = sols.primary();
        let (cfg_b, eq_b) = merge_map(&cfg, eq).unwrap();
        let (cfg_back, eq_back) = merge_map_inverse(&cfg_b, &eq_b).unwrap();
        assert!(cfg_back.merged_sources);
        assert_eq!(eq_back.network, eq.network);
        // Utilities recomputed on both sides of the map coincide.
        for (a, &i) in eq.members.iter().enumerate() {
            let u_merged = stage1_utility(&eq.network, &cfg, i).unwrap().0;
            let u_one_sided = stage1_utility(&eq_b.network, &cfg_b, i).unwrap().0;
            assert!((u_merged - u_one_sided).abs() < 1e-12);
            assert!((u_merged - eq.utilities[a]).abs() < 1e-12);
        }
    }

    #[test]
    fn split_identity_and_round_trip() {
        let cfg = GameConfig::symmetric(2, 0.01, 5.0, 2.0);
        let sols = solve_side(&cfg, Side::L, &SolverOptions::default()).unwrap();
        let r = solve_side(&cfg, Side::R, &SolverOptions::default()).unwrap();
        let full = combine_sides(sols.primary(), r.primary(), &cfg);
        // K1 = K2 = 1: identity.
        let (cfg_same, same) = split_sources(&cfg, &full, 1, 1, None).unwrap();
        assert_eq!(cfg_same.source_multiplicity, (1, 1));
        assert_eq!(same, full);
        // Equal split then aggregate: round trip on aggregates.
        let (cfg3, y) = split_sources(&cfg, &full, 3, 2, None).unwrap();
        let (_, back) = aggregate_sources(&cfg3, &y).unwrap();
        assert!(back.sup_distance(&full) < 1e-12);
        // Splitting preserves every uninformed probability exactly.
        for i in 0..cfg.num_players() {
            for omega in [Side::L, Side::R] {
                let a = log_uninformed_prob(&full, &cfg, i, omega);
                let b = log_uninformed_prob(&y, &cfg3, i, omega);
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn custom_split_weights() {
        let cfg = GameConfig::symmetric(2, 0.01, 5.0, 2.0);
        let sols = solve_side(&cfg, Side::L, &SolverOptions::default()).unwrap();
        let r = solve_side(&cfg, Side::R, &SolverOptions::default()).unwrap();
        let full = combine_sides(sols.primary(), r.primary(), &cfg);
        let w1 = [0.7, 0.3];
        let w2 = [1.0];
        let (cfg_w, y) = split_sources(&cfg, &full, 2, 1, Some((&w1, &w2))).unwrap();
        for i in 0..cfg.num_players() {
            let xl = full.source_attention(i, 0);
            assert!((y.source_attention(i, 0) - 0.7 * xl).abs() < 1e-15);
            assert!((y.source_attention(i, 1) - 0.3 * xl).abs() < 1e-15);
        }
        let (_, back) = aggregate_sources(&cfg_w, &y).unwrap();
        assert!(back.sup_distance(&full) < 1e-12);
        assert!(split_sources(&cfg, &full, 2, 1, Some((&[0.5, 0.2], &[1.0]))).is_err());
    }

    #[test]
    fn aggregated_multi_source_profile_verifies() {
        // Solve the baseline, split into 3+2 sources, aggregate back, verify.
        let cfg = GameConfig::symmetric(3, 0.002, 5.0, 2.0);
        let l = solve_side(&cfg, Side::L, &SolverOptions::default()).unwrap();
        let r = solve_side(&cfg, Side::R, &SolverOptions::default()).unwrap();
        let full = combine_sides(l.primary(), r.primary(), &cfg);
        let (cfg3, y) = split_sources(&cfg, &full, 3, 2, None).unwrap();
        let (cfg_base, back) = aggregate_sources(&cfg3, &y).unwrap();
        let rep = verify_equilibrium(&back, &cfg_base, DEFAULT_VERIFY_TOL).unwrap();
        assert!(rep.pass, "gain {:.3e}", rep.max_gain);
        // The split profile itself verifies in the multi-source game (the
        // best response compares kind aggregates).
        let rep3 = verify_equilibrium(&y, &cfg3, DEFAULT_VERIFY_TOL).unwrap();
        assert!(rep3.pass, "gain {:.3e}", rep3.max_gain);
    }

    #[test]
    fn rescaling_identity_at_unit_visibility() {
        let cfg = GameConfig::symmetric(3, 0.01, 5.0, 2.0);
        let sols = solve_side(&cfg, Side::L, &SolverOptions::default()).unwrap();
        let eq = sols.primary();
        let mapped = rescale_visibility(&cfg, eq).unwrap();
        assert!(mapped.network.sup_distance(&eq.network) < 1e-15);
    }

    #[test]
    fn rescaling_dual_path_agreement() {
        // Path 1: solve the ν-game natively.
        let mut cfg = GameConfig::symmetric(3, 0.01, 5.0, 2.0);
        cfg.source_visibility = 2.0;
        let native = solve_side(&cfg, Side::L, &SolverOptions::default()).unwrap();
        // Path 2: solve the unit-visibility counterpart and map back.
        let tilde_cfg = rescaled_config(&cfg);
        assert_eq!(tilde_cfg.source_visibility, 1.0);
        let tilde = solve_side(&tilde_cfg, Side::L, &SolverOptions::default()).unwrap();
        let mapped = rescale_visibility(&cfg, tilde.primary()).unwrap();
        let eq = native.primary();
        assert!(
            mapped.network.sup_distance(&eq.network) < 1e-9,
            "dual paths disagree by {}",
            mapped.network.sup_distance(&eq.network)
        );
        assert_eq!(mapped.core, eq.core);
        assert_eq!(mapped.periphery, eq.periphery);
        // Symmetric anchor: x of the transformed game divided by ν.
        let x_tilde = symmetric_fixed_point(5.0 / 2.0, 4.0, 3).unwrap();
        for &x in &eq.x_source {
            assert!((x - x_tilde / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rescaling_core_periphery_both_ways() {
        // Heterogeneous instance with a peripheral player under ν ≠ 1.
        let mut cfg = GameConfig::symmetric(3, 0.01, 5.0, 2.0);
        cfg.source_visibility = 1.7;
        cfg.players[2].lambda = 2.2;
        cfg.players[2].tau = 0.9;
        let native = solve_side(&cfg, Side::L, &SolverOptions::default()).unwrap();
        let tilde = solve_side(&rescaled_config(&cfg), Side::L, &SolverOptions::default()).unwrap();
        let mapped = rescale_visibility(&cfg, tilde.primary()).unwrap();
        assert_eq!(native.primary().core, mapped.core);
        assert_eq!(native.primary().periphery, mapped.periphery);
        assert!(native.primary().network.sup_distance(&mapped.network) < 1e-9);
    }

    #[test]
    fn m_state_reduces_to_two_state() {
        // M = 2: g2 clamps to zero and the map degenerates to the baseline
        // symmetric system.
        let params = MStateParams {
            m: 2,
            n: 6,
            lambda: 5.0,
            tau: 2.0,
            beta: 0.01,
        };
        let sol = solve_m_state(&params).unwrap();
        let x6 = symmetric_fixed_point(5.0, 2.0, 6).unwrap();
        assert!((sol.x_star - x6).abs() < 1e-10);
        assert!((sol.y_star - h(x6, 5.0).unwrap()).abs() < 1e-10);
        assert_eq!(sol.z_star, 0.0);
        assert_eq!(sol.delta_star, 0.0);
        assert!(sol.budget_residual < 1e-10);
        assert!(sol.kkt_residual < 1e-8);
    }

    #[test]
    fn m_state_interior_solution() {
        let params = MStateParams {
            m: 3,
            n: 3,
            lambda: 2.0,
            tau: 6.0,
            beta: 0.01,
        };
        let sol = solve_m_state(&params).unwrap();
        assert!(sol.y_star > sol.z_star && sol.z_star > 0.0);
        assert_eq!(sol.delta_star, 0.0);
        assert!(sol.budget_residual <= 1e-10);
        assert!(sol.kkt_residual <= 1e-8, "kkt {}", sol.kkt_residual);
    }

    #[test]
    fn m_state_condition_failures() {
        // λ at the boundary 1/(M−1).
        let bad = MStateParams {
            m: 3,
            n: 3,
            lambda: 0.5,
            tau: 6.0,
            beta: 0.1,
        };
        assert!(solve_m_state(&bad).is_err());
        // τ below the visibility threshold.
        let bad = MStateParams {
            m: 3,
            n: 3,
            lambda: 2.0,
            tau: 0.2,
            beta: 0.1,
        };
        assert!(solve_m_state(&bad).is_err());
    }

    #[test]
    fn m_state_equivalences() {
        // y* > 0 ⟺ y* > z* ⟺ the two parameter conditions; scan a grid.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let m = 2 + (rng.gen::<u32>() % 3);
            let n = 2 + (rng.gen::<usize>() % 3);
            let mf = (m - 1) as f64;
            let lambda = 1.0 / mf + 0.05 + 2.0 * rng.gen::<f64>();
            let threshold = mf * phi(lambda * mf).unwrap();
            let tau = threshold + 0.1 + 4.0 * rng.gen::<f64>();
            let params = MStateParams {
                m,
                n,
                lambda,
                tau,
                beta: 0.01,
            };
            let sol = solve_m_state(&params).unwrap();
            assert!(sol.y_star > 0.0);
            assert!(sol.y_star > sol.z_star);
            assert!(sol.budget_residual <= 1e-10 * tau.max(1.0));
            assert!(sol.kkt_residual <= 1e-8);
        }
    }
}
