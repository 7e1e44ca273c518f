//! Game instances and attention profiles.
//!
//! A [`GameConfig`] fully describes one instance: the per-player
//! characteristics, the source layout (two biased kinds with arbitrary
//! multiplicity, or one merged mega source), the common source visibility ν,
//! and the number of states. An [`AttentionProfile`] is a joint attention
//! strategy over that layout, stored densely.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A player's default action; also his type. Like-minded players share a side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    L,
    R,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::L => Side::R,
            Side::R => Side::L,
        }
    }
}

/// The two kinds of primary sources. A source is named after the action it is
/// biased towards: the `LBiased` source reveals state R (its silence favors
/// action L) and vice versa. A side's *own-biased* kind carries the
/// disapproving news for that side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceKind {
    LBiased,
    RBiased,
    /// Single mega source that reveals every state.
    Merged,
}

impl SourceKind {
    /// The source kind a player of `side` attends under his default plan.
    pub fn own_biased(side: Side) -> SourceKind {
        match side {
            Side::L => SourceKind::LBiased,
            Side::R => SourceKind::RBiased,
        }
    }

    /// The kind that is activated in state `omega` of the two-state game.
    pub fn revealing(omega: Side) -> SourceKind {
        match omega {
            // State L is revealed by the R-biased source.
            Side::L => SourceKind::RBiased,
            Side::R => SourceKind::LBiased,
        }
    }
}

/// Per-player characteristics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlayerParams {
    pub id: usize,
    pub side: Side,
    /// Preference for the default action, in (0,1).
    pub beta: f64,
    /// Visibility as a secondary source, > 0.
    pub lambda: f64,
    /// Attention bandwidth, > 0.
    pub tau: f64,
    /// Bounded-bandwidth variant: minimum own-source attention, in [0, tau).
    pub tau_floor: Option<f64>,
    /// Pairwise visibility: `lambda_in[j]` is the visibility of sender j to
    /// this player (λ_i^j). When present for any player it must be present
    /// for all, and the scalar `lambda` is ignored for the network.
    pub lambda_in: Option<Vec<f64>>,
}

impl PlayerParams {
    pub fn new(id: usize, side: Side, beta: f64, lambda: f64, tau: f64) -> Self {
        PlayerParams {
            id,
            side,
            beta,
            lambda,
            tau,
            tau_floor: None,
            lambda_in: None,
        }
    }

    /// Effective floor on own-source attention (0 when unbounded).
    pub fn floor(&self) -> f64 {
        self.tau_floor.unwrap_or(0.0)
    }
}

/// A full game instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GameConfig {
    pub players: Vec<PlayerParams>,
    /// Visibility parameter ν of every primary source.
    pub source_visibility: f64,
    /// Number of states M. All game-level operations here require M = 2; the
    /// M-state variant has its own symmetric solver in `extensions`.
    pub num_states: u32,
    /// Numbers (K1, K2) of independent L-biased and R-biased sources.
    pub source_multiplicity: (usize, usize),
    /// Replace both kinds by a single mega source.
    pub merged_sources: bool,
}

impl GameConfig {
    /// Two-sided baseline instance: one source of each kind, ν = 1, M = 2.
    pub fn new(players: Vec<PlayerParams>) -> Self {
        GameConfig {
            players,
            source_visibility: 1.0,
            num_states: 2,
            source_multiplicity: (1, 1),
            merged_sources: false,
        }
    }

    /// Symmetric instance: `n` players per side with common (β, λ, τ).
    pub fn symmetric(n: usize, beta: f64, lambda: f64, tau: f64) -> Self {
        let mut players = Vec::with_capacity(2 * n);
        for i in 0..n {
            players.push(PlayerParams::new(i, Side::L, beta, lambda, tau));
        }
        for i in 0..n {
            players.push(PlayerParams::new(n + i, Side::R, beta, lambda, tau));
        }
        GameConfig::new(players)
    }

    pub fn num_players(&self) -> usize {
        self.players.len()
    }

    /// Source slots, in profile order: `[m]` when merged, else
    /// `[l_1..l_K1, r_1..r_K2]`.
    pub fn sources(&self) -> Vec<SourceKind> {
        if self.merged_sources {
            vec![SourceKind::Merged]
        } else {
            let (k1, k2) = self.source_multiplicity;
            let mut v = vec![SourceKind::LBiased; k1];
            v.extend(std::iter::repeat(SourceKind::RBiased).take(k2));
            v
        }
    }

    pub fn num_sources(&self) -> usize {
        if self.merged_sources {
            1
        } else {
            self.source_multiplicity.0 + self.source_multiplicity.1
        }
    }

    /// Indices of the source slots of `kind`.
    pub fn source_slots(&self, kind: SourceKind) -> std::ops::Range<usize> {
        let (k1, k2) = self.source_multiplicity;
        if self.merged_sources {
            0..1
        } else {
            match kind {
                SourceKind::LBiased => 0..k1,
                SourceKind::RBiased => k1..k1 + k2,
                SourceKind::Merged => 0..0,
            }
        }
    }

    /// Source slots activated in state `omega`: the revealing kind, or the
    /// merged source.
    pub fn revealing_slots(&self, omega: Side) -> std::ops::Range<usize> {
        if self.merged_sources {
            0..1
        } else {
            self.source_slots(SourceKind::revealing(omega))
        }
    }

    pub fn side_players(&self, side: Side) -> Vec<usize> {
        self.players
            .iter()
            .enumerate()
            .filter(|(_, p)| p.side == side)
            .map(|(i, _)| i)
            .collect()
    }

    /// Visibility λ_i^j of sender `j` to receiver `i`: the receiver's pairwise
    /// row when configured, the sender's scalar otherwise.
    pub fn visibility(&self, receiver: usize, sender: usize) -> f64 {
        match &self.players[receiver].lambda_in {
            Some(row) => row[sender],
            None => self.players[sender].lambda,
        }
    }

    pub fn has_pairwise_visibility(&self) -> bool {
        self.players.iter().any(|p| p.lambda_in.is_some())
    }

    /// Validate every invariant; the error carries the offending field path.
    pub fn validate(&self) -> Result<()> {
        let n = self.players.len();
        if !(self.source_visibility > 0.0) {
            return Err(Error::config("nu", "source visibility must be > 0"));
        }
        if self.num_states < 2 {
            return Err(Error::config("num_states", "must be at least 2"));
        }
        let (k1, k2) = self.source_multiplicity;
        if !self.merged_sources && (k1 < 1 || k2 < 1) {
            return Err(Error::config(
                "source_multiplicity",
                "need at least one source of each kind",
            ));
        }
        if self.merged_sources {
            if n < 2 {
                return Err(Error::config("players", "merged game needs >= 2 players"));
            }
        } else if self.num_states == 2 {
            // Sides must have 0 or >= 2 players: a one-sided game is the
            // merged-game counterpart, but a lone player on a side has no
            // chamber to form.
            let mut nonempty = 0;
            for side in [Side::L, Side::R] {
                match self.side_players(side).len() {
                    0 => {}
                    1 => {
                        return Err(Error::config(
                            "players",
                            format!("side {side:?} has a single player; sides need 0 or >= 2"),
                        ))
                    }
                    _ => nonempty += 1,
                }
            }
            if nonempty == 0 {
                return Err(Error::config("players", "no players"));
            }
        }
        let pairwise = self.has_pairwise_visibility();
        for (i, p) in self.players.iter().enumerate() {
            let path = |f: &str| format!("players[{i}].{f}");
            if p.id != i {
                return Err(Error::config(path("id"), format!("expected {i}, got {}", p.id)));
            }
            if !(p.beta > 0.0 && p.beta < 1.0) {
                return Err(Error::config(path("beta"), "must lie in (0,1)"));
            }
            if !(p.lambda > 0.0) {
                return Err(Error::config(path("lambda"), "must be > 0"));
            }
            if !(p.tau > 0.0) {
                return Err(Error::config(path("tau"), "must be > 0"));
            }
            if let Some(f) = p.tau_floor {
                if !(0.0..p.tau).contains(&f) {
                    return Err(Error::config(path("tau_floor"), "must lie in [0, tau)"));
                }
            }
            match &p.lambda_in {
                Some(row) => {
                    if row.len() != n {
                        return Err(Error::config(
                            path("lambda_in"),
                            format!("expected {n} entries, got {}", row.len()),
                        ));
                    }
                    for (j, &l) in row.iter().enumerate() {
                        if j != i && !(l > 0.0) {
                            return Err(Error::config(
                                format!("players[{i}].lambda_in[{j}]"),
                                "must be > 0",
                            ));
                        }
                    }
                }
                None => {
                    if pairwise {
                        return Err(Error::config(
                            path("lambda_in"),
                            "pairwise visibility must be set for all players or none",
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Feasibility slack allowed on each budget constraint.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// A joint attention strategy: per player, attention to every source slot and
/// to every other player. Entries are nonnegative; each player's total is
/// bounded by his bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionProfile {
    /// `source[i][s]`: attention player i pays to source slot s.
    source: Vec<Vec<f64>>,
    /// `peer[i][j]`: attention player i pays to player j; diagonal is 0.
    peer: Vec<Vec<f64>>,
}

impl AttentionProfile {
    pub fn zeros(cfg: &GameConfig) -> Self {
        let n = cfg.num_players();
        AttentionProfile {
            source: vec![vec![0.0; cfg.num_sources()]; n],
            peer: vec![vec![0.0; n]; n],
        }
    }

    pub fn num_players(&self) -> usize {
        self.peer.len()
    }

    pub fn source_attention(&self, player: usize, slot: usize) -> f64 {
        self.source[player][slot]
    }

    pub fn set_source_attention(&mut self, player: usize, slot: usize, value: f64) {
        self.source[player][slot] = value;
    }

    /// Aggregate attention player `i` pays to all sources of `kind`.
    pub fn source_kind_attention(&self, cfg: &GameConfig, i: usize, kind: SourceKind) -> f64 {
        cfg.source_slots(kind).map(|s| self.source[i][s]).sum()
    }

    /// Aggregate attention player `i` pays to the sources revealing `omega`.
    pub fn revealing_attention(&self, cfg: &GameConfig, i: usize, omega: Side) -> f64 {
        cfg.revealing_slots(omega).map(|s| self.source[i][s]).sum()
    }

    pub fn peer_attention(&self, receiver: usize, sender: usize) -> f64 {
        self.peer[receiver][sender]
    }

    pub fn set_peer_attention(&mut self, receiver: usize, sender: usize, value: f64) {
        debug_assert_ne!(receiver, sender);
        self.peer[receiver][sender] = value;
    }

    /// Total attention player `i` spends.
    pub fn total(&self, i: usize) -> f64 {
        self.source[i].iter().sum::<f64>() + self.peer[i].iter().sum::<f64>()
    }

    /// Replace player `i`'s whole row.
    pub fn set_row(&mut self, i: usize, source: &[f64], peer: &[f64]) {
        self.source[i].copy_from_slice(source);
        self.peer[i].copy_from_slice(peer);
        self.peer[i][i] = 0.0;
    }

    pub fn source_row(&self, i: usize) -> &[f64] {
        &self.source[i]
    }

    pub fn peer_row(&self, i: usize) -> &[f64] {
        &self.peer[i]
    }

    /// Sup-norm distance between two profiles of the same shape.
    pub fn sup_distance(&self, other: &AttentionProfile) -> f64 {
        let mut d: f64 = 0.0;
        for (a, b) in self.source.iter().zip(&other.source) {
            for (x, y) in a.iter().zip(b) {
                d = d.max((x - y).abs());
            }
        }
        for (a, b) in self.peer.iter().zip(&other.peer) {
            for (x, y) in a.iter().zip(b) {
                d = d.max((x - y).abs());
            }
        }
        d
    }

    /// Check nonnegativity and every bandwidth constraint against `cfg`.
    pub fn validate(&self, cfg: &GameConfig) -> Result<()> {
        let n = cfg.num_players();
        if self.peer.len() != n || self.source.len() != n {
            return Err(Error::InfeasibleProfile {
                detail: format!("profile sized for {} players, config has {n}", self.peer.len()),
            });
        }
        for i in 0..n {
            if self.source[i].len() != cfg.num_sources() {
                return Err(Error::InfeasibleProfile {
                    detail: format!("player {i}: wrong number of source slots"),
                });
            }
            let neg = self.source[i]
                .iter()
                .chain(&self.peer[i])
                .any(|&v| v < 0.0 || v.is_nan());
            if neg {
                return Err(Error::InfeasibleProfile {
                    detail: format!("player {i}: negative or NaN attention entry"),
                });
            }
            if self.peer[i][i] != 0.0 {
                return Err(Error::InfeasibleProfile {
                    detail: format!("player {i}: self-attention must be 0"),
                });
            }
            let tau = cfg.players[i].tau;
            let total = self.total(i);
            if total > tau + FEASIBILITY_TOL * tau.max(1.0) {
                return Err(Error::InfeasibleProfile {
                    detail: format!("player {i}: total attention {total} exceeds bandwidth {tau}"),
                });
            }
        }
        Ok(())
    }
}
