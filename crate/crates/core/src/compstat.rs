//! Comparative statics of interior echo-chamber equilibria.
//!
//! Differentiating the binding budget identities through the equilibrium
//! yields a linear system in A_N = I_N + G_N, where G_N collects the
//! marginal influences g_j = h_x(x_j^l; λ_j). With a common visibility per
//! sender the off-diagonal of G_N is constant column by column, which admits
//! closed forms for det(A_N) and A_N⁻¹ in the elementary symmetric
//! polynomials of g. Both routes — closed form and generic LU — are computed
//! and their agreement recorded.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::{GameConfig, Side};
use crate::error::{Error, Result};
use crate::kernel::{h_lambda, h_x};
use crate::solver::{solve_side_warm, Equilibrium, SolverOptions};

/// κ treated as exactly zero below this magnitude: the knife-edge case (c).
pub const KAPPA_ZERO_TOL: f64 = 1e-12;

/// Elementary symmetric polynomials e_0..e_n of `g`, by the product
/// recurrence over ∏(1 + g_k·t).
fn elementary_symmetric(g: &[f64]) -> Vec<f64> {
    let n = g.len();
    let mut e = vec![0.0; n + 1];
    e[0] = 1.0;
    for (k, &gk) in g.iter().enumerate() {
        for s in (1..=k + 1).rev() {
            e[s] += gk * e[s - 1];
        }
    }
    e
}

/// det(A_N) = 1 + Σ_{s=1}^N (−1)^{s−1}(s−1)·e_s(g); strictly positive on
/// (0,1)^N.
pub fn closed_form_det(g: &[f64]) -> f64 {
    let e = elementary_symmetric(g);
    let mut det = 1.0;
    let mut sign = 1.0;
    for s in 1..=g.len() {
        det += sign * (s as f64 - 1.0) * e[s];
        sign = -sign;
    }
    det
}

/// A_N⁻¹ in closed form: diagonal entries are principal-minor determinants
/// over det(A_N); off-diagonal entries are (−1)^{N−1}·g_j·∏_{k∉{i,j}}(g_k−1)
/// over det(A_N).
pub fn closed_form_inverse(g: &[f64]) -> Vec<Vec<f64>> {
    let n = g.len();
    let det = closed_form_det(g);
    let sign = if n % 2 == 1 { 1.0 } else { -1.0 }; // (−1)^{N−1}
    let mut inv = vec![vec![0.0; n]; n];
    for i in 0..n {
        let minor: Vec<f64> = g
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != i)
            .map(|(_, &v)| v)
            .collect();
        inv[i][i] = closed_form_det(&minor) / det;
        for j in 0..n {
            if j == i {
                continue;
            }
            let mut prod = 1.0;
            for (k, &gk) in g.iter().enumerate() {
                if k != i && k != j {
                    prod *= gk - 1.0;
                }
            }
            inv[i][j] = sign * g[j] * prod / det;
        }
    }
    inv
}

fn to_dmatrix(a: &[Vec<f64>]) -> DMatrix<f64> {
    let n = a.len();
    DMatrix::from_fn(n, n, |r, c| a[r][c])
}

fn a_matrix(matrix: &[Vec<f64>]) -> DMatrix<f64> {
    let n = matrix.len();
    let mut a = to_dmatrix(matrix);
    for i in 0..n {
        a[(i, i)] += 1.0;
    }
    a
}

/// Generic LU inverse of I + G; the oracle route.
pub fn generic_inverse(matrix: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = matrix.len();
    let inv = a_matrix(matrix)
        .try_inverse()
        .ok_or_else(|| Error::domain("influence_system", "I + G not invertible"))?;
    Ok((0..n)
        .map(|r| (0..n).map(|c| inv[(r, c)]).collect())
        .collect())
}

/// Generic LU determinant of I + G.
pub fn generic_det(matrix: &[Vec<f64>]) -> f64 {
    a_matrix(matrix).determinant()
}

/// Marginal-influence system of an interior equilibrium, restricted to the
/// core when peripheral players exist.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InfluenceSystem {
    /// Core members (global ids, ascending) the matrices are indexed by.
    pub members: Vec<usize>,
    /// Scalar-visibility marginal influences g_j; `None` under pairwise
    /// visibility.
    pub g: Option<Vec<f64>>,
    /// G: entry (receiver, sender) = h_x(x_sender; λ_receiver^sender), zero
    /// diagonal.
    pub matrix: Vec<Vec<f64>>,
    /// Inverse of A = I + G: closed form when column-constant, generic LU
    /// otherwise.
    pub a_inv: Vec<Vec<f64>>,
    pub det: f64,
    /// κ_j = −∂h/∂λ at each member's resourcefulness (scalar visibility),
    /// rescaled to original units under source visibility ν.
    pub kappa: Option<Vec<f64>>,
    /// Sup-norm disagreement between the closed-form and generic inverses
    /// (column-constant case only).
    pub agreement: Option<f64>,
    /// All members share (λ, τ); enables the aggregate sign guarantee.
    pub homogeneous: bool,
    nu: f64,
}

impl InfluenceSystem {
    pub fn member_index(&self, player: usize) -> Result<usize> {
        self.members
            .iter()
            .position(|&m| m == player)
            .ok_or_else(|| Error::domain("influence_system", "player not a core member"))
    }
}

/// Build the influence system at `eqm`. Requires an interior core: every
/// core member strictly above his visibility threshold so that every
/// marginal influence lies in (0,1).
pub fn influence_system(eqm: &Equilibrium, cfg: &GameConfig) -> Result<InfluenceSystem> {
    let members: Vec<usize> = eqm.core.clone();
    if members.len() < 2 {
        return Err(Error::AssumptionViolated {
            detail: format!("need at least 2 core players, have {}", members.len()),
        });
    }
    let nu = cfg.source_visibility;
    let pairwise = cfg.has_pairwise_visibility();
    let n = members.len();
    let x: Vec<f64> = members
        .iter()
        .map(|&i| eqm.x_source[eqm.member_index(i).unwrap()])
        .collect();

    let mut matrix = vec![vec![0.0; n]; n];
    for r in 0..n {
        for c in 0..n {
            if r == c {
                continue;
            }
            let lam = cfg.visibility(members[r], members[c]) / nu;
            let gx = h_x(nu * x[c], lam).map_err(|_| Error::AssumptionViolated {
                detail: format!(
                    "player {}: resourcefulness below the visibility threshold",
                    members[c]
                ),
            })?;
            if !(gx > 0.0 && gx < 1.0) {
                return Err(Error::AssumptionViolated {
                    detail: format!(
                        "marginal influence of player {} is {gx}, not interior",
                        members[c]
                    ),
                });
            }
            matrix[r][c] = gx;
        }
    }

    let (g, kappa, a_inv, det, agreement) = if pairwise {
        let a_inv = generic_inverse(&matrix)?;
        let det = generic_det(&matrix);
        (None, None, a_inv, det, None)
    } else {
        let g: Vec<f64> = (0..n).map(|c| matrix[(c + 1) % n][c]).collect();
        let kappa: Vec<f64> = members
            .iter()
            .zip(&x)
            .map(|(&j, &xj)| {
                let lam = cfg.players[j].lambda / nu;
                Ok(-h_lambda(nu * xj, lam)? / (nu * nu))
            })
            .collect::<Result<_>>()?;
        let closed = closed_form_inverse(&g);
        let generic = generic_inverse(&matrix)?;
        let agreement = closed
            .iter()
            .flatten()
            .zip(generic.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let det = closed_form_det(&g);
        (Some(g), Some(kappa), closed, det, Some(agreement))
    };

    let homogeneous = !pairwise
        && members.windows(2).all(|w| {
            let (a, b) = (&cfg.players[w[0]], &cfg.players[w[1]]);
            a.lambda == b.lambda && a.tau == b.tau
        });

    Ok(InfluenceSystem {
        members,
        g,
        matrix,
        a_inv,
        det,
        kappa,
        agreement,
        homogeneous,
        nu,
    })
}

/// Which primitive the equilibrium is differentiated against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Perturbation {
    /// Bandwidth τ of one player.
    Tau(usize),
    /// Common visibility λ of one player.
    Lambda(usize),
    /// One pairwise visibility λ_receiver^sender.
    PairwiseLambda { receiver: usize, sender: usize },
}

/// The three sign regimes of visibility perturbations. `OwnUp`: the
/// perturbed player's resourcefulness and influence rise while everyone
/// else's fall; `OwnDown`: the reversal; `Null`: the knife edge where every
/// derivative vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignCase {
    OwnUp,
    OwnDown,
    Null,
}

/// Equilibrium gradients of one perturbation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradientReport {
    pub perturbation: Perturbation,
    /// ∂x_j^l per core member, aligned with the system's members.
    pub dx_source: Vec<f64>,
    /// ∂x_receiver^sender for core pairs (row = receiver, col = sender).
    pub dx_network: Vec<Vec<f64>>,
    /// ∂(Σ_n x_n^l).
    pub d_aggregate: f64,
    /// Sign regime for visibility perturbations; `None` for bandwidths.
    pub sign_case: Option<SignCase>,
}

/// Network entries move with their sender: ∂x_r^c = G_rc·∂x_c^l, plus the
/// direct h_λ term on the perturbed channel(s).
fn network_from_source(
    sys: &InfluenceSystem,
    dx_source: &[f64],
    direct: Option<(Option<usize>, usize, f64)>,
) -> Vec<Vec<f64>> {
    let n = sys.members.len();
    let mut net = vec![vec![0.0; n]; n];
    for (r, row) in net.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            if r != c {
                *v = sys.matrix[r][c] * dx_source[c];
            }
        }
    }
    if let Some((receiver, sender, delta)) = direct {
        match receiver {
            Some(r) => net[r][sender] += delta,
            None => {
                for (r, row) in net.iter_mut().enumerate() {
                    if r != sender {
                        row[sender] += delta;
                    }
                }
            }
        }
    }
    net
}

/// ∂/∂τ_i of the equilibrium: ∇x^l is column i of A⁻¹, and each network
/// entry moves with its sender's resourcefulness.
pub fn grad_bandwidth(sys: &InfluenceSystem, player: usize) -> Result<GradientReport> {
    let im = sys.member_index(player)?;
    let n = sys.members.len();
    let dx_source: Vec<f64> = (0..n).map(|r| sys.a_inv[r][im]).collect();
    let dx_network = network_from_source(sys, &dx_source, None);
    Ok(GradientReport {
        perturbation: Perturbation::Tau(player),
        d_aggregate: dx_source.iter().sum(),
        dx_source,
        dx_network,
        sign_case: None,
    })
}

fn classify(kappa: f64, own_up_when_negative: bool) -> SignCase {
    if kappa.abs() <= KAPPA_ZERO_TOL {
        SignCase::Null
    } else if (kappa < 0.0) == own_up_when_negative {
        SignCase::OwnUp
    } else {
        SignCase::OwnDown
    }
}

/// ∂/∂λ_i of the equilibrium (common visibility): ∇x^l = κ_i·A⁻¹·v with v
/// zero at i and one elsewhere. Negative κ_i is the `OwnUp` case.
pub fn grad_visibility(sys: &InfluenceSystem, player: usize) -> Result<GradientReport> {
    let im = sys.member_index(player)?;
    let kappa = sys
        .kappa
        .as_ref()
        .ok_or_else(|| Error::AssumptionViolated {
            detail: "scalar-visibility gradients need a common λ per sender".into(),
        })?[im];
    let n = sys.members.len();
    let dx_source: Vec<f64> = (0..n)
        .map(|r| {
            kappa
                * (0..n)
                    .filter(|&c| c != im)
                    .map(|c| sys.a_inv[r][c])
                    .sum::<f64>()
        })
        .collect();
    let dx_network = network_from_source(sys, &dx_source, Some((None, im, -kappa)));
    Ok(GradientReport {
        perturbation: Perturbation::Lambda(player),
        d_aggregate: dx_source.iter().sum(),
        dx_source,
        dx_network,
        sign_case: Some(classify(kappa, true)),
    })
}

/// ∂(Σ_n x_n^l) with the flag telling whether its sign is covered by the
/// guarantee (N = 2 or homogeneous players).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateGradient {
    pub value: f64,
    pub guaranteed: bool,
}

pub fn aggregate_attention_gradient(
    sys: &InfluenceSystem,
    player: usize,
    param: Perturbation,
) -> Result<AggregateGradient> {
    let report = match param {
        Perturbation::Tau(_) => grad_bandwidth(sys, player)?,
        Perturbation::Lambda(_) => grad_visibility(sys, player)?,
        Perturbation::PairwiseLambda { .. } => {
            return Err(Error::AssumptionViolated {
                detail: "aggregate guarantee is stated for tau and common lambda only".into(),
            })
        }
    };
    Ok(AggregateGradient {
        value: report.d_aggregate,
        guaranteed: sys.members.len() == 2 || sys.homogeneous,
    })
}

/// Derivatives of a peripheral player's attention as one core player's
/// characteristics move.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeripheralGradients {
    pub peripheral: usize,
    pub target: usize,
    /// Core members the peer vectors are aligned with.
    pub core: Vec<usize>,
    pub d_source_tau: f64,
    pub d_source_lambda: f64,
    /// ∂x_k^j per core sender j, for τ_i and λ_i.
    pub d_peer_tau: Vec<f64>,
    pub d_peer_lambda: Vec<f64>,
}

/// Peripheral comparative statics: requires every side member to attend the
/// source, at least two core players, and no borderline peripheral player.
pub fn peripheral_gradients(
    eqm: &Equilibrium,
    cfg: &GameConfig,
    peripheral: usize,
    target: usize,
) -> Result<PeripheralGradients> {
    if cfg.has_pairwise_visibility() {
        return Err(Error::AssumptionViolated {
            detail: "peripheral gradients are stated for common visibilities".into(),
        });
    }
    if !eqm.periphery.contains(&peripheral) {
        return Err(Error::AssumptionViolated {
            detail: format!("player {peripheral} is not peripheral"),
        });
    }
    if eqm.core.len() < 2 {
        return Err(Error::AssumptionViolated {
            detail: "need |core| >= 2".into(),
        });
    }
    let nu = cfg.source_visibility;
    for (a, &m) in eqm.members.iter().enumerate() {
        if !(eqm.x_source[a] > 0.0) || eqm.multipliers[a] != nu {
            return Err(Error::AssumptionViolated {
                detail: format!("player {m} does not attend the source"),
            });
        }
    }
    for &p in &eqm.periphery {
        let a = eqm.member_index(p).unwrap();
        let lam = cfg.players[p].lambda / nu;
        let threshold = crate::kernel::phi(lam)? / nu;
        if !(eqm.x_source[a] < threshold - 1e-12) {
            return Err(Error::AssumptionViolated {
                detail: format!("peripheral player {p} is borderline"),
            });
        }
    }

    let sys = influence_system(eqm, cfg)?;
    let im = sys.member_index(target)?;
    let g = sys.g.as_ref().expect("scalar visibility checked above");
    let kappa = sys.kappa.as_ref().unwrap()[im];

    let tau_report = grad_bandwidth(&sys, target)?;
    let lambda_report = grad_visibility(&sys, target)?;

    // Differentiate x_k^l = τ_k − Σ_{j∈core} h(x_j^l; λ_j) through the core;
    // the sums collapse via A·∇ = rhs.
    let d_source_tau = (1.0 - g[im]) * tau_report.dx_source[im] - 1.0;
    let d_source_lambda = (1.0 - g[im]) * lambda_report.dx_source[im] + kappa;

    let n = sys.members.len();
    let d_peer_tau: Vec<f64> = (0..n).map(|c| g[c] * tau_report.dx_source[c]).collect();
    let mut d_peer_lambda: Vec<f64> =
        (0..n).map(|c| g[c] * lambda_report.dx_source[c]).collect();
    d_peer_lambda[im] -= kappa;

    Ok(PeripheralGradients {
        peripheral,
        target,
        core: sys.members.clone(),
        d_source_tau,
        d_source_lambda,
        d_peer_tau,
        d_peer_lambda,
    })
}

/// Outcome of a pairwise-visibility perturbation. The Lemma-style sign
/// structure of A⁻¹ is verified numerically first; when it fails no sign
/// claims are made.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum PairwiseOutcome {
    Valid(GradientReport),
    AssumptionFails { detail: String },
}

/// Positive diagonal, negative off-diagonal, positive row sums.
pub fn inverse_sign_properties(a_inv: &[Vec<f64>]) -> std::result::Result<(), String> {
    for (r, row) in a_inv.iter().enumerate() {
        if !(row[r] > 0.0) {
            return Err(format!("diagonal entry ({r},{r}) = {} not positive", row[r]));
        }
        let mut row_sum = 0.0;
        for (c, &v) in row.iter().enumerate() {
            row_sum += v;
            if r != c && !(v < 0.0) {
                return Err(format!("off-diagonal entry ({r},{c}) = {v} not negative"));
            }
        }
        if !(row_sum > 0.0) {
            return Err(format!("row {r} sums to {row_sum}, not positive"));
        }
    }
    Ok(())
}

/// ∂/∂λ_i^j under pairwise visibility: ∇x^l = κ_i^j·A⁻¹·e_i with
/// κ_i^j = −h_λ(x_j^l; λ_i^j). Positive κ is the `OwnUp` case here.
pub fn pairwise_gradients(
    eqm: &Equilibrium,
    cfg: &GameConfig,
    receiver: usize,
    sender: usize,
) -> Result<PairwiseOutcome> {
    if receiver == sender {
        return Err(Error::domain("pairwise_gradients", "receiver equals sender"));
    }
    let sys = influence_system(eqm, cfg)?;
    if let Err(detail) = inverse_sign_properties(&sys.a_inv) {
        return Ok(PairwiseOutcome::AssumptionFails { detail });
    }
    let rm = sys.member_index(receiver)?;
    let sm = sys.member_index(sender)?;
    let nu = sys.nu;
    let x_sender = eqm.x_source[eqm.member_index(sender).unwrap()];
    let lam = cfg.visibility(receiver, sender) / nu;
    let kappa = -h_lambda(nu * x_sender, lam)? / (nu * nu);

    let n = sys.members.len();
    let dx_source: Vec<f64> = (0..n).map(|r| kappa * sys.a_inv[r][rm]).collect();
    let dx_network = network_from_source(&sys, &dx_source, Some((Some(rm), sm, -kappa)));
    Ok(PairwiseOutcome::Valid(GradientReport {
        perturbation: Perturbation::PairwiseLambda { receiver, sender },
        d_aggregate: dx_source.iter().sum(),
        dx_source,
        dx_network,
        sign_case: Some(classify(kappa, false)),
    }))
}

/// Centered finite differences of the side's resourcefulness by full
/// warm-started re-solves; the validation oracle for every analytic
/// gradient.
#[derive(Debug, Clone)]
pub struct ResolveGradients {
    /// Side members, ascending global ids.
    pub members: Vec<usize>,
    pub dx_source: Vec<f64>,
}

pub fn finite_difference_gradients(
    cfg: &GameConfig,
    side: Side,
    base: &Equilibrium,
    perturbation: Perturbation,
    step: f64,
    opts: &SolverOptions,
) -> Result<ResolveGradients> {
    let warm: Vec<(usize, f64)> = base
        .members
        .iter()
        .zip(&base.x_source)
        .map(|(&m, &x)| (m, x))
        .collect();
    let perturbed = |sign: f64| -> Result<Equilibrium> {
        let mut c = cfg.clone();
        match perturbation {
            Perturbation::Tau(i) => c.players[i].tau += sign * step,
            Perturbation::Lambda(i) => c.players[i].lambda += sign * step,
            Perturbation::PairwiseLambda { receiver, sender } => {
                let row = c.players[receiver]
                    .lambda_in
                    .as_mut()
                    .ok_or_else(|| Error::domain("finite_difference", "no pairwise rows"))?;
                row[sender] += sign * step;
            }
        }
        solve_side_warm(&c, side, opts, &warm)
    };
    let plus = perturbed(1.0)?;
    let minus = perturbed(-1.0)?;
    let dx_source = plus
        .x_source
        .iter()
        .zip(&minus.x_source)
        .map(|(p, m)| (p - m) / (2.0 * step))
        .collect();
    Ok(ResolveGradients {
        members: base.members.clone(),
        dx_source,
    })
}
