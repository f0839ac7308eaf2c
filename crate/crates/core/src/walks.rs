//! Walk sums over the firm block of the flow matrix.
//!
//! `T[h, k] = a_hk + ε_h a₀_k` is the weight of the step `h -> k`. Total walk
//! weights are `P = (I - T)^{-1}`; direct walks to `i` are the walks that reach
//! `i` only at their last step.

use nalgebra::{DMatrix, DVector};

use crate::economy::{self, EconomySpec, ProductionNetwork};
use crate::error::{ModelError, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub struct WalkTables {
    /// `T[h, k]`, step weight from `h` to `k`.
    pub transition: DMatrix<f64>,
    /// `P[j, i]`, total weight of walks from `j` to `i`.
    pub total: DMatrix<f64>,
    /// `D[j, i]`, weight of direct walks from `j` to `i`; `D[i, i]` is the
    /// direct-cycle weight around `i`.
    pub direct: DMatrix<f64>,
    /// `P₀[i] = Σ_j a₀_j P[j, i]`.
    pub household: DVector<f64>,
}

impl WalkTables {
    pub fn num_nodes(&self) -> usize {
        self.transition.nrows()
    }

    /// Largest violation of `P_ii (1 - D_ii) = 1` and `P_ji = D_ji P_ii`.
    pub fn identity_residual(&self) -> f64 {
        let m = self.num_nodes();
        let mut worst: f64 = 0.0;
        for i in 0..m {
            let pii = self.total[(i, i)];
            worst = worst.max((pii * (1.0 - self.direct[(i, i)]) - 1.0).abs());
            for j in (0..m).filter(|&j| j != i) {
                worst = worst.max((self.total[(j, i)] - self.direct[(j, i)] * pii).abs());
            }
        }
        worst
    }
}

/// `T = Ã_Mᵀ` for the given economy and network.
pub fn transition_matrix(econ: &EconomySpec, net: &ProductionNetwork) -> DMatrix<f64> {
    let m = econ.num_firms();
    let a0 = econ.consumption();
    DMatrix::from_fn(m, m, |h, k| net.share(h, k) + econ.epsilon(h) * a0[k])
}

pub fn walk_tables(econ: &EconomySpec, net: &ProductionNetwork) -> Result<WalkTables> {
    let report = economy::validate_assumptions(econ, net)?;
    if !report.ergodic {
        return Err(ModelError::NotErgodic {
            strongly_connected: report.strongly_connected,
            period: report.period,
        });
    }
    net.check_admissible(econ)?;
    walk_tables_for_transition(&transition_matrix(econ, net), &econ.consumption_vector())
}

/// Walk tables for an arbitrary substochastic step matrix and entry weights.
pub fn walk_tables_for_transition(t: &DMatrix<f64>, entry: &DVector<f64>) -> Result<WalkTables> {
    let m = t.nrows();
    let total = linalg::inverse(&linalg::identity_minus(t), "I - T")?;
    let mut direct = DMatrix::zeros(m, m);
    for i in 0..m {
        let col = direct_walks_to(t, i)?;
        direct.set_column(i, &col);
    }
    let household = total.transpose() * entry;
    Ok(WalkTables {
        transition: t.clone(),
        total,
        direct,
        household,
    })
}

/// Column `i` of the direct-walk table: solve with row `i` of `T` removed, so
/// that walks stop the first time they hit `i`.
pub fn direct_walks_to(t: &DMatrix<f64>, i: usize) -> Result<DVector<f64>> {
    let m = t.nrows();
    if i >= m {
        return Err(ModelError::FirmOutOfRange { firm: i, m });
    }
    let mut absorbed = t.clone();
    absorbed.row_mut(i).fill(0.0);
    let mut e = DVector::zeros(m);
    e[i] = 1.0;
    // Column i of (I - T')^{-1}: hitting weights of i from every start, with
    // entry i equal to one.
    let mut col = linalg::solve(&linalg::identity_minus(&absorbed), &e, "I - T'")?;
    col[i] = (0..m).map(|k| t[(i, k)] * col[k]).sum::<f64>();
    Ok(col)
}

/// Profits computed three ways.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct WalkProfits {
    /// `ε_i Σ_j a₀_j P_ji`.
    pub resolvent: Vec<f64>,
    /// `ε_i (a₀_i + Σ_{j≠i} a₀_j D_ji) / (1 - T_ii - Σ_{k≠i} T_ik D_ki)`.
    pub ratio: Vec<f64>,
}

pub fn profit_via_walks(econ: &EconomySpec, net: &ProductionNetwork) -> Result<WalkProfits> {
    let tables = walk_tables(econ, net)?;
    Ok(profits_from_tables(econ, &tables))
}

pub(crate) fn profits_from_tables(econ: &EconomySpec, tables: &WalkTables) -> WalkProfits {
    let m = econ.num_firms();
    let a0 = econ.consumption();
    let resolvent = (0..m)
        .map(|i| econ.epsilon(i) * tables.household[i])
        .collect();
    let ratio = (0..m)
        .map(|i| econ.epsilon(i) * ratio_numerator(a0, &tables.direct, i) / ratio_denominator(&tables.transition, &tables.direct, i))
        .collect();
    WalkProfits { resolvent, ratio }
}

/// `a₀_i + Σ_{j≠i} a₀_j D_ji`; does not depend on firm `i`'s strategy.
pub(crate) fn ratio_numerator(a0: &[f64], direct: &DMatrix<f64>, i: usize) -> f64 {
    a0[i]
        + (0..a0.len())
            .filter(|&j| j != i)
            .map(|j| a0[j] * direct[(j, i)])
            .sum::<f64>()
}

/// `1 - T_ii - Σ_{k≠i} T_ik D_ki`; affine in firm `i`'s row.
pub(crate) fn ratio_denominator(t: &DMatrix<f64>, direct: &DMatrix<f64>, i: usize) -> f64 {
    1.0 - t[(i, i)]
        - (0..t.nrows())
            .filter(|&k| k != i)
            .map(|k| t[(i, k)] * direct[(k, i)])
            .sum::<f64>()
}
