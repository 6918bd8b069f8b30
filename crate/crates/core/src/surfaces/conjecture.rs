//! Exploratory comparison of graph activities against surface determinants.
//!
//! For a connected trivalent graph with labeled edges, the harness tabulates
//! v·m^d·f_Γ({t_e}, {ℓ_e}; v) alongside det^{-d/2}(-Δ + m²) on the glued
//! surface Σ(Γ, {t_e}, {ℓ_e}), across a joint (m_j, v_j) schedule. Both
//! columns are reported with their ratio; nothing is asserted about the
//! ratio — the iterated m → 0, v → 0 limit with its v·m^d prefactor is not
//! reachable numerically, so this is plot data, not a test.
//!
//! The activity at exactly constrained widths grows like v^{-2n} as v → 0
//! (one factor 2δ_{1/v}(0)θ = 2χ(0)/v per vertex), so the reported column
//! v·m^d·f_Γ grows like v^{-(2n-1)} — for the 2-vertex graphs like 1/v,
//! matching the free-energy-style volume growth expected of the smear
//! cutoff. The scan asserts only that sign of trend.

use crate::error::{Error, Result};
use crate::graphs::{activity_f, ActivityContext, EdgeLabels, RibbonGraph, WidthMode};
use crate::interaction::{VertexKernel, VertexParams};
use crate::measure::FieldParams;
use crate::surfaces::fem::{fem_spectrum, DEFAULT_FEM_CAPACITY};
use crate::surfaces::zeta::{logdet_flat, modes_needed, suggest_split_point, SpectrumPair};
use crate::surfaces::{build_surface, BuildOptions};
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct ConjectureRow {
    pub m: f64,
    pub v: f64,
    /// v · m^d · f_Γ(labels; v)
    pub lhs: f64,
    /// log det(-Δ + m²) on Σ(Γ, labels)
    pub log_det: f64,
    /// det^{-d/2}
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug)]
pub struct ScanParams {
    /// Field template: cutoffs and grids for the vertex kernels (mass is
    /// overridden per schedule point).
    pub field: FieldParams,
    pub eps: f64,
    pub t_window: f64,
    /// Mesh spacing and fixture length for the surface.
    pub h: f64,
    pub fixture_len: f64,
    pub fem_capacity: usize,
    /// Mismatch gate for the determinant.
    pub max_mismatch: f64,
}

/// Run the schedule: for each (m_j, v_j) pair (sequences zipped), evaluate
/// the activity column and the determinant column.
pub fn conjecture_scan(
    graph: &RibbonGraph,
    labels: &EdgeLabels,
    d: u8,
    m_schedule: &[f64],
    v_schedule: &[f64],
    params: &ScanParams,
) -> Result<Vec<ConjectureRow>> {
    if m_schedule.len() != v_schedule.len() || m_schedule.is_empty() {
        return Err(Error::usage(
            "schedules must be nonempty and of equal length",
        ));
    }
    if !graph.is_connected() {
        return Err(Error::usage("conjecture scan needs a connected graph"));
    }
    // surface is mass-independent: build & solve once, as an (2h, h) pair
    // whose Richardson-combined traces cancel the FEM h² bias
    let build = |h: f64| -> Result<_> {
        let opts = BuildOptions {
            h,
            fixture_len: params.fixture_len,
            twists: None,
            junction: crate::surfaces::JunctionConvention::Mandelstam,
        };
        build_surface(graph, labels, &opts)
    };
    let mesh = build(params.h)?;
    let mesh_coarse = build(2.0 * params.h)?;
    let g_min = labels
        .ell
        .iter()
        .fold(f64::INFINITY, |acc, &w| acc.min(w * w));
    let t0 = suggest_split_point(g_min);
    let n_eigs = modes_needed(mesh.total_area(), t0).min(mesh_coarse.n_nodes - 1);
    let eigs = fem_spectrum(&mesh, 1e-9, n_eigs, params.fem_capacity)?;
    let eigs_c = fem_spectrum(&mesh_coarse, 1e-9, n_eigs, params.fem_capacity)?;
    let lap: Vec<f64> = eigs.iter().map(|&e| (e - 1e-18).max(0.0)).collect();
    let lap_c: Vec<f64> = eigs_c.iter().map(|&e| (e - 1e-18).max(0.0)).collect();
    let cone_angles = vec![2.0 * std::f64::consts::TAU; mesh.cone_nodes.len()];

    let mut rows = Vec::with_capacity(m_schedule.len());
    for (&m, &v) in m_schedule.iter().zip(v_schedule) {
        if !(m > 0.0 && v > 0.0 && v < params.field.l0 / 4.0) {
            return Err(Error::config(format!(
                "schedule point (m = {m}, v = {v}) violates m > 0, v ∈ (0, L0/4)"
            )));
        }
        let mut field = params.field;
        field.m = m;
        let kernel = VertexKernel::build(
            field,
            VertexParams {
                eps: params.eps,
                t_window: params.t_window,
                v,
            },
        )?;
        let act = activity_f(
            graph,
            labels,
            &ActivityContext {
                kernel: &kernel,
                mode: WidthMode::Pinned,
            },
        )?;
        let lhs = v * m.powi(d as i32) * act.value;
        let det = logdet_flat(
            &SpectrumPair::richardson(&lap, &lap_c, 4.0),
            m,
            mesh.total_area(),
            &cone_angles,
            t0,
            params.max_mismatch,
        )?;
        let rhs = (-0.5 * d as f64 * det.log_det).exp();
        rows.push(ConjectureRow {
            m,
            v,
            lhs,
            log_det: det.log_det,
            rhs,
            ratio: lhs / rhs,
        });
    }
    Ok(rows)
}

/// Sign-of-trend check for the v-direction at fixed m: the lhs column must
/// increase as v decreases.
pub fn v_trend_increasing(rows: &[ConjectureRow]) -> bool {
    let mut pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.v, r.lhs)).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0)); // v descending
    pairs.windows(2).all(|w| w[1].1 > w[0].1)
}
