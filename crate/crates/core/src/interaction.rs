//! The cut-off cubic string vertex and the objects built from it.
//!
//! The vertex couples a string of length ℓ to two strings of lengths ℓ1, ℓ2
//! through the heat-smoothed splitting family
//! `Θ̂ = (e^{-εH_{ℓ1,m}} ⊗ e^{-εH_{ℓ2,m}}) Γ(π_ℓ^{ℓ1,ℓ2}) e^{-εH_{ℓ,m}}`,
//! weighted by the smear `2 δ_{1/v}(ℓ1 + ℓ2 - ℓ) θ(ℓ - ℓ1 - ℓ2)` and
//! integrated over t ∈ [-T, T] and the length box. All quadratures run on
//! the field's native grids (midpoint cells in ℓ, trapezoid in t), so the
//! Monte-Carlo estimators below have exactly computable expectations — the
//! graphs module evaluates the same sums by Wick contraction.
//!
//! The length grid is required to align the θ-boundary with cell edges
//! (L0 an integer multiple of Δℓ): midpoint cells then never straddle the
//! jump and refinement converges at second order.

use crate::error::{Error, Result};
use crate::fock::FockBasis;
use crate::measure::{FieldParams, FieldSampler, MollifierSpec, StringFieldSample};
use crate::projection::{smoothed_family, SplitSpec};
use crate::util::quad::{bump_cdf, delta_kappa, theta_step, adaptive_simpson};
use crate::util::batch_means_stderr;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::sync::Arc;

/// Vertex cutoffs: heat smoothing ε, time window T, splitting smear v.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VertexParams {
    pub eps: f64,
    pub t_window: f64,
    pub v: f64,
}

impl VertexParams {
    pub fn validate(&self, field: &FieldParams) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::config(format!("ε must be > 0, got {}", self.eps)));
        }
        if !(self.t_window > 0.0 && self.t_window <= field.t_half + 1e-12) {
            return Err(Error::config(format!(
                "T must satisfy 0 < T ≤ t_half, got T = {}, t_half = {}",
                self.t_window, field.t_half
            )));
        }
        if !(self.v > 0.0 && self.v < field.l0 / 4.0) {
            return Err(Error::config(format!(
                "v ∈ (0, L0/4) violated: v = {}, L0/4 = {}",
                self.v,
                field.l0 / 4.0
            )));
        }
        let d_ell = field.d_ell();
        if d_ell >= self.v / 4.0 {
            return Err(Error::config(format!(
                "splitting smear unresolved: Δℓ = {d_ell} must be < v/4 = {}",
                self.v / 4.0
            )));
        }
        // θ-boundary alignment: L0 must sit on the cell lattice
        let ratio = field.l0 / d_ell;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::config(format!(
                "length grid misaligned: L0/Δℓ = {ratio} must be an integer so the
                 θ-boundary falls on cell edges"
            )));
        }
        // T must land on the time grid
        let steps = self.t_window / field.dt();
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::config(format!(
                "T/Δt = {steps} must be an integer so [-T, T] is a sub-grid"
            )));
        }
        Ok(())
    }
}

/// Value of a vertex functional, with a standard error when MC-estimated.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct VertexValue {
    pub value: Complex64,
    pub stderr: Option<f64>,
}

/// One active length triple of the smear quadrature.
pub struct SmearTriple {
    /// cell indices: ℓ1, ℓ2, ℓ
    pub i: usize,
    pub j: usize,
    pub k: usize,
    /// Δℓ³ · 2 δ_{1/v}(ℓ1+ℓ2-ℓ) θ(ℓ-ℓ1-ℓ2)
    pub weight: f64,
    /// conj(Θ̂)[(b,c), a] flattened as [(b·dim + c)·dim + a]
    pub tensor: Vec<Complex64>,
}

/// Precomputed vertex: time sub-grid, active smear triples, Θ̂ tensors.
pub struct VertexKernel {
    pub params: VertexParams,
    pub field: FieldParams,
    pub basis: Arc<FockBasis>,
    pub t_indices: Vec<usize>,
    pub t_weights: Vec<f64>,
    pub triples: Vec<SmearTriple>,
    pub mollifier: MollifierSpec,
}

pub const DEFAULT_TRIPLE_CAPACITY: usize = 200_000;

impl VertexKernel {
    pub fn build(field: FieldParams, params: VertexParams) -> Result<Self> {
        Self::build_with_capacity(field, params, DEFAULT_TRIPLE_CAPACITY)
    }

    pub fn build_with_capacity(
        field: FieldParams,
        params: VertexParams,
        capacity: usize,
    ) -> Result<Self> {
        field.validate()?;
        params.validate(&field)?;
        let basis = crate::fock::enumerate_basis(
            field.d,
            field.m,
            field.l0,
            field.cutoff,
            crate::fock::DEFAULT_BASIS_CAPACITY,
        )?;

        // trapezoid on the sub-grid [-T, T]
        let mut t_indices = Vec::new();
        for it in 0..field.n_t {
            if field.t_node(it).abs() <= params.t_window + 1e-9 {
                t_indices.push(it);
            }
        }
        let dt = field.dt();
        let mut t_weights = vec![dt; t_indices.len()];
        t_weights[0] = 0.5 * dt;
        *t_weights.last_mut().unwrap() = 0.5 * dt;

        // active smear triples with midpoint weights
        let d_ell = field.d_ell();
        let n = field.n_cells;
        let kappa_v = 1.0 / params.v;
        let mut raw_triples = Vec::new();
        for i in 0..n {
            let l1 = field.cell_center(i);
            for j in 0..n {
                let l2 = field.cell_center(j);
                let s = l1 + l2;
                if s - field.l_inf > params.v {
                    continue;
                }
                for k in 0..n {
                    let l = field.cell_center(k);
                    let arg = s - l;
                    let w = 2.0 * delta_kappa(kappa_v, arg) * theta_step(-arg);
                    if w > 0.0 {
                        raw_triples.push((i, j, k, d_ell.powi(3) * w));
                        if raw_triples.len() > capacity {
                            return Err(Error::capacity(format!(
                                "vertex kernel exceeds {capacity} active length triples"
                            )));
                        }
                    }
                }
            }
        }

        let m = field.m;
        let eps = params.eps;
        let dim = basis.dim();
        let triples: Result<Vec<SmearTriple>> = raw_triples
            .par_iter()
            .map(|&(i, j, k, weight)| {
                let spec = SplitSpec::new(
                    field.cell_center(i),
                    field.cell_center(j),
                    field.cell_center(k),
                )?;
                let theta = smoothed_family([eps; 3], [m; 3], spec, &basis)?.to_dense();
                debug_assert_eq!(theta.nrows, dim * dim);
                let tensor: Vec<Complex64> = theta.data.iter().map(|z| z.conj()).collect();
                Ok(SmearTriple {
                    i,
                    j,
                    k,
                    weight,
                    tensor,
                })
            })
            .collect();

        Ok(VertexKernel {
            params,
            field,
            basis,
            t_indices,
            t_weights,
            triples: triples?,
            mollifier: MollifierSpec::new(field.kappa)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Total smear mass Σ weights — the grid value of
    /// ∫∫∫ 2 δ_{1/v}(ℓ1+ℓ2-ℓ) θ(ℓ-ℓ1-ℓ2) dℓ1 dℓ2 dℓ.
    pub fn smear_mass(&self) -> f64 {
        self.triples.iter().map(|t| t.weight).sum()
    }

    fn check_sample(&self, s: &StringFieldSample) -> Result<()> {
        if s.params.n_t != self.field.n_t
            || s.params.n_cells != self.field.n_cells
            || (s.params.l0 - self.field.l0).abs() > 1e-12
            || (s.params.l_inf - self.field.l_inf).abs() > 1e-12
            || (s.params.t_half - self.field.t_half).abs() > 1e-12
        {
            return Err(Error::usage("sample grids do not match the vertex kernel"));
        }
        if s.dim < self.dim() {
            return Err(Error::usage(format!(
                "sample carries {} Fock components but the kernel needs {}",
                s.dim,
                self.dim()
            )));
        }
        Ok(())
    }
}

/// The cubic vertex J(Ψ1, Ψ2, Ψ3): conjugate-linear in slot 1 (the long
/// string being split), linear in slots 2 and 3.
pub fn vertex_j(
    kernel: &VertexKernel,
    psi1: &StringFieldSample,
    psi2: &StringFieldSample,
    psi3: &StringFieldSample,
) -> Result<Complex64> {
    kernel.check_sample(psi1)?;
    kernel.check_sample(psi2)?;
    kernel.check_sample(psi3)?;
    let dim = kernel.dim();
    let mut acc = Complex64::new(0.0, 0.0);
    for (pos, &it) in kernel.t_indices.iter().enumerate() {
        let wt = kernel.t_weights[pos];
        let mut t_acc = Complex64::new(0.0, 0.0);
        for tr in &kernel.triples {
            // u[b·dim+c] = Σ_a W[(b,c),a] · conj(Ψ1[t, ℓ=k, a])
            let mut inner = Complex64::new(0.0, 0.0);
            for b in 0..dim {
                let p2 = psi2.at(it, tr.i, b);
                if p2 == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for c in 0..dim {
                    let p3 = psi3.at(it, tr.j, c);
                    if p3 == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    let row = (b * dim + c) * dim;
                    let mut u = Complex64::new(0.0, 0.0);
                    for a in 0..dim {
                        u += tr.tensor[row + a] * psi1.at(it, tr.k, a).conj();
                    }
                    inner += u * p2 * p3;
                }
            }
            t_acc += tr.weight * inner;
        }
        acc += wt * t_acc;
    }
    Ok(acc)
}

/// The interaction I(Ψ) = J(Ψ_{M,κ}, Ψ_{M,κ}, Ψ_{M,κ}) on a raw sample:
/// the kernel's p_M projection and δ_κ mollification are applied here.
pub fn interaction_i(kernel: &VertexKernel, raw: &StringFieldSample) -> Result<VertexValue> {
    kernel.check_sample(raw)?;
    let cut = raw.project(kernel.dim()).mollify(kernel.mollifier);
    let value = vertex_j(kernel, &cut, &cut, &cut)?;
    Ok(VertexValue {
        value,
        stderr: None,
    })
}

/// Interaction of the vacuum-projected field π_Ω Ψ (scalar field theory
/// limit: only the Ω-component of the string field participates).
pub fn projected_interaction(
    kernel: &VertexKernel,
    raw: &StringFieldSample,
) -> Result<VertexValue> {
    kernel.check_sample(raw)?;
    let cut = raw.project(1).mollify(kernel.mollifier);
    let value = vertex_j(kernel, &cut, &cut, &cut)?;
    Ok(VertexValue {
        value,
        stderr: None,
    })
}

/// Twisted interaction: quadrature over (θ1, θ2, θ3) ∈ [0, 2π]³ of
/// J(R(θ1)Ψ, R(θ2)Ψ, R(θ3)Ψ) on a uniform n³ grid (periodic Riemann sum,
/// weight (2π/n)³ per node; the bare integral is reported, no 1/(2π)³).
pub fn twisted_interaction(
    kernel: &VertexKernel,
    raw: &StringFieldSample,
    n_theta: usize,
) -> Result<VertexValue> {
    if n_theta == 0 || n_theta > 16 {
        return Err(Error::capacity("θ-grid must have 1..=16 nodes per axis"));
    }
    kernel.check_sample(raw)?;
    let cut = raw.project(kernel.dim()).mollify(kernel.mollifier);
    let dim = kernel.dim();
    let windings: Vec<i64> = kernel.basis.states.iter().map(|s| s.winding()).collect();
    let rotate = |s: &StringFieldSample, theta: f64| -> StringFieldSample {
        let mut out = s.clone();
        for it in 0..s.params.n_t {
            for ic in 0..s.params.n_cells {
                for is in 0..dim {
                    *out.at_mut(it, ic, is) *=
                        Complex64::from_polar(1.0, -theta * windings[is] as f64);
                }
            }
        }
        out
    };
    let step = TAU / n_theta as f64;
    let w = step.powi(3);
    let rotated: Vec<StringFieldSample> = (0..n_theta)
        .map(|i| rotate(&cut, i as f64 * step))
        .collect();
    let mut acc = Complex64::new(0.0, 0.0);
    for r1 in &rotated {
        for r2 in &rotated {
            for r3 in &rotated {
                acc += w * vertex_j(kernel, r1, r2, r3)?;
            }
        }
    }
    Ok(VertexValue {
        value: acc,
        stderr: None,
    })
}

/// Per-sample Re I over a seeded sample range, in index order.
pub fn sample_re_i(
    sampler: &FieldSampler,
    kernel: &VertexKernel,
    n_samples: usize,
) -> Result<Vec<f64>> {
    if sampler.dim() < kernel.dim() {
        return Err(Error::usage(
            "sampler cutoff smaller than the vertex kernel cutoff",
        ));
    }
    (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let s = sampler.sample(i);
            interaction_i(kernel, &s).map(|v| v.value.re)
        })
        .collect()
}

/// Z(λ) = E[e^{iλ Re I}] over common samples for every λ, with batch-means
/// standard errors. Z(0) = 1 exactly and |Z| ≤ 1 always.
pub fn partition_z(
    sampler: &FieldSampler,
    kernel: &VertexKernel,
    lambdas: &[f64],
    n_samples: usize,
) -> Result<Vec<(f64, Complex64, f64)>> {
    if n_samples == 0 {
        return Err(Error::usage("partition_z needs at least one sample"));
    }
    let re_i = sample_re_i(sampler, kernel, n_samples)?;
    let mut out = Vec::with_capacity(lambdas.len());
    for &lam in lambdas {
        let vals: Vec<Complex64> = re_i
            .iter()
            .map(|&x| Complex64::from_polar(1.0, lam * x))
            .collect();
        let mean = vals.iter().sum::<Complex64>() / n_samples as f64;
        let re: Vec<f64> = vals.iter().map(|z| z.re).collect();
        let im: Vec<f64> = vals.iter().map(|z| z.im).collect();
        let se = batch_means_stderr(&re, 30).max(batch_means_stderr(&im, 30));
        out.push((lam, mean, se));
    }
    Ok(out)
}

/// Coupled Cauchy estimator E|I_{M,κ}(Ψ) - I_{M',κ'}(Ψ)|² over common raw
/// samples drawn at the finer cutoff. Returns (estimate, stderr).
pub fn cauchy_l2_check(
    sampler: &FieldSampler,
    kernel_coarse: &VertexKernel,
    kernel_fine: &VertexKernel,
    n_samples: usize,
) -> Result<(f64, f64)> {
    if kernel_fine.dim() < kernel_coarse.dim() {
        return Err(Error::usage("fine kernel must have the larger cutoff"));
    }
    if sampler.dim() < kernel_fine.dim() {
        return Err(Error::usage(
            "sampler cutoff smaller than the fine kernel cutoff",
        ));
    }
    let vals: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let s = sampler.sample(i);
            let a = interaction_i(kernel_coarse, &s)?.value;
            let b = interaction_i(kernel_fine, &s)?.value;
            Ok((a - b).norm_sqr())
        })
        .collect::<Result<_>>()?;
    let mean = vals.iter().sum::<f64>() / n_samples as f64;
    Ok((mean, batch_means_stderr(&vals, 30)))
}

/// Continuum smear mass ∫∫∫ 2δ_{1/v}(ℓ1+ℓ2-ℓ)θ(ℓ-ℓ1-ℓ2) dℓ1 dℓ2 dℓ over
/// [L0, L∞]³ by the tent-density reduction to one dimension.
pub fn smear_mass_oracle(l0: f64, l_inf: f64, v: f64) -> Result<f64> {
    let b = |s: f64| -> f64 {
        // 2 ∫_{max(s,L0)}^{L∞} δ_{1/v}(s - ℓ) dℓ, via the bump CDF
        if s >= l_inf {
            return 0.0;
        }
        let lo = ((l0 - s) / v).max(0.0);
        let hi = (l_inf - s) / v;
        2.0 * (bump_cdf(hi) - bump_cdf(lo))
    };
    let tent = |s: f64| -> f64 {
        let w = (s - 2.0 * l0).min(2.0 * l_inf - s).min(l_inf - l0);
        w.max(0.0)
    };
    // the integrand is supported on s ∈ [2 L0, L∞); empty when L∞ ≤ 2 L0
    if l_inf <= 2.0 * l0 {
        return Ok(0.0);
    }
    adaptive_simpson(&|s| tent(s) * b(s), 2.0 * l0, l_inf, 1e-11, 60)
}

/// Same mass by fully nested 1D adaptive quadrature (independent route).
pub fn smear_mass_oracle_nested(l0: f64, l_inf: f64, v: f64) -> Result<f64> {
    let b = |s: f64| -> f64 {
        if s >= l_inf {
            return 0.0;
        }
        let lo = ((l0 - s) / v).max(0.0);
        let hi = (l_inf - s) / v;
        2.0 * (bump_cdf(hi) - bump_cdf(lo))
    };
    let inner = |l1: f64| -> f64 {
        let hi = l_inf - l1; // b(l1 + ·) vanishes beyond this
        if hi <= l0 {
            return 0.0;
        }
        adaptive_simpson(&|l2: f64| b(l1 + l2), l0, hi, 1e-11, 60).unwrap_or(f64::NAN)
    };
    let outer = adaptive_simpson(&inner, l0, (l_inf - l0).min(l_inf), 1e-10, 60)?;
    if !outer.is_finite() {
        return Err(Error::numeric("nested smear-mass quadrature failed"));
    }
    Ok(outer)
}
