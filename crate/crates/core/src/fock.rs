//! Truncated bosonic Fock space over L²(S¹,ℝ) ⊗ ℝ^d.
//!
//! Single-particle modes are labeled by an integer Fourier index `k` (the
//! physical momentum is `2πk`) and a polarization index `pol ∈ 1..=d`. The
//! free Hamiltonian `H_{ℓ,m}` is diagonal on occupation states with
//! single-mode frequency `ω_k(ℓ,m) = √((2πk/ℓ)² + m²)`, so the truncated
//! basis of all occupation states with `H_{L0,m} ≤ M` is finite and carries
//! the heat semigroup, ladder operators and circle rotations as explicit
//! matrices.

use crate::error::{Error, Result};
use crate::util::linalg::CMat;
use num_complex::Complex64;
use serde::Serialize;
use std::collections::{BTreeMap, HashMap};
use std::f64::consts::TAU;
use std::sync::Arc;

/// Fourier/polarization label of a single-particle mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ModeIndex {
    pub k: i32,
    pub pol: u8,
}

/// Single-mode frequency ω_k(ℓ,m) = √((2πk/ℓ)² + m²).
pub fn omega(k: i32, ell: f64, m: f64) -> Result<f64> {
    if ell <= 0.0 || !ell.is_finite() {
        return Err(Error::domain(format!("omega needs ℓ > 0, got {ell}")));
    }
    if m <= 0.0 || !m.is_finite() {
        return Err(Error::domain(format!("omega needs m > 0, got {m}")));
    }
    let p = TAU * k as f64 / ell;
    Ok((p * p + m * m).sqrt())
}

/// A finite multiset of occupied modes; the vacuum Ω is the empty map.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct OccupationState {
    occ: BTreeMap<ModeIndex, u32>,
}

impl OccupationState {
    pub fn vacuum() -> Self {
        OccupationState::default()
    }

    pub fn from_pairs(pairs: &[(i32, u8, u32)]) -> Self {
        let mut occ = BTreeMap::new();
        for &(k, pol, n) in pairs {
            if n > 0 {
                *occ.entry(ModeIndex { k, pol }).or_insert(0) += n;
            }
        }
        OccupationState { occ }
    }

    pub fn is_vacuum(&self) -> bool {
        self.occ.is_empty()
    }

    pub fn count(&self, mode: ModeIndex) -> u32 {
        self.occ.get(&mode).copied().unwrap_or(0)
    }

    pub fn total_particles(&self) -> u32 {
        self.occ.values().sum()
    }

    pub fn modes(&self) -> impl Iterator<Item = (ModeIndex, u32)> + '_ {
        self.occ.iter().map(|(&m, &n)| (m, n))
    }

    /// Σ_modes k·n_k — the total Fourier weight seen by circle rotations.
    pub fn winding(&self) -> i64 {
        self.occ
            .iter()
            .map(|(m, &n)| m.k as i64 * n as i64)
            .sum()
    }

    pub fn with_added(&self, mode: ModeIndex) -> OccupationState {
        let mut occ = self.occ.clone();
        *occ.entry(mode).or_insert(0) += 1;
        OccupationState { occ }
    }

    /// Remove one particle from `mode`; `None` if the mode is empty.
    pub fn with_removed(&self, mode: ModeIndex) -> Option<OccupationState> {
        let mut occ = self.occ.clone();
        match occ.get_mut(&mode) {
            Some(n) if *n > 1 => {
                *n -= 1;
            }
            Some(_) => {
                occ.remove(&mode);
            }
            None => return None,
        }
        Some(OccupationState { occ })
    }

    /// Canonical sorted key `[k, pol, count]` used for indexing and dumps.
    pub fn key(&self) -> Vec<(i32, u8, u32)> {
        self.occ.iter().map(|(m, &n)| (m.k, m.pol, n)).collect()
    }
}

/// H_{ℓ,m} eigenvalue of an occupation state.
pub fn state_energy(state: &OccupationState, ell: f64, m: f64) -> Result<f64> {
    let mut e = 0.0;
    for (mode, n) in state.modes() {
        e += n as f64 * omega(mode.k, ell, m)?;
    }
    Ok(e)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FockParams {
    pub d: u8,
    pub m: f64,
    pub l0: f64,
    /// Energy cutoff M for H_{L0,m}.
    pub cutoff: f64,
}

impl FockParams {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::config("dimension count d must be ≥ 1"));
        }
        if self.m <= 0.0 || !self.m.is_finite() {
            return Err(Error::config(format!("mass must be > 0, got {}", self.m)));
        }
        if self.l0 <= 0.0 || !self.l0.is_finite() {
            return Err(Error::config(format!("L0 must be > 0, got {}", self.l0)));
        }
        if self.cutoff < 0.0 || !self.cutoff.is_finite() {
            return Err(Error::config(format!(
                "energy cutoff must be ≥ 0, got {}",
                self.cutoff
            )));
        }
        Ok(())
    }
}

/// All occupation states with `H_{L0,m} ≤ M`, in deterministic order:
/// ascending energy, ties broken lexicographically by occupation key.
/// The vacuum sits at index 0.
#[derive(Clone, Debug)]
pub struct FockBasis {
    pub params: FockParams,
    pub states: Vec<OccupationState>,
    /// Largest |k| that a single particle can carry under the cutoff.
    pub mode_window: i32,
    index: HashMap<Vec<(i32, u8, u32)>, usize>,
}

pub const DEFAULT_BASIS_CAPACITY: usize = 200_000;

/// Enumerate the truncated basis. Errors with a capacity message if the
/// basis would exceed `capacity` states.
pub fn enumerate_basis(
    d: u8,
    m: f64,
    l0: f64,
    cutoff: f64,
    capacity: usize,
) -> Result<Arc<FockBasis>> {
    let params = FockParams { d, m, l0, cutoff };
    params.validate()?;

    // smallest K with ω_{K+1}(L0,m) > M
    let mut window: i32 = 0;
    while omega(window + 1, l0, m)? <= cutoff {
        window += 1;
        if window > 1_000_000 {
            return Err(Error::capacity(
                "mode window exceeds 1000000; cutoff too large for this L0, m",
            ));
        }
    }

    let mut modes: Vec<(ModeIndex, f64)> = Vec::new();
    for k in -window..=window {
        let w = omega(k, l0, m)?;
        if w <= cutoff {
            for pol in 1..=d {
                modes.push((ModeIndex { k, pol }, w));
            }
        }
    }
    modes.sort_by(|a, b| (a.0.k, a.0.pol).cmp(&(b.0.k, b.0.pol)));

    let mut states = vec![OccupationState::vacuum()];
    fn dfs(
        modes: &[(ModeIndex, f64)],
        from: usize,
        budget: f64,
        current: &OccupationState,
        states: &mut Vec<OccupationState>,
        capacity: usize,
    ) -> Result<()> {
        for i in from..modes.len() {
            let (mode, w) = modes[i];
            if w > budget + 1e-12 {
                continue;
            }
            let mut s = current.clone();
            let mut left = budget;
            while left + 1e-12 >= w {
                left -= w;
                s = s.with_added(mode);
                if states.len() >= capacity {
                    return Err(Error::capacity(format!(
                        "Fock basis exceeds the configured bound of {capacity} states"
                    )));
                }
                states.push(s.clone());
                dfs(modes, i + 1, left, &s, states, capacity)?;
            }
        }
        Ok(())
    }
    dfs(&modes, 0, cutoff, &OccupationState::vacuum(), &mut states, capacity)?;

    let mut keyed: Vec<(f64, Vec<(i32, u8, u32)>, OccupationState)> = states
        .into_iter()
        .map(|s| {
            let e = state_energy(&s, l0, m).expect("validated params");
            let k = s.key();
            (e, k, s)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));

    let states: Vec<OccupationState> = keyed.into_iter().map(|(_, _, s)| s).collect();
    let index = states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.key(), i))
        .collect();

    Ok(Arc::new(FockBasis {
        params,
        states,
        mode_window: window,
        index,
    }))
}

impl FockBasis {
    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn index_of(&self, state: &OccupationState) -> Option<usize> {
        self.index.get(&state.key()).copied()
    }

    /// H_{ℓ,m} eigenvalues of all basis states, in basis order.
    pub fn energies(&self, ell: f64, m: f64) -> Result<Vec<f64>> {
        self.states
            .iter()
            .map(|s| state_energy(s, ell, m))
            .collect()
    }

    /// JSON dump: states as sorted arrays of [k, pol, count].
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "params": self.params,
            "mode_window": self.mode_window,
            "dim": self.dim(),
            "states": self.states.iter().map(|s| s.key()).collect::<Vec<_>>(),
        })
    }
}

/// Which basis an operator maps between.
#[derive(Clone, Debug)]
pub enum BasisRef {
    Single(Arc<FockBasis>),
    /// Tensor product F ⊗ F of two truncated bases.
    Tensor(Arc<FockBasis>, Arc<FockBasis>),
}

impl BasisRef {
    pub fn dim(&self) -> usize {
        match self {
            BasisRef::Single(b) => b.dim(),
            BasisRef::Tensor(a, b) => a.dim() * b.dim(),
        }
    }
}

#[derive(Clone, Debug)]
pub enum OpEntries {
    DiagonalReal(Vec<f64>),
    DiagonalComplex(Vec<Complex64>),
    Dense(CMat),
}

/// Matrix of an operator between truncated bases.
#[derive(Clone, Debug)]
pub struct TruncatedOperator {
    pub domain: BasisRef,
    pub codomain: BasisRef,
    pub entries: OpEntries,
}

impl TruncatedOperator {
    pub fn domain_dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn codomain_dim(&self) -> usize {
        self.codomain.dim()
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        match &self.entries {
            OpEntries::DiagonalReal(d) => d.iter().zip(v).map(|(&a, &x)| a * x).collect(),
            OpEntries::DiagonalComplex(d) => d.iter().zip(v).map(|(&a, &x)| a * x).collect(),
            OpEntries::Dense(m) => m.apply(v),
        }
    }

    pub fn to_dense(&self) -> CMat {
        match &self.entries {
            OpEntries::DiagonalReal(d) => {
                let dd: Vec<Complex64> = d.iter().map(|&x| Complex64::new(x, 0.0)).collect();
                CMat::from_diag(&dd)
            }
            OpEntries::DiagonalComplex(d) => CMat::from_diag(d),
            OpEntries::Dense(m) => m.clone(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let m = self.to_dense();
        let rows: Vec<Vec<[f64; 2]>> = (0..m.nrows)
            .map(|i| (0..m.ncols).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
            .collect();
        serde_json::json!({
            "domain_dim": self.domain_dim(),
            "codomain_dim": self.codomain_dim(),
            "entries": rows,
        })
    }
}

/// Heat semigroup e^{-t H_{ℓ,m}}: diagonal with entries e^{-t E_s(ℓ,m)};
/// the identity at t = 0.
pub fn heat_operator(
    basis: &Arc<FockBasis>,
    ell: f64,
    m: f64,
    t: f64,
) -> Result<TruncatedOperator> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::domain(format!("heat_operator needs t ≥ 0, got {t}")));
    }
    let diag: Vec<f64> = basis
        .energies(ell, m)?
        .into_iter()
        .map(|e| (-t * e).exp())
        .collect();
    Ok(TruncatedOperator {
        domain: BasisRef::Single(basis.clone()),
        codomain: BasisRef::Single(basis.clone()),
        entries: OpEntries::DiagonalReal(diag),
    })
}

/// Full-Fock heat trace by the mode product formula,
/// Tr e^{-t H} = Π_{|k| ≤ K} (1 - e^{-t ω_k})^{-d},
/// truncated to the mode window K. Increases and converges in K.
pub fn heat_trace_oracle(d: u8, ell: f64, m: f64, t: f64, k_window: i32) -> Result<f64> {
    if t <= 0.0 || !t.is_finite() {
        return Err(Error::domain(format!(
            "heat_trace_oracle needs t > 0, got {t}"
        )));
    }
    if k_window < 0 {
        return Err(Error::domain("mode window must be ≥ 0"));
    }
    let mut trace = 1.0;
    for k in -k_window..=k_window {
        let w = omega(k, ell, m)?;
        trace *= (1.0 - (-t * w).exp()).powi(-(d as i32));
    }
    Ok(trace)
}

/// Trace of the heat operator over the truncated basis.
pub fn truncated_heat_trace(basis: &Arc<FockBasis>, ell: f64, m: f64, t: f64) -> Result<f64> {
    let op = heat_operator(basis, ell, m, t)?;
    match op.entries {
        OpEntries::DiagonalReal(d) => Ok(d.iter().sum()),
        _ => unreachable!(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ladder {
    Annihilate,
    Create,
}

/// Matrix of a(mode) or a*(mode) on the truncated basis.
///
/// a |…, n, …⟩ = √n |…, n-1, …⟩ on normalized occupation states; creation is
/// the adjoint, with images falling outside the cutoff dropped (hard p_M).
pub fn ladder_matrix(
    basis: &Arc<FockBasis>,
    mode: ModeIndex,
    which: Ladder,
) -> Result<TruncatedOperator> {
    if mode.pol == 0 || mode.pol > basis.params.d {
        return Err(Error::domain(format!(
            "polarization {} outside 1..={}",
            mode.pol, basis.params.d
        )));
    }
    let dim = basis.dim();
    let mut m = CMat::zeros(dim, dim);
    for (col, s) in basis.states.iter().enumerate() {
        match which {
            Ladder::Annihilate => {
                let n = s.count(mode);
                if n > 0 {
                    let target = s.with_removed(mode).expect("occupied");
                    let row = basis.index_of(&target).expect("sub-state stays in basis");
                    m[(row, col)] = Complex64::new((n as f64).sqrt(), 0.0);
                }
            }
            Ladder::Create => {
                let target = s.with_added(mode);
                if let Some(row) = basis.index_of(&target) {
                    let n = s.count(mode);
                    m[(row, col)] = Complex64::new(((n + 1) as f64).sqrt(), 0.0);
                }
            }
        }
    }
    Ok(TruncatedOperator {
        domain: BasisRef::Single(basis.clone()),
        codomain: BasisRef::Single(basis.clone()),
        entries: OpEntries::Dense(m),
    })
}

/// Circle rotation lifted to Fock space.
///
/// Convention: R(θ) acts as f ↦ f(· − θ/2π) on the unit-circle
/// parametrization, so a particle of mode k picks up the phase e^{-ikθ} and
/// an occupation state the phase e^{-iθ Σ k·n_k}. Unitary, 2π-periodic.
pub fn rotation_operator(basis: &Arc<FockBasis>, theta: f64) -> TruncatedOperator {
    let diag: Vec<Complex64> = basis
        .states
        .iter()
        .map(|s| Complex64::from_polar(1.0, -theta * s.winding() as f64))
        .collect();
    TruncatedOperator {
        domain: BasisRef::Single(basis.clone()),
        codomain: BasisRef::Single(basis.clone()),
        entries: OpEntries::DiagonalComplex(diag),
    }
}
