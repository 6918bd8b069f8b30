//! The string-splitting projection on L² and its second quantization.
//!
//! A loop of length ℓ restricted to two sub-intervals of lengths ℓ1 and ℓ2
//! (taken from the two ends, with ℓ1 + ℓ2 ≤ ℓ) and rescaled to unit circles
//! gives a norm-1 coisometry
//! `π_ℓ^{ℓ1,ℓ2} : L²[0,1] → L²[0,1] ⊕ L²[0,1]`,
//! with first component `(πf)(x) = √(ℓ1/ℓ) f(ℓ1 x / ℓ)` and second component
//! the analogous rescaling of the interval `[ℓ-ℓ2, ℓ]`. Its matrix in
//! truncated Fourier windows is assembled from closed-form integrals, and
//! the functorial lift `Γ(A)` to truncated Fock spaces is built by pushing
//! creation operators through `A` one particle at a time, dropping images
//! that leave the cutoff (hard p_M).

use crate::error::{Error, Result};
use crate::fock::{BasisRef, FockBasis, ModeIndex, OpEntries, TruncatedOperator};
use crate::util::linalg::CMat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::io::{Read, Write};
use std::sync::Arc;

/// Lengths of a string split: ℓ1 + ℓ2 ≤ ℓ, all positive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ell1: f64,
    pub ell2: f64,
    pub ell: f64,
}

impl SplitSpec {
    pub fn new(ell1: f64, ell2: f64, ell: f64) -> Result<Self> {
        let s = SplitSpec { ell1, ell2, ell };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("ℓ1", self.ell1), ("ℓ2", self.ell2), ("ℓ", self.ell)] {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::domain(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.ell1 + self.ell2 > self.ell * (1.0 + 1e-12) {
            return Err(Error::domain(format!(
                "split needs ℓ1 + ℓ2 ≤ ℓ, got {} + {} > {}",
                self.ell1, self.ell2, self.ell
            )));
        }
        Ok(())
    }
}

/// ∫₀¹ e^{2πi z x} dx.
fn fourier_unit_integral(z: f64) -> Complex64 {
    if z.abs() < 1e-14 {
        return Complex64::new(1.0, 0.0);
    }
    let phase = TAU * z;
    // (e^{2πiz} - 1) / (2πiz)
    (Complex64::from_polar(1.0, phase) - 1.0) / Complex64::new(0.0, phase)
}

/// Matrix of the splitting map between Fourier windows: two target blocks
/// (one per outgoing circle) over a common domain window.
#[derive(Clone, Debug)]
pub struct L2Matrix {
    pub spec: SplitSpec,
    pub k_domain: i32,
    pub k_target: i32,
    /// (2·k_target+1) × (2·k_domain+1); rows q, columns p, offset by the window.
    pub block1: CMat,
    pub block2: CMat,
}

impl L2Matrix {
    pub fn block(&self, b: usize) -> &CMat {
        match b {
            0 => &self.block1,
            1 => &self.block2,
            _ => panic!("block index out of range"),
        }
    }

    /// Both blocks stacked into one (2·(2K_t+1)) × (2K_d+1) matrix.
    pub fn stacked(&self) -> CMat {
        let rows = self.block1.nrows + self.block2.nrows;
        let cols = self.block1.ncols;
        let mut m = CMat::zeros(rows, cols);
        for i in 0..self.block1.nrows {
            for j in 0..cols {
                m[(i, j)] = self.block1[(i, j)];
                m[(i + self.block1.nrows, j)] = self.block2[(i, j)];
            }
        }
        m
    }
}

/// Closed-form assembly of the single-particle split matrix.
///
/// Block 1 entry: √(ℓ1/ℓ) ∫₀¹ e^{-2πiqx} e^{2πip(ℓ1/ℓ)x} dx; block 2 carries
/// the extra translation phase of the interval [ℓ-ℓ2, ℓ].
pub fn l2_split_matrix(spec: SplitSpec, k_domain: i32, k_target: i32) -> Result<L2Matrix> {
    spec.validate()?;
    if k_domain < 0 || k_target < 0 {
        return Err(Error::domain("mode windows must be ≥ 0"));
    }
    let r1 = spec.ell1 / spec.ell;
    let r2 = spec.ell2 / spec.ell;
    let s0 = (spec.ell - spec.ell2) / spec.ell;
    let nt = (2 * k_target + 1) as usize;
    let nd = (2 * k_domain + 1) as usize;
    let mut block1 = CMat::zeros(nt, nd);
    let mut block2 = CMat::zeros(nt, nd);
    for qi in 0..nt {
        let q = qi as i32 - k_target;
        for pi in 0..nd {
            let p = pi as i32 - k_domain;
            block1[(qi, pi)] = r1.sqrt() * fourier_unit_integral(p as f64 * r1 - q as f64);
            block2[(qi, pi)] = r2.sqrt()
                * Complex64::from_polar(1.0, TAU * p as f64 * s0)
                * fourier_unit_integral(p as f64 * r2 - q as f64);
        }
    }
    Ok(L2Matrix {
        spec,
        k_domain,
        k_target,
        block1,
        block2,
    })
}

/// Closed-form Gram matrix ⟨π*h', π*h⟩ of the adjoint images of target
/// Fourier modes, via the restriction/extension-by-zero identity on L².
/// Independent of the truncated matrix assembly; equals the identity for any
/// valid split, which is the coisometry π π* = 1.
pub fn pi_star_gram(spec: SplitSpec, k_target: i32) -> Result<CMat> {
    spec.validate()?;
    let r = [spec.ell1 / spec.ell, spec.ell2 / spec.ell];
    // support intervals of the two adjoint image families on [0,1]
    let supp = [(0.0, r[0]), ((spec.ell - spec.ell2) / spec.ell, 1.0)];
    let nt = (2 * k_target + 1) as usize;
    let mut g = CMat::zeros(2 * nt, 2 * nt);
    for b_row in 0..2 {
        for b_col in 0..2 {
            let (lo, hi) = (
                supp[b_row].0.max(supp[b_col].0),
                supp[b_row].1.min(supp[b_col].1),
            );
            for qi in 0..nt {
                let q = (qi as i32 - k_target) as f64;
                for pi in 0..nt {
                    let p = (pi as i32 - k_target) as f64;
                    let row = b_row * nt + qi;
                    let col = b_col * nt + pi;
                    if hi <= lo {
                        continue; // disjoint supports
                    }
                    // π*(b,q)(x) = (1/√r_b) e^{2πiq(x - a_b)/r_b} on its support
                    let (a_r, r_r) = (supp[b_row].0, r[b_row]);
                    let (a_c, r_c) = (supp[b_col].0, r[b_col]);
                    let amp = 1.0 / (r_r * r_c).sqrt();
                    // conj(row mode) · (col mode): frequency and constant phase
                    let freq = p / r_c - q / r_r;
                    let phase0 = -TAU * (p * a_c / r_c - q * a_r / r_r);
                    let integral = if freq.abs() < 1e-14 {
                        Complex64::new(hi - lo, 0.0)
                    } else {
                        let w = TAU * freq;
                        (Complex64::from_polar(1.0, w * hi) - Complex64::from_polar(1.0, w * lo))
                            / Complex64::new(0.0, w)
                    };
                    g[(row, col)] = amp * Complex64::from_polar(1.0, phase0) * integral;
                }
            }
        }
    }
    Ok(g)
}

/// Single-particle map consumed by second quantization.
pub enum SingleParticle {
    /// A contraction of the mode window onto itself, acting identically on
    /// polarizations: (2K+1) × (2K+1).
    Square { k_window: i32, mat: CMat },
    /// The splitting map into two outgoing windows.
    Split(L2Matrix),
}

impl SingleParticle {
    fn op_norm(&self) -> f64 {
        match self {
            SingleParticle::Square { mat, .. } => mat.op_norm(),
            SingleParticle::Split(m) => m.stacked().op_norm(),
        }
    }
}

/// Codomain of a second-quantized operator.
pub enum GammaCodomain {
    Single(Arc<FockBasis>),
    Tensor(Arc<FockBasis>, Arc<FockBasis>),
}

/// Creation tables for one factor basis: for each target mode, maps a basis
/// index to (index with one more particle, √(n+1)), or None when the image
/// leaves the cutoff.
struct CreationTable {
    k_window: i32,
    d: u8,
    table: Vec<Vec<Option<(usize, f64)>>>,
}

impl CreationTable {
    fn build(basis: &FockBasis, k_window: i32) -> Self {
        let d = basis.params.d;
        let n_modes = (2 * k_window + 1) as usize;
        let mut table = vec![Vec::new(); n_modes * d as usize];
        for q in -k_window..=k_window {
            for pol in 1..=d {
                let mode = ModeIndex { k: q, pol };
                let slot = ((q + k_window) as usize) * d as usize + (pol - 1) as usize;
                table[slot] = basis
                    .states
                    .iter()
                    .map(|s| {
                        let target = s.with_added(mode);
                        basis
                            .index_of(&target)
                            .map(|i| (i, ((s.count(mode) + 1) as f64).sqrt()))
                    })
                    .collect();
            }
        }
        CreationTable { k_window, d, table }
    }

    fn get(&self, q: i32, pol: u8) -> Option<&[Option<(usize, f64)>]> {
        if q.abs() > self.k_window || pol == 0 || pol > self.d {
            return None;
        }
        let slot = ((q + self.k_window) as usize) * self.d as usize + (pol - 1) as usize;
        Some(&self.table[slot])
    }
}

/// Γ(A): the functorial lift of a single-particle contraction to truncated
/// Fock spaces, with Γ(A) a*(f) = a*(Af) Γ(A) and Γ(A)Ω = Ω.
///
/// Columns are built by recursion on particle number: removing one particle
/// strictly lowers the energy, so the energy-sorted basis order is a valid
/// build order. Images outside the codomain cutoff are dropped (hard p_M).
pub fn second_quantize(
    a: &SingleParticle,
    domain: &Arc<FockBasis>,
    codomain: &GammaCodomain,
) -> Result<TruncatedOperator> {
    let norm = a.op_norm();
    if norm > 1.0 + 1e-9 {
        return Err(Error::domain(format!(
            "second quantization needs a contraction; operator norm {norm:.3e} exceeds 1"
        )));
    }
    let d = domain.params.d;
    match codomain {
        GammaCodomain::Single(cb) => {
            if cb.params.d != d {
                return Err(Error::usage("polarization counts differ"));
            }
            let (k_window, mat) = match a {
                SingleParticle::Square { k_window, mat } => (*k_window, mat),
                SingleParticle::Split(_) => {
                    return Err(Error::usage("split maps need a tensor-product codomain"))
                }
            };
            if domain.mode_window > k_window {
                return Err(Error::usage(
                    "single-particle window smaller than the domain mode window",
                ));
            }
            let cre = CreationTable::build(cb, cb.mode_window);
            let dim_d = domain.dim();
            let dim_c = cb.dim();
            let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(dim_d);
            for s in domain.states.iter() {
                if s.is_vacuum() {
                    let mut col = vec![Complex64::new(0.0, 0.0); dim_c];
                    col[0] = Complex64::new(1.0, 0.0);
                    cols.push(col);
                    continue;
                }
                let (mode, n) = s.modes().next().expect("non-vacuum");
                let sub = s.with_removed(mode).expect("occupied");
                let sub_col = &cols[domain.index_of(&sub).expect("sub-state is in the basis")];
                let mut col = vec![Complex64::new(0.0, 0.0); dim_c];
                let pcol = (mode.k + k_window) as usize;
                for q in -cb.mode_window..=cb.mode_window {
                    if q.abs() > k_window {
                        continue;
                    }
                    let amp = mat[((q + k_window) as usize, pcol)];
                    if amp.norm_sqr() == 0.0 {
                        continue;
                    }
                    if let Some(tab) = cre.get(q, mode.pol) {
                        for (i, z) in sub_col.iter().enumerate() {
                            if z.norm_sqr() == 0.0 {
                                continue;
                            }
                            if let Some((tgt, fac)) = tab[i] {
                                col[tgt] += amp * z * fac;
                            }
                        }
                    }
                }
                let scale = 1.0 / (n as f64).sqrt();
                col.iter_mut().for_each(|z| *z *= scale);
                cols.push(col);
            }
            let mut m = CMat::zeros(dim_c, dim_d);
            for (j, col) in cols.iter().enumerate() {
                for (i, z) in col.iter().enumerate() {
                    m[(i, j)] = *z;
                }
            }
            Ok(TruncatedOperator {
                domain: BasisRef::Single(domain.clone()),
                codomain: BasisRef::Single(cb.clone()),
                entries: OpEntries::Dense(m),
            })
        }
        GammaCodomain::Tensor(b1, b2) => {
            if b1.params.d != d || b2.params.d != d {
                return Err(Error::usage("polarization counts differ"));
            }
            let split = match a {
                SingleParticle::Split(m) => m,
                SingleParticle::Square { .. } => {
                    return Err(Error::usage("square maps need a single codomain"))
                }
            };
            if domain.mode_window > split.k_domain {
                return Err(Error::usage(
                    "split-matrix domain window smaller than the domain mode window",
                ));
            }
            let cre1 = CreationTable::build(b1, b1.mode_window.min(split.k_target));
            let cre2 = CreationTable::build(b2, b2.mode_window.min(split.k_target));
            let dim2 = b2.dim();
            let dim_c = b1.dim() * dim2;
            let dim_d = domain.dim();
            let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(dim_d);
            for s in domain.states.iter() {
                if s.is_vacuum() {
                    let mut col = vec![Complex64::new(0.0, 0.0); dim_c];
                    col[0] = Complex64::new(1.0, 0.0); // Ω ↦ Ω ⊗ Ω
                    cols.push(col);
                    continue;
                }
                let (mode, n) = s.modes().next().expect("non-vacuum");
                let sub = s.with_removed(mode).expect("occupied");
                let sub_col = &cols[domain.index_of(&sub).expect("sub-state is in the basis")];
                let mut col = vec![Complex64::new(0.0, 0.0); dim_c];
                let pcol = (mode.k + split.k_domain) as usize;
                for (cre, bm, first_factor) in [
                    (&cre1, &split.block1, true),
                    (&cre2, &split.block2, false),
                ] {
                    for q in -cre.k_window..=cre.k_window {
                        let amp = bm[((q + split.k_target) as usize, pcol)];
                        if amp.norm_sqr() == 0.0 {
                            continue;
                        }
                        let tab = cre.get(q, mode.pol).expect("window-checked");
                        for (t, z) in sub_col.iter().enumerate() {
                            if z.norm_sqr() == 0.0 {
                                continue;
                            }
                            let (i1, i2) = (t / dim2, t % dim2);
                            let src = if first_factor { i1 } else { i2 };
                            if let Some((tgt, fac)) = tab[src] {
                                let t_new = if first_factor {
                                    tgt * dim2 + i2
                                } else {
                                    i1 * dim2 + tgt
                                };
                                col[t_new] += amp * z * fac;
                            }
                        }
                    }
                }
                let scale = 1.0 / (n as f64).sqrt();
                col.iter_mut().for_each(|z| *z *= scale);
                cols.push(col);
            }
            let mut m = CMat::zeros(dim_c, dim_d);
            for (j, col) in cols.iter().enumerate() {
                for (i, z) in col.iter().enumerate() {
                    m[(i, j)] = *z;
                }
            }
            Ok(TruncatedOperator {
                domain: BasisRef::Single(domain.clone()),
                codomain: BasisRef::Tensor(b1.clone(), b2.clone()),
                entries: OpEntries::Dense(m),
            })
        }
    }
}

/// Γ(π) between a basis and its own tensor square. Split windows are pinned
/// to the basis mode window: modes outside it cannot create cutoff-respecting
/// states, so nothing beyond the intrinsic p_M loss is discarded.
pub fn split_gamma(spec: SplitSpec, basis: &Arc<FockBasis>) -> Result<TruncatedOperator> {
    let k = basis.mode_window;
    let m = l2_split_matrix(spec, k, k)?;
    second_quantize(
        &SingleParticle::Split(m),
        basis,
        &GammaCodomain::Tensor(basis.clone(), basis.clone()),
    )
}

/// Heat-smoothed splitting family
/// Θ̂ = (e^{-α1 H_{ℓ1,m1}} ⊗ e^{-α2 H_{ℓ2,m2}}) ∘ Γ(π_ℓ^{ℓ1,ℓ2}) ∘ e^{-α3 H_{ℓ,m3}}.
///
/// The heat factors are diagonal on the truncated bases, so they are applied
/// as row/column scalings of Γ(π); this agrees exactly with lifting the
/// heat-sandwiched single-particle map (see tests).
pub fn smoothed_family(
    alphas: [f64; 3],
    masses: [f64; 3],
    spec: SplitSpec,
    basis: &Arc<FockBasis>,
) -> Result<TruncatedOperator> {
    for a in alphas {
        if a <= 0.0 || !a.is_finite() {
            return Err(Error::domain(format!(
                "smoothing exponents must be > 0, got {a}"
            )));
        }
    }
    for m in masses {
        if m <= 0.0 || !m.is_finite() {
            return Err(Error::domain(format!("masses must be > 0, got {m}")));
        }
    }
    let gamma = split_gamma(spec, basis)?;
    smooth_operator(gamma, alphas, masses, spec, basis)
}

/// Apply the three diagonal heat factors around an existing Γ(π).
pub fn smooth_operator(
    gamma: TruncatedOperator,
    alphas: [f64; 3],
    masses: [f64; 3],
    spec: SplitSpec,
    basis: &Arc<FockBasis>,
) -> Result<TruncatedOperator> {
    let e1 = basis.energies(spec.ell1, masses[0])?;
    let e2 = basis.energies(spec.ell2, masses[1])?;
    let e3 = basis.energies(spec.ell, masses[2])?;
    let dim = basis.dim();
    let mut mat = match gamma.entries {
        OpEntries::Dense(m) => m,
        _ => return Err(Error::usage("expected a dense Γ(π)")),
    };
    let row_diag: Vec<Complex64> = (0..dim * dim)
        .map(|t| {
            let (i1, i2) = (t / dim, t % dim);
            Complex64::new((-alphas[0] * e1[i1] - alphas[1] * e2[i2]).exp(), 0.0)
        })
        .collect();
    let col_diag: Vec<Complex64> = (0..dim)
        .map(|s| Complex64::new((-alphas[2] * e3[s]).exp(), 0.0))
        .collect();
    mat.scale_rows(&row_diag);
    mat.scale_cols(&col_diag);
    Ok(TruncatedOperator {
        domain: gamma.domain,
        codomain: gamma.codomain,
        entries: OpEntries::Dense(mat),
    })
}

// ---------------------------------------------------------------------------
// Binary operator container: 8-byte magic, u64 LE header length, JSON header,
// then row-major little-endian (re, im) f64 pairs.
// ---------------------------------------------------------------------------

const OPERATOR_MAGIC: &[u8; 8] = b"SFTOP01\0";

#[derive(Serialize, Deserialize)]
struct OperatorHeader {
    domain: BasisDescriptor,
    codomain: BasisDescriptor,
    nrows: usize,
    ncols: usize,
    spec: Option<SplitSpec>,
    k_window: i32,
}

#[derive(Serialize, Deserialize)]
struct BasisDescriptor {
    d: u8,
    m: f64,
    l0: f64,
    cutoff: f64,
    tensor: bool,
}

fn describe(b: &BasisRef) -> BasisDescriptor {
    match b {
        BasisRef::Single(x) => BasisDescriptor {
            d: x.params.d,
            m: x.params.m,
            l0: x.params.l0,
            cutoff: x.params.cutoff,
            tensor: false,
        },
        BasisRef::Tensor(x, _) => BasisDescriptor {
            d: x.params.d,
            m: x.params.m,
            l0: x.params.l0,
            cutoff: x.params.cutoff,
            tensor: true,
        },
    }
}

/// Write an operator (with optional split metadata) to the binary container.
pub fn save_operator(
    op: &TruncatedOperator,
    spec: Option<SplitSpec>,
    k_window: i32,
    w: &mut dyn Write,
) -> Result<()> {
    let m = op.to_dense();
    let header = OperatorHeader {
        domain: describe(&op.domain),
        codomain: describe(&op.codomain),
        nrows: m.nrows,
        ncols: m.ncols,
        spec,
        k_window,
    };
    let hj = serde_json::to_vec(&header).map_err(|e| Error::usage(e.to_string()))?;
    let io = |e: std::io::Error| Error::usage(format!("operator write failed: {e}"));
    w.write_all(OPERATOR_MAGIC).map_err(io)?;
    w.write_all(&(hj.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&hj).map_err(io)?;
    for z in &m.data {
        w.write_all(&z.re.to_le_bytes()).map_err(io)?;
        w.write_all(&z.im.to_le_bytes()).map_err(io)?;
    }
    Ok(())
}

/// Read an operator back; bases are re-enumerated from the header.
pub fn load_operator(r: &mut dyn Read) -> Result<(TruncatedOperator, Option<SplitSpec>, i32)> {
    let io = |e: std::io::Error| Error::usage(format!("operator read failed: {e}"));
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != OPERATOR_MAGIC {
        return Err(Error::usage("bad operator container magic"));
    }
    let mut len8 = [0u8; 8];
    r.read_exact(&mut len8).map_err(io)?;
    let hlen = u64::from_le_bytes(len8) as usize;
    let mut hj = vec![0u8; hlen];
    r.read_exact(&mut hj).map_err(io)?;
    let header: OperatorHeader =
        serde_json::from_slice(&hj).map_err(|e| Error::usage(e.to_string()))?;
    let rebuild = |d: &BasisDescriptor| {
        crate::fock::enumerate_basis(d.d, d.m, d.l0, d.cutoff, crate::fock::DEFAULT_BASIS_CAPACITY)
    };
    let dom = rebuild(&header.domain)?;
    let cod = rebuild(&header.codomain)?;
    let mut m = CMat::zeros(header.nrows, header.ncols);
    let mut buf = [0u8; 16];
    for i in 0..header.nrows * header.ncols {
        r.read_exact(&mut buf).map_err(io)?;
        m.data[i] = Complex64::new(
            f64::from_le_bytes(buf[0..8].try_into().unwrap()),
            f64::from_le_bytes(buf[8..16].try_into().unwrap()),
        );
    }
    let domain = if header.domain.tensor {
        BasisRef::Tensor(dom.clone(), dom)
    } else {
        BasisRef::Single(dom)
    };
    let codomain = if header.codomain.tensor {
        BasisRef::Tensor(cod.clone(), cod)
    } else {
        BasisRef::Single(cod)
    };
    if domain.dim() != header.ncols || codomain.dim() != header.nrows {
        return Err(Error::usage(
            "operator container dimensions disagree with bases",
        ));
    }
    Ok((
        TruncatedOperator {
            domain,
            codomain,
            entries: OpEntries::Dense(m),
        },
        header.spec,
        header.k_window,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{enumerate_basis, DEFAULT_BASIS_CAPACITY};
    use crate::util::quad::adaptive_simpson;

    fn basis_m25() -> Arc<FockBasis> {
        enumerate_basis(1, 1.0, 1.0, 2.5, DEFAULT_BASIS_CAPACITY).unwrap()
    }

    #[test]
    fn entry_examples() {
        let spec = SplitSpec::new(1.0, 1.0, 4.0).unwrap();
        let m = l2_split_matrix(spec, 2, 2).unwrap();
        // constant integrand: √(ℓ1/ℓ) = 0.5
        assert!((m.block1[(2, 2)] - Complex64::new(0.5, 0.0)).norm() < 1e-14);

        // identity-like split ℓ1 → ℓ: unitary first block with orthogonality
        // of distinct Fourier modes
        let spec = SplitSpec::new(4.0 * (1.0 - 1e-10), 2e-10, 4.0).unwrap();
        let m = l2_split_matrix(spec, 2, 2).unwrap();
        // p=1 column, q=0 row
        assert!(m.block1[(2, 3)].norm() < 1e-9);
        assert!((m.block1[(3, 3)].norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn entries_match_quadrature() {
        let spec = SplitSpec::new(0.7, 1.1, 2.3).unwrap();
        let m = l2_split_matrix(spec, 3, 3).unwrap();
        let r1 = spec.ell1 / spec.ell;
        let r2 = spec.ell2 / spec.ell;
        let s0 = (spec.ell - spec.ell2) / spec.ell;
        for (q, p) in [(0i32, 0i32), (1, -2), (-3, 3), (2, 1)] {
            let re1 = adaptive_simpson(
                &|x: f64| r1.sqrt() * (TAU * (p as f64 * r1 - q as f64) * x).cos(),
                0.0,
                1.0,
                1e-12,
                50,
            )
            .unwrap();
            let im1 = adaptive_simpson(
                &|x: f64| r1.sqrt() * (TAU * (p as f64 * r1 - q as f64) * x).sin(),
                0.0,
                1.0,
                1e-12,
                50,
            )
            .unwrap();
            let got = m.block1[((q + 3) as usize, (p + 3) as usize)];
            assert!((got - Complex64::new(re1, im1)).norm() < 1e-10);

            let re2 = adaptive_simpson(
                &|x: f64| {
                    r2.sqrt() * (TAU * (p as f64 * (s0 + r2 * x)) - TAU * q as f64 * x).cos()
                },
                0.0,
                1.0,
                1e-12,
                50,
            )
            .unwrap();
            let im2 = adaptive_simpson(
                &|x: f64| {
                    r2.sqrt() * (TAU * (p as f64 * (s0 + r2 * x)) - TAU * q as f64 * x).sin()
                },
                0.0,
                1.0,
                1e-12,
                50,
            )
            .unwrap();
            let got = m.block2[((q + 3) as usize, (p + 3) as usize)];
            assert!((got - Complex64::new(re2, im2)).norm() < 1e-10);
        }
    }

    #[test]
    fn contraction_norms() {
        for (l1, l2, l, k) in [
            (1.0, 1.0, 2.0, 8),
            (0.5, 0.7, 2.0, 8),
            (1.0, 1.0, 2.0, 32),
            (0.3, 0.3, 0.61, 16),
        ] {
            let m = l2_split_matrix(SplitSpec::new(l1, l2, l).unwrap(), k, k).unwrap();
            let n = m.stacked().op_norm();
            assert!(n <= 1.0 + 1e-9, "σ_max = {n} at ({l1},{l2},{l})");
        }
    }

    #[test]
    fn boundary_coisometry_oracle() {
        // ℓ1 + ℓ2 = ℓ: π π* = identity on the target window, closed form
        let spec = SplitSpec::new(1.0, 1.0, 2.0).unwrap();
        let g = pi_star_gram(spec, 32).unwrap();
        let n = g.nrows;
        let mut max_dev: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { 1.0 } else { 0.0 };
                max_dev = max_dev.max((g[(i, j)] - Complex64::new(expect, 0.0)).norm());
            }
        }
        assert!(max_dev < 1e-8, "coisometry defect {max_dev:e}");

        // strict split: still a coisometry (disjoint supports)
        let spec = SplitSpec::new(0.5, 0.6, 2.0).unwrap();
        let g = pi_star_gram(spec, 8).unwrap();
        for i in 0..g.nrows {
            for j in 0..g.ncols {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - Complex64::new(expect, 0.0)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn truncated_adjoint_defect_shrinks_with_domain_window() {
        // the naive route: rows of A A† approach the identity only like
        // 1/K_domain (Fourier tail of the indicator images); the closed form
        // above is the oracle and this is the trend check
        let spec = SplitSpec::new(1.0, 1.0, 2.0).unwrap();
        let defect = |kd: i32| -> f64 {
            let m = l2_split_matrix(spec, kd, 2).unwrap();
            let a = m.stacked();
            let g = a.matmul(&a.adjoint());
            let mut dev: f64 = 0.0;
            for i in 0..g.nrows {
                for j in 0..g.ncols {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    dev = dev.max((g[(i, j)] - Complex64::new(expect, 0.0)).norm());
                }
            }
            dev
        };
        let d1 = defect(64);
        let d2 = defect(256);
        assert!(d2 < d1 * 0.5, "defect did not shrink: {d1:e} → {d2:e}");
    }

    #[test]
    fn gamma_identity_and_scalar() {
        let b = basis_m25();
        let id = SingleParticle::Square {
            k_window: b.mode_window,
            mat: CMat::identity((2 * b.mode_window + 1) as usize),
        };
        let g = second_quantize(&id, &b, &GammaCodomain::Single(b.clone()))
            .unwrap()
            .to_dense();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - Complex64::new(expect, 0.0)).norm() < 1e-13);
            }
        }

        let c = 0.6;
        let scal = SingleParticle::Square {
            k_window: b.mode_window,
            mat: CMat::from_diag(&[Complex64::new(c, 0.0)]),
        };
        let g = second_quantize(&scal, &b, &GammaCodomain::Single(b.clone()))
            .unwrap()
            .to_dense();
        for (i, expect) in [1.0, c, c * c].into_iter().enumerate() {
            assert!((g[(i, i)] - Complex64::new(expect, 0.0)).norm() < 1e-13);
        }
    }

    #[test]
    fn gamma_rejects_expansions() {
        let b = basis_m25();
        let bad = SingleParticle::Square {
            k_window: b.mode_window,
            mat: CMat::from_diag(&[Complex64::new(1.1, 0.0)]),
        };
        assert!(matches!(
            second_quantize(&bad, &b, &GammaCodomain::Single(b.clone())),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn gamma_split_vacuum_and_binomial() {
        let b = basis_m25();
        for spec in [
            SplitSpec::new(1.0, 1.0, 2.0).unwrap(),
            SplitSpec::new(0.4, 0.9, 2.0).unwrap(),
        ] {
            let g = split_gamma(spec, &b).unwrap().to_dense();
            // ⟨Ω⊗Ω| Γ(π) |Ω⟩ = 1
            assert!((g[(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-14);

            // K = 0 window: explicit binomial amplitudes
            let a = (spec.ell1 / spec.ell).sqrt();
            let c = (spec.ell2 / spec.ell).sqrt();
            let dim = b.dim();
            for n in 1..=2usize {
                let col = n; // states are Ω, |1⟩, |2⟩
                for j in 0..=n {
                    let row = j * dim + (n - j);
                    let binom: f64 = match (n, j) {
                        (1, _) => 1.0,
                        (2, 1) => 2.0,
                        (2, _) => 1.0,
                        _ => unreachable!(),
                    };
                    let expect = binom.sqrt() * a.powi(j as i32) * c.powi((n - j) as i32);
                    assert!(
                        (g[(row, col)] - Complex64::new(expect, 0.0)).norm() < 1e-12,
                        "n={n} j={j}"
                    );
                }
            }
        }
    }

    #[test]
    fn gamma_contraction_property() {
        let b = enumerate_basis(1, 1.0, 1.0, 7.0, DEFAULT_BASIS_CAPACITY).unwrap();
        let spec = SplitSpec::new(1.0, 0.8, 2.0).unwrap();
        let g = split_gamma(spec, &b).unwrap();
        let mut rng = crate::util::rng::GaussianSource::new(11);
        for _ in 0..20 {
            let v: Vec<Complex64> = (0..b.dim()).map(|_| rng.standard_complex()).collect();
            let nv = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let w = g.apply(&v);
            let nw = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            assert!(nw <= nv * (1.0 + 1e-9), "‖Γv‖ = {nw} > ‖v‖ = {nv}");
        }
    }

    #[test]
    fn gamma_multiplicative_on_protected_states() {
        // diagonal mode contractions lose no weight, so Γ(AB) = Γ(A)Γ(B)
        let b = enumerate_basis(2, 1.0, 1.0, 3.5, DEFAULT_BASIS_CAPACITY).unwrap();
        let k = b.mode_window;
        let n = (2 * k + 1) as usize;
        let mk_diag = |vals: &[Complex64]| SingleParticle::Square {
            k_window: k,
            mat: CMat::from_diag(vals),
        };
        let da: Vec<Complex64> = (0..n)
            .map(|i| Complex64::from_polar(0.9 - 0.1 * i as f64, 0.3 * i as f64))
            .collect();
        let db: Vec<Complex64> = (0..n)
            .map(|i| Complex64::from_polar(0.8, -0.2 * i as f64))
            .collect();
        let dab: Vec<Complex64> = da.iter().zip(&db).map(|(x, y)| x * y).collect();
        let ga = second_quantize(&mk_diag(&da), &b, &GammaCodomain::Single(b.clone()))
            .unwrap()
            .to_dense();
        let gb = second_quantize(&mk_diag(&db), &b, &GammaCodomain::Single(b.clone()))
            .unwrap()
            .to_dense();
        let gab = second_quantize(&mk_diag(&dab), &b, &GammaCodomain::Single(b.clone()))
            .unwrap()
            .to_dense();
        let prod = ga.matmul(&gb);
        for i in 0..b.dim() {
            for j in 0..b.dim() {
                assert!((prod[(i, j)] - gab[(i, j)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn smoothed_family_routes_agree() {
        // Fock-side diagonal sandwich vs single-particle-side sandwich
        let b = enumerate_basis(1, 1.0, 1.0, 7.0, DEFAULT_BASIS_CAPACITY).unwrap();
        let spec = SplitSpec::new(1.0, 0.9, 2.1).unwrap();
        let alphas = [0.13, 0.21, 0.34];
        let masses = [1.0, 1.2, 0.8];
        let theta = smoothed_family(alphas, masses, spec, &b).unwrap().to_dense();

        let k = b.mode_window;
        let split = l2_split_matrix(spec, k, k).unwrap();
        let heat = |ell: f64, m: f64, a: f64| -> Vec<Complex64> {
            (-k..=k)
                .map(|q| {
                    Complex64::new((-a * crate::fock::omega(q, ell, m).unwrap()).exp(), 0.0)
                })
                .collect()
        };
        let h1 = heat(spec.ell1, masses[0], alphas[0]);
        let h2 = heat(spec.ell2, masses[1], alphas[1]);
        let h3 = heat(spec.ell, masses[2], alphas[2]);
        let mut b1 = split.block1.clone();
        let mut b2 = split.block2.clone();
        b1.scale_rows(&h1);
        b2.scale_rows(&h2);
        b1.scale_cols(&h3);
        b2.scale_cols(&h3);
        let sandwiched = L2Matrix {
            spec,
            k_domain: k,
            k_target: k,
            block1: b1,
            block2: b2,
        };
        let lifted = second_quantize(
            &SingleParticle::Split(sandwiched),
            &b,
            &GammaCodomain::Tensor(b.clone(), b.clone()),
        )
        .unwrap()
        .to_dense();
        for i in 0..theta.nrows {
            for j in 0..theta.ncols {
                assert!(
                    (theta[(i, j)] - lifted[(i, j)]).norm() < 1e-12,
                    "({i},{j}): {} vs {}",
                    theta[(i, j)],
                    lifted[(i, j)]
                );
            }
        }
    }

    #[test]
    fn smoothed_family_limits_and_norm() {
        let b = basis_m25();
        let spec = SplitSpec::new(1.0, 1.0, 3.0).unwrap();
        let bare = split_gamma(spec, &b).unwrap().to_dense();
        let tiny = smoothed_family([1e-10; 3], [1.0; 3], spec, &b)
            .unwrap()
            .to_dense();
        let mut dev: f64 = 0.0;
        for i in 0..bare.data.len() {
            dev = dev.max((bare.data[i] - tiny.data[i]).norm());
        }
        assert!(dev < 1e-7, "α → 0 limit deviates by {dev:e}");

        for a in [0.05, 0.3, 2.0] {
            let th = smoothed_family([a; 3], [1.0; 3], spec, &b).unwrap().to_dense();
            assert!(th.op_norm() <= 1.0 + 1e-9);
        }
        assert!(matches!(
            smoothed_family([0.0, 0.1, 0.1], [1.0; 3], spec, &b),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn smoothed_family_differentiable_in_ell1() {
        // central differences at steps h, h/2, h/4 decay at second order
        let b = enumerate_basis(1, 1.0, 1.0, 7.0, DEFAULT_BASIS_CAPACITY).unwrap();
        let alphas = [0.1; 3];
        let masses = [1.0; 3];
        let f = |l1: f64| {
            smoothed_family(alphas, masses, SplitSpec::new(l1, 1.0, 3.0).unwrap(), &b)
                .unwrap()
                .to_dense()
        };
        let diff = |h: f64| {
            let a = f(1.0 + h);
            let c = f(1.0 - h);
            let mut out = a.clone();
            for i in 0..a.data.len() {
                out.data[i] = (a.data[i] - c.data[i]) / (2.0 * h);
            }
            out
        };
        let d1 = diff(0.02);
        let d2 = diff(0.01);
        let d3 = diff(0.005);
        let dev12 = d1
            .data
            .iter()
            .zip(&d2.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max);
        let dev23 = d2
            .data
            .iter()
            .zip(&d3.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max);
        assert!(
            dev23 < dev12 / 2.5,
            "no second-order decay: {dev12:e} → {dev23:e}"
        );
        assert!(d3.max_abs() > 1e-6 && d3.max_abs().is_finite());
    }

    #[test]
    fn lipschitz_constant_stable() {
        let b = basis_m25();
        let alphas = [0.2; 3];
        let masses = [1.0; 3];
        let lip = |n: usize| -> f64 {
            let mut max_ratio: f64 = 0.0;
            let mut prev: Option<CMat> = None;
            for i in 0..=n {
                let l1 = 0.7 + 0.3 * i as f64 / n as f64;
                let th =
                    smoothed_family(alphas, masses, SplitSpec::new(l1, 1.0, 3.0).unwrap(), &b)
                        .unwrap()
                        .to_dense();
                if let Some(p) = prev.replace(th.clone()) {
                    let step = 0.3 / n as f64;
                    let mut dev: f64 = 0.0;
                    for k in 0..p.data.len() {
                        dev = dev.max((p.data[k] - th.data[k]).norm());
                    }
                    max_ratio = max_ratio.max(dev / step);
                }
            }
            max_ratio
        };
        let coarse = lip(8);
        let fine = lip(16);
        assert!(coarse.is_finite() && fine.is_finite());
        assert!(fine < 2.0 * coarse + 1e-12 && coarse < 2.0 * fine + 1e-12);
    }

    #[test]
    fn operator_container_roundtrip() {
        let b = basis_m25();
        let spec = SplitSpec::new(1.0, 1.0, 2.5).unwrap();
        let op = split_gamma(spec, &b).unwrap();
        let mut buf = Vec::new();
        save_operator(&op, Some(spec), b.mode_window, &mut buf).unwrap();
        let (back, spec2, k) = load_operator(&mut buf.as_slice()).unwrap();
        assert_eq!(k, b.mode_window);
        assert_eq!(spec2.unwrap(), spec);
        let a = op.to_dense();
        let c = back.to_dense();
        assert_eq!(a.nrows, c.nrows);
        for i in 0..a.data.len() {
            assert_eq!(a.data[i], c.data[i]); // bit-exact
        }
    }
}
