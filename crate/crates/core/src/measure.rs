//! Sampling the cut-off free string field and checking its covariance.
//!
//! The free measure factorizes over Fock eigenvectors and length cells: for a
//! basis state of energy E(ℓ) the component is a stationary complex
//! Ornstein–Uhlenbeck path in t with
//! `E[Ψ̄(t) Ψ(t')] = e^{-E(ℓ)|t-t'|} / Δℓ` and `E[Ψ Ψ'] = 0`,
//! independent across cells and states (white noise in ℓ with cylinder-
//! measure 1/Δℓ scaling). The OU recursion is exact on the time grid: the
//! lattice autocorrelation carries no discretization error.
//!
//! Length quadrature uses cell midpoints; linear functionals of the field
//! are midpoint sums, so `Σ_i Δℓ = L∞ - L0` exactly.

use crate::error::{Error, Result};
use crate::fock::{enumerate_basis, FockBasis, DEFAULT_BASIS_CAPACITY};
use crate::util::quad::{adaptive_simpson, delta_kappa};
use crate::util::rng::{derive_stream, GaussianSource};
use crate::util::batch_means_stderr;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::io::Write;
use std::sync::Arc;

/// Grid and cutoff data of the sampled field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldParams {
    pub d: u8,
    pub m: f64,
    pub l0: f64,
    pub l_inf: f64,
    /// Fock energy cutoff M.
    pub cutoff: f64,
    /// Mollifier scale κ.
    pub kappa: f64,
    /// Time grid: n_t uniform nodes on [-t_half, t_half].
    pub t_half: f64,
    pub n_t: usize,
    /// Length grid: n_cells midpoint cells on [L0, L∞].
    pub n_cells: usize,
    pub seed: u64,
}

impl FieldParams {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::config("d must be ≥ 1"));
        }
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(Error::config(format!("m must be > 0, got {}", self.m)));
        }
        if !(self.l0 > 0.0 && self.l_inf > self.l0) {
            return Err(Error::config(format!(
                "need 0 < L0 < L∞, got L0 = {}, L∞ = {}",
                self.l0, self.l_inf
            )));
        }
        if self.cutoff < 0.0 {
            return Err(Error::config("cutoff M must be ≥ 0"));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::config(format!("κ must be > 0, got {}", self.kappa)));
        }
        if self.n_t < 2 {
            return Err(Error::config("time grid needs at least 2 nodes"));
        }
        if self.t_half <= 0.0 {
            return Err(Error::config("t_half must be > 0"));
        }
        if self.n_cells < 1 {
            return Err(Error::config("length grid needs at least 1 cell"));
        }
        let d_ell = self.d_ell();
        if d_ell >= 1.0 / (4.0 * self.kappa) {
            return Err(Error::config(format!(
                "mollifier unresolved: Δℓ = {d_ell} must be < 1/(4κ) = {}",
                1.0 / (4.0 * self.kappa)
            )));
        }
        Ok(())
    }

    pub fn d_ell(&self) -> f64 {
        (self.l_inf - self.l0) / self.n_cells as f64
    }

    pub fn dt(&self) -> f64 {
        2.0 * self.t_half / (self.n_t - 1) as f64
    }

    pub fn cell_center(&self, i: usize) -> f64 {
        self.l0 + (i as f64 + 0.5) * self.d_ell()
    }

    pub fn t_node(&self, i: usize) -> f64 {
        -self.t_half + i as f64 * self.dt()
    }
}

/// The normalized smooth bump rescaled to scale κ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MollifierSpec {
    pub kappa: f64,
}

impl MollifierSpec {
    pub fn new(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::config(format!("κ must be > 0, got {kappa}")));
        }
        Ok(MollifierSpec { kappa })
    }

    /// Discrete kernel taps δ_κ(r Δℓ)·Δℓ, renormalized to unit mass.
    pub fn kernel(&self, d_ell: f64) -> Vec<f64> {
        let r_max = (1.0 / (self.kappa * d_ell)).ceil() as i64;
        let mut taps: Vec<f64> = (-r_max..=r_max)
            .map(|r| delta_kappa(self.kappa, r as f64 * d_ell) * d_ell)
            .collect();
        let mass: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= mass);
        taps
    }
}

/// One draw of the cut-off string field on the (t, ℓ, Fock) lattice.
/// Layout: `data[(it * n_cells + ic) * dim + is]`.
#[derive(Clone, Debug)]
pub struct StringFieldSample {
    pub params: FieldParams,
    pub dim: usize,
    pub data: Vec<Complex64>,
    pub mollified: bool,
}

impl StringFieldSample {
    #[inline]
    pub fn at(&self, it: usize, ic: usize, is: usize) -> Complex64 {
        self.data[(it * self.params.n_cells + ic) * self.dim + is]
    }

    #[inline]
    pub fn at_mut(&mut self, it: usize, ic: usize, is: usize) -> &mut Complex64 {
        &mut self.data[(it * self.params.n_cells + ic) * self.dim + is]
    }

    /// Linear functional Φ_{v,g,t}(Ψ) = Σ_i Δℓ g(ℓ_i) ⟨Ψ(t,ℓ_i), v⟩ for a
    /// basis vector v (the Fock pairing conjugates the field slot).
    pub fn functional(&self, v: usize, g: &[f64], t_index: usize) -> Complex64 {
        let d_ell = self.params.d_ell();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..self.params.n_cells {
            acc += d_ell * g[i] * self.at(t_index, i, v).conj();
        }
        acc
    }

    /// Discrete convolution with δ_κ in the ℓ direction, zero-extended
    /// outside [L0, L∞].
    pub fn mollify(&self, spec: MollifierSpec) -> StringFieldSample {
        let taps = spec.kernel(self.params.d_ell());
        let r_max = (taps.len() as i64 - 1) / 2;
        let n_cells = self.params.n_cells;
        let dim = self.dim;
        let mut out = StringFieldSample {
            params: self.params,
            dim,
            data: vec![Complex64::new(0.0, 0.0); self.data.len()],
            mollified: true,
        };
        for it in 0..self.params.n_t {
            for ic in 0..n_cells {
                for (ti, &w) in taps.iter().enumerate() {
                    let r = ti as i64 - r_max;
                    let src = ic as i64 - r;
                    if src < 0 || src >= n_cells as i64 {
                        continue;
                    }
                    for is in 0..dim {
                        *out.at_mut(it, ic, is) += w * self.at(it, src as usize, is);
                    }
                }
            }
        }
        out
    }

    /// Zero every component outside the first `dim_keep` basis states
    /// (hard projection p_M onto a smaller cutoff: truncated bases sorted by
    /// energy are prefixes of one another).
    pub fn project(&self, dim_keep: usize) -> StringFieldSample {
        let mut out = self.clone();
        for it in 0..self.params.n_t {
            for ic in 0..self.params.n_cells {
                for is in dim_keep..self.dim {
                    *out.at_mut(it, ic, is) = Complex64::new(0.0, 0.0);
                }
            }
        }
        out
    }
}

/// Prepared sampler: basis, per-(state, cell) OU coefficients.
pub struct FieldSampler {
    pub params: FieldParams,
    pub basis: Arc<FockBasis>,
    /// e^{-E_s(ℓ_i) Δt}, state-major.
    rho: Vec<f64>,
    /// √((1 - ρ²)/Δℓ), state-major.
    sig: Vec<f64>,
    init_sig: f64,
}

impl FieldSampler {
    pub fn new(params: FieldParams) -> Result<Self> {
        params.validate()?;
        let basis = enumerate_basis(
            params.d,
            params.m,
            params.l0,
            params.cutoff,
            DEFAULT_BASIS_CAPACITY,
        )?;
        let dt = params.dt();
        let d_ell = params.d_ell();
        let dim = basis.dim();
        let mut rho = vec![0.0; dim * params.n_cells];
        let mut sig = vec![0.0; dim * params.n_cells];
        for ic in 0..params.n_cells {
            let energies = basis.energies(params.cell_center(ic), params.m)?;
            for (is, &e) in energies.iter().enumerate() {
                let r = (-e * dt).exp();
                rho[is * params.n_cells + ic] = r;
                sig[is * params.n_cells + ic] = ((1.0 - r * r) / d_ell).sqrt();
            }
        }
        Ok(FieldSampler {
            params,
            basis,
            rho,
            sig,
            init_sig: (1.0 / d_ell).sqrt(),
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Draw sample `index` of the master seed: raw (unmollified), exact
    /// stationary OU per (state, cell).
    pub fn sample(&self, index: u64) -> StringFieldSample {
        let p = &self.params;
        let dim = self.dim();
        let mut rng = GaussianSource::new(derive_stream(p.seed, index));
        let mut data = vec![Complex64::new(0.0, 0.0); p.n_t * p.n_cells * dim];
        for is in 0..dim {
            for ic in 0..p.n_cells {
                let rho = self.rho[is * p.n_cells + ic];
                let sig = self.sig[is * p.n_cells + ic];
                let mut x = self.init_sig * rng.standard_complex();
                data[ic * dim + is] = x;
                for it in 1..p.n_t {
                    x = rho * x + sig * rng.standard_complex();
                    data[(it * p.n_cells + ic) * dim + is] = x;
                }
            }
        }
        StringFieldSample {
            params: *p,
            dim,
            data,
            mollified: false,
        }
    }
}

/// Specification of one linear functional Φ_{v,g,t}.
#[derive(Clone, Debug)]
pub struct FunctionalSpec {
    pub v: usize,
    pub g: Vec<f64>,
    pub t_index: usize,
}

/// Monte-Carlo two-point function E[Φ̄ Φ'] with batch-means standard error.
pub fn two_point_estimate(
    sampler: &FieldSampler,
    n_samples: usize,
    a: &FunctionalSpec,
    b: &FunctionalSpec,
) -> Result<(Complex64, f64)> {
    if n_samples == 0 {
        return Err(Error::usage("two_point_estimate needs at least one sample"));
    }
    let n_cells = sampler.params.n_cells;
    if a.g.len() != n_cells || b.g.len() != n_cells {
        return Err(Error::usage("grid function length must equal n_cells"));
    }
    if a.v >= sampler.dim() || b.v >= sampler.dim() {
        return Err(Error::usage("basis index out of range"));
    }
    if a.t_index >= sampler.params.n_t || b.t_index >= sampler.params.n_t {
        return Err(Error::usage("time index out of range"));
    }
    use rayon::prelude::*;
    let vals: Vec<Complex64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let s = sampler.sample(i);
            s.functional(a.v, &a.g, a.t_index).conj() * s.functional(b.v, &b.g, b.t_index)
        })
        .collect();
    let mean = vals.iter().sum::<Complex64>() / n_samples as f64;
    let re: Vec<f64> = vals.iter().map(|z| z.re).collect();
    let im: Vec<f64> = vals.iter().map(|z| z.im).collect();
    let se = batch_means_stderr(&re, 30).max(batch_means_stderr(&im, 30));
    Ok((mean, se))
}

/// Exact expectation of the discrete estimator above:
/// Σ_i Δℓ ḡ(ℓ_i) g'(ℓ_i) e^{-E_v(ℓ_i)|t-t'|}, zero for v ≠ v'.
pub fn two_point_exact(
    sampler: &FieldSampler,
    a: &FunctionalSpec,
    b: &FunctionalSpec,
) -> Result<Complex64> {
    if a.v != b.v {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let p = &sampler.params;
    let dt = (a.t_index as f64 - b.t_index as f64).abs() * p.dt();
    let mut acc = 0.0;
    for i in 0..p.n_cells {
        let e = crate::fock::state_energy(&sampler.basis.states[a.v], p.cell_center(i), p.m)?;
        acc += p.d_ell() * a.g[i] * b.g[i] * (-e * dt).exp();
    }
    Ok(Complex64::new(acc, 0.0))
}

/// Fourier-side covariance identity: quadrature of
/// (1/2π) ∫ 2ω e^{ipτ} / (p² + ω²) dp against the closed form e^{-ω|τ|}.
/// Returns (numeric, analytic).
pub fn covariance_kernel_check(omega: f64, tau: f64) -> Result<(f64, f64)> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::domain(format!("ω must be > 0, got {omega}")));
    }
    let tau = tau.abs();
    let analytic = (-omega * tau).exp();
    let f = |p: f64| 2.0 * omega / (p * p + omega * omega);
    let numeric = if tau == 0.0 {
        let cut = 1e4 * omega;
        let head = adaptive_simpson(&f, 0.0, cut, 1e-11, 60)?;
        // exact tail: ∫_P^∞ 2ω/(p²+ω²) dp = 2(π/2 − atan(P/ω))
        let tail = 2.0 * (PI / 2.0 - (cut / omega).atan());
        (head + tail) / PI
    } else {
        // two integrations by parts bound the oscillatory tail by |f''|/τ²
        let cut = ((4.0 * omega / (tau * tau)) * 1e10).cbrt().max(50.0 / tau).max(20.0 * omega);
        let head = adaptive_simpson(&|p: f64| f(p) * (p * tau).cos(), 0.0, cut, 1e-11, 60)?;
        let fp = |p: f64| -4.0 * omega * p / (p * p + omega * omega).powi(2);
        let tail = -f(cut) * (cut * tau).sin() / tau - fp(cut) * (cut * tau).cos() / (tau * tau);
        (head + tail) / PI
    };
    Ok((numeric, analytic))
}

// ---------------------------------------------------------------------------
// Feynman–Kac in two dimensions: a Gaussian field on the cylinder S¹_ℓ × ℝ
// (periodized in time) with covariance (-Δ + m²)^{-1}, sampled by independent
// Fourier modes; its equal-structure pairing reproduces
// (1/2) ⟨f, e^{-|t-t'| A} / A f'⟩ with A = √(-(1/ℓ²) d²/dx² + m²).
// ---------------------------------------------------------------------------

/// Finite Fourier data on the unit circle with polarization labels.
#[derive(Clone, Debug)]
pub struct FourierModeFn {
    /// (mode k, pol 1..=d, coefficient)
    pub modes: Vec<(i32, u8, Complex64)>,
}

#[derive(Clone, Copy, Debug)]
pub struct Lattice2D {
    /// Spatial Fourier window: modes -k_x..=k_x.
    pub k_x: i32,
    /// Temporal Fourier window: modes -k_t..=k_t.
    pub k_t: i32,
    /// Total (periodic) time extent.
    pub t_extent: f64,
}

#[derive(Clone, Debug)]
pub struct FkResult {
    pub estimate: Complex64,
    pub stderr: f64,
    /// Exact expectation on the finite lattice.
    pub lattice: Complex64,
    /// Continuum right-hand side (1/2)⟨f, e^{-|Δt|A}/A f'⟩.
    pub continuum: Complex64,
}

pub fn feynman_kac_2d(
    ell: f64,
    m: f64,
    d: u8,
    f1: &FourierModeFn,
    f2: &FourierModeFn,
    t1: f64,
    t2: f64,
    lat: Lattice2D,
    n_samples: usize,
    seed: u64,
) -> Result<FkResult> {
    if !(ell > 0.0 && m > 0.0) {
        return Err(Error::domain("feynman_kac_2d needs ℓ > 0 and m > 0"));
    }
    if lat.k_x < 1 || lat.k_t < 1 || lat.t_extent <= 0.0 {
        return Err(Error::config("lattice windows must be positive"));
    }
    let k_need = f1
        .modes
        .iter()
        .chain(&f2.modes)
        .map(|&(k, _, _)| k.abs())
        .max()
        .unwrap_or(0);
    if k_need > lat.k_x {
        return Err(Error::config(format!(
            "lattice too coarse: spatial window {} < requested mode {k_need}",
            lat.k_x
        )));
    }
    if m * lat.t_extent < 8.0 {
        return Err(Error::config(format!(
            "time window too short: m·T = {} < 8 leaves visible periodization bias",
            m * lat.t_extent
        )));
    }
    for &(_, pol, _) in f1.modes.iter().chain(&f2.modes) {
        if pol == 0 || pol > d {
            return Err(Error::config("polarization out of range"));
        }
    }

    let volume = ell * lat.t_extent;

    // variance σ²(kx, kt) = 1/(p² + m²) with p = (2πkx/ℓ, 2πkt/T)
    let sigma2 = |kx: i32, kt: i32| {
        let px = TAU * kx as f64 / ell;
        let pt = TAU * kt as f64 / lat.t_extent;
        1.0 / (px * px + pt * pt + m * m)
    };

    // Φ_{f,t} = √(ℓ/V) Σ_j c_j Σ_{kt} a_{(-k_j, kt), pol_j} e^{2πi kt t / T}
    // Sampling keeps only the mode amplitudes the functionals read, with the
    // reality constraint a_{-p} = conj(a_p) enforced pairwise.
    // Collect the needed (kx, pol) lines: every (−k_j, pol_j) and conjugates.
    let mut lines: Vec<(i32, u8)> = f1
        .modes
        .iter()
        .chain(&f2.modes)
        .flat_map(|&(k, pol, _)| [(-k, pol), (k, pol)])
        .collect();
    lines.sort_unstable();
    lines.dedup();

    use rayon::prelude::*;
    let phi_pair: Vec<Complex64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|idx| {
            let mut rng = GaussianSource::new(derive_stream(seed, idx));
            // draw amplitudes line by line in deterministic order
            let mut amp: std::collections::HashMap<(i32, u8, i32), Complex64> =
                std::collections::HashMap::new();
            for &(kx, pol) in &lines {
                for kt in -lat.k_t..=lat.k_t {
                    if amp.contains_key(&(kx, pol, kt)) {
                        continue;
                    }
                    let s2 = sigma2(kx, kt);
                    if kx == 0 && kt == 0 {
                        let a = Complex64::new(rng.standard_normal() * s2.sqrt(), 0.0);
                        amp.insert((0, pol, 0), a);
                    } else {
                        let a = rng.standard_complex() * s2.sqrt();
                        amp.insert((kx, pol, kt), a);
                        amp.insert((-kx, pol, -kt), a.conj());
                    }
                }
            }
            let phi = |f: &FourierModeFn, t: f64| -> Complex64 {
                let mut acc = Complex64::new(0.0, 0.0);
                for &(k, pol, c) in &f.modes {
                    for kt in -lat.k_t..=lat.k_t {
                        let a = amp[&(-k, pol, kt)];
                        let ph = Complex64::from_polar(1.0, TAU * kt as f64 * t / lat.t_extent);
                        acc += c * a * ph;
                    }
                }
                (ell / volume).sqrt() * acc
            };
            phi(f1, t1).conj() * phi(f2, t2)
        })
        .collect();

    let estimate = phi_pair.iter().sum::<Complex64>() / n_samples as f64;
    let re: Vec<f64> = phi_pair.iter().map(|z| z.re).collect();
    let im: Vec<f64> = phi_pair.iter().map(|z| z.im).collect();
    let stderr = batch_means_stderr(&re, 30).max(batch_means_stderr(&im, 30));

    // exact lattice expectation and the continuum limit
    let mut lattice = Complex64::new(0.0, 0.0);
    let mut continuum = Complex64::new(0.0, 0.0);
    for &(k1, pol1, c1) in &f1.modes {
        for &(k2, pol2, c2) in &f2.modes {
            if k1 != k2 || pol1 != pol2 {
                continue; // distinct modes are independent
            }
            let mut kt_sum = Complex64::new(0.0, 0.0);
            for kt in -lat.k_t..=lat.k_t {
                let ph = Complex64::from_polar(1.0, TAU * kt as f64 * (t2 - t1) / lat.t_extent);
                kt_sum += sigma2(-k1, kt) * ph;
            }
            lattice += c1.conj() * c2 * (ell / volume) * kt_sum;
            let a = (TAU * k1 as f64 / ell).hypot(m);
            continuum += c1.conj() * c2 * 0.5 * (-a * (t2 - t1).abs()).exp() / a;
        }
    }
    Ok(FkResult {
        estimate,
        stderr,
        lattice,
        continuum,
    })
}

// ---------------------------------------------------------------------------
// Chunked sample container: JSON manifest plus raw little-endian blocks.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
pub struct SampleManifest {
    pub params: FieldParams,
    pub dim: usize,
    pub n_samples: usize,
    pub mollified: bool,
    pub bytes_per_sample: usize,
}

/// Append one sample to a binary stream; pair with a [`SampleManifest`].
pub fn write_sample_block(w: &mut dyn Write, s: &StringFieldSample) -> Result<()> {
    let io = |e: std::io::Error| Error::usage(format!("sample write failed: {e}"));
    for z in &s.data {
        w.write_all(&z.re.to_le_bytes()).map_err(io)?;
        w.write_all(&z.im.to_le_bytes()).map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_params() -> FieldParams {
        FieldParams {
            d: 1,
            m: 1.0,
            l0: 1.0,
            l_inf: 2.0,
            cutoff: 2.5,
            kappa: 6.0,
            t_half: 1.0,
            n_t: 9,
            n_cells: 25,
            seed: 2024,
        }
    }

    #[test]
    fn determinism() {
        let s = FieldSampler::new(small_params()).unwrap();
        let a = s.sample(7);
        let b = s.sample(7);
        assert_eq!(a.data.len(), b.data.len());
        for i in 0..a.data.len() {
            assert_eq!(a.data[i].re.to_bits(), b.data[i].re.to_bits());
            assert_eq!(a.data[i].im.to_bits(), b.data[i].im.to_bits());
        }
        let c = s.sample(8);
        assert_ne!(a.data[0], c.data[0]);
    }

    #[test]
    fn equal_time_cell_variance() {
        // E[|Ψ|²]·Δℓ = 1 per (state, cell)
        let sampler = FieldSampler::new(small_params()).unwrap();
        let n = 6000;
        let mut acc = vec![0.0; 2];
        for i in 0..n {
            let s = sampler.sample(i);
            acc[0] += s.at(3, 10, 0).norm_sqr();
            acc[1] += s.at(3, 10, 1).norm_sqr();
        }
        let d_ell = sampler.params.d_ell();
        for a in acc {
            let v = a / n as f64 * d_ell;
            assert!((v - 1.0).abs() < 0.06, "normalized variance {v}");
        }
    }

    #[test]
    fn no_conjugate_pairing_and_cross_cell_independence() {
        let sampler = FieldSampler::new(small_params()).unwrap();
        let n = 8000;
        let mut sq = Complex64::new(0.0, 0.0);
        let mut cross = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let s = sampler.sample(i);
            let z = s.at(2, 4, 1);
            sq += z * z;
            cross += z.conj() * s.at(2, 5, 1);
        }
        let d_ell = sampler.params.d_ell();
        assert!((sq / n as f64).norm() * d_ell < 0.06);
        assert!((cross / n as f64).norm() * d_ell < 0.06);
    }

    #[test]
    fn ou_lag_autocorrelation_exact() {
        let sampler = FieldSampler::new(small_params()).unwrap();
        let p = sampler.params;
        let n = 20_000u64;
        // state 1 (one k=0 particle): E = m = 1 at every ℓ
        let mut lag = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let s = sampler.sample(i);
            lag += s.at(4, 7, 1).conj() * s.at(5, 7, 1);
        }
        let got = (lag / n as f64).re * p.d_ell();
        let expect = (-p.dt()).exp();
        // 3σ with σ ≈ 1/√n for the normalized product
        assert!(
            (got - expect).abs() < 3.5 / (n as f64).sqrt() + 0.01,
            "lag-1 autocorrelation {got} vs {expect}"
        );
    }

    #[test]
    fn two_point_examples() {
        // g = g' ≡ 1 on [1,2], v = v' = one-particle k=0 state, Δt = 1
        let mut p = small_params();
        p.n_t = 9;
        p.t_half = 1.0; // Δt grid step 0.25; indices 0 and 8 give |Δt| = 2
        let sampler = FieldSampler::new(p).unwrap();
        let g = vec![1.0; p.n_cells];
        let a = FunctionalSpec {
            v: 1,
            g: g.clone(),
            t_index: 0,
        };
        let b = FunctionalSpec {
            v: 1,
            g: g.clone(),
            t_index: 4,
        }; // Δt = 1
        let (est, se) = two_point_estimate(&sampler, 12_000, &a, &b).unwrap();
        let exact = two_point_exact(&sampler, &a, &b).unwrap();
        // the one-particle k=0 energy is ℓ-independent, so the discrete
        // expectation equals the continuum integral e^{-1} exactly
        assert!((exact.re - (-1.0f64).exp()).abs() < 1e-12);
        assert!(
            (est - exact).norm() < 3.0 * se.max(1e-4),
            "est {est} vs exact {exact} (se {se})"
        );

        // orthogonal states → 0
        let c = FunctionalSpec {
            v: 0,
            g: g.clone(),
            t_index: 4,
        };
        let (est0, se0) = two_point_estimate(&sampler, 12_000, &a, &c).unwrap();
        assert!(est0.norm() < 3.0 * se0.max(1e-4));

        // equal times, g ≡ 1: L∞ - L0 exactly in expectation
        let (est1, se1) = two_point_estimate(&sampler, 12_000, &a, &a).unwrap();
        assert!((est1.re - (p.l_inf - p.l0)).abs() < 3.0 * se1.max(1e-4));

        assert!(matches!(
            two_point_estimate(&sampler, 0, &a, &b),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn gaussian_fourth_moment() {
        // complex Wick: E|Φ|⁴ = 2 (E|Φ|²)²
        let sampler = FieldSampler::new(small_params()).unwrap();
        let g = vec![1.0; sampler.params.n_cells];
        let spec = FunctionalSpec {
            v: 1,
            g,
            t_index: 2,
        };
        let n = 20_000u64;
        let (mut m2, mut m4) = (0.0, 0.0);
        for i in 0..n {
            let s = sampler.sample(i);
            let z = s.functional(spec.v, &spec.g, spec.t_index);
            m2 += z.norm_sqr();
            m4 += z.norm_sqr() * z.norm_sqr();
        }
        m2 /= n as f64;
        m4 /= n as f64;
        let ratio = m4 / (m2 * m2);
        assert!((ratio - 2.0).abs() < 0.15, "kurtosis ratio {ratio}");
    }

    #[test]
    fn mollifier_kernel_mass_and_constant_input() {
        let p = small_params();
        let spec = MollifierSpec::new(p.kappa).unwrap();
        let taps = spec.kernel(p.d_ell());
        let mass: f64 = taps.iter().sum();
        assert!((mass - 1.0).abs() < 1e-12);
        assert!(taps.len() >= 9); // resolved: at least 4 cells per side

        // constant deterministic field: unchanged away from the boundary layer
        let sampler = FieldSampler::new(p).unwrap();
        let mut s = sampler.sample(0);
        for z in s.data.iter_mut() {
            *z = Complex64::new(1.0, 0.0);
        }
        let sm = s.mollify(spec);
        let r = (taps.len() - 1) / 2;
        for ic in r..p.n_cells - r {
            assert!((sm.at(0, ic, 0) - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
        // boundary layer of width ~1/κ loses mass by zero-extension
        assert!(sm.at(0, 0, 0).re < 1.0 - 1e-3);
    }

    #[test]
    fn mollified_variance_matches_discrete_convolution() {
        let p = small_params();
        let spec = MollifierSpec::new(p.kappa).unwrap();
        let taps = spec.kernel(p.d_ell());
        let sampler = FieldSampler::new(p).unwrap();
        let n = 8000u64;
        let ic = p.n_cells / 2;
        let mut acc = 0.0;
        for i in 0..n {
            let s = sampler.sample(i).mollify(spec);
            acc += s.at(0, ic, 0).norm_sqr();
        }
        let got = acc / n as f64;
        // vacuum component is t-constant with variance 1/Δℓ per raw cell
        let expect: f64 = taps.iter().map(|t| t * t).sum::<f64>() / p.d_ell();
        assert!(
            (got - expect).abs() < 3.0 * expect / (n as f64 / 2.0).sqrt() + 0.01 * expect,
            "variance {got} vs {expect}"
        );
        // and the discrete value approaches ‖δ_κ‖₂² = κ‖χ‖₂²
        let l2: f64 = adaptive_simpson(
            &|x| delta_kappa(p.kappa, x) * delta_kappa(p.kappa, x),
            -1.0 / p.kappa,
            1.0 / p.kappa,
            1e-10,
            50,
        )
        .unwrap();
        assert!((expect - l2).abs() < 0.05 * l2);
    }

    #[test]
    fn mollification_commutes_with_two_point() {
        // E[conj(Φ^κ) Φ^κ] = δ_κ ⋆ δ_κ smeared kernel (discrete form)
        let p = small_params();
        let spec = MollifierSpec::new(p.kappa).unwrap();
        let taps = spec.kernel(p.d_ell());
        let r = (taps.len() as i64 - 1) / 2;
        let sampler = FieldSampler::new(p).unwrap();
        let (i_c, j_c, is, it, jt) = (10usize, 12usize, 1usize, 2usize, 6usize);
        let n = 20_000u64;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let s = sampler.sample(i).mollify(spec);
            acc += s.at(it, i_c, is).conj() * s.at(jt, j_c, is);
        }
        let got = acc / n as f64;
        let dt = (jt as f64 - it as f64) * p.dt();
        let mut expect = 0.0;
        for rr in -r..=r {
            let src_i = i_c as i64 - rr;
            // kernel tap indexed from the source cell for both ends
            let off_j = j_c as i64 - src_i;
            if src_i < 0 || src_i >= p.n_cells as i64 || off_j.abs() > r {
                continue;
            }
            let e = crate::fock::state_energy(
                &sampler.basis.states[is],
                p.cell_center(src_i as usize),
                p.m,
            )
            .unwrap();
            expect += taps[(rr + r) as usize] * taps[(off_j + r) as usize] / p.d_ell()
                * (-e * dt).exp();
        }
        let se = 1.2 * expect.max(0.02) / (n as f64).sqrt() * 30.0;
        assert!(
            (got.re - expect).abs() < se.max(0.015) && got.im.abs() < se.max(0.015),
            "got {got}, expect {expect}"
        );
    }

    #[test]
    fn covariance_kernel_examples() {
        let (n, a) = covariance_kernel_check(1.0, 0.0).unwrap();
        assert!((a - 1.0).abs() < 1e-15);
        assert!((n - a).abs() < 1e-8, "τ=0: {n} vs {a}");
        let (n, a) = covariance_kernel_check(1.0, 1.0).unwrap();
        assert!((a - (-1.0f64).exp()).abs() < 1e-15);
        assert!((n - a).abs() < 1e-8, "τ=1: {n} vs {a}");
        let (n2, a2) = covariance_kernel_check(2.0, 0.5).unwrap();
        assert!((a2 - a).abs() < 1e-15); // ωτ invariance
        assert!((n2 - a2).abs() < 1e-8);
        assert!(matches!(
            covariance_kernel_check(0.0, 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn feynman_kac_constant_mode() {
        let f = FourierModeFn {
            modes: vec![(0, 1, Complex64::new(1.0, 0.0))],
        };
        let lat = Lattice2D {
            k_x: 4,
            k_t: 96,
            t_extent: 24.0,
        };
        let r = feynman_kac_2d(1.0, 1.0, 1, &f, &f, 0.0, 0.0, lat, 3000, 99).unwrap();
        // continuum value (1/2)(1/m) = 0.5
        assert!((r.continuum.re - 0.5).abs() < 1e-12);
        // lattice bias is the documented gap
        let bias = (r.lattice - r.continuum).norm();
        assert!(bias < 0.02, "lattice bias {bias}");
        assert!(
            (r.estimate - r.lattice).norm() < 3.0 * r.stderr.max(2e-3),
            "estimate {} vs lattice {} (se {})",
            r.estimate,
            r.lattice,
            r.stderr
        );
    }

    #[test]
    fn feynman_kac_orthogonal_and_decay() {
        let f0 = FourierModeFn {
            modes: vec![(0, 1, Complex64::new(1.0, 0.0))],
        };
        let f1 = FourierModeFn {
            modes: vec![(1, 1, Complex64::new(1.0, 0.0))],
        };
        let lat = Lattice2D {
            k_x: 4,
            k_t: 512,
            t_extent: 24.0,
        };
        let r = feynman_kac_2d(1.0, 1.0, 1, &f0, &f1, 0.0, 0.0, lat, 2000, 5).unwrap();
        assert!(r.lattice.norm() < 1e-14);
        assert!(r.estimate.norm() < 3.0 * r.stderr.max(2e-3));

        // first mode at |Δt| = 1: (1/2) e^{-ω}/ω with ω = √(4π² + 1)
        let r = feynman_kac_2d(1.0, 1.0, 1, &f1, &f1, 0.0, 1.0, lat, 2000, 6).unwrap();
        let w = (TAU * TAU + 1.0f64).sqrt();
        let expect = 0.5 * (-w).exp() / w;
        assert!((r.continuum.re - expect).abs() < 1e-12);
        assert!(
            (r.estimate - r.lattice).norm() < 3.0 * r.stderr.max(5e-4),
            "estimate {} vs lattice {}",
            r.estimate,
            r.lattice
        );

        // config errors
        assert!(matches!(
            feynman_kac_2d(
                1.0,
                1.0,
                1,
                &FourierModeFn {
                    modes: vec![(9, 1, Complex64::new(1.0, 0.0))]
                },
                &f0,
                0.0,
                0.0,
                lat,
                10,
                1
            ),
            Err(Error::Config(_))
        ));
    }
}
