//! Piecewise-linear FEM spectra of (-Δ + m²) on triangulated flat surfaces.
//!
//! Stiffness and mass matrices are assembled from per-triangle chart
//! geometry; the generalized problem K u = λ M u is reduced with a Cholesky
//! factor of the mass matrix and handed to a dense symmetric eigensolver.
//! Desk-scale meshes stay dense; a capacity bound guards the O(n³) cost.

use crate::error::{Error, Result};
use crate::surfaces::SurfaceMesh;
use faer::{Mat, Side};

pub const DEFAULT_FEM_CAPACITY: usize = 3200;

/// Dense stiffness and mass matrices (row-major, symmetric).
pub struct FemMatrices {
    pub n: usize,
    pub stiffness: Vec<f64>,
    pub mass: Vec<f64>,
}

pub fn assemble(mesh: &SurfaceMesh) -> FemMatrices {
    let n = mesh.n_nodes;
    let mut k = vec![0.0; n * n];
    let mut m = vec![0.0; n * n];
    for (t, c) in mesh.tris.iter().zip(&mesh.tri_coords) {
        let (p0, p1, p2) = (c[0], c[1], c[2]);
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let area = 0.5 * det.abs();
        // hat gradients: ∇φ_i = rot(edge opposite i) / (2A)
        let grads = [
            [(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det],
            [(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det],
            [(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det],
        ];
        for i in 0..3 {
            for j in 0..3 {
                let kij = area * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
                k[t[i] * n + t[j]] += kij;
                let mij = if i == j { area / 6.0 } else { area / 12.0 };
                m[t[i] * n + t[j]] += mij;
            }
        }
    }
    FemMatrices {
        n,
        stiffness: k,
        mass: m,
    }
}

/// In-place dense Cholesky (lower). Returns an error when the matrix is not
/// positive definite.
fn cholesky_lower(a: &mut [f64], n: usize) -> Result<()> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::numeric(format!(
                "mass matrix not positive definite at pivot {j} (d = {d})"
            )));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for k in j + 1..n {
            a[j * n + k] = 0.0;
        }
    }
    Ok(())
}

/// Lowest `count` eigenvalues of (-Δ + m²) in ascending order.
///
/// The first eigenvalue of -Δ is 0 (constants), so the spectrum starts at
/// m² up to an O(h²) discretization shift.
pub fn fem_spectrum(mesh: &SurfaceMesh, m: f64, count: usize, capacity: usize) -> Result<Vec<f64>> {
    if mesh.n_nodes > capacity {
        return Err(Error::capacity(format!(
            "mesh has {} nodes, above the dense eigensolver bound {capacity}",
            mesh.n_nodes
        )));
    }
    if count == 0 || count > mesh.n_nodes {
        return Err(Error::usage(format!(
            "eigenvalue count {count} outside 1..={}",
            mesh.n_nodes
        )));
    }
    let fem = assemble(mesh);
    let n = fem.n;
    let mut l = fem.mass.clone();
    cholesky_lower(&mut l, n)?;
    // S = L⁻¹ K L⁻ᵀ, via forward substitutions on columns and rows
    let mut s = fem.stiffness.clone();
    // X = L⁻¹ K  (solve L X = K column-wise; row-major forward substitution)
    for col in 0..n {
        for i in 0..n {
            let mut x = s[i * n + col];
            for k in 0..i {
                x -= l[i * n + k] * s[k * n + col];
            }
            s[i * n + col] = x / l[i * n + i];
        }
    }
    // S = X L⁻ᵀ (solve S Lᵀ = X row-wise: same substitution on rows)
    for row in 0..n {
        for i in 0..n {
            let mut x = s[row * n + i];
            for k in 0..i {
                x -= l[i * n + k] * s[row * n + k];
            }
            s[row * n + i] = x / l[i * n + i];
        }
    }
    // symmetrize against roundoff and solve
    let sm = Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (s[i * n + j] + s[j * n + i]));
    let mut eigs: Vec<f64> = sm.selfadjoint_eigenvalues(Side::Lower);
    eigs.sort_by(f64::total_cmp);
    if !eigs.iter().all(|e| e.is_finite()) {
        return Err(Error::numeric("eigensolver returned non-finite values"));
    }
    Ok(eigs
        .into_iter()
        .take(count)
        .map(|lam| lam + m * m)
        .collect())
}

/// Exact torus eigenvalues (2πa/L)² + (2πb/β)² + m², ascending, first `count`.
pub fn torus_spectrum_exact(l: f64, beta: f64, m: f64, count: usize) -> Vec<f64> {
    let mut vals = Vec::new();
    let amax = (count as f64).sqrt() as i64 + 8;
    for a in -amax..=amax {
        for b in -amax..=amax {
            let ka = std::f64::consts::TAU * a as f64 / l;
            let kb = std::f64::consts::TAU * b as f64 / beta;
            vals.push(ka * ka + kb * kb + m * m);
        }
    }
    vals.sort_by(f64::total_cmp);
    vals.truncate(count);
    vals
}

/// Eigenvalue counting: N(λ) / (A λ / 4π) for the largest computed λ window.
pub fn weyl_ratio(eigs_of_laplacian: &[f64], area: f64) -> f64 {
    let lam = eigs_of_laplacian.last().copied().unwrap_or(0.0);
    if lam <= 0.0 {
        return f64::NAN;
    }
    let n = eigs_of_laplacian.len() as f64;
    n / (area * lam / (4.0 * std::f64::consts::PI))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surfaces::{flat_torus_mesh, flat_torus_mesh_alt};

    #[test]
    fn torus_low_spectrum_matches_exact() {
        let (l, beta, m) = (1.0, 1.0, 1.0);
        let mesh = flat_torus_mesh(l, beta, 24, 24).unwrap();
        let eigs = fem_spectrum(&mesh, m, 10, DEFAULT_FEM_CAPACITY).unwrap();
        let exact = torus_spectrum_exact(l, beta, m, 10);
        for (i, (&e, &x)) in eigs.iter().zip(&exact).enumerate() {
            let rel = (e - x).abs() / x;
            assert!(rel < 0.03, "eig {i}: fem {e} vs exact {x} (rel {rel:.3})");
        }
        // ground state = m² to O(h²), and FEM eigenvalues bound from above
        assert!((eigs[0] - m * m).abs() < 1e-8);
        assert!(eigs[1] >= exact[1] - 1e-9);
    }

    #[test]
    fn mass_shift_is_exact() {
        let mesh = flat_torus_mesh(1.0, 1.3, 10, 13).unwrap();
        let e0 = fem_spectrum(&mesh, 1e-8, 12, DEFAULT_FEM_CAPACITY).unwrap();
        let e2 = fem_spectrum(&mesh, 2.0, 12, DEFAULT_FEM_CAPACITY).unwrap();
        for i in 0..12 {
            assert!(((e2[i] - 4.0) - (e0[i] - 1e-16)).abs() < 1e-10);
        }
    }

    #[test]
    fn h_squared_convergence_order() {
        let (l, beta, m) = (1.0, 1.0, 0.5);
        let exact = torus_spectrum_exact(l, beta, m, 8);
        let err = |n: usize| -> f64 {
            let mesh = flat_torus_mesh(l, beta, n, n).unwrap();
            let eigs = fem_spectrum(&mesh, m, 8, DEFAULT_FEM_CAPACITY).unwrap();
            eigs.iter()
                .zip(&exact)
                .skip(1)
                .map(|(&e, &x)| (e - x).abs())
                .sum::<f64>()
        };
        let e1 = err(10);
        let e2 = err(20);
        let e3 = err(40);
        let o1 = (e1 / e2).log2();
        let o2 = (e2 / e3).log2();
        assert!(
            (1.7..=2.3).contains(&o1) && (1.7..=2.3).contains(&o2),
            "orders {o1:.2}, {o2:.2}"
        );
    }

    #[test]
    fn isometric_meshes_agree_within_h2_envelope() {
        let mesh_a = flat_torus_mesh(1.0, 1.0, 20, 20).unwrap();
        let mesh_b = flat_torus_mesh_alt(1.0, 1.0, 20, 20).unwrap();
        let ea = fem_spectrum(&mesh_a, 1.0, 8, DEFAULT_FEM_CAPACITY).unwrap();
        let eb = fem_spectrum(&mesh_b, 1.0, 8, DEFAULT_FEM_CAPACITY).unwrap();
        for i in 0..8 {
            assert!(
                (ea[i] - eb[i]).abs() < 0.05 * ea[i].max(1.0),
                "eig {i}: {} vs {}",
                ea[i],
                eb[i]
            );
        }
    }

    #[test]
    fn weyl_sanity_on_torus() {
        let mesh = flat_torus_mesh(1.0, 1.0, 28, 28).unwrap();
        let eigs = fem_spectrum(&mesh, 1e-9, 120, DEFAULT_FEM_CAPACITY).unwrap();
        let lap: Vec<f64> = eigs.iter().map(|e| e - 1e-18).collect();
        let ratio = weyl_ratio(&lap, 1.0);
        assert!((ratio - 1.0).abs() < 0.15, "Weyl ratio {ratio}");
    }

    #[test]
    fn capacity_and_usage_errors() {
        let mesh = flat_torus_mesh(1.0, 1.0, 10, 10).unwrap();
        assert!(matches!(
            fem_spectrum(&mesh, 1.0, 5, 50),
            Err(Error::Capacity(_))
        ));
        assert!(matches!(
            fem_spectrum(&mesh, 1.0, 0, 1000),
            Err(Error::Usage(_))
        ));
    }
}
