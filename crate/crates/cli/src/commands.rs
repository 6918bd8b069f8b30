//! Subcommand implementations: every run writes CSV/JSON artifacts into the
//! output directory and a checksummed manifest besides them.

use crate::config::ExperimentConfig;
use crate::manifest::ArtifactWriter;
use anyhow::Result;
use num_complex::Complex64;
use sft_core::fock;
use sft_core::graphs::{
    self, activity_f, enumerate_graphs, ActivityContext, EdgeLabels, MomentCaps, RibbonGraph,
    WidthMode,
};
use sft_core::interaction::{
    cauchy_l2_check, interaction_i, partition_z, smear_mass_oracle, smear_mass_oracle_nested,
    twisted_interaction, vertex_j, VertexKernel,
};
use sft_core::measure::{
    covariance_kernel_check, feynman_kac_2d, two_point_estimate, two_point_exact, FieldSampler,
    FourierModeFn, FunctionalSpec, Lattice2D,
};
use sft_core::surfaces::fem::{fem_spectrum, torus_spectrum_exact};
use sft_core::surfaces::zeta::{
    logdet_flat, modes_needed, suggest_split_point, torus_logdet_modesum, torus_logdet_theta,
    SpectrumPair,
};
use sft_core::surfaces::{build_surface, conjecture, flat_torus_mesh, BuildOptions, SurfaceMesh};

fn f(x: f64) -> String {
    format!("{x:.17e}")
}

/// The direct 2-vertex class: trunk–trunk, branch–branch, branch–branch.
fn theta_graph() -> RibbonGraph {
    enumerate_graphs(1)
        .expect("n = 1 enumeration")
        .into_iter()
        .find(|g| {
            g.edges
                .iter()
                .all(|(a, b)| a.slot == b.slot && a.vertex != b.vertex)
        })
        .expect("direct theta class")
}

fn theta_labels(cfg: &ExperimentConfig) -> EdgeLabels {
    // edge order: sorted by conjugate end = (trunk, branch1, branch2)
    EdgeLabels {
        t: cfg.surfaces.tube_t.clone(),
        ell: cfg.surfaces.tube_ell.clone(),
    }
}

fn theta_meshes(cfg: &ExperimentConfig) -> Result<(SurfaceMesh, SurfaceMesh)> {
    let g = theta_graph();
    let labels = theta_labels(cfg);
    let build = |h: f64| -> Result<SurfaceMesh> {
        Ok(build_surface(
            &g,
            &labels,
            &BuildOptions {
                h,
                fixture_len: cfg.surfaces.fixture_len,
                twists: None,
                junction: sft_core::surfaces::JunctionConvention::Mandelstam,
            },
        )?)
    };
    Ok((build(cfg.surfaces.h)?, build(2.0 * cfg.surfaces.h)?))
}

pub fn fock_dump(cfg: &ExperimentConfig, out: &mut ArtifactWriter) -> Result<()> {
    let basis = fock::enumerate_basis(
        cfg.global.d,
        cfg.global.m,
        cfg.global.l0,
        cfg.fock.cutoff,
        cfg.fock.basis_capacity,
    )?;
    out.write(
        "fock_basis.json",
        serde_json::to_string_pretty(&basis.to_json())?.as_bytes(),
    )?;
    let mut csv = String::from("t,truncated_trace,product_oracle,relative_gap\n");
    for &t in &cfg.fock.trace_times {
        let tr = fock::truncated_heat_trace(&basis, cfg.global.l0, cfg.global.m, t)?;
        let oracle =
            fock::heat_trace_oracle(cfg.global.d, cfg.global.l0, cfg.global.m, t, basis.mode_window)?;
        csv.push_str(&format!(
            "{},{},{},{}\n",
            f(t),
            f(tr),
            f(oracle),
            f((oracle - tr) / oracle)
        ));
    }
    out.write("heat_trace.csv", csv.as_bytes())?;
    Ok(())
}

pub fn twopoint(cfg: &ExperimentConfig, out: &mut ArtifactWriter) -> Result<()> {
    let sampler = FieldSampler::new(cfg.field_params())?;
    let v = if sampler.dim() > 1 { 1 } else { 0 };
    let g = vec![1.0; cfg.measure.n_cells];
    let a = FunctionalSpec {
        v,
        g: g.clone(),
        t_index: 0,
    };
    let b = FunctionalSpec {
        v,
        g,
        t_index: (cfg.measure.n_t - 1) / 2,
    };
    let (est, se) = two_point_estimate(&sampler, cfg.measure.n_samples, &a, &b)?;
    let exact = two_point_exact(&sampler, &a, &b)?;
    let mut csv =
        String::from("estimate_re,estimate_im,stderr,n_samples,analytic,abs_deviation\n");
    csv.push_str(&format!(
        "{},{},{},{},{},{}\n",
        f(est.re),
        f(est.im),
        f(se),
        cfg.measure.n_samples,
        f(exact.re),
        f((est - exact).norm())
    ));
    out.write("twopoint.csv", csv.as_bytes())?;

    // covariance kernel identity on a 3-point grid
    let mut ck = String::from("omega,tau,quadrature,analytic,abs_error\n");
    for (w, tau) in [(1.0, 0.0), (1.0, 1.0), (2.0, 0.5)] {
        let (num, ana) = covariance_kernel_check(w, tau)?;
        ck.push_str(&format!(
            "{},{},{},{},{}\n",
            f(w),
            f(tau),
            f(num),
            f(ana),
            f((num - ana).abs())
        ));
    }
    out.write("covariance_kernel.csv", ck.as_bytes())?;
    Ok(())
}

pub fn fk_check(cfg: &ExperimentConfig, out: &mut ArtifactWriter) -> Result<()> {
    let fmode = FourierModeFn {
        modes: vec![(0, 1, Complex64::new(1.0, 0.0))],
    };
    let lat = Lattice2D {
        k_x: 4,
        k_t: 96,
        t_extent: 24.0 / cfg.global.m,
    };
    let r = feynman_kac_2d(
        cfg.global.l0,
        cfg.global.m,
        cfg.global.d,
        &fmode,
        &fmode,
        0.0,
        0.0,
        lat,
        cfg.measure.n_samples,
        cfg.global.seed,
    )?;
    let mut csv = String::from(
        "estimate_re,estimate_im,stderr,lattice_re,continuum_re,n_samples\n",
    );
    csv.push_str(&format!(
        "{},{},{},{},{},{}\n",
        f(r.estimate.re),
        f(r.estimate.im),
        f(r.stderr),
        f(r.lattice.re),
        f(r.continuum.re),
        cfg.measure.n_samples
    ));
    out.write("feynman_kac.csv", csv.as_bytes())?;
    Ok(())
}

pub fn vertex(cfg: &ExperimentConfig, out: &mut ArtifactWriter) -> Result<()> {
    let kernel = VertexKernel::build(cfg.field_params(), cfg.vertex_params())?;
    let smear_grid = kernel.smear_mass();
    let oracle = smear_mass_oracle(cfg.global.l0, cfg.global.l_inf, cfg.vertex.v)?;
    let oracle_nested = smear_mass_oracle_nested(cfg.global.l0, cfg.global.l_inf, cfg.vertex.v)?;

    // quadrature refinement on a deterministic smooth field
    let mut refinement = Vec::new();
    for scale in [1usize, 2, 4] {
        let mut fp = cfg.field_params();
        fp.n_cells *= scale;
        fp.n_t = (fp.n_t - 1) * scale + 1;
        let k = VertexKernel::build(fp, cfg.vertex_params())?;
        let sampler = FieldSampler::new(fp)?;
        let mut s = sampler.sample(0);
        for it in 0..fp.n_t {
            let t = fp.t_node(it);
            for ic in 0..fp.n_cells {
                let l = fp.cell_center(ic);
                for is in 0..s.dim {
                    *s.at_mut(it, ic, is) = Complex64::new(
                        (1.0 + is as f64) * (-(t * t) - (l - 1.5) * (l - 1.5)).exp(),
                        0.3 * t * l / (1.0 + is as f64),
                    );
                }
            }
        }
        let jv = vertex_j(&k, &s, &s, &s)?;
        refinement.push(serde_json::json!({
            "n_cells": fp.n_cells,
            "n_t": fp.n_t,
            "j_re": jv.re,
            "j_im": jv.im,
        }));
    }

    // single-sample diagnostics: interaction and twisted interaction
    let sampler = FieldSampler::new(cfg.field_params())?;
    let raw = sampler.sample(0);
    let i_val = interaction_i(&kernel, &raw)?;
    let tw = twisted_interaction(&kernel, &raw, cfg.vertex.n_theta)?;
    let report = serde_json::json!({
        "params": {
            "eps": cfg.vertex.eps,
            "t_window": cfg.vertex.t_window,
            "v": cfg.vertex.v,
        },
        "smear_mass_grid": smear_grid,
        "smear_mass_oracle": oracle,
        "smear_mass_oracle_nested": oracle_nested,
        "active_triples": kernel.triples.len(),
        "interaction_sample0": { "re": i_val.value.re, "im": i_val.value.im },
        "twisted_sample0": { "re": tw.value.re, "im": tw.value.im },
        "refinement": refinement,
    });
    out.write(
        "vertex.json",
        serde_json::to_string_pretty(&report)?.as_bytes(),
    )?;
    Ok(())
}

pub fn partition(cfg: &ExperimentConfig, out: &mut ArtifactWriter) -> Result<()> {
    let kernel = VertexKernel::build(cfg.field_params(), cfg.vertex_params())?;
    let sampler = FieldSampler::new(cfg.field_params())?;
    let n = cfg.partition.n_lambda;
    let lambdas: Vec<f64> = (0..n)
        .map(|i| {
            if n == 1 {
                0.0
            } else {
                -cfg.partition.lambda_max
                    + 2.0 * cfg.partition.lambda_max * i as f64 / (n - 1) as f64
            }
        })
        .collect();
    let rows = partition_z(&sampler, &kernel, &lambdas, cfg.measure.n_samples)?;
    let mut csv = String::from("lambda,re_z,im_z,stderr\n");
    for (lam, z, se) in rows {
        csv.push_str(&format!("{},{},{},{}\n", f(lam), f(z.re), f(z.im), f(se)));
    }
    out.write("partition.csv", csv.as_bytes())?;
    Ok(())
}

pub fn cauchy(cfg: &ExperimentConfig, out: &mut ArtifactWriter) -> Result<()> {
    let mut fine_field = cfg.field_params();
    fine_field.cutoff = *cfg
        .cauchy
        .cutoffs
        .last()
        .ok_or_else(|| sft_core::Error::config("empty cauchy schedule"))?;
    let sampler = FieldSampler::new(fine_field)?;
    let kernel_at = |cutoff: f64, kappa: f64| -> Result<VertexKernel> {
        let mut fp = cfg.field_params();
        fp.cutoff = cutoff;
        fp.kappa = kappa;
        Ok(VertexKernel::build(fp, cfg.vertex_params())?)
    };
    let mut csv =
        String::from("m_coarse,kappa_coarse,m_fine,kappa_fine,estimate,stderr,n_samples\n");
    for w in cfg.cauchy.cutoffs.windows(2).zip(cfg.cauchy.kappas.windows(2)) {
        let ([m0, m1], [k0, k1]) = w else { unreachable!() };
        let kc = kernel_at(*m0, *k0)?;
        let kf = kernel_at(*m1, *k1)?;
        let (est, se) = cauchy_l2_check(&sampler, &kc, &kf, cfg.cauchy.n_samples)?;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            f(*m0),
            f(*k0),
            f(*m1),
            f(*k1),
            f(est),
            f(se),
            cfg.cauchy.n_samples
        ));
    }
    out.write("cauchy.csv", csv.as_bytes())?;
    Ok(())
}

pub fn graphs_cmd(
    cfg: &ExperimentConfig,
    n_override: Option<usize>,
    out: &mut ArtifactWriter,
) -> Result<()> {
    let n = n_override.unwrap_or(cfg.graphs.n_max);
    let classes = enumerate_graphs(n)?;
    let json: Vec<serde_json::Value> = classes.iter().map(|g| g.to_json()).collect();
    out.write(
        "graphs.json",
        serde_json::to_string_pretty(&serde_json::json!({
            "n_pairs": n,
            "class_count": classes.len(),
            "total_pairings": classes.iter().map(|g| g.pairing_count).sum::<u64>(),
            "classes": json,
        }))?
        .as_bytes(),
    )?;
    // derived weights against the automorphism orders, for inspection
    let mut csv = String::from("class,pairing_count,aut_order,connected,genus\n");
    for (i, g) in classes.iter().enumerate() {
        let genus = if g.is_connected() {
            graphs::genus(g)?.to_string()
        } else {
            String::from("-")
        };
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            i,
            g.pairing_count,
            g.aut_order,
            g.is_connected(),
            genus
        ));
    }
    out.write("graph_weights.csv", csv.as_bytes())?;
    Ok(())
}

pub fn moment(cfg: &ExperimentConfig, out: &mut ArtifactWriter) -> Result<()> {
    let kernel = VertexKernel::build(cfg.field_params(), cfg.vertex_params())?;
    let caps = MomentCaps::default();
    let terms = graphs::wick_moment_breakdown(&kernel, cfg.graphs.moment_order, &caps)?;
    let total: f64 = terms.iter().map(|t| t.weight * t.value).sum();
    let mut csv = String::from("class,weight,value,contribution,connected\n");
    for (i, t) in terms.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            i,
            f(t.weight),
            f(t.value),
            f(t.weight * t.value),
            t.connected
        ));
    }
    csv.push_str(&format!("total,,,{},\n", f(total)));
    out.write("moment.csv", csv.as_bytes())?;

    let series = graphs::partition_series(&kernel, 1.0, cfg.graphs.moment_order / 2, &caps)?;
    let mut scsv = String::from("n,moment,term,partial_sum\n");
    for t in series {
        scsv.push_str(&format!(
            "{},{},{},{}\n",
            t.n,
            f(t.moment),
            f(t.term),
            f(t.partial_sum)
        ));
    }
    out.write("partition_series.csv", scsv.as_bytes())?;
    Ok(())
}

pub fn activity(cfg: &ExperimentConfig, out: &mut ArtifactWriter) -> Result<()> {
    let g = theta_graph();
    let labels = theta_labels(cfg);
    let mut csv = String::from("v,f_pinned,f_mollified,v_m_d_f\n");
    for &v in &cfg.conjecture.v_schedule {
        let mut vp = cfg.vertex_params();
        vp.v = v;
        let kernel = VertexKernel::build(cfg.field_params(), vp)?;
        let pinned = activity_f(
            &g,
            &labels,
            &ActivityContext {
                kernel: &kernel,
                mode: WidthMode::Pinned,
            },
        )?;
        let moll = activity_f(
            &g,
            &labels,
            &ActivityContext {
                kernel: &kernel,
                mode: WidthMode::Mollified,
            },
        )?;
        csv.push_str(&format!(
            "{},{},{},{}\n",
            f(v),
            f(pinned.value),
            f(moll.value),
            f(v * cfg.global.m.powi(cfg.global.d as i32) * pinned.value)
        ));
    }
    out.write("activity.csv", csv.as_bytes())?;
    Ok(())
}

pub fn surface(cfg: &ExperimentConfig, out: &mut ArtifactWriter) -> Result<()> {
    let (mesh, _) = theta_meshes(cfg)?;
    let mut ascii = Vec::new();
    mesh.export_ascii(&mut ascii)?;
    out.write("mesh.txt", &ascii)?;
    let sums = mesh.angle_sums();
    let cone_sums: Vec<f64> = mesh.cone_nodes.iter().map(|&c| sums[c]).collect();
    let report = serde_json::json!({
        "nodes": mesh.n_nodes,
        "triangles": mesh.n_triangles(),
        "euler_characteristic": mesh.euler_characteristic(),
        "area": mesh.total_area(),
        "cone_nodes": mesh.cone_nodes,
        "cone_angle_sums": cone_sums,
    });
    out.write(
        "surface.json",
        serde_json::to_string_pretty(&report)?.as_bytes(),
    )?;
    Ok(())
}

fn kind_spectrum(cfg: &ExperimentConfig) -> Result<(Vec<f64>, Vec<f64>, f64, Vec<f64>, f64)> {
    // returns (lap_fine, lap_coarse, area, cone_angles, t0)
    if cfg.surfaces.kind == "torus" {
        let (l, beta) = (cfg.surfaces.torus_l, cfg.surfaces.torus_beta);
        let nx = (l / cfg.surfaces.h).round() as usize;
        let ny = (beta / cfg.surfaces.h).round() as usize;
        let fine = flat_torus_mesh(l, beta, nx, ny)?;
        let coarse = flat_torus_mesh(l, beta, nx / 2, ny / 2)?;
        let t0 = suggest_split_point(l.min(beta).powi(2));
        let n = modes_needed(l * beta, t0).min(coarse.n_nodes - 1);
        let ef = fem_spectrum(&fine, 1e-9, n.min(fine.n_nodes - 1), cfg.surfaces.fem_capacity)?;
        let ec = fem_spectrum(&coarse, 1e-9, n, cfg.surfaces.fem_capacity)?;
        Ok((
            ef.iter().map(|e| (e - 1e-18).max(0.0)).collect(),
            ec.iter().map(|e| (e - 1e-18).max(0.0)).collect(),
            l * beta,
            Vec::new(),
            t0,
        ))
    } else {
        let (fine, coarse) = theta_meshes(cfg)?;
        let g_min = cfg
            .surfaces
            .tube_ell
            .iter()
            .fold(f64::INFINITY, |a, &w| a.min(w * w));
        let t0 = suggest_split_point(g_min);
        let n = modes_needed(fine.total_area(), t0).min(coarse.n_nodes - 1);
        let ef = fem_spectrum(&fine, 1e-9, n.min(fine.n_nodes - 1), cfg.surfaces.fem_capacity)?;
        let ec = fem_spectrum(&coarse, 1e-9, n, cfg.surfaces.fem_capacity)?;
        let cones = vec![2.0 * std::f64::consts::TAU; fine.cone_nodes.len()];
        Ok((
            ef.iter().map(|e| (e - 1e-18).max(0.0)).collect(),
            ec.iter().map(|e| (e - 1e-18).max(0.0)).collect(),
            fine.total_area(),
            cones,
            t0,
        ))
    }
}

pub fn spectrum(cfg: &ExperimentConfig, out: &mut ArtifactWriter) -> Result<()> {
    let (lap, _, area, _, _) = kind_spectrum(cfg)?;
    let m = cfg.global.m;
    let mut csv = String::from("index,laplacian_eigenvalue,shifted_eigenvalue\n");
    for (i, &l) in lap.iter().take(cfg.surfaces.eigen_count).enumerate() {
        csv.push_str(&format!("{},{},{}\n", i, f(l), f(l + m * m)));
    }
    out.write("spectrum.csv", csv.as_bytes())?;
    // exact reference for the torus kind
    if cfg.surfaces.kind == "torus" {
        let exact = torus_spectrum_exact(
            cfg.surfaces.torus_l,
            cfg.surfaces.torus_beta,
            m,
            cfg.surfaces.eigen_count,
        );
        let mut csv = String::from("index,exact_eigenvalue\n");
        for (i, &l) in exact.iter().enumerate() {
            csv.push_str(&format!("{},{}\n", i, f(l)));
        }
        out.write("spectrum_exact.csv", csv.as_bytes())?;
    }
    let _ = area;
    Ok(())
}

pub fn detlap(cfg: &ExperimentConfig, out: &mut ArtifactWriter) -> Result<()> {
    let (lap_f, lap_c, area, cones, t0) = kind_spectrum(cfg)?;
    let det = logdet_flat(
        &SpectrumPair::richardson(&lap_f, &lap_c, 4.0),
        cfg.global.m,
        area,
        &cones,
        t0,
        cfg.conjecture.max_mismatch,
    )?;
    let mut report = serde_json::json!({
        "kind": cfg.surfaces.kind,
        "log_det": det.log_det,
        "n_eigs": det.n_eigs,
        "t0": det.t0,
        "mismatch": det.mismatch,
        "zeta_zero": det.zeta_zero,
        "fit": det.fit,
    });
    if cfg.surfaces.kind == "torus" {
        let oracle =
            torus_logdet_modesum(cfg.surfaces.torus_l, cfg.surfaces.torus_beta, cfg.global.m)?;
        let oracle2 =
            torus_logdet_theta(cfg.surfaces.torus_l, cfg.surfaces.torus_beta, cfg.global.m)?;
        report["oracle_modesum"] = serde_json::json!(oracle);
        report["oracle_theta"] = serde_json::json!(oracle2);
        report["relative_error"] = serde_json::json!((det.log_det - oracle).abs() / oracle.abs());
    }
    out.write(
        "detlap.json",
        serde_json::to_string_pretty(&report)?.as_bytes(),
    )?;
    Ok(())
}

pub fn conjecture_cmd(cfg: &ExperimentConfig, out: &mut ArtifactWriter) -> Result<()> {
    let g = theta_graph();
    let labels = theta_labels(cfg);
    let params = conjecture::ScanParams {
        field: cfg.field_params(),
        eps: cfg.vertex.eps,
        t_window: cfg.vertex.t_window,
        h: cfg.surfaces.h,
        fixture_len: cfg.surfaces.fixture_len,
        fem_capacity: cfg.surfaces.fem_capacity,
        max_mismatch: cfg.conjecture.max_mismatch,
    };
    let rows = conjecture::conjecture_scan(
        &g,
        &labels,
        cfg.global.d,
        &cfg.conjecture.m_schedule,
        &cfg.conjecture.v_schedule,
        &params,
    )?;
    let mut csv = String::from("m,v,lhs_v_md_f,log_det,rhs_det_pow,ratio\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            f(r.m),
            f(r.v),
            f(r.lhs),
            f(r.log_det),
            f(r.rhs),
            f(r.ratio)
        ));
    }
    out.write("conjecture.csv", csv.as_bytes())?;
    out.write(
        "conjecture.json",
        serde_json::to_string_pretty(&serde_json::json!({
            "graph": theta_graph().to_json(),
            "labels_t": cfg.surfaces.tube_t,
            "labels_ell": cfg.surfaces.tube_ell,
            "rows": rows,
        }))?
        .as_bytes(),
    )?;
    Ok(())
}
