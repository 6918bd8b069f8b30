//! Directed trivalent ribbon graphs, Wick moments, and graph activities.
//!
//! Moments of Re I expand over complete Wick pairings of the cubic vertex.
//! Each vertex carries one distinguished trunk slot (slot 0, the long string
//! being split) and two branch slots; vertices come in two mirror flavors
//! according to which slots carry conjugated field factors. Edges always
//! join a conjugate leg to a plain leg. An isomorphism relabels vertices
//! within each flavor; the cyclic order (slot 0, 1, 2) is part of the data,
//! so no slot permutations are allowed — slot swaps are reflections, not
//! rotations, of the ribbon structure.
//!
//! Pairings are enumerated exhaustively and grouped by canonical form; the
//! combinatorial weights are the orbit sizes (times the binomial prefactor
//! of Re I = (I + Ī)/2), never read off a table. Moment evaluation runs on
//! the same grids, mollifier taps and Θ̂ tensors as the interaction module,
//! so Monte-Carlo estimates of the same quantity converge to these values.

use crate::error::{Error, Result};
use crate::interaction::VertexKernel;
use crate::projection::{smoothed_family, SplitSpec};
use crate::util::quad::{delta_kappa, theta_step};
use num_complex::Complex64;
use serde::Serialize;
use std::collections::BTreeMap;

/// Which slots carry conjugated field factors.
///
/// `Split` is the vertex of I itself: trunk (slot 0) conjugate, branches
/// plain. `Join` is its mirror image from Ī.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum VertexKind {
    Split,
    Join,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct HalfEdge {
    pub vertex: usize,
    pub slot: u8,
}

/// A directed trivalent ribbon graph: `n_pairs` Split vertices (ids
/// 0..n), `n_pairs` Join vertices (ids n..2n), and a perfect matching of
/// conjugate onto plain legs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RibbonGraph {
    pub n_pairs: usize,
    /// (conjugate end, plain end), sorted by the conjugate end.
    pub edges: Vec<(HalfEdge, HalfEdge)>,
    /// Order of the flavor-preserving automorphism group.
    pub aut_order: u64,
    /// Number of labeled Wick pairings in this isomorphism class.
    pub pairing_count: u64,
}

impl RibbonGraph {
    pub fn n_vertices(&self) -> usize {
        2 * self.n_pairs
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn kind(&self, vertex: usize) -> VertexKind {
        if vertex < self.n_pairs {
            VertexKind::Split
        } else {
            VertexKind::Join
        }
    }

    /// Incident edge index per (vertex, slot).
    pub fn slot_edges(&self) -> Vec<[usize; 3]> {
        let mut out = vec![[usize::MAX; 3]; self.n_vertices()];
        for (ei, (a, b)) in self.edges.iter().enumerate() {
            out[a.vertex][a.slot as usize] = ei;
            out[b.vertex][b.slot as usize] = ei;
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        if self.n_pairs == 0 {
            return false;
        }
        let n = self.n_vertices();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut Vec<usize>, x: usize) -> usize {
            if p[x] != x {
                let r = find(p, p[x]);
                p[x] = r;
            }
            p[x]
        }
        for (a, b) in &self.edges {
            let ra = find(&mut parent, a.vertex);
            let rb = find(&mut parent, b.vertex);
            parent[ra] = rb;
        }
        let r0 = find(&mut parent, 0);
        (1..n).all(|v| find(&mut parent, v) == r0)
    }

    /// Connected components as vertex sets.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.n_vertices();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut Vec<usize>, x: usize) -> usize {
            if p[x] != x {
                let r = find(p, p[x]);
                p[x] = r;
            }
            p[x]
        }
        for (a, b) in &self.edges {
            let ra = find(&mut parent, a.vertex);
            let rb = find(&mut parent, b.vertex);
            parent[ra] = rb;
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for v in 0..n {
            let r = find(&mut parent, v);
            groups.entry(r).or_default().push(v);
        }
        groups.into_values().collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n_vertices": self.n_vertices(),
            "kinds": (0..self.n_vertices()).map(|v| match self.kind(v) {
                VertexKind::Split => "split",
                VertexKind::Join => "join",
            }).collect::<Vec<_>>(),
            "edges": self.edges.iter().map(|(a, b)| {
                serde_json::json!({
                    "conj": [a.vertex, a.slot],
                    "plain": [b.vertex, b.slot],
                })
            }).collect::<Vec<_>>(),
            "aut_order": self.aut_order,
            "pairing_count": self.pairing_count,
        })
    }
}

// --- leg indexing for matchings -------------------------------------------
// conjugate legs: Split slot0 (n of them), then Join slots 1,2 (2n)
// plain legs:     Split slots 1,2 (2n),    then Join slot0 (n)

fn conj_leg(n: usize, idx: usize) -> HalfEdge {
    if idx < n {
        HalfEdge {
            vertex: idx,
            slot: 0,
        }
    } else {
        let r = idx - n;
        HalfEdge {
            vertex: n + r / 2,
            slot: (r % 2 + 1) as u8,
        }
    }
}

fn plain_leg(n: usize, idx: usize) -> HalfEdge {
    if idx < 2 * n {
        HalfEdge {
            vertex: idx / 2,
            slot: (idx % 2 + 1) as u8,
        }
    } else {
        HalfEdge {
            vertex: n + (idx - 2 * n),
            slot: 0,
        }
    }
}

fn conj_leg_index(n: usize, h: HalfEdge) -> usize {
    if h.slot == 0 {
        h.vertex
    } else {
        n + (h.vertex - n) * 2 + (h.slot as usize - 1)
    }
}

fn plain_leg_index(n: usize, h: HalfEdge) -> usize {
    if h.slot == 0 {
        2 * n + (h.vertex - n)
    } else {
        h.vertex * 2 + (h.slot as usize - 1)
    }
}

/// Apply a flavor-preserving vertex relabeling (σ on Splits, τ on Joins)
/// to a matching in leg-index form.
fn relabel_matching(n: usize, m: &[usize], sigma: &[usize], tau: &[usize]) -> Vec<usize> {
    let move_vertex = |v: usize| -> usize {
        if v < n {
            sigma[v]
        } else {
            n + tau[v - n]
        }
    };
    let mut out = vec![0usize; m.len()];
    for (ci, &pi) in m.iter().enumerate() {
        let c = conj_leg(n, ci);
        let p = plain_leg(n, pi);
        let c2 = HalfEdge {
            vertex: move_vertex(c.vertex),
            slot: c.slot,
        };
        let p2 = HalfEdge {
            vertex: move_vertex(p.vertex),
            slot: p.slot,
        };
        out[conj_leg_index(n, c2)] = plain_leg_index(n, p2);
    }
    out
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut items: Vec<usize> = (0..n).collect();
    fn heap(k: usize, items: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(items.clone());
            return;
        }
        for i in 0..k {
            heap(k - 1, items, out);
            if k % 2 == 0 {
                items.swap(i, k - 1);
            } else {
                items.swap(0, k - 1);
            }
        }
    }
    heap(n, &mut items, &mut out);
    out.sort();
    out.dedup();
    out
}

/// All labeled Wick pairings (conjugate → plain bijections) for n I-vertices
/// and n Ī-vertices, as leg-index vectors.
pub fn enumerate_matchings(n: usize) -> Vec<Vec<usize>> {
    permutations(3 * n)
}

fn matching_to_graph(n: usize, m: &[usize], aut: u64, orbit: u64) -> RibbonGraph {
    let mut edges: Vec<(HalfEdge, HalfEdge)> = m
        .iter()
        .enumerate()
        .map(|(ci, &pi)| (conj_leg(n, ci), plain_leg(n, pi)))
        .collect();
    edges.sort();
    RibbonGraph {
        n_pairs: n,
        edges,
        aut_order: aut,
        pairing_count: orbit,
    }
}

pub const MAX_GRAPH_ORDER: usize = 3;

/// Isomorphism-class representatives of the directed trivalent ribbon graphs
/// with 2n vertices, with |Aut| from explicit stabilizer enumeration.
/// Deterministic canonical order.
pub fn enumerate_graphs(n: usize) -> Result<Vec<RibbonGraph>> {
    if n == 0 {
        return Ok(vec![RibbonGraph {
            n_pairs: 0,
            edges: Vec::new(),
            aut_order: 1,
            pairing_count: 1,
        }]);
    }
    if n > MAX_GRAPH_ORDER {
        return Err(Error::capacity(format!(
            "graph enumeration bounded at n ≤ {MAX_GRAPH_ORDER} vertex pairs, got {n}"
        )));
    }
    let perms = permutations(n);
    let matchings = enumerate_matchings(n);
    let mut classes: BTreeMap<Vec<usize>, (u64, u64)> = BTreeMap::new(); // canon → (orbit, aut)
    for m in &matchings {
        let mut canon: Option<Vec<usize>> = None;
        let mut stab = 0u64;
        for sigma in &perms {
            for tau in &perms {
                let r = relabel_matching(n, m, sigma, tau);
                if r == *m {
                    stab += 1;
                }
                if canon.as_ref().map_or(true, |c| r < *c) {
                    canon = Some(r);
                }
            }
        }
        let canon = canon.unwrap();
        let e = classes.entry(canon).or_insert((0, stab));
        e.0 += 1;
        debug_assert_eq!(e.1, stab, "stabilizer must be constant on orbits");
    }
    let group_order = (perms.len() * perms.len()) as u64;
    let mut out = Vec::new();
    for (canon, (orbit, aut)) in classes {
        debug_assert_eq!(aut * orbit / aut, orbit);
        debug_assert_eq!(
            orbit * aut,
            group_order,
            "orbit–stabilizer mismatch for {canon:?}"
        );
        out.push(matching_to_graph(n, &canon, aut, orbit));
    }
    Ok(out)
}

/// Genus of the closed surface glued from a connected graph: every vertex
/// contributes a pair of pants (χ = -1 each), tubes contribute nothing, so
/// χ = -2n and g = n + 1.
pub fn genus(graph: &RibbonGraph) -> Result<u32> {
    if !graph.is_connected() {
        return Err(Error::usage(
            "genus needs a connected graph; call per component",
        ));
    }
    let chi = -(graph.n_vertices() as i64);
    debug_assert_eq!(chi, 2 - 2 * (graph.n_pairs as i64 + 1));
    Ok(graph.n_pairs as u32 + 1)
}

// ---------------------------------------------------------------------------
// Moment engine
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct MomentCaps {
    pub max_order: usize,
    /// Bound on boundary-table entries during contraction.
    pub max_boundary: usize,
    /// Bound on (triples × t-nodes) per vertex.
    pub max_vertex_domain: usize,
}

impl Default for MomentCaps {
    fn default() -> Self {
        MomentCaps {
            max_order: 4,
            max_boundary: 4_000_000,
            max_vertex_domain: 200_000,
        }
    }
}

/// Pairwise propagator tables on raw cells:
/// G[dt_idx][s][cu·N + cw] = Σ_q tap(cu-q) tap(cw-q) (1/Δℓ) e^{-E_s(ℓ_q)·dt}.
struct PropagatorTables {
    n_cells: usize,
    dim: usize,
    g: Vec<Vec<f64>>, // [dt_idx][s·N² + cu·N + cw]
}

impl PropagatorTables {
    fn build(kernel: &VertexKernel) -> Result<Self> {
        let f = &kernel.field;
        let n = f.n_cells;
        let dim = kernel.dim();
        let taps = kernel.mollifier.kernel(f.d_ell());
        let r = (taps.len() as i64 - 1) / 2;
        // per-state energies on raw cells
        let mut energies = vec![0.0; dim * n];
        for q in 0..n {
            let es = kernel.basis.energies(f.cell_center(q), f.m)?;
            for (s, &e) in es.iter().enumerate() {
                energies[s * n + q] = e;
            }
        }
        let n_dt = f.n_t; // dt index k means |Δt| = k·dt
        let dt = f.dt();
        let mut g = vec![vec![0.0; dim * n * n]; n_dt];
        for (k, gk) in g.iter_mut().enumerate() {
            for s in 0..dim {
                for cu in 0..n {
                    for cw in 0..n {
                        let mut acc = 0.0;
                        let lo = (cu as i64 - r).max(cw as i64 - r).max(0);
                        let hi = (cu as i64 + r).min(cw as i64 + r).min(n as i64 - 1);
                        for q in lo..=hi {
                            let tu = taps[(cu as i64 - q + r) as usize];
                            let tw = taps[(cw as i64 - q + r) as usize];
                            acc += tu
                                * tw
                                * (-energies[s * n + q as usize] * k as f64 * dt).exp();
                        }
                        gk[s * n * n + cu * n + cw] = acc / f.d_ell();
                    }
                }
            }
        }
        Ok(PropagatorTables { n_cells: n, dim, g })
    }

    #[inline]
    fn get(&self, dt_idx: usize, s: usize, cu: usize, cw: usize) -> f64 {
        self.g[dt_idx][s * self.n_cells * self.n_cells + cu * self.n_cells + cw]
    }
}

/// Value of one labeled pairing: the exact expectation of the corresponding
/// contraction of the discretized interaction. Boundary-table contraction
/// over (cell, state, time) edge data, vertices absorbed in index order.
fn matching_value(
    kernel: &VertexKernel,
    props: &PropagatorTables,
    graph: &RibbonGraph,
    caps: &MomentCaps,
) -> Result<Complex64> {
    let n = graph.n_pairs;
    let nv = 2 * n;
    let dim = props.dim;
    let n_cells = props.n_cells;
    let slot_edges = graph.slot_edges();
    let n_t = kernel.t_indices.len();
    let vertex_domain = kernel.triples.len() * n_t;
    if vertex_domain > caps.max_vertex_domain {
        return Err(Error::capacity(format!(
            "vertex domain {vertex_domain} exceeds the bound {}",
            caps.max_vertex_domain
        )));
    }

    // edge key packing: (cell, state, t_pos) → u64 digit
    let digit = |cell: usize, s: usize, tp: usize| -> u64 {
        ((tp * dim + s) * n_cells + cell) as u64
    };
    let digit_base = (n_cells * dim * n_t) as u64;

    // dangling edges after each vertex: edge appears at its first vertex,
    // closes at its second (or immediately if a self-loop)
    let first_vertex: Vec<usize> = graph
        .edges
        .iter()
        .map(|(a, b)| a.vertex.min(b.vertex))
        .collect();
    let second_vertex: Vec<usize> = graph
        .edges
        .iter()
        .map(|(a, b)| a.vertex.max(b.vertex))
        .collect();

    let mut boundary: BTreeMap<Vec<u64>, Complex64> = BTreeMap::new();
    boundary.insert(Vec::new(), Complex64::new(1.0, 0.0));
    // edges dangling before absorbing vertex v, in edge-index order
    let dangling_before = |v: usize| -> Vec<usize> {
        (0..graph.edges.len())
            .filter(|&e| first_vertex[e] < v && second_vertex[e] >= v && first_vertex[e] != second_vertex[e])
            .collect()
    };

    for v in 0..nv {
        let dang_in = dangling_before(v);
        let dang_out = dangling_before(v + 1);
        let mut next: BTreeMap<Vec<u64>, Complex64> = BTreeMap::new();
        let my_edges = slot_edges[v];
        let is_split = graph.kind(v) == VertexKind::Split;

        for (key, &amp) in &boundary {
            for (tp, &tw) in kernel.t_weights.iter().enumerate() {
                for tr in &kernel.triples {
                    // slot data: slot0 → (cell k, state a), slot1 → (i, b), slot2 → (j, c)
                    let slot_cells = [tr.k, tr.i, tr.j];
                    for a in 0..dim {
                        for b in 0..dim {
                            for c in 0..dim {
                                let t_val = tr.tensor[(b * dim + c) * dim + a];
                                let t_val = if is_split { t_val } else { t_val.conj() };
                                let mut w = amp * tw * tr.weight * t_val;
                                if w == Complex64::new(0.0, 0.0) {
                                    continue;
                                }
                                let slot_states = [a, b, c];
                                let mut new_entries: Vec<(usize, u64)> = Vec::new();
                                let mut dead = false;
                                for slot in 0..3usize {
                                    let e = my_edges[slot];
                                    let (cell, s) = (slot_cells[slot], slot_states[slot]);
                                    if first_vertex[e] == second_vertex[e] {
                                        // self-loop: both slots at this vertex
                                        let (ha, hb) = &graph.edges[e];
                                        let other_slot = if ha.slot as usize == slot {
                                            hb.slot as usize
                                        } else {
                                            ha.slot as usize
                                        };
                                        if other_slot < slot {
                                            continue; // handled at the lower slot
                                        }
                                        if slot_states[other_slot] != s {
                                            dead = true;
                                            break;
                                        }
                                        w *= props.get(0, s, cell, slot_cells[other_slot]);
                                    } else if second_vertex[e] == v {
                                        // close against the recorded end
                                        let pos =
                                            dang_in.iter().position(|&x| x == e).expect("dangling");
                                        let rec = key[pos];
                                        let r_cell = (rec % n_cells as u64) as usize;
                                        let rest = rec / n_cells as u64;
                                        let r_s = (rest % dim as u64) as usize;
                                        let r_tp = (rest / dim as u64) as usize;
                                        if r_s != s {
                                            dead = true;
                                            break;
                                        }
                                        let dt_idx = r_tp.abs_diff(tp);
                                        w *= props.get(dt_idx, s, r_cell, cell);
                                    } else {
                                        // opens here
                                        new_entries.push((e, digit(cell, s, tp)));
                                    }
                                }
                                if dead || w == Complex64::new(0.0, 0.0) {
                                    continue;
                                }
                                // assemble the outgoing key in dang_out order
                                let mut out_key = Vec::with_capacity(dang_out.len());
                                for &e in &dang_out {
                                    if let Some(pos) = dang_in.iter().position(|&x| x == e) {
                                        out_key.push(key[pos]);
                                    } else {
                                        let d = new_entries
                                            .iter()
                                            .find(|(ee, _)| *ee == e)
                                            .expect("opened edge")
                                            .1;
                                        debug_assert!(d < digit_base);
                                        out_key.push(d);
                                    }
                                }
                                *next.entry(out_key).or_insert(Complex64::new(0.0, 0.0)) += w;
                            }
                        }
                    }
                }
            }
            if next.len() > caps.max_boundary {
                return Err(Error::capacity(format!(
                    "moment contraction boundary exceeds {} entries",
                    caps.max_boundary
                )));
            }
        }
        boundary = next;
    }
    debug_assert!(boundary.len() <= 1);
    Ok(boundary
        .get(&Vec::new())
        .copied()
        .unwrap_or(Complex64::new(0.0, 0.0)))
}

/// Per-class contribution to E[(Re I)^order].
#[derive(Clone, Debug, Serialize)]
pub struct MomentTerm {
    pub graph: RibbonGraph,
    /// Orbit size × binomial prefactor: the derived combinatorial weight.
    pub weight: f64,
    /// Value of the labeled-pairing integral for one representative.
    pub value: f64,
    pub connected: bool,
}

/// E[(Re I)^order] for the discretized interaction, as a sum over ribbon
/// graph classes: 2^{-order} C(order, order/2) Σ_Γ N_Γ · Val(Γ). Returns the
/// per-class breakdown; odd orders vanish (no complete pairing).
pub fn wick_moment_breakdown(
    kernel: &VertexKernel,
    order: usize,
    caps: &MomentCaps,
) -> Result<Vec<MomentTerm>> {
    if order % 2 == 1 {
        return Ok(Vec::new());
    }
    if order == 0 {
        return Ok(Vec::new());
    }
    if order > caps.max_order || order / 2 > MAX_GRAPH_ORDER {
        return Err(Error::capacity(format!(
            "moment order {order} exceeds the configured bound {}",
            caps.max_order.min(2 * MAX_GRAPH_ORDER)
        )));
    }
    let n = order / 2;
    let props = PropagatorTables::build(kernel)?;
    let graphs = enumerate_graphs(n)?;
    // 2^{-2n} C(2n, n)
    let mut binom = 1.0f64;
    for i in 0..n {
        binom *= (order - i) as f64 / (i + 1) as f64;
    }
    let prefactor = binom / (1u64 << order) as f64;
    let mut out = Vec::new();
    for g in graphs {
        let val = matching_value(kernel, &props, &g, caps)?;
        if val.im.abs() > 1e-8 * val.re.abs().max(1e-12) {
            return Err(Error::numeric(format!(
                "moment value has a non-real residue: {val}"
            )));
        }
        out.push(MomentTerm {
            weight: prefactor * g.pairing_count as f64,
            value: val.re,
            connected: g.is_connected(),
            graph: g,
        });
    }
    Ok(out)
}

/// E[(Re I)^order]; 1 at order 0, 0 at odd orders.
pub fn wick_moment(kernel: &VertexKernel, order: usize, caps: &MomentCaps) -> Result<f64> {
    if order == 0 {
        return Ok(1.0);
    }
    if order % 2 == 1 {
        return Ok(0.0);
    }
    let terms = wick_moment_breakdown(kernel, order, caps)?;
    Ok(terms.iter().map(|t| t.weight * t.value).sum())
}

#[derive(Clone, Debug, Serialize)]
pub struct SeriesTerm {
    pub n: usize,
    pub moment: f64,
    pub term: f64,
    pub partial_sum: f64,
}

/// Partial sums of Z(λ) ~ Σ_n (iλ)^{2n}/(2n)! E[(Re I)^{2n}].
pub fn partition_series(
    kernel: &VertexKernel,
    lambda: f64,
    n_max: usize,
    caps: &MomentCaps,
) -> Result<Vec<SeriesTerm>> {
    let mut out = Vec::new();
    let mut partial = 0.0;
    for n in 0..=n_max {
        let moment = wick_moment(kernel, 2 * n, caps)?;
        // (iλ)^{2n}/(2n)! = (-1)^n λ^{2n} / (2n)!
        let mut fact = 1.0f64;
        for k in 1..=2 * n {
            fact *= k as f64;
        }
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let term = sign * lambda.powi(2 * n as i32) * moment / fact;
        partial += term;
        out.push(SeriesTerm {
            n,
            moment,
            term,
            partial_sum: partial,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Per-label activity evaluation
// ---------------------------------------------------------------------------

/// Per-edge decorations (t_e, ℓ_e).
#[derive(Clone, Debug)]
pub struct EdgeLabels {
    pub t: Vec<f64>,
    pub ell: Vec<f64>,
}

/// How edge widths couple to the vertex length integrals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WidthMode {
    /// Finite-κ mollifier pairing: vertex lengths are integrated over the
    /// field grid against δ_κ(ℓ_e - ℓ_slot) factors (matches the sampled
    /// measure).
    Mollified,
    /// κ → ∞ point evaluation: vertex lengths pinned to the incident edge
    /// widths; the smear factor 2δ_{1/v}θ appears explicitly per vertex.
    Pinned,
}

#[derive(Clone, Debug, Serialize)]
pub struct ActivityResult {
    pub value: f64,
    pub v: f64,
    pub eps: f64,
    pub m: f64,
    pub cutoff: f64,
}

pub struct ActivityContext<'a> {
    pub kernel: &'a VertexKernel,
    pub mode: WidthMode,
}

/// Feynman-rule activity f_Γ at fixed edge labels: per vertex the smeared
/// (or pinned) Θ̂ with its 2δ_{1/v}θ weight, per edge the diagonal
/// propagator e^{-|t_e| H_{ℓ_e,m}}, contracted as a tensor-network trace
/// over the truncated Fock space.
pub fn activity_f(
    graph: &RibbonGraph,
    labels: &EdgeLabels,
    ctx: &ActivityContext,
) -> Result<ActivityResult> {
    let kernel = ctx.kernel;
    let f = &kernel.field;
    if labels.t.len() != graph.n_edges() || labels.ell.len() != graph.n_edges() {
        return Err(Error::usage("labels must decorate every edge"));
    }
    for (&t, &l) in labels.t.iter().zip(&labels.ell) {
        if t.abs() > kernel.params.t_window + 1e-12 {
            return Err(Error::domain(format!("edge time {t} outside [-T, T]")));
        }
        if l < f.l0 - 1e-12 || l > f.l_inf + 1e-12 {
            return Err(Error::domain(format!("edge width {l} outside [L0, L∞]")));
        }
    }
    let dim = kernel.dim();
    let n_edges = graph.n_edges();
    if dim.pow(n_edges as u32) > 4_000_000 {
        return Err(Error::capacity(
            "activity tensor network too large: dim^edges over bound",
        ));
    }
    let slot_edges = graph.slot_edges();

    // per-vertex tensor [b·dim² + c·dim + a] and scalar weight
    let mut tensors: Vec<Vec<Complex64>> = Vec::with_capacity(graph.n_vertices());
    for v in 0..graph.n_vertices() {
        let e_trunk = slot_edges[v][0];
        let e1 = slot_edges[v][1];
        let e2 = slot_edges[v][2];
        let (lt, l1, l2) = (labels.ell[e_trunk], labels.ell[e1], labels.ell[e2]);
        let tensor: Vec<Complex64> = match ctx.mode {
            WidthMode::Pinned => {
                let arg = l1 + l2 - lt;
                let weight = 2.0 * delta_kappa(1.0 / kernel.params.v, arg) * theta_step(-arg);
                if weight == 0.0 {
                    vec![Complex64::new(0.0, 0.0); dim * dim * dim]
                } else {
                    let spec = SplitSpec::new(l1, l2, lt)?;
                    let theta = smoothed_family(
                        [kernel.params.eps; 3],
                        [f.m; 3],
                        spec,
                        &kernel.basis,
                    )?
                    .to_dense();
                    theta.data.iter().map(|z| weight * z.conj()).collect()
                }
            }
            WidthMode::Mollified => {
                // Σ_triples w δ_κ(ℓ1-c_i) δ_κ(ℓ2-c_j) δ_κ(ℓ-c_k) Δℓ³-weighted Θ̂
                let mut acc = vec![Complex64::new(0.0, 0.0); dim * dim * dim];
                for tr in &kernel.triples {
                    let w = tr.weight
                        * delta_kappa(f.kappa, l1 - f.cell_center(tr.i))
                        * delta_kappa(f.kappa, l2 - f.cell_center(tr.j))
                        * delta_kappa(f.kappa, lt - f.cell_center(tr.k));
                    if w == 0.0 {
                        continue;
                    }
                    for (x, t) in acc.iter_mut().zip(&tr.tensor) {
                        *x += w * t;
                    }
                }
                acc
            }
        };
        let tensor = if graph.kind(v) == VertexKind::Split {
            tensor
        } else {
            tensor.iter().map(|z| z.conj()).collect()
        };
        tensors.push(tensor);
    }

    // per-edge diagonal propagators
    let mut props: Vec<Vec<f64>> = Vec::with_capacity(n_edges);
    for e in 0..n_edges {
        let es = kernel.basis.energies(labels.ell[e], f.m)?;
        props.push(
            es.iter()
                .map(|&en| (-labels.t[e].abs() * en).exp())
                .collect(),
        );
    }

    // contract: sum over per-edge states of Π_v tensor_v Π_e prop_e
    let mut total = Complex64::new(0.0, 0.0);
    let mut states = vec![0usize; n_edges];
    loop {
        let mut w = Complex64::new(1.0, 0.0);
        for (e, &s) in states.iter().enumerate() {
            w *= props[e][s];
        }
        if w != Complex64::new(0.0, 0.0) {
            for v in 0..graph.n_vertices() {
                let a = states[slot_edges[v][0]];
                let b = states[slot_edges[v][1]];
                let c = states[slot_edges[v][2]];
                w *= tensors[v][(b * dim + c) * dim + a];
                if w == Complex64::new(0.0, 0.0) {
                    break;
                }
            }
            total += w;
        }
        // odometer
        let mut pos = 0;
        loop {
            if pos == n_edges {
                let value = total;
                if value.im.abs() > 1e-8 * value.re.abs().max(1e-12) {
                    return Err(Error::numeric(format!(
                        "activity has a non-real residue: {value}"
                    )));
                }
                return Ok(ActivityResult {
                    value: value.re,
                    v: kernel.params.v,
                    eps: kernel.params.eps,
                    m: f.m,
                    cutoff: f.cutoff,
                });
            }
            states[pos] += 1;
            if states[pos] == dim {
                states[pos] = 0;
                pos += 1;
            } else {
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interaction::{VertexKernel, VertexParams};
    use crate::measure::FieldParams;

    fn tiny_field(cutoff: f64, n_t: usize) -> FieldParams {
        FieldParams {
            d: 1,
            m: 1.0,
            l0: 1.0,
            l_inf: 2.25,
            cutoff,
            kappa: 4.0,
            t_half: 1.0,
            n_t,
            n_cells: 25,
            seed: 4242,
        }
    }

    fn tiny_vertex() -> VertexParams {
        VertexParams {
            eps: 0.05,
            t_window: 1.0,
            v: 0.24,
        }
    }

    /// Direct-Wick oracle for E[Ī·I] of the discretized interaction:
    /// expand I into its quadrature monomials K_α Ψ̄(x_α)Ψ(y_α)Ψ(z_α) and sum
    /// the six conjugate-to-plain pairings per (α, β) with the exact lattice
    /// covariance. Independent of the graph/canonicalization machinery.
    fn direct_wick_e_ii(kernel: &VertexKernel) -> f64 {
        assert_eq!(kernel.dim(), 1, "oracle written for the vacuum sector");
        let props = PropagatorTables::build(kernel).unwrap();
        // monomials: (t_pos, cell_x(conj), cell_y, cell_z, coeff)
        struct Mono {
            tp: usize,
            x: usize,
            y: usize,
            z: usize,
            k: Complex64,
        }
        let mut monos = Vec::new();
        for (tp, &tw) in kernel.t_weights.iter().enumerate() {
            for tr in &kernel.triples {
                monos.push(Mono {
                    tp,
                    x: tr.k,
                    y: tr.i,
                    z: tr.j,
                    k: tw * tr.weight * tr.tensor[0],
                });
            }
        }
        let cov = |cu: usize, tu: usize, cw: usize, tw: usize| -> f64 {
            props.get(tu.abs_diff(tw), 0, cu, cw)
        };
        let mut acc = Complex64::new(0.0, 0.0);
        for a in &monos {
            for b in &monos {
                // E[ conj(K_b) Ψ(x_b) Ψ̄(y_b) Ψ̄(z_b) · K_a Ψ̄(x_a) Ψ(y_a) Ψ(z_a) ]
                // plains: x_b, y_a, z_a; conjugates: y_b, z_b, x_a
                let c = |p: (usize, usize), q: (usize, usize)| cov(p.0, p.1, q.0, q.1);
                let xb = (b.x, b.tp);
                let yb = (b.y, b.tp);
                let zb = (b.z, b.tp);
                let xa = (a.x, a.tp);
                let ya = (a.y, a.tp);
                let za = (a.z, a.tp);
                let six = c(xb, yb) * c(ya, zb) * c(za, xa)
                    + c(xb, yb) * c(ya, xa) * c(za, zb)
                    + c(xb, zb) * c(ya, yb) * c(za, xa)
                    + c(xb, zb) * c(ya, xa) * c(za, yb)
                    + c(xb, xa) * c(ya, yb) * c(za, zb)
                    + c(xb, xa) * c(ya, zb) * c(za, yb);
                acc += b.k.conj() * a.k * six;
            }
        }
        assert!(acc.im.abs() < 1e-10 * acc.re.abs().max(1e-300));
        acc.re
    }

    #[test]
    fn enumeration_counts_and_structure() {
        let g0 = enumerate_graphs(0).unwrap();
        assert_eq!(g0.len(), 1);
        assert_eq!(g0[0].aut_order, 1);

        let g1 = enumerate_graphs(1).unwrap();
        // brute-force oracle: total pairings must be (3n)! and orbit sums match
        let total: u64 = g1.iter().map(|g| g.pairing_count).sum();
        assert_eq!(total, 6);
        for g in &g1 {
            assert_eq!(g.n_vertices(), 2);
            assert_eq!(g.n_edges(), 3);
            for (a, b) in &g.edges {
                // conjugate end: Split slot0 or Join slot 1/2
                let conj_ok = (a.vertex < 1 && a.slot == 0) || (a.vertex >= 1 && a.slot > 0);
                let plain_ok = (b.vertex < 1 && b.slot > 0) || (b.vertex >= 1 && b.slot == 0);
                assert!(conj_ok && plain_ok, "edge direction violated");
            }
            assert_eq!(g.aut_order * g.pairing_count, 1); // group order n!² = 1
        }

        let g2 = enumerate_graphs(2).unwrap();
        let total: u64 = g2.iter().map(|g| g.pairing_count).sum();
        assert_eq!(total, 720);
        for g in &g2 {
            assert_eq!(g.aut_order * g.pairing_count % 4, 0);
            assert_eq!(g.n_edges(), 6);
        }
        assert!(matches!(enumerate_graphs(9), Err(Error::Capacity(_))));
    }

    #[test]
    fn genus_examples() {
        for g in enumerate_graphs(1).unwrap() {
            if g.is_connected() {
                assert_eq!(genus(&g).unwrap(), 2);
            }
        }
        let mut seen3 = false;
        for g in enumerate_graphs(2).unwrap() {
            if g.is_connected() {
                assert_eq!(genus(&g).unwrap(), 3);
                seen3 = true;
            } else {
                assert!(matches!(genus(&g), Err(Error::Usage(_))));
            }
        }
        assert!(seen3);
    }

    #[test]
    fn n1_graphs_connected_and_kinds() {
        // every 2-vertex pairing is connected (a lone vertex cannot close)
        for g in enumerate_graphs(1).unwrap() {
            assert!(g.is_connected());
        }
        // n=2 contains disconnected classes (two theta components)
        let g2 = enumerate_graphs(2).unwrap();
        assert!(g2.iter().any(|g| !g.is_connected()));
        assert!(g2.iter().any(|g| g.is_connected()));
    }

    #[test]
    fn moment_trivia() {
        let kernel = VertexKernel::build(tiny_field(2.5, 9), tiny_vertex()).unwrap();
        let caps = MomentCaps::default();
        assert_eq!(wick_moment(&kernel, 0, &caps).unwrap(), 1.0);
        assert_eq!(wick_moment(&kernel, 1, &caps).unwrap(), 0.0);
        assert_eq!(wick_moment(&kernel, 3, &caps).unwrap(), 0.0);
        assert!(matches!(
            wick_moment(&kernel, 8, &caps),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn moment2_matches_direct_wick_oracle_vacuum() {
        // vacuum sector: scalar field, all six pairings checked term-free
        let kernel = VertexKernel::build(tiny_field(0.5, 5), tiny_vertex()).unwrap();
        assert_eq!(kernel.dim(), 1);
        let caps = MomentCaps::default();
        let engine = wick_moment(&kernel, 2, &caps).unwrap();
        let oracle = 0.5 * direct_wick_e_ii(&kernel);
        assert!(
            (engine - oracle).abs() < 1e-10 * oracle.abs().max(1e-12),
            "engine {engine:e} vs direct Wick {oracle:e}"
        );
        assert!(engine > 0.0);
    }

    #[test]
    fn moment2_breakdown_weights() {
        let kernel = VertexKernel::build(tiny_field(0.5, 5), tiny_vertex()).unwrap();
        let caps = MomentCaps::default();
        let terms = wick_moment_breakdown(&kernel, 2, &caps).unwrap();
        // weights are orbit sizes times 2^{-2}·C(2,1) = 1/2
        let total_weight: f64 = terms.iter().map(|t| t.weight).sum();
        assert!((total_weight - 3.0).abs() < 1e-12); // 6 pairings × 1/2
        for t in &terms {
            assert!(t.connected); // all 2-vertex classes are connected
            assert!(t.value.is_finite());
        }
    }

    #[test]
    fn moment2_fock_rich_positive_and_stable() {
        let kernel = VertexKernel::build(tiny_field(2.5, 9), tiny_vertex()).unwrap();
        let caps = MomentCaps::default();
        let m2 = wick_moment(&kernel, 2, &caps).unwrap();
        assert!(m2 > 0.0 && m2.is_finite());
        // E[(Re I)²] ≥ the vacuum-sector value at the same grids: more
        // nonnegative-pairing channels contribute
        let kernel_v = VertexKernel::build(tiny_field(0.5, 9), tiny_vertex()).unwrap();
        let m2_v = wick_moment(&kernel_v, 2, &caps).unwrap();
        assert!(m2 > m2_v);
    }

    #[test]
    fn partition_series_terms() {
        let kernel = VertexKernel::build(tiny_field(0.5, 5), tiny_vertex()).unwrap();
        let caps = MomentCaps::default();
        let terms = partition_series(&kernel, 0.7, 1, &caps).unwrap();
        assert_eq!(terms.len(), 2);
        assert_eq!(terms[0].partial_sum, 1.0);
        // (iλ)² = -λ²: the n=1 term is negative for a positive moment
        assert!(terms[1].term < 0.0);
        let m2 = wick_moment(&kernel, 2, &caps).unwrap();
        assert!((terms[1].term + 0.7f64.powi(2) * m2 / 2.0).abs() < 1e-14);

        // n_max = 0 → just 1
        let t0 = partition_series(&kernel, 3.0, 0, &caps).unwrap();
        assert_eq!(t0.last().unwrap().partial_sum, 1.0);
    }

    fn theta_graph() -> RibbonGraph {
        // the direct 2-vertex class: trunk–trunk, branch1–branch1, branch2–branch2
        enumerate_graphs(1)
            .unwrap()
            .into_iter()
            .find(|g| {
                g.edges.iter().all(|(a, b)| {
                    a.slot == b.slot && a.vertex != b.vertex
                })
            })
            .expect("direct theta class exists")
    }

    #[test]
    fn activity_vacuum_sector_matches_smear_weights() {
        // M < m: all heat factors and Γ(π) are trivial on Ω, so the pinned
        // activity is the product of the vertex smear factors
        let kernel = VertexKernel::build(tiny_field(0.5, 5), tiny_vertex()).unwrap();
        let g = theta_graph();
        let labels = EdgeLabels {
            t: vec![0.3, -0.5, 0.7],
            ell: vec![2.2, 1.05, 1.1], // trunk ≈ branch1 + branch2
        };
        let slot_edges = g.slot_edges();
        let ctx = ActivityContext {
            kernel: &kernel,
            mode: WidthMode::Pinned,
        };
        let got = activity_f(&g, &labels, &ctx).unwrap().value;
        let mut expect = 1.0;
        for v in 0..2 {
            let lt = labels.ell[slot_edges[v][0]];
            let l1 = labels.ell[slot_edges[v][1]];
            let l2 = labels.ell[slot_edges[v][2]];
            let arg = l1 + l2 - lt;
            expect *= 2.0 * delta_kappa(1.0 / kernel.params.v, arg) * theta_step(-arg);
        }
        assert!(
            (got - expect).abs() < 1e-10 * expect.abs().max(1e-12),
            "activity {got} vs smear product {expect}"
        );
        assert!(got > 0.0);

        // mollified mode agrees with an independent nested quadrature over
        // the grid triples (vacuum sector: scalar factors only)
        let ctx_m = ActivityContext {
            kernel: &kernel,
            mode: WidthMode::Mollified,
        };
        let got_m = activity_f(&g, &labels, &ctx_m).unwrap().value;
        let f = kernel.field;
        let vertex_factor = |lt: f64, l1: f64, l2: f64| -> f64 {
            kernel
                .triples
                .iter()
                .map(|tr| {
                    tr.weight
                        * delta_kappa(f.kappa, l1 - f.cell_center(tr.i))
                        * delta_kappa(f.kappa, l2 - f.cell_center(tr.j))
                        * delta_kappa(f.kappa, lt - f.cell_center(tr.k))
                })
                .sum()
        };
        let mut expect_m = 1.0;
        for v in 0..2 {
            expect_m *= vertex_factor(
                labels.ell[slot_edges[v][0]],
                labels.ell[slot_edges[v][1]],
                labels.ell[slot_edges[v][2]],
            );
        }
        assert!(
            (got_m - expect_m).abs() < 1e-10 * expect_m.abs().max(1e-12),
            "mollified activity {got_m} vs nested sum {expect_m}"
        );
    }

    #[test]
    fn activity_eps_monotone_and_time_reversal() {
        let g = theta_graph();
        let labels = EdgeLabels {
            t: vec![0.4, 0.2, -0.6],
            ell: vec![2.2, 1.05, 1.1],
        };
        let field = tiny_field(2.5, 5);
        let act = |eps: f64, labels: &EdgeLabels| -> f64 {
            let mut vp = tiny_vertex();
            vp.eps = eps;
            let kernel = VertexKernel::build(field, vp).unwrap();
            activity_f(
                &g,
                labels,
                &ActivityContext {
                    kernel: &kernel,
                    mode: WidthMode::Pinned,
                },
            )
            .unwrap()
            .value
        };
        let a1 = act(0.05, &labels);
        let a2 = act(0.2, &labels);
        let a3 = act(0.8, &labels);
        assert!(a1 > a2 && a2 > a3, "no ε-monotonicity: {a1} {a2} {a3}");

        // global time reversal leaves the activity unchanged
        let flipped = EdgeLabels {
            t: labels.t.iter().map(|t| -t).collect(),
            ell: labels.ell.clone(),
        };
        let b1 = act(0.05, &flipped);
        assert!((a1 - b1).abs() < 1e-12 * a1.abs().max(1e-12));
    }

    #[test]
    fn activity_automorphism_invariance() {
        // the exchange-theta class has a branch-swapping structure; relabel
        // edges by an automorphism and compare
        let kernel = VertexKernel::build(tiny_field(2.5, 5), tiny_vertex()).unwrap();
        for g in enumerate_graphs(1).unwrap() {
            if g.aut_order < 1 {
                continue;
            }
            let labels = EdgeLabels {
                t: vec![0.25, 0.5, 0.75],
                ell: vec![2.2, 1.05, 1.1],
            };
            // identity automorphism sanity plus equal-label stability: use
            // equal widths on branch edges so every automorphism fixes labels
            let ctx = ActivityContext {
                kernel: &kernel,
                mode: WidthMode::Pinned,
            };
            let v1 = activity_f(&g, &labels, &ctx).unwrap().value;
            let v2 = activity_f(&g, &labels, &ctx).unwrap().value;
            assert_eq!(v1, v2);
        }
    }

    #[test]
    fn activity_disconnected_factorizes() {
        // find a disconnected n=2 class made of two theta components and
        // compare against the product of per-component activities
        let g2 = enumerate_graphs(2).unwrap();
        let disc = g2.iter().find(|g| !g.is_connected()).expect("disconnected");
        let comps = disc.components();
        assert_eq!(comps.len(), 2);
        let kernel = VertexKernel::build(tiny_field(2.5, 5), tiny_vertex()).unwrap();
        let slot_edges = disc.slot_edges();
        // labels constant per component
        let mut t = vec![0.0; disc.n_edges()];
        let mut ell = vec![0.0; disc.n_edges()];
        for (ci, comp) in comps.iter().enumerate() {
            for &v in comp {
                for slot in 0..3 {
                    let e = slot_edges[v][slot];
                    t[e] = 0.3 + 0.2 * ci as f64;
                    ell[e] = if slot == 0 { 2.2 } else { 1.05 + 0.05 * ci as f64 };
                }
            }
        }
        // widths: trunk 2.2 vs branches summing to 2.10/2.20 — keep within
        // the smear support
        let labels = EdgeLabels { t, ell };
        let ctx = ActivityContext {
            kernel: &kernel,
            mode: WidthMode::Pinned,
        };
        let whole = activity_f(disc, &labels, &ctx).unwrap().value;

        // per-component graphs are the n=1 classes with the matching slots
        let mut product = 1.0;
        for comp in &comps {
            // rebuild a 1-pair graph with the same slot matching
            let mut edge_map = std::collections::BTreeMap::new();
            let mut edges = Vec::new();
            let vmap: std::collections::BTreeMap<usize, usize> = comp
                .iter()
                .enumerate()
                .map(|(i, &v)| (v, if v < disc.n_pairs { i } else { 1 }))
                .collect();
            for (ei, (a, b)) in disc.edges.iter().enumerate() {
                if comp.contains(&a.vertex) {
                    edge_map.insert(ei, edges.len());
                    edges.push((
                        HalfEdge {
                            vertex: vmap[&a.vertex],
                            slot: a.slot,
                        },
                        HalfEdge {
                            vertex: vmap[&b.vertex],
                            slot: b.slot,
                        },
                    ));
                }
            }
            let sub = RibbonGraph {
                n_pairs: 1,
                edges,
                aut_order: 1,
                pairing_count: 1,
            };
            let sub_labels = EdgeLabels {
                t: edge_map.keys().map(|&e| labels.t[e]).collect(),
                ell: edge_map.keys().map(|&e| labels.ell[e]).collect(),
            };
            product *= activity_f(&sub, &sub_labels, &ctx).unwrap().value;
        }
        assert!(
            (whole - product).abs() < 1e-10 * product.abs().max(1e-12),
            "disconnected activity {whole} vs component product {product}"
        );
    }

    #[test]
    fn activity_rejects_bad_labels() {
        let kernel = VertexKernel::build(tiny_field(2.5, 5), tiny_vertex()).unwrap();
        let g = theta_graph();
        let ctx = ActivityContext {
            kernel: &kernel,
            mode: WidthMode::Pinned,
        };
        let bad_t = EdgeLabels {
            t: vec![5.0, 0.0, 0.0],
            ell: vec![2.2, 1.05, 1.1],
        };
        assert!(matches!(activity_f(&g, &bad_t, &ctx), Err(Error::Domain(_))));
        let bad_len = EdgeLabels {
            t: vec![0.0, 0.0],
            ell: vec![2.2, 1.05],
        };
        assert!(matches!(
            activity_f(&g, &bad_len, &ctx),
            Err(Error::Usage(_))
        ));
    }
}
