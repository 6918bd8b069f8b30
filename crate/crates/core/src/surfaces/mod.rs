//! Glued flat surfaces with conical points, their spectra, and determinants.
//!
//! Each vertex of a trivalent graph becomes a plumbing fixture: three flat
//! cylinders of widths ℓi = ℓj + ℓk and common length ε. The wide cylinder's
//! junction circle is subdivided into two arcs that glue to the narrow
//! cylinders' boundary circles; the two subdivision points are identified to
//! a single point (light-cone convention), producing one conical point of
//! total angle 4π per vertex: π from each side of the wide boundary plus π
//! from each narrow cylinder. Each edge becomes a t_e × ℓ_e flat tube.
//!
//! Identifying the subdivision points is forced, not a choice: a closed
//! narrow cylinder can only glue isometrically onto a closed circle, and the
//! arc becomes a circle exactly when its endpoints coincide. The spec's
//! alternative reading (two 3π points) would need an auxiliary slit
//! convention that the construction does not define, so `build_surface`
//! rejects it explicitly.
//!
//! Meshes are structured quad grids split into triangles, with per-triangle
//! isometric chart coordinates (a global node can sit at several chart
//! positions — the cone point does). FEM assembly only ever reads the
//! per-triangle geometry.

pub mod conjecture;
pub mod fem;
pub mod zeta;

use crate::error::{Error, Result};
use crate::graphs::{EdgeLabels, RibbonGraph};
use std::collections::BTreeMap;
use std::io::Write;

/// Triangulated flat surface with marked conical points.
#[derive(Clone, Debug)]
pub struct SurfaceMesh {
    pub n_nodes: usize,
    pub tris: Vec<[usize; 3]>,
    /// Per-triangle corner coordinates in a local isometric chart.
    pub tri_coords: Vec<[[f64; 2]; 3]>,
    /// Node ids of conical points, one per graph vertex (target angle 4π).
    pub cone_nodes: Vec<usize>,
    pub h: f64,
}

impl SurfaceMesh {
    pub fn n_triangles(&self) -> usize {
        self.tris.len()
    }

    /// V − E + F with E counted from the undirected edge set.
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = std::collections::BTreeSet::new();
        for t in &self.tris {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        self.n_nodes as i64 - edges.len() as i64 + self.tris.len() as i64
    }

    pub fn total_area(&self) -> f64 {
        self.tri_coords.iter().map(|c| triangle_area(c)).sum()
    }

    /// Interior angle sums per node, from per-triangle corner angles.
    pub fn angle_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_nodes];
        for (t, c) in self.tris.iter().zip(&self.tri_coords) {
            for i in 0..3 {
                let p = c[i];
                let q = c[(i + 1) % 3];
                let r = c[(i + 2) % 3];
                let u = [q[0] - p[0], q[1] - p[1]];
                let w = [r[0] - p[0], r[1] - p[1]];
                let dot = u[0] * w[0] + u[1] * w[1];
                let cross = u[0] * w[1] - u[1] * w[0];
                sums[t[i]] += cross.abs().atan2(dot);
            }
        }
        sums
    }

    /// Closedness, orientability, and angle-sum validation.
    pub fn validate(&self, angle_tol: f64) -> Result<()> {
        // every undirected edge in exactly two triangles, with opposite
        // directed traversals (orientability)
        let mut directed = BTreeMap::new();
        for t in &self.tris {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *directed.entry((a, b)).or_insert(0usize) += 1;
            }
        }
        for (&(a, b), &cnt) in &directed {
            if cnt != 1 {
                return Err(Error::numeric(format!(
                    "directed edge ({a},{b}) used {cnt} times: non-manifold"
                )));
            }
            if directed.get(&(b, a)) != Some(&1) {
                return Err(Error::numeric(format!(
                    "edge ({a},{b}) lacks an oppositely oriented partner: not closed/oriented"
                )));
            }
        }
        // angle sums: 2π everywhere except 4π at cone points
        let sums = self.angle_sums();
        let cone: std::collections::BTreeSet<usize> = self.cone_nodes.iter().copied().collect();
        for (n, &s) in sums.iter().enumerate() {
            let target = if cone.contains(&n) {
                2.0 * std::f64::consts::TAU
            } else {
                std::f64::consts::TAU
            };
            if (s - target).abs() > angle_tol {
                return Err(Error::numeric(format!(
                    "node {n}: angle sum {s} differs from {target}"
                )));
            }
        }
        Ok(())
    }

    /// Documented ASCII export: node/triangle counts, per-triangle ids and
    /// chart coordinates, cone-point section.
    pub fn export_ascii(&self, w: &mut dyn Write) -> Result<()> {
        let io = |e: std::io::Error| Error::usage(format!("mesh write failed: {e}"));
        writeln!(w, "surface-mesh v1").map_err(io)?;
        writeln!(w, "nodes {}", self.n_nodes).map_err(io)?;
        writeln!(w, "triangles {}", self.tris.len()).map_err(io)?;
        for (t, c) in self.tris.iter().zip(&self.tri_coords) {
            writeln!(
                w,
                "t {} {} {} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e}",
                t[0], t[1], t[2], c[0][0], c[0][1], c[1][0], c[1][1], c[2][0], c[2][1]
            )
            .map_err(io)?;
        }
        writeln!(w, "cones {}", self.cone_nodes.len()).map_err(io)?;
        for c in &self.cone_nodes {
            writeln!(w, "c {c}").map_err(io)?;
        }
        Ok(())
    }
}

pub fn triangle_area(c: &[[f64; 2]; 3]) -> f64 {
    0.5 * ((c[1][0] - c[0][0]) * (c[2][1] - c[0][1])
        - (c[2][0] - c[0][0]) * (c[1][1] - c[0][1]))
        .abs()
}

/// Junction conventions: only the point-identified (4π) one is realizable
/// by circle-to-circle gluings of right cylinders.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JunctionConvention {
    Mandelstam,
    /// Two 3π points; not constructible without an extra slit convention.
    SplitPoints,
}

#[derive(Clone, Debug)]
pub struct BuildOptions {
    /// Target mesh spacing.
    pub h: f64,
    /// Fixture cylinder length ε.
    pub fixture_len: f64,
    /// Optional per-edge twists in [0, 2π), rounded to whole cells.
    pub twists: Option<Vec<f64>>,
    pub junction: JunctionConvention,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            h: 0.1,
            fixture_len: 0.2,
            twists: None,
            junction: JunctionConvention::Mandelstam,
        }
    }
}

// --- internal mesh builder -------------------------------------------------

struct Builder {
    n_nodes: usize,
    tris: Vec<[usize; 3]>,
    tri_coords: Vec<[[f64; 2]; 3]>,
}

/// A traversal of a gluing circle: node ids with strictly increasing
/// arc-length positions (pos[0] = 0), total width `width`.
#[derive(Clone, Debug)]
struct CircleView {
    nodes: Vec<usize>,
    pos: Vec<f64>,
    width: f64,
}

impl CircleView {
    fn uniform(nodes: Vec<usize>, width: f64) -> Self {
        let n = nodes.len();
        let pos = (0..n).map(|i| width * i as f64 / n as f64).collect();
        CircleView { nodes, pos, width }
    }

    /// Rotate the start point by `cells` (twist in whole cells).
    fn rotated(&self, cells: usize) -> CircleView {
        let n = self.nodes.len();
        let k = cells % n;
        if k == 0 {
            return self.clone();
        }
        let mut nodes = Vec::with_capacity(n);
        let mut pos = Vec::with_capacity(n);
        let base = self.pos[k];
        for i in 0..n {
            let j = (k + i) % n;
            nodes.push(self.nodes[j]);
            let p = self.pos[j] - base;
            pos.push(if p < -1e-12 { p + self.width } else { p });
        }
        CircleView {
            nodes,
            pos,
            width: self.width,
        }
    }
}

impl Builder {
    fn new() -> Self {
        Builder {
            n_nodes: 0,
            tris: Vec::new(),
            tri_coords: Vec::new(),
        }
    }

    fn fresh(&mut self) -> usize {
        let id = self.n_nodes;
        self.n_nodes += 1;
        id
    }

    fn fresh_circle(&mut self, n: usize, width: f64) -> CircleView {
        let nodes = (0..n).map(|_| self.fresh()).collect();
        CircleView::uniform(nodes, width)
    }

    /// Add a flat cylinder of the given length between two equal-count
    /// circle traversals. Row 0 = bottom (traversed forward by the triangle
    /// convention), row R = top (traversed backward), interior rows fresh,
    /// column positions interpolated linearly (graded flat quads).
    fn add_cylinder(&mut self, bottom: &CircleView, top: &CircleView, length: f64, rows: usize) {
        let n = bottom.nodes.len();
        assert_eq!(n, top.nodes.len(), "circle node counts must match");
        assert!((bottom.width - top.width).abs() < 1e-9 * bottom.width.max(1.0));
        let rows = rows.max(1);
        // node grid and x-positions per row
        let mut grid: Vec<Vec<usize>> = Vec::with_capacity(rows + 1);
        let mut xpos: Vec<Vec<f64>> = Vec::with_capacity(rows + 1);
        for r in 0..=rows {
            let frac = r as f64 / rows as f64;
            if r == 0 {
                grid.push(bottom.nodes.clone());
                xpos.push(bottom.pos.clone());
            } else if r == rows {
                grid.push(top.nodes.clone());
                xpos.push(top.pos.clone());
            } else {
                grid.push((0..n).map(|_| self.fresh()).collect());
                xpos.push(
                    (0..n)
                        .map(|c| bottom.pos[c] * (1.0 - frac) + top.pos[c] * frac)
                        .collect(),
                );
            }
        }
        let width = bottom.width;
        let dy = length / rows as f64;
        for r in 0..rows {
            let y0 = r as f64 * dy;
            let y1 = (r + 1) as f64 * dy;
            for c in 0..n {
                let c1 = (c + 1) % n;
                // unwrap the seam column
                let x00 = xpos[r][c];
                let x01 = if c1 == 0 { width + xpos[r][0] } else { xpos[r][c1] };
                let x10 = xpos[r + 1][c];
                let x11 = if c1 == 0 {
                    width + xpos[r + 1][0]
                } else {
                    xpos[r + 1][c1]
                };
                let n00 = grid[r][c];
                let n01 = grid[r][c1];
                let n10 = grid[r + 1][c];
                let n11 = grid[r + 1][c1];
                self.tris.push([n00, n01, n11]);
                self.tri_coords
                    .push([[x00, y0], [x01, y0], [x11, y1]]);
                self.tris.push([n00, n11, n10]);
                self.tri_coords
                    .push([[x00, y0], [x11, y1], [x10, y1]]);
            }
        }
    }
}

/// Flat torus of circumferences `l` (x) and `beta` (y) on an n_x × n_y
/// periodic grid; χ = 0, no cone points.
pub fn flat_torus_mesh(l: f64, beta: f64, n_x: usize, n_y: usize) -> Result<SurfaceMesh> {
    if l <= 0.0 || beta <= 0.0 || n_x < 3 || n_y < 3 {
        return Err(Error::config("torus needs positive sides and ≥ 3 divisions"));
    }
    let mut b = Builder::new();
    let grid: Vec<Vec<usize>> = (0..n_y).map(|_| (0..n_x).map(|_| b.fresh()).collect()).collect();
    let dx = l / n_x as f64;
    let dy = beta / n_y as f64;
    for r in 0..n_y {
        let r1 = (r + 1) % n_y;
        for c in 0..n_x {
            let c1 = (c + 1) % n_x;
            let (x0, x1) = (c as f64 * dx, (c + 1) as f64 * dx);
            let (y0, y1) = (r as f64 * dy, (r + 1) as f64 * dy);
            let n00 = grid[r][c];
            let n01 = grid[r][c1];
            let n10 = grid[r1][c];
            let n11 = grid[r1][c1];
            b.tris.push([n00, n01, n11]);
            b.tri_coords.push([[x0, y0], [x1, y0], [x1, y1]]);
            b.tris.push([n00, n11, n10]);
            b.tri_coords.push([[x0, y0], [x1, y1], [x0, y1]]);
        }
    }
    let mesh = SurfaceMesh {
        n_nodes: b.n_nodes,
        tris: b.tris,
        tri_coords: b.tri_coords,
        cone_nodes: Vec::new(),
        h: dx.max(dy),
    };
    mesh.validate(1e-9)?;
    Ok(mesh)
}

/// Same torus, triangulated along the other diagonal (isometric surface,
/// different mesh) for invariance checks.
pub fn flat_torus_mesh_alt(l: f64, beta: f64, n_x: usize, n_y: usize) -> Result<SurfaceMesh> {
    let mut m = flat_torus_mesh(l, beta, n_x, n_y)?;
    let mut tris = Vec::new();
    let mut coords = Vec::new();
    for pair in m.tris.chunks(2).zip(m.tri_coords.chunks(2)) {
        let ([t1, t2], [c1, c2]) = pair else { unreachable!() };
        // quad corners: t1 = [n00, n01, n11], t2 = [n00, n11, n10]
        let (n00, n01, n11, n10) = (t1[0], t1[1], t1[2], t2[2]);
        let (p00, p01, p11, p10) = (c1[0], c1[1], c1[2], c2[2]);
        tris.push([n01, n11, n10]);
        coords.push([p01, p11, p10]);
        tris.push([n01, n10, n00]);
        coords.push([p01, p10, p00]);
    }
    m.tris = tris;
    m.tri_coords = coords;
    m.validate(1e-9)?;
    Ok(m)
}

/// Build the glued surface Σ(Γ, {t_e}, {ℓ_e}) with fixture length ε.
///
/// Tube lengths are the t_e (strictly positive required); widths must
/// satisfy ℓ_trunk = ℓ_branch1 + ℓ_branch2 at every vertex.
pub fn build_surface(
    graph: &RibbonGraph,
    labels: &EdgeLabels,
    opts: &BuildOptions,
) -> Result<SurfaceMesh> {
    if opts.junction == JunctionConvention::SplitPoints {
        return Err(Error::config(
            "the two-3π-point junction needs a slit convention that circle-to-circle \
             gluings of right cylinders cannot realize; use the point-identified junction",
        ));
    }
    if !graph.is_connected() {
        return Err(Error::usage("build_surface needs a connected graph"));
    }
    let ne = graph.n_edges();
    if labels.t.len() != ne || labels.ell.len() != ne {
        return Err(Error::usage("labels must decorate every edge"));
    }
    for (e, (&t, &w)) in labels.t.iter().zip(&labels.ell).enumerate() {
        if t <= 0.0 || !t.is_finite() {
            return Err(Error::domain(format!(
                "edge {e}: tube length must be > 0, got {t}"
            )));
        }
        if w <= 0.0 || !w.is_finite() {
            return Err(Error::domain(format!(
                "edge {e}: width must be > 0, got {w}"
            )));
        }
    }
    if !(opts.h > 0.0 && opts.fixture_len > 0.0) {
        return Err(Error::config("mesh spacing and fixture length must be > 0"));
    }
    let slot_edges = graph.slot_edges();
    for v in 0..graph.n_vertices() {
        let w0 = labels.ell[slot_edges[v][0]];
        let w1 = labels.ell[slot_edges[v][1]];
        let w2 = labels.ell[slot_edges[v][2]];
        if (w0 - w1 - w2).abs() > 1e-9 * w0.max(1.0) {
            return Err(Error::constraint(format!(
                "vertex {v}: widths violate ℓ_trunk = ℓ_branch1 + ℓ_branch2 \
                 ({w0} vs {w1} + {w2})"
            )));
        }
    }

    // circumferential node counts: branch counts from h, trunk counts summed
    let mut counts: Vec<usize> = labels
        .ell
        .iter()
        .map(|&w| ((w / opts.h).round() as usize).max(3))
        .collect();
    let mut stable = false;
    for _ in 0..200 {
        stable = true;
        for v in 0..graph.n_vertices() {
            let want = counts[slot_edges[v][1]] + counts[slot_edges[v][2]];
            if counts[slot_edges[v][0]] != want {
                counts[slot_edges[v][0]] = want;
                stable = false;
            }
        }
        if stable {
            break;
        }
    }
    if !stable {
        return Err(Error::constraint(
            "circumferential node counts do not stabilize (cyclic trunk constraints)",
        ));
    }

    let mut b = Builder::new();

    // interface circles per (edge, end): end 0 at the lower vertex id
    let mut interface: Vec<[CircleView; 2]> = Vec::with_capacity(ne);
    for e in 0..ne {
        let c0 = b.fresh_circle(counts[e], labels.ell[e]);
        let c1 = b.fresh_circle(counts[e], labels.ell[e]);
        interface.push([c0, c1]);
    }
    // which end of e sits at vertex v (parallel edges distinguished by slot)
    let end_at = |e: usize, v: usize, slot: u8| -> usize {
        let (a, bnd) = &graph.edges[e];
        if a.vertex == v && a.slot == slot {
            0
        } else {
            debug_assert!(bnd.vertex == v && bnd.slot == slot);
            1
        }
    };

    // junction circles: composite of the two branch arcs, subdivision points
    // identified to one cone node
    let mut cone_nodes = Vec::with_capacity(graph.n_vertices());
    let mut junction: Vec<CircleView> = Vec::with_capacity(graph.n_vertices());
    for v in 0..graph.n_vertices() {
        let e1 = slot_edges[v][1];
        let e2 = slot_edges[v][2];
        let (w1, w2) = (labels.ell[e1], labels.ell[e2]);
        let (n1, n2) = (counts[e1], counts[e2]);
        let p = b.fresh();
        cone_nodes.push(p);
        let mut nodes = vec![p];
        let mut pos = vec![0.0];
        for i in 1..n1 {
            nodes.push(b.fresh());
            pos.push(w1 * i as f64 / n1 as f64);
        }
        nodes.push(p); // second subdivision point: the same node
        pos.push(w1);
        for i in 1..n2 {
            nodes.push(b.fresh());
            pos.push(w1 + w2 * i as f64 / n2 as f64);
        }
        junction.push(CircleView {
            nodes,
            pos,
            width: w1 + w2,
        });
    }
    // arc sub-views of a junction circle
    let arc_view = |j: &CircleView, from: usize, len: usize, width: f64| -> CircleView {
        let mut nodes = Vec::with_capacity(len);
        let mut pos = Vec::with_capacity(len);
        let base = j.pos[from];
        for i in 0..len {
            nodes.push(j.nodes[from + i]);
            pos.push(j.pos[from + i] - base);
        }
        CircleView { nodes, pos, width }
    };

    // Gluing roles: a cylinder patch traverses its bottom circle forward and
    // its top circle backward, and every gluing circle needs exactly one
    // traversal of each direction. Collect the patches abstractly, then
    // 2-color "flip" flags (flip = swap bottom/top) over the constraint
    // graph; a consistent coloring exists because the surface is orientable.
    let fix_rows = ((opts.fixture_len / opts.h).round() as usize).max(2);
    let twist_cells = |e: usize| -> usize {
        match &opts.twists {
            None => 0,
            Some(tw) => {
                let frac = tw[e] / std::f64::consts::TAU;
                ((frac * counts[e] as f64).round() as i64).rem_euclid(counts[e] as i64) as usize
            }
        }
    };

    // circle ids: 0..2ne interfaces (e, end), then 2ne..2ne+2n junctions
    let iface_id = |e: usize, end: usize| 2 * e + end;
    let junct_id = |v: usize| 2 * ne + v;

    struct Patch {
        bottom: usize,
        top: usize,
        length: f64,
        rows: usize,
        /// twist cells applied to the top circle
        twist: usize,
        /// which arc of a junction circle this patch touches (slot 1 or 2),
        /// when the circle id is a junction
        arc_of: Option<(usize, u8)>,
    }
    let mut patches: Vec<Patch> = Vec::new();
    for e in 0..ne {
        let rows = ((labels.t[e] / opts.h).round() as usize).max(2);
        patches.push(Patch {
            bottom: iface_id(e, 0),
            top: iface_id(e, 1),
            length: labels.t[e],
            rows,
            twist: twist_cells(e),
            arc_of: None,
        });
    }
    for v in 0..graph.n_vertices() {
        let e0 = slot_edges[v][0];
        let t_end = end_at(e0, v, 0);
        patches.push(Patch {
            bottom: junct_id(v),
            top: iface_id(e0, t_end),
            length: opts.fixture_len,
            rows: fix_rows,
            twist: 0,
            arc_of: None,
        });
        for slot in [1u8, 2u8] {
            let e = slot_edges[v][slot as usize];
            let end = end_at(e, v, slot);
            patches.push(Patch {
                bottom: iface_id(e, end),
                top: junct_id(v),
                length: opts.fixture_len,
                rows: fix_rows,
                twist: 0,
                arc_of: Some((v, slot)),
            });
        }
    }

    // per-circle users: (patch index, is_base_bottom); junction circles list
    // the trunk cylinder and both arc patches
    let n_circles = 2 * ne + graph.n_vertices();
    let mut users: Vec<Vec<(usize, bool)>> = vec![Vec::new(); n_circles];
    for (pi, p) in patches.iter().enumerate() {
        users[p.bottom].push((pi, true));
        users[p.top].push((pi, false));
    }
    // constraints: for interfaces, the two users must traverse oppositely;
    // for junctions, the trunk must oppose each arc patch
    let mut adj: Vec<Vec<(usize, bool)>> = vec![Vec::new(); patches.len()];
    // (neighbor, must_differ_in_direction): direction of p on c is
    // forward iff is_bottom(p,c) XOR flip_p
    let add_constraint =
        |adj: &mut Vec<Vec<(usize, bool)>>, a: (usize, bool), bu: (usize, bool)| {
            // forward_a ≠ forward_b  ⟺  (bot_a ⊕ f_a) ≠ (bot_b ⊕ f_b)
            // ⟺ f_a ⊕ f_b = ¬(bot_a ⊕ bot_b)
            let must_differ = a.1 == bu.1;
            adj[a.0].push((bu.0, must_differ));
            adj[bu.0].push((a.0, must_differ));
        };
    for c in 0..n_circles {
        match users[c].len() {
            2 => add_constraint(&mut adj, users[c][0], users[c][1]),
            3 => {
                // junction: identify the trunk (the patch without arc_of)
                let trunk = *users[c]
                    .iter()
                    .find(|(pi, _)| patches[*pi].arc_of.is_none())
                    .expect("trunk patch on junction");
                for &u in users[c].iter().filter(|(pi, _)| patches[*pi].arc_of.is_some()) {
                    add_constraint(&mut adj, trunk, u);
                }
            }
            k => {
                return Err(Error::numeric(format!(
                    "gluing circle {c} has {k} users; expected 2 or 3"
                )))
            }
        }
    }
    // BFS 2-coloring of flips
    let mut flip = vec![None::<bool>; patches.len()];
    for start in 0..patches.len() {
        if flip[start].is_some() {
            continue;
        }
        flip[start] = Some(false);
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            let fp = flip[p].unwrap();
            for &(q, differ) in &adj[p] {
                let want = fp ^ differ;
                match flip[q] {
                    None => {
                        flip[q] = Some(want);
                        queue.push_back(q);
                    }
                    Some(fq) if fq != want => {
                        return Err(Error::numeric(
                            "gluing orientation constraints are inconsistent",
                        ))
                    }
                    _ => {}
                }
            }
        }
    }

    // emit geometry
    let view_of = |c: usize| -> CircleView {
        if c < 2 * ne {
            interface[c / 2][c % 2].clone()
        } else {
            junction[c - 2 * ne].clone()
        }
    };
    for (pi, p) in patches.iter().enumerate() {
        let f = flip[pi].unwrap();
        let (bot_c, top_c) = if f { (p.top, p.bottom) } else { (p.bottom, p.top) };
        let mk = |c: usize| -> CircleView {
            match p.arc_of {
                Some((v, slot)) if c == junct_id(v) => {
                    let e1 = slot_edges[v][1];
                    let n1 = counts[e1];
                    if slot == 1 {
                        arc_view(&junction[v], 0, n1, labels.ell[e1])
                    } else {
                        let e2 = slot_edges[v][2];
                        arc_view(&junction[v], n1, counts[e2], labels.ell[e2])
                    }
                }
                _ => view_of(c),
            }
        };
        let bottom = mk(bot_c);
        let mut top = mk(top_c);
        if p.twist != 0 {
            top = top.rotated(p.twist);
        }
        b.add_cylinder(&bottom, &top, p.length, p.rows);
    }

    let mesh = SurfaceMesh {
        n_nodes: b.n_nodes,
        tris: b.tris,
        tri_coords: b.tri_coords,
        cone_nodes,
        h: opts.h,
    };
    mesh.validate(1e-7)?;
    Ok(mesh)
}
