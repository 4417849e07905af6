//! Trimming curves, boundary layers, element classification, cut-cell tiling
//! and interface segmentation.
//!
//! All curves live in a parametric plane and are parameterized over `t ∈ [0, 1]`.
//! The active region lies on the left of every trimming curve.

use crate::bspline::{l2_project_edge, KnotVector};
use crate::error::{IbcmError, Result};
use crate::gauss;
use crate::geometry::{PlanarJet, PlanarMap};
use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;
use std::fmt::Debug;
use std::sync::Arc;

pub type P2 = [f64; 2];
pub type Rect = [[f64; 2]; 2];

#[inline]
fn cross2(a: P2, b: P2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}
#[inline]
fn sub2(a: P2, b: P2) -> P2 {
    [a[0] - b[0], a[1] - b[1]]
}
#[inline]
fn dist2(a: P2, b: P2) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Planar curve `t ↦ ξ(t)`, `t ∈ [0, 1]`. Closed curves repeat with period 1.
pub trait TrimCurve: Send + Sync + Debug {
    /// Value and derivatives `d^k ξ / dt^k` for `k ≤ 3`.
    fn eval(&self, t: f64) -> [P2; 4];
    fn is_closed(&self) -> bool;
    /// Parameters of tangent discontinuities (polygon corners).
    fn kinks(&self) -> Vec<f64> {
        Vec::new()
    }
    fn point(&self, t: f64) -> P2 {
        self.eval(t)[0]
    }
}

/// Elliptic arc `c + R(rot) (r1 cos φ, r2 sin φ)` with `φ = start + sweep t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipse {
    pub center: P2,
    pub radii: P2,
    pub rotation: f64,
    pub start: f64,
    pub sweep: f64,
}

impl Ellipse {
    /// Full circle; `clockwise` puts the active region outside.
    pub fn circle(center: P2, radius: f64, clockwise: bool) -> Self {
        let sweep = if clockwise { -2.0 * PI } else { 2.0 * PI };
        Self { center, radii: [radius, radius], rotation: 0.0, start: 0.0, sweep }
    }

    pub fn arc(center: P2, radius: f64, from: f64, to: f64) -> Self {
        Self { center, radii: [radius, radius], rotation: 0.0, start: from, sweep: to - from }
    }

    pub fn is_circle(&self) -> bool {
        self.radii[0] == self.radii[1]
    }
}

impl TrimCurve for Ellipse {
    fn eval(&self, t: f64) -> [P2; 4] {
        let phi = self.start + self.sweep * t;
        let (s, c) = phi.sin_cos();
        let (r1, r2) = (self.radii[0], self.radii[1]);
        let w = self.sweep;
        let local = [[r1 * c, r2 * s], [-w * r1 * s, w * r2 * c], [-w * w * r1 * c, -w * w * r2 * s], [
            w * w * w * r1 * s,
            -w * w * w * r2 * c,
        ]];
        let (rs, rc) = self.rotation.sin_cos();
        let mut out = [[0.0; 2]; 4];
        for k in 0..4 {
            let v = local[k];
            out[k] = [rc * v[0] - rs * v[1], rs * v[0] + rc * v[1]];
        }
        out[0][0] += self.center[0];
        out[0][1] += self.center[1];
        out
    }
    fn is_closed(&self) -> bool {
        (self.sweep.abs() - 2.0 * PI).abs() < 1e-14
    }
}

/// Straight segment from `a` to `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub a: P2,
    pub b: P2,
}

impl TrimCurve for Segment {
    fn eval(&self, t: f64) -> [P2; 4] {
        let d = sub2(self.b, self.a);
        [[self.a[0] + t * d[0], self.a[1] + t * d[1]], d, [0.0; 2], [0.0; 2]]
    }
    fn is_closed(&self) -> bool {
        false
    }
}

/// Closed polygon, each side taking an equal share of `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub vertices: Vec<P2>,
}

impl Polygon {
    /// Axis-aligned rectangle traversed clockwise (active region outside).
    pub fn rect_hole(r: Rect) -> Self {
        let [[x0, x1], [y0, y1]] = r;
        Self { vertices: vec![[x0, y0], [x0, y1], [x1, y1], [x1, y0]] }
    }
}

impl TrimCurve for Polygon {
    fn eval(&self, t: f64) -> [P2; 4] {
        let n = self.vertices.len();
        let u = t.rem_euclid(1.0) * n as f64;
        let k = (u.floor() as usize).min(n - 1);
        let a = self.vertices[k];
        let b = self.vertices[(k + 1) % n];
        let d = [(b[0] - a[0]) * n as f64, (b[1] - a[1]) * n as f64];
        let f = u - k as f64;
        [[a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])], d, [0.0; 2], [0.0; 2]]
    }
    fn is_closed(&self) -> bool {
        true
    }
    fn kinks(&self) -> Vec<f64> {
        let n = self.vertices.len();
        (0..n).map(|k| k as f64 / n as f64).collect()
    }
}

/// Bézier curve of arbitrary degree.
#[derive(Debug, Clone, PartialEq)]
pub struct BezierCurve {
    pub ctrl: Vec<P2>,
}

/// Value and first three derivatives of a Bézier curve at `u`.
pub fn bezier_eval(ctrl: &[P2], u: f64) -> [P2; 4] {
    let mut out = [[0.0; 2]; 4];
    let mut pts = ctrl.to_vec();
    let mut fac = 1.0;
    for k in 0..4 {
        if pts.is_empty() {
            break;
        }
        // de Casteljau on the k-th hodograph
        let mut w = pts.clone();
        let m = w.len();
        for r in 1..m {
            for i in 0..m - r {
                w[i] = [(1.0 - u) * w[i][0] + u * w[i + 1][0], (1.0 - u) * w[i][1] + u * w[i + 1][1]];
            }
        }
        out[k] = [fac * w[0][0], fac * w[0][1]];
        let deg = m - 1;
        fac *= deg as f64;
        pts = (0..deg).map(|i| sub2(pts[i + 1], pts[i])).collect();
    }
    out
}

impl TrimCurve for BezierCurve {
    fn eval(&self, t: f64) -> [P2; 4] {
        bezier_eval(&self.ctrl, t)
    }
    fn is_closed(&self) -> bool {
        dist2(self.ctrl[0], *self.ctrl.last().unwrap()) < 1e-12
    }
}

/// B-spline curve plus a linear drift: `ξ(t) = Σ N_i(t) P_i + t d`.
///
/// A periodic knot vector with nonzero drift describes a curve that wraps once
/// around a periodic parametric direction.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineCurve {
    pub kv: KnotVector,
    pub ctrl: Vec<P2>,
    pub drift: P2,
}

impl SplineCurve {
    /// L2 fit of `f(t) − t d` on `n_el` uniform elements; returns the curve and
    /// the largest sampled deviation from `f`.
    pub fn fit(f: impl Fn(f64) -> P2, drift: P2, n_el: usize, degree: usize, periodic: bool) -> Result<(Self, f64)> {
        let breaks: Vec<f64> = (0..=n_el).map(|i| i as f64 / n_el as f64).collect();
        let kv = if periodic { KnotVector::periodic(&breaks, degree)? } else { KnotVector::open(&breaks, degree, degree - 1)? };
        let nq = degree + 4;
        let cx = l2_project_edge(&kv, |t| f(t)[0] - t * drift[0], nq)?;
        let cy = l2_project_edge(&kv, |t| f(t)[1] - t * drift[1], nq)?;
        let c = Self { kv, ctrl: cx.into_iter().zip(cy).map(|(a, b)| [a, b]).collect(), drift };
        let mut res: f64 = 0.0;
        for i in 0..=4096 {
            let t = i as f64 / 4096.0;
            res = res.max(dist2(c.point(t), f(t)));
        }
        Ok((c, res))
    }
}

impl TrimCurve for SplineCurve {
    fn eval(&self, t: f64) -> [P2; 4] {
        let tb = if self.kv.is_periodic() { t.rem_euclid(1.0) } else { t.clamp(0.0, 1.0) };
        let b = self.kv.eval(tb, 3).expect("parameter inside [0, 1]");
        let mut out = [[0.0; 2]; 4];
        for (k, row) in b.ders.iter().enumerate().take(4) {
            for (j, &i) in b.index.iter().enumerate() {
                out[k][0] += row[j] * self.ctrl[i][0];
                out[k][1] += row[j] * self.ctrl[i][1];
            }
        }
        out[0] = [out[0][0] + t * self.drift[0], out[0][1] + t * self.drift[1]];
        out[1] = [out[1][0] + self.drift[0], out[1][1] + self.drift[1]];
        out
    }
    fn is_closed(&self) -> bool {
        self.kv.is_periodic() && self.drift == [0.0, 0.0]
    }
}

/// Curve shifted by a constant vector.
#[derive(Debug, Clone)]
pub struct Shifted {
    pub base: Arc<dyn TrimCurve>,
    pub shift: P2,
}

impl TrimCurve for Shifted {
    fn eval(&self, t: f64) -> [P2; 4] {
        let mut e = self.base.eval(t);
        e[0] = [e[0][0] + self.shift[0], e[0][1] + self.shift[1]];
        e
    }
    fn is_closed(&self) -> bool {
        self.base.is_closed()
    }
    fn kinks(&self) -> Vec<f64> {
        self.base.kinks()
    }
}

/// Curve traversed backwards, `t ↦ c(1 − t)`.
#[derive(Debug, Clone)]
pub struct Reversed(pub Arc<dyn TrimCurve>);

impl TrimCurve for Reversed {
    fn eval(&self, t: f64) -> [P2; 4] {
        let e = self.0.eval(1.0 - t);
        [e[0], [-e[1][0], -e[1][1]], e[2], [-e[3][0], -e[3][1]]]
    }
    fn is_closed(&self) -> bool {
        self.0.is_closed()
    }
    fn kinks(&self) -> Vec<f64> {
        self.0.kinks().into_iter().map(|k| (1.0 - k).rem_euclid(1.0)).collect()
    }
}

/// Sampled polyline `t = i/n`, `i = 0..=n`.
pub fn polyline(c: &dyn TrimCurve, n: usize) -> Vec<P2> {
    (0..=n).map(|i| c.point(i as f64 / n as f64)).collect()
}

fn signed_area(poly: &[P2]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| cross2(poly[i], poly[(i + 1) % n])).sum::<f64>() * 0.5
}

fn winding(poly: &[P2], p: P2) -> i32 {
    let n = poly.len();
    let mut w = 0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let s = cross2(sub2(b, a), sub2(p, a));
        if a[1] <= p[1] {
            if b[1] > p[1] && s > 0.0 {
                w += 1;
            }
        } else if b[1] <= p[1] && s < 0.0 {
            w -= 1;
        }
    }
    w
}

/// Coordinate along the counter-clockwise perimeter of a rectangle, in `[0, 4)`:
/// bottom `[0,1)`, right `[1,2)`, top `[2,3)`, left `[3,4)`.
fn perim_coord(r: &Rect, p: P2) -> (f64, f64) {
    let [[x0, x1], [y0, y1]] = *r;
    let (dx, dy) = (x1 - x0, y1 - y0);
    let cands = [
        ((p[1] - y0).abs() / dy, ((p[0] - x0) / dx).clamp(0.0, 1.0)),
        ((p[0] - x1).abs() / dx, 1.0 + ((p[1] - y0) / dy).clamp(0.0, 1.0)),
        ((p[1] - y1).abs() / dy, 2.0 + ((x1 - p[0]) / dx).clamp(0.0, 1.0)),
        ((p[0] - x0).abs() / dx, 3.0 + ((y1 - p[1]) / dy).clamp(0.0, 1.0)),
    ];
    let (d, s) = cands.iter().copied().fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a });
    (s.rem_euclid(4.0), d)
}

fn perim_point(r: &Rect, s: f64) -> P2 {
    let [[x0, x1], [y0, y1]] = *r;
    let s = s.rem_euclid(4.0);
    let k = s.floor();
    let f = s - k;
    match k as usize {
        0 => [x0 + f * (x1 - x0), y0],
        1 => [x1, y0 + f * (y1 - y0)],
        2 => [x1 - f * (x1 - x0), y1],
        _ => [x0, y1 - f * (y1 - y0)],
    }
}

/// Active part of a parametric rectangle: the intersection of the left sides of all curves.
///
/// Closed curves enclose the active side when counter-clockwise and exclude it
/// when clockwise. Open curves must start and end on the rectangle boundary and
/// are closed along it counter-clockwise.
#[derive(Debug, Clone)]
pub struct Region {
    pub rect: Rect,
    pub curves: Vec<Arc<dyn TrimCurve>>,
    loops: Vec<(Vec<P2>, bool)>,
}

impl Region {
    pub fn new(rect: Rect, curves: Vec<Arc<dyn TrimCurve>>) -> Result<Self> {
        let mut loops = Vec::new();
        for c in &curves {
            let mut poly = polyline(c.as_ref(), 4096);
            if c.is_closed() {
                poly.pop();
                let ccw = signed_area(&poly) > 0.0;
                loops.push((poly, ccw));
            } else {
                let (se, de) = perim_coord(&rect, *poly.last().unwrap());
                let (ss, ds) = perim_coord(&rect, poly[0]);
                let size = (rect[0][1] - rect[0][0]).max(rect[1][1] - rect[1][0]);
                if de > 1e-9 * size || ds > 1e-9 * size {
                    return Err(IbcmError::Geometry("open trimming curve must end on the patch boundary".into()));
                }
                let mut s = se;
                let target = se + (ss - se).rem_euclid(4.0);
                while s.floor() + 1.0 < target {
                    s = s.floor() + 1.0;
                    poly.push(perim_point(&rect, s));
                }
                loops.push((poly, true));
            }
        }
        Ok(Self { rect, curves, loops })
    }

    /// Whole rectangle, no trimming.
    pub fn full(rect: Rect) -> Self {
        Self { rect, curves: Vec::new(), loops: Vec::new() }
    }

    /// Point membership (sampled curves, accurate away from the curves).
    pub fn contains(&self, p: P2) -> bool {
        let r = &self.rect;
        if p[0] < r[0][0] || p[0] > r[0][1] || p[1] < r[1][0] || p[1] > r[1][1] {
            return false;
        }
        self.loops.iter().all(|(poly, ccw)| {
            let w = winding(poly, p);
            if *ccw {
                w != 0
            } else {
                w == 0
            }
        })
    }
}

/// Parameters in `[t0, t1]` where the curve crosses the lines `ξ_k = v` for `v ∈ lines[k]`.
pub fn line_crossings(c: &dyn TrimCurve, lines: [&[f64]; 2], t0: f64, t1: f64, samples: usize) -> Vec<f64> {
    let n = samples.max(2);
    let ts: Vec<f64> = (0..=n).map(|i| t0 + (t1 - t0) * i as f64 / n as f64).collect();
    let ps: Vec<P2> = ts.iter().map(|&t| c.point(t)).collect();
    let mut out = Vec::new();
    for k in 0..2 {
        let scale = lines[k].iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let on_line = 1e-12 * scale;
        for i in 0..n {
            let (fa, fb) = (ps[i][k], ps[i + 1][k]);
            let (lo, hi) = (fa.min(fb), fa.max(fb));
            for &v in lines[k] {
                if v < lo || v > hi {
                    continue;
                }
                let (ga, gb) = (fa - v, fb - v);
                if ga.abs() <= on_line && gb.abs() <= on_line {
                    continue;
                }
                if (ga >= 0.0) == (gb >= 0.0) {
                    continue;
                }
                let (mut a, mut b) = (ts[i], ts[i + 1]);
                let pos_at_a = ga >= 0.0;
                for _ in 0..80 {
                    let m = 0.5 * (a + b);
                    if (c.point(m)[k] - v >= 0.0) == pos_at_a {
                        a = m;
                    } else {
                        b = m;
                    }
                    if b - a < 1e-16 {
                        break;
                    }
                }
                out.push(0.5 * (a + b));
            }
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    out
}

/// Portion `[ta, tb]` of curve `curve` (`tb` may exceed 1 on closed curves).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub curve: usize,
    pub ta: f64,
    pub tb: f64,
}

/// Splits the pieces at crossings with the given lines and keeps the sub-pieces
/// whose midpoint lies inside `rect`, grouped per sub-rectangle by `locate`.
fn split_pieces(
    curves: &[Arc<dyn TrimCurve>],
    pieces: &[Piece],
    lines: [&[f64]; 2],
    samples: usize,
) -> Vec<Piece> {
    let mut out = Vec::new();
    for p in pieces {
        let c = curves[p.curve].as_ref();
        let mut cuts = line_crossings(c, lines, p.ta, p.tb, samples);
        cuts.retain(|&t| t > p.ta + 1e-13 && t < p.tb - 1e-13);
        let mut t = p.ta;
        for &x in cuts.iter().chain(std::iter::once(&p.tb)) {
            if x - t > 1e-13 {
                out.push(Piece { curve: p.curve, ta: t, tb: x });
            }
            t = x;
        }
    }
    out
}

/// Edge of a cell loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LoopEdge {
    Curve(Piece),
    Line(P2, P2),
}

impl LoopEdge {
    fn start(&self, curves: &[Arc<dyn TrimCurve>]) -> P2 {
        match self {
            LoopEdge::Curve(p) => curves[p.curve].point(p.ta),
            LoopEdge::Line(a, _) => *a,
        }
    }
}

/// Boundary loops of the active part of `rect` given the curve pieces inside it.
fn cell_loops(rect: &Rect, curves: &[Arc<dyn TrimCurve>], pieces: &[Piece]) -> Result<Vec<Vec<LoopEdge>>> {
    let size = (rect[0][1] - rect[0][0]).max(rect[1][1] - rect[1][0]);
    let mut s_in = Vec::with_capacity(pieces.len());
    let mut s_out = Vec::with_capacity(pieces.len());
    for p in pieces {
        let c = &curves[p.curve];
        let (si, di) = perim_coord(rect, c.point(p.ta));
        let (so, d_o) = perim_coord(rect, c.point(p.tb));
        if di > 1e-8 * size || d_o > 1e-8 * size {
            return Err(IbcmError::Segmentation("curve piece does not end on the cell boundary".into()));
        }
        s_in.push(si);
        s_out.push(so);
    }
    let mut visited = vec![false; pieces.len()];
    let mut loops = Vec::new();
    for start in 0..pieces.len() {
        if visited[start] {
            continue;
        }
        let mut edges = Vec::new();
        let mut cur = start;
        loop {
            visited[cur] = true;
            edges.push(LoopEdge::Curve(pieces[cur]));
            let s = s_out[cur];
            let (next, d) = (0..pieces.len())
                .map(|j| (j, (s_in[j] - s).rem_euclid(4.0)))
                .fold((usize::MAX, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            let mut a = perim_point(rect, s);
            let mut x = s;
            while x.floor() + 1.0 < s + d {
                x = x.floor() + 1.0;
                let b = perim_point(rect, x);
                if dist2(a, b) > 1e-14 * size {
                    edges.push(LoopEdge::Line(a, b));
                }
                a = b;
            }
            let b = perim_point(rect, s + d);
            if dist2(a, b) > 1e-14 * size {
                edges.push(LoopEdge::Line(a, b));
            }
            if next == start {
                break;
            }
            if visited[next] {
                return Err(IbcmError::Segmentation("inconsistent curve pieces in cell".into()));
            }
            cur = next;
        }
        loops.push(edges);
    }
    Ok(loops)
}

/// Options for cut-cell tiling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TileOptions {
    /// Polynomial degree `q` of curved tile edges.
    pub degree: usize,
    /// Largest allowed deviation of a tile edge from the exact curve.
    pub max_deviation: f64,
    /// Minimum number of sub-pieces per curve piece.
    pub min_subdivision: usize,
    /// Recursive cell splits tried before giving up.
    pub max_depth: usize,
}

impl Default for TileOptions {
    fn default() -> Self {
        Self { degree: 3, max_deviation: 1e-10, min_subdivision: 1, max_depth: 6 }
    }
}

/// Integration tile of a cut cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Tile {
    /// Axis-aligned rectangle (uncut sub-cell).
    Rect(Rect),
    /// Collapsed ruled Bézier patch `x(u, v) = O + u (B(v) − O)`.
    Fan { apex: P2, base: Vec<P2> },
}

impl Tile {
    /// Point and Jacobian determinant at `(u, v) ∈ [0, 1]²`.
    pub fn map(&self, u: f64, v: f64) -> (P2, f64) {
        match self {
            Tile::Rect(r) => {
                let (dx, dy) = (r[0][1] - r[0][0], r[1][1] - r[1][0]);
                ([r[0][0] + u * dx, r[1][0] + v * dy], dx * dy)
            }
            Tile::Fan { apex, base } => {
                let e = bezier_eval(base, v);
                let d = sub2(e[0], *apex);
                ([apex[0] + u * d[0], apex[1] + u * d[1]], u * cross2(d, e[1]))
            }
        }
    }

    /// Tensor Gauss rule with `n × n` points; weights include the Jacobian.
    pub fn rule(&self, n: usize) -> Vec<(P2, f64)> {
        let g = gauss::rule(n);
        let mut out = Vec::with_capacity(n * n);
        for (i, &u) in g.nodes.iter().enumerate() {
            for (j, &v) in g.nodes.iter().enumerate() {
                let (x, jac) = self.map(u, v);
                out.push((x, g.weights[i] * g.weights[j] * jac));
            }
        }
        out
    }

    /// Smallest Jacobian over an interior `m × m` Gauss sample grid.
    pub fn min_jacobian(&self, m: usize) -> f64 {
        let g = gauss::rule(m);
        let mut lo = f64::INFINITY;
        for &u in &g.nodes {
            for &v in &g.nodes {
                lo = lo.min(self.map(u, v).1);
            }
        }
        lo
    }
}

/// Bézier control points of degree `q` interpolating `f` at Chebyshev-Lobatto nodes.
fn fit_bezier(f: impl Fn(f64) -> P2, q: usize) -> Vec<P2> {
    let nodes: Vec<f64> = (0..=q).map(|k| 0.5 * (1.0 - (PI * k as f64 / q as f64).cos())).collect();
    let mut m = DMatrix::<f64>::zeros(q + 1, q + 1);
    for (r, &u) in nodes.iter().enumerate() {
        for j in 0..=q {
            m[(r, j)] = bernstein(q, j, u);
        }
    }
    let lu = m.lu();
    let mut out = vec![[0.0; 2]; q + 1];
    for k in 0..2 {
        let rhs = DVector::from_iterator(q + 1, nodes.iter().map(|&u| f(u)[k]));
        let x = lu.solve(&rhs).expect("Bernstein collocation matrix is regular");
        for j in 0..=q {
            out[j][k] = x[j];
        }
    }
    out
}

fn bernstein(q: usize, j: usize, u: f64) -> f64 {
    let mut binom = 1.0;
    for i in 0..j {
        binom = binom * (q - i) as f64 / (i + 1) as f64;
    }
    binom * u.powi(j as i32) * (1.0 - u).powi((q - j) as i32)
}

/// Splits a curve piece into Bézier edges meeting the deviation tolerance.
fn fit_piece(c: &dyn TrimCurve, p: &Piece, opts: &TileOptions) -> Vec<Vec<P2>> {
    let q = opts.degree.max(1);
    let mut m = opts.min_subdivision.max(1);
    loop {
        let mut parts = Vec::with_capacity(m);
        let mut worst: f64 = 0.0;
        for k in 0..m {
            let a = p.ta + (p.tb - p.ta) * k as f64 / m as f64;
            let b = p.ta + (p.tb - p.ta) * (k + 1) as f64 / m as f64;
            let f = |u: f64| c.point(a + (b - a) * u);
            let ctrl = fit_bezier(f, q);
            for i in 0..2 * q + 3 {
                let u = (i as f64 + 0.5) / (2 * q + 3) as f64;
                worst = worst.max(dist2(bezier_eval(&ctrl, u)[0], f(u)));
            }
            parts.push(ctrl);
        }
        if worst <= opts.max_deviation || m >= 4096 {
            if worst > opts.max_deviation {
                log::warn!("tile edge deviation {worst:.2e} above tolerance");
            }
            return parts;
        }
        m *= 2;
    }
}

/// Star-shapedness score of a loop seen from `o`: minimum sine between the ray and
/// the boundary direction over edges not incident to `o`; negative when invalid.
fn star_score(o: P2, edges: &[LoopEdge], curves: &[Arc<dyn TrimCurve>], size: f64) -> f64 {
    let mut score = f64::INFINITY;
    let tol = 1e-10 * size;
    for e in edges {
        match e {
            LoopEdge::Line(a, b) => {
                let (da, db) = (dist2(*a, o), dist2(*b, o));
                if da < tol || db < tol {
                    continue;
                }
                let d = sub2(*b, *a);
                let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
                score = score.min(cross2(sub2(*a, o), d) / (da.max(db) * len));
            }
            LoopEdge::Curve(p) => {
                let c = &curves[p.curve];
                let n = 24;
                for i in 0..=n {
                    let e = c.eval(p.ta + (p.tb - p.ta) * i as f64 / n as f64);
                    let x = sub2(e[0], o);
                    let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                    if r < tol {
                        continue;
                    }
                    let speed = (e[1][0] * e[1][0] + e[1][1] * e[1][1]).sqrt();
                    score = score.min(cross2(x, e[1]) / (r * speed));
                }
            }
        }
    }
    score
}

fn split_at_kinks(edges: &[LoopEdge], curves: &[Arc<dyn TrimCurve>]) -> Vec<LoopEdge> {
    let mut out = Vec::new();
    for e in edges {
        match e {
            LoopEdge::Curve(p) => {
                let ks = curves[p.curve].kinks();
                let mut cuts: Vec<f64> = Vec::new();
                for k in ks {
                    // all periodic copies inside the piece
                    let mut x = k + (p.ta - k).ceil();
                    while x < p.tb {
                        if x > p.ta + 1e-13 && x < p.tb - 1e-13 {
                            cuts.push(x);
                        }
                        x += 1.0;
                    }
                }
                cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let mut t = p.ta;
                for x in cuts.into_iter().chain(std::iter::once(p.tb)) {
                    out.push(LoopEdge::Curve(Piece { curve: p.curve, ta: t, tb: x }));
                    t = x;
                }
            }
            l => out.push(*l),
        }
    }
    out
}

fn fan_tiles(edges: &[LoopEdge], curves: &[Arc<dyn TrimCurve>], rect: &Rect, opts: &TileOptions) -> Option<Vec<Tile>> {
    let size = (rect[0][1] - rect[0][0]).max(rect[1][1] - rect[1][0]);
    let mut cands: Vec<P2> = edges.iter().map(|e| e.start(curves)).collect();
    let n = cands.len() as f64;
    let centroid = cands.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0] / n, a[1] + p[1] / n]);
    cands.push(centroid);
    let (best, score) = cands
        .iter()
        .map(|&o| (o, star_score(o, edges, curves, size)))
        .fold(([0.0; 2], f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    if !(score > 1e-6) {
        return None;
    }
    let tol = 1e-12 * size;
    let mut tiles = Vec::new();
    for e in edges {
        match e {
            LoopEdge::Line(a, b) => {
                if cross2(sub2(*a, best), sub2(*b, *a)).abs() <= tol * size {
                    continue;
                }
                tiles.push(Tile::Fan { apex: best, base: vec![*a, *b] });
            }
            LoopEdge::Curve(p) => {
                let c = curves[p.curve].as_ref();
                for ctrl in fit_piece(c, p, opts) {
                    tiles.push(Tile::Fan { apex: best, base: ctrl });
                }
            }
        }
    }
    Some(tiles)
}

fn tile_rect(
    rect: &Rect,
    curves: &[Arc<dyn TrimCurve>],
    pieces: &[Piece],
    region: &Region,
    opts: &TileOptions,
    depth: usize,
    cell: usize,
) -> Result<Vec<Tile>> {
    if pieces.is_empty() {
        let c = [0.5 * (rect[0][0] + rect[0][1]), 0.5 * (rect[1][0] + rect[1][1])];
        return Ok(if region.contains(c) { vec![Tile::Rect(*rect)] } else { vec![] });
    }
    if pieces.len() > 2 {
        if depth >= opts.max_depth {
            return Err(IbcmError::RefineRequired { cell, reason: format!("{} curve arcs cross the cell", pieces.len()) });
        }
    } else {
        let loops = cell_loops(rect, curves, pieces)?;
        let mut tiles = Vec::new();
        let mut ok = true;
        for l in &loops {
            let l = split_at_kinks(l, curves);
            match fan_tiles(&l, curves, rect, opts) {
                Some(t) => tiles.extend(t),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Ok(tiles);
        }
        if depth >= opts.max_depth {
            return Err(IbcmError::RefineRequired { cell, reason: "active part of the cell is not star-shaped".into() });
        }
    }
    let (axis, at) = split_line(rect, curves, pieces);
    let lines: [&[f64]; 2] = if axis == 0 { [&[at], &[]] } else { [&[], &[at]] };
    let sub = split_pieces(curves, pieces, lines, 64);
    let mut tiles = Vec::new();
    for half in 0..2 {
        let mut r = *rect;
        r[axis][1 - half] = at;
        let mine: Vec<Piece> = sub
            .iter()
            .filter(|p| {
                let m = curves[p.curve].point(0.5 * (p.ta + p.tb));
                m[0] >= r[0][0] && m[0] <= r[0][1] && m[1] >= r[1][0] && m[1] <= r[1][1]
            })
            .copied()
            .collect();
        tiles.extend(tile_rect(&r, curves, &mine, region, opts, depth + 1, cell)?);
    }
    Ok(tiles)
}

/// Split line for a cell whose active part is not star-shaped: through the curve
/// point with an axis-parallel tangent closest to the cell middle, else the midline
/// of the longer side.
fn split_line(rect: &Rect, curves: &[Arc<dyn TrimCurve>], pieces: &[Piece]) -> (usize, f64) {
    let mut best: Option<(usize, f64, f64)> = None;
    for p in pieces {
        let c = &curves[p.curve];
        let n = 32;
        for k in 0..2 {
            // tangent component k vanishes: split across the other axis
            let comp = |t: f64| c.eval(t)[1][k];
            for i in 0..n {
                let a = p.ta + (p.tb - p.ta) * i as f64 / n as f64;
                let b = p.ta + (p.tb - p.ta) * (i + 1) as f64 / n as f64;
                let (fa, fb) = (comp(a), comp(b));
                if (fa >= 0.0) == (fb >= 0.0) {
                    continue;
                }
                let (mut lo, mut hi) = (a, b);
                for _ in 0..60 {
                    let m = 0.5 * (lo + hi);
                    if (comp(m) >= 0.0) == (fa >= 0.0) {
                        lo = m;
                    } else {
                        hi = m;
                    }
                }
                let x = c.point(0.5 * (lo + hi));
                let axis = 1 - k;
                let rel = (x[axis] - rect[axis][0]) / (rect[axis][1] - rect[axis][0]);
                if !(0.02..=0.98).contains(&rel) {
                    continue;
                }
                let off = (rel - 0.5).abs();
                if best.map_or(true, |b| off < b.2) {
                    best = Some((axis, x[axis], off));
                }
            }
        }
    }
    match best {
        Some((axis, at, _)) => (axis, at),
        None => {
            let axis = if rect[0][1] - rect[0][0] >= rect[1][1] - rect[1][0] { 0 } else { 1 };
            (axis, 0.5 * (rect[axis][0] + rect[axis][1]))
        }
    }
}

/// Element kind on the background grid.
#[derive(Debug, Clone, PartialEq)]
pub enum CellKind {
    Entire,
    Partial(Vec<Tile>),
    Empty,
}

/// Classified background grid.
#[derive(Debug, Clone)]
pub struct Classification {
    pub breaks: [Vec<f64>; 2],
    /// Cells indexed `e1 + n1 e2`.
    pub cells: Vec<CellKind>,
    /// Per curve, the sorted parameters where it crosses grid lines.
    pub crossings: Vec<Vec<f64>>,
}

/// Quadrature points of one element, in patch parameters, weights including tile Jacobians.
#[derive(Debug, Clone)]
pub struct CellRule {
    pub cell: [usize; 2],
    pub points: Vec<P2>,
    pub weights: Vec<f64>,
}

impl Classification {
    pub fn n(&self) -> [usize; 2] {
        [self.breaks[0].len() - 1, self.breaks[1].len() - 1]
    }

    pub fn kind(&self, e1: usize, e2: usize) -> &CellKind {
        &self.cells[e1 + self.n()[0] * e2]
    }

    pub fn is_active(&self, e1: usize, e2: usize) -> bool {
        match self.kind(e1, e2) {
            CellKind::Entire => true,
            CellKind::Partial(t) => !t.is_empty(),
            CellKind::Empty => false,
        }
    }

    pub fn cell_rect(&self, e1: usize, e2: usize) -> Rect {
        let b = &self.breaks;
        [[b[0][e1], b[0][e1 + 1]], [b[1][e2], b[1][e2 + 1]]]
    }

    /// Element rules with `n × n` Gauss points per entire cell and per tile.
    pub fn rules(&self, n: usize) -> Vec<CellRule> {
        let [n1, n2] = self.n();
        let g = gauss::rule(n);
        let mut out = Vec::new();
        for e2 in 0..n2 {
            for e1 in 0..n1 {
                let r = self.cell_rect(e1, e2);
                let (mut points, mut weights) = (Vec::new(), Vec::new());
                match self.kind(e1, e2) {
                    CellKind::Empty => continue,
                    CellKind::Entire => {
                        let (dx, dy) = (r[0][1] - r[0][0], r[1][1] - r[1][0]);
                        for (j, &v) in g.nodes.iter().enumerate() {
                            for (i, &u) in g.nodes.iter().enumerate() {
                                points.push([r[0][0] + u * dx, r[1][0] + v * dy]);
                                weights.push(g.weights[i] * g.weights[j] * dx * dy);
                            }
                        }
                    }
                    CellKind::Partial(tiles) => {
                        for t in tiles {
                            for (x, w) in t.rule(n) {
                                points.push(x);
                                weights.push(w);
                            }
                        }
                    }
                }
                if !points.is_empty() {
                    out.push(CellRule { cell: [e1, e2], points, weights });
                }
            }
        }
        out
    }

    /// Parametric area of the active region.
    pub fn area(&self, n: usize) -> f64 {
        self.rules(n).iter().flat_map(|r| r.weights.iter()).sum()
    }

    pub fn count(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for k in &self.cells {
            match k {
                CellKind::Entire => c.0 += 1,
                CellKind::Partial(_) => c.1 += 1,
                CellKind::Empty => c.2 += 1,
            }
        }
        c
    }
}

fn locate(breaks: &[f64], x: f64) -> Option<usize> {
    let n = breaks.len() - 1;
    if x < breaks[0] || x > breaks[n] {
        return None;
    }
    let i = breaks.partition_point(|b| *b <= x);
    Some(i.saturating_sub(1).min(n - 1))
}

/// Classifies the cells of a background grid against a region and tiles the cut cells.
pub fn classify_elements(region: &Region, breaks: [&[f64]; 2], opts: &TileOptions) -> Result<Classification> {
    let n1 = breaks[0].len() - 1;
    let n2 = breaks[1].len() - 1;
    let curves = &region.curves;
    let hmin = breaks.iter().flat_map(|b| b.windows(2).map(|w| w[1] - w[0])).fold(f64::INFINITY, f64::min);
    let mut per_cell: Vec<Vec<Piece>> = vec![Vec::new(); n1 * n2];
    let mut crossings = Vec::with_capacity(curves.len());
    for (ci, c) in curves.iter().enumerate() {
        let poly = polyline(c.as_ref(), 512);
        let len: f64 = poly.windows(2).map(|w| dist2(w[0], w[1])).sum();
        let samples = ((16.0 * len / hmin) as usize).max(2048);
        let cr = line_crossings(c.as_ref(), breaks, 0.0, 1.0, samples);
        for w in cr.windows(2) {
            let p = c.point(w[0]);
            for (k, b) in breaks.iter().enumerate() {
                for (k2, b2) in breaks.iter().enumerate() {
                    if k2 != k && b.iter().any(|v| (p[k] - v).abs() < 1e-10) && b2.iter().any(|v| (p[k2] - v).abs() < 1e-10) {
                        log::warn!("curve {ci} passes through a grid node at t = {:.6}", w[0]);
                    }
                }
            }
        }
        let mut ivals = Vec::new();
        if cr.is_empty() {
            if c.is_closed() {
                // a closed curve inside one cell: too coarse a grid
                let m = c.point(0.0);
                if let (Some(e1), Some(e2)) = (locate(breaks[0], m[0]), locate(breaks[1], m[1])) {
                    return Err(IbcmError::RefineRequired { cell: e1 + n1 * e2, reason: "closed curve inside a single cell".into() });
                }
            }
            ivals.push((0.0, 1.0));
        } else if c.is_closed() {
            for w in cr.windows(2) {
                ivals.push((w[0], w[1]));
            }
            ivals.push((*cr.last().unwrap(), cr[0] + 1.0));
        } else {
            let mut t = 0.0;
            for &x in cr.iter().chain(std::iter::once(&1.0)) {
                ivals.push((t, x));
                t = x;
            }
        }
        for (a, b) in ivals {
            if b - a < 1e-13 {
                continue;
            }
            let m = c.point(0.5 * (a + b));
            if let (Some(e1), Some(e2)) = (locate(breaks[0], m[0]), locate(breaks[1], m[1])) {
                per_cell[e1 + n1 * e2].push(Piece { curve: ci, ta: a, tb: b });
            }
        }
        crossings.push(cr);
    }
    let mut cells = Vec::with_capacity(n1 * n2);
    for e2 in 0..n2 {
        for e1 in 0..n1 {
            let r = [[breaks[0][e1], breaks[0][e1 + 1]], [breaks[1][e2], breaks[1][e2 + 1]]];
            let pieces = &per_cell[e1 + n1 * e2];
            if pieces.is_empty() {
                let c = [0.5 * (r[0][0] + r[0][1]), 0.5 * (r[1][0] + r[1][1])];
                cells.push(if region.contains(c) { CellKind::Entire } else { CellKind::Empty });
                continue;
            }
            let tiles = tile_rect(&r, curves, pieces, region, opts, 0, e1 + n1 * e2)?;
            for t in &tiles {
                if t.min_jacobian(opts.degree + 2) <= 0.0 {
                    return Err(IbcmError::RefineRequired { cell: e1 + n1 * e2, reason: "tile with non-positive Jacobian".into() });
                }
            }
            cells.push(if tiles.is_empty() { CellKind::Empty } else { CellKind::Partial(tiles) });
        }
    }
    Ok(Classification { breaks: [breaks[0].to_vec(), breaks[1].to_vec()], cells, crossings })
}

/// Uniform breaks of `n` elements on `[a, b]`.
pub fn uniform_breaks(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
}

/// Ruled inner map `F̃(η) = (1 − η2) c0(η1) + η2 c1(η1)` on `[0, 1]²`.
#[derive(Debug, Clone)]
pub struct RuledMap {
    pub c0: Arc<dyn TrimCurve>,
    pub c1: Arc<dyn TrimCurve>,
}

impl PlanarMap for RuledMap {
    fn jet(&self, eta: [f64; 2], _order: usize) -> Result<PlanarJet> {
        let a = self.c0.eval(eta[0]);
        let b = self.c1.eval(eta[0]);
        let (s, r) = (eta[1], 1.0 - eta[1]);
        let mut j = PlanarJet::zero();
        for k in 0..2 {
            j.v[k] = r * a[0][k] + s * b[0][k];
            j.d1[0][k] = r * a[1][k] + s * b[1][k];
            j.d1[1][k] = b[0][k] - a[0][k];
            j.d2[0][0][k] = r * a[2][k] + s * b[2][k];
            j.d2[0][1][k] = b[1][k] - a[1][k];
            j.d2[1][0][k] = j.d2[0][1][k];
            j.d3[0][0][0][k] = r * a[3][k] + s * b[3][k];
            let m = b[2][k] - a[2][k];
            j.d3[0][0][1][k] = m;
            j.d3[0][1][0][k] = m;
            j.d3[1][0][0][k] = m;
        }
        Ok(j)
    }
    fn domain(&self) -> [[f64; 2]; 2] {
        [[0.0, 1.0], [0.0, 1.0]]
    }
}

/// Conformal patch between a boundary curve (`η2 = 0`) and its offset (`η2 = 1`).
#[derive(Debug, Clone)]
pub struct BoundaryLayer {
    pub c0: Arc<dyn TrimCurve>,
    pub c1: Arc<dyn TrimCurve>,
    pub map: Arc<RuledMap>,
    /// Elements along `η1` and `η2`.
    pub n_elems: [usize; 2],
}

/// Smallest distance between sampled copies of two curves.
pub fn min_distance(a: &dyn TrimCurve, b: &dyn TrimCurve, samples: usize) -> f64 {
    let pa = polyline(a, samples);
    let pb = polyline(b, samples);
    let mut d = f64::INFINITY;
    for p in &pa {
        for q in &pb {
            d = d.min(dist2(*p, *q));
        }
    }
    d
}

fn segments_cross(a: P2, b: P2, c: P2, d: P2) -> bool {
    let o1 = cross2(sub2(b, a), sub2(c, a));
    let o2 = cross2(sub2(b, a), sub2(d, a));
    let o3 = cross2(sub2(d, c), sub2(a, c));
    let o4 = cross2(sub2(d, c), sub2(b, c));
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

/// Whether a sampled curve intersects itself.
pub fn self_intersects(c: &dyn TrimCurve, samples: usize) -> bool {
    let p = polyline(c, samples);
    let n = p.len() - 1;
    for i in 0..n {
        for j in i + 2..n {
            if c.is_closed() && i == 0 && j == n - 1 {
                continue;
            }
            if segments_cross(p[i], p[i + 1], p[j], p[j + 1]) {
                return true;
            }
        }
    }
    false
}

impl BoundaryLayer {
    /// Layer from explicit curves sharing the parameter interval.
    pub fn from_curves(c0: Arc<dyn TrimCurve>, c1: Arc<dyn TrimCurve>, n_elems: [usize; 2]) -> Result<Self> {
        if c0.is_closed() != c1.is_closed() {
            return Err(IbcmError::InvalidOffset("boundary and offset curves differ in closedness".into()));
        }
        if n_elems[0] == 0 || n_elems[1] == 0 {
            return Err(IbcmError::InvalidInput("layer needs at least one element per direction".into()));
        }
        if min_distance(c0.as_ref(), c1.as_ref(), 512) <= 1e-9 {
            return Err(IbcmError::InvalidOffset("offset curve touches its boundary curve".into()));
        }
        let map = Arc::new(RuledMap { c0: c0.clone(), c1: c1.clone() });
        let layer = Self { c0, c1, map, n_elems };
        let q = gauss::rule(4);
        for e1 in 0..n_elems[0] {
            for e2 in 0..n_elems[1] {
                for &u in &q.nodes {
                    for &v in &q.nodes {
                        let eta = [(e1 as f64 + u) / n_elems[0] as f64, (e2 as f64 + v) / n_elems[1] as f64];
                        let j = layer.map.jet(eta, 1)?;
                        let det = j.d1[0][0] * j.d1[1][1] - j.d1[0][1] * j.d1[1][0];
                        if !(det > 0.0) {
                            return Err(IbcmError::InvalidOffset(format!(
                                "ruled map Jacobian {det:.3e} at η = ({:.4}, {:.4})",
                                eta[0], eta[1]
                            )));
                        }
                    }
                }
            }
        }
        Ok(layer)
    }

    /// Layer from a boundary curve and a uniform offset distance to its left.
    ///
    /// Circles are offset exactly; other curves by a fitted normal offset.
    pub fn from_offset(c0: Arc<dyn TrimCurve>, delta: f64, n_elems: [usize; 2], circle: Option<&Ellipse>) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(IbcmError::InvalidOffset("offset distance must be positive".into()));
        }
        let c1: Arc<dyn TrimCurve> = match circle {
            Some(e) if e.is_circle() => {
                let r = e.radii[0] + if e.sweep < 0.0 { delta } else { -delta };
                if !(r > 0.0) {
                    return Err(IbcmError::InvalidOffset(format!("offset collapses the circle (r = {r})")));
                }
                Arc::new(Ellipse { radii: [r, r], ..e.clone() })
            }
            _ => Arc::new(normal_offset(c0.as_ref(), delta)?),
        };
        Self::from_curves(c0, c1, n_elems)
    }

    pub fn is_closed(&self) -> bool {
        self.c0.is_closed()
    }

    /// Knot vectors of degree `p` (periodic along `η1` for closed layers).
    pub fn knot_vectors(&self, p: usize) -> Result<[KnotVector; 2]> {
        let b1 = uniform_breaks(0.0, 1.0, self.n_elems[0]);
        let k1 = if self.is_closed() { KnotVector::periodic(&b1, p)? } else { KnotVector::open(&b1, p, p - 1)? };
        let k2 = KnotVector::uniform(0.0, 1.0, self.n_elems[1], p)?;
        Ok([k1, k2])
    }
}

/// Fitted offset `c(t) + δ n_left(t)`.
pub fn normal_offset(c: &dyn TrimCurve, delta: f64) -> Result<SplineCurve> {
    let f = |t: f64| {
        let e = c.eval(t);
        let s = (e[1][0] * e[1][0] + e[1][1] * e[1][1]).sqrt();
        [e[0][0] - delta * e[1][1] / s, e[0][1] + delta * e[1][0] / s]
    };
    let closed = c.is_closed();
    let mut n_el = 64;
    loop {
        let (sc, res) = SplineCurve::fit(f, [0.0, 0.0], n_el, 5, closed)?;
        if res < 1e-10 || n_el >= 2048 {
            if self_intersects(&sc, 1024) {
                return Err(IbcmError::InvalidOffset("offset curve self-intersects".into()));
            }
            return Ok(sc);
        }
        n_el *= 2;
    }
}

/// Verifies that no two curves of a layout come closer than `tol` (sampled).
pub fn check_disjoint(curves: &[Arc<dyn TrimCurve>], samples: usize, tol: f64) -> Result<()> {
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            let d = min_distance(curves[i].as_ref(), curves[j].as_ref(), samples);
            if d <= tol {
                return Err(IbcmError::InvalidOffset(format!("curves {i} and {j} intersect (distance {d:.2e})")));
            }
        }
    }
    Ok(())
}

/// One interface segment with the elements owning it on each side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceSegment {
    pub t0: f64,
    pub t1: f64,
    pub plus: [usize; 2],
    pub minus: [usize; 2],
}

/// Breakpoints of a curve against one patch grid, given the curve in that patch's parameters.
pub fn trace_breaks(trace: &dyn TrimCurve, breaks: [&[f64]; 2]) -> Vec<f64> {
    line_crossings(trace, breaks, 0.0, 1.0, 4096)
}

/// Partitions `[0, 1]` at the union of the break parameters of both sides.
///
/// `plus` and `minus` are the curve expressed in each side's parameters.
pub fn segment_interface(
    plus: &dyn TrimCurve,
    plus_breaks: [&[f64]; 2],
    minus: &dyn TrimCurve,
    minus_breaks: [&[f64]; 2],
) -> Result<Vec<InterfaceSegment>> {
    let mut ts = vec![0.0, 1.0];
    ts.extend(trace_breaks(plus, plus_breaks));
    ts.extend(trace_breaks(minus, minus_breaks));
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.dedup_by(|a, b| {
        let close = (*a - *b).abs() < 1e-10;
        if close && (*a - *b).abs() > 1e-14 {
            log::debug!("interface breakpoints {a} and {b} snapped");
        }
        close
    });
    let mut out = Vec::with_capacity(ts.len());
    let owner = |c: &dyn TrimCurve, b: [&[f64]; 2], t: f64| -> Result<[usize; 2]> {
        let p = c.point(t);
        match (locate(b[0], p[0]), locate(b[1], p[1])) {
            (Some(i), Some(j)) => Ok([i, j]),
            _ => Err(IbcmError::Segmentation(format!("interface point ({:.6}, {:.6}) outside patch", p[0], p[1]))),
        }
    };
    for w in ts.windows(2) {
        let m = 0.5 * (w[0] + w[1]);
        out.push(InterfaceSegment {
            t0: w[0],
            t1: w[1],
            plus: owner(plus, plus_breaks, m)?,
            minus: owner(minus, minus_breaks, m)?,
        });
    }
    Ok(out)
}

/// Gauss rule on a segment `[t0, t1]` of a curve parameter.
pub fn segment_rule(t0: f64, t1: f64, n: usize) -> Vec<(f64, f64)> {
    gauss::on_interval(n, t0, t1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn plate(r: f64) -> Region {
        let hole: Arc<dyn TrimCurve> = Arc::new(Ellipse::circle([0.5, 0.5], r, true));
        Region::new([[0.0, 1.0], [0.0, 1.0]], vec![hole]).unwrap()
    }

    fn grid(n: usize) -> Vec<f64> {
        uniform_breaks(0.0, 1.0, n)
    }

    #[test]
    fn curves_have_consistent_derivatives() {
        let curves: Vec<Arc<dyn TrimCurve>> = vec![
            Arc::new(Ellipse { center: [0.1, 0.2], radii: [0.3, 0.2], rotation: 0.4, start: 0.3, sweep: -4.0 }),
            Arc::new(BezierCurve { ctrl: vec![[0.0, 0.0], [0.3, 0.5], [0.6, -0.2], [1.0, 0.4], [1.2, 0.0]] }),
            Arc::new(SplineCurve::fit(|t| [(2.0 * PI * t).cos(), 0.5 * (2.0 * PI * t).sin()], [0.0, 0.0], 16, 5, true).unwrap().0),
        ];
        let h = 1e-5;
        for c in curves {
            for t in [0.13, 0.5, 0.77] {
                let e = c.eval(t);
                let (ep, em) = (c.eval(t + h), c.eval(t - h));
                for k in 0..3 {
                    for m in 0..2 {
                        let fd = (ep[k][m] - em[k][m]) / (2.0 * h);
                        assert!((fd - e[k + 1][m]).abs() < 1e-5 * (1.0 + e[k + 1][m].abs()), "{c:?} k={k}");
                    }
                }
            }
        }
    }

    #[test]
    fn closed_curves_close() {
        let c = Ellipse::circle([0.5, 0.5], 0.2, true);
        assert!(dist2(c.point(0.0), c.point(1.0)) < 1e-12);
        let p = Polygon::rect_hole([[-1.0, 1.0], [-2.0, 2.0]]);
        assert!(dist2(p.point(0.0), p.point(1.0)) < 1e-12);
        assert!(p.is_closed() && c.is_closed());
    }

    #[test]
    fn classification_examples() {
        let reg = plate(0.2);
        let b = grid(8);
        let cl = classify_elements(&reg, [&b, &b], &TileOptions::default()).unwrap();
        assert_eq!(*cl.kind(3, 3), CellKind::Empty);
        assert_eq!(*cl.kind(0, 0), CellKind::Entire);
        let full = classify_elements(&Region::full([[0.0, 1.0], [0.0, 1.0]]), [&b, &b], &TileOptions::default()).unwrap();
        assert!(full.cells.iter().all(|c| *c == CellKind::Entire));
        assert_relative_eq!(full.area(2), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn trimmed_area_matches_closed_form() {
        let reg = plate(0.2);
        let b = grid(8);
        let cl = classify_elements(&reg, [&b, &b], &TileOptions::default()).unwrap();
        let exact = 1.0 - PI * 0.04;
        assert_relative_eq!(cl.area(4), exact, max_relative = 1e-10);
    }

    #[test]
    fn area_error_decreases_with_degree() {
        let reg = plate(0.2);
        let b = grid(8);
        let exact = 1.0 - PI * 0.04;
        let errs: Vec<f64> = (1..=5)
            .map(|q| {
                let o = TileOptions { degree: q, max_deviation: f64::INFINITY, min_subdivision: 1, max_depth: 3 };
                let cl = classify_elements(&reg, [&b, &b], &o).unwrap();
                ((cl.area(q + 2) - exact) / exact).abs()
            })
            .collect();
        for w in errs.windows(2) {
            assert!(w[1] < w[0], "{errs:?}");
        }
    }

    #[test]
    fn straight_cut_is_exact() {
        let seg: Arc<dyn TrimCurve> = Arc::new(Segment { a: [1.0, 0.1], b: [0.0, 0.73] });
        let reg = Region::new([[0.0, 1.0], [0.0, 1.0]], vec![seg]).unwrap();
        let b = grid(4);
        let cl = classify_elements(&reg, [&b, &b], &TileOptions::default()).unwrap();
        // region below the line
        let exact = 0.5 * (0.1 + 0.73);
        assert_relative_eq!(cl.area(2), exact, max_relative = 1e-14);
    }

    #[test]
    fn polygon_hole_area() {
        let hole: Arc<dyn TrimCurve> = Arc::new(Polygon::rect_hole([[0.31, 0.62], [0.2, 0.77]]));
        let reg = Region::new([[0.0, 1.0], [0.0, 1.0]], vec![hole]).unwrap();
        let b = grid(8);
        let cl = classify_elements(&reg, [&b, &b], &TileOptions::default()).unwrap();
        assert_relative_eq!(cl.area(2), 1.0 - 0.31 * 0.57, max_relative = 1e-13);
    }

    #[test]
    fn tile_points_stay_inside() {
        let reg = plate(0.2);
        let b = grid(8);
        let cl = classify_elements(&reg, [&b, &b], &TileOptions::default()).unwrap();
        for r in cl.rules(5) {
            for (p, w) in r.points.iter().zip(&r.weights) {
                assert!(*w > 0.0);
                let d = dist2(*p, [0.5, 0.5]);
                assert!(d > 0.2 - 1e-9, "point {p:?} inside the hole");
            }
        }
    }

    #[test]
    fn non_star_cells_need_refinement_without_splitting() {
        let wave = |t: f64| [t, 0.5 + 0.3 * (6.0 * PI * t).sin()];
        let (c, _) = SplineCurve::fit(wave, [0.0, 0.0], 64, 5, false).unwrap();
        let reg = Region::new([[0.0, 1.0], [0.0, 1.0]], vec![Arc::new(c)]).unwrap();
        let b = grid(1);
        let o = TileOptions { max_depth: 0, ..TileOptions::default() };
        assert!(matches!(classify_elements(&reg, [&b, &b], &o), Err(IbcmError::RefineRequired { .. })));
        let cl = classify_elements(&reg, [&b, &b], &TileOptions::default()).unwrap();
        // the sine integrates to zero over whole periods
        assert_relative_eq!(cl.area(6), 0.5, max_relative = 1e-9);
    }

    #[test]
    fn annulus_layer() {
        let c0 = Ellipse::circle([0.5, 0.5], 0.2, true);
        let layer = BoundaryLayer::from_offset(Arc::new(c0.clone()), 0.1, [16, 1], Some(&c0)).unwrap();
        let mut area = 0.0;
        let mut len = 0.0;
        let g = gauss::rule(8);
        for e in 0..16 {
            for (i, &u) in g.nodes.iter().enumerate() {
                let eta1 = (e as f64 + u) / 16.0;
                for (j, &v) in g.nodes.iter().enumerate() {
                    let jt = layer.map.jet([eta1, v], 1).unwrap();
                    let det = jt.d1[0][0] * jt.d1[1][1] - jt.d1[0][1] * jt.d1[1][0];
                    area += g.weights[i] * g.weights[j] * det / 16.0;
                }
                let d = layer.c1.eval(eta1)[1];
                len += g.weights[i] * (d[0] * d[0] + d[1] * d[1]).sqrt() / 16.0;
            }
        }
        assert_relative_eq!(area, PI * (0.09 - 0.04), max_relative = 1e-10);
        assert_relative_eq!(len, 2.0 * PI * 0.3, max_relative = 1e-10);
        assert!(dist2(layer.map.jet([0.3, 0.0], 0).unwrap().v, c0.point(0.3)) < 1e-12);
    }

    #[test]
    fn straight_strip_layer() {
        let c0: Arc<dyn TrimCurve> = Arc::new(Segment { a: [0.0, 0.0], b: [1.0, 0.0] });
        let l = BoundaryLayer::from_offset(c0, 0.1, [4, 1], None).unwrap();
        assert!(dist2(l.c1.point(0.5), [0.5, 0.1]) < 1e-10);
    }

    #[test]
    fn invalid_offsets() {
        let c0 = Ellipse::circle([0.5, 0.5], 0.2, false);
        assert!(matches!(
            BoundaryLayer::from_offset(Arc::new(c0.clone()), 0.25, [8, 1], Some(&c0)),
            Err(IbcmError::InvalidOffset(_))
        ));
        let c1: Arc<dyn TrimCurve> = Arc::new(Ellipse::circle([0.5, 0.5], 0.2, true));
        let c0: Arc<dyn TrimCurve> = Arc::new(c0);
        assert!(BoundaryLayer::from_curves(c0.clone(), c1, [8, 1]).is_err());
    }

    #[test]
    fn segmentation_counts_and_conformity() {
        let c0 = Ellipse::circle([0.5, 0.5], 0.2, true);
        let layer = BoundaryLayer::from_offset(Arc::new(c0.clone()), 0.1, [16, 1], Some(&c0)).unwrap();
        let b = grid(8);
        let lb = [uniform_breaks(0.0, 1.0, 16), uniform_breaks(0.0, 1.0, 1)];
        let trace = Segment { a: [0.0, 1.0], b: [1.0, 1.0] };
        let segs = segment_interface(&trace, [&lb[0], &lb[1]], layer.c1.as_ref(), [&b, &b]).unwrap();
        // independent crossing count of the r = 0.3 circle with the lines k/8
        let mut crossings = 0;
        for k in 1..8 {
            let d = (k as f64 / 8.0 - 0.5).abs();
            if d < 0.3 {
                crossings += 4;
            }
        }
        // the four axis points of the circle are both layer breaks and grid crossings
        assert_eq!(segs.len(), 16 + crossings - 4);
        let total: f64 = segs.iter().map(|s| s.t1 - s.t0).sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-14);
        for s in &segs {
            let m = 0.5 * (s.t0 + s.t1);
            let a = layer.map.jet(trace.point(m), 0).unwrap().v;
            let p = layer.c1.point(m);
            assert!(dist2(a, p) < 1e-10);
        }
    }

    #[test]
    fn aligned_interface_segments_are_edges() {
        let b = grid(4);
        let trace = Segment { a: [0.5, 0.0], b: [0.5, 1.0] };
        let segs = segment_interface(&trace, [&b, &b], &trace, [&b, &b]).unwrap();
        assert_eq!(segs.len(), 4);
        for (k, s) in segs.iter().enumerate() {
            assert_relative_eq!(s.t0, k as f64 / 4.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn periodic_graph_curve_region() {
        let g = |t: f64| [2.0 * PI * t, 1.0 + 0.2 * (2.0 * PI * t).cos()];
        let (c, res) = SplineCurve::fit(g, [2.0 * PI, 0.0], 64, 5, true).unwrap();
        assert!(res < 1e-8, "{res}");
        let reg = Region::new([[0.0, 2.0 * PI], [0.5, 3.0]], vec![Arc::new(c)]).unwrap();
        assert!(reg.contains([1.0, 2.0]));
        assert!(!reg.contains([0.0 + 0.1, 0.6]));
        let b1 = uniform_breaks(0.0, 2.0 * PI, 16);
        let b2 = uniform_breaks(0.5, 3.0, 10);
        let cl = classify_elements(&reg, [&b1, &b2], &TileOptions::default()).unwrap();
        // area above the graph: 2π (3 − 1)
        assert_relative_eq!(cl.area(4), 2.0 * PI * 2.0, max_relative = 1e-8);
    }

    proptest! {
        #[test]
        fn circle_area_any_placement(cx in 0.35f64..0.65, cy in 0.35f64..0.65, r in 0.05f64..0.3, n in 3usize..12) {
            let hole: Arc<dyn TrimCurve> = Arc::new(Ellipse::circle([cx, cy], r, true));
            let reg = Region::new([[0.0, 1.0], [0.0, 1.0]], vec![hole]).unwrap();
            let b = grid(n);
            let crosses = b.iter().any(|v| (v - cx).abs() < r || (v - cy).abs() < r);
            match classify_elements(&reg, [&b, &b], &TileOptions::default()) {
                Ok(cl) => {
                    let exact = 1.0 - PI * r * r;
                    prop_assert!(((cl.area(4) - exact) / exact).abs() < 1e-9);
                }
                Err(IbcmError::RefineRequired { .. }) => prop_assert!(!crosses),
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}
