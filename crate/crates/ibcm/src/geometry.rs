//! Surface maps, composed boundary-layer maps and differential-geometry frames.

use crate::bspline::{slot, TensorSplineSpace};
use crate::error::{IbcmError, Result};
use nalgebra::Matrix3;
use num_dual::{DualNum, DualStruct};
use std::sync::Arc;

/// Scalar usable by the geometric kernels: `f64` or a forward-mode dual number.
pub trait Scalar: DualNum<Primitive = f64> + DualStruct<Real = f64> + Copy + Send + Sync {}
impl<T: DualNum<Primitive = f64> + DualStruct<Real = f64> + Copy + Send + Sync> Scalar for T {}

pub type V3<S> = [S; 3];

#[inline]
pub fn c<S: Scalar>(v: f64) -> S {
    S::from(v)
}
#[inline]
pub fn dot<S: Scalar>(a: &V3<S>, b: &V3<S>) -> S {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
#[inline]
pub fn cross<S: Scalar>(a: &V3<S>, b: &V3<S>) -> V3<S> {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}
#[inline]
pub fn add<S: Scalar>(a: &V3<S>, b: &V3<S>) -> V3<S> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
#[inline]
pub fn sub<S: Scalar>(a: &V3<S>, b: &V3<S>) -> V3<S> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
#[inline]
pub fn scale<S: Scalar>(s: S, a: &V3<S>) -> V3<S> {
    [s * a[0], s * a[1], s * a[2]]
}
#[inline]
pub fn norm<S: Scalar>(a: &V3<S>) -> S {
    dot(a, a).sqrt()
}
pub fn lift<S: Scalar>(a: &[f64; 3]) -> V3<S> {
    [c(a[0]), c(a[1]), c(a[2])]
}
pub fn re3<S: Scalar>(a: &V3<S>) -> [f64; 3] {
    [a[0].re(), a[1].re(), a[2].re()]
}

/// Partial derivatives up to third order of a map `R² → R^D`.
///
/// `d2[a][b]` and `d3[a][b][c]` are stored fully (symmetric copies included).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet<const D: usize> {
    pub v: [f64; D],
    pub d1: [[f64; D]; 2],
    pub d2: [[[f64; D]; 2]; 2],
    pub d3: [[[[f64; D]; 2]; 2]; 2],
}

impl<const D: usize> Jet<D> {
    pub fn zero() -> Self {
        Self { v: [0.0; D], d1: [[0.0; D]; 2], d2: [[[0.0; D]; 2]; 2], d3: [[[[0.0; D]; 2]; 2]; 2] }
    }

    /// Component of the derivative with multi-index counts `(i, j)` (i along 1, j along 2).
    pub fn partial(&self, i: usize, j: usize) -> [f64; D] {
        let mut idx = Vec::new();
        idx.extend(std::iter::repeat(0).take(i));
        idx.extend(std::iter::repeat(1).take(j));
        match idx.len() {
            0 => self.v,
            1 => self.d1[idx[0]],
            2 => self.d2[idx[0]][idx[1]],
            3 => self.d3[idx[0]][idx[1]][idx[2]],
            _ => [0.0; D],
        }
    }

    /// Fills symmetric copies from a list of partials indexed by [`slot`].
    pub fn from_slots(p: &[[f64; D]; 10]) -> Self {
        let mut j = Self::zero();
        j.v = p[0];
        for a in 0..2 {
            j.d1[a] = p[slot(1 - a, a)];
            for b in 0..2 {
                let n2 = a + b;
                j.d2[a][b] = p[slot(2 - n2, n2)];
                for cc in 0..2 {
                    let n3 = a + b + cc;
                    j.d3[a][b][cc] = p[slot(3 - n3, n3)];
                }
            }
        }
        j
    }
}

pub type MapJet = Jet<3>;
pub type PlanarJet = Jet<2>;

/// Evaluable map `(s1, s2) ↦ x ∈ E³` over a parametric rectangle.
pub trait SurfaceMap: Send + Sync + std::fmt::Debug {
    /// Value and derivatives up to `order ≤ 3`; higher entries may be left zero.
    fn jet(&self, s: [f64; 2], order: usize) -> Result<MapJet>;
    /// `[[s1_lo, s1_hi], [s2_lo, s2_hi]]`.
    fn domain(&self) -> [[f64; 2]; 2];
}

/// Planar map `(η1, η2) ↦ ξ` used as inner map of a boundary layer.
pub trait PlanarMap: Send + Sync + std::fmt::Debug {
    fn jet(&self, eta: [f64; 2], order: usize) -> Result<PlanarJet>;
    fn domain(&self) -> [[f64; 2]; 2];
}

/// Affine plane `x = o + s1 e1 + s2 e2`.
#[derive(Debug, Clone)]
pub struct Plane {
    pub origin: [f64; 3],
    pub e1: [f64; 3],
    pub e2: [f64; 3],
    pub rect: [[f64; 2]; 2],
}

impl Plane {
    /// The `x3 = 0` plane over a rectangle with `x = (s1, s2, 0)`.
    pub fn xy(rect: [[f64; 2]; 2]) -> Self {
        Self { origin: [0.0; 3], e1: [1.0, 0.0, 0.0], e2: [0.0, 1.0, 0.0], rect }
    }
}

impl SurfaceMap for Plane {
    fn jet(&self, s: [f64; 2], _order: usize) -> Result<MapJet> {
        let mut j = MapJet::zero();
        for k in 0..3 {
            j.v[k] = self.origin[k] + s[0] * self.e1[k] + s[1] * self.e2[k];
        }
        j.d1 = [self.e1, self.e2];
        Ok(j)
    }
    fn domain(&self) -> [[f64; 2]; 2] {
        self.rect
    }
}

/// Cylinder `x = Q (−R cos s1, −R sin s1, s2)` with a fixed rotation `Q`.
#[derive(Debug, Clone)]
pub struct AngularCylinder {
    pub radius: f64,
    pub rotation: Matrix3<f64>,
    pub rect: [[f64; 2]; 2],
}

impl AngularCylinder {
    /// Rotation about the global y axis by `angle`, as in `[[c,0,−s],[0,1,0],[s,0,c]]`.
    pub fn rot_y(angle: f64) -> Matrix3<f64> {
        let (s, c) = angle.sin_cos();
        Matrix3::new(c, 0.0, -s, 0.0, 1.0, 0.0, s, 0.0, c)
    }
}

impl SurfaceMap for AngularCylinder {
    fn jet(&self, s: [f64; 2], _order: usize) -> Result<MapJet> {
        let r = self.radius;
        let (sn, cs) = s[0].sin_cos();
        // derivatives along s1 cycle through (−cos, −sin) → (sin, −cos) → (cos, sin) → (−sin, cos)
        let d1s = [[r * sn, -r * cs, 0.0], [r * cs, r * sn, 0.0], [-r * sn, r * cs, 0.0]];
        let local = |k: usize, l: usize| -> [f64; 3] {
            match (k, l) {
                (0, 0) => [-r * cs, -r * sn, s[1]],
                (0, 1) => [0.0, 0.0, 1.0],
                (k, 0) => d1s[k - 1],
                _ => [0.0; 3],
            }
        };
        let q = &self.rotation;
        let rot = |v: [f64; 3]| -> [f64; 3] {
            let w = q * nalgebra::Vector3::from(v);
            [w[0], w[1], w[2]]
        };
        let mut p = [[0.0; 3]; 10];
        for o in 0..=3 {
            for jj in 0..=o {
                p[slot(o - jj, jj)] = rot(local(o - jj, jj));
            }
        }
        Ok(MapJet::from_slots(&p))
    }
    fn domain(&self) -> [[f64; 2]; 2] {
        self.rect
    }
}

/// Arc-length cylinder `x = (−R sin(s1/R), R cos(s1/R), s2)`.
#[derive(Debug, Clone)]
pub struct ArcCylinder {
    pub radius: f64,
    pub rect: [[f64; 2]; 2],
}

impl SurfaceMap for ArcCylinder {
    fn jet(&self, s: [f64; 2], _order: usize) -> Result<MapJet> {
        let r = self.radius;
        let (sn, cs) = (s[0] / r).sin_cos();
        let k = 1.0 / r;
        let mut p = [[0.0; 3]; 10];
        p[slot(0, 0)] = [-r * sn, r * cs, s[1]];
        p[slot(1, 0)] = [-cs, -sn, 0.0];
        p[slot(0, 1)] = [0.0, 0.0, 1.0];
        p[slot(2, 0)] = [k * sn, -k * cs, 0.0];
        p[slot(3, 0)] = [k * k * cs, k * k * sn, 0.0];
        Ok(MapJet::from_slots(&p))
    }
    fn domain(&self) -> [[f64; 2]; 2] {
        self.rect
    }
}

/// B-spline surface with control points in E³.
#[derive(Debug, Clone)]
pub struct SplineSurface {
    pub space: TensorSplineSpace,
    pub ctrl: Vec<[f64; 3]>,
}

impl SurfaceMap for SplineSurface {
    fn jet(&self, s: [f64; 2], order: usize) -> Result<MapJet> {
        let t = self.space.eval(s[0], s[1], order.min(3))?;
        let mut p = [[0.0; 3]; 10];
        for (k, &i) in t.index.iter().enumerate() {
            for q in 0..10 {
                for m in 0..3 {
                    p[q][m] += t.d[k][q] * self.ctrl[i][m];
                }
            }
        }
        Ok(MapJet::from_slots(&p))
    }
    fn domain(&self) -> [[f64; 2]; 2] {
        let a = self.space.kv[0].domain();
        let b = self.space.kv[1].domain();
        [[a.0, a.1], [b.0, b.1]]
    }
}

/// Affine planar map `ξ = M η + c`.
#[derive(Debug, Clone)]
pub struct AffinePlanar {
    pub m: [[f64; 2]; 2],
    pub c: [f64; 2],
    pub rect: [[f64; 2]; 2],
}

impl PlanarMap for AffinePlanar {
    fn jet(&self, eta: [f64; 2], _order: usize) -> Result<PlanarJet> {
        let mut j = PlanarJet::zero();
        for k in 0..2 {
            j.v[k] = self.m[k][0] * eta[0] + self.m[k][1] * eta[1] + self.c[k];
            j.d1[0][k] = self.m[k][0];
            j.d1[1][k] = self.m[k][1];
        }
        Ok(j)
    }
    fn domain(&self) -> [[f64; 2]; 2] {
        self.rect
    }
}

/// Chain rule for `x(η) = F̂(F̃(η))` up to `order ≤ 3`.
///
/// `outer` holds the partials of `F̂` at `ξ = F̃(η)`, `inner` the partials of `F̃` at `η`.
pub fn compose_derivatives(outer: &MapJet, inner: &PlanarJet, order: usize) -> MapJet {
    let mut out = MapJet::zero();
    out.v = outer.v;
    let x1 = &outer.d1;
    let x2 = &outer.d2;
    let x3 = &outer.d3;
    let g1 = &inner.d1; // g1[a][l] = ∂ξ_l/∂η_a
    let g2 = &inner.d2;
    let g3 = &inner.d3;
    for a in 0..2 {
        for m in 0..3 {
            out.d1[a][m] = (0..2).map(|l| x1[l][m] * g1[a][l]).sum();
        }
    }
    if order >= 2 {
        for a in 0..2 {
            for b in 0..2 {
                for m in 0..3 {
                    let mut v = 0.0;
                    for l in 0..2 {
                        v += x1[l][m] * g2[a][b][l];
                        for u in 0..2 {
                            v += x2[l][u][m] * g1[a][l] * g1[b][u];
                        }
                    }
                    out.d2[a][b][m] = v;
                }
            }
        }
    }
    if order >= 3 {
        for a in 0..2 {
            for b in 0..2 {
                for cc in 0..2 {
                    for m in 0..3 {
                        let mut v = 0.0;
                        for l in 0..2 {
                            v += x1[l][m] * g3[a][b][cc][l];
                            for u in 0..2 {
                                v += x2[l][u][m]
                                    * (g2[a][cc][l] * g1[b][u]
                                        + g1[a][l] * g2[b][cc][u]
                                        + g2[a][b][l] * g1[cc][u]);
                                for w in 0..2 {
                                    v += x3[l][u][w][m] * g1[a][l] * g1[b][u] * g1[cc][w];
                                }
                            }
                        }
                        out.d3[a][b][cc][m] = v;
                    }
                }
            }
        }
    }
    out
}

/// `F̂ ∘ F̃` with derivatives by [`compose_derivatives`].
#[derive(Debug, Clone)]
pub struct ComposedMap {
    pub outer: Arc<dyn SurfaceMap>,
    pub inner: Arc<dyn PlanarMap>,
}

impl SurfaceMap for ComposedMap {
    fn jet(&self, eta: [f64; 2], order: usize) -> Result<MapJet> {
        let gi = self.inner.jet(eta, order)?;
        let go = self.outer.jet([gi.v[0], gi.v[1]], order)?;
        Ok(compose_derivatives(&go, &gi, order))
    }
    fn domain(&self) -> [[f64; 2]; 2] {
        self.inner.domain()
    }
}

/// Frame quantities over a generic scalar.
#[derive(Debug, Clone, Copy)]
pub struct FrameCore<S: Scalar> {
    /// Covariant basis `a_α`.
    pub a: [V3<S>; 2],
    /// Unit normal `a_3`.
    pub a3: V3<S>,
    /// `a_{αβ}`.
    pub met: [[S; 2]; 2],
    /// `a^{αβ}`.
    pub inv: [[S; 2]; 2],
    pub sqrt_a: S,
    /// Contravariant basis `a^α`.
    pub acon: [V3<S>; 2],
    /// `b_{αβ}`.
    pub b: [[S; 2]; 2],
    /// `b^α_β`, first index raised.
    pub bmix: [[S; 2]; 2],
    /// `a_{α,β}`.
    pub da: [[V3<S>; 2]; 2],
    /// `a_{3,α}`.
    pub da3: [V3<S>; 2],
}

/// Builds the frame from first and second partials of the map.
pub fn frame_core<S: Scalar>(d1: &[V3<S>; 2], d2: &[[V3<S>; 2]; 2]) -> FrameCore<S> {
    let a = *d1;
    let n = cross(&a[0], &a[1]);
    let nn = norm(&n);
    let a3 = scale(nn.recip(), &n);
    let met = [[dot(&a[0], &a[0]), dot(&a[0], &a[1])], [dot(&a[1], &a[0]), dot(&a[1], &a[1])]];
    let det = met[0][0] * met[1][1] - met[0][1] * met[1][0];
    let id = det.recip();
    let inv = [[met[1][1] * id, -met[0][1] * id], [-met[1][0] * id, met[0][0] * id]];
    let acon = [
        add(&scale(inv[0][0], &a[0]), &scale(inv[0][1], &a[1])),
        add(&scale(inv[1][0], &a[0]), &scale(inv[1][1], &a[1])),
    ];
    let da = *d2;
    let mut b = [[c::<S>(0.0); 2]; 2];
    for al in 0..2 {
        for be in 0..2 {
            b[al][be] = dot(&a3, &da[al][be]);
        }
    }
    let mut bmix = [[c::<S>(0.0); 2]; 2];
    for al in 0..2 {
        for be in 0..2 {
            bmix[al][be] = inv[al][0] * b[0][be] + inv[al][1] * b[1][be];
        }
    }
    // Weingarten: a_{3,α} = −b_{αβ} a^β
    let da3 = [
        scale(-c::<S>(1.0), &add(&scale(b[0][0], &acon[0]), &scale(b[0][1], &acon[1]))),
        scale(-c::<S>(1.0), &add(&scale(b[1][0], &acon[0]), &scale(b[1][1], &acon[1]))),
    ];
    FrameCore { a, a3, met, inv, sqrt_a: nn, acon, b, bmix, da, da3 }
}

/// Per-point differential-geometry bundle.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceFrame {
    pub x: [f64; 3],
    pub core: FrameCore<f64>,
    /// `Γ^γ_{αβ}` stored as `[γ][α][β]` when third-order data is requested.
    pub christoffel: Option<[[[f64; 2]; 2]; 2]>,
    /// `b_{αβ,γ}` stored as `[α][β][γ]`.
    pub db: Option<[[[f64; 2]; 2]; 2]>,
}

/// Frame at a point of a map; `order = 3` also fills Christoffel symbols and `b_{αβ,γ}`.
pub fn surface_frame(map: &dyn SurfaceMap, s: [f64; 2], order: usize) -> Result<SurfaceFrame> {
    let j = map.jet(s, order.max(2))?;
    frame_from_jet(&j, order, s)
}

/// Frame from an already evaluated jet; `at` is only used in error messages.
pub fn frame_from_jet(j: &MapJet, order: usize, at: [f64; 2]) -> Result<SurfaceFrame> {
    let scale_len = (dot(&j.d1[0], &j.d1[0]) * dot(&j.d1[1], &j.d1[1])).sqrt();
    let n = cross(&j.d1[0], &j.d1[1]);
    if !(norm(&n) > 1e-7 * scale_len.max(1e-300)) || !scale_len.is_finite() {
        return Err(IbcmError::SingularGeometry(at[0], at[1]));
    }
    let core = frame_core::<f64>(&j.d1, &j.d2);
    let (mut christoffel, mut db) = (None, None);
    if order >= 3 {
        let mut g = [[[0.0; 2]; 2]; 2];
        let mut d = [[[0.0; 2]; 2]; 2];
        for al in 0..2 {
            for be in 0..2 {
                for ga in 0..2 {
                    g[ga][al][be] = dot(&core.acon[ga], &core.da[al][be]);
                    d[al][be][ga] = dot(&core.da3[ga], &core.da[al][be]) + dot(&core.a3, &j.d3[al][be][ga]);
                }
            }
        }
        christoffel = Some(g);
        db = Some(d);
    }
    Ok(SurfaceFrame { x: j.v, core, christoffel, db })
}

/// Frame along a boundary or interface curve.
#[derive(Debug, Clone, Copy)]
pub struct CurveFrame {
    /// In-plane unit normal.
    pub n: [f64; 3],
    /// Unit tangent `t = a_3 × n`.
    pub t: [f64; 3],
    pub n_cov: [f64; 2],
    pub t_cov: [f64; 2],
    pub n_con: [f64; 2],
    pub t_con: [f64; 2],
    /// `|dx/dτ|` for the curve parameter `τ`.
    pub jacobian: f64,
}

/// Normal and tangent over a generic scalar.
///
/// `vel` is `ds/dτ` in the patch parameters; `outward` is a parametric direction
/// pointing to the side the normal must face.
pub fn curve_core<S: Scalar>(f: &FrameCore<S>, vel: [S; 2], outward: [f64; 2]) -> (V3<S>, V3<S>, S) {
    let v = add(&scale(vel[0], &f.a[0]), &scale(vel[1], &f.a[1]));
    let jac = norm(&v);
    let tdir = scale(jac.recip(), &v);
    let mut n = cross(&tdir, &f.a3);
    let o = add(&scale(c::<S>(outward[0]), &f.a[0]), &scale(c::<S>(outward[1]), &f.a[1]));
    if dot(&n, &o).re() < 0.0 {
        n = scale(-c::<S>(1.0), &n);
    }
    let t = cross(&f.a3, &n);
    (n, t, jac)
}

pub fn curve_frame(f: &SurfaceFrame, vel: [f64; 2], outward: [f64; 2]) -> Result<CurveFrame> {
    let speed = (vel[0] * vel[0] + vel[1] * vel[1]).sqrt();
    if !(speed > 0.0) {
        return Err(IbcmError::SingularCurve(0.0));
    }
    let (n, t, jacobian) = curve_core::<f64>(&f.core, vel, outward);
    let k = &f.core;
    Ok(CurveFrame {
        n,
        t,
        n_cov: [dot(&n, &k.a[0]), dot(&n, &k.a[1])],
        t_cov: [dot(&t, &k.a[0]), dot(&t, &k.a[1])],
        n_con: [dot(&n, &k.acon[0]), dot(&n, &k.acon[1])],
        t_con: [dot(&t, &k.acon[0]), dot(&t, &k.acon[1])],
        jacobian,
    })
}

/// Relative mismatch between the analytic jet of `map` and central differences at `s`.
///
/// Uses step `h`, and retries with a Richardson-extrapolated difference when the
/// plain check exceeds `tol`. Returns the worst relative error over all components.
pub fn fd_check(map: &dyn SurfaceMap, s: [f64; 2], h: f64, scale: f64, tol: f64) -> Result<f64> {
    let j = map.jet(s, 3)?;
    let diff = |step: f64, ord: usize| -> Result<f64> {
        let mut worst: f64 = 0.0;
        for a in 0..2 {
            let mut sp = s;
            let mut sm = s;
            sp[a] += step;
            sm[a] -= step;
            let jp = map.jet(sp, 3)?;
            let jm = map.jet(sm, 3)?;
            for m in 0..3 {
                let e = match ord {
                    1 => (jp.v[m] - jm.v[m]) / (2.0 * step) - j.d1[a][m],
                    _ => 0.0,
                };
                worst = worst.max(e.abs());
                for b in 0..2 {
                    let e2 = (jp.d1[b][m] - jm.d1[b][m]) / (2.0 * step) - j.d2[b][a][m];
                    worst = worst.max(e2.abs());
                    for cc in 0..2 {
                        let e3 = (jp.d2[b][cc][m] - jm.d2[b][cc][m]) / (2.0 * step) - j.d3[b][cc][a][m];
                        worst = worst.max(e3.abs());
                    }
                }
            }
        }
        Ok(worst / scale)
    };
    let plain = diff(h, 1)?;
    if plain <= tol {
        return Ok(plain);
    }
    // Richardson: D(h/2) + (D(h/2) − D(h))/3 is fourth order
    let mut worst: f64 = 0.0;
    for a in 0..2 {
        let eval = |step: f64| -> Result<(MapJet, MapJet)> {
            let mut sp = s;
            let mut sm = s;
            sp[a] += step;
            sm[a] -= step;
            Ok((map.jet(sp, 3)?, map.jet(sm, 3)?))
        };
        let (p1, m1) = eval(h)?;
        let (p2, m2) = eval(h / 2.0)?;
        let rich = |f1: f64, g1: f64, f2: f64, g2: f64| {
            let d1 = (f1 - g1) / (2.0 * h);
            let d2 = (f2 - g2) / h;
            d2 + (d2 - d1) / 3.0
        };
        for m in 0..3 {
            worst = worst.max((rich(p1.v[m], m1.v[m], p2.v[m], m2.v[m]) - j.d1[a][m]).abs());
            for b in 0..2 {
                let e = rich(p1.d1[b][m], m1.d1[b][m], p2.d1[b][m], m2.d1[b][m]) - j.d2[b][a][m];
                worst = worst.max(e.abs());
                for cc in 0..2 {
                    let e = rich(p1.d2[b][cc][m], m1.d2[b][cc][m], p2.d2[b][cc][m], m2.d2[b][cc][m])
                        - j.d3[b][cc][a][m];
                    worst = worst.max(e.abs());
                }
            }
        }
    }
    Ok(worst / scale)
}

/// Seeds a dual-number copy of a map jet for derivative slots `[∂/∂s1, ∂/∂s2, d/dτ]`.
///
/// The third slot is the derivative along a curve with velocity `vel`.
pub fn dual_jet(j: &MapJet, vel: [f64; 2]) -> ([V3<D3>; 2], [[V3<D3>; 2]; 2]) {
    let mk = |re: f64, e: [f64; 3]| D3::new(re, num_dual::Derivative::some(nalgebra::SVector::from(e)));
    let mut d1 = [[D3::from(0.0); 3]; 2];
    let mut d2 = [[[D3::from(0.0); 3]; 2]; 2];
    for a in 0..2 {
        for m in 0..3 {
            let e0 = j.d2[a][0][m];
            let e1 = j.d2[a][1][m];
            d1[a][m] = mk(j.d1[a][m], [e0, e1, e0 * vel[0] + e1 * vel[1]]);
            for b in 0..2 {
                let f0 = j.d3[a][b][0][m];
                let f1 = j.d3[a][b][1][m];
                d2[a][b][m] = mk(j.d2[a][b][m], [f0, f1, f0 * vel[0] + f1 * vel[1]]);
            }
        }
    }
    (d1, d2)
}

/// Dual number with three derivative slots.
pub type D3 = num_dual::DualSVec64<3>;

/// Derivative slot `k` of a dual number.
pub fn eps(x: &D3, k: usize) -> f64 {
    x.eps.0.as_ref().map_or(0.0, |v| v[k])
}

/// Dual number from value and slots.
pub fn d3(re: f64, e: [f64; 3]) -> D3 {
    D3::new(re, num_dual::Derivative::some(nalgebra::SVector::from(e)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    /// Quadratic planar map used to exercise full chain-rule terms.
    #[derive(Debug)]
    struct Quad;
    impl PlanarMap for Quad {
        fn jet(&self, e: [f64; 2], _o: usize) -> Result<PlanarJet> {
            let mut j = PlanarJet::zero();
            j.v = [3.0 + 2.0 * e[0] + 0.3 * e[0] * e[1] + 0.2 * e[1] * e[1], -10.0 + 5.0 * e[1] + 0.1 * e[0] * e[0]];
            j.d1 = [[2.0 + 0.3 * e[1], 0.2 * e[0]], [0.3 * e[0] + 0.4 * e[1], 5.0]];
            j.d2[0][0] = [0.0, 0.2];
            j.d2[0][1] = [0.3, 0.0];
            j.d2[1][0] = [0.3, 0.0];
            j.d2[1][1] = [0.4, 0.0];
            Ok(j)
        }
        fn domain(&self) -> [[f64; 2]; 2] {
            [[0.0, 1.0], [0.0, 1.0]]
        }
    }

    fn maps() -> Vec<(Arc<dyn SurfaceMap>, f64)> {
        let cyl_a = AngularCylinder { radius: 1.0, rotation: Matrix3::identity(), rect: [[0.0, 2.0 * PI], [-4.0, 4.0]] };
        let cyl_b = AngularCylinder { radius: 0.6, rotation: AngularCylinder::rot_y(-PI / 3.0), rect: [[0.0, 2.0 * PI], [0.0, 4.0]] };
        let arc = ArcCylinder { radius: 20.0, rect: [[-10.0 * PI, 10.0 * PI], [-50.0, 50.0]] };
        let comp = ComposedMap { outer: Arc::new(arc.clone()), inner: Arc::new(Quad) };
        vec![
            (Arc::new(Plane::xy([[0.0, 1.0], [0.0, 1.0]])), 1.0),
            (Arc::new(cyl_a), 1.0),
            (Arc::new(cyl_b), 1.0),
            (Arc::new(arc), 20.0),
            (Arc::new(comp), 20.0),
        ]
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for (m, sc) in maps() {
            let d = m.domain();
            for k in 0..5 {
                let t = [0.2 + 0.13 * k as f64, 0.7 - 0.11 * k as f64];
                let s = [d[0][0] + t[0] * (d[0][1] - d[0][0]), d[1][0] + t[1] * (d[1][1] - d[1][0])];
                let e = fd_check(m.as_ref(), s, 1e-5, sc, 1e-6).unwrap();
                assert!(e < 1e-6, "{m:?} fd error {e}");
            }
        }
    }

    #[test]
    fn identity_and_affine_inner_maps() {
        let cyl = ArcCylinder { radius: 20.0, rect: [[-30.0, 30.0], [-50.0, 50.0]] };
        let id = AffinePlanar { m: [[1.0, 0.0], [0.0, 1.0]], c: [0.0, 0.0], rect: [[-1.0, 1.0], [-1.0, 1.0]] };
        let outer = cyl.jet([0.3, 0.4], 3).unwrap();
        let inner = id.jet([0.3, 0.4], 3).unwrap();
        let comp = compose_derivatives(&outer, &inner, 3);
        assert_eq!(comp, outer);
        let m = [[2.0, 0.5], [-0.3, 1.5]];
        let aff = AffinePlanar { m, c: [0.1, 0.2], rect: [[-1.0, 1.0], [-1.0, 1.0]] };
        let ij = aff.jet([0.3, 0.4], 3).unwrap();
        let oj = cyl.jet([ij.v[0], ij.v[1]], 3).unwrap();
        let comp = compose_derivatives(&oj, &ij, 3);
        for a in 0..2 {
            for b in 0..2 {
                for cc in 0..2 {
                    for k in 0..3 {
                        let mut e2 = 0.0;
                        let mut e3 = 0.0;
                        for l in 0..2 {
                            for u in 0..2 {
                                e2 += m[l][a] * oj.d2[l][u][k] * m[u][b];
                                for w in 0..2 {
                                    e3 += oj.d3[l][u][w][k] * m[l][a] * m[u][b] * m[w][cc];
                                }
                            }
                        }
                        assert_abs_diff_eq!(comp.d2[a][b][k], e2, epsilon = 1e-13);
                        assert_abs_diff_eq!(comp.d3[a][b][cc][k], e3, epsilon = 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn plane_and_cylinder_frames() {
        let p = Plane::xy([[0.0, 1.0], [0.0, 1.0]]);
        let f = surface_frame(&p, [0.3, 0.3], 3).unwrap();
        assert_abs_diff_eq!(f.core.sqrt_a, 1.0);
        assert_eq!(f.core.b, [[0.0; 2]; 2]);
        assert_eq!(f.core.met, [[1.0, 0.0], [0.0, 1.0]]);
        let r = 20.0;
        let cyl = ArcCylinder { radius: r, rect: [[-31.4, 31.4], [-50.0, 50.0]] };
        let f = surface_frame(&cyl, [7.0, 3.0], 3).unwrap();
        assert_abs_diff_eq!(f.core.met[0][0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(f.core.met[1][1], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(f.core.b[0][0].abs(), 1.0 / r, epsilon = 1e-14);
        assert_abs_diff_eq!(f.core.b[1][1], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(f.core.b[0][1], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn frame_identities_on_all_maps() {
        for (m, _) in maps() {
            let d = m.domain();
            for k in 0..100 {
                let t = [((k * 37) % 100) as f64 / 100.0, ((k * 61) % 100) as f64 / 100.0];
                let s = [d[0][0] + (0.05 + 0.9 * t[0]) * (d[0][1] - d[0][0]), d[1][0] + (0.05 + 0.9 * t[1]) * (d[1][1] - d[1][0])];
                let f = surface_frame(m.as_ref(), s, 3).unwrap();
                let k0 = &f.core;
                for al in 0..2 {
                    for be in 0..2 {
                        let delta = if al == be { 1.0 } else { 0.0 };
                        assert_abs_diff_eq!(dot(&k0.a[al], &k0.acon[be]), delta, epsilon = 1e-12);
                        assert_abs_diff_eq!(dot(&k0.da3[al], &k0.a[be]), -k0.b[al][be], epsilon = 1e-10);
                        let g = f.christoffel.unwrap();
                        let rec = add(&add(&scale(g[0][al][be], &k0.a[0]), &scale(g[1][al][be], &k0.a[1])), &scale(k0.b[al][be], &k0.a3));
                        for q in 0..3 {
                            assert_abs_diff_eq!(rec[q], k0.da[al][be][q], epsilon = 1e-10);
                        }
                    }
                    assert_abs_diff_eq!(dot(&k0.a3, &k0.a[al]), 0.0, epsilon = 1e-12);
                }
                assert_abs_diff_eq!(norm(&k0.a3), 1.0, epsilon = 1e-12);
                assert_abs_diff_eq!(k0.b[0][1], k0.b[1][0], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn curve_frames() {
        let p = Plane::xy([[0.0, 1.0], [0.0, 1.0]]);
        let f = surface_frame(&p, [1.0, 0.5], 2).unwrap();
        let cf = curve_frame(&f, [0.0, 1.0], [1.0, 0.0]).unwrap();
        assert_eq!(cf.n, [1.0, 0.0, 0.0]);
        assert_eq!(cf.t, [0.0, 1.0, 0.0]);
        // circle of radius R around (0.5, 0.5), outward = away from centre
        let r = 0.2;
        for k in 0..16 {
            let th = 2.0 * PI * k as f64 / 16.0;
            let s = [0.5 + r * th.cos(), 0.5 + r * th.sin()];
            let f = surface_frame(&p, s, 2).unwrap();
            let cf = curve_frame(&f, [-r * th.sin(), r * th.cos()], [th.cos(), th.sin()]).unwrap();
            assert_abs_diff_eq!(cf.n[0], th.cos(), epsilon = 1e-14);
            assert_abs_diff_eq!(cf.n[1], th.sin(), epsilon = 1e-14);
            assert_abs_diff_eq!(cf.jacobian, r, epsilon = 1e-14);
        }
        let cyl = AngularCylinder { radius: 0.6, rotation: AngularCylinder::rot_y(-PI / 3.0), rect: [[0.0, 2.0 * PI], [0.0, 4.0]] };
        let f = surface_frame(&cyl, [1.0, 2.0], 2).unwrap();
        let cf = curve_frame(&f, [0.3, -0.8], [0.8, 0.3]).unwrap();
        assert_abs_diff_eq!(dot(&cf.n, &cf.t), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(dot(&cf.n, &f.core.a3), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(norm(&cf.n), 1.0, epsilon = 1e-12);
        assert!(curve_frame(&f, [0.0, 0.0], [1.0, 0.0]).is_err());
    }

    #[test]
    fn degenerate_metric_is_reported() {
        let p = Plane { origin: [0.0; 3], e1: [1.0, 0.0, 0.0], e2: [2.0, 0.0, 0.0], rect: [[0.0, 1.0], [0.0, 1.0]] };
        assert!(matches!(surface_frame(&p, [0.5, 0.5], 2), Err(IbcmError::SingularGeometry(..))));
    }

    #[test]
    fn dual_frame_matches_finite_difference_of_curvature() {
        let cyl = AngularCylinder { radius: 0.6, rotation: AngularCylinder::rot_y(-PI / 3.0), rect: [[0.0, 2.0 * PI], [0.0, 4.0]] };
        let comp = ComposedMap { outer: Arc::new(cyl), inner: Arc::new(Quad) };
        let s = [0.31, 0.22];
        let j = comp.jet(s, 3).unwrap();
        let (d1, d2) = dual_jet(&j, [0.0, 0.0]);
        let fc = frame_core(&d1, &d2);
        let f = surface_frame(&comp, s, 3).unwrap();
        let db = f.db.unwrap();
        for al in 0..2 {
            for be in 0..2 {
                for ga in 0..2 {
                    assert_abs_diff_eq!(eps(&fc.b[al][be], ga), db[al][be][ga], epsilon = 1e-10);
                }
            }
        }
        let h = 1e-5;
        let fp = surface_frame(&comp, [s[0] + h, s[1]], 2).unwrap();
        let fm = surface_frame(&comp, [s[0] - h, s[1]], 2).unwrap();
        let fd = (fp.core.inv[0][1] - fm.core.inv[0][1]) / (2.0 * h);
        assert!((eps(&fc.inv[0][1], 0) - fd).abs() < 1e-6 * fd.abs().max(1.0));
    }
}
