//! Case catalog: geometry, sections, boundary conditions and loads of the benchmark problems.

use crate::assembly::{
    BcValue, Edge, ExactField, FieldSolution, Interface, NitscheParams, Patch, Problem, RotationCoupling, Side, StrongBc,
    WeakBc,
};
use crate::bspline::KnotVector;
use crate::domain::{BoundaryLayer, Ellipse, Region, Segment, TileOptions, TrimCurve};
use crate::error::{IbcmError, Result};
use crate::geometry::{Plane, SurfaceMap};
use crate::material::{Laminate, Layer};
use crate::shell::Theory;
use crate::verify::ManufacturedSolution;
use serde::{Deserialize, Serialize};
use std::str::FromStr;
use std::sync::Arc;

/// Discretization strategy of a trimmed boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Conformal boundary layer coupled by Nitsche's method.
    #[default]
    Ibcm,
    /// Single trimmed patch with weak Dirichlet conditions on the cut.
    TrimmedSinglePatch,
}

impl FromStr for Mode {
    type Err = IbcmError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ibcm" => Ok(Mode::Ibcm),
            "trimmed-single-patch" | "trimmed" => Ok(Mode::TrimmedSinglePatch),
            _ => Err(IbcmError::InvalidInput(format!("unknown mode '{s}'"))),
        }
    }
}

/// Catalogued cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseId {
    Plate,
    Mixed,
    Cylinders,
    Crack,
}

impl FromStr for CaseId {
    type Err = IbcmError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "plate" => Ok(CaseId::Plate),
            "mixed" => Ok(CaseId::Mixed),
            "cylinders" => Ok(CaseId::Cylinders),
            "crack" => Ok(CaseId::Crack),
            _ => Err(IbcmError::InvalidInput(format!("unknown case '{s}'"))),
        }
    }
}

/// Plate with a circular hole.
pub mod plate {
    use super::*;

    pub const HOLE_RADIUS: f64 = 0.2;
    pub const OFFSET: f64 = 0.1;
    pub const CENTER: [f64; 2] = [0.5, 0.5];

    /// Four-ply `[0, 90, 90, 0]` laminate of total thickness `tau`.
    pub fn laminate(tau: f64) -> Result<Laminate> {
        let ply = Layer { e1: 25e9, e2: 1e9, nu12: 0.25, g12: 0.4e9, g31: 0.4e9, g32: 0.4e9, angle: 0.0, thickness: 1.0 };
        Laminate::plies(ply, &[0.0, 90.0, 90.0, 0.0], tau)
    }

    /// Hole boundary, clockwise so that the plate lies on its left.
    pub fn hole() -> Ellipse {
        Ellipse::circle(CENTER, HOLE_RADIUS, true)
    }

    /// Trimmed interior region of an IBCM mesh (outside the offset circle) or of the single patch.
    pub fn region(mode: Mode) -> Result<Region> {
        let r = match mode {
            Mode::Ibcm => HOLE_RADIUS + OFFSET,
            Mode::TrimmedSinglePatch => HOLE_RADIUS,
        };
        Region::new([[0.0, 1.0], [0.0, 1.0]], vec![Arc::new(Ellipse::circle(CENTER, r, true))])
    }

    /// Elements per direction of the interior patch.
    pub fn interior_elements(nref: usize) -> usize {
        1 << nref
    }

    /// Boundary-layer elements `[along, across]`: the offset direction is refined once the
    /// interior element size reaches the offset distance.
    pub fn layer_elements(nref: usize) -> [usize; 2] {
        [2 << nref, 1 << nref.saturating_sub(3)]
    }

    /// Options of one plate discretization.
    #[derive(Debug, Clone)]
    pub struct Options {
        pub theory: Theory,
        /// Theory of the boundary layer when it differs from the interior.
        pub layer_theory: Option<Theory>,
        pub p: usize,
        pub tau: f64,
        pub nref: usize,
        pub mode: Mode,
        pub params: NitscheParams,
        pub tiles: TileOptions,
    }

    impl Options {
        pub fn new(theory: Theory, p: usize, tau: f64, nref: usize) -> Self {
            Self { theory, layer_theory: None, p, tau, nref, mode: Mode::Ibcm, params: NitscheParams::default(), tiles: TileOptions::default() }
        }
    }

    /// Rotation coupling used by a theory on its own.
    pub fn rotation_mode(t: Theory) -> RotationCoupling {
        match t {
            Theory::Rm => RotationCoupling::Vector,
            Theory::Kl => RotationCoupling::Normal,
        }
    }

    /// Geometry, sections and coupling of the plate without boundary conditions or loads.
    /// Returns the problem and the global mesh size.
    pub fn skeleton(o: &Options) -> Result<(Problem, f64)> {
        let n = interior_elements(o.nref);
        let h = 1.0 / n as f64;
        let lam = laminate(o.tau)?;
        let plane: Arc<dyn SurfaceMap> = Arc::new(Plane::xy([[0.0, 1.0], [0.0, 1.0]]));
        let kv = [KnotVector::uniform(0.0, 1.0, n, o.p)?, KnotVector::uniform(0.0, 1.0, n, o.p)?];
        let region = region(o.mode)?;
        let interior = Patch::new("interior", plane.clone(), None, kv, Some(&region), &o.tiles, o.theory, lam.clone())?;
        let mut prob = Problem { params: o.params, ..Default::default() };
        prob.patches.push(interior);
        if o.mode == Mode::Ibcm {
            let lt = o.layer_theory.unwrap_or(o.theory);
            let hole = hole();
            let layer = BoundaryLayer::from_offset(Arc::new(hole.clone()), OFFSET, layer_elements(o.nref), Some(&hole))?;
            let kv = layer.knot_vectors(o.p)?;
            prob.patches.push(Patch::new("layer", plane, Some(layer.map.clone()), kv, None, &o.tiles, lt, lam)?);
            let rotation = if lt == o.theory { rotation_mode(o.theory) } else { RotationCoupling::Vector };
            prob.interfaces.push(Interface {
                name: "layer-interior".into(),
                plus: Side { patch: 1, trace: Arc::new(Segment { a: [0.0, 1.0], b: [1.0, 1.0] }), left: false },
                minus: Side { patch: 0, trace: layer.c1.clone(), left: true },
                h: h.min(OFFSET),
                rotation,
                displacement: true,
            });
        }
        Ok((prob, h))
    }

    /// Side of the hole boundary as seen from the patch that owns it.
    pub fn hole_side(mode: Mode) -> Side {
        match mode {
            Mode::Ibcm => Side { patch: 1, trace: Arc::new(Segment { a: [0.0, 0.0], b: [1.0, 0.0] }), left: true },
            Mode::TrimmedSinglePatch => Side { patch: 0, trace: Arc::new(hole()), left: true },
        }
    }

    fn outer_bcs(prob: &mut Problem, comps: Vec<usize>, value: BcValue) {
        for e in [Edge::S1Min, Edge::S1Max, Edge::S2Min, Edge::S2Max] {
            prob.strong_bcs.push(StrongBc { patch: 0, edge: e, comps: comps.clone(), value });
        }
    }

    /// Manufactured-solution benchmark: outer edges strong, hole strong on the layer or weak
    /// on the trimmed patch.
    pub fn manufactured(o: &Options) -> Result<(Problem, f64)> {
        let (mut prob, h) = skeleton(o)?;
        let exact: Arc<dyn ExactField> = Arc::new(ManufacturedSolution::plate());
        prob.exact = Some(exact);
        let all: Vec<usize> = (0..o.theory.n_comp()).collect();
        outer_bcs(&mut prob, all.clone(), BcValue::Exact);
        match o.mode {
            Mode::Ibcm => {
                let lt = o.layer_theory.unwrap_or(o.theory);
                let comps = (0..lt.n_comp()).collect();
                prob.strong_bcs.push(StrongBc { patch: 1, edge: Edge::S2Min, comps, value: BcValue::Exact });
                if lt == Theory::Kl {
                    prob.weak_bcs.push(WeakBc { side: hole_side(o.mode), h: h.min(OFFSET), displacement: false, rotation: true });
                }
            }
            Mode::TrimmedSinglePatch => {
                prob.weak_bcs.push(WeakBc { side: hole_side(o.mode), h, displacement: true, rotation: true });
            }
        }
        Ok((prob, h))
    }

    /// Clamped hole, simply supported outer edges and a uniform transverse load.
    pub fn clamped(o: &Options, load: f64) -> Result<(Problem, f64)> {
        let (mut prob, h) = skeleton(o)?;
        outer_bcs(&mut prob, vec![0, 1, 2], BcValue::Zero);
        match o.mode {
            Mode::Ibcm => {
                let lt = o.layer_theory.unwrap_or(o.theory);
                prob.strong_bcs.push(StrongBc { patch: 1, edge: Edge::S2Min, comps: (0..lt.n_comp()).collect(), value: BcValue::Zero });
                if lt == Theory::Kl {
                    prob.weak_bcs.push(WeakBc { side: hole_side(o.mode), h: h.min(OFFSET), displacement: false, rotation: true });
                }
            }
            Mode::TrimmedSinglePatch => {
                prob.weak_bcs.push(WeakBc { side: hole_side(o.mode), h, displacement: true, rotation: true });
            }
        }
        prob.loads.body = Some(Arc::new(move |_| [0.0, 0.0, load]));
        Ok((prob, h))
    }
}

/// Mixed-theory plate: Reissner-Mindlin boundary layer around a Kirchhoff-Love interior.
pub mod mixed {
    use super::*;

    pub const LOAD: f64 = 1e3;

    pub fn options(p: usize, tau: f64, nref: usize, mixed: bool) -> plate::Options {
        let mut o = plate::Options::new(Theory::Kl, p, tau, nref);
        if mixed {
            o.layer_theory = Some(Theory::Rm);
        }
        o
    }

    pub fn problem(p: usize, tau: f64, nref: usize, mixed: bool) -> Result<(Problem, f64)> {
        plate::clamped(&options(p, tau, nref, mixed), LOAD)
    }
}

/// Rectangular plates used by the patch and splitting tests.
pub mod patch_tests {
    use super::*;

    pub fn laminate() -> Laminate {
        Laminate::single(Layer::isotropic(1000.0, 0.3, 0.05))
    }

    fn rect_patch(name: &str, rect: [[f64; 2]; 2], n: [usize; 2], p: usize, theory: Theory) -> Result<Patch> {
        let kv = [KnotVector::uniform(rect[0][0], rect[0][1], n[0], p)?, KnotVector::uniform(rect[1][0], rect[1][1], n[1], p)?];
        let plane: Arc<dyn SurfaceMap> = Arc::new(Plane::xy(rect));
        Patch::new(name, plane, None, kv, None, &TileOptions::default(), theory, laminate())
    }

    /// Unit square, either one patch or two patches split at `ξ1 = 1/2` and coupled by Nitsche.
    pub fn square(theory: Theory, p: usize, n: usize, split: bool, params: NitscheParams, exact: Arc<dyn ExactField>) -> Result<Problem> {
        let comps: Vec<usize> = (0..theory.n_comp()).collect();
        let mut prob = Problem { params, exact: Some(exact), ..Default::default() };
        let bc = |patch, edge| StrongBc { patch, edge, comps: comps.clone(), value: BcValue::Exact };
        if !split {
            prob.patches.push(rect_patch("square", [[0.0, 1.0], [0.0, 1.0]], [n, n], p, theory)?);
            for e in [Edge::S1Min, Edge::S1Max, Edge::S2Min, Edge::S2Max] {
                prob.strong_bcs.push(bc(0, e));
            }
            return Ok(prob);
        }
        prob.patches.push(rect_patch("left", [[0.0, 0.5], [0.0, 1.0]], [n / 2, n], p, theory)?);
        prob.patches.push(rect_patch("right", [[0.5, 1.0], [0.0, 1.0]], [n / 2, n], p, theory)?);
        for e in [Edge::S1Min, Edge::S2Min, Edge::S2Max] {
            prob.strong_bcs.push(bc(0, e));
        }
        for e in [Edge::S1Max, Edge::S2Min, Edge::S2Max] {
            prob.strong_bcs.push(bc(1, e));
        }
        let cut: Arc<dyn TrimCurve> = Arc::new(Segment { a: [0.5, 0.0], b: [0.5, 1.0] });
        prob.interfaces.push(Interface {
            name: "split".into(),
            plus: Side { patch: 0, trace: cut.clone(), left: false },
            minus: Side { patch: 1, trace: cut, left: true },
            h: 1.0 / n as f64,
            rotation: plate::rotation_mode(theory),
            displacement: true,
        });
        Ok(prob)
    }

    /// Unit square with its corner `ξ1 + ξ2 > 1.7` removed: a trimmed interior and a
    /// straight boundary layer between `ξ1 + ξ2 = 1.5` and the cut.
    pub fn corner_cut(theory: Theory, p: usize, n: usize, exact: Arc<dyn ExactField>) -> Result<Problem> {
        let plane: Arc<dyn SurfaceMap> = Arc::new(Plane::xy([[0.0, 1.0], [0.0, 1.0]]));
        let offset: Arc<dyn TrimCurve> = Arc::new(Segment { a: [1.0, 0.5], b: [0.5, 1.0] });
        let cut: Arc<dyn TrimCurve> = Arc::new(Segment { a: [1.0, 0.7], b: [0.7, 1.0] });
        let region = Region::new([[0.0, 1.0], [0.0, 1.0]], vec![offset.clone()])?;
        let kv = [KnotVector::uniform(0.0, 1.0, n, p)?, KnotVector::uniform(0.0, 1.0, n, p)?];
        let interior = Patch::new("interior", plane.clone(), None, kv, Some(&region), &TileOptions::default(), theory, laminate())?;
        let layer = BoundaryLayer::from_curves(cut, offset.clone(), [n.div_ceil(2).max(1), 1])?;
        let lkv = layer.knot_vectors(p)?;
        let lp = Patch::new("layer", plane, Some(layer.map.clone()), lkv, None, &TileOptions::default(), theory, laminate())?;
        let comps: Vec<usize> = (0..theory.n_comp()).collect();
        let bc = |patch, edge| StrongBc { patch, edge, comps: comps.clone(), value: BcValue::Exact };
        let mut prob = Problem { patches: vec![interior, lp], exact: Some(exact), ..Default::default() };
        for e in [Edge::S1Min, Edge::S1Max, Edge::S2Min, Edge::S2Max] {
            prob.strong_bcs.push(bc(0, e));
        }
        for e in [Edge::S1Min, Edge::S1Max, Edge::S2Min] {
            prob.strong_bcs.push(bc(1, e));
        }
        prob.interfaces.push(Interface {
            name: "layer-interior".into(),
            plus: Side { patch: 1, trace: Arc::new(Segment { a: [0.0, 1.0], b: [1.0, 1.0] }), left: false },
            minus: Side { patch: 0, trace: offset, left: true },
            h: 1.0 / n as f64,
            rotation: plate::rotation_mode(theory),
            displacement: true,
        });
        Ok(prob)
    }
}

/// Relative L2 difference `‖u_a − u_b‖ / ‖u_b‖` of the displacements of two problems sharing
/// patch maps and meshes (kinematics may differ).
pub fn relative_difference(pa: &Problem, sa: &FieldSolution, pb: &Problem, sb: &FieldSolution) -> Result<f64> {
    if pa.patches.len() != pb.patches.len() {
        return Err(IbcmError::InvalidInput("problems have different patch layouts".into()));
    }
    let (mut d, mut n) = (0.0, 0.0);
    for (pi, patch) in pa.patches.iter().enumerate() {
        for rule in patch.cells.rules(patch.degree() + 3) {
            for (x, &w) in rule.points.iter().zip(&rule.weights) {
                let a = sa.state(patch, pi, *x, 1)?;
                let b = sb.state(&pb.patches[pi], pi, *x, 1)?;
                let da = w * a.frame.core.sqrt_a;
                for m in 0..3 {
                    d += da * (a.u.v[m] - b.u.v[m]).powi(2);
                    n += da * b.u.v[m].powi(2);
                }
            }
        }
    }
    Ok((d / n).sqrt())
}

/// Whether the patch centred at `center` lies on the left of the segment `a → b`.
fn left_of(a: [f64; 2], b: [f64; 2], center: [f64; 2]) -> bool {
    (b[0] - a[0]) * (center[1] - a[1]) - (b[1] - a[1]) * (center[0] - a[0]) > 0.0
}

fn rect_center(r: &[[f64; 2]; 2]) -> [f64; 2] {
    [0.5 * (r[0][0] + r[0][1]), 0.5 * (r[1][0] + r[1][1])]
}

/// Two intersecting cylinders joined by conformal boundary layers along their intersection.
pub mod cylinders {
    use super::*;
    use crate::assembly::StrongCoupling;
    use crate::domain::{normal_offset, Reversed, Shifted, SplineCurve};
    use crate::geometry::AngularCylinder;
    use crate::domain::uniform_breaks;
    use std::f64::consts::PI;

    pub const LENGTH: f64 = 4.0;
    pub const RADIUS_A: f64 = 1.0;
    pub const RADIUS_B: f64 = 0.6;
    pub const ANGLE: f64 = -PI / 3.0;
    pub const OFFSET: f64 = 0.15;
    pub const FIT_TOLERANCE: f64 = 1e-9;

    pub fn laminate() -> Laminate {
        Laminate::single(Layer::isotropic(100e9, 0.3, 0.01))
    }

    pub fn map_a() -> AngularCylinder {
        AngularCylinder { radius: RADIUS_A, rotation: nalgebra::Matrix3::identity(), rect: [[0.0, 2.0 * PI], [-LENGTH / 2.0, LENGTH / 2.0]] }
    }

    pub fn map_b() -> AngularCylinder {
        AngularCylinder { radius: RADIUS_B, rotation: AngularCylinder::rot_y(ANGLE), rect: [[0.0, 2.0 * PI], [0.0, LENGTH]] }
    }

    /// Axial coordinate of cylinder b where it meets cylinder a, as a function of its angle.
    pub fn intersection_height(sigma: f64) -> f64 {
        let (s, c) = ANGLE.sin_cos();
        let y = -RADIUS_B * sigma.sin();
        let lx = -RADIUS_B * sigma.cos();
        // x = c lx − s t must reach the outer sheet of cylinder a
        ((RADIUS_A * RADIUS_A - y * y).sqrt() - c * lx) / (-s)
    }

    /// Parameters of cylinder a of a point on it.
    pub fn params_a(x: [f64; 3]) -> [f64; 2] {
        [(-x[1]).atan2(-x[0]).rem_euclid(2.0 * PI), x[2]]
    }

    /// Options of one discretization.
    #[derive(Debug, Clone)]
    pub struct Options {
        pub theory: Theory,
        pub p: usize,
        pub level: usize,
        pub params: NitscheParams,
        pub tiles: TileOptions,
    }

    impl Options {
        pub fn new(theory: Theory, p: usize, level: usize) -> Self {
            Self { theory, p, level, params: NitscheParams { beta: 100.0, ..NitscheParams::default() }, tiles: TileOptions::default() }
        }
    }

    /// Patch indices of the assembled problem.
    pub const A: usize = 0;
    pub const B: usize = 1;
    pub const LAYER_A: usize = 2;
    pub const LAYER_B: usize = 3;

    /// Intersection curve in the parameters of both cylinders, sharing `t ∈ [0, 1]`.
    pub fn intersection_curves() -> Result<(Arc<dyn TrimCurve>, Arc<dyn TrimCurve>)> {
        let graph = |t: f64| [2.0 * PI * t, intersection_height(2.0 * PI * t)];
        let mb = map_b();
        let on_a = |t: f64| {
            let s = graph(t);
            params_a(mb.jet(s, 0).map(|j| j.v).unwrap_or([f64::NAN; 3]))
        };
        let mut n_el = 32;
        loop {
            let (cb, rb) = SplineCurve::fit(graph, [2.0 * PI, 0.0], n_el, 5, true)?;
            let (ca, ra) = SplineCurve::fit(on_a, [0.0, 0.0], n_el, 5, true)?;
            if rb.max(ra) <= FIT_TOLERANCE {
                return Ok((Arc::new(ca), Arc::new(cb)));
            }
            if n_el >= 1024 {
                return Err(IbcmError::Geometry(format!("intersection fit residual {:.2e} exceeds {FIT_TOLERANCE:.0e}", rb.max(ra))));
            }
            n_el *= 2;
        }
    }

    pub fn elements(level: usize) -> ([usize; 2], [usize; 2], [usize; 2]) {
        let k = 1 << level;
        ([16 * k, 16 * k], [16 * k, 16 * k], [16 * k, k.max(1)])
    }

    /// Problem under the uniform surface force `(1, 1, 1)` MPa, simply supported ends.
    pub fn problem(o: &Options) -> Result<Problem> {
        let (ea, eb, el) = elements(o.level);
        let (ga, gb) = intersection_curves()?;
        // layer a lies outside the intersection loop: traverse it clockwise
        let area = {
            let pts = crate::domain::polyline(ga.as_ref(), 512);
            pts.windows(2).map(|w| w[0][0] * w[1][1] - w[1][0] * w[0][1]).sum::<f64>()
        };
        let ga: Arc<dyn TrimCurve> = if area > 0.0 { Arc::new(Reversed(ga)) } else { ga };
        let reversed = area > 0.0;
        let off_a: Arc<dyn TrimCurve> = Arc::new(normal_offset(ga.as_ref(), OFFSET)?);
        let off_b: Arc<dyn TrimCurve> = Arc::new(Shifted { base: gb.clone(), shift: [0.0, OFFSET] });
        let layer_a = BoundaryLayer::from_curves(ga, off_a.clone(), el)?;
        let layer_b = BoundaryLayer::from_curves(gb, off_b.clone(), el)?;
        let lam = laminate();
        let ma: Arc<dyn SurfaceMap> = Arc::new(map_a());
        let mb: Arc<dyn SurfaceMap> = Arc::new(map_b());
        let periodic = |a: f64, b: f64, n: usize| KnotVector::periodic(&uniform_breaks(a, b, n), o.p);
        let ra = map_a().rect;
        let rb = map_b().rect;
        let kva = [periodic(ra[0][0], ra[0][1], ea[0])?, KnotVector::uniform(ra[1][0], ra[1][1], ea[1], o.p)?];
        let kvb = [periodic(rb[0][0], rb[0][1], eb[0])?, KnotVector::uniform(rb[1][0], rb[1][1], eb[1], o.p)?];
        let reg_a = Region::new(ra, vec![off_a.clone()])?;
        let reg_b = Region::new(rb, vec![off_b.clone()])?;
        let kvl = || -> Result<[KnotVector; 2]> { Ok([periodic(0.0, 1.0, el[0])?, KnotVector::uniform(0.0, 1.0, el[1], o.p)?]) };
        let patches = vec![
            Patch::new("cylinder-a", ma.clone(), None, kva, Some(&reg_a), &o.tiles, o.theory, lam.clone())?,
            Patch::new("cylinder-b", mb.clone(), None, kvb, Some(&reg_b), &o.tiles, o.theory, lam.clone())?,
            Patch::new("layer-a", ma, Some(layer_a.map.clone()), kvl()?, None, &o.tiles, o.theory, lam.clone())?,
            Patch::new("layer-b", mb, Some(layer_b.map.clone()), kvl()?, None, &o.tiles, o.theory, lam)?,
        ];
        let h_a = 2.0 * PI * RADIUS_A / ea[0] as f64;
        let h_b = 2.0 * PI * RADIUS_B / eb[0] as f64;
        let h_l = (OFFSET / el[1] as f64).min(h_b);
        let top = || -> Arc<dyn TrimCurve> { Arc::new(Segment { a: [0.0, 1.0], b: [1.0, 1.0] }) };
        let rot = plate::rotation_mode(o.theory);
        let mut prob = Problem { patches, params: o.params, ..Default::default() };
        prob.interfaces.push(Interface {
            name: "layer-a/cylinder-a".into(),
            plus: Side { patch: LAYER_A, trace: top(), left: false },
            minus: Side { patch: A, trace: off_a, left: true },
            h: h_a.min(h_l),
            rotation: rot,
            displacement: true,
        });
        prob.interfaces.push(Interface {
            name: "layer-b/cylinder-b".into(),
            plus: Side { patch: LAYER_B, trace: top(), left: false },
            minus: Side { patch: B, trace: off_b, left: true },
            h: h_b.min(h_l),
            rotation: rot,
            displacement: true,
        });
        // the two layers meet along the intersection at a kink
        let bottom: Arc<dyn TrimCurve> = Arc::new(Segment { a: [0.0, 0.0], b: [1.0, 0.0] });
        let (minus_trace, minus_left): (Arc<dyn TrimCurve>, bool) =
            if reversed { (Arc::new(Segment { a: [1.0, 0.0], b: [0.0, 0.0] }), false) } else { (bottom.clone(), true) };
        prob.interfaces.push(Interface {
            name: "layer-a/layer-b".into(),
            plus: Side { patch: LAYER_A, trace: bottom, left: true },
            minus: Side { patch: LAYER_B, trace: minus_trace, left: minus_left },
            h: h_l,
            rotation: RotationCoupling::Normal,
            displacement: false,
        });
        prob.couplings.push(StrongCoupling { a: (LAYER_A, Edge::S2Min), b: (LAYER_B, Edge::S2Min), comps: vec![0, 1, 2] });
        for (patch, edge) in [(A, Edge::S2Min), (A, Edge::S2Max), (B, Edge::S2Max)] {
            prob.strong_bcs.push(StrongBc { patch, edge, comps: vec![0, 1, 2], value: BcValue::Zero });
        }
        prob.loads.body = Some(Arc::new(|_| [1e6, 1e6, 1e6]));
        Ok(prob)
    }
}

/// Pressurized half cylinder with an axial through crack.
pub mod crack {
    use super::*;
    use crate::assembly::{EdgeLoad, Pin};
    use crate::domain::Polygon;
    use crate::geometry::ArcCylinder;
    use std::f64::consts::PI;

    pub const RADIUS: f64 = 20.0;
    pub const LENGTH: f64 = 100.0;
    pub const HALF_ANGLE: f64 = PI / 2.0;
    pub const HALF_CRACK: f64 = 5.0;
    pub const THICKNESS: f64 = 1.0;
    pub const NU: f64 = 1.0 / 3.0;
    /// Young's modulus in N/mm² (results are reported nondimensionally).
    pub const YOUNG: f64 = 1000.0;
    pub const PRESSURE: f64 = 1.0;
    /// Half width of the boundary-layer block around the crack; kept off the interior grid lines.
    pub const WIDTH: f64 = 5.3;

    pub const INTERIOR: usize = 0;
    /// Tip blocks above and below the crack.
    pub const TIP_TOP: usize = 1;
    pub const TIP_BOTTOM: usize = 2;
    /// Blocks on either face of the crack.
    pub const FACE_LEFT: usize = 3;
    pub const FACE_RIGHT: usize = 4;

    pub fn laminate() -> Laminate {
        Laminate::single(Layer::isotropic(YOUNG, NU, THICKNESS))
    }

    pub fn rect() -> [[f64; 2]; 2] {
        let s = RADIUS * HALF_ANGLE;
        [[-s, s], [-LENGTH / 2.0, LENGTH / 2.0]]
    }

    /// Blocks in base parameters: tips, then crack faces.
    pub fn blocks() -> [[[f64; 2]; 2]; 4] {
        let (a, w) = (HALF_CRACK, WIDTH);
        [[[-w, w], [a, a + w]], [[-w, w], [-a - w, -a]], [[-w, 0.0], [-a, a]], [[0.0, w], [-a, a]]]
    }

    #[derive(Debug, Clone)]
    pub struct Options {
        pub theory: Theory,
        pub p: usize,
        pub level: usize,
        pub params: NitscheParams,
        pub tiles: TileOptions,
    }

    impl Options {
        pub fn new(theory: Theory, p: usize, level: usize) -> Self {
            Self { theory, p, level, params: NitscheParams::default(), tiles: TileOptions::default() }
        }
    }

    /// Interior elements and elements per block edge.
    pub fn elements(level: usize) -> ([usize; 2], usize) {
        let k = 1 << level;
        ([12 * k, 20 * k], 4 * k)
    }

    fn block_patch(o: &Options, name: &str, r: [[f64; 2]; 2], n: [usize; 2]) -> Result<Patch> {
        let map: Arc<dyn SurfaceMap> = Arc::new(ArcCylinder { radius: RADIUS, rect: r });
        let kv = [KnotVector::uniform(r[0][0], r[0][1], n[0], o.p)?, KnotVector::uniform(r[1][0], r[1][1], n[1], o.p)?];
        Patch::new(name, map, None, kv, None, &o.tiles, o.theory, laminate())
    }

    fn segment_side(patch: usize, a: [f64; 2], b: [f64; 2], r: &[[f64; 2]; 2]) -> Side {
        Side { patch, trace: Arc::new(Segment { a, b }), left: left_of(a, b, rect_center(r)) }
    }

    pub fn problem(o: &Options) -> Result<Problem> {
        let (ni, nb) = elements(o.level);
        let r = rect();
        let (a, w) = (HALF_CRACK, WIDTH);
        let hole = Polygon::rect_hole([[-w, w], [-a - w, a + w]]);
        let region = Region::new(r, vec![Arc::new(hole)])?;
        let map: Arc<dyn SurfaceMap> = Arc::new(ArcCylinder { radius: RADIUS, rect: r });
        let kv = [KnotVector::uniform(r[0][0], r[0][1], ni[0], o.p)?, KnotVector::uniform(r[1][0], r[1][1], ni[1], o.p)?];
        let mut patches = vec![Patch::new("interior", map, None, kv, Some(&region), &o.tiles, o.theory, laminate())?];
        let bl = blocks();
        let names = ["tip-top", "tip-bottom", "face-left", "face-right"];
        let counts = [[2 * nb, nb], [2 * nb, nb], [nb, 2 * nb], [nb, 2 * nb]];
        for k in 0..4 {
            patches.push(block_patch(o, names[k], bl[k], counts[k])?);
        }
        let h_int = ((r[0][1] - r[0][0]) / ni[0] as f64).min((r[1][1] - r[1][0]) / ni[1] as f64);
        let h_blk = w / nb as f64;
        let mut prob = Problem { patches, params: o.params, ..Default::default() };
        let rot = plate::rotation_mode(o.theory);
        let mut couple = |name: &str, plus: usize, minus: usize, p0: [f64; 2], p1: [f64; 2], h: f64| {
            let rp = if plus == INTERIOR { r } else { bl[plus - 1] };
            let rm = if minus == INTERIOR { r } else { bl[minus - 1] };
            // the interior lies outside the blocks: its side is opposite to the block's
            let minus_side = if minus == INTERIOR {
                let s = segment_side(plus, p0, p1, &rp);
                Side { patch: INTERIOR, trace: s.trace.clone(), left: !s.left }
            } else {
                segment_side(minus, p0, p1, &rm)
            };
            prob.interfaces.push(Interface {
                name: name.into(),
                plus: segment_side(plus, p0, p1, &rp),
                minus: minus_side,
                h,
                rotation: rot,
                displacement: true,
            });
        };
        let hb = h_blk.min(h_int);
        // blocks against the trimmed interior
        couple("tip-top/top", TIP_TOP, INTERIOR, [-w, a + w], [w, a + w], hb);
        couple("tip-top/left", TIP_TOP, INTERIOR, [-w, a], [-w, a + w], hb);
        couple("tip-top/right", TIP_TOP, INTERIOR, [w, a], [w, a + w], hb);
        couple("tip-bottom/bottom", TIP_BOTTOM, INTERIOR, [-w, -a - w], [w, -a - w], hb);
        couple("tip-bottom/left", TIP_BOTTOM, INTERIOR, [-w, -a - w], [-w, -a], hb);
        couple("tip-bottom/right", TIP_BOTTOM, INTERIOR, [w, -a - w], [w, -a], hb);
        couple("face-left/left", FACE_LEFT, INTERIOR, [-w, -a], [-w, a], hb);
        couple("face-right/right", FACE_RIGHT, INTERIOR, [w, -a], [w, a], hb);
        // blocks against each other, never across the crack
        couple("face-left/tip-top", FACE_LEFT, TIP_TOP, [-w, a], [0.0, a], h_blk);
        couple("face-right/tip-top", FACE_RIGHT, TIP_TOP, [0.0, a], [w, a], h_blk);
        couple("face-left/tip-bottom", FACE_LEFT, TIP_BOTTOM, [-w, -a], [0.0, -a], h_blk);
        couple("face-right/tip-bottom", FACE_RIGHT, TIP_BOTTOM, [0.0, -a], [w, -a], h_blk);
        let sym_comps = if o.theory == Theory::Rm { vec![1, 3] } else { vec![1] };
        for e in [Edge::S1Min, Edge::S1Max] {
            prob.strong_bcs.push(StrongBc { patch: INTERIOR, edge: e, comps: sym_comps.clone(), value: BcValue::Zero });
        }
        if o.theory == Theory::Rm {
            for e in [Edge::S2Min, Edge::S2Max] {
                prob.strong_bcs.push(StrongBc { patch: INTERIOR, edge: e, comps: vec![4], value: BcValue::Zero });
            }
        }
        let f0 = PRESSURE * RADIUS / 2.0;
        prob.loads.edges.push(EdgeLoad { patch: INTERIOR, edge: Edge::S2Min, force: [0.0, 0.0, -f0] });
        prob.loads.edges.push(EdgeLoad { patch: INTERIOR, edge: Edge::S2Max, force: [0.0, 0.0, f0] });
        prob.loads.pressure = PRESSURE;
        // the loads are self-equilibrated in x and z: pin those translations at one corner
        prob.pins.push(Pin { patch: INTERIOR, func: [0, 0], comp: 0 });
        prob.pins.push(Pin { patch: INTERIOR, func: [0, 0], comp: 2 });
        Ok(prob)
    }

    /// Parameters of the point at distance `r` ahead of the upper crack tip.
    pub fn tip_point(r: f64) -> [f64; 2] {
        [0.0, HALF_CRACK + r]
    }
}
