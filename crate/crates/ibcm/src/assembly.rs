//! Discrete variational statements: interior stiffness, loads, Nitsche interface
//! and boundary terms, strong constraints, Jacobi scaling and the Cholesky solve.
//!
//! Degrees of freedom are numbered per patch as `offset + func * n_comp + comp`
//! ("raw" indices). Displacement components are Cartesian; Reissner-Mindlin
//! rotation components are the covariant `θ_α` of the patch.

use crate::bspline::{l2_project_edge, KnotVector, TensorEval, TensorSplineSpace};
use crate::domain::{classify_elements, segment_interface, segment_rule, Classification, InterfaceSegment, Rect, Region, TileOptions, TrimCurve};
use crate::error::{IbcmError, Result};
use crate::geometry::{
    compose_derivatives, curve_frame, dot, frame_from_jet, ComposedMap, FrameCore, MapJet, PlanarMap, SurfaceFrame, SurfaceMap,
};
use crate::material::{CovariantStiffness, GeneralizedStiffness, Laminate};
use crate::shell::{
    basis_jet, christoffel, dual_ujet, energy_matrix, generalized_stress, kl_rotation, kl_strains, rm_fluxes, rm_strains,
    rotation_vector, EdgeBasis, KlFluxContext, Strains, Stress, ThJet, Theory, UJet,
};
use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Debug;
use std::io::Write;
use std::sync::Arc;

/// Cartesian vector field of the position.
pub type VectorField = Arc<dyn Fn([f64; 3]) -> [f64; 3] + Send + Sync>;

/// Nitsche parameters shared by all weak couplings of a problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NitscheParams {
    /// `+1` symmetric, `−1` antisymmetric, `0` incomplete.
    pub gamma1: f64,
    /// Weight of the `+` side in the flux average.
    pub gamma2: f64,
    pub beta: f64,
}

impl Default for NitscheParams {
    fn default() -> Self {
        Self { gamma1: 1.0, gamma2: 1.0, beta: 10.0 }
    }
}

impl NitscheParams {
    pub fn validate(&self) -> Result<()> {
        if ![-1.0, 0.0, 1.0].contains(&self.gamma1) {
            return Err(IbcmError::InvalidInput(format!("gamma1 must be -1, 0 or 1, got {}", self.gamma1)));
        }
        if !(0.0..=1.0).contains(&self.gamma2) {
            return Err(IbcmError::InvalidInput(format!("gamma2 must lie in [0, 1], got {}", self.gamma2)));
        }
        if !(self.beta > 0.0) {
            return Err(IbcmError::InvalidInput(format!("beta must be positive, got {}", self.beta)));
        }
        Ok(())
    }

    /// `(μ_u, μ_θ) = (βEτ/h, βEτ³/h)`.
    pub fn penalties(&self, e: f64, tau: f64, h: f64) -> (f64, f64) {
        let mu = self.beta * e * tau / h;
        (mu, mu * tau * tau)
    }
}

/// One spline patch: map, trimmed space, quadrature cells, kinematics and section.
#[derive(Debug, Clone)]
pub struct Patch {
    pub name: String,
    /// Map from the patch parameters to E³ (already composed for boundary layers).
    pub map: Arc<dyn SurfaceMap>,
    /// Map from the patch parameters to the base surface parameters, for layers.
    pub inner: Option<Arc<dyn PlanarMap>>,
    pub space: TensorSplineSpace,
    pub cells: Classification,
    pub theory: Theory,
    pub laminate: Laminate,
    pub stiffness: GeneralizedStiffness,
}

impl Patch {
    /// Builds a patch; `region` trims the parametric rectangle of the knot vectors.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        outer: Arc<dyn SurfaceMap>,
        inner: Option<Arc<dyn PlanarMap>>,
        kv: [KnotVector; 2],
        region: Option<&Region>,
        tiles: &TileOptions,
        theory: Theory,
        laminate: Laminate,
    ) -> Result<Self> {
        let p = kv[0].degree().min(kv[1].degree());
        if theory == Theory::Kl && p < 2 {
            return Err(IbcmError::InvalidInput(format!("Kirchhoff-Love patch '{name}' needs degree >= 2, got {p}")));
        }
        let stiffness = laminate.abds()?;
        let map: Arc<dyn SurfaceMap> = match &inner {
            Some(i) => Arc::new(ComposedMap { outer, inner: i.clone() }),
            None => outer,
        };
        let (a, b) = (kv[0].domain(), kv[1].domain());
        let full = Region::full([[a.0, a.1], [b.0, b.1]]);
        let breaks = [kv[0].breaks().to_vec(), kv[1].breaks().to_vec()];
        let cells = classify_elements(region.unwrap_or(&full), [&breaks[0], &breaks[1]], tiles)?;
        let mut space = TensorSplineSpace::new(kv[0].clone(), kv[1].clone());
        space.restrict_to_elements(|e1, e2| cells.is_active(e1, e2));
        Ok(Self { name: name.to_string(), map, inner, space, cells, theory, laminate, stiffness })
    }

    pub fn degree(&self) -> usize {
        let d = self.space.degree();
        d[0].max(d[1])
    }

    pub fn n_comp(&self) -> usize {
        self.theory.n_comp()
    }

    pub fn n_dofs(&self) -> usize {
        self.space.n_active() * self.n_comp()
    }

    pub fn breaks(&self) -> [&[f64]; 2] {
        [self.space.kv[0].breaks(), self.space.kv[1].breaks()]
    }

    pub fn rect(&self) -> Rect {
        let (a, b) = (self.space.kv[0].domain(), self.space.kv[1].domain());
        [[a.0, a.1], [b.0, b.1]]
    }

    pub fn is_trimmed(&self) -> bool {
        let (_, partial, empty) = self.cells.count();
        partial + empty > 0
    }

    /// Base-surface parameters of a patch point.
    pub fn base_point(&self, s: [f64; 2]) -> Result<[f64; 2]> {
        match &self.inner {
            Some(i) => Ok(i.jet(s, 0)?.v),
            None => Ok(s),
        }
    }

    /// Pulls a field given over the base parameters back to the patch parameters (third order).
    pub fn pull(&self, s: [f64; 2], f: impl Fn([f64; 2]) -> MapJet) -> Result<MapJet> {
        match &self.inner {
            Some(i) => {
                let gi = i.jet(s, 3)?;
                Ok(compose_derivatives(&f(gi.v), &gi, 3))
            }
            None => Ok(f(s)),
        }
    }

    fn clamp(&self, s: [f64; 2]) -> [f64; 2] {
        let r = self.rect();
        [s[0].clamp(r[0][0], r[0][1]), s[1].clamp(r[1][0], r[1][1])]
    }
}

/// Closed-form solution used in manufactured-solution mode.
///
/// Both fields are Cartesian vectors given over the base parameters with
/// derivatives up to third order.
pub trait ExactField: Send + Sync + Debug {
    fn displacement(&self, xi: [f64; 2]) -> MapJet;
    /// Rotation vector `θ` (Reissner-Mindlin patches only).
    fn rotation(&self, _xi: [f64; 2]) -> MapJet {
        MapJet::zero()
    }
}

/// Side of a parametric rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Edge {
    S1Min,
    S1Max,
    S2Min,
    S2Max,
}

impl Edge {
    /// Parameter direction held fixed along the edge.
    pub fn normal_dir(self) -> usize {
        match self {
            Edge::S1Min | Edge::S1Max => 0,
            _ => 1,
        }
    }

    pub fn tangent_dir(self) -> usize {
        1 - self.normal_dir()
    }

    pub fn is_max(self) -> bool {
        matches!(self, Edge::S1Max | Edge::S2Max)
    }

    /// Point of the edge at tangent coordinate `u`.
    pub fn point(self, r: &Rect, u: f64) -> [f64; 2] {
        let d = self.normal_dir();
        let v = if self.is_max() { r[d][1] } else { r[d][0] };
        if d == 0 {
            [v, u]
        } else {
            [u, v]
        }
    }
}

/// Active functions supported on an edge as `(tangent index, compact index)`.
pub fn edge_functions(space: &TensorSplineSpace, edge: Edge) -> Result<Vec<(usize, usize)>> {
    let d = edge.normal_dir();
    let kn = &space.kv[d];
    if kn.is_periodic() {
        return Err(IbcmError::InvalidInput("periodic direction has no edge".into()));
    }
    let k = if edge.is_max() { kn.n_funcs() - 1 } else { 0 };
    let nt = space.kv[1 - d].n_funcs();
    Ok((0..nt)
        .filter_map(|t| {
            let (i, j) = if d == 0 { (k, t) } else { (t, k) };
            space.compact_index(i, j).map(|c| (t, c))
        })
        .collect())
}

/// Value imposed by a strong Dirichlet condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BcValue {
    Zero,
    /// L2 projection of the exact field onto the edge space.
    Exact,
}

/// Strong Dirichlet condition on some components of a patch edge.
#[derive(Debug, Clone)]
pub struct StrongBc {
    pub patch: usize,
    pub edge: Edge,
    pub comps: Vec<usize>,
    pub value: BcValue,
}

/// Single degree of freedom fixed to zero (removal of rigid modes).
#[derive(Debug, Clone, Copy)]
pub struct Pin {
    pub patch: usize,
    pub func: [usize; 2],
    pub comp: usize,
}

/// Strong coupling of matching edges of two patches.
#[derive(Debug, Clone)]
pub struct StrongCoupling {
    pub a: (usize, Edge),
    pub b: (usize, Edge),
    pub comps: Vec<usize>,
}

/// How rotations enter a weak coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RotationCoupling {
    /// Full rotation vectors `θ_α a^α` and moment vectors `M_n`.
    Vector,
    /// Rotation about the curve tangent `θ · n` and bending moment `M_nn`.
    Normal,
}

/// Curve of an interface or boundary expressed in one patch's parameters.
///
/// All sides of one coupling share the curve parameter `t ∈ [0, 1]`.
#[derive(Debug, Clone)]
pub struct Side {
    pub patch: usize,
    pub trace: Arc<dyn TrimCurve>,
    /// Whether the patch lies on the left of the trace.
    pub left: bool,
}

/// Nitsche coupling between two patches; fluxes are weighted by `γ2` on `plus`.
#[derive(Debug, Clone)]
pub struct Interface {
    pub name: String,
    pub plus: Side,
    pub minus: Side,
    /// Mesh size used in the penalties.
    pub h: f64,
    pub rotation: RotationCoupling,
    /// `false` when displacements are coupled strongly and only rotations remain.
    pub displacement: bool,
}

/// Nitsche imposition of Dirichlet data on a boundary curve of one patch.
///
/// The data is the exact field in manufactured mode and zero otherwise.
#[derive(Debug, Clone)]
pub struct WeakBc {
    pub side: Side,
    pub h: f64,
    pub displacement: bool,
    pub rotation: bool,
}

/// Constant Cartesian force per unit length on a patch edge.
#[derive(Debug, Clone, Copy)]
pub struct EdgeLoad {
    pub patch: usize,
    pub edge: Edge,
    pub force: [f64; 3],
}

/// External loads.
#[derive(Clone, Default)]
pub struct Loads {
    /// Force per unit area.
    pub body: Option<VectorField>,
    /// Traction `p a_3`.
    pub pressure: f64,
    /// Distributed moment vector (tangent to the surface, Reissner-Mindlin only).
    pub moment: Option<VectorField>,
    pub edges: Vec<EdgeLoad>,
}

impl Debug for Loads {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Loads")
            .field("body", &self.body.is_some())
            .field("pressure", &self.pressure)
            .field("moment", &self.moment.is_some())
            .field("edges", &self.edges)
            .finish()
    }
}

/// Complete discrete problem.
#[derive(Debug, Clone, Default)]
pub struct Problem {
    pub patches: Vec<Patch>,
    pub interfaces: Vec<Interface>,
    pub weak_bcs: Vec<WeakBc>,
    pub strong_bcs: Vec<StrongBc>,
    pub couplings: Vec<StrongCoupling>,
    pub pins: Vec<Pin>,
    pub loads: Loads,
    pub params: NitscheParams,
    /// Manufactured solution: right-hand side by the exact-trial route.
    pub exact: Option<Arc<dyn ExactField>>,
}

impl Problem {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let np = self.patches.len();
        let check = |p: usize| {
            if p < np {
                Ok(())
            } else {
                Err(IbcmError::InvalidInput(format!("patch index {p} out of range")))
            }
        };
        for i in &self.interfaces {
            check(i.plus.patch)?;
            check(i.minus.patch)?;
            let (tp, tm) = (self.patches[i.plus.patch].theory, self.patches[i.minus.patch].theory);
            match (tp, tm) {
                (Theory::Rm, Theory::Kl) if self.params.gamma2 != 1.0 => {
                    return Err(IbcmError::Unsupported(format!(
                        "mixed interface '{}' needs gamma2 = 1 (fluxes from the Reissner-Mindlin side)",
                        i.name
                    )))
                }
                (Theory::Kl, Theory::Rm) => {
                    return Err(IbcmError::Unsupported(format!(
                        "mixed interface '{}' must have the Reissner-Mindlin patch on the + side",
                        i.name
                    )))
                }
                _ => {}
            }
            if tp == Theory::Kl && i.rotation == RotationCoupling::Vector {
                return Err(IbcmError::Unsupported(format!("Kirchhoff-Love interface '{}' couples the normal rotation only", i.name)));
            }
            if !(i.h > 0.0) {
                return Err(IbcmError::InvalidInput(format!("interface '{}' has non-positive h", i.name)));
            }
        }
        for w in &self.weak_bcs {
            check(w.side.patch)?;
        }
        for b in &self.strong_bcs {
            check(b.patch)?;
            let nc = self.patches[b.patch].n_comp();
            if b.comps.iter().any(|&c| c >= nc) {
                return Err(IbcmError::InvalidInput(format!("component out of range on patch {}", b.patch)));
            }
            if b.value == BcValue::Exact && self.exact.is_none() {
                return Err(IbcmError::InvalidInput("exact Dirichlet values need a manufactured solution".into()));
            }
        }
        for c in &self.couplings {
            check(c.a.0)?;
            check(c.b.0)?;
        }
        Ok(())
    }

    /// Assembles, reduces and solves.
    pub fn solve(&self, opts: SolveOptions) -> Result<(Option<FieldSolution>, SpdReport, DofMap)> {
        let (sys, dm) = assemble(self)?;
        let (x, report) = solve(&sys, opts);
        let sol = x.map(|x| FieldSolution::from_free(&dm, &self.patches, &x));
        Ok((sol, report, dm))
    }
}

/// Status of a raw degree of freedom after constraints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dof {
    Free(usize),
    Fixed(f64),
}

/// Global numbering with strong Dirichlet values and identification classes.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub offsets: Vec<usize>,
    pub n_comp: Vec<usize>,
    parent: Vec<usize>,
    fixed: Vec<Option<f64>>,
    status: Vec<Dof>,
    n_free: usize,
}

impl DofMap {
    pub fn new(patches: &[Patch]) -> Self {
        let mut offsets = Vec::with_capacity(patches.len());
        let mut n = 0;
        for p in patches {
            offsets.push(n);
            n += p.n_dofs();
        }
        Self {
            offsets,
            n_comp: patches.iter().map(|p| p.n_comp()).collect(),
            parent: (0..n).collect(),
            fixed: vec![None; n],
            status: Vec::new(),
            n_free: 0,
        }
    }

    pub fn n_raw(&self) -> usize {
        self.parent.len()
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn raw(&self, patch: usize, func: usize, comp: usize) -> usize {
        self.offsets[patch] + func * self.n_comp[patch] + comp
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    pub fn fix(&mut self, raw: usize, value: f64) {
        if self.fixed[raw].is_none() {
            self.fixed[raw] = Some(value);
        }
    }

    /// Merges two degrees of freedom into one class.
    pub fn identify(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }

    /// Resolves classes and numbers the free degrees of freedom.
    pub fn finalize(&mut self) {
        let n = self.n_raw();
        let roots: Vec<usize> = (0..n).map(|i| self.find(i)).collect();
        let mut root_fixed: Vec<Option<f64>> = vec![None; n];
        for i in 0..n {
            if let Some(v) = self.fixed[i] {
                root_fixed[roots[i]].get_or_insert(v);
            }
        }
        let mut root_free = vec![usize::MAX; n];
        let mut k = 0;
        for i in 0..n {
            let r = roots[i];
            if root_fixed[r].is_none() && root_free[r] == usize::MAX {
                root_free[r] = k;
                k += 1;
            }
        }
        self.status = (0..n)
            .map(|i| {
                let r = roots[i];
                match root_fixed[r] {
                    Some(v) => Dof::Fixed(v),
                    None => Dof::Free(root_free[r]),
                }
            })
            .collect();
        self.n_free = k;
    }

    pub fn status(&self, raw: usize) -> Dof {
        self.status[raw]
    }

    /// Number of raw degrees of freedom merged into another one.
    pub fn n_identified(&mut self) -> usize {
        (0..self.n_raw()).filter(|&i| self.find(i) != i).count()
    }
}

/// Compressed sparse rows.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    /// From triplets sorted by `(row, col)` without duplicates.
    fn from_sorted(n: usize, t: &[(usize, usize, f64)]) -> Self {
        let mut row_ptr = vec![0; n + 1];
        for e in t {
            row_ptr[e.0 + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, cols: t.iter().map(|e| e.1).collect(), vals: t.iter().map(|e| e.2).collect() }
    }

    pub fn identity(n: usize) -> Self {
        Self { n, row_ptr: (0..=n).collect(), cols: (0..n).collect(), vals: vec![1.0; n] }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        r.binary_search(&j).map_or(0.0, |k| self.vals[self.row_ptr[i] + k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (self.row_ptr[i]..self.row_ptr[i + 1]).map(|k| self.vals[k] * x[self.cols[k]]).sum())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |K − Kᵀ|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                worst = worst.max((self.vals[k] - self.get(self.cols[k], i)).abs());
            }
        }
        worst
    }

    /// `D K D` for a diagonal `d`, with the diagonal set to exactly one where `d` came from it.
    pub fn scaled(&self, d: &[f64], unit_diagonal: bool) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k];
                out.vals[k] = if unit_diagonal && i == j { 1.0 } else { d[i] * self.vals[k] * d[j] };
            }
        }
        out
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                t.push(Triplet::new(i, self.cols[k], self.vals[k]));
            }
        }
        SparseColMat::try_new_from_triplets(self.n, self.n, &t)
            .map_err(|e| IbcmError::NumericalFailure(format!("sparse matrix construction: {e:?}")))
    }

    /// Writes `row col value` lines (0-based), preceded by a `n nnz` header.
    pub fn write_triplets(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.n, self.nnz())?;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                writeln!(w, "{} {} {:.17e}", i, self.cols[k], self.vals[k])?;
            }
        }
        Ok(())
    }
}

/// Reduced system `K x = b` with Jacobi scaling `d_i = K_ii^{-1/2}`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub k: CsrMatrix,
    pub b: Vec<f64>,
    pub d: Vec<f64>,
}

impl LinearSystem {
    pub fn new(k: CsrMatrix, b: Vec<f64>) -> Self {
        let d = k.diagonal().iter().map(|&v| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 }).collect();
        Self { k, b, d }
    }

    /// Jacobi-scaled matrix with unit diagonal.
    pub fn scaled_matrix(&self) -> CsrMatrix {
        self.k.scaled(&self.d, true)
    }
}

/// Outcome of the Cholesky stability gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpdReport {
    pub spd: bool,
    pub n: usize,
    /// `‖Kx − b‖ / ‖b‖` (NaN when the factorization failed).
    pub residual: f64,
    /// Estimated spectral condition number of the scaled matrix, when requested.
    pub condition: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub jacobi: bool,
    pub condition: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { jacobi: true, condition: false }
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cholesky of the (scaled) system; failure marks the system as not SPD.
pub fn solve(sys: &LinearSystem, opts: SolveOptions) -> (Option<Vec<f64>>, SpdReport) {
    let n = sys.k.n;
    let fail = SpdReport { spd: false, n, residual: f64::NAN, condition: None };
    if n == 0 {
        return (Some(Vec::new()), SpdReport { spd: true, n, residual: 0.0, condition: None });
    }
    if sys.k.diagonal().iter().any(|&v| !(v > 0.0)) {
        return (None, fail);
    }
    let d: Vec<f64> = if opts.jacobi { sys.d.clone() } else { vec![1.0; n] };
    let ks = if opts.jacobi { sys.scaled_matrix() } else { sys.k.clone() };
    let Ok(fm) = ks.to_faer() else { return (None, fail) };
    let llt = match fm.sp_cholesky(faer::Side::Lower) {
        Ok(l) => l,
        Err(_) => return (None, fail),
    };
    let mut rhs = faer::Mat::<f64>::from_fn(n, 1, |i, _| d[i] * sys.b[i]);
    llt.solve_in_place(rhs.as_mut());
    let x: Vec<f64> = (0..n).map(|i| d[i] * rhs[(i, 0)]).collect();
    if x.iter().any(|v| !v.is_finite()) {
        return (None, fail);
    }
    let kx = sys.k.matvec(&x);
    let r: Vec<f64> = kx.iter().zip(&sys.b).map(|(a, b)| a - b).collect();
    let bn = norm2(&sys.b);
    let residual = if bn > 0.0 { norm2(&r) / bn } else { norm2(&r) };
    let condition = opts.condition.then(|| {
        let inv = |v: &[f64]| {
            let mut m = faer::Mat::<f64>::from_fn(n, 1, |i, _| v[i]);
            llt.solve_in_place(m.as_mut());
            (0..n).map(|i| m[(i, 0)]).collect::<Vec<f64>>()
        };
        let hi = power_iteration(n, |v| ks.matvec(v));
        let lo = 1.0 / power_iteration(n, inv);
        hi / lo
    });
    (Some(x), SpdReport { spd: true, n, residual, condition })
}

/// Largest eigenvalue of a symmetric positive operator by power iteration.
fn power_iteration(n: usize, op: impl Fn(&[f64]) -> Vec<f64>) -> f64 {
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 101) as f64 / 101.0).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut lam = 0.0;
    for _ in 0..200 {
        let w = op(&v);
        let l = dot_n(&v, &w);
        let nw = norm2(&w);
        if !(nw > 0.0) {
            return 0.0;
        }
        v = w.iter().map(|x| x / nw).collect();
        if (l - lam).abs() <= 1e-6 * l.abs() {
            return l;
        }
        lam = l;
    }
    lam
}

fn dot_n(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Coefficients of the solved fields, per patch in raw layout.
#[derive(Debug, Clone)]
pub struct FieldSolution {
    pub coeffs: Vec<Vec<f64>>,
}

/// Displacement and rotation at a point with the local frame.
#[derive(Debug, Clone, Copy)]
pub struct PointState {
    pub frame: SurfaceFrame,
    pub u: MapJet,
    /// Covariant rotations (Reissner-Mindlin) or `−a_3 · u_{,α}` (Kirchhoff-Love).
    pub theta: ThJet<f64>,
}

impl FieldSolution {
    pub fn from_free(dm: &DofMap, patches: &[Patch], x: &[f64]) -> Self {
        let coeffs = patches
            .iter()
            .enumerate()
            .map(|(pi, p)| {
                (0..p.n_dofs())
                    .map(|k| match dm.status(dm.offsets[pi] + k) {
                        Dof::Free(i) => x[i],
                        Dof::Fixed(v) => v,
                    })
                    .collect()
            })
            .collect();
        Self { coeffs }
    }

    /// Fields of patch `pi` at parameters `s`, with displacement derivatives up to `order ≤ 3`.
    pub fn state(&self, patch: &Patch, pi: usize, s: [f64; 2], order: usize) -> Result<PointState> {
        let s = patch.clamp(s);
        let jet = patch.map.jet(s, 2)?;
        let frame = frame_from_jet(&jet, 2, s)?;
        let ev = patch.space.eval(s[0], s[1], order.max(1))?;
        let nc = patch.n_comp();
        let c = &self.coeffs[pi];
        let mut slots = [[0.0; 3]; 10];
        let mut th = ThJet::<f64>::zero();
        for (q, &f) in ev.index.iter().enumerate() {
            let d = &ev.d[q];
            for m in 0..3 {
                let v = c[f * nc + m];
                for k in 0..10 {
                    slots[k][m] += d[k] * v;
                }
            }
            if nc == 5 {
                for al in 0..2 {
                    let v = c[f * nc + 3 + al];
                    th.th[al] += d[0] * v;
                    th.dth[al][0] += d[1] * v;
                    th.dth[al][1] += d[2] * v;
                }
            }
        }
        let u = MapJet::from_slots(&slots);
        if nc == 3 {
            th.th = kl_rotation(&frame.core, &UJet::from_jet(&u));
        }
        Ok(PointState { frame, u, theta: th })
    }

    /// Generalized strains and stresses at a point.
    pub fn strains(&self, patch: &Patch, pi: usize, s: [f64; 2]) -> Result<(Strains<f64>, Stress<f64>, PointState)> {
        let st = self.state(patch, pi, s, 2)?;
        let core = &st.frame.core;
        let chr = christoffel(core);
        let e = match patch.theory {
            Theory::Rm => rm_strains(core, &chr, &UJet::from_jet(&st.u), &st.theta),
            Theory::Kl => kl_strains(core, &chr, &UJet::from_jet(&st.u)),
        };
        let cs = patch.stiffness.to_covariant(core);
        Ok((e, generalized_stress(&cs, &e), st))
    }
}

/// Dense element or segment contribution on raw indices (repeats allowed).
struct Local {
    idx: Vec<usize>,
    k: Vec<f64>,
    b: Vec<f64>,
}

/// Triplet buffer merged by stable sorting, so sums are independent of thread count.
struct Triplets {
    data: Vec<(usize, usize, f64)>,
    merged: usize,
}

impl Triplets {
    fn new() -> Self {
        Self { data: Vec::new(), merged: 0 }
    }

    fn push(&mut self, i: usize, j: usize, v: f64) {
        self.data.push((i, j, v));
        if self.data.len() > 2 * self.merged + (1 << 22) {
            self.compress();
        }
    }

    fn compress(&mut self) {
        self.data.sort_by_key(|e| (e.0, e.1));
        let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(self.data.len());
        for &e in &self.data {
            match out.last_mut() {
                Some(l) if l.0 == e.0 && l.1 == e.1 => l.2 += e.2,
                _ => out.push(e),
            }
        }
        self.data = out;
        self.merged = self.data.len();
    }
}

fn reduce(local: &Local, dm: &DofMap, t: &mut Triplets, b: &mut [f64]) {
    let n = local.idx.len();
    for a in 0..n {
        let Dof::Free(i) = dm.status(local.idx[a]) else { continue };
        b[i] += local.b[a];
        for c in 0..n {
            let v = local.k[a * n + c];
            if v == 0.0 {
                continue;
            }
            match dm.status(local.idx[c]) {
                Dof::Free(j) => t.push(i, j, v),
                Dof::Fixed(g) => b[i] -= v * g,
            }
        }
    }
}

/// Strain row of basis function partials `d` in component `comp`.
fn strain_row(theory: Theory, core: &FrameCore<f64>, chr: &[[[f64; 2]; 2]; 2], d: &[f64; 10], comp: usize) -> [f64; 8] {
    match theory {
        Theory::Rm if comp < 3 => rm_strains(core, chr, &UJet::basis(d, comp), &ThJet::zero()).to_row(),
        Theory::Rm => rm_strains(core, chr, &UJet::zero(), &ThJet::basis(d, comp - 3)).to_row(),
        Theory::Kl => kl_strains(core, chr, &UJet::basis(d, comp)).to_row(),
    }
}

fn exact_strains(patch: &Patch, ex: &dyn ExactField, s: [f64; 2], core: &FrameCore<f64>, chr: &[[[f64; 2]; 2]; 2]) -> Result<[f64; 8]> {
    let u = patch.pull(s, |x| ex.displacement(x))?;
    Ok(match patch.theory {
        Theory::Rm => {
            let th = ThJet::from_vector(core, &patch.pull(s, |x| ex.rotation(x))?);
            rm_strains(core, chr, &UJet::from_jet(&u), &th).to_row()
        }
        Theory::Kl => kl_strains(core, chr, &UJet::from_jet(&u)).to_row(),
    })
}

fn matvec8(c: &[[f64; 8]; 8], r: &[f64; 8]) -> [f64; 8] {
    let mut o = [0.0; 8];
    for i in 0..8 {
        for j in 0..8 {
            o[i] += c[i][j] * r[j];
        }
    }
    o
}

fn dot8(a: &[f64; 8], b: &[f64; 8]) -> f64 {
    (0..8).map(|i| a[i] * b[i]).sum()
}

/// Compact function indices of a cell.
fn cell_functions(space: &TensorSplineSpace, cell: [usize; 2]) -> Vec<usize> {
    let mut out = Vec::new();
    for &j in &space.kv[1].element_funcs(cell[1]) {
        for &i in &space.kv[0].element_funcs(cell[0]) {
            if let Some(c) = space.compact_index(i, j) {
                if !out.contains(&c) {
                    out.push(c);
                }
            }
        }
    }
    out
}

fn position(funcs: &mut Vec<usize>, f: usize) -> usize {
    match funcs.iter().position(|&x| x == f) {
        Some(p) => p,
        None => {
            funcs.push(f);
            funcs.len() - 1
        }
    }
}

/// Interior stiffness on rule `rk` and loads / exact-trial terms on the elevated rule `rb`.
fn interior_local(prob: &Problem, pi: usize, dm: &DofMap, rk: &crate::domain::CellRule, rb: Option<&crate::domain::CellRule>) -> Result<Local> {
    let patch = &prob.patches[pi];
    let nc = patch.n_comp();
    let nd = if patch.theory == Theory::Kl { 2 } else { 1 };
    let mut funcs = cell_functions(&patch.space, rk.cell);
    let cap = funcs.len() * nc;
    let mut kk = vec![0.0; cap * cap];
    let mut rows: Vec<[f64; 8]> = vec![[0.0; 8]; cap];
    let cell_id = rk.cell[0] + patch.cells.n()[0] * rk.cell[1];
    for (s, &w) in rk.points.iter().zip(&rk.weights) {
        let jet = patch.map.jet(*s, 2)?;
        let frame = frame_from_jet(&jet, 2, *s)?;
        let core = &frame.core;
        let chr = christoffel(core);
        let c = energy_matrix(&patch.stiffness.to_covariant(core), patch.theory);
        let ev = patch.space.eval(s[0], s[1], nd)?;
        let da = w * core.sqrt_a;
        let mut act = Vec::with_capacity(ev.index.len() * nc);
        for (q, &f) in ev.index.iter().enumerate() {
            let p = position(&mut funcs, f);
            if p * nc >= cap {
                return Err(IbcmError::Assembly(cell_id));
            }
            for comp in 0..nc {
                rows[p * nc + comp] = strain_row(patch.theory, core, &chr, &ev.d[q], comp);
                act.push(p * nc + comp);
            }
        }
        let cb: Vec<[f64; 8]> = act.iter().map(|&a| matvec8(&c, &rows[a])).collect();
        for (ia, &a) in act.iter().enumerate() {
            for (ib, &b) in act.iter().enumerate().skip(ia) {
                kk[a * cap + b] += da * dot8(&rows[a], &cb[ib]);
            }
        }
    }
    for a in 0..cap {
        for b in 0..a {
            kk[a * cap + b] = kk[b * cap + a];
        }
    }
    let mut bb = vec![0.0; cap];
    if let Some(rb) = rb {
        for (s, &w) in rb.points.iter().zip(&rb.weights) {
            let jet = patch.map.jet(*s, 2)?;
            let frame = frame_from_jet(&jet, 2, *s)?;
            let core = &frame.core;
            let ev = patch.space.eval(s[0], s[1], nd)?;
            let da = w * core.sqrt_a;
            let mut force = [0.0; 3];
            if let Some(f) = &prob.loads.body {
                force = f(frame.x);
            }
            for m in 0..3 {
                force[m] += prob.loads.pressure * core.a3[m];
            }
            let mut mom = [0.0; 2];
            if let Some(mf) = &prob.loads.moment {
                let mv = mf(frame.x);
                if patch.theory != Theory::Rm {
                    return Err(IbcmError::InvalidLoad("distributed moments need Reissner-Mindlin kinematics".into()));
                }
                if dot(&mv, &core.a3).abs() > 1e-10 * dot(&mv, &mv).sqrt().max(1e-300) {
                    return Err(IbcmError::InvalidLoad("moment load has a normal component".into()));
                }
                mom = [dot(&mv, &core.acon[0]), dot(&mv, &core.acon[1])];
            }
            let ce = match &prob.exact {
                Some(ex) => {
                    let chr = christoffel(core);
                    let c = energy_matrix(&patch.stiffness.to_covariant(core), patch.theory);
                    Some((matvec8(&c, &exact_strains(patch, ex.as_ref(), *s, core, &chr)?), chr))
                }
                None => None,
            };
            for (q, &f) in ev.index.iter().enumerate() {
                let p = position(&mut funcs, f);
                if p * nc >= cap {
                    return Err(IbcmError::Assembly(cell_id));
                }
                let d = &ev.d[q];
                for comp in 0..nc {
                    let mut v = if comp < 3 { d[0] * force[comp] } else { d[0] * mom[comp - 3] };
                    if let Some((ce, chr)) = &ce {
                        v += dot8(&strain_row(patch.theory, core, chr, d, comp), ce);
                    }
                    bb[p * nc + comp] += da * v;
                }
            }
        }
    }
    if kk.iter().chain(&bb).any(|v| !v.is_finite()) {
        return Err(IbcmError::Assembly(cell_id));
    }
    let idx = (0..cap).map(|a| dm.raw(pi, funcs[a / nc], a % nc)).collect();
    Ok(Local { idx, k: kk, b: bb })
}

/// Trace data of one weak-coupling entry: value, rotation measure and fluxes.
#[derive(Debug, Clone, Copy)]
struct Entry {
    pos: usize,
    sign: f64,
    avg: f64,
    u: [f64; 3],
    r: [f64; 3],
    fu: [f64; 3],
    fr: [f64; 3],
}

/// Geometry of one side at a curve point.
struct SideEval<'a> {
    patch: &'a Patch,
    vel: [f64; 2],
    s: [f64; 2],
    core: FrameCore<f64>,
    chr: [[[f64; 2]; 2]; 2],
    cs: CovariantStiffness<f64>,
    eb: EdgeBasis,
    jac: f64,
    kl: Option<KlFluxContext>,
    ev: TensorEval,
}

impl<'a> SideEval<'a> {
    /// `plus` orients the normal out of the patch; otherwise into it.
    fn new(patch: &'a Patch, side: &Side, t: f64, plus: bool, flux: bool) -> Result<Self> {
        let e = side.trace.eval(t);
        let s = patch.clamp(e[0]);
        let (vel, acc) = (e[1], e[2]);
        let ln = [-vel[1], vel[0]];
        let out = if side.left { [-ln[0], -ln[1]] } else { ln };
        let hint = if plus { out } else { [-out[0], -out[1]] };
        let jet = patch.map.jet(s, 3)?;
        let frame = frame_from_jet(&jet, 2, s)?;
        let cf = curve_frame(&frame, vel, hint)?;
        let kl = (patch.theory == Theory::Kl && flux).then(|| KlFluxContext::new(&jet, vel, acc, hint, &patch.stiffness));
        let nd = match (patch.theory, flux) {
            (Theory::Kl, true) => 3,
            _ => 1,
        };
        let ev = patch.space.eval(s[0], s[1], nd)?;
        let core = frame.core;
        Ok(Self {
            patch,
            vel,
            s,
            chr: christoffel(&core),
            cs: patch.stiffness.to_covariant(&core),
            eb: EdgeBasis::from(&cf),
            jac: cf.jacobian,
            core,
            kl,
            ev,
        })
    }

    /// `(u, r, F_u, F_r)` of a field given by its displacement jet and covariant rotations.
    fn field(&self, uj: &MapJet, th: &ThJet<f64>, flux: bool, mode: RotationCoupling) -> ([f64; 3], [f64; 3], [f64; 3], [f64; 3]) {
        let n = &self.eb.n;
        let z = [0.0; 3];
        match self.patch.theory {
            Theory::Rm => {
                let rv = rotation_vector(&self.core, &th.th);
                let (fu, mn) = if flux {
                    let e = rm_strains(&self.core, &self.chr, &UJet::from_jet(uj), th);
                    rm_fluxes(&self.core, &self.eb, &generalized_stress(&self.cs, &e))
                } else {
                    (z, z)
                };
                match mode {
                    RotationCoupling::Vector => (uj.v, rv, fu, mn),
                    RotationCoupling::Normal => (uj.v, [dot(&rv, n), 0.0, 0.0], fu, [dot(&mn, n), 0.0, 0.0]),
                }
            }
            Theory::Kl => {
                let rot = kl_rotation(&self.core, &UJet::from_jet(uj));
                let rv = rotation_vector(&self.core, &rot);
                match (&self.kl, mode) {
                    (Some(kl), _) if flux => {
                        let (tn, mnn, thn) = kl.fluxes(&dual_ujet(uj, self.vel));
                        (uj.v, [thn, 0.0, 0.0], tn, [mnn, 0.0, 0.0])
                    }
                    (_, RotationCoupling::Vector) => (uj.v, rv, z, z),
                    (_, RotationCoupling::Normal) => (uj.v, [dot(&rv, n), 0.0, 0.0], z, z),
                }
            }
        }
    }

    fn basis_entries(&self, sign: f64, avg: f64, mode: RotationCoupling, funcs: &mut Vec<(usize, usize)>, out: &mut Vec<Entry>) {
        let nc = self.patch.n_comp();
        let flux = avg > 0.0;
        for (q, &f) in self.ev.index.iter().enumerate() {
            let d = &self.ev.d[q];
            for comp in 0..nc {
                let (uj, th) = if comp < 3 { (basis_jet(d, comp), ThJet::zero()) } else { (MapJet::zero(), ThJet::basis(d, comp - 3)) };
                let (u, r, fu, fr) = self.field(&uj, &th, flux, mode);
                let key = (f, comp);
                let pos = match funcs.iter().position(|k| *k == key) {
                    Some(p) => p,
                    None => {
                        funcs.push(key);
                        funcs.len() - 1
                    }
                };
                out.push(Entry { pos, sign, avg, u, r, fu, fr });
            }
        }
    }

    fn exact_entry(&self, ex: &dyn ExactField, sign: f64, avg: f64, mode: RotationCoupling) -> Result<Entry> {
        let uj = self.patch.pull(self.s, |x| ex.displacement(x))?;
        let th = match self.patch.theory {
            Theory::Rm => ThJet::from_vector(&self.core, &self.patch.pull(self.s, |x| ex.rotation(x))?),
            Theory::Kl => ThJet::zero(),
        };
        let (u, r, fu, fr) = self.field(&uj, &th, avg > 0.0, mode);
        Ok(Entry { pos: usize::MAX, sign, avg, u, r, fu, fr })
    }
}

/// Scalars of one weak coupling.
#[derive(Debug, Clone, Copy)]
struct Coefs {
    gamma1: f64,
    mu_u: f64,
    mu_t: f64,
    disp: bool,
    rot: bool,
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// `B(test, trial)` of the Nitsche terms at one point (without the weight).
fn nitsche_value(k: &Entry, l: &Entry, c: &Coefs) -> f64 {
    let ss = k.sign * l.sign;
    let mut v = 0.0;
    if c.disp {
        v += -k.sign * l.avg * dot3(&k.u, &l.fu) - c.gamma1 * k.avg * l.sign * dot3(&k.fu, &l.u) + c.mu_u * ss * dot3(&k.u, &l.u);
    }
    if c.rot {
        v += -k.sign * l.avg * dot3(&k.r, &l.fr) - c.gamma1 * k.avg * l.sign * dot3(&k.fr, &l.r) + c.mu_t * ss * dot3(&k.r, &l.r);
    }
    v
}

/// Weak coupling or weak boundary condition over one segment.
#[allow(clippy::too_many_arguments)]
fn coupling_local(
    prob: &Problem,
    dm: &DofMap,
    plus: &Side,
    minus: Option<&Side>,
    seg: &InterfaceSegment,
    mode: [RotationCoupling; 2],
    coefs: &Coefs,
    nq: usize,
) -> Result<Local> {
    let g2 = if minus.is_some() { prob.params.gamma2 } else { 1.0 };
    let pp = &prob.patches[plus.patch];
    let mut funcs_p: Vec<(usize, usize)> = Vec::new();
    let mut funcs_m: Vec<(usize, usize)> = Vec::new();
    let mut pts: Vec<(f64, Vec<Entry>, Vec<Entry>, Vec<Entry>)> = Vec::new();
    for (t, w) in segment_rule(seg.t0, seg.t1, nq) {
        let sp = SideEval::new(pp, plus, t, true, g2 > 0.0)?;
        let wq = w * sp.jac;
        let mut ep = Vec::new();
        let mut em = Vec::new();
        let mut ex = Vec::new();
        sp.basis_entries(1.0, g2, mode[0], &mut funcs_p, &mut ep);
        if let Some(e) = &prob.exact {
            ex.push(sp.exact_entry(e.as_ref(), 1.0, g2, mode[0])?);
        }
        if let Some(ms) = minus {
            let sm = SideEval::new(&prob.patches[ms.patch], ms, t, false, g2 < 1.0)?;
            sm.basis_entries(-1.0, 1.0 - g2, mode[1], &mut funcs_m, &mut em);
            if let Some(e) = &prob.exact {
                ex.push(sm.exact_entry(e.as_ref(), -1.0, 1.0 - g2, mode[1])?);
            }
        }
        pts.push((wq, ep, em, ex));
    }
    let np = funcs_p.len();
    let n = np + funcs_m.len();
    let mut kk = vec![0.0; n * n];
    let mut bb = vec![0.0; n];
    for (wq, ep, em, ex) in &mut pts {
        for e in em.iter_mut() {
            e.pos += np;
        }
        let all: Vec<&Entry> = ep.iter().chain(em.iter()).collect();
        for k in &all {
            for l in &all {
                kk[k.pos * n + l.pos] += *wq * nitsche_value(k, l, coefs);
            }
            for l in ex.iter() {
                bb[k.pos] += *wq * nitsche_value(k, l, coefs);
            }
        }
    }
    if kk.iter().chain(&bb).any(|v| !v.is_finite()) {
        return Err(IbcmError::NumericalFailure(format!("non-finite Nitsche term on segment [{}, {}]", seg.t0, seg.t1)));
    }
    let mut idx: Vec<usize> = funcs_p.iter().map(|&(f, c)| dm.raw(plus.patch, f, c)).collect();
    if let Some(ms) = minus {
        idx.extend(funcs_m.iter().map(|&(f, c)| dm.raw(ms.patch, f, c)));
    }
    Ok(Local { idx, k: kk, b: bb })
}

fn section_scale(patches: &[&Patch]) -> (f64, f64) {
    let e = patches.iter().map(|p| p.laminate.max_modulus()).fold(0.0, f64::max);
    let t = patches.iter().map(|p| p.laminate.thickness()).fold(0.0, f64::max);
    (e, t)
}

/// Values of the 1D basis at normalized sample points, `[func][sample]`.
fn basis_table(kv: &KnotVector, samples: &[f64]) -> Result<Vec<Vec<f64>>> {
    let (a, b) = kv.domain();
    let mut out = vec![vec![0.0; samples.len()]; kv.n_funcs()];
    for (k, &u) in samples.iter().enumerate() {
        let e = kv.eval(a + (b - a) * u, 0)?;
        for (q, &i) in e.index.iter().enumerate() {
            out[i][k] += e.ders[0][q];
        }
    }
    Ok(out)
}

/// Identifies matching edge functions of two patches.
pub fn apply_strong_coupling(prob: &Problem, c: &StrongCoupling, dm: &mut DofMap) -> Result<usize> {
    let (pa, ea) = (&prob.patches[c.a.0], c.a.1);
    let (pb, eb) = (&prob.patches[c.b.0], c.b.1);
    let fail = |m: String| Err(IbcmError::CannotCoupleStrongly(format!("{} / {}: {m}", pa.name, pb.name)));
    let (ka, kb) = (&pa.space.kv[ea.tangent_dir()], &pb.space.kv[eb.tangent_dir()]);
    if ka.degree() != kb.degree() || ka.n_funcs() != kb.n_funcs() || ka.is_periodic() != kb.is_periodic() {
        return fail("edge spaces differ in degree, size or periodicity".into());
    }
    if c.comps.iter().any(|&k| k >= 3) {
        return fail("only Cartesian displacement components can be identified".into());
    }
    let (ra, rb) = (pa.rect(), pb.rect());
    let ta = |u: f64| ra[ea.tangent_dir()][0] + u * (ra[ea.tangent_dir()][1] - ra[ea.tangent_dir()][0]);
    let tb = |u: f64| rb[eb.tangent_dir()][0] + u * (rb[eb.tangent_dir()][1] - rb[eb.tangent_dir()][0]);
    let xa = |u: f64| pa.map.jet(ea.point(&ra, ta(u)), 0).map(|j| j.v);
    let xb = |u: f64| pb.map.jet(eb.point(&rb, tb(u)), 0).map(|j| j.v);
    let ns = 64;
    let mut size: f64 = 0.0;
    let (mut fwd, mut rev): (f64, f64) = (0.0, 0.0);
    for k in 0..=ns {
        let u = k as f64 / ns as f64;
        let (a, b, br) = (xa(u)?, xb(u)?, xb(1.0 - u)?);
        size = size.max(dot(&a, &a).sqrt());
        let d = |p: [f64; 3], q: [f64; 3]| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
        fwd = fwd.max(d(a, b));
        rev = rev.max(d(a, br));
    }
    let reversed = rev < fwd;
    let gap = fwd.min(rev);
    if gap > 1e-7 * size.max(1.0) {
        return fail(format!("edges are not geometrically conformal (gap {gap:.3e})"));
    }
    let m = 8 * ka.n_elements().max(1);
    let us: Vec<f64> = (0..m).map(|k| (k as f64 + 0.5) / m as f64).collect();
    let ub: Vec<f64> = us.iter().map(|&u| if reversed { 1.0 - u } else { u }).collect();
    let va = basis_table(ka, &us)?;
    let vb = basis_table(kb, &ub)?;
    let fa: std::collections::HashMap<usize, usize> = edge_functions(&pa.space, ea)?.into_iter().collect();
    let fb: std::collections::HashMap<usize, usize> = edge_functions(&pb.space, eb)?.into_iter().collect();
    let mut pairs = 0;
    for (i, row) in va.iter().enumerate() {
        let j = vb.iter().position(|r| r.iter().zip(row).all(|(x, y)| (x - y).abs() < 1e-9));
        let Some(j) = j else { return fail(format!("edge function {i} has no partner")) };
        let (Some(&ca), Some(&cb)) = (fa.get(&i), fb.get(&j)) else { continue };
        for &comp in &c.comps {
            dm.identify(dm.raw(c.a.0, ca, comp), dm.raw(c.b.0, cb, comp));
        }
        pairs += 1;
    }
    Ok(pairs)
}

/// Fixes edge degrees of freedom to zero or to the projected exact field.
pub fn apply_strong_dirichlet(prob: &Problem, bc: &StrongBc, dm: &mut DofMap) -> Result<()> {
    let patch = &prob.patches[bc.patch];
    let funcs = edge_functions(&patch.space, bc.edge)?;
    let kt = &patch.space.kv[bc.edge.tangent_dir()];
    let r = patch.rect();
    for &comp in &bc.comps {
        let vals = match (bc.value, &prob.exact) {
            (BcValue::Exact, Some(ex)) => {
                let g = |u: f64| -> f64 {
                    let s = bc.edge.point(&r, u);
                    let eval = || -> Result<f64> {
                        if comp < 3 {
                            Ok(patch.pull(s, |x| ex.displacement(x))?.v[comp])
                        } else {
                            let frame = frame_from_jet(&patch.map.jet(s, 2)?, 2, s)?;
                            let th = ThJet::from_vector(&frame.core, &patch.pull(s, |x| ex.rotation(x))?);
                            Ok(th.th[comp - 3])
                        }
                    };
                    eval().unwrap_or(f64::NAN)
                };
                let v = l2_project_edge(kt, g, kt.degree() + 4)?;
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(IbcmError::Geometry(format!("Dirichlet data not evaluable on patch '{}'", patch.name)));
                }
                v
            }
            _ => vec![0.0; kt.n_funcs()],
        };
        for &(t, c) in &funcs {
            dm.fix(dm.raw(bc.patch, c, comp), vals[t]);
        }
    }
    Ok(())
}

/// Degree-of-freedom map with all strong constraints applied.
pub fn build_dofmap(prob: &Problem) -> Result<DofMap> {
    let mut dm = DofMap::new(&prob.patches);
    for bc in &prob.strong_bcs {
        apply_strong_dirichlet(prob, bc, &mut dm)?;
    }
    for p in &prob.pins {
        let sp = &prob.patches[p.patch].space;
        let c = sp
            .compact_index(p.func[0], p.func[1])
            .ok_or_else(|| IbcmError::InvalidInput(format!("pinned function {:?} is inactive", p.func)))?;
        dm.fix(dm.raw(p.patch, c, p.comp), 0.0);
    }
    for c in &prob.couplings {
        apply_strong_coupling(prob, c, &mut dm)?;
    }
    dm.finalize();
    Ok(dm)
}

const CHUNK: usize = 256;

/// Assembles the reduced, unscaled system.
pub fn assemble(prob: &Problem) -> Result<(LinearSystem, DofMap)> {
    prob.validate()?;
    let dm = build_dofmap(prob)?;
    let n = dm.n_free();
    let mut trip = Triplets::new();
    let mut b = vec![0.0; n];
    let need_rhs = prob.exact.is_some() || prob.loads.body.is_some() || prob.loads.pressure != 0.0 || prob.loads.moment.is_some();
    for (pi, patch) in prob.patches.iter().enumerate() {
        let p = patch.degree();
        let rk = patch.cells.rules(p + 1);
        let rb = if need_rhs { Some(patch.cells.rules(p + 3)) } else { None };
        for start in (0..rk.len()).step_by(CHUNK) {
            let end = (start + CHUNK).min(rk.len());
            let locals: Vec<Result<Local>> =
                (start..end).into_par_iter().map(|e| interior_local(prob, pi, &dm, &rk[e], rb.as_ref().map(|r| &r[e]))).collect();
            for l in locals {
                reduce(&l?, &dm, &mut trip, &mut b);
            }
        }
    }
    for el in &prob.loads.edges {
        for l in edge_load_locals(prob, &dm, el)? {
            reduce(&l, &dm, &mut trip, &mut b);
        }
    }
    for iface in &prob.interfaces {
        let (pp, pm) = (&prob.patches[iface.plus.patch], &prob.patches[iface.minus.patch]);
        let segs = segment_interface(iface.plus.trace.as_ref(), pp.breaks(), iface.minus.trace.as_ref(), pm.breaks())?;
        let (e, tau) = section_scale(&[pp, pm]);
        let (mu_u, mu_t) = prob.params.penalties(e, tau, iface.h);
        let coefs = Coefs { gamma1: prob.params.gamma1, mu_u, mu_t, disp: iface.displacement, rot: true };
        let nq = pp.degree().max(pm.degree()) + 2;
        let mode = [iface.rotation; 2];
        let locals: Vec<Result<Local>> = segs
            .par_iter()
            .map(|s| coupling_local(prob, &dm, &iface.plus, Some(&iface.minus), s, mode, &coefs, nq))
            .collect();
        for l in locals {
            reduce(&l?, &dm, &mut trip, &mut b);
        }
    }
    for wb in &prob.weak_bcs {
        let pp = &prob.patches[wb.side.patch];
        let segs = segment_interface(wb.side.trace.as_ref(), pp.breaks(), wb.side.trace.as_ref(), pp.breaks())?;
        let (e, tau) = section_scale(&[pp]);
        let (mu_u, mu_t) = prob.params.penalties(e, tau, wb.h);
        let coefs = Coefs { gamma1: prob.params.gamma1, mu_u, mu_t, disp: wb.displacement, rot: wb.rotation };
        let mode = match pp.theory {
            Theory::Rm => RotationCoupling::Vector,
            Theory::Kl => RotationCoupling::Normal,
        };
        let nq = pp.degree() + 2;
        let locals: Vec<Result<Local>> =
            segs.par_iter().map(|s| coupling_local(prob, &dm, &wb.side, None, s, [mode; 2], &coefs, nq)).collect();
        for l in locals {
            reduce(&l?, &dm, &mut trip, &mut b);
        }
    }
    trip.compress();
    let k = CsrMatrix::from_sorted(n, &trip.data);
    Ok((LinearSystem::new(k, b), dm))
}

fn edge_load_locals(prob: &Problem, dm: &DofMap, el: &EdgeLoad) -> Result<Vec<Local>> {
    let patch = &prob.patches[el.patch];
    let r = patch.rect();
    let td = el.edge.tangent_dir();
    let kt = &patch.space.kv[td];
    let nc = patch.n_comp();
    let mut out = Vec::new();
    let br = kt.breaks();
    for w in br.windows(2) {
        let mut funcs = Vec::new();
        let mut bb: Vec<f64> = Vec::new();
        for (u, wt) in crate::gauss::on_interval(kt.degree() + 2, w[0], w[1]) {
            let s = el.edge.point(&r, u);
            let jet = patch.map.jet(s, 1)?;
            let ds = dot(&jet.d1[td], &jet.d1[td]).sqrt();
            let ev = patch.space.eval(s[0], s[1], 0)?;
            for (q, &f) in ev.index.iter().enumerate() {
                let p = position(&mut funcs, f);
                if bb.len() < funcs.len() * nc {
                    bb.resize(funcs.len() * nc, 0.0);
                }
                for comp in 0..3 {
                    bb[p * nc + comp] += wt * ds * ev.d[q][0] * el.force[comp];
                }
            }
        }
        let n = bb.len();
        let idx = (0..n).map(|a| dm.raw(el.patch, funcs[a / nc], a % nc)).collect();
        out.push(Local { idx, k: vec![0.0; n * n], b: bb });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Plane;
    use crate::material::Layer;
    use nalgebra::DMatrix;

    fn plate_patch(theory: Theory, p: usize, n: usize, rect: Rect) -> Patch {
        let kv = [KnotVector::uniform(rect[0][0], rect[0][1], n, p).unwrap(), KnotVector::uniform(rect[1][0], rect[1][1], n, p).unwrap()];
        let lam = Laminate::single(Layer::isotropic(1000.0, 0.3, 0.1));
        Patch::new("plate", Arc::new(Plane::xy(rect)), None, kv, None, &TileOptions::default(), theory, lam).unwrap()
    }

    fn dense(k: &CsrMatrix) -> DMatrix<f64> {
        DMatrix::from_fn(k.n, k.n, |i, j| k.get(i, j))
    }

    #[test]
    fn penalty_example() {
        let p = NitscheParams { gamma1: 1.0, gamma2: 1.0, beta: 10.0 };
        let (mu, mt) = p.penalties(25e9, 0.01, 1.0 / 16.0);
        assert!((mu - 4.0e10).abs() < 1e-3);
        assert!((mt - mu * 1e-4).abs() < 1e-3);
        assert!(NitscheParams { gamma1: 0.5, ..p }.validate().is_err());
    }

    #[test]
    fn one_element_rm_kernel_is_rigid_body_space() {
        let prob = Problem { patches: vec![plate_patch(Theory::Rm, 1, 1, [[0.0, 1.0], [0.0, 1.0]])], ..Default::default() };
        let (sys, _) = assemble(&prob).unwrap();
        assert_eq!(sys.k.n, 20);
        assert!(sys.k.asymmetry() <= 1e-12 * sys.k.max_abs());
        let eig = nalgebra::SymmetricEigen::new(dense(&sys.k));
        let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        assert!(eig.eigenvalues.iter().all(|&l| l > -1e-10 * top));
        let zero = eig.eigenvalues.iter().filter(|&&l| l.abs() < 1e-9 * top).count();
        assert_eq!(zero, 6);
    }

    #[test]
    fn empty_problem_gives_empty_matrix() {
        let (sys, _) = assemble(&Problem::default()).unwrap();
        assert_eq!(sys.k.n, 0);
        let (x, r) = solve(&sys, SolveOptions::default());
        assert!(r.spd && x.unwrap().is_empty());
    }

    #[test]
    fn identity_solve_returns_rhs() {
        let sys = LinearSystem::new(CsrMatrix::identity(5), vec![1.0, -2.0, 3.0, 0.5, 7.0]);
        let (x, r) = solve(&sys, SolveOptions { jacobi: true, condition: true });
        assert!(r.spd);
        assert_eq!(x.unwrap(), sys.b);
        assert!((r.condition.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn indefinite_matrix_fails_gate() {
        let t = vec![(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)];
        let sys = LinearSystem::new(CsrMatrix::from_sorted(2, &t), vec![1.0, 1.0]);
        let (x, r) = solve(&sys, SolveOptions::default());
        assert!(!r.spd && x.is_none());
    }

    #[test]
    fn scaled_matrix_has_unit_diagonal() {
        let mut prob = Problem { patches: vec![plate_patch(Theory::Kl, 2, 3, [[0.0, 1.0], [0.0, 1.0]])], ..Default::default() };
        prob.strong_bcs.push(StrongBc { patch: 0, edge: Edge::S1Min, comps: vec![0, 1, 2], value: BcValue::Zero });
        let (sys, dm) = assemble(&prob).unwrap();
        assert_eq!(dm.n_free(), 25 * 3 - 5 * 3);
        assert!(sys.scaled_matrix().diagonal().iter().all(|&d| d == 1.0));
    }

    #[test]
    fn doubling_thickness_scales_blocks() {
        let lam = |t: f64| Laminate::plies(Layer { thickness: 1.0, ..Layer::isotropic(1.0, 0.25, 1.0) }, &[0.0, 90.0, 90.0, 0.0], t).unwrap();
        let (a, b) = (lam(0.1).abds().unwrap(), lam(0.2).abds().unwrap());
        assert!((b.a - a.a * 2.0).norm() < 1e-12 * a.a.norm());
        assert!((b.d - a.d * 8.0).norm() < 1e-12 * b.d.norm());
    }

    fn split_problem(theory: Theory, gamma1: f64) -> Problem {
        use crate::domain::Segment;
        let mut a = plate_patch(theory, 2, 2, [[0.0, 0.5], [0.0, 1.0]]);
        let mut b = plate_patch(theory, 2, 2, [[0.5, 1.0], [0.0, 1.0]]);
        a.name = "left".into();
        b.name = "right".into();
        let tr: Arc<dyn TrimCurve> = Arc::new(Segment { a: [0.5, 0.0], b: [0.5, 1.0] });
        let rotation = if theory == Theory::Kl { RotationCoupling::Normal } else { RotationCoupling::Vector };
        Problem {
            patches: vec![a, b],
            interfaces: vec![Interface {
                name: "cut".into(),
                plus: Side { patch: 0, trace: tr.clone(), left: false },
                minus: Side { patch: 1, trace: tr, left: true },
                h: 0.25,
                rotation,
                displacement: true,
            }],
            params: NitscheParams { gamma1, gamma2: 0.5, beta: 10.0 },
            ..Default::default()
        }
    }

    #[test]
    fn symmetric_method_is_symmetric_and_linear_in_gamma1() {
        for th in [Theory::Rm, Theory::Kl] {
            let k = |g| assemble(&split_problem(th, g)).unwrap().0.k;
            let (kp, k0, km) = (k(1.0), k(0.0), k(-1.0));
            assert!(kp.asymmetry() <= 1e-12 * kp.max_abs(), "{th:?}");
            assert!(km.asymmetry() > 1e-8 * km.max_abs());
            let (dp, d0, dm) = (dense(&kp), dense(&k0), dense(&km));
            assert!((&dp + &dm - &d0 * 2.0).amax() <= 1e-10 * dp.amax());
            // the γ1 = −1 consistency block is antisymmetric
            let c = &dm - &d0;
            let cp = &dp - &d0;
            assert!((&c + cp).amax() <= 1e-10 * dp.amax());
        }
    }

    #[test]
    fn matched_edges_merge_dofs() {
        let mut prob = split_problem(Theory::Rm, 1.0);
        prob.couplings.push(StrongCoupling { a: (0, Edge::S1Max), b: (1, Edge::S1Min), comps: vec![0, 1, 2] });
        let mut dm = build_dofmap(&prob).unwrap();
        let n_edge = 4;
        assert_eq!(dm.n_free(), 2 * 16 * 5 - 3 * n_edge);
        assert_eq!(dm.n_identified(), 3 * n_edge);
    }

    #[test]
    fn mismatched_edges_refuse_strong_coupling() {
        let mut prob = split_problem(Theory::Rm, 1.0);
        prob.patches[1] = plate_patch(Theory::Rm, 2, 3, [[0.5, 1.0], [0.0, 1.0]]);
        prob.couplings.push(StrongCoupling { a: (0, Edge::S1Max), b: (1, Edge::S1Min), comps: vec![0] });
        assert!(matches!(build_dofmap(&prob), Err(IbcmError::CannotCoupleStrongly(_))));
    }

    #[test]
    fn mixed_interface_needs_one_sided_average() {
        let mut prob = split_problem(Theory::Rm, 1.0);
        prob.patches[1] = plate_patch(Theory::Kl, 2, 2, [[0.5, 1.0], [0.0, 1.0]]);
        assert!(matches!(prob.validate(), Err(IbcmError::Unsupported(_))));
        prob.params.gamma2 = 1.0;
        prob.validate().unwrap();
    }

    #[test]
    fn uniform_pressure_sums_to_area() {
        let mut prob = Problem { patches: vec![plate_patch(Theory::Kl, 3, 4, [[0.0, 2.0], [0.0, 1.0]])], ..Default::default() };
        prob.loads.pressure = 3.0;
        let (sys, dm) = assemble(&prob).unwrap();
        let s: f64 = (0..prob.patches[0].space.n_active())
            .map(|f| match dm.status(dm.raw(0, f, 2)) {
                Dof::Free(i) => sys.b[i],
                Dof::Fixed(_) => 0.0,
            })
            .sum();
        assert!((s - 6.0).abs() < 1e-12);
    }
}
