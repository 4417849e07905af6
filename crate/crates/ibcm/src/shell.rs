//! Generalized strains, stresses and interface fluxes for Reissner-Mindlin
//! and Kirchhoff-Love kinematics.
//!
//! Displacements are Cartesian; RM rotations are covariant components
//! `θ_α` on the patch basis, so that `θ = θ_α a^α`. Symmetric tensors are
//! stored in Voigt slots `(11, 22, 12)`.

use crate::geometry::{add, c, cross, curve_core, d3, dot, eps, scale, FrameCore, MapJet, Scalar, D3, V3};
use crate::material::{CovariantStiffness, VOIGT_PAIRS, VOIGT_WEIGHT};
use serde::{Deserialize, Serialize};

/// Shell kinematics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Theory {
    Kl,
    Rm,
}

impl Theory {
    /// Unknown components per basis function.
    pub fn n_comp(self) -> usize {
        match self {
            Theory::Kl => 3,
            Theory::Rm => 5,
        }
    }
}

impl std::str::FromStr for Theory {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "kl" => Ok(Theory::Kl),
            "rm" => Ok(Theory::Rm),
            o => Err(format!("unknown theory '{o}'")),
        }
    }
}

/// Displacement and its partial derivatives.
#[derive(Debug, Clone, Copy)]
pub struct UJet<S: Scalar> {
    pub u: V3<S>,
    pub du: [V3<S>; 2],
    pub ddu: [[V3<S>; 2]; 2],
}

/// Covariant rotation components `θ_α` and `θ_{α,β}` (stored `[α][β]`).
#[derive(Debug, Clone, Copy)]
pub struct ThJet<S: Scalar> {
    pub th: [S; 2],
    pub dth: [[S; 2]; 2],
}

impl<S: Scalar> UJet<S> {
    pub fn zero() -> Self {
        let z = [c::<S>(0.0); 3];
        Self { u: z, du: [z; 2], ddu: [[z; 2]; 2] }
    }
}

impl<S: Scalar> ThJet<S> {
    pub fn zero() -> Self {
        Self { th: [c(0.0); 2], dth: [[c(0.0); 2]; 2] }
    }
}

impl UJet<f64> {
    /// Field from a vector-valued jet.
    pub fn from_jet(j: &MapJet) -> Self {
        Self { u: j.v, du: j.d1, ddu: j.d2 }
    }

    /// Basis function with partials `d` (slot layout of [`crate::bspline::slot`]) in component `comp`.
    pub fn basis(d: &[f64; 10], comp: usize) -> Self {
        let mut j = Self::zero();
        j.u[comp] = d[0];
        j.du[0][comp] = d[1];
        j.du[1][comp] = d[2];
        j.ddu[0][0][comp] = d[3];
        j.ddu[0][1][comp] = d[4];
        j.ddu[1][0][comp] = d[4];
        j.ddu[1][1][comp] = d[5];
        j
    }
}

impl ThJet<f64> {
    /// Covariant rotation basis function: `θ_comp = N`.
    pub fn basis(d: &[f64; 10], comp: usize) -> Self {
        let mut j = Self::zero();
        j.th[comp] = d[0];
        j.dth[comp] = [d[1], d[2]];
        j
    }

    /// Covariant components of a Cartesian tangent field `Θ` given by its jet.
    pub fn from_vector(f: &FrameCore<f64>, j: &MapJet) -> Self {
        let mut out = Self::zero();
        for al in 0..2 {
            out.th[al] = dot(&j.v, &f.a[al]);
            for be in 0..2 {
                out.dth[al][be] = dot(&j.d1[be], &f.a[al]) + dot(&j.v, &f.da[al][be]);
            }
        }
        out
    }
}

/// Dual-number jet of a vector field for slots `[∂/∂s1, ∂/∂s2, d/dτ]` along velocity `vel`.
pub fn dual_ujet(j: &MapJet, vel: [f64; 2]) -> UJet<D3> {
    let mut out = UJet::<D3>::zero();
    for m in 0..3 {
        let (a, b) = (j.d1[0][m], j.d1[1][m]);
        out.u[m] = d3(j.v[m], [a, b, a * vel[0] + b * vel[1]]);
        for al in 0..2 {
            let (a, b) = (j.d2[al][0][m], j.d2[al][1][m]);
            out.du[al][m] = d3(j.d1[al][m], [a, b, a * vel[0] + b * vel[1]]);
            for be in 0..2 {
                let (a, b) = (j.d3[al][be][0][m], j.d3[al][be][1][m]);
                out.ddu[al][be][m] = d3(j.d2[al][be][m], [a, b, a * vel[0] + b * vel[1]]);
            }
        }
    }
    out
}

/// Jet of a scalar basis function placed in component `comp`, with all partials up to third order.
pub fn basis_jet(d: &[f64; 10], comp: usize) -> MapJet {
    let mut p = [[0.0; 3]; 10];
    for k in 0..10 {
        p[k][comp] = d[k];
    }
    MapJet::from_slots(&p)
}

/// Christoffel symbols `Γ^γ_{αβ} = a^γ · a_{α,β}` stored `[γ][α][β]`.
pub fn christoffel<S: Scalar>(f: &FrameCore<S>) -> [[[S; 2]; 2]; 2] {
    let mut g = [[[c::<S>(0.0); 2]; 2]; 2];
    for ga in 0..2 {
        for al in 0..2 {
            for be in 0..2 {
                g[ga][al][be] = dot(&f.acon[ga], &f.da[al][be]);
            }
        }
    }
    g
}

/// Generalized strains: membrane `eps`, bending `kap` (Voigt slots) and shear `gam`.
#[derive(Debug, Clone, Copy)]
pub struct Strains<S: Scalar> {
    pub eps: [S; 3],
    pub kap: [S; 3],
    pub gam: [S; 2],
}

impl Strains<f64> {
    /// `[ε11, ε22, ε12, κ11, κ22, κ12, γ1, γ2]`.
    pub fn to_row(&self) -> [f64; 8] {
        [self.eps[0], self.eps[1], self.eps[2], self.kap[0], self.kap[1], self.kap[2], self.gam[0], self.gam[1]]
    }
}

fn membrane<S: Scalar>(f: &FrameCore<S>, u: &UJet<S>) -> [S; 3] {
    VOIGT_PAIRS.map(|(al, be)| c::<S>(0.5) * (dot(&f.a[al], &u.du[be]) + dot(&f.a[be], &u.du[al])))
}

/// Reissner-Mindlin strains with `θ = θ_γ a^γ`, so that `θ · a_{α,β} = θ_γ Γ^γ_{αβ}`.
pub fn rm_strains<S: Scalar>(f: &FrameCore<S>, chr: &[[[S; 2]; 2]; 2], u: &UJet<S>, th: &ThJet<S>) -> Strains<S> {
    let eps = membrane(f, u);
    let kap = VOIGT_PAIRS.map(|(al, be)| {
        let rot = c::<S>(0.5) * (th.dth[al][be] + th.dth[be][al]);
        let curv = th.th[0] * chr[0][al][be] + th.th[1] * chr[1][al][be];
        let coupling = c::<S>(0.5) * (dot(&f.da3[al], &u.du[be]) + dot(&f.da3[be], &u.du[al]));
        rot - curv + coupling
    });
    let gam = [0, 1].map(|al| dot(&f.a3, &u.du[al]) + th.th[al]);
    Strains { eps, kap, gam }
}

/// Kirchhoff-Love strains.
///
/// With `θ_α = −a_3·u_{,α}` the RM bending strain collapses to
/// `κ_{αβ} = −a_3 · (u_{,αβ} − Γ^γ_{αβ} u_{,γ})`: the `a_{3,α}` terms cancel
/// against the derivative of the normal, leaving the curvature change.
pub fn kl_strains<S: Scalar>(f: &FrameCore<S>, chr: &[[[S; 2]; 2]; 2], u: &UJet<S>) -> Strains<S> {
    let eps = membrane(f, u);
    let kap = VOIGT_PAIRS.map(|(al, be)| {
        let mut w = u.ddu[al][be];
        for ga in 0..2 {
            w = add(&w, &scale(-chr[ga][al][be], &u.du[ga]));
        }
        -dot(&f.a3, &w)
    });
    Strains { eps, kap, gam: [c(0.0); 2] }
}

/// Kirchhoff-Love rotation components `θ_α = −a_3 · u_{,α}`.
pub fn kl_rotation<S: Scalar>(f: &FrameCore<S>, u: &UJet<S>) -> [S; 2] {
    [0, 1].map(|al| -dot(&f.a3, &u.du[al]))
}

/// Contravariant stress resultants in Voigt slots.
#[derive(Debug, Clone, Copy)]
pub struct Stress<S: Scalar> {
    pub n: [S; 3],
    pub m: [S; 3],
    pub q: [S; 2],
}

impl<S: Scalar> Stress<S> {
    /// `N^{αβ}` for any index pair.
    pub fn n_ab(&self, a: usize, b: usize) -> S {
        self.n[crate::material::voigt(a, b)]
    }
    pub fn m_ab(&self, a: usize, b: usize) -> S {
        self.m[crate::material::voigt(a, b)]
    }
}

/// `N = 𝔸ε + 𝔹κ`, `M = 𝔹ε + 𝔻κ`, `Q = 𝕊γ`.
pub fn generalized_stress<S: Scalar>(cs: &CovariantStiffness<S>, e: &Strains<S>) -> Stress<S> {
    let mut n = [c::<S>(0.0); 3];
    let mut m = [c::<S>(0.0); 3];
    for i in 0..3 {
        for j in 0..3 {
            let w = c::<S>(VOIGT_WEIGHT[j]);
            n[i] += (cs.a[i][j] * e.eps[j] + cs.b[i][j] * e.kap[j]) * w;
            m[i] += (cs.b[i][j] * e.eps[j] + cs.d[i][j] * e.kap[j]) * w;
        }
    }
    let q = [0, 1].map(|a| cs.s[a][0] * e.gam[0] + cs.s[a][1] * e.gam[1]);
    Stress { n, m, q }
}

/// Symmetric 8×8 matrix `C` with energy density `eᵀ C e` for rows from [`Strains::to_row`].
pub fn energy_matrix(cs: &CovariantStiffness<f64>, theory: Theory) -> [[f64; 8]; 8] {
    let mut k = [[0.0; 8]; 8];
    for i in 0..3 {
        for j in 0..3 {
            let w = VOIGT_WEIGHT[i] * VOIGT_WEIGHT[j];
            k[i][j] = cs.a[i][j] * w;
            k[i][j + 3] = cs.b[i][j] * w;
            k[i + 3][j] = cs.b[i][j] * w;
            k[i + 3][j + 3] = cs.d[i][j] * w;
        }
    }
    if theory == Theory::Rm {
        for a in 0..2 {
            for b in 0..2 {
                k[6 + a][6 + b] = cs.s[a][b];
            }
        }
    }
    k
}

/// Local basis of an interface or boundary point in the form needed by the fluxes.
#[derive(Debug, Clone, Copy)]
pub struct EdgeBasis {
    pub n: [f64; 3],
    pub t: [f64; 3],
    pub n_cov: [f64; 2],
    pub t_cov: [f64; 2],
    pub n_con: [f64; 2],
    pub t_con: [f64; 2],
}

impl From<&crate::geometry::CurveFrame> for EdgeBasis {
    fn from(c: &crate::geometry::CurveFrame) -> Self {
        Self { n: c.n, t: c.t, n_cov: c.n_cov, t_cov: c.t_cov, n_con: c.n_con, t_con: c.t_con }
    }
}

/// Reissner-Mindlin fluxes `N_n` and `M_n` as Cartesian vectors.
pub fn rm_fluxes(f: &FrameCore<f64>, e: &EdgeBasis, s: &Stress<f64>) -> ([f64; 3], [f64; 3]) {
    let mut nn = [0.0; 3];
    for al in 0..2 {
        let mut na = 0.0;
        for be in 0..2 {
            let mut v = s.n_ab(al, be);
            for ga in 0..2 {
                v -= f.bmix[al][ga] * s.m_ab(ga, be);
            }
            na += v * e.n_cov[be];
        }
        nn = add(&nn, &scale(na, &f.a[al]));
    }
    let q = s.q[0] * e.n_cov[0] + s.q[1] * e.n_cov[1];
    nn = add(&nn, &scale(q, &f.a3));
    let (mnn, mnt) = moment_components(s, e);
    (nn, add(&scale(mnn, &e.n), &scale(mnt, &e.t)))
}

/// `(M_nn, M_nt)`.
pub fn moment_components(s: &Stress<f64>, e: &EdgeBasis) -> (f64, f64) {
    let mut mnn = 0.0;
    let mut mnt = 0.0;
    for al in 0..2 {
        for be in 0..2 {
            mnn += s.m_ab(al, be) * e.n_cov[al] * e.n_cov[be];
            mnt += s.m_ab(al, be) * e.n_cov[al] * e.t_cov[be];
        }
    }
    (mnn, mnt)
}

/// Rotation vector `θ = θ_α a^α`.
pub fn rotation_vector(f: &FrameCore<f64>, th: &[f64; 2]) -> [f64; 3] {
    add(&scale(th[0], &f.acon[0]), &scale(th[1], &f.acon[1]))
}

/// Data needed to evaluate Kirchhoff-Love ersatz fluxes at one curve point.
pub struct KlFluxContext {
    /// Frame with derivatives along `s1`, `s2` and the curve parameter.
    pub frame: FrameCore<D3>,
    pub stiffness: CovariantStiffness<D3>,
    /// Christoffel symbols (values).
    pub chr: [[[f64; 2]; 2]; 2],
    pub chr_d: [[[D3; 2]; 2]; 2],
    pub n: V3<D3>,
    pub t: V3<D3>,
    /// `|dx/dτ|`.
    pub jac: f64,
    /// Curve velocity `ds/dτ`.
    pub vel: [f64; 2],
}

impl KlFluxContext {
    /// `jet` must hold third-order partials; `acc` is `d²s/dτ²`.
    pub fn new(
        jet: &MapJet,
        vel: [f64; 2],
        acc: [f64; 2],
        outward: [f64; 2],
        gs: &crate::material::GeneralizedStiffness,
    ) -> Self {
        let (d1, d2) = crate::geometry::dual_jet(jet, vel);
        let frame = crate::geometry::frame_core::<D3>(&d1, &d2);
        let stiffness = gs.to_covariant(&frame);
        let chr_d = christoffel(&frame);
        let chr = chr_d.map(|a| a.map(|b| b.map(|x| x.re)));
        let v = [d3(vel[0], [0.0, 0.0, acc[0]]), d3(vel[1], [0.0, 0.0, acc[1]])];
        let (n, t, jac) = curve_core::<D3>(&frame, v, outward);
        Self { frame, stiffness, chr, chr_d, n, t, jac: jac.re, vel }
    }

    pub fn edge_basis(&self) -> EdgeBasis {
        let f = &self.frame;
        let r = |v: &V3<D3>| [v[0].re, v[1].re, v[2].re];
        let (n, t) = (r(&self.n), r(&self.t));
        let a = [r(&f.a[0]), r(&f.a[1])];
        let ac = [r(&f.acon[0]), r(&f.acon[1])];
        EdgeBasis {
            n,
            t,
            n_cov: [dot(&n, &a[0]), dot(&n, &a[1])],
            t_cov: [dot(&t, &a[0]), dot(&t, &a[1])],
            n_con: [dot(&n, &ac[0]), dot(&n, &ac[1])],
            t_con: [dot(&t, &ac[0]), dot(&t, &ac[1])],
        }
    }

    /// Ersatz force `T_n` (Cartesian), bending moment `M_nn` and rotation `θ_n` of a field.
    ///
    /// `u` must be a dual jet built with the same velocity (see [`dual_ujet`]).
    pub fn fluxes(&self, u: &UJet<D3>) -> ([f64; 3], f64, f64) {
        let f = &self.frame;
        let e = kl_strains(f, &self.chr_d, u);
        let s = generalized_stress(&self.stiffness, &e);
        let n_cov = [dot(&self.n, &f.a[0]), dot(&self.n, &f.a[1])];
        let t_cov = [dot(&self.t, &f.a[0]), dot(&self.t, &f.a[1])];
        let t_con = [dot(&self.t, &f.acon[0]), dot(&self.t, &f.acon[1])];
        let mut mnt = D3::from(0.0);
        let mut mnn = 0.0;
        for al in 0..2 {
            for be in 0..2 {
                mnt += s.m_ab(al, be) * n_cov[al] * t_cov[be];
                mnn += (s.m_ab(al, be) * n_cov[al] * n_cov[be]).re;
            }
        }
        let g = &self.chr;
        // covariant divergence M^{αβ}_{|β}
        let mut div = [0.0; 2];
        for al in 0..2 {
            let mut v = 0.0;
            for be in 0..2 {
                v += eps(&s.m_ab(al, be), be);
                for ga in 0..2 {
                    v += g[al][ga][be] * s.m_ab(ga, be).re + g[be][ga][be] * s.m_ab(al, ga).re;
                }
            }
            div[al] = v;
        }
        let ncr = n_cov.map(|x| x.re);
        let tcr = t_con.map(|x| x.re);
        let t3 = div[0] * ncr[0] + div[1] * ncr[1] + eps(&mnt, 2) / self.jac;
        let mut tv = [0.0; 3];
        for al in 0..2 {
            let mut v = 0.0;
            for be in 0..2 {
                let mut w = s.n_ab(al, be).re;
                for ga in 0..2 {
                    w -= f.bmix[al][ga].re * s.m_ab(ga, be).re;
                }
                v += w * ncr[be];
            }
            for ga in 0..2 {
                v -= mnt.re * f.bmix[al][ga].re * tcr[ga];
            }
            for m in 0..3 {
                tv[m] += v * f.a[al][m].re;
            }
        }
        for m in 0..3 {
            tv[m] += t3 * f.a3[m].re;
        }
        let rot = kl_rotation(f, u);
        let ncon = [dot(&self.n, &f.acon[0]).re, dot(&self.n, &f.acon[1]).re];
        let thn = rot[0].re * ncon[0] + rot[1].re * ncon[1];
        (tv, mnn, thn)
    }
}

/// Edge load for Kirchhoff-Love boundaries:
/// `T̄ = (F̄_α − M̄_t b_{αβ} t^β) a^α + (F̄_3 + ∂M̄_t/∂t) a_3`.
pub fn ersatz_load(f: &FrameCore<f64>, e: &EdgeBasis, force: [f64; 3], mt: f64, dmt_ds: f64) -> [f64; 3] {
    let mut out = [0.0; 3];
    for al in 0..2 {
        let fa = dot(&f.a[al], &force) - mt * (f.b[al][0] * e.t_con[0] + f.b[al][1] * e.t_con[1]);
        out = add(&out, &scale(fa, &f.acon[al]));
    }
    add(&out, &scale(dot(&f.a3, &force) + dmt_ds, &f.a3))
}

/// Corner force `R̄ = M̄_t(x + εt⁺) − M̄_t(x − εt⁻)` from the one-sided limits.
pub fn corner_force(mt_after: f64, mt_before: f64) -> f64 {
    mt_after - mt_before
}

/// Rotation about the curve tangent, `ω_t = θ · n`, used across kinked junctions.
pub fn tangent_rotation(theta: &[f64; 3], n: &[f64; 3]) -> f64 {
    dot(theta, n)
}

/// Normal part check helper: `v − (v·a_3) a_3`.
pub fn tangential(v: &[f64; 3], a3: &[f64; 3]) -> [f64; 3] {
    let k = dot(v, a3);
    [v[0] - k * a3[0], v[1] - k * a3[1], v[2] - k * a3[2]]
}

/// Cross product re-export for callers building rigid rotations.
pub fn rigid_rotation(omega: &[f64; 3], x: &[f64; 3]) -> [f64; 3] {
    cross(omega, x)
}
