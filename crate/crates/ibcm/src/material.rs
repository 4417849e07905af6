//! Laminate constitutive pipeline: layer stiffness, rotation to the shared
//! orthonormal basis, through-thickness integration and covariant transformation.

use crate::error::{IbcmError, Result};
use crate::geometry::{c, dot, FrameCore, Scalar};
use nalgebra::{Matrix2, Matrix3};
use serde::{Deserialize, Serialize};

/// One orthotropic ply.
///
/// `angle` is the lamination angle in radians measured from `n_1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub e1: f64,
    pub e2: f64,
    pub nu12: f64,
    pub g12: f64,
    pub g31: f64,
    pub g32: f64,
    pub angle: f64,
    pub thickness: f64,
}

impl Layer {
    pub fn isotropic(e: f64, nu: f64, thickness: f64) -> Self {
        let g = e / (2.0 * (1.0 + nu));
        Self { e1: e, e2: e, nu12: nu, g12: g, g31: g, g32: g, angle: 0.0, thickness }
    }

    pub fn nu21(&self) -> f64 {
        self.nu12 * self.e2 / self.e1
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [self.e1, self.e2, self.g12, self.g31, self.g32, self.thickness];
        if pos.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(IbcmError::InvalidMaterial("moduli and thickness must be positive".into()));
        }
        if !(self.nu12 >= 0.0 && self.nu12 < (self.e1 / self.e2).sqrt()) {
            return Err(IbcmError::InvalidMaterial(format!("nu12 = {} out of range", self.nu12)));
        }
        if !self.angle.is_finite() {
            return Err(IbcmError::InvalidMaterial("non-finite lamination angle".into()));
        }
        Ok(())
    }

    /// In-plane and transverse stiffness in the material axes.
    pub fn material_matrices(&self, shear_factor: f64) -> Result<(Matrix3<f64>, Matrix2<f64>)> {
        self.validate()?;
        let s = Matrix3::new(
            1.0 / self.e1,
            -self.nu12 / self.e1,
            0.0,
            -self.nu21() / self.e2,
            1.0 / self.e2,
            0.0,
            0.0,
            0.0,
            1.0 / self.g12,
        );
        let cl = s.try_inverse().ok_or_else(|| IbcmError::InvalidMaterial("singular compliance".into()))?;
        let st = Matrix2::new(1.0 / (shear_factor * self.g31), 0.0, 0.0, 1.0 / (shear_factor * self.g32));
        let ct = st.try_inverse().ok_or_else(|| IbcmError::InvalidMaterial("singular compliance".into()))?;
        Ok((cl, ct))
    }

    /// Stiffness rotated into the shared basis `n_1 n_2 n_3`.
    pub fn rotated_matrices(&self, shear_factor: f64) -> Result<(Matrix3<f64>, Matrix2<f64>)> {
        let (cl, ct) = self.material_matrices(shear_factor)?;
        let (s, cs) = self.angle.sin_cos();
        let tl = Matrix3::new(
            cs * cs,
            s * s,
            -2.0 * s * cs,
            s * s,
            cs * cs,
            2.0 * s * cs,
            s * cs,
            -s * cs,
            cs * cs - s * s,
        );
        let tt = Matrix2::new(cs, -s, s, cs);
        Ok((tl * cl * tl.transpose(), tt * ct * tt.transpose()))
    }
}

/// Stack of layers with the midsurface at `ξ3 = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Laminate {
    pub layers: Vec<Layer>,
    #[serde(default = "default_shear")]
    pub shear_factor: f64,
}

fn default_shear() -> f64 {
    5.0 / 6.0
}

impl Laminate {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let lam = Self { layers, shear_factor: default_shear() };
        lam.validate()?;
        Ok(lam)
    }

    pub fn single(layer: Layer) -> Self {
        Self { layers: vec![layer], shear_factor: default_shear() }
    }

    /// Equal-thickness plies of one material at the given angles (degrees).
    pub fn plies(base: Layer, angles_deg: &[f64], total: f64) -> Result<Self> {
        let t = total / angles_deg.len() as f64;
        let layers = angles_deg
            .iter()
            .map(|a| Layer { angle: a.to_radians(), thickness: t, ..base })
            .collect();
        Self::new(layers)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(IbcmError::InvalidMaterial("empty laminate".into()));
        }
        if !(self.shear_factor > 0.0) {
            return Err(IbcmError::InvalidMaterial("shear factor must be positive".into()));
        }
        self.layers.iter().try_for_each(|l| l.validate())
    }

    pub fn thickness(&self) -> f64 {
        self.layers.iter().map(|l| l.thickness).sum()
    }

    /// Ply interfaces from `−τ/2` to `τ/2`.
    pub fn interfaces(&self) -> Vec<f64> {
        let mut z = vec![-0.5 * self.thickness()];
        for l in &self.layers {
            z.push(z.last().unwrap() + l.thickness);
        }
        z
    }

    /// Largest Young modulus over the plies.
    pub fn max_modulus(&self) -> f64 {
        self.layers.iter().map(|l| l.e1.max(l.e2)).fold(0.0, f64::max)
    }

    /// Generalized stiffness in the orthonormal basis, integrated in closed form.
    pub fn abds(&self) -> Result<GeneralizedStiffness> {
        self.validate()?;
        let z = self.interfaces();
        let mut a = Matrix3::zeros();
        let mut b = Matrix3::zeros();
        let mut d = Matrix3::zeros();
        let mut s = Matrix2::zeros();
        for (k, l) in self.layers.iter().enumerate() {
            let (cl, ct) = l.rotated_matrices(self.shear_factor)?;
            let (z0, z1) = (z[k], z[k + 1]);
            a += cl * (z1 - z0);
            b += cl * ((z1 * z1 - z0 * z0) / 2.0);
            d += cl * ((z1 * z1 * z1 - z0 * z0 * z0) / 3.0);
            s += ct * (z1 - z0);
        }
        Ok(GeneralizedStiffness { a, b, d, s })
    }
}

/// Voigt stiffness matrices in the orthonormal basis `n_1 n_2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralizedStiffness {
    pub a: Matrix3<f64>,
    pub b: Matrix3<f64>,
    pub d: Matrix3<f64>,
    pub s: Matrix2<f64>,
}

/// Voigt slot of the index pair `(α, β)`: 11 → 0, 22 → 1, 12 and 21 → 2.
pub const fn voigt(a: usize, b: usize) -> usize {
    if a == b {
        a
    } else {
        2
    }
}

/// Index pairs of the Voigt slots.
pub const VOIGT_PAIRS: [(usize, usize); 3] = [(0, 0), (1, 1), (0, 1)];

/// Contraction weight of a Voigt slot: the shear slot stands for both 12 and 21.
pub const VOIGT_WEIGHT: [f64; 3] = [1.0, 1.0, 2.0];

/// Covariant stiffness at a point, stored by Voigt slots.
///
/// `a[I][J] = 𝔸^{αβγδ}` with `I ↔ αβ`, `J ↔ γδ`. With strains stored as
/// `(ε_11, ε_22, ε_12)`, `N^I = Σ_J a[I][J] w_J ε_J`.
#[derive(Debug, Clone, Copy)]
pub struct CovariantStiffness<S: Scalar> {
    pub a: [[S; 3]; 3],
    pub b: [[S; 3]; 3],
    pub d: [[S; 3]; 3],
    pub s: [[S; 2]; 2],
}

impl GeneralizedStiffness {
    /// Full tensor `Ā^{ijkl}` of a Voigt matrix.
    fn tensor(m: &Matrix3<f64>) -> [[[[f64; 2]; 2]; 2]; 2] {
        let mut t = [[[[0.0; 2]; 2]; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        t[i][j][k][l] = m[(voigt(i, j), voigt(k, l))];
                    }
                }
            }
        }
        t
    }

    /// Transformation to covariant components using `T_{iα} = n_i · a^α`.
    pub fn to_covariant<S: Scalar>(&self, f: &FrameCore<S>) -> CovariantStiffness<S> {
        let n1 = {
            let l = dot(&f.a[0], &f.a[0]).sqrt();
            [f.a[0][0] / l, f.a[0][1] / l, f.a[0][2] / l]
        };
        let n2 = {
            let l = dot(&f.acon[1], &f.acon[1]).sqrt();
            [f.acon[1][0] / l, f.acon[1][1] / l, f.acon[1][2] / l]
        };
        let n = [n1, n2];
        let mut t = [[c::<S>(0.0); 2]; 2];
        for i in 0..2 {
            for al in 0..2 {
                t[i][al] = dot(&n[i], &f.acon[al]);
            }
        }
        let tr4 = |m: &Matrix3<f64>| -> [[S; 3]; 3] {
            let full = Self::tensor(m);
            let mut out = [[c::<S>(0.0); 3]; 3];
            for (ii, &(al, be)) in VOIGT_PAIRS.iter().enumerate() {
                for (jj, &(ga, de)) in VOIGT_PAIRS.iter().enumerate() {
                    let mut v = c::<S>(0.0);
                    for i in 0..2 {
                        for j in 0..2 {
                            let tij = t[i][al] * t[j][be];
                            for k in 0..2 {
                                for l in 0..2 {
                                    let e = full[i][j][k][l];
                                    if e != 0.0 {
                                        v += tij * t[k][ga] * t[l][de] * e;
                                    }
                                }
                            }
                        }
                    }
                    out[ii][jj] = v;
                }
            }
            out
        };
        let mut s = [[c::<S>(0.0); 2]; 2];
        for al in 0..2 {
            for be in 0..2 {
                let mut v = c::<S>(0.0);
                for i in 0..2 {
                    for j in 0..2 {
                        v += t[i][al] * t[j][be] * self.s[(i, j)];
                    }
                }
                s[al][be] = v;
            }
        }
        CovariantStiffness { a: tr4(&self.a), b: tr4(&self.b), d: tr4(&self.d), s }
    }
}
