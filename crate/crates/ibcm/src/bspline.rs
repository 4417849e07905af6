//! Univariate and tensor-product B-spline spaces.
//!
//! Open knot vectors follow the usual clamped construction from a list of
//! breaks. Periodic knot vectors are used for closed boundary layers, where the
//! seam must carry full `C^{p-1}` continuity.

use crate::error::{IbcmError, Result};
use crate::gauss;
use nalgebra::{DMatrix, DVector};

/// Knot vector of degree `p`.
///
/// For open vectors `knots` is the clamped vector `ξ^1..ξ^{n+p+1}`. For periodic
/// vectors `knots` is the periodically extended vector of length `n + 2p + 1`
/// and basis function `j` of the extension is identified with `j mod n`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    degree: usize,
    knots: Vec<f64>,
    breaks: Vec<f64>,
    mults: Vec<usize>,
    periodic: bool,
}

/// Nonzero basis functions at a point.
#[derive(Debug, Clone)]
pub struct BasisEval {
    /// Function indices, `p + 1` of them (may repeat for short periodic vectors).
    pub index: Vec<usize>,
    /// `ders[k][j]`: k-th derivative of function `index[j]`.
    pub ders: Vec<Vec<f64>>,
}

fn check_breaks(breaks: &[f64]) -> Result<()> {
    if breaks.len() < 2 {
        return Err(IbcmError::InvalidInput("at least two breaks required".into()));
    }
    if breaks.iter().any(|b| !b.is_finite()) {
        return Err(IbcmError::InvalidInput("non-finite break".into()));
    }
    if breaks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(IbcmError::InvalidInput("breaks must be strictly increasing".into()));
    }
    Ok(())
}

impl KnotVector {
    /// Open knot vector with interior multiplicity `p - continuity`.
    pub fn open(breaks: &[f64], p: usize, continuity: usize) -> Result<Self> {
        check_breaks(breaks)?;
        if p > 0 && continuity >= p {
            return Err(IbcmError::InvalidInput(format!(
                "interior continuity {continuity} must be below degree {p}"
            )));
        }
        let m_int = if p == 0 { 1 } else { p - continuity };
        let mut knots = Vec::new();
        let mut mults = Vec::new();
        for (k, &b) in breaks.iter().enumerate() {
            let m = if k == 0 || k + 1 == breaks.len() { p + 1 } else { m_int };
            knots.extend(std::iter::repeat(b).take(m));
            mults.push(m);
        }
        Ok(Self { degree: p, knots, breaks: breaks.to_vec(), mults, periodic: false })
    }

    /// Uniform-continuity open vector on `n` equal elements of `[a, b]`.
    pub fn uniform(a: f64, b: f64, n: usize, p: usize) -> Result<Self> {
        let breaks: Vec<f64> = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
        Self::open(&breaks, p, p.saturating_sub(1))
    }

    /// Validates and wraps an explicit open knot vector.
    pub fn from_knots(knots: &[f64], p: usize) -> Result<Self> {
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(IbcmError::InvalidInput("knots must be non-decreasing".into()));
        }
        let mut breaks = Vec::new();
        let mut mults: Vec<usize> = Vec::new();
        for &k in knots {
            if breaks.last() == Some(&k) {
                *mults.last_mut().unwrap() += 1;
            } else {
                breaks.push(k);
                mults.push(1);
            }
        }
        let n_inner = mults.len().saturating_sub(2);
        let ok_ends = mults.len() >= 2 && mults[0] == p + 1 && *mults.last().unwrap() == p + 1;
        let ok_inner = mults[1..1 + n_inner].iter().all(|&m| m >= 1 && m <= p.max(1));
        if !ok_ends || !ok_inner || knots.len() < 2 * (p + 1) {
            return Err(IbcmError::InvalidInput("not an open knot vector".into()));
        }
        Ok(Self { degree: p, knots: knots.to_vec(), breaks, mults, periodic: false })
    }

    /// Periodic vector with simple knots at `breaks`; the first and last break are identified.
    pub fn periodic(breaks: &[f64], p: usize) -> Result<Self> {
        check_breaks(breaks)?;
        let n = breaks.len() - 1;
        let period = breaks[n] - breaks[0];
        let t = |k: isize| -> f64 {
            let q = k.div_euclid(n as isize);
            let r = k.rem_euclid(n as isize) as usize;
            breaks[r] + q as f64 * period
        };
        let knots: Vec<f64> = (-(p as isize)..=(n + p) as isize).map(t).collect();
        let mults = vec![1; breaks.len()];
        Ok(Self { degree: p, knots, breaks: breaks.to_vec(), mults, periodic: true })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn multiplicities(&self) -> &[usize] {
        &self.mults
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn n_elements(&self) -> usize {
        self.breaks.len() - 1
    }

    /// Number of basis functions.
    pub fn n_funcs(&self) -> usize {
        if self.periodic {
            self.n_elements()
        } else {
            self.knots.len() - self.degree - 1
        }
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.breaks[0], *self.breaks.last().unwrap())
    }

    /// Element containing `x`; the right end maps to the last element.
    pub fn element_of(&self, x: f64) -> usize {
        let b = &self.breaks;
        let ne = b.len() - 1;
        if x >= b[ne - 1] {
            return ne - 1;
        }
        match b.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(ne - 1),
            Err(i) => i.saturating_sub(1),
        }
    }

    /// Index `μ` into `knots` with `knots[μ] <= x < knots[μ+1]` (closed at the right end).
    fn span(&self, x: f64) -> usize {
        let e = self.element_of(x);
        if self.periodic {
            return e + self.degree;
        }
        // last knot equal to breaks[e]
        self.mults[..=e].iter().sum::<usize>() - 1
    }

    /// Function indices nonzero on element `e`.
    pub fn element_funcs(&self, e: usize) -> Vec<usize> {
        let x = 0.5 * (self.breaks[e] + self.breaks[e + 1]);
        self.eval(x, 0).expect("element midpoint inside domain").index
    }

    /// Support `[ξ^i, ξ^{i+p+1}]` of open function `i` (periodic: extended copy `i`).
    pub fn support(&self, i: usize) -> (f64, f64) {
        (self.knots[i], self.knots[i + self.degree + 1])
    }

    /// Values and derivatives up to `n_deriv` of the `p + 1` nonzero functions.
    pub fn eval(&self, x: f64, n_deriv: usize) -> Result<BasisEval> {
        let (lo, hi) = self.domain();
        let tol = 1e-12 * (hi - lo).abs().max(1.0);
        if !(x >= lo - tol && x <= hi + tol) || !x.is_finite() {
            return Err(IbcmError::OutOfDomain { x, lo, hi });
        }
        let x = x.clamp(lo, hi);
        let p = self.degree;
        let mu = self.span(x);
        let ders = ders_basis_funs(mu, x, p, n_deriv, &self.knots);
        let first = mu - p;
        let index = (0..=p)
            .map(|j| if self.periodic { (first + j) % self.n_funcs() } else { first + j })
            .collect();
        Ok(BasisEval { index, ders })
    }
}

/// Basis values and derivatives at `x` in span `mu` (Piegl & Tiller A2.3).
fn ders_basis_funs(mu: usize, x: f64, p: usize, n: usize, u: &[f64]) -> Vec<Vec<f64>> {
    let mut ndu = vec![vec![0.0; p + 1]; p + 1];
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    ndu[0][0] = 1.0;
    for j in 1..=p {
        left[j] = x - u[mu + 1 - j];
        right[j] = u[mu + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    let mut ders = vec![vec![0.0; p + 1]; n + 1];
    for j in 0..=p {
        ders[0][j] = ndu[j][p];
    }
    let mut a = vec![vec![0.0; p + 1]; 2];
    for r in 0..=p {
        let (mut s1, mut s2) = (0usize, 1usize);
        a[0][0] = 1.0;
        for k in 1..=n.min(p) {
            let mut d = 0.0;
            let rk = r as isize - k as isize;
            let pk = p - k;
            if r >= k {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                d = a[s2][0] * ndu[rk as usize][pk];
            }
            let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2 = if (r as isize - 1) <= pk as isize { k - 1 } else { p - r };
            for j in j1..=j2 {
                let idx = (rk + j as isize) as usize;
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                d += a[s2][j] * ndu[idx][pk];
            }
            if r <= pk {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            ders[k][r] = d;
            std::mem::swap(&mut s1, &mut s2);
        }
    }
    let mut fac = p as f64;
    for k in 1..=n.min(p) {
        for v in ders[k].iter_mut() {
            *v *= fac;
        }
        fac *= (p - k) as f64;
    }
    ders
}

/// Nonzero bivariate functions at a point with partial derivatives.
#[derive(Debug, Clone)]
pub struct TensorEval {
    /// Active (compact) DOF index of each function.
    pub index: Vec<usize>,
    /// `d[k]` for the multi-index list `[(0,0),(1,0),(0,1),(2,0),(1,1),(0,2),(3,0),(2,1),(1,2),(0,3)]`.
    pub d: Vec<[f64; 10]>,
}

/// Multi-index slot of `∂^{i+j}/∂s1^i ∂s2^j` in [`TensorEval::d`].
pub const fn slot(i: usize, j: usize) -> usize {
    let o = i + j;
    o * (o + 1) / 2 + j
}

/// Tensor-product space with an active-function mask.
#[derive(Debug, Clone)]
pub struct TensorSplineSpace {
    pub kv: [KnotVector; 2],
    active: Vec<bool>,
    compact: Vec<Option<usize>>,
    n_active: usize,
}

impl TensorSplineSpace {
    pub fn new(kv1: KnotVector, kv2: KnotVector) -> Self {
        let n = kv1.n_funcs() * kv2.n_funcs();
        let mut s = Self { kv: [kv1, kv2], active: vec![true; n], compact: vec![], n_active: 0 };
        s.rebuild();
        s
    }

    fn rebuild(&mut self) {
        let mut c = 0;
        self.compact = self
            .active
            .iter()
            .map(|&a| {
                if a {
                    c += 1;
                    Some(c - 1)
                } else {
                    None
                }
            })
            .collect();
        self.n_active = c;
    }

    /// Keeps only functions whose support touches an active element.
    /// `element_active(e1, e2)` tells whether the element is Entire or Partial.
    pub fn restrict_to_elements(&mut self, element_active: impl Fn(usize, usize) -> bool) {
        let n1 = self.kv[0].n_funcs();
        let mut keep = vec![false; self.active.len()];
        for e2 in 0..self.kv[1].n_elements() {
            let f2 = self.kv[1].element_funcs(e2);
            for e1 in 0..self.kv[0].n_elements() {
                if !element_active(e1, e2) {
                    continue;
                }
                let f1 = self.kv[0].element_funcs(e1);
                for &j in &f2 {
                    for &i in &f1 {
                        keep[i + n1 * j] = true;
                    }
                }
            }
        }
        self.active = keep;
        self.rebuild();
    }

    pub fn n_funcs_full(&self) -> usize {
        self.active.len()
    }

    pub fn n_active(&self) -> usize {
        self.n_active
    }

    pub fn is_active(&self, i: usize, j: usize) -> bool {
        self.active[i + self.kv[0].n_funcs() * j]
    }

    /// Compact index of function `(i, j)` if active.
    pub fn compact_index(&self, i: usize, j: usize) -> Option<usize> {
        self.compact[i + self.kv[0].n_funcs() * j]
    }

    pub fn degree(&self) -> [usize; 2] {
        [self.kv[0].degree(), self.kv[1].degree()]
    }

    /// Active functions at `(s1, s2)` with derivatives up to total order `n_deriv ≤ 3`.
    pub fn eval(&self, s1: f64, s2: f64, n_deriv: usize) -> Result<TensorEval> {
        let b1 = self.kv[0].eval(s1, n_deriv)?;
        let b2 = self.kv[1].eval(s2, n_deriv)?;
        let n1 = self.kv[0].n_funcs();
        let mut index = Vec::with_capacity(b1.index.len() * b2.index.len());
        let mut d = Vec::with_capacity(index.capacity());
        for (jb, &j) in b2.index.iter().enumerate() {
            for (ib, &i) in b1.index.iter().enumerate() {
                let Some(c) = self.compact[i + n1 * j] else { continue };
                let mut v = [0.0; 10];
                for o in 0..=n_deriv {
                    for k in 0..=o {
                        let (a, b) = (o - k, k);
                        let da = b1.ders.get(a).map_or(0.0, |r| r[ib]);
                        let db = b2.ders.get(b).map_or(0.0, |r| r[jb]);
                        v[slot(a, b)] = da * db;
                    }
                }
                // periodic vectors shorter than p+1 elements repeat indices
                if let Some(pos) = index.iter().position(|&q| q == c) {
                    let acc: &mut [f64; 10] = &mut d[pos];
                    for k in 0..10 {
                        acc[k] += v[k];
                    }
                } else {
                    index.push(c);
                    d.push(v);
                }
            }
        }
        Ok(TensorEval { index, d })
    }
}

/// Coefficients of the L2 projection of `g` onto the space of `kv`.
///
/// The Gram matrix uses `p + 1` Gauss points per span; the right-hand side uses
/// `n_quad` points per span (at least `p + 1`).
pub fn l2_project_edge(kv: &KnotVector, g: impl Fn(f64) -> f64, n_quad: usize) -> Result<Vec<f64>> {
    let n = kv.n_funcs();
    let p = kv.degree();
    let mut gram = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    let br = kv.breaks();
    for e in 0..kv.n_elements() {
        for (x, w) in gauss::on_interval(p + 1, br[e], br[e + 1]) {
            let b = kv.eval(x, 0)?;
            for (a, &ia) in b.index.iter().enumerate() {
                for (c, &ic) in b.index.iter().enumerate() {
                    gram[(ia, ic)] += w * b.ders[0][a] * b.ders[0][c];
                }
            }
        }
        for (x, w) in gauss::on_interval(n_quad.max(p + 1), br[e], br[e + 1]) {
            let b = kv.eval(x, 0)?;
            let gx = g(x);
            for (a, &ia) in b.index.iter().enumerate() {
                rhs[ia] += w * b.ders[0][a] * gx;
            }
        }
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| IbcmError::NumericalFailure("singular Gram matrix".into()))?;
    Ok(chol.solve(&rhs).iter().copied().collect())
}

/// Evaluates `Σ c_i N_i(x)`.
pub fn eval_curve(kv: &KnotVector, coef: &[f64], x: f64) -> Result<f64> {
    let b = kv.eval(x, 0)?;
    Ok(b.index.iter().zip(&b.ders[0]).map(|(&i, v)| coef[i] * v).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Plain recursive Cox–de Boor with derivatives by the textbook formula.
    fn cox(i: usize, p: usize, u: &[f64], x: f64, last: f64) -> f64 {
        if p == 0 {
            let inside = (u[i] <= x && x < u[i + 1]) || (x == last && u[i] < u[i + 1] && u[i + 1] == last);
            return if inside { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        if u[i + p] > u[i] {
            v += (x - u[i]) / (u[i + p] - u[i]) * cox(i, p - 1, u, x, last);
        }
        if u[i + p + 1] > u[i + 1] {
            v += (u[i + p + 1] - x) / (u[i + p + 1] - u[i + 1]) * cox(i + 1, p - 1, u, x, last);
        }
        v
    }

    fn cox_d1(i: usize, p: usize, u: &[f64], x: f64, last: f64) -> f64 {
        let mut v = 0.0;
        if u[i + p] > u[i] {
            v += p as f64 / (u[i + p] - u[i]) * cox(i, p - 1, u, x, last);
        }
        if u[i + p + 1] > u[i + 1] {
            v -= p as f64 / (u[i + p + 1] - u[i + 1]) * cox(i + 1, p - 1, u, x, last);
        }
        v
    }

    #[test]
    fn open_vectors_from_breaks() {
        let kv = KnotVector::open(&[0.0, 1.0], 2, 1).unwrap();
        assert_eq!(kv.knots(), &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let kv = KnotVector::open(&[0.0, 0.5, 1.0], 2, 1).unwrap();
        assert_eq!(kv.knots(), &[0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0]);
        let kv = KnotVector::open(&[0.0, 0.5, 1.0], 3, 1).unwrap();
        assert_eq!(kv.knots().iter().filter(|&&k| k == 0.5).count(), 2);
        assert!(KnotVector::open(&[0.0, 0.5, 0.2], 2, 1).is_err());
        assert!(KnotVector::open(&[0.0, 1.0], 2, 2).is_err());
        assert!(KnotVector::from_knots(&[0.0, 0.0, 0.5, 1.0, 1.0], 2).is_err());
    }

    #[test]
    fn bernstein_midpoint() {
        let kv = KnotVector::open(&[0.0, 1.0], 2, 1).unwrap();
        let b = kv.eval(0.5, 1).unwrap();
        assert_eq!(b.index, vec![0, 1, 2]);
        assert_abs_diff_eq!(b.ders[0][0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(b.ders[0][1], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(b.ders[0][2], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn matches_recursive_oracle() {
        let kv = KnotVector::open(&[0.0, 0.5, 1.0], 2, 1).unwrap();
        let u = kv.knots().to_vec();
        for &x in &[0.25, 0.0, 0.5, 0.77, 1.0] {
            let b = kv.eval(x, 1).unwrap();
            for (j, &i) in b.index.iter().enumerate() {
                assert_abs_diff_eq!(b.ders[0][j], cox(i, 2, &u, x, 1.0), epsilon = 1e-14);
                assert_abs_diff_eq!(b.ders[1][j], cox_d1(i, 2, &u, x, 1.0), epsilon = 1e-12);
            }
        }
        let b = kv.eval(0.25, 0).unwrap();
        assert_abs_diff_eq!(b.ders[0][0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(b.ders[0][1], 0.625, epsilon = 1e-15);
        assert_abs_diff_eq!(b.ders[0][2], 0.125, epsilon = 1e-15);
        assert!(kv.eval(1.5, 0).is_err());
    }

    #[test]
    fn last_knot_closed() {
        let kv = KnotVector::uniform(0.0, 1.0, 4, 3).unwrap();
        let b = kv.eval(1.0, 0).unwrap();
        assert_eq!(*b.index.last().unwrap(), kv.n_funcs() - 1);
        assert_abs_diff_eq!(*b.ders[0].last().unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn periodic_is_smooth_across_seam() {
        let p = 3;
        let kv = KnotVector::periodic(&[0.0, 0.2, 0.5, 0.6, 1.0], p).unwrap();
        assert_eq!(kv.n_funcs(), 4);
        let c = [0.3, -1.0, 2.0, 0.7];
        let val = |x: f64, k: usize| {
            let b = kv.eval(x, 3).unwrap();
            b.index.iter().enumerate().map(|(j, &i)| c[i] * b.ders[k][j]).sum::<f64>()
        };
        for k in 0..p {
            assert_abs_diff_eq!(val(0.0, k), val(1.0, k), epsilon = 1e-11);
        }
        let b = kv.eval(0.37, 1).unwrap();
        assert_abs_diff_eq!(b.ders[0].iter().sum::<f64>(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn projection_reproduces_members_and_zero() {
        let kv = KnotVector::uniform(0.0, 1.0, 5, 3).unwrap();
        let target: Vec<f64> = (0..kv.n_funcs()).map(|i| if i == 2 { 1.0 } else { 0.0 }).collect();
        let c = l2_project_edge(&kv, |x| eval_curve(&kv, &target, x).unwrap(), 4).unwrap();
        for (a, b) in c.iter().zip(&target) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        let z = l2_project_edge(&kv, |_| 0.0, 4).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn projection_of_sine_is_accurate() {
        let kv = KnotVector::uniform(0.0, 1.0, 16, 3).unwrap();
        let g = |x: f64| (2.0 * std::f64::consts::PI * x).sin();
        let c = l2_project_edge(&kv, g, 8).unwrap();
        let err = (0..100)
            .map(|k| {
                let x = k as f64 / 99.0;
                (eval_curve(&kv, &c, x).unwrap() - g(x)).abs()
            })
            .fold(0.0, f64::max);
        assert!(err < 1e-4, "max error {err}");
    }

    #[test]
    fn polynomial_reproduction() {
        for p in 1..5 {
            let kv = KnotVector::open(&[0.0, 0.3, 0.45, 0.8, 1.0], p, p - 1).unwrap();
            let poly = |x: f64| (0..=p).map(|k| (k as f64 + 1.0) * x.powi(k as i32)).sum::<f64>();
            let c = l2_project_edge(&kv, poly, p + 2).unwrap();
            for k in 0..50 {
                let x = k as f64 / 49.0;
                let v = eval_curve(&kv, &c, x).unwrap();
                assert!((v - poly(x)).abs() <= 1e-12 * poly(x).abs().max(1.0));
            }
        }
    }

    fn arb_kv() -> impl Strategy<Value = KnotVector> {
        (1usize..5, proptest::collection::vec(0.05f64..1.0, 1..7), 0usize..4).prop_map(|(p, gaps, c)| {
            let mut b = vec![0.0];
            for g in gaps {
                let last = *b.last().unwrap();
                b.push(last + g);
            }
            KnotVector::open(&b, p, c.min(p - 1)).unwrap()
        })
    }

    proptest! {
        #[test]
        fn partition_of_unity(kv in arb_kv(), ts in proptest::collection::vec(0.0f64..=1.0, 500)) {
            let (lo, hi) = kv.domain();
            for t in ts {
                let x = lo + t * (hi - lo);
                let b = kv.eval(x, 2).unwrap();
                prop_assert_eq!(b.index.len(), kv.degree() + 1);
                prop_assert!((b.ders[0].iter().sum::<f64>() - 1.0).abs() < 1e-13);
                let scale = 1.0 / (hi - lo);
                prop_assert!(b.ders[1].iter().sum::<f64>().abs() < 1e-9 * scale.max(1.0) * 1e2);
            }
        }

        #[test]
        fn support_locality(kv in arb_kv(), t in 0.0f64..1.0) {
            let (lo, hi) = kv.domain();
            let x = lo + t * (hi - lo);
            let b = kv.eval(x, 0).unwrap();
            for (j, &i) in b.index.iter().enumerate() {
                let (a, c) = kv.support(i);
                if b.ders[0][j].abs() > 0.0 {
                    prop_assert!(x >= a && x <= c);
                }
            }
        }
    }

    #[test]
    fn tensor_eval_and_mask() {
        let kv = KnotVector::uniform(0.0, 1.0, 4, 2).unwrap();
        let mut sp = TensorSplineSpace::new(kv.clone(), kv);
        assert_eq!(sp.n_active(), 36);
        // deactivate the lower-left 2x2 elements
        sp.restrict_to_elements(|e1, e2| !(e1 < 2 && e2 < 2));
        assert!(!sp.is_active(0, 0));
        assert!(sp.is_active(2, 0));
        // every masked function vanishes on active elements
        for e2 in 0..4 {
            for e1 in 0..4 {
                if e1 < 2 && e2 < 2 {
                    continue;
                }
                let x = (e1 as f64 + 0.3) / 4.0;
                let y = (e2 as f64 + 0.6) / 4.0;
                let t = sp.eval(x, y, 1).unwrap();
                let s: f64 = t.d.iter().map(|v| v[0]).sum();
                assert_abs_diff_eq!(s, 1.0, epsilon = 1e-14);
            }
        }
        assert_eq!(slot(1, 1), 4);
        assert_eq!(slot(0, 3), 9);
    }
}
