//! The memoryless qubit channel and its Choi matrix.
//!
//! Basis order is `|e⟩ = 0`, `|g⟩ = 1`. Choi matrices use system ⊗ ancilla
//! ordering with the normalized maximally entangled input, so they have
//! unit trace.

use num_complex::Complex64;
use serde::Serialize;

use crate::{Error, Result};

pub type Matrix2 = [[Complex64; 2]; 2];
pub type Matrix4 = [[Complex64; 4]; 4];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

const STATE_TOL: f64 = 1e-12;
const HERMITIAN_TOL: f64 = 1e-10;
const CHANNEL_SLACK: f64 = 1e-9;

/// Qubit density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix {
    m: Matrix2,
}

impl DensityMatrix {
    /// Checks Hermiticity, unit trace and positivity, each to `10⁻¹²`.
    pub fn new(m: Matrix2) -> Result<Self> {
        if m.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("density matrix has non-finite entries"));
        }
        if (m[0][1] - m[1][0].conj()).norm() > STATE_TOL || m[0][0].im.abs() > STATE_TOL || m[1][1].im.abs() > STATE_TOL
        {
            return Err(Error::invalid("density matrix is not Hermitian"));
        }
        let tr = m[0][0].re + m[1][1].re;
        if (tr - 1.0).abs() > STATE_TOL {
            return Err(Error::invalid(format!("density matrix trace is {tr}, not 1")));
        }
        let (lo, _) = eigen2(m[0][0].re, m[1][1].re, m[0][1]);
        if lo < -STATE_TOL {
            return Err(Error::invalid(format!("density matrix has eigenvalue {lo}")));
        }
        Ok(Self { m })
    }

    pub fn excited() -> Self {
        Self { m: [[ONE, ZERO], [ZERO, ZERO]] }
    }

    pub fn ground() -> Self {
        Self { m: [[ZERO, ZERO], [ZERO, ONE]] }
    }

    /// Pure state `a|e⟩ + b|g⟩` (normalized here).
    pub fn pure(a: Complex64, b: Complex64) -> Result<Self> {
        let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
        if !(norm > 0.0) {
            return Err(Error::invalid("zero state vector"));
        }
        let (a, b) = (a / norm, b / norm);
        Self::new([[a * a.conj(), a * b.conj()], [b * a.conj(), b * b.conj()]])
    }

    pub fn matrix(&self) -> &Matrix2 {
        &self.m
    }

    /// Excited-state population `ρ_ee`.
    pub fn rho_ee(&self) -> f64 {
        self.m[0][0].re
    }

    pub fn trace(&self) -> f64 {
        self.m[0][0].re + self.m[1][1].re
    }

    pub fn eigenvalues(&self) -> [f64; 2] {
        let (lo, hi) = eigen2(self.m[0][0].re, self.m[1][1].re, self.m[0][1]);
        [lo, hi]
    }
}

/// Eigenvalues of `[[a, b], [b*, d]]`, ascending.
fn eigen2(a: f64, d: f64, b: Complex64) -> (f64, f64) {
    let mean = 0.5 * (a + d);
    let r = (0.5 * (a - d)).hypot(b.norm());
    (mean - r, mean + r)
}

/// `ρ ↦ [[|c|²ρ_ee, cρ_eg], [c*ρ_ge, 1 - |c|²ρ_ee]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QubitChannel {
    c: Complex64,
}

impl QubitChannel {
    pub fn new(c: Complex64) -> Result<Self> {
        if !c.re.is_finite() || !c.im.is_finite() || c.norm() > 1.0 + CHANNEL_SLACK {
            return Err(Error::invalid(format!("channel parameter must satisfy |c| <= 1, got {c}")));
        }
        Ok(Self { c })
    }

    pub fn identity() -> Self {
        Self { c: ONE }
    }

    pub fn c(&self) -> Complex64 {
        self.c
    }

    pub fn apply(&self, rho: &DensityMatrix) -> DensityMatrix {
        let p = self.c.norm_sqr();
        let r = &rho.m;
        let ee = r[0][0] * p;
        DensityMatrix { m: [[ee, self.c * r[0][1]], [self.c.conj() * r[1][0], ONE - ee]] }
    }

    /// The linear extension of [`apply`](Self::apply) to any 2×2 operator.
    pub fn apply_operator(&self, m: &Matrix2) -> Matrix2 {
        let p = self.c.norm_sqr();
        [[m[0][0] * p, self.c * m[0][1]], [self.c.conj() * m[1][0], m[1][1] + m[0][0] * (1.0 - p)]]
    }

    /// `outer ∘ inner`: the channel parameters multiply.
    pub fn compose(outer: &QubitChannel, inner: &QubitChannel) -> QubitChannel {
        QubitChannel { c: outer.c * inner.c }
    }

    pub fn choi(&self) -> ChoiMatrix {
        let c = self.c;
        let p = c.norm_sqr();
        let h = 0.5;
        ChoiMatrix {
            m: [
                [ONE * (h * p), ZERO, ZERO, c * h],
                [ZERO; 4],
                [ZERO, ZERO, ONE * (h * (1.0 - p)), ZERO],
                [c.conj() * h, ZERO, ZERO, ONE * h],
            ],
        }
    }
}

/// `compose(outer, inner)` as a free function.
pub fn compose(outer: &QubitChannel, inner: &QubitChannel) -> QubitChannel {
    QubitChannel::compose(outer, inner)
}

/// Choi matrix of a channel.
pub fn choi(ch: &QubitChannel) -> ChoiMatrix {
    ch.choi()
}

/// 4×4 Choi matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChoiMatrix {
    m: Matrix4,
}

impl ChoiMatrix {
    /// Choi matrix of the linear map `map`, from its action on `|i⟩⟨j|`.
    pub fn from_superoperator(map: impl Fn(&Matrix2) -> Matrix2) -> Self {
        let mut m = [[ZERO; 4]; 4];
        for a in 0..2 {
            for b in 0..2 {
                let mut unit = [[ZERO; 2]; 2];
                unit[a][b] = ONE;
                let image = map(&unit);
                for s in 0..2 {
                    for t in 0..2 {
                        m[2 * s + a][2 * t + b] = image[s][t] * 0.5;
                    }
                }
            }
        }
        Self { m }
    }

    pub fn matrix(&self) -> &Matrix4 {
        &self.m
    }

    pub fn trace(&self) -> Complex64 {
        (0..4).map(|i| self.m[i][i]).sum()
    }

    pub fn eigenvalues(&self) -> Result<[f64; 4]> {
        hermitian_eigenvalues(&self.m)
    }

    /// Elementwise difference `self - other`.
    pub fn difference(&self, other: &ChoiMatrix) -> Matrix4 {
        let mut d = self.m;
        for (row, orow) in d.iter_mut().zip(&other.m) {
            for (x, y) in row.iter_mut().zip(orow) {
                *x -= y;
            }
        }
        d
    }

    /// Row-major `[re, im]` pairs.
    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct Export {
            rows: usize,
            cols: usize,
            data: Vec<[f64; 2]>,
        }
        let data = self.m.iter().flatten().map(|z| [z.re + 0.0, z.im + 0.0]).collect();
        serde_json::to_value(Export { rows: 4, cols: 4, data }).expect("plain data serializes")
    }
}

/// `½‖a - b‖₁`, the trace distance of two Choi matrices.
pub fn trace_distance(a: &ChoiMatrix, b: &ChoiMatrix) -> Result<f64> {
    let ev = hermitian_eigenvalues(&a.difference(b))?;
    Ok((0.5 * ev.iter().map(|x| x.abs()).sum::<f64>()).clamp(0.0, 1.0))
}

fn max_abs(m: &Matrix4) -> f64 {
    m.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
}

fn check_hermitian(m: &Matrix4) -> Result<()> {
    if m.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::domain("matrix has non-finite entries"));
    }
    let mut residual: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            residual = residual.max((m[i][j] - m[j][i].conj()).norm());
        }
    }
    if residual > HERMITIAN_TOL * max_abs(m).max(1.0) {
        return Err(Error::domain(format!("matrix is not Hermitian (residual {residual:e})")));
    }
    Ok(())
}

/// True when only the diagonal and the (0,3)/(3,0) pair can be nonzero, the
/// pattern shared by every Choi matrix of this channel family.
fn has_choi_pattern(m: &Matrix4) -> bool {
    (0..4).all(|i| (0..4).all(|j| i == j || matches!((i, j), (0, 3) | (3, 0)) || m[i][j] == ZERO))
}

/// Eigenvalues of a 4×4 Hermitian matrix, ascending.
///
/// Matrices with the Choi sparsity pattern reduce to one 2×2 block plus two
/// diagonal entries and are solved in closed form; anything else goes through
/// cyclic complex Jacobi.
pub fn hermitian_eigenvalues(m: &Matrix4) -> Result<[f64; 4]> {
    check_hermitian(m)?;
    let mut ev = if has_choi_pattern(m) {
        let (lo, hi) = eigen2(m[0][0].re, m[3][3].re, m[0][3]);
        [lo, hi, m[1][1].re, m[2][2].re]
    } else {
        jacobi(m)?.0
    };
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Eigenvalues (ascending) and unit eigenvectors (as columns of the second
/// matrix) of a 4×4 Hermitian matrix, always by Jacobi.
pub fn hermitian_eigensystem(m: &Matrix4) -> Result<([f64; 4], Matrix4)> {
    check_hermitian(m)?;
    let (vals, vecs) = jacobi(m)?;
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
    let mut sorted_vals = [0.0; 4];
    let mut sorted_vecs = [[ZERO; 4]; 4];
    for (k, &i) in order.iter().enumerate() {
        sorted_vals[k] = vals[i];
        for r in 0..4 {
            sorted_vecs[r][k] = vecs[r][i];
        }
    }
    Ok((sorted_vals, sorted_vecs))
}

fn jacobi(m: &Matrix4) -> Result<([f64; 4], Matrix4)> {
    let mut a = *m;
    // symmetrize so rounding in the input cannot stall the sweeps
    for i in 0..4 {
        a[i][i] = Complex64::new(a[i][i].re, 0.0);
        for j in (i + 1)..4 {
            let avg = 0.5 * (a[i][j] + a[j][i].conj());
            a[i][j] = avg;
            a[j][i] = avg.conj();
        }
    }
    let mut v = [[ZERO; 4]; 4];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = ONE;
    }
    let scale = max_abs(&a);
    if scale == 0.0 {
        return Ok(([0.0; 4], v));
    }
    for _sweep in 0..100 {
        let off: f64 = (0..4)
            .flat_map(|i| (0..4).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j].norm_sqr())
            .sum();
        if off.sqrt() <= 1e-15 * scale {
            let vals = [a[0][0].re, a[1][1].re, a[2][2].re, a[3][3].re];
            return Ok((vals, v));
        }
        for p in 0..3 {
            for q in (p + 1)..4 {
                let g = a[p][q];
                let gabs = g.norm();
                if gabs <= 1e-300 {
                    continue;
                }
                // phase to make the pivot real, then a real Jacobi rotation
                let phase = g / gabs;
                let theta = (a[q][q].re - a[p][p].re) / (2.0 * gabs);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // U = D·R with D = diag(1, …, phase* at q, …); only columns p, q change
                let up = [c, s];
                let uq = [-s * phase.conj(), c * phase.conj()];
                rotate(&mut a, &mut v, p, q, up, uq);
            }
        }
    }
    Err(Error::numerical("Jacobi eigensolver did not converge"))
}

/// Applies `A ← U†AU`, `V ← VU` for the unitary that is the identity outside
/// rows/columns `p, q` and has `U[p][p] = up[0]`, `U[p][q] = up[1]`,
/// `U[q][p] = uq[0]`, `U[q][q] = uq[1]`.
fn rotate(a: &mut Matrix4, v: &mut Matrix4, p: usize, q: usize, up: [f64; 2], uq: [Complex64; 2]) {
    let u_pp = Complex64::new(up[0], 0.0);
    let u_pq = Complex64::new(up[1], 0.0);
    let (u_qp, u_qq) = (uq[0], uq[1]);
    // A·U on columns p, q
    for row in a.iter_mut() {
        let (x, y) = (row[p], row[q]);
        row[p] = x * u_pp + y * u_qp;
        row[q] = x * u_pq + y * u_qq;
    }
    // U†·(AU) on rows p, q
    for col in 0..4 {
        let (x, y) = (a[p][col], a[q][col]);
        a[p][col] = u_pp.conj() * x + u_qp.conj() * y;
        a[q][col] = u_pq.conj() * x + u_qq.conj() * y;
    }
    a[p][q] = ZERO;
    a[q][p] = ZERO;
    for row in v.iter_mut() {
        let (x, y) = (row[p], row[q]);
        row[p] = x * u_pp + y * u_qp;
        row[q] = x * u_pq + y * u_qq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cplx(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn apply_examples() {
        let rho = DensityMatrix::pure(cplx(0.6, 0.0), cplx(0.0, 0.8)).unwrap();
        let same = QubitChannel::identity().apply(&rho);
        for (r1, r2) in same.matrix().iter().zip(rho.matrix()) {
            for (x, y) in r1.iter().zip(r2) {
                assert!((x - y).norm() < 1e-15);
            }
        }
        let dead = QubitChannel::new(ZERO).unwrap().apply(&rho);
        assert_eq!(dead, DensityMatrix::ground());
        let out = QubitChannel::new(cplx(0.8, 0.0)).unwrap().apply(&DensityMatrix::excited());
        assert!((out.rho_ee() - 0.64).abs() < 1e-15);
        assert!((out.matrix()[1][1].re - 0.36).abs() < 1e-15);
    }

    #[test]
    fn channel_rejects_large_parameter() {
        assert!(QubitChannel::new(cplx(1.0 + 1e-10, 0.0)).is_ok());
        assert!(QubitChannel::new(cplx(0.8, 0.7)).is_err());
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::new([[cplx(0.5, 0.0), ZERO], [ZERO, cplx(0.6, 0.0)]]).is_err());
        assert!(DensityMatrix::new([[cplx(0.5, 0.0), cplx(0.6, 0.0)], [cplx(0.6, 0.0), cplx(0.5, 0.0)]]).is_err());
        assert!(DensityMatrix::new([[cplx(0.5, 0.0), cplx(0.1, 0.1)], [cplx(0.1, 0.1), cplx(0.5, 0.0)]]).is_err());
    }

    #[test]
    fn choi_examples() {
        let id = QubitChannel::identity().choi();
        let ev = id.eigenvalues().unwrap();
        assert_eq!(ev, [0.0, 0.0, 0.0, 1.0]);
        let m = id.matrix();
        assert_eq!(m[0][3], cplx(0.5, 0.0));
        let dead = QubitChannel::new(ZERO).unwrap().choi();
        assert_eq!(dead.matrix()[2][2], cplx(0.5, 0.0));
        assert_eq!(dead.matrix()[3][3], cplx(0.5, 0.0));
        assert_eq!(dead.trace(), ONE);
    }

    #[test]
    fn choi_matches_superoperator_action() {
        let ch = QubitChannel::new(cplx(0.3, -0.5)).unwrap();
        let built = ChoiMatrix::from_superoperator(|m| ch.apply_operator(m));
        let direct = ch.choi();
        for (r1, r2) in built.matrix().iter().zip(direct.matrix()) {
            for (x, y) in r1.iter().zip(r2) {
                assert!((x - y).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn composition_choi_entries() {
        let (c21, c10) = (cplx(0.7, 0.1), cplx(0.5, -0.4));
        let comp = compose(&QubitChannel::new(c21).unwrap(), &QubitChannel::new(c10).unwrap());
        let m = *comp.choi().matrix();
        assert!((m[0][0].re - 0.5 * c21.norm_sqr() * c10.norm_sqr()).abs() < 1e-15);
        assert!((m[0][3] - 0.5 * c21 * c10).norm() < 1e-15);
    }

    #[test]
    fn block_eigenvalues_closed_form() {
        // Difference matrix of real channels: ½[[MN, 0, 0, M], 0, [.., -MN, ..], [M, 0, 0, 0]]
        let (c20, p) = (0.7, 0.64);
        let (mm, nn) = (c20 - p, c20 + p);
        let a = choi(&QubitChannel::new(cplx(c20, 0.0)).unwrap());
        let b = choi(&QubitChannel::new(cplx(p, 0.0)).unwrap());
        let ev = hermitian_eigenvalues(&a.difference(&b)).unwrap();
        let s = (nn * nn + 4.0).sqrt();
        let mut want = [(mm * nn - mm.abs() * s) / 4.0, (mm * nn + mm.abs() * s) / 4.0, 0.0, -0.5 * mm * nn];
        want.sort_by(f64::total_cmp);
        for (x, y) in ev.iter().zip(&want) {
            assert!((x - y).abs() < 1e-15);
        }
        let (vals, _) = hermitian_eigensystem(&a.difference(&b)).unwrap();
        for (x, y) in vals.iter().zip(&want) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_and_general_eigenvalues() {
        let mut m = [[ZERO; 4]; 4];
        for i in 0..4 {
            m[i][i] = cplx(4.0 - i as f64, 0.0);
        }
        assert_eq!(hermitian_eigenvalues(&m).unwrap(), [1.0, 2.0, 3.0, 4.0]);
        m[0][1] = cplx(0.3, 0.2);
        m[1][0] = cplx(0.3, -0.2);
        m[2][3] = cplx(0.0, 1.0);
        m[3][2] = cplx(0.0, -1.0);
        let ev = hermitian_eigenvalues(&m).unwrap();
        let tr: f64 = ev.iter().sum();
        assert!((tr - 10.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_rejects_non_hermitian() {
        let mut m = [[ZERO; 4]; 4];
        m[0][1] = ONE;
        assert!(matches!(hermitian_eigenvalues(&m), Err(Error::Domain(_))));
    }

    #[test]
    fn trace_distance_basics() {
        let a = QubitChannel::new(cplx(0.4, 0.3)).unwrap().choi();
        assert_eq!(trace_distance(&a, &a).unwrap(), 0.0);
        let id = QubitChannel::identity().choi();
        let dead = QubitChannel::new(ZERO).unwrap().choi();
        // difference ½[[1,0,0,1],0,[0,0,-1,0],[1,0,0,0]]: eigenvalues (1±√5)/4, -½, 0
        let want = 0.5 * ((1.0 + 5f64.sqrt()) / 4.0 + (5f64.sqrt() - 1.0) / 4.0 + 0.5);
        assert!((trace_distance(&id, &dead).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn choi_json_layout() {
        let v = QubitChannel::identity().choi().to_json();
        assert_eq!(v["rows"], 4);
        let data = v["data"].as_array().unwrap();
        assert_eq!(data.len(), 16);
        assert_eq!(data[3][0], 0.5);
        assert_eq!(data[15][0], 0.5);
    }
}
