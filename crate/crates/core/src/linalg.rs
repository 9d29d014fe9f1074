//! Small dense linear algebra: 3-vectors, symmetric 3×3 matrices, and the
//! Cholesky-based solvers the fitting and voltage code rely on.

use std::ops::{Add, AddAssign, Index, Mul, Neg, Sub};

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec3<R> {
    pub x: R,
    pub y: R,
    pub z: R,
}

impl<R: Real> Vec3<R> {
    pub fn new(x: R, y: R, z: R) -> Self {
        Self { x, y, z }
    }

    pub fn zero() -> Self {
        Self::new(R::zero(), R::zero(), R::zero())
    }

    pub fn from_f64(x: f64, y: f64, z: f64) -> Self {
        Self::new(R::c(x), R::c(y), R::c(z))
    }

    pub fn dot(self, other: Self) -> R {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm2(self) -> R {
        self.dot(self)
    }

    pub fn norm(self) -> R {
        self.norm2().sqrt()
    }

    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn scale(self, s: R) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        Self::new(self.x / n, self.y / n, self.z / n)
    }

    pub fn to_array(self) -> [R; 3] {
        [self.x, self.y, self.z]
    }

    /// Deterministic sign convention: first component of magnitude above
    /// `tol` is made positive.
    pub fn canonical_sign(self) -> Self {
        let tol = R::c(1e-12);
        for c in [self.x, self.y, self.z] {
            if c.abs() > tol {
                return if c < R::zero() { -self } else { self };
            }
        }
        self
    }
}

impl<R: Real> Index<usize> for Vec3<R> {
    type Output = R;
    fn index(&self, i: usize) -> &R {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index out of range"),
        }
    }
}

impl<R: Real> Vec3<R> {
    pub fn set(&mut self, i: usize, v: R) {
        match i {
            0 => self.x = v,
            1 => self.y = v,
            2 => self.z = v,
            _ => panic!("Vec3 index out of range"),
        }
    }
}

impl<R: Real> Add for Vec3<R> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<R: Real> AddAssign for Vec3<R> {
    fn add_assign(&mut self, o: Self) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl<R: Real> Sub for Vec3<R> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<R: Real> Neg for Vec3<R> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<R: Real> Mul<R> for Vec3<R> {
    type Output = Self;
    fn mul(self, s: R) -> Self {
        self.scale(s)
    }
}

/// Symmetric 3×3 matrix stored as its upper triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymMat3<R> {
    pub xx: R,
    pub xy: R,
    pub xz: R,
    pub yy: R,
    pub yz: R,
    pub zz: R,
}

impl<R: Real> SymMat3<R> {
    pub fn zero() -> Self {
        Self {
            xx: R::zero(),
            xy: R::zero(),
            xz: R::zero(),
            yy: R::zero(),
            yz: R::zero(),
            zz: R::zero(),
        }
    }

    pub fn diag(a: R, b: R, c: R) -> Self {
        Self {
            xx: a,
            yy: b,
            zz: c,
            xy: R::zero(),
            xz: R::zero(),
            yz: R::zero(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> R {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        match (a, b) {
            (0, 0) => self.xx,
            (0, 1) => self.xy,
            (0, 2) => self.xz,
            (1, 1) => self.yy,
            (1, 2) => self.yz,
            (2, 2) => self.zz,
            _ => panic!("SymMat3 index out of range"),
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: R) {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        match (a, b) {
            (0, 0) => self.xx = v,
            (0, 1) => self.xy = v,
            (0, 2) => self.xz = v,
            (1, 1) => self.yy = v,
            (1, 2) => self.yz = v,
            (2, 2) => self.zz = v,
            _ => panic!("SymMat3 index out of range"),
        }
    }

    pub fn trace(&self) -> R {
        self.xx + self.yy + self.zz
    }

    pub fn mul_vec(&self, v: Vec3<R>) -> Vec3<R> {
        Vec3::new(
            self.xx * v.x + self.xy * v.y + self.xz * v.z,
            self.xy * v.x + self.yy * v.y + self.yz * v.z,
            self.xz * v.x + self.yz * v.y + self.zz * v.z,
        )
    }

    /// A·A (symmetric result).
    pub fn squared(&self) -> Self {
        let c0 = self.mul_vec(Vec3::new(R::one(), R::zero(), R::zero()));
        let c1 = self.mul_vec(Vec3::new(R::zero(), R::one(), R::zero()));
        let c2 = self.mul_vec(Vec3::new(R::zero(), R::zero(), R::one()));
        Self {
            xx: c0.dot(c0),
            xy: c0.dot(c1),
            xz: c0.dot(c2),
            yy: c1.dot(c1),
            yz: c1.dot(c2),
            zz: c2.dot(c2),
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        Self {
            xx: self.xx + o.xx,
            xy: self.xy + o.xy,
            xz: self.xz + o.xz,
            yy: self.yy + o.yy,
            yz: self.yz + o.yz,
            zz: self.zz + o.zz,
        }
    }

    pub fn scale(&self, s: R) -> Self {
        Self {
            xx: self.xx * s,
            xy: self.xy * s,
            xz: self.xz * s,
            yy: self.yy * s,
            yz: self.yz * s,
            zz: self.zz * s,
        }
    }

    pub fn max_abs(&self) -> R {
        [self.xx, self.xy, self.xz, self.yy, self.yz, self.zz]
            .into_iter()
            .fold(R::zero(), |m, v| m.max(v.abs()))
    }

    /// Eigen-decomposition by cyclic Jacobi rotations. Returns eigenvalues in
    /// ascending order with matching orthonormal eigenvectors.
    pub fn eigh(&self) -> ([R; 3], [Vec3<R>; 3]) {
        let mut a = [
            [self.xx, self.xy, self.xz],
            [self.xy, self.yy, self.yz],
            [self.xz, self.yz, self.zz],
        ];
        let mut v = [
            [R::one(), R::zero(), R::zero()],
            [R::zero(), R::one(), R::zero()],
            [R::zero(), R::zero(), R::one()],
        ];
        let eps = R::c(1e-14) * self.max_abs().max(R::c(1e-300));
        for _ in 0..64 {
            let off = (a[0][1].abs() + a[0][2].abs() + a[1][2].abs()) / R::c(3.0);
            if off <= eps {
                break;
            }
            for p in 0..2 {
                for q in (p + 1)..3 {
                    if a[p][q].abs() <= eps * R::c(1e-2) {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (R::c(2.0) * a[p][q]);
                    let t = {
                        let s = if theta >= R::zero() { R::one() } else { -R::one() };
                        s / (theta.abs() + (theta * theta + R::one()).sqrt())
                    };
                    let c = R::one() / (t * t + R::one()).sqrt();
                    let s = t * c;
                    for k in 0..3 {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..3 {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                        let vkp = v[k][p];
                        let vkq = v[k][q];
                        v[k][p] = c * vkp - s * vkq;
                        v[k][q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&i, &j| a[i][i].partial_cmp(&a[j][j]).unwrap());
        let vals = [a[idx[0]][idx[0]], a[idx[1]][idx[1]], a[idx[2]][idx[2]]];
        let vecs = [
            Vec3::new(v[0][idx[0]], v[1][idx[0]], v[2][idx[0]]).canonical_sign(),
            Vec3::new(v[0][idx[1]], v[1][idx[1]], v[2][idx[1]]).canonical_sign(),
            Vec3::new(v[0][idx[2]], v[1][idx[2]], v[2][idx[2]]).canonical_sign(),
        ];
        (vals, vecs)
    }
}

/// Dense column-major symmetric positive-definite solve via Cholesky.
/// `a` is row-major n×n; returns `None` when not positive definite.
pub fn cholesky<R: Real>(a: &[R], n: usize) -> Option<Vec<R>> {
    let mut l = vec![R::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum = sum - l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= R::zero() {
                    return None;
                }
                l[i * n + j] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solve A x = b with the Cholesky factor of A.
pub fn cholesky_solve<R: Real>(l: &[R], n: usize, b: &[R]) -> Vec<R> {
    let mut y = vec![R::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![R::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s = s - l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Inverse of an SPD matrix from its Cholesky factor (column-by-column solve).
pub fn cholesky_inverse<R: Real>(l: &[R], n: usize) -> Vec<R> {
    let mut inv = vec![R::zero(); n * n];
    let mut e = vec![R::zero(); n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = R::zero());
        e[j] = R::one();
        let col = cholesky_solve(l, n, &e);
        for i in 0..n {
            inv[i * n + j] = col[i];
        }
    }
    inv
}

/// Weighted linear least squares `min Σ w_k (a_k·x − y_k)²` via normal
/// equations. Returns the solution and the parameter covariance
/// `(AᵀWA)⁻¹` (valid when weights are inverse variances).
pub struct LstsqResult<R> {
    pub params: Vec<R>,
    pub covariance: Vec<R>,
    /// Weighted residual sum of squares.
    pub wrss: R,
}

pub fn weighted_lstsq<R: Real>(
    rows: &[(Vec<R>, R, R)],
    n: usize,
) -> Result<LstsqResult<R>, String> {
    let mut ata = vec![R::zero(); n * n];
    let mut atb = vec![R::zero(); n];
    for (a, y, w) in rows {
        debug_assert_eq!(a.len(), n);
        for i in 0..n {
            let wai = *w * a[i];
            atb[i] += wai * *y;
            for j in 0..n {
                ata[i * n + j] += wai * a[j];
            }
        }
    }
    let l = match cholesky(&ata, n) {
        Some(l) => l,
        None => {
            // Name the unidentifiable combination: eigenvector of the
            // smallest eigenvalue by a few inverse-power steps.
            let combo = null_direction(&ata, n);
            return Err(combo);
        }
    };
    let params = cholesky_solve(&l, n, &atb);
    let covariance = cholesky_inverse(&l, n);
    let mut wrss = R::zero();
    for (a, y, w) in rows {
        let mut pred = R::zero();
        for i in 0..n {
            pred += a[i] * params[i];
        }
        let r = pred - *y;
        wrss += *w * r * r;
    }
    Ok(LstsqResult {
        params,
        covariance,
        wrss,
    })
}

/// Rough description of the least-identifiable parameter combination of a
/// (near-)singular normal matrix, for error messages.
fn null_direction<R: Real>(ata: &[R], n: usize) -> String {
    // Power iteration on (s·I − A) where s exceeds the largest diagonal line sum.
    let mut s = R::zero();
    for i in 0..n {
        let mut row = R::zero();
        for j in 0..n {
            row += ata[i * n + j].abs();
        }
        s = s.max(row);
    }
    let mut v: Vec<R> = (0..n).map(|i| R::c(1.0 + i as f64 * 0.1)).collect();
    for _ in 0..200 {
        let mut w = vec![R::zero(); n];
        for i in 0..n {
            let mut acc = s * v[i];
            for j in 0..n {
                acc = acc - ata[i * n + j] * v[j];
            }
            w[i] = acc;
        }
        let norm = w.iter().fold(R::zero(), |m, x| m + *x * *x).sqrt();
        if norm == R::zero() {
            break;
        }
        v = w.into_iter().map(|x| x / norm).collect();
    }
    let parts: Vec<String> = v
        .iter()
        .enumerate()
        .filter(|(_, c)| c.abs() > R::c(0.05))
        .map(|(i, c)| format!("{:+.2}·p{}", c.as_f64(), i))
        .collect();
    parts.join(" ")
}
