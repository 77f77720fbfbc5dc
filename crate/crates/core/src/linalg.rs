//! Small dense complex matrices (dimension <= 8 in practice).

use num_complex::Complex64;
use std::ops::{Add, AddAssign, Mul, Sub};

pub type C64 = Complex64;

pub const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Debug, PartialEq)]
pub struct CMat {
    n: usize,
    data: Vec<C64>,
}

impl CMat {
    pub fn zeros(n: usize) -> Self {
        CMat {
            n,
            data: vec![C64::new(0.0, 0.0); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for k in 0..n {
            m.data[k * n + k] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_rows(rows: &[&[C64]]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix must be square");
            for (c, v) in row.iter().enumerate() {
                m.data[r * n + c] = *v;
            }
        }
        m
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (r, row) in rows.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                m.data[r * n + c] = C64::new(*v, 0.0);
            }
        }
        m
    }

    pub fn from_vec(n: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), n * n);
        CMat { n, data }
    }

    pub fn diag(d: &[C64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n);
        for (k, v) in d.iter().enumerate() {
            m.data[k * n + k] = *v;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.n + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: C64) {
        self.data[r * self.n + c] = v;
    }

    pub fn adjoint(&self) -> Self {
        let n = self.n;
        let mut m = Self::zeros(n);
        for r in 0..n {
            for c in 0..n {
                m.data[c * n + r] = self.data[r * n + c].conj();
            }
        }
        m
    }

    pub fn scale(&self, s: C64) -> Self {
        CMat {
            n: self.n,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        CMat {
            n: self.n,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// self += s * other
    pub fn axpy(&mut self, s: f64, other: &CMat) {
        debug_assert_eq!(self.n, other.n);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * s;
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.n).map(|k| self.data[k * self.n + k]).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn one_norm(&self) -> f64 {
        let n = self.n;
        (0..n)
            .map(|c| (0..n).map(|r| self.data[r * n + c].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn kron(&self, other: &CMat) -> Self {
        let (a, b) = (self.n, other.n);
        let n = a * b;
        let mut m = Self::zeros(n);
        for r1 in 0..a {
            for c1 in 0..a {
                let s = self.data[r1 * a + c1];
                if s == C64::new(0.0, 0.0) {
                    continue;
                }
                for r2 in 0..b {
                    for c2 in 0..b {
                        m.data[(r1 * b + r2) * n + c1 * b + c2] = s * other.data[r2 * b + c2];
                    }
                }
            }
        }
        m
    }

    pub fn hermiticity_error(&self) -> f64 {
        (self - &self.adjoint()).frob_norm()
    }

    pub fn unitarity_error(&self) -> f64 {
        (&(&self.adjoint() * self) - &CMat::identity(self.n)).frob_norm()
    }

    /// exp(self) by scaling and squaring with a truncated Taylor series.
    pub fn expm(&self) -> Self {
        let norm = self.one_norm();
        let mut s = 0u32;
        if norm > 0.5 {
            s = (norm / 0.5).log2().ceil() as u32;
        }
        let scaled = self.scale_re(1.0 / f64::powi(2.0, s as i32));
        let mut result = CMat::identity(self.n);
        let mut term = CMat::identity(self.n);
        for k in 1..=18 {
            term = &term * &scaled;
            term = term.scale_re(1.0 / k as f64);
            result += &term;
            if term.max_abs() < 1e-18 {
                break;
            }
        }
        for _ in 0..s {
            result = &result * &result;
        }
        result
    }

    /// One Newton-Schulz step toward the nearest unitary: U (3 - U^dag U) / 2.
    pub fn reunitarize(&self) -> Self {
        let mut g = (&self.adjoint() * self).scale_re(-0.5);
        for k in 0..self.n {
            let d = g.data[k * self.n + k];
            g.data[k * self.n + k] = d + C64::new(1.5, 0.0);
        }
        self * &g
    }

    /// exp(-i H dt) for Hermitian H.
    pub fn expm_hermitian_step(h: &CMat, dt: f64) -> Self {
        h.scale(C64::new(0.0, -dt)).expm()
    }
}

impl Mul for &CMat {
    type Output = CMat;
    fn mul(self, rhs: &CMat) -> CMat {
        let n = self.n;
        debug_assert_eq!(n, rhs.n);
        let mut m = CMat::zeros(n);
        for r in 0..n {
            for k in 0..n {
                let a = self.data[r * n + k];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                let row = &rhs.data[k * n..(k + 1) * n];
                let out = &mut m.data[r * n..(r + 1) * n];
                for (o, b) in out.iter_mut().zip(row) {
                    *o += a * b;
                }
            }
        }
        m
    }
}

impl Add for &CMat {
    type Output = CMat;
    fn add(self, rhs: &CMat) -> CMat {
        CMat {
            n: self.n,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMat {
    type Output = CMat;
    fn sub(self, rhs: &CMat) -> CMat {
        CMat {
            n: self.n,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl AddAssign<&CMat> for CMat {
    fn add_assign(&mut self, rhs: &CMat) {
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

pub mod pauli {
    use super::{CMat, C64};

    pub fn id() -> CMat {
        CMat::identity(2)
    }
    pub fn x() -> CMat {
        CMat::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
    }
    pub fn y() -> CMat {
        let z = C64::new(0.0, 0.0);
        CMat::from_rows(&[&[z, C64::new(0.0, -1.0)], &[C64::new(0.0, 1.0), z]])
    }
    pub fn z() -> CMat {
        CMat::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]])
    }

    pub fn by_char(c: char) -> CMat {
        match c {
            'I' => id(),
            'X' => x(),
            'Y' => y(),
            'Z' => z(),
            _ => panic!("unknown Pauli {c}"),
        }
    }

    /// Tensor product of single-qubit Paulis, leftmost character acts on qubit 0.
    pub fn string(s: &str) -> CMat {
        let mut it = s.chars();
        let mut m = by_char(it.next().expect("empty Pauli string"));
        for c in it {
            m = m.kron(&by_char(c));
        }
        m
    }
}

/// Embed a single-qubit operator on `q` into an n-qubit register (qubit 0 most significant).
pub fn embed1(n: usize, q: usize, op: &CMat) -> CMat {
    let mut m = CMat::identity(1);
    for k in 0..n {
        if k == q {
            m = m.kron(op);
        } else {
            m = m.kron(&CMat::identity(2));
        }
    }
    m
}

/// Embed a two-qubit operator (basis |q_a q_b>) acting on qubits a and b.
pub fn embed2(n: usize, a: usize, b: usize, op: &CMat) -> CMat {
    assert!(a != b && a < n && b < n);
    assert_eq!(op.dim(), 4);
    let d = 1usize << n;
    let bit = |x: usize, q: usize| (x >> (n - 1 - q)) & 1;
    let mut m = CMat::zeros(d);
    for r in 0..d {
        for c in 0..d {
            let mut rest_equal = true;
            for q in 0..n {
                if q != a && q != b && bit(r, q) != bit(c, q) {
                    rest_equal = false;
                    break;
                }
            }
            if !rest_equal {
                continue;
            }
            let lr = (bit(r, a) << 1) | bit(r, b);
            let lc = (bit(c, a) << 1) | bit(c, b);
            m.set(r, c, op.get(lr, lc));
        }
    }
    m
}

/// Diagonal of exp(-i/2 sum_k theta_k Z_k) on n qubits.
pub fn z_rotation_diag(thetas: &[f64]) -> Vec<C64> {
    let n = thetas.len();
    (0..1usize << n)
        .map(|x| {
            let mut phase = 0.0;
            for (q, th) in thetas.iter().enumerate() {
                let s = if (x >> (n - 1 - q)) & 1 == 0 { 1.0 } else { -1.0 };
                phase += s * th;
            }
            C64::from_polar(1.0, -0.5 * phase)
        })
        .collect()
}

pub fn z_rotation(thetas: &[f64]) -> CMat {
    CMat::diag(&z_rotation_diag(thetas))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pauli_algebra() {
        let (x, y, z) = (pauli::x(), pauli::y(), pauli::z());
        assert!((&(&x * &y) - &z.scale(I)).max_abs() < 1e-15);
        assert!((&(&x * &x) - &CMat::identity(2)).max_abs() < 1e-15);
        assert_eq!(pauli::string("XZ"), x.kron(&z));
        assert_eq!(pauli::string("IY").dim(), 4);
    }

    #[test]
    fn embedding_puts_qubit_zero_first() {
        let z0 = embed1(2, 0, &pauli::z());
        assert_eq!(z0.get(2, 2), C64::new(-1.0, 0.0));
        assert_eq!(z0.get(1, 1), C64::new(1.0, 0.0));
        let zz = pauli::string("ZX");
        let e = embed2(3, 2, 0, &zz);
        assert_eq!(e, pauli::string("XIZ"));
    }

    #[test]
    fn expm_matches_closed_forms() {
        for th in [0.1, 1.0, 7.3, 40.0] {
            let u = pauli::x().scale(C64::new(0.0, -th)).expm();
            let want = CMat::from_rows(&[
                &[C64::new(th.cos(), 0.0), C64::new(0.0, -th.sin())],
                &[C64::new(0.0, -th.sin()), C64::new(th.cos(), 0.0)],
            ]);
            assert!((&u - &want).max_abs() < 1e-12 * th.max(1.0), "{th}");
        }
        let d = CMat::diag(&[C64::new(0.3, 0.0), C64::new(-1.2, 0.5)]).expm();
        assert!((d.get(1, 1) - C64::new(-1.2, 0.5).exp()).norm() < 1e-14);
        assert!((&CMat::zeros(4).expm() - &CMat::identity(4)).max_abs() == 0.0);
    }

    #[test]
    fn z_rotation_sign_convention() {
        let r = z_rotation(&[0.8]);
        assert!((r.get(0, 0) - C64::from_polar(1.0, -0.4)).norm() < 1e-15);
        let via_expm = pauli::string("ZI").scale(C64::new(0.0, -0.4)).expm();
        let two = z_rotation(&[0.8, 0.0]);
        assert!((&two - &via_expm).max_abs() < 1e-14);
    }

    #[test]
    fn reunitarize_squares_the_defect() {
        let u = (&pauli::string("XY") + &pauli::string("ZZ").scale_re(0.3)).scale(C64::new(0.0, -0.7)).expm();
        let mut p = u.clone();
        p.set(0, 1, p.get(0, 1) + C64::new(1e-6, 2e-6));
        let before = p.unitarity_error();
        let after = p.reunitarize().unitarity_error();
        assert!(before > 1e-7);
        assert!(after < 10.0 * before * before, "{before} {after}");
        assert!((&u.reunitarize() - &u).max_abs() < 1e-14);
    }

    #[test]
    fn hermiticity_and_trace() {
        let h = pauli::string("XY");
        assert!(h.hermiticity_error() < 1e-15);
        assert!(pauli::x().scale(I).hermiticity_error() > 1.0);
        assert_eq!(CMat::identity(8).trace(), C64::new(8.0, 0.0));
    }
}
