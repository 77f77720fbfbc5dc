//! Membership in the normalizer of single-qubit Z rotations: unitaries `u` with
//! `u exp(i sum theta_k Z_k) u^dag` diagonal for every theta. Members are exactly
//! phase x (bit permutation with flips).
//!
//! Basis index convention: qubit 0 is the most significant bit.

use crate::error::{Result, VzError};
use crate::linalg::{embed1, embed2, pauli, z_rotation, CMat, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizerDecomposition {
    pub n_qubits: usize,
    /// Diagonal of the phase part, indexed by output basis state.
    pub phases: Vec<C64>,
    /// Bit of input qubit `q` lands on output qubit `perm[q]`.
    pub perm: Vec<usize>,
    /// Flip mask applied after the permutation, one entry per output qubit.
    pub flips: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizerVerdict {
    pub member: bool,
    /// Why a non-member was rejected.
    pub reason: Option<String>,
    pub decomposition: Option<NormalizerDecomposition>,
}

fn bit(x: usize, q: usize, n: usize) -> usize {
    (x >> (n - 1 - q)) & 1
}

fn one_hot(q: usize, n: usize) -> usize {
    1 << (n - 1 - q)
}

impl NormalizerDecomposition {
    /// The basis map x -> pi(x) xor b.
    pub fn map(&self, x: usize) -> usize {
        let n = self.n_qubits;
        let mut y = 0;
        for q in 0..n {
            if bit(x, q, n) == 1 {
                y |= one_hot(self.perm[q], n);
            }
        }
        for (q, f) in self.flips.iter().enumerate() {
            if *f {
                y ^= one_hot(q, n);
            }
        }
        y
    }

    pub fn reconstruct(&self) -> CMat {
        let d = 1usize << self.n_qubits;
        let mut m = CMat::zeros(d);
        for x in 0..d {
            let y = self.map(x);
            m.set(y, x, self.phases[y]);
        }
        m
    }

    /// s(complement x) = complement s(x) for every basis state.
    pub fn satisfies_complement(&self) -> bool {
        let d = 1usize << self.n_qubits;
        let all = d - 1;
        (0..d).all(|x| self.map(all ^ x) == all ^ self.map(x))
    }
}

fn n_qubits_of(u: &CMat) -> Result<usize> {
    let d = u.dim();
    if d == 0 || !d.is_power_of_two() {
        return Err(VzError::Validation(format!("dimension {d} is not a power of two")));
    }
    Ok(d.trailing_zeros() as usize)
}

fn reject(reason: String) -> NormalizerVerdict {
    NormalizerVerdict {
        member: false,
        reason: Some(reason),
        decomposition: None,
    }
}

/// Structural test: monomial, and the induced permutation of basis states is a bit permutation
/// followed by flips. Entries below `tol * max|U|` count as zero.
pub fn is_in_normalizer(u: &CMat, tol: f64) -> Result<NormalizerVerdict> {
    let n = n_qubits_of(u)?;
    let err = u.unitarity_error();
    if err > tol.max(1e-12) * u.dim() as f64 {
        return Err(VzError::NotUnitary(err));
    }
    let d = u.dim();
    let cut = tol * u.max_abs();
    let mut target = vec![usize::MAX; d];
    let mut hit = vec![false; d];
    for x in 0..d {
        let rows: Vec<usize> = (0..d).filter(|&r| u.get(r, x).norm() > cut).collect();
        if rows.len() != 1 {
            return Ok(reject(format!("column {x} has {} non-zero entries", rows.len())));
        }
        if hit[rows[0]] {
            return Ok(reject(format!("row {} is hit twice", rows[0])));
        }
        hit[rows[0]] = true;
        target[x] = rows[0];
    }
    let b = target[0];
    let mut perm = vec![usize::MAX; n];
    let mut used = vec![false; n];
    for q in 0..n {
        let y = target[one_hot(q, n)] ^ b;
        if y.count_ones() != 1 {
            return Ok(reject(format!("qubit {q} does not map to a single qubit")));
        }
        let p = n - 1 - y.trailing_zeros() as usize;
        if used[p] {
            return Ok(reject(format!("output qubit {p} is hit twice")));
        }
        used[p] = true;
        perm[q] = p;
    }
    let dec = NormalizerDecomposition {
        n_qubits: n,
        phases: (0..d)
            .map(|y| {
                let x = target.iter().position(|&t| t == y).unwrap();
                u.get(y, x)
            })
            .collect(),
        perm,
        flips: (0..n).map(|q| bit(b, q, n) == 1).collect(),
    };
    if let Some(x) = (0..d).find(|&x| dec.map(x) != target[x]) {
        return Ok(reject(format!("basis state {x} breaks the bit-permutation structure")));
    }
    Ok(NormalizerVerdict {
        member: true,
        reason: None,
        decomposition: Some(dec),
    })
}

/// Sampling oracle: conjugate random single-qubit Z rotations and check the result is again one.
pub fn brute_force_normalizer_check(u: &CMat, samples: usize) -> Result<bool> {
    brute_force_normalizer_check_seeded(u, samples, 0x5eed)
}

pub fn brute_force_normalizer_check_seeded(u: &CMat, samples: usize, seed: u64) -> Result<bool> {
    let n = n_qubits_of(u)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ud = u.adjoint();
    for _ in 0..samples {
        let th: Vec<f64> = (0..n).map(|_| rng.random_range(-PI..PI)).collect();
        let m = &(u * &z_rotation(&th)) * &ud;
        if !is_z_rotation(&m, n, 1e-9) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Whether `m` equals exp(i sum theta_k Z_k) for some theta: diagonal, no multi-qubit phase
/// terms, and no global phase beyond the sign reachable by a 2pi rotation.
fn is_z_rotation(m: &CMat, n: usize, tol: f64) -> bool {
    let d = m.dim();
    for r in 0..d {
        for c in 0..d {
            if r != c && m.get(r, c).norm() > tol {
                return false;
            }
        }
    }
    let diag: Vec<C64> = (0..d).map(|x| m.get(x, x)).collect();
    for x in 0..d {
        for j in 0..n {
            for k in j + 1..n {
                let (a, b) = (x ^ one_hot(j, n), x ^ one_hot(k, n));
                if (diag[x] * diag[a ^ one_hot(k, n)] - diag[a] * diag[b]).norm() > tol {
                    return false;
                }
            }
        }
    }
    (diag[0] * diag[d - 1] - 1.0).norm() <= tol
}

#[derive(Clone, Debug)]
pub struct ZooGate {
    pub name: &'static str,
    pub matrix: CMat,
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn two_qubit(rows: [[C64; 4]; 4]) -> CMat {
    let r: Vec<&[C64]> = rows.iter().map(|r| r.as_slice()).collect();
    CMat::from_rows(&r)
}

/// Named gates used by the CLI and the tests.
pub fn gate_zoo() -> Vec<ZooGate> {
    let o = c(0.0, 0.0);
    let l = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let hadamard = CMat::from_real_rows(&[&[h, h], &[h, -h]]);
    let cphase = |th: f64| CMat::diag(&[l, l, l, C64::from_polar(1.0, th)]);
    let swap = two_qubit([[l, o, o, o], [o, o, l, o], [o, l, o, o], [o, o, o, l]]);
    let cnot = two_qubit([[l, o, o, o], [o, l, o, o], [o, o, o, l], [o, o, l, o]]);
    let mut gates = vec![
        ("I", CMat::identity(2)),
        ("X", pauli::x()),
        ("Y", pauli::y()),
        ("Z", pauli::z()),
        ("S", CMat::diag(&[l, i])),
        ("T", CMat::diag(&[l, C64::from_polar(1.0, PI / 4.0)])),
        ("H", hadamard.clone()),
        ("SX", two_by_two(c(0.5, 0.5), c(0.5, -0.5))),
        ("RX(0.4)", rx(0.4)),
        ("SWAP", swap.clone()),
        ("ISWAP", two_qubit([[l, o, o, o], [o, o, i, o], [o, i, o, o], [o, o, o, l]])),
        ("BSWAP", two_qubit([[o, o, o, -i], [o, l, o, o], [o, o, l, o], [-i, o, o, o]])),
        ("CZ", cphase(PI)),
        ("CPHASE(0.7)", cphase(0.7)),
        ("CNOT", cnot.clone()),
        ("SQRT_SWAP", two_qubit([
            [l, o, o, o],
            [o, c(0.5, 0.5), c(0.5, -0.5), o],
            [o, c(0.5, -0.5), c(0.5, 0.5), o],
            [o, o, o, l],
        ])),
        ("SQRT_ISWAP", two_qubit([
            [l, o, o, o],
            [o, c(h, 0.0), c(0.0, h), o],
            [o, c(0.0, h), c(h, 0.0), o],
            [o, o, o, l],
        ])),
        ("SQRT_BSWAP", two_qubit([
            [c(h, 0.0), o, o, c(0.0, -h)],
            [o, l, o, o],
            [o, o, l, o],
            [c(0.0, -h), o, o, c(h, 0.0)],
        ])),
        ("XX", pauli::string("XX")),
        ("ZZ_ROT(0.3)", (pauli::string("ZZ").scale(c(0.0, -0.15))).expm()),
        ("H_I", hadamard.kron(&CMat::identity(2))),
        ("FSIM(0.3,0.2)", fsim(0.3, 0.2)),
        ("CCZ", {
            let mut d = vec![l; 8];
            d[7] = -l;
            CMat::diag(&d)
        }),
        ("TOFFOLI", {
            let mut m = CMat::identity(8);
            m.set(6, 6, o);
            m.set(7, 7, o);
            m.set(6, 7, l);
            m.set(7, 6, l);
            m
        }),
        ("FREDKIN", {
            let mut m = CMat::identity(8);
            m.set(5, 5, o);
            m.set(6, 6, o);
            m.set(5, 6, l);
            m.set(6, 5, l);
            m
        }),
        ("CYCLE3", &embed2(3, 0, 1, &swap) * &embed2(3, 1, 2, &swap)),
        ("XXX", pauli::string("XXX")),
        ("X_SWAP", &embed1(3, 0, &pauli::x()) * &embed2(3, 1, 2, &swap)),
        ("CNOT_12", embed2(3, 1, 2, &cnot)),
    ];
    gates.sort_by_key(|g| g.0);
    gates.into_iter().map(|(name, matrix)| ZooGate { name, matrix }).collect()
}

fn two_by_two(a: C64, b: C64) -> CMat {
    CMat::from_rows(&[&[a, b], &[b, a]])
}

fn rx(th: f64) -> CMat {
    let (s, co) = (0.5 * th).sin_cos();
    two_by_two(c(co, 0.0), c(0.0, -s))
}

fn fsim(th: f64, ph: f64) -> CMat {
    let (s, co) = th.sin_cos();
    let o = c(0.0, 0.0);
    two_qubit([
        [c(1.0, 0.0), o, o, o],
        [o, c(co, 0.0), c(0.0, -s), o],
        [o, c(0.0, -s), c(co, 0.0), o],
        [o, o, o, C64::from_polar(1.0, -ph)],
    ])
}

pub fn zoo_gate(name: &str) -> Option<CMat> {
    gate_zoo()
        .into_iter()
        .find(|g| g.name.eq_ignore_ascii_case(name))
        .map(|g| g.matrix)
}
