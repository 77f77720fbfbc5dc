//! Hermitian basis decomposition of a two-qubit coupling operator and dilation case selection.

use crate::error::Result;
use crate::linalg::{pauli, CMat};
use crate::model::{CaseTag, CouplingOperator};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subspace {
    Z,
    CPlus,
    CMinus,
    Qi,
    Qj,
}

/// Labels of the 16 basis elements, grouped by subspace. The first factor acts on qubit i.
pub const BASIS_LABELS: [(&str, Subspace); 16] = [
    ("II", Subspace::Z),
    ("ZI", Subspace::Z),
    ("IZ", Subspace::Z),
    ("ZZ", Subspace::Z),
    ("XX-YY", Subspace::CPlus),
    ("XY+YX", Subspace::CPlus),
    ("XX+YY", Subspace::CMinus),
    ("XY-YX", Subspace::CMinus),
    ("XI", Subspace::Qi),
    ("YI", Subspace::Qi),
    ("XZ", Subspace::Qi),
    ("YZ", Subspace::Qi),
    ("IX", Subspace::Qj),
    ("IY", Subspace::Qj),
    ("ZX", Subspace::Qj),
    ("ZY", Subspace::Qj),
];

/// Matrix of a basis element label such as "ZZ" or "XY-YX".
pub fn basis_matrix(label: &str) -> CMat {
    if label.len() == 2 {
        return pauli::string(label);
    }
    let (a, rest) = label.split_at(2);
    let (op, b) = rest.split_at(1);
    let mut m = pauli::string(a);
    m.axpy(if op == "+" { 1.0 } else { -1.0 }, &pauli::string(b));
    m
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisElement {
    pub label: String,
    pub subspace: Subspace,
    /// a_B = Tr(B E) / 4
    pub coeff: f64,
    /// Tr(B^2)
    pub norm_sq: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisDecomposition {
    pub elements: Vec<BasisElement>,
    /// Hilbert-Schmidt norm of the decomposed operator.
    pub hs_norm: f64,
    /// Relative occupation threshold.
    pub eps: f64,
}

pub const DEFAULT_EPS: f64 = 1e-9;

pub fn decompose(e: &CouplingOperator) -> Result<BasisDecomposition> {
    decompose_with(e, DEFAULT_EPS)
}

pub fn decompose_with(e: &CouplingOperator, eps: f64) -> Result<BasisDecomposition> {
    e.validate()?;
    let m = e.matrix();
    let elements = BASIS_LABELS
        .iter()
        .map(|(label, sub)| {
            let b = basis_matrix(label);
            BasisElement {
                label: label.to_string(),
                subspace: *sub,
                coeff: (&b * m).trace().re / 4.0,
                norm_sq: (&b * &b).trace().re,
            }
        })
        .collect();
    Ok(BasisDecomposition {
        elements,
        hs_norm: m.frob_norm(),
        eps,
    })
}

impl BasisDecomposition {
    pub fn coeff(&self, label: &str) -> Option<f64> {
        self.elements.iter().find(|e| e.label == label).map(|e| e.coeff)
    }

    /// Sum over B of a_B B weighted by the dual factor 4 / Tr(B^2).
    pub fn reconstruct(&self) -> CMat {
        let mut m = CMat::zeros(4);
        for e in &self.elements {
            m.axpy(e.coeff * 4.0 / e.norm_sq, &basis_matrix(&e.label));
        }
        m
    }

    pub fn occupied(&self, s: Subspace) -> bool {
        let thr = self.eps * self.hs_norm;
        self.elements.iter().any(|e| e.subspace == s && e.coeff.abs() > thr)
    }

    /// Reconstruct keeping only the given subspaces.
    pub fn project(&self, keep: &[Subspace]) -> CMat {
        let mut m = CMat::zeros(4);
        for e in self.elements.iter().filter(|e| keep.contains(&e.subspace)) {
            m.axpy(e.coeff * 4.0 / e.norm_sq, &basis_matrix(&e.label));
        }
        m
    }
}

pub fn classify(d: &BasisDecomposition) -> CaseTag {
    let occ: Vec<Subspace> = [Subspace::CPlus, Subspace::CMinus, Subspace::Qi, Subspace::Qj]
        .into_iter()
        .filter(|s| d.occupied(*s))
        .collect();
    match occ.as_slice() {
        [] => CaseTag::ZOnly,
        [Subspace::CPlus] => CaseTag::ZCPlus,
        [Subspace::CMinus] => CaseTag::ZCMinus,
        [Subspace::Qi] => CaseTag::ZQi,
        [Subspace::Qj] => CaseTag::ZQj,
        _ => CaseTag::General,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RwaLevel {
    /// Keep the operator as is.
    None,
    DropCPlus,
    DropCPlusQ,
    DropAllOscillating,
}

impl RwaLevel {
    fn kept(&self) -> &'static [Subspace] {
        match self {
            RwaLevel::None => &[Subspace::Z, Subspace::CPlus, Subspace::CMinus, Subspace::Qi, Subspace::Qj],
            RwaLevel::DropCPlus => &[Subspace::Z, Subspace::CMinus, Subspace::Qi, Subspace::Qj],
            RwaLevel::DropCPlusQ => &[Subspace::Z, Subspace::CMinus],
            RwaLevel::DropAllOscillating => &[Subspace::Z],
        }
    }
}

pub fn rwa_project(e: &CouplingOperator, level: RwaLevel) -> Result<CouplingOperator> {
    let d = decompose(e)?;
    Ok(CouplingOperator(d.project(level.kept())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;
    use proptest::prelude::*;

    fn op(terms: &[(&str, f64)]) -> CouplingOperator {
        CouplingOperator::from_paulis(terms)
    }

    #[test]
    fn zz_is_a_single_basis_element() {
        let d = decompose(&op(&[("ZZ", 1.0)])).unwrap();
        for e in &d.elements {
            let want = if e.label == "ZZ" { 1.0 } else { 0.0 };
            assert!((e.coeff - want).abs() < 1e-15, "{} {}", e.label, e.coeff);
        }
        assert_eq!(classify(&d), CaseTag::ZOnly);
    }

    #[test]
    fn heisenberg_support_and_coefficients() {
        let e = op(&[("XX", 1.0), ("YY", 1.0), ("ZZ", 1.0)]);
        let d = decompose(&e).unwrap();
        // Independent trace oracle: Tr((XX+YY)(XX+YY+ZZ))/4 = (4 + 4)/4.
        let oracle = {
            let b = &pauli::string("XX") + &pauli::string("YY");
            (&b * e.matrix()).trace().re / 4.0
        };
        assert!((oracle - 2.0).abs() < 1e-15);
        assert!((d.coeff("XX+YY").unwrap() - oracle).abs() < 1e-14);
        assert!((d.coeff("ZZ").unwrap() - 1.0).abs() < 1e-14);
        assert!(d.occupied(Subspace::Z) && d.occupied(Subspace::CMinus));
        assert!(!d.occupied(Subspace::CPlus) && !d.occupied(Subspace::Qi) && !d.occupied(Subspace::Qj));
        assert_eq!(classify(&d), CaseTag::ZCMinus);
        assert!((&d.reconstruct() - e.matrix()).frob_norm() < 1e-10);
    }

    #[test]
    fn single_qubit_leak_is_qi() {
        let d = decompose(&op(&[("XI", 1.0)])).unwrap();
        assert_eq!(classify(&d), CaseTag::ZQi);
        let d = decompose(&op(&[("IY", 0.3), ("ZX", 0.1)])).unwrap();
        assert_eq!(classify(&d), CaseTag::ZQj);
    }

    #[test]
    fn xx_spans_both_c_subspaces() {
        let d = decompose(&op(&[("XX", 1.0)])).unwrap();
        assert!(d.occupied(Subspace::CPlus) && d.occupied(Subspace::CMinus));
        assert_eq!(classify(&d), CaseTag::General);
    }

    #[test]
    fn rwa_projection_of_xx() {
        let p = rwa_project(&op(&[("XX", 1.0)]), RwaLevel::DropCPlus).unwrap();
        let want = op(&[("XX", 0.5), ("YY", 0.5)]);
        assert!((&p.0 - &want.0).frob_norm() < 1e-14);
        let heis = CouplingOperator::heisenberg_quarter();
        let h2 = rwa_project(&heis, RwaLevel::DropCPlus).unwrap();
        assert!((&h2.0 - &heis.0).frob_norm() < 1e-14);
    }

    #[test]
    fn non_hermitian_rejected() {
        let mut m = CMat::zeros(4);
        m.set(0, 1, C64::new(1.0, 0.0));
        assert!(decompose(&CouplingOperator(m)).is_err());
    }

    fn hermitian(vals: &[f64]) -> CouplingOperator {
        let names = ["I", "X", "Y", "Z"];
        let mut terms = vec![];
        for (k, v) in vals.iter().enumerate() {
            terms.push((format!("{}{}", names[k / 4], names[k % 4]), *v));
        }
        let refs: Vec<(&str, f64)> = terms.iter().map(|(s, v)| (s.as_str(), *v)).collect();
        op(&refs)
    }

    proptest! {
        #[test]
        fn reconstruction_holds(vals in proptest::collection::vec(-2.0f64..2.0, 16)) {
            let e = hermitian(&vals);
            let d = decompose(&e).unwrap();
            prop_assert!((&d.reconstruct() - e.matrix()).frob_norm() < 1e-10);
            for el in &d.elements {
                let b = basis_matrix(&el.label);
                prop_assert!((el.coeff - (&b * e.matrix()).trace().re / 4.0).abs() < 1e-14);
            }
        }

        #[test]
        fn z_additions_do_not_change_case(
            vals in proptest::collection::vec(0.1f64..2.0, 16),
            mask in proptest::collection::vec(proptest::bool::ANY, 4),
            z in proptest::collection::vec(-3.0f64..3.0, 4),
        ) {
            let subs = [Subspace::CPlus, Subspace::CMinus, Subspace::Qi, Subspace::Qj];
            let mut m = CMat::zeros(4);
            for (k, (label, sub)) in BASIS_LABELS.iter().enumerate() {
                let keep = match subs.iter().position(|s| s == sub) {
                    Some(p) => mask[p],
                    None => true,
                };
                if keep {
                    m.axpy(vals[k], &basis_matrix(label));
                }
            }
            let mut shifted = m.clone();
            for (name, c) in ["II", "ZI", "IZ", "ZZ"].iter().zip(&z) {
                shifted.axpy(*c, &pauli::string(name));
            }
            let a = classify(&decompose(&CouplingOperator(m)).unwrap());
            let b = classify(&decompose(&CouplingOperator(shifted)).unwrap());
            prop_assert_eq!(a, b);
        }

        #[test]
        fn forced_support_is_recovered(
            which in 0usize..4,
            c in proptest::collection::vec(0.1f64..2.0, 4),
            signs in proptest::collection::vec(proptest::bool::ANY, 4),
            z in proptest::collection::vec(-1.0f64..1.0, 4),
        ) {
            let groups: [(&[&str], CaseTag); 4] = [
                (&["XX-YY", "XY+YX"], CaseTag::ZCPlus),
                (&["XX+YY", "XY-YX"], CaseTag::ZCMinus),
                (&["XI", "YI", "XZ", "YZ"], CaseTag::ZQi),
                (&["IX", "IY", "ZX", "ZY"], CaseTag::ZQj),
            ];
            let (labels, tag) = groups[which];
            let mut m = CMat::zeros(4);
            for (k, l) in labels.iter().enumerate() {
                let s = if signs[k] { 1.0 } else { -1.0 };
                m.axpy(s * c[k], &basis_matrix(l));
            }
            for (name, zc) in ["II", "ZI", "IZ", "ZZ"].iter().zip(&z) {
                m.axpy(*zc, &pauli::string(name));
            }
            let e = CouplingOperator(m);
            prop_assert_eq!(classify(&decompose(&e).unwrap()), tag);
        }

        #[test]
        fn rwa_projection_is_idempotent(vals in proptest::collection::vec(-2.0f64..2.0, 16), lvl in 0usize..4) {
            let level = [RwaLevel::None, RwaLevel::DropCPlus, RwaLevel::DropCPlusQ, RwaLevel::DropAllOscillating][lvl];
            let e = hermitian(&vals);
            let once = rwa_project(&e, level).unwrap();
            let twice = rwa_project(&once, level).unwrap();
            prop_assert!((&once.0 - &twice.0).frob_norm() < 1e-12);
        }
    }
}
