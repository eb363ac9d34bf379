//! Exact bookkeeping of the interpolation exponents.

use nlsdecay_core::lemmas::{ELE2_EXPONENTS, ELE_EXPONENTS};
use num_rational::Rational64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExponentCheck {
    pub identity: String,
    /// Left and right sides as reduced fractions.
    pub lhs: String,
    pub rhs: String,
    pub holds: bool,
}

fn ratio((n, d): (i64, i64)) -> Rational64 {
    Rational64::new(n, d)
}

fn check(identity: &str, lhs: Rational64, rhs: Rational64) -> ExponentCheck {
    ExponentCheck {
        identity: identity.into(),
        lhs: lhs.to_string(),
        rhs: rhs.to_string(),
        holds: lhs == rhs,
    }
}

/// Degree of homogeneity under `f ↦ λf` of a product of norms raised to
/// `exponents`; each norm is 1-homogeneous.
pub fn scaling_degree(exponents: &[(i64, i64)]) -> Rational64 {
    exponents.iter().map(|&e| ratio(e)).sum()
}

/// Exponents of `(‖f‖₂, ‖∇f‖₂, ‖f‖_{H⁴})` obtained by inserting
/// `‖∇f‖_∞ ≲ ‖∇f‖₂^{2/5}‖f‖_{H⁴}^{3/5}` into
/// `‖f‖_∞ ≲ ‖f‖₂^{2/5}‖∇f‖_∞^{3/5}`.
pub fn composed_exponents() -> [Rational64; 3] {
    let outer = [Rational64::new(2, 5), Rational64::new(3, 5)];
    let inner = [Rational64::new(2, 5), Rational64::new(3, 5)];
    [outer[0], outer[1] * inner[0], outer[1] * inner[1]]
}

pub fn all_checks() -> Vec<ExponentCheck> {
    let one = Rational64::from_integer(1);
    let composed = composed_exponents();
    let mut out = vec![
        check("ele: degree under f -> λf", scaling_degree(&ELE_EXPONENTS), one),
        check("ele2: degree under f -> λf", scaling_degree(&ELE2_EXPONENTS), one),
    ];
    for (i, name) in ["L2", "grad L2", "H4"].iter().enumerate() {
        out.push(check(
            &format!("ele2: {name} exponent equals the composed one"),
            ratio(ELE2_EXPONENTS[i]),
            composed[i],
        ));
    }
    out
}
