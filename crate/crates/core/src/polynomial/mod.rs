//! Sparse multivariate polynomials with exact symbolic differentiation.
//!
//! Every objective and constraint handled by this crate is a [`Polynomial`],
//! so analyticity holds by construction. Polynomials are kept in a canonical
//! form: terms sorted lexicographically by exponent vector, like terms
//! collected, exact-zero coefficients removed. Two algebraically equal inputs
//! therefore compare equal and print identically.

mod parser;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parser::parse_polynomial;

/// Largest exponent accepted by the parser or by [`Polynomial::pow`].
pub const MAX_EXPONENT: u32 = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolyError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown identifier `{name}` at position {position}")]
    UnknownIdentifier { name: String, position: usize },
    #[error("invalid exponent at position {position}: {message}")]
    InvalidExponent { position: usize, message: String },
    #[error("invalid variable list: {0}")]
    InvalidVariables(String),
    #[error("dimension mismatch: expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("polynomials are defined over different variable lists")]
    VariableMismatch,
}

/// A single term `coefficient * x_1^e_1 * ... * x_n^e_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coefficient: f64,
    pub exponents: Vec<u32>,
}

impl Monomial {
    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    fn eval(&self, point: &[f64]) -> f64 {
        let mut acc = self.coefficient;
        for (&x, &e) in point.iter().zip(&self.exponents) {
            match e {
                0 => {}
                1 => acc *= x,
                2 => acc *= x * x,
                _ => acc *= x.powi(e as i32),
            }
        }
        acc
    }
}

/// Canonical sparse polynomial over an ordered list of named variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    variables: Vec<String>,
    terms: Vec<Monomial>,
}

pub(crate) fn validate_variables(variables: &[String]) -> Result<(), PolyError> {
    for (i, name) in variables.iter().enumerate() {
        let mut chars = name.chars();
        let ok = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
            && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
        if !ok {
            return Err(PolyError::InvalidVariables(format!(
                "`{name}` is not a valid identifier"
            )));
        }
        if variables[..i].contains(name) {
            return Err(PolyError::InvalidVariables(format!(
                "`{name}` is declared twice"
            )));
        }
    }
    Ok(())
}

impl Polynomial {
    pub fn zero(variables: &[String]) -> Self {
        Polynomial {
            variables: variables.to_vec(),
            terms: Vec::new(),
        }
    }

    pub fn constant(variables: &[String], value: f64) -> Self {
        Self::from_terms(
            variables,
            vec![Monomial {
                coefficient: value,
                exponents: vec![0; variables.len()],
            }],
        )
    }

    /// The coordinate function `x_index`.
    pub fn variable(variables: &[String], index: usize) -> Self {
        assert!(index < variables.len(), "variable index out of range");
        let mut exponents = vec![0; variables.len()];
        exponents[index] = 1;
        Self::from_terms(
            variables,
            vec![Monomial {
                coefficient: 1.0,
                exponents,
            }],
        )
    }

    /// Builds a polynomial from arbitrary terms and brings it to canonical form.
    ///
    /// Panics if a term's exponent vector length differs from the variable count.
    pub fn from_terms(variables: &[String], mut terms: Vec<Monomial>) -> Self {
        let n = variables.len();
        for t in &terms {
            assert_eq!(t.exponents.len(), n, "exponent vector length mismatch");
        }
        terms.sort_by(|a, b| a.exponents.cmp(&b.exponents));
        let mut collected: Vec<Monomial> = Vec::with_capacity(terms.len());
        for t in terms {
            match collected.last_mut() {
                Some(last) if last.exponents == t.exponents => last.coefficient += t.coefficient,
                _ => collected.push(t),
            }
        }
        collected.retain(|t| t.coefficient != 0.0);
        Polynomial {
            variables: variables.to_vec(),
            terms: collected,
        }
    }

    /// Parses `text` under the given variable list. See [`parse_polynomial`].
    pub fn parse(text: &str, variables: &[String]) -> Result<Self, PolyError> {
        parse_polynomial(text, variables)
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Value of the constant term (0 when absent).
    pub fn constant_term(&self) -> f64 {
        self.terms
            .first()
            .filter(|t| t.exponents.iter().all(|&e| e == 0))
            .map_or(0.0, |t| t.coefficient)
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<f64, PolyError> {
        if point.len() != self.variables.len() {
            return Err(PolyError::DimensionMismatch {
                expected: self.variables.len(),
                got: point.len(),
            });
        }
        Ok(self.eval(point))
    }

    /// Evaluation without the dimension check; extra coordinates are ignored.
    pub(crate) fn eval(&self, point: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.eval(point)).sum()
    }

    /// Exact partial derivative with respect to variable `index`.
    pub fn derivative(&self, index: usize) -> Polynomial {
        assert!(index < self.variables.len(), "variable index out of range");
        let terms = self
            .terms
            .iter()
            .filter(|t| t.exponents[index] > 0)
            .map(|t| {
                let mut exponents = t.exponents.clone();
                let e = exponents[index];
                exponents[index] -= 1;
                Monomial {
                    coefficient: t.coefficient * e as f64,
                    exponents,
                }
            })
            .collect();
        Polynomial::from_terms(&self.variables, terms)
    }

    /// The system of all first partial derivatives.
    pub fn gradient(&self) -> PolynomialSystem {
        let components = (0..self.variables.len())
            .map(|i| self.derivative(i))
            .collect();
        PolynomialSystem {
            variables: self.variables.clone(),
            components,
        }
    }

    pub fn scale(&self, factor: f64) -> Polynomial {
        let terms = self
            .terms
            .iter()
            .map(|t| Monomial {
                coefficient: t.coefficient * factor,
                exponents: t.exponents.clone(),
            })
            .collect();
        Polynomial::from_terms(&self.variables, terms)
    }

    pub fn try_add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_compatible(other)?;
        let terms = self.terms.iter().chain(&other.terms).cloned().collect();
        Ok(Polynomial::from_terms(&self.variables, terms))
    }

    pub fn try_sub(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.try_add(&other.scale(-1.0))
    }

    pub fn try_mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_compatible(other)?;
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                terms.push(Monomial {
                    coefficient: a.coefficient * b.coefficient,
                    exponents: a
                        .exponents
                        .iter()
                        .zip(&b.exponents)
                        .map(|(x, y)| x + y)
                        .collect(),
                });
            }
        }
        Ok(Polynomial::from_terms(&self.variables, terms))
    }

    /// Integer power by repeated squaring.
    pub fn pow(&self, exponent: u32) -> Polynomial {
        let mut result = Polynomial::constant(&self.variables, 1.0);
        let mut base = self.clone();
        let mut e = exponent;
        while e > 0 {
            if e & 1 == 1 {
                result = result.try_mul(&base).expect("same variables");
            }
            e >>= 1;
            if e > 0 {
                base = base.try_mul(&base).expect("same variables");
            }
        }
        result
    }

    fn check_compatible(&self, other: &Polynomial) -> Result<(), PolyError> {
        if self.variables == other.variables {
            Ok(())
        } else {
            Err(PolyError::VariableMismatch)
        }
    }

    fn write_monomial(&self, f: &mut fmt::Formatter<'_>, exponents: &[u32]) -> fmt::Result {
        let mut first = true;
        for (name, &e) in self.variables.iter().zip(exponents) {
            if e == 0 {
                continue;
            }
            if !first {
                f.write_str("*")?;
            }
            first = false;
            if e == 1 {
                write!(f, "{name}")?;
            } else {
                write!(f, "{name}^{e}")?;
            }
        }
        Ok(())
    }
}

/// Prints in the parser's grammar so that `parse(print(p)) == p`.
///
/// A leading negative term is written with an explicit coefficient
/// (`-1*x^2`), because the grammar binds unary minus tighter than `^`.
impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, t) in self.terms.iter().enumerate() {
            let is_constant = t.exponents.iter().all(|&e| e == 0);
            let magnitude = t.coefficient.abs();
            if i == 0 {
                if t.coefficient < 0.0 {
                    write!(f, "-{magnitude}")?;
                    if !is_constant {
                        f.write_str("*")?;
                        self.write_monomial(f, &t.exponents)?;
                    }
                    continue;
                }
            } else {
                f.write_str(if t.coefficient < 0.0 { " - " } else { " + " })?;
            }
            if is_constant {
                write!(f, "{magnitude}")?;
            } else {
                if magnitude != 1.0 {
                    write!(f, "{magnitude}*")?;
                }
                self.write_monomial(f, &t.exponents)?;
            }
        }
        Ok(())
    }
}

/// An ordered list of polynomials over a shared variable list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialSystem {
    variables: Vec<String>,
    components: Vec<Polynomial>,
}

impl PolynomialSystem {
    pub fn new(variables: &[String], components: Vec<Polynomial>) -> Result<Self, PolyError> {
        if components.iter().any(|p| p.variables() != variables) {
            return Err(PolyError::VariableMismatch);
        }
        Ok(PolynomialSystem {
            variables: variables.to_vec(),
            components,
        })
    }

    pub fn empty(variables: &[String]) -> Self {
        PolynomialSystem {
            variables: variables.to_vec(),
            components: Vec::new(),
        }
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(Polynomial::is_zero)
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<Vec<f64>, PolyError> {
        if point.len() != self.variables.len() {
            return Err(PolyError::DimensionMismatch {
                expected: self.variables.len(),
                got: point.len(),
            });
        }
        Ok(self.eval(point))
    }

    pub(crate) fn eval(&self, point: &[f64]) -> Vec<f64> {
        self.components.iter().map(|p| p.eval(point)).collect()
    }

    /// Entry `(i, j)` is the partial derivative of component `i` in variable `j`.
    pub fn jacobian(&self) -> Vec<Vec<Polynomial>> {
        self.components
            .iter()
            .map(|p| (0..self.variables.len()).map(|j| p.derivative(j)).collect())
            .collect()
    }
}

/// Evaluates a matrix of polynomials (as produced by [`PolynomialSystem::jacobian`])
/// into row-major storage.
pub(crate) fn eval_matrix(rows: &[Vec<Polynomial>], point: &[f64]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|row| row.iter().map(|p| p.eval(point)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn canonical_form_collects_and_drops_zeros() {
        let v = vars(&["x", "y"]);
        let p = Polynomial::from_terms(
            &v,
            vec![
                Monomial {
                    coefficient: 1.0,
                    exponents: vec![1, 1],
                },
                Monomial {
                    coefficient: 2.0,
                    exponents: vec![0, 0],
                },
                Monomial {
                    coefficient: -1.0,
                    exponents: vec![1, 1],
                },
            ],
        );
        assert_eq!(p.terms().len(), 1);
        assert_eq!(p.constant_term(), 2.0);
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let v = vars(&["x", "y"]);
        let grad = Polynomial::constant(&v, 3.5).gradient();
        assert_eq!(grad.len(), 2);
        assert!(grad.is_zero());
    }

    #[test]
    fn pow_matches_repeated_multiplication() {
        let v = vars(&["x", "y"]);
        let p = Polynomial::variable(&v, 0)
            .try_add(&Polynomial::variable(&v, 1))
            .unwrap();
        let cube = p.try_mul(&p).unwrap().try_mul(&p).unwrap();
        assert_eq!(p.pow(3), cube);
        assert_eq!(p.pow(0), Polynomial::constant(&v, 1.0));
    }

    #[test]
    fn display_leading_negative_uses_explicit_coefficient() {
        let v = vars(&["x", "y"]);
        let p = Polynomial::parse("x^2 - y^2", &v).unwrap();
        assert_eq!(p.to_string(), "-1*y^2 + x^2");
        assert_eq!(Polynomial::zero(&v).to_string(), "0");
    }

    #[test]
    fn mismatched_variables_rejected() {
        let a = Polynomial::variable(&vars(&["x"]), 0);
        let b = Polynomial::variable(&vars(&["y"]), 0);
        assert_eq!(a.try_add(&b), Err(PolyError::VariableMismatch));
        assert!(PolynomialSystem::new(&vars(&["x"]), vec![b]).is_err());
    }

    #[test]
    fn evaluate_checks_dimension() {
        let p = Polynomial::parse("x^4", &vars(&["x"])).unwrap();
        assert_eq!(
            p.evaluate(&[1.0, 2.0]),
            Err(PolyError::DimensionMismatch {
                expected: 1,
                got: 2
            })
        );
    }
}
