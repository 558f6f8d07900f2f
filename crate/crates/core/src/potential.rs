//! Polynomial potentials with exact first and second derivatives.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, HillError, Result};

/// One monomial `coeff * prod_i q_i^exponents[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialPotential {
    dimension: usize,
    terms: Vec<Term>,
}

/// Value, gradient and Hessian of a potential at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

impl PolynomialPotential {
    pub fn new(dimension: usize, terms: Vec<Term>) -> Result<Self> {
        if dimension == 0 {
            return Err(HillError::config("system.dimension", "dimension must be >= 1"));
        }
        for (i, term) in terms.iter().enumerate() {
            if term.exponents.len() != dimension {
                return Err(HillError::config(
                    format!("system.potential[{i}].exponents"),
                    format!(
                        "expected {dimension} exponents, got {}",
                        term.exponents.len()
                    ),
                ));
            }
            if !term.coeff.is_finite() {
                return Err(HillError::config(
                    format!("system.potential[{i}].coeff"),
                    "coefficient must be finite",
                ));
            }
        }
        Ok(Self { dimension, terms })
    }

    pub fn zero(dimension: usize) -> Self {
        Self {
            dimension,
            terms: Vec::new(),
        }
    }

    /// `V = -g * q_n`: constant force of strength `g` pushing away from `q_n = 0`.
    pub fn constant_force(dimension: usize, g: f64) -> Self {
        let mut exponents = vec![0; dimension];
        exponents[dimension - 1] = 1;
        Self {
            dimension,
            terms: vec![Term {
                coeff: -g,
                exponents,
            }],
        }
    }

    /// Isotropic oscillator `V = k/2 |q|^2`.
    pub fn harmonic(dimension: usize, k: f64) -> Self {
        let terms = (0..dimension)
            .map(|i| {
                let mut exponents = vec![0; dimension];
                exponents[i] = 2;
                Term {
                    coeff: 0.5 * k,
                    exponents,
                }
            })
            .collect();
        Self { dimension, terms }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn value(&self, q: &DVector<f64>) -> f64 {
        self.terms
            .iter()
            .map(|term| {
                term.coeff
                    * term
                        .exponents
                        .iter()
                        .zip(q.iter())
                        .map(|(&e, &x)| x.powi(e as i32))
                        .product::<f64>()
            })
            .sum()
    }

    pub fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        let n = self.dimension;
        let mut grad = DVector::zeros(n);
        let mut powers = vec![0.0; n];
        let mut dpowers = vec![0.0; n];
        for term in &self.terms {
            fill_powers(term, q, &mut powers, &mut dpowers, None);
            for i in 0..n {
                if term.exponents[i] == 0 {
                    continue;
                }
                let mut prod = term.coeff * dpowers[i];
                for j in (0..n).filter(|&j| j != i) {
                    prod *= powers[j];
                }
                grad[i] += prod;
            }
        }
        grad
    }

    /// Exact value, gradient and Hessian.
    pub fn eval(&self, q: &DVector<f64>) -> Result<PotentialEval> {
        check_dim(self.dimension, q.len())?;
        let n = self.dimension;
        let mut value = 0.0;
        let mut gradient = DVector::zeros(n);
        let mut hessian = DMatrix::zeros(n, n);
        let mut powers = vec![0.0; n];
        let mut dpowers = vec![0.0; n];
        let mut ddpowers = vec![0.0; n];
        for term in &self.terms {
            fill_powers(term, q, &mut powers, &mut dpowers, Some(&mut ddpowers));
            let others = |skip: &[usize]| -> f64 {
                (0..n)
                    .filter(|j| !skip.contains(j))
                    .map(|j| powers[j])
                    .product()
            };
            value += term.coeff * others(&[]);
            for i in 0..n {
                if term.exponents[i] == 0 {
                    continue;
                }
                gradient[i] += term.coeff * dpowers[i] * others(&[i]);
                hessian[(i, i)] += term.coeff * ddpowers[i] * others(&[i]);
                for j in (i + 1)..n {
                    if term.exponents[j] == 0 {
                        continue;
                    }
                    let mixed = term.coeff * dpowers[i] * dpowers[j] * others(&[i, j]);
                    hessian[(i, j)] += mixed;
                    hessian[(j, i)] += mixed;
                }
            }
        }
        Ok(PotentialEval {
            value,
            gradient,
            hessian,
        })
    }

    pub fn hessian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        // dimension is checked by callers that go through MechanicalSystem
        self.eval(q)
            .map(|e| e.hessian)
            .unwrap_or_else(|_| DMatrix::zeros(self.dimension, self.dimension))
    }
}

fn fill_powers(
    term: &Term,
    q: &DVector<f64>,
    powers: &mut [f64],
    dpowers: &mut [f64],
    ddpowers: Option<&mut [f64]>,
) {
    for (i, &e) in term.exponents.iter().enumerate() {
        let x = q[i];
        let e = e as i32;
        powers[i] = x.powi(e);
        dpowers[i] = if e >= 1 { e as f64 * x.powi(e - 1) } else { 0.0 };
    }
    if let Some(dd) = ddpowers {
        for (i, &e) in term.exponents.iter().enumerate() {
            let e = e as i32;
            dd[i] = if e >= 2 {
                (e * (e - 1)) as f64 * q[i].powi(e - 2)
            } else {
                0.0
            };
        }
    }
}
