//! Closed-form time functions with exact Caputo derivatives.
//!
//! Every supported term is a sum of atoms `c·t^ν·E_{a,ν+1}(λt^a)`, a family
//! closed under `D^ρ`: polynomials, `sin ωt`, `cos ωt`, `t^β` and
//! `E_{r,1}(λt^r)` all fit.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fractional::{SampledFunction, TimeGrid};
use crate::special::gamma::gamma;
use crate::special::mittag_leffler::eval_unchecked;

/// One user-facing term of a time expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Term {
    /// `Σ_n coeffs[n] t^n`.
    Poly { coeffs: Vec<f64> },
    /// `amplitude · sin(ωt)`.
    Sin {
        #[serde(default = "one")]
        amplitude: f64,
        omega: f64,
    },
    /// `amplitude · cos(ωt)`.
    Cos {
        #[serde(default = "one")]
        amplitude: f64,
        omega: f64,
    },
    /// `coef · t^exponent`, `exponent ≥ 0`.
    Power {
        #[serde(default = "one")]
        coef: f64,
        exponent: f64,
    },
    /// `amplitude · E_{order,1}(λ t^order)`.
    MittagLeffler {
        #[serde(default = "one")]
        amplitude: f64,
        order: f64,
        lambda: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Atom {
    c: f64,
    nu: f64,
    a: f64,
    lambda: f64,
}

impl Atom {
    fn eval(&self, t: f64) -> f64 {
        if t == 0.0 {
            return if self.nu == 0.0 {
                self.c
            } else if self.nu > 0.0 {
                0.0
            } else {
                f64::INFINITY * self.c.signum()
            };
        }
        let e = eval_unchecked(self.a, self.nu + 1.0, 1.0, C64::new(self.lambda * t.powf(self.a), 0.0));
        self.c * t.powf(self.nu) * e.re
    }

    fn caputo(&self, rho: f64) -> Result<Option<Atom>> {
        if self.nu == 0.0 {
            // the constant term is annihilated; the series shifts by one
            if self.lambda == 0.0 {
                return Ok(None);
            }
            Ok(Some(Atom {
                c: self.c * self.lambda,
                nu: self.a - rho,
                ..*self
            }))
        } else if self.nu > 0.0 {
            Ok(Some(Atom {
                nu: self.nu - rho,
                ..*self
            }))
        } else {
            Err(Error::Unsupported(format!(
                "Caputo derivative of a term singular at t = 0 (t^{:.3})",
                self.nu
            )))
        }
    }
}

/// A finite sum of terms in the closed family.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Expression {
    atoms: Vec<Atom>,
}

impl Expression {
    pub fn new(terms: &[Term]) -> Result<Self> {
        let mut atoms = Vec::new();
        for term in terms {
            match *term {
                Term::Poly { ref coeffs } => {
                    for (n, &c) in coeffs.iter().enumerate() {
                        if c != 0.0 {
                            atoms.push(Atom {
                                c: c * gamma(n as f64 + 1.0),
                                nu: n as f64,
                                a: 1.0,
                                lambda: 0.0,
                            });
                        }
                    }
                }
                Term::Sin { amplitude, omega } => atoms.push(Atom {
                    c: amplitude * omega,
                    nu: 1.0,
                    a: 2.0,
                    lambda: -omega * omega,
                }),
                Term::Cos { amplitude, omega } => atoms.push(Atom {
                    c: amplitude,
                    nu: 0.0,
                    a: 2.0,
                    lambda: -omega * omega,
                }),
                Term::Power { coef, exponent } => {
                    if !(exponent >= 0.0) {
                        return Err(Error::domain(format!("power exponent must be >= 0, got {exponent}")));
                    }
                    atoms.push(Atom {
                        c: coef * gamma(exponent + 1.0),
                        nu: exponent,
                        a: 1.0,
                        lambda: 0.0,
                    });
                }
                Term::MittagLeffler { amplitude, order, lambda } => {
                    if !(order > 0.0) {
                        return Err(Error::domain(format!("Mittag-Leffler order must be > 0, got {order}")));
                    }
                    atoms.push(Atom {
                        c: amplitude,
                        nu: 0.0,
                        a: order,
                        lambda,
                    });
                }
            }
        }
        if atoms
            .iter()
            .any(|a| !(a.c.is_finite() && a.nu.is_finite() && a.a.is_finite() && a.lambda.is_finite()))
        {
            return Err(Error::domain("expression has non-finite parameters"));
        }
        Ok(Expression { atoms })
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.iter().all(|a| a.c == 0.0)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.atoms.iter().map(|a| a.eval(t)).sum()
    }

    /// Exact `D^ρ`.
    pub fn caputo(&self, rho: f64) -> Result<Expression> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::domain(format!("derivative order must lie in (0, 1], got {rho}")));
        }
        let mut atoms = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            if let Some(d) = a.caputo(rho)? {
                atoms.push(d);
            }
        }
        Ok(Expression { atoms })
    }

    pub fn sample(&self, grid: &TimeGrid) -> SampledFunction {
        SampledFunction::from_real(grid, |t| self.eval(t))
    }
}
