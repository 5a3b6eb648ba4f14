//! Forward-mode automatic differentiation with 4-directional dual numbers.
//!
//! Every [`Dual`] carries a value and its partials with respect to the four
//! state components. [`jacobian_ad`] seeds component `i` with the unit
//! partial `eᵢ` and evaluates the function once, so a full `m × 4` Jacobian
//! costs a single pass.

use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{Point, StateVector, STATE_DIM};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub value: f64,
    pub partials: [f64; STATE_DIM],
}

impl Dual {
    pub fn new(value: f64, partials: [f64; STATE_DIM]) -> Self {
        Dual { value, partials }
    }

    pub fn constant(value: f64) -> Self {
        Dual {
            value,
            partials: [0.0; STATE_DIM],
        }
    }

    /// Independent variable `index` with unit partial.
    pub fn variable(value: f64, index: usize) -> Self {
        let mut partials = [0.0; STATE_DIM];
        partials[index] = 1.0;
        Dual { value, partials }
    }

    fn map_partials(self, f: impl Fn(f64) -> f64) -> [f64; STATE_DIM] {
        let mut out = self.partials;
        for p in out.iter_mut() {
            *p = f(*p);
        }
        out
    }

    /// `√v`, with `∂ = p / (2√v)`.
    pub fn sqrt(self) -> Result<Self> {
        if self.value.is_nan() || self.value <= 0.0 {
            return Err(Error::Domain(format!(
                "sqrt of non-positive value {}",
                self.value
            )));
        }
        let root = self.value.sqrt();
        let two_root = 2.0 * root;
        Ok(Dual {
            value: root,
            partials: self.map_partials(|p| p / two_root),
        })
    }

    /// Division that rejects a zero-valued denominator.
    pub fn checked_div(self, rhs: Dual) -> Result<Self> {
        if rhs.value == 0.0 {
            return Err(Error::Domain("division by zero-valued dual".into()));
        }
        Ok(self / rhs)
    }

    pub fn powi(self, n: i32) -> Self {
        match n {
            0 => Dual::constant(1.0),
            1 => self,
            _ => {
                let scale = f64::from(n) * self.value.powi(n - 1);
                Dual {
                    value: self.value.powi(n),
                    partials: self.map_partials(|p| p * scale),
                }
            }
        }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        let mut partials = self.partials;
        for (p, q) in partials.iter_mut().zip(rhs.partials) {
            *p += q;
        }
        Dual {
            value: self.value + rhs.value,
            partials,
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        let mut partials = self.partials;
        for (p, q) in partials.iter_mut().zip(rhs.partials) {
            *p -= q;
        }
        Dual {
            value: self.value - rhs.value,
            partials,
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        let mut partials = [0.0; STATE_DIM];
        for (i, p) in partials.iter_mut().enumerate() {
            *p = self.value * rhs.partials[i] + self.partials[i] * rhs.value;
        }
        Dual {
            value: self.value * rhs.value,
            partials,
        }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, rhs: Dual) -> Dual {
        let inv = 1.0 / rhs.value;
        let value = self.value * inv;
        let mut partials = [0.0; STATE_DIM];
        for (i, p) in partials.iter_mut().enumerate() {
            *p = (self.partials[i] - value * rhs.partials[i]) * inv;
        }
        Dual { value, partials }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual {
            value: -self.value,
            partials: self.map_partials(|p| -p),
        }
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    fn add(self, rhs: f64) -> Dual {
        Dual {
            value: self.value + rhs,
            partials: self.partials,
        }
    }
}

impl Sub<f64> for Dual {
    type Output = Dual;
    fn sub(self, rhs: f64) -> Dual {
        Dual {
            value: self.value - rhs,
            partials: self.partials,
        }
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, rhs: f64) -> Dual {
        Dual {
            value: self.value * rhs,
            partials: self.map_partials(|p| p * rhs),
        }
    }
}

/// Seeds each state component with its unit direction.
pub fn seed(state: &StateVector) -> [Dual; STATE_DIM] {
    let x = state.as_array();
    std::array::from_fn(|i| Dual::variable(x[i], i))
}

/// Function value and `m × 4` Jacobian from one forward pass.
pub fn value_and_jacobian<F>(f: F, state: &StateVector) -> Result<(DVector<f64>, DMatrix<f64>)>
where
    F: Fn(&[Dual; STATE_DIM]) -> Result<Vec<Dual>>,
{
    let outputs = f(&seed(state))?;
    let m = outputs.len();
    let mut values = DVector::zeros(m);
    let mut jac = DMatrix::zeros(m, STATE_DIM);
    for (row, out) in outputs.iter().enumerate() {
        if !out.value.is_finite() || out.partials.iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain(format!("non-finite derivative in output row {row}")));
        }
        values[row] = out.value;
        for (col, p) in out.partials.iter().enumerate() {
            jac[(row, col)] = *p;
        }
    }
    Ok((values, jac))
}

/// Forward-mode Jacobian of a vector function at `state`.
pub fn jacobian_ad<F>(f: F, state: &StateVector) -> Result<DMatrix<f64>>
where
    F: Fn(&[Dual; STATE_DIM]) -> Result<Vec<Dual>>,
{
    value_and_jacobian(f, state).map(|(_, jac)| jac)
}

/// Range from the position part of `state` to `anchor`, over duals.
pub fn toa_range_dual(state: &[Dual; STATE_DIM], anchor: &Point) -> Result<Dual> {
    let dx = state[0] - anchor.x;
    let dy = state[1] - anchor.y;
    (dx * dx + dy * dy)
        .sqrt()
        .map_err(|_| Error::Singular(format!("receiver coincides with anchor ({}, {})", anchor.x, anchor.y)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_derivative() {
        let x = Dual::variable(3.0, 0);
        let y = x * x;
        assert_eq!(y.value, 9.0);
        assert_eq!(y.partials[0], 6.0);
    }

    #[test]
    fn sqrt_derivative() {
        let y = Dual::variable(4.0, 0).sqrt().unwrap();
        assert_eq!(y.value, 2.0);
        assert_eq!(y.partials[0], 0.25);
    }

    #[test]
    fn domain_errors() {
        assert!(Dual::constant(0.0).sqrt().is_err());
        assert!(Dual::constant(-1.0).sqrt().is_err());
        assert!(Dual::constant(1.0).checked_div(Dual::constant(0.0)).is_err());
    }

    #[test]
    fn quotient_rule() {
        // d/dx (x / (x + 1)) = 1 / (x + 1)^2
        let x = Dual::variable(2.0, 1);
        let q = x.checked_div(x + 1.0).unwrap();
        assert!((q.value - 2.0 / 3.0).abs() < 1e-15);
        assert!((q.partials[1] - 1.0 / 9.0).abs() < 1e-15);
        assert_eq!(q.partials[0], 0.0);
    }

    #[test]
    fn powi_and_neg() {
        let x = Dual::variable(2.0, 2);
        let c = x.powi(3);
        assert_eq!(c.value, 8.0);
        assert_eq!(c.partials[2], 12.0);
        assert_eq!((-x).partials[2], -1.0);
        assert_eq!(x.powi(0), Dual::constant(1.0));
    }

    #[test]
    fn toa_range_to_345_anchor() {
        let s = seed(&StateVector::new(0.0, 0.0, 0.0, 0.0));
        let r = toa_range_dual(&s, &Point::new(3.0, 4.0)).unwrap();
        assert_eq!(r.value, 5.0);
        assert_eq!(r.partials, [-0.6, -0.8, 0.0, 0.0]);
    }

    #[test]
    fn linear_function_returns_matrix() {
        let h = DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 3.0, 4.0, -1.0, 0.5, 0.0, 2.0]);
        let jac = jacobian_ad(
            |x| {
                Ok((0..2)
                    .map(|i| (0..4).fold(Dual::constant(0.0), |acc, j| acc + x[j] * h[(i, j)]))
                    .collect())
            },
            &StateVector::new(1.0, 2.0, 3.0, 4.0),
        )
        .unwrap();
        assert_eq!(jac, h);
    }

    #[test]
    fn constant_function_has_zero_jacobian() {
        let jac = jacobian_ad(
            |_| Ok(vec![Dual::constant(3.0); 3]),
            &StateVector::new(1.0, 2.0, 3.0, 4.0),
        )
        .unwrap();
        assert_eq!(jac, DMatrix::zeros(3, 4));
    }

    #[test]
    fn error_names_row() {
        let err = jacobian_ad(
            |x| Ok(vec![x[0], x[1] * f64::INFINITY]),
            &StateVector::new(1.0, 2.0, 3.0, 4.0),
        )
        .unwrap_err();
        assert!(err.to_string().contains("row 1"));
    }
}
