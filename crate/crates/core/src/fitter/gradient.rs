//! Central finite-difference gradients over a generic objective.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// A scalar function of a flat parameter vector.
///
/// `prepare` lets an implementation compute state at the base point once
/// and reuse it for perturbations that leave that state unchanged.
pub trait Objective: Sync {
    type Cache: Sync;

    fn dim(&self) -> usize;

    fn coordinate_name(&self, index: usize) -> String {
        format!("y[{index}]")
    }

    /// Multiplier applied to the base finite-difference step for a
    /// coordinate.
    fn step_scale(&self, _index: usize) -> f64 {
        1.0
    }

    fn prepare(&self, y: &[f64]) -> Result<Self::Cache>;

    /// Value at `y`, where `y` differs from the prepared base point at most
    /// in coordinate `changed`.
    fn value_with(&self, cache: &Self::Cache, y: &[f64], changed: Option<usize>) -> Result<f64>;

    fn value(&self, y: &[f64]) -> Result<f64> {
        let cache = self.prepare(y)?;
        self.value_with(&cache, y, None)
    }
}

/// `(f(y + h_i e_i) − f(y − h_i e_i)) / 2h_i` for every coordinate, with
/// `h_i = h · step_scale(i)`. Coordinates are evaluated in parallel; each
/// component depends only on its own two evaluations, so the result does
/// not depend on scheduling.
pub fn loss_gradient<O: Objective>(objective: &O, y: &[f64], h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {h}")));
    }
    if y.len() != objective.dim() {
        return Err(Error::invalid(format!(
            "gradient point has {} entries, objective expects {}",
            y.len(),
            objective.dim()
        )));
    }
    let cache = objective.prepare(y)?;
    (0..y.len())
        .into_par_iter()
        .map(|i| {
            let hi = h * objective.step_scale(i);
            let mut probe = y.to_vec();
            probe[i] = y[i] + hi;
            let up = objective.value_with(&cache, &probe, Some(i));
            probe[i] = y[i] - hi;
            let down = objective.value_with(&cache, &probe, Some(i));
            let bad = || Error::Gradient {
                index: i,
                name: objective.coordinate_name(i),
            };
            let (up, down) = match (up, down) {
                (Ok(u), Ok(d)) => (u, d),
                (Err(e), _) | (_, Err(e)) if !e.is_input_error() => return Err(e),
                _ => return Err(bad()),
            };
            let g = (up - down) / (2.0 * hi);
            if g.is_finite() {
                Ok(g)
            } else {
                Err(bad())
            }
        })
        .collect()
}

/// A plain closure objective without caching.
pub struct FnObjective<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnObjective<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Objective for FnObjective<F> {
    type Cache = ();

    fn dim(&self) -> usize {
        self.dim
    }

    fn prepare(&self, _y: &[f64]) -> Result<()> {
        Ok(())
    }

    fn value_with(&self, _cache: &(), y: &[f64], _changed: Option<usize>) -> Result<f64> {
        Ok((self.f)(y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_is_two_y() {
        let obj = FnObjective::new(4, |y: &[f64]| y.iter().map(|v| v * v).sum());
        let y = [0.3, -1.2, 2.5, 0.0];
        let g = loss_gradient(&obj, &y, 1e-3).unwrap();
        for (gi, yi) in g.iter().zip(y) {
            assert!((gi - 2.0 * yi).abs() <= 1e-6 * (2.0 * yi).abs().max(1.0));
        }
    }

    #[test]
    fn non_finite_value_names_coordinate() {
        let obj = FnObjective::new(2, |y: &[f64]| if y[1] > 0.0 { f64::NAN } else { 0.0 });
        match loss_gradient(&obj, &[0.0, 0.0], 1e-3) {
            Err(Error::Gradient { index, name }) => {
                assert_eq!(index, 1);
                assert_eq!(name, "y[1]");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_step() {
        let obj = FnObjective::new(1, |y: &[f64]| y[0]);
        assert!(loss_gradient(&obj, &[0.0], 0.0).is_err());
    }
}
