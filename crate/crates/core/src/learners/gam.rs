//! Additive logistic model with natural cubic spline terms.
//!
//! Each continuous column gets a natural cubic spline basis of dimension
//! `n_splines` (knots at `n_splines + 1` equally spaced quantiles, boundary
//! knots at the observed extremes); 0/1 columns enter linearly. Basis columns
//! are standardized on the training data and carry a ridge penalty; the
//! intercept and the binary-column coefficients are unpenalized.

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::learners::logistic::{irls, Design};
use crate::math::{expit, quantile_sorted};

const MAX_ITER: usize = 100;
const TOL: f64 = 1e-7;

/// Natural cubic spline basis (truncated-power form) for one column.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalSplineBasis {
    knots: Vec<f64>,
}

impl NaturalSplineBasis {
    /// Knots at equally spaced quantiles of `values`; fails when they are not
    /// strictly increasing.
    pub fn at_quantiles(values: &[f64], n_knots: usize) -> Result<Self> {
        if n_knots < 2 {
            return Err(Error::fit("gam", "a natural spline needs at least 2 knots"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let knots: Vec<f64> = (0..n_knots)
            .map(|k| quantile_sorted(&sorted, k as f64 / (n_knots - 1) as f64))
            .collect();
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::fit(
                "gam",
                format!("degenerate column: {n_knots} quantile knots are not distinct"),
            ));
        }
        Ok(Self { knots })
    }

    /// Number of basis functions (excluding the intercept).
    pub fn dim(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Appends the basis evaluated at `x` to `out`.
    pub fn eval_into(&self, x: f64, out: &mut Vec<f64>) {
        let k = self.knots.len();
        let last = self.knots[k - 1];
        let cube = |t: f64| if t > 0.0 { t * t * t } else { 0.0 };
        let d = |j: usize| (cube(x - self.knots[j]) - cube(x - last)) / (last - self.knots[j]);
        out.push(x);
        if k > 2 {
            let d_penultimate = d(k - 2);
            for j in 0..k - 2 {
                out.push(d(j) - d_penultimate);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Term {
    Linear {
        column: usize,
    },
    Spline {
        column: usize,
        basis: NaturalSplineBasis,
    },
}

/// Fitted additive model.
#[derive(Debug, Clone, PartialEq)]
pub struct GamModel {
    terms: Vec<Term>,
    center: Vec<f64>,
    scale: Vec<f64>,
    /// Intercept first, then one coefficient per expanded column.
    pub coefficients: Vec<f64>,
    /// Which expanded columns are penalized spline coefficients.
    pub penalized: Vec<bool>,
}

impl GamModel {
    fn expand_row(&self, row: &[f64], out: &mut Vec<f64>) {
        let start = out.len();
        for term in &self.terms {
            match term {
                Term::Linear { column } => out.push(row[*column]),
                Term::Spline { column, basis } => basis.eval_into(row[*column], out),
            }
        }
        for (j, v) in out[start..].iter_mut().enumerate() {
            *v = (*v - self.center[j]) / self.scale[j];
        }
    }

    pub(crate) fn predict_row(&self, row: &[f64], buf: &mut Vec<f64>) -> f64 {
        buf.clear();
        self.expand_row(row, buf);
        let eta = self.coefficients[0]
            + buf
                .iter()
                .zip(&self.coefficients[1..])
                .map(|(x, b)| x * b)
                .sum::<f64>();
        expit(eta)
    }

    /// Spline-coefficient norm (standardized scale).
    pub fn spline_coefficient_norm(&self) -> f64 {
        self.coefficients[1..]
            .iter()
            .zip(&self.penalized)
            .filter(|(_, p)| **p)
            .map(|(b, _)| b * b)
            .sum::<f64>()
            .sqrt()
    }
}

pub(crate) fn fit(
    x: &FeatureMatrix,
    y: &[f64],
    n_splines: usize,
    ridge_penalty: f64,
) -> Result<GamModel> {
    if n_splines == 0 {
        return Err(Error::fit("gam", "n_splines must be at least 1"));
    }
    if !(ridge_penalty >= 0.0 && ridge_penalty.is_finite()) {
        return Err(Error::fit(
            "gam",
            "ridge penalty must be finite and non-negative",
        ));
    }
    let mut terms = Vec::with_capacity(x.n_cols());
    let mut penalized = Vec::new();
    let mut names = vec!["(intercept)".to_string()];
    for j in 0..x.n_cols() {
        if x.is_binary_column(j) {
            terms.push(Term::Linear { column: j });
            penalized.push(false);
            names.push(x.names()[j].clone());
        } else {
            let basis = NaturalSplineBasis::at_quantiles(&x.column(j), n_splines + 1).map_err(
                |e| match e {
                    Error::Fit { reason, .. } => {
                        Error::fit("gam", format!("column `{}`: {reason}", x.names()[j]))
                    }
                    other => other,
                },
            )?;
            for k in 0..basis.dim() {
                penalized.push(true);
                names.push(format!("s({})[{k}]", x.names()[j]));
            }
            terms.push(Term::Spline { column: j, basis });
        }
    }
    let width = penalized.len();

    let mut model = GamModel {
        terms,
        center: vec![0.0; width],
        scale: vec![1.0; width],
        coefficients: Vec::new(),
        penalized,
    };

    let n = x.n_rows();
    let mut raw = Vec::with_capacity(n * width);
    for i in 0..n {
        model.expand_row(x.row(i), &mut raw);
    }
    for j in 0..width {
        let col: Vec<f64> = (0..n).map(|i| raw[i * width + j]).collect();
        let m = col.iter().sum::<f64>() / n as f64;
        let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        if sd <= 1e-12 * m.abs().max(1.0) {
            return Err(Error::fit(
                "gam",
                format!("constant design column `{}`", names[j + 1]),
            ));
        }
        model.center[j] = m;
        model.scale[j] = sd;
    }

    let mut data = Vec::with_capacity(n * (width + 1));
    for i in 0..n {
        data.push(1.0);
        for j in 0..width {
            data.push((raw[i * width + j] - model.center[j]) / model.scale[j]);
        }
    }
    let design = Design {
        rows: n,
        cols: width + 1,
        data: &data,
        names: &names,
    };
    let mut penalty = vec![0.0];
    penalty.extend(
        model
            .penalized
            .iter()
            .map(|&p| if p { ridge_penalty } else { 0.0 }),
    );

    let fit = irls(&design, y, &penalty, MAX_ITER, TOL, "gam")?;
    model.coefficients = fit.beta;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_is_linear_beyond_boundary_knots() {
        let values: Vec<f64> = (0..100).map(|i| i as f64 / 10.0).collect();
        let basis = NaturalSplineBasis::at_quantiles(&values, 5).unwrap();
        assert_eq!(basis.dim(), 4);
        // second differences vanish to the right of the last knot
        let eval = |x: f64| {
            let mut v = Vec::new();
            basis.eval_into(x, &mut v);
            v
        };
        let (a, b, c) = (eval(12.0), eval(13.0), eval(14.0));
        for j in 0..4 {
            assert!((a[j] - 2.0 * b[j] + c[j]).abs() < 1e-9, "component {j}");
        }
        let (a, b, c) = (eval(-3.0), eval(-2.0), eval(-1.0));
        for j in 0..4 {
            assert!((a[j] - 2.0 * b[j] + c[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_column_is_rejected() {
        let values = vec![1.0, 1.0, 1.0, 2.0];
        assert!(NaturalSplineBasis::at_quantiles(&values, 5).is_err());
    }
}
