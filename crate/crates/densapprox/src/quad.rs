//! Adaptive quadrature: an interval-splitting Gauss–Kronrod (G7, K15) rule in
//! one dimension, and a nested tensor-product version for boxes up to
//! dimension 3. The embedded Gauss rule provides the per-interval error
//! estimate; the worst interval is bisected until the summed error meets
//! `max(abs_tol, rel_tol * |integral|)`.

use std::cell::Cell;

use nalgebra::DVector;

use crate::error::{Error, Result};

// 15-point Kronrod nodes (positive half) and weights, with the embedded
// 7-point Gauss weights; standard published values.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_intervals: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    /// Summed Kronrod-minus-Gauss error estimates of the final subdivision.
    pub abs_error: f64,
    pub intervals: usize,
    pub evals: usize,
}

/// One G7/K15 application on [a, b]: returns (kronrod value, error estimate).
fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let center = 0.5 * (a + b);
    let mut kronrod = 0.0;
    let mut gauss = 0.0;
    for (i, (&x, &wk)) in XGK.iter().zip(WGK.iter()).enumerate() {
        let (fp, fm) = if i == 7 {
            let fc = f(center);
            (fc, 0.0) // center counted once
        } else {
            (f(center + half * x), f(center - half * x))
        };
        let pair = if i == 7 { fp } else { fp + fm };
        kronrod += wk * pair;
        if i % 2 == 1 {
            // odd Kronrod indices are the embedded Gauss-7 nodes; index 7 is the
            // shared center point
            gauss += WG[i / 2] * pair;
        }
    }
    (half * kronrod, (half * (kronrod - gauss)).abs())
}

struct Interval {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

/// Adaptive integration of `f` over `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, opts: &QuadOptions) -> Result<QuadResult> {
    if !(a < b) {
        return Err(Error::Invalid(format!("bad interval [{a}, {b}]")));
    }
    let (v, e) = gk15(f, a, b);
    let mut intervals = vec![Interval {
        a,
        b,
        value: v,
        error: e,
    }];
    let mut evals = 15usize;
    loop {
        let total: f64 = intervals.iter().map(|i| i.value).sum();
        let err: f64 = intervals.iter().map(|i| i.error).sum();
        let tol = opts.abs_tol.max(opts.rel_tol * total.abs());
        if err <= tol {
            return Ok(QuadResult {
                value: total,
                abs_error: err,
                intervals: intervals.len(),
                evals,
            });
        }
        if intervals.len() >= opts.max_intervals {
            return Err(Error::ToleranceNotReached {
                error: err,
                tol,
                intervals: intervals.len(),
            });
        }
        let worst = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .expect("non-empty interval list");
        let Interval { a, b, .. } = intervals.swap_remove(worst);
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            // interval at floating-point resolution; cannot split further
            return Err(Error::ToleranceNotReached {
                error: err,
                tol,
                intervals: intervals.len() + 1,
            });
        }
        let (vl, el) = gk15(f, a, mid);
        let (vr, er) = gk15(f, mid, b);
        evals += 30;
        intervals.push(Interval {
            a,
            b: mid,
            value: vl,
            error: el,
        });
        intervals.push(Interval {
            a: mid,
            b,
            value: vr,
            error: er,
        });
    }
}

/// Nested tensor-product integration over an axis-aligned box, dimensions 1-3.
/// Inner integrals run at a slightly tighter relative tolerance so their error
/// stays below the outer rule's resolution.
pub fn integrate_box(
    f: &dyn Fn(&DVector<f64>) -> f64,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    opts: &QuadOptions,
) -> Result<QuadResult> {
    let dim = lo.len();
    if dim == 0 || dim > 3 {
        return Err(Error::DimensionTooLarge { dim, max: 3 });
    }
    if hi.len() != dim {
        return Err(Error::Invalid("box corner dimensions differ".into()));
    }
    let evals = Cell::new(0usize);
    let counted = |x: &DVector<f64>| {
        evals.set(evals.get() + 1);
        f(x)
    };
    let result = integrate_box_rec(&counted, lo, hi, &DVector::zeros(dim), dim, opts)?;
    Ok(QuadResult {
        evals: evals.get(),
        ..result
    })
}

fn integrate_box_rec(
    f: &dyn Fn(&DVector<f64>) -> f64,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    fixed: &DVector<f64>,
    remaining: usize,
    opts: &QuadOptions,
) -> Result<QuadResult> {
    let axis = remaining - 1;
    let inner_opts = QuadOptions {
        abs_tol: opts.abs_tol * 1e-2,
        rel_tol: opts.rel_tol * 0.1,
        max_intervals: opts.max_intervals,
    };
    if remaining == 1 {
        let g = |x: f64| {
            let mut point = fixed.clone();
            point[0] = x;
            f(&point)
        };
        return integrate(&g, lo[0], hi[0], opts);
    }
    // integrate the inner slice value over the outermost remaining axis
    let failed = Cell::new(None);
    let g = |x: f64| {
        let mut point = fixed.clone();
        point[axis] = x;
        match integrate_box_rec(f, lo, hi, &point, remaining - 1, &inner_opts) {
            Ok(r) => r.value,
            Err(e) => {
                failed.set(Some(e));
                f64::NAN
            }
        }
    };
    let outer = integrate(&g, lo[axis], hi[axis], opts);
    if let Some(e) = failed.take() {
        return Err(e);
    }
    outer
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sine_over_half_period() {
        let r = integrate(
            &|x: f64| x.sin(),
            0.0,
            std::f64::consts::PI,
            &QuadOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(r.value, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn gaussian_mass_on_wide_interval() {
        let r = integrate(
            &|x: f64| (-0.5 * x * x).exp(),
            -40.0,
            40.0,
            &QuadOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(
            r.value,
            (2.0 * std::f64::consts::PI).sqrt(),
            max_relative = 1e-10
        );
    }

    #[test]
    fn interval_budget_exhaustion_is_reported() {
        let opts = QuadOptions {
            abs_tol: 1e-14,
            rel_tol: 1e-14,
            max_intervals: 8,
        };
        let r = integrate(&|x: f64| x.abs().sqrt().recip().min(1e8), 1e-12, 1.0, &opts);
        assert!(matches!(r, Err(Error::ToleranceNotReached { .. })));
    }

    #[test]
    fn two_dim_gaussian() {
        let lo = DVector::from_vec(vec![-12.0, -12.0]);
        let hi = DVector::from_vec(vec![12.0, 12.0]);
        let f = |x: &DVector<f64>| (-0.5 * x.dot(x)).exp();
        let r = integrate_box(&f, &lo, &hi, &QuadOptions::default()).unwrap();
        assert_relative_eq!(r.value, 2.0 * std::f64::consts::PI, max_relative = 1e-9);
        assert!(r.evals > 0);
    }

    #[test]
    fn three_dim_constant() {
        let lo = DVector::from_vec(vec![0.0, 0.0, 0.0]);
        let hi = DVector::from_vec(vec![2.0, 3.0, 0.5]);
        let f = |_: &DVector<f64>| 1.25;
        let r = integrate_box(&f, &lo, &hi, &QuadOptions::default()).unwrap();
        assert_relative_eq!(r.value, 1.25 * 3.0, max_relative = 1e-12);
    }

    #[test]
    fn four_dim_rejected() {
        let lo = DVector::zeros(4);
        let hi = DVector::from_element(4, 1.0);
        let f = |_: &DVector<f64>| 1.0;
        assert!(matches!(
            integrate_box(&f, &lo, &hi, &QuadOptions::default()),
            Err(Error::DimensionTooLarge { dim: 4, max: 3 })
        ));
    }
}
