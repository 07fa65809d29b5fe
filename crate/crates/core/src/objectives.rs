//! Benchmark objectives with analytic gradients, a central-difference
//! gradient checker, and grid/sampling verifiers for the Polyak-Łojasiewicz
//! inequality and strong convexity.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

#[derive(Clone)]
enum Kind {
    Trid,
    Rosenbrock,
    Quadratic {
        a: DMatrix<f64>,
        b: DVector<f64>,
    },
    Custom {
        value: Arc<ValueFn>,
        grad: Arc<GradFn>,
    },
}

impl fmt::Debug for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kind::Trid => f.write_str("Trid"),
            Kind::Rosenbrock => f.write_str("Rosenbrock"),
            Kind::Quadratic { a, b } => f
                .debug_struct("Quadratic")
                .field("a", a)
                .field("b", b)
                .finish(),
            Kind::Custom { .. } => f.write_str("Custom"),
        }
    }
}

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::invalid("domain", "empty box"));
        }
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite())
        {
            return Err(Error::invalid(
                "domain",
                "need finite lower < upper in every coordinate",
            ));
        }
        Ok(Self { lower, upper })
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| rng.gen_range(l..u))
            .collect()
    }

    /// Visits every point of the tensor grid with `per_axis` points per
    /// coordinate (endpoints included), in row-major order.
    pub fn for_each_grid_point(&self, per_axis: usize, mut visit: impl FnMut(&[f64])) {
        let n = self.dim();
        let mut idx = vec![0usize; n];
        let mut x = vec![0.0; n];
        let denom = (per_axis - 1) as f64;
        loop {
            for i in 0..n {
                let frac = idx[i] as f64 / denom;
                x[i] = self.lower[i] + (self.upper[i] - self.lower[i]) * frac;
            }
            visit(&x);
            let mut axis = n;
            loop {
                if axis == 0 {
                    return;
                }
                axis -= 1;
                idx[axis] += 1;
                if idx[axis] < per_axis {
                    break;
                }
                idx[axis] = 0;
            }
        }
    }
}

/// PŁ modulus together with the set it is claimed on.
#[derive(Debug, Clone, PartialEq)]
pub struct PlModulus {
    pub sigma: f64,
    pub domain: Option<BoxDomain>,
}

/// A differentiable cost function with an analytic gradient.
#[derive(Debug, Clone)]
pub struct Objective {
    name: String,
    dim: usize,
    kind: Kind,
    minimizer: Option<Vec<f64>>,
    min_value: Option<f64>,
    pl_modulus: Option<PlModulus>,
    sc_modulus: Option<f64>,
}

impl Objective {
    /// Trid function `sum (x_i - 1)^2 - sum x_i x_{i-1}`.
    pub fn trid(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("dim", format!("trid needs n >= 2, got {n}")));
        }
        let minimizer: Vec<f64> = (1..=n).map(|i| (i * (n + 1 - i)) as f64).collect();
        let nf = n as f64;
        let min_value = -nf * (nf + 4.0) * (nf - 1.0) / 6.0;
        // Hessian is tridiag(-1, 2, -1); its smallest eigenvalue
        let lambda_min = 2.0 - 2.0 * (std::f64::consts::PI / (nf + 1.0)).cos();
        Ok(Self {
            name: "trid".into(),
            dim: n,
            kind: Kind::Trid,
            minimizer: Some(minimizer),
            min_value: Some(min_value),
            pl_modulus: Some(PlModulus {
                sigma: lambda_min,
                domain: None,
            }),
            sc_modulus: Some(lambda_min),
        })
    }

    /// Chained Rosenbrock function. For `n = 2` it carries the PŁ modulus
    /// 0.1 on `[-1, 1]^2` as reported metadata, not as a checked fact.
    pub fn rosenbrock(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(
                "dim",
                format!("rosenbrock needs n >= 2, got {n}"),
            ));
        }
        let pl_modulus = (n == 2).then(|| PlModulus {
            sigma: 0.1,
            domain: Some(BoxDomain::cube(2, -1.0, 1.0).expect("valid box")),
        });
        Ok(Self {
            name: "rosenbrock".into(),
            dim: n,
            kind: Kind::Rosenbrock,
            minimizer: Some(vec![1.0; n]),
            min_value: Some(0.0),
            pl_modulus,
            sc_modulus: None,
        })
    }

    /// `f(x) = 1/2 x^T A x - b^T x` for symmetric positive definite `A`,
    /// given row by row.
    pub fn quadratic(a: &[Vec<f64>], b: &[f64]) -> Result<Self> {
        let n = b.len();
        if n == 0 {
            return Err(Error::invalid("b", "empty vector"));
        }
        if a.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: a.len(),
            });
        }
        for row in a {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
        }
        let a = DMatrix::from_fn(n, n, |i, j| a[i][j]);
        if a.iter().chain(b).any(|v| !v.is_finite()) {
            return Err(Error::invalid("A", "entries must be finite"));
        }
        let scale = a.amax().max(1.0);
        for i in 0..n {
            for j in 0..i {
                if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::invalid("A", "matrix is not symmetric"));
                }
            }
        }
        let b = DVector::from_column_slice(b);
        let chol = a.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        let x_star = chol.solve(&b);
        let min_value = -0.5 * b.dot(&x_star);
        let lambda_min = a.clone().symmetric_eigen().eigenvalues.min();
        if lambda_min <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self {
            name: "quadratic".into(),
            dim: n,
            kind: Kind::Quadratic { a, b },
            minimizer: Some(x_star.iter().copied().collect()),
            min_value: Some(min_value),
            pl_modulus: Some(PlModulus {
                sigma: lambda_min,
                domain: None,
            }),
            sc_modulus: Some(lambda_min),
        })
    }

    /// User-supplied objective. Metadata can be attached with the `with_*`
    /// builders.
    pub fn custom<F, G>(name: impl Into<String>, dim: usize, value: F, grad: G) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be >= 1"));
        }
        Ok(Self {
            name: name.into(),
            dim,
            kind: Kind::Custom {
                value: Arc::new(value),
                grad: Arc::new(grad),
            },
            minimizer: None,
            min_value: None,
            pl_modulus: None,
            sc_modulus: None,
        })
    }

    pub fn with_minimizer(mut self, minimizer: Vec<f64>, min_value: f64) -> Result<Self> {
        self.check_dim(minimizer.len())?;
        self.minimizer = Some(minimizer);
        self.min_value = Some(min_value);
        Ok(self)
    }

    pub fn with_pl_modulus(mut self, sigma: f64, domain: Option<BoxDomain>) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::invalid("sigma", "must be > 0"));
        }
        self.pl_modulus = Some(PlModulus { sigma, domain });
        Ok(self)
    }

    pub fn with_sc_modulus(mut self, mu: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::invalid("mu", "must be > 0"));
        }
        self.sc_modulus = Some(mu);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn minimizer(&self) -> Option<&[f64]> {
        self.minimizer.as_deref()
    }

    pub fn min_value(&self) -> Option<f64> {
        self.min_value
    }

    pub fn pl_modulus(&self) -> Option<&PlModulus> {
        self.pl_modulus.as_ref()
    }

    pub fn sc_modulus(&self) -> Option<f64> {
        self.sc_modulus
    }

    pub(crate) fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got,
            });
        }
        Ok(())
    }

    /// `f(x)`. `x.len()` must equal [`dim`](Self::dim).
    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match &self.kind {
            Kind::Trid => {
                let sq: f64 = x.iter().map(|&xi| (xi - 1.0) * (xi - 1.0)).sum();
                let cross: f64 = x.windows(2).map(|w| w[0] * w[1]).sum();
                sq - cross
            }
            Kind::Rosenbrock => x
                .windows(2)
                .map(|w| {
                    let a = w[1] - w[0] * w[0];
                    let b = 1.0 - w[0];
                    100.0 * a * a + b * b
                })
                .sum(),
            Kind::Quadratic { a, b } => {
                let xv = DVector::from_column_slice(x);
                0.5 * xv.dot(&(a * &xv)) - b.dot(&xv)
            }
            Kind::Custom { value, .. } => value(x),
        }
    }

    /// Writes `grad f(x)` into `out`.
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        let n = self.dim;
        match &self.kind {
            Kind::Trid => {
                for i in 0..n {
                    let mut g = 2.0 * (x[i] - 1.0);
                    if i > 0 {
                        g -= x[i - 1];
                    }
                    if i + 1 < n {
                        g -= x[i + 1];
                    }
                    out[i] = g;
                }
            }
            Kind::Rosenbrock => {
                out.iter_mut().for_each(|g| *g = 0.0);
                for i in 0..n - 1 {
                    let a = x[i + 1] - x[i] * x[i];
                    out[i] += -400.0 * x[i] * a - 2.0 * (1.0 - x[i]);
                    out[i + 1] += 200.0 * a;
                }
            }
            Kind::Quadratic { a, b } => {
                for i in 0..n {
                    let row: f64 = (0..n).map(|j| a[(i, j)] * x[j]).sum();
                    out[i] = row - b[i];
                }
            }
            Kind::Custom { grad, .. } => grad(x, out),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        self.gradient_into(x, &mut g);
        g
    }
}

/// Euclidean norm.
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Euclidean distance.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Default relative finite-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Maximum over coordinates of `|central FD - analytic| / max(1, |analytic|)`.
///
/// Uses the fourth-order central stencil
/// `(-f(x+2s) + 8 f(x+s) - 8 f(x-s) + f(x-2s)) / 12s`, exact up to rounding
/// for polynomials of degree <= 4. The step on coordinate `i` is
/// `s = h * max(1, |x_i|)`.
pub fn check_gradient(obj: &Objective, x: &[f64], h: f64) -> Result<f64> {
    obj.check_dim(x.len())?;
    if !(h > 0.0) {
        return Err(Error::invalid("h", "must be > 0"));
    }
    let analytic = obj.gradient(x);
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let step = h * x[i].abs().max(1.0);
        let mut at = |offset: f64| {
            probe[i] = x[i] + offset;
            obj.value(&probe)
        };
        let fd =
            (-at(2.0 * step) + 8.0 * at(step) - 8.0 * at(-step) + at(-2.0 * step)) / (12.0 * step);
        probe[i] = x[i];
        worst = worst.max((fd - analytic[i]).abs() / analytic[i].abs().max(1.0));
    }
    Ok(worst)
}

/// Result of a grid scan of the PŁ ratio `|grad f|^2 / (2 (f - f*))`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlReport {
    /// Smallest ratio seen; `+inf` when every grid point sits at the minimum.
    pub sigma_hat: f64,
    /// Point attaining `sigma_hat`.
    pub argmin: Option<Vec<f64>>,
    /// Points whose ratio is below the requested modulus.
    pub violations: Vec<Vec<f64>>,
    pub points_checked: usize,
    pub points_skipped: usize,
}

impl PlReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Gap `f - f*` below which a point is treated as a minimizer.
pub const PL_GAP_FLOOR: f64 = 1e-12;

pub fn verify_pl(
    obj: &Objective,
    domain: &BoxDomain,
    grid_per_axis: usize,
    sigma: Option<f64>,
) -> Result<PlReport> {
    let f_star = obj.min_value().ok_or_else(|| Error::MissingMetadata {
        objective: obj.name().to_string(),
        what: "a known minimum value",
    })?;
    obj.check_dim(domain.dim())?;
    if grid_per_axis < 2 {
        return Err(Error::invalid("grid_per_axis", "must be >= 2"));
    }
    let mut report = PlReport {
        sigma_hat: f64::INFINITY,
        argmin: None,
        violations: Vec::new(),
        points_checked: 0,
        points_skipped: 0,
    };
    let mut grad = vec![0.0; obj.dim()];
    domain.for_each_grid_point(grid_per_axis, |x| {
        let gap = obj.value(x) - f_star;
        if gap <= PL_GAP_FLOOR {
            report.points_skipped += 1;
            return;
        }
        report.points_checked += 1;
        obj.gradient_into(x, &mut grad);
        let g2: f64 = grad.iter().map(|g| g * g).sum();
        let ratio = g2 / (2.0 * gap);
        if ratio < report.sigma_hat {
            report.sigma_hat = ratio;
            report.argmin = Some(x.to_vec());
        }
        if let Some(s) = sigma {
            if ratio < s {
                report.violations.push(x.to_vec());
            }
        }
    });
    Ok(report)
}

/// A pair `(chi1, chi2)` breaking the strong-convexity inequality.
pub type PointPair = (Vec<f64>, Vec<f64>);

/// Samples `samples` random pairs in `domain` and returns those with
/// `<grad f(a) - grad f(b), a - b> < mu |a - b|^2` (relative slack 1e-10).
pub fn verify_strong_convexity<R: Rng + ?Sized>(
    obj: &Objective,
    domain: &BoxDomain,
    samples: usize,
    mu: f64,
    rng: &mut R,
) -> Result<Vec<PointPair>> {
    obj.check_dim(domain.dim())?;
    if !(mu > 0.0) {
        return Err(Error::invalid("mu", "must be > 0"));
    }
    if samples == 0 {
        return Err(Error::invalid("samples", "must be >= 1"));
    }
    let mut out = Vec::new();
    for _ in 0..samples {
        let a = domain.sample(rng);
        let b = domain.sample(rng);
        let ga = obj.gradient(&a);
        let gb = obj.gradient(&b);
        let mut inner = 0.0;
        let mut d2 = 0.0;
        for i in 0..a.len() {
            let d = a[i] - b[i];
            inner += (ga[i] - gb[i]) * d;
            d2 += d * d;
        }
        let rhs = mu * d2;
        if inner < rhs - 1e-10 * rhs.max(f64::MIN_POSITIVE) {
            out.push((a, b));
        }
    }
    Ok(out)
}
