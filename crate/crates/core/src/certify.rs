//! A-posteriori error bounds for ODE fits.
//!
//! Given a fit with objective value `m` on data with largest gap `B` and
//! largest difference-quotient norm `Δ`, and a Lipschitz constant `L` of the
//! fitted right-hand side, the distance between the data polygon `P` and the
//! exact solution `y` started from the first datum obeys
//!
//! ```text
//! ‖P(t) − y(t)‖ ≤ B (√m B + √(1 + F²) (e^{L (t − t₁)} − 1)),   F = √m + Δ.
//! ```
//!
//! `L` is not known in general, so [`estimate_lipschitz`] samples the
//! Jacobian of the model over a box around the data.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{perturb_series, series_stats, DataError, SeriesStats, TimeSeries};
use crate::descent::{steepest_descent, DescentError, DescentOptions, FitResult};
use crate::expr::{ExprError, ModelExpr};
use crate::objective::{ConstraintMode, OdeObjective, ObjectiveError};
use crate::util::{dist2, fmt17, norm2, write_csv_row};

/// Number of low-discrepancy samples used by [`estimate_lipschitz`].
pub const LIPSCHITZ_SAMPLES: usize = 10_000;
/// Fraction of each axis' width added on both sides of the data box.
pub const BOX_INFLATION: f64 = 0.05;
/// Safety factor applied to the sampled maximum.
pub const LIPSCHITZ_SAFETY: f64 = 1.1;

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("{name} must be finite and non-negative, got {value}")]
    NegativeInput { name: &'static str, value: f64 },
    #[error("model Jacobian is not finite at t = {t}, x = {x:?}")]
    NonFiniteJacobian { t: f64, x: Vec<f64> },
    #[error("Lipschitz estimate {lipschitz:e} over a span of {span} makes e^(L·span) overflow; no usable bound")]
    Unusable { lipschitz: f64, span: f64 },
    #[error("bound is not finite: {0}")]
    NonFiniteBound(String),
    #[error("certificates were built over different data")]
    MismatchedSeries,
    #[error("uniform cap does not dominate: {0}")]
    CapTooSmall(String),
    #[error("model maps {input} states to {output} outputs but the data has dimension {data}")]
    DimensionMismatch { input: usize, output: usize, data: usize },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Descent(#[from] DescentError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub value: f64,
    /// Description of how `value` was obtained.
    pub method: String,
    /// Largest sampled Jacobian norm, before the safety factor.
    pub sampled_max: f64,
    pub box_lower: Vec<f64>,
    pub box_upper: Vec<f64>,
}

fn radical_inverse(mut index: usize, base: usize) -> f64 {
    let mut result = 0.0;
    let mut scale = 1.0 / base as f64;
    while index > 0 {
        result += (index % base) as f64 * scale;
        index /= base;
        scale /= base as f64;
    }
    result
}

fn first_primes(n: usize) -> Vec<usize> {
    let mut primes = Vec::with_capacity(n);
    let mut candidate = 2;
    while primes.len() < n {
        if primes.iter().take_while(|p| *p * *p <= candidate).all(|p| candidate % p != 0) {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}

/// Bounding box of the points `(t_i, x(t_i))`, widened on every side.
pub fn sampling_box(ts: &TimeSeries) -> (Vec<f64>, Vec<f64>) {
    let cols = ts.dim() + 1;
    let mut lower = vec![f64::INFINITY; cols];
    let mut upper = vec![f64::NEG_INFINITY; cols];
    for i in 0..ts.len() {
        let point = std::iter::once(ts.times()[i]).chain(ts.value(i).iter().copied());
        for (k, v) in point.enumerate() {
            lower[k] = lower[k].min(v);
            upper[k] = upper[k].max(v);
        }
    }
    for k in 0..cols {
        let width = upper[k] - lower[k];
        let pad = if width > 0.0 {
            BOX_INFLATION * width
        } else {
            0.1 * lower[k].abs().max(1.0)
        };
        lower[k] -= pad;
        upper[k] += pad;
    }
    (lower, upper)
}

/// Estimates a Lipschitz constant of `f(a, ·, ·)` over the data's region.
///
/// The Frobenius norm of the `(t, x)` Jacobian is maximised over a Halton
/// sequence in [`sampling_box`] and multiplied by [`LIPSCHITZ_SAFETY`].
/// Fails when the Jacobian is not finite somewhere, or when the estimate is
/// so large that `e^{L (t_end − t₁)}` overflows.
pub fn estimate_lipschitz(model: &ModelExpr, a: &[f64], ts: &TimeSeries) -> Result<LipschitzEstimate, CertifyError> {
    if model.state_dim() != ts.dim() || model.output_dim() != ts.dim() {
        return Err(CertifyError::DimensionMismatch {
            input: model.state_dim(),
            output: model.output_dim(),
            data: ts.dim(),
        });
    }
    let (lower, upper) = sampling_box(ts);
    let cols = lower.len();
    let primes = first_primes(cols);
    let mut point = vec![0.0; cols];
    let mut sampled_max: f64 = 0.0;
    for n in 1..=LIPSCHITZ_SAMPLES {
        for k in 0..cols {
            point[k] = lower[k] + (upper[k] - lower[k]) * radical_inverse(n, primes[k]);
        }
        let (_, jac) = model.eval_with_time_state_jacobian(a, point[0], &point[1..])?;
        let norm = jac.frobenius_norm();
        if !norm.is_finite() {
            return Err(CertifyError::NonFiniteJacobian {
                t: point[0],
                x: point[1..].to_vec(),
            });
        }
        sampled_max = sampled_max.max(norm);
    }
    let value = LIPSCHITZ_SAFETY * sampled_max;
    let span = ts.last_time() - ts.first_time();
    if value * span > f64::MAX.ln() {
        return Err(CertifyError::Unusable { lipschitz: value, span });
    }
    Ok(LipschitzEstimate {
        value,
        method: format!(
            "halton sampling, N={LIPSCHITZ_SAMPLES}, box inflated {}% per side, factor {LIPSCHITZ_SAFETY}, Frobenius norm of (t,x)-Jacobian",
            BOX_INFLATION * 100.0
        ),
        sampled_max,
        box_lower: lower,
        box_upper: upper,
    })
}

/// `max_i ‖f(t_i, x(t_i))‖` over every datum.
pub fn direct_slope_bound(model: &ModelExpr, a: &[f64], ts: &TimeSeries) -> Result<f64, CertifyError> {
    let mut best: f64 = 0.0;
    for i in 0..ts.len() {
        let f = model.eval(a, ts.times()[i], ts.value(i))?;
        let n = norm2(&f);
        if !n.is_finite() {
            return Err(CertifyError::NonFiniteBound(format!("f is not finite at t = {}", ts.times()[i])));
        }
        best = best.max(n);
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCertificate {
    /// `B`, the largest time gap.
    pub b: f64,
    /// `Δ`, the largest difference-quotient norm.
    pub delta: f64,
    /// Achieved objective value.
    pub m: f64,
    pub lipschitz: f64,
    pub lipschitz_method: String,
    /// `F_m = √m + Δ`.
    pub f_m: f64,
    /// `max ‖f(t_i, x(t_i))‖` when the model was available.
    pub f_direct: Option<f64>,
    /// `L B √(1 + F_m²)`.
    pub big_m: f64,
    pub t_start: f64,
    pub t_end: f64,
}

fn check_input(name: &'static str, value: f64) -> Result<(), CertifyError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(CertifyError::NegativeInput { name, value })
    }
}

pub fn error_certificate(m: f64, stats: &SeriesStats, lipschitz: f64) -> Result<ErrorCertificate, CertifyError> {
    check_input("m", m)?;
    check_input("L", lipschitz)?;
    check_input("B", stats.max_gap)?;
    check_input("Delta", stats.max_slope)?;
    let f_m = m.sqrt() + stats.max_slope;
    let cert = ErrorCertificate {
        b: stats.max_gap,
        delta: stats.max_slope,
        m,
        lipschitz,
        lipschitz_method: "supplied".to_string(),
        f_m,
        f_direct: None,
        big_m: lipschitz * stats.max_gap * (1.0 + f_m * f_m).sqrt(),
        t_start: stats.t_start,
        t_end: stats.t_end,
    };
    let last = cert.bound(cert.t_end);
    if !last.is_finite() || !cert.big_m.is_finite() {
        return Err(CertifyError::NonFiniteBound(format!(
            "bound at t = {} evaluates to {last}",
            cert.t_end
        )));
    }
    Ok(cert)
}

impl ErrorCertificate {
    pub fn with_method(mut self, method: impl Into<String>) -> Self {
        self.lipschitz_method = method.into();
        self
    }

    pub fn with_direct_slope(mut self, f_direct: f64) -> Self {
        self.f_direct = Some(f_direct);
        self
    }

    /// `√m B²`, the part of the bound present from the start.
    pub fn initial_term(&self) -> f64 {
        self.m.sqrt() * self.b * self.b
    }

    /// `B √(1 + F_m²) (e^{L s} − 1)` with `s = t − t₁`.
    pub fn growth_term(&self, t: f64) -> f64 {
        self.b * (1.0 + self.f_m * self.f_m).sqrt() * (self.lipschitz * (t - self.t_start)).exp_m1()
    }

    pub fn bound(&self, t: f64) -> f64 {
        self.b * (self.m.sqrt() * self.b + (1.0 + self.f_m * self.f_m).sqrt() * (self.lipschitz * (t - self.t_start)).exp_m1())
    }

    fn same_series(&self, other: &ErrorCertificate) -> bool {
        self.b == other.b && self.delta == other.delta && self.t_start == other.t_start && self.t_end == other.t_end
    }
}

/// Estimates `L` for `(model, a)` on `ts`, then builds the certificate for
/// objective value `m`, recording the direct slope maximum as well.
pub fn certify_fit(model: &ModelExpr, a: &[f64], ts: &TimeSeries, m: f64) -> Result<ErrorCertificate, CertifyError> {
    let estimate = estimate_lipschitz(model, a, ts)?;
    let direct = direct_slope_bound(model, a, ts)?;
    Ok(error_certificate(m, &series_stats(ts), estimate.value)?
        .with_method(estimate.method)
        .with_direct_slope(direct))
}

/// Bound on `‖y(t) − z(t)‖` for the solutions of two models fitted to the
/// same data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonBound {
    pub first: ErrorCertificate,
    pub second: ErrorCertificate,
}

pub fn compare_models(first: &ErrorCertificate, second: &ErrorCertificate) -> Result<ComparisonBound, CertifyError> {
    if !first.same_series(second) {
        return Err(CertifyError::MismatchedSeries);
    }
    Ok(ComparisonBound {
        first: first.clone(),
        second: second.clone(),
    })
}

impl ComparisonBound {
    /// `B {(√m + √m̃) B + √(1+F²)(e^{L s} − 1) + √(1+H²)(e^{L̃ s} − 1)}`.
    pub fn bound(&self, t: f64) -> f64 {
        let (f, h) = (&self.first, &self.second);
        let s = t - f.t_start;
        f.b * ((f.m.sqrt() + h.m.sqrt()) * f.b
            + (1.0 + f.f_m * f.f_m).sqrt() * (f.lipschitz * s).exp_m1()
            + (1.0 + h.f_m * h.f_m).sqrt() * (h.lipschitz * s).exp_m1())
    }

    /// Replaces both fits by common caps `m, m̃ < δ²` and `L, L̃ < 𝓛`.
    pub fn uniform_cap(&self, delta_cap: f64, lipschitz_cap: f64) -> Result<UniformCapBound, CertifyError> {
        let (f, h) = (&self.first, &self.second);
        if !(f.m < delta_cap * delta_cap && h.m < delta_cap * delta_cap) {
            return Err(CertifyError::CapTooSmall(format!(
                "objectives {} and {} must both be below δ² = {}",
                f.m,
                h.m,
                delta_cap * delta_cap
            )));
        }
        if !(f.lipschitz < lipschitz_cap && h.lipschitz < lipschitz_cap) {
            return Err(CertifyError::CapTooSmall(format!(
                "Lipschitz constants {} and {} must both be below {lipschitz_cap}",
                f.lipschitz, h.lipschitz
            )));
        }
        Ok(UniformCapBound {
            b: f.b,
            delta: f.delta,
            delta_cap,
            lipschitz_cap,
            t_start: f.t_start,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformCapBound {
    pub b: f64,
    pub delta: f64,
    pub delta_cap: f64,
    pub lipschitz_cap: f64,
    pub t_start: f64,
}

impl UniformCapBound {
    /// `2B {δB + √(1 + (δ + Δ)²)(e^{𝓛 s} − 1)}`.
    pub fn bound(&self, t: f64) -> f64 {
        let f = self.delta_cap + self.delta;
        2.0 * self.b
            * (self.delta_cap * self.b + (1.0 + f * f).sqrt() * (self.lipschitz_cap * (t - self.t_start)).exp_m1())
    }
}

/// One of the three fits in a noise analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseFit {
    pub fit: FitResult,
    pub certificate: ErrorCertificate,
    /// Euclidean distance of the parameters from the center optimum.
    pub distance_from_center: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseEnvelope {
    pub epsilon: f64,
    pub lower: NoiseFit,
    pub center: NoiseFit,
    pub upper: NoiseFit,
}

impl NoiseEnvelope {
    /// `2(ε + E(t)) + Ē(t) + E̲(t)`.
    pub fn envelope(&self, t: f64) -> f64 {
        2.0 * (self.epsilon + self.center.certificate.bound(t))
            + self.upper.certificate.bound(t)
            + self.lower.certificate.bound(t)
    }
}

fn certified_fit(
    model: &ModelExpr,
    ts: &TimeSeries,
    start: &[f64],
    opts: &DescentOptions,
) -> Result<(FitResult, ErrorCertificate), CertifyError> {
    let objective = OdeObjective::new(model.clone(), ts.clone())?;
    let fit = steepest_descent(&objective, start, opts, &ConstraintMode::None)?;
    if !fit.objective.is_finite() {
        return Err(CertifyError::NonFiniteBound("refit objective is not finite".into()));
    }
    let cert = certify_fit(model, &fit.params, ts, fit.objective)?;
    Ok((fit, cert))
}

/// Fits `ts` from `start`, then refits the `x ± ε` series starting from the
/// center optimum, and certifies all three fits.
///
/// With `ε = 0` the shifted series equal the data, so the center fit is
/// reused for both sides.
pub fn noise_analysis(
    model: &ModelExpr,
    ts: &TimeSeries,
    epsilon: f64,
    opts: &DescentOptions,
    start: &[f64],
) -> Result<NoiseEnvelope, CertifyError> {
    let pair = perturb_series(ts, epsilon)?;
    let (center_fit, center_cert) = certified_fit(model, ts, start, opts)?;
    let center = NoiseFit {
        fit: center_fit,
        certificate: center_cert,
        distance_from_center: 0.0,
    };
    if epsilon == 0.0 {
        return Ok(NoiseEnvelope {
            epsilon,
            lower: center.clone(),
            upper: center.clone(),
            center,
        });
    }
    let seed = &center.fit.params;
    let (lower, upper) = rayon::join(
        || certified_fit(model, &pair.lower, seed, opts),
        || certified_fit(model, &pair.upper, seed, opts),
    );
    let side = |(fit, certificate): (FitResult, ErrorCertificate)| NoiseFit {
        distance_from_center: dist2(&fit.params, seed),
        fit,
        certificate,
    };
    Ok(NoiseEnvelope {
        epsilon,
        lower: side(lower?),
        upper: side(upper?),
        center,
    })
}

/// Writes `t,bound` for each time.
pub fn write_bound_csv<W: Write>(mut out: W, times: &[f64], curve: impl Fn(f64) -> f64) -> std::io::Result<()> {
    write_csv_row(&mut out, &["t".into(), "bound".into()])?;
    for &t in times {
        write_csv_row(&mut out, &[fmt17(t), fmt17(curve(t))])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_model;
    use crate::integrate::sample_times;

    fn stats(b: f64, delta: f64, t_start: f64) -> SeriesStats {
        SeriesStats {
            min_gap: b,
            max_gap: b,
            max_slope: delta,
            t_start,
            t_end: t_start + 1.0,
        }
    }

    fn closed_form(t: f64) -> f64 {
        let e = (2.0 * t).exp();
        -2.0 * e / (e - 3.0)
    }

    #[test]
    fn halton_sequence() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert!((radical_inverse(5, 3) - 7.0 / 9.0).abs() < 1e-15);
        assert_eq!(first_primes(5), vec![2, 3, 5, 7, 11]);
    }

    #[test]
    fn lipschitz_of_linear_model() {
        let ts = TimeSeries::sample(|t| vec![t.exp()], 0.0, 1.0, 0.1).unwrap();
        let model = parse_model("a1*x1", 1, 1).unwrap();
        let est = estimate_lipschitz(&model, &[2.0], &ts).unwrap();
        assert!((est.value - 2.2).abs() < 1e-12);
        assert!(est.method.contains("N=10000"));
    }

    #[test]
    fn lipschitz_of_constant_model() {
        let ts = TimeSeries::sample(|t| vec![t], 0.0, 1.0, 0.1).unwrap();
        let model = parse_model("a1+0*x1", 1, 1).unwrap();
        assert_eq!(estimate_lipschitz(&model, &[3.0], &ts).unwrap().value, 0.0);
    }

    #[test]
    fn lipschitz_matches_dense_scan() {
        let ts = TimeSeries::sample(|t| vec![closed_form(t)], 1.0, 2.0, 0.1).unwrap();
        let model = parse_model("a1*x1^2+a2*x1", 2, 1).unwrap();
        let est = estimate_lipschitz(&model, &[1.0, 2.0], &ts).unwrap();
        // Independent oracle: the Jacobian is (0, 2x + 2); scan x over the same box.
        let (lo, hi) = (est.box_lower[1], est.box_upper[1]);
        let n = 1_000_000;
        let scan = (0..=n)
            .map(|k| lo + (hi - lo) * k as f64 / n as f64)
            .map(|x| (2.0 * x + 2.0).abs())
            .fold(0.0, f64::max);
        let oracle = 1.1 * scan;
        assert!(est.value <= oracle * (1.0 + 1e-12));
        assert!(est.value >= oracle * (1.0 - 1e-3), "{} vs {}", est.value, oracle);
    }

    #[test]
    fn lipschitz_reports_non_finite_points() {
        let ts = TimeSeries::sample(|t| vec![t - 0.5], 0.0, 1.0, 0.1).unwrap();
        let model = parse_model("sqrt(x1)", 0, 1).unwrap();
        assert!(matches!(
            estimate_lipschitz(&model, &[], &ts),
            Err(CertifyError::NonFiniteJacobian { .. })
        ));
    }

    #[test]
    fn lipschitz_refuses_overflowing_estimates() {
        let ts = TimeSeries::sample(|t| vec![closed_form(t)], 0.0, 1.0, 1e-3).unwrap();
        let model = parse_model("a1*x1^2+a2*x1", 2, 1).unwrap();
        assert!(matches!(
            estimate_lipschitz(&model, &[1.0, 2.0], &ts),
            Err(CertifyError::Unusable { .. })
        ));
    }

    #[test]
    fn zero_objective_bound_starts_at_zero() {
        let cert = error_certificate(0.0, &stats(0.1, 3.0, 2.0), 4.0).unwrap();
        assert_eq!(cert.bound(2.0), 0.0);
        assert!(cert.bound(2.5) > 0.0);
        let flat = error_certificate(0.0, &stats(0.1, 3.0, 2.0), 0.0).unwrap();
        for t in sample_times(2.0, 3.0, 11) {
            assert_eq!(flat.bound(t), 0.0);
        }
    }

    #[test]
    fn direct_formula_example() {
        let cert = error_certificate(1e-12, &stats(0.1, 2.0, 0.0), 6.0).unwrap();
        let expected = 0.1 * (1e-6 * 0.1 + (1.0 + (1e-6 + 2.0f64).powi(2)).sqrt() * (3f64.exp() - 1.0));
        assert!((cert.bound(0.5) - expected).abs() <= 1e-14 * expected);
        assert!((cert.bound(0.0) - 1e-6 * 0.01).abs() < 1e-20);
        assert!((cert.big_m - 6.0 * 0.1 * (1.0 + cert.f_m * cert.f_m).sqrt()).abs() < 1e-14);
        assert!((cert.initial_term() + cert.growth_term(0.5) - cert.bound(0.5)).abs() < 1e-12);
    }

    #[test]
    fn certificate_rejects_bad_input() {
        assert!(matches!(
            error_certificate(-1.0, &stats(0.1, 1.0, 0.0), 1.0),
            Err(CertifyError::NegativeInput { name: "m", .. })
        ));
        assert!(matches!(
            error_certificate(0.0, &stats(0.1, 1.0, 0.0), f64::NAN),
            Err(CertifyError::NegativeInput { name: "L", .. })
        ));
        assert!(matches!(
            error_certificate(0.0, &stats(0.1, 1.0, 0.0), 1e6),
            Err(CertifyError::NonFiniteBound(_))
        ));
    }

    #[test]
    fn comparison_of_identical_certificates() {
        let cert = error_certificate(1e-4, &stats(0.1, 2.0, 1.0), 3.0).unwrap();
        let cmp = compare_models(&cert, &cert).unwrap();
        for t in sample_times(1.0, 2.0, 21) {
            assert!((cmp.bound(t) - 2.0 * cert.bound(t)).abs() <= 1e-14 * cmp.bound(t).max(1.0));
        }
        assert!((cmp.bound(1.0) - 2.0 * 1e-2 * 0.01).abs() < 1e-18);
    }

    #[test]
    fn comparison_rejects_different_data() {
        let a = error_certificate(0.0, &stats(0.1, 2.0, 1.0), 3.0).unwrap();
        let b = error_certificate(0.0, &stats(0.2, 2.0, 1.0), 3.0).unwrap();
        assert!(matches!(compare_models(&a, &b), Err(CertifyError::MismatchedSeries)));
    }

    #[test]
    fn uniform_cap_dominates() {
        let f = error_certificate(1e-6, &stats(0.1, 2.0, 0.0), 3.0).unwrap();
        let h = error_certificate(4e-6, &stats(0.1, 2.0, 0.0), 2.5).unwrap();
        let cmp = compare_models(&f, &h).unwrap();
        let cap = cmp.uniform_cap(3e-3, 3.5).unwrap();
        for t in sample_times(0.0, 1.0, 51) {
            assert!(cap.bound(t) >= cmp.bound(t));
        }
        assert!(cmp.uniform_cap(1e-3, 3.5).is_err());
        assert!(cmp.uniform_cap(3e-3, 3.0).is_err());
    }

    #[test]
    fn noise_with_zero_epsilon_reuses_center() {
        let ts = TimeSeries::sample(|t| vec![2.0 * (0.5 * t).exp()], 0.0, 1.0, 0.1).unwrap();
        let model = parse_model("a1*x1", 1, 1).unwrap();
        let opts = DescentOptions::default();
        let env = noise_analysis(&model, &ts, 0.0, &opts, &[0.0]).unwrap();
        assert_eq!(env.lower, env.center);
        assert_eq!(env.upper, env.center);
        for t in sample_times(0.0, 1.0, 11) {
            assert!((env.envelope(t) - 4.0 * env.center.certificate.bound(t)).abs() < 1e-15);
        }
    }

    #[test]
    fn noise_envelope_is_at_least_two_epsilon() {
        let ts = TimeSeries::sample(|t| vec![2.0 * (0.5 * t).exp()], 0.0, 1.0, 0.1).unwrap();
        let model = parse_model("a1*x1", 1, 1).unwrap();
        let env = noise_analysis(&model, &ts, 0.01, &DescentOptions::default(), &[0.0]).unwrap();
        let mut previous = 0.0;
        for t in sample_times(0.0, 1.0, 11) {
            let e = env.envelope(t);
            assert!(e >= 0.02);
            assert!(e >= previous);
            previous = e;
        }
        assert!(env.upper.distance_from_center > 0.0);
    }

    #[test]
    fn bound_csv() {
        let cert = error_certificate(0.0, &stats(0.1, 1.0, 0.0), 1.0).unwrap();
        let mut out = Vec::new();
        write_bound_csv(&mut out, &[0.0, 0.5], |t| cert.bound(t)).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().next(), Some("t,bound"));
        assert_eq!(text.lines().count(), 3);
    }
}
