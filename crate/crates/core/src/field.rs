//! Spatial quadratic models of wind and current.
//!
//! Each output component `c` of a field is `½ pᵀ Q_c p + L_c p + μ_c` over the
//! local ENU position `p`. Wind and current together carry 24 parameters.

use std::io::Read;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const MAX_WIND_SPEED: f64 = 60.0;
pub const MAX_CURRENT_SPEED: f64 = 5.0;
/// Regressor condition number above which a fit is flagged.
pub const CONDITION_WARNING: f64 = 1e10;

const HEADER: [&str; 6] = ["x_l", "y_l", "vx_wind", "vy_wind", "vx_current", "vy_current"];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FieldError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: {field} magnitude {value} exceeds the {limit} m/s sanity bound")]
    OutOfBounds { line: u64, field: &'static str, value: f64, limit: f64 },
    #[error("need at least 6 samples for a quadratic fit, got {got}")]
    InsufficientData { got: usize },
    #[error("sample positions do not determine a quadratic (regressor rank {rank} of 6)")]
    RankDeficient { rank: usize },
    #[error("error statistics need at least one sample")]
    NoSamples,
    #[error("field matrix {name} is not symmetric")]
    Asymmetric { name: &'static str },
    #[error("field parameter {name} is not finite")]
    NonFinite { name: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvSample {
    pub x_l: f64,
    pub y_l: f64,
    pub vx_wind: f64,
    pub vy_wind: f64,
    pub vx_current: f64,
    pub vy_current: f64,
}

impl EnvSample {
    pub fn position(&self) -> [f64; 2] {
        [self.x_l, self.y_l]
    }

    pub fn velocity(&self, which: FieldKind) -> [f64; 2] {
        match which {
            FieldKind::Wind => [self.vx_wind, self.vy_wind],
            FieldKind::Current => [self.vx_current, self.vy_current],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Wind,
    Current,
}

/// Reads the sample CSV. The header row is optional; line numbers in errors
/// count every physical row, header included.
pub fn parse_samples<R: Read>(input: R) -> Result<Vec<EnvSample>, FieldError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let mut samples = Vec::new();
    let mut seen_header = false;
    for record in reader.records() {
        let record = record.map_err(|e| FieldError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        if !seen_header {
            seen_header = true;
            if record.iter().eq(HEADER.iter().copied()) {
                continue;
            }
            // A first row that is not numeric must be the header.
            if record.get(0).is_some_and(|c| c.parse::<f64>().is_err()) {
                return Err(FieldError::Parse {
                    line,
                    message: format!("expected header `{}`", HEADER.join(",")),
                });
            }
        }
        if record.len() != 6 {
            return Err(FieldError::Parse { line, message: format!("expected 6 columns, found {}", record.len()) });
        }
        let mut v = [0.0; 6];
        for (i, cell) in record.iter().enumerate() {
            let x: f64 = cell.parse().map_err(|_| FieldError::Parse {
                line,
                message: format!("column {} is not a number: {cell:?}", HEADER[i]),
            })?;
            if !x.is_finite() {
                return Err(FieldError::Parse { line, message: format!("column {} is not finite", HEADER[i]) });
            }
            v[i] = x;
        }
        let wind = v[2].hypot(v[3]);
        if wind > MAX_WIND_SPEED {
            return Err(FieldError::OutOfBounds { line, field: "wind", value: wind, limit: MAX_WIND_SPEED });
        }
        let current = v[4].hypot(v[5]);
        if current > MAX_CURRENT_SPEED {
            return Err(FieldError::OutOfBounds { line, field: "current", value: current, limit: MAX_CURRENT_SPEED });
        }
        samples.push(EnvSample { x_l: v[0], y_l: v[1], vx_wind: v[2], vy_wind: v[3], vx_current: v[4], vy_current: v[5] });
    }
    Ok(samples)
}

/// Value, Jacobian (row per component) and per-component Hessians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldEval {
    pub value: [f64; 2],
    pub jacobian: [[f64; 2]; 2],
    pub hessians: [[[f64; 2]; 2]; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawField", into = "RawField")]
pub struct QuadraticField2D {
    q: [[[f64; 2]; 2]; 2],
    l: [[f64; 2]; 2],
    mu: [f64; 2],
}

#[derive(Serialize, Deserialize)]
#[allow(non_snake_case)]
struct RawField {
    Qx: [[f64; 2]; 2],
    Qy: [[f64; 2]; 2],
    Lx: [f64; 2],
    Ly: [f64; 2],
    mux: f64,
    muy: f64,
}

impl TryFrom<RawField> for QuadraticField2D {
    type Error = FieldError;

    fn try_from(raw: RawField) -> Result<Self, FieldError> {
        let all = [raw.Qx[0][0], raw.Qx[0][1], raw.Qx[1][0], raw.Qx[1][1]]
            .into_iter()
            .chain([raw.Qy[0][0], raw.Qy[0][1], raw.Qy[1][0], raw.Qy[1][1]])
            .chain(raw.Lx)
            .chain(raw.Ly)
            .chain([raw.mux, raw.muy]);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(FieldError::NonFinite { name: "field" });
        }
        for (name, q) in [("Qx", raw.Qx), ("Qy", raw.Qy)] {
            let scale = q[0][1].abs().max(q[1][0].abs()).max(f64::MIN_POSITIVE);
            if (q[0][1] - q[1][0]).abs() > 1e-12 * scale {
                return Err(FieldError::Asymmetric { name });
            }
        }
        Ok(QuadraticField2D { q: [raw.Qx, raw.Qy], l: [raw.Lx, raw.Ly], mu: [raw.mux, raw.muy] })
    }
}

impl From<QuadraticField2D> for RawField {
    fn from(f: QuadraticField2D) -> Self {
        RawField { Qx: f.q[0], Qy: f.q[1], Lx: f.l[0], Ly: f.l[1], mux: f.mu[0], muy: f.mu[1] }
    }
}

impl Default for QuadraticField2D {
    fn default() -> Self {
        Self::zero()
    }
}

impl QuadraticField2D {
    pub fn zero() -> Self {
        QuadraticField2D { q: [[[0.0; 2]; 2]; 2], l: [[0.0; 2]; 2], mu: [0.0; 2] }
    }

    pub fn uniform(value: [f64; 2]) -> Self {
        QuadraticField2D { mu: value, ..Self::zero() }
    }

    /// Off-diagonal entries of `q` are averaged, so the stored matrices are
    /// always symmetric.
    pub fn new(q: [[[f64; 2]; 2]; 2], l: [[f64; 2]; 2], mu: [f64; 2]) -> Self {
        let mut q = q;
        for qc in &mut q {
            let off = 0.5 * (qc[0][1] + qc[1][0]);
            qc[0][1] = off;
            qc[1][0] = off;
        }
        QuadraticField2D { q, l, mu }
    }

    /// Parameters in the order `Q_x(00,01,11), L_x, μ_x, Q_y(00,01,11), L_y, μ_y`.
    pub fn parameters(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for c in 0..2 {
            let o = 6 * c;
            out[o] = self.q[c][0][0];
            out[o + 1] = self.q[c][0][1];
            out[o + 2] = self.q[c][1][1];
            out[o + 3] = self.l[c][0];
            out[o + 4] = self.l[c][1];
            out[o + 5] = self.mu[c];
        }
        out
    }

    pub fn from_parameters(p: &[f64; 12]) -> Self {
        let mut f = Self::zero();
        for c in 0..2 {
            let o = 6 * c;
            f.q[c] = [[p[o], p[o + 1]], [p[o + 1], p[o + 2]]];
            f.l[c] = [p[o + 3], p[o + 4]];
            f.mu[c] = p[o + 5];
        }
        f
    }

    pub fn q(&self, component: usize) -> [[f64; 2]; 2] {
        self.q[component]
    }

    pub fn l(&self, component: usize) -> [f64; 2] {
        self.l[component]
    }

    pub fn mu(&self) -> [f64; 2] {
        self.mu
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let p = self.parameters().map(|v| v * factor);
        Self::from_parameters(&p)
    }

    pub fn value(&self, p: [f64; 2]) -> [f64; 2] {
        let mut v = [0.0; 2];
        for (c, out) in v.iter_mut().enumerate() {
            let q = &self.q[c];
            let qp = [q[0][0] * p[0] + q[0][1] * p[1], q[1][0] * p[0] + q[1][1] * p[1]];
            *out = 0.5 * (p[0] * qp[0] + p[1] * qp[1]) + self.l[c][0] * p[0] + self.l[c][1] * p[1] + self.mu[c];
        }
        v
    }

    pub fn eval(&self, p: [f64; 2]) -> FieldEval {
        let mut jacobian = [[0.0; 2]; 2];
        for (c, row) in jacobian.iter_mut().enumerate() {
            let q = &self.q[c];
            row[0] = p[0] * q[0][0] + p[1] * q[1][0] + self.l[c][0];
            row[1] = p[0] * q[0][1] + p[1] * q[1][1] + self.l[c][1];
        }
        FieldEval { value: self.value(p), jacobian, hessians: self.q }
    }
}

/// Free-function form of [`QuadraticField2D::eval`].
pub fn eval_field(field: &QuadraticField2D, p: [f64; 2]) -> FieldEval {
    field.eval(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl BoundingBox {
    pub fn of_samples(samples: &[EnvSample]) -> Option<Self> {
        let first = samples.first()?;
        let mut b = BoundingBox { min: first.position(), max: first.position() };
        for s in samples {
            let p = s.position();
            for i in 0..2 {
                b.min[i] = b.min[i].min(p[i]);
                b.max[i] = b.max[i].max(p[i]);
            }
        }
        Some(b)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0..2).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn is_degenerate(&self) -> bool {
        (0..2).any(|i| !(self.max[i] > self.min[i]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvModel {
    pub wind: QuadraticField2D,
    pub current: QuadraticField2D,
    /// RFC 3339 time stamp set by whoever performed the fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitted_at: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounding_box: Option<BoundingBox>,
}

impl Default for EnvModel {
    fn default() -> Self {
        EnvModel::calm()
    }
}

impl EnvModel {
    pub const PARAMETER_COUNT: usize = 24;

    pub fn calm() -> Self {
        EnvModel { wind: QuadraticField2D::zero(), current: QuadraticField2D::zero(), fitted_at: None, bounding_box: None }
    }

    pub fn new(wind: QuadraticField2D, current: QuadraticField2D) -> Self {
        EnvModel { wind, current, fitted_at: None, bounding_box: None }
    }

    /// Fits both fields on the same samples.
    pub fn fit(samples: &[EnvSample]) -> Result<Self, FieldError> {
        let wind = fit_field(samples, FieldKind::Wind)?;
        let current = fit_field(samples, FieldKind::Current)?;
        Ok(EnvModel { wind, current, fitted_at: None, bounding_box: BoundingBox::of_samples(samples) })
    }

    pub fn field(&self, which: FieldKind) -> &QuadraticField2D {
        match which {
            FieldKind::Wind => &self.wind,
            FieldKind::Current => &self.current,
        }
    }

    pub fn parameters(&self) -> [f64; 24] {
        let mut out = [0.0; 24];
        out[..12].copy_from_slice(&self.wind.parameters());
        out[12..].copy_from_slice(&self.current.parameters());
        out
    }

    /// Both fields multiplied by `factor`; the bounding box is kept.
    pub fn scaled(&self, factor: f64) -> Self {
        EnvModel { wind: self.wind.scaled(factor), current: self.current.scaled(factor), ..self.clone() }
    }

    /// True when `p` lies outside the positions the model was fitted on.
    pub fn extrapolates(&self, p: [f64; 2]) -> bool {
        self.bounding_box.is_some_and(|b| !b.contains(p))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldFit {
    pub field: QuadraticField2D,
    pub condition_number: f64,
}

impl FieldFit {
    pub fn ill_conditioned(&self) -> bool {
        self.condition_number > CONDITION_WARNING
    }
}

pub fn fit_field(samples: &[EnvSample], which: FieldKind) -> Result<QuadraticField2D, FieldError> {
    fit_field_report(samples, which).map(|f| f.field)
}

/// Unweighted least squares, one independent 6-parameter problem per
/// component. Positions are centered and scaled before building the
/// regressor; the result is mapped back to raw coordinates.
pub fn fit_field_report(samples: &[EnvSample], which: FieldKind) -> Result<FieldFit, FieldError> {
    let n = samples.len();
    if n < 6 {
        return Err(FieldError::InsufficientData { got: n });
    }
    let mut mean = [0.0; 2];
    for s in samples {
        mean[0] += s.x_l / n as f64;
        mean[1] += s.y_l / n as f64;
    }
    let spread = samples
        .iter()
        .map(|s| (s.x_l - mean[0]).abs().max((s.y_l - mean[1]).abs()))
        .fold(0.0_f64, f64::max);
    let scale = if spread > 0.0 { spread } else { 1.0 };

    let mut a = DMatrix::<f64>::zeros(n, 6);
    let mut b = DMatrix::<f64>::zeros(n, 2);
    for (i, s) in samples.iter().enumerate() {
        let dx = (s.x_l - mean[0]) / scale;
        let dy = (s.y_l - mean[1]) / scale;
        let row = [0.5 * dx * dx, dx * dy, 0.5 * dy * dy, dx, dy, 1.0];
        for (j, v) in row.into_iter().enumerate() {
            a[(i, j)] = v;
        }
        let v = s.velocity(which);
        b[(i, 0)] = v[0];
        b[(i, 1)] = v[1];
    }

    let svd = a.svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let tol = smax * n.max(6) as f64 * f64::EPSILON;
    let rank = sv.iter().filter(|&&s| s > tol).count();
    if rank < 6 {
        return Err(FieldError::RankDeficient { rank });
    }
    let condition_number = smax / sv.min();
    if condition_number > CONDITION_WARNING {
        warn!("{which:?} fit regressor is ill-conditioned (condition number {condition_number:.3e})");
    }
    let coef = svd.solve(&b, 0.0).map_err(|_| FieldError::RankDeficient { rank })?;

    let mut q = [[[0.0; 2]; 2]; 2];
    let mut l = [[0.0; 2]; 2];
    let mut mu = [0.0; 2];
    for c in 0..2 {
        let k: DVector<f64> = coef.column(c).into_owned();
        let s2 = scale * scale;
        let qc = [[k[0] / s2, k[1] / s2], [k[1] / s2, k[2] / s2]];
        let lc = [k[3] / scale, k[4] / scale];
        // v = ½(p−m)ᵀQ(p−m) + L(p−m) + μ, expanded around the origin.
        let qm = [qc[0][0] * mean[0] + qc[0][1] * mean[1], qc[1][0] * mean[0] + qc[1][1] * mean[1]];
        q[c] = qc;
        l[c] = [lc[0] - qm[0], lc[1] - qm[1]];
        mu[c] = k[5] - (lc[0] * mean[0] + lc[1] * mean[1]) + 0.5 * (mean[0] * qm[0] + mean[1] * qm[1]);
    }
    Ok(FieldFit { field: QuadraticField2D::new(q, l, mu), condition_number })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldErrorStats {
    pub max_abs_error: f64,
    pub rmse: f64,
    pub sample_count: usize,
    /// Euclidean residual norm per sample, sorted ascending.
    errors: Vec<f64>,
}

impl FieldErrorStats {
    /// Share of samples whose residual norm is strictly below `threshold`.
    pub fn fraction_below(&self, threshold: f64) -> f64 {
        if threshold == f64::INFINITY {
            return 1.0;
        }
        let k = self.errors.partition_point(|&e| e < threshold);
        k as f64 / self.sample_count as f64
    }

    pub fn errors(&self) -> &[f64] {
        &self.errors
    }
}

pub fn error_stats(field: &QuadraticField2D, samples: &[EnvSample], which: FieldKind) -> Result<FieldErrorStats, FieldError> {
    if samples.is_empty() {
        return Err(FieldError::NoSamples);
    }
    let mut errors: Vec<f64> = samples
        .iter()
        .map(|s| {
            let m = field.value(s.position());
            let v = s.velocity(which);
            (m[0] - v[0]).hypot(m[1] - v[1])
        })
        .collect();
    errors.sort_by(f64::total_cmp);
    let max_abs_error = errors.last().copied().unwrap_or(0.0);
    let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt();
    Ok(FieldErrorStats { max_abs_error, rmse, sample_count: errors.len(), errors })
}

/// Residual thresholds, m/s, reported by [`fit_env_report`].
pub const REPORT_THRESHOLDS: [f64; 4] = [0.05, 0.1, 0.5, 1.0];
pub const FIT_REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub condition_number: f64,
    pub max_abs_error: f64,
    pub rmse: f64,
    /// `[threshold, fraction_below(threshold)]` for each of [`REPORT_THRESHOLDS`].
    pub fraction_below: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvFitReport {
    pub schema_version: u32,
    pub sample_count: usize,
    pub wind: FitSummary,
    pub current: FitSummary,
}

/// Fits both fields and summarizes their residuals on the same samples.
pub fn fit_env_report(samples: &[EnvSample]) -> Result<(EnvModel, EnvFitReport), FieldError> {
    let summary = |which| -> Result<(QuadraticField2D, FitSummary), FieldError> {
        let fit = fit_field_report(samples, which)?;
        let stats = error_stats(&fit.field, samples, which)?;
        let fraction_below = REPORT_THRESHOLDS.iter().map(|&t| [t, stats.fraction_below(t)]).collect();
        Ok((
            fit.field,
            FitSummary { condition_number: fit.condition_number, max_abs_error: stats.max_abs_error, rmse: stats.rmse, fraction_below },
        ))
    };
    let (wind, wind_summary) = summary(FieldKind::Wind)?;
    let (current, current_summary) = summary(FieldKind::Current)?;
    let model = EnvModel { wind, current, fitted_at: None, bounding_box: BoundingBox::of_samples(samples) };
    let report = EnvFitReport { schema_version: FIT_REPORT_SCHEMA_VERSION, sample_count: samples.len(), wind: wind_summary, current: current_summary };
    Ok((model, report))
}
