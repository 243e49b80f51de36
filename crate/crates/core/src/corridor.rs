//! Convex operating corridor and the actuator force bound.

use serde::{Deserialize, Serialize};

use crate::model::{ControlInput, FerryParams, State};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CorridorError {
    #[error("a corridor needs at least 3 {what}, got {got}")]
    TooFew { what: &'static str, got: usize },
    #[error("vertex {index} makes the polygon non-convex or degenerate")]
    NotConvex { index: usize },
    #[error("vertices are ordered clockwise; counterclockwise order is required")]
    Clockwise,
    #[error("half-plane {index} has a zero or non-finite normal")]
    BadNormal { index: usize },
    #[error("the half-planes do not bound a region")]
    Unbounded,
    #[error("the half-planes have no common interior")]
    Empty,
    #[error("corridor JSON needs exactly one of `vertices` or `halfplanes`")]
    Ambiguous,
    #[error("force limit must be positive, got {0}")]
    BadForceLimit(f64),
}

/// `s·x + q·y + c ≤ 0` with `‖(s, q)‖ = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    pub s: f64,
    pub q: f64,
    pub c: f64,
}

impl HalfPlane {
    pub fn eval(&self, p: [f64; 2]) -> f64 {
        self.s * p[0] + self.q * p[1] + self.c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CorridorJson", into = "CorridorJson")]
pub struct Corridor {
    halfplanes: Vec<HalfPlane>,
    /// Vertices in counterclockwise order.
    vertices: Vec<[f64; 2]>,
    from_vertices: bool,
}

#[derive(Serialize, Deserialize)]
struct CorridorJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vertices: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    halfplanes: Option<Vec<[f64; 3]>>,
}

impl TryFrom<CorridorJson> for Corridor {
    type Error = CorridorError;

    fn try_from(j: CorridorJson) -> Result<Self, CorridorError> {
        match (j.vertices, j.halfplanes) {
            (Some(v), None) => Corridor::from_polygon(&v),
            (None, Some(h)) => Corridor::from_halfplanes(&h),
            _ => Err(CorridorError::Ambiguous),
        }
    }
}

impl From<Corridor> for CorridorJson {
    fn from(c: Corridor) -> Self {
        if c.from_vertices {
            CorridorJson { vertices: Some(c.vertices), halfplanes: None }
        } else {
            CorridorJson { vertices: None, halfplanes: Some(c.halfplanes.iter().map(|h| [h.s, h.q, h.c]).collect()) }
        }
    }
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

impl Corridor {
    /// One half-plane per edge of a strictly convex counterclockwise polygon.
    pub fn from_polygon(vertices: &[[f64; 2]]) -> Result<Self, CorridorError> {
        let n = vertices.len();
        if n < 3 {
            return Err(CorridorError::TooFew { what: "vertices", got: n });
        }
        let scale = vertices.iter().flat_map(|v| v.iter()).fold(1.0_f64, |m, x| m.max(x.abs()));
        let tol = 1e-12 * scale * scale;
        let turns: Vec<f64> = (0..n).map(|i| cross(vertices[(i + n - 1) % n], vertices[i], vertices[(i + 1) % n])).collect();
        if turns.iter().all(|t| *t < -tol) {
            return Err(CorridorError::Clockwise);
        }
        if let Some(index) = turns.iter().position(|t| !(*t > tol)) {
            return Err(CorridorError::NotConvex { index });
        }
        // A star-shaped winding (turning more than once) also has all left turns.
        let area2: f64 = (0..n).map(|i| cross([0.0, 0.0], vertices[i], vertices[(i + 1) % n])).sum();
        let mut angle = 0.0;
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            let e1 = [b[0] - a[0], b[1] - a[1]];
            let e2 = [c[0] - b[0], c[1] - b[1]];
            angle += (e1[0] * e2[1] - e1[1] * e2[0]).atan2(e1[0] * e2[0] + e1[1] * e2[1]);
        }
        if area2 <= 0.0 || (angle - 2.0 * std::f64::consts::PI).abs() > 1e-6 {
            return Err(CorridorError::NotConvex { index: 0 });
        }
        let halfplanes = (0..n)
            .map(|i| {
                let a = vertices[i];
                let b = vertices[(i + 1) % n];
                let d = [b[0] - a[0], b[1] - a[1]];
                let len = d[0].hypot(d[1]);
                let (s, q) = (d[1] / len, -d[0] / len);
                HalfPlane { s, q, c: -(s * a[0] + q * a[1]) }
            })
            .collect();
        Ok(Corridor { halfplanes, vertices: vertices.to_vec(), from_vertices: true })
    }

    /// Normalizes each `[s, q, c]` row and checks the region is bounded with
    /// non-empty interior.
    pub fn from_halfplanes(rows: &[[f64; 3]]) -> Result<Self, CorridorError> {
        if rows.len() < 3 {
            return Err(CorridorError::TooFew { what: "half-planes", got: rows.len() });
        }
        let mut halfplanes = Vec::with_capacity(rows.len());
        for (index, r) in rows.iter().enumerate() {
            let norm = r[0].hypot(r[1]);
            if !(norm > 0.0 && norm.is_finite() && r[2].is_finite()) {
                return Err(CorridorError::BadNormal { index });
            }
            halfplanes.push(HalfPlane { s: r[0] / norm, q: r[1] / norm, c: r[2] / norm });
        }
        // A non-trivial recession cone has an extreme ray along some boundary line.
        for h in &halfplanes {
            for d in [[-h.q, h.s], [h.q, -h.s]] {
                if halfplanes.iter().all(|g| g.s * d[0] + g.q * d[1] <= 1e-12) {
                    return Err(CorridorError::Unbounded);
                }
            }
        }
        let mut vertices = Vec::new();
        for i in 0..halfplanes.len() {
            for j in i + 1..halfplanes.len() {
                let (a, b) = (halfplanes[i], halfplanes[j]);
                let det = a.s * b.q - a.q * b.s;
                if det.abs() < 1e-12 {
                    continue;
                }
                let p = [(-a.c * b.q + b.c * a.q) / det, (-a.s * b.c + b.s * a.c) / det];
                let tol = 1e-9 * (1.0 + p[0].abs().max(p[1].abs()));
                if halfplanes.iter().all(|h| h.eval(p) <= tol) {
                    vertices.push(p);
                }
            }
        }
        if vertices.is_empty() {
            return Err(CorridorError::Empty);
        }
        let centre = [
            vertices.iter().map(|v| v[0]).sum::<f64>() / vertices.len() as f64,
            vertices.iter().map(|v| v[1]).sum::<f64>() / vertices.len() as f64,
        ];
        let scale = 1.0 + centre[0].abs().max(centre[1].abs());
        if halfplanes.iter().any(|h| h.eval(centre) > -1e-9 * scale) {
            return Err(CorridorError::Empty);
        }
        vertices.sort_by(|a, b| {
            let ta = (a[1] - centre[1]).atan2(a[0] - centre[0]);
            let tb = (b[1] - centre[1]).atan2(b[0] - centre[0]);
            ta.total_cmp(&tb)
        });
        vertices.dedup_by(|a, b| (a[0] - b[0]).abs() < 1e-9 * scale && (a[1] - b[1]).abs() < 1e-9 * scale);
        Ok(Corridor { halfplanes, vertices, from_vertices: false })
    }

    pub fn halfplanes(&self) -> &[HalfPlane] {
        &self.halfplanes
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.halfplanes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.halfplanes.is_empty()
    }

    /// Constraint values at `p`; all non-positive means inside.
    pub fn values(&self, p: [f64; 2]) -> Vec<f64> {
        self.halfplanes.iter().map(|h| h.eval(p)).collect()
    }

    /// Distance to the nearest edge line, positive inside.
    pub fn margin(&self, p: [f64; 2]) -> f64 {
        -self.halfplanes.iter().map(|h| h.eval(p)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.margin(p) >= 0.0
    }

    /// Same region after rotating by `theta` about the origin and then
    /// translating by `shift`.
    pub fn transformed(&self, theta: f64, shift: [f64; 2]) -> Corridor {
        let (s, c) = theta.sin_cos();
        let map = |p: [f64; 2]| [c * p[0] - s * p[1] + shift[0], s * p[0] + c * p[1] + shift[1]];
        if self.from_vertices {
            let v: Vec<[f64; 2]> = self.vertices.iter().map(|&p| map(p)).collect();
            Corridor::from_polygon(&v).expect("rigid motions preserve convexity")
        } else {
            let rows: Vec<[f64; 3]> = self
                .halfplanes
                .iter()
                .map(|h| {
                    let n = [c * h.s - s * h.q, s * h.s + c * h.q];
                    [n[0], n[1], h.c - n[0] * shift[0] - n[1] * shift[1]]
                })
                .collect();
            Corridor::from_halfplanes(&rows).expect("rigid motions preserve boundedness")
        }
    }
}

/// Which reading of the actuator bound to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceLimitPreset {
    /// Both thrusters at full force, `2·F_AT_max`.
    #[default]
    CombinedThrusters,
    /// `F_AT_max` on the combined force.
    SingleThruster,
}

impl ForceLimitPreset {
    pub fn limit(&self, params: &FerryParams) -> f64 {
        match self {
            ForceLimitPreset::CombinedThrusters => 2.0 * params.F_AT_max,
            ForceLimitPreset::SingleThruster => params.F_AT_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathConstraintSet {
    pub corridor: Corridor,
    pub f_limit: f64,
}

impl PathConstraintSet {
    pub fn new(corridor: Corridor, f_limit: f64) -> Result<Self, CorridorError> {
        if !(f_limit > 0.0 && f_limit.is_finite()) {
            return Err(CorridorError::BadForceLimit(f_limit));
        }
        Ok(PathConstraintSet { corridor, f_limit })
    }
}

/// Corridor values followed by `X_a² + Y_a² − F_limit²`.
pub fn evaluate_path_constraints(set: &PathConstraintSet, state: &State, input: &ControlInput) -> Vec<f64> {
    let mut out = set.corridor.values(state.position());
    out.push(input.x_a * input.x_a + input.y_a * input.y_a - set.f_limit * set.f_limit);
    out
}
