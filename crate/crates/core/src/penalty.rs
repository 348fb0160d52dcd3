//! Convex penalties: evaluation, Euclidean proximal maps, subgradient
//! distances, conjugate polyhedra of sublinear penalties and limit-penalty
//! objects.
//!
//! The tuning parameter λ never lives inside a [`Penalty`]; every operation
//! that needs it takes it as an argument, so one penalty value serves a whole
//! tuning grid.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_len, SymMatrix, WeightMatrix};

/// Auxiliary coordinates with magnitude below this get an infinite adaptive
/// weight, pinning the coordinate to zero.
pub const ADAPTIVE_ZERO_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Penalty {
    /// `½‖β‖²₂`
    Ridge,
    /// `‖β‖₁`
    Lasso,
    /// `Σ w_j |β_j|`; `w_j = +∞` (JSON `null`) forces `β_j = 0`.
    AdaptiveLasso {
        #[serde(with = "ext_real::pos_inf_as_null")]
        weights: Vec<f64>,
    },
    /// `Σ_g ‖β_g‖₂` over a partition of the coordinates (0-based indices).
    GroupLasso { groups: Vec<Vec<usize>> },
    /// `w‖β‖₁ + ((1−w)/2)‖β‖²₂` with `w ∈ (0, 1)`.
    ElasticNet { w: f64 },
    /// Indicator of `[lower, upper]`; JSON `null` means an infinite bound.
    #[serde(rename = "box")]
    BoxIndicator {
        #[serde(with = "ext_real::neg_inf_as_null")]
        lower: Vec<f64>,
        #[serde(with = "ext_real::pos_inf_as_null")]
        upper: Vec<f64>,
    },
}

/// Deserialization mirror of [`Penalty`]. Internally tagged unit variants
/// silently accept extra keys, so those are rejected by hand first.
#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum PenaltyRepr {
    Ridge,
    Lasso,
    AdaptiveLasso {
        #[serde(with = "ext_real::pos_inf_as_null")]
        weights: Vec<f64>,
    },
    GroupLasso {
        groups: Vec<Vec<usize>>,
    },
    ElasticNet {
        w: f64,
    },
    #[serde(rename = "box")]
    BoxIndicator {
        #[serde(with = "ext_real::neg_inf_as_null")]
        lower: Vec<f64>,
        #[serde(with = "ext_real::pos_inf_as_null")]
        upper: Vec<f64>,
    },
}

impl<'de> Deserialize<'de> for Penalty {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let map = serde_json::Map::<String, serde_json::Value>::deserialize(d)?;
        let unit = matches!(
            map.get("kind").and_then(|k| k.as_str()),
            Some("ridge") | Some("lasso")
        );
        if unit {
            if let Some(extra) = map.keys().find(|k| k.as_str() != "kind") {
                return Err(D::Error::custom(format!("unknown field `{extra}`")));
            }
        }
        let repr: PenaltyRepr =
            serde_json::from_value(serde_json::Value::Object(map)).map_err(D::Error::custom)?;
        Ok(match repr {
            PenaltyRepr::Ridge => Penalty::Ridge,
            PenaltyRepr::Lasso => Penalty::Lasso,
            PenaltyRepr::AdaptiveLasso { weights } => Penalty::AdaptiveLasso { weights },
            PenaltyRepr::GroupLasso { groups } => Penalty::GroupLasso { groups },
            PenaltyRepr::ElasticNet { w } => Penalty::ElasticNet { w },
            PenaltyRepr::BoxIndicator { lower, upper } => Penalty::BoxIndicator { lower, upper },
        })
    }
}

impl Penalty {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Penalty::Ridge => "ridge",
            Penalty::Lasso => "lasso",
            Penalty::AdaptiveLasso { .. } => "adaptive_lasso",
            Penalty::GroupLasso { .. } => "group_lasso",
            Penalty::ElasticNet { .. } => "elastic_net",
            Penalty::BoxIndicator { .. } => "box",
        }
    }

    /// Adaptive Lasso penalty with weights `1/|aux_j|`.
    pub fn adaptive_from(aux: &DVector<f64>) -> Self {
        Penalty::AdaptiveLasso {
            weights: adaptive_weights(aux),
        }
    }

    /// Convex, positively homogeneous penalties.
    pub fn is_sublinear(&self) -> bool {
        matches!(
            self,
            Penalty::Lasso | Penalty::AdaptiveLasso { .. } | Penalty::GroupLasso { .. }
        )
    }

    /// Coordinate-separable penalties (prox acts coordinate-wise).
    pub fn is_separable(&self) -> bool {
        !matches!(self, Penalty::GroupLasso { .. })
    }

    /// Checks the parameter invariants for a `p`-dimensional problem.
    pub fn validate(&self, p: usize) -> Result<()> {
        match self {
            Penalty::Ridge | Penalty::Lasso => Ok(()),
            Penalty::AdaptiveLasso { weights } => {
                check_len(weights.len(), p)?;
                if weights.iter().any(|w| w.is_nan() || *w <= 0.0) {
                    return Err(Error::InvalidPenalty(
                        "adaptive lasso weights must be > 0 (or +∞)".into(),
                    ));
                }
                Ok(())
            }
            Penalty::GroupLasso { groups } => {
                let mut seen = vec![false; p];
                for g in groups {
                    if g.is_empty() {
                        return Err(Error::InvalidPenalty("empty group".into()));
                    }
                    for &j in g {
                        if j >= p || seen[j] {
                            return Err(Error::InvalidPenalty(format!(
                                "groups must partition 0..{p}; bad index {j}"
                            )));
                        }
                        seen[j] = true;
                    }
                }
                if seen.iter().any(|s| !s) {
                    return Err(Error::InvalidPenalty(format!(
                        "groups must partition 0..{p}; some index is missing"
                    )));
                }
                Ok(())
            }
            Penalty::ElasticNet { w } => {
                if !(*w > 0.0 && *w < 1.0) {
                    return Err(Error::InvalidPenalty(
                        "elastic net w must lie in (0, 1)".into(),
                    ));
                }
                Ok(())
            }
            Penalty::BoxIndicator { lower, upper } => {
                check_len(lower.len(), p)?;
                check_len(upper.len(), p)?;
                if lower.iter().zip(upper).any(|(l, u)| {
                    l.is_nan()
                        || u.is_nan()
                        || l > u
                        || *l == f64::INFINITY
                        || *u == f64::NEG_INFINITY
                }) {
                    return Err(Error::InvalidPenalty("box needs lower ≤ upper".into()));
                }
                Ok(())
            }
        }
    }

    /// `f(β) ∈ (−∞, +∞]`.
    pub fn evaluate(&self, beta: &DVector<f64>) -> f64 {
        match self {
            Penalty::Ridge => 0.5 * beta.norm_squared(),
            Penalty::Lasso => beta.lp_norm(1),
            Penalty::AdaptiveLasso { weights } => beta
                .iter()
                .zip(weights)
                .map(|(b, w)| if *b == 0.0 { 0.0 } else { w * b.abs() })
                .sum(),
            Penalty::GroupLasso { groups } => groups.iter().map(|g| group_norm(beta, g)).sum(),
            Penalty::ElasticNet { w } => {
                w * beta.lp_norm(1) + 0.5 * (1.0 - w) * beta.norm_squared()
            }
            Penalty::BoxIndicator { lower, upper } => {
                let inside = beta
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .all(|(b, (l, u))| l <= b && b <= u);
                if inside {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Closed-form `argmin_β ½‖x−β‖²₂ + t·f(β)`.
    pub fn euclidean_prox(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Penalty::GroupLasso { groups } => {
                let mut out = DVector::zeros(x.len());
                for g in groups {
                    let norm = group_norm(x, g);
                    if norm > t {
                        let shrink = 1.0 - t / norm;
                        for &j in g {
                            out[j] = shrink * x[j];
                        }
                    }
                }
                out
            }
            _ => DVector::from_iterator(
                x.len(),
                x.iter()
                    .enumerate()
                    .map(|(j, &xj)| self.scalar_prox(j, t, xj)),
            ),
        }
    }

    /// One coordinate of the Euclidean prox for separable penalties.
    pub(crate) fn scalar_prox(&self, j: usize, t: f64, xj: f64) -> f64 {
        match self {
            Penalty::Ridge => xj / (1.0 + t),
            Penalty::Lasso => soft_threshold(xj, t),
            Penalty::AdaptiveLasso { weights } => soft_threshold(xj, t * weights[j]),
            // prox of t(w|·| + ((1−w)/2)(·)²): the quadratic part rescales the
            // soft-threshold of the ℓ1 part, S(x, tw) / (1 + t(1−w)).
            Penalty::ElasticNet { w } => soft_threshold(xj, t * w) / (1.0 + t * (1.0 - w)),
            Penalty::BoxIndicator { lower, upper } => xj.max(lower[j]).min(upper[j]),
            Penalty::GroupLasso { .. } => unreachable!("group lasso is not separable"),
        }
    }

    /// Euclidean distance from `v` to `λ·∂f(β)` (Euclidean subdifferential);
    /// `+∞` when `β ∉ dom f`.
    pub fn subgradient_distance(&self, lambda: f64, beta: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let mut acc = 0.0;
        match self {
            Penalty::Ridge => return (v - beta * lambda).norm(),
            Penalty::Lasso => {
                for (b, vj) in beta.iter().zip(v.iter()) {
                    acc += l1_coordinate_gap(*b, *vj, lambda, 0.0).powi(2);
                }
            }
            Penalty::AdaptiveLasso { weights } => {
                for ((b, vj), w) in beta.iter().zip(v.iter()).zip(weights) {
                    if w.is_infinite() {
                        if *b != 0.0 {
                            return f64::INFINITY;
                        }
                        continue;
                    }
                    acc += l1_coordinate_gap(*b, *vj, lambda * w, 0.0).powi(2);
                }
            }
            Penalty::ElasticNet { w } => {
                for (b, vj) in beta.iter().zip(v.iter()) {
                    acc += l1_coordinate_gap(*b, *vj, lambda * w, lambda * (1.0 - w) * b).powi(2);
                }
            }
            Penalty::GroupLasso { groups } => {
                for g in groups {
                    let bn = group_norm(beta, g);
                    if bn == 0.0 {
                        acc += (group_norm(v, g) - lambda).max(0.0).powi(2);
                    } else {
                        for &j in g {
                            acc += (v[j] - lambda * beta[j] / bn).powi(2);
                        }
                    }
                }
            }
            Penalty::BoxIndicator { lower, upper } => {
                for j in 0..beta.len() {
                    let (b, vj, l, u) = (beta[j], v[j], lower[j], upper[j]);
                    if b < l || b > u {
                        return f64::INFINITY;
                    }
                    let gap = if l == u {
                        0.0
                    } else if b == l {
                        vj.max(0.0)
                    } else if b == u {
                        (-vj).max(0.0)
                    } else {
                        vj.abs()
                    };
                    acc += gap * gap;
                }
            }
        }
        acc.sqrt()
    }
}

/// Distance from `v` to `c·∂|·|(b) + shift`.
fn l1_coordinate_gap(b: f64, v: f64, c: f64, shift: f64) -> f64 {
    let v = v - shift;
    if b == 0.0 {
        (v.abs() - c).max(0.0)
    } else {
        (v - c * b.signum()).abs()
    }
}

fn group_norm(x: &DVector<f64>, g: &[usize]) -> f64 {
    g.iter().map(|&j| x[j] * x[j]).sum::<f64>().sqrt()
}

/// `sign(z)·max(|z| − γ, 0)`, writing a literal `0.0` inside the dead zone.
#[inline]
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Adaptive weights `1/|aux_j|`, `+∞` below [`ADAPTIVE_ZERO_THRESHOLD`].
pub fn adaptive_weights(aux: &DVector<f64>) -> Vec<f64> {
    aux.iter()
        .map(|a| {
            if a.abs() < ADAPTIVE_ZERO_THRESHOLD {
                f64::INFINITY
            } else {
                1.0 / a.abs()
            }
        })
        .collect()
}

/// The dual set `C = ⋂_j {θ : |⟨e_j, θ⟩_W| ≤ c_j}` of a polyhedral
/// sublinear penalty, together with the weighting matrix it lives under.
#[derive(Debug, Clone)]
pub struct PolyhedronSpec {
    pub bounds: Vec<f64>,
    pub weight: SymMatrix,
}

impl PolyhedronSpec {
    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    /// Largest constraint violation `max_j (|(Wθ)_j| − c_j)₊`.
    pub fn max_violation(&self, theta: &DVector<f64>) -> f64 {
        let wt = self.weight.as_matrix() * theta;
        wt.iter()
            .zip(&self.bounds)
            .map(|(v, c)| (v.abs() - c).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, theta: &DVector<f64>, tol: f64) -> bool {
        self.max_violation(theta) <= tol
    }

    /// The penalty `Σ c_j |β_j|` (at λ = 1) whose conjugate is this set's
    /// indicator.
    pub fn generating_penalty(&self) -> Penalty {
        Penalty::AdaptiveLasso {
            weights: self.bounds.clone(),
        }
    }
}

/// Conjugate polyhedron of `λ·f` under `⟨·,·⟩_W` for the Lasso and
/// Adaptive Lasso. `aux` is the auxiliary estimate of the Adaptive Lasso;
/// without it the penalty's own weights are used.
pub fn conjugate_polyhedron(
    f: &Penalty,
    lambda: f64,
    w: &WeightMatrix,
    aux: Option<&DVector<f64>>,
) -> Result<PolyhedronSpec> {
    let p = w.dim();
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument("λ must be positive".into()));
    }
    let bounds = match f {
        Penalty::Lasso => vec![lambda; p],
        Penalty::AdaptiveLasso { weights } => {
            let weights = match aux {
                Some(aux) => {
                    check_len(aux.len(), p)?;
                    adaptive_weights(aux)
                }
                None => {
                    check_len(weights.len(), p)?;
                    weights.clone()
                }
            };
            weights.iter().map(|w| lambda * w).collect()
        }
        other => return Err(Error::NotSublinear(other.kind_name())),
    };
    Ok(PolyhedronSpec {
        bounds,
        weight: w.matrix().clone(),
    })
}

/// Support `{j : β0_j ≠ 0}`, the domain span of the Adaptive Lasso limit
/// penalty.
pub fn limit_domain(f: &Penalty, beta0: &DVector<f64>) -> Result<Vec<usize>> {
    match f {
        Penalty::AdaptiveLasso { .. } => Ok(support(beta0)),
        other => Err(Error::Unsupported {
            kind: other.kind_name(),
            operation: "limit_domain",
        }),
    }
}

/// Indices of nonzero entries.
pub fn support(x: &DVector<f64>) -> Vec<usize> {
    x.iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(j, _)| j)
        .collect()
}

/// Euclidean subgradient set of a limit penalty at `β0`.
#[derive(Debug, Clone, PartialEq)]
pub enum LimitSubgradient {
    /// `point + span(directions)`; a singleton when `directions` is empty.
    AffineSpan {
        point: DVector<f64>,
        directions: Vec<DVector<f64>>,
    },
    /// Product of fixed coordinates and closed intervals.
    BoxProduct {
        fixed: Vec<(usize, f64)>,
        free: Vec<(usize, f64, f64)>,
    },
    /// Normal cone of `span{e_j : j ∈ support}`: vectors vanishing on the
    /// support.
    NormalConeOfSpan { support: Vec<usize> },
}

impl LimitSubgradient {
    pub fn contains(&self, t: &DVector<f64>, tol: f64) -> bool {
        match self {
            LimitSubgradient::AffineSpan { point, directions } => {
                // directions are canonical unit vectors or empty
                let mut r = t - point;
                for d in directions {
                    let c = d.dot(&r) / d.norm_squared();
                    r -= d * c;
                }
                r.amax() <= tol
            }
            LimitSubgradient::BoxProduct { fixed, free } => {
                fixed.iter().all(|&(j, v)| (t[j] - v).abs() <= tol)
                    && free
                        .iter()
                        .all(|&(j, lo, hi)| t[j] >= lo - tol && t[j] <= hi + tol)
            }
            LimitSubgradient::NormalConeOfSpan { support } => {
                support.iter().all(|&j| t[j].abs() <= tol)
            }
        }
    }
}

pub fn limit_subgradient(f: &Penalty, beta0: &DVector<f64>) -> Result<LimitSubgradient> {
    let p = beta0.len();
    match f {
        Penalty::Ridge => Ok(LimitSubgradient::AffineSpan {
            point: beta0.clone(),
            directions: Vec::new(),
        }),
        Penalty::Lasso => {
            let mut fixed = Vec::new();
            let mut free = Vec::new();
            for (j, &b) in beta0.iter().enumerate() {
                if b != 0.0 {
                    fixed.push((j, b.signum()));
                } else {
                    free.push((j, -1.0, 1.0));
                }
            }
            Ok(LimitSubgradient::BoxProduct { fixed, free })
        }
        Penalty::AdaptiveLasso { .. } => {
            let point = beta0.map(|b| if b != 0.0 { 1.0 / b } else { 0.0 });
            let directions = (0..p)
                .filter(|&j| beta0[j] == 0.0)
                .map(|j| {
                    let mut e = DVector::zeros(p);
                    e[j] = 1.0;
                    e
                })
                .collect();
            Ok(LimitSubgradient::AffineSpan { point, directions })
        }
        other => Err(Error::Unsupported {
            kind: other.kind_name(),
            operation: "limit_subgradient",
        }),
    }
}

/// JSON has no infinities; infinite bounds/weights travel as `null`.
mod ext_real {
    use serde::{Deserialize, Deserializer, Serializer};

    fn ser<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            if x.is_infinite() {
                seq.serialize_element(&Option::<f64>::None)?;
            } else {
                seq.serialize_element(&Some(*x))?;
            }
        }
        seq.end()
    }

    fn de<'de, D: Deserializer<'de>>(d: D, fill: f64) -> Result<Vec<f64>, D::Error> {
        let raw: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(raw.into_iter().map(|x| x.unwrap_or(fill)).collect())
    }

    pub mod pos_inf_as_null {
        use serde::{Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            super::ser(v, s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            super::de(d, f64::INFINITY)
        }
    }

    pub mod neg_inf_as_null {
        use serde::{Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            super::ser(v, s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            super::de(d, f64::NEG_INFINITY)
        }
    }
}
