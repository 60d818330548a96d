//! Domain types shared by all solvers.

use serde::{Deserialize, Serialize};

use crate::densela::{dot, eig_extremes, SymMatrix};
use crate::error::{Error, Result};
use crate::lmo::{f_of, LmoDescriptor};

pub type CutId = u64;

/// An affine function `vᵀx + b`; one element of the vertex set the LMO
/// ranges over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub v: Vec<f64>,
    pub b: f64,
}

impl Affine {
    pub fn new(v: Vec<f64>, b: f64) -> Self {
        Affine { v, b }
    }

    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        dot(&self.v, x) + self.b
    }
}

/// A cut held in a bundle. Ids are assigned by the bundle in creation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub id: CutId,
    pub v: Vec<f64>,
    pub b: f64,
}

impl Cut {
    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        dot(&self.v, x) + self.b
    }

    pub fn affine(&self) -> Affine {
        Affine { v: self.v.clone(), b: self.b }
    }
}

/// Default relative activity tolerance: a cut is active when it is within
/// `tol·(1 + |max|)` of the model value.
pub const DEFAULT_ACTIVE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelValue {
    pub value: f64,
    pub argmax_ids: Vec<CutId>,
}

/// Ordered collection of cuts defining the piecewise-linear model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    dim: usize,
    cuts: Vec<Cut>,
    next_id: CutId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inserted {
    pub id: CutId,
    /// False when an identical `(v, b)` was already present; `id` is then
    /// the existing cut's id.
    pub fresh: bool,
}

impl Bundle {
    pub fn new(dim: usize) -> Self {
        Bundle { dim, cuts: Vec::new(), next_id: 0 }
    }

    pub fn from_affines(dim: usize, pieces: impl IntoIterator<Item = Affine>) -> Result<Self> {
        let mut b = Bundle::new(dim);
        for p in pieces {
            b.insert(p)?;
        }
        Ok(b)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }

    pub fn cuts(&self) -> &[Cut] {
        &self.cuts
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Cut> {
        self.cuts.iter()
    }

    pub fn ids(&self) -> Vec<CutId> {
        self.cuts.iter().map(|c| c.id).collect()
    }

    pub fn get(&self, id: CutId) -> Option<&Cut> {
        self.cuts.iter().find(|c| c.id == id)
    }

    pub fn contains(&self, id: CutId) -> bool {
        self.get(id).is_some()
    }

    /// Adds a cut, deduplicating exact `(v, b)` repeats.
    pub fn insert(&mut self, piece: Affine) -> Result<Inserted> {
        if piece.v.len() != self.dim {
            return Err(Error::Dimension(format!("cut of length {} in bundle of dim {}", piece.v.len(), self.dim)));
        }
        if !piece.b.is_finite() || piece.v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("cut has non-finite entries".into()));
        }
        if let Some(c) = self.cuts.iter().find(|c| c.b == piece.b && c.v == piece.v) {
            return Ok(Inserted { id: c.id, fresh: false });
        }
        let id = self.next_id;
        self.next_id += 1;
        self.cuts.push(Cut { id, v: piece.v, b: piece.b });
        Ok(Inserted { id, fresh: true })
    }

    /// Keeps only the listed ids, preserving bundle order.
    pub fn retain_ids(&mut self, keep: &[CutId]) {
        self.cuts.retain(|c| keep.contains(&c.id));
    }

    pub fn model_value(&self, x: &[f64], active_tol: f64) -> Result<ModelValue> {
        if self.cuts.is_empty() {
            return Err(Error::EmptyModel);
        }
        let vals: Vec<f64> = self.cuts.iter().map(|c| c.value(x)).collect();
        let value = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let thresh = active_tol * (1.0 + value.abs());
        let argmax_ids = self
            .cuts
            .iter()
            .zip(&vals)
            .filter(|(_, v)| value - **v <= thresh)
            .map(|(c, _)| c.id)
            .collect();
        Ok(ModelValue { value, argmax_ids })
    }
}

/// `max_i vᵢᵀx + bᵢ` over the bundle plus the (near-)maximizing ids.
pub fn model_value(bundle: &Bundle, x: &[f64]) -> Result<ModelValue> {
    bundle.model_value(x, DEFAULT_ACTIVE_TOL)
}

/// `g(x) = ½xᵀQx + qᵀx + r` with `Q` symmetric PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    q_mat: SymMatrix,
    q: Vec<f64>,
    r: f64,
    l_g: f64,
    mu_g: f64,
}

impl QuadraticObjective {
    pub fn new(q_mat: SymMatrix, q: Vec<f64>, r: f64) -> Result<Self> {
        let n = q_mat.dim();
        if q.len() != n {
            return Err(Error::Dimension(format!("q has length {}, Q is {n}x{n}", q.len())));
        }
        if !r.is_finite() || q.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("objective has non-finite entries".into()));
        }
        let (l_g, mu_g) = if q_mat.is_identity() {
            (1.0, 1.0)
        } else {
            let e = eig_extremes(&q_mat)?;
            (e.lambda_max, e.lambda_min)
        };
        if mu_g < -1e-10 {
            return Err(Error::Invalid(format!("Q is not PSD (smallest eigenvalue {mu_g:e})")));
        }
        let mu_g = mu_g.max(0.0);
        Ok(QuadraticObjective { q_mat, q, r, l_g: l_g.max(mu_g), mu_g })
    }

    /// `½‖x‖²`
    pub fn half_norm_sq(n: usize) -> Self {
        Self::new(SymMatrix::identity(n), vec![0.0; n], 0.0).expect("identity is PSD")
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn q_mat(&self) -> &SymMatrix {
        &self.q_mat
    }

    pub fn linear(&self) -> &[f64] {
        &self.q
    }

    pub fn constant(&self) -> f64 {
        self.r
    }

    pub fn l_g(&self) -> f64 {
        self.l_g
    }

    pub fn mu_g(&self) -> f64 {
        self.mu_g
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.q_mat.quad_form(x) + dot(&self.q, x) + self.r
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.q_mat.mul_vec(x);
        for (gi, qi) in g.iter_mut().zip(&self.q) {
            *gi += qi;
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceOpt {
    pub x_star: Vec<f64>,
    pub h_star: f64,
}

/// Provenance of a generated instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceMeta {
    pub generator: String,
    pub seed: u64,
    pub m: usize,
    pub attempts: usize,
}

/// `min g(x) + f(x)` with `f` given through an LMO.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub objective: QuadraticObjective,
    pub lmo: LmoDescriptor,
    pub x0: Vec<f64>,
    pub reference_opt: Option<ReferenceOpt>,
    pub meta: Option<InstanceMeta>,
}

impl ProblemInstance {
    pub fn new(objective: QuadraticObjective, lmo: LmoDescriptor, x0: Vec<f64>) -> Result<Self> {
        let n = objective.dim();
        if x0.len() != n {
            return Err(Error::Dimension(format!("x0 has length {}, expected {n}", x0.len())));
        }
        if x0.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("x0 has non-finite entries".into()));
        }
        let lmo = lmo.with_default_bounds();
        lmo.validate(n)?;
        Ok(ProblemInstance { objective, lmo, x0, reference_opt: None, meta: None })
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    /// Attaches a reference optimum after checking `h(x_star) = h_star`.
    pub fn with_reference(mut self, reference: ReferenceOpt) -> Result<Self> {
        if reference.x_star.len() != self.dim() {
            return Err(Error::Dimension("x_star length".into()));
        }
        let h = evaluate_h(&self, &reference.x_star)?;
        if (h - reference.h_star).abs() > 1e-8 * (1.0 + h.abs()) {
            return Err(Error::Invalid(format!("reference h_star {} but h(x_star) = {h}", reference.h_star)));
        }
        self.reference_opt = Some(reference);
        Ok(self)
    }

    pub fn with_meta(mut self, meta: InstanceMeta) -> Self {
        self.meta = Some(meta);
        self
    }
}

/// `h(x) = g(x) + f(x)`, `f` evaluated through the LMO.
pub fn evaluate_h(instance: &ProblemInstance, x: &[f64]) -> Result<f64> {
    if x.len() != instance.dim() {
        return Err(Error::Dimension(format!("x has length {}, expected {}", x.len(), instance.dim())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("x has non-finite entries".into()));
    }
    Ok(instance.objective.value(x) + f_of(&instance.lmo, x)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    AllCut,
    SingleCut,
    ActiveCut,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::AllCut, PolicyKind::SingleCut, PolicyKind::ActiveCut];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::AllCut => "all_cut",
            PolicyKind::SingleCut => "single_cut",
            PolicyKind::ActiveCut => "active_cut",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "all_cut" => Ok(PolicyKind::AllCut),
            "single_cut" => Ok(PolicyKind::SingleCut),
            "active_cut" => Ok(PolicyKind::ActiveCut),
            other => Err(Error::Config(format!("unknown policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub rho: f64,
    pub max_iter: usize,
    pub inner_tol: f64,
    pub active_tol: f64,
    pub policy: PolicyKind,
    pub diagnostics: bool,
    /// Bound `R ≥ ‖y − x*‖` used by the stopping certificate; `None` means
    /// the heuristic `2‖x0‖ + 10`.
    pub radius_bound: Option<f64>,
}

impl SolverConfig {
    /// Config with `δ = ε/2`, `inner_tol = min(δ·1e-3, 1e-10)` and `ρ = 1`.
    pub fn new(epsilon: f64) -> Self {
        let delta = epsilon / 2.0;
        SolverConfig {
            epsilon,
            delta,
            rho: 1.0,
            max_iter: 10_000,
            inner_tol: default_inner_tol(delta),
            active_tol: DEFAULT_ACTIVE_TOL,
            policy: PolicyKind::ActiveCut,
            diagnostics: false,
            radius_bound: None,
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self.inner_tol = default_inner_tol(delta);
        self
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_policy(mut self, policy: PolicyKind) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_diagnostics(mut self, on: bool) -> Self {
        self.diagnostics = on;
        self
    }

    pub fn with_radius_bound(mut self, r: f64) -> Self {
        self.radius_bound = Some(r);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        pos("epsilon", self.epsilon)?;
        pos("delta", self.delta)?;
        pos("rho", self.rho)?;
        pos("inner_tol", self.inner_tol)?;
        if self.inner_tol >= self.delta {
            return Err(Error::Config(format!("inner_tol {} must be below delta {}", self.inner_tol, self.delta)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be positive".into()));
        }
        if !(self.active_tol >= 0.0) {
            return Err(Error::Config("active_tol must be nonnegative".into()));
        }
        if let Some(r) = self.radius_bound {
            pos("radius_bound", r)?;
        }
        Ok(())
    }
}

pub fn default_inner_tol(delta: f64) -> f64 {
    (delta * 1e-3).min(1e-10)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepType {
    Serious,
    Null,
    Terminal,
}

impl StepType {
    pub fn as_str(self) -> &'static str {
        match self {
            StepType::Serious => "serious",
            StepType::Null => "null",
            StepType::Terminal => "terminal",
        }
    }
}

/// Residuals of the duality identities checked at one iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DualityResiduals {
    /// `‖y + ∇M(w − ρx_k)‖`
    pub moreau_correspondence: f64,
    /// `|model gap − FW gap of Ψ_k|`
    pub gap_identity: f64,
    /// `|prox primal − Moreau dual| / (1 + |primal|)`
    pub prox_dual: f64,
    /// `‖w + ∇ĝ(y)‖`
    pub gradient_link: f64,
    /// `|primal − dual| / (1 + |primal|)` as reported by the subproblem
    pub strong_duality: f64,
    /// `|f_k(y) − (wᵀy + β)|`
    pub lower_model: f64,
    /// Serious-step ALM reconstruction residual.
    pub alm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub step_type: StepType,
    /// `f(y) − f_k(y)`
    pub model_gap: f64,
    /// `h(y)`
    pub obj_value: f64,
    pub bundle_size_pre: usize,
    pub bundle_size_post: usize,
    /// `‖y − x_k‖`
    pub prox_move: f64,
    pub fw_gap_dual: Option<f64>,
    pub duality_residuals: Option<DualityResiduals>,
    pub serious_count_so_far: Option<usize>,
    pub certificate_bound: Option<f64>,
    pub wall_time_ns: u64,
}
