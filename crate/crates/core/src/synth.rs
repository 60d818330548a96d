//! Seeded random instances.
//!
//! `min ½‖x‖² + max{xᵀy + d : (y, d) ∈ [−1, 1]^{n+1}, Ay + cd ≤ b}` with
//! uniform entries, plus small explicit-cut instances for tests.

use serde::{Deserialize, Serialize};

use crate::densela::SymMatrix;
use crate::error::{Error, Result};
use crate::lmo::LmoDescriptor;
use crate::lp::{feasibility_check, LpProblem};
use crate::model::{Affine, InstanceMeta, ProblemInstance, QuadraticObjective};

const STREAM_A: u64 = 1;
const STREAM_C: u64 = 2;
const STREAM_B: u64 = 3;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based uniform draw on `[−1, 1)` keyed by `(seed, stream, index)`.
pub fn uniform(seed: u64, stream: u64, index: u64) -> f64 {
    let k = splitmix(splitmix(seed ^ splitmix(stream)) ^ index);
    (k >> 11) as f64 * (1.0 / (1u64 << 53) as f64) * 2.0 - 1.0
}

fn sub_seed(seed: u64, attempt: u64) -> u64 {
    splitmix(seed ^ splitmix(attempt.wrapping_add(0x5EED)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub resample_cap: usize,
}

impl SynthSpec {
    /// `m = max(1, ⌊n/5⌋)`, 100 resampling attempts.
    pub fn new(n: usize, seed: u64) -> Self {
        SynthSpec { n, m: (n / 5).max(1), seed, resample_cap: 100 }
    }

    pub fn with_m(mut self, m: usize) -> Self {
        self.m = m;
        self
    }
}

/// Builds the polytope instance. Only `b` is redrawn when the polytope is
/// empty.
pub fn generate(spec: &SynthSpec) -> Result<ProblemInstance> {
    let (n, m) = (spec.n, spec.m);
    if n == 0 || m == 0 {
        return Err(Error::Invalid("synthetic instance needs n >= 1 and m >= 1".into()));
    }
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut r: Vec<f64> = (0..n).map(|j| uniform(spec.seed, STREAM_A, (i * n + j) as u64)).collect();
            r.push(uniform(spec.seed, STREAM_C, i as u64));
            r
        })
        .collect();
    for attempt in 0..spec.resample_cap {
        let bs = if attempt == 0 { spec.seed } else { sub_seed(spec.seed, attempt as u64) };
        let b: Vec<f64> = (0..m).map(|i| uniform(bs, STREAM_B, i as u64)).collect();
        let lp = LpProblem { c: vec![0.0; n + 1], a: rows.clone(), b_up: b.clone(), lower: vec![-1.0; n + 1], upper: vec![1.0; n + 1] };
        if feasibility_check(&lp) {
            let obj = QuadraticObjective::half_norm_sq(n);
            let lmo = LmoDescriptor::polytope(rows, b);
            let inst = ProblemInstance::new(obj, lmo, vec![0.0; n])?;
            return Ok(inst.with_meta(InstanceMeta { generator: "synth-polytope".into(), seed: spec.seed, m, attempts: attempt + 1 }));
        }
    }
    Err(Error::InfeasibleSynth(spec.resample_cap))
}

/// Explicit-cut instance: `Q` diagonal with entries in `[mu, mu + 1]`,
/// `q` small, cuts uniform. With `singular` the first diagonal entry is 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplicitSpec {
    pub n: usize,
    pub cuts: usize,
    pub seed: u64,
    pub mu: f64,
    pub singular: bool,
}

pub fn generate_explicit(spec: &ExplicitSpec) -> Result<ProblemInstance> {
    let (n, k, s) = (spec.n, spec.cuts, spec.seed);
    if n == 0 || k == 0 {
        return Err(Error::Invalid("explicit instance needs n >= 1 and at least one cut".into()));
    }
    let diag: Vec<f64> = (0..n)
        .map(|i| if spec.singular && i == 0 { 0.0 } else { spec.mu + 0.5 * (uniform(s, 10, i as u64) + 1.0) })
        .collect();
    let q: Vec<f64> = (0..n).map(|i| 0.5 * uniform(s, 11, i as u64)).collect();
    let cuts = (0..k)
        .map(|j| Affine::new((0..n).map(|i| uniform(s, 12, (j * n + i) as u64)).collect(), uniform(s, 13, j as u64)))
        .collect();
    let obj = QuadraticObjective::new(SymMatrix::from_diag(&diag), q, 0.0)?;
    let inst = ProblemInstance::new(obj, LmoDescriptor::explicit(cuts), vec![0.0; n])?;
    Ok(inst.with_meta(InstanceMeta { generator: "synth-explicit".into(), seed: s, m: k, attempts: 1 }))
}
