//! Linear maximization oracles over the cut set `V`.

use serde::{Deserialize, Serialize};

use crate::densela::{dist, norm};
use crate::error::{Error, Result};
use crate::lp::{feasibility_check, solve_lp, LpProblem, LpStatus};
use crate::model::Affine;

/// How `V` is represented.
///
/// * `Explicit` lists the pieces.
/// * `Box` is `{(v, b) : |vᵢ| ≤ wᵢ, b ∈ [lo, hi]}`; its vertices are the pieces.
/// * `Polytope` is `{(y, d) : A(y, d) ≤ b, lower ≤ (y, d) ≤ upper}` with `A`
///   of shape `m × (n+1)`; the LMO solves an LP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum LmoDescriptor {
    Explicit {
        cuts: Vec<Affine>,
    },
    Box {
        half_width: Vec<f64>,
        intercept_range: [f64; 2],
    },
    Polytope {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        /// Empty means `−1` everywhere.
        #[serde(default)]
        lower: Vec<f64>,
        /// Empty means `+1` everywhere.
        #[serde(default)]
        upper: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiameterBounds {
    /// diam(V)
    pub d: f64,
    /// diam of the slope parts
    pub d_w: f64,
    /// diam of the intercepts
    pub d_b: f64,
    /// True when the values are exact rather than box-radius bounds.
    pub exact: bool,
}

impl LmoDescriptor {
    pub fn explicit(cuts: Vec<Affine>) -> Self {
        LmoDescriptor::Explicit { cuts }
    }

    /// Polytope with the default `[-1, 1]` box on every coordinate.
    pub fn polytope(a: Vec<Vec<f64>>, b: Vec<f64>) -> Self {
        let p = a.first().map_or(0, |r| r.len());
        LmoDescriptor::Polytope { a, b, lower: vec![-1.0; p], upper: vec![1.0; p] }
    }

    /// Fills empty polytope bounds with `[−1, 1]`.
    pub fn with_default_bounds(self) -> Self {
        match self {
            LmoDescriptor::Polytope { a, b, mut lower, mut upper } => {
                let p = a.first().map_or(0, |r| r.len());
                if lower.is_empty() {
                    lower = vec![-1.0; p];
                }
                if upper.is_empty() {
                    upper = vec![1.0; p];
                }
                LmoDescriptor::Polytope { a, b, lower, upper }
            }
            other => other,
        }
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            LmoDescriptor::Explicit { .. } => "explicit",
            LmoDescriptor::Box { .. } => "box",
            LmoDescriptor::Polytope { .. } => "polytope",
        }
    }

    /// Shape checks, plus LP feasibility for the polytope variant.
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            LmoDescriptor::Explicit { cuts } => {
                if cuts.is_empty() {
                    return Err(Error::Invalid("explicit LMO needs at least one cut".into()));
                }
                for c in cuts {
                    if c.v.len() != n {
                        return Err(Error::Dimension(format!("cut slope length {} != {n}", c.v.len())));
                    }
                    if !c.b.is_finite() || c.v.iter().any(|x| !x.is_finite()) {
                        return Err(Error::Invalid("cut has non-finite entries".into()));
                    }
                }
            }
            LmoDescriptor::Box { half_width, intercept_range } => {
                if half_width.len() != n {
                    return Err(Error::Dimension(format!("half_width length {} != {n}", half_width.len())));
                }
                if half_width.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    return Err(Error::Invalid("half widths must be finite and nonnegative".into()));
                }
                let [lo, hi] = *intercept_range;
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(Error::Invalid("intercept_range must satisfy lo <= hi".into()));
                }
            }
            LmoDescriptor::Polytope { .. } => {
                let lp = self.lp(&vec![0.0; n])?;
                if !feasibility_check(&lp) {
                    return Err(Error::Invalid("polytope LMO has an empty feasible set".into()));
                }
            }
        }
        Ok(())
    }

    fn lp(&self, x: &[f64]) -> Result<LpProblem> {
        let LmoDescriptor::Polytope { a, b, lower, upper } = self else {
            unreachable!("lp() on non-polytope LMO");
        };
        let p = x.len() + 1;
        if lower.len() != p || upper.len() != p || a.iter().any(|r| r.len() != p) || a.len() != b.len() {
            return Err(Error::Dimension(format!("polytope LMO shape does not match n + 1 = {p}")));
        }
        let mut c = x.to_vec();
        c.push(1.0);
        let prob = LpProblem { c, a: a.clone(), b_up: b.clone(), lower: lower.clone(), upper: upper.clone() };
        prob.validate()?;
        Ok(prob)
    }
}

/// A maximizer of `vᵀx + b` over `V`. Ties go to the first listed cut
/// (explicit), to `+half_width` on zero coordinates (box), or follow the
/// simplex pivoting rule (polytope).
pub fn lmo_max(desc: &LmoDescriptor, x: &[f64]) -> Result<Affine> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("LMO query point has non-finite entries".into()));
    }
    match desc {
        LmoDescriptor::Explicit { cuts } => {
            let mut best: Option<(&Affine, f64)> = None;
            for c in cuts {
                if c.v.len() != x.len() {
                    return Err(Error::Dimension("LMO query dimension".into()));
                }
                let val = c.value(x);
                if best.map_or(true, |(_, bv)| val > bv) {
                    best = Some((c, val));
                }
            }
            best.map(|(c, _)| c.clone()).ok_or_else(|| Error::Lmo("empty cut list".into()))
        }
        LmoDescriptor::Box { half_width, intercept_range } => {
            if half_width.len() != x.len() {
                return Err(Error::Dimension("LMO query dimension".into()));
            }
            let v = half_width.iter().zip(x).map(|(w, xi)| if *xi < 0.0 { -w } else { *w }).collect();
            Ok(Affine::new(v, intercept_range[1]))
        }
        LmoDescriptor::Polytope { .. } => {
            let sol = solve_lp(&desc.lp(x)?)?;
            match sol.status {
                LpStatus::Optimal => {
                    let mut z = sol.z;
                    let d = z.pop().expect("n + 1 variables");
                    Ok(Affine::new(z, d))
                }
                LpStatus::Infeasible => Err(Error::Lmo("polytope is infeasible".into())),
                LpStatus::Unbounded => Err(Error::Lmo("polytope LP is unbounded".into())),
            }
        }
    }
}

/// `f(x) = max_{(v,b)∈V} vᵀx + b`.
pub fn f_of(desc: &LmoDescriptor, x: &[f64]) -> Result<f64> {
    Ok(lmo_max(desc, x)?.value(x))
}

/// Lipschitz constant of `f`: `max ‖v‖` (box-radius bound for polytopes).
pub fn lipschitz_bound(desc: &LmoDescriptor) -> f64 {
    match desc {
        LmoDescriptor::Explicit { cuts } => cuts.iter().map(|c| norm(&c.v)).fold(0.0, f64::max),
        LmoDescriptor::Box { half_width, .. } => norm(half_width),
        LmoDescriptor::Polytope { lower, upper, .. } => {
            let n = lower.len() - 1;
            (0..n).map(|i| lower[i].abs().max(upper[i].abs()).powi(2)).sum::<f64>().sqrt()
        }
    }
}

pub fn diameter_bounds(desc: &LmoDescriptor) -> DiameterBounds {
    match desc {
        LmoDescriptor::Explicit { cuts } => {
            let (mut d, mut d_w, mut d_b) = (0.0f64, 0.0f64, 0.0f64);
            for (i, a) in cuts.iter().enumerate() {
                for c in &cuts[i + 1..] {
                    let dw = dist(&a.v, &c.v);
                    let db = (a.b - c.b).abs();
                    d = d.max((dw * dw + db * db).sqrt());
                    d_w = d_w.max(dw);
                    d_b = d_b.max(db);
                }
            }
            DiameterBounds { d, d_w, d_b, exact: true }
        }
        LmoDescriptor::Box { half_width, intercept_range } => {
            let d_w = 2.0 * norm(half_width);
            let d_b = intercept_range[1] - intercept_range[0];
            DiameterBounds { d: (d_w * d_w + d_b * d_b).sqrt(), d_w, d_b, exact: true }
        }
        LmoDescriptor::Polytope { lower, upper, .. } => {
            let n = lower.len() - 1;
            let d_w = (0..n).map(|i| (upper[i] - lower[i]).powi(2)).sum::<f64>().sqrt();
            let d_b = upper[n] - lower[n];
            DiameterBounds { d: (d_w * d_w + d_b * d_b).sqrt(), d_w, d_b, exact: false }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use bundlekit_oracle::lp_by_enumeration;
    use proptest::prelude::*;

    fn abs_lmo() -> LmoDescriptor {
        LmoDescriptor::explicit(vec![Affine::new(vec![1.0], 0.0), Affine::new(vec![-1.0], 0.0)])
    }

    fn unit_box(n: usize) -> LmoDescriptor {
        LmoDescriptor::Box { half_width: vec![1.0; n], intercept_range: [-1.0, 1.0] }
    }

    fn uniform(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    #[test]
    fn explicit_and_box() {
        assert_eq!(lmo_max(&abs_lmo(), &[2.0]).unwrap(), Affine::new(vec![1.0], 0.0));
        assert_eq!(f_of(&abs_lmo(), &[2.0]).unwrap(), 2.0);
        let cut = lmo_max(&unit_box(2), &[3.0, -1.0]).unwrap();
        assert_eq!(cut, Affine::new(vec![1.0, -1.0], 1.0));
        assert_eq!(f_of(&unit_box(2), &[3.0, -1.0]).unwrap(), 5.0);
        // zero coordinate goes to +half_width
        assert_eq!(lmo_max(&unit_box(2), &[0.0, -1.0]).unwrap().v, vec![1.0, -1.0]);
    }

    #[test]
    fn polytope_matches_enumeration() {
        let n = 4;
        for seed in 0..60u64 {
            let mut s = seed + 1000;
            let a: Vec<Vec<f64>> = (0..2).map(|_| (0..=n).map(|_| uniform(&mut s)).collect()).collect();
            let b: Vec<f64> = (0..2).map(|_| uniform(&mut s).abs()).collect();
            let desc = LmoDescriptor::polytope(a.clone(), b.clone());
            desc.validate(n).unwrap();
            let x: Vec<f64> = (0..n).map(|_| 2.0 * uniform(&mut s)).collect();
            let cut = lmo_max(&desc, &x).unwrap();
            let mut c = x.clone();
            c.push(1.0);
            let (_, best) = lp_by_enumeration(&c, &a, &b, &vec![-1.0; n + 1], &vec![1.0; n + 1])
                .unwrap()
                .expect("feasible: origin satisfies b >= 0");
            assert!((cut.value(&x) - best).abs() < 1e-9, "seed {seed}");
        }
    }

    #[test]
    fn empty_polytope_rejected_at_load() {
        // d ≤ -2 with d in [-1, 1]
        let desc = LmoDescriptor::polytope(vec![vec![0.0, 1.0]], vec![-2.0]);
        assert!(desc.validate(1).is_err());
    }

    #[test]
    fn constants_for_abs() {
        assert_eq!(lipschitz_bound(&abs_lmo()), 1.0);
        let d = diameter_bounds(&abs_lmo());
        assert_eq!((d.d, d.d_w, d.d_b), (2.0, 2.0, 0.0));
        let single = LmoDescriptor::explicit(vec![Affine::new(vec![1.0, 2.0], 3.0)]);
        assert_eq!(diameter_bounds(&single).d, 0.0);
    }

    #[test]
    fn diameters_are_order_independent() {
        let mut s = 77u64;
        let mut cuts: Vec<Affine> =
            (0..10).map(|_| Affine::new((0..3).map(|_| uniform(&mut s)).collect(), uniform(&mut s))).collect();
        let d1 = diameter_bounds(&LmoDescriptor::explicit(cuts.clone()));
        cuts.reverse();
        cuts.swap(2, 7);
        let d2 = diameter_bounds(&LmoDescriptor::explicit(cuts.clone()));
        assert_eq!(d1, d2);
        // independent rescan
        let mut d = 0.0f64;
        for a in &cuts {
            for c in &cuts {
                let s: f64 = a.v.iter().zip(&c.v).map(|(x, y)| (x - y).powi(2)).sum::<f64>() + (a.b - c.b).powi(2);
                d = d.max(s.sqrt());
            }
        }
        assert!((d - d1.d).abs() < 1e-15);
    }

    #[test]
    fn json_shape() {
        let desc = LmoDescriptor::polytope(vec![vec![1.0, 0.5]], vec![0.3]);
        let s = serde_json::to_string(&desc).unwrap();
        assert!(s.contains("\"variant\":\"polytope\"") && s.contains("\"A\""));
        let back: LmoDescriptor = serde_json::from_str(&s).unwrap();
        assert_eq!(back, desc);
        let bad = r#"{"variant":"box","half_width":[1.0],"intercept_range":[0,1],"extra":1}"#;
        assert!(serde_json::from_str::<LmoDescriptor>(bad).is_err());
    }

    proptest! {
        #[test]
        fn box_argmax_is_scale_invariant(x in prop::collection::vec(-5.0f64..5.0, 4), lam in 0.01f64..100.0) {
            prop_assume!(x.iter().all(|v| *v != 0.0));
            let scaled: Vec<f64> = x.iter().map(|v| v * lam).collect();
            prop_assert_eq!(lmo_max(&unit_box(4), &x).unwrap(), lmo_max(&unit_box(4), &scaled).unwrap());
        }

        #[test]
        fn oracle_consistency(xs in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 1..6)) {
            let mut s = 4242u64;
            let a: Vec<Vec<f64>> = (0..2).map(|_| (0..4).map(|_| uniform(&mut s)).collect()).collect();
            let desc = LmoDescriptor::polytope(a, vec![0.5, 0.5]);
            let cuts: Vec<Affine> = xs.iter().map(|x| lmo_max(&desc, x).unwrap()).collect();
            for x in &xs {
                let fx = f_of(&desc, x).unwrap();
                for c in &cuts {
                    prop_assert!(c.value(x) <= fx + 1e-9);
                }
            }
        }
    }
}
