//! Smooth test objectives with exact gradients.
//!
//! Smoothness constants and lower bounds are certified only on a box
//! `‖w‖∞ ≤ region_radius`; the synthetic functions are not globally smooth.
//! Certification (offline, dense grid):
//! - `synthetic1d` on `[-100, 100]`: max |L''| = 8.39239 at grid step 1e-4,
//!   stored as 8.4; min L = -544.02111 at `w = ±100`, stored as -544.03.
//! - `synthetic3d` on `[-50, 50]^3`: max Hessian spectral norm = 125.0068 at
//!   grid step 0.25, stored as 126; min L = -1434.9464 (grid start, then
//!   box-constrained local refinement), stored as -1435.

use std::collections::BTreeMap;

use crate::{Error, ParamVector, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveKind {
    /// `L(w) = 10 w sin(w / 10)`
    Synthetic1d,
    /// `L(w) = 10 w1 sin(w2/10) + 10 w2 sin(w3/10) + 10 w3 sin(w1/2)`
    Synthetic3d,
    /// `L(w) = ½‖w − center‖²`
    Quadratic { center: ParamVector },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub name: String,
    pub kind: ObjectiveKind,
    pub dim: usize,
    /// Gradient Lipschitz constant ℓ, valid on the certified region.
    pub smoothness: f64,
    /// L*, valid on the certified region.
    pub lower_bound: f64,
    pub region_radius: f64,
}

impl Objective {
    pub fn synthetic1d() -> Self {
        Self {
            name: "synthetic1d".into(),
            kind: ObjectiveKind::Synthetic1d,
            dim: 1,
            smoothness: 8.4,
            lower_bound: -544.03,
            region_radius: 100.0,
        }
    }

    pub fn synthetic3d() -> Self {
        Self {
            name: "synthetic3d".into(),
            kind: ObjectiveKind::Synthetic3d,
            dim: 3,
            smoothness: 126.0,
            lower_bound: -1435.0,
            region_radius: 50.0,
        }
    }

    /// `½‖w‖²` in `dim` dimensions; ℓ = 1 and L* = 0 hold globally.
    pub fn quadratic(dim: usize) -> Result<Self> {
        Self::quadratic_centered(ParamVector::zeros(dim))
    }

    pub fn quadratic_centered(center: ParamVector) -> Result<Self> {
        let dim = center.dim();
        if dim == 0 {
            return Err(Error::Config("quadratic objective needs dim >= 1".into()));
        }
        Ok(Self {
            name: format!("quadratic_{dim}"),
            kind: ObjectiveKind::Quadratic { center },
            dim,
            smoothness: 1.0,
            lower_bound: 0.0,
            region_radius: f64::INFINITY,
        })
    }

    fn check_dim(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.dim {
            return Err(Error::Config(format!(
                "objective {} expects dimension {}, got {}",
                self.name,
                self.dim,
                w.len()
            )));
        }
        Ok(())
    }

    pub fn value(&self, w: &[f64]) -> Result<f64> {
        self.check_dim(w)?;
        Ok(self.value_unchecked(w))
    }

    pub fn grad(&self, w: &[f64]) -> Result<ParamVector> {
        self.check_dim(w)?;
        let mut g = ParamVector::zeros(self.dim);
        self.grad_into(w, &mut g);
        Ok(g)
    }

    pub fn grad_norm_sq(&self, w: &[f64]) -> Result<f64> {
        Ok(self.grad(w)?.norm_sq())
    }

    pub(crate) fn value_unchecked(&self, w: &[f64]) -> f64 {
        match &self.kind {
            ObjectiveKind::Synthetic1d => 10.0 * w[0] * (w[0] / 10.0).sin(),
            ObjectiveKind::Synthetic3d => {
                10.0 * w[0] * (w[1] / 10.0).sin()
                    + 10.0 * w[1] * (w[2] / 10.0).sin()
                    + 10.0 * w[2] * (w[0] / 2.0).sin()
            }
            ObjectiveKind::Quadratic { center } => {
                0.5 * w
                    .iter()
                    .zip(center.iter())
                    .map(|(a, c)| (a - c) * (a - c))
                    .sum::<f64>()
            }
        }
    }

    pub(crate) fn grad_into(&self, w: &[f64], g: &mut [f64]) {
        match &self.kind {
            ObjectiveKind::Synthetic1d => {
                let x = w[0] / 10.0;
                g[0] = 10.0 * x.sin() + w[0] * x.cos();
            }
            ObjectiveKind::Synthetic3d => {
                let (a, b, c) = (w[0], w[1], w[2]);
                g[0] = 10.0 * (b / 10.0).sin() + 5.0 * c * (a / 2.0).cos();
                g[1] = a * (b / 10.0).cos() + 10.0 * (c / 10.0).sin();
                g[2] = b * (c / 10.0).cos() + 10.0 * (a / 2.0).sin();
            }
            ObjectiveKind::Quadratic { center } => {
                for ((gi, wi), ci) in g.iter_mut().zip(w).zip(center.iter()) {
                    *gi = wi - ci;
                }
            }
        }
    }

    /// Whether `w` lies in the box where ℓ and L* are certified.
    pub fn in_region(&self, w: &[f64]) -> bool {
        w.iter().all(|v| v.abs() <= self.region_radius)
    }

    /// Step-size bound `1 / (ℓ (1 + c))` under which the convergence rate is proven.
    pub fn theorem_step_bound(&self, c: f64) -> f64 {
        1.0 / (self.smoothness * (1.0 + c))
    }
}

/// Named objectives; `quadratic_<d>` for any `d >= 1` is also accepted by [`lookup`].
pub fn builtin_objectives() -> BTreeMap<String, Objective> {
    let mut map = BTreeMap::new();
    for obj in [Objective::synthetic1d(), Objective::synthetic3d()] {
        map.insert(obj.name.clone(), obj);
    }
    for d in 1..=3 {
        let q = Objective::quadratic(d).expect("d >= 1");
        map.insert(q.name.clone(), q);
    }
    map
}

pub fn lookup(name: &str) -> Result<Objective> {
    if let Some(d) = name.strip_prefix("quadratic_") {
        let d: usize = d
            .parse()
            .map_err(|_| Error::Config(format!("bad quadratic dimension in {name:?}")))?;
        return Objective::quadratic(d);
    }
    builtin_objectives()
        .remove(name)
        .ok_or_else(|| Error::Config(format!("unknown objective {name:?}")))
}
