use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{EnergyModel, Neuron, TwoLayerTanh};
use crate::error::{Error, Result};
use crate::linalg::orthonormalize;
use crate::manifold::LinearManifoldSpec;

/// One wide-network slot receiving a copy of a narrow neuron.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSlot {
    pub slot: usize,
    /// Fraction of the narrow neuron's output weight assigned to this slot.
    pub fraction: f64,
}

/// Assignment of narrow-network neurons to slots of a wider network.
///
/// `assignments[i]` lists the wide slots that copy narrow neuron `i`. The
/// fractions of each list must sum to one, so the absolute output-weight
/// shares sum to the narrow neuron's `a`. Slots not listed anywhere become
/// dead neurons with all parameters zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub width: usize,
    pub assignments: Vec<Vec<SplitSlot>>,
}

impl SplitPlan {
    /// Splits a single neuron evenly across `width` slots.
    pub fn even(width: usize) -> Self {
        let fraction = 1.0 / width as f64;
        Self {
            width,
            assignments: vec![(0..width)
                .map(|slot| SplitSlot { slot, fraction })
                .collect()],
        }
    }

    pub fn validate(&self, narrow_width: usize) -> Result<()> {
        if self.assignments.len() != narrow_width {
            return Err(Error::config(format!(
                "split plan covers {} narrow neurons, network has {narrow_width}",
                self.assignments.len()
            )));
        }
        let mut used = vec![false; self.width];
        for (i, slots) in self.assignments.iter().enumerate() {
            if slots.is_empty() {
                return Err(Error::config(format!("narrow neuron {i} has no slots")));
            }
            let mut total = 0.0;
            for s in slots {
                if s.slot >= self.width {
                    return Err(Error::config(format!(
                        "slot {} out of range for width {}",
                        s.slot, self.width
                    )));
                }
                if std::mem::replace(&mut used[s.slot], true) {
                    return Err(Error::config(format!("slot {} assigned twice", s.slot)));
                }
                if !s.fraction.is_finite() {
                    return Err(Error::config("split fractions must be finite"));
                }
                total += s.fraction;
            }
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::config(format!(
                    "shares of narrow neuron {i} sum to {total} of its output weight, expected 1"
                )));
            }
        }
        Ok(())
    }
}

/// Embeds a critical point of a narrow network into the wide network of
/// `plan.width` neurons by replicating neurons and dividing their output
/// weights.
///
/// Returns the embedded point and the linear manifold of share
/// redistributions through it; every point of that manifold realizes the same
/// network function and is therefore critical.
pub fn split_embed(
    narrow_model: &TwoLayerTanh,
    narrow_critical: &DVector<f64>,
    plan: &SplitPlan,
) -> Result<(DVector<f64>, LinearManifoldSpec)> {
    plan.validate(narrow_model.width())?;
    let residual = narrow_model.gradient(narrow_critical).norm();
    if !(residual <= 1e-10) {
        return Err(Error::precondition(format!(
            "narrow point is not critical: gradient norm {residual:e} > 1e-10"
        )));
    }
    let narrow = TwoLayerTanh::unpack(narrow_critical);
    let mut wide = vec![Neuron::new(0.0, 0.0, 0.0); plan.width];
    let mut directions = Vec::new();
    for (neuron, slots) in narrow.iter().zip(&plan.assignments) {
        for s in slots {
            wide[s.slot] = Neuron::new(neuron.a * s.fraction, neuron.w, neuron.b);
        }
        let first = slots[0].slot;
        for s in &slots[1..] {
            let mut dir = DVector::zeros(3 * plan.width);
            dir[3 * first] = 1.0;
            dir[3 * s.slot] = -1.0;
            directions.push(dir);
        }
    }
    let theta = TwoLayerTanh::pack(&wide);
    let basis = if directions.is_empty() {
        DMatrix::zeros(theta.len(), 0)
    } else {
        orthonormalize(&DMatrix::from_columns(&directions))?
    };
    let manifold = LinearManifoldSpec::new(theta.clone(), basis)?;
    Ok((theta, manifold))
}

/// Locates a critical point of `model` starting from `init`: gradient descent
/// with backtracking until the gradient is moderately small, then Newton
/// polishing down to `tol`.
pub fn find_narrow_critical(
    model: &TwoLayerTanh,
    init: &DVector<f64>,
    tol: f64,
) -> Result<DVector<f64>> {
    const DESCENT_ITERS: usize = 200_000;
    const NEWTON_ITERS: usize = 50;

    let mut theta = init.clone();
    let mut step = 1.0;
    let mut g = model.gradient(&theta);
    for _ in 0..DESCENT_ITERS {
        if g.norm() <= 1e-6_f64.max(tol) {
            break;
        }
        let e = model.energy(&theta);
        let gg = g.norm_squared();
        loop {
            let trial = &theta - &g * step;
            if model.energy(&trial) <= e - 0.5 * step * gg || step < 1e-12 {
                theta = trial;
                break;
            }
            step *= 0.5;
        }
        step = (step * 2.0).min(10.0);
        g = model.gradient(&theta);
    }
    let mut best = (g.norm(), theta.clone());
    for _ in 0..NEWTON_ITERS {
        if best.0 <= tol {
            break;
        }
        let h = model.hessian(&theta);
        let Some(delta) = h.lu().solve(&g) else {
            break;
        };
        theta -= delta;
        g = model.gradient(&theta);
        let gn = g.norm();
        if !gn.is_finite() {
            break;
        }
        if gn < best.0 {
            best = (gn, theta.clone());
        }
    }
    if best.0 <= tol {
        Ok(best.1)
    } else {
        Err(Error::precondition(format!(
            "narrow critical search stalled at gradient norm {:e} (target {tol:e})",
            best.0
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::generate_dataset;

    fn narrow_fixture() -> (TwoLayerTanh, DVector<f64>) {
        let teacher = [Neuron::new(1.0, 1.3, 0.2), Neuron::new(-0.6, -0.9, 0.7)];
        let ds = generate_dataset(17, 15, &teacher).unwrap();
        let narrow = TwoLayerTanh::new(1, &ds).unwrap();
        let crit = find_narrow_critical(
            &narrow,
            &TwoLayerTanh::pack(&[Neuron::new(0.5, 1.0, 0.0)]),
            1e-12,
        )
        .unwrap();
        (narrow, crit)
    }

    #[test]
    fn two_way_split_gives_one_dimensional_manifold() {
        let (narrow, crit) = narrow_fixture();
        let plan = SplitPlan {
            width: 2,
            assignments: vec![vec![
                SplitSlot {
                    slot: 0,
                    fraction: 0.5,
                },
                SplitSlot {
                    slot: 1,
                    fraction: 0.5,
                },
            ]],
        };
        let (theta, manifold) = split_embed(&narrow, &crit, &plan).unwrap();
        assert_eq!(manifold.dim(), 1);
        assert_eq!(theta[1], crit[1]);
        assert_eq!(theta[4], crit[1]);
        assert_eq!(theta[0] + theta[3], crit[0]);
    }

    #[test]
    fn shares_must_sum_to_output_weight() {
        let (narrow, crit) = narrow_fixture();
        let plan = SplitPlan {
            width: 2,
            assignments: vec![vec![
                SplitSlot {
                    slot: 0,
                    fraction: 0.5,
                },
                SplitSlot {
                    slot: 1,
                    fraction: 0.6,
                },
            ]],
        };
        assert!(matches!(
            split_embed(&narrow, &crit, &plan),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn non_critical_narrow_point_is_rejected() {
        let (narrow, crit) = narrow_fixture();
        let mut off = crit.clone();
        off[1] += 1e-3;
        let err = split_embed(&narrow, &off, &SplitPlan::even(3)).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
        assert!(err.to_string().contains("gradient norm"));
    }

    #[test]
    fn duplicate_slots_are_rejected() {
        let plan = SplitPlan {
            width: 3,
            assignments: vec![vec![
                SplitSlot {
                    slot: 1,
                    fraction: 0.5,
                },
                SplitSlot {
                    slot: 1,
                    fraction: 0.5,
                },
            ]],
        };
        assert!(plan.validate(1).is_err());
    }
}
