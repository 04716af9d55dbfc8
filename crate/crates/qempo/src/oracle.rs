//! Independent brute-force certification: exhaustive simplex-grid search
//! over probability vectors, plus central finite differences.
//!
//! Grid scans are deliberately naive so they cannot share a bug with the
//! analytical machinery they certify. A tractability guard keeps them at
//! desk scale (`n <= 5`, `h >= 0.005`); larger instances rely on KKT
//! verification instead.

use crate::error::{Error, Result};
use crate::instance::{AlignmentInstance, PolicyDistribution};
use crate::measures::kl_divergence_raw;

/// Largest dimension the exhaustive scan accepts.
pub const MAX_GRID_DIMENSION: usize = 5;

/// Finest resolution the exhaustive scan accepts.
pub const MIN_GRID_STEP: f64 = 0.005;

/// All probability vectors of a given dimension whose entries are integer
/// multiples of a step `h` and sum to one.
#[derive(Debug, Clone, Copy)]
pub struct SimplexGrid {
    dimension: usize,
    steps: u32,
}

impl SimplexGrid {
    /// `h` must divide 1 to within floating-point rounding.
    pub fn new(dimension: usize, h: f64) -> Result<Self> {
        if dimension < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid dimension must be at least 2, got {dimension}"
            )));
        }
        if dimension > MAX_GRID_DIMENSION {
            return Err(Error::ResourceLimit(format!(
                "grid dimension {dimension} exceeds the enumeration guard ({MAX_GRID_DIMENSION})"
            )));
        }
        if !(h > 0.0) || h > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "grid step must lie in (0, 1], got {h}"
            )));
        }
        if h < MIN_GRID_STEP {
            return Err(Error::ResourceLimit(format!(
                "grid step {h} is finer than the enumeration guard ({MIN_GRID_STEP})"
            )));
        }
        let steps_f = 1.0 / h;
        let steps = steps_f.round() as u32;
        if (steps_f - steps as f64).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "grid step {h} does not divide 1"
            )));
        }
        Ok(Self { dimension, steps })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn step(&self) -> f64 {
        1.0 / self.steps as f64
    }

    /// Exact number of grid points: the compositions of `steps` into
    /// `dimension` nonnegative parts, `C(steps + d - 1, d - 1)`.
    pub fn point_count(&self) -> u128 {
        let n = (self.steps as u128) + (self.dimension as u128) - 1;
        let k = (self.dimension as u128) - 1;
        let mut result: u128 = 1;
        for i in 0..k {
            result = result * (n - i) / (i + 1);
        }
        result
    }

    /// Visits every grid point exactly once, in lexicographic order of the
    /// underlying integer compositions. The same buffer is reused between
    /// calls.
    pub fn for_each(&self, mut visit: impl FnMut(&[f64])) {
        let d = self.dimension;
        let steps = self.steps;
        let mut counts = vec![0u32; d];
        let mut probs = vec![0.0f64; d];
        fn recurse(
            counts: &mut [u32],
            probs: &mut [f64],
            level: usize,
            remaining: u32,
            steps: u32,
            visit: &mut impl FnMut(&[f64]),
        ) {
            if level == counts.len() - 1 {
                counts[level] = remaining;
                probs[level] = remaining as f64 / steps as f64;
                visit(probs);
                return;
            }
            for take in 0..=remaining {
                counts[level] = take;
                probs[level] = take as f64 / steps as f64;
                recurse(counts, probs, level + 1, remaining - take, steps, visit);
            }
        }
        recurse(&mut counts, &mut probs, 0, steps, steps, &mut visit);
    }
}

/// Best feasible grid point found by an exhaustive scan, or evidence that
/// the feasible set misses the grid entirely.
#[derive(Debug, Clone)]
pub struct GridOptimum {
    /// `None` when no grid point was feasible.
    pub best: Option<PolicyDistribution>,
    /// Objective value at `best` (KL for the minimization, entropy for the
    /// maximization).
    pub value: f64,
    pub points_scanned: u64,
    pub feasible_points: u64,
}

fn scan(
    inst: &AlignmentInstance,
    grid: &SimplexGrid,
    minimize: bool,
    mut feasible: impl FnMut(&[f64]) -> bool,
    mut objective: impl FnMut(&[f64]) -> Option<f64>,
) -> Result<GridOptimum> {
    if grid.dimension() != inst.len() {
        return Err(Error::InvalidArgument(format!(
            "grid dimension {} does not match instance {:?} with {} candidates",
            grid.dimension(),
            inst.id,
            inst.len()
        )));
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut scanned = 0u64;
    let mut feasible_count = 0u64;
    grid.for_each(|probs| {
        scanned += 1;
        if !feasible(probs) {
            return;
        }
        feasible_count += 1;
        let Some(value) = objective(probs) else {
            return;
        };
        let better = match &best {
            None => true,
            Some((incumbent, _)) => {
                if minimize {
                    value < *incumbent
                } else {
                    value > *incumbent
                }
            }
        };
        // Lexicographically first point wins ties because enumeration is
        // lexicographic and only strict improvement replaces the incumbent.
        if better {
            best = Some((value, probs.to_vec()));
        }
    });
    match best {
        Some((value, probs)) => Ok(GridOptimum {
            best: Some(PolicyDistribution::new(inst.id.clone(), probs)?),
            value,
            points_scanned: scanned,
            feasible_points: feasible_count,
        }),
        None => Ok(GridOptimum {
            best: None,
            value: if minimize {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            },
            points_scanned: scanned,
            feasible_points: 0,
        }),
    }
}

/// Exhaustive minimizer of `KL(p || ref)` over feasible grid points
/// (`E_p[r] >= reward_floor`). Grid points stepping outside the reference
/// support are skipped: their KL is infinite.
pub fn brute_force_min_kl(
    inst: &AlignmentInstance,
    reward_floor: f64,
    grid: &SimplexGrid,
) -> Result<GridOptimum> {
    let rewards = inst.rewards();
    let ref_probs = inst.ref_probs();
    scan(
        inst,
        grid,
        true,
        |p| dot(p, &rewards) >= reward_floor,
        |p| kl_divergence_raw(p, &ref_probs).ok(),
    )
}

/// Exhaustive maximizer of entropy over feasible grid points
/// (`E_p[r] >= reward_floor`, and `KL(p || ref) <= kl_budget` when a budget
/// is given).
pub fn brute_force_max_entropy(
    inst: &AlignmentInstance,
    reward_floor: f64,
    kl_budget: Option<f64>,
    grid: &SimplexGrid,
) -> Result<GridOptimum> {
    let rewards = inst.rewards();
    let ref_probs = inst.ref_probs();
    scan(
        inst,
        grid,
        false,
        |p| {
            if dot(p, &rewards) < reward_floor {
                return false;
            }
            match kl_budget {
                None => true,
                Some(k) => match kl_divergence_raw(p, &ref_probs) {
                    Ok(kl) => kl <= k,
                    Err(_) => false,
                },
            }
        },
        |p| {
            Some(
                p.iter()
                    .map(|&v| if v > 0.0 { -v * v.ln() } else { 0.0 })
                    .sum(),
            )
        },
    )
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Conservative bound on how far the best grid point's entropy can sit
/// from the true optimum at resolution `h`: `ln(n) * h * n`.
pub fn entropy_grid_gap(n: usize, h: f64) -> f64 {
    (n as f64).ln() * h * n as f64
}

/// The KL analogue of [`entropy_grid_gap`]: `n * h * (1 + L)` where `L`
/// caps `|ln(p_i / ref_i)|` over the optimum's support. Callers pass the
/// largest log-ratio their analytical optimum exhibits.
pub fn kl_grid_gap(n: usize, h: f64, max_abs_log_ratio: f64) -> f64 {
    n as f64 * h * (1.0 + max_abs_log_ratio)
}

/// Central-difference gradient `(f(x + h e_i) - f(x - h e_i)) / 2h` per
/// coordinate. `f` must return finite values at every probe.
pub fn finite_diff_gradient(f: impl Fn(&[f64]) -> f64, theta: &[f64], h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be strictly positive, got {h}"
        )));
    }
    let mut grad = Vec::with_capacity(theta.len());
    let mut probe = theta.to_vec();
    for i in 0..theta.len() {
        probe[i] = theta[i] + h;
        let plus = f(&probe);
        probe[i] = theta[i] - h;
        let minus = f(&probe);
        probe[i] = theta[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::EvaluationFailure(format!(
                "objective non-finite near coordinate {i}: f+ = {plus}, f- = {minus}"
            )));
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}
