//! Exhaustive enumeration of small assignment spaces and Pareto analysis in
//! the (state of quantization, relative accuracy) plane. Lower quantization
//! state and higher accuracy are both better.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{state_of_quantization, CostParams, QuantAssignment};
use crate::env::{AccuracyModel, EnvError};
use crate::nn::{NetworkSpec, NnError};

pub const DEFAULT_SPACE_CAP: u64 = 10_000;

#[derive(Debug, Error)]
pub enum ParetoError {
    #[error("assignment space has {size} points, above the cap of {cap}; subsample the bitwidth set or raise the cap")]
    SpaceTooLarge { size: u128, cap: u64 },
    #[error("no points to analyse")]
    Empty,
    #[error("empty bitwidth set")]
    EmptyBitwidths,
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub assignment: QuantAssignment,
    pub quant: f64,
    pub acc: f64,
}

/// True iff `q` dominates `p`.
pub fn is_dominated(p: &ParetoPoint, q: &ParetoPoint) -> bool {
    q.quant <= p.quant && q.acc >= p.acc && (q.quant < p.quant || q.acc > p.acc)
}

/// Non-dominated subset sorted by ascending quant. Points with identical
/// coordinates collapse to the lexicographically smallest assignment.
pub fn pareto_frontier(points: &[ParetoPoint]) -> Result<Vec<ParetoPoint>, ParetoError> {
    if points.is_empty() {
        return Err(ParetoError::Empty);
    }
    let mut sorted: Vec<&ParetoPoint> = points.iter().collect();
    sorted.sort_by(|a, b| {
        a.quant
            .total_cmp(&b.quant)
            .then(b.acc.total_cmp(&a.acc))
            .then_with(|| a.assignment.cmp(&b.assignment))
    });
    let mut front: Vec<ParetoPoint> = Vec::new();
    let mut best_acc = f64::NEG_INFINITY;
    for p in sorted {
        if p.acc > best_acc {
            best_acc = p.acc;
            front.push(p.clone());
        }
    }
    Ok(front)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub pass: bool,
    pub solution: ParetoPoint,
    /// Frontier point closest in the (quant, acc) plane.
    pub nearest: ParetoPoint,
    pub nearest_distance: f64,
    /// `solution.quant - nearest.quant`; positive means the solution is costlier.
    pub quant_gap: f64,
    /// `nearest.acc - solution.acc`; positive means the solution is less accurate.
    pub acc_gap: f64,
    pub eps_quant: f64,
    pub eps_acc: f64,
}

/// PASS iff some frontier point `f` has `solution.quant <= f.quant + eps_quant`
/// and `solution.acc >= f.acc - eps_acc`.
pub fn validate_solution(
    solution: &ParetoPoint,
    frontier: &[ParetoPoint],
    eps_quant: f64,
    eps_acc: f64,
) -> Result<ValidationReport, ParetoError> {
    if frontier.is_empty() {
        return Err(ParetoError::Empty);
    }
    let pass = frontier
        .iter()
        .any(|f| solution.quant <= f.quant + eps_quant && solution.acc >= f.acc - eps_acc);
    let dist = |f: &ParetoPoint| ((solution.quant - f.quant).powi(2) + (solution.acc - f.acc).powi(2)).sqrt();
    let nearest = frontier
        .iter()
        .min_by(|a, b| dist(a).total_cmp(&dist(b)))
        .expect("nonempty")
        .clone();
    Ok(ValidationReport {
        pass,
        nearest_distance: dist(&nearest),
        quant_gap: solution.quant - nearest.quant,
        acc_gap: nearest.acc - solution.acc,
        solution: solution.clone(),
        nearest,
        eps_quant,
        eps_acc,
    })
}

/// Every assignment of `bitwidths` (sorted ascending) to `layers` layers, in
/// lexicographic order.
pub fn all_assignments(layers: usize, bitwidths: &[u32]) -> Vec<QuantAssignment> {
    let mut set = bitwidths.to_vec();
    set.sort_unstable();
    set.dedup();
    let mut out = Vec::new();
    let mut idx = vec![0usize; layers];
    loop {
        out.push(QuantAssignment::new(idx.iter().map(|&i| set[i]).collect()));
        let mut pos = layers;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < set.len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Evaluates every assignment with `model`. Runs on the current rayon pool;
/// output is sorted by assignment, so it does not depend on scheduling. A
/// diverged finetune is recorded as zero accuracy.
pub fn enumerate_space<M: AccuracyModel + ?Sized>(
    spec: &NetworkSpec,
    cost: &CostParams,
    bitwidths: &[u32],
    model: &M,
    cap: u64,
) -> Result<Vec<ParetoPoint>, ParetoError> {
    if bitwidths.is_empty() {
        return Err(ParetoError::EmptyBitwidths);
    }
    let mut distinct = bitwidths.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let size = (distinct.len() as u128).pow(spec.num_layers() as u32);
    if size > cap as u128 {
        return Err(ParetoError::SpaceTooLarge { size, cap });
    }
    let mut points = all_assignments(spec.num_layers(), &distinct)
        .into_par_iter()
        .map(|a| {
            let quant = state_of_quantization(spec, &a, cost).map_err(EnvError::from)?;
            let acc = match model.relative_accuracy(&a) {
                Ok(v) => v,
                Err(EnvError::Nn(NnError::Diverged { .. })) => 0.0,
                Err(e) => return Err(ParetoError::Env(e)),
            };
            Ok(ParetoPoint { assignment: a, quant, acc })
        })
        .collect::<Result<Vec<_>, ParetoError>>()?;
    points.sort_by(|a, b| a.assignment.cmp(&b.assignment));
    Ok(points)
}
