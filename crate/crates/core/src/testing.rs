//! Multiple-testing decisions and their scoring.

use crate::linalg::Vector;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Procedure {
    /// Benjamini–Hochberg on `P⁽²⁾`.
    Bh,
    /// Bonferroni screen on `P⁽¹⁾` at `√α`, then step-up on `P⁽²⁾`.
    BonfBh,
    /// Screen at `λ`, step-up thresholds `iα/(λd)`.
    BonfBhGeneral(f64),
    KnockoffFilter,
    KnockoffFilterPlus,
}

impl Procedure {
    pub fn name(&self) -> String {
        match self {
            Procedure::Bh => "bh".into(),
            Procedure::BonfBh => "bonf_bh".into(),
            Procedure::BonfBhGeneral(l) => format!("bonf_bh_general({l})"),
            Procedure::KnockoffFilter => "knockoff".into(),
            Procedure::KnockoffFilterPlus => "knockoff_plus".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionResult {
    /// Rejected hypotheses, ascending, 0-based.
    pub rejected: Vec<usize>,
    pub r_tilde: usize,
    pub procedure: Procedure,
    /// `τ` for the knockoff filter (`∞` when nothing qualifies), else the
    /// p-value cutoff `R̃·level/d`.
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreCard {
    pub fdp: f64,
    /// Zero (and `power_defined = false`) when there are no true signals.
    pub power: f64,
    pub power_defined: bool,
    pub n_rejected: usize,
    pub n_true_alt: usize,
}

fn check_level(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Step-up with thresholds `i·step`: rejects the `R̃` smallest p-values,
/// `R̃ = max{i : P₍ᵢ₎ ≤ i·step}`.
fn step_up(p: &[f64], step: f64) -> (usize, Vec<usize>) {
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let r = (1..=p.len())
        .rev()
        .find(|&i| p[order[i - 1]] <= i as f64 * step)
        .unwrap_or(0);
    let mut rejected = order[..r].to_vec();
    rejected.sort_unstable();
    (r, rejected)
}

pub fn bh_procedure(p: &Vector, alpha: f64) -> Result<DecisionResult> {
    check_level(alpha)?;
    let d = p.len();
    let step = alpha / d.max(1) as f64;
    let (r_tilde, rejected) = step_up(p.as_slice(), step);
    Ok(DecisionResult {
        rejected,
        r_tilde,
        procedure: Procedure::Bh,
        threshold: r_tilde as f64 * step,
    })
}

/// Algorithm with the screen at `√α`.
pub fn bonferroni_bh(p1: &Vector, p2: &Vector, alpha: f64) -> Result<DecisionResult> {
    check_level(alpha)?;
    let mut out = bonferroni_bh_general(p1, p2, alpha, alpha.sqrt())?;
    out.procedure = Procedure::BonfBh;
    Ok(out)
}

/// `P̃ⱼ = 1` if `P⁽¹⁾ⱼ > λ`, else `P⁽²⁾ⱼ`; step-up at `iα/(λd)`.
pub fn bonferroni_bh_general(
    p1: &Vector,
    p2: &Vector,
    alpha: f64,
    lambda: f64,
) -> Result<DecisionResult> {
    check_level(alpha)?;
    if !(lambda > alpha && lambda < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "screening level must satisfy alpha < lambda < 1, got lambda = {lambda} with alpha = {alpha}"
        )));
    }
    if p1.len() != p2.len() {
        return Err(Error::DimensionMismatch(format!(
            "p-value families have lengths {} and {}",
            p1.len(),
            p2.len()
        )));
    }
    let screened: Vec<f64> = p1
        .iter()
        .zip(p2.iter())
        .map(|(&a, &b)| if a > lambda { 1.0 } else { b })
        .collect();
    let step = alpha / (lambda * p1.len().max(1) as f64);
    let (r_tilde, rejected) = step_up(&screened, step);
    Ok(DecisionResult {
        rejected,
        r_tilde,
        procedure: Procedure::BonfBhGeneral(lambda),
        threshold: r_tilde as f64 * step,
    })
}

/// `τ = min{t ∈ {|wⱼ| > 0} : FDP̂(t) ≤ α}`, rejecting `{j : wⱼ > τ}`.
///
/// `FDP̂(t) = (plus + #{wⱼ < −t}) / max(#{wⱼ > t}, 1)`.
pub fn knockoff_filter(w: &Vector, alpha: f64, plus: bool) -> Result<DecisionResult> {
    check_level(alpha)?;
    let mut candidates: Vec<f64> = w.iter().map(|v| v.abs()).filter(|&v| v > 0.0).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let offset = if plus { 1.0 } else { 0.0 };
    let tau = candidates
        .into_iter()
        .find(|&t| {
            let neg = w.iter().filter(|&&v| v < -t).count() as f64;
            let pos = w.iter().filter(|&&v| v > t).count().max(1) as f64;
            (offset + neg) / pos <= alpha
        })
        .unwrap_or(f64::INFINITY);
    let rejected: Vec<usize> = (0..w.len()).filter(|&j| w[j] > tau).collect();
    Ok(DecisionResult {
        r_tilde: rejected.len(),
        rejected,
        procedure: if plus {
            Procedure::KnockoffFilterPlus
        } else {
            Procedure::KnockoffFilter
        },
        threshold: tau,
    })
}

/// FDP and power against the true signal set.
pub fn score(result: &DecisionResult, truth: &[usize]) -> ScoreCard {
    let hits = result.rejected.iter().filter(|j| truth.contains(j)).count();
    let n_rejected = result.rejected.len();
    let false_hits = n_rejected - hits;
    let power_defined = !truth.is_empty();
    ScoreCard {
        fdp: false_hits as f64 / n_rejected.max(1) as f64,
        power: if power_defined {
            hits as f64 / truth.len() as f64
        } else {
            0.0
        },
        power_defined,
        n_rejected,
        n_true_alt: truth.len(),
    }
}
