//! STAPLE consensus (Warfield, Zou & Wells 2004) over binary and multi-class
//! rater segmentations.
//!
//! The foreground prior is the mean foreground fraction over raters and stays
//! fixed during the iterations. Multi-class maps are fused by one binary run
//! per rootlet class followed by an argmax over posteriors.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::volume::{LabelMap, ROOTLET_CLASSES};

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 100;
pub const INITIAL_PERFORMANCE: f64 = 0.9999;
const PROB_FLOOR: f64 = 1e-7;
const MAX_RATERS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct StapleResult {
    /// Per-rater sensitivity `p_j`.
    pub sensitivity: Vec<f64>,
    /// Per-rater specificity `q_j`.
    pub specificity: Vec<f64>,
    /// Per-voxel posterior probability of foreground.
    pub posterior: Vec<f64>,
    pub prior: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl StapleResult {
    /// Voxels whose posterior is at least 0.5.
    pub fn threshold(&self, template: &LabelMap) -> LabelMap {
        let data = self.posterior.iter().map(|&w| u8::from(w >= 0.5)).collect();
        LabelMap::new(template.grid().clone(), data).expect("posterior covers the grid")
    }
}

#[inline]
fn clamp_prob(x: f64) -> f64 {
    x.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Voxels grouped by their rater decision vector (bit j = rater j voted foreground).
struct Patterns {
    codes: Vec<u64>,
    counts: Vec<f64>,
    voxel_pattern: Vec<u32>,
}

fn group_patterns(masks: &[&LabelMap]) -> Patterns {
    let n = masks[0].data().len();
    let per_voxel: Vec<u64> = (0..n)
        .into_par_iter()
        .map(|i| {
            masks
                .iter()
                .enumerate()
                .fold(0u64, |acc, (j, m)| acc | (u64::from(m.data()[i] != 0) << j))
        })
        .collect();
    let mut by_code: BTreeMap<u64, f64> = BTreeMap::new();
    for &c in &per_voxel {
        *by_code.entry(c).or_default() += 1.0;
    }
    let codes: Vec<u64> = by_code.keys().copied().collect();
    let counts: Vec<f64> = by_code.values().copied().collect();
    let rank: HashMap<u64, u32> = codes.iter().enumerate().map(|(r, &c)| (c, r as u32)).collect();
    let voxel_pattern = per_voxel.iter().map(|c| rank[c]).collect();
    Patterns {
        codes,
        counts,
        voxel_pattern,
    }
}

fn posterior_for(code: u64, prior: f64, p: &[f64], q: &[f64]) -> f64 {
    let mut log_fg = prior.ln();
    let mut log_bg = (1.0 - prior).ln();
    for j in 0..p.len() {
        if code >> j & 1 == 1 {
            log_fg += p[j].ln();
            log_bg += (1.0 - q[j]).ln();
        } else {
            log_fg += (1.0 - p[j]).ln();
            log_bg += q[j].ln();
        }
    }
    if log_bg == f64::NEG_INFINITY {
        return 1.0;
    }
    1.0 / (1.0 + (log_bg - log_fg).exp())
}

/// Binary STAPLE on `masks` (values in {0, 1}) sharing one grid.
pub fn staple_binary(masks: &[LabelMap], tol: f64, max_iter: usize) -> Result<StapleResult> {
    let refs: Vec<&LabelMap> = masks.iter().collect();
    staple_refs(&refs, tol, max_iter)
}

fn staple_refs(masks: &[&LabelMap], tol: f64, max_iter: usize) -> Result<StapleResult> {
    if masks.len() < 2 {
        return Err(Error::Argument(format!(
            "STAPLE needs at least 2 raters, got {}",
            masks.len()
        )));
    }
    if masks.len() > MAX_RATERS {
        return Err(Error::Unsupported(format!("more than {MAX_RATERS} raters")));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::Argument("STAPLE needs tol > 0 and max_iter ≥ 1".into()));
    }
    for (j, m) in masks.iter().enumerate() {
        masks[0].grid().ensure_matches(m.grid(), &format!("rater {j}"))?;
        m.ensure_binary(&format!("rater {j}"))?;
    }
    let n_voxels = masks[0].data().len() as f64;
    let n_raters = masks.len();
    let foreground: usize = masks.iter().map(|m| m.count_nonzero()).sum();
    if foreground == 0 {
        return Err(Error::Degenerate("every rater mask is empty".into()));
    }
    let prior = foreground as f64 / (n_raters as f64 * n_voxels);

    let patterns = group_patterns(masks);
    let mut p = vec![INITIAL_PERFORMANCE; n_raters];
    let mut q = vec![INITIAL_PERFORMANCE; n_raters];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        iterations += 1;
        let w: Vec<f64> = patterns
            .codes
            .iter()
            .map(|&c| posterior_for(c, prior, &p, &q))
            .collect();

        let mut w_sum = 0.0;
        let mut bg_sum = 0.0;
        let mut tp = vec![0.0; n_raters];
        let mut tn = vec![0.0; n_raters];
        for ((&code, &count), &wi) in patterns.codes.iter().zip(&patterns.counts).zip(&w) {
            w_sum += count * wi;
            bg_sum += count * (1.0 - wi);
            for j in 0..n_raters {
                if code >> j & 1 == 1 {
                    tp[j] += count * wi;
                } else {
                    tn[j] += count * (1.0 - wi);
                }
            }
        }

        let mut delta = 0.0f64;
        for j in 0..n_raters {
            let new_p = if w_sum > 0.0 { clamp_prob(tp[j] / w_sum) } else { p[j] };
            let new_q = if bg_sum > 0.0 { clamp_prob(tn[j] / bg_sum) } else { q[j] };
            delta = delta.max((new_p - p[j]).abs()).max((new_q - q[j]).abs());
            p[j] = new_p;
            q[j] = new_q;
        }
        if delta < tol {
            converged = true;
            break;
        }
    }

    let table: Vec<f64> = patterns
        .codes
        .iter()
        .map(|&c| posterior_for(c, prior, &p, &q))
        .collect();
    let posterior = patterns.voxel_pattern.iter().map(|&r| table[r as usize]).collect();
    Ok(StapleResult {
        sensitivity: p,
        specificity: q,
        posterior,
        prior,
        iterations,
        converged,
    })
}

/// Two or more rater label maps on one grid.
#[derive(Debug, Clone)]
pub struct RaterSet {
    ids: Vec<String>,
    maps: Vec<LabelMap>,
}

impl RaterSet {
    pub fn new(raters: Vec<(String, LabelMap)>) -> Result<Self> {
        if raters.len() < 2 {
            return Err(Error::Argument(format!("need at least 2 raters, got {}", raters.len())));
        }
        let (ids, maps): (Vec<_>, Vec<_>) = raters.into_iter().unzip();
        for (id, m) in ids.iter().zip(&maps) {
            maps[0].grid().ensure_matches(m.grid(), id)?;
            m.ensure_rootlet_classes(id)?;
        }
        Ok(RaterSet { ids, maps })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn maps(&self) -> &[LabelMap] {
        &self.maps
    }

    pub fn classes_present(&self) -> Vec<u8> {
        let mut seen = [false; 256];
        for m in &self.maps {
            for l in m.labels() {
                seen[l as usize] = true;
            }
        }
        ROOTLET_CLASSES.filter(|&c| seen[c as usize]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct ClassStaple {
    pub class: u8,
    pub result: StapleResult,
}

#[derive(Debug, Clone)]
pub struct MulticlassStaple {
    pub consensus: LabelMap,
    pub classes: Vec<ClassStaple>,
    pub warnings: Vec<String>,
}

/// Per-class binary STAPLE; each voxel takes the class with the largest
/// posterior above 0.5, ties resolved toward the lower class number.
pub fn staple_multiclass(raters: &RaterSet, tol: f64, max_iter: usize) -> Result<MulticlassStaple> {
    let classes = raters.classes_present();
    let runs: Vec<(u8, Result<StapleResult>)> = classes
        .par_iter()
        .map(|&c| {
            let indicators: Vec<LabelMap> = raters.maps.iter().map(|m| m.indicator(c)).collect();
            (c, staple_binary(&indicators, tol, max_iter))
        })
        .collect();

    let mut warnings = Vec::new();
    if classes.is_empty() {
        warnings.push("no rootlet class present in any rater".to_string());
    }
    let mut results = Vec::new();
    for (c, run) in runs {
        match run {
            Ok(r) => {
                if !r.converged {
                    warnings.push(format!(
                        "class {c}: STAPLE stopped after {} iterations without converging",
                        r.iterations
                    ));
                }
                results.push(ClassStaple { class: c, result: r });
            }
            Err(e @ (Error::Degenerate(_) | Error::Unsupported(_))) => {
                warnings.push(format!("class {c} omitted: {e}"));
            }
            Err(e) => return Err(e),
        }
    }

    let template = &raters.maps[0];
    let mut consensus = LabelMap::zeros(template.grid().clone());
    for (i, out) in consensus.data_mut().iter_mut().enumerate() {
        let mut best = 0.5;
        for cr in &results {
            let w = cr.result.posterior[i];
            if w > best {
                best = w;
                *out = cr.class;
            }
        }
    }
    Ok(MulticlassStaple {
        consensus,
        classes: results,
        warnings,
    })
}
