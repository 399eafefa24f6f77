//! Evaluation arithmetic: Dice overlap, coefficient of variation and mean
//! absolute error across levels.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::LabelMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiceScore {
    pub value: f64,
    /// Both masks were empty; the score is defined as 1.0.
    pub both_empty: bool,
}

/// `2|A∩B| / (|A|+|B|)` over nonzero voxels.
pub fn dice(pred: &LabelMap, truth: &LabelMap) -> Result<DiceScore> {
    pred.grid().ensure_matches(truth.grid(), "dice")?;
    let (mut a, mut b, mut both) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        let (p, t) = (p != 0, t != 0);
        a += usize::from(p);
        b += usize::from(t);
        both += usize::from(p && t);
    }
    Ok(if a + b == 0 {
        DiceScore {
            value: 1.0,
            both_empty: true,
        }
    } else {
        DiceScore {
            value: 2.0 * both as f64 / (a + b) as f64,
            both_empty: false,
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SdConvention {
    /// Divide by N − 1.
    #[default]
    Sample,
    /// Divide by N.
    Population,
}

impl fmt::Display for SdConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SdConvention::Sample => "sample",
            SdConvention::Population => "population",
        })
    }
}

impl FromStr for SdConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sample" => Ok(SdConvention::Sample),
            "population" => Ok(SdConvention::Population),
            other => Err(Error::Argument(format!("unknown sd convention {other:?}"))),
        }
    }
}

/// Mean and standard deviation; the sd is 0 for fewer than 2 values under the
/// sample convention.
pub fn mean_sd(values: &[f64], convention: SdConvention) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    let denom = match convention {
        SdConvention::Sample => n - 1.0,
        SdConvention::Population => n,
    };
    let sd = if denom > 0.0 { (ss / denom).sqrt() } else { 0.0 };
    Some((mean, sd))
}

/// Coefficient of variation in percent: `100 · sd / |mean|`.
pub fn cov(values: &[f64], convention: SdConvention) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::Degenerate(format!(
            "COV needs at least 2 values, got {}",
            values.len()
        )));
    }
    let (mean, sd) = mean_sd(values, convention).expect("non-empty");
    if mean.abs() < 1e-9 {
        return Err(Error::Degenerate("COV undefined for a mean of zero".into()));
    }
    Ok(100.0 * sd / mean.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MulticlassDice {
    pub per_class: BTreeMap<u8, f64>,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    /// Requested classes absent from the truth map.
    pub excluded: Vec<u8>,
    pub flags: Vec<String>,
}

pub fn dice_multiclass(pred: &LabelMap, truth: &LabelMap, classes: &[u8]) -> Result<MulticlassDice> {
    pred.grid().ensure_matches(truth.grid(), "dice")?;
    let present = truth.labels();
    let mut per_class = BTreeMap::new();
    let mut excluded = Vec::new();
    let mut flags = Vec::new();
    for &c in classes {
        if !present.contains(&c) {
            excluded.push(c);
            flags.push(format!("class {c} absent from truth; excluded from Dice"));
            continue;
        }
        per_class.insert(c, dice(&pred.indicator(c), &truth.indicator(c))?.value);
    }
    let values: Vec<f64> = per_class.values().copied().collect();
    let stats = mean_sd(&values, SdConvention::Sample);
    if values.len() == 1 {
        flags.push("Dice sd undefined for a single class; reported as 0".into());
    }
    Ok(MulticlassDice {
        per_class,
        mean: stats.map(|s| s.0),
        sd: stats.map(|s| s.1),
        excluded,
        flags,
    })
}

/// Dice summaries over several images, pooled two ways.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiceAggregation {
    /// Mean and sample sd over every (image, level) pair.
    pub pooled_mean: f64,
    pub pooled_sd: f64,
    pub pairs: usize,
    /// Mean per level across images.
    pub per_level_mean: BTreeMap<u8, f64>,
    /// Mean and sample sd of the per-level means.
    pub level_means_mean: f64,
    pub level_means_sd: f64,
}

pub fn aggregate_dice(images: &[MulticlassDice]) -> Option<DiceAggregation> {
    let pooled: Vec<f64> = images.iter().flat_map(|d| d.per_class.values().copied()).collect();
    let (pooled_mean, pooled_sd) = mean_sd(&pooled, SdConvention::Sample)?;
    let mut by_level: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
    for d in images {
        for (&c, &v) in &d.per_class {
            by_level.entry(c).or_default().push(v);
        }
    }
    let per_level_mean: BTreeMap<u8, f64> = by_level
        .iter()
        .map(|(&c, v)| (c, v.iter().sum::<f64>() / v.len() as f64))
        .collect();
    let means: Vec<f64> = per_level_mean.values().copied().collect();
    let (level_means_mean, level_means_sd) = mean_sd(&means, SdConvention::Sample)?;
    Some(DiceAggregation {
        pooled_mean,
        pooled_sd,
        pairs: pooled.len(),
        per_level_mean,
        level_means_mean,
        level_means_sd,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaeResult {
    pub mae_mm: f64,
    pub levels: Vec<u8>,
    /// Levels present on only one side.
    pub excluded: Vec<u8>,
}

/// Mean |test − reference| over levels present in both maps.
pub fn mae_levels(reference: &BTreeMap<u8, f64>, test: &BTreeMap<u8, f64>) -> Result<MaeResult> {
    let mut levels = Vec::new();
    let mut excluded = Vec::new();
    let mut total = 0.0;
    let all: std::collections::BTreeSet<u8> = reference.keys().chain(test.keys()).copied().collect();
    for l in all {
        match (reference.get(&l), test.get(&l)) {
            (Some(r), Some(t)) => {
                total += (t - r).abs();
                levels.push(l);
            }
            _ => excluded.push(l),
        }
    }
    if levels.is_empty() {
        return Err(Error::Degenerate("no level shared by reference and test".into()));
    }
    Ok(MaeResult {
        mae_mm: total / levels.len() as f64,
        levels,
        excluded,
    })
}

/// JSON metrics report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dice: BTreeMap<u8, f64>,
    pub dice_mean: Option<f64>,
    pub dice_sd: Option<f64>,
    pub cov: BTreeMap<u8, f64>,
    pub mae: BTreeMap<String, f64>,
    pub flags: Vec<String>,
}

impl MetricsReport {
    pub fn validate(&self) -> Result<()> {
        let bad_dice = self.dice.values().any(|d| !(0.0..=1.0).contains(d));
        let bad_cov = self.cov.values().any(|c| !(*c >= 0.0));
        let bad_mae = self.mae.values().any(|m| !(*m >= 0.0));
        if bad_dice || bad_cov || bad_mae {
            return Err(Error::Report("metric outside its valid range".into()));
        }
        Ok(())
    }

    /// CSV mirror with columns `metric,key,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["metric", "key", "value"])?;
        let f = |v: f64| format!("{v:.6}");
        for (l, v) in &self.dice {
            w.write_record(["dice".to_string(), l.to_string(), f(*v)])?;
        }
        if let Some(m) = self.dice_mean {
            w.write_record(["dice_mean".to_string(), String::new(), f(m)])?;
        }
        if let Some(s) = self.dice_sd {
            w.write_record(["dice_sd".to_string(), String::new(), f(s)])?;
        }
        for (l, v) in &self.cov {
            w.write_record(["cov".to_string(), l.to_string(), f(*v)])?;
        }
        for (k, v) in &self.mae {
            w.write_record(["mae".to_string(), k.clone(), f(*v)])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Grid;

    fn mask(on: &[usize]) -> LabelMap {
        let g = Grid::with_spacing([4, 4, 1], [1.0; 3]).unwrap();
        let mut d = vec![0u8; 16];
        for &i in on {
            d[i] = 1;
        }
        LabelMap::new(g, d).unwrap()
    }

    #[test]
    fn dice_examples() {
        assert_eq!(dice(&mask(&[1, 2]), &mask(&[1, 2])).unwrap().value, 1.0);
        assert_eq!(dice(&mask(&[1, 2]), &mask(&[3, 4])).unwrap().value, 0.0);
        assert_eq!(dice(&mask(&[0, 1, 2, 3]), &mask(&[2, 3, 4, 5])).unwrap().value, 0.5);
        let e = dice(&mask(&[]), &mask(&[])).unwrap();
        assert!(e.both_empty && e.value == 1.0);
    }

    #[test]
    fn dice_grid_mismatch() {
        let other = LabelMap::zeros(Grid::with_spacing([4, 4, 2], [1.0; 3]).unwrap());
        assert!(matches!(dice(&mask(&[]), &other), Err(Error::Contract(_))));
    }

    #[test]
    fn multiclass_identity_and_miss() {
        let g = Grid::with_spacing([7, 1, 1], [1.0; 3]).unwrap();
        let truth = LabelMap::new(g.clone(), (2..=8).collect()).unwrap();
        let d = dice_multiclass(&truth, &truth, &[2, 3, 4, 5, 6, 7, 8]).unwrap();
        assert!(d.per_class.values().all(|v| *v == 1.0));
        assert_eq!((d.mean, d.sd), (Some(1.0), Some(0.0)));

        let pred = LabelMap::new(g, vec![2, 3, 4, 0, 6, 7, 8]).unwrap();
        let d = dice_multiclass(&pred, &truth, &[5]).unwrap();
        assert_eq!(d.per_class[&5], 0.0);
    }

    #[test]
    fn multiclass_absent_class_excluded() {
        let g = Grid::with_spacing([3, 1, 1], [1.0; 3]).unwrap();
        let truth = LabelMap::new(g, vec![0, 2, 2]).unwrap();
        let d = dice_multiclass(&truth, &truth, &[2, 3]).unwrap();
        assert_eq!(d.excluded, vec![3]);
        assert_eq!(d.per_class.len(), 1);
        assert!(!d.flags.is_empty());
    }

    #[test]
    fn cov_examples() {
        assert_eq!(cov(&[5.0, 5.0, 5.0], SdConvention::Sample).unwrap(), 0.0);
        let c = cov(&[9.0, 11.0], SdConvention::Sample).unwrap();
        assert!((c - 100.0 * 2f64.sqrt() / 10.0).abs() < 1e-12);
        let p = cov(&[9.0, 11.0], SdConvention::Population).unwrap();
        assert!((p - 10.0).abs() < 1e-12);
        assert!(matches!(
            cov(&[1.0, -1.0], SdConvention::Sample),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(cov(&[1.0], SdConvention::Sample), Err(Error::Degenerate(_))));
    }

    #[test]
    fn mae_examples() {
        let r: BTreeMap<u8, f64> = [(2, 30.0), (3, 40.0)].into();
        let t: BTreeMap<u8, f64> = [(2, 31.0), (3, 38.0)].into();
        assert_eq!(mae_levels(&r, &t).unwrap().mae_mm, 1.5);
        assert_eq!(mae_levels(&r, &r).unwrap().mae_mm, 0.0);
        let partial: BTreeMap<u8, f64> = [(3, 41.0), (8, 90.0)].into();
        let m = mae_levels(&r, &partial).unwrap();
        assert_eq!(
            (m.mae_mm, m.levels.clone(), m.excluded.clone()),
            (1.0, vec![3], vec![2, 8])
        );
        let none: BTreeMap<u8, f64> = [(7, 1.0)].into();
        assert!(matches!(mae_levels(&r, &none), Err(Error::Degenerate(_))));
    }

    #[test]
    fn aggregation_two_ways() {
        let img = |pairs: &[(u8, f64)]| MulticlassDice {
            per_class: pairs.iter().copied().collect(),
            mean: None,
            sd: None,
            excluded: vec![],
            flags: vec![],
        };
        let a = aggregate_dice(&[img(&[(2, 0.8), (3, 0.6)]), img(&[(2, 0.6)])]).unwrap();
        assert_eq!(a.pairs, 3);
        assert!((a.pooled_mean - 2.0 / 3.0).abs() < 1e-12);
        assert!((a.per_level_mean[&2] - 0.7).abs() < 1e-12);
        assert!((a.level_means_mean - 0.65).abs() < 1e-12);
    }

    #[test]
    fn report_json_shape() {
        let mut r = MetricsReport::default();
        r.dice.insert(2, 0.5);
        r.dice_mean = Some(0.5);
        r.mae.insert("1.2".into(), 0.3);
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["dice"]["2"], 0.5);
        assert_eq!(v["mae"]["1.2"], 0.3);
        assert!(v["flags"].as_array().unwrap().is_empty());
        r.validate().unwrap();
    }
}
