//! Evaluation metrics on `n_space × n_time` fields with per-element weights.

use serde::{Deserialize, Serialize};

use crate::data::VariableBlock;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

fn check(truth: &Matrix, pred: &Matrix, weights: &[f64]) -> Result<()> {
    if truth.shape() != pred.shape() {
        return Err(Error::shape(format!("truth {:?} vs prediction {:?}", truth.shape(), pred.shape())));
    }
    if weights.len() != truth.rows() {
        return Err(Error::shape(format!(
            "{} weights for {} elements",
            weights.len(),
            truth.rows()
        )));
    }
    if truth.cols() == 0 || truth.rows() == 0 {
        return Err(Error::shape("empty field"));
    }
    if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidParam("weights must be positive and finite".into()));
    }
    Ok(())
}

/// Weights rescaled so that they sum to the number of elements.
pub fn normalized_weights(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    let n = weights.len() as f64;
    weights.iter().map(|w| w * n / total).collect()
}

/// Weighted coefficient of determination over all space-time entries.
pub fn r2(truth: &Matrix, pred: &Matrix, weights: &[f64]) -> Result<f64> {
    check(truth, pred, weights)?;
    let w = normalized_weights(weights);
    let nt = truth.cols() as f64;
    let mut mean = 0.0;
    for (i, wi) in w.iter().enumerate() {
        mean += wi * truth.row(i).iter().sum::<f64>();
    }
    mean /= nt * w.iter().sum::<f64>();
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (i, wi) in w.iter().enumerate() {
        for (x, p) in truth.row(i).iter().zip(pred.row(i)) {
            ss_res += wi * (x - p) * (x - p);
            ss_tot += wi * (x - mean) * (x - mean);
        }
    }
    if ss_tot == 0.0 {
        return Err(Error::DegenerateVariance("truth is constant".into()));
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// `sqrt(mean over time and elements of ŵ_i e²)` with `Σ ŵ_i = N_x`.
pub fn rmse_weighted(truth: &Matrix, pred: &Matrix, weights: &[f64]) -> Result<f64> {
    check(truth, pred, weights)?;
    let w = normalized_weights(weights);
    let mut acc = 0.0;
    for (i, wi) in w.iter().enumerate() {
        for (x, p) in truth.row(i).iter().zip(pred.row(i)) {
            acc += wi * (x - p) * (x - p);
        }
    }
    Ok((acc / (truth.rows() * truth.cols()) as f64).sqrt())
}

fn temporal_ranges(truth: &Matrix) -> Vec<f64> {
    (0..truth.rows())
        .map(|i| {
            let r = truth.row(i);
            let hi = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = r.iter().cloned().fold(f64::INFINITY, f64::min);
            hi - lo
        })
        .collect()
}

/// Relative RMSE with the number of elements excluded for a zero temporal
/// range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelRmse {
    pub value: f64,
    pub excluded: usize,
}

/// Per-element temporal RMSE over the element's temporal range, averaged
/// over elements with a nonzero range.
pub fn rel_rmse_detailed(truth: &Matrix, pred: &Matrix, weights: &[f64]) -> Result<RelRmse> {
    check(truth, pred, weights)?;
    let w = normalized_weights(weights);
    let ranges = temporal_ranges(truth);
    let nt = truth.cols() as f64;
    let (mut acc, mut used) = (0.0, 0usize);
    for (i, range) in ranges.iter().enumerate() {
        if *range <= 0.0 {
            continue;
        }
        let se: f64 = truth
            .row(i)
            .iter()
            .zip(pred.row(i))
            .map(|(x, p)| w[i] * (x - p) * (x - p))
            .sum();
        acc += (se / nt).sqrt() / range;
        used += 1;
    }
    if used == 0 {
        return Err(Error::DegenerateVariance("every element has zero temporal range".into()));
    }
    Ok(RelRmse {
        value: acc / used as f64,
        excluded: ranges.len() - used,
    })
}

pub fn rel_rmse(truth: &Matrix, pred: &Matrix, weights: &[f64]) -> Result<f64> {
    Ok(rel_rmse_detailed(truth, pred, weights)?.value)
}

/// Linear-interpolation percentile (`p` in [0, 100]) of unsorted values.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidParam("percentile of no values".into()));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::InvalidParam(format!("percentile {p} outside [0, 100]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(v[lo] + frac * (v[hi] - v[lo]))
}

/// Percentiles over time of the per-step maximum range-normalized absolute
/// error across elements.
pub fn error_spread(truth: &Matrix, pred: &Matrix, percentiles: (f64, f64)) -> Result<(f64, f64)> {
    check(truth, pred, &vec![1.0; truth.rows()])?;
    let ranges = temporal_ranges(truth);
    if ranges.iter().all(|r| *r <= 0.0) {
        return Err(Error::DegenerateVariance("every element has zero temporal range".into()));
    }
    let peaks: Vec<f64> = (0..truth.cols())
        .map(|k| {
            ranges
                .iter()
                .enumerate()
                .filter(|(_, r)| **r > 0.0)
                .map(|(i, r)| (truth[(i, k)] - pred[(i, k)]).abs() / r)
                .fold(0.0, f64::max)
        })
        .collect();
    Ok((percentile(&peaks, percentiles.0)?, percentile(&peaks, percentiles.1)?))
}

/// Percent change in RMSE of a surrogate relative to a reference.
pub fn skill_retention(rmse_surrogate: f64, rmse_reference: f64) -> Result<f64> {
    if !(rmse_reference > 0.0) {
        return Err(Error::DegenerateVariance(format!("reference RMSE {rmse_reference}")));
    }
    Ok(100.0 * (rmse_surrogate - rmse_reference) / rmse_reference)
}

/// Unweighted temporal RMSE of every element.
pub fn per_element_rmse(truth: &Matrix, pred: &Matrix) -> Result<Vec<f64>> {
    check(truth, pred, &vec![1.0; truth.rows()])?;
    Ok((0..truth.rows())
        .map(|i| {
            let se: f64 = truth.row(i).iter().zip(pred.row(i)).map(|(x, p)| (x - p) * (x - p)).sum();
            (se / truth.cols() as f64).sqrt()
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricOptions {
    pub percentiles: (f64, f64),
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self { percentiles: (2.0, 98.0) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableReport {
    pub name: String,
    pub units: String,
    pub r2: f64,
    pub rmse: f64,
    pub rel_rmse: f64,
    pub spread: (f64, f64),
    pub excluded_elements: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkillRow {
    pub name: String,
    pub rmse_model: f64,
    pub rmse_reference: f64,
    pub increase_percent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub percentiles: (f64, f64),
    pub variables: Vec<VariableReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skill: Option<Vec<SkillRow>>,
}

impl EvalReport {
    pub fn variable(&self, name: &str) -> Result<&VariableReport> {
        self.variables
            .iter()
            .find(|v| v.name == name)
            .ok_or_else(|| Error::MissingVariable(name.to_string()))
    }

    /// Adds the RMSE increase of every variable relative to `reference`.
    pub fn with_reference(mut self, reference: &EvalReport) -> Result<Self> {
        let mut rows = Vec::with_capacity(self.variables.len());
        for v in &self.variables {
            let r = reference.variable(&v.name)?;
            rows.push(SkillRow {
                name: v.name.clone(),
                rmse_model: v.rmse,
                rmse_reference: r.rmse,
                increase_percent: skill_retention(v.rmse, r.rmse)?,
            });
        }
        self.skill = Some(rows);
        Ok(self)
    }

    /// Per-element RMSE of every variable as `variable,element,rmse` lines.
    pub fn per_element_csv(truth: &[VariableBlock], pred: &[VariableBlock]) -> Result<String> {
        let mut out = String::from("variable,element,rmse\n");
        for p in pred {
            let t = find(truth, &p.name)?;
            for (i, e) in per_element_rmse(&t.values, &p.values)?.iter().enumerate() {
                out.push_str(&format!("{},{i},{e:e}\n", p.name));
            }
        }
        Ok(out)
    }
}

fn find<'a>(blocks: &'a [VariableBlock], name: &str) -> Result<&'a VariableBlock> {
    blocks
        .iter()
        .find(|b| b.name == name)
        .ok_or_else(|| Error::MissingVariable(name.to_string()))
}

/// Scores every block of `pred` against the same-named block of `truth`.
/// `weights` apply to blocks with that many elements; others are uniform.
pub fn evaluate(
    truth: &[VariableBlock],
    pred: &[VariableBlock],
    weights: &[f64],
    opts: &MetricOptions,
) -> Result<EvalReport> {
    let (lo, hi) = opts.percentiles;
    if !(0.0..=100.0).contains(&lo) || !(lo..=100.0).contains(&hi) {
        return Err(Error::InvalidParam(format!("percentile pair ({lo}, {hi})")));
    }
    let mut variables = Vec::with_capacity(pred.len());
    for p in pred {
        let t = find(truth, &p.name)?;
        let n = t.n_space();
        let uniform;
        let w = if weights.len() == n {
            weights
        } else {
            uniform = vec![1.0; n];
            &uniform
        };
        let rel = rel_rmse_detailed(&t.values, &p.values, w)?;
        variables.push(VariableReport {
            name: p.name.clone(),
            units: t.units.clone(),
            r2: r2(&t.values, &p.values, w)?,
            rmse: rmse_weighted(&t.values, &p.values, w)?,
            rel_rmse: rel.value,
            spread: error_spread(&t.values, &p.values, opts.percentiles)?,
            excluded_elements: rel.excluded,
        });
    }
    Ok(EvalReport {
        percentiles: opts.percentiles,
        variables,
        skill: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, seeded};
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn r2_examples() {
        let t = m(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 7.0]]);
        assert_eq!(r2(&t, &t, &[1.0, 1.0]).unwrap(), 1.0);
        let mean = t.as_slice().iter().sum::<f64>() / 6.0;
        let flat = Matrix::filled(2, 3, mean);
        assert!(r2(&t, &flat, &[1.0, 1.0]).unwrap().abs() < 1e-15);
        // hand case
        let p = m(&[&[1.5, 2.0, 2.0], &[4.0, 6.0, 7.5]]);
        let ss_res = 0.25 + 0.0 + 1.0 + 0.0 + 1.0 + 0.25;
        let ss_tot: f64 = t.as_slice().iter().map(|x| (x - mean).powi(2)).sum();
        assert!((r2(&t, &p, &[0.5, 0.5]).unwrap() - (1.0 - ss_res / ss_tot)).abs() < 1e-12);
        assert!(matches!(
            r2(&Matrix::filled(2, 3, 1.0), &t, &[1.0, 1.0]),
            Err(Error::DegenerateVariance(_))
        ));
    }

    #[test]
    fn rmse_examples() {
        let t = gaussian_matrix(&mut seeded(1), 3, 4);
        assert_eq!(rmse_weighted(&t, &t, &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        let shifted = t.map(|x| x + 0.7);
        assert!((rmse_weighted(&t, &shifted, &[0.1, 0.5, 3.0]).unwrap() - 0.7).abs() < 1e-12);
        assert!(matches!(rmse_weighted(&t, &Matrix::zeros(3, 5), &[1.0; 3]), Err(Error::Shape(_))));
    }

    #[test]
    fn rel_rmse_examples() {
        let t = m(&[&[0.0, 2.0, 1.0, 0.5]]);
        assert_eq!(rel_rmse(&t, &t, &[1.0]).unwrap(), 0.0);
        let p = t.map(|x| x + 0.2);
        assert!((rel_rmse(&t, &p, &[1.0]).unwrap() - 0.1).abs() < 1e-15);
        let with_flat = m(&[&[0.0, 2.0, 1.0, 0.5], &[3.0, 3.0, 3.0, 3.0]]);
        let r = rel_rmse_detailed(&with_flat, &with_flat.map(|x| x + 0.2), &[1.0, 1.0]).unwrap();
        assert_eq!(r.excluded, 1);
        assert!((r.value - 0.1).abs() < 1e-15);
        assert!(rel_rmse(&Matrix::filled(2, 3, 1.0), &Matrix::zeros(2, 3), &[1.0, 1.0]).is_err());
    }

    #[test]
    fn spread_examples() {
        let t = m(&[&[0.0, 1.0, 0.5], &[0.0, 2.0, 1.0]]);
        assert_eq!(error_spread(&t, &t, (2.0, 98.0)).unwrap(), (0.0, 0.0));
        // error 0.3·range everywhere
        let p = m(&[&[0.3, 1.3, 0.8], &[0.6, 2.6, 1.6]]);
        let (a, b) = error_spread(&t, &p, (2.0, 98.0)).unwrap();
        assert!((a - 0.3).abs() < 1e-15 && (b - 0.3).abs() < 1e-15);
    }

    #[test]
    fn skill_retention_table_values() {
        assert_eq!(skill_retention(3.0, 3.0).unwrap(), 0.0);
        let ijva = skill_retention(16.4, 14.7).unwrap();
        assert!((ijva - 11.564625850340136).abs() < 1e-9 && ijva.round() == 12.0);
        let drogden = skill_retention(6.23, 6.27).unwrap();
        assert!((drogden - (-0.6379585326953748)).abs() < 1e-9);
        assert!((drogden * 100.0).round() / 100.0 == -0.64);
        assert!(skill_retention(1.0, 0.0).is_err());
    }

    #[test]
    fn percentile_is_exact_at_data_points() {
        let v = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(percentile(&v, 0.0).unwrap(), 1.0);
        assert_eq!(percentile(&v, 50.0).unwrap(), 3.0);
        assert_eq!(percentile(&v, 100.0).unwrap(), 5.0);
        assert_eq!(percentile(&v, 12.5).unwrap(), 1.5);
        assert!(percentile(&[], 5.0).is_err());
    }

    #[test]
    fn report_and_csv() {
        let mut rng = seeded(3);
        let t = VariableBlock::new("h", crate::data::VariableKind::State, gaussian_matrix(&mut rng, 4, 30), "m");
        let p = VariableBlock {
            values: t.values.map(|x| 0.9 * x),
            ..t.clone()
        };
        let rep = evaluate(std::slice::from_ref(&t), std::slice::from_ref(&p), &[1.0; 4], &MetricOptions::default()).unwrap();
        let perfect = evaluate(std::slice::from_ref(&t), std::slice::from_ref(&t), &[1.0; 4], &MetricOptions::default()).unwrap();
        assert_eq!(perfect.variables[0].r2, 1.0);
        assert!(rep.variables[0].r2 < 1.0 && rep.variables[0].rmse > 0.0);
        assert!(perfect.clone().with_reference(&rep).is_ok());
        let json = serde_json::to_string(&rep).unwrap();
        assert_eq!(serde_json::from_str::<EvalReport>(&json).unwrap(), rep);
        let csv = EvalReport::per_element_csv(&[t], &[p]).unwrap();
        assert_eq!(csv.lines().count(), 5);
    }

    proptest! {
        #[test]
        fn range_metrics_invariant_under_affine_rescaling(seed in any::<u64>(), scale in 0.01f64..100.0, offset in -50.0f64..50.0) {
            let mut rng = seeded(seed);
            let t = gaussian_matrix(&mut rng, 4, 12);
            let p = gaussian_matrix(&mut rng, 4, 12);
            let w = [1.0, 2.0, 0.5, 1.5];
            let f = |x: f64| scale * x + offset;
            let a = rel_rmse(&t, &p, &w).unwrap();
            let b = rel_rmse(&t.map(f), &p.map(f), &w).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
            let (s0, s1) = error_spread(&t, &p, (5.0, 95.0)).unwrap();
            let (r0, r1) = error_spread(&t.map(f), &p.map(f), (5.0, 95.0)).unwrap();
            prop_assert!((s0 - r0).abs() <= 1e-9 * s0.max(1.0) && (s1 - r1).abs() <= 1e-9 * s1.max(1.0));
        }

        #[test]
        fn uniform_weights_give_textbook_definitions(seed in any::<u64>(), w in 0.1f64..10.0) {
            let mut rng = seeded(seed);
            let t = gaussian_matrix(&mut rng, 3, 7);
            let p = gaussian_matrix(&mut rng, 3, 7);
            let n = 21.0;
            let mse: f64 = t.as_slice().iter().zip(p.as_slice()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
            let mean = t.as_slice().iter().sum::<f64>() / n;
            let tot: f64 = t.as_slice().iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
            prop_assert!((rmse_weighted(&t, &p, &[w; 3]).unwrap() - mse.sqrt()).abs() < 1e-12);
            prop_assert!((r2(&t, &p, &[w; 3]).unwrap() - (1.0 - mse / tot)).abs() < 1e-12);
        }

        #[test]
        fn percentile_monotone(values in proptest::collection::vec(-1e3f64..1e3, 1..40), p in 0.0f64..100.0, q in 0.0f64..100.0) {
            let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
            prop_assert!(percentile(&values, lo).unwrap() <= percentile(&values, hi).unwrap());
        }

        #[test]
        fn report_invariants(seed in any::<u64>()) {
            let mut rng = seeded(seed);
            let t = VariableBlock::new("x", crate::data::VariableKind::State, gaussian_matrix(&mut rng, 3, 9), "");
            let p = VariableBlock { values: gaussian_matrix(&mut rng, 3, 9), ..t.clone() };
            let r = evaluate(&[t], &[p], &[1.0, 2.0, 3.0], &MetricOptions::default()).unwrap();
            let v = &r.variables[0];
            prop_assert!(v.r2 <= 1.0 && v.rmse >= 0.0 && v.rel_rmse >= 0.0);
        }
    }
}
