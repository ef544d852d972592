//! The five evaluation measures and dataset-level aggregation.

mod boundary;
mod distance;
mod enhanced;
mod structure;
mod weighted;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

pub use boundary::{boundary, relaxed_boundary_fbeta, BoundaryParams};
pub use distance::nearest_foreground;
pub use enhanced::{e_measure_curve, e_measure_max, e_measure_mean, E_THRESHOLDS};
pub use structure::{s_measure, StructureParams};
pub use weighted::weighted_fbeta;

use crate::error::{Error, Result};
use crate::types::{BinaryMask, Mask, MetricReport};

pub const REPORT_HEADER: &str = "dataset,n,fw_beta,fb_beta,mae,s_alpha,e_phi";

fn check_sizes(s: &Mask, g: &BinaryMask) -> Result<()> {
    if s.size() != g.size() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs ground truth {:?}",
            s.size(),
            g.size()
        )));
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(s: &Mask, g: &Mask) -> Result<f64> {
    s.ensure_same_size(g)?;
    Ok(s.data()
        .iter()
        .zip(g.data())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / s.len() as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricConfig {
    pub boundary: BoundaryParams,
    pub structure: StructureParams,
}

/// All five measures for one prediction.
pub fn evaluate_pair(s: &Mask, g: &BinaryMask, config: &MetricConfig) -> Result<MetricReport> {
    Ok(MetricReport {
        fw_beta: weighted_fbeta(s, g)?,
        fb_beta: relaxed_boundary_fbeta(s, g, &config.boundary)?,
        mae: mae(s, &g.to_mask())?,
        s_alpha: s_measure(s, g, &config.structure)?,
        e_phi: e_measure_mean(s, g)?,
    })
}

/// Arithmetic mean of reports; the weighted F-measure averages only the
/// images where it is defined.
pub fn mean_report(reports: &[MetricReport]) -> Result<MetricReport> {
    if reports.is_empty() {
        return Err(Error::Empty("no reports to average".into()));
    }
    let n = reports.len() as f64;
    let avg = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let defined: Vec<f64> = reports.iter().filter_map(|r| r.fw_beta).collect();
    Ok(MetricReport {
        fw_beta: (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64),
        fb_beta: avg(|r| r.fb_beta),
        mae: avg(|r| r.mae),
        s_alpha: avg(|r| r.s_alpha),
        e_phi: avg(|r| r.e_phi),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupReport {
    pub name: String,
    pub n: usize,
    pub report: MetricReport,
}

/// Dataset-level results: every pair, the overall mean, per-attribute means
/// and the mean of those group means.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetEvaluation {
    pub per_pair: Vec<MetricReport>,
    pub overall: MetricReport,
    pub groups: Vec<GroupReport>,
    pub group_average: Option<MetricReport>,
}

/// Evaluates every `(S, G)` pair in parallel and reduces in input order.
///
/// `attributes[i]` lists the labels of pair `i`; a pair may carry several.
pub fn evaluate_dataset(
    pairs: &[(Mask, BinaryMask)],
    attributes: Option<&[Vec<String>]>,
    config: &MetricConfig,
) -> Result<DatasetEvaluation> {
    if pairs.is_empty() {
        return Err(Error::Empty(
            "dataset has no prediction/ground-truth pairs".into(),
        ));
    }
    if let Some(a) = attributes {
        if a.len() != pairs.len() {
            return Err(Error::Shape(format!(
                "{} attribute lists for {} pairs",
                a.len(),
                pairs.len()
            )));
        }
    }
    let per_pair = pairs
        .par_iter()
        .map(|(s, g)| evaluate_pair(s, g, config))
        .collect::<Result<Vec<_>>>()?;
    let overall = mean_report(&per_pair)?;
    let mut groups = Vec::new();
    let mut group_average = None;
    if let Some(attributes) = attributes {
        let mut by_name: BTreeMap<&str, Vec<MetricReport>> = BTreeMap::new();
        for (labels, r) in attributes.iter().zip(&per_pair) {
            for l in labels {
                by_name.entry(l.as_str()).or_default().push(*r);
            }
        }
        for (name, reports) in by_name {
            groups.push(GroupReport {
                name: name.to_string(),
                n: reports.len(),
                report: mean_report(&reports)?,
            });
        }
        if !groups.is_empty() {
            let means: Vec<MetricReport> = groups.iter().map(|g| g.report).collect();
            group_average = Some(mean_report(&means)?);
        }
    }
    Ok(DatasetEvaluation {
        per_pair,
        overall,
        groups,
        group_average,
    })
}

fn row(out: &mut String, label: &str, n: usize, r: &MetricReport) {
    let fw = r
        .fw_beta
        .map_or_else(|| "nan".to_string(), |v| format!("{v:.6}"));
    let _ = writeln!(
        out,
        "{label},{n},{fw},{:.6},{:.6},{:.6},{:.6}",
        r.fb_beta, r.mae, r.s_alpha, r.e_phi
    );
}

/// CSV table: the dataset row, then `attr:<name>` rows and an `Avg` row when
/// attributes were given.
pub fn render_report(dataset: &str, eval: &DatasetEvaluation) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    row(&mut out, dataset, eval.per_pair.len(), &eval.overall);
    for g in &eval.groups {
        row(&mut out, &format!("attr:{}", g.name), g.n, &g.report);
    }
    if let Some(avg) = &eval.group_average {
        row(&mut out, "Avg", eval.groups.len(), avg);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(gbits: &[bool], s: &[f64]) -> (Mask, BinaryMask) {
        (
            Mask::new(2, 2, s.to_vec()).unwrap(),
            BinaryMask::new(2, 2, gbits.to_vec()).unwrap(),
        )
    }

    #[test]
    fn mae_example() {
        let s = Mask::new(2, 2, vec![0.9, 0.1, 0.2, 0.8]).unwrap();
        let g = Mask::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((mae(&s, &g).unwrap() - 0.15).abs() < 1e-12);
        assert_eq!(mae(&g.complement(), &g).unwrap(), 1.0);
    }

    #[test]
    fn single_pair_aggregate_is_the_pair() {
        let (s, g) = pair(&[true, false, false, true], &[0.9, 0.1, 0.2, 0.8]);
        let cfg = MetricConfig::default();
        let eval = evaluate_dataset(&[(s.clone(), g.clone())], None, &cfg).unwrap();
        assert_eq!(eval.overall, evaluate_pair(&s, &g, &cfg).unwrap());
    }

    #[test]
    fn group_average_is_mean_of_group_means() {
        let g = [true, false, false, true];
        let p1 = pair(&g, &[1.0, 0.0, 0.0, 1.0]);
        let p2 = pair(&g, &[0.8, 0.2, 0.2, 0.8]);
        let p3 = pair(&g, &[0.6, 0.4, 0.4, 0.6]);
        let attrs = vec![
            vec!["A".to_string()],
            vec!["B".to_string()],
            vec!["B".to_string()],
        ];
        let eval = evaluate_dataset(&[p1, p2, p3], Some(&attrs), &MetricConfig::default()).unwrap();
        assert!((eval.overall.mae - 0.2).abs() < 1e-12);
        assert_eq!(eval.groups.len(), 2);
        assert!((eval.groups[1].report.mae - 0.3).abs() < 1e-12);
        assert!((eval.group_average.unwrap().mae - 0.15).abs() < 1e-12);
        let csv = render_report("toy", &eval);
        assert!(csv.starts_with(REPORT_HEADER));
        assert!(csv.contains("\nattr:A,1,") && csv.contains("\nAvg,2,"));
    }

    #[test]
    fn empty_dataset_is_an_error() {
        assert!(evaluate_dataset(&[], None, &MetricConfig::default()).is_err());
    }

    #[test]
    fn undefined_weighted_f_is_skipped_when_averaging() {
        let a = pair(&[false; 4], &[0.0; 4]);
        let b = pair(&[true, false, false, true], &[1.0, 0.0, 0.0, 1.0]);
        let eval = evaluate_dataset(&[a, b], None, &MetricConfig::default()).unwrap();
        assert!((eval.overall.fw_beta.unwrap() - 1.0).abs() < 1e-9);
    }
}
