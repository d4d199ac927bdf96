//! Scene-completion (SC) and semantic-scene-completion (SSC) metrics.
//!
//! SC binarizes both grids into empty / non-empty and counts only voxels
//! flagged occluded. SSC scores every non-empty class over all counted
//! voxels. Ground-truth voxels carrying [`IGNORE_LABEL`] are never counted;
//! an ignored prediction counts as "empty".

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::{ClassVocabulary, LabelGrid, IGNORE_LABEL};

/// Which voxels are evaluated, and which of those are occluded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalMask {
    counted: Vec<bool>,
    occluded: Vec<bool>,
}

/// Per-voxel code used when a mask is stored as a label grid.
pub const MASK_EXCLUDED: u8 = 0;
pub const MASK_OBSERVED: u8 = 1;
pub const MASK_OCCLUDED: u8 = 2;

impl EvalMask {
    pub fn new(counted: Vec<bool>, occluded: Vec<bool>) -> Result<Self> {
        if counted.len() != occluded.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} counted flags vs {} occlusion flags",
                counted.len(),
                occluded.len()
            )));
        }
        if let Some(i) = occluded.iter().zip(&counted).position(|(&o, &c)| o && !c) {
            return Err(Error::InvalidValue(format!("voxel {i} is occluded but not counted")));
        }
        Ok(Self { counted, occluded })
    }

    /// Every voxel counted and occluded.
    pub fn all_occluded(n: usize) -> Self {
        Self { counted: vec![true; n], occluded: vec![true; n] }
    }

    /// Decodes [`MASK_EXCLUDED`] / [`MASK_OBSERVED`] / [`MASK_OCCLUDED`].
    pub fn from_codes(codes: &[u8]) -> Result<Self> {
        let mut counted = Vec::with_capacity(codes.len());
        let mut occluded = Vec::with_capacity(codes.len());
        for (i, &c) in codes.iter().enumerate() {
            let (cnt, occ) = match c {
                MASK_EXCLUDED => (false, false),
                MASK_OBSERVED => (true, false),
                MASK_OCCLUDED => (true, true),
                other => {
                    return Err(Error::InvalidValue(format!("mask code {other} at voxel {i}")))
                }
            };
            counted.push(cnt);
            occluded.push(occ);
        }
        Self::new(counted, occluded)
    }

    pub fn to_codes(&self) -> Vec<u8> {
        self.counted
            .iter()
            .zip(&self.occluded)
            .map(|(&c, &o)| match (c, o) {
                (true, true) => MASK_OCCLUDED,
                (true, false) => MASK_OBSERVED,
                _ => MASK_EXCLUDED,
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.counted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counted.is_empty()
    }

    pub fn counted(&self) -> &[bool] {
        &self.counted
    }

    pub fn occluded(&self) -> &[bool] {
        &self.occluded
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Counts {
    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn iou(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp + self.fn_)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScMetrics {
    pub counts: Counts,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub iou: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassIou {
    pub class: usize,
    pub counts: Counts,
    pub iou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SscMetrics {
    /// Classes `1..=C` in order.
    pub classes: Vec<ClassIou>,
    /// Mean over classes with a defined IoU.
    pub miou: Option<f64>,
}

fn check_shapes(pred: &LabelGrid, gt: &LabelGrid, mask: &EvalMask) -> Result<()> {
    if pred.spec().dims() != gt.spec().dims() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.spec().dims(),
            gt.spec().dims()
        )));
    }
    if mask.len() != gt.labels().len() {
        return Err(Error::ShapeMismatch(format!(
            "mask has {} voxels, grids have {}",
            mask.len(),
            gt.labels().len()
        )));
    }
    Ok(())
}

fn occupied(label: u8) -> bool {
    label != 0 && label != IGNORE_LABEL
}

pub fn sc_metrics(pred: &LabelGrid, gt: &LabelGrid, mask: &EvalMask) -> Result<ScMetrics> {
    check_shapes(pred, gt, mask)?;
    let mut counts = Counts::default();
    for ((&p, &g), &occ) in pred.labels().iter().zip(gt.labels()).zip(mask.occluded()) {
        if !occ || g == IGNORE_LABEL {
            continue;
        }
        match (occupied(p), occupied(g)) {
            (true, true) => counts.tp += 1,
            (true, false) => counts.fp += 1,
            (false, true) => counts.fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(ScMetrics { counts, precision: counts.precision(), recall: counts.recall(), iou: counts.iou() })
}

pub fn ssc_metrics(
    pred: &LabelGrid,
    gt: &LabelGrid,
    mask: &EvalMask,
    vocab: &ClassVocabulary,
) -> Result<SscMetrics> {
    check_shapes(pred, gt, mask)?;
    let c_max = vocab.num_classes();
    if gt.num_classes() > c_max || pred.num_classes() > c_max {
        return Err(Error::ShapeMismatch(format!(
            "grids use up to {} classes but the vocabulary has {c_max}",
            gt.num_classes().max(pred.num_classes())
        )));
    }
    let mut counts = vec![Counts::default(); c_max + 1];
    for ((&p, &g), &cnt) in pred.labels().iter().zip(gt.labels()).zip(mask.counted()) {
        if !cnt || g == IGNORE_LABEL {
            continue;
        }
        if p == g {
            counts[g as usize].tp += 1;
            continue;
        }
        if p != IGNORE_LABEL {
            counts[p as usize].fp += 1;
        }
        counts[g as usize].fn_ += 1;
    }
    let classes: Vec<ClassIou> = (1..=c_max)
        .map(|class| ClassIou { class, counts: counts[class], iou: counts[class].iou() })
        .collect();
    let defined: Vec<f64> = classes.iter().filter_map(|c| c.iou).collect();
    let miou = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(SscMetrics { classes, miou })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub sc: ScMetrics,
    pub ssc: SscMetrics,
}

pub fn evaluate(
    pred: &LabelGrid,
    gt: &LabelGrid,
    mask: &EvalMask,
    vocab: &ClassVocabulary,
) -> Result<MetricsReport> {
    Ok(MetricsReport { sc: sc_metrics(pred, gt, mask)?, ssc: ssc_metrics(pred, gt, mask, vocab)? })
}

fn fmt_value(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn fmt_percent(v: Option<f64>) -> String {
    v.map(|x| format!("{:.1}", 100.0 * x)).unwrap_or_else(|| "-".into())
}

impl MetricsReport {
    /// `metric,value` rows; undefined values are left empty.
    pub fn to_csv(&self, vocab: &ClassVocabulary) -> String {
        let mut out = String::from("metric,value\n");
        let _ = writeln!(out, "sc_precision,{}", fmt_value(self.sc.precision));
        let _ = writeln!(out, "sc_recall,{}", fmt_value(self.sc.recall));
        let _ = writeln!(out, "sc_iou,{}", fmt_value(self.sc.iou));
        for c in &self.ssc.classes {
            let name = vocab.name(c.class).unwrap_or("?");
            let _ = writeln!(out, "ssc_iou_{name},{}", fmt_value(c.iou));
        }
        let _ = writeln!(out, "ssc_miou,{}", fmt_value(self.ssc.miou));
        out
    }

    /// Two aligned rows of percentages: SC precision, recall and IoU, the
    /// per-class SSC IoU, and their average.
    pub fn to_table(&self, vocab: &ClassVocabulary) -> String {
        let mut headers = vec!["Prec.".to_string(), "Recall".into(), "IoU".into()];
        let mut cells = vec![
            fmt_percent(self.sc.precision),
            fmt_percent(self.sc.recall),
            fmt_percent(self.sc.iou),
        ];
        for c in &self.ssc.classes {
            headers.push(vocab.name(c.class).unwrap_or("?").to_string());
            cells.push(fmt_percent(c.iou));
        }
        headers.push("avg.".into());
        cells.push(fmt_percent(self.ssc.miou));
        let widths: Vec<usize> =
            headers.iter().zip(&cells).map(|(h, c)| h.len().max(c.len()).max(5)).collect();
        let row = |items: &[String]| {
            items.iter().zip(&widths).map(|(s, &w)| format!("{s:>w$}")).collect::<Vec<_>>().join(" ")
        };
        format!("{}\n{}\n", row(&headers), row(&cells))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn grid(labels: Vec<u8>) -> LabelGrid {
        let n = labels.len();
        LabelGrid::new(GridSpec::new([1, 1, n], 0.08, [0.0; 3]).unwrap(), 11, labels).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let gt = grid(vec![0, 1, 2, 3, 0, 5]);
        let mask = EvalMask::all_occluded(6);
        let sc = sc_metrics(&gt, &gt, &mask).unwrap();
        assert_eq!((sc.precision, sc.recall, sc.iou), (Some(1.0), Some(1.0), Some(1.0)));
        let ssc = ssc_metrics(&gt, &gt, &mask, &ClassVocabulary::default()).unwrap();
        for c in &ssc.classes {
            let present = [1, 2, 3, 5].contains(&c.class);
            assert_eq!(c.iou, present.then_some(1.0));
        }
        assert_eq!(ssc.miou, Some(1.0));
    }

    #[test]
    fn hand_counted_sc() {
        // gt: 4 occluded positives; pred hits 2 and adds 2 false positives.
        let gt = grid(vec![1, 1, 1, 1, 0, 0, 0]);
        let pred = grid(vec![1, 1, 0, 0, 2, 3, 0]);
        let sc = sc_metrics(&pred, &gt, &EvalMask::all_occluded(7)).unwrap();
        assert_eq!(sc.counts, Counts { tp: 2, fp: 2, fn_: 2 });
        assert_eq!(sc.precision, Some(0.5));
        assert_eq!(sc.recall, Some(0.5));
        assert_eq!(sc.iou, Some(2.0 / 6.0));
        assert!(sc.iou.unwrap() <= sc.precision.unwrap().min(sc.recall.unwrap()));
    }

    #[test]
    fn all_empty_prediction() {
        let gt = grid(vec![1, 0, 4]);
        let pred = grid(vec![0, 0, 0]);
        let sc = sc_metrics(&pred, &gt, &EvalMask::all_occluded(3)).unwrap();
        assert_eq!(sc.precision, None);
        assert_eq!(sc.recall, Some(0.0));
        assert_eq!(sc.iou, Some(0.0));
    }

    #[test]
    fn only_occluded_voxels_count_for_sc() {
        let gt = grid(vec![1, 1]);
        let pred = grid(vec![0, 1]);
        let mask = EvalMask::new(vec![true, true], vec![false, true]).unwrap();
        let sc = sc_metrics(&pred, &gt, &mask).unwrap();
        assert_eq!(sc.counts, Counts { tp: 1, fp: 0, fn_: 0 });
        // SSC still sees the observed miss.
        let ssc = ssc_metrics(&pred, &gt, &mask, &ClassVocabulary::default()).unwrap();
        assert_eq!(ssc.classes[0].counts, Counts { tp: 1, fp: 0, fn_: 1 });
    }

    #[test]
    fn ssc_two_class_toy() {
        let vocab = ClassVocabulary::new(&["empty", "a", "b"]).unwrap();
        let s = GridSpec::new([2, 2, 2], 0.08, [0.0; 3]).unwrap();
        let gt = LabelGrid::new(s, 2, vec![1, 1, 1, 2, 2, 0, 0, IGNORE_LABEL]).unwrap();
        let pred = LabelGrid::new(s, 2, vec![1, 2, 1, 2, 0, 1, 0, 2]).unwrap();
        let ssc = ssc_metrics(&pred, &gt, &EvalMask::all_occluded(8), &vocab).unwrap();
        // a: tp 2 (v0, v2), fp 1 (v5), fn 1 (v1) -> 2/4
        // b: tp 1 (v3), fp 1 (v1), fn 1 (v4) -> 1/3; v7 is ignored in gt.
        assert_eq!(ssc.classes[0].counts, Counts { tp: 2, fp: 1, fn_: 1 });
        assert_eq!(ssc.classes[1].counts, Counts { tp: 1, fp: 1, fn_: 1 });
        assert_eq!(ssc.classes[0].iou, Some(0.5));
        assert_eq!(ssc.classes[1].iou, Some(1.0 / 3.0));
        assert_eq!(ssc.miou, Some((0.5 + 1.0 / 3.0) / 2.0));
    }

    #[test]
    fn absent_class_is_excluded_from_miou() {
        let gt = grid(vec![1, 0]);
        let ssc = ssc_metrics(&gt, &gt, &EvalMask::all_occluded(2), &ClassVocabulary::default()).unwrap();
        assert_eq!(ssc.classes[1].iou, None);
        assert_eq!(ssc.miou, Some(1.0));
    }

    #[test]
    fn shape_and_mask_errors() {
        let a = grid(vec![0, 1]);
        let b = grid(vec![0, 1, 2]);
        assert!(sc_metrics(&a, &b, &EvalMask::all_occluded(3)).is_err());
        assert!(sc_metrics(&a, &a, &EvalMask::all_occluded(3)).is_err());
        assert!(EvalMask::new(vec![false], vec![true]).is_err());
        assert!(EvalMask::from_codes(&[0, 1, 3]).is_err());
        let m = EvalMask::from_codes(&[0, 1, 2]).unwrap();
        assert_eq!(m.counted(), &[false, true, true]);
        assert_eq!(m.occluded(), &[false, false, true]);
        assert_eq!(m.to_codes(), vec![0, 1, 2]);
    }

    #[test]
    fn report_formats() {
        let gt = grid(vec![1, 1, 1, 1, 0, 0, 0]);
        let pred = grid(vec![1, 1, 0, 0, 2, 3, 0]);
        let vocab = ClassVocabulary::default();
        let report = evaluate(&pred, &gt, &EvalMask::all_occluded(7), &vocab).unwrap();
        let csv = report.to_csv(&vocab);
        assert!(csv.starts_with("metric,value\nsc_precision,0.500000\nsc_recall,0.500000\nsc_iou,0.333333\n"));
        assert!(csv.contains("ssc_iou_ceil.,0.500000\n"));
        assert!(csv.contains("ssc_iou_floor,0.000000\n"));
        assert!(csv.contains("ssc_iou_wall,0.000000\n"));
        assert!(csv.contains("ssc_iou_bed,\n"));
        assert!(csv.ends_with("ssc_miou,0.166667\n"));
        let table = report.to_table(&vocab);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].len(), lines[1].len());
        assert!(lines[0].trim_start().starts_with("Prec. Recall   IoU ceil. floor  wall  win."));
        assert!(lines[0].ends_with("avg."));
        assert!(lines[1].trim_start().starts_with("50.0"));
    }
}
