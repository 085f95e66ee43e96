//! Confusion matrices and comparative-study tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::Instance;
use crate::error::{Error, Result};
use crate::fcn::FcnModel;

pub const ORIENTATION: &str = "rows = true class, columns = predicted class";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: usize,
    /// `counts[true][predicted]`
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_pairs(classes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut cm = Self::new(classes);
        for (truth, predicted) in pairs {
            if truth >= classes || predicted >= classes {
                return Err(Error::InvalidArgument(format!(
                    "class pair ({truth}, {predicted}) outside 0..{classes}"
                )));
            }
            cm.counts[truth][predicted] += 1;
        }
        Ok(cm)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..self.classes).map(|g| self.counts[g][g]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.correct() as f64 / self.total().max(1) as f64
    }

    pub fn row_totals(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Recall per true class; `None` for classes absent from the set.
    pub fn per_class(&self) -> Vec<Option<f64>> {
        self.row_totals()
            .iter()
            .enumerate()
            .map(|(g, &n)| (n > 0).then(|| self.counts[g][g] as f64 / n as f64))
            .collect()
    }

    /// Row-normalized percentages.
    pub fn percentages(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let n: usize = row.iter().sum();
                row.iter()
                    .map(|&c| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 })
                    .collect()
            })
            .collect()
    }

    /// Damaged instances (true class > 0) predicted as class 0.
    pub fn damaged_as_undamaged(&self) -> usize {
        self.counts.iter().skip(1).map(|r| r[0]).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# {ORIENTATION}\ntrue\\predicted");
        for g in 0..self.classes {
            let _ = write!(s, ",{g}");
        }
        s.push('\n');
        for (g, row) in self.counts.iter().enumerate() {
            let _ = write!(s, "{g}");
            for c in row {
                let _ = write!(s, ",{c}");
            }
            s.push('\n');
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("Confusion matrix ({ORIENTATION})\n");
        let _ = write!(s, "{:>6}", "");
        for g in 0..self.classes {
            let _ = write!(s, "{:>14}", format!("pred {g}"));
        }
        s.push('\n');
        let pct = self.percentages();
        for (g, row) in self.counts.iter().enumerate() {
            let _ = write!(s, "{:>6}", format!("true {g}"));
            for (c, p) in row.iter().zip(&pct[g]) {
                let _ = write!(s, "{:>14}", format!("{c} ({p:.1}%)"));
            }
            s.push('\n');
        }
        let _ = writeln!(
            s,
            "global accuracy: {:.2}% ({}/{})",
            100.0 * self.accuracy(),
            self.correct(),
            self.total()
        );
        s
    }
}

/// One prediction per instance.
pub fn evaluate(model: &FcnModel, instances: &[Instance]) -> Result<ConfusionMatrix> {
    if instances.is_empty() {
        return Err(Error::Empty("test set".into()));
    }
    let mut pairs = Vec::with_capacity(instances.len());
    for inst in instances {
        pairs.push((inst.label, model.predict(&inst.record)?.class));
    }
    ConfusionMatrix::from_pairs(model.classes(), pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepStudy {
    /// Upper bound of the damage level.
    Delta,
    Snr,
    EpsTol,
}

impl SweepStudy {
    pub fn name(self) -> &'static str {
        match self {
            SweepStudy::Delta => "delta",
            SweepStudy::Snr => "snr",
            SweepStudy::EpsTol => "eps_tol",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "delta" => Ok(SweepStudy::Delta),
            "snr" => Ok(SweepStudy::Snr),
            "eps_tol" => Ok(SweepStudy::EpsTol),
            other => Err(Error::config("sweep.study", format!("unknown study '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub value: f64,
    pub accuracy: Option<f64>,
    pub basis_size: Option<usize>,
    pub damaged_as_undamaged: Option<usize>,
    pub error: Option<String>,
}

impl SweepCell {
    pub fn failed(value: f64, error: &Error) -> Self {
        Self {
            value,
            accuracy: None,
            basis_size: None,
            damaged_as_undamaged: None,
            error: Some(error.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub study: SweepStudy,
    pub cells: Vec<SweepCell>,
}

impl SweepTable {
    pub fn accuracies(&self) -> Vec<Option<f64>> {
        self.cells.iter().map(|c| c.accuracy).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{},accuracy,basis_size,damaged_as_undamaged,error\n", self.study.name());
        let opt = |v: Option<String>| v.unwrap_or_default();
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                c.value,
                opt(c.accuracy.map(|a| format!("{a:.4}"))),
                opt(c.basis_size.map(|w| w.to_string())),
                opt(c.damaged_as_undamaged.map(|n| n.to_string())),
                opt(c.error.as_ref().map(|e| format!("\"{}\"", e.replace('"', "'"))))
            );
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:>12} {:>10} {:>8} {:>10}\n",
            self.study.name(),
            "accuracy",
            "W",
            "dmg->0"
        );
        for c in &self.cells {
            match &c.error {
                Some(e) => {
                    let _ = writeln!(s, "{:>12} failed: {e}", c.value);
                }
                None => {
                    let _ = writeln!(
                        s,
                        "{:>12} {:>9.2}% {:>8} {:>10}",
                        c.value,
                        100.0 * c.accuracy.unwrap_or(f64::NAN),
                        c.basis_size.map_or("-".into(), |w| w.to_string()),
                        c.damaged_as_undamaged.map_or("-".into(), |n| n.to_string())
                    );
                }
            }
        }
        s
    }
}

/// Number of adjacent pairs where the value rises, comparing
/// successive entries of a sequence that should not increase.
pub fn inversions(values: &[f64]) -> usize {
    values.windows(2).filter(|w| w[1] > w[0]).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counted_case() {
        let cm = ConfusionMatrix::from_pairs(3, [(0, 0), (1, 2), (2, 2)]).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 0, 0], vec![0, 0, 1], vec![0, 0, 1]]);
        assert!((cm.accuracy() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(cm.per_class(), vec![Some(1.0), Some(0.0), Some(1.0)]);
    }

    #[test]
    fn perfect_and_constant_predictors() {
        let perfect = ConfusionMatrix::from_pairs(5, (0..50).map(|i| (i % 5, i % 5))).unwrap();
        assert_eq!(perfect.accuracy(), 1.0);
        for g in 0..5 {
            for h in 0..5 {
                assert_eq!(perfect.counts[g][h], if g == h { 10 } else { 0 });
            }
        }
        let constant = ConfusionMatrix::from_pairs(5, (0..50).map(|i| (i % 5, 2))).unwrap();
        assert!((constant.accuracy() - 0.2).abs() < 1e-15);
        assert_eq!(constant.damaged_as_undamaged(), 0);
    }

    #[test]
    fn reports_state_orientation() {
        let cm = ConfusionMatrix::from_pairs(2, [(0, 1), (1, 0)]).unwrap();
        assert!(cm.to_csv().contains(ORIENTATION));
        assert!(cm.to_text().contains(ORIENTATION));
        assert_eq!(cm.damaged_as_undamaged(), 1);
    }

    #[test]
    fn out_of_range_class_rejected() {
        assert!(ConfusionMatrix::from_pairs(2, [(0, 2)]).is_err());
    }

    #[test]
    fn inversion_count() {
        assert_eq!(inversions(&[1.0, 0.9, 0.95, 0.7]), 1);
        assert_eq!(inversions(&[1.0, 1.0, 0.5]), 0);
    }
}
