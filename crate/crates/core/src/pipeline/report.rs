use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::formats::write_atomic;

/// Outcome of one train/test partition.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitResult {
    pub name: String,
    /// `confusion[true][predicted]`, in class order.
    pub confusion: Vec<Vec<usize>>,
}

impl SplitResult {
    pub fn new(name: impl Into<String>, classes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut confusion = vec![vec![0; classes]; classes];
        for (truth, pred) in pairs {
            confusion[truth][pred] += 1;
        }
        SplitResult { name: name.into(), confusion }
    }

    pub fn correct(&self) -> usize {
        (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum()
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    /// Percentage of correctly classified test images.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => 100.0 * self.correct() as f64 / t as f64,
        }
    }
}

/// Wall-clock seconds per stage. Kept out of the deterministic report files.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Timings {
    pub extract: f64,
    pub encode: f64,
    pub train: f64,
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub descriptor: String,
    pub classes: Vec<String>,
    pub splits: Vec<SplitResult>,
    pub timings: Timings,
}

impl EvalReport {
    pub fn new(
        descriptor: impl Into<String>,
        classes: Vec<String>,
        splits: Vec<SplitResult>,
        timings: Timings,
    ) -> Self {
        EvalReport { descriptor: descriptor.into(), classes, splits, timings }
    }

    /// Arithmetic mean of the per-split accuracies.
    pub fn mean_accuracy(&self) -> f64 {
        if self.splits.is_empty() {
            return 0.0;
        }
        self.splits.iter().map(SplitResult::accuracy).sum::<f64>() / self.splits.len() as f64
    }

    /// Sample standard deviation of the per-split accuracies (0 for one split).
    pub fn std_accuracy(&self) -> f64 {
        let n = self.splits.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean_accuracy();
        (self.splits.iter().map(|s| (s.accuracy() - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    }

    /// Confusion counts summed over splits.
    pub fn confusion(&self) -> Vec<Vec<usize>> {
        let c = self.classes.len();
        let mut total = vec![vec![0; c]; c];
        for s in &self.splits {
            for (row, srow) in total.iter_mut().zip(&s.confusion) {
                for (a, b) in row.iter_mut().zip(srow) {
                    *a += b;
                }
            }
        }
        total
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("split,correct,total,accuracy\n");
        for s in &self.splits {
            let _ = writeln!(out, "{},{},{},{:.4}", s.name, s.correct(), s.total(), s.accuracy());
        }
        let _ = writeln!(out, "mean,,,{:.4}", self.mean_accuracy());
        let _ = writeln!(out, "std,,,{:.4}", self.std_accuracy());
        out
    }

    pub fn confusion_csv(&self) -> String {
        let mut out = format!("true\\predicted,{}\n", self.classes.join(","));
        for (class, row) in self.classes.iter().zip(self.confusion()) {
            let cells: Vec<String> = row.iter().map(usize::to_string).collect();
            let _ = writeln!(out, "{class},{}", cells.join(","));
        }
        out
    }

    /// Human-readable summary with accuracies to 0.1%.
    pub fn summary(&self) -> String {
        let mut out = format!(
            "descriptor: {}\nclasses: {}\nsplits: {}\naccuracy: {:.1} ± {:.1} %\n",
            self.descriptor,
            self.classes.len(),
            self.splits.len(),
            self.mean_accuracy(),
            self.std_accuracy()
        );
        for s in &self.splits {
            let _ = writeln!(out, "  {}: {:.1} % ({}/{})", s.name, s.accuracy(), s.correct(), s.total());
        }
        out.push_str("confusion (rows: true class, columns: predicted):\n");
        let width = self.classes.iter().map(String::len).max().unwrap_or(0).max(5);
        let _ = write!(out, "{:width$}", "");
        for i in 0..self.classes.len() {
            let _ = write!(out, " {i:>5}");
        }
        out.push('\n');
        for (i, (class, row)) in self.classes.iter().zip(self.confusion()).enumerate() {
            let _ = write!(out, "{class:>width$}");
            for v in row {
                let _ = write!(out, " {v:>5}");
            }
            let _ = writeln!(out, "   [{i}]");
        }
        out
    }

    pub fn timings_text(&self) -> String {
        format!(
            "extract_seconds={:.3}\nencode_seconds={:.3}\ntrain_seconds={:.3}\n",
            self.timings.extract, self.timings.encode, self.timings.train
        )
    }

    /// Writes `report.csv`, `confusion.csv`, `summary.txt` and `timings.txt`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join("report.csv"), self.to_csv().as_bytes())?;
        write_atomic(&dir.join("confusion.csv"), self.confusion_csv().as_bytes())?;
        write_atomic(&dir.join("summary.txt"), self.summary().as_bytes())?;
        write_atomic(&dir.join("timings.txt"), self.timings_text().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> EvalReport {
        let classes = vec!["a".to_string(), "b".to_string()];
        let s0 = SplitResult::new("s0", 2, [(0, 0), (0, 0), (1, 1), (1, 0)]);
        let s1 = SplitResult::new("s1", 2, [(0, 0), (0, 1), (1, 1), (1, 1)]);
        let s2 = SplitResult::new("s2", 2, [(0, 0), (0, 0), (1, 1), (1, 1)]);
        EvalReport::new("load", classes, vec![s0, s1, s2], Timings::default())
    }

    #[test]
    fn aggregates() {
        let r = report();
        assert_eq!(r.splits[0].accuracy(), 75.0);
        assert_eq!(r.mean_accuracy(), (75.0 + 75.0 + 100.0) / 3.0);
        let m = r.mean_accuracy();
        let want = (((75.0 - m).powi(2) * 2.0 + (100.0 - m).powi(2)) / 2.0f64).sqrt();
        assert!((r.std_accuracy() - want).abs() < 1e-12);
        let c = r.confusion();
        assert_eq!(c, vec![vec![5, 1], vec![1, 5]]);
        for s in &r.splits {
            assert_eq!(s.confusion.iter().map(|row| row.iter().sum::<usize>()).sum::<usize>(), s.total());
        }
    }

    #[test]
    fn text_outputs() {
        let r = report();
        let csv = r.to_csv();
        assert!(csv.starts_with("split,correct,total,accuracy\ns0,3,4,75.0000\n"));
        assert!(csv.contains("mean,,,83.3333"));
        assert!(r.summary().contains("accuracy: 83.3 ± 14.4 %"));
        assert_eq!(r.confusion_csv(), "true\\predicted,a,b\na,5,1\nb,1,5\n");
    }
}
