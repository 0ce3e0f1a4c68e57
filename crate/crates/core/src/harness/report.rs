//! Check reports and their CSV / text output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::grid::Point;

/// Ratios are only formed against right-hand sides above this.
pub const RHS_FLOOR: f64 = 1e-14;
/// Largest admissible spread of the maximal ratio across sweep groups.
pub const DRIFT_LIMIT: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub enum Flag {
    Ok,
    /// Both sides vanish to solver tolerance.
    Exact,
    Skipped(String),
    Fail(String),
}

impl Flag {
    pub fn as_str(&self) -> String {
        match self {
            Self::Ok => "ok".into(),
            Self::Exact => "exact".into(),
            Self::Skipped(why) => format!("skipped: {why}"),
            Self::Fail(why) => format!("fail: {why}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    /// Sub-estimate within the check; drift is measured per series.
    pub series: String,
    /// Sweep group (cell label plus any per-check parameter).
    pub group: String,
    pub point: Point,
    pub radius: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: Option<f64>,
    pub flag: Flag,
}

impl Row {
    /// A ratio row; degenerate right-hand sides become skipped rows.
    pub fn ratio(series: &str, group: &str, point: Point, radius: f64, lhs: f64, rhs: f64) -> Self {
        let (ratio, flag) = if !(lhs.is_finite() && rhs.is_finite()) {
            (None, Flag::Fail("non-finite side".into()))
        } else if rhs > RHS_FLOOR {
            (Some(lhs / rhs), Flag::Ok)
        } else {
            (None, Flag::Skipped("degenerate right-hand side".into()))
        };
        Self {
            series: series.into(),
            group: group.into(),
            point,
            radius,
            lhs,
            rhs,
            ratio,
            flag,
        }
    }

    pub fn flagged(
        series: &str,
        group: &str,
        point: Point,
        radius: f64,
        lhs: f64,
        rhs: f64,
        flag: Flag,
    ) -> Self {
        Self {
            series: series.into(),
            group: group.into(),
            point,
            radius,
            lhs,
            rhs,
            ratio: None,
            flag,
        }
    }

    pub fn failure(series: &str, group: &str, why: String) -> Self {
        Self::flagged(
            series,
            group,
            [f64::NAN; 2],
            f64::NAN,
            f64::NAN,
            f64::NAN,
            Flag::Fail(why),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// Every row was skipped as trivial or degenerate.
    Skipped,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pass => "pass",
            Self::Fail => "FAIL",
            Self::Skipped => "skipped",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub rows: Vec<Row>,
    pub max_ratio: Option<f64>,
    pub median_ratio: Option<f64>,
    /// Largest per-series spread of group maxima; needs two groups.
    pub drift: Option<f64>,
    /// Check-specific numbers such as fitted exponents.
    pub metrics: Vec<(String, f64)>,
    pub notes: Vec<String>,
    pub status: Status,
}

impl CheckReport {
    /// Summarises the rows and applies the drift criterion.
    pub fn from_rows(name: &str, rows: Vec<Row>) -> Self {
        let mut ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
        ratios.sort_by(f64::total_cmp);
        let max_ratio = ratios.last().copied();
        let median_ratio = (!ratios.is_empty()).then(|| ratios[(ratios.len() - 1) / 2]);
        let drift = group_drift(&rows);
        let mut report = Self {
            name: name.into(),
            rows,
            max_ratio,
            median_ratio,
            drift,
            metrics: Vec::new(),
            notes: Vec::new(),
            status: Status::Pass,
        };
        report.status = report.drift_status();
        report
    }

    fn drift_status(&self) -> Status {
        if self.rows.iter().any(|r| matches!(r.flag, Flag::Fail(_))) {
            return Status::Fail;
        }
        if self.rows.iter().all(|r| matches!(r.flag, Flag::Skipped(_))) {
            return Status::Skipped;
        }
        match self.drift {
            Some(d) if !(d < DRIFT_LIMIT) => Status::Fail,
            _ => Status::Pass,
        }
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }

    pub fn metric(&self, key: &str) -> Option<f64> {
        self.metrics.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn fail(&mut self, note: String) {
        self.notes.push(note);
        self.status = Status::Fail;
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "check", "point_x", "point_y", "radius", "lhs", "rhs", "ratio", "flag",
        ])?;
        for r in &self.rows {
            let check = if r.series.is_empty() {
                format!("{}[{}]", self.name, r.group)
            } else {
                format!("{}.{}[{}]", self.name, r.series, r.group)
            };
            w.write_record([
                check,
                r.point[0].to_string(),
                r.point[1].to_string(),
                r.radius.to_string(),
                r.lhs.to_string(),
                r.rhs.to_string(),
                r.ratio.map(|v| v.to_string()).unwrap_or_default(),
                r.flag.as_str(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per series, the ratio of the largest to the smallest group maximum;
/// the overall drift is the worst series.
pub fn group_drift(rows: &[Row]) -> Option<f64> {
    let mut maxima: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
    for r in rows {
        if let Some(q) = r.ratio {
            let slot = maxima
                .entry(&r.series)
                .or_default()
                .entry(&r.group)
                .or_insert(0.0);
            *slot = slot.max(q);
        }
    }
    maxima
        .values()
        .filter(|groups| groups.len() >= 2)
        .map(|groups| {
            let hi = groups.values().copied().fold(f64::MIN, f64::max);
            let lo = groups.values().copied().fold(f64::MAX, f64::min);
            if lo > 0.0 {
                hi / lo
            } else {
                f64::INFINITY
            }
        })
        .reduce(f64::max)
}

/// Fixed-width summary table.
pub fn summary_table(reports: &[CheckReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<20} {:>8} {:>12} {:>12} {:>10} {:>6}",
        "check", "status", "max_ratio", "median", "drift", "rows"
    );
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4e}")).unwrap_or_else(|| "-".into());
    for r in reports {
        let _ = writeln!(
            out,
            "{:<20} {:>8} {:>12} {:>12} {:>10} {:>6}",
            r.name,
            r.status.as_str(),
            opt(r.max_ratio),
            opt(r.median_ratio),
            r.drift
                .map(|d| format!("{d:.3}"))
                .unwrap_or_else(|| "-".into()),
            r.rows.len()
        );
        for (k, v) in &r.metrics {
            let _ = writeln!(out, "    {k} = {v:.6}");
        }
        for n in &r.notes {
            let _ = writeln!(out, "    note: {n}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_rows_are_skipped() {
        let r = Row::ratio("", "a", [0.5, 0.5], 0.1, 0.0, 0.0);
        assert!(matches!(r.flag, Flag::Skipped(_)));
        assert_eq!(r.ratio, None);
        let r = Row::ratio("", "a", [0.5, 0.5], 0.1, 1.0, 1e-15);
        assert_eq!(r.ratio, None);
        let report = CheckReport::from_rows("x", vec![r]);
        assert_eq!(report.status, Status::Skipped);
        assert!(report.passed());
    }

    #[test]
    fn drift_per_series() {
        let rows = vec![
            Row::ratio("s", "a", [0.0; 2], 1.0, 1.0, 1.0),
            Row::ratio("s", "a", [0.0; 2], 1.0, 0.5, 1.0),
            Row::ratio("s", "b", [0.0; 2], 1.0, 2.0, 1.0),
            Row::ratio("t", "a", [0.0; 2], 1.0, 1.0, 1.0),
            Row::ratio("t", "b", [0.0; 2], 1.0, 4.0, 1.0),
        ];
        assert_eq!(group_drift(&rows), Some(4.0));
        let report = CheckReport::from_rows("x", rows[..3].to_vec());
        assert_eq!(report.drift, Some(2.0));
        assert_eq!(report.status, Status::Pass);
        assert_eq!(report.max_ratio, Some(2.0));
        assert_eq!(report.median_ratio, Some(1.0));
        assert_eq!(CheckReport::from_rows("x", rows).status, Status::Fail);
        assert_eq!(
            group_drift(&[Row::ratio("s", "a", [0.0; 2], 1.0, 1.0, 1.0)]),
            None
        );
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let report = CheckReport::from_rows(
            "comparison",
            vec![
                Row::ratio("", "n=64", [0.25, 0.5], 0.2, 1.5, 3.0),
                Row::failure("", "n=64", "solver failed".into()),
            ],
        );
        assert_eq!(report.status, Status::Fail);
        report.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("check,point_x,point_y,radius,lhs,rhs,ratio,flag")
        );
        assert_eq!(
            lines.next(),
            Some("comparison[n=64],0.25,0.5,0.2,1.5,3,0.5,ok")
        );
        assert!(lines.next().unwrap().ends_with("fail: solver failed"));
    }
}
