//! Temporal aggregation of daily climatic series.

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// Statistics of the daily values falling in the five calendar years
/// before the event: `[Jan 1 of loss_year-5, Dec 31 of loss_year-1]`.
/// Days outside the window (and gaps) are simply ignored.
pub fn aggregate_climatic(
    series: &[(NaiveDate, f64)],
    loss_year: i32,
) -> Result<(f64, f64, f64)> {
    let start = NaiveDate::from_ymd_opt(loss_year - 5, 1, 1).unwrap();
    let end = NaiveDate::from_ymd_opt(loss_year - 1, 12, 31).unwrap();

    let mut n = 0usize;
    let mut sum = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &(date, value) in series {
        if date < start || date > end {
            continue;
        }
        n += 1;
        sum += value;
        min = min.min(value);
        max = max.max(value);
    }
    if n == 0 {
        return Err(Error::MissingPredictor(format!(
            "no daily values in {start}..={end}"
        )));
    }
    Ok((sum / n as f64, min, max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn constant_series() {
        let series: Vec<_> = (1..=10).map(|d| (day(2012, 1, d), 4.5)).collect();
        assert_eq!(aggregate_climatic(&series, 2014).unwrap(), (4.5, 4.5, 4.5));
    }

    #[test]
    fn two_values() {
        let series = vec![(day(2011, 6, 1), 0.0), (day(2012, 6, 1), 10.0)];
        assert_eq!(aggregate_climatic(&series, 2014).unwrap(), (5.0, 0.0, 10.0));
    }

    #[test]
    fn out_of_window_days_ignored() {
        let series = vec![
            (day(2008, 12, 31), 100.0), // before window for 2014
            (day(2009, 1, 1), 1.0),     // first in-window day
            (day(2013, 12, 31), 3.0),   // last in-window day
            (day(2014, 1, 1), 100.0),   // event year, excluded
        ];
        assert_eq!(aggregate_climatic(&series, 2014).unwrap(), (2.0, 1.0, 3.0));
    }

    #[test]
    fn empty_window_is_missing() {
        let series = vec![(day(2015, 1, 1), 1.0)];
        assert!(matches!(
            aggregate_climatic(&series, 2014),
            Err(Error::MissingPredictor(_))
        ));
    }
}
