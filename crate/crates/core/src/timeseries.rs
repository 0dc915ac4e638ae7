//! Hourly market panels: CSV ingestion, calendar repair and rolling windows.
//!
//! A panel holds two aligned hourly series (price and day-ahead load
//! forecast) over contiguous calendar days. Raw exchange exports carry the
//! usual daylight-saving artefacts: one hour missing in spring and one hour
//! doubled in autumn. [`repair_calendar`] turns such raw cells into a
//! rectangular 24-hour panel:
//!
//! * a doubled hour is replaced by the arithmetic mean of its duplicates;
//! * a missing hour is replaced by the average of the closest observations
//!   before and after it, looking across midnight when needed. At the very
//!   first or last hour of the panel only one neighbour exists and its value
//!   is copied.
//!
//! Hours are 1-based (1..=24) in files and in [`RawCell`]; everything else in
//! the crate indexes hours 0-based.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use thiserror::Error;

pub const HOURS: usize = 24;

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("hour {hour} on {date} cannot be repaired: {reason}")]
    Unrepairable {
        date: NaiveDate,
        hour: usize,
        reason: &'static str,
    },
    #[error("dates are not contiguous: {after} is followed by {next}")]
    NonContiguous { after: NaiveDate, next: NaiveDate },
    #[error("panel is empty")]
    Empty,
    #[error("day {day} has {found} hourly entries, expected 24")]
    NotRectangular { day: usize, found: usize },
    #[error("window of {length} days ending before day {day} needs more history")]
    InsufficientHistory { length: usize, day: usize },
    #[error("day {day} is beyond the end of the panel ({len} days)")]
    OutOfRange { day: usize, len: usize },
    #[error("invalid window: {0}")]
    InvalidWindow(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One row of the raw input file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawCell {
    pub date: NaiveDate,
    /// 1-based hour of the delivery day.
    pub hour: u8,
    pub price: f64,
    pub load: f64,
}

/// Rectangular hourly price and load panel over contiguous days.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyPanel {
    days: Vec<NaiveDate>,
    price: Vec<[f64; HOURS]>,
    load: Vec<[f64; HOURS]>,
}

impl HourlyPanel {
    /// Assembles a panel from already rectangular data.
    ///
    /// Dates must be strictly increasing and contiguous. Values are not
    /// checked for finiteness here; panels built through
    /// [`repair_calendar`] are finite by construction.
    pub fn new(
        days: Vec<NaiveDate>,
        price: Vec<[f64; HOURS]>,
        load: Vec<[f64; HOURS]>,
    ) -> Result<Self, PanelError> {
        if days.is_empty() {
            return Err(PanelError::Empty);
        }
        if price.len() != days.len() {
            return Err(PanelError::NotRectangular {
                day: price.len().min(days.len()),
                found: 0,
            });
        }
        if load.len() != days.len() {
            return Err(PanelError::NotRectangular {
                day: load.len().min(days.len()),
                found: 0,
            });
        }
        check_contiguous(&days)?;
        Ok(Self { days, price, load })
    }

    pub fn num_days(&self) -> usize {
        self.days.len()
    }

    pub fn days(&self) -> &[NaiveDate] {
        &self.days
    }

    pub fn date(&self, day: usize) -> NaiveDate {
        self.days[day]
    }

    /// Index of `date` in the panel, if present.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let offset = (date - self.days[0]).num_days();
        (offset >= 0 && (offset as usize) < self.days.len()).then_some(offset as usize)
    }

    pub fn prices(&self) -> &[[f64; HOURS]] {
        &self.price
    }

    pub fn loads(&self) -> &[[f64; HOURS]] {
        &self.load
    }

    pub fn price(&self, day: usize, hour: usize) -> f64 {
        self.price[day][hour]
    }

    pub fn load(&self, day: usize, hour: usize) -> f64 {
        self.load[day][hour]
    }

    /// True when every price and load value is finite.
    pub fn is_finite(&self) -> bool {
        self.price
            .iter()
            .chain(self.load.iter())
            .all(|d| d.iter().all(|v| v.is_finite()))
    }

    /// Flattens back into raw cells (one per day and hour).
    pub fn to_cells(&self) -> Vec<RawCell> {
        let mut out = Vec::with_capacity(self.days.len() * HOURS);
        for (d, date) in self.days.iter().enumerate() {
            for h in 0..HOURS {
                out.push(RawCell {
                    date: *date,
                    hour: (h + 1) as u8,
                    price: self.price[d][h],
                    load: self.load[d][h],
                });
            }
        }
        out
    }

    /// Days `[start, end)` as a new panel.
    pub fn slice(&self, start: usize, end: usize) -> Result<HourlyPanel, PanelError> {
        if end > self.days.len() {
            return Err(PanelError::OutOfRange {
                day: end,
                len: self.days.len(),
            });
        }
        HourlyPanel::new(
            self.days[start..end].to_vec(),
            self.price[start..end].to_vec(),
            self.load[start..end].to_vec(),
        )
    }

    /// Writes the canonical CSV (`date,hour,price,load`).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), PanelError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "hour", "price", "load"])?;
        for c in self.to_cells() {
            w.write_record([
                c.date.format("%Y-%m-%d").to_string(),
                c.hour.to_string(),
                format_value(c.price),
                format_value(c.load),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), PanelError> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn format_value(v: f64) -> String {
    format!("{v}")
}

fn check_contiguous(days: &[NaiveDate]) -> Result<(), PanelError> {
    for w in days.windows(2) {
        if w[0].succ_opt() != Some(w[1]) {
            return Err(PanelError::NonContiguous {
                after: w[0],
                next: w[1],
            });
        }
    }
    Ok(())
}

/// Parses raw cells from CSV with header `date,hour,price,load`.
///
/// Non-finite or empty price/load fields are read as NaN and treated as
/// missing by [`repair_calendar`].
pub fn read_cells<R: Read>(reader: R) -> Result<Vec<RawCell>, PanelError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["date", "hour", "price", "load"];
    if headers.len() != 4 || headers.iter().zip(expected).any(|(h, e)| !h.eq_ignore_ascii_case(e)) {
        return Err(PanelError::Parse {
            line: 1,
            message: format!("expected header date,hour,price,load, found {:?}", headers),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| PanelError::Parse {
            line,
            message: e.to_string(),
        })?;
        if rec.len() != 4 {
            return Err(PanelError::Parse {
                line,
                message: format!("expected 4 fields, found {}", rec.len()),
            });
        }
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d").map_err(|e| PanelError::Parse {
            line,
            message: format!("bad date {:?}: {e}", &rec[0]),
        })?;
        let hour: u8 = rec[1].parse().map_err(|_| PanelError::Parse {
            line,
            message: format!("bad hour {:?}", &rec[1]),
        })?;
        if !(1..=24).contains(&hour) {
            return Err(PanelError::Parse {
                line,
                message: format!("hour {hour} outside 1..24"),
            });
        }
        let num = |s: &str, what: &str| -> Result<f64, PanelError> {
            if s.is_empty() {
                return Ok(f64::NAN);
            }
            s.parse::<f64>().map_err(|_| PanelError::Parse {
                line,
                message: format!("bad {what} {s:?}"),
            })
        };
        out.push(RawCell {
            date,
            hour,
            price: num(&rec[2], "price")?,
            load: num(&rec[3], "load")?,
        });
    }
    Ok(out)
}

/// Reads a CSV file and repairs its calendar.
pub fn ingest_csv(path: &Path) -> Result<HourlyPanel, PanelError> {
    let f = std::fs::File::open(path)?;
    let cells = read_cells(std::io::BufReader::new(f))?;
    repair_calendar(&cells)
}

/// Builds a rectangular panel from raw cells, averaging duplicated hours and
/// interpolating missing ones.
pub fn repair_calendar(cells: &[RawCell]) -> Result<HourlyPanel, PanelError> {
    if cells.is_empty() {
        return Err(PanelError::Empty);
    }
    // (sum, count) per series for every (date, hour).
    type Slot = [(f64, u32); 2];
    let mut by_day: BTreeMap<NaiveDate, [Slot; HOURS]> = BTreeMap::new();
    for c in cells {
        let slots = by_day.entry(c.date).or_insert([[(0.0, 0); 2]; HOURS]);
        let slot = &mut slots[c.hour as usize - 1];
        for (k, v) in [c.price, c.load].into_iter().enumerate() {
            if v.is_finite() {
                slot[k].0 += v;
                slot[k].1 += 1;
            }
        }
    }
    let days: Vec<NaiveDate> = by_day.keys().copied().collect();
    check_contiguous(&days)?;

    let n = days.len() * HOURS;
    let mut series: [Vec<Option<f64>>; 2] = [Vec::with_capacity(n), Vec::with_capacity(n)];
    for slots in by_day.values() {
        for slot in slots {
            for (k, s) in series.iter_mut().enumerate() {
                let (sum, count) = slot[k];
                s.push((count > 0).then(|| sum / count as f64));
            }
        }
    }

    let mut filled: [Vec<f64>; 2] = [vec![0.0; n], vec![0.0; n]];
    for (k, s) in series.iter().enumerate() {
        for i in 0..n {
            filled[k][i] = match s[i] {
                Some(v) => v,
                None => {
                    let prev = i.checked_sub(1).map(|j| s[j]);
                    let next = (i + 1 < n).then(|| s[i + 1]);
                    let fail = |reason| PanelError::Unrepairable {
                        date: days[i / HOURS],
                        hour: i % HOURS + 1,
                        reason,
                    };
                    match (prev, next) {
                        (Some(Some(a)), Some(Some(b))) => 0.5 * (a + b),
                        (None, Some(Some(b))) => b,
                        (Some(Some(a)), None) => a,
                        (None, None) => return Err(fail("panel has a single hour")),
                        _ => return Err(fail("two or more consecutive hours are missing")),
                    }
                }
            };
        }
    }

    let to_days = |v: &[f64]| -> Vec<[f64; HOURS]> {
        v.chunks_exact(HOURS)
            .map(|c| c.try_into().expect("chunk of 24"))
            .collect()
    };
    HourlyPanel::new(days, to_days(&filled[0]), to_days(&filled[1]))
}

/// Rolling calibration window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub length_days: usize,
    /// Index of the first forecast day.
    pub anchor: usize,
}

impl WindowSpec {
    pub fn new(length_days: usize, anchor: usize) -> Result<Self, PanelError> {
        if length_days == 0 {
            return Err(PanelError::InvalidWindow("length must be at least one day"));
        }
        if anchor < length_days {
            return Err(PanelError::InvalidWindow("anchor must leave a full window of history"));
        }
        Ok(Self {
            length_days,
            anchor,
        })
    }

    /// Window anchored at the earliest possible day.
    pub fn with_length(length_days: usize) -> Result<Self, PanelError> {
        Self::new(length_days, length_days)
    }
}

/// Borrowed view of `length_days` consecutive panel days.
#[derive(Debug, Clone, Copy)]
pub struct PanelSlice<'a> {
    panel: &'a HourlyPanel,
    start: usize,
    len: usize,
}

impl<'a> PanelSlice<'a> {
    pub fn start(&self) -> usize {
        self.start
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Panel indices covered by the slice.
    pub fn day_indices(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }

    pub fn prices(&self) -> &'a [[f64; HOURS]] {
        &self.panel.price[self.day_indices()]
    }

    pub fn loads(&self) -> &'a [[f64; HOURS]] {
        &self.panel.load[self.day_indices()]
    }

    pub fn dates(&self) -> &'a [NaiveDate] {
        &self.panel.days[self.day_indices()]
    }
}

/// The `spec.length_days` days strictly preceding `day`.
pub fn window(panel: &HourlyPanel, spec: WindowSpec, day: usize) -> Result<PanelSlice<'_>, PanelError> {
    if day < spec.length_days {
        return Err(PanelError::InsufficientHistory {
            length: spec.length_days,
            day,
        });
    }
    if day > panel.num_days() {
        return Err(PanelError::OutOfRange {
            day,
            len: panel.num_days(),
        });
    }
    Ok(PanelSlice {
        panel,
        start: day - spec.length_days,
        len: spec.length_days,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn full_day(date: NaiveDate, f: impl Fn(usize) -> f64) -> Vec<RawCell> {
        (1..=24)
            .map(|h| RawCell {
                date,
                hour: h as u8,
                price: f(h),
                load: 100.0 + f(h),
            })
            .collect()
    }

    #[test]
    fn two_complete_days() {
        let mut cells = full_day(d("2020-01-01"), |h| h as f64);
        cells.extend(full_day(d("2020-01-02"), |h| 2.0 * h as f64));
        let p = repair_calendar(&cells).unwrap();
        assert_eq!(p.num_days(), 2);
        assert_eq!(p.to_cells().len(), 48);
        assert_eq!(p.price(1, 23), 48.0);
    }

    #[test]
    fn missing_hour_is_neighbour_average() {
        let mut cells = full_day(d("2020-03-29"), |h| if h == 4 { 8.0 } else if h == 2 { 4.0 } else { 1.0 });
        cells.retain(|c| c.hour != 3);
        let p = repair_calendar(&cells).unwrap();
        assert_eq!(p.price(0, 2), 6.0);
    }

    #[test]
    fn doubled_hour_is_averaged() {
        let mut cells = full_day(d("2020-10-25"), |_| 1.0);
        cells[2].price = 10.0;
        cells.push(RawCell {
            price: 20.0,
            ..cells[2]
        });
        let p = repair_calendar(&cells).unwrap();
        assert_eq!(p.price(0, 2), 15.0);

        let mut cells = full_day(d("2020-10-25"), |_| 1.0);
        cells[2].price = 4.0;
        cells.push(RawCell {
            price: 8.0,
            ..cells[2]
        });
        assert_eq!(repair_calendar(&cells).unwrap().price(0, 2), 6.0);
    }

    #[test]
    fn missing_hour_looks_across_midnight() {
        let mut cells = full_day(d("2020-01-01"), |h| h as f64);
        cells.extend(full_day(d("2020-01-02"), |h| 100.0 + h as f64));
        cells.retain(|c| !(c.date == d("2020-01-02") && c.hour == 1));
        let p = repair_calendar(&cells).unwrap();
        assert_eq!(p.price(1, 0), 0.5 * (24.0 + 102.0));
    }

    #[test]
    fn panel_edges_copy_the_only_neighbour() {
        let mut cells = full_day(d("2020-01-01"), |h| h as f64);
        cells.retain(|c| c.hour != 1 && c.hour != 24);
        let p = repair_calendar(&cells).unwrap();
        assert_eq!(p.price(0, 0), 2.0);
        assert_eq!(p.price(0, 23), 23.0);
    }

    #[test]
    fn two_consecutive_missing_hours_fail() {
        let mut cells = full_day(d("2020-01-01"), |h| h as f64);
        cells.retain(|c| c.hour != 5 && c.hour != 6);
        assert!(matches!(
            repair_calendar(&cells),
            Err(PanelError::Unrepairable { hour: 5, .. })
        ));
    }

    #[test]
    fn gap_in_dates_is_structural_error() {
        let mut cells = full_day(d("2020-01-01"), |h| h as f64);
        cells.extend(full_day(d("2020-01-03"), |h| h as f64));
        assert!(matches!(
            repair_calendar(&cells),
            Err(PanelError::NonContiguous { .. })
        ));
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv = "date,hour,price,load\n2020-01-01,1,10,100\n2020-01-01,x,10,100\n";
        match read_cells(csv.as_bytes()) {
            Err(PanelError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let csv = "date,hour,price,load\n2020-01-01,25,10,100\n";
        assert!(matches!(read_cells(csv.as_bytes()), Err(PanelError::Parse { line: 2, .. })));
    }

    #[test]
    fn window_bounds() {
        let mut cells = Vec::new();
        let mut date = d("2020-01-01");
        for _ in 0..3 {
            cells.extend(full_day(date, |h| h as f64));
            date = date.succ_opt().unwrap();
        }
        let p = repair_calendar(&cells).unwrap();
        let spec = WindowSpec::with_length(2).unwrap();
        let w = window(&p, spec, 2).unwrap();
        assert_eq!(w.day_indices(), 0..2);
        assert!(matches!(
            window(&p, spec, 1),
            Err(PanelError::InsufficientHistory { .. })
        ));
        assert!(WindowSpec::new(0, 0).is_err());
        assert!(WindowSpec::new(3, 2).is_err());
    }
}
