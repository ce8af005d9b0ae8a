//! Per-cell detection counts and their line-delimited record format.
//!
//! A record file is UTF-8 with LF line endings. The first line is the header
//!
//! ```text
//! pair_id,a,b,basis,sent,coinc,err
//! ```
//!
//! followed by one line per `(a, b, basis)` cell. `a` and `b` are intensity
//! labels (`vacuum`, `decoy`, `signal`), `basis` is `Z` or `X`, and the three
//! counts are unsigned decimal integers.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::bsm::BellOutcome;
use crate::error::{Error, Result};
use crate::model::{Basis, IntensityLabel};

pub const RECORD_HEADER: &str = "pair_id,a,b,basis,sent,coinc,err";

/// Photon numbers at or above this value share the last truth-tag bucket.
pub const TRUTH_MAX_PHOTONS: usize = 7;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts {
    pub sent: u64,
    pub coincidences: u64,
    pub errors: u64,
}

impl CellCounts {
    pub fn gain(&self) -> f64 {
        if self.sent == 0 {
            0.0
        } else {
            self.coincidences as f64 / self.sent as f64
        }
    }

    pub fn error_rate(&self) -> f64 {
        if self.coincidences == 0 {
            0.0
        } else {
            self.errors as f64 / self.coincidences as f64
        }
    }

    fn add(&mut self, other: &CellCounts) {
        self.sent += other.sent;
        self.coincidences += other.coincidences;
        self.errors += other.errors;
    }

    fn is_consistent(&self) -> bool {
        self.errors <= self.coincidences && self.coincidences <= self.sent
    }
}

/// Photon-number-resolved counts, only available from the tagged yield
/// model. Indexed `[a][b][basis][n_a][n_b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTags {
    pub cells: Vec<CellCounts>,
}

impl TruthTags {
    const PER_CELL: usize = (TRUTH_MAX_PHOTONS + 1) * (TRUTH_MAX_PHOTONS + 1);

    pub fn new() -> Self {
        TruthTags {
            cells: vec![CellCounts::default(); 18 * Self::PER_CELL],
        }
    }

    fn offset(a: IntensityLabel, b: IntensityLabel, basis: Basis, na: usize, nb: usize) -> usize {
        let cell = (a.index() * 3 + b.index()) * 2 + basis.index();
        let na = na.min(TRUTH_MAX_PHOTONS);
        let nb = nb.min(TRUTH_MAX_PHOTONS);
        cell * Self::PER_CELL + na * (TRUTH_MAX_PHOTONS + 1) + nb
    }

    pub fn get(&self, a: IntensityLabel, b: IntensityLabel, basis: Basis, na: usize, nb: usize) -> &CellCounts {
        &self.cells[Self::offset(a, b, basis, na, nb)]
    }

    pub fn get_mut(
        &mut self,
        a: IntensityLabel,
        b: IntensityLabel,
        basis: Basis,
        na: usize,
        nb: usize,
    ) -> &mut CellCounts {
        &mut self.cells[Self::offset(a, b, basis, na, nb)]
    }

    fn add(&mut self, other: &TruthTags) {
        for (x, y) in self.cells.iter_mut().zip(&other.cells) {
            x.add(y);
        }
    }
}

impl Default for TruthTags {
    fn default() -> Self {
        Self::new()
    }
}

/// Sent, coincidence and error counts for the 18 sifted cells of one user
/// pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatistics {
    pub pair_id: String,
    /// Indexed `[a][b][basis]`.
    pub cells: [[[CellCounts; 2]; 3]; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthTags>,
}

/// One user's preparation choices for a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UserChoice {
    pub label: IntensityLabel,
    pub basis: Basis,
    pub bit: bool,
}

/// Everything both users and the relay know about one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawEvent {
    pub a: UserChoice,
    pub b: UserChoice,
    pub outcome: Option<BellOutcome>,
}

/// Where a raw event ends up after sifting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    /// Bases differ; discarded.
    Dropped,
    /// Same basis, no announced outcome: counts as sent only.
    Sent,
    /// Same basis and ψ⁻. `error` applies the anticorrelation convention:
    /// the second user flips, so equal raw bits are an error.
    Coincidence { error: bool },
}

pub fn classify(event: &RawEvent) -> Classification {
    if event.a.basis != event.b.basis {
        return Classification::Dropped;
    }
    match event.outcome {
        None => Classification::Sent,
        Some(BellOutcome::PsiMinus) => Classification::Coincidence {
            error: event.a.bit == event.b.bit,
        },
    }
}

impl SessionStatistics {
    pub fn new(pair_id: impl Into<String>) -> Self {
        SessionStatistics {
            pair_id: pair_id.into(),
            cells: [[[CellCounts::default(); 2]; 3]; 3],
            truth: None,
        }
    }

    pub fn cell(&self, a: IntensityLabel, b: IntensityLabel, basis: Basis) -> &CellCounts {
        &self.cells[a.index()][b.index()][basis.index()]
    }

    pub fn cell_mut(&mut self, a: IntensityLabel, b: IntensityLabel, basis: Basis) -> &mut CellCounts {
        &mut self.cells[a.index()][b.index()][basis.index()]
    }

    /// Iterate cells in record order: `a`, then `b`, then Z before X.
    pub fn iter_cells(&self) -> impl Iterator<Item = (IntensityLabel, IntensityLabel, Basis, &CellCounts)> {
        IntensityLabel::ALL.into_iter().flat_map(move |a| {
            IntensityLabel::ALL.into_iter().flat_map(move |b| {
                Basis::ALL
                    .into_iter()
                    .map(move |basis| (a, b, basis, self.cell(a, b, basis)))
            })
        })
    }

    /// Count one raw event. Returns how it was classified.
    pub fn record(&mut self, event: &RawEvent) -> Classification {
        let class = classify(event);
        let cell = self.cell_mut(event.a.label, event.b.label, event.a.basis);
        match class {
            Classification::Dropped => {}
            Classification::Sent => cell.sent += 1,
            Classification::Coincidence { error } => {
                cell.sent += 1;
                cell.coincidences += 1;
                cell.errors += error as u64;
            }
        }
        class
    }

    pub fn total_sent(&self) -> u64 {
        self.iter_cells().map(|(_, _, _, c)| c.sent).sum()
    }

    pub fn total_coincidences(&self) -> u64 {
        self.iter_cells().map(|(_, _, _, c)| c.coincidences).sum()
    }

    pub fn is_consistent(&self) -> bool {
        self.iter_cells().all(|(_, _, _, c)| c.is_consistent())
    }

    /// Cell-wise addition. Both sides must belong to the same pair.
    pub fn merge(&mut self, other: &SessionStatistics) -> Result<()> {
        if self.pair_id != other.pair_id {
            return Err(Error::PairMismatch {
                expected: self.pair_id.clone(),
                found: other.pair_id.clone(),
            });
        }
        self.absorb(other);
        Ok(())
    }

    /// Cell-wise addition without the pair check; used for chunk partials.
    pub(crate) fn absorb(&mut self, other: &SessionStatistics) {
        for a in 0..3 {
            for b in 0..3 {
                for k in 0..2 {
                    self.cells[a][b][k].add(&other.cells[a][b][k]);
                }
            }
        }
        match (&mut self.truth, &other.truth) {
            (Some(mine), Some(theirs)) => mine.add(theirs),
            (None, Some(theirs)) => self.truth = Some(theirs.clone()),
            _ => {}
        }
    }

    /// Swap the roles of the two users: cell `(a, b)` moves to `(b, a)`.
    pub fn transposed(&self) -> SessionStatistics {
        let mut out = SessionStatistics::new(self.pair_id.clone());
        for (a, b, basis, c) in self.iter_cells() {
            *out.cell_mut(b, a, basis) = *c;
        }
        out
    }

    pub fn write_records<W: Write>(&self, mut w: W, header: bool) -> Result<()> {
        if header {
            writeln!(w, "{RECORD_HEADER}")?;
        }
        for (a, b, basis, c) in self.iter_cells() {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                self.pair_id, a, b, basis, c.sent, c.coincidences, c.errors
            )?;
        }
        Ok(())
    }

    pub fn to_records_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_records(&mut buf, true).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("records are ASCII")
    }

    /// Parse a record file. Cells may appear in any order; duplicate or
    /// missing cells, mixed pairs and inconsistent counts are errors.
    pub fn read_records<R: BufRead>(reader: R) -> Result<SessionStatistics> {
        let mut lines = reader.lines().enumerate();
        let header = match lines.next() {
            Some((_, line)) => line?,
            None => {
                return Err(Error::Parse {
                    line: 1,
                    reason: "empty file".into(),
                })
            }
        };
        if header.trim_end_matches('\r').replace(' ', "") != RECORD_HEADER {
            return Err(Error::Parse {
                line: 1,
                reason: format!("expected header `{RECORD_HEADER}`"),
            });
        }
        let mut stats: Option<SessionStatistics> = None;
        let mut seen = [[[false; 2]; 3]; 3];
        for (i, line) in lines {
            let lineno = i + 1;
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |reason: String| Error::Parse { line: lineno, reason };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 7 {
                return Err(parse_err(format!("expected 7 fields, found {}", fields.len())));
            }
            let a: IntensityLabel = fields[1].parse().map_err(parse_err)?;
            let b: IntensityLabel = fields[2].parse().map_err(parse_err)?;
            let basis: Basis = fields[3].parse().map_err(parse_err)?;
            let count = |s: &str, name: &str| {
                s.parse::<u64>()
                    .map_err(|e| parse_err(format!("field `{name}`: {e}")))
            };
            let counts = CellCounts {
                sent: count(fields[4], "sent")?,
                coincidences: count(fields[5], "coinc")?,
                errors: count(fields[6], "err")?,
            };
            if !counts.is_consistent() {
                return Err(parse_err("need err <= coinc <= sent".into()));
            }
            let s = stats.get_or_insert_with(|| SessionStatistics::new(fields[0]));
            if s.pair_id != fields[0] {
                return Err(parse_err(format!(
                    "pair `{}` differs from `{}`",
                    fields[0], s.pair_id
                )));
            }
            let flag = &mut seen[a.index()][b.index()][basis.index()];
            if *flag {
                return Err(parse_err(format!("duplicate cell {a},{b},{basis}")));
            }
            *flag = true;
            *s.cell_mut(a, b, basis) = counts;
        }
        let stats = stats.ok_or(Error::Parse {
            line: 2,
            reason: "no records".into(),
        })?;
        if seen.iter().flatten().flatten().any(|f| !f) {
            return Err(Error::Parse {
                line: 0,
                reason: "file does not cover all 18 cells".into(),
            });
        }
        Ok(stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn choice(label: IntensityLabel, basis: Basis, bit: bool) -> UserChoice {
        UserChoice { label, basis, bit }
    }

    #[test]
    fn basis_mismatch_is_dropped() {
        let e = RawEvent {
            a: choice(IntensityLabel::Signal, Basis::Z, false),
            b: choice(IntensityLabel::Decoy, Basis::X, true),
            outcome: Some(BellOutcome::PsiMinus),
        };
        let mut s = SessionStatistics::new("U1-U2");
        assert_eq!(s.record(&e), Classification::Dropped);
        assert_eq!(s.total_sent(), 0);
    }

    #[test]
    fn anticorrelated_bits_are_not_errors() {
        let mut s = SessionStatistics::new("U1-U2");
        let ok = RawEvent {
            a: choice(IntensityLabel::Signal, Basis::Z, false),
            b: choice(IntensityLabel::Signal, Basis::Z, true),
            outcome: Some(BellOutcome::PsiMinus),
        };
        let bad = RawEvent {
            b: choice(IntensityLabel::Signal, Basis::Z, false),
            ..ok
        };
        assert_eq!(s.record(&ok), Classification::Coincidence { error: false });
        assert_eq!(s.record(&bad), Classification::Coincidence { error: true });
        let c = s.cell(IntensityLabel::Signal, IntensityLabel::Signal, Basis::Z);
        assert_eq!((c.sent, c.coincidences, c.errors), (2, 2, 1));
    }

    #[test]
    fn merge_rejects_other_pair() {
        let mut a = SessionStatistics::new("U1-U2");
        let b = SessionStatistics::new("U1-U3");
        assert!(matches!(a.merge(&b), Err(Error::PairMismatch { .. })));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = SessionStatistics::read_records("".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));

        let mut s = SessionStatistics::new("U1-U2");
        s.cell_mut(IntensityLabel::Decoy, IntensityLabel::Decoy, Basis::X).sent = 5;
        let text = s.to_records_string();
        let broken = text.replacen("decoy,decoy,X,5", "decoy,decoy,X,five", 1);
        match SessionStatistics::read_records(broken.as_bytes()).unwrap_err() {
            Error::Parse { line, reason } => {
                assert_eq!(line, 2 + (3 + 1) * 2 + 1);
                assert!(reason.contains("sent"), "{reason}");
            }
            other => panic!("{other}"),
        }

        let short: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(SessionStatistics::read_records(short.as_bytes()).is_err());
    }

    #[test]
    fn header_is_first_line() {
        let s = SessionStatistics::new("U3-U2");
        let text = s.to_records_string();
        assert_eq!(text.lines().next().unwrap(), RECORD_HEADER);
        assert_eq!(text.lines().count(), 19);
        assert!(text.ends_with('\n') && !text.contains('\r'));
    }

    fn arb_stats() -> impl Strategy<Value = SessionStatistics> {
        proptest::collection::vec((0u64..1_000_000, 0u64..1000, 0u64..1000), 18).prop_map(|v| {
            let mut s = SessionStatistics::new("U1-U2");
            let mut it = v.into_iter();
            for a in IntensityLabel::ALL {
                for b in IntensityLabel::ALL {
                    for basis in Basis::ALL {
                        let (sent, c, e) = it.next().unwrap();
                        let coinc = c.min(sent);
                        *s.cell_mut(a, b, basis) = CellCounts {
                            sent,
                            coincidences: coinc,
                            errors: e.min(coinc),
                        };
                    }
                }
            }
            s
        })
    }

    proptest! {
        #[test]
        fn records_round_trip(s in arb_stats()) {
            let back = SessionStatistics::read_records(s.to_records_string().as_bytes()).unwrap();
            prop_assert_eq!(back, s);
        }

        #[test]
        fn merge_is_commutative_and_associative(x in arb_stats(), y in arb_stats(), z in arb_stats()) {
            let mut xy = x.clone();
            xy.merge(&y).unwrap();
            let mut yx = y.clone();
            yx.merge(&x).unwrap();
            prop_assert_eq!(&xy, &yx);
            let mut xy_z = xy.clone();
            xy_z.merge(&z).unwrap();
            let mut yz = y.clone();
            yz.merge(&z).unwrap();
            let mut x_yz = x.clone();
            x_yz.merge(&yz).unwrap();
            prop_assert_eq!(xy_z, x_yz);
        }
    }
}
