use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Basis, IntensityLabel};
use crate::optics::stats::Classification;
use crate::optics::{RawEvent, SessionStatistics};

pub const SIFTED_HEADER: &str = "event_index,basis,a,b,bit_a,bit_b,error";

/// One kept event after basis sifting. `bit_b` already carries the second
/// user's flip, so `error` is simply `bit_a != bit_b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiftedRecord {
    pub event_index: u64,
    pub basis: Basis,
    pub a: IntensityLabel,
    pub b: IntensityLabel,
    pub bit_a: bool,
    pub bit_b: bool,
    pub error: bool,
}

/// Keep same-basis ψ⁻ events and bin every same-basis slot into the cell
/// counts.
pub fn sift(events: &[RawEvent], pair_id: &str) -> (Vec<SiftedRecord>, SessionStatistics) {
    let mut stats = SessionStatistics::new(pair_id);
    let mut kept = Vec::new();
    for (i, ev) in events.iter().enumerate() {
        if let Classification::Coincidence { error } = stats.record(ev) {
            let bit_b = !ev.b.bit;
            debug_assert_eq!(error, ev.a.bit != bit_b);
            kept.push(SiftedRecord {
                event_index: i as u64,
                basis: ev.a.basis,
                a: ev.a.label,
                b: ev.b.label,
                bit_a: ev.a.bit,
                bit_b,
                error,
            });
        }
    }
    (kept, stats)
}

pub fn write_sifted<W: Write>(mut w: W, records: &[SiftedRecord]) -> Result<()> {
    writeln!(w, "{SIFTED_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.event_index, r.basis, r.a, r.b, r.bit_a as u8, r.bit_b as u8, r.error as u8
        )?;
    }
    Ok(())
}

pub fn read_sifted<R: BufRead>(r: R) -> Result<Vec<SiftedRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        let perr = |reason: String| Error::Parse { line: n, reason };
        if n == 1 {
            if line.trim() != SIFTED_HEADER {
                return Err(perr(format!("expected header {SIFTED_HEADER:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 7 {
            return Err(perr(format!("expected 7 fields, found {}", f.len())));
        }
        let bit = |s: &str| match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(perr(format!("bad bit {s:?}"))),
        };
        out.push(SiftedRecord {
            event_index: f[0].parse().map_err(|e| perr(format!("event_index: {e}")))?,
            basis: f[1].parse().map_err(|e| perr(format!("basis: {e}")))?,
            a: f[2].parse().map_err(|e| perr(format!("a: {e}")))?,
            b: f[3].parse().map_err(|e| perr(format!("b: {e}")))?,
            bit_a: bit(f[4])?,
            bit_b: bit(f[5])?,
            error: bit(f[6])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ProtocolParams;
    use crate::optics::session::simulate_events;
    use crate::optics::{field_detectors, BellOutcome, ChannelModel, LinkModel, UserChoice};

    fn choice(label: IntensityLabel, basis: Basis, bit: bool) -> UserChoice {
        UserChoice { label, basis, bit }
    }

    #[test]
    fn mismatched_bases_and_silent_slots_are_dropped() {
        use IntensityLabel::*;
        let evs = [
            RawEvent {
                a: choice(Signal, Basis::Z, false),
                b: choice(Signal, Basis::X, true),
                outcome: Some(BellOutcome::PsiMinus),
            },
            RawEvent {
                a: choice(Decoy, Basis::X, false),
                b: choice(Signal, Basis::X, true),
                outcome: None,
            },
        ];
        let (kept, stats) = sift(&evs, "A-B");
        assert!(kept.is_empty());
        assert_eq!(stats.total_sent(), 1);
        assert_eq!(stats.cell(Decoy, Signal, Basis::X).sent, 1);
    }

    #[test]
    fn flip_convention() {
        use IntensityLabel::*;
        let ev = |ba: bool, bb: bool| RawEvent {
            a: choice(Signal, Basis::Z, ba),
            b: choice(Decoy, Basis::Z, bb),
            outcome: Some(BellOutcome::PsiMinus),
        };
        // ψ⁻ anticorrelates: opposite raw bits agree after the flip
        let (kept, _) = sift(&[ev(false, true)], "A-B");
        assert!(!kept[0].error);
        assert_eq!((kept[0].bit_a, kept[0].bit_b), (false, false));
        let (kept, stats) = sift(&[ev(false, false)], "A-B");
        assert!(kept[0].error);
        assert_eq!(stats.cell(Signal, Decoy, Basis::Z).errors, 1);
    }

    #[test]
    fn sifted_stream_is_sound() {
        let link = LinkModel::new(
            "U1-U2",
            [ChannelModel::with_fiber_loss(0.0), ChannelModel::with_fiber_loss(0.0)],
            field_detectors(),
        );
        let p = ProtocolParams::default();
        let events = simulate_events(&p, &link, 400_000, 4).unwrap();
        let (kept, stats) = sift(&events, "U1-U2");
        assert!(kept.len() > 100, "{}", kept.len());
        for r in &kept {
            let e = &events[r.event_index as usize];
            assert_eq!(e.a.basis, e.b.basis);
            assert_eq!(r.basis, e.a.basis);
            assert_eq!((r.a, r.b), (e.a.label, e.b.label));
            assert_eq!(r.error, r.bit_a != r.bit_b);
            assert!(e.outcome.is_some());
        }
        assert_eq!(kept.len() as u64, stats.total_coincidences());
        let same_basis = events.iter().filter(|e| e.a.basis == e.b.basis).count() as u64;
        assert_eq!(stats.total_sent(), same_basis);
        let errors: u64 = stats.iter_cells().map(|(_, _, _, c)| c.errors).sum();
        assert_eq!(errors, kept.iter().filter(|r| r.error).count() as u64);
    }

    #[test]
    fn csv_round_trip() {
        let recs = vec![SiftedRecord {
            event_index: 7,
            basis: Basis::X,
            a: IntensityLabel::Vacuum,
            b: IntensityLabel::Signal,
            bit_a: true,
            bit_b: false,
            error: true,
        }];
        let mut buf = Vec::new();
        write_sifted(&mut buf, &recs).unwrap();
        assert_eq!(read_sifted(&buf[..]).unwrap(), recs);
        let bad = format!("{SIFTED_HEADER}\n1,Z,signal,decoy,0,2,0\n");
        assert!(matches!(read_sifted(bad.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }
}
