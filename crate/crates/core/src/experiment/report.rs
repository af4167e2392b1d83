use std::path::Path;

use crate::baselines::{qam16_ber, qpsk_ber, snr_to_ebn0_db};
use crate::error::Result;

use super::sweep::BerCurve;
use super::train::TrainHistory;

/// One line of a BER CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct BerRow {
    pub snr_db: f64,
    pub bits_tested: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub label: String,
}

/// Shortest fixed-width rendering that round-trips every `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn curve_rows(curve: &BerCurve) -> Vec<BerRow> {
    curve
        .points
        .iter()
        .map(|p| BerRow {
            snr_db: p.snr_db,
            bits_tested: p.bits_tested,
            bit_errors: p.bit_errors,
            ber: p.ber,
            label: curve.label.clone(),
        })
        .collect()
}

/// Analytic QPSK and QAM16 rows on a model's SNR axis. The model carries
/// `bits_per_sample` bits per complex sample, which fixes its `Eb/N0`.
/// Analytic rows have no Monte-Carlo counts, so both count columns are 0.
pub fn baseline_rows(snr_db: &[f64], bits_per_sample: f64) -> Vec<BerRow> {
    let family = |label: &str, f: fn(f64) -> f64| -> Vec<BerRow> {
        snr_db
            .iter()
            .map(|&s| BerRow {
                snr_db: s,
                bits_tested: 0,
                bit_errors: 0,
                ber: f(snr_to_ebn0_db(s, bits_per_sample)),
                label: label.to_string(),
            })
            .collect()
    };
    let mut rows = family("qpsk", qpsk_ber);
    rows.extend(family("qam16", qam16_ber));
    rows
}

pub fn write_ber_csv(path: &Path, rows: &[BerRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["snr_db", "bits_tested", "bit_errors", "ber", "label"])?;
    for r in rows {
        w.write_record([
            format_float(r.snr_db),
            r.bits_tested.to_string(),
            r.bit_errors.to_string(),
            format_float(r.ber),
            r.label.clone(),
        ])?;
    }
    w.flush().map_err(|e| crate::Error::io(path, e))?;
    Ok(())
}

pub fn write_history_csv(path: &Path, history: &TrainHistory) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "val_loss"])?;
    for e in &history.epochs {
        w.write_record([e.epoch.to_string(), format_float(e.train_loss), format_float(e.val_loss)])?;
    }
    w.flush().map_err(|e| crate::Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, 5e-324, -2.5e300, 0.0] {
            assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(format_float(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn baselines_use_exact_analytic_values() {
        let rows = baseline_rows(&[0.0, 4.0], 1.0);
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[1].ber, qpsk_ber(4.0));
        assert_eq!(rows[2].label, "qam16");
        assert_eq!(rows[2].ber, qam16_ber(0.0));
    }
}
