//! CSV emitters. Every table starts with a header row; floats are written in
//! the shortest form that parses back to the same value.

use std::io::{self, Write};

use crate::pruning::ActiveSet;
use crate::score::ScoreSnapshot;
use crate::spectral::PsdEstimate;
use crate::trainer::{RunMetrics, SweepRow};

/// Shortest round-trip decimal form; non-finite values as `NaN`/`inf`/`-inf`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        ryu::Buffer::new().format_finite(v).to_string()
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn write_scores_csv<W: Write>(mut w: W, snap: &ScoreSnapshot) -> io::Result<()> {
    writeln!(w, "id,score,update_count")?;
    for (id, score, count) in snap.iter() {
        writeln!(w, "{id},{},{count}", fmt_f64(score))?;
    }
    Ok(())
}

/// One row per sample, pruned ones included with `kept = 0`, `rescale = 0`.
pub fn write_decisions_csv<W: Write>(mut w: W, active: &ActiveSet) -> io::Result<()> {
    writeln!(w, "id,kept,rescale")?;
    for i in 0..active.n_samples() {
        let id = crate::score::SampleId(i);
        match active.factor(id) {
            Some(f) => writeln!(w, "{i},1,{}", fmt_f64(f))?,
            None => writeln!(w, "{i},0,0")?,
        }
    }
    Ok(())
}

pub fn write_psd_csv<W: Write>(mut w: W, psd: &PsdEstimate) -> io::Result<()> {
    writeln!(w, "freq,power")?;
    for (f, p) in psd.freqs.iter().zip(&psd.power) {
        writeln!(w, "{},{}", fmt_f64(*f), fmt_f64(*p))?;
    }
    Ok(())
}

/// Signal and noise spectra side by side with their ratio.
pub fn write_separation_csv<W: Write>(mut w: W, signal: &PsdEstimate, noise: &PsdEstimate) -> io::Result<()> {
    writeln!(w, "freq,signal_power,noise_power")?;
    for ((f, s), n) in signal.freqs.iter().zip(&signal.power).zip(&noise.power) {
        writeln!(w, "{},{},{}", fmt_f64(*f), fmt_f64(*s), fmt_f64(*n))?;
    }
    Ok(())
}

pub fn write_filter_csv<W: Write>(mut w: W, rows: &[(f64, f64)]) -> io::Result<()> {
    writeln!(w, "omega,magnitude")?;
    for (o, m) in rows {
        writeln!(w, "{},{}", fmt_f64(*o), fmt_f64(*m))?;
    }
    Ok(())
}

pub const METRICS_HEADER: &str =
    "label,final_train_acc,final_test_acc,pruned_percent,sample_visits,steps,wall_time,final_loss";

/// One row per run. `label` must not contain commas.
pub fn write_metrics_row<W: Write>(mut w: W, label: &str, m: &RunMetrics) -> io::Result<()> {
    writeln!(
        w,
        "{label},{},{},{},{},{},{},{}",
        fmt_f64(m.final_train_acc),
        fmt_f64(m.final_test_acc),
        fmt_f64(m.pruned_percent),
        m.sample_visits,
        m.steps,
        fmt_f64(m.wall_time),
        m.loss_curve.last().map_or_else(|| "NaN".to_string(), |&l| fmt_f64(l)),
    )
}

pub fn write_sweep_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(w, "alpha,train_acc,test_acc,pruned_percent")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_f64(r.alpha),
            fmt_f64(r.train_acc),
            fmt_f64(r.test_acc),
            fmt_f64(r.pruned_percent)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{BatchRecord, EmaConfig, InitPolicy, SampleId, ScoreTable};

    #[test]
    fn floats_round_trip() {
        for v in [0.1 + 0.2, 1.0 / 3.0, 1e-300, 123456789.125, -0.0, 5e-324] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        assert_eq!(fmt_f64(f64::NAN), "NaN");
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn scores_csv_layout() {
        let cfg = EmaConfig::new(0.5, InitPolicy::FirstObservedBatchLoss).unwrap();
        let mut t = ScoreTable::new(3, &cfg);
        t.apply_batch(&BatchRecord::new(0, vec![SampleId(1)], 0.25).unwrap(), &cfg)
            .unwrap();
        let mut out = Vec::new();
        write_scores_csv(&mut out, &t.snapshot()).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "id,score,update_count\n0,0.0,0\n1,0.25,1\n2,0.0,0\n"
        );
    }

    #[test]
    fn decisions_csv_layout() {
        let a = ActiveSet::full(2, 0);
        let mut out = Vec::new();
        write_decisions_csv(&mut out, &a).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "id,kept,rescale\n0,1,1.0\n1,1,1.0\n");
    }

    #[test]
    fn filter_csv_layout() {
        let mut out = Vec::new();
        write_filter_csv(&mut out, &[(0.0, 1.0)]).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "omega,magnitude\n0.0,1.0\n");
    }
}
