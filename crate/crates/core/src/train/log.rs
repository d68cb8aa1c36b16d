//! Tab-separated training log.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::StepReport;
use crate::error::Result;

pub const LOG_HEADER: &str = "step\tlr\tloss_s\tloss_unk\tloss_k\tloss_unc\tloss_all\tc_tau\tn_known\tn_unknown\tn_uncertain\tkls_acc_known\tkls_acc_unknown";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Header plus one line per report. Floats use the shortest representation
/// that round-trips, so equal runs give equal bytes.
pub fn format_log(reports: &[StepReport]) -> String {
    let mut s = String::with_capacity(64 * (reports.len() + 1));
    s.push_str(LOG_HEADER);
    s.push('\n');
    for r in reports {
        let l = &r.losses;
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.step,
            r.lr,
            l.source,
            l.unknown,
            l.known,
            l.uncertain,
            l.total,
            r.c_tau,
            r.n_known,
            r.n_unknown,
            r.n_uncertain,
            opt(r.kls_acc_known),
            opt(r.kls_acc_unknown)
        );
    }
    s
}

pub fn write_log(path: impl AsRef<Path>, reports: &[StepReport]) -> Result<()> {
    fs::write(path, format_log(reports))?;
    Ok(())
}
