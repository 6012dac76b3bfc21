//! CSV emission. Numbers use six significant digits (C `%g` style), `.`
//! as the decimal separator and `\n` line endings.

use std::fmt::Write as _;

use semcom_core::domain::write_corpus_csv;
use semcom_core::domain::PromptRecord;
use semcom_core::simulator::{ExperimentResult, OverheadRow, StepRecord};

/// Formats like C's `%.6g`.
pub fn fmt_g6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        strip_zeros(&format!("{x:.decimals$}"))
    }
}

fn strip_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

pub const STEPS_HEADER: &str = "method,step,user,category,theta,snr_db,action_mask,fidelity,attempts,reward";
pub const OVERHEAD_HEADER: &str = "method,theta,mean_retx_per_step,failure_rate";
pub const SUMMARY_HEADER: &str =
    "method,final50_mean_reward,mean_reward,total_retransmissions,mean_retx_per_step,failures,failure_rate,llm_queries,llm_errors";

pub fn steps_csv(records: &[StepRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 64);
    out.push_str(STEPS_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.method,
            r.step,
            r.user,
            r.category,
            fmt_g6(r.theta),
            fmt_g6(r.snr_db),
            r.action_mask,
            fmt_g6(r.fidelity),
            r.attempts,
            fmt_g6(r.reward)
        )
        .expect("string write");
    }
    out
}

pub fn rewards_series_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("step");
    for r in &result.results {
        out.push(',');
        out.push_str(r.method.name());
    }
    out.push('\n');
    let n = result.results.first().map_or(0, |r| r.reward_series.len());
    for step in 0..n {
        out.push_str(&step.to_string());
        for r in &result.results {
            out.push(',');
            out.push_str(&fmt_g6(r.reward_series[step]));
        }
        out.push('\n');
    }
    out
}

pub fn summary_csv(result: &ExperimentResult) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in &result.results {
        let mean = r.reward_series.iter().sum::<f64>() / r.reward_series.len() as f64;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.method,
            fmt_g6(r.final_mean_reward),
            fmt_g6(mean),
            r.total_retransmissions,
            fmt_g6(r.mean_retransmissions_per_decision()),
            r.failures,
            fmt_g6(r.failure_rate()),
            r.llm_queries,
            r.llm_errors
        )
        .expect("string write");
    }
    out
}

pub fn overhead_csv(rows: &[OverheadRow]) -> String {
    let mut out = String::from(OVERHEAD_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.method,
            fmt_g6(r.theta),
            fmt_g6(r.mean_retx_per_step),
            fmt_g6(r.failure_rate)
        )
        .expect("string write");
    }
    out
}

pub fn corpus_csv(corpus: &[PromptRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_corpus_csv(corpus, &mut buf).expect("in-memory write");
    buf
}
