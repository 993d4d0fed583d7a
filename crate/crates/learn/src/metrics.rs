//! Per-iteration training metrics and their CSV form.

use std::io::Write;

pub const METRICS_CSV_HEADER: &str =
    "iter,env_steps,success_rate,return,loss_pi,loss_v,loss_clone,loss_aux,store_size,max_priority,reset_frac";

#[derive(Clone, Debug, PartialEq)]
pub struct IterationMetrics {
    pub iter: u32,
    pub env_steps: u64,
    pub eval_success_rate: f64,
    pub mean_episode_return: f64,
    pub loss_pi: f64,
    pub loss_v: f64,
    pub loss_clone: f64,
    pub loss_aux: f64,
    pub store_size: usize,
    pub max_priority: f64,
    pub reset_from_store_fraction: f64,
}

impl IterationMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.iter,
            self.env_steps,
            self.eval_success_rate,
            self.mean_episode_return,
            self.loss_pi,
            self.loss_v,
            self.loss_clone,
            self.loss_aux,
            self.store_size,
            self.max_priority,
            self.reset_from_store_fraction
        )
    }

    pub fn all_finite(&self) -> bool {
        [
            self.eval_success_rate,
            self.mean_episode_return,
            self.loss_pi,
            self.loss_v,
            self.loss_clone,
            self.loss_aux,
            self.max_priority,
            self.reset_from_store_fraction,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

pub fn write_csv(rows: &[IterationMetrics]) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Incremental writer that flushes after every row so partial runs keep
/// usable metrics.
pub struct CsvWriter {
    file: std::fs::File,
}

impl CsvWriter {
    pub fn create(path: &std::path::Path) -> std::io::Result<Self> {
        let mut file = std::fs::File::create(path)?;
        writeln!(file, "{METRICS_CSV_HEADER}")?;
        file.flush()?;
        Ok(CsvWriter { file })
    }

    pub fn write_row(&mut self, row: &IterationMetrics) -> std::io::Result<()> {
        writeln!(self.file, "{}", row.csv_row())?;
        self.file.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_pinned() {
        assert_eq!(
            METRICS_CSV_HEADER,
            "iter,env_steps,success_rate,return,loss_pi,loss_v,loss_clone,loss_aux,store_size,max_priority,reset_frac"
        );
    }
}
