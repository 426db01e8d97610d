//! CSV tables, run manifests and gnuplot scripts.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

/// Formats a real with 17 significant digits (`.` decimal point).
pub fn real(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.16e}")
    }
}

/// Formats an optional real; `None` becomes an empty field.
pub fn opt_real(v: Option<f64>) -> String {
    v.map(real).unwrap_or_default()
}

/// A table written as RFC-4180 CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(true).terminator(csv::Terminator::CRLF).from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()
    }
}

/// Wall-clock timings of the stages of one run.
#[derive(Debug)]
pub struct Timer {
    start: Instant,
    stage: Instant,
    pub stages: Vec<(String, f64)>,
}

impl Timer {
    pub fn new() -> Self {
        let now = Instant::now();
        Timer {
            start: now,
            stage: now,
            stages: Vec::new(),
        }
    }

    /// Closes the current stage under `name`.
    pub fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.stages.push((name.to_string(), (now - self.stage).as_secs_f64()));
        self.stage = now;
    }

    pub fn total(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

impl Default for Timer {
    fn default() -> Self {
        Self::new()
    }
}

/// `dir/stem.ext` next to `out`.
pub fn sibling(out: &Path, ext: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    out.with_file_name(format!("{stem}.{ext}"))
}

/// Run manifest: config echo, version, timings, warnings and outputs.
pub struct Manifest<'a> {
    pub command: &'a str,
    pub config: &'a BTreeMap<String, String>,
    pub timer: &'a Timer,
    pub warnings: &'a [String],
    pub outputs: &'a [PathBuf],
    pub error: Option<String>,
    pub summary: serde_json::Value,
}

impl Manifest<'_> {
    pub fn to_json(&self) -> serde_json::Value {
        let threads = rayon::current_num_threads();
        json!({
            "tool": "rds",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "config": self.config,
            "threads": threads,
            "wall_time_s": self.timer.total(),
            "timings": self.timer.stages.iter().map(|(s, t)| json!({"stage": s, "seconds": t})).collect::<Vec<_>>(),
            "warnings": self.warnings,
            "outputs": self.outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "summary": self.summary,
            "error": self.error,
        })
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let text = serde_json::to_string_pretty(&self.to_json()).map_err(io::Error::other)?;
        fs::write(path, text + "\n")
    }
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Gnuplot script for `x,phi`.
pub fn density_script(csv: &Path) -> String {
    let f = file_name(csv);
    format!(
        "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'x'\nset ylabel 'phi'\n\
         plot '{f}' using 1:2 with lines lw 2 notitle\n"
    )
}

/// Gnuplot script for `a,rho_mc,rho_spectral`.
pub fn rotation_script(csv: &Path) -> String {
    let f = file_name(csv);
    format!(
        "set datafile separator ','\nset key autotitle columnhead top left\nset xlabel 'a'\nset ylabel 'rotation number'\n\
         plot '{f}' using 1:3 with lines lw 2 title 'spectral', \\\n     '{f}' using 1:2 with points pt 7 ps 0.5 title 'Monte Carlo'\n"
    )
}

/// Gnuplot script for `sweep.csv` with event markers from `events.csv`.
pub fn sweep_script(csv: &Path, events: &Path, event_a: &[f64]) -> String {
    let f = file_name(csv);
    let e = file_name(events);
    let mut s = format!("set datafile separator ','\nset key autotitle columnhead\n# events: {e}\nset multiplot layout 3,1\nset xlabel 'a'\n");
    for (i, a) in event_a.iter().enumerate() {
        s.push_str(&format!(
            "set arrow {} from first {a:.16e}, graph 0 to first {a:.16e}, graph 1 nohead dt 2\n",
            i + 1
        ));
    }
    s.push_str(&format!(
        "set ylabel 'components'\nplot '{f}' using 1:3 with steps notitle\n\
         set ylabel 'm'\nplot '{f}' using 1:2 with steps notitle\n\
         set ylabel 'eta'\nplot '{f}' using 1:6 with lines notitle\nunset multiplot\n"
    ));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_have_seventeen_significant_digits() {
        assert_eq!(real(0.1), "1.0000000000000001e-1");
        assert_eq!(real(-2.5), "-2.5000000000000000e0");
        assert_eq!(real(f64::INFINITY), "inf");
        assert_eq!(real(f64::NAN), "nan");
        for v in [1.0 / 3.0, 6.02e23, -1e-300, 0.093_239_448_782_705_8] {
            assert_eq!(real(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(opt_real(None), "");
    }

    #[test]
    fn csv_quotes_when_needed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let mut t = Table::new(&["a", "evidence"]);
        t.push(vec![real(1.0), "word \"+-\", gap 0.1".into()]);
        t.write(&p).unwrap();
        let s = fs::read_to_string(&p).unwrap();
        assert_eq!(s, "a,evidence\r\n1.0000000000000000e0,\"word \"\"+-\"\", gap 0.1\"\r\n");
    }

    #[test]
    fn siblings_share_the_stem() {
        assert_eq!(sibling(Path::new("out/density.csv"), "plt"), PathBuf::from("out/density.plt"));
        assert_eq!(sibling(Path::new("density.csv"), "manifest.json"), PathBuf::from("density.manifest.json"));
    }
}
