use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::config::Config;

/// How a table should be drawn by its gnuplot script.
#[derive(Debug, Clone)]
pub struct Plot {
    pub x: usize,
    pub ys: Vec<usize>,
    pub style: &'static str,
    pub logx: bool,
    pub title: String,
}

impl Plot {
    pub fn lines(x: usize, ys: &[usize], title: impl Into<String>) -> Self {
        Self { x, ys: ys.to_vec(), style: "lines", logx: false, title: title.into() }
    }

    pub fn points(x: usize, ys: &[usize], title: impl Into<String>) -> Self {
        Self { style: "points pt 7 ps 0.2", ..Self::lines(x, ys, title) }
    }

    pub fn log_x(mut self) -> Self {
        self.logx = true;
        self
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub plot: Option<Plot>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&'static str]) -> Self {
        Self { name: name.into(), columns: columns.to_vec(), rows: Vec::new(), plot: None }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn with_plot(mut self, plot: Plot) -> Self {
        self.plot = Some(plot);
        self
    }
}

/// Tables plus free-form summary lines from one experiment.
#[derive(Debug, Default)]
pub struct Report {
    pub tables: Vec<Table>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn note(&mut self, line: impl Into<String>) {
        self.notes.push(line.into());
    }
}

/// Comment block written at the top of every artifact.
pub fn metadata(cfg: &Config) -> Vec<String> {
    let mut lines = vec![
        format!("hetero-cli {}", env!("CARGO_PKG_VERSION")),
        format!("hetero-core {}", hetero_core::VERSION),
        format!("experiment: {}", cfg.run.experiment),
        format!("seed: {}", cfg.run.seed),
        format!("config-sha256: {}", cfg.hash()),
        "config:".to_string(),
    ];
    lines.extend(cfg.to_toml().lines().map(|l| format!("  {l}")));
    lines
}

fn write_comments(out: &mut impl Write, lines: &[String]) -> io::Result<()> {
    for l in lines {
        writeln!(out, "# {l}")?;
    }
    Ok(())
}

pub fn write_csv(path: &Path, table: &Table, header: &[String]) -> io::Result<()> {
    let mut file = io::BufWriter::new(fs::File::create(path)?);
    write_comments(&mut file, header)?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file);
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush()
}

pub fn gnuplot_script(csv_name: &str, table: &Table, plot: &Plot) -> String {
    let mut s = String::new();
    s.push_str("set datafile separator ','\nset datafile commentschars '#'\n");
    s.push_str("set key autotitle columnhead\nset grid\n");
    s.push_str(&format!("set title '{}'\n", plot.title.replace('\'', "")));
    s.push_str(&format!("set xlabel '{}'\n", table.columns[plot.x]));
    if plot.logx {
        s.push_str("set logscale x\n");
    }
    s.push_str(&format!("set terminal pngcairo size 900,600\nset output '{}.png'\n", table.name));
    let series: Vec<String> =
        plot.ys.iter().map(|y| format!("'{csv_name}' using {}:{} with {}", plot.x + 1, y + 1, plot.style)).collect();
    s.push_str(&format!("plot {}\n", series.join(", \\\n     ")));
    s
}

/// Write every table as CSV with its gnuplot script, plus a summary file.
/// Returns the paths written.
pub fn write_report(dir: &Path, cfg: &Config, report: &Report) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let header = metadata(cfg);
    let mut written = Vec::new();
    for table in &report.tables {
        let csv_name = format!("{}.csv", table.name);
        let path = dir.join(&csv_name);
        write_csv(&path, table, &header)?;
        written.push(path);
        if let Some(plot) = &table.plot {
            let gp = dir.join(format!("{}.gp", table.name));
            let mut f = fs::File::create(&gp)?;
            write_comments(&mut f, &header)?;
            f.write_all(gnuplot_script(&csv_name, table, plot).as_bytes())?;
            written.push(gp);
        }
    }
    let summary = dir.join("summary.txt");
    let mut f = fs::File::create(&summary)?;
    write_comments(&mut f, &header)?;
    for n in &report.notes {
        writeln!(f, "{n}")?;
    }
    written.push(summary);
    Ok(written)
}
