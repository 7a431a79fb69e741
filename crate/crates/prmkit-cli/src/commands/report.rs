//! `prmkit report`: re-render summaries from persisted traces without any
//! backend access.

use std::path::PathBuf;

use anyhow::{Context, Result};
use prmkit::evalkit::{load_run, render_csv, render_markdown};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormatArg {
    Csv,
    Md,
    All,
}

pub struct ReportArgs {
    pub run: PathBuf,
    pub format: ReportFormatArg,
}

pub fn cmd_report(args: &ReportArgs) -> Result<()> {
    let record =
        load_run(&args.run).with_context(|| format!("no readable run at {:?}", args.run))?;
    if matches!(args.format, ReportFormatArg::Csv | ReportFormatArg::All) {
        let path = args.run.join("summary.csv");
        std::fs::write(&path, render_csv(&record))?;
        println!("{}", path.display());
    }
    if matches!(args.format, ReportFormatArg::Md | ReportFormatArg::All) {
        let path = args.run.join("summary.md");
        std::fs::write(&path, render_markdown(&record))?;
        println!("{}", path.display());
    }
    Ok(())
}
