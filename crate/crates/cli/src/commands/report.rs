use std::path::{Path, PathBuf};

use hscls_core::eval::band_svgs;
use hscls_pipeline::ops::EvalReport;
use hscls_pipeline::{fsutil, PipelineError, RunStore};

use crate::args::{Cli, ReportArgs, ReportFormat};
use crate::settings::resolve;

fn run_reports(store: &RunStore, run_id: &str) -> anyhow::Result<Vec<PathBuf>> {
    let run = store.load(run_id)?;
    let dir = store.run_dir(run_id).join("eval");
    let mut found: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map(|rd| rd.flatten().map(|e| e.path()).filter(|p| p.extension().is_some_and(|x| x == "json")).collect())
        .unwrap_or_default();
    found.retain(|p| !p.to_string_lossy().ends_with(".meta.json"));
    found.sort();
    if found.is_empty() {
        anyhow::bail!(PipelineError::NotFound(format!("evaluation reports for {} run {run_id}", run.machine)));
    }
    Ok(found)
}

pub fn report(cli: &Cli, a: &ReportArgs) -> anyhow::Result<()> {
    let r = resolve(cli, |_| {})?;
    let sources = match (&a.run, &a.eval) {
        (Some(id), _) => run_reports(&RunStore::new(r.workspace.runs_dir()), id)?,
        (None, Some(p)) => vec![p.clone()],
        (None, None) => unreachable!("clap requires one source"),
    };
    let h = r.config.hash();
    for src in sources {
        if !src.is_file() {
            anyhow::bail!(PipelineError::NotFound(src.display().to_string()));
        }
        let rep: EvalReport = fsutil::read_json(&src)?;
        let stem = src.file_stem().and_then(|s| s.to_str()).unwrap_or("eval").to_string();
        let out = a.out.clone().unwrap_or_else(|| src.parent().map(Path::to_path_buf).unwrap_or_default());
        let mut written = Vec::new();
        match a.format {
            ReportFormat::Csv => {
                let metrics = out.join(format!("{stem}_metrics.csv"));
                let bands = out.join(format!("{stem}_bands.csv"));
                fsutil::write_artifact(&metrics, rep.metrics_csv()?.as_bytes(), &h)?;
                fsutil::write_artifact(&bands, rep.bands.to_csv().as_bytes(), &h)?;
                print!("{}", rep.bands.to_csv());
                written.extend([metrics, bands]);
            }
            ReportFormat::Svg => {
                let title = format!("{} ({} rows)", rep.architecture, rep.rows);
                for (metric, svg) in band_svgs(&rep.bands, &title) {
                    let p = out.join(format!("{stem}_{metric}.svg"));
                    fsutil::write_artifact(&p, svg.as_bytes(), &h)?;
                    written.push(p);
                }
            }
        }
        for p in written {
            println!("wrote: {}", p.display());
        }
    }
    Ok(())
}
