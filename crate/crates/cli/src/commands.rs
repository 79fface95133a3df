use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use qqa_core::qcircuit::{forward_trace, gram};
use qqa_core::search::format_partition;
use qqa_core::{certify, optimize_circuit, search_qe, BooleanFunction, CMatrix, SdpExport, SolutionRecord};

use crate::config::{Overrides, Resolved, RunConfig};

pub const EXIT_CERTIFIED: u8 = 0;
pub const EXIT_INTERNAL: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_UNCERTIFIED: u8 = 3;

pub const RECORD_FILE: &str = "record.json";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const SDP_FILE: &str = "sdp_export.json";
pub const GRAM_ORDER_FILE: &str = "gram_order.csv";

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn input(error: impl Into<anyhow::Error>) -> Self {
        Self { code: EXIT_INPUT, error: error.into() }
    }

    pub fn internal(error: impl Into<anyhow::Error>) -> Self {
        Self { code: EXIT_INTERNAL, error: error.into() }
    }

    /// Numerical breakdowns are internal; everything else from the core is bad input.
    fn core(error: qqa_core::Error) -> Self {
        match error {
            qqa_core::Error::Numerical(_) => Self::internal(error),
            _ => Self::input(error),
        }
    }
}

type Outcome = Result<u8, Failure>;

fn load_config(path: Option<&Path>, ov: &Overrides) -> Result<Resolved, Failure> {
    let path = path.ok_or_else(|| Failure::input(anyhow!("--config PATH is required")))?;
    RunConfig::load(path).and_then(|c| c.resolve(ov)).map_err(Failure::input)
}

fn prepare_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
        .map_err(Failure::internal)
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(Failure::internal)
}

fn say(ov: &Overrides, text: &str) {
    if !ov.quiet {
        print!("{text}");
    }
}

fn describe_record(rec: &SolutionRecord, path: &Path) -> String {
    let mut s = String::new();
    let c = &rec.config;
    let _ = writeln!(s, "function:   {}", rec.function);
    let _ = writeln!(s, "circuit:    t={} d_w={} partition={}", c.t, c.d_w, format_partition(&c.partition));
    let _ = writeln!(s, "mean_error: {:.6e}", rec.mean_error);
    let _ = writeln!(s, "max_error:  {:.6e}", rec.max_error);
    let _ = writeln!(s, "epsilon:    {:.1e}", rec.epsilon);
    let _ = writeln!(s, "certified:  {}", rec.certified);
    let _ = writeln!(
        s,
        "optimizer:  restart {} of {} tried, {} iterations, {}",
        rec.optimizer.restart_index,
        rec.optimizer.restarts.len(),
        rec.optimizer.iterations,
        rec.optimizer.converged_reason
    );
    let _ = writeln!(s, "seed:       {}", rec.seed);
    let _ = writeln!(s, "seconds:    {:.2}", rec.wall_time_seconds);
    let _ = writeln!(s, "record:     {}", path.display());
    s
}

fn exit_for(certified: bool) -> u8 {
    if certified {
        EXIT_CERTIFIED
    } else {
        EXIT_UNCERTIFIED
    }
}

pub fn solve(config: Option<&Path>, ov: &Overrides) -> Outcome {
    let run = load_config(config, ov)?;
    let circuit = run.circuit().map_err(Failure::input)?;
    prepare_dir(&run.output_dir)?;
    let mut settings = run.settings.clone();
    settings.target_loss = settings.target_loss.min(run.epsilon);

    let start = Instant::now();
    let outcome = optimize_circuit(&circuit, &run.function, &settings).map_err(Failure::core)?;
    let seconds = start.elapsed().as_secs_f64();
    let record = SolutionRecord::from_outcome(&run.function, &circuit, &outcome, run.epsilon, settings.seed, seconds)
        .map_err(Failure::core)?;

    let record_path = run.output_dir.join(RECORD_FILE);
    write_file(&record_path, &record.to_json().map_err(Failure::internal)?)?;
    let summary = describe_record(&record, &record_path);
    write_file(&run.output_dir.join(SUMMARY_FILE), &summary)?;
    say(ov, &summary);
    Ok(exit_for(record.certified))
}

pub fn search(config: Option<&Path>, ov: &Overrides) -> Outcome {
    let run = load_config(config, ov)?;
    let plan = run.plan().map_err(Failure::input)?;
    prepare_dir(&run.output_dir)?;

    let outcome = search_qe(&run.function, &plan, &run.settings).map_err(Failure::core)?;

    let csv_path = run.output_dir.join(SUMMARY_CSV);
    let mut w = csv::Writer::from_path(&csv_path)
        .with_context(|| format!("cannot write {}", csv_path.display()))
        .map_err(Failure::internal)?;
    for row in &outcome.rows {
        w.serialize(row).map_err(Failure::internal)?;
    }
    w.flush().map_err(Failure::internal)?;

    let record_path = run.output_dir.join(RECORD_FILE);
    write_file(&record_path, &outcome.record.to_json().map_err(Failure::internal)?)?;
    let mut summary = match outcome.q_estimate {
        Some(q) => format!("q_estimate: {q}\n"),
        None => "q_estimate: not found (heuristic search exhausted; not a lower bound)\n".to_string(),
    };
    let _ = writeln!(summary, "cells:      {}", outcome.rows.len());
    summary.push_str(&describe_record(&outcome.record, &record_path));
    write_file(&run.output_dir.join(SUMMARY_FILE), &summary)?;
    say(ov, &summary);
    Ok(exit_for(outcome.q_estimate.is_some()))
}

fn load_record(path: &Path) -> Result<SolutionRecord, Failure> {
    if !path.exists() {
        return Err(Failure::input(anyhow!("record {} does not exist", path.display())));
    }
    SolutionRecord::load(path)
        .with_context(|| format!("cannot load record {}", path.display()))
        .map_err(Failure::input)
}

/// Row order for Gram output: class-sorted for MOD families, domain order otherwise.
pub fn gram_order(f: &BooleanFunction) -> Vec<usize> {
    if f.spec().is_mod() {
        f.class_sorted_order()
    } else {
        (0..f.domain_size()).collect()
    }
}

fn write_abs_csv(path: &Path, m: &CMatrix, order: &[usize]) -> Result<(), Failure> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(Failure::internal)?;
    for &r in order {
        w.write_record(order.iter().map(|&c| m[(r, c)].norm().to_string())).map_err(Failure::internal)?;
    }
    w.flush().map_err(Failure::internal)
}

pub fn gram_file(dir: &Path, j: usize) -> PathBuf {
    dir.join(format!("gram_{j}.csv"))
}

pub fn gram_cmd(record: &Path, ov: &Overrides) -> Outcome {
    let rec = load_record(record)?;
    let f = rec.function.build().map_err(Failure::input)?;
    rec.config.validate_for(&f).map_err(Failure::input)?;
    let unitaries = rec.unitary_matrices().map_err(Failure::input)?;
    let trace = forward_trace(&rec.config, &f, &unitaries).map_err(Failure::core)?;
    let dir = ov.out.clone().unwrap_or_else(|| PathBuf::from("."));
    prepare_dir(&dir)?;

    let order = gram_order(&f);
    let mut w = csv::Writer::from_path(dir.join(GRAM_ORDER_FILE)).map_err(Failure::internal)?;
    w.write_record(["row", "input", "output"]).map_err(Failure::internal)?;
    for (row, &p) in order.iter().enumerate() {
        let x = f.domain()[p];
        let y = f.outputs()[f.classes()[p]];
        w.write_record([row.to_string(), x.to_string(), y.to_string()]).map_err(Failure::internal)?;
    }
    w.flush().map_err(Failure::internal)?;

    for (j, state) in trace.iter().enumerate().skip(1) {
        let path = gram_file(&dir, j);
        write_abs_csv(&path, &gram(state), &order)?;
        say(ov, &format!("wrote {}\n", path.display()));
    }
    Ok(EXIT_CERTIFIED)
}

pub fn verify(record: &Path, ov: &Overrides) -> Outcome {
    let rec = load_record(record)?;
    let report = certify(&rec, rec.epsilon).map_err(Failure::core)?;
    let mut s = String::new();
    let _ = writeln!(s, "function:          {}", rec.function);
    let _ = writeln!(s, "mean_error:        {:.6e}", report.mean_error);
    let _ = writeln!(s, "max_error:         {:.6e}", report.max_error);
    let _ = writeln!(s, "epsilon:           {:.1e}", report.epsilon);
    let _ = writeln!(s, "unitarity defect:  {:.3e}", report.max_unitarity_defect);
    let _ = writeln!(s, "replay deviation:  {:.3e}", report.max_replay_deviation);
    let _ = writeln!(s, "certified:         {}", report.certified);
    say(ov, &s);
    Ok(exit_for(report.certified))
}

pub fn sdp_export(config: Option<&Path>, t: Option<usize>, ov: &Overrides) -> Outcome {
    let run = load_config(config, ov)?;
    let t = t
        .or(run.raw.circuit.as_ref().map(|c| c.t))
        .ok_or_else(|| Failure::input(anyhow!("query count needed: pass --t or set field `circuit`")))?;
    let export = SdpExport::new(&run.function, t).map_err(Failure::core)?;
    prepare_dir(&run.output_dir)?;
    let path = run.output_dir.join(SDP_FILE);
    write_file(&path, &export.to_json().map_err(Failure::internal)?)?;
    say(ov, &format!("wrote {}\n", path.display()));
    Ok(EXIT_CERTIFIED)
}
