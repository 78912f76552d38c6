//! Dataset files: one worker per CSV row, a `GROUND_TRUTH` row, and
//! optional `# key=value` metadata lines before the header.
//!
//! ```text
//! # domain=binary
//! # workers=2
//! # questions=3
//! worker,q1,q2,q3
//! GROUND_TRUTH,1,1,0
//! w1,1,0,0
//! w2,1,,0
//! ```
//!
//! Empty cells are missing answers. Workers with any missing answer are
//! dropped on load.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use log::info;

use crate::domain::{AnswerDomain, AnswerVector, GroundTruth};
use crate::error::{Error, Result};
use crate::population::{EmpiricalPopulation, Population};

pub const GROUND_TRUTH_ID: &str = "GROUND_TRUTH";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetMetadata {
    pub domain: Option<String>,
    pub workers: Option<usize>,
    pub questions: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub population: EmpiricalPopulation,
    pub question_ids: Vec<String>,
    /// Ids of the kept workers, in file order.
    pub worker_ids: Vec<String>,
    pub dropped: usize,
    pub metadata: DatasetMetadata,
}

fn format_error(line: u64, column: u64, message: impl Into<String>) -> Error {
    Error::Format {
        line,
        column,
        message: message.into(),
    }
}

fn parse_metadata(line: &str, line_no: u64, meta: &mut DatasetMetadata) -> Result<()> {
    let body = line.trim_start_matches('#').trim();
    let Some((key, value)) = body.split_once('=') else {
        return Ok(());
    };
    let (key, value) = (key.trim(), value.trim());
    let count = |v: &str| {
        v.parse::<usize>()
            .map_err(|_| format_error(line_no, 1, format!("metadata {key} = {v:?} is not a count")))
    };
    match key {
        "domain" => meta.domain = Some(value.to_string()),
        "workers" => meta.workers = Some(count(value)?),
        "questions" => meta.questions = Some(count(value)?),
        _ => {}
    }
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>, domain: &AnswerDomain) -> Result<LoadedDataset> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|e| Error::invalid(format!("cannot open dataset {}: {e}", path.display())))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    read_dataset(BufReader::new(file), domain, &name)
}

/// Parses a dataset from any reader. Line numbers in errors are 1-based and
/// count metadata lines.
pub fn read_dataset<R: Read>(reader: R, domain: &AnswerDomain, name: &str) -> Result<LoadedDataset> {
    domain.validate()?;
    let mut reader = BufReader::new(reader);
    let mut meta = DatasetMetadata::default();
    let mut skipped: u64 = 0;
    let mut first = String::new();
    loop {
        first.clear();
        if reader.read_line(&mut first)? == 0 {
            return Err(format_error(skipped + 1, 1, "dataset has no header row"));
        }
        let trimmed = first.trim();
        if trimmed.starts_with('#') {
            skipped += 1;
            parse_metadata(trimmed, skipped, &mut meta)?;
        } else if trimmed.is_empty() {
            skipped += 1;
        } else {
            break;
        }
    }
    if let Some(declared) = &meta.domain {
        let declared_domain = AnswerDomain::from_descriptor(declared)
            .map_err(|e| format_error(1, 1, format!("metadata domain: {e}")))?;
        if &declared_domain != domain {
            return Err(format_error(
                1,
                1,
                format!("file declares domain {declared:?}, caller expects {:?}", domain.descriptor()),
            ));
        }
    }

    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(first.as_bytes().chain(reader));
    let line_of = |pos: Option<&csv::Position>| pos.map_or(0, |p| p.line()) + skipped;

    let header = csv.headers()?.clone();
    if header.len() < 2 {
        return Err(format_error(skipped + 1, 1, "header needs a worker column and at least one question"));
    }
    let question_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let k = question_ids.len();
    for (i, q) in question_ids.iter().enumerate() {
        if q.is_empty() {
            return Err(format_error(skipped + 1, i as u64 + 2, "empty question id"));
        }
        if question_ids[..i].contains(q) {
            return Err(format_error(skipped + 1, i as u64 + 2, format!("duplicate question id {q:?}")));
        }
    }

    let mut truth: Option<AnswerVector> = None;
    let mut workers = Vec::new();
    let mut worker_ids = Vec::new();
    let mut rows = 0usize;
    let mut dropped = 0usize;
    for record in csv.records() {
        let record = record?;
        let line = line_of(record.position());
        if record.len() != k + 1 {
            return Err(format_error(
                line,
                record.len().min(k + 1) as u64 + 1,
                format!("row has {} cells, header has {}", record.len(), k + 1),
            ));
        }
        let id = &record[0];
        let mut answers = Vec::with_capacity(k);
        let mut missing = false;
        for (col, cell) in record.iter().enumerate().skip(1) {
            if cell.is_empty() {
                missing = true;
                continue;
            }
            let answer = domain
                .parse_answer(cell)
                .map_err(|msg| format_error(line, col as u64 + 1, msg))?;
            answers.push(answer);
        }
        if id == GROUND_TRUTH_ID {
            if truth.is_some() {
                return Err(format_error(line, 1, "second ground truth row"));
            }
            if missing {
                return Err(format_error(line, 1, "ground truth does not cover every question"));
            }
            truth = Some(AnswerVector::from_answers(answers));
            continue;
        }
        if id.is_empty() {
            return Err(format_error(line, 1, "empty worker id"));
        }
        rows += 1;
        if missing {
            dropped += 1;
        } else {
            workers.push(AnswerVector::from_answers(answers));
            worker_ids.push(id.to_string());
        }
    }
    let truth = truth.ok_or_else(|| format_error(skipped + 1, 1, "no GROUND_TRUTH row"))?;

    if let Some(q) = meta.questions {
        if q != k {
            return Err(format_error(1, 1, format!("metadata declares {q} questions, header has {k}")));
        }
    }
    if let Some(w) = meta.workers {
        if w != rows {
            return Err(format_error(1, 1, format!("metadata declares {w} workers, file has {rows}")));
        }
    }
    if dropped > 0 {
        info!("{name}: dropped {dropped} of {rows} workers with missing answers");
    }
    let population = EmpiricalPopulation::new(name, domain.clone(), GroundTruth::new(truth), workers)?;
    Ok(LoadedDataset {
        population,
        question_ids,
        worker_ids,
        dropped,
        metadata: meta,
    })
}

/// Writes a population with metadata lines, question ids `q1..qk` and
/// worker ids `w1..wn`.
pub fn write_dataset<W: Write>(writer: W, population: &EmpiricalPopulation) -> Result<()> {
    let mut writer = writer;
    let domain = population.domain();
    writeln!(writer, "# domain={}", domain.descriptor())?;
    writeln!(writer, "# workers={}", population.len())?;
    writeln!(writer, "# questions={}", population.question_count())?;
    let mut csv = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let mut header = vec!["worker".to_string()];
    header.extend((1..=population.question_count()).map(|i| format!("q{i}")));
    csv.write_record(&header)?;
    let row = |id: String, v: &AnswerVector| {
        std::iter::once(id).chain(v.entries().iter().map(|a| domain.format_answer(*a))).collect::<Vec<_>>()
    };
    csv.write_record(row(GROUND_TRUTH_ID.to_string(), population.truth().vector()))?;
    for (i, w) in population.workers().iter().enumerate() {
        csv.write_record(row(format!("w{}", i + 1), w))?;
    }
    csv.flush()?;
    Ok(())
}

pub fn save_dataset(path: impl AsRef<Path>, population: &EmpiricalPopulation) -> Result<()> {
    let file = File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    write_dataset(&mut out, population)?;
    out.flush()?;
    Ok(())
}
