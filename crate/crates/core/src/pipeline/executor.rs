//! Ordered parallel execution over JSON lines.
//!
//! The reader hands numbered lines to a fixed pool of workers through a
//! bounded queue. A reorder buffer on the output side writes results in
//! input order. At most `max_in_flight` records are between reader and
//! writer at any time, so memory does not grow with the stream length.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crossbeam_channel::{bounded, Receiver, Sender};
use serde::Serialize;

use crate::corpus::parse_doc_line;
use crate::error::{Error, Result};

use super::Pipeline;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlushPolicy {
    EachRecord,
    Every(usize),
    /// Only when the run ends.
    AtEnd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExecOptions {
    pub workers: usize,
    pub flush: FlushPolicy,
    pub max_in_flight: usize,
}

impl ExecOptions {
    pub const DEFAULT_MICRO_BATCH: usize = 64;

    pub fn batch(workers: usize) -> Self {
        Self {
            workers,
            flush: FlushPolicy::AtEnd,
            max_in_flight: 4 * Self::DEFAULT_MICRO_BATCH.max(workers),
        }
    }

    pub fn stream(workers: usize, flush_each: bool) -> Self {
        Self {
            flush: if flush_each {
                FlushPolicy::EachRecord
            } else {
                FlushPolicy::Every(Self::DEFAULT_MICRO_BATCH)
            },
            ..Self::batch(workers)
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub records: usize,
    pub errors: usize,
    /// Largest number of results held back waiting for an earlier record.
    pub max_reorder_buffer: usize,
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    line: usize,
    error: String,
    raw: &'a str,
}

struct Job {
    seq: usize,
    line_no: usize,
    raw: String,
}

struct Done {
    seq: usize,
    json: String,
    failed: bool,
}

fn process(pipeline: &Pipeline, job: &Job) -> Done {
    let result = parse_doc_line(&job.raw, job.line_no).and_then(|doc| pipeline.run(&doc));
    let (json, failed) = match result {
        Ok(out) => (serde_json::to_string(&out), false),
        Err(e) => (
            serde_json::to_string(&ErrorRecord {
                line: job.line_no,
                error: e.to_string(),
                raw: &job.raw,
            }),
            true,
        ),
    };
    Done {
        seq: job.seq,
        json: json.expect("output serializes"),
        failed,
    }
}

/// Processes every non-blank input line and writes one output line per
/// record in input order. Lines that fail to parse or run produce an error
/// record `{line, error, raw}` and the run continues.
pub fn run_batch(
    pipeline: &Pipeline,
    input: impl BufRead,
    output: &mut (impl Write + Send),
    options: ExecOptions,
) -> Result<RunSummary> {
    if options.workers == 0 {
        return Err(Error::Config("at least one worker is required".into()));
    }
    let window = options.max_in_flight.max(options.workers);
    let (job_tx, job_rx) = bounded::<Job>(window);
    let (done_tx, done_rx) = bounded::<Done>(window);
    let (permit_tx, permit_rx) = bounded::<()>(window);
    for _ in 0..window {
        permit_tx.send(()).expect("fresh channel");
    }

    std::thread::scope(|scope| {
        for _ in 0..options.workers {
            let job_rx: Receiver<Job> = job_rx.clone();
            let done_tx: Sender<Done> = done_tx.clone();
            scope.spawn(move || {
                for job in job_rx {
                    if done_tx.send(process(pipeline, &job)).is_err() {
                        break;
                    }
                }
            });
        }
        drop(job_rx);
        drop(done_tx);

        let writer = scope.spawn(move || -> Result<RunSummary> {
            let mut summary = RunSummary::default();
            let mut pending: BTreeMap<usize, Done> = BTreeMap::new();
            let mut next = 0;
            for done in done_rx {
                pending.insert(done.seq, done);
                summary.max_reorder_buffer = summary.max_reorder_buffer.max(pending.len() - 1);
                while let Some(d) = pending.remove(&next) {
                    output.write_all(d.json.as_bytes())?;
                    output.write_all(b"\n")?;
                    summary.records += 1;
                    summary.errors += usize::from(d.failed);
                    next += 1;
                    match options.flush {
                        FlushPolicy::EachRecord => output.flush()?,
                        FlushPolicy::Every(n) if n > 0 && next % n == 0 => output.flush()?,
                        _ => {}
                    }
                    let _ = permit_tx.send(());
                }
            }
            output.flush()?;
            Ok(summary)
        });

        let mut read_result = Ok(());
        let mut seq = 0;
        for (idx, line) in input.lines().enumerate() {
            let raw = match line {
                Ok(l) => l,
                Err(e) => {
                    read_result = Err(Error::Stream(e));
                    break;
                }
            };
            if raw.trim().is_empty() {
                continue;
            }
            if permit_rx.recv().is_err() {
                break;
            }
            let job = Job {
                seq,
                line_no: idx + 1,
                raw,
            };
            if job_tx.send(job).is_err() {
                break;
            }
            seq += 1;
        }
        drop(job_tx);
        let summary = writer.join().expect("writer thread")?;
        read_result?;
        Ok(summary)
    })
}

/// [`run_batch`] over a continuous stream, flushing per record or per
/// micro-batch.
pub fn run_stream(
    pipeline: &Pipeline,
    input: impl BufRead,
    output: &mut (impl Write + Send),
    workers: usize,
    flush_each: bool,
) -> Result<RunSummary> {
    run_batch(pipeline, input, output, ExecOptions::stream(workers, flush_each))
}
