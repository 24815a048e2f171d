use std::alloc::{GlobalAlloc, Layout, System};
use std::io::{BufReader, Read};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use ademiner::classifier::{train_classifier, ClassifierConfig};
use ademiner::corpus::doc_to_json;
use ademiner::ner::{train_ner, NerConfig};
use ademiner::pipeline::{run_stream, Pipeline};
use ademiner::relation::{relation_examples, train_re, ReConfig};
use ademiner::synth;

struct Counting;

static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            let now = LIVE.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            PEAK.fetch_max(now, Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        LIVE.fetch_sub(layout.size(), Ordering::Relaxed);
    }
}

#[global_allocator]
static ALLOC: Counting = Counting;

/// Replays `template` `times` times without materializing the whole stream.
struct Repeat {
    template: Vec<u8>,
    times: usize,
    pos: usize,
}

impl Read for Repeat {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        if self.times == 0 {
            return Ok(0);
        }
        let n = buf.len().min(self.template.len() - self.pos);
        buf[..n].copy_from_slice(&self.template[self.pos..self.pos + n]);
        self.pos += n;
        if self.pos == self.template.len() {
            self.pos = 0;
            self.times -= 1;
        }
        Ok(n)
    }
}

fn quick_pipeline() -> Pipeline {
    let store = Arc::new(synth::embeddings(32, 42).unwrap());
    let docs = synth::pipeline_corpus(24, 3);
    let mut c = ClassifierConfig::default();
    c.train.epochs = 2;
    let mut n = NerConfig::default();
    n.train.epochs = 1;
    let mut r = ReConfig::default();
    r.train.epochs = 2;
    let (classifier, _) = train_classifier(&docs, &[], &store, &c).unwrap();
    let (ner, _) = train_ner(&docs, &[], &store, &n).unwrap();
    let (re, _) = train_re(&relation_examples(&docs).unwrap(), &[], &store, &r).unwrap();
    Pipeline::new(store, Some(classifier), ner, re).unwrap()
}

fn peak_growth(pipeline: &Pipeline, template: &[u8], times: usize) -> (usize, usize) {
    let input = BufReader::new(Repeat {
        template: template.to_vec(),
        times,
        pos: 0,
    });
    let base = LIVE.load(Ordering::Relaxed);
    PEAK.store(base, Ordering::Relaxed);
    let summary = run_stream(pipeline, input, &mut std::io::sink(), 2, false).unwrap();
    (PEAK.load(Ordering::Relaxed) - base, summary.records)
}

#[test]
fn stream_memory_is_flat_in_the_stream_length() {
    let pipeline = quick_pipeline();
    let mut template = Vec::new();
    for d in synth::pipeline_corpus(100, 4) {
        serde_json::to_writer(&mut template, &doc_to_json(&d)).unwrap();
        template.push(b'\n');
    }
    peak_growth(&pipeline, &template, 1);
    let (short, n_short) = peak_growth(&pipeline, &template, 5);
    let (long, n_long) = peak_growth(&pipeline, &template, 50);
    eprintln!("peak above baseline: {short} bytes for 500 records, {long} bytes for 5000");
    assert_eq!((n_short, n_long), (500, 5000));
    assert!(
        (long as f64) <= 1.5 * short as f64 + 65536.0,
        "peak above baseline: {short} bytes for 500 records, {long} bytes for 5000"
    );
}
