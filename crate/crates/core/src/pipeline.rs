//! Pipeline parallelism over chunks.
//!
//! One reader pulls chunks sequentially and hands them to a pool of workers.
//! The calling thread is the single writer: it receives per-chunk results,
//! holds any that finish early in a reorder buffer, and consumes them strictly
//! in `sequence_no` order. A token per in-flight chunk bounds how far the
//! reader can run ahead of the writer.
//!
//! With one worker no threads are spawned; read, process and consume run in
//! a loop on the calling thread through the same closures.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, unbounded};

use crate::chunker::{ChunkStream, RawChunk};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelinePlan {
    pub workers: usize,
    /// Upper bound on chunks read but not yet consumed by the writer.
    pub in_flight_chunks: usize,
}

impl PipelinePlan {
    pub fn new(workers: usize) -> Self {
        let workers = workers.max(1);
        PipelinePlan {
            workers,
            in_flight_chunks: 2 * workers,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::config("workers must be at least 1"));
        }
        if self.in_flight_chunks < self.workers {
            return Err(Error::config("in_flight_chunks must be at least workers"));
        }
        Ok(())
    }
}

/// Counters gathered while the pipeline runs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PipelineStats {
    pub chunks_read: u64,
    pub bytes_read: u64,
    /// Peak bytes buffered inside the chunker.
    pub chunker_high_water: usize,
    /// Peak number of chunks read but not yet consumed.
    pub in_flight_high_water: usize,
    /// Peak raw bytes of chunks read but not yet consumed.
    pub in_flight_bytes_high_water: u64,
    pub read_time: Duration,
    /// Time spent in the processing closure, summed over workers.
    pub process_time: Duration,
    /// Time workers spent waiting for a chunk, summed over workers.
    pub worker_idle_time: Duration,
    pub write_time: Duration,
    pub wall_time: Duration,
}

struct InFlight {
    chunks: AtomicUsize,
    bytes: AtomicU64,
    max_chunks: AtomicUsize,
    max_bytes: AtomicU64,
}

impl InFlight {
    fn new() -> Self {
        InFlight {
            chunks: AtomicUsize::new(0),
            bytes: AtomicU64::new(0),
            max_chunks: AtomicUsize::new(0),
            max_bytes: AtomicU64::new(0),
        }
    }

    fn add(&self, bytes: u64) {
        let c = self.chunks.fetch_add(1, Ordering::SeqCst) + 1;
        let b = self.bytes.fetch_add(bytes, Ordering::SeqCst) + bytes;
        self.max_chunks.fetch_max(c, Ordering::SeqCst);
        self.max_bytes.fetch_max(b, Ordering::SeqCst);
    }

    fn remove(&self, bytes: u64) {
        self.chunks.fetch_sub(1, Ordering::SeqCst);
        self.bytes.fetch_sub(bytes, Ordering::SeqCst);
    }
}

/// Decides how much of each chunk the reader dispatches. Returning `None`
/// stops reading; the chunk passed in that call is dropped.
pub trait ReadLimit: Send {
    fn admit(&mut self, chunk: &mut RawChunk) -> Admit;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admit {
    /// Dispatch and keep reading.
    Continue,
    /// Dispatch this chunk, then stop.
    Last,
}

/// Reads everything.
pub struct Unlimited;

impl ReadLimit for Unlimited {
    fn admit(&mut self, _: &mut RawChunk) -> Admit {
        Admit::Continue
    }
}

enum Msg<R> {
    Done(u64, Result<R>, u64),
    End(u64),
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

fn guarded<R>(process: &(dyn Fn(RawChunk) -> Result<R> + Sync), chunk: RawChunk) -> Result<R> {
    panic::catch_unwind(AssertUnwindSafe(|| process(chunk)))
        .unwrap_or_else(|p| Err(Error::Panic(panic_message(p))))
}

/// Runs `process` over every chunk of `stream` and feeds the results to
/// `consume` in input order. The first error from reading, processing or
/// consuming stops the run and is returned; outstanding work is cancelled.
pub fn run_pipelined<R, P, C, L>(
    mut stream: ChunkStream,
    plan: PipelinePlan,
    mut limit: L,
    process: P,
    mut consume: C,
) -> Result<PipelineStats>
where
    R: Send,
    P: Fn(RawChunk) -> Result<R> + Sync,
    C: FnMut(R) -> Result<()>,
    L: ReadLimit,
{
    plan.validate()?;
    let started = Instant::now();
    let mut stats = if plan.workers == 1 {
        run_inline(&mut stream, &mut limit, &process, &mut consume)?
    } else {
        run_threaded(&mut stream, plan, &mut limit, &process, &mut consume)?
    };
    stats.chunker_high_water = stream.buffered_high_water();
    stats.wall_time = started.elapsed();
    Ok(stats)
}

fn run_inline<R>(
    stream: &mut ChunkStream,
    limit: &mut dyn ReadLimit,
    process: &(dyn Fn(RawChunk) -> Result<R> + Sync),
    consume: &mut dyn FnMut(R) -> Result<()>,
) -> Result<PipelineStats> {
    let mut stats = PipelineStats::default();
    loop {
        let t = Instant::now();
        let next = stream.next_chunk();
        stats.read_time += t.elapsed();
        let Some(mut chunk) = next? else { break };
        let admit = limit.admit(&mut chunk);
        let bytes = chunk.data.len() as u64;
        stats.chunks_read += 1;
        stats.bytes_read += bytes;
        stats.in_flight_high_water = 1;
        stats.in_flight_bytes_high_water = stats.in_flight_bytes_high_water.max(bytes);

        let t = Instant::now();
        let result = guarded(process, chunk);
        stats.process_time += t.elapsed();
        let t = Instant::now();
        consume(result?)?;
        stats.write_time += t.elapsed();
        if admit == Admit::Last {
            break;
        }
    }
    Ok(stats)
}

fn run_threaded<R: Send>(
    stream: &mut ChunkStream,
    plan: PipelinePlan,
    limit: &mut dyn ReadLimit,
    process: &(dyn Fn(RawChunk) -> Result<R> + Sync),
    consume: &mut dyn FnMut(R) -> Result<()>,
) -> Result<PipelineStats> {
    let cancel = AtomicBool::new(false);
    let in_flight = InFlight::new();
    let (work_tx, work_rx) = bounded::<RawChunk>(plan.in_flight_chunks);
    let (res_tx, res_rx) = unbounded::<Msg<R>>();
    let (tok_tx, tok_rx) = bounded::<()>(plan.in_flight_chunks);
    for _ in 0..plan.in_flight_chunks {
        tok_tx.send(()).expect("token channel has capacity");
    }

    std::thread::scope(|s| {
        let reader = {
            let res_tx = res_tx.clone();
            let (cancel, in_flight) = (&cancel, &in_flight);
            s.spawn(move || {
                let mut read_time = Duration::ZERO;
                let (mut chunks, mut bytes_read) = (0u64, 0u64);
                let mut seq = 0u64;
                loop {
                    if tok_rx.recv().is_err() || cancel.load(Ordering::SeqCst) {
                        break;
                    }
                    let t = Instant::now();
                    let next = stream.next_chunk();
                    read_time += t.elapsed();
                    match next {
                        Ok(Some(mut chunk)) => {
                            let admit = limit.admit(&mut chunk);
                            let bytes = chunk.data.len() as u64;
                            in_flight.add(bytes);
                            chunks += 1;
                            bytes_read += bytes;
                            seq = chunk.sequence_no + 1;
                            if work_tx.send(chunk).is_err() {
                                break;
                            }
                            if admit == Admit::Last {
                                let _ = res_tx.send(Msg::End(seq));
                                break;
                            }
                        }
                        Ok(None) => {
                            let _ = res_tx.send(Msg::End(seq));
                            break;
                        }
                        Err(e) => {
                            in_flight.add(0);
                            let _ = res_tx.send(Msg::Done(seq, Err(e), 0));
                            let _ = res_tx.send(Msg::End(seq + 1));
                            break;
                        }
                    }
                }
                (read_time, chunks, bytes_read)
            })
        };

        let workers: Vec<_> = (0..plan.workers)
            .map(|_| {
                let work_rx = work_rx.clone();
                let res_tx = res_tx.clone();
                let cancel = &cancel;
                s.spawn(move || {
                    let (mut busy, mut idle) = (Duration::ZERO, Duration::ZERO);
                    loop {
                        let t = Instant::now();
                        let Ok(chunk) = work_rx.recv() else { break };
                        idle += t.elapsed();
                        let seq = chunk.sequence_no;
                        let bytes = chunk.data.len() as u64;
                        let result = if cancel.load(Ordering::SeqCst) {
                            Err(Error::Panic("cancelled".into()))
                        } else {
                            let t = Instant::now();
                            let r = guarded(process, chunk);
                            busy += t.elapsed();
                            r
                        };
                        if res_tx.send(Msg::Done(seq, result, bytes)).is_err() {
                            break;
                        }
                    }
                    (busy, idle)
                })
            })
            .collect();
        drop(res_tx);
        drop(work_rx);

        // Writer: this thread.
        let mut pending: BTreeMap<u64, (Result<R>, u64)> = BTreeMap::new();
        let mut next = 0u64;
        let mut end: Option<u64> = None;
        let mut write_time = Duration::ZERO;
        let mut outcome: Result<()> = Ok(());
        loop {
            if end == Some(next) {
                break;
            }
            if let Some((result, bytes)) = pending.remove(&next) {
                in_flight.remove(bytes);
                let t = Instant::now();
                let step = result.and_then(&mut *consume);
                write_time += t.elapsed();
                if let Err(e) = step {
                    outcome = Err(e);
                    break;
                }
                next += 1;
                let _ = tok_tx.send(());
                continue;
            }
            match res_rx.recv() {
                Ok(Msg::Done(seq, result, bytes)) => {
                    pending.insert(seq, (result, bytes));
                }
                Ok(Msg::End(n)) => end = Some(n),
                Err(_) => {
                    outcome = Err(Error::Panic("pipeline stage exited early".into()));
                    break;
                }
            }
        }
        cancel.store(true, Ordering::SeqCst);
        drop(tok_tx);
        drop(res_rx);
        drop(pending);

        let (read_time, chunks_read, bytes_read) = reader.join().expect("reader thread");
        let mut stats = PipelineStats {
            chunks_read,
            bytes_read,
            read_time,
            write_time,
            ..Default::default()
        };
        for w in workers {
            let (busy, idle) = w.join().expect("worker thread");
            stats.process_time += busy;
            stats.worker_idle_time += idle;
        }
        stats.in_flight_high_water = in_flight.max_chunks.load(Ordering::SeqCst);
        stats.in_flight_bytes_high_water = in_flight.max_bytes.load(Ordering::SeqCst);
        outcome.map(|_| stats)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunker::ChunkerConfig;
    use std::io::Cursor;

    fn stream(blocks: usize, target: usize) -> ChunkStream {
        let data: Vec<u8> = (0..blocks)
            .flat_map(|b| (0..3).flat_map(move |r| format!("k{b:04}\t{r}\n").into_bytes()))
            .collect();
        ChunkStream::from_reader(
            Cursor::new(data),
            ChunkerConfig {
                target_chunk_bytes: target,
                ..Default::default()
            },
        )
        .unwrap()
    }

    fn collect(workers: usize, delay: bool) -> (Vec<u64>, PipelineStats) {
        let mut seen = Vec::new();
        let stats = run_pipelined(
            stream(200, 40),
            PipelinePlan::new(workers),
            Unlimited,
            |c: RawChunk| {
                if delay {
                    let ms = (c.sequence_no * 7919) % 5;
                    std::thread::sleep(Duration::from_millis(ms));
                }
                Ok(c.sequence_no)
            },
            |seq| {
                seen.push(seq);
                Ok(())
            },
        )
        .unwrap();
        (seen, stats)
    }

    #[test]
    fn results_arrive_in_order() {
        for w in [1, 2, 4, 8] {
            let (seen, stats) = collect(w, true);
            assert_eq!(seen, (0..seen.len() as u64).collect::<Vec<_>>());
            assert_eq!(stats.chunks_read, seen.len() as u64);
            assert!(stats.in_flight_high_water <= 2 * w, "{stats:?}");
        }
    }

    #[test]
    fn process_error_stops_run() {
        let err = run_pipelined(
            stream(200, 40),
            PipelinePlan::new(4),
            Unlimited,
            |c: RawChunk| {
                if c.sequence_no == 5 {
                    Err(Error::config("boom"))
                } else {
                    Ok(())
                }
            },
            |_| Ok(()),
        )
        .unwrap_err();
        assert!(err.to_string().contains("boom"));
    }

    #[test]
    fn panics_become_errors() {
        for w in [1, 3] {
            let err = run_pipelined(
                stream(50, 40),
                PipelinePlan::new(w),
                Unlimited,
                |c: RawChunk| {
                    if c.sequence_no == 2 {
                        panic!("worker blew up");
                    }
                    Ok(())
                },
                |_| Ok(()),
            )
            .unwrap_err();
            assert!(matches!(err, Error::Panic(ref m) if m.contains("blew up")), "{err}");
        }
    }

    #[test]
    fn limit_stops_reader() {
        struct FirstN(u64);
        impl ReadLimit for FirstN {
            fn admit(&mut self, c: &mut RawChunk) -> Admit {
                if c.sequence_no + 1 >= self.0 {
                    Admit::Last
                } else {
                    Admit::Continue
                }
            }
        }
        for w in [1, 4] {
            let mut n = 0;
            let stats = run_pipelined(
                stream(200, 40),
                PipelinePlan::new(w),
                FirstN(3),
                |_c: RawChunk| Ok(()),
                |_| {
                    n += 1;
                    Ok(())
                },
            )
            .unwrap();
            assert_eq!((n, stats.chunks_read), (3, 3));
        }
    }
}
