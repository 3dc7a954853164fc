use std::io::{self, Write};
use std::sync::atomic::{AtomicBool, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::buffer::{DoubleBuffer, DrainSide, TickOutcome};
use crate::clock::Clock;
use crate::serial::{overrun_line, write_serial};
use crate::signal::{SignalError, SignalGenerator, SignalSpec};
use crate::timestamp::Timestamp;
use crate::{SAMPLE_PERIOD_MS, SAMPLE_RATE_HZ};

#[derive(Debug, Error)]
pub enum EmulatorError {
    #[error(transparent)]
    Spec(#[from] SignalError),
    #[error("serial sink failed: {0}")]
    SinkFailure(#[source] io::Error),
}

/// Counters for one emulator run. `lines_emitted` counts data lines only, so
/// `lines_emitted + overruns == ticks` once the run has finished.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EmulatorReport {
    pub ticks: u64,
    pub lines_emitted: u64,
    pub overruns: u64,
    pub bytes_emitted: u64,
}

/// Consumer pause starting `at` into the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stall {
    pub at: Duration,
    pub length: Duration,
}

impl Stall {
    fn covers(&self, t: Duration) -> bool {
        t >= self.at && t < self.at + self.length
    }
}

/// Tick schedule. Jitter displaces individual ticks around their nominal
/// instant without accumulating, so the long-run period stays exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TickClock {
    pub period: Duration,
    pub max_jitter: Duration,
    pub seed: u64,
}

impl Default for TickClock {
    fn default() -> Self {
        TickClock {
            period: Duration::from_millis(SAMPLE_PERIOD_MS as u64),
            max_jitter: Duration::ZERO,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct EmulatorOptions {
    pub stalls: Vec<Stall>,
    pub tick_clock: TickClock,
    /// First timestamp of a virtual run. Wall-clock runs read their clock.
    pub start: Timestamp,
}

fn tick_count(duration_s: f64) -> u64 {
    if duration_s.is_finite() && duration_s > 0.0 {
        (duration_s * SAMPLE_RATE_HZ as f64 + 1e-9).floor() as u64
    } else {
        0
    }
}

struct LineWriter<'a, W: Write + ?Sized> {
    sink: &'a mut W,
    report: EmulatorReport,
}

impl<W: Write + ?Sized> LineWriter<'_, W> {
    fn fail_lines(&mut self, count: u64) -> Result<(), EmulatorError> {
        let line = overrun_line();
        for _ in 0..count {
            self.sink.write_all(&line).map_err(EmulatorError::SinkFailure)?;
            self.report.overruns += 1;
            self.report.bytes_emitted += line.len() as u64;
        }
        Ok(())
    }

    fn drain_all(&mut self, next: &mut impl FnMut() -> Option<crate::sample::Sample>) -> Result<bool, EmulatorError> {
        let mut any = false;
        let mut line = Vec::with_capacity(crate::serial::MAX_LINE_LEN);
        while let Some(sample) = next() {
            line.clear();
            write_serial(&mut line, &sample).expect("Vec sink");
            self.sink.write_all(&line).map_err(EmulatorError::SinkFailure)?;
            self.report.lines_emitted += 1;
            self.report.bytes_emitted += line.len() as u64;
            any = true;
        }
        Ok(any)
    }

    fn flush(&mut self) -> Result<(), EmulatorError> {
        self.sink.flush().map_err(EmulatorError::SinkFailure)
    }
}

/// Runs the board in virtual time: ticks follow each other instantly, the
/// consumer drains right after every tick unless a stall covers that instant,
/// and timestamps advance by exactly 4 ms per tick from `options.start`.
pub fn run_virtual<W: Write + ?Sized>(
    spec: &SignalSpec,
    sink: &mut W,
    duration_s: f64,
    options: &EmulatorOptions,
) -> Result<EmulatorReport, EmulatorError> {
    let mut generator = SignalGenerator::new(spec.clone())?;
    let mut buffer = DoubleBuffer::new();
    let mut out = LineWriter {
        sink,
        report: EmulatorReport::default(),
    };
    let ticks = tick_count(duration_s);

    let mut now = options.start;
    for k in 0..ticks {
        buffer.tick(generator.next_tick().channels);
        out.report.ticks += 1;
        let elapsed = Duration::from_millis(k * SAMPLE_PERIOD_MS as u64);
        if !options.stalls.iter().any(|s| s.covers(elapsed)) {
            out.fail_lines(buffer.take_overruns())?;
            out.drain_all(&mut || buffer.drain(now))?;
        }
        now = now.wrapping_add_millis(SAMPLE_PERIOD_MS);
    }
    out.fail_lines(buffer.take_overruns())?;
    out.drain_all(&mut || buffer.drain(now))?;
    out.flush()?;
    Ok(out.report)
}

/// Runs the board in real time for `duration_s` seconds.
///
/// A producer thread ticks every 4 ms against absolute deadlines while the
/// calling thread drains the buffer into `sink`, stamping each sample with
/// `clock`. A sink that blocks behaves like a stalled main loop: ticks keep
/// coming and overrun once both slots are full.
pub fn run_emulator<W: Write + ?Sized>(
    spec: &SignalSpec,
    sink: &mut W,
    duration_s: f64,
    clock: &dyn Clock,
    options: &EmulatorOptions,
) -> Result<EmulatorReport, EmulatorError> {
    let mut generator = SignalGenerator::new(spec.clone())?;
    let ticks = tick_count(duration_s);
    let (mut tick_side, mut drain_side) = DoubleBuffer::new().split();
    let producer_done = AtomicBool::new(false);
    let abort = AtomicBool::new(false);
    let consumer = thread::current();
    let tick_clock = options.tick_clock;
    let start = Instant::now();

    thread::scope(|scope| {
        let producer = scope.spawn(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(tick_clock.seed);
            let jitter_us = tick_clock.max_jitter.as_micros() as i64;
            let mut produced = 0u64;
            for k in 0..ticks {
                if abort.load(Ordering::Acquire) {
                    break;
                }
                let nominal = tick_clock.period * k as u32;
                let offset = if jitter_us > 0 {
                    rng.random_range(-jitter_us..=jitter_us)
                } else {
                    0
                };
                let deadline = if offset >= 0 {
                    start + nominal + Duration::from_micros(offset as u64)
                } else {
                    (start + nominal)
                        .checked_sub(Duration::from_micros(offset.unsigned_abs()))
                        .unwrap_or(start)
                };
                match deadline.checked_duration_since(Instant::now()) {
                    Some(wait) => thread::sleep(wait),
                    // Catching up after the host scheduler held us back. A
                    // timer interrupt cannot fire twice in a row without the
                    // main loop getting a turn, so give the consumer one.
                    None => thread::yield_now(),
                }
                if tick_side.tick(generator.next_tick().channels) == TickOutcome::Stored {
                    consumer.unpark();
                }
                produced += 1;
            }
            producer_done.store(true, Ordering::Release);
            consumer.unpark();
            produced
        });

        let result = consume(sink, &mut drain_side, clock, options, start, &producer_done);
        if result.is_err() {
            abort.store(true, Ordering::Release);
        }
        let produced = producer.join().expect("producer thread panicked");
        result.map(|mut report| {
            report.ticks = produced;
            report
        })
    })
}

fn consume<W: Write + ?Sized>(
    sink: &mut W,
    drain: &mut DrainSide,
    clock: &dyn Clock,
    options: &EmulatorOptions,
    start: Instant,
    producer_done: &AtomicBool,
) -> Result<EmulatorReport, EmulatorError> {
    let mut out = LineWriter {
        sink,
        report: EmulatorReport::default(),
    };
    let mut stalls = options.stalls.clone();
    stalls.sort_by_key(|s| s.at);
    let mut stalls = stalls.into_iter().peekable();

    loop {
        if let Some(stall) = stalls.peek() {
            if start.elapsed() >= stall.at {
                let resume = start + stall.at + stall.length;
                if let Some(wait) = resume.checked_duration_since(Instant::now()) {
                    thread::sleep(wait);
                }
                stalls.next();
            }
        }

        let done = producer_done.load(Ordering::Acquire);
        out.fail_lines(drain.take_overruns())?;
        let now = || Timestamp::from_millis_wrapping(clock.now_ms() as u64);
        let wrote = out.drain_all(&mut || drain.drain(now()))?;
        if wrote {
            out.flush()?;
        }
        if done {
            // Everything the producer stored before finishing is now drained.
            out.fail_lines(drain.take_overruns())?;
            out.drain_all(&mut || drain.drain(now()))?;
            out.flush()?;
            return Ok(out.report);
        }
        if !wrote {
            thread::park_timeout(Duration::from_millis(1));
        }
    }
}

/// Paces writes to a serial line rate: ten bit times per byte (start, eight
/// data, stop), about 86.8 µs per byte at 115 200 baud.
pub struct BaudLimiter<W> {
    inner: W,
    byte_time: Duration,
    started: Option<Instant>,
    bytes: u64,
}

impl<W: Write> BaudLimiter<W> {
    pub fn new(inner: W, baud: u32) -> Self {
        BaudLimiter {
            inner,
            byte_time: Duration::from_secs_f64(10.0 / baud as f64),
            started: None,
            bytes: 0,
        }
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

impl<W: Write> Write for BaudLimiter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let started = *self.started.get_or_insert_with(Instant::now);
        let n = self.inner.write(buf)?;
        self.bytes += n as u64;
        let due = started + self.byte_time.mul_f64(self.bytes as f64);
        if let Some(wait) = due.checked_duration_since(Instant::now()) {
            thread::sleep(wait);
        }
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}
