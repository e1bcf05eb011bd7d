//! Acquire → infer → emit pipeline with a bounded drop-oldest queue.

use std::collections::VecDeque;
use std::sync::{mpsc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::engine::{ClassPrediction, Classifier};
use crate::error::{Error, Result};
use crate::imageops::ImageTensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Clock {
    /// Wall-clock threads; inference takes however long it takes.
    Real,
    /// Discrete-event simulation; every inference takes `service_ms`.
    Virtual { service_ms: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub fps: f64,
    /// Frames that may wait while inference is busy.
    pub queue_capacity: usize,
    pub clock: Clock,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            fps: 10.0,
            queue_capacity: 1,
            clock: Clock::Real,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::InvalidArgument(format!("fps must be positive, got {}", self.fps)));
        }
        if self.queue_capacity == 0 {
            return Err(Error::InvalidArgument("queue capacity must be at least 1".into()));
        }
        if let Clock::Virtual { service_ms } = self.clock {
            if !(service_ms >= 0.0 && service_ms.is_finite()) {
                return Err(Error::InvalidArgument(format!("bad service time {service_ms}")));
            }
        }
        Ok(())
    }

    pub fn period_ms(&self) -> f64 {
        1e3 / self.fps
    }
}

/// One processed frame as seen by the sink.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame_index: usize,
    pub arrival_ms: f64,
    pub start_ms: f64,
    pub done_ms: f64,
    pub prediction: ClassPrediction,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub max: f64,
}

impl LatencyStats {
    /// Nearest-rank percentiles; `None` for an empty sample.
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let rank = |q: f64| s[((q * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1];
        Some(Self {
            mean: s.iter().sum::<f64>() / s.len() as f64,
            p50: rank(0.5),
            p95: rank(0.95),
            max: s[s.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineStats {
    pub frames_in: usize,
    pub frames_out: usize,
    pub dropped: usize,
    /// Inference time per processed frame.
    pub latency_ms: Option<LatencyStats>,
}

impl PipelineStats {
    pub fn drop_rate(&self) -> f64 {
        if self.frames_in == 0 {
            0.0
        } else {
            self.dropped as f64 / self.frames_in as f64
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Runs frames from `source` through `classifier` at `cfg.fps`.
///
/// The acquire stage never blocks: when the queue is full the oldest
/// waiting frame is dropped. The sink sees processed frames in order.
pub fn run_pipeline<I>(
    source: I,
    classifier: &dyn Classifier,
    sink: &mut dyn FnMut(FrameResult),
    cfg: &PipelineConfig,
) -> Result<PipelineStats>
where
    I: Iterator<Item = ImageTensor> + Send,
{
    cfg.validate()?;
    match cfg.clock {
        Clock::Virtual { service_ms } => run_virtual(source, classifier, sink, cfg, service_ms),
        Clock::Real => run_real(source, classifier, sink, cfg),
    }
}

fn run_virtual<I: Iterator<Item = ImageTensor>>(
    source: I,
    classifier: &dyn Classifier,
    sink: &mut dyn FnMut(FrameResult),
    cfg: &PipelineConfig,
    service_ms: f64,
) -> Result<PipelineStats> {
    let period = cfg.period_ms();
    let mut queue: VecDeque<(usize, f64, ImageTensor)> = VecDeque::new();
    let mut busy_until = f64::NEG_INFINITY;
    let mut frames_in = 0;
    let mut dropped = 0;
    let mut latencies = Vec::new();
    let mut process = |queue: &mut VecDeque<(usize, f64, ImageTensor)>, now: f64, busy_until: &mut f64| -> Result<()> {
        if let Some((idx, arrival, frame)) = queue.pop_front() {
            let start = now.max(arrival);
            let mut prediction = classifier.classify(&frame)?;
            prediction.latency_ms = service_ms;
            *busy_until = start + service_ms;
            latencies.push(service_ms);
            sink(FrameResult {
                frame_index: idx,
                arrival_ms: arrival,
                start_ms: start,
                done_ms: *busy_until,
                prediction,
            });
        }
        Ok(())
    };
    for (i, frame) in source.enumerate() {
        let t = i as f64 * period;
        // completions up to and including t come before this arrival
        while busy_until <= t && !queue.is_empty() {
            let now = busy_until.max(queue[0].1);
            process(&mut queue, now, &mut busy_until)?;
        }
        frames_in += 1;
        queue.push_back((i, t, frame));
        if busy_until <= t {
            process(&mut queue, t, &mut busy_until)?;
        } else if queue.len() > cfg.queue_capacity {
            queue.pop_front();
            dropped += 1;
        }
    }
    while !queue.is_empty() {
        let now = busy_until;
        process(&mut queue, now, &mut busy_until)?;
    }
    Ok(PipelineStats {
        frames_in,
        frames_out: latencies.len(),
        dropped,
        latency_ms: LatencyStats::from_samples(&latencies),
    })
}

struct Shared {
    queue: VecDeque<(usize, f64, ImageTensor)>,
    dropped: usize,
    frames_in: usize,
    done: bool,
}

fn run_real<I: Iterator<Item = ImageTensor> + Send>(
    source: I,
    classifier: &dyn Classifier,
    sink: &mut dyn FnMut(FrameResult),
    cfg: &PipelineConfig,
) -> Result<PipelineStats> {
    let state = Mutex::new(Shared {
        queue: VecDeque::new(),
        dropped: 0,
        frames_in: 0,
        done: false,
    });
    let ready = Condvar::new();
    let period = Duration::from_secs_f64(1.0 / cfg.fps);
    let origin = Instant::now();
    let ms = |t: Instant| t.duration_since(origin).as_secs_f64() * 1e3;
    let (tx, rx) = mpsc::channel::<Result<FrameResult>>();
    let (state_ref, ready_ref) = (&state, &ready);

    let latencies = std::thread::scope(|scope| -> Result<Vec<f64>> {
        scope.spawn(move || {
            for (i, frame) in source.enumerate() {
                let due = origin + period * i as u32;
                if let Some(wait) = due.checked_duration_since(Instant::now()) {
                    std::thread::sleep(wait);
                }
                let mut s = state_ref.lock().expect("pipeline lock");
                s.frames_in += 1;
                s.queue.push_back((i, ms(Instant::now()), frame));
                if s.queue.len() > cfg.queue_capacity {
                    s.queue.pop_front();
                    s.dropped += 1;
                }
                drop(s);
                ready_ref.notify_one();
            }
            state_ref.lock().expect("pipeline lock").done = true;
            ready_ref.notify_one();
        });
        scope.spawn(move || loop {
            let next = {
                let mut s = state_ref.lock().expect("pipeline lock");
                loop {
                    if let Some(item) = s.queue.pop_front() {
                        break Some(item);
                    }
                    if s.done {
                        break None;
                    }
                    s = ready_ref.wait(s).expect("pipeline lock");
                }
            };
            let Some((idx, arrival, frame)) = next else { break };
            let start = Instant::now();
            let result = classifier.classify(&frame).map(|mut prediction| {
                let done = Instant::now();
                prediction.latency_ms = done.duration_since(start).as_secs_f64() * 1e3;
                FrameResult {
                    frame_index: idx,
                    arrival_ms: arrival,
                    start_ms: ms(start),
                    done_ms: ms(done),
                    prediction,
                }
            });
            let failed = result.is_err();
            if tx.send(result).is_err() || failed {
                break;
            }
        });
        // emit stage runs on the calling thread
        let mut latencies = Vec::new();
        let mut first_err = None;
        for r in rx {
            match r {
                Ok(r) => {
                    latencies.push(r.prediction.latency_ms);
                    sink(r);
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        match first_err {
            Some(e) => Err(e),
            None => Ok(latencies),
        }
    })?;
    let s = state.into_inner().expect("pipeline lock");
    Ok(PipelineStats {
        frames_in: s.frames_in,
        frames_out: latencies.len(),
        dropped: s.dropped,
        latency_ms: LatencyStats::from_samples(&latencies),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ClassTaxonomy;
    use crate::deploy::StubClassifier;

    fn stub(ms: u64) -> StubClassifier {
        StubClassifier {
            class_id: 3,
            delay: Duration::from_millis(ms),
            taxonomy: ClassTaxonomy::aiweeds(),
        }
    }

    fn frames(n: usize) -> impl Iterator<Item = ImageTensor> + Send {
        (0..n).map(|_| ImageTensor::filled(8, 8, [1, 2, 3]))
    }

    fn virtual_cfg(service_ms: f64) -> PipelineConfig {
        PipelineConfig {
            clock: Clock::Virtual { service_ms },
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn fast_stub_never_drops() {
        let s = run_pipeline(frames(100), &stub(0), &mut |_| {}, &virtual_cfg(40.0)).unwrap();
        assert_eq!((s.frames_in, s.frames_out, s.dropped), (100, 100, 0));
        assert_eq!(s.latency_ms.unwrap().mean, 40.0);
    }

    #[test]
    fn slow_stub_drops_sixty_percent() {
        let mut order = Vec::new();
        let s = run_pipeline(frames(100), &stub(0), &mut |r| order.push(r.frame_index), &virtual_cfg(250.0)).unwrap();
        assert_eq!(s.frames_in, 100);
        assert_eq!(s.frames_out + s.dropped, 100);
        assert!((s.drop_rate() - 0.6).abs() <= 0.02, "{s:?}");
        assert!(order.windows(2).all(|w| w[0] < w[1]));
        let again = run_pipeline(frames(100), &stub(0), &mut |_| {}, &virtual_cfg(250.0)).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn real_clock_fast_stub() {
        let cfg = PipelineConfig {
            fps: 50.0,
            ..PipelineConfig::default()
        };
        let s = run_pipeline(frames(20), &stub(2), &mut |_| {}, &cfg).unwrap();
        assert_eq!((s.frames_in, s.frames_out, s.dropped), (20, 20, 0));
        let l = s.latency_ms.unwrap();
        assert!(l.p50 <= l.p95 && l.p95 <= l.max);
    }

    #[test]
    fn real_clock_slow_stub_drops() {
        let cfg = PipelineConfig {
            fps: 40.0,
            ..PipelineConfig::default()
        };
        // 62.5 ms per frame at a 25 ms period
        let s = run_pipeline(frames(40), &stub(62), &mut |_| {}, &cfg).unwrap();
        assert_eq!(s.frames_out + s.dropped, 40);
        assert!(s.drop_rate() > 0.4 && s.drop_rate() < 0.75, "{s:?}");
    }

    #[test]
    fn percentiles() {
        let l = LatencyStats::from_samples(&(1..=100).map(f64::from).collect::<Vec<_>>()).unwrap();
        assert_eq!((l.p50, l.p95, l.max, l.mean), (50.0, 95.0, 100.0, 50.5));
        assert!(LatencyStats::from_samples(&[]).is_none());
    }

    #[test]
    fn stats_json_shape() {
        let s = run_pipeline(frames(3), &stub(0), &mut |_| {}, &virtual_cfg(10.0)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s.to_json().unwrap()).unwrap();
        for k in ["frames_in", "frames_out", "dropped", "latency_ms"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        for k in ["mean", "p50", "p95", "max"] {
            assert!(v["latency_ms"].get(k).is_some(), "{k}");
        }
    }
}
