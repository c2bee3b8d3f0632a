use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{EvalError, Result};
use crate::ir::{forward, Graph, WeightStore};
use crate::Tensor;

/// Something that can process image `index` of a fixed set.
pub trait Workload: Send {
    fn images(&self) -> usize;
    fn run(&mut self, index: usize) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingOptions {
    pub trials: usize,
    /// Untimed pass over the first image before each trial.
    pub warmup: bool,
    /// Runs inside a one-thread pool.
    pub single_thread: bool,
}

impl Default for TimingOptions {
    fn default() -> Self {
        TimingOptions { trials: 3, warmup: true, single_thread: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub os: String,
    pub arch: String,
    pub available_parallelism: usize,
    pub worker_threads: usize,
    pub single_thread: bool,
    pub warmup: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    /// Average seconds per image for each trial.
    pub trials: Vec<f64>,
    pub best_avg_runtime: f64,
    pub images: usize,
    pub environment: Environment,
}

static MEASUREMENT: Mutex<()> = Mutex::new(());

fn run_trials(w: &mut dyn Workload, opts: &TimingOptions) -> Result<Vec<f64>> {
    let n = w.images();
    let mut trials = Vec::with_capacity(opts.trials);
    for _ in 0..opts.trials {
        if opts.warmup {
            w.run(0)?;
        }
        let start = Instant::now();
        for i in 0..n {
            w.run(i)?;
        }
        trials.push(start.elapsed().as_secs_f64() / n as f64);
    }
    Ok(trials)
}

/// Best-of-N average runtime per image. Only one measurement runs at a
/// time in the process.
pub fn time_workload(w: &mut dyn Workload, opts: &TimingOptions) -> Result<Timing> {
    if w.images() == 0 {
        return Err(EvalError::Invalid("timing needs at least one image".into()));
    }
    if opts.trials == 0 {
        return Err(EvalError::Invalid("timing needs at least one trial".into()));
    }
    let _guard = MEASUREMENT.lock().unwrap_or_else(|e| e.into_inner());
    let (trials, workers) = if opts.single_thread {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| EvalError::Invalid(e.to_string()))?;
        (pool.install(|| run_trials(w, opts))?, 1)
    } else {
        (run_trials(w, opts)?, rayon::current_num_threads())
    };
    let best = trials.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Timing {
        trials,
        best_avg_runtime: best,
        images: w.images(),
        environment: Environment {
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            available_parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
            worker_threads: workers,
            single_thread: opts.single_thread,
            warmup: opts.warmup,
        },
    })
}

struct GraphWorkload<'a> {
    graph: &'a Graph,
    store: &'a WeightStore,
    images: &'a [Tensor],
}

impl Workload for GraphWorkload<'_> {
    fn images(&self) -> usize {
        self.images.len()
    }

    fn run(&mut self, index: usize) -> Result<()> {
        std::hint::black_box(forward(self.graph, self.store, &self.images[index])?);
        Ok(())
    }
}

/// Times `forward` over `images` (already normalized model inputs).
pub fn time_model(graph: &Graph, store: &WeightStore, images: &[Tensor], opts: &TimingOptions) -> Result<Timing> {
    time_workload(&mut GraphWorkload { graph, store, images }, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    struct Sleeper {
        n: usize,
        per: Duration,
    }

    impl Workload for Sleeper {
        fn images(&self) -> usize {
            self.n
        }
        fn run(&mut self, _: usize) -> Result<()> {
            std::thread::sleep(self.per);
            Ok(())
        }
    }

    #[test]
    fn best_of_three_with_mock_sleep() {
        let mut w = Sleeper { n: 5, per: Duration::from_millis(10) };
        let t = time_workload(&mut w, &TimingOptions::default()).unwrap();
        assert_eq!(t.trials.len(), 3);
        assert_eq!(t.best_avg_runtime, t.trials.iter().copied().fold(f64::INFINITY, f64::min));
        assert!(t.trials.iter().all(|&v| v >= t.best_avg_runtime));
        assert!(t.best_avg_runtime >= 0.009 && t.best_avg_runtime <= 0.030, "{}", t.best_avg_runtime);
    }

    #[test]
    fn single_thread_and_errors() {
        let mut w = Sleeper { n: 1, per: Duration::from_millis(1) };
        let t = time_workload(&mut w, &TimingOptions { single_thread: true, ..Default::default() }).unwrap();
        assert_eq!(t.environment.worker_threads, 1);
        let mut empty = Sleeper { n: 0, per: Duration::ZERO };
        assert!(time_workload(&mut empty, &TimingOptions::default()).is_err());
    }
}
