//! Multi-threaded and instrumented priority engines.

use std::cell::Cell;
use std::num::NonZeroUsize;
use std::thread;
use std::time::{Duration, Instant};

use tritstream_core::gaussian::ElementModel;
use tritstream_core::priority::{
    plane_census, vectorized_deltas, PlaneCensus, PlanePriorities, PriorityEngine, PriorityError,
};
use tritstream_core::slicing::IntervalState;

/// Environment variable capping the worker count; `0` or unset means one
/// worker per available core.
pub const THREADS_VAR: &str = "TRITSTREAM_THREADS";

/// Default rows per worker below which splitting is not worth a thread.
pub const MIN_ROWS: usize = 2048;

pub fn worker_count() -> usize {
    let auto = thread::available_parallelism().map_or(1, NonZeroUsize::get);
    match std::env::var(THREADS_VAR).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(0) | None => auto,
        Some(n) => n,
    }
}

/// Matrix-form engine with the uncertain rows split across scoped threads.
/// Rows are independent, so the output is identical to the single-threaded
/// engine for any worker count.
#[derive(Debug, Clone, Copy)]
pub struct ThreadedEngine {
    workers: usize,
    min_rows: usize,
}

impl ThreadedEngine {
    pub fn new(workers: usize) -> Self {
        ThreadedEngine {
            workers: workers.max(1),
            min_rows: MIN_ROWS,
        }
    }

    pub fn with_min_rows(self, min_rows: usize) -> Self {
        ThreadedEngine {
            min_rows: min_rows.max(1),
            ..self
        }
    }

    pub fn from_env() -> Self {
        Self::new(worker_count())
    }

    pub fn workers(&self) -> usize {
        self.workers
    }
}

impl PriorityEngine for ThreadedEngine {
    fn plane_priorities(
        &self,
        models: &[ElementModel],
        state: &IntervalState,
        census: &PlaneCensus,
    ) -> Result<PlanePriorities, PriorityError> {
        let rows = &census.uncertain;
        let workers = self.workers.min(rows.len() / self.min_rows).max(1);
        let (delta_r, delta_d) = if workers == 1 {
            vectorized_deltas(models, state, rows)?
        } else {
            let chunk = rows.len().div_ceil(workers);
            let parts = thread::scope(|s| {
                let handles: Vec<_> = rows
                    .chunks(chunk)
                    .map(|part| s.spawn(move || vectorized_deltas(models, state, part)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("priority worker panicked"))
                    .collect::<Result<Vec<_>, _>>()
            })?;
            let mut r = Vec::with_capacity(rows.len());
            let mut d = Vec::with_capacity(rows.len());
            for (pr, pd) in parts {
                r.extend(pr);
                d.extend(pd);
            }
            (r, d)
        };
        Ok(PlanePriorities::from_deltas(census.plane, rows.clone(), delta_r, delta_d))
    }
}

/// Wraps an engine and accumulates the wall time it spends. With
/// `own_census`, the census is recomputed inside the timed region so that
/// engines which rely on it are charged for it.
pub struct TimedEngine<E> {
    inner: E,
    own_census: bool,
    spent: Cell<Duration>,
}

impl<E> TimedEngine<E> {
    pub fn new(inner: E, own_census: bool) -> Self {
        TimedEngine {
            inner,
            own_census,
            spent: Cell::new(Duration::ZERO),
        }
    }

    pub fn spent(&self) -> Duration {
        self.spent.get()
    }
}

impl<E: PriorityEngine> PriorityEngine for TimedEngine<E> {
    fn plane_priorities(
        &self,
        models: &[ElementModel],
        state: &IntervalState,
        census: &PlaneCensus,
    ) -> Result<PlanePriorities, PriorityError> {
        let start = Instant::now();
        let out = if self.own_census {
            let own = plane_census(models, state, census.plane)?;
            self.inner.plane_priorities(models, state, &own)
        } else {
            self.inner.plane_priorities(models, state, census)
        };
        self.spent.set(self.spent.get() + start.elapsed());
        out
    }
}
