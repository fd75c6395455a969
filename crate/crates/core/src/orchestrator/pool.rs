//! Bounded pool for provider calls.

use std::sync::atomic::{AtomicUsize, Ordering};

use parking_lot::{Condvar, Mutex};

/// Caps in-flight service calls across every caller sharing the pool.
pub struct ServicePool {
    limit: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
    peak: AtomicUsize,
}

impl ServicePool {
    pub fn new(limit: usize) -> Self {
        Self {
            limit: limit.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
            peak: AtomicUsize::new(0),
        }
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    /// Highest number of simultaneous calls seen so far.
    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    /// Runs `f` once a slot is free.
    pub fn run<R>(&self, f: impl FnOnce() -> R) -> R {
        {
            let mut n = self.in_flight.lock();
            while *n >= self.limit {
                self.freed.wait(&mut n);
            }
            *n += 1;
            self.peak.fetch_max(*n, Ordering::SeqCst);
        }
        struct Release<'a>(&'a ServicePool);
        impl Drop for Release<'_> {
            fn drop(&mut self) {
                *self.0.in_flight.lock() -= 1;
                self.0.freed.notify_one();
            }
        }
        let _release = Release(self);
        f()
    }

    /// Maps `items` through `f` with at most `limit` calls in flight.
    /// Output order matches input order.
    pub fn map<T: Sync, R: Send>(&self, items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
        fan_out(items, self.limit, |t| self.run(|| f(t)))
    }
}

/// Maps `items` through `f` on up to `threads` scoped threads, keeping
/// input order.
pub fn fan_out<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if items.len() <= 1 || threads <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let out: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads.min(items.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(item) = items.get(i) else { break };
                let r = f(item);
                out.lock()[i] = Some(r);
            });
        }
    });
    out.into_inner()
        .into_iter()
        .map(|r| r.expect("every index is visited"))
        .collect()
}

impl Default for ServicePool {
    fn default() -> Self {
        Self::new(4)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    #[test]
    fn preserves_order_and_bounds_concurrency() {
        let pool = ServicePool::new(4);
        let items: Vec<u32> = (0..20).collect();
        let out = pool.map(&items, |x| {
            std::thread::sleep(Duration::from_millis(5));
            x * 2
        });
        assert_eq!(out, items.iter().map(|x| x * 2).collect::<Vec<_>>());
        assert!(pool.peak() <= 4);
        assert!(pool.peak() >= 2);
    }

    #[test]
    fn shared_between_callers() {
        let pool = ServicePool::new(3);
        let items: Vec<u32> = (0..12).collect();
        std::thread::scope(|s| {
            for _ in 0..3 {
                s.spawn(|| {
                    pool.map(&items, |_| std::thread::sleep(Duration::from_millis(2)));
                });
            }
        });
        assert!(pool.peak() <= 3);
    }
}
