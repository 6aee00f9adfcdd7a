//! Small concurrency helpers shared by the pipeline stages.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};

/// Counting semaphore bounding in-flight gateway calls.
#[derive(Debug)]
pub struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        assert!(permits > 0, "semaphore needs at least one permit");
        Self { permits: Mutex::new(permits), cv: Condvar::new() }
    }

    pub fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.cv.wait(permits).unwrap();
        }
        *permits -= 1;
        SemaphoreGuard { semaphore: self }
    }
}

pub struct SemaphoreGuard<'a> {
    semaphore: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.semaphore.permits.lock().unwrap();
        *permits += 1;
        self.semaphore.cv.notify_one();
    }
}

/// Apply `f` to every item with at most `limit` worker threads, returning
/// results in input order regardless of completion order.
pub fn parallel_map<T, R, F>(items: Vec<T>, limit: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    let limit = limit.max(1);
    if items.is_empty() {
        return Vec::new();
    }
    if limit == 1 || items.len() == 1 {
        return items.into_iter().map(f).collect();
    }

    let queue: Mutex<VecDeque<(usize, T)>> = Mutex::new(items.into_iter().enumerate().collect());
    let slots: Vec<Mutex<Option<R>>> = {
        let n = queue.lock().unwrap().len();
        (0..n).map(|_| Mutex::new(None)).collect()
    };

    std::thread::scope(|scope| {
        for _ in 0..limit.min(slots.len()) {
            scope.spawn(|| loop {
                let next = queue.lock().unwrap().pop_front();
                match next {
                    Some((i, item)) => {
                        let result = f(item);
                        *slots[i].lock().unwrap() = Some(result);
                    }
                    None => break,
                }
            });
        }
    });

    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("worker filled every slot"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn preserves_input_order() {
        let out = parallel_map((0..100).collect(), 8, |i| i * 2);
        assert_eq!(out, (0..100).map(|i| i * 2).collect::<Vec<_>>());
    }

    #[test]
    fn respects_concurrency_limit() {
        let in_flight = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        parallel_map((0..32).collect::<Vec<i32>>(), 3, |_| {
            let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
            peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(std::time::Duration::from_millis(2));
            in_flight.fetch_sub(1, Ordering::SeqCst);
        });
        assert!(peak.load(Ordering::SeqCst) <= 3);
    }

    #[test]
    fn semaphore_bounds_holders() {
        let sem = Semaphore::new(2);
        let g1 = sem.acquire();
        let _g2 = sem.acquire();
        drop(g1);
        let _g3 = sem.acquire();
    }
}
