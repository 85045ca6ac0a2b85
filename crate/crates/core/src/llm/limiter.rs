use std::sync::{Condvar, Mutex};

/// Counting semaphore bounding in-flight requests.
///
/// Also tracks the peak number of concurrently held permits so tests can
/// assert the bound was honored.
#[derive(Debug)]
pub struct ConcurrencyLimiter {
    limit: usize,
    state: Mutex<State>,
    released: Condvar,
}

#[derive(Debug, Default)]
struct State {
    in_flight: usize,
    peak: usize,
}

pub struct Permit<'a> {
    owner: &'a ConcurrencyLimiter,
}

impl ConcurrencyLimiter {
    pub fn new(limit: usize) -> Self {
        assert!(limit > 0, "concurrency bound must be positive");
        Self {
            limit,
            state: Mutex::new(State::default()),
            released: Condvar::new(),
        }
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut st = self.state.lock().unwrap();
        while st.in_flight >= self.limit {
            st = self.released.wait(st).unwrap();
        }
        st.in_flight += 1;
        st.peak = st.peak.max(st.in_flight);
        Permit { owner: self }
    }

    pub fn in_flight(&self) -> usize {
        self.state.lock().unwrap().in_flight
    }

    pub fn peak(&self) -> usize {
        self.state.lock().unwrap().peak
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut st = self.owner.state.lock().unwrap();
        st.in_flight -= 1;
        drop(st);
        self.owner.released.notify_one();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    #[test]
    fn never_exceeds_bound() {
        let lim = ConcurrencyLimiter::new(3);
        std::thread::scope(|s| {
            for _ in 0..16 {
                s.spawn(|| {
                    let _p = lim.acquire();
                    assert!(lim.in_flight() <= 3);
                    std::thread::sleep(Duration::from_millis(5));
                });
            }
        });
        assert!(lim.peak() <= 3);
        assert!(lim.peak() >= 1);
        assert_eq!(lim.in_flight(), 0);
    }
}
