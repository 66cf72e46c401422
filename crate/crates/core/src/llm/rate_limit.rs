use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::Clock;

/// Sliding-window limiter shared by all callers of a client.
///
/// A request is released at time `t` only if fewer than `capacity` releases
/// happened in `(t - window, t]`, so every half-open window of length `window`
/// holds at most `capacity` releases. Callers block until a slot frees up.
pub struct RateLimiter {
    capacity: usize,
    window: Duration,
    clock: Arc<dyn Clock>,
    released: Mutex<VecDeque<Duration>>,
}

impl std::fmt::Debug for RateLimiter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RateLimiter")
            .field("capacity", &self.capacity)
            .field("window", &self.window)
            .finish()
    }
}

impl RateLimiter {
    pub fn new(capacity: u32, window: Duration, clock: Arc<dyn Clock>) -> Self {
        assert!(capacity > 0, "rate limit capacity must be positive");
        Self {
            capacity: capacity as usize,
            window,
            clock,
            released: Mutex::new(VecDeque::new()),
        }
    }

    /// Waits for a slot and returns the release time.
    pub fn acquire(&self) -> Duration {
        loop {
            let wake_at = {
                let mut released = self.released.lock().expect("rate limiter poisoned");
                let now = self.clock.now();
                while released.front().is_some_and(|&t| t + self.window <= now) {
                    released.pop_front();
                }
                if released.len() < self.capacity {
                    released.push_back(now);
                    return now;
                }
                released[0] + self.window
            };
            self.clock.sleep_until(wake_at);
        }
    }
}
