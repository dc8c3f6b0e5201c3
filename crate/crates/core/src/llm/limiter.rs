use std::sync::Mutex;
use std::time::{Duration, Instant};

use super::Clock;

/// Token bucket admitting at most `rpm` requests per minute, with a burst of
/// up to `rpm` requests.
#[derive(Debug)]
pub struct RateLimiter {
    rpm: Option<u32>,
    state: Mutex<Bucket>,
}

#[derive(Debug)]
struct Bucket {
    tokens: f64,
    last: Option<Instant>,
}

impl RateLimiter {
    pub fn unlimited() -> Self {
        RateLimiter {
            rpm: None,
            state: Mutex::new(Bucket {
                tokens: 0.0,
                last: None,
            }),
        }
    }

    /// Zero means unlimited.
    pub fn per_minute(rpm: u32) -> Self {
        RateLimiter {
            rpm: (rpm > 0).then_some(rpm),
            state: Mutex::new(Bucket {
                tokens: f64::from(rpm),
                last: None,
            }),
        }
    }

    pub fn requests_per_minute(&self) -> Option<u32> {
        self.rpm
    }

    /// Blocks (via `clock`) until a token is available, then takes it.
    /// Holding the lock while sleeping serializes admission.
    pub fn acquire(&self, clock: &dyn Clock) {
        let Some(rpm) = self.rpm else { return };
        let capacity = f64::from(rpm);
        let per_sec = capacity / 60.0;
        let mut b = self.state.lock().unwrap();
        loop {
            let now = clock.now();
            if let Some(last) = b.last {
                let dt = now.saturating_duration_since(last).as_secs_f64();
                b.tokens = (b.tokens + dt * per_sec).min(capacity);
            }
            b.last = Some(now);
            if b.tokens >= 1.0 {
                b.tokens -= 1.0;
                return;
            }
            let wait = (1.0 - b.tokens) / per_sec;
            clock.sleep(Duration::from_secs_f64(wait));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ManualClock;

    #[test]
    fn burst_then_steady_rate() {
        let clock = ManualClock::default();
        let lim = RateLimiter::per_minute(60);
        for _ in 0..60 {
            lim.acquire(&clock);
        }
        assert!(clock.sleeps().is_empty());
        lim.acquire(&clock);
        lim.acquire(&clock);
        let total: Duration = clock.sleeps().iter().sum();
        assert!((total.as_secs_f64() - 2.0).abs() < 1e-6, "{total:?}");
    }

    #[test]
    fn unlimited_never_waits() {
        let clock = ManualClock::default();
        let lim = RateLimiter::per_minute(0);
        for _ in 0..1000 {
            lim.acquire(&clock);
        }
        assert!(clock.sleeps().is_empty());
    }
}
