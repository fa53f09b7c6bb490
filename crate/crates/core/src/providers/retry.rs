use std::thread;
use std::time::Duration;

use rand::Rng;

use super::ProviderError;

/// Exponential backoff with multiplicative jitter in `[0.75, 1.25)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub factor: f64,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_secs(1),
            factor: 2.0,
            jitter: true,
        }
    }
}

impl RetryPolicy {
    /// No waiting between attempts; for tests.
    pub fn immediate(max_retries: u32) -> Self {
        Self {
            max_retries,
            base_delay: Duration::ZERO,
            factor: 2.0,
            jitter: false,
        }
    }

    /// Delay before retry number `retry` (0-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let base = self.base_delay.as_secs_f64() * self.factor.powi(retry as i32);
        let scale = if self.jitter {
            rand::rng().random_range(0.75..1.25)
        } else {
            1.0
        };
        Duration::from_secs_f64(base * scale)
    }

    /// Runs `op` until it succeeds, fails with a non-retryable error, or
    /// `max_retries` retries are spent. `op` receives the 1-based attempt.
    pub fn run<T>(
        &self,
        mut op: impl FnMut(u32) -> Result<T, ProviderError>,
    ) -> Result<T, ProviderError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match op(attempt) {
                Ok(v) => return Ok(v),
                Err(e) if !e.retryable() => return Err(e),
                Err(e) if attempt > self.max_retries => {
                    return Err(ProviderError::RetriesExhausted {
                        attempts: attempt,
                        last: Box::new(e),
                    })
                }
                Err(e) => {
                    let wait = self.delay(attempt - 1);
                    tracing::warn!(attempt, wait_ms = wait.as_millis() as u64, error = %e, "retrying provider call");
                    if !wait.is_zero() {
                        thread::sleep(wait);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn http(status: u16) -> ProviderError {
        ProviderError::Http {
            endpoint: "t".into(),
            status,
            message: String::new(),
        }
    }

    #[test]
    fn recovers_after_transient_failures() {
        let mut attempts = 0;
        let out = RetryPolicy::immediate(3).run(|n| {
            attempts = n;
            if n <= 2 {
                Err(http(503))
            } else {
                Ok("done")
            }
        });
        assert_eq!(out.unwrap(), "done");
        assert_eq!(attempts, 3);
    }

    #[test]
    fn client_errors_are_not_retried() {
        for status in [400, 401, 403, 404, 422] {
            let mut attempts = 0;
            let err = RetryPolicy::immediate(5)
                .run::<()>(|n| {
                    attempts = n;
                    Err(http(status))
                })
                .unwrap_err();
            assert_eq!(attempts, 1, "status {status}");
            assert!(matches!(err, ProviderError::Http { .. }));
        }
    }

    #[test]
    fn rate_limit_retried_until_exhausted() {
        let mut attempts = 0;
        let err = RetryPolicy::immediate(2)
            .run::<()>(|n| {
                attempts = n;
                Err(http(429))
            })
            .unwrap_err();
        assert_eq!(attempts, 3);
        assert!(err.retryable());
        assert!(matches!(
            err,
            ProviderError::RetriesExhausted { attempts: 3, .. }
        ));
    }

    #[test]
    fn delays_grow_geometrically() {
        let p = RetryPolicy {
            jitter: false,
            ..Default::default()
        };
        assert_eq!(p.delay(0), Duration::from_secs(1));
        assert_eq!(p.delay(2), Duration::from_secs(4));
        let jittered = RetryPolicy::default().delay(1).as_secs_f64();
        assert!((1.5..2.5).contains(&jittered));
    }
}
