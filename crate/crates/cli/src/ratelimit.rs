//! Client-side bandwidth shaping. A token bucket refilled in real time
//! caps ingress to a configured bit rate; readers pull through it in
//! chunks of at most 64 KB, sleeping when the bucket runs dry.

use std::io::{self, Read};
use std::time::{Duration, Instant};

/// One pacing chunk: reads never consume more than this per bucket draw.
pub const CHUNK_BYTES: usize = 64 * 1024;

/// Token bucket over bytes. Capacity is one chunk, so the largest burst
/// above the configured rate is 64 KB; over any window of a second or
/// more, delivered throughput stays within 5% of the target.
pub struct TokenBucket {
    bytes_per_sec: f64,
    capacity: f64,
    tokens: f64,
    last_refill: Instant,
}

impl TokenBucket {
    pub fn from_mbps(mbps: f64) -> Self {
        Self::new(mbps * 1_000_000.0 / 8.0)
    }

    pub fn new(bytes_per_sec: f64) -> Self {
        assert!(bytes_per_sec > 0.0, "rate must be positive");
        let capacity = CHUNK_BYTES as f64;
        TokenBucket {
            bytes_per_sec,
            capacity,
            tokens: capacity,
            last_refill: Instant::now(),
        }
    }

    fn refill(&mut self) {
        let now = Instant::now();
        let dt = now.duration_since(self.last_refill).as_secs_f64();
        self.last_refill = now;
        self.tokens = (self.tokens + dt * self.bytes_per_sec).min(self.capacity);
    }

    /// Blocks until `n` bytes worth of tokens are available, then spends
    /// them. `n` larger than the bucket capacity is spent in full; the
    /// sleep just grows accordingly.
    pub fn consume(&mut self, n: usize) {
        let need = n as f64;
        loop {
            self.refill();
            if self.tokens >= need {
                self.tokens -= need;
                return;
            }
            let deficit = need - self.tokens;
            let wait = deficit / self.bytes_per_sec;
            std::thread::sleep(Duration::from_secs_f64(wait.max(0.0005)));
        }
    }
}

/// Pulls from an inner reader at a capped rate, 64 KB at a time.
pub struct RateLimitedReader<R> {
    inner: R,
    bucket: TokenBucket,
}

impl<R: Read> RateLimitedReader<R> {
    pub fn new(inner: R, bucket: TokenBucket) -> Self {
        RateLimitedReader { inner, bucket }
    }
}

impl<R: Read> Read for RateLimitedReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let cap = buf.len().min(CHUNK_BYTES);
        let n = self.inner.read(&mut buf[..cap])?;
        if n > 0 {
            self.bucket.consume(n);
        }
        Ok(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Read;

    #[test]
    fn throughput_stays_at_the_cap() {
        // 80 Mbps = 10 MB/s; push 25 MB and expect about 2.5 s.
        let bucket = TokenBucket::from_mbps(80.0);
        let total = 25 * 1024 * 1024;
        let mut reader = RateLimitedReader::new(io::repeat(0).take(total), bucket);

        let start = Instant::now();
        let copied = io::copy(&mut reader, &mut io::sink()).unwrap();
        let secs = start.elapsed().as_secs_f64();

        assert_eq!(copied, total);
        let rate = copied as f64 / secs;
        let target = 10_000_000.0;
        assert!(rate <= target * 1.05, "rate {rate:.0} B/s above cap");
        assert!(rate >= target * 0.90, "rate {rate:.0} B/s far below cap");
    }

    #[test]
    fn window_invariant_holds_per_second() {
        // Count bytes delivered in consecutive 1 s windows.
        let mut bucket = TokenBucket::from_mbps(40.0); // 5 MB/s
        let target = 5_000_000.0;
        let start = Instant::now();
        let mut windows = vec![0u64; 3];
        while start.elapsed().as_secs_f64() < 3.0 {
            bucket.consume(CHUNK_BYTES);
            let idx = start.elapsed().as_secs_f64() as usize;
            if idx < windows.len() {
                windows[idx] += CHUNK_BYTES as u64;
            }
        }
        for (i, w) in windows.iter().enumerate() {
            assert!(
                (*w as f64) <= target * 1.05,
                "window {i} delivered {w} bytes, above cap"
            );
        }
    }
}
