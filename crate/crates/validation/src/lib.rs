//! Fixtures and reporting shared by the acceptance suite.

use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Piecewise-constant scene of overlapping rectangles on a dim background.
pub fn rectangle_scene(m: usize, n: usize, rects: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::from_element(m, n, 0.1);
    for _ in 0..rects {
        let (i0, j0) = (rng.random_range(0..m - m / 8), rng.random_range(0..n - n / 8));
        let (h, w) = (rng.random_range(m * 3 / 32..m * 7 / 16), rng.random_range(n * 3 / 32..n * 7 / 16));
        let v: f64 = rng.random_range(0.0..1.0);
        for j in j0..(j0 + w).min(n) {
            for i in i0..(i0 + h).min(m) {
                x[(i, j)] = v;
            }
        }
    }
    x
}

/// Normalized odd-length kernel with positive random taps.
pub fn random_kernel(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
}

/// Outcome of one criterion.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }
}

/// Runs criteria in order and writes one line each to `out`.
pub struct Report<W: Write> {
    out: W,
    failures: Vec<String>,
}

impl Report<std::io::Stdout> {
    /// Writes straight to stdout, bypassing the test harness capture.
    pub fn stdout() -> Self {
        Self::new(std::io::stdout())
    }
}

impl<W: Write> Report<W> {
    pub fn new(out: W) -> Self {
        Self { out, failures: Vec::new() }
    }

    /// Times `body`; a run over `limit` fails the criterion regardless of its verdict.
    pub fn run(&mut self, id: &str, title: &str, limit: Option<Duration>, body: impl FnOnce() -> Verdict) {
        let start = Instant::now();
        let verdict = body();
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|l| elapsed <= l);
        let passed = verdict.passed && in_time;
        let budget = match limit {
            Some(l) if !in_time => format!("; over the {:.0?} budget", l),
            _ => String::new(),
        };
        let line = format!(
            "{} [{id}] {title}: {} ({:.2?}{budget})",
            if passed { "PASS" } else { "FAIL" },
            verdict.detail,
            elapsed
        );
        let _ = writeln!(self.out, "{line}");
        let _ = self.out.flush();
        if !passed {
            self.failures.push(id.to_string());
        }
    }

    pub fn note(&mut self, id: &str, text: &str) {
        let _ = writeln!(self.out, "SKIP [{id}] {text}");
    }

    pub fn failures(&self) -> &[String] {
        &self.failures
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_is_deterministic_and_bounded() {
        let a = rectangle_scene(32, 24, 6, 4);
        assert_eq!(a, rectangle_scene(32, 24, 6, 4));
        assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn random_kernel_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = random_kernel(&mut rng, 5);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(k.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn report_tracks_failures() {
        let mut buf = Vec::new();
        let mut r = Report::new(&mut buf);
        r.run("a", "ok", None, || Verdict::new(true, "fine"));
        r.run("b", "bad", None, || Verdict::new(false, "broken"));
        r.run("c", "slow", Some(Duration::ZERO), || {
            std::thread::sleep(Duration::from_millis(2));
            Verdict::new(true, "late")
        });
        r.note("d", "excluded");
        assert_eq!(r.failures(), ["b", "c"]);
        let text = String::from_utf8(buf).unwrap();
        let heads: Vec<&str> = text.lines().map(|l| l.split(' ').next().unwrap()).collect();
        assert_eq!(heads, ["PASS", "FAIL", "FAIL", "SKIP"]);
        assert!(text.contains("over the"));
    }
}
