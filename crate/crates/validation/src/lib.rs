//! Pass/fail bookkeeping for the acceptance run in `tests/acceptance.rs`.

use std::fmt;
use std::time::Duration;

/// Outcome of one criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<28} {} [{:.1}s]",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

/// Collects checks in run order.
#[derive(Debug, Default)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn push(&mut self, check: Check) {
        println!("{check}");
        self.checks.push(check);
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn summary(&self) -> String {
        format!(
            "{} criteria: {} passed, {} failed",
            self.checks.len(),
            self.checks.len() - self.failures().len(),
            self.failures().len()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_counts_failures() {
        let mut r = Report::default();
        for pass in [true, false, true] {
            r.push(Check {
                name: "x".into(),
                pass,
                detail: String::new(),
                elapsed: Duration::ZERO,
            });
        }
        assert_eq!(r.summary(), "3 criteria: 2 passed, 1 failed");
        assert!(r.checks[1].to_string().starts_with("FAIL x"));
    }
}
