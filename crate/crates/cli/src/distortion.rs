//! Pointwise sandwich suites on an interior grid of `(0, 1)`.
//!
//! * `bilipschitz-sandwich`: for an `[alpha, beta]` bi-Lipschitz pair,
//!   `ell_g(y, f'(p)) - ell_g(y, f'(y)) = B_f(y, p)` and
//!   `(y-p)^2/(2 beta) <= B_f(y, p) <= (y-p)^2/(2 alpha)`.
//! * `kl-sandwich`: `(y-p)^2/2 <= KL(y||p) <= 2 (y-p)^2 / min(p, 1-p)`.
//! * `cross-entropy-sandwich`: for `y` in `{0, 1}`,
//!   `|y-p| <= CE(y, p) <= 2 |y-p| ln(1/(p(1-p)))`.

use serde::Serialize;
use simlearn::fenchel::{cross_entropy, kl_bernoulli, FenchelPair};

/// Cells count as violations below this slack.
pub const SLACK_TOLERANCE: f64 = -1e-9;
/// Grids coarser than this are reported as low density.
pub const LOW_DENSITY: usize = 10;
pub const DEFAULT_GRID_DENSITY: usize = 100;

pub const BILIPSCHITZ_SANDWICH: &str = "bilipschitz-sandwich";
pub const KL_SANDWICH: &str = "kl-sandwich";
pub const CROSS_ENTROPY_SANDWICH: &str = "cross-entropy-sandwich";

/// Worst cell of one suite on one pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub lemma: String,
    pub pair: String,
    pub cells: usize,
    pub worst_slack: f64,
    pub worst_y: f64,
    pub worst_p: f64,
    /// Which inequality attains the worst slack.
    pub worst_side: String,
    pub pass: bool,
    /// Set when the suite could not be evaluated.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistortionReport {
    pub grid_density: usize,
    pub suites: Vec<SuiteResult>,
    pub warnings: Vec<String>,
}

impl DistortionReport {
    pub fn pass(&self) -> bool {
        self.suites.iter().all(|s| s.pass)
    }

    /// Suite with the smallest slack for each lemma, in first-seen order.
    pub fn worst_per_lemma(&self) -> Vec<&SuiteResult> {
        let mut out: Vec<&SuiteResult> = Vec::new();
        for s in &self.suites {
            match out.iter_mut().find(|o| o.lemma == s.lemma) {
                Some(o) => {
                    if worse(s, o) {
                        *o = s;
                    }
                }
                None => out.push(s),
            }
        }
        out
    }

    /// Text table with one line per suite and one per lemma.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for w in &self.warnings {
            s.push_str(&format!("warning: {w}\n"));
        }
        for r in &self.suites {
            s.push_str(&format!("{} {:<24} {:<36} {}\n", verdict(r.pass), r.lemma, r.pair, describe(r)));
        }
        for r in self.worst_per_lemma() {
            s.push_str(&format!("worst {:<24} {:<36} {}\n", r.lemma, r.pair, describe(r)));
        }
        s.push_str(&format!("overall {}\n", verdict(self.pass())));
        s
    }
}

fn worse(a: &SuiteResult, b: &SuiteResult) -> bool {
    (a.error.is_some() && b.error.is_none()) || (a.error.is_some() == b.error.is_some() && a.worst_slack < b.worst_slack)
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn describe(r: &SuiteResult) -> String {
    match &r.error {
        Some(e) => format!("error: {e}"),
        None => format!(
            "worst slack {:.3e} ({} side) at y={:.6} p={:.6} over {} cells",
            r.worst_slack, r.worst_side, r.worst_y, r.worst_p, r.cells
        ),
    }
}

/// Interior grid `k / (m + 1)` for `k = 1..=m`.
pub fn interior_grid(m: usize) -> Vec<f64> {
    (1..=m).map(|k| k as f64 / (m + 1) as f64).collect()
}

struct Worst {
    slack: f64,
    y: f64,
    p: f64,
    side: &'static str,
    cells: usize,
}

impl Worst {
    fn new() -> Self {
        Worst { slack: f64::INFINITY, y: f64::NAN, p: f64::NAN, side: "none", cells: 0 }
    }

    fn record(&mut self, slack: f64, y: f64, p: f64, side: &'static str) {
        // A NaN slack is a violation.
        let slack = if slack.is_nan() { f64::NEG_INFINITY } else { slack };
        if slack < self.slack {
            *self = Worst { slack, y, p, side, cells: self.cells };
        }
    }

    fn finish(self, lemma: &str, pair: String) -> SuiteResult {
        let slack = if self.cells == 0 { 0.0 } else { self.slack };
        SuiteResult {
            lemma: lemma.to_string(),
            pair,
            cells: self.cells,
            worst_slack: slack,
            worst_y: self.y,
            worst_p: self.p,
            worst_side: self.side.to_string(),
            pass: slack >= SLACK_TOLERANCE,
            error: None,
        }
    }
}

fn failed(lemma: &str, pair: String, error: String) -> SuiteResult {
    SuiteResult {
        lemma: lemma.to_string(),
        pair,
        cells: 0,
        worst_slack: f64::NEG_INFINITY,
        worst_y: f64::NAN,
        worst_p: f64::NAN,
        worst_side: "none".to_string(),
        pass: false,
        error: Some(error),
    }
}

/// Bi-Lipschitz sandwich and loss identity for `pair` with its declared constants.
pub fn bilipschitz_suite(pair: &FenchelPair, m: usize) -> SuiteResult {
    let a = pair.activation();
    if !a.is_bilipschitz() {
        return failed(BILIPSCHITZ_SANDWICH, pair.tag(), format!("`{}` is not bi-Lipschitz", pair.tag()));
    }
    let (alpha, beta) = (a.lipschitz_lower(), a.lipschitz_upper());
    let identity_tolerance = 10.0 * pair.inversion_tolerance();
    let grid = interior_grid(m);
    let mut links = Vec::with_capacity(m);
    for &p in &grid {
        match pair.link(p) {
            Ok(t) => links.push(t),
            Err(e) => return failed(BILIPSCHITZ_SANDWICH, pair.tag(), e.to_string()),
        }
    }
    let mut worst = Worst::new();
    for (i, &y) in grid.iter().enumerate() {
        let opt = pair.loss(y, links[i]);
        for (j, &p) in grid.iter().enumerate() {
            let b = match pair.bregman(y, p) {
                Ok(b) => b,
                Err(e) => return failed(BILIPSCHITZ_SANDWICH, pair.tag(), e.to_string()),
            };
            let sq = (y - p) * (y - p);
            let via_loss = pair.loss(y, links[j]) - opt;
            worst.cells += 1;
            worst.record(identity_tolerance - (via_loss - b).abs(), y, p, "identity");
            worst.record(b - sq / (2.0 * beta), y, p, "lower");
            worst.record(sq / (2.0 * alpha) - b, y, p, "upper");
        }
    }
    worst.finish(BILIPSCHITZ_SANDWICH, pair.tag())
}

pub fn kl_suite(m: usize) -> SuiteResult {
    let grid = interior_grid(m);
    let mut worst = Worst::new();
    for &y in &grid {
        for &p in &grid {
            let kl = kl_bernoulli(y, p);
            let sq = (y - p) * (y - p);
            worst.cells += 1;
            worst.record(kl - 0.5 * sq, y, p, "lower");
            worst.record(2.0 * sq / p.min(1.0 - p) - kl, y, p, "upper");
        }
    }
    worst.finish(KL_SANDWICH, "sigmoid".to_string())
}

pub fn cross_entropy_suite(m: usize) -> SuiteResult {
    let grid = interior_grid(m);
    let mut worst = Worst::new();
    for &y in &[0.0, 1.0] {
        for &p in &grid {
            let ce = cross_entropy(y, p);
            let abs = (y - p).abs();
            worst.cells += 1;
            worst.record(ce - abs, y, p, "lower");
            worst.record(2.0 * abs * (1.0 / (p * (1.0 - p))).ln() - ce, y, p, "upper");
        }
    }
    worst.finish(CROSS_ENTROPY_SANDWICH, "sigmoid".to_string())
}

/// Run all three suites; the bi-Lipschitz suite runs once per pair.
pub fn run(grid_density: usize, pairs: &[FenchelPair]) -> DistortionReport {
    let mut warnings = Vec::new();
    if grid_density < LOW_DENSITY {
        warnings.push(format!(
            "grid density {grid_density} is low ({} cells per suite); the sandwich checks are nearly vacuous",
            grid_density * grid_density
        ));
    }
    let mut suites: Vec<SuiteResult> = pairs.iter().map(|p| bilipschitz_suite(p, grid_density)).collect();
    suites.push(kl_suite(grid_density));
    suites.push(cross_entropy_suite(grid_density));
    DistortionReport { grid_density, suites, warnings }
}
