use serde::{Deserialize, Serialize};

use super::config::SuiteConfig;
use super::suite::{run_suite, RunOptions, Suite, SuiteReport};
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationMode {
    /// The frontier planner alone.
    BaseOnly,
    /// Language prior only.
    Prior,
    /// Imagined value only.
    Imagination,
    /// Imagined value and prior.
    Full,
}

impl AblationMode {
    pub const ALL: [AblationMode; 4] = [Self::BaseOnly, Self::Prior, Self::Imagination, Self::Full];

    pub fn name(self) -> &'static str {
        match self {
            Self::BaseOnly => "base-only",
            Self::Prior => "+prior",
            Self::Imagination => "+imagination",
            Self::Full => "full",
        }
    }

    /// Zeroes the fusion weights the mode leaves out.
    pub fn apply(self, cfg: &SuiteConfig) -> SuiteConfig {
        let mut c = cfg.clone();
        let f = &mut c.planner.fusion;
        match self {
            Self::BaseOnly => {
                f.lambda1 = 0.0;
                f.lambda2 = 0.0;
            }
            Self::Prior => f.lambda1 = 0.0,
            Self::Imagination => f.lambda2 = 0.0,
            Self::Full => {}
        }
        c
    }
}

pub fn ablate(
    suite: &Suite,
    cfg: &SuiteConfig,
    modes: &[AblationMode],
    opts: &RunOptions,
) -> Result<Vec<(AblationMode, SuiteReport)>, HarnessError> {
    modes.iter().map(|&m| Ok((m, run_suite(suite, &m.apply(cfg), opts)?))).collect()
}

/// `mode,TL,NE,SR,SPL,fallback_rate`, SR and SPL in percent.
pub fn ablation_csv(rows: &[(AblationMode, SuiteReport)]) -> String {
    let mut out = String::from("mode,TL,NE,SR,SPL,fallback_rate\n");
    for (m, r) in rows {
        let a = &r.aggregates;
        out.push_str(&format!(
            "{},{:.3},{:.3},{:.1},{:.1},{:.4}\n",
            m.name(),
            a.tl,
            a.ne,
            100.0 * a.sr,
            100.0 * a.spl,
            a.fallback_rate
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub theta: f64,
    pub sr: f64,
    pub spl: f64,
    pub fallback_rate: f64,
    pub report_hash: String,
}

/// Runs the suite in +imagination mode at every gate threshold.
pub fn sweep_theta(
    suite: &Suite,
    cfg: &SuiteConfig,
    thetas: &[f64],
    opts: &RunOptions,
) -> Result<Vec<SweepPoint>, HarnessError> {
    thetas
        .iter()
        .map(|&theta| {
            let mut c = AblationMode::Imagination.apply(cfg);
            c.planner.fusion.theta = theta;
            let r = run_suite(suite, &c, opts)?;
            Ok(SweepPoint {
                theta,
                sr: r.aggregates.sr,
                spl: r.aggregates.spl,
                fallback_rate: r.aggregates.fallback_rate,
                report_hash: r.hash(),
            })
        })
        .collect()
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("theta,SR,SPL,fallback_rate\n");
    for p in points {
        out.push_str(&format!(
            "{:.2},{:.1},{:.1},{:.4}\n",
            p.theta,
            100.0 * p.sr,
            100.0 * p.spl,
            p.fallback_rate
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_zero_the_right_weights() {
        let c = SuiteConfig::reference();
        let f = |m: AblationMode| {
            let p = m.apply(&c).planner.fusion;
            (p.lambda1, p.lambda2)
        };
        let (l1, l2) = (c.planner.fusion.lambda1, c.planner.fusion.lambda2);
        assert_eq!(f(AblationMode::BaseOnly), (0.0, 0.0));
        assert_eq!(f(AblationMode::Prior), (0.0, l2));
        assert_eq!(f(AblationMode::Imagination), (l1, 0.0));
        assert_eq!(f(AblationMode::Full), (l1, l2));
    }
}
