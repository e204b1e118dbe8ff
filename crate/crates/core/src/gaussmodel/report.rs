use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::gaussmodel::TheoryParams;

/// How a tracked statistic is judged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Rule {
    /// `|statistic − target| ≤ tolerance`.
    Within { tolerance: f64 },
    /// `statistic ≥ target`.
    AtLeast,
    /// `sign(statistic) == target` where the target is ±1.
    SignEquals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub statistic: String,
    #[serde(flatten)]
    pub rule: Rule,
    pub pass: bool,
}

/// Outcome of one Monte Carlo verification.
///
/// `statistics`, `targets` and `standard_errors` are keyed by statistic name; every entry
/// of `checks` names a statistic and the rule it must satisfy. A statistic without a check
/// is informational.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub theorem: String,
    pub params: TheoryParams,
    pub n: usize,
    pub statistics: BTreeMap<String, f64>,
    pub targets: BTreeMap<String, f64>,
    pub standard_errors: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl TheoremReport {
    pub fn statistic(&self, name: &str) -> Option<f64> {
        self.statistics.get(name).copied()
    }

    pub fn target(&self, name: &str) -> Option<f64> {
        self.targets.get(name).copied()
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.statistic == name)
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    /// One line per check, for terminal output.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} [{}] n={}\n",
            self.theorem,
            if self.pass { "PASS" } else { "FAIL" },
            self.n
        );
        for c in &self.checks {
            let value = self.statistics[&c.statistic];
            let target = self.targets.get(&c.statistic).copied().unwrap_or(f64::NAN);
            let rule = match &c.rule {
                Rule::Within { tolerance } => format!("|x - {target:.6}| <= {tolerance:.3e}"),
                Rule::AtLeast => format!(">= {target}"),
                Rule::SignEquals => format!("sign == {target:+}"),
            };
            s.push_str(&format!(
                "  {:<5} {:<34} {:>12.6}  {}\n",
                if c.pass { "ok" } else { "FAIL" },
                c.statistic,
                value,
                rule
            ));
        }
        s
    }
}

pub(crate) struct ReportBuilder {
    report: TheoremReport,
}

impl ReportBuilder {
    pub fn new(theorem: &str, params: &TheoryParams, n: usize) -> Self {
        Self {
            report: TheoremReport {
                theorem: theorem.to_string(),
                params: *params,
                n,
                statistics: BTreeMap::new(),
                targets: BTreeMap::new(),
                standard_errors: BTreeMap::new(),
                checks: Vec::new(),
                pass: true,
            },
        }
    }

    pub fn info(
        &mut self,
        name: &str,
        value: f64,
        target: Option<f64>,
        se: Option<f64>,
    ) -> &mut Self {
        self.report.statistics.insert(name.to_string(), value);
        if let Some(t) = target {
            self.report.targets.insert(name.to_string(), t);
        }
        if let Some(se) = se {
            self.report.standard_errors.insert(name.to_string(), se);
        }
        self
    }

    fn push(&mut self, name: &str, rule: Rule, pass: bool) {
        self.report.pass &= pass;
        self.report.checks.push(Check {
            statistic: name.to_string(),
            rule,
            pass,
        });
    }

    pub fn within(
        &mut self,
        name: &str,
        value: f64,
        target: f64,
        se: f64,
        tolerance: f64,
    ) -> &mut Self {
        self.info(name, value, Some(target), Some(se));
        let pass = (value - target).abs() <= tolerance;
        self.push(name, Rule::Within { tolerance }, pass);
        self
    }

    pub fn at_least(&mut self, name: &str, value: f64, threshold: f64, se: f64) -> &mut Self {
        self.info(name, value, Some(threshold), Some(se));
        self.push(name, Rule::AtLeast, value >= threshold);
        self
    }

    pub fn sign_equals(&mut self, name: &str, value: f64, sign: f64, se: f64) -> &mut Self {
        self.info(name, value, Some(sign), Some(se));
        let pass = value != 0.0 && value.signum() == sign.signum();
        self.push(name, Rule::SignEquals, pass);
        self
    }

    pub fn finish(self) -> TheoremReport {
        self.report
    }
}
