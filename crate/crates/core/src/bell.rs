//! Clauser-Horne statistic: ideal predictions, evaluation from measured
//! probabilities, and violation verdicts against the local bound of 1.

use std::fmt;

use crate::analysis::{Estimate, NormalizedProbability};
use crate::error::{Error, Result};
use crate::model::{ch_settings, cos2_between, cos2_deg, relative_angle, Angle};

/// Local-realist bound on the normalized CH statistic.
pub const CH_BOUND: f64 = 1.0;

/// Probabilities entering the four-setting CH expression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChInputs {
    pub p12_ab: Estimate,
    pub p12_ab_prime: Estimate,
    pub p12_a_prime_b: Estimate,
    pub p12_a_prime_b_prime: Estimate,
    pub p1_a_prime: Estimate,
    pub p2_b: Estimate,
}

impl ChInputs {
    fn all(&self) -> [(&'static str, Estimate); 6] {
        [
            ("p12(a,b)", self.p12_ab),
            ("p12(a,b')", self.p12_ab_prime),
            ("p12(a',b)", self.p12_a_prime_b),
            ("p12(a',b')", self.p12_a_prime_b_prime),
            ("p1(a')", self.p1_a_prime),
            ("p2(b)", self.p2_b),
        ]
    }

    /// Probabilities may dip slightly below zero after background subtraction.
    pub fn validate(&self) -> Result<()> {
        for (name, e) in self.all() {
            if !(-0.05..=1.05).contains(&e.value) {
                return Err(Error::Domain(format!(
                    "{name} = {} lies outside [-0.05, 1.05]",
                    e.value
                )));
            }
            if !(e.sigma >= 0.0) {
                return Err(Error::Domain(format!("{name} has negative uncertainty")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChVerdict {
    pub s_value: f64,
    pub uncertainty: f64,
    pub violated: bool,
    /// `(S - 1) / σ`; infinite when σ = 0 and S ≠ 1.
    pub sigma_above_bound: f64,
}

impl ChVerdict {
    pub fn new(s_value: f64, uncertainty: f64) -> Self {
        let excess = s_value - CH_BOUND;
        let sigma_above_bound = if uncertainty > 0.0 {
            excess / uncertainty
        } else if excess == 0.0 {
            0.0
        } else {
            excess.signum() * f64::INFINITY
        };
        ChVerdict {
            s_value,
            uncertainty,
            violated: excess > 0.0,
            sigma_above_bound,
        }
    }
}

impl fmt::Display for ChVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "S = {:.4} ± {:.4} ({:+.1} σ from the bound): {}",
            self.s_value,
            self.uncertainty,
            self.sigma_above_bound,
            if self.violated {
                "VIOLATED"
            } else {
                "satisfied"
            }
        )
    }
}

fn ratio_verdict(num: f64, var_num: f64, den: f64, var_den: f64) -> Result<ChVerdict> {
    if !(den > 0.0) {
        return Err(Error::Precondition(format!(
            "CH denominator p1(a') + p2(b) = {den} is not positive"
        )));
    }
    let s = num / den;
    let var = var_num / (den * den) + s * s * var_den / (den * den);
    Ok(ChVerdict::new(s, var.sqrt()))
}

/// `[p12(a,b) - p12(a,b') + p12(a',b) + p12(a',b')] / [p1(a') + p2(b)]`
/// with first-order propagation of independent input uncertainties.
pub fn ch_statistic(inputs: &ChInputs) -> Result<ChVerdict> {
    inputs.validate()?;
    let num = inputs.p12_ab.value - inputs.p12_ab_prime.value
        + inputs.p12_a_prime_b.value
        + inputs.p12_a_prime_b_prime.value;
    let var_num = [
        inputs.p12_ab,
        inputs.p12_ab_prime,
        inputs.p12_a_prime_b,
        inputs.p12_a_prime_b_prime,
    ]
    .iter()
    .map(|e| e.sigma * e.sigma)
    .sum();
    let den = inputs.p1_a_prime.value + inputs.p2_b.value;
    let var_den = inputs.p1_a_prime.sigma.powi(2) + inputs.p2_b.sigma.powi(2);
    ratio_verdict(num, var_num, den, var_den)
}

/// Ideal joint probability for analyzers at relative angle `theta_cd` when
/// the sources are prepared at relative angle `theta_ab`:
/// `cos²(theta_cd - theta_ab)`.
pub fn p12_ideal(theta_cd: Angle, theta_ab: Angle) -> f64 {
    cos2_between(theta_cd, theta_ab)
}

/// Ideal inputs for the equal-spacing geometry with both sources prepared
/// along `a` (the x axis): joint probabilities follow the relative analyzer
/// angle and the singles follow each analyzer's angle to the preparation axis.
pub fn ideal_inputs(theta: Angle) -> Result<ChInputs> {
    let s = ch_settings(theta)?;
    let joint = |x: Angle, y: Angle| Estimate::exact(p12_ideal(relative_angle(x, y), Angle::ZERO));
    Ok(ChInputs {
        p12_ab: joint(s.a, s.b),
        p12_ab_prime: joint(s.a, s.b_prime),
        p12_a_prime_b: joint(s.a_prime, s.b),
        p12_a_prime_b_prime: joint(s.a_prime, s.b_prime),
        p1_a_prime: Estimate::exact(cos2_between(s.a_prime, s.a)),
        p2_b: Estimate::exact(cos2_between(s.b, s.a)),
    })
}

/// `S(θ) = [3cos²θ - cos²3θ] / [cos²2θ + cos²θ]`
pub fn s_of_theta_ideal(theta: Angle) -> f64 {
    let c2 = |k: f64| cos2_deg(k * theta.degrees());
    (3.0 * c2(1.0) - c2(3.0)) / (c2(2.0) + c2(1.0))
}

/// Maximal sub-intervals of `(0°, 60°]` on which the ideal S(θ) exceeds the
/// bound, located by scanning at `step_deg` and refining each crossing by
/// bisection.
pub fn violation_region(step_deg: f64) -> Vec<(f64, f64)> {
    let f = |t: f64| s_of_theta_ideal(Angle::from_degrees(t)) - CH_BOUND;
    let crossing = |mut lo: f64, mut hi: f64| {
        let lo_sign = f(lo) > 0.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) > 0.0) == lo_sign {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let n = (60.0 / step_deg).ceil() as usize;
    let mut regions = Vec::new();
    let mut start: Option<f64> = None;
    let mut prev_t = 0.0;
    let mut prev_in = false;
    for i in 1..=n {
        let t = (i as f64 * step_deg).min(60.0);
        let inside = f(t) > 0.0;
        if inside && !prev_in {
            start = Some(if i == 1 { 0.0 } else { crossing(prev_t, t) });
        } else if !inside && prev_in {
            regions.push((start.take().expect("open region"), crossing(prev_t, t)));
        }
        prev_t = t;
        prev_in = inside;
    }
    if let Some(s) = start {
        regions.push((s, 60.0));
    }
    regions
}

/// How the shared θ = 0 normalization enters the S uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Propagation {
    /// All four probabilities treated as independent.
    #[default]
    Uncorrelated,
    /// `p12(θ)` and `p12(3θ)` share one reference count, whose relative
    /// error then scales the whole numerator.
    SharedReference,
}

/// Normalized probabilities needed for S(θ) from measurement.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SMeasurements {
    pub p12_theta: Option<NormalizedProbability>,
    pub p12_3theta: Option<NormalizedProbability>,
    /// Singles of detector 1 with its analyzer at 2θ.
    pub p1_2theta: Option<NormalizedProbability>,
    /// Singles of detector 2 with its analyzer at θ.
    pub p2_theta: Option<NormalizedProbability>,
}

/// `S(θ) = [3 p12(θ) - p12(3θ)] / [p1(2θ) + p2(θ)]` from measured values.
pub fn s_of_theta_measured(
    theta: Angle,
    m: &SMeasurements,
    propagation: Propagation,
) -> Result<ChVerdict> {
    let t = theta.degrees();
    let missing: Vec<String> = [
        (m.p12_theta.is_none(), format!("p12({t}°)")),
        (m.p12_3theta.is_none(), format!("p12({}°)", 3.0 * t)),
        (m.p1_2theta.is_none(), format!("p1({}°)", 2.0 * t)),
        (m.p2_theta.is_none(), format!("p2({t}°)")),
    ]
    .into_iter()
    .filter_map(|(absent, name)| absent.then_some(name))
    .collect();
    if !missing.is_empty() {
        return Err(Error::Precondition(format!(
            "missing measurements for S({t}°): {}",
            missing.join(", ")
        )));
    }
    let (p1t, p3t, p1, p2) = (
        m.p12_theta.unwrap(),
        m.p12_3theta.unwrap(),
        m.p1_2theta.unwrap(),
        m.p2_theta.unwrap(),
    );
    let num = 3.0 * p1t.value - p3t.value;
    let var_num = match propagation {
        Propagation::Uncorrelated => 9.0 * p1t.sigma.powi(2) + p3t.sigma.powi(2),
        Propagation::SharedReference => {
            9.0 * p1t.sigma_numerator.powi(2)
                + p3t.sigma_numerator.powi(2)
                + (num * p1t.reference_rel).powi(2)
        }
    };
    let den = p1.value + p2.value;
    let var_den = p1.sigma.powi(2) + p2.sigma.powi(2);
    ratio_verdict(num, var_num, den, var_den)
}
