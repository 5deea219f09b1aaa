//! Adaptive feedback: prediction-to-intervention mapping, closed-loop
//! threshold recalibration, at-risk flagging, and psychometric trend
//! reports.

use serde::{Deserialize, Serialize};

use crate::corpus::Dimension;
use crate::error::{Error, Result};
use crate::fusion::Prediction;

/// Decision thresholds on per-dimension Negative probability, plus the
/// recalibration rule parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    /// Trigger thresholds, `Dimension::ALL` order.
    pub thresholds: [f64; 4],
    /// Recalibration step.
    pub delta: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    /// Target improvement rate.
    pub target_rate: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            thresholds: [0.5; 4],
            delta: 0.05,
            lower_bound: 0.2,
            upper_bound: 0.8,
            target_rate: 0.5,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        for (d, &t) in Dimension::ALL.iter().zip(&self.thresholds) {
            if t < self.lower_bound || t > self.upper_bound {
                return Err(Error::Config(format!(
                    "threshold for {} = {t} outside [{}, {}]",
                    d.name(),
                    self.lower_bound,
                    self.upper_bound
                )));
            }
        }
        Ok(())
    }

    pub fn threshold(&self, d: Dimension) -> f64 {
        self.thresholds[d.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InterventionCategory {
    CognitiveSupport,
    MotivationalNudge,
    WellBeingCue,
    NoAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Urgency {
    Low,
    High,
}

/// A selected intervention with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct InterventionPlan {
    pub category: InterventionCategory,
    pub message: String,
    pub urgency: Urgency,
    /// Every dimension whose Negative probability exceeded its threshold.
    pub triggering: Vec<Dimension>,
}

/// Margin above the threshold that escalates urgency to High.
pub const HIGH_URGENCY_MARGIN: f64 = 0.25;

fn category_message(category: InterventionCategory, kg_prompt: &str) -> String {
    let lead = match category {
        InterventionCategory::CognitiveSupport => {
            "Let's revisit the concept together with a short walkthrough and a worked example."
        }
        InterventionCategory::MotivationalNudge => {
            "You have made real progress this week; one more practice round will lock it in."
        }
        InterventionCategory::WellBeingCue => {
            "Consider a short break and a slow breath; the material will still be here after."
        }
        InterventionCategory::NoAction => return String::new(),
    };
    if kg_prompt.is_empty() {
        lead.to_string()
    } else {
        format!("{lead} [context: {kg_prompt}]")
    }
}

/// Map a prediction to an intervention. Fixed priority: cognitive >
/// motivational > well-being; urgency is High when the deciding
/// probability clears the threshold by more than 0.25.
pub fn select_intervention(
    prediction: &Prediction,
    policy: &PolicyConfig,
    kg_prompt: &str,
) -> InterventionPlan {
    let triggering: Vec<Dimension> = Dimension::ALL
        .into_iter()
        .filter(|&d| prediction.negative_prob(d) > policy.threshold(d))
        .collect();

    let deciding: Option<(InterventionCategory, f64, f64)> = if triggering
        .contains(&Dimension::Understanding)
    {
        Some((
            InterventionCategory::CognitiveSupport,
            prediction.negative_prob(Dimension::Understanding),
            policy.threshold(Dimension::Understanding),
        ))
    } else if triggering.contains(&Dimension::Motivation) || triggering.contains(&Dimension::Engagement)
    {
        // the stronger of the two motivational-family signals decides urgency
        let m = prediction.negative_prob(Dimension::Motivation);
        let e = prediction.negative_prob(Dimension::Engagement);
        let (p, th) = if triggering.contains(&Dimension::Motivation)
            && (!triggering.contains(&Dimension::Engagement) || m >= e)
        {
            (m, policy.threshold(Dimension::Motivation))
        } else {
            (e, policy.threshold(Dimension::Engagement))
        };
        Some((InterventionCategory::MotivationalNudge, p, th))
    } else if triggering.contains(&Dimension::Stress) {
        Some((
            InterventionCategory::WellBeingCue,
            prediction.negative_prob(Dimension::Stress),
            policy.threshold(Dimension::Stress),
        ))
    } else {
        None
    };

    match deciding {
        Some((category, p, threshold)) => InterventionPlan {
            category,
            message: category_message(category, kg_prompt),
            urgency: if p > threshold + HIGH_URGENCY_MARGIN {
                Urgency::High
            } else {
                Urgency::Low
            },
            triggering,
        },
        None => InterventionPlan {
            category: InterventionCategory::NoAction,
            message: String::new(),
            urgency: Urgency::Low,
            triggering,
        },
    }
}

/// One intervention outcome: the dimension that triggered it and whether
/// the follow-up prediction improved (Negative probability decreased).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterventionOutcome {
    pub dimension: Dimension,
    pub improved: bool,
}

/// Closed-loop threshold recalibration over the last outcome window.
/// Per dimension: improvement rate below the target lowers the threshold
/// by delta (intervene earlier); rate above target + 0.2 raises it;
/// thresholds never leave [lower, upper]. An empty window changes
/// nothing.
pub fn recalibrate(policy: &PolicyConfig, outcome_window: &[InterventionOutcome]) -> PolicyConfig {
    let mut next = policy.clone();
    if outcome_window.is_empty() {
        return next;
    }
    for d in Dimension::ALL {
        let outcomes: Vec<&InterventionOutcome> = outcome_window
            .iter()
            .filter(|o| o.dimension == d)
            .collect();
        if outcomes.is_empty() {
            continue;
        }
        let rate = outcomes.iter().filter(|o| o.improved).count() as f64 / outcomes.len() as f64;
        let t = &mut next.thresholds[d.index()];
        if rate < policy.target_rate {
            *t = (*t - policy.delta).max(policy.lower_bound);
        } else if rate > policy.target_rate + 0.2 {
            *t = (*t + policy.delta).min(policy.upper_bound);
        }
    }
    next
}

/// Alert criteria for at-risk flagging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlertCriteria {
    /// Sliding window length in predictions.
    pub window: usize,
    /// Mean Negative-probability threshold.
    pub threshold: f64,
}

impl Default for AlertCriteria {
    fn default() -> Self {
        AlertCriteria {
            window: 3,
            threshold: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlertRecord {
    pub student_id: String,
    /// Inclusive session-index range covered by the merged windows.
    pub window: (usize, usize),
    pub reason: String,
    /// Mean Negative probabilities (stress, motivation) over the span.
    pub evidence: [f64; 2],
}

/// Flag sustained negative stress or motivation: any sliding window whose
/// mean Negative probability reaches the threshold qualifies, and
/// overlapping windows merge into one alert spanning their union.
pub fn flag_at_risk(
    student_id: &str,
    predictions: &[Prediction],
    criteria: &AlertCriteria,
) -> Vec<AlertRecord> {
    let w = criteria.window;
    if w == 0 || predictions.len() < w {
        return Vec::new();
    }
    let dims = [Dimension::Stress, Dimension::Motivation];
    let mut qualifying: Vec<(usize, usize, [bool; 2])> = Vec::new();
    for start in 0..=(predictions.len() - w) {
        let mut hit = [false; 2];
        for (i, &d) in dims.iter().enumerate() {
            let mean: f64 = predictions[start..start + w]
                .iter()
                .map(|p| p.negative_prob(d))
                .sum::<f64>()
                / w as f64;
            hit[i] = mean >= criteria.threshold;
        }
        if hit[0] || hit[1] {
            qualifying.push((start, start + w - 1, hit));
        }
    }

    // merge overlapping windows into maximal disjoint spans
    let mut alerts = Vec::new();
    let mut idx = 0;
    while idx < qualifying.len() {
        let (start, mut end, mut hits) = qualifying[idx];
        let mut next = idx + 1;
        while next < qualifying.len() && qualifying[next].0 <= end {
            end = end.max(qualifying[next].1);
            hits[0] |= qualifying[next].2[0];
            hits[1] |= qualifying[next].2[1];
            next += 1;
        }
        let mut evidence = [0.0; 2];
        for (i, &d) in dims.iter().enumerate() {
            evidence[i] = predictions[start..=end]
                .iter()
                .map(|p| p.negative_prob(d))
                .sum::<f64>()
                / (end - start + 1) as f64;
        }
        let mut reasons = Vec::new();
        if hits[0] {
            reasons.push("sustained negative stress");
        }
        if hits[1] {
            reasons.push("sustained negative motivation");
        }
        alerts.push(AlertRecord {
            student_id: student_id.to_string(),
            window: (start, end),
            reason: reasons.join(" and "),
            evidence,
        });
        idx = next;
    }
    alerts
}

// ---------------------------------------------------------------------------
// Psychometric trends
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Instrument {
    /// Perceived Stress Scale
    PSS,
    /// State-Trait Anxiety Inventory
    STAI,
    /// Academic Motivation Scale
    AMS,
}

impl Instrument {
    pub fn label(self) -> &'static str {
        match self {
            Instrument::PSS => "PSS (Stress)",
            Instrument::STAI => "STAI (Anxiety)",
            Instrument::AMS => "AMS (Motivation)",
        }
    }
}

/// Scores at baseline (T0), midpoint (T1), post-study (T2), each with a
/// dispersion value.
#[derive(Debug, Clone, PartialEq)]
pub struct PsychometricSeries {
    pub instrument: Instrument,
    pub values: Vec<(f64, f64)>,
}

/// Signed percent change 100 * (post - pre) / pre.
pub fn percent_change(pre: f64, post: f64) -> Result<f64> {
    if pre == 0.0 {
        return Err(Error::Report("percent change from zero is undefined".into()));
    }
    Ok(100.0 * (post - pre) / pre)
}

/// Rendered trend report: a table of (measure, T0, T2, change%) rows and
/// a standalone SVG line chart, both byte-deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendReport {
    pub table: String,
    pub svg: String,
}

pub fn trend_report(series: &[PsychometricSeries]) -> Result<TrendReport> {
    for s in series {
        if s.values.len() < 2 {
            return Err(Error::Report(format!(
                "{} has {} time points; need at least 2",
                s.instrument.label(),
                s.values.len()
            )));
        }
    }

    let mut table = String::from("| Measure | T0 (Pre) | T2 (Post) | Change (%) |\n|---|---|---|---|\n");
    for s in series {
        let (t0, t0_sd) = s.values[0];
        let (t_end, t_end_sd) = *s.values.last().unwrap();
        let change = percent_change(t0, t_end)?;
        table.push_str(&format!(
            "| {} | {:.1} ± {:.1} | {:.1} ± {:.1} | {:+.1}% |\n",
            s.instrument.label(),
            t0,
            t0_sd,
            t_end,
            t_end_sd,
            change
        ));
    }

    Ok(TrendReport {
        svg: render_svg(series),
        table,
    })
}

fn render_svg(series: &[PsychometricSeries]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const MARGIN: f64 = 50.0;
    let colors = ["#c0392b", "#2980b9", "#27ae60"];

    let max_val = series
        .iter()
        .flat_map(|s| s.values.iter().map(|(v, _)| *v))
        .fold(1.0f64, f64::max);
    let max_len = series.iter().map(|s| s.values.len()).max().unwrap_or(2);

    let x = |i: usize| MARGIN + (W - 2.0 * MARGIN) * i as f64 / (max_len - 1).max(1) as f64;
    let y = |v: f64| H - MARGIN - (H - 2.0 * MARGIN) * v / (max_val * 1.1);

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    );
    svg.push_str(&format!(
        "  <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "  <line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"#555\"/>\n  <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"#555\"/>\n",
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN,
        t = MARGIN
    ));
    for (i, label) in ["T0", "T1", "T2"].iter().enumerate().take(max_len) {
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">{label}</text>\n",
            x(i),
            H - MARGIN + 18.0
        ));
    }
    for (si, s) in series.iter().enumerate() {
        let points: Vec<String> = s
            .values
            .iter()
            .enumerate()
            .map(|(i, (v, _))| format!("{:.1},{:.1}", x(i), y(*v)))
            .collect();
        let color = colors[si % colors.len()];
        svg.push_str(&format!(
            "  <polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            points.join(" ")
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" fill=\"{color}\">{}</text>\n",
            W - MARGIN + 4.0,
            y(s.values.last().unwrap().0),
            s.instrument.label()
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// The study's reported pre/mid/post psychometric scores, shipped as a
/// report fixture (midpoints are linear interpolations).
pub fn study_fixture() -> Vec<PsychometricSeries> {
    vec![
        PsychometricSeries {
            instrument: Instrument::PSS,
            values: vec![(22.4, 5.1), (20.25, 4.9), (18.1, 4.7)],
        },
        PsychometricSeries {
            instrument: Instrument::STAI,
            values: vec![(47.3, 6.8), (43.4, 6.45), (39.5, 6.1)],
        },
        PsychometricSeries {
            instrument: Instrument::AMS,
            values: vec![(18.7, 4.2), (21.15, 4.55), (23.6, 4.9)],
        },
    ]
}
