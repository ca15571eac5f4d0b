use serde::{Deserialize, Serialize};

use super::synth::SyntheticScene;
use super::{fuse, FusionConfig, FusionInputs};
use crate::error::Result;
use crate::metrics::{evaluate, fmt_value, Metric, MetricReport};

/// Accuracy of OL-U, OL-RC and OBSUM against the prediction-date truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepwiseReport {
    pub olu: MetricReport,
    pub olrc: MetricReport,
    pub obsum: MetricReport,
}

impl StepwiseReport {
    pub fn stages(&self) -> [(&'static str, &MetricReport); 3] {
        [
            ("OL-U", &self.olu),
            ("OL-RC", &self.olrc),
            ("OBSUM", &self.obsum),
        ]
    }

    /// Band-mean gain of stage `i` (1 or 2) over stage `i - 1`.
    pub fn gain(&self, metric: Metric, stage: usize) -> Option<f64> {
        let st = self.stages();
        let prev = metric.of(&st[stage - 1].1.mean)?;
        let cur = metric.of(&st[stage].1.mean)?;
        Some(metric.gain(prev, cur))
    }

    /// Band-mean table with the gain over the previous stage in parentheses.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<6} {:>12} {:>24} {:>24}\n",
            "metric", "OL-U", "OL-RC (gain)", "OBSUM (gain)"
        );
        for metric in Metric::ALL {
            let mut line = format!(
                "{:<6} {:>12}",
                metric.name(),
                fmt_value(metric.of(&self.olu.mean))
            );
            for (i, (_, rep)) in self.stages().iter().enumerate().skip(1) {
                let cell = format!(
                    "{} ({})",
                    fmt_value(metric.of(&rep.mean)),
                    fmt_value(self.gain(metric, i))
                );
                line.push_str(&format!(" {cell:>24}"));
            }
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    /// One row per metric: the band-mean value of each stage and the two gains.
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        let mut out = String::from("metric,olu,olrc,olrc_gain,obsum,obsum_gain\n");
        for metric in Metric::ALL {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                metric.name(),
                cell(metric.of(&self.olu.mean)),
                cell(metric.of(&self.olrc.mean)),
                cell(self.gain(metric, 1)),
                cell(metric.of(&self.obsum.mean)),
                cell(self.gain(metric, 2)),
            ));
        }
        out
    }
}

/// Fuses a synthetic scene with its true base-date maps withheld (the
/// configured preprocessing runs) and scores each stage.
pub fn stepwise_report(scene: &SyntheticScene, cfg: &FusionConfig) -> Result<StepwiseReport> {
    let cfg = FusionConfig {
        emit_intermediates: true,
        ..cfg.clone()
    };
    let out = fuse(&FusionInputs::new(&scene.fine_tb, &scene.coarse_tp), &cfg)?;
    let inter = out.intermediates.expect("intermediates requested");
    Ok(StepwiseReport {
        olu: evaluate(&inter.olu, &scene.fine_tp)?,
        olrc: evaluate(&inter.olrc, &scene.fine_tp)?,
        obsum: evaluate(&out.obsum, &scene.fine_tp)?,
    })
}
