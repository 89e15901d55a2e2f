//! Stage: turn the evaluation summary into the final accuracy table and a
//! static bar chart.

use std::fs;

use crate::config::Experiment;
use crate::PipelineError;

use super::evaluate::{results_path, ResultsFile};
use super::{read_json, rel, report_dir};

fn bar_chart(bars: &[(String, f64)]) -> String {
    let bar_w = 46.0;
    let gap = 18.0;
    let left = 56.0;
    let top = 20.0;
    let plot_h = 240.0;
    let width = left + bars.len() as f64 * (bar_w + gap) + 20.0;
    let height = top + plot_h + 80.0;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\">\n<rect width=\"100%\" height=\"100%\" \
         fill=\"white\"/>\n"
    );
    for i in 0..=4 {
        let v = i as f64 * 0.25;
        let y = top + plot_h * (1.0 - v);
        s.push_str(&format!(
            "<line x1=\"{left:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#cccccc\" \
             stroke-width=\"1\"/>\n",
            width - 12.0
        ));
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" \
             text-anchor=\"end\">{v:.2}</text>\n",
            left - 6.0,
            y + 3.0
        ));
    }
    for (i, (name, acc)) in bars.iter().enumerate() {
        let x = left + i as f64 * (bar_w + gap) + gap / 2.0;
        let h = plot_h * acc.clamp(0.0, 1.0);
        let y = top + plot_h - h;
        let mid = x + bar_w / 2.0;
        s.push_str(&format!(
            "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{bar_w:.1}\" height=\"{h:.1}\" \
             fill=\"#4878a8\"/>\n"
        ));
        s.push_str(&format!(
            "<text x=\"{mid:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" \
             text-anchor=\"middle\">{acc:.4}</text>\n",
            y - 4.0
        ));
        let label_y = top + plot_h + 14.0;
        s.push_str(&format!(
            "<text x=\"{mid:.1}\" y=\"{label_y:.1}\" font-family=\"sans-serif\" font-size=\"9\" \
             text-anchor=\"end\" transform=\"rotate(-35 {mid:.1} {label_y:.1})\">{name}</text>\n"
        ));
    }
    s.push_str("</svg>\n");
    s
}

pub fn run(exp: &Experiment) -> Result<Vec<String>, PipelineError> {
    let results: ResultsFile = read_json(&results_path(exp))?;
    if results.config_hash != exp.hash {
        return Err(PipelineError::ConfigChanged {
            stage: "report".into(),
            recorded: results.config_hash,
            current: exp.hash.clone(),
        });
    }
    let dir = report_dir(exp);
    fs::create_dir_all(&dir)?;

    // One table: convolutional models score per patch and per voted segment,
    // fusion pairs make one decision per segment (the voting column).
    let mut csv = String::from("system,features,sample_level,voting\n");
    let mut bars: Vec<(String, f64)> = Vec::new();
    let preset = &results.network;
    for m in &results.models {
        let suffix = if m.flavor == "basic" { String::new() } else { format!("-{}", m.flavor) };
        let name = format!("{preset}-{}{suffix}", m.kind);
        csv.push_str(&format!(
            "{name},,{:.4},{:.4}\n",
            m.sample_accuracy, m.voting_accuracy
        ));
        bars.push((name, m.voting_accuracy));
    }
    for f in &results.fusion {
        let name = format!("svm-{}", f.pair);
        csv.push_str(&format!("{name},{},,{:.4}\n", f.feature_source, f.test_accuracy));
        bars.push((name, f.test_accuracy));
    }

    let csv_path = dir.join("accuracy.csv");
    fs::write(&csv_path, csv)?;
    let svg_path = dir.join("accuracy.svg");
    fs::write(&svg_path, bar_chart(&bars))?;
    Ok(vec![rel(exp, &csv_path), rel(exp, &svg_path)])
}
