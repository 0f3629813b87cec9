//! Temporary diagnostic (not part of the suite).

use rayon::prelude::*;
use wipin_core::classifier::train_identifier;
use wipin_core::eval::{evaluate_rejection, evaluate_volume_sweep, run_pipeline, PipelineConfig};
use wipin_core::features::FeatureVector;
use wipin_core::simulator::{generate_cohort, NoisePreset};

fn quantiles(mut v: Vec<f64>) -> (f64, f64, f64, f64, f64) {
    v.sort_by(f64::total_cmp);
    let q = |f: f64| v[((v.len() - 1) as f64 * f) as usize];
    (q(0.0), q(0.25), q(0.5), q(0.75), q(1.0))
}

#[test]
fn diag_rejection_components() {
    let (dataset, _) = generate_cohort(30, 30, 5.0, 500.0, NoisePreset::Lab, 79).unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.mitigation.keep_taps = 3;

    let rows: Vec<(u32, u32, FeatureVector)> = dataset
        .records
        .par_iter()
        .map(|r| {
            (
                r.subject_id,
                r.session_index,
                run_pipeline(&r.series, &cfg).unwrap(),
            )
        })
        .collect();

    // Enroll subjects 1 and 2 on sessions 1..=20; everyone else attacks.
    let train: Vec<&(u32, u32, FeatureVector)> = rows
        .iter()
        .filter(|(s, sess, _)| *s <= 2 && *sess <= 20)
        .collect();
    let feats: Vec<FeatureVector> = train.iter().map(|(_, _, f)| *f).collect();
    let labels: Vec<u32> = train.iter().map(|(s, _, _)| *s).collect();
    let model = train_identifier(&feats, &labels, &cfg.train).unwrap();
    println!("threshold = {:.6}", model.threshold);

    let legal: Vec<f64> = rows
        .iter()
        .filter(|(s, sess, _)| *s <= 2 && *sess > 20)
        .map(|(_, _, f)| model.classify(f).1)
        .collect();
    let attacker: Vec<f64> = rows
        .iter()
        .filter(|(s, _, _)| *s > 2)
        .map(|(_, _, f)| model.classify(f).1)
        .collect();
    println!("legal  conf quantiles: {:?}", quantiles(legal));
    println!("attack conf quantiles: {:?}", quantiles(attacker));

    // Decompose attacker acceptances: coordinate blow-up (normalized
    // coords far outside [-1,1]) vs genuine beyond-pair geometry.
    let mut amp_max: Vec<f64> = Vec::new();
    let mut stat_max: Vec<f64> = Vec::new();
    let mut accepted_blowup = 0usize;
    let mut accepted_tame = 0usize;
    let mut rejected = 0usize;
    for (s, _, f) in rows.iter().filter(|(s, _, _)| *s > 2) {
        let _ = s;
        let x = wipin_core::features::normalize(f, &model.normalizer);
        let a = x.values[..30].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let st = x.values[30..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        amp_max.push(a);
        stat_max.push(st);
        let conf = model.classify(f).1;
        if conf >= model.threshold {
            if a.max(st) > 3.0 {
                accepted_blowup += 1;
            } else {
                accepted_tame += 1;
            }
        } else {
            rejected += 1;
        }
    }
    println!("attacker max|x_amp|  quantiles: {:?}", quantiles(amp_max));
    println!("attacker max|x_stat| quantiles: {:?}", quantiles(stat_max));
    println!(
        "attackers: rejected={rejected} accepted_tame={accepted_tame} accepted_blowup={accepted_blowup}"
    );

    // Per-dimension medians of |normalized coordinate| for attackers and
    // legal test instances: which dims stick out past the train range?
    let median = |mut v: Vec<f64>| -> f64 {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let per_dim = |keep: &dyn Fn(u32, u32) -> bool| -> Vec<f64> {
        (0..39)
            .map(|j| {
                median(
                    rows.iter()
                        .filter(|(s, sess, _)| keep(*s, *sess))
                        .map(|(_, _, f)| {
                            wipin_core::features::normalize(f, &model.normalizer).values[j].abs()
                        })
                        .collect(),
                )
            })
            .collect()
    };
    let att = per_dim(&|s, _| s > 2);
    let leg = per_dim(&|s, sess| s <= 2 && sess > 20);
    let fmt = |v: &[f64]| -> String {
        v.iter().map(|x| format!("{x:5.2}")).collect::<Vec<_>>().join(" ")
    };
    println!("attacker median|x| amp dims:\n{}", fmt(&att[..30]));
    println!("attacker median|x| stat dims 30-38:\n{}", fmt(&att[30..]));
    println!("legal    median|x| stat dims 30-38:\n{}", fmt(&leg[30..]));
    println!(
        "legal    median|x| amp dims (max over dims): {:.2}",
        leg[..30].iter().fold(0.0f64, |m, v| m.max(*v))
    );

    let report = evaluate_rejection(&dataset, &[2, 10, 20, 29], 40, &cfg, 101).unwrap();
    for row in &report.rows {
        println!(
            "k={:>2}  BA={:.4}  TPR={:.4}  TNR={:.4}",
            row.key,
            row.mean,
            row.tpr.unwrap(),
            row.tnr.unwrap()
        );
    }

    let vol = evaluate_volume_sweep(&dataset, &[2, 30], 40, &cfg, 101).unwrap();
    for row in &vol.rows {
        println!("volume k={:>2}  acc={:.4}", row.key, row.mean);
    }
}
