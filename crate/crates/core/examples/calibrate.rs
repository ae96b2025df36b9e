//! Prints the stability ratio of every case of the pinned suite and the
//! time of one desk-scale trial.

use sdmatch::experiments::{run_trial, TrialConfig};
use sdmatch::stability::{calibration_suite, stability_check, StabilityOptions};
use sdmatch::Domain;

fn main() {
    let mut worst: f64 = 0.0;
    for case in calibration_suite().unwrap() {
        let r = stability_check(&case.f, &case.cloud, &StabilityOptions::default()).unwrap();
        println!(
            "{:<24} admissible={} lhs={:.3e} ratio={:?} [{:?}, {:?}]",
            case.label, r.admissible, r.lhs, r.ratio, r.ratio_low, r.ratio_high
        );
        if r.admissible {
            worst = worst.max(r.ratio_high.unwrap_or(0.0));
        }
    }
    println!("largest admissible ratio (upper end): {worst:.4}");
    if std::env::args().any(|a| a == "--trial") {
        let rec = run_trial(&TrialConfig::new(Domain::Torus, 256, 1).unwrap()).unwrap();
        println!("{}", rec.to_json_line());
    }
}
