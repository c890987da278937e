use hybridavg::montecarlo::{compare_to_averaged, read_summary_csv, run_experiment, write_summary_csv};
use hybridavg::{EpsilonTag, ExperimentConfig, Observable};

fn small(reps: u32, seed: u64, workers: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::reference(reps, seed);
    c.epsilons = vec![EpsilonTag::Scale(1.0), EpsilonTag::Averaged];
    c.workers = workers;
    c
}

fn csv_of(config: &ExperimentConfig) -> String {
    let mut buf = Vec::new();
    write_summary_csv(&mut buf, &run_experiment(config).unwrap()).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn worker_count_does_not_change_results() {
    let one = csv_of(&small(64, 5, 1));
    assert_eq!(one, csv_of(&small(64, 5, 3)));
    assert_eq!(one, csv_of(&small(64, 5, 0)));
}

#[test]
fn seeds_select_distinct_streams() {
    assert_ne!(csv_of(&small(64, 5, 1)), csv_of(&small(64, 6, 1)));
}

#[test]
fn summary_csv_round_trips() {
    let config = small(50, 8, 0);
    let summaries = run_experiment(&config).unwrap();
    let mut buf = Vec::new();
    write_summary_csv(&mut buf, &summaries).unwrap();
    let rows = read_summary_csv(buf.as_slice()).unwrap();
    assert_eq!(rows.len(), summaries.len());
    for (r, s) in rows.iter().zip(&summaries) {
        assert_eq!(r.epsilon, s.epsilon.as_f64());
        assert_eq!(r.count, s.count);
        assert_eq!(r.mean, s.mean);
        assert_eq!(r.se, s.se);
    }
}

#[test]
fn standard_error_scales_with_replications() {
    let mut a = small(400, 1, 0);
    a.epsilons = vec![EpsilonTag::Averaged];
    let mut b = a.clone();
    b.replications = 1600;
    let se_a = run_experiment(&a).unwrap()[0].se.unwrap();
    let se_b = run_experiment(&b).unwrap()[0].se.unwrap();
    let ratio = se_a / se_b;
    assert!((ratio - 2.0).abs() < 0.3, "SE ratio {ratio}");
}

#[test]
fn absorption_experiment_and_gap_report() {
    let mut c = small(100, 3, 0);
    c.observable = Observable::AbsorptionTime;
    c.n0 = 5;
    let summaries = run_experiment(&c).unwrap();
    assert!(summaries.iter().all(|s| s.censored == 0 && s.count == 100));
    let report = compare_to_averaged(&summaries).unwrap();
    assert_eq!(report.entries.len(), 1);
    assert_eq!(report.entries[0].epsilon, 1.0);
    assert!(report.monotone);
}

#[test]
fn short_cutoff_censors_runs() {
    let mut c = small(40, 3, 0);
    c.observable = Observable::AbsorptionTime;
    c.epsilons = vec![EpsilonTag::Averaged];
    c.max_time = Some(1.0);
    let s = &run_experiment(&c).unwrap()[0];
    assert_eq!(s.censored + s.count, 40);
    assert!(s.censored > 30);
}
