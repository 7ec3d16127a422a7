use rankshrink::harness::{domination_report, run_experiment, ure_validation};
use rankshrink::ure::exact_risk_hf1;
use rankshrink::{EstimatorSpec, ExperimentConfig, Task};

fn config(tasks: &[Task], ids: &[&str]) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(30, 20);
    c.rank_grid = vec![8];
    c.reps = 1500;
    c.master_seed = 404;
    c.tasks = tasks.to_vec();
    for &task in tasks {
        let specs = ids
            .iter()
            .filter_map(|id| EstimatorSpec::from_id(id).ok())
            .filter(|s| s.task == task)
            .collect();
        c.estimators.insert(task, specs);
    }
    c
}

#[test]
fn hf1_mean_loss_matches_exact_risk() {
    let c = config(&[Task::Covariance], &["hf1"]);
    let rows = run_experiment(&c).unwrap();
    let hf1 = rows.iter().find(|r| r.estimator == "hf1").unwrap();
    let exact = exact_risk_hf1(30, 20, 8).unwrap();
    assert!(
        (hf1.mean_loss - exact).abs() <= 3.0 * hf1.se_loss,
        "{} vs {exact} (se {})",
        hf1.mean_loss,
        hf1.se_loss
    );
}

#[test]
fn ure_is_unbiased_for_every_task() {
    let c = config(
        &Task::ALL,
        &["sample", "hf1", "hf2", "unbiased-prec", "em1", "em2", "tk1", "tk2"],
    );
    for row in ure_validation(&c).unwrap() {
        assert!(!row.skipped, "{row:?}");
        assert!(row.z.abs() < 3.0, "{row:?}");
    }
}

#[test]
fn first_stage_chains_hold() {
    let mut c = config(&Task::ALL, &[]);
    c.reps = 800;
    for row in domination_report(&c).unwrap() {
        if row.better.ends_with('2') {
            continue;
        }
        assert!(row.dominates(2.0), "{row}");
    }
}
