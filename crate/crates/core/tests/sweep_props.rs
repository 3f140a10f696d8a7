use htc_core::model::SweepAxisName;
use htc_core::sweep::{
    run_with_checkpoints, stability_map, staircase_sweep, Axis, CheckpointOutcome, SweepDataset, SweepPlan,
};
use htc_core::{Error, Execution, ModelParameters};

fn plan() -> SweepPlan {
    let mut p = SweepPlan::staircase(ModelParameters::coherent_reference(0.0), 0.1, 0.5, 9);
    p.horizon_periods = 150.0;
    p.heatmap_bins = 41;
    p
}

fn bytes(d: &SweepDataset) -> (String, String, String) {
    (d.to_csv().unwrap(), d.heatmap_csv().unwrap(), serde_json::to_string(&d.manifest()).unwrap())
}

#[test]
fn outputs_identical_across_worker_counts() {
    let plan = plan();
    let reference = bytes(&staircase_sweep(&plan, Execution::Sequential).unwrap());
    for exec in [Execution::Workers(4), Execution::Workers(8), Execution::Parallel] {
        assert_eq!(bytes(&staircase_sweep(&plan, exec).unwrap()), reference, "{exec:?}");
    }
}

/// Each cell depends only on its own parameters: recomputing a cell on its
/// own reproduces the full-grid result exactly.
#[test]
fn cells_do_not_depend_on_neighbours() {
    let full = staircase_sweep(&plan(), Execution::Parallel).unwrap();
    for &k in &[0, 3, 8] {
        let f = &full.cells[k];
        let mut alone = SweepPlan::map(
            ModelParameters::coherent_reference(0.0),
            Axis::new(SweepAxisName::J, 0.1, 0.1, 1),
            Axis::new(SweepAxisName::Eta, f.value1, f.value1, 1),
        );
        alone.horizon_periods = plan().horizon_periods;
        let c = &stability_map(&alone, Execution::Sequential).unwrap().cells[0];
        assert_eq!((c.omega_r, c.label, c.amplitude), (f.omega_r, f.label, f.amplitude), "cell {k}");
    }
}

#[test]
fn map_rows_and_columns_equal_one_dimensional_sweeps() {
    let base = plan();
    let mut map = SweepPlan::map(
        ModelParameters::coherent_reference(0.0),
        Axis::new(SweepAxisName::H, 0.2, 0.25, 2),
        Axis::new(SweepAxisName::Eta, 0.1, 0.5, 9),
    );
    map.horizon_periods = base.horizon_periods;
    let m = stability_map(&map, Execution::Parallel).unwrap();
    let line = staircase_sweep(&base, Execution::Parallel).unwrap();
    let row: Vec<_> = m.row(1).iter().map(|c| (c.value2, c.omega_r, c.label)).collect();
    let cut: Vec<_> = line.cells.iter().map(|c| (Some(c.value1), c.omega_r, c.label)).collect();
    assert_eq!(row, cut);
}

#[test]
fn interrupted_run_resumes_to_the_same_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("ck.jsonl");
    let plan = plan();
    let first = run_with_checkpoints(&plan, &ck, Execution::Parallel, 2, Some(4)).unwrap();
    assert_eq!(first, CheckpointOutcome::Partial { done: 4, total: 9 });
    let CheckpointOutcome::Complete(resumed) =
        run_with_checkpoints(&plan, &ck, Execution::Sequential, 2, None).unwrap()
    else {
        panic!("not complete")
    };
    let direct = staircase_sweep(&plan, Execution::Parallel).unwrap();
    assert_eq!(bytes(&resumed), bytes(&direct));

    let mut other = plan.clone();
    other.horizon_periods = 200.0;
    let err = run_with_checkpoints(&other, &ck, Execution::Parallel, 2, None).unwrap_err();
    assert!(matches!(err, Error::PlanMismatch { .. }), "{err}");
}
