use std::fs;
use std::path::Path;
use std::process::Command;

use wor_minimax::harness::{
    confidence_interval, emit_plot_data, multi_instance_experiment, run_experiment, write_outputs,
    ExperimentConfig, Method, ProblemSpec, SeedSpec,
};
use wor_minimax::problems::GameGenConfig;
use wor_minimax::shuffling::ScheduleKind;

fn small_game() -> GameGenConfig {
    GameGenConfig {
        n: 12,
        dx: 3,
        dy: 3,
        mu_a: 1.0,
        mu_b: 0.5,
        mu_c: 1.0,
        mu_delta: 0.5,
        nonconvex_count: 3,
        seed: 17,
    }
}

fn config(out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        problem: ProblemSpec::Quadratic(small_game()),
        methods: vec![Method::Gda, Method::Ppm, Method::Agda],
        schedules: vec![ScheduleKind::Rr, ScheduleKind::So, ScheduleKind::Uniform],
        gamma_grid: vec![0.05, 0.2, 0.5],
        epochs: 15,
        seeds: SeedSpec::Range { start: 0, count: 6 },
        instance_count: 1,
        seeds_per_instance: None,
        pilot_seeds: 3,
        agda_eta: 1.0,
        init_scale: 1.0,
        lambda: 0.1,
        record_every: 1,
        output: out.to_path_buf(),
    }
}

fn data_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(str::to_string)
        .collect()
}

#[test]
fn single_epoch_single_seed_gives_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.epochs = 1;
    cfg.seeds = SeedSpec::List(vec![4]);
    cfg.gamma_grid = vec![0.1];
    let out = run_experiment(&cfg).unwrap();
    write_outputs(&out, dir.path()).unwrap();
    let rows = data_lines(&dir.path().join("runs.csv"));
    assert_eq!(rows.len(), 9);
    assert_eq!(out.manifest.cells.len(), 9);
    assert!(out
        .manifest
        .cells
        .iter()
        .all(|c| c.gamma == Some(0.1) && c.pilot.is_empty()));
}

#[test]
fn reruns_are_byte_identical_and_manifest_replays() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config(a.path());
    write_outputs(&run_experiment(&cfg).unwrap(), a.path()).unwrap();
    write_outputs(&run_experiment(&cfg).unwrap(), b.path()).unwrap();
    for f in ["runs.csv", "summary.csv"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    // Replay from the manifest through the library loader.
    let (replayed, mode) =
        wor_minimax::harness::load_config_or_manifest(&a.path().join("manifest.json")).unwrap();
    assert_eq!(replayed, cfg);
    assert_eq!(mode, Some(wor_minimax::harness::Mode::Run));
    let c = tempfile::tempdir().unwrap();
    write_outputs(&run_experiment(&replayed).unwrap(), c.path()).unwrap();
    assert_eq!(
        fs::read(a.path().join("runs.csv")).unwrap(),
        fs::read(c.path().join("runs.csv")).unwrap()
    );
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let reference = run_experiment(&cfg).unwrap();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap();
    let threaded = pool.install(|| run_experiment(&cfg).unwrap());
    assert_eq!(reference.rows, threaded.rows);
    assert_eq!(reference.summary, threaded.summary);
}

#[test]
fn csv_dialect() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    write_outputs(&run_experiment(&cfg).unwrap(), dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    assert!(!text.contains('\r'));
    assert!(text
        .starts_with("instance,method,schedule,gamma,seed,epoch,rel_sq_dist,v_lambda,diverged\n"));
    let first = text.lines().nth(1).unwrap();
    let rel = first.split(',').nth(6).unwrap();
    let mantissa = rel.split('e').next().unwrap();
    assert_eq!(mantissa.replace(['.', '-'], "").len(), 17, "{rel}");
}

#[test]
fn multi_instance_row_counts_and_reduction() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.gamma_grid = vec![0.1];
    cfg.instance_count = 4;
    cfg.seeds_per_instance = Some(2);
    cfg.record_every = 5;
    let out = multi_instance_experiment(&cfg).unwrap();
    // 4 instances × 2 seeds × 3 recorded epochs per cell.
    for (m, s) in [
        (Method::Gda, ScheduleKind::Rr),
        (Method::Agda, ScheduleKind::Uniform),
    ] {
        let count = out
            .rows
            .iter()
            .filter(|r| r.method == m && r.schedule == s)
            .count();
        assert_eq!(count, 4 * 2 * 3);
    }
    let seeds: Vec<u64> = out.manifest.instances.iter().map(|i| i.seed).collect();
    let mut uniq = seeds.clone();
    uniq.dedup();
    assert_eq!(uniq.len(), 4);

    cfg.instance_count = 1;
    cfg.seeds_per_instance = None;
    let single = run_experiment(&cfg).unwrap();
    let multi = multi_instance_experiment(&cfg).unwrap();
    assert_eq!(single.rows, multi.rows);
    assert_eq!(single.summary, multi.summary);
}

#[test]
fn diverged_and_rejected_cells_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.problem = ProblemSpec::Bilinear { mu: 1.0, ell: 2.0 };
    cfg.methods = vec![Method::Gda, Method::Ppm];
    cfg.schedules = vec![ScheduleKind::Rr];
    cfg.gamma_grid = vec![10.0];
    cfg.epochs = 400;
    cfg.seeds = SeedSpec::List(vec![1, 2]);
    let out = run_experiment(&cfg).unwrap();
    let gda = &out.manifest.cells[0];
    assert_eq!(gda.diverged, 2);
    assert_eq!(gda.runs, 0);
    assert!(gda.omitted.is_some());
    let diverged_rows: Vec<_> = out.rows.iter().filter(|r| r.diverged).collect();
    assert_eq!(diverged_rows.len(), 2);
    assert!(diverged_rows
        .iter()
        .all(|r| r.rel_sq_dist.is_none() && r.epoch >= 1 && r.epoch <= 400));
    // PPM refuses α·l ≥ 1.
    let ppm = &out.manifest.cells[1];
    assert!(ppm.omitted.as_deref().unwrap().contains("rejected"));
    assert!(out.summary.is_empty());
}

#[test]
fn grid_search_disqualifies_diverging_gammas() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.problem = ProblemSpec::Bilinear { mu: 1.0, ell: 2.0 };
    cfg.methods = vec![Method::Gda];
    cfg.schedules = vec![ScheduleKind::Ig];
    cfg.gamma_grid = vec![0.1, 0.5, 10.0];
    cfg.epochs = 400;
    let out = run_experiment(&cfg).unwrap();
    let cell = &out.manifest.cells[0];
    assert_eq!(cell.pilot.len(), 3);
    assert!(cell.pilot[2].score.is_none());
    assert_eq!(cell.pilot[2].diverged, 3);
    // γ = 0.5 contracts fastest on this instance.
    assert_eq!(cell.gamma, Some(0.5));
}

#[test]
fn interval_width_shrinks_with_more_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.methods = vec![Method::Gda];
    cfg.schedules = vec![ScheduleKind::Rr];
    cfg.gamma_grid = vec![0.2];
    let width = |r: usize| {
        let mut c = cfg.clone();
        c.seeds = SeedSpec::Range { start: 0, count: r };
        let out = run_experiment(&c).unwrap();
        let last = out.summary.last().unwrap();
        (last.ci_high - last.ci_low, last.std)
    };
    let (w10, s10) = width(10);
    let (w50, s50) = width(50);
    assert!(w50 < w10);
    let observed = w10 / w50;
    assert!(
        observed > 5f64.sqrt() / 1.5 && observed < 5f64.sqrt() * 1.5,
        "{observed}"
    );
    // Width ratio tracks √5 once the standard deviations are accounted for.
    let ratio = (w10 / s10) / (w50 / s50);
    assert!((ratio - 5f64.sqrt()).abs() < 1e-12, "{ratio}");
    let (m, _, lo, hi) = confidence_interval(&[1.0, 3.0]).unwrap();
    assert!(lo <= m && m <= hi);
}

#[test]
fn plot_files_follow_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let out = run_experiment(&cfg).unwrap();
    write_outputs(&out, dir.path()).unwrap();
    let files = emit_plot_data(dir.path()).unwrap();
    let names: Vec<String> = files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(
        names,
        [
            "panel_gda.dat",
            "panel_ppm.dat",
            "panel_agda.dat",
            "plot.gp"
        ]
    );
    for f in &files[..3] {
        let text = fs::read_to_string(f).unwrap();
        for line in text.lines().filter(|l| !l.starts_with('#')) {
            let v: Vec<f64> = line
                .split_whitespace()
                .skip(1)
                .map(|x| x.parse().unwrap())
                .collect();
            for band in v.chunks(3) {
                assert!(band[1] <= band[0] && band[0] <= band[2], "{line}");
            }
        }
    }
    assert!(fs::read_to_string(&files[0])
        .unwrap()
        .contains("# yscale: linear"));
    assert!(fs::read_to_string(&files[1])
        .unwrap()
        .contains("# yscale: log"));
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wor-minimax"))
}

#[test]
fn cli_exit_codes_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    let cfg = config(&dir.path().join("ignored"));
    fs::write(&cfg_path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let out_dir = dir.path().join("out");
    let status = cli()
        .args([
            "run",
            cfg_path.to_str().unwrap(),
            "--epochs",
            "2",
            "--seed",
            "9",
            "--gamma",
            "0.1",
        ])
        .args([
            "--method",
            "GDA,AGDA",
            "--schedule",
            "RR,AS:GREEDY_MAX_DIST",
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let rows = data_lines(&out_dir.join("runs.csv"));
    assert_eq!(rows.len(), 2 * 2 * 2);
    assert!(rows.iter().all(|r| r.contains(",9,")));
    assert!(!dir.path().join("ignored").exists());

    // Replaying the manifest reproduces runs.csv.
    let replay = dir.path().join("replay");
    let status = cli()
        .args([
            "run",
            out_dir.join("manifest.json").to_str().unwrap(),
            "--out",
            replay.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(
        fs::read(out_dir.join("runs.csv")).unwrap(),
        fs::read(replay.join("runs.csv")).unwrap()
    );

    let plot = cli()
        .args(["plot", out_dir.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(plot.success());

    fs::write(&cfg_path, r#"{"problem": "unbounded_2pl"}"#).unwrap();
    assert_eq!(
        cli()
            .args(["run", cfg_path.to_str().unwrap()])
            .status()
            .unwrap()
            .code(),
        Some(2)
    );
    let empty = tempfile::tempdir().unwrap();
    fs::write(
        empty.path().join("summary.csv"),
        "method,schedule,gamma,epoch,runs,mean,std,ci_low,ci_high,v_lambda_mean\n",
    )
    .unwrap();
    let code = cli()
        .args(["plot", empty.path().to_str().unwrap()])
        .status()
        .unwrap()
        .code();
    assert_ne!(code, Some(0));
    assert_eq!(fs::read_dir(empty.path()).unwrap().count(), 1);
}

#[test]
fn cli_verify_passes() {
    let out = cli().arg("verify").output().unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 failed"));
}
