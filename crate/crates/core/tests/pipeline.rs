use std::fs;

use slsrec::autodiff::Checkpoint;
use slsrec::config::RunConfig;
use slsrec::model::ContrastProjection;
use slsrec::run::{
    cmd_ablate, cmd_eval, cmd_gradcheck, cmd_sweep, cmd_train, read_csv, variant_config, GradcheckShape, Split,
    GRADCHECK_TOL,
};
use slsrec::train::{train, PreparedData};

fn small(extra: &str) -> RunConfig {
    let mut c = RunConfig::default();
    c.apply_str("synth_users = 60\nsynth_items = 100\neval_candidates = 20\nd = 4\nepochs = 2\nbatch_size = 100").unwrap();
    c.apply_str(extra).unwrap();
    c
}

#[test]
fn first_epoch_beats_chance_by_three_sigma() {
    let mut cfg = RunConfig::default();
    cfg.epochs = 1;
    let data = PreparedData::load(&cfg).unwrap();
    let tasks = data.tasks(&cfg).unwrap();
    let out = train(&cfg, &data, &tasks).unwrap();
    // binomial standard deviation of a chance-level rate over the validation tasks
    let sigma = (0.25 / tasks.val.len() as f64).sqrt();
    let auc = out.epochs[0].val.auc;
    assert!(auc > 0.5 + 3.0 * sigma, "epoch 1 val auc {auc}, threshold {}", 0.5 + 3.0 * sigma);
}

#[test]
fn gradcheck_passes_for_every_loss_variant() {
    for (literal, proj, shared) in [
        (false, ContrastProjection::FirstHalf, false),
        (true, ContrastProjection::FirstHalf, false),
        (false, ContrastProjection::LearnedLinear, true),
        (true, ContrastProjection::LearnedLinear, false),
    ] {
        let mut cfg = RunConfig::default();
        cfg.eq17_literal = literal;
        cfg.contrast_projection = proj;
        cfg.share_pool_weights = shared;
        let r = cmd_gradcheck(&cfg, &GradcheckShape::default()).unwrap();
        assert!(r.passes(GRADCHECK_TOL), "{literal} {proj} {shared}: worst {}", r.worst());
    }
    let wide = GradcheckShape { d: 17, ..Default::default() };
    assert!(cmd_gradcheck(&RunConfig::default(), &wide).is_err());
}

#[test]
fn run_dir_artifacts_carry_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small("seed = 3");
    let s = cmd_train(&cfg, tmp.path()).unwrap();
    let resolved = cfg.resolved();
    assert_eq!(fs::read_to_string(tmp.path().join("config.resolved")).unwrap(), resolved);
    for f in ["train_log.csv", "metrics.csv", "timing.csv"] {
        let text = fs::read_to_string(tmp.path().join(f)).unwrap();
        let comments: String = text.lines().take_while(|l| l.starts_with("# ")).map(|l| format!("{}\n", &l[2..])).collect();
        assert_eq!(comments, resolved, "{f}");
    }
    let ckpt = Checkpoint::load(tmp.path().join("best.ckpt")).unwrap();
    assert_eq!(ckpt.header.config, resolved);
    assert_eq!(ckpt.header.d, 4);

    let (header, rows) = read_csv(&tmp.path().join("train_log.csv")).unwrap();
    assert_eq!(header[0], "epoch");
    assert_eq!(rows.len(), s.outcome.epochs.len());

    // evaluating the checkpoint reproduces the run's own test row
    let m = cmd_eval(&tmp.path().join("best.ckpt"), Split::Test, &tmp.path().join("eval.csv")).unwrap();
    assert_eq!(m, s.test);
}

#[test]
fn train_split_is_not_worse_than_validation() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.apply_str("synth_users = 300\nd = 8\nepochs = 8").unwrap();
    let s = cmd_train(&cfg, tmp.path()).unwrap();
    let ckpt = tmp.path().join("best.ckpt");
    let train = cmd_eval(&ckpt, Split::Train, &tmp.path().join("train.csv")).unwrap();
    let val = cmd_eval(&ckpt, Split::Val, &tmp.path().join("val.csv")).unwrap();
    assert_eq!(val.auc, s.outcome.best_record().val.auc);
    assert!(train.auc >= val.auc - 0.05, "train {} val {}", train.auc, val.auc);
}

#[test]
fn lambda_sweep_writes_one_row_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let values: Vec<String> = ["0", "0.1", "0.2", "0.5"].iter().map(|v| v.to_string()).collect();
    let runs = cmd_sweep(&small(""), "lambda", &values, tmp.path()).unwrap();
    assert_eq!(runs.len(), 4);
    let (header, rows) = read_csv(&tmp.path().join("sweep.csv")).unwrap();
    assert_eq!(&header[..2], ["param", "value"]);
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().zip(&values).all(|(r, v)| r[0] == "lambda" && &r[1] == v));
    assert!(tmp.path().join("lambda=0.5/best.ckpt").is_file());

    assert!(cmd_sweep(&small(""), "lambda", &values[..1], tmp.path()).is_err());
    assert!(cmd_sweep(&small(""), "lamda", &values, tmp.path()).is_err());
}

#[test]
fn ablate_covers_every_variant() {
    let tmp = tempfile::tempdir().unwrap();
    let runs = cmd_ablate(&small(""), tmp.path()).unwrap();
    let names: Vec<&str> = runs.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["full", "no_cl", "no_cate", "no_long", "no_short"]);
    let (_, rows) = read_csv(&tmp.path().join("ablation.csv")).unwrap();
    assert_eq!(rows.len(), 5);
    // no_cl zeroes the contrastive weight
    let no_cl = fs::read_to_string(tmp.path().join("no_cl/config.resolved")).unwrap();
    assert!(no_cl.contains("no_cl=true"));
    assert!(runs[1].1.outcome.epochs.iter().all(|e| e.l_total == e.l_main));

    // variants replace the ablation flags rather than adding to them
    let base = small("no_long = true");
    assert!(!variant_config(&base, "no_short").unwrap().ablation.no_long);
    let both = small("no_long = true\nno_short = true");
    assert!(both.validate().is_err());
    assert!(cmd_train(&both, &tmp.path().join("both")).is_err());
    assert!(!tmp.path().join("both").exists());
}
