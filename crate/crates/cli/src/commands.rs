use std::io::Write;
use std::path::Path;

use equivcnp::data::{
    image_task_with_rate, random_transform, render_digit, transform_image, write_pgm, write_task,
    TransformMode, IMAGE_SIZE,
};
use equivcnp::equivariance::run_suite;
use equivcnp::experiment::{
    eval_image_task, eval_task_1d, evaluate, evaluate_oracle, stream_rng, streams, train as run_training,
    DataConfig, ExperimentConfig,
};
use equivcnp::lie::GroupTag;
use equivcnp::model::{Architecture, EquivCnp};
use equivcnp::Error;

use crate::{ConfigArgs, Failure};

type CmdResult = Result<(), Failure>;

/// Loads the config (or preset) and applies command-line overrides. The
/// seed override applies to `train.seed` and `eval.seed` alike.
pub fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => ExperimentConfig::preset("regress1d-desk")?,
    };
    if let Some(g) = args.group {
        cfg = cfg.with_group(g)?;
    }
    if let Some(s) = args.seed {
        cfg.train.seed = s;
        cfg.eval.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn gen_data(args: &ConfigArgs, out: &Path, n_tasks: Option<usize>, extrapolation: bool) -> CmdResult {
    let mut cfg = load_config(args)?;
    if let Some(n) = n_tasks {
        cfg.eval.n_tasks = n;
    }
    if extrapolation {
        cfg.eval.extrapolation = true;
    }
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(Error::from)?;
    for i in 0..cfg.eval.n_tasks as u64 {
        match &cfg.data {
            DataConfig::Gp(gp) => {
                let (task, _) = eval_task_1d(&cfg, i)?;
                let range = if cfg.eval.extrapolation {
                    gp.extrapolation().x_range
                } else {
                    gp.x_range
                };
                write_task(
                    out.join(format!("task_{i:04}.csv")),
                    "gp1d",
                    &task,
                    1,
                    &[
                        ("kernel", gp.kernel.kind.to_string()),
                        ("x_range", format!("{},{}", range[0], range[1])),
                        ("train_range", format!("{},{}", gp.x_range[0], gp.x_range[1])),
                        ("seed", cfg.eval.seed.to_string()),
                        ("index", i.to_string()),
                    ],
                )?;
            }
            DataConfig::Digits(_) => {
                let (img, obs, _) = eval_image_task(&cfg, i)?;
                write_task(
                    out.join(format!("task_{i:04}.csv")),
                    "digits",
                    &obs.to_task_set(),
                    2,
                    &[
                        ("label", img.label.to_string()),
                        ("scale", img.scale.to_string()),
                        ("angle_deg", img.angle.to_degrees().to_string()),
                        ("seed", cfg.eval.seed.to_string()),
                        ("index", i.to_string()),
                    ],
                )?;
                write_pgm(out.join(format!("truth_{i:04}.pgm")), IMAGE_SIZE, IMAGE_SIZE, &img.pixels)?;
                write_pgm(out.join(format!("mask_{i:04}.pgm")), IMAGE_SIZE, IMAGE_SIZE, &obs.mask)?;
            }
        }
    }
    cfg.save(out.join("config.json"))?;
    println!("wrote {} tasks to {}", cfg.eval.n_tasks, out.display());
    Ok(())
}

pub fn train(args: &ConfigArgs, out: &Path) -> CmdResult {
    let cfg = load_config(args)?;
    println!(
        "training {:?}/{} for {} epochs x {} batches x {} (seed {})",
        cfg.model.architecture,
        cfg.model.tag,
        cfg.train.epochs,
        cfg.train.batches_per_epoch,
        cfg.train.batch_size,
        cfg.train.seed
    );
    run_training(&cfg, Some(out), |r| {
        println!(
            "epoch {:>4}  mean_ll {:>9.4}  std_ll {:>8.4}  {:>8.1}s",
            r.epoch, r.mean_ll, r.std_ll, r.wall_seconds
        );
    })?;
    println!("checkpoint: {}", out.join("checkpoint.bin").display());
    Ok(())
}

pub fn eval(
    args: &ConfigArgs,
    checkpoint: &Path,
    n_tasks: Option<usize>,
    oracle: bool,
    extrapolation: bool,
    out: Option<&Path>,
) -> CmdResult {
    let mut cfg = load_config(args)?;
    if let Some(n) = n_tasks {
        cfg.eval.n_tasks = n;
    }
    if extrapolation {
        cfg.eval.extrapolation = true;
    }
    cfg.validate()?;
    let model = EquivCnp::load(checkpoint)?;
    let mut rows = vec![("equivcnp", evaluate(&model, &cfg)?)];
    if oracle {
        rows.push(("oracle", evaluate_oracle(&cfg)?));
    }
    let mut csv = String::from("model,mean_ll,std_ll,n_tasks,seed\n");
    for (name, r) in &rows {
        println!(
            "{name:<9} log-likelihood {:.4} ± {:.4} over {} tasks",
            r.mean, r.std, cfg.eval.n_tasks
        );
        csv.push_str(&format!(
            "{name},{},{},{},{}\n",
            r.mean, r.std, cfg.eval.n_tasks, cfg.eval.seed
        ));
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(Error::from)?;
        std::fs::write(dir.join("eval.csv"), csv).map_err(Error::from)?;
    }
    Ok(())
}

pub fn complete(
    checkpoint: &Path,
    fraction: f64,
    out: &Path,
    digit: u8,
    scale: Option<f64>,
    angle_deg: Option<f64>,
    seed: u64,
) -> CmdResult {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("--fraction {fraction} is not in (0, 1]")).into());
    }
    let model = EquivCnp::load(checkpoint)?;
    if model.config.architecture != Architecture::Image2d {
        return Err(Error::Config("complete needs an image2d checkpoint".into()).into());
    }
    let mut rng = stream_rng(seed, streams::EVAL, 0);
    let (s0, a0) = random_transform(TransformMode::Both, &mut rng);
    let scale = scale.unwrap_or(s0);
    let angle = angle_deg.map_or(a0, f64::to_radians);
    let img = transform_image(&render_digit(digit)?, scale, angle)?;
    let obs = image_task_with_rate(&img, fraction, &mut rng)?;
    let pred = model.predict_image(&obs, &mut rng)?;
    let ll = model.image_log_likelihood(&obs, &mut rng)?;
    std::fs::create_dir_all(out).map_err(Error::from)?;
    // unobserved pixels are shown mid-grey
    let context: Vec<f64> = img
        .pixels
        .iter()
        .zip(&obs.mask)
        .map(|(&v, &m)| if m != 0.0 { v } else { 0.5 })
        .collect();
    let n = IMAGE_SIZE;
    write_pgm(out.join("context.pgm"), n, n, &context)?;
    write_pgm(out.join("truth.pgm"), n, n, &img.pixels)?;
    write_pgm(out.join("mean.pgm"), n, n, pred.mu.data())?;
    let mut f = std::fs::File::create(out.join("completion.txt")).map_err(Error::from)?;
    writeln!(
        f,
        "digit={digit} scale={scale} angle_deg={} fraction={fraction} group={} log_likelihood={ll}",
        angle.to_degrees(),
        model.config.tag
    )
    .map_err(Error::from)?;
    println!(
        "digit {digit}, scale {scale:.3}, angle {:.1} deg, {:.0}% observed: log-likelihood {ll:.4}",
        angle.to_degrees(),
        100.0 * fraction
    );
    Ok(())
}

pub fn check_equivariance(group: Option<GroupTag>, seed: u64) -> CmdResult {
    let tags = group.map_or(GroupTag::ALL.to_vec(), |g| vec![g]);
    let results = run_suite(&tags, seed)?;
    let mut failures = Vec::new();
    for r in &results {
        let status = if r.passed() { "ok" } else { "FAIL" };
        println!(
            "{status:<4} {:<6} {:<34} max err {:.3e} (tol {:.0e})",
            r.tag, r.name, r.max_error, r.tolerance
        );
        if !r.passed() {
            failures.push(format!("{} {}: {:.3e}", r.tag, r.name, r.max_error));
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(failures.join("; ")))
    }
}
