use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::Path;

use tlt_core::embedding::{coord_rows, embed, read_coord_rows, write_coord_rows, CoordRow, EmbedHyper, Split};
use tlt_core::evaluation::{eval_heads, eval_unseen_classes, Agreement, EvalReport};
use tlt_core::feature_store::{read_features, split_train_test, write_features, FeatureSet, Scale, StoreError};
use tlt_core::pretext::{build_model, train, HeadConfig, PretextModel, TrainConfig};
use tlt_core::synthetic::{gen_synthetic, SynthConfig};
use tlt_core::trajectory::{
    default_steps, fit_trajectory_model, read_rollout_csv, rollout, tracks_from_rows, write_rollout_csv, GroupKey, MixturePrior,
    RolloutMode, RolloutStatus, TrajConfig, TrajectoryModel,
};

use crate::args::{
    Cli, ColorArg, Command, EmbedArgs, EvalArgs, ModeArg, PlotArgs, ScaleArg, SplitArg, SynthArgs, TrainArgs, TrajCommand, TrajFitArgs,
    TrajRolloutArgs,
};
use crate::config::FileConfig;
use crate::error::CliError;
use crate::plot::{class_color, ramp_color, render_svg, Marker};

const DEFAULT_TRAIN_FRACTION: f64 = 0.75;

struct Ctx {
    cfg: FileConfig,
    seed: Option<u64>,
    verbose: u8,
}

impl Ctx {
    fn seed(&self) -> u64 {
        self.seed.or(self.cfg.seed).unwrap_or(0)
    }

    fn train_fraction(&self, flag: Option<f64>) -> f64 {
        flag.or(self.cfg.train_fraction).unwrap_or(DEFAULT_TRAIN_FRACTION)
    }

    fn info(&self, msg: impl AsRef<str>) {
        if self.verbose > 0 {
            eprintln!("{}", msg.as_ref());
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = Ctx {
        cfg: FileConfig::load(cli.config.as_deref())?,
        seed: cli.seed,
        verbose: cli.verbose,
    };
    match cli.command {
        Command::Synth(a) => cmd_synth(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Embed(a) => cmd_embed(&ctx, a),
        Command::Traj(TrajCommand::Fit(a)) => cmd_traj_fit(&ctx, a),
        Command::Traj(TrajCommand::Rollout(a)) => cmd_traj_rollout(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Plot(a) => cmd_plot(&ctx, a),
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

fn read_tltf(path: &Path) -> Result<FeatureSet, CliError> {
    read_features(open(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_coords(path: &Path) -> Result<Vec<CoordRow>, CliError> {
    read_coord_rows(open(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn split_err(e: StoreError) -> CliError {
    match e {
        StoreError::BadFraction(_) => CliError::Config(e.to_string()),
        _ => CliError::Data(e.to_string()),
    }
}

fn keep(split: SplitArg, row: Split) -> bool {
    match split {
        SplitArg::All => true,
        SplitArg::Train => row == Split::Train,
        SplitArg::Test => row == Split::Test,
    }
}

fn parse_scale(s: &str) -> Result<Scale, CliError> {
    match s {
        "patch" => Ok(Scale::Patch),
        "berry" => Ok(Scale::Berry),
        other => Err(CliError::Config(format!("unknown scale {other:?}"))),
    }
}

fn parse_mode(s: &str) -> Result<RolloutMode, CliError> {
    match s {
        "mean" => Ok(RolloutMode::Mean),
        "sample" => Ok(RolloutMode::Sample),
        other => Err(CliError::Config(format!("unknown rollout mode {other:?}"))),
    }
}

fn parse_heads(list: &str, n_classes: usize) -> Result<HeadConfig, CliError> {
    let mut heads = HeadConfig {
        time: false,
        variety: false,
        fungicide: false,
        rot: false,
        n_classes,
    };
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match name {
            "time" => heads.time = true,
            "variety" => heads.variety = true,
            "fungicide" => heads.fungicide = true,
            "rot" => heads.rot = true,
            other => return Err(CliError::Config(format!("unknown head {other:?}"))),
        }
    }
    Ok(heads)
}

fn parse_point(s: &str) -> Result<[f64; 2], CliError> {
    let bad = || CliError::Config(format!("expected a point as x,y, got {s:?}"));
    let (x, y) = s.split_once(',').ok_or_else(bad)?;
    let x: f64 = x.trim().parse().map_err(|_| bad())?;
    let y: f64 = y.trim().parse().map_err(|_| bad())?;
    if !(x.is_finite() && y.is_finite()) {
        return Err(bad());
    }
    Ok([x, y])
}

fn cmd_synth(ctx: &Ctx, a: SynthArgs) -> Result<(), CliError> {
    let file = &ctx.cfg.synth;
    let d = SynthConfig::default();
    let scale = match a.scale {
        Some(ScaleArg::Patch) => Scale::Patch,
        Some(ScaleArg::Berry) => Scale::Berry,
        None => file.scale.as_deref().map(parse_scale).transpose()?.unwrap_or(d.scale),
    };
    let cfg = SynthConfig {
        n_classes: a.classes.or(file.classes).unwrap_or(d.n_classes),
        tracks_per_class: a.tracks.or(file.tracks).unwrap_or(d.tracks_per_class),
        n_sessions: a.sessions.or(file.sessions).unwrap_or(d.n_sessions),
        feature_dim: a.dim.or(file.dim).unwrap_or(d.feature_dim),
        noise_std: a.noise.or(file.noise).unwrap_or(d.noise_std),
        scale,
        ..d
    };
    let (set, _) = gen_synthetic(&cfg, ctx.seed())?;
    let mut bytes = Vec::new();
    write_features(&set, &mut bytes)?;
    write_file(&a.out, &bytes)?;
    println!("{} records", set.len());
    Ok(())
}

fn cmd_train(ctx: &Ctx, a: TrainArgs) -> Result<(), CliError> {
    let set = read_tltf(&a.input)?;
    let file = &ctx.cfg.train;
    let n_classes = set
        .n_classes()
        .max(set.records.iter().map(|r| usize::from(r.variety_id) + 1).max().unwrap_or(0));
    let heads = parse_heads(a.heads.as_deref().or(file.heads.as_deref()).unwrap_or("time"), n_classes)?;
    let d = TrainConfig::default();
    let tc = TrainConfig {
        learning_rate: a.lr.or(file.lr).unwrap_or(d.learning_rate),
        epochs: a.epochs.or(file.epochs).unwrap_or(d.epochs),
        batch_size: a.batch_size.or(file.batch_size).unwrap_or(d.batch_size),
        seed: ctx.seed(),
    };
    let (train_set, test_set) = split_train_test(&set, ctx.train_fraction(a.train_fraction), ctx.seed()).map_err(split_err)?;
    ctx.info(format!("{} training records, {} held out", train_set.len(), test_set.len()));
    let model = build_model(set.feature_dim, heads, ctx.seed())?;
    let (model, history) = train(&model, &train_set, &tc)?;
    for (i, loss) in history.iter().enumerate() {
        println!("epoch {}\tloss {loss:.6}", i + 1);
    }
    let mut bytes = Vec::new();
    model.to_writer(&mut bytes)?;
    write_file(&a.out, &bytes)
}

fn cmd_embed(ctx: &Ctx, a: EmbedArgs) -> Result<(), CliError> {
    let model = PretextModel::from_reader(open(&a.model)?)?;
    let set = read_tltf(&a.input)?;
    if set.feature_dim != model.input_dim() {
        return Err(CliError::Config(format!(
            "feature dimension {} does not match the model's input dimension {}",
            set.feature_dim,
            model.input_dim()
        )));
    }
    let file = &ctx.cfg.embed;
    let d = EmbedHyper::default();
    let hyper = EmbedHyper {
        k: a.k.or(file.k).unwrap_or(d.k),
        min_dist: a.min_dist.or(file.min_dist).unwrap_or(d.min_dist),
        epochs: a.epochs.or(file.epochs).unwrap_or(d.epochs),
        negative_samples: a.negative_samples.or(file.negative_samples).unwrap_or(d.negative_samples),
        learning_rate: a.learning_rate.or(file.learning_rate).unwrap_or(d.learning_rate),
        seed: ctx.seed(),
    };
    let (train_set, test_set) = split_train_test(&set, ctx.train_fraction(a.train_fraction), ctx.seed()).map_err(split_err)?;
    let encode = |s: &FeatureSet| model.encode_batch(&s.records.iter().map(|r| r.features_f64()).collect::<Vec<_>>());
    let emb = embed(&encode(&train_set)?, &hyper)?;
    let mut rows = coord_rows(&train_set, emb.coords(), Split::Train)?;
    if !test_set.is_empty() {
        let placed = emb.transform_new(&encode(&test_set)?)?;
        rows.extend(coord_rows(&test_set, &placed, Split::Test)?);
    }
    let mut bytes = Vec::new();
    write_coord_rows(&rows, &mut bytes)?;
    write_file(&a.out, &bytes)?;
    if let Some(path) = &a.embedding {
        let mut bytes = Vec::new();
        emb.to_writer(&mut bytes)?;
        write_file(path, &bytes)?;
    }
    println!("{} rows ({} train, {} test)", rows.len(), train_set.len(), test_set.len());
    Ok(())
}

fn group_file_name(key: &GroupKey) -> String {
    match (key.variety_id, key.fungicide) {
        (Some(v), Some(f)) => format!("mixture_v{v}_f{}.json", u8::from(f)),
        _ => "mixture_pooled.json".into(),
    }
}

fn cmd_traj_fit(ctx: &Ctx, a: TrajFitArgs) -> Result<(), CliError> {
    let file = &ctx.cfg.traj;
    let d = TrajConfig::default();
    let cfg = TrajConfig {
        k: a.k.or(file.k).unwrap_or(d.k),
        eps: a.eps.or(file.eps).unwrap_or(d.eps),
        seed: ctx.seed(),
        pooled: a.pooled || file.pooled.unwrap_or(false),
        prior: MixturePrior::default(),
    };
    if cfg.eps == 0 {
        return Err(CliError::Config("eps must be at least 1".into()));
    }
    let rows: Vec<CoordRow> = read_coords(&a.coords)?.into_iter().filter(|r| keep(a.split, r.split)).collect();
    let mut lengths: BTreeMap<u32, usize> = BTreeMap::new();
    for r in &rows {
        *lengths.entry(r.track_id).or_default() += 1;
    }
    for (id, len) in lengths.iter().filter(|(_, &len)| len <= cfg.eps) {
        eprintln!("warning: skipping track {id}: {len} points, needs more than eps = {}", cfg.eps);
    }
    let rows: Vec<CoordRow> = rows.into_iter().filter(|r| lengths[&r.track_id] > cfg.eps).collect();
    if rows.is_empty() {
        return Err(CliError::Data("no track is long enough to fit".into()));
    }
    let tracks = tracks_from_rows(&rows, None)?;
    let model = fit_trajectory_model(&tracks, &cfg)?;

    fs::create_dir_all(&a.out_dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", a.out_dir.display())))?;
    let mut bytes = Vec::new();
    model.to_writer(&mut bytes)?;
    write_file(&a.out_dir.join("trajectory.json"), &bytes)?;
    for (i, g) in model.groups.iter().enumerate() {
        let path = a.out_dir.join(group_file_name(&g.key));
        let mut bytes = Vec::new();
        model.only_group(i).expect("index in range").to_writer(&mut bytes)?;
        write_file(&path, &bytes)?;
        println!(
            "{}: {} tracks, {} samples, {} components",
            path.display(),
            g.n_tracks,
            g.n_samples,
            g.mixture.n_components()
        );
    }
    Ok(())
}

fn cmd_traj_rollout(ctx: &Ctx, a: TrajRolloutArgs) -> Result<(), CliError> {
    let model = TrajectoryModel::from_reader(open(&a.model)?)?;
    let group = match (a.variety, a.fungicide) {
        (Some(v), Some(f)) => model
            .group(v, f)
            .ok_or_else(|| CliError::Config(format!("model has no group for variety {v}, fungicide {f}")))?,
        (None, None) if model.groups.len() == 1 => &model.groups[0],
        (None, None) => {
            return Err(CliError::Config(format!(
                "model holds {} groups; pass --variety and --fungicide",
                model.groups.len()
            )))
        }
        _ => return Err(CliError::Config("--variety and --fungicide go together".into())),
    };
    let start = parse_point(&a.start)?;
    let eps = model.config.eps;
    let steps = a.steps.or(ctx.cfg.traj.steps).unwrap_or_else(|| default_steps(model.n_sessions, eps));
    let mode = match a.mode {
        Some(ModeArg::Mean) => RolloutMode::Mean,
        Some(ModeArg::Sample) => RolloutMode::Sample,
        None => ctx.cfg.traj.mode.as_deref().map(parse_mode).transpose()?.unwrap_or(RolloutMode::Mean),
    };
    let r = rollout(&group.mixture, start, steps, mode, ctx.seed(), eps)?;
    if let RolloutStatus::Truncated { completed, reason } = &r.status {
        eprintln!("warning: rollout stopped after {completed} of {steps} steps: {reason}");
    }
    let mut bytes = Vec::new();
    write_rollout_csv(&r, &mut bytes)?;
    match &a.out {
        Some(path) => write_file(path, &bytes),
        None => std::io::stdout()
            .write_all(&bytes)
            .map_err(|e| CliError::Config(format!("cannot write to stdout: {e}"))),
    }
}

fn cmd_eval(ctx: &Ctx, a: EvalArgs) -> Result<(), CliError> {
    let report = match (&a.model, &a.input, &a.coords, a.unseen) {
        (Some(model), Some(input), None, None) => {
            let model = PretextModel::from_reader(open(model)?)?;
            let set = read_tltf(input)?;
            let subset = match a.split {
                SplitArg::All => set,
                split => {
                    let (train_set, test_set) = split_train_test(&set, ctx.train_fraction(a.train_fraction), ctx.seed()).map_err(split_err)?;
                    if split == SplitArg::Train {
                        train_set
                    } else {
                        test_set
                    }
                }
            };
            eval_heads(&model, &subset)?
        }
        (None, _, Some(coords), Some(n)) => {
            let rows: Vec<CoordRow> = read_coords(coords)?.into_iter().filter(|r| keep(a.split, r.split)).collect();
            let points: Vec<[f64; 2]> = rows.iter().map(|r| [r.x, r.y]).collect();
            let varieties: Vec<u16> = rows.iter().map(|r| r.variety_id).collect();
            let percent = eval_unseen_classes(&points, &varieties, n, ctx.seed())?;
            EvalReport {
                n_records: rows.len(),
                unseen: Some(Agreement {
                    percent,
                    count: rows.len(),
                }),
                ..EvalReport::default()
            }
        }
        _ => return Err(CliError::Config("pass either --model and --in, or --coords and --unseen".into())),
    };
    print!("{}", report.table());
    if let Some(path) = &a.out {
        let mut bytes = Vec::new();
        report.to_writer(&mut bytes)?;
        write_file(path, &bytes)?;
    }
    Ok(())
}

fn cmd_plot(ctx: &Ctx, a: PlotArgs) -> Result<(), CliError> {
    let rows: Vec<CoordRow> = read_coords(&a.coords)?.into_iter().filter(|r| keep(a.split, r.split)).collect();
    let last_session = rows.iter().map(|r| r.session_index).max().unwrap_or(0).max(1);
    let markers: Vec<Marker> = rows
        .iter()
        .map(|r| Marker {
            at: [r.x, r.y],
            color: match a.color {
                ColorArg::Time => ramp_color(f64::from(r.session_index) / f64::from(last_session)),
                ColorArg::Variety => class_color(usize::from(r.variety_id)),
                ColorArg::Fungicide => class_color(usize::from(r.fungicide)),
            },
        })
        .collect();
    let paths = a
        .rollout
        .iter()
        .map(|p| read_rollout_csv(open(p)?).map_err(|e| CliError::Data(format!("{}: {e}", p.display()))))
        .collect::<Result<Vec<_>, _>>()?;
    write_file(&a.out, render_svg(&markers, &paths).as_bytes())?;
    ctx.info(format!("{} markers, {} rollouts", markers.len(), paths.len()));
    println!("{} points", markers.len());
    Ok(())
}
