mod args;

use std::fmt::Write as _;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;

use voxelkd::camera::{CameraModel, DepthMap};
use voxelkd::distill::{
    kd_sa_loss, kd_sc_loss_with_temperature, kd_t_loss, make_gt2d, overall_student_loss, smooth_cross_entropy,
    ssc_loss, LossResult, LossWeights, Mode,
};
use voxelkd::io::vxg::{self, VxgFile};
use voxelkd::io::{camera_cfg, depth_png, write_atomic};
use voxelkd::metrics::{evaluate, EvalMask};
use voxelkd::noise::{inject_delta_noise, inject_zero_noise, NoiseCounts};
use voxelkd::surface::{eval_mask_from_depth, render_view, tsdf_from_depth, TsdfConfig};
use voxelkd::{ClassVocabulary, GridSpec, LabelGrid};

use args::{Cli, Command, EvalArgs, Format, InjectArgs, KdLossArgs, NoiseStatsArgs, RenderArgs, TsdfArgs};

/// Exit status 2: unusable input. Exit status 1: anything else.
#[derive(Debug)]
enum Failure {
    Input(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Internal(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Internal(m) => m,
        }
    }
}

type CmdResult = Result<(), Failure>;

fn input_err(path: &Path) -> impl FnOnce(voxelkd::Error) -> Failure + '_ {
    move |e| Failure::Input(format!("{}: {e}", path.display()))
}

fn output_err(path: &Path) -> impl FnOnce(voxelkd::Error) -> Failure + '_ {
    move |e| Failure::Internal(format!("writing {}: {e}", path.display()))
}

fn invalid(e: voxelkd::Error) -> Failure {
    Failure::Input(e.to_string())
}

fn check_inputs(paths: &[&Path]) -> CmdResult {
    for p in paths {
        if !p.is_file() {
            return Err(Failure::Input(format!("{}: no such file", p.display())));
        }
    }
    Ok(())
}

fn check_outputs(paths: &[&Path]) -> CmdResult {
    for p in paths {
        if p.is_dir() {
            return Err(Failure::Input(format!("{}: is a directory", p.display())));
        }
        let parent = p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
        if !parent.is_dir() {
            return Err(Failure::Input(format!("{}: parent directory does not exist", p.display())));
        }
    }
    Ok(())
}

fn read_camera(path: &Path) -> Result<CameraModel, Failure> {
    camera_cfg::read(path).map_err(input_err(path))
}

fn read_depth(path: &Path) -> Result<DepthMap, Failure> {
    depth_png::read(path).map_err(input_err(path))
}

fn read_vxg(path: &Path) -> Result<VxgFile, Failure> {
    vxg::read(path).map_err(input_err(path))
}

fn read_labels(path: &Path, vocab: &ClassVocabulary) -> Result<LabelGrid, Failure> {
    read_vxg(path)?.to_labels(vocab.num_classes()).map_err(input_err(path))
}

fn write_vxg(path: &Path, file: &VxgFile) -> CmdResult {
    vxg::write(path, file).map_err(output_err(path))
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    write_atomic(path, text.as_bytes()).map_err(output_err(path))
}

fn cmd_tsdf(a: &TsdfArgs) -> CmdResult {
    check_inputs(&[&a.depth, &a.camera])?;
    let mut outputs = vec![a.output.as_path()];
    outputs.extend(a.mask_out.as_deref());
    check_outputs(&outputs)?;
    let spec = GridSpec::new(a.grid.grid, a.grid.voxel_size, a.grid.origin).map_err(invalid)?;
    let cfg = TsdfConfig { truncation: a.truncation, normalize: !a.no_normalize };
    if let Some(warning) = cfg.validate(&spec).map_err(invalid)? {
        log::warn!("{warning}");
    }
    let cam = read_camera(&a.camera)?;
    let depth = read_depth(&a.depth)?;
    let tsdf = tsdf_from_depth(&cam, &depth, &spec, &cfg).map_err(invalid)?;
    let file = VxgFile::from_scalars(&tsdf)
        .map_err(invalid)?
        .with_comment(format!("truncation={} normalize={}", cfg.truncation, cfg.normalize));
    if let Some(mask_path) = &a.mask_out {
        let mask = eval_mask_from_depth(&cam, &depth, &spec, None).map_err(invalid)?;
        let labels = LabelGrid::new(spec, u8::MAX as usize - 1, mask.to_codes()).map_err(invalid)?;
        write_vxg(mask_path, &VxgFile::from_labels(&labels).map_err(invalid)?)?;
    }
    write_vxg(&a.output, &file)
}

fn cmd_render_depth(a: &RenderArgs) -> CmdResult {
    check_inputs(&[&a.gt, &a.camera])?;
    let mut outputs = vec![a.output.as_path()];
    outputs.extend(a.labels_out.as_deref());
    check_outputs(&outputs)?;
    let vocab = ClassVocabulary::default();
    let gt = read_labels(&a.gt, &vocab)?;
    let cam = read_camera(&a.camera)?;
    let view = render_view(&cam, &gt);
    if let Some(path) = &a.labels_out {
        write_vxg(path, &VxgFile::from_label_image(&view.labels).map_err(invalid)?)?;
    }
    depth_png::write(&a.output, &view.depth).map_err(output_err(&a.output))
}

fn cmd_noise_stats(a: &NoiseStatsArgs) -> CmdResult {
    check_inputs(&[&a.clean, &a.noisy, &a.gt, &a.camera])?;
    check_outputs(&[&a.output])?;
    let vocab = ClassVocabulary::default();
    let gt = read_labels(&a.gt, &vocab)?;
    let cam = read_camera(&a.camera)?;
    let clean = read_depth(&a.clean)?;
    let noisy = read_depth(&a.noisy)?;
    let clean_labels = make_gt2d(&cam, &clean, &gt).map_err(input_err(&a.clean))?;
    let noisy_labels = make_gt2d(&cam, &noisy, &gt).map_err(input_err(&a.noisy))?;
    let mut counts = NoiseCounts::new(vocab.num_classes());
    counts.add_zero(&clean, &noisy, &clean_labels).map_err(invalid)?;
    counts.add_delta(&clean, &noisy, &clean_labels, &noisy_labels).map_err(invalid)?;
    write_text(&a.output, &counts.report().to_csv(&vocab))
}

fn cmd_inject_noise(a: &InjectArgs) -> CmdResult {
    if a.zero_rate.is_none() && a.delta_rate.is_none() {
        return Err(Failure::Input("at least one of --zero-rate or --delta-rate is required".into()));
    }
    check_inputs(&[&a.depth])?;
    check_outputs(&[&a.output])?;
    let clean = read_depth(&a.depth)?;
    let mut out = clean.clone();
    if let Some(rate) = a.delta_rate {
        out = inject_delta_noise(&clean, rate, (a.delta_min, a.delta_max), a.seed).map_err(invalid)?;
    }
    if let Some(rate) = a.zero_rate {
        let holes = inject_zero_noise(&clean, rate, a.seed).map_err(invalid)?;
        let depths = out
            .depths()
            .iter()
            .zip(holes.depths())
            .map(|(&d, &h)| if h == 0.0 { 0.0 } else { d })
            .collect();
        let (w, h) = clean.size();
        out = DepthMap::new(w, h, depths).map_err(|e| Failure::Internal(e.to_string()))?;
    }
    depth_png::write(&a.output, &out).map_err(output_err(&a.output))
}

fn cmd_eval(a: &EvalArgs) -> CmdResult {
    check_inputs(&[&a.pred, &a.gt, &a.mask])?;
    check_outputs(&[&a.output])?;
    let vocab = ClassVocabulary::default();
    let pred = read_labels(&a.pred, &vocab)?;
    let gt = read_labels(&a.gt, &vocab)?;
    let mask_file = read_vxg(&a.mask)?;
    let codes = mask_file.to_labels(u8::MAX as usize - 1).map_err(input_err(&a.mask))?;
    if codes.spec().dims() != gt.spec().dims() {
        return Err(Failure::Input(format!(
            "{}: mask dims {:?} differ from ground truth {:?}",
            a.mask.display(),
            codes.spec().dims(),
            gt.spec().dims()
        )));
    }
    let mask = EvalMask::from_codes(codes.labels()).map_err(input_err(&a.mask))?;
    let report = evaluate(&pred, &gt, &mask, &vocab).map_err(invalid)?;
    let text = match a.format {
        Format::Csv => report.to_csv(&vocab),
        Format::Table => report.to_table(&vocab),
    };
    write_text(&a.output, &text)
}

fn cmd_kd_loss(a: &KdLossArgs) -> CmdResult {
    let mut inputs = vec![
        a.student_features.as_path(),
        a.teacher_features.as_path(),
        a.student_logits.as_path(),
        a.teacher_logits.as_path(),
        a.gt.as_path(),
    ];
    inputs.extend(a.logits2d.as_deref());
    inputs.extend(a.gt2d.as_deref());
    check_inputs(&inputs)?;
    check_outputs(&[&a.output])?;
    let weights =
        LossWeights { lambda_2d: a.lambda, beta_kd: a.beta, smoothing: a.smoothing, temperature: a.temperature };
    weights.validate().map_err(invalid)?;

    let vocab = ClassVocabulary::default();
    let channels = |p: &Path| read_vxg(p)?.to_channels().map_err(input_err(p));
    let s_feat = channels(&a.student_features)?;
    let t_feat = channels(&a.teacher_features)?;
    let s_logits = channels(&a.student_logits)?;
    let t_logits = channels(&a.teacher_logits)?;
    let gt = read_labels(&a.gt, &vocab)?;

    let ssc = match (&a.logits2d, &a.gt2d) {
        (Some(lp), Some(gp)) => {
            let logits2d = read_vxg(lp)?.to_pixel_features().map_err(input_err(lp))?;
            let gt2d = read_vxg(gp)?.to_label_image().map_err(input_err(gp))?;
            ssc_loss(&s_logits, &gt, &logits2d, &gt2d, &weights, Mode::Value).map_err(invalid)?.as_result()
        }
        _ => smooth_cross_entropy(&s_logits, &gt, weights.smoothing, Mode::Value).map_err(invalid)?,
    };
    let kd_t = kd_t_loss(&s_feat, &t_feat, Mode::Value).map_err(invalid)?;
    let kd_sc = kd_sc_loss_with_temperature(&s_logits, &t_logits, &gt, weights.temperature, Mode::Value)
        .map_err(invalid)?;
    let kd_sa = kd_sa_loss(&s_logits, &t_logits, &gt, Mode::Value).map_err(invalid)?;
    let total: LossResult = overall_student_loss(&ssc, &kd_t, &kd_sc, &kd_sa, &weights).map_err(invalid)?;

    let mut text = String::new();
    for (name, value) in [
        ("loss_ssc", ssc.value),
        ("loss_kd_t", kd_t.value),
        ("loss_kd_sc", kd_sc.value),
        ("loss_kd_sa", kd_sa.value),
        ("loss_total", total.value),
    ] {
        let _ = writeln!(text, "{name} = {value}");
    }
    write_text(&a.output, &text)
}

fn dispatch(command: &Command) -> CmdResult {
    match command {
        Command::Tsdf(a) => cmd_tsdf(a),
        Command::RenderDepth(a) => cmd_render_depth(a),
        Command::NoiseStats(a) => cmd_noise_stats(a),
        Command::InjectNoise(a) => cmd_inject_noise(a),
        Command::Eval(a) => cmd_eval(a),
        Command::KdLoss(a) => cmd_kd_loss(a),
    }
}

pub fn run() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
