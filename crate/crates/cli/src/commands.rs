use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use deblur::export::{curve_csv, map_trace_csv, picard_csv, trace_csv};
use deblur::filters::{filtered_reconstruct, FilterSpec};
use deblur::imagegrid::io::matrix_to_csv;
use deblur::imagegrid::{add_noise_image, convolve2d, unvectorize, vectorize, Convolution, NoiseSpec};
use deblur::metrics::{quality_report, QualityReport};
use deblur::spectral::SvdTriple;
use deblur::variational::{
    gradient_reconstruct, map_blind_deblur_image, DiffOperator, GdConfig, Initialization, MapConfig, RegularizerSpec,
};
use deblur::{BoundaryCondition, Image, Psf};
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Map, Value};

use crate::args::{AnalyzeArgs, BlurArgs, DeblurArgs, EvalArgs, Method, NoiseArg, PsfArgs, PsfSource, Selector};
use crate::files::{atomic_write, load_image, save_image, write_channel_csvs};
use crate::problem::{choose_filter, diagnostics, filter_summary, operator_norm_sq, resolve_psf, spectral, Seed};

/// Output paths written so far, in order.
#[derive(Default)]
struct Outputs(Vec<PathBuf>);

impl Outputs {
    fn push(&mut self, p: &Path) {
        self.0.push(p.to_path_buf());
    }

    fn extend(&mut self, ps: Vec<PathBuf>) {
        self.0.extend(ps);
    }
}

/// Prints the summary and writes it to `json` when given.
fn finish(mut summary: Map<String, Value>, outputs: Outputs, json: Option<&Path>) -> Result<()> {
    summary.insert("outputs".into(), json!(outputs.0));
    let text = serde_json::to_string_pretty(&Value::Object(summary))? + "\n";
    if let Some(path) = json {
        atomic_write(path, text.as_bytes())?;
    }
    print!("{text}");
    Ok(())
}

fn object(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("summaries are built from object literals"),
    }
}

fn bc_name(bc: BoundaryCondition) -> &'static str {
    match bc {
        BoundaryCondition::Zero => "zero",
        BoundaryCondition::Periodic => "periodic",
        BoundaryCondition::Reflexive => "reflexive",
    }
}

fn noise_spec(noise: NoiseArg, seed: u64) -> NoiseSpec {
    match noise {
        NoiseArg::Frob(f) => NoiseSpec::frobenius(f, seed),
        NoiseArg::Std(eta) => NoiseSpec::std(eta, seed),
    }
}

fn check_same_shape(a: &Image, b: &Image, what: &str) -> Result<()> {
    if (a.height(), a.width(), a.channel_count()) != (b.height(), b.width(), b.channel_count()) {
        bail!(
            "{what} is {}x{}x{} but the input is {}x{}x{}",
            b.height(),
            b.width(),
            b.channel_count(),
            a.height(),
            a.width(),
            a.channel_count()
        );
    }
    Ok(())
}

fn warn(msg: &str) {
    eprintln!("warning: {msg}");
}

pub fn blur(args: BlurArgs) -> Result<()> {
    let bc: BoundaryCondition = args.bc.into();
    let input = load_image(&args.input)?;
    let mut seed = Seed::new(args.seed);
    let (psf, psf_info) = resolve_psf(&args.psf, &mut seed)?;
    let blurred = input.image.try_map(|_, ch| convolve2d(ch, &psf, bc))?;

    let mut outputs = Outputs::default();
    let (result, noise_norm) = match args.noise {
        Some(noise) => {
            let (noisy, e) = add_noise_image(&blurred, &noise_spec(noise, seed.get()))?;
            let norm = e.channels().iter().map(|c| c.norm_squared()).sum::<f64>().sqrt();
            if let Some(path) = &args.noise_out {
                let tables: Vec<String> = e.channels().iter().map(matrix_to_csv).collect();
                outputs.extend(write_channel_csvs(path, &tables)?);
            }
            (noisy, norm)
        }
        None => (blurred, 0.0),
    };
    save_image(&args.out, &result, input.maxval)?;
    outputs.push(&args.out);

    let summary = json!({
        "command": "blur",
        "input": args.input,
        "psf": psf_info,
        "bc": bc_name(bc),
        "noise": args.noise.map(|n| n.to_string()),
        "noise_frobenius": noise_norm,
        "seed": seed.summary(),
    });
    finish(object(summary), outputs, args.json.as_deref())
}

/// Rejects flag combinations that cannot apply to the chosen method.
fn validate_deblur(args: &DeblurArgs) -> Result<()> {
    let blind = args.method == Method::MapBlind;
    let iterative = matches!(args.method, Method::Variational | Method::MapBlind);
    if blind && args.psf.is_some() {
        bail!("--psf conflicts with --method map-blind, which estimates the kernel");
    }
    if !blind && args.psf.is_none() {
        bail!("--method {} needs --psf", args.method.name());
    }
    if blind && args.noise.is_none() {
        bail!("--method map-blind needs --noise to set the prior weight");
    }
    if !blind && (args.kernel_size.is_some() || args.psf_out.is_some()) {
        bail!("--kernel-size and --psf-out apply to --method map-blind only");
    }
    if args.method != Method::Variational && (args.reg.is_some() || args.step.is_some() || args.tol.is_some()) {
        bail!("--reg, --step and --tol apply to --method variational only");
    }
    if !iterative && (args.iters.is_some() || args.emit_trace.is_some()) {
        bail!("--iters and --emit-trace apply to iterative methods only");
    }
    if blind && args.emit_picard.is_some() {
        bail!("--emit-picard needs a known PSF");
    }
    let selector = effective_selector(args);
    if args.emit_curve.is_some() && !matches!(selector, Some(s) if !matches!(s, Selector::Fixed(_))) {
        bail!("--emit-curve needs a gcv, lcurve or discrepancy selector");
    }
    if args.method == Method::Tsvd && matches!(selector, Some(Selector::Lcurve | Selector::Discrepancy)) {
        bail!("tsvd supports the fixed and gcv selectors only");
    }
    if selector == Some(Selector::Discrepancy) && args.noise.is_none() {
        bail!("the discrepancy selector needs --noise");
    }
    Ok(())
}

/// The selector that will run; naive and map-blind ignore any given one.
fn effective_selector(args: &DeblurArgs) -> Option<Selector> {
    match args.method {
        Method::Naive | Method::MapBlind => None,
        _ => Some(args.select.unwrap_or(Selector::Gcv)),
    }
}

pub fn deblur(args: DeblurArgs) -> Result<()> {
    validate_deblur(&args)?;
    if args.select.is_some() && effective_selector(&args).is_none() {
        warn(&format!("--select is ignored by --method {}", args.method.name()));
    }
    let bc: BoundaryCondition = args.bc.into();
    let input = load_image(&args.input)?;
    let truth = match &args.truth {
        Some(p) => {
            let t = load_image(p)?.image;
            check_same_shape(&input.image, &t, "ground truth")?;
            Some(t)
        }
        None => None,
    };
    let (m, n, channels) = (input.image.height(), input.image.width(), input.image.channel_count());
    let mut seed = Seed::new(args.seed);
    let mut outputs = Outputs::default();
    let mut summary = object(json!({
        "command": "deblur",
        "input": args.input,
        "method": args.method.name(),
        "selector": effective_selector(&args).map(Selector::name),
        "bc": bc_name(bc),
    }));

    let result = if args.method == Method::MapBlind {
        let noise = args.noise.expect("validated");
        let mut cfg = MapConfig::new(args.kernel_size.unwrap_or(7), noise.variance(m * n, channels));
        cfg.boundary = bc;
        if let Some(iters) = args.iters {
            cfg.iterations_per_level = iters;
        }
        let (image, kernels, traces) = map_blind_deblur_image(&input.image, &cfg)?;
        if let Some(path) = &args.psf_out {
            let tables: Vec<String> = kernels.iter().map(|k| matrix_to_csv(k.kernel())).collect();
            outputs.extend(write_channel_csvs(path, &tables)?);
        }
        if let Some(path) = &args.emit_trace {
            let tables: Vec<String> = traces.iter().map(|t| map_trace_csv(t)).collect();
            outputs.extend(write_channel_csvs(path, &tables)?);
        }
        summary.insert("map_config".into(), serde_json::to_value(&cfg)?);
        let final_objective: Vec<Option<f64>> =
            traces.iter().map(|t| t.last().map(|e| e.objective)).collect();
        summary.insert("final_objective".into(), json!(final_objective));
        image
    } else {
        let source = args.psf.as_ref().expect("validated");
        let (psf, psf_info) = resolve_psf(source, &mut seed)?;
        summary.insert("psf".into(), psf_info);
        let (image, per_channel) = deblur_known(&args, &input.image, &psf, bc, &mut outputs)?;
        summary.insert("channels".into(), Value::Array(per_channel));
        image
    };

    save_image(&args.out, &result, input.maxval)?;
    outputs.push(&args.out);
    if let Some(t) = &truth {
        summary.insert("quality".into(), quality_json(&quality_report(&result.clamped(), t, 1.0)?));
    }
    summary.insert("seed".into(), seed.summary());
    finish(summary, outputs, args.json.as_deref())
}

fn quality_json(q: &QualityReport) -> Value {
    serde_json::to_value(q).expect("quality report serializes")
}

/// Non-blind reconstruction, channel by channel.
fn deblur_known(
    args: &DeblurArgs,
    image: &Image,
    psf: &Psf,
    bc: BoundaryCondition,
    outputs: &mut Outputs,
) -> Result<(Image, Vec<Value>)> {
    let (m, n, channels) = (image.height(), image.width(), image.channel_count());
    let selector = effective_selector(args);
    let needs_svd = args.method != Method::Variational
        || args.emit_picard.is_some()
        || matches!(selector, Some(s) if !matches!(s, Selector::Fixed(_)));
    let sp = if needs_svd { Some(spectral(psf, bc, m, n)?) } else { None };
    let noise_norm = args.noise.map(|v| v.channel_norm(m * n, channels));

    let (mut picard_tables, mut curve_tables, mut trace_tables) = (Vec::new(), Vec::new(), Vec::new());
    let mut per_channel = Vec::with_capacity(channels);
    let mut recon = Vec::with_capacity(channels);
    for (c, ch) in image.channels().iter().enumerate() {
        let b = vectorize(ch);
        let mut info = Map::new();
        if let Some(sp) = &sp {
            let d = diagnostics(&sp.svd, &b)?;
            if !d.picard_satisfied {
                warn(&format!("channel {c}: the discrete Picard condition fails on this data"));
            }
            info.insert("structure".into(), json!(sp.structure));
            info.insert("picard_satisfied".into(), json!(d.picard_satisfied));
            info.insert("eta_hat".into(), json!(d.noise.eta));
            info.insert("plateau_index".into(), json!(d.noise.plateau_index));
            picard_tables.push(picard_csv(&d.series));
        }

        let x = match args.method {
            Method::Naive => {
                let svd = &sp.as_ref().expect("spectral methods build the SVD").svd;
                let spec = FilterSpec::Custom { phi: vec![1.0; svd.len()] };
                info.insert("filter".into(), filter_summary(&spec));
                filtered_reconstruct(svd, &b, &spec)?
            }
            Method::Tsvd | Method::Tikhonov => {
                let svd = &sp.as_ref().expect("spectral methods build the SVD").svd;
                let (spec, selection) =
                    choose_filter(args.method, selector.expect("has selector"), svd, &b, noise_norm)?;
                if let Some(s) = selection {
                    curve_tables.push(curve_csv(&s.curve));
                }
                info.insert("filter".into(), filter_summary(&spec));
                filtered_reconstruct(svd, &b, &spec)?
            }
            Method::Variational => {
                let lambda = match selector.expect("has selector") {
                    Selector::Fixed(lambda) => lambda,
                    s => {
                        let svd = &sp.as_ref().expect("selectors build the SVD").svd;
                        let (spec, selection) = choose_filter(Method::Tikhonov, s, svd, &b, noise_norm)?;
                        if let Some(sel) = selection {
                            curve_tables.push(curve_csv(&sel.curve));
                        }
                        match spec {
                            FilterSpec::Tikhonov { alpha } => alpha * alpha,
                            _ => unreachable!("Tikhonov selectors return an alpha"),
                        }
                    }
                };
                let run = variational(args, ch, psf, bc, lambda, sp.as_ref().map(|s| &s.svd))?;
                info.extend(run.info);
                trace_tables.push(run.trace);
                run.x
            }
            Method::MapBlind => unreachable!("handled by the blind path"),
        };
        per_channel.push(Value::Object(info));
        recon.push(unvectorize(&x, m, n)?);
    }

    if let Some(path) = &args.emit_picard {
        outputs.extend(write_channel_csvs(path, &picard_tables)?);
    }
    if let Some(path) = &args.emit_curve {
        outputs.extend(write_channel_csvs(path, &curve_tables)?);
    }
    if let Some(path) = &args.emit_trace {
        outputs.extend(write_channel_csvs(path, &trace_tables)?);
    }
    Ok((Image::new(recon)?, per_channel))
}

/// Default stopping tolerance of the variational method; tight enough that
/// the iterate matches the exact minimizer to about 1e−4 on typical blurs.
const DEFAULT_TOL: f64 = 1e-12;

struct VariationalRun {
    x: DVector<f64>,
    /// Trace as CSV.
    trace: String,
    info: Map<String, Value>,
}

fn variational(
    args: &DeblurArgs,
    ch: &DMatrix<f64>,
    psf: &Psf,
    bc: BoundaryCondition,
    lambda: f64,
    svd: Option<&SvdTriple>,
) -> Result<VariationalRun> {
    let (m, n) = ch.shape();
    let reg = match &args.reg {
        Some(r) => r.0.clone(),
        None => RegularizerSpec::SmoothNorm { d: DiffOperator::Identity },
    };
    let op = Convolution::new(psf.clone(), bc, m, n)?;
    let step = match args.step {
        Some(s) => s,
        None => {
            let lip_reg = reg
                .gradient_lipschitz()
                .context("this regularizer has no gradient Lipschitz bound; pass --step")?;
            let norm_sq = match svd {
                Some(svd) => svd.singular_values().max().powi(2),
                None => operator_norm_sq(&op),
            };
            1.0 / (2.0 * norm_sq + lambda * lip_reg)
        }
    };
    let b = vectorize(ch);
    let mut cfg = GdConfig::new(step, lambda);
    cfg.init = Initialization::Observation;
    cfg.rel_tol = args.tol.unwrap_or(DEFAULT_TOL);
    if let Some(iters) = args.iters {
        cfg.max_iters = iters;
    }
    let out = gradient_reconstruct(&op, &b, (m, n), &reg, &cfg)?;
    let info = object(json!({
        "lambda": lambda,
        "regularizer": reg,
        "step": step,
        "iterations": out.trace.len() - 1,
        "converged": out.converged,
    }));
    Ok(VariationalRun { trace: trace_csv(&out.trace), x: out.x, info })
}

pub fn analyze(args: AnalyzeArgs) -> Result<()> {
    if let Selector::Fixed(_) = args.select {
        bail!("analyze reports a selection curve; use gcv, lcurve or discrepancy");
    }
    if args.select == Selector::Discrepancy && args.noise.is_none() {
        bail!("the discrepancy selector needs --noise");
    }
    let bc: BoundaryCondition = args.bc.into();
    let input = load_image(&args.input)?;
    let (m, n, channels) = (input.image.height(), input.image.width(), input.image.channel_count());
    let mut seed = Seed::new(args.seed);
    let (psf, psf_info) = resolve_psf(&args.psf, &mut seed)?;
    let sp = spectral(&psf, bc, m, n)?;
    let noise_norm = args.noise.map(|v| v.channel_norm(m * n, channels));

    let (mut picard_tables, mut curve_tables, mut per_channel) = (Vec::new(), Vec::new(), Vec::new());
    for (c, ch) in input.image.channels().iter().enumerate() {
        let b = vectorize(ch);
        let d = diagnostics(&sp.svd, &b)?;
        if !d.picard_satisfied {
            warn(&format!("channel {c}: the discrete Picard condition fails on this data"));
        }
        let (spec, selection) = choose_filter(Method::Tikhonov, args.select, &sp.svd, &b, noise_norm)?;
        let selection = selection.expect("non-fixed selectors record a curve");
        curve_tables.push(curve_csv(&selection.curve));
        picard_tables.push(picard_csv(&d.series));
        per_channel.push(json!({
            "eta_hat": d.noise.eta,
            "plateau_index": d.noise.plateau_index,
            "picard": if d.picard_satisfied { "satisfied" } else { "violated" },
            "selected": filter_summary(&spec),
        }));
    }

    let mut outputs = Outputs::default();
    if let Some(path) = &args.emit_picard {
        outputs.extend(write_channel_csvs(path, &picard_tables)?);
    }
    if let Some(path) = &args.emit_curve {
        outputs.extend(write_channel_csvs(path, &curve_tables)?);
    }
    let summary = json!({
        "command": "analyze",
        "input": args.input,
        "psf": psf_info,
        "bc": bc_name(bc),
        "structure": sp.structure,
        "size": sp.svd.len(),
        "condition_number": sp.svd.condition_number(),
        "selector": args.select.name(),
        "channels": per_channel,
        "seed": seed.summary(),
    });
    finish(object(summary), outputs, args.json.as_deref())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let x = load_image(&args.input)?.image;
    let truth = load_image(&args.truth)?.image;
    check_same_shape(&x, &truth, "ground truth")?;
    let report = quality_report(&x, &truth, args.peak)?;
    let summary = json!({
        "command": "eval",
        "input": args.input,
        "truth": args.truth,
        "peak": args.peak,
        "quality": quality_json(&report),
    });
    finish(object(summary), Outputs::default(), args.json.as_deref())
}

pub fn psf(args: PsfArgs) -> Result<()> {
    if let PsfSource::File(_) = args.psf {
        bail!("psf synthesizes a kernel; pass gauss:... or motion:...");
    }
    let mut seed = Seed::new(args.seed);
    let (psf, psf_info) = resolve_psf(&args.psf, &mut seed)?;
    atomic_write(&args.out, matrix_to_csv(psf.kernel()).as_bytes())?;
    let mut outputs = Outputs::default();
    outputs.push(&args.out);
    let summary = json!({
        "command": "psf",
        "psf": psf_info,
        "doubly_symmetric": psf.is_doubly_symmetric(1e-12),
        "seed": seed.summary(),
    });
    finish(object(summary), outputs, args.json.as_deref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    fn deblur_args(extra: &[&str]) -> DeblurArgs {
        let mut argv = vec!["deblur", "deblur", "--in", "a.pgm", "--out", "b.pgm"];
        argv.extend_from_slice(extra);
        match crate::args::Cli::try_parse_from(argv).unwrap().command {
            crate::args::Command::Deblur(a) => a,
            _ => unreachable!(),
        }
    }

    #[test]
    fn flag_conflicts_are_rejected() {
        let bad: &[&[&str]] = &[
            &["--method", "tikhonov"],
            &["--method", "map-blind", "--psf", "gauss:3"],
            &["--method", "map-blind"],
            &["--method", "tikhonov", "--psf", "gauss:3", "--kernel-size", "5"],
            &["--method", "tikhonov", "--psf", "gauss:3", "--reg", "smooth"],
            &["--method", "tsvd", "--psf", "gauss:3", "--emit-trace", "t.csv"],
            &["--method", "tikhonov", "--psf", "gauss:3", "--select", "fixed:0.1", "--emit-curve", "c.csv"],
            &["--method", "tsvd", "--psf", "gauss:3", "--select", "lcurve"],
            &["--method", "tikhonov", "--psf", "gauss:3", "--select", "discrepancy"],
            &["--method", "map-blind", "--noise", "std:0.01", "--emit-picard", "p.csv"],
        ];
        for extra in bad {
            assert!(validate_deblur(&deblur_args(extra)).is_err(), "{extra:?}");
        }
        let good: &[&[&str]] = &[
            &["--method", "naive", "--psf", "gauss:3"],
            &["--method", "tikhonov", "--psf", "gauss:3", "--emit-curve", "c.csv"],
            &["--method", "variational", "--psf", "gauss:3", "--select", "fixed:0.01", "--emit-trace", "t.csv"],
            &["--method", "map-blind", "--noise", "std:0.01", "--kernel-size", "5", "--iters", "3"],
        ];
        for extra in good {
            assert!(validate_deblur(&deblur_args(extra)).is_ok(), "{extra:?}");
        }
    }

    #[test]
    fn naive_and_blind_ignore_selector() {
        assert_eq!(effective_selector(&deblur_args(&["--method", "naive", "--select", "gcv"])), None);
        assert_eq!(
            effective_selector(&deblur_args(&["--method", "tikhonov"])),
            Some(Selector::Gcv)
        );
    }
}
