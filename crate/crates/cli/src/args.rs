use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use deblur::variational::{DiffOperator, RegularizerSpec};
use deblur::BoundaryCondition;

#[derive(Debug, Parser)]
#[command(name = "deblur", version, about = "Model-based image deblurring with spectral regularization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Blur an image with a PSF and optionally add white Gaussian noise.
    Blur(BlurArgs),
    /// Reconstruct a sharp image from a blurred one.
    Deblur(DeblurArgs),
    /// Spectral diagnostics: Picard series, noise plateau, selection curves.
    Analyze(AnalyzeArgs),
    /// Quality metrics of an image against ground truth.
    Eval(EvalArgs),
    /// Synthesize a PSF and write it as CSV.
    Psf(PsfArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BcArg {
    Zero,
    Periodic,
    Reflexive,
}

impl From<BcArg> for BoundaryCondition {
    fn from(bc: BcArg) -> Self {
        match bc {
            BcArg::Zero => BoundaryCondition::Zero,
            BcArg::Periodic => BoundaryCondition::Periodic,
            BcArg::Reflexive => BoundaryCondition::Reflexive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Naive,
    Tsvd,
    Tikhonov,
    Variational,
    MapBlind,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::Tsvd => "tsvd",
            Method::Tikhonov => "tikhonov",
            Method::Variational => "variational",
            Method::MapBlind => "map-blind",
        }
    }
}

fn numbers(text: &str, what: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad number '{t}' in {what}")))
        .collect()
}

fn odd_size(v: f64) -> Result<usize, String> {
    if v < 1.0 || v.fract() != 0.0 || v % 2.0 == 0.0 {
        return Err(format!("kernel size must be a positive odd integer, got {v}"));
    }
    Ok(v as usize)
}

/// `gauss:k[,s1,s2,rho]`, `motion:k,steps`, or a CSV path.
#[derive(Debug, Clone, PartialEq)]
pub enum PsfSource {
    File(PathBuf),
    Gauss { k: usize, s1: f64, s2: f64, rho: f64 },
    Motion { k: usize, steps: usize },
}

impl FromStr for PsfSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if let Some(rest) = s.strip_prefix("gauss:") {
            let v = numbers(rest, "gauss PSF")?;
            let k = odd_size(v[0])?;
            return match v[..] {
                [_] => {
                    let sigma = deblur::imagegrid::gaussian_sigma_for_kernel(k);
                    Ok(PsfSource::Gauss { k, s1: sigma, s2: sigma, rho: 0.0 })
                }
                [_, s1, s2, rho] => Ok(PsfSource::Gauss { k, s1, s2, rho }),
                _ => Err("expected gauss:k or gauss:k,s1,s2,rho".into()),
            };
        }
        if let Some(rest) = s.strip_prefix("motion:") {
            let v = numbers(rest, "motion PSF")?;
            let [k, steps] = v[..] else {
                return Err("expected motion:k,steps".into());
            };
            if steps < 1.0 || steps.fract() != 0.0 {
                return Err(format!("trajectory steps must be a positive integer, got {steps}"));
            }
            return Ok(PsfSource::Motion { k: odd_size(k)?, steps: steps as usize });
        }
        if s.is_empty() {
            return Err("empty PSF argument".into());
        }
        Ok(PsfSource::File(PathBuf::from(s)))
    }
}

/// `frob:VAL` (total Frobenius norm) or `std:VAL` (per-pixel deviation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseArg {
    Frob(f64),
    Std(f64),
}

impl FromStr for NoiseArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, value) = s.split_once(':').ok_or("expected frob:VAL or std:VAL")?;
        let v: f64 = value.trim().parse().map_err(|_| format!("bad noise level '{value}'"))?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(format!("noise level must be finite and nonnegative, got {v}"));
        }
        match kind {
            "frob" => Ok(NoiseArg::Frob(v)),
            "std" => Ok(NoiseArg::Std(v)),
            other => Err(format!("unknown noise kind '{other}'")),
        }
    }
}

impl std::fmt::Display for NoiseArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NoiseArg::Frob(v) => write!(f, "frob:{v}"),
            NoiseArg::Std(v) => write!(f, "std:{v}"),
        }
    }
}

impl NoiseArg {
    /// Frobenius norm of the noise on one channel of `pixels` entries.
    ///
    /// A Frobenius target is shared evenly in energy across channels.
    pub fn channel_norm(self, pixels: usize, channels: usize) -> f64 {
        match self {
            NoiseArg::Frob(f) => f / (channels as f64).sqrt(),
            NoiseArg::Std(eta) => eta * (pixels as f64).sqrt(),
        }
    }

    pub fn variance(self, pixels: usize, channels: usize) -> f64 {
        self.channel_norm(pixels, channels).powi(2) / pixels as f64
    }
}

/// `fixed:VALUE`, `gcv`, `lcurve` or `discrepancy`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selector {
    Fixed(f64),
    Gcv,
    Lcurve,
    Discrepancy,
}

impl FromStr for Selector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gcv" => Ok(Selector::Gcv),
            "lcurve" => Ok(Selector::Lcurve),
            "discrepancy" => Ok(Selector::Discrepancy),
            _ => {
                let value = s
                    .strip_prefix("fixed:")
                    .ok_or_else(|| format!("unknown selector '{s}'"))?;
                let v: f64 = value.parse().map_err(|_| format!("bad fixed value '{value}'"))?;
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(format!("fixed value must be finite and nonnegative, got {v}"));
                }
                Ok(Selector::Fixed(v))
            }
        }
    }
}

impl Selector {
    pub fn name(self) -> String {
        match self {
            Selector::Fixed(v) => format!("fixed:{v}"),
            Selector::Gcv => "gcv".into(),
            Selector::Lcurve => "lcurve".into(),
            Selector::Discrepancy => "discrepancy".into(),
        }
    }
}

/// `smooth`, `smooth-diff`, `pnorm:P[,EPS]`, `pnorm-diff:P[,EPS]` or `sparse-edge`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegArg(pub RegularizerSpec);

impl FromStr for RegArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (head, tail) = s.split_once(':').unwrap_or((s, ""));
        let spec = match head {
            "smooth" => RegularizerSpec::SmoothNorm { d: DiffOperator::Identity },
            "smooth-diff" => RegularizerSpec::SmoothNorm { d: DiffOperator::FirstDifference },
            "pnorm" | "pnorm-diff" => {
                let v = numbers(tail, "p-norm regularizer")?;
                let (p, eps) = match v[..] {
                    [p] => (p, 1e-3),
                    [p, eps] => (p, eps),
                    _ => return Err("expected pnorm:P or pnorm:P,EPS".into()),
                };
                let d = if head == "pnorm" { DiffOperator::Identity } else { DiffOperator::FirstDifference };
                RegularizerSpec::PNorm { d, p, eps }
            }
            "sparse-edge" => RegularizerSpec::sparse_edge(0.0),
            other => return Err(format!("unknown regularizer '{other}'")),
        };
        spec.validate().map_err(|e| e.to_string())?;
        Ok(RegArg(spec))
    }
}

#[derive(Debug, Args)]
pub struct BlurArgs {
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long, value_name = "file|gauss:k,s1,s2,rho|motion:k,steps")]
    pub psf: PsfSource,
    #[arg(long, value_enum, default_value_t = BcArg::Reflexive)]
    pub bc: BcArg,
    /// Noise to add after blurring.
    #[arg(long, value_name = "frob:VAL|std:VAL")]
    pub noise: Option<NoiseArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the noise realization as CSV.
    #[arg(long, value_name = "FILE", requires = "noise")]
    pub noise_out: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DeblurArgs {
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Known blur; required by every method except map-blind.
    #[arg(long, value_name = "file|gauss:k,s1,s2,rho|motion:k,steps")]
    pub psf: Option<PsfSource>,
    #[arg(long, value_enum, default_value_t = BcArg::Reflexive)]
    pub bc: BcArg,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Parameter choice: truncation k for tsvd, α for tikhonov, λ for variational.
    #[arg(long, value_name = "fixed:V|gcv|lcurve|discrepancy")]
    pub select: Option<Selector>,
    /// Known noise level of the input; needed by discrepancy and map-blind.
    #[arg(long, value_name = "frob:VAL|std:VAL")]
    pub noise: Option<NoiseArg>,
    /// Regularizer of the variational method.
    #[arg(long, value_name = "smooth|smooth-diff|pnorm:P[,EPS]|pnorm-diff:P[,EPS]|sparse-edge")]
    pub reg: Option<RegArg>,
    /// Iteration cap (variational) or iterations per level (map-blind).
    #[arg(long)]
    pub iters: Option<usize>,
    /// Gradient step of the variational method.
    #[arg(long)]
    pub step: Option<f64>,
    /// Relative objective change that stops the variational iteration.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Kernel size estimated by map-blind.
    #[arg(long, value_name = "K")]
    pub kernel_size: Option<usize>,
    /// Write the kernel estimated by map-blind as CSV.
    #[arg(long, value_name = "FILE")]
    pub psf_out: Option<PathBuf>,
    /// Seed of a motion PSF.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Ground truth; adds a quality report to the summary.
    #[arg(long, value_name = "FILE")]
    pub truth: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub emit_picard: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub emit_curve: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub emit_trace: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_name = "file|gauss:k,s1,s2,rho|motion:k,steps")]
    pub psf: PsfSource,
    #[arg(long, value_enum, default_value_t = BcArg::Reflexive)]
    pub bc: BcArg,
    /// Known noise level, used by the discrepancy selector.
    #[arg(long, value_name = "frob:VAL|std:VAL")]
    pub noise: Option<NoiseArg>,
    /// Tikhonov selector whose curve is reported.
    #[arg(long, value_name = "gcv|lcurve|discrepancy", default_value = "gcv")]
    pub select: Selector,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "FILE")]
    pub emit_picard: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub emit_curve: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub truth: PathBuf,
    /// Peak intensity for PSNR.
    #[arg(long, default_value_t = 1.0)]
    pub peak: f64,
    #[arg(long, value_name = "FILE")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PsfArgs {
    #[arg(long, value_name = "gauss:k,s1,s2,rho|motion:k,steps")]
    pub psf: PsfSource,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "FILE")]
    pub json: Option<PathBuf>,
}
