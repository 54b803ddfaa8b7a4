//! CSV renderings of diagnostics. Every table starts with a header row.

use std::fmt::Write;

use nalgebra::{DMatrix, DVector};

use crate::operator::{DenseOperator, SpectralDiagonalization, Spectrum};
use crate::paramselect::Curve;
use crate::spectral::PicardSeries;
use crate::variational::{MapTraceEntry, TraceEntry};

fn table<I>(header: &str, rows: I) -> String
where
    I: IntoIterator<Item = String>,
{
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    out
}

/// Columns `i,sigma,abs_coeff,ratio` with 1-based `i`.
pub fn picard_csv(series: &PicardSeries) -> String {
    table(
        "i,sigma,abs_coeff,ratio",
        series
            .entries
            .iter()
            .map(|e| format!("{},{},{},{}", e.index + 1, e.sigma, e.abs_coeff, e.ratio)),
    )
}

/// Columns `i,sigma,phi`.
pub fn filter_factors_csv(sigma: &DVector<f64>, phi: &DVector<f64>) -> String {
    table(
        "i,sigma,phi",
        sigma.iter().zip(phi.iter()).enumerate().map(|(i, (s, p))| format!("{},{s},{p}", i + 1)),
    )
}

/// GCV: `alpha,G`; L-curve: `alpha,log_residual,log_solution,curvature`;
/// discrepancy: `alpha,residual_norm`.
pub fn curve_csv(curve: &Curve) -> String {
    match curve {
        Curve::Gcv(points) => table("alpha,G", points.iter().map(|(a, g)| format!("{a},{g}"))),
        Curve::Lcurve(points) => table(
            "alpha,log_residual,log_solution,curvature",
            points
                .iter()
                .map(|p| format!("{},{},{},{}", p.alpha, p.log_residual, p.log_solution, p.curvature)),
        ),
        Curve::Discrepancy(points) => {
            table("alpha,residual_norm", points.iter().map(|(a, r)| format!("{a},{r}")))
        }
    }
}

/// Columns `iteration,objective,residual_norm,reg_value`.
pub fn trace_csv(trace: &[TraceEntry]) -> String {
    table(
        "iteration,objective,residual_norm,reg_value",
        trace
            .iter()
            .map(|t| format!("{},{},{},{}", t.iteration, t.objective, t.residual_norm, t.reg_value)),
    )
}

/// Columns `stage,lambda,iteration,objective`.
pub fn map_trace_csv(trace: &[MapTraceEntry]) -> String {
    table(
        "stage,lambda,iteration,objective",
        trace
            .iter()
            .map(|t| format!("{},{},{},{}", t.stage, t.lambda, t.iteration, t.objective)),
    )
}

/// First line is `N`, followed by the `N` rows of the matrix.
pub fn dense_operator_csv(op: &DenseOperator) -> String {
    let a = op.matrix();
    let mut out = format!("{}\n", a.nrows());
    for i in 0..a.nrows() {
        let row: Vec<String> = a.row(i).iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

/// Eigenvalue grid: real parts for a Fourier spectrum, plus a second grid of
/// imaginary parts separated by a blank line.
pub fn spectrum_csv(diag: &SpectralDiagonalization) -> String {
    fn grid(x: &DMatrix<f64>) -> String {
        let mut out = String::new();
        for i in 0..x.nrows() {
            let row: Vec<String> = x.row(i).iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
    match diag.spectrum() {
        Spectrum::Cosine(l) => grid(l),
        Spectrum::Fourier(l) => format!("{}\n{}", grid(&l.map(|z| z.re)), grid(&l.map(|z| z.im))),
    }
}
