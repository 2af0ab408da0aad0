//! CSV logs with fixed header order.

use crate::denoiser::LossReport;
use crate::error::{Error, Result};
use crate::metrics::MetricReport;

pub const RESIDUAL_HEADER: [&str; 4] = ["algorithm", "bin", "sweep", "residual"];
pub const LOSS_HEADER: [&str; 9] = ["algorithm", "epoch", "n2n", "residual", "ssim", "total", "lambda_r", "lambda_s", "lr"];
pub const METRIC_HEADER: [&str; 5] = ["method", "bin", "blur_fraction", "psnr", "rmse"];

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::InvalidArgument(format!("csv buffer: {e}")))
}

/// One row per bin and sweep; `residuals[b][k]` is `||y - Ax||` before sweep `k`.
pub fn residuals_csv(tag: &str, residuals: &[Vec<f64>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RESIDUAL_HEADER)?;
    for (b, hist) in residuals.iter().enumerate() {
        for (k, r) in hist.iter().enumerate() {
            w.write_record([tag, &b.to_string(), &k.to_string(), &r.to_string()])?;
        }
    }
    finish(w)
}

pub fn losses_csv(tag: &str, losses: &[LossReport]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(LOSS_HEADER)?;
    for l in losses {
        let vals = [l.n2n, l.residual, l.ssim, l.total, l.lambda_r, l.lambda_s, l.lr];
        let mut row = vec![tag.to_string(), l.epoch.to_string()];
        row.extend(vals.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    finish(w)
}

/// Undefined blur (no edges) is written as `undefined`, identical images as
/// PSNR `inf`, and metrics without ground truth as empty fields.
pub fn metrics_csv(reports: &[MetricReport]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRIC_HEADER)?;
    for rep in reports {
        for m in &rep.bins {
            let blur = m.blur_fraction.map_or("undefined".to_string(), |v| v.to_string());
            let psnr = m.psnr.map_or(String::new(), |p| p.to_string());
            let rmse = m.rmse.map_or(String::new(), |v| v.to_string());
            w.write_record([rep.method.as_str(), &m.bin.to_string(), &blur, &psnr, &rmse])?;
        }
    }
    finish(w)
}
