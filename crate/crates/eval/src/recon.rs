use phasegen_core::codec::{train_autoencoder, AeTrainConfig, CodecConfig, PhaseAutoencoder};
use phasegen_core::motion::{MotionDataset, Split};
use phasegen_core::phase::Representation;
use phasegen_core::Result;
use serde::{Deserialize, Serialize};

use crate::metrics::heldout_recon;
use crate::report::MetricReport;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconCell {
    pub f_max: u32,
    pub repr: Representation,
    pub num_phases: usize,
}

impl ReconCell {
    pub fn new(f_max: u32, repr: Representation, num_phases: usize) -> Self {
        ReconCell {
            f_max,
            repr,
            num_phases,
        }
    }

    pub fn label(&self) -> String {
        let r = match self.repr {
            Representation::SinCos => "sincos",
            Representation::Sin => "sin",
        };
        format!("f{}-{}-m{}", self.f_max, r, self.num_phases)
    }
}

/// `{8, 30} x {sin, sin+cos} x {128, 256}`.
pub fn default_grid() -> Vec<ReconCell> {
    let mut out = Vec::new();
    for f_max in [8, 30] {
        for repr in [Representation::Sin, Representation::SinCos] {
            for m in [128, 256] {
                out.push(ReconCell::new(f_max, repr, m));
            }
        }
    }
    out
}

#[derive(Serialize)]
struct CellConfig<'a> {
    cell: ReconCell,
    codec: &'a CodecConfig,
    train: &'a AeTrainConfig,
}

/// Train one autoencoder for a cell and score it on the test split.
pub fn recon_cell(
    dataset: &MotionDataset,
    cell: ReconCell,
    base: &CodecConfig,
    train: &AeTrainConfig,
) -> Result<(PhaseAutoencoder, MetricReport)> {
    let codec_cfg = CodecConfig {
        f_max: cell.f_max,
        repr: cell.repr,
        num_phases: cell.num_phases,
        ..base.clone()
    };
    let mut report = MetricReport::new(
        &format!("recon-study/{}", cell.label()),
        train.seed,
        &CellConfig {
            cell,
            codec: &codec_cfg,
            train,
        },
    );
    let (codec, log) = train_autoencoder(dataset, &codec_cfg, train)?;
    let score = heldout_recon(&codec, dataset, Split::Test)?;
    report.set("heldout_mse", score.mse);
    report.set("heldout_mpjpe", score.mpjpe);
    report.set("heldout_mpjpe_ratio", score.mpjpe_ratio);
    report.set("heldout_clips", score.clips as f64);
    report.set("final_train_loss", log.epoch_loss.last().copied().unwrap_or(f64::NAN));
    report.set("train_seconds", log.seconds);
    Ok((codec, report))
}

/// One report per cell. A failing cell yields a report carrying the error
/// in its notes and no metrics; the other cells still run.
pub fn recon_study(
    dataset: &MotionDataset,
    grid: &[ReconCell],
    base: &CodecConfig,
    train: &AeTrainConfig,
) -> Vec<MetricReport> {
    grid.iter()
        .map(|&cell| match recon_cell(dataset, cell, base, train) {
            Ok((_, r)) => r,
            Err(e) => {
                let mut r = MetricReport::new(&format!("recon-study/{}", cell.label()), train.seed, &cell);
                r.notes.push(format!("cell failed: {e}"));
                r
            }
        })
        .collect()
}
