use crate::error::{Error, Result};
use crate::losses::LossVariant;
use crate::model::{Architecture, ModelConfig};
use crate::rrm::RrmKind;

use super::TrainConfig;

/// The twelve ablation rows: architectures under BCE alone, then loss
/// combinations on the full architecture.
pub const ABLATION_ROWS: [&str; 12] = [
    "U-Net + ℓ_b",
    "ED + ℓ_b",
    "EDS + ℓ_b",
    "EDS+RRM_LC + ℓ_b",
    "EDS+RRM_MS + ℓ_b",
    "EDS+RRM_Ours + ℓ_b",
    "EDS+RRM_Ours + ℓ_s",
    "EDS+RRM_Ours + ℓ_i",
    "EDS+RRM_Ours + ℓ_bs",
    "EDS+RRM_Ours + ℓ_bi",
    "EDS+RRM_Ours + ℓ_si",
    "EDS+RRM_Ours + ℓ_bsi",
];

fn normalize(name: &str) -> String {
    name.replace('ℓ', "l")
        .chars()
        .filter(|c| !c.is_whitespace())
        .collect::<String>()
        .to_lowercase()
}

fn row_parts(index: usize) -> (Architecture, LossVariant) {
    const ARCHS: [Architecture; 6] = [
        Architecture::UNet,
        Architecture::Ed,
        Architecture::Eds,
        Architecture::EdsRrm(RrmKind::Lc),
        Architecture::EdsRrm(RrmKind::Ms),
        Architecture::EdsRrm(RrmKind::Ours),
    ];
    const LOSSES: [LossVariant; 6] = [
        LossVariant::S,
        LossVariant::I,
        LossVariant::BS,
        LossVariant::BI,
        LossVariant::SI,
        LossVariant::BSI,
    ];
    if index < 6 {
        (ARCHS[index], LossVariant::B)
    } else {
        (Architecture::EdsRrm(RrmKind::Ours), LOSSES[index - 6])
    }
}

/// Training configuration of an ablation row, matched ignoring case,
/// whitespace and `ℓ` vs `l`.
pub fn build_ablation_config(row: &str) -> Result<TrainConfig> {
    let key = normalize(row);
    let index = ABLATION_ROWS
        .iter()
        .position(|r| normalize(r) == key)
        .ok_or_else(|| Error::UnknownRow {
            name: row.to_string(),
            valid: ABLATION_ROWS.iter().map(|r| r.to_string()).collect(),
        })?;
    let (arch, loss) = row_parts(index);
    Ok(TrainConfig {
        model: ModelConfig::for_architecture(arch),
        loss,
        ..TrainConfig::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_model_row() {
        let c = build_ablation_config("EDS+RRM_Ours + ℓ_bsi").unwrap();
        assert_eq!(c.model, ModelConfig::default());
        assert_eq!(c.loss, LossVariant::BSI);
        assert_eq!(c.model.output_count(), 8);
    }

    #[test]
    fn plain_encoder_decoder_row() {
        let c = build_ablation_config("ed + l_b").unwrap();
        assert_eq!(c.model.architecture, Architecture::Ed);
        assert_eq!(c.model.output_count(), 1);
        assert_eq!(c.loss, LossVariant::B);
    }

    #[test]
    fn hybrid_without_bce() {
        let c = build_ablation_config("EDS+RRM_Ours + l_si").unwrap();
        assert!(!c.loss.bce() && c.loss.ssim() && c.loss.iou());
    }

    #[test]
    fn every_row_is_distinct_and_unknown_rows_list_the_options() {
        let set: std::collections::HashSet<_> = ABLATION_ROWS
            .iter()
            .map(|r| {
                let c = build_ablation_config(r).unwrap();
                (c.model.architecture, c.loss)
            })
            .collect();
        assert_eq!(set.len(), 12);
        match build_ablation_config("EDS + l_q") {
            Err(Error::UnknownRow { valid, .. }) => assert_eq!(valid.len(), 12),
            other => panic!("{other:?}"),
        }
    }
}
