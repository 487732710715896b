use cfu_core::dataset::{
    load_csv, load_idx, normalize, synth_shift_pair, Dataset, DatasetManifest, FeatureRange, DEFAULT_RANGE,
};

use crate::config::DatasetSpec;
use crate::error::{CliError, Result};

/// Train / in-distribution test / optional shifted split in one feature space.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub test: Dataset,
    pub ood: Option<Dataset>,
}

impl Splits {
    pub fn range(&self) -> Option<FeatureRange> {
        self.train.range()
    }

    pub fn manifest(&self) -> DatasetManifest {
        let mut splits = vec![self.train.summary("train"), self.test.summary("test")];
        if let Some(ood) = &self.ood {
            splits.push(ood.summary("ood"));
        }
        DatasetManifest {
            splits,
            range: self.train.range(),
            normalization: self.train.normalization().cloned(),
        }
    }
}

fn input<T>(r: cfu_core::Result<T>) -> Result<T> {
    r.map_err(CliError::Input)
}

/// Load and normalise all splits. The training split's transform is applied
/// to the others so they share one feature space.
pub fn load_splits(spec: &DatasetSpec) -> Result<Splits> {
    let splits = match spec {
        DatasetSpec::Synth(cfg) => {
            let s = input(synth_shift_pair(cfg))?;
            Splits {
                train: s.train,
                test: s.test,
                ood: Some(s.ood),
            }
        }
        DatasetSpec::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            ood_images,
            ood_labels,
        } => {
            let train = input(load_idx(train_images, train_labels))?;
            let test = input(load_idx(test_images, test_labels))?;
            let ood = match (ood_images, ood_labels) {
                (Some(i), Some(l)) => Some(input(load_idx(i, l))?),
                (None, None) => None,
                _ => {
                    return Err(CliError::Usage(
                        "ood_images and ood_labels must be given together".into(),
                    ))
                }
            };
            shared_space(train, test, ood)?
        }
        DatasetSpec::Csv {
            train,
            test,
            ood,
            label_column,
        } => {
            let train = input(load_csv(train, *label_column))?;
            let test = input(load_csv(test, *label_column))?;
            let ood = ood.as_ref().map(|p| load_csv(p, *label_column)).transpose();
            shared_space(train, test, input(ood)?)?
        }
    };
    for (name, split) in [("test", Some(&splits.test)), ("ood", splits.ood.as_ref())] {
        if let Some(s) = split {
            if s.dim() != splits.train.dim() {
                return Err(CliError::Usage(format!(
                    "{name} split has {} features, training split has {}",
                    s.dim(),
                    splits.train.dim()
                )));
            }
        }
    }
    Ok(splits)
}

fn shared_space(train: Dataset, test: Dataset, ood: Option<Dataset>) -> Result<Splits> {
    for w in train.warnings() {
        log::warn!("{w}");
    }
    let train = input(normalize(&train, DEFAULT_RANGE))?;
    let Some(norm) = train.normalization().cloned() else {
        // already in the target range
        return Ok(Splits { train, test, ood });
    };
    let test = input(norm.apply_dataset(&test))?;
    let ood = ood.map(|d| norm.apply_dataset(&d)).transpose();
    Ok(Splits {
        train,
        test,
        ood: input(ood)?,
    })
}
