//! Materializes the train / validation / test splits named by a config.

use mpq_core::nn::{load_idx, synth_dataset, Dataset, NetworkSpec, Split};
use mpq_core::seed::SeedTree;

use crate::config::{DatasetConfig, RunConfig};
use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    /// Held out from training; scores the baseline and every short finetune.
    pub validation: Dataset,
    /// Touched only by final evaluations.
    pub test: Dataset,
}

pub fn load_splits(cfg: &RunConfig, spec: &NetworkSpec) -> Result<Splits, CliError> {
    let splits = match &cfg.dataset {
        DatasetConfig::Synthetic { generator, train, validation, test, seed } => {
            let seed = seed.unwrap_or_else(|| SeedTree::new(cfg.seed).child("data").seed());
            let all = synth_dataset(*generator, train + validation + test, seed)?;
            let (rest, test) = all.split_tail(*test, Split::Train, Split::Test);
            let (train, validation) = rest.split_tail(*validation, Split::Train, Split::Validation);
            Splits { train, validation, test }
        }
        DatasetConfig::Idx { train_images, train_labels, test_images, test_labels, validation, train_limit, test_limit } => {
            let mut train = load_idx(train_images, train_labels, Split::Train)?;
            if let Some(n) = train_limit {
                train = train.head(*n, Split::Train);
            }
            if train.len() <= *validation {
                return Err(CliError::Config(format!(
                    "dataset.validation: {validation} items requested from a training file of {}",
                    train.len()
                )));
            }
            let (train, validation) = train.split_tail(*validation, Split::Train, Split::Validation);
            let mut test = load_idx(test_images, test_labels, Split::Test)?;
            if let Some(n) = test_limit {
                test = test.head(*n, Split::Test);
            }
            Splits { train, validation, test }
        }
    };
    Ok(Splits {
        train: conform(splits.train, spec)?,
        validation: conform(splits.validation, spec)?,
        test: conform(splits.test, spec)?,
    })
}

/// Reshapes inputs to the network's input dims and widens the class count to
/// the network's output width.
fn conform(d: Dataset, spec: &NetworkSpec) -> Result<Dataset, CliError> {
    let want: usize = spec.input_dims.iter().product();
    let have: usize = d.feature_shape().iter().product();
    if want != have {
        return Err(CliError::Config(format!(
            "network.input_dims {:?} do not match dataset items of shape {:?}",
            spec.input_dims,
            d.feature_shape()
        )));
    }
    if d.num_classes > spec.num_classes {
        return Err(CliError::Config(format!(
            "network has {} outputs but the dataset has {} classes",
            spec.num_classes, d.num_classes
        )));
    }
    let n = d.len();
    let mut shape = vec![n];
    shape.extend_from_slice(&spec.input_dims);
    let inputs = d.inputs.reshape(shape)?;
    Ok(Dataset::new(inputs, d.labels, spec.num_classes, d.split)?)
}
