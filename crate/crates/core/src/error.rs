use thiserror::Error;

use crate::augment::AugmentError;
use crate::datasets::DatasetError;
use crate::eval::ExperimentError;
use crate::losses::LossError;
use crate::models::ModelError;
use crate::pretrain::TrainError;
use crate::transfer::TransferError;

/// Umbrella error for callers that drive several modules (the CLI, the experiment runner).
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
}
