use thiserror::Error;

use crate::dataset::DatasetError;
use crate::dsp::DspError;
use crate::features::FeatureError;
use crate::metrics::MetricsError;
use crate::nn::NnError;

/// Any error produced by this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}
