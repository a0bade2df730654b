from .autoencoder import SeriesAutoencoder, reconstruction_loss, train_autoencoder
from .batches import PaddedBatch
from .heads import FeatureHead, group_loss
from .embedding import ObservationEmbedding, TimeEmbedding
from .missing import (
    MaskThresholds,
    MissingSeriesAutoencoder,
    calibrate_thresholds,
    masked_losses,
    train_missing_autoencoder,
)
from .wgan import (
    LatentCritic,
    LatentGenerator,
    critic_loss,
    generate_dataset,
    generator_loss,
    sample_noise,
    train_wgan,
)

__all__ = [
    "FeatureHead",
    "LatentCritic",
    "LatentGenerator",
    "MaskThresholds",
    "MissingSeriesAutoencoder",
    "ObservationEmbedding",
    "PaddedBatch",
    "SeriesAutoencoder",
    "TimeEmbedding",
    "calibrate_thresholds",
    "critic_loss",
    "generate_dataset",
    "generator_loss",
    "group_loss",
    "masked_losses",
    "reconstruction_loss",
    "sample_noise",
    "train_autoencoder",
    "train_missing_autoencoder",
    "train_wgan",
]
