//! Wasserstein synthesizer with gradient penalty, trained off the scoring
//! path on confirmed fraud, plus the adversarial buffer that feeds it.

mod buffer;
mod loss;
mod model;
mod train;

pub use buffer::{AdversarialBuffer, BufferEntry, BufferRecord};
pub use loss::{critic_loss, generator_loss, interpolate, CriticTerms};
pub use model::{GanArchitecture, GanModel};
pub use train::{
    critic_input_gradient_norms, train_gan, FieldMarginal, GanTrainConfig, NormStatistics, RealFraud, SynthesisReport,
    MIN_REAL_EXAMPLES,
};
