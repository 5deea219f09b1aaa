//! Multimodal predictor: fused text+prosody sequences through a two-layer
//! BiLSTM with additive attention into four 3-class heads, trained with
//! focal loss and Adam. Gradients are hand-derived reverse mode, verified
//! against central finite differences.

pub mod checkpoint;
pub mod features;
pub mod model;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use features::{FeatureExtractor, PreparedRecord};
pub use model::{
    additive_attention, backward, bilstm_forward, classify, focal_loss, forward, lstm_cell,
    DropoutSpec, ForwardTrace, Head, LstmDir, LstmLayer, ModelConfig, ModelParams, AUX_DIM,
};
pub use train::{
    adam_step, batch_loss, batch_loss_and_grads, inverse_frequency_alpha, predict, train,
    AdamState, EpochStats, TrainConfig,
};

use crate::corpus::{Dimension, Level};

/// Four probability distributions over {Negative, Neutral, Positive},
/// dimension indexed.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: [[f64; 3]; 4],
}

impl Prediction {
    pub fn get(&self, d: Dimension) -> [f64; 3] {
        self.probs[d.index()]
    }

    pub fn negative_prob(&self, d: Dimension) -> f64 {
        self.probs[d.index()][Level::Negative.index()]
    }

    /// Argmax level; ties resolve to the lower class index.
    pub fn dominant(&self, d: Dimension) -> Level {
        let p = self.probs[d.index()];
        let mut best = 0;
        for i in 1..3 {
            if p[i] > p[best] {
                best = i;
            }
        }
        Level::from_index(best)
    }

    /// Each distribution sums to 1 within 1e-6 with non-negative entries.
    pub fn is_valid(&self) -> bool {
        self.probs.iter().all(|p| {
            p.iter().all(|&x| x >= 0.0 && x.is_finite())
                && (p.iter().sum::<f64>() - 1.0).abs() < 1e-6
        })
    }

    pub fn uniform() -> Self {
        Prediction {
            probs: [[1.0 / 3.0; 3]; 4],
        }
    }
}
