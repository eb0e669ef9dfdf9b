//! Encoder/decoder LSTM forecaster.
//!
//! A bidirectional encoder summarizes the last `lookback` observations; the
//! summary seeds an autoregressive decoder that emits one predictive
//! distribution per future step. Two output modes share the architecture:
//!
//! * ordinal: inputs are one-hot bin indicators, the output layer is a
//!   softmax over bins, and at forecast time the decoder feeds back the full
//!   probability vector (not a sample);
//! * regression: inputs are raw scalars, the output layer is a single linear
//!   unit trained with mean squared error, and the decoder feeds back its
//!   scalar prediction.
//!
//! Dropout masks are sampled once per forward pass and reused at every time
//! step: one group per LSTM's concatenated input, one for the decoder's
//! pre-softmax features, and (optionally) one for the encoder-to-decoder
//! state handoff.

mod forecast;
mod train;

pub use forecast::{
    forecast_ordinal, forecast_regression, mc_dropout_forecast, regression_rollouts,
    rollout_moments, REGRESSION_VAR_FLOOR,
};
pub use train::{
    loss_and_gradient, make_windows, train, validation_loss, TrainingConfig, TrainingLog, Windows,
};

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::checkpoint::{Checkpoint, NamedTensor};
use crate::error::{Error, Result};
use crate::nnet::{DropoutSpec, LstmParams};
use crate::ordinal::BinPartition;

/// Mask-group indices within this model's [`DropoutSpec`].
pub(crate) const GROUP_ENC_FWD: usize = 0;
pub(crate) const GROUP_ENC_BWD: usize = 1;
pub(crate) const GROUP_DEC: usize = 2;
pub(crate) const GROUP_OUT: usize = 3;
/// Present only when `mask_handoff` is enabled.
pub(crate) const GROUP_HANDOFF: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputMode {
    Ordinal,
    Regression,
}

impl OutputMode {
    fn as_str(self) -> &'static str {
        match self {
            OutputMode::Ordinal => "ordinal",
            OutputMode::Regression => "regression",
        }
    }
}

/// Sequence-to-sequence forecaster. See the module docs for the wiring.
#[derive(Debug, Clone)]
pub struct Seq2SeqModel {
    mode: OutputMode,
    pub enc_fwd: LstmParams,
    pub enc_bwd: LstmParams,
    pub dec: LstmParams,
    /// Output kernel, shape `(out_dim, n_units)`.
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
    partition: Option<BinPartition>,
    lookback: usize,
    p_drop: f64,
    /// When set, a fifth mask group multiplies the encoder summary before it
    /// seeds the decoder. Off by default.
    mask_handoff: bool,
    /// Seed recorded at initialization; persisted in checkpoints.
    pub init_seed: u64,
}

impl Seq2SeqModel {
    /// Ordinal-mode model over `partition`, Glorot-initialized from `rng`.
    pub fn new_ordinal(
        partition: BinPartition,
        n_units: usize,
        lookback: usize,
        p_drop: f64,
        mask_handoff: bool,
        init_seed: u64,
    ) -> Result<Self> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(init_seed);
        let m = partition.bin_count();
        Self::build(
            OutputMode::Ordinal,
            Some(partition),
            m,
            n_units,
            lookback,
            p_drop,
            mask_handoff,
            init_seed,
            &mut rng,
        )
    }

    /// Regression-mode model (scalar input/output).
    pub fn new_regression(
        n_units: usize,
        lookback: usize,
        p_drop: f64,
        mask_handoff: bool,
        init_seed: u64,
    ) -> Result<Self> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(init_seed);
        Self::build(
            OutputMode::Regression,
            None,
            1,
            n_units,
            lookback,
            p_drop,
            mask_handoff,
            init_seed,
            &mut rng,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        mode: OutputMode,
        partition: Option<BinPartition>,
        in_dim: usize,
        n_units: usize,
        lookback: usize,
        p_drop: f64,
        mask_handoff: bool,
        init_seed: u64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if lookback == 0 {
            return Err(Error::invalid("lookback must be positive"));
        }
        if !(0.0..1.0).contains(&p_drop) {
            return Err(Error::invalid(format!(
                "p_drop must lie in [0, 1), got {p_drop}"
            )));
        }
        let out_dim = in_dim;
        Ok(Seq2SeqModel {
            mode,
            enc_fwd: LstmParams::glorot(n_units, in_dim, rng)?,
            enc_bwd: LstmParams::glorot(n_units, in_dim, rng)?,
            dec: LstmParams::glorot(n_units, in_dim, rng)?,
            w_out: crate::nnet::glorot_uniform_init(out_dim, n_units, rng)?,
            b_out: Array1::zeros(out_dim),
            partition,
            lookback,
            p_drop,
            mask_handoff,
            init_seed,
        })
    }

    pub fn mode(&self) -> OutputMode {
        self.mode
    }

    pub fn n_units(&self) -> usize {
        self.dec.n_units()
    }

    /// Input (and output) width: bin count in ordinal mode, 1 in regression.
    pub fn io_dim(&self) -> usize {
        self.dec.input_dim()
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn p_drop(&self) -> f64 {
        self.p_drop
    }

    pub fn mask_handoff(&self) -> bool {
        self.mask_handoff
    }

    pub fn partition(&self) -> Option<&BinPartition> {
        self.partition.as_ref()
    }

    /// Dropout spec with one group per mask site of this model.
    pub fn dropout_spec(&self) -> DropoutSpec {
        let d = self.io_dim() + self.n_units();
        let mut sizes = vec![d, d, d, self.n_units()];
        if self.mask_handoff {
            sizes.push(self.n_units());
        }
        DropoutSpec::new(self.p_drop, sizes).expect("validated at construction")
    }

    /// Identity-mask spec used for evaluation-mode passes.
    pub(crate) fn eval_masks(&self) -> crate::nnet::DropoutMasks {
        crate::nnet::DropoutMasks::identity(&self.dropout_spec())
    }

    pub(crate) fn tensor_names() -> [&'static str; 26] {
        [
            "enc_fwd.w_i",
            "enc_fwd.w_o",
            "enc_fwd.w_f",
            "enc_fwd.w_s",
            "enc_fwd.b_i",
            "enc_fwd.b_o",
            "enc_fwd.b_f",
            "enc_fwd.b_s",
            "enc_bwd.w_i",
            "enc_bwd.w_o",
            "enc_bwd.w_f",
            "enc_bwd.w_s",
            "enc_bwd.b_i",
            "enc_bwd.b_o",
            "enc_bwd.b_f",
            "enc_bwd.b_s",
            "dec.w_i",
            "dec.w_o",
            "dec.w_f",
            "dec.w_s",
            "dec.b_i",
            "dec.b_o",
            "dec.b_f",
            "dec.b_s",
            "w_out",
            "b_out",
        ]
    }

    /// Flat read-only views over all 26 parameter tensors, in the fixed
    /// order of [`Seq2SeqModel::tensor_names`].
    pub fn flat_views(&self) -> Vec<&[f64]> {
        let mut v = self.enc_fwd.flat_views();
        v.extend(self.enc_bwd.flat_views());
        v.extend(self.dec.flat_views());
        v.push(self.w_out.as_slice().unwrap());
        v.push(self.b_out.as_slice().unwrap());
        v
    }

    pub fn flat_views_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.enc_fwd.flat_views_mut();
        v.extend(self.enc_bwd.flat_views_mut());
        v.extend(self.dec.flat_views_mut());
        v.push(self.w_out.as_slice_mut().unwrap());
        v.push(self.b_out.as_slice_mut().unwrap());
        v
    }

    pub fn tensor_sizes(&self) -> Vec<usize> {
        self.flat_views().iter().map(|s| s.len()).collect()
    }

    /// Serializes the model into the versioned checkpoint container.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        c.set("schema_version", "1");
        c.set("kind", "seq2seq");
        c.set("mode", self.mode.as_str());
        c.set("n_units", self.n_units().to_string());
        c.set("io_dim", self.io_dim().to_string());
        c.set("lookback", self.lookback.to_string());
        c.set_f64("p_drop", self.p_drop);
        c.set("mask_handoff", if self.mask_handoff { "1" } else { "0" });
        c.set("seed", self.init_seed.to_string());
        if let Some(p) = &self.partition {
            let (lo, hi) = p.bounds();
            c.set("partition_bins", p.bin_count().to_string());
            c.set_f64("partition_lo", lo);
            c.set_f64("partition_hi", hi);
        }
        let names = Self::tensor_names();
        for (name, view) in names.iter().zip(self.flat_views()) {
            let (rows, cols) = self.tensor_shape(name);
            c.push_tensor(NamedTensor::new(*name, rows, cols, view.to_vec()).unwrap())
                .expect("tensor names are unique");
        }
        c
    }

    fn tensor_shape(&self, name: &str) -> (usize, usize) {
        let n_u = self.n_units();
        let d = self.io_dim() + n_u;
        if name == "w_out" {
            (self.io_dim(), n_u)
        } else if name == "b_out" {
            (1, self.io_dim())
        } else if name.ends_with(".w_i")
            || name.ends_with(".w_o")
            || name.ends_with(".w_f")
            || name.ends_with(".w_s")
        {
            (n_u, d)
        } else {
            (1, n_u)
        }
    }

    /// Rebuilds a model from a checkpoint. Loading is bit-exact: the
    /// reconstructed parameters have the same bit patterns that were saved.
    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.require("kind")? != "seq2seq" {
            return Err(Error::Checkpoint(format!(
                "checkpoint kind {:?} is not a seq2seq model",
                c.require("kind")?
            )));
        }
        let mode = match c.require("mode")? {
            "ordinal" => OutputMode::Ordinal,
            "regression" => OutputMode::Regression,
            other => {
                return Err(Error::Checkpoint(format!("unknown mode {other:?}")));
            }
        };
        let n_units = c.require_usize("n_units")?;
        let io_dim = c.require_usize("io_dim")?;
        let lookback = c.require_usize("lookback")?;
        let p_drop = c.require_f64("p_drop")?;
        let mask_handoff = c.require("mask_handoff")? == "1";
        let init_seed: u64 = c
            .require("seed")?
            .parse()
            .map_err(|e| Error::Checkpoint(format!("seed: {e}")))?;
        let partition = match mode {
            OutputMode::Ordinal => {
                let bins = c.require_usize("partition_bins")?;
                if bins != io_dim {
                    return Err(Error::Checkpoint(format!(
                        "partition has {bins} bins but io_dim is {io_dim}"
                    )));
                }
                Some(BinPartition::new(
                    c.require_f64("partition_lo")?,
                    c.require_f64("partition_hi")?,
                    bins,
                )?)
            }
            OutputMode::Regression => {
                if io_dim != 1 {
                    return Err(Error::Checkpoint(format!(
                        "regression checkpoint with io_dim {io_dim}"
                    )));
                }
                None
            }
        };
        let mut model = Seq2SeqModel {
            mode,
            enc_fwd: LstmParams::zeros(n_units, io_dim)?,
            enc_bwd: LstmParams::zeros(n_units, io_dim)?,
            dec: LstmParams::zeros(n_units, io_dim)?,
            w_out: Array2::zeros((io_dim, n_units)),
            b_out: Array1::zeros(io_dim),
            partition,
            lookback,
            p_drop,
            mask_handoff,
            init_seed,
        };
        let names = Self::tensor_names();
        {
            let mut views = model.flat_views_mut();
            for (name, view) in names.iter().zip(views.iter_mut()) {
                let t = c.tensor(name)?;
                if t.data.len() != view.len() {
                    return Err(Error::Checkpoint(format!(
                        "tensor {name}: {} values, expected {}",
                        t.data.len(),
                        view.len()
                    )));
                }
                view.copy_from_slice(&t.data);
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Seq2SeqModel::from_checkpoint(&Checkpoint::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let part = BinPartition::new(-2.0, 2.0, 7).unwrap();
        let model = Seq2SeqModel::new_ordinal(part, 5, 9, 0.25, true, 1234).unwrap();
        let ckpt = model.to_checkpoint();
        let mut buf = Vec::new();
        ckpt.write_to(&mut buf).unwrap();
        let back =
            Seq2SeqModel::from_checkpoint(&crate::checkpoint::Checkpoint::from_bytes(&buf).unwrap())
                .unwrap();
        assert_eq!(back.mode(), model.mode());
        assert_eq!(back.lookback(), model.lookback());
        assert_eq!(back.p_drop(), model.p_drop());
        assert!(back.mask_handoff());
        assert_eq!(back.partition(), model.partition());
        for (a, b) in model.flat_views().iter().zip(back.flat_views()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn regression_model_has_scalar_io() {
        let model = Seq2SeqModel::new_regression(4, 6, 0.0, false, 7).unwrap();
        assert_eq!(model.io_dim(), 1);
        assert_eq!(model.dropout_spec().group_sizes, vec![5, 5, 5, 4]);
    }

    #[test]
    fn handoff_flag_adds_mask_group() {
        let part = BinPartition::new(0.0, 1.0, 3).unwrap();
        let model = Seq2SeqModel::new_ordinal(part, 4, 6, 0.1, true, 7).unwrap();
        assert_eq!(model.dropout_spec().group_sizes.len(), 5);
    }
}
