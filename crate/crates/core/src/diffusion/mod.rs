//! Noise schedule, forward noising, the denoiser with analytic gradients,
//! the denoising loss, ancestral sampling and shallow-reverse style
//! transfer.

mod checkpoint;
mod denoiser;
mod loss;
mod model;
mod optim;
mod sampler;
mod schedule;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, FORMAT_VERSION, MAGIC};
pub use denoiser::{assemble_input, Denoiser, DenoiserGrads, DenoiserShape, DenoiserTrace};
pub use loss::{accumulate_loss_and_grads, ldm_loss, ldm_loss_and_grads, GradientSet, TrainingExample};
pub use model::{row_name, ModelConfig, ModelState, Prediction, Trainable};
pub use optim::{Optimizer, OptimizerConfig};
pub use sampler::{ddpm_step, reverse_chain, sample, sample_latents, style_transfer, SampleOptions};
pub use schedule::{forward_noise, make_schedule, time_embedding, NoiseSchedule};
