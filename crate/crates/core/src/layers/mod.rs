pub mod activation;
pub mod batchnorm;
pub mod dense;
pub mod eml;
pub mod noise;
pub mod pool;

pub use activation::{LeakyRelu, LEAKY_SLOPE};
pub use batchnorm::{BnCore, FreqBatchNorm, BN_EPS, BN_MOMENTUM};
pub use dense::Dense;
pub use eml::{EmlLayer, ParamBuf, SpectralWeight};
pub use noise::{approx_dropout, approx_leaky_relu, GaussianNoise, NoiseCtx, NoiseLayerConfig};
pub use pool::{maxpool_bridge, PoolBridge, PoolConfig};
