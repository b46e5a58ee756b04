//! Fourier and Haar wavelet transforms.

mod diff;
pub mod fft;
pub mod haar;
pub mod masks;

pub use fft::{fft3, fft3_complex, fft_flops, ifft3, ifft3_complex, ifft3_real, is_supported_extent};
pub use haar::{dwt3_haar, idwt3_haar, SubbandSet, SUBBAND_KEYS};
pub use masks::{band_decompose, band_masks, BandMasks, DEFAULT_CUTOFFS};
