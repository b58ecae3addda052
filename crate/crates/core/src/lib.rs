//! Device-free localization from Wi-Fi CSI amplitudes using the Fresnel
//! phase differences between subcarriers.

pub mod fit;
pub mod fresnel;
pub mod io;
pub mod locate;
pub mod phase;
pub mod pipeline;
pub mod scenario;
pub mod sim;
