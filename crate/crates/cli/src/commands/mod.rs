mod bench;
mod fit;
mod replicability;
mod simulate;

pub use bench::cmd_bench;
pub use fit::{cmd_fit, cmd_network, inference_csv, load_data, FitData};
pub use replicability::cmd_replicability;
pub use simulate::cmd_simulate;
