pub mod diffkernel;
pub mod graph_io;
pub mod model;
pub mod train;
