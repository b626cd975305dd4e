pub mod eval;
pub mod graph;
pub mod io;
pub mod lie;
pub mod oracle;
pub mod pipeline;
pub mod projective;
