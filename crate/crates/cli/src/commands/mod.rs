pub mod omsel_bench;
pub mod pipeline;
pub mod toytask;
pub mod trace;
