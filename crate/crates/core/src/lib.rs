pub mod bench;
pub mod methods;
pub mod model;
pub mod oracle;
pub mod solver;
