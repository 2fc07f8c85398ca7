pub mod data;
pub mod direct;
pub mod eval;
pub mod explain;
pub mod inference;
pub mod kb;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod query;
pub mod simplex;
pub mod tree;
