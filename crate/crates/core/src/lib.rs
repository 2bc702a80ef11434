//! Blocked, packing-based matrix multiplication over every mix of real and
//! complex domains and single and double precisions.

pub mod bench;
pub mod config;
pub mod dispatch;
pub mod dtypes;
pub mod error;
pub mod gemm_core;
pub mod kernels;
pub mod oracle;
pub mod packing;

pub use config::{CTempPolicy, Config};
pub use dispatch::{gemm, plan, ExecutionPlan, GemmReport};
pub use dtypes::{CaseId, Datatype, Domain, Matrix, MatrixView, MatrixViewMut, Precision, Scalar, StorageKind};
pub use error::{GemmError, Result};
