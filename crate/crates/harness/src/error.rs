use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("usage: {0}")]
    Usage(String),

    /// Training stopped on a non-finite value; artifacts up to the last good
    /// state were written.
    #[error("numerical abort: {0}")]
    Aborted(String),
}

/// Process exit status for an error chain.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<HarnessError>() {
            return match e {
                HarnessError::Usage(_) => EXIT_USAGE,
                HarnessError::Aborted(_) => EXIT_NUMERICAL,
            };
        }
        if let Some(e) = cause.downcast_ref::<euv_ilt::Error>() {
            return match e {
                euv_ilt::Error::Numerical(_) => EXIT_NUMERICAL,
                euv_ilt::Error::Io(_) | euv_ilt::Error::Csv(_) => EXIT_IO,
                _ => EXIT_USAGE,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<image::ImageError>() {
            return EXIT_IO;
        }
        if let Some(e) = cause.downcast_ref::<serde_json::Error>() {
            return if e.is_io() { EXIT_IO } else { EXIT_USAGE };
        }
    }
    EXIT_USAGE
}
