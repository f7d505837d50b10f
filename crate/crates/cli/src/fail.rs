//! Exit-code classification. 1 usage, 2 validation, 3 transport, 4 verdict
//! other than owned under `--assert-owned`.

use std::fmt::Display;

pub const USAGE: u8 = 1;
pub const VALIDATION: u8 = 2;
pub const TRANSPORT: u8 = 3;
pub const NOT_OWNED: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }

    pub fn validation(msg: impl Display) -> Self {
        Self::new(VALIDATION, anyhow::anyhow!("{msg}"))
    }
}

impl From<chainhash_net::VerifyError> for Failure {
    fn from(e: chainhash_net::VerifyError) -> Self {
        use chainhash_net::VerifyError as E;
        let code = match &e {
            E::Transport { .. } | E::Client(_) => TRANSPORT,
            E::Integrity(_) | E::UnsupportedMode(_) | E::InvalidOptions(_) => VALIDATION,
        };
        Self::new(code, e)
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

pub trait Classify<T> {
    fn or_validation(self) -> CliResult<T>;
    fn or_validation_ctx(self, what: impl Display) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn or_validation(self) -> CliResult<T> {
        self.map_err(|e| Failure::new(VALIDATION, e))
    }

    fn or_validation_ctx(self, what: impl Display) -> CliResult<T> {
        self.map_err(|e| Failure::new(VALIDATION, e.into().context(what.to_string())))
    }
}
