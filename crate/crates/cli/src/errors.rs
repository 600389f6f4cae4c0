use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Validation,
    Runtime,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Usage => 2,
            Kind::Validation => 3,
            Kind::Runtime => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::Usage => "usage",
            Kind::Validation => "validation",
            Kind::Runtime => "runtime",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    CliError {
        kind: Kind::Usage,
        message: message.into(),
    }
    .into()
}

pub fn validation(message: impl Into<String>) -> anyhow::Error {
    CliError {
        kind: Kind::Validation,
        message: message.into(),
    }
    .into()
}

/// Category of the first classifiable error in the chain.
pub fn classify(err: &anyhow::Error) -> Kind {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return e.kind;
        }
        if let Some(e) = cause.downcast_ref::<phasegen_core::Error>() {
            return match e.category() {
                phasegen_core::Category::Validation => Kind::Validation,
                phasegen_core::Category::Runtime => Kind::Runtime,
            };
        }
    }
    Kind::Runtime
}
