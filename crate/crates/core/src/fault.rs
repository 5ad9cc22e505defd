use thiserror::Error;

use crate::coreir::{Label, Reg, Value};

/// A going-wrong event. Every execution tier reports failures through this
/// type so that behaviors can be compared message for message.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Fault {
    #[error("unbound register {0}")]
    UnboundRegister(Reg),
    #[error("modulo by zero")]
    ModuloByZero,
    #[error("MemGet out of memory range")]
    MemGetOutOfRange,
    #[error("MemSet out of memory range")]
    MemSetOutOfRange,
    #[error("stack overflow")]
    StackOverflow,
    #[error("Pop on empty stack")]
    PopEmpty,
    #[error("Pop on non-integer top")]
    PopNonInteger,
    #[error("corrupt stack")]
    CorruptStack,
    #[error("corrupt deopt payload")]
    CorruptDeoptPayload,
    #[error("unknown function {0}")]
    UnknownFunction(String),
    #[error("unknown function index {0}")]
    UnknownFunIdx(Value),
    #[error("arity mismatch calling {callee}: expected {expected}, got {got}")]
    ArityMismatch {
        callee: String,
        expected: usize,
        got: usize,
    },
    #[error("unknown label {label} in {fun}")]
    UnknownLabel { fun: String, label: Label },
    #[error("code not installed")]
    CodeNotInstalled,
    #[error("already installed")]
    AlreadyInstalled,
    #[error("unexpected return status {0}")]
    BadStatus(Value),
    #[error("native code belongs to another runtime")]
    ForeignCode,
    #[error("unit has no native code")]
    NoNativeCode,
}
