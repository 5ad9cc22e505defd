//! The CoreIR data model.
//!
//! A [`Program`] maps function names to [`Function`]s. Each function has a
//! base [`Version`] and at most one optimized version that may contain
//! `Assume` speculation. A version is a control-flow graph: a mapping from
//! [`Label`]s to [`Instr`]uctions, every instruction naming its successors.
//!
//! Values are 64-bit two's-complement integers and all arithmetic wraps.
//! Comparisons produce `1` or `0`, and conditionals treat any non-zero value
//! as true.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::fault::Fault;

mod parser;
mod printer;
mod validate;

pub use parser::{parse_program, ParseError};
pub use validate::{check_program, validate_program, Severity, Violation};

pub type Value = i64;

/// Register mapping of an activation.
pub type RegMap = BTreeMap<Reg, Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Reg(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(pub u32);

/// Dense, 1-based function index, assigned in declaration order. This is
/// how a function identity travels through the stack as a [`Value`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FunIdx(pub u32);

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l{}", self.0)
    }
}

impl fmt::Display for FunIdx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FunIdx {
    pub fn as_value(self) -> Value {
        Value::from(self.0)
    }
}

/// Expressions. Generic over the register type so that the RTL tier can
/// reuse the same operator set over its virtual registers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Expr<R = Reg> {
    Add(R, R),
    Sub(R, R),
    Mul(R, R),
    Eq(R, R),
    Lt(R, R),
    Mod(R, R),
    Neg(R),
    Const(Value),
    IsZero(R),
    AddImm(R, Value),
    MulImm(R, Value),
}

impl<R: Copy> Expr<R> {
    /// Registers read by the expression, left to right.
    pub fn regs(&self) -> impl Iterator<Item = R> {
        let (a, b) = match *self {
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Eq(a, b)
            | Expr::Lt(a, b)
            | Expr::Mod(a, b) => (Some(a), Some(b)),
            Expr::Neg(a) | Expr::IsZero(a) | Expr::AddImm(a, _) | Expr::MulImm(a, _) => {
                (Some(a), None)
            }
            Expr::Const(_) => (None, None),
        };
        a.into_iter().chain(b)
    }

    pub fn map_regs<S>(&self, mut f: impl FnMut(R) -> S) -> Expr<S> {
        match *self {
            Expr::Add(a, b) => Expr::Add(f(a), f(b)),
            Expr::Sub(a, b) => Expr::Sub(f(a), f(b)),
            Expr::Mul(a, b) => Expr::Mul(f(a), f(b)),
            Expr::Eq(a, b) => Expr::Eq(f(a), f(b)),
            Expr::Lt(a, b) => Expr::Lt(f(a), f(b)),
            Expr::Mod(a, b) => Expr::Mod(f(a), f(b)),
            Expr::Neg(a) => Expr::Neg(f(a)),
            Expr::Const(v) => Expr::Const(v),
            Expr::IsZero(a) => Expr::IsZero(f(a)),
            Expr::AddImm(a, v) => Expr::AddImm(f(a), v),
            Expr::MulImm(a, v) => Expr::MulImm(f(a), v),
        }
    }

    /// Evaluates the expression, reading registers through `read`.
    pub fn eval_with(&self, mut read: impl FnMut(R) -> Result<Value, Fault>) -> Result<Value, Fault> {
        Ok(match *self {
            Expr::Add(a, b) => read(a)?.wrapping_add(read(b)?),
            Expr::Sub(a, b) => read(a)?.wrapping_sub(read(b)?),
            Expr::Mul(a, b) => read(a)?.wrapping_mul(read(b)?),
            Expr::Eq(a, b) => Value::from(read(a)? == read(b)?),
            Expr::Lt(a, b) => Value::from(read(a)? < read(b)?),
            Expr::Mod(a, b) => {
                let (x, y) = (read(a)?, read(b)?);
                if y == 0 {
                    return Err(Fault::ModuloByZero);
                }
                x.wrapping_rem(y)
            }
            Expr::Neg(a) => read(a)?.wrapping_neg(),
            Expr::Const(v) => v,
            Expr::IsZero(a) => Value::from(read(a)? == 0),
            Expr::AddImm(a, v) => read(a)?.wrapping_add(v),
            Expr::MulImm(a, v) => read(a)?.wrapping_mul(v),
        })
    }
}

/// Evaluates `e` in `env`. Unbound registers and `%` by zero go wrong.
pub fn eval_expr(env: &RegMap, e: &Expr) -> Result<Value, Fault> {
    e.eval_with(|r| env.get(&r).copied().ok_or(Fault::UnboundRegister(r)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instr {
    Nop {
        next: Label,
    },
    Assign {
        dst: Reg,
        expr: Expr,
        next: Label,
    },
    Cond {
        reg: Reg,
        ifso: Label,
        ifnot: Label,
    },
    Print {
        reg: Reg,
        next: Label,
    },
    Call {
        dst: Reg,
        callee: String,
        args: Vec<Reg>,
        next: Label,
    },
    Return {
        reg: Reg,
    },
    MemGet {
        dst: Reg,
        addr: Reg,
        next: Label,
    },
    /// `addr <- MemSet src next`: stores `src` at address `addr`.
    MemSet {
        addr: Reg,
        src: Reg,
        next: Label,
    },
    /// Continues at `next` if `guard` is non-zero, otherwise deoptimizes to
    /// the base version of `target` at `target_label`, with registers built
    /// from `varmap` evaluated in the current environment.
    Assume {
        guard: Reg,
        target: String,
        target_label: Label,
        varmap: Vec<(Reg, Expr)>,
        next: Label,
    },
}

impl Instr {
    /// Successor labels within the same version.
    pub fn successors(&self) -> impl Iterator<Item = Label> {
        let (a, b) = match *self {
            Instr::Nop { next }
            | Instr::Assign { next, .. }
            | Instr::Print { next, .. }
            | Instr::Call { next, .. }
            | Instr::MemGet { next, .. }
            | Instr::MemSet { next, .. }
            | Instr::Assume { next, .. } => (Some(next), None),
            Instr::Cond { ifso, ifnot, .. } => (Some(ifso), Some(ifnot)),
            Instr::Return { .. } => (None, None),
        };
        a.into_iter().chain(b)
    }

    /// Registers read by the instruction.
    pub fn uses(&self) -> Vec<Reg> {
        match self {
            Instr::Nop { .. } => vec![],
            Instr::Assign { expr, .. } => expr.regs().collect(),
            Instr::Cond { reg, .. } | Instr::Print { reg, .. } | Instr::Return { reg } => vec![*reg],
            Instr::Call { args, .. } => args.clone(),
            Instr::MemGet { addr, .. } => vec![*addr],
            Instr::MemSet { addr, src, .. } => vec![*addr, *src],
            Instr::Assume { guard, varmap, .. } => std::iter::once(*guard)
                .chain(varmap.iter().flat_map(|(_, e)| e.regs()))
                .collect(),
        }
    }

    /// Register written on the fall-through path, if any.
    pub fn def(&self) -> Option<Reg> {
        match *self {
            Instr::Assign { dst, .. } | Instr::Call { dst, .. } | Instr::MemGet { dst, .. } => Some(dst),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Version {
    pub entry: Label,
    pub code: BTreeMap<Label, Instr>,
}

impl Version {
    pub fn instr(&self, label: Label) -> Option<&Instr> {
        self.code.get(&label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VersionTag {
    Base,
    Opt,
}

impl fmt::Display for VersionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VersionTag::Base => "base",
            VersionTag::Opt => "opt",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub params: Vec<Reg>,
    pub base: Version,
    pub opt: Option<Version>,
}

impl Function {
    /// The version new activations execute: the optimized one if present.
    pub fn current_version(&self) -> &Version {
        self.opt.as_ref().unwrap_or(&self.base)
    }

    pub fn current_tag(&self) -> VersionTag {
        if self.opt.is_some() {
            VersionTag::Opt
        } else {
            VersionTag::Base
        }
    }

    pub fn version(&self, tag: VersionTag) -> Option<&Version> {
        match tag {
            VersionTag::Base => Some(&self.base),
            VersionTag::Opt => self.opt.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("duplicate function {0}")]
pub struct DuplicateFunction(pub String);

/// A CoreIR program. Functions keep their declaration order, which fixes
/// their [`FunIdx`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    functions: Vec<Function>,
    index: HashMap<String, FunIdx>,
}

impl Program {
    pub const ENTRY: &'static str = "main";

    pub fn new(functions: Vec<Function>) -> Result<Self, DuplicateFunction> {
        let mut index = HashMap::with_capacity(functions.len());
        for (i, f) in functions.iter().enumerate() {
            let idx = FunIdx(i as u32 + 1);
            if index.insert(f.name.clone(), idx).is_some() {
                return Err(DuplicateFunction(f.name.clone()));
            }
        }
        Ok(Program { functions, index })
    }

    pub fn functions(&self) -> &[Function] {
        &self.functions
    }

    pub fn into_functions(self) -> Vec<Function> {
        self.functions
    }

    pub fn function(&self, name: &str) -> Option<&Function> {
        self.index.get(name).map(|&idx| self.get(idx))
    }

    pub fn idx_of(&self, name: &str) -> Option<FunIdx> {
        self.index.get(name).copied()
    }

    /// Panics if `idx` does not belong to this program.
    pub fn get(&self, idx: FunIdx) -> &Function {
        &self.functions[idx.0 as usize - 1]
    }

    pub fn try_get(&self, idx: FunIdx) -> Option<&Function> {
        (idx.0 as usize).checked_sub(1).and_then(|i| self.functions.get(i))
    }

    /// Decodes a function index read back from the stack.
    pub fn idx_from_value(&self, v: Value) -> Option<FunIdx> {
        (1..=self.functions.len() as Value)
            .contains(&v)
            .then_some(FunIdx(v as u32))
    }

    /// Removes every optimized version.
    pub fn strip_opt(&self) -> Program {
        let functions = self
            .functions
            .iter()
            .map(|f| Function { opt: None, ..f.clone() })
            .collect();
        Program { functions, index: self.index.clone() }
    }
}
