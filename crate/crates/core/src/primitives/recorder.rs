use std::sync::Arc;

use super::{CodeKey, CompiledUnit, IrFrame, OpenedFrame, Runtime};
use crate::coreir::{FunIdx, Value};
use crate::fault::Fault;

/// One primitive invocation, with its arguments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PrimCall {
    HeapGet(Value),
    HeapSet(Value, Value),
    Push(Value),
    Pop,
    PushIrsf(IrFrame),
    OpenSf,
    InstallCode(CodeKey),
    LoadCode(CodeKey),
    CheckInstalled(FunIdx),
    Print(Value),
}

impl PrimCall {
    /// Whether this is one of the code-repository primitives.
    pub fn touches_code(&self) -> bool {
        matches!(self, PrimCall::InstallCode(_) | PrimCall::LoadCode(_) | PrimCall::CheckInstalled(_))
    }
}

/// Wraps a runtime and logs every primitive call made through it.
#[derive(Debug, Clone)]
pub struct Recorder<R> {
    pub inner: R,
    pub log: Vec<PrimCall>,
}

impl<R: Runtime> Recorder<R> {
    pub fn new(inner: R) -> Self {
        Recorder { inner, log: Vec::new() }
    }
}

impl<R: Runtime> Runtime for Recorder<R> {
    fn heap_get(&mut self, addr: Value) -> Result<Value, Fault> {
        self.log.push(PrimCall::HeapGet(addr));
        self.inner.heap_get(addr)
    }

    fn heap_set(&mut self, addr: Value, v: Value) -> Result<(), Fault> {
        self.log.push(PrimCall::HeapSet(addr, v));
        self.inner.heap_set(addr, v)
    }

    fn push(&mut self, v: Value) -> Result<(), Fault> {
        self.log.push(PrimCall::Push(v));
        self.inner.push(v)
    }

    fn pop(&mut self) -> Result<Value, Fault> {
        self.log.push(PrimCall::Pop);
        self.inner.pop()
    }

    fn push_irsf(&mut self, frame: IrFrame) -> Result<(), Fault> {
        self.log.push(PrimCall::PushIrsf(frame.clone()));
        self.inner.push_irsf(frame)
    }

    fn open_sf(&mut self) -> Result<OpenedFrame, Fault> {
        self.log.push(PrimCall::OpenSf);
        self.inner.open_sf()
    }

    fn install_code(&mut self, unit: CompiledUnit) -> Result<(), Fault> {
        self.log.push(PrimCall::InstallCode(unit.key));
        self.inner.install_code(unit)
    }

    fn load_code(&mut self, key: CodeKey) -> Result<Arc<CompiledUnit>, Fault> {
        self.log.push(PrimCall::LoadCode(key));
        self.inner.load_code(key)
    }

    fn check_installed(&mut self, fun: FunIdx) -> bool {
        self.log.push(PrimCall::CheckInstalled(fun));
        self.inner.check_installed(fun)
    }

    fn print_val(&mut self, v: Value) {
        self.log.push(PrimCall::Print(v));
        self.inner.print_val(v)
    }

    fn trace(&self) -> &[Value] {
        self.inner.trace()
    }

    fn instance(&self) -> u64 {
        self.inner.instance()
    }

    fn ints_above_boundary(&self) -> usize {
        self.inner.ints_above_boundary()
    }

    fn heap(&self) -> &[Value] {
        self.inner.heap()
    }
}
