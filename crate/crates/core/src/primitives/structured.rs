use std::sync::Arc;

use super::{decode_native, CodeKey, CompiledUnit, IrFrame, OpenedFrame, Runtime, RuntimeConfig, World};
use crate::coreir::{FunIdx, Value};
use crate::fault::Fault;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StackElem {
    Int(Value),
    Frame(IrFrame),
}

/// Reference runtime: a single unbounded stack mixing integers and frames.
#[derive(Debug, Clone)]
pub struct StructuredRuntime {
    stack: Vec<StackElem>,
    world: World,
}

impl StructuredRuntime {
    pub fn new(cfg: RuntimeConfig) -> Self {
        StructuredRuntime { stack: Vec::new(), world: World::new(cfg.heap_size) }
    }

    pub fn stack(&self) -> &[StackElem] {
        &self.stack
    }

    pub(super) fn world(&self) -> &World {
        &self.world
    }
}

impl Runtime for StructuredRuntime {
    fn heap_get(&mut self, addr: Value) -> Result<Value, Fault> {
        self.world.heap_get(addr)
    }

    fn heap_set(&mut self, addr: Value, v: Value) -> Result<(), Fault> {
        self.world.heap_set(addr, v)
    }

    fn push(&mut self, v: Value) -> Result<(), Fault> {
        self.stack.push(StackElem::Int(v));
        Ok(())
    }

    fn pop(&mut self) -> Result<Value, Fault> {
        match self.stack.last() {
            None => Err(Fault::PopEmpty),
            Some(StackElem::Frame(_)) => Err(Fault::PopNonInteger),
            Some(&StackElem::Int(v)) => {
                self.stack.pop();
                Ok(v)
            }
        }
    }

    fn push_irsf(&mut self, frame: IrFrame) -> Result<(), Fault> {
        self.stack.push(StackElem::Frame(frame));
        Ok(())
    }

    fn open_sf(&mut self) -> Result<OpenedFrame, Fault> {
        let n = self.stack.len();
        match self.stack.last() {
            None => Ok(OpenedFrame::Empty),
            Some(StackElem::Frame(_)) => match self.stack.pop() {
                Some(StackElem::Frame(f)) => Ok(OpenedFrame::Ir(f)),
                _ => unreachable!(),
            },
            Some(&StackElem::Int(label)) => {
                let fun = match n.checked_sub(2).map(|i| &self.stack[i]) {
                    Some(&StackElem::Int(fun)) => fun,
                    _ => return Err(Fault::CorruptStack),
                };
                let frame = decode_native(label, fun)?;
                self.stack.truncate(n - 2);
                Ok(OpenedFrame::Native(frame))
            }
        }
    }

    fn install_code(&mut self, unit: CompiledUnit) -> Result<(), Fault> {
        self.world.install(unit)
    }

    fn load_code(&mut self, key: CodeKey) -> Result<Arc<CompiledUnit>, Fault> {
        self.world.load(key)
    }

    fn check_installed(&mut self, fun: FunIdx) -> bool {
        self.world.installed(fun)
    }

    fn print_val(&mut self, v: Value) {
        self.world.trace.push(v);
    }

    fn trace(&self) -> &[Value] {
        &self.world.trace
    }

    fn instance(&self) -> u64 {
        self.world.instance
    }

    fn ints_above_boundary(&self) -> usize {
        self.stack.iter().rev().take_while(|e| matches!(e, StackElem::Int(_))).count()
    }

    fn heap(&self) -> &[Value] {
        &self.world.heap
    }
}
