use std::sync::Arc;

use super::{
    decode_native, CodeKey, CompiledUnit, IrFrame, OpenedFrame, Runtime, RuntimeConfig, StackElem, World,
};
use crate::coreir::{FunIdx, Value};
use crate::fault::Fault;

/// Split-stack runtime. Integers live in a fixed buffer with a top index;
/// interpreter frames live in their own stack, each tagged with the integer
/// height at the moment it was pushed. The heights order the two stacks.
#[derive(Debug, Clone)]
pub struct FlatRuntime {
    ints: Box<[Value]>,
    top: usize,
    frames: Vec<(usize, IrFrame)>,
    frame_capacity: usize,
    world: World,
}

impl FlatRuntime {
    pub fn new(cfg: RuntimeConfig) -> Self {
        FlatRuntime {
            ints: vec![0; cfg.int_capacity].into_boxed_slice(),
            top: 0,
            frames: Vec::new(),
            frame_capacity: cfg.frame_capacity,
            world: World::new(cfg.heap_size),
        }
    }

    fn boundary(&self) -> usize {
        self.frames.last().map_or(0, |(h, _)| *h)
    }

    pub(super) fn world(&self) -> &World {
        &self.world
    }

    pub fn ints(&self) -> &[Value] {
        &self.ints[..self.top]
    }

    /// The interleaved view of both stacks.
    pub fn merged_stack(&self) -> Vec<StackElem> {
        let mut out = Vec::with_capacity(self.top + self.frames.len());
        let mut i = 0;
        for (h, f) in &self.frames {
            out.extend(self.ints[i..*h].iter().map(|&v| StackElem::Int(v)));
            out.push(StackElem::Frame(f.clone()));
            i = *h;
        }
        out.extend(self.ints[i..self.top].iter().map(|&v| StackElem::Int(v)));
        out
    }
}

impl Runtime for FlatRuntime {
    fn heap_get(&mut self, addr: Value) -> Result<Value, Fault> {
        self.world.heap_get(addr)
    }

    fn heap_set(&mut self, addr: Value, v: Value) -> Result<(), Fault> {
        self.world.heap_set(addr, v)
    }

    fn push(&mut self, v: Value) -> Result<(), Fault> {
        if self.top == self.ints.len() {
            return Err(Fault::StackOverflow);
        }
        self.ints[self.top] = v;
        self.top += 1;
        Ok(())
    }

    fn pop(&mut self) -> Result<Value, Fault> {
        if self.top == self.boundary() {
            return Err(if self.frames.is_empty() { Fault::PopEmpty } else { Fault::PopNonInteger });
        }
        self.top -= 1;
        Ok(self.ints[self.top])
    }

    fn push_irsf(&mut self, frame: IrFrame) -> Result<(), Fault> {
        if self.frames.len() == self.frame_capacity {
            return Err(Fault::StackOverflow);
        }
        self.frames.push((self.top, frame));
        Ok(())
    }

    fn open_sf(&mut self) -> Result<OpenedFrame, Fault> {
        let boundary = self.boundary();
        if boundary > self.top {
            return Err(Fault::CorruptStack);
        }
        match self.top - boundary {
            0 => Ok(self.frames.pop().map_or(OpenedFrame::Empty, |(_, f)| OpenedFrame::Ir(f))),
            1 => Err(Fault::CorruptStack),
            _ => {
                let frame = decode_native(self.ints[self.top - 1], self.ints[self.top - 2])?;
                self.top -= 2;
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
        self.top - self.boundary()
    }

    fn heap(&self) -> &[Value] {
        &self.world.heap
    }
}
