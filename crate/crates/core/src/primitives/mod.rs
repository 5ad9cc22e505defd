//! The engine's mutable world and the ten primitives that touch it.
//!
//! Everything the engine cannot express as a pure computation goes through
//! [`Runtime`]: the heap, the execution stack, the repository of installed
//! code, and the output sink. Two implementations exist:
//!
//! * [`StructuredRuntime`] keeps one interleaved stack of integers and
//!   interpreter frames. It is the easy one to reason about.
//! * [`FlatRuntime`] keeps integers in a fixed-capacity buffer and
//!   interpreter frames in a separate stack, each frame recording the
//!   integer height at which it was pushed. This is the layout compiled code
//!   wants.
//!
//! [`relate`] is the correspondence between the two, and the property tests
//! replay random primitive sequences on both to check that the flat runtime
//! refines the structured one.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::backend::RtlUnit;
use crate::coreir::{FunIdx, Label, Reg, RegMap, Value, VersionTag};
use crate::fault::Fault;
use crate::nativegen::CodeHandle;

mod flat;
mod recorder;
pub mod script;
mod structured;

pub use flat::FlatRuntime;
pub use recorder::{PrimCall, Recorder};
pub use structured::{StackElem, StructuredRuntime};

pub const DEFAULT_HEAP_SIZE: usize = 4096;
pub const DEFAULT_INT_CAPACITY: usize = 1 << 16;
pub const DEFAULT_FRAME_CAPACITY: usize = 1 << 12;

/// A suspended interpreter activation, waiting for the value of a call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrFrame {
    pub retreg: Reg,
    pub fun: FunIdx,
    pub tag: VersionTag,
    pub resume: Label,
    pub regs: RegMap,
}

/// A suspended compiled activation: which continuation to run next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NativeFrame {
    pub fun: FunIdx,
    pub cont_label: Label,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OpenedFrame {
    Empty,
    Ir(IrFrame),
    Native(NativeFrame),
}

/// Which piece of a split function a compiled unit implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SegmentKey {
    Entry,
    /// Continuation after the call at this label.
    Cont(Label),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CodeKey {
    pub fun: FunIdx,
    pub segment: SegmentKey,
}

impl CodeKey {
    pub fn entry(fun: FunIdx) -> Self {
        CodeKey { fun, segment: SegmentKey::Entry }
    }

    pub fn cont(fun: FunIdx, label: Label) -> Self {
        CodeKey { fun, segment: SegmentKey::Cont(label) }
    }
}

impl fmt::Display for CodeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.segment {
            SegmentKey::Entry => write!(f, "${}", self.fun),
            SegmentKey::Cont(l) => write!(f, "${}.{}", self.fun, l.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tier {
    Rtl,
    Native,
}

/// A compiled function segment as stored in the code repository.
#[derive(Debug, Clone)]
pub struct CompiledUnit {
    pub key: CodeKey,
    pub rtl: Arc<RtlUnit>,
    /// Machine code for the native tier. Absent for RTL-tier units.
    pub native: Option<Arc<CodeHandle>>,
}

impl CompiledUnit {
    pub fn tier(&self) -> Tier {
        if self.native.is_some() {
            Tier::Native
        } else {
            Tier::Rtl
        }
    }
}

impl PartialEq for CompiledUnit {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key && self.rtl == other.rtl && self.tier() == other.tier()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RuntimeConfig {
    pub heap_size: usize,
    /// Integer capacity of the flat stack. Unused by the structured runtime.
    pub int_capacity: usize,
    /// Frame capacity of the flat stack. Unused by the structured runtime.
    pub frame_capacity: usize,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            heap_size: DEFAULT_HEAP_SIZE,
            int_capacity: DEFAULT_INT_CAPACITY,
            frame_capacity: DEFAULT_FRAME_CAPACITY,
        }
    }
}

/// The primitive interface. Heap, stack, code repository and output sink
/// are disjoint: each primitive touches only the part it names.
pub trait Runtime {
    fn heap_get(&mut self, addr: Value) -> Result<Value, Fault>;
    fn heap_set(&mut self, addr: Value, v: Value) -> Result<(), Fault>;
    fn push(&mut self, v: Value) -> Result<(), Fault>;
    fn pop(&mut self) -> Result<Value, Fault>;
    fn push_irsf(&mut self, frame: IrFrame) -> Result<(), Fault>;
    /// Pops the most recent frame. A native frame is the `(fun, label)`
    /// pair pushed by a call sequence; it is popped label first.
    fn open_sf(&mut self) -> Result<OpenedFrame, Fault>;
    fn install_code(&mut self, unit: CompiledUnit) -> Result<(), Fault>;
    fn load_code(&mut self, key: CodeKey) -> Result<Arc<CompiledUnit>, Fault>;
    /// True iff the entry segment of `fun` is installed.
    fn check_installed(&mut self, fun: FunIdx) -> bool;
    fn print_val(&mut self, v: Value);

    /// Everything printed so far.
    fn trace(&self) -> &[Value];
    /// Identity of this runtime, stamped on the native code it owns.
    fn instance(&self) -> u64;
    /// Number of integers on the stack above the most recent frame boundary.
    fn ints_above_boundary(&self) -> usize;
    fn heap(&self) -> &[Value];
}

static NEXT_INSTANCE: AtomicU64 = AtomicU64::new(1);

/// Heap, code repository and output: the parts both runtimes share.
#[derive(Debug, Clone)]
pub struct World {
    heap: Vec<Value>,
    repo: HashMap<CodeKey, Arc<CompiledUnit>>,
    trace: Vec<Value>,
    instance: u64,
}

impl World {
    fn new(heap_size: usize) -> Self {
        World {
            heap: vec![0; heap_size],
            repo: HashMap::new(),
            trace: Vec::new(),
            instance: NEXT_INSTANCE.fetch_add(1, Ordering::Relaxed),
        }
    }

    fn index(&self, addr: Value) -> Option<usize> {
        usize::try_from(addr).ok().filter(|&a| a < self.heap.len())
    }

    fn heap_get(&self, addr: Value) -> Result<Value, Fault> {
        self.index(addr).map(|i| self.heap[i]).ok_or(Fault::MemGetOutOfRange)
    }

    fn heap_set(&mut self, addr: Value, v: Value) -> Result<(), Fault> {
        let i = self.index(addr).ok_or(Fault::MemSetOutOfRange)?;
        self.heap[i] = v;
        Ok(())
    }

    fn install(&mut self, unit: CompiledUnit) -> Result<(), Fault> {
        if self.repo.contains_key(&unit.key) {
            return Err(Fault::AlreadyInstalled);
        }
        self.repo.insert(unit.key, Arc::new(unit));
        Ok(())
    }

    fn load(&self, key: CodeKey) -> Result<Arc<CompiledUnit>, Fault> {
        self.repo.get(&key).cloned().ok_or(Fault::CodeNotInstalled)
    }

    fn installed(&self, fun: FunIdx) -> bool {
        self.repo.contains_key(&CodeKey::entry(fun))
    }

    /// Same heap, same installed units, same output.
    fn same_contents(&self, other: &World) -> bool {
        self.heap == other.heap
            && self.trace == other.trace
            && self.repo.len() == other.repo.len()
            && self.repo.iter().all(|(k, u)| other.repo.get(k).is_some_and(|v| **u == **v))
    }
}

/// Decodes the two integers of a native frame, popped in this order:
/// continuation label, then function index.
fn decode_native(label: Value, fun: Value) -> Result<NativeFrame, Fault> {
    let cont_label = u32::try_from(label).ok().filter(|&l| l > 0).ok_or(Fault::CorruptStack)?;
    let fun = u32::try_from(fun).ok().filter(|&f| f > 0).ok_or(Fault::CorruptStack)?;
    Ok(NativeFrame { fun: FunIdx(fun), cont_label: Label(cont_label) })
}

/// The refinement relation: `flat`'s integer and frame stacks, merged at the
/// recorded frame heights, equal `structured`'s interleaved stack, and the
/// heaps, repositories and traces agree.
pub fn relate(structured: &StructuredRuntime, flat: &FlatRuntime) -> bool {
    structured.world().same_contents(flat.world()) && structured.stack() == flat.merged_stack().as_slice()
}
