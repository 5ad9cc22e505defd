//! Host machine-code tier (x86-64, Unix).
//!
//! [`emit_unit`] translates a flat RTL unit to machine code,
//! [`install_native`] copies it into a fresh mapping and flips the mapping
//! to read+execute, and [`native_run`] calls it. Compiled code reaches the
//! runtime only through five shims (`Pop`, `Push`, `HeapGet`, `HeapSet`,
//! `Print`) listed in a table inside the [`NativeCtx`] it is handed.

use std::ffi::c_void;

use thiserror::Error;

use crate::backend::{RtlUnit, RunEnd};
use crate::coreir::Value;
use crate::fault::Fault;
use crate::primitives::Runtime;

mod memory;
#[cfg(target_arch = "x86_64")]
mod x64;

pub use memory::CodeHandle;

const EXIT_OK: u64 = 0;
const EXIT_FAULT: u64 = 1;
const EXIT_FUEL: u64 = 2;
const EXIT_MOD_ZERO: u64 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NativeError {
    #[error("native code generation is not supported on this host")]
    Unsupported,
    #[error("cannot map executable memory: {0}")]
    Map(String),
}

/// Whether this host can run the native tier.
pub fn host_supported() -> bool {
    cfg!(all(target_arch = "x86_64", unix))
}

/// Machine code for `u`.
pub fn emit_unit(u: &RtlUnit) -> Result<Vec<u8>, NativeError> {
    #[cfg(all(target_arch = "x86_64", unix))]
    {
        Ok(x64::emit(u))
    }
    #[cfg(not(all(target_arch = "x86_64", unix)))]
    {
        let _ = u;
        Err(NativeError::Unsupported)
    }
}

/// Copies `code` into executable memory owned by runtime `owner`.
pub fn install_native(code: &[u8], owner: u64) -> Result<CodeHandle, NativeError> {
    if !host_supported() {
        return Err(NativeError::Unsupported);
    }
    CodeHandle::new(code, owner)
}

type PrimFn = usize;

/// What generated code sees. The layout is shared with the emitter, which
/// addresses the fields by offset.
#[repr(C)]
pub(crate) struct NativeCtx {
    prims: [PrimFn; 5],
    /// Set by a shim whose primitive failed; the fault is in `fault`.
    failed: u64,
    /// Instructions left before the code must stop.
    fuel: u64,
    exit: u64,
    /// Points at a `&mut dyn Runtime` living on the caller's stack.
    rt: *mut c_void,
    fault: Option<Fault>,
}

impl NativeCtx {
    /// # Safety
    /// `ctx` must be the live context created by [`native_run`].
    unsafe fn runtime<'a>(ctx: *mut NativeCtx) -> &'a mut dyn Runtime {
        unsafe { &mut **((*ctx).rt as *mut &mut dyn Runtime) }
    }

    unsafe fn fail(ctx: *mut NativeCtx, e: Fault) -> i64 {
        unsafe {
            (*ctx).failed = 1;
            (*ctx).fault = Some(e);
        }
        0
    }
}

extern "sysv64" fn shim_pop(ctx: *mut NativeCtx) -> i64 {
    unsafe {
        match NativeCtx::runtime(ctx).pop() {
            Ok(v) => v,
            Err(e) => NativeCtx::fail(ctx, e),
        }
    }
}

extern "sysv64" fn shim_push(ctx: *mut NativeCtx, v: i64) -> i64 {
    unsafe {
        match NativeCtx::runtime(ctx).push(v) {
            Ok(()) => 0,
            Err(e) => NativeCtx::fail(ctx, e),
        }
    }
}

extern "sysv64" fn shim_heap_get(ctx: *mut NativeCtx, addr: i64) -> i64 {
    unsafe {
        match NativeCtx::runtime(ctx).heap_get(addr) {
            Ok(v) => v,
            Err(e) => NativeCtx::fail(ctx, e),
        }
    }
}

extern "sysv64" fn shim_heap_set(ctx: *mut NativeCtx, addr: i64, v: i64) -> i64 {
    unsafe {
        match NativeCtx::runtime(ctx).heap_set(addr, v) {
            Ok(()) => 0,
            Err(e) => NativeCtx::fail(ctx, e),
        }
    }
}

extern "sysv64" fn shim_print(ctx: *mut NativeCtx, v: i64) -> i64 {
    unsafe {
        NativeCtx::runtime(ctx).print_val(v);
    }
    0
}

/// Runs installed code on `rt` for at most `fuel` RTL instructions. Returns
/// how the run ended and how many instructions it executed, with the same
/// accounting as [`crate::rtlvm::rtl_run`].
pub fn native_run(h: &CodeHandle, rt: &mut dyn Runtime, fuel: u64) -> Result<(RunEnd, u64), Fault> {
    if h.owner() != rt.instance() {
        return Err(Fault::ForeignCode);
    }
    let mut rt_ref: &mut dyn Runtime = rt;
    let mut ctx = NativeCtx {
        prims: [
            shim_pop as *const () as PrimFn,
            shim_push as *const () as PrimFn,
            shim_heap_get as *const () as PrimFn,
            shim_heap_set as *const () as PrimFn,
            shim_print as *const () as PrimFn,
        ],
        failed: 0,
        fuel,
        exit: EXIT_FAULT,
        rt: &mut rt_ref as *mut &mut dyn Runtime as *mut c_void,
        fault: None,
    };
    // SAFETY: the handle holds code produced by `emit_unit`, which follows
    // the System V calling convention, only touches its own stack frame and
    // the context, and reaches the runtime through the shims above. The
    // owner check guarantees the code was compiled for this runtime.
    let status: Value = unsafe {
        let f: extern "sysv64" fn(*mut NativeCtx) -> i64 = std::mem::transmute(h.entry());
        f(&mut ctx)
    };
    match ctx.exit {
        EXIT_OK => Ok((RunEnd::Final(status), fuel - ctx.fuel)),
        EXIT_FUEL => Ok((RunEnd::StepCap, fuel)),
        EXIT_MOD_ZERO => Err(Fault::ModuloByZero),
        _ => Err(ctx.fault.take().unwrap_or(Fault::CorruptStack)),
    }
}

#[cfg(all(test, target_arch = "x86_64", unix))]
mod tests;
