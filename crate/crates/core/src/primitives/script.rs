//! Random primitive-call scripts and a replayer, for checking that the two
//! runtimes agree call by call.

use std::sync::Arc;

use rand::Rng;

use super::{CodeKey, CompiledUnit, IrFrame, OpenedFrame, PrimCall, Runtime, SegmentKey};
use crate::backend::{RtlInstr, RtlUnit, RETRET};
use crate::coreir::{FunIdx, Label, Reg, RegMap, Value, VersionTag};
use crate::fault::Fault;

/// What a primitive returned, in a form two runtimes can be compared on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PrimResult {
    Unit,
    Value(Value),
    Frame(OpenedFrame),
    Loaded(CodeKey),
    Bool(bool),
}

/// A one-instruction unit standing in for compiled code.
pub fn dummy_unit(key: CodeKey) -> CompiledUnit {
    let rtl = RtlUnit::new(key, 0, vec![RtlInstr::ReturnStatus(RETRET)], 0).expect("trivial unit is valid");
    CompiledUnit { key, rtl: Arc::new(rtl), native: None }
}

/// Performs one scripted call on `rt`.
pub fn replay<R: Runtime + ?Sized>(rt: &mut R, call: &PrimCall) -> Result<PrimResult, Fault> {
    Ok(match call {
        PrimCall::HeapGet(a) => PrimResult::Value(rt.heap_get(*a)?),
        PrimCall::HeapSet(a, v) => {
            rt.heap_set(*a, *v)?;
            PrimResult::Unit
        }
        PrimCall::Push(v) => {
            rt.push(*v)?;
            PrimResult::Unit
        }
        PrimCall::Pop => PrimResult::Value(rt.pop()?),
        PrimCall::PushIrsf(f) => {
            rt.push_irsf(f.clone())?;
            PrimResult::Unit
        }
        PrimCall::OpenSf => PrimResult::Frame(rt.open_sf()?),
        PrimCall::InstallCode(k) => {
            rt.install_code(dummy_unit(*k))?;
            PrimResult::Unit
        }
        PrimCall::LoadCode(k) => PrimResult::Loaded(rt.load_code(*k)?.key),
        PrimCall::CheckInstalled(f) => PrimResult::Bool(rt.check_installed(*f)),
        PrimCall::Print(v) => {
            rt.print_val(*v);
            PrimResult::Unit
        }
    })
}

fn small_key(rng: &mut impl Rng) -> CodeKey {
    let fun = FunIdx(rng.random_range(1..=3));
    let segment = if rng.random_bool(0.5) { SegmentKey::Entry } else { SegmentKey::Cont(Label(rng.random_range(1..=3))) };
    CodeKey { fun, segment }
}

fn random_frame(rng: &mut impl Rng) -> IrFrame {
    let regs: RegMap = (0..rng.random_range(0..3)).map(|_| (Reg(rng.random_range(1..5)), rng.random_range(-9..10))).collect();
    IrFrame {
        retreg: Reg(rng.random_range(1..5)),
        fun: FunIdx(rng.random_range(1..4)),
        tag: if rng.random_bool(0.5) { VersionTag::Base } else { VersionTag::Opt },
        resume: Label(rng.random_range(1..9)),
        regs,
    }
}

/// A random script of at most `max_len` calls against a heap of
/// `heap_size` cells. Values are kept small so that pairs pushed on the
/// stack often decode as native frames, and some are out of range.
pub fn random_script(rng: &mut impl Rng, max_len: usize, heap_size: usize) -> Vec<PrimCall> {
    let len = rng.random_range(0..=max_len);
    let hs = heap_size as Value;
    (0..len)
        .map(|_| match rng.random_range(0..100) {
            0..=24 => PrimCall::Push(rng.random_range(-2..6)),
            25..=44 => PrimCall::Pop,
            45..=52 => PrimCall::PushIrsf(random_frame(rng)),
            53..=64 => PrimCall::OpenSf,
            65..=72 => PrimCall::HeapGet(rng.random_range(-1..=hs)),
            73..=80 => PrimCall::HeapSet(rng.random_range(-1..=hs), rng.random()),
            81..=85 => PrimCall::InstallCode(small_key(rng)),
            86..=90 => PrimCall::LoadCode(small_key(rng)),
            91..=95 => PrimCall::CheckInstalled(FunIdx(rng.random_range(1..=3))),
            _ => PrimCall::Print(rng.random()),
        })
        .collect()
}
