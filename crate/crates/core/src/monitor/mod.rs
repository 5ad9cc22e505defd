//! The JIT driver.
//!
//! [`Jit`] is a state machine over [`JitState`]. Each [`Jit::step`] is one
//! transition: the monitor handles a synchronization event (call, return or
//! deoptimization), possibly compiling the callee first, then dispatches to
//! the interpreter or to installed code. Interpreted slices and compiled
//! units both run to their next synchronization point and hand control
//! back; compiled units leave their requests on the runtime stack.

use std::fmt;
use std::sync::Arc;

use crate::backend::{compile_function, CompileOptions, PlantedBug, RunEnd, RETCALL, RETDEOPT, RETRET};
use crate::behavior::{Behavior, Status};
use crate::coreir::{FunIdx, Instr, Label, Program, Reg, RegMap, Value, VersionTag};
use crate::fault::Fault;
use crate::interp::{interp_slice, InterpOutcome, Snapshot, DEFAULT_FUEL};
use crate::nativegen::native_run;
use crate::primitives::{
    CodeKey, CompiledUnit, FlatRuntime, OpenedFrame, Runtime, RuntimeConfig, StructuredRuntime, Tier,
    DEFAULT_HEAP_SIZE,
};
use crate::rtlvm::{rtl_run, rtl_start, rtl_step, RtlState, Step, DEFAULT_NATIVE_BUDGET};

mod profiler;

pub use profiler::{Heuristic, Never, Profiler, Threshold};

pub const DEFAULT_STEP_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StackImpl {
    Structured,
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hotness {
    /// Compile a function on its n-th call.
    Calls(u64),
    Never,
}

impl Hotness {
    pub fn heuristic(self) -> Box<dyn Heuristic> {
        match self {
            Hotness::Calls(n) => Box::new(Threshold(n)),
            Hotness::Never => Box::new(Never),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Config {
    pub tier: Tier,
    pub stack_impl: StackImpl,
    pub hotness: Hotness,
    /// Instructions per interpreter slice.
    pub fuel: u64,
    pub heap_size: usize,
    /// Bound on monitor transitions.
    pub step_cap: u64,
    /// Bound on compiled-code instructions over the whole run.
    pub native_budget: u64,
    /// Run compiled units one RTL instruction per transition.
    pub step_trace: bool,
    /// Record one line per transition.
    pub log: bool,
    pub inject_compile_failure: bool,
    #[doc(hidden)]
    pub planted_bug: Option<PlantedBug>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            tier: Tier::Rtl,
            stack_impl: StackImpl::Flat,
            hotness: Hotness::Calls(2),
            fuel: DEFAULT_FUEL,
            heap_size: DEFAULT_HEAP_SIZE,
            step_cap: DEFAULT_STEP_CAP,
            native_budget: DEFAULT_NATIVE_BUDGET,
            step_trace: false,
            log: false,
            inject_compile_failure: false,
            planted_bug: None,
        }
    }
}

impl Config {
    fn runtime_config(&self) -> RuntimeConfig {
        RuntimeConfig { heap_size: self.heap_size, ..RuntimeConfig::default() }
    }
}

/// Where a synchronization event keeps its data: in the event itself when
/// it comes from the interpreter, on the runtime stack when it comes from
/// compiled code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Synchro {
    Call(Option<(FunIdx, Vec<Value>)>),
    Return(Option<Value>),
    Deopt(Option<(FunIdx, Label, RegMap)>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JitState {
    Monitor(Synchro),
    Optimization { callee: FunIdx, args: Vec<Value> },
    Dispatch { callee: FunIdx, args: Vec<Value> },
    IrExecution(Snapshot),
    /// Running the unit at `key`. `progress` is only used when stepping
    /// through compiled code one instruction at a time.
    NativeExecution { key: CodeKey, progress: Option<RtlState> },
    Final(Value),
}

impl JitState {
    pub fn name(&self) -> &'static str {
        match self {
            JitState::Monitor(_) => "Monitor",
            JitState::Optimization { .. } => "Optimization",
            JitState::Dispatch { .. } => "Dispatch",
            JitState::IrExecution(_) => "IrExecution",
            JitState::NativeExecution { .. } => "NativeExecution",
            JitState::Final(_) => "Final",
        }
    }
}

impl fmt::Display for JitState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JitState::Monitor(Synchro::Call(Some((g, args)))) => write!(f, "Monitor call {g} {args:?}"),
            JitState::Monitor(Synchro::Call(None)) => write!(f, "Monitor call on-stack"),
            JitState::Monitor(Synchro::Return(Some(v))) => write!(f, "Monitor return {v}"),
            JitState::Monitor(Synchro::Return(None)) => write!(f, "Monitor return on-stack"),
            JitState::Monitor(Synchro::Deopt(Some((g, l, _)))) => write!(f, "Monitor deopt {g}.{l}"),
            JitState::Monitor(Synchro::Deopt(None)) => write!(f, "Monitor deopt on-stack"),
            JitState::Optimization { callee, .. } => write!(f, "Optimization {callee}"),
            JitState::Dispatch { callee, args } => write!(f, "Dispatch {callee} {args:?}"),
            JitState::IrExecution(s) => write!(f, "IrExecution {}.{} {}", s.fun, s.label, s.tag),
            JitState::NativeExecution { key, progress: None } => write!(f, "NativeExecution {key}"),
            JitState::NativeExecution { key, progress: Some(s) } => write!(f, "NativeExecution {key} @{}", s.pc),
            JitState::Final(v) => write!(f, "Final {v}"),
        }
    }
}

/// A deoptimization handled by the monitor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeoptRecord {
    /// The payload came from compiled code rather than the interpreter.
    pub from_compiled: bool,
    pub target: FunIdx,
    pub label: Label,
    pub regs: RegMap,
}

/// Result of a single transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Progress {
    Running,
    Done(Value),
    StepCap,
}

/// Pops a deoptimization payload: target index, target label, entry count,
/// then `(value, register)` pairs.
pub fn synth_frame<R: Runtime + ?Sized>(p: &Program, rt: &mut R) -> Result<(FunIdx, Label, RegMap), Fault> {
    let mut pop = || rt.pop().map_err(|_| Fault::CorruptDeoptPayload);
    let fun = p.idx_from_value(pop()?).ok_or(Fault::CorruptDeoptPayload)?;
    let label = u32::try_from(pop()?).ok().filter(|&l| l > 0).ok_or(Fault::CorruptDeoptPayload)?;
    let count = u32::try_from(pop()?).map_err(|_| Fault::CorruptDeoptPayload)?;
    let mut regs = RegMap::new();
    for _ in 0..count {
        let v = pop()?;
        let r = u32::try_from(pop()?).ok().filter(|&r| r > 0).ok_or(Fault::CorruptDeoptPayload)?;
        regs.insert(Reg(r), v);
    }
    Ok((fun, Label(label), regs))
}

/// A JIT run in progress.
pub struct Jit<'p, R> {
    program: &'p Program,
    cfg: Config,
    pub state: JitState,
    pub rt: R,
    pub profiler: Profiler,
    steps: u64,
    native_steps: u64,
    pub compiled: Vec<FunIdx>,
    pub cancelled: Vec<(FunIdx, String)>,
    pub deopts: Vec<DeoptRecord>,
    pub events: Vec<String>,
}

impl<'p, R: Runtime> Jit<'p, R> {
    /// Starts at the call of `main` with no arguments.
    pub fn new(program: &'p Program, cfg: Config, rt: R) -> Result<Self, Fault> {
        let main = program.idx_of(Program::ENTRY).ok_or_else(|| Fault::UnknownFunction(Program::ENTRY.into()))?;
        Ok(Jit {
            program,
            cfg,
            state: JitState::Monitor(Synchro::Call(Some((main, vec![])))),
            rt,
            profiler: Profiler::new(cfg.hotness.heuristic()),
            steps: 0,
            native_steps: 0,
            compiled: vec![],
            cancelled: vec![],
            deopts: vec![],
            events: vec![],
        })
    }

    /// Replaces the compilation heuristic.
    pub fn with_heuristic(mut self, h: Box<dyn Heuristic>) -> Self {
        self.profiler = Profiler::new(h);
        self
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn native_steps(&self) -> u64 {
        self.native_steps
    }

    /// Performs one transition.
    pub fn step(&mut self) -> Result<Progress, Fault> {
        if let JitState::Final(v) = self.state {
            return Ok(Progress::Done(v));
        }
        if self.steps >= self.cfg.step_cap {
            return Ok(Progress::StepCap);
        }
        self.steps += 1;
        let state = std::mem::replace(&mut self.state, JitState::Final(0));
        let before = self.cfg.log.then(|| state.to_string());
        let next = match self.transition(state)? {
            Some(s) => s,
            None => return Ok(Progress::StepCap),
        };
        if let Some(before) = before {
            self.events.push(format!("{:>8} {} -> {}", self.steps, before, next));
        }
        self.state = next;
        Ok(match self.state {
            JitState::Final(v) => Progress::Done(v),
            _ => Progress::Running,
        })
    }

    /// Runs to completion, an error, or a cap.
    pub fn run(&mut self) -> Behavior {
        loop {
            let status = match self.step() {
                Ok(Progress::Running) => continue,
                Ok(Progress::Done(v)) => Status::Terminated(v),
                Ok(Progress::StepCap) => Status::StepCapReached,
                Err(e) => Status::Errored(e.to_string()),
            };
            return Behavior { trace: self.rt.trace().to_vec(), status };
        }
    }

    /// The next state, or `None` when compiled code exhausted its budget.
    fn transition(&mut self, state: JitState) -> Result<Option<JitState>, Fault> {
        let p = self.program;
        Ok(Some(match state {
            JitState::Monitor(Synchro::Call(call)) => {
                let (callee, args) = match call {
                    Some(c) => c,
                    None => self.pop_call()?,
                };
                self.profiler.observe(callee);
                if self.profiler.suggest(callee, self.rt.check_installed(callee)) {
                    JitState::Optimization { callee, args }
                } else {
                    JitState::Dispatch { callee, args }
                }
            }
            JitState::Optimization { callee, args } => {
                let opts = CompileOptions {
                    tier: self.cfg.tier,
                    inject_failure: self.cfg.inject_compile_failure,
                    planted_bug: self.cfg.planted_bug,
                };
                match compile_function(p, callee, &mut self.rt, &opts) {
                    Ok(()) => self.compiled.push(callee),
                    Err(c) => {
                        self.profiler.forbid(callee);
                        self.cancelled.push((callee, c.0));
                    }
                }
                JitState::Dispatch { callee, args }
            }
            JitState::Dispatch { callee, args } => {
                let f = p.try_get(callee).ok_or(Fault::UnknownFunIdx(callee.as_value()))?;
                if f.params.len() != args.len() {
                    return Err(Fault::ArityMismatch { callee: f.name.clone(), expected: f.params.len(), got: args.len() });
                }
                if self.rt.check_installed(callee) {
                    for a in args {
                        self.rt.push(a)?;
                    }
                    JitState::NativeExecution { key: CodeKey::entry(callee), progress: None }
                } else {
                    JitState::IrExecution(Snapshot {
                        fun: callee,
                        tag: f.current_tag(),
                        label: f.current_version().entry,
                        regs: f.params.iter().copied().zip(args).collect(),
                    })
                }
            }
            JitState::IrExecution(at) => match interp_slice(p, at, self.cfg.fuel, &mut self.rt)? {
                InterpOutcome::OutOfFuel(s) => JitState::IrExecution(s),
                InterpOutcome::SyncCall { callee, args } => JitState::Monitor(Synchro::Call(Some((callee, args)))),
                InterpOutcome::SyncReturn(v) => JitState::Monitor(Synchro::Return(Some(v))),
                InterpOutcome::SyncDeopt { target, label, regs } => {
                    JitState::Monitor(Synchro::Deopt(Some((target, label, regs))))
                }
            },
            JitState::NativeExecution { key, progress } => {
                let unit = self.rt.load_code(key)?;
                let status = if self.cfg.step_trace {
                    match self.step_unit(&unit, progress)? {
                        Ok(status) => status,
                        Err(Some(s)) => return Ok(Some(JitState::NativeExecution { key, progress: Some(s) })),
                        Err(None) => return Ok(None),
                    }
                } else {
                    match self.run_unit(&unit)? {
                        Some(status) => status,
                        None => return Ok(None),
                    }
                };
                match status {
                    RETCALL => JitState::Monitor(Synchro::Call(None)),
                    RETRET => JitState::Monitor(Synchro::Return(None)),
                    RETDEOPT => JitState::Monitor(Synchro::Deopt(None)),
                    other => return Err(Fault::BadStatus(other)),
                }
            }
            JitState::Monitor(Synchro::Return(ret)) => {
                let v = match ret {
                    Some(v) => v,
                    None => self.rt.pop()?,
                };
                match self.rt.open_sf()? {
                    OpenedFrame::Empty => JitState::Final(v),
                    OpenedFrame::Ir(f) => {
                        let mut regs = f.regs;
                        regs.insert(f.retreg, v);
                        JitState::IrExecution(Snapshot { fun: f.fun, tag: f.tag, label: f.resume, regs })
                    }
                    OpenedFrame::Native(nf) => {
                        self.rt.push(v)?;
                        JitState::NativeExecution { key: CodeKey::cont(nf.fun, nf.cont_label), progress: None }
                    }
                }
            }
            JitState::Monitor(Synchro::Deopt(payload)) => {
                let from_compiled = payload.is_none();
                let (target, label, regs) = match payload {
                    Some(d) => d,
                    None => synth_frame(p, &mut self.rt)?,
                };
                self.deopts.push(DeoptRecord { from_compiled, target, label, regs: regs.clone() });
                JitState::IrExecution(Snapshot { fun: target, tag: VersionTag::Base, label, regs })
            }
            JitState::Final(v) => JitState::Final(v),
        }))
    }

    /// Normalizes a call request left on the stack: callee index, argument
    /// count, then the arguments in reverse.
    fn pop_call(&mut self) -> Result<(FunIdx, Vec<Value>), Fault> {
        let raw = self.rt.pop()?;
        let callee = self.program.idx_from_value(raw).ok_or(Fault::UnknownFunIdx(raw))?;
        let count = self.rt.pop()?;
        let count = usize::try_from(count)
            .ok()
            .filter(|&n| n <= self.rt.ints_above_boundary())
            .ok_or(Fault::CorruptStack)?;
        let mut args = vec![0; count];
        for slot in args.iter_mut().rev() {
            *slot = self.rt.pop()?;
        }
        Ok((callee, args))
    }

    fn budget(&self) -> u64 {
        self.cfg.native_budget.saturating_sub(self.native_steps)
    }

    /// Runs a unit to its status. `None` when the budget ran out.
    fn run_unit(&mut self, unit: &CompiledUnit) -> Result<Option<Value>, Fault> {
        let budget = self.budget();
        let (end, used) = match &unit.native {
            Some(h) => native_run(h, &mut self.rt, budget)?,
            None => rtl_run(&unit.rtl, &mut self.rt, budget)?,
        };
        self.native_steps += used;
        Ok(match end {
            RunEnd::Final(code) => Some(code),
            RunEnd::StepCap => None,
        })
    }

    /// Executes one RTL instruction. `Ok(status)` when the unit finished,
    /// `Err(Some(state))` to continue, `Err(None)` when the budget ran out.
    #[allow(clippy::type_complexity)]
    fn step_unit(
        &mut self,
        unit: &Arc<CompiledUnit>,
        progress: Option<RtlState>,
    ) -> Result<Result<Value, Option<RtlState>>, Fault> {
        if self.budget() == 0 {
            return Ok(Err(None));
        }
        let mut s = progress.unwrap_or_else(|| rtl_start(&unit.rtl));
        self.native_steps += 1;
        Ok(match rtl_step(&unit.rtl, &mut s, &mut self.rt)? {
            Step::Final(code) => Ok(code),
            Step::Running => Err(Some(s)),
        })
    }
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub behavior: Behavior,
    pub compiled: Vec<FunIdx>,
    pub cancelled: Vec<(FunIdx, String)>,
    pub deopts: Vec<DeoptRecord>,
    pub events: Vec<String>,
    /// Text of every installed unit, when requested.
    pub units: Vec<String>,
    pub steps: u64,
    pub native_steps: u64,
}

fn report<R: Runtime>(p: &Program, cfg: Config, rt: R, heuristic: Option<Box<dyn Heuristic>>, dump: bool) -> RunReport {
    let mut jit = match Jit::new(p, cfg, rt) {
        Ok(j) => j,
        Err(e) => {
            return RunReport {
                behavior: Behavior { trace: vec![], status: Status::Errored(e.to_string()) },
                compiled: vec![],
                cancelled: vec![],
                deopts: vec![],
                events: vec![],
                units: vec![],
                steps: 0,
                native_steps: 0,
            }
        }
    };
    if let Some(h) = heuristic {
        jit = jit.with_heuristic(h);
    }
    let behavior = jit.run();
    let units = if dump { installed_units(p, &jit.compiled, &mut jit.rt) } else { vec![] };
    RunReport {
        behavior,
        compiled: jit.compiled,
        cancelled: jit.cancelled,
        deopts: jit.deopts,
        events: jit.events,
        units,
        steps: jit.steps,
        native_steps: jit.native_steps,
    }
}

fn installed_units<R: Runtime>(p: &Program, funs: &[FunIdx], rt: &mut R) -> Vec<String> {
    let mut out = vec![];
    for &f in funs {
        let mut keys = vec![CodeKey::entry(f)];
        for (l, i) in &p.get(f).current_version().code {
            if matches!(i, Instr::Call { .. }) {
                keys.push(CodeKey::cont(f, *l));
            }
        }
        out.extend(keys.into_iter().filter_map(|k| rt.load_code(k).ok()).map(|u| u.rtl.to_string()));
    }
    out
}

/// Runs `p` under the JIT with a custom heuristic and reports everything.
pub fn jit_run_with(p: &Program, cfg: Config, heuristic: Option<Box<dyn Heuristic>>, dump_units: bool) -> RunReport {
    let rc = cfg.runtime_config();
    match cfg.stack_impl {
        StackImpl::Structured => report(p, cfg, StructuredRuntime::new(rc), heuristic, dump_units),
        StackImpl::Flat => report(p, cfg, FlatRuntime::new(rc), heuristic, dump_units),
    }
}

/// Runs `p` under the JIT.
pub fn jit_run(p: &Program, cfg: Config) -> Behavior {
    jit_run_with(p, cfg, None, false).behavior
}
