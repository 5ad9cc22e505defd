//! Reference semantics for CoreIR.
//!
//! A small-step interpreter with its own call stack and heap. It shares only
//! the data model and expression evaluation with the engine, and serves as
//! the oracle every differential test compares against.

use crate::behavior::{Behavior, Status};
use crate::coreir::{eval_expr, FunIdx, Instr, Label, Program, Reg, RegMap, Value, VersionTag};
use crate::fault::Fault;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefFrame {
    pub fun: FunIdx,
    pub tag: VersionTag,
    pub label: Label,
    pub regs: RegMap,
    /// Register of this frame that receives the value of the pending call.
    pub ret_into: Option<Reg>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefState {
    pub frames: Vec<RefFrame>,
    pub heap: Vec<Value>,
    pub trace: Vec<Value>,
    pub steps: u64,
    pub result: Option<Value>,
}

impl RefState {
    /// `main` at the entry of its current version, no registers, zeroed heap.
    pub fn initial(p: &Program, heap_size: usize) -> Result<Self, Fault> {
        let fun = p.idx_of(Program::ENTRY).ok_or_else(|| Fault::UnknownFunction(Program::ENTRY.into()))?;
        let f = p.get(fun);
        let frame = RefFrame {
            fun,
            tag: f.current_tag(),
            label: f.current_version().entry,
            regs: RegMap::new(),
            ret_into: None,
        };
        Ok(RefState { frames: vec![frame], heap: vec![0; heap_size], trace: Vec::new(), steps: 0, result: None })
    }

    pub fn is_final(&self) -> bool {
        self.result.is_some()
    }
}

fn read(regs: &RegMap, r: Reg) -> Result<Value, Fault> {
    regs.get(&r).copied().ok_or(Fault::UnboundRegister(r))
}

fn heap_index(heap: &[Value], addr: Value) -> Option<usize> {
    usize::try_from(addr).ok().filter(|&a| a < heap.len())
}

/// Executes one instruction of the top frame. Returns the printed value, if
/// the instruction was a `Print`.
pub fn ref_step(p: &Program, s: &mut RefState) -> Result<Option<Value>, Fault> {
    debug_assert!(!s.is_final());
    s.steps += 1;
    let top = s.frames.last_mut().expect("non-final state has a frame");
    let func = p.get(top.fun);
    let version = func.version(top.tag).expect("frame tag names an existing version");
    let instr = version
        .instr(top.label)
        .ok_or_else(|| Fault::UnknownLabel { fun: func.name.clone(), label: top.label })?;

    match instr {
        Instr::Nop { next } => top.label = *next,
        Instr::Assign { dst, expr, next } => {
            let v = eval_expr(&top.regs, expr)?;
            top.regs.insert(*dst, v);
            top.label = *next;
        }
        Instr::Cond { reg, ifso, ifnot } => {
            top.label = if read(&top.regs, *reg)? != 0 { *ifso } else { *ifnot };
        }
        Instr::Print { reg, next } => {
            let v = read(&top.regs, *reg)?;
            top.label = *next;
            s.trace.push(v);
            return Ok(Some(v));
        }
        Instr::Call { dst, callee, args, next } => {
            let vals = args.iter().map(|&r| read(&top.regs, r)).collect::<Result<Vec<_>, _>>()?;
            let idx = p.idx_of(callee).ok_or_else(|| Fault::UnknownFunction(callee.clone()))?;
            let g = p.get(idx);
            if g.params.len() != vals.len() {
                return Err(Fault::ArityMismatch { callee: callee.clone(), expected: g.params.len(), got: vals.len() });
            }
            top.label = *next;
            top.ret_into = Some(*dst);
            s.frames.push(RefFrame {
                fun: idx,
                tag: g.current_tag(),
                label: g.current_version().entry,
                regs: g.params.iter().copied().zip(vals).collect(),
                ret_into: None,
            });
        }
        Instr::Return { reg } => {
            let v = read(&top.regs, *reg)?;
            s.frames.pop();
            match s.frames.last_mut() {
                None => s.result = Some(v),
                Some(caller) => {
                    let dst = caller.ret_into.take().expect("caller awaits a value");
                    caller.regs.insert(dst, v);
                }
            }
        }
        Instr::MemGet { dst, addr, next } => {
            let a = read(&top.regs, *addr)?;
            let i = heap_index(&s.heap, a).ok_or(Fault::MemGetOutOfRange)?;
            top.regs.insert(*dst, s.heap[i]);
            top.label = *next;
        }
        Instr::MemSet { addr, src, next } => {
            let a = read(&top.regs, *addr)?;
            let v = read(&top.regs, *src)?;
            let i = heap_index(&s.heap, a).ok_or(Fault::MemSetOutOfRange)?;
            s.heap[i] = v;
            top.label = *next;
        }
        Instr::Assume { guard, target, target_label, varmap, next } => {
            if read(&top.regs, *guard)? != 0 {
                top.label = *next;
            } else {
                let mut regs = RegMap::new();
                for (r, e) in varmap {
                    regs.insert(*r, eval_expr(&top.regs, e)?);
                }
                let fun = p.idx_of(target).ok_or_else(|| Fault::UnknownFunction(target.clone()))?;
                *top = RefFrame { fun, tag: VersionTag::Base, label: *target_label, regs, ret_into: None };
            }
        }
    }
    Ok(None)
}

/// Runs `p` from `main` for at most `step_cap` instructions.
pub fn ref_run(p: &Program, heap_size: usize, step_cap: u64) -> Behavior {
    let mut s = match RefState::initial(p, heap_size) {
        Ok(s) => s,
        Err(e) => return Behavior { trace: vec![], status: Status::Errored(e.to_string()) },
    };
    while !s.is_final() {
        if s.steps >= step_cap {
            return Behavior { trace: s.trace, status: Status::StepCapReached };
        }
        if let Err(e) = ref_step(p, &mut s) {
            return Behavior { trace: s.trace, status: Status::Errored(e.to_string()) };
        }
    }
    Behavior { trace: s.trace, status: Status::Terminated(s.result.unwrap()) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coreir::parse_program;

    fn run(src: &str) -> Behavior {
        ref_run(&parse_program(src).unwrap(), 16, 10_000)
    }

    #[test]
    fn print_and_return() {
        let b = run("Function main(): l1: r1 <- 3 l2 l2: Print r1 l3 l3: Return r1");
        assert_eq!(b, Behavior { trace: vec![3], status: Status::Terminated(3) });
    }

    #[test]
    fn call_pair_with_stub() {
        // reg2 = 10 + 4 = 14; Fun7 returns 14; reg3 = 10 + 14 = 24.
        let b = run("
Function Fun1(r1):
  l1: r2 <- r1 + 4 l2
  l2: r3 <- Call Fun7(r2) l3
  l3: r3 <- r1 + r3 l4
  l4: Return r3
Function Fun7(r1):
  l1: Return r1
Function main():
  l1: r1 <- 10 l2
  l2: r2 <- Call Fun1(r1) l3
  l3: Return r2");
        assert_eq!(b.status, Status::Terminated(24));
    }

    #[test]
    fn infinite_loop_hits_cap() {
        let b = ref_run(&parse_program("Function main(): l1: Nop l1").unwrap(), 16, 1000);
        assert_eq!(b, Behavior { trace: vec![], status: Status::StepCapReached });
    }

    const ASSUME: &str = "
Function F3(r1, r2):
  l1: r1 <- 0 l2
  l2: r3 <- r1 * r2 l3
  l3: Return r3
Function main():
  l1: r10 <- 0 l2
  l2: r11 <- 7 l3
  l3: Assume r10 F3.l2 [r1 <- 5, r2 <- r11 + 0] l4
  l4: Return r11
";

    #[test]
    fn failed_assume_synthesizes_target_frame() {
        let p = parse_program(ASSUME).unwrap();
        let mut s = RefState::initial(&p, 4).unwrap();
        for _ in 0..3 {
            ref_step(&p, &mut s).unwrap();
        }
        let f = s.frames.last().unwrap();
        assert_eq!(s.frames.len(), 1);
        assert_eq!(f.fun, p.idx_of("F3").unwrap());
        assert_eq!(f.tag, VersionTag::Base);
        assert_eq!(f.label, Label(2));
        assert_eq!(f.regs, [(Reg(1), 5), (Reg(2), 7)].into_iter().collect());
        assert_eq!(ref_run(&p, 4, 100).status, Status::Terminated(35));
    }

    #[test]
    fn passing_assume_falls_through() {
        let p = parse_program(&ASSUME.replace("l1: r10 <- 0 l2", "l1: r10 <- 1 l2")).unwrap();
        let mut s = RefState::initial(&p, 4).unwrap();
        for _ in 0..3 {
            ref_step(&p, &mut s).unwrap();
        }
        let f = s.frames.last().unwrap();
        assert_eq!(f.label, Label(4));
        assert_eq!(f.regs, [(Reg(10), 1), (Reg(11), 7)].into_iter().collect());
    }

    #[test]
    fn memget_out_of_range() {
        let b = ref_run(
            &parse_program("Function main(): l1: r1 <- 16 l2 l2: r2 <- MemGet r1 l3 l3: Return r2").unwrap(),
            16,
            100,
        );
        assert_eq!(b.status, Status::Errored("MemGet out of memory range".into()));
    }

    #[test]
    fn going_wrong_events() {
        let b = run("Function main(): l1: Return r4");
        assert_eq!(b.status, Status::Errored("unbound register r4".into()));
        let b = run("Function f(r1): l1: Return r1 Function main(): l1: r1 <- Call f() l2 l2: Return r1");
        assert_eq!(b.status, Status::Errored("arity mismatch calling f: expected 1, got 0".into()));
        let b = run("Function main(): l1: r1 <- 1 l2 l2: Print r1 l3 l3: r2 <- 0 l4 l4: r3 <- r1 % r2 l5 l5: Return r3");
        assert_eq!(b, Behavior { trace: vec![1], status: Status::Errored("modulo by zero".into()) });
        let b = run("Function main(): l1: r1 <- -1 l2 l2: r1 <- MemSet r1 l3 l3: Return r1");
        assert_eq!(b.status, Status::Errored("MemSet out of memory range".into()));
    }

    #[test]
    fn monotone_traces() {
        let p = parse_program(
            "Function main(): l1: r1 <- 0 l2 l2: Print r1 l3 l3: r1 <- r1 + 1 l2",
        )
        .unwrap();
        let mut prev = ref_run(&p, 1, 0).trace;
        for cap in 1..40 {
            let t = ref_run(&p, 1, cap).trace;
            assert!(t.starts_with(&prev));
            prev = t;
        }
        // One setup step, then a Print every second step up to step 39.
        assert_eq!(prev.len(), 19);
    }
}
