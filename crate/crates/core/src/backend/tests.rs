use std::collections::HashMap;

use super::*;
use crate::coreir::{parse_program, Label};
use crate::primitives::{CodeKey, FlatRuntime, Runtime, RuntimeConfig, StructuredRuntime};
use crate::rtlvm::rtl_run;

/// Fun1 calling Fun7, with stubs in between so that Fun7 gets index 7.
fn call_pair() -> Program {
    let mut src = String::from(
        "Function Fun1(r1):
           l1: r2 <- r1 + 4 l2
           l2: r3 <- Call Fun7(r2) l3
           l3: r3 <- r1 + r3 l4
           l4: Return r3\n",
    );
    for i in 2..7 {
        src.push_str(&format!("Function Stub{i}(): l1: r1 <- 0 l2 l2: Return r1\n"));
    }
    src.push_str("Function Fun7(r1): l1: Return r1\n");
    parse_program(&src).unwrap()
}

/// Renders a unit with registers renamed in order of first appearance, so
/// two listings compare modulo register naming.
fn normalized(u: &RtlUnit) -> Vec<String> {
    let mut names: HashMap<VReg, usize> = HashMap::new();
    let mut name = |r: VReg| {
        let n = names.len();
        format!("v{}", names.entry(r).or_insert(n))
    };
    u.code()
        .iter()
        .map(|i| match *i {
            RtlInstr::Op { dst, expr, .. } => {
                let expr = expr.map_regs(&mut name);
                format!("{} = {expr}", name(dst))
            }
            RtlInstr::CallPrim { dst, prim, .. } => {
                let call = match prim {
                    PrimOp::Pop => "Pop()".to_string(),
                    PrimOp::Push(Operand::Imm(v)) => format!("Push({v})"),
                    PrimOp::Push(Operand::Reg(r)) => format!("Push({})", name(r)),
                    other => other.to_string(),
                };
                match dst {
                    Some(d) => format!("{} = {call}", name(d)),
                    None => call,
                }
            }
            RtlInstr::ReturnStatus(c) => format!("return {}", status_name(c).unwrap()),
            other => format!("{other:?}"),
        })
        .collect()
}

#[test]
fn fun1_compiles_to_the_two_units_of_the_example() {
    let p = call_pair();
    let segs = compile_segments(&p, FunIdx(1), None).unwrap();
    assert_eq!(segs.len(), 2);
    // Transcribed from the worked example, with Close(1, 2) spelled out as
    // the two pushes it stands for.
    let entry = [
        "v0 = Pop()",
        "v1 = v0 + 4",
        "Push(v0)",
        "Push(1)",
        "Push(2)",
        "Push(v1)",
        "Push(1)",
        "Push(7)",
        "return RETCALL",
    ];
    let cont = ["v0 = Pop()", "v1 = Pop()", "v0 = v1 + v0", "Push(v0)", "return RETRET"];
    assert_eq!(normalized(&segs[0].rtl), entry);
    assert_eq!(normalized(&segs[1].rtl), cont);
    assert_eq!(segs[1].rtl.key(), CodeKey::cont(FunIdx(1), Label(2)));
}

#[test]
fn call_free_function_is_one_unit_with_one_exit() {
    let p = parse_program("Function main(): l1: r1 <- 3 l2 l2: Print r1 l3 l3: r2 <- 0 l4 l4: Return r2").unwrap();
    let segs = compile_segments(&p, FunIdx(1), None).unwrap();
    assert_eq!(segs.len(), 1);
    let code = segs[0].rtl.code();
    let rets: Vec<_> = code.iter().filter(|i| matches!(i, RtlInstr::ReturnStatus(_))).collect();
    assert_eq!(rets, [&RtlInstr::ReturnStatus(RETRET)]);
    assert!(!code.iter().any(|i| matches!(i, RtlInstr::CallPrim { prim: PrimOp::Pop, .. })));
}

#[test]
fn compile_installs_every_segment() {
    let p = call_pair();
    let mut rt = FlatRuntime::new(RuntimeConfig::default());
    assert!(!rt.check_installed(FunIdx(1)));
    compile_function(&p, FunIdx(1), &mut rt, &CompileOptions::default()).unwrap();
    assert!(rt.check_installed(FunIdx(1)));
    assert!(rt.load_code(CodeKey::cont(FunIdx(1), Label(2))).is_ok());
    assert_eq!(
        compile_function(&p, FunIdx(1), &mut rt, &CompileOptions::default()),
        Err(Cancelled("already installed".into()))
    );
}

#[test]
fn cancelled_compilation_leaves_the_repository_alone() {
    let p = call_pair();
    let mut rt = StructuredRuntime::new(RuntimeConfig::default());
    let opts = CompileOptions { inject_failure: true, ..CompileOptions::default() };
    assert!(compile_function(&p, FunIdx(1), &mut rt, &opts).is_err());
    assert!(!rt.check_installed(FunIdx(1)));
    assert!(rt.load_code(CodeKey::cont(FunIdx(1), Label(2))).is_err());
}

#[test]
fn possibly_unbound_reads_are_not_compiled() {
    let p = parse_program("Function main(): l1: Print r4 l2 l2: Return r4").unwrap();
    let mut rt = StructuredRuntime::new(RuntimeConfig::default());
    let err = compile_function(&p, FunIdx(1), &mut rt, &CompileOptions::default()).unwrap_err();
    assert!(err.0.contains("r4"), "{err:?}");
    assert!(!rt.check_installed(FunIdx(1)));
}

#[test]
fn optimized_version_is_compiled_with_its_deopt_exit() {
    let p = parse_program(
        "Function F(r1, r2):
           l1: Return r1
           l2: r3 <- r1 + r2 l3
           l3: Return r3
         version
           l1: Assume r1 F.l2 [r1 <- 5, r2 <- r2 + 0] l4
           l4: Return r1",
    )
    .unwrap();
    let segs = compile_segments(&p, FunIdx(1), None).unwrap();
    // Arguments (0, 7): the guard fails and the payload describes F.l2 with
    // r1 = 5 and r2 = 7.
    let mut rt = StructuredRuntime::new(RuntimeConfig::default());
    rt.push(0).unwrap();
    rt.push(7).unwrap();
    let (end, _) = rtl_run(&segs[0].rtl, &mut rt, 100).unwrap();
    assert_eq!(end, RunEnd::Final(RETDEOPT));
    let mut popped = vec![];
    while let Ok(v) = rt.pop() {
        popped.push(v);
    }
    // Top first: target, label, count, then (value, register) pairs in
    // reverse entry order.
    assert_eq!(popped, vec![1, 2, 2, 7, 2, 5, 1]);
}

/// Values pushed by a call sequence are exactly consumed by the monitor's
/// pops (callee, count, arguments) and the continuation prologue.
#[test]
fn call_convention_balances_the_stack() {
    let p = call_pair();
    let segs = compile_segments(&p, FunIdx(1), None).unwrap();
    let mut rt = FlatRuntime::new(RuntimeConfig::default());
    rt.push(10).unwrap();
    let depth = rt.ints_above_boundary() - 1;
    rtl_run(&segs[0].rtl, &mut rt, 100).unwrap();
    // Monitor side of the call.
    let callee = rt.pop().unwrap();
    let count = rt.pop().unwrap();
    let args: Vec<_> = (0..count).map(|_| rt.pop().unwrap()).collect();
    assert_eq!((callee, args), (7, vec![14]));
    // Fun7 returns its argument; the monitor opens the native frame and
    // hands the value to the continuation.
    assert!(matches!(rt.open_sf().unwrap(), crate::primitives::OpenedFrame::Native(_)));
    rt.push(14).unwrap();
    rtl_run(&segs[1].rtl, &mut rt, 100).unwrap();
    assert_eq!(rt.pop(), Ok(24));
    assert_eq!(rt.ints_above_boundary(), depth);
}

#[test]
fn dump_lists_segments_and_units() {
    let p = call_pair();
    let text = dump_function(&p, "Fun1").unwrap();
    assert!(text.contains("segment $1 root l1"));
    assert!(text.contains("segment $1.2 root l3"));
    assert!(text.contains("\"Push\"(7)"));
    assert!(dump_function(&p, "Nope").is_err());
    let single = dump_function(&p, "Fun7").unwrap();
    assert_eq!(single.matches("# rtl").count(), 1);
}
