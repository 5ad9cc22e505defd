use super::*;
use crate::backend::{compile_segments, Operand, PrimOp, RtlInstr, VReg, RETRET};
use crate::coreir::{parse_program, Expr, FunIdx};
use crate::primitives::{CodeKey, FlatRuntime, PrimCall, Recorder, RuntimeConfig, StructuredRuntime};
use crate::rtlvm::rtl_run;

fn unit(code: Vec<RtlInstr>, nregs: u32) -> RtlUnit {
    RtlUnit::new(CodeKey::entry(FunIdx(1)), 0, code, nregs).unwrap()
}

fn run_native(u: &RtlUnit, rt: &mut dyn Runtime, fuel: u64) -> Result<(RunEnd, u64), Fault> {
    let h = install_native(&emit_unit(u).unwrap(), rt.instance()).unwrap();
    native_run(&h, rt, fuel)
}

#[test]
fn trivial_unit_returns_its_status() {
    let u = unit(vec![RtlInstr::ReturnStatus(RETRET)], 0);
    let mut rt = FlatRuntime::new(RuntimeConfig::default());
    assert_eq!(run_native(&u, &mut rt, 10), Ok((RunEnd::Final(0), 1)));
}

#[test]
fn fun1_continuation_calls_pop_pop_push() {
    let p = parse_program(
        "Function Fun1(r1):
           l1: r2 <- r1 + 4 l2
           l2: r3 <- Call Fun7(r2) l3
           l3: r3 <- r1 + r3 l4
           l4: Return r3
         Function Fun7(r1):
           l1: Return r1",
    )
    .unwrap();
    let segs = compile_segments(&p, FunIdx(1), None).unwrap();
    let mut rt = Recorder::new(StructuredRuntime::new(RuntimeConfig::default()));
    rt.push(10).unwrap();
    rt.push(14).unwrap();
    rt.log.clear();
    let (end, _) = run_native(&segs[1].rtl, &mut rt, 100).unwrap();
    assert_eq!(end, RunEnd::Final(RETRET));
    assert_eq!(rt.log, vec![PrimCall::Pop, PrimCall::Pop, PrimCall::Push(24)]);
}

#[test]
fn arithmetic_matches_the_vm() {
    let cases: Vec<(Value, Value)> =
        vec![(7, 3), (-7, 3), (7, -3), (i64::MIN, -1), (i64::MAX, 2), (0, 5), (i64::MIN, i64::MAX), (5, 5)];
    let exprs = |a: VReg, b: VReg| {
        vec![
            Expr::Add(a, b),
            Expr::Sub(a, b),
            Expr::Mul(a, b),
            Expr::Eq(a, b),
            Expr::Lt(a, b),
            Expr::Mod(a, b),
            Expr::Neg(a),
            Expr::Const(-12345678901234),
            Expr::IsZero(a),
            Expr::AddImm(a, i64::MAX),
            Expr::MulImm(a, -3),
        ]
    };
    for (x, y) in cases {
        for e in exprs(VReg(0), VReg(1)) {
            let code = vec![
                RtlInstr::Op { dst: VReg(0), expr: Expr::Const(x), next: 1 },
                RtlInstr::Op { dst: VReg(1), expr: Expr::Const(y), next: 2 },
                RtlInstr::Op { dst: VReg(2), expr: e, next: 3 },
                RtlInstr::CallPrim { dst: None, prim: PrimOp::Push(Operand::Reg(VReg(2))), next: 4 },
                RtlInstr::ReturnStatus(RETRET),
            ];
            let u = unit(code, 3);
            let mut a = StructuredRuntime::new(RuntimeConfig::default());
            let mut b = StructuredRuntime::new(RuntimeConfig::default());
            let vm = rtl_run(&u, &mut a, 100);
            let native = run_native(&u, &mut b, 100);
            assert_eq!(vm, native, "{e:?} on ({x}, {y})");
            assert_eq!(a.stack(), b.stack(), "{e:?} on ({x}, {y})");
        }
    }
}

#[test]
fn modulo_by_zero_goes_wrong() {
    let code = vec![
        RtlInstr::Op { dst: VReg(0), expr: Expr::Const(4), next: 1 },
        RtlInstr::Op { dst: VReg(2), expr: Expr::Mod(VReg(0), VReg(1)), next: 2 },
        RtlInstr::ReturnStatus(RETRET),
    ];
    let mut rt = FlatRuntime::new(RuntimeConfig::default());
    assert_eq!(run_native(&unit(code, 3), &mut rt, 100), Err(Fault::ModuloByZero));
}

#[test]
fn primitive_faults_propagate() {
    let code = vec![RtlInstr::CallPrim { dst: Some(VReg(0)), prim: PrimOp::Pop, next: 1 }, RtlInstr::ReturnStatus(0)];
    let mut rt = FlatRuntime::new(RuntimeConfig::default());
    assert_eq!(run_native(&unit(code, 1), &mut rt, 100), Err(Fault::PopEmpty));
    let code = vec![
        RtlInstr::Op { dst: VReg(0), expr: Expr::Const(1 << 40), next: 1 },
        RtlInstr::CallPrim { dst: Some(VReg(1)), prim: PrimOp::HeapGet(VReg(0)), next: 2 },
        RtlInstr::ReturnStatus(0),
    ];
    let e = run_native(&unit(code, 2), &mut rt, 100).unwrap_err();
    assert_eq!(e.to_string(), "MemGet out of memory range");
}

#[test]
fn fuel_bounds_diverging_code() {
    let u = unit(vec![RtlInstr::Goto(0)], 0);
    let mut rt = FlatRuntime::new(RuntimeConfig::default());
    assert_eq!(run_native(&u, &mut rt, 1000), Ok((RunEnd::StepCap, 1000)));
    assert_eq!(rtl_run(&u, &mut rt, 1000), Ok((RunEnd::StepCap, 1000)));
}

#[test]
fn code_from_another_runtime_is_refused() {
    let u = unit(vec![RtlInstr::ReturnStatus(0)], 0);
    let a = FlatRuntime::new(RuntimeConfig::default());
    let mut b = FlatRuntime::new(RuntimeConfig::default());
    let h = install_native(&emit_unit(&u).unwrap(), a.instance()).unwrap();
    assert_eq!(native_run(&h, &mut b, 10), Err(Fault::ForeignCode));
}

#[test]
fn units_agree_with_the_vm() {
    for seed in 0..40 {
        crate::fuzz::native_oracle_case(seed).unwrap();
    }
}
