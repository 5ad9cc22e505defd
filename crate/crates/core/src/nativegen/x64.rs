//! x86-64 template emitter for flat RTL.
//!
//! Generated functions follow the System V convention: `fn(ctx) -> i64`.
//! `rbx` holds the context pointer for the whole body; every virtual
//! register lives in an 8-byte slot at `[rsp + 8 * n]`; `rax`, `rcx`,
//! `rdx`, `rsi` and `rdi` are scratch. Before each RTL instruction the fuel
//! word in the context is decremented, and the function bails out once it
//! underflows, so diverging code stays bounded.

use std::mem::offset_of;

use super::{NativeCtx, EXIT_FAULT, EXIT_FUEL, EXIT_MOD_ZERO, EXIT_OK};
use crate::backend::{Operand, PrimOp, RtlInstr, RtlUnit, VReg};
use crate::coreir::{Expr, Value};

const RAX: u8 = 0;
const RCX: u8 = 1;
const RDX: u8 = 2;
const RSI: u8 = 6;

/// Index of each callable primitive in the context's table.
pub(super) const PRIM_POP: usize = 0;
pub(super) const PRIM_PUSH: usize = 1;
pub(super) const PRIM_HEAP_GET: usize = 2;
pub(super) const PRIM_HEAP_SET: usize = 3;
pub(super) const PRIM_PRINT: usize = 4;

#[derive(Clone, Copy)]
enum Target {
    Instr(usize),
    Exit(u64),
    Epilogue,
}

struct Asm {
    buf: Vec<u8>,
    fixups: Vec<(usize, Target)>,
}

fn ctx_off(field: usize) -> i32 {
    field as i32
}

impl Asm {
    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    fn d32(&mut self, d: i32) {
        self.buf.extend_from_slice(&d.to_le_bytes());
    }

    /// `op reg, [rsp + slot]` style operand: ModRM with SIB base rsp.
    fn slot(&mut self, opcode: &[u8], reg: u8, v: VReg) {
        self.buf.push(0x48);
        self.bytes(opcode);
        self.buf.push(0x84 | (reg << 3));
        self.buf.push(0x24);
        self.d32(8 * v.0 as i32);
    }

    /// `op reg, [rbx + disp]`.
    fn ctx(&mut self, opcode: &[u8], reg: u8, disp: i32) {
        self.buf.push(0x48);
        self.bytes(opcode);
        self.buf.push(0x83 | (reg << 3));
        self.d32(disp);
    }

    fn load(&mut self, reg: u8, v: VReg) {
        self.slot(&[0x8B], reg, v);
    }

    fn store_rax(&mut self, v: VReg) {
        self.slot(&[0x89], RAX, v);
    }

    fn movabs(&mut self, reg: u8, imm: Value) {
        self.bytes(&[0x48, 0xB8 + reg]);
        self.bytes(&imm.to_le_bytes());
    }

    fn operand(&mut self, reg: u8, o: Operand) {
        match o {
            Operand::Reg(v) => self.load(reg, v),
            Operand::Imm(i) => self.movabs(reg, i),
        }
    }

    fn jump(&mut self, opcode: &[u8], t: Target) {
        self.bytes(opcode);
        self.fixups.push((self.buf.len(), t));
        self.d32(0);
    }

    fn jmp(&mut self, t: Target) {
        self.jump(&[0xE9], t);
    }

    fn exit(&mut self, code: u64) {
        // mov qword [rbx + exit], imm32
        self.ctx(&[0xC7], 0, ctx_off(offset_of!(NativeCtx, exit)));
        self.d32(code as i32);
        self.jmp(Target::Epilogue);
    }

    fn expr(&mut self, e: Expr<VReg>) {
        match e {
            Expr::Add(a, b) => {
                self.load(RAX, a);
                self.slot(&[0x03], RAX, b);
            }
            Expr::Sub(a, b) => {
                self.load(RAX, a);
                self.slot(&[0x2B], RAX, b);
            }
            Expr::Mul(a, b) => {
                self.load(RAX, a);
                self.slot(&[0x0F, 0xAF], RAX, b);
            }
            Expr::Eq(a, b) | Expr::Lt(a, b) => {
                self.load(RAX, a);
                self.slot(&[0x3B], RAX, b);
                let setcc = if matches!(e, Expr::Eq(..)) { 0x94 } else { 0x9C };
                self.bytes(&[0x0F, setcc, 0xC0, 0x0F, 0xB6, 0xC0]);
            }
            Expr::Mod(a, b) => {
                self.load(RCX, b);
                self.bytes(&[0x48, 0x85, 0xC9]); // test rcx, rcx
                self.jump(&[0x0F, 0x84], Target::Exit(EXIT_MOD_ZERO));
                // x % -1 is 0, and idiv would trap on MIN % -1.
                self.bytes(&[0x48, 0x83, 0xF9, 0xFF]); // cmp rcx, -1
                self.bytes(&[0x75, 0x04]); // jne +4
                self.bytes(&[0x31, 0xC0, 0xEB, 16]); // xor eax, eax; jmp +16
                self.load(RAX, a);
                self.bytes(&[0x48, 0x99, 0x48, 0xF7, 0xF9, 0x48, 0x89, 0xD0]); // cqo; idiv rcx; mov rax, rdx
            }
            Expr::Neg(a) => {
                self.load(RAX, a);
                self.bytes(&[0x48, 0xF7, 0xD8]);
            }
            Expr::Const(v) => self.movabs(RAX, v),
            Expr::IsZero(a) => {
                self.bytes(&[0x31, 0xC0]); // xor eax, eax
                self.slot(&[0x83], 7, a); // cmp qword [slot], imm8
                self.buf.push(0);
                self.bytes(&[0x0F, 0x94, 0xC0]);
            }
            Expr::AddImm(a, v) => {
                self.load(RAX, a);
                self.movabs(RCX, v);
                self.bytes(&[0x48, 0x01, 0xC8]);
            }
            Expr::MulImm(a, v) => {
                self.load(RAX, a);
                self.movabs(RCX, v);
                self.bytes(&[0x48, 0x0F, 0xAF, 0xC1]);
            }
        }
    }

    fn call_prim(&mut self, prim: PrimOp) {
        let index = match prim {
            PrimOp::Pop => PRIM_POP,
            PrimOp::Push(o) => {
                self.operand(RSI, o);
                PRIM_PUSH
            }
            PrimOp::HeapGet(a) => {
                self.load(RSI, a);
                PRIM_HEAP_GET
            }
            PrimOp::HeapSet(a, v) => {
                self.load(RSI, a);
                self.load(RDX, v);
                PRIM_HEAP_SET
            }
            PrimOp::Print(r) => {
                self.load(RSI, r);
                PRIM_PRINT
            }
        };
        self.bytes(&[0x48, 0x89, 0xDF]); // mov rdi, rbx
        let disp = ctx_off(offset_of!(NativeCtx, prims)) + 8 * index as i32;
        self.bytes(&[0xFF, 0x93]); // call qword [rbx + disp]
        self.d32(disp);
        // cmp qword [rbx + failed], 0; jne fault
        self.ctx(&[0x83], 7, ctx_off(offset_of!(NativeCtx, failed)));
        self.buf.push(0);
        self.jump(&[0x0F, 0x85], Target::Exit(EXIT_FAULT));
    }
}

/// Emits machine code for `u`.
pub fn emit(u: &RtlUnit) -> Vec<u8> {
    let mut a = Asm { buf: Vec::with_capacity(64 * u.code().len()), fixups: Vec::new() };
    let frame = (8 * u.nregs() as i32 + 15) & !15;

    // push rbp; mov rbp, rsp; push rbx; push r12; mov rbx, rdi; sub rsp, frame
    a.bytes(&[0x55, 0x48, 0x89, 0xE5, 0x53, 0x41, 0x54, 0x48, 0x89, 0xFB]);
    a.bytes(&[0x48, 0x81, 0xEC]);
    a.d32(frame);
    for r in 0..u.nregs() {
        a.slot(&[0xC7], 0, VReg(r)); // mov qword [slot], 0
        a.d32(0);
    }
    a.jmp(Target::Instr(u.entry()));

    let mut starts = Vec::with_capacity(u.code().len());
    let fuel = ctx_off(offset_of!(NativeCtx, fuel));
    for (i, instr) in u.code().iter().enumerate() {
        starts.push(a.buf.len());
        // sub qword [rbx + fuel], 1; jb out_of_fuel
        a.ctx(&[0x83], 5, fuel);
        a.buf.push(1);
        a.jump(&[0x0F, 0x82], Target::Exit(EXIT_FUEL));
        let next = match *instr {
            RtlInstr::Op { dst, expr, next } => {
                a.expr(expr);
                a.store_rax(dst);
                Some(next)
            }
            RtlInstr::Goto(next) => Some(next),
            RtlInstr::Branch { cond, ifso, ifnot } => {
                a.slot(&[0x83], 7, cond);
                a.buf.push(0);
                a.jump(&[0x0F, 0x85], Target::Instr(ifso));
                Some(ifnot)
            }
            RtlInstr::CallPrim { dst, prim, next } => {
                a.call_prim(prim);
                if let Some(d) = dst {
                    a.store_rax(d);
                }
                Some(next)
            }
            RtlInstr::ReturnStatus(code) => {
                a.movabs(RAX, code);
                a.exit(EXIT_OK);
                None
            }
        };
        if let Some(n) = next.filter(|&n| n != i + 1) {
            a.jmp(Target::Instr(n));
        }
    }
    // Falling off the last instruction cannot happen in a valid unit, but
    // keep the code well-defined anyway.
    a.exit(EXIT_FAULT);

    let mut exits = Vec::new();
    for code in [EXIT_FUEL, EXIT_FAULT, EXIT_MOD_ZERO] {
        exits.push((code, a.buf.len()));
        a.exit(code);
    }
    let epilogue = a.buf.len();
    // lea rsp, [rbp - 16]; pop r12; pop rbx; pop rbp; ret
    a.bytes(&[0x48, 0x8D, 0x65, 0xF0, 0x41, 0x5C, 0x5B, 0x5D, 0xC3]);

    for (at, t) in std::mem::take(&mut a.fixups) {
        let dest = match t {
            Target::Instr(i) => starts[i],
            Target::Exit(code) => exits.iter().find(|(c, _)| *c == code).expect("every exit has a stub").1,
            Target::Epilogue => epilogue,
        };
        let rel = dest as i64 - (at as i64 + 4);
        a.buf[at..at + 4].copy_from_slice(&(rel as i32).to_le_bytes());
    }
    a.buf
}
