//! Random well-formed programs and the differential harness.
//!
//! Generated programs always terminate: loops count a dedicated register
//! down from at most [`GenConfig::max_trip`], and a function only calls
//! functions declared after it. Optimized versions are copies of the base
//! version with `Assume` guards inserted; a failing guard resumes the base
//! version at the same label, usually with an identity register map and
//! sometimes with a perturbed one.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::backend::{compile_segments, compute_liveness, PlantedBug, RunEnd};
use crate::behavior::Behavior;
use crate::coreir::{Expr, FunIdx, Function, Instr, Label, Program, Reg, Value, Version};
use crate::monitor::{jit_run, Config, Hotness, StackImpl};
use crate::nativegen::{emit_unit, host_supported, install_native, native_run};
use crate::primitives::{Runtime, RuntimeConfig, StructuredRuntime, Tier};
use crate::refsem::ref_run;
use crate::rtlvm::rtl_run;

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    /// Upper bound on the number of functions, `main` included.
    pub max_functions: usize,
    /// Upper bound on statements per block.
    pub max_stmts: usize,
    /// Loop trip counts are drawn from `1..=max_trip`.
    pub max_trip: i64,
    /// Probability that a function gets an optimized version.
    pub assume_density: f64,
    /// Probability that a heap access uses an out-of-range address.
    pub oob_prob: f64,
    /// Probability that an expression reads a never-assigned register.
    pub unbound_prob: f64,
    /// Probability that a `%` uses a divisor that may be zero.
    pub raw_mod_prob: f64,
    pub heap_size: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_functions: 4,
            max_stmts: 6,
            max_trip: 4,
            assume_density: 0.5,
            oob_prob: 0.02,
            unbound_prob: 0.01,
            raw_mod_prob: 0.02,
            heap_size: 64,
        }
    }
}

const GENERAL: u32 = 8;
const MOD_TEMP: Reg = Reg(15);
const ADDR_TEMP: Reg = Reg(16);
const NEVER_ASSIGNED: Reg = Reg(17);
const COUNTER_BASE: u32 = 20;

#[derive(Debug, Clone)]
enum Stmt {
    Assign(Reg, Expr),
    Print(Reg),
    Call(Reg, usize, Vec<Reg>),
    MemGet(Reg, Value),
    MemSet(Value, Reg),
    If(Reg, Vec<Stmt>, Vec<Stmt>),
    Loop(Reg, i64, Vec<Stmt>),
}

struct Gen<'a, R> {
    rng: &'a mut R,
    cfg: &'a GenConfig,
    arity: &'a [usize],
    me: usize,
}

impl<R: Rng> Gen<'_, R> {
    fn value(&mut self) -> Value {
        match self.rng.random_range(0..20) {
            0 => *[i64::MAX, i64::MIN, -1, 1 << 40].choose(self.rng).unwrap(),
            _ => self.rng.random_range(-20..=20),
        }
    }

    fn reg(&mut self, defined: &BTreeSet<Reg>) -> Reg {
        if defined.is_empty() || self.rng.random_bool(self.cfg.unbound_prob) {
            return NEVER_ASSIGNED;
        }
        let v: Vec<Reg> = defined.iter().copied().collect();
        *v.choose(self.rng).unwrap()
    }

    fn fresh_dst(&mut self) -> Reg {
        Reg(self.rng.random_range(1..=GENERAL))
    }

    fn expr(&mut self, defined: &BTreeSet<Reg>) -> Expr {
        if defined.is_empty() {
            return Expr::Const(self.value());
        }
        let a = self.reg(defined);
        let b = self.reg(defined);
        match self.rng.random_range(0..11) {
            0 => Expr::Add(a, b),
            1 => Expr::Sub(a, b),
            2 => Expr::Mul(a, b),
            3 => Expr::Eq(a, b),
            4 => Expr::Lt(a, b),
            5 => Expr::Mod(a, b),
            6 => Expr::Neg(a),
            7 => Expr::Const(self.value()),
            8 => Expr::IsZero(a),
            9 => Expr::AddImm(a, self.value()),
            _ => Expr::MulImm(a, self.value()),
        }
    }

    fn address(&mut self) -> Value {
        let hs = self.cfg.heap_size as Value;
        if self.rng.random_bool(self.cfg.oob_prob) {
            if self.rng.random_bool(0.5) { hs + self.rng.random_range(0..3) } else { -1 }
        } else {
            self.rng.random_range(0..hs.max(1))
        }
    }

    fn block(&mut self, defined: &mut BTreeSet<Reg>, depth: usize, loops: usize, has_calls: bool) -> Vec<Stmt> {
        let n = self.rng.random_range(1..=self.cfg.max_stmts.max(1));
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let s = match self.rng.random_range(0..100) {
                0..=34 => {
                    let e = self.expr(defined);
                    match e {
                        // Divisors of the form x * x + 1 are never zero.
                        Expr::Mod(a, b) if !self.rng.random_bool(self.cfg.raw_mod_prob) => {
                            out.push(Stmt::Assign(MOD_TEMP, Expr::Mul(b, b)));
                            out.push(Stmt::Assign(MOD_TEMP, Expr::AddImm(MOD_TEMP, 1)));
                            Stmt::Assign(self.fresh_dst(), Expr::Mod(a, MOD_TEMP))
                        }
                        e => Stmt::Assign(self.fresh_dst(), e),
                    }
                }
                35..=49 if !defined.is_empty() => Stmt::Print(self.reg(defined)),
                50..=61 if self.me + 1 < self.arity.len() => {
                    let callee = self.rng.random_range(self.me + 1..self.arity.len());
                    let args = (0..self.arity[callee]).map(|_| self.reg(defined)).collect();
                    Stmt::Call(self.fresh_dst(), callee, args)
                }
                62..=69 => Stmt::MemGet(self.fresh_dst(), self.address()),
                70..=76 if !defined.is_empty() => {
                    let addr = self.address();
                    Stmt::MemSet(addr, self.reg(defined))
                }
                77..=86 if depth < 2 && !defined.is_empty() => {
                    let c = self.reg(defined);
                    let mut d1 = defined.clone();
                    let mut d2 = defined.clone();
                    let a = self.block(&mut d1, depth + 1, loops, has_calls);
                    let b = if self.rng.random_bool(0.5) { self.block(&mut d2, depth + 1, loops, has_calls) } else { vec![] };
                    *defined = d1.intersection(&d2).copied().collect();
                    Stmt::If(c, a, b)
                }
                87..=99 if loops < if has_calls { 1 } else { 2 } => {
                    let counter = Reg(COUNTER_BASE + loops as u32);
                    let trip = self.rng.random_range(1..=self.cfg.max_trip.max(1));
                    let mut inner = defined.clone();
                    inner.insert(counter);
                    let body = self.block(&mut inner, depth + 1, loops + 1, has_calls);
                    Stmt::Loop(counter, trip, body)
                }
                _ => Stmt::Assign(self.fresh_dst(), Expr::Const(self.value())),
            };
            if let Stmt::Assign(d, _) | Stmt::Call(d, ..) | Stmt::MemGet(d, _) = &s {
                defined.insert(*d);
            }
            out.push(s);
        }
        out
    }
}

struct Lower<'a> {
    code: std::collections::BTreeMap<Label, Instr>,
    next: u32,
    names: &'a [String],
}

impl Lower<'_> {
    fn fresh(&mut self) -> Label {
        self.next += 1;
        Label(self.next)
    }

    fn block(&mut self, stmts: &[Stmt], cont: Label) -> Label {
        stmts.iter().rev().fold(cont, |next, s| self.stmt(s, next))
    }

    fn stmt(&mut self, s: &Stmt, next: Label) -> Label {
        let instr = match s {
            Stmt::Assign(dst, expr) => Instr::Assign { dst: *dst, expr: *expr, next },
            Stmt::Print(reg) => Instr::Print { reg: *reg, next },
            Stmt::Call(dst, callee, args) => {
                Instr::Call { dst: *dst, callee: self.names[*callee].clone(), args: args.clone(), next }
            }
            Stmt::MemGet(dst, addr) => {
                let l = self.fresh();
                self.code.insert(l, Instr::MemGet { dst: *dst, addr: ADDR_TEMP, next });
                Instr::Assign { dst: ADDR_TEMP, expr: Expr::Const(*addr), next: l }
            }
            Stmt::MemSet(addr, src) => {
                let l = self.fresh();
                self.code.insert(l, Instr::MemSet { addr: ADDR_TEMP, src: *src, next });
                Instr::Assign { dst: ADDR_TEMP, expr: Expr::Const(*addr), next: l }
            }
            Stmt::If(c, a, b) => {
                let join = self.fresh();
                self.code.insert(join, Instr::Nop { next });
                let la = self.block(a, join);
                let lb = self.block(b, join);
                Instr::Cond { reg: *c, ifso: la, ifnot: lb }
            }
            Stmt::Loop(c, trip, body) => {
                let head = self.fresh();
                let dec = self.fresh();
                self.code.insert(dec, Instr::Assign { dst: *c, expr: Expr::AddImm(*c, -1), next: head });
                let lbody = self.block(body, dec);
                self.code.insert(head, Instr::Cond { reg: *c, ifso: lbody, ifnot: next });
                Instr::Assign { dst: *c, expr: Expr::Const(*trip), next: head }
            }
        };
        let l = self.fresh();
        self.code.insert(l, instr);
        l
    }
}

fn has_call(stmts: &[Stmt]) -> bool {
    stmts.iter().any(|s| match s {
        Stmt::Call(..) => true,
        Stmt::If(_, a, b) => has_call(a) || has_call(b),
        Stmt::Loop(_, _, b) => has_call(b),
        _ => false,
    })
}

/// Inserts `Assume` guards into a copy of `base`. Each guard deoptimizes to
/// the base version of the same function at the label it was placed on.
fn speculate(rng: &mut impl Rng, name: &str, base: &Version) -> Option<Version> {
    let live = compute_liveness(base);
    let sites: Vec<Label> = base.code.keys().copied().filter(|l| !live[l].is_empty()).collect();
    if sites.is_empty() {
        return None;
    }
    let mut opt = base.clone();
    let mut next = base.code.keys().last().map_or(0, |l| l.0);
    let count = rng.random_range(1..=sites.len().min(3));
    for &site in sites.choose_multiple(rng, count) {
        let regs: Vec<Reg> = live[&site].iter().copied().collect();
        let guard = *regs.choose(rng).unwrap();
        let varmap = regs
            .iter()
            .map(|&r| {
                let perturb = r.0 < COUNTER_BASE && rng.random_bool(0.15);
                (r, if perturb { Expr::AddImm(r, 1) } else { Expr::AddImm(r, 0) })
            })
            .collect();
        next += 1;
        let moved = Label(next);
        let instr = opt.code.remove(&site).unwrap();
        opt.code.insert(moved, instr);
        opt.code.insert(site, Instr::Assume { guard, target: name.to_owned(), target_label: site, varmap, next: moved });
    }
    Some(opt)
}

/// A random terminating program. `main` comes first and takes no
/// parameters; function `i` only calls functions after it.
pub fn generate_program(rng: &mut impl Rng, cfg: &GenConfig) -> Program {
    let n = rng.random_range(1..=cfg.max_functions.max(1));
    let names: Vec<String> = (0..n).map(|i| if i == 0 { Program::ENTRY.to_owned() } else { format!("f{i}") }).collect();
    let arity: Vec<usize> = (0..n).map(|i| if i == 0 { 0 } else { rng.random_range(0..=3) }).collect();
    let mut functions = Vec::with_capacity(n);
    for me in 0..n {
        let params: Vec<Reg> = (1..=arity[me] as u32).map(Reg).collect();
        let mut defined: BTreeSet<Reg> = params.iter().copied().collect();
        let may_call = me + 1 < n;
        let mut g = Gen { rng: &mut *rng, cfg, arity: &arity, me };
        let mut stmts = g.block(&mut defined, 0, 0, may_call);
        // Keep at least one loop-free path to the calls even when the block
        // drew none, so call chains get exercised.
        if may_call && !has_call(&stmts) && g.rng.random_bool(0.7) {
            let callee = g.rng.random_range(me + 1..n);
            let args = (0..arity[callee]).map(|_| g.reg(&defined)).collect();
            let dst = g.fresh_dst();
            stmts.push(Stmt::Call(dst, callee, args));
            defined.insert(dst);
        }
        let ret = if defined.is_empty() {
            stmts.push(Stmt::Assign(Reg(1), Expr::Const(g.value())));
            Reg(1)
        } else {
            g.reg(&defined)
        };
        let mut lower = Lower { code: Default::default(), next: 0, names: &names };
        let ret_label = lower.fresh();
        lower.code.insert(ret_label, Instr::Return { reg: ret });
        let entry = lower.block(&stmts, ret_label);
        let base = Version { entry, code: lower.code };
        let opt = if rng.random_bool(cfg.assume_density) { speculate(rng, &names[me], &base) } else { None };
        functions.push(Function { name: names[me].clone(), params, base, opt });
    }
    Program::new(functions).expect("generated names are distinct")
}

/// The RNG for case `index` of a campaign started from `seed`.
pub fn case_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// A random engine configuration.
pub fn random_config(rng: &mut impl Rng) -> Config {
    let tiers: &[Tier] = if host_supported() { &[Tier::Rtl, Tier::Native] } else { &[Tier::Rtl] };
    Config {
        tier: *tiers.choose(rng).unwrap(),
        stack_impl: if rng.random_bool(0.5) { StackImpl::Flat } else { StackImpl::Structured },
        hotness: match rng.random_range(0..5) {
            0 => Hotness::Never,
            n => Hotness::Calls(n),
        },
        fuel: *[1, 7, 1000].choose(rng).unwrap(),
        ..Config::default()
    }
}

/// Reference step cap used by the harness; generated programs finish far
/// below it.
pub const REF_STEP_CAP: u64 = 10_000_000;

/// A program on which the engine disagreed with the reference semantics.
#[derive(Debug, Clone)]
pub struct Mismatch {
    pub index: u64,
    pub program: String,
    pub config: Config,
    pub reference: Behavior,
    pub jit: Behavior,
}

/// Runs `p` under the reference semantics and under the engine with `cfg`.
/// Returns both behaviors when they disagree.
pub fn differential(p: &Program, cfg: Config) -> Result<(), (Behavior, Behavior)> {
    let reference = ref_run(p, cfg.heap_size, REF_STEP_CAP);
    let jit = jit_run(p, cfg);
    if jit.refines(&reference) {
        Ok(())
    } else {
        Err((reference, jit))
    }
}

#[derive(Debug, Clone)]
pub struct FuzzReport {
    pub cases: u64,
    pub mismatches: Vec<Mismatch>,
}

/// Generates `count` programs from `seed` and checks each under a random
/// configuration, in parallel. `bug` plants a miscompilation.
pub fn campaign(seed: u64, count: u64, gen: &GenConfig, bug: Option<PlantedBug>) -> FuzzReport {
    let mut mismatches: Vec<Mismatch> = (0..count)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = case_rng(seed, i);
            let p = generate_program(&mut rng, gen);
            let cfg = Config { planted_bug: bug, heap_size: gen.heap_size, ..random_config(&mut rng) };
            differential(&p, cfg).err().map(|(reference, jit)| Mismatch {
                index: i,
                program: p.to_string(),
                config: cfg,
                reference,
                jit,
            })
        })
        .collect();
    mismatches.sort_by_key(|m| m.index);
    FuzzReport { cases: count, mismatches }
}

/// Compiles every function of a generated program and runs each unit under
/// both the RTL VM and native code, from identical runtime states. Returns
/// the number of units compared.
pub fn native_oracle_case(seed: u64) -> Result<usize, String> {
    let mut rng = case_rng(seed, u64::MAX);
    let gen = GenConfig::default();
    let p = generate_program(&mut rng, &gen);
    let mut checked = 0;
    for i in 1..=p.functions().len() as u32 {
        let Ok(segs) = compile_segments(&p, FunIdx(i), None) else { continue };
        for seg in segs {
            let cfg = RuntimeConfig { heap_size: gen.heap_size, ..RuntimeConfig::default() };
            let stack: Vec<Value> = (0..12).map(|_| rng.random_range(0..5)).collect();
            let heap: Vec<Value> = (0..gen.heap_size).map(|_| rng.random_range(-50..50)).collect();
            let prepare = || {
                let mut rt = StructuredRuntime::new(cfg);
                for &v in &stack {
                    rt.push(v).unwrap();
                }
                for (a, &v) in heap.iter().enumerate() {
                    rt.heap_set(a as Value, v).unwrap();
                }
                rt
            };
            let mut a = prepare();
            let mut b = prepare();
            let cap = 1_000_000;
            let vm = rtl_run(&seg.rtl, &mut a, cap);
            let code = emit_unit(&seg.rtl).map_err(|e| e.to_string())?;
            let h = install_native(&code, b.instance()).map_err(|e| e.to_string())?;
            let native = native_run(&h, &mut b, cap);
            let same = vm == native && a.stack() == b.stack() && a.heap() == b.heap() && a.trace() == b.trace();
            if !same {
                return Err(format!("unit {} of\n{p}\nvm: {vm:?}\nnative: {native:?}\n{}", seg.rtl.key(), seg.rtl));
            }
            if let Ok((RunEnd::StepCap, _)) = vm {
                return Err(format!("unit {} did not finish", seg.rtl.key()));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

/// Checks at least `units` compiled units against the RTL VM, drawing
/// programs from consecutive seeds. Returns the number of units compared.
pub fn native_oracle(seed: u64, units: usize) -> Result<usize, String> {
    let mut checked = 0;
    let mut s = seed;
    while checked < units {
        checked += native_oracle_case(s)?;
        s += 1;
    }
    Ok(checked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coreir::{check_program, parse_program};

    #[test]
    fn generated_programs_are_valid_and_round_trip() {
        for i in 0..300 {
            let mut rng = case_rng(7, i);
            let gen = GenConfig { assume_density: if i % 2 == 0 { 1.0 } else { 0.3 }, ..GenConfig::default() };
            let p = generate_program(&mut rng, &gen);
            check_program(&p).unwrap_or_else(|v| panic!("{v:?}\n{p}"));
            assert_eq!(parse_program(&p.to_string()).unwrap(), p);
        }
    }

    #[test]
    fn generated_programs_terminate_or_go_wrong() {
        for i in 0..300 {
            let p = generate_program(&mut case_rng(3, i), &GenConfig::default());
            let b = ref_run(&p, 64, REF_STEP_CAP);
            assert_ne!(b.status, crate::behavior::Status::StepCapReached, "{p}");
        }
    }

    #[test]
    fn same_seed_same_program() {
        let a = generate_program(&mut case_rng(11, 4), &GenConfig::default());
        let b = generate_program(&mut case_rng(11, 4), &GenConfig::default());
        assert_eq!(a, b);
    }

    #[test]
    fn small_campaign_is_clean() {
        let r = campaign(42, 100, &GenConfig::default(), None);
        assert!(r.mismatches.is_empty(), "{:#?}", r.mismatches.first());
    }

    #[test]
    fn planted_bug_is_caught() {
        let r = campaign(42, 300, &GenConfig::default(), Some(PlantedBug::RestoreInSaveOrder));
        assert!(!r.mismatches.is_empty());
    }
}
