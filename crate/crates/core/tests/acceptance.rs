//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use tierjit::backend::{compile_segments, status_name, Operand, PrimOp, RtlInstr, RtlUnit, VReg};
use tierjit::bench::bench;
use tierjit::coreir::{parse_program, FunIdx, Program};
use tierjit::fuzz::{campaign, native_oracle, GenConfig};
use tierjit::monitor::{jit_run, jit_run_with, Config, DeoptRecord, Hotness, StackImpl};
use tierjit::nativegen::host_supported;
use tierjit::primitives::script::{random_script, replay};
use tierjit::primitives::{relate, FlatRuntime, Runtime, RuntimeConfig, StructuredRuntime, Tier};
use tierjit::refsem::ref_run;
use tierjit::{Behavior, Status};

const FUZZ_SEED: u64 = 0x5eed;
/// Programs that never finish run under this cap everywhere.
const SMALL_CAP: u64 = 20_000;
const NONTERMINATING: &[&str] = &["infinite_loop"];
const DEOPT_PROGRAMS: &[&str] = &["speculate_guard", "deopt_loop", "deopt_after_call"];
const OOB_MESSAGE: &str = "MemGet out of memory range";

struct Corpus(BTreeMap<String, Program>);

impl Corpus {
    fn load() -> Self {
        let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus");
        let mut out = BTreeMap::new();
        for entry in std::fs::read_dir(&dir).expect("corpus directory") {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "cir") {
                let name = path.file_stem().unwrap().to_string_lossy().into_owned();
                let text = std::fs::read_to_string(&path).unwrap();
                let p = parse_program(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
                out.insert(name, p);
            }
        }
        Corpus(out)
    }

    fn get(&self, name: &str) -> &Program {
        &self.0[name]
    }
}

fn capped(name: &str, cfg: Config) -> Config {
    if NONTERMINATING.contains(&name) {
        Config { step_cap: SMALL_CAP, native_budget: SMALL_CAP, ..cfg }
    } else {
        cfg
    }
}

fn reference(name: &str, p: &Program) -> Behavior {
    let cap = if NONTERMINATING.contains(&name) { SMALL_CAP } else { 10_000_000 };
    ref_run(p, 4096, cap)
}

fn tiers() -> Vec<Tier> {
    if host_supported() {
        vec![Tier::Rtl, Tier::Native]
    } else {
        vec![Tier::Rtl]
    }
}

type Verdict = Result<String, String>;
type Check<'a> = Box<dyn Fn() -> Verdict + 'a>;

fn c1_refinement(corpus: &Corpus) -> Verdict {
    let mut bad = vec![];
    for (name, p) in &corpus.0 {
        let want = reference(name, p);
        let got = jit_run(p, capped(name, Config::default()));
        if !got.refines(&want) {
            bad.push(format!("{name}: ref {want:?}, jit {got:?}"));
        }
    }
    let corpus_bad = bad.len();
    let report = campaign(FUZZ_SEED, 1000, &GenConfig::default(), None);
    for m in report.mismatches.iter().take(3) {
        bad.push(format!("fuzz case {}: ref {:?}, jit {:?}\n{}", m.index, m.reference, m.jit, m.program));
    }
    if bad.is_empty() {
        Ok(format!("{} corpus programs and {} fuzzed programs, 0 mismatches", corpus.0.len(), report.cases))
    } else {
        Err(format!("{corpus_bad} corpus, {} fuzz mismatches: {}", report.mismatches.len(), bad.join("; ")))
    }
}

fn c2_runtimes() -> Verdict {
    let cfg = RuntimeConfig { heap_size: 8, ..RuntimeConfig::default() };
    let bad: Vec<String> = (0..10_000u64)
        .into_par_iter()
        .filter_map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let script = random_script(&mut rng, 200, cfg.heap_size);
            let mut s = StructuredRuntime::new(cfg);
            let mut f = FlatRuntime::new(cfg);
            for (i, call) in script.iter().enumerate() {
                let a = replay(&mut s, call);
                let b = replay(&mut f, call);
                if a != b {
                    return Some(format!("script {seed} call {i} {call:?}: {a:?} vs {b:?}"));
                }
            }
            (!relate(&s, &f)).then(|| format!("script {seed}: final states unrelated"))
        })
        .collect();
    match bad.first() {
        None => Ok("10000 scripts of up to 200 calls agree".into()),
        Some(first) => Err(format!("{} scripts disagree, first: {first}", bad.len())),
    }
}

fn c3_osr(corpus: &Corpus) -> Verdict {
    let key = |d: &DeoptRecord| (d.target, d.label, d.regs.clone());
    let mut compiled_deopts = 0;
    for &name in DEOPT_PROGRAMS {
        let p = corpus.get(name);
        let want = reference(name, p);
        let interp = jit_run_with(p, Config { hotness: Hotness::Never, ..Config::default() }, None, false);
        if interp.behavior != want || interp.deopts.is_empty() {
            return Err(format!("{name}: interpreter-only run {:?}, {} deopts", interp.behavior, interp.deopts.len()));
        }
        for tier in tiers() {
            for stack_impl in [StackImpl::Structured, StackImpl::Flat] {
                let cfg = Config { tier, stack_impl, hotness: Hotness::Calls(1), ..Config::default() };
                let r = jit_run_with(p, cfg, None, false);
                if r.behavior != want {
                    return Err(format!("{name} {tier:?}/{stack_impl:?}: {:?} vs ref {want:?}", r.behavior));
                }
                let n = r.deopts.iter().filter(|d| d.from_compiled).count();
                if n == 0 {
                    return Err(format!("{name} {tier:?}/{stack_impl:?}: no deopt came from compiled code"));
                }
                compiled_deopts += n;
                let a: Vec<_> = interp.deopts.iter().map(key).collect();
                let b: Vec<_> = r.deopts.iter().map(key).collect();
                if a != b {
                    return Err(format!("{name} {tier:?}/{stack_impl:?}: frames {b:?}, interpreter {a:?}"));
                }
            }
        }
    }
    Ok(format!("{} programs, {compiled_deopts} frames rebuilt from compiled code match the interpreter", DEOPT_PROGRAMS.len()))
}

fn c4_fallback(corpus: &Corpus) -> Verdict {
    for (name, p) in &corpus.0 {
        let want = reference(name, p);
        for hotness in [Hotness::Calls(1), Hotness::Calls(2)] {
            let cfg = capped(name, Config { hotness, inject_compile_failure: true, ..Config::default() });
            let r = jit_run_with(p, cfg, None, false);
            if !r.compiled.is_empty() {
                return Err(format!("{name}: {:?} got compiled despite injection", r.compiled));
            }
            if r.behavior != want {
                return Err(format!("{name}: {:?} vs ref {want:?}", r.behavior));
            }
        }
    }
    Ok(format!("{} programs with every compilation cancelled match the reference", corpus.0.len()))
}

/// Renders a unit with vregs renamed in order of first appearance.
fn normalized(u: &RtlUnit) -> Vec<String> {
    let mut names: BTreeMap<VReg, usize> = BTreeMap::new();
    let mut name = |r: VReg| {
        let n = names.len();
        format!("v{}", names.entry(r).or_insert(n))
    };
    u.code()
        .iter()
        .map(|i| match *i {
            RtlInstr::Op { dst, expr, .. } => {
                let e = expr.map_regs(&mut name);
                format!("{} = {e}", name(dst))
            }
            RtlInstr::CallPrim { dst, prim, .. } => {
                let call = match prim {
                    PrimOp::Pop => "Pop()".to_string(),
                    PrimOp::Push(Operand::Imm(v)) => format!("Push({v})"),
                    PrimOp::Push(Operand::Reg(r)) => format!("Push({})", name(r)),
                    other => format!("{other}"),
                };
                match dst {
                    Some(d) => format!("{} = {call}", name(d)),
                    None => call,
                }
            }
            RtlInstr::ReturnStatus(c) => format!("return {}", status_name(c).unwrap_or("?")),
            other => format!("{other:?}"),
        })
        .collect()
}

fn c5_shape(corpus: &Corpus) -> Verdict {
    let p = corpus.get("call_pair");
    let fun1 = p.idx_of("Fun1").unwrap();
    let callee = p.idx_of("Fun7").unwrap();
    let segs = compile_segments(p, fun1, None).map_err(|c| c.0)?;
    let call = [format!("Push({})", fun1.0), "Push(2)".into()];
    let mut entry: Vec<String> = vec!["v0 = Pop()".into(), "v1 = v0 + 4".into(), "Push(v0)".into()];
    entry.extend(call);
    entry.extend(["Push(v1)".into(), "Push(1)".into(), format!("Push({})", callee.0), "return RETCALL".into()]);
    let cont = ["v0 = Pop()", "v1 = Pop()", "v0 = v1 + v0", "Push(v0)", "return RETRET"];
    if segs.len() != 2 {
        return Err(format!("{} units", segs.len()));
    }
    let (a, b) = (normalized(&segs[0].rtl), normalized(&segs[1].rtl));
    if a != entry {
        return Err(format!("entry unit {a:?}"));
    }
    if b != cont {
        return Err(format!("continuation unit {b:?}"));
    }
    Ok(format!("entry unit ({} instrs) and continuation unit ({} instrs) match", a.len(), b.len()))
}

fn c6_transparency(corpus: &Corpus) -> Verdict {
    let mut cfgs = vec![];
    for tier in tiers() {
        for stack_impl in [StackImpl::Structured, StackImpl::Flat] {
            for hotness in [Hotness::Calls(1), Hotness::Calls(2), Hotness::Calls(10), Hotness::Never] {
                for fuel in [1, 7, 1000] {
                    cfgs.push(Config { tier, stack_impl, hotness, fuel, ..Config::default() });
                }
            }
        }
    }
    let jobs: Vec<_> = corpus.0.iter().flat_map(|(n, p)| cfgs.iter().map(move |c| (n, p, *c))).collect();
    let refs: BTreeMap<_, _> = corpus.0.par_iter().map(|(n, p)| (n, reference(n, p))).collect();
    let bad: Vec<String> = jobs
        .par_iter()
        .filter_map(|&(name, p, cfg)| {
            let got = jit_run(p, capped(name, cfg));
            (got != refs[name]).then(|| format!("{name} under {cfg:?}: {got:?} vs {:?}", refs[name]))
        })
        .collect();
    match bad.first() {
        None => Ok(format!("{} programs x {} configurations identical", corpus.0.len(), cfgs.len())),
        Some(first) => Err(format!("{} runs differ, first: {first}", bad.len())),
    }
}

fn c7_native() -> Verdict {
    if !host_supported() {
        return Ok("SKIPPED: host cannot run the native tier".into());
    }
    native_oracle(7, 100).map(|n| format!("{n} compiled units agree with the RTL VM"))
}

fn c8_speedup(corpus: &Corpus) -> Verdict {
    let p = corpus.get("prime_count");
    let mut parts = vec![];
    let mut ok = true;
    for (tier, need) in [(Tier::Rtl, 2.0), (Tier::Native, 5.0)] {
        if tier == Tier::Native && !host_supported() {
            parts.push("native SKIPPED".to_string());
            continue;
        }
        let r = bench(p, Config { tier, hotness: Hotness::Calls(2), ..Config::default() }, 5);
        ok &= r.ratio() >= need && r.behavior.status == Status::Terminated(2262);
        parts.push(format!("{tier:?} {:.1}x (need {need}x; {:?} vs {:?})", r.ratio(), r.interp, r.jit));
    }
    if ok {
        Ok(parts.join(", "))
    } else {
        Err(parts.join(", "))
    }
}

fn c9_message(corpus: &Corpus) -> Verdict {
    let p = corpus.get("heap_oob");
    let want = reference("heap_oob", p);
    if want.status != Status::Errored(OOB_MESSAGE.into()) {
        return Err(format!("reference: {:?}", want.status));
    }
    for tier in tiers() {
        for stack_impl in [StackImpl::Structured, StackImpl::Flat] {
            let r = jit_run_with(p, Config { tier, stack_impl, hotness: Hotness::Calls(1), ..Config::default() }, None, false);
            if r.behavior != want || !r.compiled.contains(&FunIdx(2)) {
                return Err(format!("{tier:?}/{stack_impl:?}: {:?}", r.behavior.status));
            }
        }
    }
    let mut s = StructuredRuntime::new(RuntimeConfig::default());
    let mut f = FlatRuntime::new(RuntimeConfig::default());
    for addr in [-1, 4096] {
        for e in [s.heap_get(addr).unwrap_err(), f.heap_get(addr).unwrap_err()] {
            if e.to_string() != OOB_MESSAGE {
                return Err(format!("runtime says {e}"));
            }
        }
    }
    Ok(format!("\"{OOB_MESSAGE}\" from both runtimes and {} tier(s)", tiers().len()))
}

fn main() -> ExitCode {
    let corpus = Corpus::load();
    let criteria: Vec<(&str, Check)> = vec![
        ("1 trace refinement", Box::new(|| c1_refinement(&corpus))),
        ("2 stack runtimes agree", Box::new(c2_runtimes)),
        ("3 OSR frames", Box::new(|| c3_osr(&corpus))),
        ("4 compile fallback", Box::new(|| c4_fallback(&corpus))),
        ("5 calling convention shape", Box::new(|| c5_shape(&corpus))),
        ("6 tier/profiler/fuel transparency", Box::new(|| c6_transparency(&corpus))),
        ("7 native vs RTL VM", Box::new(c7_native)),
        ("8 speedup", Box::new(|| c8_speedup(&corpus))),
        ("9 error message", Box::new(|| c9_message(&corpus))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let t = Instant::now();
        let verdict = check();
        let secs = t.elapsed().as_secs_f64();
        match verdict {
            Ok(msg) => println!("PASS criterion {name}: {msg} [{secs:.1}s]"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {name}: {msg} [{secs:.1}s]");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
