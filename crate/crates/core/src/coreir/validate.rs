use std::collections::HashSet;
use std::fmt;

use super::{Instr, Label, Program, Version, VersionTag};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub function: String,
    pub label: Option<Label>,
    pub severity: Severity,
    pub reason: String,
}

impl Violation {
    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        match self.label {
            Some(l) => write!(f, "{sev}: {}.{l}: {}", self.function, self.reason),
            None => write!(f, "{sev}: {}: {}", self.function, self.reason),
        }
    }
}

/// Checks the program invariants. Violations come back in declaration
/// order, then version order (base before opt), then label order.
///
/// `Assume` inside a base version is accepted but reported as a warning.
pub fn validate_program(p: &Program) -> Vec<Violation> {
    let mut out = Vec::new();
    match p.function(Program::ENTRY) {
        None => out.push(Violation {
            function: Program::ENTRY.into(),
            label: None,
            severity: Severity::Error,
            reason: "missing entry function".into(),
        }),
        Some(m) if !m.params.is_empty() => out.push(Violation {
            function: Program::ENTRY.into(),
            label: None,
            severity: Severity::Error,
            reason: "entry function must take no parameters".into(),
        }),
        Some(_) => {}
    }

    for f in p.functions() {
        let mut err = |label: Option<Label>, severity, reason: String| {
            out.push(Violation { function: f.name.clone(), label, severity, reason });
        };
        let mut seen = HashSet::new();
        for r in &f.params {
            if !seen.insert(r) {
                err(None, Severity::Error, format!("duplicate parameter {r}"));
            }
        }
        let versions = [(VersionTag::Base, Some(&f.base)), (VersionTag::Opt, f.opt.as_ref())];
        for (tag, v) in versions.into_iter().filter_map(|(t, v)| v.map(|v| (t, v))) {
            check_version(p, tag, v, &mut err);
        }
    }
    out
}

fn check_version(p: &Program, tag: VersionTag, v: &Version, err: &mut impl FnMut(Option<Label>, Severity, String)) {
    if v.code.is_empty() {
        err(None, Severity::Error, format!("{tag} version has no code"));
        return;
    }
    if !v.code.contains_key(&v.entry) {
        err(None, Severity::Error, format!("{tag} entry {} is not a label of the version", v.entry));
    }
    for (&l, i) in &v.code {
        for s in i.successors() {
            if !v.code.contains_key(&s) {
                err(Some(l), Severity::Error, format!("unknown label {s}"));
            }
        }
        match i {
            Instr::Call { callee, .. } if p.function(callee).is_none() => {
                err(Some(l), Severity::Error, format!("unknown callee {callee}"));
            }
            Instr::Assume { target, target_label, varmap, .. } => {
                if tag == VersionTag::Base {
                    err(Some(l), Severity::Warning, "Assume in a base version".into());
                }
                match p.function(target) {
                    None => err(Some(l), Severity::Error, format!("unknown deoptimization target {target}")),
                    Some(t) if !t.base.code.contains_key(target_label) => err(
                        Some(l),
                        Severity::Error,
                        format!("deoptimization label {target_label} is not in the base version of {target}"),
                    ),
                    Some(_) => {}
                }
                let mut dsts = HashSet::new();
                for (r, _) in varmap {
                    if !dsts.insert(r) {
                        err(Some(l), Severity::Error, format!("register {r} assigned twice in varmap"));
                    }
                }
            }
            _ => {}
        }
    }
}

/// `Ok` when the program has no error-severity violations.
pub fn check_program(p: &Program) -> Result<(), Vec<Violation>> {
    let errors: Vec<_> = validate_program(p).into_iter().filter(Violation::is_error).collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coreir::parse_program;

    const CALL_PAIR: &str = "
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
  l3: Return r2
";

    #[test]
    fn call_pair_is_clean() {
        assert_eq!(validate_program(&parse_program(CALL_PAIR).unwrap()), vec![]);
    }

    #[test]
    fn unknown_callee() {
        let p = parse_program("Function main(): l1: r1 <- Call nope() l2 l2: Return r1").unwrap();
        let v = validate_program(&p);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].reason, "unknown callee nope");
        assert_eq!(v[0].label, Some(Label(1)));
    }

    #[test]
    fn assume_label_outside_target_base() {
        let p = parse_program(
            "Function g(): l1: r1 <- 0 l2 l2: Return r1
             Function main(): l1: r1 <- 1 l2 l2: Return r1
             version l1: r1 <- 1 l2 l2: Assume r1 g.l9 [] l3 l3: Return r1",
        )
        .unwrap();
        let v = validate_program(&p);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].is_error());
        assert!(v[0].reason.contains("l9"));
    }

    #[test]
    fn structural_errors() {
        let p = parse_program("Function main(r1, r1): l1: Nop l5 l2: Assume r1 main.l1 [r2 <- 1, r2 <- 2] l1").unwrap();
        let reasons: Vec<_> = validate_program(&p).into_iter().map(|v| v.reason).collect();
        assert_eq!(
            reasons,
            vec![
                "entry function must take no parameters".to_string(),
                "duplicate parameter r1".into(),
                "unknown label l5".into(),
                "Assume in a base version".into(),
                "register r2 assigned twice in varmap".into(),
            ]
        );
    }

    #[test]
    fn missing_main() {
        let p = parse_program("Function f(): l1: Return r1").unwrap();
        assert_eq!(validate_program(&p)[0].reason, "missing entry function");
    }

    #[test]
    fn base_assume_is_only_a_warning() {
        let p = parse_program("Function main(): l1: r1 <- 1 l2 l2: Assume r1 main.l1 [] l3 l3: Return r1").unwrap();
        let v = validate_program(&p);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].severity, Severity::Warning);
        assert!(check_program(&p).is_ok());
    }
}
