use std::fmt;

use super::{Expr, Function, Instr, Program, Version};

impl<R: fmt::Display> fmt::Display for Expr<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Add(a, b) => write!(f, "{a} + {b}"),
            Expr::Sub(a, b) => write!(f, "{a} - {b}"),
            Expr::Mul(a, b) => write!(f, "{a} * {b}"),
            Expr::Eq(a, b) => write!(f, "{a} = {b}"),
            Expr::Lt(a, b) => write!(f, "{a} < {b}"),
            Expr::Mod(a, b) => write!(f, "{a} % {b}"),
            Expr::Neg(a) => write!(f, "-{a}"),
            Expr::Const(v) => write!(f, "{v}"),
            Expr::IsZero(a) => write!(f, "{a} = 0"),
            Expr::AddImm(a, v) => write!(f, "{a} + {v}"),
            Expr::MulImm(a, v) => write!(f, "{a} * {v}"),
        }
    }
}

fn comma_list<T: fmt::Display>(f: &mut fmt::Formatter<'_>, items: &[T]) -> fmt::Result {
    for (i, it) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{it}")?;
    }
    Ok(())
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instr::Nop { next } => write!(f, "Nop {next}"),
            Instr::Assign { dst, expr, next } => write!(f, "{dst} <- {expr} {next}"),
            Instr::Cond { reg, ifso, ifnot } => write!(f, "Cond {reg} {ifso} {ifnot}"),
            Instr::Print { reg, next } => write!(f, "Print {reg} {next}"),
            Instr::Call { dst, callee, args, next } => {
                write!(f, "{dst} <- Call {callee}(")?;
                comma_list(f, args)?;
                write!(f, ") {next}")
            }
            Instr::Return { reg } => write!(f, "Return {reg}"),
            Instr::MemGet { dst, addr, next } => write!(f, "{dst} <- MemGet {addr} {next}"),
            Instr::MemSet { addr, src, next } => write!(f, "{addr} <- MemSet {src} {next}"),
            Instr::Assume { guard, target, target_label, varmap, next } => {
                write!(f, "Assume {guard} {target}.{target_label} [")?;
                for (i, (r, e)) in varmap.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{r} <- {e}")?;
                }
                write!(f, "] {next}")
            }
        }
    }
}

impl fmt::Display for Version {
    /// Entry first, then the remaining labels in ascending order.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(i) = self.code.get(&self.entry) {
            writeln!(f, "  {}: {i}", self.entry)?;
        }
        for (l, i) in self.code.iter().filter(|(l, _)| **l != self.entry) {
            writeln!(f, "  {l}: {i}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Function {}(", self.name)?;
        comma_list(f, &self.params)?;
        writeln!(f, "):")?;
        write!(f, "{}", self.base)?;
        if let Some(opt) = &self.opt {
            writeln!(f, "version")?;
            write!(f, "{opt}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, func) in self.functions().iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{func}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use crate::coreir::parse_program;

    #[test]
    fn prints_in_source_shape() {
        let src = "Function Fun1(r1):\n  l1: r2 <- r1 + 4 l2\n  l2: r3 <- Call Fun7(r2) l3\n  l3: r3 <- r1 + r3 l4\n  l4: Return r3\n";
        assert_eq!(parse_program(src).unwrap().to_string(), src);
    }

    #[test]
    fn entry_is_printed_first() {
        let src = "Function main():\n  l9: r1 <- 1 l2\n  l2: Return r1\nversion\n  l3: Assume r1 main.l2 [r1 <- -r1, r2 <- 0] l2\n  l2: Return r1\n";
        let p = parse_program(src).unwrap();
        assert_eq!(p.to_string(), src);
    }
}
