//! Text front end for CoreIR.
//!
//! ```text
//! Function Fun1(r1):
//!   l1: r2 <- r1 + 4 l2
//!   l2: r3 <- Call Fun7(r2) l3
//!   l3: r3 <- r1 + r3 l4
//!   l4: Return r3
//! ```
//!
//! A second block introduced by `version` is the optimized version. The
//! first label of a block is its entry. `#` starts a comment.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{Expr, Function, Instr, Label, Program, Reg, Value, Version};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(u64),
    LParen,
    RParen,
    Comma,
    Colon,
    Dot,
    LBracket,
    RBracket,
    Arrow,
    Plus,
    Minus,
    Star,
    Equal,
    Less,
    Percent,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        let chars: Vec<(usize, char)> = line.char_indices().collect();
        let mut i = 0;
        while i < chars.len() {
            let (col, c) = chars[i];
            let at = |tok| Spanned { tok, line: lineno + 1, col: col + 1 };
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].1.is_ascii_alphanumeric() || chars[i].1 == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().map(|&(_, c)| c).collect();
                out.push(at(Tok::Ident(word)));
                continue;
            }
            if c.is_ascii_digit() {
                let start = i;
                while i < chars.len() && chars[i].1.is_ascii_digit() {
                    i += 1;
                }
                let digits: String = chars[start..i].iter().map(|&(_, c)| c).collect();
                let n = digits.parse::<u64>().map_err(|_| ParseError {
                    line: lineno + 1,
                    col: col + 1,
                    msg: format!("integer literal {digits} out of range"),
                })?;
                out.push(at(Tok::Int(n)));
                continue;
            }
            let tok = match c {
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                ':' => Tok::Colon,
                '.' => Tok::Dot,
                '[' => Tok::LBracket,
                ']' => Tok::RBracket,
                '+' => Tok::Plus,
                '*' => Tok::Star,
                '=' => Tok::Equal,
                '%' => Tok::Percent,
                '-' => Tok::Minus,
                '<' => {
                    if chars.get(i + 1).map(|&(_, c)| c) == Some('-') {
                        i += 1;
                        Tok::Arrow
                    } else {
                        Tok::Less
                    }
                }
                other => {
                    return Err(ParseError {
                        line: lineno + 1,
                        col: col + 1,
                        msg: format!("unexpected character {other:?}"),
                    })
                }
            };
            out.push(at(tok));
            i += 1;
        }
    }
    Ok(out)
}

fn numbered(word: &str, prefix: char) -> Option<u32> {
    let rest = word.strip_prefix(prefix)?;
    if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    rest.parse().ok().filter(|&n| n > 0)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    eof: (usize, usize),
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.pos + 1).map(|s| &s.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks.get(self.pos).map_or(self.eof, |s| (s.line, s.col))
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        let (line, col) = self.here();
        Err(ParseError { line, col, msg: msg.into() })
    }

    fn describe(&self) -> String {
        match self.peek() {
            None => "end of input".to_string(),
            Some(Tok::Ident(w)) => format!("`{w}`"),
            Some(Tok::Int(n)) => format!("`{n}`"),
            Some(t) => format!("{t:?}"),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected {what}, found {}", self.describe()))
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn keyword(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Ident(w)) if w == kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(w)) => {
                let w = w.clone();
                self.pos += 1;
                Ok(w)
            }
            _ => self.err(format!("expected {what}, found {}", self.describe())),
        }
    }

    fn is_reg(&self) -> bool {
        matches!(self.peek(), Some(Tok::Ident(w)) if numbered(w, 'r').is_some())
    }

    fn is_label(&self) -> bool {
        matches!(self.peek(), Some(Tok::Ident(w)) if numbered(w, 'l').is_some())
    }

    fn reg(&mut self) -> Result<Reg, ParseError> {
        match self.peek() {
            Some(Tok::Ident(w)) if numbered(w, 'r').is_some() => {
                let n = numbered(w, 'r').unwrap();
                self.pos += 1;
                Ok(Reg(n))
            }
            _ => self.err(format!("expected register, found {}", self.describe())),
        }
    }

    fn label(&mut self) -> Result<Label, ParseError> {
        match self.peek() {
            Some(Tok::Ident(w)) if numbered(w, 'l').is_some() => {
                let n = numbered(w, 'l').unwrap();
                self.pos += 1;
                Ok(Label(n))
            }
            _ => self.err(format!("expected label, found {}", self.describe())),
        }
    }

    /// Integer literal with an optional leading minus sign.
    fn int(&mut self) -> Result<Value, ParseError> {
        let neg = self.eat(&Tok::Minus);
        match self.peek() {
            Some(&Tok::Int(n)) => {
                let wide = if neg { -(n as i128) } else { n as i128 };
                let v = Value::try_from(wide).or_else(|_| self.err(format!("integer {wide} out of range")))?;
                self.pos += 1;
                Ok(v)
            }
            _ => self.err(format!("expected integer, found {}", self.describe())),
        }
    }

    fn is_int(&self) -> bool {
        matches!(self.peek(), Some(Tok::Int(_))) || (self.peek() == Some(&Tok::Minus) && matches!(self.peek2(), Some(Tok::Int(_))))
    }

    fn regs_in_parens(&mut self) -> Result<Vec<Reg>, ParseError> {
        self.expect(Tok::LParen, "`(`")?;
        let mut regs = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                regs.push(self.reg()?);
                if self.eat(&Tok::RParen) {
                    break;
                }
                self.expect(Tok::Comma, "`,` or `)`")?;
            }
        }
        Ok(regs)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(&Tok::Minus) && !matches!(self.peek2(), Some(Tok::Int(_))) {
            self.pos += 1;
            return Ok(Expr::Neg(self.reg()?));
        }
        if self.is_int() {
            return Ok(Expr::Const(self.int()?));
        }
        let a = self.reg()?;
        let op = match self.peek() {
            Some(t @ (Tok::Plus | Tok::Minus | Tok::Star | Tok::Equal | Tok::Less | Tok::Percent)) => t.clone(),
            _ => return self.err(format!("expected operator, found {}", self.describe())),
        };
        self.pos += 1;
        if self.is_reg() {
            let b = self.reg()?;
            return Ok(match op {
                Tok::Plus => Expr::Add(a, b),
                Tok::Minus => Expr::Sub(a, b),
                Tok::Star => Expr::Mul(a, b),
                Tok::Equal => Expr::Eq(a, b),
                Tok::Less => Expr::Lt(a, b),
                _ => Expr::Mod(a, b),
            });
        }
        let at = self.here();
        let v = self.int()?;
        match op {
            Tok::Plus => Ok(Expr::AddImm(a, v)),
            Tok::Star => Ok(Expr::MulImm(a, v)),
            Tok::Equal if v == 0 => Ok(Expr::IsZero(a)),
            _ => Err(ParseError {
                line: at.0,
                col: at.1,
                msg: "this operator takes a register operand".into(),
            }),
        }
    }

    fn instr(&mut self) -> Result<Instr, ParseError> {
        if self.keyword("Nop") {
            return Ok(Instr::Nop { next: self.label()? });
        }
        if self.keyword("Cond") {
            let reg = self.reg()?;
            let ifso = self.label()?;
            let ifnot = self.label()?;
            return Ok(Instr::Cond { reg, ifso, ifnot });
        }
        if self.keyword("Print") {
            let reg = self.reg()?;
            return Ok(Instr::Print { reg, next: self.label()? });
        }
        if self.keyword("Return") {
            return Ok(Instr::Return { reg: self.reg()? });
        }
        if self.keyword("Assume") {
            let guard = self.reg()?;
            let target = self.ident("function name")?;
            self.expect(Tok::Dot, "`.`")?;
            let target_label = self.label()?;
            self.expect(Tok::LBracket, "`[`")?;
            let mut varmap = Vec::new();
            if !self.eat(&Tok::RBracket) {
                loop {
                    let r = self.reg()?;
                    self.expect(Tok::Arrow, "`<-`")?;
                    varmap.push((r, self.expr()?));
                    if self.eat(&Tok::RBracket) {
                        break;
                    }
                    self.expect(Tok::Comma, "`,` or `]`")?;
                }
            }
            let next = self.label()?;
            return Ok(Instr::Assume { guard, target, target_label, varmap, next });
        }
        if !self.is_reg() {
            return self.err(format!("expected instruction, found {}", self.describe()));
        }
        let dst = self.reg()?;
        self.expect(Tok::Arrow, "`<-`")?;
        if self.keyword("Call") {
            let callee = self.ident("function name")?;
            let args = self.regs_in_parens()?;
            let next = self.label()?;
            return Ok(Instr::Call { dst, callee, args, next });
        }
        if self.keyword("MemGet") {
            let addr = self.reg()?;
            return Ok(Instr::MemGet { dst, addr, next: self.label()? });
        }
        if self.keyword("MemSet") {
            let src = self.reg()?;
            return Ok(Instr::MemSet { addr: dst, src, next: self.label()? });
        }
        let expr = self.expr()?;
        Ok(Instr::Assign { dst, expr, next: self.label()? })
    }

    fn version(&mut self) -> Result<Version, ParseError> {
        let mut code = BTreeMap::new();
        let mut entry = None;
        while self.is_label() && self.peek2() == Some(&Tok::Colon) {
            let at = self.here();
            let l = self.label()?;
            self.pos += 1;
            let i = self.instr()?;
            if code.insert(l, i).is_some() {
                return Err(ParseError { line: at.0, col: at.1, msg: format!("duplicate label {l}") });
            }
            entry.get_or_insert(l);
        }
        match entry {
            Some(entry) => Ok(Version { entry, code }),
            None => self.err(format!("expected `<label>:`, found {}", self.describe())),
        }
    }

    fn function(&mut self) -> Result<Function, ParseError> {
        if !self.keyword("Function") {
            return self.err(format!("expected `Function`, found {}", self.describe()));
        }
        let name = self.ident("function name")?;
        let params = self.regs_in_parens()?;
        self.expect(Tok::Colon, "`:`")?;
        let base = self.version()?;
        let opt = if self.keyword("version") { Some(self.version()?) } else { None };
        Ok(Function { name, params, base, opt })
    }
}

/// Parses CoreIR text. Only the shape is checked here; use
/// [`validate_program`](super::validate_program) for the semantic
/// invariants.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let toks = lex(text)?;
    let eof = (text.lines().count().max(1), text.lines().last().map_or(0, |l| l.len()) + 1);
    let mut p = Parser { toks, pos: 0, eof };
    let mut functions: Vec<Function> = Vec::new();
    loop {
        let at = p.here();
        let f = p.function()?;
        if functions.iter().any(|g| g.name == f.name) {
            return Err(ParseError { line: at.0, col: at.1, msg: format!("duplicate function {}", f.name) });
        }
        functions.push(f);
        if p.peek().is_none() {
            break;
        }
    }
    Program::new(functions).map_err(|dup| ParseError { line: 1, col: 1, msg: dup.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FUN1: &str = "
Function Fun1(r1):
  l1: r2 <- r1 + 4 l2
  l2: r3 <- Call Fun7(r2) l3
  l3: r3 <- r1 + r3 l4
  l4: Return r3
";

    #[test]
    fn parses_fun1() {
        let p = parse_program(FUN1).unwrap();
        assert_eq!(p.functions().len(), 1);
        let f = &p.functions()[0];
        assert_eq!(f.params, vec![Reg(1)]);
        assert_eq!(f.base.code.len(), 4);
        assert_eq!(f.base.entry, Label(1));
        assert_eq!(
            f.base.code[&Label(2)],
            Instr::Call { dst: Reg(3), callee: "Fun7".into(), args: vec![Reg(2)], next: Label(3) }
        );
    }

    #[test]
    fn unbound_register_still_parses() {
        let p = parse_program("Function main(): l1: Return r1").unwrap();
        assert_eq!(p.functions()[0].base.code[&Label(1)], Instr::Return { reg: Reg(1) });
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(parse_program("").is_err());
        assert!(parse_program("  # only a comment\n").is_err());
    }

    #[test]
    fn expression_forms() {
        let src = "Function main():
  l1: r1 <- 5 l2
  l2: r2 <- -7 l3
  l3: r3 <- - r1 l4
  l4: r4 <- r1 = 0 l5
  l5: r5 <- r1 + -3 l6
  l6: r6 <- r1 * 2 l7
  l7: r7 <- r1 % r2 l8
  l8: r8 <- r1 < r2 l9
  l9: r9 <- r1 - r2 l10
  l10: Return r9";
        let p = parse_program(src).unwrap();
        let code = &p.functions()[0].base.code;
        let e = |l| match &code[&Label(l)] {
            Instr::Assign { expr, .. } => *expr,
            _ => unreachable!(),
        };
        assert_eq!(e(1), Expr::Const(5));
        assert_eq!(e(2), Expr::Const(-7));
        assert_eq!(e(3), Expr::Neg(Reg(1)));
        assert_eq!(e(4), Expr::IsZero(Reg(1)));
        assert_eq!(e(5), Expr::AddImm(Reg(1), -3));
        assert_eq!(e(6), Expr::MulImm(Reg(1), 2));
        assert_eq!(e(7), Expr::Mod(Reg(1), Reg(2)));
        assert_eq!(e(8), Expr::Lt(Reg(1), Reg(2)));
        assert_eq!(e(9), Expr::Sub(Reg(1), Reg(2)));
    }

    #[test]
    fn extreme_literals() {
        let p = parse_program("Function main(): l1: r1 <- -9223372036854775808 l2 l2: Return r1").unwrap();
        assert!(matches!(p.functions()[0].base.code[&Label(1)], Instr::Assign { expr: Expr::Const(i64::MIN), .. }));
        assert!(parse_program("Function main(): l1: r1 <- 9223372036854775808 l2 l2: Return r1").is_err());
    }

    #[test]
    fn assume_and_memory() {
        let src = "Function F3(r1, r2):
  l2: Return r1
Function main():
  l1: r9 <- 0 l2
  l2: r8 <- 7 l3
  l3: Assume r9 F3.l2 [r1 <- 5, r2 <- r8 + 0] l4
  l4: r5 <- MemGet r8 l5
  l5: r8 <- MemSet r5 l6
  l6: Return r5";
        let p = parse_program(src).unwrap();
        let main = p.function("main").unwrap();
        assert_eq!(
            main.base.code[&Label(3)],
            Instr::Assume {
                guard: Reg(9),
                target: "F3".into(),
                target_label: Label(2),
                varmap: vec![(Reg(1), Expr::Const(5)), (Reg(2), Expr::AddImm(Reg(8), 0))],
                next: Label(4),
            }
        );
        assert_eq!(main.base.code[&Label(5)], Instr::MemSet { addr: Reg(8), src: Reg(5), next: Label(6) });
    }

    #[test]
    fn optimized_version_block() {
        let src = "Function main():
  l1: r1 <- 1 l2
  l2: Return r1
version
  l7: r1 <- 2 l8
  l8: Return r1";
        let p = parse_program(src).unwrap();
        let f = &p.functions()[0];
        assert_eq!(f.opt.as_ref().unwrap().entry, Label(7));
    }

    #[test]
    fn errors_carry_positions() {
        let e = parse_program("Function main():\n  l1: r1 <- r2 l2\n").unwrap_err();
        assert_eq!((e.line, e.col), (2, 16));
        let e = parse_program("Function main():\n  l1: Return r1\n  l1: Return r1\n").unwrap_err();
        assert_eq!(e.line, 3);
        assert!(e.msg.contains("duplicate label"));
        let e = parse_program("Function f(): l1: Return r1\nFunction f(): l1: Return r1\n").unwrap_err();
        assert!(e.msg.contains("duplicate function f"));
        assert!(parse_program("Function main(): l1: r1 <- r2 = 3 l2 l2: Return r1").is_err());
        assert!(parse_program("Function main(): l1: Return r0").is_err());
    }
}
