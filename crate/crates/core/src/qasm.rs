//! OpenQASM 2.0 subset used as the circuit wire format.
//!
//! Accepted: the `OPENQASM 2.0;` header, `include "qelib1.inc";` (no-op), one
//! `qreg`, at most one `creg`, the gates `x y z h s sdg rx ry rz cx rxx`,
//! `measure q[i] -> c[j];` and `//` comments. Angle expressions are numeric
//! literals and `pi` combined with unary minus, `*` and `/`. Everything else
//! is rejected with a line/column location.

use std::fmt;

use thiserror::Error;

use crate::circuit::{Axis, Circuit, Gate};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{line}:{col}: {message}")]
pub struct QasmError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64, bool), // value, is_integer
    Str(String),
    Sym(&'static str),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Number(v, _) => write!(f, "number {v}"),
            Tok::Str(s) => write!(f, "string {s:?}"),
            Tok::Sym(s) => write!(f, "`{s}`"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn err<T>(line: usize, col: usize, message: impl Into<String>) -> Result<T, QasmError> {
    Err(QasmError {
        line,
        col,
        message: message.into(),
    })
}

fn lex(text: &str) -> Result<Vec<Token>, QasmError> {
    let mut out = Vec::new();
    for (li, line) in text.lines().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let (lno, col) = (li + 1, i + 1);
            if c.is_whitespace() {
                i += 1;
            } else if c == '/' && chars.get(i + 1) == Some(&'/') {
                break;
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Token {
                    tok: Tok::Ident(chars[start..i].iter().collect()),
                    line: lno,
                    col,
                });
            } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let mut integer = true;
                if i < chars.len() && chars[i] == '.' {
                    integer = false;
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    integer = false;
                    i += 1;
                    if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                        i += 1;
                    }
                    let digits = i;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                    if digits == i {
                        return err(lno, col, "malformed exponent in numeric literal");
                    }
                }
                if i < chars.len() && (chars[i].is_ascii_alphabetic() || chars[i] == '_') {
                    return err(lno, i + 1, "identifier cannot start with a digit");
                }
                let lit: String = chars[start..i].iter().collect();
                let value = lit
                    .parse::<f64>()
                    .or_else(|_| err(lno, col, format!("invalid number {lit:?}")))?;
                out.push(Token {
                    tok: Tok::Number(value, integer),
                    line: lno,
                    col,
                });
            } else if c == '"' {
                let start = i + 1;
                i += 1;
                while i < chars.len() && chars[i] != '"' {
                    i += 1;
                }
                if i == chars.len() {
                    return err(lno, col, "unterminated string");
                }
                out.push(Token {
                    tok: Tok::Str(chars[start..i].iter().collect()),
                    line: lno,
                    col,
                });
                i += 1;
            } else {
                let sym = match c {
                    ';' => ";",
                    ',' => ",",
                    '[' => "[",
                    ']' => "]",
                    '(' => "(",
                    ')' => ")",
                    '*' => "*",
                    '/' => "/",
                    '-' if chars.get(i + 1) == Some(&'>') => {
                        i += 1;
                        "->"
                    }
                    '-' => "-",
                    other => return err(lno, col, format!("unexpected character {other:?}")),
                };
                i += 1;
                out.push(Token {
                    tok: Tok::Sym(sym),
                    line: lno,
                    col,
                });
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    end: (usize, usize),
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn here(&self) -> (usize, usize) {
        self.peek().map_or(self.end, |t| (t.line, t.col))
    }

    fn next(&mut self, what: &str) -> Result<Token, QasmError> {
        match self.toks.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => err(self.end.0, self.end.1, format!("unexpected end of input, expected {what}")),
        }
    }

    fn expect(&mut self, sym: &'static str) -> Result<(), QasmError> {
        let t = self.next(&format!("`{sym}`"))?;
        if t.tok == Tok::Sym(sym) {
            Ok(())
        } else {
            err(t.line, t.col, format!("expected `{sym}`, found {}", t.tok))
        }
    }

    fn eat(&mut self, sym: &'static str) -> bool {
        if self.peek().is_some_and(|t| t.tok == Tok::Sym(sym)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<(String, usize, usize), QasmError> {
        let t = self.next("identifier")?;
        match t.tok {
            Tok::Ident(s) => Ok((s, t.line, t.col)),
            other => err(t.line, t.col, format!("expected identifier, found {other}")),
        }
    }

    fn integer(&mut self) -> Result<usize, QasmError> {
        let t = self.next("integer")?;
        match t.tok {
            Tok::Number(v, true) => Ok(v as usize),
            other => err(t.line, t.col, format!("expected non-negative integer, found {other}")),
        }
    }

    fn expr(&mut self) -> Result<f64, QasmError> {
        let mut value = self.unary()?;
        loop {
            if self.eat("*") {
                value *= self.unary()?;
            } else if self.eat("/") {
                let (line, col) = self.here();
                let d = self.unary()?;
                if d == 0.0 {
                    return err(line, col, "division by zero in angle expression");
                }
                value /= d;
            } else {
                return Ok(value);
            }
        }
    }

    fn unary(&mut self) -> Result<f64, QasmError> {
        if self.eat("-") {
            return Ok(-self.unary()?);
        }
        let t = self.next("angle expression")?;
        match t.tok {
            Tok::Number(v, _) => Ok(v),
            Tok::Ident(ref s) if s == "pi" => Ok(std::f64::consts::PI),
            other => err(t.line, t.col, format!("unsupported angle expression at {other}")),
        }
    }
}

#[derive(Default)]
struct Register {
    name: String,
    size: usize,
}

fn indexed_arg(p: &mut Parser, reg: &Option<Register>, kind: &str) -> Result<usize, QasmError> {
    let (name, line, col) = p.ident()?;
    let Some(reg) = reg else {
        return err(line, col, format!("no {kind} declared before use of `{name}`"));
    };
    if name != reg.name {
        return err(line, col, format!("unknown {kind} `{name}`"));
    }
    if !p.peek().is_some_and(|t| t.tok == Tok::Sym("[")) {
        let (l, c) = p.here();
        return err(l, c, "whole-register arguments are not supported; index the register");
    }
    p.expect("[")?;
    let (l, c) = p.here();
    let index = p.integer()?;
    p.expect("]")?;
    if index >= reg.size {
        return err(l, c, format!("index {index} out of range for {kind} `{name}` of size {}", reg.size));
    }
    Ok(index)
}

/// Parses the supported OpenQASM 2.0 subset.
pub fn parse_qasm(text: &str) -> Result<Circuit, QasmError> {
    let toks = lex(text)?;
    let end = (text.lines().count().max(1), 1);
    let mut p = Parser { toks, pos: 0, end };

    // header
    let (kw, line, col) = p.ident().map_err(|e| QasmError {
        message: "missing `OPENQASM 2.0;` header".into(),
        ..e
    })?;
    if kw != "OPENQASM" {
        return err(line, col, "missing `OPENQASM 2.0;` header");
    }
    let t = p.next("version")?;
    if t.tok != Tok::Number(2.0, false) {
        return err(t.line, t.col, format!("unsupported version {}, only 2.0", t.tok));
    }
    p.expect(";")?;

    let mut qreg: Option<Register> = None;
    let mut creg: Option<Register> = None;
    let mut gates = Vec::new();
    let mut measurements = Vec::new();
    let mut measured = Vec::<bool>::new();

    while p.peek().is_some() {
        let (word, line, col) = p.ident()?;
        match word.as_str() {
            "include" => {
                let t = p.next("file name")?;
                match t.tok {
                    Tok::Str(ref s) if s == "qelib1.inc" => {}
                    other => return err(t.line, t.col, format!("only \"qelib1.inc\" may be included, found {other}")),
                }
                p.expect(";")?;
            }
            "qreg" | "creg" => {
                let (name, _, _) = p.ident()?;
                p.expect("[")?;
                let (l, c) = p.here();
                let size = p.integer()?;
                p.expect("]")?;
                p.expect(";")?;
                if size == 0 {
                    return err(l, c, "register size must be positive");
                }
                let slot = if word == "qreg" { &mut qreg } else { &mut creg };
                if slot.is_some() {
                    return err(line, col, format!("only one {word} is supported"));
                }
                if word == "qreg" && !gates.is_empty() {
                    return err(line, col, "qreg declared after use");
                }
                *slot = Some(Register { name, size });
                if word == "qreg" {
                    measured = vec![false; size];
                }
            }
            "measure" => {
                let q = indexed_arg(&mut p, &qreg, "qreg")?;
                p.expect("->")?;
                let c = indexed_arg(&mut p, &creg, "creg")?;
                p.expect(";")?;
                measurements.push((q, c));
                measured[q] = true;
            }
            "OPENQASM" => return err(line, col, "duplicate header"),
            name => {
                let (n_params, n_qubits) = match name {
                    "x" | "y" | "z" | "h" | "s" | "sdg" => (0, 1),
                    "rx" | "ry" | "rz" => (1, 1),
                    "cx" => (0, 2),
                    "rxx" => (1, 2),
                    _ => return err(line, col, format!("unsupported statement or gate `{name}`")),
                };
                let mut params = Vec::new();
                if p.eat("(") {
                    if n_params == 0 {
                        return err(line, col, format!("gate `{name}` takes no parameters"));
                    }
                    params.push(p.expr()?);
                    while p.eat(",") {
                        params.push(p.expr()?);
                    }
                    p.expect(")")?;
                }
                if params.len() != n_params {
                    return err(line, col, format!("gate `{name}` takes {n_params} parameter(s), got {}", params.len()));
                }
                let mut qs = vec![indexed_arg(&mut p, &qreg, "qreg")?];
                while p.eat(",") {
                    qs.push(indexed_arg(&mut p, &qreg, "qreg")?);
                }
                p.expect(";")?;
                if qs.len() != n_qubits {
                    return err(line, col, format!("gate `{name}` acts on {n_qubits} qubit(s), got {}", qs.len()));
                }
                if n_qubits == 2 && qs[0] == qs[1] {
                    return err(line, col, format!("gate `{name}` needs two distinct qubits"));
                }
                if let Some(&q) = qs.iter().find(|&&q| measured[q]) {
                    return err(line, col, format!("gate `{name}` on q[{q}] after its measurement"));
                }
                let gate = match name {
                    "x" => Gate::X(qs[0]),
                    "y" => Gate::Y(qs[0]),
                    "z" => Gate::Z(qs[0]),
                    "h" => Gate::H(qs[0]),
                    "s" => Gate::S(qs[0]),
                    "sdg" => Gate::Sdg(qs[0]),
                    "rx" => Gate::Rot(Axis::X, params[0], qs[0]),
                    "ry" => Gate::Rot(Axis::Y, params[0], qs[0]),
                    "rz" => Gate::Rot(Axis::Z, params[0], qs[0]),
                    "cx" => Gate::Cx(qs[0], qs[1]),
                    _ => Gate::Rxx(params[0], qs[0], qs[1]),
                };
                gates.push(gate);
            }
        }
    }

    let Some(qreg) = qreg else {
        return err(end.0, end.1, "missing qreg declaration");
    };
    Ok(Circuit {
        n_qubits: qreg.size,
        n_clbits: creg.map_or(0, |c| c.size),
        gates,
        measurements,
    })
}

fn angle(x: f64) -> String {
    format!("{x:.16e}")
}

/// Deterministic text form; angles carry 17 significant digits.
pub fn serialize_qasm(c: &Circuit) -> String {
    let mut out = String::from("OPENQASM 2.0;\ninclude \"qelib1.inc\";\n");
    out.push_str(&format!("qreg q[{}];\n", c.n_qubits));
    if c.n_clbits > 0 {
        out.push_str(&format!("creg c[{}];\n", c.n_clbits));
    }
    for g in &c.gates {
        let qs: Vec<String> = g.qubits().iter().map(|q| format!("q[{q}]")).collect();
        match g.params().first() {
            Some(&t) => out.push_str(&format!("{}({}) {};\n", g.name(), angle(t), qs.join(","))),
            None => out.push_str(&format!("{} {};\n", g.name(), qs.join(","))),
        }
    }
    for (q, cbit) in &c.measurements {
        out.push_str(&format!("measure q[{q}] -> c[{cbit}];\n"));
    }
    out
}
