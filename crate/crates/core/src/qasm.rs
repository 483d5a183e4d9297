//! OpenQASM 3.0 export and re-import for compiled circuits.
//!
//! Only the subset this crate emits is accepted: the version header, the
//! `stdgates.inc` include, one `qubit[n] q;` register, and `ry`, `rz`, `p`,
//! `cx` applications with literal angles. Angles are written with 17
//! significant digits so every `f64` survives the round trip. The global
//! phase travels in a `// global phase:` comment.

use std::fmt::{self, Write};

use crate::circuit::{Circuit, Gate};

const PHASE_TAG: &str = "global phase:";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QasmError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for QasmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for QasmError {}

fn angle(theta: f64) -> String {
    format!("{theta:.16e}")
}

pub fn circuit_to_qasm(c: &Circuit) -> String {
    let mut out = String::new();
    out.push_str("OPENQASM 3.0;\n");
    out.push_str("include \"stdgates.inc\";\n");
    let _ = writeln!(out, "// {PHASE_TAG} {}", angle(c.global_phase()));
    let _ = writeln!(out, "qubit[{}] q;", c.width());
    for g in c.gates() {
        let _ = match *g {
            Gate::Ry { qubit, theta } => writeln!(out, "ry({}) q[{qubit}];", angle(theta)),
            Gate::Rz { qubit, theta } => writeln!(out, "rz({}) q[{qubit}];", angle(theta)),
            Gate::Phase { qubit, theta } => writeln!(out, "p({}) q[{qubit}];", angle(theta)),
            Gate::Cnot { control, target } => writeln!(out, "cx q[{control}], q[{target}];"),
        };
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Str(String),
    Sym(char),
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

/// Text of the global-phase comment and where it starts.
type PhaseComment = (String, usize, usize);

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
    global_phase: Option<PhaseComment>,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Self { chars: text.chars().peekable(), line: 1, column: 1, global_phase: None }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn err(&self, line: usize, column: usize, message: impl Into<String>) -> QasmError {
        QasmError { line, column, message: message.into() }
    }

    fn tokens(mut self) -> Result<(Vec<Token>, Option<PhaseComment>), QasmError> {
        let mut out = Vec::new();
        while let Some(&c) = self.chars.peek() {
            let (line, column) = (self.line, self.column);
            if c.is_whitespace() {
                self.bump();
            } else if c == '/' {
                self.bump();
                match self.chars.peek() {
                    Some('/') => {
                        self.bump();
                        let mut text = String::new();
                        while let Some(&c) = self.chars.peek() {
                            if c == '\n' {
                                break;
                            }
                            text.push(c);
                            self.bump();
                        }
                        if let Some(rest) = text.trim().strip_prefix(PHASE_TAG) {
                            self.global_phase = Some((rest.trim().to_string(), line, column));
                        }
                    }
                    Some('*') => {
                        self.bump();
                        let mut prev = '\0';
                        loop {
                            match self.bump() {
                                Some('/') if prev == '*' => break,
                                Some(c) => prev = c,
                                None => return Err(self.err(line, column, "unterminated block comment")),
                            }
                        }
                    }
                    _ => out.push(Token { tok: Tok::Sym('/'), line, column }),
                }
            } else if c.is_ascii_alphabetic() || c == '_' {
                let mut s = String::new();
                while let Some(&c) = self.chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        s.push(c);
                        self.bump();
                    } else {
                        break;
                    }
                }
                out.push(Token { tok: Tok::Ident(s), line, column });
            } else if c.is_ascii_digit() || c == '.' {
                let mut s = String::new();
                while let Some(&c) = self.chars.peek() {
                    let exponent_sign = (c == '+' || c == '-') && s.ends_with(['e', 'E']);
                    if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || exponent_sign {
                        s.push(c);
                        self.bump();
                    } else {
                        break;
                    }
                }
                out.push(Token { tok: Tok::Number(s), line, column });
            } else if c == '"' {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        Some('"') => break,
                        Some('\n') | None => return Err(self.err(line, column, "unterminated string")),
                        Some(c) => s.push(c),
                    }
                }
                out.push(Token { tok: Tok::Str(s), line, column });
            } else if "[](),;-".contains(c) {
                self.bump();
                out.push(Token { tok: Tok::Sym(c), line, column });
            } else {
                return Err(self.err(line, column, format!("unexpected character {c:?}")));
            }
        }
        Ok((out, self.global_phase))
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: (usize, usize),
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn here(&self) -> (usize, usize) {
        self.peek().map_or(self.end, |t| (t.line, t.column))
    }

    fn err_here(&self, message: impl Into<String>) -> QasmError {
        let (line, column) = self.here();
        QasmError { line, column, message: message.into() }
    }

    fn next(&mut self) -> Result<Token, QasmError> {
        let t = self.peek().cloned().ok_or_else(|| self.err_here("unexpected end of input"))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect_sym(&mut self, c: char) -> Result<(), QasmError> {
        match self.peek() {
            Some(Token { tok: Tok::Sym(s), .. }) if *s == c => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err_here(format!("expected '{c}'"))),
        }
    }

    fn expect_ident(&mut self, name: &str) -> Result<(), QasmError> {
        match self.peek() {
            Some(Token { tok: Tok::Ident(s), .. }) if s == name => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err_here(format!("expected '{name}'"))),
        }
    }

    fn integer(&mut self) -> Result<usize, QasmError> {
        let t = self.next()?;
        match &t.tok {
            Tok::Number(s) => s.parse().map_err(|_| QasmError {
                line: t.line,
                column: t.column,
                message: format!("expected an integer, found {s:?}"),
            }),
            _ => Err(QasmError { line: t.line, column: t.column, message: "expected an integer".into() }),
        }
    }

    fn float(&mut self) -> Result<f64, QasmError> {
        let negative = matches!(self.peek(), Some(Token { tok: Tok::Sym('-'), .. }));
        if negative {
            self.pos += 1;
        }
        let t = self.next()?;
        let value = match &t.tok {
            Tok::Number(s) => s.parse::<f64>().ok(),
            _ => None,
        }
        .ok_or_else(|| QasmError {
            line: t.line,
            column: t.column,
            message: "unsupported angle expression; only numeric literals are accepted".into(),
        })?;
        Ok(if negative { -value } else { value })
    }

    fn qubit_ref(&mut self, register: &str, width: usize) -> Result<usize, QasmError> {
        let (line, column) = self.here();
        self.expect_ident(register)?;
        self.expect_sym('[')?;
        let q = self.integer()?;
        self.expect_sym(']')?;
        if q >= width {
            return Err(QasmError { line, column, message: format!("qubit {q} out of range for qubit[{width}]") });
        }
        Ok(q)
    }
}

/// Parses a program in the emitted subset back into a [`Circuit`].
pub fn parse_qasm(text: &str) -> Result<Circuit, QasmError> {
    let lexer = Lexer::new(text);
    let (tokens, phase) = lexer.tokens()?;
    let end = tokens.last().map_or((1, 1), |t| (t.line, t.column));
    let mut p = Parser { tokens, pos: 0, end };

    p.expect_ident("OPENQASM")?;
    let (vl, vc) = p.here();
    let version = match p.next()?.tok {
        Tok::Number(s) => s,
        _ => String::new(),
    };
    if version != "3" && version != "3.0" {
        return Err(QasmError { line: vl, column: vc, message: format!("unsupported OpenQASM version {version:?}") });
    }
    p.expect_sym(';')?;

    let mut register: Option<(String, usize)> = None;
    let mut gates = Vec::new();
    while let Some(t) = p.peek().cloned() {
        let Tok::Ident(word) = &t.tok else {
            return Err(p.err_here("expected a statement"));
        };
        p.pos += 1;
        match word.as_str() {
            "include" => {
                let s = p.next()?;
                if s.tok != Tok::Str("stdgates.inc".into()) {
                    return Err(QasmError {
                        line: s.line,
                        column: s.column,
                        message: "only \"stdgates.inc\" may be included".into(),
                    });
                }
            }
            "qubit" => {
                if register.is_some() {
                    return Err(QasmError {
                        line: t.line,
                        column: t.column,
                        message: "only one qubit register is supported".into(),
                    });
                }
                p.expect_sym('[')?;
                let width = p.integer()?;
                p.expect_sym(']')?;
                let name = match p.next()? {
                    Token { tok: Tok::Ident(n), .. } => n,
                    other => {
                        return Err(QasmError {
                            line: other.line,
                            column: other.column,
                            message: "expected register name".into(),
                        })
                    }
                };
                register = Some((name, width));
            }
            "ry" | "rz" | "p" | "cx" => {
                let (name, width) = register.clone().ok_or(QasmError {
                    line: t.line,
                    column: t.column,
                    message: "gate applied before the qubit register is declared".into(),
                })?;
                let gate = if word == "cx" {
                    let control = p.qubit_ref(&name, width)?;
                    p.expect_sym(',')?;
                    let target = p.qubit_ref(&name, width)?;
                    if control == target {
                        return Err(QasmError {
                            line: t.line,
                            column: t.column,
                            message: "cx control equals target".into(),
                        });
                    }
                    Gate::Cnot { control, target }
                } else {
                    p.expect_sym('(')?;
                    let theta = p.float()?;
                    p.expect_sym(')')?;
                    let qubit = p.qubit_ref(&name, width)?;
                    match word.as_str() {
                        "ry" => Gate::Ry { qubit, theta },
                        "rz" => Gate::Rz { qubit, theta },
                        _ => Gate::Phase { qubit, theta },
                    }
                };
                gates.push(gate);
            }
            other => {
                return Err(QasmError {
                    line: t.line,
                    column: t.column,
                    message: format!("unsupported statement or gate '{other}'"),
                })
            }
        }
        p.expect_sym(';')?;
    }

    let (_, width) =
        register.ok_or(QasmError { line: end.0, column: end.1, message: "no qubit register declared".into() })?;
    let global_phase = match phase {
        Some((s, line, column)) => s.parse::<f64>().map_err(|_| QasmError {
            line,
            column,
            message: format!("malformed global phase {s:?}"),
        })?,
        None => 0.0,
    };
    Circuit::from_gates(width, gates, global_phase).map_err(|e| QasmError {
        line: end.0,
        column: end.1,
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ComplexVector;
    use crate::random;
    use crate::stateprep::prepare_state;
    use proptest::prelude::*;

    #[test]
    fn empty_circuit() {
        let text = circuit_to_qasm(&Circuit::new(2));
        assert!(text.contains("qubit[2] q;"));
        assert!(!text.lines().any(|l| l.starts_with("ry") || l.starts_with("cx")));
        assert_eq!(parse_qasm(&text).unwrap(), Circuit::new(2));
    }

    #[test]
    fn single_cnot() {
        let c = Circuit::from_gates(2, vec![Gate::Cnot { control: 0, target: 1 }], 0.0).unwrap();
        let text = circuit_to_qasm(&c);
        assert_eq!(text.lines().filter(|l| l.starts_with("cx")).count(), 1);
        assert!(text.contains("cx q[0], q[1];"));
    }

    #[test]
    fn bell_roundtrip() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let c = prepare_state(&ComplexVector::from_real(&[h, 0.0, 0.0, h])).unwrap();
        assert_eq!(parse_qasm(&circuit_to_qasm(&c)).unwrap(), c);
    }

    #[test]
    fn header_and_phase() {
        let c = Circuit::from_gates(1, vec![Gate::Phase { qubit: 0, theta: -0.25 }], 1.0 / 3.0).unwrap();
        let text = circuit_to_qasm(&c);
        assert!(text.starts_with("OPENQASM 3.0;\ninclude \"stdgates.inc\";\n"));
        assert!(text.contains("// global phase: 3.3333333333333331e-1"));
        assert!(text.contains("p(-2.5000000000000000e-1) q[0];"));
        assert!(!text.contains('\r'));
        assert_eq!(parse_qasm(&text).unwrap(), c);
    }

    fn err_at(text: &str) -> (usize, usize) {
        let e = parse_qasm(text).unwrap_err();
        (e.line, e.column)
    }

    #[test]
    fn diagnostics_carry_positions() {
        assert_eq!(err_at("OPENQASM 3.0;\nqubit[2] q;\nh q[0];\n"), (3, 1));
        assert_eq!(err_at("OPENQASM 3.0;\nqubit[2] q;\nry(pi) q[0];\n"), (3, 4));
        assert_eq!(err_at("OPENQASM 3.0;\nqubit[2] q;\ncx q[0], q[5];\n"), (3, 10));
        assert_eq!(err_at("OPENQASM 2.0;\n"), (1, 10));
        assert_eq!(err_at("OPENQASM 3.0;\nry(1.0) q[0];\n"), (2, 1));
        assert_eq!(err_at("OPENQASM 3.0;\nqubit[1] q;\nry(1.0) q[0]\n"), (3, 12));
        let e = parse_qasm("OPENQASM 3.0;\ninclude \"qelib1.inc\";\n").unwrap_err();
        assert_eq!((e.line, e.column), (2, 9));
        assert!(e.to_string().starts_with("2:9:"));
    }

    #[test]
    fn comments_are_skipped() {
        let text = "OPENQASM 3;\n/* block\ncomment */ qubit[1] q; // trailing\nry(1e-3) q[0];\n";
        let c = parse_qasm(text).unwrap();
        assert_eq!(c.gates(), [Gate::Ry { qubit: 0, theta: 1e-3 }]);
    }

    proptest! {
        #[test]
        fn roundtrip_generated(seed in any::<u64>(), n in 1usize..=5) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let c = prepare_state(&random::haar_state(&mut rng, 1 << n)).unwrap();
            prop_assert_eq!(parse_qasm(&circuit_to_qasm(&c)).unwrap(), c);
        }

        #[test]
        fn roundtrip_any_angle(theta in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let c = Circuit::from_gates(1, vec![Gate::Rz { qubit: 0, theta }], theta).unwrap();
            prop_assert_eq!(parse_qasm(&circuit_to_qasm(&c)).unwrap(), c);
        }
    }
}
