//! A small arithmetic expression language over one variable `x`, so
//! coefficients a(x), b(x) can arrive as command-line text.
//!
//! Recursive-descent parsing with Pratt-style precedence: `+ -` < `* /` <
//! unary minus < `^` (right-associative). Functions: exp, log, sqrt, sin,
//! cos, abs, pow. No implicit multiplication.

use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
    Abs,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Abs => "abs",
        }
    }
}

/// Abstract syntax tree of an expression in `x`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Fun(Func, Box<Expr>),
}

/// Syntax error with the byte offset where parsing failed and the set of
/// token kinds that would have been accepted there.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub offset: usize,
    pub expected: Vec<&'static str>,
    pub found: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "syntax error at byte {}: found {}, expected one of [{}]",
            self.offset,
            self.found,
            self.expected.join(", ")
        )
    }
}

impl std::error::Error for ParseError {}

/// Domain failure during evaluation, naming the offending subexpression.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalError {
    pub node: String,
    pub reason: &'static str,
    pub at_x: f64,
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "domain error in `{}` at x = {}: {}", self.node, self.at_x, self.reason)
    }
}

impl std::error::Error for EvalError {}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    Eof,
}

impl Token {
    fn describe(&self) -> String {
        match self {
            Token::Num(v) => format!("number {v:?}"),
            Token::Ident(s) => format!("identifier `{s}`"),
            Token::Plus => "`+`".into(),
            Token::Minus => "`-`".into(),
            Token::Star => "`*`".into(),
            Token::Slash => "`/`".into(),
            Token::Caret => "`^`".into(),
            Token::LParen => "`(`".into(),
            Token::RParen => "`)`".into(),
            Token::Comma => "`,`".into(),
            Token::Eof => "end of input".into(),
        }
    }
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Self { src: src.as_bytes(), pos: 0 }
    }

    fn next_token(&mut self) -> Result<(Token, usize), ParseError> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        if self.pos >= self.src.len() {
            return Ok((Token::Eof, start));
        }
        let c = self.src[self.pos];
        let tok = match c {
            b'+' => Token::Plus,
            b'-' => Token::Minus,
            b'*' => Token::Star,
            b'/' => Token::Slash,
            b'^' => Token::Caret,
            b'(' => Token::LParen,
            b')' => Token::RParen,
            b',' => Token::Comma,
            b'0'..=b'9' => return self.lex_number(start),
            c if c.is_ascii_alphabetic() || c == b'_' => return self.lex_ident(start),
            other => {
                return Err(ParseError {
                    offset: start,
                    expected: vec!["number", "identifier", "operator", "`(`"],
                    found: format!("`{}`", other as char),
                })
            }
        };
        self.pos += 1;
        Ok((tok, start))
    }

    fn lex_number(&mut self, start: usize) -> Result<(Token, usize), ParseError> {
        let mut end = self.pos;
        while end < self.src.len() && self.src[end].is_ascii_digit() {
            end += 1;
        }
        if end < self.src.len() && self.src[end] == b'.' {
            end += 1;
            while end < self.src.len() && self.src[end].is_ascii_digit() {
                end += 1;
            }
        }
        if end < self.src.len() && (self.src[end] == b'e' || self.src[end] == b'E') {
            let mut probe = end + 1;
            if probe < self.src.len() && (self.src[probe] == b'+' || self.src[probe] == b'-') {
                probe += 1;
            }
            if probe < self.src.len() && self.src[probe].is_ascii_digit() {
                end = probe;
                while end < self.src.len() && self.src[end].is_ascii_digit() {
                    end += 1;
                }
            }
        }
        let text = std::str::from_utf8(&self.src[start..end]).expect("ascii digits");
        let value: f64 = text.parse().map_err(|_| ParseError {
            offset: start,
            expected: vec!["number"],
            found: format!("`{text}`"),
        })?;
        self.pos = end;
        Ok((Token::Num(value), start))
    }

    fn lex_ident(&mut self, start: usize) -> Result<(Token, usize), ParseError> {
        let mut end = self.pos;
        while end < self.src.len()
            && (self.src[end].is_ascii_alphanumeric() || self.src[end] == b'_')
        {
            end += 1;
        }
        let text = std::str::from_utf8(&self.src[start..end]).expect("ascii ident").to_owned();
        self.pos = end;
        Ok((Token::Ident(text), start))
    }
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    cursor: usize,
}

impl Parser {
    fn peek(&self) -> &(Token, usize) {
        &self.tokens[self.cursor]
    }

    fn bump(&mut self) -> (Token, usize) {
        let t = self.tokens[self.cursor].clone();
        if self.cursor + 1 < self.tokens.len() {
            self.cursor += 1;
        }
        t
    }

    fn expect(&mut self, want: &Token, what: &'static str) -> Result<(), ParseError> {
        let (tok, off) = self.peek().clone();
        if &tok == want {
            self.bump();
            Ok(())
        } else {
            Err(ParseError { offset: off, expected: vec![what], found: tok.describe() })
        }
    }

    fn parse_expr(&mut self, min_bp: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_prefix()?;
        loop {
            let (op_bp, right_assoc) = match self.peek().0 {
                Token::Plus | Token::Minus => (10u8, false),
                Token::Star | Token::Slash => (20, false),
                Token::Caret => (30, true),
                _ => break,
            };
            if op_bp < min_bp {
                break;
            }
            let (op, _) = self.bump();
            let next_min = if right_assoc { op_bp } else { op_bp + 1 };
            let rhs = self.parse_expr(next_min)?;
            lhs = match op {
                Token::Plus => Expr::Add(Box::new(lhs), Box::new(rhs)),
                Token::Minus => Expr::Sub(Box::new(lhs), Box::new(rhs)),
                Token::Star => Expr::Mul(Box::new(lhs), Box::new(rhs)),
                Token::Slash => Expr::Div(Box::new(lhs), Box::new(rhs)),
                Token::Caret => Expr::Pow(Box::new(lhs), Box::new(rhs)),
                _ => unreachable!(),
            };
        }
        Ok(lhs)
    }

    fn parse_prefix(&mut self) -> Result<Expr, ParseError> {
        let (tok, off) = self.bump();
        match tok {
            Token::Num(v) => Ok(Expr::Num(v)),
            Token::Minus => {
                // Unary minus binds tighter than * / but looser than ^.
                let operand = self.parse_expr(26)?;
                Ok(Expr::Neg(Box::new(operand)))
            }
            Token::LParen => {
                let inner = self.parse_expr(0)?;
                self.expect(&Token::RParen, "`)`")?;
                Ok(inner)
            }
            Token::Ident(name) => self.parse_ident(name, off),
            other => Err(ParseError {
                offset: off,
                expected: vec!["number", "`x`", "function name", "`(`", "`-`"],
                found: other.describe(),
            }),
        }
    }

    fn parse_ident(&mut self, name: String, off: usize) -> Result<Expr, ParseError> {
        if name == "x" {
            return Ok(Expr::Var);
        }
        let func = match name.as_str() {
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            "sqrt" => Some(Func::Sqrt),
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "abs" => Some(Func::Abs),
            "pow" => None,
            _ => {
                return Err(ParseError {
                    offset: off,
                    expected: vec!["`x`", "exp", "log", "sqrt", "sin", "cos", "abs", "pow"],
                    found: format!("identifier `{name}`"),
                })
            }
        };
        self.expect(&Token::LParen, "`(`")?;
        let first = self.parse_expr(0)?;
        match func {
            Some(f) => {
                self.expect(&Token::RParen, "`)`")?;
                Ok(Expr::Fun(f, Box::new(first)))
            }
            None => {
                self.expect(&Token::Comma, "`,`")?;
                let second = self.parse_expr(0)?;
                self.expect(&Token::RParen, "`)`")?;
                Ok(Expr::Pow(Box::new(first), Box::new(second)))
            }
        }
    }
}

/// Parses `src` into an AST. The grammar is total: any input yields either an
/// AST or a position-annotated error, never a panic.
pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let mut lexer = Lexer::new(src);
    let mut tokens = Vec::new();
    loop {
        let (tok, off) = lexer.next_token()?;
        let done = tok == Token::Eof;
        tokens.push((tok, off));
        if done {
            break;
        }
    }
    let mut parser = Parser { tokens, cursor: 0 };
    let expr = parser.parse_expr(0)?;
    let (trailing, off) = parser.peek().clone();
    if trailing != Token::Eof {
        return Err(ParseError {
            offset: off,
            expected: vec!["operator", "end of input"],
            found: trailing.describe(),
        });
    }
    Ok(expr)
}

impl Expr {
    /// Evaluates at `x`. Non-finite intermediate results and domain
    /// violations (log/sqrt of negatives, fractional powers of negatives)
    /// are reported as errors rather than propagated as NaN.
    pub fn eval(&self, x: f64) -> Result<f64, EvalError> {
        let err = |node: &Expr, reason| EvalError { node: node.to_string(), reason, at_x: x };
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var => x,
            Expr::Neg(e) => -e.eval(x)?,
            Expr::Add(l, r) => l.eval(x)? + r.eval(x)?,
            Expr::Sub(l, r) => l.eval(x)? - r.eval(x)?,
            Expr::Mul(l, r) => l.eval(x)? * r.eval(x)?,
            Expr::Div(l, r) => {
                let denom = r.eval(x)?;
                if denom == 0.0 {
                    return Err(err(self, "division by zero"));
                }
                l.eval(x)? / denom
            }
            Expr::Pow(b, e) => {
                let base = b.eval(x)?;
                let exponent = e.eval(x)?;
                if base < 0.0 && exponent.fract() != 0.0 {
                    return Err(err(self, "fractional power of a negative base"));
                }
                base.powf(exponent)
            }
            Expr::Fun(f, a) => {
                let arg = a.eval(x)?;
                match f {
                    Func::Exp => arg.exp(),
                    Func::Log => {
                        if arg <= 0.0 {
                            return Err(err(self, "log of a non-positive argument"));
                        }
                        arg.ln()
                    }
                    Func::Sqrt => {
                        if arg < 0.0 {
                            return Err(err(self, "sqrt of a negative argument"));
                        }
                        arg.sqrt()
                    }
                    Func::Sin => arg.sin(),
                    Func::Cos => arg.cos(),
                    Func::Abs => arg.abs(),
                }
            }
        };
        if !v.is_finite() {
            return Err(err(self, "non-finite result"));
        }
        Ok(v)
    }

    /// Central difference (f(x+h) - f(x-h)) / (2h).
    pub fn diff_num(&self, x: f64, h: f64) -> Result<f64, EvalError> {
        Ok((self.eval(x + h)? - self.eval(x - h)?) / (2.0 * h))
    }

    /// Default step for [`Self::diff_num`].
    pub fn default_diff_step(x: f64) -> f64 {
        1e-5 * x.abs().max(1.0)
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 10,
            Expr::Mul(..) | Expr::Div(..) => 20,
            Expr::Neg(..) => 25,
            Expr::Pow(..) => 30,
            Expr::Num(_) | Expr::Var | Expr::Fun(..) => 100,
        }
    }

    fn write_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let prec = self.precedence();
        if prec < min {
            write!(f, "(")?;
        }
        match self {
            Expr::Num(v) => write!(f, "{v:?}")?,
            Expr::Var => write!(f, "x")?,
            Expr::Neg(e) => {
                write!(f, "-")?;
                e.write_prec(f, 26)?;
            }
            Expr::Add(l, r) => {
                l.write_prec(f, 10)?;
                write!(f, "+")?;
                r.write_prec(f, 11)?;
            }
            Expr::Sub(l, r) => {
                l.write_prec(f, 10)?;
                write!(f, "-")?;
                r.write_prec(f, 11)?;
            }
            Expr::Mul(l, r) => {
                l.write_prec(f, 20)?;
                write!(f, "*")?;
                r.write_prec(f, 21)?;
            }
            Expr::Div(l, r) => {
                l.write_prec(f, 20)?;
                write!(f, "/")?;
                r.write_prec(f, 21)?;
            }
            Expr::Pow(l, r) => {
                l.write_prec(f, 31)?;
                write!(f, "^")?;
                r.write_prec(f, 30)?;
            }
            Expr::Fun(func, a) => {
                write!(f, "{}(", func.name())?;
                a.write_prec(f, 0)?;
                write!(f, ")")?;
            }
        }
        if prec < min {
            write!(f, ")")?;
        }
        Ok(())
    }
}

/// Canonical printer; `parse(print(parse(s))) == parse(s)`.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_prec(f, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grammar_shapes() {
        assert_eq!(
            parse("x^1.5").unwrap(),
            Expr::Pow(Box::new(Expr::Var), Box::new(Expr::Num(1.5)))
        );
        assert_eq!(parse("0.5").unwrap(), Expr::Num(0.5));
        let e = parse("x^2*exp(-x)").unwrap();
        let v = e.eval(1.0).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn precedence_and_associativity() {
        // Right-associative power: 2^3^2 = 2^9.
        assert_eq!(parse("2^3^2").unwrap().eval(0.0).unwrap(), 512.0);
        // Unary minus binds looser than ^.
        assert_eq!(parse("-2^2").unwrap().eval(0.0).unwrap(), -4.0);
        assert_eq!(parse("1-2-3").unwrap().eval(0.0).unwrap(), -4.0);
        assert_eq!(parse("2*3+4").unwrap().eval(0.0).unwrap(), 10.0);
        assert_eq!(parse("pow(x,2)").unwrap(), parse("x^2").unwrap());
    }

    #[test]
    fn eval_basics() {
        assert_eq!(parse("x").unwrap().eval(3.5).unwrap(), 3.5);
        assert_eq!(parse("sqrt(x)").unwrap().eval(4.0).unwrap(), 2.0);
        assert!(parse("log(x)").unwrap().eval(-1.0).is_err());
        let err = parse("log(x)").unwrap().eval(-1.0).unwrap_err();
        assert!(err.node.contains("log"));
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        let e = parse("x + * 2").unwrap_err();
        assert_eq!(e.offset, 4);
        assert!(!e.expected.is_empty());
        let e = parse("foo(x)").unwrap_err();
        assert_eq!(e.offset, 0);
        let e = parse("(x").unwrap_err();
        assert_eq!(e.offset, 2);
    }

    #[test]
    fn numeric_differentiation() {
        let e = parse("x^2").unwrap();
        assert!((e.diff_num(1.0, 1e-4).unwrap() - 2.0).abs() < 1e-7);
        let c = parse("5").unwrap();
        assert_eq!(c.diff_num(2.0, 1e-4).unwrap(), 0.0);
        let ex = parse("exp(x)").unwrap();
        assert!((ex.diff_num(0.0, 1e-4).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn print_parse_round_trip() {
        for src in [
            "x^1.5",
            "-x^2",
            "-(x*exp(-x))",
            "1-2-3",
            "x/(1+x)",
            "2^3^2",
            "pow(x,2)+abs(x-1)",
            "sqrt(x)*sin(x)/cos(x)",
        ] {
            let ast = parse(src).unwrap();
            let printed = ast.to_string();
            let reparsed = parse(&printed).unwrap();
            assert_eq!(ast, reparsed, "src `{src}` printed `{printed}`");
        }
    }
}
