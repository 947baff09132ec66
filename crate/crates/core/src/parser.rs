//! The `.theta` identity language.
//!
//! ```text
//! vars a b
//! (a,-b,q/a,-q/b;q) + (-a,b,-q/a,q/b;q) = 2*(q;q^2)^-2*(a*b,q^2/(a*b),a*q/b,b*q/a;q^2)
//! ```
//!
//! The first line declares the variables. The rest is `expr = expr`, where
//! an expression is a signed sum of products. Factors are rational
//! constants, monomials in the variables and `q`, Pochhammer lists
//! `(x1,...,xn;q^t)` (each entry one `(x;q^t)_inf`) and theta brackets
//! `[x1,...,xn;q^t]` (each entry one `(x,q^t/x;q^t)_inf`). `/` inside a
//! product means a negative exponent. `#` starts a comment.

use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::linalg::{fmt_rat, rat, Rational};
use crate::model::{
    pair_pochhammers, FactorStyle, Identity, ModelError, PochQuotient, QMonomial, ThetaFactor,
    ThetaTerm,
};

/// Byte range `start..end` into the parsed text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
}

impl SourceSpan {
    fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    fn join(self, other: SourceSpan) -> Self {
        Self::new(self.start.min(other.start), self.end.max(other.end))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnexpectedToken,
    BadExponent,
    UnknownVariable,
    EmptyProduct,
    UnbalancedDelimiter,
    /// The product is well formed but not a theta term (e.g. an unpaired
    /// Pochhammer symbol in a variable).
    InvalidTerm,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub span: SourceSpan,
    pub kind: ParseErrorKind,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?} at bytes {}..{}: {}",
            self.kind, self.span.start, self.span.end, self.message
        )
    }
}

impl std::error::Error for ParseError {}

impl ParseError {
    fn new(kind: ParseErrorKind, span: SourceSpan, message: impl Into<String>) -> Self {
        Self {
            span,
            kind,
            message: message.into(),
        }
    }

    /// One-line location such as `line 2, column 7`.
    pub fn location(&self, text: &str) -> String {
        let upto = &text[..self.span.start.min(text.len())];
        let line = upto.matches('\n').count() + 1;
        let col = upto.rfind('\n').map_or(upto.len(), |p| upto.len() - p - 1) + 1;
        format!("line {line}, column {col}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(BigInt),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Equals,
    Arrow,
    Newline,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Int(n) => format!("number `{n}`"),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of input".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Equals => "`=`".into(),
            Tok::Arrow => "`=>`".into(),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, SourceSpan)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let single = |t: Tok| (t, SourceSpan::new(start, start + 1));
        match c {
            b' ' | b'\t' | b'\r' => i += 1,
            b'#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'\n' => {
                out.push(single(Tok::Newline));
                i += 1;
            }
            b'0'..=b'9' => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let n: BigInt = text[start..i].parse().expect("digits parse");
                out.push((Tok::Int(n), SourceSpan::new(start, i)));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), SourceSpan::new(start, i)));
            }
            b'=' if bytes.get(i + 1) == Some(&b'>') => {
                out.push((Tok::Arrow, SourceSpan::new(start, start + 2)));
                i += 2;
            }
            _ => {
                let tok = match c {
                    b'+' => Tok::Plus,
                    b'-' => Tok::Minus,
                    b'*' => Tok::Star,
                    b'/' => Tok::Slash,
                    b'^' => Tok::Caret,
                    b'(' => Tok::LParen,
                    b')' => Tok::RParen,
                    b'[' => Tok::LBracket,
                    b']' => Tok::RBracket,
                    b',' => Tok::Comma,
                    b';' => Tok::Semi,
                    b'=' => Tok::Equals,
                    _ => {
                        // Step over a whole UTF-8 character for the span.
                        let len = text[start..].chars().next().map_or(1, |ch| ch.len_utf8());
                        return Err(ParseError::new(
                            ParseErrorKind::UnexpectedToken,
                            SourceSpan::new(start, start + len),
                            format!("unexpected character `{}`", &text[start..start + len]),
                        ));
                    }
                };
                out.push(single(tok));
                i += 1;
            }
        }
    }
    out.push((Tok::Eof, SourceSpan::new(text.len(), text.len())));
    Ok(out)
}

/// A monomial with its rational constant: `coeff * mono`.
#[derive(Debug, Clone)]
struct ScaledMono {
    coeff: Rational,
    mono: QMonomial,
}

impl ScaledMono {
    fn one(r: usize) -> Self {
        Self {
            coeff: Rational::one(),
            mono: QMonomial::one(r),
        }
    }

    fn mul(&self, other: &ScaledMono) -> ScaledMono {
        ScaledMono {
            coeff: &self.coeff * &other.coeff,
            mono: self.mono.mul(&other.mono),
        }
    }

    fn pow(&self, e: &Rational, span: SourceSpan) -> Result<ScaledMono, ParseError> {
        if e.is_integer() {
            let k = e
                .to_integer()
                .to_i32()
                .ok_or_else(|| ParseError::new(ParseErrorKind::BadExponent, span, "exponent too large"))?;
            if self.coeff.is_zero() && k < 0 {
                return Err(ParseError::new(ParseErrorKind::BadExponent, span, "zero to a negative power"));
            }
            let coeff = num_traits::pow::Pow::pow(&self.coeff, k);
            let sign = if self.mono.sign < 0 && k % 2 != 0 { -1 } else { 1 };
            Ok(ScaledMono {
                coeff,
                mono: QMonomial {
                    sign,
                    qexp: &self.mono.qexp * e,
                    aexp: self.mono.aexp.iter().map(|a| a * k as i64).collect(),
                },
            })
        } else {
            if !self.coeff.is_one() || self.mono.sign < 0 || !self.mono.is_a_free() {
                return Err(ParseError::new(
                    ParseErrorKind::BadExponent,
                    span,
                    "only powers of q may carry fractional exponents",
                ));
            }
            Ok(ScaledMono {
                coeff: Rational::one(),
                mono: QMonomial {
                    sign: 1,
                    qexp: &self.mono.qexp * e,
                    aexp: self.mono.aexp.clone(),
                },
            })
        }
    }

    /// Folds the constant into the sign; fails unless the constant is +-1.
    fn into_symbol(self, span: SourceSpan) -> Result<QMonomial, ParseError> {
        let mut m = self.mono;
        if self.coeff == rat(-1) {
            m.sign = -m.sign;
        } else if !self.coeff.is_one() {
            return Err(ParseError::new(
                ParseErrorKind::InvalidTerm,
                span,
                "Pochhammer arguments may only carry a sign, not a constant",
            ));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone)]
enum Factor {
    Mono(ScaledMono),
    Poch {
        symbols: Vec<QMonomial>,
        modulus: Rational,
    },
    Bracket {
        symbols: Vec<QMonomial>,
        modulus: Rational,
    },
}

/// Accumulates one product before it is turned into a `ThetaTerm`.
struct TermBuilder {
    scalar: ScaledMono,
    /// (modulus, symbol) in source order, positive multiplicity only.
    symbols: Vec<(Rational, QMonomial)>,
    poch: PochQuotient,
    brackets: Vec<ThetaFactor>,
    style: Option<FactorStyle>,
}

struct Parser<'a> {
    toks: Vec<(Tok, SourceSpan)>,
    pos: usize,
    vars: Vec<String>,
    text: &'a str,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Result<Self, ParseError> {
        Ok(Self {
            toks: lex(text)?,
            pos: 0,
            vars: Vec::new(),
            text,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn span(&self) -> SourceSpan {
        self.toks[self.pos].1
    }

    fn prev_span(&self) -> SourceSpan {
        self.toks[self.pos.saturating_sub(1)].1
    }

    fn bump(&mut self) -> (Tok, SourceSpan) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn skip_newlines(&mut self) {
        while *self.peek() == Tok::Newline {
            self.bump();
        }
    }

    fn unexpected(&self, wanted: &str) -> ParseError {
        let (tok, span) = &self.toks[self.pos];
        let kind = match tok {
            Tok::Eof | Tok::RParen | Tok::RBracket => ParseErrorKind::UnbalancedDelimiter,
            _ => ParseErrorKind::UnexpectedToken,
        };
        let kind = if matches!(tok, Tok::Eof) && !self.open_delims_balanced() {
            ParseErrorKind::UnbalancedDelimiter
        } else if matches!(tok, Tok::Eof) {
            ParseErrorKind::UnexpectedToken
        } else {
            kind
        };
        ParseError::new(kind, *span, format!("expected {wanted}, found {}", tok.describe()))
    }

    fn open_delims_balanced(&self) -> bool {
        let mut depth = 0i64;
        for (t, _) in &self.toks[..self.pos] {
            match t {
                Tok::LParen | Tok::LBracket => depth += 1,
                Tok::RParen | Tok::RBracket => depth -= 1,
                _ => {}
            }
        }
        depth == 0
    }

    fn expect(&mut self, tok: Tok, wanted: &str) -> Result<SourceSpan, ParseError> {
        if *self.peek() == tok {
            Ok(self.bump().1)
        } else {
            Err(self.unexpected(wanted))
        }
    }

    fn expect_close(&mut self, close: Tok, open_span: SourceSpan) -> Result<SourceSpan, ParseError> {
        if *self.peek() == close {
            return Ok(self.bump().1);
        }
        let (tok, span) = self.toks[self.pos].clone();
        let kind = match tok {
            Tok::Eof | Tok::RParen | Tok::RBracket | Tok::Newline => ParseErrorKind::UnbalancedDelimiter,
            _ => ParseErrorKind::UnexpectedToken,
        };
        let wanted = if close == Tok::RParen { "`)`" } else { "`]`" };
        Err(ParseError::new(
            kind,
            span.join(open_span),
            format!("expected {wanted} to close delimiter, found {}", tok.describe()),
        ))
    }

    /// `vars ident+` followed by a newline.
    fn header(&mut self) -> Result<(), ParseError> {
        self.skip_newlines();
        match self.bump() {
            (Tok::Ident(s), _) if s == "vars" => {}
            (t, span) => {
                return Err(ParseError::new(
                    ParseErrorKind::UnexpectedToken,
                    span,
                    format!("expected `vars` header, found {}", t.describe()),
                ))
            }
        }
        while let Tok::Ident(name) = self.peek().clone() {
            let span = self.span();
            if name == "q" || name == "vars" {
                return Err(ParseError::new(
                    ParseErrorKind::UnexpectedToken,
                    span,
                    format!("`{name}` cannot be a variable name"),
                ));
            }
            if self.vars.contains(&name) {
                return Err(ParseError::new(
                    ParseErrorKind::UnexpectedToken,
                    span,
                    format!("variable `{name}` declared twice"),
                ));
            }
            self.vars.push(name);
            self.bump();
        }
        if self.vars.is_empty() {
            return Err(self.unexpected("at least one variable name"));
        }
        match self.peek() {
            Tok::Newline => {
                self.skip_newlines();
                Ok(())
            }
            Tok::Eof => Ok(()),
            _ => Err(self.unexpected("end of line after the `vars` header")),
        }
    }

    fn r(&self) -> usize {
        self.vars.len()
    }

    /// `^` exponent: `int`, `-int`, or `(int/int)` with optional sign.
    fn exponent(&mut self) -> Result<(Rational, SourceSpan), ParseError> {
        let start = self.span();
        let neg = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        let value = match self.bump() {
            (Tok::Int(n), _) => Rational::from_integer(n),
            (Tok::LParen, open) => {
                let inner_neg = if *self.peek() == Tok::Minus {
                    self.bump();
                    true
                } else {
                    false
                };
                let num = match self.bump() {
                    (Tok::Int(n), _) => n,
                    (t, span) => {
                        return Err(ParseError::new(
                            ParseErrorKind::BadExponent,
                            span,
                            format!("expected an integer exponent, found {}", t.describe()),
                        ))
                    }
                };
                let den = if *self.peek() == Tok::Slash {
                    self.bump();
                    match self.bump() {
                        (Tok::Int(d), span) => {
                            if d.is_zero() {
                                return Err(ParseError::new(ParseErrorKind::BadExponent, span, "zero denominator"));
                            }
                            d
                        }
                        (t, span) => {
                            return Err(ParseError::new(
                                ParseErrorKind::BadExponent,
                                span,
                                format!("expected a denominator, found {}", t.describe()),
                            ))
                        }
                    }
                } else {
                    BigInt::one()
                };
                self.expect_close(Tok::RParen, open)?;
                let v = Rational::new(num, den);
                if inner_neg {
                    -v
                } else {
                    v
                }
            }
            (t, span) => {
                return Err(ParseError::new(
                    ParseErrorKind::BadExponent,
                    span,
                    format!("expected an exponent, found {}", t.describe()),
                ))
            }
        };
        let span = start.join(self.prev_span());
        Ok((if neg { -value } else { value }, span))
    }

    /// Monomial inside a Pochhammer list or a parenthesised group:
    /// `["-"] mfactor (("*"|"/") mfactor)*`.
    fn mono(&mut self) -> Result<(ScaledMono, SourceSpan), ParseError> {
        let start = self.span();
        let mut acc = ScaledMono::one(self.r());
        if *self.peek() == Tok::Minus {
            self.bump();
            acc.coeff = -acc.coeff;
        } else if *self.peek() == Tok::Plus {
            self.bump();
        }
        let first = self.mono_factor()?;
        acc = acc.mul(&first);
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    let f = self.mono_factor()?;
                    acc = acc.mul(&f);
                }
                Tok::Slash => {
                    let span = self.bump().1;
                    let f = self.mono_factor()?;
                    acc = acc.mul(&f.pow(&rat(-1), span)?);
                }
                _ => break,
            }
        }
        Ok((acc, start.join(self.prev_span())))
    }

    fn mono_factor(&mut self) -> Result<ScaledMono, ParseError> {
        let (base, span) = self.mono_primary()?;
        self.maybe_power(base, span)
    }

    fn maybe_power(&mut self, base: ScaledMono, span: SourceSpan) -> Result<ScaledMono, ParseError> {
        if *self.peek() == Tok::Caret {
            self.bump();
            let (e, espan) = self.exponent()?;
            base.pow(&e, span.join(espan))
        } else {
            Ok(base)
        }
    }

    fn mono_primary(&mut self) -> Result<(ScaledMono, SourceSpan), ParseError> {
        let r = self.r();
        match self.bump() {
            (Tok::Int(n), span) => Ok((
                ScaledMono {
                    coeff: Rational::from_integer(n),
                    mono: QMonomial::one(r),
                },
                span,
            )),
            (Tok::Ident(name), span) => Ok((self.variable(&name, span)?, span)),
            (Tok::LParen, open) => {
                let (m, _) = self.mono()?;
                let close = self.expect_close(Tok::RParen, open)?;
                Ok((m, open.join(close)))
            }
            (t, span) => {
                let kind = if matches!(t, Tok::Eof | Tok::RParen | Tok::RBracket) {
                    ParseErrorKind::UnbalancedDelimiter
                } else {
                    ParseErrorKind::UnexpectedToken
                };
                let kind = if t == Tok::Eof && self.open_delims_balanced() {
                    ParseErrorKind::UnexpectedToken
                } else {
                    kind
                };
                Err(ParseError::new(kind, span, format!("expected a monomial, found {}", t.describe())))
            }
        }
    }

    fn variable(&self, name: &str, span: SourceSpan) -> Result<ScaledMono, ParseError> {
        let mut m = ScaledMono::one(self.r());
        if name == "q" {
            m.mono.qexp = Rational::one();
            return Ok(m);
        }
        match self.vars.iter().position(|v| v == name) {
            Some(j) => {
                m.mono.aexp[j] = 1;
                Ok(m)
            }
            None => Err(ParseError::new(
                ParseErrorKind::UnknownVariable,
                span,
                format!("`{name}` is not a declared variable"),
            )),
        }
    }

    /// The `q^t` after `;` in a list.
    fn modulus(&mut self) -> Result<Rational, ParseError> {
        let (m, span) = self.mono()?;
        if !m.coeff.is_one() || m.mono.sign < 0 || !m.mono.is_a_free() || !m.mono.qexp.is_positive() {
            return Err(ParseError::new(
                ParseErrorKind::BadExponent,
                span,
                "modulus must be a positive power of q",
            ));
        }
        Ok(m.mono.qexp)
    }

    /// After `(` or `[`: a monomial list, then either `;` modulus or (for a
    /// parenthesised group) the closing `)`.
    fn group(&mut self, open: SourceSpan, bracket: bool) -> Result<(Factor, SourceSpan), ParseError> {
        let close_tok = if bracket { Tok::RBracket } else { Tok::RParen };
        if *self.peek() == Tok::Semi || *self.peek() == close_tok {
            return Err(ParseError::new(
                ParseErrorKind::EmptyProduct,
                open.join(self.span()),
                "empty product",
            ));
        }
        let mut entries = Vec::new();
        loop {
            entries.push(self.mono()?);
            if *self.peek() == Tok::Comma {
                self.bump();
                continue;
            }
            break;
        }
        if *self.peek() == Tok::Semi {
            self.bump();
            let modulus = self.modulus()?;
            let close = self.expect_close(close_tok, open)?;
            let mut symbols = Vec::with_capacity(entries.len());
            for (m, span) in entries {
                symbols.push(m.into_symbol(span)?);
            }
            let f = if bracket {
                Factor::Bracket { symbols, modulus }
            } else {
                Factor::Poch { symbols, modulus }
            };
            return Ok((f, open.join(close)));
        }
        if bracket || entries.len() != 1 {
            return Err(self.unexpected("`;` followed by the modulus"));
        }
        let close = self.expect_close(Tok::RParen, open)?;
        Ok((Factor::Mono(entries.pop().expect("one entry").0), open.join(close)))
    }

    fn term_primary(&mut self) -> Result<(Factor, SourceSpan), ParseError> {
        let r = self.r();
        match self.bump() {
            (Tok::Int(n), span) => Ok((
                Factor::Mono(ScaledMono {
                    coeff: Rational::from_integer(n),
                    mono: QMonomial::one(r),
                }),
                span,
            )),
            (Tok::Ident(name), span) => Ok((Factor::Mono(self.variable(&name, span)?), span)),
            (Tok::LParen, open) => self.group(open, false),
            (Tok::LBracket, open) => self.group(open, true),
            (t, span) => {
                let kind = if matches!(t, Tok::RParen | Tok::RBracket) {
                    ParseErrorKind::UnbalancedDelimiter
                } else {
                    ParseErrorKind::UnexpectedToken
                };
                Err(ParseError::new(kind, span, format!("expected a factor, found {}", t.describe())))
            }
        }
    }

    /// One factor with optional power, applied to the builder with exponent
    /// sign `dir` (+1 for `*`, -1 for `/`).
    fn term_factor(&mut self, b: &mut TermBuilder, dir: i64) -> Result<(), ParseError> {
        let (f, span) = self.term_primary()?;
        let (e, espan) = if *self.peek() == Tok::Caret {
            self.bump();
            self.exponent()?
        } else {
            (Rational::one(), span)
        };
        let e = e * rat(dir);
        let span = span.join(espan);
        match f {
            Factor::Mono(m) => {
                b.scalar = b.scalar.mul(&m.pow(&e, span)?);
            }
            Factor::Poch { symbols, modulus } => {
                let k = int_exponent(&e, span)?;
                if k > 0 {
                    for _ in 0..k {
                        b.symbols.extend(symbols.iter().map(|s| (modulus.clone(), s.clone())));
                    }
                    b.style.get_or_insert(FactorStyle::Pochhammer);
                } else if k < 0 {
                    if symbols.iter().any(|s| !s.is_a_free()) {
                        return Err(ParseError::new(
                            ParseErrorKind::BadExponent,
                            span,
                            "Pochhammer symbols in the variables cannot appear in a denominator",
                        ));
                    }
                    let (_, pq) = pair_pochhammers(&symbols, &modulus).map_err(|e| model_err(e, span))?;
                    b.poch.merge(&pq.pow(k));
                }
            }
            Factor::Bracket { symbols, modulus } => {
                let k = int_exponent(&e, span)?;
                if k < 0 {
                    return Err(ParseError::new(
                        ParseErrorKind::BadExponent,
                        span,
                        "theta brackets cannot appear in a denominator",
                    ));
                }
                for _ in 0..k {
                    for s in &symbols {
                        if s.is_a_free() {
                            let pair = [s.clone(), s.partner(&modulus)];
                            let (_, pq) = pair_pochhammers(&pair, &modulus).map_err(|e| model_err(e, span))?;
                            b.poch.merge(&pq);
                        } else {
                            b.brackets.push(ThetaFactor::new(
                                if s.sign < 0 { 1 } else { 0 },
                                s.aexp.clone(),
                                s.qexp.clone(),
                                modulus.clone(),
                            ));
                        }
                    }
                }
                if k > 0 {
                    b.style.get_or_insert(FactorStyle::Bracket);
                }
            }
        }
        Ok(())
    }

    /// Product of factors; `None` for a literal zero term.
    fn term(&mut self, negate: bool) -> Result<Option<ThetaTerm>, ParseError> {
        let start = self.span();
        let mut b = TermBuilder {
            scalar: ScaledMono::one(self.r()),
            symbols: Vec::new(),
            poch: PochQuotient::new(),
            brackets: Vec::new(),
            style: None,
        };
        self.term_factor(&mut b, 1)?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    self.term_factor(&mut b, 1)?;
                }
                Tok::Slash => {
                    self.bump();
                    self.term_factor(&mut b, -1)?;
                }
                _ => break,
            }
        }
        let span = start.join(self.prev_span());
        if b.scalar.coeff.is_zero() {
            return Ok(None);
        }
        let r = self.r();
        let mut factors = Vec::new();
        let mut poch = b.poch;
        // Pair per modulus, moduli in order of first appearance.
        let mut moduli: Vec<Rational> = Vec::new();
        for (t, _) in &b.symbols {
            if !moduli.contains(t) {
                moduli.push(t.clone());
            }
        }
        for t in &moduli {
            let syms: Vec<QMonomial> = b
                .symbols
                .iter()
                .filter(|(m, _)| m == t)
                .map(|(_, s)| s.clone())
                .collect();
            let (fs, pq) = pair_pochhammers(&syms, t).map_err(|e| model_err(e, span))?;
            factors.extend(fs);
            poch.merge(&pq);
        }
        factors.extend(b.brackets);
        if factors.is_empty() {
            return Err(ParseError::new(
                ParseErrorKind::EmptyProduct,
                span,
                "term has no theta factor in the variables",
            ));
        }
        let mut coeff = b.scalar.coeff;
        let mut mono = b.scalar.mono;
        if mono.sign < 0 {
            coeff = -coeff;
            mono.sign = 1;
        }
        if negate {
            coeff = -coeff;
        }
        debug_assert_eq!(mono.aexp.len(), r);
        Ok(Some(ThetaTerm {
            coeff,
            mono,
            poch,
            factors,
            style: b.style.unwrap_or_default(),
        }))
    }

    /// `["-"|"+"] term (("+"|"-") term)*`, negating everything if `negate`.
    fn expr(&mut self, negate: bool, out: &mut Vec<ThetaTerm>) -> Result<(), ParseError> {
        self.skip_newlines();
        let mut neg = negate;
        match self.peek() {
            Tok::Minus => {
                self.bump();
                neg = !neg;
            }
            Tok::Plus => {
                self.bump();
            }
            _ => {}
        }
        loop {
            self.skip_newlines();
            if let Some(t) = self.term(neg)? {
                out.push(t);
            }
            self.skip_newlines();
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    neg = negate;
                }
                Tok::Minus => {
                    self.bump();
                    neg = !negate;
                }
                _ => return Ok(()),
            }
        }
    }

    fn finish(&mut self) -> Result<(), ParseError> {
        self.skip_newlines();
        match self.peek() {
            Tok::Eof => Ok(()),
            Tok::RParen | Tok::RBracket => Err(ParseError::new(
                ParseErrorKind::UnbalancedDelimiter,
                self.span(),
                "unmatched closing delimiter",
            )),
            _ => Err(self.unexpected("end of input")),
        }
    }
}

fn int_exponent(e: &Rational, span: SourceSpan) -> Result<i64, ParseError> {
    if !e.is_integer() {
        return Err(ParseError::new(
            ParseErrorKind::BadExponent,
            span,
            "products of Pochhammer symbols need integer exponents",
        ));
    }
    e.to_integer()
        .to_i64()
        .filter(|k| k.abs() <= 64)
        .ok_or_else(|| ParseError::new(ParseErrorKind::BadExponent, span, "exponent out of range"))
}

fn model_err(e: ModelError, span: SourceSpan) -> ParseError {
    ParseError::new(ParseErrorKind::InvalidTerm, span, e.to_string())
}

/// Parses a `.theta` identity. Right-hand terms are negated so the result
/// asserts that the sum of its terms is zero.
pub fn parse_identity(text: &str) -> Result<Identity, ParseError> {
    let mut p = Parser::new(text)?;
    p.header()?;
    let mut terms = Vec::new();
    p.expr(false, &mut terms)?;
    p.skip_newlines();
    p.expect(Tok::Equals, "`=`")?;
    p.expr(true, &mut terms)?;
    p.finish()?;
    if terms.len() < 2 {
        return Err(ParseError::new(
            ParseErrorKind::EmptyProduct,
            SourceSpan::new(0, text.len()),
            "an identity needs at least two nonzero terms",
        ));
    }
    Ok(Identity {
        vars: p.vars.clone(),
        terms,
    })
}

/// Parses a file of candidate terms: a `vars` header and one term per
/// line.
pub fn parse_candidates(text: &str) -> Result<(Vec<String>, Vec<ThetaTerm>), ParseError> {
    let mut p = Parser::new(text)?;
    p.header()?;
    let mut terms = Vec::new();
    loop {
        p.skip_newlines();
        if *p.peek() == Tok::Eof {
            break;
        }
        let neg = if *p.peek() == Tok::Minus {
            p.bump();
            true
        } else {
            false
        };
        if let Some(t) = p.term(neg)? {
            terms.push(t);
        }
        match p.peek() {
            Tok::Newline | Tok::Eof => {}
            _ => return Err(p.unexpected("one term per line")),
        }
    }
    Ok((p.vars.clone(), terms))
}

/// A parsed relation line `(alpha) => ratio`, where the ratio monomial is
/// `theta(a q^alpha) / theta(a)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationSpec {
    pub alpha: Vec<Rational>,
    pub ratio: QMonomial,
}

/// Parses a relations file: a `vars` header, then lines
/// `(1,1,1) => 1/(a*b*c)`.
pub fn parse_relations(text: &str) -> Result<(Vec<String>, Vec<RelationSpec>), ParseError> {
    let mut p = Parser::new(text)?;
    p.header()?;
    let mut out = Vec::new();
    loop {
        p.skip_newlines();
        if *p.peek() == Tok::Eof {
            break;
        }
        let alpha = p.vector()?;
        if alpha.len() != p.r() {
            return Err(ParseError::new(
                ParseErrorKind::UnexpectedToken,
                p.prev_span(),
                format!("shift has {} entries, expected {}", alpha.len(), p.r()),
            ));
        }
        p.expect(Tok::Arrow, "`=>`")?;
        let (m, span) = p.mono()?;
        let ratio = m.into_symbol(span)?;
        out.push(RelationSpec { alpha, ratio });
        match p.peek() {
            Tok::Newline | Tok::Eof => {}
            _ => return Err(p.unexpected("end of line")),
        }
    }
    Ok((p.vars.clone(), out))
}

impl Parser<'_> {
    /// `( rational (, rational)* )`
    fn vector(&mut self) -> Result<Vec<Rational>, ParseError> {
        let open = self.expect(Tok::LParen, "`(`")?;
        let mut out = Vec::new();
        loop {
            let neg = if *self.peek() == Tok::Minus {
                self.bump();
                true
            } else {
                false
            };
            let num = match self.bump() {
                (Tok::Int(n), _) => n,
                (t, span) => {
                    return Err(ParseError::new(
                        ParseErrorKind::UnexpectedToken,
                        span,
                        format!("expected a number, found {}", t.describe()),
                    ))
                }
            };
            let mut v = Rational::from_integer(num);
            if *self.peek() == Tok::Slash {
                self.bump();
                match self.bump() {
                    (Tok::Int(d), span) => {
                        if d.is_zero() {
                            return Err(ParseError::new(ParseErrorKind::BadExponent, span, "zero denominator"));
                        }
                        v /= Rational::from_integer(d);
                    }
                    (t, span) => {
                        return Err(ParseError::new(
                            ParseErrorKind::UnexpectedToken,
                            span,
                            format!("expected a denominator, found {}", t.describe()),
                        ))
                    }
                }
            }
            out.push(if neg { -v } else { v });
            if *self.peek() == Tok::Comma {
                self.bump();
                continue;
            }
            break;
        }
        self.expect_close(Tok::RParen, open)?;
        Ok(out)
    }

    #[allow(dead_code)]
    fn source(&self) -> &str {
        self.text
    }
}

/// Parses `(1,-2,1/2)` into a rational vector.
pub fn parse_vector(text: &str) -> Result<Vec<Rational>, ParseError> {
    let mut p = Parser::new(text)?;
    p.skip_newlines();
    let v = p.vector()?;
    p.finish()?;
    Ok(v)
}

/// Parses a list of vectors separated by `;`, commas-with-parentheses or
/// newlines, e.g. `(1,1);(0,2)`.
pub fn parse_vector_list(text: &str) -> Result<Vec<Vec<Rational>>, ParseError> {
    let mut p = Parser::new(text)?;
    let mut out = Vec::new();
    loop {
        while matches!(p.peek(), Tok::Newline | Tok::Semi) {
            p.bump();
        }
        if *p.peek() == Tok::Eof {
            break;
        }
        out.push(p.vector()?);
        match p.peek() {
            Tok::Newline | Tok::Semi | Tok::Eof => {}
            _ => return Err(p.unexpected("`;` or end of line between vectors")),
        }
    }
    Ok(out)
}

/// Shifts file: one parenthesised vector per line, `#` comments.
pub fn parse_shifts(text: &str) -> Result<Vec<Vec<Rational>>, ParseError> {
    parse_vector_list(text)
}

fn fmt_q_power(e: &Rational) -> String {
    if e.is_one() {
        "q".to_string()
    } else if e.is_integer() {
        format!("q^{}", e.numer())
    } else {
        format!("q^({}/{})", e.numer(), e.denom())
    }
}

fn fmt_var_power(name: &str, e: i64) -> String {
    if e == 1 {
        name.to_string()
    } else {
        format!("{name}^{e}")
    }
}

/// Formats `mono` (ignoring its sign) as `a*q/b`, `q^2/(a*b)` or `1`.
pub fn format_mono_body(mono: &QMonomial, vars: &[String]) -> String {
    let mut num = Vec::new();
    let mut den = Vec::new();
    for (j, &e) in mono.aexp.iter().enumerate() {
        if e > 0 {
            num.push(fmt_var_power(&vars[j], e));
        } else if e < 0 {
            den.push(fmt_var_power(&vars[j], -e));
        }
    }
    if mono.qexp.is_positive() {
        num.push(fmt_q_power(&mono.qexp));
    } else if mono.qexp.is_negative() {
        den.push(fmt_q_power(&-mono.qexp.clone()));
    }
    let n = if num.is_empty() {
        "1".to_string()
    } else {
        num.join("*")
    };
    match den.len() {
        0 => n,
        1 => format!("{n}/{}", den[0]),
        _ => format!("{n}/({})", den.join("*")),
    }
}

/// Formats a signed monomial such as `-q/a`.
pub fn format_mono(mono: &QMonomial, vars: &[String]) -> String {
    let body = format_mono_body(mono, vars);
    if mono.sign < 0 {
        format!("-{body}")
    } else {
        body
    }
}

fn format_modulus(t: &Rational) -> String {
    fmt_q_power(t)
}

/// Canonical text for a term; re-parses to an equal term.
pub fn format_term(term: &ThetaTerm, vars: &[String]) -> String {
    let mut parts: Vec<String> = Vec::new();
    let c = term.signed_coeff();
    let mut prefix = String::new();
    let abs = c.abs();
    if c.is_negative() {
        prefix.push('-');
    }
    if !abs.is_one() {
        parts.push(fmt_rat(&abs));
    }
    let mono = QMonomial {
        sign: 1,
        ..term.mono.clone()
    };
    if mono != QMonomial::one(vars.len()) {
        parts.push(format_mono_body(&mono, vars));
    }
    for (s, t, e) in term.poch.iter() {
        let base = format!("({};{})", fmt_q_power(s), format_modulus(t));
        parts.push(if e == 1 { base } else { format!("{base}^{e}") });
    }
    let mut moduli: Vec<&Rational> = Vec::new();
    for f in &term.factors {
        if !moduli.contains(&&f.t) {
            moduli.push(&f.t);
        }
    }
    for t in moduli {
        let group: Vec<&ThetaFactor> = term.factors.iter().filter(|f| &f.t == t).collect();
        let entries: Vec<String> = match term.style {
            FactorStyle::Bracket => group.iter().map(|f| format_mono(&f.argument(), vars)).collect(),
            FactorStyle::Pochhammer => group
                .iter()
                .flat_map(|f| {
                    let x = f.argument();
                    [format_mono(&x, vars), format_mono(&x.partner(t), vars)]
                })
                .collect(),
        };
        let (open, close) = match term.style {
            FactorStyle::Bracket => ("[", "]"),
            FactorStyle::Pochhammer => ("(", ")"),
        };
        parts.push(format!("{open}{};{}{close}", entries.join(","), format_modulus(t)));
    }
    format!("{prefix}{}", parts.join("*"))
}

/// Canonical identity text `vars ...` / `t1 + t2 - t3 = 0`.
pub fn format_identity(id: &Identity) -> String {
    let mut body = String::new();
    for (i, term) in id.terms.iter().enumerate() {
        let s = format_term(term, &id.vars);
        if i == 0 {
            body.push_str(&s);
        } else if let Some(rest) = s.strip_prefix('-') {
            body.push_str(" - ");
            body.push_str(rest);
        } else {
            body.push_str(" + ");
            body.push_str(&s);
        }
    }
    format!("vars {}\n{} = 0", id.vars.join(" "), body)
}

/// Formats an integer vector as `(1,-1,0)`.
pub fn format_int_vector(v: &[i64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("({})", parts.join(","))
}

/// Formats a rational vector as `(1,1/2)`.
pub fn format_rat_vector(v: &[Rational]) -> String {
    let parts: Vec<String> = v.iter().map(fmt_rat).collect();
    format!("({})", parts.join(","))
}
