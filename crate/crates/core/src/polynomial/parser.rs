//! Recursive-descent parser for polynomial text.
//!
//! ```text
//! expr   := term (('+'|'-') term)* ;
//! term   := factor ('*' factor)* ;
//! factor := base ('^' uint)? ;
//! base   := number | ident | '(' expr ')' | '-' base ;
//! ```
//!
//! Unary minus lives in `base`, so `-x^2` is `(-x)^2`. Juxtaposition is not
//! multiplication: `2x` is a syntax error.

use super::{validate_variables, PolyError, Polynomial, MAX_EXPONENT};

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number { value: f64, integral: bool },
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

#[derive(Debug, Clone)]
struct Spanned {
    token: Token,
    position: usize,
}

fn tokenize(text: &str) -> Result<Vec<Spanned>, PolyError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let token = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Token::Plus,
            b'-' => Token::Minus,
            b'*' => Token::Star,
            b'^' => Token::Caret,
            b'(' => Token::LParen,
            b')' => Token::RParen,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let mut integral = true;
                if i < bytes.len() && bytes[i] == b'.' {
                    integral = false;
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                let literal = &text[start..i];
                if literal == "." {
                    return Err(PolyError::Syntax {
                        position: start,
                        message: "malformed number".into(),
                    });
                }
                let value = literal.parse::<f64>().map_err(|_| PolyError::Syntax {
                    position: start,
                    message: format!("malformed number `{literal}`"),
                })?;
                out.push(Spanned {
                    token: Token::Number { value, integral },
                    position: start,
                });
                continue;
            }
            c if c.is_ascii_alphabetic() => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Spanned {
                    token: Token::Ident(text[start..i].to_string()),
                    position: start,
                });
                continue;
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(PolyError::Syntax {
                    position: start,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        };
        i += 1;
        out.push(Spanned {
            token,
            position: start,
        });
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Spanned>,
    cursor: usize,
    end: usize,
    variables: &'a [String],
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.cursor).map(|s| &s.token)
    }

    fn position(&self) -> usize {
        self.tokens
            .get(self.cursor)
            .map_or(self.end, |s| s.position)
    }

    fn bump(&mut self) -> Option<Spanned> {
        let t = self.tokens.get(self.cursor).cloned();
        self.cursor += 1;
        t
    }

    fn syntax(&self, message: impl Into<String>) -> PolyError {
        PolyError::Syntax {
            position: self.position(),
            message: message.into(),
        }
    }

    fn expr(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.bump();
                    acc = acc.try_add(&self.term()?)?;
                }
                Some(Token::Minus) => {
                    self.bump();
                    acc = acc.try_sub(&self.term()?)?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.factor()?;
        while let Some(Token::Star) = self.peek() {
            self.bump();
            acc = acc.try_mul(&self.factor()?)?;
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Polynomial, PolyError> {
        let base = self.base()?;
        if let Some(Token::Caret) = self.peek() {
            self.bump();
            let position = self.position();
            let exponent = match self.bump().map(|s| s.token) {
                Some(Token::Number {
                    value,
                    integral: true,
                }) => value,
                Some(Token::Number { .. }) => {
                    return Err(PolyError::InvalidExponent {
                        position,
                        message: "exponent must be an integer literal".into(),
                    })
                }
                Some(Token::Minus) => {
                    return Err(PolyError::InvalidExponent {
                        position,
                        message: "negative exponents are not allowed".into(),
                    })
                }
                _ => {
                    return Err(PolyError::InvalidExponent {
                        position,
                        message: "expected a non-negative integer exponent".into(),
                    })
                }
            };
            if exponent > MAX_EXPONENT as f64 {
                return Err(PolyError::InvalidExponent {
                    position,
                    message: format!("exponent exceeds {MAX_EXPONENT}"),
                });
            }
            return Ok(base.pow(exponent as u32));
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<Polynomial, PolyError> {
        let position = self.position();
        match self.bump().map(|s| s.token) {
            Some(Token::Number { value, .. }) => Ok(Polynomial::constant(self.variables, value)),
            Some(Token::Ident(name)) => match self.variables.iter().position(|v| *v == name) {
                Some(index) => Ok(Polynomial::variable(self.variables, index)),
                None => Err(PolyError::UnknownIdentifier { name, position }),
            },
            Some(Token::LParen) => {
                let inner = self.expr()?;
                match self.peek() {
                    Some(Token::RParen) => {
                        self.bump();
                        Ok(inner)
                    }
                    _ => Err(self.syntax("expected `)`")),
                }
            }
            Some(Token::Minus) => Ok(self.base()?.scale(-1.0)),
            Some(_) => Err(PolyError::Syntax {
                position,
                message: "expected a number, identifier, `(` or `-`".into(),
            }),
            None => Err(PolyError::Syntax {
                position,
                message: "unexpected end of input".into(),
            }),
        }
    }
}

/// Parses polynomial text over `variables` into canonical form.
///
/// Errors carry the byte offset of the offending token.
pub fn parse_polynomial(text: &str, variables: &[String]) -> Result<Polynomial, PolyError> {
    validate_variables(variables)?;
    let tokens = tokenize(text)?;
    let mut parser = Parser {
        tokens,
        cursor: 0,
        end: text.len(),
        variables,
    };
    let poly = parser.expr()?;
    if parser.cursor < parser.tokens.len() {
        return Err(parser.syntax("unexpected trailing input"));
    }
    Ok(poly)
}
