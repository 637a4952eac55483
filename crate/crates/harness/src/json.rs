//! Just enough JSON for the sales pipeline: a tokenizer and an extractor
//! for flat objects of string and integer fields.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Token {
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Colon,
    Comma,
    Str(String),
    /// Integer literal; fractions and exponents are rejected.
    Int(i64),
    Bool(bool),
    Null,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JsonError {
    #[error("unexpected character {0:?} at offset {1}")]
    Unexpected(char, usize),
    #[error("unterminated string starting at offset {0}")]
    Unterminated(usize),
    #[error("unsupported escape \\{0}")]
    Escape(char),
    #[error("number out of range at offset {0}")]
    Number(usize),
    #[error("malformed object: {0}")]
    Shape(String),
    #[error("missing field `{0}`")]
    Missing(&'static str),
}

pub fn tokenize(input: &str) -> Result<Vec<Token>, JsonError> {
    let mut out = Vec::new();
    let mut chars = input.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        let tok = match c {
            c if c.is_whitespace() => continue,
            '{' => Token::LBrace,
            '}' => Token::RBrace,
            '[' => Token::LBracket,
            ']' => Token::RBracket,
            ':' => Token::Colon,
            ',' => Token::Comma,
            '"' => {
                let mut s = String::new();
                loop {
                    match chars.next() {
                        None => return Err(JsonError::Unterminated(i)),
                        Some((_, '"')) => break,
                        Some((_, '\\')) => match chars.next() {
                            Some((_, e @ ('"' | '\\' | '/'))) => s.push(e),
                            Some((_, 'n')) => s.push('\n'),
                            Some((_, 't')) => s.push('\t'),
                            Some((_, e)) => return Err(JsonError::Escape(e)),
                            None => return Err(JsonError::Unterminated(i)),
                        },
                        Some((_, ch)) => s.push(ch),
                    }
                }
                Token::Str(s)
            }
            '-' | '0'..='9' => {
                let mut s = String::from(c);
                while let Some(&(_, d)) = chars.peek() {
                    if !d.is_ascii_digit() {
                        break;
                    }
                    s.push(d);
                    chars.next();
                }
                Token::Int(s.parse().map_err(|_| JsonError::Number(i))?)
            }
            'a'..='z' => {
                let mut s = String::from(c);
                while let Some(&(_, d)) = chars.peek() {
                    if !d.is_ascii_lowercase() {
                        break;
                    }
                    s.push(d);
                    chars.next();
                }
                match s.as_str() {
                    "true" => Token::Bool(true),
                    "false" => Token::Bool(false),
                    "null" => Token::Null,
                    _ => return Err(JsonError::Unexpected(c, i)),
                }
            }
            other => return Err(JsonError::Unexpected(other, i)),
        };
        out.push(tok);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sale {
    pub id: i64,
    pub region: String,
    pub product: String,
    /// In cents.
    pub amount: i64,
}

impl fmt::Display for Sale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{} {} {} {}", self.id, self.region, self.product, self.amount)
    }
}

/// Reads `{"id":…,"region":…,"product":…,"amount":…}` in any field order.
/// Unknown fields with scalar values are skipped.
pub fn extract_sale(tokens: &[Token]) -> Result<Sale, JsonError> {
    let shape = |m: &str| JsonError::Shape(m.to_string());
    let mut it = tokens.iter();
    if it.next() != Some(&Token::LBrace) {
        return Err(shape("expected `{`"));
    }
    let (mut id, mut region, mut product, mut amount) = (None, None, None, None);
    let mut first = true;
    loop {
        let key = match it.next() {
            Some(Token::Str(k)) => k,
            Some(Token::RBrace) if first => break,
            _ => return Err(shape("expected a key")),
        };
        if it.next() != Some(&Token::Colon) {
            return Err(shape("expected `:`"));
        }
        first = false;
        let value = it.next().ok_or_else(|| shape("missing value"))?;
        match (key.as_str(), value) {
            ("id", Token::Int(v)) => id = Some(*v),
            ("amount", Token::Int(v)) => amount = Some(*v),
            ("region", Token::Str(v)) => region = Some(v.clone()),
            ("product", Token::Str(v)) => product = Some(v.clone()),
            ("id" | "amount" | "region" | "product", _) => return Err(shape(&format!("bad type for `{key}`"))),
            (_, Token::Str(_) | Token::Int(_) | Token::Bool(_) | Token::Null) => {}
            _ => return Err(shape("nested values are not supported")),
        }
        match it.next() {
            Some(Token::Comma) => continue,
            Some(Token::RBrace) => break,
            _ => return Err(shape("expected `,` or `}`")),
        }
    }
    if it.next().is_some() {
        return Err(shape("trailing tokens"));
    }
    Ok(Sale {
        id: id.ok_or(JsonError::Missing("id"))?,
        region: region.ok_or(JsonError::Missing("region"))?,
        product: product.ok_or(JsonError::Missing("product"))?,
        amount: amount.ok_or(JsonError::Missing("amount"))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizes_a_record() {
        let t = tokenize(r#"{"a": -12, "b":"x\"y", "c":[true,null]}"#).unwrap();
        assert_eq!(
            t,
            vec![
                Token::LBrace,
                Token::Str("a".into()),
                Token::Colon,
                Token::Int(-12),
                Token::Comma,
                Token::Str("b".into()),
                Token::Colon,
                Token::Str("x\"y".into()),
                Token::Comma,
                Token::Str("c".into()),
                Token::Colon,
                Token::LBracket,
                Token::Bool(true),
                Token::Comma,
                Token::Null,
                Token::RBracket,
                Token::RBrace,
            ]
        );
    }

    #[test]
    fn extracts_in_any_order() {
        let t = tokenize(r#"{"amount":250,"note":null,"product":"tea","region":"north","id":3}"#).unwrap();
        let s = extract_sale(&t).unwrap();
        assert_eq!(s.to_string(), "#3 north tea 250");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(tokenize(r#"{"a": 1.5}"#), Err(JsonError::Unexpected('.', 7))));
        assert!(matches!(tokenize(r#"{"a"#), Err(JsonError::Unterminated(1))));
        let t = tokenize(r#"{"id":1,"region":"x","product":"y"}"#).unwrap();
        assert_eq!(extract_sale(&t), Err(JsonError::Missing("amount")));
        let t = tokenize(r#"{"id":"1"}"#).unwrap();
        assert!(matches!(extract_sale(&t), Err(JsonError::Shape(_))));
    }
}
