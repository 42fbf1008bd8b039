use crate::error::{Error, Result};

/// One lexical element of a SMILES string. Every token remembers its byte
/// offset so later stages can report positioned errors.
#[derive(Debug, Clone, PartialEq)]
pub enum Token {
    /// Organic-subset atom (B, C, N, O, P, S, F, Cl, Br, I or aromatic
    /// lowercase b, c, n, o, p, s).
    Atom {
        element: String,
        aromatic: bool,
        offset: usize,
    },
    /// Bracket atom with its parsed contents. Isotope and chirality are
    /// recorded only so the parser can warn before discarding them.
    BracketAtom {
        element: String,
        aromatic: bool,
        isotope: Option<u16>,
        chirality: bool,
        explicit_h: u8,
        charge: i32,
        offset: usize,
    },
    /// Explicit bond symbol: - = # : / \
    Bond { symbol: char, offset: usize },
    BranchOpen { offset: usize },
    BranchClose { offset: usize },
    /// Ring-closure label, single digit or %NN.
    RingClosure { label: u8, offset: usize },
    Dot { offset: usize },
}

impl Token {
    pub fn offset(&self) -> usize {
        match self {
            Token::Atom { offset, .. }
            | Token::BracketAtom { offset, .. }
            | Token::Bond { offset, .. }
            | Token::BranchOpen { offset }
            | Token::BranchClose { offset }
            | Token::RingClosure { offset, .. }
            | Token::Dot { offset } => *offset,
        }
    }
}

const TWO_LETTER_ORGANIC: &[&str] = &["Cl", "Br"];
const ONE_LETTER_ORGANIC: &[char] = &['B', 'C', 'N', 'O', 'P', 'S', 'F', 'I'];
const AROMATIC_ORGANIC: &[char] = &['b', 'c', 'n', 'o', 'p', 's'];

/// Split a SMILES string into tokens. Unknown characters are rejected with
/// their byte offset.
pub fn tokenize_smiles(input: &str) -> Result<Vec<Token>> {
    if input.is_empty() {
        return Err(Error::parse(0, "empty SMILES"));
    }
    if !input.is_ascii() {
        return Err(Error::parse(0, "SMILES must be ASCII"));
    }
    let bytes = input.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            'C' | 'B' if i + 1 < bytes.len() => {
                let pair = &input[i..i + 2];
                if TWO_LETTER_ORGANIC.contains(&pair) {
                    tokens.push(Token::Atom {
                        element: pair.to_string(),
                        aromatic: false,
                        offset: i,
                    });
                    i += 2;
                } else {
                    tokens.push(Token::Atom {
                        element: c.to_string(),
                        aromatic: false,
                        offset: i,
                    });
                    i += 1;
                }
            }
            _ if ONE_LETTER_ORGANIC.contains(&c) => {
                tokens.push(Token::Atom {
                    element: c.to_string(),
                    aromatic: false,
                    offset: i,
                });
                i += 1;
            }
            _ if AROMATIC_ORGANIC.contains(&c) => {
                tokens.push(Token::Atom {
                    element: c.to_ascii_uppercase().to_string(),
                    aromatic: true,
                    offset: i,
                });
                i += 1;
            }
            '[' => {
                let close = input[i..]
                    .find(']')
                    .ok_or_else(|| Error::parse(i, "unterminated bracket atom"))?;
                let body = &input[i + 1..i + close];
                tokens.push(parse_bracket_atom(body, i)?);
                i += close + 1;
            }
            '-' | '=' | '#' | ':' | '/' | '\\' => {
                tokens.push(Token::Bond { symbol: c, offset: i });
                i += 1;
            }
            '(' => {
                tokens.push(Token::BranchOpen { offset: i });
                i += 1;
            }
            ')' => {
                tokens.push(Token::BranchClose { offset: i });
                i += 1;
            }
            '0'..='9' => {
                tokens.push(Token::RingClosure {
                    label: c as u8 - b'0',
                    offset: i,
                });
                i += 1;
            }
            '%' => {
                if i + 2 >= bytes.len()
                    || !bytes[i + 1].is_ascii_digit()
                    || !bytes[i + 2].is_ascii_digit()
                {
                    return Err(Error::parse(i, "%% ring closure needs two digits"));
                }
                let label = (bytes[i + 1] - b'0') * 10 + (bytes[i + 2] - b'0');
                tokens.push(Token::RingClosure { label, offset: i });
                i += 3;
            }
            '.' => {
                tokens.push(Token::Dot { offset: i });
                i += 1;
            }
            _ => {
                return Err(Error::parse(i, format!("unexpected character '{c}'")));
            }
        }
    }
    Ok(tokens)
}

fn parse_bracket_atom(body: &str, offset: usize) -> Result<Token> {
    let bytes = body.as_bytes();
    let mut i = 0;

    let mut isotope = None;
    let iso_start = i;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i > iso_start {
        let v: u16 = body[iso_start..i]
            .parse()
            .map_err(|_| Error::parse(offset, "isotope out of range"))?;
        isotope = Some(v);
    }

    if i >= bytes.len() {
        return Err(Error::parse(offset, "bracket atom missing element symbol"));
    }
    let first = bytes[i] as char;
    let (element, aromatic) = if first.is_ascii_uppercase() {
        let mut sym = first.to_string();
        i += 1;
        if i < bytes.len() && (bytes[i] as char).is_ascii_lowercase() && bytes[i] != b'h' {
            // Two-letter symbol, e.g. Cl, Se, Pt. A lone 'h' is the H-count
            // marker, never part of a symbol here.
            sym.push(bytes[i] as char);
            i += 1;
        }
        (sym, false)
    } else if first.is_ascii_lowercase() {
        let mut sym = first.to_string();
        i += 1;
        // aromatic "se" and "as"
        if (sym == "s" || sym == "a") && i < bytes.len() && bytes[i] == b's' && sym == "a" {
            sym.push('s');
            i += 1;
        } else if sym == "s" && i < bytes.len() && bytes[i] == b'e' {
            sym.push('e');
            i += 1;
        }
        let mut up: Vec<char> = sym.chars().collect();
        up[0] = up[0].to_ascii_uppercase();
        (up.into_iter().collect::<String>(), true)
    } else {
        return Err(Error::parse(
            offset,
            format!("bad bracket atom symbol '{first}'"),
        ));
    };

    let mut chirality = false;
    while i < bytes.len() && bytes[i] == b'@' {
        chirality = true;
        i += 1;
    }

    let mut explicit_h: u8 = 0;
    if i < bytes.len() && bytes[i] == b'H' {
        i += 1;
        explicit_h = 1;
        let h_start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i > h_start {
            explicit_h = body[h_start..i]
                .parse()
                .map_err(|_| Error::parse(offset, "H count out of range"))?;
        }
    }

    let mut charge: i32 = 0;
    while i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
        let sign = if bytes[i] == b'+' { 1 } else { -1 };
        i += 1;
        let d_start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i > d_start {
            let mag: i32 = body[d_start..i]
                .parse()
                .map_err(|_| Error::parse(offset, "charge out of range"))?;
            charge += sign * mag;
        } else {
            charge += sign;
        }
    }

    // Atom-class suffix (:n) is accepted and ignored.
    if i < bytes.len() && bytes[i] == b':' {
        i += 1;
        let c_start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i == c_start {
            return Err(Error::parse(offset, "atom class needs digits"));
        }
    }

    if i != bytes.len() {
        return Err(Error::parse(
            offset,
            format!("trailing bracket-atom content '{}'", &body[i..]),
        ));
    }

    Ok(Token::BracketAtom {
        element,
        aromatic,
        isotope,
        chirality,
        explicit_h,
        charge,
        offset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atoms(tokens: &[Token]) -> Vec<String> {
        tokens
            .iter()
            .filter_map(|t| match t {
                Token::Atom { element, .. } | Token::BracketAtom { element, .. } => {
                    Some(element.clone())
                }
                _ => None,
            })
            .collect()
    }

    #[test]
    fn ethanol_tokens() {
        let t = tokenize_smiles("CCO").unwrap();
        assert_eq!(atoms(&t), ["C", "C", "O"]);
        assert_eq!(t.len(), 3);
    }

    #[test]
    fn benzene_tokens() {
        let t = tokenize_smiles("c1ccccc1").unwrap();
        assert_eq!(atoms(&t).len(), 6);
        let closures: Vec<_> = t
            .iter()
            .filter(|t| matches!(t, Token::RingClosure { label: 1, .. }))
            .collect();
        assert_eq!(closures.len(), 2);
    }

    #[test]
    fn illegal_character_reports_offset() {
        match tokenize_smiles("C$C") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn chlorine_is_one_token() {
        let t = tokenize_smiles("ClCCl").unwrap();
        assert_eq!(atoms(&t), ["Cl", "C", "Cl"]);
    }

    #[test]
    fn bracket_atom_fields() {
        let t = tokenize_smiles("[NH4+]").unwrap();
        match &t[0] {
            Token::BracketAtom {
                element,
                explicit_h,
                charge,
                aromatic,
                ..
            } => {
                assert_eq!(element, "N");
                assert_eq!(*explicit_h, 4);
                assert_eq!(*charge, 1);
                assert!(!aromatic);
            }
            other => panic!("expected bracket atom, got {other:?}"),
        }
    }

    #[test]
    fn percent_ring_closure() {
        let t = tokenize_smiles("C%12CC%12").unwrap();
        let labels: Vec<u8> = t
            .iter()
            .filter_map(|t| match t {
                Token::RingClosure { label, .. } => Some(*label),
                _ => None,
            })
            .collect();
        assert_eq!(labels, [12, 12]);
    }
}
