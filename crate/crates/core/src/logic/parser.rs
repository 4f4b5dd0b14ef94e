//! Recursive-descent parser for the concrete formula grammar.
//!
//! ```text
//! formula := ('E' | 'A') var formula          quantifier scope is maximal
//!          | disj
//! disj    := conj ('|' conj)*
//! conj    := unary ('&' unary)*
//! unary   := '!' unary | primary
//! primary := 'true' | 'false' | '(' formula ')'
//!          | 'base' '(' term ')'               base-sort predicate
//!          | IDENT '(' term (',' term)* ')'    relation atom (finite)
//!          | expr (('<' | '=') expr)+          comparison chain
//! ```
//!
//! Comparison chains abbreviate conjunctions: `a < b < c` is `a < b & b < c`.
//! In the ordered theory `expr` is a linear combination built from `+`, `-`,
//! rational literals `p/q`, optional `*` for scaling (`1/2*x` or `1/2 x`),
//! variables and named constants; elsewhere it is a single variable or
//! constant.  Variables are written `x1, x2, ...`; the single letters
//! `x y z u v w` alias `x1..x6`.  Quantified bodies mid-conjunction must be
//! parenthesised: `x < 1 & (E y (y < x))`.

use super::*;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(BigInt),
    LParen,
    RParen,
    Comma,
    Amp,
    Pipe,
    Bang,
    Lt,
    EqSign,
    Plus,
    Minus,
    Star,
    Slash,
    Eof,
}

struct Lexer {
    toks: Vec<(usize, Tok)>,
    pos: usize,
}

fn lex(input: &str) -> Result<Vec<(usize, Tok)>, LogicError> {
    let bytes = input.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            '(' => {
                i += 1;
                Tok::LParen
            }
            ')' => {
                i += 1;
                Tok::RParen
            }
            ',' => {
                i += 1;
                Tok::Comma
            }
            '&' => {
                i += 1;
                Tok::Amp
            }
            '|' => {
                i += 1;
                Tok::Pipe
            }
            '!' => {
                i += 1;
                Tok::Bang
            }
            '<' => {
                i += 1;
                Tok::Lt
            }
            '=' => {
                i += 1;
                Tok::EqSign
            }
            '+' => {
                i += 1;
                Tok::Plus
            }
            '-' => {
                i += 1;
                Tok::Minus
            }
            '*' => {
                i += 1;
                Tok::Star
            }
            '/' => {
                i += 1;
                Tok::Slash
            }
            c if c.is_ascii_digit() => {
                let mut j = i;
                while j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                    j += 1;
                }
                let n: BigInt = input[i..j].parse().expect("digits parse");
                i = j;
                Tok::Int(n)
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut j = i;
                while j < bytes.len()
                    && ((bytes[j] as char).is_alphanumeric() || bytes[j] == b'_')
                {
                    j += 1;
                }
                let s = input[i..j].to_string();
                i = j;
                Tok::Ident(s)
            }
            other => {
                return Err(LogicError::Syntax {
                    offset: i,
                    msg: format!("unexpected character `{other}`"),
                })
            }
        };
        toks.push((start, tok));
    }
    toks.push((input.len(), Tok::Eof));
    Ok(toks)
}

impl Lexer {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn peek2(&self) -> &Tok {
        let i = (self.pos + 1).min(self.toks.len() - 1);
        &self.toks[i].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].1.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: &Tok, what: &str) -> Result<(), LogicError> {
        if self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(LogicError::Syntax {
                offset: self.offset(),
                msg: format!("expected {what}"),
            })
        }
    }
}

/// Either a linear combination (ordered theory) or a bare term.
enum ExprVal {
    Lin(LinComb),
    Term(SimpleTerm),
}

struct Parser<'a> {
    lx: Lexer,
    sig: &'a Signature,
}

/// Parses a formula against a signature.  See the module notes for the
/// grammar.  Unknown identifiers, atoms outside the signature's theory, and
/// relation arity mismatches are rejected.
pub fn parse(sig: &Signature, input: &str) -> Result<Formula, LogicError> {
    let toks = lex(input)?;
    let mut p = Parser {
        lx: Lexer { toks, pos: 0 },
        sig,
    };
    let f = p.formula()?;
    if p.lx.peek() != &Tok::Eof {
        return Err(LogicError::Syntax {
            offset: p.lx.offset(),
            msg: "trailing input after formula".into(),
        });
    }
    Ok(f)
}

/// Maps a surface identifier to a variable index, if it names one.
fn var_of_ident(s: &str) -> Option<Var> {
    if let Some(digits) = s.strip_prefix('x') {
        if !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit()) {
            let v: usize = digits.parse().ok()?;
            return if v >= 1 { Some(v) } else { None };
        }
    }
    match s {
        "x" => Some(1),
        "y" => Some(2),
        "z" => Some(3),
        "u" => Some(4),
        "v" => Some(5),
        "w" => Some(6),
        _ => None,
    }
}

impl<'a> Parser<'a> {
    fn formula(&mut self) -> Result<Formula, LogicError> {
        if let Tok::Ident(s) = self.lx.peek() {
            if s == "E" || s == "A" {
                let is_exists = s == "E";
                self.lx.bump();
                let off = self.lx.offset();
                let v = match self.lx.bump() {
                    Tok::Ident(name) => var_of_ident(&name).ok_or(LogicError::Syntax {
                        offset: off,
                        msg: format!("expected a variable after the quantifier, got `{name}`"),
                    })?,
                    _ => {
                        return Err(LogicError::Syntax {
                            offset: off,
                            msg: "expected a variable after the quantifier".into(),
                        })
                    }
                };
                let body = self.formula()?;
                return Ok(if is_exists {
                    Formula::Exists(v, Box::new(body))
                } else {
                    Formula::Forall(v, Box::new(body))
                });
            }
        }
        self.disj()
    }

    fn disj(&mut self) -> Result<Formula, LogicError> {
        let mut f = self.conj()?;
        while self.lx.peek() == &Tok::Pipe {
            self.lx.bump();
            let g = self.conj()?;
            f = Formula::Or(Box::new(f), Box::new(g));
        }
        Ok(f)
    }

    fn conj(&mut self) -> Result<Formula, LogicError> {
        let mut f = self.unary()?;
        while self.lx.peek() == &Tok::Amp {
            self.lx.bump();
            let g = self.unary()?;
            f = Formula::And(Box::new(f), Box::new(g));
        }
        Ok(f)
    }

    fn unary(&mut self) -> Result<Formula, LogicError> {
        if self.lx.peek() == &Tok::Bang {
            self.lx.bump();
            let f = self.unary()?;
            return Ok(Formula::Not(Box::new(f)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Formula, LogicError> {
        match self.lx.peek().clone() {
            Tok::LParen => {
                self.lx.bump();
                let f = self.formula()?;
                self.lx.expect(&Tok::RParen, "`)`")?;
                Ok(f)
            }
            Tok::Ident(s) if s == "true" => {
                self.lx.bump();
                Ok(Formula::True)
            }
            Tok::Ident(s) if s == "false" => {
                self.lx.bump();
                Ok(Formula::False)
            }
            Tok::Ident(s) if s == "base" && self.lx.peek2() == &Tok::LParen => {
                self.lx.bump();
                self.lx.bump();
                let t = self.simple_term()?;
                self.lx.expect(&Tok::RParen, "`)`")?;
                if self.sig.theory == Theory::Finite {
                    Ok(Formula::Atom(Atom::InBase(t)))
                } else {
                    // the base sort is the whole structure in the symbolic
                    // theories
                    Ok(Formula::True)
                }
            }
            Tok::Ident(s)
                if self.lx.peek2() == &Tok::LParen && var_of_ident(&s).is_none() =>
            {
                let off = self.lx.offset();
                self.lx.bump();
                self.lx.bump();
                let mut args = vec![self.simple_term()?];
                while self.lx.peek() == &Tok::Comma {
                    self.lx.bump();
                    args.push(self.simple_term()?);
                }
                self.lx.expect(&Tok::RParen, "`)`")?;
                if self.sig.theory != Theory::Finite {
                    return Err(LogicError::Sort(format!(
                        "relation atoms are only available over finite structures (at offset {off})"
                    )));
                }
                match self.sig.relation_arity(&s) {
                    Some(k) if k == args.len() => Ok(Formula::Atom(Atom::Rel(s, args))),
                    Some(k) => Err(LogicError::Arity(format!(
                        "relation {s} expects {k} arguments, got {}",
                        args.len()
                    ))),
                    None => Err(LogicError::Sort(format!("unknown relation `{s}`"))),
                }
            }
            _ => self.chain(),
        }
    }

    /// A comparison chain `e0 REL e1 REL e2 ...` (at least one comparison).
    fn chain(&mut self) -> Result<Formula, LogicError> {
        let mut lhs = self.expr()?;
        let mut out: Option<Formula> = None;
        loop {
            let op = match self.lx.peek() {
                Tok::Lt => LinRel::Lt,
                Tok::EqSign => LinRel::Eq,
                _ => break,
            };
            let op_off = self.lx.offset();
            self.lx.bump();
            if self.lx.peek() == &Tok::Eof {
                return Err(LogicError::Syntax {
                    offset: op_off,
                    msg: "comparison operator is missing its right operand".into(),
                });
            }
            let rhs = self.expr()?;
            let atom = self.compare(&lhs, op, &rhs, op_off)?;
            out = Some(match out {
                None => atom,
                Some(f) => Formula::And(Box::new(f), Box::new(atom)),
            });
            lhs = rhs;
        }
        out.ok_or(LogicError::Syntax {
            offset: self.lx.offset(),
            msg: "expected a comparison".into(),
        })
    }

    fn compare(
        &self,
        lhs: &ExprVal,
        op: LinRel,
        rhs: &ExprVal,
        at: usize,
    ) -> Result<Formula, LogicError> {
        match self.sig.theory {
            Theory::OrderedQvs => {
                let (a, b) = match (lhs, rhs) {
                    (ExprVal::Lin(a), ExprVal::Lin(b)) => (a, b),
                    _ => unreachable!("ordered theory always builds linear expressions"),
                };
                Ok(LinearAtom::formula(a.sub(b), op))
            }
            Theory::PureSet | Theory::Finite => {
                if op == LinRel::Lt {
                    return Err(LogicError::Sort(format!(
                        "`<` is not available in this theory (at offset {at})"
                    )));
                }
                let (a, b) = match (lhs, rhs) {
                    (ExprVal::Term(a), ExprVal::Term(b)) => (*a, *b),
                    _ => unreachable!("equality theories always build bare terms"),
                };
                Ok(normalize_eq(self.sig, a, b))
            }
        }
    }

    fn expr(&mut self) -> Result<ExprVal, LogicError> {
        match self.sig.theory {
            Theory::OrderedQvs => {
                let mut acc;
                let negate = if self.lx.peek() == &Tok::Minus {
                    self.lx.bump();
                    true
                } else {
                    false
                };
                acc = self.mono()?;
                if negate {
                    acc = acc.scale(&-BigRational::one());
                }
                loop {
                    let sub = match self.lx.peek() {
                        Tok::Plus => false,
                        Tok::Minus => true,
                        _ => break,
                    };
                    self.lx.bump();
                    let m = self.mono()?;
                    acc = if sub { acc.sub(&m) } else { acc.add(&m) };
                }
                Ok(ExprVal::Lin(acc))
            }
            Theory::PureSet | Theory::Finite => Ok(ExprVal::Term(self.simple_term()?)),
        }
    }

    /// One monomial of a linear expression: `RAT`, `VAR`, `CONST`,
    /// `RAT * VAR`, or `RAT VAR`.
    fn mono(&mut self) -> Result<LinComb, LogicError> {
        let off = self.lx.offset();
        match self.lx.bump() {
            Tok::Int(n) => {
                let mut q = BigRational::from(n);
                if self.lx.peek() == &Tok::Slash {
                    self.lx.bump();
                    let doff = self.lx.offset();
                    match self.lx.bump() {
                        Tok::Int(d) if !d.is_zero() => {
                            q /= BigRational::from(d);
                        }
                        Tok::Int(_) => {
                            return Err(LogicError::Syntax {
                                offset: doff,
                                msg: "zero denominator".into(),
                            })
                        }
                        _ => {
                            return Err(LogicError::Syntax {
                                offset: doff,
                                msg: "expected a denominator".into(),
                            })
                        }
                    }
                }
                // optional scaled variable: `2*x`, `1/2 x`
                let explicit_star = self.lx.peek() == &Tok::Star;
                if explicit_star {
                    self.lx.bump();
                }
                if let Tok::Ident(name) = self.lx.peek().clone() {
                    if let Some(v) = var_of_ident(&name) {
                        self.lx.bump();
                        return Ok(LinComb::var(v).scale(&q));
                    }
                    if explicit_star {
                        if let Some(c) = self.const_rational(&name)? {
                            self.lx.bump();
                            return Ok(LinComb::constant_term(c).scale(&q));
                        }
                    }
                }
                if explicit_star {
                    return Err(LogicError::Syntax {
                        offset: self.lx.offset(),
                        msg: "expected a variable after `*`".into(),
                    });
                }
                Ok(LinComb::constant_term(q))
            }
            Tok::Ident(name) => {
                if let Some(v) = var_of_ident(&name) {
                    return Ok(LinComb::var(v));
                }
                match self.const_rational(&name)? {
                    Some(q) => Ok(LinComb::constant_term(q)),
                    None => Err(LogicError::Syntax {
                        offset: off,
                        msg: format!("unknown identifier `{name}`"),
                    }),
                }
            }
            _ => Err(LogicError::Syntax {
                offset: off,
                msg: "expected a term".into(),
            }),
        }
    }

    fn const_rational(&self, name: &str) -> Result<Option<BigRational>, LogicError> {
        match self.sig.const_index(name) {
            None => Ok(None),
            Some(i) => match self.sig.const_value(i) {
                Some(ConstValue::Rat(q)) => Ok(Some(q.clone())),
                _ => Err(LogicError::Sort(format!(
                    "constant `{name}` is not a rational point"
                ))),
            },
        }
    }

    /// A variable or constant in the equality theories; numeric literals
    /// over finite structures name universe elements.
    fn simple_term(&mut self) -> Result<SimpleTerm, LogicError> {
        let off = self.lx.offset();
        match self.lx.bump() {
            Tok::Ident(name) => {
                if let Some(v) = var_of_ident(&name) {
                    return Ok(SimpleTerm::Var(v));
                }
                match self.sig.const_index(&name) {
                    Some(i) => Ok(SimpleTerm::Const(i)),
                    None => Err(LogicError::Syntax {
                        offset: off,
                        msg: format!("unknown identifier `{name}`"),
                    }),
                }
            }
            Tok::Int(n) => match self.sig.theory {
                Theory::Finite => match self.sig.const_index(&n.to_string()) {
                    Some(i) => Ok(SimpleTerm::Const(i)),
                    None => Err(LogicError::Syntax {
                        offset: off,
                        msg: format!("`{n}` is not a universe element"),
                    }),
                },
                _ => Err(LogicError::Sort(format!(
                    "numeric literals are only terms over the ordered theory (at offset {off})"
                ))),
            },
            _ => Err(LogicError::Syntax {
                offset: off,
                msg: "expected a variable or constant".into(),
            }),
        }
    }
}
