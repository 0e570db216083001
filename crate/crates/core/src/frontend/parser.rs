use thiserror::Error;

use super::ast::*;
use super::lexer::{Span, Token, TokenKind};

/// First syntax error found; `index` is the offending token's position in
/// the token sequence (equal to its length at end of input).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at token {index} ({found}): expected one of {expected:?}")]
pub struct SyntaxError {
    pub index: usize,
    pub found: String,
    pub expected: Vec<&'static str>,
}

pub fn parse(tokens: &[Token]) -> Result<Ast, SyntaxError> {
    let mut p = Parser { toks: tokens, pos: 0 };
    let body = p.stmt_list()?;
    if p.pos < tokens.len() {
        return Err(p.error(&["statement", "end of input"]));
    }
    let span = match (tokens.first(), tokens.last()) {
        (Some(a), Some(b)) => a.span.cover(b.span),
        _ => Span::new(0, 0),
    };
    Ok(Ast { body, span })
}

struct Parser<'t> {
    toks: &'t [Token],
    pos: usize,
}

impl<'t> Parser<'t> {
    fn peek(&self) -> Option<&'t Token> {
        self.toks.get(self.pos)
    }

    fn peek_kind(&self) -> Option<TokenKind> {
        self.peek().map(|t| t.kind)
    }

    fn at_block_end(&self) -> bool {
        matches!(self.peek_kind(), None | Some(TokenKind::Dedent))
    }

    fn error(&self, expected: &[&'static str]) -> SyntaxError {
        let found = match self.peek() {
            Some(t) => format!("{:?} {:?}", t.kind, t.text),
            None => "end of input".to_string(),
        };
        SyntaxError { index: self.pos, found, expected: expected.to_vec() }
    }

    fn bump(&mut self) -> &'t Token {
        let t = &self.toks[self.pos];
        self.pos += 1;
        t
    }

    fn expect_op(&mut self, op: &'static str) -> Result<&'t Token, SyntaxError> {
        match self.peek() {
            Some(t) if t.is_op(op) => Ok(self.bump()),
            _ => Err(self.error(&[op])),
        }
    }

    fn expect_keyword(&mut self, kw: &'static str) -> Result<&'t Token, SyntaxError> {
        match self.peek() {
            Some(t) if t.is_keyword(kw) => Ok(self.bump()),
            _ => Err(self.error(&[kw])),
        }
    }

    fn ident(&mut self) -> Result<Ident, SyntaxError> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier => {
                let t = self.bump();
                Ok(Ident { name: t.text.clone(), token: t.index })
            }
            _ => Err(self.error(&["identifier"])),
        }
    }

    fn prev_span(&self) -> Span {
        self.toks[self.pos - 1].span
    }

    /// Statements up to the end of the enclosing block (dedent or end of input).
    fn stmt_list(&mut self) -> Result<Vec<Stmt>, SyntaxError> {
        let mut out = Vec::new();
        while !self.at_block_end() {
            let stmt = self.stmt()?;
            let compound = matches!(
                stmt.kind,
                StmtKind::FunctionDef { .. } | StmtKind::If { .. } | StmtKind::While { .. } | StmtKind::For { .. }
            );
            out.push(stmt);
            if compound {
                continue;
            }
            match self.peek_kind() {
                Some(TokenKind::Newline) => {
                    self.pos += 1;
                }
                None | Some(TokenKind::Dedent) => break,
                _ => return Err(self.error(&["newline"])),
            }
        }
        Ok(out)
    }

    /// `':' NEWLINE INDENT stmt_list (DEDENT | end of input)`
    fn block(&mut self) -> Result<Vec<Stmt>, SyntaxError> {
        self.expect_op(":")?;
        if self.peek_kind() != Some(TokenKind::Newline) {
            return Err(self.error(&["newline"]));
        }
        self.pos += 1;
        if self.peek_kind() != Some(TokenKind::Indent) {
            return Err(self.error(&["indent"]));
        }
        self.pos += 1;
        let body = self.stmt_list()?;
        if body.is_empty() {
            return Err(self.error(&["statement"]));
        }
        if self.peek_kind() == Some(TokenKind::Dedent) {
            self.pos += 1;
        }
        Ok(body)
    }

    fn stmt(&mut self) -> Result<Stmt, SyntaxError> {
        let Some(tok) = self.peek() else {
            return Err(self.error(&["statement"]));
        };
        let start = tok.span;
        let kind = match tok.kind {
            TokenKind::Keyword => match tok.text.as_str() {
                "def" => self.function_def()?,
                "if" => self.if_stmt()?,
                "while" => {
                    self.pos += 1;
                    let test = self.expr()?;
                    let body = self.block()?;
                    StmtKind::While { test, body }
                }
                "for" => {
                    self.pos += 1;
                    let target = self.ident()?;
                    self.expect_keyword("in")?;
                    let iter = self.expr()?;
                    let body = self.block()?;
                    StmtKind::For { target, iter, body }
                }
                "return" => {
                    self.pos += 1;
                    if matches!(self.peek_kind(), None | Some(TokenKind::Newline) | Some(TokenKind::Dedent)) {
                        StmtKind::Return(None)
                    } else {
                        StmtKind::Return(Some(self.expr()?))
                    }
                }
                _ => return Err(self.error(&["statement"])),
            },
            TokenKind::Identifier => {
                let next = self.toks.get(self.pos + 1);
                match next {
                    Some(n) if n.is_op("=") => {
                        let target = self.ident()?;
                        self.pos += 1;
                        StmtKind::Assign { target, value: self.expr()? }
                    }
                    Some(n) if n.kind == TokenKind::Operator && BinOpKind::from_augmented(&n.text).is_some() => {
                        let target = self.ident()?;
                        let op = BinOpKind::from_augmented(&self.bump().text).expect("checked above");
                        StmtKind::AugAssign { target, op, value: self.expr()? }
                    }
                    _ => StmtKind::Expr(self.expr()?),
                }
            }
            _ => StmtKind::Expr(self.expr()?),
        };
        Ok(Stmt { kind, span: start.cover(self.prev_span()) })
    }

    fn function_def(&mut self) -> Result<StmtKind, SyntaxError> {
        self.expect_keyword("def")?;
        let name = self.ident()?;
        self.expect_op("(")?;
        let mut params = Vec::new();
        if !self.peek().is_some_and(|t| t.is_op(")")) {
            loop {
                params.push(self.ident()?);
                match self.peek() {
                    Some(t) if t.is_op(",") => self.pos += 1,
                    Some(t) if t.is_op(")") => break,
                    _ => return Err(self.error(&[",", ")"])),
                }
            }
        }
        self.expect_op(")")?;
        let body = self.block()?;
        Ok(StmtKind::FunctionDef { name, params, body })
    }

    fn if_stmt(&mut self) -> Result<StmtKind, SyntaxError> {
        self.expect_keyword("if")?;
        let mut branches = vec![(self.expr()?, self.block()?)];
        let mut orelse = None;
        loop {
            match self.peek() {
                Some(t) if t.is_keyword("elif") => {
                    self.pos += 1;
                    branches.push((self.expr()?, self.block()?));
                }
                Some(t) if t.is_keyword("else") => {
                    self.pos += 1;
                    orelse = Some(self.block()?);
                    break;
                }
                _ => break,
            }
        }
        Ok(StmtKind::If { branches, orelse })
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        self.binary(1)
    }

    /// Precedence climbing over left-associative binary operators.
    fn binary(&mut self, min_prec: u8) -> Result<Expr, SyntaxError> {
        let mut lhs = self.primary()?;
        loop {
            let op = match self.peek() {
                Some(t) if t.kind == TokenKind::Operator => match BinOpKind::from_symbol(&t.text) {
                    Some(op) if op.precedence() >= min_prec => op,
                    _ => break,
                },
                _ => break,
            };
            self.pos += 1;
            let rhs = self.binary(op.precedence() + 1)?;
            let span = lhs.span.cover(rhs.span);
            lhs = Expr { kind: ExprKind::BinOp { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, span, parens: 0 };
        }
        Ok(lhs)
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        const EXPECTED: &[&str] = &["identifier", "number", "string", "("];
        let Some(tok) = self.peek() else {
            return Err(self.error(EXPECTED));
        };
        match tok.kind {
            TokenKind::Identifier => {
                let id = self.ident()?;
                if self.peek().is_some_and(|t| t.is_op("(")) {
                    self.pos += 1;
                    let mut args = Vec::new();
                    if !self.peek().is_some_and(|t| t.is_op(")")) {
                        loop {
                            args.push(self.expr()?);
                            match self.peek() {
                                Some(t) if t.is_op(",") => self.pos += 1,
                                Some(t) if t.is_op(")") => break,
                                _ => return Err(self.error(&[",", ")"])),
                            }
                        }
                    }
                    self.expect_op(")")?;
                    Ok(Expr { kind: ExprKind::Call { func: id, args }, span: tok.span.cover(self.prev_span()), parens: 0 })
                } else {
                    Ok(Expr { kind: ExprKind::Name(id), span: tok.span, parens: 0 })
                }
            }
            TokenKind::Number | TokenKind::String => {
                self.pos += 1;
                let kind = match tok.kind {
                    TokenKind::String => LiteralKind::Str,
                    _ if tok.text.contains('.') => LiteralKind::Float,
                    _ => LiteralKind::Int,
                };
                Ok(Expr { kind: ExprKind::Literal { kind, text: tok.text.clone() }, span: tok.span, parens: 0 })
            }
            TokenKind::Operator if tok.text == "(" => {
                self.pos += 1;
                let mut inner = self.expr()?;
                self.expect_op(")")?;
                inner.parens += 1;
                inner.span = tok.span.cover(self.prev_span());
                Ok(inner)
            }
            _ => Err(self.error(EXPECTED)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::lexer::tokenize;
    use super::*;

    fn sexpr(src: &str) -> String {
        parse(&tokenize(src).unwrap()).unwrap().to_sexpr()
    }

    #[test]
    fn single_assignment() {
        assert_eq!(sexpr("a = 1"), "Module(Assign(a, Literal(1)))");
    }

    #[test]
    fn function_with_return() {
        assert_eq!(sexpr("def f(x):\n  return x"), "Module(FunctionDef(f, [x], [Return(Name(x))]))");
    }

    #[test]
    fn malformed_assignment() {
        let err = parse(&tokenize("a = =").unwrap()).unwrap_err();
        assert_eq!(err.index, 2);
        assert!(err.expected.contains(&"identifier"));
    }

    #[test]
    fn precedence_and_parens() {
        assert_eq!(
            sexpr("x = a + b * c < (d - e)"),
            "Module(Assign(x, BinOp(<, BinOp(+, Name(a), BinOp(*, Name(b), Name(c))), BinOp(-, Name(d), Name(e)))))"
        );
        assert_eq!(sexpr("x = a - b - c"), "Module(Assign(x, BinOp(-, BinOp(-, Name(a), Name(b)), Name(c))))");
    }

    #[test]
    fn control_flow() {
        let src = "if a < 1:\n  x = 1\nelif a > 2:\n  x = 2\nelse:\n  x = 3\nwhile x:\n  x -= 1\nfor i in range(n):\n  s += i\nprint(x)";
        assert_eq!(
            sexpr(src),
            "Module(If(BinOp(<, Name(a), Literal(1)) => [Assign(x, Literal(1))]; BinOp(>, Name(a), Literal(2)) => [Assign(x, Literal(2))]; else => [Assign(x, Literal(3))]), \
             While(Name(x), [AugAssign(x, -, Literal(1))]), For(i, Call(range, [Name(n)]), [AugAssign(s, +, Name(i))]), ExprStmt(Call(print, [Name(x)])))"
        );
    }

    #[test]
    fn nested_blocks_close_together() {
        assert_eq!(
            sexpr("def f(a):\n  if a:\n    return 1\nb = 2"),
            "Module(FunctionDef(f, [a], [If(Name(a) => [Return(Literal(1))])]), Assign(b, Literal(2)))"
        );
    }

    #[test]
    fn error_paths() {
        let err = |s: &str| parse(&tokenize(s).unwrap()).unwrap_err();
        assert_eq!(err("if a\n  b = 1").index, 2);
        assert_eq!(err("def f(:\n  return 1").index, 3);
        assert_eq!(err("a = 1 2").index, 3);
        assert_eq!(err("x = (a + b").index, 6);
        // Unexpected indent at module level.
        assert_eq!(err("  a = 1").index, 0);
    }

    #[test]
    fn spans_nest() {
        let ast = parse(&tokenize("def f(x):\n    y = (x + 1) * 2\n    return y").unwrap()).unwrap();
        let StmtKind::FunctionDef { body, .. } = &ast.body[0].kind else { panic!() };
        for s in body {
            assert!(ast.body[0].span.start <= s.span.start && s.span.end <= ast.body[0].span.end);
        }
        let StmtKind::Assign { value, .. } = &body[0].kind else { panic!() };
        let ExprKind::BinOp { lhs, .. } = &value.kind else { panic!() };
        assert_eq!(lhs.parens, 1);
        assert!(value.span.start <= lhs.span.start && lhs.span.end <= value.span.end);
    }
}
