//! MiniLang frontend: an indentation-based, Python-like mini language.
//!
//! Statements: assignment, augmented assignment, `if/elif/else`, `while`,
//! `for x in expr`, `return`, expression statements and `def`. Expressions:
//! names, int/float/string literals, binary arithmetic and comparison,
//! calls `f(args)` and parentheses.

mod ast;
mod lexer;
mod parser;
mod printer;

use thiserror::Error;

pub use ast::*;
pub use lexer::{tokenize, LexError, Span, Token, TokenKind, KEYWORDS};
pub use parser::{parse, SyntaxError};
pub use printer::pretty_print;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseFailure {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
}

/// A tokenized and parsed program.
#[derive(Debug, Clone)]
pub struct Program {
    pub tokens: Vec<Token>,
    pub ast: Ast,
}

impl Program {
    pub fn parse(source: &str) -> Result<Self, ParseFailure> {
        let tokens = tokenize(source)?;
        let ast = parse(&tokens)?;
        Ok(Self { tokens, ast })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::random_program;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shape(tokens: &[Token]) -> Vec<(TokenKind, String)> {
        tokens.iter().map(|t| (t.kind, t.text.clone())).collect()
    }

    #[test]
    fn pretty_print_hand_tree() {
        let p = Program::parse("def f(x):\n  return x").unwrap();
        assert_eq!(pretty_print(&p.ast), "def f(x):\n    return x\n");
    }

    #[test]
    fn deterministic() {
        let src = "def g(a, b):\n  c = a * (b + 1)\n  return c";
        let a = Program::parse(src).unwrap();
        let b = Program::parse(src).unwrap();
        assert_eq!(a.tokens, b.tokens);
        assert_eq!(a.ast, b.ast);
    }

    fn identifier_sites(ast: &Ast) -> Vec<usize> {
        fn stmts(out: &mut Vec<usize>, body: &[Stmt]) {
            for s in body {
                match &s.kind {
                    StmtKind::FunctionDef { name, params, body } => {
                        out.push(name.token);
                        out.extend(params.iter().map(|p| p.token));
                        stmts(out, body);
                    }
                    StmtKind::Assign { target, value } | StmtKind::AugAssign { target, value, .. } => {
                        out.push(target.token);
                        expr(out, value);
                    }
                    StmtKind::If { branches, orelse } => {
                        for (t, b) in branches {
                            expr(out, t);
                            stmts(out, b);
                        }
                        if let Some(b) = orelse {
                            stmts(out, b);
                        }
                    }
                    StmtKind::While { test, body } => {
                        expr(out, test);
                        stmts(out, body);
                    }
                    StmtKind::For { target, iter, body } => {
                        out.push(target.token);
                        expr(out, iter);
                        stmts(out, body);
                    }
                    StmtKind::Return(e) => e.iter().for_each(|e| expr(out, e)),
                    StmtKind::Expr(e) => expr(out, e),
                }
            }
        }
        fn expr(out: &mut Vec<usize>, e: &Expr) {
            match &e.kind {
                ExprKind::BinOp { lhs, rhs, .. } => {
                    expr(out, lhs);
                    expr(out, rhs);
                }
                ExprKind::Call { func, args } => {
                    out.push(func.token);
                    args.iter().for_each(|a| expr(out, a));
                }
                ExprKind::Name(id) => out.push(id.token),
                ExprKind::Literal { .. } => {}
            }
        }
        let mut out = Vec::new();
        stmts(&mut out, &ast.body);
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn round_trip_through_printer(seed in any::<u64>()) {
            let src = random_program(&mut ChaCha8Rng::seed_from_u64(seed));
            let first = Program::parse(&src).unwrap();
            let printed = pretty_print(&first.ast);
            let second = Program::parse(&printed).unwrap();
            prop_assert_eq!(shape(&first.tokens), shape(&second.tokens));
            prop_assert_eq!(first.ast.to_sexpr(), second.ast.to_sexpr());
        }

        #[test]
        fn every_identifier_has_one_site(seed in any::<u64>()) {
            let src = random_program(&mut ChaCha8Rng::seed_from_u64(seed));
            let p = Program::parse(&src).unwrap();
            let mut sites = identifier_sites(&p.ast);
            sites.sort_unstable();
            let idents: Vec<usize> = p.tokens.iter().filter(|t| t.kind == TokenKind::Identifier).map(|t| t.index).collect();
            prop_assert_eq!(sites, idents);
        }
    }
}
