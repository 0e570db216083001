use std::fmt::Write;

use super::ast::*;

const INDENT: &str = "    ";

/// Renders an AST back to canonical MiniLang source. Re-tokenizing the
/// output yields the same token kinds and texts as the parsed input.
pub fn pretty_print(ast: &Ast) -> String {
    let mut out = String::new();
    block(&mut out, &ast.body, 0);
    out
}

fn block(out: &mut String, stmts: &[Stmt], depth: usize) {
    for s in stmts {
        stmt(out, s, depth);
    }
}

fn header(out: &mut String, depth: usize, text: std::fmt::Arguments<'_>) {
    out.push_str(&INDENT.repeat(depth));
    out.write_fmt(text).expect("writing to a String cannot fail");
    out.push_str(":\n");
}

fn stmt(out: &mut String, s: &Stmt, depth: usize) {
    let pad = INDENT.repeat(depth);
    match &s.kind {
        StmtKind::FunctionDef { name, params, body } => {
            let params: Vec<_> = params.iter().map(|p| p.name.as_str()).collect();
            header(out, depth, format_args!("def {}({})", name.name, params.join(", ")));
            block(out, body, depth + 1);
        }
        StmtKind::Assign { target, value } => {
            let _ = writeln!(out, "{pad}{} = {}", target.name, expr(value));
        }
        StmtKind::AugAssign { target, op, value } => {
            let _ = writeln!(out, "{pad}{} {}= {}", target.name, op.symbol(), expr(value));
        }
        StmtKind::If { branches, orelse } => {
            for (i, (test, body)) in branches.iter().enumerate() {
                let kw = if i == 0 { "if" } else { "elif" };
                header(out, depth, format_args!("{kw} {}", expr(test)));
                block(out, body, depth + 1);
            }
            if let Some(body) = orelse {
                header(out, depth, format_args!("else"));
                block(out, body, depth + 1);
            }
        }
        StmtKind::While { test, body } => {
            header(out, depth, format_args!("while {}", expr(test)));
            block(out, body, depth + 1);
        }
        StmtKind::For { target, iter, body } => {
            header(out, depth, format_args!("for {} in {}", target.name, expr(iter)));
            block(out, body, depth + 1);
        }
        StmtKind::Return(None) => {
            let _ = writeln!(out, "{pad}return");
        }
        StmtKind::Return(Some(e)) => {
            let _ = writeln!(out, "{pad}return {}", expr(e));
        }
        StmtKind::Expr(e) => {
            let _ = writeln!(out, "{pad}{}", expr(e));
        }
    }
}

fn expr(e: &Expr) -> String {
    let inner = match &e.kind {
        ExprKind::BinOp { op, lhs, rhs } => format!("{} {} {}", expr(lhs), op.symbol(), expr(rhs)),
        ExprKind::Call { func, args } => {
            let args: Vec<_> = args.iter().map(expr).collect();
            format!("{}({})", func.name, args.join(", "))
        }
        ExprKind::Name(id) => id.name.clone(),
        ExprKind::Literal { text, .. } => text.clone(),
    };
    let n = e.parens as usize;
    format!("{}{}{}", "(".repeat(n), inner, ")".repeat(n))
}
