use super::lexer::Span;

/// An identifier occurrence bound to its token in the code sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ident {
    pub name: String,
    pub token: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOpKind {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    Ne,
}

impl BinOpKind {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOpKind::Add => "+",
            BinOpKind::Sub => "-",
            BinOpKind::Mul => "*",
            BinOpKind::Div => "/",
            BinOpKind::Mod => "%",
            BinOpKind::Lt => "<",
            BinOpKind::Gt => ">",
            BinOpKind::Le => "<=",
            BinOpKind::Ge => ">=",
            BinOpKind::Eq => "==",
            BinOpKind::Ne => "!=",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Some(match s {
            "+" => BinOpKind::Add,
            "-" => BinOpKind::Sub,
            "*" => BinOpKind::Mul,
            "/" => BinOpKind::Div,
            "%" => BinOpKind::Mod,
            "<" => BinOpKind::Lt,
            ">" => BinOpKind::Gt,
            "<=" => BinOpKind::Le,
            ">=" => BinOpKind::Ge,
            "==" => BinOpKind::Eq,
            "!=" => BinOpKind::Ne,
            _ => return None,
        })
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOpKind::Lt | BinOpKind::Gt | BinOpKind::Le | BinOpKind::Ge | BinOpKind::Eq | BinOpKind::Ne => 1,
            BinOpKind::Add | BinOpKind::Sub => 2,
            BinOpKind::Mul | BinOpKind::Div | BinOpKind::Mod => 3,
        }
    }

    /// Operator used by the augmented assignment `x op= e`.
    pub fn from_augmented(s: &str) -> Option<Self> {
        Some(match s {
            "+=" => BinOpKind::Add,
            "-=" => BinOpKind::Sub,
            "*=" => BinOpKind::Mul,
            "/=" => BinOpKind::Div,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LiteralKind {
    Int,
    Float,
    Str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprKind {
    BinOp { op: BinOpKind, lhs: Box<Expr>, rhs: Box<Expr> },
    /// The callee is a plain name; it is not a variable occurrence.
    Call { func: Ident, args: Vec<Expr> },
    Name(Ident),
    Literal { kind: LiteralKind, text: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
    /// Number of redundant parenthesis pairs wrapping this expression.
    pub parens: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StmtKind {
    FunctionDef { name: Ident, params: Vec<Ident>, body: Vec<Stmt> },
    Assign { target: Ident, value: Expr },
    AugAssign { target: Ident, op: BinOpKind, value: Expr },
    /// `if`/`elif` chain: one `(test, body)` per branch, then an optional `else`.
    If { branches: Vec<(Expr, Vec<Stmt>)>, orelse: Option<Vec<Stmt>> },
    While { test: Expr, body: Vec<Stmt> },
    For { target: Ident, iter: Expr, body: Vec<Stmt> },
    Return(Option<Expr>),
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Module,
    FunctionDef,
    Assign,
    AugAssign,
    If,
    While,
    For,
    Return,
    ExprStmt,
    BinOp,
    Call,
    Name,
    Literal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ast {
    pub body: Vec<Stmt>,
    pub span: Span,
}

impl Stmt {
    pub fn node_kind(&self) -> NodeKind {
        match self.kind {
            StmtKind::FunctionDef { .. } => NodeKind::FunctionDef,
            StmtKind::Assign { .. } => NodeKind::Assign,
            StmtKind::AugAssign { .. } => NodeKind::AugAssign,
            StmtKind::If { .. } => NodeKind::If,
            StmtKind::While { .. } => NodeKind::While,
            StmtKind::For { .. } => NodeKind::For,
            StmtKind::Return(_) => NodeKind::Return,
            StmtKind::Expr(_) => NodeKind::ExprStmt,
        }
    }
}

impl Expr {
    pub fn node_kind(&self) -> NodeKind {
        match self.kind {
            ExprKind::BinOp { .. } => NodeKind::BinOp,
            ExprKind::Call { .. } => NodeKind::Call,
            ExprKind::Name(_) => NodeKind::Name,
            ExprKind::Literal { .. } => NodeKind::Literal,
        }
    }

    /// Visits every `Name` leaf (variable occurrence) in source order.
    /// Call targets are skipped.
    pub fn for_each_name<'a>(&'a self, f: &mut impl FnMut(&'a Ident)) {
        match &self.kind {
            ExprKind::BinOp { lhs, rhs, .. } => {
                lhs.for_each_name(f);
                rhs.for_each_name(f);
            }
            ExprKind::Call { args, .. } => args.iter().for_each(|a| a.for_each_name(f)),
            ExprKind::Name(id) => f(id),
            ExprKind::Literal { .. } => {}
        }
    }
}

impl Ast {
    /// Compact structural rendering, e.g. `Module(Assign(a, Literal(1)))`.
    pub fn to_sexpr(&self) -> String {
        format!("Module({})", stmts_sexpr(&self.body))
    }
}

fn stmts_sexpr(stmts: &[Stmt]) -> String {
    stmts.iter().map(stmt_sexpr).collect::<Vec<_>>().join(", ")
}

fn stmt_sexpr(stmt: &Stmt) -> String {
    match &stmt.kind {
        StmtKind::FunctionDef { name, params, body } => {
            let params: Vec<_> = params.iter().map(|p| p.name.as_str()).collect();
            format!("FunctionDef({}, [{}], [{}])", name.name, params.join(", "), stmts_sexpr(body))
        }
        StmtKind::Assign { target, value } => format!("Assign({}, {})", target.name, expr_sexpr(value)),
        StmtKind::AugAssign { target, op, value } => {
            format!("AugAssign({}, {}, {})", target.name, op.symbol(), expr_sexpr(value))
        }
        StmtKind::If { branches, orelse } => {
            let mut parts: Vec<String> = branches
                .iter()
                .map(|(t, b)| format!("{} => [{}]", expr_sexpr(t), stmts_sexpr(b)))
                .collect();
            if let Some(e) = orelse {
                parts.push(format!("else => [{}]", stmts_sexpr(e)));
            }
            format!("If({})", parts.join("; "))
        }
        StmtKind::While { test, body } => format!("While({}, [{}])", expr_sexpr(test), stmts_sexpr(body)),
        StmtKind::For { target, iter, body } => {
            format!("For({}, {}, [{}])", target.name, expr_sexpr(iter), stmts_sexpr(body))
        }
        StmtKind::Return(None) => "Return()".to_string(),
        StmtKind::Return(Some(e)) => format!("Return({})", expr_sexpr(e)),
        StmtKind::Expr(e) => format!("ExprStmt({})", expr_sexpr(e)),
    }
}

fn expr_sexpr(expr: &Expr) -> String {
    match &expr.kind {
        ExprKind::BinOp { op, lhs, rhs } => format!("BinOp({}, {}, {})", op.symbol(), expr_sexpr(lhs), expr_sexpr(rhs)),
        ExprKind::Call { func, args } => {
            let args: Vec<_> = args.iter().map(expr_sexpr).collect();
            format!("Call({}, [{}])", func.name, args.join(", "))
        }
        ExprKind::Name(id) => format!("Name({})", id.name),
        ExprKind::Literal { text, .. } => format!("Literal({text})"),
    }
}
