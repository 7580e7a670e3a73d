//! Def/use analysis of a single Python cell.
//!
//! The analysis is flow-insensitive inside a statement and sequential across
//! statements: a name counts as referenced when it is read before the cell
//! binds it. Only module-level bindings are reported as defined; names bound
//! inside functions, lambdas and comprehensions stay local.

use indexmap::IndexSet;

use crate::pylex::{self, Token, TokenKind};

/// Names Python resolves without any import.
pub const BUILTINS: &[&str] = &[
    "abs",
    "aiter",
    "all",
    "anext",
    "any",
    "ascii",
    "bin",
    "bool",
    "breakpoint",
    "bytearray",
    "bytes",
    "callable",
    "chr",
    "classmethod",
    "compile",
    "complex",
    "copyright",
    "credits",
    "delattr",
    "dict",
    "dir",
    "display",
    "divmod",
    "enumerate",
    "eval",
    "exec",
    "exit",
    "filter",
    "float",
    "format",
    "frozenset",
    "get_ipython",
    "getattr",
    "globals",
    "hasattr",
    "hash",
    "help",
    "hex",
    "id",
    "input",
    "int",
    "isinstance",
    "issubclass",
    "iter",
    "len",
    "license",
    "list",
    "locals",
    "map",
    "max",
    "memoryview",
    "min",
    "next",
    "object",
    "oct",
    "open",
    "ord",
    "pow",
    "print",
    "property",
    "quit",
    "range",
    "repr",
    "reversed",
    "round",
    "set",
    "setattr",
    "slice",
    "sorted",
    "staticmethod",
    "str",
    "sum",
    "super",
    "tuple",
    "type",
    "vars",
    "zip",
    "__import__",
    "__name__",
    "__file__",
    "__doc__",
    "__builtins__",
    "self",
    "cls",
    "NotImplemented",
    "Ellipsis",
    "ArithmeticError",
    "AssertionError",
    "AttributeError",
    "BaseException",
    "Exception",
    "FileNotFoundError",
    "ImportError",
    "IndexError",
    "KeyError",
    "KeyboardInterrupt",
    "LookupError",
    "ModuleNotFoundError",
    "NameError",
    "NotImplementedError",
    "OSError",
    "OverflowError",
    "RuntimeError",
    "StopIteration",
    "SyntaxError",
    "TypeError",
    "ValueError",
    "Warning",
    "DeprecationWarning",
    "UserWarning",
    "ZeroDivisionError",
    "IOError",
];

/// File extensions that mark a string literal as a data resource.
pub const DATA_EXTENSIONS: &[&str] = &[
    "csv", "tsv", "json", "jsonl", "xlsx", "xls", "parquet", "txt", "pkl", "pickle", "h5", "hdf5",
    "feather", "zip", "gz", "npy", "npz", "sqlite", "db", "xml", "yaml", "yml", "arrow", "orc",
];

pub fn is_builtin(name: &str) -> bool {
    BUILTINS.contains(&name)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NameAnalysis {
    pub defined: IndexSet<String>,
    pub referenced: IndexSet<String>,
    /// String literals that look like data files, in order of appearance.
    pub resources: IndexSet<String>,
    /// Set when the source could not be tokenized; both name sets are then empty.
    pub diagnostic: Option<String>,
}

pub fn analyze_cell_names(source: &str) -> NameAnalysis {
    let tokens = match pylex::tokenize(source) {
        Ok(t) => t,
        Err(e) => {
            return NameAnalysis {
                diagnostic: Some(format!("unparseable cell: {e}")),
                ..NameAnalysis::default()
            }
        }
    };

    let mut resources = IndexSet::new();
    for tok in tokens.iter().filter(|t| t.kind == TokenKind::String) {
        let body = pylex::string_body(&tok.text);
        if looks_like_data_path(body) {
            resources.insert(body.to_string());
        }
    }

    let lines = logical_lines(&tokens);
    let mut scope = Scope::sequential();
    analyze_block(&lines, &mut scope);

    NameAnalysis {
        defined: scope.bound,
        referenced: scope.free,
        resources,
        diagnostic: None,
    }
}

pub fn looks_like_data_path(s: &str) -> bool {
    if s.is_empty() || s.chars().any(|c| c.is_whitespace() || c == '{') {
        return false;
    }
    let Some((stem, ext)) = s.rsplit_once('.') else {
        return false;
    };
    !stem.is_empty() && DATA_EXTENSIONS.contains(&ext.to_ascii_lowercase().as_str())
}

#[derive(Debug)]
struct Line<'t> {
    indent: usize,
    tokens: Vec<&'t Token>,
}

fn logical_lines(tokens: &[Token]) -> Vec<Line<'_>> {
    let mut lines = Vec::new();
    let mut current: Vec<&Token> = Vec::new();
    for tok in tokens {
        match tok.kind {
            TokenKind::Comment => {}
            TokenKind::Newline => {
                if !current.is_empty() {
                    lines.push(Line {
                        indent: current[0].indent,
                        tokens: std::mem::take(&mut current),
                    });
                }
            }
            _ => current.push(tok),
        }
    }
    if !current.is_empty() {
        lines.push(Line {
            indent: current[0].indent,
            tokens: current,
        });
    }
    lines
}

/// Binding environment for one block of statements.
///
/// A sequential scope (module, class body) checks each read against what has
/// been bound so far. A function scope collects everything and resolves at
/// the end, since any assignment makes a name local for the whole body.
struct Scope {
    sequential: bool,
    bound: IndexSet<String>,
    free: IndexSet<String>,
    reads: IndexSet<String>,
}

impl Scope {
    fn sequential() -> Self {
        Scope {
            sequential: true,
            bound: IndexSet::new(),
            free: IndexSet::new(),
            reads: IndexSet::new(),
        }
    }

    fn function() -> Self {
        Scope {
            sequential: false,
            ..Scope::sequential()
        }
    }

    fn read(&mut self, name: &str) {
        if is_builtin(name) {
            return;
        }
        if self.sequential {
            if !self.bound.contains(name) {
                self.free.insert(name.to_string());
            }
        } else {
            self.reads.insert(name.to_string());
        }
    }

    fn read_all(&mut self, names: impl IntoIterator<Item = String>) {
        for n in names {
            self.read(&n);
        }
    }

    fn bind(&mut self, name: &str) {
        self.bound.insert(name.to_string());
    }

    /// Free names of a finished function scope.
    fn into_free(self, params: &IndexSet<String>) -> IndexSet<String> {
        if self.sequential {
            return self.free;
        }
        self.reads
            .into_iter()
            .filter(|n| !self.bound.contains(n) && !params.contains(n))
            .collect()
    }
}

fn analyze_block(lines: &[Line<'_>], scope: &mut Scope) {
    let mut i = 0;
    while i < lines.len() {
        let line = &lines[i];
        let head = strip_async(&line.tokens);
        let is_def = head.first().is_some_and(|t| t.is_keyword("def"));
        let is_class = head.first().is_some_and(|t| t.is_keyword("class"));
        if is_def || is_class {
            let mut end = i + 1;
            while end < lines.len() && lines[end].indent > line.indent {
                end += 1;
            }
            if is_def {
                analyze_def(head, &lines[i + 1..end], scope);
            } else {
                analyze_class(head, &lines[i + 1..end], scope);
            }
            i = end;
            continue;
        }
        statement(head, scope);
        i += 1;
    }
}

fn strip_async<'a, 't>(tokens: &'a [&'t Token]) -> &'a [&'t Token] {
    match tokens.first() {
        Some(t) if t.is_keyword("async") => &tokens[1..],
        _ => tokens,
    }
}

/// Splits at top-level occurrences of `pred`.
fn split_top<'a, 't>(
    tokens: &'a [&'t Token],
    pred: impl Fn(&Token) -> bool,
) -> Vec<&'a [&'t Token]> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    let mut lambda_colons = 0;
    for (i, t) in tokens.iter().enumerate() {
        if t.kind == TokenKind::Op {
            match t.text.as_str() {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => depth -= 1,
                _ => {}
            }
        }
        if depth == 0 && t.is_keyword("lambda") {
            lambda_colons += 1;
            continue;
        }
        // inside a lambda header, nothing splits until its colon
        if depth == 0 && lambda_colons > 0 {
            if t.is_op(":") {
                lambda_colons -= 1;
            }
            continue;
        }
        if depth == 0 && pred(t) {
            parts.push(&tokens[start..i]);
            start = i + 1;
        }
    }
    parts.push(&tokens[start..]);
    parts
}

fn find_top(tokens: &[&Token], pred: impl Fn(&Token) -> bool) -> Option<usize> {
    let parts = split_top(tokens, pred);
    if parts.len() > 1 {
        Some(parts[0].len())
    } else {
        None
    }
}

fn analyze_def(head: &[&Token], body: &[Line<'_>], scope: &mut Scope) {
    // def NAME ( PARAMS ) [-> ANN] : [BODY]
    let Some(name) = head.get(1).filter(|t| t.kind == TokenKind::Name) else {
        return;
    };
    let open = 2;
    let close = matching(head, open).unwrap_or(head.len());
    let params_toks = if close > open {
        &head[open + 1..close]
    } else {
        &[][..]
    };
    let mut params = IndexSet::new();
    for param in split_top(params_toks, |t| t.is_op(",")) {
        let param: Vec<&Token> = param
            .iter()
            .copied()
            .skip_while(|t| t.is_op("*") || t.is_op("**") || t.is_op("/"))
            .collect();
        if let Some(first) = param.first().filter(|t| t.kind == TokenKind::Name) {
            params.insert(first.text.clone());
        }
        // annotations and defaults are evaluated in the enclosing scope
        if let Some(pos) = param.iter().position(|t| t.is_op(":") || t.is_op("=")) {
            let (reads, _) = expr_names(&param[pos + 1..], false);
            scope.read_all(reads);
        }
    }
    let rest = &head[(close + 1).min(head.len())..];
    let colon = find_top(rest, |t| t.is_op(":")).unwrap_or(rest.len());
    if rest.first().is_some_and(|t| t.is_op("->")) {
        let (reads, _) = expr_names(&rest[1..colon], false);
        scope.read_all(reads);
    }

    let mut inner = Scope::function();
    if colon + 1 < rest.len() {
        statement(&rest[colon + 1..], &mut inner);
    }
    analyze_block(body, &mut inner);
    let free = inner.into_free(&params);
    scope.read_all(free);
    scope.bind(&name.text);
}

fn analyze_class(head: &[&Token], body: &[Line<'_>], scope: &mut Scope) {
    let Some(name) = head.get(1).filter(|t| t.kind == TokenKind::Name) else {
        return;
    };
    let rest = &head[2..];
    let colon = find_top(rest, |t| t.is_op(":")).unwrap_or(rest.len());
    let (reads, _) = expr_names(&rest[..colon], true);
    scope.read_all(reads);

    let mut inner = Scope::sequential();
    if colon + 1 < rest.len() {
        statement(&rest[colon + 1..], &mut inner);
    }
    analyze_block(body, &mut inner);
    scope.read_all(inner.free);
    scope.bind(&name.text);
}

fn matching(tokens: &[&Token], open: usize) -> Option<usize> {
    if !tokens.get(open)?.is_op("(") {
        return None;
    }
    let mut depth = 0;
    for (i, t) in tokens.iter().enumerate().skip(open) {
        if t.kind != TokenKind::Op {
            continue;
        }
        match t.text.as_str() {
            "(" | "[" | "{" => depth += 1,
            ")" | "]" | "}" => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn statement(tokens: &[&Token], scope: &mut Scope) {
    for simple in split_top(tokens, |t| t.is_op(";")) {
        let simple = strip_async(simple);
        if !simple.is_empty() {
            simple_statement(simple, scope);
        }
    }
}

fn simple_statement(tokens: &[&Token], scope: &mut Scope) {
    let first = tokens[0];
    if first.kind == TokenKind::Keyword {
        match first.text.as_str() {
            "import" => return import_statement(&tokens[1..], scope),
            "from" => return from_import_statement(tokens, scope),
            "global" | "nonlocal" | "pass" | "break" | "continue" => return,
            "def" => return analyze_def(tokens, &[], scope),
            "class" => return analyze_class(tokens, &[], scope),
            "if" | "elif" | "while" => {
                return header_with_body(&tokens[1..], scope, |hdr, s| {
                    let (reads, binds) = expr_names(hdr, false);
                    s.read_all(reads);
                    binds.iter().for_each(|b| s.bind(b));
                })
            }
            "else" | "try" | "finally" => return header_with_body(&tokens[1..], scope, |_, _| {}),
            "for" => return header_with_body(&tokens[1..], scope, for_header),
            "with" => return header_with_body(&tokens[1..], scope, with_header),
            "except" => return header_with_body(&tokens[1..], scope, except_header),
            "del" | "return" | "yield" | "raise" | "assert" | "await" => {
                let (reads, binds) = expr_names(&tokens[1..], false);
                scope.read_all(reads);
                binds.iter().for_each(|b| scope.bind(b));
                return;
            }
            _ => {}
        }
    }
    if first.kind == TokenKind::Name && (first.text == "match" || first.text == "case") {
        if let Some(colon) = find_top(tokens, |t| t.is_op(":")) {
            if first.text == "match" {
                let (reads, _) = expr_names(&tokens[1..colon], false);
                scope.read_all(reads);
            }
            if colon + 1 < tokens.len() {
                statement(&tokens[colon + 1..], scope);
            }
            return;
        }
    }
    if first.is_op("@") {
        let (reads, _) = expr_names(&tokens[1..], false);
        scope.read_all(reads);
        return;
    }
    assignment_or_expression(tokens, scope);
}

fn header_with_body(
    tokens: &[&Token],
    scope: &mut Scope,
    header: impl FnOnce(&[&Token], &mut Scope),
) {
    let colon = find_top(tokens, |t| t.is_op(":")).unwrap_or(tokens.len());
    header(&tokens[..colon], scope);
    if colon + 1 < tokens.len() {
        statement(&tokens[colon + 1..], scope);
    }
}

fn for_header(tokens: &[&Token], scope: &mut Scope) {
    let in_pos = find_top(tokens, |t| t.is_keyword("in")).unwrap_or(tokens.len());
    let iter = if in_pos < tokens.len() {
        &tokens[in_pos + 1..]
    } else {
        &[][..]
    };
    let (reads, binds) = expr_names(iter, false);
    scope.read_all(reads);
    binds.iter().for_each(|b| scope.bind(b));
    bind_target(&tokens[..in_pos], scope);
}

fn with_header(tokens: &[&Token], scope: &mut Scope) {
    let mut inner = tokens;
    if inner.first().is_some_and(|t| t.is_op("(")) && inner.last().is_some_and(|t| t.is_op(")")) {
        inner = &inner[1..inner.len() - 1];
    }
    for item in split_top(inner, |t| t.is_op(",")) {
        match find_top(item, |t| t.is_keyword("as")) {
            Some(pos) => {
                let (reads, _) = expr_names(&item[..pos], false);
                scope.read_all(reads);
                bind_target(&item[pos + 1..], scope);
            }
            None => {
                let (reads, _) = expr_names(item, false);
                scope.read_all(reads);
            }
        }
    }
}

fn except_header(tokens: &[&Token], scope: &mut Scope) {
    let tokens = match tokens.first() {
        Some(t) if t.is_op("*") => &tokens[1..],
        _ => tokens,
    };
    match find_top(tokens, |t| t.is_keyword("as")) {
        Some(pos) => {
            let (reads, _) = expr_names(&tokens[..pos], false);
            scope.read_all(reads);
            if let Some(name) = tokens.get(pos + 1).filter(|t| t.kind == TokenKind::Name) {
                scope.bind(&name.text);
            }
        }
        None => {
            let (reads, _) = expr_names(tokens, false);
            scope.read_all(reads);
        }
    }
}

fn import_statement(tokens: &[&Token], scope: &mut Scope) {
    for item in split_top(tokens, |t| t.is_op(",")) {
        match find_top(item, |t| t.is_keyword("as")) {
            Some(pos) => {
                if let Some(alias) = item.get(pos + 1) {
                    scope.bind(&alias.text);
                }
            }
            None => {
                if let Some(root) = item.first().filter(|t| t.kind == TokenKind::Name) {
                    scope.bind(&root.text);
                }
            }
        }
    }
}

fn from_import_statement(tokens: &[&Token], scope: &mut Scope) {
    let Some(import_pos) = tokens.iter().position(|t| t.is_keyword("import")) else {
        return;
    };
    let mut names = &tokens[import_pos + 1..];
    if names.first().is_some_and(|t| t.is_op("(")) && names.last().is_some_and(|t| t.is_op(")")) {
        names = &names[1..names.len() - 1];
    }
    for item in split_top(names, |t| t.is_op(",")) {
        if item.first().is_some_and(|t| t.is_op("*")) {
            continue;
        }
        match find_top(item, |t| t.is_keyword("as")) {
            Some(pos) => {
                if let Some(alias) = item.get(pos + 1) {
                    scope.bind(&alias.text);
                }
            }
            None => {
                if let Some(name) = item.first().filter(|t| t.kind == TokenKind::Name) {
                    scope.bind(&name.text);
                }
            }
        }
    }
}

const AUG_OPS: &[&str] = &[
    "+=", "-=", "*=", "/=", "//=", "%=", "**=", ">>=", "<<=", "&=", "|=", "^=", "@=",
];

fn assignment_or_expression(tokens: &[&Token], scope: &mut Scope) {
    if let Some(pos) = tokens
        .iter()
        .position(|t| t.kind == TokenKind::Op && AUG_OPS.contains(&t.text.as_str()))
    {
        let (reads, binds) = expr_names(&tokens[pos + 1..], false);
        scope.read_all(reads);
        binds.iter().for_each(|b| scope.bind(b));
        let target = &tokens[..pos];
        let (reads, _) = expr_names(target, false);
        scope.read_all(reads);
        if target.len() == 1 && target[0].kind == TokenKind::Name {
            scope.bind(&target[0].text);
        }
        return;
    }

    let parts = split_top(tokens, |t| t.is_op("="));
    if parts.len() == 1 {
        // Annotated assignment: `target: annotation [= value]` has no `=` part
        // when the value is missing, and we only bind when a value exists.
        if let Some(colon) = find_top(tokens, |t| t.is_op(":")) {
            let (reads, _) = expr_names(&tokens[colon + 1..], false);
            scope.read_all(reads);
            let (reads, _) = target_reads(&tokens[..colon]);
            scope.read_all(reads);
            return;
        }
        let (reads, binds) = expr_names(tokens, false);
        scope.read_all(reads);
        binds.iter().for_each(|b| scope.bind(b));
        return;
    }

    let value = parts[parts.len() - 1];
    let (reads, binds) = expr_names(value, false);
    scope.read_all(reads);
    binds.iter().for_each(|b| scope.bind(b));
    for target in &parts[..parts.len() - 1] {
        let target = match find_top(target, |t| t.is_op(":")) {
            Some(colon) => {
                let (reads, _) = expr_names(&target[colon + 1..], false);
                scope.read_all(reads);
                &target[..colon]
            }
            None => target,
        };
        bind_target(target, scope);
    }
}

/// Binds every plain name in an assignment target; attribute and subscript
/// targets only read their base expressions.
fn bind_target(tokens: &[&Token], scope: &mut Scope) {
    let (reads, binds) = target_reads(tokens);
    scope.read_all(reads);
    for b in binds {
        scope.bind(&b);
    }
}

fn target_reads(tokens: &[&Token]) -> (Vec<String>, Vec<String>) {
    let mut reads = Vec::new();
    let mut binds = Vec::new();
    let mut tokens = tokens;
    while tokens.len() >= 2
        && ((tokens[0].is_op("(") && tokens[tokens.len() - 1].is_op(")"))
            || (tokens[0].is_op("[") && tokens[tokens.len() - 1].is_op("]")))
        && matching_any(tokens, 0) == Some(tokens.len() - 1)
    {
        tokens = &tokens[1..tokens.len() - 1];
    }
    let elements = split_top(tokens, |t| t.is_op(","));
    if elements.len() > 1 {
        for el in elements {
            let (r, b) = target_reads(el);
            reads.extend(r);
            binds.extend(b);
        }
        return (reads, binds);
    }
    let el = match tokens.first() {
        Some(t) if t.is_op("*") => &tokens[1..],
        _ => tokens,
    };
    if el.len() == 1 && el[0].kind == TokenKind::Name {
        binds.push(el[0].text.clone());
    } else if !el.is_empty() {
        let (r, _) = expr_names(el, false);
        reads.extend(r);
    }
    (reads, binds)
}

fn matching_any(tokens: &[&Token], open: usize) -> Option<usize> {
    let mut depth = 0;
    for (i, t) in tokens.iter().enumerate().skip(open) {
        if t.kind != TokenKind::Op {
            continue;
        }
        match t.text.as_str() {
            "(" | "[" | "{" => depth += 1,
            ")" | "]" | "}" => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Free names read by an expression, plus names bound by `:=`.
///
/// `in_group` is true inside brackets, where `name=` is a keyword argument.
fn expr_names(tokens: &[&Token], in_group: bool) -> (Vec<String>, Vec<String>) {
    let mut reads: Vec<String> = Vec::new();
    let mut binds: Vec<String> = Vec::new();
    let mut comp_targets: IndexSet<String> = IndexSet::new();
    let has_comprehension = in_group
        && tokens
            .iter()
            .enumerate()
            .any(|(i, t)| t.is_keyword("for") && depth_at(tokens, i) == 0);

    let mut i = 0;
    let mut in_for_target = false;
    while i < tokens.len() {
        let t = tokens[i];
        if t.kind == TokenKind::Op && matches!(t.text.as_str(), "(" | "[" | "{") {
            let close = matching_any(tokens, i).unwrap_or(tokens.len());
            let inner = &tokens[i + 1..close.min(tokens.len())];
            let (r, b) = expr_names(inner, true);
            if in_for_target {
                let (_, tb) = target_reads(&tokens[i..=close.min(tokens.len() - 1)]);
                comp_targets.extend(tb);
            } else {
                reads.extend(r);
            }
            binds.extend(b);
            i = close + 1;
            continue;
        }
        if t.is_keyword("lambda") {
            let end = lambda_end(tokens, i);
            let body = &tokens[i + 1..end];
            let colon = find_top(body, |t| t.is_op(":")).unwrap_or(body.len());
            let mut params = IndexSet::new();
            for p in split_top(&body[..colon], |t| t.is_op(",")) {
                let p: Vec<&Token> = p
                    .iter()
                    .copied()
                    .skip_while(|t| t.is_op("*") || t.is_op("**"))
                    .collect();
                if let Some(name) = p.first().filter(|t| t.kind == TokenKind::Name) {
                    params.insert(name.text.clone());
                }
                if let Some(eq) = p.iter().position(|t| t.is_op("=")) {
                    reads.extend(expr_names(&p[eq + 1..], false).0);
                }
            }
            if colon < body.len() {
                let (r, _) = expr_names(&body[colon + 1..], false);
                reads.extend(r.into_iter().filter(|n| !params.contains(n)));
            }
            i = end;
            continue;
        }
        if t.is_keyword("for") && has_comprehension && depth_at(tokens, i) == 0 {
            in_for_target = true;
            i += 1;
            continue;
        }
        if t.is_keyword("in") && in_for_target {
            in_for_target = false;
            i += 1;
            continue;
        }
        if t.kind == TokenKind::Name {
            let after_dot = i > 0 && tokens[i - 1].is_op(".");
            let next = tokens.get(i + 1);
            if after_dot {
                i += 1;
                continue;
            }
            if next.is_some_and(|n| n.is_op(":=")) {
                binds.push(t.text.clone());
                i += 2;
                continue;
            }
            if in_group && next.is_some_and(|n| n.is_op("=")) {
                i += 2;
                continue;
            }
            if in_for_target {
                comp_targets.insert(t.text.clone());
            } else {
                reads.push(t.text.clone());
            }
        }
        i += 1;
    }
    if has_comprehension {
        reads.retain(|n| !comp_targets.contains(n));
    }
    (reads, binds)
}

fn depth_at(tokens: &[&Token], pos: usize) -> i32 {
    let mut depth = 0;
    for t in &tokens[..pos] {
        if t.kind == TokenKind::Op {
            match t.text.as_str() {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => depth -= 1,
                _ => {}
            }
        }
    }
    depth
}

/// A lambda body runs to the next top-level comma or the end of the group.
fn lambda_end(tokens: &[&Token], start: usize) -> usize {
    let mut depth = 0;
    let mut seen_colon = false;
    for (i, t) in tokens.iter().enumerate().skip(start + 1) {
        if t.kind != TokenKind::Op {
            continue;
        }
        match t.text.as_str() {
            "(" | "[" | "{" => depth += 1,
            ")" | "]" | "}" => depth -= 1,
            ":" if depth == 0 => seen_colon = true,
            "," if depth == 0 && seen_colon => return i,
            _ => {}
        }
    }
    tokens.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sets(src: &str) -> (Vec<String>, Vec<String>) {
        let a = analyze_cell_names(src);
        assert!(a.diagnostic.is_none(), "{:?}", a.diagnostic);
        (
            a.defined.into_iter().collect(),
            a.referenced.into_iter().collect(),
        )
    }

    fn v(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn import_alias() {
        assert_eq!(sets("import pandas as pd"), (v(&["pd"]), v(&[])));
    }

    #[test]
    fn method_call_assignment() {
        assert_eq!(sets("df2 = df.dropna()"), (v(&["df2"]), v(&["df"])));
    }

    #[test]
    fn empty_source() {
        assert_eq!(sets(""), (v(&[]), v(&[])));
    }

    #[test]
    fn imports() {
        assert_eq!(
            sets("import os.path, sys\nfrom collections import (OrderedDict as OD, deque)\nfrom x import *"),
            (v(&["os", "sys", "OD", "deque"]), v(&[]))
        );
    }

    #[test]
    fn read_before_rebinding() {
        assert_eq!(sets("x = x + 1"), (v(&["x"]), v(&["x"])));
        assert_eq!(sets("x = 1\ny = x"), (v(&["x", "y"]), v(&[])));
        assert_eq!(
            sets("total += step"),
            (v(&["total"]), v(&["step", "total"]))
        );
    }

    #[test]
    fn attribute_and_subscript_targets_define_nothing() {
        assert_eq!(sets("df.x = 1"), (v(&[]), v(&["df"])));
        assert_eq!(sets("df['col'] = values"), (v(&[]), v(&["values", "df"])));
    }

    #[test]
    fn tuple_unpacking_and_star() {
        assert_eq!(
            sets("a, (b, *c) = pairs"),
            (v(&["a", "b", "c"]), v(&["pairs"]))
        );
        assert_eq!(sets("[x, y] = z"), (v(&["x", "y"]), v(&["z"])));
    }

    #[test]
    fn keyword_arguments_are_not_reads() {
        assert_eq!(
            sets("fig = plt.figure(figsize=size, dpi=100)"),
            (v(&["fig"]), v(&["plt", "size"]))
        );
    }

    #[test]
    fn builtins_excluded() {
        assert_eq!(sets("print(len(data))"), (v(&[]), v(&["data"])));
    }

    #[test]
    fn comprehension_targets_are_local() {
        assert_eq!(
            sets("squares = [v * k for v in values if v > limit]"),
            (v(&["squares"]), v(&["k", "values", "limit"]))
        );
        assert_eq!(
            sets("d = {k: w for k, w in items}"),
            (v(&["d"]), v(&["items"]))
        );
    }

    #[test]
    fn lambda_params_are_local() {
        assert_eq!(
            sets("f = lambda row, scale=factor: row * scale + offset"),
            (v(&["f"]), v(&["factor", "offset"]))
        );
        assert_eq!(
            sets("df2 = df.apply(lambda r: r.x, axis=1)"),
            (v(&["df2"]), v(&["df"]))
        );
    }

    #[test]
    fn function_definitions() {
        let src = "def clean(frame, cols=default_cols):\n    tmp = frame.dropna()\n    return tmp[cols] * ratio\n";
        assert_eq!(sets(src), (v(&["clean"]), v(&["default_cols", "ratio"])));
    }

    #[test]
    fn class_definitions() {
        let src = "class Model(Base):\n    scale = 2\n    def fit(self, x):\n        return x * self.scale * k\n";
        assert_eq!(sets(src), (v(&["Model"]), v(&["Base", "k"])));
    }

    #[test]
    fn compound_statements() {
        let src = "for i, row in df.iterrows():\n    acc = acc + row\nif acc > 3: flag = True\nwith open(path) as fh:\n    text = fh.read()\n";
        assert_eq!(
            sets(src),
            (
                v(&["i", "row", "acc", "flag", "fh", "text"]),
                v(&["df", "acc", "path"])
            )
        );
    }

    #[test]
    fn try_except() {
        let src = "try:\n    v = risky()\nexcept ValueError as err:\n    log(err)\n";
        assert_eq!(sets(src), (v(&["v", "err"]), v(&["risky", "log"])));
    }

    #[test]
    fn walrus_and_annotations() {
        assert_eq!(sets("if (n := len(xs)) > 3: pass"), (v(&["n"]), v(&["xs"])));
        assert_eq!(sets("count: int = start"), (v(&["count"]), v(&["start"])));
        assert_eq!(sets("count: int"), (v(&[]), v(&[])));
    }

    #[test]
    fn magics_and_comments_ignored() {
        assert_eq!(
            sets("%matplotlib inline\n# load\nimport seaborn as sns  # plotting"),
            (v(&["sns"]), v(&[]))
        );
    }

    #[test]
    fn data_file_literals() {
        let a =
            analyze_cell_names("raw = pd.read_csv('data/covid_19.csv')\nmsg = 'hello world.csv'");
        assert_eq!(
            a.resources.into_iter().collect::<Vec<_>>(),
            v(&["data/covid_19.csv"])
        );
        assert!(looks_like_data_path("data.csv"));
        assert!(!looks_like_data_path("df.head"));
        assert!(!looks_like_data_path(".csv"));
    }

    #[test]
    fn unparseable_source_yields_diagnostic() {
        let a = analyze_cell_names("x = (1,\ny = 'unterminated");
        assert!(a.diagnostic.is_some());
        assert!(a.defined.is_empty() && a.referenced.is_empty());
    }

    #[test]
    fn query_strings_are_not_names() {
        assert_eq!(
            sets("germany = df.query(\"Case_Type == 'Confirmed'\")"),
            (v(&["germany"]), v(&["df"]))
        );
    }
}
