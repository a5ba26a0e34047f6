//! Island-grammar parser for decompiler pseudo-C.
//!
//! Statements and top-level constructs the grammar recognizes become typed
//! nodes; anything else becomes `UnknownStatement` (resynchronized at the
//! next `;`, or after the matching `}`, at the current brace depth) or, inside
//! argument lists and conditions, `UnknownExpr`. The parser is total.

use super::ast::{AstNode, FuzzyAst, NodeType};
use super::lexer::{LexToken, TokenKind};

/// Nesting budget shared by statements and expressions.
const MAX_NESTING: usize = 128;

const TYPE_KEYWORDS: &[&str] = &[
    "void",
    "char",
    "short",
    "int",
    "long",
    "float",
    "double",
    "signed",
    "unsigned",
    "bool",
    "const",
    "volatile",
    "static",
    "extern",
    "register",
    "auto",
    "struct",
    "union",
    "enum",
    "typedef",
    "inline",
    "wchar_t",
    "char16_t",
    "char32_t",
    "thread_local",
    "constexpr",
    "mutable",
    "virtual",
    "explicit",
    "friend",
    "typename",
    "class",
];

/// Type names the decompiler emits without a declaration in scope.
const KNOWN_TYPES: &[&str] = &[
    "_BYTE", "_WORD", "_DWORD", "_QWORD", "_OWORD", "_TBYTE", "_BOOL1", "_BOOL2", "_BOOL4", "_BOOL8", "_UNKNOWN",
    "__int8", "__int16", "__int32", "__int64", "__int128", "size_t", "ssize_t", "FILE", "int8_t", "int16_t", "int32_t",
    "int64_t", "uint8_t", "uint16_t", "uint32_t", "uint64_t", "BYTE", "WORD", "DWORD", "BOOL", "__m128", "__m128i",
    "__m128d",
];

const ASSIGN_OPS: &[&str] = &["=", "+=", "-=", "*=", "/=", "%=", "<<=", ">>=", "&=", "^=", "|="];

fn binary_precedence(op: &str) -> Option<u8> {
    Some(match op {
        "||" => 1,
        "&&" => 2,
        "|" => 3,
        "^" => 4,
        "&" => 5,
        "==" | "!=" => 6,
        "<" | ">" | "<=" | ">=" => 7,
        "<<" | ">>" => 8,
        "+" | "-" => 9,
        "*" | "/" | "%" => 10,
        _ => return None,
    })
}

pub fn parse_pseudo_c(tokens: &[LexToken]) -> FuzzyAst {
    let mut p = Parser { toks: tokens, pos: 0, nesting: 0 };
    let mut root = AstNode::new(NodeType::TranslationUnit);
    while !p.eof() {
        if let Some(node) = p.statement() {
            root.children.push(node);
        }
    }
    FuzzyAst::new(root)
}

/// Convenience: lex then parse.
pub fn parse_str(text: &str) -> FuzzyAst {
    parse_pseudo_c(&super::lexer::lex_pseudo_c(text))
}

#[derive(Debug)]
struct Fail;

type PResult<T> = Result<T, Fail>;

enum Word {
    Ident(String),
    TypeKeyword(String),
}

struct Parser<'a> {
    toks: &'a [LexToken],
    pos: usize,
    nesting: usize,
}

impl<'a> Parser<'a> {
    fn eof(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn tok(&self, at: usize) -> Option<&'a LexToken> {
        self.toks.get(at)
    }

    fn peek(&self) -> Option<&'a LexToken> {
        self.tok(self.pos)
    }

    fn punct_at(&self, at: usize, p: &str) -> bool {
        self.tok(at).is_some_and(|t| t.is_punct(p))
    }

    fn at(&self, p: &str) -> bool {
        self.punct_at(self.pos, p)
    }

    fn at_keyword(&self, kw: &str) -> bool {
        self.peek().is_some_and(|t| t.kind == TokenKind::Keyword && t.text == kw)
    }

    fn eat(&mut self, p: &str) -> bool {
        if self.at(p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, p: &str) -> PResult<()> {
        if self.eat(p) {
            Ok(())
        } else {
            Err(Fail)
        }
    }

    fn enter(&mut self) -> PResult<()> {
        if self.nesting >= MAX_NESTING {
            return Err(Fail);
        }
        self.nesting += 1;
        Ok(())
    }

    fn leave(&mut self) {
        self.nesting -= 1;
    }

    fn nested<T>(&mut self, f: impl FnOnce(&mut Self) -> PResult<T>) -> PResult<T> {
        self.enter()?;
        let r = f(self);
        self.leave();
        r
    }

    /// Reads an identifier (joining `a::b` qualified names) or a type keyword
    /// at `at`, returning it with the number of tokens it spans.
    fn word_at(&self, at: usize) -> Option<(Word, usize)> {
        let t = self.tok(at)?;
        match t.kind {
            TokenKind::Keyword if TYPE_KEYWORDS.contains(&t.text.as_str()) => {
                Some((Word::TypeKeyword(t.text.clone()), 1))
            }
            TokenKind::Identifier => {
                let mut text = t.text.clone();
                let mut n = 1;
                loop {
                    if let Some((args, m)) = self.template_args_at(at + n) {
                        text.push_str(&args);
                        n += m;
                    }
                    if !self.punct_at(at + n, "::") {
                        break;
                    }
                    let next = at + n + 1;
                    if self.tok(next).is_some_and(|t| t.kind == TokenKind::Identifier) {
                        text.push_str("::");
                        text.push_str(&self.toks[next].text);
                        n += 2;
                    } else if let Some((name, m)) = self.member_name_at(next) {
                        text.push_str("::");
                        text.push_str(&name);
                        n += 1 + m;
                        break;
                    } else {
                        break;
                    }
                }
                Some((Word::Ident(text), n))
            }
            TokenKind::Keyword if t.text == "operator" => {
                self.member_name_at(at).map(|(name, n)| (Word::Ident(name), n))
            }
            _ => None,
        }
    }

    /// Balanced `<...>` at `at` made of type-like tokens and followed by `::`,
    /// as in `std::vector<int>::push_back`.
    fn template_args_at(&self, at: usize) -> Option<(String, usize)> {
        if !self.punct_at(at, "<") {
            return None;
        }
        let mut text = String::new();
        let mut depth = 0usize;
        let mut n = 0;
        loop {
            let t = self.tok(at + n)?;
            n += 1;
            match (t.kind, t.text.as_str()) {
                (TokenKind::Punct, "<") => depth += 1,
                (TokenKind::Punct, ">") => depth -= 1,
                (TokenKind::Punct, ">>") => depth = depth.checked_sub(2)?,
                (TokenKind::Punct, "," | "::") => {}
                (TokenKind::Punct, "*" | "&") | (TokenKind::Identifier | TokenKind::Keyword | TokenKind::Number, _) => {
                    if text.ends_with(|c: char| c.is_alphanumeric() || c == '_') {
                        text.push(' ');
                    }
                }
                _ => return None,
            }
            text.push_str(&t.text);
            if t.text == "," {
                text.push(' ');
            }
            if depth == 0 {
                break;
            }
        }
        self.punct_at(at + n, "::").then_some((text, n))
    }

    /// `operator<op>`, `operator new[]` or `~Name` starting at `at`.
    fn member_name_at(&self, at: usize) -> Option<(String, usize)> {
        let t = self.tok(at)?;
        if t.is_punct("~") {
            let name = self.tok(at + 1).filter(|t| t.kind == TokenKind::Identifier)?;
            return Some((format!("~{}", name.text), 2));
        }
        if !(t.kind == TokenKind::Keyword && t.text == "operator") {
            return None;
        }
        let op = self.tok(at + 1)?;
        let mut name = String::from("operator");
        let mut n = 2;
        match op.kind {
            TokenKind::Keyword if matches!(op.text.as_str(), "new" | "delete") => {
                name.push(' ');
                name.push_str(&op.text);
                if self.punct_at(at + 2, "[") && self.punct_at(at + 3, "]") {
                    name.push_str("[]");
                    n += 2;
                }
            }
            TokenKind::Punct if op.text == "(" => {
                if !self.punct_at(at + 2, ")") {
                    return None;
                }
                name.push_str("()");
                n += 1;
            }
            TokenKind::Punct if op.text == "[" => {
                if !self.punct_at(at + 2, "]") {
                    return None;
                }
                name.push_str("[]");
                n += 1;
            }
            TokenKind::Punct if !matches!(op.text.as_str(), ")" | "{" | "}" | ";" | ",") => name.push_str(&op.text),
            _ => return None,
        }
        Some((name, n))
    }

    fn is_type_word(word: &Word) -> bool {
        match word {
            Word::TypeKeyword(_) => true,
            Word::Ident(s) => KNOWN_TYPES.contains(&s.as_str()),
        }
    }

    fn is_declaration_start(&self) -> bool {
        let Some((w0, n0)) = self.word_at(self.pos) else {
            return false;
        };
        if Self::is_type_word(&w0) {
            return true;
        }
        let p = self.pos + n0;
        if self.word_at(p).is_some() {
            return true;
        }
        let mut q = p;
        while self.punct_at(q, "*") {
            q += 1;
        }
        if q == p {
            return false;
        }
        match self.word_at(q) {
            Some((Word::Ident(_), n)) => {
                let r = q + n;
                [";", "=", ",", "[", ")", "("].iter().any(|s| self.punct_at(r, s))
            }
            _ => false,
        }
    }

    /// `(type)` at `at`? Returns the position just past `)`.
    fn cast_ahead(&self, at: usize) -> Option<usize> {
        if !self.punct_at(at, "(") {
            return None;
        }
        let mut q = at + 1;
        let mut first_is_type = None;
        let mut stars = 0;
        loop {
            if let Some((w, n)) = self.word_at(q) {
                if stars > 0 {
                    // `(a * b)` is arithmetic, not a pointer type.
                    return None;
                }
                first_is_type.get_or_insert(Self::is_type_word(&w));
                q += n;
            } else if self.punct_at(q, "*") || self.punct_at(q, "&") {
                first_is_type?;
                stars += 1;
                q += 1;
            } else {
                break;
            }
        }
        if !self.punct_at(q, ")") || !(first_is_type? || stars > 0) {
            return None;
        }
        Some(q + 1)
    }

    fn can_start_operand(&self, at: usize) -> bool {
        let Some(t) = self.tok(at) else { return false };
        match t.kind {
            TokenKind::Identifier | TokenKind::Number | TokenKind::StringLit | TokenKind::CharLit => true,
            TokenKind::Keyword => matches!(t.text.as_str(), "sizeof" | "this" | "true" | "false" | "nullptr"),
            TokenKind::Punct => matches!(t.text.as_str(), "(" | "-" | "+" | "!" | "~" | "*" | "&" | "++" | "--"),
            TokenKind::Unknown => false,
        }
    }

    fn skip_to_statement_end(&mut self) {
        let start = self.pos;
        let mut depth = 0usize;
        while let Some(t) = self.peek() {
            if t.is_punct("{") {
                depth += 1;
            } else if t.is_punct("}") {
                if depth == 0 {
                    break;
                }
                depth -= 1;
                if depth == 0 {
                    self.pos += 1;
                    break;
                }
            } else if t.is_punct(";") && depth == 0 {
                self.pos += 1;
                break;
            }
            self.pos += 1;
        }
        if self.pos == start {
            self.pos += 1;
        }
    }

    /// Parses one statement, recovering to an `UnknownStatement`. Returns
    /// `None` for empty statements.
    fn statement(&mut self) -> Option<AstNode> {
        if self.eat(";") {
            return None;
        }
        let start = self.pos;
        match self.nested(Self::try_statement) {
            Ok(node) => Some(node),
            Err(Fail) => {
                self.pos = start;
                self.skip_to_statement_end();
                Some(AstNode::new(NodeType::UnknownStatement))
            }
        }
    }

    /// The body of a control statement, where an empty `;` still needs a node.
    fn body(&mut self) -> PResult<AstNode> {
        if self.eof() || self.at("}") {
            return Err(Fail);
        }
        Ok(self.statement().unwrap_or_else(|| AstNode::new(NodeType::CompoundStatement)))
    }

    fn try_statement(&mut self) -> PResult<AstNode> {
        let t = self.peek().ok_or(Fail)?;
        if t.kind == TokenKind::Punct && t.text.starts_with('#') {
            self.pos += 1;
            return Ok(AstNode::new(NodeType::UnknownStatement));
        }
        if t.is_punct("{") {
            return self.compound();
        }
        if t.kind == TokenKind::Keyword {
            match t.text.as_str() {
                "if" => return self.if_statement(),
                "while" => {
                    self.pos += 1;
                    let cond = self.paren_condition()?;
                    let body = self.body()?;
                    return Ok(AstNode::with_children(NodeType::WhileStatement, None, vec![cond, body]));
                }
                "do" => {
                    self.pos += 1;
                    let body = self.body()?;
                    if !self.at_keyword("while") {
                        return Err(Fail);
                    }
                    self.pos += 1;
                    let cond = self.paren_condition()?;
                    self.expect(";")?;
                    return Ok(AstNode::with_children(NodeType::DoStatement, None, vec![body, cond]));
                }
                "for" => return self.for_statement(),
                "switch" => {
                    self.pos += 1;
                    let cond = self.paren_condition()?;
                    let body = self.body()?;
                    return Ok(AstNode::with_children(NodeType::SwitchStatement, None, vec![cond, body]));
                }
                "case" => {
                    self.pos += 1;
                    let value = self.conditional()?;
                    self.expect(":")?;
                    return Ok(AstNode::with_children(NodeType::CaseLabel, None, vec![value]));
                }
                "default" => {
                    self.pos += 1;
                    self.expect(":")?;
                    return Ok(AstNode::with_text(NodeType::CaseLabel, "default"));
                }
                "break" | "continue" => {
                    let ty = if t.text == "break" { NodeType::BreakStatement } else { NodeType::ContinueStatement };
                    self.pos += 1;
                    self.expect(";")?;
                    return Ok(AstNode::new(ty));
                }
                "return" => {
                    self.pos += 1;
                    let mut node = AstNode::new(NodeType::ReturnStatement);
                    if !self.eat(";") {
                        node.children.push(self.expression()?);
                        self.expect(";")?;
                    }
                    return Ok(node);
                }
                "goto" => {
                    self.pos += 1;
                    let label = self.peek().filter(|t| t.kind == TokenKind::Identifier).ok_or(Fail)?;
                    self.pos += 1;
                    self.expect(";")?;
                    return Ok(AstNode::with_text(NodeType::GotoStatement, label.text.clone()));
                }
                _ => {}
            }
        }
        if t.kind == TokenKind::Identifier && self.punct_at(self.pos + 1, ":") {
            self.pos += 2;
            return Ok(AstNode::with_text(NodeType::LabelStatement, t.text.clone()));
        }
        if self.is_declaration_start() {
            return self.declaration(true);
        }
        let expr = self.expression()?;
        self.expect(";")?;
        Ok(expr)
    }

    fn compound(&mut self) -> PResult<AstNode> {
        self.expect("{")?;
        let mut node = AstNode::new(NodeType::CompoundStatement);
        // An unterminated block at end of input is kept as parsed so far.
        while !self.eof() && !self.eat("}") {
            if let Some(child) = self.statement() {
                node.children.push(child);
            }
        }
        Ok(node)
    }

    fn if_statement(&mut self) -> PResult<AstNode> {
        self.pos += 1;
        let cond = self.paren_condition()?;
        let then = self.body()?;
        let mut children = vec![cond, then];
        if self.at_keyword("else") {
            self.pos += 1;
            let other = self.body()?;
            children.push(AstNode::with_children(NodeType::ElseClause, None, vec![other]));
        }
        Ok(AstNode::with_children(NodeType::IfStatement, None, children))
    }

    fn for_statement(&mut self) -> PResult<AstNode> {
        self.pos += 1;
        self.expect("(")?;
        let mut children = Vec::new();
        if !self.eat(";") {
            if self.is_declaration_start() {
                children.push(self.declaration(false)?);
            } else {
                children.push(self.expression()?);
                self.expect(";")?;
            }
        }
        if !self.eat(";") {
            children.push(self.expression()?);
            self.expect(";")?;
        }
        if !self.eat(")") {
            children.push(self.expression()?);
            self.expect(")")?;
        }
        children.push(self.body()?);
        Ok(AstNode::with_children(NodeType::ForStatement, None, children))
    }

    /// `( expr )`; an unparseable condition becomes `UnknownExpr` spanning the
    /// balanced parentheses.
    fn paren_condition(&mut self) -> PResult<AstNode> {
        self.expect("(")?;
        let start = self.pos;
        if let Ok(e) = self.expression() {
            if self.eat(")") {
                return Ok(e);
            }
        }
        self.pos = start;
        self.skip_unknown_expr(&[")"])?;
        self.expect(")")?;
        Ok(AstNode::new(NodeType::UnknownExpr))
    }

    /// Skips to one of `stops` at parenthesis depth 0 without crossing a
    /// statement boundary. Fails if nothing was skipped or a boundary is hit.
    fn skip_unknown_expr(&mut self, stops: &[&str]) -> PResult<()> {
        let start = self.pos;
        let mut depth = 0usize;
        while let Some(t) = self.peek() {
            if t.kind == TokenKind::Punct {
                match t.text.as_str() {
                    ";" | "{" | "}" => return Err(Fail),
                    "(" | "[" => depth += 1,
                    ")" | "]" if depth > 0 => depth -= 1,
                    s if depth == 0 && stops.contains(&s) => break,
                    ")" | "]" => return Err(Fail),
                    _ => {}
                }
            }
            self.pos += 1;
        }
        if self.pos == start || self.eof() {
            return Err(Fail);
        }
        Ok(())
    }

    /// Specifier words, stars and a trailing declarator name. Returns the
    /// type text and the name (if the last word was an identifier).
    fn typed_name(&mut self) -> PResult<(String, Option<String>)> {
        let mut parts: Vec<String> = Vec::new();
        let mut last_ident: Option<usize> = None;
        loop {
            if let Some((w, n)) = self.word_at(self.pos) {
                if let Word::Ident(_) = w {
                    last_ident = Some(parts.len());
                }
                parts.push(match w {
                    Word::Ident(s) | Word::TypeKeyword(s) => s,
                });
                self.pos += n;
            } else if self.at("*") || self.at("&") {
                parts.push(self.toks[self.pos].text.clone());
                self.pos += 1;
            } else if !parts.is_empty() && self.at_keyword("this") {
                // Hex-Rays names the implicit object parameter `this`.
                last_ident = Some(parts.len());
                parts.push("this".to_string());
                self.pos += 1;
                break;
            } else {
                break;
            }
        }
        let name = match last_ident {
            Some(i) if i + 1 == parts.len() && i > 0 => Some(parts.pop().unwrap()),
            _ => None,
        };
        if parts.is_empty() {
            return Err(Fail);
        }
        Ok((join_type(&parts), name))
    }

    fn parameter_list(&mut self) -> PResult<AstNode> {
        self.expect("(")?;
        let mut list = AstNode::new(NodeType::ParameterList);
        if self.eat(")") {
            return Ok(list);
        }
        loop {
            if self.eat("...") {
                list.children.push(AstNode::with_text(NodeType::Parameter, "..."));
            } else {
                let (mut ty, name) = self.typed_name()?;
                while self.eat("[") {
                    while !self.at("]") {
                        self.peek().filter(|t| !t.is_punct(")") && !t.is_punct(";")).ok_or(Fail)?;
                        self.pos += 1;
                    }
                    self.pos += 1;
                    ty.push_str("[]");
                }
                let mut param = AstNode::with_text(NodeType::Parameter, ty);
                if let Some(name) = name {
                    param.children.push(AstNode::with_text(NodeType::Identifier, name));
                }
                list.children.push(param);
            }
            if self.eat(")") {
                return Ok(list);
            }
            self.expect(",")?;
        }
    }

    /// A declaration, or a function definition when the first declarator has
    /// a parameter list followed by a body. Consumes the trailing `;`.
    fn declaration(&mut self, allow_function: bool) -> PResult<AstNode> {
        let (type_text, name) = self.typed_name()?;
        let mut name = name.ok_or(Fail)?;
        let mut decl = AstNode::with_text(NodeType::Declaration, type_text);
        let mut first = true;
        loop {
            let mut declarator = AstNode::with_text(NodeType::Identifier, name);
            if self.at("(") {
                let params = self.parameter_list()?;
                while self.peek().is_some_and(|t| t.kind == TokenKind::Identifier || t.text == "const") && !self.at(")")
                {
                    self.pos += 1;
                }
                if first && allow_function && self.at("{") {
                    let AstNode { token_text, .. } = declarator;
                    let body = self.compound()?;
                    return Ok(AstNode::with_children(NodeType::FunctionDef, token_text, vec![params, body]));
                }
                decl.children.push(declarator);
                decl.children.push(params);
            } else {
                while self.eat("[") {
                    let mut index = AstNode::with_children(NodeType::IndexExpr, None, vec![declarator]);
                    if !self.at("]") {
                        index.children.push(self.expression()?);
                    }
                    self.expect("]")?;
                    declarator = index;
                }
                if self.eat("=") {
                    let init = if self.at("{") { self.initializer_list()? } else { self.assignment()? };
                    declarator =
                        AstNode::with_children(NodeType::AssignmentExpr, Some("=".into()), vec![declarator, init]);
                }
                decl.children.push(declarator);
            }
            first = false;
            if self.eat(";") {
                return Ok(decl);
            }
            self.expect(",")?;
            while self.eat("*") || self.eat("&") {}
            match self.word_at(self.pos) {
                Some((Word::Ident(n), len)) => {
                    name = n;
                    self.pos += len;
                }
                _ => return Err(Fail),
            }
        }
    }

    fn initializer_list(&mut self) -> PResult<AstNode> {
        self.nested(|p| {
            p.expect("{")?;
            let mut list = AstNode::new(NodeType::ArgumentList);
            while !p.eat("}") {
                let item = if p.at("{") { p.initializer_list()? } else { p.assignment()? };
                list.children.push(item);
                if !p.eat(",") {
                    p.expect("}")?;
                    break;
                }
            }
            Ok(list)
        })
    }

    fn expression(&mut self) -> PResult<AstNode> {
        let mut lhs = self.assignment()?;
        while self.eat(",") {
            let rhs = self.assignment()?;
            lhs = AstNode::with_children(NodeType::BinaryExpr, Some(",".into()), vec![lhs, rhs]);
        }
        Ok(lhs)
    }

    fn assignment(&mut self) -> PResult<AstNode> {
        self.nested(|p| {
            let lhs = p.conditional()?;
            if let Some(op) = p.peek().filter(|t| t.kind == TokenKind::Punct && ASSIGN_OPS.contains(&t.text.as_str())) {
                p.pos += 1;
                let rhs = p.assignment()?;
                return Ok(AstNode::with_children(NodeType::AssignmentExpr, Some(op.text.clone()), vec![lhs, rhs]));
            }
            Ok(lhs)
        })
    }

    fn conditional(&mut self) -> PResult<AstNode> {
        let cond = self.binary(1)?;
        if !self.eat("?") {
            return Ok(cond);
        }
        self.nested(|p| {
            let yes = p.expression()?;
            p.expect(":")?;
            let no = p.conditional()?;
            Ok(AstNode::with_children(NodeType::ConditionalExpr, None, vec![cond, yes, no]))
        })
    }

    fn binary(&mut self, min_prec: u8) -> PResult<AstNode> {
        let mut lhs = self.unary()?;
        while let Some((op, prec)) = self
            .peek()
            .filter(|t| t.kind == TokenKind::Punct)
            .and_then(|t| binary_precedence(&t.text).map(|p| (t.text.clone(), p)))
        {
            if prec < min_prec {
                break;
            }
            self.pos += 1;
            let rhs = self.nested(|p| p.binary(prec + 1))?;
            lhs = AstNode::with_children(NodeType::BinaryExpr, Some(op), vec![lhs, rhs]);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<AstNode> {
        self.nested(|p| {
            let t = p.peek().ok_or(Fail)?;
            if t.kind == TokenKind::Punct && matches!(t.text.as_str(), "++" | "--" | "-" | "+" | "!" | "~" | "*" | "&")
            {
                p.pos += 1;
                let operand = p.unary()?;
                return Ok(AstNode::with_children(NodeType::UnaryExpr, Some(t.text.clone()), vec![operand]));
            }
            if t.kind == TokenKind::Keyword && t.text == "sizeof" {
                p.pos += 1;
                if let Some(end) = p.cast_ahead(p.pos) {
                    p.pos += 1;
                    let (ty, name) = p.typed_name()?;
                    let ty = match name {
                        Some(n) => format!("{ty} {n}"),
                        None => ty,
                    };
                    if p.pos + 1 != end {
                        return Err(Fail);
                    }
                    p.pos = end;
                    let operand = AstNode::with_text(NodeType::Identifier, ty);
                    return Ok(AstNode::with_children(NodeType::UnaryExpr, Some("sizeof".into()), vec![operand]));
                }
                let operand = p.unary()?;
                return Ok(AstNode::with_children(NodeType::UnaryExpr, Some("sizeof".into()), vec![operand]));
            }
            if let Some(end) = p.cast_ahead(p.pos).filter(|&end| p.can_start_operand(end)) {
                p.pos += 1;
                let (ty, name) = p.typed_name()?;
                let ty = match name {
                    Some(n) => format!("{ty} {n}"),
                    None => ty,
                };
                if p.pos + 1 != end {
                    return Err(Fail);
                }
                p.pos = end;
                let operand = p.unary()?;
                return Ok(AstNode::with_children(NodeType::CastExpr, Some(ty), vec![operand]));
            }
            p.postfix()
        })
    }

    fn postfix(&mut self) -> PResult<AstNode> {
        let mut node = self.primary()?;
        loop {
            if self.at("(") {
                self.pos += 1;
                let args = self.arguments()?;
                node = AstNode::with_children(NodeType::CallExpr, None, vec![node, args]);
            } else if self.eat("[") {
                let index = self.nested(Self::expression)?;
                self.expect("]")?;
                node = AstNode::with_children(NodeType::IndexExpr, None, vec![node, index]);
            } else if self.at(".") || self.at("->") {
                let op = self.toks[self.pos].text.clone();
                self.pos += 1;
                let field = self.peek().filter(|t| t.kind == TokenKind::Identifier).ok_or(Fail)?;
                self.pos += 1;
                let field = AstNode::with_text(NodeType::Identifier, field.text.clone());
                node = AstNode::with_children(NodeType::MemberExpr, Some(op), vec![node, field]);
            } else if self.at("++") || self.at("--") {
                let op = format!("post{}", self.toks[self.pos].text);
                self.pos += 1;
                node = AstNode::with_children(NodeType::UnaryExpr, Some(op), vec![node]);
            } else {
                return Ok(node);
            }
        }
    }

    /// Call arguments after `(`, through the closing `)`.
    fn arguments(&mut self) -> PResult<AstNode> {
        let mut list = AstNode::new(NodeType::ArgumentList);
        if self.eat(")") {
            return Ok(list);
        }
        loop {
            let start = self.pos;
            let arg = match self.nested(Self::assignment) {
                Ok(arg) if self.at(",") || self.at(")") => arg,
                _ => {
                    self.pos = start;
                    self.skip_unknown_expr(&[",", ")"])?;
                    AstNode::new(NodeType::UnknownExpr)
                }
            };
            list.children.push(arg);
            if self.eat(")") {
                return Ok(list);
            }
            self.expect(",")?;
        }
    }

    fn primary(&mut self) -> PResult<AstNode> {
        let t = self.peek().ok_or(Fail)?;
        match t.kind {
            TokenKind::Identifier => {
                let (word, n) = self.word_at(self.pos).ok_or(Fail)?;
                self.pos += n;
                let Word::Ident(text) = word else { unreachable!("identifier token") };
                Ok(AstNode::with_text(NodeType::Identifier, text))
            }
            TokenKind::Number | TokenKind::CharLit => {
                self.pos += 1;
                Ok(AstNode::with_text(NodeType::Literal, t.text.clone()))
            }
            TokenKind::StringLit => {
                let mut text = t.text.clone();
                self.pos += 1;
                while let Some(next) = self.peek().filter(|t| t.kind == TokenKind::StringLit) {
                    text.push(' ');
                    text.push_str(&next.text);
                    self.pos += 1;
                }
                Ok(AstNode::with_text(NodeType::Literal, text))
            }
            TokenKind::Keyword => match t.text.as_str() {
                "operator" => {
                    let (word, n) = self.word_at(self.pos).ok_or(Fail)?;
                    self.pos += n;
                    let Word::Ident(text) = word else { unreachable!("operator name") };
                    Ok(AstNode::with_text(NodeType::Identifier, text))
                }
                "true" | "false" | "nullptr" => {
                    self.pos += 1;
                    Ok(AstNode::with_text(NodeType::Literal, t.text.clone()))
                }
                "this" => {
                    self.pos += 1;
                    Ok(AstNode::with_text(NodeType::Identifier, "this"))
                }
                _ => Err(Fail),
            },
            TokenKind::Punct if t.text == "(" => {
                self.pos += 1;
                let inner = self.nested(Self::expression)?;
                self.expect(")")?;
                Ok(inner)
            }
            _ => Err(Fail),
        }
    }
}

fn join_type(parts: &[String]) -> String {
    let mut out = String::new();
    for p in parts {
        let glue = !out.is_empty() && !(matches!(p.as_str(), "*" | "&") && out.ends_with(['*', '&']));
        if glue {
            out.push(' ');
        }
        out.push_str(p);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::ast::node_depths;
    use super::*;

    fn sexpr(text: &str) -> String {
        parse_str(text).to_sexpr()
    }

    #[test]
    fn minimal_function() {
        let ast = parse_str("int f(){return 0;}");
        assert_eq!(
            ast.to_sexpr(),
            r#"(TranslationUnit (FunctionDef "f" (ParameterList) (CompoundStatement (ReturnStatement (Literal "0")))))"#
        );
        assert_eq!(ast.node_count, 6);
        assert_eq!(node_depths(&ast)[&NodeType::ReturnStatement], vec![3]);
        assert_eq!(ast.max_depth, 4);
    }

    #[test]
    fn empty_program() {
        let ast = parse_str("");
        assert_eq!(ast.node_count, 1);
        assert_eq!(ast.max_depth, 0);
    }

    #[test]
    fn mangled_input_recovers() {
        let ast = parse_str("if (a) { b( } ;;");
        assert!(ast.contains(NodeType::UnknownStatement));
        assert_eq!(
            ast.to_sexpr(),
            r#"(TranslationUnit (IfStatement (Identifier "a") (CompoundStatement (UnknownStatement))))"#
        );
    }

    #[test]
    fn declarations() {
        assert_eq!(
            sexpr("unsigned int v5; _DWORD *v4, v6 = 3; char s[16];"),
            concat!(
                r#"(TranslationUnit (Declaration "unsigned int" (Identifier "v5"))"#,
                r#" (Declaration "_DWORD *" (Identifier "v4") (AssignmentExpr "=" (Identifier "v6") (Literal "3")))"#,
                r#" (Declaration "char" (IndexExpr (Identifier "s") (Literal "16"))))"#
            )
        );
    }

    #[test]
    fn hexrays_function_header() {
        assert_eq!(
            sexpr("int __cdecl main(int argc, const char **argv, const char **envp) { }"),
            concat!(
                r#"(TranslationUnit (FunctionDef "main" (ParameterList (Parameter "int" (Identifier "argc"))"#,
                r#" (Parameter "const char **" (Identifier "argv")) (Parameter "const char **" (Identifier "envp")))"#,
                r#" (CompoundStatement)))"#
            )
        );
    }

    #[test]
    fn casts_and_derefs() {
        assert_eq!(
            sexpr("v3 = *(_DWORD *)(a1 + 4);"),
            concat!(
                r#"(TranslationUnit (AssignmentExpr "=" (Identifier "v3") (UnaryExpr "*" (CastExpr "_DWORD *""#,
                r#" (BinaryExpr "+" (Identifier "a1") (Literal "4"))))))"#
            )
        );
        // Parenthesized variables are not casts.
        assert_eq!(
            sexpr("x = (a) - 1;"),
            r#"(TranslationUnit (AssignmentExpr "=" (Identifier "x") (BinaryExpr "-" (Identifier "a") (Literal "1"))))"#
        );
    }

    #[test]
    fn precedence() {
        assert_eq!(
            sexpr("x = a + b * c << 1 == d && e || f ? g : h;"),
            concat!(
                r#"(TranslationUnit (AssignmentExpr "=" (Identifier "x") (ConditionalExpr"#,
                r#" (BinaryExpr "||" (BinaryExpr "&&" (BinaryExpr "==" (BinaryExpr "<<" (BinaryExpr "+" (Identifier "a")"#,
                r#" (BinaryExpr "*" (Identifier "b") (Identifier "c"))) (Literal "1")) (Identifier "d")) (Identifier "e"))"#,
                r#" (Identifier "f")) (Identifier "g") (Identifier "h"))))"#
            )
        );
    }

    #[test]
    fn unknown_argument_is_local() {
        let ast = parse_str("f(a, int (*)(void), b);");
        assert_eq!(
            ast.to_sexpr(),
            r#"(TranslationUnit (CallExpr (Identifier "f") (ArgumentList (Identifier "a") (UnknownExpr) (Identifier "b"))))"#
        );
    }

    #[test]
    fn deep_nesting_is_bounded() {
        let text = format!("x = {}1{};", "(".repeat(5000), ")".repeat(5000));
        let ast = parse_str(&text);
        assert!(ast.contains(NodeType::UnknownStatement));
        let text = "{".repeat(5000);
        let ast = parse_str(&text);
        assert!(ast.node_count >= 1);
        let text = "if (a) ".repeat(3000) + "x;";
        parse_str(&text);
    }

    #[test]
    fn preprocessor_lines() {
        assert_eq!(
            sexpr("#include <stdio.h>\nint x;"),
            r#"(TranslationUnit (UnknownStatement) (Declaration "int" (Identifier "x")))"#
        );
    }

    #[test]
    fn template_qualified_names() {
        assert_eq!(
            sexpr("void std::vector<int, char *>::f(void *this) { }"),
            concat!(
                r#"(TranslationUnit (FunctionDef "std::vector<int, char *>::f""#,
                r#" (ParameterList (Parameter "void *" (Identifier "this"))) (CompoundStatement)))"#
            )
        );
        // A comparison is not mistaken for template arguments.
        assert_eq!(
            sexpr("int f() { return a < b; }"),
            concat!(
                r#"(TranslationUnit (FunctionDef "f" (ParameterList) (CompoundStatement"#,
                r#" (ReturnStatement (BinaryExpr "<" (Identifier "a") (Identifier "b"))))))"#
            )
        );
    }
}
