use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! node_types {
    ($($name:ident),* $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum NodeType { $($name),* }

        impl NodeType {
            pub const ALL: &'static [NodeType] = &[$(NodeType::$name),*];

            pub fn as_str(self) -> &'static str {
                match self { $(NodeType::$name => stringify!($name)),* }
            }

            pub fn from_name(name: &str) -> Option<NodeType> {
                match name { $(stringify!($name) => Some(NodeType::$name),)* _ => None }
            }
        }
    };
}

node_types! {
    TranslationUnit, FunctionDef, ParameterList, Parameter, CompoundStatement, IfStatement,
    ElseClause, WhileStatement, DoStatement, ForStatement, SwitchStatement, CaseLabel,
    BreakStatement, ContinueStatement, ReturnStatement, GotoStatement, LabelStatement,
    Declaration, AssignmentExpr, ConditionalExpr, BinaryExpr, UnaryExpr, CallExpr,
    ArgumentList, IndexExpr, MemberExpr, CastExpr, Identifier, Literal, UnknownStatement,
    UnknownExpr,
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AstNode {
    pub node_type: NodeType,
    pub children: Vec<AstNode>,
    pub token_text: Option<String>,
}

impl AstNode {
    pub fn new(node_type: NodeType) -> Self {
        AstNode { node_type, children: Vec::new(), token_text: None }
    }

    pub fn with_text(node_type: NodeType, text: impl Into<String>) -> Self {
        AstNode { node_type, children: Vec::new(), token_text: Some(text.into()) }
    }

    pub fn with_children(node_type: NodeType, text: Option<String>, children: Vec<AstNode>) -> Self {
        AstNode { node_type, children, token_text: text }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Pre-order traversal with depths, root at `depth`.
    pub fn walk<'a>(&'a self, depth: usize, visit: &mut impl FnMut(&'a AstNode, usize)) {
        // Iterative so that pathological inputs cannot exhaust the stack.
        let mut stack = vec![(self, depth)];
        while let Some((node, d)) = stack.pop() {
            visit(node, d);
            for child in node.children.iter().rev() {
                stack.push((child, d + 1));
            }
        }
    }

    /// S-expression dump: `(Type "token"? child...)`.
    pub fn to_sexpr(&self) -> String {
        let mut out = String::new();
        write_sexpr(self, &mut out);
        out
    }
}

fn write_sexpr(node: &AstNode, out: &mut String) {
    out.push('(');
    out.push_str(node.node_type.as_str());
    if let Some(text) = &node.token_text {
        out.push(' ');
        out.push_str(&format!("{text:?}"));
    }
    for child in &node.children {
        out.push(' ');
        write_sexpr(child, out);
    }
    out.push(')');
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FuzzyAst {
    pub root: AstNode,
    pub node_count: usize,
    pub max_depth: usize,
}

impl FuzzyAst {
    pub fn new(root: AstNode) -> Self {
        let mut node_count = 0;
        let mut max_depth = 0;
        root.walk(0, &mut |_, d| {
            node_count += 1;
            max_depth = max_depth.max(d);
        });
        FuzzyAst { root, node_count, max_depth }
    }

    pub fn to_sexpr(&self) -> String {
        self.root.to_sexpr()
    }

    pub fn contains(&self, ty: NodeType) -> bool {
        let mut found = false;
        self.root.walk(0, &mut |n, _| found |= n.node_type == ty);
        found
    }
}

/// Depths of every node occurrence, keyed by node type. Root depth is 0.
pub fn node_depths(ast: &FuzzyAst) -> BTreeMap<NodeType, Vec<usize>> {
    let mut out: BTreeMap<NodeType, Vec<usize>> = BTreeMap::new();
    ast.root.walk(0, &mut |n, d| out.entry(n.node_type).or_default().push(d));
    out
}
