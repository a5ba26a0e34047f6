//! Synthetic corpora for tests and benchmarks.
//!
//! Every author gets a style: one option per trait dimension (loop form,
//! integer type, I/O library, branching idiom, increment form, helper naming,
//! memory idiom, guard style), drawn without replacement from a pool shared by
//! every author of a family seed. A sample is a small program built from the
//! author's style and a problem description, rendered consistently as
//! Hex-Rays-like pseudo-C, a control-flow graph, ndisasm and radare2 listings,
//! and a symbol/string dump. Per-sample noise swaps individual traits for
//! random options.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{write_manifest, ArtifactKind, Corpus, Sample, Variant};
use crate::error::{write_file, Error, Result};

const DIMS: usize = 8;
const OPTIONS: [usize; DIMS] = [3, 4, 4, 4, 4, 4, 4, 4];

const LOOP: usize = 0;
const INT_TYPE: usize = 1;
const IO: usize = 2;
const BRANCH: usize = 3;
const INCREMENT: usize = 4;
const NAMING: usize = 5;
const MEMORY: usize = 6;
const GUARD: usize = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Seeds the style pool and the problem set.
    pub family_seed: u64,
    /// Authors are `first_author .. first_author + n_authors` of the family;
    /// disjoint ranges give disjoint authors with distinct styles.
    pub first_author: usize,
    pub n_authors: usize,
    pub n_problems: usize,
    /// Seeds per-sample variation.
    pub seed: u64,
    /// Probability that a trait of one sample is redrawn uniformly.
    pub style_noise: f64,
    /// Probability that a sample contains the author's private helper.
    pub signature_rate: f64,
}

impl SynthConfig {
    /// Noise-free styles plus a private helper in every sample.
    pub fn separable(n_authors: usize, n_problems: usize) -> Self {
        SynthConfig {
            family_seed: 7,
            first_author: 0,
            n_authors,
            n_problems,
            seed: 1,
            style_noise: 0.0,
            signature_rate: 1.0,
        }
    }

    /// Shared-pool styles with per-sample trait noise and no private helper.
    pub fn noisy(n_authors: usize, n_problems: usize) -> Self {
        SynthConfig { style_noise: 0.1, signature_rate: 0.0, ..Self::separable(n_authors, n_problems) }
    }

    pub fn with_authors(mut self, first_author: usize, n_authors: usize) -> Self {
        self.first_author = first_author;
        self.n_authors = n_authors;
        self
    }
}

/// Artifact texts of one generated sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub sample_id: String,
    pub author_id: String,
    pub problem_id: String,
    pub texts: BTreeMap<ArtifactKind, String>,
}

pub fn author_id(index: usize) -> String {
    format!("author{index:03}")
}

fn mix(a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over a simple combination.
    let mut z = a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_add(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

type Style = [usize; DIMS];

/// Styles of distinct authors differ in at least this many traits.
const MIN_STYLE_DISTANCE: usize = 5;

/// The first `count` styles of the family: a seeded walk over every trait
/// combination that keeps combinations far from all earlier picks. Once no
/// such combination is left, the remaining ones follow in walk order.
fn style_pool(family_seed: u64, count: usize) -> Vec<Style> {
    let mut all = vec![[0; DIMS]];
    for (d, &n) in OPTIONS.iter().enumerate() {
        all = all
            .into_iter()
            .flat_map(|s| {
                (0..n).map(move |o| {
                    let mut t = s;
                    t[d] = o;
                    t
                })
            })
            .collect();
    }
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(family_seed, 1)));
    let distance = |a: &Style, b: &Style| a.iter().zip(b).filter(|(x, y)| x != y).count();
    let mut pool: Vec<Style> = Vec::with_capacity(count);
    let mut rest = Vec::new();
    for s in all {
        if pool.len() == count {
            break;
        }
        if pool.iter().all(|p| distance(p, &s) >= MIN_STYLE_DISTANCE) {
            pool.push(s);
        } else {
            rest.push(s);
        }
    }
    let missing = count - pool.len();
    pool.extend(rest.into_iter().take(missing));
    pool
}

#[derive(Debug, Clone)]
struct Problem {
    id: String,
    loops: usize,
    ops: Vec<&'static str>,
    bound: i64,
    modulus: Option<i64>,
    verdict: Option<(&'static str, &'static str)>,
    reads: usize,
}

fn problem(family_seed: u64, index: usize) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(family_seed, 1000 + index as u64));
    let all_ops = ["+", "-", "*", "%", "^", "&", "|", "<<"];
    let mut ops: Vec<&'static str> = all_ops.choose_multiple(&mut rng, 3).copied().collect();
    ops.sort_unstable();
    let verdicts = [("POSSIBLE", "IMPOSSIBLE"), ("YES", "NO"), ("GABRIEL", "RICHARD")];
    Problem {
        id: format!("problem{index:02}"),
        loops: rng.gen_range(1..=3),
        ops,
        bound: *[10, 26, 100, 1000].choose(&mut rng).unwrap(),
        modulus: rng.gen_bool(0.4).then_some(1_000_000_007),
        verdict: rng.gen_bool(0.5).then(|| *verdicts.choose(&mut rng).unwrap()),
        reads: rng.gen_range(1..=3),
    }
}

/// Generates the samples of `config` in author-major, problem-minor order.
pub fn generate(config: &SynthConfig) -> Vec<SynthSample> {
    let pool = style_pool(config.family_seed, config.first_author + config.n_authors);
    let problems: Vec<Problem> = (0..config.n_problems).map(|p| problem(config.family_seed, p)).collect();
    let mut out = Vec::new();
    for (a, &style) in pool.iter().enumerate().skip(config.first_author) {
        for p in &problems {
            let mut rng =
                ChaCha8Rng::seed_from_u64(mix(mix(config.seed, a as u64), p.id.len() as u64 * 7919 + out.len() as u64));
            let mut s = style;
            for (d, t) in s.iter_mut().enumerate() {
                if rng.gen_bool(config.style_noise.clamp(0.0, 1.0)) {
                    *t = rng.gen_range(0..OPTIONS[d]);
                }
            }
            let signature = rng.gen_bool(config.signature_rate.clamp(0.0, 1.0)).then(|| signature_name(a));
            let program = build_program(&s, p, signature.as_deref(), &mut rng);
            let author = author_id(a);
            let texts = render(&program, &s, &mut rng);
            out.push(SynthSample {
                sample_id: format!("{author}_{}", p.id),
                author_id: author,
                problem_id: p.id.clone(),
                texts,
            });
        }
    }
    out
}

fn signature_name(author: usize) -> String {
    const SYL: [&str; 12] = ["ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "ze", "qu", "fa", "do"];
    let h = mix(0x5157, author as u64);
    let mut name = String::from("note_");
    for i in 0..3 {
        name.push_str(SYL[((h >> (i * 8)) % 12) as usize]);
    }
    name
}

/// Writes every sample under `dir/<sample_id>/` with a `manifest.json` in `dir`.
pub fn write_corpus(dir: &Path, config: &SynthConfig) -> Result<Corpus> {
    let mut samples = Vec::new();
    for s in generate(config) {
        let sdir = dir.join(&s.sample_id);
        std::fs::create_dir_all(&sdir).map_err(|e| Error::io(&sdir, e))?;
        let mut paths = BTreeMap::new();
        for (kind, text) in &s.texts {
            let ext = match kind {
                ArtifactKind::PseudoC => "c",
                _ => "txt",
            };
            let path = sdir.join(format!("{}.{ext}", kind.as_str()));
            write_file(&path, text)?;
            paths.insert(*kind, path);
        }
        samples.push(Sample {
            sample_id: s.sample_id,
            author_id: s.author_id,
            problem_id: s.problem_id,
            variant: Variant::Plain,
            artifact_paths: paths,
        });
    }
    let manifest = dir.join("manifest.json");
    let corpus = Corpus::new(samples, &manifest)?;
    write_manifest(&corpus, &manifest)?;
    Ok(corpus)
}

// ---------------------------------------------------------------------------
// Program model

#[derive(Debug, Clone)]
enum Expr {
    Var(String),
    Num(i64),
    Str(String),
    Addr(String),
    Bin(&'static str, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
    Index(String, Box<Expr>),
}

#[derive(Debug, Clone)]
struct Cond {
    lhs: Expr,
    op: &'static str,
    rhs: Expr,
}

#[derive(Debug, Clone)]
enum Stmt {
    Assign(String, Expr),
    Store(String, Expr, Expr),
    Compound(String, &'static str, Expr),
    Inc(String),
    Call(String, Vec<Expr>),
    Loop { var: String, from: Expr, to: Expr, body: Vec<Stmt> },
    If { cond: Cond, then: Vec<Stmt>, els: Vec<Stmt> },
    Switch { scrutinee: Expr, cases: Vec<(i64, Vec<Stmt>)>, default: Vec<Stmt> },
    Ternary { target: String, cond: Cond, a: Expr, b: Expr },
    Goto(String),
    Label(String),
    Return(Expr),
}

#[derive(Debug, Clone)]
struct Function {
    name: String,
    ret: String,
    params: Vec<(String, String)>,
    /// `(type, name, array length)`.
    locals: Vec<(String, String, Option<i64>)>,
    body: Vec<Stmt>,
}

#[derive(Debug, Clone)]
struct Program {
    functions: Vec<Function>,
    imports: Vec<String>,
    strings: Vec<String>,
}

fn int_type(style: &Style) -> &'static str {
    ["int", "unsigned int", "__int64", "char"][style[INT_TYPE]]
}

fn helper_names(style: &Style) -> [&'static str; 3] {
    match style[NAMING] {
        0 => ["read_input", "solve_case", "compute_value"],
        1 => ["readInput", "solveCase", "computeValue"],
        2 => ["rd", "slv", "calc"],
        _ => ["ReadInput", "Solve", "Evaluate"],
    }
}

struct Builder<'a> {
    style: &'a Style,
    rng: &'a mut ChaCha8Rng,
    next_v: usize,
    locals: Vec<(String, String, Option<i64>)>,
    labels: usize,
}

impl Builder<'_> {
    fn local(&mut self, ty: &str) -> String {
        let name = format!("v{}", self.next_v);
        self.next_v += 1;
        self.locals.push((ty.to_string(), name.clone(), None));
        name
    }

    fn counter(&mut self, name: &str) -> String {
        if !self.locals.iter().any(|l| l.1 == name) {
            self.locals.push((int_type(self.style).to_string(), name.to_string(), None));
        }
        name.to_string()
    }

    fn small(&mut self) -> i64 {
        self.rng.gen_range(2..=9)
    }

    fn loop_stmt(&mut self, var: &str, to: Expr, body: Vec<Stmt>) -> Stmt {
        Stmt::Loop { var: var.to_string(), from: Expr::Num(0), to, body }
    }

    fn arith(&mut self, target: &str, src: Expr, ops: &[&'static str]) -> Stmt {
        let op = *ops.choose(self.rng).unwrap();
        let k = self.small();
        Stmt::Assign(target.to_string(), Expr::Bin(op, Box::new(src), Box::new(Expr::Num(k))))
    }

    fn branch(&mut self, value: &str, target: &str, bound: i64) -> Vec<Stmt> {
        let cond = Cond { lhs: Expr::Var(value.into()), op: ">", rhs: Expr::Num(bound) };
        let a = Expr::Bin("-", Box::new(Expr::Var(value.into())), Box::new(Expr::Num(bound)));
        let b = Expr::Var(value.into());
        match self.style[BRANCH] {
            0 => vec![Stmt::If {
                cond,
                then: vec![Stmt::Assign(target.into(), a)],
                els: vec![Stmt::Assign(target.into(), b)],
            }],
            1 => vec![Stmt::Switch {
                scrutinee: Expr::Bin("%", Box::new(Expr::Var(value.into())), Box::new(Expr::Num(3))),
                cases: vec![(0, vec![Stmt::Assign(target.into(), a)]), (1, vec![Stmt::Inc(target.into())])],
                default: vec![Stmt::Assign(target.into(), b)],
            }],
            2 => vec![Stmt::Ternary { target: target.into(), cond, a, b }],
            _ => {
                self.labels += 1;
                let label = format!("LABEL_{}", self.labels + 3);
                vec![
                    Stmt::Assign(target.into(), b),
                    Stmt::If {
                        cond: Cond { lhs: Expr::Var(value.into()), op: "<=", rhs: Expr::Num(bound) },
                        then: vec![Stmt::Goto(label.clone())],
                        els: vec![],
                    },
                    Stmt::Assign(target.into(), a),
                    Stmt::Label(label),
                ]
            }
        }
    }

    fn read_value(&mut self, target: &str, helper: Option<&str>) -> Vec<Stmt> {
        if let Some(h) = helper {
            return vec![Stmt::Assign(target.into(), Expr::Call(h.into(), vec![]))];
        }
        match self.style[IO] {
            0 => vec![Stmt::Call("scanf".into(), vec![Expr::Str("%d".into()), Expr::Addr(target.into())])],
            1 => vec![
                Stmt::Call("fgets".into(), vec![Expr::Var("buf".into()), Expr::Num(256), Expr::Var("stdin".into())]),
                Stmt::Assign(target.into(), Expr::Call("atoi".into(), vec![Expr::Var("buf".into())])),
            ],
            2 => vec![Stmt::Call(
                "std::istream::operator>>".into(),
                vec![Expr::Addr("std::cin".into()), Expr::Addr(target.into())],
            )],
            _ => vec![
                Stmt::Call("read".into(), vec![Expr::Num(0), Expr::Var("buf".into()), Expr::Num(16)]),
                Stmt::Assign(
                    target.into(),
                    Expr::Call("strtol".into(), vec![Expr::Var("buf".into()), Expr::Num(0), Expr::Num(10)]),
                ),
            ],
        }
    }

    fn write_result(&mut self, case: &str, value: &str, verdict: Option<(&str, &str)>) -> Vec<Stmt> {
        let mut out = Vec::new();
        if let Some((yes, no)) = verdict {
            let print = |s: &str| match self.style[IO] {
                0 => Stmt::Call("printf".into(), vec![Expr::Str(format!("Case #%d: {s}\\n")), Expr::Var(case.into())]),
                1 => Stmt::Call("puts".into(), vec![Expr::Str(s.into())]),
                2 => Stmt::Call("std::operator<<".into(), vec![Expr::Addr("std::cout".into()), Expr::Str(s.into())]),
                _ => Stmt::Call("write".into(), vec![Expr::Num(1), Expr::Str(s.into()), Expr::Num(s.len() as i64)]),
            };
            out.push(Stmt::If {
                cond: Cond { lhs: Expr::Var(value.into()), op: ">", rhs: Expr::Num(0) },
                then: vec![print(yes)],
                els: vec![print(no)],
            });
            return out;
        }
        out.push(match self.style[IO] {
            0 => Stmt::Call(
                "printf".into(),
                vec![Expr::Str("Case #%d: %d\\n".into()), Expr::Var(case.into()), Expr::Var(value.into())],
            ),
            1 => Stmt::Call(
                "sprintf".into(),
                vec![
                    Expr::Var("buf".into()),
                    Expr::Str("Case #%d: %d".into()),
                    Expr::Var(case.into()),
                    Expr::Var(value.into()),
                ],
            ),
            2 => Stmt::Call(
                "std::ostream::operator<<".into(),
                vec![Expr::Addr("std::cout".into()), Expr::Var(value.into())],
            ),
            _ => Stmt::Call("write".into(), vec![Expr::Num(1), Expr::Var("buf".into()), Expr::Var(value.into())]),
        });
        if self.style[IO] == 1 {
            out.push(Stmt::Call("puts".into(), vec![Expr::Var("buf".into())]));
        }
        out
    }

    fn alloc(&mut self, arr: &str, len: Expr) -> (Vec<Stmt>, Vec<Stmt>) {
        match self.style[MEMORY] {
            0 => (vec![], vec![]),
            1 => (
                vec![Stmt::Assign(
                    arr.into(),
                    Expr::Call("malloc".into(), vec![Expr::Bin("*", Box::new(Expr::Num(4)), Box::new(len))]),
                )],
                vec![Stmt::Call("free".into(), vec![Expr::Var(arr.into())])],
            ),
            2 => (
                vec![Stmt::Assign(
                    arr.into(),
                    Expr::Call("operator new[]".into(), vec![Expr::Bin("*", Box::new(Expr::Num(4)), Box::new(len))]),
                )],
                vec![Stmt::Call("operator delete[]".into(), vec![Expr::Var(arr.into())])],
            ),
            _ => (
                vec![Stmt::Call("std::vector::resize".into(), vec![Expr::Addr(arr.into()), len])],
                vec![Stmt::Call("std::vector::~vector".into(), vec![Expr::Addr(arr.into())])],
            ),
        }
    }

    fn guard(&mut self, param: &str, body: Vec<Stmt>) -> Vec<Stmt> {
        match self.style[GUARD] {
            0 => {
                let mut out = vec![Stmt::If {
                    cond: Cond { lhs: Expr::Var(param.into()), op: "<=", rhs: Expr::Num(0) },
                    then: vec![Stmt::Return(Expr::Num(0))],
                    els: vec![],
                }];
                out.extend(body);
                out
            }
            1 => vec![Stmt::If {
                cond: Cond { lhs: Expr::Var(param.into()), op: ">", rhs: Expr::Num(0) },
                then: body,
                els: vec![],
            }],
            2 => {
                let mut out = vec![Stmt::If {
                    cond: Cond { lhs: Expr::Var(param.into()), op: "<", rhs: Expr::Num(0) },
                    then: vec![Stmt::Call("abort".into(), vec![])],
                    els: vec![],
                }];
                out.extend(body);
                out
            }
            _ => body,
        }
    }
}

fn build_program(style: &Style, p: &Problem, signature: Option<&str>, rng: &mut ChaCha8Rng) -> Program {
    let ty = int_type(style);
    let names = helper_names(style);
    let mut functions = Vec::new();

    // Reader helper for some naming styles only.
    let use_reader = style[NAMING] != 2;
    if use_reader {
        let mut b = Builder { style, rng, next_v: 1, locals: vec![], labels: 0 };
        let v = b.local(ty);
        let mut body = b.read_value(&v, None);
        body.push(Stmt::Return(Expr::Var(v.clone())));
        functions.push(Function { name: names[0].into(), ret: ty.into(), params: vec![], locals: b.locals, body });
    }

    // Solver: problem loops over an array, then a branch on the result.
    let mut b = Builder { style, rng, next_v: 2, locals: vec![], labels: 0 };
    let n = "a1".to_string();
    let arr = "v3".to_string();
    b.next_v = 4;
    let arr_ty = if style[MEMORY] == 3 {
        "_DWORD *"
    } else if style[MEMORY] == 0 {
        ty
    } else {
        "int *"
    };
    b.locals.push((arr_ty.into(), arr.clone(), (style[MEMORY] == 0).then_some(p.bound.max(16))));
    let acc = b.local(ty);
    let res = b.local(ty);
    let (setup, teardown) = b.alloc(&arr, Expr::Var(n.clone()));
    let mut core = setup;
    let counters = ["i", "j", "k"];
    let mut inner: Vec<Stmt> = Vec::new();
    for l in (0..p.loops).rev() {
        let c = b.counter(counters[l]);
        let mut body = Vec::new();
        if l == p.loops - 1 {
            body.push(Stmt::Store(
                arr.clone(),
                Expr::Var(c.clone()),
                Expr::Bin(p.ops[0], Box::new(Expr::Var(c.clone())), Box::new(Expr::Num(b.small()))),
            ));
            body.push(b.arith(&acc, Expr::Var(acc.clone()), &p.ops));
            let extra = b.rng.gen_range(0..=2);
            for _ in 0..extra {
                let s = b.arith(&acc, Expr::Index(arr.clone(), Box::new(Expr::Var(c.clone()))), &p.ops);
                body.push(s);
            }
            if let Some(m) = p.modulus {
                body.push(Stmt::Assign(
                    acc.clone(),
                    Expr::Bin("%", Box::new(Expr::Var(acc.clone())), Box::new(Expr::Num(m))),
                ));
            }
        } else {
            body.append(&mut inner);
        }
        if l != p.loops - 1 {
            body.push(Stmt::Compound(acc.clone(), "+", Expr::Var(c.clone())));
        }
        inner = vec![b.loop_stmt(&c, Expr::Var(n.clone()), body)];
    }
    core.push(Stmt::Assign(acc.clone(), Expr::Num(0)));
    core.extend(inner);
    core.extend(b.branch(&acc, &res, p.bound));
    if let Some(sig) = signature {
        core.push(Stmt::Call(sig.into(), vec![Expr::Var(res.clone())]));
    }
    core.extend(teardown);
    core.push(Stmt::Return(Expr::Var(res.clone())));
    let body = b.guard(&n, core);
    let mut body = body;
    if style[GUARD] == 1 {
        body.push(Stmt::Return(Expr::Num(0)));
    }
    functions.push(Function {
        name: names[1].into(),
        ret: ty.into(),
        params: vec![(ty.into(), n)],
        locals: b.locals,
        body,
    });

    if let Some(sig) = signature {
        let mut b = Builder { style, rng, next_v: 1, locals: vec![], labels: 0 };
        let v = b.local(ty);
        functions.push(Function {
            name: sig.into(),
            ret: "void".into(),
            params: vec![(ty.into(), "a1".into())],
            locals: b.locals,
            body: vec![Stmt::Assign(
                v.clone(),
                Expr::Bin("^", Box::new(Expr::Var("a1".into())), Box::new(Expr::Num(0x5a))),
            )],
        });
    }

    // main: read case count, loop over cases.
    let mut b = Builder { style, rng, next_v: 3, locals: vec![], labels: 0 };
    let t = b.local(ty);
    let reader = use_reader.then_some(names[0]);
    let mut body = b.read_value(&t, reader);
    let case = b.counter("i");
    let mut loop_body = Vec::new();
    let mut args = Vec::new();
    for _ in 0..p.reads {
        let v = b.local(ty);
        loop_body.extend(b.read_value(&v, reader));
        args.push(v);
    }
    let r = b.local(ty);
    let first = args[0].clone();
    loop_body.push(Stmt::Assign(r.clone(), Expr::Call(names[1].into(), vec![Expr::Var(first)])));
    for a in &args[1..] {
        loop_body.push(Stmt::Compound(r.clone(), p.ops[1], Expr::Var(a.clone())));
    }
    loop_body.extend(b.write_result(&case, &r, p.verdict));
    body.push(Stmt::Loop {
        var: case,
        from: Expr::Num(1),
        to: Expr::Bin("+", Box::new(Expr::Var(t.clone())), Box::new(Expr::Num(1))),
        body: loop_body,
    });
    body.push(Stmt::Return(Expr::Num(0)));
    functions.push(Function {
        name: "main".into(),
        ret: "int".into(),
        params: vec![
            ("int".into(), "argc".into()),
            ("const char **".into(), "argv".into()),
            ("const char **".into(), "envp".into()),
        ],
        locals: b.locals,
        body,
    });

    let mut imports = Vec::new();
    let mut strings = Vec::new();
    for f in &functions {
        collect(&f.body, &mut |s| match s {
            Collected::Call(name) => {
                if !functions.iter().any(|g| g.name == name) && !imports.contains(&name) {
                    imports.push(name);
                }
            }
            Collected::Str(text) => {
                if !strings.contains(&text) {
                    strings.push(text);
                }
            }
        });
    }
    Program { functions, imports, strings }
}

enum Collected {
    Call(String),
    Str(String),
}

fn collect(stmts: &[Stmt], f: &mut impl FnMut(Collected)) {
    fn expr(e: &Expr, f: &mut impl FnMut(Collected)) {
        match e {
            Expr::Str(s) => f(Collected::Str(s.clone())),
            Expr::Bin(_, a, b) => {
                expr(a, f);
                expr(b, f);
            }
            Expr::Call(n, args) => {
                f(Collected::Call(n.clone()));
                args.iter().for_each(|a| expr(a, f));
            }
            Expr::Index(_, i) => expr(i, f),
            _ => {}
        }
    }
    for s in stmts {
        match s {
            Stmt::Assign(_, e) | Stmt::Compound(_, _, e) | Stmt::Return(e) => expr(e, f),
            Stmt::Store(_, i, e) => {
                expr(i, f);
                expr(e, f);
            }
            Stmt::Call(n, args) => {
                f(Collected::Call(n.clone()));
                args.iter().for_each(|a| expr(a, f));
            }
            Stmt::Loop { from, to, body, .. } => {
                expr(from, f);
                expr(to, f);
                collect(body, f);
            }
            Stmt::If { cond, then, els } => {
                expr(&cond.lhs, f);
                expr(&cond.rhs, f);
                collect(then, f);
                collect(els, f);
            }
            Stmt::Switch { scrutinee, cases, default } => {
                expr(scrutinee, f);
                cases.iter().for_each(|c| collect(&c.1, f));
                collect(default, f);
            }
            Stmt::Ternary { cond, a, b, .. } => {
                expr(&cond.lhs, f);
                expr(a, f);
                expr(b, f);
            }
            Stmt::Inc(_) | Stmt::Goto(_) | Stmt::Label(_) => {}
        }
    }
}

// ---------------------------------------------------------------------------
// Rendering

fn render(p: &Program, style: &Style, rng: &mut ChaCha8Rng) -> BTreeMap<ArtifactKind, String> {
    let pseudo = render_pseudo_c(p, style);
    let asm = compile(p, style);
    let mut texts = BTreeMap::new();
    texts.insert(ArtifactKind::PseudoC, pseudo);
    texts.insert(ArtifactKind::Cfg, render_cfg(&asm));
    texts.insert(ArtifactKind::ListingFlow, render_radare(&asm));
    texts.insert(ArtifactKind::ListingLinear, render_ndisasm(&asm, p, rng));
    texts.insert(ArtifactKind::SymbolsStrings, render_symbols(p));
    texts
}

/// Hex-Rays spacing: `int v1`, `int *v1`.
fn c_decl(ty: &str, name: &str) -> String {
    match ty.strip_suffix('*') {
        Some(_) => format!("{ty}{name}"),
        None => format!("{ty} {name}"),
    }
}

fn c_expr(e: &Expr) -> String {
    match e {
        Expr::Var(v) => v.clone(),
        Expr::Num(n) if *n >= 10 => format!("{n}"),
        Expr::Num(n) => n.to_string(),
        Expr::Str(s) => format!("\"{s}\""),
        Expr::Addr(v) => format!("&{v}"),
        Expr::Bin(op, a, b) => {
            let side = |x: &Expr| match x {
                Expr::Bin(..) => format!("({})", c_expr(x)),
                _ => c_expr(x),
            };
            format!("{} {op} {}", side(a), side(b))
        }
        Expr::Call(n, args) => format!("{n}({})", args.iter().map(c_expr).collect::<Vec<_>>().join(", ")),
        Expr::Index(a, i) => format!("{a}[{}]", c_expr(i)),
    }
}

fn c_cond(c: &Cond) -> String {
    format!("{} {} {}", c_expr(&c.lhs), c.op, c_expr(&c.rhs))
}

fn c_inc(style: &Style, v: &str) -> String {
    match style[INCREMENT] {
        0 => format!("{v}++"),
        1 => format!("++{v}"),
        2 => format!("{v} += 1"),
        _ => format!("{v} = {v} + 1"),
    }
}

fn render_pseudo_c(p: &Program, style: &Style) -> String {
    let mut out = String::new();
    for f in &p.functions {
        let params = f.params.iter().map(|(t, n)| c_decl(t, n)).collect::<Vec<_>>().join(", ");
        let _ = writeln!(
            out,
            "//----- ({:08X}) ----------------------------------------------------",
            0x401000 + out.len()
        );
        let _ = writeln!(out, "{} __cdecl {}({})", f.ret, f.name, params);
        out.push_str("{\n");
        for (i, (t, n, len)) in f.locals.iter().enumerate() {
            let off = 4 * (i + 1) + 8;
            match len {
                Some(l) => {
                    let _ = writeln!(out, "  {t} {n}[{l}]; // [esp+{off:X}h] [ebp-{:X}h]", l * 4);
                }
                None => {
                    let _ = writeln!(out, "  {}; // [esp+{off:X}h] [ebp-{off:X}h]", c_decl(t, n));
                }
            }
        }
        if !f.locals.is_empty() {
            out.push('\n');
        }
        c_block(&f.body, style, 1, &mut out);
        out.push_str("}\n\n");
    }
    out
}

fn c_block(stmts: &[Stmt], style: &Style, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    for s in stmts {
        match s {
            Stmt::Assign(v, e) => {
                let _ = writeln!(out, "{pad}{v} = {};", c_expr(e));
            }
            Stmt::Store(a, i, e) => {
                let _ = writeln!(out, "{pad}{a}[{}] = {};", c_expr(i), c_expr(e));
            }
            Stmt::Compound(v, op, e) => {
                if style[INCREMENT] == 3 {
                    let _ = writeln!(out, "{pad}{v} = {v} {op} {};", c_expr(e));
                } else {
                    let _ = writeln!(out, "{pad}{v} {op}= {};", c_expr(e));
                }
            }
            Stmt::Inc(v) => {
                let _ = writeln!(out, "{pad}{};", c_inc(style, v));
            }
            Stmt::Call(n, args) => {
                let _ = writeln!(out, "{pad}{};", c_expr(&Expr::Call(n.clone(), args.clone())));
            }
            Stmt::Loop { var, from, to, body } => {
                let cond = format!("{var} < {}", c_expr(to));
                match style[LOOP] {
                    0 => {
                        let _ = writeln!(out, "{pad}for ( {var} = {}; {cond}; {} )", c_expr(from), c_inc(style, var));
                        let _ = writeln!(out, "{pad}{{");
                        c_block(body, style, depth + 1, out);
                        let _ = writeln!(out, "{pad}}}");
                    }
                    1 => {
                        let _ = writeln!(out, "{pad}{var} = {};", c_expr(from));
                        let _ = writeln!(out, "{pad}while ( {cond} )");
                        let _ = writeln!(out, "{pad}{{");
                        c_block(body, style, depth + 1, out);
                        let _ = writeln!(out, "{pad}  {};", c_inc(style, var));
                        let _ = writeln!(out, "{pad}}}");
                    }
                    _ => {
                        let _ = writeln!(out, "{pad}{var} = {};", c_expr(from));
                        let _ = writeln!(out, "{pad}do");
                        let _ = writeln!(out, "{pad}{{");
                        c_block(body, style, depth + 1, out);
                        let _ = writeln!(out, "{pad}  {};", c_inc(style, var));
                        let _ = writeln!(out, "{pad}}}");
                        let _ = writeln!(out, "{pad}while ( {cond} );");
                    }
                }
            }
            Stmt::If { cond, then, els } => {
                let _ = writeln!(out, "{pad}if ( {} )", c_cond(cond));
                c_body(then, style, depth, out);
                if !els.is_empty() {
                    let _ = writeln!(out, "{pad}else");
                    c_body(els, style, depth, out);
                }
            }
            Stmt::Switch { scrutinee, cases, default } => {
                let _ = writeln!(out, "{pad}switch ( {} )", c_expr(scrutinee));
                let _ = writeln!(out, "{pad}{{");
                for (v, body) in cases {
                    let _ = writeln!(out, "{pad}  case {v}:");
                    c_block(body, style, depth + 2, out);
                    let _ = writeln!(out, "{pad}    break;");
                }
                let _ = writeln!(out, "{pad}  default:");
                c_block(default, style, depth + 2, out);
                let _ = writeln!(out, "{pad}    break;");
                let _ = writeln!(out, "{pad}}}");
            }
            Stmt::Ternary { target, cond, a, b } => {
                let _ = writeln!(out, "{pad}{target} = {} ? {} : {};", c_cond(cond), c_expr(a), c_expr(b));
            }
            Stmt::Goto(l) => {
                let _ = writeln!(out, "{pad}goto {l};");
            }
            Stmt::Label(l) => {
                let _ = writeln!(out, "{l}:");
            }
            Stmt::Return(e) => {
                let _ = writeln!(out, "{pad}return {};", c_expr(e));
            }
        }
    }
}

fn c_body(stmts: &[Stmt], style: &Style, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    if stmts.len() == 1 && !matches!(stmts[0], Stmt::Loop { .. } | Stmt::If { .. } | Stmt::Switch { .. }) {
        c_block(stmts, style, depth + 1, out);
    } else {
        let _ = writeln!(out, "{pad}{{");
        c_block(stmts, style, depth + 1, out);
        let _ = writeln!(out, "{pad}}}");
    }
}

// ---------------------------------------------------------------------------
// Code generation

#[derive(Debug, Clone)]
enum Operand {
    Reg(&'static str),
    Imm(i64),
    /// `size [base + index*4 - disp]`.
    Mem {
        size: &'static str,
        base: &'static str,
        index: Option<&'static str>,
        disp: i64,
    },
    Label(usize),
    Sym(SymKind, String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum SymKind {
    Function,
    Import,
    Data,
    Str,
}

#[derive(Debug, Clone)]
struct Insn {
    mnemonic: &'static str,
    ops: Vec<Operand>,
}

struct AsmFunction {
    name: String,
    /// Blocks in layout order.
    blocks: Vec<Vec<Insn>>,
    /// Label id to the block it starts.
    labels: HashMap<usize, usize>,
    edges: Vec<(usize, usize)>,
}

struct Regs {
    a: &'static str,
    c: &'static str,
    d: &'static str,
    size: &'static str,
    unsigned: bool,
}

fn regs(style: &Style) -> Regs {
    match style[INT_TYPE] {
        0 => Regs { a: "eax", c: "ecx", d: "edx", size: "dword", unsigned: false },
        1 => Regs { a: "eax", c: "ecx", d: "edx", size: "dword", unsigned: true },
        2 => Regs { a: "rax", c: "rcx", d: "rdx", size: "qword", unsigned: false },
        _ => Regs { a: "al", c: "cl", d: "dl", size: "byte", unsigned: false },
    }
}

struct Emitter<'a> {
    style: &'a Style,
    regs: Regs,
    slots: HashMap<String, i64>,
    blocks: Vec<Vec<Insn>>,
    labels: HashMap<usize, usize>,
    /// `(from block, to label)`.
    jumps: Vec<(usize, usize)>,
    fallthrough: Vec<(usize, usize)>,
    next_label: usize,
    named: HashMap<String, usize>,
    local_functions: &'a [String],
}

impl<'a> Emitter<'a> {
    fn new(style: &'a Style, f: &Function, local_functions: &'a [String]) -> Self {
        let mut slots = HashMap::new();
        let mut off = 0;
        for (_, n, len) in &f.locals {
            off += 4 * len.unwrap_or(1);
            slots.insert(n.clone(), off);
        }
        for (i, (_, n)) in f.params.iter().enumerate() {
            slots.insert(n.clone(), -(8 + 4 * i as i64));
        }
        Emitter {
            style,
            regs: regs(style),
            slots,
            blocks: vec![Vec::new()],
            labels: HashMap::new(),
            jumps: Vec::new(),
            fallthrough: Vec::new(),
            next_label: 0,
            named: HashMap::new(),
            local_functions,
        }
    }

    fn cur(&self) -> usize {
        self.blocks.len() - 1
    }

    fn emit(&mut self, mnemonic: &'static str, ops: Vec<Operand>) {
        let b = self.cur();
        self.blocks[b].push(Insn { mnemonic, ops });
    }

    fn label(&mut self) -> usize {
        self.next_label += 1;
        self.next_label
    }

    fn named_label(&mut self, name: &str) -> usize {
        if let Some(&l) = self.named.get(name) {
            return l;
        }
        let l = self.label();
        self.named.insert(name.to_string(), l);
        l
    }

    /// Starts a new block at `label`, falling through from the current one
    /// unless it ended in an unconditional transfer.
    fn place(&mut self, label: usize) {
        let cur = self.cur();
        let terminal = self.blocks[cur].last().is_some_and(|i| matches!(i.mnemonic, "jmp" | "ret"));
        if self.blocks[cur].is_empty() {
            self.labels.insert(label, cur);
            return;
        }
        self.blocks.push(Vec::new());
        let new = self.cur();
        if !terminal {
            self.fallthrough.push((cur, new));
        }
        self.labels.insert(label, new);
    }

    fn jump(&mut self, mnemonic: &'static str, label: usize) {
        self.emit(mnemonic, vec![Operand::Label(label)]);
        self.jumps.push((self.cur(), label));
        if mnemonic != "jmp" {
            let l = self.label();
            self.place(l);
        }
    }

    fn slot(&self, v: &str) -> Operand {
        let disp = self.slots.get(v).copied().unwrap_or(0x40);
        Operand::Mem { size: self.regs.size, base: "ebp", index: None, disp }
    }

    fn simple(&self, e: &Expr) -> Option<Operand> {
        match e {
            Expr::Num(n) => Some(Operand::Imm(*n)),
            Expr::Var(v) if self.slots.contains_key(v) => Some(self.slot(v)),
            _ => None,
        }
    }

    fn load(&mut self, e: &Expr) {
        let a = self.regs.a;
        let c = self.regs.c;
        match e {
            Expr::Num(0) if self.style[INT_TYPE] != 3 => self.emit("xor", vec![Operand::Reg(a), Operand::Reg(a)]),
            Expr::Num(n) => self.emit("mov", vec![Operand::Reg(a), Operand::Imm(*n)]),
            Expr::Var(v) if self.slots.contains_key(v) => {
                if self.style[INT_TYPE] == 3 {
                    self.emit("movsx", vec![Operand::Reg("eax"), self.slot(v)]);
                } else {
                    self.emit("mov", vec![Operand::Reg(a), self.slot(v)]);
                }
            }
            Expr::Var(v) | Expr::Addr(v) => {
                if let Some(off) = self.slots.get(v.as_str()).copied() {
                    self.emit(
                        "lea",
                        vec![Operand::Reg("eax"), Operand::Mem { size: "", base: "ebp", index: None, disp: off }],
                    );
                } else {
                    self.emit("mov", vec![Operand::Reg("eax"), Operand::Sym(SymKind::Data, v.clone())]);
                }
            }
            Expr::Str(s) => self.emit("mov", vec![Operand::Reg("eax"), Operand::Sym(SymKind::Str, sanitize(s))]),
            Expr::Index(arr, i) => {
                self.load(i);
                self.emit("mov", vec![Operand::Reg("edx"), Operand::Reg("eax")]);
                let disp = self.slots.get(arr).copied().unwrap_or(0x40);
                self.emit(
                    "mov",
                    vec![Operand::Reg(a), Operand::Mem { size: self.regs.size, base: "ebp", index: Some("edx"), disp }],
                );
            }
            Expr::Call(n, args) => self.call(n, args),
            Expr::Bin(op, l, r) => {
                self.load(l);
                let rhs = match self.simple(r) {
                    Some(o) => o,
                    None => {
                        self.emit("push", vec![Operand::Reg("eax")]);
                        self.load(r);
                        self.emit("mov", vec![Operand::Reg(c), Operand::Reg(a)]);
                        self.emit("pop", vec![Operand::Reg("eax")]);
                        Operand::Reg(c)
                    }
                };
                self.binop(op, rhs);
            }
        }
    }

    fn binop(&mut self, op: &str, rhs: Operand) {
        let (a, c, d) = (self.regs.a, self.regs.c, self.regs.d);
        let unsigned = self.regs.unsigned;
        match op {
            "+" => self.emit("add", vec![Operand::Reg(a), rhs]),
            "-" => self.emit("sub", vec![Operand::Reg(a), rhs]),
            "*" => self.emit("imul", vec![Operand::Reg(a), rhs]),
            "^" => self.emit("xor", vec![Operand::Reg(a), rhs]),
            "&" => self.emit("and", vec![Operand::Reg(a), rhs]),
            "|" => self.emit("or", vec![Operand::Reg(a), rhs]),
            "<<" => self.emit("shl", vec![Operand::Reg(a), rhs]),
            _ => {
                self.emit("mov", vec![Operand::Reg(c), rhs]);
                if unsigned {
                    self.emit("xor", vec![Operand::Reg(d), Operand::Reg(d)]);
                    self.emit("div", vec![Operand::Reg(c)]);
                } else {
                    self.emit(if a == "rax" { "cqo" } else { "cdq" }, vec![]);
                    self.emit("idiv", vec![Operand::Reg(c)]);
                }
                if op == "%" {
                    self.emit("mov", vec![Operand::Reg(a), Operand::Reg(d)]);
                }
            }
        }
    }

    fn store(&mut self, v: &str) {
        let a = self.regs.a;
        self.emit("mov", vec![self.slot(v), Operand::Reg(a)]);
    }

    fn call(&mut self, name: &str, args: &[Expr]) {
        for arg in args.iter().rev() {
            match self.simple(arg) {
                Some(o) => self.emit("push", vec![o]),
                None => {
                    self.load(arg);
                    self.emit("push", vec![Operand::Reg("eax")]);
                }
            }
        }
        let kind = if self.local_functions.iter().any(|f| f == name) { SymKind::Function } else { SymKind::Import };
        self.emit("call", vec![Operand::Sym(kind, name.replace(' ', "_"))]);
        if !args.is_empty() {
            self.emit("add", vec![Operand::Reg("esp"), Operand::Imm(4 * args.len() as i64)]);
        }
    }

    fn cc(&self, op: &str, negate: bool) -> &'static str {
        let op = if negate {
            match op {
                "<" => ">=",
                "<=" => ">",
                ">" => "<=",
                ">=" => "<",
                "==" => "!=",
                _ => "==",
            }
        } else {
            op
        };
        match (op, self.regs.unsigned) {
            ("<", false) => "jl",
            ("<=", false) => "jle",
            (">", false) => "jg",
            (">=", false) => "jge",
            ("<", true) => "jb",
            ("<=", true) => "jbe",
            (">", true) => "ja",
            (">=", true) => "jae",
            ("==", _) => "je",
            _ => "jne",
        }
    }

    fn compare(&mut self, c: &Cond) {
        self.load(&c.lhs);
        let rhs = match self.simple(&c.rhs) {
            Some(o) => o,
            None => {
                self.emit("push", vec![Operand::Reg("eax")]);
                self.load(&c.rhs);
                self.emit("mov", vec![Operand::Reg(self.regs.c), Operand::Reg(self.regs.a)]);
                self.emit("pop", vec![Operand::Reg("eax")]);
                Operand::Reg(self.regs.c)
            }
        };
        if matches!(c.rhs, Expr::Num(0)) {
            self.emit("test", vec![Operand::Reg(self.regs.a), Operand::Reg(self.regs.a)]);
        } else {
            self.emit("cmp", vec![Operand::Reg(self.regs.a), rhs]);
        }
    }

    fn increment(&mut self, v: &str) {
        match self.style[INCREMENT] {
            0 => self.emit("add", vec![self.slot(v), Operand::Imm(1)]),
            1 => self.emit("inc", vec![self.slot(v)]),
            2 => {
                self.load(&Expr::Var(v.into()));
                self.emit("add", vec![Operand::Reg(self.regs.a), Operand::Imm(1)]);
                self.store(v);
            }
            _ => {
                self.load(&Expr::Var(v.into()));
                self.emit(
                    "lea",
                    vec![Operand::Reg("edx"), Operand::Mem { size: "", base: "eax", index: None, disp: -1 }],
                );
                self.emit("mov", vec![self.slot(v), Operand::Reg("edx")]);
            }
        }
    }

    fn stmts(&mut self, stmts: &[Stmt]) {
        for s in stmts {
            self.stmt(s);
        }
    }

    fn stmt(&mut self, s: &Stmt) {
        match s {
            Stmt::Assign(v, e) => {
                self.load(e);
                self.store(v);
            }
            Stmt::Store(arr, i, e) => {
                self.load(i);
                self.emit("mov", vec![Operand::Reg("edx"), Operand::Reg("eax")]);
                self.emit("push", vec![Operand::Reg("edx")]);
                self.load(e);
                self.emit("pop", vec![Operand::Reg("edx")]);
                let disp = self.slots.get(arr).copied().unwrap_or(0x40);
                let a = self.regs.a;
                self.emit(
                    "mov",
                    vec![Operand::Mem { size: self.regs.size, base: "ebp", index: Some("edx"), disp }, Operand::Reg(a)],
                );
            }
            Stmt::Compound(v, op, e) => {
                if self.style[INCREMENT] == 3 {
                    self.load(&Expr::Bin(op_static(op), Box::new(Expr::Var(v.clone())), Box::new(e.clone())));
                    self.store(v);
                } else {
                    self.load(e);
                    let a = self.regs.a;
                    match *op {
                        "+" => self.emit("add", vec![self.slot(v), Operand::Reg(a)]),
                        "-" => self.emit("sub", vec![self.slot(v), Operand::Reg(a)]),
                        "^" => self.emit("xor", vec![self.slot(v), Operand::Reg(a)]),
                        "&" => self.emit("and", vec![self.slot(v), Operand::Reg(a)]),
                        "|" => self.emit("or", vec![self.slot(v), Operand::Reg(a)]),
                        _ => {
                            self.emit("mov", vec![Operand::Reg(self.regs.c), Operand::Reg(a)]);
                            self.load(&Expr::Var(v.clone()));
                            self.binop(op, Operand::Reg(self.regs.c));
                            self.store(v);
                        }
                    }
                }
            }
            Stmt::Inc(v) => self.increment(v),
            Stmt::Call(n, args) => self.call(n, args),
            Stmt::Loop { var, from, to, body } => {
                self.load(from);
                self.store(var);
                let cond = Cond { lhs: Expr::Var(var.clone()), op: "<", rhs: to.clone() };
                match self.style[LOOP] {
                    0 => {
                        let (head, top) = (self.label(), self.label());
                        self.jump("jmp", head);
                        self.place(top);
                        self.stmts(body);
                        self.increment(var);
                        self.place(head);
                        self.compare(&cond);
                        let cc = self.cc("<", false);
                        self.jump(cc, top);
                    }
                    1 => {
                        let (head, exit) = (self.label(), self.label());
                        self.place(head);
                        self.compare(&cond);
                        let cc = self.cc("<", true);
                        self.jump(cc, exit);
                        self.stmts(body);
                        self.increment(var);
                        self.jump("jmp", head);
                        self.place(exit);
                    }
                    _ => {
                        let top = self.label();
                        self.place(top);
                        self.stmts(body);
                        self.increment(var);
                        self.compare(&cond);
                        let cc = self.cc("<", false);
                        self.jump(cc, top);
                    }
                }
            }
            Stmt::If { cond, then, els } => {
                let (else_l, end) = (self.label(), self.label());
                self.compare(cond);
                let cc = self.cc(cond.op, true);
                self.jump(cc, if els.is_empty() { end } else { else_l });
                self.stmts(then);
                if !els.is_empty() {
                    self.jump("jmp", end);
                    self.place(else_l);
                    self.stmts(els);
                }
                self.place(end);
            }
            Stmt::Switch { scrutinee, cases, default } => {
                let end = self.label();
                let dflt = self.label();
                self.load(scrutinee);
                self.emit("cmp", vec![Operand::Reg(self.regs.a), Operand::Imm(cases.len() as i64 - 1)]);
                self.jump("ja", dflt);
                let case_labels: Vec<usize> = cases.iter().map(|_| self.label()).collect();
                self.emit(
                    "jmp",
                    vec![Operand::Mem { size: "dword", base: "switch_table", index: Some("eax"), disp: 0 }],
                );
                for &l in &case_labels {
                    let b = self.cur();
                    self.jumps.push((b, l));
                }
                for ((_, body), &l) in cases.iter().zip(&case_labels) {
                    self.place(l);
                    self.stmts(body);
                    self.jump("jmp", end);
                }
                self.place(dflt);
                self.stmts(default);
                self.place(end);
            }
            Stmt::Ternary { target, cond, a, b } => {
                self.compare(cond);
                if self.style[INT_TYPE] == 3 {
                    let (other, end) = (self.label(), self.label());
                    let cc = self.cc(cond.op, true);
                    self.jump(cc, other);
                    self.load(a);
                    self.jump("jmp", end);
                    self.place(other);
                    self.load(b);
                    self.place(end);
                } else {
                    self.load(b);
                    self.emit("mov", vec![Operand::Reg(self.regs.d), Operand::Reg(self.regs.a)]);
                    self.load(a);
                    let cmov = match cond.op {
                        ">" => "cmovle",
                        "<" => "cmovge",
                        _ => "cmovne",
                    };
                    self.emit(cmov, vec![Operand::Reg(self.regs.a), Operand::Reg(self.regs.d)]);
                }
                self.store(target);
            }
            Stmt::Goto(l) => {
                let l = self.named_label(l);
                self.jump("jmp", l);
            }
            Stmt::Label(l) => {
                let l = self.named_label(l);
                self.place(l);
            }
            Stmt::Return(e) => {
                self.load(e);
                self.emit("leave", vec![]);
                self.emit("ret", vec![]);
            }
        }
    }
}

fn op_static(op: &str) -> &'static str {
    ["+", "-", "*", "%", "^", "&", "|", "<<", "/"].into_iter().find(|o| *o == op).unwrap_or("+")
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect()
}

fn compile(p: &Program, style: &Style) -> Vec<AsmFunction> {
    let local: Vec<String> = p.functions.iter().map(|f| f.name.clone()).collect();
    p.functions
        .iter()
        .map(|f| {
            let mut e = Emitter::new(style, f, &local);
            e.emit("push", vec![Operand::Reg("ebp")]);
            e.emit("mov", vec![Operand::Reg("ebp"), Operand::Reg("esp")]);
            let frame = f.locals.iter().map(|l| 4 * l.2.unwrap_or(1)).sum::<i64>() + 8;
            e.emit("sub", vec![Operand::Reg("esp"), Operand::Imm((frame + 15) & !15)]);
            e.stmts(&f.body);
            let cur = e.cur();
            if !e.blocks[cur].last().is_some_and(|i| i.mnemonic == "ret") {
                e.emit("leave", vec![]);
                e.emit("ret", vec![]);
            }
            let edges = e
                .fallthrough
                .iter()
                .copied()
                .chain(e.jumps.iter().filter_map(|&(from, l)| e.labels.get(&l).map(|&to| (from, to))))
                .collect();
            AsmFunction { name: f.name.clone(), blocks: e.blocks, labels: e.labels, edges }
        })
        .collect()
}

#[derive(Clone, Copy, PartialEq)]
enum Syntax {
    Ndisasm,
    Radare,
}

fn fmt_operand(o: &Operand, syntax: Syntax, labels: &dyn Fn(usize) -> u64) -> String {
    match o {
        Operand::Reg(r) => r.to_string(),
        Operand::Imm(n) => {
            if syntax == Syntax::Radare && (0..10).contains(n) {
                n.to_string()
            } else if *n < 0 {
                format!("-0x{:x}", -n)
            } else {
                format!("0x{n:x}")
            }
        }
        Operand::Mem { size, base, index, disp } => {
            let mut inner = base.to_string();
            let sep = if syntax == Syntax::Radare { " " } else { "" };
            if let Some(i) = index {
                let _ = write!(inner, "{sep}+{sep}{i}*4");
            }
            if *disp > 0 {
                let _ = write!(inner, "{sep}-{sep}0x{disp:x}");
            } else if *disp < 0 {
                let _ = write!(inner, "{sep}+{sep}0x{:x}", -disp);
            }
            if size.is_empty() {
                format!("[{inner}]")
            } else {
                format!("{size} [{inner}]")
            }
        }
        Operand::Label(l) => format!("0x{:x}", labels(*l)),
        Operand::Sym(kind, s) => match syntax {
            Syntax::Radare => match kind {
                SymKind::Function => format!("sym.{s}"),
                SymKind::Import => format!("sym.imp.{s}"),
                SymKind::Data => format!("obj.{s}"),
                SymKind::Str => format!("str.{s}"),
            },
            Syntax::Ndisasm => {
                let h = s.bytes().fold(0u64, |a, b| a.wrapping_mul(131).wrapping_add(b as u64));
                format!("0x{:x}", 0x0804_8000 + mix(*kind as u64, h) % 0x4000)
            }
        },
    }
}

fn insn_bytes(text: &str) -> String {
    let h = mix(0xB17E, text.bytes().fold(0u64, |a, b| a.wrapping_mul(31).wrapping_add(b as u64)));
    let len = 1 + (h % 6) as usize;
    (0..len).map(|i| format!("{:02X}", (h >> (i * 8)) & 0xff)).collect()
}

struct Laid {
    /// `(function index, block index, address)` per block.
    starts: Vec<Vec<u64>>,
    /// Address of each instruction, parallel to blocks.
    addrs: Vec<Vec<Vec<u64>>>,
}

fn layout(funcs: &[AsmFunction], base: u64) -> Laid {
    let mut addr = base;
    let mut starts = Vec::new();
    let mut addrs = Vec::new();
    for f in funcs {
        let mut fs = Vec::new();
        let mut fa = Vec::new();
        for b in &f.blocks {
            fs.push(addr);
            let mut ba = Vec::new();
            for i in b {
                ba.push(addr);
                addr += (insn_bytes(&format!("{}{:?}", i.mnemonic, i.ops)).len() / 2) as u64;
            }
            fa.push(ba);
        }
        addr = (addr + 15) & !15;
        starts.push(fs);
        addrs.push(fa);
    }
    Laid { starts, addrs }
}

fn render_listing(funcs: &[AsmFunction], syntax: Syntax, laid: &Laid, out: &mut String) {
    for (fi, f) in funcs.iter().enumerate() {
        if syntax == Syntax::Radare {
            let n: usize = f.blocks.iter().map(Vec::len).sum();
            let _ = writeln!(out, "            ; CALL XREF from entry0");
            let _ = writeln!(out, "┌ {}: sym.{} ();", n * 3, f.name.replace(' ', "_"));
        }
        let labels = |l: usize| f.labels.get(&l).map_or(0, |&b| laid.starts[fi][b]);
        for (bi, b) in f.blocks.iter().enumerate() {
            for (ii, i) in b.iter().enumerate() {
                let ops = i.ops.iter().map(|o| fmt_operand(o, syntax, &labels)).collect::<Vec<_>>().join(", ");
                let text = if ops.is_empty() { i.mnemonic.to_string() } else { format!("{} {ops}", i.mnemonic) };
                let bytes = insn_bytes(&format!("{}{:?}", i.mnemonic, i.ops));
                let addr = laid.addrs[fi][bi][ii];
                match syntax {
                    Syntax::Ndisasm => {
                        let _ = writeln!(out, "{addr:08X}  {bytes:<16}  {text}");
                    }
                    Syntax::Radare => {
                        let bar = if bi + 1 == f.blocks.len() && ii + 1 == b.len() { "└" } else { "│" };
                        let _ = writeln!(out, "{bar}           0x{addr:08x}      {:<14} {text}", bytes.to_lowercase());
                    }
                }
            }
        }
        if syntax == Syntax::Radare {
            out.push('\n');
        }
    }
}

fn render_radare(funcs: &[AsmFunction]) -> String {
    let laid = layout(funcs, 0x0804_9000);
    let mut out = String::new();
    render_listing(funcs, Syntax::Radare, &laid, &mut out);
    out
}

/// Linear sweep: ELF header garbage, the code, then string bytes decoded as
/// instructions.
fn render_ndisasm(funcs: &[AsmFunction], p: &Program, rng: &mut ChaCha8Rng) -> String {
    const JUNK: [&str; 16] = [
        "jg 0x47",
        "dec esp",
        "inc esi",
        "add [eax],al",
        "add [ecx],al",
        "push es",
        "outsd",
        "insb",
        "jnc 0x6e",
        "popa",
        "arpl [eax],ax",
        "jz 0x75",
        "bound esp,[eax]",
        "and [eax],ah",
        "das",
        "aaa",
    ];
    let mut out = String::new();
    let mut addr = 0u64;
    let junk = |out: &mut String, addr: &mut u64, seed: u64| {
        let j = JUNK[(seed % 16) as usize];
        let bytes = insn_bytes(j);
        let _ = writeln!(out, "{:08X}  {bytes:<16}  {j}", *addr);
        *addr += (bytes.len() / 2) as u64;
    };
    for i in 0..rng.gen_range(6..10u64) {
        junk(&mut out, &mut addr, i * 5 + 1);
    }
    let laid = layout(funcs, (addr + 15) & !15);
    render_listing(funcs, Syntax::Ndisasm, &laid, &mut out);
    let mut addr = laid.addrs.last().and_then(|f| f.last()).and_then(|b| b.last()).copied().unwrap_or(addr) + 16;
    for s in &p.strings {
        for chunk in s.as_bytes().chunks(2) {
            let seed = chunk.iter().fold(0u64, |a, &b| a * 7 + b as u64);
            junk(&mut out, &mut addr, seed);
        }
    }
    out
}

fn render_cfg(funcs: &[AsmFunction]) -> String {
    let mut out = String::new();
    for (fi, f) in funcs.iter().enumerate() {
        for (bi, b) in f.blocks.iter().enumerate() {
            let m = b.iter().map(|i| i.mnemonic).collect::<Vec<_>>().join(" ");
            let _ = writeln!(out, "block f{fi}_b{bi}: {m}");
        }
        let mut edges = f.edges.clone();
        edges.sort_unstable();
        edges.dedup();
        for (a, b) in edges {
            let _ = writeln!(out, "edge f{fi}_b{a} f{fi}_b{b}");
        }
    }
    out
}

fn render_symbols(p: &Program) -> String {
    let mut out = String::from(".text\n.data\n.bss\n.rodata\n");
    for f in &p.functions {
        let _ = writeln!(out, "{}", f.name.replace(' ', "_"));
    }
    for i in &p.imports {
        let _ = writeln!(out, "{}@GLIBC_2.0", i.replace(' ', "_"));
    }
    for s in &p.strings {
        let _ = writeln!(out, "{s}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disasm::{detect_dialect, parse_cfg, Dialect};
    use crate::fuzzyc::{parse_str, NodeType};

    #[test]
    fn styles_are_distinct() {
        let pool = style_pool(7, 30);
        for (i, a) in pool.iter().enumerate() {
            for b in &pool[..i] {
                assert!(a.iter().zip(b).filter(|(x, y)| x != y).count() >= MIN_STYLE_DISTANCE);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig::noisy(3, 2);
        assert_eq!(generate(&cfg), generate(&cfg));
    }

    #[test]
    fn artifacts_parse() {
        for s in generate(&SynthConfig::noisy(6, 3)) {
            let lin = &s.texts[&ArtifactKind::ListingLinear];
            let flo = &s.texts[&ArtifactKind::ListingFlow];
            assert_eq!(detect_dialect(lin), Dialect::Ndisasm, "{}", s.sample_id);
            assert_eq!(detect_dialect(flo), Dialect::Radare2Text, "{}", s.sample_id);
            parse_cfg(&s.texts[&ArtifactKind::Cfg]).unwrap();
            let ast = parse_str(&s.texts[&ArtifactKind::PseudoC]);
            assert!(!ast.contains(NodeType::UnknownStatement), "{}\n{}", s.sample_id, ast.to_sexpr());
        }
    }

    #[test]
    fn author_ranges_are_disjoint() {
        let a = generate(&SynthConfig::noisy(2, 1));
        let b = generate(&SynthConfig::noisy(2, 1).with_authors(2, 2));
        assert!(a.iter().all(|x| b.iter().all(|y| x.author_id != y.author_id)));
    }
}
