//! Seeded generators for MiniLang programs and small paired corpora.
//!
//! `random_program` produces arbitrary grammar-valid programs for property
//! tests. `function_corpus` produces documented functions built from a set
//! of task templates with randomized identifiers, used for pre-training,
//! search and clone-detection experiments.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::downstream::CloneRecord;
use crate::pretrain::CorpusRecord;

const VARS: &[&str] = &["a", "b", "c", "x", "y", "n", "total", "i", "acc", "tmp"];
const FUNCS: &[&str] = &["f", "g", "len", "abs", "min", "max", "print", "range"];

/// Generates a random, grammar-valid MiniLang program.
pub fn random_program<R: Rng + ?Sized>(rng: &mut R) -> String {
    let mut out = String::new();
    let n = rng.random_range(1..=6);
    if rng.random_bool(0.5) {
        let arity = rng.random_range(0..=3);
        let params = pick_distinct(rng, arity);
        out.push_str(&format!("def {}({}):\n", FUNCS[rng.random_range(0..2)], params.join(", ")));
        for _ in 0..n {
            random_stmt(rng, &mut out, 1, 2);
        }
    } else {
        for _ in 0..n {
            random_stmt(rng, &mut out, 0, 2);
        }
    }
    out
}

fn pick_distinct<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<&'static str> {
    VARS.choose_multiple(rng, k).copied().collect()
}

fn random_stmt<R: Rng + ?Sized>(rng: &mut R, out: &mut String, depth: usize, budget: usize) {
    let pad = "  ".repeat(depth);
    let var = *VARS.choose(rng).expect("non-empty");
    let choice = if budget == 0 { rng.random_range(0..5) } else { rng.random_range(0..9) };
    match choice {
        0 | 1 => out.push_str(&format!("{pad}{var} = {}\n", random_expr(rng, 2))),
        2 => {
            let op = ["+=", "-=", "*=", "/="].choose(rng).expect("non-empty");
            out.push_str(&format!("{pad}{var} {op} {}\n", random_expr(rng, 1)));
        }
        3 => out.push_str(&format!("{pad}return {}\n", random_expr(rng, 2))),
        4 => out.push_str(&format!("{pad}{}({})\n", FUNCS.choose(rng).expect("non-empty"), random_expr(rng, 1))),
        5 | 6 => {
            out.push_str(&format!("{pad}if {}:\n", random_expr(rng, 2)));
            random_body(rng, out, depth + 1, budget - 1);
            for _ in 0..rng.random_range(0..2) {
                out.push_str(&format!("{pad}elif {}:\n", random_expr(rng, 1)));
                random_body(rng, out, depth + 1, budget - 1);
            }
            if rng.random_bool(0.6) {
                out.push_str(&format!("{pad}else:\n"));
                random_body(rng, out, depth + 1, budget - 1);
            }
        }
        7 => {
            out.push_str(&format!("{pad}while {}:\n", random_expr(rng, 2)));
            random_body(rng, out, depth + 1, budget - 1);
        }
        _ => {
            out.push_str(&format!("{pad}for {var} in {}:\n", random_expr(rng, 1)));
            random_body(rng, out, depth + 1, budget - 1);
        }
    }
}

fn random_body<R: Rng + ?Sized>(rng: &mut R, out: &mut String, depth: usize, budget: usize) {
    for _ in 0..rng.random_range(1..=3) {
        random_stmt(rng, out, depth, budget);
    }
}

fn random_expr<R: Rng + ?Sized>(rng: &mut R, depth: usize) -> String {
    let leaf = depth == 0 || rng.random_bool(0.35);
    if leaf {
        return match rng.random_range(0..6) {
            0 => rng.random_range(0..100).to_string(),
            1 => format!("{}.5", rng.random_range(0..10)),
            2 => "'s'".to_string(),
            _ => VARS.choose(rng).expect("non-empty").to_string(),
        };
    }
    match rng.random_range(0..5) {
        0 => {
            let args: Vec<String> = (0..rng.random_range(0..3)).map(|_| random_expr(rng, depth - 1)).collect();
            format!("{}({})", FUNCS.choose(rng).expect("non-empty"), args.join(", "))
        }
        1 => format!("({})", random_expr(rng, depth - 1)),
        _ => {
            let op = ["+", "-", "*", "/", "%", "<", ">", "<=", ">=", "==", "!="].choose(rng).expect("non-empty");
            format!("{} {op} {}", random_expr(rng, depth - 1), random_expr(rng, depth - 1))
        }
    }
}

struct Names {
    used: Vec<String>,
}

impl Names {
    const POOL: &'static [&'static str] = &[
        "data", "values", "items", "xs", "nums", "arr", "seq", "lst", "total", "acc", "result", "res", "count",
        "cnt", "best", "cur", "v", "x", "y", "z", "k", "i", "j", "t", "lo", "hi", "low", "high", "limit",
        "bound", "n", "m", "step", "prev", "last", "first", "tmp", "out", "score", "weight", "rate", "delta",
        "base", "exp", "power", "value", "item", "elem", "key", "size", "width", "height", "left", "right",
        "mid", "start", "stop", "span", "factor", "scale", "offset", "level", "depth", "index",
    ];

    fn new() -> Self {
        Self { used: Vec::new() }
    }

    fn fresh<R: Rng + ?Sized>(&mut self, rng: &mut R) -> String {
        loop {
            let name = Self::POOL.choose(rng).expect("non-empty").to_string();
            if !self.used.contains(&name) {
                self.used.push(name.clone());
                return name;
            }
        }
    }
}

/// Number of function templates used by [`function_corpus`].
pub const TEMPLATE_COUNT: usize = 16;

/// Builds one documented function from template `template`, drawing
/// identifier names from `rng`. Returns `(docstring, code)`.
pub fn templated_function<R: Rng + ?Sized>(template: usize, rng: &mut R) -> (String, String) {
    let mut nm = Names::new();
    let mut n = || nm.fresh(rng);
    let (f, a, b, c, d, e) = (n(), n(), n(), n(), n(), n());
    let f = format!("{f}_fn");
    match template % TEMPLATE_COUNT {
        0 => (
            format!("Return the sum of all {a}"),
            format!("def {f}({a}):\n    {b} = 0\n    for {c} in {a}:\n        {b} += {c}\n    return {b}\n"),
        ),
        1 => (
            format!("Return the sample arithmetic mean of {a}"),
            format!("def {f}({a}):\n    {b} = 0\n    for {c} in {a}:\n        {b} = {b} + {c}\n    {d} = {b} / len({a})\n    return {d}\n"),
        ),
        2 => (
            "Return the largest element of a sequence".to_string(),
            format!("def {f}({a}):\n    {b} = {a}\n    {c} = 0\n    for {d} in {b}:\n        if {d} > {c}:\n            {c} = {d}\n    return {c}\n"),
        ),
        3 => (
            format!("Compute the range between {a} and {b}"),
            format!("def {f}({a}, {b}):\n    {c} = {a} - {b}\n    return {c}\n"),
        ),
        4 => (
            "Clamp a value into the closed interval".to_string(),
            format!("def {f}({a}, {b}, {c}):\n    if {a} < {b}:\n        {d} = {b}\n    elif {a} > {c}:\n        {d} = {c}\n    else:\n        {d} = {a}\n    return {d}\n"),
        ),
        5 => (
            format!("Compute the factorial of {a} iteratively"),
            format!("def {f}({a}):\n    {b} = 1\n    while {a} > 1:\n        {b} *= {a}\n        {a} -= 1\n    return {b}\n"),
        ),
        6 => (
            format!("Count how many {a} exceed the threshold {b}"),
            format!("def {f}({a}, {b}):\n    {c} = 0\n    for {d} in {a}:\n        if {d} > {b}:\n            {c} += 1\n    return {c}\n"),
        ),
        7 => (
            "Raise a base to an integer power by repeated multiplication".to_string(),
            format!("def {f}({a}, {b}):\n    {c} = 1\n    {d} = 0\n    while {d} < {b}:\n        {c} = {c} * {a}\n        {d} += 1\n    return {c}\n"),
        ),
        8 => (
            "Evaluate a linear function at a point".to_string(),
            format!("def {f}({a}, {b}, {c}):\n    {d} = {a} * {c} + {b}\n    return {d}\n"),
        ),
        9 => (
            format!("Return the absolute difference of {a} and {b}"),
            format!("def {f}({a}, {b}):\n    if {a} > {b}:\n        {c} = {a} - {b}\n    else:\n        {c} = {b} - {a}\n    return {c}\n"),
        ),
        10 => (
            "Compute the greatest common divisor with the euclidean algorithm".to_string(),
            format!("def {f}({a}, {b}):\n    while {b} != 0:\n        {c} = {a} % {b}\n        {a} = {b}\n        {b} = {c}\n    return {a}\n"),
        ),
        11 => (
            "Sum the squares of the first n integers".to_string(),
            format!("def {f}({a}):\n    {b} = 0\n    for {c} in range({a}):\n        {b} += {c} * {c}\n    return {b}\n"),
        ),
        12 => (
            format!("Return the fibonacci number at index {a}"),
            format!("def {f}({a}):\n    {b} = 0\n    {c} = 1\n    for {d} in range({a}):\n        {e} = {b} + {c}\n        {b} = {c}\n        {c} = {e}\n    return {b}\n"),
        ),
        13 => (
            "Linearly interpolate between two endpoints".to_string(),
            format!("def {f}({a}, {b}, {c}):\n    {d} = {b} - {a}\n    {e} = {a} + {d} * {c}\n    return {e}\n"),
        ),
        14 => (
            format!("Test whether {a} is an even number"),
            format!("def {f}({a}):\n    {b} = {a} % 2\n    if {b} == 0:\n        return 1\n    return 0\n"),
        ),
        _ => (
            "Scale every element and print the running total".to_string(),
            format!("def {f}({a}, {b}):\n    {c} = 0\n    for {d} in {a}:\n        {e} = {d} * {b}\n        {c} += {e}\n        print({c})\n    return {c}\n"),
        ),
    }
}

/// `count` documented functions cycling through all templates.
pub fn function_corpus<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<CorpusRecord> {
    (0..count)
        .map(|i| {
            let (docstring, code) = templated_function(i % TEMPLATE_COUNT, rng);
            CorpusRecord { code, docstring, lang: "minilang".to_string() }
        })
        .collect()
}

/// Labeled fragment pairs: positives are two renamings of the same template,
/// negatives pair different templates. Labels alternate starting with 1.
pub fn clone_pairs<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<CloneRecord> {
    (0..count)
        .map(|i| {
            let t = rng.random_range(0..TEMPLATE_COUNT);
            let (_, a) = templated_function(t, rng);
            if i % 2 == 0 {
                let (_, b) = templated_function(t, rng);
                CloneRecord { code_a: a, code_b: b, label: 1 }
            } else {
                let other = (t + rng.random_range(1..TEMPLATE_COUNT)) % TEMPLATE_COUNT;
                let (_, b) = templated_function(other, rng);
                CloneRecord { code_a: a, code_b: b, label: 0 }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::Program;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_programs_parse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let src = random_program(&mut rng);
            Program::parse(&src).unwrap_or_else(|e| panic!("{e}\n{src}"));
        }
    }

    #[test]
    fn templates_parse() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for t in 0..TEMPLATE_COUNT {
            for _ in 0..20 {
                let (_, code) = templated_function(t, &mut rng);
                Program::parse(&code).unwrap_or_else(|e| panic!("{e}\n{code}"));
            }
        }
    }

    #[test]
    fn corpus_is_seeded() {
        let a = function_corpus(10, &mut ChaCha8Rng::seed_from_u64(3));
        let b = function_corpus(10, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }
}
