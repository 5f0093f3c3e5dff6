#![allow(dead_code)]

use fracmap::mapexpr::{parse_expr, Env};

pub enum Expect {
    /// Canonical fully parenthesised print.
    Prints(&'static str),
    /// Value at `x = 3, y = 2, t = 0.5`.
    Value(f64),
    /// Parse error at this byte offset.
    ErrorAt(usize),
}

use Expect::*;

pub const PARSER_CASES: &[(&str, Expect)] = &[
    ("1 + 2 * 3", Prints("(1.0 + (2.0 * 3.0))")),
    ("(1 + 2) * 3", Prints("((1.0 + 2.0) * 3.0)")),
    ("x - y - t", Prints("((x - y) - t)")),
    ("x / y / 2", Prints("((x / y) / 2.0)")),
    ("2 ^ 3 ^ 2", Prints("(2.0 ^ (3.0 ^ 2.0))")),
    ("-x ^ 2", Prints("(-(x ^ 2.0))")),
    ("2 ^ -1", Prints("(2.0 ^ (-1.0))")),
    ("--x", Prints("(-(-x))")),
    ("x * -y", Prints("(x * (-y))")),
    ("sin(x)^2", Prints("(sin(x) ^ 2.0)")),
    ("mod(x, 1)", Prints("mod(x, 1.0)")),
    ("sqrt(x*x + y*y)", Prints("sqrt(((x * x) + (y * y)))")),
    ("pi", Prints("pi")),
    ("1.5e3", Prints("1500.0")),
    ("  x  +  y  ", Prints("(x + y)")),
    ("1 - -1", Prints("(1.0 - (-1.0))")),
    ("sin(cos(tan(x)))", Prints("sin(cos(tan(x)))")),
    ("-2 ^ 2", Value(-4.0)),
    ("2 ^ 3 ^ 2", Value(512.0)),
    ("x - y - t", Value(0.5)),
    ("x / y / 2", Value(0.75)),
    ("mod(-1, 3)", Value(2.0)),
    ("mod(x, y)", Value(1.0)),
    ("abs(-x) + exp(log(y))", Value(5.0)),
    ("cbrt(-8) * y", Value(-4.0)),
    ("2 * pi / pi", Value(2.0)),
    ("(x + y) ^ 2 - x ^ 2", Value(16.0)),
    ("1e-1 * 10", Value(1.0)),
    ("x + * y", ErrorAt(4)),
    ("", ErrorAt(0)),
    ("(x + 1", ErrorAt(6)),
    ("x + 1)", ErrorAt(5)),
    ("foo(x)", ErrorAt(0)),
    ("z + 1", ErrorAt(0)),
    ("x $ y", ErrorAt(2)),
    ("x +", ErrorAt(3)),
    ("mod(x)", ErrorAt(0)),
    ("sin(x, y)", ErrorAt(0)),
    ("y * mod(x)", ErrorAt(4)),
    ("2 x", ErrorAt(2)),
];

pub fn check_parser_case(input: &str, expect: &Expect) -> Result<(), String> {
    let parsed = parse_expr(input);
    match (expect, parsed) {
        (Prints(want), Ok(e)) => {
            let got = e.to_string();
            if got != *want {
                return Err(format!("{input:?}: printed {got:?}, want {want:?}"));
            }
            let again =
                parse_expr(&got).map_err(|err| format!("{input:?}: reparse failed: {err}"))?;
            if again != e {
                return Err(format!("{input:?}: reparse changed the tree"));
            }
            Ok(())
        }
        (Value(want), Ok(e)) => {
            let got = e
                .eval(&Env::txy(0.5, 3.0, 2.0))
                .map_err(|err| format!("{input:?}: eval failed: {err}"))?;
            if (got - want).abs() > 1e-12 * want.abs().max(1.0) {
                return Err(format!("{input:?}: value {got}, want {want}"));
            }
            Ok(())
        }
        (ErrorAt(want), Err(err)) => {
            if err.offset != *want {
                return Err(format!(
                    "{input:?}: error at {}, want {want} ({err})",
                    err.offset
                ));
            }
            Ok(())
        }
        (ErrorAt(want), Ok(e)) => Err(format!("{input:?}: parsed as {e}, want error at {want}")),
        (_, Err(err)) => Err(format!("{input:?}: unexpected error {err}")),
    }
}

/// Points of the additive recurrence `(i/phi, i/sqrt2) mod 1`, inside `[0,1]^2`.
pub fn weyl_points(n: usize) -> Vec<fracmap::Point2> {
    let a = 0.618_033_988_749_894_9_f64;
    let b = std::f64::consts::FRAC_1_SQRT_2;
    (1..=n)
        .map(|i| {
            let i = i as f64;
            fracmap::Point2::new((i * a).fract(), (i * b).fract())
        })
        .collect()
}

/// A `fracmap ...` line from the figure section of the README.
pub struct Recipe {
    pub args: Vec<String>,
    /// The `--out`, `--out-prefix` or `--trajectory-out` value.
    pub output: String,
}

pub fn readme_recipes() -> Vec<Recipe> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../README.md");
    let text = std::fs::read_to_string(path).expect("README.md next to the workspace manifest");
    let section = text
        .split("## Figure recipes")
        .nth(1)
        .expect("README has a figure recipe section");
    section
        .lines()
        .filter_map(|l| l.strip_prefix("fracmap "))
        .map(|l| {
            let args = shlex::split(l).expect("recipe quoting");
            let output = args
                .iter()
                .position(|a| a == "--out" || a == "--out-prefix" || a == "--trajectory-out")
                .map(|i| args[i + 1].clone())
                .expect("recipe names an output");
            Recipe { args, output }
        })
        .collect()
}

/// Runs the binary in `dir` with `extra` appended; panics on a non-zero exit.
pub fn run_in(dir: &std::path::Path, args: &[String], extra: &[&str]) {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_fracmap"))
        .args(args)
        .args(extra)
        .current_dir(dir)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "{args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// File name to contents for every file in `dir`.
pub fn dir_bytes(dir: &std::path::Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}
