//! Human-readable rule listing for `inspect`.

use std::fmt::Write as _;

use tskicfnn::{Model, RuleParams};

/// How many mixing entries to list per rule.
const TOP_MIXING: usize = 5;

/// Shortest decimal form, dropping a trailing `.0` and rounding to 4 places.
pub fn number(v: f64) -> String {
    let rounded = (v * 1e4).round() / 1e4;
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    format!("{rounded}")
}

/// `y = a0 + a1·x1 + …` with subtraction for negative coefficients.
pub fn hyperplane(consequent: &[f64]) -> String {
    let mut out = format!("y = {}", number(consequent[0]));
    for (j, &a) in consequent.iter().enumerate().skip(1) {
        let sign = if a < 0.0 { '-' } else { '+' };
        let _ = write!(out, " {sign} {}·x{j}", number(a.abs()));
    }
    out
}

fn is_identity(rule: &RuleParams) -> bool {
    let n = rule.input_dim();
    (0..n).all(|l| (0..n).all(|j| rule.transform_at(l, j) == if l == j { 1.0 } else { 0.0 }))
}

pub fn rule_block(index: usize, rule: &RuleParams) -> String {
    let n = rule.input_dim();
    let mut out = String::new();
    let _ = writeln!(out, "Rule {}", index + 1);
    let center: Vec<String> = rule.center.iter().map(|&c| number(c)).collect();
    let _ = writeln!(out, "  center: ({})", center.join(", "));
    let _ = writeln!(out, "  shape regulator β: {}", number(rule.shape_regulator));
    let _ = writeln!(out, "  consequent: {}", hyperplane(&rule.consequent));
    if is_identity(rule) {
        let _ = writeln!(out, "  mixing: axis-aligned (Γ is the identity)");
        return out;
    }
    let mut entries: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|l| (0..n).map(move |j| (l, j)))
        .map(|(l, j)| (l, j, rule.transform_at(l, j)))
        .collect();
    entries.sort_by(|a, b| {
        b.2.abs()
            .total_cmp(&a.2.abs())
            .then((a.0, a.1).cmp(&(b.0, b.1)))
    });
    let _ = writeln!(out, "  mixing, largest |γ| (z_l ← γ[l,j]·x_j):");
    for (l, j, g) in entries.into_iter().take(TOP_MIXING) {
        let _ = writeln!(out, "    γ[{},{}] = {}", l + 1, j + 1, number(g));
    }
    out
}

pub fn model(model: &Model) -> String {
    let mut out = format!(
        "{} rules over {} inputs, {} parameters\n",
        model.n_rules(),
        model.input_dim(),
        model.parameter_count()
    );
    for (i, rule) in model.rules().iter().enumerate() {
        out.push('\n');
        out.push_str(&rule_block(i, rule));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_hyperplanes() {
        assert_eq!(hyperplane(&[1.0, 2.0]), "y = 1 + 2·x1");
        assert_eq!(hyperplane(&[-0.5, 0.25, -3.0]), "y = -0.5 + 0.25·x1 - 3·x2");
        assert_eq!(hyperplane(&[0.123456, -0.0]), "y = 0.1235 + 0·x1");
    }

    #[test]
    fn identity_mixing_is_called_out() {
        let rule = RuleParams::axis_aligned(vec![0.0, 1.0]);
        assert!(rule_block(0, &rule).contains("axis-aligned"));
        let mut mixed = rule.clone();
        mixed.transform[1] = -0.7;
        let text = rule_block(0, &mixed);
        assert!(!text.contains("axis-aligned"));
        assert!(text.lines().any(|l| l.trim() == "γ[1,1] = 1"));
        assert!(text.contains("γ[1,2] = -0.7"));
    }
}
