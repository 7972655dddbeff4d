//! CSV output with 17 significant digits.

/// `x` with 17 significant digits in the style of C's `%.17g`.
pub fn fmt17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..17).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (16 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn fmt17s(values: &[f64]) -> String {
    values.iter().map(|&v| fmt17(v)).collect::<Vec<_>>().join(",")
}

pub fn fmt_row(index: usize, values: &[f64]) -> String {
    format!("{index},{}", fmt17s(values))
}

#[derive(Default)]
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new() -> Self {
        Csv::default()
    }

    pub fn header(&mut self, columns: &[&str]) {
        self.row(&columns.join(","));
    }

    pub fn row(&mut self, line: &str) {
        self.text.push_str(line);
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}
