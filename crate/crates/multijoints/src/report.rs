//! Machine-readable run reports.
//!
//! Both renderings are byte-stable for equal inputs and seed: the CSV column
//! set is frozen as `command, seed, d, p` + the command's named value
//! columns + `pass`, and the JSON object keeps the same insertion order.
//! Wall-clock timing never enters a report body for exactly this reason.

use serde::Serialize;

use crate::rootexpr::RootExpr;

/// One run's outputs.  `values` keeps insertion order; names double as the
/// CSV value columns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Report {
    command: String,
    seed: Option<u64>,
    d: usize,
    p: Option<u64>,
    digest: String,
    values: Vec<(String, String)>,
    pass: bool,
}

impl Report {
    pub fn new(command: &str, d: usize, p: Option<u64>) -> Self {
        Report {
            command: command.into(),
            seed: None,
            d,
            p,
            digest: String::new(),
            values: Vec::new(),
            pass: true,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Digest of the canonical input text, for cross-run comparison.
    pub fn with_digest(mut self, input: &str) -> Self {
        self.digest = digest(input);
        self
    }

    pub fn push(&mut self, name: &str, value: impl ToString) {
        self.values.push((name.into(), value.to_string()));
    }

    pub fn push_root(&mut self, name: &str, value: &RootExpr) {
        let (num, den) = value.exponent();
        self.push(name, format!("({})^({num}/{den})", value.radicand()));
        self.push(&format!("{name}_f64"), value.to_f64());
    }

    pub fn set_pass(&mut self, pass: bool) {
        self.pass = pass;
    }

    pub fn pass(&self) -> bool {
        self.pass
    }

    pub fn value(&self, name: &str) -> Option<&str> {
        self.values.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_str())
    }

    pub fn to_csv(&self) -> String {
        let mut header = vec!["command".into(), "seed".into(), "d".into(), "p".into()];
        let mut row = vec![
            self.command.clone(),
            self.seed.map(|s| s.to_string()).unwrap_or_default(),
            self.d.to_string(),
            self.p.map(|p| p.to_string()).unwrap_or_default(),
        ];
        if !self.digest.is_empty() {
            header.push("digest".into());
            row.push(self.digest.clone());
        }
        for (name, value) in &self.values {
            header.push(csv_field(name));
            row.push(value.clone());
        }
        header.push("pass".into());
        row.push(self.pass.to_string());
        let row: Vec<String> = row.iter().map(|f| csv_field(f)).collect();
        format!("{}\n{}\n", header.join(","), row.join(","))
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Dto<'a> {
            command: &'a str,
            #[serde(skip_serializing_if = "Option::is_none")]
            seed: Option<u64>,
            d: usize,
            #[serde(skip_serializing_if = "Option::is_none")]
            p: Option<u64>,
            #[serde(skip_serializing_if = "str::is_empty")]
            digest: &'a str,
            values: Vec<[&'a str; 2]>,
            pass: bool,
        }
        let dto = Dto {
            command: &self.command,
            seed: self.seed,
            d: self.d,
            p: self.p,
            digest: &self.digest,
            values: self.values.iter().map(|(n, v)| [n.as_str(), v.as_str()]).collect(),
            pass: self.pass,
        };
        serde_json::to_string_pretty(&dto).expect("serializing owned data cannot fail") + "\n"
    }
}

/// RFC 4180 quoting for fields carrying separators or quotes.
fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// FNV-1a 64 over the input bytes, as fixed-width hex.
pub fn digest(text: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    fn sample() -> Report {
        let mut r = Report::new("zhang", 3, Some(7)).with_seed(42).with_digest("input");
        r.push("joints", 8u64);
        r.push("ratio", 0.816496580927726f64);
        r.set_pass(true);
        r
    }

    #[test]
    fn renderings_are_deterministic() {
        assert_eq!(sample().to_csv(), sample().to_csv());
        assert_eq!(sample().to_json(), sample().to_json());
        let csv = sample().to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("command,seed,d,p,digest,joints,ratio,pass"));
        let row = lines.next().unwrap();
        assert!(row.starts_with("zhang,42,3,7,"));
        assert!(row.ends_with(",true"));
    }

    #[test]
    fn csv_quotes_embedded_separators() {
        let mut r = Report::new("verify", 3, None);
        r.push("witness", "line sum exceeds the bound: lhs 3, rhs 2");
        r.set_pass(false);
        let csv = r.to_csv();
        assert!(csv.contains("\"line sum exceeds the bound: lhs 3, rhs 2\""));
        assert!(csv.lines().next().unwrap().ends_with("witness,pass"));
    }

    #[test]
    fn digest_is_frozen() {
        // FNV-1a 64 reference values; a change here breaks report stability.
        assert_eq!(digest(""), "cbf29ce484222325");
        assert_eq!(digest("a"), "af63dc4c8601ec8c");
        assert_ne!(digest("input"), digest("inpux"));
    }

    #[test]
    fn root_values_render_exactly_and_in_floats() {
        let mut r = Report::new("heavy-s", 3, Some(3));
        let root = RootExpr::new(BigRational::from_integer(30.into()), -1, 3).unwrap();
        r.push_root("rho_1", &root);
        assert_eq!(r.value("rho_1"), Some("(30)^(-1/3)"));
        let f: f64 = r.value("rho_1_f64").unwrap().parse().unwrap();
        assert!((f - 30f64.powf(-1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn json_shape_is_stable() {
        let j = sample().to_json();
        let v: serde_json::Value = serde_json::from_str(&j).unwrap();
        assert_eq!(v["command"], "zhang");
        assert_eq!(v["seed"], 42);
        assert_eq!(v["values"][0][0], "joints");
        assert_eq!(v["pass"], true);
        // Optional fields disappear rather than serializing null.
        let none = Report::new("joints", 3, None).to_json();
        assert!(!none.contains("seed"));
        assert!(!none.contains("\"p\""));
    }
}
