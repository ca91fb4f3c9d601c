//! Built-in replay corpus: one recorded response per (provider, preset).

use crate::prompt::PresetId;

pub const PROVIDERS: [&str; 3] = ["gpt-3.5", "gpt-4", "gemma-7b"];

macro_rules! row {
    ($dir:literal) => {
        [
            include_str!(concat!("../fixtures/", $dir, "/p1.txt")),
            include_str!(concat!("../fixtures/", $dir, "/p2.txt")),
            include_str!(concat!("../fixtures/", $dir, "/p3.txt")),
            include_str!(concat!("../fixtures/", $dir, "/p4.txt")),
            include_str!(concat!("../fixtures/", $dir, "/p5.txt")),
            include_str!(concat!("../fixtures/", $dir, "/p6.txt")),
            include_str!(concat!("../fixtures/", $dir, "/p7.txt")),
        ]
    };
}

const GPT35: [&str; 7] = row!("gpt-3.5");
const GPT4: [&str; 7] = row!("gpt-4");
const GEMMA: [&str; 7] = row!("gemma-7b");

/// The recorded response of `provider` to `preset`, if the corpus has one.
pub fn response(provider: &str, preset: PresetId) -> Option<&'static str> {
    let row = match provider {
        "gpt-3.5" => &GPT35,
        "gpt-4" => &GPT4,
        "gemma-7b" => &GEMMA,
        _ => return None,
    };
    Some(row[preset.number() - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_cell_is_populated() {
        for p in PROVIDERS {
            for id in PresetId::ALL {
                assert!(!response(p, id).unwrap().trim().is_empty(), "{p} {id}");
            }
        }
        assert!(response("gpt-5", PresetId::P1).is_none());
    }
}
